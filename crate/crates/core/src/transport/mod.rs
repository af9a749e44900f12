//! Optimal transport between grid measures.
//!
//! [`solve_ot_exact`] runs a network simplex and certifies its answer with a
//! dual solution; [`solve_ot_entropic`] scales the Gibbs kernel in log domain.
//! In one dimension [`quantile_coupling_1d`] gives the monotone plan and
//! [`monotone_map_1d`] the interpolated quantile map.

mod network_simplex;
mod one_d;
mod sinkhorn;

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::costs::{cost_matrix, CostMatrix, CostSpec};
use crate::measures::GridMeasure;
use crate::{Error, Result};

pub use one_d::{
    displacement_remainder_1d, monotone_map_1d, quantile_coupling_1d, w1_atoms, DisplacementRemainder,
    MonotoneMap1D,
};

/// Largest support (after dropping empty cells) accepted by the exact solver.
pub const EXACT_SUPPORT_LIMIT: usize = 2000;
/// Tolerated gap between the two total masses.
pub const MARGINAL_TOLERANCE: f64 = 1e-9;

/// Which algorithm produced a coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Solver {
    ExactLp,
    Entropic { epsilon: f64 },
    Monotone1d,
}

/// A transport plan stored as sparse triplets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coupling {
    pub rows: usize,
    pub cols: usize,
    #[serde(skip)]
    pub entries: Vec<(usize, usize, f64)>,
    pub cost_value: f64,
    pub solver: Solver,
    pub duality_gap: Option<f64>,
    /// `Σ|row sums − a| + Σ|column sums − b|`.
    pub marginal_violation: f64,
    pub iterations: usize,
}

impl Coupling {
    pub fn row_sums(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.rows];
        for &(i, _, m) in &self.entries {
            r[i] += m;
        }
        r
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.cols];
        for &(_, j, m) in &self.entries {
            c[j] += m;
        }
        c
    }

    pub(crate) fn marginal_violation_against(&self, a: &[f64], b: &[f64]) -> f64 {
        let dev = |s: Vec<f64>, w: &[f64]| s.iter().zip(w).map(|(x, y)| (x - y).abs()).sum::<f64>();
        dev(self.row_sums(), a) + dev(self.col_sums(), b)
    }

    /// `Σ π_ij C_ij` recomputed against a cost matrix.
    pub fn recompute_cost(&self, c: &CostMatrix) -> f64 {
        self.entries.iter().map(|&(i, j, m)| m * c.get(i, j)).sum()
    }

    /// Cost of this plan under another cost function.
    pub fn cost_under(&self, cost: &CostSpec, mu: &GridMeasure, nu: &GridMeasure) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, m)| m * cost.eval(mu.point(i), nu.point(j)))
            .sum()
    }

    pub fn write_triplets_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "i,j,mass")?;
        for &(i, j, m) in &self.entries {
            writeln!(out, "{i},{j},{m}")?;
        }
        Ok(())
    }

    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("coupling metadata serializes")
    }

    /// Writes `<stem>.csv` (triplets) and `<stem>.json` (metadata) into `dir`.
    pub fn export(&self, dir: &Path, stem: &str) -> std::io::Result<(PathBuf, PathBuf)> {
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        self.write_triplets_csv(std::io::BufWriter::new(std::fs::File::create(&csv)?))?;
        std::fs::write(&json, serde_json::to_string_pretty(&self.sidecar_json())? + "\n")?;
        Ok((csv, json))
    }
}

fn support(w: &[f64]) -> Vec<usize> {
    (0..w.len()).filter(|&i| w[i] > 0.0).collect()
}

fn check_shapes(a: &[f64], b: &[f64], c: &CostMatrix) -> Result<()> {
    if c.rows() != a.len() || c.cols() != b.len() {
        return Err(Error::Input(format!(
            "cost matrix is {}x{}, marginals are {}x{}",
            c.rows(),
            c.cols(),
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Input("marginals must be finite and nonnegative".into()));
    }
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    if (sa - sb).abs() > MARGINAL_TOLERANCE || sa <= 0.0 {
        return Err(Error::Marginal(sa - sb));
    }
    Ok(())
}

/// Exact optimal coupling of `mu` and `nu` for the cost matrix `c`.
pub fn solve_ot_exact(mu: &GridMeasure, nu: &GridMeasure, c: &CostMatrix) -> Result<Coupling> {
    solve_ot_exact_weights(mu.weights(), nu.weights(), c)
}

/// [`solve_ot_exact`] on raw marginals.
pub fn solve_ot_exact_weights(a: &[f64], b: &[f64], c: &CostMatrix) -> Result<Coupling> {
    check_shapes(a, b, c)?;
    let (ia, ib) = (support(a), support(b));
    let largest = ia.len().max(ib.len());
    if largest > EXACT_SUPPORT_LIMIT {
        return Err(Error::Size {
            entries: largest,
            budget: EXACT_SUPPORT_LIMIT,
        });
    }
    let sa: Vec<f64> = ia.iter().map(|&i| a[i]).collect();
    let sb: Vec<f64> = ib.iter().map(|&j| b[j]).collect();
    let mut cost = Vec::with_capacity(sa.len() * sb.len());
    for &i in &ia {
        let row = c.row(i);
        cost.extend(ib.iter().map(|&j| row[j]));
    }
    let arcs = sa.len() * sb.len();
    let sol = network_simplex::solve(&sa, &sb, &cost, 50 * arcs + 100_000)?;

    let n2 = sb.len();
    let entries: Vec<(usize, usize, f64)> = sol.flows.iter().map(|&(i, j, m)| (ia[i], ib[j], m)).collect();
    let primal: f64 = sol.flows.iter().map(|&(i, j, m)| m * cost[i * n2 + j]).sum();
    // Tree potentials carry the artificial-arc offset; centering α keeps the
    // dual value from amplifying the rounding in Σa − Σb.
    let offset = sa.iter().zip(&sol.alpha).map(|(w, v)| w * v).sum::<f64>() / sa.iter().sum::<f64>();
    let alpha: Vec<f64> = sol.alpha.iter().map(|v| v - offset).collect();
    // tighten β to an exactly feasible dual
    let beta: Vec<f64> = (0..n2)
        .map(|j| {
            (0..sa.len())
                .map(|i| cost[i * n2 + j] - alpha[i])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let dual: f64 = sa.iter().zip(&alpha).map(|(w, v)| w * v).sum::<f64>()
        + sb.iter().zip(&beta).map(|(w, v)| w * v).sum::<f64>();
    let gap = primal - dual;
    if gap.abs() > 1e-9 * (1.0 + primal.abs()) {
        return Err(Error::Numerical(format!("duality gap {gap:e} exceeds tolerance")));
    }
    let mut out = Coupling {
        rows: a.len(),
        cols: b.len(),
        entries,
        cost_value: primal,
        solver: Solver::ExactLp,
        duality_gap: Some(gap.max(0.0)),
        marginal_violation: 0.0,
        iterations: sol.iterations,
    };
    out.marginal_violation = out.marginal_violation_against(a, b);
    Ok(out)
}

/// Entropically regularized coupling; `cost_value` is `⟨π, C⟩` without the entropy term.
pub fn solve_ot_entropic(
    mu: &GridMeasure,
    nu: &GridMeasure,
    c: &CostMatrix,
    epsilon: f64,
    max_iter: usize,
) -> Result<Coupling> {
    solve_ot_entropic_weights(mu.weights(), nu.weights(), c, epsilon, max_iter)
}

pub fn solve_ot_entropic_weights(a: &[f64], b: &[f64], c: &CostMatrix, epsilon: f64, max_iter: usize) -> Result<Coupling> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Domain(format!("entropic regularization must be positive, got {epsilon}")));
    }
    check_shapes(a, b, c)?;
    let (ia, ib) = (support(a), support(b));
    let sa: Vec<f64> = ia.iter().map(|&i| a[i]).collect();
    let sb: Vec<f64> = ib.iter().map(|&j| b[j]).collect();
    let mut cost = Vec::with_capacity(sa.len() * sb.len());
    for &i in &ia {
        let row = c.row(i);
        cost.extend(ib.iter().map(|&j| row[j]));
    }
    let scaled = sinkhorn::scale(&sa, &sb, &cost, epsilon, max_iter, 1e-9)?;
    let n2 = sb.len();
    let mut entries = Vec::new();
    let mut value = 0.0;
    for (k, &m) in scaled.plan.iter().enumerate() {
        if m > 0.0 {
            let (i, j) = (k / n2, k % n2);
            entries.push((ia[i], ib[j], m));
            value += m * cost[k];
        }
    }
    let mut out = Coupling {
        rows: a.len(),
        cols: b.len(),
        entries,
        cost_value: value,
        solver: Solver::Entropic { epsilon },
        duality_gap: None,
        marginal_violation: scaled.residual,
        iterations: scaled.iterations,
    };
    out.marginal_violation = out.marginal_violation_against(a, b);
    Ok(out)
}

/// Transport metric for [`wasserstein`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `W₁` with the Euclidean distance.
    P1,
    /// `W₂` with the Euclidean distance.
    P2,
    /// `W₁` with the `ℓ¹` distance, written `W_{1,1}`.
    L1,
}

/// `W₁`, `W₂` or `W_{1,1}`: quantile coupling in 1D, network simplex otherwise.
pub fn wasserstein(mu: &GridMeasure, nu: &GridMeasure, metric: Metric) -> Result<f64> {
    if mu.dimension() != nu.dimension() {
        return Err(Error::Dimension {
            expected: mu.dimension(),
            found: nu.dimension(),
        });
    }
    let (cost, p) = match metric {
        Metric::P1 => (CostSpec::EuclideanPower { p: 1.0 }, 1.0),
        Metric::P2 => (CostSpec::EuclideanPower { p: 2.0 }, 2.0),
        Metric::L1 => (CostSpec::L1, 1.0),
    };
    let value = if mu.dimension() == 1 {
        quantile_coupling_1d(mu, nu, &cost)?.cost_value
    } else {
        solve_ot_exact(mu, nu, &cost_matrix(&cost, mu, nu)?)?.cost_value
    };
    Ok(value.max(0.0).powf(1.0 / p))
}

/// `𝒲_c(μ, ν)`: the monotone plan for submodular costs on the line, the network simplex otherwise.
pub fn transport_cost(mu: &GridMeasure, nu: &GridMeasure, cost: &CostSpec) -> Result<f64> {
    if mu.dimension() == 1 && nu.dimension() == 1 && cost.is_submodular_1d() {
        return Ok(quantile_coupling_1d(mu, nu, cost)?.cost_value);
    }
    Ok(solve_ot_exact(mu, nu, &cost_matrix(cost, mu, nu)?)?.cost_value)
}

#[cfg(test)]
mod tests;
