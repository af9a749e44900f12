//! One-dimensional couplings: the atomic quantile (north-west corner) plan and
//! the piecewise-linear monotone map between cell densities.

use serde::Serialize;

use super::{Coupling, Solver};
use crate::costs::{f_value, CostSpec};
use crate::measures::GridMeasure;
use crate::potentials::PotentialSpec;
use crate::{Error, Result};

fn ensure_1d(mu: &GridMeasure) -> Result<()> {
    if mu.dimension() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            found: mu.dimension(),
        });
    }
    Ok(())
}

/// The monotone rearrangement of the atoms of `mu` onto the atoms of `nu`.
///
/// For costs `c(x, y)` that are submodular in 1D (convex functions of `y − x`,
/// Bregman costs of convex potentials) this plan is optimal.
pub fn quantile_coupling_1d(mu: &GridMeasure, nu: &GridMeasure, cost: &CostSpec) -> Result<Coupling> {
    ensure_1d(mu)?;
    ensure_1d(nu)?;
    let (a, b) = (mu.weights(), nu.weights());
    let (n, m) = (a.len(), b.len());
    let mut entries = Vec::with_capacity(n + m);
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0], b[0]);
    while i < n && j < m {
        if ra <= 0.0 {
            i += 1;
            ra = a.get(i).copied().unwrap_or(0.0);
            continue;
        }
        if rb <= 0.0 {
            j += 1;
            rb = b.get(j).copied().unwrap_or(0.0);
            continue;
        }
        if ra <= rb {
            entries.push((i, j, ra));
            rb -= ra;
            ra = 0.0;
        } else {
            entries.push((i, j, rb));
            ra -= rb;
            rb = 0.0;
        }
    }
    let cost_value = entries
        .iter()
        .map(|&(i, j, m)| m * cost.eval(mu.point(i), nu.point(j)))
        .sum();
    let mut c = Coupling {
        rows: a.len(),
        cols: b.len(),
        entries,
        cost_value,
        solver: Solver::Monotone1d,
        duality_gap: None,
        marginal_violation: 0.0,
        iterations: 0,
    };
    c.marginal_violation = c.marginal_violation_against(a, b);
    Ok(c)
}

/// Monotone map `T = F_ν^{-1} ∘ F_μ` sampled at the source cell centers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneMap1D {
    pub points: Vec<f64>,
    pub map_values: Vec<f64>,
    /// `θ′(x_i) = T(x_i) − x_i`.
    pub displacement: Vec<f64>,
    /// `θ″(x_i) = T′(x_i) − 1` by finite differences.
    pub displacement_derivative: Vec<f64>,
    pub spacing: f64,
}

impl MonotoneMap1D {
    pub fn is_monotone(&self) -> bool {
        self.map_values.windows(2).all(|w| w[1] >= w[0])
    }
}

/// Quantile map with both CDFs interpolated linearly inside each cell.
///
/// Cumulative sums are taken from the left below the median and from the right
/// above it, so tail quantiles keep full relative precision.
pub fn monotone_map_1d(mu: &GridMeasure, nu: &GridMeasure) -> Result<MonotoneMap1D> {
    ensure_1d(mu)?;
    ensure_1d(nu)?;
    if let Some(i) = mu.weights().iter().position(|&w| !(w > 0.0)) {
        return Err(Error::Input(format!("source weight vanishes at cell {i}")));
    }
    let (a, b) = (mu.weights(), nu.weights());
    let (n, m) = (a.len(), b.len());
    let ys = nu.grid().axis_coordinates(0);
    let sy = nu.grid().spacing(0);

    let left = |w: &[f64]| {
        let mut c = Vec::with_capacity(w.len() + 1);
        let mut acc = 0.0;
        c.push(0.0);
        for x in w {
            acc += x;
            c.push(acc);
        }
        c
    };
    let right = |w: &[f64]| {
        let mut c = vec![0.0; w.len() + 1];
        for k in (0..w.len()).rev() {
            c[k] = c[k + 1] + w[k];
        }
        c
    };
    let (la, ra) = (left(a), right(a));
    let (lb, rb) = (left(b), right(b));

    let mut map_values = Vec::with_capacity(n);
    for i in 0..n {
        let lower = la[i] + 0.5 * a[i];
        let upper = ra[i + 1] + 0.5 * a[i];
        let t = if lower <= upper {
            // first cell j with lb[j + 1] > lower
            let j = lb[1..].partition_point(|&c| c <= lower).min(m - 1);
            let j = (j..m).find(|&k| b[k] > 0.0).unwrap_or(j);
            ys[j] - 0.5 * sy + sy * ((lower - lb[j]) / b[j]).clamp(0.0, 1.0)
        } else {
            // last cell j with rb[j] > upper
            let j = rb[..m].partition_point(|&c| c > upper).saturating_sub(1);
            let j = (0..=j).rev().find(|&k| b[k] > 0.0).unwrap_or(j);
            ys[j] + 0.5 * sy - sy * ((upper - rb[j + 1]) / b[j]).clamp(0.0, 1.0)
        };
        map_values.push(t);
    }

    let xs = mu.grid().axis_coordinates(0);
    let sx = mu.grid().spacing(0);
    let displacement = map_values.iter().zip(&xs).map(|(t, x)| t - x).collect();
    let displacement_derivative = (0..n)
        .map(|i| {
            let d = if i == 0 {
                (map_values[1] - map_values[0]) / sx
            } else if i + 1 == n {
                (map_values[n - 1] - map_values[n - 2]) / sx
            } else {
                (map_values[i + 1] - map_values[i - 1]) / (2.0 * sx)
            };
            d - 1.0
        })
        .collect();
    Ok(MonotoneMap1D {
        points: xs,
        map_values,
        displacement,
        displacement_derivative,
        spacing: sx,
    })
}

/// The two terms of the 1D displacement decomposition of the relative entropy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisplacementRemainder {
    /// `Σ c_V(x_i, T(x_i)) μ_i`.
    pub transport_term: f64,
    /// `Σ F(θ″(x_i)) μ_i` over interior cells.
    pub remainder_term: f64,
    /// Mass of the cells left out of the remainder sum: the two boundary cells
    /// and any flat-map cells within [`DEGENERATE_MASS_BUDGET`].
    pub excluded_mass: f64,
}

/// Source mass of cells where the sampled map is flat (typically tail cells
/// beyond the support of a truncated target) that may be left out.
pub const DEGENERATE_MASS_BUDGET: f64 = 1e-12;

pub fn displacement_remainder_1d(spec: &PotentialSpec, mu: &GridMeasure, nu: &GridMeasure) -> Result<DisplacementRemainder> {
    if spec.dimension != 1 {
        return Err(Error::Dimension {
            expected: 1,
            found: spec.dimension,
        });
    }
    let map = monotone_map_1d(mu, nu)?;
    let w = mu.weights();
    let n = w.len();
    let mut transport_term = 0.0;
    for i in 0..n {
        let (x, t) = (map.points[i], map.map_values[i]);
        let c = spec.value(&[t]) - spec.value(&[x]) - spec.gradient(&[x])[0] * (t - x);
        transport_term += w[i] * c;
    }
    let mut remainder_term = 0.0;
    let mut degenerate = None;
    let mut degenerate_mass = 0.0;
    for i in 1..n - 1 {
        let d = map.displacement_derivative[i];
        if d <= -1.0 {
            degenerate.get_or_insert((map.points[i], d));
            degenerate_mass += w[i];
            continue;
        }
        remainder_term += w[i] * f_value(d);
    }
    if let Some((x, value)) = degenerate {
        if degenerate_mass > DEGENERATE_MASS_BUDGET {
            return Err(Error::MapDegeneracy { x, value });
        }
    }
    Ok(DisplacementRemainder {
        transport_term,
        remainder_term,
        excluded_mass: w[0] + w[n - 1] + degenerate_mass,
    })
}

/// `W₁` between two finitely supported measures on the line.
pub fn w1_atoms(xs: &[f64], a: &[f64], ys: &[f64], b: &[f64]) -> f64 {
    let mut events: Vec<(f64, f64)> = xs
        .iter()
        .zip(a)
        .map(|(&x, &w)| (x, w))
        .chain(ys.iter().zip(b).map(|(&y, &w)| (y, -w)))
        .collect();
    events.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut cdf_gap = 0.0;
    let mut total = 0.0;
    for k in 0..events.len() {
        cdf_gap += events[k].1;
        if k + 1 < events.len() {
            total += cdf_gap.abs() * (events[k + 1].0 - events[k].0);
        }
    }
    total
}
