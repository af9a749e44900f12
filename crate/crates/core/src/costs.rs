//! Transport costs and the scalar functions `F(t) = t − log(1+t)` and `N(t) = min(t², t)`.

use rayon::prelude::*;

use crate::measures::{GridFunction, GridMeasure};
use crate::potentials::PotentialSpec;
use crate::{Error, Result};

/// Dense cost matrices above this many entries are refused.
pub const COST_MATRIX_BUDGET: usize = 40_000_000;

/// `F(t) = t − log(1+t)` without domain checking (`+∞` for `t ≤ −1`).
pub fn f_value(t: f64) -> f64 {
    if t <= -1.0 {
        return f64::INFINITY;
    }
    if t.abs() < 1e-2 {
        // alternating series t²/2 − t³/3 + ...
        let mut term = t * t;
        let mut sum = 0.0;
        for k in 2..12 {
            sum += term / k as f64 * if k % 2 == 0 { 1.0 } else { -1.0 };
            term *= t;
        }
        return sum;
    }
    t - t.ln_1p()
}

/// `F(t) = t − log(1+t)` for `t > −1`.
pub fn f_remainder(t: f64) -> Result<f64> {
    if !(t > -1.0) || t.is_nan() {
        return Err(Error::Domain(format!("F(t) needs t > -1, got {t}")));
    }
    Ok(f_value(t))
}

/// `F′(t) = t / (1+t)`.
pub fn f_remainder_derivative(t: f64) -> Result<f64> {
    if !(t > -1.0) {
        return Err(Error::Domain(format!("F'(t) needs t > -1, got {t}")));
    }
    Ok(t / (1.0 + t))
}

/// `N(t) = min(t², t)` for `t ≥ 0`.
pub fn capped_quadratic(t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("N(t) needs t >= 0, got {t}")));
    }
    Ok(t.min(t * t))
}

fn n_value(t: f64) -> f64 {
    t.min(t * t)
}

/// `c_V(x, y) = V(y) − V(x) − ∇V(x)·(y − x)`.
pub fn bregman_cost(spec: &PotentialSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    let (vx, vy) = (spec.value(x), spec.value(y));
    let gx = spec.gradient(x);
    let c = vy - vx - dot_diff(&gx, y, x);
    if !c.is_finite() {
        return Err(Error::Oracle {
            oracle: "value",
            x: x.to_vec(),
        });
    }
    Ok(c)
}

fn dot_diff(g: &[f64], y: &[f64], x: &[f64]) -> f64 {
    g.iter().zip(y.iter().zip(x)).map(|(g, (y, x))| g * (y - x)).sum()
}

fn euclid(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// A cost function `c(x, y)`.
#[derive(Debug, Clone)]
pub enum CostSpec {
    /// `c_V`.
    Bregman(PotentialSpec),
    /// `N(h|y − x|)`.
    CappedQuadratic { scale: f64 },
    /// `c_V + weight · N(scale |y − x|)`.
    Combined {
        potential: PotentialSpec,
        scale: f64,
        weight: f64,
    },
    /// `λ|x − y|²/2`.
    Quadratic { lambda: f64 },
    /// `‖x − y‖₁`.
    L1,
    /// `|x − y|^p`.
    EuclideanPower { p: f64 },
    /// `F(|x − y|)`.
    RemainderOfDistance,
    /// Pointwise sum of costs.
    Sum(Vec<CostSpec>),
}

impl CostSpec {
    pub fn name(&self) -> String {
        match self {
            CostSpec::Bregman(v) => format!("bregman({})", v.name),
            CostSpec::CappedQuadratic { scale } => format!("capped_quadratic(h={scale})"),
            CostSpec::Combined {
                potential,
                scale,
                weight,
            } => format!("combined({}, h={scale}, c={weight})", potential.name),
            CostSpec::Quadratic { lambda } => format!("quadratic({lambda})"),
            CostSpec::L1 => "l1".into(),
            CostSpec::EuclideanPower { p } => format!("euclidean_p({p})"),
            CostSpec::RemainderOfDistance => "F(|x-y|)".into(),
            CostSpec::Sum(parts) => parts.iter().map(|c| c.name()).collect::<Vec<_>>().join(" + "),
        }
    }

    /// Evaluates `c(x, y)` directly through the oracles.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            CostSpec::Bregman(v) => v.value(y) - v.value(x) - dot_diff(&v.gradient(x), y, x),
            CostSpec::CappedQuadratic { scale } => n_value(scale * euclid(x, y)),
            CostSpec::Combined {
                potential,
                scale,
                weight,
            } => {
                CostSpec::Bregman(potential.clone()).eval(x, y) + weight * n_value(scale * euclid(x, y))
            }
            CostSpec::Quadratic { lambda } => 0.5 * lambda * euclid(x, y).powi(2),
            CostSpec::L1 => x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum(),
            CostSpec::EuclideanPower { p } => euclid(x, y).powf(*p),
            CostSpec::RemainderOfDistance => f_value(euclid(x, y)),
            CostSpec::Sum(parts) => parts.iter().map(|c| c.eval(x, y)).sum(),
        }
    }

    /// Whether `c` is submodular on the line, so that the monotone plan is optimal in 1D.
    pub fn is_submodular_1d(&self) -> bool {
        match self {
            CostSpec::Bregman(v) => v.declared_convex,
            CostSpec::Quadratic { lambda } => *lambda >= 0.0,
            CostSpec::EuclideanPower { p } => *p >= 1.0,
            CostSpec::L1 | CostSpec::RemainderOfDistance => true,
            CostSpec::CappedQuadratic { .. } | CostSpec::Combined { .. } => false,
            CostSpec::Sum(parts) => parts.iter().all(|c| c.is_submodular_1d()),
        }
    }
}

/// Cost evaluator with per-point potential data cached.
struct Evaluator<'a> {
    cost: &'a CostSpec,
    d: usize,
    // V(x_i), ∇V(x_i) on the source and V(y_j) on the target, for Bregman parts
    vx: Vec<f64>,
    gx: Vec<f64>,
    vy: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    fn new(cost: &'a CostSpec, src: &[f64], tgt: &[f64], d: usize) -> Result<Self> {
        let potential = match cost {
            CostSpec::Bregman(v) => Some(v),
            CostSpec::Combined { potential, .. } => Some(potential),
            _ => None,
        };
        let mut e = Evaluator {
            cost,
            d,
            vx: vec![],
            gx: vec![],
            vy: vec![],
        };
        if let Some(v) = potential {
            if v.dimension != d {
                return Err(Error::Dimension {
                    expected: v.dimension,
                    found: d,
                });
            }
            for x in src.chunks(d) {
                let (val, g) = (v.value(x), v.gradient(x));
                if !val.is_finite() || g.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Oracle {
                        oracle: "value/gradient",
                        x: x.to_vec(),
                    });
                }
                e.vx.push(val);
                e.gx.extend(g);
            }
            for y in tgt.chunks(d) {
                let val = v.value(y);
                if !val.is_finite() {
                    return Err(Error::Oracle {
                        oracle: "value",
                        x: y.to_vec(),
                    });
                }
                e.vy.push(val);
            }
        }
        Ok(e)
    }

    fn eval(&self, i: usize, x: &[f64], j: usize, y: &[f64]) -> f64 {
        let d = self.d;
        let bregman = |e: &Self| e.vy[j] - e.vx[i] - dot_diff(&e.gx[i * d..(i + 1) * d], y, x);
        match self.cost {
            CostSpec::Bregman(_) => bregman(self),
            CostSpec::Combined { scale, weight, .. } => {
                bregman(self) + weight * n_value(scale * euclid(x, y))
            }
            other => other.eval(x, y),
        }
    }
}

/// Dense cost matrix between two grid measures, row-major (source × target).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    pub cost_name: String,
}

impl CostMatrix {
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Input("cost matrix shape mismatch".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("cost matrix has non-finite entries".into()));
        }
        Ok(Self {
            rows,
            cols,
            values,
            cost_name: "explicit".into(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entrywise `self + w · other`.
    pub fn add_scaled(&self, other: &CostMatrix, w: f64) -> Result<CostMatrix> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::Input("cost matrix shape mismatch".into()));
        }
        Ok(CostMatrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + w * b).collect(),
            cost_name: format!("{} + {w}·{}", self.cost_name, other.cost_name),
        })
    }
}

/// Evaluates `cost` on every (source point, target point) pair.
pub fn cost_matrix(cost: &CostSpec, source: &GridMeasure, target: &GridMeasure) -> Result<CostMatrix> {
    cost_matrix_on_points(cost, source.points_flat(), target.points_flat(), source.dimension())
}

/// Same as [`cost_matrix`] on raw flattened point lists.
pub fn cost_matrix_on_points(cost: &CostSpec, src: &[f64], tgt: &[f64], d: usize) -> Result<CostMatrix> {
    let (rows, cols) = (src.len() / d, tgt.len() / d);
    let entries = rows.saturating_mul(cols);
    if entries > COST_MATRIX_BUDGET {
        return Err(Error::Size {
            entries,
            budget: COST_MATRIX_BUDGET,
        });
    }
    let ev = Evaluator::new(cost, src, tgt, d)?;
    let mut values = vec![0.0; entries];
    values
        .par_chunks_mut(cols.max(1))
        .enumerate()
        .for_each(|(i, row)| {
            let x = &src[i * d..(i + 1) * d];
            for (j, out) in row.iter_mut().enumerate() {
                *out = ev.eval(i, x, j, &tgt[j * d..(j + 1) * d]);
            }
        });
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "cost {} is not finite at pair ({}, {})",
            cost.name(),
            k / cols,
            k % cols
        )));
    }
    Ok(CostMatrix {
        rows,
        cols,
        values,
        cost_name: cost.name(),
    })
}

/// `Q_c(g)(y_j) = min_i (g_i + c(x_i, y_j))`, exhaustive over the grid of `mu`.
///
/// Costs are evaluated on the fly, so no dense matrix is ever allocated.
pub fn inf_convolution(g: &GridFunction, cost: &CostSpec, mu: &GridMeasure) -> Result<GridFunction> {
    g.ensure_grid(mu.grid())?;
    if let Some(v) = g.values().iter().find(|v| !v.is_finite()) {
        return Err(Error::Input(format!("g is not finite on the grid ({v})")));
    }
    let d = mu.dimension();
    let pts = mu.points_flat();
    let ev = Evaluator::new(cost, pts, pts, d)?;
    let n = mu.len();
    let gv = g.values();
    let q: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let y = &pts[j * d..(j + 1) * d];
            (0..n)
                .map(|i| gv[i] + ev.eval(i, &pts[i * d..(i + 1) * d], j, y))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    GridFunction::from_values(mu.grid(), q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{discretize, BoxDomain, Grid};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn scalar_examples() {
        assert_eq!(f_remainder(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(f_remainder(1.0).unwrap(), 0.306853, epsilon = 1e-6);
        assert_abs_diff_eq!(f_remainder(-0.5).unwrap(), 0.193147, epsilon = 1e-6);
        assert!(matches!(f_remainder(-1.0), Err(Error::Domain(_))));
        assert_eq!(capped_quadratic(0.5).unwrap(), 0.25);
        assert_eq!(capped_quadratic(2.0).unwrap(), 2.0);
        assert_eq!(capped_quadratic(1.0).unwrap(), 1.0);
        assert!(matches!(capped_quadratic(-0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn series_branch_matches_direct_formula() {
        for &t in &[-9.9e-3, -1e-3, 1e-4, 5e-3, 9.99e-3] {
            let direct = t - f64::ln_1p(t);
            assert!((f_value(t) - direct).abs() <= 1e-12 * direct.abs().max(1e-300) + 1e-18);
        }
        // continuity across the branch switch
        let (a, b) = (f_value(0.01 - 1e-12), f_value(0.01 + 1e-12));
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn bregman_examples() {
        let g = PotentialSpec::gaussian(1);
        assert_abs_diff_eq!(bregman_cost(&g, &[1.0], &[3.0]).unwrap(), 2.0, epsilon = 1e-15);
        let q = PotentialSpec::quadratic_plus_quartic(0.0, 1.0, 1).unwrap();
        assert_abs_diff_eq!(bregman_cost(&q, &[1.0], &[2.0]).unwrap(), 2.75, epsilon = 1e-15);
        assert_eq!(bregman_cost(&q, &[0.7], &[0.7]).unwrap(), 0.0);
    }

    fn small_grid() -> GridMeasure {
        let grid = Grid::new(&BoxDomain::symmetric(1.5, 1), 3).unwrap();
        GridMeasure::from_weights(grid, vec![1.0; 3], "synthetic").unwrap()
    }

    #[test]
    fn cost_matrix_examples() {
        let m = small_grid();
        let q = cost_matrix(&CostSpec::Quadratic { lambda: 1.0 }, &m, &m).unwrap();
        for i in 0..3 {
            assert_eq!(q.get(i, i), 0.0);
            for j in 0..3 {
                assert_eq!(q.get(i, j), q.get(j, i));
            }
        }
        let gamma = discretize(&PotentialSpec::gaussian(1), &BoxDomain::symmetric(8.0, 1), 64).unwrap();
        let qb = cost_matrix(&CostSpec::Quadratic { lambda: 1.0 }, &gamma, &gamma).unwrap();
        let br = cost_matrix(&CostSpec::Bregman(PotentialSpec::gaussian(1)), &gamma, &gamma).unwrap();
        for (a, b) in qb.values().iter().zip(br.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
        let v = PotentialSpec::quadratic_plus_quartic(1.0, 1.0, 1).unwrap();
        let comb = cost_matrix(
            &CostSpec::Combined {
                potential: v.clone(),
                scale: 0.7,
                weight: 0.05,
            },
            &gamma,
            &gamma,
        )
        .unwrap();
        let b = cost_matrix(&CostSpec::Bregman(v), &gamma, &gamma).unwrap();
        let n = cost_matrix(&CostSpec::CappedQuadratic { scale: 0.7 }, &gamma, &gamma).unwrap();
        let sum = b.add_scaled(&n, 0.05).unwrap();
        for (a, b) in comb.values().iter().zip(sum.values()) {
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn cost_matrix_refuses_oversized_problems() {
        let grid = Grid::new(&BoxDomain::symmetric(1.0, 2), 80).unwrap();
        let m = GridMeasure::from_weights(grid.clone(), vec![1.0; grid.len()], "synthetic").unwrap();
        assert!(matches!(
            cost_matrix(&CostSpec::L1, &m, &m),
            Err(Error::Size { .. })
        ));
    }

    #[test]
    fn inf_convolution_examples() {
        let gamma = discretize(&PotentialSpec::gaussian(1), &BoxDomain::symmetric(8.0, 1), 512).unwrap();
        let cost = CostSpec::Bregman(PotentialSpec::gaussian(1));
        let zero = GridFunction::from_fn(gamma.grid(), |_| 0.0);
        assert!(inf_convolution(&zero, &cost, &gamma).unwrap().values().iter().all(|&q| q == 0.0));
        let k = GridFunction::from_fn(gamma.grid(), |_| 2.5);
        assert!(inf_convolution(&k, &cost, &gamma).unwrap().values().iter().all(|&q| q == 2.5));

        let lin = GridFunction::from_fn(gamma.grid(), |x| x[0]);
        let q = inf_convolution(&lin, &cost, &gamma).unwrap();
        let xs = gamma.grid().axis_coordinates(0);
        for (j, &y) in xs.iter().enumerate() {
            // discrete oracle: minimize over the grid points directly
            let oracle = xs.iter().map(|&x| x + 0.5 * (y - x).powi(2)).fold(f64::INFINITY, f64::min);
            assert_eq!(q.values()[j], oracle);
            if y.abs() < 6.0 {
                let h = gamma.grid().spacing(0);
                assert!((q.values()[j] - (y - 0.5)).abs() <= h * h);
            }
        }
        for (qj, gj) in q.values().iter().zip(lin.values()) {
            assert!(qj <= gj);
        }
    }

    #[test]
    fn sandwich_and_doubling_on_a_grid() {
        for k in 0..=10_000 {
            let s = k as f64 / 100.0;
            let (f, n) = (f_value(s), n_value(s));
            assert!(0.25 * n <= f + 1e-12 && f <= n + 1e-12, "s = {s}");
            assert!(f_value(2.0 * s) <= 4.0 * f + 1e-12, "s = {s}");
            let fp = f_remainder_derivative(s).unwrap();
            assert!(fp * fp <= 4.0 * f + 1e-12, "s = {s}");
        }
    }

    #[test]
    fn derivative_closed_form_matches_finite_differences() {
        let g = |s: f64| 4.0 * f_value(s) - (s / (1.0 + s)).powi(2);
        for k in 1..200 {
            let s = k as f64 * 0.05;
            let h = 1e-5;
            let fd = (g(s + h) - g(s - h)) / (2.0 * h);
            let closed = 2.0 * s * (1.0 + 4.0 * s + 2.0 * s * s) / (1.0 + s).powi(3);
            assert!((fd - closed).abs() <= 1e-6 * (1.0 + closed), "s = {s}");
        }
    }

    proptest! {
        #[test]
        fn power_commutation(s in 0.0f64..100.0) {
            let r = f_value(s).sqrt();
            prop_assert!(f_value(s.sqrt()) <= r + 1e-12);
            prop_assert!(r <= 2.0 * f_value(s.sqrt()) + 1e-12);
        }

        #[test]
        fn superadditivity(s in proptest::collection::vec(0.0f64..20.0, 1..16)) {
            let lhs: f64 = s.iter().map(|&v| f_value(v)).sum();
            let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(lhs >= 0.25 * f_value(norm) - 1e-12);
        }

        #[test]
        fn f_of_t_dominates_f_of_abs_t(t in -0.999f64..0.0) {
            prop_assert!(f_value(t) >= f_value(t.abs()));
        }

        #[test]
        fn bregman_nonnegative_for_convex_potentials(x in -4.0f64..4.0, y in -4.0f64..4.0) {
            let v = PotentialSpec::quadratic_plus_quartic(1.0, 1.0, 1).unwrap();
            prop_assert!(bregman_cost(&v, &[x], &[y]).unwrap() >= -1e-9);
        }
    }
}
