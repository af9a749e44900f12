//! Potentials `V` with closed-form value, gradient and Hessian oracles.
//!
//! Every potential is C² so that all downstream checks can use `D²V`. The
//! builtin families cover the Gaussian, the log-concave quartic
//! `a|x|²/2 + b|x|⁴/4`, even powers `|x|^p / p`, bounded cosine perturbations of
//! any family (possibly non-convex) and affine push-forwards `V ∘ φ⁻¹`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::measures::{BoxDomain, Grid};
use crate::{Error, Result};

/// Tail budget shared by every truncated domain.
pub const TRUNCATION_BUDGET: f64 = 1e-8;

/// Builtin potential families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// `V(x) = xᵀ Σ⁻¹ x / 2`.
    Gaussian { covariance: Vec<Vec<f64>> },
    /// `V(x) = a|x|²/2 + b|x|⁴/4`.
    QuadraticPlusQuartic { a: f64, b: f64 },
    /// `V(x) = |x|^p / p`.
    EvenPower { p: f64 },
    /// `V(x) = base(x) + amplitude · Σ_k cos(frequency · x_k)`.
    Perturbed {
        base: Box<Family>,
        amplitude: f64,
        frequency: f64,
    },
    /// `V(x) = base(A⁻¹(x − offset))`.
    Affine {
        base: Box<Family>,
        linear: Vec<Vec<f64>>,
        offset: Vec<f64>,
    },
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Precomputed data for evaluating a [`Family`] quickly.
#[derive(Debug, Clone)]
enum Kernel {
    Gaussian {
        precision: DMatrix<f64>,
    },
    QuadraticPlusQuartic {
        a: f64,
        b: f64,
    },
    EvenPower {
        p: f64,
    },
    Perturbed {
        base: Box<Kernel>,
        amplitude: f64,
        frequency: f64,
    },
    Affine {
        base: Box<Kernel>,
        inverse: DMatrix<f64>,
        offset: DVector<f64>,
    },
}

impl Kernel {
    fn build(family: &Family, dimension: usize) -> Result<Self> {
        Ok(match family {
            Family::Gaussian { covariance } => {
                let cov = to_matrix(covariance);
                if cov.nrows() != dimension || covariance.iter().any(|r| r.len() != dimension) {
                    return Err(Error::Input(format!(
                        "covariance must be {dimension}x{dimension}"
                    )));
                }
                let precision = cov.clone().cholesky().map(|c| c.inverse()).ok_or_else(|| {
                    Error::Input("covariance must be symmetric positive definite".into())
                })?;
                Kernel::Gaussian { precision }
            }
            Family::QuadraticPlusQuartic { a, b } => {
                if *a < 0.0 || *b < 0.0 || (*a == 0.0 && *b == 0.0) {
                    return Err(Error::Input(
                        "quadratic_plus_quartic needs a, b >= 0, not both zero".into(),
                    ));
                }
                Kernel::QuadraticPlusQuartic { a: *a, b: *b }
            }
            Family::EvenPower { p } => {
                if !(*p >= 2.0) {
                    return Err(Error::Input(format!("even_power needs p >= 2, got {p}")));
                }
                Kernel::EvenPower { p: *p }
            }
            Family::Perturbed {
                base,
                amplitude,
                frequency,
            } => {
                if !amplitude.is_finite() || !frequency.is_finite() {
                    return Err(Error::Input("perturbation parameters must be finite".into()));
                }
                Kernel::Perturbed {
                    base: Box::new(Kernel::build(base, dimension)?),
                    amplitude: *amplitude,
                    frequency: *frequency,
                }
            }
            Family::Affine {
                base,
                linear,
                offset,
            } => {
                let a = to_matrix(linear);
                if a.nrows() != dimension
                    || linear.iter().any(|r| r.len() != dimension)
                    || offset.len() != dimension
                {
                    return Err(Error::Input(format!(
                        "affine map must act on dimension {dimension}"
                    )));
                }
                let inverse = a
                    .try_inverse()
                    .ok_or_else(|| Error::Input("affine map is not invertible".into()))?;
                Kernel::Affine {
                    base: Box::new(Kernel::build(base, dimension)?),
                    inverse,
                    offset: DVector::from_column_slice(offset),
                }
            }
        })
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Kernel::Gaussian { precision } => {
                let v = DVector::from_column_slice(x);
                0.5 * v.dot(&(precision * &v))
            }
            Kernel::QuadraticPlusQuartic { a, b } => {
                let r2: f64 = x.iter().map(|t| t * t).sum();
                0.5 * a * r2 + 0.25 * b * r2 * r2
            }
            Kernel::EvenPower { p } => {
                let r: f64 = x.iter().map(|t| t * t).sum::<f64>().sqrt();
                r.powf(*p) / p
            }
            Kernel::Perturbed {
                base,
                amplitude,
                frequency,
            } => {
                base.value(x)
                    + amplitude * x.iter().map(|t| (frequency * t).cos()).sum::<f64>()
            }
            Kernel::Affine {
                base,
                inverse,
                offset,
            } => {
                let y = inverse * (DVector::from_column_slice(x) - offset);
                base.value(y.as_slice())
            }
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Kernel::Gaussian { precision } => {
                let v = DVector::from_column_slice(x);
                (precision * v).as_slice().to_vec()
            }
            Kernel::QuadraticPlusQuartic { a, b } => {
                let r2: f64 = x.iter().map(|t| t * t).sum();
                x.iter().map(|t| (a + b * r2) * t).collect()
            }
            Kernel::EvenPower { p } => {
                let r: f64 = x.iter().map(|t| t * t).sum::<f64>().sqrt();
                if r == 0.0 {
                    return vec![0.0; x.len()];
                }
                let scale = r.powf(p - 2.0);
                x.iter().map(|t| scale * t).collect()
            }
            Kernel::Perturbed {
                base,
                amplitude,
                frequency,
            } => {
                let mut g = base.gradient(x);
                for (gk, t) in g.iter_mut().zip(x) {
                    *gk -= amplitude * frequency * (frequency * t).sin();
                }
                g
            }
            Kernel::Affine {
                base,
                inverse,
                offset,
            } => {
                let y = inverse * (DVector::from_column_slice(x) - offset);
                let g = DVector::from_vec(base.gradient(y.as_slice()));
                (inverse.transpose() * g).as_slice().to_vec()
            }
        }
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        match self {
            Kernel::Gaussian { precision } => precision.clone(),
            Kernel::QuadraticPlusQuartic { a, b } => {
                let r2: f64 = x.iter().map(|t| t * t).sum();
                DMatrix::from_fn(n, n, |i, j| {
                    let diag = if i == j { a + b * r2 } else { 0.0 };
                    diag + 2.0 * b * x[i] * x[j]
                })
            }
            Kernel::EvenPower { p } => {
                let r: f64 = x.iter().map(|t| t * t).sum::<f64>().sqrt();
                if r == 0.0 {
                    let d = if *p == 2.0 { 1.0 } else { 0.0 };
                    return DMatrix::from_diagonal_element(n, n, d);
                }
                let iso = r.powf(p - 2.0);
                let radial = (p - 2.0) * r.powf(p - 4.0);
                DMatrix::from_fn(n, n, |i, j| {
                    let diag = if i == j { iso } else { 0.0 };
                    diag + radial * x[i] * x[j]
                })
            }
            Kernel::Perturbed {
                base,
                amplitude,
                frequency,
            } => {
                let mut h = base.hessian(x);
                for (k, t) in x.iter().enumerate() {
                    h[(k, k)] -= amplitude * frequency * frequency * (frequency * t).cos();
                }
                h
            }
            Kernel::Affine {
                base,
                inverse,
                offset,
            } => {
                let y = inverse * (DVector::from_column_slice(x) - offset);
                let h = base.hessian(y.as_slice());
                let out = inverse.transpose() * h * inverse;
                // exact symmetrization of the product
                (&out + out.transpose()) * 0.5
            }
        }
    }
}

/// A potential `V` together with its declared convexity metadata.
#[derive(Debug, Clone)]
pub struct PotentialSpec {
    pub name: String,
    pub dimension: usize,
    pub family: Family,
    pub declared_convex: bool,
    /// `λ` such that `D²V ≥ λ·Id` everywhere, when known.
    pub curvature_lower_bound: Option<f64>,
    kernel: Kernel,
}

/// Lower curvature bound and convexity implied by a family, when derivable in closed form.
fn family_curvature(family: &Family) -> Result<(bool, Option<f64>)> {
    Ok(match family {
        Family::Gaussian { covariance } => {
            let cov = to_matrix(covariance);
            let eig = cov.symmetric_eigen();
            let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
            (true, Some(1.0 / max))
        }
        Family::QuadraticPlusQuartic { a, .. } => (true, (*a > 0.0).then_some(*a)),
        Family::EvenPower { p } => (true, (*p == 2.0).then_some(1.0)),
        Family::Perturbed {
            base,
            amplitude,
            frequency,
        } => {
            let (_, base_lambda) = family_curvature(base)?;
            let loss = amplitude.abs() * frequency * frequency;
            match base_lambda {
                Some(l) if l - loss > 0.0 => (true, Some(l - loss)),
                Some(l) if l - loss == 0.0 => (true, None),
                _ if loss == 0.0 => family_curvature(base)?,
                _ => (false, None),
            }
        }
        Family::Affine { base, linear, .. } => {
            let (convex, lambda) = family_curvature(base)?;
            let a = to_matrix(linear);
            let svd = a.svd(false, false);
            let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            (convex, lambda.map(|l| l / (smax * smax)))
        }
    })
}

impl PotentialSpec {
    /// Builds a potential from a family, deriving convexity and curvature metadata.
    pub fn new(name: impl Into<String>, dimension: usize, family: Family) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Input("dimension must be positive".into()));
        }
        let kernel = Kernel::build(&family, dimension)?;
        let (declared_convex, curvature_lower_bound) = family_curvature(&family)?;
        Ok(Self {
            name: name.into(),
            dimension,
            family,
            declared_convex,
            curvature_lower_bound,
            kernel,
        })
    }

    /// Standard Gaussian `V = |x|²/2`.
    pub fn gaussian(dimension: usize) -> Self {
        Self::gaussian_with_covariance(DMatrix::identity(dimension, dimension))
            .expect("identity covariance is valid")
    }

    /// Centered Gaussian with covariance `Σ`.
    pub fn gaussian_with_covariance(covariance: DMatrix<f64>) -> Result<Self> {
        let n = covariance.nrows();
        let name = if covariance == DMatrix::identity(n, n) {
            format!("gaussian{n}d")
        } else {
            format!("gaussian{n}d_cov")
        };
        Self::new(
            name,
            n,
            Family::Gaussian {
                covariance: from_matrix(&covariance),
            },
        )
    }

    /// `V(x) = a|x|²/2 + b|x|⁴/4`.
    pub fn quadratic_plus_quartic(a: f64, b: f64, dimension: usize) -> Result<Self> {
        Self::new(
            format!("quadratic_plus_quartic(a={a},b={b})"),
            dimension,
            Family::QuadraticPlusQuartic { a, b },
        )
    }

    /// `V(x) = |x|^p / p`.
    pub fn even_power(p: f64, dimension: usize) -> Result<Self> {
        Self::new(format!("even_power(p={p})"), dimension, Family::EvenPower { p })
    }

    /// Adds the bounded perturbation `amplitude · Σ cos(frequency · x_k)` to `base`.
    pub fn perturbed(base: &PotentialSpec, amplitude: f64, frequency: f64) -> Result<Self> {
        Self::new(
            format!("{}+{amplitude}cos({frequency}x)", base.name),
            base.dimension,
            Family::Perturbed {
                base: Box::new(base.family.clone()),
                amplitude,
                frequency,
            },
        )
    }

    /// Push-forward potential `V_φ = V ∘ φ⁻¹` for the affine map `φ(x) = A x + offset`.
    pub fn affine(base: &PotentialSpec, linear: &DMatrix<f64>, offset: &[f64]) -> Result<Self> {
        Self::new(
            format!("affine({})", base.name),
            base.dimension,
            Family::Affine {
                base: Box::new(base.family.clone()),
                linear: from_matrix(linear),
                offset: offset.to_vec(),
            },
        )
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.kernel.value(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.kernel.gradient(x)
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        self.kernel.hessian(x)
    }

    /// Smallest and largest eigenvalue of `D²V(x)`.
    pub fn hessian_extremes(&self, x: &[f64]) -> (f64, f64) {
        let h = self.hessian(x);
        if h.nrows() == 1 {
            return (h[(0, 0)], h[(0, 0)]);
        }
        let eig = h.symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }
}

/// Bundled oracle outputs at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

/// Evaluates the three oracles at `x`.
pub fn evaluate(spec: &PotentialSpec, x: &[f64]) -> Result<Evaluation> {
    if x.len() != spec.dimension {
        return Err(Error::Dimension {
            expected: spec.dimension,
            found: x.len(),
        });
    }
    if x.iter().any(|t| !t.is_finite()) {
        return Err(Error::Input(format!("point {x:?} is not finite")));
    }
    let value = spec.value(x);
    if !value.is_finite() {
        return Err(Error::Oracle {
            oracle: "value",
            x: x.to_vec(),
        });
    }
    let gradient = spec.gradient(x);
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::Oracle {
            oracle: "gradient",
            x: x.to_vec(),
        });
    }
    let hessian = spec.hessian(x);
    if hessian.iter().any(|h| !h.is_finite()) {
        return Err(Error::Oracle {
            oracle: "hessian",
            x: x.to_vec(),
        });
    }
    Ok(Evaluation {
        value,
        gradient,
        hessian,
    })
}

/// Result of [`convexity_probe`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    /// `min (∇V(y) − ∇V(x))·(y − x) / |y − x|²` over the non-degenerate pairs.
    pub min_ratio: f64,
    pub pass: bool,
    pub evaluated_pairs: usize,
    pub skipped_pairs: usize,
}

/// Tests the monotonicity of `∇V` on the given pairs.
pub fn convexity_probe(spec: &PotentialSpec, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<ConvexityReport> {
    if pairs.is_empty() {
        return Err(Error::Input("convexity_probe needs at least one pair".into()));
    }
    let mut min_ratio = f64::INFINITY;
    let mut evaluated = 0;
    let mut skipped = 0;
    for (x, y) in pairs {
        let d2: f64 = x.iter().zip(y).map(|(a, b)| (b - a) * (b - a)).sum();
        if d2 == 0.0 {
            skipped += 1;
            continue;
        }
        let gx = evaluate(spec, x)?.gradient;
        let gy = evaluate(spec, y)?.gradient;
        let dot: f64 = gx
            .iter()
            .zip(&gy)
            .zip(x.iter().zip(y))
            .map(|((a, b), (p, q))| (b - a) * (q - p))
            .sum();
        min_ratio = min_ratio.min(dot / d2);
        evaluated += 1;
    }
    Ok(ConvexityReport {
        min_ratio,
        pass: min_ratio >= -1e-9,
        evaluated_pairs: evaluated,
        skipped_pairs: skipped,
    })
}

/// Midpoint-rule integrals of the integrability condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrabilityReport {
    pub mass_integral: f64,
    pub second_moment_integral: f64,
    pub gradient_square_integral: f64,
    /// Fraction of the mass carried by cells touching the domain boundary.
    pub truncation_estimate: f64,
}

/// Computes the integrability integrals without enforcing the truncation budget.
pub fn integrability_integrals(
    spec: &PotentialSpec,
    domain: &BoxDomain,
    resolution: usize,
) -> Result<IntegrabilityReport> {
    if resolution < 64 {
        return Err(Error::Input(format!(
            "integrability probe needs resolution >= 64, got {resolution}"
        )));
    }
    if domain.dimension() != spec.dimension {
        return Err(Error::Dimension {
            expected: spec.dimension,
            found: domain.dimension(),
        });
    }
    let grid = Grid::new(domain, resolution)?;
    let vol = grid.cell_volume();
    let (mut mass, mut second, mut grad2, mut boundary) = (0.0, 0.0, 0.0, 0.0);
    let mut x = vec![0.0; spec.dimension];
    for i in 0..grid.len() {
        grid.write_point(i, &mut x);
        let e = evaluate(spec, &x)?;
        let w = (-e.value).exp() * vol;
        mass += w;
        second += w * x.iter().map(|t| t * t).sum::<f64>();
        grad2 += w * e.gradient.iter().map(|t| t * t).sum::<f64>();
        if grid.is_boundary(i) {
            boundary += w;
        }
    }
    Ok(IntegrabilityReport {
        mass_integral: mass,
        second_moment_integral: second,
        gradient_square_integral: grad2,
        truncation_estimate: boundary / mass,
    })
}

/// Integrability check on a truncated box; fails when the boundary mass exceeds the budget.
pub fn integrability_probe(
    spec: &PotentialSpec,
    domain: &BoxDomain,
    resolution: usize,
) -> Result<IntegrabilityReport> {
    let report = integrability_integrals(spec, domain, resolution)?;
    if !(report.truncation_estimate <= TRUNCATION_BUDGET) {
        return Err(Error::Truncation {
            fraction: report.truncation_estimate,
            budget: TRUNCATION_BUDGET,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn builtins() -> Vec<PotentialSpec> {
        let g1 = PotentialSpec::gaussian(1);
        vec![
            g1.clone(),
            PotentialSpec::gaussian(2),
            PotentialSpec::gaussian_with_covariance(DMatrix::from_row_slice(
                2,
                2,
                &[2.0, 0.5, 0.5, 1.0],
            ))
            .unwrap(),
            PotentialSpec::quadratic_plus_quartic(1.0, 1.0, 1).unwrap(),
            PotentialSpec::quadratic_plus_quartic(0.5, 0.2, 2).unwrap(),
            PotentialSpec::even_power(4.0, 1).unwrap(),
            PotentialSpec::even_power(6.0, 2).unwrap(),
            PotentialSpec::perturbed(&g1, 2.0, 1.0).unwrap(),
            PotentialSpec::perturbed(&PotentialSpec::gaussian(2), 0.3, 1.5).unwrap(),
            PotentialSpec::affine(
                &PotentialSpec::quadratic_plus_quartic(1.0, 0.5, 2).unwrap(),
                &DMatrix::from_row_slice(2, 2, &[2.0, 0.3, -0.4, 1.0]),
                &[0.5, -1.0],
            )
            .unwrap(),
        ]
    }

    #[test]
    fn evaluate_examples() {
        let e = evaluate(&PotentialSpec::gaussian(1), &[2.0]).unwrap();
        assert_eq!((e.value, e.gradient[0], e.hessian[(0, 0)]), (2.0, 2.0, 1.0));

        let q = PotentialSpec::quadratic_plus_quartic(1.0, 1.0, 1).unwrap();
        let e = evaluate(&q, &[1.0]).unwrap();
        assert_eq!((e.value, e.gradient[0], e.hessian[(0, 0)]), (0.75, 2.0, 4.0));

        let e = evaluate(&PotentialSpec::gaussian(2), &[1.0, 1.0]).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.gradient, vec![1.0, 1.0]);
        assert_eq!(e.hessian, DMatrix::identity(2, 2));
    }

    #[test]
    fn evaluate_rejects_bad_points() {
        let g = PotentialSpec::gaussian(1);
        assert!(matches!(evaluate(&g, &[f64::NAN]), Err(Error::Input(_))));
        assert!(matches!(evaluate(&g, &[1.0, 2.0]), Err(Error::Dimension { .. })));
        let steep = PotentialSpec::even_power(400.0, 1).unwrap();
        assert!(matches!(
            evaluate(&steep, &[1e3]),
            Err(Error::Oracle { oracle: "value", .. })
        ));
    }

    #[test]
    fn evaluate_is_pure() {
        for spec in builtins() {
            let x: Vec<f64> = (0..spec.dimension).map(|k| 0.3 + k as f64).collect();
            let a = evaluate(&spec, &x).unwrap();
            let b = evaluate(&spec, &x).unwrap();
            assert_eq!(a.value.to_bits(), b.value.to_bits());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn oracles_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for spec in builtins() {
            let n = spec.dimension;
            for _ in 0..50 {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.5..2.5)).collect();
                let e = evaluate(&spec, &x).unwrap();
                let norm = x.iter().map(|t| t * t).sum::<f64>().sqrt();
                let h = 1e-4 * (1.0 + norm);
                for k in 0..n {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += h;
                    xm[k] -= h;
                    let fd = (spec.value(&xp) - spec.value(&xm)) / (2.0 * h);
                    let scale = e.gradient[k].abs().max(1.0);
                    assert!(
                        (fd - e.gradient[k]).abs() <= 1e-5 * scale,
                        "{}: gradient fd {fd} vs {}",
                        spec.name,
                        e.gradient[k]
                    );
                    let gp = spec.gradient(&xp);
                    let gm = spec.gradient(&xm);
                    for j in 0..n {
                        let fd = (gp[j] - gm[j]) / (2.0 * h);
                        let scale = e.hessian[(j, k)].abs().max(1.0);
                        assert!(
                            (fd - e.hessian[(j, k)]).abs() <= 1e-5 * scale,
                            "{}: hessian fd {fd} vs {}",
                            spec.name,
                            e.hessian[(j, k)]
                        );
                    }
                }
                let asym = (&e.hessian - e.hessian.transpose()).amax();
                assert!(asym <= 1e-12);
            }
        }
    }

    #[test]
    fn declared_curvature_bounds_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for spec in builtins() {
            if let Some(lambda) = spec.curvature_lower_bound {
                for _ in 0..200 {
                    let x: Vec<f64> = (0..spec.dimension)
                        .map(|_| rng.random_range(-4.0..4.0))
                        .collect();
                    let (min, _) = spec.hessian_extremes(&x);
                    assert!(min >= lambda - 1e-9, "{}: {min} < {lambda}", spec.name);
                }
            }
        }
    }

    fn random_pairs(n: usize, dim: usize, half: f64, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = (0..dim).map(|_| rng.random_range(-half..half)).collect();
                let y = (0..dim).map(|_| rng.random_range(-half..half)).collect();
                (x, y)
            })
            .collect()
    }

    #[test]
    fn convexity_probe_passes_for_convex_families() {
        for spec in builtins().into_iter().filter(|s| s.declared_convex) {
            let r = convexity_probe(&spec, &random_pairs(1000, spec.dimension, 6.0, 3)).unwrap();
            assert!(r.pass, "{}: {}", spec.name, r.min_ratio);
        }
    }

    #[test]
    fn convexity_probe_gaussian_ratio_is_one() {
        let pairs: Vec<_> = (0..61)
            .flat_map(|i| {
                (0..61).map(move |j| (vec![-3.0 + 0.1 * i as f64], vec![-3.0 + 0.1 * j as f64]))
            })
            .collect();
        let r = convexity_probe(&PotentialSpec::gaussian(1), &pairs).unwrap();
        assert_abs_diff_eq!(r.min_ratio, 1.0, epsilon = 1e-9);
        assert!(r.pass);
        assert_eq!(r.skipped_pairs, 61);
    }

    #[test]
    fn convexity_probe_detects_nonconvex_perturbation() {
        // Oracle: dense scan of V'' = 1 - a cos(x). For a = 1 the minimum is 0 (convex);
        // for a = 2 it is -1 near the origin.
        let scan = |a: f64| {
            (0..=6000)
                .map(|k| -3.0 + 1e-3 * k as f64)
                .map(|x: f64| 1.0 - a * x.cos())
                .fold(f64::INFINITY, f64::min)
        };
        assert!(scan(1.0) >= -1e-12);
        assert!(scan(2.0) < -0.99);

        let pairs: Vec<_> = (0..=60)
            .flat_map(|i| {
                (0..=60).map(move |j| (vec![-3.0 + 0.1 * i as f64], vec![-3.0 + 0.1 * j as f64]))
            })
            .collect();
        let g = PotentialSpec::gaussian(1);
        let mild = PotentialSpec::perturbed(&g, 1.0, 1.0).unwrap();
        let r = convexity_probe(&mild, &pairs).unwrap();
        assert!(r.pass && r.min_ratio >= 0.0);

        let strong = PotentialSpec::perturbed(&g, 2.0, 1.0).unwrap();
        assert!(!strong.declared_convex);
        let r = convexity_probe(&strong, &pairs).unwrap();
        assert!(!r.pass);
        assert!(r.min_ratio < -0.9);
    }

    #[test]
    fn convexity_probe_edge_cases() {
        let g = PotentialSpec::gaussian(1);
        assert!(matches!(convexity_probe(&g, &[]), Err(Error::Input(_))));
        let r = convexity_probe(&g, &[(vec![0.5], vec![0.5])]).unwrap();
        assert!(r.pass);
        assert_eq!(r.min_ratio, f64::INFINITY);
    }

    #[test]
    fn integrability_gaussian_closed_forms() {
        let g = PotentialSpec::gaussian(1);
        let r = integrability_probe(&g, &BoxDomain::symmetric(10.0, 1), 4096).unwrap();
        let root = (2.0 * std::f64::consts::PI).sqrt();
        assert_abs_diff_eq!(r.mass_integral, root, epsilon = 1e-6);
        assert_abs_diff_eq!(r.second_moment_integral, root, epsilon = 1e-6);
        assert_abs_diff_eq!(r.gradient_square_integral, root, epsilon = 1e-6);
        assert!(r.truncation_estimate < 1e-12);
    }

    #[test]
    fn integrability_small_domain_is_truncated() {
        let g = PotentialSpec::gaussian(1);
        let err = integrability_probe(&g, &BoxDomain::symmetric(1.0, 1), 256).unwrap_err();
        assert!(matches!(err, Error::Truncation { .. }));
        assert!(matches!(
            integrability_probe(&g, &BoxDomain::symmetric(8.0, 1), 16),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn integrability_holds_for_every_family() {
        for spec in builtins() {
            let domain = BoxDomain::symmetric(9.0, spec.dimension);
            let res = if spec.dimension == 1 { 2048 } else { 128 };
            let r = integrability_probe(&spec, &domain, res)
                .unwrap_or_else(|e| panic!("{}: {e}", spec.name));
            assert!(r.mass_integral.is_finite() && r.gradient_square_integral.is_finite());
        }
    }
}
