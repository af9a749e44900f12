//! Cheeger and Poincaré constants of grid measures.
//!
//! The discrete Dirichlet form puts the weight `√(μ_i μ_j)` on every grid edge,
//! so that after the symmetric scaling `M^{-1/2} L M^{-1/2}` all off-diagonal
//! entries equal `−1/s²`. The resulting operator tensorizes exactly: the gap of
//! a product measure is the smaller of the two factor gaps.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::measures::{discretize, BoxDomain, GridFunction, GridMeasure};
use crate::potentials::{Family, PotentialSpec};
use crate::{Error, Result};

/// How a constant in a [`SpectralReport`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Minimum of `ρ / min(t, 1−t)` over the discrete CDF.
    IsoperimetricProfile1d,
    /// `√(2/π)/σ_max` for Gaussian measures.
    GaussianHalfSpace,
    /// Lower end of `√(λ / r)` with `r` the empirical 1D bracket of `λ/h²`.
    PoincareBracket,
    /// Sturm-sequence bisection on the tridiagonal operator.
    SturmBisection,
    /// Inverse iteration with conjugate gradients, orthogonal to constants.
    DeflatedInverseIteration,
}

/// Cheeger constant `h(μ)`, one-dimensional grids only.
///
/// Uses the isoperimetric profile: at each cell boundary the density (average
/// of the two adjacent cells) is divided by the smaller of the two masses.
pub fn cheeger_constant(mu: &GridMeasure) -> Result<f64> {
    if mu.dimension() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            found: mu.dimension(),
        });
    }
    let w = mu.weights();
    let n = w.len();
    let s = mu.grid().spacing(0);
    let mut right = vec![0.0; n + 1];
    for k in (0..n).rev() {
        right[k] = right[k + 1] + w[k];
    }
    let mut left = 0.0;
    let mut h = f64::INFINITY;
    for k in 0..n - 1 {
        left += w[k];
        let tail = left.min(right[k + 1]);
        if tail <= 0.0 {
            continue;
        }
        let density = 0.5 * (w[k] + w[k + 1]) / s;
        h = h.min(density / tail);
    }
    Ok(h)
}

/// Cheeger constant together with the method used and, for brackets, both ends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheegerEstimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub method: Method,
}

fn gaussian_sigma_max(spec: &PotentialSpec) -> Option<f64> {
    match &spec.family {
        Family::Gaussian { covariance } => {
            let n = covariance.len();
            let m = nalgebra::DMatrix::from_fn(n, n, |i, j| covariance[i][j]);
            let ev = m.symmetric_eigenvalues();
            Some(ev.max().sqrt())
        }
        _ => None,
    }
}

/// `h(μ)` in any dimension: exact in 1D, half-space value for Gaussians,
/// otherwise the lower end of a bracket derived from the Poincaré constant.
pub fn cheeger_estimate(mu: &GridMeasure, spec: Option<&PotentialSpec>) -> Result<CheegerEstimate> {
    if mu.dimension() == 1 {
        let h = cheeger_constant(mu)?;
        return Ok(CheegerEstimate {
            value: h,
            lower: h,
            upper: h,
            method: Method::IsoperimetricProfile1d,
        });
    }
    if let Some(sigma) = spec.and_then(gaussian_sigma_max) {
        let h = (2.0 / std::f64::consts::PI).sqrt() / sigma;
        return Ok(CheegerEstimate {
            value: h,
            lower: h,
            upper: h,
            method: Method::GaussianHalfSpace,
        });
    }
    let lambda = poincare_constant(mu)?;
    let (r_lo, r_hi) = ratio_bracket_1d();
    let (lower, upper) = ((lambda / r_hi).sqrt(), (lambda / r_lo).sqrt());
    Ok(CheegerEstimate {
        value: lower,
        lower,
        upper,
        method: Method::PoincareBracket,
    })
}

/// Reference 1D log-concave measures used for the empirical `λ/h²` bracket.
pub fn reference_measures_1d() -> Vec<(PotentialSpec, BoxDomain)> {
    let mut out = vec![(PotentialSpec::gaussian(1), BoxDomain::symmetric(8.0, 1))];
    for (a, b, half) in [(1.0, 1.0, 4.5), (0.25, 1.0, 4.5), (1.0, 0.1, 7.0)] {
        out.push((
            PotentialSpec::quadratic_plus_quartic(a, b, 1).expect("valid parameters"),
            BoxDomain::symmetric(half, 1),
        ));
    }
    out.push((
        PotentialSpec::even_power(4.0, 1).expect("valid parameters"),
        BoxDomain::symmetric(4.5, 1),
    ));
    out
}

/// Empirical range of `λ/h²` over [`reference_measures_1d`] at 2048 cells.
pub fn ratio_bracket_1d() -> (f64, f64) {
    static BRACKET: OnceLock<(f64, f64)> = OnceLock::new();
    *BRACKET.get_or_init(|| {
        reference_measures_1d()
            .iter()
            .map(|(spec, domain)| {
                let mu = discretize(spec, domain, 2048).expect("reference measure discretizes");
                let h = cheeger_constant(&mu).expect("1D");
                poincare_constant(&mu).expect("1D spectral gap") / (h * h)
            })
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
    })
}

/// Symmetrized Dirichlet operator `S = M^{-1/2} L M^{-1/2}` in stencil form.
struct Operator {
    diag: Vec<f64>,
    off: Vec<f64>,
    resolution: Vec<usize>,
    strides: Vec<usize>,
    sqrt_mu: Vec<f64>,
}

impl Operator {
    fn new(mu: &GridMeasure) -> Result<Self> {
        let w = mu.weights();
        if let Some(i) = w.iter().position(|&x| !(x > 0.0)) {
            return Err(Error::Input(format!("Poincaré constant needs positive weights (cell {i})")));
        }
        let grid = mu.grid();
        let d = grid.dimension();
        let resolution = grid.resolution().to_vec();
        let strides: Vec<usize> = (0..d).map(|a| grid.stride(a)).collect();
        let off: Vec<f64> = (0..d).map(|a| -1.0 / grid.spacing(a).powi(2)).collect();
        let mut diag = vec![0.0; w.len()];
        for (i, di) in diag.iter_mut().enumerate() {
            for a in 0..d {
                let k = (i / strides[a]) % resolution[a];
                let inv = -off[a];
                if k > 0 {
                    *di += inv * (w[i - strides[a]] / w[i]).sqrt();
                }
                if k + 1 < resolution[a] {
                    *di += inv * (w[i + strides[a]] / w[i]).sqrt();
                }
            }
        }
        Ok(Self {
            diag,
            off,
            resolution,
            strides,
            sqrt_mu: w.iter().map(|x| x.sqrt()).collect(),
        })
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..v.len() {
            let mut acc = self.diag[i] * v[i];
            for a in 0..self.strides.len() {
                let st = self.strides[a];
                let k = (i / st) % self.resolution[a];
                if k > 0 {
                    acc += self.off[a] * v[i - st];
                }
                if k + 1 < self.resolution[a] {
                    acc += self.off[a] * v[i + st];
                }
            }
            out[i] = acc;
        }
    }

    fn norm_inf(&self) -> f64 {
        self.diag
            .iter()
            .map(|d| d + self.off.iter().map(|o| 2.0 * o.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Removes the component along `√μ` (the constants).
    fn deflate(&self, v: &mut [f64]) {
        let dot: f64 = v.iter().zip(&self.sqrt_mu).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(&self.sqrt_mu).for_each(|(a, b)| *a -= dot * b);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let n = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

/// Number of eigenvalues of the tridiagonal matrix `(diag, off)` below `x`.
fn sturm_count(diag: &[f64], off: f64, x: f64) -> usize {
    let mut count = 0;
    let mut d = 1.0;
    for (i, &a) in diag.iter().enumerate() {
        d = a - x - if i > 0 { off * off / d } else { 0.0 };
        if d == 0.0 {
            d = -f64::EPSILON * (a.abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Solves the tridiagonal system `(T − σI) x = r` by the Thomas algorithm.
fn thomas(diag: &[f64], off: f64, sigma: f64, r: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut b = diag[0] - sigma;
    c[0] = off / b;
    d[0] = r[0] / b;
    for i in 1..n {
        b = diag[i] - sigma - off * c[i - 1];
        if b == 0.0 {
            b = f64::EPSILON;
        }
        c[i] = off / b;
        d[i] = (r[i] - off * d[i - 1]) / b;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

/// Spectral gap `λ(μ)` of the discrete weighted Dirichlet form (1D or 2D grids).
pub fn poincare_constant(mu: &GridMeasure) -> Result<f64> {
    Ok(poincare_with_method(mu)?.0)
}

fn poincare_with_method(mu: &GridMeasure) -> Result<(f64, Method)> {
    match mu.dimension() {
        1 => Ok((poincare_1d(mu)?, Method::SturmBisection)),
        2 => Ok((poincare_cg(mu)?, Method::DeflatedInverseIteration)),
        d => Err(Error::Dimension { expected: 2, found: d }),
    }
}

fn residual_check(op: &Operator, v: &[f64], lambda: f64) -> Result<()> {
    let mut sv = vec![0.0; v.len()];
    op.apply(v, &mut sv);
    let res = sv
        .iter()
        .zip(v)
        .map(|(a, b)| (a - lambda * b).abs())
        .fold(0.0, f64::max);
    let scale = op.norm_inf() * v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if res > 1e-10 * scale {
        return Err(Error::Numerical(format!(
            "eigen-residual {res:e} exceeds 1e-10 x {scale:e}"
        )));
    }
    Ok(())
}

fn poincare_1d(mu: &GridMeasure) -> Result<f64> {
    let op = Operator::new(mu)?;
    let off = op.off[0];
    let (mut lo, mut hi) = (0.0, op.norm_inf());
    // λ₂ is the smallest x with two eigenvalues below it
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sturm_count(&op.diag, off, mid) >= 2 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let lambda = 0.5 * (lo + hi);

    let mut v: Vec<f64> = (0..op.diag.len()).map(|i| ((i as f64) * 0.37).sin() + 0.5).collect();
    op.deflate(&mut v);
    normalize(&mut v);
    for _ in 0..4 {
        v = thomas(&op.diag, off, lambda * (1.0 - 1e-9), &v);
        op.deflate(&mut v);
        normalize(&mut v);
    }
    residual_check(&op, &v, lambda)?;
    Ok(lambda)
}

fn conjugate_gradient(op: &Operator, b: &[f64], x: &mut [f64], tol: f64) -> Result<()> {
    let n = b.len();
    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    op.deflate(&mut r);
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let target = tol * tol * dot(b, b);
    let mut ap = vec![0.0; n];
    for _ in 0..20 * n {
        if rr <= target {
            return Ok(());
        }
        op.apply(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        x.iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.iter_mut().zip(&ap).for_each(|(ri, ai)| *ri -= alpha * ai);
        op.deflate(&mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
    }
    Err(Error::Numerical("conjugate gradients did not converge".into()))
}

fn poincare_cg(mu: &GridMeasure) -> Result<f64> {
    let op = Operator::new(mu)?;
    let n = op.diag.len();
    let mut v: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.37).sin() + 0.3 * ((i as f64) * 0.11).cos()).collect();
    op.deflate(&mut v);
    normalize(&mut v);
    let mut lambda = f64::INFINITY;
    let mut sv = vec![0.0; n];
    for _ in 0..500 {
        let mut x = v.clone();
        conjugate_gradient(&op, &v, &mut x, 1e-14)?;
        op.deflate(&mut x);
        normalize(&mut x);
        v = x;
        op.apply(&v, &mut sv);
        let rq = dot(&v, &sv);
        let res = sv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - rq * b).abs())
            .fold(0.0, f64::max);
        let converged = (lambda - rq).abs() <= 1e-14 * rq
            && res <= 1e-10 * op.norm_inf() * v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        lambda = rq;
        if converged {
            break;
        }
    }
    residual_check(&op, &v, lambda)?;
    Ok(lambda)
}

/// `∫ λ_min(D²V(x))^{-1} dμ(x)`.
pub fn poincare_curvature_bound(spec: &PotentialSpec, mu: &GridMeasure) -> Result<f64> {
    let mut total = 0.0;
    for (i, &w) in mu.weights().iter().enumerate() {
        let x = mu.point(i);
        let (min, _) = spec.hessian_extremes(x);
        if !(min > 0.0) {
            return Err(Error::SingularHessian {
                x: x.to_vec(),
                min_eigenvalue: min,
            });
        }
        total += w / min;
    }
    Ok(total)
}

/// `∫|∇g| dμ − h ∫|g − ∫g dμ| dμ`, gradients by central differences.
pub fn l1_poincare_check(mu: &GridMeasure, g: &GridFunction, h: f64) -> Result<f64> {
    g.ensure_grid(mu.grid())?;
    let w = mu.weights();
    let mean: f64 = w.iter().zip(g.values()).map(|(a, b)| a * b).sum();
    let mut grad = 0.0;
    let mut dev = 0.0;
    for i in 0..w.len() {
        let gi = g.gradient_at(i);
        grad += w[i] * gi.iter().map(|x| x * x).sum::<f64>().sqrt();
        dev += w[i] * (g.values()[i] - mean).abs();
    }
    Ok(grad - h * dev)
}

/// Cheeger and Poincaré constants of a measure with their provenance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralReport {
    pub cheeger: f64,
    pub cheeger_lower: f64,
    pub cheeger_upper: f64,
    pub poincare: f64,
    /// `λ / h²`.
    pub ratio: f64,
    /// `∫ λ_min(D²V)^{-1} dμ` when the Hessian is positive definite on the grid.
    pub lower_bound_integral: Option<f64>,
    pub cheeger_method: Method,
    pub poincare_method: Method,
}

pub fn spectral_report(spec: Option<&PotentialSpec>, mu: &GridMeasure) -> Result<SpectralReport> {
    let (poincare, poincare_method) = poincare_with_method(mu)?;
    let ch = if mu.dimension() == 1 {
        cheeger_estimate(mu, spec)?
    } else if let Some(sigma) = spec.and_then(gaussian_sigma_max) {
        let h = (2.0 / std::f64::consts::PI).sqrt() / sigma;
        CheegerEstimate {
            value: h,
            lower: h,
            upper: h,
            method: Method::GaussianHalfSpace,
        }
    } else {
        let (r_lo, r_hi) = ratio_bracket_1d();
        let (lower, upper) = ((poincare / r_hi).sqrt(), (poincare / r_lo).sqrt());
        CheegerEstimate {
            value: lower,
            lower,
            upper,
            method: Method::PoincareBracket,
        }
    };
    let lower_bound_integral = spec.and_then(|s| poincare_curvature_bound(s, mu).ok());
    Ok(SpectralReport {
        cheeger: ch.value,
        cheeger_lower: ch.lower,
        cheeger_upper: ch.upper,
        poincare,
        ratio: poincare / (ch.value * ch.value),
        lower_bound_integral,
        cheeger_method: ch.method,
        poincare_method,
    })
}
