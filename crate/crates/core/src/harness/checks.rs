//! The individual inequality checks.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{InequalityReport, Provenance};
use crate::costs::{cost_matrix, f_value, inf_convolution, CostSpec};
use crate::matrixfn::{sphere_average_f, trace_f, SymmetricMatrix};
use crate::measures::{
    discretize, moments, recenter, relative_entropy, translate, variance_of, BoxDomain, GridFunction, GridMeasure,
};
use crate::potentials::PotentialSpec;
use crate::spectral::{cheeger_constant, cheeger_estimate, poincare_constant, spectral_report};
use crate::transport::{displacement_remainder_1d, quantile_coupling_1d, solve_ot_exact, transport_cost, wasserstein, Metric};
use crate::{Error, Result};

/// Absolute tolerance on deficits at equality cases (grid discretization of translates).
pub const EQUALITY_TOLERANCE: f64 = 2e-3;
const INEQUALITY_TOLERANCE: f64 = 1e-6;
/// Bisection range and steps for the reinforced Brascamp–Lieb constant.
const RBL_C_MAX: f64 = 100.0;
const RBL_STEPS: usize = 30;
/// Constant in the `F`-Poincaré inequality.
pub const BH_CONSTANT: f64 = 192.0;

fn same_measure(a: &GridMeasure, b: &GridMeasure) -> bool {
    a.weights().iter().zip(b.weights()).all(|(x, y)| (x - y).abs() <= 1e-15)
}

fn provenance(spec: &PotentialSpec, mu: &GridMeasure, nu: &GridMeasure) -> Provenance {
    Provenance::potential(&spec.name)
        .grid(mu.grid())
        .measure(mu.source())
        .measure(nu.source())
}

fn with_function(spec: &PotentialSpec, mu: &GridMeasure, label: &str) -> Provenance {
    Provenance::potential(&spec.name)
        .grid(mu.grid())
        .measure(mu.source())
        .measure(&format!("g = {label}"))
}

fn ensure_dimension(spec: &PotentialSpec, mu: &GridMeasure) -> Result<()> {
    if spec.dimension != mu.dimension() {
        return Err(Error::Dimension {
            expected: spec.dimension,
            found: mu.dimension(),
        });
    }
    Ok(())
}

fn ensure_1d(mu: &GridMeasure) -> Result<()> {
    if mu.dimension() != 1 {
        return Err(Error::Dimension {
            expected: 1,
            found: mu.dimension(),
        });
    }
    Ok(())
}

fn integral(mu: &GridMeasure, values: &[f64]) -> f64 {
    mu.weights().iter().zip(values).map(|(w, v)| w * v).sum()
}

/// `(H(ν‖μ), 𝒲_{c_V}(μ, ν))`.
fn entropy_and_transport(spec: &PotentialSpec, mu: &GridMeasure, nu: &GridMeasure) -> Result<(f64, f64)> {
    let h = relative_entropy(nu, mu)?;
    let w = transport_cost(mu, nu, &CostSpec::Bregman(spec.clone()))?;
    Ok((h, w))
}

/// Hessian eigenvalues and squared gradient projections at every cell, so
/// that `∫ φ(D²V) ∇g·∇g dμ` can be evaluated for many `φ`.
struct HessianForm {
    weights: Vec<f64>,
    eig: Vec<Vec<f64>>,
    proj: Vec<Vec<f64>>,
    points: Vec<Vec<f64>>,
}

impl HessianForm {
    fn new(spec: &PotentialSpec, mu: &GridMeasure, g: &GridFunction) -> Result<Self> {
        ensure_dimension(spec, mu)?;
        g.ensure_grid(mu.grid())?;
        let n = mu.len();
        let mut out = Self {
            weights: mu.weights().to_vec(),
            eig: Vec::with_capacity(n),
            proj: Vec::with_capacity(n),
            points: Vec::with_capacity(n),
        };
        for i in 0..n {
            let x = mu.point(i);
            let grad = g.gradient_at(i);
            if spec.dimension == 1 {
                out.eig.push(vec![spec.hessian(x)[(0, 0)]]);
                out.proj.push(vec![grad[0] * grad[0]]);
            } else {
                let e = spec.hessian(x).symmetric_eigen();
                let gv = DVector::from_column_slice(&grad);
                out.eig.push(e.eigenvalues.iter().copied().collect());
                out.proj.push(e.eigenvectors.column_iter().map(|q| q.dot(&gv).powi(2)).collect());
            }
            out.points.push(x.to_vec());
        }
        Ok(out)
    }

    /// `Σ μ_i Σ_k φ(λ_k(x_i)) (q_k·∇g)²`, requiring `λ_k + shift > 0`.
    fn eval(&self, shift: f64, phi: impl Fn(f64) -> f64) -> Result<f64> {
        let mut total = 0.0;
        for i in 0..self.weights.len() {
            for (l, p) in self.eig[i].iter().zip(&self.proj[i]) {
                if !(l + shift > 0.0) {
                    return Err(Error::SingularHessian {
                        x: self.points[i].clone(),
                        min_eigenvalue: self.eig[i].iter().copied().fold(f64::INFINITY, f64::min),
                    });
                }
                total += self.weights[i] * phi(*l) * p;
            }
        }
        Ok(total)
    }

    fn lambda_max(&self, i: usize) -> f64 {
        self.eig[i].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// `𝒲_{c_V}(μ, ν) ≤ H(ν‖μ)`.
pub fn check_transport_entropy(spec: &PotentialSpec, mu: &GridMeasure, nu: &GridMeasure) -> Result<InequalityReport> {
    ensure_dimension(spec, mu)?;
    let (h, w) = entropy_and_transport(spec, mu, nu)?;
    Ok(InequalityReport::inequality("prop1", nu.source(), w, h, INEQUALITY_TOLERANCE).with_inputs(provenance(spec, mu, nu)))
}

/// Remainder term for a recentered `ν`: `empirical_constant = (H − 𝒲_{c_V}) / 𝒲_{N(h|x−y|)}`.
///
/// Also evaluates the weaker form with `min(h²W₁², hW₁)` and, for each `c` in
/// `c_scan`, the margin `H − 𝒲_{c_V + c N(h|x−y|)}`.
pub fn check_remainder(spec: &PotentialSpec, mu: &GridMeasure, nu: &GridMeasure, c_scan: &[f64]) -> Result<InequalityReport> {
    ensure_dimension(spec, mu)?;
    let (nu_c, rec) = recenter(nu, mu)?;
    let inputs = provenance(spec, mu, nu);
    if same_measure(&nu_c, mu) {
        return Ok(InequalityReport::new("thm2", nu.source(), 0.0, 0.0, 0.0, 0.0)
            .with_inputs(inputs)
            .vacuous("recentered measure equals the reference measure"));
    }
    let h = cheeger_estimate(mu, Some(spec))?.value;
    let (hent, w_cv) = entropy_and_transport(spec, mu, &nu_c)?;
    let n_cost = CostSpec::CappedQuadratic { scale: h };
    let w_n = transport_cost(mu, &nu_c, &n_cost)?;
    if !(w_n > 1e-15) {
        return Err(Error::DegenerateRemainder);
    }
    let deficit = hent - w_cv;
    let w1 = wasserstein(mu, &nu_c, Metric::P1)?;
    let weak = (h * h * w1 * w1).min(h * w1);
    let mut report = InequalityReport::new("thm2", nu.source(), w_cv, hent, deficit, 0.0)
        .with_inputs(inputs)
        .with_constant(deficit / w_n)
        .with_value("h", h)
        .with_value("W_N", w_n)
        .with_value("W1", w1)
        .with_value("weak_constant", deficit / weak)
        .with_value("recenter_shift", rec.shift[0]);
    if !c_scan.is_empty() {
        let cv = cost_matrix(&CostSpec::Bregman(spec.clone()), mu, &nu_c)?;
        let cn = cost_matrix(&n_cost, mu, &nu_c)?;
        let mut largest = None;
        for &c in c_scan {
            let w = solve_ot_exact(mu, &nu_c, &cv.add_scaled(&cn, c)?)?.cost_value;
            let margin = hent - w;
            report = report.with_value(format!("combined_margin[c={c}]"), margin);
            if margin >= 0.0 {
                largest = Some(largest.map_or(c, |l: f64| l.max(c)));
            }
        }
        if let Some(c) = largest {
            report = report.with_value("largest_c_in_scan", c);
        }
    }
    Ok(report)
}

/// `H(ν‖μ) = ∫c_V(x, T(x)) dμ + ∫F(θ″) dμ` in one dimension.
pub fn check_mainbound_identity_1d(spec: &PotentialSpec, mu: &GridMeasure, nu: &GridMeasure) -> Result<InequalityReport> {
    ensure_dimension(spec, mu)?;
    ensure_1d(mu)?;
    let inputs = provenance(spec, mu, nu);
    if same_measure(mu, nu) {
        return Ok(InequalityReport::identity("mainbound", nu.source(), 0.0, 0.0, 1e-3)
            .with_inputs(inputs)
            .vacuous("nu equals mu"));
    }
    let d = displacement_remainder_1d(spec, mu, nu)?;
    let h = relative_entropy(nu, mu)?;
    Ok(
        InequalityReport::identity("mainbound", nu.source(), h, d.transport_term + d.remainder_term, 1e-3)
            .with_inputs(inputs)
            .with_value("transport_term", d.transport_term)
            .with_value("remainder_term", d.remainder_term)
            .with_value("excluded_mass", d.excluded_mass),
    )
}

/// `H(T_vν‖μ) − 𝒲_{c_V}(μ, T_vν) = H(ν‖μ) − 𝒲_{c_V}(μ, ν)` for grid-aligned `v`.
pub fn check_translation_invariance(
    spec: &PotentialSpec,
    mu: &GridMeasure,
    nu: &GridMeasure,
    shifts: &[Vec<f64>],
) -> Result<InequalityReport> {
    ensure_dimension(spec, mu)?;
    let (h0, w0) = entropy_and_transport(spec, mu, nu)?;
    let d0 = h0 - w0;
    let mut worst = (0.0, d0);
    let mut report_values = Vec::new();
    for v in shifts {
        let moved = translate(nu, v)?;
        let (h, w) = entropy_and_transport(spec, mu, &moved)?;
        let d = h - w;
        report_values.push((format!("deficit[v={v:?}]"), d));
        if (d - d0).abs() > worst.0 {
            worst = ((d - d0).abs(), d);
        }
    }
    let mut r = InequalityReport::identity("translation", nu.source(), d0, worst.1, EQUALITY_TOLERANCE)
        .with_inputs(provenance(spec, mu, nu))
        .with_value("deficit", d0);
    for (k, v) in report_values {
        r = r.with_value(k, v);
    }
    Ok(r)
}

/// `∫ e^{Q_{c_V}(g)} dμ ≤ e^{∫ g dμ}` with `Q` by exhaustive grid minimization.
pub fn check_dual_infconv(spec: &PotentialSpec, mu: &GridMeasure, g: &GridFunction, label: &str) -> Result<InequalityReport> {
    ensure_dimension(spec, mu)?;
    let q = inf_convolution(g, &CostSpec::Bregman(spec.clone()), mu)?;
    let mean = integral(mu, g.values());
    let k = q.values().iter().copied().fold(mean, f64::max);
    let lhs_scaled: f64 = mu.weights().iter().zip(q.values()).map(|(w, v)| w * (v - k).exp()).sum();
    let rhs_scaled = (mean - k).exp();
    if !lhs_scaled.is_finite() || !rhs_scaled.is_finite() {
        return Err(Error::Numerical("infimal convolution integrals overflow after rescaling".into()));
    }
    let scale = k.exp();
    let inputs = with_function(spec, mu, label);
    let report = if (lhs_scaled * scale).is_finite() && (rhs_scaled * scale).is_finite() {
        let (lhs, rhs) = (lhs_scaled * scale, rhs_scaled * scale);
        InequalityReport::inequality("ic", label, lhs, rhs, INEQUALITY_TOLERANCE * rhs.max(1.0))
    } else {
        InequalityReport::inequality("ic", label, lhs_scaled, rhs_scaled, INEQUALITY_TOLERANCE)
            .with_value("log_scale", k)
            .with_note("both sides divided by exp(log_scale)")
    };
    Ok(report.with_inputs(inputs))
}

fn require_curvature(spec: &PotentialSpec, lambda: f64) -> Result<()> {
    match spec.curvature_lower_bound {
        Some(b) if lambda > 0.0 && b >= lambda * (1.0 - 1e-12) => Ok(()),
        other => Err(Error::Input(format!(
            "{} does not declare D²V ≥ {lambda} (declared bound {other:?})",
            spec.name
        ))),
    }
}

/// `(λ/2) W₂²(μ, ν) ≤ H(ν‖μ)` under `D²V ≥ λ`.
pub fn check_talagrand(spec: &PotentialSpec, mu: &GridMeasure, nu: &GridMeasure, lambda: f64) -> Result<InequalityReport> {
    ensure_dimension(spec, mu)?;
    require_curvature(spec, lambda)?;
    let h = relative_entropy(nu, mu)?;
    let w2 = wasserstein(mu, nu, Metric::P2)?;
    let lhs = 0.5 * lambda * w2 * w2;
    let mut r = InequalityReport::inequality("talagrand", nu.source(), lhs, h, INEQUALITY_TOLERANCE)
        .with_inputs(provenance(spec, mu, nu))
        .with_value("W2", w2);
    if w2 > 0.0 {
        r = r.with_constant(2.0 * h / (w2 * w2));
    }
    Ok(r)
}

/// Deficit in the Gaussian-type inequality against its two remainders, with
/// the `W_{1,1}` remainder recorded for comparison.
pub fn check_gaussian_remainder(spec: &PotentialSpec, mu: &GridMeasure, nu: &GridMeasure, lambda: f64) -> Result<InequalityReport> {
    ensure_dimension(spec, mu)?;
    require_curvature(spec, lambda)?;
    let (nu_c, _) = recenter(nu, mu)?;
    let inputs = provenance(spec, mu, nu);
    if same_measure(&nu_c, mu) {
        return Ok(InequalityReport::new("qT", nu.source(), 0.0, 0.0, 0.0, 0.0)
            .with_inputs(inputs)
            .vacuous("recentered measure equals the reference measure"));
    }
    let h = cheeger_estimate(mu, Some(spec))?.value;
    let hent = relative_entropy(&nu_c, mu)?;
    let w2 = wasserstein(mu, &nu_c, Metric::P2)?;
    let deficit = hent - 0.5 * lambda * w2 * w2;
    let w_n = transport_cost(mu, &nu_c, &CostSpec::CappedQuadratic { scale: h })?;
    if !(w_n > 1e-15) {
        return Err(Error::DegenerateRemainder);
    }
    let w1 = wasserstein(mu, &nu_c, Metric::P1)?;
    let w11 = wasserstein(mu, &nu_c, Metric::L1)?;
    let n = mu.dimension() as f64;
    let weak = (h * h * w1 * w1).min(h * w1);
    let fil = (w11 * w11 / n).min(w11 / n.sqrt());
    let ours = (w1 * w1).min(w1);
    Ok(InequalityReport::new("qT", nu.source(), 0.5 * lambda * w2 * w2, hent, deficit, 0.0)
        .with_inputs(inputs)
        .with_constant(deficit / w_n)
        .with_value("h", h)
        .with_value("W_N", w_n)
        .with_value("W1", w1)
        .with_value("W11", w11)
        .with_value("weak_constant", deficit / weak)
        .with_value("fil_constant", deficit / fil)
        .with_value("fil_ratio", ours / fil))
}

/// `W₁(μ, ν) ≥ W_{1,1}(μ, ν)/√n`.
pub fn check_fil(mu: &GridMeasure, nu: &GridMeasure) -> Result<InequalityReport> {
    let w1 = wasserstein(mu, nu, Metric::P1)?;
    let w11 = wasserstein(mu, nu, Metric::L1)?;
    let n = mu.dimension() as f64;
    let fil = (w11 * w11 / n).min(w11 / n.sqrt());
    let ours = (w1 * w1).min(w1);
    let mut r = InequalityReport::inequality("fil", nu.source(), w11 / n.sqrt(), w1, INEQUALITY_TOLERANCE)
        .with_inputs(Provenance::default().grid(mu.grid()).measure(mu.source()).measure(nu.source()))
        .with_value("W11", w11);
    if fil > 0.0 {
        r = r.with_value("fil_ratio", ours / fil);
    }
    Ok(r)
}

/// `Var_μ(g) ≤ ∫ (D²V)⁻¹∇g·∇g dμ`.
pub fn check_bl_variance(spec: &PotentialSpec, mu: &GridMeasure, g: &GridFunction, label: &str) -> Result<InequalityReport> {
    let form = HessianForm::new(spec, mu, g)?;
    let dirichlet = form.eval(0.0, |l| 1.0 / l)?;
    let var = variance_of(mu, g)?;
    Ok(InequalityReport::inequality("bl", label, var, dirichlet, 1e-3 * dirichlet)
        .with_inputs(with_function(spec, mu, label))
        .with_value("relative_deficit", if dirichlet > 0.0 { (dirichlet - var) / dirichlet } else { 0.0 }))
}

/// Projects out the constants and the linear functions: the result satisfies
/// `∫g̃ dμ = 0` and `∫x g̃ dμ = 0`.
fn project_linear(mu: &GridMeasure, g: &GridFunction) -> Result<(Vec<f64>, f64)> {
    let m = moments(mu);
    let d = mu.dimension();
    let c0 = integral(mu, g.values());
    let mut cxg = DVector::zeros(d);
    for (i, (&w, &gv)) in mu.weights().iter().zip(g.values()).enumerate() {
        let x = mu.point(i);
        for a in 0..d {
            cxg[a] += w * (x[a] - m.mean[a]) * (gv - c0);
        }
    }
    let b = m
        .covariance
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("covariance of the reference measure is singular".into()))?
        .solve(&cxg);
    let out: Vec<f64> = (0..mu.len())
        .map(|i| {
            let x = mu.point(i);
            g.values()[i] - c0 - (0..d).map(|a| b[a] * (x[a] - m.mean[a])).sum::<f64>()
        })
        .collect();
    Ok((out, b.norm()))
}

/// Largest `c ∈ [0, 100]` with `Var(g̃) ≤ ∫[D²V + c h² Id]⁻¹∇g̃·∇g̃ dμ`, where
/// `g̃` is `g` with its constant and linear components projected out.
pub fn check_rbl(spec: &PotentialSpec, mu: &GridMeasure, g: &GridFunction, label: &str) -> Result<InequalityReport> {
    ensure_dimension(spec, mu)?;
    let inputs = with_function(spec, mu, label);
    let var_g = variance_of(mu, g)?;
    let (projected, b_norm) = project_linear(mu, g)?;
    let scale = projected.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for a in 0..mu.dimension() {
        let c: f64 = (0..mu.len()).map(|i| mu.weights()[i] * mu.point(i)[a] * projected[i]).sum();
        if c.abs() > 1e-8 * scale {
            return Err(Error::Numerical(format!("projection left ∫x g̃ dμ = {c:e}")));
        }
    }
    let gt = GridFunction::from_values(mu.grid(), projected)?;
    let var = variance_of(mu, &gt)?;
    if var_g == 0.0 || var <= 1e-12 * var_g {
        let note = if var_g == 0.0 {
            "g is constant"
        } else {
            "degenerate input: projection onto the centering condition removes g"
        };
        return Ok(InequalityReport::new("rbl", label, 0.0, 0.0, 0.0, 0.0)
            .with_inputs(inputs)
            .with_value("projection_norm", b_norm)
            .vacuous(note));
    }
    let h = cheeger_estimate(mu, Some(spec))?.value;
    let form = HessianForm::new(spec, mu, &gt)?;
    let rhs = |c: f64| {
        let s = c * h * h;
        form.eval(s, |l| 1.0 / (l + s))
    };
    let rhs0 = form.eval(0.0, |l| 1.0 / l)?;
    let base = |r: InequalityReport| {
        r.with_inputs(inputs.clone())
            .with_value("h", h)
            .with_value("bl_margin", rhs0 - var)
            .with_value("projection_norm", b_norm)
    };
    if rhs0 < var {
        return Ok(base(InequalityReport::new("rbl", label, var, rhs0, rhs0 - var, 0.0)).with_constant(0.0));
    }
    let (mut lo, mut hi) = (0.0, RBL_C_MAX);
    if rhs(hi)? >= var {
        let r = rhs(hi)?;
        return Ok(base(InequalityReport::new("rbl", label, var, r, hi, 0.0))
            .with_constant(hi)
            .with_note("inequality holds on the whole bisection range; constant capped"));
    }
    for _ in 0..RBL_STEPS {
        let mid = 0.5 * (lo + hi);
        if rhs(mid)? >= var {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(base(InequalityReport::new("rbl", label, var, rhs(lo)?, lo, 0.0)).with_constant(lo))
}

/// Brascamp–Lieb deficit against the three remainders built from
/// `g₀ = g − ∇V·v₀ − c₀` (constant `c` set to 1).
pub fn check_qbl(spec: &PotentialSpec, mu: &GridMeasure, g: &GridFunction, label: &str) -> Result<InequalityReport> {
    ensure_dimension(spec, mu)?;
    let d = mu.dimension();
    let inputs = with_function(spec, mu, label);
    let c0 = integral(mu, g.values());
    let mut v0 = vec![0.0; d];
    for (i, (&w, &gv)) in mu.weights().iter().zip(g.values()).enumerate() {
        for (a, x) in mu.point(i).iter().enumerate() {
            v0[a] += w * x * (gv - c0);
        }
    }
    let g0_values: Vec<f64> = (0..mu.len())
        .map(|i| {
            let grad = spec.gradient(mu.point(i));
            g.values()[i] - grad.iter().zip(&v0).map(|(p, q)| p * q).sum::<f64>() - c0
        })
        .collect();
    let g0 = GridFunction::from_values(mu.grid(), g0_values)?;
    let form = HessianForm::new(spec, mu, g)?;
    let dirichlet = form.eval(0.0, |l| 1.0 / l)?;
    let var = variance_of(mu, g)?;
    let deficit = dirichlet - var;
    let tol = 1e-3 * dirichlet;
    let g_sq = integral(mu, &g.values().iter().map(|v| v * v).collect::<Vec<_>>());
    let g0_sq = integral(mu, &g0.values().iter().map(|v| v * v).collect::<Vec<_>>());
    let g0_abs = integral(mu, &g0.values().iter().map(|v| v.abs()).collect::<Vec<_>>());
    let v0_norm = v0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if var == 0.0 && dirichlet == 0.0 {
        return Ok(InequalityReport::new("qbl", label, 0.0, 0.0, 0.0, 0.0)
            .with_inputs(inputs)
            .vacuous("g is constant"));
    }
    let lambda = poincare_constant(mu)?;
    let form0 = HessianForm::new(spec, mu, &g0)?;
    let rem1 = lambda * form0.eval(0.0, |l| 1.0 / (l * (l + lambda)))?;
    let sup_max = (0..mu.len()).map(|i| form0.lambda_max(i)).fold(f64::NEG_INFINITY, f64::max);
    let int_max: f64 = (0..mu.len())
        .map(|i| {
            let l = form0.lambda_max(i);
            mu.weights()[i] * l * (l + lambda)
        })
        .sum();
    let rem2 = lambda / (sup_max + lambda) * g0_sq;
    let rem3 = lambda * lambda / int_max * g0_abs * g0_abs;
    let mut r = InequalityReport::new("qbl", label, var, dirichlet, deficit, tol)
        .with_inputs(inputs)
        .with_value("c0", c0)
        .with_value("v0_norm", v0_norm)
        .with_value("lambda", lambda)
        .with_value("g0_sq", g0_sq)
        .with_value("g0_sq_relative", if g_sq > 0.0 { g0_sq / g_sq } else { 0.0 })
        .with_value("remainder1", rem1)
        .with_value("remainder2", rem2)
        .with_value("remainder3", rem3);
    // ratios of round-off are meaningless at the extremizers
    if g0_sq > 1e-12 * g_sq {
        for (k, rem) in [rem1, rem2, rem3].into_iter().enumerate() {
            if rem > 0.0 {
                r = r.with_value(format!("ratio{}", k + 1), deficit / rem);
            }
        }
        if rem1 > 0.0 {
            r = r.with_constant(deficit / rem1);
        }
    }
    if deficit <= tol && g0_sq > 1e-6 * g_sq {
        r.pass = false;
        r.note = Some("deficit vanishes but g is not an extremizer".into());
    }
    Ok(r)
}

/// `r(ε) = 𝒲_{c_V}(μ, (1+εg)μ)/ε²` against `B = ½(∫g²dμ)² / ∫(D²V)⁻¹∇g·∇g dμ`
/// from below (at the smallest `ε`, within 5%) and `H/ε²` from above.
///
/// The transport value uses the piecewise-linear monotone map, which resolves
/// displacements below the grid spacing; the lattice value of the monotone
/// plan at the largest `ε` is recorded alongside.
pub fn check_linearization(
    spec: &PotentialSpec,
    mu: &GridMeasure,
    g: &GridFunction,
    eps: &[f64],
    label: &str,
) -> Result<InequalityReport> {
    ensure_dimension(spec, mu)?;
    ensure_1d(mu)?;
    if eps.is_empty() {
        return Err(Error::Input("no ε values".into()));
    }
    let inputs = with_function(spec, mu, label);
    if g.values().iter().all(|v| *v == 0.0) {
        return Ok(InequalityReport::new("linearization", label, 0.0, 0.0, 0.0, 0.0)
            .with_inputs(inputs)
            .vacuous("g vanishes"));
    }
    let g_sq = integral(mu, &g.values().iter().map(|v| v * v).collect::<Vec<_>>());
    let dirichlet = HessianForm::new(spec, mu, g)?.eval(0.0, |l| 1.0 / l)?;
    let bound = 0.5 * g_sq * g_sq / dirichlet;
    let mut upper = f64::INFINITY;
    let (mut eps_min, mut r_min) = (f64::INFINITY, 0.0);
    let eps_max = eps.iter().copied().fold(0.0, f64::max);
    let mut values = Vec::new();
    for &e in eps {
        let nu = crate::measures::perturb(mu, g, e)?;
        let w = displacement_remainder_1d(spec, mu, &nu)?.transport_term;
        let r = w / (e * e);
        let h = relative_entropy(&nu, mu)? / (e * e);
        upper = upper.min(h - r);
        values.push((format!("r[eps={e}]"), r));
        values.push((format!("H_over_eps2[eps={e}]"), h));
        if e < eps_min {
            eps_min = e;
            r_min = r;
        }
        if e == eps_max {
            let lattice = quantile_coupling_1d(mu, &nu, &CostSpec::Bregman(spec.clone()))?.cost_value;
            values.push((format!("lattice_r[eps={e}]"), lattice / (e * e)));
        }
    }
    let lower = r_min - 0.95 * bound;
    let mut r = InequalityReport::new("linearization", label, 0.95 * bound, r_min, lower.min(upper), 0.0)
        .with_inputs(inputs)
        .with_constant(r_min / bound)
        .with_value("B", bound)
        .with_value("half_g_sq", 0.5 * g_sq)
        .with_value("upper_margin", upper)
        .with_value("lower_margin", lower);
    for (k, v) in values {
        r = r.with_value(k, v);
    }
    Ok(r)
}

/// `∫F(|f − ∫f dμ|) dμ ≤ 192 ∫F(|f′|/h) dμ` in one dimension.
pub fn check_bh(mu: &GridMeasure, f: &GridFunction, label: &str) -> Result<InequalityReport> {
    ensure_1d(mu)?;
    f.ensure_grid(mu.grid())?;
    let h = cheeger_constant(mu)?;
    let mean = integral(mu, f.values());
    let w = mu.weights();
    let lhs: f64 = (0..w.len()).map(|i| w[i] * f_value((f.values()[i] - mean).abs())).sum();
    let unit: f64 = (0..w.len()).map(|i| w[i] * f_value(f.gradient_at(i)[0].abs() / h)).sum();
    let inputs = Provenance::default()
        .grid(mu.grid())
        .measure(mu.source())
        .measure(&format!("f = {label}"));
    let r = InequalityReport::inequality("bh", label, lhs, BH_CONSTANT * unit, 1e-12)
        .with_inputs(inputs)
        .with_value("h", h);
    if f.values().iter().all(|v| *v == f.values()[0]) {
        return Ok(r.vacuous("f is constant"));
    }
    Ok(r.with_constant(lhs / unit))
}

fn bounding_box(domain: &BoxDomain, linear: &DMatrix<f64>, offset: &[f64]) -> Result<BoxDomain> {
    let d = domain.dimension();
    let mut lower = vec![f64::INFINITY; d];
    let mut upper = vec![f64::NEG_INFINITY; d];
    for mask in 0..(1usize << d) {
        let corner = DVector::from_fn(d, |a, _| {
            if mask >> a & 1 == 1 {
                domain.upper[a]
            } else {
                domain.lower[a]
            }
        });
        let image = linear * corner;
        for a in 0..d {
            lower[a] = lower[a].min(image[a] + offset[a]);
            upper[a] = upper[a].max(image[a] + offset[a]);
        }
    }
    BoxDomain::new(lower, upper)
}

/// Variance and weighted Dirichlet form before and after the affine change
/// `V_φ = V∘φ⁻¹`, `g_φ = g∘φ⁻¹` with `φ(x) = Ax + b`; the image grid covers
/// the bounding box of the transformed domain.
pub fn check_affine_invariance(
    spec: &PotentialSpec,
    domain: &BoxDomain,
    resolution: usize,
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
    linear: &DMatrix<f64>,
    offset: &[f64],
    label: &str,
) -> Result<InequalityReport> {
    let d = spec.dimension;
    if linear.nrows() != d || linear.ncols() != d || offset.len() != d {
        return Err(Error::Dimension {
            expected: d,
            found: offset.len(),
        });
    }
    let inverse = linear
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Input("affine map is not invertible".into()))?;
    let mu = discretize(spec, domain, resolution)?;
    let gf = GridFunction::from_fn(mu.grid(), g);
    let var = variance_of(&mu, &gf)?;
    let dir = HessianForm::new(spec, &mu, &gf)?.eval(0.0, |l| 1.0 / l)?;

    let spec_phi = PotentialSpec::affine(spec, linear, offset)?;
    let mu_phi = discretize(&spec_phi, &bounding_box(domain, linear, offset)?, resolution)?;
    let b = DVector::from_column_slice(offset);
    let g_phi = GridFunction::from_fn(mu_phi.grid(), |y| {
        let x = &inverse * (DVector::from_column_slice(y) - &b);
        g(x.as_slice())
    });
    let var_phi = variance_of(&mu_phi, &g_phi)?;
    let dir_phi = HessianForm::new(&spec_phi, &mu_phi, &g_phi)?.eval(0.0, |l| 1.0 / l)?;
    let rel = |a: f64, b: f64| if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
    let drift = rel(var, var_phi).max(rel(dir, dir_phi));
    Ok(InequalityReport::new("affine", label, var, var_phi, -drift, 1e-3)
        .with_inputs(
            Provenance::potential(&spec.name)
                .grid(mu.grid())
                .grid(mu_phi.grid())
                .measure(&format!("g = {label}")),
        )
        .with_value("variance", var)
        .with_value("variance_image", var_phi)
        .with_value("dirichlet", dir)
        .with_value("dirichlet_image", dir_phi))
}

/// A comparison measure for [`check_equality_characterization`].
#[derive(Debug, Clone)]
pub struct EqualityCandidate {
    pub measure: GridMeasure,
    /// Whether the measure is a grid translate of the reference measure.
    pub translate: bool,
}

/// Deficits `H − 𝒲_{c_V}` over candidates: at most the tolerance exactly for
/// translates under convex `V`, above it otherwise.
///
/// Per-candidate slack is `−|d|` where equality is expected and `|d| − 2·tol`
/// (`d − 2·tol` for convex `V`) where it is excluded, so the report passes iff
/// every candidate is on the expected side of the tolerance.
pub fn check_equality_characterization(
    spec: &PotentialSpec,
    mu: &GridMeasure,
    candidates: &[EqualityCandidate],
) -> Result<InequalityReport> {
    ensure_dimension(spec, mu)?;
    let h = cheeger_estimate(mu, Some(spec))?.value;
    if !(h > 0.0) {
        return Err(Error::Input("equality characterization needs h(μ) > 0".into()));
    }
    let tol = EQUALITY_TOLERANCE;
    let convex = spec.declared_convex;
    let mut margin = f64::INFINITY;
    let (mut equal_max, mut strict_min) = (0.0f64, f64::INFINITY);
    let mut inputs = Provenance::potential(&spec.name).grid(mu.grid());
    let mut values = Vec::new();
    for (k, c) in candidates.iter().enumerate() {
        let (hent, w) = entropy_and_transport(spec, mu, &c.measure)?;
        let d = hent - w;
        let slack = if convex && c.translate {
            equal_max = equal_max.max(d.abs());
            -d.abs()
        } else {
            strict_min = strict_min.min(d.abs());
            if convex {
                d - 2.0 * tol
            } else {
                d.abs() - 2.0 * tol
            }
        };
        margin = margin.min(slack);
        values.push((format!("deficit[{k}]"), d));
        inputs = inputs.measure(c.measure.source());
    }
    let mut r = InequalityReport::new("equality", spec.name.clone(), equal_max, strict_min, margin, tol)
        .with_inputs(inputs)
        .with_value("convex", if convex { 1.0 } else { 0.0 });
    for (k, v) in values {
        r = r.with_value(k, v);
    }
    Ok(r)
}

/// Cheeger's inequality `h²/4 ≤ λ`, with `λ/h²` as the empirical constant.
pub fn check_cheeger_poincare(spec: Option<&PotentialSpec>, mu: &GridMeasure) -> Result<InequalityReport> {
    let s = spectral_report(spec, mu)?;
    let label = spec.map_or_else(|| mu.source().to_string(), |p| p.name.clone());
    let mut inputs = Provenance::default().grid(mu.grid()).measure(mu.source());
    inputs.potential = spec.map(|p| p.name.clone());
    let mut r = InequalityReport::inequality("spectral", label, s.cheeger * s.cheeger / 4.0, s.poincare, 1e-12)
        .with_inputs(inputs)
        .with_constant(s.ratio)
        .with_value("h", s.cheeger)
        .with_value("h_lower", s.cheeger_lower)
        .with_value("h_upper", s.cheeger_upper)
        .with_value("lambda", s.poincare)
        .with_note(format!("h: {:?}, lambda: {:?}", s.cheeger_method, s.poincare_method));
    if let Some(b) = s.lower_bound_integral {
        r = r.with_value("inverse_curvature_integral", b);
    }
    Ok(r)
}

/// Random symmetric `A` (`n ∈ 2..=8`, eigenvalues in `(−0.9, 10)`):
/// `tr F(A) ≥ (MC − 3·stderr)/8`. The empirical constant is the smallest
/// observed ratio `tr F(A) / MC`.
pub fn check_trace(matrices: usize, samples: usize, seed: u64) -> Result<InequalityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut margin = f64::INFINITY;
    let (mut lhs, mut rhs) = (0.0, 0.0);
    let mut ratio = f64::INFINITY;
    let mut largest_dim = 0;
    for k in 0..matrices {
        let n = rng.random_range(2..=8);
        let spectrum: Vec<f64> = (0..n).map(|_| rng.random_range(-0.9..10.0)).collect();
        let gauss = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
        let a = SymmetricMatrix::from_spectrum(&gauss.qr().q(), &spectrum)?;
        let tr = trace_f(&a)?;
        let e = sphere_average_f(&a, samples, seed.wrapping_mul(1_000_003).wrapping_add(k as u64))?;
        let bound = (e.value - 3.0 * e.std_error) / 8.0;
        if tr - bound < margin {
            margin = tr - bound;
            lhs = bound;
            rhs = tr;
        }
        if e.value > 0.0 {
            ratio = ratio.min(tr / e.value);
        }
        largest_dim = largest_dim.max(n);
    }
    Ok(
        InequalityReport::new("trace", format!("{matrices} random matrices"), lhs, rhs, margin, 0.0)
            .with_inputs(Provenance::default().seed(seed))
            .with_constant(ratio)
            .with_value("samples_per_matrix", samples as f64)
            .with_value("largest_dimension", largest_dim as f64),
    )
}
