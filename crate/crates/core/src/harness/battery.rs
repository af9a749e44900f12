//! Runs a configured battery of checks and summarizes the empirical constants.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::checks::*;
use super::scalar::{legendre_suite, negative_control, scalar_inequality_suite};
use super::{InequalityReport, STATEMENTS};
use crate::config::RunConfig;
use crate::measures::{discretize, moments, recenter, relative_entropy, translate, BoxDomain, Grid, GridFunction, GridMeasure};
use crate::potentials::PotentialSpec;
use crate::transport::transport_cost;
use crate::{Error, Result};

/// Worker threads requested through `TIL_THREADS`; `None` lets rayon decide.
pub fn thread_count() -> Option<usize> {
    std::env::var("TIL_THREADS").ok()?.trim().parse().ok().filter(|n| *n > 0)
}

struct Prepared {
    spec: PotentialSpec,
    domain: BoxDomain,
    mu: GridMeasure,
    convex_pd: bool,
    std: f64,
}

fn prepare(cfg: &RunConfig) -> Result<Vec<Prepared>> {
    cfg.potentials
        .iter()
        .map(|p| {
            let (spec, domain) = p.build()?;
            let mu = discretize(&spec, &domain, cfg.resolution)?;
            let convex_pd = spec.declared_convex
                && (0..mu.len()).all(|i| spec.hessian_extremes(mu.point(i)).0 > 0.0);
            let std = moments(&mu).covariance[(0, 0)].sqrt();
            Ok(Prepared {
                spec,
                domain,
                mu,
                convex_pd,
                std,
            })
        })
        .collect()
}

fn statement_index(id: &str) -> usize {
    STATEMENTS.iter().position(|(s, _)| *s == id).unwrap_or(STATEMENTS.len())
}

/// Independent stream per (statement, potential); `None` marks single jobs.
fn rng_for(cfg: &RunConfig, id: &str, potential: Option<usize>) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream((statement_index(id) as u64) << 16 | potential.map_or(0xffff, |p| p as u64));
    rng
}

fn snap(grid: &Grid, v: f64) -> f64 {
    let s = grid.spacing(0);
    (v / s).round() * s
}

fn tempered(p: &Prepared, sigma: f64) -> Result<GridMeasure> {
    let spec = &p.spec;
    GridMeasure::from_log_density(p.mu.grid().clone(), |x| -spec.value(x) / (sigma * sigma), format!("tempered(sigma={sigma})"))
}

/// Gaussian mixture with 1–3 components scaled by the spread of `μ` and
/// centered analytically on the mean of `μ`.
fn mixture(p: &Prepared, rng: &mut ChaCha8Rng, label: usize) -> Result<GridMeasure> {
    let k = rng.random_range(1..=3);
    let mut comps: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| {
            (
                rng.random_range(0.2..1.0),
                rng.random_range(-1.5..1.5) * p.std,
                rng.random_range(0.35..1.0) * p.std,
            )
        })
        .collect();
    let total: f64 = comps.iter().map(|c| c.0).sum();
    let shift = comps.iter().map(|c| c.0 * c.1).sum::<f64>() / total - p.mu.mean()[0];
    for c in &mut comps {
        c.1 -= shift;
    }
    GridMeasure::from_log_density(
        p.mu.grid().clone(),
        |x| {
            let terms: Vec<f64> = comps
                .iter()
                .map(|(w, m, s)| w.ln() - s.ln() - 0.5 * ((x[0] - m) / s).powi(2))
                .collect();
            let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
        },
        format!("mixture#{label}({k} components)"),
    )
}

/// A mixture with mass at most 1e-12 within `margin` of the boundary, so that
/// translates of length up to `margin` stay on the grid. Deterministic redraws.
fn interior_mixture(p: &Prepared, rng: &mut ChaCha8Rng, label: usize, margin: f64) -> Result<GridMeasure> {
    let (lo, hi) = (p.domain.lower[0] + margin, p.domain.upper[0] - margin);
    for _ in 0..1000 {
        let m = mixture(p, rng, label)?;
        let edge: f64 = (0..m.len())
            .filter(|&i| {
                let x = m.point(i)[0];
                x < lo || x > hi
            })
            .map(|i| m.weights()[i])
            .sum();
        if edge <= 1e-12 {
            return Ok(m);
        }
    }
    Err(Error::Input(format!("no mixture stays {margin} away from the boundary of {}", p.spec.name)))
}

fn mixtures(p: &Prepared, cfg: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Vec<GridMeasure>> {
    (0..cfg.random_measures).map(|k| mixture(p, rng, k)).collect()
}

/// Sum of three random sinusoids with amplitudes at most 1/3.
fn random_trig(rng: &mut ChaCha8Rng) -> impl Fn(&[f64]) -> f64 + Sync {
    let terms: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(-1.0..1.0) / 3.0,
                rng.random_range(0.2..2.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    move |x: &[f64]| terms.iter().map(|(a, w, ph)| a * (w * x[0] + ph).sin()).sum()
}

fn test_functions(p: &Prepared, cfg: &RunConfig, rng: &mut ChaCha8Rng, fixed: &[(&str, fn(&[f64]) -> f64)]) -> Vec<(String, GridFunction)> {
    let grid = p.mu.grid();
    let mut out: Vec<(String, GridFunction)> = fixed
        .iter()
        .map(|(name, f)| (name.to_string(), GridFunction::from_fn(grid, f)))
        .collect();
    for k in 0..cfg.random_measures {
        out.push((format!("trig#{k}"), GridFunction::from_fn(grid, random_trig(rng))));
    }
    out
}

fn label_measure(p: &Prepared, r: InequalityReport) -> InequalityReport {
    let mut r = r;
    r.instance = format!("{}: {}", p.spec.name, r.instance);
    r
}

fn bump(x: f64, radius: f64) -> f64 {
    if x.abs() >= radius {
        0.0
    } else {
        (1.0 - (x / radius).powi(2)).powi(3)
    }
}

fn per_potential(id: &str, cfg: &RunConfig, p: &Prepared, index: usize) -> Result<Vec<InequalityReport>> {
    let mut rng = rng_for(cfg, id, Some(index));
    let grid = p.mu.grid();
    let spec = &p.spec;
    let mu = &p.mu;
    let shifts: Vec<f64> = cfg.shifts.iter().map(|v| snap(grid, *v)).filter(|v| *v != 0.0).collect();
    let mut out = Vec::new();
    match id {
        "prop1" => {
            let mut nus = vec![tempered(p, cfg.sigma)?];
            if let Some(v) = shifts.first() {
                nus.push(translate(mu, &[*v])?);
            }
            nus.extend(mixtures(p, cfg, &mut rng)?);
            for nu in &nus {
                out.push(check_transport_entropy(spec, mu, nu)?);
            }
        }
        "thm2" => {
            let mut nus = vec![tempered(p, cfg.sigma)?];
            nus.extend(mixtures(p, cfg, &mut rng)?);
            let configured = match &cfg.cost {
                Some(c) => Some(c.resolve(spec, || Ok(crate::spectral::cheeger_estimate(mu, Some(spec))?.value))?),
                None => None,
            };
            for nu in &nus {
                let mut r = check_remainder(spec, mu, nu, &cfg.c_scan)?;
                if let (Some(cost), false) = (&configured, r.vacuous) {
                    let (nu_c, _) = recenter(nu, mu)?;
                    let w = transport_cost(mu, &nu_c, cost)?;
                    r = r.with_value("configured_cost_margin", relative_entropy(&nu_c, mu)? - w);
                }
                out.push(r);
            }
        }
        "mainbound" => {
            let mut nus = vec![tempered(p, cfg.sigma)?];
            if let Some(v) = shifts.first() {
                nus.push(translate(mu, &[*v])?);
            }
            nus.extend(mixtures(p, cfg, &mut rng)?);
            for nu in &nus {
                out.push(check_mainbound_identity_1d(spec, mu, nu)?);
            }
        }
        "translation" => {
            let vs: Vec<Vec<f64>> = shifts.iter().map(|v| vec![*v]).collect();
            let mut nus = vec![tempered(p, cfg.sigma)?];
            let reach = shifts.iter().fold(0.0f64, |m, v| m.max(v.abs())) + grid.spacing(0);
            nus.push(interior_mixture(p, &mut rng, 0, reach)?);
            for nu in &nus {
                out.push(check_translation_invariance(spec, mu, nu, &vs)?);
            }
        }
        "ic" => {
            for (name, g) in test_functions(p, cfg, &mut rng, &[("0", |_| 0.0), ("sin(x)", |x| x[0].sin())]) {
                out.push(check_dual_infconv(spec, mu, &g, &name)?);
            }
        }
        "talagrand" | "qT" => {
            let Some(lambda) = spec.curvature_lower_bound.filter(|l| *l > 0.0) else {
                return Ok(out);
            };
            let mut nus = vec![tempered(p, cfg.sigma)?];
            if id == "talagrand" {
                for v in &shifts {
                    nus.push(translate(mu, &[*v])?);
                }
            }
            nus.extend(mixtures(p, cfg, &mut rng)?);
            for nu in &nus {
                out.push(if id == "talagrand" {
                    check_talagrand(spec, mu, nu, lambda)?
                } else {
                    check_gaussian_remainder(spec, mu, nu, lambda)?
                });
            }
        }
        "bl" | "rbl" | "qbl" => {
            if !p.convex_pd {
                return Ok(out);
            }
            let grad = GridFunction::from_fn(grid, |x| spec.gradient(x)[0] + 0.5);
            let mut fs = vec![("V'(x) + 1/2".to_string(), grad)];
            fs.extend(test_functions(
                p,
                cfg,
                &mut rng,
                &[("x^2", |x| x[0] * x[0]), ("sin(x) + 0.3x^2", |x| x[0].sin() + 0.3 * x[0] * x[0]), ("cos(x)", |x| x[0].cos())],
            ));
            for (name, g) in &fs {
                out.push(match id {
                    "bl" => check_bl_variance(spec, mu, g, name)?,
                    "rbl" => check_rbl(spec, mu, g, name)?,
                    _ => check_qbl(spec, mu, g, name)?,
                });
            }
        }
        "linearization" => {
            if !p.convex_pd {
                return Ok(out);
            }
            let radius = (0.6 * p.domain.upper[0]).min(3.0 * p.std);
            let center = mu.mean()[0];
            let bumped: Vec<(String, Box<dyn Fn(f64) -> f64>)> = vec![
                (format!("x bump(|x| < {radius:.2})"), Box::new(|x: f64| x - center)),
                (format!("x^2 bump(|x| < {radius:.2})"), Box::new(|x: f64| (x - center).powi(2))),
            ];
            for (name, f) in bumped {
                let raw: Vec<f64> = (0..mu.len())
                    .map(|i| {
                        let x = mu.point(i)[0];
                        f(x) * bump(x - center, radius)
                    })
                    .collect();
                let bumps: Vec<f64> = (0..mu.len()).map(|i| bump(mu.point(i)[0] - center, radius)).collect();
                let mean: f64 = mu.weights().iter().zip(&raw).map(|(w, v)| w * v).sum();
                let mass: f64 = mu.weights().iter().zip(&bumps).map(|(w, v)| w * v).sum();
                let values = raw.iter().zip(&bumps).map(|(v, b)| v - mean / mass * b).collect();
                let g = GridFunction::from_values(grid, values)?;
                out.push(check_linearization(spec, mu, &g, &cfg.eps, &name)?);
            }
        }
        "bh" => {
            for (name, f) in test_functions(p, cfg, &mut rng, &[("x", |x| x[0]), ("tanh(x/0.3)", |x| (x[0] / 0.3).tanh())]) {
                out.push(label_measure(p, check_bh(mu, &f, &name)?));
            }
        }
        "affine" => {
            if !p.convex_pd {
                return Ok(out);
            }
            let linear = DMatrix::from_element(1, 1, 2.0);
            let r = check_affine_invariance(spec, &p.domain, cfg.resolution, &|x: &[f64]| x[0] * x[0], &linear, &[0.3], "x^2")?;
            out.push(label_measure(p, r));
        }
        "equality" => {
            let mut candidates = vec![EqualityCandidate {
                measure: mu.clone(),
                translate: true,
            }];
            for v in &shifts {
                candidates.push(EqualityCandidate {
                    measure: translate(mu, &[*v])?,
                    translate: true,
                });
            }
            candidates.push(EqualityCandidate {
                measure: tempered(p, cfg.sigma)?,
                translate: false,
            });
            let (m, s) = (mu.mean()[0], p.std);
            let bimodal = GridMeasure::from_log_density(
                grid.clone(),
                |x| {
                    let (a, b) = ((x[0] - m + s) / (0.5 * s), (x[0] - m - s) / (0.5 * s));
                    let (a, b) = (-0.5 * a * a, -0.5 * b * b);
                    a.max(b) + (1.0 + (-(a - b).abs()).exp()).ln()
                },
                "bimodal mixture",
            )?;
            candidates.push(EqualityCandidate {
                measure: bimodal,
                translate: false,
            });
            out.push(check_equality_characterization(spec, mu, &candidates)?);
        }
        "spectral" => out.push(check_cheeger_poincare(Some(spec), mu)?),
        _ => {}
    }
    Ok(out)
}

/// Product of two 1D mixtures on the 2D grid.
fn product_mixture(grid: &Grid, rng: &mut ChaCha8Rng, label: usize) -> Result<GridMeasure> {
    let axes: Vec<Vec<(f64, f64, f64)>> = (0..2)
        .map(|_| {
            (0..rng.random_range(1..=2))
                .map(|_| (rng.random_range(0.2..1.0), rng.random_range(-1.5..1.5), rng.random_range(0.5..1.2)))
                .collect()
        })
        .collect();
    GridMeasure::from_log_density(
        grid.clone(),
        |x| {
            axes.iter()
                .zip(x)
                .map(|(comps, xi)| {
                    comps
                        .iter()
                        .map(|(w, m, s)| w / s * (-0.5 * ((xi - m) / s).powi(2)).exp())
                        .sum::<f64>()
                        .ln()
                })
                .sum()
        },
        format!("product mixture#{label}"),
    )
}

fn single(id: &str, cfg: &RunConfig) -> Result<Vec<InequalityReport>> {
    let mut rng = rng_for(cfg, id, None);
    let mut out = Vec::new();
    match id {
        "fil" => {
            let spec = PotentialSpec::gaussian(2);
            let mu = discretize(&spec, &BoxDomain::symmetric(8.0, 2), cfg.resolution_2d)?;
            let s2 = cfg.sigma * cfg.sigma;
            let mut nus = vec![GridMeasure::from_log_density(
                mu.grid().clone(),
                |x| -spec.value(x) / s2,
                format!("tempered(sigma={})", cfg.sigma),
            )?];
            for k in 0..cfg.random_measures {
                nus.push(product_mixture(mu.grid(), &mut rng, k)?);
            }
            for nu in &nus {
                out.push(check_fil(&mu, nu)?);
            }
        }
        "bh" => {
            let grid = Grid::new(&BoxDomain::symmetric(30.0, 1), 4 * cfg.resolution)?;
            let mu = GridMeasure::from_log_density(grid, |x| -x[0].abs(), "two-sided exponential")?;
            for (name, f) in [("x", (|x: &[f64]| x[0]) as fn(&[f64]) -> f64), ("tanh(x)", |x| x[0].tanh())] {
                let g = GridFunction::from_fn(mu.grid(), f);
                let mut r = check_bh(&mu, &g, name)?;
                r.instance = format!("two-sided exponential: {name}");
                out.push(r);
            }
        }
        "affine" => {
            let spec = PotentialSpec::gaussian(2);
            let (c, s) = (0.6f64.cos(), 0.6f64.sin());
            let rotation = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
            let r = check_affine_invariance(
                &spec,
                &BoxDomain::symmetric(7.0, 2),
                4 * cfg.resolution_2d,
                &|x: &[f64]| x[0] * x[0] + x[0] * x[1],
                &rotation,
                &[0.0, 0.0],
                "x1^2 + x1 x2",
            )?;
            out.push(r.with_note("rotation by 0.6 rad of the standard Gaussian in 2D"));
        }
        "trace" => out.push(check_trace(cfg.matrices, cfg.sphere_samples, cfg.seed)?),
        "scalar" => out.extend(scalar_inequality_suite(cfg.seed)),
        "legendre" => out.extend(legendre_suite()),
        "negative_control" => out.push(negative_control()),
        _ => {}
    }
    Ok(out)
}

fn has_single(id: &str) -> bool {
    matches!(id, "fil" | "bh" | "affine" | "trace" | "scalar" | "legendre" | "negative_control")
}

fn has_per_potential(id: &str) -> bool {
    !matches!(id, "fil" | "trace" | "scalar" | "legendre" | "negative_control")
}

/// Runs the battery of `cfg`. Reports come back in battery order, then
/// potential order, independent of the number of threads.
pub fn run_battery(cfg: &RunConfig) -> Result<Vec<InequalityReport>> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    pool.install(|| {
        let prepared = prepare(cfg)?;
        let mut ids: Vec<&str> = Vec::new();
        for id in &cfg.battery {
            if !ids.contains(&id.as_str()) {
                ids.push(id);
            }
        }
        let mut jobs: Vec<(&str, Option<usize>)> = Vec::new();
        for id in ids {
            if has_per_potential(id) {
                jobs.extend((0..prepared.len()).map(|k| (id, Some(k))));
            }
            if has_single(id) {
                jobs.push((id, None));
            }
        }
        let results: Vec<Result<Vec<InequalityReport>>> = jobs
            .par_iter()
            .map(|(id, p)| match p {
                Some(k) => per_potential(id, cfg, &prepared[*k], *k),
                None => single(id, cfg),
            })
            .collect();
        let mut out = Vec::new();
        for r in results {
            out.extend(r?);
        }
        Ok(out)
    })
}

/// One row of the constants summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantRow {
    pub name: String,
    pub description: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub instances: usize,
}

fn row(reports: &[InequalityReport], id: &str, name: &str, description: &str, take_max: bool) -> Option<ConstantRow> {
    let values: Vec<f64> = reports
        .iter()
        .filter(|r| r.statement_id == id && !r.vacuous)
        .filter_map(|r| r.empirical_constant)
        .filter(|c| c.is_finite())
        .collect();
    if values.is_empty() {
        return None;
    }
    let lower = values.iter().copied().fold(f64::INFINITY, f64::min);
    let upper = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(ConstantRow {
        name: name.into(),
        description: description.into(),
        value: if take_max { upper } else { lower },
        lower,
        upper,
        instances: values.len(),
    })
}

/// Empirical constants over a set of reports: the smallest remainder constant,
/// the largest `F`-Poincaré ratio, the smallest trace ratio, and the range of
/// `λ/h²`. Rows without instances are omitted.
pub fn constants_table(reports: &[InequalityReport]) -> Vec<ConstantRow> {
    [
        row(reports, "thm2", "remainder_c", "smallest (H - W_cV)/W_N over centered instances", false),
        row(reports, "bh", "f_poincare_c", "largest int F(|f - mean|) / int F(|f'|/h)", true),
        row(reports, "trace", "trace_ratio", "smallest tr F(A) / sphere average", false),
        row(reports, "spectral", "lambda_over_h2", "smallest lambda/h^2 (upper: largest)", false),
    ]
    .into_iter()
    .flatten()
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(battery: &[&str]) -> RunConfig {
        let mut cfg = RunConfig::with_seed(7);
        cfg.battery = battery.iter().map(|s| s.to_string()).collect();
        cfg.resolution = 128;
        cfg.random_measures = 2;
        cfg.matrices = 4;
        cfg
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = small(&["prop1", "bh", "scalar"]);
        let a = run_battery(&cfg).unwrap();
        let b = run_battery(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.pass), "{a:#?}");
    }

    #[test]
    fn negative_control_is_caught() {
        let r = run_battery(&small(&["negative_control"])).unwrap();
        assert_eq!(r.len(), 1);
        assert!(!r[0].pass);
    }

    #[test]
    fn constants_table_rows() {
        let reports = run_battery(&small(&["thm2", "bh", "trace", "spectral"])).unwrap();
        let rows = constants_table(&reports);
        assert_eq!(rows.len(), 4);
        for r in rows {
            assert!(r.value.is_finite() && r.value > 0.0, "{r:?}");
            assert!(r.lower <= r.value && r.value <= r.upper);
        }
    }

    #[test]
    fn rbl_and_qbl_skip_non_convex_potentials() {
        let reports = run_battery(&small(&["rbl"])).unwrap();
        assert!(reports.iter().all(|r| !r.instance.is_empty()));
        assert!(reports.iter().all(|r| r.inputs.potential.as_deref() != Some("perturbed")));
    }
}
