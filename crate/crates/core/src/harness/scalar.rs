//! Exhaustive grid checks of the scalar inequalities satisfied by `F` and `N`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{InequalityReport, Provenance};
use crate::costs::f_value;

const TOL: f64 = 1e-12;
const GRID_POINTS: usize = 10_000;
const S_MAX: f64 = 100.0;

fn n_value(t: f64) -> f64 {
    (t * t).min(t)
}

fn f_prime(s: f64) -> f64 {
    s / (1.0 + s)
}

fn s_grid(points: usize) -> impl Iterator<Item = f64> {
    (0..points).map(move |k| S_MAX * k as f64 / (points - 1) as f64)
}

/// Minimum of `slack(s)` over the grid, with the arg-min.
fn worst(points: usize, slack: impl Fn(f64) -> f64) -> (f64, f64) {
    s_grid(points).fold((f64::INFINITY, 0.0), |(m, at), s| {
        let v = slack(s);
        if v < m {
            (v, s)
        } else {
            (m, at)
        }
    })
}

fn grid_report(id: &str, (margin, at): (f64, f64)) -> InequalityReport {
    InequalityReport::new("scalar", id, 0.0, margin, margin, TOL)
        .with_value("worst_s", at)
        .with_inputs(Provenance::default())
}

/// The valid scalar facts: sandwich, power commutation, superadditivity,
/// `F′² ≤ 4F`, doubling, and `F(t) ≥ F(|t|)` on `(−1, 0]`.
pub fn scalar_inequality_suite(seed: u64) -> Vec<InequalityReport> {
    let mut out = vec![
        grid_report(
            "sandwich: N/4 <= F <= N",
            worst(GRID_POINTS, |s| (f_value(s) - 0.25 * n_value(s)).min(n_value(s) - f_value(s))),
        ),
        grid_report(
            "power: F(sqrt s) <= sqrt F(s) <= 2 F(sqrt s)",
            worst(GRID_POINTS, |s| {
                let (a, b) = (f_value(s.sqrt()), f_value(s).sqrt());
                (b - a).min(2.0 * a - b)
            }),
        ),
        grid_report(
            "derivative: F'^2 <= 4F",
            worst(GRID_POINTS, |s| 4.0 * f_value(s) - f_prime(s).powi(2)),
        ),
        grid_report(
            "doubling: F(2s) <= 4F(s)",
            worst(GRID_POINTS, |s| 4.0 * f_value(s) - f_value(2.0 * s)),
        ),
    ];
    let (m, at) = (0..GRID_POINTS)
        .map(|k| -0.999_999 * k as f64 / (GRID_POINTS - 1) as f64)
        .map(|t| (f_value(t) - f_value(t.abs()), t))
        .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
    out.push(
        InequalityReport::new("scalar", "F(t) >= F(|t|) on (-1, 0]", 0.0, m, m, TOL).with_value("worst_t", at),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut margin = f64::INFINITY;
    for _ in 0..1000 {
        let k = rng.random_range(1..=16);
        let s: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..20.0)).collect();
        let lhs: f64 = s.iter().map(|&x| f_value(x)).sum();
        let rhs = 0.25 * f_value(s.iter().map(|x| x * x).sum::<f64>().sqrt());
        margin = margin.min(lhs - rhs);
    }
    out.push(
        InequalityReport::new("scalar", "superadditive: sum F(s_i) >= F(|s|)/4", 0.0, margin, margin, TOL)
            .with_inputs(Provenance::default().seed(seed)),
    );
    out
}

/// Candidate closed form of `(4F − F′²)′`.
fn candidate_derivative(s: f64) -> f64 {
    2.0 * s * (1.0 + 2.0 * s + 2.0 * s * s) / (1.0 + s).powi(3)
}

/// Closed form obtained by differentiating `4F − F′²` directly.
fn computed_derivative(s: f64) -> f64 {
    2.0 * s * (1.0 + 4.0 * s + 2.0 * s * s) / (1.0 + s).powi(3)
}

/// The Legendre-type bound `st ≤ 4F(s) + t²/16` on `s ∈ [0,100]`, `t ∈ [0,1]`,
/// and a candidate formula for `(4F − F′²)′` against central differences.
///
/// Both items fail: the bound is violated near `s = 1/3, t = 1`, and the
/// candidate has `1 + 2s` where the true derivative has `1 + 4s`.
/// The corrected bound `st ≤ 4F(s) + t²/4` and the corrected formula are
/// recorded as values.
pub fn legendre_suite() -> Vec<InequalityReport> {
    let ts: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    let mut worst = (f64::INFINITY, 0.0, 0.0);
    let mut corrected = f64::INFINITY;
    for s in s_grid(GRID_POINTS) {
        for &t in &ts {
            let m = 4.0 * f_value(s) + t * t / 16.0 - s * t;
            if m < worst.0 {
                worst = (m, s, t);
            }
            corrected = corrected.min(4.0 * f_value(s) + t * t / 4.0 - s * t);
        }
    }
    let bound = InequalityReport::new("legendre", "st <= 4F(s) + t^2/16", 0.0, worst.0, worst.0, TOL)
        .with_value("worst_s", worst.1)
        .with_value("worst_t", worst.2)
        .with_value("margin_with_t2_over_4", corrected);

    let g = |s: f64| 4.0 * f_value(s) - f_prime(s).powi(2);
    let (mut candidate_err, mut computed_err, mut min_derivative) = (0.0f64, 0.0f64, f64::INFINITY);
    for s in s_grid(2001).skip(1) {
        let h = 1e-4 * (1.0 + s);
        let fd = (g(s + h) - g(s - h.min(s))) / (h + h.min(s));
        let scale = fd.abs().max(1.0);
        candidate_err = candidate_err.max((candidate_derivative(s) - fd).abs() / scale);
        computed_err = computed_err.max((computed_derivative(s) - fd).abs() / scale);
        min_derivative = min_derivative.min(computed_derivative(s));
    }
    let closed = InequalityReport::identity(
        "legendre",
        "(4F - F'^2)' = 2s(1+2s+2s^2)/(1+s)^3",
        candidate_derivative(1.0),
        computed_derivative(1.0),
        1e-6,
    )
    .with_value("max_relative_error_candidate", candidate_err)
    .with_value("max_relative_error_corrected", computed_err)
    .with_value("min_corrected_derivative", min_derivative)
    .with_note("lhs and rhs are the candidate and the true derivative at s = 1");
    vec![bound, closed]
}

/// Reversed sandwich `F ≤ N/8`, which is false; a harness that passes it is broken.
pub fn negative_control() -> InequalityReport {
    let (m, at) = worst(GRID_POINTS, |s| 0.125 * n_value(s) - f_value(s));
    InequalityReport::new("negative_control", "F <= N/8", 0.0, m, m, TOL).with_value("worst_s", at)
}
