//! Log-domain Sinkhorn iterations with ε-scaling.

use crate::{Error, Result};

/// Scaled plan in compressed indices plus the final marginal residual.
pub(crate) struct Scaled {
    pub plan: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Runs Sinkhorn on strictly positive marginals `a`, `b` and row-major cost `c`.
///
/// The regularization starts at the cost range and is halved until it reaches
/// `epsilon`; the iteration budget applies to the whole schedule.
pub(crate) fn scale(a: &[f64], b: &[f64], c: &[f64], epsilon: f64, max_iter: usize, tol: f64) -> Result<Scaled> {
    let (n1, n2) = (a.len(), b.len());
    let (la, lb): (Vec<f64>, Vec<f64>) = (a.iter().map(|x| x.ln()).collect(), b.iter().map(|x| x.ln()).collect());
    let (cmin, cmax) = c
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mut eps = (cmax - cmin).max(epsilon);
    let mut f = vec![0.0; n1];
    let mut g = vec![0.0; n2];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;

    loop {
        let last_stage = eps <= epsilon;
        let stage_budget = if last_stage { usize::MAX } else { 50 };
        let mut stage_iter = 0;
        while stage_iter < stage_budget {
            if iterations >= max_iter {
                return Err(Error::Convergence { iterations, residual });
            }
            for i in 0..n1 {
                let row = &c[i * n2..(i + 1) * n2];
                f[i] = eps * la[i] - eps * log_sum_exp((0..n2).map(|j| (g[j] - row[j]) / eps));
            }
            for j in 0..n2 {
                g[j] = eps * lb[j] - eps * log_sum_exp((0..n1).map(|i| (f[i] - c[i * n2 + j]) / eps));
            }
            iterations += 1;
            stage_iter += 1;
            // columns are exact after the g-update; measure the row residual
            residual = (0..n1)
                .map(|i| {
                    let row = &c[i * n2..(i + 1) * n2];
                    let s: f64 = (0..n2).map(|j| ((f[i] + g[j] - row[j]) / eps).exp()).sum();
                    (s - a[i]).abs()
                })
                .sum();
            if last_stage && residual <= tol {
                break;
            }
        }
        if last_stage {
            break;
        }
        eps = (eps * 0.5).max(epsilon);
    }

    let mut plan = vec![0.0; n1 * n2];
    for i in 0..n1 {
        for j in 0..n2 {
            plan[i * n2 + j] = ((f[i] + g[j] - c[i * n2 + j]) / eps).exp();
        }
    }
    Ok(Scaled {
        plan,
        residual,
        iterations,
    })
}
