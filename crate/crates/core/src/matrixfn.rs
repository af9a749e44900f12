//! `F(t) = t − log(1+t)` applied to symmetric matrices, and Monte Carlo
//! averages over the unit sphere.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::costs::f_value;
use crate::{Error, Result};

/// Minimum number of sphere samples accepted by [`sphere_average_f`].
pub const MIN_SPHERE_SAMPLES: usize = 10_000;
const SHARD: usize = 8192;

/// A real symmetric matrix with its eigendecomposition cached.
#[derive(Debug, Clone)]
pub struct SymmetricMatrix {
    entries: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

impl SymmetricMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::Input(format!(
                "expected a nonempty square matrix, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("matrix entries must be finite".into()));
        }
        let scale = max_abs(&entries).max(1.0);
        let asym = max_abs(&(&entries - entries.transpose()));
        if asym > 1e-12 * scale {
            return Err(Error::Input(format!("matrix is not symmetric (max |A − Aᵀ| = {asym:e})")));
        }
        let sym = (&entries + entries.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let residual = max_abs(&(&sym * &eig.eigenvectors - &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues)));
        if residual > 1e-10 * max_abs(&sym).max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!("eigendecomposition residual {residual:e}")));
        }
        Ok(Self {
            entries: sym,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    pub fn from_diagonal(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(values)))
    }

    /// `Q diag(λ) Qᵀ`.
    pub fn from_spectrum(q: &DMatrix<f64>, eigenvalues: &[f64]) -> Result<Self> {
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(eigenvalues));
        Self::new(q * d * q.transpose())
    }

    pub fn dimension(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn eigenvalues(&self) -> &[f64] {
        self.eigenvalues.as_slice()
    }

    pub fn eigen_floor(&self) -> f64 {
        self.eigenvalues.min()
    }

    /// Applies a scalar function to the spectrum.
    pub fn map_spectrum<F: Fn(f64) -> f64>(&self, f: F) -> Result<SymmetricMatrix> {
        let d = DMatrix::from_diagonal(&self.eigenvalues.map(f));
        let q = &self.eigenvectors;
        Self::new(q * d * q.transpose())
    }

    /// `|A| = (A²)^{1/2}`.
    pub fn abs(&self) -> Result<SymmetricMatrix> {
        self.map_spectrum(f64::abs)
    }

    fn check_domain(&self) -> Result<()> {
        let floor = self.eigen_floor();
        if floor <= -1.0 {
            return Err(Error::Domain(format!("eigenvalue {floor} is ≤ −1")));
        }
        Ok(())
    }
}

/// `F(A) = Q F(Λ) Qᵀ`.
pub fn matrix_f(a: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    a.check_domain()?;
    a.map_spectrum(f_value)
}

/// `tr F(A) = Σ F(λ_i)`.
pub fn trace_f(a: &SymmetricMatrix) -> Result<f64> {
    a.check_domain()?;
    Ok(a.eigenvalues.iter().map(|&l| f_value(l)).sum())
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SphereEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Draws `n_samples` uniform points of `S^{n−1}` and averages `f(u)`.
///
/// Samples are split into fixed shards, each with its own ChaCha stream, so
/// the result does not depend on the number of worker threads.
fn sphere_mean<F>(n: usize, n_samples: usize, seed: u64, f: F) -> SphereEstimate
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let shards = n_samples.div_ceil(SHARD);
    let sums: Vec<(f64, f64)> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let count = SHARD.min(n_samples - s * SHARD);
            let mut u = vec![0.0; n];
            let (mut sum, mut sq) = (0.0, 0.0);
            for _ in 0..count {
                loop {
                    u.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
                    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        u.iter_mut().for_each(|x| *x /= norm);
                        break;
                    }
                }
                let v = f(&u);
                sum += v;
                sq += v * v;
            }
            (sum, sq)
        })
        .collect();
    let (sum, sq) = sums.iter().fold((0.0, 0.0), |(a, b), (s, q)| (a + s, b + q));
    let m = n_samples as f64;
    let mean = sum / m;
    let var = if n_samples > 1 {
        ((sq - m * mean * mean) / (m - 1.0)).max(0.0)
    } else {
        0.0
    };
    SphereEstimate {
        value: mean,
        std_error: (var / m).sqrt(),
        n_samples,
        seed,
    }
}

/// `∫_{S^{n−1}} F(√n |Au|) dσ(u)` by seeded Monte Carlo.
pub fn sphere_average_f(a: &SymmetricMatrix, n_samples: usize, seed: u64) -> Result<SphereEstimate> {
    if n_samples < MIN_SPHERE_SAMPLES {
        return Err(Error::Input(format!(
            "sphere averages need at least {MIN_SPHERE_SAMPLES} samples, got {n_samples}"
        )));
    }
    let n = a.dimension();
    let root_n = (n as f64).sqrt();
    let m = a.entries();
    Ok(sphere_mean(n, n_samples, seed, |u| {
        let mut norm2 = 0.0;
        for i in 0..n {
            let r: f64 = (0..n).map(|j| m[(i, j)] * u[j]).sum();
            norm2 += r * r;
        }
        f_value(root_n * norm2.sqrt())
    }))
}

/// Extremes of `√n ∫|X·u| dσ(u) / |X|` over random directions `X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanWidth {
    pub lower_ratio: f64,
    pub upper_ratio: f64,
    /// Largest standard error among the directions tried.
    pub std_error: f64,
}

pub fn mean_width_constants(n: usize, n_samples: usize, seed: u64) -> Result<MeanWidth> {
    if n == 0 || n_samples == 0 {
        return Err(Error::Input("dimension and sample count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0fd1);
    let root_n = (n as f64).sqrt();
    let mut out = MeanWidth {
        lower_ratio: f64::INFINITY,
        upper_ratio: f64::NEG_INFINITY,
        std_error: 0.0,
    };
    for k in 0..8u64 {
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let est = sphere_mean(n, n_samples, seed.wrapping_add(k), |u| {
            root_n * x.iter().zip(u).map(|(a, b)| a * b).sum::<f64>().abs() / norm
        });
        out.lower_ratio = out.lower_ratio.min(est.value);
        out.upper_ratio = out.upper_ratio.max(est.value);
        out.std_error = out.std_error.max(est.std_error);
    }
    Ok(out)
}

/// `|F(H)v| − ½ √F(|Hv|²)` for a nonnegative symmetric `H` and unit `v`.
pub fn vector_bound_margin(h: &SymmetricMatrix, v: &[f64]) -> Result<f64> {
    if v.len() != h.dimension() {
        return Err(Error::Dimension {
            expected: h.dimension(),
            found: v.len(),
        });
    }
    if h.eigen_floor() < -1e-12 * max_abs(h.entries()).max(1.0) {
        return Err(Error::Domain("H must be nonnegative".into()));
    }
    let v = DVector::from_column_slice(v);
    let fh = matrix_f(h)?;
    let lhs = (fh.entries() * &v).norm();
    let hv = (h.entries() * &v).norm_squared();
    Ok(lhs - 0.5 * f_value(hv).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
        m.qr().q()
    }

    #[test]
    fn matrix_f_examples() {
        let zero = SymmetricMatrix::new(DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(max_abs(matrix_f(&zero).unwrap().entries()), 0.0);
        let d = SymmetricMatrix::from_diagonal(&[1.0, -0.5]).unwrap();
        let fd = matrix_f(&d).unwrap();
        assert_abs_diff_eq!(fd.entries()[(0, 0)], 1.0 - 2f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(fd.entries()[(1, 1)], -0.5 - 0.5f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(fd.entries()[(0, 1)], 0.0, epsilon = 1e-12);
        assert!(matches!(
            matrix_f(&SymmetricMatrix::from_diagonal(&[-1.0, 0.0]).unwrap()),
            Err(Error::Domain(_))
        ));
        assert!(SymmetricMatrix::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn trace_f_examples() {
        let id = SymmetricMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert_abs_diff_eq!(trace_f(&id).unwrap(), 3.0 * (1.0 - 2f64.ln()), epsilon = 1e-12);
        let zero = SymmetricMatrix::new(DMatrix::zeros(4, 4)).unwrap();
        assert_eq!(trace_f(&zero).unwrap(), 0.0);
        let diag = [0.3, -0.7, 4.0, 0.0];
        let a = SymmetricMatrix::from_diagonal(&diag).unwrap();
        let direct: f64 = diag.iter().map(|&t| t - (1.0 + t).ln()).sum();
        assert_abs_diff_eq!(trace_f(&a).unwrap(), direct, epsilon = 1e-14);
    }

    #[test]
    fn matrix_f_commutes_with_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 2..=6 {
            let spec: Vec<f64> = (0..n).map(|_| rng.random_range(-0.9..5.0)).collect();
            let q = random_orthogonal(n, &mut rng);
            let a = SymmetricMatrix::from_spectrum(&q, &spec).unwrap();
            let r = random_orthogonal(n, &mut rng);
            let conj = SymmetricMatrix::new(&r * a.entries() * r.transpose()).unwrap();
            let lhs = matrix_f(&conj).unwrap().entries().clone();
            let rhs = &r * matrix_f(&a).unwrap().entries() * r.transpose();
            assert!(max_abs(&(lhs - rhs)) <= 1e-10);
            let fa = matrix_f(&a).unwrap();
            assert!(fa.eigen_floor() >= -1e-12);
            assert_abs_diff_eq!(trace_f(&a).unwrap(), fa.entries().trace(), epsilon = 1e-10);
        }
    }

    #[test]
    fn trace_f_dominates_trace_at_absolute_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.random_range(2..=6);
            let spec: Vec<f64> = (0..n).map(|_| rng.random_range(-0.99..3.0)).collect();
            let a = SymmetricMatrix::from_spectrum(&random_orthogonal(n, &mut rng), &spec).unwrap();
            let abs = trace_f(&a.abs().unwrap()).unwrap();
            assert!(trace_f(&a).unwrap() >= abs - 1e-12);
        }
    }

    #[test]
    fn sphere_average_examples() {
        let zero = SymmetricMatrix::new(DMatrix::zeros(3, 3)).unwrap();
        let e = sphere_average_f(&zero, 10_000, 1).unwrap();
        assert_eq!((e.value, e.std_error), (0.0, 0.0));
        let one = SymmetricMatrix::new(DMatrix::from_element(1, 1, -0.6)).unwrap();
        let e = sphere_average_f(&one, 10_000, 2).unwrap();
        assert_abs_diff_eq!(e.value, f_value(0.6), epsilon = 1e-14);
        let id = SymmetricMatrix::new(DMatrix::identity(3, 3)).unwrap();
        let e = sphere_average_f(&id, 20_000, 3).unwrap();
        assert_abs_diff_eq!(e.value, f_value(3f64.sqrt()), epsilon = 1e-12);
        assert!(sphere_average_f(&id, 100, 3).is_err());
    }

    #[test]
    fn sphere_average_is_reproducible_and_thread_independent() {
        let a = SymmetricMatrix::from_diagonal(&[0.5, 2.0, -0.3]).unwrap();
        let x = sphere_average_f(&a, 30_000, 11).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let y = pool.install(|| sphere_average_f(&a, 30_000, 11).unwrap());
        assert_eq!(x, y);
        assert_ne!(x.value, sphere_average_f(&a, 30_000, 12).unwrap().value);
    }

    #[test]
    fn mean_width_examples() {
        let w = mean_width_constants(1, 1000, 0).unwrap();
        assert_abs_diff_eq!(w.lower_ratio, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w.upper_ratio, 1.0, epsilon = 1e-14);
        let w = mean_width_constants(2, 100_000, 1).unwrap();
        let oracle = 2.0 * 2f64.sqrt() / std::f64::consts::PI;
        assert!((w.lower_ratio - oracle).abs() < 5.0 * w.std_error + 1e-3);
        assert!((w.upper_ratio - oracle).abs() < 5.0 * w.std_error + 1e-3);
        let w = mean_width_constants(64, 50_000, 2).unwrap();
        let limit = (2.0 / std::f64::consts::PI).sqrt();
        assert!((w.lower_ratio - limit).abs() < 0.01 && (w.upper_ratio - limit).abs() < 0.01);
    }

    #[test]
    fn fact_trace_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for k in 0..40 {
            let n = rng.random_range(2..=8);
            let spec: Vec<f64> = (0..n).map(|_| rng.random_range(-0.9..10.0)).collect();
            let a = SymmetricMatrix::from_spectrum(&random_orthogonal(n, &mut rng), &spec).unwrap();
            let e = sphere_average_f(&a, 10_000, k).unwrap();
            assert!(trace_f(&a).unwrap() >= (e.value - 3.0 * e.std_error) / 8.0);
        }
    }

    #[test]
    fn vector_bound_on_random_nonnegative_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..500 {
            let n = rng.random_range(1..=6);
            let spec: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..20.0)).collect();
            let h = SymmetricMatrix::from_spectrum(&random_orthogonal(n, &mut rng), &spec).unwrap();
            let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            assert!(vector_bound_margin(&h, &v).unwrap() >= -1e-12);
        }
    }
}
