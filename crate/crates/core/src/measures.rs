//! Uniform tensor grids and the discrete measures and functions living on them.
//!
//! A [`GridMeasure`] puts one weight on each cell center of a cell-centered grid.
//! All integrals are midpoint-rule sums over the cells; there is no adaptive
//! quadrature anywhere in the crate, so identities between functionals hold up
//! to rounding relative to one another.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::potentials::{PotentialSpec, TRUNCATION_BUDGET};
use crate::{Error, Result};

/// Largest mass a translation may push out of the grid.
pub const TRANSLATION_LOSS_BUDGET: f64 = 1e-10;

/// An axis-aligned box `Π [lower_k, upper_k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Input("box bounds must be non-empty and of equal length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::Input(format!("degenerate box {lower:?} .. {upper:?}")));
        }
        Ok(Self { lower, upper })
    }

    /// The cube `[-half_width, half_width]^dimension`.
    pub fn symmetric(half_width: f64, dimension: usize) -> Self {
        Self {
            lower: vec![-half_width; dimension],
            upper: vec![half_width; dimension],
        }
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }
}

/// Cell-centered uniform tensor grid. Flat indices are row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    lower: Vec<f64>,
    upper: Vec<f64>,
    resolution: Vec<usize>,
}

impl Grid {
    /// Grid with `resolution` cells along every axis of `domain`.
    pub fn new(domain: &BoxDomain, resolution: usize) -> Result<Self> {
        Self::with_resolution(domain, vec![resolution; domain.dimension()])
    }

    pub fn with_resolution(domain: &BoxDomain, resolution: Vec<usize>) -> Result<Self> {
        let domain = BoxDomain::new(domain.lower.clone(), domain.upper.clone())?;
        if resolution.len() != domain.dimension() {
            return Err(Error::Input("one resolution per axis is required".into()));
        }
        if resolution.iter().any(|&r| r < 2) {
            return Err(Error::Input(format!(
                "degenerate grid: resolution {resolution:?} (need >= 2 cells per axis)"
            )));
        }
        Ok(Self {
            lower: domain.lower,
            upper: domain.upper,
            resolution,
        })
    }

    pub fn domain(&self) -> BoxDomain {
        BoxDomain {
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.resolution.len()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / self.resolution[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dimension()).map(|a| self.spacing(a)).product()
    }

    /// Center of cell `k` along `axis`.
    pub fn coordinate(&self, axis: usize, k: usize) -> f64 {
        self.lower[axis] + (k as f64 + 0.5) * self.spacing(axis)
    }

    /// Stride of `axis` in the flat row-major layout.
    pub fn stride(&self, axis: usize) -> usize {
        self.resolution[axis + 1..].iter().product()
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dimension()];
        let mut rest = flat;
        for a in (0..self.dimension()).rev() {
            idx[a] = rest % self.resolution[a];
            rest /= self.resolution[a];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.resolution)
            .fold(0, |acc, (&i, &r)| acc * r + i)
    }

    pub fn write_point(&self, flat: usize, out: &mut [f64]) {
        let mut rest = flat;
        for a in (0..self.dimension()).rev() {
            let k = rest % self.resolution[a];
            rest /= self.resolution[a];
            out[a] = self.coordinate(a, k);
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.dimension()];
        self.write_point(flat, &mut p);
        p
    }

    /// All cell centers, flattened (`len × dimension`).
    pub fn points_flat(&self) -> Vec<f64> {
        let d = self.dimension();
        let mut out = vec![0.0; self.len() * d];
        for i in 0..self.len() {
            self.write_point(i, &mut out[i * d..(i + 1) * d]);
        }
        out
    }

    /// Cell centers along one axis.
    pub fn axis_coordinates(&self, axis: usize) -> Vec<f64> {
        (0..self.resolution[axis])
            .map(|k| self.coordinate(axis, k))
            .collect()
    }

    /// True when the cell touches the boundary of the box.
    pub fn is_boundary(&self, flat: usize) -> bool {
        self.multi_index(flat)
            .iter()
            .zip(&self.resolution)
            .any(|(&i, &r)| i == 0 || i + 1 == r)
    }

    /// Geometric identity up to 1e-12 in the bounds.
    pub fn same_as(&self, other: &Grid) -> bool {
        self.resolution == other.resolution
            && self
                .lower
                .iter()
                .chain(&self.upper)
                .zip(other.lower.iter().chain(&other.upper))
                .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
    }

    fn ensure_same(&self, other: &Grid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::Grid(format!(
                "grids differ: {:?}x{:?}..{:?} vs {:?}x{:?}..{:?}",
                self.resolution, self.lower, self.upper, other.resolution, other.lower, other.upper
            )))
        }
    }
}

/// A probability measure with one atom per grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    grid: Grid,
    points: Vec<f64>,
    weights: Vec<f64>,
    source: String,
}

impl GridMeasure {
    /// Normalizes nonnegative weights into a probability measure.
    pub fn from_weights(grid: Grid, weights: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::Grid(format!(
                "{} weights for a grid of {} cells",
                weights.len(),
                grid.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Input(format!("invalid weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Input("weights have zero total mass".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            points: grid.points_flat(),
            grid,
            weights,
            source: source.into(),
        })
    }

    /// Measure with weights proportional to `exp(log_density(x_i))`, computed stably.
    pub fn from_log_density<F>(grid: Grid, log_density: F, source: impl Into<String>) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        let d = grid.dimension();
        let points = grid.points_flat();
        let logs: Vec<f64> = points.chunks(d).map(&log_density).collect();
        if logs.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(Error::Input("log-density is NaN or +inf on the grid".into()));
        }
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::Input("log-density is -inf everywhere".into()));
        }
        let weights = logs.iter().map(|l| (l - max).exp()).collect();
        Self::from_weights(grid, weights, source)
    }

    /// Centered Gaussian `N(mean, diag(std²))` restricted to the grid (synthetic target).
    pub fn gaussian(grid: Grid, mean: &[f64], std: &[f64]) -> Result<Self> {
        if mean.len() != grid.dimension() || std.len() != grid.dimension() {
            return Err(Error::Dimension {
                expected: grid.dimension(),
                found: mean.len(),
            });
        }
        let source = format!("synthetic:normal(mean={mean:?},std={std:?})");
        let (m, s) = (mean.to_vec(), std.to_vec());
        Self::from_log_density(
            grid,
            move |x| {
                -0.5 * x
                    .iter()
                    .zip(&m)
                    .zip(&s)
                    .map(|((x, m), s)| ((x - m) / s).powi(2))
                    .sum::<f64>()
            },
            source,
        )
    }

    /// Unit mass on a single cell.
    pub fn point_mass(grid: Grid, index: usize) -> Result<Self> {
        if index >= grid.len() {
            return Err(Error::Input(format!("cell {index} outside grid")));
        }
        let mut w = vec![0.0; grid.len()];
        w[index] = 1.0;
        Self::from_weights(grid, w, format!("synthetic:point_mass({index})"))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.grid.dimension()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dimension();
        &self.points[i * d..(i + 1) * d]
    }

    /// Flattened cell centers (`len × dimension`).
    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    /// Midpoint-rule expectation of `f`.
    pub fn expect<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        (0..self.len())
            .filter(|&i| self.weights[i] > 0.0)
            .map(|i| self.weights[i] * f(self.point(i)))
            .sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.dimension();
        let mut m = vec![0.0; d];
        for (i, w) in self.weights.iter().enumerate() {
            for (a, mk) in m.iter_mut().enumerate() {
                *mk += w * self.points[i * d + a];
            }
        }
        m
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    /// Writes the CSV layout: header lines, then one weight per line in row-major order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        writeln!(out, "# til-grid-measure v1")?;
        writeln!(out, "dimension,{}", self.dimension())?;
        writeln!(out, "lower,{}", join(&self.grid.lower))?;
        writeln!(out, "upper,{}", join(&self.grid.upper))?;
        writeln!(
            out,
            "resolution,{}",
            self.grid
                .resolution
                .iter()
                .map(|r| r.to_string())
                .collect::<Vec<_>>()
                .join(",")
        )?;
        writeln!(out, "source,{}", self.source.replace('\n', " "))?;
        writeln!(out, "weights")?;
        for w in &self.weights {
            writeln!(out, "{w}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let bad = |m: &str| Error::Input(format!("grid measure csv: {m}"));
        let mut lines = input.lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| bad("unexpected end of input"))?
                .map_err(|e| bad(&e.to_string()))
        };
        if next()?.trim() != "# til-grid-measure v1" {
            return Err(bad("missing magic line"));
        }
        let field = |line: String, key: &str| -> Result<Vec<String>> {
            let mut parts = line.trim().split(',').map(str::to_string);
            if parts.next().as_deref() != Some(key) {
                return Err(bad(&format!("expected `{key}`")));
            }
            Ok(parts.collect())
        };
        let floats = |v: Vec<String>| -> Result<Vec<f64>> {
            v.iter()
                .map(|s| s.parse::<f64>().map_err(|e| bad(&e.to_string())))
                .collect()
        };
        let dimension: usize = field(next()?, "dimension")?
            .first()
            .ok_or_else(|| bad("dimension"))?
            .parse()
            .map_err(|_| bad("dimension"))?;
        let lower = floats(field(next()?, "lower")?)?;
        let upper = floats(field(next()?, "upper")?)?;
        let resolution = field(next()?, "resolution")?
            .iter()
            .map(|s| s.parse::<usize>().map_err(|_| bad("resolution")))
            .collect::<Result<Vec<_>>>()?;
        let line = next()?;
        let source = line
            .strip_prefix("source,")
            .ok_or_else(|| bad("expected `source`"))?
            .to_string();
        if next()?.trim() != "weights" {
            return Err(bad("expected `weights`"));
        }
        if lower.len() != dimension {
            return Err(bad("dimension does not match bounds"));
        }
        let grid = Grid::with_resolution(&BoxDomain::new(lower, upper)?, resolution)?;
        let mut weights = Vec::with_capacity(grid.len());
        for line in lines {
            let line = line.map_err(|e| bad(&e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            weights.push(line.trim().parse::<f64>().map_err(|e| bad(&e.to_string()))?);
        }
        Self::raw(grid, weights, source)
    }

    /// Little-endian binary layout: magic, dimension, bounds, resolution, source, weights.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + 8 * self.len());
        out.extend_from_slice(b"TILGM001");
        out.extend_from_slice(&(self.dimension() as u32).to_le_bytes());
        for v in self.grid.lower.iter().chain(&self.grid.upper) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for r in &self.grid.resolution {
            out.extend_from_slice(&(*r as u64).to_le_bytes());
        }
        out.extend_from_slice(&(self.source.len() as u32).to_le_bytes());
        out.extend_from_slice(self.source.as_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Input(format!("grid measure binary: {m}"));
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated"))?;
            pos += n;
            Ok(s)
        };
        if take(8)? != b"TILGM001" {
            return Err(bad("bad magic"));
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
        let f64_at = |s: &[u8]| f64::from_le_bytes(s.try_into().unwrap());
        let dim = u32_at(take(4)?) as usize;
        if dim == 0 || dim > 16 {
            return Err(bad("implausible dimension"));
        }
        let mut bounds = Vec::with_capacity(2 * dim);
        for _ in 0..2 * dim {
            bounds.push(f64_at(take(8)?));
        }
        let mut resolution = Vec::with_capacity(dim);
        for _ in 0..dim {
            resolution.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
        }
        let slen = u32_at(take(4)?) as usize;
        let source = String::from_utf8(take(slen)?.to_vec()).map_err(|_| bad("source is not utf-8"))?;
        let upper = bounds.split_off(dim);
        let grid = Grid::with_resolution(&BoxDomain::new(bounds, upper)?, resolution)?;
        let n = grid.len();
        let mut weights = Vec::with_capacity(n);
        for _ in 0..n {
            weights.push(f64_at(take(8)?));
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Self::raw(grid, weights, source)
    }

    /// Rebuilds a measure from already-normalized weights without rescaling them.
    fn raw(grid: Grid, weights: Vec<f64>, source: String) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::Grid("weight count does not match the grid".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Input("invalid weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Input(format!("weights sum to {total}, not 1")));
        }
        Ok(Self {
            points: grid.points_flat(),
            grid,
            weights,
            source,
        })
    }
}

/// Values (and central-difference gradients) of a function on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
    gradient: Option<Vec<f64>>,
}

impl GridFunction {
    /// Samples `f` at the cell centers and attaches its finite-difference gradient.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: &Grid, f: F) -> Self {
        let d = grid.dimension();
        let pts = grid.points_flat();
        let values = pts.chunks(d).map(f).collect();
        Self::from_values(grid, values).expect("length matches by construction")
    }

    /// Wraps values and computes central differences (one-sided at the boundary).
    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        let mut g = Self::values_only(grid, values)?;
        g.gradient = Some(finite_difference_gradient(grid, &g.values));
        Ok(g)
    }

    pub fn values_only(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
            gradient: None,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Flattened gradients (`len × dimension`), when present.
    pub fn gradient_flat(&self) -> Option<&[f64]> {
        self.gradient.as_deref()
    }

    /// Gradient at cell `i`; computes finite differences lazily when absent.
    pub fn gradient_at(&self, i: usize) -> Vec<f64> {
        let d = self.grid.dimension();
        match &self.gradient {
            Some(g) => g[i * d..(i + 1) * d].to_vec(),
            None => {
                let g = finite_difference_gradient(&self.grid, &self.values);
                g[i * d..(i + 1) * d].to_vec()
            }
        }
    }

    /// Pointwise map of the values; the gradient is recomputed.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self::from_values(&self.grid, self.values.iter().map(|&v| f(v)).collect())
            .expect("same grid")
    }

    /// `g − Σ g_i μ_i`.
    pub fn centered(&self, mu: &GridMeasure) -> Result<Self> {
        self.grid.ensure_same(mu.grid())?;
        let mean = mean_of(mu, self);
        Ok(self.map(|v| v - mean))
    }

    pub fn ensure_grid(&self, grid: &Grid) -> Result<()> {
        self.grid.ensure_same(grid)
    }
}

/// Central differences along each axis, one-sided at the two ends.
pub fn finite_difference_gradient(grid: &Grid, values: &[f64]) -> Vec<f64> {
    let d = grid.dimension();
    let n = grid.len();
    let mut out = vec![0.0; n * d];
    for a in 0..d {
        let stride = grid.stride(a);
        let r = grid.resolution()[a];
        let s = grid.spacing(a);
        for i in 0..n {
            let k = (i / stride) % r;
            out[i * d + a] = if k == 0 {
                (values[i + stride] - values[i]) / s
            } else if k + 1 == r {
                (values[i] - values[i - stride]) / s
            } else {
                (values[i + stride] - values[i - stride]) / (2.0 * s)
            };
        }
    }
    out
}

fn mean_of(mu: &GridMeasure, g: &GridFunction) -> f64 {
    mu.weights().iter().zip(g.values()).map(|(w, v)| w * v).sum()
}

/// `μ_V` restricted to a grid on `domain`, weights `∝ e^{-V(x_i)}`.
pub fn discretize(spec: &PotentialSpec, domain: &BoxDomain, resolution: usize) -> Result<GridMeasure> {
    if domain.dimension() != spec.dimension {
        return Err(Error::Dimension {
            expected: spec.dimension,
            found: domain.dimension(),
        });
    }
    if resolution < 2 {
        return Err(Error::Input(format!(
            "degenerate grid: resolution {resolution} (need >= 2)"
        )));
    }
    let grid = Grid::new(domain, resolution)?;
    let d = grid.dimension();
    let pts = grid.points_flat();
    let mut logs = Vec::with_capacity(grid.len());
    for x in pts.chunks(d) {
        let v = spec.value(x);
        if !v.is_finite() {
            return Err(Error::Oracle {
                oracle: "value",
                x: x.to_vec(),
            });
        }
        logs.push(-v);
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    if weights.contains(&0.0) {
        return Err(Error::Input(format!(
            "density of {} underflows on the grid; shrink the domain",
            spec.name
        )));
    }
    let total: f64 = weights.iter().sum();
    let boundary: f64 = (0..grid.len())
        .filter(|&i| grid.is_boundary(i))
        .map(|i| weights[i])
        .sum();
    let fraction = boundary / total;
    if !(fraction <= TRUNCATION_BUDGET) {
        return Err(Error::Truncation {
            fraction,
            budget: TRUNCATION_BUDGET,
        });
    }
    GridMeasure::from_weights(grid, weights, spec.name.clone())
}

/// Relative entropy `Σ ν_i log(ν_i / μ_i)`; `+∞` when `ν` charges a cell `μ` does not.
pub fn relative_entropy(nu: &GridMeasure, mu: &GridMeasure) -> Result<f64> {
    nu.grid.ensure_same(&mu.grid)?;
    let mut h = 0.0;
    for (&n, &m) in nu.weights.iter().zip(&mu.weights) {
        if n == 0.0 {
            continue;
        }
        if m == 0.0 {
            return Ok(f64::INFINITY);
        }
        h += n * (n / m).ln();
    }
    Ok(h)
}

/// Mean vector and covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

pub fn moments(mu: &GridMeasure) -> Moments {
    let d = mu.dimension();
    let mean = mu.mean();
    let mut cov = DMatrix::zeros(d, d);
    for (i, &w) in mu.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let x = mu.point(i);
        for a in 0..d {
            for b in 0..d {
                cov[(a, b)] += w * (x[a] - mean[a]) * (x[b] - mean[b]);
            }
        }
    }
    Moments {
        mean,
        covariance: cov,
    }
}

/// Number of cells a shift of `v` spans along each axis, or an alignment error.
pub fn shift_in_cells(grid: &Grid, v: &[f64]) -> Result<Vec<i64>> {
    if v.len() != grid.dimension() {
        return Err(Error::Dimension {
            expected: grid.dimension(),
            found: v.len(),
        });
    }
    v.iter()
        .enumerate()
        .map(|(a, &va)| {
            let s = grid.spacing(a);
            let k = (va / s).round();
            if !va.is_finite() || (va / s - k).abs() > 1e-9 * k.abs().max(1.0) {
                Err(Error::Alignment {
                    component: a,
                    value: va,
                    spacing: s,
                })
            } else {
                Ok(k as i64)
            }
        })
        .collect()
}

fn shift_cells(mu: &GridMeasure, cells: &[i64]) -> Result<GridMeasure> {
    let grid = &mu.grid;
    if cells.iter().all(|&k| k == 0) {
        return Ok(mu.clone());
    }
    let n = grid.len();
    let mut shifted = vec![0.0; n];
    let mut lost = 0.0;
    for (i, &w) in mu.weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let idx = grid.multi_index(i);
        let target: Option<Vec<usize>> = idx
            .iter()
            .zip(cells)
            .zip(grid.resolution())
            .map(|((&k, &c), &r)| {
                let t = k as i64 + c;
                (t >= 0 && t < r as i64).then_some(t as usize)
            })
            .collect();
        match target {
            Some(t) => shifted[grid.flat_index(&t)] = w,
            None => lost += w,
        }
    }
    if lost > TRANSLATION_LOSS_BUDGET {
        return Err(Error::MassLoss {
            lost,
            budget: TRANSLATION_LOSS_BUDGET,
        });
    }
    if lost > 0.0 {
        let kept: f64 = shifted.iter().sum();
        shifted.iter_mut().for_each(|w| *w /= kept);
    }
    Ok(GridMeasure {
        grid: grid.clone(),
        points: mu.points.clone(),
        weights: shifted,
        source: format!("translate({}, {cells:?} cells)", mu.source),
    })
}

/// Translation `T_v μ` by a grid-aligned vector `v`.
pub fn translate(mu: &GridMeasure, v: &[f64]) -> Result<GridMeasure> {
    let cells = shift_in_cells(&mu.grid, v)?;
    shift_cells(mu, &cells)
}

/// `(1 + ε g) μ` for a `μ`-centered `g`.
pub fn perturb(mu: &GridMeasure, g: &GridFunction, eps: f64) -> Result<GridMeasure> {
    g.grid.ensure_same(&mu.grid)?;
    let scale = g.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mean = mean_of(mu, g);
    if mean.abs() > 1e-10 * scale {
        return Err(Error::Perturbation(format!(
            "g is not centered: ∫g dμ = {mean:e}"
        )));
    }
    let mut weights = Vec::with_capacity(mu.len());
    for (i, (&w, &gv)) in mu.weights.iter().zip(&g.values).enumerate() {
        let factor = 1.0 + eps * gv;
        if !(factor > 0.0) {
            return Err(Error::Perturbation(format!(
                "1 + εg = {factor} is not positive at cell {i}"
            )));
        }
        weights.push(w * factor);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(GridMeasure {
        grid: mu.grid.clone(),
        points: mu.points.clone(),
        weights,
        source: format!("perturb({}, eps={eps})", mu.source),
    })
}

/// Outcome of [`recenter`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recentering {
    pub shift: Vec<f64>,
    pub shift_cells: Vec<i64>,
    /// `mean(recentered ν) − mean(μ)` per axis.
    pub residual: Vec<f64>,
}

/// Translates `ν` by the grid-rounded vector `∫x dμ − ∫x dν`.
pub fn recenter(nu: &GridMeasure, mu: &GridMeasure) -> Result<(GridMeasure, Recentering)> {
    nu.grid.ensure_same(&mu.grid)?;
    let (mn, mm) = (nu.mean(), mu.mean());
    let cells: Vec<i64> = (0..nu.dimension())
        .map(|a| ((mm[a] - mn[a]) / nu.grid.spacing(a)).round() as i64)
        .collect();
    let out = shift_cells(nu, &cells)?;
    let shift = cells
        .iter()
        .enumerate()
        .map(|(a, &k)| k as f64 * nu.grid.spacing(a))
        .collect();
    let mo = out.mean();
    let residual = mo.iter().zip(&mm).map(|(a, b)| a - b).collect();
    Ok((
        out,
        Recentering {
            shift,
            shift_cells: cells,
            residual,
        },
    ))
}

/// `Var_μ(g) = Σ (g_i − ∫g dμ)² μ_i`.
pub fn variance_of(mu: &GridMeasure, g: &GridFunction) -> Result<f64> {
    g.grid.ensure_same(&mu.grid)?;
    let mean = mean_of(mu, g);
    Ok(mu
        .weights
        .iter()
        .zip(&g.values)
        .map(|(w, v)| w * (v - mean) * (v - mean))
        .sum())
}
