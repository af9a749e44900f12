//! Run configuration for inequality batteries.
//!
//! The struct deserializes from TOML or JSON; file parsing is left to the caller.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::costs::CostSpec;
use crate::harness;
use crate::measures::BoxDomain;
use crate::potentials::{Family, PotentialSpec};
use crate::{Error, Result};

/// A one-dimensional potential for the battery, with its truncation box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawPotential")]
pub struct PotentialConfig {
    #[serde(flatten)]
    pub kind: PotentialKind,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    Gaussian {
        #[serde(default = "one")]
        variance: f64,
    },
    QuadraticPlusQuartic {
        a: f64,
        b: f64,
    },
    EvenPower {
        p: f64,
    },
    /// `x²/2 + amplitude · cos(frequency · x)`.
    PerturbedGaussian {
        amplitude: f64,
        frequency: f64,
    },
}

fn one() -> f64 {
    1.0
}

// flatten and deny_unknown_fields do not combine, so the strict form is spelled out
#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawPotential {
    Gaussian {
        #[serde(default = "one")]
        variance: f64,
        half_width: f64,
    },
    QuadraticPlusQuartic {
        a: f64,
        b: f64,
        half_width: f64,
    },
    EvenPower {
        p: f64,
        half_width: f64,
    },
    PerturbedGaussian {
        amplitude: f64,
        frequency: f64,
        half_width: f64,
    },
}

impl From<RawPotential> for PotentialConfig {
    fn from(raw: RawPotential) -> Self {
        let (kind, half_width) = match raw {
            RawPotential::Gaussian { variance, half_width } => (PotentialKind::Gaussian { variance }, half_width),
            RawPotential::QuadraticPlusQuartic { a, b, half_width } => {
                (PotentialKind::QuadraticPlusQuartic { a, b }, half_width)
            }
            RawPotential::EvenPower { p, half_width } => (PotentialKind::EvenPower { p }, half_width),
            RawPotential::PerturbedGaussian {
                amplitude,
                frequency,
                half_width,
            } => (PotentialKind::PerturbedGaussian { amplitude, frequency }, half_width),
        };
        Self { kind, half_width }
    }
}

impl PotentialConfig {
    pub fn build(&self) -> Result<(PotentialSpec, BoxDomain)> {
        if !(self.half_width > 0.0) || !self.half_width.is_finite() {
            return Err(Error::Config(format!("half_width must be positive, got {}", self.half_width)));
        }
        let spec = match &self.kind {
            PotentialKind::Gaussian { variance } => {
                if !(*variance > 0.0) {
                    return Err(Error::Config(format!("variance must be positive, got {variance}")));
                }
                PotentialSpec::new(
                    if *variance == 1.0 {
                        "gaussian1d".to_string()
                    } else {
                        format!("gaussian1d(var={variance})")
                    },
                    1,
                    Family::Gaussian {
                        covariance: vec![vec![*variance]],
                    },
                )?
            }
            PotentialKind::QuadraticPlusQuartic { a, b } => PotentialSpec::quadratic_plus_quartic(*a, *b, 1)?,
            PotentialKind::EvenPower { p } => PotentialSpec::even_power(*p, 1)?,
            PotentialKind::PerturbedGaussian { amplitude, frequency } => {
                PotentialSpec::perturbed(&PotentialSpec::gaussian(1), *amplitude, *frequency)?
            }
        };
        Ok((spec, BoxDomain::symmetric(self.half_width, 1)))
    }
}

/// Transport scale `h` in a configured cost: a number or `"auto"` for `h(μ_V)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scale {
    Value(f64),
    Auto(AutoScale),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoScale {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    Bregman,
    CappedQuadratic,
    Combined,
    Quadratic,
    L1,
    EuclideanP,
}

/// A cost as written in a run config, e.g. `{ cost = "combined", c = 0.05, h = "auto" }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub cost: CostKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Scale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

impl CostConfig {
    /// Resolves the cost for a potential; `auto_h` supplies `h(μ_V)` when `h = "auto"`.
    pub fn resolve(&self, spec: &PotentialSpec, auto_h: impl FnOnce() -> Result<f64>) -> Result<CostSpec> {
        let scale = |h: Option<Scale>, f: Box<dyn FnOnce() -> Result<f64> + '_>| -> Result<f64> {
            match h {
                Some(Scale::Value(v)) if v > 0.0 => Ok(v),
                Some(Scale::Value(v)) => Err(Error::Config(format!("h must be positive, got {v}"))),
                Some(Scale::Auto(_)) | None => f(),
            }
        };
        Ok(match self.cost {
            CostKind::Bregman => CostSpec::Bregman(spec.clone()),
            CostKind::CappedQuadratic => CostSpec::CappedQuadratic {
                scale: scale(self.h, Box::new(auto_h))?,
            },
            CostKind::Combined => {
                let weight = self
                    .c
                    .ok_or_else(|| Error::Config("combined cost needs the constant c".into()))?;
                if !(weight >= 0.0) {
                    return Err(Error::Config(format!("c must be nonnegative, got {weight}")));
                }
                CostSpec::Combined {
                    potential: spec.clone(),
                    scale: scale(self.h, Box::new(auto_h))?,
                    weight,
                }
            }
            CostKind::Quadratic => CostSpec::Quadratic {
                lambda: self.lambda.unwrap_or(1.0),
            },
            CostKind::L1 => CostSpec::L1,
            CostKind::EuclideanP => CostSpec::EuclideanPower { p: self.p.unwrap_or(1.0) },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
    Md,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "md" => Ok(Format::Md),
            _ => Err(Error::Config(format!("unknown format {s:?} (expected json, csv or md)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

/// Everything a battery run depends on. `seed` has no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_battery")]
    pub battery: Vec<String>,
    #[serde(default = "default_potentials")]
    pub potentials: Vec<PotentialConfig>,
    /// Cells of the 1D grids.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Cells per axis of the 2D product grids.
    #[serde(default = "default_resolution_2d")]
    pub resolution_2d: usize,
    /// Random measures (or random test functions) per potential.
    #[serde(default = "default_random")]
    pub random_measures: usize,
    /// Constants `c` tried in the combined cost.
    #[serde(default = "default_c_scan")]
    pub c_scan: Vec<f64>,
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    /// Translation lengths, snapped to the grid.
    #[serde(default = "default_shifts")]
    pub shifts: Vec<f64>,
    /// Width of the comparison measure `∝ e^{−V/σ²}`.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_matrices")]
    pub matrices: usize,
    #[serde(default = "default_sphere_samples")]
    pub sphere_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_battery() -> Vec<String> {
    harness::DEFAULT_BATTERY.iter().map(|s| s.to_string()).collect()
}

fn default_potentials() -> Vec<PotentialConfig> {
    vec![
        PotentialConfig {
            kind: PotentialKind::Gaussian { variance: 1.0 },
            half_width: 9.0,
        },
        PotentialConfig {
            kind: PotentialKind::QuadraticPlusQuartic { a: 1.0, b: 1.0 },
            half_width: 4.5,
        },
        PotentialConfig {
            kind: PotentialKind::PerturbedGaussian {
                amplitude: 2.0,
                frequency: 1.0,
            },
            half_width: 9.0,
        },
    ]
}

fn default_resolution() -> usize {
    512
}
fn default_resolution_2d() -> usize {
    20
}
fn default_random() -> usize {
    4
}
fn default_c_scan() -> Vec<f64> {
    vec![0.01, 0.1, 1.0]
}
fn default_eps() -> Vec<f64> {
    vec![0.1, 0.03, 0.01]
}
fn default_shifts() -> Vec<f64> {
    vec![-0.5, -0.25, 0.25, 0.5]
}
fn default_sigma() -> f64 {
    1.2
}
fn default_matrices() -> usize {
    50
}
fn default_sphere_samples() -> usize {
    10_000
}

impl RunConfig {
    /// Defaults for every field except the seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            battery: default_battery(),
            potentials: default_potentials(),
            resolution: default_resolution(),
            resolution_2d: default_resolution_2d(),
            random_measures: default_random(),
            c_scan: default_c_scan(),
            eps: default_eps(),
            shifts: default_shifts(),
            sigma: default_sigma(),
            matrices: default_matrices(),
            sphere_samples: default_sphere_samples(),
            cost: None,
            output: OutputConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.battery.is_empty() {
            return fail("battery is empty".into());
        }
        for id in &self.battery {
            if !harness::is_registered(id) {
                return fail(format!(
                    "unknown statement id {id:?}; registered ids: {}",
                    harness::registered_ids().join(", ")
                ));
            }
        }
        if self.potentials.is_empty() {
            return fail("no potentials configured".into());
        }
        for p in &self.potentials {
            p.build()?;
        }
        if self.resolution < 8 || self.resolution_2d < 4 {
            return fail("grids need at least 8 cells (1D) and 4 cells per axis (2D)".into());
        }
        if self.eps.is_empty() || self.eps.iter().any(|e| !(*e > 0.0) || *e > 0.5) {
            return fail(format!("eps values must lie in (0, 0.5], got {:?}", self.eps));
        }
        if self.c_scan.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return fail(format!("c_scan values must be finite and nonnegative, got {:?}", self.c_scan));
        }
        if self.shifts.iter().any(|v| !v.is_finite()) {
            return fail("shifts must be finite".into());
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return fail(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.sphere_samples < crate::matrixfn::MIN_SPHERE_SAMPLES {
            return fail(format!(
                "sphere_samples must be at least {}",
                crate::matrixfn::MIN_SPHERE_SAMPLES
            ));
        }
        if let Some(c) = &self.cost {
            if c.cost == CostKind::Combined && c.c.is_none() {
                return fail("combined cost needs the constant c".into());
            }
        }
        Ok(())
    }

    /// A copy of this config with one sweep parameter set to `value`.
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> Result<RunConfig> {
        let mut out = self.clone();
        match parameter {
            SweepParameter::Eps => out.eps = vec![value],
            SweepParameter::C => {
                out.c_scan = vec![value];
                if let Some(cost) = out.cost.as_mut() {
                    cost.c = Some(value);
                }
            }
            SweepParameter::V => out.shifts = vec![value],
            SweepParameter::Sigma => out.sigma = value,
            SweepParameter::Resolution => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::Config(format!("resolution must be a positive integer, got {value}")));
                }
                out.resolution = value as usize;
            }
        }
        out.validate()?;
        Ok(out)
    }
}

/// Parameters accepted by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Eps,
    C,
    V,
    Sigma,
    Resolution,
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eps" => Ok(Self::Eps),
            "c" => Ok(Self::C),
            "v" => Ok(Self::V),
            "sigma" => Ok(Self::Sigma),
            "resolution" => Ok(Self::Resolution),
            _ => Err(Error::Config(format!(
                "unknown sweep parameter {s:?} (expected eps, c, v, sigma or resolution)"
            ))),
        }
    }
}

impl std::fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Eps => "eps",
            Self::C => "c",
            Self::V => "v",
            Self::Sigma => "sigma",
            Self::Resolution => "resolution",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_config_with_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 3}"#).unwrap();
        assert_eq!(cfg, RunConfig::with_seed(3));
        cfg.validate().unwrap();
        let round: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(round, cfg);
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(serde_json::from_str::<RunConfig>("{}").is_err());
        let typo = r#"{"seed": 1, "potentials": [{"kind": "gaussian", "half_width": 9, "varience": 2}]}"#;
        assert!(serde_json::from_str::<RunConfig>(typo).is_err());
    }

    #[test]
    fn cost_config_resolves_auto_scale() {
        let c: CostConfig = serde_json::from_str(r#"{"cost": "combined", "c": 0.05, "h": "auto"}"#).unwrap();
        let spec = PotentialSpec::gaussian(1);
        match c.resolve(&spec, || Ok(0.8)).unwrap() {
            CostSpec::Combined { scale, weight, .. } => assert_eq!((scale, weight), (0.8, 0.05)),
            other => panic!("unexpected {other:?}"),
        }
        let fixed: CostConfig = serde_json::from_str(r#"{"cost": "capped_quadratic", "h": 2.0}"#).unwrap();
        assert!(matches!(
            fixed.resolve(&spec, || unreachable!()).unwrap(),
            CostSpec::CappedQuadratic { scale } if scale == 2.0
        ));
        let bad: CostConfig = serde_json::from_str(r#"{"cost": "combined"}"#).unwrap();
        assert!(bad.resolve(&spec, || Ok(1.0)).is_err());
        assert!(serde_json::from_str::<CostConfig>(r#"{"cost": "combined", "h": "sometimes"}"#).is_err());
    }

    #[test]
    fn validation_rejects_bad_batteries() {
        let mut cfg = RunConfig::with_seed(1);
        cfg.battery.clear();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.battery = vec!["no_such_statement".into()];
        assert!(cfg.validate().is_err());
        cfg.battery = vec!["prop1".into()];
        cfg.eps = vec![0.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sweep_parameters() {
        let cfg = RunConfig::with_seed(1);
        assert_eq!(cfg.with_parameter(SweepParameter::Eps, 0.03).unwrap().eps, vec![0.03]);
        assert_eq!(cfg.with_parameter(SweepParameter::Resolution, 256.0).unwrap().resolution, 256);
        assert!(cfg.with_parameter(SweepParameter::Resolution, 25.5).is_err());
        assert!("width".parse::<SweepParameter>().is_err());
        assert_eq!("sigma".parse::<SweepParameter>().unwrap(), SweepParameter::Sigma);
    }
}
