//! One check per inequality: both sides, the margin, and empirical constants.
//!
//! Sign convention: `margin ≥ 0` means the inequality holds, and a report
//! passes iff `margin ≥ −tolerance`. Identities report `margin = −|lhs − rhs|`.

mod battery;
mod checks;
mod scalar;

use std::collections::BTreeMap;

use serde::{Serialize, Serializer};

use crate::measures::Grid;

pub use battery::{constants_table, run_battery, thread_count, ConstantRow};
pub use checks::{
    check_affine_invariance, check_bh, check_bl_variance, check_cheeger_poincare, check_dual_infconv,
    check_equality_characterization, check_fil, check_gaussian_remainder, check_linearization,
    check_mainbound_identity_1d, check_qbl, check_rbl, check_remainder, check_talagrand,
    check_trace, check_translation_invariance, check_transport_entropy, EqualityCandidate,
    EQUALITY_TOLERANCE,
};
pub use scalar::{legendre_suite, negative_control, scalar_inequality_suite};

/// Registered statement ids with a one-line description, in run order.
pub const STATEMENTS: &[(&str, &str)] = &[
    ("prop1", "transport-entropy inequality W_cV <= H"),
    ("thm2", "remainder term: (H - W_cV) / W_N(h|x-y|) > 0 for centered measures"),
    ("mainbound", "1D identity H = int c_V(x,T(x)) + int F(theta'')"),
    ("translation", "H - W_cV is invariant under translations of nu"),
    ("ic", "dual form: int e^{Q(g)} <= e^{int g}"),
    ("talagrand", "(lambda/2) W_2^2 <= H under D^2V >= lambda"),
    ("qT", "Gaussian-type deficit H - (lambda/2) W_2^2 against W_N and min(h^2 W1^2, h W1)"),
    ("fil", "W_1 >= W_{1,1} / sqrt(n) on product grids"),
    ("bl", "Brascamp-Lieb variance inequality"),
    ("rbl", "reinforced Brascamp-Lieb: largest c with [D^2V + c h^2]^{-1}"),
    ("qbl", "Brascamp-Lieb deficit against the distance to extremizers"),
    ("linearization", "W_cV(mu, (1+eps g)mu)/eps^2 against its second-order bound"),
    ("bh", "int F(|f - mean|) <= 192 int F(|f'|/h)"),
    ("affine", "variance and weighted Dirichlet form are affinely invariant"),
    ("equality", "equality H = W_cV exactly for translates under convex V"),
    ("spectral", "Cheeger's inequality lambda >= h^2/4 and the ratio lambda/h^2"),
    ("trace", "tr F(A) >= (1/8) int F(sqrt(n)|Au|) dsigma"),
    ("scalar", "scalar inequalities for F and N"),
    ("legendre", "Legendre-type bound st <= 4F(s) + t^2/16 and a candidate formula for (4F - F'^2)'"),
    ("negative_control", "deliberately false reversed sandwich F <= N/8"),
];

/// Statements run when a config does not name a battery.
pub const DEFAULT_BATTERY: &[&str] = &[
    "prop1",
    "thm2",
    "mainbound",
    "translation",
    "ic",
    "talagrand",
    "qT",
    "fil",
    "bl",
    "rbl",
    "qbl",
    "linearization",
    "bh",
    "affine",
    "equality",
    "spectral",
    "trace",
    "scalar",
];

pub fn is_registered(id: &str) -> bool {
    STATEMENTS.iter().any(|(s, _)| *s == id)
}

pub fn registered_ids() -> Vec<&'static str> {
    STATEMENTS.iter().map(|(s, _)| *s).collect()
}

/// Where the inputs of a report came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Provenance {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub grids: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub measures: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn potential(name: &str) -> Self {
        Self {
            potential: Some(name.to_string()),
            ..Self::default()
        }
    }

    pub fn grid(mut self, grid: &Grid) -> Self {
        self.grids.push(grid_label(grid));
        self
    }

    pub fn measure(mut self, source: &str) -> Self {
        self.measures.push(source.to_string());
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// `[-9,9] x512` style description of a grid.
pub fn grid_label(grid: &Grid) -> String {
    let d = grid.domain();
    let boxes: Vec<String> = d
        .lower
        .iter()
        .zip(&d.upper)
        .map(|(l, u)| format!("[{l},{u}]"))
        .collect();
    let cells: Vec<String> = grid.resolution().iter().map(|r| r.to_string()).collect();
    format!("{} x{}", boxes.join("x"), cells.join("x"))
}

/// Result of one check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub statement_id: String,
    /// Short label of the instance inside the statement.
    pub instance: String,
    #[serde(serialize_with = "sentinel")]
    pub lhs: f64,
    #[serde(serialize_with = "sentinel")]
    pub rhs: f64,
    #[serde(serialize_with = "sentinel")]
    pub margin: f64,
    #[serde(serialize_with = "sentinel")]
    pub tolerance: f64,
    pub pass: bool,
    /// The statement holds for trivial reasons (e.g. `ν = μ`).
    pub vacuous: bool,
    pub inputs: Provenance,
    #[serde(serialize_with = "sentinel_option")]
    pub empirical_constant: Option<f64>,
    #[serde(serialize_with = "sentinel_map", skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl InequalityReport {
    pub fn new(statement_id: &str, instance: impl Into<String>, lhs: f64, rhs: f64, margin: f64, tolerance: f64) -> Self {
        Self {
            statement_id: statement_id.to_string(),
            instance: instance.into(),
            lhs,
            rhs,
            margin,
            tolerance,
            pass: margin >= -tolerance,
            vacuous: false,
            inputs: Provenance::default(),
            empirical_constant: None,
            values: BTreeMap::new(),
            note: None,
        }
    }

    /// `lhs ≤ rhs` with `margin = rhs − lhs`.
    pub fn inequality(statement_id: &str, instance: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self::new(statement_id, instance, lhs, rhs, rhs - lhs, tolerance)
    }

    /// `lhs = rhs` with `margin = −|lhs − rhs|`.
    pub fn identity(statement_id: &str, instance: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self::new(statement_id, instance, lhs, rhs, -(lhs - rhs).abs(), tolerance)
    }

    pub fn with_inputs(mut self, inputs: Provenance) -> Self {
        self.inputs = inputs;
        self
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        self.empirical_constant = Some(c);
        self
    }

    pub fn with_value(mut self, key: impl Into<String>, v: f64) -> Self {
        self.values.insert(key.into(), v);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Marks the instance as trivially satisfied.
    pub fn vacuous(mut self, note: impl Into<String>) -> Self {
        self.vacuous = true;
        self.pass = true;
        self.note = Some(note.into());
        self
    }
}

fn sentinel<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

fn sentinel_option<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => sentinel(x, s),
        None => s.serialize_none(),
    }
}

fn sentinel_map<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    struct Wrap(f64);
    impl Serialize for Wrap {
        fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
            sentinel(&self.0, s)
        }
    }
    let mut map = s.serialize_map(Some(m.len()))?;
    for (k, v) in m {
        map.serialize_entry(k, &Wrap(*v))?;
    }
    map.end()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_follows_margin_and_tolerance() {
        assert!(InequalityReport::inequality("x", "a", 1.0, 1.0 - 1e-7, 1e-6).pass);
        assert!(!InequalityReport::inequality("x", "a", 1.0, 0.9, 1e-6).pass);
        assert!(!InequalityReport::identity("x", "a", 1.0, f64::NAN, 1.0).pass);
        let r = InequalityReport::identity("x", "a", 2.0, 2.5, 1e-3);
        assert_eq!(r.margin, -0.5);
    }

    #[test]
    fn non_finite_values_serialize_as_sentinels() {
        let r = InequalityReport::inequality("x", "a", 0.0, f64::INFINITY, 0.0)
            .with_value("nan", f64::NAN)
            .with_constant(f64::NEG_INFINITY);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["rhs"], "inf");
        assert_eq!(v["margin"], "inf");
        assert_eq!(v["empirical_constant"], "-inf");
        assert_eq!(v["values"]["nan"], "nan");
    }

    #[test]
    fn default_battery_is_registered() {
        assert!(DEFAULT_BATTERY.iter().all(|id| is_registered(id)));
        assert!(!DEFAULT_BATTERY.contains(&"negative_control"));
        let ids = registered_ids();
        let mut sorted = ids.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), ids.len());
    }
}
