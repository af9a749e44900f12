//! Manifests, CSV tables and markdown summaries.

use serde::Serialize;
use sha2::{Digest, Sha256};
use til_core::config::RunConfig;
use til_core::harness::{ConstantRow, InequalityReport};

/// Record of one battery run. Contains no timestamps, so identical inputs
/// give identical bytes.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub config_hash: String,
    pub seed: u64,
    pub config: &'a RunConfig,
    pub passed: usize,
    pub failed: usize,
    pub reports: &'a [InequalityReport],
    pub summary: String,
}

/// SHA-256 of the canonical JSON of the config, output settings excluded.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut canonical = cfg.clone();
    canonical.output = Default::default();
    let bytes = serde_json::to_vec(&canonical).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

impl<'a> Manifest<'a> {
    pub fn new(cfg: &'a RunConfig, reports: &'a [InequalityReport]) -> Self {
        let failed = reports.iter().filter(|r| !r.pass).count();
        Self {
            config_hash: config_hash(cfg),
            seed: cfg.seed,
            config: cfg,
            passed: reports.len() - failed,
            failed,
            reports,
            summary: markdown_summary(reports),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6e}")
    } else {
        v.to_string()
    }
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|")
}

pub fn markdown_summary(reports: &[InequalityReport]) -> String {
    let mut out = String::from("| statement | instance | margin | pass |\n|---|---|---|---|\n");
    for r in reports {
        let pass = match (r.pass, r.vacuous) {
            (true, true) => "pass (vacuous)",
            (true, false) => "pass",
            _ => "FAIL",
        };
        out.push_str(&format!("| {} | {} | {} | {} |\n", r.statement_id, cell(&r.instance), fmt(r.margin), pass));
    }
    out
}

fn csv_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        v.to_string()
    }
}

fn optional(v: Option<f64>) -> String {
    v.map(csv_float).unwrap_or_default()
}

pub const REPORT_COLUMNS: [&str; 9] = [
    "statement_id",
    "instance",
    "lhs",
    "rhs",
    "margin",
    "tolerance",
    "pass",
    "vacuous",
    "empirical_constant",
];

pub fn reports_csv(reports: &[InequalityReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_COLUMNS).expect("in-memory write");
    for r in reports {
        w.write_record([
            r.statement_id.clone(),
            r.instance.clone(),
            csv_float(r.lhs),
            csv_float(r.rhs),
            csv_float(r.margin),
            csv_float(r.tolerance),
            r.pass.to_string(),
            r.vacuous.to_string(),
            optional(r.empirical_constant),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub const SWEEP_COLUMNS: [&str; 6] = ["value", "statement_id", "instance", "margin", "empirical_constant", "pass"];

pub fn sweep_csv(rows: &[(f64, Vec<InequalityReport>)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_COLUMNS).expect("in-memory write");
    for (value, reports) in rows {
        for r in reports {
            w.write_record([
                csv_float(*value),
                r.statement_id.clone(),
                r.instance.clone(),
                csv_float(r.margin),
                optional(r.empirical_constant),
                r.pass.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[derive(Debug, Serialize)]
pub struct ConstantsTable<'a> {
    pub config_hash: String,
    pub seed: u64,
    pub constants: &'a [ConstantRow],
}

pub fn constants_csv(rows: &[ConstantRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "value", "lower", "upper", "instances", "description"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.name.clone(),
            csv_float(r.value),
            csv_float(r.lower),
            csv_float(r.upper),
            r.instances.to_string(),
            r.description.clone(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn constants_markdown(rows: &[ConstantRow]) -> String {
    let mut out = String::from("| constant | value | range | instances | description |\n|---|---|---|---|---|\n");
    for r in rows {
        out.push_str(&format!(
            "| {} | {} | [{}, {}] | {} | {} |\n",
            r.name,
            fmt(r.value),
            fmt(r.lower),
            fmt(r.upper),
            r.instances,
            cell(&r.description)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_output_settings() {
        let a = RunConfig::with_seed(1);
        let mut b = a.clone();
        b.output.path = Some("x.json".into());
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), config_hash(&RunConfig::with_seed(2)));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn csv_quotes_commas_and_writes_sentinels() {
        let r = InequalityReport::inequality("x", "a, b", 0.0, f64::INFINITY, 0.0);
        let csv = reports_csv(&[r]);
        let line = csv.lines().nth(1).unwrap();
        assert_eq!(line, "x,\"a, b\",0,inf,inf,0,true,false,");
    }
}
