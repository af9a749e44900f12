//! `til`: run transport-entropy inequality batteries from the command line.
//!
//! Exit codes: 0 when every check passes, 1 when any check fails, 2 on errors.

mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use til_core::config::{Format, RunConfig, SweepParameter};
use til_core::harness::{constants_table, run_battery, InequalityReport};

use output::{config_hash, constants_csv, constants_markdown, reports_csv, sweep_csv, ConstantsTable, Manifest};

#[derive(Debug, Parser)]
#[command(name = "til", version, about = "Numerical checks of transport-entropy inequalities")]
struct Cli {
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated statement ids; overrides the config.
    #[arg(long, global = true, value_delimiter = ',')]
    battery: Option<Vec<String>>,
    /// Output file (a directory for `sweep`). Standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// json, csv or md.
    #[arg(long, global = true)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the battery and write a manifest.
    Verify,
    /// Run the battery once per value of a parameter (eps, c, v, sigma, resolution).
    Sweep {
        parameter: String,
        /// Comma-separated values.
        #[arg(allow_hyphen_values = true)]
        values: String,
    },
    /// Aggregate the empirical constants over the battery.
    Constants,
    /// List the registered statement ids.
    List,
}

type CliResult<T> = Result<T, String>;

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
            let mut value: serde_json::Value = match ext {
                "json" => serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?,
                _ => toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?,
            };
            if let (Some(seed), Some(map)) = (cli.seed, value.as_object_mut()) {
                map.insert("seed".into(), seed.into());
            }
            serde_json::from_value(value).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => RunConfig::with_seed(cli.seed.ok_or("no config given; pass --config PATH or --seed N")?),
    };
    if let Some(battery) = &cli.battery {
        cfg.battery = battery.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    if let Some(out) = &cli.out {
        cfg.output.path = Some(out.clone());
    }
    if let Some(format) = cli.format {
        cfg.output.format = format;
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
            }
            fs::write(p, text).map_err(|e| format!("cannot write {}: {e}", p.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cfg: &RunConfig) -> CliResult<Vec<InequalityReport>> {
    run_battery(cfg).map_err(|e| e.to_string())
}

fn render(cfg: &RunConfig, reports: &[InequalityReport]) -> String {
    match cfg.output.format {
        Format::Json => Manifest::new(cfg, reports).to_json(),
        Format::Csv => reports_csv(reports),
        Format::Md => output::markdown_summary(reports),
    }
}

fn status(reports: &[InequalityReport]) -> u8 {
    u8::from(reports.iter().any(|r| !r.pass))
}

fn verify(cfg: &RunConfig) -> CliResult<u8> {
    let reports = run(cfg)?;
    emit(cfg.output.path.as_deref(), &render(cfg, &reports))?;
    let failed = reports.iter().filter(|r| !r.pass).count();
    eprintln!("{} checks, {} failed", reports.len(), failed);
    for r in reports.iter().filter(|r| !r.pass) {
        eprintln!("FAIL {} [{}]: margin {:e}", r.statement_id, r.instance, r.margin);
    }
    Ok(status(&reports))
}

fn parse_values(list: &str) -> CliResult<Vec<f64>> {
    let values = list
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("invalid sweep value {v:?}: {e}")))
        .collect::<CliResult<Vec<f64>>>()?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err("sweep values must be finite".into());
    }
    Ok(values)
}

fn sweep(cfg: &RunConfig, parameter: &str, values: &str) -> CliResult<u8> {
    let parameter: SweepParameter = parameter.parse().map_err(|e: til_core::Error| e.to_string())?;
    let values = parse_values(values)?;
    let dir = cfg
        .output
        .path
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("sweep_{parameter}")));
    fs::create_dir_all(&dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let mut rows = Vec::with_capacity(values.len());
    for &v in &values {
        let c = cfg.with_parameter(parameter, v).map_err(|e| e.to_string())?;
        let reports = run(&c)?;
        let file = dir.join(format!("{parameter}={v}.json"));
        emit(Some(&file), &Manifest::new(&c, &reports).to_json())?;
        rows.push((v, reports));
    }
    let csv = sweep_csv(&rows);
    emit(Some(&dir.join("sweep.csv")), &csv)?;
    if cfg.output.path.is_none() {
        print!("{csv}");
    }
    let all: Vec<InequalityReport> = rows.into_iter().flat_map(|(_, r)| r).collect();
    Ok(status(&all))
}

fn constants(cfg: &RunConfig) -> CliResult<u8> {
    let reports = run(cfg)?;
    let rows = constants_table(&reports);
    if rows.is_empty() {
        return Err("the battery produced no empirical constants".into());
    }
    let text = match cfg.output.format {
        Format::Json => {
            let table = ConstantsTable {
                config_hash: config_hash(cfg),
                seed: cfg.seed,
                constants: &rows,
            };
            serde_json::to_string_pretty(&table).map_err(|e| e.to_string())? + "\n"
        }
        Format::Csv => constants_csv(&rows),
        Format::Md => constants_markdown(&rows),
    };
    emit(cfg.output.path.as_deref(), &text)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Command::List = cli.command {
        for (id, description) in til_core::harness::STATEMENTS {
            println!("{id:<18} {description}");
        }
        return ExitCode::SUCCESS;
    }
    let result = load_config(&cli).and_then(|cfg| match &cli.command {
        Command::Verify => verify(&cfg),
        Command::Sweep { parameter, values } => sweep(&cfg, parameter, values),
        Command::Constants => constants(&cfg),
        Command::List => Ok(0),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
