//! Command-line front end: config and gains files, reports and CSV output.
//!
//! Exit codes:
//!
//! | command    | 0                  | 1                  | 2                    | 3          | 4                 |
//! |------------|--------------------|--------------------|----------------------|------------|-------------------|
//! | `synth`    | certified          | bad input / IO     | feasible, uncertified| infeasible | numerical failure |
//! | `verify`   | mean-square stable | bad input / IO     | unstable             |            |                   |
//! | `simulate` | empirically stable | bad input / IO     | not stable           |            |                   |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::linalg::Matrix;
use crate::model::{AttackChannel, AttackedSystem, Gains, InjectionDistribution, PlantModel};
use crate::settings::NumericSettings;
use crate::simulator::{self, SimConfig, TrajectoryRecord};
use crate::synthesis::{self, SynthesisResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_STABLE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "resilient-lmi",
    version,
    about = "Resilient observer-based controller synthesis under stochastic link attacks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the synthesis LMI and write a gains file.
    Synth {
        config: PathBuf,
        /// Where to write the gains file.
        #[arg(long, default_value = "gains.json")]
        gains_out: PathBuf,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check mean-square stability of given gains with the exact moment operator.
    Verify {
        config: PathBuf,
        gains: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Monte Carlo simulation; writes trajectories.csv, mean_square.csv and report.json.
    Simulate {
        config: PathBuf,
        gains: PathBuf,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "sim_out")]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

// ---------------------------------------------------------------- config

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub alpha_mean: f64,
    pub beta_mean: f64,
    #[serde(default)]
    pub beta_var: f64,
    #[serde(default)]
    pub beta_dist: InjectionDistribution,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorSpec {
    pub gamma_mean: f64,
    pub delta_mean: f64,
    #[serde(default)]
    pub delta_var: f64,
    #[serde(default)]
    pub delta_dist: InjectionDistribution,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub plant: PlantSpec,
    pub sensors: Vec<SensorSpec>,
    pub actuators: Vec<ActuatorSpec>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub xhat0: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: NumericSettings,
}

/// A parsed and validated configuration.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub file: ConfigFile,
    pub system: AttackedSystem,
    pub settings: NumericSettings,
    /// SHA-256 of the raw file bytes, lowercase hex.
    pub digest: String,
}

/// Input problems, reported with exit code 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: field `{field}`: {message}")]
    Field {
        path: String,
        field: String,
        message: String,
    },
    #[error(transparent)]
    Model(#[from] Error),
}

fn matrix_field(path: &str, field: &str, rows: &[Vec<f64>]) -> Result<Matrix, CliError> {
    let bad = |message: String| CliError::Field {
        path: path.into(),
        field: field.into(),
        message,
    };
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(bad("matrix must be nonempty".into()));
    }
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(bad(format!("row {i} has {} entries, expected {c}", rows[i].len())));
    }
    Matrix::from_rows(rows).map_err(|e| bad(e.to_string()))
}

fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_config(bytes: &[u8], path: &str) -> Result<LoadedConfig, CliError> {
    let file: ConfigFile = serde_json::from_slice(bytes).map_err(|e| CliError::Parse {
        path: path.into(),
        message: e.to_string(),
    })?;
    let field_err = |field: String, message: String| CliError::Field {
        path: path.into(),
        field,
        message,
    };
    let a = matrix_field(path, "plant.A", &file.plant.a)?;
    let b = matrix_field(path, "plant.B", &file.plant.b)?;
    let c = matrix_field(path, "plant.C", &file.plant.c)?;
    let plant = PlantModel { a, b, c };
    plant
        .validate(&file.solver)
        .map_err(|e| field_err("plant".into(), e.to_string()))?;

    let sensors: Vec<AttackChannel> = file
        .sensors
        .iter()
        .map(|s| AttackChannel {
            bernoulli_mean: s.alpha_mean,
            injection_mean: s.beta_mean,
            injection_variance: s.beta_var,
            distribution: s.beta_dist,
        })
        .collect();
    let actuators: Vec<AttackChannel> = file
        .actuators
        .iter()
        .map(|s| AttackChannel {
            bernoulli_mean: s.gamma_mean,
            injection_mean: s.delta_mean,
            injection_variance: s.delta_var,
            distribution: s.delta_dist,
        })
        .collect();
    for (list, name, names) in [
        (&sensors, "sensors", ["alpha_mean", "beta_mean", "beta_var"]),
        (&actuators, "actuators", ["gamma_mean", "delta_mean", "delta_var"]),
    ] {
        for (i, ch) in list.iter().enumerate() {
            if let Err(msg) = ch.check() {
                let which = if msg.starts_with("bernoulli_mean") {
                    names[0]
                } else if msg.starts_with("injection_mean") {
                    names[1]
                } else {
                    names[2]
                };
                let msg = msg.replace("bernoulli_mean", names[0]).replace("injection_mean", names[1]);
                let msg = msg.replace("injection_variance", names[2]);
                return Err(field_err(format!("{name}[{i}].{which}"), msg));
            }
        }
    }
    let (n, m, p) = (plant.states(), plant.inputs(), plant.outputs());
    if sensors.len() != p {
        return Err(field_err(
            "sensors".into(),
            format!("{} entries for {p} outputs", sensors.len()),
        ));
    }
    if actuators.len() != m {
        return Err(field_err(
            "actuators".into(),
            format!("{} entries for {m} inputs", actuators.len()),
        ));
    }
    for (name, v) in [("x0", &file.x0), ("xhat0", &file.xhat0)] {
        if let Some(v) = v {
            if v.len() != n {
                return Err(field_err(name.into(), format!("{} entries for {n} states", v.len())));
            }
        }
    }
    let system = AttackedSystem {
        plant,
        sensors,
        actuators,
    }
    .validate(&file.solver)?;
    Ok(LoadedConfig {
        settings: file.solver,
        file,
        system,
        digest: digest_hex(bytes),
    })
}

pub fn load_config(path: &Path) -> Result<LoadedConfig, CliError> {
    parse_config(&read(path)?, &path.display().to_string())
}

// ---------------------------------------------------------------- gains

#[derive(Debug, Clone, Deserialize)]
pub struct GainsFile {
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    #[serde(rename = "L")]
    pub l: Vec<Vec<f64>>,
    #[serde(rename = "Q1", default)]
    pub q1: Option<Vec<Vec<f64>>>,
    #[serde(rename = "Q2", default)]
    pub q2: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub lmi_margin: Option<f64>,
    #[serde(default)]
    pub oracle_rho: Option<f64>,
}

pub fn parse_gains(bytes: &[u8], path: &str) -> Result<Gains, CliError> {
    let file: GainsFile = serde_json::from_slice(bytes).map_err(|e| CliError::Parse {
        path: path.into(),
        message: e.to_string(),
    })?;
    Ok(Gains {
        k: matrix_field(path, "K", &file.k)?,
        l: matrix_field(path, "L", &file.l)?,
    })
}

pub fn load_gains(path: &Path) -> Result<Gains, CliError> {
    parse_gains(&read(path)?, &path.display().to_string())
}

/// 17 significant digits: every `f64` survives a write/read round trip.
fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".into()
    }
}

fn fmt_matrix(m: &Matrix) -> String {
    let rows: Vec<String> = m
        .to_rows()
        .iter()
        .map(|r| format!("[{}]", r.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[\n    {}\n  ]", rows.join(",\n    "))
}

/// Gains file text. `Q1`, `Q2`, `lmi_margin` and `oracle_rho` are included
/// when synthesis produced them.
pub fn gains_json(gains: &Gains, synth: Option<&SynthesisResult>) -> String {
    let mut fields = vec![
        format!("  \"K\": {}", fmt_matrix(&gains.k)),
        format!("  \"L\": {}", fmt_matrix(&gains.l)),
    ];
    if let Some(r) = synth {
        fields.push(format!("  \"Q1\": {}", fmt_matrix(&r.variables.q1)));
        fields.push(format!("  \"Q2\": {}", fmt_matrix(&r.variables.q2)));
        fields.push(format!("  \"lmi_margin\": {}", fmt_num(r.lmi_margin)));
        fields.push(format!("  \"oracle_rho\": {}", fmt_num(r.oracle_rho)));
    }
    format!("{{\n{}\n}}\n", fields.join(",\n"))
}

// ---------------------------------------------------------------- reports

/// Machine-readable summary of one command. Optional fields are omitted when
/// the command does not produce them; `timings_ms` is the only
/// non-reproducible field.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunReport {
    pub command: Vec<String>,
    pub config_digest: String,
    pub status: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lmi_margin: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lmi_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lmi_lower_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_condition: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certified: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stable: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub empirically_stable: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diverged_runs: Option<usize>,
    pub settings: NumericSettings,
    pub timings_ms: BTreeMap<String, f64>,
}

struct Timer(BTreeMap<String, f64>);

impl Timer {
    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0
            .insert(phase.into(), start.elapsed().as_secs_f64() * 1e3);
        out
    }
}

// ---------------------------------------------------------------- CSV

fn csv_header(n: usize, m: usize, p: usize) -> String {
    let mut cols = vec!["run".to_string(), "k".to_string()];
    for (prefix, count) in [
        ("x", n),
        ("xhat", n),
        ("u", m),
        ("ytilde", p),
        ("alpha", p),
        ("gamma", m),
    ] {
        cols.extend((1..=count).map(|i| format!("{prefix}{i}")));
    }
    cols.join(",")
}

pub fn write_trajectories<W: Write>(
    out: &mut W,
    records: &[TrajectoryRecord],
    n: usize,
    m: usize,
    p: usize,
) -> std::io::Result<()> {
    writeln!(out, "{}", csv_header(n, m, p))?;
    let mut line = String::new();
    for rec in records {
        for k in 0..rec.len() {
            line.clear();
            let _ = write!(line, "{},{}", rec.run, k);
            for v in rec.x[k].iter().chain(&rec.xhat[k]).chain(&rec.u[k]).chain(&rec.ytilde[k]) {
                let _ = write!(line, ",{v:e}");
            }
            for v in rec.alpha[k].iter().chain(&rec.gamma[k]) {
                let _ = write!(line, ",{v}");
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
    }
    Ok(())
}

pub fn write_mean_square<W: Write>(out: &mut W, m: &[f64]) -> std::io::Result<()> {
    writeln!(out, "k,mean_square")?;
    for (k, v) in m.iter().enumerate() {
        writeln!(out, "{k},{v:e}")?;
    }
    Ok(())
}

// ---------------------------------------------------------------- commands

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn finish(report: &RunReport, path: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(report).expect("report serializes") + "\n";
    print!("{text}");
    if let Some(p) = path {
        write_file(p, &text)?;
    }
    Ok(())
}

fn base_report(argv: &[String], cfg: &LoadedConfig) -> RunReport {
    RunReport {
        command: argv.to_vec(),
        config_digest: cfg.digest.clone(),
        settings: cfg.settings,
        ..Default::default()
    }
}

pub fn cmd_synth(
    argv: &[String],
    config: &Path,
    gains_out: &Path,
    report_path: Option<&Path>,
) -> Result<i32, CliError> {
    let mut timer = Timer(BTreeMap::new());
    let cfg = timer.time("load", || load_config(config))?;
    let mut report = base_report(argv, &cfg);
    let result = timer.time("synthesize", || synthesis::synthesize(&cfg.system, &cfg.settings));
    let code = match result {
        Ok(r) => {
            write_file(gains_out, &gains_json(&r.gains, Some(&r)))?;
            report.lmi_margin = Some(r.lmi_margin);
            report.lmi_iterations = Some(r.iterations);
            report.w_condition = Some(r.w_condition);
            report.oracle_rho = Some(r.oracle_rho);
            report.certified = Some(r.certified);
            if r.certified {
                report.status = "certified".into();
                EXIT_OK
            } else {
                report.status = "uncertified".into();
                report.message = Some(format!(
                    "LMI feasible but the exact moment operator has spectral radius {}",
                    r.oracle_rho
                ));
                EXIT_NOT_STABLE
            }
        }
        Err(e @ Error::Infeasible { lower_bound }) => {
            report.status = "infeasible".into();
            report.lmi_lower_bound = Some(lower_bound);
            report.message = Some(e.to_string());
            EXIT_INFEASIBLE
        }
        Err(e @ (Error::NumericalFailure { .. } | Error::IllConditionedW { .. })) => {
            report.status = "numerical_failure".into();
            report.message = Some(e.to_string());
            EXIT_NUMERICAL
        }
        Err(e) => return Err(e.into()),
    };
    report.exit_code = code;
    report.timings_ms = timer.0;
    finish(&report, report_path)?;
    Ok(code)
}

pub fn cmd_verify(
    argv: &[String],
    config: &Path,
    gains_path: &Path,
    report_path: Option<&Path>,
) -> Result<i32, CliError> {
    let mut timer = Timer(BTreeMap::new());
    let cfg = timer.time("load", || load_config(config))?;
    let gains = load_gains(gains_path)?;
    let check = timer.time("verify", || {
        synthesis::verify_gains(&cfg.system, &gains, &cfg.settings)
    })?;
    let mut report = base_report(argv, &cfg);
    report.oracle_rho = Some(check.rho);
    report.stable = Some(check.stable);
    report.status = if check.stable { "stable" } else { "unstable" }.into();
    let code = if check.stable { EXIT_OK } else { EXIT_NOT_STABLE };
    report.exit_code = code;
    report.timings_ms = timer.0;
    finish(&report, report_path)?;
    Ok(code)
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_simulate(
    argv: &[String],
    config: &Path,
    gains_path: &Path,
    runs: usize,
    steps: usize,
    seed: u64,
    out_dir: &Path,
    report_path: Option<&Path>,
) -> Result<i32, CliError> {
    let mut timer = Timer(BTreeMap::new());
    let cfg = timer.time("load", || load_config(config))?;
    let gains = load_gains(gains_path)?;
    let n = cfg.system.plant.states();
    let x0 = cfg.file.x0.clone().ok_or_else(|| CliError::Field {
        path: config.display().to_string(),
        field: "x0".into(),
        message: "required for simulation".into(),
    })?;
    let sim = SimConfig {
        steps,
        runs,
        seed,
        x0,
        xhat0: cfg.file.xhat0.clone().unwrap_or_else(|| vec![0.0; n]),
    };
    let (est, records) = timer.time("simulate", || {
        simulator::monte_carlo_with_records(&cfg.system, &gains, &sim)
    })?;
    let oracle = synthesis::verify_gains(&cfg.system, &gains, &cfg.settings)?;

    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let plant = &cfg.system.plant;
    timer.time("write", || -> Result<(), CliError> {
        let path = out_dir.join("trajectories.csv");
        let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        let mut w = BufWriter::new(f);
        write_trajectories(&mut w, &records, n, plant.inputs(), plant.outputs())
            .and_then(|_| w.flush())
            .map_err(|e| io_err(&path, e))?;
        let path = out_dir.join("mean_square.csv");
        let mut buf = Vec::new();
        write_mean_square(&mut buf, &est.mean_square).map_err(|e| io_err(&path, e))?;
        fs::write(&path, buf).map_err(|e| io_err(&path, e))
    })?;

    let mut report = base_report(argv, &cfg);
    report.runs = Some(runs);
    report.steps = Some(steps);
    report.seed = Some(seed);
    report.decay_slope = est.decay_slope;
    report.decay_rate = est.decay_slope.map(f64::exp);
    report.empirically_stable = Some(est.empirically_stable);
    report.diverged_runs = Some(est.diverged_runs);
    report.oracle_rho = Some(oracle.rho);
    report.stable = Some(oracle.stable);
    report.status = if !est.usable {
        "unusable"
    } else if est.empirically_stable {
        "empirically_stable"
    } else {
        "empirically_unstable"
    }
    .into();
    let code = if est.empirically_stable {
        EXIT_OK
    } else {
        EXIT_NOT_STABLE
    };
    report.exit_code = code;
    report.timings_ms = timer.0;
    let default_report = out_dir.join("report.json");
    finish(&report, Some(report_path.unwrap_or(&default_report)))?;
    Ok(code)
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Synth {
            config,
            gains_out,
            report,
        } => cmd_synth(&argv, config, gains_out, report.as_deref()),
        Command::Verify {
            config,
            gains,
            report,
        } => cmd_verify(&argv, config, gains, report.as_deref()),
        Command::Simulate {
            config,
            gains,
            runs,
            steps,
            seed,
            out,
            report,
        } => cmd_simulate(&argv, config, gains, *runs, *steps, *seed, out, report.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}
