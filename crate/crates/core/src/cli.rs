//! Command-line front end: `simulate`, `analyze`, `verify`, `reproduce`.
//!
//! Output layout of a run directory:
//! - `trials.jsonl`: a header object, then one trial record per line
//! - `summary.json`: timeline report, rate budget, subensemble sizes and,
//!   in Fock mode, the model summary
//! - `manifest.json`: config snapshot, seed, run id, file list, timestamps
//! - `<report>.csv` / `<report>.json` from `analyze`
//!
//! Nothing but the manifest carries wall-clock time, so logs of the same
//! config and seed are byte-identical.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{self, AnalysisError};
use crate::bisa::{bsm_output_overlap, verify_evolution, BisaOutcome, BisaSetting};
use crate::experiment::{
    imperfection_product, plausible_tau_range, rate_budget, run_trials_with_model, sort_subensembles,
    ExperimentConfig, ExperimentError, FockModel, FockModelSummary, Mode, RateBudget, RateBudgetInput,
    TauRange, TrialRecord,
};
use crate::qstate::{bell_decompose_14_23, four_photon_source_state, BellKind};
use crate::timeline::{check_delayed_choice, event_times, DelayedChoiceReport, EventTimes};

pub const LOG_FORMAT: &str = "delayed-swap/trials";
pub const LOG_FILE: &str = "trials.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("log {path} line {line}: {message}")]
    Log { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

pub type Result<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Parser)]
#[command(name = "delayed-swap", version, about = "Delayed-choice entanglement swapping simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Ideal,
    Fock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportKind {
    Fig3,
    Table1,
    Pooled,
}

impl ReportKind {
    fn name(self) -> &'static str {
        match self {
            ReportKind::Fig3 => "fig3",
            ReportKind::Table1 => "table1",
            ReportKind::Pooled => "pooled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifyTarget {
    Bisa,
    Timing,
    Budget,
    Eq2,
    All,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// TOML config; unknown keys are rejected.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub trials: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a trial log.
    Simulate(RunArgs),
    /// Compute a report from a trial log.
    Analyze {
        log: PathBuf,
        #[arg(long, value_enum, default_value = "fig3")]
        report: ReportKind,
        /// Output directory; defaults to the log's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named check suite.
    Verify {
        #[arg(value_enum)]
        target: VerifyTarget,
    },
    /// Default noisy Fock run, all reports and the timing and budget checks.
    Reproduce(RunArgs),
}

/// Parse arguments and run; diagnostics go to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = write!(out, "{e}");
            return Ok(());
        }
        Err(e) => {
            return Err(CliError::Config {
                path: PathBuf::from("<args>"),
                message: e.to_string(),
            })
        }
    };
    match cli.command {
        Command::Simulate(a) => {
            let cfg = resolve_config(&a, ExperimentConfig::default())?;
            let r = simulate(&cfg, &a.out)?;
            let _ = writeln!(out, "wrote {} records ({} kept) to {}", r.trials, r.kept, a.out.display());
            Ok(())
        }
        Command::Analyze { log, report, out: dir } => {
            let dir = dir.unwrap_or_else(|| log.parent().map(Path::to_path_buf).unwrap_or_default());
            let csv = analyze(&log, report, &dir)?;
            let _ = write!(out, "{csv}");
            Ok(())
        }
        Command::Verify { target } => finish(verify(target), out),
        Command::Reproduce(a) => {
            let cfg = resolve_config(&a, ExperimentConfig::reference_defaults())?;
            let r = simulate(&cfg, &a.out)?;
            let _ = writeln!(out, "wrote {} records ({} kept) to {}", r.trials, r.kept, a.out.display());
            let log = a.out.join(LOG_FILE);
            for kind in [ReportKind::Fig3, ReportKind::Table1, ReportKind::Pooled] {
                let _ = writeln!(out, "# {}", kind.name());
                let _ = write!(out, "{}", analyze(&log, kind, &a.out)?);
            }
            let mut checks = verify(VerifyTarget::Timing);
            checks.extend(verify(VerifyTarget::Budget));
            finish(checks, out)
        }
    }
}

fn finish(checks: Vec<Check>, out: &mut dyn Write) -> Result<()> {
    for c in &checks {
        let _ = writeln!(out, "{c}");
    }
    match checks.iter().filter(|c| !c.pass).count() {
        0 => Ok(()),
        n => Err(CliError::ChecksFailed(n)),
    }
}

/// Load a TOML config. Missing keys take their defaults; unknown keys fail
/// with the key name.
pub fn load_config(path: &Path, base: ExperimentConfig) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let cfg_err = |message: String| CliError::Config { path: path.to_path_buf(), message };
    let user: toml::Table = toml::from_str(&text).map_err(|e| cfg_err(e.to_string()))?;
    let mut merged = match toml::Value::try_from(&base).map_err(|e| cfg_err(e.to_string()))? {
        toml::Value::Table(t) => t,
        _ => unreachable!("config serializes to a table"),
    };
    merge(&mut merged, user);
    toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| cfg_err(e.to_string()))
}

fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn resolve_config(a: &RunArgs, base: ExperimentConfig) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => load_config(p, base)?,
        None => base,
    };
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(m) = a.mode {
        cfg.mode = match m {
            ModeArg::Ideal => Mode::Ideal,
            ModeArg::Fock => Mode::Fock,
        };
    }
    cfg.validate_for_run()?;
    Ok(cfg)
}

/// Stable identifier of a config and seed.
pub fn run_id(cfg: &ExperimentConfig) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_vec(cfg)?);
    Ok(digest[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub run_id: String,
    pub manifest: String,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimelineSummary {
    pub events: EventTimes,
    pub report: DelayedChoiceReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub manifest: String,
    pub trials: u64,
    pub kept: usize,
    /// Φ⁺, Φ⁻, HH, VV.
    pub subensemble_sizes: [usize; 4],
    pub timeline: TimelineSummary,
    pub rate_budget: RateBudget,
    pub fock: Option<FockModelSummary>,
    pub tau_range: Option<TauRange>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub run_id: String,
    pub master_seed: u64,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub finished_at: u64,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Serialize a log: header line, then one record per line.
pub fn encode_log(header: &LogHeader, records: &[TrialRecord]) -> Result<Vec<u8>> {
    let mut buf = serde_json::to_vec(header)?;
    buf.push(b'\n');
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

pub fn read_log(path: &Path) -> Result<(LogHeader, Vec<TrialRecord>)> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let log_err = |line: usize, message: String| CliError::Log { path: path.to_path_buf(), line, message };
    let mut lines = BufReader::new(f).lines();
    let first = lines
        .next()
        .ok_or_else(|| log_err(1, "empty log".into()))?
        .map_err(io_err(path))?;
    let header: LogHeader = serde_json::from_str(&first).map_err(|e| log_err(1, e.to_string()))?;
    if header.format != LOG_FORMAT {
        return Err(log_err(1, format!("unknown format {:?}", header.format)));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| log_err(i + 2, e.to_string()))?);
    }
    Ok((header, records))
}

pub struct SimulateResult {
    pub trials: u64,
    pub kept: usize,
    pub summary: RunSummary,
}

/// Run the trials and write log, summary and manifest into `dir`.
pub fn simulate(cfg: &ExperimentConfig, dir: &Path) -> Result<SimulateResult> {
    cfg.validate_for_run()?;
    let started_at = now();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let id = run_id(cfg)?;
    let (records, fock, tau_range) = match cfg.mode {
        Mode::Ideal => (crate::experiment::run_trials(cfg)?, None, None),
        Mode::Fock => {
            let model = FockModel::build(cfg)?;
            let records = run_trials_with_model(cfg, &model)?;
            let range = plausible_tau_range(cfg)?;
            (records, Some(model.summary(cfg.noise.switching_fidelity)), Some(range))
        }
    };
    let header = LogHeader {
        format: LOG_FORMAT.into(),
        run_id: id.clone(),
        manifest: MANIFEST_FILE.into(),
        config: cfg.clone(),
    };
    write_file(&dir.join(LOG_FILE), &encode_log(&header, &records)?)?;

    let set = sort_subensembles(&records);
    let events = event_times(&cfg.timeline).map_err(ExperimentError::from)?;
    let summary = RunSummary {
        run_id: id.clone(),
        manifest: MANIFEST_FILE.into(),
        trials: cfg.trials,
        kept: records.iter().filter(|r| r.kept).count(),
        subensemble_sizes: set.sizes(),
        timeline: TimelineSummary {
            events,
            report: check_delayed_choice(&events),
        },
        rate_budget: rate_budget(&RateBudgetInput::from_config(cfg))?,
        fock,
        tau_range,
    };
    write_file(&dir.join(SUMMARY_FILE), &serde_json::to_vec_pretty(&summary)?)?;

    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").into(),
        run_id: id,
        master_seed: cfg.master_seed,
        config: cfg.clone(),
        outputs: vec![LOG_FILE.into(), SUMMARY_FILE.into()],
        started_at,
        finished_at: now(),
    };
    write_file(&dir.join(MANIFEST_FILE), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(SimulateResult {
        trials: cfg.trials,
        kept: summary.kept,
        summary,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportDocument {
    pub kind: String,
    pub run_id: String,
    pub manifest: String,
    pub master_seed: u64,
    pub config: ExperimentConfig,
    pub timeline: DelayedChoiceReport,
    pub report: serde_json::Value,
}

/// Compute a report from a log; writes `<kind>.csv` and `<kind>.json` into
/// `dir` and returns the CSV.
pub fn analyze(log: &Path, kind: ReportKind, dir: &Path) -> Result<String> {
    let (header, records) = read_log(log)?;
    let set = sort_subensembles(&records);
    let (csv, value) = match kind {
        ReportKind::Fig3 => {
            let r = analysis::report_fig3(&set)?;
            (r.to_csv(), serde_json::to_value(&r)?)
        }
        ReportKind::Table1 => {
            let r = analysis::report_table1(&set)?;
            (r.to_csv(), serde_json::to_value(&r)?)
        }
        ReportKind::Pooled => {
            let r = analysis::pooled_bsm_analysis(&set)?;
            (r.to_csv(), serde_json::to_value(&r)?)
        }
    };
    let events = event_times(&header.config.timeline).map_err(ExperimentError::from)?;
    let doc = ReportDocument {
        kind: kind.name().into(),
        run_id: header.run_id,
        manifest: header.manifest,
        master_seed: header.config.master_seed,
        timeline: check_delayed_choice(&events),
        config: header.config,
        report: value,
    };
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_file(&dir.join(format!("{}.csv", kind.name())), csv.as_bytes())?;
    write_file(&dir.join(format!("{}.json", kind.name())), &serde_json::to_vec_pretty(&doc)?)?;
    Ok(csv)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub computed: String,
    pub pass: bool,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {}: expected {}, computed {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.expected,
            self.computed
        )
    }
}

fn near(name: impl Into<String>, expected: f64, computed: f64, tol: f64) -> Check {
    Check {
        name: name.into(),
        expected: if tol == 0.0 {
            format!("{expected}")
        } else {
            format!("{expected} ± {tol:e}")
        },
        computed: format!("{computed:.6}"),
        pass: (computed - expected).abs() <= tol,
    }
}

fn failed(name: impl Into<String>, err: impl std::fmt::Display) -> Check {
    Check {
        name: name.into(),
        expected: "no error".into(),
        computed: err.to_string(),
        pass: false,
    }
}

pub fn verify(target: VerifyTarget) -> Vec<Check> {
    match target {
        VerifyTarget::Bisa => verify_bisa(),
        VerifyTarget::Timing => verify_timing(),
        VerifyTarget::Budget => verify_budget(),
        VerifyTarget::Eq2 => verify_eq2(),
        VerifyTarget::All => [verify_eq2(), verify_bisa(), verify_timing(), verify_budget()].concat(),
    }
}

fn verify_eq2() -> Vec<Check> {
    let c = match bell_decompose_14_23(&four_photon_source_state()) {
        Ok(c) => c,
        Err(e) => return vec![failed("eq2 decomposition", e)],
    };
    let mut out = Vec::new();
    let diag = [0.5, -0.5, -0.5, 0.5];
    for (i, &k14) in BellKind::ALL.iter().enumerate() {
        out.push(near(format!("eq2 {k14}(1,4) {k14}(2,3)"), diag[i], c.get(k14, k14).re, 1e-12));
        out.push(near(format!("eq2 {k14} imaginary part"), 0.0, c.get(k14, k14).im, 1e-12));
    }
    let off = BellKind::ALL
        .iter()
        .flat_map(|&a| BellKind::ALL.iter().filter(move |&&b| b != a).map(move |&b| (a, b)))
        .map(|(a, b)| c.get(a, b).norm())
        .fold(0.0, f64::max);
    out.push(near("eq2 off-diagonal max", 0.0, off, 1e-12));
    out
}

fn verify_bisa() -> Vec<Check> {
    let mut out = Vec::new();
    for k in [BellKind::PhiPlus, BellKind::PhiMinus] {
        match bsm_output_overlap(k) {
            Ok(o) => out.push(near(format!("bisa BSM {k} output overlap"), 1.0, o, 1e-9)),
            Err(e) => out.push(failed(format!("bisa BSM {k}"), e)),
        }
    }
    let cases = [
        (BellKind::PhiPlus, BisaSetting::Bsm, BisaOutcome::PhiPlus23, 1.0),
        (BellKind::PhiMinus, BisaSetting::Bsm, BisaOutcome::PhiMinus23, 1.0),
        (BellKind::PsiPlus, BisaSetting::Bsm, BisaOutcome::Discard, 1.0),
        (BellKind::PsiMinus, BisaSetting::Bsm, BisaOutcome::Discard, 1.0),
        (BellKind::PhiPlus, BisaSetting::Ssm, BisaOutcome::HH23, 0.5),
        (BellKind::PhiPlus, BisaSetting::Ssm, BisaOutcome::VV23, 0.5),
    ];
    for (k, s, o, p) in cases {
        match verify_evolution(k, s) {
            Ok(d) => out.push(near(format!("bisa {s} {k} -> {o}"), p, d[&o], 1e-9)),
            Err(e) => out.push(failed(format!("bisa {s} {k}"), e)),
        }
    }
    out
}

fn verify_timing() -> Vec<Check> {
    let t = match event_times(&Default::default()) {
        Ok(t) => t,
        Err(e) => return vec![failed("timing", e)],
    };
    let r = check_delayed_choice(&t);
    vec![
        near("timing choice window lower (ns)", 49.0, t.c_v_lower, 0.0),
        near("timing choice window upper (ns)", 348.0, t.c_v_upper, 0.0),
        near("timing choice margin lower (ns)", 14.0, r.choice_margin[0], 0.0),
        near("timing choice margin upper (ns)", 313.0, r.choice_margin[1], 0.0),
        near("timing measurement margin (ns)", 485.0, r.measurement_margin, 0.0),
        Check {
            name: "timing delayed-choice ordering".into(),
            expected: "satisfied".into(),
            computed: if r.satisfied { "satisfied" } else { "violated" }.into(),
            pass: r.satisfied,
        },
    ]
}

fn verify_budget() -> Vec<Check> {
    let cfg = ExperimentConfig::reference_defaults();
    let mut out = Vec::new();
    match rate_budget(&RateBudgetInput::from_config(&cfg)) {
        Ok(b) => {
            out.push(near("budget kept fraction", 0.0033, b.fraction, 1e-4));
            out.push(near("budget four-fold rate (Hz)", 0.016, b.fourfold_rate, 1e-3));
        }
        Err(e) => out.push(failed("budget rate", e)),
    }
    for (name, factors, want) in [
        ("budget correlation product", &[0.674, 0.964, 0.94, 0.99][..], 0.605),
        ("budget visibility x switching", &[0.95, 0.99][..], 0.94),
    ] {
        match imperfection_product(factors) {
            Ok(p) => out.push(near(name, want, p, 1e-3)),
            Err(e) => out.push(failed(name, e)),
        }
    }
    out
}
