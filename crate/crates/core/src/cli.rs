//! Command-line front end and output files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, ScheduleChoice};
use crate::error::{Error, Result};
use crate::model::{dose_rate, smooth_gate, Scheme};
use crate::scenario::{run_comparison, run_scenario, ScenarioRun};
use crate::stepper::StepReport;
use crate::verification::VerificationSuite;

/// Overrides the default output directory when `--output` is not given.
pub const OUTPUT_DIR_ENV: &str = "NTIU_OUTPUT_DIR";

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_VERIFICATION: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "ntiu", version, about = "Normal/tumor/immune/drug reaction-diffusion simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write snapshots, metrics and diagnostics.
    Simulate(SimulateArgs),
    /// Run the convergence, oracle and conservation checks.
    Verify(OutputArgs),
    /// Run NT, NTI and dosing cases 1-4 and report the case orderings.
    Compare(CompareArgs),
    /// Write the smoothed drug gate H(xi) as CSV.
    GatePlot(GateArgs),
    /// Write a dosing schedule v(t) as CSV.
    DosePlot(DoseArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output directory (default: $NTIU_OUTPUT_DIR, then the config's `output`).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Configuration file in `key = value` form.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set dt=0.05`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub nx: Option<String>,
    #[arg(long)]
    pub ny: Option<String>,
    #[arg(long)]
    pub dt: Option<String>,
    #[arg(long)]
    pub horizon: Option<String>,
    /// Pulse period in days.
    #[arg(long)]
    pub period: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    /// NT, NTI or NTIU.
    #[arg(long)]
    pub scheme: Option<String>,
    /// case1..case4, fig2, custom or none.
    #[arg(long)]
    pub schedule: Option<String>,
    /// Comma separated snapshot times in days.
    #[arg(long)]
    pub snapshots: Option<String>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Worker threads (default: available cores).
    #[arg(long, short)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long, default_value_t = 401)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct DoseArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    /// case1..case4, fig2 or custom (default: the configured schedule).
    #[arg(long)]
    pub case: Option<String>,
    /// Sampling step in days.
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).map_err(|e| match e {
                Error::Io(io) => Error::config("config", format!("{}: {io}", path.display())),
                other => other,
            })?,
            None => RunConfig::default(),
        };
        for (key, v) in [
            ("nx", &self.nx),
            ("ny", &self.ny),
            ("dt", &self.dt),
            ("horizon", &self.horizon),
            ("period", &self.period),
        ] {
            if let Some(v) = v {
                cfg.set(key, v)?;
            }
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::config(kv, "expected `key=value`"))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }
}

impl OutputArgs {
    pub fn dir(&self, cfg: &RunConfig) -> PathBuf {
        self.output
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(&cfg.output))
    }
}

/// What a run wrote, plus enough to rerun it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub config_echo: String,
    pub wall_clock_seconds: f64,
    /// `(file name, byte count, sha256)` in write order.
    pub files: Vec<(String, u64, String)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl RunManifest {
    fn new(command: &str, cfg: &RunConfig) -> Self {
        let echo = cfg.emit();
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: sha256_hex(echo.as_bytes()),
            config_echo: echo,
            wall_clock_seconds: 0.0,
            files: Vec::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "command = {}\nversion = {}\nconfig_sha256 = {}\nwall_clock_seconds = {:.3}\n",
            self.command, self.version, self.config_hash, self.wall_clock_seconds
        );
        for (name, bytes, hash) in &self.files {
            s += &format!("file = {name} {bytes} {hash}\n");
        }
        s += "\n# configuration\n";
        s += &self.config_echo;
        s
    }
}

struct OutputSink {
    dir: PathBuf,
    manifest: RunManifest,
}

impl OutputSink {
    fn new(dir: PathBuf, command: &str, cfg: &RunConfig) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            manifest: RunManifest::new(command, cfg),
        })
    }

    fn write(&mut self, name: &str, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        let path = self.dir.join(name);
        let mut f = BufWriter::new(File::create(&path)?);
        f.write_all(&buf)?;
        f.flush()?;
        self.manifest
            .files
            .push((name.to_string(), buf.len() as u64, sha256_hex(&buf)));
        Ok(())
    }

    fn finish(mut self, started: Instant) -> Result<PathBuf> {
        self.manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
        fs::write(self.dir.join("manifest.txt"), self.manifest.to_text())?;
        Ok(self.dir)
    }
}

pub fn snapshot_name(prefix: &str, t: f64) -> String {
    format!("{prefix}snapshot_t{t:07.3}.csv")
}

fn write_diagnostics(w: &mut dyn Write, reports: &[StepReport]) -> std::io::Result<()> {
    writeln!(w, "{}", StepReport::CSV_HEADER)?;
    for r in reports {
        r.write_csv_rows(&mut *w)?;
    }
    Ok(())
}

fn write_run(sink: &mut OutputSink, run: &ScenarioRun, prefix: &str) -> Result<()> {
    for snap in &run.snapshots {
        sink.write(&snapshot_name(prefix, snap.t), |w| snap.write_csv(w))?;
    }
    sink.write(&format!("{prefix}metrics.csv"), |w| run.metrics.write_csv(w))?;
    sink.write(&format!("{prefix}diagnostics.csv"), |w| write_diagnostics(w, &run.reports))?;
    Ok(())
}

fn simulate(args: &SimulateArgs) -> Result<PathBuf> {
    let started = Instant::now();
    let mut cfg = args.config.load()?;
    if let Some(s) = &args.scheme {
        cfg.set("scheme", s)?;
    }
    if let Some(s) = &args.schedule {
        cfg.set("schedule", s)?;
    }
    if let Some(s) = &args.snapshots {
        cfg.set("snapshots", s)?;
    }
    let scenario = cfg.to_scenario()?;
    let label = scenario.scheme.name();
    let run = run_scenario(&scenario, label)?;
    let mut sink = OutputSink::new(args.out.dir(&cfg), "simulate", &cfg)?;
    write_run(&mut sink, &run, "")?;
    sink.write("config.txt", |w| w.write_all(cfg.emit().as_bytes()))?;
    sink.finish(started)
}

fn compare(args: &CompareArgs) -> Result<PathBuf> {
    let started = Instant::now();
    let cfg = args.config.load()?;
    // The comparison always uses the dosing cases at the configured period.
    let base = RunConfig {
        scheme: Scheme::Ntiu,
        schedule: ScheduleChoice::Case(1),
        ..cfg.clone()
    }
    .to_scenario()?;
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if jobs == 0 {
        return Err(Error::config("jobs", "must be at least 1"));
    }
    let cmp = run_comparison(&base, cfg.period, jobs)?;
    let mut sink = OutputSink::new(args.out.dir(&cfg), "compare", &cfg)?;
    for run in &cmp.runs {
        write_run(&mut sink, run, &format!("{}_", run.label))?;
    }
    sink.write("verdicts.txt", |w| w.write_all(cmp.report.to_text().as_bytes()))?;
    sink.write("config.txt", |w| w.write_all(cfg.emit().as_bytes()))?;
    sink.finish(started)
}

fn verify(args: &OutputArgs) -> Result<(PathBuf, bool)> {
    let started = Instant::now();
    let suite = VerificationSuite::run()?;
    let cfg = RunConfig::default();
    let mut sink = OutputSink::new(args.dir(&cfg), "verify", &cfg)?;
    sink.write("convergence_spatial.csv", |w| suite.spatial.write_csv(w))?;
    sink.write("convergence_temporal_cnbe.csv", |w| suite.temporal.cnbe.write_csv(w))?;
    sink.write("convergence_temporal_cn.csv", |w| suite.temporal.cn_linear.write_csv(w))?;
    let summary = suite.summary();
    sink.write("verification_summary.txt", |w| w.write_all(summary.as_bytes()))?;
    print!("{summary}");
    Ok((sink.finish(started)?, suite.all_passed()))
}

fn gate_plot(args: &GateArgs) -> Result<PathBuf> {
    let started = Instant::now();
    let cfg = args.config.load()?;
    if args.samples < 2 {
        return Err(Error::config("samples", "need at least 2 samples"));
    }
    let delta = cfg.params.delta;
    let mut sink = OutputSink::new(args.out.dir(&cfg), "gate-plot", &cfg)?;
    sink.write("gate.csv", |w| {
        writeln!(w, "xi,H")?;
        // Half a gate width either side of the ramp.
        for k in 0..args.samples {
            let xi = -0.5 * delta + 2.0 * delta * k as f64 / (args.samples - 1) as f64;
            writeln!(w, "{xi:.16e},{:.16e}", smooth_gate(xi, delta))?;
        }
        Ok(())
    })?;
    sink.finish(started)
}

fn dose_plot(args: &DoseArgs) -> Result<PathBuf> {
    let started = Instant::now();
    let mut cfg = args.config.load()?;
    if let Some(c) = &args.case {
        cfg.set("schedule", c)?;
    }
    let schedule = cfg
        .dosing()?
        .ok_or_else(|| Error::config("schedule", "dose-plot needs a dosing schedule"))?;
    if !(args.step > 0.0) {
        return Err(Error::config("step", "must be positive"));
    }
    let end = schedule.n_pulses() as f64 * schedule.period();
    let n = (end / args.step).round() as usize;
    let mut sink = OutputSink::new(args.out.dir(&cfg), "dose-plot", &cfg)?;
    sink.write("dose.csv", |w| {
        writeln!(w, "t,v")?;
        for k in 0..=n {
            let t = k as f64 * args.step;
            writeln!(w, "{t:.16e},{:.16e}", dose_rate(&schedule, t))?;
        }
        Ok(())
    })?;
    sink.finish(started)
}

pub fn exit_code_for(err: &Error) -> u8 {
    match err {
        e if e.is_config_error() => EXIT_CONFIG,
        Error::Io(_) | Error::InvalidStudy(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

fn report_error(err: &Error) -> u8 {
    let code = exit_code_for(err);
    match err.failure_time() {
        Some(t) => eprintln!("error: numerical failure at t = {t}: {err}"),
        None => eprintln!("error: {err}"),
    }
    code
}

pub fn execute(cli: &Cli) -> ExitCode {
    let done = |dir: &Path| eprintln!("wrote {}", dir.display());
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a).map(|d| done(&d)),
        Command::Compare(a) => compare(a).map(|d| {
            done(&d);
            if let Ok(text) = fs::read_to_string(d.join("verdicts.txt")) {
                print!("{text}");
            }
        }),
        Command::Verify(a) => match verify(a) {
            Ok((d, passed)) => {
                done(&d);
                if !passed {
                    return ExitCode::from(EXIT_VERIFICATION);
                }
                Ok(())
            }
            Err(e) => Err(e),
        },
        Command::GatePlot(a) => gate_plot(a).map(|d| done(&d)),
        Command::DosePlot(a) => dose_plot(a).map(|d| done(&d)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => ExitCode::from(report_error(&e)),
    }
}

pub fn main_from_args() -> ExitCode {
    execute(&Cli::parse())
}
