//! Command-line entry points. Usage errors exit with 2, runtime failures
//! with 1.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use rapp_core::experiment::{run_experiment_with, RunMode, RunOptions, RunReport};
use rapp_core::ran_sim::ScenarioSpec;
use rapp_core::reasoning::{cycle_trace_ndjson, mode_grammar_ok, TraceRecord};
use rapp_core::sweep;

use crate::agent::{self, SharedReplay};
use crate::scenario::{self, ScenarioError};
use crate::settings::{AgentBackend, ServiceSettings};

#[derive(Debug, Parser)]
#[command(name = "rapp", version, about = "Net analyzer rApp: service and scenario runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one experiment headlessly and write its report.
    Run(RunArgs),
    /// Start the web service.
    Serve(ServeArgs),
    /// Check a cycle trace file, or re-run the reference experiment against
    /// a directory of recorded model responses.
    Replay(ReplayArgs),
    /// Simulate every seed with the misconfigured and corrected presets.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Baseline,
    WithRapp,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Baseline => RunMode::Baseline,
            ModeArg::WithRapp => RunMode::WithRapp,
        }
    }
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// `ref` for the built-in scenario, a TOML path, or a name under the
    /// scenario directory.
    #[arg(long, default_value = "ref")]
    pub scenario: String,
    #[arg(long, env = "RAPP_SCENARIO_DIR", default_value = "scenarios")]
    pub scenario_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, value_enum, default_value = "with-rapp")]
    pub mode: ModeArg,
    /// Answer proposals with the scripted operator.
    #[arg(long)]
    pub auto_approve: bool,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write every cycle trace, newline-delimited, to this file.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[arg(long, env = "RAPP_AGENT", default_value = "RULE", value_parser = parse_backend)]
    pub agent: AgentBackend,
    /// Directory for remote-agent request/response transcripts.
    #[arg(long, env = "RAPP_TRANSCRIPT_DIR")]
    pub transcripts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Overrides the settings file and `RAPP_PORT`.
    #[arg(long)]
    pub port: Option<u16>,
    /// TOML settings file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// A trace file written by `run --trace-out`, or a transcript directory.
    pub path: PathBuf,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, value_delimiter = ',', default_value = "42")]
    pub seeds: Vec<u64>,
    /// Use the single-threaded path.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_backend(s: &str) -> Result<AgentBackend, String> {
    s.parse()
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::NotFound { .. } => CliError::Usage(e.to_string()),
            ScenarioError::Invalid { .. } => CliError::Runtime(e.into()),
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(anyhow::anyhow!("{e}"))
}

pub fn main_with(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Run(a) => run(&a),
        Command::Serve(a) => serve(&a),
        Command::Replay(a) => replay(&a),
        Command::Sweep(a) => sweep(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rapp: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load(args: &ScenarioArgs) -> Result<ScenarioSpec, CliError> {
    Ok(scenario::resolve(&args.scenario, &args.scenario_dir)?)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).and_then(|_| stdout.write_all(b"\n")).map_err(runtime)
        }
    }
}

fn summary(report: &RunReport) -> String {
    let b = &report.body;
    let phases: Vec<String> = b
        .phases
        .iter()
        .map(|p| format!("{}: {} ping-pongs in the crossing, FPS variance {:.2}", p.name, p.ping_pongs_crossing, p.fps_variance_crossing))
        .collect();
    format!("{:?}, config version {}; {}", b.status, b.config_version, phases.join("; "))
}

fn run(a: &RunArgs) -> Result<(), CliError> {
    let spec = load(&a.scenario)?;
    let factory = agent::factory(a.agent, a.transcripts.as_deref()).map_err(CliError::Usage)?;
    let options = RunOptions { auto_approve: a.auto_approve, agent: factory, observer: None };
    let artifacts = run_experiment_with(&spec, a.mode.into(), &options).map_err(runtime)?;
    if let Some(path) = &a.trace_out {
        let traces: String = artifacts.cycles.iter().map(cycle_trace_ndjson).collect();
        std::fs::write(path, traces).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    }
    write_or_print(a.out.as_deref(), &artifacts.report.to_json())?;
    if a.out.is_some() {
        println!("{}", summary(&artifacts.report));
    }
    Ok(())
}

fn serve(a: &ServeArgs) -> Result<(), CliError> {
    let mut settings = match &a.config {
        Some(path) => ServiceSettings::load(path).map_err(|e| CliError::Usage(e.to_string()))?,
        None => ServiceSettings::default(),
    };
    settings.apply_env(|k| std::env::var(k).ok()).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(port) = a.port {
        settings.port = port;
    }
    settings.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let factory = agent::factory(settings.agent, settings.transcript_dir.as_deref()).map_err(CliError::Usage)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(runtime)?;
    rt.block_on(crate::api::serve(settings, factory))?;
    Ok(())
}

/// Outcome of checking one cycle in a trace file.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceCheck {
    pub cycle_id: String,
    pub trace: Vec<String>,
    pub ok: bool,
}

/// Checks every cycle in a newline-delimited trace against the mode grammar.
pub fn check_trace(text: &str) -> Result<Vec<TraceCheck>, String> {
    struct Open {
        id: String,
        cap: u32,
        trace: Vec<String>,
        complete: bool,
    }
    let mut cycles: Vec<Open> = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let record: TraceRecord = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        if let TraceRecord::Cycle { cycle_id, cap, .. } = &record {
            cycles.push(Open { id: cycle_id.clone(), cap: *cap, trace: vec!["EVENT".into()], complete: false });
            continue;
        }
        let open = cycles.last_mut().ok_or_else(|| format!("line {}: record before any cycle header", i + 1))?;
        match record {
            TraceRecord::Step { label, .. } => open.trace.push(label),
            TraceRecord::End { .. } => open.complete = true,
            _ => {}
        }
    }
    Ok(cycles
        .into_iter()
        .map(|c| TraceCheck { ok: mode_grammar_ok(&c.trace, c.cap, c.complete), cycle_id: c.id, trace: c.trace })
        .collect())
}

fn replay(a: &ReplayArgs) -> Result<(), CliError> {
    if a.path.is_dir() {
        let spec = load(&a.scenario)?;
        let transcript = SharedReplay::from_dir(&a.path).map_err(runtime)?;
        let options = RunOptions { agent: transcript.factory(), ..RunOptions::new(true) };
        let artifacts = run_experiment_with(&spec, RunMode::WithRapp, &options).map_err(runtime)?;
        for c in &artifacts.cycles {
            println!("{} {}", c.cycle_id, c.mode_trace().join(" "));
        }
        println!("{}", summary(&artifacts.report));
        if transcript.remaining() > 0 {
            return Err(runtime(format!("{} recorded responses were not used", transcript.remaining())));
        }
        return Ok(());
    }
    let text = std::fs::read_to_string(&a.path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", a.path.display())))?;
    let checks = check_trace(&text).map_err(runtime)?;
    let bad = checks.iter().filter(|c| !c.ok).count();
    for c in &checks {
        println!("{} {} {}", c.cycle_id, if c.ok { "ok" } else { "INVALID" }, c.trace.join(" "));
    }
    if bad > 0 {
        return Err(runtime(format!("{bad} of {} cycles violate the mode grammar", checks.len())));
    }
    Ok(())
}

fn sweep(a: &SweepArgs) -> Result<(), CliError> {
    let spec = load(&a.scenario)?;
    let points = sweep::grid(&a.seeds, &[spec.presets.misconfigured, spec.presets.corrected]);
    let results = if a.sequential {
        sweep::run_sequential(&spec, &points)
    } else {
        sweep::run_parallel(&spec, &points)
    }
    .map_err(runtime)?;
    let text = serde_json::to_string_pretty(&results).map_err(runtime)?;
    write_or_print(a.out.as_deref(), &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_traces_satisfy_the_grammar() {
        let a = run_experiment_with(&ScenarioSpec::reference(), RunMode::WithRapp, &RunOptions::new(true)).unwrap();
        let text: String = a.cycles.iter().map(cycle_trace_ndjson).collect();
        let checks = check_trace(&text).unwrap();
        assert_eq!(checks.len(), a.cycles.len());
        assert!(checks.iter().all(|c| c.ok));

        // A step after the stop breaks the grammar.
        let first = cycle_trace_ndjson(&a.cycles[0]);
        let stop_line = first.lines().rfind(|l| l.contains("\"label\":\"STOP\"")).unwrap();
        let mut lines: Vec<&str> = first.lines().collect();
        lines.insert(lines.len() - 1, stop_line);
        assert!(!check_trace(&lines.join("\n")).unwrap()[0].ok);
        assert!(check_trace("{\"record\":\"end\",\"steps\":1,\"iteration\":0,\"protocol_errors\":0}").is_err());
    }

    #[test]
    fn cli_shape() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from(["rapp", "run", "--mode", "baseline", "--out", "r.json"]).unwrap();
        let Command::Run(a) = cli.command else { panic!("expected run") };
        assert_eq!((a.mode, a.scenario.scenario.as_str()), (ModeArg::Baseline, "ref"));
        let err = Cli::try_parse_from(["rapp", "run", "--mode", "sideways"]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
