//! The `occq` command line.
//!
//! Every run writes its outputs plus `manifest.json` into `--out`. `replay`
//! re-runs a manifest and checks the outputs are byte-identical.

pub mod commands;
pub mod manifest;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use commands::{Artifact, Job};
use commands::*;
use manifest::{digest_file, sha256_hex, FileDigest, RunManifest, ENGINE_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "occq", version, about = "Occupancy prediction for observed infinite-server queues")]
pub struct Cli {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with settings for the subcommand; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monthly counts from quarterly totals.
    Synthesize(SynthesizeArgs),
    /// Posterior of (β₀, β₁, α) from monthly occupancy counts.
    Fit(FitArgs),
    /// Posterior predictive occupancy.
    Predict(PredictArgs),
    /// Baseline and what-if predictions side by side.
    Scenario(ScenarioArgs),
    /// Mean time to recover from congestion.
    Recover(RecoverArgs),
    /// Time until the last departure once arrivals stop.
    Lastdep(LastdepArgs),
    /// Discrete-event simulation.
    Simulate(SimulateArgs),
    /// HTTP API.
    Serve(ServeArgs),
    /// Re-run a manifest and compare outputs byte for byte.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Default, clap::Args, Serialize, Deserialize)]
pub struct ServeArgs {
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

/// Launches the HTTP service; supplied by the binary.
pub type ServeHook<'a> = &'a dyn Fn(&ServeArgs, Option<&Path>) -> Result<()>;

/// Remediation text shown under an error.
pub fn hint(e: &Error) -> &'static str {
    match e {
        Error::Domain(_) => "check that rates stay non-negative and times lie in the rate's domain",
        Error::Unsupported(_) => "use a Pareto shape alpha > 2 (finite variance) for closed forms",
        Error::Degenerate(_) => "nobody can be present at the observation time; check the rate before tau",
        Error::Infeasible(_) => "recovery needs nu < k < n; lower k or raise n",
        Error::OutOfRange(_) => "probabilities must lie strictly inside the attainable range",
        Error::InvalidParameter { .. } => "fix the named parameter",
        Error::Config(_) => "see `occq <command> --help`",
        Error::Parse { .. } => "fix the input file at the reported line and column",
        Error::NonConvergence(_) => "raise --iterations or tighten the priors",
        Error::Io(_) => "check the path and permissions",
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_DOMAIN,
    }
}

fn merge(base: &mut serde_json::Value, over: serde_json::Value) {
    if let (Some(b), serde_json::Value::Object(o)) = (base.as_object_mut(), over) {
        for (k, v) in o {
            if !v.is_null() {
                b.insert(k, v);
            }
        }
    }
}

fn overlay<T>(cli_args: &T, config: Option<&Path>) -> Result<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let cli_value = serde_json::to_value(cli_args).map_err(|e| Error::Config(e.to_string()))?;
    let Some(path) = config else {
        return serde_json::from_value(cli_value).map_err(|e| Error::Config(e.to_string()));
    };
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut base: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line() as u64,
        column: e.column() as u64,
        message: format!("{}: {e}", path.display()),
    })?;
    if !base.is_object() {
        return Err(Error::Config(format!("{} must hold a JSON object", path.display())));
    }
    merge(&mut base, cli_value);
    serde_json::from_value(base).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn job_from(cmd: &Command, config: Option<&Path>) -> Result<Job> {
    Ok(match cmd {
        Command::Synthesize(a) => Job::Synthesize(overlay(a, config)?),
        Command::Fit(a) => Job::Fit(overlay(a, config)?),
        Command::Predict(a) => Job::Predict(overlay(a, config)?),
        Command::Scenario(a) => Job::Scenario(overlay(a, config)?),
        Command::Recover(a) => Job::Recover(overlay(a, config)?),
        Command::Lastdep(a) => Job::Lastdep(overlay(a, config)?),
        Command::Simulate(a) => Job::Simulate(overlay(a, config)?),
        Command::Serve(_) | Command::Replay(_) => unreachable!("handled by the caller"),
    })
}

/// What the manifest's `config` field holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedRun {
    pub job: Job,
    pub seed: u64,
    pub format: Format,
}

fn write_outputs(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<FileDigest>> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    artifacts
        .iter()
        .map(|a| {
            fs::write(dir.join(&a.name), &a.bytes).map_err(|e| Error::Io(format!("{}: {e}", a.name)))?;
            Ok(FileDigest { path: a.name.clone(), sha256: sha256_hex(&a.bytes) })
        })
        .collect()
}

/// Runs a resolved job, writes its outputs and manifest into `out`.
pub fn run_job(mut run: ResolvedRun, out: &Path) -> Result<RunManifest> {
    let inputs = run.job.resolve_inputs()?;
    let artifacts = run.job.execute(run.seed, run.format)?;
    let outputs = write_outputs(out, &artifacts)?;
    let manifest = RunManifest {
        command: run.job.name().into(),
        inputs: inputs.iter().map(|p| digest_file(p)).collect::<Result<_>>()?,
        config: serde_json::to_value(&run).map_err(|e| Error::Io(e.to_string()))?,
        seed: run.seed,
        out_dir: out.display().to_string(),
        engine_version: ENGINE_VERSION.into(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        outputs,
    };
    manifest.write(out)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub manifest: String,
    pub identical: bool,
    pub mismatched: Vec<String>,
    pub changed_inputs: Vec<String>,
}

/// Re-runs `manifest` into `out` and compares output digests.
pub fn replay(manifest_path: &Path, out: &Path) -> Result<ReplayReport> {
    let m = RunManifest::read(manifest_path)?;
    let changed_inputs = m.changed_inputs()?;
    let run: ResolvedRun = serde_json::from_value(m.config.clone())
        .map_err(|e| Error::Config(format!("manifest config: {e}")))?;
    let artifacts = run.job.execute(run.seed, run.format)?;
    let fresh = write_outputs(out, &artifacts)?;
    let mut mismatched: Vec<String> = m
        .outputs
        .iter()
        .filter(|o| !fresh.contains(o))
        .map(|o| o.path.clone())
        .collect();
    mismatched.extend(fresh.iter().filter(|f| !m.outputs.iter().any(|o| o.path == f.path)).map(|f| f.path.clone()));
    Ok(ReplayReport {
        manifest: manifest_path.display().to_string(),
        identical: mismatched.is_empty() && changed_inputs.is_empty(),
        mismatched,
        changed_inputs,
    })
}

/// Caps rayon's pool from `OCCQ_THREADS`.
pub fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("OCCQ_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("OCCQ_THREADS must be a positive integer, got `{v}`")))?;
        // a pool built earlier in the process stays in place
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn report_error(err: &mut dyn Write, e: &Error) -> i32 {
    let _ = writeln!(err, "error: {e}");
    let _ = writeln!(err, "hint: {}", hint(e));
    exit_code(e)
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I, serve: Option<ServeHook>, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        return report_error(err, &e);
    }
    let result = match &cli.command {
        Command::Serve(a) => match serve {
            Some(hook) => hook(a, cli.config.as_deref()).map(|_| String::new()),
            None => Err(Error::Config("this build has no HTTP service".into())),
        },
        Command::Replay(a) => replay(&a.manifest, &cli.out).and_then(|r| {
            let text = serde_json::to_string_pretty(&r).map_err(|e| Error::Io(e.to_string()))?;
            if r.identical {
                Ok(text)
            } else {
                Err(Error::Domain(format!("replay differs from the manifest: {text}")))
            }
        }),
        cmd => job_from(cmd, cli.config.as_deref()).and_then(|job| {
            let run = ResolvedRun { job, seed: cli.seed.unwrap_or(0), format: cli.format.unwrap_or_default() };
            let m = run_job(run, &cli.out)?;
            Ok(m.outputs.iter().map(|o| cli.out.join(&o.path).display().to_string()).collect::<Vec<_>>().join("\n"))
        }),
    };
    match result {
        Ok(text) => {
            if !text.is_empty() {
                let _ = writeln!(out, "{text}");
            }
            EXIT_OK
        }
        Err(e) => report_error(err, &e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = run(args.iter().copied(), None, &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_args(&["occq"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["occq", "frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run_args(&["occq", "recover", "--lambda", "ten"]).0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = run_args(&["occq", "--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("recover"));
    }

    #[test]
    fn domain_errors_exit_1_with_hint() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let (code, _, err) = run_args(&[
            "occq", "recover", "--out", out, "--lambda", "10", "--mean-service", "3", "--alpha", "3", "--n", "20",
        ]);
        assert_eq!(code, EXIT_DOMAIN);
        assert!(err.contains("infeasible") && err.contains("hint:"), "{err}");
    }

    #[test]
    fn config_file_and_flags_merge() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.json");
        fs::write(&cfg, r#"{"lambda": 10, "mean_service": 3, "scv": 3, "n": 45}"#).unwrap();
        let out = dir.path().join("o");
        let (code, _, err) = run_args(&[
            "occq", "recover", "--config", cfg.to_str().unwrap(), "--n", "60", "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(code, EXIT_OK, "{err}");
        let m = RunManifest::read(&out.join("manifest.json")).unwrap();
        assert_eq!(m.config["job"]["args"]["n"], 60.0);
        assert_eq!(m.config["job"]["args"]["lambda"], 10.0);
    }
}
