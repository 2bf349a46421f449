//! Command-line driver: resolves a scenario, runs it in a worker pool and
//! writes data files followed by a result manifest.

pub mod run;
pub mod scenario;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
pub use scenario::{Command, Engine, Inputs, Observable, ScenarioArgs, ScenarioSpec};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "dptsim", version, about = "Quench dynamics of all-to-all coupled qubit arrays")]
pub struct Cli {
    /// Worker threads for sweep points (default: available parallelism).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML config file; its keys override the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub scenario: ScenarioArgs,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Single quench trajectories: echo, magnetisation, correlations, squeezing.
    Quench(RunArgs),
    /// Field sweep tables: order parameter, C_zz, echo minima, squeezing.
    Sweep(RunArgs),
    /// Echo-only runs with first and global minima.
    Loschmidt(RunArgs),
    /// Squeezing series and the optimum per field.
    Squeeze(RunArgs),
    /// Husimi Q-functions at chosen times.
    Qfunc(RunArgs),
    /// Shot-sampled squeezing estimate against the exact value.
    Sample(RunArgs),
    /// Size scaling of echo minima and of the squeezing optimum (collective model).
    Scaling(RunArgs),
    /// Crosstalk correction and drive uniformity check.
    CalibCheck(RunArgs),
    /// Re-runs the scenario stored in a manifest.
    Replay {
        manifest: PathBuf,
        /// Output directory; defaults to the manifest's own.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileKind {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    /// Relative to the output directory.
    pub path: String,
    pub kind: FileKind,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub label: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultManifest {
    pub command: Command,
    pub version: String,
    pub scenario_hash: String,
    pub scenario: ScenarioSpec,
    pub inputs: Inputs,
    pub files: Vec<ManifestFile>,
    pub timings: Vec<Timing>,
    pub total_seconds: f64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of everything that determines the outputs. The output directory is
/// excluded so a replay elsewhere hashes the same.
pub fn scenario_hash(cmd: Command, spec: &ScenarioSpec, inputs: &Inputs) -> Result<String> {
    let mut spec = spec.clone();
    spec.output = PathBuf::new();
    let canonical = serde_json::to_string(&serde_json::json!({
        "command": cmd,
        "scenario": spec,
        "inputs": inputs,
    }))?;
    Ok(sha256_hex(canonical.as_bytes()))
}

impl ResultManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref())?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))
    }

    /// Checks that every listed file exists, matches its hash and parses.
    pub fn verify(&self, dir: impl AsRef<Path>) -> Result<()> {
        for f in &self.files {
            let path = dir.as_ref().join(&f.path);
            let bytes = fs::read(&path)?;
            if sha256_hex(&bytes) != f.sha256 {
                return Err(Error::Numerical(format!("{} does not match its recorded hash", f.path)));
            }
            match f.kind {
                FileKind::Json => {
                    serde_json::from_slice::<serde_json::Value>(&bytes)?;
                }
                FileKind::Csv => {
                    let mut r = csv::Reader::from_reader(bytes.as_slice());
                    for rec in r.records() {
                        rec?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Runs one scenario and writes its manifest last.
pub fn execute(cmd: Command, spec: &ScenarioSpec, inputs: &Inputs, jobs: Option<usize>) -> Result<ResultManifest> {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let outcome = pool.install(|| run::execute(cmd, spec, inputs))?;
    let files = outcome
        .files
        .into_iter()
        .map(|(path, kind)| {
            let bytes = fs::read(spec.output.join(&path))?;
            Ok(ManifestFile {
                sha256: sha256_hex(&bytes),
                path,
                kind,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = ResultManifest {
        command: cmd,
        version: env!("CARGO_PKG_VERSION").to_string(),
        scenario_hash: scenario_hash(cmd, spec, inputs)?,
        scenario: spec.clone(),
        inputs: inputs.clone(),
        files,
        timings: outcome.timings,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    run::atomic_write(&spec.output.join(MANIFEST_NAME), |p| {
        Ok(fs::write(p, serde_json::to_string_pretty(&manifest)? + "\n")?)
    })?;
    Ok(manifest)
}

fn command_of(sub: &Sub) -> Option<(Command, &RunArgs)> {
    Some(match sub {
        Sub::Quench(a) => (Command::Quench, a),
        Sub::Sweep(a) => (Command::Sweep, a),
        Sub::Loschmidt(a) => (Command::Loschmidt, a),
        Sub::Squeeze(a) => (Command::Squeeze, a),
        Sub::Qfunc(a) => (Command::Qfunc, a),
        Sub::Sample(a) => (Command::Sample, a),
        Sub::Scaling(a) => (Command::Scaling, a),
        Sub::CalibCheck(a) => (Command::CalibCheck, a),
        Sub::Replay { .. } => return None,
    })
}

pub fn dispatch(cli: &Cli) -> Result<ResultManifest> {
    match command_of(&cli.command) {
        Some((cmd, args)) => {
            let config = args.config.as_deref().map(scenario::load_config).transpose()?;
            let spec = ScenarioSpec::resolve(cmd, &args.scenario, config.as_ref())?;
            let inputs = Inputs::load(&spec)?;
            execute(cmd, &spec, &inputs, cli.jobs)
        }
        None => {
            let Sub::Replay { manifest, output } = &cli.command else { unreachable!() };
            let old = ResultManifest::load(manifest)?;
            let mut spec = old.scenario.clone();
            spec.output = match output {
                Some(o) => o.clone(),
                None => manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
            };
            spec.validate(old.command)?;
            execute(old.command, &spec, &old.inputs, cli.jobs)
        }
    }
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(m) => {
            println!(
                "{}: {} files, {:.1} s, scenario {}",
                m.command.name(),
                m.files.len(),
                m.total_seconds,
                &m.scenario_hash[..12]
            );
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
