mod config;
mod error;
mod pipelines;

use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use error::CliError;
use pipelines::{Lab, STAGES};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(name = "jumplab", version = env!("JUMPLAB_BUILD_ID"), about = "Experiments on SDEs driven by pure-jump Lévy noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set sde.paths=16`
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Master seed; takes precedence over the file and `--set`
    #[arg(long, global = true, env = "LAB_SEED")]
    seed: Option<u64>,

    /// Output directory (defaults to `output.dir`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    CertifyMeasure,
    SamplePath,
    LpSuite,
    Bernstein,
    Commutator,
    Resolvent,
    Zvonkin,
    Sde,
    Flow,
    Malliavin,
    Pbp,
    /// Every stage in order; a failing stage does not stop the rest
    All,
    /// Print the resolved configuration and exit
    ShowConfig,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::CertifyMeasure => "certify-measure",
            Command::SamplePath => "sample-path",
            Command::LpSuite => "lp-suite",
            Command::Bernstein => "bernstein",
            Command::Commutator => "commutator",
            Command::Resolvent => "resolvent",
            Command::Zvonkin => "zvonkin",
            Command::Sde => "sde",
            Command::Flow => "flow",
            Command::Malliavin => "malliavin",
            Command::Pbp => "pbp",
            Command::All => "all",
            Command::ShowConfig => "show-config",
        }
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    for s in &cli.overrides {
        cfg.set(s)?;
    }
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sha256_file(p: &Path) -> Result<(String, u64), CliError> {
    let bytes = std::fs::read(p).map_err(|source| CliError::Io {
        path: p.display().to_string(),
        source,
    })?;
    Ok((format!("{:x}", Sha256::digest(&bytes)), bytes.len() as u64))
}

fn write_file(p: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(p, contents).map_err(|source| CliError::Io {
        path: p.display().to_string(),
        source,
    })
}

/// Runs the stages and writes `report.json` and `manifest.sha256`.
/// Returns whether every asserted invariant held.
fn execute(cmd: Command, cfg: &ExperimentConfig, out: &Path) -> Result<bool, CliError> {
    std::fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.display().to_string(),
        source,
    })?;
    let stages: Vec<&str> = match cmd {
        Command::All => STAGES.to_vec(),
        c => vec![c.name()],
    };
    let mut lab = Lab::new(cfg, out);
    let mut modules = Map::new();
    let mut timings = Map::new();
    let mut failures = Vec::new();
    let mut errors = Vec::new();
    for stage in stages {
        let t0 = Instant::now();
        let res = lab.run(stage);
        timings.insert(stage.into(), json!(t0.elapsed().as_secs_f64()));
        match res {
            Ok(r) => {
                failures.extend(r.failures.iter().map(|f| format!("{stage}: {f}")));
                modules.insert(stage.into(), r.report);
            }
            Err(e) if matches!(cmd, Command::All) => {
                eprintln!("{stage}: {e}");
                errors.push(format!("{stage}: {e}"));
                modules.insert(stage.into(), json!({ "error": e.to_string() }));
            }
            Err(e) => return Err(e),
        }
    }
    let mut artifacts = Map::new();
    let mut manifest = String::new();
    let mut names = lab.artifacts.clone();
    names.sort();
    names.dedup();
    for name in &names {
        let (hash, bytes) = sha256_file(&out.join(name))?;
        let key = name.to_string_lossy().replace('\\', "/");
        manifest.push_str(&format!("{hash}  {key}\n"));
        artifacts.insert(key, json!({ "sha256": hash, "bytes": bytes }));
    }
    let pass = failures.is_empty() && errors.is_empty();
    let snapshot: Value = serde_json::to_value(cfg).expect("config serializes");
    let report = json!({
        "build_id": env!("JUMPLAB_BUILD_ID"),
        "subcommand": cmd.name(),
        "config": snapshot,
        "modules": modules,
        "timings_s": timings,
        "pass": pass,
        "failures": failures,
        "errors": errors,
        "artifacts": artifacts,
    });
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&out.join("report.json"), &text)?;
    let (hash, _) = sha256_file(&out.join("report.json"))?;
    manifest.push_str(&format!("{hash}  report.json\n"));
    write_file(&out.join("manifest.sha256"), &manifest)?;
    for f in &failures {
        eprintln!("FAIL {f}");
    }
    if !errors.is_empty() {
        return Err(CliError::ConfigInvalid(errors.join("; ")));
    }
    Ok(pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Command::ShowConfig = cli.command {
        print!("{}", cfg.to_toml());
        return ExitCode::SUCCESS;
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    match execute(cli.command, &cfg, &out) {
        Ok(true) => {
            println!("{}: pass ({})", cli.command.name(), out.join("report.json").display());
            ExitCode::SUCCESS
        }
        Ok(false) => {
            println!("{}: invariant failure ({})", cli.command.name(), out.join("report.json").display());
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
