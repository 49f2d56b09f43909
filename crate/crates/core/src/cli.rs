//! Command-line front end. Exit status: 0 success, 1 configuration error,
//! 2 runtime error, 3 verification failure.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_config, RunConfig};
use crate::error::{Error, Result};
use crate::harness::{self, VerifySettings};

#[derive(Debug, Parser)]
#[command(name = "plap-sim", version, about = "Penalized stochastic p-Laplace simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. `--set model.p=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads for path-parallel work. Does not affect results.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one trajectory (seed = noise.base_seed) and write it as CSV.
    Run(ConfigArgs),
    /// Monte Carlo statistics over experiment.n_paths paths.
    Mc(ConfigArgs),
    /// Manufactured-solution refinement study.
    Converge(ConfigArgs),
    /// Constraint violation as eps decreases.
    EpsStudy(ConfigArgs),
    /// Evaluate every property check and write a JSON report.
    Verify(ConfigArgs),
    /// Print the empirical monotonicity constant.
    EstimateCp {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
    },
}

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_VERIFY: u8 = 3;

enum Failure {
    Config(Error),
    Runtime(Error),
    Verify(usize),
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_metadata<W: Write>(out: &mut W, pairs: &[(&str, String)]) -> std::io::Result<()> {
    for (k, v) in pairs {
        writeln!(out, "# {k}={v}")?;
    }
    Ok(())
}

/// Seed plus every setting that affects the numbers; the output section is
/// left out so relocating a run does not change its files.
fn seed_metadata(cfg: &RunConfig) -> Vec<(&'static str, String)> {
    let mut value = serde_json::to_value(cfg).expect("config serializes");
    if let Some(obj) = value.as_object_mut() {
        obj.remove("output");
    }
    vec![("base_seed", cfg.noise.base_seed.to_string()), ("config", value.to_string())]
}

fn run_config_command(command: &Command, cfg: &RunConfig) -> std::result::Result<Vec<PathBuf>, Failure> {
    let rt = Failure::Runtime;
    let mut written = Vec::new();
    match command {
        Command::Run(_) => {
            let problem = cfg.problem().map_err(Failure::Config)?;
            let traj = problem.run(cfg.noise.base_seed, cfg.output.mode).map_err(rt)?;
            let path = cfg.output_path("run", "csv");
            let mut out = create(&path).map_err(rt)?;
            let mut meta = seed_metadata(cfg);
            meta.insert(1, ("seed", cfg.noise.base_seed.to_string()));
            write_metadata(&mut out, &meta).map_err(|e| rt(e.into()))?;
            traj.write_csv(&mut out).and_then(|_| out.flush()).map_err(|e| rt(e.into()))?;
            written.push(path);
        }
        Command::Mc(_) => {
            let problem = cfg.problem().map_err(Failure::Config)?;
            let summary = harness::run_mc(&problem, cfg.experiment.n_paths, cfg.noise.base_seed).map_err(rt)?;
            let csv = cfg.output_path("mc", "csv");
            let mut out = create(&csv).map_err(rt)?;
            let mut meta = seed_metadata(cfg);
            meta.push(("n_paths", summary.n_paths.to_string()));
            meta.push(("seed_policy", "path i uses base_seed + i".into()));
            write_metadata(&mut out, &meta).map_err(|e| rt(e.into()))?;
            summary.write_csv(&mut out).and_then(|_| out.flush()).map_err(|e| rt(e.into()))?;
            let json = cfg.output_path("mc", "json");
            let mut out = create(&json).map_err(rt)?;
            serde_json::to_writer_pretty(&mut out, &summary).map_err(|e| rt(e.into()))?;
            writeln!(out).and_then(|_| out.flush()).map_err(|e| rt(e.into()))?;
            written.extend([csv, json]);
        }
        Command::Converge(_) | Command::EpsStudy(_) => {
            let (name, table) = if let Command::Converge(_) = command {
                let setup = cfg.convergence_setup().map_err(Failure::Config)?;
                ("converge", harness::run_deterministic_convergence(&setup, cfg.experiment.levels).map_err(rt)?)
            } else {
                let setup = cfg.eps_setup().map_err(Failure::Config)?;
                ("eps-study", harness::run_eps_study(&setup).map_err(rt)?)
            };
            let path = cfg.output_path(name, "csv");
            let mut out = create(&path).map_err(rt)?;
            let mut meta = seed_metadata(cfg);
            meta.extend(table.metadata.iter().map(|(k, v)| (k.as_str(), v.clone())));
            write_metadata(&mut out, &meta).map_err(|e| rt(e.into()))?;
            table.write_csv(&mut out).and_then(|_| out.flush()).map_err(|e| rt(e.into()))?;
            written.push(path);
        }
        Command::Verify(_) => {
            let problem = cfg.problem().map_err(Failure::Config)?;
            let settings = VerifySettings { seed: cfg.noise.base_seed, ..VerifySettings::default() };
            let report = harness::verify_all(&problem, &settings).map_err(rt)?;
            let path = cfg.output_path("verify", "json");
            let mut out = create(&path).map_err(rt)?;
            serde_json::to_writer_pretty(&mut out, &report).map_err(|e| rt(e.into()))?;
            writeln!(out).and_then(|_| out.flush()).map_err(|e| rt(e.into()))?;
            for c in report.failures() {
                eprintln!(
                    "FAILED {}: measured {:e}, bound {:e}, slack {:e}",
                    c.property, c.measured, c.bound, c.slack
                );
            }
            for c in report.coverage.iter().filter(|c| !c.checked) {
                eprintln!("UNCHECKED {}: {}", c.module, c.invariant);
            }
            println!("{}", path.display());
            if !report.passed {
                return Err(Failure::Verify(report.failures().count()));
            }
            return Ok(written);
        }
        Command::EstimateCp { .. } => unreachable!("handled without a config"),
    }
    Ok(written)
}

/// Runs one parsed command line and maps the outcome to an exit status.
pub fn dispatch(cli: Cli) -> ExitCode {
    let args = match &cli.command {
        Command::EstimateCp { p, d, samples } => {
            if !(*p >= 2.0 && p.is_finite()) || !(1..=3).contains(d) || *samples == 0 {
                eprintln!("error: estimate-cp needs p >= 2, d in 1..=3 and samples >= 1");
                return ExitCode::from(EXIT_CONFIG);
            }
            println!("{:?}", harness::estimate_cp(*p, *d, *samples));
            return ExitCode::SUCCESS;
        }
        Command::Run(a) | Command::Mc(a) | Command::Converge(a) | Command::EpsStudy(a) | Command::Verify(a) => a,
    };
    let cfg = match parse_config(args.config.as_deref(), &args.overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("configuration error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let outcome = match args.workers {
        Some(0) => {
            eprintln!("configuration error: invalid --workers: must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run_config_command(&cli.command, &cfg)),
            Err(e) => {
                eprintln!("runtime error: cannot start worker pool: {e}");
                return ExitCode::from(EXIT_RUNTIME);
            }
        },
        None => run_config_command(&cli.command, &cfg),
    };
    match outcome {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("runtime error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Verify(n)) => {
            eprintln!("verification failed: {n} propert{} violated", if n == 1 { "y" } else { "ies" });
            ExitCode::from(EXIT_VERIFY)
        }
    }
}
