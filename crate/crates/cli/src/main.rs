use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use bistable_moran_cli::commands;
use bistable_moran_cli::config::RunConfig;
use bistable_moran_cli::verify::{run_suite, Status, Suite, VerifyOptions};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bistable-moran", version, about = "Bistable Moran model simulator and lineage tracer")]
struct Cli {
    /// Worker threads for independent replicates (default: hardware threads).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every seed of a config and write one run directory per seed.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run this seed instead of the config's seed list.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Sample type-A individuals at the end of a stored run and trace them back.
    Trace {
        /// Run directory written by `simulate`.
        run: PathBuf,
        /// Config providing the sample spec (default: k0 = 2, K0 = 2, uniform, seed 0).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default: the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sampling seed, overriding the sample spec.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve the lattice equation from the travelling wave.
    Pde {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Time step (default: half the explicit stability bound).
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Simulate the lineage diffusion, one path per seed.
    Sde {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Starting position relative to the front.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        z0: f64,
    },
    /// Sample Kingman coalescents.
    Kingman {
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Run acceptance suites and write a JSON report per suite.
    Verify {
        #[arg(required = true, value_enum)]
        suites: Vec<Suite>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Wall-clock budget in seconds; 0 skips.
        #[arg(long)]
        budget: Option<f64>,
        /// Directory for `verify-<suite>.json` (default: print to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(config: &PathBuf, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(seed) = seed {
        cfg.seeds = vec![seed];
    }
    Ok(cfg)
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Simulate { config, out, seed } => {
            let cfg = load(&config, seed)?;
            let out = out.unwrap_or_else(|| cfg.out_dir.clone());
            for dir in commands::simulate(&cfg, &out)? {
                println!("{}", dir.display());
            }
        }
        Command::Trace { run, config, out, seed } => {
            let mut spec = match config {
                Some(path) => RunConfig::load(&path)?.sample,
                None => Default::default(),
            };
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let out = out.unwrap_or_else(|| run.clone());
            let (samples, g) = commands::trace_run(&run, &spec, &out)?;
            let merged = g.tau.upper().filter(|(_, _, t)| t.finite().is_some()).count();
            println!("traced {} samples; {merged} pairs merged", samples.len());
        }
        Command::Pde { config, out, dt } => {
            let cfg = load(&config, None)?;
            let out = out.unwrap_or_else(|| cfg.out_dir.clone());
            let fields = commands::pde(&cfg, dt, &out)?;
            println!("{} fields written to {}", fields.len(), out.join("pde.csv").display());
        }
        Command::Sde { config, out, seed, dt, z0 } => {
            let cfg = load(&config, seed)?;
            let out = out.unwrap_or_else(|| cfg.out_dir.clone());
            commands::sde(&cfg, dt, z0, &out)?;
            commands::write_pi_table(&cfg, &out)?;
        }
        Command::Kingman { k, count, seed, out } => commands::kingman(k, count, seed, &out)?,
        Command::Verify { suites, seed, budget, out } => {
            let mut all = true;
            for suite in suites {
                let report = run_suite(suite, VerifyOptions { seed, budget })?;
                for c in &report.criteria {
                    eprintln!("{}", c.summary_line());
                }
                if report.status == Status::Skipped {
                    eprintln!("SKIPPED {suite:?}: zero budget");
                }
                let text = serde_json::to_string_pretty(&report)?;
                match &out {
                    Some(dir) => {
                        std::fs::create_dir_all(dir)?;
                        let name = serde_json::to_value(suite)?.as_str().unwrap_or("suite").to_string();
                        let path = dir.join(format!("verify-{name}.json"));
                        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
                    }
                    None => println!("{text}"),
                }
                all &= report.pass;
            }
            return Ok(all);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
