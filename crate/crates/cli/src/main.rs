//! `maxdual`: batch runner for the maxdual-core experiments.
//!
//! Exit status: 0 when every hard check passed, 1 when one failed (the
//! failing check ids go to stderr), 2 on configuration or runtime errors.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{load_file, ExperimentConfig, Overrides};

#[derive(Parser, Debug)]
#[command(name = "maxdual", version, about = "Experiments on maximal operators in weighted variable-exponent spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Lattice resolution: 3 * 2^m cells per axis.
    #[arg(long, global = true)]
    m: Option<u32>,
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Space preset: calibration, loghold or adversarial.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Function preset, e.g. `step:2,0,0.25` or `random:3`.
    #[arg(long, global = true)]
    function: Option<String>,
    /// Exponent preset replacing the space's, e.g. `const:3`.
    #[arg(long, global = true)]
    exponent: Option<String>,
    /// Weight preset replacing the space's, e.g. `power-weight:0.25`.
    #[arg(long, global = true)]
    weight: Option<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Luxemburg and weighted norms of a function.
    Norm,
    /// Compute and serialize a maximal function.
    Maximal,
    /// Stopping-time and sparse families with certificates.
    Sparse,
    /// A_p, A_p(.), reverse-Hölder and A_infinity probes for the weight.
    Apconst,
    /// Rubio de Francia iteration.
    Rdf,
    /// Reverse-Hölder, truncation, scale-window and key-bound probes.
    Lemmas,
    /// Operator-norm estimates on X and X' across resolutions.
    Duality,
    /// The full invariant suite.
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Norm => "norm",
            Command::Maximal => "maximal",
            Command::Sparse => "sparse",
            Command::Apconst => "apconst",
            Command::Rdf => "rdf",
            Command::Lemmas => "lemmas",
            Command::Duality => "duality",
            Command::Selftest => "selftest",
        }
    }
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("MAXDUAL_THREADS") {
        let n: usize =
            v.trim().parse().map_err(|_| anyhow::anyhow!("MAXDUAL_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            anyhow::bail!("MAXDUAL_THREADS must be positive");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    init_threads()?;
    let file = load_file(cli.config.as_deref())?;
    let ov = Overrides {
        seed: cli.seed,
        dim: cli.dim,
        m: cli.m,
        preset: cli.preset,
        out_dir: cli.out_dir,
        function: cli.function,
        exponent: cli.exponent,
        weight: cli.weight,
    };
    let cfg = ExperimentConfig::resolve(cli.command.name(), file, ov)?;
    log::info!("running {} at n = {}, m = {}, seed = {}", cfg.command, cfg.n, cfg.m, cfg.seed);
    let mut outcome = commands::run(&cfg)?;
    let written = output::write_outputs(&cfg, &mut outcome.reports, &outcome.headline)?;
    for (name, body) in &outcome.extra_files {
        std::fs::write(cfg.out_dir.join(name), body)?;
    }
    for h in &outcome.headline {
        println!("{h}");
    }
    log::info!("wrote {} files to {}", written.len() + outcome.extra_files.len(), cfg.out_dir.display());
    let failures: Vec<String> = outcome.reports.iter().flat_map(|r| r.failures()).collect();
    for f in &failures {
        eprintln!("assertion failed: {f}");
    }
    Ok(failures.is_empty())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
