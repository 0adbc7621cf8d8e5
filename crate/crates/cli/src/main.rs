use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use nsf_layers_cli::commands::{self, Outcome};
use nsf_layers_cli::config::RunConfig;
use nsf_layers_cli::manifest::{resolve_out_dir, ArtifactWriter, OUT_ENV};

#[derive(Parser)]
#[command(name = "nsf-layers", version, about = "Boundary-layer expansions of the linearized NSF system")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration, dotted `key = value` text or JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Expansion order N.
    #[arg(long, global = true)]
    order: Option<usize>,
    /// Replaces the configured epsilons; repeat for several.
    #[arg(long, global = true)]
    epsilon: Vec<f64>,
    /// Output directory; overrides NSF_LAYERS_OUT and the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the ε sweep and the Prandtl lines.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Coefficient matrices and the wall eigenframe.
    Matrices,
    /// Inner and layer terms up to order N.
    Build,
    /// Direct NSF solves at each epsilon.
    Reference,
    /// Error rates of the composed expansion against the direct solves.
    Converge,
    /// Property batteries; nonzero exit on any failure.
    Verify,
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(n) = cli.order {
        cfg.order = n;
    }
    if !cli.epsilon.is_empty() {
        cfg.epsilons = cli.epsilon.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(name: &str, o: &Outcome) {
    println!("{name}: {}", if o.passed { "pass" } else { "FAIL" });
    for f in &o.manifest.files {
        println!("  {} {}", f.sha256, f.path);
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cfg = load(&cli)?;
    let env = std::env::var(OUT_ENV).ok();
    let dir = resolve_out_dir(cli.out.as_deref(), env.as_deref(), &cfg);
    let out = ArtifactWriter::new(&dir)?;
    let outcome = match cli.command {
        Command::Matrices => commands::matrices(&cfg, out)?,
        Command::Build => commands::build(&cfg, out)?,
        Command::Reference => commands::reference(&cfg, out)?,
        Command::Converge => commands::converge(&cfg, out)?,
        Command::Verify => {
            let (o, r) = commands::verify(&cfg, out)?;
            for c in &r.checks {
                println!("[{}] {} ({:.2} s): {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.seconds, c.detail);
            }
            o
        }
    };
    let name = match cli.command {
        Command::Matrices => "matrices",
        Command::Build => "build",
        Command::Reference => "reference",
        Command::Converge => "converge",
        Command::Verify => "verify",
    };
    report(name, &outcome);
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
