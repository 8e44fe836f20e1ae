use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kelfi_harness::error::HarnessResult;
use kelfi_harness::io::{write_json, write_table};
use kelfi_harness::pipeline::{self, Context};
use kelfi_harness::ExperimentConfig;

#[derive(Parser)]
#[command(name = "kelfi", version, about = "Kernel-embedding likelihood-free inference experiments")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the observation and the budget.
    Simulate,
    /// Learn the kernel scales.
    Learn,
    /// Learn and fit the surrogate; reports q(y).
    Fit,
    /// Learn, fit and draw super-samples.
    Herd,
    /// Full pipeline including the configured evaluation.
    Run,
    /// MKML over the configured learning grid.
    Surface,
    /// Full pipeline with NMSE evaluation enabled.
    Eval,
}

fn load(cli: &Cli) -> HarnessResult<(ExperimentConfig, PathBuf)> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| kelfi_harness::HarnessError::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("kelfi-out"));
    cfg.validate()?;
    Ok((cfg, out))
}

fn prepare(cfg: &ExperimentConfig, out: &Path) -> HarnessResult<Context> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.toml"), cfg.to_toml_string())?;
    let ctx = Context::load_or_simulate(cfg, out)?;
    ctx.write_simulations(out)?;
    Ok(ctx)
}

fn execute(cli: &Cli) -> HarnessResult<()> {
    let (mut cfg, out) = load(cli)?;
    if matches!(cli.command, Command::Eval) && cfg.evaluation.nmse_evals == 0 {
        cfg.evaluation.nmse_evals = 1000;
        cfg.evaluation.calibration = true;
    }
    let ctx = prepare(&cfg, &out)?;
    match cli.command {
        Command::Simulate => {}
        Command::Surface => {
            let s = pipeline::surface(&ctx)?;
            write_table(&out.join("surface.csv"), &pipeline::surface_table(&s))?;
        }
        Command::Learn | Command::Fit | Command::Herd => {
            let learned = pipeline::learn(&ctx)?;
            write_json(&out.join("hyperparameters.json"), &learned)?;
            if let Some(s) = &learned.surface {
                write_table(&out.join("surface.csv"), &pipeline::surface_table(s))?;
            }
            if matches!(cli.command, Command::Learn) {
                return Ok(());
            }
            let state = pipeline::fit(&ctx, &learned.hyper)?;
            write_json(
                &out.join("fit.json"),
                &serde_json::json!({ "mkml": state.mkml(), "residual": state.residual() }),
            )?;
            if matches!(cli.command, Command::Herd) {
                let h = pipeline::herd_samples(&ctx, &state)?;
                write_table(&out.join("super_samples.csv"), &pipeline::samples_table(&h))?;
            }
        }
        Command::Run | Command::Eval => {
            let artifact = pipeline::run_with(&ctx)?;
            pipeline::write_artifact(&out, &artifact)?;
            println!("q(y) = {:e}", artifact.mkml);
            println!("posterior mean = {:?}", artifact.posterior_mean);
            if let Some(tv) = artifact.metrics.tv_vs_truth {
                println!("TV to conjugate posterior = {tv:.4}");
            }
            if let Some(v) = artifact.metrics.nmse_mean {
                println!("NMSE (posterior mean) = {v:.3}%");
            }
        }
    }
    eprintln!("outputs written to {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
