//! Command-line driver: each subcommand is a thin view over the library
//! pipeline. Exit code 0 means every verdict passed, 2 means the run
//! finished but the verdict did not pass, 1 means an error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use nlwave::entropy::Verdict;
use nlwave::harness::{
    self, parse_config, ExperimentConfig, RunOutcome, RunStatus, SweepJob, SweepRow,
};
use nlwave::kernels::{Grid, KernelRegistry};
use nlwave::models::{ModelCatalog, SigmaPolicy};
use nlwave::simulate::linear_decay_experiment;
use nlwave::spectral::SpeedProblem;
use nlwave::waves::{compute_profile, RelaxOptions};

#[derive(Parser)]
#[command(name = "nlwave", version, about = "Nonlocal-dispersal invasion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimal invasion speed and speed curve for the configured kernel and model.
    Speed {
        #[arg(long)]
        config: PathBuf,
        /// Rows in the printed speed-curve table.
        #[arg(long, default_value_t = 21)]
        table: usize,
    },
    /// Model catalog operations.
    Models {
        #[command(subcommand)]
        action: ModelsCommand,
    },
    /// Relax the traveling wave and save it.
    Wave {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for profile.dat.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the experiment pipeline and write all artifacts.
    Simulate(RunArgs),
    /// Run the experiment pipeline and report the convergence verdict.
    Verify(RunArgs),
    /// Decay measurement for the pure-dispersal flow on compact data.
    Decay {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run several configs and summarize the verdicts.
    Sweep {
        /// Config files, one run each; directory names come from file stems.
        #[arg(long = "config", required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
        /// Root directory; each run gets its own subdirectory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Replace run.seed in every config.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Subcommand)]
enum ModelsCommand {
    /// Print every registered model with constraints and defaults.
    List,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's run.out_dir, else "./run".
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace run.seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Speed { config, table } => cmd_speed(&config, table),
        Command::Models { action: ModelsCommand::List } => cmd_models_list(),
        Command::Wave { config, out } => cmd_wave(&config, &out),
        Command::Simulate(args) => cmd_run(&args, false),
        Command::Verify(args) => cmd_run(&args, true),
        Command::Decay { config } => cmd_decay(&config),
        Command::Sweep {
            configs,
            out,
            parallel,
            seed,
        } => cmd_sweep(&configs, &out, parallel, seed),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("config {}", path.display()))
}

fn build_parts(
    config: &ExperimentConfig,
) -> Result<(nlwave::models::ReactionModel, nlwave::kernels::DispersalKernel)> {
    let model = ModelCatalog::builtin().build(
        &config.model.name,
        &config.model.params,
        config.model.sigma.as_deref(),
    )?;
    let kernel = KernelRegistry::builtin().build(&config.kernel.to_spec())?;
    Ok((model, kernel))
}

fn cmd_speed(config_path: &Path, table: usize) -> Result<ExitCode> {
    let config = load_config(config_path)?;
    let (model, kernel) = build_parts(&config)?;
    let problem = SpeedProblem::new(kernel, model.spreading_rate())?;
    let minimal = problem.minimal_speed()?;

    println!(
        "kernel {}; model {} (spreading rate {})",
        config.kernel.kind,
        model.name(),
        model.spreading_rate()
    );
    println!(
        "c_star = {:.16} at lambda = {:.16}",
        minimal.c, minimal.lambda
    );
    if minimal.boundary_infimum {
        println!("note: infimum sits on the search boundary; c_star is an upper bound");
    }
    println!("speed c = {:.16}", config.speed.resolve(minimal.c));

    if table >= 2 {
        println!();
        println!("{:>12}  {:>18}", "lambda", "G(lambda)");
        let lo = minimal.lambda / 4.0;
        let hi = (2.0 * minimal.lambda).min(problem.lambda_cap());
        for k in 0..table {
            let lambda = lo + (hi - lo) * k as f64 / (table - 1) as f64;
            let g = problem.speed_function(lambda)?;
            println!("{lambda:>12.6}  {g:>18.12}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_models_list() -> Result<ExitCode> {
    let catalog = ModelCatalog::builtin();
    for family in catalog.entries() {
        println!("{:<14} {}", family.name(), family.about());
        println!("{:<14}   constraints: {}", "", family.constraints());
        let defaults = family
            .defaults()
            .iter()
            .map(|(k, v)| format!("{k} = {v}"))
            .collect::<Vec<_>>()
            .join(", ");
        println!("{:<14}   defaults:    {}", "", defaults);
        let sigma = match family.sigma_policy() {
            SigmaPolicy::BuiltIn => "built-in (overridable)",
            SigmaPolicy::Required => "required",
        };
        println!("{:<14}   sigma:       {}", "", sigma);
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_wave(config_path: &Path, out: &Path) -> Result<ExitCode> {
    let config = load_config(config_path)?;
    let (model, kernel) = build_parts(&config)?;
    let grid = Grid::for_kernel(config.grid.half_width, config.grid.dx, &kernel)?;
    let minimal = nlwave::spectral::model_minimal_speed(&model, &kernel)?;
    let c = config.speed.resolve(minimal.c);
    let opts = RelaxOptions {
        tol: config.wave.tol,
        max_time: config.wave.max_time,
        ..RelaxOptions::default()
    };
    let profile = compute_profile(&model, &kernel, c, &grid, &opts)?;

    fs::create_dir_all(out)?;
    let path = out.join(harness::PROFILE_FILE);
    profile.save(&path)?;
    println!("c = {:.16} ({} x c_star {:.16})", c, c / minimal.c, minimal.c);
    println!("residual_sup = {:.3e}", profile.residual_sup);
    println!("e_minus = {}", join(&profile.e_minus));
    println!("e_plus  = {}", join(&profile.e_plus));
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.10}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn cmd_run(args: &RunArgs, verdict_view: bool) -> Result<ExitCode> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    let out_dir = args
        .out
        .clone()
        .unwrap_or_else(|| harness::output_dir(&config, Path::new("run")));
    let outcome = harness::run_experiment(&config, &out_dir)?;
    print_outcome(&outcome, verdict_view);
    Ok(exit_for(&outcome))
}

fn print_outcome(outcome: &RunOutcome, verdict_view: bool) {
    let m = &outcome.manifest;
    let status = match m.status {
        RunStatus::Running => "running",
        RunStatus::Complete => "complete",
        RunStatus::Aborted => "aborted",
        RunStatus::Failed => "failed",
    };
    println!("status: {status}");
    if let Some(e) = &m.error {
        println!("reason: {e}");
    }
    if let Some(d) = &m.derived {
        println!("c = {:.10}  c_star = {:.10}", d.c, d.c_star);
        if let Some(l) = d.lambda_c {
            println!("lambda_c = {l:.10}");
        }
        if !verdict_view {
            if let Some(r) = d.profile_residual_sup {
                println!("profile residual_sup = {r:.3e}");
            }
            if let Some(dt) = d.dt {
                println!("dt = {dt:.6}");
            }
        }
    }
    if let Some(v) = &m.verdict {
        println!("verdict: {}", v.verdict);
        println!("final_local_sup = {:.3e}", v.final_local_sup);
        println!("max_v_growth = {:.6}", v.max_v_growth);
        if let Some(s) = v.decay_exponent {
            println!("decay_exponent = {s:.4}");
        }
        println!("residual_sup_max = {:.3e}", v.residual_sup_max);
    }
    println!(
        "artifacts in {} (manifest.json, profile.dat, trace.ndjson, state.dat)",
        outcome.out_dir.display()
    );
}

/// 0 only for a completed run whose verdict is CONVERGED; a clean abort
/// or any other verdict is 2 (ran fine, did not pass).
fn exit_for(outcome: &RunOutcome) -> ExitCode {
    match (outcome.manifest.status, &outcome.manifest.verdict) {
        (RunStatus::Complete, Some(v)) if v.verdict == Verdict::Converged => ExitCode::SUCCESS,
        (RunStatus::Failed, _) => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn cmd_decay(config_path: &Path) -> Result<ExitCode> {
    let config = load_config(config_path)?;
    let (_, kernel) = build_parts(&config)?;
    let grid = Grid::for_kernel(config.grid.half_width, config.grid.dx, &kernel)?;

    // Compact initial data from the perturbation section: unit-height
    // bump unless an amplitude is configured.
    let p = &config.perturbation;
    let amplitude = if p.amplitude > 0.0 { p.amplitude } else { 1.0 };
    let v0: Vec<f64> = grid
        .nodes()
        .into_iter()
        .map(|z| {
            let x = 2.0 * (z - p.center) / p.width;
            if x.abs() >= 1.0 {
                0.0
            } else {
                amplitude * (1.0 - 1.0 / (1.0 - x * x)).exp()
            }
        })
        .collect();

    let outcome = linear_decay_experiment(
        &kernel,
        &grid,
        &v0,
        config.run.t_end,
        nlwave::kernels::ConvMode::Auto,
    )?;
    println!("{:>10}  {:>14}", "t", "sup|v|");
    for (t, s) in outcome.times.iter().zip(&outcome.sup_norms) {
        println!("{t:>10.2}  {s:>14.6e}");
    }
    println!("slope = {:.4} (log sup|v| per log t, last decade)", outcome.slope);
    println!("escaped_fraction = {:.3e}", outcome.escaped_fraction);
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(
    configs: &[PathBuf],
    out: &Path,
    parallel: usize,
    seed: Option<u64>,
) -> Result<ExitCode> {
    let mut jobs = Vec::with_capacity(configs.len());
    for path in configs {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .map(str::to_owned)
            .unwrap_or_else(|| format!("job{}", jobs.len()));
        let mut text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        if let Some(seed) = seed {
            // Reseed by canonical rewrite; an unparsable config passes
            // through so it fails inside its own isolated row.
            if let Ok(mut config) = parse_config(&text) {
                config.run.seed = seed;
                text = harness::canonical_toml(&config)?;
            }
        }
        jobs.push(SweepJob { name, text });
    }

    let rows = harness::sweep(&jobs, parallel, out)?;
    print_rows(&rows);
    println!("summary: {}", out.join(harness::SUMMARY_FILE).display());

    let all_pass = rows
        .iter()
        .all(|r| r.status == RunStatus::Complete && r.verdict == Some(Verdict::Converged));
    if rows.is_empty() || all_pass {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn print_rows(rows: &[SweepRow]) {
    println!(
        "{:<16} {:<12} {:>10} {:<9} {:<17} {:>14} {:>14}",
        "name", "model", "c", "status", "verdict", "local_sup", "residual_max"
    );
    for r in rows {
        let status = match r.status {
            RunStatus::Running => "running",
            RunStatus::Complete => "complete",
            RunStatus::Aborted => "aborted",
            RunStatus::Failed => "failed",
        };
        println!(
            "{:<16} {:<12} {:>10} {:<9} {:<17} {:>14} {:>14}",
            r.name,
            r.model.as_deref().unwrap_or("-"),
            r.c.map_or_else(|| "-".into(), |c| format!("{c:.4}")),
            status,
            r.verdict.map_or_else(|| "-".into(), |v| v.to_string()),
            r.final_local_sup
                .map_or_else(|| "-".into(), |v| format!("{v:.3e}")),
            r.residual_sup_max
                .map_or_else(|| "-".into(), |v| format!("{v:.3e}")),
        );
        if let Some(e) = &r.error {
            println!("    {e}");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
