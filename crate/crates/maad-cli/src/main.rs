mod config;
mod plotting;
mod svg;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::{meta_path_for, RunConfig};
use maad::agent::{
    collect_expert_demos, evaluate, evaluate_expert, evaluate_zero_policy, idm_expert_r2,
    policy_expert_r2, Checkpoint, Trainer, METRICS_CSV_HEADER,
};
use maad::data::{load_trajectories, save_trajectories, DatasetMeta, DEFAULT_EVAL_SEED};
use maad::envs::EnvSpec;
use maad::error::Result;
use maad::oracle::run_battery;

#[derive(Parser)]
#[command(
    name = "maad",
    about = "On-policy imitation learning from observations with an inverse-dynamics action-matching regularizer",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Generate scripted-expert trajectories and the return anchors.
    CollectExpert {
        /// Environment name (linear_point | mirror_actuator).
        #[arg(long, default_value = "linear_point")]
        env: String,
        /// Output directory for the dataset and its meta file.
        #[arg(long)]
        out: PathBuf,
        /// Number of expert trajectories.
        #[arg(long, default_value_t = 16)]
        trajectories: usize,
        /// Collection seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Episodes used for the expert/random return anchors.
        #[arg(long, default_value_t = 50)]
        anchor_episodes: usize,
    },
    /// Train one algorithm over the configured seed list.
    Train {
        /// Run configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Evaluate a checkpoint: mean/std return over deterministic episodes
    /// plus R² of policy (and inverse model) actions against the expert.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Expert dataset; anchors are read from its `.meta.json` sibling.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 50)]
        episodes: usize,
    },
    /// Run the exact tabular-MDP identity battery and report residuals.
    Verify {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
        /// Residual report (CSV).
        #[arg(long, default_value = "residuals.csv")]
        out: PathBuf,
    },
    /// Plot learning curves (mean ± std across seeds) from run directories,
    /// plus an optional median-normalized-return chart across environments.
    Plot {
        /// Run directories written by `train`.
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Metrics column to plot.
        #[arg(long, default_value = "normalized_return")]
        metric: String,
        /// Optional output for the per-algorithm median curve across
        /// environments (quantile-resampled).
        #[arg(long)]
        median_out: Option<PathBuf>,
        /// Quantile grid resolution for the median chart.
        #[arg(long, default_value_t = 5000)]
        quantiles: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Commands::CollectExpert {
            env,
            out,
            trajectories,
            seed,
            anchor_episodes,
        } => {
            collect_expert(&env, &out, trajectories, seed, anchor_episodes)?;
            Ok(ExitCode::SUCCESS)
        }
        Commands::Train { config, out_dir } => {
            train(&config, out_dir)?;
            Ok(ExitCode::SUCCESS)
        }
        Commands::Eval {
            checkpoint,
            dataset,
            episodes,
        } => {
            eval(&checkpoint, &dataset, episodes)?;
            Ok(ExitCode::SUCCESS)
        }
        Commands::Verify {
            instances,
            seed,
            tolerance,
            out,
        } => verify(instances, seed, tolerance, &out),
        Commands::Plot {
            runs,
            out,
            metric,
            median_out,
            quantiles,
        } => {
            plotting::plot(&runs, &out, &metric, median_out.as_deref(), quantiles)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn collect_expert(
    env_name: &str,
    out: &PathBuf,
    n: usize,
    seed: u64,
    anchor_episodes: usize,
) -> Result<()> {
    let env = EnvSpec::by_name(env_name)?;
    fs::create_dir_all(out)?;
    let demos = collect_expert_demos(&env, n, seed)?;
    let dataset_path = out.join("expert.jsonl");
    save_trajectories(&dataset_path, &demos)?;

    let expert = evaluate_expert(&env, anchor_episodes, DEFAULT_EVAL_SEED)?;
    let zero = evaluate_zero_policy(&env, anchor_episodes, DEFAULT_EVAL_SEED)?;
    let meta = DatasetMeta {
        env_name: env.name.clone(),
        expert_return: expert.mean_return,
        random_return: zero.mean_return,
        n_eval_episodes: anchor_episodes,
        eval_seed: DEFAULT_EVAL_SEED,
    };
    meta.save(meta_path_for(&dataset_path))?;

    let mean_demo = demos.iter().map(|d| d.ep_return).sum::<f64>() / demos.len() as f64;
    println!(
        "wrote {} trajectories to {}",
        demos.len(),
        dataset_path.display()
    );
    println!(
        "anchors over {anchor_episodes} episodes: expert {:.4} ± {:.4}, random floor {:.4}",
        expert.mean_return, expert.std_return, zero.mean_return
    );
    println!(
        "dataset mean return {:.4} (normalized {:.4})",
        mean_demo,
        meta.normalized_return(mean_demo)
    );
    Ok(())
}

fn train(config_path: &PathBuf, out_dir: Option<PathBuf>) -> Result<()> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(dir) = out_dir {
        cfg.run.out_dir = dir;
    }
    // optional output root for relative run directories
    if let Ok(root) = std::env::var("MAAD_OUT_ROOT") {
        if cfg.run.out_dir.is_relative() {
            cfg.run.out_dir = PathBuf::from(root).join(&cfg.run.out_dir);
        }
    }
    let resolved = cfg.to_toml()?;
    let hash = cfg.hash()?;
    fs::create_dir_all(&cfg.run.out_dir)?;
    fs::write(cfg.run.out_dir.join("config.resolved.toml"), &resolved)?;
    println!(
        "algorithm {} on {} (λ_reg = {}, rollout {}, config {hash})",
        cfg.train.algorithm.name(),
        cfg.env.name,
        cfg.train.lambda_reg,
        cfg.train.rollout_length
    );

    let demos = load_trajectories(&cfg.run.dataset)?;
    let meta = DatasetMeta::load(cfg.meta_path())?;

    for &seed in &cfg.run.seeds {
        let seed_dir = cfg.run.out_dir.join(format!("seed_{seed}"));
        fs::create_dir_all(&seed_dir)?;
        let mut trainer = Trainer::new(
            cfg.train.clone(),
            cfg.env.clone(),
            seed,
            demos.clone(),
            meta.clone(),
        )?;

        let mut metrics_file = fs::File::create(seed_dir.join("metrics.csv"))?;
        writeln!(metrics_file, "{METRICS_CSV_HEADER}")?;
        // iteration timings are non-deterministic; they live in a sidecar so
        // the metrics file is bit-reproducible
        let mut timing_file = fs::File::create(seed_dir.join("timing.csv"))?;
        writeln!(timing_file, "iteration,wall_time_s")?;

        let started = Instant::now();
        while !trainer.is_done() {
            let t0 = Instant::now();
            let row = trainer.train_iteration()?;
            writeln!(metrics_file, "{}", row.csv_row())?;
            metrics_file.flush()?;
            writeln!(
                timing_file,
                "{},{}",
                row.iteration,
                t0.elapsed().as_secs_f64()
            )?;
            if row.iteration % 10 == 0 || trainer.is_done() {
                println!(
                    "[seed {seed}] iter {:>4} steps {:>8} return {:>10.4} normalized {:>7.4}",
                    row.iteration, row.env_steps, row.mean_return, row.normalized_return
                );
            }
        }
        Checkpoint::from_trainer(&trainer, &hash).save(seed_dir.join("checkpoint.json"))?;
        println!(
            "[seed {seed}] finished in {:.1}s -> {}",
            started.elapsed().as_secs_f64(),
            seed_dir.display()
        );
    }
    Ok(())
}

fn eval(checkpoint: &PathBuf, dataset: &PathBuf, episodes: usize) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let policy = ckpt.policy()?;
    let demos = load_trajectories(dataset)?;
    let meta = DatasetMeta::load(meta_path_for(dataset))?;

    let report = evaluate(&policy, &ckpt.env, episodes, meta.eval_seed)?;
    println!(
        "return over {episodes} episodes: {:.4} ± {:.4} (normalized {:.4})",
        report.mean_return,
        report.std_return,
        meta.normalized_return(report.mean_return)
    );
    let r2 = policy_expert_r2(&policy, &demos)?;
    println!("policy R² against expert actions: {r2:.4}");
    if let Some(idm) = ckpt.idm()? {
        let r2 = idm_expert_r2(&idm, &demos)?;
        println!("inverse model R² against expert actions: {r2:.4}");
    }
    Ok(())
}

fn verify(instances: usize, seed: u64, tolerance: f64, out: &PathBuf) -> Result<ExitCode> {
    let started = Instant::now();
    let report = run_battery(instances, seed, tolerance)?;
    let mut csv =
        String::from("instance,idd_residual,bound_residual,bound_slack,occupancy_mass_error\n");
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            row.instance,
            row.idd_residual,
            row.bound_residual,
            row.bound_slack,
            row.occupancy_mass_error
        ));
    }
    fs::write(out, csv)?;
    println!(
        "verified {instances} randomized tabular instances in {:.2}s",
        started.elapsed().as_secs_f64()
    );
    println!(
        "  max |idd residual|      = {:.3e}",
        report.max_idd_residual
    );
    println!(
        "  max |bound residual|    = {:.3e}",
        report.max_bound_residual
    );
    println!("  min bound slack         = {:.3e}", report.min_bound_slack);
    println!(
        "  sup integral term       = {:.6} (reported, not asserted)",
        report.sup_integral_term
    );
    println!("  residual report         -> {}", out.display());
    if report.pass {
        println!("PASS (tolerance {tolerance:.1e})");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("FAIL (tolerance {tolerance:.1e})");
        Ok(ExitCode::FAILURE)
    }
}
