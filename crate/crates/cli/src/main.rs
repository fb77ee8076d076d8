use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use fhcomp::agents::{train, TrainedAgent};
use fhcomp::harness::{
    evaluate, evaluate_checkpoint, oracle_suite, reference_controller, run_reference, AgentSelection,
    EvaluationReport, ExperimentConfig, FixedController, SEED_ENV,
};
use fhcomp::nn::checkpoint::Checkpoint;
use fhcomp::traffic::{init_traffic, write_trace_csv};

#[derive(Debug, Parser)]
#[command(name = "fhcomp", version, about = "Fronthaul compression control with constrained multi-head RL")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run seed; overrides the config file.
    #[arg(long, global = true, env = SEED_ENV)]
    seed: Option<u64>,
    /// Experiment config in TOML, or `default`.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output directory; overrides the config file.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an agent and write metrics.csv, checkpoint.txt and config.toml.
    Train {
        /// dqn or sac.
        #[arg(long)]
        agent: Option<AgentSelection>,
        /// Environment steps.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Evaluate a checkpoint against the reference and write eval.csv.
    Evaluate {
        /// Defaults to checkpoint.txt in the output directory.
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
        /// Evaluation slots.
        #[arg(long)]
        slots: Option<usize>,
    },
    /// Evaluate a static scheme (the reference unless `--agent fixed:q,b,r`) and write baseline.csv.
    Baseline {
        #[arg(long)]
        agent: Option<AgentSelection>,
        #[arg(long)]
        slots: Option<usize>,
    },
    /// Check the tabular properties; exit status 0 iff all pass.
    OracleSuite,
    /// Write the scheduled-PRB process to traffic.csv.
    TrafficTrace {
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
    },
    /// Train and evaluate several seeds in parallel and write sweep.csv.
    Sweep {
        #[arg(long, default_value_t = 4)]
        seeds: u64,
        #[arg(long)]
        agent: Option<AgentSelection>,
        #[arg(long)]
        steps: Option<usize>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

/// Trains the configured learner with metrics in `dir`, returning the agent.
fn train_into(cfg: &ExperimentConfig, dir: &Path) -> Result<TrainedAgent> {
    let Some(agent_cfg) = cfg.agent_config() else {
        bail!("agent `{}` is static; train accepts dqn or sac", cfg.agent);
    };
    let mut metrics = create(dir, "metrics.csv")?;
    let out = train(&cfg.env, &agent_cfg, &cfg.train, cfg.seed, Some(&mut metrics))?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    out.agent.checkpoint(cfg.env.params.k_cells).save(&dir.join("checkpoint.txt"))?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    Ok(out.agent)
}

fn compared(mut report: EvaluationReport, cfg: &ExperimentConfig) -> Result<EvaluationReport> {
    let reference = run_reference(&cfg.env, &cfg.eval, cfg.seed)?;
    report.compare_to(&reference)?;
    Ok(report)
}

fn summary(r: &EvaluationReport) -> String {
    let gain = r.gain_pct.map(|g| format!("{g:.1}%")).unwrap_or_else(|| "n/a".into());
    format!(
        "{}: mean rho {:.4}, gain {gain}, P(latency) {:.4}, P(loss) {:.4}",
        r.label,
        r.overall.mean_rho,
        r.overall.latency.p(),
        r.overall.loss.p()
    )
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Train { agent, steps } => {
            cfg.agent = agent.unwrap_or(cfg.agent);
            cfg.train.env_steps = steps.unwrap_or(cfg.train.env_steps);
            cfg.validate()?;
            let agent = train_into(&cfg, &cfg.out_dir)?;
            println!("trained {} for {} steps; lambda {:?}", cfg.agent, cfg.train.env_steps, agent.lambda());
        }
        Command::Evaluate { checkpoint, slots } => {
            cfg.eval.n_slots = slots.unwrap_or(cfg.eval.n_slots);
            cfg.validate()?;
            let path = checkpoint.unwrap_or_else(|| cfg.out_dir.join("checkpoint.txt"));
            let ck = Checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
            let report = compared(evaluate_checkpoint(&ck, &cfg.env, &cfg.eval, cfg.seed)?, &cfg)?;
            report.write_csv(create(&cfg.out_dir, "eval.csv")?)?;
            println!("{}", summary(&report));
        }
        Command::Baseline { agent, slots } => {
            cfg.eval.n_slots = slots.unwrap_or(cfg.eval.n_slots);
            let agent = agent.unwrap_or(AgentSelection::Reference);
            let mut ctl = match agent.fixed_config(&cfg.env.params.knobs)? {
                Some(target) => FixedController { target },
                None if agent == AgentSelection::Reference => reference_controller(&cfg.env)?,
                None => bail!("baseline accepts reference or fixed:<q>,<b_w>,<r_w>, got `{agent}`"),
            };
            let report = compared(evaluate(&agent.to_string(), &mut ctl, &cfg.env, &cfg.eval, cfg.seed)?, &cfg)?;
            report.write_csv(create(&cfg.out_dir, "baseline.csv")?)?;
            println!("{}", summary(&report));
        }
        Command::OracleSuite => {
            let results = oracle_suite(cfg.seed);
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if results.iter().any(|r| !r.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::TrafficTrace { steps } => {
            let state = init_traffic(&cfg.env.params, cfg.env.bounds(), cfg.env.prb_sigma, cfg.seed)?;
            write_trace_csv(create(&cfg.out_dir, "traffic.csv")?, &cfg.env.params, state, steps)?;
            println!("wrote {} slots to {}", steps, cfg.out_dir.join("traffic.csv").display());
        }
        Command::Sweep { seeds, agent, steps } => {
            cfg.agent = agent.unwrap_or(cfg.agent);
            cfg.train.env_steps = steps.unwrap_or(cfg.train.env_steps);
            cfg.validate()?;
            let rows: Vec<Result<Vec<String>>> = (cfg.seed..cfg.seed + seeds)
                .into_par_iter()
                .map(|seed| {
                    let run = ExperimentConfig { seed, ..cfg.clone() };
                    let dir = cfg.out_dir.join(format!("seed-{seed}"));
                    let agent = train_into(&run, &dir)?;
                    let mut ctl = agent.controller();
                    let report = compared(evaluate(&run.agent.to_string(), ctl.as_mut(), &run.env, &run.eval, seed)?, &run)?;
                    report.write_csv(create(&dir, "eval.csv")?)?;
                    let lambda = agent.lambda();
                    let num = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
                    Ok(vec![
                        seed.to_string(),
                        run.agent.to_string(),
                        num(report.gain_pct),
                        num(report.mean_gain(80.0, 220.0)),
                        report.overall.mean_rho.to_string(),
                        report.overall.latency.p().to_string(),
                        report.overall.loss.p().to_string(),
                        lambda[1].to_string(),
                        lambda[2].to_string(),
                    ])
                })
                .collect();
            let mut w = csv::Writer::from_writer(create(&cfg.out_dir, "sweep.csv")?);
            w.write_record([
                "seed",
                "agent",
                "gain_pct",
                "mid_gain_pct",
                "mean_rho",
                "p_latency_violation",
                "p_loss",
                "lambda1",
                "lambda2",
            ])?;
            for row in rows {
                let row = row?;
                println!("{}", row.join(","));
                w.write_record(&row)?;
            }
            w.flush()?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
