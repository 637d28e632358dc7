//! CLI over the staged pipeline. Every verb loads a flat `key = value`
//! config, optionally narrows it to one seed, and requests a stage artifact;
//! missing prerequisites are computed and persisted on the way, finished
//! ones are reloaded, so verbs compose as checkpoints of one run.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ivntr::config::{ConfigError, ExperimentConfig};
use ivntr::pipeline::{Pipeline, PipelineError};
use ivntr::report::emit_report;

#[derive(Parser)]
#[command(name = "ivntr", version, about = "Invent relational predicates from demonstrations and plan with them")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// Experiment config file: `key = value` lines with dotted keys.
    #[arg(long)]
    config: PathBuf,
    /// Run a single seed instead of every seed listed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Disable loss-sum pruning in the effect-vector search.
    #[arg(long)]
    no_prune: bool,
    /// Override one config entry, e.g. `--set eval.train_tasks=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Verb {
    /// Generate (or reload) oracle demonstrations.
    #[command(name = "gen-demos")]
    GenDemos(Common),
    /// Search effect vectors and train candidate predicates per group.
    Invent(Common),
    /// Hill-climb the predicate subset against demonstration skeletons.
    Select(Common),
    /// Assemble operators and samplers over the selected predicates.
    Learn(Common),
    /// Solve one test-distribution task with the learned planner.
    Plan {
        #[command(flatten)]
        common: Common,
        /// Index of the sampled test task to solve.
        #[arg(long, default_value_t = 0)]
        task: usize,
    },
    /// Evaluate on fresh train- and test-distribution task sets.
    Eval(Common),
    /// Compare vector-search strategies on ground-truth targets.
    #[command(name = "ablate-search")]
    AblateSearch(Common),
    /// Emit summary tables, objective traces, and operator listings.
    Report(Common),
}

impl Verb {
    fn common(&self) -> &Common {
        match self {
            Verb::GenDemos(c)
            | Verb::Invent(c)
            | Verb::Select(c)
            | Verb::Learn(c)
            | Verb::Eval(c)
            | Verb::AblateSearch(c)
            | Verb::Report(c) => c,
            Verb::Plan { common, .. } => common,
        }
    }
}

fn pipeline(common: &Common) -> Result<Pipeline, PipelineError> {
    let mut cfg = ExperimentConfig::parse_file(&common.config)?;
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.apply(k.trim(), v.trim())?;
    }
    if common.no_prune {
        cfg.invent_prune = false;
    }
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    Pipeline::new(cfg)
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let pipe = pipeline(cli.verb.common())?;
    let seeds = pipe.cfg.seeds.clone();
    match cli.verb {
        Verb::GenDemos(_) => {
            for seed in seeds {
                let demos = pipe.demos(seed)?;
                let train = demos.iter().filter(|(_, t)| *t).count();
                println!(
                    "seed {seed}: {} demonstrations ({train} train / {} holdout) -> {}",
                    demos.len(),
                    demos.len() - train,
                    pipe.paths(seed).demos().display()
                );
            }
        }
        Verb::Invent(_) => {
            for seed in seeds {
                let invented = pipe.invented(seed)?;
                let names: Vec<String> = invented.iter().map(|p| p.sig.to_string()).collect();
                println!(
                    "seed {seed}: {} predicates accepted: {}",
                    invented.len(),
                    names.join(", ")
                );
            }
        }
        Verb::Select(_) => {
            for seed in seeds {
                let sel = pipe.selection(seed)?;
                let kept: Vec<&str> = sel
                    .kept
                    .iter()
                    .map(|&i| sel.candidates[i].display.as_str())
                    .collect();
                println!(
                    "seed {seed}: J = {} after {} removals; kept {} of {} candidates: {}",
                    sel.objective,
                    sel.dropped.len(),
                    sel.kept.len(),
                    sel.candidates.len(),
                    kept.join(", ")
                );
            }
        }
        Verb::Learn(_) => {
            for seed in seeds {
                let bundle = pipe.bundle(seed)?;
                println!(
                    "seed {seed}: {} operators over {} predicates, {} samplers -> {}",
                    bundle.model.operators.len(),
                    bundle.model.pool.preds.len(),
                    bundle.samplers.len(),
                    pipe.paths(seed).operators().parent().unwrap().display()
                );
            }
        }
        Verb::Plan { task, .. } => {
            for seed in seeds {
                let (_, result) = pipe.plan_task(seed, task)?;
                println!(
                    "seed {seed} task {task}: {:?} ({} nodes, {} skeletons)",
                    result.status, result.nodes_expanded, result.skeletons_tried
                );
                for action in result.plan.iter().flatten() {
                    println!("  {action}");
                }
            }
        }
        Verb::Eval(_) => {
            for seed in seeds {
                let rec = pipe.eval(seed)?;
                println!(
                    "seed {seed}: train {:.1}% of {}, test {:.1}% of {}, drop {:.1}%",
                    100.0 * rec.train_success,
                    rec.train.len(),
                    100.0 * rec.test_success,
                    rec.test.len(),
                    100.0 * rec.generalization_drop
                );
            }
        }
        Verb::AblateSearch(_) => {
            let rec = pipe.ablate()?;
            println!(
                "{} targets, {} runs per strategy ({} evaluator)",
                rec.targets.len(),
                rec.runs.len() / rec.mean_cost.len().max(1),
                rec.mode
            );
            for (strategy, cost) in &rec.mean_cost {
                println!("  {strategy}: mean evaluations to cover = {cost}");
            }
        }
        Verb::Report(_) => {
            for path in emit_report(&pipe)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
