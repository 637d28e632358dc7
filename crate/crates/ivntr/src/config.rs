//! Experiment configuration: a flat text format of dotted keys
//! (`section.key = value`), one per line, `#` comments. Every key has a
//! default; unknown keys are errors so typos cannot silently fall back.
//! [`ExperimentConfig::to_flat_map`] renders the full canonical key set,
//! which artifact headers embed for provenance, and which reparses to an
//! identical config.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use crate::bilevel::{PlanConfig, RefineConfig};
use crate::invent::{InventConfig, Strategy};
use crate::neural::TrainConfig;
use crate::planlearn::sampler::SamplerConfig;
use crate::select::SelectConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub domain: String,
    pub seeds: Vec<u64>,
    pub out: PathBuf,

    /// Demonstrations to generate (B).
    pub dataset_size: usize,
    /// Demonstration-level train fraction.
    pub dataset_split: f64,
    /// Paper-scale switch: multiplies the dataset size tenfold.
    pub dataset_full: bool,

    /// Per-type object-count overrides for the two task distributions.
    pub train_objects: BTreeMap<String, (usize, usize)>,
    pub test_objects: BTreeMap<String, (usize, usize)>,

    pub invent_max_arity: usize,
    pub invent_tau: f64,
    pub invent_c: f64,
    pub invent_max_iterations: usize,
    pub invent_prune: bool,

    pub net_lr: f64,
    pub net_batch: usize,
    pub net_epochs: usize,
    pub net_patience: usize,
    pub net_hidden: Vec<usize>,

    pub select_lambda: f64,
    pub select_w: u64,
    pub select_node_budget: usize,
    pub select_max_skeletons: usize,
    pub select_max_demos: usize,

    pub plan_max_skeletons: usize,
    pub plan_node_budget: usize,
    pub plan_refine_tries: usize,
    pub plan_guidance: bool,
    pub plan_sampler_noise: f64,

    pub sampler_hidden: usize,
    pub sampler_epochs: usize,
    pub sampler_lr: f64,
    pub sampler_batch: usize,
    pub sampler_negatives: usize,

    pub eval_train_tasks: usize,
    pub eval_test_tasks: usize,

    pub ablate_strategies: Vec<Strategy>,
    pub ablate_seeds: usize,
    /// Evaluation budget per ablation search run.
    pub ablate_budget: usize,
    /// Score ablation nodes by real network training instead of the
    /// closed-form oracle losses.
    pub ablate_trained: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let sampler = SamplerConfig::default();
        let invent = InventConfig::default();
        let select = SelectConfig::default();
        let plan = PlanConfig::default();
        ExperimentConfig {
            domain: "gazegrasp".into(),
            seeds: vec![0],
            out: PathBuf::from("runs/default"),
            dataset_size: 100,
            dataset_split: train.split,
            dataset_full: false,
            train_objects: BTreeMap::new(),
            test_objects: BTreeMap::new(),
            invent_max_arity: 2,
            invent_tau: invent.tau,
            invent_c: invent.c,
            invent_max_iterations: invent.max_iterations,
            invent_prune: invent.prune,
            net_lr: train.lr,
            net_batch: train.batch_size,
            net_epochs: train.max_epochs,
            net_patience: train.patience,
            net_hidden: train.hidden,
            select_lambda: select.lambda,
            select_w: select.w_fail,
            select_node_budget: select.node_budget,
            select_max_skeletons: select.max_skeletons,
            select_max_demos: select.max_demos,
            plan_max_skeletons: plan.max_skeletons,
            plan_node_budget: plan.node_budget,
            plan_refine_tries: plan.refine.n_tries,
            plan_guidance: plan.refine.guidance,
            plan_sampler_noise: plan.refine.sampler_noise,
            sampler_hidden: sampler.hidden,
            sampler_epochs: sampler.epochs,
            sampler_lr: sampler.lr,
            sampler_batch: sampler.batch,
            sampler_negatives: sampler.negatives,
            eval_train_tasks: 50,
            eval_test_tasks: 50,
            ablate_strategies: vec![
                Strategy::Guided,
                Strategy::Greedy,
                Strategy::Bfs,
                Strategy::Dfs,
                Strategy::Random,
            ],
            ablate_seeds: 5,
            ablate_budget: 400,
            ablate_trained: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.parse()
        .map_err(|_| ConfigError(format!("key `{key}`: cannot parse `{v}`")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError(format!(
            "key `{key}`: expected true or false, got `{v}`"
        ))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>, ConfigError> {
    v.split(',')
        .map(|s| parse_num::<T>(key, s.trim()))
        .collect()
}

/// `[lo,hi]` with optional interior spaces.
fn parse_range(key: &str, v: &str) -> Result<(usize, usize), ConfigError> {
    let inner = v
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| ConfigError(format!("key `{key}`: expected `[lo,hi]`, got `{v}`")))?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(ConfigError(format!(
            "key `{key}`: expected `[lo,hi]`, got `{v}`"
        )));
    }
    let lo = parse_num(key, parts[0])?;
    let hi = parse_num(key, parts[1])?;
    if lo > hi || lo == 0 {
        return Err(ConfigError(format!(
            "key `{key}`: need 0 < lo <= hi, got `{v}`"
        )));
    }
    Ok((lo, hi))
}

impl ExperimentConfig {
    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                )));
            };
            cfg.apply(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse_file(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    pub fn apply(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "domain" => self.domain = v.to_string(),
            "seed" => self.seeds = vec![parse_num(key, v)?],
            "seeds" => self.seeds = parse_list(key, v)?,
            "out" => self.out = PathBuf::from(v),
            "dataset.size" => self.dataset_size = parse_num(key, v)?,
            "dataset.split" => self.dataset_split = parse_num(key, v)?,
            "dataset.full" => self.dataset_full = parse_bool(key, v)?,
            "invent.max_arity" => self.invent_max_arity = parse_num(key, v)?,
            "invent.tau" => self.invent_tau = parse_num(key, v)?,
            "invent.c" => self.invent_c = parse_num(key, v)?,
            "invent.max_iterations" => self.invent_max_iterations = parse_num(key, v)?,
            "invent.prune" => self.invent_prune = parse_bool(key, v)?,
            "net.lr" => self.net_lr = parse_num(key, v)?,
            "net.batch" => self.net_batch = parse_num(key, v)?,
            "net.epochs" => self.net_epochs = parse_num(key, v)?,
            "net.patience" => self.net_patience = parse_num(key, v)?,
            "net.hidden" => self.net_hidden = parse_list(key, v)?,
            "select.lambda" => self.select_lambda = parse_num(key, v)?,
            "select.w" => self.select_w = parse_num(key, v)?,
            "select.node_budget" => self.select_node_budget = parse_num(key, v)?,
            "select.max_skeletons" => self.select_max_skeletons = parse_num(key, v)?,
            "select.max_demos" => self.select_max_demos = parse_num(key, v)?,
            "plan.max_skeletons" => self.plan_max_skeletons = parse_num(key, v)?,
            "plan.node_budget" => self.plan_node_budget = parse_num(key, v)?,
            "plan.refine_tries" => self.plan_refine_tries = parse_num(key, v)?,
            "plan.guidance" => self.plan_guidance = parse_bool(key, v)?,
            "plan.sampler_noise" => self.plan_sampler_noise = parse_num(key, v)?,
            "sampler.hidden" => self.sampler_hidden = parse_num(key, v)?,
            "sampler.epochs" => self.sampler_epochs = parse_num(key, v)?,
            "sampler.lr" => self.sampler_lr = parse_num(key, v)?,
            "sampler.batch" => self.sampler_batch = parse_num(key, v)?,
            "sampler.negatives" => self.sampler_negatives = parse_num(key, v)?,
            "eval.train_tasks" => self.eval_train_tasks = parse_num(key, v)?,
            "eval.test_tasks" => self.eval_test_tasks = parse_num(key, v)?,
            "ablate.strategies" => {
                self.ablate_strategies = v
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<Strategy>()
                            .map_err(|e| ConfigError(format!("key `{key}`: {e}")))
                    })
                    .collect::<Result<_, _>>()?;
            }
            "ablate.seeds" => self.ablate_seeds = parse_num(key, v)?,
            "ablate.budget" => self.ablate_budget = parse_num(key, v)?,
            "ablate.trained" => self.ablate_trained = parse_bool(key, v)?,
            _ => {
                if let Some(ty) = key.strip_prefix("train.objects.") {
                    self.train_objects.insert(ty.to_string(), parse_range(key, v)?);
                } else if let Some(ty) = key.strip_prefix("test.objects.") {
                    self.test_objects.insert(ty.to_string(), parse_range(key, v)?);
                } else {
                    return Err(ConfigError(format!("unknown key `{key}`")));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if crate::domains::domain(&self.domain).is_err() {
            return Err(ConfigError(format!(
                "unknown domain `{}` (expected one of {})",
                self.domain,
                crate::domains::domain_names().join(", ")
            )));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError("need at least one seed".into()));
        }
        if !(self.dataset_split > 0.0 && self.dataset_split <= 1.0) {
            return Err(ConfigError(format!(
                "dataset.split must lie in (0, 1], got {}",
                self.dataset_split
            )));
        }
        if self.dataset_size == 0 {
            return Err(ConfigError("dataset.size must be positive".into()));
        }
        if self.invent_max_arity == 0 {
            return Err(ConfigError("invent.max_arity must be positive".into()));
        }
        if self.invent_tau <= 0.0 {
            return Err(ConfigError("invent.tau must be positive".into()));
        }
        if self.ablate_strategies.is_empty() {
            return Err(ConfigError("need at least one ablation strategy".into()));
        }
        Ok(())
    }

    /// Demonstration count after the paper-scale switch.
    pub fn effective_dataset_size(&self) -> usize {
        if self.dataset_full {
            self.dataset_size * 10
        } else {
            self.dataset_size
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.net_lr,
            batch_size: self.net_batch,
            max_epochs: self.net_epochs,
            patience: self.net_patience,
            split: self.dataset_split,
            seed,
            hidden: self.net_hidden.clone(),
        }
    }

    pub fn invent_config(&self, seed: u64, strategy: Strategy) -> InventConfig {
        InventConfig {
            tau: self.invent_tau,
            c: self.invent_c,
            max_iterations: self.invent_max_iterations,
            prune: self.invent_prune,
            strategy,
            seed,
        }
    }

    pub fn select_config(&self) -> SelectConfig {
        SelectConfig {
            lambda: self.select_lambda,
            w_fail: self.select_w,
            node_budget: self.select_node_budget,
            max_skeletons: self.select_max_skeletons,
            max_demos: self.select_max_demos,
        }
    }

    pub fn plan_config(&self) -> PlanConfig {
        PlanConfig {
            max_skeletons: self.plan_max_skeletons,
            node_budget: self.plan_node_budget,
            refine: RefineConfig {
                n_tries: self.plan_refine_tries,
                guidance: self.plan_guidance,
                sampler_noise: self.plan_sampler_noise,
            },
        }
    }

    pub fn sampler_config(&self, seed: u64) -> SamplerConfig {
        SamplerConfig {
            hidden: self.sampler_hidden,
            epochs: self.sampler_epochs,
            lr: self.sampler_lr,
            batch: self.sampler_batch,
            negatives: self.sampler_negatives,
            seed,
            ..SamplerConfig::default()
        }
    }

    /// Canonical full key set; reparsing the rendered lines reproduces the
    /// config exactly. Artifact headers embed this map.
    pub fn to_flat_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let join = |xs: &[usize]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        m.insert("domain".into(), self.domain.clone());
        m.insert(
            "seeds".into(),
            self.seeds
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        m.insert("out".into(), self.out.display().to_string());
        m.insert("dataset.size".into(), self.dataset_size.to_string());
        m.insert("dataset.split".into(), self.dataset_split.to_string());
        m.insert("dataset.full".into(), self.dataset_full.to_string());
        for (ty, (lo, hi)) in &self.train_objects {
            m.insert(format!("train.objects.{ty}"), format!("[{lo},{hi}]"));
        }
        for (ty, (lo, hi)) in &self.test_objects {
            m.insert(format!("test.objects.{ty}"), format!("[{lo},{hi}]"));
        }
        m.insert("invent.max_arity".into(), self.invent_max_arity.to_string());
        m.insert("invent.tau".into(), self.invent_tau.to_string());
        m.insert("invent.c".into(), self.invent_c.to_string());
        m.insert(
            "invent.max_iterations".into(),
            self.invent_max_iterations.to_string(),
        );
        m.insert("invent.prune".into(), self.invent_prune.to_string());
        m.insert("net.lr".into(), self.net_lr.to_string());
        m.insert("net.batch".into(), self.net_batch.to_string());
        m.insert("net.epochs".into(), self.net_epochs.to_string());
        m.insert("net.patience".into(), self.net_patience.to_string());
        m.insert("net.hidden".into(), join(&self.net_hidden));
        m.insert("select.lambda".into(), self.select_lambda.to_string());
        m.insert("select.w".into(), self.select_w.to_string());
        m.insert(
            "select.node_budget".into(),
            self.select_node_budget.to_string(),
        );
        m.insert(
            "select.max_skeletons".into(),
            self.select_max_skeletons.to_string(),
        );
        m.insert("select.max_demos".into(), self.select_max_demos.to_string());
        m.insert(
            "plan.max_skeletons".into(),
            self.plan_max_skeletons.to_string(),
        );
        m.insert("plan.node_budget".into(), self.plan_node_budget.to_string());
        m.insert(
            "plan.refine_tries".into(),
            self.plan_refine_tries.to_string(),
        );
        m.insert("plan.guidance".into(), self.plan_guidance.to_string());
        m.insert(
            "plan.sampler_noise".into(),
            self.plan_sampler_noise.to_string(),
        );
        m.insert("sampler.hidden".into(), self.sampler_hidden.to_string());
        m.insert("sampler.epochs".into(), self.sampler_epochs.to_string());
        m.insert("sampler.lr".into(), self.sampler_lr.to_string());
        m.insert("sampler.batch".into(), self.sampler_batch.to_string());
        m.insert(
            "sampler.negatives".into(),
            self.sampler_negatives.to_string(),
        );
        m.insert("eval.train_tasks".into(), self.eval_train_tasks.to_string());
        m.insert("eval.test_tasks".into(), self.eval_test_tasks.to_string());
        m.insert(
            "ablate.strategies".into(),
            self.ablate_strategies
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        m.insert("ablate.seeds".into(), self.ablate_seeds.to_string());
        m.insert("ablate.budget".into(), self.ablate_budget.to_string());
        m.insert("ablate.trained".into(), self.ablate_trained.to_string());
        m
    }
}
