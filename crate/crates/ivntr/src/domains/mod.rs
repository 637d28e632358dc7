//! Benchmark domains: closed-form simulators, scripted predicates with
//! ground-truth direction vectors, hand-written oracle models for data
//! generation, and task distributions.

pub mod blocks;
pub mod gazegrasp;
pub mod satellites;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::bilevel::{solve_task, PlanConfig, PlanStatus, RefineConfig};
use crate::invent::EffectVector;
use crate::model::{
    recover_trajectory, Demonstration, DomainSpec, Prefix, Simulator, Task,
};
use crate::planlearn::sampler::ParamSampler;
use crate::planlearn::{AbstractModel, Classifier, LiftedAtom, Operator, Pool};
use crate::runtime::{rng_at, stream};

/// Inclusive object-count range per type.
#[derive(Debug, Clone)]
pub struct TaskDist {
    pub type_counts: BTreeMap<String, (usize, usize)>,
}

impl TaskDist {
    pub fn new(counts: &[(&str, usize, usize)]) -> Self {
        TaskDist {
            type_counts: counts
                .iter()
                .map(|(t, lo, hi)| (t.to_string(), (*lo, *hi)))
                .collect(),
        }
    }

    pub fn sample_count(&self, ty: &str, rng: &mut ChaCha8Rng) -> usize {
        let (lo, hi) = self.type_counts.get(ty).copied().unwrap_or((0, 0));
        if hi > lo {
            rng.gen_range(lo..=hi)
        } else {
            lo
        }
    }

    /// Max object count per type, used to size the invention search space.
    pub fn max_counts(&self) -> BTreeMap<String, usize> {
        self.type_counts
            .iter()
            .map(|(t, (_, hi))| (t.clone(), *hi))
            .collect()
    }

    /// Replaces ranges for the types present in `overrides`; types the
    /// domain never declared are ignored.
    pub fn with_overrides(&self, overrides: &BTreeMap<String, (usize, usize)>) -> TaskDist {
        let mut type_counts = self.type_counts.clone();
        for (ty, range) in overrides {
            if let Some(slot) = type_counts.get_mut(ty) {
                *slot = *range;
            }
        }
        TaskDist { type_counts }
    }
}

/// Everything one benchmark domain provides: the declarative spec, a
/// simulator, task distributions, ground-truth direction vectors for its
/// scripted dynamics, and a hand-written abstract model with closed-form
/// samplers capable of solving any sampled task.
pub trait DomainKit: Send + Sync {
    fn name(&self) -> &'static str;
    fn spec(&self) -> &Arc<DomainSpec>;
    fn simulator(&self) -> Arc<dyn Simulator>;
    fn train_dist(&self) -> TaskDist;
    fn test_dist(&self) -> TaskDist;
    fn sample_task(&self, dist: &TaskDist, rng: &mut ChaCha8Rng) -> Task;
    /// Direction vector per scripted dynamic / goal predicate name.
    /// Statics are absent (their vector is identically zero).
    fn truth_vectors(&self) -> BTreeMap<String, EffectVector>;
    /// Hand-written operators over the ground-truth pool, exactly the set
    /// that operator learning recovers from clean demonstrations.
    fn oracle_operators(&self, pool: &Pool) -> Vec<Operator>;
    /// Closed-form parameter samplers, one per controller.
    fn oracle_samplers(&self) -> Vec<Arc<dyn ParamSampler>>;
}

pub fn domain_names() -> &'static [&'static str] {
    &["gazegrasp", "satellites", "blocks"]
}

pub fn domain(name: &str) -> Result<Arc<dyn DomainKit>, String> {
    match name {
        "gazegrasp" => Ok(gazegrasp::kit()),
        "satellites" => Ok(satellites::kit()),
        "blocks" => Ok(blocks::kit()),
        other => Err(format!(
            "unknown domain `{other}` (available: {})",
            domain_names().join(", ")
        )),
    }
}

/// Pool over every scripted predicate, ground-truth direction vectors
/// attached to dynamics and goals.
pub fn ground_truth_pool(kit: &dyn DomainKit) -> Pool {
    let spec = kit.spec();
    let truth = kit.truth_vectors();
    let entries = spec
        .scripted
        .iter()
        .map(|p| {
            (
                (*p.sig).clone(),
                Classifier::Scripted(Arc::clone(&p.eval)),
                truth.get(&p.sig.name).cloned(),
            )
        })
        .collect();
    Pool::build(Arc::clone(spec), entries)
}

pub struct OracleModel {
    pub model: AbstractModel,
    pub samplers: Vec<Arc<dyn ParamSampler>>,
}

pub fn oracle_model(kit: &dyn DomainKit) -> OracleModel {
    let pool = ground_truth_pool(kit);
    let operators = kit.oracle_operators(&pool);
    OracleModel {
        model: AbstractModel { pool, operators },
        samplers: kit.oracle_samplers(),
    }
}

/// Pool atom lookup by name, for hand-written operator definitions.
pub fn atom(pool: &Pool, name: &str, binding: &[usize]) -> LiftedAtom {
    let pred = pool
        .find(name, Prefix::None)
        .unwrap_or_else(|| panic!("predicate {name} not in pool"));
    LiftedAtom {
        pred: pred.id,
        binding: binding.to_vec(),
    }
}

/// Rejection-samples a point at pairwise distance `sep` from `taken`.
pub fn separated_point(
    range: (f64, f64),
    sep: f64,
    taken: &[(f64, f64)],
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    for _ in 0..10_000 {
        let p = (
            rng.gen_range(range.0..range.1),
            rng.gen_range(range.0..range.1),
        );
        if taken
            .iter()
            .all(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt() >= sep)
        {
            return p;
        }
    }
    panic!("could not place a point at separation {sep}");
}

/// Planner settings for the oracle: generous budgets, guided refinement.
pub fn oracle_plan_config() -> PlanConfig {
    PlanConfig {
        max_skeletons: 8,
        node_budget: 50_000,
        refine: RefineConfig {
            n_tries: 30,
            guidance: true,
            sampler_noise: 0.0,
        },
    }
}

/// Task-counter namespaces keeping demo-generation, training-eval and
/// test-eval refinement RNG streams disjoint.
pub const DEMO_TASK_BASE: u64 = 1 << 40;
pub const EVAL_TRAIN_BASE: u64 = 1 << 41;
pub const EVAL_TEST_BASE: u64 = 1 << 42;

/// Samples tasks and solves them with the oracle model; keeps the solved
/// ones as demonstrations. The split flag marks the training side of the
/// demonstration-level train/validation split.
pub fn generate_demos(
    kit: &dyn DomainKit,
    dist: &TaskDist,
    n: usize,
    split: f64,
    seed: u64,
) -> Vec<(Demonstration, bool)> {
    let oracle = oracle_model(kit);
    let sim = kit.simulator();
    let cfg = oracle_plan_config();
    let mut demos = Vec::new();
    let mut attempt: u64 = 0;
    while demos.len() < n {
        assert!(
            attempt < 200 * n as u64 + 200,
            "oracle solved too few sampled {} tasks",
            kit.name()
        );
        let mut task_rng = rng_at(seed, stream::TASK_GEN, DEMO_TASK_BASE + attempt);
        let task = kit.sample_task(dist, &mut task_rng);
        let result = solve_task(
            &oracle.model,
            &oracle.samplers,
            sim.as_ref(),
            &task,
            &cfg,
            seed,
            DEMO_TASK_BASE + attempt,
        );
        attempt += 1;
        if result.status == PlanStatus::Solved {
            let plan = result.plan.unwrap();
            let states =
                recover_trajectory(sim.as_ref(), &task, &plan).expect("oracle plan replays");
            demos.push(Demonstration { task, plan, states });
        }
    }
    let k = ((n as f64) * split).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_at(seed, stream::DATASET_SPLIT, 0));
    let mut is_train = vec![false; n];
    for &i in order.iter().take(k.max(1)) {
        is_train[i] = true;
    }
    demos.into_iter().zip(is_train).collect()
}

/// Samples `n` oracle-solvable evaluation tasks from a distribution.
/// `base` namespaces the RNG (train-eval vs test-eval).
pub fn sample_solvable_tasks(
    kit: &dyn DomainKit,
    dist: &TaskDist,
    n: usize,
    seed: u64,
    base: u64,
) -> Vec<Task> {
    let oracle = oracle_model(kit);
    let sim = kit.simulator();
    let cfg = oracle_plan_config();
    let mut tasks = Vec::new();
    let mut attempt: u64 = 0;
    while tasks.len() < n {
        assert!(
            attempt < 200 * n as u64 + 200,
            "oracle solved too few sampled {} tasks",
            kit.name()
        );
        let mut task_rng = rng_at(seed, stream::TASK_GEN, base + attempt);
        let task = kit.sample_task(dist, &mut task_rng);
        let result = solve_task(
            &oracle.model,
            &oracle.samplers,
            sim.as_ref(),
            &task,
            &cfg,
            seed,
            base + attempt,
        );
        attempt += 1;
        if result.status == PlanStatus::Solved {
            tasks.push(task);
        }
    }
    tasks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PredKind;

    #[test]
    fn registry_resolves_every_domain() {
        for name in domain_names() {
            let kit = domain(name).unwrap();
            assert_eq!(kit.name(), *name);
            let spec = kit.spec();
            assert!(!spec.controllers.is_empty());
            assert!(!spec.scripted_by_kind(PredKind::Goal).is_empty());
        }
        assert!(domain("nope").is_err());
    }

    #[test]
    fn truth_vectors_match_controller_count() {
        for name in domain_names() {
            let kit = domain(name).unwrap();
            let m = kit.spec().controllers.len();
            for (pred, v) in kit.truth_vectors() {
                assert_eq!(v.len(), m, "{name}:{pred}");
            }
        }
    }

    #[test]
    fn oracle_operator_effects_agree_with_truth_vectors() {
        use crate::planlearn::vector_from_effects;
        for name in domain_names() {
            let kit = domain(name).unwrap();
            let oracle = oracle_model(kit.as_ref());
            let m = kit.spec().controllers.len();
            for pred in &oracle.model.pool.preds {
                let Some(delta) = &pred.delta else { continue };
                assert_eq!(
                    &vector_from_effects(&oracle.model.operators, pred.id, m),
                    delta,
                    "{name}:{}",
                    pred.display_name()
                );
            }
        }
    }

    #[test]
    fn sampled_tasks_validate_and_have_nontrivial_goals() {
        for name in domain_names() {
            let kit = domain(name).unwrap();
            let spec = kit.spec();
            for (dist, tag) in [(kit.train_dist(), 0u64), (kit.test_dist(), 1u64)] {
                for i in 0..5u64 {
                    let mut rng = rng_at(7, stream::TASK_GEN, tag * 100 + i);
                    let task = kit.sample_task(&dist, &mut rng);
                    task.x0.validate(&task.objects, &spec.types).unwrap();
                    assert!(!task.goal.is_empty(), "{name}");
                    let trivially_done = task.goal.iter().all(|g| {
                        spec.scripted_by_name(&g.pred.name)
                            .map(|p| p.holds(&task.x0, &g.objects))
                            .unwrap_or(false)
                    });
                    assert!(!trivially_done, "{name} sampled a solved task");
                }
            }
        }
    }

    #[test]
    fn oracle_solves_and_demos_replay() {
        for name in domain_names() {
            let kit = domain(name).unwrap();
            let demos = generate_demos(kit.as_ref(), &kit.train_dist(), 3, 0.67, 11);
            assert_eq!(demos.len(), 3, "{name}");
            assert!(demos.iter().any(|(_, t)| *t));
            assert!(demos.iter().any(|(_, t)| !*t));
            let sim = kit.simulator();
            for (demo, _) in &demos {
                assert!(!demo.plan.is_empty());
                let states = recover_trajectory(sim.as_ref(), &demo.task, &demo.plan).unwrap();
                assert_eq!(states.len(), demo.states.len());
                // Final state satisfies the goal per the scripted classifiers.
                for g in &demo.task.goal {
                    let p = kit.spec().scripted_by_name(&g.pred.name).unwrap();
                    assert!(p.holds(states.last().unwrap(), &g.objects), "{name}: {g}");
                }
            }
        }
    }

    #[test]
    fn demo_generation_is_reproducible() {
        let kit = domain("gazegrasp").unwrap();
        let a = generate_demos(kit.as_ref(), &kit.train_dist(), 2, 0.5, 3);
        let b = generate_demos(kit.as_ref(), &kit.train_dist(), 2, 0.5, 3);
        for ((da, ta), (db, tb)) in a.iter().zip(&b) {
            assert_eq!(ta, tb);
            assert_eq!(da.plan, db.plan);
            assert_eq!(da.states, db.states);
        }
    }

    #[test]
    fn operators_learned_from_ground_truth_match_the_oracle() {
        use crate::planlearn::learn_operators;
        for name in domain_names() {
            let kit = domain(name).unwrap();
            let demos = generate_demos(kit.as_ref(), &kit.train_dist(), 10, 1.0, 23);
            let refs: Vec<&Demonstration> = demos.iter().map(|(d, _)| d).collect();
            let pool = ground_truth_pool(kit.as_ref());
            let (learned, warnings) = learn_operators(&pool, &refs);
            assert!(warnings.is_empty(), "{name}: {warnings:?}");

            let mut oracle = kit.oracle_operators(&pool);
            for op in &mut oracle {
                for list in [&mut op.pre, &mut op.eff_add, &mut op.eff_del] {
                    list.sort();
                }
            }
            assert_eq!(learned.len(), oracle.len(), "{name}");
            for (l, o) in learned.iter().zip(&oracle) {
                assert_eq!(
                    l,
                    o,
                    "{name}: {} differs",
                    kit.spec().controllers[l.controller].name
                );
            }
        }
    }

    #[test]
    fn ground_truth_pool_covers_all_scripted_predicates() {
        for name in domain_names() {
            let kit = domain(name).unwrap();
            let pool = ground_truth_pool(kit.as_ref());
            assert_eq!(pool.len(), kit.spec().scripted.len());
            // Statics carry no vector; dynamics and goals do.
            for pred in &pool.preds {
                match pred.sig.kind {
                    PredKind::Static => assert!(pred.delta.is_none(), "{name}"),
                    _ => assert!(pred.delta.is_some(), "{name}: {}", pred.sig.name),
                }
            }
        }
    }
}
