//! Candidate predicate selection by planning outcomes. Each candidate
//! subset induces an operator set (effects from direction vectors,
//! preconditions by cached intersection); a subset is scored by how cheaply
//! the abstract search reproduces every demonstration skeleton, plus a
//! structural complexity charge. Selection runs backward elimination from
//! the full candidate set: removing a needed predicate spikes the score by
//! the failure penalty, removing a redundant one saves exactly its
//! complexity charge, so the objective strictly decreases until only
//! load-bearing predicates remain.

use serde::{Deserialize, Serialize};

use crate::bilevel::{abstract_bits, ground_model, Bits, SearchStep, SkeletonSearch};
use crate::planlearn::{effects_from_vectors, valid_bindings, AbstractModel, LiftedAtom, Operator, Pool};
use crate::model::Demonstration;
use crate::runtime::par_map;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    /// Weight of the per-predicate complexity charge.
    pub lambda: f64,
    /// Cost of a demonstration whose skeleton the search cannot reproduce.
    pub w_fail: u64,
    /// Expansion budget per demonstration while scoring.
    pub node_budget: usize,
    /// How many streamed skeletons may be checked against the demo.
    pub max_skeletons: usize,
    /// Cap on demonstrations used for scoring.
    pub max_demos: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            lambda: 1.0,
            w_fail: 100_000,
            node_budget: 10_000,
            max_skeletons: 8,
            max_demos: 40,
        }
    }
}

struct DemoScore {
    task: crate::model::Task,
    x0_bits: Bits,
    /// Demo plan as (controller index, object indices into task objects).
    skeleton_sig: Vec<(usize, Vec<usize>)>,
}

/// Precomputed scoring state over a fixed pool: baseline predicates first,
/// candidates after. Classifier evaluations (the expensive part) happen
/// once, in the constructor; subset scoring is purely symbolic.
pub struct SelectContext {
    pool: Pool,
    n_baseline: usize,
    cfg: SelectConfig,
    /// Per controller: every bindable atom with a flag saying whether it
    /// held in the pre-state of all of that controller's transitions.
    pre_cands: Vec<Vec<(LiftedAtom, bool)>>,
    demos: Vec<DemoScore>,
}

/// Outcome of backward elimination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Selection {
    /// Pool ids of candidates kept, ascending.
    pub kept: Vec<usize>,
    /// Pool ids of candidates eliminated, in removal order.
    pub dropped: Vec<usize>,
    /// Objective after the initial full-set score and each removal.
    pub trace: Vec<f64>,
    pub objective: f64,
}

impl SelectContext {
    /// `pool` holds baseline predicates (ids `0..n_baseline`, always
    /// enabled) followed by candidates. Scores use at most
    /// `cfg.max_demos` demonstrations, in the order given.
    pub fn new(pool: Pool, n_baseline: usize, demos: &[&Demonstration], cfg: SelectConfig) -> Self {
        let spec = &pool.spec;
        let allow = spec.allow_same_object;
        let used = &demos[..demos.len().min(cfg.max_demos)];

        let pre_cands: Vec<Vec<(LiftedAtom, bool)>> = spec
            .controllers
            .iter()
            .enumerate()
            .map(|(ci, ctrl)| {
                let mut cands: Vec<(LiftedAtom, bool)> = pool
                    .preds
                    .iter()
                    .flat_map(|pred| {
                        valid_bindings(pred, ctrl, allow)
                            .into_iter()
                            .map(|binding| {
                                (
                                    LiftedAtom {
                                        pred: pred.id,
                                        binding,
                                    },
                                    true,
                                )
                            })
                    })
                    .collect();
                let mut any = false;
                for demo in used {
                    for (s, a, _) in demo.transitions() {
                        if spec.controller_index(&a.controller.name) != Some(ci) {
                            continue;
                        }
                        any = true;
                        for (atom, ok) in cands.iter_mut() {
                            if !*ok {
                                continue;
                            }
                            let objs: Vec<_> = atom
                                .binding
                                .iter()
                                .map(|&v| a.objects[v].clone())
                                .collect();
                            *ok = pool.preds[atom.pred].holds(s, &objs, &demo.task.objects, allow);
                        }
                    }
                }
                if !any {
                    // Mirrors precondition learning: no data, no atoms.
                    for (_, ok) in cands.iter_mut() {
                        *ok = false;
                    }
                }
                cands
            })
            .collect();

        // The atom table only depends on the pool, so the initial-state
        // truth bits can be shared by every subset's search.
        let probe = AbstractModel {
            pool: pool.clone(),
            operators: Vec::new(),
        };
        let demo_scores = used
            .iter()
            .map(|demo| {
                let gm = ground_model(&probe, &demo.task).expect("demo task grounds");
                let x0_bits = abstract_bits(&probe, &gm, &demo.task.x0);
                let obj_idx = |name: &str| {
                    demo.task
                        .objects
                        .iter()
                        .position(|o| o.name == name)
                        .expect("demo action object in task")
                };
                let skeleton_sig = demo
                    .plan
                    .iter()
                    .map(|a| {
                        (
                            spec.controller_index(&a.controller.name).unwrap(),
                            a.objects.iter().map(|o| obj_idx(&o.name)).collect(),
                        )
                    })
                    .collect();
                DemoScore {
                    task: demo.task.clone(),
                    x0_bits,
                    skeleton_sig,
                }
            })
            .collect();

        SelectContext {
            pool,
            n_baseline,
            cfg,
            pre_cands,
            demos: demo_scores,
        }
    }

    pub fn n_candidates(&self) -> usize {
        self.pool.len() - self.n_baseline
    }

    pub fn n_demos(&self) -> usize {
        self.demos.len()
    }

    /// Operator set induced by an enabled-predicate mask.
    fn operators_for(&self, enabled: &[bool]) -> Vec<Operator> {
        let masked = Pool {
            spec: std::sync::Arc::clone(&self.pool.spec),
            preds: self
                .pool
                .preds
                .iter()
                .filter(|p| enabled[p.id])
                .cloned()
                .collect(),
        };
        let (mut ops, _warnings) = effects_from_vectors(&masked);
        for op in &mut ops {
            op.pre = self.pre_cands[op.controller]
                .iter()
                .filter(|(atom, ok)| *ok && enabled[atom.pred])
                .map(|(atom, _)| atom.clone())
                .collect();
        }
        ops
    }

    /// Planning cost of one demonstration under a model: expansions until
    /// a streamed skeleton equals the demo skeleton, else the failure
    /// penalty.
    fn demo_cost(&self, model: &AbstractModel, demo: &DemoScore) -> u64 {
        let Ok(gm) = ground_model(model, &demo.task) else {
            return self.cfg.w_fail;
        };
        let mut search = SkeletonSearch::new(&gm, demo.x0_bits.clone(), self.cfg.node_budget);
        for _ in 0..self.cfg.max_skeletons {
            match search.next_skeleton() {
                SearchStep::Skeleton(sk) => {
                    let matches = sk.len() == demo.skeleton_sig.len()
                        && sk.iter().zip(&demo.skeleton_sig).all(|(&gi, (ci, objs))| {
                            let op = &gm.ops[gi];
                            op.controller == *ci && &op.objects == objs
                        });
                    if matches {
                        return search.nodes_expanded as u64;
                    }
                }
                _ => return self.cfg.w_fail,
            }
        }
        self.cfg.w_fail
    }

    /// Objective for an enabled mask: summed demo costs plus the complexity
    /// charge of the enabled candidates.
    pub fn score(&self, enabled: &[bool]) -> f64 {
        let ops = self.operators_for(enabled);
        let model = AbstractModel {
            pool: self.pool.clone(),
            operators: ops,
        };
        let cost: u64 = self.demos.iter().map(|d| self.demo_cost(&model, d)).sum();
        let complexity: usize = self.pool.preds[self.n_baseline..]
            .iter()
            .filter(|p| enabled[p.id])
            .map(|p| p.complexity())
            .sum();
        cost as f64 + self.cfg.lambda * complexity as f64
    }

    /// Score with a set of kept candidate ids (baseline always enabled).
    pub fn score_kept(&self, kept: &[usize]) -> f64 {
        let mut enabled = vec![false; self.pool.len()];
        for id in 0..self.n_baseline {
            enabled[id] = true;
        }
        for &id in kept {
            enabled[id] = true;
        }
        self.score(&enabled)
    }

    /// Greedy backward elimination from the full candidate set. Each round
    /// drops the candidate whose removal lowers the objective most; stops
    /// when no removal strictly improves it.
    pub fn backward_select(&self) -> Selection {
        let mut enabled = vec![true; self.pool.len()];
        let mut objective = self.score(&enabled);
        let mut trace = vec![objective];
        let mut dropped = Vec::new();
        loop {
            let live: Vec<usize> = (self.n_baseline..self.pool.len())
                .filter(|&id| enabled[id])
                .collect();
            if live.is_empty() {
                break;
            }
            let scores = par_map(live.clone(), |id| {
                let mut mask = enabled.clone();
                mask[id] = false;
                self.score(&mask)
            });
            let Some((best_idx, best_j)) = scores
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
                .map(|(i, j)| (i, *j))
            else {
                break;
            };
            if best_j + 1e-9 >= objective {
                break;
            }
            enabled[live[best_idx]] = false;
            dropped.push(live[best_idx]);
            objective = best_j;
            trace.push(objective);
        }
        Selection {
            kept: (self.n_baseline..self.pool.len())
                .filter(|&id| enabled[id])
                .collect(),
            dropped,
            trace,
            objective,
        }
    }
}
