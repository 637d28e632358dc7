//! Effect-vector tree search: proposes candidate effect vectors for one
//! predicate signature group, trains a classifier per vector, and steers
//! expansion with a global per-controller residual-loss vector.

pub mod vector;

pub use vector::{ground_effect_vector, EffectVector};

use crate::model::{ControllerSig, DomainSpec, PredKind, Prefix, PredicateSig};
use crate::neural::loss::LossBreakdown;
use crate::neural::mlp::MlpParams;
use crate::neural::train::{train_classifier, GroupDataset, TrainConfig, TrainError};
use crate::runtime::{rng_at, stream};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Upper-confidence parent selection + residual-guided child choice.
    Guided,
    /// Depth-first chain flipping the parent's highest-loss zero entry.
    Greedy,
    Bfs,
    Dfs,
    Random,
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "guided" => Ok(Strategy::Guided),
            "greedy" => Ok(Strategy::Greedy),
            "bfs" => Ok(Strategy::Bfs),
            "dfs" => Ok(Strategy::Dfs),
            "random" => Ok(Strategy::Random),
            other => Err(format!("unknown search strategy `{other}`")),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::Guided => "guided",
            Strategy::Greedy => "greedy",
            Strategy::Bfs => "bfs",
            Strategy::Dfs => "dfs",
            Strategy::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventConfig {
    /// Validation-loss acceptance threshold, also the pruning threshold.
    pub tau: f64,
    /// Exploration constant in the parent-selection rule.
    pub c: f64,
    /// Evaluation (training-run) budget per group.
    pub max_iterations: usize,
    pub prune: bool,
    pub strategy: Strategy,
    pub seed: u64,
}

impl Default for InventConfig {
    fn default() -> Self {
        InventConfig {
            tau: 0.05,
            c: 1.0,
            max_iterations: 100,
            prune: true,
            strategy: Strategy::Guided,
            seed: 0,
        }
    }
}

/// Outcome of training one effect vector.
pub struct EvaluatedVector {
    pub loss: LossBreakdown,
    pub params: Option<MlpParams>,
}

/// Scores effect vectors. The trained implementation fits a classifier;
/// test and ablation evaluators substitute closed-form losses.
pub trait VectorEvaluator {
    fn n_actions(&self) -> usize;
    /// Per controller: false when no transition moves any qualifying atom's
    /// input features (including controllers with no data at all). Nonzero
    /// entries there are unlearnable and get pre-pruned.
    fn trainable_actions(&self) -> Vec<bool>;
    fn evaluate(&mut self, delta: &EffectVector) -> EvaluatedVector;
}

pub struct TrainedEvaluator<'a> {
    pub data: &'a GroupDataset,
    pub cfg: TrainConfig,
}

impl VectorEvaluator for TrainedEvaluator<'_> {
    fn n_actions(&self) -> usize {
        self.data.n_actions
    }

    fn trainable_actions(&self) -> Vec<bool> {
        let mut movable = vec![false; self.data.n_actions];
        for s in &self.data.train {
            if movable[s.action_idx] {
                continue;
            }
            let moved = s
                .qualifying
                .iter()
                .enumerate()
                .any(|(p, q)| *q && s.pre_inputs[p] != s.post_inputs[p]);
            if moved {
                movable[s.action_idx] = true;
            }
        }
        movable
    }

    fn evaluate(&mut self, delta: &EffectVector) -> EvaluatedVector {
        match train_classifier(self.data, delta, &self.cfg) {
            Ok((params, loss)) => EvaluatedVector {
                loss,
                params: Some(params),
            },
            Err(TrainError::NoTransitions) | Err(TrainError::InputDimMismatch { .. }) => {
                // Unlearnable under this vector: report the ceiling loss.
                let m = self.data.n_actions;
                EvaluatedVector {
                    loss: LossBreakdown {
                        per_action: vec![std::f64::consts::LN_2; m],
                        has_data: vec![true; m],
                        total: std::f64::consts::LN_2,
                    },
                    params: None,
                }
            }
        }
    }
}

/// Closed-form evaluator: loss is zero per controller where the candidate
/// agrees with the nearest target vector, `mismatch` elsewhere. A trained
/// classifier can always realize a predicate's complement, so each target
/// counts as its negation too. Used by the search-strategy ablation, where
/// only expansion order is under study.
pub struct OracleEvaluator {
    pub n_actions: usize,
    pub targets: Vec<EffectVector>,
    pub mismatch: f64,
}

impl OracleEvaluator {
    pub fn new(n_actions: usize, targets: Vec<EffectVector>) -> Self {
        OracleEvaluator {
            n_actions,
            targets,
            mismatch: std::f64::consts::LN_2 / 2.0,
        }
    }
}

impl VectorEvaluator for OracleEvaluator {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn trainable_actions(&self) -> Vec<bool> {
        vec![true; self.n_actions]
    }

    fn evaluate(&mut self, delta: &EffectVector) -> EvaluatedVector {
        let patterns: Vec<Vec<f64>> = self
            .targets
            .iter()
            .flat_map(|t| [t.clone(), t.negated()])
            .map(|target| {
                delta
                    .0
                    .iter()
                    .zip(&target.0)
                    .map(|(d, t)| if d == t { 0.0 } else { self.mismatch })
                    .collect()
            })
            .collect();
        let min_sum = patterns
            .iter()
            .map(|p| p.iter().sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        // Equally-near targets share the credit: an underdetermined fit
        // realizes one of them arbitrarily, so the expected loss is the
        // average over the tie. Averaging keeps the total yet spreads the
        // residual mass over every tied target's unmatched entries.
        let tied: Vec<&Vec<f64>> = patterns
            .iter()
            .filter(|p| p.iter().sum::<f64>() <= min_sum + 1e-12)
            .collect();
        let per_action: Vec<f64> = if tied.is_empty() {
            vec![self.mismatch; self.n_actions]
        } else {
            (0..self.n_actions)
                .map(|i| tied.iter().map(|p| p[i]).sum::<f64>() / tied.len() as f64)
                .collect()
        };
        let total = per_action.iter().sum::<f64>() / self.n_actions.max(1) as f64;
        EvaluatedVector {
            loss: LossBreakdown {
                per_action,
                has_data: vec![true; self.n_actions],
                total,
            },
            params: None,
        }
    }
}

/// Fixed-loss evaluator for structural tests (e.g. full enumeration).
pub struct ConstEvaluator {
    pub n_actions: usize,
    pub loss: f64,
}

impl VectorEvaluator for ConstEvaluator {
    fn n_actions(&self) -> usize {
        self.n_actions
    }
    fn trainable_actions(&self) -> Vec<bool> {
        vec![true; self.n_actions]
    }
    fn evaluate(&mut self, _delta: &EffectVector) -> EvaluatedVector {
        EvaluatedVector {
            loss: LossBreakdown {
                per_action: vec![self.loss; self.n_actions],
                has_data: vec![true; self.n_actions],
                total: self.loss,
            },
            params: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Root,
    Evaluated,
    Pruned,
}

struct Node {
    vector: EffectVector,
    status: Status,
    /// Times picked as expansion parent.
    visits: u64,
    /// Proposal flags per (zero index, sign): 2*i for +1, 2*i+1 for -1.
    proposed: Vec<bool>,
    /// Per-controller validation loss, present once evaluated.
    loss: Option<Vec<f64>>,
}

impl Node {
    fn new(vector: EffectVector, status: Status) -> Self {
        let m = vector.len();
        Node {
            vector,
            status,
            visits: 0,
            proposed: vec![false; 2 * m],
            loss: None,
        }
    }

    fn pair_open(&self, idx: usize, sign: i8) -> bool {
        self.vector.0[idx] == 0 && !self.proposed[2 * idx + usize::from(sign < 0)]
    }

    fn mark_proposed(&mut self, idx: usize, sign: i8) {
        self.proposed[2 * idx + usize::from(sign < 0)] = true;
    }

    fn has_open_pair(&self) -> bool {
        self.vector
            .zero_indices()
            .any(|i| self.pair_open(i, 1) || self.pair_open(i, -1))
    }
}

/// The expansion tree plus the global residual vector R: R[i] accumulates
/// (by halving averages) the loss observed at controller i across vectors
/// that kept entry i zero. High R[i] marks i as a promising entry to flip.
pub struct EffectTree {
    m: usize,
    nodes: Vec<Node>,
    index: BTreeMap<EffectVector, usize>,
    pub r: Vec<f64>,
    pub evaluations: usize,
}

impl EffectTree {
    pub fn new(m: usize) -> Self {
        let root = EffectVector::root(m);
        let mut index = BTreeMap::new();
        index.insert(root.clone(), 0);
        EffectTree {
            m,
            nodes: vec![Node::new(root, Status::Root)],
            index,
            r: vec![0.0; m],
            evaluations: 0,
        }
    }

    /// Mean residual over the vector's zero entries; fully-nonzero vectors
    /// score 0.
    pub fn node_value(&self, vector: &EffectVector) -> f64 {
        let zeros: Vec<usize> = vector.zero_indices().collect();
        if zeros.is_empty() {
            return 0.0;
        }
        zeros.iter().map(|i| self.r[*i]).sum::<f64>() / zeros.len() as f64
    }

    /// Residual update after evaluating `delta` with per-controller loss
    /// `l`: zero entries fold the new loss in by averaging, nonzero entries
    /// keep their residual.
    pub fn update_values(&mut self, delta: &EffectVector, l: &[f64]) {
        debug_assert_eq!(l.len(), self.m);
        for i in delta.zero_indices() {
            self.r[i] = (self.r[i] + l[i]) / 2.0;
        }
        self.evaluations += 1;
    }

    pub fn contains(&self, vector: &EffectVector) -> bool {
        self.index.contains_key(vector)
    }

    fn insert(&mut self, vector: EffectVector, status: Status, loss: Option<Vec<f64>>) -> usize {
        let id = self.nodes.len();
        let mut node = Node::new(vector.clone(), status);
        node.loss = loss;
        self.index.insert(vector, id);
        self.nodes.push(node);
        id
    }

    fn expandable_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().enumerate().filter_map(|(id, n)| {
            (n.status != Status::Pruned && n.has_open_pair()).then_some(id)
        })
    }

    fn select_parent(&self, cfg: &InventConfig, rng: &mut impl Rng) -> Option<usize> {
        let ids: Vec<usize> = self.expandable_ids().collect();
        if ids.is_empty() {
            return None;
        }
        match cfg.strategy {
            Strategy::Bfs => ids.into_iter().min(),
            Strategy::Dfs | Strategy::Greedy => ids.into_iter().max(),
            Strategy::Random => Some(ids[rng.gen_range(0..ids.len())]),
            Strategy::Guided => {
                let t = self.evaluations as f64;
                ids.into_iter()
                    .map(|id| {
                        let n = &self.nodes[id];
                        let score = self.node_value(&n.vector)
                            + cfg.c * ((t + 1.0).ln() / (n.visits as f64 + 1.0)).sqrt();
                        (id, score)
                    })
                    .min_by(|(a, sa), (b, sb)| {
                        // Max score; ties prefer the lower tie_key.
                        sb.partial_cmp(sa)
                            .unwrap()
                            .then_with(|| {
                                self.nodes[*a]
                                    .vector
                                    .tie_key()
                                    .cmp(&self.nodes[*b].vector.tie_key())
                            })
                    })
                    .map(|(id, _)| id)
            }
        }
    }

    /// Picks the next (zero index, sign) to flip under the parent,
    /// per-strategy, and marks it proposed.
    fn propose_pair(
        &mut self,
        parent: usize,
        strategy: Strategy,
        rng: &mut impl Rng,
    ) -> Option<(usize, i8)> {
        let node = &self.nodes[parent];
        let mut open: Vec<(usize, i8)> = Vec::new();
        for i in node.vector.zero_indices() {
            for sign in [1i8, -1] {
                if node.pair_open(i, sign) {
                    open.push((i, sign));
                }
            }
        }
        if open.is_empty() {
            return None;
        }
        let pick = match strategy {
            Strategy::Bfs | Strategy::Dfs => open[0],
            Strategy::Random => open[rng.gen_range(0..open.len())],
            Strategy::Guided => {
                // Flip the zero entry with the highest residual; ties go to
                // the lowest index, +1 before -1.
                *open
                    .iter()
                    .max_by(|(i, si), (j, sj)| {
                        self.r[*i]
                            .partial_cmp(&self.r[*j])
                            .unwrap()
                            .then(j.cmp(i))
                            .then(si.cmp(sj))
                    })
                    .unwrap()
            }
            Strategy::Greedy => {
                let l = node.loss.clone().unwrap_or_else(|| vec![0.0; self.m]);
                *open
                    .iter()
                    .max_by(|(i, si), (j, sj)| {
                        l[*i]
                            .partial_cmp(&l[*j])
                            .unwrap()
                            .then(j.cmp(i))
                            .then(si.cmp(sj))
                    })
                    .unwrap()
            }
        };
        self.nodes[parent].mark_proposed(pick.0, pick.1);
        Some(pick)
    }
}

/// One proposal in the invention trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InventionStep {
    pub iteration: usize,
    pub vector: EffectVector,
    /// accepted | rejected | pruned-static | pruned-sum
    pub outcome: String,
    pub loss: Option<Vec<f64>>,
    pub total: Option<f64>,
}

pub struct AcceptedVector {
    pub vector: EffectVector,
    pub params: Option<MlpParams>,
    pub loss: LossBreakdown,
}

pub struct GroupResult {
    pub accepted: Vec<AcceptedVector>,
    pub steps: Vec<InventionStep>,
    pub evaluations: usize,
}

/// Runs the expansion loop for one signature group until the evaluation
/// budget is spent or every reachable node is fully expanded. Accepts each
/// evaluated vector whose validation loss clears the threshold.
pub fn invent_group(cfg: &InventConfig, evaluator: &mut dyn VectorEvaluator) -> GroupResult {
    let m = evaluator.n_actions();
    let trainable = evaluator.trainable_actions();
    let mut tree = EffectTree::new(m);
    let mut rng = rng_at(cfg.seed, stream::ABLATE, 0);
    let mut accepted = Vec::new();
    let mut steps = Vec::new();
    let mut proposal = 0usize;

    while tree.evaluations < cfg.max_iterations {
        let Some(parent) = tree.select_parent(cfg, &mut rng) else {
            break;
        };
        tree.nodes[parent].visits += 1;
        let Some((idx, sign)) = tree.propose_pair(parent, cfg.strategy, &mut rng) else {
            continue;
        };
        let child = tree.nodes[parent].vector.child(idx, sign);
        proposal += 1;
        if tree.contains(&child) {
            continue;
        }

        if cfg.prune {
            if child.nonzero_indices().any(|i| !trainable[i]) {
                tree.insert(child.clone(), Status::Pruned, None);
                steps.push(InventionStep {
                    iteration: proposal,
                    vector: child,
                    outcome: "pruned-static".to_string(),
                    loss: None,
                    total: None,
                });
                continue;
            }
            // A candidate inherits every committed entry of an evaluated
            // sub-vector (same sign at each of its nonzeros), and with it
            // that sub-vector's loss on those entries. Sign must match:
            // classifiers are negation-symmetric, so an opposite-sign or
            // conflicted sibling's loss says nothing about this branch.
            let condemned = tree.nodes.iter().any(|n| {
                n.loss.as_ref().is_some_and(|l| {
                    let mut inherited = 0.0;
                    for i in n.vector.nonzero_indices() {
                        if child.0[i] != n.vector.0[i] {
                            return false;
                        }
                        inherited += l[i];
                    }
                    inherited > cfg.tau
                })
            });
            if condemned {
                tree.insert(child.clone(), Status::Pruned, None);
                steps.push(InventionStep {
                    iteration: proposal,
                    vector: child,
                    outcome: "pruned-sum".to_string(),
                    loss: None,
                    total: None,
                });
                continue;
            }
        }

        let result = evaluator.evaluate(&child);
        let l = result.loss.per_action.clone();
        tree.update_values(&child, &l);
        tree.insert(child.clone(), Status::Evaluated, Some(l.clone()));
        let ok = result.loss.total <= cfg.tau;
        steps.push(InventionStep {
            iteration: proposal,
            vector: child.clone(),
            outcome: if ok { "accepted" } else { "rejected" }.to_string(),
            loss: Some(l),
            total: Some(result.loss.total),
        });
        if ok {
            accepted.push(AcceptedVector {
                vector: child,
                params: result.params,
                loss: result.loss,
            });
        }
    }

    GroupResult {
        accepted,
        steps,
        evaluations: tree.evaluations,
    }
}

/// Max occurrences of each type across controller signatures; governs how
/// many slot-correspondence variants a same-typed signature needs.
fn type_occurrence_ceiling(controllers: &[std::sync::Arc<ControllerSig>]) -> BTreeMap<String, usize> {
    let mut ceil: BTreeMap<String, usize> = BTreeMap::new();
    for c in controllers {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &c.var_types {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        for (t, n) in counts {
            let e = ceil.entry(t.to_string()).or_default();
            *e = (*e).max(n);
        }
    }
    ceil
}

fn correspondence_choices(var_types: &[String], ceiling: &BTreeMap<String, usize>) -> Vec<Vec<usize>> {
    // Per slot, the occurrence indices it may bind to; product of injective
    // (within each type) assignments.
    let mut results = vec![Vec::new()];
    for (j, ty) in var_types.iter().enumerate() {
        let k = ceiling.get(ty).copied().unwrap_or(1).max(1);
        let mut next = Vec::new();
        for partial in &results {
            for occ in 0..k {
                let clash = var_types[..j]
                    .iter()
                    .zip(partial.iter())
                    .any(|(t2, o2)| t2 == ty && *o2 == occ);
                if !clash {
                    let mut ext = partial.clone();
                    ext.push(occ);
                    next.push(ext);
                }
            }
        }
        results = next;
    }
    results
}

/// All candidate signature groups up to `max_arity`: ordered type tuples
/// groundable under `type_counts` (distinct objects per slot), replicated
/// per slot-correspondence choice whenever some controller carries the same
/// type more than once. Names are positional (`P0`, `P1`, ...).
pub fn enumerate_signatures(
    spec: &DomainSpec,
    max_arity: usize,
    type_counts: &BTreeMap<String, usize>,
) -> Vec<PredicateSig> {
    let ceiling = type_occurrence_ceiling(&spec.controllers);
    let type_names: Vec<&str> = spec.types.iter().map(|t| t.name.as_str()).collect();
    let mut tuples: Vec<Vec<String>> = vec![vec![]];
    let mut out = Vec::new();
    let mut group_idx = 0usize;
    for arity in 0..=max_arity {
        if arity > 0 {
            let mut next = Vec::new();
            for tuple in &tuples {
                for ty in &type_names {
                    let mut t = tuple.clone();
                    t.push(ty.to_string());
                    next.push(t);
                }
            }
            tuples = next;
        }
        for tuple in &tuples {
            let mut need: BTreeMap<&str, usize> = BTreeMap::new();
            for ty in tuple {
                *need.entry(ty.as_str()).or_default() += 1;
            }
            let groundable = need
                .iter()
                .all(|(ty, n)| type_counts.get(*ty).copied().unwrap_or(0) >= *n);
            if !groundable {
                continue;
            }
            let replicated = tuple
                .iter()
                .any(|ty| ceiling.get(ty).copied().unwrap_or(1) > 1);
            if replicated {
                for corr in correspondence_choices(tuple, &ceiling) {
                    let sig = PredicateSig::new(
                        &format!("P{group_idx}"),
                        &tuple.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
                        PredKind::Dynamic,
                    )
                    .with_correspondence(corr);
                    out.push(sig);
                    group_idx += 1;
                }
            } else {
                out.push(PredicateSig::new(
                    &format!("P{group_idx}"),
                    &tuple.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
                    PredKind::Dynamic,
                ));
                group_idx += 1;
            }
        }
    }
    out
}

/// Prefix variants of an accepted predicate: one negation plus one
/// universally-quantified variant per argument slot. The base predicate
/// stays in the pool alongside these.
pub fn add_prefixes(base: &PredicateSig) -> Vec<PredicateSig> {
    let mut out = Vec::new();
    let mut neg = base.clone();
    neg.prefix = Prefix::Negation;
    out.push(neg);
    for slot in 0..base.var_types.len() {
        let mut fa = base.clone();
        fa.prefix = Prefix::Forall(slot);
        out.push(fa);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TypeDef;
    use std::collections::BTreeSet;
    use std::sync::Arc;

    #[test]
    fn residual_update_fixture() {
        let mut tree = EffectTree::new(4);
        tree.r = vec![0.5, 0.1, 0.0, 0.0];
        tree.update_values(&EffectVector(vec![1, 0, 0, -1]), &[0.9, 0.3, 0.2, 0.4]);
        assert_eq!(tree.r, vec![0.5, 0.2, 0.1, 0.0]);
        let v = tree.node_value(&EffectVector(vec![0, 1, 0, 0]));
        assert!((v - 0.2).abs() < 1e-12);
        // Fully nonzero vectors have no residual mass.
        assert_eq!(tree.node_value(&EffectVector(vec![1, 1, -1, 1])), 0.0);
    }

    #[test]
    fn fully_nonzero_evaluation_leaves_residuals_alone() {
        let mut tree = EffectTree::new(3);
        tree.r = vec![0.3, 0.2, 0.1];
        tree.update_values(&EffectVector(vec![1, -1, 1]), &[0.9, 0.9, 0.9]);
        assert_eq!(tree.r, vec![0.3, 0.2, 0.1]);
    }

    #[test]
    fn proposal_flips_highest_residual_zero() {
        let cfg = InventConfig::default();
        let mut tree = EffectTree::new(4);
        tree.r = vec![0.5, 0.2, 0.1, 0.0];
        let mut rng = rng_at(0, stream::ABLATE, 0);
        let parent = tree.select_parent(&cfg, &mut rng).unwrap();
        assert_eq!(parent, 0);
        let (idx, sign) = tree.propose_pair(parent, Strategy::Guided, &mut rng).unwrap();
        assert_eq!((idx, sign), (0, 1));
        // Same index again with the other sign before moving to index 1.
        let (idx, sign) = tree.propose_pair(parent, Strategy::Guided, &mut rng).unwrap();
        assert_eq!((idx, sign), (0, -1));
        let (idx, sign) = tree.propose_pair(parent, Strategy::Guided, &mut rng).unwrap();
        assert_eq!((idx, sign), (1, 1));
    }

    #[test]
    fn exploration_term_can_override_value() {
        let cfg = InventConfig::default();
        let mut tree = EffectTree::new(3);
        tree.r = vec![0.4, 0.4, 0.4];
        // Evaluate one child, then make the root look heavily visited.
        tree.insert(
            EffectVector(vec![1, 0, 0]),
            Status::Evaluated,
            Some(vec![0.0, 0.0, 0.0]),
        );
        tree.evaluations = 50;
        tree.nodes[0].visits = 50;
        let mut rng = rng_at(0, stream::ABLATE, 0);
        // Root value mean(R)=0.4 > child value 0.4 over {1,2} = 0.4 — equal
        // values, but the unvisited child wins on the exploration term.
        let picked = tree.select_parent(&cfg, &mut rng).unwrap();
        assert_eq!(picked, 1);
    }

    #[test]
    fn exhaustive_enumeration_without_pruning() {
        for m in 2..=4usize {
            let cfg = InventConfig {
                prune: false,
                max_iterations: usize::MAX,
                ..InventConfig::default()
            };
            let mut eval = ConstEvaluator {
                n_actions: m,
                loss: 0.5,
            };
            let result = invent_group(&cfg, &mut eval);
            let expect = 3usize.pow(m as u32) - 1;
            assert_eq!(result.evaluations, expect, "m={m}");
            let seen: BTreeSet<EffectVector> = result
                .steps
                .iter()
                .map(|s| s.vector.clone())
                .collect();
            assert_eq!(seen.len(), expect);
            // Cross-check against brute-force enumeration.
            let mut brute = BTreeSet::new();
            for code in 0..3usize.pow(m as u32) {
                let mut c = code;
                let mut v = Vec::with_capacity(m);
                for _ in 0..m {
                    v.push([0i8, 1, -1][c % 3]);
                    c /= 3;
                }
                let ev = EffectVector(v);
                if ev.level() > 0 {
                    brute.insert(ev);
                }
            }
            assert_eq!(seen, brute);
        }
    }

    #[test]
    fn static_actions_are_pre_pruned() {
        struct Half;
        impl VectorEvaluator for Half {
            fn n_actions(&self) -> usize {
                2
            }
            fn trainable_actions(&self) -> Vec<bool> {
                vec![true, false]
            }
            fn evaluate(&mut self, _d: &EffectVector) -> EvaluatedVector {
                EvaluatedVector {
                    loss: LossBreakdown {
                        per_action: vec![0.0, 0.0],
                        has_data: vec![true, false],
                        total: 0.0,
                    },
                    params: None,
                }
            }
        }
        let cfg = InventConfig {
            max_iterations: usize::MAX,
            ..InventConfig::default()
        };
        let result = invent_group(&cfg, &mut Half);
        for step in &result.steps {
            if step.vector.0[1] != 0 {
                assert_eq!(step.outcome, "pruned-static", "{}", step.vector);
            }
        }
        // Only the two flips of index 0 are ever trained.
        assert_eq!(result.evaluations, 2);
    }

    #[test]
    fn high_loss_nonzeros_condemn_descendants() {
        // Target [0,+1]: entry 0 nonzero costs ln2/2 > tau, so once [+1,0]
        // (or [-1,0]) is evaluated, everything sharing a nonzero index 0 is
        // pruned instead of trained.
        let cfg = InventConfig {
            max_iterations: usize::MAX,
            ..InventConfig::default()
        };
        let mut eval = OracleEvaluator::new(2, vec![EffectVector(vec![0, 1])]);
        let result = invent_group(&cfg, &mut eval);
        // Both the target and its complement-realizing twin clear tau.
        let got: Vec<EffectVector> = result.accepted.iter().map(|a| a.vector.clone()).collect();
        assert_eq!(got, vec![EffectVector(vec![0, 1]), EffectVector(vec![0, -1])]);
        let pruned_sum: Vec<&InventionStep> = result
            .steps
            .iter()
            .filter(|s| s.outcome == "pruned-sum")
            .collect();
        assert!(!pruned_sum.is_empty());
        for s in &pruned_sum {
            assert_ne!(s.vector.0[0], 0);
        }
    }

    #[test]
    fn zero_budget_returns_nothing() {
        let cfg = InventConfig {
            max_iterations: 0,
            ..InventConfig::default()
        };
        let mut eval = ConstEvaluator {
            n_actions: 3,
            loss: 0.0,
        };
        let result = invent_group(&cfg, &mut eval);
        assert!(result.accepted.is_empty());
        assert_eq!(result.evaluations, 0);
    }

    fn toy_spec(controllers: Vec<(&str, Vec<&str>)>) -> DomainSpec {
        DomainSpec {
            name: "toy".to_string(),
            types: vec![
                TypeDef::new("r", &["x"]),
                TypeDef::new("b", &["x"]),
            ],
            controllers: controllers
                .into_iter()
                .map(|(name, vars)| Arc::new(ControllerSig::new(name, &vars, vec![])))
                .collect(),
            scripted: vec![],
            allow_same_object: false,
        }
    }

    #[test]
    fn signature_enumeration_without_duplicate_types() {
        let spec = toy_spec(vec![("Move", vec!["r", "b"])]);
        let counts = BTreeMap::from([("r".to_string(), 2), ("b".to_string(), 3)]);
        let sigs = enumerate_signatures(&spec, 2, &counts);
        let tuples: Vec<Vec<String>> = sigs.iter().map(|s| s.var_types.clone()).collect();
        assert_eq!(
            tuples,
            vec![
                vec![],
                vec!["r".to_string()],
                vec!["b".to_string()],
                vec!["r".to_string(), "r".to_string()],
                vec!["r".to_string(), "b".to_string()],
                vec!["b".to_string(), "r".to_string()],
                vec!["b".to_string(), "b".to_string()],
            ]
        );
        assert!(sigs.iter().all(|s| s.correspondence.is_none()));
    }

    #[test]
    fn duplicate_controller_types_replicate_signatures() {
        // Stack carries two b's: unary (b) splits into occurrence 0 vs 1,
        // (b,b) into the two injective slot orders, (r,b) into the two
        // choices of which stacked block the second slot tracks.
        let spec = toy_spec(vec![("Stack", vec!["r", "b", "b"])]);
        let counts = BTreeMap::from([("r".to_string(), 1), ("b".to_string(), 4)]);
        let sigs = enumerate_signatures(&spec, 2, &counts);
        let by_tuple = |tuple: &[&str]| -> Vec<Option<Vec<usize>>> {
            sigs.iter()
                .filter(|s| s.var_types == tuple)
                .map(|s| s.correspondence.clone())
                .collect()
        };
        assert_eq!(by_tuple(&["b"]), vec![Some(vec![0]), Some(vec![1])]);
        assert_eq!(
            by_tuple(&["b", "b"]),
            vec![Some(vec![0, 1]), Some(vec![1, 0])]
        );
        assert_eq!(
            by_tuple(&["r", "b"]),
            vec![Some(vec![0, 0]), Some(vec![0, 1])]
        );
        // (r,r) is not groundable with a single robot.
        assert!(by_tuple(&["r", "r"]).is_empty());
    }

    #[test]
    fn prefix_variants_cover_negation_and_each_slot() {
        let base = PredicateSig::new("P2", &["r", "b"], PredKind::Dynamic);
        let variants = add_prefixes(&base);
        assert_eq!(variants.len(), 3);
        assert_eq!(variants[0].prefix, Prefix::Negation);
        assert_eq!(variants[1].prefix, Prefix::Forall(0));
        assert_eq!(variants[2].prefix, Prefix::Forall(1));
        assert!(variants.iter().all(|v| v.name == "P2"));
    }

    #[test]
    fn guided_reaches_targets_before_breadth_first() {
        // Two level-2 targets over five controllers; count evaluations
        // until every target has been trained.
        let targets = vec![
            EffectVector(vec![0, 1, -1, 0, 0]),
            EffectVector(vec![0, 0, 1, 0, -1]),
        ];
        let evals_to_find = |strategy: Strategy| -> usize {
            let cfg = InventConfig {
                strategy,
                max_iterations: 300,
                ..InventConfig::default()
            };
            let mut eval = OracleEvaluator::new(5, targets.clone());
            let result = invent_group(&cfg, &mut eval);
            let mut found = 0usize;
            let mut count = 0usize;
            for step in &result.steps {
                if step.loss.is_some() {
                    count += 1;
                    if targets.contains(&step.vector) {
                        found += 1;
                        if found == targets.len() {
                            return count;
                        }
                    }
                }
            }
            usize::MAX
        };
        let guided = evals_to_find(Strategy::Guided);
        let bfs = evals_to_find(Strategy::Bfs);
        let dfs = evals_to_find(Strategy::Dfs);
        assert!(guided < bfs, "guided {guided} vs bfs {bfs}");
        assert!(guided < dfs, "guided {guided} vs dfs {dfs}");
    }
}

