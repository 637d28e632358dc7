//! Bilevel planner: best-first search over ground operators streams
//! candidate skeletons by additive delete-relaxation heuristic, and guided
//! sampling refines each skeleton into continuous parameters against the
//! simulator.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{ground_tuples, GroundAction, ObjectRef, Prefix, Simulator, State, Task};
use crate::planlearn::sampler::{uniform_box, ParamSampler};
use crate::planlearn::AbstractModel;
use crate::runtime::{rng_at, stream};

/// Fixed-width atom set; one bit per ground atom.
pub type Bits = Vec<u64>;

pub fn bits_new(n_atoms: usize) -> Bits {
    vec![0; n_atoms.div_ceil(64)]
}

pub fn bit_set(bits: &mut Bits, i: usize) {
    bits[i / 64] |= 1 << (i % 64);
}

pub fn bit_clear(bits: &mut Bits, i: usize) {
    bits[i / 64] &= !(1 << (i % 64));
}

pub fn bit_get(bits: &Bits, i: usize) -> bool {
    bits[i / 64] >> (i % 64) & 1 == 1
}

/// Whether every listed atom id is set.
pub fn bits_contain_all(bits: &Bits, ids: &[usize]) -> bool {
    ids.iter().all(|&i| bit_get(bits, i))
}

const INF: u64 = u64::MAX;

/// A model grounded against one task's objects: interned atoms, ground
/// operators over atom ids, and the goal as atom ids.
#[derive(Debug, Clone)]
pub struct GroundModel {
    /// `(pool predicate id, object indices)` per atom id, in pool order.
    pub atoms: Vec<(usize, Vec<usize>)>,
    index: BTreeMap<(usize, Vec<usize>), usize>,
    pub ops: Vec<GroundOp>,
    pub goal: Vec<usize>,
    pub objects: Vec<ObjectRef>,
}

#[derive(Debug, Clone)]
pub struct GroundOp {
    /// Index into the abstract model's operator list (= controller index).
    pub op_idx: usize,
    pub controller: usize,
    pub objects: Vec<usize>,
    pub pre: Vec<usize>,
    pub add: Vec<usize>,
    pub del: Vec<usize>,
}

impl GroundModel {
    pub fn atom_id(&self, pred: usize, objects: &[usize]) -> Option<usize> {
        self.index.get(&(pred, objects.to_vec())).copied()
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }
}

/// Grounds predicates and operators over a task's objects. Fails when a
/// goal atom refers to a predicate or object the model does not carry.
pub fn ground_model(model: &AbstractModel, task: &Task) -> Result<GroundModel, String> {
    let spec = &model.pool.spec;
    let obj_idx: BTreeMap<&str, usize> = task
        .objects
        .iter()
        .enumerate()
        .map(|(i, o)| (o.name.as_str(), i))
        .collect();
    let mut atoms = Vec::new();
    let mut index = BTreeMap::new();
    for pred in &model.pool.preds {
        for atom in pred.ground_atoms(&task.objects, spec.allow_same_object) {
            let ids: Vec<usize> = atom.objects.iter().map(|o| obj_idx[o.name.as_str()]).collect();
            index.insert((pred.id, ids.clone()), atoms.len());
            atoms.push((pred.id, ids));
        }
    }
    let mut ops = Vec::new();
    for op in &model.operators {
        let ctrl = &spec.controllers[op.controller];
        for tuple in ground_tuples(&ctrl.var_types, &task.objects, spec.allow_same_object) {
            let objs: Vec<usize> = tuple.iter().map(|o| obj_idx[o.name.as_str()]).collect();
            let resolve = |atoms: &[crate::planlearn::LiftedAtom]| -> Vec<usize> {
                atoms
                    .iter()
                    .map(|a| {
                        let bound: Vec<usize> = a.binding.iter().map(|&v| objs[v]).collect();
                        index[&(a.pred, bound)]
                    })
                    .collect()
            };
            ops.push(GroundOp {
                op_idx: op.controller,
                controller: op.controller,
                objects: objs.clone(),
                pre: resolve(&op.pre),
                add: resolve(&op.eff_add),
                del: resolve(&op.eff_del),
            });
        }
    }
    let mut goal = Vec::new();
    for g in &task.goal {
        let pred = model
            .pool
            .find(&g.pred.name, Prefix::None)
            .ok_or_else(|| format!("goal predicate {} not in pool", g.pred.name))?;
        let ids: Vec<usize> = g
            .objects
            .iter()
            .map(|o| {
                obj_idx
                    .get(o.name.as_str())
                    .copied()
                    .ok_or_else(|| format!("goal object {} not in task", o.name))
            })
            .collect::<Result<_, _>>()?;
        let aid = index
            .get(&(pred.id, ids))
            .copied()
            .ok_or_else(|| format!("goal atom {} not groundable", g))?;
        goal.push(aid);
    }
    Ok(GroundModel {
        atoms,
        index,
        ops,
        goal,
        objects: task.objects.clone(),
    })
}

/// Evaluates every ground atom's classifier on a continuous state.
pub fn abstract_bits(model: &AbstractModel, gm: &GroundModel, state: &State) -> Bits {
    let allow = model.pool.spec.allow_same_object;
    let mut bits = bits_new(gm.n_atoms());
    let mut objs: Vec<ObjectRef> = Vec::new();
    for (i, (pid, oids)) in gm.atoms.iter().enumerate() {
        objs.clear();
        objs.extend(oids.iter().map(|&o| gm.objects[o].clone()));
        if model.pool.preds[*pid].holds(state, &objs, &gm.objects, allow) {
            bit_set(&mut bits, i);
        }
    }
    bits
}

/// Additive delete-relaxation heuristic: cheapest relaxed cost per atom by
/// fixpoint, goal value the sum over goal atoms.
pub fn h_add(gm: &GroundModel, bits: &Bits) -> u64 {
    let mut cost: Vec<u64> = (0..gm.n_atoms())
        .map(|i| if bit_get(bits, i) { 0 } else { INF })
        .collect();
    let mut changed = true;
    while changed {
        changed = false;
        for op in &gm.ops {
            let mut c: u64 = 0;
            let mut reachable = true;
            for &p in &op.pre {
                if cost[p] == INF {
                    reachable = false;
                    break;
                }
                c = c.saturating_add(cost[p]);
            }
            if !reachable {
                continue;
            }
            let c1 = c.saturating_add(1);
            for &a in &op.add {
                if c1 < cost[a] {
                    cost[a] = c1;
                    changed = true;
                }
            }
        }
    }
    let mut h: u64 = 0;
    for &g in &gm.goal {
        if cost[g] == INF {
            return INF;
        }
        h = h.saturating_add(cost[g]);
    }
    h
}

struct SearchNode {
    bits: Bits,
    parent: Option<(usize, usize)>,
    g: u64,
}

pub enum SearchStep {
    /// Ground-op indices of the next cheapest goal-reaching skeleton.
    Skeleton(Vec<usize>),
    Exhausted,
    BudgetExceeded,
}

/// Resumable best-first search over abstract states. Ties on f break
/// last-in-first-out; successors are pushed in descending ground-op order
/// so the lowest-indexed applicable operator is explored first. Non-goal
/// states close on expansion; goal states stay open so later calls can
/// stream alternative skeletons.
pub struct SkeletonSearch<'a> {
    gm: &'a GroundModel,
    nodes: Vec<SearchNode>,
    open: BinaryHeap<(Reverse<u64>, u64, usize)>,
    closed: BTreeSet<Bits>,
    node_budget: usize,
    pub nodes_expanded: usize,
    seq: u64,
}

impl<'a> SkeletonSearch<'a> {
    pub fn new(gm: &'a GroundModel, x0: Bits, node_budget: usize) -> Self {
        let mut search = SkeletonSearch {
            gm,
            nodes: Vec::new(),
            open: BinaryHeap::new(),
            closed: BTreeSet::new(),
            node_budget,
            nodes_expanded: 0,
            seq: 0,
        };
        let h = h_add(gm, &x0);
        search.nodes.push(SearchNode {
            bits: x0,
            parent: None,
            g: 0,
        });
        if h != INF {
            search.open.push((Reverse(h), 0, 0));
        }
        search
    }

    fn path(&self, mut id: usize) -> Vec<usize> {
        let mut ops = Vec::new();
        while let Some((parent, op)) = self.nodes[id].parent {
            ops.push(op);
            id = parent;
        }
        ops.reverse();
        ops
    }

    pub fn next_skeleton(&mut self) -> SearchStep {
        while let Some((Reverse(_f), _seq, id)) = self.open.pop() {
            if bits_contain_all(&self.nodes[id].bits, &self.gm.goal) {
                return SearchStep::Skeleton(self.path(id));
            }
            if self.closed.contains(&self.nodes[id].bits) {
                continue;
            }
            if self.nodes_expanded >= self.node_budget {
                return SearchStep::BudgetExceeded;
            }
            self.nodes_expanded += 1;
            self.closed.insert(self.nodes[id].bits.clone());
            for gi in (0..self.gm.ops.len()).rev() {
                let op = &self.gm.ops[gi];
                if !bits_contain_all(&self.nodes[id].bits, &op.pre) {
                    continue;
                }
                let mut succ = self.nodes[id].bits.clone();
                for &d in &op.del {
                    bit_clear(&mut succ, d);
                }
                for &a in &op.add {
                    bit_set(&mut succ, a);
                }
                if self.closed.contains(&succ) {
                    continue;
                }
                let h = h_add(self.gm, &succ);
                if h == INF {
                    continue;
                }
                let g = self.nodes[id].g + 1;
                self.nodes.push(SearchNode {
                    bits: succ,
                    parent: Some((id, gi)),
                    g,
                });
                self.seq += 1;
                self.open
                    .push((Reverse(g.saturating_add(h)), self.seq, self.nodes.len() - 1));
            }
        }
        SearchStep::Exhausted
    }
}

/// Skeleton as displayable ground actions (without parameters).
pub fn skeleton_actions(model: &AbstractModel, gm: &GroundModel, skeleton: &[usize]) -> Vec<GroundAction> {
    let spec = &model.pool.spec;
    skeleton
        .iter()
        .map(|&gi| {
            let op = &gm.ops[gi];
            GroundAction::new(
                &spec.controllers[op.controller],
                op.objects.iter().map(|&o| gm.objects[o].clone()).collect(),
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineConfig {
    /// Samples per skeleton step before giving up.
    pub n_tries: usize,
    /// With guidance the sampler's screen and the abstract state check
    /// filter samples; without it the first simulator-applicable sample is
    /// taken as-is.
    pub guidance: bool,
    /// Probability of replacing a proposal with a uniform-in-bounds draw.
    pub sampler_noise: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            n_tries: 10,
            guidance: true,
            sampler_noise: 0.0,
        }
    }
}

fn atom_holds(model: &AbstractModel, gm: &GroundModel, aid: usize, state: &State) -> bool {
    let (pid, oids) = &gm.atoms[aid];
    let objs: Vec<ObjectRef> = oids.iter().map(|&o| gm.objects[o].clone()).collect();
    model.pool.preds[*pid].holds(state, &objs, &gm.objects, model.pool.spec.allow_same_object)
}

/// Samples parameters for each skeleton step. Guided acceptance demands the
/// successor realize the operator's effect atoms and the next step's
/// preconditions; unguided acceptance stops at simulator applicability.
pub fn refine_skeleton(
    model: &AbstractModel,
    gm: &GroundModel,
    samplers: &[Arc<dyn ParamSampler>],
    sim: &dyn Simulator,
    task: &Task,
    skeleton: &[usize],
    cfg: &RefineConfig,
    rng: &mut ChaCha8Rng,
) -> Option<(Vec<GroundAction>, Vec<State>)> {
    let spec = &model.pool.spec;
    let mut states = vec![task.x0.clone()];
    let mut plan = Vec::new();
    for (k, &gi) in skeleton.iter().enumerate() {
        let op = &gm.ops[gi];
        let ctrl = &spec.controllers[op.controller];
        let objects: Vec<ObjectRef> = op.objects.iter().map(|&o| gm.objects[o].clone()).collect();
        let state = states.last().unwrap().clone();
        let mut accepted = None;
        for _ in 0..cfg.n_tries {
            let omega = if cfg.sampler_noise > 0.0 && rng.gen_bool(cfg.sampler_noise) {
                uniform_box(ctrl, rng)
            } else {
                samplers[op.controller].sample(ctrl, &state, &objects, rng)
            };
            if cfg.guidance {
                if let Some(p) = samplers[op.controller].screen(ctrl, &state, &objects, &omega) {
                    if p < 0.5 {
                        continue;
                    }
                }
            }
            let action = GroundAction::new(ctrl, objects.clone()).with_omega(omega);
            if !sim.applicable(&state, &action) {
                continue;
            }
            let succ = sim.step(&state, &action);
            if cfg.guidance {
                let effects_ok = op.add.iter().all(|&a| atom_holds(model, gm, a, &succ))
                    && op.del.iter().all(|&d| !atom_holds(model, gm, d, &succ));
                let next_ok = match skeleton.get(k + 1) {
                    Some(&ni) => gm.ops[ni]
                        .pre
                        .iter()
                        .all(|&p| atom_holds(model, gm, p, &succ)),
                    None => true,
                };
                if !(effects_ok && next_ok) {
                    continue;
                }
            }
            accepted = Some((action, succ));
            break;
        }
        let (action, succ) = accepted?;
        plan.push(action);
        states.push(succ);
    }
    Some((plan, states))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    Solved,
    /// No (further) abstract path to the goal exists.
    SearchExhausted,
    /// Node budget hit before a skeleton was found.
    SearchBudget,
    /// Skeletons were found but none refined into a verified plan.
    RefineFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonAttempt {
    pub actions: Vec<String>,
    pub refined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub status: PlanStatus,
    pub plan: Option<Vec<GroundAction>>,
    pub nodes_expanded: usize,
    pub skeletons_tried: usize,
    pub attempts: Vec<SkeletonAttempt>,
    /// In-memory timing only; never serialized, so records stay
    /// byte-identical across reruns.
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub max_skeletons: usize,
    pub node_budget: usize,
    pub refine: RefineConfig,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            max_skeletons: 8,
            node_budget: 10_000,
            refine: RefineConfig::default(),
        }
    }
}

/// Full bilevel solve: stream skeletons, refine each, verify the goal with
/// the domain's scripted goal classifiers. `task_ctr` namespaces the
/// refinement RNG per task.
pub fn solve_task(
    model: &AbstractModel,
    samplers: &[Arc<dyn ParamSampler>],
    sim: &dyn Simulator,
    task: &Task,
    cfg: &PlanConfig,
    seed: u64,
    task_ctr: u64,
) -> PlanResult {
    let t0 = Instant::now();
    let mut result = PlanResult {
        status: PlanStatus::SearchExhausted,
        plan: None,
        nodes_expanded: 0,
        skeletons_tried: 0,
        attempts: Vec::new(),
        wall_ms: 0.0,
    };
    let Ok(gm) = ground_model(model, task) else {
        result.wall_ms = t0.elapsed().as_secs_f64() * 1e3;
        return result;
    };
    let x0 = abstract_bits(model, &gm, &task.x0);
    let mut search = SkeletonSearch::new(&gm, x0, cfg.node_budget);
    while result.skeletons_tried < cfg.max_skeletons {
        match search.next_skeleton() {
            SearchStep::BudgetExceeded => {
                result.status = PlanStatus::SearchBudget;
                break;
            }
            SearchStep::Exhausted => {
                result.status = if result.skeletons_tried == 0 {
                    PlanStatus::SearchExhausted
                } else {
                    PlanStatus::RefineFailed
                };
                break;
            }
            SearchStep::Skeleton(skeleton) => {
                let si = result.skeletons_tried as u64;
                result.skeletons_tried += 1;
                let mut rng = rng_at(seed, stream::REFINE, task_ctr * 64 + si);
                let refined = refine_skeleton(
                    model, &gm, samplers, sim, task, &skeleton, &cfg.refine, &mut rng,
                );
                let shown: Vec<String> = skeleton_actions(model, &gm, &skeleton)
                    .iter()
                    .map(|a| a.to_string())
                    .collect();
                match refined {
                    Some((plan, states)) => {
                        let goal_met = task.goal.iter().all(|g| {
                            sim.spec()
                                .scripted_by_name(&g.pred.name)
                                .map(|p| p.holds(states.last().unwrap(), &g.objects))
                                .unwrap_or(false)
                        });
                        result.attempts.push(SkeletonAttempt {
                            actions: shown,
                            refined: true,
                        });
                        if goal_met {
                            result.status = PlanStatus::Solved;
                            result.plan = Some(plan);
                            break;
                        }
                    }
                    None => {
                        result.attempts.push(SkeletonAttempt {
                            actions: shown,
                            refined: false,
                        });
                    }
                }
                if result.skeletons_tried == cfg.max_skeletons {
                    result.status = PlanStatus::RefineFailed;
                }
            }
        }
    }
    result.nodes_expanded = search.nodes_expanded;
    result.wall_ms = t0.elapsed().as_secs_f64() * 1e3;
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        ControllerSig, DomainSpec, GroundAtom, PredKind, PredicateSig, ScriptedPredicate, TypeDef,
    };
    use crate::planlearn::sampler::Sampler;
    use crate::planlearn::{Classifier, LiftedAtom, Operator, Pool, Predicate};

    /// One item with features [armed, fired]. `Arm(i; w)` sets armed to w;
    /// `Fire(i)` needs armed > 0.5 and sets fired. Goal: Fired(i).
    struct ChainSim {
        spec: DomainSpec,
    }

    fn chain_spec() -> DomainSpec {
        DomainSpec {
            name: "chain".into(),
            types: vec![TypeDef::new("item", &["armed", "fired"])],
            controllers: vec![
                Arc::new(ControllerSig::new("Arm", &["item"], vec![(-1.0, 1.0)])),
                Arc::new(ControllerSig::new("Fire", &["item"], vec![])),
            ],
            scripted: vec![ScriptedPredicate::new(
                PredicateSig::new("Fired", &["item"], PredKind::Goal),
                |s, o| s.feature(&o[0].name, 1) > 0.5,
            )],
            allow_same_object: false,
        }
    }

    impl Simulator for ChainSim {
        fn spec(&self) -> &DomainSpec {
            &self.spec
        }

        fn applicable(&self, state: &State, action: &GroundAction) -> bool {
            match action.controller.name.as_str() {
                "Arm" => true,
                "Fire" => state.feature(&action.objects[0].name, 0) > 0.5,
                _ => false,
            }
        }

        fn step(&self, state: &State, action: &GroundAction) -> State {
            let mut s = state.clone();
            let name = &action.objects[0].name;
            match action.controller.name.as_str() {
                "Arm" => s.set_feature(name, 0, action.omega.as_ref().unwrap()[0]),
                "Fire" => s.set_feature(name, 1, 1.0),
                _ => unreachable!(),
            }
            s
        }
    }

    fn chain_model() -> AbstractModel {
        let spec = Arc::new(chain_spec());
        let pool = Pool {
            spec: Arc::clone(&spec),
            preds: vec![
                Arc::new(Predicate::new(
                    0,
                    PredicateSig::new("Armed", &["item"], PredKind::Dynamic),
                    Classifier::Scripted(Arc::new(|s: &State, o: &[ObjectRef]| {
                        s.feature(&o[0].name, 0) > 0.5
                    })),
                    Some(crate::invent::EffectVector(vec![1, 0])),
                )),
                Arc::new(Predicate::new(
                    1,
                    PredicateSig::new("Fired", &["item"], PredKind::Goal),
                    Classifier::Scripted(Arc::new(|s: &State, o: &[ObjectRef]| {
                        s.feature(&o[0].name, 1) > 0.5
                    })),
                    Some(crate::invent::EffectVector(vec![0, 1])),
                )),
            ],
        };
        let operators = vec![
            Operator {
                controller: 0,
                pre: vec![],
                eff_add: vec![LiftedAtom {
                    pred: 0,
                    binding: vec![0],
                }],
                eff_del: vec![],
            },
            Operator {
                controller: 1,
                pre: vec![LiftedAtom {
                    pred: 0,
                    binding: vec![0],
                }],
                eff_add: vec![LiftedAtom {
                    pred: 1,
                    binding: vec![0],
                }],
                eff_del: vec![],
            },
        ];
        AbstractModel { pool, operators }
    }

    fn chain_task() -> Task {
        let mut x0 = State::new();
        x0.features.insert("a".into(), vec![0.0, 0.0]);
        let goal_sig = Arc::new(PredicateSig::new("Fired", &["item"], PredKind::Goal));
        Task {
            objects: vec![ObjectRef::new("a", "item")],
            x0,
            goal: vec![GroundAtom::new(&goal_sig, vec![ObjectRef::new("a", "item")])],
        }
    }

    fn chain_samplers() -> Vec<Arc<dyn ParamSampler>> {
        vec![Arc::new(Sampler::UniformBox), Arc::new(Sampler::Trivial)]
    }

    #[test]
    fn h_add_counts_relaxed_steps() {
        let model = chain_model();
        let task = chain_task();
        let gm = ground_model(&model, &task).unwrap();
        let x0 = abstract_bits(&model, &gm, &task.x0);
        // Goal needs Fire after Arm: two relaxed steps.
        assert_eq!(h_add(&gm, &x0), 2);
        let mut armed = x0.clone();
        bit_set(&mut armed, gm.atom_id(0, &[0]).unwrap());
        assert_eq!(h_add(&gm, &armed), 1);
        let empty_goal = GroundModel {
            goal: vec![],
            ..gm.clone()
        };
        assert_eq!(h_add(&empty_goal, &x0), 0);
    }

    #[test]
    fn first_skeleton_is_the_two_step_chain() {
        let model = chain_model();
        let task = chain_task();
        let gm = ground_model(&model, &task).unwrap();
        let x0 = abstract_bits(&model, &gm, &task.x0);
        let mut search = SkeletonSearch::new(&gm, x0, 1000);
        match search.next_skeleton() {
            SearchStep::Skeleton(sk) => {
                let shown: Vec<String> = skeleton_actions(&model, &gm, &sk)
                    .iter()
                    .map(|a| a.to_string())
                    .collect();
                assert_eq!(shown, vec!["Arm(a)", "Fire(a)"]);
            }
            _ => panic!("expected a skeleton"),
        }
        assert!(search.nodes_expanded >= 2);
    }

    #[test]
    fn zero_budget_reports_budget_exceeded() {
        let model = chain_model();
        let task = chain_task();
        let gm = ground_model(&model, &task).unwrap();
        let x0 = abstract_bits(&model, &gm, &task.x0);
        let mut search = SkeletonSearch::new(&gm, x0, 0);
        assert!(matches!(search.next_skeleton(), SearchStep::BudgetExceeded));
    }

    #[test]
    fn unreachable_goal_exhausts_immediately() {
        let model = chain_model();
        let mut task = chain_task();
        // Strip the Fire operator's add effect so nothing achieves the goal.
        let mut broken = model.clone();
        broken.operators[1].eff_add.clear();
        let gm = ground_model(&broken, &task).unwrap();
        let x0 = abstract_bits(&broken, &gm, &task.x0);
        let mut search = SkeletonSearch::new(&gm, x0, 1000);
        assert!(matches!(search.next_skeleton(), SearchStep::Exhausted));
        // A goal already satisfied yields the empty skeleton.
        task.x0.set_feature("a", 1, 1.0);
        let gm = ground_model(&model, &task).unwrap();
        let x0 = abstract_bits(&model, &gm, &task.x0);
        let mut search = SkeletonSearch::new(&gm, x0, 1000);
        match search.next_skeleton() {
            SearchStep::Skeleton(sk) => assert!(sk.is_empty()),
            _ => panic!("expected empty skeleton"),
        }
    }

    #[test]
    fn guided_refinement_retries_until_effects_hold() {
        let model = chain_model();
        let task = chain_task();
        let sim = ChainSim { spec: chain_spec() };
        let cfg = PlanConfig::default();
        let result = solve_task(&model, &chain_samplers(), &sim, &task, &cfg, 0, 0);
        // Arm draws uniform from [-1, 1]; guidance rejects draws that leave
        // Armed false, so some seed-independent retry count still solves it.
        assert_eq!(result.status, PlanStatus::Solved);
        let plan = result.plan.unwrap();
        assert_eq!(plan.len(), 2);
        assert!(plan[0].omega.as_ref().unwrap()[0] > 0.5);
        assert_eq!(result.skeletons_tried, 1);
        assert!(result.wall_ms >= 0.0);
    }

    #[test]
    fn unguided_refinement_accepts_the_first_applicable_draw() {
        let model = chain_model();
        let task = chain_task();
        let sim = ChainSim { spec: chain_spec() };
        let mut cfg = PlanConfig::default();
        cfg.refine.guidance = false;
        cfg.max_skeletons = 1;
        // Find a seed whose first uniform draw arms below threshold: the
        // unguided refiner must then fail at the Fire step.
        let mut hit_failure = false;
        for seed in 0..20 {
            let result = solve_task(&model, &chain_samplers(), &sim, &task, &cfg, seed, 0);
            let guided = solve_task(
                &model,
                &chain_samplers(),
                &sim,
                &task,
                &PlanConfig::default(),
                seed,
                0,
            );
            assert_eq!(guided.status, PlanStatus::Solved);
            if result.status == PlanStatus::RefineFailed {
                hit_failure = true;
                break;
            }
        }
        assert!(hit_failure, "no seed produced an unguided failure");
    }

    #[test]
    fn solve_results_are_bitwise_reproducible() {
        let model = chain_model();
        let task = chain_task();
        let sim = ChainSim { spec: chain_spec() };
        let cfg = PlanConfig::default();
        let a = solve_task(&model, &chain_samplers(), &sim, &task, &cfg, 9, 3);
        let b = solve_task(&model, &chain_samplers(), &sim, &task, &cfg, 9, 3);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
