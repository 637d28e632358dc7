//! Symbolic layer on top of classifiers: predicates with structural
//! prefixes, lifted operators with typed bindings, and the routines that
//! read preconditions and effects off a demonstration set.

pub mod listing;
pub mod sampler;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::invent::EffectVector;
use crate::model::{
    atom_objects_subset, ground_signature, ControllerSig, Demonstration, DomainSpec, GroundAtom,
    ObjectRef, PredicateSig, Prefix, State,
};
use crate::neural::{predicate_input, MlpParams};

/// Truth function behind a predicate: domain-scripted code or a trained
/// network thresholded at 0.5. Prefix semantics (negation, forall) are
/// applied on top by [`Predicate::holds`].
#[derive(Clone)]
pub enum Classifier {
    Scripted(Arc<dyn Fn(&State, &[ObjectRef]) -> bool + Send + Sync>),
    Learned(Arc<MlpParams>),
}

impl fmt::Debug for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classifier::Scripted(_) => write!(f, "Scripted"),
            Classifier::Learned(p) => write!(f, "Learned({:?})", p.layer_sizes),
        }
    }
}

/// A usable predicate: base signature, classifier, and (for dynamics) the
/// per-controller effect direction vector.
#[derive(Debug, Clone)]
pub struct Predicate {
    /// Position in the owning [`Pool`].
    pub id: usize,
    /// Base signature; for a forall prefix this still lists the quantified
    /// slot.
    pub sig: Arc<PredicateSig>,
    /// Signature over the exposed (free) slots only; grounding and
    /// qualification use this one.
    pub free_sig: Arc<PredicateSig>,
    pub classifier: Classifier,
    pub delta: Option<EffectVector>,
}

fn free_signature(sig: &PredicateSig) -> PredicateSig {
    match sig.prefix {
        Prefix::Forall(slot) => {
            let var_types = sig
                .var_types
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != slot)
                .map(|(_, t)| t.clone())
                .collect();
            let correspondence = sig.correspondence.as_ref().map(|c| {
                c.iter()
                    .enumerate()
                    .filter(|(j, _)| *j != slot)
                    .map(|(_, o)| *o)
                    .collect()
            });
            PredicateSig {
                name: sig.name.clone(),
                var_types,
                kind: sig.kind,
                prefix: sig.prefix,
                correspondence,
            }
        }
        _ => sig.clone(),
    }
}

impl Predicate {
    pub fn new(
        id: usize,
        sig: PredicateSig,
        classifier: Classifier,
        delta: Option<EffectVector>,
    ) -> Self {
        let free_sig = free_signature(&sig);
        Predicate {
            id,
            sig: Arc::new(sig),
            free_sig: Arc::new(free_sig),
            classifier,
            delta,
        }
    }

    /// Number of exposed argument slots.
    pub fn free_arity(&self) -> usize {
        self.free_sig.arity()
    }

    /// Structural cost charged by candidate selection.
    pub fn complexity(&self) -> usize {
        self.free_arity() + self.sig.prefix.count()
    }

    /// Name with the prefix folded in, for traces and artifacts.
    pub fn display_name(&self) -> String {
        match self.sig.prefix {
            Prefix::None => self.sig.name.clone(),
            Prefix::Negation => format!("not-{}", self.sig.name),
            Prefix::Forall(slot) => format!("forall{}-{}", slot, self.sig.name),
        }
    }

    /// Truth of the full base tuple, prefix ignored.
    pub fn base_holds(&self, state: &State, full: &[ObjectRef]) -> bool {
        match &self.classifier {
            Classifier::Scripted(eval) => eval(state, full),
            Classifier::Learned(p) => p.forward(&predicate_input(state, full)) >= 0.5,
        }
    }

    /// Truth of a ground atom over the free slots. `universe` supplies
    /// candidates for a quantified slot; `allow_reuse` mirrors the domain's
    /// same-object policy (a quantifier skips objects already bound to a
    /// free slot when reuse is disallowed, and is vacuously true with no
    /// candidates).
    pub fn holds(
        &self,
        state: &State,
        free: &[ObjectRef],
        universe: &[ObjectRef],
        allow_reuse: bool,
    ) -> bool {
        match self.sig.prefix {
            Prefix::None => self.base_holds(state, free),
            Prefix::Negation => !self.base_holds(state, free),
            Prefix::Forall(slot) => {
                let ty = &self.sig.var_types[slot];
                let mut full: Vec<ObjectRef> = Vec::with_capacity(free.len() + 1);
                universe
                    .iter()
                    .filter(|o| o.ty == *ty)
                    .all(|o| {
                        if !allow_reuse && free.iter().any(|f| f.name == o.name) {
                            return true;
                        }
                        full.clear();
                        full.extend_from_slice(&free[..slot]);
                        full.push(o.clone());
                        full.extend_from_slice(&free[slot..]);
                        self.base_holds(state, &full)
                    })
            }
        }
    }

    /// Ground atoms of the free signature over a task's objects.
    pub fn ground_atoms(&self, objects: &[ObjectRef], allow_reuse: bool) -> Vec<GroundAtom> {
        ground_signature(&self.free_sig, objects, allow_reuse)
    }
}

/// An indexed predicate set sharing one domain. Baseline entries (statics,
/// goals) and selected dynamics all live here; operators reference
/// predicates by pool id.
#[derive(Debug, Clone)]
pub struct Pool {
    pub spec: Arc<DomainSpec>,
    pub preds: Vec<Arc<Predicate>>,
}

impl Pool {
    pub fn build(
        spec: Arc<DomainSpec>,
        entries: Vec<(PredicateSig, Classifier, Option<EffectVector>)>,
    ) -> Pool {
        let preds = entries
            .into_iter()
            .enumerate()
            .map(|(id, (sig, cls, delta))| Arc::new(Predicate::new(id, sig, cls, delta)))
            .collect();
        Pool { spec, preds }
    }

    pub fn find(&self, name: &str, prefix: Prefix) -> Option<&Arc<Predicate>> {
        self.preds
            .iter()
            .find(|p| p.sig.name == name && p.sig.prefix == prefix)
    }

    pub fn len(&self) -> usize {
        self.preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }
}

/// A predicate applied to operator variables: `binding[j]` is the operator
/// variable filling free slot `j`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LiftedAtom {
    pub pred: usize,
    pub binding: Vec<usize>,
}

/// Lifted operator over one controller; variables are exactly the
/// controller's typed slots.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operator {
    pub controller: usize,
    pub pre: Vec<LiftedAtom>,
    pub eff_add: Vec<LiftedAtom>,
    pub eff_del: Vec<LiftedAtom>,
}

impl Operator {
    fn canonicalize(&mut self) {
        for list in [&mut self.pre, &mut self.eff_add, &mut self.eff_del] {
            list.sort();
            list.dedup();
        }
    }
}

/// Predicates plus operators: everything the abstract planner consumes.
#[derive(Debug, Clone)]
pub struct AbstractModel {
    pub pool: Pool,
    pub operators: Vec<Operator>,
}

/// All ways to bind a predicate's free slots to a controller's variables.
/// With a correspondence annotation the binding is forced (slot j takes the
/// corr\[j\]-th occurrence of its type); otherwise every type-consistent
/// assignment is valid, injective unless the domain allows object reuse.
pub fn valid_bindings(
    pred: &Predicate,
    controller: &ControllerSig,
    allow_reuse: bool,
) -> Vec<Vec<usize>> {
    let types = &pred.free_sig.var_types;
    match &pred.free_sig.correspondence {
        Some(corr) => {
            let mut binding = Vec::with_capacity(types.len());
            for (j, ty) in types.iter().enumerate() {
                let mut occ = 0usize;
                let mut found = None;
                for (slot, vt) in controller.var_types.iter().enumerate() {
                    if vt == ty {
                        if occ == corr[j] {
                            found = Some(slot);
                            break;
                        }
                        occ += 1;
                    }
                }
                match found {
                    Some(s) => binding.push(s),
                    None => return Vec::new(),
                }
            }
            vec![binding]
        }
        None => {
            let mut out = Vec::new();
            let mut cur: Vec<usize> = Vec::with_capacity(types.len());
            fn rec(
                types: &[String],
                ctrl: &ControllerSig,
                allow_reuse: bool,
                cur: &mut Vec<usize>,
                out: &mut Vec<Vec<usize>>,
            ) {
                if cur.len() == types.len() {
                    out.push(cur.clone());
                    return;
                }
                let ty = &types[cur.len()];
                for (slot, vt) in ctrl.var_types.iter().enumerate() {
                    if vt == ty && (allow_reuse || !cur.contains(&slot)) {
                        cur.push(slot);
                        rec(types, ctrl, allow_reuse, cur, out);
                        cur.pop();
                    }
                }
            }
            rec(types, controller, allow_reuse, &mut cur, &mut out);
            out
        }
    }
}

/// Effect lists read directly off the predicates' direction vectors: entry
/// +1 puts the bound atom in `eff_add` of that controller's operator, -1 in
/// `eff_del`. Returns warnings for effects that cannot be bound.
pub fn effects_from_vectors(pool: &Pool) -> (Vec<Operator>, Vec<String>) {
    let spec = &pool.spec;
    let mut warnings = Vec::new();
    let mut ops: Vec<Operator> = (0..spec.controllers.len())
        .map(|i| Operator {
            controller: i,
            pre: Vec::new(),
            eff_add: Vec::new(),
            eff_del: Vec::new(),
        })
        .collect();
    for pred in &pool.preds {
        let Some(delta) = &pred.delta else { continue };
        for (i, d) in delta.0.iter().enumerate() {
            if *d == 0 {
                continue;
            }
            let bindings = valid_bindings(pred, &spec.controllers[i], spec.allow_same_object);
            if bindings.is_empty() {
                warnings.push(format!(
                    "{}: effect {:+} under {} has no type-consistent binding",
                    pred.display_name(),
                    d,
                    spec.controllers[i].name
                ));
                continue;
            }
            for binding in bindings {
                let atom = LiftedAtom {
                    pred: pred.id,
                    binding,
                };
                if *d > 0 {
                    ops[i].eff_add.push(atom);
                } else {
                    ops[i].eff_del.push(atom);
                }
            }
        }
    }
    for op in &mut ops {
        op.canonicalize();
    }
    (ops, warnings)
}

/// Reads a direction vector off observed truth changes: +1 where every
/// qualifying transition of the controller ends true and at least one
/// flips, -1 dually, 0 where nothing ever changes. Mixed outcomes give 0
/// with a warning. Used for goal predicates and prefix variants, whose
/// vectors are not produced by the invention search.
pub fn derive_effect_vector(
    pred: &Predicate,
    demos: &[&Demonstration],
    spec: &DomainSpec,
) -> (EffectVector, Vec<String>) {
    let m = spec.controllers.len();
    let mut any_flip = vec![false; m];
    let mut all_true = vec![true; m];
    let mut all_false = vec![true; m];
    for demo in demos {
        let atoms = pred.ground_atoms(&demo.task.objects, spec.allow_same_object);
        for (s, a, s2) in demo.transitions() {
            let i = spec
                .controller_index(&a.controller.name)
                .expect("demo action uses a known controller");
            for atom in &atoms {
                if !atom_objects_subset(atom, a) {
                    continue;
                }
                let pre = pred.holds(s, &atom.objects, &demo.task.objects, spec.allow_same_object);
                let post =
                    pred.holds(s2, &atom.objects, &demo.task.objects, spec.allow_same_object);
                if pre != post {
                    any_flip[i] = true;
                }
                all_true[i] &= post;
                all_false[i] &= !post;
            }
        }
    }
    let mut v = vec![0i8; m];
    let mut warnings = Vec::new();
    for i in 0..m {
        if !any_flip[i] {
            continue;
        }
        v[i] = if all_true[i] {
            1
        } else if all_false[i] {
            -1
        } else {
            warnings.push(format!(
                "{}: inconsistent truth changes under {}; leaving effect 0",
                pred.display_name(),
                spec.controllers[i].name
            ));
            0
        };
    }
    (EffectVector(v), warnings)
}

/// Preconditions of one controller by lifted intersection: every bindable
/// atom that holds in the pre-state of *all* of the controller's
/// transitions. A controller without data gets empty preconditions and a
/// warning.
pub fn learn_preconditions(
    pool: &Pool,
    demos: &[&Demonstration],
    controller_idx: usize,
) -> (Vec<LiftedAtom>, Option<String>) {
    let spec = &pool.spec;
    let ctrl = &spec.controllers[controller_idx];
    let mut cands: Vec<LiftedAtom> = Vec::new();
    for pred in &pool.preds {
        for binding in valid_bindings(pred, ctrl, spec.allow_same_object) {
            cands.push(LiftedAtom {
                pred: pred.id,
                binding,
            });
        }
    }
    let mut any = false;
    for demo in demos {
        for (s, a, _) in demo.transitions() {
            if a.controller.name != ctrl.name {
                continue;
            }
            any = true;
            cands.retain(|atom| {
                let pred = &pool.preds[atom.pred];
                let objs: Vec<ObjectRef> = atom
                    .binding
                    .iter()
                    .map(|&v| a.objects[v].clone())
                    .collect();
                pred.holds(s, &objs, &demo.task.objects, spec.allow_same_object)
            });
        }
    }
    if !any {
        return (
            Vec::new(),
            Some(format!(
                "{}: no transitions in the data; preconditions left empty",
                ctrl.name
            )),
        );
    }
    cands.sort();
    (cands, None)
}

/// Full operator set: effects from the direction vectors, preconditions by
/// intersection. Warnings from both passes are concatenated.
pub fn learn_operators(pool: &Pool, demos: &[&Demonstration]) -> (Vec<Operator>, Vec<String>) {
    let (mut ops, mut warnings) = effects_from_vectors(pool);
    for op in &mut ops {
        let (pre, warn) = learn_preconditions(pool, demos, op.controller);
        op.pre = pre;
        warnings.extend(warn);
    }
    (ops, warnings)
}

/// Re-reads a predicate's direction vector from finished operators; inverse
/// of [`effects_from_vectors`] for round-trip checks.
pub fn vector_from_effects(ops: &[Operator], pred_id: usize, n_actions: usize) -> EffectVector {
    let mut v = vec![0i8; n_actions];
    for op in ops {
        if op.eff_add.iter().any(|a| a.pred == pred_id) {
            v[op.controller] = 1;
        } else if op.eff_del.iter().any(|a| a.pred == pred_id) {
            v[op.controller] = -1;
        }
    }
    EffectVector(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{PredKind, TypeDef};

    fn toy_spec() -> Arc<DomainSpec> {
        Arc::new(DomainSpec {
            name: "toy".into(),
            types: vec![
                TypeDef::new("robot", &["x", "h"]),
                TypeDef::new("item", &["x", "held"]),
            ],
            controllers: vec![
                Arc::new(ControllerSig::new("Pick", &["robot", "item"], vec![])),
                Arc::new(ControllerSig::new("Swap", &["robot", "item", "item"], vec![])),
            ],
            scripted: vec![],
            allow_same_object: false,
        })
    }

    fn held_pred(id: usize, prefix: Prefix) -> Predicate {
        let mut sig = PredicateSig::new("Held", &["item"], PredKind::Dynamic);
        sig.prefix = prefix;
        Predicate::new(
            id,
            sig,
            Classifier::Scripted(Arc::new(|s: &State, o: &[ObjectRef]| {
                s.feature(&o[0].name, 1) > 0.5
            })),
            None,
        )
    }

    fn item_state(pairs: &[(&str, f64)]) -> State {
        let mut s = State::new();
        s.features.insert("r".into(), vec![0.0, 0.0]);
        for (n, held) in pairs {
            s.features.insert((*n).into(), vec![0.0, *held]);
        }
        s
    }

    #[test]
    fn prefixes_negate_and_quantify() {
        let base = held_pred(0, Prefix::None);
        let neg = held_pred(1, Prefix::Negation);
        let fa = held_pred(2, Prefix::Forall(0));
        let universe = vec![
            ObjectRef::new("r", "robot"),
            ObjectRef::new("a", "item"),
            ObjectRef::new("b", "item"),
        ];
        let s = item_state(&[("a", 1.0), ("b", 0.0)]);
        let a = [ObjectRef::new("a", "item")];
        assert!(base.holds(&s, &a, &universe, false));
        assert!(!neg.holds(&s, &a, &universe, false));
        // Forall over the only slot exposes no arguments: all items held?
        assert!(!fa.holds(&s, &[], &universe, false));
        let s2 = item_state(&[("a", 1.0), ("b", 1.0)]);
        assert!(fa.holds(&s2, &[], &universe, false));
    }

    #[test]
    fn forall_skips_objects_bound_to_free_slots() {
        let mut sig = PredicateSig::new("Apart", &["item", "item"], PredKind::Dynamic);
        sig.prefix = Prefix::Forall(1);
        // Apart(a, b) scripted as "features differ"; quantified over slot 1.
        let p = Predicate::new(
            0,
            sig,
            Classifier::Scripted(Arc::new(|s: &State, o: &[ObjectRef]| {
                s.feature(&o[0].name, 1) != s.feature(&o[1].name, 1)
            })),
            None,
        );
        let universe = vec![ObjectRef::new("a", "item"), ObjectRef::new("b", "item")];
        let s = item_state(&[("a", 1.0), ("b", 0.0)]);
        // Apart(a, ?t) over t != a reduces to Apart(a, b), which holds; the
        // reflexive pair would be false but must be skipped.
        assert!(p.holds(&s, &[universe[0].clone()], &universe, false));
    }

    #[test]
    fn correspondence_forces_a_unique_binding() {
        let spec = toy_spec();
        let swap = &spec.controllers[1];
        let occ0 = Predicate::new(
            0,
            PredicateSig::new("H", &["item"], PredKind::Dynamic).with_correspondence(vec![0]),
            Classifier::Scripted(Arc::new(|_: &State, _: &[ObjectRef]| true)),
            None,
        );
        let occ1 = Predicate::new(
            1,
            PredicateSig::new("H", &["item"], PredKind::Dynamic).with_correspondence(vec![1]),
            Classifier::Scripted(Arc::new(|_: &State, _: &[ObjectRef]| true)),
            None,
        );
        assert_eq!(valid_bindings(&occ0, swap, false), vec![vec![1]]);
        assert_eq!(valid_bindings(&occ1, swap, false), vec![vec![2]]);
        // Without an annotation both item slots are fair game.
        let plain = held_pred(2, Prefix::None);
        assert_eq!(valid_bindings(&plain, swap, false), vec![vec![1], vec![2]]);
        // A type the controller lacks gives no binding.
        let pick = &spec.controllers[0];
        let two_items = Predicate::new(
            3,
            PredicateSig::new("Pair", &["item", "item"], PredKind::Dynamic),
            Classifier::Scripted(Arc::new(|_: &State, _: &[ObjectRef]| true)),
            None,
        );
        assert!(valid_bindings(&two_items, pick, false).is_empty());
    }

    fn toy_demo(spec: &Arc<DomainSpec>) -> Demonstration {
        // Pick(r, a) flips a.held from 0 to 1.
        let task = crate::model::Task {
            objects: vec![
                ObjectRef::new("r", "robot"),
                ObjectRef::new("a", "item"),
                ObjectRef::new("b", "item"),
            ],
            x0: item_state(&[("a", 0.0), ("b", 0.0)]),
            goal: vec![],
        };
        let action = crate::model::GroundAction::new(
            &spec.controllers[0],
            vec![ObjectRef::new("r", "robot"), ObjectRef::new("a", "item")],
        )
        .with_omega(vec![]);
        let s1 = item_state(&[("a", 1.0), ("b", 0.0)]);
        Demonstration {
            task,
            plan: vec![action],
            states: vec![item_state(&[("a", 0.0), ("b", 0.0)]), s1],
        }
    }

    #[test]
    fn operators_round_trip_their_direction_vectors() {
        let spec = toy_spec();
        let pool = Pool {
            spec: Arc::clone(&spec),
            preds: vec![Arc::new(Predicate::new(
                0,
                PredicateSig::new("Held", &["item"], PredKind::Dynamic)
                    .with_correspondence(vec![0]),
                Classifier::Scripted(Arc::new(|s: &State, o: &[ObjectRef]| {
                    s.feature(&o[0].name, 1) > 0.5
                })),
                Some(EffectVector(vec![1, -1])),
            ))],
        };
        let (ops, warnings) = effects_from_vectors(&pool);
        assert!(warnings.is_empty());
        assert_eq!(
            ops[0].eff_add,
            vec![LiftedAtom {
                pred: 0,
                binding: vec![1]
            }]
        );
        assert_eq!(
            ops[1].eff_del,
            vec![LiftedAtom {
                pred: 0,
                binding: vec![1]
            }]
        );
        assert_eq!(vector_from_effects(&ops, 0, 2), EffectVector(vec![1, -1]));
    }

    #[test]
    fn derived_vector_matches_observed_flips() {
        let spec = toy_spec();
        let demo = toy_demo(&spec);
        let pred = Arc::new(held_pred(0, Prefix::None));
        let (v, warnings) = derive_effect_vector(&pred, &[&demo], &spec);
        // Pick flips Held; Swap never appears so its entry stays 0.
        assert_eq!(v, EffectVector(vec![1, 0]));
        assert!(warnings.is_empty());
    }

    #[test]
    fn preconditions_intersect_prestate_truth() {
        let spec = toy_spec();
        let demo = toy_demo(&spec);
        let pool = Pool {
            spec: Arc::clone(&spec),
            preds: vec![
                Arc::new(held_pred(0, Prefix::None)),
                Arc::new(held_pred(1, Prefix::Negation)),
            ],
        };
        let (pre, warn) = learn_preconditions(&pool, &[&demo], 0);
        assert!(warn.is_none());
        // Held(a) is false before Pick, its negation true; the non-acted
        // item b is not bindable to Pick's single item slot given `a` fills
        // it, so only the negation over the acted item survives.
        assert_eq!(
            pre,
            vec![LiftedAtom {
                pred: 1,
                binding: vec![1]
            }]
        );
        let (empty, warn) = learn_preconditions(&pool, &[&demo], 1);
        assert!(empty.is_empty());
        assert!(warn.is_some());
    }
}
