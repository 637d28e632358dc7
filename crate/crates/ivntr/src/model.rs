//! Relational data model shared by every stage: typed objects with feature
//! vectors, predicates and ground atoms, controllers and ground actions,
//! tasks and demonstrations, plus grounding and trajectory recovery.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

pub mod io;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown object `{0}`")]
    UnknownObject(String),
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("object `{object}` has {got} features, type `{ty}` expects {expected}")]
    DimMismatch {
        object: String,
        ty: String,
        expected: usize,
        got: usize,
    },
    #[error("plan step {step} not applicable: {action}")]
    Inapplicable { step: usize, action: String },
    #[error("plan step {step} has invalid parameters for {action}")]
    BadOmega { step: usize, action: String },
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Object type with named continuous features. Feature order is part of the
/// contract: classifier inputs concatenate these vectors slot by slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeDef {
    pub name: String,
    pub feature_names: Vec<String>,
}

impl TypeDef {
    pub fn new(name: &str, feature_names: &[&str]) -> Self {
        TypeDef {
            name: name.to_string(),
            feature_names: feature_names.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_names.len()
    }
}

/// A named object of a given type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectRef {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
}

impl ObjectRef {
    pub fn new(name: impl Into<String>, ty: impl Into<String>) -> Self {
        ObjectRef {
            name: name.into(),
            ty: ty.into(),
        }
    }
}

impl fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name)
    }
}

/// Full continuous state: one feature vector per object, keyed by name.
/// Deterministically ordered so serialization is stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct State {
    pub features: BTreeMap<String, Vec<f64>>,
}

impl State {
    pub fn new() -> Self {
        State {
            features: BTreeMap::new(),
        }
    }

    pub fn get(&self, obj: &str) -> Option<&[f64]> {
        self.features.get(obj).map(|v| v.as_slice())
    }

    pub fn feature(&self, obj: &str, idx: usize) -> f64 {
        self.features[obj][idx]
    }

    pub fn set_feature(&mut self, obj: &str, idx: usize, value: f64) {
        self.features.get_mut(obj).expect("object in state")[idx] = value;
    }

    /// Flat object-by-feature matrix in `objects` order. Only defined when
    /// every object shares the same feature dimension.
    pub fn as_matrix(&self, objects: &[ObjectRef]) -> Option<Vec<Vec<f64>>> {
        let mut rows = Vec::with_capacity(objects.len());
        let mut dim = None;
        for o in objects {
            let row = self.features.get(&o.name)?.clone();
            match dim {
                None => dim = Some(row.len()),
                Some(d) if d != row.len() => return None,
                _ => {}
            }
            rows.push(row);
        }
        Some(rows)
    }

    pub fn validate(&self, objects: &[ObjectRef], types: &[TypeDef]) -> Result<(), ModelError> {
        for o in objects {
            let ty = types
                .iter()
                .find(|t| t.name == o.ty)
                .ok_or_else(|| ModelError::UnknownType(o.ty.clone()))?;
            let feats = self
                .get(&o.name)
                .ok_or_else(|| ModelError::UnknownObject(o.name.clone()))?;
            if feats.len() != ty.feature_dim() {
                return Err(ModelError::DimMismatch {
                    object: o.name.clone(),
                    ty: o.ty.clone(),
                    expected: ty.feature_dim(),
                    got: feats.len(),
                });
            }
        }
        Ok(())
    }
}

impl Default for State {
    fn default() -> Self {
        State::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredKind {
    Static,
    Goal,
    Dynamic,
}

/// Structural prefix distinguishing a derived predicate variant from its
/// base: plain, complement, or universally quantified over one base slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prefix {
    None,
    Negation,
    /// Quantifies the given slot of the *base* signature; the variant's
    /// exposed variables are the base variables with that slot removed.
    Forall(usize),
}

impl Prefix {
    /// Number of prefix constructs, used by the complexity measure.
    pub fn count(&self) -> usize {
        match self {
            Prefix::None => 0,
            _ => 1,
        }
    }
}

/// Predicate signature: exposed variable types plus role and any
/// slot-correspondence annotation tying predicate slots to controller slots
/// of the same type (needed when a controller repeats a type).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PredicateSig {
    pub name: String,
    pub var_types: Vec<String>,
    pub kind: PredKind,
    pub prefix: Prefix,
    /// `correspondence[j]` = occurrence index of `var_types[j]` among a
    /// controller's variables of the same type. `None` means plain object
    /// containment is enough (no controller repeats a relevant type).
    pub correspondence: Option<Vec<usize>>,
}

impl PredicateSig {
    pub fn new(name: &str, var_types: &[&str], kind: PredKind) -> Self {
        PredicateSig {
            name: name.to_string(),
            var_types: var_types.iter().map(|s| s.to_string()).collect(),
            kind,
            prefix: Prefix::None,
            correspondence: None,
        }
    }

    pub fn with_correspondence(mut self, corr: Vec<usize>) -> Self {
        assert_eq!(corr.len(), self.var_types.len());
        self.correspondence = Some(corr);
        self
    }

    pub fn arity(&self) -> usize {
        self.var_types.len()
    }
}

impl fmt::Display for PredicateSig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name, self.var_types.join(", "))
    }
}

/// A predicate applied to concrete objects.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroundAtom {
    pub pred: Arc<PredicateSig>,
    pub objects: Vec<ObjectRef>,
}

impl GroundAtom {
    pub fn new(pred: &Arc<PredicateSig>, objects: Vec<ObjectRef>) -> Self {
        debug_assert_eq!(pred.arity(), objects.len());
        GroundAtom {
            pred: Arc::clone(pred),
            objects,
        }
    }
}

impl fmt::Display for GroundAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let objs: Vec<&str> = self.objects.iter().map(|o| o.name.as_str()).collect();
        write!(f, "{}({})", self.pred.name, objs.join(", "))
    }
}

/// Controller signature: typed object slots plus a continuous parameter box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerSig {
    pub name: String,
    pub var_types: Vec<String>,
    pub param_bounds: Vec<(f64, f64)>,
}

impl ControllerSig {
    pub fn new(name: &str, var_types: &[&str], param_bounds: Vec<(f64, f64)>) -> Self {
        ControllerSig {
            name: name.to_string(),
            var_types: var_types.iter().map(|s| s.to_string()).collect(),
            param_bounds,
        }
    }

    pub fn param_dim(&self) -> usize {
        self.param_bounds.len()
    }

    pub fn omega_in_bounds(&self, omega: &[f64]) -> bool {
        omega.len() == self.param_bounds.len()
            && omega
                .iter()
                .zip(&self.param_bounds)
                .all(|(w, (lo, hi))| *w >= *lo && *w <= *hi)
    }
}

/// A controller bound to objects; `omega` is `None` while the action is
/// only a skeleton element and `Some` once refined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundAction {
    pub controller: Arc<ControllerSig>,
    pub objects: Vec<ObjectRef>,
    pub omega: Option<Vec<f64>>,
}

impl GroundAction {
    pub fn new(controller: &Arc<ControllerSig>, objects: Vec<ObjectRef>) -> Self {
        debug_assert_eq!(controller.var_types.len(), objects.len());
        GroundAction {
            controller: Arc::clone(controller),
            objects,
            omega: None,
        }
    }

    pub fn with_omega(mut self, omega: Vec<f64>) -> Self {
        self.omega = Some(omega);
        self
    }

    /// Same controller and objects, parameters ignored.
    pub fn same_skeleton(&self, other: &GroundAction) -> bool {
        self.controller.name == other.controller.name && self.objects == other.objects
    }
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let objs: Vec<&str> = self.objects.iter().map(|o| o.name.as_str()).collect();
        write!(f, "{}({})", self.controller.name, objs.join(", "))
    }
}

/// Planning task: objects, initial continuous state, goal atoms (over goal
/// predicates with scripted classifiers).
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub objects: Vec<ObjectRef>,
    pub x0: State,
    pub goal: Vec<GroundAtom>,
}

impl Task {
    /// Objects of one type, in declaration order.
    pub fn objects_of(&self, ty: &str) -> Vec<ObjectRef> {
        self.objects.iter().filter(|o| o.ty == ty).cloned().collect()
    }
}

/// A solved task: action sequence plus the full state trajectory
/// (`states.len() == plan.len() + 1`, `states[0] == task.x0`).
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub task: Task,
    pub plan: Vec<GroundAction>,
    pub states: Vec<State>,
}

impl Demonstration {
    pub fn transitions(&self) -> impl Iterator<Item = (&State, &GroundAction, &State)> {
        self.plan
            .iter()
            .enumerate()
            .map(move |(i, a)| (&self.states[i], a, &self.states[i + 1]))
    }
}

/// Scripted classifier for a known (static / goal / ground-truth dynamic)
/// predicate. Code, not data: serialization stores only the signature and
/// re-attaches the closure from the domain registry.
#[derive(Clone)]
pub struct ScriptedPredicate {
    pub sig: Arc<PredicateSig>,
    pub eval: Arc<dyn Fn(&State, &[ObjectRef]) -> bool + Send + Sync>,
}

impl ScriptedPredicate {
    pub fn new(
        sig: PredicateSig,
        eval: impl Fn(&State, &[ObjectRef]) -> bool + Send + Sync + 'static,
    ) -> Self {
        ScriptedPredicate {
            sig: Arc::new(sig),
            eval: Arc::new(eval),
        }
    }

    pub fn holds(&self, state: &State, objects: &[ObjectRef]) -> bool {
        (self.eval)(state, objects)
    }
}

impl fmt::Debug for ScriptedPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScriptedPredicate({})", self.sig)
    }
}

/// Static description of a domain: types, controllers, scripted predicates.
/// The transition function lives behind [`Simulator`].
#[derive(Debug, Clone)]
pub struct DomainSpec {
    pub name: String,
    pub types: Vec<TypeDef>,
    pub controllers: Vec<Arc<ControllerSig>>,
    pub scripted: Vec<ScriptedPredicate>,
    /// Whether one object may fill several same-typed slots of a signature.
    pub allow_same_object: bool,
}

impl DomainSpec {
    pub fn type_def(&self, name: &str) -> Option<&TypeDef> {
        self.types.iter().find(|t| t.name == name)
    }

    pub fn controller(&self, name: &str) -> Option<&Arc<ControllerSig>> {
        self.controllers.iter().find(|c| c.name == name)
    }

    pub fn controller_index(&self, name: &str) -> Option<usize> {
        self.controllers.iter().position(|c| c.name == name)
    }

    pub fn scripted_by_kind(&self, kind: PredKind) -> Vec<&ScriptedPredicate> {
        self.scripted.iter().filter(|p| p.sig.kind == kind).collect()
    }

    pub fn scripted_by_name(&self, name: &str) -> Option<&ScriptedPredicate> {
        self.scripted.iter().find(|p| p.sig.name == name)
    }

    /// Concatenated feature dimension for a tuple of slot types.
    pub fn input_dim(&self, var_types: &[String]) -> usize {
        let d: usize = var_types
            .iter()
            .map(|t| self.type_def(t).map(|td| td.feature_dim()).unwrap_or(0))
            .sum();
        d.max(1) // nullary signatures read a constant input
    }
}

/// Deterministic closed-form transition semantics of a domain.
pub trait Simulator: Send + Sync {
    fn spec(&self) -> &DomainSpec;

    /// Whether `action` (with parameters, if its controller takes any) can
    /// execute in `state`.
    fn applicable(&self, state: &State, action: &GroundAction) -> bool;

    /// Successor state. Callers must check `applicable` first.
    fn step(&self, state: &State, action: &GroundAction) -> State;
}

/// All type-consistent object tuples for a slot-type list, ordered
/// lexicographically by (slot, object name). Distinct objects per tuple
/// unless `allow_reuse`.
pub fn ground_tuples(
    var_types: &[String],
    objects: &[ObjectRef],
    allow_reuse: bool,
) -> Vec<Vec<ObjectRef>> {
    let mut per_slot: Vec<Vec<&ObjectRef>> = Vec::with_capacity(var_types.len());
    for ty in var_types {
        let mut cands: Vec<&ObjectRef> = objects.iter().filter(|o| o.ty == *ty).collect();
        cands.sort_by(|a, b| a.name.cmp(&b.name));
        per_slot.push(cands);
    }
    let mut out = Vec::new();
    let mut current: Vec<&ObjectRef> = Vec::with_capacity(var_types.len());
    fn rec<'a>(
        per_slot: &[Vec<&'a ObjectRef>],
        slot: usize,
        allow_reuse: bool,
        current: &mut Vec<&'a ObjectRef>,
        out: &mut Vec<Vec<ObjectRef>>,
    ) {
        if slot == per_slot.len() {
            out.push(current.iter().map(|o| (*o).clone()).collect());
            return;
        }
        for cand in &per_slot[slot] {
            if !allow_reuse && current.iter().any(|c| c.name == cand.name) {
                continue;
            }
            current.push(cand);
            rec(per_slot, slot + 1, allow_reuse, current, out);
            current.pop();
        }
    }
    rec(&per_slot, 0, allow_reuse, &mut current, &mut out);
    out
}

/// Ground atoms of a predicate over a task's objects, in deterministic
/// order.
pub fn ground_signature(
    pred: &Arc<PredicateSig>,
    objects: &[ObjectRef],
    allow_reuse: bool,
) -> Vec<GroundAtom> {
    ground_tuples(&pred.var_types, objects, allow_reuse)
        .into_iter()
        .map(|tuple| GroundAtom::new(pred, tuple))
        .collect()
}

/// Whether a ground atom's objects sit inside a ground action's objects,
/// honoring any slot-correspondence annotation: with an annotation, slot
/// `j` of the atom must equal the action object at the `corr[j]`-th
/// occurrence of that type among the controller's variables.
pub fn atom_objects_subset(atom: &GroundAtom, action: &GroundAction) -> bool {
    match &atom.pred.correspondence {
        None => atom
            .objects
            .iter()
            .all(|o| action.objects.iter().any(|ao| ao.name == o.name)),
        Some(corr) => {
            for (j, obj) in atom.objects.iter().enumerate() {
                let ty = &atom.pred.var_types[j];
                let mut occ = 0usize;
                let mut matched = false;
                for (slot, vt) in action.controller.var_types.iter().enumerate() {
                    if vt == ty {
                        if occ == corr[j] {
                            matched = action.objects[slot].name == obj.name;
                            break;
                        }
                        occ += 1;
                    }
                }
                if !matched {
                    return false;
                }
            }
            true
        }
    }
}

/// Recomputes the state trajectory of a plan from the initial state,
/// validating parameters and applicability at every step.
pub fn recover_trajectory(
    sim: &dyn Simulator,
    task: &Task,
    plan: &[GroundAction],
) -> Result<Vec<State>, ModelError> {
    let mut states = Vec::with_capacity(plan.len() + 1);
    states.push(task.x0.clone());
    for (step, action) in plan.iter().enumerate() {
        let omega = action.omega.as_deref().unwrap_or(&[]);
        if !action.controller.omega_in_bounds(omega) {
            return Err(ModelError::BadOmega {
                step,
                action: action.to_string(),
            });
        }
        let cur = states.last().unwrap();
        if !sim.applicable(cur, action) {
            return Err(ModelError::Inapplicable {
                step,
                action: action.to_string(),
            });
        }
        states.push(sim.step(cur, action));
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pred(name: &str, var_types: &[&str]) -> Arc<PredicateSig> {
        Arc::new(PredicateSig::new(name, var_types, PredKind::Dynamic))
    }

    fn objs(pairs: &[(&str, &str)]) -> Vec<ObjectRef> {
        pairs.iter().map(|(n, t)| ObjectRef::new(*n, *t)).collect()
    }

    #[test]
    fn binary_signature_grounds_to_typed_pairs() {
        let p = pred("P2_1", &["robot", "target"]);
        let os = objs(&[("r1", "robot"), ("t1", "target"), ("t2", "target")]);
        let atoms = ground_signature(&p, &os, false);
        let shown: Vec<String> = atoms.iter().map(|a| a.to_string()).collect();
        assert_eq!(shown, vec!["P2_1(r1, t1)", "P2_1(r1, t2)"]);
    }

    #[test]
    fn nullary_signature_grounds_to_single_atom() {
        let p = pred("P0", &[]);
        let os = objs(&[("r1", "robot")]);
        let atoms = ground_signature(&p, &os, false);
        assert_eq!(atoms.len(), 1);
        assert!(atoms[0].objects.is_empty());
    }

    #[test]
    fn same_type_pairs_are_distinct_ordered() {
        let p = pred("On", &["block", "block"]);
        let os = objs(&[("b1", "block"), ("b2", "block")]);
        let atoms = ground_signature(&p, &os, false);
        let shown: Vec<String> = atoms.iter().map(|a| a.to_string()).collect();
        assert_eq!(shown, vec!["On(b1, b2)", "On(b2, b1)"]);
        // With reuse allowed the diagonal appears too.
        assert_eq!(ground_signature(&p, &os, true).len(), 4);
    }

    fn gaze_action(objects: &[(&str, &str)]) -> GroundAction {
        let c = Arc::new(ControllerSig::new("Gaze", &["robot", "target"], vec![]));
        GroundAction::new(&c, objs(objects))
    }

    #[test]
    fn subset_holds_when_atom_objects_among_action_objects() {
        let p = pred("P2_1", &["robot", "target"]);
        let a = GroundAtom::new(&p, objs(&[("r1", "robot"), ("t1", "target")]));
        assert!(atom_objects_subset(
            &a,
            &gaze_action(&[("r1", "robot"), ("t1", "target")])
        ));
    }

    #[test]
    fn subset_fails_for_foreign_object() {
        let p = pred("P2_1", &["robot", "target"]);
        let a = GroundAtom::new(&p, objs(&[("r1", "robot"), ("t2", "target")]));
        assert!(!atom_objects_subset(
            &a,
            &gaze_action(&[("r1", "robot"), ("t1", "target")])
        ));
    }

    #[test]
    fn correspondence_requires_matching_slots() {
        let p = Arc::new(
            PredicateSig::new("On", &["block", "block"], PredKind::Dynamic)
                .with_correspondence(vec![0, 1]),
        );
        let stack = Arc::new(ControllerSig::new(
            "Stack",
            &["robot", "block", "block"],
            vec![],
        ));
        let atom = GroundAtom::new(&p, objs(&[("b1", "block"), ("b2", "block")]));
        let aligned = GroundAction::new(
            &stack,
            objs(&[("r1", "robot"), ("b1", "block"), ("b2", "block")]),
        );
        let swapped = GroundAction::new(
            &stack,
            objs(&[("r1", "robot"), ("b2", "block"), ("b1", "block")]),
        );
        assert!(atom_objects_subset(&atom, &aligned));
        // Objects are contained either way, but slot occurrences disagree.
        assert!(!atom_objects_subset(&atom, &swapped));
    }

    #[test]
    fn correspondence_fails_when_occurrence_missing() {
        let p = Arc::new(
            PredicateSig::new("Clear", &["block"], PredKind::Dynamic)
                .with_correspondence(vec![1]),
        );
        let pick = Arc::new(ControllerSig::new("Pick", &["robot", "block"], vec![]));
        let atom = GroundAtom::new(&p, objs(&[("b1", "block")]));
        let act = GroundAction::new(&pick, objs(&[("r1", "robot"), ("b1", "block")]));
        // Pick has a single block slot; occurrence 1 does not exist.
        assert!(!atom_objects_subset(&atom, &act));
    }

    #[test]
    fn matrix_view_requires_homogeneous_dims() {
        let mut s = State::new();
        s.features.insert("a".into(), vec![1.0, 2.0]);
        s.features.insert("b".into(), vec![3.0, 4.0]);
        let os = objs(&[("a", "x"), ("b", "x")]);
        assert_eq!(
            s.as_matrix(&os),
            Some(vec![vec![1.0, 2.0], vec![3.0, 4.0]])
        );
        s.features.insert("b".into(), vec![3.0]);
        assert_eq!(s.as_matrix(&os), None);
    }

    #[test]
    fn omega_bounds_checked() {
        let c = ControllerSig::new("Move", &["robot"], vec![(-1.0, 1.0), (0.0, 2.0)]);
        assert!(c.omega_in_bounds(&[0.5, 1.9]));
        assert!(!c.omega_in_bounds(&[1.5, 1.0]));
        assert!(!c.omega_in_bounds(&[0.5]));
    }

    proptest! {
        /// Grounding is deterministic and respects the distinct-object rule.
        #[test]
        fn grounding_deterministic_and_distinct(n_r in 0usize..4, n_t in 0usize..4) {
            let mut os = Vec::new();
            for i in 0..n_r { os.push(ObjectRef::new(format!("r{i}"), "robot")); }
            for i in 0..n_t { os.push(ObjectRef::new(format!("t{i}"), "target")); }
            let p = pred("P", &["target", "target"]);
            let a = ground_signature(&p, &os, false);
            let b = ground_signature(&p, &os, false);
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), n_t * n_t.saturating_sub(1));
            for atom in &a {
                prop_assert!(atom.objects[0] != atom.objects[1]);
            }
        }

        /// The correspondence-aware subset check agrees with a brute-force
        /// oracle built from first principles.
        #[test]
        fn subset_matches_bruteforce(seedless in 0u8..=1, i0 in 0usize..3, i1 in 0usize..3, j0 in 0usize..3, j1 in 0usize..3, c0 in 0usize..2, c1 in 0usize..2) {
            let blocks: Vec<ObjectRef> = (0..3).map(|i| ObjectRef::new(format!("b{i}"), "block")).collect();
            let mut sig = PredicateSig::new("Q", &["block", "block"], PredKind::Dynamic);
            if seedless == 1 {
                // Skip degenerate annotations that repeat an occurrence.
                prop_assume!(c0 != c1);
                sig = sig.with_correspondence(vec![c0, c1]);
            }
            let p = Arc::new(sig);
            prop_assume!(i0 != i1 && j0 != j1);
            let atom = GroundAtom::new(&p, vec![blocks[i0].clone(), blocks[i1].clone()]);
            let ctrl = Arc::new(ControllerSig::new("Stack", &["robot", "block", "block"], vec![]));
            let action = GroundAction::new(&ctrl, vec![ObjectRef::new("r0", "robot"), blocks[j0].clone(), blocks[j1].clone()]);

            // Oracle: enumerate the action's block-typed slots in order and
            // check containment / annotated positions directly.
            let block_slots = [&action.objects[1], &action.objects[2]];
            let expected = match &p.correspondence {
                None => atom.objects.iter().all(|o| action.objects.iter().any(|a| a == o)),
                Some(corr) => atom.objects.iter().zip(corr).all(|(o, c)| block_slots.get(*c).is_some_and(|s| **s == *o)),
            };
            prop_assert_eq!(atom_objects_subset(&atom, &action), expected);
        }
    }
}
