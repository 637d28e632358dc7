//! Tabletop fetch-and-place: a robot docks at a target, fixates it, grasps
//! with a bounded offset, docks at a container, and drops the target in.
//! Grasping requires a prior per-target fixation which the grasp consumes,
//! which is what makes the visual predicate worth inventing: its labels
//! flip up on Gaze and down on Grasp, so the naive vector marking both as
//! add effects is self-contradictory on chained demonstrations.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{atom, separated_point, DomainKit, TaskDist};
use crate::invent::EffectVector;
use crate::model::{
    ControllerSig, DomainSpec, GroundAction, GroundAtom, ObjectRef, PredKind, PredicateSig,
    ScriptedPredicate, Simulator, State, Task, TypeDef,
};
use crate::planlearn::sampler::{ClosedSampler, ParamSampler, Sampler};
use crate::planlearn::{Operator, Pool};

// robot features
const RX: usize = 0;
const RY: usize = 1;
const RGX: usize = 2;
const RGY: usize = 3;
const RHOLD: usize = 4;
// target features
const TX: usize = 0;
const TY: usize = 1;
const TDOCK: usize = 2;
const TSEEN: usize = 3;
const THELD: usize = 4;
const TPLACED: usize = 5;
// container features
const CX: usize = 0;
const CY: usize = 1;
const CDOCK: usize = 2;

/// Docking offset radius accepted by the move controllers.
const DOCK_TOL: f64 = 0.4;
/// Grasp offset radius accepted by the grasp controller.
const GRASP_TOL: f64 = 0.25;
/// A placed target must sit this close to its container.
const PLACE_TOL: f64 = 0.2;
/// Gaze rest point, far outside the workspace.
const GAZE_REST: (f64, f64) = (-99.0, -99.0);
/// Held targets are parked here (plus the grasp offset) until dropped.
const HAND_POS: (f64, f64) = (-5.0, -5.0);

const MOVE_TO_GAZE: usize = 0;
const GAZE: usize = 1;
const GRASP: usize = 2;
const MOVE_TO_PLACE: usize = 3;
const DROP: usize = 4;

fn dist2(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
}

fn norm(w: &[f64]) -> f64 {
    w.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Per-target fixation flag; the robot's gaze point features record where
/// the camera last pointed but carry no applicability semantics of their
/// own, so classifiers must pick the flag out of the full feature block.
fn sees(state: &State, target: &str) -> bool {
    state.feature(target, TSEEN) > 0.5
}

fn build_spec() -> DomainSpec {
    let types = vec![
        TypeDef::new("robot", &["x", "y", "gaze_x", "gaze_y", "holding"]),
        TypeDef::new("target", &["x", "y", "docked", "seen", "held", "placed"]),
        TypeDef::new("container", &["x", "y", "docked"]),
    ];
    let unit = vec![(-1.0, 1.0), (-1.0, 1.0)];
    let grasp_box = vec![(-0.5, 0.5), (-0.5, 0.5)];
    let controllers = vec![
        Arc::new(ControllerSig::new(
            "MoveToGaze",
            &["robot", "target"],
            unit.clone(),
        )),
        Arc::new(ControllerSig::new("Gaze", &["robot", "target"], vec![])),
        Arc::new(ControllerSig::new("Grasp", &["robot", "target"], grasp_box)),
        Arc::new(ControllerSig::new(
            "MoveToPlace",
            &["robot", "container"],
            unit,
        )),
        Arc::new(ControllerSig::new(
            "Drop",
            &["robot", "target", "container"],
            vec![],
        )),
    ];
    let scripted = vec![
        ScriptedPredicate::new(
            PredicateSig::new("DockedT", &["target"], PredKind::Dynamic),
            |s: &State, o: &[ObjectRef]| s.feature(&o[0].name, TDOCK) > 0.5,
        ),
        ScriptedPredicate::new(
            PredicateSig::new("Sees", &["robot", "target"], PredKind::Dynamic),
            |s: &State, o: &[ObjectRef]| sees(s, &o[1].name),
        ),
        ScriptedPredicate::new(
            PredicateSig::new("Holding", &["robot", "target"], PredKind::Dynamic),
            |s: &State, o: &[ObjectRef]| s.feature(&o[1].name, THELD) > 0.5,
        ),
        ScriptedPredicate::new(
            PredicateSig::new("HandEmpty", &["robot"], PredKind::Dynamic),
            |s: &State, o: &[ObjectRef]| s.feature(&o[0].name, RHOLD) < 0.5,
        ),
        ScriptedPredicate::new(
            PredicateSig::new("DockedC", &["container"], PredKind::Dynamic),
            |s: &State, o: &[ObjectRef]| s.feature(&o[0].name, CDOCK) > 0.5,
        ),
        ScriptedPredicate::new(
            PredicateSig::new("InContainer", &["target", "container"], PredKind::Goal),
            |s: &State, o: &[ObjectRef]| {
                s.feature(&o[0].name, TPLACED) > 0.5
                    && dist2(
                        s.feature(&o[0].name, TX),
                        s.feature(&o[0].name, TY),
                        s.feature(&o[1].name, CX),
                        s.feature(&o[1].name, CY),
                    ) < PLACE_TOL
            },
        ),
    ];
    DomainSpec {
        name: "gazegrasp".to_string(),
        types,
        controllers,
        scripted,
        allow_same_object: false,
    }
}

struct Sim {
    spec: Arc<DomainSpec>,
}

impl Simulator for Sim {
    fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    fn applicable(&self, state: &State, action: &GroundAction) -> bool {
        let obj: Vec<&str> = action.objects.iter().map(|o| o.name.as_str()).collect();
        let omega = action.omega.as_deref().unwrap_or(&[]);
        match action.controller.name.as_str() {
            "MoveToGaze" => state.feature(obj[1], THELD) < 0.5 && norm(omega) <= DOCK_TOL,
            "Gaze" => {
                state.feature(obj[1], TDOCK) > 0.5
                    && state.feature(obj[1], THELD) < 0.5
                    && state.feature(obj[0], RHOLD) < 0.5
            }
            "Grasp" => {
                state.feature(obj[1], TDOCK) > 0.5
                    && state.feature(obj[1], THELD) < 0.5
                    && state.feature(obj[0], RHOLD) < 0.5
                    && sees(state, obj[1])
                    && norm(omega) <= GRASP_TOL
            }
            "MoveToPlace" => norm(omega) <= DOCK_TOL,
            "Drop" => {
                state.feature(obj[0], RHOLD) > 0.5
                    && state.feature(obj[1], THELD) > 0.5
                    && state.feature(obj[2], CDOCK) > 0.5
            }
            other => panic!("unknown controller {other}"),
        }
    }

    fn step(&self, state: &State, action: &GroundAction) -> State {
        let mut next = state.clone();
        let obj: Vec<String> = action.objects.iter().map(|o| o.name.clone()).collect();
        let omega = action.omega.as_deref().unwrap_or(&[]);
        match action.controller.name.as_str() {
            "MoveToGaze" => {
                next.set_feature(&obj[0], RX, state.feature(&obj[1], TX) + omega[0]);
                next.set_feature(&obj[0], RY, state.feature(&obj[1], TY) + omega[1]);
                next.set_feature(&obj[1], TDOCK, 1.0);
            }
            "Gaze" => {
                next.set_feature(&obj[0], RGX, state.feature(&obj[1], TX));
                next.set_feature(&obj[0], RGY, state.feature(&obj[1], TY));
                next.set_feature(&obj[1], TSEEN, 1.0);
            }
            "Grasp" => {
                next.set_feature(&obj[1], TSEEN, 0.0);
                next.set_feature(&obj[1], THELD, 1.0);
                next.set_feature(&obj[0], RHOLD, 1.0);
                next.set_feature(&obj[0], RGX, GAZE_REST.0);
                next.set_feature(&obj[0], RGY, GAZE_REST.1);
                next.set_feature(&obj[1], TX, HAND_POS.0 + omega[0]);
                next.set_feature(&obj[1], TY, HAND_POS.1 + omega[1]);
            }
            "MoveToPlace" => {
                next.set_feature(&obj[0], RX, state.feature(&obj[1], CX) + omega[0]);
                next.set_feature(&obj[0], RY, state.feature(&obj[1], CY) + omega[1]);
                next.set_feature(&obj[1], CDOCK, 1.0);
            }
            "Drop" => {
                next.set_feature(&obj[1], THELD, 0.0);
                next.set_feature(&obj[0], RHOLD, 0.0);
                next.set_feature(&obj[1], TX, state.feature(&obj[2], CX));
                next.set_feature(&obj[1], TY, state.feature(&obj[2], CY));
                next.set_feature(&obj[1], TPLACED, 1.0);
                // The container must be re-docked before the next drop.
                next.set_feature(&obj[2], CDOCK, 0.0);
            }
            other => panic!("unknown controller {other}"),
        }
        next
    }
}

struct Kit {
    spec: Arc<DomainSpec>,
}

pub fn kit() -> Arc<dyn DomainKit> {
    Arc::new(Kit {
        spec: Arc::new(build_spec()),
    })
}

/// Uniform point in a disc of the given radius.
fn disc(radius: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let r = radius * rng.gen_range(0.0f64..1.0).sqrt();
    let a = rng.gen_range(0.0..std::f64::consts::TAU);
    vec![r * a.cos(), r * a.sin()]
}

impl DomainKit for Kit {
    fn name(&self) -> &'static str {
        "gazegrasp"
    }

    fn spec(&self) -> &Arc<DomainSpec> {
        &self.spec
    }

    fn simulator(&self) -> Arc<dyn Simulator> {
        Arc::new(Sim {
            spec: Arc::clone(&self.spec),
        })
    }

    fn train_dist(&self) -> TaskDist {
        TaskDist::new(&[("robot", 1, 1), ("target", 1, 2), ("container", 1, 1)])
    }

    fn test_dist(&self) -> TaskDist {
        TaskDist::new(&[("robot", 1, 1), ("target", 3, 4), ("container", 1, 1)])
    }

    fn sample_task(&self, dist: &TaskDist, rng: &mut ChaCha8Rng) -> Task {
        let n_targets = dist.sample_count("target", rng);
        let mut objects = vec![ObjectRef::new("robot0", "robot")];
        for i in 0..n_targets {
            objects.push(ObjectRef::new(format!("target{i}"), "target"));
        }
        objects.push(ObjectRef::new("container0", "container"));

        let mut x0 = State::new();
        let mut taken: Vec<(f64, f64)> = Vec::new();
        for o in &objects {
            let p = separated_point((0.0, 3.0), 0.5, &taken, rng);
            taken.push(p);
            let feats = match o.ty.as_str() {
                "robot" => vec![p.0, p.1, GAZE_REST.0, GAZE_REST.1, 0.0],
                "target" => vec![p.0, p.1, 0.0, 0.0, 0.0, 0.0],
                "container" => vec![p.0, p.1, 0.0],
                _ => unreachable!(),
            };
            x0.features.insert(o.name.clone(), feats);
        }

        let goal_sig = Arc::clone(&self.spec.scripted_by_name("InContainer").unwrap().sig);
        let container = objects.last().unwrap().clone();
        let goal = objects
            .iter()
            .filter(|o| o.ty == "target")
            .map(|t| GroundAtom::new(&goal_sig, vec![t.clone(), container.clone()]))
            .collect();
        Task { objects, x0, goal }
    }

    fn truth_vectors(&self) -> BTreeMap<String, EffectVector> {
        [
            ("DockedT", vec![1, 0, 0, 0, 0]),
            ("Sees", vec![0, 1, -1, 0, 0]),
            ("Holding", vec![0, 0, 1, 0, -1]),
            ("HandEmpty", vec![0, 0, -1, 0, 1]),
            ("DockedC", vec![0, 0, 0, 1, -1]),
            ("InContainer", vec![0, 0, 0, 0, 1]),
        ]
        .into_iter()
        .map(|(n, v)| (n.to_string(), EffectVector(v)))
        .collect()
    }

    fn oracle_operators(&self, pool: &Pool) -> Vec<Operator> {
        vec![
            Operator {
                controller: MOVE_TO_GAZE,
                pre: vec![atom(pool, "HandEmpty", &[0])],
                eff_add: vec![atom(pool, "DockedT", &[1])],
                eff_del: vec![],
            },
            Operator {
                controller: GAZE,
                pre: vec![atom(pool, "DockedT", &[1]), atom(pool, "HandEmpty", &[0])],
                eff_add: vec![atom(pool, "Sees", &[0, 1])],
                eff_del: vec![],
            },
            Operator {
                controller: GRASP,
                pre: vec![
                    atom(pool, "DockedT", &[1]),
                    atom(pool, "Sees", &[0, 1]),
                    atom(pool, "HandEmpty", &[0]),
                ],
                eff_add: vec![atom(pool, "Holding", &[0, 1])],
                eff_del: vec![atom(pool, "Sees", &[0, 1]), atom(pool, "HandEmpty", &[0])],
            },
            // MoveToPlace is always applicable; no atom over (robot,
            // container) alone holds in every demo pre-state, so the
            // recovered precondition set is empty.
            Operator {
                controller: MOVE_TO_PLACE,
                pre: vec![],
                eff_add: vec![atom(pool, "DockedC", &[1])],
                eff_del: vec![],
            },
            Operator {
                controller: DROP,
                pre: vec![
                    atom(pool, "DockedT", &[1]),
                    atom(pool, "Holding", &[0, 1]),
                    atom(pool, "DockedC", &[2]),
                ],
                eff_add: vec![
                    atom(pool, "HandEmpty", &[0]),
                    atom(pool, "InContainer", &[1, 2]),
                ],
                eff_del: vec![atom(pool, "Holding", &[0, 1]), atom(pool, "DockedC", &[2])],
            },
        ]
    }

    fn oracle_samplers(&self) -> Vec<Arc<dyn ParamSampler>> {
        vec![
            Arc::new(ClosedSampler(Arc::new(|_s, _o, rng| disc(0.3, rng)))),
            Arc::new(Sampler::Trivial),
            Arc::new(ClosedSampler(Arc::new(|_s, _o, rng| disc(0.18, rng)))),
            Arc::new(ClosedSampler(Arc::new(|_s, _o, rng| disc(0.3, rng)))),
            Arc::new(Sampler::Trivial),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::recover_trajectory;
    use crate::runtime::{rng_at, stream};

    fn fixed_task() -> (Arc<dyn DomainKit>, Task) {
        let kit = kit();
        let mut rng = rng_at(5, stream::TASK_GEN, 0);
        let dist = TaskDist::new(&[("robot", 1, 1), ("target", 2, 2), ("container", 1, 1)]);
        let task = kit.sample_task(&dist, &mut rng);
        (kit, task)
    }

    fn act(kit: &Arc<dyn DomainKit>, name: &str, objs: &[&str], task: &Task) -> GroundAction {
        let ctrl = kit.spec().controller(name).unwrap();
        let objects = objs
            .iter()
            .map(|n| task.objects.iter().find(|o| o.name == *n).unwrap().clone())
            .collect();
        GroundAction::new(ctrl, objects)
    }

    #[test]
    fn scripted_plan_reaches_the_goal_and_flips_match_truth() {
        let (kit, task) = fixed_task();
        let sim = kit.simulator();
        let mut plan = Vec::new();
        for t in ["target0", "target1"] {
            plan.push(act(&kit, "MoveToGaze", &["robot0", t], &task).with_omega(vec![0.1, -0.1]));
            plan.push(act(&kit, "Gaze", &["robot0", t], &task));
            plan.push(act(&kit, "Grasp", &["robot0", t], &task).with_omega(vec![0.05, 0.0]));
            plan.push(
                act(&kit, "MoveToPlace", &["robot0", "container0"], &task)
                    .with_omega(vec![-0.2, 0.1]),
            );
            plan.push(act(&kit, "Drop", &["robot0", t, "container0"], &task));
        }
        let states = recover_trajectory(sim.as_ref(), &task, &plan).unwrap();
        for g in &task.goal {
            assert!(kit
                .spec()
                .scripted_by_name(&g.pred.name)
                .unwrap()
                .holds(states.last().unwrap(), &g.objects));
        }

        // Every scripted truth flip along the trajectory matches the
        // direction vectors, computed here straight from classifier values.
        let truth = kit.truth_vectors();
        let spec = kit.spec();
        for (i, a) in plan.iter().enumerate() {
            let ci = spec.controller_index(&a.controller.name).unwrap();
            for p in &spec.scripted {
                let delta = truth[&p.sig.name].0[ci];
                for atoms in crate::model::ground_signature(&p.sig, &task.objects, false) {
                    let before = p.holds(&states[i], &atoms.objects);
                    let after = p.holds(&states[i + 1], &atoms.objects);
                    let qualifies = crate::model::atom_objects_subset(&atoms, a);
                    match delta {
                        0 => assert_eq!(before, after, "step {i} {atoms}"),
                        1 if qualifies => assert!(after, "step {i} {atoms}"),
                        -1 if qualifies => assert!(!after, "step {i} {atoms}"),
                        _ => assert_eq!(before, after, "step {i} {atoms}"),
                    }
                }
            }
        }
    }

    #[test]
    fn grasp_needs_a_fresh_gaze() {
        let (kit, task) = fixed_task();
        let sim = kit.simulator();
        let mtg = act(&kit, "MoveToGaze", &["robot0", "target0"], &task).with_omega(vec![0.0, 0.0]);
        let s1 = sim.step(&task.x0, &mtg);
        let grasp = act(&kit, "Grasp", &["robot0", "target0"], &task).with_omega(vec![0.0, 0.0]);
        assert!(!sim.applicable(&s1, &grasp), "no gaze yet");
        let s2 = sim.step(&s1, &act(&kit, "Gaze", &["robot0", "target0"], &task));
        assert!(sim.applicable(&s2, &grasp));
        // A wide grasp offset is rejected outright.
        let wide = act(&kit, "Grasp", &["robot0", "target0"], &task).with_omega(vec![0.4, 0.2]);
        assert!(!sim.applicable(&s2, &wide));
    }

    #[test]
    fn drop_undocks_the_container() {
        let (kit, task) = fixed_task();
        let sim = kit.simulator();
        let mut s = task.x0.clone();
        for a in [
            act(&kit, "MoveToGaze", &["robot0", "target0"], &task).with_omega(vec![0.0, 0.0]),
            act(&kit, "Gaze", &["robot0", "target0"], &task),
            act(&kit, "Grasp", &["robot0", "target0"], &task).with_omega(vec![0.0, 0.0]),
            act(&kit, "MoveToPlace", &["robot0", "container0"], &task).with_omega(vec![0.0, 0.0]),
        ] {
            assert!(sim.applicable(&s, &a), "{a}");
            s = sim.step(&s, &a);
        }
        assert!(s.feature("container0", CDOCK) > 0.5);
        let drop = act(&kit, "Drop", &["robot0", "target0", "container0"], &task);
        assert!(sim.applicable(&s, &drop));
        s = sim.step(&s, &drop);
        assert!(s.feature("container0", CDOCK) < 0.5);
        assert!(!sim.applicable(&s, &drop), "hand is empty now");
    }
}
