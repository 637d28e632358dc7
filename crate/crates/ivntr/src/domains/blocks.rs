//! Table-top block stacking with a one-gripper robot. The interesting wrinkle
//! is that `Unstack` and `Stack` take two same-typed block arguments, so
//! predicates over blocks need slot-correspondence annotations: the clear
//! flag of the block being moved responds to every controller, while the
//! clear flag of the base block responds only to stacking and unstacking.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
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

// robot features (x, y, z are decorative; the gripper flag does the work)
const ROPEN: usize = 3;
// block features
const BX: usize = 0;
const BY: usize = 1;
const BZ: usize = 2;
const BHELD: usize = 3;
const BCLEAR: usize = 4;

/// Block height; a resting block's center sits at half this above its base.
const BLOCK_H: f64 = 0.5;
const TABLE_Z: f64 = BLOCK_H / 2.0;
/// Held blocks are parked here until placed.
const HAND: (f64, f64, f64) = (-1.0, -1.0, 2.0);
/// Placement clearance required around a put-down point.
const PLACE_CLEAR: f64 = 0.3;

const PICK: usize = 0;
const UNSTACK: usize = 1;
const STACK: usize = 2;
const PUT_ON_TABLE: usize = 3;

fn on_top(state: &State, top: &str, base: &str) -> bool {
    (state.feature(top, BX) - state.feature(base, BX)).abs() < 0.1
        && (state.feature(top, BY) - state.feature(base, BY)).abs() < 0.1
        && {
            let dz = state.feature(top, BZ) - state.feature(base, BZ);
            (0.3..0.7).contains(&dz)
        }
}

fn build_spec() -> DomainSpec {
    let types = vec![
        TypeDef::new("robot", &["x", "y", "z", "open"]),
        TypeDef::new("block", &["x", "y", "z", "held", "clear"]),
    ];
    let controllers = vec![
        Arc::new(ControllerSig::new(
            "PickFromTable",
            &["robot", "block"],
            vec![],
        )),
        Arc::new(ControllerSig::new(
            "Unstack",
            &["robot", "block", "block"],
            vec![],
        )),
        Arc::new(ControllerSig::new(
            "Stack",
            &["robot", "block", "block"],
            vec![],
        )),
        Arc::new(ControllerSig::new(
            "PutOnTable",
            &["robot", "block"],
            vec![(0.0, 4.0), (0.0, 4.0)],
        )),
    ];
    let scripted = vec![
        ScriptedPredicate::new(
            PredicateSig::new("HandEmpty", &["robot"], PredKind::Dynamic),
            |s: &State, o: &[ObjectRef]| s.feature(&o[0].name, ROPEN) > 0.5,
        ),
        ScriptedPredicate::new(
            PredicateSig::new("Held", &["block"], PredKind::Dynamic).with_correspondence(vec![0]),
            |s: &State, o: &[ObjectRef]| s.feature(&o[0].name, BHELD) > 0.5,
        ),
        // Same flag, two slot roles: the moved block (occurrence 0) and the
        // base block (occurrence 1) flip it under different controllers.
        ScriptedPredicate::new(
            PredicateSig::new("ClearTop", &["block"], PredKind::Dynamic)
                .with_correspondence(vec![0]),
            |s: &State, o: &[ObjectRef]| s.feature(&o[0].name, BCLEAR) > 0.5,
        ),
        ScriptedPredicate::new(
            PredicateSig::new("ClearBase", &["block"], PredKind::Dynamic)
                .with_correspondence(vec![1]),
            |s: &State, o: &[ObjectRef]| s.feature(&o[0].name, BCLEAR) > 0.5,
        ),
        ScriptedPredicate::new(
            PredicateSig::new("OnTable", &["block"], PredKind::Dynamic)
                .with_correspondence(vec![0]),
            |s: &State, o: &[ObjectRef]| s.feature(&o[0].name, BZ) < 0.4,
        ),
        ScriptedPredicate::new(
            PredicateSig::new("OnTop", &["block", "block"], PredKind::Goal)
                .with_correspondence(vec![0, 1]),
            |s: &State, o: &[ObjectRef]| on_top(s, &o[0].name, &o[1].name),
        ),
    ];
    DomainSpec {
        name: "blocks".to_string(),
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
        match action.controller.name.as_str() {
            "PickFromTable" => {
                state.feature(obj[0], ROPEN) > 0.5
                    && state.feature(obj[1], BCLEAR) > 0.5
                    && state.feature(obj[1], BHELD) < 0.5
                    && state.feature(obj[1], BZ) < 0.4
            }
            "Unstack" => {
                state.feature(obj[0], ROPEN) > 0.5
                    && state.feature(obj[1], BCLEAR) > 0.5
                    && state.feature(obj[1], BHELD) < 0.5
                    && on_top(state, obj[1], obj[2])
            }
            "Stack" => {
                state.feature(obj[1], BHELD) > 0.5 && state.feature(obj[2], BCLEAR) > 0.5
            }
            "PutOnTable" => {
                let omega = action.omega.as_deref().unwrap_or(&[]);
                if omega.len() != 2 || state.feature(obj[1], BHELD) < 0.5 {
                    return false;
                }
                // The spot must be clear of every grounded block.
                state.features.iter().all(|(name, f)| {
                    name == obj[1]
                        || f.len() != 5
                        || f[BHELD] > 0.5
                        || ((f[BX] - omega[0]).powi(2) + (f[BY] - omega[1]).powi(2)).sqrt()
                            >= PLACE_CLEAR
                })
            }
            other => panic!("unknown controller {other}"),
        }
    }

    fn step(&self, state: &State, action: &GroundAction) -> State {
        let mut next = state.clone();
        let obj: Vec<String> = action.objects.iter().map(|o| o.name.clone()).collect();
        match action.controller.name.as_str() {
            "PickFromTable" => {
                next.set_feature(&obj[1], BX, HAND.0);
                next.set_feature(&obj[1], BY, HAND.1);
                next.set_feature(&obj[1], BZ, HAND.2);
                next.set_feature(&obj[1], BHELD, 1.0);
                next.set_feature(&obj[1], BCLEAR, 0.0);
                next.set_feature(&obj[0], ROPEN, 0.0);
            }
            "Unstack" => {
                next.set_feature(&obj[1], BX, HAND.0);
                next.set_feature(&obj[1], BY, HAND.1);
                next.set_feature(&obj[1], BZ, HAND.2);
                next.set_feature(&obj[1], BHELD, 1.0);
                next.set_feature(&obj[1], BCLEAR, 0.0);
                next.set_feature(&obj[2], BCLEAR, 1.0);
                next.set_feature(&obj[0], ROPEN, 0.0);
            }
            "Stack" => {
                next.set_feature(&obj[1], BX, state.feature(&obj[2], BX));
                next.set_feature(&obj[1], BY, state.feature(&obj[2], BY));
                next.set_feature(&obj[1], BZ, state.feature(&obj[2], BZ) + BLOCK_H);
                next.set_feature(&obj[1], BHELD, 0.0);
                next.set_feature(&obj[1], BCLEAR, 1.0);
                next.set_feature(&obj[2], BCLEAR, 0.0);
                next.set_feature(&obj[0], ROPEN, 1.0);
            }
            "PutOnTable" => {
                let omega = action.omega.as_deref().expect("PutOnTable takes parameters");
                next.set_feature(&obj[1], BX, omega[0]);
                next.set_feature(&obj[1], BY, omega[1]);
                next.set_feature(&obj[1], BZ, TABLE_Z);
                next.set_feature(&obj[1], BHELD, 0.0);
                next.set_feature(&obj[1], BCLEAR, 1.0);
                next.set_feature(&obj[0], ROPEN, 1.0);
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

impl DomainKit for Kit {
    fn name(&self) -> &'static str {
        "blocks"
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
        TaskDist::new(&[("robot", 1, 1), ("block", 3, 4)])
    }

    fn test_dist(&self) -> TaskDist {
        TaskDist::new(&[("robot", 1, 1), ("block", 5, 6)])
    }

    fn sample_task(&self, dist: &TaskDist, rng: &mut ChaCha8Rng) -> Task {
        let nb = dist.sample_count("block", rng);
        let mut objects = vec![ObjectRef::new("robot0", "robot")];
        let mut x0 = State::new();
        x0.features
            .insert("robot0".to_string(), vec![2.0, -1.0, 2.0, 1.0]);

        // Initial stacks of height one or two.
        let mut taken: Vec<(f64, f64)> = Vec::new();
        let mut singles: Vec<usize> = Vec::new(); // height-1 stacks open for stacking
        for i in 0..nb {
            let name = format!("block{i}");
            objects.push(ObjectRef::new(name.clone(), "block"));
            if !singles.is_empty() && rng.gen_bool(0.35) {
                let base = singles.remove(rng.gen_range(0..singles.len()));
                let base_name = format!("block{base}");
                let bx = x0.feature(&base_name, BX);
                let by = x0.feature(&base_name, BY);
                x0.set_feature(&base_name, BCLEAR, 0.0);
                x0.features
                    .insert(name, vec![bx, by, TABLE_Z + BLOCK_H, 0.0, 1.0]);
            } else {
                let p = separated_point((0.2, 3.8), 0.5, &taken, rng);
                taken.push(p);
                x0.features.insert(name, vec![p.0, p.1, TABLE_Z, 0.0, 1.0]);
                singles.push(i);
            }
        }

        // Goal: a chain of OnTop atoms over distinct blocks, listed top-down.
        // Every block that has to move must start clear: clearness lost in the
        // base role of a stack is only ever re-established in the base role, so
        // a buried mover could never again satisfy the moved-role clearness its
        // pick requires. The final base may start buried, which is what keeps
        // unstacking in the demonstrations. Resample until at least one link is
        // unsatisfied initially.
        let sig = Arc::clone(&self.spec.scripted_by_name("OnTop").unwrap().sig);
        let k = rng.gen_range(2..=3usize).min(nb);
        let mut goal = Vec::new();
        for tries in 0.. {
            assert!(tries < 100, "could not sample a nontrivial goal");
            let mut ids: Vec<usize> = (0..nb).collect();
            ids.shuffle(rng);
            let chain: Vec<ObjectRef> = ids[..k]
                .iter()
                .map(|i| objects[1 + i].clone())
                .collect();
            let movers_clear = chain[..k - 1]
                .iter()
                .all(|b| x0.feature(&b.name, BCLEAR) > 0.5);
            let atoms: Vec<GroundAtom> = chain
                .windows(2)
                .map(|w| GroundAtom::new(&sig, vec![w[0].clone(), w[1].clone()]))
                .collect();
            if movers_clear
                && atoms
                    .iter()
                    .any(|a| !on_top(&x0, &a.objects[0].name, &a.objects[1].name))
            {
                goal = atoms;
                break;
            }
        }
        Task { objects, x0, goal }
    }

    fn truth_vectors(&self) -> BTreeMap<String, EffectVector> {
        [
            ("HandEmpty", vec![-1, -1, 1, 1]),
            ("Held", vec![1, 1, -1, -1]),
            ("ClearTop", vec![-1, -1, 1, 1]),
            ("ClearBase", vec![0, 1, -1, 0]),
            ("OnTable", vec![-1, 0, 0, 1]),
            ("OnTop", vec![0, -1, 1, 0]),
        ]
        .into_iter()
        .map(|(n, v)| (n.to_string(), EffectVector(v)))
        .collect()
    }

    fn oracle_operators(&self, pool: &Pool) -> Vec<Operator> {
        vec![
            Operator {
                controller: PICK,
                pre: vec![
                    atom(pool, "HandEmpty", &[0]),
                    atom(pool, "ClearTop", &[1]),
                    atom(pool, "OnTable", &[1]),
                ],
                eff_add: vec![atom(pool, "Held", &[1])],
                eff_del: vec![
                    atom(pool, "HandEmpty", &[0]),
                    atom(pool, "ClearTop", &[1]),
                    atom(pool, "OnTable", &[1]),
                ],
            },
            Operator {
                controller: UNSTACK,
                pre: vec![
                    atom(pool, "HandEmpty", &[0]),
                    atom(pool, "ClearTop", &[1]),
                    atom(pool, "OnTop", &[1, 2]),
                ],
                eff_add: vec![atom(pool, "Held", &[1]), atom(pool, "ClearBase", &[2])],
                eff_del: vec![
                    atom(pool, "HandEmpty", &[0]),
                    atom(pool, "ClearTop", &[1]),
                    atom(pool, "OnTop", &[1, 2]),
                ],
            },
            Operator {
                controller: STACK,
                pre: vec![atom(pool, "Held", &[1]), atom(pool, "ClearBase", &[2])],
                eff_add: vec![
                    atom(pool, "HandEmpty", &[0]),
                    atom(pool, "ClearTop", &[1]),
                    atom(pool, "OnTop", &[1, 2]),
                ],
                eff_del: vec![atom(pool, "Held", &[1]), atom(pool, "ClearBase", &[2])],
            },
            Operator {
                controller: PUT_ON_TABLE,
                pre: vec![atom(pool, "Held", &[1])],
                eff_add: vec![
                    atom(pool, "HandEmpty", &[0]),
                    atom(pool, "ClearTop", &[1]),
                    atom(pool, "OnTable", &[1]),
                ],
                eff_del: vec![atom(pool, "Held", &[1])],
            },
        ]
    }

    fn oracle_samplers(&self) -> Vec<Arc<dyn ParamSampler>> {
        let put: Arc<dyn ParamSampler> = Arc::new(ClosedSampler(Arc::new(
            |s: &State, _o: &[ObjectRef], rng: &mut ChaCha8Rng| {
                // Rejection-sample a spot clear of every grounded block.
                for _ in 0..200 {
                    let u = rng.gen_range(0.2..3.8);
                    let v = rng.gen_range(0.2..3.8);
                    let free = s.features.values().all(|f| {
                        f.len() != 5
                            || f[BHELD] > 0.5
                            || ((f[BX] - u).powi(2) + (f[BY] - v).powi(2)).sqrt()
                                >= PLACE_CLEAR + 0.1
                    });
                    if free {
                        return vec![u, v];
                    }
                }
                vec![2.0, 2.0]
            },
        )));
        vec![
            Arc::new(Sampler::Trivial),
            Arc::new(Sampler::Trivial),
            Arc::new(Sampler::Trivial),
            put,
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::atom_objects_subset;
    use crate::runtime::{rng_at, stream};

    fn fixed_task(seed: u64) -> (Arc<dyn DomainKit>, Task) {
        let kit = kit();
        let dist = TaskDist::new(&[("robot", 1, 1), ("block", 3, 3)]);
        let mut rng = rng_at(seed, stream::TASK_GEN, 0);
        let task = kit.sample_task(&dist, &mut rng);
        (kit, task)
    }

    /// First sampled task where all three blocks rest loose on the table
    /// and the far corner is unoccupied.
    fn loose_task() -> (Arc<dyn DomainKit>, Task) {
        for seed in 0..50 {
            let (kit, task) = fixed_task(seed);
            let all_loose = (0..3).all(|i| {
                let b = format!("block{i}");
                task.x0.feature(&b, BCLEAR) > 0.5 && task.x0.feature(&b, BZ) < 0.4
            });
            let corner_free = (0..3).all(|i| {
                let b = format!("block{i}");
                ((task.x0.feature(&b, BX) - 3.7).powi(2)
                    + (task.x0.feature(&b, BY) - 3.7).powi(2))
                .sqrt()
                    >= PLACE_CLEAR + 0.2
            });
            if all_loose && corner_free {
                return (kit, task);
            }
        }
        panic!("no fully loose layout in 50 seeds");
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
    fn stack_then_unstack_restores_the_flags() {
        let (kit, task) = loose_task();
        let sim = kit.simulator();
        let (a, b) = ("block0", "block1");

        let pick = act(&kit, "PickFromTable", &["robot0", a], &task);
        assert!(sim.applicable(&task.x0, &pick));
        let s1 = sim.step(&task.x0, &pick);
        assert!(s1.feature(a, BHELD) > 0.5);
        assert!(s1.feature("robot0", ROPEN) < 0.5);
        assert!(!sim.applicable(&s1, &act(&kit, "PickFromTable", &["robot0", b], &task)));

        let stack = act(&kit, "Stack", &["robot0", a, b], &task);
        assert!(sim.applicable(&s1, &stack));
        let s2 = sim.step(&s1, &stack);
        assert!(on_top(&s2, a, b));
        assert!(s2.feature(b, BCLEAR) < 0.5);

        let unstack = act(&kit, "Unstack", &["robot0", a, b], &task);
        assert!(sim.applicable(&s2, &unstack));
        // Unstacking the base out from under the top is not possible.
        assert!(!sim.applicable(&s2, &act(&kit, "Unstack", &["robot0", b, a], &task)));
        let s3 = sim.step(&s2, &unstack);
        assert!(s3.feature(b, BCLEAR) > 0.5);
        assert!(s3.feature(a, BHELD) > 0.5);
    }

    #[test]
    fn correspondence_separates_the_two_block_roles() {
        let (kit, task) = fixed_task(4);
        let spec = kit.spec();
        let b0 = task.objects[1].clone();
        let b1 = task.objects[2].clone();
        let stack = act(&kit, "Stack", &["robot0", b0.name.as_str(), b1.name.as_str()], &task);

        let on_top_sig = &spec.scripted_by_name("OnTop").unwrap().sig;
        let right = GroundAtom::new(on_top_sig, vec![b0.clone(), b1.clone()]);
        let flipped = GroundAtom::new(on_top_sig, vec![b1.clone(), b0.clone()]);
        assert!(atom_objects_subset(&right, &stack));
        assert!(!atom_objects_subset(&flipped, &stack), "role order matters");

        let top_sig = &spec.scripted_by_name("ClearTop").unwrap().sig;
        let base_sig = &spec.scripted_by_name("ClearBase").unwrap().sig;
        assert!(atom_objects_subset(&GroundAtom::new(top_sig, vec![b0.clone()]), &stack));
        assert!(!atom_objects_subset(&GroundAtom::new(top_sig, vec![b1.clone()]), &stack));
        assert!(atom_objects_subset(&GroundAtom::new(base_sig, vec![b1]), &stack));
        assert!(!atom_objects_subset(&GroundAtom::new(base_sig, vec![b0]), &stack));
    }

    #[test]
    fn put_on_table_rejects_occupied_spots() {
        let (kit, task) = loose_task();
        let sim = kit.simulator();
        let (a, b) = ("block0", "block1");
        let s1 = sim.step(&task.x0, &act(&kit, "PickFromTable", &["robot0", a], &task));

        let occupied = vec![task.x0.feature(b, BX), task.x0.feature(b, BY)];
        let put_bad = act(&kit, "PutOnTable", &["robot0", a], &task).with_omega(occupied);
        assert!(!sim.applicable(&s1, &put_bad));
        let put_ok = act(&kit, "PutOnTable", &["robot0", a], &task).with_omega(vec![3.7, 3.7]);
        assert!(sim.applicable(&s1, &put_ok));
        let s2 = sim.step(&s1, &put_ok);
        assert!(s2.feature(a, BZ) < 0.4 && s2.feature(a, BCLEAR) > 0.5);
    }
}
