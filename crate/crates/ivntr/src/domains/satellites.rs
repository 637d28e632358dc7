//! Satellite survey domain: three satellites with per-task instrument
//! loadouts reposition around ground targets, calibrate against designated
//! targets, shoot X/Y markers, and take instrument readings. Repositioning
//! only works while a satellite sees nothing, and a reading requires the
//! satellite to sit inside a view annulus facing the target — the relation
//! the learner has to invent. `MoveTo` accepts any distance parameter, so
//! bad draws leave the satellite outside the annulus; catching those draws
//! is exactly what sampler guidance is for.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
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

// sat features
const SX: usize = 0;
const SY: usize = 1;
const STH: usize = 2;
const SID: usize = 3;
const SCAL: usize = 4;
const SCAM: usize = 5;
const SINF: usize = 6;
const SGEI: usize = 7;
const SSHX: usize = 8;
const SSHY: usize = 9;
const SCID: usize = 10;
// target features
const TX: usize = 0;
const TY: usize = 1;
const TID: usize = 2;
const THX: usize = 3;
const THY: usize = 4;
const TRC: usize = 5;
const TRI: usize = 6;
const TRG: usize = 7;

/// View annulus: distance range and facing tolerance.
const VIEW_MIN: f64 = 0.3;
const VIEW_MAX: f64 = 1.2;
const VIEW_ANG: f64 = 0.3;

const CALIBRATE: usize = 0;
const MOVE_TO: usize = 1;
const MOVE_AWAY: usize = 2;
const SHOOT_X: usize = 3;
const SHOOT_Y: usize = 4;
const TAKE_CAM: usize = 5;
const TAKE_INFRARED: usize = 6;
const TAKE_GEIGER: usize = 7;

const N_SATS: usize = 3;
const SAT_DIM: usize = 11;
const TARGET_DIM: usize = 8;

fn wrap(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(TAU);
    r - PI
}

fn park(id: f64) -> (f64, f64) {
    (-4.0 - 1.5 * id, -4.0)
}

fn sees_xy(sx: f64, sy: f64, th: f64, tx: f64, ty: f64) -> bool {
    let d = ((tx - sx).powi(2) + (ty - sy).powi(2)).sqrt();
    if !(VIEW_MIN..=VIEW_MAX).contains(&d) {
        return false;
    }
    wrap(th - (ty - sy).atan2(tx - sx)).abs() <= VIEW_ANG
}

fn sees(state: &State, sat: &str, target: &str) -> bool {
    sees_xy(
        state.feature(sat, SX),
        state.feature(sat, SY),
        state.feature(sat, STH),
        state.feature(target, TX),
        state.feature(target, TY),
    )
}

/// Whether the satellite sees no target at all. Targets are recognized by
/// their feature dimension, the one piece of type information a raw state
/// carries.
fn sees_nothing(state: &State, sat: &str) -> bool {
    let (sx, sy, th) = (
        state.feature(sat, SX),
        state.feature(sat, SY),
        state.feature(sat, STH),
    );
    state
        .features
        .values()
        .filter(|f| f.len() == TARGET_DIM)
        .all(|f| !sees_xy(sx, sy, th, f[TX], f[TY]))
}

fn build_spec() -> DomainSpec {
    let types = vec![
        TypeDef::new(
            "sat",
            &[
                "x", "y", "theta", "id", "calibrated", "cam", "infrared", "geiger", "shoots_x",
                "shoots_y", "calib_id",
            ],
        ),
        TypeDef::new(
            "target",
            &[
                "x", "y", "id", "hit_x", "hit_y", "read_cam", "read_infrared", "read_geiger",
            ],
        ),
    ];
    let pair = &["sat", "target"];
    let controllers = vec![
        Arc::new(ControllerSig::new("Calibrate", pair, vec![])),
        Arc::new(ControllerSig::new(
            "MoveTo",
            pair,
            vec![(0.0, 2.0), (-PI, PI)],
        )),
        Arc::new(ControllerSig::new("MoveAway", pair, vec![])),
        Arc::new(ControllerSig::new("ShootX", pair, vec![])),
        Arc::new(ControllerSig::new("ShootY", pair, vec![])),
        Arc::new(ControllerSig::new("TakeCam", pair, vec![])),
        Arc::new(ControllerSig::new("TakeInfrared", pair, vec![])),
        Arc::new(ControllerSig::new("TakeGeiger", pair, vec![])),
    ];
    let feature_flag = |idx: usize| {
        move |s: &State, o: &[ObjectRef]| s.feature(&o[0].name, idx) > 0.5
    };
    let read_flag = |idx: usize| {
        move |s: &State, o: &[ObjectRef]| s.feature(&o[0].name, idx) > 0.5
    };
    let scripted = vec![
        // Statics: fixed hardware loadout and calibration assignment.
        ScriptedPredicate::new(
            PredicateSig::new("HasCam", &["sat"], PredKind::Static),
            feature_flag(SCAM),
        ),
        ScriptedPredicate::new(
            PredicateSig::new("HasInfrared", &["sat"], PredKind::Static),
            feature_flag(SINF),
        ),
        ScriptedPredicate::new(
            PredicateSig::new("HasGeiger", &["sat"], PredKind::Static),
            feature_flag(SGEI),
        ),
        ScriptedPredicate::new(
            PredicateSig::new("ShootsX", &["sat"], PredKind::Static),
            feature_flag(SSHX),
        ),
        ScriptedPredicate::new(
            PredicateSig::new("ShootsY", &["sat"], PredKind::Static),
            feature_flag(SSHY),
        ),
        ScriptedPredicate::new(
            PredicateSig::new("CalibTgt", &["sat", "target"], PredKind::Static),
            |s: &State, o: &[ObjectRef]| {
                (s.feature(&o[1].name, TID) - s.feature(&o[0].name, SCID)).abs() < 0.5
            },
        ),
        // Dynamics.
        ScriptedPredicate::new(
            PredicateSig::new("Calibrated", &["sat"], PredKind::Dynamic),
            feature_flag(SCAL),
        ),
        ScriptedPredicate::new(
            PredicateSig::new("Sees", &["sat", "target"], PredKind::Dynamic),
            |s: &State, o: &[ObjectRef]| sees(s, &o[0].name, &o[1].name),
        ),
        ScriptedPredicate::new(
            PredicateSig::new("SeesNothing", &["sat"], PredKind::Dynamic),
            |s: &State, o: &[ObjectRef]| sees_nothing(s, &o[0].name),
        ),
        ScriptedPredicate::new(
            PredicateSig::new("HitX", &["target"], PredKind::Dynamic),
            read_flag(THX),
        ),
        ScriptedPredicate::new(
            PredicateSig::new("HitY", &["target"], PredKind::Dynamic),
            read_flag(THY),
        ),
        // Goals.
        ScriptedPredicate::new(
            PredicateSig::new("CamRead", &["target"], PredKind::Goal),
            read_flag(TRC),
        ),
        ScriptedPredicate::new(
            PredicateSig::new("InfraredRead", &["target"], PredKind::Goal),
            read_flag(TRI),
        ),
        ScriptedPredicate::new(
            PredicateSig::new("GeigerRead", &["target"], PredKind::Goal),
            read_flag(TRG),
        ),
    ];
    DomainSpec {
        name: "satellites".to_string(),
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
        let s = action.objects[0].name.as_str();
        let t = action.objects[1].name.as_str();
        match action.controller.name.as_str() {
            "Calibrate" => {
                sees(state, s, t)
                    && (state.feature(t, TID) - state.feature(s, SCID)).abs() < 0.5
            }
            // Deliberately no check on the distance parameter: a bad draw
            // simply lands the satellite outside the view annulus.
            "MoveTo" => sees_nothing(state, s),
            "MoveAway" => sees(state, s, t),
            "ShootX" => sees(state, s, t) && state.feature(s, SSHX) > 0.5,
            "ShootY" => sees(state, s, t) && state.feature(s, SSHY) > 0.5,
            "TakeCam" => {
                sees(state, s, t)
                    && state.feature(s, SCAL) > 0.5
                    && state.feature(s, SCAM) > 0.5
                    && state.feature(t, THX) > 0.5
            }
            "TakeInfrared" => {
                sees(state, s, t)
                    && state.feature(s, SCAL) > 0.5
                    && state.feature(s, SINF) > 0.5
                    && state.feature(t, THY) > 0.5
            }
            "TakeGeiger" => {
                sees(state, s, t)
                    && state.feature(s, SCAL) > 0.5
                    && state.feature(s, SGEI) > 0.5
            }
            other => panic!("unknown controller {other}"),
        }
    }

    fn step(&self, state: &State, action: &GroundAction) -> State {
        let mut next = state.clone();
        let s = action.objects[0].name.clone();
        let t = action.objects[1].name.clone();
        match action.controller.name.as_str() {
            "Calibrate" => next.set_feature(&s, SCAL, 1.0),
            "MoveTo" => {
                let omega = action.omega.as_deref().expect("MoveTo takes parameters");
                let (d, phi) = (omega[0], omega[1]);
                next.set_feature(&s, SX, state.feature(&t, TX) + d * phi.cos());
                next.set_feature(&s, SY, state.feature(&t, TY) + d * phi.sin());
                next.set_feature(&s, STH, wrap(phi + PI));
            }
            "MoveAway" => {
                let (px, py) = park(state.feature(&s, SID));
                next.set_feature(&s, SX, px);
                next.set_feature(&s, SY, py);
                next.set_feature(&s, STH, 0.0);
            }
            "ShootX" => next.set_feature(&t, THX, 1.0),
            "ShootY" => next.set_feature(&t, THY, 1.0),
            "TakeCam" => next.set_feature(&t, TRC, 1.0),
            "TakeInfrared" => next.set_feature(&t, TRI, 1.0),
            "TakeGeiger" => next.set_feature(&t, TRG, 1.0),
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
        "satellites"
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
        TaskDist::new(&[("sat", N_SATS, N_SATS), ("target", 2, 2)])
    }

    fn test_dist(&self) -> TaskDist {
        TaskDist::new(&[("sat", N_SATS, N_SATS), ("target", 4, 4)])
    }

    fn sample_task(&self, dist: &TaskDist, rng: &mut ChaCha8Rng) -> Task {
        let n_targets = dist.sample_count("target", rng);
        // Randomized loadout: instruments are a permutation over the sats,
        // each shot type lands on one random sat. Varying the pairing keeps
        // hardware flags from being accidentally correlated with behavior.
        let mut instruments = [SCAM, SINF, SGEI];
        instruments.shuffle(rng);
        let shoots_x_sat = rng.gen_range(0..N_SATS);
        let shoots_y_sat = rng.gen_range(0..N_SATS);
        let calib_offset = rng.gen_range(0..n_targets);
        let goal_shift = rng.gen_range(0..3usize);

        let mut objects = Vec::new();
        let mut x0 = State::new();
        for i in 0..N_SATS {
            let name = format!("sat{i}");
            objects.push(ObjectRef::new(name.clone(), "sat"));
            let (px, py) = park(i as f64);
            let mut f = vec![0.0; SAT_DIM];
            f[SX] = px;
            f[SY] = py;
            f[SID] = i as f64;
            f[instruments[i]] = 1.0;
            if i == shoots_x_sat {
                f[SSHX] = 1.0;
            }
            if i == shoots_y_sat {
                f[SSHY] = 1.0;
            }
            f[SCID] = ((i + calib_offset) % n_targets) as f64;
            x0.features.insert(name, f);
        }
        let mut taken = Vec::new();
        for j in 0..n_targets {
            let name = format!("tgt{j}");
            objects.push(ObjectRef::new(name.clone(), "target"));
            let p = separated_point((0.0, 8.0), 2.5, &taken, rng);
            taken.push(p);
            let mut f = vec![0.0; TARGET_DIM];
            f[TX] = p.0;
            f[TY] = p.1;
            f[TID] = j as f64;
            x0.features.insert(name, f);
        }

        let goal_names = ["CamRead", "InfraredRead", "GeigerRead"];
        let goal = (0..n_targets)
            .map(|j| {
                let pred = goal_names[(j + goal_shift) % 3];
                let sig = Arc::clone(&self.spec.scripted_by_name(pred).unwrap().sig);
                GroundAtom::new(&sig, vec![objects[N_SATS + j].clone()])
            })
            .collect();
        Task { objects, x0, goal }
    }

    fn truth_vectors(&self) -> BTreeMap<String, EffectVector> {
        [
            ("Calibrated", vec![1, 0, 0, 0, 0, 0, 0, 0]),
            ("Sees", vec![0, 1, -1, 0, 0, 0, 0, 0]),
            ("SeesNothing", vec![0, -1, 1, 0, 0, 0, 0, 0]),
            ("HitX", vec![0, 0, 0, 1, 0, 0, 0, 0]),
            ("HitY", vec![0, 0, 0, 0, 1, 0, 0, 0]),
            ("CamRead", vec![0, 0, 0, 0, 0, 1, 0, 0]),
            ("InfraredRead", vec![0, 0, 0, 0, 0, 0, 1, 0]),
            ("GeigerRead", vec![0, 0, 0, 0, 0, 0, 0, 1]),
        ]
        .into_iter()
        .map(|(n, v)| (n.to_string(), EffectVector(v)))
        .collect()
    }

    fn oracle_operators(&self, pool: &Pool) -> Vec<Operator> {
        let sees = || atom(pool, "Sees", &[0, 1]);
        vec![
            Operator {
                controller: CALIBRATE,
                pre: vec![sees(), atom(pool, "CalibTgt", &[0, 1])],
                eff_add: vec![atom(pool, "Calibrated", &[0])],
                eff_del: vec![],
            },
            Operator {
                controller: MOVE_TO,
                pre: vec![atom(pool, "SeesNothing", &[0])],
                eff_add: vec![sees()],
                eff_del: vec![atom(pool, "SeesNothing", &[0])],
            },
            Operator {
                controller: MOVE_AWAY,
                pre: vec![sees()],
                eff_add: vec![atom(pool, "SeesNothing", &[0])],
                eff_del: vec![sees()],
            },
            Operator {
                controller: SHOOT_X,
                pre: vec![sees(), atom(pool, "ShootsX", &[0])],
                eff_add: vec![atom(pool, "HitX", &[1])],
                eff_del: vec![],
            },
            Operator {
                controller: SHOOT_Y,
                pre: vec![sees(), atom(pool, "ShootsY", &[0])],
                eff_add: vec![atom(pool, "HitY", &[1])],
                eff_del: vec![],
            },
            Operator {
                controller: TAKE_CAM,
                pre: vec![
                    sees(),
                    atom(pool, "Calibrated", &[0]),
                    atom(pool, "HasCam", &[0]),
                    atom(pool, "HitX", &[1]),
                ],
                eff_add: vec![atom(pool, "CamRead", &[1])],
                eff_del: vec![],
            },
            Operator {
                controller: TAKE_INFRARED,
                pre: vec![
                    sees(),
                    atom(pool, "Calibrated", &[0]),
                    atom(pool, "HasInfrared", &[0]),
                    atom(pool, "HitY", &[1]),
                ],
                eff_add: vec![atom(pool, "InfraredRead", &[1])],
                eff_del: vec![],
            },
            Operator {
                controller: TAKE_GEIGER,
                pre: vec![
                    sees(),
                    atom(pool, "Calibrated", &[0]),
                    atom(pool, "HasGeiger", &[0]),
                ],
                eff_add: vec![atom(pool, "GeigerRead", &[1])],
                eff_del: vec![],
            },
        ]
    }

    fn oracle_samplers(&self) -> Vec<Arc<dyn ParamSampler>> {
        let move_to: Arc<dyn ParamSampler> = Arc::new(ClosedSampler(Arc::new(|_s, _o, rng| {
            // Stay well inside the annulus and point anywhere.
            vec![
                rng.gen_range(0.4..1.1),
                rng.gen_range(-PI..PI),
            ]
        })));
        (0..8)
            .map(|i| {
                if i == MOVE_TO {
                    Arc::clone(&move_to)
                } else {
                    Arc::new(Sampler::Trivial) as Arc<dyn ParamSampler>
                }
            })
            .collect()
    }
}
