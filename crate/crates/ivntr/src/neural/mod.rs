//! Small-MLP classifiers over object feature vectors, the transition losses
//! that supervise them, and a binary checkpoint format.

pub mod checkpoint;
pub mod loss;
pub mod mlp;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use loss::{transition_loss, LossBreakdown, TransitionLoss};
pub use mlp::MlpParams;
pub use train::{
    eval_breakdown, train_classifier, GroupDataset, TrainConfig, TrainError, TransitionSample,
};

use std::sync::Arc;

use crate::model::{
    atom_objects_subset, ground_signature, Demonstration, DomainSpec, GroundAtom, ObjectRef,
    PredicateSig, State,
};

/// Classifier input for one ground atom: the objects' feature vectors
/// concatenated in argument order. Nullary predicates read a constant so the
/// network still has an input.
pub fn predicate_input(state: &State, objects: &[ObjectRef]) -> Vec<f64> {
    if objects.is_empty() {
        return vec![1.0];
    }
    let mut input = Vec::new();
    for obj in objects {
        input.extend_from_slice(
            state
                .features
                .get(&obj.name)
                .unwrap_or_else(|| panic!("object {} missing from state", obj.name)),
        );
    }
    input
}

/// Scores every atom in a list against one state.
pub fn ground_classifier(params: &MlpParams, state: &State, atoms: &[GroundAtom]) -> Vec<f64> {
    atoms
        .iter()
        .map(|a| params.forward(&predicate_input(state, &a.objects)))
        .collect()
}

/// Prepares the transitions of a demonstration set for one signature group:
/// per transition, the classifier inputs of every ground atom in the pre
/// and post state plus the qualification mask. `max_per_action` caps how
/// many transitions each controller contributes to each side of the split
/// (in demo order), bounding training cost on large datasets.
pub fn build_group_dataset(
    spec: &DomainSpec,
    demos: &[(&Demonstration, bool)],
    sig: &Arc<PredicateSig>,
    max_per_action: usize,
) -> GroupDataset {
    let n_actions = spec.controllers.len();
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut train_counts = vec![0usize; n_actions];
    let mut val_counts = vec![0usize; n_actions];
    for (demo, is_train) in demos {
        let atoms = ground_signature(sig, &demo.task.objects, spec.allow_same_object);
        if atoms.is_empty() {
            continue;
        }
        for (s, a, s2) in demo.transitions() {
            let action_idx = spec
                .controller_index(&a.controller.name)
                .expect("demo action uses a known controller");
            let counts = if *is_train {
                &mut train_counts
            } else {
                &mut val_counts
            };
            if counts[action_idx] >= max_per_action {
                continue;
            }
            counts[action_idx] += 1;
            let sample = TransitionSample {
                action_idx,
                pre_inputs: atoms
                    .iter()
                    .map(|at| predicate_input(s, &at.objects))
                    .collect(),
                post_inputs: atoms
                    .iter()
                    .map(|at| predicate_input(s2, &at.objects))
                    .collect(),
                qualifying: atoms.iter().map(|at| atom_objects_subset(at, a)).collect(),
            };
            if *is_train {
                train.push(sample);
            } else {
                val.push(sample);
            }
        }
    }
    GroupDataset {
        input_dim: spec.input_dim(&sig.var_types),
        n_actions,
        train,
        val,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ObjectRef, State};

    #[test]
    fn input_concatenates_in_argument_order() {
        let mut state = State::default();
        state.features.insert("a".to_string(), vec![1.0, 2.0]);
        state.features.insert("b".to_string(), vec![3.0]);
        let a = ObjectRef::new("a", "t1");
        let b = ObjectRef::new("b", "t2");
        assert_eq!(
            predicate_input(&state, &[b.clone(), a.clone()]),
            vec![3.0, 1.0, 2.0]
        );
        assert_eq!(predicate_input(&state, &[a, b]), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn nullary_input_is_a_constant() {
        let state = State::default();
        assert_eq!(predicate_input(&state, &[]), vec![1.0]);
    }
}
