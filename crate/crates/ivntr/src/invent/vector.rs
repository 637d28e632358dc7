//! Lifted effect vectors: one entry per controller, each in {-1, 0, +1},
//! stating whether ground atoms of a predicate (whose objects sit inside
//! the action's objects) are added, deleted, or untouched by that
//! controller.

use crate::model::{atom_objects_subset, GroundAction, GroundAtom};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EffectVector(pub Vec<i8>);

impl EffectVector {
    pub fn root(n_controllers: usize) -> Self {
        EffectVector(vec![0; n_controllers])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Tree level = number of nonzero entries.
    pub fn level(&self) -> usize {
        self.0.iter().filter(|d| **d != 0).count()
    }

    pub fn zero_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, d)| **d == 0)
            .map(|(i, _)| i)
    }

    pub fn nonzero_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != 0)
            .map(|(i, _)| i)
    }

    /// Copy with one zero entry flipped to `sign`.
    pub fn child(&self, index: usize, sign: i8) -> Self {
        debug_assert_eq!(self.0[index], 0);
        debug_assert!(sign == 1 || sign == -1);
        let mut v = self.0.clone();
        v[index] = sign;
        EffectVector(v)
    }

    /// All direct children: every zero entry flipped each way, +1 before -1
    /// per index, indices ascending. A node at level l over M controllers
    /// has exactly 2 * (M - l) children.
    pub fn children(&self) -> Vec<EffectVector> {
        let mut out = Vec::with_capacity(2 * (self.len() - self.level()));
        for i in self.zero_indices().collect::<Vec<_>>() {
            out.push(self.child(i, 1));
            out.push(self.child(i, -1));
        }
        out
    }

    /// Negated copy (used for complement predicates).
    pub fn negated(&self) -> Self {
        EffectVector(self.0.iter().map(|d| -d).collect())
    }

    /// Deterministic ordering for tie-breaks: level ascending, then
    /// entrywise with +1 < -1 < 0, so among equal-level vectors the one
    /// with the earliest (and positive) nonzero entry sorts first.
    pub fn tie_key(&self) -> (usize, Vec<u8>) {
        let rank = |d: i8| -> u8 {
            match d {
                1 => 0,
                -1 => 1,
                _ => 2,
            }
        };
        (self.level(), self.0.iter().map(|d| rank(*d)).collect())
    }
}

impl fmt::Display for EffectVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|d| match d {
                1 => "+1".to_string(),
                -1 => "-1".to_string(),
                _ => "0".to_string(),
            })
            .collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// Ground supervision for one transition: entry per atom, equal to the
/// vector's entry for the transition's controller when the atom's objects
/// sit inside the action's objects (slot-correspondence aware), else 0.
pub fn ground_effect_vector(
    delta: &EffectVector,
    atoms: &[GroundAtom],
    action: &GroundAction,
    controller_index: usize,
) -> Vec<i8> {
    let d = delta.0[controller_index];
    atoms
        .iter()
        .map(|a| {
            if d != 0 && atom_objects_subset(a, action) {
                d
            } else {
                0
            }
        })
        .collect()
}
