//! Learns neural relational predicates from planning demonstrations and
//! assembles them into a bilevel (symbolic + continuous) planner.
//!
//! The pipeline runs in stages over a scripted simulator domain:
//!
//! 1. [`domains`] — sample tasks, generate demonstrations with an oracle
//!    bilevel planner, and serialize them as line-delimited records.
//! 2. [`invent`] — per predicate group, search the tree of lifted effect
//!    vectors; each proposed vector supervises a small classifier network
//!    ([`neural`]) trained on demonstration transitions; vectors whose
//!    validation loss clears the threshold become predicate candidates.
//! 3. [`select`] — hill-climb a subset of the candidate pool by scoring
//!    abstract planability of the demonstrations.
//! 4. [`planlearn`] — read operators (preconditions by intersection, effects
//!    from the effect vectors) and fit conditional samplers for controller
//!    parameters.
//! 5. [`bilevel`] — plan: best-first abstract skeleton search with an
//!    additive relaxation heuristic, then sampler-driven refinement checked
//!    against the learned predicate classifiers.
//!
//! The [`pipeline`] module wires the stages behind resumable artifacts and
//! the `ivntr` binary exposes them as CLI verbs. Data-parallel fan-out
//! (demo generation, group invention, candidate scoring, task evaluation)
//! runs through [`runtime`], backed by rayon under the default `parallel`
//! feature with a sequential fallback without it.

pub mod bilevel;
pub mod config;
pub mod domains;
pub mod invent;
pub mod model;
pub mod neural;
pub mod pipeline;
pub mod planlearn;
pub mod report;
pub mod runtime;
pub mod select;

/// Version tag embedded in every serialized record.
pub const FORMAT_VERSION: &str = "ivntr-v1";
