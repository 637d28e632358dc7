//! Trainer for candidate predicate classifiers: Adam over the transition
//! losses, early stopping on validation loss, deterministic under a fixed
//! seed.

use super::loss::{transition_loss, transition_loss_grad, LossBreakdown};
use super::mlp::{ForwardCache, Grads, MlpParams};
use crate::invent::EffectVector;
use crate::runtime::{rng_at, stream};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no transitions exist for any controller with a nonzero effect entry")]
    NoTransitions,
    #[error("dataset input dim {data} does not match requested network input {net}")]
    InputDimMismatch { data: usize, net: usize },
}

/// One demonstration transition prepared for a predicate group: classifier
/// inputs for every ground atom of the group at the pre and post state,
/// plus which atoms sit inside the action's objects.
#[derive(Debug, Clone)]
pub struct TransitionSample {
    pub action_idx: usize,
    pub pre_inputs: Vec<Vec<f64>>,
    pub post_inputs: Vec<Vec<f64>>,
    pub qualifying: Vec<bool>,
}

impl TransitionSample {
    /// Per-atom supervision under an effect vector.
    pub fn supervision(&self, delta: &EffectVector) -> Vec<i8> {
        let d = delta.0[self.action_idx];
        self.qualifying
            .iter()
            .map(|q| if *q && d != 0 { d } else { 0 })
            .collect()
    }
}

/// Train/validation transitions of one predicate group.
#[derive(Debug, Clone)]
pub struct GroupDataset {
    pub input_dim: usize,
    pub n_actions: usize,
    pub train: Vec<TransitionSample>,
    pub val: Vec<TransitionSample>,
}

impl GroupDataset {
    pub fn train_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.n_actions];
        for s in &self.train {
            counts[s.action_idx] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Demonstration-level train fraction (applied at dataset generation;
    /// recorded here so artifacts carry the full recipe).
    pub split: f64,
    pub seed: u64,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            // Datasets here are tiny (tens to hundreds of transitions), so
            // an epoch is only a handful of Adam steps; the step size is
            // sized for that regime.
            lr: 5e-3,
            batch_size: 32,
            max_epochs: 300,
            patience: 20,
            split: 0.8,
            seed: 0,
            hidden: vec![64, 64],
        }
    }
}

pub(crate) struct Adam {
    m: Grads,
    v: Grads,
    t: u64,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub(crate) fn new(params: &MlpParams, lr: f64) -> Self {
        Adam {
            m: params.zero_grads(),
            v: params.zero_grads(),
            t: 0,
            lr,
        }
    }

    pub(crate) fn step(&mut self, params: &mut MlpParams, grads: &Grads) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t as i32);
        let c2 = 1.0 - Self::B2.powi(self.t as i32);
        for layer in 0..params.weights.len() {
            let g = &grads.weights[layer];
            let m = &mut self.m.weights[layer];
            let v = &mut self.v.weights[layer];
            let p = &mut params.weights[layer];
            for i in 0..g.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
            let g = &grads.biases[layer];
            let m = &mut self.m.biases[layer];
            let v = &mut self.v.biases[layer];
            let p = &mut params.biases[layer];
            for i in 0..g.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

/// Mean transition loss per controller over a sample set.
pub fn eval_breakdown(
    params: &MlpParams,
    samples: &[TransitionSample],
    delta: &EffectVector,
    n_actions: usize,
) -> LossBreakdown {
    let mut sums = vec![0.0; n_actions];
    let mut counts = vec![0usize; n_actions];
    let mut cache = ForwardCache::default();
    for s in samples {
        let t = s.supervision(delta);
        let v_pre: Vec<f64> = s
            .pre_inputs
            .iter()
            .map(|x| params.forward_cached(x, &mut cache))
            .collect();
        let v_post: Vec<f64> = s
            .post_inputs
            .iter()
            .map(|x| params.forward_cached(x, &mut cache))
            .collect();
        sums[s.action_idx] += transition_loss(&v_pre, &v_post, &t).total();
        counts[s.action_idx] += 1;
    }
    LossBreakdown::from_sums(sums, counts)
}

fn input_normalization(data: &GroupDataset) -> Option<(Vec<f64>, Vec<f64>)> {
    let dim = data.input_dim;
    let mut mean = vec![0.0; dim];
    let mut n = 0usize;
    for s in &data.train {
        for x in s.pre_inputs.iter().chain(&s.post_inputs) {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
            n += 1;
        }
    }
    if n == 0 {
        return None;
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; dim];
    for s in &data.train {
        for x in s.pre_inputs.iter().chain(&s.post_inputs) {
            for ((sq, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *sq += (v - m) * (v - m);
            }
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt().max(1e-6)).collect();
    Some((mean, std))
}

/// Trains a classifier for one (group, effect vector) pair and reports the
/// validation loss split by controller. Bitwise-reproducible for a fixed
/// config.
pub fn train_classifier(
    data: &GroupDataset,
    delta: &EffectVector,
    cfg: &TrainConfig,
) -> Result<(MlpParams, LossBreakdown), TrainError> {
    let counts = data.train_counts();
    if delta
        .nonzero_indices()
        .all(|i| counts.get(i).copied().unwrap_or(0) == 0)
        && delta.level() > 0
    {
        return Err(TrainError::NoTransitions);
    }

    let mut sizes = vec![data.input_dim];
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(1);
    let mut init_rng = rng_at(cfg.seed, stream::NET_INIT, 0);
    let mut params = MlpParams::init(&sizes, &mut init_rng);
    params.input_norm = input_normalization(data);

    // Weight per transition so that summing over a batch estimates the
    // mean-over-controllers of mean-over-transitions objective.
    let active = counts.iter().filter(|c| **c > 0).count().max(1);
    let weight: Vec<f64> = counts
        .iter()
        .map(|c| {
            if *c > 0 {
                1.0 / (active as f64 * *c as f64)
            } else {
                0.0
            }
        })
        .collect();

    let mut adam = Adam::new(&params, cfg.lr);
    let mut grads = params.zero_grads();
    let mut cache = ForwardCache::default();
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut shuffle_rng = rng_at(cfg.seed, stream::NET_BATCH, 0);

    let mut best_total = f64::INFINITY;
    let mut best: Option<(MlpParams, LossBreakdown)> = None;
    let mut since_best = 0usize;

    for _epoch in 0..cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            grads.zero();
            for &si in chunk {
                let s = &data.train[si];
                let t = s.supervision(delta);
                if t.is_empty() {
                    continue;
                }
                let mut v_pre = Vec::with_capacity(t.len());
                let mut pre_caches = Vec::with_capacity(t.len());
                for x in &s.pre_inputs {
                    v_pre.push(params.forward_cached(x, &mut cache));
                    pre_caches.push(cache.clone());
                }
                let mut v_post = Vec::with_capacity(t.len());
                let mut post_caches = Vec::with_capacity(t.len());
                for x in &s.post_inputs {
                    v_post.push(params.forward_cached(x, &mut cache));
                    post_caches.push(cache.clone());
                }
                let (g_pre, g_post) = transition_loss_grad(&v_pre, &v_post, &t);
                let w = weight[s.action_idx];
                for p in 0..t.len() {
                    params.backward(&pre_caches[p], w * g_pre[p], &mut grads);
                    params.backward(&post_caches[p], w * g_post[p], &mut grads);
                }
            }
            // Scale so a partial batch carries proportionally less weight.
            grads.scale(data.train.len() as f64 / chunk.len() as f64);
            adam.step(&mut params, &grads);
        }

        let breakdown = eval_breakdown(&params, &data.val, delta, data.n_actions);
        if breakdown.total < best_total - 1e-9 {
            best_total = breakdown.total;
            best = Some((params.clone(), breakdown));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    Ok(best.unwrap_or_else(|| {
        let breakdown = eval_breakdown(&params, &data.val, delta, data.n_actions);
        (params, breakdown)
    }))
}
