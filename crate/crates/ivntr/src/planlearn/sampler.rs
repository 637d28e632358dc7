//! Per-controller parameter samplers: a Gaussian regressor proposes
//! continuous parameters from the pre-state features of the action's
//! objects, and a classifier screens proposals for demo-consistency.
//! Controllers without parameters or with too little data fall back to
//! trivial / uniform-in-bounds samplers.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{ControllerSig, Demonstration, DomainSpec, ObjectRef, State};
use crate::neural::loss::{bce, d_bce_dv};
use crate::neural::mlp::ForwardCache;
use crate::neural::train::Adam;
use crate::neural::{predicate_input, MlpParams};
use crate::runtime::{rng_at, stream};

const LOGVAR_MIN: f64 = -8.0;
const LOGVAR_MAX: f64 = 4.0;
/// Offsets the controller index into per-purpose counter namespaces so
/// sampler training never shares an RNG stream with classifier training.
const SAMPLER_CTR: u64 = 0x5A00;

/// Standard normal draw (Box-Muller, two uniforms per call).
pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uniform draw from a controller's parameter box.
pub fn uniform_box(ctrl: &ControllerSig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    ctrl.param_bounds
        .iter()
        .map(|(lo, hi)| if hi > lo { rng.gen_range(*lo..*hi) } else { *lo })
        .collect()
}

/// Multi-output net with tanh hidden layers and a linear head; the head
/// packs `d` means followed by `d` raw log-variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorNet {
    pub layer_sizes: Vec<usize>,
    /// Row-major `out x in` per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub input_norm: Option<(Vec<f64>, Vec<f64>)>,
}

impl RegressorNet {
    pub fn init(layer_sizes: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(layer_sizes.len() >= 2);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            weights.push(
                (0..n_in * n_out)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect(),
            );
            biases.push(vec![0.0; n_out]);
        }
        RegressorNet {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            input_norm: None,
        }
    }

    fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn out_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn normalize(&self, x: &[f64]) -> Vec<f64> {
        match &self.input_norm {
            None => x.to_vec(),
            Some((mean, std)) => x
                .iter()
                .zip(mean.iter().zip(std))
                .map(|(v, (m, s))| (v - m) / s.max(1e-9))
                .collect(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut acts = Vec::new();
        self.forward_cached(x, &mut acts)
    }

    /// Forward pass keeping per-layer activations for [`Self::backward`].
    pub fn forward_cached(&self, x: &[f64], acts: &mut Vec<Vec<f64>>) -> Vec<f64> {
        acts.clear();
        acts.push(self.normalize(x));
        for layer in 0..self.n_layers() {
            let (n_in, n_out) = (self.layer_sizes[layer], self.layer_sizes[layer + 1]);
            let input = acts[layer].clone();
            let mut out = vec![0.0; n_out];
            for o in 0..n_out {
                let mut z = self.biases[layer][o];
                for (wi, xi) in self.weights[layer][o * n_in..(o + 1) * n_in].iter().zip(&input) {
                    z += wi * xi;
                }
                out[o] = if layer + 1 == self.n_layers() { z } else { z.tanh() };
            }
            acts.push(out);
        }
        acts.last().unwrap().clone()
    }

    /// Accumulates gradients for an upstream derivative per output unit.
    pub fn backward(
        &self,
        acts: &[Vec<f64>],
        dl_dout: &[f64],
        gw: &mut [Vec<f64>],
        gb: &mut [Vec<f64>],
    ) {
        let mut delta = dl_dout.to_vec();
        for layer in (0..self.n_layers()).rev() {
            let (n_in, n_out) = (self.layer_sizes[layer], self.layer_sizes[layer + 1]);
            let input = &acts[layer];
            for o in 0..n_out {
                gb[layer][o] += delta[o];
                for (g, xi) in gw[layer][o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                    *g += delta[o] * xi;
                }
            }
            if layer == 0 {
                break;
            }
            let w = &self.weights[layer];
            let mut next = vec![0.0; n_in];
            for (i, nx) in next.iter_mut().enumerate() {
                let mut s = 0.0;
                for (o, d) in delta.iter().enumerate() {
                    s += w[o * n_in + i] * d;
                }
                let a = input[i];
                *nx = s * (1.0 - a * a);
            }
            delta = next;
        }
    }

    fn zero_grads(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        (
            self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        )
    }
}

/// Adam over the regressor's layer vectors.
struct AdamVecs {
    m: (Vec<Vec<f64>>, Vec<Vec<f64>>),
    v: (Vec<Vec<f64>>, Vec<Vec<f64>>),
    t: u64,
    lr: f64,
}

impl AdamVecs {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(net: &RegressorNet, lr: f64) -> Self {
        AdamVecs {
            m: net.zero_grads(),
            v: net.zero_grads(),
            t: 0,
            lr,
        }
    }

    fn step(&mut self, net: &mut RegressorNet, gw: &[Vec<f64>], gb: &[Vec<f64>]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t as i32);
        let c2 = 1.0 - Self::B2.powi(self.t as i32);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..g.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        };
        for layer in 0..net.weights.len() {
            update(
                &mut net.weights[layer],
                &gw[layer],
                &mut self.m.0[layer],
                &mut self.v.0[layer],
            );
            update(
                &mut net.biases[layer],
                &gb[layer],
                &mut self.m.1[layer],
                &mut self.v.1[layer],
            );
        }
    }
}

/// A controller's learned (or fallback) parameter distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Sampler {
    /// Controller takes no parameters.
    Trivial,
    /// Uniform over the parameter box; also the low-data fallback.
    UniformBox,
    Learned {
        generator: RegressorNet,
        screen: MlpParams,
    },
}

/// Anything that can propose parameters during refinement; learned models
/// and hand-written domain samplers both implement it.
pub trait ParamSampler: Send + Sync {
    fn sample(
        &self,
        ctrl: &ControllerSig,
        state: &State,
        objects: &[ObjectRef],
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64>;

    /// Estimated probability that `omega` is demo-consistent, when this
    /// sampler carries a screen.
    fn screen(
        &self,
        _ctrl: &ControllerSig,
        _state: &State,
        _objects: &[ObjectRef],
        _omega: &[f64],
    ) -> Option<f64> {
        None
    }
}

impl ParamSampler for Sampler {
    fn sample(
        &self,
        ctrl: &ControllerSig,
        state: &State,
        objects: &[ObjectRef],
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64> {
        match self {
            Sampler::Trivial => Vec::new(),
            Sampler::UniformBox => uniform_box(ctrl, rng),
            Sampler::Learned { generator, .. } => {
                let out = generator.forward(&predicate_input(state, objects));
                let d = out.len() / 2;
                (0..d)
                    .map(|k| {
                        let sigma = (out[d + k].clamp(LOGVAR_MIN, LOGVAR_MAX) / 2.0).exp();
                        let (lo, hi) = ctrl.param_bounds[k];
                        (out[k] + sigma * gaussian(rng)).clamp(lo, hi)
                    })
                    .collect()
            }
        }
    }

    fn screen(
        &self,
        _ctrl: &ControllerSig,
        state: &State,
        objects: &[ObjectRef],
        omega: &[f64],
    ) -> Option<f64> {
        match self {
            Sampler::Learned { screen, .. } => {
                let mut x = predicate_input(state, objects);
                x.extend_from_slice(omega);
                Some(screen.forward(&x))
            }
            _ => None,
        }
    }
}

/// Hand-written closed-form sampler used by oracle domain models.
#[derive(Clone)]
pub struct ClosedSampler(
    pub std::sync::Arc<dyn Fn(&State, &[ObjectRef], &mut ChaCha8Rng) -> Vec<f64> + Send + Sync>,
);

impl ParamSampler for ClosedSampler {
    fn sample(
        &self,
        _ctrl: &ControllerSig,
        state: &State,
        objects: &[ObjectRef],
        rng: &mut ChaCha8Rng,
    ) -> Vec<f64> {
        (self.0)(state, objects, rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    /// Uniform negatives per demonstrated parameter vector.
    pub negatives: usize,
    pub min_transitions: usize,
    pub max_transitions: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            hidden: 32,
            epochs: 200,
            // Sized like the classifier trainer: few samples per epoch, so
            // the step must carry the distance.
            lr: 5e-3,
            batch: 32,
            negatives: 3,
            min_transitions: 10,
            max_transitions: 400,
            seed: 0,
        }
    }
}

fn fit_normalization(xs: &[Vec<f64>]) -> Option<(Vec<f64>, Vec<f64>)> {
    if xs.is_empty() {
        return None;
    }
    let dim = xs[0].len();
    let n = xs.len() as f64;
    let mut mean = vec![0.0; dim];
    for x in xs {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for x in xs {
        for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let std = var.iter().map(|v| (v / n).sqrt().max(1e-6)).collect();
    Some((mean, std))
}

fn train_generator(
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    cfg: &SamplerConfig,
    ctrl_idx: usize,
) -> RegressorNet {
    let in_dim = xs[0].len();
    let d = ys[0].len();
    let mut rng = rng_at(cfg.seed, stream::NET_INIT, SAMPLER_CTR + ctrl_idx as u64);
    let mut net = RegressorNet::init(&[in_dim, cfg.hidden, 2 * d], &mut rng);
    net.input_norm = fit_normalization(xs);
    // Head starts at the marginal Gaussian fit of the targets.
    let n = ys.len() as f64;
    for k in 0..d {
        let mean = ys.iter().map(|y| y[k]).sum::<f64>() / n;
        let var = ys.iter().map(|y| (y[k] - mean) * (y[k] - mean)).sum::<f64>() / n;
        let head = net.biases.last_mut().unwrap();
        head[k] = mean;
        head[d + k] = (var + 1e-6).ln().clamp(LOGVAR_MIN, LOGVAR_MAX);
    }
    let (mut gw, mut gb) = net.zero_grads();
    let mut adam = AdamVecs::new(&net, cfg.lr);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut shuffle_rng = rng_at(cfg.seed, stream::NET_BATCH, SAMPLER_CTR + ctrl_idx as u64);
    let mut acts = Vec::new();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch) {
            gw.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            gb.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = 0.0));
            for &i in chunk {
                let out = net.forward_cached(&xs[i], &mut acts);
                let mut dl = vec![0.0; 2 * d];
                for k in 0..d {
                    let raw = out[d + k];
                    let lv = raw.clamp(LOGVAR_MIN, LOGVAR_MAX);
                    let var = lv.exp();
                    let diff = out[k] - ys[i][k];
                    // Gaussian negative log-likelihood per dimension.
                    dl[k] = diff / var;
                    dl[d + k] = if (LOGVAR_MIN..=LOGVAR_MAX).contains(&raw) {
                        0.5 * (1.0 - diff * diff / var)
                    } else {
                        0.0
                    };
                }
                dl.iter_mut().for_each(|g| *g /= chunk.len() as f64);
                net.backward(&acts, &dl, &mut gw, &mut gb);
            }
            adam.step(&mut net, &gw, &gb);
        }
    }
    net
}

fn train_screen(
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    ctrl: &ControllerSig,
    cfg: &SamplerConfig,
    ctrl_idx: usize,
) -> MlpParams {
    let d = ctrl.param_dim();
    let mut neg_rng = rng_at(cfg.seed, stream::SAMPLER_NEG, ctrl_idx as u64);
    let mut data: Vec<(Vec<f64>, f64)> = Vec::new();
    for (x, y) in xs.iter().zip(ys) {
        let mut pos = x.clone();
        pos.extend_from_slice(y);
        data.push((pos, 1.0));
        for _ in 0..cfg.negatives {
            let mut neg = x.clone();
            neg.extend(uniform_box(ctrl, &mut neg_rng));
            data.push((neg, 0.0));
        }
    }
    let in_dim = xs[0].len() + d;
    let mut rng = rng_at(cfg.seed, stream::NET_INIT, SAMPLER_CTR + 0x100 + ctrl_idx as u64);
    let mut params = MlpParams::init(&[in_dim, cfg.hidden, 1], &mut rng);
    params.input_norm = fit_normalization(&data.iter().map(|(x, _)| x.clone()).collect::<Vec<_>>());
    let mut adam = Adam::new(&params, cfg.lr);
    let mut grads = params.zero_grads();
    let mut cache = ForwardCache::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = rng_at(cfg.seed, stream::NET_BATCH, SAMPLER_CTR + 0x100 + ctrl_idx as u64);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(cfg.batch) {
            grads.zero();
            for &i in chunk {
                let (x, y) = &data[i];
                let v = params.forward_cached(x, &mut cache);
                params.backward(&cache, d_bce_dv(v, *y) / chunk.len() as f64, &mut grads);
            }
            adam.step(&mut params, &grads);
        }
    }
    params
}

/// Mean screen BCE over the labeled screen dataset; exposed for tests.
pub fn screen_loss(screen: &MlpParams, data: &[(Vec<f64>, f64)]) -> f64 {
    data.iter()
        .map(|(x, y)| bce(screen.forward(x), *y))
        .sum::<f64>()
        / data.len().max(1) as f64
}

/// Fits one controller's sampler from the training demonstrations.
pub fn learn_sampler(
    spec: &DomainSpec,
    controller_idx: usize,
    demos: &[&Demonstration],
    cfg: &SamplerConfig,
) -> Sampler {
    let ctrl = &spec.controllers[controller_idx];
    if ctrl.param_dim() == 0 {
        return Sampler::Trivial;
    }
    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<Vec<f64>> = Vec::new();
    'outer: for demo in demos {
        for (s, a, _) in demo.transitions() {
            if a.controller.name != ctrl.name {
                continue;
            }
            let Some(omega) = &a.omega else { continue };
            xs.push(predicate_input(s, &a.objects));
            ys.push(omega.clone());
            if xs.len() >= cfg.max_transitions {
                break 'outer;
            }
        }
    }
    if xs.len() < cfg.min_transitions {
        return Sampler::UniformBox;
    }
    let generator = train_generator(&xs, &ys, cfg, controller_idx);
    let screen = train_screen(&xs, &ys, ctrl, cfg, controller_idx);
    Sampler::Learned { generator, screen }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;
    use std::sync::Arc;

    fn linear_data(n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let xs: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / n as f64]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![2.0 * x[0] - 0.5]).collect();
        (xs, ys)
    }

    #[test]
    fn generator_learns_a_conditional_mean() {
        let (xs, ys) = linear_data(64);
        let cfg = SamplerConfig {
            epochs: 400,
            ..SamplerConfig::default()
        };
        let net = train_generator(&xs, &ys, &cfg, 0);
        for (x, y) in xs.iter().zip(&ys).step_by(9) {
            let out = net.forward(x);
            assert!(
                (out[0] - y[0]).abs() < 0.1,
                "mean at {:?}: {} vs {}",
                x,
                out[0],
                y[0]
            );
        }
        // Deterministic data: the fitted variance collapses well below the
        // marginal variance of the targets (~0.33).
        let mid = net.forward(&[0.5]);
        assert!(mid[1].exp() < 0.1, "variance stayed at {}", mid[1].exp());
    }

    #[test]
    fn sample_stays_inside_bounds_and_near_the_mean() {
        let (xs, ys) = linear_data(64);
        let cfg = SamplerConfig::default();
        let generator = train_generator(&xs, &ys, &cfg, 0);
        let ctrl = ControllerSig::new("C", &["item"], vec![(-2.0, 2.0)]);
        let screen = MlpParams::init(
            &[2, 4, 1],
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        let sampler = Sampler::Learned { generator, screen };
        let mut state = State::new();
        state.features.insert("a".into(), vec![0.5]);
        let objects = [ObjectRef::new("a", "item")];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut mean = 0.0;
        for _ in 0..200 {
            let w = sampler.sample(&ctrl, &state, &objects, &mut rng);
            assert!(w[0] >= -2.0 && w[0] <= 2.0);
            mean += w[0] / 200.0;
        }
        // Conditional mean at x = 0.5 is 0.5.
        assert!((mean - 0.5).abs() < 0.2, "sample mean {mean}");
    }

    #[test]
    fn screen_separates_demo_parameters_from_distant_ones() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 / 40.0]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|_| vec![5.0]).collect();
        let ctrl = ControllerSig::new("C", &["item"], vec![(-10.0, 10.0)]);
        let cfg = SamplerConfig {
            epochs: 300,
            ..SamplerConfig::default()
        };
        let screen = train_screen(&xs, &ys, &ctrl, &cfg, 0);
        let pos: f64 = screen.forward(&[0.5, 5.0]);
        let neg: f64 = screen.forward(&[0.5, -8.0]);
        assert!(pos > 0.5, "demo parameter scored {pos}");
        assert!(neg < 0.5, "distant parameter scored {neg}");
    }

    #[test]
    fn fallbacks_cover_no_params_and_low_data() {
        let spec = DomainSpec {
            name: "toy".into(),
            types: vec![crate::model::TypeDef::new("item", &["x"])],
            controllers: vec![
                Arc::new(ControllerSig::new("NoParams", &["item"], vec![])),
                Arc::new(ControllerSig::new("WithParams", &["item"], vec![(0.0, 1.0)])),
            ],
            scripted: vec![],
            allow_same_object: false,
        };
        let cfg = SamplerConfig::default();
        assert_eq!(learn_sampler(&spec, 0, &[], &cfg), Sampler::Trivial);
        assert_eq!(learn_sampler(&spec, 1, &[], &cfg), Sampler::UniformBox);
    }

    #[test]
    fn training_is_reproducible() {
        let (xs, ys) = linear_data(32);
        let cfg = SamplerConfig {
            epochs: 40,
            ..SamplerConfig::default()
        };
        let a = train_generator(&xs, &ys, &cfg, 3);
        let b = train_generator(&xs, &ys, &cfg, 3);
        assert_eq!(a, b);
    }
}
