//! Transition losses supervising a candidate predicate classifier with a
//! lifted effect vector.
//!
//! For one transition with per-atom supervision `t` (see
//! [`crate::invent::ground_effect_vector`]):
//! * zero entries demand an *unchanged* prediction: per-index Jensen-
//!   Shannon divergence (natural log) between the Bernoulli outputs on the
//!   pre and post state, averaged over those indices;
//! * nonzero entries demand a *flip*: binary cross-entropy of the pre/post
//!   pair against ((1-d)/2, (1+d)/2), averaged over the pair and over those
//!   indices.
//!
//! The dataset loss is the mean over controllers (with data) of the mean
//! transition loss per controller.

use serde::{Deserialize, Serialize};

/// Probability clamp applied inside the logs.
pub const LOSS_EPS: f64 = 1e-7;

fn clamp(p: f64) -> f64 {
    p.clamp(LOSS_EPS, 1.0 - LOSS_EPS)
}

/// Jensen-Shannon divergence between Bernoulli(p) and Bernoulli(q),
/// natural log. Symmetric, zero iff p == q (after clamping), bounded by
/// ln 2.
pub fn bernoulli_js(p: f64, q: f64) -> f64 {
    let (p, q) = (clamp(p), clamp(q));
    let m = 0.5 * (p + q);
    let kl = |a: f64, b: f64| a * (a / b).ln() + (1.0 - a) * ((1.0 - a) / (1.0 - b)).ln();
    0.5 * (kl(p, m) + kl(q, m))
}

/// Partial derivative of [`bernoulli_js`] w.r.t. its first argument.
pub fn d_bernoulli_js_dp(p: f64, q: f64) -> f64 {
    let (p, q) = (clamp(p), clamp(q));
    let m = 0.5 * (p + q);
    0.5 * ((p * (1.0 - m)) / (m * (1.0 - p))).ln()
}

/// Binary cross-entropy of prediction `v` against target `t` in [0, 1].
pub fn bce(v: f64, t: f64) -> f64 {
    let v = clamp(v);
    -(t * v.ln() + (1.0 - t) * (1.0 - v).ln())
}

pub fn d_bce_dv(v: f64, t: f64) -> f64 {
    let v = clamp(v);
    -t / v + (1.0 - t) / (1.0 - v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionLoss {
    pub zero: f64,
    pub one: f64,
}

impl TransitionLoss {
    pub fn total(&self) -> f64 {
        self.zero + self.one
    }
}

/// Loss for one transition given classifier outputs on every atom in the
/// pre state (`v_pre`) and post state (`v_post`) plus supervision `t`.
pub fn transition_loss(v_pre: &[f64], v_post: &[f64], t: &[i8]) -> TransitionLoss {
    debug_assert_eq!(v_pre.len(), v_post.len());
    debug_assert_eq!(v_pre.len(), t.len());
    let mut zero_sum = 0.0;
    let mut zero_n = 0usize;
    let mut one_sum = 0.0;
    let mut one_n = 0usize;
    for p in 0..t.len() {
        if t[p] == 0 {
            zero_sum += bernoulli_js(v_pre[p], v_post[p]);
            zero_n += 1;
        } else {
            let d = t[p] as f64;
            let target_pre = (1.0 - d) / 2.0;
            let target_post = (1.0 + d) / 2.0;
            one_sum += 0.5 * (bce(v_pre[p], target_pre) + bce(v_post[p], target_post));
            one_n += 1;
        }
    }
    TransitionLoss {
        zero: if zero_n > 0 { zero_sum / zero_n as f64 } else { 0.0 },
        one: if one_n > 0 { one_sum / one_n as f64 } else { 0.0 },
    }
}

/// Upstream derivatives of [`transition_loss`]'s total w.r.t. each entry of
/// `v_pre` and `v_post`.
pub fn transition_loss_grad(v_pre: &[f64], v_post: &[f64], t: &[i8]) -> (Vec<f64>, Vec<f64>) {
    let zero_n = t.iter().filter(|d| **d == 0).count();
    let one_n = t.len() - zero_n;
    let mut g_pre = vec![0.0; t.len()];
    let mut g_post = vec![0.0; t.len()];
    for p in 0..t.len() {
        if t[p] == 0 {
            let w = 1.0 / zero_n as f64;
            g_pre[p] = w * d_bernoulli_js_dp(v_pre[p], v_post[p]);
            g_post[p] = w * d_bernoulli_js_dp(v_post[p], v_pre[p]);
        } else {
            let d = t[p] as f64;
            let w = 0.5 / one_n as f64;
            g_pre[p] = w * d_bce_dv(v_pre[p], (1.0 - d) / 2.0);
            g_post[p] = w * d_bce_dv(v_post[p], (1.0 + d) / 2.0);
        }
    }
    (g_pre, g_post)
}

/// Validation losses per controller for one trained classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Mean transition loss per controller; 0.0 where no transitions exist.
    pub per_action: Vec<f64>,
    /// Which controllers contributed at least one transition.
    pub has_data: Vec<bool>,
    /// Mean of `per_action` over controllers with data.
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_sums(sums: Vec<f64>, counts: Vec<usize>) -> Self {
        let per_action: Vec<f64> = sums
            .iter()
            .zip(&counts)
            .map(|(s, c)| if *c > 0 { s / *c as f64 } else { 0.0 })
            .collect();
        let has_data: Vec<bool> = counts.iter().map(|c| *c > 0).collect();
        let n = has_data.iter().filter(|b| **b).count();
        let total = if n > 0 {
            per_action
                .iter()
                .zip(&has_data)
                .filter(|(_, h)| **h)
                .map(|(v, _)| v)
                .sum::<f64>()
                / n as f64
        } else {
            0.0
        };
        LossBreakdown {
            per_action,
            has_data,
            total,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const LN2: f64 = std::f64::consts::LN_2;

    #[test]
    fn identical_predictions_give_zero_divergence() {
        let l = transition_loss(&[0.3, 0.8], &[0.3, 0.8], &[0, 0]);
        assert_abs_diff_eq!(l.zero, 0.0, epsilon = 1e-12);
        assert_eq!(l.one, 0.0);
    }

    #[test]
    fn opposite_certain_predictions_hit_the_ln2_ceiling() {
        let l = transition_loss(&[1.0], &[0.0], &[0]);
        assert_abs_diff_eq!(l.zero, LN2, epsilon = 1e-4);
        assert!(l.zero <= LN2);
    }

    #[test]
    fn empty_mask_contributes_nothing() {
        let l = transition_loss(&[0.9], &[0.1], &[1]);
        assert_eq!(l.zero, 0.0);
        assert!(l.one > 0.0);
    }

    #[test]
    fn exact_flip_has_zero_supervised_loss() {
        // d = +1 wants (pre, post) = (0, 1).
        let l = transition_loss(&[0.0], &[1.0], &[1]);
        assert_abs_diff_eq!(l.one, 0.0, epsilon = 1e-5);
        // d = -1 wants (1, 0).
        let l = transition_loss(&[1.0], &[0.0], &[-1]);
        assert_abs_diff_eq!(l.one, 0.0, epsilon = 1e-5);
    }

    #[test]
    fn uncommitted_flip_costs_ln2() {
        let l = transition_loss(&[0.5], &[0.5], &[1]);
        assert_abs_diff_eq!(l.one, LN2, epsilon = 1e-12);
    }

    /// Two chained transitions forcing contradictory labels on the shared
    /// middle state: no prediction for that state beats ln 2 jointly, i.e.
    /// ln 2 / 2 per transition on the conflicted terms.
    #[test]
    fn label_conflict_floor_is_ln2_over_two_per_transition() {
        let mut best = f64::INFINITY;
        for i in 1..1000 {
            let v_mid = i as f64 / 1000.0;
            // First transition's post target is 1, second's pre target is 0;
            // the non-shared states can be predicted perfectly.
            let first = transition_loss(&[0.0], &[v_mid], &[1]);
            let second = transition_loss(&[v_mid], &[1.0], &[1]);
            best = best.min(first.one + second.one);
        }
        assert!(best >= LN2 - 1e-9, "joint floor {best} fell below ln 2");
        assert_abs_diff_eq!(best, LN2, epsilon = 1e-3);
    }

    #[test]
    fn loss_breakdown_averages_only_controllers_with_data() {
        let b = LossBreakdown::from_sums(vec![1.0, 0.0, 3.0], vec![2, 0, 3]);
        assert_eq!(b.per_action, vec![0.5, 0.0, 1.0]);
        assert_eq!(b.has_data, vec![true, false, true]);
        assert_abs_diff_eq!(b.total, 0.75, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn js_is_symmetric_and_bounded(p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
            let a = bernoulli_js(p, q);
            let b = bernoulli_js(q, p);
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!(a >= 0.0);
            prop_assert!(a <= LN2);
        }

        /// Swapping both predictions and the sign of the target leaves the
        /// supervised term unchanged (flip symmetry).
        #[test]
        fn flip_symmetry(v1 in 0.01f64..0.99, v2 in 0.01f64..0.99) {
            let fwd = transition_loss(&[v1], &[v2], &[1]);
            let rev = transition_loss(&[v2], &[v1], &[-1]);
            prop_assert!((fwd.one - rev.one).abs() < 1e-12);
        }

        /// Analytic gradients of the per-transition loss match central
        /// finite differences.
        #[test]
        fn grad_matches_finite_difference(
            v1 in 0.05f64..0.95, v2 in 0.05f64..0.95,
            v3 in 0.05f64..0.95, v4 in 0.05f64..0.95,
        ) {
            let t = [0i8, 1];
            let (g_pre, g_post) = transition_loss_grad(&[v1, v3], &[v2, v4], &t);
            let h = 1e-6;
            let f = |a: f64, b: f64, c: f64, d: f64| transition_loss(&[a, c], &[b, d], &t).total();
            let fd1 = (f(v1 + h, v2, v3, v4) - f(v1 - h, v2, v3, v4)) / (2.0 * h);
            let fd2 = (f(v1, v2 + h, v3, v4) - f(v1, v2 - h, v3, v4)) / (2.0 * h);
            let fd3 = (f(v1, v2, v3 + h, v4) - f(v1, v2, v3 - h, v4)) / (2.0 * h);
            let fd4 = (f(v1, v2, v3, v4 + h) - f(v1, v2, v3, v4 - h)) / (2.0 * h);
            prop_assert!((fd1 - g_pre[0]).abs() < 1e-5 * (1.0 + fd1.abs()));
            prop_assert!((fd2 - g_post[0]).abs() < 1e-5 * (1.0 + fd2.abs()));
            prop_assert!((fd3 - g_pre[1]).abs() < 1e-5 * (1.0 + fd3.abs()));
            prop_assert!((fd4 - g_post[1]).abs() < 1e-5 * (1.0 + fd4.abs()));
        }
    }
}
