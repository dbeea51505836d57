//! Adam and the softmax parameterization of simplex weights.

use crate::error::{Error, Result};
use crate::types::UserWeights;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..Default::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    config: AdamConfig,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        AdamState {
            config,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Applies one update in place. On error neither `params` nor the state change.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        Error::check_dim(self.m.len(), params.len())?;
        Error::check_dim(self.m.len(), grads.len())?;
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {i} = {}", grads[i])));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Unconstrained logits whose softmax is a point on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexParam {
    pub logits: Vec<f64>,
}

impl SimplexParam {
    pub fn zeros(rank: usize) -> Self {
        SimplexParam {
            logits: vec![0.0; rank],
        }
    }
}

/// Max-shifted softmax into `out`.
#[inline]
pub(crate) fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    out
}

pub fn weights_from_logits(p: &SimplexParam) -> UserWeights {
    UserWeights::from_softmax_unchecked(softmax(&p.logits))
}

/// Pulls a gradient with respect to the weights back through the softmax:
/// `w * (g - (w . g))`.
///
/// Evaluated as `w_i * sum_j w_j (g_i - g_j)`, which is exactly zero when
/// every entry of `g` is equal.
pub fn chain_grad_logits(grad_w: &[f64], w: &UserWeights) -> Result<Vec<f64>> {
    Error::check_dim(w.len(), grad_w.len())?;
    let mut out = vec![0.0; grad_w.len()];
    chain_grad_into(grad_w, w.as_slice(), &mut out);
    Ok(out)
}

#[inline]
pub(crate) fn chain_grad_into(grad_w: &[f64], w: &[f64], out: &mut [f64]) {
    for ((o, wi), gi) in out.iter_mut().zip(w).zip(grad_w) {
        let centered: f64 = w.iter().zip(grad_w).map(|(wj, gj)| wj * (gi - gj)).sum();
        *o = wi * centered;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;
    use proptest::prelude::*;

    /// Textbook Adam, kept deliberately naive.
    fn reference_adam(x0: &[f64], grads: &[Vec<f64>], lr: f64) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let mut x = x0.to_vec();
        let mut m = vec![0.0; x.len()];
        let mut v = vec![0.0; x.len()];
        for (t, g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            for i in 0..x.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                x[i] -= lr * (m[i] / (1.0 - b1.powi(t))) / ((v[i] / (1.0 - b2.powi(t))).sqrt() + eps);
            }
        }
        x
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = AdamState::new(AdamConfig::with_lr(0.5), 3);
        let mut p = vec![1.0, -2.0, 3.0];
        for _ in 0..10 {
            s.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(s.steps(), 10);
    }

    #[test]
    fn matches_reference_adam() {
        let mut rng = Seed(4).rng();
        let x0: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
        let grads: Vec<Vec<f64>> = (0..25).map(|_| (0..4).map(|_| rng.normal()).collect()).collect();
        let mut s = AdamState::new(AdamConfig::with_lr(0.1), 4);
        let mut p = x0.clone();
        s.step(&mut p, &grads[0]).unwrap();
        let r1 = reference_adam(&x0, &grads[..1], 0.1);
        for (a, b) in p.iter().zip(&r1) {
            assert!((a - b).abs() <= 1e-12);
        }
        for g in &grads[1..] {
            s.step(&mut p, g).unwrap();
        }
        let r = reference_adam(&x0, &grads, 0.1);
        for (a, b) in p.iter().zip(&r) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat / sqrt(v_hat) = g / |g| on the first step.
        let mut s = AdamState::new(AdamConfig::with_lr(0.5), 1);
        let mut p = vec![0.0];
        s.step(&mut p, &[3.0]).unwrap();
        assert!((p[0] + 0.5 * 3.0 / (3.0 + 1e-8)).abs() < 1e-12);
    }

    #[test]
    fn minimizes_quadratic() {
        let mut s = AdamState::new(AdamConfig::with_lr(0.1), 1);
        let mut x = vec![5.0];
        for _ in 0..2000 {
            let g = [2.0 * x[0]];
            s.step(&mut x, &g).unwrap();
        }
        assert!(x[0].abs() < 1e-3, "x = {}", x[0]);
    }

    #[test]
    fn non_finite_gradient_is_rejected_without_side_effects() {
        let mut s = AdamState::new(AdamConfig::with_lr(0.1), 2);
        let mut p = vec![1.0, 1.0];
        s.step(&mut p, &[0.5, 0.5]).unwrap();
        let before = (p.clone(), s.m.clone(), s.v.clone(), s.steps());
        assert!(s.step(&mut p, &[f64::NAN, 0.0]).is_err());
        assert_eq!((p, s.m.clone(), s.v.clone(), s.steps()), before);
        assert!(s.step(&mut [0.0], &[0.0]).is_err());
    }

    #[test]
    fn softmax_cases() {
        let w = weights_from_logits(&SimplexParam::zeros(4));
        assert_eq!(w.as_slice(), &[0.25; 4]);
        let w = weights_from_logits(&SimplexParam {
            logits: vec![1000.0, 0.0],
        });
        assert!((w.as_slice()[0] - 1.0).abs() < 1e-15);
        assert!(w.as_slice()[1] >= 0.0 && w.as_slice()[1] < 1e-300);
    }

    #[test]
    fn chain_rule_constant_gradient_vanishes() {
        let w = UserWeights::new(vec![0.1, 0.2, 0.7]).unwrap();
        let g = chain_grad_logits(&[2.5, 2.5, 2.5], &w).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
        assert!(chain_grad_logits(&[1.0], &w).is_err());
    }

    #[test]
    fn chain_rule_near_one_hot_is_tangent() {
        let w = weights_from_logits(&SimplexParam {
            logits: vec![12.0, 0.0, -1.0],
        });
        let g = chain_grad_logits(&[5.0, 0.0, 0.0], &w).unwrap();
        assert!(g.iter().sum::<f64>().abs() <= 1e-12);
    }

    #[test]
    fn chain_rule_matches_finite_differences() {
        let mut rng = Seed(77).rng();
        let logits: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
        let c: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
        // f(logits) = sum_k c_k softmax_k(logits); df/dw = c.
        let f = |l: &[f64]| -> f64 {
            let e: Vec<f64> = l.iter().map(|x| x.exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().zip(&c).map(|(a, b)| a / s * b).sum()
        };
        let w = weights_from_logits(&SimplexParam { logits: logits.clone() });
        let g = chain_grad_logits(&c, &w).unwrap();
        let h = 1e-6;
        for i in 0..5 {
            let mut p = logits.clone();
            p[i] += h;
            let mut q = logits.clone();
            q[i] -= h;
            let fd = (f(&p) - f(&q)) / (2.0 * h);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-4);
            assert!(rel <= 1e-5, "{i}: {fd} vs {}", g[i]);
        }
    }

    proptest! {
        #[test]
        fn softmax_is_shift_invariant(logits in prop::collection::vec(-50.0f64..50.0, 1..8), c in -100.0f64..100.0) {
            let a = softmax(&logits);
            let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
            let b = softmax(&shifted);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn adam_on_logits_keeps_weights_on_simplex(
            seed in any::<u64>(),
            rank in 1usize..8,
            steps in 1usize..40,
        ) {
            let mut rng = Seed(seed).rng();
            let mut p = SimplexParam::zeros(rank);
            let mut s = AdamState::new(AdamConfig::with_lr(0.5), rank);
            for _ in 0..steps {
                let g: Vec<f64> = (0..rank).map(|_| 50.0 * rng.normal()).collect();
                s.step(&mut p.logits, &g).unwrap();
                let w = weights_from_logits(&p);
                prop_assert!(w.simplex_violation() <= 1e-9);
            }
        }

        #[test]
        fn chained_gradient_sums_to_zero(
            logits in prop::collection::vec(-30.0f64..30.0, 1..10),
            seed in any::<u64>(),
        ) {
            let mut rng = Seed(seed).rng();
            let g: Vec<f64> = logits.iter().map(|_| 10.0 * rng.normal()).collect();
            let w = weights_from_logits(&SimplexParam { logits });
            let c = chain_grad_logits(&g, &w).unwrap();
            prop_assert!(c.iter().sum::<f64>().abs() <= 1e-10);
        }
    }
}
