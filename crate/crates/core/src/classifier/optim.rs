//! AdamW with decoupled weight decay. Biases are not decayed.

use super::{ClassifierError, Gradients, Mlp};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub first_moment: Gradients,
    pub second_moment: Gradients,
}

impl OptimizerState {
    pub fn new(params: &Mlp) -> Self {
        Self {
            step: 0,
            first_moment: Gradients::zeros_like(params),
            second_moment: Gradients::zeros_like(params),
        }
    }
}

/// One update:
///
/// ```text
/// m = b1 m + (1 - b1) g          v = b2 v + (1 - b2) g^2
/// p = p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p
/// ```
///
/// with bias-corrected `m_hat`, `v_hat`; the decay term uses the value of `p`
/// before the update and is skipped for biases.
pub fn adamw_step(
    params: &mut Mlp,
    grads: &Gradients,
    state: &mut OptimizerState,
    config: &AdamWConfig,
) -> Result<(), ClassifierError> {
    if !grads.matches(params) || !state.first_moment.matches(params) || !state.second_moment.matches(params) {
        return Err(ClassifierError::InvalidParams(
            "gradient or optimizer state shape differs from the parameters".into(),
        ));
    }
    state.step += 1;
    let t = state.step as f64;
    let correction1 = 1.0 - libm::pow(config.beta1, t);
    let correction2 = 1.0 - libm::pow(config.beta2, t);

    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64, decay: bool| {
        *m = config.beta1 * *m + (1.0 - config.beta1) * g;
        *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        let decay_term = if decay {
            config.learning_rate * config.weight_decay * *p
        } else {
            0.0
        };
        *p -= config.learning_rate * m_hat / (libm::sqrt(v_hat) + config.epsilon) + decay_term;
    };

    for (l, layer) in params.layers_mut().iter_mut().enumerate() {
        let g = &grads.layers[l];
        let m = &mut state.first_moment.layers[l];
        let v = &mut state.second_moment.layers[l];
        for i in 0..layer.weights.len() {
            update(
                &mut layer.weights[i],
                g.weights[i],
                &mut m.weights[i],
                &mut v.weights[i],
                true,
            );
        }
        for i in 0..layer.bias.len() {
            update(&mut layer.bias[i], g.bias[i], &mut m.bias[i], &mut v.bias[i], false);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Dense;
    use crate::rng::SeededRng;
    use alloc::vec;

    fn net() -> Mlp {
        Mlp::init(&[3, 2, 2, 1], &mut SeededRng::new(1, 0))
    }

    fn filled(params: &Mlp, value: f64) -> Gradients {
        let mut g = Gradients::zeros_like(params);
        for l in &mut g.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|x| *x = value);
        }
        g
    }

    #[test]
    fn zero_gradient_zero_decay_is_fixed_point() {
        let mut p = net();
        let before = p.clone();
        let mut state = OptimizerState::new(&p);
        let config = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        for _ in 0..3 {
            adamw_step(&mut p, &filled(&before, 0.0), &mut state, &config).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn zero_gradient_applies_pure_decay() {
        let mut p = net();
        let before = p.clone();
        let mut state = OptimizerState::new(&p);
        let config = AdamWConfig {
            learning_rate: 0.01,
            weight_decay: 0.1,
            ..AdamWConfig::default()
        };
        adamw_step(&mut p, &filled(&before, 0.0), &mut state, &config).unwrap();
        for (a, b) in p.layers().iter().zip(before.layers()) {
            for (x, y) in a.weights.iter().zip(&b.weights) {
                assert!((x - y * (1.0 - 0.01 * 0.1)).abs() < 1e-15);
            }
            assert_eq!(a.bias, b.bias);
        }
    }

    #[test]
    fn first_step_matches_closed_form() {
        // After one step m_hat = g and v_hat = g^2, so the Adam part of the
        // update is lr * g / (|g| + eps).
        let layer = |w: f64| Dense {
            inputs: 1,
            outputs: 1,
            weights: vec![w],
            bias: vec![0.25],
        };
        let mut p = Mlp::from_layers(vec![layer(0.5), layer(-1.5), layer(2.0)]).unwrap();
        let mut g = Gradients::zeros_like(&p);
        let gs = [0.3, -2.0, 1e-3];
        for (lg, gv) in g.layers.iter_mut().zip(gs) {
            lg.weights[0] = gv;
            lg.bias[0] = -gv;
        }
        let c = AdamWConfig::default();
        let mut state = OptimizerState::new(&p);
        let before = p.clone();
        adamw_step(&mut p, &g, &mut state, &c).unwrap();
        for ((after, prev), gv) in p.layers().iter().zip(before.layers()).zip(gs) {
            let w0 = prev.weights[0];
            let expect_w = w0 - c.learning_rate * gv / (gv.abs() + c.epsilon) - c.learning_rate * c.weight_decay * w0;
            let expect_b = prev.bias[0] - c.learning_rate * (-gv) / (gv.abs() + c.epsilon);
            assert!((after.weights[0] - expect_w).abs() < 1e-10);
            assert!((after.bias[0] - expect_b).abs() < 1e-10);
        }
        assert_eq!(state.step, 1);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = net();
        let other = Mlp::zeros(&[4, 2, 2, 1]);
        let mut state = OptimizerState::new(&p);
        assert!(adamw_step(
            &mut p,
            &Gradients::zeros_like(&other),
            &mut state,
            &AdamWConfig::default()
        )
        .is_err());
    }
}
