//! Analytic gradients against central finite differences of the loss.

use kwvad_core::classifier::{Example, Gradients, Mlp};
use kwvad_core::dataset::Label;
use kwvad_core::rng::SeededRng;

const DELTA: f64 = 1e-5;
/// Relative error is |a - n| / max(|a|, |n|, FLOOR); the floor keeps
/// near-zero gradients (dead ReLUs) from dividing round-off by zero.
const FLOOR: f64 = 1e-6;

/// Mean weighted BCE written out directly from the forward probability.
fn loss(net: &Mlp, batch: &[Example<'_>], pos_weight: f64) -> f64 {
    let total: f64 = batch
        .iter()
        .map(|&(x, y)| {
            let p = net.forward(x).unwrap();
            match y {
                Label::Anomalous => -pos_weight * p.ln(),
                Label::Normal => -(1.0 - p).ln(),
            }
        })
        .sum();
    total / batch.len() as f64
}

fn perturbed(net: &Mlp, layer: usize, bias: bool, index: usize, delta: f64) -> Mlp {
    let mut layers = net.layers().to_vec();
    if bias {
        layers[layer].bias[index] += delta;
    } else {
        layers[layer].weights[index] += delta;
    }
    Mlp::from_layers(layers).unwrap()
}

fn max_relative_error(net: &Mlp, batch: &[Example<'_>], pos_weight: f64) -> f64 {
    let analytic: Gradients = net.backward(batch, pos_weight).unwrap();
    let mut worst = 0.0f64;
    for (l, layer) in net.layers().iter().enumerate() {
        for bias in [false, true] {
            let n = if bias { layer.bias.len() } else { layer.weights.len() };
            for i in 0..n {
                let plus = loss(&perturbed(net, l, bias, i, DELTA), batch, pos_weight);
                let minus = loss(&perturbed(net, l, bias, i, -DELTA), batch, pos_weight);
                let numeric = (plus - minus) / (2.0 * DELTA);
                let a = if bias {
                    analytic.layers[l].bias[i]
                } else {
                    analytic.layers[l].weights[i]
                };
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

#[test]
fn random_small_networks() {
    let mut rng = SeededRng::new(2024, 0);
    for case in 0..100 {
        let k = 1 + rng.below(8) as usize;
        let h1 = 1 + rng.below(8) as usize;
        let h2 = 1 + rng.below(8) as usize;
        // Random biases too: zero biases behind a dead unit put the next
        // pre-activation exactly on the ReLU kink.
        let mut layers = Mlp::init(&[k, h1, h2, 1], &mut rng).layers().to_vec();
        for layer in &mut layers {
            layer.bias.iter_mut().for_each(|b| *b = rng.uniform(-0.5, 0.5));
        }
        let net = Mlp::from_layers(layers).unwrap();
        let inputs: Vec<Vec<f64>> = (0..1 + rng.below(6))
            .map(|_| (0..k).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let batch: Vec<Example<'_>> = inputs
            .iter()
            .map(|x| {
                (
                    x.as_slice(),
                    if rng.below(2) == 0 {
                        Label::Normal
                    } else {
                        Label::Anomalous
                    },
                )
            })
            .collect();
        let pos_weight = rng.uniform(0.5, 5.0);
        let err = max_relative_error(&net, &batch, pos_weight);
        assert!(err < 1e-4, "case {case}: dims {k}-{h1}-{h2}, relative error {err}");
    }
}
