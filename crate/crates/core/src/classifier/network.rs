use alloc::vec;
use alloc::vec::Vec;

use super::{ClassifierError, Example};
use crate::dataset::Label;
use crate::rng::SeededRng;

/// Fully connected layer; `weights` is `outputs x inputs`, row-major.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform in ±sqrt(6 / (fan_in + fan_out)), zero bias.
    pub fn glorot(inputs: usize, outputs: usize, rng: &mut SeededRng) -> Self {
        let limit = libm::sqrt(6.0 / (inputs + outputs) as f64);
        let weights = (0..inputs * outputs).map(|_| rng.uniform(-limit, limit)).collect();
        Self {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (o, row) in out.iter_mut().zip(self.weights.chunks_exact(self.inputs)) {
            *o += row
                .iter()
                .zip(x)
                .filter(|(_, xi)| **xi != 0.0)
                .map(|(w, xi)| w * xi)
                .sum::<f64>();
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradients {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Per-parameter values shaped like an [`Mlp`]: gradients, or optimizer
/// moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    pub fn zeros_like(params: &Mlp) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGradients {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub(crate) fn matches(&self, params: &Mlp) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.bias.len() == l.bias.len())
    }
}

/// Network parameters. Hidden layers use ReLU, the output a logistic sigmoid.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mlp {
    layers: Vec<Dense>,
}

fn chain(dims: &[usize]) -> impl Iterator<Item = (usize, usize)> + '_ {
    dims.windows(2).map(|w| (w[0], w[1]))
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Largest f64 below 1.
const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

impl Mlp {
    /// All-zero network with the given layer widths, e.g. `[k, 64, 32, 1]`.
    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            layers: chain(dims).map(|(i, o)| Dense::zeros(i, o)).collect(),
        }
    }

    pub fn init(dims: &[usize], rng: &mut SeededRng) -> Self {
        Self {
            layers: chain(dims).map(|(i, o)| Dense::glorot(i, o, rng)).collect(),
        }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, ClassifierError> {
        let bad = |msg: &str| Err(ClassifierError::InvalidParams(msg.into()));
        if layers.is_empty() {
            return bad("no layers");
        }
        for l in &layers {
            if l.inputs == 0 || l.outputs == 0 {
                return bad("zero-width layer");
            }
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return bad("layer buffer sizes disagree with its dimensions");
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return bad("non-finite parameter");
            }
        }
        if layers.windows(2).any(|w| w[0].outputs != w[1].inputs) {
            return bad("layer dimensions do not chain");
        }
        if layers[layers.len() - 1].outputs != 1 {
            return bad("output layer must have one unit");
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ClassifierError> {
        if x.len() != self.input_dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Pre-activations of every layer; hidden ones are the values before ReLU.
    fn pre_activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&a);
            if i + 1 < self.layers.len() {
                a = z.iter().map(|v| v.max(0.0)).collect();
            }
            zs.push(z);
        }
        zs
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        self.check_input(x)?;
        let zs = self.pre_activations(x);
        Ok(zs[zs.len() - 1][0])
    }

    /// Anomaly probability, strictly inside (0, 1).
    pub fn forward(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        Ok(sigmoid(self.logit(x)?).clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP))
    }

    /// Exact gradient of the mean weighted BCE over `batch`.
    pub fn backward(&self, batch: &[Example<'_>], pos_weight: f64) -> Result<Gradients, ClassifierError> {
        self.loss_and_gradients(batch, pos_weight).map(|(_, g)| g)
    }

    /// Mean (clamped) batch loss at the current parameters plus its gradient.
    pub fn loss_and_gradients(
        &self,
        batch: &[Example<'_>],
        pos_weight: f64,
    ) -> Result<(f64, Gradients), ClassifierError> {
        if batch.is_empty() {
            return Err(ClassifierError::EmptyBatch);
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for &(x, label) in batch {
            self.check_input(x)?;
            let zs = self.pre_activations(x);
            let z_out = zs[zs.len() - 1][0];
            loss += super::weighted_bce(
                sigmoid(z_out).clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP),
                label,
                pos_weight,
            )?;

            // dl/dz at the output unit.
            let mut delta = vec![
                match label {
                    Label::Anomalous => -pos_weight * sigmoid(-z_out),
                    Label::Normal => sigmoid(z_out),
                } * scale,
            ];

            for l in (0..self.layers.len()).rev() {
                let layer = &self.layers[l];
                let g = &mut grads.layers[l];
                let relu_in = |i: usize| -> f64 {
                    if l == 0 {
                        x[i]
                    } else {
                        zs[l - 1][i].max(0.0)
                    }
                };
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    g.bias[o] += d;
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (i, gw) in row.iter_mut().enumerate() {
                        let a = relu_in(i);
                        if a != 0.0 {
                            *gw += d * a;
                        }
                    }
                }
                if l > 0 {
                    let mut prev = vec![0.0; layer.inputs];
                    for (o, d) in delta.iter().enumerate() {
                        if *d == 0.0 {
                            continue;
                        }
                        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += w * d;
                        }
                    }
                    for (p, z) in prev.iter_mut().zip(&zs[l - 1]) {
                        if *z <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        Ok((loss * scale, grads))
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_path() -> Mlp {
        let one = |i, o| Dense {
            inputs: i,
            outputs: o,
            weights: vec![1.0; i * o],
            bias: vec![0.0; o],
        };
        Mlp::from_layers(vec![one(1, 1), one(1, 1), one(1, 1)]).unwrap()
    }

    #[test]
    fn zero_network_outputs_half() {
        let net = Mlp::zeros(&[4, 3, 2, 1]);
        assert_eq!(net.forward(&[1.0, -2.0, 0.5, 9.0]).unwrap(), 0.5);
        assert_eq!(net.dims(), vec![4, 3, 2, 1]);
    }

    #[test]
    fn single_path_is_sigmoid_of_input() {
        let p = unit_path().forward(&[1.0]).unwrap();
        assert!((p - 0.731059).abs() < 1e-6);
        assert_eq!(p, 1.0 / (1.0 + libm::exp(-1.0)));
    }

    #[test]
    fn wrong_input_length() {
        let net = Mlp::zeros(&[3, 2, 2, 1]);
        assert_eq!(
            net.forward(&[1.0, 2.0]),
            Err(ClassifierError::DimensionMismatch { expected: 3, got: 2 })
        );
    }

    #[test]
    fn saturated_output_stays_open() {
        let mut net = unit_path();
        net.layers_mut()[2].bias[0] = 1e3;
        let p = net.forward(&[0.0]).unwrap();
        assert!(p < 1.0 && p > 0.0);
        net.layers_mut()[2].bias[0] = -1e3;
        let p = net.forward(&[0.0]).unwrap();
        assert!(p < 1.0 && p > 0.0);
    }

    #[test]
    fn zero_params_output_bias_gradient() {
        let net = Mlp::zeros(&[2, 3, 3, 1]);
        let x = [1.0, 0.5];
        let g = net.backward(&[(&x, Label::Normal)], 4.0).unwrap();
        assert_eq!(g.layers[2].bias[0], 0.5);
        let g = net.backward(&[(&x, Label::Anomalous)], 4.0).unwrap();
        assert_eq!(g.layers[2].bias[0], -4.0 * 0.5);
        // Zero downstream weights block everything below the output layer.
        assert!(g.layers[0].weights.iter().all(|w| *w == 0.0));
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let net = Mlp::init(&[3, 4, 4, 1], &mut SeededRng::new(5, 0));
        let x = [0.3, -0.2, 0.9];
        let one = net.backward(&[(&x, Label::Anomalous)], 2.0).unwrap();
        let many = net.backward(&[(&x[..], Label::Anomalous); 4], 2.0).unwrap();
        for (a, b) in one.layers.iter().zip(&many.layers) {
            for (u, v) in a.weights.iter().chain(&a.bias).zip(b.weights.iter().chain(&b.bias)) {
                assert!((u - v).abs() <= 1e-15 * u.abs().max(1.0));
            }
        }
    }

    #[test]
    fn from_layers_validates() {
        assert!(Mlp::from_layers(vec![]).is_err());
        assert!(Mlp::from_layers(vec![Dense::zeros(2, 3), Dense::zeros(2, 1)]).is_err());
        assert!(Mlp::from_layers(vec![Dense::zeros(2, 3), Dense::zeros(3, 2)]).is_err());
        let mut nan = Dense::zeros(2, 1);
        nan.bias[0] = f64::NAN;
        assert!(Mlp::from_layers(vec![nan]).is_err());
    }

    #[test]
    fn empty_batch() {
        assert_eq!(
            Mlp::zeros(&[1, 1, 1, 1]).backward(&[], 1.0),
            Err(ClassifierError::EmptyBatch)
        );
    }
}
