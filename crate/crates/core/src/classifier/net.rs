use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, PuclError, Result};
use crate::rng::Rng;

/// Decision threshold: a generalized state is classified infeasible iff
/// `zeta <= DECISION_THRESHOLD`.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    pub hidden: Vec<usize>,
    pub negative_slope: f64,
}

impl Default for NetSpec {
    fn default() -> Self {
        NetSpec {
            hidden: vec![32, 32],
            negative_slope: 0.01,
        }
    }
}

/// Dense layer, weights stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Layer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.weights.chunks_exact(self.inputs)) {
            *o = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        for (o, b) in out.iter_mut().zip(&self.biases) {
            *o += b;
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Feed-forward binary feasibility classifier: leaky-ReLU hidden layers and a
/// sigmoid output. Inputs pass through a fixed affine normalization
/// `(x - shift) * scale` before the first layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintNet {
    layers: Vec<Layer>,
    negative_slope: f64,
    input_shift: Vec<f64>,
    input_scale: Vec<f64>,
}

/// Intermediate values of one forward pass, reused by backpropagation.
#[derive(Debug, Clone, Default)]
pub(crate) struct ForwardCache {
    /// Layer inputs: index 0 holds the normalized input.
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activations per layer.
    pub pre: Vec<Vec<f64>>,
}

impl ConstraintNet {
    /// Glorot-uniform weights, zero biases.
    pub fn new(input_dim: usize, spec: &NetSpec, rng: &mut Rng) -> Result<Self> {
        if input_dim == 0 || spec.hidden.contains(&0) {
            return Err(PuclError::Config("layer widths must be positive".into()));
        }
        if !(spec.negative_slope.is_finite() && spec.negative_slope >= 0.0) {
            return Err(PuclError::Config(
                "negative slope must be finite and >= 0".into(),
            ));
        }
        let widths: Vec<usize> = std::iter::once(input_dim)
            .chain(spec.hidden.iter().copied())
            .chain(std::iter::once(1))
            .collect();
        let layers = widths
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let mut layer = Layer::zeros(w[0], w[1]);
                for v in &mut layer.weights {
                    *v = rng.random_range(-limit..=limit);
                }
                layer
            })
            .collect();
        Ok(ConstraintNet {
            layers,
            negative_slope: spec.negative_slope,
            input_shift: vec![0.0; input_dim],
            input_scale: vec![1.0; input_dim],
        })
    }

    pub fn from_layers(layers: Vec<Layer>, negative_slope: f64) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| PuclError::Config("network has no layers".into()))?;
        let input_dim = first.inputs;
        for w in layers.windows(2) {
            ensure_dim(w[0].outputs, w[1].inputs)?;
        }
        for l in &layers {
            ensure_dim(l.inputs * l.outputs, l.weights.len())?;
            ensure_dim(l.outputs, l.biases.len())?;
        }
        ensure_dim(1, layers.last().map(|l| l.outputs).unwrap_or(0))?;
        Ok(ConstraintNet {
            layers,
            negative_slope,
            input_shift: vec![0.0; input_dim],
            input_scale: vec![1.0; input_dim],
        })
    }

    pub fn set_input_normalization(&mut self, shift: Vec<f64>, scale: Vec<f64>) -> Result<()> {
        ensure_dim(self.input_dim(), shift.len())?;
        ensure_dim(self.input_dim(), scale.len())?;
        if shift.iter().chain(&scale).any(|v| !v.is_finite()) || scale.iter().any(|&s| s <= 0.0) {
            return Err(PuclError::Config(
                "input normalization must be finite with positive scale".into(),
            ));
        }
        self.input_shift = shift;
        self.input_scale = scale;
        Ok(())
    }

    pub fn input_shift(&self) -> &[f64] {
        &self.input_shift
    }

    pub fn input_scale(&self) -> &[f64] {
        &self.input_scale
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn negative_slope(&self) -> f64 {
        self.negative_slope
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// All parameters, layer by layer: weights row-major then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_parameters(&mut self, params: &[f64]) -> Result<()> {
        ensure_dim(self.parameter_count(), params.len())?;
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    #[inline]
    fn activate(&self, z: f64) -> f64 {
        if z >= 0.0 {
            z
        } else {
            self.negative_slope * z
        }
    }

    /// Derivative of the hidden activation; the kink uses the positive-side slope.
    #[inline]
    pub(crate) fn activation_slope(&self, z: f64) -> f64 {
        if z >= 0.0 {
            1.0
        } else {
            self.negative_slope
        }
    }

    pub(crate) fn forward_cached(&self, x: &[f64], cache: &mut ForwardCache) -> f64 {
        let n = self.layers.len();
        cache.inputs.resize(n, Vec::new());
        cache.pre.resize(n, Vec::new());
        let input = &mut cache.inputs[0];
        input.clear();
        input.extend(
            x.iter()
                .zip(&self.input_shift)
                .zip(&self.input_scale)
                .map(|((v, s), c)| (v - s) * c),
        );
        for (i, layer) in self.layers.iter().enumerate() {
            let mut pre = std::mem::take(&mut cache.pre[i]);
            pre.resize(layer.outputs, 0.0);
            layer.forward_into(&cache.inputs[i], &mut pre);
            if i + 1 < n {
                let next = &mut cache.inputs[i + 1];
                next.clear();
                next.extend(pre.iter().map(|&z| self.activate(z)));
            }
            cache.pre[i] = pre;
        }
        cache.pre[n - 1][0]
    }

    /// Output pre-activation.
    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        ensure_dim(self.input_dim(), x.len())?;
        let mut cache = ForwardCache::default();
        Ok(self.forward_cached(x, &mut cache))
    }

    /// Feasibility score in (0, 1).
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    pub fn is_infeasible(&self, x: &[f64]) -> Result<bool> {
        Ok(self.predict(x)? <= DECISION_THRESHOLD)
    }

    /// Gradient of the logit with respect to the raw input, given a filled cache.
    pub(crate) fn logit_input_gradient(&self, cache: &ForwardCache) -> Vec<f64> {
        let n = self.layers.len();
        let mut delta = vec![1.0];
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            let mut prev = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += w * d;
                }
            }
            if i > 0 {
                for (p, &z) in prev.iter_mut().zip(&cache.pre[i - 1]) {
                    *p *= self.activation_slope(z);
                }
            }
            delta = prev;
        }
        for (d, c) in delta.iter_mut().zip(&self.input_scale) {
            *d *= c;
        }
        delta
    }

    /// Output and its exact gradient with respect to the input.
    pub fn predict_with_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        ensure_dim(self.input_dim(), x.len())?;
        let mut cache = ForwardCache::default();
        let z = self.forward_cached(x, &mut cache);
        let p = sigmoid(z);
        let dp = p * (1.0 - p);
        let mut g = self.logit_input_gradient(&cache);
        for v in &mut g {
            *v *= dp;
        }
        Ok((p, g))
    }

    /// Logit and its gradient with respect to the input. Unlike the output
    /// gradient this does not vanish where the sigmoid saturates.
    pub fn logit_with_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        ensure_dim(self.input_dim(), x.len())?;
        let mut cache = ForwardCache::default();
        let z = self.forward_cached(x, &mut cache);
        Ok((z, self.logit_input_gradient(&cache)))
    }

    pub fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict_with_gradient(x)?.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Seeds, Stream};

    fn random_net(input: usize, seed: u64) -> ConstraintNet {
        let mut rng = Seeds::new(seed).stream(Stream::Init);
        let mut net = ConstraintNet::new(input, &NetSpec::default(), &mut rng).unwrap();
        // Non-zero biases so the test also exercises them.
        let mut p = net.parameters();
        for (i, v) in p.iter_mut().enumerate() {
            if i % 7 == 0 {
                *v += 0.05;
            }
        }
        net.set_parameters(&p).unwrap();
        net
    }

    #[test]
    fn zero_output_layer_gives_half_and_zero_gradient() {
        let mut net = random_net(3, 1);
        let last = net.layers_mut().last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        last.biases.iter_mut().for_each(|b| *b = 0.0);
        for x in [[0.0, 0.0, 0.0], [1.0, -2.0, 3.0], [100.0, 5.0, -7.0]] {
            assert_eq!(net.predict(&x).unwrap(), 0.5);
            assert!(net.input_gradient(&x).unwrap().iter().all(|&g| g == 0.0));
        }
    }

    #[test]
    fn threshold_semantics() {
        let mut net = random_net(1, 2);
        let last = net.layers_mut().last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        for (bias, infeasible) in [(-0.04, true), (0.04, false), (0.0, true)] {
            net.layers_mut().last_mut().unwrap().biases[0] = bias;
            assert_eq!(net.is_infeasible(&[0.3]).unwrap(), infeasible, "{bias}");
        }
    }

    #[test]
    fn forward_matches_scalar_hand_evaluation() {
        let mut net = random_net(2, 3);
        net.set_input_normalization(vec![0.3, -0.1], vec![2.0, 0.5])
            .unwrap();
        let x = [0.7, -1.3];
        // Independent scalar evaluation of the layer composition.
        let mut h: Vec<f64> = vec![(x[0] - 0.3) * 2.0, (x[1] + 0.1) * 0.5];
        let n = net.layers().len();
        for (li, l) in net.layers().iter().enumerate() {
            let mut out = Vec::new();
            for o in 0..l.outputs {
                let mut acc = l.biases[o];
                for (i, hi) in h.iter().enumerate() {
                    acc += l.weights[o * l.inputs + i] * hi;
                }
                if li + 1 < n {
                    acc = if acc >= 0.0 { acc } else { 0.01 * acc };
                }
                out.push(acc);
            }
            h = out;
        }
        let expected = 1.0 / (1.0 + (-h[0]).exp());
        let got = net.predict(&x).unwrap();
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
    }

    #[test]
    fn output_strictly_inside_unit_interval() {
        let net = random_net(2, 4);
        for x in [[0.0, 0.0], [3.0, -4.0], [-1e3, 1e3]] {
            let p = net.predict(&x).unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
        assert!(sigmoid(30.0) < 1.0 && sigmoid(-30.0) > 0.0);
    }

    #[test]
    fn input_gradient_matches_central_differences() {
        for seed in 0..5 {
            let mut net = random_net(3, seed);
            net.set_input_normalization(vec![0.1, 0.2, 0.3], vec![1.5, 0.7, 2.0])
                .unwrap();
            let x = [0.3 + seed as f64 * 0.1, -0.4, 0.9];
            let g = net.input_gradient(&x).unwrap();
            for d in 0..3 {
                let h = 1e-5;
                let mut xp = x;
                let mut xm = x;
                xp[d] += h;
                xm[d] -= h;
                let fd = (net.predict(&xp).unwrap() - net.predict(&xm).unwrap()) / (2.0 * h);
                let rel = (g[d] - fd).abs() / fd.abs().max(1e-8);
                assert!(
                    rel < 1e-4 || (g[d] - fd).abs() < 1e-10,
                    "seed {seed} dim {d}: {} vs {fd}",
                    g[d]
                );
            }
        }
    }

    #[test]
    fn kink_uses_positive_side_slope() {
        let layers = vec![
            Layer {
                inputs: 1,
                outputs: 1,
                weights: vec![1.0],
                biases: vec![0.0],
            },
            Layer {
                inputs: 1,
                outputs: 1,
                weights: vec![2.0],
                biases: vec![0.0],
            },
        ];
        let net = ConstraintNet::from_layers(layers, 0.01).unwrap();
        // At x = 0 the hidden pre-activation is exactly 0: slope 1 applies.
        let g = net.input_gradient(&[0.0]).unwrap();
        assert!((g[0] - 0.25 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn monotone_1d_gradient_sign_constant_between_kinks() {
        // Collect all kink locations of the first layer; between consecutive
        // first-layer kinks with a single hidden layer the sign is constant.
        let layers = vec![
            Layer {
                inputs: 1,
                outputs: 3,
                weights: vec![1.0, 2.0, -1.0],
                biases: vec![0.0, -1.0, 2.0],
            },
            Layer {
                inputs: 3,
                outputs: 1,
                weights: vec![1.0, 0.5, -0.3],
                biases: vec![0.1],
            },
        ];
        let mono = ConstraintNet::from_layers(layers, 0.01).unwrap();
        // Kinks at x = 0, 0.5, 2; test the interval (0.5, 2).
        let signs: Vec<bool> = (1..50)
            .map(|i| 0.5 + 1.5 * i as f64 / 50.0)
            .map(|x| mono.input_gradient(&[x]).unwrap()[0] > 0.0)
            .collect();
        assert!(signs.iter().all(|&s| s == signs[0]));
    }

    #[test]
    fn predict_rejects_wrong_dimension() {
        let net = random_net(2, 0);
        assert!(matches!(
            net.predict(&[1.0]),
            Err(PuclError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn forward_is_pure() {
        let net = random_net(4, 9);
        let x = [0.1, 0.2, 0.3, 0.4];
        let a = net.predict(&x).unwrap();
        let b = net.predict(&x).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
