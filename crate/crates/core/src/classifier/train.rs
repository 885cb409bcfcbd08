use serde::{Deserialize, Serialize};

use super::net::{sigmoid, ConstraintNet, ForwardCache};
use crate::error::{ensure_dim, PuclError, Result};
use crate::types::GeneralizedState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    GradientDescent,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` trains full-batch.
    #[serde(default)]
    pub batch_size: Option<usize>,
    pub clip_epsilon: f64,
    pub optimizer: Optimizer,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            learning_rate: 5e-3,
            epochs: 200,
            batch_size: None,
            clip_epsilon: 1e-7,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(PuclError::Config(
                "learning rate must be finite and >= 0".into(),
            ));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon <= 1e-3) {
            return Err(PuclError::Config(
                "clip epsilon must lie in (0, 1e-3]".into(),
            ));
        }
        if self.batch_size == Some(0) {
            return Err(PuclError::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Binary cross-entropy of the net on feasible (label 1) and infeasible
/// (label 0) sets, averaged over all points, with probabilities clipped to
/// `[eps, 1 - eps]`.
pub fn bce_loss(
    net: &ConstraintNet,
    feasible: &[GeneralizedState],
    infeasible: &[GeneralizedState],
    eps: f64,
) -> Result<f64> {
    let n = feasible.len() + infeasible.len();
    if n == 0 {
        return Err(PuclError::EmptyDataset("both training sets are empty"));
    }
    let mut cache = ForwardCache::default();
    let mut total = 0.0;
    for (set, label) in [(feasible, true), (infeasible, false)] {
        for x in set {
            ensure_dim(net.input_dim(), x.dim())?;
            let p = sigmoid(net.forward_cached(x, &mut cache)).clamp(eps, 1.0 - eps);
            total -= if label { p.ln() } else { (1.0 - p).ln() };
        }
    }
    Ok(total / n as f64)
}

/// Loss and its exact gradient with respect to `net.parameters()`.
pub fn loss_and_gradient(
    net: &ConstraintNet,
    feasible: &[GeneralizedState],
    infeasible: &[GeneralizedState],
    eps: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = feasible.len() + infeasible.len();
    if n == 0 {
        return Err(PuclError::EmptyDataset("both training sets are empty"));
    }
    let inv_n = 1.0 / n as f64;
    let layers = net.layers();
    let mut grad = vec![0.0; net.parameter_count()];
    let offsets: Vec<usize> = layers
        .iter()
        .scan(0, |acc, l| {
            let o = *acc;
            *acc += l.weights.len() + l.biases.len();
            Some(o)
        })
        .collect();
    let mut cache = ForwardCache::default();
    let mut total = 0.0;
    let mut delta: Vec<f64> = Vec::new();
    let mut prev: Vec<f64> = Vec::new();
    for (set, label) in [(feasible, true), (infeasible, false)] {
        for x in set {
            ensure_dim(net.input_dim(), x.dim())?;
            let z = net.forward_cached(x, &mut cache);
            let p = sigmoid(z);
            let pc = p.clamp(eps, 1.0 - eps);
            total -= if label { pc.ln() } else { (1.0 - pc).ln() };
            // The clip has zero derivative outside the open interval.
            if !(p > eps && p < 1.0 - eps) {
                continue;
            }
            let target = if label { 1.0 } else { 0.0 };
            delta.clear();
            delta.push((p - target) * inv_n);
            for i in (0..layers.len()).rev() {
                let layer = &layers[i];
                let input = &cache.inputs[i];
                let off = offsets[i];
                let (gw, gb) = grad[off..off + layer.weights.len() + layer.biases.len()]
                    .split_at_mut(layer.weights.len());
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    for (g, v) in gw[o * layer.inputs..(o + 1) * layer.inputs]
                        .iter_mut()
                        .zip(input)
                    {
                        *g += d * v;
                    }
                }
                if i == 0 {
                    break;
                }
                prev.clear();
                prev.resize(layer.inputs, 0.0);
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                for (p, &zz) in prev.iter_mut().zip(&cache.pre[i - 1]) {
                    *p *= net.activation_slope(zz);
                }
                std::mem::swap(&mut delta, &mut prev);
            }
        }
    }
    Ok((total * inv_n, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Loss of every accepted iterate, starting with the initial loss.
    pub losses: Vec<f64>,
    pub final_learning_rate: f64,
    pub rejected_steps: usize,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        *self
            .losses
            .last()
            .expect("report always holds the initial loss")
    }
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const MIN_LEARNING_RATE: f64 = 1e-12;

fn step(
    params: &[f64],
    grad: &[f64],
    lr: f64,
    optimizer: Optimizer,
    adam: &mut AdamState,
) -> Vec<f64> {
    match optimizer {
        Optimizer::GradientDescent => params.iter().zip(grad).map(|(p, g)| p - lr * g).collect(),
        Optimizer::Adam => {
            adam.t += 1;
            let bc1 = 1.0 - BETA1.powi(adam.t);
            let bc2 = 1.0 - BETA2.powi(adam.t);
            params
                .iter()
                .zip(grad)
                .zip(adam.m.iter_mut().zip(adam.v.iter_mut()))
                .map(|((p, g), (m, v))| {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    p - lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS)
                })
                .collect()
        }
    }
}

/// Trains the net on the cross-entropy objective. A step that increases the
/// loss is rejected (parameters and optimizer state restored) and the
/// learning rate halved, so the accepted loss sequence is non-increasing.
/// Training ends early once the rate falls below 1e-12; only a non-finite
/// loss is reported as divergence.
///
/// With `batch_size` set, batches are taken in order from the concatenation
/// of the two sets and the backoff rule applies per batch.
pub fn train(
    net: &mut ConstraintNet,
    feasible: &[GeneralizedState],
    infeasible: &[GeneralizedState],
    spec: &TrainSpec,
) -> Result<TrainReport> {
    spec.validate()?;
    let eps = spec.clip_epsilon;
    let (mut loss, mut grad) = loss_and_gradient(net, feasible, infeasible, eps)?;
    if !loss.is_finite() {
        return Err(PuclError::Divergence { epoch: 0, loss });
    }
    let mut report = TrainReport {
        losses: vec![loss],
        final_learning_rate: spec.learning_rate,
        rejected_steps: 0,
    };
    if spec.learning_rate == 0.0 || spec.epochs == 0 {
        return Ok(report);
    }
    let mut lr = spec.learning_rate;
    let mut params = net.parameters();
    let mut adam = AdamState {
        m: vec![0.0; params.len()],
        v: vec![0.0; params.len()],
        t: 0,
    };

    if let Some(batch) = spec.batch_size {
        let all: Vec<(&GeneralizedState, bool)> = feasible
            .iter()
            .map(|x| (x, true))
            .chain(infeasible.iter().map(|x| (x, false)))
            .collect();
        for epoch in 1..=spec.epochs {
            for chunk in all.chunks(batch) {
                let f: Vec<GeneralizedState> =
                    chunk.iter().filter(|c| c.1).map(|c| c.0.clone()).collect();
                let i: Vec<GeneralizedState> =
                    chunk.iter().filter(|c| !c.1).map(|c| c.0.clone()).collect();
                let (bl, bg) = loss_and_gradient(net, &f, &i, eps)?;
                let m_saved = (adam.m.clone(), adam.v.clone(), adam.t);
                let candidate = step(&params, &bg, lr, spec.optimizer, &mut adam);
                net.set_parameters(&candidate)?;
                let after = bce_loss(net, &f, &i, eps)?;
                if !after.is_finite() || after > bl {
                    net.set_parameters(&params)?;
                    (adam.m, adam.v, adam.t) = m_saved;
                    lr *= 0.5;
                    report.rejected_steps += 1;
                    if lr < MIN_LEARNING_RATE {
                        if !after.is_finite() {
                            return Err(PuclError::Divergence { epoch, loss: after });
                        }
                        report.final_learning_rate = lr;
                        return Ok(report);
                    }
                } else {
                    params = candidate;
                }
            }
            report
                .losses
                .push(bce_loss(net, feasible, infeasible, eps)?);
        }
        report.final_learning_rate = lr;
        return Ok(report);
    }

    for epoch in 1..=spec.epochs {
        let saved = (adam.m.clone(), adam.v.clone(), adam.t);
        let candidate = step(&params, &grad, lr, spec.optimizer, &mut adam);
        net.set_parameters(&candidate)?;
        let (new_loss, new_grad) = loss_and_gradient(net, feasible, infeasible, eps)?;
        if !new_loss.is_finite() || new_loss > loss {
            net.set_parameters(&params)?;
            (adam.m, adam.v, adam.t) = saved;
            lr *= 0.5;
            report.rejected_steps += 1;
            if lr < MIN_LEARNING_RATE {
                if !new_loss.is_finite() {
                    return Err(PuclError::Divergence {
                        epoch,
                        loss: new_loss,
                    });
                }
                // No step of any size lowers the loss.
                break;
            }
            continue;
        }
        params = candidate;
        loss = new_loss;
        grad = new_grad;
        report.losses.push(loss);
    }
    report.final_learning_rate = lr;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::net::{Layer, NetSpec};
    use crate::rng::{Seeds, Stream};

    fn gs(v: &[f64]) -> GeneralizedState {
        GeneralizedState::new(v.to_vec()).unwrap()
    }

    fn constant_net(logit: f64) -> ConstraintNet {
        let layers = vec![
            Layer {
                inputs: 1,
                outputs: 1,
                weights: vec![0.0],
                biases: vec![0.0],
            },
            Layer {
                inputs: 1,
                outputs: 1,
                weights: vec![0.0],
                biases: vec![logit],
            },
        ];
        ConstraintNet::from_layers(layers, 0.01).unwrap()
    }

    #[test]
    fn loss_at_half_is_ln2() {
        let net = constant_net(0.0);
        let f = vec![gs(&[1.0]), gs(&[2.0])];
        let i = vec![gs(&[3.0])];
        let l = bce_loss(&net, &f, &i, 1e-7).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn single_feasible_point() {
        // logit of 0.8 = ln 4
        let net = constant_net(4f64.ln());
        let l = bce_loss(&net, &[gs(&[0.0])], &[], 1e-7).unwrap();
        assert!((l - (-(0.8f64).ln())).abs() < 1e-12);
        assert!((l - 0.223144).abs() < 1e-6);
    }

    #[test]
    fn perfect_separation_saturates_at_clip() {
        let eps = 1e-7;
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
                weights: vec![100.0],
                biases: vec![-50.0],
            },
        ];
        let net = ConstraintNet::from_layers(layers, 0.0).unwrap();
        let l = bce_loss(
            &net,
            &[gs(&[1.0]), gs(&[2.0])],
            &[gs(&[0.0]), gs(&[-1.0])],
            eps,
        )
        .unwrap();
        assert!((l - (-(1.0 - eps).ln())).abs() < 1e-12);
        assert!(l < 1e-6);
    }

    #[test]
    fn empty_sets_rejected() {
        let net = constant_net(0.0);
        assert!(bce_loss(&net, &[], &[], 1e-7).is_err());
    }

    #[test]
    fn zero_learning_rate_leaves_net_unchanged() {
        let mut rng = Seeds::new(3).stream(Stream::Init);
        let mut net = ConstraintNet::new(2, &NetSpec::default(), &mut rng).unwrap();
        let before = net.clone();
        let spec = TrainSpec {
            learning_rate: 0.0,
            ..TrainSpec::default()
        };
        let r = train(&mut net, &[gs(&[0.0, 1.0])], &[gs(&[1.0, 0.0])], &spec).unwrap();
        assert_eq!(net, before);
        assert_eq!(r.losses.len(), 1);
    }
}
