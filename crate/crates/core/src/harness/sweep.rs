use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eval::evaluate;
use super::run::{demonstrations, run, Learner};
use crate::config::ExperimentConfig;
use crate::error::{PuclError, Result};
use crate::pulearn::ThresholdMode;

/// One full run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub d_r: f64,
    pub seed: u64,
    /// `|R|` identified in the first iteration, before expansion.
    pub first_identified: Option<usize>,
    pub iou: Option<f64>,
    pub unsafe_rate: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d_r: f64,
    pub cells: Vec<SweepCell>,
    pub iou_mean: Option<f64>,
    pub iou_std: Option<f64>,
    pub unsafe_mean: Option<f64>,
    pub unsafe_std: Option<f64>,
    /// Some cell failed or lacks a metric.
    pub partial: bool,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

fn cell(cfg: &ExperimentConfig, d_r: f64, seed: u64) -> SweepCell {
    let mut c = cfg.clone();
    c.seed = seed;
    c.score.threshold = ThresholdMode::Absolute { d_r };
    let outcome = demonstrations(&c).and_then(|demos| {
        let out = run(&c, Learner::Pucl, &demos.trajectories)?;
        let m = evaluate(
            &c,
            &out.net,
            out.buffer.points(),
            &demos.trajectories,
            out.final_weight,
        )?;
        Ok((out, m))
    });
    match outcome {
        Ok((out, m)) => SweepCell {
            d_r,
            seed,
            first_identified: out.trace.first().map(|r| r.identified),
            iou: m.iou,
            unsafe_rate: m.unsafe_rate,
            error: None,
        },
        Err(e) => SweepCell {
            d_r,
            seed,
            first_identified: None,
            iou: None,
            unsafe_rate: None,
            error: Some(e.to_string()),
        },
    }
}

/// Independent PUCL runs for every `(d_r, seed)` pair in absolute mode.
pub fn sweep_dr(cfg: &ExperimentConfig, values: &[f64], seeds: &[u64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() || seeds.is_empty() {
        return Err(PuclError::Config(
            "a sweep needs at least one d_r value and one seed".into(),
        ));
    }
    if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(PuclError::Config(format!(
            "d_r value {bad} must be finite and >= 0"
        )));
    }
    let pairs: Vec<(f64, u64)> = values
        .iter()
        .flat_map(|&d| seeds.iter().map(move |&s| (d, s)))
        .collect();
    let cells: Vec<SweepCell> = pairs.par_iter().map(|&(d, s)| cell(cfg, d, s)).collect();
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, &d_r)| {
            let cells = cells[i * seeds.len()..(i + 1) * seeds.len()].to_vec();
            let ious: Vec<f64> = cells.iter().filter_map(|c| c.iou).collect();
            let unsafe_: Vec<f64> = cells.iter().filter_map(|c| c.unsafe_rate).collect();
            let partial = ious.len() < cells.len() || unsafe_.len() < cells.len();
            let (iou_mean, iou_std) = mean_std(&ious).unzip();
            let (unsafe_mean, unsafe_std) = mean_std(&unsafe_).unzip();
            SweepRow {
                d_r,
                cells,
                iou_mean,
                iou_std,
                unsafe_mean,
                unsafe_std,
                partial,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        assert_eq!(mean_std(&[1.0, 3.0]), Some((2.0, 1.0)));
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
