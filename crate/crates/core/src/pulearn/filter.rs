use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{PuclError, Result};
use crate::types::Trajectory;

/// How the sub-optimality margin enters the rollout filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterForm {
    /// Keep a rollout iff `(1 - delta) * r(rollout) >= r(demo)`, as written.
    /// For negative returns a larger `delta` is more permissive.
    #[default]
    Literal,
    /// Keep a rollout iff `r(rollout) >= r(demo) + delta * |r(demo)|`: the
    /// rollout must beat its demonstration by a `delta` fraction of the
    /// demonstration's magnitude, whatever the sign of the returns.
    Margin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub delta: f64,
    #[serde(default)]
    pub form: FilterForm,
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return Err(PuclError::Config("delta must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn keeps(&self, rollout_return: f64, demo_return: f64) -> bool {
        match self.form {
            FilterForm::Literal => (1.0 - self.delta) * rollout_return >= demo_return,
            FilterForm::Margin => rollout_return >= demo_return + self.delta * demo_return.abs(),
        }
    }
}

/// Keeps rollouts whose return beats that of the demonstration started from
/// the same state (paired by `start_index`).
pub fn policy_filter(
    rollouts: &[Trajectory],
    demos: &[Trajectory],
    spec: &FilterSpec,
) -> Result<Vec<Trajectory>> {
    spec.validate()?;
    let demo_returns: HashMap<usize, f64> = demos
        .iter()
        .map(|d| (d.start_index(), d.cached_return()))
        .collect();
    let mut kept = Vec::new();
    for r in rollouts {
        let demo = *demo_returns
            .get(&r.start_index())
            .ok_or(PuclError::UnpairedRollout(r.start_index()))?;
        if spec.keeps(r.cached_return(), demo) {
            kept.push(r.clone());
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(ret: f64, start_index: usize) -> Trajectory {
        Trajectory::new(Vec::new(), vec![0.0], start_index, ret).unwrap()
    }

    fn literal(delta: f64) -> FilterSpec {
        FilterSpec {
            delta,
            form: FilterForm::Literal,
        }
    }

    #[test]
    fn equal_returns_kept_at_zero_delta() {
        assert_eq!(
            policy_filter(&[t(-6.0, 0)], &[t(-6.0, 0)], &literal(0.0))
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn better_return_kept() {
        assert_eq!(
            policy_filter(&[t(-5.0, 0)], &[t(-6.0, 0)], &literal(0.0))
                .unwrap()
                .len(),
            1
        );
    }

    #[test]
    fn slightly_worse_rollout_discarded() {
        // 0.97 * -6.2 = -6.014 < -6
        assert!(policy_filter(&[t(-6.2, 0)], &[t(-6.0, 0)], &literal(0.03))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn pairing_by_start_index() {
        let demos = [t(-6.0, 0), t(-2.0, 1)];
        let rollouts = [t(-3.0, 1), t(-3.0, 0)];
        let kept = policy_filter(&rollouts, &demos, &literal(0.0)).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].start_index(), 0);
    }

    #[test]
    fn unpaired_rollout_is_error() {
        assert!(matches!(
            policy_filter(&[t(-1.0, 7)], &[t(-1.0, 0)], &literal(0.0)),
            Err(PuclError::UnpairedRollout(7))
        ));
    }

    #[test]
    fn margin_form_requires_strict_improvement() {
        let spec = FilterSpec {
            delta: 0.1,
            form: FilterForm::Margin,
        };
        assert!(spec.keeps(-5.0, -6.0));
        assert!(!spec.keeps(-5.5, -6.0));
        assert!(spec.keeps(11.0, 10.0));
        assert!(!spec.keeps(10.5, 10.0));
    }
}
