use serde::{Deserialize, Serialize};

use crate::error::{PuclError, Result};
use crate::types::{GeneralizedState, StateAction};

/// Selects the generalized state from a state-action pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureMap {
    StateOnly,
    ActionOnly,
    /// Indices into the concatenation `state ++ action`.
    Indices {
        indices: Vec<usize>,
    },
}

impl FeatureMap {
    pub fn dim(&self, state_dim: usize, action_dim: usize) -> usize {
        match self {
            FeatureMap::StateOnly => state_dim,
            FeatureMap::ActionOnly => action_dim,
            FeatureMap::Indices { indices } => {
                let _ = (state_dim, action_dim);
                indices.len()
            }
        }
    }

    pub fn validate(&self, state_dim: usize, action_dim: usize) -> Result<()> {
        if let FeatureMap::Indices { indices } = self {
            if indices.is_empty() {
                return Err(PuclError::Config("feature index list is empty".into()));
            }
            if let Some(&bad) = indices.iter().find(|&&i| i >= state_dim + action_dim) {
                return Err(PuclError::Config(format!(
                    "feature index {bad} out of range for state ({state_dim}) ++ action ({action_dim})"
                )));
            }
        }
        Ok(())
    }

    pub fn apply(&self, sa: &StateAction) -> Result<GeneralizedState> {
        GeneralizedState::new(self.select(&sa.state, &sa.action)?)
    }

    /// The feature vector of `(state, action)` without building a pair.
    pub fn select(&self, state: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        match self {
            FeatureMap::StateOnly => Ok(state.to_vec()),
            FeatureMap::ActionOnly => Ok(action.to_vec()),
            FeatureMap::Indices { indices } => {
                let n_state = state.len();
                let total = n_state + action.len();
                indices
                    .iter()
                    .map(|&i| {
                        if i < n_state {
                            Ok(state[i])
                        } else if i < total {
                            Ok(action[i - n_state])
                        } else {
                            Err(PuclError::Config(format!(
                                "feature index {i} out of range for state-action of length {total}"
                            )))
                        }
                    })
                    .collect()
            }
        }
    }

    /// Builds a state-action pair whose features equal `features`; unselected
    /// coordinates are zero. Used to label evaluation grids.
    pub fn embed(
        &self,
        features: &[f64],
        state_dim: usize,
        action_dim: usize,
    ) -> Result<StateAction> {
        let mut state = vec![0.0; state_dim];
        let mut action = vec![0.0; action_dim];
        match self {
            FeatureMap::StateOnly => {
                crate::error::ensure_dim(state_dim, features.len())?;
                state.copy_from_slice(features);
            }
            FeatureMap::ActionOnly => {
                crate::error::ensure_dim(action_dim, features.len())?;
                action.copy_from_slice(features);
            }
            FeatureMap::Indices { indices } => {
                crate::error::ensure_dim(indices.len(), features.len())?;
                self.validate(state_dim, action_dim)?;
                for (&i, &v) in indices.iter().zip(features) {
                    if i < state_dim {
                        state[i] = v;
                    } else {
                        action[i - state_dim] = v;
                    }
                }
            }
        }
        StateAction::new(state, action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sa(state: &[f64], action: &[f64]) -> StateAction {
        StateAction::new(state.to_vec(), action.to_vec()).unwrap()
    }

    #[test]
    fn state_only() {
        let g = FeatureMap::StateOnly
            .apply(&sa(&[1.0, 2.0], &[3.0]))
            .unwrap();
        assert_eq!(g.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn action_only() {
        let g = FeatureMap::ActionOnly
            .apply(&sa(&[1.0, 2.0], &[3.0]))
            .unwrap();
        assert_eq!(g.as_slice(), &[3.0]);
    }

    #[test]
    fn custom_indices() {
        let map = FeatureMap::Indices {
            indices: vec![0, 3],
        };
        let g = map.apply(&sa(&[1.0, 2.0], &[3.0, 4.0])).unwrap();
        assert_eq!(g.as_slice(), &[1.0, 4.0]);
    }

    #[test]
    fn out_of_range_index_is_config_error() {
        let map = FeatureMap::Indices {
            indices: vec![0, 4],
        };
        assert!(matches!(
            map.apply(&sa(&[1.0, 2.0], &[3.0, 4.0])),
            Err(PuclError::Config(_))
        ));
        assert!(map.validate(2, 2).is_err());
        assert!(map.validate(2, 3).is_ok());
    }

    #[test]
    fn embed_inverts_apply() {
        let map = FeatureMap::Indices {
            indices: vec![1, 2],
        };
        let e = map.embed(&[5.0, 6.0], 2, 1).unwrap();
        assert_eq!(map.apply(&e).unwrap().as_slice(), &[5.0, 6.0]);
        let e = FeatureMap::ActionOnly
            .embed(&[0.1, 0.2, 0.3], 3, 3)
            .unwrap();
        assert_eq!(e.action, vec![0.1, 0.2, 0.3]);
        assert_eq!(e.state, vec![0.0; 3]);
    }
}
