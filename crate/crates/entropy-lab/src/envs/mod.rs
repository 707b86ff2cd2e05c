//! Contextual-bandit environments.
//!
//! Each environment is immutable after construction; all randomness a run
//! needs (state sampling, stochastic rewards) flows in through the named
//! streams in [`crate::rng`], so identical seeds give identical state
//! sequences and reward draws.

use rand_chacha::ChaCha8Rng;

mod classification;
mod click;
mod features;
mod genre;
mod idx;
mod preference;
mod synth;

pub use classification::{classification_reward, ClassificationBandit};
pub use click::ClickBandit;
pub use features::{parse_feature_csv, FeatureTable, FEATURE_COLUMNS};
pub use genre::GenreBandit;
pub use idx::{
    encode_idx_images, encode_idx_labels, load_idx, load_idx_files, parse_idx_images,
    parse_idx_labels, LabeledImageSet,
};
pub use preference::PreferenceBandit;
pub use synth::{generate_image_set, generate_image_sets, SyntheticImageSpec};

/// Dense environment context.
pub type StateVector = Vec<f64>;

/// A state together with its ground truth where the environment has one
/// (the image label for the classification bandit).
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub features: StateVector,
    pub label: Option<usize>,
}

impl State {
    pub fn unlabeled(features: StateVector) -> Self {
        State {
            features,
            label: None,
        }
    }
}

/// One unit of training data: the agent saw `state`, chose `action`, and
/// received `reward`.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub state: StateVector,
    pub action: usize,
    pub reward: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("{what} at byte {offset}: {detail}")]
    Format {
        what: &'static str,
        offset: usize,
        detail: String,
    },
    #[error("csv line {line}: {detail}")]
    Csv { line: usize, detail: String },
    #[error("action {action} out of range (environment has {count} actions)")]
    ActionOutOfRange { action: usize, count: usize },
    #[error("state dimension {got}, environment expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state carries no label; cannot score a classification reward")]
    MissingLabel,
    #[error("reward is stochastic for this environment; no enumerable form")]
    NotEnumerable,
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Common interface over the four environments.
///
/// `reward` is deterministic given `(state, action)` and the environment's
/// frozen internal parameters; stochastic environments draw their noise from
/// the `rng` argument, which the caller wires to the named reward stream.
pub trait ContextualBandit: Send + Sync {
    fn state_dim(&self) -> usize;
    fn action_count(&self) -> usize;

    /// Draws one training state from the environment's state distribution.
    fn sample_state(&self, rng: &mut ChaCha8Rng) -> State;

    /// Realized reward for `(state, action)`.
    fn reward(&self, state: &State, action: usize, rng: &mut ChaCha8Rng) -> Result<f64, EnvError>;

    /// Whether `expected_reward` is available for every `(state, action)`.
    fn enumerable_rewards(&self) -> bool;

    /// Deterministic reward, for environments where the reward of every
    /// action can be enumerated exactly.
    fn expected_reward(&self, state: &State, action: usize) -> Result<f64, EnvError>;

    /// Samples the fixed evaluation set, before training. The default draws
    /// i.i.d. from the state distribution; environments with a held-out pool
    /// override it.
    fn sample_eval_set(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<State> {
        (0..n).map(|_| self.sample_state(rng)).collect()
    }

    fn check_action(&self, action: usize) -> Result<(), EnvError> {
        if action >= self.action_count() {
            return Err(EnvError::ActionOutOfRange {
                action,
                count: self.action_count(),
            });
        }
        Ok(())
    }

    fn check_state(&self, state: &State) -> Result<(), EnvError> {
        if state.features.len() != self.state_dim() {
            return Err(EnvError::DimensionMismatch {
                expected: self.state_dim(),
                got: state.features.len(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, STREAM_REWARD, STREAM_STATE};
    use rand::RngCore;

    fn all_envs(seed: u64) -> Vec<(&'static str, Box<dyn ContextualBandit>)> {
        let mut init = stream(seed, crate::rng::STREAM_ENV_INIT, 0);
        let mut sets = synth::generate_image_sets(
            &synth::SyntheticImageSpec::default_desk(),
            &[200, 50],
            &mut init,
        );
        let eval = sets.pop().unwrap();
        let images = sets.pop().unwrap();
        vec![
            (
                "classification",
                Box::new(ClassificationBandit::new(images, eval).unwrap()) as Box<dyn ContextualBandit>,
            ),
            ("genre", Box::new(GenreBandit::generate(20, 50, 10, 0.1, &mut init).unwrap())),
            ("click", Box::new(ClickBandit::new(50, 50, 1.0, &mut init).unwrap())),
            ("preference", Box::new(PreferenceBandit::new(100, 100, 0.0, &mut init).unwrap())),
        ]
    }

    #[test]
    fn reward_ranges_match_declarations() {
        for (name, env) in all_envs(5) {
            let mut st = stream(5, STREAM_STATE, 0);
            let mut rw = stream(5, STREAM_REWARD, 0);
            for _ in 0..200 {
                let s = env.sample_state(&mut st);
                let a = (rw.next_u32() as usize) % env.action_count();
                let r = env.reward(&s, a, &mut rw).unwrap();
                match name {
                    "classification" => {
                        assert!(r == 1.0 || r == -1.0 / 9.0, "{name}: {r}")
                    }
                    "genre" => assert!(r == -1.0 || r == 0.0 || r == 1.0, "{name}: {r}"),
                    "click" => assert!(r == 0.0 || r == 1.0, "{name}: {r}"),
                    _ => assert!(r.is_finite(), "{name}: {r}"),
                }
            }
        }
    }

    #[test]
    fn same_seed_means_identical_streams() {
        for (name, env) in all_envs(9) {
            let states_a: Vec<State> = {
                let mut st = stream(9, STREAM_STATE, 0);
                (0..20).map(|_| env.sample_state(&mut st)).collect()
            };
            let states_b: Vec<State> = {
                let mut st = stream(9, STREAM_STATE, 0);
                (0..20).map(|_| env.sample_state(&mut st)).collect()
            };
            assert_eq!(states_a, states_b, "{name} state stream not reproducible");

            let mut rw_a = stream(9, STREAM_REWARD, 0);
            let mut rw_b = stream(9, STREAM_REWARD, 0);
            for s in &states_a {
                let ra = env.reward(s, 0, &mut rw_a).unwrap();
                let rb = env.reward(s, 0, &mut rw_b).unwrap();
                assert_eq!(ra, rb, "{name} reward draw not reproducible");
            }

            let eval_a = env.sample_eval_set(10, &mut stream(9, "eval-init", 0));
            let eval_b = env.sample_eval_set(10, &mut stream(9, "eval-init", 0));
            assert_eq!(eval_a, eval_b, "{name} eval set not reproducible");
        }
    }

    #[test]
    fn out_of_range_actions_are_rejected_everywhere() {
        for (name, env) in all_envs(3) {
            let mut st = stream(3, STREAM_STATE, 0);
            let mut rw = stream(3, STREAM_REWARD, 0);
            let s = env.sample_state(&mut st);
            let err = env.reward(&s, env.action_count(), &mut rw).unwrap_err();
            assert!(
                matches!(err, EnvError::ActionOutOfRange { .. }),
                "{name}: {err}"
            );
        }
    }
}
