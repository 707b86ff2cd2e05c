//! Behavioral-preference bandit.
//!
//! Each of the `K` behavioral recommendations has a frozen prototype vector;
//! a user's response to recommendation `a` is the cosine similarity between
//! the user vector and the prototype, plus optional Gaussian noise. Higher
//! reward means higher chance of adoption, so the ordering over actions is
//! what matters.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ContextualBandit, EnvError, State};

pub struct PreferenceBandit {
    /// `K x d` prototypes.
    prototypes: Vec<Vec<f64>>,
    /// Cached prototype norms for the ranking shortcut.
    norms: Vec<f64>,
    noise_scale: f64,
}

impl PreferenceBandit {
    pub fn new(
        actions: usize,
        state_dim: usize,
        noise_scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, EnvError> {
        if actions == 0 || state_dim == 0 {
            return Err(EnvError::InvalidConfig(
                "preference bandit needs at least one action and one state dimension".into(),
            ));
        }
        if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
            return Err(EnvError::InvalidConfig(format!(
                "noise scale must be nonnegative and finite, got {noise_scale}"
            )));
        }
        let prototypes: Vec<Vec<f64>> = (0..actions)
            .map(|_| (0..state_dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        Ok(Self::from_prototypes(prototypes, noise_scale))
    }

    pub fn from_prototypes(prototypes: Vec<Vec<f64>>, noise_scale: f64) -> Self {
        let norms = prototypes
            .iter()
            .map(|p| p.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        PreferenceBandit {
            prototypes,
            norms,
            noise_scale,
        }
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    /// Cosine similarity between the user and prototype `action`; 0 when
    /// either vector is zero.
    pub fn cosine(&self, state: &State, action: usize) -> Result<f64, EnvError> {
        self.check_state(state)?;
        self.check_action(action)?;
        let s_norm = state.features.iter().map(|x| x * x).sum::<f64>().sqrt();
        let p_norm = self.norms[action];
        if s_norm == 0.0 || p_norm == 0.0 {
            return Ok(0.0);
        }
        Ok(crate::numerics::dot(&state.features, &self.prototypes[action]) / (s_norm * p_norm))
    }

    /// The best recommendation for a user, ranked by normalized inner product
    /// with the cached prototype norms (ties resolve to the lowest index).
    pub fn best_action(&self, state: &State) -> Result<usize, EnvError> {
        self.check_state(state)?;
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for (a, proto) in self.prototypes.iter().enumerate() {
            let norm = self.norms[a];
            let score = if norm == 0.0 {
                0.0
            } else {
                crate::numerics::dot(&state.features, proto) / norm
            };
            if score > best_score {
                best_score = score;
                best = a;
            }
        }
        Ok(best)
    }
}

impl ContextualBandit for PreferenceBandit {
    fn state_dim(&self) -> usize {
        self.prototypes[0].len()
    }

    fn action_count(&self) -> usize {
        self.prototypes.len()
    }

    fn sample_state(&self, rng: &mut ChaCha8Rng) -> State {
        let features = (0..self.state_dim())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        State {
            features,
            label: None,
        }
    }

    fn reward(&self, state: &State, action: usize, rng: &mut ChaCha8Rng) -> Result<f64, EnvError> {
        let base = self.cosine(state, action)?;
        if self.noise_scale == 0.0 {
            return Ok(base);
        }
        let noise: f64 = rng.sample(StandardNormal);
        Ok(base + self.noise_scale * noise)
    }

    fn enumerable_rewards(&self) -> bool {
        self.noise_scale == 0.0
    }

    fn expected_reward(&self, state: &State, action: usize) -> Result<f64, EnvError> {
        if self.noise_scale != 0.0 {
            return Err(EnvError::NotEnumerable);
        }
        self.cosine(state, action)
    }
}
