//! Synthetic online-advertisement click bandit.
//!
//! Users are standard-normal preference vectors; each product has a frozen
//! unit-norm embedding. A shown product is clicked with probability
//! `sigmoid(beta * <s, q_a>)`, drawn from the caller's reward stream, so
//! rewards are `{0, 1}` and click rates depend on the user's preferences.
//! Before the lookup, the product index is passed through a per-user
//! permutation keyed by the user's dominant preference (the product
//! embedding the user scores highest), so action identities mean different
//! products for different user populations while staying learnable: similar
//! users share a permutation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ContextualBandit, EnvError, State};

pub struct ClickBandit {
    /// `K x d`, rows unit-norm.
    embeddings: Vec<Vec<f64>>,
    beta: f64,
    /// One frozen permutation of the products per preference cluster.
    permutations: Vec<Vec<usize>>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn sample_permutations(products: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..products)
        .map(|_| {
            let mut perm: Vec<usize> = (0..products).collect();
            // Fisher-Yates
            for i in (1..perm.len()).rev() {
                let j = rng.gen_range(0..=i);
                perm.swap(i, j);
            }
            perm
        })
        .collect()
}

impl ClickBandit {
    pub fn new(
        products: usize,
        state_dim: usize,
        beta: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, EnvError> {
        if products == 0 || state_dim == 0 {
            return Err(EnvError::InvalidConfig(
                "click bandit needs at least one product and one state dimension".into(),
            ));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(EnvError::InvalidConfig(format!(
                "temperature must be nonnegative and finite, got {beta}"
            )));
        }
        let mut embeddings = Vec::with_capacity(products);
        for _ in 0..products {
            let mut q: Vec<f64> = (0..state_dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = q.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in &mut q {
                    *x /= norm;
                }
            }
            embeddings.push(q);
        }
        let permutations = sample_permutations(products, rng.gen());
        Ok(ClickBandit {
            embeddings,
            beta,
            permutations,
        })
    }

    /// Builds the bandit from explicit embeddings (tests pin probabilities
    /// this way). Rows are used as given, without normalization; the
    /// permutation set is derived from `perm_seed`.
    pub fn from_embeddings(
        embeddings: Vec<Vec<f64>>,
        beta: f64,
        perm_seed: u64,
    ) -> Result<Self, EnvError> {
        if embeddings.is_empty() || embeddings[0].is_empty() {
            return Err(EnvError::InvalidConfig("embeddings must be nonempty".into()));
        }
        let d = embeddings[0].len();
        if embeddings.iter().any(|q| q.len() != d) {
            return Err(EnvError::InvalidConfig("ragged embedding rows".into()));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(EnvError::InvalidConfig(format!(
                "temperature must be nonnegative and finite, got {beta}"
            )));
        }
        let permutations = sample_permutations(embeddings.len(), perm_seed);
        Ok(ClickBandit {
            embeddings,
            beta,
            permutations,
        })
    }

    /// The user's preference cluster: the product embedding they score
    /// highest (ties resolve to the lowest index).
    fn cluster_of(&self, state: &State) -> usize {
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for (j, q) in self.embeddings.iter().enumerate() {
            let score = crate::numerics::dot(&state.features, q);
            if score > best_score {
                best_score = score;
                best = j;
            }
        }
        best
    }

    /// The user's product ordering: the frozen permutation of their
    /// preference cluster. Deterministic in the preference vector.
    pub fn user_permutation(&self, state: &State) -> &[usize] {
        &self.permutations[self.cluster_of(state)]
    }

    /// Click probability for `(state, action)` after the per-user
    /// permutation.
    pub fn click_probability(&self, state: &State, action: usize) -> Result<f64, EnvError> {
        self.check_state(state)?;
        self.check_action(action)?;
        let product = self.user_permutation(state)[action];
        let score = crate::numerics::dot(&state.features, &self.embeddings[product]);
        Ok(sigmoid(self.beta * score))
    }
}

impl ContextualBandit for ClickBandit {
    fn state_dim(&self) -> usize {
        self.embeddings[0].len()
    }

    fn action_count(&self) -> usize {
        self.embeddings.len()
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
        let p = self.click_probability(state, action)?;
        Ok((rng.gen::<f64>() < p) as u8 as f64)
    }

    fn enumerable_rewards(&self) -> bool {
        false
    }

    fn expected_reward(&self, _state: &State, _action: usize) -> Result<f64, EnvError> {
        Err(EnvError::NotEnumerable)
    }
}
