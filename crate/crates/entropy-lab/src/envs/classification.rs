//! Image-classification bandit: the agent observes a flattened image and
//! "acts" by predicting its label. Correct predictions earn 1, mispredictions
//! -1/9, so a uniformly random policy has value 0 and the optimal policy 1.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ContextualBandit, EnvError, LabeledImageSet, State};

/// Reward for predicting label `action` on an image whose true label is
/// `label`: exactly 1 or -1/9.
pub fn classification_reward(label: usize, action: usize) -> Result<f64, EnvError> {
    if action >= LabeledImageSet::ACTION_COUNT {
        return Err(EnvError::ActionOutOfRange {
            action,
            count: LabeledImageSet::ACTION_COUNT,
        });
    }
    Ok(if action == label { 1.0 } else { -1.0 / 9.0 })
}

pub struct ClassificationBandit {
    train: LabeledImageSet,
    eval: LabeledImageSet,
}

impl ClassificationBandit {
    /// Training states are drawn from `train`; the evaluation set comes from
    /// the held-out `eval` pool.
    pub fn new(train: LabeledImageSet, eval: LabeledImageSet) -> Result<Self, EnvError> {
        if train.is_empty() || eval.is_empty() {
            return Err(EnvError::InvalidConfig(
                "classification bandit needs nonempty train and eval sets".into(),
            ));
        }
        if train.state_dim() != eval.state_dim() {
            return Err(EnvError::InvalidConfig(format!(
                "train images are {}-dimensional but eval images are {}-dimensional",
                train.state_dim(),
                eval.state_dim()
            )));
        }
        Ok(ClassificationBandit { train, eval })
    }

    /// Keeps a seeded subset of each pool (sampled without replacement).
    pub fn with_subsets(
        mut train: LabeledImageSet,
        mut eval: LabeledImageSet,
        train_subset: Option<usize>,
        eval_subset: Option<usize>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, EnvError> {
        if let Some(n) = train_subset {
            train = subset(train, n, rng);
        }
        if let Some(n) = eval_subset {
            eval = subset(eval, n, rng);
        }
        ClassificationBandit::new(train, eval)
    }

    pub fn train_len(&self) -> usize {
        self.train.len()
    }

    pub fn eval_len(&self) -> usize {
        self.eval.len()
    }

    fn state_at(set: &LabeledImageSet, i: usize) -> State {
        State {
            features: set.images[i].clone(),
            label: Some(set.labels[i]),
        }
    }
}

fn subset(set: LabeledImageSet, n: usize, rng: &mut ChaCha8Rng) -> LabeledImageSet {
    if n >= set.len() {
        return set;
    }
    let picked = rand::seq::index::sample(rng, set.len(), n);
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in picked.iter() {
        images.push(set.images[i].clone());
        labels.push(set.labels[i]);
    }
    LabeledImageSet {
        images,
        labels,
        rows: set.rows,
        cols: set.cols,
    }
}

impl ContextualBandit for ClassificationBandit {
    fn state_dim(&self) -> usize {
        self.train.state_dim()
    }

    fn action_count(&self) -> usize {
        LabeledImageSet::ACTION_COUNT
    }

    fn sample_state(&self, rng: &mut ChaCha8Rng) -> State {
        let i = rng.gen_range(0..self.train.len());
        Self::state_at(&self.train, i)
    }

    fn reward(&self, state: &State, action: usize, _rng: &mut ChaCha8Rng) -> Result<f64, EnvError> {
        self.expected_reward(state, action)
    }

    fn enumerable_rewards(&self) -> bool {
        true
    }

    fn expected_reward(&self, state: &State, action: usize) -> Result<f64, EnvError> {
        self.check_state(state)?;
        let label = state.label.ok_or(EnvError::MissingLabel)?;
        classification_reward(label, action)
    }

    /// Evaluation states come from the held-out pool, without replacement
    /// when it is large enough.
    fn sample_eval_set(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<State> {
        if n <= self.eval.len() {
            rand::seq::index::sample(rng, self.eval.len(), n)
                .iter()
                .map(|i| Self::state_at(&self.eval, i))
                .collect()
        } else {
            (0..n)
                .map(|_| {
                    let i = rng.gen_range(0..self.eval.len());
                    Self::state_at(&self.eval, i)
                })
                .collect()
        }
    }
}
