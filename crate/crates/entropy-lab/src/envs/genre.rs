//! Genre-preference music recommendation bandit.
//!
//! Users are binary genre-preference vectors; tracks and genres carry audio
//! feature rows in `[0,1]`. A user's preference for a track is the bilinear
//! score `p(s,a) = s x F_S x F_a` computed on mean-normalized copies of the
//! feature tables (per-table column means subtracted), and the `{-1, 0, 1}`
//! reward buckets that score by the feedback threshold `epsilon`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ContextualBandit, EnvError, State};

pub struct GenreBandit {
    /// Raw genre features, `G x F`, entries in `[0,1]`.
    raw_genres: Vec<Vec<f64>>,
    /// Raw track features, `K x F`.
    raw_tracks: Vec<Vec<f64>>,
    norm_genres: Vec<Vec<f64>>,
    norm_tracks: Vec<Vec<f64>>,
    epsilon: f64,
    /// Largest number of preferred genres a sampled user can have.
    max_preferences: usize,
}

fn column_mean_normalize(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let cols = rows[0].len();
    let mut means = vec![0.0; cols];
    for row in rows {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    rows.iter()
        .map(|row| row.iter().zip(&means).map(|(v, m)| v - m).collect())
        .collect()
}

impl GenreBandit {
    /// Builds the bandit from raw feature tables. Table shapes must agree on
    /// the feature count and every raw entry must lie in `[0,1]`.
    pub fn from_features(
        raw_genres: Vec<Vec<f64>>,
        raw_tracks: Vec<Vec<f64>>,
        epsilon: f64,
    ) -> Result<Self, EnvError> {
        if raw_genres.is_empty() || raw_tracks.is_empty() {
            return Err(EnvError::InvalidConfig("feature tables must be nonempty".into()));
        }
        let f = raw_genres[0].len();
        if f == 0 {
            return Err(EnvError::InvalidConfig("feature rows must be nonempty".into()));
        }
        for row in raw_genres.iter().chain(raw_tracks.iter()) {
            if row.len() != f {
                return Err(EnvError::InvalidConfig(format!(
                    "inconsistent feature width: expected {f}, got {}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(EnvError::InvalidConfig("raw feature outside [0,1]".into()));
            }
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(EnvError::InvalidConfig(format!(
                "feedback threshold must be positive, got {epsilon}"
            )));
        }
        let norm_genres = column_mean_normalize(&raw_genres);
        let norm_tracks = column_mean_normalize(&raw_tracks);
        let max_preferences = raw_genres.len().min(5);
        Ok(GenreBandit {
            raw_genres,
            raw_tracks,
            norm_genres,
            norm_tracks,
            epsilon,
            max_preferences,
        })
    }

    /// Generates the feature tables uniformly in `[0,1]` from a seed stream,
    /// for runs without feature CSV files.
    pub fn generate(
        genres: usize,
        tracks: usize,
        feature_count: usize,
        epsilon: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, EnvError> {
        let gen_rows = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..feature_count).map(|_| rng.gen::<f64>()).collect())
                .collect()
        };
        let raw_genres = gen_rows(genres, rng);
        let raw_tracks = gen_rows(tracks, rng);
        GenreBandit::from_features(raw_genres, raw_tracks, epsilon)
    }

    pub fn genre_count(&self) -> usize {
        self.raw_genres.len()
    }

    pub fn track_count(&self) -> usize {
        self.raw_tracks.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// The bilinear preference score on mean-normalized features.
    pub fn preference_score(&self, state: &State, action: usize) -> Result<f64, EnvError> {
        self.check_state(state)?;
        self.check_action(action)?;
        let track = &self.norm_tracks[action];
        // s x F_S first (1 x F), then dot with F_a.
        let f = track.len();
        let mut profile = vec![0.0; f];
        for (g, weight) in state.features.iter().enumerate() {
            if *weight != 0.0 {
                for (p, feat) in profile.iter_mut().zip(&self.norm_genres[g]) {
                    *p += weight * feat;
                }
            }
        }
        Ok(crate::numerics::dot(&profile, track))
    }
}

impl ContextualBandit for GenreBandit {
    fn state_dim(&self) -> usize {
        self.raw_genres.len()
    }

    fn action_count(&self) -> usize {
        self.raw_tracks.len()
    }

    /// A user prefers `n` genres, `n` uniform in `{1..=5}` (5%-25% of the 20
    /// genres), positions uniform without replacement.
    fn sample_state(&self, rng: &mut ChaCha8Rng) -> State {
        let n = rng.gen_range(1..=self.max_preferences);
        let mut features = vec![0.0; self.genre_count()];
        for idx in rand::seq::index::sample(rng, self.genre_count(), n) {
            features[idx] = 1.0;
        }
        State {
            features,
            label: None,
        }
    }

    fn reward(&self, state: &State, action: usize, _rng: &mut ChaCha8Rng) -> Result<f64, EnvError> {
        self.expected_reward(state, action)
    }

    fn enumerable_rewards(&self) -> bool {
        true
    }

    fn expected_reward(&self, state: &State, action: usize) -> Result<f64, EnvError> {
        let p = self.preference_score(state, action)?;
        Ok(if p > self.epsilon {
            1.0
        } else if p < -self.epsilon {
            -1.0
        } else {
            0.0
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, STREAM_ENV_INIT, STREAM_STATE};

    fn toy_bandit(epsilon: f64) -> GenreBandit {
        // Two genres, two features. Column means: genres (0.5, 0.5),
        // tracks (0.5, 0.5), so the normalized tables are
        //   genres: [[0.5, 0.4], [-0.5, -0.4]]
        //   tracks: [[0.4, 0.25], [-0.4, -0.25]]
        GenreBandit::from_features(
            vec![vec![1.0, 0.9], vec![0.0, 0.1]],
            vec![vec![0.9, 0.75], vec![0.1, 0.25]],
            epsilon,
        )
        .unwrap()
    }

    #[test]
    fn zero_preference_vector_gives_zero_reward() {
        let env = toy_bandit(0.1);
        let s = State::unlabeled(vec![0.0, 0.0]);
        assert_eq!(env.expected_reward(&s, 0).unwrap(), 0.0);
        assert_eq!(env.preference_score(&s, 0).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_score_above_threshold() {
        // s = [1,0]: s x F_S = [0.5, 0.4];
        // p(s,0) = 0.5*0.4 + 0.4*0.25 = 0.3 -> reward 1 at epsilon 0.1.
        let env = toy_bandit(0.1);
        let s = State::unlabeled(vec![1.0, 0.0]);
        let p = env.preference_score(&s, 0).unwrap();
        assert!((p - 0.3).abs() < 1e-12, "{p}");
        assert_eq!(env.expected_reward(&s, 0).unwrap(), 1.0);
        // p(s,1) = -0.3 -> reward -1.
        assert_eq!(env.expected_reward(&s, 1).unwrap(), -1.0);
    }

    #[test]
    fn hand_computed_score_inside_deadband() {
        // Same score 0.3, but epsilon 0.5 swallows it -> no feedback.
        let env = toy_bandit(0.5);
        let s = State::unlabeled(vec![1.0, 0.0]);
        assert_eq!(env.expected_reward(&s, 0).unwrap(), 0.0);
    }

    #[test]
    fn sampled_users_prefer_one_to_five_genres() {
        let mut init = stream(0, STREAM_ENV_INIT, 0);
        let env = GenreBandit::generate(20, 50, 10, 0.1, &mut init).unwrap();
        let mut st = stream(0, STREAM_STATE, 0);
        let mut total = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let s = env.sample_state(&mut st);
            let popcount = s.features.iter().filter(|&&v| v == 1.0).count();
            assert!((1..=5).contains(&popcount));
            assert!(s.features.iter().all(|&v| v == 0.0 || v == 1.0));
            total += popcount as f64;
        }
        // E[popcount] = 3 for n uniform on {1..5}.
        let mean = total / n as f64;
        assert!((mean - 3.0).abs() < 0.1, "mean popcount {mean}");
    }

    #[test]
    fn column_shift_invariance() {
        // Adding a constant to one raw feature column changes no reward
        // bucket: the column mean absorbs it.
        let mut init = stream(7, STREAM_ENV_INIT, 0);
        let base = GenreBandit::generate(20, 50, 10, 0.1, &mut init).unwrap();

        // Squeeze the column into [0, 0.5] first so the +0.4 shift stays in
        // range for every row.
        let mut squeezed_genres = base.raw_genres.clone();
        for row in &mut squeezed_genres {
            row[3] *= 0.5;
        }
        let mut squeezed_shifted = squeezed_genres.clone();
        for row in &mut squeezed_shifted {
            row[3] += 0.4;
        }
        let a = GenreBandit::from_features(squeezed_genres, base.raw_tracks.clone(), 0.1).unwrap();
        let b = GenreBandit::from_features(squeezed_shifted, base.raw_tracks.clone(), 0.1).unwrap();

        let mut st = stream(7, STREAM_STATE, 0);
        use rand::Rng;
        for _ in 0..1000 {
            let s = a.sample_state(&mut st);
            let action = st.gen_range(0..a.action_count());
            let ra = a.expected_reward(&s, action).unwrap();
            let rb = b.expected_reward(&s, action).unwrap();
            assert_eq!(ra, rb);
        }
    }

    #[test]
    fn rejects_invalid_tables() {
        assert!(GenreBandit::from_features(vec![vec![1.2]], vec![vec![0.1]], 0.1).is_err());
        assert!(GenreBandit::from_features(vec![], vec![vec![0.1]], 0.1).is_err());
        assert!(
            GenreBandit::from_features(vec![vec![0.5, 0.5]], vec![vec![0.1]], 0.1).is_err()
        );
        assert!(GenreBandit::from_features(vec![vec![0.5]], vec![vec![0.1]], 0.0).is_err());
    }
}
