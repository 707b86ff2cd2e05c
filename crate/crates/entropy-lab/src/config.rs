//! Run configuration: a JSON file with the environment, the agent grid, the
//! interaction budget, and the seeds. Unknown keys are rejected so typos fail
//! at load time, and referenced files are checked for existence before a run
//! starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, AgentConfig, AgentError, AgentKind, EpsilonSchedule, InitScheme};
use crate::envs::{
    load_idx_files, parse_feature_csv, ClassificationBandit, ClickBandit, ContextualBandit,
    EnvError, GenreBandit, LabeledImageSet, PreferenceBandit, SyntheticImageSpec,
};
use crate::numerics::{Activation, MlpSpec};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{field}: {detail}")]
    Invalid { field: String, detail: String },
    #[error("{field}: file not found: {path}")]
    MissingFile { field: String, path: PathBuf },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

fn invalid(field: &str, detail: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub agents: Vec<AgentSpecConfig>,
    pub total_interactions: u64,
    pub eval_every: u64,
    #[serde(default = "default_eval_size")]
    pub eval_size: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

fn default_eval_size() -> usize {
    1000
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    Classification {
        dataset: DatasetConfig,
    },
    Genre {
        #[serde(default)]
        genre_features: Option<PathBuf>,
        #[serde(default)]
        track_features: Option<PathBuf>,
        #[serde(default = "default_genre_epsilon")]
        epsilon: f64,
    },
    Click {
        #[serde(default = "default_fifty")]
        products: usize,
        #[serde(default = "default_fifty")]
        state_dim: usize,
        #[serde(default = "default_beta")]
        beta: f64,
    },
    Preference {
        #[serde(default = "default_hundred")]
        actions: usize,
        #[serde(default = "default_hundred")]
        state_dim: usize,
        #[serde(default)]
        noise: f64,
    },
}

fn default_genre_epsilon() -> f64 {
    0.1
}
fn default_fifty() -> usize {
    50
}
fn default_hundred() -> usize {
    100
}
fn default_beta() -> f64 {
    1.0
}

pub const GENRE_COUNT: usize = 20;
pub const TRACK_COUNT: usize = 50;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// IDX files on disk (paths relative to the config file).
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        eval_images: PathBuf,
        eval_labels: PathBuf,
        #[serde(default)]
        train_subset: Option<usize>,
        #[serde(default)]
        eval_subset: Option<usize>,
    },
    /// Generated in memory from the run seed.
    Synthetic {
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_side")]
        rows: usize,
        #[serde(default = "default_side")]
        cols: usize,
        train: usize,
        eval: usize,
        #[serde(default = "default_noise")]
        noise: f64,
    },
}

fn default_classes() -> usize {
    10
}
fn default_side() -> usize {
    28
}
fn default_noise() -> f64 {
    0.25
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpecConfig {
    pub kind: AgentKind,
    /// Directory/series label; defaults to the kind name (deduplicated).
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub hidden: Vec<usize>,
    /// Defaults per family: tanh for pg/a2c/ppo, relu for ql/dqn.
    #[serde(default)]
    pub activation: Option<Activation>,
    pub lr: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_ppo_clip")]
    pub ppo_clip: f64,
    #[serde(default = "default_ppo_epochs")]
    pub ppo_epochs: usize,
    #[serde(default = "default_eps_start")]
    pub dqn_epsilon_start: f64,
    #[serde(default = "default_eps_end")]
    pub dqn_epsilon_end: f64,
    #[serde(default = "default_eps_fraction")]
    pub dqn_epsilon_fraction: f64,
    #[serde(default = "default_buffer")]
    pub dqn_buffer_capacity: usize,
    #[serde(default = "default_ql_epsilon")]
    pub ql_epsilon: f64,
    /// Defaults to zero init for linear networks, uniform for MLPs.
    #[serde(default)]
    pub init: Option<InitScheme>,
}

fn default_batch_size() -> usize {
    32
}
fn default_ppo_clip() -> f64 {
    0.2
}
fn default_ppo_epochs() -> usize {
    10
}
fn default_eps_start() -> f64 {
    1.0
}
fn default_eps_end() -> f64 {
    0.05
}
fn default_eps_fraction() -> f64 {
    0.1
}
fn default_buffer() -> usize {
    50_000
}
fn default_ql_epsilon() -> f64 {
    0.1
}

impl AgentSpecConfig {
    /// Assembles the full agent config once the environment's dimensions are
    /// known.
    pub fn build(&self, state_dim: usize, action_count: usize) -> AgentConfig {
        let activation = self.activation.unwrap_or(match self.kind {
            AgentKind::Ql | AgentKind::Dqn => Activation::Relu,
            _ => Activation::Tanh,
        });
        let output_dim = action_count + self.kind.has_value_head() as usize;
        let net = MlpSpec::new(state_dim, self.hidden.clone(), output_dim, activation);
        let mut config = AgentConfig::new(self.kind, net, self.lr);
        config.batch_size = self.batch_size;
        config.ppo_clip = self.ppo_clip;
        config.ppo_epochs = self.ppo_epochs;
        config.dqn_epsilon = EpsilonSchedule {
            start: self.dqn_epsilon_start,
            end: self.dqn_epsilon_end,
            fraction: self.dqn_epsilon_fraction,
        };
        config.dqn_buffer_capacity = self.dqn_buffer_capacity;
        config.ql_epsilon = self.ql_epsilon;
        if let Some(init) = self.init {
            config.init = init;
        }
        config
    }
}

impl RunConfig {
    /// Parses a config from JSON text. Paths are interpreted relative to
    /// `base_dir` (normally the config file's directory).
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut config: RunConfig = serde_json::from_str(text)?;
        config.resolve_paths(base_dir);
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        match &mut self.env {
            EnvConfig::Classification {
                dataset:
                    DatasetConfig::Idx {
                        train_images,
                        train_labels,
                        eval_images,
                        eval_labels,
                        ..
                    },
            } => {
                fix(train_images);
                fix(train_labels);
                fix(eval_images);
                fix(eval_labels);
            }
            EnvConfig::Genre {
                genre_features,
                track_features,
                ..
            } => {
                if let Some(p) = genre_features {
                    fix(p);
                }
                if let Some(p) = track_features {
                    fix(p);
                }
            }
            _ => {}
        }
        fix(&mut self.output_dir);
    }

    /// Structural validation plus file-existence checks, with field paths in
    /// every message.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "at least one seed is required"));
        }
        if self.eval_every == 0 {
            return Err(invalid("eval_every", "must be >= 1"));
        }
        // total_interactions = 0 is the degenerate baseline-only run;
        // otherwise the budget must cover at least one checkpoint.
        if self.total_interactions > 0 && self.total_interactions < self.eval_every {
            return Err(invalid(
                "total_interactions",
                format!(
                    "must be 0 or >= eval_every ({}), got {}",
                    self.eval_every, self.total_interactions
                ),
            ));
        }
        if self.eval_size == 0 {
            return Err(invalid("eval_size", "must be >= 1"));
        }
        if self.agents.is_empty() {
            return Err(invalid("agents", "at least one agent is required"));
        }
        match &self.env {
            EnvConfig::Classification {
                dataset:
                    DatasetConfig::Idx {
                        train_images,
                        train_labels,
                        eval_images,
                        eval_labels,
                        ..
                    },
            } => {
                for (field, path) in [
                    ("env.dataset.train_images", train_images),
                    ("env.dataset.train_labels", train_labels),
                    ("env.dataset.eval_images", eval_images),
                    ("env.dataset.eval_labels", eval_labels),
                ] {
                    if !path.is_file() {
                        return Err(ConfigError::MissingFile {
                            field: field.to_string(),
                            path: path.clone(),
                        });
                    }
                }
            }
            EnvConfig::Classification {
                dataset: DatasetConfig::Synthetic { classes, train, eval, .. },
            } => {
                if *classes != 10 {
                    return Err(invalid(
                        "env.dataset.classes",
                        "the classification bandit has a 10-label action space",
                    ));
                }
                if *train == 0 || *eval == 0 {
                    return Err(invalid("env.dataset", "train and eval sizes must be >= 1"));
                }
            }
            EnvConfig::Genre {
                genre_features,
                track_features,
                epsilon,
            } => {
                for (field, path) in [
                    ("env.genre_features", genre_features),
                    ("env.track_features", track_features),
                ] {
                    if let Some(p) = path {
                        if !p.is_file() {
                            return Err(ConfigError::MissingFile {
                                field: field.to_string(),
                                path: p.clone(),
                            });
                        }
                    }
                }
                if !(*epsilon > 0.0) {
                    return Err(invalid("env.epsilon", "feedback threshold must be > 0"));
                }
            }
            EnvConfig::Click {
                products,
                state_dim,
                beta,
            } => {
                if *products == 0 || *state_dim == 0 {
                    return Err(invalid("env", "products and state_dim must be >= 1"));
                }
                if !(*beta >= 0.0) {
                    return Err(invalid("env.beta", "temperature must be >= 0"));
                }
            }
            EnvConfig::Preference {
                actions,
                state_dim,
                noise,
            } => {
                if *actions == 0 || *state_dim == 0 {
                    return Err(invalid("env", "actions and state_dim must be >= 1"));
                }
                if !(*noise >= 0.0) {
                    return Err(invalid("env.noise", "noise scale must be >= 0"));
                }
            }
        }
        Ok(())
    }

    /// Constructs the environment for one run from `(config, seed)`; frozen
    /// environment internals (embeddings, feature tables, synthetic images)
    /// come from the seed's env-init stream.
    pub fn build_env(&self, rng: &mut ChaCha8Rng) -> Result<Box<dyn ContextualBandit>, ConfigError> {
        match &self.env {
            EnvConfig::Classification { dataset } => match dataset {
                DatasetConfig::Idx {
                    train_images,
                    train_labels,
                    eval_images,
                    eval_labels,
                    train_subset,
                    eval_subset,
                } => {
                    let train = load_idx_pair(train_images, train_labels)?;
                    let eval = load_idx_pair(eval_images, eval_labels)?;
                    Ok(Box::new(ClassificationBandit::with_subsets(
                        train,
                        eval,
                        *train_subset,
                        *eval_subset,
                        rng,
                    )?))
                }
                DatasetConfig::Synthetic {
                    classes,
                    rows,
                    cols,
                    train,
                    eval,
                    noise,
                } => {
                    let spec = SyntheticImageSpec {
                        classes: *classes,
                        rows: *rows,
                        cols: *cols,
                        on_fraction: 0.2,
                        noise: *noise,
                    };
                    let mut sets = crate::envs::generate_image_sets(&spec, &[*train, *eval], rng);
                    let eval_set = sets.pop().expect("two sets");
                    let train_set = sets.pop().expect("two sets");
                    Ok(Box::new(ClassificationBandit::new(train_set, eval_set)?))
                }
            },
            EnvConfig::Genre {
                genre_features,
                track_features,
                epsilon,
            } => match (genre_features, track_features) {
                (Some(g), Some(t)) => {
                    let genres = read_feature_rows(g, GENRE_COUNT)?;
                    let tracks = read_feature_rows(t, TRACK_COUNT)?;
                    Ok(Box::new(GenreBandit::from_features(genres, tracks, *epsilon)?))
                }
                (None, None) => Ok(Box::new(GenreBandit::generate(
                    GENRE_COUNT,
                    TRACK_COUNT,
                    10,
                    *epsilon,
                    rng,
                )?)),
                _ => Err(invalid(
                    "env",
                    "provide both genre_features and track_features, or neither",
                )),
            },
            EnvConfig::Click {
                products,
                state_dim,
                beta,
            } => Ok(Box::new(ClickBandit::new(*products, *state_dim, *beta, rng)?)),
            EnvConfig::Preference {
                actions,
                state_dim,
                noise,
            } => Ok(Box::new(PreferenceBandit::new(
                *actions, *state_dim, *noise, rng,
            )?)),
        }
    }

    /// Builds one agent against the environment's dimensions.
    pub fn build_agent(
        &self,
        spec: &AgentSpecConfig,
        env: &dyn ContextualBandit,
        rng: &mut ChaCha8Rng,
    ) -> Result<Agent, ConfigError> {
        let config = spec.build(env.state_dim(), env.action_count());
        Ok(Agent::new(
            config,
            env.action_count(),
            env.state_dim(),
            self.total_interactions,
            rng,
        )?)
    }

    /// Stable per-agent directory labels: explicit labels win, kind names are
    /// deduplicated with a numeric suffix.
    pub fn agent_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = Vec::with_capacity(self.agents.len());
        for spec in &self.agents {
            let base = spec
                .label
                .clone()
                .unwrap_or_else(|| spec.kind.name().to_string());
            let mut label = base.clone();
            let mut n = 2;
            while labels.contains(&label) {
                label = format!("{base}{n}");
                n += 1;
            }
            labels.push(label);
        }
        labels
    }
}

fn load_idx_pair(images: &Path, labels: &Path) -> Result<LabeledImageSet, ConfigError> {
    Ok(load_idx_files(images, labels)?)
}

fn read_feature_rows(path: &Path, expected: usize) -> Result<Vec<Vec<f64>>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let table = parse_feature_csv(&text, Some(expected))?;
    Ok(table.rows.iter().map(|r| r.to_vec()).collect())
}
