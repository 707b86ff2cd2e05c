//! The five bandit agents, built directly on their loss gradients.
//!
//! Policy-optimization agents (PG, A2C, PPO) sample actions from
//! `softmax(Z(s))` and descend `-advantage * grad log pi(a|s)` (plus a value
//! regression term where a value head exists). Q-learning agents (QL, DQN)
//! regress the selected output `z_a(s)` onto the observed reward and act
//! epsilon-greedily on the outputs. Every gradient is assembled as a
//! coefficient row over network outputs and pulled through one reverse pass,
//! so each agent is literally its update rule; there is no optimizer state
//! beyond PPO's policy snapshot and DQN's replay buffer.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::Interaction;
use crate::numerics::{forward, sgd_step, softmax, vjp, MlpSpec, NetworkParams, NumericsError};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error("PPO snapshot params not set")]
    SnapshotMissing,
    #[error("non-finite parameters after the update at step {step}")]
    NonFiniteParams { step: u64 },
    #[error("train_step needs a nonempty batch")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Pg,
    Ql,
    A2c,
    Dqn,
    Ppo,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Pg => "pg",
            AgentKind::Ql => "ql",
            AgentKind::A2c => "a2c",
            AgentKind::Dqn => "dqn",
            AgentKind::Ppo => "ppo",
        }
    }

    /// PG, A2C and PPO ascend the return through `log pi`; QL and DQN regress
    /// outputs onto rewards.
    pub fn is_policy_optimization(self) -> bool {
        matches!(self, AgentKind::Pg | AgentKind::A2c | AgentKind::Ppo)
    }

    /// A2C and PPO carry a scalar value head on a shared trunk, so their
    /// network has `K + 1` outputs.
    pub fn has_value_head(self) -> bool {
        matches!(self, AgentKind::A2c | AgentKind::Ppo)
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// How to fill the initial parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// All zeros: the symmetric start used by the linear sample agents
    /// (uniform policy, all-tied Q values).
    Zero,
    /// Uniform per layer in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`.
    UniformFanIn,
}

/// Linear epsilon decay over the first `fraction` of the interaction budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub fraction: f64,
}

impl EpsilonSchedule {
    pub fn value_at(&self, step: u64, horizon: u64) -> f64 {
        let decay_steps = (self.fraction * horizon as f64).ceil();
        if decay_steps <= 0.0 {
            return self.end;
        }
        let t = step as f64 / decay_steps;
        if t >= 1.0 {
            return self.end;
        }
        self.start + (self.end - self.start) * t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub net: MlpSpec,
    pub lr: f64,
    pub batch_size: usize,
    pub ppo_clip: f64,
    pub ppo_epochs: usize,
    pub dqn_epsilon: EpsilonSchedule,
    pub dqn_buffer_capacity: usize,
    pub ql_epsilon: f64,
    pub init: InitScheme,
}

impl AgentConfig {
    /// Defaults for a given agent kind and network. Batch size 32, PPO clip
    /// 0.2 with 10 epochs, DQN epsilon 1.0 -> 0.05 over the first 10% of
    /// interactions with a 50k replay buffer, QL epsilon 0.1. Linear
    /// networks start at zero (the symmetric start); MLPs start uniform.
    pub fn new(kind: AgentKind, net: MlpSpec, lr: f64) -> Self {
        let init = if net.hidden.is_empty() {
            InitScheme::Zero
        } else {
            InitScheme::UniformFanIn
        };
        AgentConfig {
            kind,
            net,
            lr,
            batch_size: 32,
            ppo_clip: 0.2,
            ppo_epochs: 10,
            dqn_epsilon: EpsilonSchedule {
                start: 1.0,
                end: 0.05,
                fraction: 0.1,
            },
            dqn_buffer_capacity: 50_000,
            ql_epsilon: 0.1,
            init,
        }
    }

    pub fn validate(&self, action_count: usize, state_dim: usize) -> Result<(), AgentError> {
        self.net.validate().map_err(AgentError::Numerics)?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(AgentError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(AgentError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(self.ppo_clip > 0.0 && self.ppo_clip < 1.0) {
            return Err(AgentError::InvalidConfig(format!(
                "ppo_clip must lie in (0,1), got {}",
                self.ppo_clip
            )));
        }
        if self.ppo_epochs == 0 {
            return Err(AgentError::InvalidConfig("ppo_epochs must be >= 1".into()));
        }
        for (name, eps) in [
            ("dqn_epsilon.start", self.dqn_epsilon.start),
            ("dqn_epsilon.end", self.dqn_epsilon.end),
            ("ql_epsilon", self.ql_epsilon),
        ] {
            if !(0.0..=1.0).contains(&eps) {
                return Err(AgentError::InvalidConfig(format!(
                    "{name} must lie in [0,1], got {eps}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.dqn_epsilon.fraction) {
            return Err(AgentError::InvalidConfig(
                "dqn_epsilon.fraction must lie in [0,1]".into(),
            ));
        }
        if self.kind == AgentKind::Dqn && self.dqn_buffer_capacity < self.batch_size {
            return Err(AgentError::InvalidConfig(
                "dqn_buffer_capacity must be >= batch_size".into(),
            ));
        }
        if self.net.input_dim != state_dim {
            return Err(AgentError::InvalidConfig(format!(
                "network input_dim {} does not match state dim {state_dim}",
                self.net.input_dim
            )));
        }
        let expected_outputs = action_count + self.kind.has_value_head() as usize;
        if self.net.output_dim != expected_outputs {
            return Err(AgentError::InvalidConfig(format!(
                "{} network needs {expected_outputs} outputs for {action_count} actions, got {}",
                self.kind, self.net.output_dim
            )));
        }
        Ok(())
    }
}

/// FIFO store of past interactions for DQN.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Interaction>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            items: VecDeque::new(),
            capacity,
        }
    }

    pub fn push(&mut self, item: Interaction) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Uniform sample without replacement (`n` capped by the buffer size).
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Interaction> {
        let n = n.min(self.items.len());
        rand::seq::index::sample(rng, self.items.len(), n)
            .iter()
            .map(|i| self.items[i].clone())
            .collect()
    }
}

/// A trainable agent: parameters plus whatever extra state its kind needs.
///
/// Single-writer by construction: one training loop owns the agent, and
/// evaluation reads through `&self`.
pub struct Agent {
    config: AgentConfig,
    action_count: usize,
    params: NetworkParams,
    /// PPO's previous policy snapshot, refreshed once per collected batch.
    snapshot: Option<NetworkParams>,
    buffer: ReplayBuffer,
    replay_rng: ChaCha8Rng,
    pending: Vec<Interaction>,
    steps_seen: u64,
    horizon: u64,
}

impl Agent {
    /// Builds the agent and initializes its parameters from the agent-init
    /// stream. `horizon` is the planned number of interactions, which the
    /// DQN epsilon schedule is defined over.
    pub fn new(
        config: AgentConfig,
        action_count: usize,
        state_dim: usize,
        horizon: u64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, AgentError> {
        config.validate(action_count, state_dim)?;
        let params = match config.init {
            InitScheme::Zero => NetworkParams::zeros(config.net.clone())?,
            InitScheme::UniformFanIn => NetworkParams::init(config.net.clone(), rng)?,
        };
        let replay_rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let buffer = ReplayBuffer::new(config.dqn_buffer_capacity.max(1));
        Ok(Agent {
            config,
            action_count,
            params,
            snapshot: None,
            buffer,
            replay_rng,
            pending: Vec::new(),
            steps_seen: 0,
            horizon,
        })
    }

    /// Builds an agent around explicit parameters (the verifier and tests
    /// drive agents at chosen points in parameter space).
    pub fn with_params(
        config: AgentConfig,
        action_count: usize,
        params: NetworkParams,
        horizon: u64,
    ) -> Result<Self, AgentError> {
        config.validate(action_count, params.spec().input_dim)?;
        if params.spec() != &config.net {
            return Err(AgentError::InvalidConfig(
                "params spec does not match config.net".into(),
            ));
        }
        let buffer = ReplayBuffer::new(config.dqn_buffer_capacity.max(1));
        Ok(Agent {
            config,
            action_count,
            params,
            snapshot: None,
            buffer,
            replay_rng: ChaCha8Rng::seed_from_u64(0),
            pending: Vec::new(),
            steps_seen: 0,
            horizon,
        })
    }

    pub fn kind(&self) -> AgentKind {
        self.config.kind
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn snapshot_params(&self) -> Option<&NetworkParams> {
        self.snapshot.as_ref()
    }

    /// Pins the PPO snapshot explicitly (verifier and tests).
    pub fn set_snapshot(&mut self, snapshot: NetworkParams) {
        self.snapshot = Some(snapshot);
    }

    pub fn steps_seen(&self) -> u64 {
        self.steps_seen
    }

    /// The exploration rate in force at the current step: the fixed
    /// `ql_epsilon` for QL, the decayed schedule value for DQN, 0 otherwise.
    pub fn epsilon_now(&self) -> f64 {
        match self.config.kind {
            AgentKind::Ql => self.config.ql_epsilon,
            AgentKind::Dqn => self.config.dqn_epsilon.value_at(self.steps_seen, self.horizon),
            _ => 0.0,
        }
    }

    /// Network outputs for a state; `K` logits/Q-values, plus the value in
    /// the last slot for A2C/PPO.
    pub fn outputs(&self, state: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(forward(&self.params, state)?)
    }

    fn policy_probs(&self, params: &NetworkParams, state: &[f64]) -> Result<Vec<f64>, AgentError> {
        let z = forward(params, state)?;
        Ok(softmax(&z[..self.action_count])?)
    }

    fn argmax_set(q: &[f64]) -> Vec<usize> {
        let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        q.iter()
            .enumerate()
            .filter(|(_, &v)| v == best)
            .map(|(i, _)| i)
            .collect()
    }

    /// Picks an action. PO agents sample the softmax policy; Q agents act
    /// epsilon-greedily with argmax ties broken uniformly at random from the
    /// action-sampling stream.
    pub fn act(&self, state: &[f64], rng: &mut ChaCha8Rng) -> Result<usize, AgentError> {
        if self.config.kind.is_policy_optimization() {
            let pi = self.policy_probs(&self.params, state)?;
            Ok(crate::rng::sample_categorical(&pi, rng))
        } else {
            let q = self.outputs(state)?;
            let eps = self.epsilon_now();
            if rng.gen::<f64>() < eps {
                return Ok(rng.gen_range(0..self.action_count));
            }
            let ties = Self::argmax_set(&q);
            if ties.len() == 1 {
                Ok(ties[0])
            } else {
                Ok(ties[rng.gen_range(0..ties.len())])
            }
        }
    }

    /// The action distribution the agent currently plays: the softmax policy
    /// for PO agents; for Q agents, the epsilon-greedy distribution actually
    /// used to act at this training step, with tied maximizers sharing the
    /// greedy mass.
    pub fn policy_distribution(&self, state: &[f64]) -> Result<Vec<f64>, AgentError> {
        if self.config.kind.is_policy_optimization() {
            return self.policy_probs(&self.params, state);
        }
        let q = self.outputs(state)?;
        let eps = self.epsilon_now();
        let ties = Self::argmax_set(&q);
        let k = self.action_count as f64;
        let greedy_share = (1.0 - eps) / ties.len() as f64;
        let mut probs = vec![eps / k; self.action_count];
        for t in ties {
            probs[t] += greedy_share;
        }
        Ok(probs)
    }

    /// `grad L_pg = -r [1(a=k) - pi(k|s)]_k x grad Z(s)`.
    pub fn pg_loss_grad(&self, state: &[f64], action: usize, reward: f64) -> Result<Vec<f64>, AgentError> {
        self.check_action(action)?;
        let pi = self.policy_probs(&self.params, state)?;
        let coeffs: Vec<f64> = (0..self.action_count)
            .map(|k| -reward * (indicator(action, k) - pi[k]))
            .collect();
        Ok(vjp(&self.params, state, &coeffs)?)
    }

    /// `grad L_ql = 2 (z_a(s) - r) grad z_a(s)`: only the selected output's
    /// weights move.
    pub fn ql_loss_grad(&self, state: &[f64], action: usize, reward: f64) -> Result<Vec<f64>, AgentError> {
        self.check_action(action)?;
        let z = self.outputs(state)?;
        let mut coeffs = vec![0.0; self.params.spec().output_dim];
        coeffs[action] = 2.0 * (z[action] - reward);
        Ok(vjp(&self.params, state, &coeffs)?)
    }

    /// `grad L_dqn = -2 (r - z_a(s)) grad z_a(s)`. Bandit episodes are
    /// single-step, so the regression target is exactly the reward and this
    /// coincides with the QL gradient.
    pub fn dqn_loss_grad(&self, state: &[f64], action: usize, reward: f64) -> Result<Vec<f64>, AgentError> {
        self.ql_loss_grad(state, action, reward)
    }

    /// `grad L_a2c = -(r - v(s)) (grad v(s) + [1(a=k) - pi(k|s)]_k x grad Z(s))`;
    /// the advantage couples the policy rows and the value row.
    pub fn a2c_loss_grad(&self, state: &[f64], action: usize, reward: f64) -> Result<Vec<f64>, AgentError> {
        self.check_action(action)?;
        let z = self.outputs(state)?;
        let k = self.action_count;
        let pi = softmax(&z[..k])?;
        let adv = reward - z[k];
        let mut coeffs = vec![0.0; k + 1];
        for (i, c) in coeffs[..k].iter_mut().enumerate() {
            *c = -adv * (indicator(action, i) - pi[i]);
        }
        coeffs[k] = -adv;
        Ok(vjp(&self.params, state, &coeffs)?)
    }

    /// PPO clip gradient. Inside the band `|1 - pi/pi~| < clip` the policy
    /// term is the ratio-weighted A2C policy term with the advantage frozen
    /// at the snapshot's value estimate; outside the band the policy term
    /// vanishes. The value-regression term is always present.
    pub fn ppo_loss_grad(&self, state: &[f64], action: usize, reward: f64) -> Result<Vec<f64>, AgentError> {
        self.check_action(action)?;
        let snapshot = self.snapshot.as_ref().ok_or(AgentError::SnapshotMissing)?;
        let k = self.action_count;

        let z = self.outputs(state)?;
        let pi = softmax(&z[..k])?;
        let z_snap = forward(snapshot, state)?;
        let pi_snap = softmax(&z_snap[..k])?;

        let adv = reward - z_snap[k];
        let ratio = pi[action] / pi_snap[action];
        let in_band = (1.0 - ratio).abs() < self.config.ppo_clip;

        let mut coeffs = vec![0.0; k + 1];
        if in_band {
            for (i, c) in coeffs[..k].iter_mut().enumerate() {
                *c = -adv * ratio * (indicator(action, i) - pi[i]);
            }
        }
        coeffs[k] = -(reward - z[k]);
        Ok(vjp(&self.params, state, &coeffs)?)
    }

    /// Per-interaction loss gradient for this agent's kind.
    pub fn loss_grad(&self, state: &[f64], action: usize, reward: f64) -> Result<Vec<f64>, AgentError> {
        match self.config.kind {
            AgentKind::Pg => self.pg_loss_grad(state, action, reward),
            AgentKind::Ql => self.ql_loss_grad(state, action, reward),
            AgentKind::A2c => self.a2c_loss_grad(state, action, reward),
            AgentKind::Dqn => self.dqn_loss_grad(state, action, reward),
            AgentKind::Ppo => self.ppo_loss_grad(state, action, reward),
        }
    }

    /// Mean loss gradient over a batch.
    pub fn batch_gradient(&self, batch: &[Interaction]) -> Result<Vec<f64>, AgentError> {
        if batch.is_empty() {
            return Err(AgentError::EmptyBatch);
        }
        let m = self.params.param_count();
        let mut grad = vec![0.0; m];
        for it in batch {
            let g = self.loss_grad(&it.state, it.action, it.reward)?;
            for (acc, gi) in grad.iter_mut().zip(g) {
                *acc += gi;
            }
        }
        let n = batch.len() as f64;
        for g in &mut grad {
            *g /= n;
        }
        Ok(grad)
    }

    fn apply_gradient(&mut self, grad: &[f64]) -> Result<(), AgentError> {
        match sgd_step(&self.params, grad, self.config.lr) {
            Ok(p) => {
                self.params = p;
                Ok(())
            }
            Err(NumericsError::NonFinite { .. }) => Err(AgentError::NonFiniteParams {
                step: self.steps_seen,
            }),
            Err(e) => Err(e.into()),
        }
    }

    /// One batch update: `theta' = theta - (lr/N) sum_n grad L(s_n,a_n,r_n)`.
    ///
    /// PPO refreshes its policy snapshot once, then repeats the inner update
    /// `ppo_epochs` times on the same batch with the snapshot fixed. DQN
    /// first inserts the incoming interactions into the replay buffer, then
    /// trains on a uniform sample of `batch_size` from it.
    pub fn train_step(&mut self, batch: &[Interaction]) -> Result<(), AgentError> {
        if batch.is_empty() {
            return Err(AgentError::EmptyBatch);
        }
        match self.config.kind {
            AgentKind::Pg | AgentKind::Ql | AgentKind::A2c => {
                let grad = self.batch_gradient(batch)?;
                self.apply_gradient(&grad)
            }
            AgentKind::Ppo => {
                self.snapshot = Some(self.params.clone());
                for _ in 0..self.config.ppo_epochs {
                    let grad = self.batch_gradient(batch)?;
                    self.apply_gradient(&grad)?;
                }
                Ok(())
            }
            AgentKind::Dqn => {
                for it in batch {
                    self.buffer.push(it.clone());
                }
                let replay = self
                    .buffer
                    .sample(self.config.batch_size, &mut self.replay_rng);
                let grad = self.batch_gradient(&replay)?;
                self.apply_gradient(&grad)
            }
        }
    }

    /// Feeds one interaction into the agent's batch schedule. Returns `true`
    /// when a parameter update was triggered.
    pub fn observe(&mut self, interaction: Interaction) -> Result<bool, AgentError> {
        self.steps_seen += 1;
        self.pending.push(interaction);
        if self.pending.len() >= self.config.batch_size {
            let batch = std::mem::take(&mut self.pending);
            self.train_step(&batch)?;
            return Ok(true);
        }
        Ok(false)
    }

    fn check_action(&self, action: usize) -> Result<(), AgentError> {
        if action >= self.action_count {
            return Err(AgentError::Numerics(NumericsError::ActionOutOfRange {
                action,
                count: self.action_count,
            }));
        }
        Ok(())
    }
}

#[inline]
fn indicator(a: usize, k: usize) -> f64 {
    (a == k) as u8 as f64
}
