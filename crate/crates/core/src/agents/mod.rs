//! Learners sharing one interface: Variational DQN, DQN with ε-greedy
//! exploration, and NoisyNet.
//!
//! Every agent owns a replay buffer, a principal and a target copy of its
//! parameters (or belief), and a step counter. The harness calls [`Agent::act`],
//! then [`Agent::observe`] with the resulting transition, then
//! [`Agent::train_step`] once per environment step.

mod dqn;
mod noisy;
mod vdqn;

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{argmax, Activation, MlpArch, MlpParams, Trace};
use crate::variational::{LocalSampler, MeanFieldGaussian, VariationalHyper};
use crate::{Error, Result};

pub use dqn::DqnAgent;
pub use noisy::{act_noisy, NoisyAgent, NoisyParams};
pub use vdqn::{act_variational, Belief, VariationalAgent};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
}

/// FIFO ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            storage: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() == self.capacity {
            self.storage.pop_front();
        }
        self.storage.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.storage.get(i)
    }

    /// `n` transitions drawn uniformly with replacement, or `None` while the
    /// buffer holds fewer than `n`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Option<Vec<&Transition>> {
        if n == 0 || self.storage.len() < n {
            return None;
        }
        let len = self.storage.len();
        Some((0..n).map(|_| &self.storage[rng.random_range(0..len)]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    #[serde(alias = "vdqn")]
    Variational,
    Dqn,
    #[serde(alias = "noisynet")]
    Noisy,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Variational, AgentKind::Dqn, AgentKind::Noisy];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Variational => "variational",
            AgentKind::Dqn => "dqn",
            AgentKind::Noisy => "noisy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "variational" | "vdqn" => Some(AgentKind::Variational),
            "dqn" => Some(AgentKind::Dqn),
            "noisy" | "noisynet" => Some(AgentKind::Noisy),
            _ => None,
        }
    }
}

impl std::fmt::Display for AgentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Which distribution family the variational agent maintains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefFamily {
    #[default]
    MeanField,
    /// `θ = δ(φ)`: MAP updates, greedy acting. Recovers DQN.
    PointMass,
}

/// How per-tuple target networks are drawn for Variational DQN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSampling {
    /// Draw each unit's pre-activation directly (same distribution, fewer normals).
    #[default]
    Local,
    /// Materialize a full parameter vector for every tuple.
    FullDraw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub batch_size: usize,
    /// Target network sync period τ, in environment steps.
    pub target_period: usize,
    /// DQN only.
    pub epsilon: f64,
    /// Variational DQN only.
    pub hyper: VariationalHyper,
    /// Initial standard deviation of every mean-field component.
    pub init_sigma: f64,
    pub family: BeliefFamily,
    pub target_sampling: TargetSampling,
    /// NoisyNet only.
    pub noisy_sigma0: f64,
    pub buffer_capacity: usize,
    pub min_buffer_before_training: usize,
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            alpha: 1e-3,
            batch_size: 64,
            target_period: 100,
            epsilon: 0.1,
            hyper: VariationalHyper::default(),
            init_sigma: 0.017,
            family: BeliefFamily::MeanField,
            target_sampling: TargetSampling::Local,
            noisy_sigma0: 0.017,
            buffer_capacity: 50_000,
            min_buffer_before_training: 1000,
            hidden_sizes: vec![64],
            activation: Activation::Relu,
        }
    }
}

/// Default SGD step size for Variational DQN. The KL objective weights the
/// batch-summed squared error by `1/(2σ²) = 50`, so its gradient is far larger
/// than the mean-squared DQN loss; a step of `1e-3` diverges under plain SGD.
pub const VARIATIONAL_ALPHA: f64 = 3e-5;

impl AgentConfig {
    /// Defaults with the step size suited to `kind`.
    pub fn for_kind(kind: AgentKind) -> Self {
        let mut cfg = Self::default();
        if kind == AgentKind::Variational {
            cfg.alpha = VARIATIONAL_ALPHA;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(Error::config(format!("agent.{key}"), msg));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", format!("must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha", format!("must be positive, got {}", self.alpha));
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return bad(
                "batch_size",
                format!("must lie in [1, buffer_capacity = {}], got {}", self.buffer_capacity, self.batch_size),
            );
        }
        if self.target_period == 0 {
            return bad("target_period", "must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad("epsilon", format!("must lie in [0, 1], got {}", self.epsilon));
        }
        if !(self.init_sigma > 0.0) {
            return bad("init_sigma", format!("must be positive, got {}", self.init_sigma));
        }
        if !(self.noisy_sigma0 >= 0.0) {
            return bad("noisy_sigma0", format!("must be non-negative, got {}", self.noisy_sigma0));
        }
        if self.hidden_sizes.contains(&0) {
            return bad("hidden_sizes", "layer sizes must be positive".into());
        }
        Ok(())
    }

    pub fn arch(&self, obs_dim: usize, action_count: usize) -> Result<MlpArch> {
        MlpArch::new(obs_dim, self.hidden_sizes.clone(), action_count, self.activation)
    }

    /// Samples needed before the first update.
    pub fn warmup(&self) -> usize {
        self.min_buffer_before_training.max(self.batch_size)
    }
}

/// Independent RNG streams so that, e.g., exploration draws never shift replay sampling.
#[derive(Debug, Clone)]
pub struct AgentRng {
    pub init: ChaCha8Rng,
    pub explore: ChaCha8Rng,
    pub replay: ChaCha8Rng,
    pub noise: ChaCha8Rng,
}

impl AgentRng {
    pub fn new(seed: u64) -> Self {
        let stream = |k| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(k);
            r
        };
        Self {
            init: stream(1),
            explore: stream(2),
            replay: stream(3),
            noise: stream(4),
        }
    }
}

pub trait Agent: Send {
    fn kind(&self) -> AgentKind;
    fn act(&mut self, obs: &[f64]) -> usize;
    fn observe(&mut self, t: Transition);
    /// One update (if the buffer is ready); `None` when skipped.
    fn train_step(&mut self) -> Result<Option<f64>>;
    fn sync_target(&mut self);
    /// Environment steps counted so far.
    fn steps(&self) -> usize;
}

pub fn build_agent(
    kind: AgentKind,
    cfg: &AgentConfig,
    obs_dim: usize,
    action_count: usize,
    seed: u64,
) -> Result<Box<dyn Agent>> {
    Ok(match kind {
        AgentKind::Variational => Box::new(VariationalAgent::new(cfg.clone(), obs_dim, action_count, seed)?),
        AgentKind::Dqn => Box::new(DqnAgent::new(cfg.clone(), obs_dim, action_count, seed)?),
        AgentKind::Noisy => Box::new(NoisyAgent::new(cfg.clone(), obs_dim, action_count, seed)?),
    })
}

/// With probability ε a uniform random action, otherwise the greedy one.
pub fn act_epsilon_greedy<R: Rng + ?Sized>(params: &MlpParams, obs: &[f64], epsilon: f64, rng: &mut R) -> usize {
    let explore = rng.random::<f64>() < epsilon;
    if explore {
        rng.random_range(0..params.arch().output_dim)
    } else {
        params.greedy_action(obs).expect("observation matches network input")
    }
}

/// Source of `max_a' Q⁻(s', a')` for bootstrapped targets.
pub trait TargetSource {
    fn max_next_q(&mut self, next_obs: &[f64]) -> f64;
}

/// A single fixed target network.
pub struct FixedTarget<'a> {
    params: &'a MlpParams,
    trace: Trace,
}

impl<'a> FixedTarget<'a> {
    pub fn new(params: &'a MlpParams) -> Self {
        Self {
            params,
            trace: Trace::default(),
        }
    }
}

impl TargetSource for FixedTarget<'_> {
    fn max_next_q(&mut self, next_obs: &[f64]) -> f64 {
        let q = self.trace.forward(self.params.arch(), self.params.values(), next_obs);
        q[argmax(q)]
    }
}

/// An independent `θ⁻ ~ q_{φ⁻}` for every call.
pub struct PerTupleTarget<'a, R: Rng> {
    mode: PerTupleMode<'a>,
    rng: &'a mut R,
}

enum PerTupleMode<'a> {
    Local(&'a mut LocalSampler),
    Full(&'a MeanFieldGaussian, Trace),
}

impl<'a, R: Rng> PerTupleTarget<'a, R> {
    pub fn local(sampler: &'a mut LocalSampler, rng: &'a mut R) -> Self {
        Self {
            mode: PerTupleMode::Local(sampler),
            rng,
        }
    }

    pub fn full(dist: &'a MeanFieldGaussian, rng: &'a mut R) -> Self {
        Self {
            mode: PerTupleMode::Full(dist, Trace::default()),
            rng,
        }
    }
}

impl<R: Rng> TargetSource for PerTupleTarget<'_, R> {
    fn max_next_q(&mut self, next_obs: &[f64]) -> f64 {
        match &mut self.mode {
            PerTupleMode::Local(sampler) => {
                let q = sampler.sample_q(next_obs, self.rng);
                q[argmax(q)]
            }
            PerTupleMode::Full(dist, trace) => {
                let (theta, _) = crate::variational::sample_theta(dist, self.rng);
                let q = trace.forward(theta.arch(), theta.values(), next_obs);
                q[argmax(q)]
            }
        }
    }
}

/// `d_j = r_j + γ max_a' Q⁻(s'_j, a')`, or `r_j` when the transition ended the episode.
pub fn compute_targets(batch: &[&Transition], source: &mut dyn TargetSource, gamma: f64) -> Vec<f64> {
    batch
        .iter()
        .map(|t| {
            if t.done {
                t.reward
            } else {
                t.reward + gamma * source.max_next_q(&t.next_obs)
            }
        })
        .collect()
}

/// Sum over the batch of `upstream_j · ∇Q(obs_j, a_j)` with `upstream_j = coef · (Q - d_j)`;
/// returns the gradient and `Σ (Q - d_j)²`.
pub(crate) fn residual_grad(params: &MlpParams, batch: &[&Transition], targets: &[f64], coef: f64) -> (Vec<f64>, f64) {
    let mut grad = vec![0.0; params.values().len()];
    let mut trace = Trace::default();
    let mut sq = 0.0;
    for (t, &d) in batch.iter().zip(targets) {
        let q = trace.forward(params.arch(), params.values(), &t.obs)[t.action];
        let r = q - d;
        sq += r * r;
        trace.accumulate_grad(params.arch(), params.values(), t.action, coef * r, &mut grad);
    }
    (grad, sq)
}


/// Divergence guard shared by the train steps.
pub(crate) fn ensure_finite(what: &str, values: &[f64], step: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged(format!("non-finite {what} at train step {step}")))
    }
}
