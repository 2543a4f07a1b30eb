use crate::nn::{init_params, InitScheme, MlpParams};
use crate::Result;

use super::{ensure_finite, 
    act_epsilon_greedy, compute_targets, residual_grad, Agent, AgentConfig, AgentKind, AgentRng, FixedTarget,
    ReplayBuffer, Transition,
};

/// DQN: ε-greedy acting, mean squared Bellman error against a periodically synced target network.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    cfg: AgentConfig,
    online: MlpParams,
    target: MlpParams,
    buffer: ReplayBuffer,
    counter: usize,
    rng: AgentRng,
}

impl DqnAgent {
    pub fn new(cfg: AgentConfig, obs_dim: usize, action_count: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let arch = cfg.arch(obs_dim, action_count)?;
        let mut rng = AgentRng::new(seed);
        let online = init_params(arch, &mut rng.init, InitScheme::UniformFanIn);
        Ok(Self {
            target: online.clone(),
            online,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            counter: 0,
            cfg,
            rng,
        })
    }

    pub fn params(&self) -> &MlpParams {
        &self.online
    }

    pub fn params_mut(&mut self) -> &mut MlpParams {
        &mut self.online
    }

    pub fn target_params(&self) -> &MlpParams {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    /// Gradient of `(1/B) Σ (Q_θ(s_j, a_j) - d_j)²` at the current parameters.
    pub fn loss_grad(&self, batch: &[&Transition], targets: &[f64]) -> (Vec<f64>, f64) {
        let b = batch.len() as f64;
        let (grad, sq) = residual_grad(&self.online, batch, targets, 2.0 / b);
        (grad, sq / b)
    }
}

impl Agent for DqnAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Dqn
    }

    fn act(&mut self, obs: &[f64]) -> usize {
        act_epsilon_greedy(&self.online, obs, self.cfg.epsilon, &mut self.rng.explore)
    }

    fn observe(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    fn train_step(&mut self) -> Result<Option<f64>> {
        self.counter += 1;
        let mut loss = None;
        if self.buffer.len() >= self.cfg.warmup() {
            let batch = self
                .buffer
                .sample(self.cfg.batch_size, &mut self.rng.replay)
                .expect("buffer is ready");
            let targets = compute_targets(&batch, &mut FixedTarget::new(&self.target), self.cfg.gamma);
            ensure_finite("targets", &targets, self.counter)?;
            let (grad, l) = self.loss_grad(&batch, &targets);
            let alpha = self.cfg.alpha;
            for (p, g) in self.online.values_mut().iter_mut().zip(&grad) {
                *p -= alpha * g;
            }
            loss = Some(l);
        }
        if self.counter % self.cfg.target_period == 0 {
            self.sync_target();
        }
        Ok(loss)
    }

    fn sync_target(&mut self) {
        self.target = self.online.clone();
    }

    fn steps(&self) -> usize {
        self.counter
    }
}
