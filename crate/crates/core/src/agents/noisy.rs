use rand::Rng;

use crate::nn::{init_params, InitScheme, MlpArch, MlpParams};
use crate::variational::NoiseDraw;
use crate::Result;

use super::{ensure_finite, compute_targets, residual_grad, Agent, AgentConfig, AgentKind, AgentRng, FixedTarget, ReplayBuffer, Transition};

/// Independent per-weight Gaussian noise, `θ = mu + |sigma| ⊙ ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyParams {
    arch: MlpArch,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl NoisyParams {
    pub fn new(means: MlpParams, sigma0: f64) -> Self {
        let n = means.values().len();
        Self {
            arch: means.arch().clone(),
            mu: means.into_values(),
            sigma: vec![sigma0; n],
        }
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn theta(&self, noise: &NoiseDraw) -> MlpParams {
        let values = self
            .mu
            .iter()
            .zip(&self.sigma)
            .zip(&noise.epsilon)
            .map(|((&m, &s), &e)| m + s.abs() * e)
            .collect();
        MlpParams::from_parts(self.arch.clone(), values)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (MlpParams, NoiseDraw) {
        let noise = NoiseDraw::sample(self.mu.len(), rng);
        (self.theta(&noise), noise)
    }

    pub fn mean_params(&self) -> MlpParams {
        MlpParams::from_parts(self.arch.clone(), self.mu.clone())
    }

    /// Chain rule from `∂L/∂θ` to `(∂L/∂mu, ∂L/∂sigma)` for the draw behind θ.
    pub fn split_grad(&self, grad_theta: &[f64], noise: &NoiseDraw) -> (Vec<f64>, Vec<f64>) {
        let grad_sigma = grad_theta
            .iter()
            .zip(&noise.epsilon)
            .zip(&self.sigma)
            .map(|((g, e), s)| g * e * sign(*s))
            .collect();
        (grad_theta.to_vec(), grad_sigma)
    }
}

pub fn act_noisy<R: Rng + ?Sized>(noisy: &NoisyParams, obs: &[f64], rng: &mut R) -> usize {
    let (theta, _) = noisy.sample(rng);
    theta.greedy_action(obs).expect("observation matches network input")
}

/// NoisyNet: fresh parameter noise for every action and every update, no entropy term.
#[derive(Debug, Clone)]
pub struct NoisyAgent {
    cfg: AgentConfig,
    online: NoisyParams,
    target: NoisyParams,
    buffer: ReplayBuffer,
    counter: usize,
    rng: AgentRng,
}

impl NoisyAgent {
    pub fn new(cfg: AgentConfig, obs_dim: usize, action_count: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let arch = cfg.arch(obs_dim, action_count)?;
        let mut rng = AgentRng::new(seed);
        let means = init_params(arch, &mut rng.init, InitScheme::UniformFanIn);
        let online = NoisyParams::new(means, cfg.noisy_sigma0);
        Ok(Self {
            target: online.clone(),
            online,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            counter: 0,
            cfg,
            rng,
        })
    }

    pub fn noisy(&self) -> &NoisyParams {
        &self.online
    }

    pub fn noisy_mut(&mut self) -> &mut NoisyParams {
        &mut self.online
    }

    pub fn target_noisy(&self) -> &NoisyParams {
        &self.target
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// Mean squared Bellman error and its `(mu, sigma)` gradient under a fixed draw.
    pub fn loss_grad(&self, batch: &[&Transition], targets: &[f64], noise: &NoiseDraw) -> (Vec<f64>, Vec<f64>, f64) {
        let theta = self.online.theta(noise);
        let b = batch.len() as f64;
        let (grad, sq) = residual_grad(&theta, batch, targets, 2.0 / b);
        let (gm, gs) = self.online.split_grad(&grad, noise);
        (gm, gs, sq / b)
    }
}

impl Agent for NoisyAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Noisy
    }

    fn act(&mut self, obs: &[f64]) -> usize {
        act_noisy(&self.online, obs, &mut self.rng.explore)
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
            let (target_theta, _) = self.target.sample(&mut self.rng.noise);
            let targets = compute_targets(&batch, &mut FixedTarget::new(&target_theta), self.cfg.gamma);
            ensure_finite("targets", &targets, self.counter)?;
            let noise = NoiseDraw::sample(self.online.mu.len(), &mut self.rng.noise);
            let (gm, gs, l) = self.loss_grad(&batch, &targets, &noise);
            let alpha = self.cfg.alpha;
            for (m, g) in self.online.mu.iter_mut().zip(&gm) {
                *m -= alpha * g;
            }
            for (s, g) in self.online.sigma.iter_mut().zip(&gs) {
                *s -= alpha * g;
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
