use rand::Rng;

use crate::nn::{init_params, InitScheme, MlpParams};
use crate::variational::{
    klqp_grad, point_mass_grad, sample_theta, LocalSampler, MeanFieldGaussian, TargetedSample,
};
use crate::Result;

use super::{ensure_finite, 
    compute_targets, Agent, AgentConfig, AgentKind, AgentRng, BeliefFamily, FixedTarget, PerTupleTarget,
    ReplayBuffer, TargetSampling, TargetSource, Transition,
};

/// Thompson-style action: greedy with respect to one fresh draw `θ ~ q_φ`.
pub fn act_variational<R: Rng + ?Sized>(dist: &MeanFieldGaussian, obs: &[f64], rng: &mut R) -> usize {
    let (theta, _) = sample_theta(dist, rng);
    theta.greedy_action(obs).expect("observation matches network input")
}

#[derive(Debug, Clone)]
pub enum Belief {
    MeanField {
        online: MeanFieldGaussian,
        target: MeanFieldGaussian,
        /// Cached view of `target` for per-tuple sampling; rebuilt on sync.
        sampler: LocalSampler,
    },
    PointMass {
        online: MlpParams,
        target: MlpParams,
    },
}

/// Variational DQN: minimizes the KL divergence between a parameter belief and
/// the posterior implied by bootstrapped targets, one SGD step per environment step.
#[derive(Debug, Clone)]
pub struct VariationalAgent {
    cfg: AgentConfig,
    belief: Belief,
    buffer: ReplayBuffer,
    counter: usize,
    rng: AgentRng,
}

impl VariationalAgent {
    pub fn new(cfg: AgentConfig, obs_dim: usize, action_count: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let arch = cfg.arch(obs_dim, action_count)?;
        let mut rng = AgentRng::new(seed);
        let means = init_params(arch, &mut rng.init, InitScheme::UniformFanIn);
        let belief = match cfg.family {
            BeliefFamily::MeanField => {
                let online = MeanFieldGaussian::around(&means, cfg.init_sigma);
                Belief::MeanField {
                    sampler: LocalSampler::new(&online),
                    target: online.clone(),
                    online,
                }
            }
            BeliefFamily::PointMass => Belief::PointMass {
                target: means.clone(),
                online: means,
            },
        };
        Ok(Self {
            belief,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            counter: 0,
            cfg,
            rng,
        })
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn belief_mut(&mut self) -> &mut Belief {
        &mut self.belief
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    /// Means of the principal belief (the parameters themselves for a point mass).
    pub fn mean_values(&self) -> &[f64] {
        match &self.belief {
            Belief::MeanField { online, .. } => &online.mu,
            Belief::PointMass { online, .. } => online.values(),
        }
    }

    pub fn posterior(&self) -> Option<&MeanFieldGaussian> {
        match &self.belief {
            Belief::MeanField { online, .. } => Some(online),
            Belief::PointMass { .. } => None,
        }
    }

    pub fn target_posterior(&self) -> Option<&MeanFieldGaussian> {
        match &self.belief {
            Belief::MeanField { target, .. } => Some(target),
            Belief::PointMass { .. } => None,
        }
    }
}

impl Agent for VariationalAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Variational
    }

    fn act(&mut self, obs: &[f64]) -> usize {
        match &self.belief {
            Belief::MeanField { online, .. } => act_variational(online, obs, &mut self.rng.explore),
            Belief::PointMass { online, .. } => online.greedy_action(obs).expect("observation matches network input"),
        }
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
            let hyper = &self.cfg.hyper;
            let alpha = self.cfg.alpha;
            match &mut self.belief {
                Belief::MeanField {
                    online,
                    target,
                    sampler,
                } => {
                    let mut source: Box<dyn TargetSource + '_> = match self.cfg.target_sampling {
                        TargetSampling::Local => Box::new(PerTupleTarget::local(sampler, &mut self.rng.noise)),
                        TargetSampling::FullDraw => Box::new(PerTupleTarget::full(target, &mut self.rng.noise)),
                    };
                    let targets = compute_targets(&batch, source.as_mut(), self.cfg.gamma);
                    drop(source);
                    ensure_finite("targets", &targets, self.counter)?;
                    let data = as_samples(&batch, &targets);
                    let g = klqp_grad(online, &data, hyper, &mut self.rng.noise).expect("well-formed batch");
                    online.apply_sgd(&g.grad_mu, &g.grad_rho, alpha);
                    loss = Some(g.loss);
                }
                Belief::PointMass { online, target } => {
                    let targets = compute_targets(&batch, &mut FixedTarget::new(target), self.cfg.gamma);
                    ensure_finite("targets", &targets, self.counter)?;
                    let data = as_samples(&batch, &targets);
                    let g = point_mass_grad(online, &data, hyper).expect("well-formed batch");
                    loss = Some(hyper.residual_weight() * crate::variational::squared_error(online, &data));
                    for (p, d) in online.values_mut().iter_mut().zip(&g.values) {
                        *p -= alpha * d;
                    }
                }
            }
        }
        if self.counter % self.cfg.target_period == 0 {
            self.sync_target();
        }
        Ok(loss)
    }

    fn sync_target(&mut self) {
        match &mut self.belief {
            Belief::MeanField {
                online,
                target,
                sampler,
            } => {
                *target = online.clone();
                *sampler = LocalSampler::new(target);
            }
            Belief::PointMass { online, target } => *target = online.clone(),
        }
    }

    fn steps(&self) -> usize {
        self.counter
    }
}

fn as_samples<'a>(batch: &[&'a Transition], targets: &[f64]) -> Vec<TargetedSample<'a>> {
    batch
        .iter()
        .zip(targets)
        .map(|(t, &target)| TargetedSample {
            obs: &t.obs,
            action: t.action,
            target,
        })
        .collect()
}
