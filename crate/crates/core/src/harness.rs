//! Seeded episode loops, multi-seed replication and the training-curve and
//! state-visit metrics computed from them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{build_agent, Agent, AgentConfig, AgentKind, Transition};
use crate::envs::{CartPole, CartPoleVariant, ChainConfig, ChainEnv, Environment, MountainCar};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EnvSpec {
    Chain {
        n_states: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        horizon: Option<usize>,
    },
    Cartpole {
        #[serde(default = "default_variant")]
        variant: CartPoleVariant,
    },
    Mountaincar,
}

fn default_variant() -> CartPoleVariant {
    CartPoleVariant::V0
}

impl EnvSpec {
    pub fn chain(n_states: usize) -> Self {
        EnvSpec::Chain {
            n_states,
            horizon: None,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvSpec::Chain { n_states, horizon } => {
                let mut cfg = ChainConfig::new(*n_states).map_err(|e| Error::config("env.n_states", e.to_string()))?;
                if let Some(h) = horizon {
                    if *h == 0 {
                        return Err(Error::config("env.horizon", "must be positive"));
                    }
                    cfg.horizon = *h;
                }
                Box::new(ChainEnv::new(cfg))
            }
            EnvSpec::Cartpole { variant } => Box::new(CartPole::new(*variant)),
            EnvSpec::Mountaincar => Box::new(MountainCar::new()),
        })
    }

    pub fn label(&self) -> String {
        match self {
            EnvSpec::Chain { n_states, .. } => format!("chain-n{n_states}"),
            EnvSpec::Cartpole { variant } => match variant {
                CartPoleVariant::V0 => "cartpole-v0".into(),
                CartPoleVariant::V1 => "cartpole-v1".into(),
            },
            EnvSpec::Mountaincar => "mountaincar-v0".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub kind: AgentKind,
    pub config: AgentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvSpec,
    pub agent: AgentSpec,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub iteration_size: usize,
    pub visit_window: usize,
}

impl ExperimentConfig {
    pub fn new(env: EnvSpec, kind: AgentKind, config: AgentConfig, episodes: usize, seeds: Vec<u64>) -> Self {
        Self {
            env,
            agent: AgentSpec { kind, config },
            episodes,
            seeds,
            iteration_size: 10,
            visit_window: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::config("train.episodes", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("train.seeds", "must be nonempty"));
        }
        if self.iteration_size == 0 {
            return Err(Error::config("train.iteration_size", "must be at least 1"));
        }
        if self.visit_window == 0 {
            return Err(Error::config("train.visit_window", "must be at least 1"));
        }
        self.agent.config.validate()?;
        self.env.build().map(|_| ())
    }
}

/// One logged episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// Undiscounted sum of rewards.
    pub ret: f64,
    pub steps: usize,
    /// Chain only: `visited[n - 1]` is `c_n`, whether an action was taken in `s_n`.
    pub visited: Option<Vec<bool>>,
}

/// Runs one episode: act, step, store, train, until the environment reports done.
pub fn run_episode(env: &mut dyn Environment, agent: &mut dyn Agent, rng: &mut ChaCha8Rng) -> Result<EpisodeRecord> {
    let mut obs = env.reset(rng).features;
    let mut visited = env.chain_len().map(|n| vec![false; n]);
    let mut ret = 0.0;
    let mut steps = 0;
    loop {
        if let (Some(v), Some(p)) = (visited.as_mut(), env.position()) {
            v[p - 1] = true;
        }
        let action = agent.act(&obs);
        let step = env.step(action)?;
        ret += step.reward;
        steps += 1;
        let next = step.obs.features;
        agent.observe(Transition {
            obs: std::mem::replace(&mut obs, next.clone()),
            action,
            reward: step.reward,
            next_obs: next,
            done: step.done,
        });
        agent.train_step()?;
        if step.done {
            break;
        }
    }
    Ok(EpisodeRecord { ret, steps, visited })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    pub mean_return: f64,
    pub min_return: f64,
    pub max_return: f64,
}

/// Non-overlapping blocks of `iteration_size` episodes; a trailing partial block is dropped.
pub fn aggregate_iterations(episodes: &[EpisodeRecord], iteration_size: usize) -> Result<Vec<IterationStats>> {
    if iteration_size == 0 {
        return Err(Error::InvalidInput("iteration_size must be at least 1".into()));
    }
    Ok(episodes
        .chunks_exact(iteration_size)
        .enumerate()
        .map(|(i, block)| {
            let rets = block.iter().map(|e| e.ret);
            IterationStats {
                iteration: i,
                mean_return: rets.clone().sum::<f64>() / block.len() as f64,
                min_return: rets.clone().fold(f64::INFINITY, f64::min),
                max_return: rets.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect())
}

/// The tracked chain states `1`, `⌊N/2⌋` and `N`.
pub fn tracked_states(n_states: usize) -> [usize; 3] {
    [1, n_states / 2, n_states]
}

#[derive(Debug, Clone, PartialEq)]
pub struct VisitRow {
    pub episode: usize,
    /// `c_n` for the tracked states.
    pub counts: [bool; 3],
    /// Trailing-window mean of `c_n` for the tracked states.
    pub probs: [f64; 3],
}

/// Trailing-window visit probabilities `p_n` for `n ∈ {1, ⌊N/2⌋, N}`; early
/// episodes average over the available prefix.
pub fn visit_probabilities(episodes: &[EpisodeRecord], window: usize) -> Result<Vec<VisitRow>> {
    if window == 0 {
        return Err(Error::InvalidInput("visit window must be at least 1".into()));
    }
    let flags: Vec<&Vec<bool>> = episodes
        .iter()
        .map(|e| {
            e.visited
                .as_ref()
                .ok_or_else(|| Error::UnsupportedMetric("visit probabilities need chain-environment logs".into()))
        })
        .collect::<Result<_>>()?;
    let Some(first) = flags.first() else {
        return Ok(Vec::new());
    };
    let tracked = tracked_states(first.len());
    let mut sums = [0usize; 3];
    let mut rows = Vec::with_capacity(flags.len());
    for (i, v) in flags.iter().enumerate() {
        let counts = tracked.map(|n| v[n - 1]);
        for k in 0..3 {
            sums[k] += counts[k] as usize;
            if i >= window {
                sums[k] -= flags[i - window][tracked[k] - 1] as usize;
            }
        }
        let denom = (i + 1).min(window) as f64;
        rows.push(VisitRow {
            episode: i,
            counts,
            probs: sums.map(|s| s as f64 / denom),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
    pub iterations: Vec<IterationStats>,
    pub visits: Option<Vec<VisitRow>>,
}

impl SeedRun {
    /// Mean return over the last `k` episodes.
    pub fn final_mean_return(&self, k: usize) -> f64 {
        let tail = &self.episodes[self.episodes.len().saturating_sub(k)..];
        tail.iter().map(|e| e.ret).sum::<f64>() / tail.len().max(1) as f64
    }

    /// First iteration whose mean return reaches `threshold`.
    pub fn first_iteration_reaching(&self, threshold: f64) -> Option<usize> {
        self.iterations.iter().position(|it| it.mean_return >= threshold)
    }
}

/// Cross-seed mean and population standard deviation of one iteration's mean return.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSeedStats {
    pub iteration: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentLog {
    pub config: ExperimentConfig,
    pub runs: Vec<SeedRun>,
    pub cross_seed: Vec<CrossSeedStats>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Trains a fresh agent in a fresh environment for one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let mut env = cfg.env.build()?;
    let mut agent = build_agent(
        cfg.agent.kind,
        &cfg.agent.config,
        env.obs_dim(),
        env.action_count(),
        seed,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(7);
    let episodes = (0..cfg.episodes)
        .map(|_| run_episode(env.as_mut(), agent.as_mut(), &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let iterations = aggregate_iterations(&episodes, cfg.iteration_size)?;
    let visits = match env.chain_len() {
        Some(_) => Some(visit_probabilities(&episodes, cfg.visit_window)?),
        None => None,
    };
    Ok(SeedRun {
        seed,
        episodes,
        iterations,
        visits,
    })
}

/// Runs every seed (in parallel, each fully isolated) and merges in seed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentLog> {
    cfg.validate()?;
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed(cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    let n_iter = runs.iter().map(|r| r.iterations.len()).min().unwrap_or(0);
    let cross_seed = (0..n_iter)
        .map(|i| {
            let vals: Vec<f64> = runs.iter().map(|r| r.iterations[i].mean_return).collect();
            let (mean, std) = mean_std(&vals);
            CrossSeedStats { iteration: i, mean, std }
        })
        .collect();
    Ok(ExperimentLog {
        config: cfg.clone(),
        runs,
        cross_seed,
    })
}

/// Cross-seed mean of `p_n` per episode, for the three tracked states.
pub fn mean_visit_curve(log: &ExperimentLog) -> Option<Vec<[f64; 3]>> {
    let visits: Vec<&Vec<VisitRow>> = log.runs.iter().map(|r| r.visits.as_ref()).collect::<Option<_>>()?;
    let len = visits.iter().map(|v| v.len()).min()?;
    Some(
        (0..len)
            .map(|i| {
                let mut m = [0.0; 3];
                for v in &visits {
                    for k in 0..3 {
                        m[k] += v[i].probs[k] / visits.len() as f64;
                    }
                }
                m
            })
            .collect(),
    )
}

/// An agent that always takes the same action and never learns.
#[derive(Debug, Clone)]
pub struct ConstantAgent {
    pub action: usize,
    steps: usize,
}

impl ConstantAgent {
    pub fn new(action: usize) -> Self {
        Self { action, steps: 0 }
    }
}

impl Agent for ConstantAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Dqn
    }

    fn act(&mut self, _obs: &[f64]) -> usize {
        self.action
    }

    fn observe(&mut self, _t: Transition) {}

    fn train_step(&mut self) -> Result<Option<f64>> {
        self.steps += 1;
        Ok(None)
    }

    fn sync_target(&mut self) {}

    fn steps(&self) -> usize {
        self.steps
    }
}
