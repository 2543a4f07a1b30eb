//! Seedable episodic environments.
//!
//! The chain MDP is fully deterministic. CartPole and MountainCar follow the
//! standard Gym formulations; their only randomness is the reset draw.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EnvObs {
    pub features: Vec<f64>,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: EnvObs,
    pub reward: f64,
    pub done: bool,
    /// Chain position after the step (1-based); `None` for other environments.
    pub info: Option<usize>,
}

/// The interface agents and the harness drive.
pub trait Environment: Send {
    fn reset(&mut self, rng: &mut dyn rand::RngCore) -> EnvObs;
    fn step(&mut self, action: usize) -> Result<StepResult>;
    fn action_count(&self) -> usize;
    fn obs_dim(&self) -> usize;
    /// Current chain position, for visit metrics.
    fn position(&self) -> Option<usize> {
        None
    }
    /// Number of chain states, when this is a chain.
    fn chain_len(&self) -> Option<usize> {
        None
    }
}

fn bad_action(action: usize, count: usize) -> Error {
    Error::InvalidInput(format!("action {action} out of range (environment has {count} actions)"))
}

// ---------------------------------------------------------------------------
// Chain MDP

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_states: usize,
    pub reward_left_absorber: f64,
    pub reward_right_absorber: f64,
    pub horizon: usize,
}

impl ChainConfig {
    /// Rewards `1/1000` at `s_1` and `1` at `s_N`, horizon `N + 9`.
    pub fn new(n_states: usize) -> Result<Self> {
        if n_states < 3 {
            return Err(Error::InvalidInput(format!("chain needs N >= 3, got {n_states}")));
        }
        Ok(Self {
            n_states,
            reward_left_absorber: 1e-3,
            reward_right_absorber: 1.0,
            horizon: n_states + 9,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainState {
    pub position: usize,
    pub steps_taken: usize,
}

/// `φ(s)_x = 1{x ≤ s}` for `x = 1..=N`.
pub fn thermometer_features(position: usize, n_states: usize) -> Result<Vec<f64>> {
    if position == 0 || position > n_states {
        return Err(Error::InvalidInput(format!(
            "chain position {position} outside [1, {n_states}]"
        )));
    }
    Ok((1..=n_states).map(|x| if x <= position { 1.0 } else { 0.0 }).collect())
}

pub fn chain_reset(cfg: &ChainConfig) -> (ChainState, EnvObs) {
    let state = ChainState {
        position: 2,
        steps_taken: 0,
    };
    let features = thermometer_features(2, cfg.n_states).expect("N >= 3");
    (
        state,
        EnvObs {
            features,
            terminal: false,
        },
    )
}

/// One deterministic chain transition. The reward belongs to the state the
/// action is taken in; the absorbing ends ignore the action.
pub fn chain_step(state: ChainState, action: usize, cfg: &ChainConfig) -> Result<(ChainState, StepResult)> {
    if state.steps_taken >= cfg.horizon {
        return Err(Error::Contract("step called on a finished chain episode".into()));
    }
    if action > RIGHT {
        return Err(bad_action(action, 2));
    }
    let n = cfg.n_states;
    let reward = if state.position == 1 {
        cfg.reward_left_absorber
    } else if state.position == n {
        cfg.reward_right_absorber
    } else {
        0.0
    };
    let position = match state.position {
        p if p == 1 || p == n => p,
        p if action == RIGHT => p + 1,
        p => p - 1,
    };
    let next = ChainState {
        position,
        steps_taken: state.steps_taken + 1,
    };
    let done = next.steps_taken == cfg.horizon;
    let result = StepResult {
        obs: EnvObs {
            features: thermometer_features(position, n)?,
            terminal: done,
        },
        reward,
        done,
        info: Some(position),
    };
    Ok((next, result))
}

/// Probability that a uniformly random policy started at `s_2` occupies `s_N`
/// within the `N + 9` step horizon, by forward dynamic programming.
pub fn chain_random_reach_prob(n_states: usize) -> Result<f64> {
    let cfg = ChainConfig::new(n_states)?;
    let n = cfg.n_states;
    // mass[p] = probability of being at p without having reached N yet
    let mut mass = vec![0.0; n + 1];
    mass[2] = 1.0;
    let mut reached = 0.0;
    // Reaching s_N at the final transition still counts as a visit.
    for _ in 0..cfg.horizon {
        let mut next = vec![0.0; n + 1];
        next[1] += mass[1];
        for p in 2..n {
            let m = mass[p];
            if m == 0.0 {
                continue;
            }
            next[p - 1] += 0.5 * m;
            if p + 1 == n {
                reached += 0.5 * m;
            } else {
                next[p + 1] += 0.5 * m;
            }
        }
        mass = next;
    }
    Ok(reached)
}

#[derive(Debug, Clone)]
pub struct ChainEnv {
    cfg: ChainConfig,
    state: Option<ChainState>,
}

impl ChainEnv {
    pub fn new(cfg: ChainConfig) -> Self {
        Self { cfg, state: None }
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }
}

impl Environment for ChainEnv {
    fn reset(&mut self, _rng: &mut dyn rand::RngCore) -> EnvObs {
        let (state, obs) = chain_reset(&self.cfg);
        self.state = Some(state);
        obs
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        let state = self
            .state
            .ok_or_else(|| Error::Contract("step called before reset".into()))?;
        let (next, result) = chain_step(state, action, &self.cfg)?;
        self.state = Some(next);
        Ok(result)
    }

    fn action_count(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        self.cfg.n_states
    }

    fn position(&self) -> Option<usize> {
        self.state.map(|s| s.position)
    }

    fn chain_len(&self) -> Option<usize> {
        Some(self.cfg.n_states)
    }
}

// ---------------------------------------------------------------------------
// CartPole

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CartPoleVariant {
    V0,
    V1,
}

impl CartPoleVariant {
    pub fn max_steps(self) -> usize {
        match self {
            CartPoleVariant::V0 => 200,
            CartPoleVariant::V1 => 500,
        }
    }
}

const GRAVITY: f64 = 9.8;
const CART_MASS: f64 = 1.0;
const POLE_MASS: f64 = 0.1;
const POLE_HALF_LENGTH: f64 = 0.5;
const FORCE_MAG: f64 = 10.0;
const TAU: f64 = 0.02;
const X_THRESHOLD: f64 = 2.4;
const THETA_THRESHOLD: f64 = 12.0 * 2.0 * std::f64::consts::PI / 360.0;

/// `(x, x_dot, theta, theta_dot)`.
pub type CartPoleState = [f64; 4];

pub fn cartpole_reset<R: Rng + ?Sized>(rng: &mut R) -> CartPoleState {
    let u = Uniform::new_inclusive(-0.05, 0.05).expect("valid range");
    [u.sample(rng), u.sample(rng), u.sample(rng), u.sample(rng)]
}

/// Euler-integrated cart-pole dynamics; returns the next state and whether the
/// pole fell or the cart left the track.
pub fn cartpole_dynamics(state: CartPoleState, action: usize) -> Result<(CartPoleState, bool)> {
    if action > 1 {
        return Err(bad_action(action, 2));
    }
    let [x, x_dot, theta, theta_dot] = state;
    let force = if action == 1 { FORCE_MAG } else { -FORCE_MAG };
    let total_mass = CART_MASS + POLE_MASS;
    let polemass_length = POLE_MASS * POLE_HALF_LENGTH;
    let (sin, cos) = theta.sin_cos();
    let temp = (force + polemass_length * theta_dot * theta_dot * sin) / total_mass;
    let theta_acc = (GRAVITY * sin - cos * temp)
        / (POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total_mass));
    let x_acc = temp - polemass_length * theta_acc * cos / total_mass;
    let next = [
        x + TAU * x_dot,
        x_dot + TAU * x_acc,
        theta + TAU * theta_dot,
        theta_dot + TAU * theta_acc,
    ];
    let failed = next[0].abs() > X_THRESHOLD || next[2].abs() > THETA_THRESHOLD;
    Ok((next, failed))
}

#[derive(Debug, Clone)]
pub struct CartPole {
    variant: CartPoleVariant,
    state: CartPoleState,
    steps: usize,
    done: bool,
}

impl CartPole {
    pub fn new(variant: CartPoleVariant) -> Self {
        Self {
            variant,
            state: [0.0; 4],
            steps: 0,
            done: true,
        }
    }

    /// Starts an episode from an explicit state.
    pub fn reset_to(&mut self, state: CartPoleState) -> EnvObs {
        self.state = state;
        self.steps = 0;
        self.done = false;
        EnvObs {
            features: state.to_vec(),
            terminal: false,
        }
    }

    pub fn state(&self) -> CartPoleState {
        self.state
    }
}

impl Environment for CartPole {
    fn reset(&mut self, mut rng: &mut dyn rand::RngCore) -> EnvObs {
        let s = cartpole_reset(&mut rng);
        self.reset_to(s)
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::Contract("step called on a finished CartPole episode".into()));
        }
        let (next, failed) = cartpole_dynamics(self.state, action)?;
        self.state = next;
        self.steps += 1;
        self.done = failed || self.steps >= self.variant.max_steps();
        Ok(StepResult {
            obs: EnvObs {
                features: next.to_vec(),
                terminal: self.done,
            },
            reward: 1.0,
            done: self.done,
            info: None,
        })
    }

    fn action_count(&self) -> usize {
        2
    }

    fn obs_dim(&self) -> usize {
        4
    }
}

// ---------------------------------------------------------------------------
// MountainCar

const MC_MIN_POS: f64 = -1.2;
const MC_MAX_POS: f64 = 0.6;
const MC_MAX_SPEED: f64 = 0.07;
const MC_GOAL: f64 = 0.5;
const MC_FORCE: f64 = 0.001;
const MC_GRAVITY: f64 = 0.0025;
pub const MOUNTAINCAR_MAX_STEPS: usize = 200;

/// `(position, velocity)`.
pub type MountainCarState = [f64; 2];

pub fn mountaincar_reset<R: Rng + ?Sized>(rng: &mut R) -> MountainCarState {
    let u = Uniform::new_inclusive(-0.6, -0.4).expect("valid range");
    [u.sample(rng), 0.0]
}

/// Returns the next state and whether the goal was reached.
pub fn mountaincar_dynamics(state: MountainCarState, action: usize) -> Result<(MountainCarState, bool)> {
    if action > 2 {
        return Err(bad_action(action, 3));
    }
    let [mut pos, mut vel] = state;
    vel += (action as f64 - 1.0) * MC_FORCE - MC_GRAVITY * (3.0 * pos).cos();
    vel = vel.clamp(-MC_MAX_SPEED, MC_MAX_SPEED);
    pos += vel;
    pos = pos.clamp(MC_MIN_POS, MC_MAX_POS);
    if pos == MC_MIN_POS && vel < 0.0 {
        vel = 0.0;
    }
    Ok(([pos, vel], pos >= MC_GOAL))
}

#[derive(Debug, Clone)]
pub struct MountainCar {
    state: MountainCarState,
    steps: usize,
    done: bool,
}

impl Default for MountainCar {
    fn default() -> Self {
        Self {
            state: [-0.5, 0.0],
            steps: 0,
            done: true,
        }
    }
}

impl MountainCar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset_to(&mut self, state: MountainCarState) -> EnvObs {
        self.state = state;
        self.steps = 0;
        self.done = false;
        EnvObs {
            features: state.to_vec(),
            terminal: false,
        }
    }

    pub fn state(&self) -> MountainCarState {
        self.state
    }
}

impl Environment for MountainCar {
    fn reset(&mut self, mut rng: &mut dyn rand::RngCore) -> EnvObs {
        let s = mountaincar_reset(&mut rng);
        self.reset_to(s)
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.done {
            return Err(Error::Contract("step called on a finished MountainCar episode".into()));
        }
        let (next, goal) = mountaincar_dynamics(self.state, action)?;
        self.state = next;
        self.steps += 1;
        self.done = goal || self.steps >= MOUNTAINCAR_MAX_STEPS;
        Ok(StepResult {
            obs: EnvObs {
                features: next.to_vec(),
                terminal: self.done,
            },
            reward: -1.0,
            done: self.done,
            info: None,
        })
    }

    fn action_count(&self) -> usize {
        3
    }

    fn obs_dim(&self) -> usize {
        2
    }
}
