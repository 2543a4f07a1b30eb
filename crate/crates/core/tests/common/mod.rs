//! Finite-difference oracles shared by the property tests and the acceptance suite.
#![allow(dead_code)]

use std::cell::Cell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use varq::agents::{AgentConfig, DqnAgent, NoisyParams, Transition};
use varq::nn::{central_differences, finite_diff_grad, init_params, mlp_backward, Activation, InitScheme, MlpArch, MlpParams};
use varq::variational::{
    entropy, klqp_grad_with_noise, klqp_loss_with_noise, point_mass_grad, random_belief, squared_error, MeanFieldGaussian,
    NoiseDraw, TargetedSample, VariationalHyper,
};

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Closest any ReLU pre-activation comes to zero; cases inside this margin sit
/// on a kink where central differences are meaningless and get redrawn.
pub const KINK_MARGIN: f64 = 1e-3;

/// Round-off in a central difference of a function of magnitude `peak`:
/// each evaluation carries error of order `ε·|f|`, divided by `2h`.
pub fn roundoff_floor(peak: f64) -> f64 {
    4.0 * f64::EPSILON * peak.max(1.0) / FD_STEP
}

/// Wraps `f` so the largest `|f|` it returns is recorded in `peak`.
pub fn track<'a, T: ?Sized>(peak: &'a Cell<f64>, f: impl Fn(&T) -> f64 + 'a) -> impl Fn(&T) -> f64 + 'a {
    move |x| {
        let v = f(x);
        peak.set(peak.get().max(v.abs()));
        v
    }
}

/// Largest componentwise relative error; components below 1e-8 in both
/// vectors are compared absolutely instead, and differences under `floor`
/// (the numeric side's round-off) count as agreement.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| {
            let scale = a.abs().max(n.abs());
            let diff = (a - n).abs();
            if diff <= floor {
                0.0
            } else if scale < 1e-8 {
                if diff <= 1e-8 { 0.0 } else { f64::INFINITY }
            } else {
                diff / scale
            }
        })
        .fold(0.0, f64::max)
}

pub fn random_arch<R: Rng>(r: &mut R) -> MlpArch {
    let input = r.random_range(1..=8);
    let output = r.random_range(1..=4);
    let hidden = match r.random_range(0..3) {
        0 => vec![],
        1 => vec![r.random_range(1..=16)],
        _ => vec![r.random_range(1..=8), r.random_range(1..=8)],
    };
    let act = if r.random_bool(0.5) { Activation::Tanh } else { Activation::Relu };
    MlpArch::new(input, hidden, output, act).expect("valid architecture")
}

/// Smallest `|z|` over hidden ReLU pre-activations for any of `inputs`;
/// infinite for tanh networks.
pub fn relu_margin(params: &MlpParams, inputs: &[&[f64]]) -> f64 {
    if params.arch().activation != Activation::Relu {
        return f64::INFINITY;
    }
    let layers = params.unflatten();
    let hidden = layers.len() - 1;
    let mut margin = f64::INFINITY;
    for x in inputs {
        let mut h = x.to_vec();
        for (w, b) in &layers[..hidden] {
            let z: Vec<f64> = w.iter().zip(b).map(|(row, bias)| bias + row.iter().zip(&h).map(|(a, v)| a * v).sum::<f64>()).collect();
            margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
            h = z.into_iter().map(|v| v.max(0.0)).collect();
        }
    }
    margin
}

pub fn random_params<R: Rng>(arch: MlpArch, r: &mut R) -> MlpParams {
    let n = arch.param_count();
    MlpParams::new(arch, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_obs<R: Rng>(dim: usize, r: &mut R) -> Vec<f64> {
    (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()
}

pub struct Batch {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub targets: Vec<f64>,
}

impl Batch {
    pub fn inputs(&self) -> Vec<&[f64]> {
        self.obs.iter().map(|o| o.as_slice()).collect()
    }

    pub fn random<R: Rng>(arch: &MlpArch, size: usize, r: &mut R) -> Self {
        Self {
            obs: (0..size).map(|_| random_obs(arch.input_dim, r)).collect(),
            actions: (0..size).map(|_| r.random_range(0..arch.output_dim)).collect(),
            targets: (0..size).map(|_| r.random_range(-1.0..1.0)).collect(),
        }
    }

    pub fn samples(&self) -> Vec<TargetedSample<'_>> {
        self.obs
            .iter()
            .zip(&self.actions)
            .zip(&self.targets)
            .map(|((o, &a), &t)| TargetedSample {
                obs: o,
                action: a,
                target: t,
            })
            .collect()
    }

    pub fn transitions(&self) -> Vec<Transition> {
        self.obs
            .iter()
            .zip(&self.actions)
            .map(|(o, &a)| Transition {
                obs: o.clone(),
                action: a,
                reward: 0.0,
                next_obs: o.clone(),
                done: true,
            })
            .collect()
    }
}

/// `mlp_backward` against central differences of `Q(obs, action)`.
pub fn mlp_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    loop {
        let arch = random_arch(&mut r);
        let params = random_params(arch.clone(), &mut r);
        let obs = random_obs(arch.input_dim, &mut r);
        let action = r.random_range(0..arch.output_dim);
        if relu_margin(&params, &[&obs]) < KINK_MARGIN {
            continue;
        }
        let g = mlp_backward(&params, &obs, action, 1.0).unwrap();
        let peak = Cell::new(0.0_f64);
        let fd = finite_diff_grad(track(&peak, |p: &MlpParams| p.forward(&obs).unwrap()[action]), &params, FD_STEP).unwrap();
        return max_rel_err(&g.values, &fd.values, roundoff_floor(peak.get()));
    }
}

/// `klqp_grad` in `(mu, rho)` against central differences of the loss on the same draws.
pub fn klqp_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    loop {
        let arch = random_arch(&mut r);
        let dist = random_belief(arch.clone(), &mut r, 0.05, 0.5);
        let size = r.random_range(1..=6);
        let batch = Batch::random(&arch, size, &mut r);
        let samples = batch.samples();
        let hyper = VariationalHyper::new(0.02, r.random_range(1..=3)).unwrap();
        let draws: Vec<NoiseDraw> = (0..hyper.n_mc_samples()).map(|_| NoiseDraw::sample(dist.dim(), &mut r)).collect();
        if draws.iter().map(|d| relu_margin(&dist.theta(d), &batch.inputs())).fold(f64::INFINITY, f64::min) < KINK_MARGIN {
            continue;
        }
        let g = klqp_grad_with_noise(&dist, &samples, &hyper, draws.clone()).unwrap();

        let n = dist.dim();
        let point: Vec<f64> = dist.mu.iter().chain(&dist.rho).copied().collect();
        // the loss is a difference of two large terms; track both magnitudes
        let peak = Cell::new(0.0_f64);
        let fd = central_differences(
            |v| {
                let d = MeanFieldGaussian::new(arch.clone(), v[..n].to_vec(), v[n..].to_vec()).unwrap();
                let loss = klqp_loss_with_noise(&d, &samples, &hyper, &draws).unwrap();
                peak.set(peak.get().max(loss.abs() + entropy(&d).abs()));
                loss
            },
            &point,
            FD_STEP,
        );
        let analytic: Vec<f64> = g.grad_mu.iter().chain(&g.grad_rho).copied().collect();
        return max_rel_err(&analytic, &fd, roundoff_floor(peak.get()));
    }
}

/// `point_mass_grad` against central differences of the weighted squared error.
pub fn point_mass_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    loop {
        let arch = random_arch(&mut r);
        let params = random_params(arch.clone(), &mut r);
        let batch = Batch::random(&arch, r.random_range(1..=8), &mut r);
        let samples = batch.samples();
        if relu_margin(&params, &batch.inputs()) < KINK_MARGIN {
            continue;
        }
        let hyper = VariationalHyper::default();
        let g = point_mass_grad(&params, &samples, &hyper).unwrap();
        let peak = Cell::new(0.0_f64);
        let loss = track(&peak, |p: &MlpParams| hyper.residual_weight() * squared_error(p, &samples));
        let fd = finite_diff_grad(loss, &params, FD_STEP).unwrap();
        return max_rel_err(&g.values, &fd.values, roundoff_floor(peak.get()));
    }
}

/// The DQN train-step gradient against central differences of the mean squared Bellman error.
pub fn dqn_step_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    loop {
        let arch = random_arch(&mut r);
        let cfg = AgentConfig {
            hidden_sizes: arch.hidden_sizes.clone(),
            activation: arch.activation,
            ..AgentConfig::default()
        };
        let mut agent = DqnAgent::new(cfg, arch.input_dim, arch.output_dim, seed).unwrap();
        *agent.params_mut() = random_params(arch.clone(), &mut r);
        let batch = Batch::random(&arch, r.random_range(1..=8), &mut r);
        if relu_margin(agent.params(), &batch.inputs()) < KINK_MARGIN {
            continue;
        }
        let ts = batch.transitions();
        let refs: Vec<&Transition> = ts.iter().collect();
        let (g, _) = agent.loss_grad(&refs, &batch.targets);
        let samples = batch.samples();
        let b = samples.len() as f64;
        let peak = Cell::new(0.0_f64);
        let fd = finite_diff_grad(track(&peak, |p: &MlpParams| squared_error(p, &samples) / b), agent.params(), FD_STEP).unwrap();
        return max_rel_err(&g, &fd.values, roundoff_floor(peak.get()));
    }
}

/// The NoisyNet train-step gradient in `(mu, sigma)` under a frozen noise draw.
pub fn noisy_step_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    loop {
        let arch = random_arch(&mut r);
        let means = random_params(arch.clone(), &mut r);
        let mut noisy = NoisyParams::new(means, 0.0);
        // keep sigma away from the |sigma| kink
        noisy.sigma = (0..arch.param_count())
            .map(|_| {
                let m = r.random_range(0.05..0.5);
                if r.random_bool(0.5) { m } else { -m }
            })
            .collect();
        let noise = NoiseDraw::sample(arch.param_count(), &mut r);
        let batch = Batch::random(&arch, r.random_range(1..=8), &mut r);
        let samples = batch.samples();
        let b = samples.len() as f64;

        let theta = noisy.theta(&noise);
        if relu_margin(&theta, &batch.inputs()) < KINK_MARGIN {
            continue;
        }
        let mut grad = vec![0.0; arch.param_count()];
        for s in &samples {
            let q = theta.forward(s.obs).unwrap()[s.action];
            let g = mlp_backward(&theta, s.obs, s.action, 2.0 * (q - s.target) / b).unwrap();
            grad.iter_mut().zip(&g.values).for_each(|(a, v)| *a += v);
        }
        let (gm, gs) = noisy.split_grad(&grad, &noise);

        let n = arch.param_count();
        let point: Vec<f64> = noisy.mu.iter().chain(&noisy.sigma).copied().collect();
        let peak = Cell::new(0.0_f64);
        let fd = central_differences(
            track(&peak, |v: &[f64]| {
                let mut p = noisy.clone();
                p.mu.copy_from_slice(&v[..n]);
                p.sigma.copy_from_slice(&v[n..]);
                squared_error(&p.theta(&noise), &samples) / b
            }),
            &point,
            FD_STEP,
        );
        let analytic: Vec<f64> = gm.into_iter().chain(gs).collect();
        return max_rel_err(&analytic, &fd, roundoff_floor(peak.get()));
    }
}

/// Entropy against the Monte Carlo estimate `-E[log q(θ)]`; returns (analytic, estimate).
pub fn entropy_mc(seed: u64, samples: usize) -> (f64, f64) {
    let mut r = rng(seed);
    let dim = r.random_range(1..=10);
    let dist = random_belief(MlpArch::linear(dim, 1), &mut r, 0.05, 3.0);
    let total: f64 = (0..samples)
        .map(|_| {
            let (theta, _) = varq::variational::sample_theta(&dist, &mut r);
            dist.log_density(theta.values())
        })
        .sum();
    (varq::variational::entropy(&dist), -total / samples as f64)
}

pub fn init_fan_in(arch: MlpArch, seed: u64) -> MlpParams {
    init_params(arch, &mut rng(seed), InitScheme::UniformFanIn)
}
