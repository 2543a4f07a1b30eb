//! Mean-field Gaussian beliefs over Q-network parameters.
//!
//! Each parameter `θ_i` is an independent Gaussian with mean `mu_i` and standard
//! deviation `softplus(rho_i)`. Samples are drawn by reparameterization,
//! `θ = mu + softplus(rho) ⊙ ε` with `ε ~ N(0, I)`, which makes the KL objective
//!
//! ```text
//! E_q[ Σ_j (Q_θ(s_j, a_j) - d_j)² / (2σ²) ] - H(q)
//! ```
//!
//! differentiable in `(mu, rho)` through the noise draw. The prior is improper
//! and uniform, so it contributes nothing; constants that do not depend on the
//! belief (the evidence and the Gaussian normalizer) are dropped.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::nn::{sparse_support, Gradient, MlpArch, MlpParams, Trace};
use crate::{Error, Result};

/// `½ ln(2πe)`, the entropy of a unit Gaussian.
pub const UNIT_GAUSSIAN_ENTROPY: f64 = 1.418_938_533_204_672_7;

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
#[inline]
pub fn softplus_inv(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldGaussian {
    arch: MlpArch,
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
}

impl MeanFieldGaussian {
    pub fn new(arch: MlpArch, mu: Vec<f64>, rho: Vec<f64>) -> Result<Self> {
        let n = arch.param_count();
        if mu.len() != n {
            return Err(Error::dim("mu", n, mu.len()));
        }
        if rho.len() != n {
            return Err(Error::dim("rho", n, rho.len()));
        }
        if mu.iter().chain(&rho).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("mu and rho must be finite".into()));
        }
        Ok(Self { arch, mu, rho })
    }

    /// Centered at `params` with every standard deviation equal to `sigma`.
    pub fn around(params: &MlpParams, sigma: f64) -> Self {
        let rho = softplus_inv(sigma);
        Self {
            arch: params.arch().clone(),
            mu: params.values().to_vec(),
            rho: vec![rho; params.values().len()],
        }
    }

    /// Means from `U[-1/sqrt(fan_in), 1/sqrt(fan_in)]` (bias means zero), every
    /// standard deviation set to `sigma0`.
    pub fn init<R: Rng + ?Sized>(arch: MlpArch, rng: &mut R, sigma0: f64) -> Self {
        let params = crate::nn::init_params(arch, rng, crate::nn::InitScheme::UniformFanIn);
        Self::around(&params, sigma0)
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.rho.iter().map(|&r| softplus(r)).collect()
    }

    pub fn mean_params(&self) -> MlpParams {
        MlpParams::from_parts(self.arch.clone(), self.mu.clone())
    }

    /// `θ = mu + softplus(rho) ⊙ ε` for a given draw.
    pub fn theta(&self, noise: &NoiseDraw) -> MlpParams {
        let values = self
            .mu
            .iter()
            .zip(&self.rho)
            .zip(&noise.epsilon)
            .map(|((&m, &r), &e)| m + softplus(r) * e)
            .collect();
        MlpParams::from_parts(self.arch.clone(), values)
    }

    /// Log-density of `θ` under this belief (with normalizer).
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        self.mu
            .iter()
            .zip(&self.rho)
            .zip(theta)
            .map(|((&m, &r), &t)| {
                let s = softplus(r);
                let z = (t - m) / s;
                -0.5 * z * z - s.ln() - half_ln_2pi
            })
            .sum()
    }
}

/// The standard-normal draw behind one reparameterized sample.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub epsilon: Vec<f64>,
}

impl NoiseDraw {
    pub fn sample<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self {
            epsilon: (0..len).map(|_| rng.sample(StandardNormal)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VariationalHyper {
    lambda: f64,
    sigma_sq: f64,
    n_mc_samples: usize,
    include_entropy: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HyperRepr {
    #[serde(default = "default_lambda")]
    lambda: f64,
    sigma_sq: Option<f64>,
    #[serde(default = "default_mc")]
    n_mc_samples: usize,
    #[serde(default = "default_true")]
    include_entropy: bool,
}

fn default_lambda() -> f64 {
    2e-2
}
fn default_mc() -> usize {
    1
}
fn default_true() -> bool {
    true
}

impl<'de> Deserialize<'de> for VariationalHyper {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = HyperRepr::deserialize(d)?;
        let hyper = VariationalHyper::new(repr.lambda, repr.n_mc_samples)
            .map_err(serde::de::Error::custom)?
            .with_entropy(repr.include_entropy);
        if let Some(s) = repr.sigma_sq {
            if s != hyper.sigma_sq {
                return Err(serde::de::Error::custom(format!(
                    "sigma_sq must equal lambda/2 = {}, got {s}",
                    hyper.sigma_sq
                )));
            }
        }
        Ok(hyper)
    }
}

impl Default for VariationalHyper {
    /// `λ = 0.02`, hence `σ² = 0.01`; one Monte Carlo sample per gradient.
    fn default() -> Self {
        Self::new(default_lambda(), 1).expect("valid defaults")
    }
}

impl VariationalHyper {
    pub fn new(lambda: f64, n_mc_samples: usize) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be positive, got {lambda}")));
        }
        if n_mc_samples == 0 {
            return Err(Error::InvalidInput("n_mc_samples must be positive".into()));
        }
        Ok(Self {
            lambda,
            sigma_sq: lambda / 2.0,
            n_mc_samples,
            include_entropy: true,
        })
    }

    /// Drops the entropy term from loss and gradient (used to recover plain regression).
    pub fn with_entropy(mut self, include: bool) -> Self {
        self.include_entropy = include;
        self
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    pub fn n_mc_samples(&self) -> usize {
        self.n_mc_samples
    }

    pub fn include_entropy(&self) -> bool {
        self.include_entropy
    }

    /// Weight `1/(2σ²)` on the squared residuals.
    pub fn residual_weight(&self) -> f64 {
        1.0 / (2.0 * self.sigma_sq)
    }
}

/// One regression datum: the Q-value of `action` at `obs` should match `target`.
#[derive(Debug, Clone, Copy)]
pub struct TargetedSample<'a> {
    pub obs: &'a [f64],
    pub action: usize,
    pub target: f64,
}

fn check_batch(arch: &MlpArch, batch: &[TargetedSample<'_>]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("batch must be nonempty".into()));
    }
    for s in batch {
        if s.obs.len() != arch.input_dim {
            return Err(Error::dim("observation", arch.input_dim, s.obs.len()));
        }
        if s.action >= arch.output_dim {
            return Err(Error::dim("action index bound", arch.output_dim, s.action));
        }
        if !s.target.is_finite() {
            return Err(Error::InvalidInput("targets must be finite".into()));
        }
    }
    Ok(())
}

/// `Σ_i [½ ln(2πe) + ln σ_i]`.
pub fn entropy(dist: &MeanFieldGaussian) -> f64 {
    dist.rho
        .iter()
        .map(|&r| UNIT_GAUSSIAN_ENTROPY + softplus(r).ln())
        .sum()
}

pub fn sample_theta<R: Rng + ?Sized>(dist: &MeanFieldGaussian, rng: &mut R) -> (MlpParams, NoiseDraw) {
    let noise = NoiseDraw::sample(dist.dim(), rng);
    (dist.theta(&noise), noise)
}

/// Sum of squared residuals `Σ_j (Q_θ(obs_j, a_j) - d_j)²`.
pub fn squared_error(params: &MlpParams, batch: &[TargetedSample<'_>]) -> f64 {
    let mut trace = Trace::default();
    batch
        .iter()
        .map(|s| {
            let q = trace.forward(params.arch(), params.values(), s.obs)[s.action];
            (q - s.target).powi(2)
        })
        .sum()
}

fn draw_many<R: Rng + ?Sized>(dist: &MeanFieldGaussian, hyper: &VariationalHyper, rng: &mut R) -> Vec<NoiseDraw> {
    (0..hyper.n_mc_samples)
        .map(|_| NoiseDraw::sample(dist.dim(), rng))
        .collect()
}

/// Monte Carlo KL loss; returns the noise draws so a gradient can reuse them.
pub fn klqp_loss<R: Rng + ?Sized>(
    dist: &MeanFieldGaussian,
    batch: &[TargetedSample<'_>],
    hyper: &VariationalHyper,
    rng: &mut R,
) -> Result<(f64, Vec<NoiseDraw>)> {
    check_batch(&dist.arch, batch)?;
    let draws = draw_many(dist, hyper, rng);
    let loss = klqp_loss_with_noise(dist, batch, hyper, &draws)?;
    Ok((loss, draws))
}

/// KL loss evaluated on fixed noise draws (common random numbers).
pub fn klqp_loss_with_noise(
    dist: &MeanFieldGaussian,
    batch: &[TargetedSample<'_>],
    hyper: &VariationalHyper,
    draws: &[NoiseDraw],
) -> Result<f64> {
    check_batch(&dist.arch, batch)?;
    if draws.is_empty() {
        return Err(Error::InvalidInput("at least one noise draw is required".into()));
    }
    let w = hyper.residual_weight();
    let data: f64 = draws
        .iter()
        .map(|n| w * squared_error(&dist.theta(n), batch))
        .sum::<f64>()
        / draws.len() as f64;
    let ent = if hyper.include_entropy { entropy(dist) } else { 0.0 };
    Ok(data - ent)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlqpGrad {
    pub grad_mu: Vec<f64>,
    pub grad_rho: Vec<f64>,
    pub loss: f64,
    pub draws: Vec<NoiseDraw>,
}

pub fn klqp_grad<R: Rng + ?Sized>(
    dist: &MeanFieldGaussian,
    batch: &[TargetedSample<'_>],
    hyper: &VariationalHyper,
    rng: &mut R,
) -> Result<KlqpGrad> {
    check_batch(&dist.arch, batch)?;
    let draws = draw_many(dist, hyper, rng);
    klqp_grad_with_noise(dist, batch, hyper, draws)
}

/// Pathwise gradient of [`klqp_loss_with_noise`] in `(mu, rho)`.
pub fn klqp_grad_with_noise(
    dist: &MeanFieldGaussian,
    batch: &[TargetedSample<'_>],
    hyper: &VariationalHyper,
    draws: Vec<NoiseDraw>,
) -> Result<KlqpGrad> {
    check_batch(&dist.arch, batch)?;
    if draws.is_empty() {
        return Err(Error::InvalidInput("at least one noise draw is required".into()));
    }
    let n = dist.dim();
    let s_count = draws.len() as f64;
    let w = hyper.residual_weight();
    let sig: Vec<f64> = dist.rho.iter().map(|&r| sigmoid(r)).collect();

    let mut grad_mu = vec![0.0; n];
    let mut grad_rho = vec![0.0; n];
    let mut grad_theta = vec![0.0; n];
    let mut trace = Trace::default();
    let mut data_loss = 0.0;
    for noise in &draws {
        let theta = dist.theta(noise);
        grad_theta.iter_mut().for_each(|g| *g = 0.0);
        for s in batch {
            let q = trace.forward(&dist.arch, theta.values(), s.obs)[s.action];
            let r = q - s.target;
            data_loss += w * r * r;
            trace.accumulate_grad(&dist.arch, theta.values(), s.action, 2.0 * w * r, &mut grad_theta);
        }
        for i in 0..n {
            grad_mu[i] += grad_theta[i] / s_count;
            grad_rho[i] += grad_theta[i] * noise.epsilon[i] * sig[i] / s_count;
        }
    }
    let mut loss = data_loss / s_count;
    if hyper.include_entropy {
        loss -= entropy(dist);
        for (i, g) in grad_rho.iter_mut().enumerate() {
            *g -= sig[i] / softplus(dist.rho[i]);
        }
    }
    Ok(KlqpGrad {
        grad_mu,
        grad_rho,
        loss,
        draws,
    })
}

/// `mu ← mu - α·grad_mu`, `rho ← rho - α·grad_rho`.
pub fn sgd_step(dist: &MeanFieldGaussian, grad_mu: &[f64], grad_rho: &[f64], alpha: f64) -> MeanFieldGaussian {
    let mut next = dist.clone();
    next.apply_sgd(grad_mu, grad_rho, alpha);
    next
}

impl MeanFieldGaussian {
    pub fn apply_sgd(&mut self, grad_mu: &[f64], grad_rho: &[f64], alpha: f64) {
        assert_eq!(grad_mu.len(), self.mu.len());
        assert_eq!(grad_rho.len(), self.rho.len());
        for (m, g) in self.mu.iter_mut().zip(grad_mu) {
            *m -= alpha * g;
        }
        for (r, g) in self.rho.iter_mut().zip(grad_rho) {
            *r -= alpha * g;
        }
    }
}

/// Gradient of `Σ_j (Q_θ(obs_j, a_j) - d_j)² / (2σ²)` for a point-mass belief.
///
/// No sampling and no entropy: maximum a posteriori under the improper prior,
/// which is the DQN objective up to a constant factor.
pub fn point_mass_grad(
    params: &MlpParams,
    batch: &[TargetedSample<'_>],
    hyper: &VariationalHyper,
) -> Result<Gradient> {
    check_batch(params.arch(), batch)?;
    let w = hyper.residual_weight();
    let mut grad = Gradient::zeros(params.values().len());
    let mut trace = Trace::default();
    for s in batch {
        let q = trace.forward(params.arch(), params.values(), s.obs)[s.action];
        trace.accumulate_grad(params.arch(), params.values(), s.action, 2.0 * w * (q - s.target), &mut grad.values);
    }
    Ok(grad)
}

/// Draws `Q_θ(obs, ·)` for a fresh `θ ~ dist` without materializing `θ`.
///
/// Every unit's pre-activation is a sum of independent Gaussian weights times
/// its (already sampled) input, so it is itself Gaussian and can be drawn
/// directly. The result has exactly the distribution of `theta(ε).forward(obs)`
/// for a fresh ε, which is all a single-input target evaluation needs.
#[derive(Debug, Clone)]
pub struct LocalSampler {
    arch: MlpArch,
    mu: Vec<f64>,
    var: Vec<f64>,
    buf: Vec<f64>,
    next: Vec<f64>,
    support: Option<Vec<usize>>,
}

impl LocalSampler {
    pub fn new(dist: &MeanFieldGaussian) -> Self {
        Self {
            arch: dist.arch.clone(),
            mu: dist.mu.clone(),
            var: dist.rho.iter().map(|&r| softplus(r).powi(2)).collect(),
            buf: Vec::new(),
            next: Vec::new(),
            support: None,
        }
    }

    pub fn sample_q<R: Rng + ?Sized>(&mut self, obs: &[f64], rng: &mut R) -> &[f64] {
        let n = self.arch.num_layers();
        self.buf.clear();
        self.buf.extend_from_slice(obs);
        for (l, span) in self.arch.layers().enumerate() {
            self.next.clear();
            self.support = sparse_support(&self.buf, self.support.take());
            let support = self.support.as_deref();
            for o in 0..span.fan_out {
                let start = span.weights + o * span.fan_in;
                let b = span.biases + o;
                let mut mean = self.mu[b];
                let mut var = self.var[b];
                let (mu, vs) = (&self.mu[start..start + span.fan_in], &self.var[start..start + span.fan_in]);
                match support {
                    Some(idx) => {
                        for &i in idx {
                            let x = self.buf[i];
                            mean += mu[i] * x;
                            var += vs[i] * x * x;
                        }
                    }
                    None => {
                        for ((m, v), x) in mu.iter().zip(vs).zip(&self.buf) {
                            mean += m * x;
                            var += v * x * x;
                        }
                    }
                }
                let e: f64 = rng.sample(StandardNormal);
                let z = mean + var.sqrt() * e;
                self.next.push(if l + 1 < n {
                    match self.arch.activation {
                        crate::nn::Activation::Relu => z.max(0.0),
                        crate::nn::Activation::Tanh => z.tanh(),
                    }
                } else {
                    z
                });
            }
            std::mem::swap(&mut self.buf, &mut self.next);
        }
        &self.buf
    }
}

/// Random belief for tests and examples: means in `[-1, 1]`, sigmas in `[lo, hi]`.
pub fn random_belief<R: Rng + ?Sized>(arch: MlpArch, rng: &mut R, lo: f64, hi: f64) -> MeanFieldGaussian {
    let n = arch.param_count();
    let um = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let us = Uniform::new_inclusive(lo, hi).expect("valid range");
    let mu = (0..n).map(|_| um.sample(rng)).collect();
    let rho = (0..n).map(|_| softplus_inv(us.sample(rng))).collect();
    MeanFieldGaussian { arch, mu, rho }
}
