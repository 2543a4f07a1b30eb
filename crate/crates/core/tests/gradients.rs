mod common;

use common::*;
use proptest::prelude::*;
use varq::nn::MlpArch;
use varq::variational::{
    klqp_grad, sigmoid, softplus, softplus_inv, MeanFieldGaussian, TargetedSample, VariationalHyper,
};

const TOL: f64 = 1e-4;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn backprop_matches_finite_differences(seed in any::<u64>()) {
        prop_assert!(mlp_case(seed) <= TOL);
    }

    #[test]
    fn klqp_grad_matches_finite_differences(seed in any::<u64>()) {
        prop_assert!(klqp_case(seed) <= TOL);
    }

    #[test]
    fn point_mass_grad_matches_finite_differences(seed in any::<u64>()) {
        prop_assert!(point_mass_case(seed) <= TOL);
    }

    #[test]
    fn dqn_step_gradient_matches_finite_differences(seed in any::<u64>()) {
        prop_assert!(dqn_step_case(seed) <= TOL);
    }

    #[test]
    fn noisy_step_gradient_matches_finite_differences(seed in any::<u64>()) {
        prop_assert!(noisy_step_case(seed) <= TOL);
    }
}

/// For a linear model the expected loss is available in closed form:
/// `w Σ_j [(μ·x_j - d_j)² + Σ_i σ_i² x_ji²] - H`.
fn expected_loss_grad(dist: &MeanFieldGaussian, xs: &[Vec<f64>], ds: &[f64], w: f64) -> (Vec<f64>, Vec<f64>) {
    let n = dist.dim();
    let sig = dist.sigmas();
    let mut gm = vec![0.0; n];
    let mut gr = vec![0.0; n];
    for (x, d) in xs.iter().zip(ds) {
        // features with the trailing bias input
        let f: Vec<f64> = x.iter().copied().chain([1.0]).collect();
        let pred: f64 = f.iter().zip(&dist.mu).map(|(a, b)| a * b).sum();
        for i in 0..n {
            gm[i] += 2.0 * w * (pred - d) * f[i];
            gr[i] += 2.0 * w * sig[i] * f[i] * f[i] * sigmoid(dist.rho[i]);
        }
    }
    for i in 0..n {
        gr[i] -= sigmoid(dist.rho[i]) / softplus(dist.rho[i]);
    }
    (gm, gr)
}

#[test]
fn reparameterized_gradient_is_unbiased_for_linear_gaussian() {
    let mut r = rng(11);
    let arch = MlpArch::linear(3, 1);
    let dist = MeanFieldGaussian::new(arch, vec![0.3, -0.2, 0.5, 0.1], vec![softplus_inv(0.2), softplus_inv(0.4), softplus_inv(0.1), softplus_inv(0.3)]).unwrap();
    let xs = vec![vec![1.0, 0.5, -1.0], vec![-0.5, 1.0, 0.2], vec![0.3, -0.7, 0.9]];
    let ds = vec![0.4, -0.3, 1.2];
    let samples: Vec<TargetedSample> = xs
        .iter()
        .zip(&ds)
        .map(|(x, &d)| TargetedSample { obs: x, action: 0, target: d })
        .collect();
    let hyper = VariationalHyper::default();
    let (em, er) = expected_loss_grad(&dist, &xs, &ds, hyper.residual_weight());

    let n = 40_000;
    let dim = dist.dim();
    let (mut s1, mut s2) = (vec![0.0; 2 * dim], vec![0.0; 2 * dim]);
    for _ in 0..n {
        let g = klqp_grad(&dist, &samples, &hyper, &mut r).unwrap();
        for (i, v) in g.grad_mu.iter().chain(&g.grad_rho).enumerate() {
            s1[i] += v;
            s2[i] += v * v;
        }
    }
    let expected: Vec<f64> = em.into_iter().chain(er).collect();
    for i in 0..2 * dim {
        let mean = s1[i] / n as f64;
        let se = ((s2[i] / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - expected[i]).abs() <= 4.0 * se + 1e-9, "component {i}: {mean} vs {} (se {se})", expected[i]);
    }
}

#[test]
fn sgd_recovers_the_exact_posterior() {
    // Zero-mean inputs make the Gaussian posterior over (w, b) diagonal, so it
    // lies inside the mean-field family and is the exact minimizer.
    let xs = [vec![-1.0], vec![1.0]];
    let ds = [-1.4, 2.6];
    let samples: Vec<TargetedSample> = xs
        .iter()
        .zip(&ds)
        .map(|(x, &d)| TargetedSample { obs: x, action: 0, target: d })
        .collect();
    let hyper = VariationalHyper::new(0.02, 8).unwrap();
    let sigma = hyper.sigma_sq().sqrt();
    let (post_w, post_b) = (2.0, 0.6);
    let post_std = sigma / 2f64.sqrt();

    let mut dist = MeanFieldGaussian::new(MlpArch::linear(1, 1), vec![0.0, 0.0], vec![softplus_inv(0.5); 2]).unwrap();
    let mut r = rng(5);
    let (steps, burn) = (40_000, 20_000);
    let mut avg = [0.0; 4];
    for t in 0..steps {
        let g = klqp_grad(&dist, &samples, &hyper, &mut r).unwrap();
        dist.apply_sgd(&g.grad_mu, &g.grad_rho, 5e-4);
        if t >= burn {
            let s = dist.sigmas();
            for (a, v) in avg.iter_mut().zip([dist.mu[0], dist.mu[1], s[0], s[1]]) {
                *a += v / (steps - burn) as f64;
            }
        }
    }
    assert!((avg[0] - post_w).abs() < 1e-2, "{avg:?}");
    assert!((avg[1] - post_b).abs() < 1e-2, "{avg:?}");
    for s in &avg[2..] {
        assert!((s - post_std).abs() / post_std < 5e-2, "{avg:?} vs std {post_std}");
    }
}
