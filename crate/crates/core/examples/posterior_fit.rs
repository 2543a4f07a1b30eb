//! Fits a mean-field Gaussian to a linear-Gaussian regression by SGD on the
//! KLqp objective and compares it with the exact posterior.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use varq::nn::MlpArch;
use varq::variational::{klqp_grad, softplus_inv, MeanFieldGaussian, TargetedSample, VariationalHyper};

fn main() -> varq::Result<()> {
    // Zero-mean inputs keep the exact posterior diagonal.
    let xs = [vec![-1.0], vec![1.0]];
    let ds = [-1.4, 2.6];
    let batch: Vec<TargetedSample> = xs
        .iter()
        .zip(&ds)
        .map(|(x, &d)| TargetedSample { obs: x, action: 0, target: d })
        .collect();
    let hyper = VariationalHyper::new(0.02, 8)?;

    let mut q = MeanFieldGaussian::new(MlpArch::linear(1, 1), vec![0.0, 0.0], vec![softplus_inv(0.5); 2])?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for step in 0..=20_000 {
        let g = klqp_grad(&q, &batch, &hyper, &mut rng)?;
        q.apply_sgd(&g.grad_mu, &g.grad_rho, 5e-4);
        if step % 5000 == 0 {
            let s = q.sigmas();
            println!(
                "step {step:>5}  w {:+.3} b {:+.3}  sd {:.4} {:.4}  loss {:.2}",
                q.mu[0], q.mu[1], s[0], s[1], g.loss
            );
        }
    }
    let exact_sd = (hyper.sigma_sq() / 2.0).sqrt();
    println!("exact posterior: w +2.000 b +0.600  sd {exact_sd:.4} {exact_sd:.4}");
    Ok(())
}
