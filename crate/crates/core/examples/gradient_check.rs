//! Backpropagation against central finite differences on a small random network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varq::nn::{finite_diff_grad, init_params, mlp_backward, Activation, InitScheme, MlpArch};

fn main() -> varq::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let arch = MlpArch::new(6, vec![16, 8], 3, Activation::Tanh)?;
    let params = init_params(arch, &mut rng, InitScheme::UniformFanIn);
    let obs: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();

    for action in 0..3 {
        let exact = mlp_backward(&params, &obs, action, 1.0)?;
        let numeric = finite_diff_grad(|p| p.forward(&obs).unwrap()[action], &params, 1e-5)?;
        let worst = exact
            .values
            .iter()
            .zip(&numeric.values)
            .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
            .fold(0.0, f64::max);
        println!("action {action}: {} parameters, max relative error {worst:.2e}", exact.len());
    }
    Ok(())
}
