//! A point-mass belief without the entropy term, with its step size rescaled,
//! makes exactly the updates DQN makes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use varq::agents::{Agent, AgentConfig, BeliefFamily, DqnAgent, Transition, VariationalAgent};
use varq::envs::{ChainConfig, ChainEnv, Environment};
use varq::variational::VariationalHyper;

fn main() -> varq::Result<()> {
    let hyper = VariationalHyper::default();
    let base = AgentConfig {
        gamma: 1.0,
        epsilon: 0.0,
        min_buffer_before_training: 64,
        hidden_sizes: vec![16],
        ..AgentConfig::default()
    };
    let alpha = 1e-3;
    let mut dqn = DqnAgent::new(AgentConfig { alpha, ..base.clone() }, 8, 2, 11)?;
    let mut point = VariationalAgent::new(
        AgentConfig {
            alpha: alpha * 2.0 * hyper.sigma_sq() / base.batch_size as f64,
            family: BeliefFamily::PointMass,
            hyper: hyper.with_entropy(false),
            ..base
        },
        8,
        2,
        11,
    )?;

    // Both agents are greedy with identical parameters, so one environment serves both.
    let mut env = ChainEnv::new(ChainConfig::new(8)?);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut obs = env.reset(&mut rng).features;
    for step in 1..=400 {
        let action = dqn.act(&obs);
        assert_eq!(action, point.act(&obs));
        let out = env.step(action)?;
        let t = Transition {
            obs: obs.clone(),
            action,
            reward: out.reward,
            next_obs: out.obs.features.clone(),
            done: out.done,
        };
        dqn.observe(t.clone());
        point.observe(t);
        dqn.train_step()?;
        point.train_step()?;
        obs = if out.done { env.reset(&mut rng).features } else { out.obs.features };

        if step % 100 == 0 {
            let gap = dqn
                .params()
                .values()
                .iter()
                .zip(point.mean_values())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            println!("step {step}: max parameter gap {gap:.1e}");
        }
    }
    Ok(())
}
