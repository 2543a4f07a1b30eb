//! Variational DQN and DQN on CartPole-v0. Usage:
//! `cargo run --release --example cartpole -- [episodes]`

use varq::agents::{AgentConfig, AgentKind};
use varq::envs::CartPoleVariant;
use varq::harness::{run_experiment, EnvSpec, ExperimentConfig};

fn main() -> varq::Result<()> {
    let episodes: usize = std::env::args().nth(1).map_or(300, |a| a.parse().expect("episodes"));
    let env = EnvSpec::Cartpole { variant: CartPoleVariant::V0 };
    for (kind, alpha) in [(AgentKind::Variational, 3e-6), (AgentKind::Dqn, 3e-3)] {
        let cfg = AgentConfig { alpha, ..AgentConfig::default() };
        let log = run_experiment(&ExperimentConfig::new(env.clone(), kind, cfg, episodes, vec![0, 1]))?;
        for c in log.cross_seed.iter().step_by(5) {
            println!("{kind:<12} iteration {:>3}  mean return {:>6.1} ± {:.1}", c.iteration, c.mean, c.std);
        }
    }
    Ok(())
}
