//! Variational DQN, DQN and NoisyNet on a chain. Usage:
//! `cargo run --release --example chain_exploration -- [N] [episodes]`

use varq::agents::{AgentConfig, AgentKind};
use varq::harness::{run_experiment, EnvSpec, ExperimentConfig};

fn main() -> varq::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(8, |a| a.parse().expect("N"));
    let episodes: usize = args.next().map_or(1000, |a| a.parse().expect("episodes"));

    for kind in AgentKind::ALL {
        let cfg = AgentConfig {
            gamma: 1.0,
            ..AgentConfig::for_kind(kind)
        };
        let exp = ExperimentConfig::new(EnvSpec::chain(n), kind, cfg, episodes, vec![0, 1, 2]);
        let log = run_experiment(&exp)?;
        for run in &log.runs {
            let first = run
                .first_iteration_reaching(10.5)
                .map_or("never".to_string(), |i| format!("iteration {i}"));
            println!(
                "{kind:<12} seed {}  last-100 mean {:>6.2}  optimal from {first}",
                run.seed,
                run.final_mean_return(100)
            );
        }
    }
    Ok(())
}
