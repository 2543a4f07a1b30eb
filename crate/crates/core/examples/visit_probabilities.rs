//! Trailing-window visit probabilities for the first, middle and last chain
//! state, under Variational DQN and DQN.

use varq::agents::{AgentConfig, AgentKind};
use varq::harness::{mean_visit_curve, run_experiment, tracked_states, EnvSpec, ExperimentConfig};

fn main() -> varq::Result<()> {
    let n = 16;
    let [a, b, c] = tracked_states(n);
    for kind in [AgentKind::Variational, AgentKind::Dqn] {
        let cfg = AgentConfig {
            gamma: 1.0,
            ..AgentConfig::for_kind(kind)
        };
        let log = run_experiment(&ExperimentConfig::new(EnvSpec::chain(n), kind, cfg, 600, vec![0, 1, 2]))?;
        let curve = mean_visit_curve(&log).expect("chain runs record visits");
        println!("{kind}: episode  p_{a}  p_{b}  p_{c}");
        for (e, p) in curve.iter().enumerate().step_by(100) {
            println!("{e:>8}  {:.2}  {:.2}  {:.2}", p[0], p[1], p[2]);
        }
    }
    Ok(())
}
