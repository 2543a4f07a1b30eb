//! Variational DQN on MountainCar-v0: returns stay at -200 until the car first
//! reaches the flag.

use varq::agents::{AgentConfig, AgentKind};
use varq::harness::{run_experiment, EnvSpec, ExperimentConfig};

fn main() -> varq::Result<()> {
    let episodes: usize = std::env::args().nth(1).map_or(200, |a| a.parse().expect("episodes"));
    let kind = AgentKind::Variational;
    let log = run_experiment(&ExperimentConfig::new(EnvSpec::Mountaincar, kind, AgentConfig { alpha: 3e-6, ..AgentConfig::default() }, episodes, vec![0]))?;
    let run = &log.runs[0];
    let best = run.episodes.iter().map(|e| e.ret).fold(f64::NEG_INFINITY, f64::max);
    let solved = run.episodes.iter().filter(|e| e.ret > -200.0).count();
    println!("{} episodes, best return {best}, {solved} reached the goal", run.episodes.len());
    Ok(())
}
