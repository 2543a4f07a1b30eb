use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use varq::cli::{self, Overrides, Preset};

#[derive(Parser)]
#[command(name = "varq", version, about = "Variational DQN, DQN and NoisyNet on chain and classic-control tasks")]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// TOML config with [env], [agent], [train] and [output] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set agent.alpha=1e-4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Output root (defaults to $VARQ_OUT, then `runs`). For `plot`, the SVG path or its directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Comma-separated agents: vdqn, dqn, noisynet.
    #[arg(long, global = true)]
    agents: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured agents and write CSV logs.
    Train,
    /// Rerun a figure preset: curves-chain, curves-control or visits.
    Reproduce { figure: String },
    /// Plot iterations.csv or episodes.csv files as SVG.
    Plot {
        #[arg(required = true)]
        csvs: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let ov = Overrides {
        set: args.set,
        seed: args.seed,
        agents: args.agents,
        out: args.out,
        ..Overrides::from_env()
    };
    let result = match args.command {
        Command::Train => cli::load_config(args.config.as_deref(), &ov)
            .and_then(|r| cli::cmd_train(&r))
            .map(|runs| runs.into_iter().map(|(dir, _)| dir).collect::<Vec<_>>()),
        Command::Reproduce { figure } => {
            if args.config.is_some() {
                eprintln!("note: --config is ignored by reproduce; use --set to adjust presets");
            }
            Preset::parse(&figure).and_then(|p| cli::cmd_reproduce(p, &ov))
        }
        Command::Plot { csvs } => {
            let out = ov
                .out
                .clone()
                .or(ov.env_out.clone())
                .unwrap_or_else(|| PathBuf::from(cli::DEFAULT_OUT));
            cli::cmd_plot(&csvs, &out).map(|p| vec![p])
        }
    };
    let code = cli::exit_code(&result);
    match result {
        Ok(paths) => paths.iter().for_each(|p| println!("{}", p.display())),
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(code as u8)
}
