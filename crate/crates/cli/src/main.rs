use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use defilter::pipeline::{run_all, run_stage, ExperimentConfig, Profile, Stage, StageArtifact};
use defilter::Error;

/// Synthesise filtered faces, train the removal networks and measure the
/// effect on verification.
#[derive(Parser, Debug)]
#[command(name = "defilter", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,

    /// TOML file merged over the chosen profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root directory holding one subdirectory per stage.
    #[arg(long, global = true, default_value = "stages")]
    stage_dir: PathBuf,

    /// Overrides the configured global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Base profile: paper or desk.
    #[arg(long, global = true)]
    profile: Option<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Verb {
    Synth,
    Augment,
    TrainSeg,
    TrainGan,
    Remove,
    Evaluate,
    Report,
    /// Every stage in order; unchanged stages are reused.
    All,
}

impl Verb {
    fn stage(self) -> Option<Stage> {
        Some(match self {
            Verb::Synth => Stage::Synth,
            Verb::Augment => Stage::Augment,
            Verb::TrainSeg => Stage::TrainSeg,
            Verb::TrainGan => Stage::TrainGan,
            Verb::Remove => Stage::Remove,
            Verb::Evaluate => Stage::Evaluate,
            Verb::Report => Stage::Report,
            Verb::All => return None,
        })
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::StageDependency { .. } | Error::StaleArtifact { .. } => 2,
        Error::Config(_) => 3,
        _ => 1,
    }
}

fn run(cli: &Cli) -> Result<Vec<StageArtifact>, Error> {
    let profile = cli.profile.as_deref().map(str::parse::<Profile>).transpose()?;
    let config = ExperimentConfig::load(cli.config.as_deref(), profile, cli.seed)?;
    match cli.verb.stage() {
        Some(stage) => Ok(vec![run_stage(&config, &cli.stage_dir, stage)?]),
        None => run_all(&config, &cli.stage_dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(artifacts) => {
            for a in artifacts {
                let state = if a.cached { "up to date" } else { "built" };
                println!("{:<10} {state:<10} {}", a.stage.name(), a.record.content_hash);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
