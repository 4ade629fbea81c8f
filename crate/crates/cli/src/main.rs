use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oudpipe::pipeline::{Pipeline, Stage};

#[derive(Parser)]
#[command(name = "oudpipe", version, about = "OUD risk prediction from claims data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Pipeline config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Drop opioid dependency history features.
    #[arg(long)]
    ablate_dependency_history: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic claims.
    Synth(Common),
    /// Identify opioid-naive users and label outcomes.
    Cohort(Common),
    /// Build the feature matrix and the train/test split.
    Featurize(Common),
    /// Variance, chi-squared and RFE selection.
    Select(Common),
    /// Fit every configured model on the balanced training set.
    Train(Common),
    /// Score the test set.
    Evaluate(Common),
    /// Comparison table, odds ratios and importances.
    Report(Common),
    /// All of the above in order.
    RunAll(Common),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (stage, common) = match &cli.command {
        Command::Synth(c) => (Some(Stage::Synth), c),
        Command::Cohort(c) => (Some(Stage::Cohort), c),
        Command::Featurize(c) => (Some(Stage::Featurize), c),
        Command::Select(c) => (Some(Stage::Select), c),
        Command::Train(c) => (Some(Stage::Train), c),
        Command::Evaluate(c) => (Some(Stage::Evaluate), c),
        Command::Report(c) => (Some(Stage::Report), c),
        Command::RunAll(c) => (None, c),
    };
    let result = Pipeline::from_file(&common.config, common.seed, common.ablate_dependency_history).and_then(|p| {
        match stage {
            Some(s) => p.run(s).map(|msg| vec![format!("{s}: {msg}")]),
            None => p.run_all(),
        }
    });
    match result {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}
