mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::AlphabetMode;

/// Estimate a clean ebook text from noisy transcriptions of several print
/// editions.
///
/// Exit codes: 0 success, 2 usage or configuration error, 3 I/O or file
/// format error, 4 numerical or banding failure.
#[derive(Parser, Debug)]
#[command(name = "ebookhmm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ScoringArgs {
    /// Score of two identical symbols [default: 1]
    #[arg(long = "match", allow_hyphen_values = true)]
    pub match_score: Option<i32>,
    /// Score of two different symbols [default: -1]
    #[arg(long = "mismatch", allow_hyphen_values = true)]
    pub mismatch_score: Option<i32>,
    /// Score of a symbol against a gap [default: -1]
    #[arg(long = "gap", allow_hyphen_values = true)]
    pub gap_score: Option<i32>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct AlphabetArgs {
    /// Where the alphabet comes from [default: default, or file when
    /// --alphabet is given]
    #[arg(long, value_enum)]
    pub alphabet_mode: Option<AlphabetMode>,
    /// Alphabet JSON file
    #[arg(long = "alphabet")]
    pub alphabet_file: Option<PathBuf>,
    /// Minimum count for a symbol in corpus mode [default: 1]
    #[arg(long)]
    pub min_frequency: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct PseudocountArgs {
    /// Pseudocount added to every emission count [default: 1.0]
    #[arg(long)]
    pub emission_pseudocount: Option<f64>,
    /// Pseudocount added to every allowed transition count [default: 1.0]
    #[arg(long)]
    pub transition_pseudocount: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build an alphabet file from a corpus and print its size.
    Alphabet(commands::AlphabetCmd),
    /// Globally align two texts and report their identity as JSON.
    Align(commands::AlignCmd),
    /// Progressive multiple alignment of two or more texts.
    Msa(commands::MsaCmd),
    /// Build a profile HMM from a multiple alignment.
    Build(commands::BuildCmd),
    /// Refine a profile HMM with Baum-Welch.
    Train(commands::TrainCmd),
    /// Write the consensus text of a profile HMM.
    Consensus(commands::ConsensusCmd),
    /// Compare a candidate text against a reference text.
    Eval(commands::EvalCmd),
    /// Run alignment, model construction, optional training and consensus.
    Pipeline(commands::PipelineCmd),
    /// Generate synthetic print editions of a ground-truth text.
    #[command(hide = true)]
    Synth(commands::SynthCmd),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Alphabet(c) => c.run(),
        Command::Align(c) => c.run(),
        Command::Msa(c) => c.run(),
        Command::Build(c) => c.run(),
        Command::Train(c) => c.run(),
        Command::Consensus(c) => c.run(),
        Command::Eval(c) => c.run(),
        Command::Pipeline(c) => c.run(),
        Command::Synth(c) => c.run(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ebookhmm: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
