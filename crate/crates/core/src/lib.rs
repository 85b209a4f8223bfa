//! Estimate a clean ebook text from several noisy transcriptions of distinct
//! print editions.
//!
//! The transcriptions are aligned (Barton-Sternberg progressive alignment),
//! columns shared by most editions become match states of a Plan-7 profile
//! HMM, and the model's consensus path yields the estimated text. Running
//! headers, page numbers and hyphenation found in only a minority of editions
//! land in insert states and drop out of the consensus.

pub mod align;
pub mod alphabet;
pub mod error;
pub mod eval;
pub mod infer;
pub mod logspace;
pub mod model;
pub mod msa;
pub mod pipeline;
pub mod synth;

pub use align::{needleman_wunsch, render_alignment, sequence_identity, IdentityStats, PairwiseAlignment, ScoringScheme};
pub use alphabet::{build_alphabet, load_corpus, normalize_text, Alphabet, AlphabetPolicy, CharSequence};
pub use error::{Error, Result};
pub use eval::{classify_mismatches, identity_report, strip_html_tags, MismatchClass, MismatchReport};
pub use infer::{
    annotate_alignment, backward, baum_welch, consensus, forward, viterbi, Band, StatePath, TrainingOptions,
    TrainingTrace,
};
pub use model::{build_model, validate_model, ProfileHmm, PseudocountConfig};
pub use msa::{barton_sternberg, mark_match_columns, MarkedAlignment, MultipleAlignment};
