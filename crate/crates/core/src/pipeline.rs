//! End-to-end estimation: align the editions, mark match columns, build the
//! model, optionally refine it with EM, and read off the consensus.

use serde::{Deserialize, Serialize};

use crate::align::ScoringScheme;
use crate::alphabet::{Alphabet, CharSequence};
use crate::error::{Error, Result};
use crate::infer::{baum_welch, consensus, with_band_retry, Band, TrainingOptions, TrainingTrace, BAND_RETRIES,
    DEFAULT_HALF_WIDTH};
use crate::model::{build_model, ProfileHmm, PseudocountConfig};
use crate::msa::{barton_sternberg, mark_match_columns, MarkedAlignment};

pub const DEFAULT_GAP_THRESHOLD: f64 = 0.5;
pub const DEFAULT_REFINEMENT_ROUNDS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationSettings {
    pub scoring: ScoringScheme,
    pub refinement_rounds: usize,
    pub gap_threshold: f64,
    pub pseudocounts: PseudocountConfig,
    pub half_width: usize,
    pub train: bool,
    pub training: TrainingOptions,
}

impl Default for EstimationSettings {
    fn default() -> Self {
        EstimationSettings {
            scoring: ScoringScheme::default(),
            refinement_rounds: DEFAULT_REFINEMENT_ROUNDS,
            gap_threshold: DEFAULT_GAP_THRESHOLD,
            pseudocounts: PseudocountConfig::default(),
            half_width: DEFAULT_HALF_WIDTH,
            train: false,
            training: TrainingOptions::default(),
        }
    }
}

impl EstimationSettings {
    pub fn validate(&self) -> Result<()> {
        self.scoring.validate()?;
        self.pseudocounts.validate()?;
        if !(self.gap_threshold > 0.0 && self.gap_threshold <= 1.0) {
            return Err(Error::Config(format!("gap threshold {} outside (0, 1]", self.gap_threshold)));
        }
        if self.half_width == 0 {
            return Err(Error::Config("band half width must be at least 1".into()));
        }
        if self.train && (self.training.max_epochs == 0 || !(self.training.tol > 0.0)) {
            return Err(Error::Config("training needs epochs >= 1 and tol > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub marked: MarkedAlignment,
    /// Model as built from the alignment.
    pub initial_model: ProfileHmm,
    /// Model after EM, or a copy of the initial model when training is off.
    pub model: ProfileHmm,
    pub trace: Option<TrainingTrace>,
    pub consensus: CharSequence,
    pub consensus_text: String,
}

/// Bands for EM centered on each row's position in the alignment.
pub fn alignment_bands(marked: &MarkedAlignment, half_width: usize) -> Vec<Band> {
    let m = marked.model_length();
    (0..marked.alignment.num_rows())
        .map(|r| Band::around(&marked.model_positions(r), m, half_width))
        .collect()
}

pub fn train_from_alignment(
    model: &ProfileHmm,
    seqs: &[CharSequence],
    marked: &MarkedAlignment,
    half_width: usize,
    opts: &TrainingOptions,
) -> Result<(ProfileHmm, TrainingTrace)> {
    with_band_retry(half_width, BAND_RETRIES, |hw| {
        let bands = alignment_bands(marked, hw);
        baum_welch(model, seqs, Some(&bands), opts)
    })
}

pub fn estimate_consensus(seqs: &[CharSequence], alphabet: &Alphabet, settings: &EstimationSettings) -> Result<Estimate> {
    settings.validate()?;
    if seqs.len() < 2 {
        return Err(Error::Usage(format!(
            "consensus estimation requires at least two editions with distinct pagination, got {}",
            seqs.len()
        )));
    }
    let msa = barton_sternberg(seqs, &settings.scoring, settings.refinement_rounds)?;
    let marked = mark_match_columns(&msa, settings.gap_threshold)?;
    let initial_model = build_model(&marked, alphabet, &settings.pseudocounts)?;
    let (model, trace) = if settings.train {
        // Rows of the alignment are in input order.
        let (m, t) = train_from_alignment(&initial_model, seqs, &marked, settings.half_width, &settings.training)?;
        (m, Some(t))
    } else {
        (initial_model.clone(), None)
    };
    let consensus = consensus(&model);
    let consensus_text = alphabet.decode(&consensus.items);
    Ok(Estimate { marked, initial_model, model, trace, consensus, consensus_text })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::normalize_text;

    fn seqs(texts: &[&str], a: &Alphabet) -> Vec<CharSequence> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| normalize_text(t, a).with_id(format!("e{i}")))
            .collect()
    }

    #[test]
    fn majority_letter_wins() {
        let a = Alphabet::default_text();
        let s = seqs(&["Rosa Dartle", "Rosa Dartle", "Eosa Dartle"], &a);
        let est = estimate_consensus(&s, &a, &EstimationSettings::default()).unwrap();
        assert_eq!(est.consensus_text, "Rosa Dartle");
    }

    #[test]
    fn minority_header_drops_out() {
        let a = Alphabet::default_text();
        let s = seqs(
            &[
                "DAVID COPPERFIELD.\nthe keeper trimmed the wick",
                "the keeper trimmed the wick",
                "the keeper trimmed\nthe wick",
            ],
            &a,
        );
        let est = estimate_consensus(&s, &a, &EstimationSettings::default()).unwrap();
        assert_eq!(est.consensus_text, "the keeper trimmed the wick");
    }

    #[test]
    fn one_edition_is_refused() {
        let a = Alphabet::default_text();
        let s = seqs(&["only one"], &a);
        let err = estimate_consensus(&s, &a, &EstimationSettings::default()).unwrap_err();
        assert!(err.to_string().contains("two editions"));
    }

    #[test]
    fn training_keeps_clear_consensus() {
        let a = Alphabet::default_text();
        let s = seqs(&["the lamp burned on", "the lamp burned on", "the lamp hurned on", "the lamp burned  on"], &a);
        let settings = EstimationSettings { train: true, ..EstimationSettings::default() };
        let est = estimate_consensus(&s, &a, &settings).unwrap();
        assert_eq!(est.consensus_text, "the lamp burned on");
        assert!(est.trace.unwrap().epochs >= 1);
    }
}
