use ebookhmm::pipeline::{estimate_consensus, EstimationSettings};
use ebookhmm::synth::{synth_editions, SynthOptions, DEFAULT_HEADERS};
use ebookhmm::{identity_report, normalize_text, Alphabet, ScoringScheme};

const TRUTH: &str = include_str!("../../../fixtures/gull_rock.txt");

#[test]
fn synthetic_editions_recover_the_source() {
    let editions = synth_editions(TRUTH, &SynthOptions::default()).unwrap();
    let alphabet = Alphabet::default_text();
    let seqs: Vec<_> = editions
        .iter()
        .enumerate()
        .map(|(i, e)| normalize_text(e, &alphabet).with_id(format!("ed{i}")))
        .collect();
    let est = estimate_consensus(&seqs, &alphabet, &EstimationSettings::default()).unwrap();
    let report = identity_report(&est.consensus_text, TRUTH, &ScoringScheme::default());
    eprintln!("{}", report.summary("consensus"));
    eprintln!("{:?}", report.counts);
    for item in report.substantive.iter().take(40) {
        eprintln!("{item:?}");
    }
    assert!(report.percent_ignoring_tags_near_misses_and_linebreaks >= 99.0);
    for h in DEFAULT_HEADERS {
        assert!(!est.consensus_text.contains(h), "header {h} leaked");
    }
}

#[test]
fn training_does_not_degrade_recovery() {
    let alphabet = Alphabet::default_text();
    for seed in [2, 3] {
        let opts = SynthOptions { seed, ..SynthOptions::default() };
        let seqs: Vec<_> = synth_editions(TRUTH, &opts)
            .unwrap()
            .iter()
            .map(|e| normalize_text(e, &alphabet))
            .collect();
        let settings = EstimationSettings { train: true, ..EstimationSettings::default() };
        let est = estimate_consensus(&seqs, &alphabet, &settings).unwrap();
        let trace = est.trace.as_ref().unwrap();
        // With pseudocounts re-applied, EM increases the posterior, not the
        // plain likelihood.
        assert!(trace.log_posteriors.windows(2).all(|w| w[1] >= w[0] - 1e-6 * w[0].abs()));
        let report = identity_report(&est.consensus_text, TRUTH, &ScoringScheme::default());
        eprintln!("seed {seed}: {:.4} after {} epochs", report.percent_ignoring_tags_near_misses_and_linebreaks, trace.epochs);
        assert!(report.percent_ignoring_tags_near_misses_and_linebreaks >= 99.0);
    }
}
