//! Comparison of an estimated text against a reference ebook text.
//!
//! Each alignment column gets exactly one [`MismatchClass`]. Three headline
//! percentages are reported: raw identity, identity ignoring HTML tags
//! (computed by stripping tags from both texts and re-aligning), and identity
//! ignoring tags and near misses. A fourth also forgives line-break artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize, Serializer};

use crate::align::{align_items, PairwiseAlignment, ScoringScheme};
use crate::alphabet::{normalize_text, Alphabet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MismatchClass {
    ExactMatch,
    HtmlTagOnly,
    NearMissSpace,
    NearMissApostrophe,
    NearMissCurlyQuote,
    LinebreakArtifact,
    Substantive,
}

impl MismatchClass {
    pub const ALL: [MismatchClass; 7] = [
        MismatchClass::ExactMatch,
        MismatchClass::HtmlTagOnly,
        MismatchClass::NearMissSpace,
        MismatchClass::NearMissApostrophe,
        MismatchClass::NearMissCurlyQuote,
        MismatchClass::LinebreakArtifact,
        MismatchClass::Substantive,
    ];

    pub fn is_near_miss(self) -> bool {
        matches!(
            self,
            MismatchClass::NearMissSpace | MismatchClass::NearMissApostrophe | MismatchClass::NearMissCurlyQuote
        )
    }
}

/// Byte-free scan for tags: a `<` opens a tag only if a `>` follows before
/// any other `<`. Returns one flag per char.
fn tag_mask(chars: &[char]) -> Vec<bool> {
    let mut mask = vec![false; chars.len()];
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '<' {
            let close = chars[i + 1..]
                .iter()
                .position(|&c| c == '<' || c == '>')
                .map(|p| i + 1 + p);
            if let Some(j) = close.filter(|&j| chars[j] == '>') {
                mask[i..=j].iter_mut().for_each(|m| *m = true);
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    mask
}

/// Removes every `<...>` run that contains no inner `<`. Entities are left
/// alone. Repeats until nothing changes, so `<<>>` becomes empty rather than
/// `<>`.
pub fn strip_html_tags(text: &str) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    loop {
        let mask = tag_mask(&chars);
        if !mask.contains(&true) {
            return chars.into_iter().collect();
        }
        chars = chars.iter().zip(mask).filter(|(_, m)| !m).map(|(c, _)| *c).collect();
    }
}

const APOSTROPHES: [(char, char); 1] = [('\'', '\u{2019}')];
const QUOTES: [(char, char); 3] = [('"', '\u{201C}'), ('"', '\u{201D}'), ('\'', '\u{2018}')];

fn unordered_in(pairs: &[(char, char)], a: char, b: char) -> bool {
    pairs.iter().any(|&(x, y)| (x == a && y == b) || (x == b && y == a))
}

fn is_typographic_quote(c: char) -> bool {
    matches!(c, '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}')
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MismatchItem {
    pub column: usize,
    pub candidate: Option<String>,
    pub reference: Option<String>,
    /// Pairs of two typographic quote marks, which may deserve a second look.
    pub review: bool,
}

fn round4<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64((v * 10_000.0).round() / 10_000.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MismatchReport {
    /// Per-class column counts of the tag-stripped alignment.
    pub counts: BTreeMap<MismatchClass, usize>,
    pub total_columns: usize,
    /// Matches and columns of the alignment of the unmodified texts.
    pub raw_matches: usize,
    pub raw_columns: usize,
    #[serde(serialize_with = "round4")]
    pub percent_match: f64,
    #[serde(serialize_with = "round4")]
    pub percent_ignoring_tags: f64,
    #[serde(serialize_with = "round4")]
    pub percent_ignoring_tags_and_near_misses: f64,
    #[serde(serialize_with = "round4")]
    pub percent_ignoring_tags_near_misses_and_linebreaks: f64,
    pub substantive: Vec<MismatchItem>,
}

impl MismatchReport {
    pub fn count(&self, class: MismatchClass) -> usize {
        self.counts.get(&class).copied().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Plain-text table with the three headline percentages.
    pub fn summary(&self, name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "name\t% match\t% match ignoring HTML tags\t% match ignoring HTML tags and near misses"
        );
        let _ = writeln!(
            out,
            "{name}\t{:.2}\t{:.2}\t{:.2}",
            self.percent_match, self.percent_ignoring_tags, self.percent_ignoring_tags_and_near_misses
        );
        out
    }
}

fn percent(n: usize, d: usize) -> f64 {
    if d == 0 {
        100.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

/// Labels one column per alignment column. The bottom row is the reference.
pub fn classify_columns(alignment: &PairwiseAlignment, alphabet: &Alphabet) -> Vec<MismatchClass> {
    let sym = |o: Option<u32>| o.map(|x| alphabet.symbol(x));
    let top: Vec<char> = alignment.top().iter().map(|&x| alphabet.symbol(x)).collect();
    let bottom: Vec<char> = alignment.bottom().iter().map(|&x| alphabet.symbol(x)).collect();
    let top_tags = tag_mask(&top);
    let bottom_tags = tag_mask(&bottom);

    // Nearest reference symbol strictly before / after each column.
    let n = alignment.len();
    let mut prev_ref = vec![None; n];
    let mut last = None;
    for (c, col) in alignment.columns.iter().enumerate() {
        prev_ref[c] = last;
        if let Some(x) = col.1 {
            last = Some(alphabet.symbol(x));
        }
    }
    let mut next_ref = vec![None; n];
    last = None;
    for (c, col) in alignment.columns.iter().enumerate().rev() {
        next_ref[c] = last;
        if let Some(x) = col.1 {
            last = Some(alphabet.symbol(x));
        }
    }

    let (mut ti, mut bi) = (0usize, 0usize);
    alignment
        .columns
        .iter()
        .enumerate()
        .map(|(c, &(t, b))| {
            let in_top_tag = t.is_some() && top_tags[ti];
            let in_bottom_tag = b.is_some() && bottom_tags[bi];
            ti += usize::from(t.is_some());
            bi += usize::from(b.is_some());
            let (tc, bc) = (sym(t), sym(b));
            if t.is_some() && t == b {
                return MismatchClass::ExactMatch;
            }
            match (tc, bc) {
                (Some(_), None) if in_top_tag => MismatchClass::HtmlTagOnly,
                (None, Some(_)) if in_bottom_tag => MismatchClass::HtmlTagOnly,
                (Some(' '), None) | (None, Some(' ')) => MismatchClass::NearMissSpace,
                (Some(x), Some(y)) if unordered_in(&APOSTROPHES, x, y) => MismatchClass::NearMissApostrophe,
                (Some(x), Some(y)) if unordered_in(&QUOTES, x, y) => MismatchClass::NearMissCurlyQuote,
                (Some('\n'), None) | (Some('\n'), Some(' '))
                    if prev_ref[c].is_some_and(|p| p != '\n') && next_ref[c].is_some_and(|p| p != '\n') =>
                {
                    MismatchClass::LinebreakArtifact
                }
                _ => MismatchClass::Substantive,
            }
        })
        .collect()
}

fn substantive_items(
    alignment: &PairwiseAlignment,
    classes: &[MismatchClass],
    alphabet: &Alphabet,
) -> Vec<MismatchItem> {
    alignment
        .columns
        .iter()
        .zip(classes)
        .enumerate()
        .filter(|(_, (_, class))| **class == MismatchClass::Substantive)
        .map(|(column, (&(t, b), _))| {
            let tc = t.map(|x| alphabet.symbol(x));
            let bc = b.map(|x| alphabet.symbol(x));
            MismatchItem {
                column,
                candidate: tc.map(String::from),
                reference: bc.map(String::from),
                review: tc.is_some_and(is_typographic_quote) && bc.is_some_and(is_typographic_quote),
            }
        })
        .collect()
}

fn report_from(alignment: &PairwiseAlignment, alphabet: &Alphabet, raw: (usize, usize)) -> MismatchReport {
    let classes = classify_columns(alignment, alphabet);
    let mut counts: BTreeMap<MismatchClass, usize> = MismatchClass::ALL.iter().map(|&c| (c, 0)).collect();
    for &c in &classes {
        *counts.entry(c).or_default() += 1;
    }
    let total = classes.len();
    let exact = counts[&MismatchClass::ExactMatch];
    let tags = counts[&MismatchClass::HtmlTagOnly];
    let near: usize = classes.iter().filter(|c| c.is_near_miss()).count();
    let linebreaks = counts[&MismatchClass::LinebreakArtifact];
    MismatchReport {
        total_columns: total,
        raw_matches: raw.0,
        raw_columns: raw.1,
        percent_match: percent(raw.0, raw.1),
        percent_ignoring_tags: percent(exact + tags, total),
        percent_ignoring_tags_and_near_misses: percent(exact + tags + near, total),
        percent_ignoring_tags_near_misses_and_linebreaks: percent(exact + tags + near + linebreaks, total),
        substantive: substantive_items(alignment, &classes, alphabet),
        counts,
    }
}

/// Classifies one alignment (bottom row = reference). Tag characters paired
/// with gaps count as `html-tag-only`, and the tag-insensitive percentage is
/// computed on this same alignment.
pub fn classify_mismatches(alignment: &PairwiseAlignment, alphabet: &Alphabet) -> MismatchReport {
    let exact = alignment
        .columns
        .iter()
        .filter(|(a, b)| a.is_some() && a == b)
        .count();
    report_from(alignment, alphabet, (exact, alignment.len()))
}

fn align_texts(candidate: &str, reference: &str, alphabet: &Alphabet, scoring: &ScoringScheme) -> PairwiseAlignment {
    let a = normalize_text(candidate, alphabet);
    let b = normalize_text(reference, alphabet);
    let (columns, score) = align_items(&a.items, &b.items, scoring);
    PairwiseAlignment {
        columns,
        score,
        top_id: "candidate".into(),
        bottom_id: "reference".into(),
    }
}

/// Full protocol: raw identity on the texts as given; class counts and the
/// tag-insensitive percentages on the re-aligned tag-stripped texts.
pub fn identity_report(candidate: &str, reference: &str, scoring: &ScoringScheme) -> MismatchReport {
    // Every code point of either text is in the alphabet, so nothing is
    // replaced.
    let alphabet = Alphabet::new(candidate.chars().chain(reference.chars()).filter(|&c| c != '\r'));
    let raw = align_texts(candidate, reference, &alphabet, scoring);
    let raw_matches = raw.columns.iter().filter(|(a, b)| a.is_some() && a == b).count();
    let stripped = align_texts(&strip_html_tags(candidate), &strip_html_tags(reference), &alphabet, scoring);
    report_from(&stripped, &alphabet, (raw_matches, raw.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strips_tags() {
        assert_eq!(strip_html_tags("<p>Hello</p>"), "Hello");
        assert_eq!(strip_html_tags("a < b"), "a < b");
        assert_eq!(strip_html_tags("<em>x</em>y"), "xy");
        assert_eq!(strip_html_tags("a <b <i>c</i>"), "a <b c");
        assert_eq!(strip_html_tags("&amp;"), "&amp;");
        assert_eq!(strip_html_tags("<<>>"), "");
    }

    #[test]
    fn identical_texts_score_100() {
        let r = identity_report("Rosa Dartle", "Rosa Dartle", &ScoringScheme::default());
        assert_eq!(r.percent_match, 100.0);
        assert_eq!(r.percent_ignoring_tags, 100.0);
        assert_eq!(r.percent_ignoring_tags_and_near_misses, 100.0);
        assert_eq!(r.count(MismatchClass::ExactMatch), 11);
    }

    #[test]
    fn apostrophe_near_miss() {
        let r = identity_report("don't", "don\u{2019}t", &ScoringScheme::default());
        assert_eq!(r.count(MismatchClass::NearMissApostrophe), 1);
        assert_eq!(r.count(MismatchClass::ExactMatch), 4);
        assert_eq!(r.percent_ignoring_tags_and_near_misses, 100.0);
    }

    #[test]
    fn double_space_near_miss() {
        let r = identity_report("end.  Next", "end. Next", &ScoringScheme::default());
        assert_eq!(r.count(MismatchClass::NearMissSpace), 1);
        assert_eq!(r.total_columns, 10);
    }

    #[test]
    fn letter_substitution_is_substantive() {
        let r = identity_report("Eosa", "Rosa", &ScoringScheme::default());
        assert_eq!(r.count(MismatchClass::Substantive), 1);
        assert_eq!(r.substantive[0].candidate.as_deref(), Some("E"));
        assert_eq!(r.substantive[0].reference.as_deref(), Some("R"));
        assert!(!r.substantive[0].review);
    }

    #[test]
    fn curly_quotes_and_review_flag() {
        let r = identity_report("\"Yes,\" he said", "\u{201C}Yes,\u{201D} he said", &ScoringScheme::default());
        assert_eq!(r.count(MismatchClass::NearMissCurlyQuote), 2);
        let r = identity_report("\u{2018}x", "\u{2019}x", &ScoringScheme::default());
        assert_eq!(r.count(MismatchClass::Substantive), 1);
        assert!(r.substantive[0].review);
    }

    #[test]
    fn tags_are_ignored_after_stripping() {
        let r = identity_report("Hello world", "<p>Hello <em>world</em></p>", &ScoringScheme::default());
        assert!(r.percent_match < 100.0);
        assert_eq!(r.percent_ignoring_tags, 100.0);
        let a = Alphabet::new("Hello world<p>/em".chars());
        let raw = align_texts("Hello world", "<p>Hello world</p>", &a, &ScoringScheme::default());
        let c = classify_mismatches(&raw, &a);
        assert_eq!(c.count(MismatchClass::HtmlTagOnly), 7);
        assert_eq!(c.percent_ignoring_tags, 100.0);
    }

    #[test]
    fn line_breaks_inside_paragraphs_are_artifacts() {
        let r = identity_report("one two\nthree", "one two three", &ScoringScheme::default());
        assert_eq!(r.count(MismatchClass::LinebreakArtifact), 1);
        let r = identity_report("one\n\ntwo", "one\ntwo", &ScoringScheme::default());
        assert_eq!(r.count(MismatchClass::LinebreakArtifact), 0);
    }

    #[test]
    fn raw_percentage_matches_sequence_identity() {
        let (c, r) = ("The quick brown fox", "The quikc brown  fax");
        let rep = identity_report(c, r, &ScoringScheme::default());
        let alphabet = Alphabet::new(c.chars().chain(r.chars()));
        let aln = align_texts(c, r, &alphabet, &ScoringScheme::default());
        let id = crate::align::sequence_identity(&aln);
        assert!((rep.percent_match - 100.0 * id.identity).abs() < 1e-12);
    }

    #[test]
    fn json_has_four_decimals() {
        let r = identity_report("abc", "abd", &ScoringScheme::default());
        let json = r.to_json();
        assert!(json.contains("\"percent_match\": 66.6667"));
        assert!(json.contains("\"near-miss-space\": 0"));
    }

    proptest! {
        #[test]
        fn classes_partition_columns(c in "[ab '\"\n\u{2019}\u{201C}<>p]{0,30}", r in "[ab '\"\n\u{2019}\u{201D}<>p]{0,30}") {
            let rep = identity_report(&c, &r, &ScoringScheme::default());
            prop_assert_eq!(rep.counts.values().sum::<usize>(), rep.total_columns);
            prop_assert!(rep.percent_ignoring_tags_and_near_misses >= rep.percent_ignoring_tags);
            prop_assert!(rep.percent_ignoring_tags_near_misses_and_linebreaks >= rep.percent_ignoring_tags_and_near_misses);
        }

        #[test]
        fn stripping_is_idempotent(s in "[a<>/p ]{0,40}") {
            let once = strip_html_tags(&s);
            prop_assert_eq!(strip_html_tags(&once), once.clone());
            if !s.contains('<') {
                prop_assert_eq!(once, s);
            }
        }

        #[test]
        fn tags_in_reference_never_lower_identity(words in proptest::collection::vec("[a-f]{1,6}", 1..12),
                                                  tagged in proptest::collection::vec(any::<bool>(), 12),
                                                  typo in 0usize..40) {
            let mut candidate = words.join(" ");
            if typo < candidate.len() {
                candidate.replace_range(typo..typo + 1, "z");
            }
            let reference = words
                .iter()
                .zip(&tagged)
                .map(|(w, &t)| if t { format!("<em>{w}</em>") } else { w.clone() })
                .collect::<Vec<_>>()
                .join(" ");
            let rep = identity_report(&candidate, &format!("<p>{reference}</p>"), &ScoringScheme::default());
            prop_assert!(rep.percent_ignoring_tags >= rep.percent_match);
        }
    }
}
