//! Plan-7 profile HMM: parameters, construction from a marked alignment,
//! validation and the on-disk format.
//!
//! Positions run `0..=M`. Transition rows are indexed by the position of the
//! source state: `m_0` is the begin state, `i_0` the leading insert state and
//! there is no `d_0`. From position `k`, a move "to match" enters `m_{k+1}`
//! (the end state when `k == M`), "to insert" re-enters `i_k` (from a match
//! state, enters it) and "to delete" enters `d_{k+1}`. Insert-to-delete and
//! delete-to-insert arcs do not exist.
//!
//! All parameters are natural-log probabilities; an impossible arc is
//! `f64::NEG_INFINITY`.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alphabet::{parse_error, Alphabet};
use crate::error::{Error, Result};
use crate::msa::MarkedAlignment;

pub const MODEL_FORMAT: &str = "ebookhmm-phmm/1";

/// Tolerance for row sums in probability space.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Match,
    Insert,
    Delete,
}

impl Kind {
    pub const ALL: [Kind; 3] = [Kind::Match, Kind::Insert, Kind::Delete];

    fn slot(self) -> usize {
        match self {
            Kind::Match => 0,
            Kind::Insert => 1,
            Kind::Delete => 2,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Kind::Match => 'm',
            Kind::Insert => 'i',
            Kind::Delete => 'd',
        }
    }
}

#[inline]
pub(crate) fn arc(from: Kind, to: Kind) -> usize {
    from.slot() * 3 + to.slot()
}

/// Whether the Plan-7 architecture has an arc `from@k -> to` in a model of
/// length `m`.
pub fn arc_allowed(from: Kind, to: Kind, k: usize, m: usize) -> bool {
    match (from, to) {
        (Kind::Insert, Kind::Delete) | (Kind::Delete, Kind::Insert) => false,
        (Kind::Delete, _) if k == 0 => false,
        (_, Kind::Delete) if k == m => false,
        _ => true,
    }
}

pub fn state_exists(kind: Kind, k: usize) -> bool {
    !(kind == Kind::Delete && k == 0)
}

/// Human-readable state name: b, e, m3, i0, d7.
pub fn state_name(kind: Kind, k: usize) -> String {
    if kind == Kind::Match && k == 0 {
        "b".into()
    } else {
        format!("{}{}", kind.letter(), k)
    }
}

fn target_name(to: Kind, k: usize, m: usize) -> String {
    match to {
        Kind::Insert => state_name(Kind::Insert, k),
        _ if k == m => "e".into(),
        _ => state_name(to, k + 1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudocountConfig {
    pub emission_pseudocount: f64,
    pub transition_pseudocount: f64,
}

impl Default for PseudocountConfig {
    fn default() -> Self {
        PseudocountConfig {
            emission_pseudocount: 1.0,
            transition_pseudocount: 1.0,
        }
    }
}

impl PseudocountConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.emission_pseudocount > 0.0 && self.transition_pseudocount > 0.0) {
            return Err(Error::Config("pseudocounts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileHmm {
    alphabet: Alphabet,
    length: usize,
    match_emissions: Vec<f64>,
    insert_emissions: Vec<f64>,
    transitions: Vec<[f64; 9]>,
}

impl ProfileHmm {
    /// Assembles a model from log-space arrays. Shapes are checked here;
    /// probabilities are checked by [`validate_model`].
    pub fn from_log_parts(
        alphabet: Alphabet,
        length: usize,
        match_emissions: Vec<f64>,
        insert_emissions: Vec<f64>,
        transitions: Vec<[f64; 9]>,
    ) -> Result<Self> {
        let k = alphabet.len();
        if length == 0 {
            return Err(Error::Construction("model needs at least one match state".into()));
        }
        if match_emissions.len() != length * k {
            return Err(Error::Consistency(format!(
                "match emissions hold {} values, expected {} x {}",
                match_emissions.len(),
                length,
                k
            )));
        }
        if insert_emissions.len() != (length + 1) * k {
            return Err(Error::Consistency(format!(
                "insert emissions hold {} values, expected {} x {}",
                insert_emissions.len(),
                length + 1,
                k
            )));
        }
        if transitions.len() != length + 1 {
            return Err(Error::Consistency(format!(
                "{} transition rows, expected {}",
                transitions.len(),
                length + 1
            )));
        }
        Ok(ProfileHmm {
            alphabet,
            length,
            match_emissions,
            insert_emissions,
            transitions,
        })
    }

    /// Builds a model from probabilities. `match_probs[k-1]` is the row of
    /// `m_k`, `insert_probs[k]` the row of `i_k`, and `transitions[k][from][to]`
    /// follows the position convention of this module.
    pub fn from_probabilities(
        alphabet: Alphabet,
        match_probs: &[Vec<f64>],
        insert_probs: &[Vec<f64>],
        transitions: &[[[f64; 3]; 3]],
    ) -> Result<Self> {
        let length = match_probs.len();
        let flat = |rows: &[Vec<f64>]| rows.iter().flatten().map(|p| p.ln()).collect::<Vec<_>>();
        let trans = transitions
            .iter()
            .map(|t| {
                let mut row = [f64::NEG_INFINITY; 9];
                for from in Kind::ALL {
                    for to in Kind::ALL {
                        row[arc(from, to)] = t[from.slot()][to.slot()].ln();
                    }
                }
                row
            })
            .collect();
        ProfileHmm::from_log_parts(alphabet, length, flat(match_probs), flat(insert_probs), trans)
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    /// Number of match states.
    pub fn length(&self) -> usize {
        self.length
    }

    pub fn alphabet_len(&self) -> usize {
        self.alphabet.len()
    }

    /// Log emission of symbol `x` from `m_k`, `k` in `1..=M`.
    #[inline]
    pub fn match_emission(&self, k: usize, x: u32) -> f64 {
        self.match_emissions[(k - 1) * self.alphabet.len() + x as usize]
    }

    /// Log emission of symbol `x` from `i_k`, `k` in `0..=M`.
    #[inline]
    pub fn insert_emission(&self, k: usize, x: u32) -> f64 {
        self.insert_emissions[k * self.alphabet.len() + x as usize]
    }

    pub fn match_row(&self, k: usize) -> &[f64] {
        let n = self.alphabet.len();
        &self.match_emissions[(k - 1) * n..k * n]
    }

    pub fn match_row_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.alphabet.len();
        &mut self.match_emissions[(k - 1) * n..k * n]
    }

    pub fn insert_row(&self, k: usize) -> &[f64] {
        let n = self.alphabet.len();
        &self.insert_emissions[k * n..(k + 1) * n]
    }

    /// Log probability of the arc leaving `from` at position `k`.
    #[inline]
    pub fn transition(&self, k: usize, from: Kind, to: Kind) -> f64 {
        self.transitions[k][arc(from, to)]
    }

    pub fn set_transition(&mut self, k: usize, from: Kind, to: Kind, log_p: f64) {
        self.transitions[k][arc(from, to)] = log_p;
    }

    pub fn to_json(&self) -> String {
        let opt = |v: f64| if v == f64::NEG_INFINITY { None } else { Some(v) };
        let rows = |flat: &[f64]| {
            flat.chunks(self.alphabet.len())
                .map(|r| r.iter().copied().map(opt).collect())
                .collect()
        };
        let file = ModelFile {
            format_version: MODEL_FORMAT.to_string(),
            alphabet: self.alphabet.symbols().iter().map(|&c| c as u32).collect(),
            model_length: self.length,
            match_emissions: rows(&self.match_emissions),
            insert_emissions: rows(&self.insert_emissions),
            transitions: self
                .transitions
                .iter()
                .map(|t| t.iter().copied().map(opt).collect())
                .collect(),
        };
        let mut s = serde_json::to_string(&file).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
        if file.format_version != MODEL_FORMAT {
            return Err(Error::Version {
                found: file.format_version,
                expected: MODEL_FORMAT.to_string(),
            });
        }
        let symbols = file
            .alphabet
            .iter()
            .map(|&cp| char::from_u32(cp).ok_or_else(|| Error::Consistency(format!("bad code point {cp:#x}"))))
            .collect::<Result<Vec<_>>>()?;
        let alphabet = Alphabet::new(symbols);
        if alphabet.len() != file.alphabet.len() {
            return Err(Error::Consistency(
                "alphabet must list each symbol once and include space, LF and FF".into(),
            ));
        }
        let k = alphabet.len();
        let unopt = |v: &Option<f64>| v.unwrap_or(f64::NEG_INFINITY);
        let flatten = |rows: &[Vec<Option<f64>>], what: &str| -> Result<Vec<f64>> {
            if let Some(r) = rows.iter().find(|r| r.len() != k) {
                return Err(Error::Consistency(format!(
                    "{what} row has width {}, alphabet has {k} symbols",
                    r.len()
                )));
            }
            Ok(rows.iter().flatten().map(unopt).collect())
        };
        let match_emissions = flatten(&file.match_emissions, "match emission")?;
        let insert_emissions = flatten(&file.insert_emissions, "insert emission")?;
        let transitions = file
            .transitions
            .iter()
            .map(|t| {
                let row: [f64; 9] = t
                    .iter()
                    .map(unopt)
                    .collect::<Vec<_>>()
                    .try_into()
                    .map_err(|_| Error::Consistency("transition rows need 9 entries".into()))?;
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        ProfileHmm::from_log_parts(alphabet, file.model_length, match_emissions, insert_emissions, transitions)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ProfileHmm::from_json(&text)
    }
}

/// On-disk layout. Log probabilities are 64-bit floats, `null` for log(0).
/// `transitions[k]` lists nine arcs in the order mm, mi, md, im, ii, id, dm,
/// di, dd.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: String,
    alphabet: Vec<u32>,
    #[serde(rename = "M")]
    model_length: usize,
    match_emissions: Vec<Vec<Option<f64>>>,
    insert_emissions: Vec<Vec<Option<f64>>>,
    transitions: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub state: String,
    pub item: String,
    pub residual: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} (residual {:e})", self.state, self.item, self.residual)
    }
}

fn prob_sum(logs: impl Iterator<Item = f64>) -> f64 {
    logs.map(f64::exp).sum()
}

pub fn validate_model(model: &ProfileHmm) -> Vec<Violation> {
    let m = model.length;
    let mut out = Vec::new();
    let mut check_row = |state: String, item: &str, row: &[f64]| {
        let residual = prob_sum(row.iter().copied()) - 1.0;
        if row.iter().any(|v| v.is_nan() || *v > 0.0) || residual.abs() > NORMALIZATION_TOLERANCE {
            out.push(Violation {
                state,
                item: item.into(),
                residual,
            });
        }
    };
    for k in 1..=m {
        check_row(state_name(Kind::Match, k), "emission row", model.match_row(k));
    }
    for k in 0..=m {
        check_row(state_name(Kind::Insert, k), "emission row", model.insert_row(k));
    }
    for k in 0..=m {
        for from in Kind::ALL {
            if !state_exists(from, k) {
                for to in Kind::ALL {
                    let v = model.transition(k, from, to);
                    if v != f64::NEG_INFINITY {
                        out.push(Violation {
                            state: state_name(from, k),
                            item: "arcs leave a state that does not exist".into(),
                            residual: v.exp(),
                        });
                        break;
                    }
                }
                continue;
            }
            let mut total = 0.0;
            let mut bad = false;
            for to in Kind::ALL {
                let v = model.transition(k, from, to);
                if arc_allowed(from, to, k, m) {
                    total += v.exp();
                    bad |= v.is_nan() || v > 0.0;
                } else if v != f64::NEG_INFINITY {
                    let plan7 = matches!((from, to), (Kind::Insert, Kind::Delete) | (Kind::Delete, Kind::Insert));
                    out.push(Violation {
                        state: state_name(from, k),
                        item: format!(
                            "{} arc {} -> {}",
                            if plan7 { "Plan-7 forbidden" } else { "nonexistent" },
                            state_name(from, k),
                            target_name(to, k, m)
                        ),
                        residual: v.exp(),
                    });
                }
            }
            let residual = total - 1.0;
            if bad || residual.abs() > NORMALIZATION_TOLERANCE {
                out.push(Violation {
                    state: state_name(from, k),
                    item: "outgoing transitions".into(),
                    residual,
                });
            }
        }
    }
    out
}

/// Expected or observed event counts, shared by alignment-based
/// construction and Baum-Welch.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCounts {
    pub length: usize,
    pub alphabet_len: usize,
    pub match_emissions: Vec<f64>,
    pub insert_emissions: Vec<f64>,
    pub transitions: Vec<[f64; 9]>,
}

impl ModelCounts {
    pub fn zeros(length: usize, alphabet_len: usize) -> Self {
        ModelCounts {
            length,
            alphabet_len,
            match_emissions: vec![0.0; length * alphabet_len],
            insert_emissions: vec![0.0; (length + 1) * alphabet_len],
            transitions: vec![[0.0; 9]; length + 1],
        }
    }

    pub fn match_emission(&self, k: usize, x: u32) -> f64 {
        self.match_emissions[(k - 1) * self.alphabet_len + x as usize]
    }

    pub fn insert_emission(&self, k: usize, x: u32) -> f64 {
        self.insert_emissions[k * self.alphabet_len + x as usize]
    }

    pub fn transition(&self, k: usize, from: Kind, to: Kind) -> f64 {
        self.transitions[k][arc(from, to)]
    }

    pub(crate) fn add_match(&mut self, k: usize, x: u32, w: f64) {
        self.match_emissions[(k - 1) * self.alphabet_len + x as usize] += w;
    }

    pub(crate) fn add_insert(&mut self, k: usize, x: u32, w: f64) {
        self.insert_emissions[k * self.alphabet_len + x as usize] += w;
    }

    pub(crate) fn add_transition(&mut self, k: usize, from: Kind, to: Kind, w: f64) {
        self.transitions[k][arc(from, to)] += w;
    }

    pub fn accumulate(&mut self, other: &ModelCounts) {
        let add = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.match_emissions, &other.match_emissions);
        add(&mut self.insert_emissions, &other.insert_emissions);
        for (a, b) in self.transitions.iter_mut().zip(&other.transitions) {
            add(a, b);
        }
    }

    /// Posterior-mean estimates under symmetric additive pseudocounts.
    pub fn estimate(&self, alphabet: &Alphabet, pseudo: &PseudocountConfig) -> Result<ProfileHmm> {
        pseudo.validate()?;
        let n = self.alphabet_len;
        let normalize_rows = |counts: &[f64]| {
            counts
                .chunks(n)
                .flat_map(|row| {
                    let total: f64 = row.iter().sum::<f64>() + n as f64 * pseudo.emission_pseudocount;
                    row.iter()
                        .map(move |c| ((c + pseudo.emission_pseudocount) / total).ln())
                })
                .collect::<Vec<f64>>()
        };
        let m = self.length;
        let transitions = (0..=m)
            .map(|k| {
                let mut row = [f64::NEG_INFINITY; 9];
                for from in Kind::ALL {
                    if !state_exists(from, k) {
                        continue;
                    }
                    let allowed: Vec<Kind> = Kind::ALL
                        .into_iter()
                        .filter(|&to| arc_allowed(from, to, k, m))
                        .collect();
                    let total: f64 = allowed.iter().map(|&to| self.transitions[k][arc(from, to)]).sum::<f64>()
                        + allowed.len() as f64 * pseudo.transition_pseudocount;
                    for to in allowed {
                        row[arc(from, to)] =
                            ((self.transitions[k][arc(from, to)] + pseudo.transition_pseudocount) / total).ln();
                    }
                }
                row
            })
            .collect();
        ProfileHmm::from_log_parts(
            alphabet.clone(),
            m,
            normalize_rows(&self.match_emissions),
            normalize_rows(&self.insert_emissions),
            transitions,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Visit {
    kind: Kind,
    k: usize,
    symbol: Option<u32>,
}

/// State walk of one alignment row, with Plan-7 repairs: a delete followed by
/// an insert becomes a match emitting the first inserted symbol, and an
/// insert followed by a delete becomes a match emitting the last inserted
/// symbol.
fn row_walk(row: &[Option<u32>], is_match: &[bool]) -> Vec<Visit> {
    let mut walk = Vec::new();
    let mut k = 0;
    for (c, cell) in row.iter().enumerate() {
        if is_match[c] {
            k += 1;
            walk.push(match cell {
                Some(x) => Visit { kind: Kind::Match, k, symbol: Some(*x) },
                None => Visit { kind: Kind::Delete, k, symbol: None },
            });
        } else if let Some(x) = cell {
            walk.push(Visit { kind: Kind::Insert, k, symbol: Some(*x) });
        }
    }
    loop {
        let mut fixed = false;
        for i in 0..walk.len().saturating_sub(1) {
            let (a, b) = (walk[i], walk[i + 1]);
            if a.kind == Kind::Delete && b.kind == Kind::Insert {
                walk[i] = Visit { kind: Kind::Match, k: a.k, symbol: b.symbol };
                walk.remove(i + 1);
                fixed = true;
                break;
            }
            if a.kind == Kind::Insert && b.kind == Kind::Delete {
                walk[i + 1] = Visit { kind: Kind::Match, k: b.k, symbol: a.symbol };
                walk.remove(i);
                fixed = true;
                break;
            }
        }
        if !fixed {
            return walk;
        }
    }
}

/// Observed emission and transition counts implied by the marked alignment.
pub fn count_events(marked: &MarkedAlignment, alphabet_len: usize) -> ModelCounts {
    let m = marked.model_length();
    let mut counts = ModelCounts::zeros(m, alphabet_len);
    let mut is_match = vec![false; marked.alignment.num_columns()];
    for &c in &marked.match_columns {
        is_match[c] = true;
    }
    for row in &marked.alignment.rows {
        let mut prev = (Kind::Match, 0usize);
        for v in row_walk(row, &is_match) {
            counts.add_transition(prev.1, prev.0, v.kind, 1.0);
            match (v.kind, v.symbol) {
                (Kind::Match, Some(x)) => counts.add_match(v.k, x, 1.0),
                (Kind::Insert, Some(x)) => counts.add_insert(v.k, x, 1.0),
                _ => {}
            }
            prev = (v.kind, v.k);
        }
        // Every kind leaves position M towards the end state via the "match" slot.
        counts.add_transition(prev.1, prev.0, Kind::Match, 1.0);
    }
    counts
}

pub fn build_model(
    marked: &MarkedAlignment,
    alphabet: &Alphabet,
    pseudo: &PseudocountConfig,
) -> Result<ProfileHmm> {
    if marked.match_columns.is_empty() {
        return Err(Error::Construction("alignment has no match columns".into()));
    }
    pseudo.validate()?;
    count_events(marked, alphabet.len()).estimate(alphabet, pseudo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::{build_alphabet, AlphabetPolicy};
    use crate::msa::{mark_match_columns, MultipleAlignment};
    use proptest::prelude::*;

    fn alpha() -> Alphabet {
        build_alphabet(&["abcXp"], &AlphabetPolicy::corpus(1)).unwrap()
    }

    fn rows_from(texts: &[&str], a: &Alphabet) -> MultipleAlignment {
        MultipleAlignment {
            rows: texts
                .iter()
                .map(|t| t.chars().map(|c| if c == '-' { None } else { a.ordinal(c) }).collect())
                .collect(),
            row_ids: (0..texts.len()).map(|i| i.to_string()).collect(),
        }
    }

    #[test]
    fn identical_rows_give_add_one_estimates() {
        let a = Alphabet::default_text();
        let msa = rows_from(&["abc"; 7], &a);
        let marked = mark_match_columns(&msa, 0.5).unwrap();
        let model = build_model(&marked, &a, &PseudocountConfig::default()).unwrap();
        assert_eq!(model.length(), 3);
        for (k, c) in "abc".chars().enumerate() {
            let x = a.ordinal(c).unwrap();
            let p = model.match_emission(k + 1, x).exp();
            assert!((p - 8.0 / 114.0).abs() < 1e-15);
            let best = model
                .match_row(k + 1)
                .iter()
                .enumerate()
                .max_by(|l, r| l.1.total_cmp(r.1))
                .unwrap()
                .0;
            assert_eq!(best as u32, x);
        }
        assert!(validate_model(&model).is_empty());
    }

    #[test]
    fn insertion_counts_from_hand_walk() {
        let a = alpha();
        let msa = rows_from(&["a-bc", "aXbc"], &a);
        let mut marked = mark_match_columns(&msa, 0.5).unwrap();
        assert_eq!(marked.match_columns, vec![0, 2, 3]);
        marked.gap_threshold = 0.5;
        let counts = count_events(&marked, a.len());
        let x = a.ordinal('X').unwrap();
        assert_eq!(counts.insert_emission(1, x), 1.0);
        assert_eq!(counts.transition(1, Kind::Match, Kind::Insert), 1.0);
        assert_eq!(counts.transition(1, Kind::Insert, Kind::Match), 1.0);
        assert_eq!(counts.transition(1, Kind::Match, Kind::Match), 1.0);
        assert_eq!(counts.transition(0, Kind::Match, Kind::Match), 2.0);
        assert_eq!(counts.transition(3, Kind::Match, Kind::Match), 2.0);
    }

    #[test]
    fn delete_insert_walks_are_repaired() {
        let a = alpha();
        // Row 2 deletes match column 2 and then inserts X.
        let msa = rows_from(&["ab-c", "ab-c", "a-Xc"], &a);
        let marked = mark_match_columns(&msa, 0.5).unwrap();
        let counts = count_events(&marked, a.len());
        let x = a.ordinal('X').unwrap();
        assert_eq!(counts.match_emission(2, x), 1.0);
        for k in 0..=3 {
            assert_eq!(counts.transition(k, Kind::Delete, Kind::Insert), 0.0);
            assert_eq!(counts.transition(k, Kind::Insert, Kind::Delete), 0.0);
        }
    }

    #[test]
    fn no_match_columns_is_an_error() {
        let a = alpha();
        let msa = rows_from(&["a--", "-b-", "--c"], &a);
        let marked = mark_match_columns(&msa, 0.5).unwrap();
        assert!(matches!(
            build_model(&marked, &a, &PseudocountConfig::default()),
            Err(Error::Construction(_))
        ));
    }

    fn toy() -> ProfileHmm {
        let a = alpha();
        let msa = rows_from(&["a-bc", "a-bc", "a--c", "aXbc"], &a);
        let marked = mark_match_columns(&msa, 0.5).unwrap();
        build_model(&marked, &a, &PseudocountConfig::default()).unwrap()
    }

    #[test]
    fn validation_flags_scaled_rows_and_plan7_arcs() {
        let model = toy();
        assert!(validate_model(&model).is_empty());

        let mut scaled = model.clone();
        for v in scaled.match_row_mut(2) {
            *v += 0.5f64.ln();
        }
        let v = validate_model(&scaled);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].state, "m2");
        assert!((v[0].residual + 0.5).abs() < 1e-12);

        let mut plan7 = model.clone();
        plan7.set_transition(1, Kind::Insert, Kind::Delete, 0.1f64.ln());
        let v = validate_model(&plan7);
        let forbidden: Vec<_> = v.iter().filter(|x| x.item.contains("Plan-7")).collect();
        assert_eq!(forbidden.len(), 1);
        assert!(forbidden[0].item.contains("i1 -> d2"));
    }

    #[test]
    fn save_load_is_exact() {
        let model = toy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        model.save(&path).unwrap();
        let back = ProfileHmm::load(&path).unwrap();
        assert_eq!(back, model);
        for k in 1..=model.length() {
            for (x, y) in back.match_row(k).iter().zip(model.match_row(k)) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn load_errors() {
        let text = toy().to_json();
        let truncated = &text[..text.len() / 2];
        match ProfileHmm::from_json(truncated) {
            Err(Error::Parse { offset, .. }) => assert!(offset <= truncated.len()),
            other => panic!("expected parse error, got {other:?}"),
        }
        let wrong_version = text.replace(MODEL_FORMAT, "ebookhmm-phmm/0");
        match ProfileHmm::from_json(&wrong_version) {
            Err(Error::Version { found, expected }) => {
                assert_eq!(found, "ebookhmm-phmm/0");
                assert_eq!(expected, MODEL_FORMAT);
            }
            other => panic!("expected version error, got {other:?}"),
        }
        let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
        value["alphabet"].as_array_mut().unwrap().push(serde_json::json!(0x41));
        match ProfileHmm::from_json(&value.to_string()) {
            Err(Error::Consistency(msg)) => assert!(msg.contains("width")),
            other => panic!("expected consistency error, got {other:?}"),
        }
    }

    fn arb_marked() -> impl Strategy<Value = Vec<Vec<Option<u32>>>> {
        (1usize..8, 1usize..6).prop_flat_map(|(cols, rows)| {
            proptest::collection::vec(
                proptest::collection::vec(proptest::option::weighted(0.8, 0u32..4), cols),
                rows,
            )
        })
    }

    proptest! {
        #[test]
        fn built_models_are_normalized(rows in arb_marked(), pc in 0.01f64..3.0) {
            let a = alpha();
            let msa = MultipleAlignment { row_ids: (0..rows.len()).map(|i| i.to_string()).collect(), rows };
            let marked = mark_match_columns(&msa, 0.5).unwrap();
            prop_assume!(!marked.match_columns.is_empty());
            let pseudo = PseudocountConfig { emission_pseudocount: pc, transition_pseudocount: pc };
            let model = build_model(&marked, &a, &pseudo).unwrap();
            prop_assert!(validate_model(&model).is_empty());
            for k in 0..=model.length() {
                prop_assert_eq!(model.transition(k, Kind::Insert, Kind::Delete), f64::NEG_INFINITY);
                prop_assert_eq!(model.transition(k, Kind::Delete, Kind::Insert), f64::NEG_INFINITY);
            }
        }
    }
}
