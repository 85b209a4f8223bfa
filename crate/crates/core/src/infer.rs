//! Inference on a profile HMM: forward, backward, Viterbi, Baum-Welch,
//! consensus extraction and per-character annotation.
//!
//! Dynamic programs run over sequence positions `t = 0..=T` and model
//! positions `k = 0..=M`, restricted to a [`Band`] of model positions per
//! sequence position. The unbanded case is the band covering every cell.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{Alphabet, CharSequence};
use crate::error::{Error, Result};
use crate::logspace::log_sum_exp;
use crate::model::{arc_allowed, state_exists, Kind, ModelCounts, ProfileHmm, PseudocountConfig};

const NEG_INF: f64 = f64::NEG_INFINITY;

pub const DEFAULT_HALF_WIDTH: usize = 64;
pub const BAND_RETRIES: usize = 3;

/// Window `[lo, hi]` of model positions allowed at each sequence position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Band {
    windows: Vec<(usize, usize)>,
    half_width: usize,
}

impl Band {
    pub fn full(seq_len: usize, model_len: usize) -> Self {
        Band {
            windows: vec![(0, model_len); seq_len + 1],
            half_width: model_len,
        }
    }

    /// Band around `centers[t-1]`, the expected model position of symbol
    /// `t`. Windows are widened where needed so they are monotone, connected,
    /// start at position 0 and end at position `model_len`.
    pub fn around(centers: &[usize], model_len: usize, half_width: usize) -> Self {
        let mut windows = Vec::with_capacity(centers.len() + 1);
        windows.push((0, half_width.min(model_len)));
        for &c in centers {
            let (plo, phi) = *windows.last().expect("first window");
            let lo = c.saturating_sub(half_width).max(plo).min(phi + 1).min(model_len);
            let hi = (c + half_width).min(model_len).max(phi).max(lo);
            windows.push((lo, hi));
        }
        if let Some(last) = windows.last_mut() {
            last.1 = model_len;
        }
        Band { windows, half_width }
    }

    /// Band around the straight line from (0, 0) to (T, M).
    pub fn diagonal(seq_len: usize, model_len: usize, half_width: usize) -> Self {
        let centers: Vec<usize> = (1..=seq_len)
            .map(|t| ((t as f64) * model_len as f64 / seq_len as f64).round() as usize)
            .collect();
        Band::around(&centers, model_len, half_width)
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn window(&self, t: usize) -> (usize, usize) {
        self.windows[t]
    }

    pub fn seq_len(&self) -> usize {
        self.windows.len() - 1
    }

    fn check(&self, seq_len: usize, model_len: usize) -> Result<()> {
        if self.windows.len() != seq_len + 1 {
            return Err(Error::Usage(format!(
                "band covers {} positions, sequence has {}",
                self.windows.len() - 1,
                seq_len
            )));
        }
        if self.windows.iter().any(|&(lo, hi)| lo > hi || hi > model_len) {
            return Err(Error::Usage("band window out of range".into()));
        }
        Ok(())
    }
}

/// Three log-space values per banded cell.
struct Table {
    windows: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    m: Vec<f64>,
    i: Vec<f64>,
    d: Vec<f64>,
}

impl Table {
    fn new(band: &Band) -> Self {
        let mut offsets = Vec::with_capacity(band.windows.len());
        let mut n = 0;
        for &(lo, hi) in &band.windows {
            offsets.push(n);
            n += hi - lo + 1;
        }
        Table {
            windows: band.windows.clone(),
            offsets,
            m: vec![NEG_INF; n],
            i: vec![NEG_INF; n],
            d: vec![NEG_INF; n],
        }
    }

    #[inline]
    fn idx(&self, t: usize, k: usize) -> Option<usize> {
        let (lo, hi) = *self.windows.get(t)?;
        (k >= lo && k <= hi).then(|| self.offsets[t] + k - lo)
    }

    #[inline]
    fn get(&self, kind: Kind, t: usize, k: usize) -> f64 {
        match self.idx(t, k) {
            Some(ix) => match kind {
                Kind::Match => self.m[ix],
                Kind::Insert => self.i[ix],
                Kind::Delete => self.d[ix],
            },
            None => NEG_INF,
        }
    }
}

fn check_sequence(model: &ProfileHmm, seq: &CharSequence) -> Result<()> {
    if seq.alphabet_id != model.alphabet().fingerprint() {
        return Err(Error::Usage(format!(
            "sequence '{}' was normalized against a different alphabet than the model",
            seq.source_id
        )));
    }
    Ok(())
}

fn resolve_band(model: &ProfileHmm, seq: &CharSequence, band: Option<&Band>) -> Result<Band> {
    check_sequence(model, seq)?;
    match band {
        Some(b) => {
            b.check(seq.len(), model.length())?;
            Ok(b.clone())
        }
        None => Ok(Band::full(seq.len(), model.length())),
    }
}

fn forward_table(model: &ProfileHmm, x: &[u32], band: &Band) -> (Table, f64) {
    let m_len = model.length();
    let mut f = Table::new(band);
    for t in 0..=x.len() {
        let (lo, hi) = band.windows[t];
        for k in lo..=hi {
            let ix = f.idx(t, k).expect("in band");
            if t == 0 {
                f.m[ix] = if k == 0 { 0.0 } else { NEG_INF };
            } else {
                let sym = x[t - 1];
                if k >= 1 {
                    let p = k - 1;
                    let s = log_sum_exp(&[
                        f.get(Kind::Match, t - 1, p) + model.transition(p, Kind::Match, Kind::Match),
                        f.get(Kind::Insert, t - 1, p) + model.transition(p, Kind::Insert, Kind::Match),
                        f.get(Kind::Delete, t - 1, p) + model.transition(p, Kind::Delete, Kind::Match),
                    ]);
                    f.m[ix] = s + model.match_emission(k, sym);
                }
                let s = log_sum_exp(&[
                    f.get(Kind::Match, t - 1, k) + model.transition(k, Kind::Match, Kind::Insert),
                    f.get(Kind::Insert, t - 1, k) + model.transition(k, Kind::Insert, Kind::Insert),
                ]);
                f.i[ix] = s + model.insert_emission(k, sym);
            }
            if k >= 1 {
                let p = k - 1;
                f.d[ix] = log_sum_exp(&[
                    f.get(Kind::Match, t, p) + model.transition(p, Kind::Match, Kind::Delete),
                    f.get(Kind::Delete, t, p) + model.transition(p, Kind::Delete, Kind::Delete),
                ]);
            }
        }
    }
    let t = x.len();
    let total = log_sum_exp(&[
        f.get(Kind::Match, t, m_len) + model.transition(m_len, Kind::Match, Kind::Match),
        f.get(Kind::Insert, t, m_len) + model.transition(m_len, Kind::Insert, Kind::Match),
        f.get(Kind::Delete, t, m_len) + model.transition(m_len, Kind::Delete, Kind::Match),
    ]);
    (f, total)
}

fn backward_table(model: &ProfileHmm, x: &[u32], band: &Band) -> (Table, f64) {
    let m_len = model.length();
    let n = x.len();
    let mut b = Table::new(band);
    for t in (0..=n).rev() {
        let (lo, hi) = band.windows[t];
        for k in (lo..=hi).rev() {
            let ix = b.idx(t, k).expect("in band");
            for from in Kind::ALL {
                if !state_exists(from, k) {
                    continue;
                }
                let mut terms = [NEG_INF; 3];
                // to match (or end)
                if k == m_len {
                    if t == n {
                        terms[0] = model.transition(k, from, Kind::Match);
                    }
                } else if t < n && arc_allowed(from, Kind::Match, k, m_len) {
                    terms[0] = model.transition(k, from, Kind::Match)
                        + model.match_emission(k + 1, x[t])
                        + b.get(Kind::Match, t + 1, k + 1);
                }
                if t < n && arc_allowed(from, Kind::Insert, k, m_len) {
                    terms[1] = model.transition(k, from, Kind::Insert)
                        + model.insert_emission(k, x[t])
                        + b.get(Kind::Insert, t + 1, k);
                }
                if arc_allowed(from, Kind::Delete, k, m_len) {
                    terms[2] = model.transition(k, from, Kind::Delete) + b.get(Kind::Delete, t, k + 1);
                }
                let v = log_sum_exp(&terms);
                match from {
                    Kind::Match => b.m[ix] = v,
                    Kind::Insert => b.i[ix] = v,
                    Kind::Delete => b.d[ix] = v,
                }
            }
        }
    }
    let total = b.get(Kind::Match, 0, 0);
    (b, total)
}

fn banding_failure(band: &Band) -> Error {
    Error::Banding {
        half_width: band.half_width,
    }
}

/// `ln P(seq | model)` summed over every state path inside the band.
pub fn forward(model: &ProfileHmm, seq: &CharSequence, band: Option<&Band>) -> Result<f64> {
    let band = resolve_band(model, seq, band)?;
    let (_, total) = forward_table(model, &seq.items, &band);
    if total == NEG_INF {
        return Err(banding_failure(&band));
    }
    Ok(total)
}

pub fn backward(model: &ProfileHmm, seq: &CharSequence, band: Option<&Band>) -> Result<f64> {
    let band = resolve_band(model, seq, band)?;
    let (_, total) = backward_table(model, &seq.items, &band);
    if total == NEG_INF {
        return Err(banding_failure(&band));
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateKind {
    Begin,
    Match,
    Insert,
    Delete,
    End,
}

impl From<Kind> for StateKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Match => StateKind::Match,
            Kind::Insert => StateKind::Insert,
            Kind::Delete => StateKind::Delete,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateVisit {
    pub state: StateKind,
    pub position: usize,
    pub symbol: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    pub visits: Vec<StateVisit>,
    pub log_probability: f64,
}

impl StatePath {
    /// Symbols emitted along the path, in order.
    pub fn emitted(&self) -> Vec<u32> {
        self.visits.iter().filter_map(|v| v.symbol).collect()
    }

    /// One JSON object per state visit.
    pub fn to_json_lines(&self, alphabet: &Alphabet) -> String {
        #[derive(Serialize)]
        struct Line {
            state: StateKind,
            position: usize,
            symbol: Option<u32>,
            #[serde(rename = "char")]
            character: Option<String>,
        }
        let mut out = String::new();
        for v in &self.visits {
            let line = Line {
                state: v.state,
                position: v.position,
                symbol: v.symbol,
                character: v.symbol.map(|s| alphabet.symbol(s).to_string()),
            };
            out.push_str(&serde_json::to_string(&line).expect("visit serializes"));
            out.push('\n');
        }
        out
    }
}

const BP_NONE: u8 = 3;

fn kind_code(k: Kind) -> u8 {
    match k {
        Kind::Match => 0,
        Kind::Insert => 1,
        Kind::Delete => 2,
    }
}

fn code_kind(c: u8) -> Kind {
    match c {
        0 => Kind::Match,
        1 => Kind::Insert,
        _ => Kind::Delete,
    }
}

/// First strict maximum in the given preference order.
#[inline]
fn best_of(cands: &[(Kind, f64)]) -> (f64, u8) {
    let mut best = (NEG_INF, BP_NONE);
    for &(kind, v) in cands {
        if v > best.0 {
            best = (v, kind_code(kind));
        }
    }
    best
}

/// Most probable state path. Ties between predecessors prefer match, then
/// delete, then insert.
pub fn viterbi(model: &ProfileHmm, seq: &CharSequence, band: Option<&Band>) -> Result<StatePath> {
    let band = resolve_band(model, seq, band)?;
    let x = &seq.items;
    let m_len = model.length();
    let mut v = Table::new(&band);
    let cells = v.m.len();
    let (mut bm, mut bi, mut bd) = (vec![BP_NONE; cells], vec![BP_NONE; cells], vec![BP_NONE; cells]);
    for t in 0..=x.len() {
        let (lo, hi) = band.windows[t];
        for k in lo..=hi {
            let ix = v.idx(t, k).expect("in band");
            if t == 0 {
                v.m[ix] = if k == 0 { 0.0 } else { NEG_INF };
            } else {
                let sym = x[t - 1];
                if k >= 1 {
                    let p = k - 1;
                    let (s, c) = best_of(&[
                        (Kind::Match, v.get(Kind::Match, t - 1, p) + model.transition(p, Kind::Match, Kind::Match)),
                        (Kind::Delete, v.get(Kind::Delete, t - 1, p) + model.transition(p, Kind::Delete, Kind::Match)),
                        (Kind::Insert, v.get(Kind::Insert, t - 1, p) + model.transition(p, Kind::Insert, Kind::Match)),
                    ]);
                    v.m[ix] = s + model.match_emission(k, sym);
                    bm[ix] = c;
                }
                let (s, c) = best_of(&[
                    (Kind::Match, v.get(Kind::Match, t - 1, k) + model.transition(k, Kind::Match, Kind::Insert)),
                    (Kind::Insert, v.get(Kind::Insert, t - 1, k) + model.transition(k, Kind::Insert, Kind::Insert)),
                ]);
                v.i[ix] = s + model.insert_emission(k, sym);
                bi[ix] = c;
            }
            if k >= 1 {
                let p = k - 1;
                let (s, c) = best_of(&[
                    (Kind::Match, v.get(Kind::Match, t, p) + model.transition(p, Kind::Match, Kind::Delete)),
                    (Kind::Delete, v.get(Kind::Delete, t, p) + model.transition(p, Kind::Delete, Kind::Delete)),
                ]);
                v.d[ix] = s;
                bd[ix] = c;
            }
        }
    }
    let n = x.len();
    let (total, last) = best_of(&[
        (Kind::Match, v.get(Kind::Match, n, m_len) + model.transition(m_len, Kind::Match, Kind::Match)),
        (Kind::Delete, v.get(Kind::Delete, n, m_len) + model.transition(m_len, Kind::Delete, Kind::Match)),
        (Kind::Insert, v.get(Kind::Insert, n, m_len) + model.transition(m_len, Kind::Insert, Kind::Match)),
    ]);
    if total == NEG_INF || last == BP_NONE {
        return Err(banding_failure(&band));
    }

    let mut visits = vec![StateVisit {
        state: StateKind::End,
        position: m_len + 1,
        symbol: None,
    }];
    let (mut kind, mut t, mut k) = (code_kind(last), n, m_len);
    while !(kind == Kind::Match && t == 0 && k == 0) {
        let ix = v.idx(t, k).expect("traceback stays in band");
        let symbol = (kind != Kind::Delete).then(|| x[t - 1]);
        visits.push(StateVisit {
            state: kind.into(),
            position: k,
            symbol,
        });
        let (code, nt, nk) = match kind {
            Kind::Match => (bm[ix], t - 1, k - 1),
            Kind::Insert => (bi[ix], t - 1, k),
            Kind::Delete => (bd[ix], t, k - 1),
        };
        kind = code_kind(code);
        t = nt;
        k = nk;
    }
    visits.push(StateVisit {
        state: StateKind::Begin,
        position: 0,
        symbol: None,
    });
    visits.reverse();
    Ok(StatePath {
        visits,
        log_probability: total,
    })
}

/// Expected event counts for one sequence and its log likelihood.
fn expected_counts(model: &ProfileHmm, x: &[u32], band: &Band) -> Result<(ModelCounts, f64)> {
    let (f, total) = forward_table(model, x, band);
    if total == NEG_INF {
        return Err(banding_failure(band));
    }
    let (b, _) = backward_table(model, x, band);
    let m_len = model.length();
    let n = x.len();
    let mut counts = ModelCounts::zeros(m_len, model.alphabet_len());
    let post = |v: f64| (v - total).exp();
    for t in 0..=n {
        let (lo, hi) = band.windows[t];
        for k in lo..=hi {
            if t >= 1 {
                let sym = x[t - 1];
                if k >= 1 {
                    let w = post(f.get(Kind::Match, t, k) + b.get(Kind::Match, t, k));
                    if w > 0.0 {
                        counts.add_match(k, sym, w);
                    }
                }
                let w = post(f.get(Kind::Insert, t, k) + b.get(Kind::Insert, t, k));
                if w > 0.0 {
                    counts.add_insert(k, sym, w);
                }
            }
            for from in Kind::ALL {
                if !state_exists(from, k) {
                    continue;
                }
                let fv = f.get(from, t, k);
                if fv == NEG_INF {
                    continue;
                }
                let mut add = |to: Kind, tail: f64| {
                    let w = post(fv + model.transition(k, from, to) + tail);
                    if w > 0.0 {
                        counts.add_transition(k, from, to, w);
                    }
                };
                if k == m_len {
                    if t == n {
                        add(Kind::Match, 0.0);
                    }
                } else if t < n && arc_allowed(from, Kind::Match, k, m_len) {
                    add(Kind::Match, model.match_emission(k + 1, x[t]) + b.get(Kind::Match, t + 1, k + 1));
                }
                if t < n && arc_allowed(from, Kind::Insert, k, m_len) {
                    add(Kind::Insert, model.insert_emission(k, x[t]) + b.get(Kind::Insert, t + 1, k));
                }
                if arc_allowed(from, Kind::Delete, k, m_len) {
                    add(Kind::Delete, b.get(Kind::Delete, t, k + 1));
                }
            }
        }
    }
    Ok((counts, total))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingOptions {
    pub max_epochs: usize,
    /// Relative log-likelihood improvement below which training stops.
    pub tol: f64,
    pub pseudocounts: PseudocountConfig,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        TrainingOptions {
            max_epochs: 10,
            tol: 1e-6,
            pseudocounts: PseudocountConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    /// Total log likelihood of the training set under the initial model and
    /// after each epoch.
    pub log_likelihoods: Vec<f64>,
    /// Log likelihood plus the log density of the pseudocount prior; the
    /// quantity each EM step cannot decrease.
    pub log_posteriors: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
}

/// Unnormalized log density of the symmetric Dirichlet prior implied by the
/// pseudocounts.
pub fn log_prior(model: &ProfileHmm, pseudo: &PseudocountConfig) -> f64 {
    let m_len = model.length();
    let emissions: f64 = (1..=m_len)
        .map(|k| model.match_row(k).iter().sum::<f64>())
        .chain((0..=m_len).map(|k| model.insert_row(k).iter().sum::<f64>()))
        .sum();
    let mut transitions = 0.0;
    for k in 0..=m_len {
        for from in Kind::ALL {
            if !state_exists(from, k) {
                continue;
            }
            for to in Kind::ALL {
                if arc_allowed(from, to, k, m_len) {
                    transitions += model.transition(k, from, to);
                }
            }
        }
    }
    pseudo.emission_pseudocount * emissions + pseudo.transition_pseudocount * transitions
}

fn e_step(model: &ProfileHmm, seqs: &[CharSequence], bands: &[Band]) -> Result<(ModelCounts, f64)> {
    let per_seq = seqs
        .par_iter()
        .zip(bands.par_iter())
        .map(|(s, b)| expected_counts(model, &s.items, b))
        .collect::<Result<Vec<_>>>()?;
    // Fixed reduction order keeps training bit-reproducible.
    let mut total = ModelCounts::zeros(model.length(), model.alphabet_len());
    let mut ll = 0.0;
    for (c, l) in &per_seq {
        total.accumulate(c);
        ll += l;
    }
    Ok((total, ll))
}

/// Expectation maximization with the construction pseudocounts re-applied
/// at every maximization step.
pub fn baum_welch(
    model: &ProfileHmm,
    seqs: &[CharSequence],
    bands: Option<&[Band]>,
    opts: &TrainingOptions,
) -> Result<(ProfileHmm, TrainingTrace)> {
    if seqs.is_empty() {
        return Err(Error::Usage("training needs at least one sequence".into()));
    }
    if opts.max_epochs == 0 || !(opts.tol > 0.0) {
        return Err(Error::Config("max_epochs must be >= 1 and tol > 0".into()));
    }
    let bands: Vec<Band> = match bands {
        Some(b) if b.len() == seqs.len() => seqs
            .iter()
            .zip(b)
            .map(|(s, b)| resolve_band(model, s, Some(b)))
            .collect::<Result<_>>()?,
        Some(_) => return Err(Error::Usage("one band per training sequence required".into())),
        None => seqs
            .iter()
            .map(|s| resolve_band(model, s, None))
            .collect::<Result<_>>()?,
    };
    let mut current = model.clone();
    let (mut counts, mut ll) = e_step(&current, seqs, &bands)?;
    let mut trace = TrainingTrace {
        log_likelihoods: vec![ll],
        log_posteriors: vec![ll + log_prior(&current, &opts.pseudocounts)],
        epochs: 0,
        converged: false,
    };
    for _ in 0..opts.max_epochs {
        let next = counts.estimate(current.alphabet(), &opts.pseudocounts)?;
        let (next_counts, next_ll) = e_step(&next, seqs, &bands)?;
        trace.epochs += 1;
        trace.log_likelihoods.push(next_ll);
        trace
            .log_posteriors
            .push(next_ll + log_prior(&next, &opts.pseudocounts));
        let improvement = (next_ll - ll) / ll.abs().max(f64::MIN_POSITIVE);
        current = next;
        counts = next_counts;
        ll = next_ll;
        if improvement < opts.tol {
            trace.converged = true;
            break;
        }
    }
    Ok((current, trace))
}

fn argmax_lowest(row: &[f64]) -> u32 {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best as u32
}

/// Best begin-to-end path over match and delete states using transition
/// probabilities only; ties prefer the match state.
pub fn consensus_path(model: &ProfileHmm) -> StatePath {
    let m_len = model.length();
    let mut vm = vec![NEG_INF; m_len + 1];
    let mut vd = vec![NEG_INF; m_len + 1];
    let mut from_m = vec![BP_NONE; m_len + 1];
    let mut from_d = vec![BP_NONE; m_len + 1];
    vm[0] = 0.0;
    for k in 1..=m_len {
        let p = k - 1;
        let (s, c) = best_of(&[
            (Kind::Match, vm[p] + model.transition(p, Kind::Match, Kind::Match)),
            (Kind::Delete, vd[p] + model.transition(p, Kind::Delete, Kind::Match)),
        ]);
        vm[k] = s;
        from_m[k] = c;
        let (s, c) = best_of(&[
            (Kind::Match, vm[p] + model.transition(p, Kind::Match, Kind::Delete)),
            (Kind::Delete, vd[p] + model.transition(p, Kind::Delete, Kind::Delete)),
        ]);
        vd[k] = s;
        from_d[k] = c;
    }
    let (total, last) = best_of(&[
        (Kind::Match, vm[m_len] + model.transition(m_len, Kind::Match, Kind::Match)),
        (Kind::Delete, vd[m_len] + model.transition(m_len, Kind::Delete, Kind::Match)),
    ]);
    let mut visits = vec![StateVisit {
        state: StateKind::End,
        position: m_len + 1,
        symbol: None,
    }];
    let mut kind = code_kind(last);
    let mut k = m_len;
    while k > 0 {
        let (symbol, code) = match kind {
            Kind::Match => (Some(argmax_lowest(model.match_row(k))), from_m[k]),
            _ => (None, from_d[k]),
        };
        visits.push(StateVisit {
            state: kind.into(),
            position: k,
            symbol,
        });
        kind = code_kind(code);
        k -= 1;
    }
    visits.push(StateVisit {
        state: StateKind::Begin,
        position: 0,
        symbol: None,
    });
    visits.reverse();
    StatePath {
        visits,
        log_probability: total,
    }
}

/// Modal sequence estimate: the consensus path with each match state
/// emitting its most probable symbol (lowest ordinal on ties).
pub fn consensus(model: &ProfileHmm) -> CharSequence {
    let items = consensus_path(model).emitted();
    CharSequence {
        original_length: items.len(),
        items,
        source_id: "consensus".into(),
        alphabet_id: model.alphabet().fingerprint(),
    }
}

/// Marginal probability of visiting `m_k` and `d_k`, k = 1..=M, under the
/// transition structure alone.
pub fn position_occupancy(model: &ProfileHmm) -> Vec<(f64, f64)> {
    let m_len = model.length();
    let t = |k, from, to| model.transition(k, from, to).exp();
    let mut out = Vec::with_capacity(m_len);
    // Begin behaves as m_0; an insert state always exits to the next match.
    let (mut pm, mut pd) = (1.0, 0.0);
    for k in 0..m_len {
        let pi = pm * t(k, Kind::Match, Kind::Insert);
        let next_m = pm * t(k, Kind::Match, Kind::Match) + pd * t(k, Kind::Delete, Kind::Match) + pi;
        let next_d = pm * t(k, Kind::Match, Kind::Delete) + pd * t(k, Kind::Delete, Kind::Delete);
        pm = next_m;
        pd = next_d;
        out.push((pm, pd));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CharLabel {
    ConsensusMatch,
    Insertion,
    AfterDeletion,
}

/// One label per symbol of `seq`, read off its Viterbi path. A match-state
/// symbol directly following one or more delete states is labelled
/// `AfterDeletion`.
pub fn annotate_alignment(model: &ProfileHmm, seq: &CharSequence, band: Option<&Band>) -> Result<Vec<CharLabel>> {
    let path = viterbi(model, seq, band)?;
    let mut labels = Vec::with_capacity(seq.len());
    let mut after_delete = false;
    for v in &path.visits {
        match v.state {
            StateKind::Delete => after_delete = true,
            StateKind::Match => {
                labels.push(if after_delete {
                    CharLabel::AfterDeletion
                } else {
                    CharLabel::ConsensusMatch
                });
                after_delete = false;
            }
            StateKind::Insert => {
                labels.push(CharLabel::Insertion);
                after_delete = false;
            }
            _ => {}
        }
    }
    Ok(labels)
}

/// Runs `f` with the given half width, doubling it after each banding
/// failure, at most `retries` times.
pub fn with_band_retry<T>(half_width: usize, retries: usize, mut f: impl FnMut(usize) -> Result<T>) -> Result<T> {
    let mut hw = half_width.max(1);
    let mut attempt = 0;
    loop {
        match f(hw) {
            Err(Error::Banding { .. }) if attempt < retries => {
                attempt += 1;
                hw *= 2;
            }
            other => return other,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::{build_alphabet, normalize_text, AlphabetPolicy};
    use crate::model::{build_model, validate_model};
    use crate::msa::{mark_match_columns, MultipleAlignment};

    fn alpha() -> Alphabet {
        build_alphabet(&["abcdefXRE"], &AlphabetPolicy::corpus(1)).unwrap()
    }

    fn model_from(rows: &[&str], a: &Alphabet, pc: f64) -> ProfileHmm {
        let msa = MultipleAlignment {
            rows: rows
                .iter()
                .map(|t| t.chars().map(|c| if c == '-' { None } else { a.ordinal(c) }).collect())
                .collect(),
            row_ids: (0..rows.len()).map(|i| i.to_string()).collect(),
        };
        let marked = mark_match_columns(&msa, 0.5).unwrap();
        let pseudo = PseudocountConfig {
            emission_pseudocount: pc,
            transition_pseudocount: pc,
        };
        build_model(&marked, a, &pseudo).unwrap()
    }

    fn kinds(path: &StatePath) -> String {
        path.visits
            .iter()
            .map(|v| match v.state {
                StateKind::Begin => "b".to_string(),
                StateKind::End => "e".to_string(),
                StateKind::Match => format!("m{}", v.position),
                StateKind::Insert => format!("i{}", v.position),
                StateKind::Delete => format!("d{}", v.position),
            })
            .collect::<Vec<_>>()
            .join(",")
    }

    #[test]
    fn viterbi_paths_on_identical_rows_model() {
        let a = alpha();
        let model = model_from(&["abc"; 7], &a, 1.0);
        let s = |t: &str| normalize_text(t, &a);
        assert_eq!(kinds(&viterbi(&model, &s("abc"), None).unwrap()), "b,m1,m2,m3,e");
        let p = viterbi(&model, &s("abXc"), None).unwrap();
        assert_eq!(kinds(&p), "b,m1,m2,i2,m3,e");
        assert_eq!(p.visits[3].symbol, a.ordinal('X'));
        assert_eq!(kinds(&viterbi(&model, &s("ac"), None).unwrap()), "b,m1,d2,m3,e");
    }

    #[test]
    fn empty_sequence_takes_the_all_delete_path() {
        let a = alpha();
        let model = model_from(&["abc", "abc", "ab-"], &a, 1.0);
        let empty = normalize_text("", &a);
        let mut expected = model.transition(0, Kind::Match, Kind::Delete);
        for k in 1..3 {
            expected += model.transition(k, Kind::Delete, Kind::Delete);
        }
        expected += model.transition(3, Kind::Delete, Kind::Match);
        let f = forward(&model, &empty, None).unwrap();
        let b = backward(&model, &empty, None).unwrap();
        assert!((f - expected).abs() < 1e-12);
        assert!((b - expected).abs() < 1e-12);
        assert_eq!(kinds(&viterbi(&model, &empty, None).unwrap()), "b,d1,d2,d3,e");
    }

    #[test]
    fn consensus_examples() {
        let a = alpha();
        let model = model_from(&["abc"; 7], &a, 1.0);
        assert_eq!(a.decode(&consensus(&model).items), "abc");

        let model = model_from(&["Ra", "Ra", "Ra", "Ea", "Ra", "Ra", "Ra"], &a, 1.0);
        assert_eq!(a.decode(&consensus(&model).items), "Ra");

        // Two of seven rows carry "XX" between the sentences.
        let rows = ["ab--cd", "abXXcd", "ab--cd", "ab--cd", "abXXcd", "ab--cd", "ab--cd"];
        let model = model_from(&rows, &a, 1.0);
        assert_eq!(model.length(), 4);
        assert_eq!(a.decode(&consensus(&model).items), "abcd");
    }

    #[test]
    fn annotation_labels() {
        let a = alpha();
        let model = model_from(&["abcdef"; 7], &a, 1.0);
        let s = |t: &str| normalize_text(t, &a);
        let labels = annotate_alignment(&model, &s("abcdef"), None).unwrap();
        assert!(labels.iter().all(|l| *l == CharLabel::ConsensusMatch));

        let labels = annotate_alignment(&model, &s("abcXXdef"), None).unwrap();
        assert_eq!(labels.len(), 8);
        assert_eq!(&labels[3..5], &[CharLabel::Insertion, CharLabel::Insertion]);

        let labels = annotate_alignment(&model, &s("abef"), None).unwrap();
        assert_eq!(
            labels,
            vec![
                CharLabel::ConsensusMatch,
                CharLabel::ConsensusMatch,
                CharLabel::AfterDeletion,
                CharLabel::ConsensusMatch
            ]
        );
    }

    #[test]
    fn fixed_point_training_converges_immediately() {
        let a = alpha();
        let model = model_from(&["abcd"], &a, 1e-4);
        let seq = normalize_text("abcd", &a);
        let opts = TrainingOptions {
            max_epochs: 10,
            tol: 1e-6,
            pseudocounts: PseudocountConfig {
                emission_pseudocount: 1e-4,
                transition_pseudocount: 1e-4,
            },
        };
        let (trained, trace) = baum_welch(&model, &[seq], None, &opts).unwrap();
        assert!(trace.converged);
        assert!(trace.epochs <= 1);
        assert_eq!(consensus(&trained).items, consensus(&model).items);
        assert!(validate_model(&trained).is_empty());
    }

    #[test]
    fn training_keeps_models_normalized_and_improves() {
        let a = alpha();
        let model = model_from(&["ab-cd", "abXcd", "ab--d", "ab-cd"], &a, 1.0);
        let seqs: Vec<_> = ["abcd", "abXcd", "abd", "abcd", "aXbcd"]
            .iter()
            .map(|t| normalize_text(t, &a))
            .collect();
        let (trained, trace) = baum_welch(&model, &seqs, None, &TrainingOptions::default()).unwrap();
        assert!(validate_model(&trained).is_empty());
        for w in trace.log_posteriors.windows(2) {
            assert!(w[1] >= w[0] - 1e-6 * w[0].abs());
        }
    }

    #[test]
    fn bands_agree_with_full_computation_when_wide() {
        let a = alpha();
        let model = model_from(&["abcdefab-cdef", "abcdefabXcdef", "abcde-ab-cdef"], &a, 1.0);
        let seq = normalize_text("abcdefXabcdef", &a);
        let band = Band::diagonal(seq.len(), model.length(), 20);
        assert_eq!(
            forward(&model, &seq, Some(&band)).unwrap(),
            forward(&model, &seq, None).unwrap()
        );
        let narrow = Band::diagonal(seq.len(), model.length(), 1);
        let nf = forward(&model, &seq, Some(&narrow)).unwrap();
        let nb = backward(&model, &seq, Some(&narrow)).unwrap();
        assert!((nf - nb).abs() < 1e-9);
        assert!(nf <= forward(&model, &seq, None).unwrap());
    }

    #[test]
    fn band_windows_are_monotone_and_cover_the_model() {
        let band = Band::around(&[1, 2, 9, 9, 3, 12], 12, 2);
        let mut prev = (0, 0);
        for t in 0..=band.seq_len() {
            let (lo, hi) = band.window(t);
            assert!(lo <= hi && lo >= prev.0 && hi >= prev.1 && lo <= prev.1 + 1);
            prev = (lo, hi);
        }
        assert_eq!(band.window(0).0, 0);
        assert_eq!(band.window(6).1, 12);
    }

    #[test]
    fn retry_doubles_width() {
        let mut seen = Vec::new();
        let r: Result<()> = with_band_retry(4, 3, |hw| {
            seen.push(hw);
            Err(Error::Banding { half_width: hw })
        });
        assert!(r.is_err());
        assert_eq!(seen, vec![4, 8, 16, 32]);
    }

    #[test]
    fn occupancy_sums_match_and_delete() {
        let a = alpha();
        let model = model_from(&["abc", "a-c", "abc"], &a, 1.0);
        for (pm, pd) in position_occupancy(&model) {
            assert!((pm + pd - 1.0).abs() < 1e-12);
        }
    }
}
