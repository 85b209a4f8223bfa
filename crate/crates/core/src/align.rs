//! Global pairwise alignment (Needleman-Wunsch) with a linear gap penalty.
//!
//! The dynamic program is written once against [`GlobalScorer`] so the same
//! code aligns two sequences and a sequence against a column profile. Small
//! problems keep the full traceback matrix; long inputs fall back to
//! Hirschberg's linear-memory recursion.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{Alphabet, CharSequence};
use crate::error::{Error, Result};

/// Longest input aligned with a full traceback matrix.
pub const FULL_MATRIX_MAX_LEN: usize = 32_768;

/// Placeholder glyph for gap cells in rendered alignments.
pub const GAP_GLYPH: char = '\u{2591}';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringScheme {
    pub match_score: i32,
    pub mismatch_score: i32,
    pub gap_score: i32,
}

impl Default for ScoringScheme {
    fn default() -> Self {
        ScoringScheme {
            match_score: 1,
            mismatch_score: -1,
            gap_score: -1,
        }
    }
}

impl ScoringScheme {
    pub fn new(match_score: i32, mismatch_score: i32, gap_score: i32) -> Result<Self> {
        let s = ScoringScheme {
            match_score,
            mismatch_score,
            gap_score,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.match_score <= self.mismatch_score {
            return Err(Error::Config(
                "match score must exceed mismatch score".into(),
            ));
        }
        if self.gap_score >= self.match_score {
            return Err(Error::Config("gap score must be below match score".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn pair(&self, a: u32, b: u32) -> i64 {
        if a == b {
            i64::from(self.match_score)
        } else {
            i64::from(self.mismatch_score)
        }
    }
}

/// One traceback move. `Up` consumes a top symbol against a gap, `Left` a
/// bottom symbol against a gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Step {
    Diagonal,
    Up,
    Left,
}

pub(crate) trait GlobalScorer {
    fn top_len(&self) -> usize;
    fn bottom_len(&self) -> usize;
    fn substitute(&self, i: usize, j: usize) -> i64;
    fn top_gap(&self, i: usize) -> i64;
    fn bottom_gap(&self, j: usize) -> i64;
}

struct Window<'a, S: ?Sized> {
    inner: &'a S,
    i0: usize,
    j0: usize,
    n: usize,
    m: usize,
}

impl<S: GlobalScorer + ?Sized> GlobalScorer for Window<'_, S> {
    fn top_len(&self) -> usize {
        self.n
    }
    fn bottom_len(&self) -> usize {
        self.m
    }
    fn substitute(&self, i: usize, j: usize) -> i64 {
        self.inner.substitute(self.i0 + i, self.j0 + j)
    }
    fn top_gap(&self, i: usize) -> i64 {
        self.inner.top_gap(self.i0 + i)
    }
    fn bottom_gap(&self, j: usize) -> i64 {
        self.inner.bottom_gap(self.j0 + j)
    }
}

/// Optimal global alignment. Returns the steps from start to end and the
/// optimal score.
pub(crate) fn global_align<S: GlobalScorer>(s: &S) -> (Vec<Step>, i64) {
    if s.top_len().max(s.bottom_len()) <= FULL_MATRIX_MAX_LEN {
        full_matrix(s)
    } else {
        hirschberg(s)
    }
}

const TB_DIAG: u8 = 0;
const TB_UP: u8 = 1;
const TB_LEFT: u8 = 2;

/// Traceback preference on ties: diagonal, then up, then left.
pub(crate) fn full_matrix<S: GlobalScorer + ?Sized>(s: &S) -> (Vec<Step>, i64) {
    let n = s.top_len();
    let m = s.bottom_len();
    let width = m + 1;
    let mut trace = vec![TB_LEFT; (n + 1) * width];
    let mut prev = vec![0i64; width];
    let mut cur = vec![0i64; width];
    for j in 1..=m {
        prev[j] = prev[j - 1] + s.bottom_gap(j - 1);
    }
    for i in 1..=n {
        let row = i * width;
        cur[0] = prev[0] + s.top_gap(i - 1);
        trace[row] = TB_UP;
        let gap_top = s.top_gap(i - 1);
        for j in 1..=m {
            let diag = prev[j - 1] + s.substitute(i - 1, j - 1);
            let up = prev[j] + gap_top;
            let left = cur[j - 1] + s.bottom_gap(j - 1);
            let (best, tb) = if diag >= up && diag >= left {
                (diag, TB_DIAG)
            } else if up >= left {
                (up, TB_UP)
            } else {
                (left, TB_LEFT)
            };
            cur[j] = best;
            trace[row + j] = tb;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let score = prev[m];
    let mut steps = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let tb = if i == 0 {
            TB_LEFT
        } else if j == 0 {
            TB_UP
        } else {
            trace[i * width + j]
        };
        match tb {
            TB_DIAG => {
                steps.push(Step::Diagonal);
                i -= 1;
                j -= 1;
            }
            TB_UP => {
                steps.push(Step::Up);
                i -= 1;
            }
            _ => {
                steps.push(Step::Left);
                j -= 1;
            }
        }
    }
    steps.reverse();
    (steps, score)
}

/// Last row of the score matrix, linear memory.
fn forward_last_row<S: GlobalScorer + ?Sized>(s: &S) -> Vec<i64> {
    let m = s.bottom_len();
    let mut prev = vec![0i64; m + 1];
    let mut cur = vec![0i64; m + 1];
    for j in 1..=m {
        prev[j] = prev[j - 1] + s.bottom_gap(j - 1);
    }
    for i in 1..=s.top_len() {
        cur[0] = prev[0] + s.top_gap(i - 1);
        for j in 1..=m {
            let diag = prev[j - 1] + s.substitute(i - 1, j - 1);
            let up = prev[j] + s.top_gap(i - 1);
            let left = cur[j - 1] + s.bottom_gap(j - 1);
            cur[j] = diag.max(up).max(left);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev
}

/// `out[j]` is the best score of aligning the whole top with `bottom[j..]`.
fn backward_first_row<S: GlobalScorer + ?Sized>(s: &S) -> Vec<i64> {
    let n = s.top_len();
    let m = s.bottom_len();
    let mut prev = vec![0i64; m + 1];
    let mut cur = vec![0i64; m + 1];
    for j in (0..m).rev() {
        prev[j] = prev[j + 1] + s.bottom_gap(j);
    }
    for i in (0..n).rev() {
        cur[m] = prev[m] + s.top_gap(i);
        for j in (0..m).rev() {
            let diag = prev[j + 1] + s.substitute(i, j);
            let up = prev[j] + s.top_gap(i);
            let left = cur[j + 1] + s.bottom_gap(j);
            cur[j] = diag.max(up).max(left);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev
}

const HIRSCHBERG_BASE_CELLS: usize = 1 << 22;

pub(crate) fn hirschberg<S: GlobalScorer + ?Sized>(s: &S) -> (Vec<Step>, i64) {
    let mut steps = Vec::with_capacity(s.top_len() + s.bottom_len());
    let score = hirschberg_rec(s, 0, 0, s.top_len(), s.bottom_len(), &mut steps);
    (steps, score)
}

fn hirschberg_rec<S: GlobalScorer + ?Sized>(
    s: &S,
    i0: usize,
    j0: usize,
    n: usize,
    m: usize,
    out: &mut Vec<Step>,
) -> i64 {
    let window = Window {
        inner: s,
        i0,
        j0,
        n,
        m,
    };
    if n <= 1 || (n + 1) * (m + 1) <= HIRSCHBERG_BASE_CELLS {
        let (steps, score) = full_matrix(&window);
        out.extend(steps);
        return score;
    }
    let mid = n / 2;
    let upper = Window {
        inner: s,
        i0,
        j0,
        n: mid,
        m,
    };
    let lower = Window {
        inner: s,
        i0: i0 + mid,
        j0,
        n: n - mid,
        m,
    };
    let f = forward_last_row(&upper);
    let b = backward_first_row(&lower);
    let split = (0..=m)
        .max_by_key(|&j| (f[j] + b[j], std::cmp::Reverse(j)))
        .expect("non-empty range");
    let left = hirschberg_rec(s, i0, j0, mid, split, out);
    let right = hirschberg_rec(s, i0 + mid, j0 + split, n - mid, m - split, out);
    left + right
}

struct PairScorer<'a> {
    a: &'a [u32],
    b: &'a [u32],
    scheme: ScoringScheme,
}

impl GlobalScorer for PairScorer<'_> {
    fn top_len(&self) -> usize {
        self.a.len()
    }
    fn bottom_len(&self) -> usize {
        self.b.len()
    }
    fn substitute(&self, i: usize, j: usize) -> i64 {
        self.scheme.pair(self.a[i], self.b[j])
    }
    fn top_gap(&self, _: usize) -> i64 {
        i64::from(self.scheme.gap_score)
    }
    fn bottom_gap(&self, _: usize) -> i64 {
        i64::from(self.scheme.gap_score)
    }
}

/// Two gapped rows over a shared column axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairwiseAlignment {
    pub columns: Vec<(Option<u32>, Option<u32>)>,
    pub score: i64,
    pub top_id: String,
    pub bottom_id: String,
}

impl PairwiseAlignment {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn top(&self) -> Vec<u32> {
        self.columns.iter().filter_map(|c| c.0).collect()
    }

    pub fn bottom(&self) -> Vec<u32> {
        self.columns.iter().filter_map(|c| c.1).collect()
    }

    pub fn rescore(&self, scheme: &ScoringScheme) -> i64 {
        self.columns
            .iter()
            .map(|c| match c {
                (Some(a), Some(b)) => scheme.pair(*a, *b),
                _ => i64::from(scheme.gap_score),
            })
            .sum()
    }
}

fn steps_to_columns(steps: &[Step], a: &[u32], b: &[u32]) -> Vec<(Option<u32>, Option<u32>)> {
    let (mut i, mut j) = (0, 0);
    steps
        .iter()
        .map(|step| match step {
            Step::Diagonal => {
                i += 1;
                j += 1;
                (Some(a[i - 1]), Some(b[j - 1]))
            }
            Step::Up => {
                i += 1;
                (Some(a[i - 1]), None)
            }
            Step::Left => {
                j += 1;
                (None, Some(b[j - 1]))
            }
        })
        .collect()
}

/// Aligns raw ordinal slices; no alphabet check.
pub fn align_items(a: &[u32], b: &[u32], scoring: &ScoringScheme) -> (Vec<(Option<u32>, Option<u32>)>, i64) {
    let scorer = PairScorer {
        a,
        b,
        scheme: *scoring,
    };
    let (steps, score) = global_align(&scorer);
    (steps_to_columns(&steps, a, b), score)
}

pub fn needleman_wunsch(
    a: &CharSequence,
    b: &CharSequence,
    scoring: &ScoringScheme,
) -> Result<PairwiseAlignment> {
    if a.alphabet_id != b.alphabet_id {
        return Err(Error::Usage(format!(
            "sequences '{}' and '{}' were normalized against different alphabets",
            a.source_id, b.source_id
        )));
    }
    let (columns, score) = align_items(&a.items, &b.items, scoring);
    Ok(PairwiseAlignment {
        columns,
        score,
        top_id: a.source_id.clone(),
        bottom_id: b.source_id.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityStats {
    pub matches: usize,
    pub alignment_length: usize,
    pub identity: f64,
}

/// Matching columns over all columns. Two empty sequences are identical.
pub fn sequence_identity(alignment: &PairwiseAlignment) -> IdentityStats {
    let matches = alignment
        .columns
        .iter()
        .filter(|(a, b)| a.is_some() && a == b)
        .count();
    let alignment_length = alignment.len();
    let identity = if alignment_length == 0 {
        1.0
    } else {
        matches as f64 / alignment_length as f64
    };
    IdentityStats {
        matches,
        alignment_length,
        identity,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityMatrix {
    pub ids: Vec<String>,
    pub identity: Vec<Vec<f64>>,
}

/// All-pairs identity, computed in parallel. The diagonal is 1.
pub fn identity_matrix(seqs: &[CharSequence], scoring: &ScoringScheme) -> Result<IdentityMatrix> {
    let k = seqs.len();
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (i + 1..k).map(move |j| (i, j)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| needleman_wunsch(&seqs[i], &seqs[j], scoring).map(|a| sequence_identity(&a).identity))
        .collect::<Result<Vec<_>>>()?;
    let mut identity = vec![vec![1.0; k]; k];
    for (&(i, j), v) in pairs.iter().zip(values) {
        identity[i][j] = v;
        identity[j][i] = v;
    }
    Ok(IdentityMatrix {
        ids: seqs.iter().map(|s| s.source_id.clone()).collect(),
        identity,
    })
}

/// Visible stand-in for a code point: C0 controls map to the Control
/// Pictures block (LF shows as U+240A), DEL to U+2421, C1 controls to U+FFFD.
pub fn display_char(c: char) -> char {
    match c as u32 {
        cp @ 0x00..=0x1f => char::from_u32(0x2400 + cp).expect("control picture"),
        0x7f => '\u{2421}',
        0x80..=0x9f => '\u{FFFD}',
        _ => c,
    }
}

/// Wrapped, interleaved rendering: each block is a top line and a bottom
/// line; blocks are separated by a blank line.
pub fn render_alignment(alignment: &PairwiseAlignment, alphabet: &Alphabet, width: usize) -> String {
    let width = width.max(1);
    let glyph = |c: Option<u32>| c.map_or(GAP_GLYPH, |o| display_char(alphabet.symbol(o)));
    let mut out = String::new();
    for (n, block) in alignment.columns.chunks(width).enumerate() {
        if n > 0 {
            out.push('\n');
        }
        out.extend(block.iter().map(|c| glyph(c.0)));
        out.push('\n');
        out.extend(block.iter().map(|c| glyph(c.1)));
        out.push('\n');
    }
    out
}
