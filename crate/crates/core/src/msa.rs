//! Barton-Sternberg progressive multiple alignment with iterative
//! refinement, and match-column marking.

use serde::{Deserialize, Serialize};

use crate::align::{align_items, display_char, global_align, GlobalScorer, ScoringScheme, Step};
use crate::alphabet::{parse_error, Alphabet, CharSequence};
use crate::error::{Error, Result};

/// Gap glyph used in the one-row-per-line serialization.
pub const MSA_GAP_GLYPH: char = '\u{2581}';

pub const MSA_FORMAT: &str = "ebookhmm-msa/1";

pub type Row = Vec<Option<u32>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultipleAlignment {
    pub rows: Vec<Row>,
    pub row_ids: Vec<String>,
}

impl MultipleAlignment {
    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_columns(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn degapped(&self, row: usize) -> Vec<u32> {
        self.rows[row].iter().flatten().copied().collect()
    }

    pub fn gap_count(&self, column: usize) -> usize {
        self.rows.iter().filter(|r| r[column].is_none()).count()
    }

    /// Equal row lengths and no all-gap column.
    pub fn check(&self) -> Result<()> {
        let n = self.num_columns();
        if self.rows.iter().any(|r| r.len() != n) {
            return Err(Error::Usage("alignment rows differ in length".into()));
        }
        if self.rows.len() != self.row_ids.len() {
            return Err(Error::Usage("row id count differs from row count".into()));
        }
        if let Some(c) = (0..n).find(|&c| self.gap_count(c) == self.rows.len()) {
            return Err(Error::Usage(format!("column {c} is all gaps")));
        }
        Ok(())
    }

    /// Sum over row pairs of the pairwise column scores, gap against gap
    /// scoring zero.
    pub fn sum_of_pairs(&self, scoring: &ScoringScheme) -> i64 {
        let mut symbols = Vec::with_capacity(self.rows.len());
        (0..self.num_columns())
            .map(|c| {
                symbols.clear();
                symbols.extend(self.rows.iter().filter_map(|r| r[c]));
                symbols.sort_unstable();
                column_pair_score(&symbols, self.rows.len() as i64, scoring)
            })
            .sum()
    }

    pub fn to_text(&self, alphabet: &Alphabet) -> Result<String> {
        check_glyph_safe(alphabet)?;
        let mut out = String::new();
        for row in &self.rows {
            out.extend(
                row.iter()
                    .map(|c| c.map_or(MSA_GAP_GLYPH, |o| display_char(alphabet.symbol(o)))),
            );
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_text(text: &str, row_ids: Vec<String>, alphabet: &Alphabet) -> Result<Self> {
        check_glyph_safe(alphabet)?;
        let mut rows = Vec::new();
        let mut offset = 0;
        for line in text.split_terminator('\n') {
            let mut row = Vec::with_capacity(line.len());
            for (i, g) in line.char_indices() {
                let cell = match g as u32 {
                    _ if g == MSA_GAP_GLYPH => None,
                    cp @ 0x2400..=0x241f => Some(char::from_u32(cp - 0x2400).expect("C0")),
                    0x2421 => Some('\u{7f}'),
                    _ => Some(g),
                };
                let cell = match cell {
                    None => None,
                    Some(c) => Some(alphabet.ordinal(c).ok_or_else(|| Error::Parse {
                        offset: offset + i,
                        message: format!("symbol {c:?} is not in the alphabet"),
                    })?),
                };
                row.push(cell);
            }
            offset += line.len() + 1;
            rows.push(row);
        }
        let msa = MultipleAlignment { rows, row_ids };
        msa.check()?;
        Ok(msa)
    }
}

fn check_glyph_safe(alphabet: &Alphabet) -> Result<()> {
    for &c in alphabet.symbols() {
        let cp = c as u32;
        if c == MSA_GAP_GLYPH || (0x2400..=0x2421).contains(&cp) || (0x80..=0x9f).contains(&cp) {
            return Err(Error::Config(format!(
                "alphabet symbol {cp:#06x} collides with an alignment display glyph"
            )));
        }
    }
    Ok(())
}

/// `symbols` are the sorted non-gap entries of one column.
fn column_pair_score(symbols: &[u32], rows: i64, s: &ScoringScheme) -> i64 {
    let n = symbols.len() as i64;
    let gaps = rows - n;
    let mut same = 0i64;
    let mut run = 1i64;
    for w in symbols.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            same += run * (run - 1) / 2;
            run = 1;
        }
    }
    if n > 0 {
        same += run * (run - 1) / 2;
    }
    let different = n * (n - 1) / 2 - same;
    same * i64::from(s.match_score) + different * i64::from(s.mismatch_score) + n * gaps * i64::from(s.gap_score)
}

/// Per-column symbol counts of an alignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnProfile {
    counts: Vec<u32>,
    gaps: Vec<u32>,
    rows: u32,
    alphabet_len: usize,
}

impl ColumnProfile {
    pub fn from_rows(rows: &[Row], alphabet_len: usize) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut counts = vec![0u32; cols * alphabet_len];
        let mut gaps = vec![0u32; cols];
        for row in rows {
            for (c, cell) in row.iter().enumerate() {
                match cell {
                    Some(x) => counts[c * alphabet_len + *x as usize] += 1,
                    None => gaps[c] += 1,
                }
            }
        }
        ColumnProfile {
            counts,
            gaps,
            rows: rows.len() as u32,
            alphabet_len,
        }
    }

    pub fn num_columns(&self) -> usize {
        self.gaps.len()
    }

    pub fn count(&self, column: usize, symbol: u32) -> u32 {
        self.counts[column * self.alphabet_len + symbol as usize]
    }

    pub fn gaps(&self, column: usize) -> u32 {
        self.gaps[column]
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }
}

/// One column of a sequence-to-profile alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileStep {
    /// The sequence symbol (or a gap) placed in an existing profile column.
    Column(Option<u32>),
    /// A sequence symbol opening a new column, gapped in every profile row.
    Insert(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileAlignment {
    pub steps: Vec<ProfileStep>,
    /// Sum-of-pairs contribution of the aligned sequence against the
    /// profile rows.
    pub score: i64,
}

// Scores are sums over profile rows, i.e. the column average scaled by the
// row count, which keeps the dynamic program in integers.
struct ProfileScorer<'a> {
    profile: &'a ColumnProfile,
    seq: &'a [u32],
    scheme: ScoringScheme,
}

impl GlobalScorer for ProfileScorer<'_> {
    fn top_len(&self) -> usize {
        self.profile.num_columns()
    }
    fn bottom_len(&self) -> usize {
        self.seq.len()
    }
    fn substitute(&self, col: usize, j: usize) -> i64 {
        let same = i64::from(self.profile.count(col, self.seq[j]));
        let gaps = i64::from(self.profile.gaps(col));
        let residues = i64::from(self.profile.rows) - gaps;
        same * i64::from(self.scheme.match_score)
            + (residues - same) * i64::from(self.scheme.mismatch_score)
            + gaps * i64::from(self.scheme.gap_score)
    }
    fn top_gap(&self, col: usize) -> i64 {
        let residues = i64::from(self.profile.rows - self.profile.gaps(col));
        residues * i64::from(self.scheme.gap_score)
    }
    fn bottom_gap(&self, _: usize) -> i64 {
        i64::from(self.profile.rows) * i64::from(self.scheme.gap_score)
    }
}

pub fn align_sequence_to_profile(
    profile: &ColumnProfile,
    seq: &CharSequence,
    scoring: &ScoringScheme,
) -> Result<ProfileAlignment> {
    if profile.num_columns() == 0 {
        return Err(Error::Usage("profile has no columns".into()));
    }
    if let Some(&x) = seq.items.iter().find(|&&x| x as usize >= profile.alphabet_len) {
        return Err(Error::Usage(format!(
            "symbol ordinal {x} outside the profile alphabet"
        )));
    }
    Ok(profile_align_items(profile, &seq.items, scoring))
}

fn profile_align_items(profile: &ColumnProfile, seq: &[u32], scoring: &ScoringScheme) -> ProfileAlignment {
    let scorer = ProfileScorer {
        profile,
        seq,
        scheme: *scoring,
    };
    let (steps, score) = global_align(&scorer);
    let mut j = 0;
    let steps = steps
        .into_iter()
        .map(|s| match s {
            Step::Diagonal => {
                j += 1;
                ProfileStep::Column(Some(seq[j - 1]))
            }
            Step::Up => ProfileStep::Column(None),
            Step::Left => {
                j += 1;
                ProfileStep::Insert(seq[j - 1])
            }
        })
        .collect();
    ProfileAlignment { steps, score }
}

/// Adds the aligned sequence as a new row at `position`.
fn merge_row(rows: &[Row], aln: &ProfileAlignment, position: usize) -> Vec<Row> {
    let mut out: Vec<Row> = vec![Vec::with_capacity(aln.steps.len()); rows.len() + 1];
    let mut col = 0;
    for step in &aln.steps {
        let (new_cell, from_profile) = match *step {
            ProfileStep::Column(x) => (x, true),
            ProfileStep::Insert(x) => (Some(x), false),
        };
        for (r, row) in rows.iter().enumerate() {
            let target = if r < position { r } else { r + 1 };
            out[target].push(if from_profile { row[col] } else { None });
        }
        out[position].push(new_cell);
        if from_profile {
            col += 1;
        }
    }
    out
}

fn drop_all_gap_columns(rows: &mut [Row]) {
    let cols = rows.first().map_or(0, Vec::len);
    let keep: Vec<bool> = (0..cols).map(|c| rows.iter().any(|r| r[c].is_some())).collect();
    for row in rows.iter_mut() {
        let mut k = keep.iter();
        row.retain(|_| *k.next().expect("column flag"));
    }
}

fn alphabet_len_of(seqs: &[CharSequence]) -> usize {
    seqs.iter()
        .flat_map(|s| s.items.iter())
        .max()
        .map_or(1, |&m| m as usize + 1)
}

/// Progressive alignment seeded by the most similar pair, then each
/// remaining sequence in order of decreasing similarity to the aligned set,
/// then `refinement_rounds` leave-one-out realignment passes.
pub fn barton_sternberg(
    seqs: &[CharSequence],
    scoring: &ScoringScheme,
    refinement_rounds: usize,
) -> Result<MultipleAlignment> {
    if seqs.len() < 2 {
        return Err(Error::Usage(format!(
            "multiple alignment needs at least 2 sequences, got {}",
            seqs.len()
        )));
    }
    if seqs.iter().any(|s| s.alphabet_id != seqs[0].alphabet_id) {
        return Err(Error::Usage(
            "sequences were normalized against different alphabets".into(),
        ));
    }
    let k = seqs.len();
    let alphabet_len = alphabet_len_of(seqs);
    let identity = crate::align::identity_matrix(seqs, scoring)?.identity;

    let mut seed = (0, 1);
    for i in 0..k {
        for j in i + 1..k {
            if identity[i][j] > identity[seed.0][seed.1] {
                seed = (i, j);
            }
        }
    }
    let (cols, _) = align_items(&seqs[seed.0].items, &seqs[seed.1].items, scoring);
    let mut members = vec![seed.0, seed.1];
    let mut rows: Vec<Row> = vec![
        cols.iter().map(|c| c.0).collect(),
        cols.iter().map(|c| c.1).collect(),
    ];
    drop_all_gap_columns(&mut rows);

    while members.len() < k {
        let next = (0..k)
            .filter(|i| !members.contains(i))
            .max_by(|&a, &b| {
                let sa = members.iter().map(|&m| identity[a][m]).fold(f64::MIN, f64::max);
                let sb = members.iter().map(|&m| identity[b][m]).fold(f64::MIN, f64::max);
                sa.total_cmp(&sb).then(b.cmp(&a))
            })
            .expect("a remaining sequence");
        let profile = ColumnProfile::from_rows(&rows, alphabet_len);
        let aln = if profile.num_columns() == 0 {
            ProfileAlignment {
                steps: seqs[next].items.iter().map(|&x| ProfileStep::Insert(x)).collect(),
                score: 0,
            }
        } else {
            profile_align_items(&profile, &seqs[next].items, scoring)
        };
        rows = merge_row(&rows, &aln, rows.len());
        members.push(next);
    }

    // Restore input order.
    let mut ordered: Vec<Row> = vec![Vec::new(); k];
    for (row, &m) in rows.into_iter().zip(&members) {
        ordered[m] = row;
    }
    let mut msa = MultipleAlignment {
        rows: ordered,
        row_ids: seqs.iter().map(|s| s.source_id.clone()).collect(),
    };
    drop_all_gap_columns(&mut msa.rows);

    for _ in 0..refinement_rounds {
        if !refine_once(&mut msa, seqs, alphabet_len, scoring) {
            break;
        }
    }
    Ok(msa)
}

/// One leave-one-out pass. Returns whether any row moved.
fn refine_once(
    msa: &mut MultipleAlignment,
    seqs: &[CharSequence],
    alphabet_len: usize,
    scoring: &ScoringScheme,
) -> bool {
    let mut changed = false;
    for r in 0..msa.rows.len() {
        let mut rest: Vec<Row> = msa
            .rows
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != r)
            .map(|(_, row)| row.clone())
            .collect();
        drop_all_gap_columns(&mut rest);
        let profile = ColumnProfile::from_rows(&rest, alphabet_len);
        let aln = if profile.num_columns() == 0 {
            ProfileAlignment {
                steps: seqs[r].items.iter().map(|&x| ProfileStep::Insert(x)).collect(),
                score: 0,
            }
        } else {
            profile_align_items(&profile, &seqs[r].items, scoring)
        };
        let candidate = MultipleAlignment {
            rows: merge_row(&rest, &aln, r),
            row_ids: msa.row_ids.clone(),
        };
        if candidate.rows != msa.rows && candidate.sum_of_pairs(scoring) >= msa.sum_of_pairs(scoring) {
            *msa = candidate;
            changed = true;
        }
    }
    changed
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkedAlignment {
    pub alignment: MultipleAlignment,
    pub match_columns: Vec<usize>,
    pub gap_threshold: f64,
}

pub fn mark_match_columns(msa: &MultipleAlignment, gap_threshold: f64) -> Result<MarkedAlignment> {
    if !(gap_threshold > 0.0 && gap_threshold <= 1.0) {
        return Err(Error::Config(format!(
            "gap threshold must lie in (0, 1], got {gap_threshold}"
        )));
    }
    let rows = msa.num_rows() as f64;
    let match_columns = (0..msa.num_columns())
        .filter(|&c| (msa.gap_count(c) as f64) / rows < gap_threshold)
        .collect();
    Ok(MarkedAlignment {
        alignment: msa.clone(),
        match_columns,
        gap_threshold,
    })
}

impl MarkedAlignment {
    pub fn model_length(&self) -> usize {
        self.match_columns.len()
    }

    /// For each symbol of `row`, the model position it aligns to: `k` for
    /// the k-th match column, or the index of the preceding match column for
    /// inserted symbols.
    pub fn model_positions(&self, row: usize) -> Vec<usize> {
        let mut is_match = vec![false; self.alignment.num_columns()];
        for &c in &self.match_columns {
            is_match[c] = true;
        }
        let mut k = 0;
        let mut out = Vec::new();
        for (c, cell) in self.alignment.rows[row].iter().enumerate() {
            if is_match[c] {
                k += 1;
            }
            if cell.is_some() {
                out.push(k);
            }
        }
        out
    }

    pub fn sidecar(&self, alphabet: &Alphabet) -> MsaSidecar {
        MsaSidecar {
            format: MSA_FORMAT.to_string(),
            row_ids: self.alignment.row_ids.clone(),
            match_columns: self.match_columns.clone(),
            gap_threshold: self.gap_threshold,
            alphabet: alphabet.symbols().iter().map(|&c| c as u32).collect(),
        }
    }

    pub fn from_parts(text: &str, sidecar_json: &str) -> Result<(Self, Alphabet)> {
        let sidecar: MsaSidecar =
            serde_json::from_str(sidecar_json).map_err(|e| parse_error(sidecar_json, &e))?;
        if sidecar.format != MSA_FORMAT {
            return Err(Error::Version {
                found: sidecar.format,
                expected: MSA_FORMAT.to_string(),
            });
        }
        let alphabet = Alphabet::new(
            sidecar
                .alphabet
                .iter()
                .map(|&cp| char::from_u32(cp).ok_or_else(|| Error::Config(format!("bad code point {cp:#x}"))))
                .collect::<Result<Vec<_>>>()?,
        );
        let alignment = MultipleAlignment::from_text(text, sidecar.row_ids, &alphabet)?;
        let cols = alignment.num_columns();
        if sidecar.match_columns.windows(2).any(|w| w[0] >= w[1])
            || sidecar.match_columns.iter().any(|&c| c >= cols)
        {
            return Err(Error::Consistency(
                "match columns must be strictly increasing column indices".into(),
            ));
        }
        Ok((
            MarkedAlignment {
                alignment,
                match_columns: sidecar.match_columns,
                gap_threshold: sidecar.gap_threshold,
            },
            alphabet,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsaSidecar {
    pub format: String,
    pub row_ids: Vec<String>,
    pub match_columns: Vec<usize>,
    pub gap_threshold: f64,
    pub alphabet: Vec<u32>,
}
