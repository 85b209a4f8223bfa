//! Emission alphabet and text normalization.
//!
//! Transcriptions are read as Unicode code points. Line endings are collapsed
//! to U+000A before lookup; any code point outside the alphabet is replaced
//! with U+0020, so normalization never changes the sequence length beyond the
//! line-ending collapse.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPACE: char = '\u{20}';
pub const LINE_FEED: char = '\u{0A}';
pub const FORM_FEED: char = '\u{0C}';

pub const ALPHABET_FORMAT: &str = "ebookhmm-alphabet/1";

/// Code points every alphabet carries regardless of policy.
pub fn default_mandatory() -> BTreeSet<char> {
    [SPACE, LINE_FEED, FORM_FEED].into_iter().collect()
}

/// An ordered set of code points. Ordinals index `symbols`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<char>,
    index: HashMap<char, u32>,
    replacement: u32,
    fingerprint: u64,
}

#[derive(Serialize, Deserialize)]
struct AlphabetFile {
    format: String,
    symbols: Vec<u32>,
}

impl Alphabet {
    /// Builds an alphabet from arbitrary code points. The result is sorted by
    /// code point and always contains the mandatory whitespace symbols.
    pub fn new(symbols: impl IntoIterator<Item = char>) -> Self {
        let mut set: BTreeSet<char> = symbols.into_iter().collect();
        set.extend(default_mandatory());
        let symbols: Vec<char> = set.into_iter().collect();
        let index = symbols
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i as u32))
            .collect::<HashMap<_, _>>();
        let replacement = index[&SPACE];
        let fingerprint = fingerprint(&symbols);
        Alphabet {
            symbols,
            index,
            replacement,
            fingerprint,
        }
    }

    /// A 107-symbol alphabet covering printable ASCII, the mandatory
    /// whitespace, typographic quotes and dashes, and a few accented letters
    /// common in nineteenth-century English typesetting.
    pub fn default_text() -> Self {
        let mut symbols: Vec<char> = (0x20u8..0x7f).map(char::from).collect();
        symbols.extend([
            '\u{2018}', '\u{2019}', '\u{201C}', '\u{201D}', '\u{2014}', '\u{2013}', '\u{00A3}',
            '\u{00E9}', '\u{00E6}', '\u{0153}',
        ]);
        Alphabet::new(symbols)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn symbol(&self, ordinal: u32) -> char {
        self.symbols[ordinal as usize]
    }

    pub fn ordinal(&self, c: char) -> Option<u32> {
        self.index.get(&c).copied()
    }

    /// Ordinal of U+0020, used for out-of-alphabet code points.
    pub fn replacement_index(&self) -> u32 {
        self.replacement
    }

    /// Stable identifier of the symbol list, used to reject mixing sequences
    /// normalized against different alphabets.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn decode(&self, items: &[u32]) -> String {
        items.iter().map(|&o| self.symbol(o)).collect()
    }

    pub fn to_json(&self) -> String {
        let file = AlphabetFile {
            format: ALPHABET_FORMAT.to_string(),
            symbols: self.symbols.iter().map(|&c| c as u32).collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("alphabet serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: AlphabetFile = serde_json::from_str(text).map_err(|e| parse_error(text, &e))?;
        if file.format != ALPHABET_FORMAT {
            return Err(Error::Version {
                found: file.format,
                expected: ALPHABET_FORMAT.to_string(),
            });
        }
        let mut symbols = Vec::with_capacity(file.symbols.len());
        for cp in file.symbols {
            let c = char::from_u32(cp)
                .ok_or_else(|| Error::Config(format!("{cp:#x} is not a Unicode scalar value")))?;
            symbols.push(c);
        }
        let unique: BTreeSet<char> = symbols.iter().copied().collect();
        if unique.len() != symbols.len() {
            return Err(Error::Config("alphabet lists a symbol twice".into()));
        }
        Ok(Alphabet::new(symbols))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Alphabet::from_json(&text)
    }
}

// FNV-1a over the code points.
fn fingerprint(symbols: &[char]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &c in symbols {
        for b in (c as u32).to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// Converts a serde_json error position (line, column) into a byte offset.
pub(crate) fn parse_error(text: &str, err: &serde_json::Error) -> Error {
    let line = err.line().max(1);
    let column = err.column();
    let offset = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum::<usize>()
        + column.saturating_sub(1);
    Error::Parse {
        offset: offset.min(text.len()),
        message: err.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AlphabetMode {
    ExplicitList(Vec<char>),
    CorpusDerived { min_frequency: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlphabetPolicy {
    pub mode: AlphabetMode,
    pub mandatory: BTreeSet<char>,
}

impl AlphabetPolicy {
    pub fn corpus(min_frequency: usize) -> Self {
        AlphabetPolicy {
            mode: AlphabetMode::CorpusDerived { min_frequency },
            mandatory: default_mandatory(),
        }
    }

    pub fn explicit(symbols: impl IntoIterator<Item = char>) -> Self {
        AlphabetPolicy {
            mode: AlphabetMode::ExplicitList(symbols.into_iter().collect()),
            mandatory: default_mandatory(),
        }
    }
}

pub fn build_alphabet<S: AsRef<str>>(corpus: &[S], policy: &AlphabetPolicy) -> Result<Alphabet> {
    let mut symbols: BTreeSet<char> = policy.mandatory.clone();
    match &policy.mode {
        AlphabetMode::ExplicitList(list) => symbols.extend(list.iter().copied()),
        AlphabetMode::CorpusDerived { min_frequency } => {
            if corpus.is_empty() {
                return Err(Error::Config(
                    "corpus-derived alphabet needs at least one text".into(),
                ));
            }
            if *min_frequency == 0 {
                return Err(Error::Config("min_frequency must be at least 1".into()));
            }
            let mut counts: BTreeMap<char, usize> = BTreeMap::new();
            for text in corpus {
                for c in collapse_line_endings(text.as_ref()).chars() {
                    *counts.entry(c).or_default() += 1;
                }
            }
            symbols.extend(
                counts
                    .into_iter()
                    .filter(|&(_, n)| n >= *min_frequency)
                    .map(|(c, _)| c),
            );
        }
    }
    Ok(Alphabet::new(symbols))
}

/// CRLF and lone CR become LF.
pub fn collapse_line_endings(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\r' {
            if chars.peek() == Some(&'\n') {
                chars.next();
            }
            out.push('\n');
        } else {
            out.push(c);
        }
    }
    out
}

/// A transcription mapped onto alphabet ordinals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharSequence {
    pub items: Vec<u32>,
    pub source_id: String,
    /// Code points in the raw input, before line-ending collapse.
    pub original_length: usize,
    pub alphabet_id: u64,
}

impl CharSequence {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }
}

pub fn normalize_text(raw: &str, alphabet: &Alphabet) -> CharSequence {
    let collapsed = collapse_line_endings(raw);
    let items = collapsed
        .chars()
        .map(|c| alphabet.ordinal(c).unwrap_or(alphabet.replacement))
        .collect();
    CharSequence {
        items,
        source_id: String::new(),
        original_length: raw.chars().count(),
        alphabet_id: alphabet.fingerprint,
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        offset: e.utf8_error().valid_up_to(),
    })
}

pub fn load_corpus<P: AsRef<Path> + Sync>(paths: &[P], alphabet: &Alphabet) -> Result<Vec<CharSequence>> {
    paths
        .par_iter()
        .map(|p| {
            let path = p.as_ref();
            let text = read_text(path)?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(normalize_text(&text, alphabet).with_id(stem))
        })
        .collect()
}
