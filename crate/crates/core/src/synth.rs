//! Synthetic print editions of a ground-truth text.
//!
//! Each edition re-flows the text to its own line width, breaks pages with a
//! form feed, adds a running header and page numbers, hyphenates words at
//! line ends and sprinkles character noise. Generation is seeded; nothing
//! else in the crate uses randomness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NOISE_SYMBOLS: &[char] = &[
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'l', 'm', 'n', 'o', 'r', 's', 't', 'u', ',', '.', 'I', '1',
];

pub const DEFAULT_HEADERS: [&str; 7] = [
    "THE KEEPER OF GULL ROCK.",
    "GULL ROCK LIGHT",
    "A TALE OF THE NORTHERN COAST",
    "Chapter the First",
    "THE LIGHTHOUSE KEEPER",
    "Tales for the Fireside",
    "GULL ROCK AND OTHER STORIES",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditionLayout {
    pub line_width: usize,
    /// Body lines per page.
    pub page_height: usize,
    pub running_header: Option<String>,
    pub page_numbers: bool,
    pub hyphenate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub editions: usize,
    pub base_line_width: usize,
    /// Added to the line width for each successive edition.
    pub line_width_step: usize,
    pub base_page_height: usize,
    pub headers: Vec<String>,
    pub page_numbers: bool,
    pub hyphenate: bool,
    /// Per-character probability of a substitution, deletion or insertion.
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            editions: 7,
            base_line_width: 52,
            line_width_step: 5,
            base_page_height: 24,
            headers: DEFAULT_HEADERS.iter().map(|s| s.to_string()).collect(),
            page_numbers: true,
            hyphenate: true,
            noise_rate: 0.005,
            seed: 1,
        }
    }
}

impl SynthOptions {
    pub fn validate(&self) -> Result<()> {
        if self.editions == 0 {
            return Err(Error::Config("editions must be at least 1".into()));
        }
        if self.base_line_width < 8 {
            return Err(Error::Config("line width must be at least 8".into()));
        }
        if self.base_page_height == 0 {
            return Err(Error::Config("page height must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return Err(Error::Config(format!("noise rate {} outside [0, 1]", self.noise_rate)));
        }
        Ok(())
    }

    pub fn layout(&self, edition: usize) -> EditionLayout {
        EditionLayout {
            line_width: self.base_line_width + edition * self.line_width_step,
            page_height: self.base_page_height + 3 * edition,
            running_header: if self.headers.is_empty() {
                None
            } else if edition < self.headers.len() {
                Some(self.headers[edition].clone())
            } else {
                Some(format!("{} ({})", self.headers[edition % self.headers.len()], edition + 1))
            },
            page_numbers: self.page_numbers,
            hyphenate: self.hyphenate,
        }
    }
}

fn break_word(word: &[char], room: usize) -> Option<usize> {
    // Leave at least three letters on each side and room for the hyphen.
    if word.len() < 6 || room < 4 || !word.iter().all(|c| c.is_alphabetic()) {
        return None;
    }
    let head = (room - 1).min(word.len() - 3);
    (head >= 3).then_some(head)
}

/// Wraps each paragraph (one per input line) to the layout's width.
fn wrap_lines(text: &str, layout: &EditionLayout) -> Vec<String> {
    let width = layout.line_width;
    let mut lines = Vec::new();
    for paragraph in text.split('\n') {
        let mut line: Vec<char> = Vec::new();
        for word in paragraph.split(' ').filter(|w| !w.is_empty()) {
            let mut word: Vec<char> = word.chars().collect();
            loop {
                let needed = if line.is_empty() { word.len() } else { line.len() + 1 + word.len() };
                if needed <= width {
                    if !line.is_empty() {
                        line.push(' ');
                    }
                    line.extend(&word);
                    break;
                }
                let room = if line.is_empty() { width } else { width.saturating_sub(line.len() + 1) };
                if let Some(head) = break_word(&word, room).filter(|_| layout.hyphenate) {
                    if !line.is_empty() {
                        line.push(' ');
                    }
                    line.extend(&word[..head]);
                    line.push('-');
                    word.drain(..head);
                } else if line.is_empty() {
                    // Overlong word on its own line.
                    line.extend(&word);
                    break;
                }
                lines.push(line.drain(..).collect());
            }
        }
        lines.push(line.into_iter().collect());
    }
    // A trailing newline in the source yields an empty last paragraph.
    if text.ends_with('\n') {
        lines.pop();
    }
    lines
}

/// Lays out `text` as a print edition without noise.
pub fn paginate(text: &str, layout: &EditionLayout) -> String {
    let lines = wrap_lines(text, layout);
    let mut out = String::new();
    for (page, body) in lines.chunks(layout.page_height.max(1)).enumerate() {
        let number = page + 1;
        if page > 0 {
            out.push('\u{c}');
        }
        // The opening page has no running head; its folio sits at the foot.
        let header = layout.running_header.as_ref().filter(|_| page > 0);
        match (header, layout.page_numbers) {
            (Some(h), true) if number % 2 == 0 => out.push_str(&format!("{number} {h}\n\n")),
            (Some(h), true) => out.push_str(&format!("{h} {number}\n\n")),
            (Some(h), false) => out.push_str(&format!("{h}\n\n")),
            (None, _) => {}
        }
        for line in body {
            out.push_str(line);
            out.push('\n');
        }
        if header.is_none() && layout.page_numbers {
            out.push_str(&format!("\n{number}\n"));
        }
    }
    out
}

/// Applies substitutions, deletions and insertions to non-whitespace
/// characters at the given per-character rate.
pub fn add_noise(text: &str, rate: f64, rng: &mut impl Rng) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_whitespace() || rate == 0.0 || !rng.gen_bool(rate) {
            out.push(c);
            continue;
        }
        let noise = NOISE_SYMBOLS[rng.gen_range(0..NOISE_SYMBOLS.len())];
        match rng.gen_range(0..3) {
            0 => out.push(if noise == c { '~' } else { noise }),
            1 => {}
            _ => {
                out.push(c);
                out.push(noise);
            }
        }
    }
    out
}

/// Generates `options.editions` noisy editions of `ground_truth`.
pub fn synth_editions(ground_truth: &str, options: &SynthOptions) -> Result<Vec<String>> {
    options.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    Ok((0..options.editions)
        .map(|e| add_noise(&paginate(ground_truth, &options.layout(e)), options.noise_rate, &mut rng))
        .collect())
}
