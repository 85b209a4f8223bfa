//! Python bindings: alphabets, alignment, profile HMMs, consensus
//! estimation and evaluation.

use std::path::PathBuf;

use ebookhmm::infer::{self, StateKind};
use ebookhmm::pipeline::{estimate_consensus as estimate, EstimationSettings};
use ebookhmm::synth::{synth_editions as synth, SynthOptions};
use ebookhmm::{
    build_alphabet, identity_report as report, needleman_wunsch, normalize_text, sequence_identity, Alphabet,
    AlphabetPolicy, Error, ProfileHmm, PseudocountConfig, ScoringScheme, TrainingOptions,
};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Decode { .. } => PyOSError::new_err(e.to_string()),
        Error::Banding { .. } | Error::Construction(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn scoring(match_score: i32, mismatch_score: i32, gap_score: i32) -> PyResult<ScoringScheme> {
    ScoringScheme::new(match_score, mismatch_score, gap_score).map_err(to_py)
}

/// Ordered emission alphabet.
#[pyclass(name = "Alphabet", frozen)]
pub struct PyAlphabet {
    inner: Alphabet,
}

#[pymethods]
impl PyAlphabet {
    /// The built-in 107-symbol text alphabet.
    #[staticmethod]
    fn default() -> Self {
        PyAlphabet { inner: Alphabet::default_text() }
    }

    /// Every symbol occurring at least `min_frequency` times, plus space,
    /// line feed and form feed.
    #[staticmethod]
    #[pyo3(signature = (texts, min_frequency = 1))]
    fn from_corpus(texts: Vec<String>, min_frequency: usize) -> PyResult<Self> {
        let inner = build_alphabet(&texts, &AlphabetPolicy::corpus(min_frequency)).map_err(to_py)?;
        Ok(PyAlphabet { inner })
    }

    #[staticmethod]
    fn from_symbols(symbols: &str) -> Self {
        PyAlphabet { inner: Alphabet::new(symbols.chars()) }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyAlphabet { inner: Alphabet::load(&path).map_err(to_py)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    #[getter]
    fn symbols(&self) -> Vec<String> {
        self.inner.symbols().iter().map(|c| c.to_string()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Alphabet({} symbols)", self.inner.len())
    }
}

fn alphabet_or_default(alphabet: Option<&PyAlphabet>) -> Alphabet {
    alphabet.map_or_else(Alphabet::default_text, |a| a.inner.clone())
}

/// Alphabet ordinals of `text`; symbols outside the alphabet become spaces.
#[pyfunction]
#[pyo3(signature = (text, alphabet = None))]
fn normalize(text: &str, alphabet: Option<&PyAlphabet>) -> Vec<u32> {
    normalize_text(text, &alphabet_or_default(alphabet)).items
}

/// Global alignment of two texts. Returns a dict with the score, identity
/// statistics and both rows, gaps as None.
#[pyfunction]
#[pyo3(signature = (a, b, alphabet = None, match_score = 1, mismatch_score = -1, gap_score = -1))]
fn align<'py>(
    py: Python<'py>,
    a: &str,
    b: &str,
    alphabet: Option<&PyAlphabet>,
    match_score: i32,
    mismatch_score: i32,
    gap_score: i32,
) -> PyResult<Bound<'py, PyDict>> {
    let alphabet = alphabet_or_default(alphabet);
    let s = scoring(match_score, mismatch_score, gap_score)?;
    let aln = needleman_wunsch(&normalize_text(a, &alphabet), &normalize_text(b, &alphabet), &s).map_err(to_py)?;
    let stats = sequence_identity(&aln);
    let row = |pick: fn(&(Option<u32>, Option<u32>)) -> Option<u32>| {
        aln.columns.iter().map(|c| pick(c).map(|x| alphabet.symbol(x).to_string())).collect::<Vec<_>>()
    };
    let d = PyDict::new(py);
    d.set_item("score", aln.score)?;
    d.set_item("matches", stats.matches)?;
    d.set_item("alignment_length", stats.alignment_length)?;
    d.set_item("identity", stats.identity)?;
    d.set_item("top", row(|c| c.0))?;
    d.set_item("bottom", row(|c| c.1))?;
    Ok(d)
}

/// Fraction of alignment columns holding the same symbol in both texts.
#[pyfunction]
#[pyo3(signature = (a, b, alphabet = None, match_score = 1, mismatch_score = -1, gap_score = -1))]
fn identity(
    a: &str,
    b: &str,
    alphabet: Option<&PyAlphabet>,
    match_score: i32,
    mismatch_score: i32,
    gap_score: i32,
) -> PyResult<f64> {
    let alphabet = alphabet_or_default(alphabet);
    let s = scoring(match_score, mismatch_score, gap_score)?;
    let aln = needleman_wunsch(&normalize_text(a, &alphabet), &normalize_text(b, &alphabet), &s).map_err(to_py)?;
    Ok(sequence_identity(&aln).identity)
}

/// Plan-7 profile hidden Markov model.
#[pyclass(name = "ProfileHmm", frozen)]
pub struct PyProfileHmm {
    inner: ProfileHmm,
}

#[pymethods]
impl PyProfileHmm {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyProfileHmm { inner: ProfileHmm::load(&path).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyProfileHmm { inner: ProfileHmm::from_json(text).map_err(to_py)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    /// Number of match states.
    #[getter]
    fn length(&self) -> usize {
        self.inner.length()
    }

    #[getter]
    fn alphabet(&self) -> PyAlphabet {
        PyAlphabet { inner: self.inner.alphabet().clone() }
    }

    /// Natural-log probability of `text` summed over all state paths.
    fn forward(&self, py: Python<'_>, text: &str) -> PyResult<f64> {
        let seq = normalize_text(text, self.inner.alphabet());
        py.detach(|| infer::forward(&self.inner, &seq, None)).map_err(to_py)
    }

    /// Best state path as (log probability, [(state, position, char)]).
    fn viterbi(&self, py: Python<'_>, text: &str) -> PyResult<(f64, Vec<(String, usize, Option<String>)>)> {
        let seq = normalize_text(text, self.inner.alphabet());
        let path = py.detach(|| infer::viterbi(&self.inner, &seq, None)).map_err(to_py)?;
        let visits = path
            .visits
            .iter()
            .map(|v| {
                let state = match v.state {
                    StateKind::Begin => "begin",
                    StateKind::Match => "match",
                    StateKind::Insert => "insert",
                    StateKind::Delete => "delete",
                    StateKind::End => "end",
                };
                (state.to_string(), v.position, v.symbol.map(|x| self.inner.alphabet().symbol(x).to_string()))
            })
            .collect();
        Ok((path.log_probability, visits))
    }

    /// Text along the most probable match/delete path.
    fn consensus(&self) -> String {
        self.inner.alphabet().decode(&infer::consensus(&self.inner).items)
    }

    fn __repr__(&self) -> String {
        format!("ProfileHmm(length={}, alphabet={})", self.inner.length(), self.inner.alphabet_len())
    }
}

/// Aligns the editions, builds a profile HMM, optionally trains it, and
/// returns (consensus text, model).
#[pyfunction]
#[pyo3(signature = (texts, alphabet = None, gap_threshold = 0.5, refinement_rounds = 2, pseudocount = 1.0,
    train = false, epochs = 10, tol = 1e-6))]
#[allow(clippy::too_many_arguments)]
fn estimate_consensus(
    py: Python<'_>,
    texts: Vec<String>,
    alphabet: Option<&PyAlphabet>,
    gap_threshold: f64,
    refinement_rounds: usize,
    pseudocount: f64,
    train: bool,
    epochs: usize,
    tol: f64,
) -> PyResult<(String, PyProfileHmm)> {
    let alphabet = alphabet_or_default(alphabet);
    let pseudocounts = PseudocountConfig { emission_pseudocount: pseudocount, transition_pseudocount: pseudocount };
    let settings = EstimationSettings {
        gap_threshold,
        refinement_rounds,
        pseudocounts,
        train,
        training: TrainingOptions { max_epochs: epochs, tol, pseudocounts },
        ..EstimationSettings::default()
    };
    let seqs: Vec<_> = texts.iter().map(|t| normalize_text(t, &alphabet)).collect();
    let est = py.detach(|| estimate(&seqs, &alphabet, &settings)).map_err(to_py)?;
    Ok((est.consensus_text, PyProfileHmm { inner: est.model }))
}

/// Mismatch report of `candidate` against `reference` as a dict (the same
/// fields as the JSON report).
#[pyfunction]
#[pyo3(signature = (candidate, reference, match_score = 1, mismatch_score = -1, gap_score = -1))]
fn identity_report(
    py: Python<'_>,
    candidate: &str,
    reference: &str,
    match_score: i32,
    mismatch_score: i32,
    gap_score: i32,
) -> PyResult<Py<PyAny>> {
    let s = scoring(match_score, mismatch_score, gap_score)?;
    let json = py.detach(|| report(candidate, reference, &s).to_json());
    Ok(py.import("json")?.call_method1("loads", (json,))?.unbind())
}

/// Seeded synthetic print editions of a ground-truth text.
#[pyfunction]
#[pyo3(signature = (text, editions = 7, seed = 1, noise_rate = 0.005))]
fn synth_editions(text: &str, editions: usize, seed: u64, noise_rate: f64) -> PyResult<Vec<String>> {
    let options = SynthOptions { editions, seed, noise_rate, ..SynthOptions::default() };
    synth(text, &options).map_err(to_py)
}

#[pymodule]
#[pyo3(name = "ebookhmm")]
fn ebookhmm_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAlphabet>()?;
    m.add_class::<PyProfileHmm>()?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(align, m)?)?;
    m.add_function(wrap_pyfunction!(identity, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_consensus, m)?)?;
    m.add_function(wrap_pyfunction!(identity_report, m)?)?;
    m.add_function(wrap_pyfunction!(synth_editions, m)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use pyo3::types::PyModule;

    fn with_module(f: impl FnOnce(Python<'_>, &Bound<'_, PyModule>) -> PyResult<()>) {
        Python::attach(|py| {
            let m = PyModule::new(py, "ebookhmm")?;
            ebookhmm_module(&m)?;
            f(py, &m)
        })
        .unwrap();
    }

    #[test]
    fn consensus_through_python() {
        with_module(|_, m| {
            let texts = vec!["Rosa Dartle", "Rosa Dartle", "Eosa Dartle"];
            let (text, model): (String, Bound<'_, PyAny>) = m.getattr("estimate_consensus")?.call1((texts,))?.extract()?;
            assert_eq!(text, "Rosa Dartle");
            assert_eq!(model.getattr("length")?.extract::<usize>()?, 11);
            let logp: f64 = model.call_method1("forward", ("Rosa Dartle",))?.extract()?;
            assert!(logp < 0.0);
            Ok(())
        });
    }

    #[test]
    fn errors_map_to_python_exceptions() {
        with_module(|py, m| {
            let err = m.getattr("estimate_consensus")?.call1((vec!["one"],)).unwrap_err();
            assert!(err.is_instance_of::<PyValueError>(py));
            let err = m.getattr("ProfileHmm")?.call_method1("load", ("/nonexistent/model.json",)).unwrap_err();
            assert!(err.is_instance_of::<PyOSError>(py));
            Ok(())
        });
    }

    #[test]
    fn report_is_a_dict() {
        with_module(|_, m| {
            let r = m.getattr("identity_report")?.call1(("don't", "don\u{2019}t"))?;
            let counts = r.get_item("counts")?;
            assert_eq!(counts.get_item("near-miss-apostrophe")?.extract::<usize>()?, 1);
            Ok(())
        });
    }
}
