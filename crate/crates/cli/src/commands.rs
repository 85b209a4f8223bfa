use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use ebookhmm::align::identity_matrix;
use ebookhmm::alphabet::{default_mandatory, read_text};
use ebookhmm::infer::{consensus_path, with_band_retry, BAND_RETRIES};
use ebookhmm::pipeline::train_from_alignment;
use ebookhmm::synth::{paginate, synth_editions, SynthOptions, DEFAULT_HEADERS};
use ebookhmm::{
    barton_sternberg, baum_welch, build_alphabet, build_model, consensus, identity_report, mark_match_columns,
    needleman_wunsch, normalize_text, render_alignment, sequence_identity, Alphabet, AlphabetPolicy, Band,
    CharSequence, Error, MarkedAlignment, ProfileHmm, Result, TrainingOptions,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{AlphabetConfig, AlphabetLayer, ConfigLayer, PipelineConfig, PseudocountLayer, ScoringLayer,
    TrainingLayer};
use crate::{AlphabetArgs, PseudocountArgs, ScoringArgs};

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Usage(_) => 2,
        Error::Io { .. } | Error::Decode { .. } | Error::Parse { .. } | Error::Version { .. } | Error::Consistency(_) => 3,
        Error::Construction(_) | Error::Banding { .. } => 4,
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

impl ScoringArgs {
    fn layer(&self) -> ScoringLayer {
        ScoringLayer {
            match_score: self.match_score,
            mismatch_score: self.mismatch_score,
            gap_score: self.gap_score,
        }
    }
}

impl AlphabetArgs {
    fn layer(&self) -> AlphabetLayer {
        AlphabetLayer {
            mode: self.alphabet_mode,
            min_frequency: self.min_frequency,
            file: self.alphabet_file.clone(),
        }
    }
}

impl PseudocountArgs {
    fn layer(&self) -> PseudocountLayer {
        PseudocountLayer { emission: self.emission_pseudocount, transition: self.transition_pseudocount }
    }
}

/// Resolves settings for the single-step commands, which take no config
/// file.
fn flags_only(layer: ConfigLayer) -> Result<PipelineConfig> {
    PipelineConfig::resolve(&[&layer])
}

struct Corpus {
    alphabet: Alphabet,
    texts: Vec<String>,
    seqs: Vec<CharSequence>,
}

fn load_inputs(paths: &[PathBuf], alphabet: &AlphabetConfig) -> Result<Corpus> {
    let texts = paths.iter().map(|p| read_text(p)).collect::<Result<Vec<_>>>()?;
    let alphabet = match alphabet.mode {
        crate::config::AlphabetMode::Default => Alphabet::default_text(),
        crate::config::AlphabetMode::Corpus => build_alphabet(&texts, &AlphabetPolicy::corpus(alphabet.min_frequency))?,
        crate::config::AlphabetMode::File => Alphabet::load(alphabet.file.as_deref().expect("validated"))?,
    };
    let seqs = texts
        .iter()
        .zip(paths)
        .map(|(t, p)| normalize_text(t, &alphabet).with_id(stem(p)))
        .collect();
    Ok(Corpus { alphabet, texts, seqs })
}

fn require_two(paths: &[PathBuf]) -> Result<()> {
    if paths.len() < 2 {
        return Err(Error::Usage(format!(
            "got {} input file(s); the method requires at least two print editions with distinct pagination",
            paths.len()
        )));
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct AlphabetCmd {
    /// Corpus files
    #[arg(required_unless_present = "builtin")]
    inputs: Vec<PathBuf>,
    /// Write the built-in 107-symbol alphabet instead of scanning a corpus
    #[arg(long, conflicts_with = "inputs")]
    builtin: bool,
    /// Minimum number of occurrences for a symbol to be kept
    #[arg(long, default_value_t = 1)]
    min_frequency: usize,
    /// Symbols always included [default: space, line feed, form feed]
    #[arg(long)]
    mandatory: Option<String>,
    /// Output alphabet JSON
    #[arg(short, long)]
    output: PathBuf,
}

impl AlphabetCmd {
    pub fn run(self) -> Result<()> {
        let alphabet = if self.builtin {
            Alphabet::default_text()
        } else {
            if self.min_frequency == 0 {
                return Err(Error::Config("min_frequency must be at least 1".into()));
            }
            let texts = self.inputs.iter().map(|p| read_text(p)).collect::<Result<Vec<_>>>()?;
            let mut policy = AlphabetPolicy::corpus(self.min_frequency);
            if let Some(m) = &self.mandatory {
                policy.mandatory = default_mandatory().into_iter().chain(m.chars()).collect();
            }
            build_alphabet(&texts, &policy)?
        };
        write(&self.output, alphabet.to_json())?;
        println!("{}", alphabet.len());
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct AlignCmd {
    /// Top sequence
    top: PathBuf,
    /// Bottom sequence
    bottom: PathBuf,
    #[command(flatten)]
    alphabet: AlphabetArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    /// Write the identity JSON here instead of standard output
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write a two-line rendering of the alignment
    #[arg(long)]
    render: Option<PathBuf>,
    /// Columns per block of the rendering
    #[arg(long, default_value_t = 80)]
    width: usize,
}

#[derive(Serialize)]
struct AlignSummary {
    top: String,
    bottom: String,
    score: i64,
    matches: usize,
    alignment_length: usize,
    identity: f64,
}

impl AlignCmd {
    pub fn run(self) -> Result<()> {
        let config = flags_only(ConfigLayer {
            alphabet: self.alphabet.layer(),
            scoring: self.scoring.layer(),
            ..ConfigLayer::default()
        })?;
        let corpus = load_inputs(&[self.top.clone(), self.bottom.clone()], &config.alphabet)?;
        let aln = needleman_wunsch(&corpus.seqs[0], &corpus.seqs[1], &config.scoring)?;
        let stats = sequence_identity(&aln);
        let summary = AlignSummary {
            top: aln.top_id.clone(),
            bottom: aln.bottom_id.clone(),
            score: aln.score,
            matches: stats.matches,
            alignment_length: stats.alignment_length,
            identity: stats.identity,
        };
        if let Some(path) = &self.render {
            write(path, render_alignment(&aln, &corpus.alphabet, self.width.max(1)))?;
        }
        match &self.output {
            Some(path) => write(path, json(&summary)),
            None => {
                print!("{}", json(&summary));
                Ok(())
            }
        }
    }
}

#[derive(Args, Debug)]
pub struct MsaCmd {
    /// Two or more texts
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[command(flatten)]
    alphabet: AlphabetArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    /// Leave-one-out refinement rounds [default: 2]
    #[arg(long)]
    refinement_rounds: Option<usize>,
    /// A column is a match column when its gap fraction is below this [default: 0.5]
    #[arg(long)]
    gap_threshold: Option<f64>,
    /// Output alignment text, one row per line
    #[arg(short, long)]
    output: PathBuf,
    /// Sidecar JSON [default: output with a .json extension]
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Also write the pairwise identity matrix as JSON
    #[arg(long)]
    identity_matrix: Option<PathBuf>,
}

fn write_msa(marked: &MarkedAlignment, alphabet: &Alphabet, text: &Path, sidecar: &Path) -> Result<()> {
    write(text, marked.alignment.to_text(alphabet)?)?;
    write(sidecar, json(&marked.sidecar(alphabet)))
}

impl MsaCmd {
    pub fn run(self) -> Result<()> {
        require_two(&self.inputs)?;
        let config = flags_only(ConfigLayer {
            alphabet: self.alphabet.layer(),
            scoring: self.scoring.layer(),
            refinement_rounds: self.refinement_rounds,
            gap_threshold: self.gap_threshold,
            ..ConfigLayer::default()
        })?;
        let corpus = load_inputs(&self.inputs, &config.alphabet)?;
        if let Some(path) = &self.identity_matrix {
            write(path, json(&identity_matrix(&corpus.seqs, &config.scoring)?))?;
        }
        let msa = barton_sternberg(&corpus.seqs, &config.scoring, config.refinement_rounds)?;
        let marked = mark_match_columns(&msa, config.gap_threshold)?;
        let sidecar = self.sidecar.clone().unwrap_or_else(|| self.output.with_extension("json"));
        write_msa(&marked, &corpus.alphabet, &self.output, &sidecar)?;
        println!(
            "{} rows, {} columns, {} match columns",
            msa.num_rows(),
            msa.num_columns(),
            marked.model_length()
        );
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct BuildCmd {
    /// Alignment text written by `msa`
    #[arg(long)]
    msa: PathBuf,
    /// Sidecar JSON [default: alignment path with a .json extension]
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[command(flatten)]
    pseudocounts: PseudocountArgs,
    /// Output model file
    #[arg(short, long)]
    output: PathBuf,
}

fn load_msa(text: &Path, sidecar: &Path) -> Result<(MarkedAlignment, Alphabet)> {
    let t = read_text(text)?;
    let s = read_text(sidecar)?;
    MarkedAlignment::from_parts(&t, &s)
}

impl BuildCmd {
    pub fn run(self) -> Result<()> {
        let config = flags_only(ConfigLayer { pseudocounts: self.pseudocounts.layer(), ..ConfigLayer::default() })?;
        let sidecar = self.sidecar.clone().unwrap_or_else(|| self.msa.with_extension("json"));
        let (marked, alphabet) = load_msa(&self.msa, &sidecar)?;
        let model = build_model(&marked, &alphabet, &config.pseudocounts)?;
        model.save(&self.output)?;
        println!("model length {}", model.length());
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct TrainCmd {
    /// Training texts
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Model to refine
    #[arg(long)]
    model: PathBuf,
    /// Alignment of the same texts, used to center the bands
    #[arg(long)]
    msa: Option<PathBuf>,
    /// Maximum number of epochs; 0 copies the model unchanged [default: 10]
    #[arg(long)]
    epochs: Option<usize>,
    /// Stop when the relative log-likelihood improvement falls below this [default: 1e-6]
    #[arg(long)]
    tol: Option<f64>,
    /// Band half width, doubled on failure up to three times [default: 64]
    #[arg(long)]
    half_width: Option<usize>,
    #[command(flatten)]
    pseudocounts: PseudocountArgs,
    /// Output model file
    #[arg(short, long)]
    output: PathBuf,
    /// Write the per-epoch likelihood trace as JSON
    #[arg(long)]
    trace: Option<PathBuf>,
}

impl TrainCmd {
    pub fn run(self) -> Result<()> {
        let config = flags_only(ConfigLayer {
            band_half_width: self.half_width,
            pseudocounts: self.pseudocounts.layer(),
            training: TrainingLayer { enabled: Some(true), epochs: self.epochs.map(|e| e.max(1)), tol: self.tol },
            ..ConfigLayer::default()
        })?;
        let bytes = read(&self.model)?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|e| Error::Decode { path: self.model.clone(), offset: e.utf8_error().valid_up_to() })?;
        let model = ProfileHmm::from_json(&text)?;
        if self.epochs == Some(0) {
            return write(&self.output, bytes);
        }
        let texts = self.inputs.iter().map(|p| read_text(p)).collect::<Result<Vec<_>>>()?;
        let seqs: Vec<CharSequence> = texts
            .iter()
            .zip(&self.inputs)
            .map(|(t, p)| normalize_text(t, model.alphabet()).with_id(stem(p)))
            .collect();
        let opts = TrainingOptions {
            max_epochs: config.training.epochs,
            tol: config.training.tol,
            pseudocounts: config.pseudocounts,
        };
        let (trained, trace) = match &self.msa {
            Some(path) => {
                let (marked, _) = load_msa(path, &path.with_extension("json"))?;
                if marked.alignment.num_rows() != seqs.len() || marked.model_length() != model.length() {
                    return Err(Error::Usage("alignment does not match the model and training texts".into()));
                }
                train_from_alignment(&model, &seqs, &marked, config.band_half_width, &opts)?
            }
            None => with_band_retry(config.band_half_width, BAND_RETRIES, |hw| {
                let bands: Vec<Band> = seqs.iter().map(|s| Band::diagonal(s.len(), model.length(), hw)).collect();
                baum_welch(&model, &seqs, Some(&bands), &opts)
            })?,
        };
        trained.save(&self.output)?;
        if let Some(path) = &self.trace {
            write(path, json(&trace))?;
        }
        println!(
            "{} epochs, log likelihood {:.6} -> {:.6}",
            trace.epochs,
            trace.log_likelihoods[0],
            trace.log_likelihoods.last().expect("initial value")
        );
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct ConsensusCmd {
    /// Model file
    #[arg(long)]
    model: PathBuf,
    /// Output text [default: standard output]
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write the consensus state path as JSON lines
    #[arg(long)]
    path: Option<PathBuf>,
}

impl ConsensusCmd {
    pub fn run(self) -> Result<()> {
        let model = ProfileHmm::load(&self.model)?;
        let text = model.alphabet().decode(&consensus(&model).items);
        if let Some(p) = &self.path {
            write(p, consensus_path(&model).to_json_lines(model.alphabet()))?;
        }
        match &self.output {
            Some(p) => write(p, text),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

#[derive(Args, Debug)]
pub struct EvalCmd {
    /// Estimated text
    #[arg(long)]
    candidate: PathBuf,
    /// Reference ebook text
    #[arg(long)]
    reference: PathBuf,
    #[command(flatten)]
    scoring: ScoringArgs,
    /// Write the full report as JSON
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Row label in the summary table [default: candidate file stem]
    #[arg(long)]
    name: Option<String>,
}

impl EvalCmd {
    pub fn run(self) -> Result<()> {
        let config = flags_only(ConfigLayer { scoring: self.scoring.layer(), ..ConfigLayer::default() })?;
        let candidate = read_text(&self.candidate)?;
        let reference = read_text(&self.reference)?;
        let report = identity_report(&candidate, &reference, &config.scoring);
        if let Some(p) = &self.output {
            write(p, report.to_json())?;
        }
        print!("{}", report.summary(&self.name.clone().unwrap_or_else(|| stem(&self.candidate))));
        Ok(())
    }
}

#[derive(Args, Debug)]
pub struct PipelineCmd {
    /// Two or more transcriptions (may instead come from the config file)
    inputs: Vec<PathBuf>,
    /// TOML config file; command-line flags take precedence over it
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Output directory [default: ebookhmm-out]
    #[arg(short, long)]
    output_dir: Option<PathBuf>,
    /// Reference text; when given, a mismatch report is written
    #[arg(long)]
    reference: Option<PathBuf>,
    #[command(flatten)]
    alphabet: AlphabetArgs,
    #[command(flatten)]
    scoring: ScoringArgs,
    /// Match column gap threshold [default: 0.5]
    #[arg(long)]
    gap_threshold: Option<f64>,
    /// Leave-one-out refinement rounds [default: 2]
    #[arg(long)]
    refinement_rounds: Option<usize>,
    /// Band half width for training [default: 64]
    #[arg(long)]
    half_width: Option<usize>,
    #[command(flatten)]
    pseudocounts: PseudocountArgs,
    /// Refine the model with Baum-Welch before taking the consensus
    #[arg(long, overrides_with = "no_train")]
    train: bool,
    /// Do not refine the model (overrides the config file)
    #[arg(long, overrides_with = "train")]
    no_train: bool,
    /// Maximum training epochs [default: 10]
    #[arg(long)]
    epochs: Option<usize>,
    /// Relative log-likelihood improvement that ends training [default: 1e-6]
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Serialize)]
struct FileEntry {
    path: PathBuf,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    format: &'static str,
    version: &'static str,
    config: &'a PipelineConfig,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
    model_length: usize,
    alignment_columns: usize,
    /// Wall-clock milliseconds per stage; the only nondeterministic field.
    timings_ms: BTreeMap<&'static str, f64>,
}

impl PipelineCmd {
    fn flag_layer(&self) -> ConfigLayer {
        ConfigLayer {
            inputs: (!self.inputs.is_empty()).then(|| self.inputs.clone()),
            output_dir: self.output_dir.clone(),
            reference: self.reference.clone(),
            alphabet: self.alphabet.layer(),
            scoring: self.scoring.layer(),
            gap_threshold: self.gap_threshold,
            refinement_rounds: self.refinement_rounds,
            band_half_width: self.half_width,
            pseudocounts: self.pseudocounts.layer(),
            training: TrainingLayer {
                enabled: if self.train {
                    Some(true)
                } else if self.no_train {
                    Some(false)
                } else {
                    None
                },
                epochs: self.epochs,
                tol: self.tol,
            },
        }
    }

    pub fn run(self) -> Result<()> {
        let flags = self.flag_layer();
        let file = match &self.config {
            Some(p) => ConfigLayer::load(p)?,
            None => ConfigLayer::default(),
        };
        let config = PipelineConfig::resolve(&[&flags, &file])?;
        run_pipeline(&config)
    }
}

fn run_pipeline(config: &PipelineConfig) -> Result<()> {
    require_two(&config.inputs)?;
    let mut timings = BTreeMap::new();
    let mut clock = Instant::now();
    let mut lap = |name: &'static str, timings: &mut BTreeMap<&'static str, f64>| {
        timings.insert(name, clock.elapsed().as_secs_f64() * 1e3);
        clock = Instant::now();
    };

    let corpus = load_inputs(&config.inputs, &config.alphabet)?;
    let inputs = config
        .inputs
        .iter()
        .zip(&corpus.texts)
        .map(|(p, t)| FileEntry { path: p.clone(), sha256: sha256(t.as_bytes()) })
        .collect();
    lap("load", &mut timings);

    let settings = config.estimation();
    let msa = barton_sternberg(&corpus.seqs, &settings.scoring, settings.refinement_rounds)?;
    lap("msa", &mut timings);
    let marked = mark_match_columns(&msa, settings.gap_threshold)?;
    let initial = build_model(&marked, &corpus.alphabet, &settings.pseudocounts)?;
    lap("build", &mut timings);
    let (model, trace) = if settings.train {
        let (m, t) = train_from_alignment(&initial, &corpus.seqs, &marked, settings.half_width, &settings.training)?;
        (m, Some(t))
    } else {
        (initial, None)
    };
    lap("train", &mut timings);
    let text = corpus.alphabet.decode(&consensus(&model).items);
    lap("consensus", &mut timings);

    let dir = &config.output_dir;
    let mut outputs: Vec<(&str, String)> = vec![
        ("alphabet.json", corpus.alphabet.to_json()),
        ("msa.txt", marked.alignment.to_text(&corpus.alphabet)?),
        ("msa.json", json(&marked.sidecar(&corpus.alphabet))),
        ("model.json", model.to_json()),
        ("consensus.txt", text.clone()),
    ];
    if let Some(t) = &trace {
        outputs.push(("training.json", json(t)));
    }
    if let Some(reference) = &config.reference {
        let reference = read_text(reference)?;
        let report = identity_report(&text, &reference, &settings.scoring);
        outputs.push(("report.json", report.to_json()));
        outputs.push(("report.txt", report.summary("consensus")));
        lap("eval", &mut timings);
    }
    let mut entries = Vec::new();
    for (name, contents) in &outputs {
        write(&dir.join(name), contents)?;
        entries.push(FileEntry { path: PathBuf::from(name), sha256: sha256(contents.as_bytes()) });
    }
    let manifest = Manifest {
        format: "ebookhmm-manifest/1",
        version: env!("CARGO_PKG_VERSION"),
        config,
        inputs,
        outputs: entries,
        model_length: model.length(),
        alignment_columns: marked.alignment.num_columns(),
        timings_ms: timings,
    };
    write(&dir.join("manifest.json"), json(&manifest))?;
    println!("{} editions, model length {}, consensus {} characters", corpus.seqs.len(), model.length(),
        text.chars().count());
    Ok(())
}

#[derive(Args, Debug)]
pub struct SynthCmd {
    /// Ground-truth text, one paragraph per line
    #[arg(long)]
    truth: PathBuf,
    /// Directory for edition-NN.txt files
    #[arg(short, long)]
    output_dir: PathBuf,
    #[arg(long, default_value_t = 7)]
    editions: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Per-character noise probability
    #[arg(long, default_value_t = 0.005)]
    noise_rate: f64,
    /// Line width of the first edition
    #[arg(long, default_value_t = 52)]
    line_width: usize,
    /// Line width increase per edition
    #[arg(long, default_value_t = 5)]
    line_width_step: usize,
    /// Body lines per page of the first edition
    #[arg(long, default_value_t = 24)]
    page_height: usize,
    /// Running header, one per edition (repeatable) [default: built-in list]
    #[arg(long = "header")]
    headers: Vec<String>,
    /// Omit running headers
    #[arg(long, conflicts_with = "headers")]
    no_headers: bool,
    #[arg(long)]
    no_page_numbers: bool,
    #[arg(long)]
    no_hyphenation: bool,
    /// Write the layouts without noise as well, as clean-NN.txt
    #[arg(long)]
    clean: bool,
}

impl SynthCmd {
    pub fn run(self) -> Result<()> {
        let truth = read_text(&self.truth)?;
        let headers = if self.no_headers {
            Vec::new()
        } else if self.headers.is_empty() {
            DEFAULT_HEADERS.iter().map(|s| s.to_string()).collect()
        } else {
            self.headers.clone()
        };
        let options = SynthOptions {
            editions: self.editions,
            base_line_width: self.line_width,
            line_width_step: self.line_width_step,
            base_page_height: self.page_height,
            headers,
            page_numbers: !self.no_page_numbers,
            hyphenate: !self.no_hyphenation,
            noise_rate: self.noise_rate,
            seed: self.seed,
        };
        let editions = synth_editions(&truth, &options)?;
        for (i, e) in editions.iter().enumerate() {
            write(&self.output_dir.join(format!("edition-{:02}.txt", i + 1)), e)?;
            if self.clean {
                write(&self.output_dir.join(format!("clean-{:02}.txt", i + 1)), paginate(&truth, &options.layout(i)))?;
            }
        }
        let layouts: Vec<_> = (0..options.editions).map(|i| options.layout(i)).collect();
        write(&self.output_dir.join("layouts.json"), json(&layouts))?;
        Ok(())
    }
}
