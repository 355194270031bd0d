//! Command-line front end: corpus generation, training, extraction,
//! evaluation, training-size sweeps and the annotation server.

pub mod server;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use docsynth::background::Catalog;
use docsynth::docgen::{generate_corpus, GenError, NoiseProfile, TemplateSpec};
use docsynth::extraction::{extract_document, ExtractOptions, DEFAULT_ENTROPY_THRESHOLD};
use docsynth::factstore::{read_fact_file, DatatypeDetector, DocumentFacts, FactError};
use docsynth::harness::{evaluate, sweep, Corpus, HarnessError, SweepConfig};
use docsynth::synthesis::{SynthConfig, DEFAULT_DEPTH};
use docsynth::training::{
    annotate, read_annotations, train_ns, train_os, Annotator, ScriptedAnnotator, TemplateModel, TerminalAnnotator,
    TrainConfig, TrainError, TrainMode,
};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}
data_errors!(GenError, FactError, TrainError, HarnessError);

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "docsynth", version, about = "Synthesize extraction programs for template documents")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with ground truth
    GenCorpus(GenArgs),
    /// Train a template model from one annotated document
    Train(TrainArgs),
    /// Run a model on fact files
    Extract(ExtractArgs),
    /// Score a model on a corpus with ground truth
    Evaluate(EvalArgs),
    /// Metrics against training-set size
    Sweep(SweepArgs),
    /// Serve the HTTP API for the annotator UI
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Built-in template id or path to a template JSON file
    #[arg(long)]
    pub template: String,
    #[arg(long, default_value_t = 30)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Box jitter in pixels
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
    /// Probability of dropping a boilerplate token
    #[arg(long, default_value_t = 0.0)]
    pub drop: f64,
    /// Probability of swapping a keyword for a synonym
    #[arg(long, default_value_t = 0.0)]
    pub variant: f64,
    /// Probability of shifting a line
    #[arg(long, default_value_t = 0.0)]
    pub shift: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Os,
    Ns,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AnnotatorArg {
    /// Prompt on stdin
    Terminal,
    /// Answer from the corpus ground truth
    Truth,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus directory with fact files
    #[arg(long)]
    pub corpus: PathBuf,
    /// Training document id; defaults to the first document
    #[arg(long)]
    pub doc: Option<String>,
    /// Annotation file; defaults to the corpus ground truth
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Os)]
    pub mode: ModeArg,
    /// Transition depth bound
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    pub depth: usize,
    /// Seed for the noisy clone
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pool size for N-shot training: the documents after the training document
    #[arg(long, default_value_t = 4)]
    pub pool: usize,
    /// Who answers N-shot annotation requests
    #[arg(long, value_enum, default_value_t = AnnotatorArg::Terminal)]
    pub annotator: AnnotatorArg,
    /// Template id recorded in the model
    #[arg(long, default_value = "template")]
    pub template: String,
    /// Model output directory
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Fact files to extract from
    #[arg(required = true)]
    pub docs: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ENTROPY_THRESHOLD)]
    pub entropy_threshold: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Corpus directory with fact files and truth.json
    #[arg(long)]
    pub corpus: PathBuf,
    /// Number of test documents; defaults to every document not used in training
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_ENTROPY_THRESHOLD)]
    pub entropy_threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// File name stem of the report files
    #[arg(long, default_value = "eval")]
    pub stem: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value = "template")]
    pub template: String,
    /// Largest training-set size
    #[arg(long, default_value_t = 5)]
    pub max_n: usize,
    /// Leading documents that training sets are drawn from
    #[arg(long, default_value_t = 5)]
    pub pool: usize,
    /// Test documents following the pool
    #[arg(long, default_value_t = 20)]
    pub test: usize,
    #[arg(long, value_delimiter = ',', default_value = "raw,os,ns")]
    pub modes: Vec<SweepMode>,
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    pub depth: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "sweep")]
    pub stem: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepMode {
    Raw,
    Os,
    Ns,
}

impl From<SweepMode> for TrainMode {
    fn from(m: SweepMode) -> Self {
        match m {
            SweepMode::Raw => TrainMode::Raw,
            SweepMode::Os => TrainMode::Os,
            SweepMode::Ns => TrainMode::Ns,
        }
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Corpus directory served to the UI
    #[arg(long)]
    pub corpus: PathBuf,
    /// Serve an existing model instead of starting a training session
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Training document of the session; defaults to the first document
    #[arg(long)]
    pub doc: Option<String>,
    /// Pool size of the N-shot session
    #[arg(long, default_value_t = 4)]
    pub pool: usize,
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    pub depth: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "template")]
    pub template: String,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}

pub fn train_config(depth: usize, seed: u64) -> TrainConfig {
    TrainConfig { synth: SynthConfig { depth, ..SynthConfig::default() }, seed }
}

/// A built-in template id or a template file.
pub fn load_template(s: &str) -> Result<TemplateSpec, CliError> {
    match TemplateSpec::builtin(s) {
        Some(t) => Ok(t),
        None if Path::new(s).exists() => Ok(TemplateSpec::load(Path::new(s))?),
        None => Err(CliError::Usage(format!(
            "unknown template {s:?}; built-in: {}",
            TemplateSpec::builtin_ids().join(", ")
        ))),
    }
}

/// Position of the training document and its annotations.
pub fn training_doc(
    corpus: &Corpus,
    doc: Option<&str>,
    annotations: Option<&Path>,
) -> Result<(usize, Vec<docsynth::factstore::Annotation>), CliError> {
    if corpus.docs.is_empty() {
        return Err(CliError::Data("corpus has no documents".into()));
    }
    let i = match doc {
        None => 0,
        Some(id) => corpus
            .docs
            .iter()
            .position(|d| d.doc_id() == id)
            .ok_or_else(|| CliError::Data(format!("no document {id:?} in the corpus")))?,
    };
    let d = &corpus.docs[i];
    let anns = match annotations {
        Some(p) => annotate(d, &read_annotations(p)?)?,
        None => corpus.annotations(d.doc_id()),
    };
    if anns.is_empty() {
        return Err(CliError::Data(format!("no annotations for {}", d.doc_id())));
    }
    Ok((i, anns))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let detector = DatatypeDetector::default();
    let catalog = Catalog::builtin();
    match cli.command {
        Command::GenCorpus(a) => {
            let spec = load_template(&a.template)?;
            let noise = NoiseProfile {
                box_jitter: a.jitter,
                token_drop_prob: a.drop,
                keyword_variant_prob: a.variant,
                line_shift_prob: a.shift,
            };
            std::fs::create_dir_all(&a.out).map_err(|e| io(&a.out, e))?;
            generate_corpus(&spec, a.count, a.seed, &noise, &a.out)?;
        }
        Command::Train(a) => {
            let corpus = Corpus::load(&a.corpus, &detector)?;
            let (i, anns) = training_doc(&corpus, a.doc.as_deref(), a.annotations.as_deref())?;
            let cfg = train_config(a.depth, a.seed);
            let d = &corpus.docs[i];
            let model = match a.mode {
                ModeArg::Os => train_os(&a.template, d, &anns, &catalog, &cfg)?,
                ModeArg::Ns => {
                    let pool: Vec<DocumentFacts> = corpus.docs.iter().skip(i + 1).take(a.pool).cloned().collect();
                    let mut annotator: Box<dyn Annotator> = match a.annotator {
                        AnnotatorArg::Terminal => {
                            Box::new(TerminalAnnotator::new(std::io::stdin().lock(), std::io::stderr()))
                        }
                        AnnotatorArg::Truth => Box::new(ScriptedAnnotator::new(
                            corpus.truth.iter().map(|t| (t.doc_id.clone(), t.entity.clone(), t.value.clone())),
                        )),
                    };
                    train_ns(&a.template, d, &anns, &pool, annotator.as_mut(), &catalog, &cfg)?
                }
            };
            model.save(&a.out)?;
        }
        Command::Extract(a) => {
            let model = TemplateModel::load(&a.model, &catalog)?;
            let opts = ExtractOptions { entropy_threshold: a.entropy_threshold, ..Default::default() };
            let mut out = Vec::new();
            for p in &a.docs {
                let d = read_fact_file(p, &detector)?;
                out.push(extract_document(&model, &catalog, &d, &opts));
            }
            let json = serde_json::to_string_pretty(&out).map_err(|e| CliError::Internal(e.to_string()))?;
            println!("{json}");
        }
        Command::Evaluate(a) => {
            let model = TemplateModel::load(&a.model, &catalog)?;
            let corpus = Corpus::load(&a.corpus, &detector)?;
            let mut test: Vec<DocumentFacts> =
                corpus.docs.into_iter().filter(|d| !model.meta.training_docs.iter().any(|t| t == d.doc_id())).collect();
            if let Some(n) = a.test {
                if n > test.len() {
                    return Err(CliError::Data(format!("{n} test documents requested, {} available", test.len())));
                }
                test.truncate(n);
            }
            let opts = ExtractOptions { entropy_threshold: a.entropy_threshold, ..Default::default() };
            let report = evaluate(&model, &catalog, &test, &corpus.truth, &opts)?;
            std::fs::create_dir_all(&a.out).map_err(|e| io(&a.out, e))?;
            report.write(&a.out, &a.stem)?;
        }
        Command::Sweep(a) => {
            let corpus = Corpus::load(&a.corpus, &detector)?;
            let cfg = SweepConfig {
                max_n: a.max_n,
                pool: a.pool,
                test: a.test,
                modes: a.modes.iter().map(|&m| m.into()).collect(),
                train: train_config(a.depth, a.seed),
                opts: ExtractOptions::default(),
            };
            let report = sweep(&a.template, &corpus, &catalog, &cfg).map_err(|e| match e {
                HarnessError::Config(m) => CliError::Usage(m),
                e => e.into(),
            })?;
            std::fs::create_dir_all(&a.out).map_err(|e| io(&a.out, e))?;
            report.write(&a.out, &a.stem)?;
        }
        Command::Serve(a) => server::serve(a, catalog, detector)?,
    }
    Ok(())
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => 3,
    }
}
