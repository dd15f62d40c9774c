//! Command-line front end.
//!
//! `run` parses arguments, dispatches to one subcommand and maps the outcome
//! to an exit code: 0 on success, 1 on usage errors, 2 on data errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::corpus::{self, synthetic, Label, LabeledPair, Vocabulary};
use crate::error::{Error, Result};
use crate::eval;
use crate::model::{self, TrainConfig};
use crate::normalizer::{Architecture, LexiconSet, Normalizer};
use crate::Model;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "xaem",
    version,
    about = "Cross-architecture instruction embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize the instructions of a raw corpus file.
    Preprocess(PreprocessArgs),
    /// Build the vocabulary, train a model and save it.
    Train(TrainArgs),
    /// Nearest neighbours of a token.
    Nn(NnArgs),
    /// Cosine similarity of two tokens.
    Sim(SimArgs),
    /// ROC/AUC over labeled instruction pairs.
    EvalInstr(EvalInstrArgs),
    /// ROC/AUC over labeled block pairs.
    EvalBlocks(EvalBlocksArgs),
    /// Write the input embeddings in text vector format.
    Export(ExportArgs),
    /// Generate the synthetic two-architecture corpus.
    GenSynthetic(GenSyntheticArgs),
}

#[derive(Debug, Args)]
pub struct LexiconArgs {
    /// Directory of extra `<arch>.registers|calls|branches` tables.
    #[arg(long)]
    pub lexicons: Option<PathBuf>,
}

impl LexiconArgs {
    fn load(&self) -> Result<LexiconSet> {
        match &self.lexicons {
            Some(dir) => LexiconSet::with_dir(dir),
            None => Ok(LexiconSet::builtin()),
        }
    }
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output file; defaults to rewriting the input.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub lexicons: LexiconArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Where to save the trained model.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub dim: usize,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: u32,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 30)]
    pub negatives: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub subsample: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 4.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 5)]
    pub min_count: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub dynamic_window: bool,
    #[arg(long)]
    pub include_aligned_center: bool,
    #[command(flatten)]
    pub lexicons: LexiconArgs,
}

impl TrainArgs {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            dim: self.dim,
            window: self.window,
            epochs: self.epochs,
            lr: self.lr,
            negatives: self.negatives,
            subsample: self.subsample,
            gamma: self.gamma,
            beta: self.beta,
            min_count: self.min_count,
            seed: self.seed,
            workers: self.workers,
            dynamic_window: self.dynamic_window,
            include_aligned_center: self.include_aligned_center,
        }
    }
}

#[derive(Debug, Args)]
pub struct NnArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Canonical token, e.g. `arm:add r1,r0,r7`.
    #[arg(long)]
    pub token: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Only report neighbours of this architecture.
    #[arg(long)]
    pub arch: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub a: String,
    #[arg(long)]
    pub b: String,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Also write the ROC lines to this file.
    #[arg(long)]
    pub roc: Option<PathBuf>,
    /// Write the JSON report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalInstrArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Tab-separated labeled instruction pairs.
    #[arg(long)]
    pub pairs: PathBuf,
    #[command(flatten)]
    pub out: ReportArgs,
    #[command(flatten)]
    pub lexicons: LexiconArgs,
}

#[derive(Debug, Args)]
pub struct EvalBlocksArgs {
    /// Required unless `--baseline` is given.
    #[arg(long, required_unless_present = "baseline")]
    pub model: Option<PathBuf>,
    /// Labeled block-pair file.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Score with the feature-count baseline instead of embeddings.
    #[arg(long)]
    pub baseline: bool,
    #[command(flatten)]
    pub out: ReportArgs,
    #[command(flatten)]
    pub lexicons: LexiconArgs,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    /// Output corpus file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output file for the planted labeled instruction pairs.
    #[arg(long)]
    pub planted: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 2000)]
    pub blocks: usize,
    #[arg(long, default_value_t = 3)]
    pub min_len: usize,
    #[arg(long, default_value_t = 10)]
    pub max_len: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

fn write_out(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> Result<()> {
    out.write_fmt(text).map_err(|e| Error::io("<stdout>", e))
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        write_out($out, format_args!($($arg)*))
    };
}

fn load_model(path: &Path) -> Result<Model> {
    model::load(path)
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

fn preprocess(args: &PreprocessArgs, out: &mut dyn Write) -> Result<()> {
    let normalizer = Normalizer::new(args.lexicons.load()?);
    let pairs = corpus::load_pairs(&args.corpus, &normalizer)?;
    let target = args.output.as_ref().unwrap_or(&args.corpus);
    corpus::save_pairs(target, &pairs)?;
    say!(
        out,
        "{} pairs written to {}\n",
        pairs.len(),
        target.display()
    )
}

fn train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.config();
    cfg.validate()?;
    let normalizer = Normalizer::new(args.lexicons.load()?);
    let pairs = corpus::load_pairs(&args.corpus, &normalizer)?;
    let vocab = Vocabulary::build(&pairs, cfg.min_count)?;
    say!(out, "{} pairs, {} tokens\n", pairs.len(), vocab.len())?;
    let mut m = Model::init(vocab, cfg.dim, cfg.seed);
    let report = model::train(&mut m, &pairs, &cfg)?;
    say!(out, "epoch\tmono_loss\tmulti_loss\n")?;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
    for (e, s) in report.epochs.iter().enumerate() {
        say!(
            out,
            "{}\t{}\t{}\n",
            e + 1,
            fmt(s.mono.mean()),
            fmt(s.multi.mean())
        )?;
    }
    model::save(&m, &args.model)?;
    say!(out, "model saved to {}\n", args.model.display())
}

fn nn(args: &NnArgs, out: &mut dyn Write) -> Result<()> {
    if args.k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    let arch = args
        .arch
        .as_deref()
        .map(Architecture::new)
        .transpose()
        .map_err(|e| usage(format!("--arch: {e}")))?;
    let m = load_model(&args.model)?;
    for n in eval::nearest(&m, &args.token, args.k, arch.as_ref())? {
        say!(out, "{}\t{:.6}\n", n.token, n.score)?;
    }
    Ok(())
}

fn sim(args: &SimArgs, out: &mut dyn Write) -> Result<()> {
    let m = load_model(&args.model)?;
    let v = |t: &str| {
        m.embedding(t)
            .ok_or_else(|| Error::UnknownToken(t.to_string()))
    };
    let s = eval::cosine(v(&args.a)?, v(&args.b)?)?;
    say!(out, "{s:.6}\n")
}

fn finish(report: &eval::EvalReport, args: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    say!(out, "{}", report.roc.to_tsv())?;
    if report.excluded > 0 {
        say!(
            out,
            "# excluded {} pairs with unknown tokens\n",
            report.excluded
        )?;
    }
    if let Some(p) = &args.roc {
        report.roc.write_tsv(p)?;
    }
    if let Some(p) = &args.report {
        eval::write_report(report, p)?;
    }
    Ok(())
}

fn eval_instr(args: &EvalInstrArgs, out: &mut dyn Write) -> Result<()> {
    let normalizer = Normalizer::new(args.lexicons.load()?);
    let pairs = corpus::load_instruction_pairs(&args.pairs, &normalizer)?;
    let m = load_model(&args.model)?;
    let report = eval::eval_instruction_pairs(&m, &pairs)?;
    finish(&report, &args.out, out)
}

fn eval_blocks(args: &EvalBlocksArgs, out: &mut dyn Write) -> Result<()> {
    let lexicons = args.lexicons.load()?;
    let normalizer = Normalizer::new(lexicons.clone());
    let pairs = corpus::load_labeled_pairs(&args.pairs, &normalizer)?;
    let report = if args.baseline {
        eval::eval_block_pairs_baseline(&pairs, &lexicons)?
    } else {
        let path = args
            .model
            .as_ref()
            .ok_or_else(|| usage("--model is required"))?;
        eval::eval_block_pairs(&load_model(path)?, &pairs)?
    };
    finish(&report, &args.out, out)
}

fn export(args: &ExportArgs, out: &mut dyn Write) -> Result<()> {
    let m = load_model(&args.model)?;
    model::export_text(&m, &args.output)?;
    say!(
        out,
        "{} vectors written to {}\n",
        m.vocab().len(),
        args.output.display()
    )
}

fn gen_synthetic(args: &GenSyntheticArgs, out: &mut dyn Write) -> Result<()> {
    if args.vocab_size < 2 {
        return Err(usage("--vocab-size must be at least 2"));
    }
    if args.min_len == 0 || args.min_len > args.max_len {
        return Err(usage("need 1 <= --min-len <= --max-len"));
    }
    if !(0.0..=1.0).contains(&args.noise) {
        return Err(usage("--noise must lie in [0, 1]"));
    }
    let spec = synthetic::SyntheticSpec {
        vocab_size: args.vocab_size,
        blocks: args.blocks,
        min_len: args.min_len,
        max_len: args.max_len,
        noise: args.noise,
        seed: args.seed,
        ..Default::default()
    };
    let c = synthetic::generate(&spec);
    corpus::save_pairs(&args.corpus, &c.pairs)?;
    if let Some(p) = &args.planted {
        corpus::save_instruction_pairs(p, &c.planted)?;
    }
    let similar = c
        .planted
        .iter()
        .filter(|p: &&LabeledPair| p.label == Label::Similar)
        .count();
    say!(
        out,
        "{} pairs written to {} ({} planted similar pairs)\n",
        c.pairs.len(),
        args.corpus.display(),
        similar
    )
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Preprocess(a) => preprocess(a, out),
        Command::Train(a) => train(a, out),
        Command::Nn(a) => nn(a, out),
        Command::Sim(a) => sim(a, out),
        Command::EvalInstr(a) => eval_instr(a, out),
        Command::EvalBlocks(a) => eval_blocks(a, out),
        Command::Export(a) => export(a, out),
        Command::GenSynthetic(a) => gen_synthetic(a, out),
    }
}

/// Parse `argv` (program name first) and run; returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_data_error() {
                EXIT_DATA
            } else {
                EXIT_USAGE
            }
        }
    }
}
