//! The `hierex` command line.
//!
//! Exit codes: 0 success, 1 usage, 2 input or parse error, 3 numeric
//! failure, 4 nothing extracted.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{encode_document, generate_corpus, load_corpus, save_corpus, Document, LabelSet};
use crate::extract::extract_stream;
use crate::linalg::Rng;
use crate::model::{toy_gradcheck, TaggerMode};
use crate::train::{evaluate, fit, Checkpoint, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_EMPTY: i32 = 4;

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_THRESHOLD: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(
    name = "hierex",
    version,
    about = "Hierarchical recurrent extraction from lawsuit-style documents"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic annotated corpus split into train/dev/test files.
    GenCorpus(GenCorpusArgs),
    /// Train a model and write the selected checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint against an annotated corpus.
    Eval(EvalArgs),
    /// Extract entities and sentence roles from documents.
    Extract(ExtractArgs),
    /// Compare analytic and finite-difference gradients on a toy model.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct GenCorpusArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of documents.
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Train,dev,test fractions summing to 1, or document counts summing to N.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    split: String,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long = "out-model")]
    out_model: PathBuf,
    /// Flat JSON object of config values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Config override `key=value`; wins over --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Epoch history; defaults to `<out-model>.history.jsonl`.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Dev metrics of the selected model; defaults to `<out-model>.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    #[arg(long)]
    model: PathBuf,
    /// Input records, or `-` for standard input.
    #[arg(long)]
    input: String,
    /// Output records, or `-` for standard output.
    #[arg(long, default_value = "-")]
    out: String,
    /// Records carry `sentences[].tokens` instead of `text`.
    #[arg(long)]
    pretokenized: bool,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 11)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 25)]
    sample: usize,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

fn io_fail(path: &Path, e: io::Error) -> Failure {
    Failure::new(EXIT_INPUT, format!("{}: {e}", path.display()))
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Extract(a) => extract(a),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

/// Document counts for a `train,dev,test` split of `n` documents.
///
/// Three integers summing to `n` are taken as counts; otherwise the values
/// are fractions that must be non-negative and sum to 1 within 1e-9. Train
/// and dev counts are rounded and test takes the remainder.
pub fn split_counts(spec: &str, n: usize) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!(
            "--split needs three comma-separated values, got {spec:?}"
        ));
    }
    if let Ok(counts) = parts
        .iter()
        .map(|p| p.parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
    {
        if counts.iter().sum::<usize>() == n {
            return Ok([counts[0], counts[1], counts[2]]);
        }
    }
    let fr = parts
        .iter()
        .map(|p| p.parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| format!("--split values must be numbers, got {spec:?}"))?;
    if fr.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(format!(
            "--split fractions must be non-negative, got {spec:?}"
        ));
    }
    let sum: f64 = fr.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(format!("--split fractions must sum to 1, got {sum}"));
    }
    let train = ((n as f64 * fr[0]).round() as usize).min(n);
    let dev = ((n as f64 * fr[1]).round() as usize).min(n - train);
    Ok([train, dev, n - train - dev])
}

fn gen_corpus(a: GenCorpusArgs) -> Result<i32, Failure> {
    let counts = split_counts(&a.split, a.n).map_err(|m| Failure::new(EXIT_USAGE, m))?;
    let docs = generate_corpus(a.n, a.seed);
    let mut order: Vec<usize> = (0..a.n).collect();
    // a stream independent of the generator's own
    Rng::new(a.seed.wrapping_add(0x9e37_79b9_7f4a_7c15)).shuffle(&mut order);
    fs::create_dir_all(&a.out).map_err(|e| io_fail(&a.out, e))?;
    let mut start = 0;
    for (name, count) in ["train", "dev", "test"].iter().zip(counts) {
        let mut idx = order[start..start + count].to_vec();
        idx.sort_unstable();
        start += count;
        let part: Vec<Document> = idx.into_iter().map(|i| docs[i].clone()).collect();
        let path = a.out.join(format!("{name}.jsonl"));
        save_corpus(&part, &path).map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
    }
    println!(
        "wrote {} train, {} dev, {} test documents to {}",
        counts[0],
        counts[1],
        counts[2],
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn load(path: &Path, labels: &LabelSet) -> Result<Vec<Document>, Failure> {
    load_corpus(path, labels).map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))
}

fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_fail(path, e))
}

fn metrics_json(m: &crate::train::Metrics) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("metrics serialize");
    s.push('\n');
    s
}

fn train(a: TrainArgs) -> Result<i32, Failure> {
    let file_cfg = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_fail(p, e))?;
            let v: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", p.display())))?;
            Some(v)
        }
        None => None,
    };
    let cfg = TrainConfig::default()
        .with_overrides(file_cfg.as_ref(), &a.set)
        .map_err(|e| Failure::new(EXIT_USAGE, e.to_string()))?;
    let labels = LabelSet::lawsuit();
    let train_docs = load(&a.train, &labels)?;
    let dev_docs = load(&a.dev, &labels)?;

    let run = fit(&train_docs, &dev_docs, &cfg, |r| {
        let dev = match (r.dev_f1, r.dev_class_acc) {
            (Some(f), Some(c)) => format!("dev_f1 {f:.4} dev_class_acc {c:.4}"),
            _ => "dev n/a".to_string(),
        };
        eprintln!(
            "epoch {:>3} loss {:.6} {dev} clipped {}/{}",
            r.epoch, r.train_loss, r.clipped_steps, r.steps
        );
    })
    .map_err(|e| {
        Failure::new(
            if e.is_numeric() {
                EXIT_NUMERIC
            } else {
                EXIT_INPUT
            },
            e.to_string(),
        )
    })?;

    run.checkpoint
        .save(&a.out_model)
        .map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
    let history = a
        .history
        .unwrap_or_else(|| sibling(&a.out_model, ".history.jsonl"));
    write_file(&history, run.history.to_jsonl().as_bytes())?;
    let ck = &run.checkpoint;
    let dev_enc: Vec<_> = dev_docs
        .iter()
        .map(|d| encode_document(d, &ck.vocab, &ck.labels))
        .collect();
    let metrics = evaluate(&ck.model, &dev_enc, &ck.labels)
        .map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
    let report = metrics_json(&metrics);
    write_file(
        &a.report
            .unwrap_or_else(|| sibling(&a.out_model, ".report.json")),
        report.as_bytes(),
    )?;
    eprintln!(
        "selected epoch {} of {}{}",
        run.history.best_epoch,
        run.history.epochs.len(),
        if run.history.stopped_early {
            " (early stop)"
        } else {
            ""
        }
    );
    print!("{report}");
    Ok(EXIT_OK)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint, Failure> {
    Checkpoint::load(path).map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))
}

fn eval(a: EvalArgs) -> Result<i32, Failure> {
    let ck = load_checkpoint(&a.model)?;
    let docs = load(&a.data, &ck.labels)?;
    let enc: Vec<_> = docs
        .iter()
        .map(|d| encode_document(d, &ck.vocab, &ck.labels))
        .collect();
    let metrics = evaluate(&ck.model, &enc, &ck.labels)
        .map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
    let report = metrics_json(&metrics);
    if let Some(p) = &a.report {
        write_file(p, report.as_bytes())?;
    }
    print!("{report}");
    Ok(EXIT_OK)
}

fn extract(a: ExtractArgs) -> Result<i32, Failure> {
    let ck = load_checkpoint(&a.model)?;
    let input: Box<dyn BufRead> = if a.input == "-" {
        Box::new(io::stdin().lock())
    } else {
        let p = Path::new(&a.input);
        Box::new(BufReader::new(File::open(p).map_err(|e| io_fail(p, e))?))
    };
    let out: Box<dyn Write> = if a.out == "-" {
        Box::new(io::stdout().lock())
    } else {
        let p = Path::new(&a.out);
        Box::new(BufWriter::new(File::create(p).map_err(|e| io_fail(p, e))?))
    };
    let summary = extract_stream(&ck, input, out, io::stderr().lock(), a.pretokenized)
        .map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
    Ok(if summary.succeeded > 0 {
        EXIT_OK
    } else {
        EXIT_EMPTY
    })
}

/// Per-tensor report lines for both tagger modes, and whether every tensor
/// passed.
pub fn gradcheck_report(seed: u64, eps: f64, sample: usize) -> Result<(String, bool), String> {
    let mut text = String::new();
    let mut all_ok = true;
    for mode in [TaggerMode::Softmax, TaggerMode::Crf] {
        let report = toy_gradcheck(mode, seed, eps, sample).map_err(|e| format!("{mode}: {e}"))?;
        for t in &report.tensors {
            let ok = t.max_rel < GRADCHECK_THRESHOLD;
            all_ok &= ok;
            text.push_str(&format!(
                "{mode:<7} {:<14} checked {:>3}  max_rel {:.3e}  mean_rel {:.3e}  {}\n",
                t.name,
                t.checked,
                t.max_rel,
                t.mean_rel,
                if ok { "ok" } else { "FAIL" }
            ));
        }
        text.push_str(&format!(
            "{mode:<7} overall max_rel {:.3e}\n",
            report.max_rel
        ));
    }
    text.push_str(if all_ok { "PASS\n" } else { "FAIL\n" });
    Ok((text, all_ok))
}

fn gradcheck(a: GradcheckArgs) -> Result<i32, Failure> {
    if !(a.eps.is_finite() && a.eps > 0.0) || a.sample == 0 {
        return Err(Failure::new(
            EXIT_USAGE,
            "--eps must be positive and --sample at least 1",
        ));
    }
    let (text, ok) =
        gradcheck_report(a.seed, a.eps, a.sample).map_err(|m| Failure::new(EXIT_NUMERIC, m))?;
    print!("{text}");
    Ok(if ok { EXIT_OK } else { EXIT_NUMERIC })
}
