//! Command-line front end.
//!
//! Exit codes: 0 success, 1 bad input (unreadable or malformed files, bad
//! arguments), 2 a validation or property check failed, 3 a computation failed
//! on valid input.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::annotation::{agreement_report, AgreementMode};
use crate::boundary::{
    derive_boundaries, load_boundary_set, projection::projection_csv, synthetic_clusters,
    BoundaryError, Checkpoint, ExtractionConfig, Hyperparams, TrainingSample,
};
use crate::dataset_io::{
    build_ground_truth, join_records, load_annotations, load_ground_truth, load_predictions,
    report_json, write_ground_truth, DatasetError, GtMode,
};
use crate::metrics::{confusion_csv, evaluate, EvaluationConfig, DEFAULT_MAX_PAIRS};
use crate::properties::check_registry;
use crate::scoring::{counts_from_vector, severity_score, LevelCounts};
use crate::taxonomy::{
    classify_attribute, minimal_valid_weights, TaxonomyError, TaxonomyFile, TaxonomyRegistry,
    NUM_LEVELS,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Input(_) => EXIT_INPUT,
            Self::Validation(_) => EXIT_VALIDATION,
            Self::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        Self::Input(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Internal(format!("write failed: {e}"))
    }
}

fn taxonomy_error(e: TaxonomyError) -> CliError {
    match e {
        TaxonomyError::InvalidWeights { .. }
        | TaxonomyError::LevelMismatch { .. }
        | TaxonomyError::DuplicateId(_) => {
            CliError::Validation(format!("taxonomy validation failed: {e}"))
        }
        other => CliError::Input(other.to_string()),
    }
}

fn boundary_error(e: BoundaryError) -> CliError {
    match e {
        BoundaryError::Io { .. } | BoundaryError::Parse { .. } => CliError::Input(e.to_string()),
        BoundaryError::MissingLevel(_)
        | BoundaryError::DegenerateDataset
        | BoundaryError::InvalidHyperparams(_) => CliError::Input(e.to_string()),
        other => CliError::Internal(other.to_string()),
    }
}

/// Severity scoring for the compositional privacy risk taxonomy.
#[derive(Debug, Parser)]
#[command(name = "cprt", version, about)]
pub struct Cli {
    /// Taxonomy JSON file; the built-in canonical taxonomy when absent.
    #[arg(long, global = true, env = "CPRT_TAXONOMY")]
    pub taxonomy: Option<PathBuf>,

    /// Boundary file overriding the taxonomy's score intervals. Accepts a
    /// derived boundary file or a bare `[[min,max],...]` array.
    #[arg(long, global = true)]
    pub boundaries: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a combination of attributes.
    Score(ScoreArgs),
    /// Place an attribute in a level from its four decision answers.
    Classify(ClassifyArgs),
    /// Merge annotations into a ground-truth file.
    BuildGt(BuildGtArgs),
    /// Compare predicted scores against ground truth.
    Evaluate(EvaluateArgs),
    /// Learn level boundaries from attribute vectors.
    DeriveBoundaries(DeriveArgs),
    /// Exhaustively check the scoring properties of a taxonomy.
    Validate(ValidateArgs),
    /// Inter-annotator agreement statistics.
    Agreement(AgreementArgs),
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Per-level attribute counts, e.g. `2,10,5,4`.
    #[arg(long, value_delimiter = ',', num_args = 1.., conflicts_with = "attrs", required_unless_present = "attrs")]
    pub counts: Option<Vec<u64>>,

    /// Comma-separated attribute ids present in the image.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub attrs: Option<Vec<String>>,

    /// Print JSON with full precision.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Answers to the four decision questions in order, e.g. `n,y,n,n`.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub answers: Vec<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GtModeArg {
    Dual,
    Majority,
}

impl From<GtModeArg> for GtMode {
    fn from(m: GtModeArg) -> Self {
        match m {
            GtModeArg::Dual => GtMode::Dual,
            GtModeArg::Majority => GtMode::Majority,
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildGtArgs {
    /// Annotation JSONL file.
    #[arg(long)]
    pub annotations: PathBuf,

    /// How annotators are combined.
    #[arg(long, value_enum, default_value = "dual")]
    pub mode: GtModeArg,

    /// Split name stored on every record.
    #[arg(long, default_value = "")]
    pub split: String,

    /// Output ground-truth JSONL file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Ground-truth JSONL file.
    #[arg(long)]
    pub gt: PathBuf,

    /// Predictions JSONL file with `score` or `raw_response` per line. A raw
    /// response is read as JSON with a `score` field if possible; otherwise
    /// the first decimal number in [0, 1] is used (`0.85` or `.85`), then the
    /// first bare 0 or 1. Scores outside [0, 1] are rejected.
    #[arg(long)]
    pub predictions: PathBuf,

    /// Seed for pair sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Pairs sampled per mode when more are eligible.
    #[arg(long, default_value_t = DEFAULT_MAX_PAIRS)]
    pub max_pairs: usize,

    /// Report JSON path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Confusion matrix CSV path.
    #[arg(long)]
    pub confusion_csv: Option<PathBuf>,

    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DeriveArgs {
    /// Ground-truth JSONL file whose attribute vectors are used for training.
    #[arg(
        long,
        required_unless_present = "synthetic_per_level",
        conflicts_with = "synthetic_per_level"
    )]
    pub gt: Option<PathBuf>,

    /// Train on a generated dataset with this many samples per level instead.
    #[arg(long)]
    pub synthetic_per_level: Option<usize>,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Embedding dimension.
    #[arg(long, default_value_t = Hyperparams::default().dim)]
    pub dim: usize,

    #[arg(long, default_value_t = Hyperparams::default().epochs)]
    pub epochs: usize,

    #[arg(long, default_value_t = Hyperparams::default().learning_rate)]
    pub lr: f64,

    #[arg(long, default_value_t = Hyperparams::default().batch_size)]
    pub batch_size: usize,

    /// Base triplet margin.
    #[arg(long, default_value_t = Hyperparams::default().base_margin)]
    pub margin: f64,

    /// Extra margin per level of separation.
    #[arg(long, default_value_t = Hyperparams::default().ordinal_scale)]
    pub ordinal_scale: f64,

    #[arg(long, default_value_t = Hyperparams::default().weight_decay)]
    pub weight_decay: f64,

    /// Percentile of per-level scores taken as the level floor.
    #[arg(long, default_value_t = ExtractionConfig::default().percentile)]
    pub percentile: f64,

    /// Output boundary JSON file.
    #[arg(long)]
    pub out: PathBuf,

    /// Also save the trained embedding matrix.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,

    /// Also write a 2-D PCA projection of the embedded samples as CSV.
    #[arg(long)]
    pub projection_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Replace the file's weights with the smallest valid ones before
    /// checking (useful after adding attributes).
    #[arg(long)]
    pub minimal_weights: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AgreementModeArg {
    Pairwise,
    Consensus,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    /// Annotation JSONL file.
    #[arg(long)]
    pub annotations: PathBuf,

    #[arg(long, value_enum, default_value = "pairwise")]
    pub mode: AgreementModeArg,

    /// Report JSON path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn load_registry(cli: &Cli) -> Result<TaxonomyRegistry, CliError> {
    let registry = match &cli.taxonomy {
        Some(path) => TaxonomyRegistry::load(path).map_err(taxonomy_error)?,
        None => TaxonomyRegistry::canonical(),
    };
    match &cli.boundaries {
        Some(path) => {
            Ok(registry.with_boundaries(load_boundary_set(path).map_err(boundary_error)?))
        }
        None => Ok(registry),
    }
}

fn boundary_source(cli: &Cli) -> String {
    match (&cli.boundaries, &cli.taxonomy) {
        (Some(p), _) => p.display().to_string(),
        (None, Some(p)) => format!("taxonomy:{}", p.display()),
        (None, None) => "canonical".to_string(),
    }
}

fn write_output(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), CliError> {
    match path {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
        }
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

/// Runs a parsed command, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Score(a) => cmd_score(cli, a, out),
        Command::Classify(a) => cmd_classify(a, out),
        Command::BuildGt(a) => cmd_build_gt(cli, a, out),
        Command::Evaluate(a) => cmd_evaluate(cli, a, out),
        Command::DeriveBoundaries(a) => cmd_derive(cli, a, out),
        Command::Validate(a) => cmd_validate(cli, a, out),
        Command::Agreement(a) => cmd_agreement(cli, a, out),
    }
}

fn cmd_score(cli: &Cli, args: &ScoreArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let registry = load_registry(cli)?;
    let counts = match (&args.counts, &args.attrs) {
        (Some(c), _) => {
            let quad: [u64; NUM_LEVELS] = c.as_slice().try_into().map_err(|_| {
                CliError::Input(format!(
                    "--counts needs {NUM_LEVELS} values, got {}",
                    c.len()
                ))
            })?;
            LevelCounts(quad)
        }
        (None, Some(ids)) => {
            let mut vector = vec![0u8; registry.len()];
            for id in ids {
                let pos = registry
                    .position(id)
                    .ok_or_else(|| CliError::Input(format!("unknown attribute id `{id}`")))?;
                vector[pos] = 1;
            }
            counts_from_vector(&vector, &registry).map_err(|e| CliError::Input(e.to_string()))?
        }
        (None, None) => return Err(CliError::Input("give --counts or --attrs".into())),
    };
    let score = severity_score(&counts, &registry).map_err(|e| CliError::Input(e.to_string()))?;
    if args.json {
        let value = serde_json::json!({
            "counts": counts.0,
            "score": score.value,
            "level": score.level_label(),
        });
        writeln!(out, "{value}")?;
    } else {
        writeln!(out, "{:.3} {}", score.value, score.level_label())?;
    }
    Ok(())
}

fn parse_answer(s: &str) -> Result<bool, CliError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "y" | "yes" | "1" | "true" => Ok(true),
        "n" | "no" | "0" | "false" => Ok(false),
        other => Err(CliError::Input(format!("answer `{other}` is not yes/no"))),
    }
}

fn cmd_classify(args: &ClassifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let parsed = args
        .answers
        .iter()
        .map(|s| parse_answer(s))
        .collect::<Result<Vec<_>, _>>()?;
    // Trailing questions may be omitted; they default to no.
    if parsed.len() > NUM_LEVELS {
        return Err(CliError::Input(format!(
            "at most {NUM_LEVELS} answers, got {}",
            parsed.len()
        )));
    }
    let mut answers = [false; NUM_LEVELS];
    answers[..parsed.len()].copy_from_slice(&parsed);
    match classify_attribute(answers) {
        Ok(level) => {
            writeln!(out, "{level} {}", level.description())?;
            Ok(())
        }
        Err(e) => Err(CliError::Input(e.to_string())),
    }
}

fn cmd_build_gt(cli: &Cli, args: &BuildGtArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let registry = load_registry(cli)?;
    let annotations = load_annotations(&args.annotations, &registry)?;
    let records = build_ground_truth(&annotations, &registry, args.mode.into(), &args.split)?;
    write_ground_truth(&args.out, &records)?;
    let mut per_level = [0usize; NUM_LEVELS + 1];
    for r in &records {
        per_level[r.gt_level.map_or(NUM_LEVELS, |l| l.index())] += 1;
    }
    writeln!(
        out,
        "{} images -> {} (L1 {}, L2 {}, L3 {}, L4 {}, safe {})",
        records.len(),
        args.out.display(),
        per_level[0],
        per_level[1],
        per_level[2],
        per_level[3],
        per_level[4]
    )?;
    Ok(())
}

fn cmd_evaluate(cli: &Cli, args: &EvaluateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let registry = load_registry(cli)?;
    let gt = load_ground_truth(&args.gt, Some(&registry))?;
    let predictions = load_predictions(&args.predictions)?;
    let joined = join_records(&gt, &predictions)?;
    let config = EvaluationConfig {
        seed: args.seed,
        max_pairs: args.max_pairs,
        boundary_source: boundary_source(cli),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;
    let mut report = pool
        .install(|| evaluate(&joined.records, registry.boundaries(), &config))
        .map_err(|e| CliError::Internal(e.to_string()))?;
    if !joined.missing_predictions.is_empty() {
        let n = joined.missing_predictions.len();
        let warning = format!(
            "{n} ground-truth image(s) without prediction: {}",
            joined.missing_predictions.join(", ")
        );
        eprintln!("warning: {warning}");
        report.warnings.insert(0, warning);
    }
    if let Some(path) = &args.confusion_csv {
        write_output(Some(path), &confusion_csv(&report.confusion), out)?;
    }
    let json = report_json(&report);
    write_output(args.out.as_deref(), &json, out)?;
    if args.out.is_some() {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.3}"));
        writeln!(
            out,
            "seed {} n {} pearson {} spearman {} mae {:.3} bias {:.3} level_acc {:.3} inter_acc {} intra_acc {}",
            args.seed,
            report.n,
            fmt(report.pearson),
            fmt(report.spearman),
            report.mae,
            report.bias,
            report.level_accuracy,
            fmt(report.inter_acc),
            fmt(report.intra_acc)
        )?;
    }
    Ok(())
}

fn cmd_derive(cli: &Cli, args: &DeriveArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let samples: Vec<TrainingSample> = match (&args.gt, args.synthetic_per_level) {
        (Some(path), _) => {
            let registry = load_registry(cli)?;
            load_ground_truth(path, Some(&registry))?
                .iter()
                .filter_map(|r| r.to_training_sample())
                .collect()
        }
        (None, Some(n)) => synthetic_clusters(&load_registry(cli)?.levels(), n, args.seed),
        (None, None) => return Err(CliError::Input("give --gt or --synthetic-per-level".into())),
    };
    let hyperparams = Hyperparams {
        dim: args.dim,
        epochs: args.epochs,
        learning_rate: args.lr,
        batch_size: args.batch_size,
        base_margin: args.margin,
        ordinal_scale: args.ordinal_scale,
        weight_decay: args.weight_decay,
        ..Hyperparams::default()
    };
    let extraction = ExtractionConfig {
        percentile: args.percentile,
        ..ExtractionConfig::default()
    };
    let derivation =
        derive_boundaries(&samples, hyperparams, extraction, args.seed).map_err(boundary_error)?;
    derivation.file.write(&args.out).map_err(boundary_error)?;
    if let Some(path) = &args.checkpoint {
        Checkpoint::new(derivation.model.clone())
            .write(path)
            .map_err(boundary_error)?;
    }
    if let Some(path) = &args.projection_csv {
        write_output(Some(path), &projection_csv(&derivation.embedded), out)?;
    }
    let floors = derivation.file.boundaries.floors();
    writeln!(
        out,
        "seed {} samples {} floors L1 {:.3} L2 {:.3} L3 {:.3} L4 {:.3} -> {}",
        args.seed,
        samples.len(),
        floors[0],
        floors[1],
        floors[2],
        floors[3],
        args.out.display()
    )?;
    Ok(())
}

fn registry_with_minimal_weights(cli: &Cli) -> Result<TaxonomyRegistry, CliError> {
    let file: TaxonomyFile = match &cli.taxonomy {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        }
        None => TaxonomyRegistry::canonical().to_file_model(),
    };
    let mut cards = [0u64; NUM_LEVELS];
    for a in &file.attributes {
        cards[a.level.index()] += 1;
    }
    let file = TaxonomyFile {
        weights: minimal_valid_weights(&cards),
        ..file
    };
    let registry = TaxonomyRegistry::from_file_model(file).map_err(taxonomy_error)?;
    match &cli.boundaries {
        Some(path) => {
            Ok(registry.with_boundaries(load_boundary_set(path).map_err(boundary_error)?))
        }
        None => Ok(registry),
    }
}

fn cmd_validate(cli: &Cli, args: &ValidateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let registry = if args.minimal_weights {
        registry_with_minimal_weights(cli)?
    } else {
        load_registry(cli)?
    };
    let report = check_registry(&registry);
    if let Some(v) = report.first_violation() {
        return Err(CliError::Validation(format!(
            "{} combinations, {} violation(s); first: {v}",
            report.combinations,
            report.violations.len()
        )));
    }
    let w = registry.weights();
    writeln!(out, "weights ({},{},{},{})", w[0], w[1], w[2], w[3])?;
    writeln!(
        out,
        "{} combinations, all properties hold",
        report.combinations
    )?;
    Ok(())
}

fn cmd_agreement(cli: &Cli, args: &AgreementArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let registry = load_registry(cli)?;
    let records = load_annotations(&args.annotations, &registry)?;
    let mode = match args.mode {
        AgreementModeArg::Pairwise => AgreementMode::Pairwise,
        AgreementModeArg::Consensus => AgreementMode::Consensus,
    };
    let report = agreement_report(&records, registry.len(), mode)
        .map_err(|e| CliError::Input(e.to_string()))?;
    let mut json = serde_json::to_string_pretty(&report).expect("serialisable");
    json.push('\n');
    write_output(args.out.as_deref(), &json, out)?;
    if args.out.is_some() {
        writeln!(
            out,
            "images {} annotators {} agreement {:.3} kappa {:.3}{}",
            report.n_images,
            report.n_annotators,
            report.percent_agreement,
            report.cohen_kappa,
            if report.kappa_degenerate {
                " (degenerate)"
            } else {
                ""
            }
        )?;
    }
    Ok(())
}

/// Parses process arguments, runs, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&cli, &mut lock) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> Result<String, CliError> {
        let cli = Cli::try_parse_from(std::iter::once("cprt").chain(args.iter().copied()))
            .expect("parses");
        let mut buf = Vec::new();
        run(&cli, &mut buf)?;
        Ok(String::from_utf8(buf).unwrap())
    }

    #[test]
    fn score_outputs() {
        assert_eq!(
            run_args(&["score", "--counts", "2,10,5,4"]).unwrap(),
            "0.947 L1\n"
        );
        assert_eq!(
            run_args(&["score", "--attrs", "biometrics"]).unwrap(),
            "0.711 L1\n"
        );
        assert_eq!(
            run_args(&["score", "--counts", "0,0,0,0"]).unwrap(),
            "0.000 safe\n"
        );
        let json = run_args(&["score", "--counts", "1,10,0,0", "--json"]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["score"].as_f64().unwrap(), 0.870_169_673_094_986_4);
    }

    #[test]
    fn score_input_errors() {
        assert_eq!(
            run_args(&["score", "--counts", "1,2,3"])
                .unwrap_err()
                .exit_code(),
            EXIT_INPUT
        );
        assert_eq!(
            run_args(&["score", "--counts", "4,0,0,0"])
                .unwrap_err()
                .exit_code(),
            EXIT_INPUT
        );
        assert_eq!(
            run_args(&["score", "--attrs", "nope"])
                .unwrap_err()
                .exit_code(),
            EXIT_INPUT
        );
    }

    #[test]
    fn classify_outputs() {
        assert!(run_args(&["classify", "--answers", "y"])
            .unwrap()
            .starts_with("L1 "));
        assert!(run_args(&["classify", "--answers", "n,n,y,n"])
            .unwrap()
            .starts_with("L3 "));
        assert!(run_args(&["classify", "--answers", "n,n,n,n"]).is_err());
    }

    #[test]
    fn validate_canonical() {
        let text = run_args(&["validate"]).unwrap();
        assert!(text.ends_with("1320 combinations, all properties hold\n"));
    }

    #[test]
    fn unknown_flag_is_input_error() {
        assert_eq!(main_with_args(["cprt", "score", "--bogus"]), EXIT_INPUT);
    }
}
