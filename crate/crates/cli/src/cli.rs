//! The `dwh` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use dwh_core::eval::{
    annotation_eval, lsi_project, nearest_centroid_eval, project, raw_features, retrieval_eval,
    topic_report, LatentMatrix, Split,
};
use dwh_core::model::{validate_params, ModelDims};
use dwh_core::train::{Method, TrainConfig};
use dwh_core::{
    annotate, generate_synthetic, normalize_features, oracle, ClusterProfile, Corpus, GmfConfig,
    HarmoniumParams, SyntheticSpec, TruncationSpec,
};

use crate::error::{CliError, Result};
use crate::formats;

#[derive(Debug, Parser)]
#[command(name = "dwh", version, about = "Dual-wing harmonium models for text and image data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic clustered corpus.
    Synth(SynthArgs),
    /// Train a model on a corpus.
    Train(TrainArgs),
    /// Write latent projections of a corpus.
    Project(ProjectArgs),
    /// Query-by-example retrieval evaluation.
    Retrieve(RetrieveArgs),
    /// Rank words for images.
    Annotate(AnnotateArgs),
    /// Annotation average precision on held-out observations.
    EvalAnnotation(EvalAnnotationArgs),
    /// Nearest-centroid classification of held-out observations.
    EvalClassify(EvalClassifyArgs),
    /// Top words and documents per latent aspect.
    Topics(TopicsArgs),
    /// Latent semantic indexing baseline projection.
    Lsi(LsiArgs),
    /// Finite-difference check of the exact gradient on tiny models.
    OracleCheck(OracleArgs),
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Text file: `id<TAB>word:count ...`, optional `#vocab` header.
    #[arg(long)]
    pub text: PathBuf,
    /// Image file: `id<TAB>v1,...,vK`, optional `#bins` header.
    #[arg(long)]
    pub images: PathBuf,
    /// Labels file: `id<TAB>label`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
}

impl CorpusArgs {
    fn load(&self) -> Result<Corpus> {
        formats::load_corpus(&self.text, &self.images, self.labels.as_deref())
    }

    fn load_labelled(&self) -> Result<(Corpus, Vec<String>)> {
        if self.labels.is_none() {
            return Err(CliError::Usage("--labels is required for this command".into()));
        }
        let c = self.load()?;
        let labels = c.labels.clone().unwrap_or_default();
        Ok((c, labels))
    }
}

#[derive(Debug, Args)]
pub struct GmfArgs {
    /// Mean-field residual tolerance [default: 1e-8].
    #[arg(long)]
    pub gmf_tol: Option<f64>,
    /// Mean-field sweep limit [default: 1000].
    #[arg(long)]
    pub gmf_max_iter: Option<usize>,
    /// Mean-field damping in [0, 1) [default: 0.3].
    #[arg(long)]
    pub gmf_damping: Option<f64>,
}

impl GmfArgs {
    fn config(&self) -> GmfConfig {
        let d = GmfConfig::default();
        GmfConfig {
            tol: self.gmf_tol.unwrap_or(d.tol),
            max_iter: self.gmf_max_iter.unwrap_or(d.max_iter),
            damping: self.gmf_damping.unwrap_or(d.damping),
            exp_cap: d.exp_cap,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML spec with `n`, `noise`, `seed` and `[[clusters]]` tables
    /// (`word_rates`, `image_mean`, `weight`). Overrides the shape flags.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Number of clusters with disjoint word and bin blocks.
    #[arg(long, default_value_t = 2)]
    pub clusters: usize,
    /// Vocabulary size.
    #[arg(long, default_value_t = 50)]
    pub words: usize,
    /// Image bins.
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Poisson rate of a cluster's own words.
    #[arg(long, default_value_t = 1.0)]
    pub rate: f64,
    /// Image mean outside a cluster's own bins (own bins get one more).
    #[arg(long, default_value_t = 0.5)]
    pub image_level: f64,
    /// Image noise standard deviation.
    #[arg(long, default_value_t = 0.2)]
    pub noise: f64,
    /// Number of observations.
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output prefix; writes `<out>.text.tsv`, `<out>.images.tsv`, `<out>.labels.tsv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    n: usize,
    noise: f64,
    seed: u64,
    clusters: Vec<ClusterFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusterFile {
    word_rates: Vec<f64>,
    image_mean: Vec<f64>,
    weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Cd,
    Gmf,
    Exact,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Train only on the `index` rows of this split file.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Latent dimension J.
    #[arg(long, default_value_t = 5)]
    pub aspects: usize,
    /// Gradient estimator.
    #[arg(long, value_enum, default_value_t = MethodArg::Cd)]
    pub method: MethodArg,
    /// Gradient ascent epochs [default: 1000].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Step size [default: 0.01].
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Mini-batch size [default: 100].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Momentum coefficient [default: 0].
    #[arg(long)]
    pub momentum: Option<f64>,
    /// L2 decay on the couplings [default: 1e-4].
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Training seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Gibbs sweeps per reconstruction for `cd` [default: 1].
    #[arg(long)]
    pub cd_steps: Option<usize>,
    /// Clamp for sampled word counts [default: 100].
    #[arg(long)]
    pub sample_x_max: Option<u32>,
    /// Word-count truncation for `exact`.
    #[arg(long, default_value_t = 8)]
    pub exact_x_max: u32,
    /// Quadrature nodes per bin for `exact`.
    #[arg(long, default_value_t = 41)]
    pub exact_points: usize,
    /// Quadrature half-width per bin for `exact`.
    #[arg(long, default_value_t = 6.0)]
    pub exact_range: f64,
    #[command(flatten)]
    pub gmf: GmfArgs,
    /// Keep images as given instead of matching feature sums.
    #[arg(long)]
    pub no_normalize: bool,
    /// Scale of the SVD coupling initialization [default: 0.01].
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// Margin kept by the integrability projection [default: 0.05].
    #[arg(long)]
    pub projection_margin: Option<f64>,
    /// Model output file.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-epoch report (TSV).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

impl TrainArgs {
    pub fn config(&self, bins: usize) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let method = match self.method {
            MethodArg::Cd => Method::Cd,
            MethodArg::Gmf => Method::Gmf,
            MethodArg::Exact => Method::Exact(TruncationSpec::uniform(
                self.exact_x_max,
                bins,
                -self.exact_range,
                self.exact_range,
                self.exact_points,
            )?),
        };
        Ok(TrainConfig {
            method,
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            momentum: self.momentum.unwrap_or(d.momentum),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            seed: self.seed,
            gibbs: dwh_core::GibbsConfig {
                steps: self.cd_steps.unwrap_or(d.gibbs.steps),
                x_max: self.sample_x_max.unwrap_or(d.gibbs.x_max),
                rng_seed: d.gibbs.rng_seed,
            },
            gmf: self.gmf.config(),
            projection_margin: self.projection_margin.unwrap_or(d.projection_margin),
            normalize_features: !self.no_normalize,
            init_scale: self.init_scale.unwrap_or(d.init_scale),
            freeze_couplings: false,
        })
    }
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Model file.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Project images as given instead of matching feature sums.
    #[arg(long)]
    pub no_normalize: bool,
    /// Latent output file; standard output if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Representation {
    /// Trained model projections.
    Dwh,
    /// Latent semantic indexing of the joint features.
    Lsi,
    /// Raw joint features.
    Raw,
}

#[derive(Debug, Args)]
pub struct RepresentationArgs {
    /// Feature space to compare observations in.
    #[arg(long, value_enum, default_value_t = Representation::Dwh)]
    pub representation: Representation,
    /// Model file (required for `dwh`).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// LSI rank [default: the model's J, else 5].
    #[arg(long)]
    pub aspects: Option<usize>,
    /// LSI seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use features as given instead of matching feature sums.
    #[arg(long)]
    pub no_normalize: bool,
}

impl RepresentationArgs {
    fn latents(&self, corpus: &Corpus) -> Result<LatentMatrix> {
        let corpus = if self.no_normalize {
            corpus.clone()
        } else {
            normalize_features(corpus).corpus
        };
        let model = self.model.as_deref().map(formats::load_model).transpose()?;
        Ok(match self.representation {
            Representation::Dwh => {
                let model = model.ok_or_else(|| {
                    CliError::Usage("--model is required with --representation dwh".into())
                })?;
                project(&model, &corpus)?
            }
            Representation::Lsi => {
                let j = self.aspects.or(model.map(|m| m.dims.aspects)).unwrap_or(5);
                lsi_project(&corpus, j, self.seed)?.latents
            }
            Representation::Raw => raw_features(&corpus),
        })
    }
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub representation: RepresentationArgs,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Split file (`id<TAB>query|index`); alternating positions if absent.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Per-query average precision output (TSV).
    #[arg(long)]
    pub ap_out: Option<PathBuf>,
    /// 11-point interpolated precision-recall output (TSV).
    #[arg(long)]
    pub pr_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// Model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Image vectors: `id<TAB>v1,...,vK`.
    #[arg(long)]
    pub images: PathBuf,
    /// Text file whose `#vocab` header names the words.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Words per image.
    #[arg(long, default_value_t = 10)]
    pub top_n: usize,
    #[command(flatten)]
    pub gmf: GmfArgs,
}

#[derive(Debug, Args)]
pub struct EvalAnnotationArgs {
    /// Model file.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Evaluate on the `query` rows of this split; alternating if absent.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Comma-separated list lengths.
    #[arg(long, value_delimiter = ',', default_value = "10")]
    pub top_n: Vec<usize>,
    /// Zero the image couplings before evaluating.
    #[arg(long)]
    pub ablate_image: bool,
    /// Use features as given instead of matching feature sums.
    #[arg(long)]
    pub no_normalize: bool,
    #[command(flatten)]
    pub gmf: GmfArgs,
}

#[derive(Debug, Args)]
pub struct EvalClassifyArgs {
    #[command(flatten)]
    pub representation: RepresentationArgs,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Split file: `index` rows train, `query` rows test. Alternating if absent.
    #[arg(long)]
    pub split: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TopicsArgs {
    /// Model file.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Words listed per aspect.
    #[arg(long, default_value_t = 10)]
    pub top_words: usize,
    /// Documents listed per aspect.
    #[arg(long, default_value_t = 5)]
    pub top_docs: usize,
    /// Project images as given instead of matching feature sums.
    #[arg(long)]
    pub no_normalize: bool,
}

#[derive(Debug, Args)]
pub struct LsiArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Rank of the projection.
    #[arg(long, default_value_t = 5)]
    pub aspects: usize,
    /// Subspace iteration seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use features as given instead of matching feature sums.
    #[arg(long)]
    pub no_normalize: bool,
    /// Latent output file; standard output if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Random parameter draws.
    #[arg(long, default_value_t = 5)]
    pub draws: u64,
    /// Observations per draw.
    #[arg(long, default_value_t = 5)]
    pub batch: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
    /// Seed of the first draw.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn stdout_err(e: std::io::Error) -> CliError {
    CliError::io(Path::new("<stdout>"), e)
}

macro_rules! out {
    ($w:expr, $($arg:tt)*) => {
        writeln!($w, $($arg)*).map_err(stdout_err)?
    };
}

fn load_split(path: Option<&Path>, corpus: &Corpus) -> Result<Split> {
    match path {
        Some(p) => formats::parse_split(p, &formats::read(p)?, &corpus.ids),
        None => Ok(Split::alternating(corpus.len())),
    }
}

fn emit_or_print(path: Option<&Path>, contents: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => formats::write(p, contents),
        None => out.write_all(contents.as_bytes()).map_err(stdout_err),
    }
}

pub fn synth_spec(args: &SynthArgs) -> Result<SyntheticSpec> {
    let spec = match &args.spec {
        Some(path) => {
            let text = formats::read(path)?;
            let f: SpecFile = toml::from_str(&text).map_err(|e| {
                let line = e.span().map_or(1, |s| text[..s.start].matches('\n').count() + 1);
                CliError::parse(path, line, e.message().to_string())
            })?;
            SyntheticSpec {
                clusters: f
                    .clusters
                    .into_iter()
                    .map(|c| ClusterProfile {
                        word_rates: c.word_rates,
                        image_mean: c.image_mean,
                        weight: c.weight,
                    })
                    .collect(),
                n: f.n,
                noise: f.noise,
                seed: f.seed,
            }
        }
        None => SyntheticSpec::disjoint_clusters(
            args.clusters,
            args.words,
            args.bins,
            args.rate,
            args.image_level,
            args.noise,
            args.n,
            args.seed,
        ),
    };
    spec.check()?;
    Ok(spec)
}

fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn synth(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = generate_synthetic(&synth_spec(args)?)?;
    let text = prefixed(&args.out, ".text.tsv");
    let images = prefixed(&args.out, ".images.tsv");
    let labels = prefixed(&args.out, ".labels.tsv");
    formats::save_corpus(&corpus, &text, &images, Some(&labels))?;
    out!(out, "wrote {} observations to {}, {}, {}", corpus.len(), text.display(), images.display(), labels.display());
    Ok(())
}

fn train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let corpus = args.corpus.load()?;
    let corpus = match &args.split {
        Some(p) => corpus.subset(&load_split(Some(p), &corpus)?.index),
        None => corpus,
    };
    let dims = ModelDims::new(corpus.words(), corpus.bins(), args.aspects)?;
    let config = args.config(dims.bins)?;
    let (params, report) = dwh_core::train(&corpus, dims, &config)?;
    formats::save_model(&params, &args.out)?;
    if let Some(p) = &args.report {
        formats::write(p, &formats::emit_train_report(&report))?;
    }
    let last = report.epochs.last();
    out!(
        out,
        "trained {} epochs on {} observations (J = {}); final gradient norm {}",
        report.epochs.len(),
        corpus.len(),
        dims.aspects,
        last.map_or(0.0, |e| e.grad_norm)
    );
    let sum = |f: fn(&dwh_core::train::EpochRecord) -> usize| report.epochs.iter().map(f).sum::<usize>();
    out!(
        out,
        "projections {}, clamped words {}, skipped batches {} (mean field) {} (rate overflow), unnormalized observations {}, padded columns {}",
        sum(|e| e.projections),
        sum(|e| e.clamped_words),
        sum(|e| e.gmf_divergences),
        sum(|e| e.rate_overflows),
        report.flagged.len(),
        report.svd_padded
    );
    Ok(())
}

fn project_cmd(args: &ProjectArgs, out: &mut dyn Write) -> Result<()> {
    let model = formats::load_model(&args.model)?;
    let corpus = args.corpus.load()?;
    let corpus = if args.no_normalize { corpus } else { normalize_features(&corpus).corpus };
    let latents = project(&model, &corpus)?;
    emit_or_print(args.out.as_deref(), &formats::emit_latents(&latents), out)
}

fn retrieve(args: &RetrieveArgs, out: &mut dyn Write) -> Result<()> {
    let (corpus, labels) = args.corpus.load_labelled()?;
    let split = load_split(args.split.as_deref(), &corpus)?;
    let latents = args.representation.latents(&corpus)?;
    let report = retrieval_eval(&latents, &labels, &split)?;
    if let Some(p) = &args.ap_out {
        formats::write(p, &formats::emit_average_precisions(&report))?;
    }
    if let Some(p) = &args.pr_out {
        let points: Vec<(f64, f64)> = dwh_core::eval::RECALL_GRID
            .iter()
            .copied()
            .zip(report.pr_curve.iter().copied())
            .collect();
        formats::write(p, &formats::emit_pr_curve(&points))?;
    }
    out!(out, "mean AP {:.4} over {} queries", report.mean_ap, report.per_query.len());
    if !report.skipped.is_empty() {
        out!(out, "skipped {} queries with no relevant index item", report.skipped.len());
    }
    Ok(())
}

fn vocabulary(path: Option<&Path>, words: usize) -> Result<Vec<String>> {
    let vocab = match path {
        Some(p) => formats::parse_text(p, &formats::read(p)?)?.vocab,
        None => (0..words).map(|i| i.to_string()).collect(),
    };
    if vocab.len() != words {
        return Err(CliError::Usage(format!(
            "vocabulary has {} words, model has {words}",
            vocab.len()
        )));
    }
    Ok(vocab)
}

fn annotate_cmd(args: &AnnotateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let model = formats::load_model(&args.model)?;
    let vocab = vocabulary(args.vocab.as_deref(), model.dims.words)?;
    let images = formats::parse_images(&args.images, &formats::read(&args.images)?)?;
    let config = args.gmf.config();
    let mut skipped = 0usize;
    for (id, z) in &images.rows {
        match annotate(&model, z, args.top_n, &config) {
            Ok(ranked) => {
                let words: Vec<String> =
                    ranked.iter().map(|(i, nu)| format!("{}:{nu:.4}", vocab[*i])).collect();
                out!(out, "{id}\t{}", words.join(" "));
            }
            Err(e @ (dwh_core::Error::Divergence { .. } | dwh_core::Error::RateOverflow { .. })) => {
                skipped += 1;
                let _ = writeln!(err, "{id}: skipped: {e}");
            }
            Err(e) => return Err(e.into()),
        }
    }
    if skipped > 0 {
        let _ = writeln!(err, "{skipped} of {} images skipped", images.rows.len());
    }
    Ok(())
}

fn eval_annotation(args: &EvalAnnotationArgs, out: &mut dyn Write) -> Result<()> {
    let mut model = formats::load_model(&args.model)?;
    if args.ablate_image {
        model.u.scale(0.0);
    }
    let corpus = args.corpus.load()?;
    let split = load_split(args.split.as_deref(), &corpus)?;
    let corpus = if args.no_normalize { corpus } else { normalize_features(&corpus).corpus };
    let test = corpus.subset(&split.queries);
    let report = annotation_eval(&model, &test, &args.top_n, &args.gmf.config())?;
    out!(out, "top_n\tmean_ap");
    for (n, ap) in &report.by_top_n {
        out!(out, "{n}\t{ap:.4}");
    }
    out!(out, "evaluated {} of {} images", test.len() - report.skipped.len(), test.len());
    Ok(())
}

fn eval_classify(args: &EvalClassifyArgs, out: &mut dyn Write) -> Result<()> {
    let (corpus, labels) = args.corpus.load_labelled()?;
    let split = load_split(args.split.as_deref(), &corpus)?;
    let latents = args.representation.latents(&corpus)?;
    let report = nearest_centroid_eval(&latents, &labels, &split.index, &split.queries)?;
    out!(out, "accuracy {:.4} over {} test items", report.accuracy, split.queries.len());
    out!(out, "true\\predicted\t{}", report.labels.join("\t"));
    for (r, l) in report.labels.iter().enumerate() {
        let row: Vec<String> = report.confusion.row(r).iter().map(|v| format!("{v}")).collect();
        out!(out, "{l}\t{}", row.join("\t"));
    }
    Ok(())
}

fn topics(args: &TopicsArgs, out: &mut dyn Write) -> Result<()> {
    let model = formats::load_model(&args.model)?;
    let corpus = args.corpus.load()?;
    let corpus = if args.no_normalize { corpus } else { normalize_features(&corpus).corpus };
    let report = topic_report(&model, &corpus, args.top_words, args.top_docs)?;
    write!(out, "{report}").map_err(stdout_err)?;
    Ok(())
}

fn lsi(args: &LsiArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let corpus = args.corpus.load()?;
    let corpus = if args.no_normalize { corpus } else { normalize_features(&corpus).corpus };
    let p = lsi_project(&corpus, args.aspects, args.seed)?;
    let values: Vec<String> = p.singular_values.iter().map(|s| format!("{s}")).collect();
    let _ = writeln!(err, "singular values {}", values.join(" "));
    if p.padded > 0 {
        let _ = writeln!(err, "{} directions padded beyond the data rank", p.padded);
    }
    emit_or_print(args.out.as_deref(), &formats::emit_latents(&p.latents), out)
}

fn oracle_check(args: &OracleArgs, out: &mut dyn Write) -> Result<()> {
    let trunc = oracle::canonical_truncation();
    let mut failed = Vec::new();
    for d in 0..args.draws {
        let seed = args.seed + d;
        let params: HarmoniumParams = oracle::canonical_params(seed);
        validate_params(&params)?.into_result()?;
        let batch = oracle::random_batch(params.dims, args.batch, seed ^ 0x5eed);
        let check = oracle::check_gradient(&params, &batch, &trunc, args.step)?;
        let e = check.max_relative_error();
        let ok = e < args.tolerance;
        out!(out, "draw {seed}: max relative error {e:.3e} {}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed.push(seed);
        }
    }
    if failed.is_empty() {
        out!(out, "oracle check PASS ({} draws)", args.draws);
        Ok(())
    } else {
        Err(CliError::OracleFailed(format!("draws {failed:?} exceed {}", args.tolerance)))
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(a, out),
        Command::Train(a) => train(a, out),
        Command::Project(a) => project_cmd(a, out),
        Command::Retrieve(a) => retrieve(a, out),
        Command::Annotate(a) => annotate_cmd(a, out, err),
        Command::EvalAnnotation(a) => eval_annotation(a, out),
        Command::EvalClassify(a) => eval_classify(a, out),
        Command::Topics(a) => topics(a, out),
        Command::Lsi(a) => lsi(a, out, err),
        Command::OracleCheck(a) => oracle_check(a, out),
    }
}

/// Worker count from `DWH_THREADS`, if set.
pub fn thread_count(value: Option<&str>) -> Result<Option<usize>> {
    match value {
        None => Ok(None),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("DWH_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { write!(out, "{rendered}") } else { write!(err, "{rendered}") };
            return code;
        }
    };
    let threads = std::env::var("DWH_THREADS").ok();
    match thread_count(threads.as_deref()) {
        Ok(Some(n)) => {
            // A pool built earlier in the same process keeps its size.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        Ok(None) => {}
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return e.exit_code();
        }
    }
    match run(&cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
