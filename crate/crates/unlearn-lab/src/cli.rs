//! Command-line surface. Each subcommand fronts one pipeline operation;
//! outputs are written atomically and runs with fixed seeds and fixture
//! ports are byte-reproducible.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage/configuration error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use unlearn_core::losses::{LossMethod, LossSpec, Regularizer};
use unlearn_core::metrics::{self, ProbabilityMode};
use unlearn_core::neighborset::{
    self, ContainmentMatcher, SetKind, SynthesisInputs, TemplateQaGenerator, Thresholds,
};
use unlearn_core::ports::{Embedder, EntityMasker, NliJudge, TextGenerator};
use unlearn_core::textsim::{self, RuleMasker};
use unlearn_core::toylab::{
    self, CorpusSizes, ToyCorpus, UnlearnParams, UnlearnRun,
};

use crate::clients::{FixturePort, FixtureStore, HttpPort, LlmMasker, RecordingPort};
use crate::config::RunConfig;
use crate::dataset::{self, MaskRecord};
use crate::evallog::{self, ScoringPorts};
use crate::report::{self, ToyRunSummary};
use crate::LabError;

#[derive(Parser)]
#[command(
    name = "unlearn-lab",
    version,
    about = "Build syntactic neighbor sets, evaluate unlearned models, and run toy unlearning experiments"
)]
struct Cli {
    /// Run configuration file (TOML); flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory all relative paths are resolved against.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mask entities in a sentence or a dataset of questions.
    Mask(MaskArgs),
    /// Normalized Levenshtein similarity between two masked sentences.
    Sim(SimArgs),
    /// Cluster forget-set questions by masked similarity.
    Cluster(ClusterArgs),
    /// Generate the syntactically similar neighbor set from clusters.
    BuildSynset(BuildSynsetArgs),
    /// Check domain/entity neighbor sets for syntactic distinctness.
    ValidateSets(ValidateSetsArgs),
    /// Score before/after evaluation logs into a utility report.
    Evaluate(EvaluateArgs),
    /// Relative utility drop between two utilities, in percent.
    Rud(RudArgs),
    /// Fit the toy model and run one unlearning method on it.
    ToyRun(ToyRunArgs),
    /// Train/test retain-set regularization sweep on the toy model.
    Sweep(SweepArgs),
    /// Re-emit CSV/SVG artifacts from saved traces or sweep tables.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskerArg {
    /// Deterministic offline masker (dictionary + capitalization + digits).
    Rule,
    /// Masking prompt against the configured text generator.
    Llm,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Ga,
    Npo,
    Dpo,
    Idk,
}

impl From<MethodArg> for LossMethod {
    fn from(value: MethodArg) -> Self {
        match value {
            MethodArg::Ga => LossMethod::Ga,
            MethodArg::Npo => LossMethod::Npo,
            MethodArg::Dpo => LossMethod::Dpo,
            MethodArg::Idk => LossMethod::Idk,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RegArg {
    None,
    Gd,
    Kl,
}

impl From<RegArg> for Regularizer {
    fn from(value: RegArg) -> Self {
        match value {
            RegArg::None => Regularizer::None,
            RegArg::Gd => Regularizer::Gd,
            RegArg::Kl => Regularizer::Kl,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RetainSetArg {
    Domain,
    Entity,
    SynSimilar,
}

impl From<RetainSetArg> for SetKind {
    fn from(value: RetainSetArg) -> Self {
        match value {
            RetainSetArg::Domain => SetKind::DomainNeighbor,
            RetainSetArg::Entity => SetKind::EntityNeighbor,
            RetainSetArg::SynSimilar => SetKind::SynSimilarNeighbor,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbeArg {
    /// Keep every generated pair without probing.
    Skip,
    /// Probe through the configured port (fixtures or endpoint).
    Port,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProbabilityModeArg {
    Arithmetic,
    Geometric,
}

/// Flags shared by commands that talk to model ports.
#[derive(Args, Clone, Default)]
struct PortArgs {
    /// Base URL of a JSON-over-HTTP inference server.
    #[arg(long)]
    endpoint: Option<String>,
    /// Strict-replay fixture directory (overrides UNLEARN_LAB_FIXTURES).
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Record live responses into the fixture directory.
    #[arg(long)]
    record: bool,
}

/// Flags shared by commands that mask questions.
#[derive(Args, Clone)]
struct MaskerArgs {
    #[arg(long, value_enum, default_value = "rule", ignore_case = true)]
    masker: MaskerArg,
    /// Entity dictionary for the rule masker (one surface form per line).
    #[arg(long)]
    entities: Option<PathBuf>,
}

/// Threshold overrides.
#[derive(Args, Clone, Copy, Default)]
struct ThresholdArgs {
    #[arg(long)]
    theta_high: Option<f64>,
    #[arg(long)]
    theta_low: Option<f64>,
    #[arg(long)]
    min_cluster_size: Option<usize>,
}

#[derive(Args)]
struct MaskArgs {
    /// Mask a single sentence and print the masked form.
    #[arg(long, conflicts_with_all = ["input", "output"])]
    text: Option<String>,
    /// Dataset (QA-pair JSONL) whose questions are masked.
    #[arg(long, requires = "output")]
    input: Option<PathBuf>,
    /// Output JSONL of {id, original, masked, mask_spans}.
    #[arg(long, requires = "input")]
    output: Option<PathBuf>,
    #[command(flatten)]
    masker: MaskerArgs,
    #[command(flatten)]
    ports: PortArgs,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
}

#[derive(Args)]
struct ClusterArgs {
    /// Forget-set dataset (QA-pair JSONL).
    #[arg(long)]
    input: PathBuf,
    /// Output JSON list of clusters.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    #[command(flatten)]
    masker: MaskerArgs,
    #[command(flatten)]
    ports: PortArgs,
}

#[derive(Args)]
struct BuildSynsetArgs {
    /// Forget-set dataset (QA-pair JSONL).
    #[arg(long)]
    forget: PathBuf,
    /// Candidate retain entities, one per line.
    #[arg(long)]
    candidates: PathBuf,
    /// Domain/entity neighbor datasets the output must stay distinct from.
    #[arg(long)]
    neighbors: Vec<PathBuf>,
    /// Answer table for offline generation: JSON [{template, entity, answer, aliases}].
    #[arg(long)]
    answers: Option<PathBuf>,
    /// Output dataset of generated syn-similar pairs.
    #[arg(long)]
    output: PathBuf,
    /// Pairs per cluster; defaults to the cluster size.
    #[arg(long)]
    pairs_per_cluster: Option<usize>,
    /// Generate offline from the answer table or via the generator port.
    #[arg(long, value_enum, default_value = "offline", ignore_case = true)]
    qa_gen: QaGenArg,
    /// Verify pairs by probing a model port.
    #[arg(long, value_enum, default_value = "skip", ignore_case = true)]
    probe: ProbeArg,
    #[arg(long, default_value_t = 64)]
    probe_max_tokens: usize,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    #[command(flatten)]
    masker: MaskerArgs,
    #[command(flatten)]
    ports: PortArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum QaGenArg {
    Offline,
    Llm,
}

#[derive(Args)]
struct ValidateSetsArgs {
    #[arg(long)]
    forget: PathBuf,
    #[arg(long, required = true)]
    neighbors: Vec<PathBuf>,
    /// Distinctness report output (JSON).
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    #[command(flatten)]
    masker: MaskerArgs,
    #[command(flatten)]
    ports: PortArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Dataset with reference answers and set tags (QA-pair JSONL).
    #[arg(long)]
    dataset: PathBuf,
    /// Evaluation log of the model before unlearning.
    #[arg(long)]
    before: PathBuf,
    /// Evaluation log of the model after unlearning.
    #[arg(long)]
    after: PathBuf,
    /// Utility report output (JSON).
    #[arg(long)]
    output: PathBuf,
    /// Optional per-set CSV table.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "arithmetic", ignore_case = true)]
    probability_mode: ProbabilityModeArg,
    #[command(flatten)]
    ports: PortArgs,
}

#[derive(Args)]
struct RudArgs {
    #[arg(long)]
    before: f64,
    #[arg(long)]
    after: f64,
}

#[derive(Args)]
struct ToyRunArgs {
    #[arg(long, value_enum, ignore_case = true)]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "none", ignore_case = true)]
    reg: RegArg,
    /// Retain set used for regularization.
    #[arg(long, value_enum, default_value = "syn-similar", ignore_case = true)]
    train_set: RetainSetArg,
    #[arg(long)]
    seed: Option<u64>,
    /// Step size; defaults to the per-method toy value.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 6000)]
    max_steps: usize,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    reg_weight: f64,
    /// Output directory for dataset/trace/summary artifacts.
    #[arg(long)]
    out_dir: PathBuf,
    /// Also emit the gradient-norm SVG chart.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Methods to average over.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = vec![MethodArg::Ga, MethodArg::Npo, MethodArg::Idk, MethodArg::Dpo], ignore_case = true)]
    methods: Vec<MethodArg>,
    /// Regularizers to sweep.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = vec![RegArg::Gd, RegArg::Kl], ignore_case = true)]
    regs: Vec<RegArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 6000)]
    max_steps: usize,
    #[arg(long)]
    out_dir: PathBuf,
    /// Also emit per-regularizer heatmap SVGs.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Saved run trace (JSONL) to convert to CSV + SVG.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Saved sweep table (JSON) to convert to CSVs + SVGs.
    #[arg(long)]
    sweep: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Parses arguments, runs the command, and maps errors onto exit codes.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

struct Context {
    config: RunConfig,
    workdir: PathBuf,
}

impl Context {
    fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.workdir.join(p)
        }
    }

    fn thresholds(&self, args: &ThresholdArgs) -> Result<Thresholds, LabError> {
        let thresholds = Thresholds {
            theta_high: args.theta_high.unwrap_or(self.config.thresholds.theta_high),
            theta_low: args.theta_low.unwrap_or(self.config.thresholds.theta_low),
            min_cluster_size: args
                .min_cluster_size
                .unwrap_or(self.config.thresholds.min_cluster_size),
        };
        thresholds.validate()?;
        Ok(thresholds)
    }

    fn fixtures_dir(&self, ports: &PortArgs) -> Option<PathBuf> {
        ports
            .fixtures
            .clone()
            .or_else(|| self.config.ports.fixtures.clone())
            .map(|p| self.path(&p))
    }

    fn endpoint(&self, ports: &PortArgs) -> Option<String> {
        ports
            .endpoint
            .clone()
            .or_else(|| self.config.ports.endpoint.clone())
    }

    fn text_generator(&self, ports: &PortArgs) -> Result<Box<dyn TextGenerator>, LabError> {
        self.port(ports, |http| Box::new(http) as Box<dyn TextGenerator>, |fx| Box::new(fx) as _, |rec| Box::new(rec) as _)
    }

    fn embedder(&self, ports: &PortArgs) -> Result<Option<Box<dyn Embedder>>, LabError> {
        self.optional_port(ports, |http| Box::new(http) as Box<dyn Embedder>, |fx| Box::new(fx) as _, |rec| Box::new(rec) as _)
    }

    fn judge(&self, ports: &PortArgs) -> Result<Option<Box<dyn NliJudge>>, LabError> {
        self.optional_port(ports, |http| Box::new(http) as Box<dyn NliJudge>, |fx| Box::new(fx) as _, |rec| Box::new(rec) as _)
    }

    fn port<T: ?Sized>(
        &self,
        ports: &PortArgs,
        from_http: impl Fn(HttpPort) -> Box<T>,
        from_fixture: impl Fn(FixturePort) -> Box<T>,
        from_recording: impl Fn(RecordingPort<HttpPort>) -> Box<T>,
    ) -> Result<Box<T>, LabError> {
        self.optional_port(ports, from_http, from_fixture, from_recording)?
            .ok_or_else(|| {
                LabError::Invalid(
                    "no port configured: pass --fixtures/--endpoint or set [ports] in the config"
                        .to_string(),
                )
            })
    }

    fn optional_port<T: ?Sized>(
        &self,
        ports: &PortArgs,
        from_http: impl Fn(HttpPort) -> Box<T>,
        from_fixture: impl Fn(FixturePort) -> Box<T>,
        from_recording: impl Fn(RecordingPort<HttpPort>) -> Box<T>,
    ) -> Result<Option<Box<T>>, LabError> {
        let fixtures = self.fixtures_dir(ports);
        let endpoint = self.endpoint(ports);
        let concurrency = self.config.ports.max_concurrency;
        Ok(match (ports.record, endpoint, fixtures) {
            (true, Some(url), Some(dir)) => {
                let http = HttpPort::with_limits(&url, concurrency, std::time::Duration::from_secs(30));
                Some(from_recording(RecordingPort::new(http, FixtureStore::open(dir))))
            }
            (true, _, _) => {
                return Err(LabError::Invalid(
                    "--record needs both --endpoint and --fixtures".to_string(),
                ))
            }
            (false, _, Some(dir)) => Some(from_fixture(FixturePort::open(dir))),
            (false, Some(url), None) => Some(from_http(HttpPort::with_limits(
                &url,
                concurrency,
                std::time::Duration::from_secs(30),
            ))),
            (false, None, None) => None,
        })
    }

    /// Masks a batch of questions with the selected masker.
    fn mask_questions(
        &self,
        masker_args: &MaskerArgs,
        ports: &PortArgs,
        questions: &[(String, String)],
    ) -> Result<Vec<MaskRecord>, LabError> {
        match masker_args.masker {
            MaskerArg::Rule => {
                let masker = self.rule_masker(masker_args)?;
                questions
                    .iter()
                    .map(|(id, q)| {
                        Ok(MaskRecord::new(id, &textsim::mask_entities(q, &masker)?))
                    })
                    .collect()
            }
            MaskerArg::Llm => {
                let generator = self.text_generator(ports)?;
                let masker = LlmMasker::new(generator.as_ref());
                questions
                    .iter()
                    .map(|(id, q)| {
                        Ok(MaskRecord::new(id, &textsim::mask_entities(q, &masker)?))
                    })
                    .collect()
            }
        }
    }

    fn rule_masker(&self, masker_args: &MaskerArgs) -> Result<RuleMasker, LabError> {
        Ok(match &masker_args.entities {
            Some(path) => {
                RuleMasker::with_entities(dataset::read_list(&self.path(path))?)
            }
            None => RuleMasker::new(),
        })
    }

    /// Runs `f` with a reference to the selected masker.
    fn with_masker<R>(
        &self,
        masker_args: &MaskerArgs,
        ports: &PortArgs,
        f: impl FnOnce(&dyn EntityMasker) -> Result<R, LabError>,
    ) -> Result<R, LabError> {
        match masker_args.masker {
            MaskerArg::Rule => f(&self.rule_masker(masker_args)?),
            MaskerArg::Llm => {
                let generator = self.text_generator(ports)?;
                f(&LlmMasker::new(generator.as_ref()))
            }
        }
    }
}

fn execute(cli: Cli) -> Result<(), LabError> {
    let config = RunConfig::load(cli.config.as_deref())?;
    let workdir = cli
        .workdir
        .clone()
        .unwrap_or_else(|| config.io.workdir.clone());
    let ctx = Context { config, workdir };

    match cli.command {
        Command::Sim(args) => {
            let score = textsim::similarity(&args.a, &args.b);
            println!("{:.4}", score.value);
            Ok(())
        }
        Command::Rud(args) => {
            let rud = metrics::relative_utility_drop(args.before, args.after)?;
            println!("{rud:.2}");
            Ok(())
        }
        Command::Mask(args) => cmd_mask(&ctx, args),
        Command::Cluster(args) => cmd_cluster(&ctx, args),
        Command::BuildSynset(args) => cmd_build_synset(&ctx, args),
        Command::ValidateSets(args) => cmd_validate_sets(&ctx, args),
        Command::Evaluate(args) => cmd_evaluate(&ctx, args),
        Command::ToyRun(args) => cmd_toy_run(&ctx, args),
        Command::Sweep(args) => cmd_sweep(&ctx, args),
        Command::Report(args) => cmd_report(&ctx, args),
    }
}

fn cmd_mask(ctx: &Context, args: MaskArgs) -> Result<(), LabError> {
    match (&args.text, &args.input, &args.output) {
        (Some(text), _, _) => {
            let records =
                ctx.mask_questions(&args.masker, &args.ports, &[("text".to_string(), text.clone())])?;
            println!("{}", records[0].masked);
            Ok(())
        }
        (None, Some(input), Some(output)) => {
            let pairs = dataset::read_qa_pairs(&ctx.path(input))?;
            let questions: Vec<(String, String)> = pairs
                .iter()
                .map(|p| (p.id.clone(), p.question.clone()))
                .collect();
            let records = ctx.mask_questions(&args.masker, &args.ports, &questions)?;
            dataset::write_jsonl(&ctx.path(output), &records)?;
            println!("masked {} questions", records.len());
            Ok(())
        }
        _ => Err(LabError::Invalid(
            "mask needs either --text or --input with --output".to_string(),
        )),
    }
}

fn cmd_cluster(ctx: &Context, args: ClusterArgs) -> Result<(), LabError> {
    let thresholds = ctx.thresholds(&args.thresholds)?;
    let forget = dataset::read_qa_pairs(&ctx.path(&args.input))?;
    let clusters = ctx.with_masker(&args.masker, &args.ports, |masker| {
        Ok(neighborset::cluster_forget_questions(
            &forget,
            &thresholds,
            masker,
        )?)
    })?;
    report::write_json(&ctx.path(&args.output), &clusters)?;
    println!("{} clusters", clusters.len());
    for cluster in &clusters {
        println!(
            "cluster {}: {} members, template {:?}",
            cluster.cluster_id,
            cluster.member_ids.len(),
            cluster.template.masked
        );
    }
    Ok(())
}

#[derive(Debug, Deserialize)]
struct AnswerEntry {
    template: String,
    entity: String,
    answer: String,
    #[serde(default)]
    aliases: Vec<String>,
}

fn cmd_build_synset(ctx: &Context, args: BuildSynsetArgs) -> Result<(), LabError> {
    let thresholds = ctx.thresholds(&args.thresholds)?;
    let forget = dataset::read_qa_pairs(&ctx.path(&args.forget))?;
    let candidates_raw = dataset::read_list(&ctx.path(&args.candidates))?;

    let mut other_neighbors = Vec::new();
    for path in &args.neighbors {
        other_neighbors.extend(dataset::read_qa_pairs(&ctx.path(path))?);
    }
    let mut excluded: Vec<String> = forget.iter().map(|p| p.entity.clone()).collect();
    excluded.extend(other_neighbors.iter().map(|p| p.entity.clone()));
    let candidates = neighborset::select_candidate_entities(&candidates_raw, &excluded);

    let generated = ctx.with_masker(&args.masker, &args.ports, |masker| {
        let clusters = neighborset::cluster_forget_questions(&forget, &thresholds, masker)?;
        println!("{} clusters from {} forget questions", clusters.len(), forget.len());
        let inputs = SynthesisInputs {
            clusters: &clusters,
            candidates: &candidates,
            other_neighbors: &other_neighbors,
            thresholds,
            pairs_per_cluster: args.pairs_per_cluster,
        };
        match args.qa_gen {
            QaGenArg::Offline => {
                let path = args.answers.as_ref().ok_or_else(|| {
                    LabError::Invalid(
                        "offline generation needs --answers (or use --qa-gen llm)".to_string(),
                    )
                })?;
                let text = std::fs::read_to_string(ctx.path(path))
                    .map_err(|e| LabError::io(&ctx.path(path), e))?;
                let entries: Vec<AnswerEntry> =
                    serde_json::from_str(&text).map_err(|source| LabError::Parse {
                        path: path.display().to_string(),
                        line: 0,
                        source,
                    })?;
                let mut table = TemplateQaGenerator::new();
                for entry in entries {
                    table.insert(entry.template, entry.entity, entry.answer, entry.aliases);
                }
                Ok(neighborset::generate_syn_similar_pairs(&inputs, &table, masker)?)
            }
            QaGenArg::Llm => {
                let generator = ctx.text_generator(&args.ports)?;
                let qa_gen = crate::clients::LlmQaGenerator::new(generator.as_ref());
                Ok(neighborset::generate_syn_similar_pairs(&inputs, &qa_gen, masker)?)
            }
        }
    })?;
    println!("generated {} pairs", generated.len());

    let kept = match args.probe {
        ProbeArg::Skip => generated,
        ProbeArg::Port => {
            let generator = ctx.text_generator(&args.ports)?;
            let outcome = neighborset::probe_filter(
                generated,
                generator.as_ref(),
                &ContainmentMatcher,
                args.probe_max_tokens,
            )?;
            println!("probe kept {} and dropped {}", outcome.kept.len(), outcome.dropped.len());
            outcome.kept
        }
    };
    dataset::write_qa_pairs(&ctx.path(&args.output), &kept)?;
    println!("wrote {} pairs", kept.len());
    Ok(())
}

fn cmd_validate_sets(ctx: &Context, args: ValidateSetsArgs) -> Result<(), LabError> {
    let thresholds = ctx.thresholds(&args.thresholds)?;
    let forget = dataset::read_qa_pairs(&ctx.path(&args.forget))?;
    let mut neighbors = Vec::new();
    for path in &args.neighbors {
        neighbors.extend(dataset::read_qa_pairs(&ctx.path(path))?);
    }
    let report_data = ctx.with_masker(&args.masker, &args.ports, |masker| {
        Ok(neighborset::validate_distinctness(
            &neighbors,
            &forget,
            &thresholds,
            masker,
        )?)
    })?;
    report::write_json(&ctx.path(&args.output), &report_data)?;
    println!(
        "checked {} pairs, {} violations",
        report_data.checked_pairs,
        report_data.violations.len()
    );
    Ok(())
}

fn cmd_evaluate(ctx: &Context, args: EvaluateArgs) -> Result<(), LabError> {
    let pairs = dataset::read_qa_pairs(&ctx.path(&args.dataset))?;
    let before = evallog::read_eval_log(&ctx.path(&args.before))?;
    let after = evallog::read_eval_log(&ctx.path(&args.after))?;

    let embedder = ctx.embedder(&args.ports)?;
    let judge = ctx.judge(&args.ports)?;
    let ports = ScoringPorts {
        embedder: embedder.as_deref(),
        judge: judge.as_deref(),
        probability_mode: match args.probability_mode {
            ProbabilityModeArg::Arithmetic => ProbabilityMode::ArithmeticMean,
            ProbabilityModeArg::Geometric => ProbabilityMode::GeometricMean,
        },
    };
    let report_data = evallog::evaluate(&pairs, &before, &after, &ports)?;
    report::write_json(&ctx.path(&args.output), &report_data)?;
    if let Some(csv_path) = &args.csv {
        dataset::write_atomic(&ctx.path(csv_path), report::report_csv(&report_data).as_bytes())?;
    }
    println!("model_utility {:.4}", report_data.model_utility);
    println!("forget_efficacy {:.4}", report_data.forget_efficacy);
    for (kind, rud) in &report_data.rud {
        println!("rud {} {:.2}", kind.as_str(), rud);
    }
    Ok(())
}

fn toy_spec(
    ctx: &Context,
    method: LossMethod,
    regularizer: Regularizer,
    beta: Option<f64>,
    reg_weight: f64,
) -> Result<LossSpec, LabError> {
    let beta = beta
        .or(ctx.config.loss.beta)
        .or_else(|| method.needs_beta().then_some(0.1));
    Ok(LossSpec::new(method, regularizer, beta, reg_weight)
        .map_err(unlearn_core::toylab::ToyLabError::from)?)
}

fn prepare_toy(
    ctx: &Context,
    seed: Option<u64>,
) -> Result<(ToyCorpus, toylab::FitResult), LabError> {
    let seed = seed.unwrap_or(ctx.config.seed);
    let corpus = toylab::build_toy_corpus(seed, &CorpusSizes::default())?;
    let fit = toylab::fit_initial(
        toylab::init_model(&corpus),
        &corpus.facts,
        &toylab::FitParams::default(),
    )?;
    println!(
        "corpus seed {seed}: {} facts, fitted in {} epochs",
        corpus.facts.len(),
        fit.epochs
    );
    Ok((corpus, fit))
}

fn cmd_toy_run(ctx: &Context, args: ToyRunArgs) -> Result<(), LabError> {
    let method: LossMethod = args.method.into();
    let regularizer: Regularizer = args.reg.into();
    let spec = toy_spec(ctx, method, regularizer, args.beta, args.reg_weight)?;
    let (corpus, fit) = prepare_toy(ctx, args.seed)?;
    let out_dir = ctx.path(&args.out_dir);

    let params = UnlearnParams {
        lr: args.lr.unwrap_or(UnlearnParams::for_method(method).lr),
        max_steps: args.max_steps,
        ..UnlearnParams::for_method(method)
    };
    let retain = match regularizer {
        Regularizer::None => Vec::new(),
        _ => corpus.facts_of(args.train_set.into()),
    };

    let outcome = toylab::unlearn(fit.model.clone(), &spec, &corpus, &retain, &params);
    let (run, band_error) = match outcome {
        Ok(run) => (run, None),
        Err(toylab::ToyLabError::BandNeverReached { steps, run }) => {
            (*run, Some(steps))
        }
        Err(other) => return Err(other.into()),
    };

    write_toy_artifacts(ctx, &out_dir, &corpus, &fit, &run, &spec, &params, args.svg)?;
    match band_error {
        None => {
            println!(
                "stopped in the efficacy band at step {}",
                run.band_step.unwrap_or(0)
            );
            Ok(())
        }
        Some(steps) => Err(LabError::Invalid(format!(
            "forget efficacy never entered the band after {steps} steps (partial artifacts written)"
        ))),
    }
}

#[allow(clippy::too_many_arguments)]
fn write_toy_artifacts(
    ctx: &Context,
    out_dir: &Path,
    corpus: &ToyCorpus,
    fit: &toylab::FitResult,
    run: &UnlearnRun,
    spec: &LossSpec,
    params: &UnlearnParams,
    svg: bool,
) -> Result<(), LabError> {
    dataset::write_qa_pairs(&out_dir.join("dataset.jsonl"), &corpus.qa_pairs())?;
    report::write_trace(&out_dir.join("trace.jsonl"), &run.trace)?;
    dataset::write_atomic(
        &out_dir.join("trace.csv"),
        report::trace_csv(&run.trace).as_bytes(),
    )?;

    let summary = ToyRunSummary {
        method: spec.method,
        regularizer: spec.regularizer,
        seed: corpus.seed,
        lr: params.lr,
        fit_epochs: fit.epochs,
        steps: run.trace.steps.len(),
        band_step: run.band_step,
        forget_efficacy: toylab::toy_forget_efficacy(
            &run.model,
            &corpus.facts_of(SetKind::Forget),
        ),
        utility_before: toylab::utility_by_kind(&fit.model, corpus),
        utility_after: toylab::utility_by_kind(&run.model, corpus),
        rud: toylab::rud_by_kind(&fit.model, &run.model, corpus),
    };
    report::write_json(&out_dir.join("summary.json"), &summary)?;
    if svg {
        dataset::write_atomic(
            &out_dir.join("gradient_norms.svg"),
            report::gradient_norm_svg(&run.trace).as_bytes(),
        )?;
    }
    for (kind, rud) in &summary.rud {
        println!("rud {} {:.2}", kind.as_str(), rud);
    }
    let _ = ctx;
    Ok(())
}

fn cmd_sweep(ctx: &Context, args: SweepArgs) -> Result<(), LabError> {
    let methods: Vec<LossMethod> = args.methods.iter().map(|&m| m.into()).collect();
    let regs: Vec<Regularizer> = args.regs.iter().map(|&r| r.into()).collect();
    if regs.contains(&Regularizer::None) {
        return Err(LabError::Invalid(
            "sweep regularizers must be gd and/or kl".to_string(),
        ));
    }
    let (corpus, fit) = prepare_toy(ctx, args.seed)?;
    let out_dir = ctx.path(&args.out_dir);

    let table = toylab::regularization_sweep(&fit.model, &corpus, &methods, &regs, |method| {
        UnlearnParams {
            max_steps: args.max_steps,
            ..UnlearnParams::for_method(method)
        }
    })?;

    report::write_json(&out_dir.join("sweep.json"), &table)?;
    for &reg in &regs {
        let name = reg.as_str().to_lowercase();
        dataset::write_atomic(
            &out_dir.join(format!("sweep_{name}.csv")),
            report::sweep_csv(&table, reg).as_bytes(),
        )?;
        if args.svg {
            dataset::write_atomic(
                &out_dir.join(format!("heatmap_{name}.svg")),
                report::heatmap_svg(&table, reg).as_bytes(),
            )?;
        }
        println!("{} grid (rows: test set, cols: train set):", reg.as_str());
        let grid = table.grid(reg);
        for (row, test) in toylab::SWEEP_SET_KINDS.iter().enumerate() {
            println!(
                "  {:<22} {:>8.2} {:>8.2} {:>8.2}",
                test.as_str(),
                grid[row][0],
                grid[row][1],
                grid[row][2]
            );
        }
    }
    Ok(())
}

fn cmd_report(ctx: &Context, args: ReportArgs) -> Result<(), LabError> {
    if args.trace.is_none() && args.sweep.is_none() {
        return Err(LabError::Invalid(
            "report needs --trace and/or --sweep".to_string(),
        ));
    }
    let out_dir = ctx.path(&args.out_dir);
    if let Some(trace_path) = &args.trace {
        let trace = report::read_trace(&ctx.path(trace_path))?;
        dataset::write_atomic(
            &out_dir.join("trace.csv"),
            report::trace_csv(&trace).as_bytes(),
        )?;
        dataset::write_atomic(
            &out_dir.join("gradient_norms.svg"),
            report::gradient_norm_svg(&trace).as_bytes(),
        )?;
        println!("trace artifacts written for {} steps", trace.steps.len());
    }
    if let Some(sweep_path) = &args.sweep {
        let text = std::fs::read_to_string(ctx.path(sweep_path))
            .map_err(|e| LabError::io(&ctx.path(sweep_path), e))?;
        let table: toylab::SweepTable =
            serde_json::from_str(&text).map_err(|source| LabError::Parse {
                path: sweep_path.display().to_string(),
                line: 0,
                source,
            })?;
        let regs: Vec<Regularizer> = {
            let mut seen = Vec::new();
            for cell in &table.averaged {
                if !seen.contains(&cell.regularizer) {
                    seen.push(cell.regularizer);
                }
            }
            seen
        };
        for reg in regs {
            let name = reg.as_str().to_lowercase();
            dataset::write_atomic(
                &out_dir.join(format!("sweep_{name}.csv")),
                report::sweep_csv(&table, reg).as_bytes(),
            )?;
            dataset::write_atomic(
                &out_dir.join(format!("heatmap_{name}.svg")),
                report::heatmap_svg(&table, reg).as_bytes(),
            )?;
        }
        println!("sweep artifacts written");
    }
    Ok(())
}
