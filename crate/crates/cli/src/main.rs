//! Command-line entry point for the reasoning pipeline: dataset
//! preprocessing, encoder training, single-question inference, and batch
//! evaluation. Exit codes: 0 success, 2 usage or validation error, 3 runtime
//! numeric failure, 4 remote-backend failure.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use deduct_core::data::{
    cluster_theorems, generate_synthetic, load_eval, load_training, save_training, DataError,
    SyntheticConfig,
};
use deduct_core::embed::{EmbedError, Embedder, EmbedderConfig};
use deduct_core::engine::{
    run, EncoderKind, EngineConfig, EngineDeps, Termination, TraceFile,
};
use deduct_core::eval::{
    evaluate, EvalConfig, EvalError, MatchMode, ReportFormat,
};
use deduct_core::gnn::{load_checkpoint, save_checkpoint, GnnConfig, GnnError};
use deduct_core::llm::{
    load_script, LlmBackendConfig, LlmClient, LlmError, RemoteLlmConfig,
};
use deduct_core::matcher::TheoremLibrary;
use deduct_core::trainer::{balance, build_step_samples, train, TrainConfig, TrainError};

const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_REMOTE: u8 = 4;

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Display) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.to_string(),
        }
    }

    fn runtime(message: impl Display) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.to_string(),
        }
    }

    fn remote(message: impl Display) -> Self {
        Self {
            code: EXIT_REMOTE,
            message: message.to_string(),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::usage(e)
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::RemoteUnavailable { .. } => CliError::remote(e),
            _ => CliError::usage(e),
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        match e {
            LlmError::RemoteUnavailable { .. } => CliError::remote(e),
            LlmError::ScriptExhausted { .. } | LlmError::ScriptMiss { .. } => CliError::runtime(e),
            _ => CliError::usage(e),
        }
    }
}

impl From<GnnError> for CliError {
    fn from(e: GnnError) -> Self {
        match e {
            GnnError::ZeroNorm { .. } | GnnError::TapeMismatch(_) => CliError::runtime(e),
            _ => CliError::usage(e),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Gnn(inner) => inner.into(),
            _ => CliError::usage(e),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Llm(inner) => inner.into(),
            EvalError::Embed(inner) => inner.into(),
            _ => CliError::usage(e),
        }
    }
}

impl From<deduct_core::matcher::MatchError> for CliError {
    fn from(e: deduct_core::matcher::MatchError) -> Self {
        CliError::usage(e)
    }
}

impl From<deduct_core::graph::GraphError> for CliError {
    fn from(e: deduct_core::graph::GraphError) -> Self {
        CliError::usage(e)
    }
}

#[derive(Parser)]
#[command(name = "deduct", version, about = "Graph-guided neuro-symbolic reasoning pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EncoderArg {
    Gnn,
    Average,
}

impl From<EncoderArg> for EncoderKind {
    fn from(a: EncoderArg) -> Self {
        match a {
            EncoderArg::Gnn => EncoderKind::Gnn,
            EncoderArg::Average => EncoderKind::Average,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendArg {
    Remote,
    Scripted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    MarkdownTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MatchModeArg {
    Numeric,
    NormalizedText,
}

#[derive(Subcommand)]
enum Command {
    /// Build a theorem library: either cluster annotated candidates or
    /// generate the synthetic benchmark.
    Preprocess {
        #[arg(long)]
        synthetic: bool,
        #[arg(long)]
        n_theorems: Option<usize>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for synthetic mode (train.jsonl + library.json).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        /// JSON array of candidate theorem statements (clustering mode).
        #[arg(long)]
        candidates: Option<PathBuf>,
        #[arg(long)]
        out_library: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Train the relational encoder with the contrastive objective.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        library: PathBuf,
        /// Flat TOML file; unknown keys are rejected. Flags are not needed:
        /// all hyperparameters live here.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_checkpoint: PathBuf,
        /// Per-epoch stats as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        dim: usize,
    },
    /// Answer one question; prints the final answer to stdout.
    Infer {
        #[arg(long)]
        question: String,
        /// JSON array of premise strings.
        #[arg(long)]
        premises: PathBuf,
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = BackendArg::Scripted)]
        backend: BackendArg,
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, value_enum)]
        encoder: Option<EncoderArg>,
        #[arg(long)]
        trace_out: Option<PathBuf>,
        #[arg(long)]
        dot_out: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        max_steps: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
    },
    /// Score a test set across encoder configurations.
    Eval {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated: gnn,average
        #[arg(long, default_value = "gnn,average")]
        encoders: String,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Json)]
        format: FormatArg,
        #[arg(long, value_enum, default_value_t = MatchModeArg::NormalizedText)]
        match_mode: MatchModeArg,
        #[arg(long, value_enum, default_value_t = BackendArg::Scripted)]
        backend: BackendArg,
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        max_steps: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
    },
}

/// Flat training config file. Every field has the module default; unknown
/// keys are rejected so typos fail loudly.
#[derive(Debug, Deserialize)]
#[serde(default)]
struct TrainFileConfig {
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    temperature: f64,
    negatives: usize,
    seed: u64,
    balance_labels: bool,
    samples_per_label_min: usize,
    samples_per_label_max: usize,
    layers: usize,
    hidden_dim: usize,
}

impl Default for TrainFileConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            temperature: t.temperature,
            negatives: t.negatives,
            seed: t.seed,
            balance_labels: t.balance_labels,
            samples_per_label_min: t.samples_per_label_min,
            samples_per_label_max: t.samples_per_label_max,
            layers: 2,
            hidden_dim: 32,
        }
    }
}

impl TrainFileConfig {
    fn validate(&self) -> Result<(), CliError> {
        if self.epochs == 0 {
            return Err(CliError::usage("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(CliError::usage("batch_size must be at least 1"));
        }
        if self.temperature <= 0.0 {
            return Err(CliError::usage("temperature must be positive"));
        }
        if self.layers == 0 || self.hidden_dim == 0 {
            return Err(CliError::usage("layers and hidden_dim must be at least 1"));
        }
        if self.samples_per_label_min > self.samples_per_label_max {
            return Err(CliError::usage(
                "samples_per_label_min must not exceed samples_per_label_max",
            ));
        }
        Ok(())
    }

    fn split(&self, input_dim: usize) -> (TrainConfig, GnnConfig) {
        (
            TrainConfig {
                epochs: self.epochs,
                batch_size: self.batch_size,
                learning_rate: self.learning_rate,
                temperature: self.temperature,
                negatives: self.negatives,
                seed: self.seed,
                balance_labels: self.balance_labels,
                samples_per_label_min: self.samples_per_label_min,
                samples_per_label_max: self.samples_per_label_max,
            },
            GnnConfig::new(self.layers, self.hidden_dim, input_dim, input_dim, self.seed),
        )
    }
}

const TRAIN_CONFIG_KEYS: &[&str] = &[
    "epochs",
    "batch_size",
    "learning_rate",
    "temperature",
    "negatives",
    "seed",
    "balance_labels",
    "samples_per_label_min",
    "samples_per_label_max",
    "layers",
    "hidden_dim",
];

fn parse_train_config(text: &str) -> Result<TrainFileConfig, CliError> {
    let table: toml::Table =
        toml::from_str(text).map_err(|e| CliError::usage(format!("bad config: {e}")))?;
    for key in table.keys() {
        if !TRAIN_CONFIG_KEYS.contains(&key.as_str()) {
            return Err(CliError::usage(format!("unknown config key {key:?}")));
        }
    }
    table
        .try_into()
        .map_err(|e| CliError::usage(format!("bad config: {e}")))
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(CliError::usage(format!(
            "{what} not found: {}",
            path.display()
        )));
    }
    Ok(())
}

fn local_embedder(dim: usize) -> Result<Embedder, CliError> {
    Ok(Embedder::new(EmbedderConfig::local(dim))?)
}

fn read_json_string_array(path: &Path, what: &str) -> Result<Vec<String>, CliError> {
    require_file(path, what)?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("{what} must be a JSON array of strings: {e}")))
}

fn backend_config(
    backend: BackendArg,
    script: Option<&PathBuf>,
    endpoint: Option<&String>,
    model: Option<&String>,
) -> Result<LlmBackendConfig, CliError> {
    match backend {
        BackendArg::Scripted => {
            let path = script
                .ok_or_else(|| CliError::usage("--backend scripted requires --script"))?;
            require_file(path, "script file")?;
            Ok(LlmBackendConfig::Scripted(load_script(path)?))
        }
        BackendArg::Remote => {
            let endpoint = endpoint
                .ok_or_else(|| CliError::usage("--backend remote requires --endpoint"))?;
            let model =
                model.ok_or_else(|| CliError::usage("--backend remote requires --model"))?;
            Ok(LlmBackendConfig::Remote(RemoteLlmConfig {
                endpoint: endpoint.clone(),
                model: model.clone(),
                temperature: 0.0,
                timeout_ms: 30_000,
                max_retries: 2,
                api_key_env: "DEDUCT_API_KEY".to_string(),
            }))
        }
    }
}

fn cmd_preprocess(
    synthetic: bool,
    n_theorems: Option<usize>,
    chains: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    dim: usize,
    candidates: Option<PathBuf>,
    out_library: Option<PathBuf>,
    threshold: Option<f64>,
) -> Result<(), CliError> {
    if synthetic {
        let n = n_theorems.ok_or_else(|| CliError::usage("--synthetic requires --n-theorems"))?;
        let chains = chains.ok_or_else(|| CliError::usage("--synthetic requires --chains"))?;
        let seed = seed.ok_or_else(|| CliError::usage("--synthetic requires --seed"))?;
        let out = out.ok_or_else(|| CliError::usage("--synthetic requires --out"))?;
        if n < 2 {
            return Err(CliError::usage("--n-theorems must be at least 2"));
        }
        std::fs::create_dir_all(&out)
            .map_err(|e| CliError::usage(format!("cannot create {}: {e}", out.display())))?;
        let cfg = SyntheticConfig {
            dim,
            ..SyntheticConfig::new(n, chains, seed)
        };
        let (samples, library) = generate_synthetic(&cfg)?;
        save_training(&out.join("train.jsonl"), &samples)?;
        library.save(&out.join("library.json"))?;
        eprintln!(
            "wrote {} training samples and {} theorems to {}",
            samples.len(),
            library.len(),
            out.display()
        );
        Ok(())
    } else {
        let candidates_path =
            candidates.ok_or_else(|| CliError::usage("provide --synthetic or --candidates"))?;
        let out_library =
            out_library.ok_or_else(|| CliError::usage("clustering requires --out-library"))?;
        let threshold = threshold.ok_or_else(|| CliError::usage("clustering requires --threshold"))?;
        if !(threshold > 0.0 && threshold <= 1.0) {
            return Err(CliError::usage(format!(
                "--threshold must be in (0, 1], got {threshold}"
            )));
        }
        let statements = read_json_string_array(&candidates_path, "candidates file")?;
        let embedder = local_embedder(dim)?;
        let library = cluster_theorems(&statements, &embedder, threshold)?;
        library.save(&out_library)?;
        eprintln!(
            "clustered {} candidates into {} theorems",
            statements.len(),
            library.len()
        );
        Ok(())
    }
}

fn cmd_train(
    train_path: &Path,
    library_path: &Path,
    config_path: Option<&PathBuf>,
    out_checkpoint: &Path,
    log_path: Option<&PathBuf>,
    dim: usize,
) -> Result<(), CliError> {
    require_file(train_path, "training file")?;
    require_file(library_path, "library file")?;
    let file_cfg: TrainFileConfig = match config_path {
        Some(path) => {
            require_file(path, "config file")?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
            parse_train_config(&text)?
        }
        None => TrainFileConfig::default(),
    };
    file_cfg.validate()?;
    let embedder = local_embedder(dim)?;
    let library = TheoremLibrary::load(library_path, &embedder)?;
    let samples = load_training(train_path)?;
    let (train_cfg, gnn_cfg) = file_cfg.split(library.dim());
    let step_samples = build_step_samples(&samples, &library, &embedder)?;
    let step_samples = balance(step_samples, &train_cfg);
    let (params, stats) = train(&step_samples, &library, &train_cfg, &gnn_cfg)?;
    save_checkpoint(out_checkpoint, &gnn_cfg, &params)?;
    let log_lines: String = stats
        .iter()
        .map(|s| serde_json::to_string(s).expect("serialize") + "\n")
        .collect();
    match log_path {
        Some(path) => std::fs::write(path, &log_lines)
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?,
        None => eprint!("{log_lines}"),
    }
    if let Some(last) = stats.last() {
        eprintln!(
            "trained {} epochs; final retrieval top-1 {:.4}",
            stats.len(),
            last.retrieval_top1
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_infer(
    question: &str,
    premises_path: &Path,
    library_path: &Path,
    checkpoint: Option<&PathBuf>,
    backend: BackendArg,
    script: Option<&PathBuf>,
    encoder: Option<EncoderArg>,
    trace_out: Option<&PathBuf>,
    dot_out: Option<&PathBuf>,
    max_steps: usize,
    dim: usize,
    endpoint: Option<&String>,
    model: Option<&String>,
) -> Result<(), CliError> {
    require_file(library_path, "library file")?;
    let premises = read_json_string_array(premises_path, "premises file")?;
    let llm_cfg = backend_config(backend, script, endpoint, model)?;
    let embedder = local_embedder(dim)?;
    let library = TheoremLibrary::load(library_path, &embedder)?;

    let checkpoint_data = match checkpoint {
        Some(path) => {
            require_file(path, "checkpoint file")?;
            Some(load_checkpoint(path)?)
        }
        None => None,
    };
    let encoder = encoder
        .map(EncoderKind::from)
        .unwrap_or(if checkpoint_data.is_some() {
            EncoderKind::Gnn
        } else {
            EncoderKind::Average
        });
    if encoder == EncoderKind::Gnn && checkpoint_data.is_none() {
        return Err(CliError::usage("--encoder gnn requires --checkpoint"));
    }
    let engine_cfg = EngineConfig {
        max_inference_steps: max_steps,
        encoder,
        ..EngineConfig::default()
    };
    let deps = EngineDeps {
        library: &library,
        params: checkpoint_data.as_ref().map(|(_, p)| p),
        gnn_cfg: checkpoint_data.as_ref().map(|(c, _)| c),
        embedder: &embedder,
    };
    let mut llm = LlmClient::new(&llm_cfg)?;
    let result = match run(question, &premises, &deps, &engine_cfg, &mut llm) {
        Ok(r) => r,
        Err(e) => {
            let code = CliError::from_engine_kind(e.kind);
            return Err(code);
        }
    };
    if let Some(path) = trace_out {
        let trace = TraceFile::from_run(question, &premises, &engine_cfg, dim, &result);
        std::fs::write(path, serde_json::to_string_pretty(&trace).expect("serialize"))
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
    }
    if let Some(path) = dot_out {
        std::fs::write(path, result.final_graph.to_dot()?)
            .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
    }
    match (&result.final_answer, result.termination) {
        (Some(answer), _) => println!("{answer}"),
        (None, Termination::MaxSteps) => eprintln!("no answer: step budget exhausted"),
        (None, Termination::BelowScoreFloor) => eprintln!("no answer: theorem score below floor"),
        (None, Termination::Answered) => unreachable!("answered implies an answer"),
    }
    Ok(())
}

impl CliError {
    fn from_engine_kind(kind: deduct_core::engine::EngineErrorKind) -> CliError {
        use deduct_core::engine::EngineErrorKind as K;
        match kind {
            K::Llm(e) => e.into(),
            K::Embed(e) => e.into(),
            K::Gnn(e) => e.into(),
            K::Graph(e) => e.into(),
            K::Match(e) => e.into(),
            K::MissingParams => CliError::usage("encoder=gnn requires checkpoint parameters"),
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    test_path: &Path,
    library_path: &Path,
    checkpoint: Option<&PathBuf>,
    encoders: &str,
    repeats: usize,
    report_path: &Path,
    format: FormatArg,
    match_mode: MatchModeArg,
    backend: BackendArg,
    script: Option<&PathBuf>,
    max_steps: usize,
    dim: usize,
    endpoint: Option<&String>,
    model: Option<&String>,
) -> Result<(), CliError> {
    require_file(test_path, "test file")?;
    require_file(library_path, "library file")?;
    if repeats == 0 {
        return Err(CliError::usage("--repeats must be at least 1"));
    }
    let encoder_kinds: Vec<EncoderKind> = encoders
        .split(',')
        .map(|name| match name.trim() {
            "gnn" => Ok(EncoderKind::Gnn),
            "average" => Ok(EncoderKind::Average),
            other => Err(CliError::usage(format!(
                "unknown encoder {other:?}; expected gnn or average"
            ))),
        })
        .collect::<Result<_, _>>()?;
    let llm_cfg = backend_config(backend, script, endpoint, model)?;
    let embedder = local_embedder(dim)?;
    let library = TheoremLibrary::load(library_path, &embedder)?;
    let samples = load_eval(test_path)?;
    let checkpoint_data = match checkpoint {
        Some(path) => {
            require_file(path, "checkpoint file")?;
            Some(load_checkpoint(path)?)
        }
        None => None,
    };
    if encoder_kinds.contains(&EncoderKind::Gnn) && checkpoint_data.is_none() {
        return Err(CliError::usage("encoder gnn requires --checkpoint"));
    }
    let engine_cfg = EngineConfig {
        max_inference_steps: max_steps,
        ..EngineConfig::default()
    };
    let eval_cfg = EvalConfig {
        repeats,
        match_mode: match match_mode {
            MatchModeArg::Numeric => MatchMode::Numeric,
            MatchModeArg::NormalizedText => MatchMode::NormalizedText,
        },
        encoders: encoder_kinds,
    };
    let report = evaluate(
        &samples,
        &library,
        checkpoint_data.as_ref().map(|(_, p)| p),
        checkpoint_data.as_ref().map(|(c, _)| c),
        &embedder,
        &llm_cfg,
        &engine_cfg,
        &eval_cfg,
    )?;
    let report_format = match format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::MarkdownTable => ReportFormat::MarkdownTable,
    };
    deduct_core::eval::write_report(&report, report_path, report_format)?;
    for row in &report.rows {
        eprintln!(
            "{}: accuracy {:.4} over {} samples (mean {:.2} steps)",
            row.config, row.accuracy, row.n_samples, row.mean_steps
        );
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Preprocess {
            synthetic,
            n_theorems,
            chains,
            seed,
            out,
            dim,
            candidates,
            out_library,
            threshold,
        } => cmd_preprocess(
            synthetic, n_theorems, chains, seed, out, dim, candidates, out_library, threshold,
        ),
        Command::Train {
            train,
            library,
            config,
            out_checkpoint,
            log,
            dim,
        } => cmd_train(&train, &library, config.as_ref(), &out_checkpoint, log.as_ref(), dim),
        Command::Infer {
            question,
            premises,
            library,
            checkpoint,
            backend,
            script,
            encoder,
            trace_out,
            dot_out,
            max_steps,
            dim,
            endpoint,
            model,
        } => cmd_infer(
            &question,
            &premises,
            &library,
            checkpoint.as_ref(),
            backend,
            script.as_ref(),
            encoder,
            trace_out.as_ref(),
            dot_out.as_ref(),
            max_steps,
            dim,
            endpoint.as_ref(),
            model.as_ref(),
        ),
        Command::Eval {
            test,
            library,
            checkpoint,
            encoders,
            repeats,
            report,
            format,
            match_mode,
            backend,
            script,
            max_steps,
            dim,
            endpoint,
            model,
        } => cmd_eval(
            &test,
            &library,
            checkpoint.as_ref(),
            &encoders,
            repeats,
            &report,
            format,
            match_mode,
            backend,
            script.as_ref(),
            max_steps,
            dim,
            endpoint.as_ref(),
            model.as_ref(),
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
