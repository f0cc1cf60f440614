//! End-to-end scoring: answer matching, per-encoder evaluation over repeated
//! runs, gold-trajectory script construction for keyed backends, and report
//! emission as JSON or a markdown table.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{EvalSample, TrainingSample};
use crate::embed::Embedder;
use crate::engine::{run, EncoderKind, EngineConfig, EngineDeps, Termination};
use crate::gnn::{GnnConfig, GnnParams};
use crate::graph::{NodeId, ReasoningGraph};
use crate::llm::{prompt_key, render_prompt, LlmBackendConfig, LlmClient, PromptSpec};
use crate::matcher::{select_premises, TheoremLibrary};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("gold answer must be nonempty")]
    EmptyGold,
    #[error("cannot parse {value:?} as a number")]
    UnparseableNumeric { value: String },
    #[error("evaluation requires at least one sample")]
    EmptySamples,
    #[error("repeats must be at least 1")]
    BadRepeats,
    #[error("evaluation requires at least one encoder config")]
    NoEncoders,
    #[error("theorem {0} referenced by an annotated step is not in the library")]
    UnknownTheoremId(String),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Match(#[from] crate::matcher::MatchError),
    #[error(transparent)]
    Embed(#[from] crate::embed::EmbedError),
    #[error(transparent)]
    Llm(#[from] crate::llm::LlmError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Numeric,
    NormalizedText,
}

fn parse_numeric(text: &str) -> Result<f64, EvalError> {
    let cleaned: String = text
        .trim()
        .chars()
        .filter(|c| !matches!(c, '$' | ',' | '%'))
        .collect();
    cleaned
        .trim()
        .parse::<f64>()
        .map_err(|_| EvalError::UnparseableNumeric {
            value: text.to_string(),
        })
}

fn normalize_text(text: &str) -> String {
    let lowered = text.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(['.', '!', '?', ';', ':', ','])
        .trim()
        .to_string()
}

/// Numeric mode strips currency/comma/percent characters and compares within
/// 1e-6 relative tolerance; text mode lowercases, collapses whitespace, and
/// drops terminal punctuation before exact comparison.
pub fn answer_match(predicted: &str, gold: &str, mode: MatchMode) -> Result<bool, EvalError> {
    if gold.trim().is_empty() {
        return Err(EvalError::EmptyGold);
    }
    match mode {
        MatchMode::Numeric => {
            let p = parse_numeric(predicted)?;
            let g = parse_numeric(gold)?;
            let scale = p.abs().max(g.abs());
            Ok((p - g).abs() <= 1e-6 * scale.max(1e-300) || p == g)
        }
        MatchMode::NormalizedText => Ok(normalize_text(predicted) == normalize_text(gold)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub config: String,
    pub n_samples: usize,
    pub accuracy: f64,
    pub mean_steps: f64,
    /// Termination outcomes from the first repeat; failed runs land in the
    /// "failed" bucket. Sums to `n_samples`.
    pub termination_histogram: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMeta {
    pub generated_at: String,
    pub library_size: usize,
    pub repeats: usize,
    pub match_mode: MatchMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub meta: EvalMeta,
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub repeats: usize,
    pub match_mode: MatchMode,
    pub encoders: Vec<EncoderKind>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            repeats: 3,
            match_mode: MatchMode::NormalizedText,
            encoders: vec![EncoderKind::Gnn, EncoderKind::Average],
        }
    }
}

fn encoder_name(kind: EncoderKind) -> &'static str {
    match kind {
        EncoderKind::Gnn => "gnn",
        EncoderKind::Average => "average",
    }
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Answered => "answered",
        Termination::MaxSteps => "max_steps",
        Termination::BelowScoreFloor => "below_score_floor",
    }
}

/// Runs every sample `repeats` times per encoder config. A fresh LLM client is
/// built per run so scripted backends start from a clean cursor. Failed runs
/// score as incorrect instead of aborting the suite.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    samples: &[EvalSample],
    library: &TheoremLibrary,
    params: Option<&GnnParams>,
    gnn_cfg: Option<&GnnConfig>,
    embedder: &Embedder,
    llm_cfg: &LlmBackendConfig,
    engine_cfg: &EngineConfig,
    eval_cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptySamples);
    }
    if eval_cfg.repeats == 0 {
        return Err(EvalError::BadRepeats);
    }
    if eval_cfg.encoders.is_empty() {
        return Err(EvalError::NoEncoders);
    }
    let mut rows = Vec::new();
    for &encoder in &eval_cfg.encoders {
        let cfg = EngineConfig {
            encoder,
            ..engine_cfg.clone()
        };
        let deps = EngineDeps {
            library,
            params,
            gnn_cfg,
            embedder,
        };
        let mut accuracy_sum = 0.0;
        let mut steps_total = 0usize;
        let mut runs_total = 0usize;
        let mut histogram: BTreeMap<String, usize> = BTreeMap::new();
        for repeat in 0..eval_cfg.repeats {
            let mut correct = 0usize;
            for sample in samples {
                let mut llm = LlmClient::new(llm_cfg)?;
                let outcome = run(&sample.question, &sample.premises, &deps, &cfg, &mut llm);
                let (bucket, matched, steps) = match &outcome {
                    Ok(result) => {
                        let matched = result
                            .final_answer
                            .as_deref()
                            .map(|predicted| {
                                answer_match(predicted, &sample.answer, eval_cfg.match_mode)
                                    .unwrap_or(false)
                            })
                            .unwrap_or(false);
                        (termination_name(result.termination), matched, result.trace.len())
                    }
                    Err(err) => ("failed", false, err.trace.len()),
                };
                if repeat == 0 {
                    *histogram.entry(bucket.to_string()).or_insert(0) += 1;
                }
                if matched {
                    correct += 1;
                }
                steps_total += steps;
                runs_total += 1;
            }
            accuracy_sum += correct as f64 / samples.len() as f64;
        }
        rows.push(EvalRow {
            config: encoder_name(encoder).to_string(),
            n_samples: samples.len(),
            accuracy: accuracy_sum / eval_cfg.repeats as f64,
            mean_steps: steps_total as f64 / runs_total as f64,
            termination_histogram: histogram,
        });
    }
    Ok(EvalReport {
        rows,
        meta: EvalMeta {
            generated_at: chrono::Utc::now().to_rfc3339(),
            library_size: library.len(),
            repeats: eval_cfg.repeats,
            match_mode: eval_cfg.match_mode,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Json,
    MarkdownTable,
}

pub fn write_report(report: &EvalReport, path: &Path, format: ReportFormat) -> Result<(), EvalError> {
    let rendered = match format {
        ReportFormat::Json => serde_json::to_string_pretty(report)? + "\n",
        ReportFormat::MarkdownTable => {
            let mut out = String::from("| config | n | accuracy | mean_steps |\n|---|---|---|---|\n");
            for row in &report.rows {
                out.push_str(&format!(
                    "| {} | {} | {:.4} | {:.2} |\n",
                    row.config, row.n_samples, row.accuracy, row.mean_steps
                ));
            }
            out
        }
    };
    std::fs::write(path, rendered)?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<EvalReport, EvalError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Builds a keyed script for one annotated sample by simulating the gold
/// trajectory: if the engine selects the gold theorem at every step it will
/// render exactly these prompts, and any deviation misses the script and the
/// run fails. This ties end-to-end accuracy to retrieval accuracy.
pub fn build_gold_script(
    sample: &TrainingSample,
    library: &TheoremLibrary,
    embedder: &Embedder,
    engine_cfg: &EngineConfig,
) -> Result<HashMap<String, String>, EvalError> {
    let mut conditions: Vec<(String, crate::embed::Embedding)> = Vec::new();
    for p in &sample.premises {
        conditions.push((p.clone(), embedder.embed_text(p)?));
    }
    conditions.push((sample.question.clone(), embedder.embed_text(&sample.question)?));
    let mut graph = ReasoningGraph::new(&conditions)?;

    let mut script = HashMap::new();
    let last = sample.steps.len().saturating_sub(1);
    for (i, step) in sample.steps.iter().enumerate() {
        let theorem = library
            .get(&step.theorem_id)
            .ok_or_else(|| EvalError::UnknownTheoremId(step.theorem_id.clone()))?;
        let premise_ids: Vec<NodeId> = select_premises(
            &graph,
            theorem,
            engine_cfg.premise_k,
            engine_cfg.premise_min_sim,
        )?;
        let premise_texts = premise_ids
            .iter()
            .map(|&id| graph.node(id).expect("premise exists").text.clone())
            .collect();
        let prompt = render_prompt(&PromptSpec {
            premise_texts,
            theorem_statement: theorem.statement.clone(),
        })?;
        let response = if i == last {
            format!("{} ANSWER: {}", step.result, sample.target_conclusion)
        } else {
            step.result.clone()
        };
        let conclusion_emb = embedder.embed_text(&response)?;
        graph.expand(
            &theorem.statement,
            &theorem.embedding,
            &premise_ids,
            &response,
            &conclusion_emb,
        )?;
        script.insert(prompt_key(&prompt), response);
    }
    Ok(script)
}

/// Merged keyed script over many samples.
pub fn build_gold_scripts(
    samples: &[TrainingSample],
    library: &TheoremLibrary,
    embedder: &Embedder,
    engine_cfg: &EngineConfig,
) -> Result<HashMap<String, String>, EvalError> {
    let mut merged = HashMap::new();
    for sample in samples {
        merged.extend(build_gold_script(sample, library, embedder, engine_cfg)?);
    }
    Ok(merged)
}
