//! The closed reasoning loop: encode the graph, match a theorem, select
//! premises, generate a conclusion, expand the graph; repeat until the
//! backend emits the answer marker, the score floor is violated, or the step
//! budget runs out. Every step is recorded in a replayable trace.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::Embedder;
use crate::gnn::{average_encode, encode, GnnConfig, GnnParams, StateVector};
use crate::graph::{NodeId, ReasoningGraph};
use crate::llm::{render_prompt, LlmClient, PromptSpec, ANSWER_MARKER};
use crate::matcher::{select, select_premises, TheoremLibrary};

#[derive(Debug, Error)]
pub enum EngineErrorKind {
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Gnn(#[from] crate::gnn::GnnError),
    #[error(transparent)]
    Match(#[from] crate::matcher::MatchError),
    #[error(transparent)]
    Llm(#[from] crate::llm::LlmError),
    #[error(transparent)]
    Embed(#[from] crate::embed::EmbedError),
    #[error("encoder=gnn requires checkpoint parameters")]
    MissingParams,
}

/// A run failure with the partial trace up to the failing step attached.
#[derive(Debug, Error)]
#[error("run aborted after {} recorded steps: {kind}", trace.len())]
pub struct EngineError {
    #[source]
    pub kind: EngineErrorKind,
    pub trace: Vec<TraceStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Gnn,
    Average,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EngineConfig {
    pub max_inference_steps: usize,
    /// Runs terminate early when the best theorem score drops below this;
    /// -1.0 disables the floor.
    pub min_theorem_score: f64,
    pub encoder: EncoderKind,
    pub premise_k: usize,
    pub premise_min_sim: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            max_inference_steps: 8,
            min_theorem_score: -1.0,
            encoder: EncoderKind::Gnn,
            premise_k: 2,
            premise_min_sim: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    /// Best-scoring theorem id and its score.
    pub state_score_top: (String, f64),
    /// Ranking truncated to the top five entries.
    pub ranking_top5: Vec<(String, f64)>,
    pub premise_ids: Vec<NodeId>,
    pub prompt: String,
    pub conclusion: String,
    pub is_final: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Answered,
    MaxSteps,
    BelowScoreFloor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub final_answer: Option<String>,
    pub termination: Termination,
    pub trace: Vec<TraceStep>,
    pub final_graph: ReasoningGraph,
}

/// Immutable collaborators shared by runs.
pub struct EngineDeps<'a> {
    pub library: &'a TheoremLibrary,
    pub params: Option<&'a GnnParams>,
    pub gnn_cfg: Option<&'a GnnConfig>,
    pub embedder: &'a Embedder,
}

fn encode_state(
    g: &ReasoningGraph,
    cfg: &EngineConfig,
    deps: &EngineDeps,
) -> Result<StateVector, EngineErrorKind> {
    match cfg.encoder {
        EncoderKind::Average => Ok(average_encode(g)?),
        EncoderKind::Gnn => {
            let params = deps.params.ok_or(EngineErrorKind::MissingParams)?;
            let gnn_cfg = deps.gnn_cfg.ok_or(EngineErrorKind::MissingParams)?;
            Ok(encode(g, params, gnn_cfg)?.0)
        }
    }
}

/// Builds the initial graph (premises plus the question as a final Condition
/// node) and executes the loop.
pub fn run(
    question: &str,
    premises: &[String],
    deps: &EngineDeps,
    engine_cfg: &EngineConfig,
    llm: &mut LlmClient,
) -> Result<RunResult, EngineError> {
    let mut trace: Vec<TraceStep> = Vec::new();
    match run_inner(question, premises, deps, engine_cfg, llm, &mut trace) {
        Ok(result) => Ok(result),
        Err(kind) => Err(EngineError { kind, trace }),
    }
}

fn run_inner(
    question: &str,
    premises: &[String],
    deps: &EngineDeps,
    engine_cfg: &EngineConfig,
    llm: &mut LlmClient,
    trace: &mut Vec<TraceStep>,
) -> Result<RunResult, EngineErrorKind> {
    let mut conditions: Vec<(String, crate::embed::Embedding)> = Vec::new();
    for p in premises {
        conditions.push((p.clone(), deps.embedder.embed_text(p)?));
    }
    conditions.push((question.to_string(), deps.embedder.embed_text(question)?));
    let mut graph = ReasoningGraph::new(&conditions)?;

    for step in 0..engine_cfg.max_inference_steps {
        let state = encode_state(&graph, engine_cfg, deps)?;
        let matched = select(&state, deps.library)?;
        if matched.score < engine_cfg.min_theorem_score {
            return Ok(RunResult {
                final_answer: None,
                termination: Termination::BelowScoreFloor,
                trace: trace.clone(),
                final_graph: graph,
            });
        }
        let theorem = deps
            .library
            .get(&matched.selected)
            .expect("selected id comes from the library");
        let premise_ids = select_premises(
            &graph,
            theorem,
            engine_cfg.premise_k,
            engine_cfg.premise_min_sim,
        )?;
        let premise_texts: Vec<String> = premise_ids
            .iter()
            .map(|&id| graph.node(id).expect("premise exists").text.clone())
            .collect();
        let prompt = render_prompt(&PromptSpec {
            premise_texts,
            theorem_statement: theorem.statement.clone(),
        })?;
        let conclusion = llm.generate(&prompt)?;
        let conclusion_emb = deps.embedder.embed_text(&conclusion.text)?;
        graph.expand(
            &theorem.statement,
            &theorem.embedding,
            &premise_ids,
            &conclusion.text,
            &conclusion_emb,
        )?;
        trace.push(TraceStep {
            step,
            state_score_top: (matched.selected.clone(), matched.score),
            ranking_top5: matched.ranking.iter().take(5).cloned().collect(),
            premise_ids,
            prompt,
            conclusion: conclusion.text.clone(),
            is_final: conclusion.is_final,
        });
        if conclusion.is_final {
            let answer = extract_answer(&conclusion.text);
            return Ok(RunResult {
                final_answer: Some(answer),
                termination: Termination::Answered,
                trace: trace.clone(),
                final_graph: graph,
            });
        }
    }
    Ok(RunResult {
        final_answer: None,
        termination: Termination::MaxSteps,
        trace: trace.clone(),
        final_graph: graph,
    })
}

/// Text after the answer marker, whitespace-trimmed.
pub fn extract_answer(text: &str) -> String {
    match text.find(ANSWER_MARKER) {
        Some(pos) => text[pos + ANSWER_MARKER.len()..].trim().to_string(),
        None => String::new(),
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("trace corrupt: {0}")]
    TraceCorrupt(String),
}

/// Reconstructs the final graph purely from the trace, for auditability.
/// The caller supplies the same question/premises the run started from.
pub fn replay(
    question: &str,
    premises: &[String],
    trace: &[TraceStep],
    lib: &TheoremLibrary,
    embedder: &Embedder,
) -> Result<ReasoningGraph, ReplayError> {
    let corrupt = |msg: String| ReplayError::TraceCorrupt(msg);
    let mut conditions: Vec<(String, crate::embed::Embedding)> = Vec::new();
    for p in premises {
        conditions.push((
            p.clone(),
            embedder
                .embed_text(p)
                .map_err(|e| corrupt(format!("premise embed: {e}")))?,
        ));
    }
    conditions.push((
        question.to_string(),
        embedder
            .embed_text(question)
            .map_err(|e| corrupt(format!("question embed: {e}")))?,
    ));
    let mut graph =
        ReasoningGraph::new(&conditions).map_err(|e| corrupt(format!("initial graph: {e}")))?;

    for (i, step) in trace.iter().enumerate() {
        if step.step != i {
            return Err(corrupt(format!(
                "step indices must be consecutive from 0; position {i} holds step {}",
                step.step
            )));
        }
        let theorem = lib
            .get(&step.state_score_top.0)
            .ok_or_else(|| corrupt(format!("theorem {} not in library", step.state_score_top.0)))?;
        let conclusion_emb = embedder
            .embed_text(&step.conclusion)
            .map_err(|e| corrupt(format!("conclusion embed: {e}")))?;
        graph
            .expand(
                &theorem.statement,
                &theorem.embedding,
                &step.premise_ids,
                &step.conclusion,
                &conclusion_emb,
            )
            .map_err(|e| corrupt(format!("step {i}: {e}")))?;
    }
    Ok(graph)
}

/// Trace file schema: config echo, the initial conditions, per-step records,
/// and the outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceFile {
    pub question: String,
    pub premises: Vec<String>,
    pub engine_config: EngineConfig,
    pub embedder_dim: usize,
    pub termination: Termination,
    pub final_answer: Option<String>,
    pub trace: Vec<TraceStep>,
}

impl TraceFile {
    pub fn from_run(
        question: &str,
        premises: &[String],
        engine_cfg: &EngineConfig,
        embedder_dim: usize,
        result: &RunResult,
    ) -> Self {
        Self {
            question: question.to_string(),
            premises: premises.to_vec(),
            engine_config: engine_cfg.clone(),
            embedder_dim,
            termination: result.termination,
            final_answer: result.final_answer.clone(),
            trace: result.trace.clone(),
        }
    }
}
