//! Theorem library and graph-conditioned selection.
//!
//! The library is immutable after load: embeddings stay constant during
//! inference. Selection is an exact exhaustive scan (the expected library
//! scale is on the order of a hundred entries), with ties broken to the
//! lowest library index.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{cosine, dot, Embedder, Embedding, UNIT_NORM_TOL};
use crate::gnn::StateVector;
use crate::graph::{NodeId, NodeKind, ReasoningGraph};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("theorem library is empty")]
    EmptyLibrary,
    #[error("dimension mismatch: state dim {state}, library dim {library}")]
    DimensionMismatch { state: usize, library: usize },
    #[error("graph has no Condition or Conclusion nodes to cite as premises")]
    NoEligibleNodes,
    #[error("invalid library: {0}")]
    InvalidLibrary(String),
    #[error("library i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("library json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Embed(#[from] crate::embed::EmbedError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremEntry {
    pub id: String,
    pub statement: String,
    pub embedding: Embedding,
}

/// Immutable indexed collection of theorem statements with precomputed
/// embeddings. No mutation API after load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremLibrary {
    dim: usize,
    entries: Vec<TheoremEntry>,
}

/// On-disk library record; the embedding is optional and computed at load
/// time when absent.
#[derive(Serialize, Deserialize)]
struct LibraryRecord {
    id: String,
    statement: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    embedding: Option<Vec<f64>>,
}

impl TheoremLibrary {
    pub fn new(entries: Vec<TheoremEntry>) -> Result<Self, MatchError> {
        if entries.is_empty() {
            return Err(MatchError::EmptyLibrary);
        }
        let dim = entries[0].embedding.dim();
        let mut seen = std::collections::HashSet::new();
        for entry in &entries {
            if entry.statement.is_empty() {
                return Err(MatchError::InvalidLibrary(format!(
                    "theorem {} has an empty statement",
                    entry.id
                )));
            }
            if entry.embedding.dim() != dim {
                return Err(MatchError::DimensionMismatch {
                    state: entry.embedding.dim(),
                    library: dim,
                });
            }
            if (entry.embedding.norm() - 1.0).abs() > UNIT_NORM_TOL {
                return Err(MatchError::InvalidLibrary(format!(
                    "theorem {} embedding is not unit-norm",
                    entry.id
                )));
            }
            if !seen.insert(entry.id.clone()) {
                return Err(MatchError::InvalidLibrary(format!(
                    "duplicate theorem id {}",
                    entry.id
                )));
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[TheoremEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&TheoremEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Loads a JSON array of `{id, statement, embedding?}`; missing
    /// embeddings are computed with the given embedder.
    pub fn load(path: &Path, embedder: &Embedder) -> Result<Self, MatchError> {
        let text = std::fs::read_to_string(path)?;
        let records: Vec<LibraryRecord> = serde_json::from_str(&text)?;
        let mut entries = Vec::with_capacity(records.len());
        for rec in records {
            let embedding = match rec.embedding {
                Some(values) => {
                    if values.len() != embedder.dim() {
                        return Err(MatchError::DimensionMismatch {
                            state: values.len(),
                            library: embedder.dim(),
                        });
                    }
                    // Already-unit vectors are taken verbatim so save/load
                    // round-trips bit-exactly; re-normalizing would perturb
                    // low bits via the 1 ± ulp norm.
                    match Embedding::from_unit(values.clone()) {
                        Ok(e) => e,
                        Err(_) => Embedding::new(values)?,
                    }
                }
                None => embedder.embed_text(&rec.statement)?,
            };
            entries.push(TheoremEntry {
                id: rec.id,
                statement: rec.statement,
                embedding,
            });
        }
        Self::new(entries)
    }

    /// Writes the library back to disk with embeddings included.
    pub fn save(&self, path: &Path) -> Result<(), MatchError> {
        let records: Vec<LibraryRecord> = self
            .entries
            .iter()
            .map(|e| LibraryRecord {
                id: e.id.clone(),
                statement: e.statement.clone(),
                embedding: Some(e.embedding.values().to_vec()),
            })
            .collect();
        std::fs::write(path, serde_json::to_string_pretty(&records)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub selected: String,
    pub score: f64,
    /// Full (id, score) list sorted descending; ties keep library order.
    pub ranking: Vec<(String, f64)>,
}

/// One cosine score per library entry, in library order.
pub fn score_all(
    state: &StateVector,
    lib: &TheoremLibrary,
) -> Result<Vec<(String, f64)>, MatchError> {
    if lib.is_empty() {
        return Err(MatchError::EmptyLibrary);
    }
    if state.dim() != lib.dim() {
        return Err(MatchError::DimensionMismatch {
            state: state.dim(),
            library: lib.dim(),
        });
    }
    Ok(lib
        .entries()
        .iter()
        .map(|e| (e.id.clone(), dot(state.values(), e.embedding.values())))
        .collect())
}

/// Argmax over scores; exact ties resolve to the smallest library index.
pub fn select(state: &StateVector, lib: &TheoremLibrary) -> Result<MatchResult, MatchError> {
    let scores = score_all(state, lib)?;
    let mut ranking: Vec<(usize, (String, f64))> = scores.into_iter().enumerate().collect();
    // Stable sort keeps library order among equal scores.
    ranking.sort_by(|a, b| b.1 .1.partial_cmp(&a.1 .1).unwrap());
    let ranking: Vec<(String, f64)> = ranking.into_iter().map(|(_, pair)| pair).collect();
    let (selected, score) = ranking[0].clone();
    Ok(MatchResult {
        selected,
        score,
        ranking,
    })
}

/// Chooses up to `k` Condition/Conclusion nodes most similar to the selected
/// theorem, filtered by `min_sim`. If the filter empties the list the single
/// best node is returned, since a theorem application must cite a premise.
pub fn select_premises(
    g: &ReasoningGraph,
    theorem: &TheoremEntry,
    k: usize,
    min_sim: f64,
) -> Result<Vec<NodeId>, MatchError> {
    let mut scored: Vec<(NodeId, f64)> = g
        .nodes()
        .iter()
        .filter(|n| matches!(n.kind, NodeKind::Condition | NodeKind::Conclusion))
        .map(|n| {
            let sim = cosine(&n.embedding, &theorem.embedding)?;
            Ok((n.id, sim))
        })
        .collect::<Result<_, MatchError>>()?;
    if scored.is_empty() {
        return Err(MatchError::NoEligibleNodes);
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let picked: Vec<NodeId> = scored
        .iter()
        .filter(|(_, sim)| *sim >= min_sim)
        .take(k.max(1))
        .map(|(id, _)| *id)
        .collect();
    if picked.is_empty() {
        Ok(vec![scored[0].0])
    } else {
        Ok(picked)
    }
}
