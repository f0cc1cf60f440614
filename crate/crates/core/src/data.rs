//! Dataset schemas and loaders, train/test splitting, theorem-library
//! construction by greedy embedding clustering, and the synthetic dataset
//! generator used for training and evaluation fixtures.
//!
//! Training and eval files are JSON-lines; every record is validated field by
//! field so schema errors carry the offending line number and field name.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::embed::Embedder;
use crate::matcher::{TheoremEntry, TheoremLibrary};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: parse error: {message}")]
    ParseError { line: usize, message: String },
    #[error("line {line}: schema violation in field '{field}': {message}")]
    SchemaViolation {
        line: usize,
        field: String,
        message: String,
    },
    #[error("need at least 2 samples to split, got {0}")]
    TooFewSamples(usize),
    #[error("invalid split spec: train_fraction must be in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("clustering threshold must be in (0, 1), got {0}")]
    BadThreshold(f64),
    #[error("file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Embed(#[from] crate::embed::EmbedError),
    #[error(transparent)]
    Library(#[from] crate::matcher::MatchError),
}

/// One annotated inference step inside a training sample. `used_ids` index
/// into premises (0..|premises|-1) followed by prior step results
/// (|premises| + k for the result of step k).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedStep {
    pub description: String,
    pub theorem_id: String,
    pub used_ids: Vec<usize>,
    pub result: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub question: String,
    pub premises: Vec<String>,
    pub target_conclusion: String,
    pub steps: Vec<AnnotatedStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub question: String,
    pub answer: String,
    pub premises: Vec<String>,
}

impl TrainingSample {
    /// Drops the supervision signal, leaving a test-style sample.
    pub fn as_eval(&self) -> EvalSample {
        EvalSample {
            question: self.question.clone(),
            answer: self.target_conclusion.clone(),
            premises: self.premises.clone(),
        }
    }
}

fn field_str(
    obj: &serde_json::Map<String, Value>,
    line: usize,
    field: &str,
) -> Result<String, DataError> {
    match obj.get(field) {
        Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
        Some(Value::String(_)) => Err(DataError::SchemaViolation {
            line,
            field: field.to_string(),
            message: "must be nonempty".to_string(),
        }),
        Some(_) => Err(DataError::SchemaViolation {
            line,
            field: field.to_string(),
            message: "must be a string".to_string(),
        }),
        None => Err(DataError::SchemaViolation {
            line,
            field: field.to_string(),
            message: "missing".to_string(),
        }),
    }
}

fn field_str_array(
    obj: &serde_json::Map<String, Value>,
    line: usize,
    field: &str,
) -> Result<Vec<String>, DataError> {
    let Some(value) = obj.get(field) else {
        return Err(DataError::SchemaViolation {
            line,
            field: field.to_string(),
            message: "missing".to_string(),
        });
    };
    let Some(arr) = value.as_array() else {
        return Err(DataError::SchemaViolation {
            line,
            field: field.to_string(),
            message: "must be an array of strings".to_string(),
        });
    };
    arr.iter()
        .map(|v| match v {
            Value::String(s) if !s.is_empty() => Ok(s.clone()),
            _ => Err(DataError::SchemaViolation {
                line,
                field: field.to_string(),
                message: "entries must be nonempty strings".to_string(),
            }),
        })
        .collect()
}

fn reject_unknown_keys(
    obj: &serde_json::Map<String, Value>,
    line: usize,
    allowed: &[&str],
) -> Result<(), DataError> {
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(DataError::SchemaViolation {
                line,
                field: key.clone(),
                message: "unknown field".to_string(),
            });
        }
    }
    Ok(())
}

fn parse_lines(path: &Path) -> Result<Vec<(usize, serde_json::Map<String, Value>)>, DataError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| DataError::ParseError {
            line,
            message: e.to_string(),
        })?;
        let Value::Object(obj) = value else {
            return Err(DataError::ParseError {
                line,
                message: "expected a JSON object".to_string(),
            });
        };
        out.push((line, obj));
    }
    Ok(out)
}

/// Loads a JSON-lines training file, validating every record.
pub fn load_training(path: &Path) -> Result<Vec<TrainingSample>, DataError> {
    let mut samples = Vec::new();
    for (line, obj) in parse_lines(path)? {
        reject_unknown_keys(
            &obj,
            line,
            &["question", "premises", "target_conclusion", "steps"],
        )?;
        let question = field_str(&obj, line, "question")?;
        let premises = field_str_array(&obj, line, "premises")?;
        if premises.is_empty() {
            return Err(DataError::SchemaViolation {
                line,
                field: "premises".to_string(),
                message: "must be nonempty".to_string(),
            });
        }
        let target_conclusion = field_str(&obj, line, "target_conclusion")?;
        let Some(steps_value) = obj.get("steps") else {
            return Err(DataError::SchemaViolation {
                line,
                field: "steps".to_string(),
                message: "missing".to_string(),
            });
        };
        let Some(steps_arr) = steps_value.as_array() else {
            return Err(DataError::SchemaViolation {
                line,
                field: "steps".to_string(),
                message: "must be an array".to_string(),
            });
        };
        if steps_arr.is_empty() {
            return Err(DataError::SchemaViolation {
                line,
                field: "steps".to_string(),
                message: "must be nonempty".to_string(),
            });
        }
        let mut steps = Vec::with_capacity(steps_arr.len());
        for (k, step_value) in steps_arr.iter().enumerate() {
            let Value::Object(step_obj) = step_value else {
                return Err(DataError::SchemaViolation {
                    line,
                    field: "steps".to_string(),
                    message: format!("step {k} must be an object"),
                });
            };
            reject_unknown_keys(
                step_obj,
                line,
                &["description", "theorem_id", "used_ids", "result"],
            )?;
            let description = field_str(step_obj, line, "description")?;
            let theorem_id = field_str(step_obj, line, "theorem_id")?;
            let result = field_str(step_obj, line, "result")?;
            let Some(used_value) = step_obj.get("used_ids").and_then(|v| v.as_array()) else {
                return Err(DataError::SchemaViolation {
                    line,
                    field: "used_ids".to_string(),
                    message: format!("step {k}: missing or not an array"),
                });
            };
            let mut used_ids = Vec::with_capacity(used_value.len());
            for v in used_value {
                let Some(idx) = v.as_u64() else {
                    return Err(DataError::SchemaViolation {
                        line,
                        field: "used_ids".to_string(),
                        message: format!("step {k}: entries must be non-negative integers"),
                    });
                };
                let idx = idx as usize;
                // Valid references: premises, or results of strictly earlier steps.
                if idx >= premises.len() + k {
                    return Err(DataError::SchemaViolation {
                        line,
                        field: "used_ids".to_string(),
                        message: format!(
                            "step {k}: id {idx} does not resolve (max {})",
                            premises.len() + k
                        ),
                    });
                }
                used_ids.push(idx);
            }
            if used_ids.is_empty() {
                return Err(DataError::SchemaViolation {
                    line,
                    field: "used_ids".to_string(),
                    message: format!("step {k}: must be nonempty"),
                });
            }
            steps.push(AnnotatedStep {
                description,
                theorem_id,
                used_ids,
                result,
            });
        }
        samples.push(TrainingSample {
            question,
            premises,
            target_conclusion,
            steps,
        });
    }
    Ok(samples)
}

/// Loads a JSON-lines eval file. Records carrying step or theorem
/// annotations are rejected.
pub fn load_eval(path: &Path) -> Result<Vec<EvalSample>, DataError> {
    let mut samples = Vec::new();
    for (line, obj) in parse_lines(path)? {
        reject_unknown_keys(&obj, line, &["question", "answer", "premises"])?;
        let question = field_str(&obj, line, "question")?;
        let answer = field_str(&obj, line, "answer")?;
        let premises = field_str_array(&obj, line, "premises")?;
        if premises.is_empty() {
            return Err(DataError::SchemaViolation {
                line,
                field: "premises".to_string(),
                message: "must be nonempty".to_string(),
            });
        }
        samples.push(EvalSample {
            question,
            answer,
            premises,
        });
    }
    Ok(samples)
}

pub fn save_training(path: &Path, samples: &[TrainingSample]) -> Result<(), DataError> {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(s).expect("serialize"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn save_eval(path: &Path, samples: &[EvalSample]) -> Result<(), DataError> {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(s).expect("serialize"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Seeded shuffle then partition; train size is floor(n * fraction).
pub fn split<T: Clone>(samples: &[T], spec: &SplitSpec) -> Result<(Vec<T>, Vec<T>), DataError> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(DataError::BadFraction(spec.train_fraction));
    }
    if samples.len() < 2 {
        return Err(DataError::TooFewSamples(samples.len()));
    }
    let mut indices: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    indices.shuffle(&mut rng);
    let n_train = (samples.len() as f64 * spec.train_fraction).floor() as usize;
    let train = indices[..n_train]
        .iter()
        .map(|&i| samples[i].clone())
        .collect();
    let test = indices[n_train..]
        .iter()
        .map(|&i| samples[i].clone())
        .collect();
    Ok((train, test))
}

/// Greedy first-fit clustering of candidate theorem texts: a candidate joins
/// the first existing cluster whose representative scores cosine >=
/// `merge_threshold`, else founds a new cluster. Representatives become the
/// library entries, ids `T000`, `T001`, ... in creation order.
pub fn cluster_theorems(
    candidates: &[String],
    embedder: &Embedder,
    merge_threshold: f64,
) -> Result<TheoremLibrary, DataError> {
    if !(merge_threshold > 0.0 && merge_threshold < 1.0) {
        return Err(DataError::BadThreshold(merge_threshold));
    }
    let mut entries: Vec<TheoremEntry> = Vec::new();
    for text in candidates {
        let emb = embedder.embed_text(text)?;
        let joins = entries
            .iter()
            .any(|e| crate::embed::cosine(&e.embedding, &emb).expect("same dim") >= merge_threshold);
        if !joins {
            entries.push(TheoremEntry {
                id: format!("T{:03}", entries.len()),
                statement: text.clone(),
                embedding: emb,
            });
        }
    }
    Ok(TheoremLibrary::new(entries)?)
}

/// Knobs for the synthetic separable dataset. Theorem statements are random
/// word phrases; condition/result texts reuse a theorem's phrase plus noise
/// words, so their hash embeddings cluster around the theorem's embedding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_theorems: usize,
    pub chains_per_theorem: usize,
    pub seed: u64,
    pub dim: usize,
    /// Probability that a sample carries premises themed to a different
    /// theorem, making plain embedding averaging imperfect.
    pub confuser_prob: f64,
    /// How many confuser premises to add when the draw fires.
    pub confusers_per_sample: usize,
}

impl SyntheticConfig {
    pub fn new(n_theorems: usize, chains_per_theorem: usize, seed: u64) -> Self {
        Self {
            n_theorems,
            chains_per_theorem,
            seed,
            dim: 64,
            confuser_prob: 0.5,
            confusers_per_sample: 1,
        }
    }
}

fn random_word(rng: &mut ChaCha20Rng) -> String {
    let len = rng.gen_range(5..9);
    (0..len)
        .map(|_| (b'a' + rng.gen_range(0..26u8)) as char)
        .collect()
}

fn random_phrase(rng: &mut ChaCha20Rng, words: usize) -> String {
    (0..words)
        .map(|_| random_word(rng))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Deterministic per seed. Every sample's annotated steps are consistent, and
/// by construction each step's prefix graph clusters around its gold theorem.
pub fn generate_synthetic(
    cfg: &SyntheticConfig,
) -> Result<(Vec<TrainingSample>, TheoremLibrary), DataError> {
    assert!(cfg.n_theorems >= 2, "need at least 2 theorems");
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let embedder = Embedder::new(crate::embed::EmbedderConfig::local(cfg.dim))?;

    let themes: Vec<String> = (0..cfg.n_theorems)
        .map(|_| random_phrase(&mut rng, 5))
        .collect();
    let entries: Vec<TheoremEntry> = themes
        .iter()
        .enumerate()
        .map(|(i, theme)| {
            let statement = format!("rule {theme}");
            Ok(TheoremEntry {
                id: format!("T{i:03}"),
                statement: statement.clone(),
                embedding: embedder.embed_text(&statement)?,
            })
        })
        .collect::<Result<_, DataError>>()?;
    let library = TheoremLibrary::new(entries)?;

    let mut samples = Vec::with_capacity(cfg.n_theorems * cfg.chains_per_theorem);
    for (ti, theme) in themes.iter().enumerate() {
        for chain in 0..cfg.chains_per_theorem {
            let themed = |rng: &mut ChaCha20Rng| format!("{theme} {}", random_phrase(rng, 2));
            let n_premises = rng.gen_range(2..5usize);
            let mut premises: Vec<String> = (0..n_premises).map(|_| themed(&mut rng)).collect();
            if rng.gen_bool(cfg.confuser_prob) {
                let other = (ti + rng.gen_range(1..cfg.n_theorems)) % cfg.n_theorems;
                for _ in 0..cfg.confusers_per_sample {
                    premises.push(format!("{} {}", themes[other], random_phrase(&mut rng, 1)));
                }
            }
            let question = format!("what follows from {theme} case {chain}");
            let n_steps = rng.gen_range(1..4usize);
            let mut steps = Vec::with_capacity(n_steps);
            for k in 0..n_steps {
                // Cite two premises, or the previous result plus a premise.
                let mut used_ids = vec![rng.gen_range(0..n_premises)];
                if k > 0 {
                    used_ids.push(premises.len() + k - 1);
                } else if n_premises > 1 {
                    let mut second = rng.gen_range(0..n_premises);
                    if second == used_ids[0] {
                        second = (second + 1) % n_premises;
                    }
                    used_ids.push(second);
                }
                steps.push(AnnotatedStep {
                    description: format!("apply rule to step {k}"),
                    theorem_id: format!("T{ti:03}"),
                    used_ids,
                    result: themed(&mut rng),
                });
            }
            let target_conclusion = format!("answer-{ti}-{chain}");
            samples.push(TrainingSample {
                question,
                premises,
                target_conclusion,
                steps,
            });
        }
    }
    Ok((samples, library))
}

/// Per-label sample counts, useful for balance checks and reporting.
pub fn label_histogram(samples: &[TrainingSample]) -> HashMap<String, usize> {
    let mut hist = HashMap::new();
    for s in samples {
        for step in &s.steps {
            *hist.entry(step.theorem_id.clone()).or_insert(0) += 1;
        }
    }
    hist
}
