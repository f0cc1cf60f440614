//! Contrastive training of the GNN encoder: align the state vector of each
//! annotated prefix graph with its gold theorem embedding under InfoNCE with
//! in-batch negatives, optimized with Adam.
//!
//! Steps of a chain are treated as independent supervision samples. The whole
//! loop is deterministic for a fixed seed: fixed iteration order, seeded
//! shuffles, single-threaded accumulation.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TrainingSample;
use crate::embed::{dot, Embedder};
use crate::gnn::{
    backward, encode, init_params, GnnConfig, GnnGradients, GnnParams, StateVector,
};
use crate::graph::{NodeId, ReasoningGraph};
use crate::matcher::{select, TheoremLibrary};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("training requires a nonempty dataset")]
    EmptyDataset,
    #[error("step cites theorem id {0}, which is not in the library")]
    UnknownTheoremId(String),
    #[error("step {step} cites id {id}, which resolves to nothing (sample has {available} referents)")]
    DanglingPremiseRef {
        step: usize,
        id: usize,
        available: usize,
    },
    #[error(transparent)]
    Gnn(#[from] crate::gnn::GnnError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Match(#[from] crate::matcher::MatchError),
    #[error(transparent)]
    Embed(#[from] crate::embed::EmbedError),
}

/// A (prefix graph, gold theorem) supervision pair obtained by unrolling one
/// annotated chain.
#[derive(Debug, Clone)]
pub struct StepSample {
    pub graph_prefix: ReasoningGraph,
    pub gold_theorem_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    /// Negative-set size |N| per sample.
    pub negatives: usize,
    pub seed: u64,
    pub balance_labels: bool,
    pub samples_per_label_min: usize,
    pub samples_per_label_max: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let batch_size = 16;
        Self {
            epochs: 30,
            batch_size,
            learning_rate: 1e-2,
            temperature: 0.1,
            negatives: (batch_size - 1).min(16),
            seed: 0,
            balance_labels: true,
            samples_per_label_min: 200,
            samples_per_label_max: 600,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.temperature <= 0.0 {
            return Err(TrainError::NonPositiveTemperature(self.temperature));
        }
        assert!(self.epochs > 0, "epochs must be positive");
        assert!(self.batch_size > 0, "batch_size must be positive");
        assert!(
            self.samples_per_label_min <= self.samples_per_label_max,
            "samples_per_label_min must not exceed max"
        );
        Ok(())
    }
}

/// InfoNCE loss with max-subtraction, plus analytic partials w.r.t. each
/// score: loss = -log( exp(s+/t) / (exp(s+/t) + sum_j exp(s_j/t)) ).
pub fn infonce_loss(
    s_pos: f64,
    s_negs: &[f64],
    temperature: f64,
) -> Result<(f64, f64, Vec<f64>), TrainError> {
    if temperature <= 0.0 {
        return Err(TrainError::NonPositiveTemperature(temperature));
    }
    let z_pos = s_pos / temperature;
    let z_negs: Vec<f64> = s_negs.iter().map(|s| s / temperature).collect();
    let m = z_negs.iter().fold(z_pos, |acc, &z| acc.max(z));
    let sum_exp: f64 =
        (z_pos - m).exp() + z_negs.iter().map(|&z| (z - m).exp()).sum::<f64>();
    let lse = m + sum_exp.ln();
    let loss = lse - z_pos;

    let p_pos = (z_pos - lse).exp();
    let d_pos = (p_pos - 1.0) / temperature;
    let d_negs: Vec<f64> = z_negs
        .iter()
        .map(|&z| (z - lse).exp() / temperature)
        .collect();
    Ok((loss, d_pos, d_negs))
}

/// Unrolls every annotated chain into per-step supervision pairs. The prefix
/// graph mirrors inference: one Condition node per premise plus the question
/// as a final Condition node, expanded through the steps before `t`.
pub fn build_step_samples(
    dataset: &[TrainingSample],
    lib: &TheoremLibrary,
    embedder: &Embedder,
) -> Result<Vec<StepSample>, TrainError> {
    let mut out = Vec::new();
    for sample in dataset {
        let mut conditions: Vec<(String, crate::embed::Embedding)> = Vec::new();
        for p in &sample.premises {
            conditions.push((p.clone(), embedder.embed_text(p)?));
        }
        conditions.push((sample.question.clone(), embedder.embed_text(&sample.question)?));
        let n0 = conditions.len();
        let mut graph = ReasoningGraph::new(&conditions)?;

        for (k, step) in sample.steps.iter().enumerate() {
            out.push(StepSample {
                graph_prefix: graph.clone(),
                gold_theorem_id: step.theorem_id.clone(),
            });
            let theorem = lib
                .get(&step.theorem_id)
                .ok_or_else(|| TrainError::UnknownTheoremId(step.theorem_id.clone()))?;
            let premise_ids: Vec<NodeId> = step
                .used_ids
                .iter()
                .map(|&id| {
                    if id < sample.premises.len() {
                        Ok(NodeId(id))
                    } else {
                        let prior = id - sample.premises.len();
                        if prior >= k {
                            return Err(TrainError::DanglingPremiseRef {
                                step: k,
                                id,
                                available: sample.premises.len() + k,
                            });
                        }
                        // Conclusion of step `prior` sits at n0 + 2*prior + 1.
                        Ok(NodeId(n0 + 2 * prior + 1))
                    }
                })
                .collect::<Result<_, TrainError>>()?;
            let conclusion_emb = embedder.embed_text(&step.result)?;
            graph.expand(
                &theorem.statement,
                &theorem.embedding,
                &premise_ids,
                &step.result,
                &conclusion_emb,
            )?;
        }
    }
    Ok(out)
}

/// Per-label downsampling above `samples_per_label_max` and seeded repetition
/// up to `samples_per_label_min`; the result is shuffled deterministically.
pub fn balance(samples: Vec<StepSample>, cfg: &TrainConfig) -> Vec<StepSample> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    if !cfg.balance_labels {
        let mut out = samples;
        out.shuffle(&mut rng);
        return out;
    }
    let mut by_label: Vec<(String, Vec<StepSample>)> = Vec::new();
    for sample in samples {
        match by_label
            .iter_mut()
            .find(|(label, _)| *label == sample.gold_theorem_id)
        {
            Some((_, bucket)) => bucket.push(sample),
            None => by_label.push((sample.gold_theorem_id.clone(), vec![sample])),
        }
    }
    let mut out = Vec::new();
    for (_, mut bucket) in by_label {
        if bucket.len() > cfg.samples_per_label_max {
            bucket.shuffle(&mut rng);
            bucket.truncate(cfg.samples_per_label_max);
        }
        while !bucket.is_empty() && bucket.len() < cfg.samples_per_label_min {
            let pick = rng.gen_range(0..bucket.len());
            bucket.push(bucket[pick].clone());
        }
        out.extend(bucket);
    }
    out.shuffle(&mut rng);
    out
}

/// Adam accumulators mirroring the parameter shapes.
pub struct OptimizerState {
    m: GnnGradients,
    v: GnnGradients,
    step: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl OptimizerState {
    pub fn new(params: &GnnParams) -> Self {
        Self {
            m: GnnGradients::zeros_like(params),
            v: GnnGradients::zeros_like(params),
            step: 0,
        }
    }

    pub fn apply(&mut self, params: &mut GnnParams, grads: &GnnGradients, lr: f64) {
        self.step += 1;
        let t = self.step as f64;
        let bias1 = 1.0 - ADAM_BETA1.powf(t);
        let bias2 = 1.0 - ADAM_BETA2.powf(t);

        let mut scaled_old_m = self.m.clone();
        scaled_old_m.scale(ADAM_BETA1);
        let mut add_m = grads.clone();
        add_m.scale(1.0 - ADAM_BETA1);
        scaled_old_m.add_assign(&add_m);
        self.m = scaled_old_m;

        let mut g_sq = grads.clone();
        // elementwise square via flatten order is awkward; do it in place below
        let mut scaled_old_v = self.v.clone();
        scaled_old_v.scale(ADAM_BETA2);
        square_in_place(&mut g_sq);
        g_sq.scale(1.0 - ADAM_BETA2);
        scaled_old_v.add_assign(&g_sq);
        self.v = scaled_old_v;

        let m = &self.m;
        let v = &self.v;
        let mut update = GnnGradients::zeros_like(params);
        zip_grads(&mut update, m, v, |u, mi, vi| {
            let mhat = mi / bias1;
            let vhat = vi / bias2;
            *u = lr * mhat / (vhat.sqrt() + ADAM_EPS);
        });
        update.for_each_with_params(params, |u, p| *p -= u);
    }
}

fn square_in_place(g: &mut GnnGradients) {
    g.w_in.mapv_inplace(|x| x * x);
    g.w_out.mapv_inplace(|x| x * x);
    for l in &mut g.layers {
        l.w_self.mapv_inplace(|x| x * x);
        l.w_rel[0].mapv_inplace(|x| x * x);
        l.w_rel[1].mapv_inplace(|x| x * x);
        l.bias.mapv_inplace(|x| x * x);
    }
}

fn zip_grads<F: FnMut(&mut f64, f64, f64)>(
    out: &mut GnnGradients,
    a: &GnnGradients,
    b: &GnnGradients,
    mut f: F,
) {
    for ((o, &x), &y) in out.w_in.iter_mut().zip(a.w_in.iter()).zip(b.w_in.iter()) {
        f(o, x, y);
    }
    for ((ol, al), bl) in out.layers.iter_mut().zip(&a.layers).zip(&b.layers) {
        for ((o, &x), &y) in ol.w_self.iter_mut().zip(al.w_self.iter()).zip(bl.w_self.iter()) {
            f(o, x, y);
        }
        for r in 0..2 {
            for ((o, &x), &y) in ol.w_rel[r]
                .iter_mut()
                .zip(al.w_rel[r].iter())
                .zip(bl.w_rel[r].iter())
            {
                f(o, x, y);
            }
        }
        for ((o, &x), &y) in ol.bias.iter_mut().zip(al.bias.iter()).zip(bl.bias.iter()) {
            f(o, x, y);
        }
    }
    for ((o, &x), &y) in out.w_out.iter_mut().zip(a.w_out.iter()).zip(b.w_out.iter()) {
        f(o, x, y);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub retrieval_top1: f64,
    pub wall_ms: u128,
}

/// Fraction of samples whose encoded state selects the gold theorem.
pub fn retrieval_top1(
    samples: &[StepSample],
    lib: &TheoremLibrary,
    params: &GnnParams,
    gnn_cfg: &GnnConfig,
) -> Result<f64, TrainError> {
    let mut hits = 0usize;
    for sample in samples {
        let (state, _) = encode(&sample.graph_prefix, params, gnn_cfg)?;
        if select(&state, lib)?.selected == sample.gold_theorem_id {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Trains from a fresh Glorot initialization. Negatives per sample are the
/// gold theorems of the other in-batch samples plus uniform library draws up
/// to |N|, deduplicated, positive excluded.
pub fn train(
    samples: &[StepSample],
    lib: &TheoremLibrary,
    cfg: &TrainConfig,
    gnn_cfg: &GnnConfig,
) -> Result<(GnnParams, Vec<EpochStats>), TrainError> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if lib.is_empty() {
        return Err(crate::matcher::MatchError::EmptyLibrary.into());
    }
    let mut params = init_params(gnn_cfg);
    let mut opt = OptimizerState::new(&params);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut batch_grads = GnnGradients::zeros_like(&params);
            for &idx in batch {
                let sample = &samples[idx];
                let (state, tape) = encode(&sample.graph_prefix, &params, gnn_cfg)?;
                let gold = lib
                    .get(&sample.gold_theorem_id)
                    .ok_or_else(|| TrainError::UnknownTheoremId(sample.gold_theorem_id.clone()))?;
                let s_pos = dot(state.values(), gold.embedding.values());

                let neg_ids = pick_negatives(batch, idx, samples, lib, cfg.negatives, &mut rng);
                let neg_entries: Vec<_> = neg_ids
                    .iter()
                    .map(|id| lib.get(id).expect("negative drawn from library"))
                    .collect();
                let s_negs: Vec<f64> = neg_entries
                    .iter()
                    .map(|e| dot(state.values(), e.embedding.values()))
                    .collect();

                let (loss, d_pos, d_negs) = infonce_loss(s_pos, &s_negs, cfg.temperature)?;
                loss_sum += loss;
                loss_count += 1;

                // d loss / d state = d_pos * t+ + sum_j d_neg_j * t_j; the
                // normalization Jacobian is handled inside backward.
                let mut d_state = vec![0.0; state.dim()];
                for (d, &g) in d_state.iter_mut().zip(gold.embedding.values()) {
                    *d += d_pos * g;
                }
                for (entry, dj) in neg_entries.iter().zip(&d_negs) {
                    for (d, &g) in d_state.iter_mut().zip(entry.embedding.values()) {
                        *d += dj * g;
                    }
                }
                let grads = backward(&tape, &d_state)?;
                batch_grads.add_assign(&grads);
            }
            batch_grads.scale(1.0 / batch.len() as f64);
            opt.apply(&mut params, &batch_grads, cfg.learning_rate);
        }

        let top1 = retrieval_top1(samples, lib, &params, gnn_cfg)?;
        history.push(EpochStats {
            epoch,
            mean_loss: loss_sum / loss_count as f64,
            retrieval_top1: top1,
            wall_ms: started.elapsed().as_millis(),
        });
    }
    Ok((params, history))
}

fn pick_negatives(
    batch: &[usize],
    current: usize,
    samples: &[StepSample],
    lib: &TheoremLibrary,
    n_negatives: usize,
    rng: &mut ChaCha20Rng,
) -> Vec<String> {
    let pos = &samples[current].gold_theorem_id;
    let mut out: Vec<String> = Vec::with_capacity(n_negatives);
    for &other in batch {
        if other == current {
            continue;
        }
        let id = &samples[other].gold_theorem_id;
        if id != pos && !out.contains(id) {
            out.push(id.clone());
        }
        if out.len() == n_negatives {
            return out;
        }
    }
    // Uniform library fill, excluding the positive and existing picks. Stop
    // early if the library cannot supply more distinct negatives.
    let available = lib.len().saturating_sub(1);
    let mut guard = 0;
    while out.len() < n_negatives.min(available) && guard < 10_000 {
        guard += 1;
        let entry = &lib.entries()[rng.gen_range(0..lib.len())];
        if entry.id != *pos && !out.contains(&entry.id) {
            out.push(entry.id.clone());
        }
    }
    out
}

/// Encodes a prefix graph and returns the state; shared by train-time
/// evaluation helpers.
pub fn encode_sample(
    sample: &StepSample,
    params: &GnnParams,
    gnn_cfg: &GnnConfig,
) -> Result<StateVector, TrainError> {
    Ok(encode(&sample.graph_prefix, params, gnn_cfg)?.0)
}
