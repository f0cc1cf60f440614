//! Relational message-passing encoder for reasoning graphs.
//!
//! `encode` projects node embeddings into a hidden space, runs K layers of
//! relation-typed message passing (per-relation weights, mean aggregation over
//! typed in-neighbors, self-loop weight, bias, tanh), mean-pools, projects to
//! the theorem-embedding space, and L2-normalizes. Every forward pass records
//! a tape from which `backward` computes exact parameter gradients; the
//! gradients are verified against central finite differences in tests.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::l2_norm;
use crate::graph::ReasoningGraph;

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("cannot encode an empty graph")]
    EmptyGraph,
    #[error("readout norm {norm} is below 1e-12; cannot normalize the state vector")]
    ZeroNorm { norm: f64 },
    #[error("embedding dim {got} does not match configured input dim {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("tape does not match the supplied cotangent: {0}")]
    TapeMismatch(String),
    #[error("checkpoint shape check failed: {0}")]
    BadCheckpoint(String),
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    /// Number of message-passing layers K.
    pub layers: usize,
    pub hidden_dim: usize,
    pub input_dim: usize,
    /// Must equal the theorem embedding dimension so the state vector is
    /// comparable to library entries.
    pub output_dim: usize,
    pub seed: u64,
}

impl GnnConfig {
    pub fn new(layers: usize, hidden_dim: usize, input_dim: usize, output_dim: usize, seed: u64) -> Self {
        Self {
            layers,
            hidden_dim,
            input_dim,
            output_dim,
            seed,
        }
    }

    /// Closed-form learnable parameter count:
    /// d_in*h + K*(3h^2 + h) + h*d_out.
    pub fn param_count(&self) -> usize {
        let h = self.hidden_dim;
        self.input_dim * h + self.layers * (3 * h * h + h) + h * self.output_dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub w_self: Array2<f64>,
    /// Per-relation weights, indexed by [`EdgeKind::index`].
    pub w_rel: [Array2<f64>; 2],
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnParams {
    /// d_in x h input projection.
    pub w_in: Array2<f64>,
    pub layers: Vec<LayerParams>,
    /// h x d_out readout projection.
    pub w_out: Array2<f64>,
}

impl GnnParams {
    pub fn param_count(&self) -> usize {
        self.w_in.len()
            + self
                .layers
                .iter()
                .map(|l| l.w_self.len() + l.w_rel[0].len() + l.w_rel[1].len() + l.bias.len())
                .sum::<usize>()
            + self.w_out.len()
    }

    fn check_shapes(&self, cfg: &GnnConfig) -> Result<(), GnnError> {
        let h = cfg.hidden_dim;
        let expect = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(GnnError::BadCheckpoint(format!("bad shape for {what}")))
            }
        };
        expect(self.w_in.dim() == (cfg.input_dim, h), "w_in")?;
        expect(self.layers.len() == cfg.layers, "layer count")?;
        for (k, layer) in self.layers.iter().enumerate() {
            expect(layer.w_self.dim() == (h, h), &format!("layer {k} w_self"))?;
            expect(layer.w_rel[0].dim() == (h, h), &format!("layer {k} w_rel[UseCond]"))?;
            expect(layer.w_rel[1].dim() == (h, h), &format!("layer {k} w_rel[Infers]"))?;
            expect(layer.bias.len() == h, &format!("layer {k} bias"))?;
        }
        expect(self.w_out.dim() == (h, cfg.output_dim), "w_out")?;
        if self.param_count() != cfg.param_count() {
            return Err(GnnError::BadCheckpoint(format!(
                "parameter count {} does not satisfy the shape formula {}",
                self.param_count(),
                cfg.param_count()
            )));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        let finite = |m: &Array2<f64>| m.iter().all(|v| v.is_finite());
        finite(&self.w_in)
            && finite(&self.w_out)
            && self.layers.iter().all(|l| {
                finite(&l.w_self)
                    && finite(&l.w_rel[0])
                    && finite(&l.w_rel[1])
                    && l.bias.iter().all(|v| v.is_finite())
            })
    }
}

/// Glorot-uniform initialization, deterministic in the config seed.
pub fn init_params(cfg: &GnnConfig) -> GnnParams {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let h = cfg.hidden_dim;
    let glorot = |rows: usize, cols: usize, rng: &mut ChaCha20Rng| {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
    };
    let w_in = glorot(cfg.input_dim, h, &mut rng);
    let layers = (0..cfg.layers)
        .map(|_| LayerParams {
            w_self: glorot(h, h, &mut rng),
            w_rel: [glorot(h, h, &mut rng), glorot(h, h, &mut rng)],
            bias: Array1::zeros(h),
        })
        .collect();
    let w_out = glorot(h, cfg.output_dim, &mut rng);
    GnnParams {
        w_in,
        layers,
        w_out,
    }
}

/// L2-normalized global reasoning state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector {
    values: Vec<f64>,
}

impl StateVector {
    /// Wraps raw values as a state, L2-normalizing them; `None` when the
    /// norm underflows.
    pub fn from_values(values: Vec<f64>) -> Option<Self> {
        let norm = l2_norm(&values);
        if norm < 1e-12 {
            return None;
        }
        Some(Self {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Everything recorded during a forward pass that `backward` needs:
/// activations per layer, the typed in-neighbor lists, and a copy of the
/// parameters the pass was run with.
pub struct GradientTape {
    params: GnnParams,
    cfg: GnnConfig,
    embeddings: Vec<Array1<f64>>,
    in_neighbors: Vec<[Vec<usize>; 2]>,
    /// xs[k][i] is node i's activation entering layer k; xs has K+1 levels.
    xs: Vec<Vec<Array1<f64>>>,
    pooled: Array1<f64>,
    readout_norm: f64,
    output: Array1<f64>,
}

/// Gradients with the same shape family as [`GnnParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GnnGradients {
    pub w_in: Array2<f64>,
    pub layers: Vec<LayerGradients>,
    pub w_out: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub w_self: Array2<f64>,
    pub w_rel: [Array2<f64>; 2],
    pub bias: Array1<f64>,
}

impl GnnGradients {
    pub fn zeros_like(params: &GnnParams) -> Self {
        Self {
            w_in: Array2::zeros(params.w_in.dim()),
            layers: params
                .layers
                .iter()
                .map(|l| LayerGradients {
                    w_self: Array2::zeros(l.w_self.dim()),
                    w_rel: [
                        Array2::zeros(l.w_rel[0].dim()),
                        Array2::zeros(l.w_rel[1].dim()),
                    ],
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
            w_out: Array2::zeros(params.w_out.dim()),
        }
    }

    pub fn add_assign(&mut self, other: &GnnGradients) {
        self.w_in += &other.w_in;
        self.w_out += &other.w_out;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w_self += &b.w_self;
            a.w_rel[0] += &b.w_rel[0];
            a.w_rel[1] += &b.w_rel[1];
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.w_in *= factor;
        self.w_out *= factor;
        for l in &mut self.layers {
            l.w_self *= factor;
            l.w_rel[0] *= factor;
            l.w_rel[1] *= factor;
            l.bias *= factor;
        }
    }

    /// Visits every gradient entry paired with a mutable reference to the
    /// matching parameter entry, in a fixed deterministic order.
    pub fn for_each_with_params<F: FnMut(&f64, &mut f64)>(&self, params: &mut GnnParams, mut f: F) {
        for (g, p) in self.w_in.iter().zip(params.w_in.iter_mut()) {
            f(g, p);
        }
        for (gl, pl) in self.layers.iter().zip(params.layers.iter_mut()) {
            for (g, p) in gl.w_self.iter().zip(pl.w_self.iter_mut()) {
                f(g, p);
            }
            for r in 0..2 {
                for (g, p) in gl.w_rel[r].iter().zip(pl.w_rel[r].iter_mut()) {
                    f(g, p);
                }
            }
            for (g, p) in gl.bias.iter().zip(pl.bias.iter_mut()) {
                f(g, p);
            }
        }
        for (g, p) in self.w_out.iter().zip(params.w_out.iter_mut()) {
            f(g, p);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.w_in.iter());
        for l in &self.layers {
            out.extend(l.w_self.iter());
            out.extend(l.w_rel[0].iter());
            out.extend(l.w_rel[1].iter());
            out.extend(l.bias.iter());
        }
        out.extend(self.w_out.iter());
        out
    }
}

fn typed_in_neighbors(g: &ReasoningGraph) -> Vec<[Vec<usize>; 2]> {
    let mut nbrs: Vec<[Vec<usize>; 2]> = vec![[Vec::new(), Vec::new()]; g.node_count()];
    for edge in g.edges() {
        nbrs[edge.dst.0][edge.kind.index()].push(edge.src.0);
    }
    nbrs
}

/// Encodes the graph into the global state vector r and records the tape.
pub fn encode(
    g: &ReasoningGraph,
    params: &GnnParams,
    cfg: &GnnConfig,
) -> Result<(StateVector, GradientTape), GnnError> {
    if g.node_count() == 0 {
        return Err(GnnError::EmptyGraph);
    }
    if g.dim() != cfg.input_dim {
        return Err(GnnError::DimensionMismatch {
            expected: cfg.input_dim,
            got: g.dim(),
        });
    }
    params.check_shapes(cfg)?;

    let n = g.node_count();
    let in_neighbors = typed_in_neighbors(g);
    let embeddings: Vec<Array1<f64>> = g
        .nodes()
        .iter()
        .map(|node| Array1::from(node.embedding.values().to_vec()))
        .collect();

    // x^(0) = W_in^T e, no activation.
    let mut xs: Vec<Vec<Array1<f64>>> = Vec::with_capacity(cfg.layers + 1);
    xs.push(embeddings.iter().map(|e| params.w_in.t().dot(e)).collect());

    for layer in &params.layers {
        let prev = xs.last().unwrap();
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let mut pre = layer.w_self.t().dot(&prev[i]) + &layer.bias;
            for r in 0..2 {
                let nbrs = &in_neighbors[i][r];
                if nbrs.is_empty() {
                    continue;
                }
                let mut sum = Array1::zeros(cfg.hidden_dim);
                for &j in nbrs {
                    sum += &prev[j];
                }
                pre += &(layer.w_rel[r].t().dot(&sum) / nbrs.len() as f64);
            }
            next.push(pre.mapv(f64::tanh));
        }
        xs.push(next);
    }

    let last = xs.last().unwrap();
    let mut pooled = Array1::zeros(cfg.hidden_dim);
    for x in last {
        pooled += x;
    }
    pooled /= n as f64;

    let readout = params.w_out.t().dot(&pooled);
    let readout_norm = l2_norm(readout.as_slice().unwrap());
    if readout_norm < 1e-12 {
        return Err(GnnError::ZeroNorm { norm: readout_norm });
    }
    let output = &readout / readout_norm;

    let state = StateVector {
        values: output.to_vec(),
    };
    let tape = GradientTape {
        params: params.clone(),
        cfg: cfg.clone(),
        embeddings,
        in_neighbors,
        xs,
        pooled,
        readout_norm,
        output,
    };
    Ok((state, tape))
}

/// Exact gradients of `d_output . normalized_output` with respect to every
/// parameter, via the recorded tape. The L2-normalization Jacobian is applied
/// first, then the chain runs back through readout, pooling, and each layer.
pub fn backward(tape: &GradientTape, d_output: &[f64]) -> Result<GnnGradients, GnnError> {
    if d_output.len() != tape.cfg.output_dim {
        return Err(GnnError::TapeMismatch(format!(
            "cotangent has dim {}, tape output dim is {}",
            d_output.len(),
            tape.cfg.output_dim
        )));
    }
    let n = tape.embeddings.len();
    let k_layers = tape.cfg.layers;
    let mut grads = GnnGradients::zeros_like(&tape.params);

    let g = Array1::from(d_output.to_vec());
    // out = y / |y|  =>  dL/dy = (g - out (g . out)) / |y|
    let g_dot_out = g.dot(&tape.output);
    let d_readout = (&g - &(&tape.output * g_dot_out)) / tape.readout_norm;

    // y = W_out^T pooled
    grads.w_out = outer(&tape.pooled, &d_readout);
    let d_pooled = tape.params.w_out.dot(&d_readout);

    // pooled = mean_i x_i^(K)
    let mut dx: Vec<Array1<f64>> = (0..n).map(|_| &d_pooled / n as f64).collect();

    for k in (0..k_layers).rev() {
        let layer = &tape.params.layers[k];
        let prev = &tape.xs[k];
        let act = &tape.xs[k + 1];
        let mut dx_prev: Vec<Array1<f64>> =
            (0..n).map(|_| Array1::zeros(tape.cfg.hidden_dim)).collect();
        let lg = &mut grads.layers[k];
        for i in 0..n {
            // tanh' = 1 - a^2
            let dpre = &dx[i] * &act[i].mapv(|a| 1.0 - a * a);
            lg.bias += &dpre;
            lg.w_self += &outer(&prev[i], &dpre);
            dx_prev[i] += &tape.params.layers[k].w_self.dot(&dpre);
            for r in 0..2 {
                let nbrs = &tape.in_neighbors[i][r];
                if nbrs.is_empty() {
                    continue;
                }
                let coeff = 1.0 / nbrs.len() as f64;
                let mut sum_prev = Array1::zeros(tape.cfg.hidden_dim);
                for &j in nbrs {
                    sum_prev += &prev[j];
                }
                lg.w_rel[r] += &(outer(&sum_prev, &dpre) * coeff);
                let back = layer.w_rel[r].dot(&dpre) * coeff;
                for &j in nbrs {
                    dx_prev[j] += &back;
                }
            }
        }
        dx = dx_prev;
    }

    // x^(0) = W_in^T e
    for i in 0..n {
        grads.w_in += &outer(&tape.embeddings[i], &dx[i]);
    }
    Ok(grads)
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(ndarray::Axis(1));
    let b2 = b.view().insert_axis(ndarray::Axis(0));
    a2.dot(&b2)
}

/// Ablation encoder: the L2-normalized mean of all node input embeddings.
/// No parameters involved.
pub fn average_encode(g: &ReasoningGraph) -> Result<StateVector, GnnError> {
    if g.node_count() == 0 {
        return Err(GnnError::EmptyGraph);
    }
    let dim = g.dim();
    let mut mean = vec![0.0f64; dim];
    for node in g.nodes() {
        for (m, v) in mean.iter_mut().zip(node.embedding.values()) {
            *m += v;
        }
    }
    let n = g.node_count() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    let norm = l2_norm(&mean);
    if norm < 1e-12 {
        return Err(GnnError::ZeroNorm { norm });
    }
    mean.iter_mut().for_each(|m| *m /= norm);
    Ok(StateVector { values: mean })
}

/// Checkpoint container: config echo plus row-major matrices.
#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: GnnConfig,
    pub params: GnnParams,
}

pub fn save_checkpoint(path: &Path, cfg: &GnnConfig, params: &GnnParams) -> Result<(), GnnError> {
    params.check_shapes(cfg)?;
    let ckpt = Checkpoint {
        config: cfg.clone(),
        params: params.clone(),
    };
    fs::write(path, serde_json::to_string(&ckpt)?)?;
    Ok(())
}

/// Loads a checkpoint and validates the shape formula.
pub fn load_checkpoint(path: &Path) -> Result<(GnnConfig, GnnParams), GnnError> {
    let text = fs::read_to_string(path)?;
    let ckpt: Checkpoint = serde_json::from_str(&text)?;
    ckpt.params.check_shapes(&ckpt.config)?;
    if !ckpt.params.all_finite() {
        return Err(GnnError::BadCheckpoint("non-finite parameter".to_string()));
    }
    Ok((ckpt.config, ckpt.params))
}

/// Returns a copy of `params` with the flat-index `idx` entry shifted by
/// `delta`. Flat order matches [`GnnGradients::flatten`]. Used by
/// finite-difference oracles in tests.
pub fn perturb_param(params: &GnnParams, idx: usize, delta: f64) -> GnnParams {
    let mut out = params.clone();
    let zero = GnnGradients::zeros_like(params);
    let mut i = 0usize;
    zero.for_each_with_params(&mut out, |_, p| {
        if i == idx {
            *p += delta;
        }
        i += 1;
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{local_hash_embedding, Embedding};
    use crate::graph::NodeId;
    use rand::Rng;

    fn toy_graph(n_conds: usize, steps: usize, dim: usize) -> ReasoningGraph {
        let conds: Vec<(String, Embedding)> = (0..n_conds)
            .map(|i| {
                let t = format!("cond {i}");
                let e = local_hash_embedding(&t, dim).unwrap();
                (t, e)
            })
            .collect();
        let mut g = ReasoningGraph::new(&conds).unwrap();
        for t in 0..steps {
            let thm = format!("thm {t}");
            let concl = format!("concl {t}");
            g.expand(
                &thm,
                &local_hash_embedding(&thm, dim).unwrap(),
                &[NodeId(t % n_conds)],
                &concl,
                &local_hash_embedding(&concl, dim).unwrap(),
            )
            .unwrap();
        }
        g
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let cfg = GnnConfig::new(2, 8, 16, 16, 42);
        let a = init_params(&cfg);
        let b = init_params(&cfg);
        assert_eq!(a, b);
        let other = init_params(&GnnConfig::new(2, 8, 16, 16, 43));
        assert_ne!(a, other);
    }

    #[test]
    fn param_count_matches_formula() {
        let cfg = GnnConfig::new(2, 128, 1536, 1536, 0);
        let expected = 1536 * 128 + 2 * (3 * 128 * 128 + 128) + 128 * 1536;
        assert_eq!(cfg.param_count(), expected);
        assert_eq!(init_params(&cfg).param_count(), expected);
    }

    #[test]
    fn k0_encode_matches_hand_matrix_product() {
        // Single edgeless node with K=0: output = normalize(W_out^T W_in^T e).
        let dim = 4;
        let cfg = GnnConfig::new(0, 3, dim, dim, 7);
        let params = init_params(&cfg);
        let e = Embedding::new(vec![0.5, -0.5, 0.5, 0.5]).unwrap();
        let g = ReasoningGraph::new(&[("c".into(), e.clone())]).unwrap();
        let (state, _) = encode(&g, &params, &cfg).unwrap();

        let ev = Array1::from(e.values().to_vec());
        let hidden = params.w_in.t().dot(&ev);
        let y = params.w_out.t().dot(&hidden);
        let norm = l2_norm(y.as_slice().unwrap());
        for (got, want) in state.values().iter().zip(y.iter().map(|v| v / norm)) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_is_permutation_invariant() {
        let dim = 8;
        let cfg = GnnConfig::new(2, 4, dim, dim, 3);
        let params = init_params(&cfg);
        let g = toy_graph(3, 2, dim);
        let (state, _) = encode(&g, &params, &cfg).unwrap();

        // Relabel node ids by reversing, remapping edges accordingly.
        let n = g.node_count();
        let perm: Vec<usize> = (0..n).rev().collect();
        let mut nodes: Vec<_> = g
            .nodes()
            .iter()
            .map(|node| {
                let mut node = node.clone();
                node.id = NodeId(perm[node.id.0]);
                node
            })
            .collect();
        nodes.sort_by_key(|n| n.id);
        let edges = g
            .edges()
            .iter()
            .map(|e| crate::graph::Edge {
                src: NodeId(perm[e.src.0]),
                dst: NodeId(perm[e.dst.0]),
                kind: e.kind,
            })
            .collect();
        let permuted = ReasoningGraph::from_parts(dim, g.step(), nodes, edges);
        let (state2, _) = encode(&permuted, &params, &cfg).unwrap();
        for (a, b) in state.values().iter().zip(state2.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_w_out_is_zero_norm() {
        let dim = 8;
        let cfg = GnnConfig::new(1, 4, dim, dim, 3);
        let mut params = init_params(&cfg);
        params.w_out.fill(0.0);
        let g = toy_graph(2, 0, dim);
        assert!(matches!(
            encode(&g, &params, &cfg),
            Err(GnnError::ZeroNorm { .. })
        ));
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let dim = 8;
        let cfg = GnnConfig::new(2, 4, dim, dim, 3);
        let params = init_params(&cfg);
        let g = toy_graph(3, 1, dim);
        let (_, tape) = encode(&g, &params, &cfg).unwrap();
        let grads = backward(&tape, &vec![0.0; dim]).unwrap();
        assert!(grads.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn k0_structure_has_no_layer_grads() {
        let dim = 8;
        let cfg = GnnConfig::new(0, 4, dim, dim, 3);
        let params = init_params(&cfg);
        let g = toy_graph(2, 0, dim);
        let (_, tape) = encode(&g, &params, &cfg).unwrap();
        let mut d = vec![0.0; dim];
        d[0] = 1.0;
        let grads = backward(&tape, &d).unwrap();
        assert!(grads.layers.is_empty());
        assert!(grads.w_in.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn backward_rejects_wrong_cotangent_dim() {
        let dim = 8;
        let cfg = GnnConfig::new(1, 4, dim, dim, 3);
        let params = init_params(&cfg);
        let g = toy_graph(2, 0, dim);
        let (_, tape) = encode(&g, &params, &cfg).unwrap();
        assert!(matches!(
            backward(&tape, &[1.0, 0.0]),
            Err(GnnError::TapeMismatch(_))
        ));
    }

    /// Finite-difference oracle: perturb one parameter entry, re-run the
    /// forward pass, and difference `d_output . output`.
    fn fd_gradient(
        g: &ReasoningGraph,
        params: &GnnParams,
        cfg: &GnnConfig,
        d_output: &[f64],
        step: f64,
    ) -> Vec<f64> {
        let loss = |p: &GnnParams| {
            let (state, _) = encode(g, p, cfg).unwrap();
            state
                .values()
                .iter()
                .zip(d_output)
                .map(|(a, b)| a * b)
                .sum::<f64>()
        };
        let count = GnnGradients::zeros_like(params).flatten().len();
        (0..count)
            .map(|idx| {
                let up = loss(&perturb_param(params, idx, step));
                let down = loss(&perturb_param(params, idx, -step));
                (up - down) / (2.0 * step)
            })
            .collect()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let dim = 6;
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for trial in 0..10 {
            let cfg = GnnConfig::new(2, 4, dim, dim, trial);
            let params = init_params(&cfg);
            let g = toy_graph(3, 1 + (trial as usize % 2), dim);
            let d_output: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (_, tape) = encode(&g, &params, &cfg).unwrap();
            let analytic = backward(&tape, &d_output).unwrap().flatten();
            let numeric = fd_gradient(&g, &params, &cfg, &d_output, 1e-4);
            for (a, f) in analytic.iter().zip(&numeric) {
                let denom = a.abs().max(f.abs()).max(1e-2);
                assert!(
                    (a - f).abs() / denom < 1e-4,
                    "trial {trial}: analytic {a} vs fd {f}"
                );
            }
        }
    }

    #[test]
    fn average_encode_cases() {
        let dim = 16;
        let g = toy_graph(1, 0, dim);
        let s = average_encode(&g).unwrap();
        for (a, b) in s.values().iter().zip(g.nodes()[0].embedding.values()) {
            assert!((a - b).abs() < 1e-12);
        }

        // Antipodal pair cancels.
        let v = Embedding::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let neg = Embedding::new(vec![-1.0, 0.0, 0.0, 0.0]).unwrap();
        let g = ReasoningGraph::new(&[("a".into(), v), ("b".into(), neg)]).unwrap();
        assert!(matches!(average_encode(&g), Err(GnnError::ZeroNorm { .. })));

        // Hand arithmetic on three 4-dim vectors.
        let vs = [
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ];
        let conds: Vec<(String, Embedding)> = vs
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("c{i}"), Embedding::new(v.clone()).unwrap()))
            .collect();
        let g = ReasoningGraph::new(&conds).unwrap();
        let s = average_encode(&g).unwrap();
        let inv_sqrt3 = 1.0 / 3.0f64.sqrt();
        let want = [inv_sqrt3, inv_sqrt3, inv_sqrt3, 0.0];
        for (a, b) in s.values().iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    struct ParamsProbe<'a>(&'a GnnParams);

    impl ParamsProbe<'_> {
        fn flat(&self) -> Vec<f64> {
            let mut v: Vec<f64> = self.0.w_in.iter().cloned().collect();
            for l in &self.0.layers {
                v.extend(l.w_self.iter());
                v.extend(l.w_rel[0].iter());
                v.extend(l.w_rel[1].iter());
                v.extend(l.bias.iter());
            }
            v.extend(self.0.w_out.iter());
            v
        }
    }

    #[test]
    fn checkpoint_round_trip_validates_shapes() {
        let cfg = GnnConfig::new(2, 4, 8, 8, 5);
        let params = init_params(&cfg);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        save_checkpoint(&path, &cfg, &params).unwrap();
        let (cfg2, params2) = load_checkpoint(&path).unwrap();
        assert_eq!(cfg, cfg2);
        let a = ParamsProbe(&params).flat();
        let b = ParamsProbe(&params2).flat();
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            assert_eq!(x, y, "first mismatch at flat index {i}: {x} vs {y}");
        }
        assert_eq!(params, params2);
    }
}
