//! The evolving reasoning-state graph: a directed heterogeneous graph of
//! condition, theorem, and conclusion nodes with typed edges.
//!
//! Each inference step adds exactly one theorem node and one conclusion node
//! as an atomic pair, plus the edges recording which premises fed the theorem
//! and what it inferred. The graph is strictly additive; nothing is ever
//! removed or mutated after insertion.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{Embedding, UNIT_NORM_TOL};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("a graph requires at least one initial condition")]
    EmptyConditions,
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding norm {norm} is not unit")]
    NonUnitEmbedding { norm: f64 },
    #[error("node text must be nonempty")]
    EmptyText,
    #[error("expansion requires at least one premise")]
    EmptyPremises,
    #[error("premise {0} does not exist")]
    UnknownPremise(NodeId),
    #[error("premise {0} refers to a Theorem node; premises must be conditions or conclusions")]
    PremiseIsTheorem(NodeId),
    #[error("graph fails validation: {0:?}")]
    InvalidGraph(Vec<Violation>),
    #[error("unsupported export format {0:?}")]
    UnknownFormat(String),
    #[error("graph json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Dense node index, assigned in insertion order and never reused.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Condition,
    Theorem,
    Conclusion,
}

/// The relation set: premises feed a theorem (`UseCond`), a theorem yields a
/// conclusion (`Infers`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    UseCond,
    Infers,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 2] = [EdgeKind::UseCond, EdgeKind::Infers];

    /// Dense index used by the GNN to pick the per-relation weight matrix.
    pub fn index(self) -> usize {
        match self {
            EdgeKind::UseCond => 0,
            EdgeKind::Infers => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub text: String,
    pub embedding: Embedding,
    pub created_at_step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
}

/// A structural rule broken by a hand-built graph, reported by [`ReasoningGraph::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonDenseId { position: usize, id: NodeId },
    EmptyText { node: NodeId },
    BadEmbeddingDim { node: NodeId, got: usize },
    NonUnitEmbedding { node: NodeId, norm: f64 },
    DanglingEdge { edge: Edge },
    SelfLoop { edge: Edge },
    DuplicateEdge { edge: Edge },
    BadUseCondSource { edge: Edge },
    BadUseCondTarget { edge: Edge },
    BadInfersSource { edge: Edge },
    BadInfersTarget { edge: Edge },
    StepOrdering { edge: Edge, src_step: usize, dst_step: usize },
    TheoremWithoutPremises { node: NodeId },
    TheoremInfersCount { node: NodeId, count: usize },
    ConclusionInfersCount { node: NodeId, count: usize },
    ConditionHasIncoming { node: NodeId },
    NodeCountLaw { expected: usize, actual: usize },
    TheoremCountLaw { expected: usize, actual: usize },
    ConclusionCountLaw { expected: usize, actual: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonDenseId { position, id } => {
                write!(f, "node at position {position} has id {id}; ids must be dense 0..n-1")
            }
            Violation::EmptyText { node } => write!(f, "node {node} has empty text"),
            Violation::BadEmbeddingDim { node, got } => {
                write!(f, "node {node} embedding has dim {got}, expected the graph dim")
            }
            Violation::NonUnitEmbedding { node, norm } => {
                write!(f, "node {node} embedding norm {norm} is not unit")
            }
            Violation::DanglingEdge { edge } => {
                write!(f, "edge {}->{} references a missing node", edge.src, edge.dst)
            }
            Violation::SelfLoop { edge } => write!(f, "edge {}->{} is a self-loop", edge.src, edge.dst),
            Violation::DuplicateEdge { edge } => {
                write!(f, "duplicate edge {}->{} ({:?})", edge.src, edge.dst, edge.kind)
            }
            Violation::BadUseCondSource { edge } => write!(
                f,
                "UseCond edge {}->{} must start at a Condition or Conclusion node",
                edge.src, edge.dst
            ),
            Violation::BadUseCondTarget { edge } => write!(
                f,
                "UseCond edge {}->{} must end at a Theorem node",
                edge.src, edge.dst
            ),
            Violation::BadInfersSource { edge } => write!(
                f,
                "Infers edge {}->{} must start at a Theorem node",
                edge.src, edge.dst
            ),
            Violation::BadInfersTarget { edge } => write!(
                f,
                "Infers edge {}->{} must end at a Conclusion node",
                edge.src, edge.dst
            ),
            Violation::StepOrdering { edge, src_step, dst_step } => write!(
                f,
                "edge {}->{} points backward in time (step {src_step} -> {dst_step})",
                edge.src, edge.dst
            ),
            Violation::TheoremWithoutPremises { node } => {
                write!(f, "theorem node {node} has no incoming UseCond edge")
            }
            Violation::TheoremInfersCount { node, count } => write!(
                f,
                "theorem node {node} has {count} outgoing Infers edges, expected exactly 1"
            ),
            Violation::ConclusionInfersCount { node, count } => write!(
                f,
                "conclusion node {node} has {count} incoming Infers edges, expected exactly 1"
            ),
            Violation::ConditionHasIncoming { node } => {
                write!(f, "condition node {node} has incoming edges")
            }
            Violation::NodeCountLaw { expected, actual } => write!(
                f,
                "node count {actual} violates n0 + 2t = {expected}"
            ),
            Violation::TheoremCountLaw { expected, actual } => write!(
                f,
                "theorem node count {actual} differs from step counter {expected}"
            ),
            Violation::ConclusionCountLaw { expected, actual } => write!(
                f,
                "conclusion node count {actual} differs from step counter {expected}"
            ),
        }
    }
}

/// Node ids of the theorem/conclusion pair added by one expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpandIds {
    pub theorem: NodeId,
    pub conclusion: NodeId,
}

/// The reasoning state after `step` completed expansion steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningGraph {
    dim: usize,
    step: usize,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl ReasoningGraph {
    /// Builds the initial state: one Condition node per input, no edges.
    pub fn new(conditions: &[(String, Embedding)]) -> Result<Self, GraphError> {
        if conditions.is_empty() {
            return Err(GraphError::EmptyConditions);
        }
        let dim = conditions[0].1.dim();
        let mut nodes = Vec::with_capacity(conditions.len());
        for (i, (text, emb)) in conditions.iter().enumerate() {
            check_node_inputs(text, emb, dim)?;
            nodes.push(Node {
                id: NodeId(i),
                kind: NodeKind::Condition,
                text: text.clone(),
                embedding: emb.clone(),
                created_at_step: 0,
            });
        }
        Ok(Self {
            dim,
            step: 0,
            nodes,
            edges: Vec::new(),
        })
    }

    /// Raw constructor for tests and JSON import; performs no validation.
    pub fn from_parts(dim: usize, step: usize, nodes: Vec<Node>, edges: Vec<Edge>) -> Self {
        Self {
            dim,
            step,
            nodes,
            edges,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id.0).filter(|n| n.id == id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Applies one reasoning step: adds the theorem/conclusion pair atomically
    /// with a UseCond edge from each premise and one Infers edge.
    pub fn expand(
        &mut self,
        theorem_text: &str,
        theorem_emb: &Embedding,
        premise_ids: &[NodeId],
        conclusion_text: &str,
        conclusion_emb: &Embedding,
    ) -> Result<ExpandIds, GraphError> {
        if premise_ids.is_empty() {
            return Err(GraphError::EmptyPremises);
        }
        check_node_inputs(theorem_text, theorem_emb, self.dim)?;
        check_node_inputs(conclusion_text, conclusion_emb, self.dim)?;
        let mut seen = HashSet::new();
        let mut premises = Vec::with_capacity(premise_ids.len());
        for &pid in premise_ids {
            let node = self.node(pid).ok_or(GraphError::UnknownPremise(pid))?;
            if node.kind == NodeKind::Theorem {
                return Err(GraphError::PremiseIsTheorem(pid));
            }
            if seen.insert(pid) {
                premises.push(pid);
            }
        }

        let next_step = self.step + 1;
        let theorem_id = NodeId(self.nodes.len());
        let conclusion_id = NodeId(self.nodes.len() + 1);
        self.nodes.push(Node {
            id: theorem_id,
            kind: NodeKind::Theorem,
            text: theorem_text.to_string(),
            embedding: theorem_emb.clone(),
            created_at_step: next_step,
        });
        self.nodes.push(Node {
            id: conclusion_id,
            kind: NodeKind::Conclusion,
            text: conclusion_text.to_string(),
            embedding: conclusion_emb.clone(),
            created_at_step: next_step,
        });
        for pid in premises {
            self.edges.push(Edge {
                src: pid,
                dst: theorem_id,
                kind: EdgeKind::UseCond,
            });
        }
        self.edges.push(Edge {
            src: theorem_id,
            dst: conclusion_id,
            kind: EdgeKind::Infers,
        });
        self.step = next_step;
        Ok(ExpandIds {
            theorem: theorem_id,
            conclusion: conclusion_id,
        })
    }

    /// Checks every structural invariant; returns an empty list iff the graph
    /// is well-formed. Diagnostic only, never fails.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for (pos, node) in self.nodes.iter().enumerate() {
            if node.id.0 != pos {
                out.push(Violation::NonDenseId {
                    position: pos,
                    id: node.id,
                });
            }
            if node.text.is_empty() {
                out.push(Violation::EmptyText { node: node.id });
            }
            if node.embedding.dim() != self.dim {
                out.push(Violation::BadEmbeddingDim {
                    node: node.id,
                    got: node.embedding.dim(),
                });
            } else {
                let norm = node.embedding.norm();
                if (norm - 1.0).abs() > UNIT_NORM_TOL {
                    out.push(Violation::NonUnitEmbedding { node: node.id, norm });
                }
            }
        }

        let mut seen_edges = HashSet::new();
        for &edge in &self.edges {
            let (src, dst) = (self.node(edge.src), self.node(edge.dst));
            let (Some(src), Some(dst)) = (src, dst) else {
                out.push(Violation::DanglingEdge { edge });
                continue;
            };
            if edge.src == edge.dst {
                out.push(Violation::SelfLoop { edge });
            }
            if !seen_edges.insert(edge) {
                out.push(Violation::DuplicateEdge { edge });
            }
            match edge.kind {
                EdgeKind::UseCond => {
                    if src.kind == NodeKind::Theorem {
                        out.push(Violation::BadUseCondSource { edge });
                    }
                    if dst.kind != NodeKind::Theorem {
                        out.push(Violation::BadUseCondTarget { edge });
                    }
                }
                EdgeKind::Infers => {
                    if src.kind != NodeKind::Theorem {
                        out.push(Violation::BadInfersSource { edge });
                    }
                    if dst.kind != NodeKind::Conclusion {
                        out.push(Violation::BadInfersTarget { edge });
                    }
                }
            }
            if src.created_at_step > dst.created_at_step {
                out.push(Violation::StepOrdering {
                    edge,
                    src_step: src.created_at_step,
                    dst_step: dst.created_at_step,
                });
            }
        }

        // Degree rules, counted over well-referenced edges only.
        for node in &self.nodes {
            let incoming = |kind: EdgeKind| {
                self.edges
                    .iter()
                    .filter(|e| e.dst == node.id && e.kind == kind)
                    .count()
            };
            let outgoing = |kind: EdgeKind| {
                self.edges
                    .iter()
                    .filter(|e| e.src == node.id && e.kind == kind)
                    .count()
            };
            match node.kind {
                NodeKind::Theorem => {
                    if incoming(EdgeKind::UseCond) == 0 {
                        out.push(Violation::TheoremWithoutPremises { node: node.id });
                    }
                    let infers = outgoing(EdgeKind::Infers);
                    if infers != 1 {
                        out.push(Violation::TheoremInfersCount {
                            node: node.id,
                            count: infers,
                        });
                    }
                }
                NodeKind::Conclusion => {
                    let infers = incoming(EdgeKind::Infers);
                    if infers != 1 {
                        out.push(Violation::ConclusionInfersCount {
                            node: node.id,
                            count: infers,
                        });
                    }
                }
                NodeKind::Condition => {
                    if incoming(EdgeKind::UseCond) + incoming(EdgeKind::Infers) > 0 {
                        out.push(Violation::ConditionHasIncoming { node: node.id });
                    }
                }
            }
        }

        let n_cond = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Condition)
            .count();
        let n_thm = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Theorem)
            .count();
        let n_conc = self.nodes.len() - n_cond - n_thm;
        if self.nodes.len() != n_cond + 2 * self.step {
            out.push(Violation::NodeCountLaw {
                expected: n_cond + 2 * self.step,
                actual: self.nodes.len(),
            });
        }
        if n_thm != self.step {
            out.push(Violation::TheoremCountLaw {
                expected: self.step,
                actual: n_thm,
            });
        }
        if n_conc != self.step {
            out.push(Violation::ConclusionCountLaw {
                expected: self.step,
                actual: n_conc,
            });
        }
        out
    }

    fn require_valid(&self) -> Result<(), GraphError> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(GraphError::InvalidGraph(violations))
        }
    }

    /// Graphviz DOT rendering: one node statement per node (shape by kind),
    /// one edge statement per edge labeled with its relation.
    pub fn to_dot(&self) -> Result<String, GraphError> {
        self.require_valid()?;
        let mut out = String::from("digraph reasoning {\n");
        for node in &self.nodes {
            let shape = match node.kind {
                NodeKind::Condition => "ellipse",
                NodeKind::Theorem => "box",
                NodeKind::Conclusion => "diamond",
            };
            out.push_str(&format!(
                "  {} [shape={shape}, label={}];\n",
                node.id,
                dot_quote(&format!("{:?} {}: {}", node.kind, node.id, node.text))
            ));
        }
        for edge in &self.edges {
            out.push_str(&format!(
                "  {} -> {} [label=\"{:?}\"];\n",
                edge.src, edge.dst, edge.kind
            ));
        }
        out.push_str("}\n");
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String, GraphError> {
        self.require_valid()?;
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses the JSON export format and re-validates the result.
    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let graph: ReasoningGraph = serde_json::from_str(text)?;
        graph.require_valid()?;
        Ok(graph)
    }

    pub fn export(&self, format: &str) -> Result<String, GraphError> {
        match format {
            "dot" => self.to_dot(),
            "json" => self.to_json(),
            other => Err(GraphError::UnknownFormat(other.to_string())),
        }
    }
}

fn check_node_inputs(text: &str, emb: &Embedding, dim: usize) -> Result<(), GraphError> {
    if text.is_empty() {
        return Err(GraphError::EmptyText);
    }
    if emb.dim() != dim {
        return Err(GraphError::DimensionMismatch {
            expected: dim,
            got: emb.dim(),
        });
    }
    let norm = emb.norm();
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(GraphError::NonUnitEmbedding { norm });
    }
    Ok(())
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::local_hash_embedding;

    fn emb(text: &str) -> Embedding {
        local_hash_embedding(text, 16).unwrap()
    }

    fn conds(n: usize) -> Vec<(String, Embedding)> {
        (0..n)
            .map(|i| {
                let t = format!("condition {i}");
                let e = emb(&t);
                (t, e)
            })
            .collect()
    }

    #[test]
    fn new_graph_basics() {
        let g = ReasoningGraph::new(&conds(3)).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges().len(), 0);
        assert_eq!(g.step(), 0);
        assert!(g.validate().is_empty());
    }

    #[test]
    fn new_graph_rejects_empty() {
        assert!(matches!(
            ReasoningGraph::new(&[]),
            Err(GraphError::EmptyConditions)
        ));
    }

    #[test]
    fn new_graph_rejects_dim_mismatch() {
        let a = local_hash_embedding("a", 16).unwrap();
        let b = local_hash_embedding("b", 8).unwrap();
        let result = ReasoningGraph::new(&[("a".into(), a), ("b".into(), b)]);
        assert!(matches!(result, Err(GraphError::DimensionMismatch { .. })));
    }

    #[test]
    fn expand_adds_pair_and_edges() {
        let mut g = ReasoningGraph::new(&conds(3)).unwrap();
        let ids = g
            .expand(
                "thm",
                &emb("thm"),
                &[NodeId(0), NodeId(1)],
                "concl",
                &emb("concl"),
            )
            .unwrap();
        assert_eq!(g.node_count(), 5);
        assert_eq!(g.edges().len(), 3);
        assert_eq!(g.step(), 1);
        assert_eq!(ids.theorem, NodeId(3));
        assert_eq!(ids.conclusion, NodeId(4));
        assert!(g.validate().is_empty());
        let use_cond = g
            .edges()
            .iter()
            .filter(|e| e.kind == EdgeKind::UseCond)
            .count();
        assert_eq!(use_cond, 2);
    }

    #[test]
    fn expand_unknown_premise() {
        let mut g = ReasoningGraph::new(&conds(3)).unwrap();
        let result = g.expand("t", &emb("t"), &[NodeId(99)], "c", &emb("c"));
        assert!(matches!(result, Err(GraphError::UnknownPremise(NodeId(99)))));
    }

    #[test]
    fn expand_rejects_theorem_premise() {
        let mut g = ReasoningGraph::new(&conds(2)).unwrap();
        let ids = g
            .expand("t", &emb("t"), &[NodeId(0)], "c", &emb("c"))
            .unwrap();
        let result = g.expand("t2", &emb("t2"), &[ids.theorem], "c2", &emb("c2"));
        assert!(matches!(result, Err(GraphError::PremiseIsTheorem(_))));
    }

    #[test]
    fn node_count_law_after_four_steps() {
        let mut g = ReasoningGraph::new(&conds(2)).unwrap();
        for t in 0..4 {
            g.expand(
                &format!("t{t}"),
                &emb(&format!("t{t}")),
                &[NodeId(0)],
                &format!("c{t}"),
                &emb(&format!("c{t}")),
            )
            .unwrap();
        }
        assert_eq!(g.node_count(), 10);
        assert!(g.validate().is_empty());
    }

    #[test]
    fn conclusions_usable_as_premises() {
        let mut g = ReasoningGraph::new(&conds(2)).unwrap();
        let ids = g
            .expand("t", &emb("t"), &[NodeId(0), NodeId(1)], "c", &emb("c"))
            .unwrap();
        g.expand("t2", &emb("t2"), &[ids.conclusion], "c2", &emb("c2"))
            .unwrap();
        assert!(g.validate().is_empty());
    }

    #[test]
    fn validate_flags_bad_infers_edge() {
        let mut g = ReasoningGraph::new(&conds(2)).unwrap();
        g.expand("t", &emb("t"), &[NodeId(0)], "c", &emb("c"))
            .unwrap();
        let nodes = g.nodes().to_vec();
        let mut edges = g.edges().to_vec();
        // Condition -> Conclusion via Infers is illegal.
        edges.push(Edge {
            src: NodeId(1),
            dst: NodeId(3),
            kind: EdgeKind::Infers,
        });
        let bad = ReasoningGraph::from_parts(g.dim(), g.step(), nodes, edges);
        let violations = bad.validate();
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::BadInfersSource { .. })));
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::ConclusionInfersCount { count: 2, .. })));
    }

    #[test]
    fn validate_flags_lone_theorem() {
        let g = ReasoningGraph::from_parts(
            16,
            1,
            vec![
                Node {
                    id: NodeId(0),
                    kind: NodeKind::Condition,
                    text: "c".into(),
                    embedding: emb("c"),
                    created_at_step: 0,
                },
                Node {
                    id: NodeId(1),
                    kind: NodeKind::Theorem,
                    text: "t".into(),
                    embedding: emb("t"),
                    created_at_step: 1,
                },
                Node {
                    id: NodeId(2),
                    kind: NodeKind::Conclusion,
                    text: "z".into(),
                    embedding: emb("z"),
                    created_at_step: 1,
                },
            ],
            vec![Edge {
                src: NodeId(1),
                dst: NodeId(2),
                kind: EdgeKind::Infers,
            }],
        );
        let violations = g.validate();
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::TheoremWithoutPremises { node: NodeId(1) })));
    }

    #[test]
    fn dot_export_counts() {
        let g = ReasoningGraph::new(&conds(1)).unwrap();
        let dot = g.to_dot().unwrap();
        assert_eq!(dot.matches("shape=").count(), 1);
        assert_eq!(dot.matches(" -> ").count(), 0);

        let mut g = ReasoningGraph::new(&conds(3)).unwrap();
        g.expand("t", &emb("t"), &[NodeId(0), NodeId(1)], "c", &emb("c"))
            .unwrap();
        let dot = g.to_dot().unwrap();
        assert_eq!(dot.matches(" -> ").count(), 3);
    }

    #[test]
    fn json_round_trip_is_identity() {
        let mut g = ReasoningGraph::new(&conds(3)).unwrap();
        g.expand("t", &emb("t"), &[NodeId(0), NodeId(2)], "c", &emb("c"))
            .unwrap();
        let json = g.to_json().unwrap();
        let back = ReasoningGraph::from_json(&json).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn json_schema_keys_are_stable() {
        let g = ReasoningGraph::new(&conds(1)).unwrap();
        let value: serde_json::Value = serde_json::from_str(&g.to_json().unwrap()).unwrap();
        assert!(value.get("dim").is_some());
        assert!(value.get("step").is_some());
        assert_eq!(value["nodes"][0]["kind"], "Condition");
        assert!(value["nodes"][0]["embedding"].is_array());
        assert!(value.get("edges").is_some());
    }

    #[test]
    fn export_rejects_invalid_graph() {
        let g = ReasoningGraph::from_parts(16, 3, vec![], vec![]);
        assert!(matches!(g.to_dot(), Err(GraphError::InvalidGraph(_))));
    }

    #[test]
    fn expand_never_mutates_existing_content() {
        let mut g = ReasoningGraph::new(&conds(3)).unwrap();
        let before = g.clone();
        g.expand("t", &emb("t"), &[NodeId(1)], "c", &emb("c"))
            .unwrap();
        assert_eq!(&g.nodes()[..before.node_count()], before.nodes());
        assert_eq!(&g.edges()[..before.edges().len()], before.edges());
    }
}
