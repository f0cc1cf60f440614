//! deduct: a closed-loop reasoning engine that models multi-step deduction
//! as a dynamically growing heterogeneous graph.
//!
//! The loop per step: encode the current graph into a state vector with a
//! relational GNN ([`gnn`]), retrieve the best-matching theorem from an
//! immutable library by cosine similarity ([`matcher`]), render a prompt and
//! obtain an intermediate conclusion from a pluggable language-model backend
//! ([`llm`]), then expand the graph with the applied theorem and the new
//! conclusion ([`graph`]). [`engine`] drives the loop and records a full
//! trace; [`trainer`] trains the GNN encoder with InfoNCE so the state vector
//! aligns with the gold theorem at each annotated step.

pub mod data;
pub mod embed;
pub mod engine;
pub mod eval;
pub mod gnn;
pub mod graph;
pub mod llm;
pub mod matcher;
pub mod trainer;

pub use embed::{cosine, Embedding};
pub use graph::{EdgeKind, NodeId, NodeKind, ReasoningGraph};
