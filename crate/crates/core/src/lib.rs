//! Reaction virtual screening over hypergraph reaction networks.
//!
//! The pipeline: parse reaction SMILES into molecular graphs, build a
//! hypergraph with molecules as nodes and reactions as hyperedges, generate
//! negative (non-reactive) hyperedges by four sampling strategies, train a
//! hybrid hypergraph-convolution / message-passing / attention scorer, and
//! search for new reactant combinations with simulated annealing.

pub mod hypergraph;
pub mod model;
pub mod molparse;
pub mod negsample;
pub mod numerics;
pub mod pipeline;
pub mod screen;
pub mod seeds;
pub mod train_eval;
