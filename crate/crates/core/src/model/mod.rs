//! The reaction scoring model.
//!
//! Three representation channels are fused per node: a two-layer hyperedge
//! convolution over fingerprint features (hypergraph level), a
//! message-passing network over each molecule's atoms trained to spot
//! reaction-center atoms (molecule level), and single-head scaled dot-product
//! cross-attention between the two (reaction level). Per hyperedge, node
//! rows are concatenated and aggregated (sum, or mean under ablation), then a
//! two-layer sigmoid MLP produces the reaction likelihood.
//!
//! Losses: binary cross-entropy over edge labels, an optional zero-sum
//! penalty pushing the summed molecule embeddings of positive edges toward
//! the zero vector, and a per-atom center-prediction BCE that replaces
//! large-scale pretraining of the message-passing channel.

mod forward;
mod persist;

pub use forward::{CenterData, ForwardContext, ForwardSpec, ModelRun};
pub use persist::{load_params, save_params};

use rand::Rng;
use thiserror::Error;

use crate::numerics::{NumericsError, Tensor};
use crate::seeds;

/// Number of elements in the one-hot atom encoding.
pub const ELEMENT_COUNT: usize = 10;
/// Atom feature width: element one-hot + charge + aromatic + degree + h count.
pub const ATOM_FEATURES: usize = ELEMENT_COUNT + 4;
/// Bond feature width: order one-hot.
pub const BOND_FEATURES: usize = 4;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("edge {index} is empty")]
    EmptyEdge { index: usize },
    #[error("edge {index} references node {node}, graph has {count}")]
    BadNode {
        index: usize,
        node: usize,
        count: usize,
    },
    #[error("labels length {labels} does not match edge count {edges}")]
    LabelMismatch { labels: usize, edges: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("weight file {path}: {reason}")]
    BadWeightFile { path: String, reason: String },
}

/// Ablation switches (all on = full model).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationFlags {
    pub use_wln: bool,
    pub use_sum_aggregator: bool,
    pub use_mse_loss: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        AblationFlags {
            use_wln: true,
            use_sum_aggregator: true,
            use_mse_loss: true,
        }
    }
}

/// Model dimensions and switches. `input_dim` must equal the fingerprint
/// bit length of the hypergraph the model runs on.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hgnn_hidden: usize,
    pub d_emb: usize,
    pub d_k: usize,
    pub wln_layers: usize,
    pub wln_hidden: usize,
    pub mlp_hidden: usize,
    pub ablation: AblationFlags,
    pub seed: u64,
}

impl ModelConfig {
    pub fn with_input_dim(input_dim: usize) -> ModelConfig {
        ModelConfig {
            input_dim,
            hgnn_hidden: 64,
            d_emb: 64,
            d_k: 64,
            wln_layers: 3,
            wln_hidden: 64,
            mlp_hidden: 64,
            ablation: AblationFlags::default(),
            seed: 0,
        }
    }
}

/// A linear layer: `x · w + b` with `w: in×out`, `b: 1×out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

/// Two linear layers with a ReLU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp2 {
    pub l1: Linear,
    pub l2: Linear,
}

/// One message-passing layer: message net over `[h_v, h_u, e_uv]` and update
/// net over `[h_v, m_v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WlnLayerParams {
    pub message: Mlp2,
    pub update: Mlp2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WlnParams {
    pub layers: Vec<WlnLayerParams>,
    /// Per-atom center readout: hidden → 1, sigmoid applied by the caller.
    pub readout: Linear,
    /// Molecule embedding projection: hidden → d_emb, no bias.
    pub proj: Tensor,
}

/// Two hyperedge-convolution layers, ReLU between, linear final. No biases,
/// so zero-degree rows stay exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct HgnnParams {
    pub theta1: Tensor,
    pub theta2: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
}

/// All trainable tensors plus the configuration that shapes them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub hgnn: HgnnParams,
    pub wln: WlnParams,
    pub attn: AttentionParams,
    pub mlp: Mlp2,
}

fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect(),
    )
}

fn linear(rng: &mut impl Rng, input: usize, output: usize) -> Linear {
    Linear {
        w: glorot(rng, input, output),
        b: Tensor::zeros(1, output),
    }
}

fn mlp2(rng: &mut impl Rng, input: usize, hidden: usize, output: usize) -> Mlp2 {
    Mlp2 {
        l1: linear(rng, input, hidden),
        l2: linear(rng, hidden, output),
    }
}

impl ModelParams {
    /// Initialize all tensors from the config's seed (Glorot-uniform weights,
    /// zero biases).
    pub fn init(config: ModelConfig) -> ModelParams {
        let mut rng = seeds::substream(config.seed, "init");
        let hgnn = HgnnParams {
            theta1: glorot(&mut rng, config.input_dim, config.hgnn_hidden),
            theta2: glorot(&mut rng, config.hgnn_hidden, config.d_emb),
        };
        let mut layers = Vec::with_capacity(config.wln_layers);
        let mut node_dim = ATOM_FEATURES;
        for _ in 0..config.wln_layers {
            let message = mlp2(
                &mut rng,
                2 * node_dim + BOND_FEATURES,
                config.wln_hidden,
                config.wln_hidden,
            );
            let update = mlp2(
                &mut rng,
                node_dim + config.wln_hidden,
                config.wln_hidden,
                config.wln_hidden,
            );
            layers.push(WlnLayerParams { message, update });
            node_dim = config.wln_hidden;
        }
        let wln = WlnParams {
            readout: linear(&mut rng, config.wln_hidden, 1),
            proj: glorot(&mut rng, config.wln_hidden, config.d_emb),
            layers,
        };
        let attn = AttentionParams {
            w_q: glorot(&mut rng, config.d_emb, config.d_k),
            w_k: glorot(&mut rng, config.d_emb, config.d_k),
            w_v: glorot(&mut rng, config.d_emb, config.d_k),
        };
        let mlp = mlp2(
            &mut rng,
            config.d_emb + config.d_k,
            config.mlp_hidden,
            1,
        );
        ModelParams {
            config,
            hgnn,
            wln,
            attn,
            mlp,
        }
    }

    /// All tensors in a stable order, named for persistence and gradients.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("hgnn.theta1".into(), &self.hgnn.theta1),
            ("hgnn.theta2".into(), &self.hgnn.theta2),
        ];
        for (i, layer) in self.wln.layers.iter().enumerate() {
            out.push((format!("wln.{i}.message.l1.w"), &layer.message.l1.w));
            out.push((format!("wln.{i}.message.l1.b"), &layer.message.l1.b));
            out.push((format!("wln.{i}.message.l2.w"), &layer.message.l2.w));
            out.push((format!("wln.{i}.message.l2.b"), &layer.message.l2.b));
            out.push((format!("wln.{i}.update.l1.w"), &layer.update.l1.w));
            out.push((format!("wln.{i}.update.l1.b"), &layer.update.l1.b));
            out.push((format!("wln.{i}.update.l2.w"), &layer.update.l2.w));
            out.push((format!("wln.{i}.update.l2.b"), &layer.update.l2.b));
        }
        out.push(("wln.readout.w".into(), &self.wln.readout.w));
        out.push(("wln.readout.b".into(), &self.wln.readout.b));
        out.push(("wln.proj".into(), &self.wln.proj));
        out.push(("attn.w_q".into(), &self.attn.w_q));
        out.push(("attn.w_k".into(), &self.attn.w_k));
        out.push(("attn.w_v".into(), &self.attn.w_v));
        out.push(("mlp.l1.w".into(), &self.mlp.l1.w));
        out.push(("mlp.l1.b".into(), &self.mlp.l1.b));
        out.push(("mlp.l2.w".into(), &self.mlp.l2.w));
        out.push(("mlp.l2.b".into(), &self.mlp.l2.b));
        out
    }

    /// Mutable view of the same tensors, in the same order.
    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = vec![
            ("hgnn.theta1".into(), &mut self.hgnn.theta1),
            ("hgnn.theta2".into(), &mut self.hgnn.theta2),
        ];
        for (i, layer) in self.wln.layers.iter_mut().enumerate() {
            out.push((format!("wln.{i}.message.l1.w"), &mut layer.message.l1.w));
            out.push((format!("wln.{i}.message.l1.b"), &mut layer.message.l1.b));
            out.push((format!("wln.{i}.message.l2.w"), &mut layer.message.l2.w));
            out.push((format!("wln.{i}.message.l2.b"), &mut layer.message.l2.b));
            out.push((format!("wln.{i}.update.l1.w"), &mut layer.update.l1.w));
            out.push((format!("wln.{i}.update.l1.b"), &mut layer.update.l1.b));
            out.push((format!("wln.{i}.update.l2.w"), &mut layer.update.l2.w));
            out.push((format!("wln.{i}.update.l2.b"), &mut layer.update.l2.b));
        }
        out.push(("wln.readout.w".into(), &mut self.wln.readout.w));
        out.push(("wln.readout.b".into(), &mut self.wln.readout.b));
        out.push(("wln.proj".into(), &mut self.wln.proj));
        out.push(("attn.w_q".into(), &mut self.attn.w_q));
        out.push(("attn.w_k".into(), &mut self.attn.w_k));
        out.push(("attn.w_v".into(), &mut self.attn.w_v));
        out.push(("mlp.l1.w".into(), &mut self.mlp.l1.w));
        out.push(("mlp.l1.b".into(), &mut self.mlp.l1.b));
        out.push(("mlp.l2.w".into(), &mut self.mlp.l2.w));
        out.push(("mlp.l2.b".into(), &mut self.mlp.l2.b));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic() {
        let cfg = || ModelConfig {
            seed: 42,
            ..ModelConfig::with_input_dim(64)
        };
        let a = ModelParams::init(cfg());
        let b = ModelParams::init(cfg());
        assert_eq!(a, b);
        let c = ModelParams::init(ModelConfig {
            seed: 43,
            ..cfg()
        });
        assert_ne!(a, c);
    }

    #[test]
    fn dimension_chain_is_consistent() {
        let p = ModelParams::init(ModelConfig::with_input_dim(128));
        assert_eq!(p.hgnn.theta1.shape(), (128, 64));
        assert_eq!(p.hgnn.theta2.shape(), (64, 64));
        assert_eq!(p.wln.layers.len(), 3);
        assert_eq!(
            p.wln.layers[0].message.l1.w.shape(),
            (2 * ATOM_FEATURES + BOND_FEATURES, 64)
        );
        assert_eq!(p.wln.layers[1].message.l1.w.shape(), (2 * 64 + 4, 64));
        assert_eq!(p.wln.readout.w.shape(), (64, 1));
        assert_eq!(p.wln.proj.shape(), (64, 64));
        assert_eq!(p.mlp.l1.w.shape(), (128, 64));
        assert_eq!(p.mlp.l2.w.shape(), (64, 1));
    }

    #[test]
    fn named_tensor_views_align() {
        let mut p = ModelParams::init(ModelConfig::with_input_dim(32));
        let names: Vec<String> = p.named_tensors().into_iter().map(|(n, _)| n).collect();
        let names_mut: Vec<String> = p
            .named_tensors_mut()
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        assert_eq!(names, names_mut);
        assert_eq!(names.len(), 3 * 8 + 2 + 2 + 1 + 3 + 4);
    }
}
