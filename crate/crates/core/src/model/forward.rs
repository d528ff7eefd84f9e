//! Forward pass assembly on the autodiff tape.
//!
//! [`ForwardContext`] precomputes everything that depends only on the
//! hypergraph (propagation operator, fingerprint matrix, per-molecule feature
//! encodings). [`run_model`] then builds one tape per call: hyperedge
//! convolution, per-molecule message passing, cross-attention, per-edge
//! aggregation and scoring, and optionally the combined loss.

use std::collections::HashMap;

use crate::hypergraph::{EdgeLabel, Hypergraph};
use crate::molparse::MolGraph;
use crate::numerics::{CsrMatrix, Graph, NodeId, Tensor};

use super::{
    AblationFlags, Mlp2, ModelError, ModelParams, ATOM_FEATURES, BOND_FEATURES,
};

/// Encoded atom/bond features of one molecule, ready for the tape.
#[derive(Debug, Clone)]
pub struct MolFeatures {
    atom_feats: Tensor,
    /// Directed bond endpoints: row i is the message into `edge_src[i]`
    /// from `edge_dst[i]`.
    edge_src: Vec<usize>,
    edge_dst: Vec<usize>,
    edge_feats: Tensor,
    /// Per atom: directed-edge rows that target it.
    msg_groups: Vec<Vec<usize>>,
}

impl MolFeatures {
    pub fn new(mol: &MolGraph) -> MolFeatures {
        let n = mol.atoms.len();
        let adj = mol.adjacency();
        let mut rows = Vec::with_capacity(n);
        for (i, atom) in mol.atoms.iter().enumerate() {
            let mut row = vec![0.0; ATOM_FEATURES];
            row[atom.element.index()] = 1.0;
            row[10] = atom.charge as f64;
            row[11] = atom.aromatic as u8 as f64;
            row[12] = adj[i].len() as f64;
            row[13] = atom.h_count as f64;
            rows.push(row);
        }
        let atom_feats = Tensor::from_rows(&rows);

        let mut edge_src = Vec::with_capacity(2 * mol.bonds.len());
        let mut edge_dst = Vec::with_capacity(2 * mol.bonds.len());
        let mut feat_rows = Vec::with_capacity(2 * mol.bonds.len());
        let mut msg_groups = vec![Vec::new(); n];
        for bond in &mol.bonds {
            let mut onehot = vec![0.0; BOND_FEATURES];
            onehot[bond.order.code() as usize - 1] = 1.0;
            for (s, d) in [(bond.a, bond.b), (bond.b, bond.a)] {
                msg_groups[s].push(edge_src.len());
                edge_src.push(s);
                edge_dst.push(d);
                feat_rows.push(onehot.clone());
            }
        }
        let edge_feats = if feat_rows.is_empty() {
            Tensor::zeros(0, BOND_FEATURES)
        } else {
            Tensor::from_rows(&feat_rows)
        };
        MolFeatures {
            atom_feats,
            edge_src,
            edge_dst,
            edge_feats,
            msg_groups,
        }
    }

    pub fn atom_count(&self) -> usize {
        self.msg_groups.len()
    }
}

/// Hypergraph-derived inputs shared by every forward pass.
pub struct ForwardContext<'h> {
    pub hypergraph: &'h Hypergraph,
    propagation: CsrMatrix,
    x0: Tensor,
    mols: Vec<MolFeatures>,
}

impl<'h> ForwardContext<'h> {
    pub fn new(h: &'h Hypergraph) -> ForwardContext<'h> {
        let n = h.node_count();
        let bits = h.fingerprint_bits();
        let mut x0 = Tensor::zeros(n, bits);
        for (i, node) in h.nodes().iter().enumerate() {
            let dense = node.fingerprint.to_dense();
            x0.data_mut()[i * bits..(i + 1) * bits].copy_from_slice(&dense);
        }
        ForwardContext {
            hypergraph: h,
            propagation: h.propagation_operator(),
            x0,
            mols: h.nodes().iter().map(|n| MolFeatures::new(&n.mol)).collect(),
        }
    }

    pub fn propagation(&self) -> &CsrMatrix {
        &self.propagation
    }

    pub fn node_features(&self) -> &Tensor {
        &self.x0
    }
}

/// Per-atom reaction-center labels: one entry per (node, reaction occurrence),
/// labels in the node's atom order.
#[derive(Debug, Clone, Default)]
pub struct CenterData {
    pub occurrences: Vec<(usize, Vec<f64>)>,
}

/// What to score and which loss terms to assemble.
pub struct ForwardSpec<'a> {
    pub edges: &'a [Vec<usize>],
    /// 0.0/1.0 labels; enables the loss when present.
    pub labels: Option<&'a [f64]>,
    pub lambda_mse: f64,
    pub center_weight: f64,
    pub center_data: Option<&'a CenterData>,
}

impl<'a> ForwardSpec<'a> {
    /// Score edges only, no loss.
    pub fn scoring(edges: &'a [Vec<usize>]) -> ForwardSpec<'a> {
        ForwardSpec {
            edges,
            labels: None,
            lambda_mse: 0.0,
            center_weight: 0.0,
            center_data: None,
        }
    }
}

struct Mlp2Ids {
    l1w: NodeId,
    l1b: NodeId,
    l2w: NodeId,
    l2b: NodeId,
}

fn mlp2_forward(
    g: &mut Graph,
    ids: &Mlp2Ids,
    x: NodeId,
) -> Result<NodeId, ModelError> {
    let a = g.matmul(x, ids.l1w)?;
    let a = g.add_row_bias(a, ids.l1b)?;
    let a = g.relu(a)?;
    let b = g.matmul(a, ids.l2w)?;
    Ok(g.add_row_bias(b, ids.l2b)?)
}

/// A completed forward pass: values out, tape kept for backward.
pub struct ModelRun {
    graph: Graph,
    param_index: Vec<(String, NodeId)>,
    loss_node: Option<NodeId>,
    /// ŷ per requested edge, in request order.
    pub scores: Vec<f64>,
    /// Total loss value when labels were provided.
    pub loss: Option<f64>,
    /// Per-node hyperedge-convolution output X (n × d_emb).
    pub node_embeddings: Tensor,
    /// Per-node molecule embeddings X_GNN (n × d_emb); zero when the
    /// message-passing channel is ablated.
    pub molecule_embeddings: Tensor,
    /// Attention output X_attn (n × d_k).
    pub attention_embeddings: Tensor,
    /// Aggregated per-edge embeddings r_e (edges × (d_emb + d_k)).
    pub edge_embeddings: Tensor,
    /// Per node: per-atom reaction-center scores from the readout.
    pub center_scores: Vec<Option<Vec<f64>>>,
}

impl ModelRun {
    /// Backpropagate from the loss. Requires labels to have been provided.
    pub fn backward(&mut self) -> Result<(), ModelError> {
        let loss = self
            .loss_node
            .expect("backward requires a loss (labels were not provided)");
        self.graph.backward(loss)?;
        Ok(())
    }

    /// Gradient for a named parameter, if it received one.
    pub fn gradient(&self, name: &str) -> Option<&Tensor> {
        let (_, id) = self.param_index.iter().find(|(n, _)| n == name)?;
        self.graph.grad(*id)
    }
}

/// Run the model over the hypergraph context and the requested edges.
pub fn run_model(
    params: &ModelParams,
    ctx: &ForwardContext,
    spec: &ForwardSpec,
) -> Result<ModelRun, ModelError> {
    let n = ctx.hypergraph.node_count();
    for (index, edge) in spec.edges.iter().enumerate() {
        if edge.is_empty() {
            return Err(ModelError::EmptyEdge { index });
        }
        if let Some(&node) = edge.iter().find(|&&v| v >= n) {
            return Err(ModelError::BadNode {
                index,
                node,
                count: n,
            });
        }
    }
    if let Some(labels) = spec.labels {
        if labels.len() != spec.edges.len() {
            return Err(ModelError::LabelMismatch {
                labels: labels.len(),
                edges: spec.edges.len(),
            });
        }
    }

    let mut g = Graph::new();
    let mut param_index = Vec::new();
    for (name, tensor) in params.named_tensors() {
        let id = g.param(tensor.clone());
        param_index.push((name, id));
    }
    let by_name: HashMap<&str, NodeId> = param_index
        .iter()
        .map(|(n, id)| (n.as_str(), *id))
        .collect();
    let id = |name: &str| -> NodeId { by_name[name] };
    let mlp_ids = |prefix: &str| -> Mlp2Ids {
        Mlp2Ids {
            l1w: id(&format!("{prefix}.l1.w")),
            l1b: id(&format!("{prefix}.l1.b")),
            l2w: id(&format!("{prefix}.l2.w")),
            l2b: id(&format!("{prefix}.l2.b")),
        }
    };

    let ablation = params.config.ablation;

    // hypergraph channel: X = P·relu(P·X0·Θ1)·Θ2
    let p_sparse = g.sparse(ctx.propagation.clone());
    let x0 = g.input(ctx.x0.clone());
    let xt = g.matmul(x0, id("hgnn.theta1"))?;
    let px = g.spmm(p_sparse, xt)?;
    let h1 = g.relu(px)?;
    let xt2 = g.matmul(h1, id("hgnn.theta2"))?;
    let x = g.spmm(p_sparse, xt2)?;

    // molecule channel: per-node message passing, mean-pooled and projected
    let mut center_scores: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut wln_score_nodes: Vec<Option<NodeId>> = vec![None; n];
    let x_gnn = if ablation.use_wln {
        let readout_w = id("wln.readout.w");
        let readout_b = id("wln.readout.b");
        let proj = id("wln.proj");
        let layer_ids: Vec<(Mlp2Ids, Mlp2Ids)> = (0..params.config.wln_layers)
            .map(|l| {
                (
                    mlp_ids(&format!("wln.{l}.message")),
                    mlp_ids(&format!("wln.{l}.update")),
                )
            })
            .collect();
        let mut rows = Vec::with_capacity(n);
        for (ni, mf) in ctx.mols.iter().enumerate() {
            let mut h = g.input(mf.atom_feats.clone());
            for (message, update) in &layer_ids {
                let hv = g.select_rows(h, &mf.edge_src)?;
                let hu = g.select_rows(h, &mf.edge_dst)?;
                let pair = g.concat_cols(hv, hu)?;
                let ef = g.input(mf.edge_feats.clone());
                let pair = g.concat_cols(pair, ef)?;
                let msg = mlp2_forward(&mut g, message, pair)?;
                let m = g.aggregate_rows(msg, &mf.msg_groups, false)?;
                let ui = g.concat_cols(h, m)?;
                h = mlp2_forward(&mut g, update, ui)?;
            }
            let raw = g.matmul(h, readout_w)?;
            let raw = g.add_row_bias(raw, readout_b)?;
            let score = g.sigmoid(raw)?;
            center_scores[ni] = Some(g.value(score).data().to_vec());
            wln_score_nodes[ni] = Some(score);
            let pooled = g.mean_rows(h)?;
            rows.push(g.matmul(pooled, proj)?);
        }
        g.concat_rows(&rows)?
    } else {
        g.input(Tensor::zeros(n, params.config.d_emb))
    };

    // reaction channel: single-head scaled dot-product cross-attention
    let q = g.matmul(x, id("attn.w_q"))?;
    let k = g.matmul(x_gnn, id("attn.w_k"))?;
    let v = g.matmul(x_gnn, id("attn.w_v"))?;
    let kt = g.transpose(k)?;
    let qk = g.matmul(q, kt)?;
    let scaled = g.scale(qk, 1.0 / (params.config.d_k as f64).sqrt())?;
    let weights = g.softmax_rows(scaled)?;
    let x_attn = g.matmul(weights, v)?;

    // fuse and score
    let z = g.concat_cols(x, x_attn)?;
    let r = g.aggregate_rows(z, spec.edges, !ablation.use_sum_aggregator)?;
    let mlp = mlp_ids("mlp");
    let logits = mlp2_forward(&mut g, &mlp, r)?;
    let yhat = g.sigmoid(logits)?;

    let scores = g.value(yhat).data().to_vec();
    let node_embeddings = g.value(x).clone();
    let molecule_embeddings = g.value(x_gnn).clone();
    let attention_embeddings = g.value(x_attn).clone();
    let edge_embeddings = g.value(r).clone();

    let mut loss_node = None;
    let mut loss = None;
    if let Some(labels) = spec.labels {
        let mut total = bce_loss(&mut g, yhat, labels)?;

        if ablation.use_mse_loss && spec.lambda_mse > 0.0 {
            let pos_groups: Vec<Vec<usize>> = spec
                .edges
                .iter()
                .zip(labels)
                .filter(|(_, &y)| y >= 0.5)
                .map(|(e, _)| e.clone())
                .collect();
            if !pos_groups.is_empty() {
                let r_pos = g.aggregate_rows(x_gnn, &pos_groups, false)?;
                let sq = g.mul_elem(r_pos, r_pos)?;
                let ssum = g.sum_all(sq)?;
                let mse = g.scale(ssum, spec.lambda_mse / pos_groups.len() as f64)?;
                total = g.add(total, mse)?;
            }
        }

        if spec.center_weight > 0.0 && ablation.use_wln {
            if let Some(data) = spec.center_data {
                let mut parts = Vec::new();
                let mut flat_labels = Vec::new();
                for (node, atom_labels) in &data.occurrences {
                    let score = wln_score_nodes[*node]
                        .expect("center data requires the molecule channel");
                    assert_eq!(
                        atom_labels.len(),
                        ctx.mols[*node].atom_count(),
                        "center labels must cover every atom of node {node}"
                    );
                    parts.push(score);
                    flat_labels.extend_from_slice(atom_labels);
                }
                if !parts.is_empty() {
                    let all = g.concat_rows(&parts)?;
                    let center_bce = bce_loss(&mut g, all, &flat_labels)?;
                    let weighted = g.scale(center_bce, spec.center_weight)?;
                    total = g.add(total, weighted)?;
                }
            }
        }
        loss = Some(g.value(total).scalar());
        loss_node = Some(total);
    }

    Ok(ModelRun {
        graph: g,
        param_index,
        loss_node,
        scores,
        loss,
        node_embeddings,
        molecule_embeddings,
        attention_embeddings,
        edge_embeddings,
        center_scores,
    })
}

/// −(1/N)·Σ [y·ln ŷ + (1−y)·ln(1−ŷ)], with ŷ clamped to [1e-12, 1−1e-12].
fn bce_loss(g: &mut Graph, yhat: NodeId, labels: &[f64]) -> Result<NodeId, ModelError> {
    let count = labels.len();
    debug_assert_eq!(g.value(yhat).shape(), (count, 1));
    let y = g.input(Tensor::column(labels));
    let inv: Vec<f64> = labels.iter().map(|&v| 1.0 - v).collect();
    let y_inv = g.input(Tensor::column(&inv));
    let ones = g.input(Tensor::filled(count, 1, 1.0));

    let yc = g.clamp(yhat, 1e-12, 1.0 - 1e-12)?;
    let ln_y = g.ln(yc)?;
    let om = g.sub(ones, yhat)?;
    let omc = g.clamp(om, 1e-12, 1.0 - 1e-12)?;
    let ln_om = g.ln(omc)?;
    let t1 = g.mul_elem(y, ln_y)?;
    let t2 = g.mul_elem(y_inv, ln_om)?;
    let s = g.add(t1, t2)?;
    let total = g.sum_all(s)?;
    Ok(g.scale(total, -1.0 / count as f64)?)
}

/// Convenience wrapper: score hypothetical edges with no loss machinery.
pub fn score_edges(
    params: &ModelParams,
    ctx: &ForwardContext,
    edges: &[Vec<usize>],
) -> Result<ModelRun, ModelError> {
    run_model(params, ctx, &ForwardSpec::scoring(edges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{BuildOptions, Hypergraph};
    use crate::molparse::parse_reaction;
    use crate::model::ModelConfig;

    fn toy_hypergraph(lines: &[&str], bits: usize) -> Hypergraph {
        let reactions: Vec<_> = lines.iter().map(|l| parse_reaction(l).unwrap()).collect();
        let opts = BuildOptions {
            fingerprint_bits: bits,
            ..Default::default()
        };
        Hypergraph::build(&reactions, &opts).unwrap()
    }

    fn toy_config(h: &Hypergraph) -> ModelConfig {
        ModelConfig {
            hgnn_hidden: 8,
            d_emb: 8,
            d_k: 8,
            wln_layers: 2,
            wln_hidden: 8,
            mlp_hidden: 8,
            seed: 11,
            ..ModelConfig::with_input_dim(h.fingerprint_bits())
        }
    }

    fn all_edges(h: &Hypergraph) -> Vec<Vec<usize>> {
        h.edges().iter().map(|e| e.nodes.clone()).collect()
    }

    #[test]
    fn identity_thetas_reduce_to_double_propagation() {
        let h = toy_hypergraph(&["CCO.CC", "CC.CCC", "CCO.CCC"], 8);
        let mut cfg = toy_config(&h);
        cfg.ablation.use_wln = false;
        let mut params = ModelParams::init(cfg);
        params.hgnn.theta1 = Tensor::identity(8);
        params.hgnn.theta2 = Tensor::identity(8);
        let ctx = ForwardContext::new(&h);
        let edges = all_edges(&h);
        let run = run_model(&params, &ctx, &ForwardSpec::scoring(&edges)).unwrap();
        // X0 is nonnegative, so the ReLU between layers is a no-op and the
        // full chain collapses to P·(P·X0)
        let expected = ctx.propagation().mul_dense(&ctx.propagation().mul_dense(ctx.node_features()));
        for (a, b) in run.node_embeddings.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_key_value_projections_zero_the_attention() {
        let h = toy_hypergraph(&["CCO.CC", "CC.CCC"], 16);
        let cfg = toy_config(&h);
        let mut params = ModelParams::init(cfg);
        params.attn.w_k = Tensor::zeros(8, 8);
        params.attn.w_v = Tensor::zeros(8, 8);
        let ctx = ForwardContext::new(&h);
        let edges = all_edges(&h);
        let run = run_model(&params, &ctx, &ForwardSpec::scoring(&edges)).unwrap();
        assert!(run.attention_embeddings.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_node_attention_weight_is_one() {
        let h = toy_hypergraph(&["CCO"], 16);
        let params = ModelParams::init(toy_config(&h));
        let ctx = ForwardContext::new(&h);
        let edges = all_edges(&h);
        let run = run_model(&params, &ctx, &ForwardSpec::scoring(&edges)).unwrap();
        // softmax over a single node is exactly 1, so X_attn = X_GNN · W_V
        let expected = run.molecule_embeddings.matmul(&params.attn.w_v);
        for (a, b) in run.attention_embeddings.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn singleton_edge_embedding_equals_node_row() {
        let h = toy_hypergraph(&["CCO", "CC.CCO"], 16);
        let params = ModelParams::init(toy_config(&h));
        let ctx = ForwardContext::new(&h);
        let edges = vec![vec![0usize]];
        let run = run_model(&params, &ctx, &ForwardSpec::scoring(&edges)).unwrap();
        let z: Vec<f64> = run
            .node_embeddings
            .row(0)
            .iter()
            .chain(run.attention_embeddings.row(0))
            .copied()
            .collect();
        assert_eq!(run.edge_embeddings.row(0), &z[..]);
        assert!(run.scores[0] > 0.0 && run.scores[0] < 1.0);
    }

    #[test]
    fn sum_and_mean_aggregators_differ_by_cardinality() {
        let h = toy_hypergraph(&["CCO.CC.CCC"], 16);
        let cfg = toy_config(&h);
        let mut cfg_mean = cfg.clone();
        cfg_mean.ablation.use_sum_aggregator = false;
        let params_sum = ModelParams::init(cfg);
        let mut params_mean = ModelParams::init(cfg_mean);
        // same weights, different aggregator
        params_mean.hgnn = params_sum.hgnn.clone();
        params_mean.wln = params_sum.wln.clone();
        params_mean.attn = params_sum.attn.clone();
        params_mean.mlp = params_sum.mlp.clone();
        let ctx = ForwardContext::new(&h);
        let edges = all_edges(&h);
        let sum_run = run_model(&params_sum, &ctx, &ForwardSpec::scoring(&edges)).unwrap();
        let mean_run = run_model(&params_mean, &ctx, &ForwardSpec::scoring(&edges)).unwrap();
        let k = edges[0].len() as f64;
        for (s, m) in sum_run
            .edge_embeddings
            .data()
            .iter()
            .zip(mean_run.edge_embeddings.data())
        {
            assert!((s - k * m).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_mlp_weights_give_ln2_bce() {
        let h = toy_hypergraph(&["CCO.CC", "CC.CCC"], 16);
        let mut params = ModelParams::init(toy_config(&h));
        params.mlp.l1.w = Tensor::zeros(16, 8);
        params.mlp.l2.w = Tensor::zeros(8, 1);
        let ctx = ForwardContext::new(&h);
        let edges = all_edges(&h);
        let labels = vec![1.0, 0.0];
        let spec = ForwardSpec {
            edges: &edges,
            labels: Some(&labels),
            lambda_mse: 0.0,
            center_weight: 0.0,
            center_data: None,
        };
        let run = run_model(&params, &ctx, &spec).unwrap();
        assert!(run.scores.iter().all(|&s| s == 0.5));
        assert!((run.loss.unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn mse_term_matches_independent_recomputation() {
        let h = toy_hypergraph(&["CCO.CC", "CC.CCC", "CCO.CCC"], 16);
        let params = ModelParams::init(toy_config(&h));
        let ctx = ForwardContext::new(&h);
        let edges = all_edges(&h);
        let labels = vec![1.0, 1.0, 0.0];
        let base = ForwardSpec {
            edges: &edges,
            labels: Some(&labels),
            lambda_mse: 0.0,
            center_weight: 0.0,
            center_data: None,
        };
        let with_mse = ForwardSpec {
            lambda_mse: 0.7,
            ..base
        };
        let base = ForwardSpec {
            edges: &edges,
            labels: Some(&labels),
            lambda_mse: 0.0,
            center_weight: 0.0,
            center_data: None,
        };
        let run0 = run_model(&params, &ctx, &base).unwrap();
        let run1 = run_model(&params, &ctx, &with_mse).unwrap();
        // recompute (λ/P)·Σ‖Σ_v X_GNN[v]‖² from the exported embeddings
        let emb = &run1.molecule_embeddings;
        let mut total = 0.0;
        let mut count = 0;
        for (edge, &y) in edges.iter().zip(&labels) {
            if y < 0.5 {
                continue;
            }
            count += 1;
            let mut sum = vec![0.0; emb.cols()];
            for &v in edge {
                for (s, &e) in sum.iter_mut().zip(emb.row(v)) {
                    *s += e;
                }
            }
            total += sum.iter().map(|v| v * v).sum::<f64>();
        }
        let expected = 0.7 * total / count as f64;
        let got = run1.loss.unwrap() - run0.loss.unwrap();
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
    }

    #[test]
    fn wln_ablation_ignores_wln_weights() {
        let h = toy_hypergraph(&["CCO.CC", "CC.CCC"], 16);
        let mut cfg = toy_config(&h);
        cfg.ablation.use_wln = false;
        let params_a = ModelParams::init(cfg.clone());
        let mut params_b = params_a.clone();
        // scramble the message-passing weights; scores must not move
        for t in [
            &mut params_b.wln.proj,
            &mut params_b.wln.readout.w,
            &mut params_b.wln.layers[0].message.l1.w,
        ] {
            t.scale_in_place(-3.5);
        }
        let ctx = ForwardContext::new(&h);
        let edges = all_edges(&h);
        let a = run_model(&params_a, &ctx, &ForwardSpec::scoring(&edges)).unwrap();
        let b = run_model(&params_b, &ctx, &ForwardSpec::scoring(&edges)).unwrap();
        assert_eq!(a.scores, b.scores);
        assert!(a.molecule_embeddings.data().iter().all(|&v| v == 0.0));
        assert!(a.attention_embeddings.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_atom_molecule_matches_manual_update_chain() {
        let h = toy_hypergraph(&["C"], 16);
        let params = ModelParams::init(toy_config(&h));
        let ctx = ForwardContext::new(&h);
        let edges = all_edges(&h);
        let run = run_model(&params, &ctx, &ForwardSpec::scoring(&edges)).unwrap();

        // messages are zero for an isolated atom: h ← ψ([h, 0]) per layer
        let mf = MolFeatures::new(&h.node(0).mol);
        let mut hrow = mf.atom_feats.clone();
        for layer in &params.wln.layers {
            let zeros = Tensor::zeros(1, params.config.wln_hidden);
            let mut cat = Vec::new();
            cat.extend_from_slice(hrow.row(0));
            cat.extend_from_slice(zeros.row(0));
            let cat = Tensor::from_vec(1, cat.len(), cat);
            let a = cat.matmul(&layer.update.l1.w);
            let mut a = a;
            a.add_in_place(&layer.update.l1.b);
            for v in a.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let mut b = a.matmul(&layer.update.l2.w);
            b.add_in_place(&layer.update.l2.b);
            hrow = b;
        }
        let expected = hrow.matmul(&params.wln.proj);
        for (a, b) in run.molecule_embeddings.row(0).iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let scores = run.center_scores[0].as_ref().unwrap();
        assert_eq!(scores.len(), 1);
        assert!(scores[0] > 0.0 && scores[0] < 1.0);
    }

    #[test]
    fn symmetric_atoms_get_equal_center_scores() {
        let h = toy_hypergraph(&["CC"], 16);
        let params = ModelParams::init(toy_config(&h));
        let ctx = ForwardContext::new(&h);
        let edges = all_edges(&h);
        let run = run_model(&params, &ctx, &ForwardSpec::scoring(&edges)).unwrap();
        let scores = run.center_scores[0].as_ref().unwrap();
        assert_eq!(scores.len(), 2);
        assert!((scores[0] - scores[1]).abs() < 1e-14);
    }

    #[test]
    fn rewritten_molecule_gets_identical_embedding() {
        // ethanol written two ways becomes two nodes; mean pooling makes
        // their molecule embeddings identical anyway
        let h = toy_hypergraph(&["OCC.C", "CCO.CC"], 16);
        let params = ModelParams::init(toy_config(&h));
        let ctx = ForwardContext::new(&h);
        let edges = all_edges(&h);
        let run = run_model(&params, &ctx, &ForwardSpec::scoring(&edges)).unwrap();
        let a = h.lookup(&crate::molparse::parse_smiles("OCC").unwrap()).unwrap();
        let b = h.lookup(&crate::molparse::parse_smiles("CCO").unwrap()).unwrap();
        assert_ne!(a, b);
        for (x, y) in run
            .molecule_embeddings
            .row(a)
            .iter()
            .zip(run.molecule_embeddings.row(b))
        {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn permuting_reaction_order_permutes_rows() {
        let lines_a = ["CCO.CC", "CC.CCC", "CCO.CCC"];
        let lines_b = ["CC.CCC", "CCO.CCC", "CCO.CC"];
        let ha = toy_hypergraph(&lines_a, 16);
        let hb = toy_hypergraph(&lines_b, 16);
        let cfg_a = toy_config(&ha);
        let params_a = ModelParams::init(cfg_a.clone());
        let params_b = ModelParams::init(cfg_a);
        let ctx_a = ForwardContext::new(&ha);
        let ctx_b = ForwardContext::new(&hb);
        let edges_a = all_edges(&ha);
        let edges_b = all_edges(&hb);
        let run_a = run_model(&params_a, &ctx_a, &ForwardSpec::scoring(&edges_a)).unwrap();
        let run_b = run_model(&params_b, &ctx_b, &ForwardSpec::scoring(&edges_b)).unwrap();
        // map node ids via identity keys
        for (ia, node) in ha.nodes().iter().enumerate() {
            let ib = hb
                .nodes()
                .iter()
                .position(|n| n.smiles == node.smiles)
                .unwrap();
            for (x, y) in run_a
                .node_embeddings
                .row(ia)
                .iter()
                .zip(run_b.node_embeddings.row(ib))
            {
                assert!((x - y).abs() < 1e-10);
            }
        }
        // per-edge scores: same reactions, same scores regardless of order
        for (ea, edge) in ha.edges().iter().enumerate() {
            let set_a: Vec<String> = edge
                .nodes
                .iter()
                .map(|&v| ha.node(v).smiles.clone())
                .collect();
            let eb = hb
                .edges()
                .iter()
                .position(|e| {
                    let set_b: Vec<String> =
                        e.nodes.iter().map(|&v| hb.node(v).smiles.clone()).collect();
                    let mut a = set_a.clone();
                    let mut b = set_b;
                    a.sort();
                    b.sort();
                    a == b
                })
                .unwrap();
            assert!((run_a.scores[ea] - run_b.scores[eb]).abs() < 1e-10);
        }
    }

    #[test]
    fn deterministic_scores_across_runs() {
        let h = toy_hypergraph(&["CCO.CC", "CC.CCC"], 16);
        let params = ModelParams::init(toy_config(&h));
        let ctx = ForwardContext::new(&h);
        let edges = all_edges(&h);
        let labels = vec![1.0, 0.0];
        let spec = || ForwardSpec {
            edges: &edges,
            labels: Some(&labels),
            lambda_mse: 0.1,
            center_weight: 0.0,
            center_data: None,
        };
        let a = run_model(&params, &ctx, &spec()).unwrap();
        let b = run_model(&params, &ctx, &spec()).unwrap();
        assert_eq!(a.scores, b.scores);
        assert_eq!(a.loss, b.loss);
    }

    #[test]
    fn rejects_bad_edges() {
        let h = toy_hypergraph(&["CCO.CC"], 16);
        let params = ModelParams::init(toy_config(&h));
        let ctx = ForwardContext::new(&h);
        assert!(matches!(
            run_model(&params, &ctx, &ForwardSpec::scoring(&[vec![]])),
            Err(ModelError::EmptyEdge { index: 0 })
        ));
        assert!(matches!(
            run_model(&params, &ctx, &ForwardSpec::scoring(&[vec![99]])),
            Err(ModelError::BadNode { .. })
        ));
    }
}
