//! The reaction hypergraph: molecules as nodes, reactions as hyperedges.
//!
//! Nodes are deduplicated by a normalization key: the molecule is stripped of
//! atom maps, serialized, and re-parsed, so every occurrence of the same
//! written form shares one node. Full isomorphism deduplication (which also
//! merges differently-written forms) is available behind a flag. Hyperedges
//! cover reactants only; products never become nodes.
//!
//! The structure is append-only: negative edges and virtual nodes are added
//! after construction, existing ids never change.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::molparse::{
    fingerprint, isomorphic, parse_smiles, serialize_smiles, Fingerprint, MolGraph, Reaction,
};
use crate::numerics::CsrMatrix;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum HypergraphError {
    #[error("no reactions to build from")]
    NoReactions,
    #[error("reaction {index} has no reactants")]
    EmptyReaction { index: usize },
    #[error("hyperedge has no nodes")]
    EmptyEdge,
    #[error("node index {node} out of range ({count} nodes)")]
    BadNodeIndex { node: usize, count: usize },
}

/// Positive edges are real reactions; negative edges come from sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeLabel {
    Positive,
    Negative,
}

impl EdgeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeLabel::Positive => "pos",
            EdgeLabel::Negative => "neg",
        }
    }
}

/// One molecule node.
#[derive(Debug, Clone)]
pub struct NodeRecord {
    /// Normalized molecule (atom maps stripped, atoms in serialization order).
    pub mol: MolGraph,
    /// Identity key: serialized SMILES of the normalized molecule.
    pub smiles: String,
    pub fingerprint: Fingerprint,
    pub is_virtual: bool,
}

/// One hyperedge: a set of node indices with a label and weight.
#[derive(Debug, Clone)]
pub struct Hyperedge {
    /// Sorted, deduplicated node indices.
    pub nodes: Vec<usize>,
    pub label: EdgeLabel,
    pub weight: f64,
    /// Index into the originating reaction list, for positive edges.
    pub reaction_idx: Option<usize>,
}

impl Hyperedge {
    pub fn cardinality(&self) -> usize {
        self.nodes.len()
    }
}

/// Options for [`Hypergraph::build`].
#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub fingerprint_radius: usize,
    pub fingerprint_bits: usize,
    /// Skip reactions whose reactant node set was already seen.
    pub dedup_reactions: bool,
    /// Merge nodes by graph isomorphism, not just by serialized string.
    pub isomorphism_dedup: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            fingerprint_radius: 3,
            fingerprint_bits: 2048,
            dedup_reactions: false,
            isomorphism_dedup: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Hypergraph {
    nodes: Vec<NodeRecord>,
    edges: Vec<Hyperedge>,
    /// Identity key -> node id. Virtual nodes use a `virtual:` prefix so an
    /// edited molecule can never merge with a real one.
    key_index: HashMap<String, usize>,
    fingerprint_radius: usize,
    fingerprint_bits: usize,
    isomorphism_dedup: bool,
}

impl Hypergraph {
    /// Build the positive hypergraph from a reaction list.
    pub fn build(
        reactions: &[Reaction],
        opts: &BuildOptions,
    ) -> Result<Hypergraph, HypergraphError> {
        if reactions.is_empty() {
            return Err(HypergraphError::NoReactions);
        }
        let mut h = Hypergraph {
            nodes: Vec::new(),
            edges: Vec::new(),
            key_index: HashMap::new(),
            fingerprint_radius: opts.fingerprint_radius,
            fingerprint_bits: opts.fingerprint_bits,
            isomorphism_dedup: opts.isomorphism_dedup,
        };
        let mut seen_edge_sets: HashSet<Vec<usize>> = HashSet::new();
        for (ri, reaction) in reactions.iter().enumerate() {
            if reaction.reactants.is_empty() {
                return Err(HypergraphError::EmptyReaction { index: ri });
            }
            let mut edge_nodes: Vec<usize> = reaction
                .reactants
                .iter()
                .map(|m| h.intern_molecule(m, false))
                .collect();
            edge_nodes.sort_unstable();
            edge_nodes.dedup();
            if opts.dedup_reactions && !seen_edge_sets.insert(edge_nodes.clone()) {
                continue;
            }
            h.edges.push(Hyperedge {
                nodes: edge_nodes,
                label: EdgeLabel::Positive,
                weight: 1.0,
                reaction_idx: Some(ri),
            });
        }
        Ok(h)
    }

    /// Normalize a molecule and return its node id, creating the node if new.
    pub fn intern_molecule(&mut self, mol: &MolGraph, is_virtual: bool) -> usize {
        let stripped = mol.without_maps();
        let smiles = serialize_smiles(&stripped);
        let key = if is_virtual {
            format!("virtual:{smiles}")
        } else {
            smiles.clone()
        };
        if let Some(&id) = self.key_index.get(&key) {
            return id;
        }
        if self.isomorphism_dedup {
            for (id, node) in self.nodes.iter().enumerate() {
                if node.is_virtual == is_virtual
                    && node.mol.atoms.len() == stripped.atoms.len()
                    && node.mol.bonds.len() == stripped.bonds.len()
                    && isomorphic(&node.mol, &stripped)
                {
                    return id;
                }
            }
        }
        let norm = parse_smiles(&smiles).expect("serialized SMILES must re-parse");
        let fp = fingerprint(&norm, self.fingerprint_radius, self.fingerprint_bits);
        let id = self.nodes.len();
        self.nodes.push(NodeRecord {
            mol: norm,
            smiles,
            fingerprint: fp,
            is_virtual,
        });
        self.key_index.insert(key, id);
        id
    }

    /// Append a virtual node built from `mol` plus a negative hyperedge over
    /// `partners ∪ {new node}`. Returns `(node id, edge id)`.
    pub fn add_virtual(
        &mut self,
        mol: &MolGraph,
        partners: &[usize],
    ) -> Result<(usize, usize), HypergraphError> {
        for &p in partners {
            if p >= self.nodes.len() {
                return Err(HypergraphError::BadNodeIndex {
                    node: p,
                    count: self.nodes.len(),
                });
            }
        }
        let node_id = self.intern_molecule(mol, true);
        let mut nodes: Vec<usize> = partners.to_vec();
        nodes.push(node_id);
        nodes.sort_unstable();
        nodes.dedup();
        let edge_id = self.push_edge(nodes, EdgeLabel::Negative, None)?;
        Ok((node_id, edge_id))
    }

    /// Append a negative hyperedge over existing nodes.
    pub fn add_negative_edge(&mut self, nodes: Vec<usize>) -> Result<usize, HypergraphError> {
        for &n in &nodes {
            if n >= self.nodes.len() {
                return Err(HypergraphError::BadNodeIndex {
                    node: n,
                    count: self.nodes.len(),
                });
            }
        }
        let mut nodes = nodes;
        nodes.sort_unstable();
        nodes.dedup();
        self.push_edge(nodes, EdgeLabel::Negative, None)
    }

    fn push_edge(
        &mut self,
        nodes: Vec<usize>,
        label: EdgeLabel,
        reaction_idx: Option<usize>,
    ) -> Result<usize, HypergraphError> {
        if nodes.is_empty() {
            return Err(HypergraphError::EmptyEdge);
        }
        self.edges.push(Hyperedge {
            nodes,
            label,
            weight: 1.0,
            reaction_idx,
        });
        Ok(self.edges.len() - 1)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: usize) -> &NodeRecord {
        &self.nodes[id]
    }

    pub fn edge(&self, id: usize) -> &Hyperedge {
        &self.edges[id]
    }

    pub fn nodes(&self) -> &[NodeRecord] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Hyperedge] {
        &self.edges
    }

    pub fn fingerprint_bits(&self) -> usize {
        self.fingerprint_bits
    }

    /// Node id for a molecule already interned, if any (real nodes only).
    pub fn lookup(&self, mol: &MolGraph) -> Option<usize> {
        let key = serialize_smiles(&mol.without_maps());
        self.key_index.get(&key).copied()
    }

    /// Weighted node degrees d(v) = Σ_e w_e H_{v,e}.
    pub fn node_degrees(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nodes.len()];
        for edge in &self.edges {
            for &v in &edge.nodes {
                d[v] += edge.weight;
            }
        }
        d
    }

    /// Edge degrees δ(e) = |e|.
    pub fn edge_degrees(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.cardinality() as f64).collect()
    }

    /// Incidence entries (v, e, 1.0) with H_{v,e} = 1 iff v ∈ e.
    pub fn incidence_triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        for (ei, edge) in self.edges.iter().enumerate() {
            for &v in &edge.nodes {
                t.push((v, ei, 1.0));
            }
        }
        t
    }

    pub fn incidence_matrix(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.nodes.len(), self.edges.len(), self.incidence_triplets())
    }

    /// Σ_v d(v) == Σ_e w_e·δ(e); exact for unit weights.
    pub fn handshake_holds(&self) -> bool {
        let lhs: f64 = self.node_degrees().iter().sum();
        let rhs: f64 = self
            .edges
            .iter()
            .map(|e| e.weight * e.cardinality() as f64)
            .sum();
        lhs == rhs
    }

    /// The normalized propagation operator
    /// P = D_v^{-1/2} H W D_e^{-1} H^T D_v^{-1/2}.
    ///
    /// Rows and columns of zero-degree nodes are zero (pseudo-inverse
    /// convention), so isolated virtual nodes propagate nothing.
    pub fn propagation_operator(&self) -> CsrMatrix {
        let n = self.nodes.len();
        let dv = self.node_degrees();
        let inv_sqrt: Vec<f64> = dv
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        let mut triplets = Vec::new();
        for edge in &self.edges {
            let coeff = edge.weight / edge.cardinality() as f64;
            for &u in &edge.nodes {
                for &v in &edge.nodes {
                    triplets.push((u, v, coeff * inv_sqrt[u] * inv_sqrt[v]));
                }
            }
        }
        CsrMatrix::from_triplets(n, n, triplets)
    }

    /// 2-section (clique expansion): a simple graph connecting every pair of
    /// nodes that co-occur in some hyperedge.
    pub fn clique_expand(&self) -> SectionGraph {
        self.clique_expand_where(|_| true)
    }

    /// 2-section over positive hyperedges only.
    pub fn clique_expand_positives(&self) -> SectionGraph {
        self.clique_expand_where(|e| e.label == EdgeLabel::Positive)
    }

    fn clique_expand_where(&self, keep: impl Fn(&Hyperedge) -> bool) -> SectionGraph {
        let mut adj = vec![BTreeSet::new(); self.nodes.len()];
        for edge in self.edges.iter().filter(|e| keep(e)) {
            for (i, &u) in edge.nodes.iter().enumerate() {
                for &v in &edge.nodes[i + 1..] {
                    adj[u].insert(v);
                    adj[v].insert(u);
                }
            }
        }
        SectionGraph { adj }
    }

    /// Node sets of positive hyperedges, for collision checks.
    pub fn positive_edge_sets(&self) -> HashSet<Vec<usize>> {
        self.edges
            .iter()
            .filter(|e| e.label == EdgeLabel::Positive)
            .map(|e| e.nodes.clone())
            .collect()
    }

    pub fn positive_edge_ids(&self) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&i| self.edges[i].label == EdgeLabel::Positive)
            .collect()
    }

    /// Ids of non-virtual nodes.
    pub fn real_node_ids(&self) -> Vec<usize> {
        (0..self.nodes.len())
            .filter(|&i| !self.nodes[i].is_virtual)
            .collect()
    }

    /// Line-oriented dump: node table then edge table. Bit-exact across runs
    /// given identical input order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# nodes\t{}", self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "{}\t{}\t{}", i, node.smiles, node.is_virtual as u8);
        }
        let _ = writeln!(out, "# edges\t{}", self.edges.len());
        for (i, edge) in self.edges.iter().enumerate() {
            let ids: Vec<String> = edge.nodes.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}\t{}\t{}", i, edge.label.as_str(), ids.join(","));
        }
        out
    }
}

/// Simple graph produced by clique expansion.
#[derive(Debug, Clone)]
pub struct SectionGraph {
    adj: Vec<BTreeSet<usize>>,
}

impl SectionGraph {
    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn neighbors(&self, v: usize) -> &BTreeSet<usize> {
        &self.adj[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].contains(&v)
    }

    /// Edges as (u, v) pairs with u < v.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (u, nbrs) in self.adj.iter().enumerate() {
            for &v in nbrs.iter().filter(|&&v| v > u) {
                out.push((u, v));
            }
        }
        out
    }

    /// True when `set` induces a connected subgraph.
    pub fn is_connected_subset(&self, set: &[usize]) -> bool {
        if set.is_empty() {
            return false;
        }
        let members: BTreeSet<usize> = set.iter().copied().collect();
        let mut seen = BTreeSet::new();
        let mut stack = vec![set[0]];
        seen.insert(set[0]);
        while let Some(v) = stack.pop() {
            for &u in self.adj[v].intersection(&members) {
                if seen.insert(u) {
                    stack.push(u);
                }
            }
        }
        seen.len() == members.len()
    }
}
