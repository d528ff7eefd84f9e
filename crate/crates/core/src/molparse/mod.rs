//! SMILES parsing, molecular graphs, and circular fingerprints.
//!
//! The grammar subset covers the organic-subset atoms (B, C, N, O, P, S, F,
//! Cl, Br, I), lowercase aromatic atoms, bracket atoms with charge / explicit
//! hydrogen count / atom-map number, branches, ring closures (including
//! `%nn`), and the bond symbols `-`, `=`, `#`, `:`. Stereo markers are
//! accepted and discarded; isotopes are parsed and ignored.

mod fingerprint;
mod iso;
mod parse;
mod write;

pub use fingerprint::{fingerprint, Fingerprint};
pub use iso::isomorphic;
pub use parse::{parse_reaction, parse_reaction_file, parse_smiles, ParseError, ReactionFile};
pub use write::{serialize_smiles, serialize_smiles_with_order};

/// Chemical elements the parser accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Element {
    B,
    C,
    N,
    O,
    P,
    S,
    F,
    Cl,
    Br,
    I,
}

impl Element {
    pub const ALL: [Element; 10] = [
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::P,
        Element::S,
        Element::F,
        Element::Cl,
        Element::Br,
        Element::I,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::P => "P",
            Element::S => "S",
            Element::F => "F",
            Element::Cl => "Cl",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn from_symbol(s: &str) -> Option<Element> {
        Some(match s {
            "B" => Element::B,
            "C" => Element::C,
            "N" => Element::N,
            "O" => Element::O,
            "P" => Element::P,
            "S" => Element::S,
            "F" => Element::F,
            "Cl" => Element::Cl,
            "Br" => Element::Br,
            "I" => Element::I,
            _ => return None,
        })
    }

    /// True for elements that may appear as lowercase aromatic atoms.
    pub fn supports_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S
        )
    }

    /// Lowest normal valence, used to derive implicit hydrogen counts.
    pub fn default_valence(self) -> u8 {
        match self {
            Element::B => 3,
            Element::C => 4,
            Element::N => 3,
            Element::O => 2,
            Element::P => 3,
            Element::S => 2,
            Element::F | Element::Cl | Element::Br | Element::I => 1,
        }
    }

    /// Highest normal valence, used by validity checks.
    pub fn max_valence(self) -> u8 {
        match self {
            Element::B => 3,
            Element::C => 4,
            Element::N => 3,
            Element::O => 2,
            Element::P => 5,
            Element::S => 6,
            Element::F | Element::Cl | Element::Br | Element::I => 1,
        }
    }

    /// Dense index into [`Element::ALL`], used by one-hot feature encoders.
    pub fn index(self) -> usize {
        Element::ALL.iter().position(|&e| e == self).unwrap()
    }
}

/// Bond orders distinguished by the parser and the feature encoders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Bond order in half units: single 2, aromatic 3, double 4, triple 6.
    pub fn half_units(self) -> u8 {
        match self {
            BondOrder::Single => 2,
            BondOrder::Aromatic => 3,
            BondOrder::Double => 4,
            BondOrder::Triple => 6,
        }
    }

    /// Stable small code for hashing and one-hot encoding.
    pub fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

/// One atom of a molecular graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub charge: i32,
    pub aromatic: bool,
    /// Explicit hydrogen count from a bracket atom; 0 otherwise.
    pub h_count: u8,
    pub map_num: Option<u32>,
}

impl Atom {
    pub fn new(element: Element) -> Atom {
        Atom {
            element,
            charge: 0,
            aromatic: false,
            h_count: 0,
            map_num: None,
        }
    }

    /// Attribute tuple used for isomorphism matching and fingerprints.
    pub fn invariant_key(&self) -> (Element, i32, bool, u8, Option<u32>) {
        (
            self.element,
            self.charge,
            self.aromatic,
            self.h_count,
            self.map_num,
        )
    }
}

/// An undirected bond between two atom indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn new(a: usize, b: usize, order: BondOrder) -> Bond {
        Bond { a, b, order }
    }

    pub fn other(&self, idx: usize) -> usize {
        if idx == self.a {
            self.b
        } else {
            self.a
        }
    }

    pub fn touches(&self, idx: usize) -> bool {
        self.a == idx || self.b == idx
    }
}

/// A parsed molecule: atoms, bonds, and the source string it came from.
///
/// The graph may hold several connected components (dot-separated SMILES
/// fragments stay in one `MolGraph`).
#[derive(Debug, Clone, PartialEq)]
pub struct MolGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    pub smiles_source: String,
}

impl MolGraph {
    /// Neighbor lists as `(neighbor atom index, bond index)` pairs.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for (bi, bond) in self.bonds.iter().enumerate() {
            adj[bond.a].push((bond.b, bi));
            adj[bond.b].push((bond.a, bi));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degree(&self, idx: usize) -> usize {
        self.bonds.iter().filter(|b| b.touches(idx)).count()
    }

    /// Sum of bond orders at `idx`, in half units (single = 2).
    pub fn bond_half_units(&self, idx: usize) -> u32 {
        self.bonds
            .iter()
            .filter(|b| b.touches(idx))
            .map(|b| b.order.half_units() as u32)
            .sum()
    }

    /// Implicit hydrogen count from the fixed valence table.
    pub fn implicit_h(&self, idx: usize) -> u8 {
        let atom = &self.atoms[idx];
        let used = (self.bond_half_units(idx) + 1) / 2; // round aromatic 1.5 up
        let used = used + atom.h_count as u32;
        (atom.element.default_valence() as u32).saturating_sub(used) as u8
    }

    /// Every atom's bond-order total stays within the valence table,
    /// allowing one extra unit per unit of formal charge.
    pub fn valence_ok(&self) -> bool {
        self.atoms.iter().enumerate().all(|(i, atom)| {
            let used = (self.bond_half_units(i) + 1) / 2 + atom.h_count as u32;
            used <= atom.element.max_valence() as u32 + atom.charge.unsigned_abs()
        })
    }

    /// Connected-component label per atom, labels numbered from 0 in
    /// first-seen order.
    pub fn component_labels(&self) -> Vec<usize> {
        let adj = self.adjacency();
        let mut label = vec![usize::MAX; self.atoms.len()];
        let mut next = 0;
        for start in 0..self.atoms.len() {
            if label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = next;
            while let Some(v) = stack.pop() {
                for &(u, _) in &adj[v] {
                    if label[u] == usize::MAX {
                        label[u] = next;
                        stack.push(u);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn component_count(&self) -> usize {
        self.component_labels().iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Bond indices whose removal disconnects their endpoints (bridges).
    /// A bond is a ring bond iff it is not a bridge.
    pub fn bridge_bonds(&self) -> Vec<bool> {
        let n = self.atoms.len();
        let adj = self.adjacency();
        let mut is_bridge = vec![false; self.bonds.len()];
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut timer = 0usize;
        // Iterative DFS lowlink computation.
        for start in 0..n {
            if disc[start] != usize::MAX {
                continue;
            }
            let mut stack: Vec<(usize, usize, usize)> = vec![(start, usize::MAX, 0)];
            disc[start] = timer;
            low[start] = timer;
            timer += 1;
            while let Some(&(v, parent_bond, ei)) = stack.last() {
                if ei < adj[v].len() {
                    stack.last_mut().unwrap().2 += 1;
                    let (u, bi) = adj[v][ei];
                    if bi == parent_bond {
                        continue;
                    }
                    if disc[u] == usize::MAX {
                        disc[u] = timer;
                        low[u] = timer;
                        timer += 1;
                        stack.push((u, bi, 0));
                    } else {
                        low[v] = low[v].min(disc[u]);
                    }
                } else {
                    stack.pop();
                    if let Some(&(p, _, _)) = stack.last() {
                        low[p] = low[p].min(low[v]);
                        if low[v] > disc[p] {
                            is_bridge[parent_bond] = true;
                        }
                    }
                }
            }
        }
        is_bridge
    }

    /// Copy with all atom-map numbers removed.
    pub fn without_maps(&self) -> MolGraph {
        let mut out = self.clone();
        for atom in &mut out.atoms {
            atom.map_num = None;
        }
        out
    }

    /// Map-number -> atom-index lookup.
    pub fn map_index(&self) -> std::collections::HashMap<u32, usize> {
        self.atoms
            .iter()
            .enumerate()
            .filter_map(|(i, a)| a.map_num.map(|m| (m, i)))
            .collect()
    }
}

/// One reaction: reactant molecules, optional products, optional template id.
#[derive(Debug, Clone, PartialEq)]
pub struct Reaction {
    pub reactants: Vec<MolGraph>,
    pub products: Vec<MolGraph>,
    pub template_id: Option<u32>,
}

impl Reaction {
    /// True when at least one reactant and one product atom carry map numbers.
    pub fn is_mapped(&self) -> bool {
        let has = |mols: &[MolGraph]| {
            mols.iter()
                .any(|m| m.atoms.iter().any(|a| a.map_num.is_some()))
        };
        has(&self.reactants) && has(&self.products)
    }
}
