//! SMILES serialization.
//!
//! Output is deterministic (depth-first from the lowest atom index, neighbors
//! in index order) but not canonical: two isomorphic graphs with different
//! atom orders serialize differently. `parse(serialize(m))` is always
//! graph-isomorphic to `m`.

use std::collections::HashMap;

use super::{BondOrder, MolGraph};

/// Serialize a molecular graph back to SMILES.
pub fn serialize_smiles(m: &MolGraph) -> String {
    serialize_smiles_with_order(m).0
}

/// Serialize and also report atom emission order: `order[k]` is the index
/// (into `m.atoms`) of the k-th atom in the output string. Re-parsing the
/// string yields atom `k` equal to `m.atoms[order[k]]`.
pub fn serialize_smiles_with_order(m: &MolGraph) -> (String, Vec<usize>) {
    assert!(!m.atoms.is_empty(), "cannot serialize an empty molecule");
    let adj = m.adjacency();
    let n = m.atoms.len();

    let mut out = String::new();
    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    // bond index -> ring digit, for back edges
    let mut ring_digit: HashMap<usize, u32> = HashMap::new();
    let mut used_digits = vec![false; 100];
    let mut bond_done = vec![false; m.bonds.len()];
    let mut first_component = true;

    for start in 0..n {
        if visited[start] {
            continue;
        }
        if !first_component {
            out.push('.');
        }
        first_component = false;
        write_component(
            m,
            &adj,
            start,
            &mut out,
            &mut order,
            &mut visited,
            &mut ring_digit,
            &mut used_digits,
            &mut bond_done,
        );
    }
    (out, order)
}

#[allow(clippy::too_many_arguments)]
fn write_component(
    m: &MolGraph,
    adj: &[Vec<(usize, usize)>],
    start: usize,
    out: &mut String,
    order: &mut Vec<usize>,
    visited: &mut Vec<bool>,
    ring_digit: &mut HashMap<usize, u32>,
    used_digits: &mut Vec<bool>,
    bond_done: &mut Vec<bool>,
) {
    // Pre-walk the component to classify each bond as tree or ring (back)
    // edge, so ring digits can be emitted in one output pass.
    let mut tree_children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m.atoms.len()];
    let mut ring_bonds_at: Vec<Vec<usize>> = vec![Vec::new(); m.atoms.len()];
    {
        let mut seen = vec![false; m.atoms.len()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut parent_bond = vec![usize::MAX; m.atoms.len()];
        while let Some(v) = stack.pop() {
            for &(u, bi) in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    parent_bond[u] = bi;
                    stack.push(u);
                }
            }
        }
        for v in 0..m.atoms.len() {
            if !seen[v] {
                continue;
            }
            for &(u, bi) in &adj[v] {
                if bond_done[bi] {
                    continue;
                }
                if parent_bond[u] == bi || parent_bond[v] == bi {
                    // tree edge; recorded when walking below
                } else {
                    // ring bond: emitted as a digit at both endpoints
                    bond_done[bi] = true;
                    ring_bonds_at[v].push(bi);
                    ring_bonds_at[u].push(bi);
                }
            }
        }
        for v in 0..m.atoms.len() {
            if !seen[v] {
                continue;
            }
            for &(u, bi) in &adj[v] {
                if parent_bond[u] == bi {
                    tree_children[v].push((u, bi));
                }
            }
        }
        for list in &mut ring_bonds_at {
            list.sort_unstable();
        }
    }

    // Emission pass over the spanning tree.
    let mut stack: Vec<Frame> = vec![Frame::Atom {
        idx: start,
        via: None,
    }];
    while let Some(frame) = stack.pop() {
        match frame {
            Frame::Text(s) => out.push_str(s),
            Frame::Atom { idx, via } => {
                visited[idx] = true;
                if let Some(bi) = via {
                    push_bond_symbol(m, bi, out);
                }
                push_atom(m, idx, out);
                order.push(idx);
                for &bi in &ring_bonds_at[idx] {
                    let digit = match ring_digit.remove(&bi) {
                        Some(d) => {
                            used_digits[d as usize] = false;
                            push_bond_symbol(m, bi, out);
                            d
                        }
                        None => {
                            let d = (1..100)
                                .find(|&d| !used_digits[d as usize])
                                .expect("more than 99 simultaneously open ring bonds");
                            used_digits[d as usize] = true;
                            ring_digit.insert(bi, d);
                            push_bond_symbol(m, bi, out);
                            d
                        }
                    };
                    if digit < 10 {
                        out.push((b'0' + digit as u8) as char);
                    } else {
                        out.push('%');
                        out.push((b'0' + (digit / 10) as u8) as char);
                        out.push((b'0' + (digit % 10) as u8) as char);
                    }
                }
                let children = &tree_children[idx];
                // push in reverse so children emit in index order
                for (pos, &(child, bi)) in children.iter().enumerate().rev() {
                    let last = pos == children.len() - 1;
                    if !last {
                        stack.push(Frame::Text(")"));
                    }
                    stack.push(Frame::Atom {
                        idx: child,
                        via: Some(bi),
                    });
                    if !last {
                        stack.push(Frame::Text("("));
                    }
                }
            }
        }
    }
}

enum Frame {
    Atom { idx: usize, via: Option<usize> },
    Text(&'static str),
}

fn push_bond_symbol(m: &MolGraph, bond_idx: usize, out: &mut String) {
    let bond = &m.bonds[bond_idx];
    let both_aromatic = m.atoms[bond.a].aromatic && m.atoms[bond.b].aromatic;
    match bond.order {
        BondOrder::Single => {
            if both_aromatic {
                out.push('-');
            }
        }
        BondOrder::Double => out.push('='),
        BondOrder::Triple => out.push('#'),
        BondOrder::Aromatic => {
            if !both_aromatic {
                out.push(':');
            }
        }
    }
}

fn push_atom(m: &MolGraph, idx: usize, out: &mut String) {
    let atom = &m.atoms[idx];
    let sym = atom.element.symbol();
    let needs_bracket = atom.charge != 0 || atom.h_count > 0 || atom.map_num.is_some();
    let write_symbol = |out: &mut String| {
        if atom.aromatic {
            for c in sym.chars() {
                out.push(c.to_ascii_lowercase());
            }
        } else {
            out.push_str(sym);
        }
    };
    if !needs_bracket {
        write_symbol(out);
        return;
    }
    out.push('[');
    write_symbol(out);
    match atom.h_count {
        0 => {}
        1 => out.push('H'),
        n => {
            out.push('H');
            out.push_str(&n.to_string());
        }
    }
    match atom.charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => out.push_str(&format!("+{c}")),
        c => out.push_str(&format!("-{}", -c)),
    }
    if let Some(map) = atom.map_num {
        out.push(':');
        out.push_str(&map.to_string());
    }
    out.push(']');
}
