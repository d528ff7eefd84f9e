//! Attribute-preserving graph isomorphism for small molecules.
//!
//! Backtracking matcher in the VF2 style: atoms must agree on the full
//! invariant tuple (element, charge, aromatic, explicit H, map number),
//! bonds on order. Intended for molecule-sized graphs; used by round-trip
//! tests and the optional isomorphism node-deduplication path.

use super::MolGraph;

/// True when the two graphs are isomorphic with matching atom and bond
/// attributes.
pub fn isomorphic(a: &MolGraph, b: &MolGraph) -> bool {
    if a.atoms.len() != b.atoms.len() || a.bonds.len() != b.bonds.len() {
        return false;
    }
    let n = a.atoms.len();
    if n == 0 {
        return true;
    }

    // cheap rejections: sorted invariant multisets and degree sequences
    let mut ka: Vec<_> = a.atoms.iter().map(|x| x.invariant_key()).collect();
    let mut kb: Vec<_> = b.atoms.iter().map(|x| x.invariant_key()).collect();
    ka.sort();
    kb.sort();
    if ka != kb {
        return false;
    }
    let adj_a = a.adjacency();
    let adj_b = b.adjacency();
    let mut da: Vec<_> = adj_a.iter().map(|l| l.len()).collect();
    let mut db: Vec<_> = adj_b.iter().map(|l| l.len()).collect();
    da.sort_unstable();
    db.sort_unstable();
    if da != db {
        return false;
    }

    let mut map_ab = vec![usize::MAX; n];
    let mut used_b = vec![false; n];
    match_next(a, b, &adj_a, &adj_b, &mut map_ab, &mut used_b, 0)
}

fn match_next(
    a: &MolGraph,
    b: &MolGraph,
    adj_a: &[Vec<(usize, usize)>],
    adj_b: &[Vec<(usize, usize)>],
    map_ab: &mut Vec<usize>,
    used_b: &mut Vec<bool>,
    depth: usize,
) -> bool {
    let n = a.atoms.len();
    if depth == n {
        return true;
    }
    // prefer an unmapped atom adjacent to the mapped region; fall back to
    // the lowest unmapped index (new component)
    let next = (0..n)
        .filter(|&i| map_ab[i] == usize::MAX)
        .find(|&i| adj_a[i].iter().any(|&(u, _)| map_ab[u] != usize::MAX))
        .unwrap_or_else(|| (0..n).find(|&i| map_ab[i] == usize::MAX).unwrap());

    let key = a.atoms[next].invariant_key();
    'cand: for cand in 0..n {
        if used_b[cand]
            || b.atoms[cand].invariant_key() != key
            || adj_b[cand].len() != adj_a[next].len()
        {
            continue;
        }
        // every mapped neighbor of `next` must connect to `cand` with the
        // same bond order, and vice versa
        for &(u, bi) in &adj_a[next] {
            if map_ab[u] == usize::MAX {
                continue;
            }
            let order = a.bonds[bi].order;
            let ok = adj_b[cand]
                .iter()
                .any(|&(v, bj)| v == map_ab[u] && b.bonds[bj].order == order);
            if !ok {
                continue 'cand;
            }
        }
        let mapped_edges_a = adj_a[next]
            .iter()
            .filter(|&&(u, _)| map_ab[u] != usize::MAX)
            .count();
        let mapped_edges_b = adj_b[cand]
            .iter()
            .filter(|&&(v, _)| used_b[v])
            .count();
        if mapped_edges_a != mapped_edges_b {
            continue;
        }

        map_ab[next] = cand;
        used_b[cand] = true;
        if match_next(a, b, adj_a, adj_b, map_ab, used_b, depth + 1) {
            return true;
        }
        map_ab[next] = usize::MAX;
        used_b[cand] = false;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molparse::parse_smiles;

    fn iso(a: &str, b: &str) -> bool {
        isomorphic(&parse_smiles(a).unwrap(), &parse_smiles(b).unwrap())
    }

    #[test]
    fn same_molecule_different_writing() {
        assert!(iso("CCO", "OCC"));
        assert!(iso("c1ccccc1", "c1ccccc1"));
        assert!(iso("CC(C)C", "C(C)(C)C"));
        assert!(iso("C1CC1C", "CC1CC1"));
    }

    #[test]
    fn distinguishes_structures() {
        assert!(!iso("CCO", "CCN"));
        assert!(!iso("CCC", "CC"));
        assert!(!iso("C=CC", "CCC"));
        // same formula, different connectivity
        assert!(!iso("CCCC", "CC(C)C"));
        // aromatic vs aliphatic ring
        assert!(!iso("c1ccccc1", "C1CCCCC1"));
    }

    #[test]
    fn maps_must_agree() {
        assert!(!iso("[CH3:1]O", "[CH3:2]O"));
        assert!(iso("[CH3:1]O", "O[CH3:1]"));
    }

    #[test]
    fn disconnected_components() {
        assert!(iso("CC.O", "O.CC"));
        assert!(!iso("CC.O", "CCO"));
    }
}
