//! Circular neighborhood-hashing fingerprints.
//!
//! Each atom starts from a hash of its invariant tuple (element, charge,
//! aromatic flag, explicit H count, degree). Every round replaces an atom's
//! identifier with a hash of its previous identifier plus the sorted multiset
//! of `(bond order, neighbor identifier)` pairs. Every identifier from every
//! round sets one bit. Radius 3 over these invariants plays the role of an
//! ECFP6-style feature vector; exact RDKit bit parity is not a goal, only
//! determinism and isomorphism invariance.

use super::MolGraph;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(hash: u64, bytes: &[u8]) -> u64 {
    let mut h = hash;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Hash a record as a length prefix followed by its fields.
fn hash_record(fields: &[u64]) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &(fields.len() as u32).to_le_bytes());
    for f in fields {
        h = fnv1a(h, &f.to_le_bytes());
    }
    h
}

/// A fixed-length bit-vector fingerprint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    words: Vec<u64>,
    bits: usize,
    radius: usize,
}

impl Fingerprint {
    fn new(bits: usize, radius: usize) -> Fingerprint {
        Fingerprint {
            words: vec![0u64; bits.div_ceil(64)],
            bits,
            radius,
        }
    }

    fn set(&mut self, pos: usize) {
        let pos = pos & (self.bits - 1);
        self.words[pos / 64] |= 1u64 << (pos % 64);
    }

    pub fn get(&self, pos: usize) -> bool {
        let pos = pos & (self.bits - 1);
        (self.words[pos / 64] >> (pos % 64)) & 1 == 1
    }

    pub fn len(&self) -> usize {
        self.bits
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Bits as 0.0/1.0 reals, for use as model input features.
    pub fn to_dense(&self) -> Vec<f64> {
        (0..self.bits)
            .map(|i| if self.get(i) { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Compute the circular fingerprint of a molecule.
///
/// `bits` must be a power of two.
pub fn fingerprint(m: &MolGraph, radius: usize, bits: usize) -> Fingerprint {
    assert!(
        bits > 0 && bits.is_power_of_two(),
        "fingerprint bit length must be a power of two, got {bits}"
    );
    let mut fp = Fingerprint::new(bits, radius);
    let adj = m.adjacency();

    let mut ids: Vec<u64> = m
        .atoms
        .iter()
        .enumerate()
        .map(|(i, a)| {
            hash_record(&[
                a.element.index() as u64,
                a.charge as i64 as u64,
                a.aromatic as u64,
                a.h_count as u64,
                adj[i].len() as u64,
            ])
        })
        .collect();
    for &id in &ids {
        fp.set(id as usize);
    }

    for _round in 0..radius {
        let mut next = Vec::with_capacity(ids.len());
        for (i, neighbors) in adj.iter().enumerate() {
            let mut env: Vec<(u8, u64)> = neighbors
                .iter()
                .map(|&(nbr, bi)| (m.bonds[bi].order.code(), ids[nbr]))
                .collect();
            env.sort_unstable();
            let mut fields = vec![ids[i]];
            for (order, nid) in env {
                fields.push(order as u64);
                fields.push(nid);
            }
            let id = hash_record(&fields);
            fp.set(id as usize);
            next.push(id);
        }
        ids = next;
    }
    fp
}
