//! Domain-separated SHA-256 Merkle tree.
//!
//! Leaves hash as `H(0x00 ‖ leaf)`, interior nodes as `H(0x01 ‖ left ‖ right)`.
//! A level with an odd node count pairs its last node with itself. The
//! root of no leaves is `H(0x00)`.

use sha2::{Digest, Sha256};
use thiserror::Error;

pub type Hash = [u8; 32];

const LEAF: u8 = 0x00;
const NODE: u8 = 0x01;

pub fn sha256(parts: &[&[u8]]) -> Hash {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

pub fn leaf_hash(leaf: &[u8]) -> Hash {
    sha256(&[&[LEAF], leaf])
}

pub fn node_hash(left: &Hash, right: &Hash) -> Hash {
    sha256(&[&[NODE], left, right])
}

fn next_level(level: &[Hash]) -> Vec<Hash> {
    level
        .chunks(2)
        .map(|pair| node_hash(&pair[0], pair.get(1).unwrap_or(&pair[0])))
        .collect()
}

pub fn merkle_root<L: AsRef<[u8]>>(leaves: &[L]) -> Hash {
    if leaves.is_empty() {
        return sha256(&[&[LEAF]]);
    }
    let mut level: Vec<Hash> = leaves.iter().map(|l| leaf_hash(l.as_ref())).collect();
    while level.len() > 1 {
        level = next_level(&level);
    }
    level[0]
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("leaf index {index} out of range for {len} leaves")]
pub struct ProofIndexError {
    pub index: usize,
    pub len: usize,
}

/// Sibling hashes from the leaf level up to (excluding) the root.
pub fn merkle_proof<L: AsRef<[u8]>>(leaves: &[L], index: usize) -> Result<Vec<Hash>, ProofIndexError> {
    if index >= leaves.len() {
        return Err(ProofIndexError {
            index,
            len: leaves.len(),
        });
    }
    let mut level: Vec<Hash> = leaves.iter().map(|l| leaf_hash(l.as_ref())).collect();
    let mut pos = index;
    let mut path = Vec::new();
    while level.len() > 1 {
        let sibling = pos ^ 1;
        path.push(*level.get(sibling).unwrap_or(&level[pos]));
        level = next_level(&level);
        pos /= 2;
    }
    Ok(path)
}

pub fn verify_proof(root: &Hash, leaf: &[u8], index: usize, path: &[Hash]) -> bool {
    let mut acc = leaf_hash(leaf);
    let mut pos = index;
    for sibling in path {
        acc = if pos % 2 == 0 {
            node_hash(&acc, sibling)
        } else {
            node_hash(sibling, &acc)
        };
        pos /= 2;
    }
    // Leftover position bits mean the index does not fit the path length.
    pos == 0 && acc == *root
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_leaf_root() {
        assert_eq!(merkle_root(&[b"l1"]), sha256(&[&[0x00], b"l1"]));
    }

    #[test]
    fn empty_root() {
        let leaves: [&[u8]; 0] = [];
        assert_eq!(merkle_root(&leaves), sha256(&[&[0x00]]));
    }

    #[test]
    fn odd_level_duplicates_last() {
        assert_eq!(
            merkle_root(&[b"l1", b"l2", b"l3"]),
            merkle_root(&[b"l1", b"l2", b"l3", b"l3"])
        );
    }

    #[test]
    fn four_leaf_path_length() {
        let leaves = [b"a", b"b", b"c", b"d"];
        assert_eq!(merkle_proof(&leaves, 2).unwrap().len(), 2);
        assert_eq!(
            merkle_proof(&leaves, 4).unwrap_err(),
            ProofIndexError { index: 4, len: 4 }
        );
    }

    #[test]
    fn flipped_leaf_bit_fails() {
        let leaves: Vec<Vec<u8>> = (0..5u8).map(|i| vec![i; 3]).collect();
        let root = merkle_root(&leaves);
        let path = merkle_proof(&leaves, 3).unwrap();
        let mut leaf = leaves[3].clone();
        leaf[1] ^= 0x04;
        assert!(!verify_proof(&root, &leaf, 3, &path));
        assert!(verify_proof(&root, &leaves[3], 3, &path));
        assert!(!verify_proof(&root, &leaves[3], 2, &path));
    }

    proptest! {
        #[test]
        fn proofs_round_trip(leaves in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..8), 1..34)) {
            let root = merkle_root(&leaves);
            for (i, leaf) in leaves.iter().enumerate() {
                let path = merkle_proof(&leaves, i).unwrap();
                prop_assert!(verify_proof(&root, leaf, i, &path));
            }
        }

        #[test]
        fn altered_path_byte_fails(
            leaves in prop::collection::vec(prop::collection::vec(any::<u8>(), 1..8), 2..20),
            pick in any::<prop::sample::Index>(),
            byte in 0usize..32,
            bit in 0u8..8,
        ) {
            let root = merkle_root(&leaves);
            let i = pick.index(leaves.len());
            let mut path = merkle_proof(&leaves, i).unwrap();
            let level = byte % path.len();
            path[level][byte] ^= 1 << bit;
            prop_assert!(!verify_proof(&root, &leaves[i], i, &path));
        }
    }
}
