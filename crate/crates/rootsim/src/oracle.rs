//! Host-side trees and their expected serialized form.
//!
//! Trees have no sharing, so every block is emitted in full. The encoding
//! is written out here independently of the heap walker so that a digest
//! match means the heap really holds this shape.

use rootsim_core::{Value, STRING_TAG};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tree {
    Int(i64),
    Block { tag: u8, fields: Vec<Tree> },
    Text(Vec<u8>),
}

impl Tree {
    pub fn block(fields: Vec<Tree>) -> Tree {
        Tree::Block { tag: 0, fields }
    }

    /// A one-field block holding `n`.
    pub fn boxed(n: i64) -> Tree {
        Tree::block(vec![Tree::Int(n)])
    }

    pub fn pair(a: Tree, b: Tree) -> Tree {
        Tree::block(vec![a, b])
    }

    fn encode_into(&self, out: &mut Vec<u8>) {
        match self {
            Tree::Int(n) => {
                // Same range as the runtime; an out-of-range oracle is a bug.
                Value::encode_long(*n).expect("oracle integer in range");
                out.push(b'I');
                out.extend_from_slice(&n.to_le_bytes());
            }
            Tree::Block { tag, fields } => {
                out.push(b'B');
                out.push(*tag);
                out.extend_from_slice(&(fields.len() as u64).to_le_bytes());
                for f in fields {
                    f.encode_into(out);
                }
            }
            Tree::Text(bytes) => {
                let mut words = vec![bytes.len() as u64];
                for chunk in bytes.chunks(8) {
                    let mut w = [0u8; 8];
                    w[..chunk.len()].copy_from_slice(chunk);
                    words.push(u64::from_le_bytes(w));
                }
                out.push(b'B');
                out.push(STRING_TAG);
                out.extend_from_slice(&(words.len() as u64).to_le_bytes());
                for w in words {
                    out.extend_from_slice(&w.to_le_bytes());
                }
            }
        }
    }
}

/// Serialization of several roots, as the runtime would produce it for
/// disjoint trees.
pub fn encode(roots: &[Tree]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in roots {
        r.encode_into(&mut out);
    }
    out
}

pub fn digest_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
