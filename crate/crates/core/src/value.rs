//! Word-sized tagged values.
//!
//! The low bit distinguishes the two cases: set for an immediate integer
//! `n` stored as `(n << 1) | 1`, clear for the address of a block in one of
//! the heap's semispaces.

use core::fmt;

use crate::error::{Error, Result};

/// Tags at or above this value mark blocks whose payload is never scanned.
pub const NO_SCAN_TAG: u8 = 251;
/// Opaque block holding a byte string.
pub const STRING_TAG: u8 = 252;
/// Scanned block of size 1 whose single field is a closure id.
pub const CLOSURE_TAG: u8 = 247;
/// Written over every word of the inactive semispace after a collection.
pub const POISON_PATTERN: u64 = 0xDEAD_BEEF_DEAD_BEEF;

/// Largest magnitude accepted by [`Value::encode_long`] (exclusive bound is 2^62).
pub const MAX_LONG: i64 = (1 << 62) - 1;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Value(u64);

impl Value {
    /// The immediate 0, used as the initial content of fresh roots and fields.
    pub const UNIT: Value = Value(1);

    pub const fn from_raw(raw: u64) -> Value {
        Value(raw)
    }

    pub const fn raw(self) -> u64 {
        self.0
    }

    pub const fn is_immediate(self) -> bool {
        self.0 & 1 == 1
    }

    pub const fn is_block(self) -> bool {
        self.0 & 1 == 0
    }

    pub fn encode_long(n: i64) -> Result<Value> {
        if !(-MAX_LONG..=MAX_LONG).contains(&n) {
            return Err(Error::LongOutOfRange(n));
        }
        Ok(Value(((n << 1) | 1) as u64))
    }

    pub fn decode_long(self) -> Result<i64> {
        if !self.is_immediate() {
            return Err(Error::NotImmediate);
        }
        Ok((self.0 as i64) >> 1)
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_immediate() {
            write!(f, "Imm({})", (self.0 as i64) >> 1)
        } else {
            write!(f, "Block({:#x})", self.0)
        }
    }
}
