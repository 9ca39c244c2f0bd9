//! Two-semispace heap with a Cheney copying collector.
//!
//! Blocks are laid out as one header word followed by `size` payload words.
//! A block [`Value`] is the byte address of its first payload word, so the
//! header sits one word below it. The two semispaces are mapped at disjoint
//! word addresses with an unmapped gap in front of each, which lets
//! [`Heap::classify`] tell live, stale and wild addresses apart.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::value::{Value, NO_SCAN_TAG, POISON_PATTERN, STRING_TAG};

const SPACE_GAP_WORDS: u64 = 0x1000;

const TAG_MASK: u64 = 0xff;
const FORWARDED_BIT: u64 = 1 << 8;
// Set together with FORWARDED_BIT when the target lives in the size bits.
const FORWARD_INLINE_BIT: u64 = 1 << 9;
const SIZE_SHIFT: u32 = 10;

/// Largest payload size a header can describe.
pub const MAX_BLOCK_SIZE: usize = (1 << (64 - SIZE_SHIFT)) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockHeader {
    pub tag: u8,
    pub size: usize,
    pub forwarded: bool,
}

impl BlockHeader {
    fn new(tag: u8, size: usize) -> BlockHeader {
        BlockHeader { tag, size, forwarded: false }
    }

    fn pack(self) -> u64 {
        let mut word = self.tag as u64 | ((self.size as u64) << SIZE_SHIFT);
        if self.forwarded {
            word |= FORWARDED_BIT;
        }
        word
    }

    fn unpack(word: u64) -> BlockHeader {
        BlockHeader {
            tag: (word & TAG_MASK) as u8,
            size: (word >> SIZE_SHIFT) as usize,
            forwarded: word & FORWARDED_BIT != 0,
        }
    }

    pub fn is_scanned(&self) -> bool {
        self.tag < NO_SCAN_TAG
    }
}

/// What a word would mean if it were dereferenced right now.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Immediate,
    LiveBlock,
    Stale,
    OutOfRange,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CollectStats {
    pub words_live: usize,
    pub blocks_moved: usize,
}

/// Source of root slots consulted by the collector.
///
/// The collector calls `for_each_root` twice per cycle: once to verify that
/// every root holds a valid value, once to rewrite each root with the new
/// location of its block. Each registered slot must be visited exactly once
/// per call.
pub trait RootProvider {
    fn for_each_root(&mut self, visit: &mut dyn FnMut(&mut Value));
}

pub struct Heap {
    capacity: usize,
    spaces: [Vec<u64>; 2],
    // starts[s][i] is true iff a block header sits at word i of space s.
    starts: [Vec<bool>; 2],
    active: usize,
    cursor: usize,
}

impl Heap {
    pub(crate) fn new(capacity: usize) -> Heap {
        Heap {
            capacity,
            spaces: [vec![POISON_PATTERN; capacity], vec![POISON_PATTERN; capacity]],
            starts: [vec![false; capacity], vec![false; capacity]],
            active: 0,
            cursor: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn active_space(&self) -> usize {
        self.active
    }

    /// Next free word offset in the active semispace.
    pub fn alloc_cursor(&self) -> usize {
        self.cursor
    }

    pub fn space_words(&self, space: usize) -> &[u64] {
        &self.spaces[space]
    }

    pub fn inactive_words(&self) -> &[u64] {
        &self.spaces[1 - self.active]
    }

    fn base_word(&self, space: usize) -> u64 {
        SPACE_GAP_WORDS + space as u64 * (self.capacity as u64 + SPACE_GAP_WORDS)
    }

    fn address(&self, space: usize, header: usize) -> Value {
        Value::from_raw((self.base_word(space) + header as u64 + 1) << 3)
    }

    /// Maps a block value to `(space, header offset)`.
    fn locate(&self, v: Value) -> Option<(usize, usize)> {
        let raw = v.raw();
        if raw & 7 != 0 {
            return None;
        }
        let word = raw >> 3;
        (0..2).find_map(|space| {
            let base = self.base_word(space);
            (word > base && word <= base + self.capacity as u64)
                .then(|| (space, (word - base - 1) as usize))
        })
    }

    pub fn classify(&self, v: Value) -> Classification {
        if v.is_immediate() {
            return Classification::Immediate;
        }
        match self.locate(v) {
            None => Classification::OutOfRange,
            Some((space, _)) if space != self.active => Classification::Stale,
            Some((_, header)) if header >= self.cursor => Classification::OutOfRange,
            // A non-header word of the active space can only be reached
            // through an address that predates an earlier collection.
            Some((_, header)) if !self.starts[self.active][header] => {
                Classification::Stale
            }
            Some(_) => Classification::LiveBlock,
        }
    }

    fn live_header(&self, v: Value) -> Result<usize> {
        match self.classify(v) {
            Classification::Immediate => Err(Error::NotABlock),
            Classification::Stale => Err(Error::StaleValue),
            Classification::OutOfRange => Err(Error::OutOfRangeValue),
            Classification::LiveBlock => Ok(self.locate(v).map(|(_, h)| h).unwrap_or_default()),
        }
    }

    fn header_at(&self, header: usize) -> BlockHeader {
        BlockHeader::unpack(self.spaces[self.active][header])
    }

    /// Bump-allocates in the active space; `None` when the block does not fit.
    pub(crate) fn try_alloc(&mut self, size: usize, tag: u8) -> Option<Value> {
        if size > MAX_BLOCK_SIZE {
            return None;
        }
        let words = size.checked_add(1)?;
        if words > self.capacity - self.cursor {
            return None;
        }
        let header = self.cursor;
        let fill = if tag < NO_SCAN_TAG { Value::UNIT.raw() } else { 0 };
        let space = &mut self.spaces[self.active];
        space[header] = BlockHeader::new(tag, size).pack();
        space[header + 1..header + words].fill(fill);
        self.starts[self.active][header] = true;
        self.cursor += words;
        Some(self.address(self.active, header))
    }

    pub fn block_info(&self, v: Value) -> Result<(u8, usize)> {
        let header = self.header_at(self.live_header(v)?);
        Ok((header.tag, header.size))
    }

    fn scanned_field(&self, v: Value, index: usize) -> Result<usize> {
        let h = self.live_header(v)?;
        let header = self.header_at(h);
        if !header.is_scanned() {
            return Err(Error::WrongTag { tag: header.tag });
        }
        if index >= header.size {
            return Err(Error::IndexOutOfBounds { index, size: header.size });
        }
        Ok(h + 1 + index)
    }

    pub fn read_field(&self, v: Value, index: usize) -> Result<Value> {
        let word = self.scanned_field(v, index)?;
        Ok(Value::from_raw(self.spaces[self.active][word]))
    }

    /// Stores `x` into field `index` of `v`. With `check_x` the stored value
    /// must itself be immediate or live.
    pub fn write_field(&mut self, v: Value, index: usize, x: Value, check_x: bool) -> Result<()> {
        let word = self.scanned_field(v, index)?;
        if check_x {
            match self.classify(x) {
                Classification::Stale => return Err(Error::StaleValue),
                Classification::OutOfRange => return Err(Error::OutOfRangeValue),
                _ => {}
            }
        }
        self.spaces[self.active][word] = x.raw();
        Ok(())
    }

    /// Raw payload of a live block, whatever its tag.
    pub fn payload(&self, v: Value) -> Result<&[u64]> {
        let h = self.live_header(v)?;
        let size = self.header_at(h).size;
        Ok(&self.spaces[self.active][h + 1..h + 1 + size])
    }

    pub(crate) fn fill_string(&mut self, v: Value, bytes: &[u8]) -> Result<()> {
        let h = self.live_header(v)?;
        let space = &mut self.spaces[self.active];
        space[h + 1] = bytes.len() as u64;
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            space[h + 2 + i] = u64::from_le_bytes(word);
        }
        Ok(())
    }

    /// Bytes of a `STRING_TAG` block: a length word followed by packed bytes.
    pub fn read_string(&self, v: Value) -> Result<Vec<u8>> {
        let (tag, _) = self.block_info(v)?;
        if tag != STRING_TAG {
            return Err(Error::WrongTag { tag });
        }
        let payload = self.payload(v)?;
        let len = payload[0] as usize;
        let mut bytes: Vec<u8> = payload[1..].iter().flat_map(|w| w.to_le_bytes()).collect();
        bytes.truncate(len);
        Ok(bytes)
    }

    /// Copies everything reachable from `providers` into the other
    /// semispace, rewrites every root, poisons the old space and swaps.
    ///
    /// The reachable graph is verified before anything moves: a stale or
    /// wild value anywhere in it aborts the cycle with the heap untouched.
    pub(crate) fn collect(&mut self, providers: &mut [&mut dyn RootProvider]) -> Result<CollectStats> {
        self.verify(providers)?;

        let from = self.active;
        let to = 1 - from;
        let mut copier = Copier { to, cursor: 0, moved: 0 };
        for provider in providers.iter_mut() {
            provider.for_each_root(&mut |slot| {
                if slot.is_block() {
                    *slot = copier.forward(self, *slot);
                }
            });
        }

        let mut scan = 0;
        while scan < copier.cursor {
            let header = BlockHeader::unpack(self.spaces[to][scan]);
            if header.is_scanned() {
                for word in scan + 1..scan + 1 + header.size {
                    let field = Value::from_raw(self.spaces[to][word]);
                    if field.is_block() {
                        self.spaces[to][word] = copier.forward(self, field).raw();
                    }
                }
            }
            scan += 1 + header.size;
        }

        self.spaces[from].fill(POISON_PATTERN);
        self.starts[from].fill(false);
        self.active = to;
        self.cursor = copier.cursor;
        Ok(CollectStats { words_live: copier.cursor, blocks_moved: copier.moved })
    }

    fn verify(&self, providers: &mut [&mut dyn RootProvider]) -> Result<()> {
        let mut seen = vec![false; self.capacity];
        let mut work = Vec::new();
        let mut failure = None;
        for provider in providers.iter_mut() {
            provider.for_each_root(&mut |slot| {
                if failure.is_none() {
                    failure = self.mark(*slot, &mut seen, &mut work).err();
                }
            });
        }
        if let Some(err) = failure {
            return Err(err);
        }
        while let Some(h) = work.pop() {
            let header = self.header_at(h);
            if header.is_scanned() {
                for word in h + 1..h + 1 + header.size {
                    self.mark(Value::from_raw(self.spaces[self.active][word]), &mut seen, &mut work)?;
                }
            }
        }
        Ok(())
    }

    fn mark(&self, v: Value, seen: &mut [bool], work: &mut Vec<usize>) -> Result<()> {
        match self.classify(v) {
            Classification::Immediate => Ok(()),
            Classification::Stale => Err(Error::StaleValue),
            Classification::OutOfRange => Err(Error::OutOfRangeValue),
            Classification::LiveBlock => {
                let h = self.live_header(v)?;
                if !seen[h] {
                    seen[h] = true;
                    work.push(h);
                }
                Ok(())
            }
        }
    }

    /// Location-independent encoding of the graphs reachable from `roots`.
    ///
    /// Depth-first, fields in order. Per node:
    /// - `'I'` + i64 LE for an immediate,
    /// - `'R'` + u64 LE first-visit ordinal for an already emitted block,
    /// - `'B'` + tag u8 + size u64 LE followed by the serialized fields
    ///   (scanned tags) or the raw payload words as u64 LE (opaque tags).
    ///
    /// Block ordinals are shared across all roots.
    pub fn serialize(&self, roots: &[Value]) -> Result<Vec<u8>> {
        const UNVISITED: u64 = u64::MAX;
        let mut ordinals = vec![UNVISITED; self.capacity];
        let mut next = 0u64;
        let mut out = Vec::new();
        let mut stack = Vec::new();
        for &root in roots {
            stack.push(root);
            while let Some(v) = stack.pop() {
                if v.is_immediate() {
                    out.push(b'I');
                    out.extend_from_slice(&v.decode_long()?.to_le_bytes());
                    continue;
                }
                let h = self.live_header(v)?;
                if ordinals[h] != UNVISITED {
                    out.push(b'R');
                    out.extend_from_slice(&ordinals[h].to_le_bytes());
                    continue;
                }
                ordinals[h] = next;
                next += 1;
                let header = self.header_at(h);
                out.push(b'B');
                out.push(header.tag);
                out.extend_from_slice(&(header.size as u64).to_le_bytes());
                let payload = &self.spaces[self.active][h + 1..h + 1 + header.size];
                if header.is_scanned() {
                    stack.extend(payload.iter().rev().map(|&w| Value::from_raw(w)));
                } else {
                    for word in payload {
                        out.extend_from_slice(&word.to_le_bytes());
                    }
                }
            }
        }
        Ok(out)
    }
}

struct Copier {
    to: usize,
    cursor: usize,
    moved: usize,
}

impl Copier {
    fn forward(&mut self, heap: &mut Heap, v: Value) -> Value {
        let (from, h) = heap.locate(v).expect("verified before copying");
        let word = heap.spaces[from][h];
        if word & FORWARDED_BIT != 0 {
            let target = if word & FORWARD_INLINE_BIT != 0 {
                word >> SIZE_SHIFT
            } else {
                heap.spaces[from][h + 1]
            };
            return Value::from_raw(target);
        }
        let header = BlockHeader::unpack(word);
        let words = 1 + header.size;
        let dst = self.cursor;
        let (src_space, dst_space) = split_spaces(&mut heap.spaces, from);
        dst_space[dst..dst + words].copy_from_slice(&src_space[h..h + words]);
        heap.starts[self.to][dst] = true;
        let moved = heap.address(self.to, dst);
        if header.size == 0 {
            heap.spaces[from][h] = header.tag as u64
                | FORWARDED_BIT
                | FORWARD_INLINE_BIT
                | (moved.raw() << SIZE_SHIFT);
        } else {
            heap.spaces[from][h] = word | FORWARDED_BIT;
            heap.spaces[from][h + 1] = moved.raw();
        }
        self.cursor += words;
        self.moved += 1;
        moved
    }
}

fn split_spaces(spaces: &mut [Vec<u64>; 2], from: usize) -> (&mut [u64], &mut [u64]) {
    let [a, b] = spaces;
    if from == 0 {
        (a, b)
    } else {
        (b, a)
    }
}
