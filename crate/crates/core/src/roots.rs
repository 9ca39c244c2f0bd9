//! Root slot storage shared by the frame, region and root-array providers.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::value::Value;

/// Slots per storage chunk. Chunks are boxed so that growing a stack never
/// moves a slot that has already been handed out.
pub const CHUNK_SLOTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SlotOrigin {
    Frame,
    Region,
    Array(u32),
}

/// Handle to one root cell.
///
/// The serial identifies the registration that produced the handle; once
/// the registration ends the handle stays readable (the memory is still
/// there) but no provider enumerates it any more.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RootSlot {
    pub(crate) origin: SlotOrigin,
    pub(crate) index: u32,
    pub(crate) serial: u64,
}

impl RootSlot {
    pub fn origin(&self) -> SlotOrigin {
        self.origin
    }
}

#[derive(Clone, Copy)]
pub(crate) struct Cell {
    pub(crate) value: Value,
    serial: u64,
}

const EMPTY_CELL: Cell = Cell { value: Value::UNIT, serial: 0 };

/// Chunked stack of cells. Cells above `depth` are dead but keep their last
/// contents, like the stack memory of a returned C frame.
pub(crate) struct SlotStack {
    origin: SlotOrigin,
    // Boxed so a cell keeps its address when the chunk list grows.
    #[allow(clippy::vec_box)]
    chunks: Vec<Box<[Cell; CHUNK_SLOTS]>>,
    depth: usize,
}

impl SlotStack {
    pub(crate) fn new(origin: SlotOrigin) -> SlotStack {
        SlotStack { origin, chunks: Vec::new(), depth: 0 }
    }

    pub(crate) fn depth(&self) -> usize {
        self.depth
    }

    pub(crate) fn push(&mut self, value: Value, serial: u64) -> RootSlot {
        let index = self.depth;
        if index == self.chunks.len() * CHUNK_SLOTS {
            self.chunks.push(Box::new([EMPTY_CELL; CHUNK_SLOTS]));
        }
        *self.cell_mut(index).expect("chunk just ensured") = Cell { value, serial };
        self.depth += 1;
        RootSlot { origin: self.origin, index: index as u32, serial }
    }

    pub(crate) fn truncate(&mut self, depth: usize) {
        debug_assert!(depth <= self.depth);
        self.depth = depth;
    }

    pub(crate) fn cell(&self, index: usize) -> Option<&Cell> {
        self.chunks.get(index / CHUNK_SLOTS).map(|c| &c[index % CHUNK_SLOTS])
    }

    pub(crate) fn cell_mut(&mut self, index: usize) -> Option<&mut Cell> {
        self.chunks.get_mut(index / CHUNK_SLOTS).map(|c| &mut c[index % CHUNK_SLOTS])
    }

    pub(crate) fn for_each_live(&mut self, visit: &mut dyn FnMut(&mut Value)) {
        let mut remaining = self.depth;
        for chunk in self.chunks.iter_mut() {
            let n = remaining.min(CHUNK_SLOTS);
            chunk[..n].iter_mut().for_each(|cell| visit(&mut cell.value));
            remaining -= n;
            if remaining == 0 {
                break;
            }
        }
    }

    pub(crate) fn live_slots(&self) -> impl Iterator<Item = RootSlot> + '_ {
        (0..self.depth).map(move |i| RootSlot {
            origin: self.origin,
            index: i as u32,
            serial: self.cell(i).map_or(0, |c| c.serial),
        })
    }
}

struct RootArray {
    cells: Box<[Value]>,
    serial: u64,
    live: bool,
}

/// Scenario-owned arrays of roots, the analog of registered global roots.
pub(crate) struct RootArrays {
    arrays: Vec<RootArray>,
}

impl RootArrays {
    pub(crate) fn new() -> RootArrays {
        RootArrays { arrays: Vec::new() }
    }

    pub(crate) fn create(&mut self, len: usize, serial: u64) -> u32 {
        self.arrays.push(RootArray {
            cells: alloc::vec![Value::UNIT; len].into_boxed_slice(),
            serial,
            live: true,
        });
        (self.arrays.len() - 1) as u32
    }

    pub(crate) fn slot(&self, id: u32, index: usize) -> Option<RootSlot> {
        let array = self.arrays.get(id as usize)?;
        (index < array.cells.len()).then_some(RootSlot {
            origin: SlotOrigin::Array(id),
            index: index as u32,
            serial: array.serial,
        })
    }

    pub(crate) fn len(&self, id: u32) -> Option<usize> {
        self.arrays.get(id as usize).map(|a| a.cells.len())
    }

    pub(crate) fn release(&mut self, id: u32) -> bool {
        match self.arrays.get_mut(id as usize) {
            Some(array) if array.live => {
                array.live = false;
                true
            }
            _ => false,
        }
    }

    pub(crate) fn cell(&self, id: u32, index: usize) -> Option<&Value> {
        self.arrays.get(id as usize)?.cells.get(index)
    }

    pub(crate) fn cell_mut(&mut self, id: u32, index: usize) -> Option<&mut Value> {
        self.arrays.get_mut(id as usize)?.cells.get_mut(index)
    }

    pub(crate) fn live_count(&self) -> usize {
        self.arrays.iter().filter(|a| a.live).map(|a| a.cells.len()).sum()
    }

    pub(crate) fn for_each_live(&mut self, visit: &mut dyn FnMut(&mut Value)) {
        for array in self.arrays.iter_mut().filter(|a| a.live) {
            array.cells.iter_mut().for_each(&mut *visit);
        }
    }

    pub(crate) fn live_slots(&self) -> impl Iterator<Item = RootSlot> + '_ {
        self.arrays.iter().enumerate().filter(|(_, a)| a.live).flat_map(|(id, a)| {
            (0..a.cells.len()).map(move |i| RootSlot {
                origin: SlotOrigin::Array(id as u32),
                index: i as u32,
                serial: a.serial,
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn growth_keeps_cells_in_place() {
        let mut stack = SlotStack::new(SlotOrigin::Region);
        let first = stack.push(Value::UNIT, 1);
        let addr = stack.cell(first.index as usize).unwrap() as *const Cell;
        for serial in 2..(4 * CHUNK_SLOTS as u64) {
            stack.push(Value::UNIT, serial);
        }
        assert_eq!(stack.cell(0).unwrap() as *const Cell, addr);
        assert_eq!(stack.chunks.len(), 4);
    }

    #[test]
    fn truncated_cells_keep_contents() {
        let mut stack = SlotStack::new(SlotOrigin::Frame);
        stack.push(Value::UNIT, 1);
        let s = stack.push(Value::encode_long(9).unwrap(), 2);
        stack.truncate(1);
        assert_eq!(stack.cell(s.index as usize).unwrap().value, Value::encode_long(9).unwrap());
        assert_eq!(stack.live_slots().count(), 1);
        let mut seen = 0;
        stack.for_each_live(&mut |_| seen += 1);
        assert_eq!(seen, 1);
    }
}
