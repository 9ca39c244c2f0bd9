//! The value-centric interface: LIFO local-root frames, bare-value
//! allocation and closure callbacks.
//!
//! `frame_begin` / `frame_register` / `frame_local` / `frame_end` are the
//! save, register and restore steps that the parameter, local and return
//! macros expand to. Allocation here hands back bare [`Value`]s which the
//! caller must root before the next allocating call; nothing enforces it.

use alloc::rc::Rc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::heap::RootProvider;
use crate::roots::{RootSlot, SlotOrigin, SlotStack};
use crate::runtime::{ContextId, Runtime};
use crate::value::{Value, CLOSURE_TAG};

/// Outcome of a callback. On `Exception` the result slot holds the
/// exception value instead of a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallStatus {
    Normal,
    Exception,
}

/// Host-side body of a closure: runtime, argument slots, result slot.
pub type HostFn = Rc<dyn Fn(&mut Runtime, &[RootSlot], RootSlot) -> Result<CallStatus>>;

/// A saved root-stack position. Copyable so that misuse after
/// `frame_end` can be expressed and detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RootsFrame {
    id: u64,
    saved_mark: usize,
}

impl RootsFrame {
    pub fn saved_mark(&self) -> usize {
        self.saved_mark
    }
}

struct FrameRecord {
    id: u64,
    saved_mark: usize,
    context: ContextId,
}

pub(crate) struct FrameStack {
    pub(crate) slots: SlotStack,
    frames: Vec<FrameRecord>,
    next_id: u64,
}

impl FrameStack {
    pub(crate) fn new() -> FrameStack {
        FrameStack { slots: SlotStack::new(SlotOrigin::Frame), frames: Vec::new(), next_id: 0 }
    }

    fn innermost(&self, frame: &RootsFrame) -> Result<&FrameRecord> {
        self.frames.last().filter(|f| f.id == frame.id).ok_or(Error::NotInnermostFrame)
    }
}

impl RootProvider for FrameStack {
    fn for_each_root(&mut self, visit: &mut dyn FnMut(&mut Value)) {
        self.slots.for_each_live(visit);
    }
}

impl Runtime {
    pub fn frame_begin(&mut self) -> Result<RootsFrame> {
        self.ensure_held()?;
        let context = self.context();
        let stack = &mut self.frames;
        let frame = RootsFrame { id: stack.next_id, saved_mark: stack.slots.depth() };
        stack.next_id += 1;
        stack.frames.push(FrameRecord { id: frame.id, saved_mark: frame.saved_mark, context });
        Ok(frame)
    }

    pub fn frame_register(&mut self, frame: &RootsFrame, initial: Value) -> Result<RootSlot> {
        self.frames.innermost(frame)?;
        let serial = self.next_serial();
        Ok(self.frames.slots.push(initial, serial))
    }

    /// Registers several parameters at once.
    pub fn frame_register_all(&mut self, frame: &RootsFrame, values: &[Value]) -> Result<Vec<RootSlot>> {
        values.iter().map(|&v| self.frame_register(frame, v)).collect()
    }

    /// A fresh local root holding immediate 0.
    pub fn frame_local(&mut self, frame: &RootsFrame) -> Result<RootSlot> {
        self.frame_register(frame, Value::UNIT)
    }

    pub fn frame_end(&mut self, frame: RootsFrame) -> Result<()> {
        let record = self.frames.innermost(&frame)?;
        if record.context != self.context() {
            return Err(Error::FrameContextMismatch);
        }
        let mark = record.saved_mark;
        self.frames.slots.truncate(mark);
        self.frames.frames.pop();
        Ok(())
    }

    /// Depth of the local-root stack.
    pub fn frame_root_depth(&self) -> usize {
        self.frames.slots.depth()
    }

    pub fn frame_count(&self) -> usize {
        self.frames.frames.len()
    }

    /// Allocates and returns an unrooted value.
    pub fn legacy_alloc(&mut self, size: usize, tag: u8) -> Result<Value> {
        self.alloc(size, tag)
    }

    pub fn legacy_copy_string(&mut self, bytes: &[u8]) -> Result<Value> {
        self.alloc_string(bytes)
    }

    /// Wraps `f` in a `CLOSURE_TAG` block holding a fresh closure id.
    pub fn register_closure<F>(&mut self, f: F) -> Result<Value>
    where
        F: Fn(&mut Runtime, &[RootSlot], RootSlot) -> Result<CallStatus> + 'static,
    {
        let id = self.next_closure;
        let block = self.alloc(1, CLOSURE_TAG)?;
        self.heap.write_field(block, 0, Value::encode_long(id as i64)?, false)?;
        self.next_closure += 1;
        self.closures.insert(id, Rc::new(f));
        Ok(block)
    }

    pub(crate) fn resolve_closure(&self, closure: Value) -> Result<HostFn> {
        if closure.is_immediate() {
            return Err(Error::NotAClosure);
        }
        let (tag, size) = self.heap.block_info(closure)?;
        if tag != CLOSURE_TAG || size != 1 {
            return Err(Error::NotAClosure);
        }
        let id = self.heap.read_field(closure, 0)?.decode_long().map_err(|_| Error::NotAClosure)?;
        self.closures.get(&(id as u64)).cloned().ok_or(Error::NotAClosure)
    }

    /// Id of the closure held in a live `CLOSURE_TAG` block.
    pub fn closure_id(&self, closure: Value) -> Result<u64> {
        self.resolve_closure(closure)?;
        Ok(self.heap.read_field(closure, 0)?.decode_long()? as u64)
    }

    /// Calls the closure held in `closure_slot`. Both statuses return
    /// normally; callers must inspect the status before using `result`.
    pub fn legacy_callback_exn(
        &mut self,
        closure_slot: RootSlot,
        args: &[RootSlot],
        result: RootSlot,
    ) -> Result<CallStatus> {
        self.ensure_held()?;
        let f = self.resolve_closure(self.cell(closure_slot)?)?;
        f(self, args, result)
    }
}
