//! The runtime: heap, root providers, lock state and execution context.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::heap::{Classification, CollectStats, Heap, RootProvider};
use crate::legacy::{FrameStack, HostFn};
use crate::mlregion::RegionStack;
use crate::mlroot::DefensiveConfig;
use crate::roots::{RootArrays, RootSlot, SlotOrigin};
use crate::value::{Value, STRING_TAG};

/// Smallest accepted semispace, in words.
pub const MIN_SEMISPACE_WORDS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LockState {
    Held,
    Released,
}

/// Identity of the simulated thread currently driving the runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct ContextId(pub u32);

/// Handle to a scenario-owned array of roots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RootArray(u32);

pub struct Runtime {
    pub(crate) heap: Heap,
    torture: bool,
    pub(crate) defensive: DefensiveConfig,
    collections: u64,
    pub(crate) frames: FrameStack,
    pub(crate) regions: RegionStack,
    arrays: RootArrays,
    pub(crate) lock: LockState,
    context: ContextId,
    pub(crate) closures: BTreeMap<u64, HostFn>,
    pub(crate) next_closure: u64,
    next_serial: u64,
    pub(crate) alias_warnings: usize,
}

impl Runtime {
    /// Creates an empty runtime with the lock held.
    ///
    /// `torture` forces a full collection before every allocation;
    /// `defensive` turns on registration checks for every slot argument.
    pub fn new(semispace_words: usize, torture: bool, defensive: bool) -> Result<Runtime> {
        if semispace_words < MIN_SEMISPACE_WORDS {
            return Err(Error::TooSmall { words: semispace_words, min: MIN_SEMISPACE_WORDS });
        }
        Ok(Runtime {
            heap: Heap::new(semispace_words),
            torture,
            defensive: DefensiveConfig::new(defensive),
            collections: 0,
            frames: FrameStack::new(),
            regions: RegionStack::new(),
            arrays: RootArrays::new(),
            lock: LockState::Held,
            context: ContextId::default(),
            closures: BTreeMap::new(),
            next_closure: 0,
            next_serial: 1,
            alias_warnings: 0,
        })
    }

    pub fn heap(&self) -> &Heap {
        &self.heap
    }

    pub fn torture(&self) -> bool {
        self.torture
    }

    pub fn collections(&self) -> u64 {
        self.collections
    }

    pub fn lock_state(&self) -> LockState {
        self.lock
    }

    pub fn context(&self) -> ContextId {
        self.context
    }

    /// Simulates another thread taking over the runtime. Nothing is
    /// synchronized; region operations detect the switch.
    pub fn switch_context(&mut self, context: ContextId) {
        self.context = context;
    }

    pub(crate) fn ensure_held(&self) -> Result<()> {
        match self.lock {
            LockState::Held => Ok(()),
            LockState::Released => Err(Error::RuntimeReleased),
        }
    }

    pub(crate) fn next_serial(&mut self) -> u64 {
        let serial = self.next_serial;
        self.next_serial += 1;
        serial
    }

    pub fn alloc(&mut self, size: usize, tag: u8) -> Result<Value> {
        self.ensure_held()?;
        if self.torture {
            self.collect()?;
        }
        if let Some(v) = self.heap.try_alloc(size, tag) {
            return Ok(v);
        }
        if !self.torture {
            self.collect()?;
            if let Some(v) = self.heap.try_alloc(size, tag) {
                return Ok(v);
            }
        }
        Err(Error::HeapExhausted { requested: size.saturating_add(1) })
    }

    pub(crate) fn alloc_string(&mut self, bytes: &[u8]) -> Result<Value> {
        let v = self.alloc(1 + bytes.len().div_ceil(8), STRING_TAG)?;
        self.heap.fill_string(v, bytes)?;
        Ok(v)
    }

    pub fn collect(&mut self) -> Result<CollectStats> {
        self.ensure_held()?;
        let stats =
            self.heap.collect(&mut [&mut self.frames, &mut self.regions, &mut self.arrays])?;
        self.collections += 1;
        Ok(stats)
    }

    pub fn read_field(&self, v: Value, index: usize) -> Result<Value> {
        self.ensure_held()?;
        self.heap.read_field(v, index)
    }

    /// No write barrier: the collector is not generational.
    pub fn write_field(&mut self, v: Value, index: usize, x: Value) -> Result<()> {
        self.ensure_held()?;
        let check = self.defensive.verify_registration;
        self.heap.write_field(v, index, x, check)
    }

    pub fn block_info(&self, v: Value) -> Result<(u8, usize)> {
        self.ensure_held()?;
        self.heap.block_info(v)
    }

    pub fn read_string(&self, v: Value) -> Result<Vec<u8>> {
        self.ensure_held()?;
        self.heap.read_string(v)
    }

    pub fn validate_value(&self, v: Value) -> Classification {
        self.heap.classify(v)
    }

    pub fn serialize_values(&self, roots: &[Value]) -> Result<Vec<u8>> {
        self.ensure_held()?;
        self.heap.serialize(roots)
    }

    /// Canonical serialization of everything reachable from `slots`.
    pub fn structural_serialize(&self, slots: &[RootSlot]) -> Result<Vec<u8>> {
        let values = slots.iter().map(|&s| self.cell(s)).collect::<Result<Vec<_>>>()?;
        self.serialize_values(&values)
    }

    /// Reads a slot's cell regardless of registration. A slot whose storage
    /// never existed is reported as unregistered.
    pub(crate) fn cell(&self, slot: RootSlot) -> Result<Value> {
        let value = match slot.origin {
            SlotOrigin::Frame => self.frames.slots.cell(slot.index as usize).map(|c| c.value),
            SlotOrigin::Region => self.regions.slots.cell(slot.index as usize).map(|c| c.value),
            SlotOrigin::Array(id) => self.arrays.cell(id, slot.index as usize).copied(),
        };
        value.ok_or(Error::UnregisteredRoot)
    }

    pub(crate) fn set_cell(&mut self, slot: RootSlot, v: Value) -> Result<()> {
        let cell = match slot.origin {
            SlotOrigin::Frame => self.frames.slots.cell_mut(slot.index as usize).map(|c| &mut c.value),
            SlotOrigin::Region => self.regions.slots.cell_mut(slot.index as usize).map(|c| &mut c.value),
            SlotOrigin::Array(id) => self.arrays.cell_mut(id, slot.index as usize),
        };
        *cell.ok_or(Error::UnregisteredRoot)? = v;
        Ok(())
    }

    /// Dereferences a root. Checked against the registry in defensive mode.
    pub fn root_get(&self, slot: RootSlot) -> Result<Value> {
        self.ensure_held()?;
        self.check_registered(&[slot])?;
        self.cell(slot)
    }

    pub fn root_set(&mut self, slot: RootSlot, v: Value) -> Result<()> {
        self.ensure_held()?;
        self.check_registered(&[slot])?;
        self.set_cell(slot, v)
    }

    /// True iff some provider currently enumerates `slot`. Linear in the
    /// number of registered roots.
    pub fn is_registered_root(&self, slot: RootSlot) -> bool {
        self.frames.slots.live_slots().any(|s| s == slot)
            || self.regions.slots.live_slots().any(|s| s == slot)
            || self.arrays.live_slots().any(|s| s == slot)
    }

    pub(crate) fn check_registered(&self, slots: &[RootSlot]) -> Result<()> {
        if self.defensive.verify_registration && !slots.iter().all(|&s| self.is_registered_root(s)) {
            return Err(Error::UnregisteredRoot);
        }
        Ok(())
    }

    /// Number of slots currently enumerated by all providers.
    pub fn root_count(&self) -> usize {
        self.frames.slots.depth() + self.regions.slots.depth() + self.arrays.live_count()
    }

    /// Every registered slot, in collector order: frames, regions, arrays.
    pub fn registered_roots(&self) -> Vec<RootSlot> {
        self.frames
            .slots
            .live_slots()
            .chain(self.regions.slots.live_slots())
            .chain(self.arrays.live_slots())
            .collect()
    }

    /// Address of the storage cell behind `slot`, for stability checks.
    pub fn slot_storage_addr(&self, slot: RootSlot) -> Option<usize> {
        match slot.origin {
            SlotOrigin::Frame => self.frames.slots.cell(slot.index as usize).map(|c| c as *const _ as usize),
            SlotOrigin::Region => self.regions.slots.cell(slot.index as usize).map(|c| c as *const _ as usize),
            SlotOrigin::Array(id) => self.arrays.cell(id, slot.index as usize).map(|c| c as *const _ as usize),
        }
    }

    /// Registers `len` roots initialized to immediate 0 until released.
    pub fn root_array_new(&mut self, len: usize) -> RootArray {
        let serial = self.next_serial();
        RootArray(self.arrays.create(len, serial))
    }

    pub fn root_array_slot(&self, array: RootArray, index: usize) -> Option<RootSlot> {
        self.arrays.slot(array.0, index)
    }

    pub fn root_array_slots(&self, array: RootArray) -> Vec<RootSlot> {
        let len = self.arrays.len(array.0).unwrap_or(0);
        (0..len).filter_map(|i| self.arrays.slot(array.0, i)).collect()
    }

    /// Deregisters the array. Returns false if it was already released.
    pub fn root_array_release(&mut self, array: RootArray) -> bool {
        self.arrays.release(array.0)
    }

    /// Times an aliased call went through under the `Warn` policy.
    pub fn alias_warnings(&self) -> usize {
        self.alias_warnings
    }
}

impl RootProvider for RootArrays {
    fn for_each_root(&mut self, visit: &mut dyn FnMut(&mut Value)) {
        self.for_each_live(visit);
    }
}
