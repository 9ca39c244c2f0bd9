//! Region-based root management.
//!
//! A region is a growable set of roots released all at once on leave. The
//! current region is implicit: operations use the innermost region of the
//! runtime's region stack. All regions share one chunked slot stack; only
//! the current region can grow, so each region owns the contiguous range
//! from its start up to the next region's start.
//!
//! The same stack carries the lock protocol. Releasing the runtime pushes a
//! `LockRelease` marker region; reacquiring inside it pushes a
//! `Reacquired` region in which ordinary work is allowed again.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::heap::RootProvider;
use crate::legacy::CallStatus;
use crate::roots::{RootSlot, SlotOrigin, SlotStack};
use crate::runtime::{ContextId, LockState, Runtime};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    Normal,
    LockRelease,
    Reacquired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Region {
    id: u64,
}

/// Token returned by `mlregion_subenter`; must be passed back to
/// `mlregion_subleave` in strict reverse order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SubRegionMark {
    region: u64,
    id: u64,
    depth: usize,
}

/// Snapshot of one region, for introspection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionInfo {
    pub region: Region,
    pub kind: RegionKind,
    pub live_count: usize,
    pub disabled: bool,
    pub parent: Option<Region>,
    pub owner: ContextId,
    pub sub_depth: usize,
}

struct RegionRecord {
    id: u64,
    start: usize,
    kind: RegionKind,
    disabled: bool,
    parent: Option<u64>,
    owner: ContextId,
    sub_marks: Vec<SubRegionMark>,
}

pub(crate) struct RegionStack {
    pub(crate) slots: SlotStack,
    regions: Vec<RegionRecord>,
    next_id: u64,
}

impl RegionStack {
    pub(crate) fn new() -> RegionStack {
        RegionStack { slots: SlotStack::new(SlotOrigin::Region), regions: Vec::new(), next_id: 0 }
    }

    fn push(&mut self, kind: RegionKind, owner: ContextId) -> Region {
        let id = self.next_id;
        self.next_id += 1;
        self.regions.push(RegionRecord {
            id,
            start: self.slots.depth(),
            kind,
            disabled: false,
            parent: self.regions.last().map(|r| r.id),
            owner,
            sub_marks: Vec::new(),
        });
        Region { id }
    }

    fn pop(&mut self) {
        if let Some(record) = self.regions.pop() {
            self.slots.truncate(record.start);
        }
    }

    fn live_count_at(&self, position: usize) -> usize {
        let end = self.regions.get(position + 1).map_or(self.slots.depth(), |r| r.start);
        end - self.regions[position].start
    }

    fn position(&self, region: Region) -> Option<usize> {
        self.regions.iter().rposition(|r| r.id == region.id)
    }

    fn info(&self, position: usize) -> RegionInfo {
        let r = &self.regions[position];
        RegionInfo {
            region: Region { id: r.id },
            kind: r.kind,
            live_count: self.live_count_at(position),
            disabled: r.disabled,
            parent: r.parent.map(|id| Region { id }),
            owner: r.owner,
            sub_depth: r.sub_marks.len(),
        }
    }
}

impl RootProvider for RegionStack {
    fn for_each_root(&mut self, visit: &mut dyn FnMut(&mut Value)) {
        self.slots.for_each_live(visit);
    }
}

impl Runtime {
    pub fn current_region(&self) -> Option<Region> {
        self.regions.regions.last().map(|r| Region { id: r.id })
    }

    pub fn region_info(&self, region: Region) -> Option<RegionInfo> {
        self.regions.position(region).map(|p| self.regions.info(p))
    }

    /// Outermost first.
    pub fn region_stack(&self) -> Vec<RegionInfo> {
        (0..self.regions.regions.len()).map(|p| self.regions.info(p)).collect()
    }

    /// Slots registered across all regions.
    pub fn region_root_count(&self) -> usize {
        self.regions.slots.depth()
    }

    fn current_record(&self) -> Result<&RegionRecord> {
        let record = self.regions.regions.last().ok_or(Error::NoCurrentRegion)?;
        if record.owner != self.context() {
            return Err(Error::RegionContextMismatch);
        }
        Ok(record)
    }

    fn current_record_mut(&mut self) -> Result<&mut RegionRecord> {
        self.current_record()?;
        Ok(self.regions.regions.last_mut().expect("checked above"))
    }

    fn check_current(&self, region: Region) -> Result<&RegionRecord> {
        match self.regions.regions.last() {
            Some(r) if r.id == region.id => {}
            _ => return Err(Error::NotCurrentRegion),
        }
        self.current_record()
    }

    pub fn mlregion_enter(&mut self) -> Result<Region> {
        self.ensure_held()?;
        if let Some(current) = self.regions.regions.last() {
            if current.owner != self.context() {
                return Err(Error::RegionContextMismatch);
            }
        }
        let owner = self.context();
        Ok(self.regions.push(RegionKind::Normal, owner))
    }

    pub fn mlregion_leave(&mut self, region: Region) -> Result<()> {
        let record = self.check_current(region)?;
        if record.kind != RegionKind::Normal {
            return Err(Error::LockOrderViolation);
        }
        if record.disabled {
            return Err(Error::RegionDisabled);
        }
        self.regions.pop();
        Ok(())
    }

    /// A fresh root holding immediate 0 in the current region.
    pub fn mlregion_new_root(&mut self) -> Result<RootSlot> {
        self.ensure_held()?;
        if self.current_record()?.disabled {
            return Err(Error::RegionDisabled);
        }
        let serial = self.next_serial();
        Ok(self.regions.slots.push(Value::UNIT, serial))
    }

    /// Enters a region and roots each parameter in it.
    pub fn region_begin_with_params(&mut self, params: &[Value]) -> Result<(Region, Vec<RootSlot>)> {
        let region = self.mlregion_enter()?;
        let mut slots = Vec::with_capacity(params.len());
        for &param in params {
            let serial = self.next_serial();
            slots.push(self.regions.slots.push(param, serial));
        }
        Ok((region, slots))
    }

    /// Reads `result`, leaves `region` and hands the bare value back to the
    /// caller of the external function.
    pub fn region_return(&mut self, region: Region, result: RootSlot) -> Result<Value> {
        self.ensure_held()?;
        self.check_current(region)?;
        self.check_registered(&[result])?;
        let value = self.cell(result)?;
        self.mlregion_leave(region)?;
        Ok(value)
    }

    pub fn mlregion_subenter(&mut self) -> Result<SubRegionMark> {
        let depth = self.regions.slots.depth();
        let id = self.next_serial();
        let record = self.current_record_mut()?;
        if record.disabled {
            return Err(Error::RegionDisabled);
        }
        let mark = SubRegionMark { region: record.id, id, depth };
        record.sub_marks.push(mark);
        Ok(mark)
    }

    /// Releases every root registered since `mark`.
    pub fn mlregion_subleave(&mut self, mark: SubRegionMark) -> Result<()> {
        let record = self.current_record_mut()?;
        if record.sub_marks.last() != Some(&mark) {
            return Err(Error::SubRegionOrderViolation);
        }
        record.sub_marks.pop();
        self.regions.slots.truncate(mark.depth);
        Ok(())
    }

    pub fn mlregion_release_runtime_system(&mut self) -> Result<()> {
        if self.lock == LockState::Released
            || self.regions.regions.iter().any(|r| r.kind == RegionKind::LockRelease)
        {
            return Err(Error::AlreadyReleased);
        }
        if let Some(current) = self.regions.regions.last() {
            if current.owner != self.context() {
                return Err(Error::RegionContextMismatch);
            }
        }
        let owner = self.context();
        self.regions.push(RegionKind::LockRelease, owner);
        self.lock = LockState::Released;
        Ok(())
    }

    pub fn mlregion_acquire_runtime_system(&mut self) -> Result<()> {
        if self.lock == LockState::Held {
            let inside_release = self.regions.regions.iter().any(|r| r.kind == RegionKind::LockRelease);
            return Err(if inside_release { Error::LockOrderViolation } else { Error::NotReleased });
        }
        match self.regions.regions.last() {
            Some(r) if r.kind == RegionKind::LockRelease => {}
            _ => return Err(Error::LockOrderViolation),
        }
        self.current_record()?;
        self.regions.pop();
        self.lock = LockState::Held;
        Ok(())
    }

    pub fn mlregion_reacquire_runtime_system(&mut self) -> Result<()> {
        if self.lock == LockState::Held {
            return Err(Error::NotReleased);
        }
        self.current_record()?;
        let owner = self.context();
        self.regions.push(RegionKind::Reacquired, owner);
        self.lock = LockState::Held;
        Ok(())
    }

    pub fn mlregion_rerelease_runtime_system(&mut self) -> Result<()> {
        match self.regions.regions.last() {
            Some(r) if r.kind == RegionKind::Reacquired => {}
            _ => return Err(Error::NotReacquiredRegion),
        }
        self.current_record()?;
        self.regions.pop();
        self.lock = LockState::Released;
        Ok(())
    }

    /// Calls a closure from region code. The current region is disabled
    /// for the duration of the call; the callee must enter its own region
    /// to allocate roots.
    pub fn region_callback_exn(
        &mut self,
        closure: RootSlot,
        args: &[RootSlot],
        result: RootSlot,
    ) -> Result<CallStatus> {
        self.ensure_held()?;
        let record = self.current_record()?;
        if record.disabled {
            return Err(Error::RegionDisabled);
        }
        let region = Region { id: record.id };
        let context = self.context();
        let mut slots = Vec::with_capacity(args.len() + 2);
        slots.push(closure);
        slots.extend_from_slice(args);
        slots.push(result);
        self.check_registered(&slots)?;
        let f = self.resolve_closure(self.cell(closure)?)?;
        let counts: Vec<usize> = self.region_stack().iter().map(|r| r.live_count).collect();

        self.set_disabled(region, true);
        let outcome = f(self, args, result);
        self.set_disabled(region, false);
        // A failing callee may have left its own regions behind; its error
        // is the one worth reporting.
        let status = outcome?;

        if self.context() != context {
            return Err(Error::RegionContextMismatch);
        }
        if self.current_region() != Some(region) {
            return Err(Error::NotCurrentRegion);
        }
        debug_assert_eq!(
            counts,
            self.region_stack().iter().map(|r| r.live_count).collect::<Vec<_>>()
        );
        Ok(status)
    }

    fn set_disabled(&mut self, region: Region, disabled: bool) {
        if let Some(p) = self.regions.position(region) {
            self.regions.regions[p].disabled = disabled;
        }
    }
}
