//! Root-centric accessors: every argument is a slot, results go through a
//! destination slot.
//!
//! Each operation dereferences its inputs only after its last possible
//! collection point and reads every input before writing any output, so
//! aliased slots behave as if the inputs had been copied first.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::roots::RootSlot;
use crate::runtime::Runtime;
use crate::value::Value;

/// What to do when an output slot is also an input slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AliasPolicy {
    /// Read all inputs before writing; aliasing is harmless.
    #[default]
    Handle,
    /// Like `Handle`, but count the occurrence.
    Warn,
    /// Refuse with [`Error::AliasedRoots`].
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DefensiveConfig {
    pub verify_registration: bool,
    pub alias_policy: AliasPolicy,
}

impl DefensiveConfig {
    pub fn new(verify_registration: bool) -> DefensiveConfig {
        DefensiveConfig { verify_registration, alias_policy: AliasPolicy::Handle }
    }
}

impl Runtime {
    pub fn defensive_config(&self) -> DefensiveConfig {
        self.defensive
    }

    pub fn set_defensive_config(&mut self, config: DefensiveConfig) {
        self.defensive = config;
    }

    pub fn set_alias_policy(&mut self, policy: AliasPolicy) {
        self.defensive.alias_policy = policy;
    }

    /// Applies the alias policy to `dst` against `inputs`. Returns whether
    /// aliasing was found, so composite helpers can copy inputs first.
    pub fn check_aliasing(&mut self, dst: RootSlot, inputs: &[RootSlot]) -> Result<bool> {
        if !inputs.contains(&dst) {
            return Ok(false);
        }
        match self.defensive.alias_policy {
            AliasPolicy::Handle => {}
            AliasPolicy::Warn => self.alias_warnings += 1,
            AliasPolicy::Fail => return Err(Error::AliasedRoots),
        }
        Ok(true)
    }

    fn enter_op(&self, slots: &[RootSlot]) -> Result<()> {
        self.ensure_held()?;
        self.check_registered(slots)
    }

    pub fn mlroot_alloc(&mut self, dst: RootSlot, size: usize, tag: u8) -> Result<()> {
        self.enter_op(&[dst])?;
        let block = self.alloc(size, tag)?;
        let epoch = self.collections();
        self.set_cell(dst, block)?;
        debug_assert_eq!(epoch, self.collections());
        Ok(())
    }

    pub fn mlroot_string_copy(&mut self, dst: RootSlot, bytes: &[u8]) -> Result<()> {
        self.enter_op(&[dst])?;
        let block = self.alloc_string(bytes)?;
        let epoch = self.collections();
        self.set_cell(dst, block)?;
        debug_assert_eq!(epoch, self.collections());
        Ok(())
    }

    /// Bytes of the string held in `src`.
    pub fn mlroot_get_string(&self, src: RootSlot) -> Result<Vec<u8>> {
        self.enter_op(&[src])?;
        self.heap.read_string(self.cell(src)?)
    }

    pub fn mlroot_get_long(&self, src: RootSlot) -> Result<i64> {
        self.enter_op(&[src])?;
        self.cell(src)?.decode_long()
    }

    pub fn mlroot_set_long(&mut self, dst: RootSlot, n: i64) -> Result<()> {
        self.enter_op(&[dst])?;
        let v = Value::encode_long(n)?;
        self.set_cell(dst, v)
    }

    /// Same as [`Runtime::mlroot_set_long`].
    pub fn mlroot_val_long(&mut self, dst: RootSlot, n: i64) -> Result<()> {
        self.mlroot_set_long(dst, n)
    }

    /// `dst := field index of the block in src`.
    pub fn mlroot_get_field(&mut self, dst: RootSlot, src: RootSlot, index: usize) -> Result<()> {
        self.enter_op(&[dst, src])?;
        self.check_aliasing(dst, &[src])?;
        let field = self.heap.read_field(self.cell(src)?, index)?;
        self.set_cell(dst, field)
    }

    /// `field index of the block in dst := src`.
    pub fn mlroot_set_field(&mut self, dst: RootSlot, index: usize, src: RootSlot) -> Result<()> {
        self.enter_op(&[dst, src])?;
        self.check_aliasing(dst, &[src])?;
        let x = self.cell(src)?;
        let target = self.cell(dst)?;
        let check = self.defensive.verify_registration;
        self.heap.write_field(target, index, x, check)
    }

    pub fn mlroot_set_field_long(&mut self, dst: RootSlot, index: usize, n: i64) -> Result<()> {
        self.enter_op(&[dst])?;
        let x = Value::encode_long(n)?;
        let target = self.cell(dst)?;
        self.heap.write_field(target, index, x, false)
    }

    pub fn mlroot_get_size(&self, src: RootSlot) -> Result<usize> {
        self.enter_op(&[src])?;
        Ok(self.heap.block_info(self.cell(src)?)?.1)
    }

    pub fn mlroot_get_tag(&self, src: RootSlot) -> Result<u8> {
        self.enter_op(&[src])?;
        Ok(self.heap.block_info(self.cell(src)?)?.0)
    }
}
