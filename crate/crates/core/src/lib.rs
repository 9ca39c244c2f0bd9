//! A miniature managed runtime for studying foreign-interface rooting.
//!
//! The heap stores tagged words in two semispaces and collects by copying,
//! so every collection moves every live block and poisons the space it
//! left. Three interfaces sit on top of it:
//!
//! - [`legacy`]: value-centric, with LIFO local-root frames. Bare values
//!   held across an allocation go stale.
//! - [`mlroot`]: root-centric. Every argument is a slot, results are
//!   written through a destination slot, and a defensive mode checks that
//!   each slot is registered.
//! - [`mlregion`]: dynamically growing root sets with implicit scoping,
//!   sub-regions, runtime-lock bracketing and callback isolation.
//!
//! Torture mode collects before every allocation; together with poisoning
//! this turns latent rooting bugs into deterministic [`Error::StaleValue`]
//! diagnostics.

#![no_std]

extern crate alloc;

mod error;
pub mod heap;
pub mod legacy;
pub mod mlregion;
pub mod mlroot;
mod roots;
pub mod runtime;
pub mod value;

pub use error::{Error, Result};
pub use heap::{BlockHeader, Classification, CollectStats, RootProvider};
pub use legacy::{CallStatus, HostFn, RootsFrame};
pub use mlregion::{Region, RegionInfo, RegionKind, SubRegionMark};
pub use mlroot::{AliasPolicy, DefensiveConfig};
pub use roots::{RootSlot, SlotOrigin, CHUNK_SLOTS};
pub use runtime::{ContextId, LockState, RootArray, Runtime, MIN_SEMISPACE_WORDS};
pub use value::{Value, CLOSURE_TAG, MAX_LONG, NO_SCAN_TAG, POISON_PATTERN, STRING_TAG};
