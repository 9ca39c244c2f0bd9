//! Closures called back from binding code: sorting with an allocating
//! comparator, exceptions, and region misuse inside callees.

use std::cmp::Ordering;

use rand::Rng;
use rootsim_core::{CallStatus, ContextId, Error, RootSlot, Runtime, Value};

use super::{assign, ensure, At, Expected, Scenario, Session, Stop};
use crate::oracle::Tree;
use crate::report::ModeConfig;

pub const QSORT_ITEMS: usize = 256;
const QSORT_STREAM: u64 = 2;

pub fn qsort_inputs(mode: &ModeConfig) -> Vec<i64> {
    let mut rng = super::rng(mode.seed, QSORT_STREAM);
    (0..QSORT_ITEMS).map(|_| rng.random_range(-1_000_000..1_000_000)).collect()
}

fn qsort_oracle(mode: &ModeConfig) -> Vec<Tree> {
    let mut values = qsort_inputs(mode);
    values.sort();
    vec![Tree::block(values.into_iter().map(Tree::boxed).collect())]
}

/// Compares two boxed integers. Enters its own region and allocates a
/// pair of its arguments before looking at them, so every call can move
/// every block.
fn compare_boxed(rt: &mut Runtime, args: &[RootSlot], result: RootSlot) -> Result<CallStatus, Error> {
    let region = rt.mlregion_enter()?;
    let both = rt.mlregion_new_root()?;
    rt.mlroot_alloc(both, 2, 0)?;
    rt.mlroot_set_field(both, 0, args[0])?;
    rt.mlroot_set_field(both, 1, args[1])?;
    let t = rt.mlregion_new_root()?;
    let mut unboxed = [0; 2];
    for (i, n) in unboxed.iter_mut().enumerate() {
        rt.mlroot_get_field(t, both, i)?;
        rt.mlroot_get_field(t, t, 0)?;
        *n = rt.mlroot_get_long(t)?;
    }
    rt.mlroot_set_long(result, unboxed[0].cmp(&unboxed[1]) as i64)?;
    rt.mlregion_leave(region)?;
    Ok(CallStatus::Normal)
}

/// Stable merge sort with a fallible comparator.
fn merge_sort<T: Copy>(items: &mut Vec<T>, cmp: &mut dyn FnMut(T, T) -> Result<Ordering, Stop>) -> Result<(), Stop> {
    if items.len() <= 1 {
        return Ok(());
    }
    let mut right = items.split_off(items.len() / 2);
    let mut left = std::mem::take(items);
    merge_sort(&mut left, cmp)?;
    merge_sort(&mut right, cmp)?;
    let (mut i, mut j) = (0, 0);
    while i < left.len() && j < right.len() {
        if cmp(right[j], left[i])? == Ordering::Less {
            items.push(right[j]);
            j += 1;
        } else {
            items.push(left[i]);
            i += 1;
        }
    }
    items.extend_from_slice(&left[i..]);
    items.extend_from_slice(&right[j..]);
    Ok(())
}

fn call_comparator(rt: &mut Runtime, closure: RootSlot, a: RootSlot, b: RootSlot, result: RootSlot) -> Result<Ordering, Stop> {
    let status = rt.region_callback_exn(closure, &[a, b], result).at("comparator")?;
    ensure(status == CallStatus::Normal, || "comparator raised".into())?;
    Ok(rt.mlroot_get_long(result).at("comparator result")?.cmp(&0))
}

struct SortSetup {
    region: rootsim_core::Region,
    closure: RootSlot,
    result: RootSlot,
    array: rootsim_core::RootArray,
    items: Vec<RootSlot>,
}

fn sort_setup(s: &mut Session) -> Result<SortSetup, Stop> {
    let values = qsort_inputs(&s.mode);
    let rt = &mut s.rt;
    let region = rt.mlregion_enter().at("mlregion_enter")?;
    let closure = rt.mlregion_new_root().at("new_root")?;
    let f = rt.register_closure(compare_boxed).at("register_closure")?;
    rt.root_set(closure, f).at("store closure")?;
    let result = rt.mlregion_new_root().at("new_root")?;
    let array = rt.root_array_new(values.len());
    let items = rt.root_array_slots(array);
    for (slot, n) in items.iter().zip(&values) {
        rt.mlroot_alloc(*slot, 1, 0).at("box item")?;
        rt.mlroot_set_field_long(*slot, 0, *n).at("box item")?;
    }
    Ok(SortSetup { region, closure, result, array, items })
}

/// Packs the sorted slots into one block, checks it against a host sort
/// and serializes it.
fn sort_finish(s: &mut Session, setup: SortSetup, sorted: &[RootSlot], comparisons: i64) -> Result<Vec<u8>, Stop> {
    let mut expected = qsort_inputs(&s.mode);
    expected.sort();
    let rt = &mut s.rt;
    let out = rt.mlregion_new_root().at("new_root")?;
    rt.mlroot_alloc(out, sorted.len(), 0).at("alloc output")?;
    for (i, slot) in sorted.iter().enumerate() {
        rt.mlroot_set_field(out, i, *slot).at("store output")?;
    }
    let t = rt.mlregion_new_root().at("new_root")?;
    let mut decoded = Vec::with_capacity(sorted.len());
    for i in 0..sorted.len() {
        rt.mlroot_get_field(t, out, i).at("read output")?;
        rt.mlroot_get_field(t, t, 0).at("read output")?;
        decoded.push(rt.mlroot_get_long(t).at("read output")?);
    }
    ensure(decoded == expected, || "sorted output differs from host sort".into())?;
    let bytes = rt.structural_serialize(&[out]).at("serialize")?;
    rt.root_array_release(setup.array);
    rt.mlregion_leave(setup.region).at("mlregion_leave")?;
    s.record("comparisons", comparisons);
    Ok(bytes)
}

/// Items are slot handles; moving a handle never copies a value.
fn qsort_callback(s: &mut Session) -> Result<Vec<u8>, Stop> {
    let setup = sort_setup(s)?;
    let mut items = setup.items.clone();
    let mut comparisons = 0;
    let (closure, result) = (setup.closure, setup.result);
    let rt = &mut s.rt;
    merge_sort(&mut items, &mut |a, b| {
        comparisons += 1;
        call_comparator(rt, closure, a, b, result)
    })?;
    sort_finish(s, setup, &items, comparisons)
}

/// Items are bare values copied out of their slots. Each comparison roots
/// its two arguments in scratch slots, but the sort's own copies are never
/// updated when the comparator's allocations move the blocks.
fn qsort_callback_buggy(s: &mut Session) -> Result<Vec<u8>, Stop> {
    let setup = sort_setup(s)?;
    let (closure, result) = (setup.closure, setup.result);
    let rt = &mut s.rt;
    let mut items = Vec::with_capacity(setup.items.len());
    for slot in &setup.items {
        items.push(rt.root_get(*slot).at("copy item")?);
    }
    let sa = rt.mlregion_new_root().at("new_root")?;
    let sb = rt.mlregion_new_root().at("new_root")?;
    let mut comparisons = 0;
    merge_sort(&mut items, &mut |a: Value, b: Value| {
        comparisons += 1;
        rt.root_set(sa, a).at("root argument")?;
        rt.root_set(sb, b).at("root argument")?;
        call_comparator(rt, closure, sa, sb, result)
    })?;
    // Write the copies back into the item slots before packing.
    for (slot, v) in setup.items.iter().zip(&items) {
        rt.root_set(*slot, *v).at("write back")?;
    }
    let sorted = setup.items.clone();
    sort_finish(s, setup, &sorted, comparisons)
}

const RAISE_AT: i64 = 40;

/// Comparator that raises on its `RAISE_AT`-th call. The call count lives
/// in the heap, in a one-field block the closure reaches through its
/// second argument slot.
fn compare_or_raise(rt: &mut Runtime, args: &[RootSlot], result: RootSlot) -> Result<CallStatus, Error> {
    let region = rt.mlregion_enter()?;
    let t = rt.mlregion_new_root()?;
    rt.mlroot_get_field(t, args[2], 0)?;
    let calls = rt.mlroot_get_long(t)? + 1;
    rt.mlroot_set_field_long(args[2], 0, calls)?;
    if calls == RAISE_AT {
        rt.mlroot_string_copy(t, b"comparator raised")?;
        assign(rt, result, t)?;
        rt.mlregion_leave(region)?;
        return Ok(CallStatus::Exception);
    }
    rt.mlregion_leave(region)?;
    compare_boxed(rt, &args[..2], result)
}

/// The sort stops at the first exceptional status; the caller releases
/// everything it registered and hands the exception value back.
fn qsort_callback_exception(s: &mut Session) -> Result<Vec<u8>, Stop> {
    let setup = sort_setup(s)?;
    let rt = &mut s.rt;
    let f = rt.register_closure(compare_or_raise).at("register_closure")?;
    rt.root_set(setup.closure, f).at("store closure")?;
    let counter = rt.mlregion_new_root().at("new_root")?;
    rt.mlroot_alloc(counter, 1, 0).at("alloc counter")?;
    let (closure, result) = (setup.closure, setup.result);
    let mut items = setup.items.clone();
    let mut raised = false;
    let sorted = merge_sort(&mut items, &mut |a, b| {
        let status = rt.region_callback_exn(closure, &[a, b, counter], result).at("comparator")?;
        if status == CallStatus::Exception {
            raised = true;
            return Err(Stop::Failure("comparator raised".into()));
        }
        Ok(rt.mlroot_get_long(result).at("comparator result")?.cmp(&0))
    });
    match sorted {
        Err(Stop::Failure(_)) if raised => {}
        Err(stop) => return Err(stop),
        Ok(()) => return Err(Stop::Failure("comparator never raised".into())),
    }
    rt.mlroot_get_field(counter, counter, 0).at("read counter")?;
    let calls = rt.mlroot_get_long(counter).at("read counter")?;
    ensure(calls == RAISE_AT, || format!("sort continued after the exception ({calls} calls)"))?;
    let bytes = rt.structural_serialize(&[result]).at("serialize")?;
    rt.root_array_release(setup.array);
    rt.mlregion_leave(setup.region).at("mlregion_leave")?;
    s.record("comparisons", calls);
    Ok(bytes)
}

fn raising(rt: &mut Runtime, _: &[RootSlot], result: RootSlot) -> Result<CallStatus, Error> {
    let region = rt.mlregion_enter()?;
    let exn = rt.mlregion_new_root()?;
    rt.mlroot_string_copy(exn, b"boom")?;
    assign(rt, result, exn)?;
    rt.mlregion_leave(region)?;
    Ok(CallStatus::Exception)
}

fn successor(rt: &mut Runtime, args: &[RootSlot], result: RootSlot) -> Result<CallStatus, Error> {
    let region = rt.mlregion_enter()?;
    let scratch = rt.mlregion_new_root()?;
    rt.mlroot_alloc(scratch, 1, 0)?;
    let n = rt.mlroot_get_long(args[0])?;
    rt.mlroot_set_long(result, n + 1)?;
    rt.mlregion_leave(region)?;
    Ok(CallStatus::Normal)
}

fn counts(rt: &Runtime) -> Vec<(usize, bool)> {
    rt.region_stack().iter().map(|r| (r.live_count, r.disabled)).collect()
}

fn callback_exception(s: &mut Session) -> Result<Vec<u8>, Stop> {
    let rt = &mut s.rt;
    let outer = rt.mlregion_enter().at("mlregion_enter")?;
    rt.mlregion_new_root().at("new_root")?;
    let region = rt.mlregion_enter().at("mlregion_enter")?;
    let [c_raise, c_ok, arg, res_raise, res_ok] = [(); 5].map(|_| rt.mlregion_new_root());
    let (c_raise, c_ok, arg) = (c_raise.at("new_root")?, c_ok.at("new_root")?, arg.at("new_root")?);
    let (res_raise, res_ok) = (res_raise.at("new_root")?, res_ok.at("new_root")?);
    let f = rt.register_closure(raising).at("register_closure")?;
    rt.root_set(c_raise, f).at("store closure")?;
    let f = rt.register_closure(successor).at("register_closure")?;
    rt.root_set(c_ok, f).at("store closure")?;
    rt.mlroot_set_long(arg, 41).at("set arg")?;

    let before = counts(rt);
    let status = rt.region_callback_exn(c_raise, &[arg], res_raise).at("raising callback")?;
    ensure(status == CallStatus::Exception, || format!("raising callback returned {status:?}"))?;
    ensure(counts(rt) == before, || "region state not restored after exception".into())?;
    let status = rt.region_callback_exn(c_ok, &[arg], res_ok).at("normal callback")?;
    ensure(status == CallStatus::Normal, || format!("normal callback returned {status:?}"))?;
    ensure(counts(rt) == before, || "region state not restored after normal return".into())?;
    ensure(rt.mlroot_get_string(res_raise).at("exception payload")? == b"boom", || "wrong exception payload".into())?;

    let bytes = rt.structural_serialize(&[res_raise, res_ok]).at("serialize")?;
    rt.mlregion_leave(region).at("mlregion_leave")?;
    rt.mlregion_leave(outer).at("mlregion_leave")?;
    Ok(bytes)
}

/// Region code that forgot to set up a region, entered from frame code.
fn region_missing(s: &mut Session) -> Result<Vec<u8>, Stop> {
    let rt = &mut s.rt;
    let frame = rt.frame_begin().at("frame_begin")?;
    let closure = rt.frame_local(&frame).at("frame_local")?;
    let result = rt.frame_local(&frame).at("frame_local")?;
    let f = rt
        .register_closure(|rt, _, result| {
            let tmp = rt.mlregion_new_root()?;
            rt.mlroot_string_copy(tmp, b"unreachable")?;
            assign(rt, result, tmp)?;
            Ok(CallStatus::Normal)
        })
        .at("register_closure")?;
    rt.root_set(closure, f).at("store closure")?;
    rt.legacy_callback_exn(closure, &[], result).at("entrypoint without region")?;
    let bytes = rt.structural_serialize(&[result]).at("serialize")?;
    rt.frame_end(frame).at("frame_end")?;
    Ok(bytes)
}

/// Another thread takes over while the lock is released and tries to
/// close the first thread's release section.
fn context_switch(s: &mut Session) -> Result<Vec<u8>, Stop> {
    let rt = &mut s.rt;
    let region = rt.mlregion_enter().at("mlregion_enter")?;
    let p = rt.mlregion_new_root().at("new_root")?;
    rt.mlroot_set_long(p, 7).at("set_long")?;
    rt.mlregion_release_runtime_system().at("release")?;
    let own = rt.context();
    rt.switch_context(ContextId(own.0 + 1));
    rt.mlregion_acquire_runtime_system().at("acquire from preempted context")?;
    rt.switch_context(own);
    let bytes = rt.structural_serialize(&[p]).at("serialize")?;
    rt.mlregion_leave(region).at("mlregion_leave")?;
    Ok(bytes)
}

/// A callee allocates roots in its caller's region instead of its own.
fn callback_outer_region(s: &mut Session) -> Result<Vec<u8>, Stop> {
    let rt = &mut s.rt;
    let region = rt.mlregion_enter().at("mlregion_enter")?;
    let closure = rt.mlregion_new_root().at("new_root")?;
    let result = rt.mlregion_new_root().at("new_root")?;
    let f = rt
        .register_closure(|rt, _, result| {
            let tmp = rt.mlregion_new_root()?;
            rt.mlroot_alloc(tmp, 1, 0)?;
            assign(rt, result, tmp)?;
            Ok(CallStatus::Normal)
        })
        .at("register_closure")?;
    rt.root_set(closure, f).at("store closure")?;
    rt.region_callback_exn(closure, &[], result).at("callback")?;
    let bytes = rt.structural_serialize(&[result]).at("serialize")?;
    rt.mlregion_leave(region).at("mlregion_leave")?;
    Ok(bytes)
}

pub(super) fn scenarios() -> Vec<Scenario> {
    vec![
        Scenario {
            name: "qsort_callback",
            description: "256 boxed ints sorted through an allocating comparator closure",
            program: qsort_callback,
            oracle: Some(qsort_oracle),
            expect: |_, _| Expected::Clean,
            buggy: false,
        },
        Scenario {
            name: "qsort_callback_buggy",
            description: "same sort over bare value copies that are never updated",
            program: qsort_callback_buggy,
            oracle: Some(qsort_oracle),
            expect: |torture, _| if torture { Expected::Diagnostic("StaleValue") } else { Expected::Latent("StaleValue") },
            buggy: true,
        },
        Scenario {
            name: "qsort_callback_exception",
            description: "sort abandoned when the comparator raises; exception value returned",
            program: qsort_callback_exception,
            oracle: Some(|_| vec![Tree::Text(b"comparator raised".to_vec())]),
            expect: |_, _| Expected::Clean,
            buggy: false,
        },
        Scenario {
            name: "callback_exception",
            description: "raising and returning closures leave region state as they found it",
            program: callback_exception,
            oracle: Some(|_| vec![Tree::Text(b"boom".to_vec()), Tree::Int(42)]),
            expect: |_, _| Expected::Clean,
            buggy: false,
        },
        Scenario {
            name: "region_missing",
            description: "region code entered from a callback without a region",
            program: region_missing,
            oracle: None,
            expect: |_, _| Expected::Diagnostic("NoCurrentRegion"),
            buggy: true,
        },
        Scenario {
            name: "context_switch",
            description: "release section closed from a different execution context",
            program: context_switch,
            oracle: None,
            expect: |_, _| Expected::Diagnostic("RegionContextMismatch"),
            buggy: true,
        },
        Scenario {
            name: "callback_outer_region",
            description: "callee allocates roots in the caller's disabled region",
            program: callback_outer_region,
            oracle: None,
            expect: |_, _| Expected::Diagnostic("RegionDisabled"),
            buggy: true,
        },
    ]
}
