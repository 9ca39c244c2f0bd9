//! Region accounting, the runtime lock, and a slot that outlived its frame.

use rootsim_core::{Error, Region, RootSlot, Runtime, Value};

use super::{assign, ensure, heap_state_digest, At, Expected, Scenario, Session, Stop};
use crate::oracle::Tree;
use crate::report::ModeConfig;

pub const FOLD_ITEMS: usize = 1000;
const REACQUIRED_ALLOCS: i64 = 16;

fn box_into(rt: &mut Runtime, dst: RootSlot, n: i64) -> Result<(), Error> {
    rt.mlroot_alloc(dst, 1, 0)?;
    rt.mlroot_set_field_long(dst, 0, n)
}

fn live_count(rt: &Runtime, region: Region) -> i64 {
    rt.region_info(region).map_or(0, |i| i.live_count as i64)
}

/// `acc := box(unbox acc + unbox item)`, reusing `item` as scratch.
fn process_item(rt: &mut Runtime, acc: RootSlot, item: RootSlot) -> Result<(), Error> {
    rt.mlroot_get_field(item, item, 0)?;
    let v = rt.mlroot_get_long(item)?;
    rt.mlroot_get_field(item, acc, 0)?;
    let a = rt.mlroot_get_long(item)?;
    box_into(rt, acc, a + v)
}

/// One sub-region per element, so the region never holds more than the
/// two parameters and the current item.
fn fold_array(rt: &mut Runtime, region: Region, acc: RootSlot, array: RootSlot, peak: &mut i64) -> Result<(), Error> {
    let count = rt.mlroot_get_size(array)?;
    for i in 0..count {
        let mark = rt.mlregion_subenter()?;
        let item = rt.mlregion_new_root()?;
        *peak = (*peak).max(live_count(rt, region));
        rt.mlroot_get_field(item, array, i)?;
        process_item(rt, acc, item)?;
        rt.mlregion_subleave(mark)?;
    }
    Ok(())
}

fn fold_array_subregions(s: &mut Session) -> Result<Vec<u8>, Stop> {
    let rt = &mut s.rt;
    let (region, params) = rt.region_begin_with_params(&[Value::UNIT, Value::UNIT]).at("region_begin")?;
    let (acc, array) = (params[0], params[1]);
    let mut peak = live_count(rt, region);

    rt.mlroot_alloc(array, FOLD_ITEMS, 0).at("alloc array")?;
    for i in 0..FOLD_ITEMS {
        let mark = rt.mlregion_subenter().at("subenter")?;
        let item = rt.mlregion_new_root().at("new_root")?;
        peak = peak.max(live_count(rt, region));
        box_into(rt, item, i as i64).at("box element")?;
        rt.mlroot_set_field(array, i, item).at("store element")?;
        rt.mlregion_subleave(mark).at("subleave")?;
    }
    box_into(rt, acc, 0).at("box accumulator")?;
    fold_array(rt, region, acc, array, &mut peak).at("fold_array")?;

    let mark = rt.mlregion_subenter().at("subenter")?;
    let t = rt.mlregion_new_root().at("new_root")?;
    peak = peak.max(live_count(rt, region));
    rt.mlroot_get_field(t, acc, 0).at("unbox accumulator")?;
    let sum = rt.mlroot_get_long(t).at("unbox accumulator")?;
    rt.mlregion_subleave(mark).at("subleave")?;
    ensure(live_count(rt, region) == 2, || "sub-regions leaked roots".into())?;

    let bytes = rt.structural_serialize(&[acc]).at("serialize")?;
    rt.mlregion_leave(region).at("mlregion_leave")?;
    s.record("peak_live_count", peak);
    s.record("parameter_slots", 2);
    s.record("sum", sum);
    Ok(bytes)
}

fn fold_oracle(_: &ModeConfig) -> Vec<Tree> {
    vec![Tree::boxed((0..FOLD_ITEMS as i64).sum())]
}

type Forbidden = (&'static str, fn(&mut Runtime, RootSlot) -> Result<(), Error>);

/// Operations that touch values or the heap and so need the lock.
const FORBIDDEN: &[Forbidden] = &[
    ("alloc", |rt, _| rt.alloc(2, 0).map(drop)),
    ("legacy_alloc", |rt, _| rt.legacy_alloc(2, 0).map(drop)),
    ("legacy_copy_string", |rt, _| rt.legacy_copy_string(b"x").map(drop)),
    ("collect", |rt, _| rt.collect().map(drop)),
    ("read_field", |rt, _| rt.read_field(Value::UNIT, 0).map(drop)),
    ("root_get", |rt, p| rt.root_get(p).map(drop)),
    ("root_set", |rt, p| rt.root_set(p, Value::UNIT)),
    ("mlroot_alloc", |rt, p| rt.mlroot_alloc(p, 2, 0)),
    ("mlroot_string_copy", |rt, p| rt.mlroot_string_copy(p, b"x")),
    ("mlroot_get_long", |rt, p| rt.mlroot_get_long(p).map(drop)),
    ("mlroot_set_long", |rt, p| rt.mlroot_set_long(p, 1)),
    ("mlroot_get_field", |rt, p| rt.mlroot_get_field(p, p, 0)),
    ("mlroot_set_field", |rt, p| rt.mlroot_set_field(p, 0, p)),
    ("mlroot_set_field_long", |rt, p| rt.mlroot_set_field_long(p, 0, 1)),
    ("mlroot_get_size", |rt, p| rt.mlroot_get_size(p).map(drop)),
    ("mlregion_enter", |rt, _| rt.mlregion_enter().map(drop)),
    ("mlregion_new_root", |rt, _| rt.mlregion_new_root().map(drop)),
    ("frame_begin", |rt, _| rt.frame_begin().map(drop)),
    ("register_closure", |rt, _| rt.register_closure(|_, _, _| Ok(rootsim_core::CallStatus::Normal)).map(drop)),
];

fn check_forbidden(rt: &mut Runtime, p: RootSlot) -> Result<i64, Stop> {
    let before = heap_state_digest(rt);
    for (name, op) in FORBIDDEN {
        match op(rt, p) {
            Err(Error::RuntimeReleased) => {}
            other => return Err(Stop::Failure(format!("{name} while released returned {other:?}"))),
        }
        ensure(heap_state_digest(rt) == before, || format!("{name} changed the heap while released"))?;
    }
    Ok(FORBIDDEN.len() as i64)
}

fn lock_release(s: &mut Session) -> Result<Vec<u8>, Stop> {
    let rt = &mut s.rt;
    let region = rt.mlregion_enter().at("mlregion_enter")?;
    let list = rt.mlregion_new_root().at("new_root")?;

    rt.mlregion_release_runtime_system().at("release")?;
    let checked = check_forbidden(rt, list)?;

    rt.mlregion_reacquire_runtime_system().at("reacquire")?;
    let cell = rt.mlregion_new_root().at("new_root in reacquired region")?;
    for i in 0..REACQUIRED_ALLOCS {
        rt.mlroot_alloc(cell, 2, 0).at("cons")?;
        rt.mlroot_set_field_long(cell, 0, i).at("cons")?;
        rt.mlroot_set_field(cell, 1, list).at("cons")?;
        assign(rt, list, cell).at("cons")?;
    }
    rt.mlregion_rerelease_runtime_system().at("rerelease")?;
    let rechecked = check_forbidden(rt, list)?;
    rt.mlregion_acquire_runtime_system().at("acquire")?;

    let bytes = rt.structural_serialize(&[list]).at("serialize")?;
    rt.mlregion_leave(region).at("mlregion_leave")?;
    s.record("forbidden_ops_checked", checked + rechecked);
    s.record("reacquired_allocations", REACQUIRED_ALLOCS);
    Ok(bytes)
}

fn list_oracle(_: &ModeConfig) -> Vec<Tree> {
    let list = (0..REACQUIRED_ALLOCS).fold(Tree::Int(0), |tail, i| Tree::pair(Tree::Int(i), tail));
    vec![list]
}

/// Returns a slot of a frame that has already ended.
fn leaked_local(rt: &mut Runtime) -> Result<RootSlot, Error> {
    let frame = rt.frame_begin()?;
    let slot = rt.frame_local(&frame)?;
    rt.frame_end(frame)?;
    Ok(slot)
}

fn unregistered_root(s: &mut Session) -> Result<Vec<u8>, Stop> {
    let rt = &mut s.rt;
    let region = rt.mlregion_enter().at("mlregion_enter")?;
    let result = rt.mlregion_new_root().at("new_root")?;
    let dead = leaked_local(rt).at("leaked_local")?;

    let before = heap_state_digest(rt);
    if let Err(error) = rt.mlroot_alloc(dead, 3, 0) {
        ensure(heap_state_digest(rt) == before, || "heap changed before the slot was rejected".into())?;
        return Err(Stop::Diagnostic { error, site: "mlroot_alloc into ended frame's slot".into() });
    }
    // Nothing enumerates `dead`; the block lives only until the next
    // collection, and the next frame_local will hand out the same cell.
    let hazard = !rt.is_registered_root(dead);
    rt.mlroot_set_field_long(dead, 0, 42).at("set_field_long on dead slot")?;
    rt.mlroot_get_field(result, dead, 0).at("get_field from dead slot")?;

    let bytes = rt.structural_serialize(&[result]).at("serialize")?;
    rt.mlregion_leave(region).at("mlregion_leave")?;
    s.record("silent_hazard", hazard as i64);
    Ok(bytes)
}

pub(super) fn scenarios() -> Vec<Scenario> {
    vec![
        Scenario {
            name: "unregistered_root",
            description: "slot accessor used on a slot of an ended frame",
            program: unregistered_root,
            oracle: Some(|_| vec![Tree::Int(42)]),
            expect: |_, defensive| if defensive { Expected::Diagnostic("UnregisteredRoot") } else { Expected::Clean },
            buggy: true,
        },
        Scenario {
            name: "fold_array_subregions",
            description: "sum of 1000 boxed elements with one sub-region per element",
            program: fold_array_subregions,
            oracle: Some(fold_oracle),
            expect: |_, _| Expected::Clean,
            buggy: false,
        },
        Scenario {
            name: "lock_release",
            description: "forbidden operations while released, allocation in a reacquired section",
            program: lock_release,
            oracle: Some(list_oracle),
            expect: |_, _| Expected::Clean,
            buggy: false,
        },
    ]
}
