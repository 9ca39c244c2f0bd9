//! Pair and triplet builders in both binding styles, correct and not.

use rand::Rng;
use rootsim_core::{AliasPolicy, Error, RootSlot, Runtime, Value};

use super::{assign, At, Expected, Scenario, Session, Stop};
use crate::oracle::Tree;
use crate::report::ModeConfig;

const VALUE_STREAM: u64 = 1;

fn inputs(mode: &ModeConfig) -> [i64; 3] {
    let mut rng = super::rng(mode.seed, VALUE_STREAM);
    [(); 3].map(|_| rng.random_range(-1_000_000..1_000_000))
}

fn pair_oracle(mode: &ModeConfig) -> Vec<Tree> {
    let [x, y, _] = inputs(mode);
    vec![Tree::pair(Tree::boxed(x), Tree::boxed(y))]
}

fn triplet_oracle(mode: &ModeConfig) -> Vec<Tree> {
    let [x, y, z] = inputs(mode);
    vec![Tree::pair(Tree::boxed(x), Tree::pair(Tree::boxed(y), Tree::boxed(z)))]
}

fn long(n: i64) -> Value {
    Value::encode_long(n).expect("small literal")
}

// Value-style helpers. Arguments are bare values that the callee roots
// before allocating; the caller is responsible for them being fresh.

fn box_legacy(rt: &mut Runtime, n: i64) -> Result<Value, Error> {
    let v = rt.legacy_alloc(1, 0)?;
    rt.write_field(v, 0, long(n))?;
    Ok(v)
}

fn mk_pair_legacy(rt: &mut Runtime, a: Value, b: Value) -> Result<Value, Error> {
    let frame = rt.frame_begin()?;
    let params = rt.frame_register_all(&frame, &[a, b])?;
    let result = rt.frame_local(&frame)?;
    let block = rt.legacy_alloc(2, 0)?;
    rt.root_set(result, block)?;
    let r = rt.root_get(result)?;
    rt.write_field(r, 0, rt.root_get(params[0])?)?;
    rt.write_field(r, 1, rt.root_get(params[1])?)?;
    rt.frame_end(frame)?;
    Ok(r)
}

/// Boxes x, y, z and roots them as the parameters of a frame.
fn legacy_params(s: &mut Session) -> Result<(rootsim_core::RootsFrame, [RootSlot; 3]), Stop> {
    let [x, y, z] = inputs(&s.mode);
    let rt = &mut s.rt;
    let frame = rt.frame_begin().at("frame_begin")?;
    let mut slots = [None; 3];
    for (slot, n) in slots.iter_mut().zip([x, y, z]) {
        let root = rt.frame_local(&frame).at("frame_local")?;
        let v = box_legacy(rt, n).at("box")?;
        rt.root_set(root, v).at("box")?;
        *slot = Some(root);
    }
    Ok((frame, slots.map(Option::unwrap)))
}

fn pair_legacy(s: &mut Session) -> Result<Vec<u8>, Stop> {
    let (frame, [sx, sy, _]) = legacy_params(s)?;
    let rt = &mut s.rt;
    let p = mk_pair_legacy(rt, rt.root_get(sx).at("read x")?, rt.root_get(sy).at("read y")?).at("mk_pair")?;
    let out = rt.frame_register(&frame, p).at("register result")?;
    let bytes = rt.structural_serialize(&[out]).at("serialize")?;
    rt.frame_end(frame).at("frame_end")?;
    Ok(bytes)
}

/// `mk_pair(x, mk_pair(y, z))` with x loaded before the inner call.
fn triplet_buggy_legacy(s: &mut Session) -> Result<Vec<u8>, Stop> {
    let (frame, [sx, sy, sz]) = legacy_params(s)?;
    let rt = &mut s.rt;
    let x = rt.root_get(sx).at("read x")?;
    let inner = mk_pair_legacy(rt, rt.root_get(sy).at("read y")?, rt.root_get(sz).at("read z")?).at("inner mk_pair")?;
    let outer = mk_pair_legacy(rt, x, inner).at("outer mk_pair")?;
    let out = rt.frame_register(&frame, outer).at("register result")?;
    let bytes = rt.structural_serialize(&[out]).at("serialize")?;
    rt.frame_end(frame).at("frame_end")?;
    Ok(bytes)
}

/// Same, with the inner pair kept in a rooted intermediate.
fn triplet_fixed_legacy(s: &mut Session) -> Result<Vec<u8>, Stop> {
    let (frame, [sx, sy, sz]) = legacy_params(s)?;
    let rt = &mut s.rt;
    let tmp = rt.frame_local(&frame).at("frame_local")?;
    let inner = mk_pair_legacy(rt, rt.root_get(sy).at("read y")?, rt.root_get(sz).at("read z")?).at("inner mk_pair")?;
    rt.root_set(tmp, inner).at("store inner")?;
    let outer = mk_pair_legacy(rt, rt.root_get(sx).at("read x")?, rt.root_get(tmp).at("read tmp")?).at("outer mk_pair")?;
    let out = rt.frame_register(&frame, outer).at("register result")?;
    let bytes = rt.structural_serialize(&[out]).at("serialize")?;
    rt.frame_end(frame).at("frame_end")?;
    Ok(bytes)
}

// Slot-style helpers. They need a current region for temporaries.

fn box_mlroot(rt: &mut Runtime, dst: RootSlot, n: i64) -> Result<(), Error> {
    rt.mlroot_alloc(dst, 1, 0)?;
    rt.mlroot_set_field_long(dst, 0, n)
}

/// `result := (a, b)`. Aliasing goes through the runtime's policy; when it
/// is tolerated the inputs are copied to temporaries first.
pub(super) fn mk_pair(rt: &mut Runtime, result: RootSlot, a: RootSlot, b: RootSlot) -> Result<(), Error> {
    if !rt.check_aliasing(result, &[a, b])? {
        rt.mlroot_alloc(result, 2, 0)?;
        rt.mlroot_set_field(result, 0, a)?;
        return rt.mlroot_set_field(result, 1, b);
    }
    let mark = rt.mlregion_subenter()?;
    let ta = rt.mlregion_new_root()?;
    let tb = rt.mlregion_new_root()?;
    assign(rt, ta, a)?;
    assign(rt, tb, b)?;
    rt.mlroot_alloc(result, 2, 0)?;
    rt.mlroot_set_field(result, 0, ta)?;
    rt.mlroot_set_field(result, 1, tb)?;
    rt.mlregion_subleave(mark)
}

/// Enters a region holding boxed x, y, z and a result slot.
fn mlroot_params(s: &mut Session) -> Result<(rootsim_core::Region, [RootSlot; 4]), Stop> {
    let [x, y, z] = inputs(&s.mode);
    let rt = &mut s.rt;
    let region = rt.mlregion_enter().at("mlregion_enter")?;
    let mut slots = [None; 4];
    for slot in slots.iter_mut() {
        *slot = Some(rt.mlregion_new_root().at("mlregion_new_root")?);
    }
    let slots = slots.map(Option::unwrap);
    for (slot, n) in slots.iter().zip([x, y, z]) {
        box_mlroot(rt, *slot, n).at("box")?;
    }
    Ok((region, slots))
}

fn finish(rt: &mut Runtime, region: rootsim_core::Region, result: RootSlot) -> Result<Vec<u8>, Stop> {
    let bytes = rt.structural_serialize(&[result]).at("serialize")?;
    rt.mlregion_leave(region).at("mlregion_leave")?;
    Ok(bytes)
}

fn pair_mlroot(s: &mut Session) -> Result<Vec<u8>, Stop> {
    let (region, [x, y, _, result]) = mlroot_params(s)?;
    mk_pair(&mut s.rt, result, x, y).at("mk_pair")?;
    finish(&mut s.rt, region, result)
}

fn triplet_mlroot(s: &mut Session) -> Result<Vec<u8>, Stop> {
    let (region, [x, y, z, result]) = mlroot_params(s)?;
    let rt = &mut s.rt;
    let tmp = rt.mlregion_new_root().at("mlregion_new_root")?;
    mk_pair(rt, tmp, y, z).at("inner mk_pair")?;
    mk_pair(rt, result, x, tmp).at("outer mk_pair")?;
    finish(rt, region, result)
}

fn triplet_aliased_with(s: &mut Session, policy: AliasPolicy) -> Result<Vec<u8>, Stop> {
    let (region, [x, y, z, result]) = mlroot_params(s)?;
    let rt = &mut s.rt;
    rt.set_alias_policy(policy);
    mk_pair(rt, result, y, z).at("mk_pair(result, y, z)")?;
    mk_pair(rt, result, x, result).at("mk_pair(result, x, result)")?;
    finish(rt, region, result)
}

fn triplet_aliased(s: &mut Session) -> Result<Vec<u8>, Stop> {
    triplet_aliased_with(s, AliasPolicy::Handle)
}

fn triplet_aliased_fail(s: &mut Session) -> Result<Vec<u8>, Stop> {
    triplet_aliased_with(s, AliasPolicy::Fail)
}

pub(super) fn scenarios() -> Vec<Scenario> {
    vec![
        Scenario {
            name: "pair_legacy",
            description: "boxed pair built with frame-registered values",
            program: pair_legacy,
            oracle: Some(pair_oracle),
            expect: |_, _| Expected::Clean,
            buggy: false,
        },
        Scenario {
            name: "pair_mlroot",
            description: "boxed pair built through slot accessors in a region",
            program: pair_mlroot,
            oracle: Some(pair_oracle),
            expect: |_, _| Expected::Clean,
            buggy: false,
        },
        Scenario {
            name: "triplet_buggy_legacy",
            description: "mk_pair(x, mk_pair(y, z)) with x loaded before the inner allocation",
            program: triplet_buggy_legacy,
            oracle: Some(triplet_oracle),
            expect: |torture, _| if torture { Expected::Diagnostic("StaleValue") } else { Expected::Latent("StaleValue") },
            buggy: true,
        },
        Scenario {
            name: "triplet_fixed_legacy",
            description: "triplet with the inner pair held in a rooted intermediate",
            program: triplet_fixed_legacy,
            oracle: Some(triplet_oracle),
            expect: |_, _| Expected::Clean,
            buggy: false,
        },
        Scenario {
            name: "triplet_mlroot",
            description: "triplet through slot accessors and a mk_pair helper",
            program: triplet_mlroot,
            oracle: Some(triplet_oracle),
            expect: |_, _| Expected::Clean,
            buggy: false,
        },
        Scenario {
            name: "triplet_aliased",
            description: "result slot reused as input; inputs copied before writing",
            program: triplet_aliased,
            oracle: Some(triplet_oracle),
            expect: |_, _| Expected::Clean,
            buggy: false,
        },
        Scenario {
            name: "triplet_aliased_fail",
            description: "result slot reused as input under the failing alias policy",
            program: triplet_aliased_fail,
            oracle: Some(triplet_oracle),
            expect: |_, _| Expected::Diagnostic("AliasedRoots"),
            buggy: true,
        },
    ]
}
