//! Random programs written only against the slot-based accessors, run under
//! torture and checked against a host-level model of the object graph.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rootsim_core::{Error, RootSlot, Runtime, Value, STRING_TAG};

const SLOTS: usize = 6;

#[derive(Debug, Clone)]
enum Op {
    Alloc { dst: usize, size: usize },
    Str { dst: usize, len: usize },
    SetLong { dst: usize, n: i64 },
    GetField { dst: usize, src: usize, index: usize },
    SetField { dst: usize, index: usize, src: usize },
    SetFieldLong { dst: usize, index: usize, n: i64 },
    GetLong { src: usize },
    GetSize { src: usize },
    Collect,
}

fn op() -> impl Strategy<Value = Op> {
    let s = 0..SLOTS;
    prop_oneof![
        3 => (s.clone(), 0..4usize).prop_map(|(dst, size)| Op::Alloc { dst, size }),
        1 => (s.clone(), 0..20usize).prop_map(|(dst, len)| Op::Str { dst, len }),
        1 => (s.clone(), -1000..1000i64).prop_map(|(dst, n)| Op::SetLong { dst, n }),
        3 => (s.clone(), s.clone(), 0..4usize).prop_map(|(dst, src, index)| Op::GetField { dst, src, index }),
        3 => (s.clone(), 0..4usize, s.clone()).prop_map(|(dst, index, src)| Op::SetField { dst, index, src }),
        1 => (s.clone(), 0..4usize, -1000..1000i64).prop_map(|(dst, index, n)| Op::SetFieldLong { dst, index, n }),
        1 => s.clone().prop_map(|src| Op::GetLong { src }),
        1 => s.clone().prop_map(|src| Op::GetSize { src }),
        1 => Just(Op::Collect),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum M {
    Imm(i64),
    Node(usize),
}

enum Node {
    Fields(Vec<M>),
    Text(Vec<u8>),
}

struct Model {
    slots: [M; SLOTS],
    nodes: Vec<Node>,
}

impl Model {
    fn fields(&self, m: M) -> Result<&Vec<M>, Error> {
        match m {
            M::Imm(_) => Err(Error::NotABlock),
            M::Node(i) => match &self.nodes[i] {
                Node::Fields(f) => Ok(f),
                Node::Text(_) => Err(Error::WrongTag { tag: STRING_TAG }),
            },
        }
    }
}

/// Checks that runtime and model graphs are isomorphic from the slots.
fn same_graph(rt: &Runtime, slots: &[RootSlot], model: &Model) -> Result<(), String> {
    let mut map: BTreeMap<usize, u64> = BTreeMap::new();
    let mut back: BTreeMap<u64, usize> = BTreeMap::new();
    let mut todo: Vec<(Value, M)> =
        slots.iter().zip(model.slots.iter()).map(|(s, m)| (rt.root_get(*s).unwrap(), *m)).collect();
    while let Some((v, m)) = todo.pop() {
        match m {
            M::Imm(n) => {
                if v.decode_long() != Ok(n) {
                    return Err(format!("expected immediate {n}, found {v:?}"));
                }
            }
            M::Node(i) => {
                if !v.is_block() {
                    return Err(format!("expected block, found {v:?}"));
                }
                match (map.get(&i), back.get(&v.raw())) {
                    (Some(&r), Some(&j)) if r == v.raw() && j == i => continue,
                    (None, None) => {
                        map.insert(i, v.raw());
                        back.insert(v.raw(), i);
                    }
                    _ => return Err(format!("sharing differs at node {i}")),
                }
                match &model.nodes[i] {
                    Node::Text(bytes) => {
                        if rt.read_string(v).map_err(|e| e.to_string())? != *bytes {
                            return Err(format!("string {i} differs"));
                        }
                    }
                    Node::Fields(fields) => {
                        let (_, size) = rt.block_info(v).map_err(|e| e.to_string())?;
                        if size != fields.len() {
                            return Err(format!("node {i} size {size} != {}", fields.len()));
                        }
                        for (k, f) in fields.iter().enumerate() {
                            todo.push((rt.read_field(v, k).unwrap(), *f));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn run_program(ops: &[Op], torture: bool, defensive: bool) -> Result<(), TestCaseError> {
    let mut rt = Runtime::new(4096, torture, defensive).unwrap();
    let region = rt.mlregion_enter().unwrap();
    let slots: Vec<RootSlot> = (0..SLOTS).map(|_| rt.mlregion_new_root().unwrap()).collect();
    let mut model = Model { slots: [M::Imm(0); SLOTS], nodes: Vec::new() };
    for (step, op) in ops.iter().enumerate() {
        match *op {
            Op::Alloc { dst, size } => {
                rt.mlroot_alloc(slots[dst], size, 0).unwrap();
                model.nodes.push(Node::Fields(vec![M::Imm(0); size]));
                model.slots[dst] = M::Node(model.nodes.len() - 1);
            }
            Op::Str { dst, len } => {
                let bytes: Vec<u8> = (0..len).map(|i| (i * 7 + step) as u8).collect();
                rt.mlroot_string_copy(slots[dst], &bytes).unwrap();
                model.nodes.push(Node::Text(bytes));
                model.slots[dst] = M::Node(model.nodes.len() - 1);
            }
            Op::SetLong { dst, n } => {
                rt.mlroot_set_long(slots[dst], n).unwrap();
                model.slots[dst] = M::Imm(n);
            }
            Op::GetField { dst, src, index } => {
                let got = rt.mlroot_get_field(slots[dst], slots[src], index);
                let expected = model.fields(model.slots[src]).and_then(|f| {
                    f.get(index).copied().ok_or(Error::IndexOutOfBounds { index, size: f.len() })
                });
                match expected {
                    Ok(m) => {
                        prop_assert_eq!(got, Ok(()));
                        model.slots[dst] = m;
                    }
                    Err(e) => prop_assert_eq!(got, Err(e)),
                }
            }
            Op::SetField { dst, index, src } => {
                let got = rt.mlroot_set_field(slots[dst], index, slots[src]);
                let x = model.slots[src];
                let target = model.slots[dst];
                let len = model.fields(target).map(|f| f.len());
                match len {
                    Ok(size) if index < size => {
                        prop_assert_eq!(got, Ok(()));
                        let M::Node(i) = target else { unreachable!() };
                        let Node::Fields(f) = &mut model.nodes[i] else { unreachable!() };
                        f[index] = x;
                    }
                    Ok(size) => prop_assert_eq!(got, Err(Error::IndexOutOfBounds { index, size })),
                    Err(e) => prop_assert_eq!(got, Err(e)),
                }
            }
            Op::SetFieldLong { dst, index, n } => {
                let got = rt.mlroot_set_field_long(slots[dst], index, n);
                let target = model.slots[dst];
                match model.fields(target).map(|f| f.len()) {
                    Ok(size) if index < size => {
                        prop_assert_eq!(got, Ok(()));
                        let M::Node(i) = target else { unreachable!() };
                        let Node::Fields(f) = &mut model.nodes[i] else { unreachable!() };
                        f[index] = M::Imm(n);
                    }
                    Ok(size) => prop_assert_eq!(got, Err(Error::IndexOutOfBounds { index, size })),
                    Err(e) => prop_assert_eq!(got, Err(e)),
                }
            }
            Op::GetLong { src } => {
                let got = rt.mlroot_get_long(slots[src]);
                match model.slots[src] {
                    M::Imm(n) => prop_assert_eq!(got, Ok(n)),
                    M::Node(_) => prop_assert_eq!(got, Err(Error::NotImmediate)),
                }
            }
            Op::GetSize { src } => {
                let got = rt.mlroot_get_size(slots[src]);
                match model.slots[src] {
                    M::Imm(_) => prop_assert_eq!(got, Err(Error::NotABlock)),
                    M::Node(i) => {
                        let size = match &model.nodes[i] {
                            Node::Fields(f) => f.len(),
                            Node::Text(b) => 1 + b.len().div_ceil(8),
                        };
                        prop_assert_eq!(got, Ok(size));
                    }
                }
            }
            Op::Collect => {
                rt.collect().unwrap();
            }
        }
        if let Err(msg) = same_graph(&rt, &slots, &model) {
            return Err(TestCaseError::fail(format!("step {step} {op:?}: {msg}")));
        }
    }
    rt.collect().unwrap();
    if let Err(msg) = same_graph(&rt, &slots, &model) {
        return Err(TestCaseError::fail(format!("final collection: {msg}")));
    }
    rt.mlregion_leave(region).unwrap();
    prop_assert_eq!(rt.root_count(), 0);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn programs_survive_torture(ops in proptest::collection::vec(op(), 1..60), defensive in any::<bool>()) {
        run_program(&ops, true, defensive)?;
    }

    #[test]
    fn programs_match_model_without_torture(ops in proptest::collection::vec(op(), 1..120)) {
        run_program(&ops, false, false)?;
    }
}
