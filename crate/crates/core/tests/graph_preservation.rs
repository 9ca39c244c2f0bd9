//! Collector properties checked against a host-side model of the heap
//! graph: the expected serialization and the reachable word count are
//! computed from the model alone.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rootsim_core::{Classification, Runtime, Value, POISON_PATTERN, STRING_TAG};

const BLOB_TAG: u8 = 253;

#[derive(Debug, Clone)]
enum Field {
    Imm(i64),
    Ref(usize),
}

#[derive(Debug, Clone)]
enum Node {
    Scanned { tag: u8, fields: Vec<Field> },
    /// Zero-filled opaque block.
    Blob { size: usize },
    Text(Vec<u8>),
}

impl Node {
    fn size(&self) -> usize {
        match self {
            Node::Scanned { fields, .. } => fields.len(),
            Node::Blob { size } => *size,
            Node::Text(bytes) => 1 + bytes.len().div_ceil(8),
        }
    }

    /// Payload of an opaque node as the heap stores it.
    fn opaque_words(&self) -> Vec<u64> {
        match self {
            Node::Blob { size } => vec![0; *size],
            Node::Text(bytes) => {
                let mut words = vec![bytes.len() as u64];
                words.extend(bytes.chunks(8).map(|c| {
                    let mut w = [0u8; 8];
                    w[..c.len()].copy_from_slice(c);
                    u64::from_le_bytes(w)
                }));
                words
            }
            Node::Scanned { .. } => unreachable!(),
        }
    }
}

#[derive(Debug, Clone)]
enum RootSpec {
    Imm(i64),
    Ref(usize),
}

fn generate(seed: u64, blocks: usize) -> (Vec<Node>, Vec<RootSpec>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..blocks)
        .map(|_| {
            let size = rng.random_range(0..=4);
            if rng.random_bool(0.05) {
                Node::Blob { size }
            } else if rng.random_bool(0.05) {
                let len = rng.random_range(0..20);
                Node::Text((0..len).map(|_| rng.random()).collect())
            } else {
                let fields = (0..size)
                    .map(|_| {
                        if rng.random_bool(0.3) {
                            Field::Imm(rng.random_range(-1000..1000))
                        } else {
                            Field::Ref(rng.random_range(0..blocks))
                        }
                    })
                    .collect();
                Node::Scanned { tag: rng.random_range(0..4), fields }
            }
        })
        .collect();
    let roots = (0..rng.random_range(1..=8))
        .map(|_| {
            if rng.random_bool(0.15) {
                RootSpec::Imm(rng.random_range(-50..50))
            } else {
                RootSpec::Ref(rng.random_range(0..blocks))
            }
        })
        .collect();
    (nodes, roots)
}

/// Recursive encoder of the documented serialization format.
fn expected_serialization(nodes: &[Node], roots: &[RootSpec]) -> Vec<u8> {
    fn imm(out: &mut Vec<u8>, n: i64) {
        out.push(b'I');
        out.extend_from_slice(&n.to_le_bytes());
    }
    fn node(nodes: &[Node], i: usize, seen: &mut Vec<Option<u64>>, next: &mut u64, out: &mut Vec<u8>) {
        if let Some(ord) = seen[i] {
            out.push(b'R');
            out.extend_from_slice(&ord.to_le_bytes());
            return;
        }
        seen[i] = Some(*next);
        *next += 1;
        out.push(b'B');
        match &nodes[i] {
            Node::Scanned { tag, fields } => {
                out.push(*tag);
                out.extend_from_slice(&(fields.len() as u64).to_le_bytes());
                for f in fields {
                    match f {
                        Field::Imm(n) => imm(out, *n),
                        Field::Ref(j) => node(nodes, *j, seen, next, out),
                    }
                }
            }
            opaque => {
                let words = opaque.opaque_words();
                out.push(if matches!(opaque, Node::Text(_)) { STRING_TAG } else { BLOB_TAG });
                out.extend_from_slice(&(words.len() as u64).to_le_bytes());
                for w in words {
                    out.extend_from_slice(&w.to_le_bytes());
                }
            }
        }
    }
    let mut seen = vec![None; nodes.len()];
    let mut next = 0;
    let mut out = Vec::new();
    for r in roots {
        match r {
            RootSpec::Imm(n) => imm(&mut out, *n),
            RootSpec::Ref(i) => node(nodes, *i, &mut seen, &mut next, &mut out),
        }
    }
    out
}

/// (reachable blocks, reachable words including headers)
fn reachable(nodes: &[Node], roots: &[RootSpec]) -> (usize, usize) {
    let mut seen = vec![false; nodes.len()];
    let mut work: Vec<usize> = roots
        .iter()
        .filter_map(|r| match r {
            RootSpec::Ref(i) => Some(*i),
            RootSpec::Imm(_) => None,
        })
        .collect();
    let (mut blocks, mut words) = (0, 0);
    while let Some(i) = work.pop() {
        if std::mem::replace(&mut seen[i], true) {
            continue;
        }
        blocks += 1;
        words += 1 + nodes[i].size();
        if let Node::Scanned { fields, .. } = &nodes[i] {
            work.extend(fields.iter().filter_map(|f| match f {
                Field::Ref(j) => Some(*j),
                Field::Imm(_) => None,
            }));
        }
    }
    (blocks, words)
}

fn build(rt: &mut Runtime, nodes: &[Node], roots: &[RootSpec]) -> Vec<rootsim_core::RootSlot> {
    let values: Vec<Value> = nodes
        .iter()
        .map(|n| match n {
            Node::Scanned { tag, fields } => rt.alloc(fields.len(), *tag).unwrap(),
            Node::Blob { size } => rt.alloc(*size, BLOB_TAG).unwrap(),
            Node::Text(bytes) => rt.legacy_copy_string(bytes).unwrap(),
        })
        .collect();
    assert_eq!(rt.collections(), 0, "graph must be built without moving");
    for (v, n) in values.iter().zip(nodes) {
        if let Node::Scanned { fields, .. } = n {
            for (i, f) in fields.iter().enumerate() {
                let x = match f {
                    Field::Imm(k) => Value::encode_long(*k).unwrap(),
                    Field::Ref(j) => values[*j],
                };
                rt.write_field(*v, i, x).unwrap();
            }
        }
    }
    let array = rt.root_array_new(roots.len());
    let slots = rt.root_array_slots(array);
    for (slot, r) in slots.iter().zip(roots) {
        let v = match r {
            RootSpec::Imm(k) => Value::encode_long(*k).unwrap(),
            RootSpec::Ref(i) => values[*i],
        };
        rt.root_set(*slot, v).unwrap();
    }
    slots
}

fn check_graph(seed: u64, blocks: usize) {
    let (nodes, roots) = generate(seed, blocks);
    let mut rt = Runtime::new(8192, false, false).unwrap();
    let slots = build(&mut rt, &nodes, &roots);
    let expected = expected_serialization(&nodes, &roots);
    let (live_blocks, live_words) = reachable(&nodes, &roots);

    assert_eq!(rt.structural_serialize(&slots).unwrap(), expected);
    for cycle in 0..5 {
        let before: Vec<Value> = slots.iter().map(|&s| rt.root_get(s).unwrap()).collect();
        let stats = rt.collect().unwrap();
        assert_eq!(stats.words_live, live_words, "cycle {cycle}");
        assert_eq!(stats.blocks_moved, live_blocks, "cycle {cycle}");
        assert!(rt.heap().inactive_words().iter().all(|&w| w == POISON_PATTERN));
        for (slot, old) in slots.iter().zip(before) {
            let now = rt.root_get(*slot).unwrap();
            if old.is_block() {
                assert_ne!(now, old);
                assert_eq!(rt.validate_value(old), Classification::Stale);
                assert_eq!(rt.validate_value(now), Classification::LiveBlock);
            } else {
                assert_eq!(now, old);
            }
        }
        assert_eq!(rt.structural_serialize(&slots).unwrap(), expected, "cycle {cycle}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn collections_preserve_graph(seed in any::<u64>(), blocks in 1usize..=1000) {
        check_graph(seed, blocks);
    }
}

#[test]
fn large_graphs_with_fixed_seeds() {
    for seed in 0..5 {
        check_graph(seed, 1000);
    }
}

#[test]
fn unreachable_blocks_are_dropped() {
    let mut rt = Runtime::new(256, false, false).unwrap();
    let array = rt.root_array_new(1);
    let slot = rt.root_array_slots(array)[0];
    for _ in 0..10 {
        rt.alloc(3, 0).unwrap();
    }
    let kept = rt.alloc(2, 0).unwrap();
    rt.root_set(slot, kept).unwrap();
    let stats = rt.collect().unwrap();
    assert_eq!(stats.words_live, 3);
    assert_eq!(stats.blocks_moved, 1);
    assert_eq!(rt.heap().alloc_cursor(), 3);
}

#[test]
fn torture_counts_one_collection_per_allocation() {
    let mut rt = Runtime::new(512, true, false).unwrap();
    let array = rt.root_array_new(2);
    let slots = rt.root_array_slots(array);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut allocs = 0;
    for i in 0..200 {
        let v = rt.alloc(rng.random_range(0..5), 0).unwrap();
        allocs += 1;
        rt.root_set(slots[i % 2], v).unwrap();
        assert_eq!(rt.collections(), allocs);
    }
}
