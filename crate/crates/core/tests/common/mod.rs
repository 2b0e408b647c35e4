#![allow(dead_code)]

use std::collections::BTreeSet;

use pnorm_flow::graph::{NetworkGraph, TrafficVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;
pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random spanning tree plus `extra` random chords; always connected.
pub fn random_graph(rng: &mut TestRng, n: usize, extra: usize) -> NetworkGraph {
    let cap = n * (n - 1) / 2;
    let target = (n - 1 + extra).min(cap);
    let mut edges = BTreeSet::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.insert((u, v));
    }
    while edges.len() < target {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            edges.insert((a.min(b), a.max(b)));
        }
    }
    // Shuffle node labels so the tree is not biased towards low indices.
    let mut label: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        label.swap(i, rng.random_range(0..=i));
    }
    let edges = edges
        .into_iter()
        .map(|(a, b)| {
            let (x, y) = (label[a], label[b]);
            (x.min(y), x.max(y))
        })
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    NetworkGraph::new(n, edges).expect("spanning tree keeps the graph connected")
}

pub fn random_traffic(rng: &mut TestRng, n: usize) -> TrafficVector {
    TrafficVector::new((0..n - 1).map(|_| rng.random::<f64>()).collect()).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// All minimum-cardinality separating edge sets, by enumerating every node
/// set that contains all sources and excludes the sink. Any minimal
/// separating edge set is the boundary of such a set.
pub fn brute_force_min_cuts(graph: &NetworkGraph, sources: &[usize]) -> (usize, Vec<Vec<usize>>) {
    let n = graph.node_count();
    let sink = n - 1;
    let free: Vec<usize> = (0..sink).filter(|v| !sources.contains(v)).collect();
    let mut best = usize::MAX;
    let mut sets: BTreeSet<Vec<usize>> = BTreeSet::new();
    for mask in 0u64..(1 << free.len()) {
        let mut inside = vec![false; n];
        for &s in sources {
            inside[s] = true;
        }
        for (k, &v) in free.iter().enumerate() {
            if mask >> k & 1 == 1 {
                inside[v] = true;
            }
        }
        let boundary: Vec<usize> = graph
            .edges()
            .iter()
            .enumerate()
            .filter(|(_, &(r, s))| inside[r] != inside[s])
            .map(|(m, _)| m)
            .collect();
        if boundary.len() < best {
            best = boundary.len();
            sets.clear();
        }
        if boundary.len() == best {
            sets.insert(boundary);
        }
    }
    (best, sets.into_iter().collect())
}

/// True when removing `cut` leaves no path from any source to the sink.
pub fn separates(graph: &NetworkGraph, sources: &[usize], cut: &[usize]) -> bool {
    let n = graph.node_count();
    let mut seen = vec![false; n];
    let mut stack: Vec<usize> = sources.to_vec();
    for &s in sources {
        seen[s] = true;
    }
    while let Some(x) = stack.pop() {
        for &(y, m) in graph.neighbors(x) {
            if !cut.contains(&m) && !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    !seen[n - 1]
}

/// Unit-capacity max flow from all sources to the sink by depth-first
/// augmenting paths on an adjacency matrix of residual capacities.
pub fn max_unit_flow(graph: &NetworkGraph, sources: &[usize]) -> usize {
    let n = graph.node_count() + 1;
    let root = n - 1;
    let sink = graph.node_count() - 1;
    let mut cap = vec![vec![0i64; n]; n];
    for &(r, s) in graph.edges() {
        cap[r][s] += 1;
        cap[s][r] += 1;
    }
    for &s in sources {
        cap[root][s] = i64::MAX / 4;
    }
    fn augment(x: usize, sink: usize, cap: &mut [Vec<i64>], seen: &mut [bool]) -> bool {
        if x == sink {
            return true;
        }
        seen[x] = true;
        for y in 0..cap.len() {
            if cap[x][y] > 0 && !seen[y] && augment(y, sink, cap, seen) {
                cap[x][y] -= 1;
                cap[y][x] += 1;
                return true;
            }
        }
        false
    }
    let mut flow = 0;
    while augment(root, sink, &mut cap, &mut vec![false; n]) {
        flow += 1;
    }
    flow
}
