//! Network model: graph topology, traffic sources, edge loads, the
//! node-edge incidence matrix and minimum cut-set diagnostics.
//!
//! Nodes are indexed `0..N` inside the library and the destination is always
//! the last node, `N - 1`. Every edge is stored as `(r, s)` with `r < s`; a
//! positive load on that edge means traffic moving from `r` to `s`.
//! File formats and the command line use 1-based node numbers; the
//! conversion happens in [`crate::io`].

use std::collections::{HashSet, VecDeque};
use std::fmt;

use crate::error::GraphError;

/// Undirected connected network with canonically oriented edges.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkGraph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    /// Per node: `(neighbor, edge_index)`, sorted by neighbor.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl NetworkGraph {
    /// Builds a graph from 0-based edge pairs `(r, s)` with `r < s`.
    ///
    /// Rejects self-loops, reversed or duplicate pairs, out-of-range nodes
    /// and disconnected topologies.
    pub fn new(node_count: usize, edges: Vec<(usize, usize)>) -> Result<Self, GraphError> {
        if node_count < 2 {
            return Err(GraphError::TooFewNodes(node_count));
        }
        let mut seen = HashSet::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); node_count];
        for (m, &(r, s)) in edges.iter().enumerate() {
            for node in [r, s] {
                if node >= node_count {
                    return Err(GraphError::NodeOutOfRange {
                        edge: m,
                        node,
                        node_count,
                    });
                }
            }
            if r == s {
                return Err(GraphError::SelfLoop { edge: m, node: r });
            }
            if r > s {
                return Err(GraphError::Misoriented { edge: m, r, s });
            }
            if !seen.insert((r, s)) {
                return Err(GraphError::DuplicateEdge { edge: m, r, s });
            }
            adjacency[r].push((s, m));
            adjacency[s].push((r, m));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let graph = Self {
            node_count,
            edges,
            adjacency,
        };
        if let Some(node) = graph.first_unreachable() {
            return Err(GraphError::Disconnected { node });
        }
        Ok(graph)
    }

    /// Number of nodes `N`.
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Number of edges `M`.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// The destination node; always the highest index.
    pub fn sink(&self) -> usize {
        self.node_count - 1
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, m: usize) -> (usize, usize) {
        self.edges[m]
    }

    /// Neighbors of `node` with the index of the connecting edge.
    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    /// Dimension of the cycle space, `M - N + 1`.
    pub fn cycle_rank(&self) -> usize {
        self.edges.len() + 1 - self.node_count
    }

    /// Breadth-first order from the sink, with each visited node's parent
    /// and the edge leading to it. Neighbors are visited in index order.
    pub(crate) fn bfs_tree(&self) -> (Vec<usize>, Vec<Option<(usize, usize)>>) {
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.node_count];
        let mut visited = vec![false; self.node_count];
        let mut order = Vec::with_capacity(self.node_count);
        let mut queue = VecDeque::new();
        visited[self.sink()] = true;
        queue.push_back(self.sink());
        while let Some(x) = queue.pop_front() {
            order.push(x);
            for &(y, m) in &self.adjacency[x] {
                if !visited[y] {
                    visited[y] = true;
                    parent[y] = Some((x, m));
                    queue.push_back(y);
                }
            }
        }
        (order, parent)
    }

    fn first_unreachable(&self) -> Option<usize> {
        let (order, _) = self.bfs_tree();
        if order.len() == self.node_count {
            return None;
        }
        let mut reached = vec![false; self.node_count];
        for n in order {
            reached[n] = true;
        }
        reached.iter().position(|&r| !r)
    }

    fn check_nodes(&self, len: usize) -> Result<(), GraphError> {
        if len != self.node_count - 1 {
            return Err(GraphError::DimensionMismatch {
                what: "traffic",
                expected: self.node_count - 1,
                found: len,
            });
        }
        Ok(())
    }

    fn check_edges(&self, len: usize) -> Result<(), GraphError> {
        if len != self.edges.len() {
            return Err(GraphError::DimensionMismatch {
                what: "edge loads",
                expected: self.edges.len(),
                found: len,
            });
        }
        Ok(())
    }
}

/// Traffic injected at nodes `0..N-1`; the sink absorbs the total.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficVector(Vec<f64>);

impl TrafficVector {
    pub fn new(values: Vec<f64>) -> Result<Self, GraphError> {
        for (node, &value) in values.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(GraphError::InvalidTraffic { node, value });
            }
        }
        Ok(Self(values))
    }

    /// All-zero traffic for a graph with `node_count` nodes.
    pub fn zeros(node_count: usize) -> Self {
        Self(vec![0.0; node_count.saturating_sub(1)])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Nodes that generate a positive amount of traffic.
    pub fn sources(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &t)| t > 0.0)
            .map(|(n, _)| n)
    }
}

/// Signed per-edge loads. Also used for corrections, which are circulations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowState(Vec<f64>);

impl FlowState {
    pub fn new(loads: Vec<f64>) -> Self {
        Self(loads)
    }

    pub fn zeros(edge_count: usize) -> Self {
        Self(vec![0.0; edge_count])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_norm(&self) -> f64 {
        max_norm(&self.0)
    }

    /// `self + step * direction`.
    pub fn axpy(&self, step: f64, direction: &FlowState) -> FlowState {
        FlowState(
            self.0
                .iter()
                .zip(&direction.0)
                .map(|(a, d)| a + step * d)
                .collect(),
        )
    }
}

impl std::ops::Index<usize> for FlowState {
    type Output = f64;
    fn index(&self, m: usize) -> &f64 {
        &self.0[m]
    }
}

pub(crate) fn max_norm(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// The `(N-1) x M` conservation matrix with the sink row removed.
///
/// Column `m` of edge `(r, s)` holds `+1` in row `r` (the edge leaves `r`
/// toward a higher index) and `-1` in row `s` unless `s` is the sink.
#[derive(Clone, Debug, PartialEq)]
pub struct IncidenceMatrix {
    rows: usize,
    columns: Vec<(usize, Option<usize>)>,
}

impl IncidenceMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        let (plus, minus) = self.columns[col];
        if plus == row {
            1
        } else if minus == Some(row) {
            -1
        } else {
            0
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<i8>> {
        (0..self.rows)
            .map(|i| (0..self.cols()).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// `C * x` for a per-edge vector `x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols(), "incidence: vector length");
        let mut out = vec![0.0; self.rows];
        for (&(plus, minus), &v) in self.columns.iter().zip(x) {
            out[plus] += v;
            if let Some(minus) = minus {
                out[minus] -= v;
            }
        }
        out
    }
}

pub fn build_incidence(graph: &NetworkGraph) -> IncidenceMatrix {
    let sink = graph.sink();
    IncidenceMatrix {
        rows: graph.node_count() - 1,
        columns: graph
            .edges()
            .iter()
            .map(|&(r, s)| (r, (s != sink).then_some(s)))
            .collect(),
    }
}

/// Conservation residual `C * I - T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Feasibility {
    pub residual: Vec<f64>,
    pub max_residual: f64,
    pub feasible: bool,
}

pub fn check_feasibility(
    graph: &NetworkGraph,
    flows: &FlowState,
    traffic: &TrafficVector,
    tol: f64,
) -> Result<Feasibility, GraphError> {
    graph.check_edges(flows.len())?;
    graph.check_nodes(traffic.len())?;
    let mut residual = build_incidence(graph).apply(flows.as_slice());
    for (res, t) in residual.iter_mut().zip(traffic.as_slice()) {
        *res -= t;
    }
    let max_residual = max_norm(&residual);
    Ok(Feasibility {
        residual,
        max_residual,
        feasible: max_residual <= tol,
    })
}

/// Routes every node's traffic to the sink along the breadth-first tree
/// rooted at the sink. Non-tree edges carry nothing.
pub fn initial_feasible_flow(
    graph: &NetworkGraph,
    traffic: &TrafficVector,
) -> Result<FlowState, GraphError> {
    graph.check_nodes(traffic.len())?;
    Ok(FlowState(tree_route(graph, traffic.as_slice())))
}

/// Routes signed node injections (one per non-sink node) to the sink along
/// the breadth-first spanning tree.
pub(crate) fn tree_route(graph: &NetworkGraph, injections: &[f64]) -> Vec<f64> {
    let (order, parent) = graph.bfs_tree();
    let mut subtree = injections.to_vec();
    subtree.push(0.0);
    let mut loads = vec![0.0; graph.edge_count()];
    for &child in order.iter().rev() {
        if let Some((up, m)) = parent[child] {
            let carried = subtree[child];
            loads[m] += if child < up { carried } else { -carried };
            subtree[up] += carried;
        }
    }
    loads
}

/// Edge set separating the traffic sources from the sink.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CutSet {
    pub edge_indices: Vec<usize>,
}

impl CutSet {
    pub fn cardinality(&self) -> usize {
        self.edge_indices.len()
    }
}

impl fmt::Display for CutSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self
            .edge_indices
            .iter()
            .map(|m| format!("e{}", m + 1))
            .collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

struct Arc {
    to: usize,
    cap: usize,
}

/// Minimum-cardinality edge cut between every positive-traffic node and the
/// sink, from a unit-capacity max flow (shortest augmenting paths).
///
/// Each undirected edge becomes a pair of opposed unit arcs; a super-source
/// feeds every source node with unbounded capacity. The cut is read off the
/// set of nodes still reachable from the super-source in the final residual
/// network, so `cardinality()` equals the max-flow value.
pub fn min_cut(graph: &NetworkGraph, traffic: &TrafficVector) -> Result<CutSet, GraphError> {
    graph.check_nodes(traffic.len())?;
    let sources: Vec<usize> = traffic.sources().collect();
    if sources.is_empty() {
        return Err(GraphError::NoTraffic);
    }
    let n = graph.node_count();
    let super_source = n;
    let sink = graph.sink();
    let unbounded = graph.edge_count() + 1;

    let mut arcs: Vec<Arc> = Vec::new();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    // Arcs are stored in pairs; `a ^ 1` is the reverse of arc `a`.
    let mut add_pair = |arcs: &mut Vec<Arc>, a: usize, b: usize, cap_ab: usize, cap_ba: usize| {
        out[a].push(arcs.len());
        arcs.push(Arc { to: b, cap: cap_ab });
        out[b].push(arcs.len());
        arcs.push(Arc { to: a, cap: cap_ba });
    };
    for &(r, s) in graph.edges() {
        add_pair(&mut arcs, r, s, 1, 1);
    }
    for &src in &sources {
        add_pair(&mut arcs, super_source, src, unbounded, 0);
    }

    let mut via = vec![usize::MAX; n + 1];
    loop {
        via.iter_mut().for_each(|v| *v = usize::MAX);
        let mut queue = VecDeque::from([super_source]);
        let mut reached_sink = false;
        'bfs: while let Some(x) = queue.pop_front() {
            for &a in &out[x] {
                let y = arcs[a].to;
                if arcs[a].cap > 0 && y != super_source && via[y] == usize::MAX {
                    via[y] = a;
                    if y == sink {
                        reached_sink = true;
                        break 'bfs;
                    }
                    queue.push_back(y);
                }
            }
        }
        if !reached_sink {
            break;
        }
        // Every path crosses at least one unit arc, so the bottleneck is 1.
        let mut y = sink;
        while y != super_source {
            let a = via[y];
            arcs[a].cap -= 1;
            arcs[a ^ 1].cap += 1;
            y = arcs[a ^ 1].to;
        }
    }

    // After the final failed search `via` marks the residual-reachable set.
    let reachable = |v: usize| v == super_source || via[v] != usize::MAX;
    let edge_indices = graph
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, &(r, s))| reachable(r) != reachable(s))
        .map(|(m, _)| m)
        .collect();
    Ok(CutSet { edge_indices })
}

/// Spread of absolute loads across a cut.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CutBalance {
    pub max: f64,
    pub min: f64,
    /// Population standard deviation over mean; zero for an even split.
    pub cv: f64,
}

pub fn cut_balance_metric(flows: &FlowState, cut: &CutSet) -> Result<CutBalance, GraphError> {
    if cut.edge_indices.is_empty() {
        return Err(GraphError::EmptyCut);
    }
    let loads: Vec<f64> = cut
        .edge_indices
        .iter()
        .map(|&m| {
            flows
                .as_slice()
                .get(m)
                .map(|v| v.abs())
                .ok_or(GraphError::DimensionMismatch {
                    what: "edge loads",
                    expected: m + 1,
                    found: flows.len(),
                })
        })
        .collect::<Result<_, _>>()?;
    let k = loads.len() as f64;
    let mean = loads.iter().sum::<f64>() / k;
    let var = loads.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
    let cv = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
    Ok(CutBalance {
        max: loads.iter().cloned().fold(f64::MIN, f64::max),
        min: loads.iter().cloned().fold(f64::MAX, f64::min),
        cv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn triangle() -> NetworkGraph {
        NetworkGraph::new(3, vec![(0, 1), (0, 2), (1, 2)]).unwrap()
    }

    fn traffic(v: &[f64]) -> TrafficVector {
        TrafficVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn incidence_examples() {
        assert_eq!(
            build_incidence(&triangle()).to_dense(),
            vec![vec![1, 1, 0], vec![-1, 0, 1]]
        );
        let edge = NetworkGraph::new(2, vec![(0, 1)]).unwrap();
        assert_eq!(build_incidence(&edge).to_dense(), vec![vec![1]]);
        let path = NetworkGraph::new(3, vec![(0, 1), (1, 2)]).unwrap();
        assert_eq!(
            build_incidence(&path).to_dense(),
            vec![vec![1, 0], vec![-1, 1]]
        );
    }

    #[test]
    fn feasibility_examples() {
        let g = triangle();
        let t = traffic(&[1.0, 0.0]);
        let direct = check_feasibility(&g, &FlowState::new(vec![0.0, 1.0, 0.0]), &t, 1e-12).unwrap();
        assert!(direct.feasible);
        assert_eq!(direct.max_residual, 0.0);

        let split = FlowState::new(vec![1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0]);
        let f = check_feasibility(&g, &split, &t, 1e-12).unwrap();
        assert!(f.feasible && f.max_residual < 1e-15);

        let bad = check_feasibility(&g, &FlowState::new(vec![1.0, 1.0, 0.0]), &t, 1e-9).unwrap();
        assert!(!bad.feasible);
        assert_eq!(bad.max_residual, 1.0);
        assert_eq!(bad.residual, vec![1.0, -1.0]);
    }

    #[test]
    fn feasibility_rejects_wrong_lengths() {
        let g = triangle();
        let err = check_feasibility(&g, &FlowState::zeros(2), &traffic(&[1.0, 0.0]), 1e-9);
        assert!(matches!(err, Err(GraphError::DimensionMismatch { .. })));
        let err = check_feasibility(&g, &FlowState::zeros(3), &traffic(&[1.0]), 1e-9);
        assert!(matches!(err, Err(GraphError::DimensionMismatch { .. })));
    }

    #[test]
    fn initial_flow_examples() {
        let edge = NetworkGraph::new(2, vec![(0, 1)]).unwrap();
        assert_eq!(
            initial_feasible_flow(&edge, &traffic(&[1.0])).unwrap().as_slice(),
            &[1.0]
        );
        assert_eq!(
            initial_feasible_flow(&triangle(), &traffic(&[1.0, 0.0]))
                .unwrap()
                .as_slice(),
            &[0.0, 1.0, 0.0]
        );
        let path = NetworkGraph::new(3, vec![(0, 1), (1, 2)]).unwrap();
        assert_eq!(
            initial_feasible_flow(&path, &traffic(&[1.0, 1.0]))
                .unwrap()
                .as_slice(),
            &[1.0, 2.0]
        );
    }

    #[test]
    fn initial_flow_handles_edges_pointing_away_from_sink() {
        // Sink is node 3; node 1 is only reachable through node 2, and the
        // tree edge (1, 2) points from the parent toward the child.
        let g = NetworkGraph::new(4, vec![(0, 3), (1, 2), (1, 3), (0, 2)]).unwrap();
        let t = traffic(&[0.5, 0.25, 2.0]);
        let flow = initial_feasible_flow(&g, &t).unwrap();
        assert!(check_feasibility(&g, &flow, &t, 1e-12).unwrap().feasible);
    }

    #[test]
    fn construction_rejects_bad_graphs() {
        assert!(matches!(
            NetworkGraph::new(1, vec![]),
            Err(GraphError::TooFewNodes(1))
        ));
        assert!(matches!(
            NetworkGraph::new(3, vec![(0, 0), (0, 2)]),
            Err(GraphError::SelfLoop { .. })
        ));
        assert!(matches!(
            NetworkGraph::new(3, vec![(2, 0), (0, 1)]),
            Err(GraphError::Misoriented { .. })
        ));
        assert!(matches!(
            NetworkGraph::new(3, vec![(0, 1), (0, 1), (1, 2)]),
            Err(GraphError::DuplicateEdge { .. })
        ));
        assert!(matches!(
            NetworkGraph::new(3, vec![(0, 5)]),
            Err(GraphError::NodeOutOfRange { .. })
        ));
        assert_eq!(
            NetworkGraph::new(4, vec![(0, 1), (2, 3)]),
            Err(GraphError::Disconnected { node: 0 })
        );
    }

    #[test]
    fn traffic_must_be_nonnegative() {
        assert!(TrafficVector::new(vec![1.0, -0.5]).is_err());
        assert!(TrafficVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn min_cut_examples() {
        let edge = NetworkGraph::new(2, vec![(0, 1)]).unwrap();
        let cut = min_cut(&edge, &traffic(&[1.0])).unwrap();
        assert_eq!(cut.edge_indices, vec![0]);

        assert_eq!(min_cut(&triangle(), &traffic(&[1.0, 0.0])).unwrap().cardinality(), 2);

        let diamond = NetworkGraph::new(4, vec![(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        let cut = min_cut(&diamond, &traffic(&[1.0, 0.0, 0.0])).unwrap();
        assert_eq!(cut.cardinality(), 2);
        assert!(cut.edge_indices == vec![0, 1] || cut.edge_indices == vec![2, 3]);
    }

    #[test]
    fn min_cut_needs_a_source() {
        assert_eq!(
            min_cut(&triangle(), &traffic(&[0.0, 0.0])),
            Err(GraphError::NoTraffic)
        );
    }

    #[test]
    fn cut_balance_examples() {
        let cut = CutSet {
            edge_indices: vec![0, 1],
        };
        let even = cut_balance_metric(&FlowState::new(vec![0.5, 0.5]), &cut).unwrap();
        assert_eq!(even.cv, 0.0);

        let uneven = cut_balance_metric(&FlowState::new(vec![2.0 / 3.0, -1.0 / 3.0]), &cut).unwrap();
        assert!((uneven.cv - 1.0 / 3.0).abs() < 1e-12);
        assert!((uneven.max - 2.0 / 3.0).abs() < 1e-15);

        let skew = cut_balance_metric(&FlowState::new(vec![1.0, 0.0]), &cut).unwrap();
        assert_eq!((skew.max, skew.min, skew.cv), (1.0, 0.0, 1.0));

        let empty = CutSet {
            edge_indices: vec![],
        };
        assert!(cut_balance_metric(&FlowState::zeros(1), &empty).is_err());
    }

    #[test]
    fn incidence_columns_have_one_plus_and_at_most_one_minus() {
        let g = NetworkGraph::new(5, vec![(0, 1), (0, 4), (1, 2), (2, 3), (3, 4), (1, 4)]).unwrap();
        let c = build_incidence(&g).to_dense();
        for (j, &(_, s)) in g.edges().iter().enumerate() {
            let plus = c.iter().filter(|row| row[j] == 1).count();
            let minus = c.iter().filter(|row| row[j] == -1).count();
            assert_eq!(plus, 1);
            assert_eq!(minus, usize::from(s != g.sink()));
        }
    }
}
