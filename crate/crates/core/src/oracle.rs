//! Reference solvers that share no code path with the Jacobi solver.
//!
//! * [`oracle_p2`] solves the unit-weight reduced Laplacian directly; for
//!   `p = 2` its potential differences are the optimal loads.
//! * [`oracle_general_p`] writes every feasible flow as `I0 + Z z`, where the
//!   columns of `Z` are fundamental cycles of a spanning tree, and minimizes
//!   the convex cost over `z` with damped Newton steps.
//! * [`brute_force_small`] scans the cycle coordinates on a grid and then
//!   refines by compass search. Only for one or two independent cycles.

use std::fmt;

use crate::error::{GraphError, SolveError};
use crate::graph::{initial_feasible_flow, max_norm, FlowState, NetworkGraph, TrafficVector};
use crate::objective::{cost, cost_change, gradient, PNorm};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleMethod {
    ReducedLaplacian,
    NullspaceDescent,
    ScalarStationarity,
    GridSearch,
}

impl fmt::Display for OracleMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleMethod::ReducedLaplacian => "reduced-laplacian",
            OracleMethod::NullspaceDescent => "nullspace-descent",
            OracleMethod::ScalarStationarity => "scalar-stationarity",
            OracleMethod::GridSearch => "grid-search",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub flows: FlowState,
    pub cost: f64,
    pub method: OracleMethod,
    pub iterations: usize,
    /// Max-norm of the reduced gradient at the returned point.
    pub gradient_norm: f64,
    pub converged: bool,
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` for a (numerically) singular matrix.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for k in col..n {
                    a[row][k] -= factor * a[col][k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Exact minimizer of `sum I_m^2` subject to conservation.
pub fn oracle_p2(graph: &NetworkGraph, traffic: &TrafficVector) -> Result<OracleSolution, SolveError> {
    let size = graph.node_count() - 1;
    if traffic.len() != size {
        return Err(GraphError::DimensionMismatch {
            what: "traffic",
            expected: size,
            found: traffic.len(),
        }
        .into());
    }
    let mut laplacian = vec![vec![0.0; size]; size];
    for &(r, s) in graph.edges() {
        laplacian[r][r] += 1.0;
        if s < size {
            laplacian[s][s] += 1.0;
            laplacian[r][s] -= 1.0;
            laplacian[s][r] -= 1.0;
        }
    }
    let mut u = solve_dense(laplacian, traffic.as_slice().to_vec())
        .expect("reduced Laplacian of a connected graph is nonsingular");
    u.push(0.0);
    let flows = FlowState::new(graph.edges().iter().map(|&(r, s)| u[r] - u[s]).collect());
    Ok(OracleSolution {
        cost: cost(&flows, PNorm::new(2.0).expect("2 > 1")),
        flows,
        method: OracleMethod::ReducedLaplacian,
        iterations: 1,
        gradient_norm: 0.0,
        converged: true,
    })
}

/// Fundamental cycle basis of the breadth-first spanning tree rooted at the
/// sink. Each basis vector is a circulation carrying `+1` on its non-tree
/// edge in that edge's own direction.
#[derive(Clone, Debug, PartialEq)]
pub struct CycleBasis {
    /// Sparse columns: `(edge, coefficient)` with coefficients `+-1`.
    pub cycles: Vec<Vec<(usize, f64)>>,
    pub edge_count: usize,
}

impl CycleBasis {
    pub fn new(graph: &NetworkGraph) -> Self {
        let (order, parent) = graph.bfs_tree();
        let mut depth = vec![0usize; graph.node_count()];
        for &n in &order {
            if let Some((up, _)) = parent[n] {
                depth[n] = depth[up] + 1;
            }
        }
        let mut in_tree = vec![false; graph.edge_count()];
        for link in parent.iter().flatten() {
            in_tree[link.1] = true;
        }
        let mut cycles = Vec::with_capacity(graph.cycle_rank());
        for (m, &(r, s)) in graph.edges().iter().enumerate() {
            if in_tree[m] {
                continue;
            }
            // Traverse r -> s on the chord, then return s -> r through the
            // tree: climb from both ends to the common ancestor.
            let mut cycle = vec![(m, 1.0)];
            let (mut a, mut b) = (s, r);
            let mut down = Vec::new();
            while a != b {
                if depth[a] >= depth[b] {
                    let (up, e) = parent[a].expect("non-root has a parent");
                    cycle.push((e, if a < up { 1.0 } else { -1.0 }));
                    a = up;
                } else {
                    let (up, e) = parent[b].expect("non-root has a parent");
                    // Walked later in the forward direction up -> b.
                    down.push((e, if up < b { 1.0 } else { -1.0 }));
                    b = up;
                }
            }
            cycle.extend(down);
            cycles.push(cycle);
        }
        Self {
            cycles,
            edge_count: graph.edge_count(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.cycles.len()
    }

    /// `base + Z z`.
    pub fn apply(&self, base: &FlowState, z: &[f64]) -> FlowState {
        let mut loads = base.as_slice().to_vec();
        for (cycle, &zc) in self.cycles.iter().zip(z) {
            for &(m, coef) in cycle {
                loads[m] += coef * zc;
            }
        }
        FlowState::new(loads)
    }

    /// `Z' v` for a per-edge vector `v`.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.cycles
            .iter()
            .map(|cycle| cycle.iter().map(|&(m, coef)| coef * v[m]).sum())
            .collect()
    }
}

/// Minimizes the cost over the cycle coordinates.
///
/// Steps are Newton directions on the reduced Hessian `Z' Q Z` with Armijo
/// backtracking (parameter `1e-4`); when the Newton direction is not a
/// descent direction the plain negative gradient is used instead. Stops when
/// the reduced gradient max-norm falls to `tol * max(1, |S|_inf)`.
pub fn oracle_general_p(
    graph: &NetworkGraph,
    traffic: &TrafficVector,
    p: PNorm,
    tol: f64,
) -> Result<OracleSolution, SolveError> {
    const ARMIJO: f64 = 1e-4;
    const MAX_ITERS: usize = 500;
    let base = initial_feasible_flow(graph, traffic)?;
    let basis = CycleBasis::new(graph);
    let dim = basis.dimension();
    let pv = p.value();
    let mut z = vec![0.0; dim];
    let mut flows = base.clone();
    let mut value = cost(&flows, p);
    let mut iterations = 0;
    let mut grad_norm;

    loop {
        let full_grad = gradient(&flows, p);
        let grad = basis.project(&full_grad);
        grad_norm = max_norm(&grad);
        if grad_norm <= tol * max_norm(&full_grad).max(1.0) || iterations >= MAX_ITERS {
            break;
        }
        iterations += 1;

        let floor = 1e-12 * (1.0 + flows.max_norm());
        let curvature: Vec<f64> = flows
            .as_slice()
            .iter()
            .map(|v| pv * (pv - 1.0) * v.abs().max(floor).powf(pv - 2.0))
            .collect();
        let mut hessian = vec![vec![0.0; dim]; dim];
        for (a, ca) in basis.cycles.iter().enumerate() {
            for (b, cb) in basis.cycles.iter().enumerate().skip(a) {
                let mut h = 0.0;
                for &(m, x) in ca {
                    for &(k, y) in cb {
                        if m == k {
                            h += x * y * curvature[m];
                        }
                    }
                }
                hessian[a][b] = h;
                hessian[b][a] = h;
            }
        }
        let neg_grad: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut direction = solve_dense(hessian, neg_grad.clone()).unwrap_or_else(|| neg_grad.clone());
        let mut slope: f64 = direction.iter().zip(&grad).map(|(d, g)| d * g).sum();
        if !(slope < 0.0) || direction.iter().any(|d| !d.is_finite()) {
            direction = neg_grad;
            slope = -grad.iter().map(|g| g * g).sum::<f64>();
        }

        let mut step = 1.0;
        let mut moved = false;
        while step > 1e-20 {
            let dz: Vec<f64> = direction.iter().map(|d| step * d).collect();
            // Edge deltas straight from the cycle coordinates, so heavy-edge
            // terms of different cycles cancel before they touch the loads.
            let delta = basis.apply(&FlowState::zeros(basis.edge_count), &dz);
            let change = cost_change(&flows, delta.as_slice(), 1.0, p);
            if change <= ARMIJO * step * slope {
                moved = change < 0.0;
                z.iter_mut().zip(&dz).for_each(|(a, d)| *a += d);
                flows = flows.axpy(1.0, &delta);
                value = cost(&flows, p);
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }

    let full_grad = gradient(&flows, p);
    Ok(OracleSolution {
        converged: grad_norm <= tol * max_norm(&full_grad).max(1.0),
        cost: value,
        flows,
        method: OracleMethod::NullspaceDescent,
        iterations,
        gradient_norm: grad_norm,
    })
}

/// Exhaustive grid scan over at most two cycle coordinates in
/// `[-|T|_1, |T|_1]`, followed by compass-search refinement of the best
/// grid point.
pub fn brute_force_small(
    graph: &NetworkGraph,
    traffic: &TrafficVector,
    p: PNorm,
    grid: f64,
) -> Result<OracleSolution, SolveError> {
    let basis = CycleBasis::new(graph);
    let dim = basis.dimension();
    if dim > 2 {
        return Err(SolveError::SearchTooLarge(dim));
    }
    if !(grid.is_finite() && grid > 0.0) {
        return Err(SolveError::InvalidOption(format!("grid step must be positive, got {grid}")));
    }
    let base = initial_feasible_flow(graph, traffic)?;
    let eval = |z: &[f64]| cost(&basis.apply(&base, z), p);
    let bound = traffic.total();
    let steps = (2.0 * bound / grid).ceil() as usize;
    let coord = |k: usize| -bound + k as f64 * grid;

    let mut best = vec![0.0; dim];
    let mut best_value = eval(&best);
    let mut evaluations = 1;
    if dim > 0 && bound > 0.0 {
        let mut point = vec![0.0; dim];
        let outer = if dim == 2 { steps + 1 } else { 1 };
        for a in 0..=steps {
            point[0] = coord(a);
            for b in 0..outer {
                if dim == 2 {
                    point[1] = coord(b);
                }
                let v = eval(&point);
                evaluations += 1;
                if v < best_value {
                    best_value = v;
                    best.clone_from(&point);
                }
            }
        }
        let mut h = grid;
        while h > 1e-13 {
            let mut improved = false;
            for axis in 0..dim {
                for delta in [h, -h] {
                    let mut trial = best.clone();
                    trial[axis] += delta;
                    let v = eval(&trial);
                    evaluations += 1;
                    if v < best_value {
                        best_value = v;
                        best = trial;
                        improved = true;
                    }
                }
            }
            if !improved {
                h *= 0.5;
            }
        }
    }
    let flows = basis.apply(&base, &best);
    let grad_norm = max_norm(&basis.project(&gradient(&flows, p)));
    Ok(OracleSolution {
        cost: cost(&flows, p),
        flows,
        method: OracleMethod::GridSearch,
        iterations: evaluations,
        gradient_norm: grad_norm,
        converged: true,
    })
}

/// Load on the direct edge `(0, 2)` of the triangle with unit traffic at
/// node 0: the root of `(x / (1 - x))^(p-1) = 2`.
pub fn triangle_direct_share(p: PNorm) -> f64 {
    let ratio = 2f64.powf(1.0 / (p.value() - 1.0));
    ratio / (1.0 + ratio)
}

/// Closed-form optimum of the unit-traffic triangle.
pub fn triangle_solution(p: PNorm) -> OracleSolution {
    let x = triangle_direct_share(p);
    let flows = FlowState::new(vec![1.0 - x, x, 1.0 - x]);
    OracleSolution {
        cost: cost(&flows, p),
        flows,
        method: OracleMethod::ScalarStationarity,
        iterations: 0,
        gradient_norm: 0.0,
        converged: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_incidence, check_feasibility};

    fn triangle() -> NetworkGraph {
        NetworkGraph::new(3, vec![(0, 1), (0, 2), (1, 2)]).unwrap()
    }

    fn unit(n: usize) -> TrafficVector {
        let mut t = vec![0.0; n - 1];
        t[0] = 1.0;
        TrafficVector::new(t).unwrap()
    }

    fn p(v: f64) -> PNorm {
        PNorm::new(v).unwrap()
    }

    #[test]
    fn dense_elimination_needs_pivoting() {
        let x = solve_dense(vec![vec![0.0, 1.0], vec![1.0, 1.0]], vec![2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
        assert!(solve_dense(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn p2_examples() {
        let tri = oracle_p2(&triangle(), &unit(3)).unwrap();
        for (a, b) in tri.flows.as_slice().iter().zip([1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((tri.cost - 2.0 / 3.0).abs() < 1e-15);

        let edge = NetworkGraph::new(2, vec![(0, 1)]).unwrap();
        let sol = oracle_p2(&edge, &TrafficVector::new(vec![2.5]).unwrap()).unwrap();
        assert_eq!(sol.flows.as_slice(), &[2.5]);

        let diamond = NetworkGraph::new(4, vec![(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        let sol = oracle_p2(&diamond, &unit(4)).unwrap();
        for v in sol.flows.as_slice() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn cycle_basis_is_a_set_of_circulations() {
        let g = NetworkGraph::new(
            6,
            vec![(0, 1), (0, 3), (1, 2), (1, 4), (2, 5), (3, 4), (4, 5), (0, 5), (2, 3)],
        )
        .unwrap();
        let basis = CycleBasis::new(&g);
        assert_eq!(basis.dimension(), g.cycle_rank());
        let c = build_incidence(&g);
        for k in 0..basis.dimension() {
            let mut z = vec![0.0; basis.dimension()];
            z[k] = 1.0;
            let circ = basis.apply(&FlowState::zeros(g.edge_count()), &z);
            assert!(c.apply(circ.as_slice()).iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn general_p_examples() {
        let sol = oracle_general_p(&triangle(), &unit(3), p(3.0), 1e-13).unwrap();
        assert!(sol.converged);
        assert!((sol.flows[1] - 0.585_786_437_626_904_9).abs() < 1e-10);

        let sol = oracle_general_p(&triangle(), &unit(3), p(16.0), 1e-13).unwrap();
        assert!((sol.flows[1] - 0.511_550_397_740_474).abs() < 1e-6, "{}", sol.flows[1]);

        let g = NetworkGraph::new(5, vec![(0, 1), (0, 2), (1, 2), (1, 3), (2, 4), (3, 4), (0, 4)])
            .unwrap();
        let t = TrafficVector::new(vec![0.3, 0.9, 0.1, 0.4]).unwrap();
        let a = oracle_general_p(&g, &t, p(2.0), 1e-13).unwrap();
        let b = oracle_p2(&g, &t).unwrap();
        for (x, y) in a.flows.as_slice().iter().zip(b.flows.as_slice()) {
            assert!((x - y).abs() < 1e-8);
        }
        assert!(check_feasibility(&g, &a.flows, &t, 1e-10).unwrap().feasible);
    }

    #[test]
    fn brute_force_examples() {
        let sol = brute_force_small(&triangle(), &unit(3), p(2.0), 1e-3).unwrap();
        assert!((sol.cost - 2.0 / 3.0).abs() < 1e-5);

        let edge = NetworkGraph::new(2, vec![(0, 1)]).unwrap();
        let t = TrafficVector::new(vec![0.7]).unwrap();
        let sol = brute_force_small(&edge, &t, p(3.0), 0.5).unwrap();
        assert_eq!(sol.flows.as_slice(), &[0.7]);

        let grid = brute_force_small(&triangle(), &unit(3), p(4.0), 1e-3).unwrap();
        let descent = oracle_general_p(&triangle(), &unit(3), p(4.0), 1e-13).unwrap();
        for (a, b) in grid.flows.as_slice().iter().zip(descent.flows.as_slice()) {
            assert!((a - b).abs() < 1e-3);
        }
    }

    #[test]
    fn brute_force_rejects_large_cycle_space() {
        let k4 = NetworkGraph::new(4, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        assert_eq!(
            brute_force_small(&k4, &unit(4), p(2.0), 0.1),
            Err(SolveError::SearchTooLarge(3))
        );
    }

    #[test]
    fn triangle_closed_form() {
        assert!((triangle_direct_share(p(2.0)) - 2.0 / 3.0).abs() < 1e-15);
        assert!((triangle_direct_share(p(3.0)) - 0.585_786_437_626_905).abs() < 1e-12);
        assert!((triangle_direct_share(p(16.0)) - 0.511_550_397_740_474).abs() < 1e-6);
    }
}
