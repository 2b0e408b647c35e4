//! Neighbor-local SQP solver.
//!
//! Each outer step replaces the cost by its quadratic model around the
//! current loads. The model is a resistor network: edge `m` has resistance
//! `r_m`, every node `n < N-1` injects `b_n`, and the sink is grounded. Node
//! potentials are found by synchronous Jacobi sweeps, in which a node only
//! reads the previous-sweep potentials of its neighbors:
//!
//! ```text
//! u_n <- (b_n + sum_k u_k / r_(n,k)) / sum_k 1 / r_(n,k)
//! ```
//!
//! The correction is the network current minus the completed-square shift,
//! `i_m = (u_r - u_s) / r_m - I_m / (p-1)`, and a backtracking line search
//! keeps every accepted step cost-decreasing.

use crate::error::SolveError;
use crate::graph::{
    build_incidence, check_feasibility, initial_feasible_flow, tree_route, FlowState,
    NetworkGraph, TrafficVector,
};
use crate::objective::{cost, cost_change, PNorm, QuadraticModel, REGULARIZATION};

/// Exponent above which resistances are rescaled by their geometric mean
/// before the inner solve.
pub const NORMALIZE_ABOVE_P: f64 = 64.0;

/// Default cap on `max r / min r` in a subproblem. Jacobi converges at a
/// rate set by this ratio, so the cap trades Newton accuracy of the model
/// for a bounded inner solve.
pub const DEFAULT_WEIGHT_RATIO: f64 = 1e4;

/// Node potentials; the sink entry is pinned at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialVector(Vec<f64>);

impl PotentialVector {
    pub fn zeros(node_count: usize) -> Self {
        Self(vec![0.0; node_count])
    }

    /// Wraps explicit values; the last entry is forced to zero.
    pub fn new(mut values: Vec<f64>) -> Self {
        if let Some(last) = values.last_mut() {
            *last = 0.0;
        }
        Self(values)
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

    fn rescale(&mut self, factor: f64) {
        self.0.iter_mut().for_each(|u| *u *= factor);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    pub p: PNorm,
    /// Inner stop: largest node conservation residual, in traffic units.
    pub inner_tol: f64,
    /// Sweep budget per subproblem; `None` means `10 * N^2`, times
    /// `ceil(sqrt(max_weight_ratio))` when that ratio is finite.
    pub inner_max_sweeps: Option<usize>,
    /// Outer stop on the max-norm of the full correction.
    pub outer_tol: f64,
    pub outer_max_iters: usize,
    pub feas_tol: f64,
    /// Load floor relative to `1 + max |I_m|` inside the resistances.
    pub regularization: f64,
    pub line_search_shrink: f64,
    pub line_search_min_step: f64,
    /// Start each subproblem from the previous step's potentials.
    pub warm_start: bool,
    /// Largest allowed `max r / min r`; enforced by raising the load floor.
    pub max_weight_ratio: f64,
}

impl SolverOptions {
    pub fn new(p: PNorm) -> Self {
        Self {
            p,
            inner_tol: 1e-10,
            inner_max_sweeps: None,
            outer_tol: 1e-8,
            outer_max_iters: 200,
            feas_tol: 1e-9,
            regularization: REGULARIZATION,
            line_search_shrink: 0.5,
            line_search_min_step: 2f64.powi(-20),
            warm_start: true,
            max_weight_ratio: DEFAULT_WEIGHT_RATIO,
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let positive = [
            ("inner_tol", self.inner_tol),
            ("outer_tol", self.outer_tol),
            ("feas_tol", self.feas_tol),
            ("regularization", self.regularization),
            ("line_search_min_step", self.line_search_min_step),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(SolveError::InvalidOption(format!(
                    "{name} must be positive, got {value}"
                )));
            }
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            return Err(SolveError::InvalidOption(format!(
                "line_search_shrink must lie in (0, 1), got {}",
                self.line_search_shrink
            )));
        }
        if self.line_search_min_step > 1.0 {
            return Err(SolveError::InvalidOption(
                "line_search_min_step must not exceed 1".into(),
            ));
        }
        if !(self.max_weight_ratio >= 1.0) {
            return Err(SolveError::InvalidOption(format!(
                "max_weight_ratio must be at least 1, got {}",
                self.max_weight_ratio
            )));
        }
        if self.inner_max_sweeps == Some(0) || self.outer_max_iters == 0 {
            return Err(SolveError::InvalidOption("iteration budgets must be positive".into()));
        }
        Ok(())
    }

    pub fn sweep_budget(&self, graph: &NetworkGraph) -> usize {
        self.inner_max_sweeps.unwrap_or_else(|| {
            let n = graph.node_count();
            let factor = if self.max_weight_ratio.is_finite() {
                self.max_weight_ratio.sqrt().ceil().max(1.0) as usize
            } else {
                1
            };
            10 * n * n * factor
        })
    }
}

/// Per-node view of the resistor network: neighbors with conductances.
struct Network<'a> {
    graph: &'a NetworkGraph,
    conductance: Vec<f64>,
    total: Vec<f64>,
}

impl<'a> Network<'a> {
    fn new(graph: &'a NetworkGraph, weights: &[f64]) -> Self {
        assert_eq!(weights.len(), graph.edge_count(), "one resistance per edge");
        let conductance: Vec<f64> = weights.iter().map(|r| 1.0 / r).collect();
        let total = (0..graph.node_count())
            .map(|n| graph.neighbors(n).iter().map(|&(_, m)| conductance[m]).sum())
            .collect();
        Self {
            graph,
            conductance,
            total,
        }
    }

    /// One synchronous sweep from `u` into `next`. Returns the largest
    /// conservation residual of `u`, which is `total_n * |next_n - u_n|`.
    fn sweep(&self, rhs: &[f64], u: &[f64], next: &mut [f64]) -> f64 {
        let sink = self.graph.sink();
        let mut residual = 0.0_f64;
        for n in 0..sink {
            let pull: f64 = self
                .graph
                .neighbors(n)
                .iter()
                .map(|&(k, m)| u[k] * self.conductance[m])
                .sum();
            next[n] = (rhs[n] + pull) / self.total[n];
            residual = residual.max(self.total[n] * (next[n] - u[n]).abs());
        }
        next[sink] = 0.0;
        residual
    }
}

fn check_subproblem(graph: &NetworkGraph, weights: &[f64], rhs: &[f64]) -> Result<(), SolveError> {
    use crate::error::GraphError;
    if weights.len() != graph.edge_count() {
        return Err(GraphError::DimensionMismatch {
            what: "resistances",
            expected: graph.edge_count(),
            found: weights.len(),
        }
        .into());
    }
    if rhs.len() != graph.node_count() - 1 {
        return Err(GraphError::DimensionMismatch {
            what: "node right-hand side",
            expected: graph.node_count() - 1,
            found: rhs.len(),
        }
        .into());
    }
    if let Some(r) = weights.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(SolveError::InvalidOption(format!(
            "resistances must be positive and finite, got {r}"
        )));
    }
    Ok(())
}

/// One synchronous Jacobi sweep: every node `n < N-1` recomputes its
/// potential from its neighbors' values in `u`; the sink stays at zero.
pub fn jacobi_sweep(
    graph: &NetworkGraph,
    weights: &[f64],
    rhs: &[f64],
    u: &PotentialVector,
) -> Result<PotentialVector, SolveError> {
    check_subproblem(graph, weights, rhs)?;
    let mut next = vec![0.0; graph.node_count()];
    Network::new(graph, weights).sweep(rhs, u.as_slice(), &mut next);
    Ok(PotentialVector(next))
}

/// Result of an inner potential solve.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerSolve {
    pub potentials: PotentialVector,
    pub sweeps: usize,
    pub converged: bool,
    /// Largest node conservation residual measured on the last sweep.
    pub residual: f64,
}

/// Repeats Jacobi sweeps from `start` (zero if `None`) until the node
/// conservation residual drops to `tol` or `max_sweeps` is spent.
///
/// A sweep from `u` measures the residual of `u` itself, so on success the
/// returned potentials are the iterate whose residual was found to be within
/// `tol`; the final sweep is only used as the measurement. On budget
/// exhaustion the latest iterate is returned together with the residual of
/// the one before it.
pub fn solve_potentials(
    graph: &NetworkGraph,
    weights: &[f64],
    rhs: &[f64],
    start: Option<&PotentialVector>,
    tol: f64,
    max_sweeps: usize,
) -> Result<InnerSolve, SolveError> {
    check_subproblem(graph, weights, rhs)?;
    let network = Network::new(graph, weights);
    let mut u = match start {
        Some(s) if s.len() == graph.node_count() => PotentialVector::new(s.0.clone()).0,
        _ => vec![0.0; graph.node_count()],
    };
    let mut next = vec![0.0; graph.node_count()];
    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        residual = network.sweep(rhs, &u, &mut next);
        sweeps += 1;
        if residual <= tol {
            break;
        }
        std::mem::swap(&mut u, &mut next);
    }
    Ok(InnerSolve {
        potentials: PotentialVector(u),
        sweeps,
        converged: residual <= tol,
        residual,
    })
}

/// Largest violation of the weighted-Laplacian node equations
/// `sum_k (u_n - u_k) / r_(n,k) = b_n`, in traffic units.
pub fn node_equation_residual(
    graph: &NetworkGraph,
    weights: &[f64],
    rhs: &[f64],
    u: &PotentialVector,
) -> f64 {
    let u = u.as_slice();
    (0..graph.sink())
        .map(|n| {
            let outflow: f64 = graph
                .neighbors(n)
                .iter()
                .map(|&(k, m)| (u[n] - u[k]) / weights[m])
                .sum();
            (outflow - rhs[n]).abs()
        })
        .fold(0.0, f64::max)
}

/// Network currents `(u_r - u_s) / r_m` on every edge.
pub fn edge_currents(graph: &NetworkGraph, u: &PotentialVector, weights: &[f64]) -> Vec<f64> {
    let u = u.as_slice();
    graph
        .edges()
        .iter()
        .zip(weights)
        .map(|(&(r, s), w)| (u[r] - u[s]) / w)
        .collect()
}

/// `i_m = (u_r - u_s) / r_m - I_m / (p-1)`.
pub fn recover_correction(
    graph: &NetworkGraph,
    u: &PotentialVector,
    weights: &[f64],
    loads: &FlowState,
    p: PNorm,
) -> FlowState {
    let shift = 1.0 / (p.value() - 1.0);
    FlowState::new(
        edge_currents(graph, u, weights)
            .into_iter()
            .zip(loads.as_slice())
            .map(|(current, load)| current - load * shift)
            .collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepStatus {
    /// A cost-decreasing step was taken.
    Accepted,
    /// The correction is within `outer_tol`; nothing left to do.
    Stationary,
    /// No step decreased the cost, and the model gain of the correction is
    /// smaller than what the remaining conservation error is worth: the
    /// iterate is as good as the inner tolerance allows.
    NoiseFloor,
    /// No step length down to the minimum decreased the cost.
    Stalled,
}

/// Diagnostics of one outer step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub status: StepStatus,
    pub correction_norm: f64,
    pub step_length: f64,
    pub inner_sweeps: usize,
    pub inner_converged: bool,
    pub inner_residual: f64,
    pub cost_before: f64,
    pub cost_after: f64,
    pub weight_ratio: f64,
    /// Model decrease `sum r_m i_m^2` promised by the full correction.
    pub predicted_gain: f64,
    /// `sum_n |2 u_n| (|(C I - T)_n| + |e_n|)`, the cost value of the current
    /// conservation error plus the inner residual `e`.
    pub feasibility_noise: f64,
}

/// Mutable state carried between outer steps.
#[derive(Clone, Debug)]
pub struct StepState {
    pub potentials: PotentialVector,
}

impl StepState {
    pub fn new(graph: &NetworkGraph) -> Self {
        Self {
            potentials: PotentialVector::zeros(graph.node_count()),
        }
    }
}

/// Load floor used in the resistances: the absolute regularization, raised
/// where needed so that `max r / min r <= max_weight_ratio`.
pub fn load_floor(loads: &FlowState, p: PNorm, opts: &SolverOptions) -> f64 {
    let peak = loads.max_norm();
    let base = opts.regularization * (1.0 + peak);
    let exponent = (p.value() - 2.0).abs();
    if exponent == 0.0 || !opts.max_weight_ratio.is_finite() {
        return base;
    }
    base.max(peak * opts.max_weight_ratio.powf(-1.0 / exponent))
}

fn geometric_mean(values: &[f64]) -> f64 {
    (values.iter().map(|v| v.ln()).sum::<f64>() / values.len() as f64).exp()
}

/// Builds the subproblem at `loads`, solves it by Jacobi sweeps and
/// line-searches along the recovered correction.
///
/// The node right-hand side is `T_n - (C I)_n + (C s)_n` with `s` the model
/// offsets. For a feasible `I` with no clamped edge this is exactly
/// `T_n / (p-1)`; otherwise it also removes any conservation error carried
/// in by `loads`. Any imbalance the inner solve leaves is routed to the sink
/// along the spanning tree before the line search.
pub fn sqp_step(
    graph: &NetworkGraph,
    loads: &FlowState,
    traffic: &TrafficVector,
    opts: &SolverOptions,
    state: &mut StepState,
) -> Result<(FlowState, StepDiagnostics), SolveError> {
    let p = opts.p;
    let floor = load_floor(loads, p, opts);
    let mut model = QuadraticModel::at(loads, p, floor);
    let weight_ratio = model.weight_ratio();

    let incidence = build_incidence(graph);
    let flow_balance = incidence.apply(loads.as_slice());
    let shift_balance = incidence.apply(&model.offsets);
    let rhs: Vec<f64> = traffic
        .as_slice()
        .iter()
        .zip(flow_balance.iter().zip(&shift_balance))
        .map(|(t, (c, s))| t - c + s)
        .collect();

    let mut scale = 1.0;
    if p.value() > NORMALIZE_ABOVE_P {
        scale = geometric_mean(&model.weights);
        model.weights.iter_mut().for_each(|r| *r /= scale);
    }
    if !opts.warm_start {
        state.potentials = PotentialVector::zeros(graph.node_count());
    }
    let inner = solve_potentials(
        graph,
        &model.weights,
        &rhs,
        Some(&state.potentials),
        opts.inner_tol,
        opts.sweep_budget(graph),
    )?;
    let currents = edge_currents(graph, &inner.potentials, &model.weights);
    let current_balance = incidence.apply(&currents);
    // Whatever the inner solve left unbalanced is sent to the sink along the
    // spanning tree, so accepted iterates stay conserving.
    let leftover: Vec<f64> = rhs.iter().zip(&current_balance).map(|(b, c)| b - c).collect();
    let repair = tree_route(graph, &leftover);
    let correction = FlowState::new(
        currents
            .iter()
            .zip(&model.offsets)
            .zip(&repair)
            .map(|((c, s), t)| c - s + t)
            .collect(),
    );
    state.potentials = inner.potentials;
    if scale != 1.0 {
        // Keep warm starts in the same units as the next step's weights.
        state.potentials.rescale(scale);
    }

    let cost_before = cost(loads, p);
    let correction_norm = correction.max_norm();
    let predicted_gain: f64 = correction
        .as_slice()
        .iter()
        .zip(&model.weights)
        .map(|(i, r)| r * scale * i * i)
        .sum();
    let feasibility_noise: f64 = (0..graph.sink())
        .map(|n| {
            let multiplier = 2.0 * state.potentials.as_slice()[n];
            let violation = flow_balance[n] - traffic.as_slice()[n];
            let inner_error = current_balance[n] - rhs[n];
            multiplier.abs() * (violation.abs() + inner_error.abs())
        })
        .sum();
    let mut diag = StepDiagnostics {
        status: StepStatus::Stalled,
        correction_norm,
        step_length: 0.0,
        inner_sweeps: inner.sweeps,
        inner_converged: inner.converged,
        inner_residual: inner.residual,
        cost_before,
        cost_after: cost_before,
        weight_ratio,
        predicted_gain,
        feasibility_noise,
    };

    let mut step = 1.0;
    while step >= opts.line_search_min_step {
        // The edge-wise change resolves decreases far below the rounding of
        // the summed cost; the summed cost is also required not to rise so
        // that the recorded trajectory is monotone as well.
        if cost_change(loads, correction.as_slice(), step, p) < 0.0 {
            let trial = loads.axpy(step, &correction);
            let after = cost(&trial, p);
            if after <= cost_before {
                diag.status = StepStatus::Accepted;
                diag.step_length = step;
                diag.cost_after = after;
                return Ok((trial, diag));
            }
        }
        step *= opts.line_search_shrink;
    }
    if correction_norm <= opts.outer_tol {
        diag.status = StepStatus::Stationary;
    } else if predicted_gain <= feasibility_noise {
        diag.status = StepStatus::NoiseFloor;
    }
    Ok((loads.clone(), diag))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Correction max-norm fell to `outer_tol`.
    Converged,
    /// Further progress is below the resolution set by the inner tolerance.
    NoiseFloor,
    /// No decreasing step could be found.
    Stalled,
    /// `outer_max_iters` reached.
    IterationLimit,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::NoiseFloor => "noise_floor",
            Termination::Stalled => "stalled",
            Termination::IterationLimit => "iteration_limit",
        }
    }
}

/// One row of the outer trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// Cost after the step.
    pub cost: f64,
    pub feasibility_residual: f64,
    pub correction_norm: f64,
    pub inner_sweeps: usize,
    pub step_length: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub flows: FlowState,
    pub initial_cost: f64,
    pub cost: f64,
    pub trace: Vec<IterationRecord>,
    /// True only for [`Termination::Converged`].
    pub converged: bool,
    pub termination: Termination,
    pub feasibility_residual: f64,
    /// Largest inner conservation residual over all steps; bounds how far
    /// an inexact inner solve can have pushed the flows off conservation.
    pub inner_slack: f64,
    /// Subproblems that ran out of sweeps before reaching `inner_tol`.
    pub inner_failures: usize,
}

impl SolveReport {
    pub fn total_sweeps(&self) -> usize {
        self.trace.iter().map(|r| r.inner_sweeps).sum()
    }
}

/// Full solve: breadth-first initial routing, then SQP steps until the
/// correction is below `outer_tol`, a step stalls, or the budget runs out.
pub fn solve(
    graph: &NetworkGraph,
    traffic: &TrafficVector,
    opts: &SolverOptions,
) -> Result<SolveReport, SolveError> {
    opts.validate()?;
    let start = initial_feasible_flow(graph, traffic)?;
    solve_from(graph, traffic, start, opts)
}

/// As [`solve`] but from a caller-supplied feasible flow.
pub fn solve_from(
    graph: &NetworkGraph,
    traffic: &TrafficVector,
    start: FlowState,
    opts: &SolverOptions,
) -> Result<SolveReport, SolveError> {
    opts.validate()?;
    let initial = check_feasibility(graph, &start, traffic, opts.feas_tol)?;
    if !initial.feasible {
        return Err(SolveError::Infeasible(initial.max_residual));
    }
    let initial_cost = cost(&start, opts.p);
    let mut loads = start;
    let mut state = StepState::new(graph);
    let mut trace = Vec::new();
    let mut termination = Termination::IterationLimit;
    let mut inner_slack = 0.0_f64;
    let mut inner_failures = 0;

    for iter in 1..=opts.outer_max_iters {
        let (next, diag) = sqp_step(graph, &loads, traffic, opts, &mut state)?;
        loads = next;
        inner_slack = inner_slack.max(diag.inner_residual);
        inner_failures += usize::from(!diag.inner_converged);
        let feasibility = check_feasibility(graph, &loads, traffic, f64::INFINITY)?;
        trace.push(IterationRecord {
            iter,
            cost: diag.cost_after,
            feasibility_residual: feasibility.max_residual,
            correction_norm: diag.correction_norm,
            inner_sweeps: diag.inner_sweeps,
            step_length: diag.step_length,
        });
        match diag.status {
            StepStatus::Stationary => {
                termination = Termination::Converged;
                break;
            }
            StepStatus::NoiseFloor => {
                termination = Termination::NoiseFloor;
                break;
            }
            StepStatus::Stalled => {
                termination = Termination::Stalled;
                break;
            }
            StepStatus::Accepted if diag.correction_norm <= opts.outer_tol => {
                termination = Termination::Converged;
                break;
            }
            StepStatus::Accepted => {}
        }
    }

    let feasibility = check_feasibility(graph, &loads, traffic, f64::INFINITY)?;
    Ok(SolveReport {
        cost: cost(&loads, opts.p),
        initial_cost,
        flows: loads,
        converged: termination == Termination::Converged,
        termination,
        feasibility_residual: feasibility.max_residual,
        trace,
        inner_slack,
        inner_failures,
    })
}
