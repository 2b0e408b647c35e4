//! Congestion-minimizing single-commodity routing.
//!
//! Every node of a connected network injects traffic `T_n` destined for the
//! last node. Among all edge loads `I` that conserve traffic (`C I = T`),
//! the crate finds the one minimizing `sum |I_m|^p`. Large `p` pushes the
//! solution towards spreading load evenly across the minimum cut-set.
//!
//! The solver ([`solver::solve`]) repeats sequential quadratic programming
//! steps. Each step is a resistor-network problem solved by synchronous
//! Jacobi sweeps in which a node only reads its neighbors' potentials.
//! [`oracle`] holds independent reference solvers used to validate it.
//!
//! ```
//! use pnorm_flow::graph::{NetworkGraph, TrafficVector};
//! use pnorm_flow::objective::PNorm;
//! use pnorm_flow::solver::{solve, SolverOptions};
//!
//! // Triangle; one unit of traffic from node 0 to the destination 2.
//! let graph = NetworkGraph::new(3, vec![(0, 1), (0, 2), (1, 2)]).unwrap();
//! let traffic = TrafficVector::new(vec![1.0, 0.0]).unwrap();
//! let report = solve(&graph, &traffic, &SolverOptions::new(PNorm::new(2.0).unwrap())).unwrap();
//! assert!(report.converged);
//! assert!((report.flows[1] - 2.0 / 3.0).abs() < 1e-9);
//! ```

pub mod cli;
pub mod error;
pub mod graph;
pub mod io;
pub mod objective;
pub mod oracle;
pub mod solver;

// Guide chapters, compiled and run as doctests so the book stays in sync.
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod guide_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/networks.md")]
mod guide_networks {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/objective.md")]
mod guide_objective {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/solver.md")]
mod guide_solver {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/oracles.md")]
mod guide_oracles {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cuts.md")]
mod guide_cuts {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod guide_cli {}
