//! The congestion cost `J_p(I) = sum |I_m|^p` and its local quadratic model.
//!
//! Around a feasible load vector `I`, a correction `i` changes the cost by
//! approximately `1/2 i'Qi + S'i` with a diagonal `Q`. Completing the square
//! per edge turns the model into `sum r_m (i_m + I_m/(p-1))^2` up to a
//! constant, with `r_m = Q_m / 2`: a resistor network whose currents are the
//! shifted corrections.

use crate::error::SolveError;
use crate::graph::{max_norm, FlowState, TrafficVector};

/// Relative size of the load floor used by [`default_floor`].
pub const REGULARIZATION: f64 = 1e-6;

/// Exponent of the cost, strictly greater than one.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct PNorm(f64);

impl PNorm {
    pub fn new(p: f64) -> Result<Self, SolveError> {
        if p.is_finite() && p > 1.0 {
            Ok(Self(p))
        } else {
            Err(SolveError::InvalidExponent(p))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn cost(loads: &FlowState, p: PNorm) -> f64 {
    loads.as_slice().iter().map(|v| v.abs().powf(p.0)).sum()
}

/// `cost(I + step * d) - cost(I)`, accumulated edge by edge.
///
/// Each term is evaluated as `|a|^p * expm1(p * ln_1p(step * d / a))` when the
/// load keeps its sign, so a small change on a lightly loaded edge is not
/// lost against the much larger total cost of the heavy edges.
pub fn cost_change(loads: &FlowState, direction: &[f64], step: f64, p: PNorm) -> f64 {
    let p = p.0;
    loads
        .as_slice()
        .iter()
        .zip(direction)
        .map(|(&a, &d)| {
            let delta = step * d;
            let b = a + delta;
            if delta == 0.0 {
                0.0
            } else if a != 0.0 && a.signum() == b.signum() && b != 0.0 {
                a.abs().powf(p) * (p * (delta / a).ln_1p()).exp_m1()
            } else {
                b.abs().powf(p) - a.abs().powf(p)
            }
        })
        .sum()
}

/// `S_m = p sign(I_m) |I_m|^(p-1)`.
pub fn gradient(loads: &FlowState, p: PNorm) -> Vec<f64> {
    let p = p.0;
    loads
        .as_slice()
        .iter()
        .map(|&v| p * sign(v) * v.abs().powf(p - 1.0))
        .collect()
}

/// `Q_m = p (p-1) |I_m|^(p-2)`, unregularized. Infinite at zero load when
/// `p < 2`.
pub fn hessian_diag(loads: &FlowState, p: PNorm) -> Vec<f64> {
    let p = p.0;
    loads
        .as_slice()
        .iter()
        .map(|&v| p * (p - 1.0) * v.abs().powf(p - 2.0))
        .collect()
}

/// Load floor `REGULARIZATION * (1 + max |I_m|)`.
pub fn default_floor(loads: &FlowState) -> f64 {
    REGULARIZATION * (1.0 + loads.max_norm())
}

/// Edge resistances `r_m = 1/2 p (p-1) max(|I_m|, floor)^(p-2)`.
///
/// The floor keeps every resistance positive and finite: without it a
/// zero-load edge has zero resistance for `p > 2` and infinite resistance
/// for `p < 2`.
pub fn edge_weights(loads: &FlowState, p: PNorm, floor: f64) -> Vec<f64> {
    let p = p.0;
    loads
        .as_slice()
        .iter()
        .map(|&v| 0.5 * p * (p - 1.0) * v.abs().max(floor).powf(p - 2.0))
        .collect()
}

/// Node right-hand side `T_n / (p-1)` of the resistor-network subproblem.
pub fn subproblem_rhs(traffic: &TrafficVector, p: PNorm) -> Vec<f64> {
    let scale = 1.0 / (p.0 - 1.0);
    traffic.as_slice().iter().map(|t| t * scale).collect()
}

/// Model change `1/2 sum Q_m i_m^2 + sum S_m i_m`, without the constant
/// `J_p(I)`.
pub fn model_cost(correction: &[f64], gradient: &[f64], hessian: &[f64]) -> f64 {
    assert_eq!(correction.len(), gradient.len(), "model_cost: gradient length");
    assert_eq!(correction.len(), hessian.len(), "model_cost: hessian length");
    correction
        .iter()
        .zip(gradient)
        .zip(hessian)
        .map(|((i, s), q)| 0.5 * q * i * i + s * i)
        .sum()
}

/// Local quadratic model of the cost around a load vector.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticModel {
    pub gradient: Vec<f64>,
    /// Regularized curvature; always exactly `2 * weights`.
    pub hessian: Vec<f64>,
    pub weights: Vec<f64>,
    /// Shift `S_m / (2 r_m)` between a correction and its network current.
    /// Equal to `I_m / (p-1)` wherever the floor is inactive.
    pub offsets: Vec<f64>,
}

impl QuadraticModel {
    pub fn at(loads: &FlowState, p: PNorm, floor: f64) -> Self {
        let gradient = gradient(loads, p);
        let weights = edge_weights(loads, p, floor);
        let hessian = weights.iter().map(|r| 2.0 * r).collect();
        let offsets = gradient
            .iter()
            .zip(&weights)
            .map(|(s, r)| s / (2.0 * r))
            .collect();
        Self {
            gradient,
            hessian,
            weights,
            offsets,
        }
    }

    /// Model change for a correction, see [`model_cost`].
    pub fn evaluate(&self, correction: &[f64]) -> f64 {
        model_cost(correction, &self.gradient, &self.hessian)
    }

    /// Spread of resistances, `max r / min r`.
    pub fn weight_ratio(&self) -> f64 {
        let hi = max_norm(&self.weights);
        let lo = self.weights.iter().cloned().fold(f64::INFINITY, f64::min);
        hi / lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: f64) -> PNorm {
        PNorm::new(v).unwrap()
    }

    fn flows(v: &[f64]) -> FlowState {
        FlowState::new(v.to_vec())
    }

    const THIRDS: [f64; 3] = [1.0 / 3.0, 2.0 / 3.0, 1.0 / 3.0];

    #[test]
    fn exponent_must_exceed_one() {
        assert!(PNorm::new(1.0).is_err());
        assert!(PNorm::new(0.5).is_err());
        assert!(PNorm::new(f64::NAN).is_err());
        assert!(PNorm::new(f64::INFINITY).is_err());
        assert!(PNorm::new(1.0001).is_ok());
    }

    #[test]
    fn cost_examples() {
        for q in [1.5, 2.0, 3.0, 7.0] {
            assert_eq!(cost(&flows(&[0.0, 1.0, 0.0]), p(q)), 1.0);
        }
        assert!((cost(&flows(&THIRDS), p(2.0)) - 2.0 / 3.0).abs() < 1e-15);
        assert!((cost(&flows(&THIRDS), p(3.0)) - 10.0 / 27.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_examples() {
        assert_eq!(gradient(&flows(&[0.0, 1.0, 0.0]), p(2.0)), vec![0.0, 2.0, 0.0]);
        let g = gradient(&flows(&THIRDS), p(2.0));
        for (a, b) in g.iter().zip([2.0 / 3.0, 4.0 / 3.0, 2.0 / 3.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((gradient(&flows(&[-0.5]), p(3.0))[0] + 0.75).abs() < 1e-15);
    }

    #[test]
    fn hessian_examples() {
        assert_eq!(hessian_diag(&flows(&[-3.0, 0.2, 7.0]), p(2.0)), vec![2.0; 3]);
        assert!((hessian_diag(&flows(&[0.5]), p(3.0))[0] - 3.0).abs() < 1e-15);
        assert!((hessian_diag(&flows(&[2.0]), p(4.0))[0] - 48.0).abs() < 1e-12);
    }

    #[test]
    fn weight_examples() {
        assert!((edge_weights(&flows(&[0.5]), p(3.0), 1e-6)[0] - 1.5).abs() < 1e-15);
        assert_eq!(edge_weights(&flows(&[0.0, 4.0, -9.0]), p(2.0), 0.3), vec![1.0; 3]);
        let clamped = edge_weights(&flows(&[0.0]), p(3.0), 1e-6)[0];
        assert!((clamped - 3e-6).abs() < 1e-20);
        let below_two = edge_weights(&flows(&[0.0]), p(1.5), 1e-6)[0];
        assert!(below_two.is_finite() && below_two > 0.0);
    }

    #[test]
    fn rhs_examples() {
        let t = |v: &[f64]| TrafficVector::new(v.to_vec()).unwrap();
        assert_eq!(subproblem_rhs(&t(&[1.0, 0.0]), p(2.0)), vec![1.0, 0.0]);
        assert_eq!(subproblem_rhs(&t(&[1.0, 0.0]), p(3.0)), vec![0.5, 0.0]);
        assert_eq!(subproblem_rhs(&t(&[2.0, 4.0]), p(5.0)), vec![0.5, 1.0]);
    }

    #[test]
    fn model_cost_examples() {
        assert_eq!(model_cost(&[0.0; 3], &[1.0, 2.0, 3.0], &[1.0; 3]), 0.0);
        let v = model_cost(&[1.0 / 3.0, -1.0 / 3.0, 1.0 / 3.0], &[0.0, 2.0, 0.0], &[2.0; 3]);
        assert!((v + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(model_cost(&[0.25, 0.0], &[0.0, 0.0], &[6.0, 1.0]), 0.5 * 6.0 * 0.0625);
    }

    #[test]
    fn cost_change_matches_direct_difference() {
        let loads = flows(&[0.5, -1.25, 0.0, 2.0]);
        let dir = [0.1, 2.0, -0.3, -4.0];
        for q in [1.5, 2.0, 3.0, 8.0] {
            for step in [1.0, 0.25, 1e-3] {
                let direct = cost(&loads.axpy(step, &FlowState::new(dir.to_vec())), p(q)) - cost(&loads, p(q));
                let edgewise = cost_change(&loads, &dir, step, p(q));
                assert!((direct - edgewise).abs() <= 1e-12 * (1.0 + direct.abs()), "{q} {step}");
            }
        }
    }

    #[test]
    fn cost_change_resolves_light_edges_under_heavy_ones() {
        // Heavy edge unchanged; the light edge drops from 0.3 to 0.2. The
        // total cost is ~1e5 so a direct difference loses the change.
        let loads = flows(&[2.0, 0.3]);
        let change = cost_change(&loads, &[0.0, -0.1], 1.0, p(16.0));
        let exact = 0.2f64.powi(16) - 0.3f64.powi(16);
        assert!((change - exact).abs() < 1e-12 * exact.abs());
        assert!(change < 0.0);
    }

    #[test]
    fn default_floor_scales_with_largest_load() {
        assert_eq!(default_floor(&flows(&[0.0, -3.0])), 4e-6);
    }

    #[test]
    fn model_offsets_match_shift_when_unclamped() {
        let loads = flows(&[0.4, -1.3, 2.0]);
        for q in [1.5, 2.0, 3.0, 8.0] {
            let model = QuadraticModel::at(&loads, p(q), 1e-6);
            for (off, v) in model.offsets.iter().zip(loads.as_slice()) {
                assert!((off - v / (q - 1.0)).abs() < 1e-12 * (1.0 + v.abs()));
            }
            for (h, r) in model.hessian.iter().zip(&model.weights) {
                assert_eq!(*h, 2.0 * r);
            }
        }
    }

    #[test]
    fn sign_flip_symmetry() {
        let a = flows(&[0.3, -1.7, 2.2]);
        let b = flows(&[-0.3, 1.7, -2.2]);
        for q in [1.5, 3.0] {
            assert_eq!(cost(&a, p(q)), cost(&b, p(q)));
            let ga = gradient(&a, p(q));
            let gb = gradient(&b, p(q));
            assert!(ga.iter().zip(&gb).all(|(x, y)| *x == -*y));
        }
    }
}
