//! Model primitives of the partially observed linear system: deterministic
//! coefficients, the Gaussian prior, the compact control set, effort costs,
//! and the pointwise Hamiltonian evaluations with their best-response map.
//!
//! Sign convention: the linear Hamiltonian below carries `+c` and is
//! minimised in the control; the general Hamiltonian carries `-c` and is
//! maximised. Both describe the same first-order condition and the library
//! canonicalises on the minimisation form.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Path, TimeGrid};

/// Deterministic coefficient of time, evaluable anywhere on `[0, T]`.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    /// `intercept + slope * t`.
    Linear {
        intercept: f64,
        slope: f64,
    },
    /// Values at the uniform nodes of `[0, t_end]`, linearly interpolated.
    Table {
        t_end: f64,
        values: Vec<f64>,
    },
    /// Arbitrary user function.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Coefficient {
    pub fn constant(value: f64) -> Self {
        Coefficient::Constant(value)
    }

    pub fn from_fn(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient::Custom(Arc::new(f))
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Linear { intercept, slope } => intercept + slope * t,
            Coefficient::Table { t_end, values } => {
                let n = values.len() - 1;
                if *t_end == 0.0 || n == 0 {
                    return values[0];
                }
                let u = t / (t_end / n as f64);
                if u <= 0.0 {
                    return values[0];
                }
                if u >= n as f64 {
                    return values[n];
                }
                let i = u.floor() as usize;
                let theta = u - i as f64;
                values[i] + theta * (values[i + 1] - values[i])
            }
            Coefficient::Custom(f) => f(t),
        }
    }

    /// Samples the coefficient at every grid node.
    pub fn sample(&self, grid: &TimeGrid) -> Path {
        Path::sample(*grid, |t| self.eval(t))
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::Linear { intercept, slope } => {
                write!(f, "Linear({intercept} + {slope} t)")
            }
            Coefficient::Table { values, .. } => write!(f, "Table({} nodes)", values.len()),
            Coefficient::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl From<f64> for Coefficient {
    fn from(value: f64) -> Self {
        Coefficient::Constant(value)
    }
}

/// Coefficient triple `(η, h, σ)` plus the Gaussian prior `(m0, V0)` of the
/// unobserved state.
///
/// The observation noise is normalised to one; a model with observation
/// noise `s` must absorb it into `h` and `σ`. The variance equation adds
/// `σ(t)` literally (not `σ²(t)`): pass the squared diffusion when the
/// underlying model is written in terms of a volatility.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub eta: Coefficient,
    pub h: Coefficient,
    pub sigma: Coefficient,
    pub prior_mean: f64,
    pub prior_var: f64,
}

impl LinearModel {
    pub fn new(
        eta: impl Into<Coefficient>,
        h: impl Into<Coefficient>,
        sigma: impl Into<Coefficient>,
        prior_mean: f64,
        prior_var: f64,
    ) -> Result<Self> {
        if !prior_mean.is_finite() {
            return Err(Error::InvalidInput(format!(
                "prior mean must be finite, got {prior_mean}"
            )));
        }
        if !prior_var.is_finite() || prior_var < 0.0 {
            return Err(Error::InvalidInput(format!(
                "prior variance must be finite and >= 0, got {prior_var}"
            )));
        }
        Ok(Self {
            eta: eta.into(),
            h: h.into(),
            sigma: sigma.into(),
            prior_mean,
            prior_var,
        })
    }
}

/// Compact control interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlSet {
    pub lo: f64,
    pub hi: f64,
}

impl ControlSet {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::InvalidInput(format!(
                "control set needs finite lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub fn clamp(&self, b: f64) -> f64 {
        b.clamp(self.lo, self.hi)
    }

    pub fn contains(&self, b: f64) -> bool {
        b >= self.lo && b <= self.hi
    }

    pub fn check(&self, b: f64) -> Result<()> {
        if self.contains(b) {
            Ok(())
        } else {
            Err(Error::ControlOutOfSet {
                value: b,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }
}

/// Effort cost `c(t, b)`: strictly convex, increasing and twice
/// differentiable in `b`, with an explicit marginal-cost inverse.
pub trait CostFunction: Send + Sync {
    fn cost(&self, t: f64, b: f64) -> f64;
    /// `∂_b c(t, b)`.
    fn marginal(&self, t: f64, b: f64) -> f64;
    /// `∂²_bb c(t, b)`; must be strictly positive.
    fn curvature(&self, t: f64, b: f64) -> f64;
    /// `(∂_b c(t, ·))^{-1}(y)`.
    fn marginal_inverse(&self, t: f64, y: f64) -> f64;

    /// Infimum of the curvature over the control set, taken by endpoint and
    /// grid scan. Exact for costs with control-independent curvature.
    fn min_curvature(&self, t: f64, controls: &ControlSet) -> f64 {
        const SCAN: usize = 512;
        let mut min = f64::INFINITY;
        for i in 0..=SCAN {
            let b = controls.lo + (controls.hi - controls.lo) * i as f64 / SCAN as f64;
            min = min.min(self.curvature(t, b));
        }
        min
    }
}

/// Quadratic cost `c(t, b) = κ b² / 2` with `κ > 0`.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticCost {
    kappa: f64,
}

impl QuadraticCost {
    pub fn new(kappa: f64) -> Result<Self> {
        if !kappa.is_finite() || kappa <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "quadratic cost needs kappa > 0, got {kappa}"
            )));
        }
        Ok(Self { kappa })
    }

    pub fn unit() -> Self {
        Self { kappa: 1.0 }
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

impl CostFunction for QuadraticCost {
    fn cost(&self, _t: f64, b: f64) -> f64 {
        0.5 * self.kappa * b * b
    }

    fn marginal(&self, _t: f64, b: f64) -> f64 {
        self.kappa * b
    }

    fn curvature(&self, _t: f64, _b: f64) -> f64 {
        self.kappa
    }

    fn marginal_inverse(&self, _t: f64, y: f64) -> f64 {
        y / self.kappa
    }

    fn min_curvature(&self, _t: f64, _controls: &ControlSet) -> f64 {
        self.kappa
    }
}

/// CARA (exponential-utility) risk aversion `λ > 0`.
#[derive(Debug, Clone, Copy)]
pub struct CaraParams {
    pub risk_aversion: f64,
}

impl CaraParams {
    pub fn new(risk_aversion: f64) -> Result<Self> {
        if !risk_aversion.is_finite() || risk_aversion <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "risk aversion must be > 0, got {risk_aversion}"
            )));
        }
        Ok(Self { risk_aversion })
    }
}

/// Coefficient callables `(t, x, a)` of the general controlled system: the
/// observation drift `b`, the state drift `eta`, and the state volatility
/// `sigma`.
pub struct GeneralCoefficients<'a> {
    pub obs_drift: &'a dyn Fn(f64, f64, f64) -> f64,
    pub state_drift: &'a dyn Fn(f64, f64, f64) -> f64,
    pub state_vol: &'a dyn Fn(f64, f64, f64) -> f64,
}

/// General scalar Hamiltonian
/// `p (η(x,a) + σ(x,a) b(x',a')) + q σ(x,a) + z b(x,a) − c(t,a)`,
/// written in the maximisation convention.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_general(
    t: f64,
    x: f64,
    x_prime: f64,
    a: f64,
    a_prime: f64,
    p: f64,
    q: f64,
    z: f64,
    coeffs: &GeneralCoefficients<'_>,
    cost: &dyn CostFunction,
    horizon: f64,
    controls: &ControlSet,
) -> Result<f64> {
    if t < 0.0 || t > horizon {
        return Err(Error::InvalidInput(format!(
            "time {t} outside [0, {horizon}]"
        )));
    }
    controls.check(a)?;
    controls.check(a_prime)?;
    let eta = (coeffs.state_drift)(t, x, a);
    let sigma = (coeffs.state_vol)(t, x, a);
    let b_cross = (coeffs.obs_drift)(t, x_prime, a_prime);
    let b_own = (coeffs.obs_drift)(t, x, a);
    Ok(p * (eta + sigma * b_cross) + q * sigma + z * b_own - cost.cost(t, a))
}

/// Linear-system Hamiltonian
/// `(η(t) x − h(t) V (h(t) x + b)) p − (h(t) x + b) z + c(t, b)`,
/// minimised in `b`.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_linear(
    t: f64,
    x: f64,
    b: f64,
    p: f64,
    q: f64,
    z: f64,
    model: &LinearModel,
    v_t: f64,
    cost: &dyn CostFunction,
    controls: &ControlSet,
) -> Result<f64> {
    controls.check(b)?;
    let _ = q; // the linear Hamiltonian has no q-term: the state volatility hV is uncontrolled
    let eta = model.eta.eval(t);
    let h = model.h.eval(t);
    let signal = h * x + b;
    Ok((eta * x - h * v_t * signal) * p - signal * z + cost.cost(t, b))
}

/// Exponential-utility Hamiltonian with control pair `(a, b)`:
/// the linear Hamiltonian plus the state-control term `p a` and the
/// risk-aversion coupling `λ x q z`.
#[allow(clippy::too_many_arguments)]
pub fn hamiltonian_cara(
    t: f64,
    x: f64,
    a: f64,
    b: f64,
    p: f64,
    q: f64,
    z: f64,
    model: &LinearModel,
    v_t: f64,
    cost: &dyn CostFunction,
    cara: &CaraParams,
    controls: &ControlSet,
) -> Result<f64> {
    controls.check(a)?;
    controls.check(b)?;
    let eta = model.eta.eval(t);
    let h = model.h.eval(t);
    let signal = h * x + b;
    Ok((eta * x + a - h * v_t * signal) * p - signal * z
        + cost.cost(t, b)
        + cara.risk_aversion * x * q * z)
}

/// Unique minimiser over the control set of
/// `b ↦ −(h(t) V p + z) b + c(t, b)`: the interior first-order point
/// `(∂_b c)^{-1}(z + h(t) V p)` clamped to `[lo, hi]`. Clamping is the
/// defined corner-solution behaviour (the objective is strictly convex).
pub fn best_response(
    t: f64,
    z: f64,
    p: f64,
    model: &LinearModel,
    v_t: f64,
    cost: &dyn CostFunction,
    controls: &ControlSet,
) -> f64 {
    let target = z + model.h.eval(t) * v_t * p;
    controls.clamp(cost.marginal_inverse(t, target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit_model() -> LinearModel {
        LinearModel::new(0.0, 1.0, 0.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn general_hamiltonian_vanishes_on_zero_inputs() {
        let coeffs = GeneralCoefficients {
            obs_drift: &|_, _, _| 0.0,
            state_drift: &|_, _, _| 0.0,
            state_vol: &|_, _, _| 0.0,
        };
        let cost = QuadraticCost::unit();
        let controls = ControlSet::new(-1.0, 1.0).unwrap();
        let h = hamiltonian_general(
            0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, &coeffs, &cost, 1.0, &controls,
        )
        .unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn general_hamiltonian_pure_state_drift_term() {
        // η(x, a) = x, everything else zero: H = p x = 6.
        let coeffs = GeneralCoefficients {
            obs_drift: &|_, _, _| 0.0,
            state_drift: &|_, x, _| x,
            state_vol: &|_, _, _| 0.0,
        };
        struct ZeroCost;
        impl CostFunction for ZeroCost {
            fn cost(&self, _: f64, _: f64) -> f64 {
                0.0
            }
            fn marginal(&self, _: f64, _: f64) -> f64 {
                0.0
            }
            fn curvature(&self, _: f64, _: f64) -> f64 {
                1.0
            }
            fn marginal_inverse(&self, _: f64, y: f64) -> f64 {
                y
            }
        }
        let controls = ControlSet::new(-1.0, 1.0).unwrap();
        let h = hamiltonian_general(
            0.0, 2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, &coeffs, &ZeroCost, 1.0, &controls,
        )
        .unwrap();
        assert_eq!(h, 6.0);
    }

    #[test]
    fn general_hamiltonian_matches_term_by_term_oracle() {
        // Independent re-evaluation of the four terms on pseudo-random inputs.
        let coeffs = GeneralCoefficients {
            obs_drift: &|t, x, a| 0.3 * t + 0.7 * x - 0.2 * a,
            state_drift: &|t, x, a| -0.4 * x + t * a,
            state_vol: &|t, x, _| 1.1 + 0.5 * t * x,
        };
        let cost = QuadraticCost::new(0.8).unwrap();
        let controls = ControlSet::new(-2.0, 2.0).unwrap();
        let cases = [
            (0.3, 1.2, -0.5, 0.4, -1.1, 0.9, -0.3, 0.7),
            (0.9, -0.8, 2.1, -1.7, 0.2, -1.3, 2.4, -0.6),
            (0.0, 0.1, 0.2, 1.9, 1.5, 0.0, 1.0, 3.0),
        ];
        for (t, x, xp, a, ap, p, q, z) in cases {
            let got = hamiltonian_general(t, x, xp, a, ap, p, q, z, &coeffs, &cost, 1.0, &controls)
                .unwrap();
            let eta = -0.4 * x + t * a;
            let sigma = 1.1 + 0.5 * t * x;
            let term1 = p * (eta + sigma * (0.3 * t + 0.7 * xp - 0.2 * ap));
            let term2 = q * sigma;
            let term3 = z * (0.3 * t + 0.7 * x - 0.2 * a);
            let term4 = -0.8 * a * a / 2.0;
            assert_abs_diff_eq!(got, term1 + term2 + term3 + term4, epsilon = 1e-14);
        }
    }

    #[test]
    fn general_hamiltonian_rejects_domain_violations() {
        let coeffs = GeneralCoefficients {
            obs_drift: &|_, _, _| 0.0,
            state_drift: &|_, _, _| 0.0,
            state_vol: &|_, _, _| 0.0,
        };
        let cost = QuadraticCost::unit();
        let controls = ControlSet::new(0.0, 1.0).unwrap();
        assert!(hamiltonian_general(
            1.5, 0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, &coeffs, &cost, 1.0, &controls
        )
        .is_err());
        assert!(hamiltonian_general(
            0.5, 0.0, 0.0, 2.0, 0.5, 0.0, 0.0, 0.0, &coeffs, &cost, 1.0, &controls
        )
        .is_err());
    }

    #[test]
    fn linear_hamiltonian_vanishes_when_signal_and_state_vanish() {
        let model = LinearModel::new(0.7, 0.0, 0.0, 0.0, 1.0).unwrap();
        let cost = QuadraticCost::unit();
        let controls = ControlSet::new(-1.0, 1.0).unwrap();
        let h = hamiltonian_linear(0.2, 0.0, 0.0, 3.0, -2.0, 5.0, &model, 0.4, &cost, &controls)
            .unwrap();
        assert_eq!(h, 0.0);
    }

    #[test]
    fn linear_hamiltonian_pure_drift() {
        let model = LinearModel::new(1.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        let cost = QuadraticCost::unit();
        let controls = ControlSet::new(-1.0, 1.0).unwrap();
        let h = hamiltonian_linear(0.0, 2.0, 0.0, 3.0, 0.0, 0.0, &model, 0.0, &cost, &controls)
            .unwrap();
        assert_eq!(h, 6.0);
    }

    #[test]
    fn linear_hamiltonian_hand_evaluation() {
        // (0 − 1·1·(1+1))·1 − (1+1)·1 + 0.5 = −3.5
        let model = unit_model();
        let cost = QuadraticCost::unit();
        let controls = ControlSet::new(-2.0, 2.0).unwrap();
        let h = hamiltonian_linear(0.5, 1.0, 1.0, 1.0, 0.0, 1.0, &model, 1.0, &cost, &controls)
            .unwrap();
        assert_abs_diff_eq!(h, -3.5, epsilon = 1e-14);
    }

    #[test]
    fn linear_hamiltonian_rejects_control_outside_set() {
        let model = unit_model();
        let cost = QuadraticCost::unit();
        let controls = ControlSet::new(0.0, 1.0).unwrap();
        assert!(matches!(
            hamiltonian_linear(0.5, 0.0, 1.5, 0.0, 0.0, 0.0, &model, 1.0, &cost, &controls),
            Err(Error::ControlOutOfSet { .. })
        ));
    }

    #[test]
    fn cara_term_isolated() {
        // Everything zero except λ x q z = 2 · 1 · 3 · 0.5 = 3.
        let model = LinearModel::new(0.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        let cost = QuadraticCost::unit();
        let cara = CaraParams::new(2.0).unwrap();
        let controls = ControlSet::new(-1.0, 1.0).unwrap();
        let h = hamiltonian_cara(
            0.1, 1.0, 0.0, 0.0, 0.0, 3.0, 0.5, &model, 0.0, &cost, &cara, &controls,
        )
        .unwrap();
        assert_abs_diff_eq!(h, 3.0, epsilon = 1e-15);
    }

    #[test]
    fn cara_reduces_to_linear_plus_pa_when_risk_neutral() {
        let model = LinearModel::new(0.4, 0.9, 0.2, 0.3, 1.0).unwrap();
        let cost = QuadraticCost::new(1.3).unwrap();
        let controls = ControlSet::new(-3.0, 3.0).unwrap();
        // λ → 0 limit checked at tiny λ times the identity with λ dropped.
        let cara_zero = CaraParams { risk_aversion: 0.0 };
        let cases = [
            (0.2, 1.1, 0.4, -0.6, 0.8, -1.2, 0.5, 0.7),
            (0.9, -0.3, -1.0, 2.0, -0.4, 0.6, -2.0, 1.4),
        ];
        for (t, x, a, b, p, q, z, v) in cases {
            let lhs =
                hamiltonian_cara(t, x, a, b, p, q, z, &model, v, &cost, &cara_zero, &controls)
                    .unwrap();
            let rhs =
                hamiltonian_linear(t, x, b, p, q, z, &model, v, &cost, &controls).unwrap() + p * a;
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-14);
        }
    }

    #[test]
    fn cara_matches_term_by_term_oracle() {
        let model = LinearModel::new(0.4, 0.9, 0.2, 0.3, 1.0).unwrap();
        let cost = QuadraticCost::new(1.3).unwrap();
        let cara = CaraParams::new(0.7).unwrap();
        let controls = ControlSet::new(-3.0, 3.0).unwrap();
        let (t, x, a, b, p, q, z, v) = (0.6, -1.2, 0.9, 1.4, -0.8, 1.1, 0.3, 0.5);
        let got =
            hamiltonian_cara(t, x, a, b, p, q, z, &model, v, &cost, &cara, &controls).unwrap();
        let (eta, h) = (0.4, 0.9);
        let expected = (eta * x + a - h * v * (h * x + b)) * p - (h * x + b) * z
            + 1.3 * b * b / 2.0
            + 0.7 * x * q * z;
        assert_abs_diff_eq!(got, expected, epsilon = 1e-14);
    }

    #[test]
    fn best_response_interior_without_filter_gain() {
        let model = LinearModel::new(0.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        let cost = QuadraticCost::unit();
        let controls = ControlSet::new(0.0, 2.0).unwrap();
        let b = best_response(0.3, 1.0, 0.7, &model, 1.0, &cost, &controls);
        assert_eq!(b, 1.0);
    }

    #[test]
    fn best_response_with_filter_gain_matches_grid_search() {
        let model = unit_model();
        let cost = QuadraticCost::unit();
        let controls = ControlSet::new(0.0, 2.0).unwrap();
        let (t, z, p, v) = (0.0, 1.0, 0.5, 1.0);
        let b_star = best_response(t, z, p, &model, v, &cost, &controls);
        assert_abs_diff_eq!(b_star, 1.5, epsilon = 1e-12);

        // Brute-force minimisation of the Hamiltonian over 10^6 grid points.
        let n = 1_000_000;
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=n {
            let b = controls.lo + (controls.hi - controls.lo) * i as f64 / n as f64;
            let h = hamiltonian_linear(t, 0.0, b, p, 0.0, z, &model, v, &cost, &controls).unwrap();
            if h < best.0 {
                best = (h, b);
            }
        }
        let resolution = (controls.hi - controls.lo) / n as f64;
        assert!((b_star - best.1).abs() <= 2.0 * resolution);
    }

    #[test]
    fn best_response_clamps_at_corner() {
        let model = LinearModel::new(0.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        let cost = QuadraticCost::unit();
        let controls = ControlSet::new(0.0, 2.0).unwrap();
        let b = best_response(0.0, 5.0, 0.0, &model, 1.0, &cost, &controls);
        assert_eq!(b, 2.0);
    }

    #[test]
    fn interior_best_response_zeroes_the_derivative() {
        // Finite-difference check of the first-order condition.
        let model = LinearModel::new(0.2, 0.6, 0.1, 0.0, 1.0).unwrap();
        let cost = QuadraticCost::new(1.7).unwrap();
        let controls = ControlSet::new(-5.0, 5.0).unwrap();
        let (t, x, p, q, z, v) = (0.4, 0.9, 0.8, -0.1, 0.5, 0.7);
        let b_star = best_response(t, z, p, &model, v, &cost, &controls);
        assert!(controls.lo < b_star && b_star < controls.hi);
        let fd = 1e-6;
        let up =
            hamiltonian_linear(t, x, b_star + fd, p, q, z, &model, v, &cost, &controls).unwrap();
        let down =
            hamiltonian_linear(t, x, b_star - fd, p, q, z, &model, v, &cost, &controls).unwrap();
        assert!(((up - down) / (2.0 * fd)).abs() < 1e-10);
    }

    #[test]
    fn time_shifted_cost_leaves_best_response_unchanged() {
        // Adding g(t) to the cost shifts the Hamiltonian by a constant in b.
        struct Shifted(QuadraticCost);
        impl CostFunction for Shifted {
            fn cost(&self, t: f64, b: f64) -> f64 {
                self.0.cost(t, b) + 3.0 * t + 11.0
            }
            fn marginal(&self, t: f64, b: f64) -> f64 {
                self.0.marginal(t, b)
            }
            fn curvature(&self, t: f64, b: f64) -> f64 {
                self.0.curvature(t, b)
            }
            fn marginal_inverse(&self, t: f64, y: f64) -> f64 {
                self.0.marginal_inverse(t, y)
            }
        }
        let model = unit_model();
        let controls = ControlSet::new(0.0, 2.0).unwrap();
        let plain = best_response(
            0.3,
            0.9,
            0.4,
            &model,
            0.8,
            &QuadraticCost::unit(),
            &controls,
        );
        let shifted = best_response(
            0.3,
            0.9,
            0.4,
            &model,
            0.8,
            &Shifted(QuadraticCost::unit()),
            &controls,
        );
        assert_eq!(plain, shifted);
    }

    #[test]
    fn constructors_reject_invalid_parameters() {
        assert!(LinearModel::new(0.0, 1.0, 0.0, 0.0, -0.5).is_err());
        assert!(ControlSet::new(2.0, 1.0).is_err());
        assert!(QuadraticCost::new(0.0).is_err());
        assert!(CaraParams::new(-1.0).is_err());
    }

    proptest! {
        #[test]
        fn best_response_stays_in_the_control_set(
            z in -10.0..10.0f64,
            p in -10.0..10.0f64,
            v in 0.0..5.0f64,
            lo in -3.0..0.0f64,
            width in 0.0..4.0f64,
        ) {
            let model = unit_model();
            let cost = QuadraticCost::unit();
            let controls = ControlSet::new(lo, lo + width).unwrap();
            let b = best_response(0.1, z, p, &model, v, &cost, &controls);
            prop_assert!(controls.contains(b));
        }

        #[test]
        fn marginal_inverse_round_trips(
            kappa in 0.1..10.0f64,
            b in -5.0..5.0f64,
        ) {
            let cost = QuadraticCost::new(kappa).unwrap();
            let round = cost.marginal_inverse(0.0, cost.marginal(0.0, b));
            prop_assert!((round - b).abs() <= 1e-12);
        }
    }
}
