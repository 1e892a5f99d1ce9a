//! The closed-form optimal contract of the partially observed linear
//! problem: flat optimal effort, the deterministic integrand `Z*`, the
//! adjoint pair `(P*, Q* ≡ 0)`, payoff evaluation along observed paths, the
//! principal's closed-form value, and the first-best toy comparison.
//!
//! A [`Contract`] stores sampled coefficient paths rather than closures, so
//! a serialized contract evaluates payoffs bit-identically after a
//! round-trip through JSON.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::FilterCoefficients;
use crate::grid::{Path, TimeGrid};
use crate::model::{ControlSet, CostFunction, LinearModel};
use crate::numerics::{cumtrapz, trapezoid};

pub const CONTRACT_FORMAT: &str = "pacon-contract";
pub const CONTRACT_FORMAT_VERSION: u32 = 1;

/// An implementable terminal payment: reservation value plus deterministic
/// integrands evaluated along an observed `B`-path via filter
/// reconstruction. `lambda` carries the population-mean path in the
/// mean-field case and is absent (`λ ≡ 1`) for the single agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub reservation: f64,
    pub grid: TimeGrid,
    pub z_star: Path,
    pub effort: Path,
    pub v: Path,
    pub lambda: Option<Path>,
    /// Drift coefficient sampled at the nodes.
    pub eta: Path,
    /// Observation gain sampled at the nodes.
    pub h: Path,
    /// Running cost along the reference effort, `c(t_i, β̄_i)`.
    pub cost_at_effort: Path,
    pub prior_mean: f64,
}

impl Contract {
    pub(crate) fn coefficients(&self) -> FilterCoefficients {
        FilterCoefficients {
            eta: self.eta.values().to_vec(),
            h: self.h.values().to_vec(),
            v: self.v.values().to_vec(),
            lambda: match &self.lambda {
                Some(l) => l.values().to_vec(),
                None => vec![1.0; self.grid.n_nodes()],
            },
            m0: self.prior_mean,
        }
    }

    fn lambda_at(&self, i: usize) -> f64 {
        self.lambda.as_ref().map_or(1.0, |l| l.at(i))
    }
}

/// Deterministic `(Z, P, Q)` paths and the initial value of the agent's
/// value process for the linear optimality system. In the closed-form
/// solution `Q ≡ 0` and `P` vanishes at the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbsdeSolution {
    pub z: Path,
    pub p: Path,
    pub q: Path,
    pub y0: f64,
}

/// Sup-norm diagnostics of the adjoint equation along sampled paths.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FbsdeResiduals {
    /// Central-difference residual of `dP = (hZ − (η − Vh²)P) dt` over the
    /// interior nodes.
    pub p_equation: f64,
    /// `|P_N|`.
    pub terminal: f64,
}

/// Maximiser of `b − c(t, b)` over the control set: the marginal-cost
/// inverse at one, clamped.
pub fn optimal_flat_effort(
    cost: &dyn CostFunction,
    controls: &ControlSet,
    grid: &TimeGrid,
) -> Path {
    Path::sample(*grid, |t| controls.clamp(cost.marginal_inverse(t, 1.0)))
}

/// Cumulative pieces shared by the `Z*` and `P*` quadratures:
/// `tail_i = ∫_{t_i}^{T} e^{∫_{t_i}^{s} η} h(s) ∂_b c(s, β̄_s) ds`.
fn adjoint_tail(
    model: &LinearModel,
    cost: &dyn CostFunction,
    effort: &Path,
    grid: &TimeGrid,
) -> (Vec<f64>, Vec<f64>) {
    let dt = grid.dt();
    let eta: Vec<f64> = grid.nodes().map(|t| model.eta.eval(t)).collect();
    let marginal: Vec<f64> = grid
        .nodes()
        .zip(effort.values())
        .map(|(t, &b)| cost.marginal(t, b))
        .collect();
    let exponents = cumtrapz(&eta, dt);
    let weighted: Vec<f64> = (0..grid.n_nodes())
        .map(|i| exponents[i].exp() * model.h.eval(grid.node(i)) * marginal[i])
        .collect();
    let cum = cumtrapz(&weighted, dt);
    let total = *cum.last().expect("non-empty grid");
    let tail: Vec<f64> = (0..grid.n_nodes())
        .map(|i| (-exponents[i]).exp() * (total - cum[i]))
        .collect();
    (marginal, tail)
}

/// Deterministic contract integrand
/// `Z*_t = ∂_b c(t, β̄_t) + ∫_t^T e^{∫_t^s η} h(s) ∂_b c(s, β̄_s) ds`.
pub fn optimal_z(
    model: &LinearModel,
    cost: &dyn CostFunction,
    effort: &Path,
    grid: &TimeGrid,
) -> Path {
    let (marginal, tail) = adjoint_tail(model, cost, effort, grid);
    let values = marginal.iter().zip(&tail).map(|(m, t)| m + t).collect();
    Path::new(*grid, values).expect("finite quadrature")
}

/// Adjoint pair: `P*_t = −∫_t^T e^{∫_t^s η} h(s) ∂_b c(s, β̄_s) ds` and
/// `Q* ≡ 0`.
pub fn adjoint_p(
    model: &LinearModel,
    cost: &dyn CostFunction,
    effort: &Path,
    grid: &TimeGrid,
) -> (Path, Path) {
    let (_, tail) = adjoint_tail(model, cost, effort, grid);
    let p = Path::new(*grid, tail.iter().map(|t| -t).collect()).expect("finite quadrature");
    (p, Path::constant(*grid, 0.0))
}

/// Builds the optimal contract: flat effort, `Z*`, `(P*, Q*)`, the
/// posterior variance, and the participation-binding initial value
/// `Y_0 = R`.
pub fn build_optimal_contract(
    reservation: f64,
    model: &LinearModel,
    cost: &dyn CostFunction,
    controls: &ControlSet,
    grid: &TimeGrid,
) -> Result<(Contract, FbsdeSolution)> {
    if !reservation.is_finite() {
        return Err(Error::InvalidInput(format!(
            "reservation must be finite, got {reservation}"
        )));
    }
    let effort = optimal_flat_effort(cost, controls, grid);
    let z_star = optimal_z(model, cost, &effort, grid);
    let (p, q) = adjoint_p(model, cost, &effort, grid);
    let v = crate::filter::solve_riccati(model, grid, None)?;
    let cost_at_effort = Path::sample(*grid, |t| {
        cost.cost(t, controls.clamp(cost.marginal_inverse(t, 1.0)))
    });
    let contract = Contract {
        reservation,
        grid: *grid,
        z_star: z_star.clone(),
        effort,
        v,
        lambda: None,
        eta: model.eta.sample(grid),
        h: model.h.sample(grid),
        cost_at_effort,
        prior_mean: model.prior_mean,
    };
    let solution = FbsdeSolution {
        z: z_star,
        p,
        q,
        y0: reservation,
    };
    Ok((contract, solution))
}

/// Evaluates the contract along an observed path:
/// reconstruct `X̄` from `B`, then
/// `ξ = R + Σ_i (c_i − Z_i (h_i λ_i X̄_i + β̄_i)) Δt + Σ_i Z_i ΔB_i`
/// with left-point sums matching the Euler scheme.
pub fn contract_payoff(contract: &Contract, observed_b: &Path) -> Result<f64> {
    if observed_b.grid() != contract.grid {
        return Err(Error::GridMismatch(
            "observed path not on the contract grid".into(),
        ));
    }
    let dt = contract.grid.dt();
    let b = observed_b.values();
    let z = contract.z_star.values();
    let beta = contract.effort.values();
    let c = contract.cost_at_effort.values();
    let (eta, h, v) = (
        contract.eta.values(),
        contract.h.values(),
        contract.v.values(),
    );
    let mut x_bar = contract.prior_mean;
    let mut acc = contract.reservation;
    for i in 0..contract.grid.steps() {
        let lam = contract.lambda_at(i);
        let db = b[i + 1] - b[i];
        let drift = h[i] * lam * x_bar + beta[i];
        acc += (c[i] - z[i] * drift) * dt + z[i] * db;
        x_bar += eta[i] * x_bar * dt + h[i] * v[i] * lam * (db - drift * dt);
    }
    Ok(acc)
}

/// Forward value recursion `Y_{i+1} = Y_i + c_i Δt + Z_i ΔI_i` from
/// `Y_0 = R` along an innovation path. On paths generated under the
/// contract's own effort, `Y_N` equals the payoff up to rounding.
pub fn forward_value_path(contract: &Contract, innovation: &Path) -> Result<Path> {
    if innovation.grid() != contract.grid {
        return Err(Error::GridMismatch(
            "innovation path not on the contract grid".into(),
        ));
    }
    let dt = contract.grid.dt();
    let z = contract.z_star.values();
    let c = contract.cost_at_effort.values();
    let inn = innovation.values();
    let mut values = Vec::with_capacity(contract.grid.n_nodes());
    let mut y = contract.reservation;
    values.push(y);
    for i in 0..contract.grid.steps() {
        y += c[i] * dt + z[i] * (inn[i + 1] - inn[i]);
        values.push(y);
    }
    Path::new(contract.grid, values)
}

/// Principal's closed-form value
/// `V_P = −R + ∫ (β̄* − c(t, β̄*)) dt + ∫ h m dt`.
pub fn principal_value_closed_form(
    reservation: f64,
    model: &LinearModel,
    cost: &dyn CostFunction,
    controls: &ControlSet,
    grid: &TimeGrid,
) -> f64 {
    let net_gain = Path::sample(*grid, |t| {
        let b = controls.clamp(cost.marginal_inverse(t, 1.0));
        b - cost.cost(t, b)
    });
    let mean = crate::filter::posterior_mean_deterministic(model, grid);
    let observed_mean = model
        .h
        .sample(grid)
        .zip_with(&mean, |h, m| h * m)
        .expect("same grid");
    -reservation + trapezoid(&net_gain) + trapezoid(&observed_mean)
}

/// First-best versus second-best toy comparison for the no-observation
/// model: second best `m0 − R`, first best `m0 + T/2 − R`, achieved by the
/// linear contract `(1, R − m0 − T/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstBestToy {
    pub second_best: f64,
    pub first_best: f64,
    /// `(slope, intercept)` of the achieving linear contract.
    pub linear_contract: (f64, f64),
}

pub fn first_best_toy(m0: f64, reservation: f64, horizon: f64) -> FirstBestToy {
    FirstBestToy {
        second_best: m0 - reservation,
        first_best: m0 + horizon / 2.0 - reservation,
        linear_contract: (1.0, reservation - m0 - horizon / 2.0),
    }
}

/// Discrete residual of the adjoint equation
/// `dP = (h Z − (η − V h²) P) dt` (with `Q ≡ 0`) along the solution paths,
/// by central differences over the interior nodes, plus the terminal
/// condition `|P_N|`.
pub fn fbsde_residuals(
    model: &LinearModel,
    solution: &FbsdeSolution,
    v: &Path,
    grid: &TimeGrid,
) -> FbsdeResiduals {
    let dt = grid.dt();
    let z = solution.z.values();
    let p = solution.p.values();
    let mut worst = 0.0_f64;
    for i in 1..grid.steps() {
        let t = grid.node(i);
        let h = model.h.eval(t);
        let eta = model.eta.eval(t);
        let rate = (p[i + 1] - p[i - 1]) / (2.0 * dt);
        let drift = h * z[i] - (eta - v.at(i) * h * h) * p[i];
        worst = worst.max((rate - drift).abs());
    }
    FbsdeResiduals {
        p_equation: worst,
        terminal: solution.p.last().abs(),
    }
}

#[derive(Serialize, Deserialize)]
struct ContractDocument {
    format: String,
    version: u32,
    tool_version: String,
    config_sha256: Option<String>,
    contract: Contract,
}

/// Writes the versioned JSON contract document. Floats serialize in
/// shortest round-trip form, so reloading reproduces them bit-exactly.
pub fn save_contract(
    w: impl Write,
    contract: &Contract,
    config_sha256: Option<&str>,
) -> Result<()> {
    let doc = ContractDocument {
        format: CONTRACT_FORMAT.to_string(),
        version: CONTRACT_FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: config_sha256.map(str::to_string),
        contract: contract.clone(),
    };
    serde_json::to_writer_pretty(w, &doc)?;
    Ok(())
}

pub fn load_contract(r: impl Read) -> Result<Contract> {
    let doc: ContractDocument = serde_json::from_reader(r)?;
    if doc.format != CONTRACT_FORMAT || doc.version != CONTRACT_FORMAT_VERSION {
        return Err(Error::InvalidInput(format!(
            "unsupported contract document {} v{}",
            doc.format, doc.version
        )));
    }
    Ok(doc.contract)
}
