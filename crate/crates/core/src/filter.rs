//! Kalman-Bucy filter system of the partially observed linear model: the
//! posterior-variance Riccati ODE, the deterministic posterior mean, Monte
//! Carlo simulation of the filtered system under the agent's measure, and
//! the principal-side reconstruction of the filter from the observation
//! path alone.
//!
//! Simulation draws the innovation directly as Brownian motion (it is one
//! under the agent's measure), so no change-of-measure density is ever
//! formed. With a population-mean path `λ` supplied, the same recursions
//! cover the mean-field variant; `λ ≡ 1` recovers the single-agent system
//! bit-for-bit.

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::grid::{Path, TimeGrid};
use crate::mc::{chunked_fold, McConfig};
use crate::model::LinearModel;
use crate::numerics::{cumtrapz, rk4_solve};
use crate::rng::{brownian_increments, RngStream};

/// Coefficients of the filter recursions sampled once onto the grid.
#[derive(Debug, Clone)]
pub(crate) struct FilterCoefficients {
    pub eta: Vec<f64>,
    pub h: Vec<f64>,
    pub v: Vec<f64>,
    pub lambda: Vec<f64>,
    pub m0: f64,
}

impl FilterCoefficients {
    pub(crate) fn sample(
        model: &LinearModel,
        v: &Path,
        lambda: Option<&Path>,
        grid: &TimeGrid,
    ) -> Result<Self> {
        if v.grid() != *grid {
            return Err(Error::GridMismatch("variance path not on the grid".into()));
        }
        let lambda = match lambda {
            Some(l) => {
                if l.grid() != *grid {
                    return Err(Error::GridMismatch("lambda path not on the grid".into()));
                }
                l.values().to_vec()
            }
            None => vec![1.0; grid.n_nodes()],
        };
        Ok(Self {
            eta: model.eta.sample(grid).values().to_vec(),
            h: model.h.sample(grid).values().to_vec(),
            v: v.values().to_vec(),
            lambda,
            m0: model.prior_mean,
        })
    }

    /// One filter step: given `X_i`, returns `X_{i+1}` under innovation
    /// increment `d_inn`.
    #[inline]
    pub(crate) fn step_state(&self, i: usize, x: f64, dt: f64, d_inn: f64) -> f64 {
        x + self.eta[i] * x * dt + self.h[i] * self.v[i] * self.lambda[i] * d_inn
    }

    /// Observation drift `h λ X_i + β_i`.
    #[inline]
    pub(crate) fn obs_drift(&self, i: usize, x: f64, beta_i: f64) -> f64 {
        self.h[i] * self.lambda[i] * x + beta_i
    }

    /// One reconstruction step driven by the observed increment `db`.
    #[inline]
    pub(crate) fn step_reconstruction(
        &self,
        i: usize,
        x_bar: f64,
        dt: f64,
        db: f64,
        beta_i: f64,
    ) -> f64 {
        let gain = self.h[i] * self.v[i] * self.lambda[i];
        x_bar + self.eta[i] * x_bar * dt + gain * (db - self.obs_drift(i, x_bar, beta_i) * dt)
    }
}

/// Solves the posterior-variance ODE
/// `V' = 2 η(t) V − h²(t) λ²(t) V² + σ(t)`, `V(0) = V0`
/// by RK4 (`λ ≡ 1` without a population-mean path). Blow-up or a negative
/// variance is reported with the offending node.
pub fn solve_riccati(model: &LinearModel, grid: &TimeGrid, lambda: Option<&Path>) -> Result<Path> {
    if let Some(l) = lambda {
        if l.grid() != *grid {
            return Err(Error::GridMismatch("lambda path not on the grid".into()));
        }
    }
    let lam = |t: f64| lambda.map_or(1.0, |l| l.interpolate(t));
    let path = rk4_solve(
        |t, v| {
            let h = model.h.eval(t);
            let l = lam(t);
            2.0 * model.eta.eval(t) * v - h * h * l * l * v * v + model.sigma.eval(t)
        },
        model.prior_var,
        grid,
    )?;
    let tol = -1e-12 * (1.0 + model.prior_var.abs());
    for (i, &v) in path.values().iter().enumerate() {
        if v < tol {
            return Err(Error::NegativeVariance {
                node: i,
                t: grid.node(i),
                value: v,
            });
        }
    }
    Ok(path)
}

/// Deterministic posterior mean `m(t) = m0 · exp(∫_0^t η)`.
pub fn posterior_mean_deterministic(model: &LinearModel, grid: &TimeGrid) -> Path {
    let eta = model.eta.sample(grid);
    let cum = cumtrapz(eta.values(), grid.dt());
    let values = cum.iter().map(|&e| model.prior_mean * e.exp()).collect();
    Path::new(*grid, values).expect("finite by construction")
}

/// Simulated filter system: one path each of the posterior mean `X`, the
/// observation `B`, and the innovation `I`, plus the effort that generated
/// them. The discrete identity
/// `B_{i+1} − B_i = (h λ X_i + β_i) Δt + (I_{i+1} − I_i)`
/// holds at every node up to f64 rounding.
#[derive(Debug, Clone)]
pub struct FilterEnsemble {
    pub state: Vec<Path>,
    pub observation: Vec<Path>,
    pub innovation: Vec<Path>,
    pub effort: Path,
}

impl FilterEnsemble {
    pub fn n_paths(&self) -> usize {
        self.state.len()
    }

    /// CSV export, one row per (path, node): `t,path_id,X,B,I`.
    /// Floats carry 17 significant digits.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "t,path_id,X,B,I")?;
        let grid = self.effort.grid();
        for (pid, ((x, b), inn)) in self
            .state
            .iter()
            .zip(&self.observation)
            .zip(&self.innovation)
            .enumerate()
        {
            for i in 0..grid.n_nodes() {
                writeln!(
                    w,
                    "{:.16e},{},{:.16e},{:.16e},{:.16e}",
                    grid.node(i),
                    pid,
                    x.at(i),
                    b.at(i),
                    inn.at(i)
                )?;
            }
        }
        Ok(())
    }
}

/// Simulates the filter system under the agent's measure: innovation drawn
/// as Brownian motion, `X` Euler-stepped with drift `η X` and diffusion
/// `h V λ`, and `B` built from the discrete observation identity.
///
/// Paths use RNG stream `stream_index = path_index`; the result is
/// deterministic in `(master_seed, n_paths)` regardless of thread count.
/// Memory grows with `n_paths · N`; the valuation routines in
/// [`crate::agent`] stream instead of materialising an ensemble.
pub fn simulate_filter(
    model: &LinearModel,
    v: &Path,
    effort: &Path,
    lambda: Option<&Path>,
    mc: &McConfig,
    grid: &TimeGrid,
) -> Result<FilterEnsemble> {
    if effort.grid() != *grid {
        return Err(Error::GridMismatch("effort path not on the grid".into()));
    }
    let coeffs = FilterCoefficients::sample(model, v, lambda, grid)?;
    let dt = grid.dt();
    let beta = effort.values();

    struct Chunk {
        state: Vec<Path>,
        observation: Vec<Path>,
        innovation: Vec<Path>,
    }

    let merged = chunked_fold(
        mc,
        || Chunk {
            state: Vec::new(),
            observation: Vec::new(),
            innovation: Vec::new(),
        },
        |chunk: &mut Chunk, _path, stream: &mut RngStream| {
            let incs = brownian_increments(grid, stream);
            let n = grid.steps();
            let mut x = Vec::with_capacity(n + 1);
            let mut b = Vec::with_capacity(n + 1);
            let mut inn = Vec::with_capacity(n + 1);
            x.push(coeffs.m0);
            b.push(0.0);
            inn.push(0.0);
            for i in 0..n {
                let xi = x[i];
                b.push(b[i] + coeffs.obs_drift(i, xi, beta[i]) * dt + incs[i]);
                inn.push(inn[i] + incs[i]);
                x.push(coeffs.step_state(i, xi, dt, incs[i]));
            }
            chunk.state.push(Path::new(*grid, x).expect("finite"));
            chunk.observation.push(Path::new(*grid, b).expect("finite"));
            chunk
                .innovation
                .push(Path::new(*grid, inn).expect("finite"));
        },
        |mut a, mut b| {
            a.state.append(&mut b.state);
            a.observation.append(&mut b.observation);
            a.innovation.append(&mut b.innovation);
            a
        },
    );

    Ok(FilterEnsemble {
        state: merged.state,
        observation: merged.observation,
        innovation: merged.innovation,
        effort: effort.clone(),
    })
}

/// Principal-side filter reconstruction from the observable path alone:
/// `X̄_{i+1} = X̄_i + η X̄_i Δt + h V λ (ΔB_i − (h λ X̄_i + β̄_i) Δt)`,
/// started at the prior mean.
pub fn reconstruct_filter(
    model: &LinearModel,
    v: &Path,
    effort: &Path,
    lambda: Option<&Path>,
    observed_b: &Path,
    grid: &TimeGrid,
) -> Result<Path> {
    if effort.grid() != *grid || observed_b.grid() != *grid {
        return Err(Error::GridMismatch(
            "effort/observation paths not on the grid".into(),
        ));
    }
    let coeffs = FilterCoefficients::sample(model, v, lambda, grid)?;
    Ok(reconstruct_with(&coeffs, effort.values(), observed_b, grid))
}

pub(crate) fn reconstruct_with(
    coeffs: &FilterCoefficients,
    beta: &[f64],
    observed_b: &Path,
    grid: &TimeGrid,
) -> Path {
    let dt = grid.dt();
    let b = observed_b.values();
    let mut values = Vec::with_capacity(grid.n_nodes());
    let mut x_bar = coeffs.m0;
    values.push(x_bar);
    for i in 0..grid.steps() {
        x_bar = coeffs.step_reconstruction(i, x_bar, dt, b[i + 1] - b[i], beta[i]);
        values.push(x_bar);
    }
    Path::new(*grid, values).expect("finite recursion")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearModel;
    use approx::assert_abs_diff_eq;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::new(1.0, n).unwrap()
    }

    #[test]
    fn riccati_pure_observation_benchmark() {
        // V' = -V², V0 = 1 has V(t) = 1 / (1 + t): the intro posterior
        // variance with unit noise.
        let model = LinearModel::new(0.0, 1.0, 0.0, 0.0, 1.0).unwrap();
        let v = solve_riccati(&model, &grid(1000), None).unwrap();
        assert_abs_diff_eq!(v.last(), 0.5, epsilon = 1e-6);
    }

    #[test]
    fn riccati_without_observation_or_forcing_is_exponential() {
        let model = LinearModel::new(0.0, 0.0, 0.0, 0.0, 1.0).unwrap();
        let v = solve_riccati(&model, &grid(100), None).unwrap();
        assert!(v.values().iter().all(|&x| x == 1.0));

        let model = LinearModel::new(0.3, 0.0, 0.0, 0.0, 2.0).unwrap();
        let v = solve_riccati(&model, &grid(1000), None).unwrap();
        assert_abs_diff_eq!(v.last(), 2.0 * (0.6_f64).exp(), epsilon = 1e-8);
    }

    #[test]
    fn riccati_with_unit_lambda_is_bit_identical_to_plain_call() {
        let model = LinearModel::new(0.2, 0.8, 0.5, 0.0, 1.5).unwrap();
        let g = grid(500);
        let plain = solve_riccati(&model, &g, None).unwrap();
        let unit = Path::constant(g, 1.0);
        let with_lambda = solve_riccati(&model, &g, Some(&unit)).unwrap();
        assert_eq!(plain.values(), with_lambda.values());
    }

    #[test]
    fn riccati_flags_negative_variance() {
        // σ < 0 drives V below zero; the solver must name a node.
        let model = LinearModel::new(0.0, 0.0, -1.0, 0.0, 0.1).unwrap();
        match solve_riccati(&model, &grid(100), None) {
            Err(Error::NegativeVariance { node, .. }) => assert!(node > 0),
            other => panic!("expected negative-variance error, got {other:?}"),
        }
    }

    #[test]
    fn posterior_mean_closed_forms() {
        let g = grid(1000);
        let flat = LinearModel::new(0.0, 1.0, 0.0, 2.5, 1.0).unwrap();
        let m = posterior_mean_deterministic(&flat, &g);
        assert!(m.values().iter().all(|&x| x == 2.5));

        let zero = LinearModel::new(1.0, 1.0, 0.0, 0.0, 1.0).unwrap();
        assert!(posterior_mean_deterministic(&zero, &g)
            .values()
            .iter()
            .all(|&x| x == 0.0));

        let growing = LinearModel::new(1.0, 0.0, 0.0, 1.0, 1.0).unwrap();
        let m = posterior_mean_deterministic(&growing, &g);
        assert_abs_diff_eq!(m.last(), std::f64::consts::E, epsilon = 1e-9);
    }

    #[test]
    fn zero_observation_gain_makes_state_deterministic() {
        let g = grid(200);
        let model = LinearModel::new(0.0, 0.0, 0.0, 1.7, 0.5).unwrap();
        let v = solve_riccati(&model, &g, None).unwrap();
        let beta = Path::constant(g, 0.3);
        let mc = McConfig::new(8, 11).unwrap();
        let ens = simulate_filter(&model, &v, &beta, None, &mc, &g).unwrap();
        let mean = posterior_mean_deterministic(&model, &g);
        for x in &ens.state {
            assert_eq!(x.sup_distance(&mean), 0.0);
        }
    }

    #[test]
    fn monte_carlo_state_mean_matches_deterministic_mean() {
        // η ≡ 0 keeps the Euler mean exact, isolating the statistical check.
        let g = grid(200);
        let model = LinearModel::new(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let v = solve_riccati(&model, &g, None).unwrap();
        let beta = Path::constant(g, 1.0);
        let mc = McConfig::new(100_000, 31).unwrap();
        let ens = simulate_filter(&model, &v, &beta, None, &mc, &g).unwrap();

        let n = ens.n_paths() as f64;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for x in &ens.state {
            sum += x.last();
            sumsq += x.last() * x.last();
        }
        let mean = sum / n;
        let se = (((sumsq - sum * sum / n) / (n - 1.0)) / n).sqrt();
        let m_t = posterior_mean_deterministic(&model, &g).last();
        assert!(
            (mean - m_t).abs() <= 3.0 * se,
            "mean {mean} vs {m_t} (se {se})"
        );
    }

    #[test]
    fn innovation_terminal_variance_is_the_horizon() {
        let g = grid(100);
        let model = LinearModel::new(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let v = solve_riccati(&model, &g, None).unwrap();
        let beta = Path::constant(g, 1.0);
        let mc = McConfig::new(100_000, 17).unwrap();
        let ens = simulate_filter(&model, &v, &beta, None, &mc, &g).unwrap();

        let n = ens.n_paths() as f64;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for inn in &ens.innovation {
            sum += inn.last();
            sumsq += inn.last() * inn.last();
        }
        let var = (sumsq - sum * sum / n) / (n - 1.0);
        let t_end = g.horizon();
        // Sample variance of N(0, T) has sd ≈ T √(2/(n−1)).
        let sd = t_end * (2.0 / (n - 1.0)).sqrt();
        assert!(
            (var - t_end).abs() <= 3.0 * sd,
            "variance {var} vs {t_end} (sd {sd})"
        );
    }

    #[test]
    fn discrete_observation_identity_holds_at_every_node() {
        let g = grid(64);
        let model = LinearModel::new(0.3, 0.9, 0.4, 1.1, 0.8).unwrap();
        let v = solve_riccati(&model, &g, None).unwrap();
        let beta = Path::sample(g, |t| 0.2 + 0.5 * t);
        let mc = McConfig::new(16, 5).unwrap();
        let ens = simulate_filter(&model, &v, &beta, None, &mc, &g).unwrap();
        let coeffs = FilterCoefficients::sample(&model, &v, None, &g).unwrap();
        let dt = g.dt();
        for ((x, b), inn) in ens.state.iter().zip(&ens.observation).zip(&ens.innovation) {
            for i in 0..g.steps() {
                let lhs = b.at(i + 1) - b.at(i);
                let rhs =
                    coeffs.obs_drift(i, x.at(i), beta.at(i)) * dt + (inn.at(i + 1) - inn.at(i));
                assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn reconstruction_reproduces_the_simulated_filter() {
        let g = grid(128);
        let model = LinearModel::new(0.2, 0.7, 0.3, 0.9, 1.2).unwrap();
        let v = solve_riccati(&model, &g, None).unwrap();
        let beta = Path::sample(g, |t| 0.4 + 0.1 * t);
        let mc = McConfig::new(6, 23).unwrap();
        let ens = simulate_filter(&model, &v, &beta, None, &mc, &g).unwrap();
        for (x, b) in ens.state.iter().zip(&ens.observation) {
            let rec = reconstruct_filter(&model, &v, &beta, None, b, &g).unwrap();
            assert!(rec.sup_distance(x) <= 1e-12);
        }
    }

    #[test]
    fn zero_gain_reconstruction_ignores_the_observation() {
        let g = grid(64);
        let model = LinearModel::new(0.0, 0.0, 0.0, 1.3, 0.4).unwrap();
        let v = solve_riccati(&model, &g, None).unwrap();
        let beta = Path::constant(g, 0.5);
        let wild = Path::sample(g, |t| (20.0 * t).sin() * 5.0);
        let rec = reconstruct_filter(&model, &v, &beta, None, &wild, &g).unwrap();
        assert!(rec.values().iter().all(|&x| x == 1.3));
    }

    #[test]
    fn deviated_effort_gap_solves_the_deterministic_gap_recursion() {
        // B generated under β̄ + δ, reconstructed with β̄: the gap between
        // the agent's filter and the reconstruction is deterministic.
        let g = grid(256);
        let model = LinearModel::new(0.1, 0.8, 0.5, 1.0, 1.0).unwrap();
        let v = solve_riccati(&model, &g, None).unwrap();
        let beta_ref = Path::constant(g, 0.6);
        let delta = 0.25;
        let beta_dev = beta_ref.map(|b| b + delta);
        let mc = McConfig::new(4, 3).unwrap();
        let ens = simulate_filter(&model, &v, &beta_dev, None, &mc, &g).unwrap();

        let coeffs = FilterCoefficients::sample(&model, &v, None, &g).unwrap();
        let dt = g.dt();
        // Gap recursion: D_{i+1} = D_i + η D_i Δt − h V (h D_i + δ) Δt.
        let mut gap = vec![0.0_f64];
        for i in 0..g.steps() {
            let d = gap[i];
            let hv = coeffs.h[i] * coeffs.v[i];
            gap.push(d + coeffs.eta[i] * d * dt - hv * (coeffs.h[i] * d + delta) * dt);
        }
        for (x, b) in ens.state.iter().zip(&ens.observation) {
            let rec = reconstruct_filter(&model, &v, &beta_ref, None, b, &g).unwrap();
            for (i, &expected) in gap.iter().enumerate() {
                assert_abs_diff_eq!(x.at(i) - rec.at(i), expected, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn reconstruction_is_affine_in_the_observation() {
        let g = grid(100);
        let model = LinearModel::new(0.15, 0.9, 0.2, 0.7, 1.1).unwrap();
        let v = solve_riccati(&model, &g, None).unwrap();
        let beta = Path::constant(g, 0.5);
        let b1 = Path::sample(g, |t| t + (3.0 * t).sin());
        let b2 = Path::sample(g, |t| 0.5 * t * t - t);
        let a = 0.3;
        let mix = b1.zip_with(&b2, |x, y| a * x + (1.0 - a) * y).unwrap();
        let r1 = reconstruct_filter(&model, &v, &beta, None, &b1, &g).unwrap();
        let r2 = reconstruct_filter(&model, &v, &beta, None, &b2, &g).unwrap();
        let rmix = reconstruct_filter(&model, &v, &beta, None, &mix, &g).unwrap();
        let expected = r1.zip_with(&r2, |x, y| a * x + (1.0 - a) * y).unwrap();
        assert!(rmix.sup_distance(&expected) <= 1e-12);
    }

    #[test]
    fn csv_export_schema() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let model = LinearModel::new(0.0, 1.0, 0.0, 1.0, 1.0).unwrap();
        let v = solve_riccati(&model, &g, None).unwrap();
        let beta = Path::constant(g, 1.0);
        let mc = McConfig::new(2, 1).unwrap();
        let ens = simulate_filter(&model, &v, &beta, None, &mc, &g).unwrap();
        let mut buf = Vec::new();
        ens.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,path_id,X,B,I");
        assert_eq!(lines.count(), 2 * 3);
        assert!(text.contains("e0") || text.contains("e-"));
    }
}
