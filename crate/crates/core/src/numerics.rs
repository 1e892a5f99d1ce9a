//! Deterministic integration building blocks: classical RK4, composite
//! trapezoid quadrature, exponential integrals of sampled coefficients, and
//! the Euler-Maruyama step for driven paths.

use crate::error::{Error, Result};
use crate::grid::{Path, TimeGrid};

/// Classical 4th-order Runge-Kutta for `y' = f(t, y)`, sampled at the grid
/// nodes. Fails at the first node where the state stops being finite.
pub fn rk4_solve(f: impl Fn(f64, f64) -> f64, y0: f64, grid: &TimeGrid) -> Result<Path> {
    let dt = grid.dt();
    let mut values = Vec::with_capacity(grid.n_nodes());
    let mut y = y0;
    values.push(y);
    for i in 0..grid.steps() {
        let t = grid.node(i);
        let k1 = f(t, y);
        let k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1);
        let k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2);
        let k4 = f(t + dt, y + dt * k3);
        y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if !y.is_finite() {
            return Err(Error::NonFinite {
                context: "rk4_solve",
                node: i + 1,
                t: grid.node(i + 1),
            });
        }
        values.push(y);
    }
    Path::new(*grid, values)
}

/// RK4 for a terminal-value problem `y' = f(t, y)`, `y(T) = y_terminal`,
/// integrated backwards in time and returned in forward node order.
pub fn rk4_solve_backward(
    f: impl Fn(f64, f64) -> f64,
    y_terminal: f64,
    grid: &TimeGrid,
) -> Result<Path> {
    let t_end = grid.horizon();
    // Substitute s = T - t: g(s) = y(T - s) solves g' = -f(T - s, g).
    let reversed = rk4_solve(|s, g| -f(t_end - s, g), y_terminal, grid)?;
    let mut values: Vec<f64> = reversed.values().to_vec();
    values.reverse();
    Path::new(*grid, values)
}

/// Composite trapezoid rule over the whole grid.
pub fn trapezoid(path: &Path) -> f64 {
    trapezoid_values(path.values(), path.grid().dt())
}

pub(crate) fn trapezoid_values(values: &[f64], dt: f64) -> f64 {
    let n = values.len() - 1;
    if n == 0 {
        return 0.0;
    }
    let mut acc = 0.5 * (values[0] + values[n]);
    for v in &values[1..n] {
        acc += v;
    }
    acc * dt
}

/// Cumulative trapezoid integral: `out[i] = ∫_0^{t_i}` of the sampled values.
pub(crate) fn cumtrapz(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(acc);
    for w in values.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * dt;
        out.push(acc);
    }
    out
}

/// `exp(∫_{t_from}^{t_to} g)` with the integral taken by the trapezoid rule
/// over the sampled coefficient `g`.
pub fn exp_integral(g: &Path, from: usize, to: usize) -> Result<f64> {
    if from > to {
        return Err(Error::IndexOrder { from, to });
    }
    let dt = g.grid().dt();
    let mut acc = 0.0;
    for w in g.values()[from..=to].windows(2) {
        acc += 0.5 * (w[0] + w[1]) * dt;
    }
    Ok(acc.exp())
}

/// Euler-Maruyama recursion `x_{i+1} = x_i + drift(i, x_i) Δt +
/// diffusion(i, x_i) ΔW_i` over supplied increments.
pub fn euler_path(
    drift: impl Fn(usize, f64) -> f64,
    diffusion: impl Fn(usize, f64) -> f64,
    x0: f64,
    increments: &[f64],
    grid: &TimeGrid,
) -> Result<Path> {
    if increments.len() != grid.steps() {
        return Err(Error::GridMismatch(format!(
            "expected {} increments, got {}",
            grid.steps(),
            increments.len()
        )));
    }
    let dt = grid.dt();
    let mut values = Vec::with_capacity(grid.n_nodes());
    let mut x = x0;
    values.push(x);
    for (i, dw) in increments.iter().enumerate() {
        x += drift(i, x) * dt + diffusion(i, x) * dw;
        if !x.is_finite() {
            return Err(Error::NonFinite {
                context: "euler_path",
                node: i + 1,
                t: grid.node(i + 1),
            });
        }
        values.push(x);
    }
    Path::new(*grid, values)
}
