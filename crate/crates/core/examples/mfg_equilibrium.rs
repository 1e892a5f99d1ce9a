//! The mean-field interacting-agents equilibrium in closed form, checked
//! two independent ways: a brute-force Pontryagin oracle reproduces the
//! equilibrium effort, and the simulated population mean of the observable
//! regenerates the candidate path B̄ (the fixed point).
//!
//! Run with: `cargo run --release --example mfg_equilibrium`

use pacon::mfg::{mfg_deterministic_oracle, mfg_equilibrium, mfg_fixed_point_residual};
use pacon::{ControlSet, LinearModel, McConfig, QuadraticCost, TimeGrid};

fn main() {
    let grid = TimeGrid::new(1.0, 100).unwrap();
    let model = LinearModel::new(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    let cost = QuadraticCost::unit();
    let controls = ControlSet::new(0.0, 4.0).unwrap();

    let eq = mfg_equilibrium(&model, &cost, &controls, 0.2, &grid).unwrap();
    println!("mean-field equilibrium (k = h m0 = 1 constant):");
    println!(
        "{:>6} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "t", "rho", "beta*", "B_bar", "V", "Z"
    );
    for i in (0..=100).step_by(20) {
        println!(
            "{:>6.2} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
            grid.node(i),
            eq.rho.at(i),
            eq.beta_star.at(i),
            eq.b_bar.at(i),
            eq.v.at(i),
            eq.contract.z_star.at(i)
        );
    }
    if eq.clamped {
        println!("warning: the control set truncated the closed-form effort");
    }

    let oracle = mfg_deterministic_oracle(&model, &cost, &controls, &grid).unwrap();
    println!(
        "Pontryagin oracle vs closed form: sup gap {:.2e}",
        oracle.sup_distance(&eq.beta_star)
    );

    let mc = McConfig::new(50_000, 13).unwrap();
    let check = mfg_fixed_point_residual(&eq, &mc).unwrap();
    println!(
        "fixed point over {} paths: sup |E[B] - B_bar| = {:.2e} vs 3*maxSE = {:.2e} -> {}",
        mc.n_paths,
        check.sup_residual,
        3.0 * check.max_std_error,
        if check.pass { "PASS" } else { "FAIL" }
    );
}
