//! The principal's value: Monte Carlo estimate of E[B_T − ξ*] under the
//! agent's best response against the closed form
//! −R + ∫(β̄* − c(β̄*)) dt + ∫ h m dt.
//!
//! Run with: `cargo run --release --example principal_value`

use pacon::agent::principal_value_mc;
use pacon::contract::{build_optimal_contract, principal_value_closed_form};
use pacon::{ControlSet, LinearModel, McConfig, QuadraticCost, TimeGrid};

fn main() {
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let model = LinearModel::new(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    let cost = QuadraticCost::unit();
    let controls = ControlSet::new(0.0, 2.0).unwrap();
    let reservation = 0.2;

    let closed = principal_value_closed_form(reservation, &model, &cost, &controls, &grid);
    let (contract, _) =
        build_optimal_contract(reservation, &model, &cost, &controls, &grid).unwrap();

    println!("principal value, closed form: {closed:.6}");
    println!(
        "{:>9} {:>12} {:>12} {:>8}",
        "paths", "MC", "std err", "sigmas"
    );
    for n_paths in [1_000, 10_000, 100_000] {
        let mc = McConfig::new(n_paths, 11).unwrap();
        let estimate = principal_value_mc(&contract, &contract.effort.clone(), &cost, &mc).unwrap();
        println!(
            "{n_paths:>9} {:>12.6} {:>12.2e} {:>8.2}",
            estimate.mean,
            estimate.std_error,
            estimate.sigmas_from(closed)
        );
    }
}
