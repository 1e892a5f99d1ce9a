//! Builds the closed-form optimal contract and inspects its internals.
//!
//! On the benchmark model (η ≡ 0, h ≡ 1, σ ≡ 1, V0 = 1) the pieces are all
//! explicit: flat effort β̄* ≡ 1, integrand Z*(t) = 2 − t, adjoint
//! P*(t) = t − 1, Q* ≡ 0, and the incentive identity
//! Z* = ∂c − V h P* holds to rounding.
//!
//! Run with: `cargo run --release --example optimal_contract`

use pacon::agent::{incentive_residual, sufficient_condition_check};
use pacon::contract::{build_optimal_contract, principal_value_closed_form};
use pacon::{ControlSet, LinearModel, QuadraticCost, TimeGrid};

fn main() {
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let model = LinearModel::new(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    let cost = QuadraticCost::unit();
    let controls = ControlSet::new(0.0, 2.0).unwrap();
    let reservation = 0.2;

    let (contract, solution) =
        build_optimal_contract(reservation, &model, &cost, &controls, &grid).unwrap();

    println!("optimal contract on the benchmark model (R = {reservation}):");
    println!(
        "{:>6} {:>10} {:>10} {:>10} {:>10}",
        "t", "beta*", "Z*", "P*", "V"
    );
    for i in (0..=1000).step_by(200) {
        println!(
            "{:>6.2} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
            grid.node(i),
            contract.effort.at(i),
            solution.z.at(i),
            solution.p.at(i),
            contract.v.at(i)
        );
    }

    let residual = incentive_residual(
        &solution,
        &contract.effort,
        &model,
        &cost,
        &contract.v,
        None,
        &controls,
        &grid,
    );
    let band = sufficient_condition_check(&solution.q, &model, &cost, &controls, None, &grid);
    let value = principal_value_closed_form(reservation, &model, &cost, &controls, &grid);

    println!("incentive identity residual: {residual:.2e}");
    println!(
        "sufficient-condition band:   {} (worst margin {:.3})",
        if band.pass { "pass" } else { "FAIL" },
        band.worst_margin
    );
    println!("principal's value:           {value:.6}");

    // The contract serializes to a self-contained JSON document.
    let mut buf = Vec::new();
    pacon::contract::save_contract(&mut buf, &contract, None).unwrap();
    println!("serialized contract:         {} bytes of JSON", buf.len());
}
