//! First-best versus second-best in the no-observation toy model.
//!
//! When nothing is observable, the principal can only pay a constant and
//! the agent shirks: the second-best value is m0 − R. Observing (and
//! dictating) effort recovers an extra T/2 through the linear contract
//! ξ = X_T + (R − m0 − T/2).
//!
//! Run with: `cargo run --release --example first_best`

use pacon::contract::first_best_toy;

fn main() {
    let (m0, reservation, horizon) = (1.0, 0.3, 2.0);
    let toy = first_best_toy(m0, reservation, horizon);

    println!("no-observation toy model: m0 = {m0}, R = {reservation}, T = {horizon}");
    println!("  second best (moral hazard): {}", toy.second_best);
    println!("  first best  (full info):    {}", toy.first_best);
    println!(
        "  information premium:        {}",
        toy.first_best - toy.second_best
    );
    println!(
        "  achieving linear contract:  xi = {} * X_T + {}",
        toy.linear_contract.0, toy.linear_contract.1
    );
}
