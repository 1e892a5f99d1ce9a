//! Monte Carlo verification that the optimal contract is really optimal
//! for the agent: participation binds, every member of the fixed deviation
//! family loses (common random numbers), and the Gateaux derivative
//! vanishes at the candidate effort but not at a suboptimal probe.
//!
//! Run with: `cargo run --release --example verify_agent`

use pacon::agent::{stationarity_check, verify_agent_optimality};
use pacon::contract::build_optimal_contract;
use pacon::{ControlSet, LinearModel, McConfig, Path, QuadraticCost, TimeGrid};

fn main() {
    let grid = TimeGrid::new(1.0, 400).unwrap();
    let model = LinearModel::new(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
    let cost = QuadraticCost::unit();
    let controls = ControlSet::new(0.0, 2.0).unwrap();
    let mc = McConfig::new(20_000, 7).unwrap();

    let (contract, _) = build_optimal_contract(0.2, &model, &cost, &controls, &grid).unwrap();
    let report = verify_agent_optimality(&contract, &cost, &controls, &mc).unwrap();

    println!(
        "agent value at beta*: {:.5} +- {:.5} (reservation {}, participation {})",
        report.value_at_candidate.mean,
        report.value_at_candidate.std_error,
        report.reservation,
        if report.participation_ok {
            "ok"
        } else {
            "VIOLATED"
        }
    );
    println!("deviation family v{} (paired gaps):", report.family_version);
    for outcome in &report.deviations {
        println!(
            "  {:>10}: gap {:+.5} +- {:.1e}  {}",
            outcome.name,
            outcome.gap,
            outcome.gap_std_error,
            if outcome.dominated {
                "dominated"
            } else {
                "NOT RESOLVED"
            }
        );
    }

    let direction = Path::constant(grid, 1.0);
    let points = stationarity_check(
        &contract,
        &contract.effort.clone(),
        &direction,
        &[0.1, 0.05, 0.025],
        &cost,
        &controls,
        &mc,
    )
    .unwrap();
    println!("Gateaux difference quotients at beta* (direction 1):");
    for p in &points {
        println!(
            "  D({:>5}) = {:+.5} +- {:.1e}",
            p.epsilon, p.derivative, p.std_error
        );
    }

    let probe = contract.effort.map(|b| b - 0.3);
    let improvement =
        stationarity_check(&contract, &probe, &direction, &[0.1], &cost, &controls, &mc).unwrap();
    println!(
        "probe at beta* - 0.3:  D(0.1) = {:+.5} (improvement direction detected: {})",
        improvement[0].derivative,
        improvement[0].derivative > 3.0 * improvement[0].std_error
    );
    println!("overall: {}", if report.pass { "PASS" } else { "FAIL" });
}
