//! CARA value-consistency check: a payment built by forward-stepping
//! dY = (c + ½λZ²) dt + Z dI from Y0 delivers the exponential-utility
//! certainty equivalent Y0 exactly, so the Monte Carlo defect
//! Y0 + ln(−V_A)/λ is statistical noise around zero for any λ and Z.
//!
//! Run with: `cargo run --release --example cara_identity`

use pacon::agent::cara_value_check;
use pacon::model::CaraParams;
use pacon::{McConfig, Path, QuadraticCost, TimeGrid};

fn main() {
    let grid = TimeGrid::new(1.0, 500).unwrap();
    let cost = QuadraticCost::unit();
    let effort = Path::constant(grid, 0.5);
    let mc = McConfig::new(100_000, 17).unwrap();
    let y0 = 0.2;

    println!(
        "CARA identity defect Y0 + ln(-V_A)/lambda over {} paths:",
        mc.n_paths
    );
    println!(
        "{:>8} {:>6} {:>12} {:>12}",
        "lambda", "Z", "defect", "std err"
    );
    for lambda in [0.5, 1.0, 2.0] {
        for z_level in [0.0, 0.5, 1.0] {
            let z = Path::constant(grid, z_level);
            let cara = CaraParams::new(lambda).unwrap();
            let defect = cara_value_check(&z, y0, &cost, &effort, &cara, &mc, &grid).unwrap();
            println!(
                "{lambda:>8.1} {z_level:>6.1} {:>12.2e} {:>12.2e}",
                defect.mean, defect.std_error
            );
        }
    }
}
