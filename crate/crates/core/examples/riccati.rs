//! Posterior-variance Riccati equation for a pure-observation model.
//!
//! With η ≡ 0, h ≡ 1, σ ≡ 0 and prior variance 1, the posterior variance
//! is V(t) = 1 / (1 + t): learning the unobserved productivity shrinks the
//! variance hyperbolically.
//!
//! Run with: `cargo run --release --example riccati`

use pacon::filter::solve_riccati;
use pacon::{LinearModel, TimeGrid};

fn main() {
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let model = LinearModel::new(0.0, 1.0, 0.0, 1.0, 1.0).unwrap();
    let v = solve_riccati(&model, &grid, None).unwrap();

    println!("posterior variance V(t), closed form 1/(1+t):");
    println!("{:>6} {:>14} {:>14} {:>10}", "t", "V(t)", "closed", "error");
    for i in (0..=1000).step_by(100) {
        let t = grid.node(i);
        let closed = 1.0 / (1.0 + t);
        println!(
            "{t:>6.2} {:>14.10} {closed:>14.10} {:>10.2e}",
            v.at(i),
            (v.at(i) - closed).abs()
        );
    }
}
