//! Adaptive versus fixed bucket sizes on the five-receiver instance.
//!
//! Receiver 1's delay sensitivity `p1` sweeps from 1 to 4 while the other
//! four receivers stay throughput-oriented (`p = 1`). The adaptive scheme
//! picks every `K_j`; the fixed schemes pin all buckets to 25 or 100.
//!
//! ```text
//! cargo run --release --example adaptive_vs_fixed [out.csv]
//! ```

use bucketopt::experiments::{adaptive_vs_fixed, default_p1_grid, five_receiver_instance, last_feasible_p1, write_sweep_csv, Scheme};
use bucketopt::gp::SolverConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rows = adaptive_vs_fixed(&five_receiver_instance(1.0), &default_p1_grid(), &[25.0, 100.0], &SolverConfig::default())?;

    println!("{:>5} {:>9} {:>10} {:>9} {:>8}", "p1", "scheme", "min_rate", "K1", "a1");
    for r in &rows {
        if r.feasible {
            println!("{:>5.1} {:>9} {:>10.6} {:>9.3} {:>8.4}", r.p1, r.scheme.to_string(), r.min_rate, r.k1, r.a1);
        } else {
            println!("{:>5.1} {:>9} {:>10}", r.p1, r.scheme.to_string(), "infeasible");
        }
    }
    for k in [25.0, 100.0] {
        match last_feasible_p1(&rows, Scheme::Fixed(k)) {
            Some(p) => println!("K={k}: feasible up to p1 = {p:.1} on this grid"),
            None => println!("K={k}: never feasible"),
        }
    }
    if let Some(path) = std::env::args().nth(1) {
        write_sweep_csv(std::fs::File::create(&path)?, &rows)?;
        println!("wrote {path}");
    }
    Ok(())
}
