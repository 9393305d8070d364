//! The d(1) versus d(inf) trade-off as the bucket size grows.
//!
//! Larger buckets amortize the feedback delay (d(1) falls towards
//! `1/(L(1-eps))`) but make each burst wait longer (d(inf) grows).
//!
//! ```text
//! cargo run --example tradeoff_curve [out.csv]
//! ```

use bucketopt::delay::tradeoff_dinf;
use bucketopt::experiments::{integer_k_grid, tradeoff_curves, write_tradeoff_csv};
use bucketopt::model::Sensitivity;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let eps = 0.4;
    let curves = tradeoff_curves(eps, 1.0, &[2.0, 5.0, 10.0], Sensitivity::Finite(2.0), &integer_k_grid(200))?;
    for c in &curves {
        println!("D = {}: d1 asymptote {:.4}", c.feedback_delay, c.d1_asymptote);
        println!("  {:>4} {:>9} {:>10} {:>14}", "K", "d1", "dinf", "dinf from d1");
        for pt in c.points.iter().filter(|pt| [1.0, 2.0, 5.0, 10.0, 50.0, 200.0].contains(&pt.k)) {
            let from_d1 = tradeoff_dinf(pt.d1, eps, c.feedback_delay, 1.0).map_or("-".into(), |v| format!("{v:.4}"));
            println!("  {:>4} {:>9.4} {:>10.4} {:>14}", pt.k, pt.d1, pt.dinf, from_d1);
        }
    }
    if let Some(path) = std::env::args().nth(1) {
        write_tradeoff_csv(std::fs::File::create(&path)?, &curves)?;
        println!("wrote {path}");
    }
    Ok(())
}
