//! Delay-optimal bucket size for one receiver, across sensitivities.
//!
//! Prints `K*`, `d(p)` at `K*`, the dual value, and how much worse the two
//! naive choices `K = 1` and `K = K_max` are.
//!
//! ```text
//! cargo run --example single_receiver [eps] [D]
//! ```

use bucketopt::delay::{delay_metric, dual_value, optimal_bucket_size};
use bucketopt::model::Sensitivity;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let eps: f64 = args.next().map_or(Ok(0.4), |s| s.parse())?;
    let d: f64 = args.next().map_or(Ok(5.0), |s| s.parse())?;
    let (l, k_max) = (1.0, 100.0);
    println!("eps = {eps}, D = {d}, L = {l}, K_max = {k_max}");
    println!("{:>5} {:>9} {:>10} {:>10} {:>10} {:>10}", "p", "K*", "d(p)", "dual", "d(K=1)", "d(K_max)");
    for p in [1.0, 1.5, 2.0, 3.0, 5.0, 10.0].map(Sensitivity::Finite).into_iter().chain([Sensitivity::Infinite]) {
        let k = optimal_bucket_size(eps, d, p, k_max)?;
        let dp = delay_metric(k, 1.0 - eps, d, l, p)?;
        let dual = match p.value() > 1.0 {
            true => {
                let v = dual_value(eps, d, l, p, k_max)?;
                format!("{:.5}{}", v.value, if v.clamped { "*" } else { "" })
            }
            false => "-".into(),
        };
        println!(
            "{:>5} {:>9.4} {:>10.5} {:>10} {:>10.5} {:>10.5}",
            p.to_string(),
            k,
            dp,
            dual,
            delay_metric(1.0, 1.0 - eps, d, l, p)?,
            delay_metric(k_max, 1.0 - eps, d, l, p)?
        );
    }
    println!("* K* is clamped to [1, K_max]; the dual value then only bounds d(p) from below");
    Ok(())
}
