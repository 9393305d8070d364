//! Two access points, three receivers: successive condensation of the
//! rate-product program.
//!
//! Each round replaces every `R_j <= sum_i a_ij (1 - eps_ij)` by its AM-GM
//! monomial bound at the current point and solves the resulting GP.
//!
//! ```text
//! cargo run --release --example multi_ap_condensation [convergence.csv]
//! ```

use bucketopt::gp::SolverConfig;
use bucketopt::model::{check_solution, NetworkInstance, ReceiverSpec, Sensitivity};
use bucketopt::programs::{build_multi_ap, solve_multi_ap, Objective, StopRule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inst = NetworkInstance {
        transmitters: 2,
        packet_size: 1.0,
        k_max: 100.0,
        receivers: vec![
            ReceiverSpec::new("video", 5.0, Sensitivity::Infinite, 30.0),
            ReceiverSpec::new("voice", 5.0, Sensitivity::Finite(4.0), 50.0),
            ReceiverSpec::new("bulk", 5.0, Sensitivity::Finite(1.0), 50.0),
        ],
        erasure: vec![vec![0.2, 0.35, 0.45], vec![0.4, 0.15, 0.3]],
    };
    let prog = build_multi_ap(&inst)?;
    println!("{} posynomial constraints, {} signomial rate constraints", prog.posynomial_constraints.len(), prog.rate_constraints.len());
    for c in &prog.rate_constraints {
        println!("  {c} <= 0");
    }

    let (sol, state) = solve_multi_ap(&inst, Objective::RateProduct, &SolverConfig::default(), &StopRule::default())?;
    println!("{} rounds, converged: {}", state.t, state.converged);
    for (t, z) in state.history.iter().enumerate().filter(|(t, _)| t % 5 == 0 || *t == state.t) {
        println!("  t = {t:>2}  prod 1/R_j = {z:.6}  buckets {:?}", state.bucket_history[t].iter().map(|k| format!("{k:.2}")).collect::<Vec<_>>());
    }
    let tg = state.tangency(&prog)?;
    println!("tangency at the last point: |f - g| {:.2e}, gradient gap {:.2e}", tg.value_gap, tg.gradient_gap);
    println!("{:>6} {:>8} {:>8} {:>8}  schedule (AP1, AP2)", "flow", "K", "r", "R");
    for (j, rx) in inst.receivers.iter().enumerate() {
        println!(
            "{:>6} {:>8.3} {:>8.4} {:>8.4}  ({:.4}, {:.4})",
            rx.label,
            sol.bucket_sizes[j],
            sol.rates[j],
            sol.data_rate(&inst, j),
            sol.scheduling[0][j],
            sol.scheduling[1][j]
        );
    }
    println!("feasible for the original program: {}", check_solution(&inst, &sol, 1e-6)?.ok);
    if let Some(path) = std::env::args().nth(1) {
        state.write_trace_csv(std::fs::File::create(&path)?)?;
        println!("wrote {path}");
    }
    Ok(())
}
