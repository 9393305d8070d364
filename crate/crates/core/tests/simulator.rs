use bucketopt::model::{NetworkInstance, ReceiverSpec, Sensitivity, Solution};
use bucketopt::sim::{compare_analytic, run_session, write_flow_trace_csv, CodingConfig, SessionConfig, SimError};

fn two_flow_session(packets: usize, reps: usize) -> SessionConfig {
    let instance = NetworkInstance {
        transmitters: 2,
        packet_size: 1.0,
        k_max: 100.0,
        receivers: vec![
            ReceiverSpec::new("t1", 4.0, Sensitivity::Finite(2.0), 50.0),
            ReceiverSpec::new("t2", 2.0, Sensitivity::Infinite, 50.0),
        ],
        erasure: vec![vec![0.2, 0.3], vec![0.4, 0.1]],
    };
    let solution = Solution {
        bucket_sizes: vec![5.2, 2.0],
        scheduling: vec![vec![0.6, 0.3], vec![0.2, 0.7]],
        rates: vec![0.56, 0.84],
        aux_rates: None,
        objective: f64::NAN,
    };
    SessionConfig {
        instance,
        solution,
        packets_per_flow: packets,
        replications: reps,
    }
}

/// Exact expected bucket time with ideal decoding: each transmitter `i`
/// independently lands a packet of flow `j` with probability
/// `a_ij (1 - eps_ij)`, so up to `W` packets arrive per slot.
fn markov_bucket_time(inst: &NetworkInstance, sol: &Solution, j: usize, k: usize) -> f64 {
    // Distribution of arrivals per slot.
    let mut dist = vec![1.0];
    for i in 0..inst.num_transmitters() {
        let q = sol.scheduling[i][j] * inst.delivery(i, j);
        let mut next = vec![0.0; dist.len() + 1];
        for (n, &p) in dist.iter().enumerate() {
            next[n] += p * (1.0 - q);
            next[n + 1] += p * q;
        }
        dist = next;
    }
    let mut e = vec![0.0; k + 1];
    for n in (0..k).rev() {
        let rest: f64 = dist.iter().enumerate().skip(1).map(|(m, p)| p * e[(n + m).min(k)]).sum();
        e[n] = (1.0 + rest) / (1.0 - dist[0]);
    }
    e[0]
}

#[test]
fn multi_transmitter_session_matches_markov_chain() {
    let cfg = two_flow_session(20_000, 4);
    let coding = CodingConfig { seed: 3, ideal_decoding: true, ..CodingConfig::default() };
    let trace = run_session(&cfg, &coding).unwrap();
    assert_eq!(trace.bucket_sizes, vec![5, 2]);
    let report = compare_analytic(&trace, &cfg.instance, &cfg.solution).unwrap();
    assert!(report.telescoping_ok());
    for f in &report.flows {
        assert!(f.in_order);
        // Service rates: 0.6*0.8 + 0.2*0.6 and 0.3*0.7 + 0.7*0.9.
        assert!((f.service_rate - [0.6, 0.84][f.flow]).abs() < 1e-12);
        let exact = markov_bucket_time(&cfg.instance, &cfg.solution, f.flow, f.k_rounded);
        assert!((f.mean_bucket_time - exact).abs() <= 4.0 * f.bucket_time_ci, "flow {}: {} vs {exact}", f.flow, f.mean_bucket_time);
        // The renewal formula K/r ignores arrivals wasted in the decoding slot.
        assert!(exact > f.analytic_bucket_time);
        let d = cfg.instance.receivers[f.flow].feedback_delay;
        for row in &f.metrics {
            let predicted = (exact + d) / (cfg.instance.packet_size * (f.k_rounded as f64).powf(row.p.inverse()));
            assert!((row.empirical - predicted).abs() <= 4.0 * row.ci_half_width, "flow {} p {}", f.flow, row.p);
        }
    }
}

#[test]
fn confidence_interval_shrinks_like_root_n() {
    let ci = |reps| {
        let cfg = two_flow_session(8_000, reps);
        let trace = run_session(&cfg, &CodingConfig { seed: 5, ..CodingConfig::default() }).unwrap();
        compare_analytic(&trace, &cfg.instance, &cfg.solution).unwrap().flows[0].bucket_time_ci
    };
    let ratio = ci(2) / ci(8);
    assert!((ratio - 2.0).abs() < 0.3, "{ratio}");
}

#[test]
fn seeds_are_reproducible_and_distinct() {
    let cfg = two_flow_session(2_000, 3);
    let a = run_session(&cfg, &CodingConfig { seed: 11, ..CodingConfig::default() }).unwrap();
    let b = run_session(&cfg, &CodingConfig { seed: 11, ..CodingConfig::default() }).unwrap();
    let c = run_session(&cfg, &CodingConfig { seed: 12, ..CodingConfig::default() }).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    // Replications use different streams.
    assert_ne!(a.replications[0].flows[0].buckets, a.replications[1].flows[0].buckets);
}

#[test]
fn trace_csv_lists_every_bucket() {
    let cfg = two_flow_session(100, 2);
    let trace = run_session(&cfg, &CodingConfig::default()).unwrap();
    let mut buf = Vec::new();
    write_flow_trace_csv(&mut buf, &trace, 1).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "replication,bucket_index,bucket_size,start_slot,completion_slot,delta_t_first");
    assert_eq!(lines.count(), 2 * 50);
}

#[test]
fn rejects_mismatched_configs() {
    let mut cfg = two_flow_session(100, 1);
    cfg.solution.scheduling[0][0] = 0.9;
    assert!(matches!(run_session(&cfg, &CodingConfig::default()), Err(SimError::Config(_))));
    let cfg = two_flow_session(100, 1);
    assert!(matches!(
        run_session(&cfg, &CodingConfig { field_size: 16, ..CodingConfig::default() }),
        Err(SimError::Config(_))
    ));
    let mut cfg = two_flow_session(100, 1);
    cfg.instance.receivers[0].feedback_delay = 2.5;
    assert!(matches!(run_session(&cfg, &CodingConfig::default()), Err(SimError::Config(_))));
}
