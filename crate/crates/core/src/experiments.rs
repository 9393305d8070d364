//! Parameter sweeps: the `d(1)`/`d(inf)` trade-off and
//! adaptive versus fixed bucket sizes on the five-receiver instance.

use std::io::Write;

use crate::delay::{tradeoff_curve, DelayError, DelayPoint};
use crate::export::{fmt_sig, write_rows};
use crate::gp::SolverConfig;
use crate::model::{NetworkInstance, ReceiverSpec, Sensitivity};
use crate::programs::{solve_single_ap, Objective, ProgramError};

/// Erasure probabilities of the five-receiver single-AP instance.
pub const FIVE_RECEIVER_ERASURE: [f64; 5] = [0.4, 0.1, 0.15, 0.2, 0.25];

/// Five receivers behind one access point: `D = 5`, `L = 1`, `d_hat = 50`,
/// `K_max = 100`; receiver 1 has sensitivity `p1`, the rest `p = 1`.
pub fn five_receiver_instance(p1: f64) -> NetworkInstance {
    let receivers = (0..5)
        .map(|j| {
            let p = if j == 0 { p1 } else { 1.0 };
            ReceiverSpec::new(format!("t{}", j + 1), 5.0, Sensitivity::Finite(p), 50.0)
        })
        .collect();
    NetworkInstance::single_ap(receivers, FIVE_RECEIVER_ERASURE.to_vec(), 1.0, 100.0)
}

/// `1.0, 1.2, ..., 4.0`.
pub fn default_p1_grid() -> Vec<f64> {
    (0..=15).map(|i| 1.0 + 0.2 * i as f64).collect()
}

/// `1, 2, ..., k_max`.
pub fn integer_k_grid(k_max: usize) -> Vec<f64> {
    (1..=k_max).map(|k| k as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffCurve {
    pub feedback_delay: f64,
    /// Limit of `d(1)` as `K` grows: `1 / ((1 - eps) L)`.
    pub d1_asymptote: f64,
    pub points: Vec<DelayPoint>,
}

/// One trade-off curve per feedback delay.
pub fn tradeoff_curves(
    erasure: f64,
    packet_size: f64,
    delays: &[f64],
    p: Sensitivity,
    k_grid: &[f64],
) -> Result<Vec<TradeoffCurve>, DelayError> {
    delays
        .iter()
        .map(|&d| {
            Ok(TradeoffCurve {
                feedback_delay: d,
                d1_asymptote: 1.0 / ((1.0 - erasure) * packet_size),
                points: tradeoff_curve(erasure, d, packet_size, p, k_grid)?,
            })
        })
        .collect()
}

pub fn write_tradeoff_csv<W: Write>(out: W, curves: &[TradeoffCurve]) -> csv::Result<()> {
    let rows: Vec<Vec<String>> = curves
        .iter()
        .flat_map(|c| {
            c.points.iter().map(move |pt| {
                vec![
                    fmt_sig(c.feedback_delay),
                    fmt_sig(pt.k),
                    fmt_sig(pt.d1),
                    fmt_sig(pt.dinf),
                    fmt_sig(pt.dp),
                    pt.p.to_string(),
                    fmt_sig(c.d1_asymptote),
                ]
            })
        })
        .collect();
    write_rows(out, &["D", "K", "d1", "dinf", "dp", "p", "d1_asymptote"], &rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Adaptive,
    Fixed(f64),
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Adaptive => f.write_str("adaptive"),
            Scheme::Fixed(k) => write!(f, "K={k}"),
        }
    }
}

/// One `(p1, scheme)` cell of the adaptive-versus-fixed sweep. Rate, `K1`
/// and `a1` are `NaN` when the scheme is infeasible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub p1: f64,
    pub scheme: Scheme,
    pub min_rate: f64,
    pub k1: f64,
    pub a1: f64,
    pub feasible: bool,
}

/// Solves the max-min program for every `p1` and scheme. `base` supplies
/// everything except receiver 1's sensitivity and the bucket sizes.
pub fn adaptive_vs_fixed(
    base: &NetworkInstance,
    p1_grid: &[f64],
    fixed_ks: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<SweepRow>, ProgramError> {
    let schemes: Vec<Scheme> = std::iter::once(Scheme::Adaptive)
        .chain(fixed_ks.iter().map(|&k| Scheme::Fixed(k)))
        .collect();
    let mut rows = Vec::with_capacity(p1_grid.len() * schemes.len());
    for &p1 in p1_grid {
        let mut inst = base.clone();
        inst.receivers[0].p = Sensitivity::Finite(p1);
        for &scheme in &schemes {
            let inst = match scheme {
                Scheme::Adaptive => inst.clone(),
                Scheme::Fixed(k) => inst.with_fixed_k(k),
            };
            let row = match solve_single_ap(&inst, Objective::MinRate, cfg) {
                Ok((sol, _)) => SweepRow {
                    p1,
                    scheme,
                    min_rate: sol.min_data_rate(&inst),
                    k1: sol.bucket_sizes[0],
                    a1: sol.scheduling[0][0],
                    feasible: true,
                },
                Err(ProgramError::Infeasible { .. }) => SweepRow {
                    p1,
                    scheme,
                    min_rate: f64::NAN,
                    k1: f64::NAN,
                    a1: f64::NAN,
                    feasible: false,
                },
                Err(e) => return Err(e),
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> csv::Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_sig(r.p1),
                r.scheme.to_string(),
                fmt_sig(r.min_rate),
                fmt_sig(r.k1),
                fmt_sig(r.a1),
                r.feasible.to_string(),
            ]
        })
        .collect();
    write_rows(out, &["p1", "scheme", "min_rate", "K1", "a1", "feasible"], &rows)
}

/// Largest `p1` on the grid at which `scheme` is feasible, if any.
pub fn last_feasible_p1(rows: &[SweepRow], scheme: Scheme) -> Option<f64> {
    rows.iter()
        .filter(|r| r.scheme == scheme && r.feasible)
        .map(|r| r.p1)
        .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))))
}
