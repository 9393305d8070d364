//! Closed-form single-receiver analytics for the adaptive bucket scheme.
//!
//! With bucket size `K`, packet rate `r`, feedback delay `D` and packet size
//! `L`, the expected in-order inter-arrival vector has one entry `K/r + D`
//! per bucket and `K - 1` zeros, which collapses the l_p metric to
//!
//! ```text
//! d(p) = (K/r + D) / (L * K^(1/p))
//! ```

use thiserror::Error;

use crate::model::Sensitivity;

#[derive(Debug, Error, PartialEq)]
pub enum DelayError {
    #[error("{name} = {value} is outside its domain ({rule})")]
    Domain {
        name: &'static str,
        value: f64,
        rule: &'static str,
    },
}

fn check(name: &'static str, value: f64, ok: bool, rule: &'static str) -> Result<(), DelayError> {
    if ok {
        Ok(())
    } else {
        Err(DelayError::Domain { name, value, rule })
    }
}

/// `(x)_[lo, hi] = min(max(lo, x), hi)`.
pub fn project(x: f64, lo: f64, hi: f64) -> f64 {
    f64::min(f64::max(lo, x), hi)
}

/// The l_p delay metric of a bucket of size `k`.
pub fn delay_metric(k: f64, rate: f64, feedback_delay: f64, packet_size: f64, p: Sensitivity) -> Result<f64, DelayError> {
    check("K", k, k >= 1.0 && k.is_finite(), "K >= 1")?;
    check("r", rate, rate > 0.0 && rate <= 1.0, "0 < r <= 1")?;
    check("D", feedback_delay, feedback_delay >= 0.0 && feedback_delay.is_finite(), "D >= 0")?;
    check("L", packet_size, packet_size > 0.0, "L > 0")?;
    if let Sensitivity::Finite(pv) = p {
        check("p", pv, pv >= 1.0, "p >= 1")?;
    }
    Ok((k / rate + feedback_delay) / (packet_size * k.powf(p.inverse())))
}

/// Delay-minimizing bucket size for a single receiver, projected onto `[1, k_max]`.
///
/// `p = 1` sends the unprojected optimum to `+inf` and `p = inf` sends it to
/// `0`, so those map to `k_max` and `1`.
pub fn optimal_bucket_size(erasure: f64, feedback_delay: f64, p: Sensitivity, k_max: f64) -> Result<f64, DelayError> {
    check("eps", erasure, (0.0..1.0).contains(&erasure), "0 <= eps < 1")?;
    check("D", feedback_delay, feedback_delay >= 0.0 && feedback_delay.is_finite(), "D >= 0")?;
    check("K_max", k_max, k_max >= 1.0, "K_max >= 1")?;
    let unprojected = match p {
        Sensitivity::Infinite => 0.0,
        Sensitivity::Finite(pv) => {
            check("p", pv, pv >= 1.0, "p >= 1")?;
            if pv == 1.0 {
                f64::INFINITY
            } else {
                (1.0 - erasure) * feedback_delay / (pv - 1.0)
            }
        }
    };
    Ok(project(unprojected, 1.0, k_max))
}

/// One point of the `d(1)` / `d(inf)` trade-off curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayPoint {
    pub k: f64,
    pub d1: f64,
    pub dinf: f64,
    pub dp: f64,
    pub p: Sensitivity,
}

/// `d(inf)` as a function of `d(1)` on the trade-off curve, or `None` when
/// the denominator `L - 1/(d1 (1 - eps))` is not positive.
pub fn tradeoff_dinf(d1: f64, erasure: f64, feedback_delay: f64, packet_size: f64) -> Option<f64> {
    let denom = packet_size - 1.0 / (d1 * (1.0 - erasure));
    (denom > 0.0).then(|| feedback_delay / denom)
}

/// Sweeps `k_grid` and emits `(d1, dinf, dp)` at each bucket size.
///
/// Every emitted point with a positive trade-off denominator and `D > 0`
/// is cross-checked against [`tradeoff_dinf`]; a mismatch beyond `1e-9`
/// relative is a bug and panics in debug builds.
pub fn tradeoff_curve(
    erasure: f64,
    feedback_delay: f64,
    packet_size: f64,
    p: Sensitivity,
    k_grid: &[f64],
) -> Result<Vec<DelayPoint>, DelayError> {
    check("eps", erasure, (0.0..1.0).contains(&erasure), "0 <= eps < 1")?;
    check("|K grid|", k_grid.len() as f64, !k_grid.is_empty(), "non-empty grid")?;
    let r = 1.0 - erasure;
    k_grid
        .iter()
        .map(|&k| {
            let d1 = delay_metric(k, r, feedback_delay, packet_size, Sensitivity::Finite(1.0))?;
            let dinf = delay_metric(k, r, feedback_delay, packet_size, Sensitivity::Infinite)?;
            let dp = delay_metric(k, r, feedback_delay, packet_size, p)?;
            if feedback_delay > 0.0 {
                if let Some(expected) = tradeoff_dinf(d1, erasure, feedback_delay, packet_size) {
                    debug_assert!(
                        (expected - dinf).abs() <= 1e-9 * dinf,
                        "trade-off identity broken at K={k}: {expected} vs {dinf}"
                    );
                }
            }
            Ok(DelayPoint { k, d1, dinf, dp, p })
        })
        .collect()
}

/// Dual of the unconstrained single-receiver delay program.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualValue {
    pub value: f64,
    pub weights: (f64, f64),
    /// The unprojected optimum lies outside `(1, k_max)`; the dual value then
    /// bounds the unconstrained problem only and does not equal the projected primal.
    pub clamped: bool,
}

/// Solves the 2x2 weight system
///
/// ```text
/// (1 - 1/p) b1 - (1/p) b2 = 0
///        b1 +        b2 = 1
/// ```
///
/// and returns `v = (1 / ((1-eps) L b1))^b1 * (D / (L b2))^b2`.
pub fn dual_value(erasure: f64, feedback_delay: f64, packet_size: f64, p: Sensitivity, k_max: f64) -> Result<DualValue, DelayError> {
    let pv = p.value();
    check("p", pv, pv > 1.0, "p > 1")?;
    check("eps", erasure, (0.0..1.0).contains(&erasure), "0 <= eps < 1")?;
    check("L", packet_size, packet_size > 0.0, "L > 0")?;
    let inv = p.inverse();
    // Cramer's rule on [[1 - 1/p, -1/p], [1, 1]] b = [0, 1].
    let (a11, a12, a21, a22) = (1.0 - inv, -inv, 1.0, 1.0);
    let det = a11 * a22 - a12 * a21;
    let b1 = (0.0 * a22 - a12 * 1.0) / det;
    let b2 = (a11 * 1.0 - a21 * 0.0) / det;

    // (c / b)^b -> 1 as b -> 0.
    let factor = |c: f64, b: f64| if b == 0.0 { 1.0 } else { (c / b).powf(b) };
    let value = factor(1.0 / ((1.0 - erasure) * packet_size), b1) * factor(feedback_delay / packet_size, b2);

    let unprojected = if p.is_infinite() {
        0.0
    } else {
        (1.0 - erasure) * feedback_delay / (pv - 1.0)
    };
    let clamped = !(unprojected > 1.0 && unprojected < k_max);
    Ok(DualValue {
        value,
        weights: (b1, b2),
        clamped,
    })
}
