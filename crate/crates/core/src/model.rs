//! Problem instances: transmitters, receivers, erasure matrix and the
//! solutions produced by the optimizers.
//!
//! Instances are loaded from JSON documents of the form
//!
//! ```json
//! {
//!   "transmitters": 1,
//!   "packet_size": 1.0,
//!   "k_max": 100.0,
//!   "receivers": [
//!     { "label": "video", "feedback_delay": 5, "p": "inf", "delay_bound": 50 },
//!     { "label": "ftp",   "feedback_delay": 5, "p": 1,     "delay_bound": 50, "fixed_k": 25 }
//!   ],
//!   "erasure": [[0.4, 0.1]]
//! }
//! ```
//!
//! `delay_bound` is measured in slots per unit of data, so the constraint a
//! receiver imposes is `(K/r + D) / (L * K^(1/p)) <= delay_bound`.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// Relative tolerance used when checking solutions.
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("invalid instance: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// A single broken rule, naming the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Delay sensitivity `p` of the l_p delay metric. `Infinite` selects the max
/// norm and is never approximated by a large finite exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sensitivity {
    Finite(f64),
    Infinite,
}

impl Sensitivity {
    pub fn finite(p: f64) -> Self {
        if p.is_infinite() && p > 0.0 {
            Sensitivity::Infinite
        } else {
            Sensitivity::Finite(p)
        }
    }

    /// `1/p`, which is `0` for the max norm.
    pub fn inverse(self) -> f64 {
        match self {
            Sensitivity::Finite(p) => 1.0 / p,
            Sensitivity::Infinite => 0.0,
        }
    }

    /// The value as an `f64`, with `Infinite` mapped to `f64::INFINITY`.
    pub fn value(self) -> f64 {
        match self {
            Sensitivity::Finite(p) => p,
            Sensitivity::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Sensitivity::Infinite)
    }
}

impl fmt::Display for Sensitivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sensitivity::Finite(p) => write!(f, "{p}"),
            Sensitivity::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for Sensitivity {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Sensitivity::Finite(p) => s.serialize_f64(*p),
            Sensitivity::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Sensitivity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct SensVisitor;

        impl<'de> Visitor<'de> for SensVisitor {
            type Value = Sensitivity;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number or the string \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Sensitivity, E> {
                Ok(Sensitivity::finite(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Sensitivity, E> {
                Ok(Sensitivity::Finite(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Sensitivity, E> {
                Ok(Sensitivity::Finite(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Sensitivity, E> {
                match v.trim() {
                    "inf" | "Inf" | "infinity" | "Infinity" => Ok(Sensitivity::Infinite),
                    other => other
                        .parse::<f64>()
                        .map(Sensitivity::finite)
                        .map_err(|_| E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }

        d.deserialize_any(SensVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceiverSpec {
    pub label: String,
    /// Feedback delay `D` in slots.
    pub feedback_delay: f64,
    pub p: Sensitivity,
    /// Maximum acceptable `d(p)`, in slots per unit of data.
    pub delay_bound: f64,
    /// Freezes this receiver's bucket size instead of optimizing it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_k: Option<f64>,
}

impl ReceiverSpec {
    pub fn new(label: impl Into<String>, feedback_delay: f64, p: Sensitivity, delay_bound: f64) -> Self {
        ReceiverSpec {
            label: label.into(),
            feedback_delay,
            p,
            delay_bound,
            fixed_k: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkInstance {
    pub transmitters: usize,
    pub packet_size: f64,
    pub k_max: f64,
    pub receivers: Vec<ReceiverSpec>,
    /// `erasure[i][j]` is the erasure probability from transmitter `i` to receiver `j`.
    pub erasure: Vec<Vec<f64>>,
}

impl NetworkInstance {
    /// One access point serving `receivers` over the given erasure vector.
    pub fn single_ap(receivers: Vec<ReceiverSpec>, erasure: Vec<f64>, packet_size: f64, k_max: f64) -> Self {
        NetworkInstance {
            transmitters: 1,
            packet_size,
            k_max,
            receivers,
            erasure: vec![erasure],
        }
    }

    pub fn num_receivers(&self) -> usize {
        self.receivers.len()
    }

    pub fn num_transmitters(&self) -> usize {
        self.transmitters
    }

    /// Success probability `1 - eps_ij`.
    pub fn delivery(&self, i: usize, j: usize) -> f64 {
        1.0 - self.erasure[i][j]
    }

    /// Pins every receiver's bucket size to `k`.
    pub fn with_fixed_k(&self, k: f64) -> Self {
        let mut out = self.clone();
        for r in &mut out.receivers {
            r.fixed_k = Some(k);
        }
        out
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    pub fn to_json(&self) -> Result<String, ModelError> {
        serde_json::to_string_pretty(self).map_err(|e| ModelError::Serialize(e.to_string()))
    }
}

/// Lists every broken invariant of `inst`; empty means valid.
pub fn validate(inst: &NetworkInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    if inst.transmitters < 1 {
        out.push(Violation::new("transmitters", "must be >= 1"));
    }
    if inst.receivers.is_empty() {
        out.push(Violation::new("receivers", "must contain at least one receiver"));
    }
    if !(inst.packet_size > 0.0 && inst.packet_size.is_finite()) {
        out.push(Violation::new("packet_size", "must be a positive finite number"));
    }
    if !(inst.k_max >= 1.0 && inst.k_max.is_finite()) {
        out.push(Violation::new("k_max", "must be a finite number >= 1"));
    }
    for (j, r) in inst.receivers.iter().enumerate() {
        let f = |name: &str| format!("receivers[{j}].{name}");
        if !(r.feedback_delay >= 0.0 && r.feedback_delay.is_finite()) {
            out.push(Violation::new(f("feedback_delay"), "must be finite and >= 0"));
        }
        match r.p {
            Sensitivity::Finite(p) if !(p >= 1.0) || p.is_nan() => {
                out.push(Violation::new(f("p"), "must be >= 1"));
            }
            _ => {}
        }
        if !(r.delay_bound > 0.0) {
            out.push(Violation::new(f("delay_bound"), "must be > 0"));
        }
        if let Some(k) = r.fixed_k {
            if !(k >= 1.0 && k <= inst.k_max) {
                out.push(Violation::new(f("fixed_k"), "must lie in [1, k_max]"));
            }
        }
    }
    if inst.erasure.len() != inst.transmitters {
        out.push(Violation::new(
            "erasure",
            format!("expected {} rows, found {}", inst.transmitters, inst.erasure.len()),
        ));
    }
    for (i, row) in inst.erasure.iter().enumerate() {
        if row.len() != inst.receivers.len() {
            out.push(Violation::new(
                format!("erasure[{i}]"),
                format!("expected {} columns, found {}", inst.receivers.len(), row.len()),
            ));
        }
        for (j, &e) in row.iter().enumerate() {
            if !(0.0..1.0).contains(&e) {
                out.push(Violation::new(format!("erasure[{i}][{j}]"), "must lie in [0, 1)"));
            }
        }
    }
    out
}

/// Parses and validates a JSON instance document.
pub fn load_instance(text: &str) -> Result<NetworkInstance, ModelError> {
    let inst: NetworkInstance = serde_json::from_str(text).map_err(|e| ModelError::Parse {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    let v = validate(&inst);
    if v.is_empty() {
        Ok(inst)
    } else {
        Err(ModelError::Invalid(v))
    }
}

pub fn load_instance_file(path: impl AsRef<std::path::Path>) -> Result<NetworkInstance, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ModelError::Parse {
        line: 0,
        column: 0,
        msg: format!("{}: {e}", path.display()),
    })?;
    load_instance(&text)
}

/// Optimizer output in instance coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub bucket_sizes: Vec<f64>,
    /// `scheduling[i][j]`: probability that transmitter `i` serves flow `j` in a slot.
    pub scheduling: Vec<Vec<f64>>,
    pub rates: Vec<f64>,
    /// Average data rates `R_j`; only the multi-AP program carries them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aux_rates: Option<Vec<f64>>,
    pub objective: f64,
}

impl Solution {
    /// Data rate `L K / (K/r + D)` delivered to receiver `j`.
    pub fn data_rate(&self, inst: &NetworkInstance, j: usize) -> f64 {
        let k = self.bucket_sizes[j];
        inst.packet_size * k / (k / self.rates[j] + inst.receivers[j].feedback_delay)
    }

    pub fn min_data_rate(&self, inst: &NetworkInstance) -> f64 {
        (0..inst.num_receivers())
            .map(|j| self.data_rate(inst, j))
            .fold(f64::INFINITY, f64::min)
    }

    /// Transmission rate `sum_i a_ij (1 - eps_ij)` offered to receiver `j`.
    pub fn offered_rate(&self, inst: &NetworkInstance, j: usize) -> f64 {
        (0..inst.num_transmitters())
            .map(|i| self.scheduling[i][j] * inst.delivery(i, j))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub ok: bool,
    pub violations: Vec<Violation>,
}

/// Checks every solution invariant at relative tolerance `tol`.
pub fn check_solution(inst: &NetworkInstance, sol: &Solution, tol: f64) -> Result<CheckReport, ModelError> {
    let (w, m) = (inst.num_transmitters(), inst.num_receivers());
    if sol.bucket_sizes.len() != m || sol.rates.len() != m {
        return Err(ModelError::Dimension(format!(
            "expected {m} bucket sizes and rates, found {} and {}",
            sol.bucket_sizes.len(),
            sol.rates.len()
        )));
    }
    if sol.scheduling.len() != w || sol.scheduling.iter().any(|row| row.len() != m) {
        return Err(ModelError::Dimension(format!("scheduling must be {w}x{m}")));
    }
    let mut v = Vec::new();
    for (i, row) in sol.scheduling.iter().enumerate() {
        for (j, &a) in row.iter().enumerate() {
            if !(-tol..=1.0 + tol).contains(&a) {
                v.push(Violation::new(format!("scheduling[{i}][{j}]"), "must lie in [0, 1]"));
            }
        }
        let total: f64 = row.iter().sum();
        if total > 1.0 + tol {
            v.push(Violation::new(format!("scheduling[{i}]"), format!("row sums to {total} > 1")));
        }
    }
    for j in 0..m {
        let k = sol.bucket_sizes[j];
        if k < 1.0 - tol || k > inst.k_max * (1.0 + tol) {
            v.push(Violation::new(format!("bucket_sizes[{j}]"), "must lie in [1, k_max]"));
        }
        let r = sol.rates[j];
        if !(r > 0.0) {
            v.push(Violation::new(format!("rates[{j}]"), "must be positive"));
            continue;
        }
        let offered = sol.offered_rate(inst, j);
        if r > offered + tol * offered.max(1.0) {
            v.push(Violation::new(
                format!("rates[{j}]"),
                format!("rate {r} exceeds offered rate {offered}"),
            ));
        }
        let rx = &inst.receivers[j];
        let d = crate::delay::delay_metric(k.max(1.0), r.min(1.0), rx.feedback_delay, inst.packet_size, rx.p);
        match d {
            Ok(d) if d <= rx.delay_bound * (1.0 + tol) => {}
            Ok(d) => v.push(Violation::new(
                format!("receivers[{j}]"),
                format!("delay {d} exceeds bound {}", rx.delay_bound),
            )),
            Err(e) => v.push(Violation::new(format!("receivers[{j}]"), e.to_string())),
        }
    }
    Ok(CheckReport {
        ok: v.is_empty(),
        violations: v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_receiver() -> NetworkInstance {
        NetworkInstance::single_ap(
            vec![ReceiverSpec::new("r1", 5.0, Sensitivity::Finite(2.0), 6.0)],
            vec![0.4],
            1.0,
            100.0,
        )
    }

    #[test]
    fn single_receiver_is_valid() {
        assert!(validate(&one_receiver()).is_empty());
    }

    #[test]
    fn erasure_one_is_rejected() {
        let mut inst = one_receiver();
        inst.erasure[0][0] = 1.0;
        let v = validate(&inst);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "erasure[0][0]");
    }

    #[test]
    fn sensitivity_below_one_is_rejected() {
        let mut inst = one_receiver();
        inst.receivers[0].p = Sensitivity::Finite(0.5);
        let v = validate(&inst);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "receivers[0].p");
    }

    #[test]
    fn fixed_k_outside_range_is_rejected() {
        let mut inst = one_receiver();
        inst.receivers[0].fixed_k = Some(150.0);
        assert_eq!(validate(&inst).len(), 1);
    }

    #[test]
    fn five_receiver_config_loads() {
        let text = r#"{
            "transmitters": 1, "packet_size": 1, "k_max": 100,
            "receivers": [
                {"label": "r1", "feedback_delay": 5, "p": 2.5, "delay_bound": 50},
                {"label": "r2", "feedback_delay": 5, "p": 1, "delay_bound": 50},
                {"label": "r3", "feedback_delay": 5, "p": 1, "delay_bound": 50},
                {"label": "r4", "feedback_delay": 5, "p": 1, "delay_bound": 50},
                {"label": "r5", "feedback_delay": 5, "p": "inf", "delay_bound": 50}
            ],
            "erasure": [[0.4, 0.1, 0.15, 0.2, 0.25]]
        }"#;
        let inst = load_instance(text).unwrap();
        assert_eq!(inst.num_receivers(), 5);
        assert_eq!(inst.erasure[0], vec![0.4, 0.1, 0.15, 0.2, 0.25]);
        assert!(inst.receivers.iter().all(|r| r.feedback_delay == 5.0 && r.delay_bound == 50.0));
        assert_eq!(inst.receivers[4].p, Sensitivity::Infinite);
        assert_eq!(inst.packet_size, 1.0);
    }

    #[test]
    fn empty_receivers_is_an_error() {
        let text = r#"{"transmitters": 1, "packet_size": 1, "k_max": 10, "receivers": [], "erasure": [[]]}"#;
        match load_instance(text) {
            Err(ModelError::Invalid(v)) => assert!(v.iter().any(|v| v.field == "receivers")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn two_by_three_instance_is_valid() {
        let text = r#"{
            "transmitters": 2, "packet_size": 1, "k_max": 100,
            "receivers": [
                {"label": "a", "feedback_delay": 5, "p": 1, "delay_bound": 50},
                {"label": "b", "feedback_delay": 5, "p": 2, "delay_bound": 50},
                {"label": "c", "feedback_delay": 5, "p": 4, "delay_bound": 50}
            ],
            "erasure": [[0.1, 0.2, 0.3], [0.3, 0.2, 0.1]]
        }"#;
        let inst = load_instance(text).unwrap();
        assert_eq!((inst.num_transmitters(), inst.num_receivers()), (2, 3));
    }

    #[test]
    fn parse_error_reports_line() {
        let text = "{\n \"transmitters\": 1,\n \"packet_size\": oops\n}";
        match load_instance(text) {
            Err(ModelError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    fn check_fixture(a: f64, d_hat: f64) -> (NetworkInstance, Solution) {
        let mut inst = one_receiver();
        inst.receivers[0].delay_bound = d_hat;
        let sol = Solution {
            bucket_sizes: vec![3.0],
            scheduling: vec![vec![a]],
            rates: vec![0.6],
            aux_rates: None,
            objective: 0.0,
        };
        (inst, sol)
    }

    #[test]
    fn check_accepts_delay_within_bound() {
        let (inst, sol) = check_fixture(1.0, 6.0);
        let rep = check_solution(&inst, &sol, DEFAULT_TOL).unwrap();
        assert!(rep.ok, "{:?}", rep.violations);
    }

    #[test]
    fn check_flags_delay_violation() {
        let (inst, sol) = check_fixture(1.0, 5.0);
        let rep = check_solution(&inst, &sol, DEFAULT_TOL).unwrap();
        assert!(!rep.ok);
        assert_eq!(rep.violations.len(), 1);
        assert!(rep.violations[0].rule.contains("delay"));
    }

    #[test]
    fn check_flags_scheduling_above_one() {
        let (inst, sol) = check_fixture(1.2, 6.0);
        let rep = check_solution(&inst, &sol, DEFAULT_TOL).unwrap();
        assert!(!rep.ok);
        assert!(rep.violations.iter().any(|v| v.field.starts_with("scheduling")));
    }

    #[test]
    fn check_rejects_wrong_dimensions() {
        let (inst, mut sol) = check_fixture(1.0, 6.0);
        sol.rates.push(0.1);
        assert!(matches!(check_solution(&inst, &sol, DEFAULT_TOL), Err(ModelError::Dimension(_))));
    }
}
