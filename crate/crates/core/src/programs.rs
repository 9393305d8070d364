//! Optimization programs built from a [`NetworkInstance`].
//!
//! * One access point: maximize the minimum data rate (or the rate product)
//!   over bucket sizes `K_j`, packet rates `r_j` and scheduling shares `a_j`.
//!   The max-min objective is lowered with an auxiliary variable `x` and the
//!   constraints `x (K_j/r_j + D_j) / (L K_j) <= 1`, so the whole program is
//!   a standard-form GP.
//! * Several access points: the rate constraint `r_j <= sum_i a_ij (1 - eps_ij)`
//!   is a signomial. [`solve_multi_ap`] replaces it by its tangent monomial
//!   lower bound at the current schedule and re-solves until the objective
//!   stops improving.

use std::io::Write;

use thiserror::Error;

use crate::delay::project;
use crate::gp::{self, GpError, SolveOutcome, SolverConfig, Status};
use crate::model::{NetworkInstance, Solution, Violation};
use crate::posy::{condense, Assignment, GpProblem, Monomial, PosyError, Posynomial, Signomial};

#[derive(Debug, Error)]
pub enum ProgramError {
    #[error("invalid instance: {0:?}")]
    Invalid(Vec<Violation>),
    #[error("the single-AP program needs exactly one transmitter, got {0}")]
    NotSingleAp(usize),
    #[error("program is infeasible (phase-I value {phase1_value})")]
    Infeasible { phase1_value: f64 },
    #[error("solver stopped with status {0:?}")]
    Solver(Status),
    #[error(transparent)]
    Gp(#[from] GpError),
    #[error(transparent)]
    Posy(#[from] PosyError),
}

/// Which system utility the optimizer maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    /// Maximize `min_j R_j`.
    #[default]
    MinRate,
    /// Maximize `prod_j R_j`.
    RateProduct,
}

pub fn k_var(j: usize) -> String {
    format!("K[{j}]")
}

pub fn r_var(j: usize) -> String {
    format!("r[{j}]")
}

/// Average data-rate variable of the multi-AP program.
pub fn big_r_var(j: usize) -> String {
    format!("R[{j}]")
}

/// Scheduling share of transmitter `i` for flow `j`.
pub fn a_var(i: usize, j: usize) -> String {
    format!("a[{i},{j}]")
}

pub const MIN_RATE_VAR: &str = "x";

fn mono(c: f64, exps: &[(&str, f64)]) -> Result<Monomial, PosyError> {
    Monomial::new(c, exps.iter().map(|(n, e)| (n.to_string(), *e)))
}

fn posy(terms: Vec<Monomial>) -> Posynomial {
    Posynomial::new(terms).expect("at least one term")
}

fn ensure_valid(inst: &NetworkInstance) -> Result<(), ProgramError> {
    let v = inst.validate();
    if v.is_empty() {
        Ok(())
    } else {
        Err(ProgramError::Invalid(v))
    }
}

/// `(K^(1-1/p) r^-1 + D K^(-1/p)) / (L d_hat) <= 1`.
fn delay_constraint(inst: &NetworkInstance, j: usize) -> Result<Posynomial, PosyError> {
    let rx = &inst.receivers[j];
    let scale = 1.0 / (inst.packet_size * rx.delay_bound);
    let inv = rx.p.inverse();
    let (k, r) = (k_var(j), r_var(j));
    let mut terms = vec![mono(scale, &[(&k, 1.0 - inv), (&r, -1.0)])?];
    if rx.feedback_delay > 0.0 {
        terms.push(mono(scale * rx.feedback_delay, &[(&k, -inv)])?);
    }
    Ok(posy(terms))
}

/// `y (K/r + D) / (L K) <= 1`, i.e. `y` is at most the data rate of flow `j`.
fn rate_bound(inst: &NetworkInstance, j: usize, y: &str) -> Result<Posynomial, PosyError> {
    let rx = &inst.receivers[j];
    let l = inst.packet_size;
    let mut terms = vec![mono(1.0 / l, &[(y, 1.0), (&r_var(j), -1.0)])?];
    if rx.feedback_delay > 0.0 {
        terms.push(mono(rx.feedback_delay / l, &[(y, 1.0), (&k_var(j), -1.0)])?);
    }
    Ok(posy(terms))
}

/// Bucket-size bounds, or an equality when the size is pinned.
fn bucket_constraints(
    inst: &NetworkInstance,
    j: usize,
    ineq: &mut Vec<Posynomial>,
    eq: &mut Vec<Monomial>,
) -> Result<(), PosyError> {
    let k = k_var(j);
    match inst.receivers[j].fixed_k {
        Some(fixed) => eq.push(mono(1.0 / fixed, &[(&k, 1.0)])?),
        None if inst.k_max == 1.0 => eq.push(mono(1.0, &[(&k, 1.0)])?),
        None => {
            ineq.push(mono(1.0 / inst.k_max, &[(&k, 1.0)])?.into());
            ineq.push(mono(1.0, &[(&k, -1.0)])?.into());
        }
    }
    Ok(())
}

/// The single-AP GP together with the map back to a [`Solution`].
#[derive(Debug, Clone, PartialEq)]
pub struct SingleApProgram {
    pub gp: GpProblem,
    pub objective: Objective,
    receivers: usize,
}

impl SingleApProgram {
    pub fn solution(&self, inst: &NetworkInstance, out: &SolveOutcome) -> Solution {
        let m = self.receivers;
        let sched = (0..m).map(|j| out.value(&a_var(0, j))).collect();
        Solution {
            bucket_sizes: (0..m).map(|j| out.value(&k_var(j))).collect(),
            scheduling: vec![sched],
            rates: (0..m).map(|j| out.value(&r_var(j))).collect(),
            aux_rates: match self.objective {
                Objective::MinRate => None,
                Objective::RateProduct => Some((0..m).map(|j| out.value(&big_r_var(j))).collect()),
            },
            objective: out.objective,
        }
        .with_buckets_clamped(inst)
    }
}

impl Solution {
    // Barrier iterates sit strictly inside; keep K inside [1, k_max] exactly.
    fn with_buckets_clamped(mut self, inst: &NetworkInstance) -> Self {
        for k in &mut self.bucket_sizes {
            *k = project(*k, 1.0, inst.k_max);
        }
        self
    }
}

pub fn build_single_ap(inst: &NetworkInstance) -> Result<SingleApProgram, ProgramError> {
    build_single_ap_with(inst, Objective::MinRate)
}

pub fn build_single_ap_with(inst: &NetworkInstance, objective: Objective) -> Result<SingleApProgram, ProgramError> {
    ensure_valid(inst)?;
    if inst.transmitters != 1 {
        return Err(ProgramError::NotSingleAp(inst.transmitters));
    }
    let m = inst.num_receivers();
    let mut ineq = Vec::new();
    let mut eq = Vec::new();
    for j in 0..m {
        ineq.push(delay_constraint(inst, j)?);
        // r_j a_j^-1 (1 - eps_j)^-1 <= 1
        ineq.push(mono(1.0 / inst.delivery(0, j), &[(&r_var(j), 1.0), (&a_var(0, j), -1.0)])?.into());
        bucket_constraints(inst, j, &mut ineq, &mut eq)?;
    }
    ineq.push(posy((0..m).map(|j| Monomial::var(&a_var(0, j))).collect()));
    let obj = match objective {
        Objective::MinRate => {
            for j in 0..m {
                ineq.push(rate_bound(inst, j, MIN_RATE_VAR)?);
            }
            Monomial::var(MIN_RATE_VAR).recip().into()
        }
        Objective::RateProduct => {
            let mut prod = Monomial::constant(1.0)?;
            for j in 0..m {
                ineq.push(rate_bound(inst, j, &big_r_var(j))?);
                prod = prod.mul(&Monomial::var(&big_r_var(j)).recip());
            }
            prod.into()
        }
    };
    Ok(SingleApProgram {
        gp: GpProblem::new(obj, ineq, eq),
        objective,
        receivers: m,
    })
}

/// Solves the single-AP program; infeasibility is an error.
pub fn solve_single_ap(
    inst: &NetworkInstance,
    objective: Objective,
    cfg: &SolverConfig,
) -> Result<(Solution, SolveOutcome), ProgramError> {
    let prog = build_single_ap_with(inst, objective)?;
    let out = gp::solve(&prog.gp, cfg)?;
    match out.status {
        Status::Optimal => Ok((prog.solution(inst, &out), out)),
        Status::Infeasible => Err(ProgramError::Infeasible {
            phase1_value: out.phase1_value,
        }),
        s => Err(ProgramError::Solver(s)),
    }
}

/// Multi-AP program: GP-compatible parts plus one signomial rate constraint per receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiApProgram {
    pub objective: Posynomial,
    pub objective_kind: Objective,
    /// Delay, average-rate, bucket-bound and scheduling constraints (`<= 1`).
    pub posynomial_constraints: Vec<Posynomial>,
    pub equalities: Vec<Monomial>,
    /// `r_j - sum_i a_ij (1 - eps_ij) <= 0`, one per receiver.
    pub rate_constraints: Vec<Signomial>,
    pub scheduling_constraints: usize,
    pub transmitters: usize,
    pub receivers: usize,
}

impl MultiApProgram {
    /// True when every rate constraint has a single negative term, which
    /// makes it a monomial bound and the whole program a GP.
    pub fn is_pure_gp(&self) -> bool {
        self.rate_constraints
            .iter()
            .all(|s| s.minus.as_ref().is_none_or(|m| m.terms().len() == 1))
    }

    /// The GP obtained by condensing every rate constraint at `at`.
    pub fn condensed_gp(&self, at: &Assignment) -> Result<(GpProblem, Vec<Vec<f64>>), ProgramError> {
        let mut ineq = self.posynomial_constraints.clone();
        let mut weights = Vec::with_capacity(self.rate_constraints.len());
        for sig in &self.rate_constraints {
            let c = condense_rate_constraint(sig, at)?;
            ineq.push(c.constraint.into());
            weights.push(c.weights);
        }
        Ok((GpProblem::new(self.objective.clone(), ineq, self.equalities.clone()), weights))
    }

    pub fn objective_at(&self, x: &Assignment) -> Result<f64, ProgramError> {
        Ok(self.objective.eval(x)?)
    }

    pub fn solution(&self, x: &Assignment, objective: f64) -> Solution {
        let v = |n: String| x.get(&n).copied().unwrap_or(f64::NAN);
        let m = self.receivers;
        Solution {
            bucket_sizes: (0..m).map(|j| v(k_var(j))).collect(),
            scheduling: (0..self.transmitters)
                .map(|i| (0..m).map(|j| v(a_var(i, j))).collect())
                .collect(),
            rates: (0..m).map(|j| v(r_var(j))).collect(),
            aux_rates: Some((0..m).map(|j| v(big_r_var(j))).collect()),
            objective,
        }
    }
}

pub fn build_multi_ap(inst: &NetworkInstance) -> Result<MultiApProgram, ProgramError> {
    build_multi_ap_with(inst, Objective::RateProduct)
}

pub fn build_multi_ap_with(inst: &NetworkInstance, objective: Objective) -> Result<MultiApProgram, ProgramError> {
    ensure_valid(inst)?;
    let (w, m) = (inst.num_transmitters(), inst.num_receivers());
    let mut cons = Vec::new();
    let mut eq = Vec::new();
    let mut rate = Vec::new();
    for j in 0..m {
        cons.push(delay_constraint(inst, j)?);
        cons.push(rate_bound(inst, j, &big_r_var(j))?);
        bucket_constraints(inst, j, &mut cons, &mut eq)?;
        let served = (0..w)
            .map(|i| mono(inst.delivery(i, j), &[(&a_var(i, j), 1.0)]))
            .collect::<Result<Vec<_>, _>>()?;
        rate.push(Signomial::new(Monomial::var(&r_var(j)).into(), Some(posy(served))));
    }
    for i in 0..w {
        cons.push(posy((0..m).map(|j| Monomial::var(&a_var(i, j))).collect()));
    }
    let obj = match objective {
        Objective::RateProduct => {
            let mut prod = Monomial::constant(1.0)?;
            for j in 0..m {
                prod = prod.mul(&Monomial::var(&big_r_var(j)).recip());
            }
            prod.into()
        }
        Objective::MinRate => {
            for j in 0..m {
                cons.push(mono(1.0, &[(MIN_RATE_VAR, 1.0), (&big_r_var(j), -1.0)])?.into());
            }
            Monomial::var(MIN_RATE_VAR).recip().into()
        }
    };
    Ok(MultiApProgram {
        objective: obj,
        objective_kind: objective,
        posynomial_constraints: cons,
        equalities: eq,
        rate_constraints: rate,
        scheduling_constraints: w,
        transmitters: w,
        receivers: m,
    })
}

/// Monomial replacement `r_j / g(a) <= 1` of a rate constraint, where
/// `g(a) = prod_i (a_ij (1 - eps_ij) / w_ij)^w_ij` is tangent to
/// `sum_i a_ij (1 - eps_ij)` at the expansion point.
#[derive(Debug, Clone, PartialEq)]
pub struct RateCondensation {
    pub constraint: Monomial,
    /// The tangent monomial `g`.
    pub lower_bound: Monomial,
    pub weights: Vec<f64>,
}

pub fn condense_rate_constraint(sig: &Signomial, at: &Assignment) -> Result<RateCondensation, ProgramError> {
    let plus = sig
        .plus
        .as_monomial()
        .expect("rate constraints have a monomial positive part");
    let minus = match &sig.minus {
        Some(m) => m,
        None => {
            return Ok(RateCondensation {
                constraint: plus.clone(),
                lower_bound: Monomial::constant(1.0)?,
                weights: Vec::new(),
            })
        }
    };
    let c = condense(minus, at)?;
    Ok(RateCondensation {
        constraint: plus.mul(&c.monomial.recip()),
        lower_bound: c.monomial,
        weights: c.weights,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopRule {
    pub rel_obj_change: f64,
    pub max_outer: usize,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            rel_obj_change: 1e-6,
            max_outer: 50,
        }
    }
}

/// State of the successive condensation loop after it stops.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensationState {
    /// Number of GPs solved.
    pub t: usize,
    pub point: Assignment,
    /// Point at which the last GP's rate constraints were condensed.
    pub expansion_point: Assignment,
    /// `weights[j][i]` of the last condensation.
    pub weights: Vec<Vec<f64>>,
    /// `Z*,0 ..= Z*,t`; entry 0 is the starting point's objective.
    pub history: Vec<f64>,
    /// Bucket sizes after each entry of `history`.
    pub bucket_history: Vec<Vec<f64>>,
    pub converged: bool,
}

/// Tangency of the last condensation at the final point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tangency {
    /// `max_j |f_j(a*) - g_j(a*)|`.
    pub value_gap: f64,
    /// `max_ij |df_j/da_ij - dg_j/da_ij|` at `a*`.
    pub gradient_gap: f64,
}

impl CondensationState {
    pub fn tangency(&self, prog: &MultiApProgram) -> Result<Tangency, ProgramError> {
        let mut value_gap: f64 = 0.0;
        let mut gradient_gap: f64 = 0.0;
        for sig in &prog.rate_constraints {
            let f = match &sig.minus {
                Some(f) => f,
                None => continue,
            };
            let c = condense(f, &self.expansion_point)?;
            value_gap = value_gap.max((f.eval(&self.point)? - c.monomial.eval(&self.point)?).abs());
            for name in f.variables() {
                let gf = f.partial(&name, &self.point)?;
                let gg = c.monomial.partial(&name, &self.point)?;
                gradient_gap = gradient_gap.max((gf - gg).abs());
            }
        }
        Ok(Tangency {
            value_gap,
            gradient_gap,
        })
    }

    /// Writes `t,objective,K_1..K_M` per iteration.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        use crate::export::fmt_sig;
        let m = self.bucket_history.first().map_or(0, |b| b.len());
        let mut header = vec!["t".to_string(), "objective".to_string()];
        header.extend((1..=m).map(|j| format!("K_{j}")));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&header)?;
        for (t, (z, ks)) in self.history.iter().zip(&self.bucket_history).enumerate() {
            let mut row = vec![t.to_string(), fmt_sig(*z)];
            row.extend(ks.iter().map(|k| fmt_sig(*k)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Feasible starting point: equal shares, 1% rate back-off, projected
/// single-receiver optimal bucket sizes and rates at equality.
pub fn initial_point(inst: &NetworkInstance, prog: &MultiApProgram) -> Assignment {
    const BACKOFF: f64 = 0.01;
    let (w, m) = (inst.num_transmitters(), inst.num_receivers());
    let share = 1.0 / m as f64;
    let mut x = Assignment::new();
    let mut min_rate = f64::INFINITY;
    for j in 0..m {
        let rx = &inst.receivers[j];
        let mut offered = 0.0;
        for i in 0..w {
            x.insert(a_var(i, j), share);
            offered += share * inst.delivery(i, j);
        }
        let r = (1.0 - BACKOFF) * offered;
        let k = match (rx.fixed_k, rx.p) {
            (Some(k), _) => k,
            (None, p) if p.is_infinite() => 1.0,
            (None, p) if p.value() == 1.0 => inst.k_max,
            (None, p) => project(r * rx.feedback_delay / (p.value() - 1.0), 1.0, inst.k_max),
        };
        let big_r = inst.packet_size * k / (k / r + rx.feedback_delay);
        min_rate = min_rate.min(big_r);
        x.insert(r_var(j), r);
        x.insert(k_var(j), k);
        x.insert(big_r_var(j), big_r);
    }
    if prog.objective_kind == Objective::MinRate {
        x.insert(MIN_RATE_VAR.to_string(), min_rate);
    }
    x
}

fn satisfies(prog: &MultiApProgram, x: &Assignment, margin: f64) -> Result<bool, ProgramError> {
    for c in &prog.posynomial_constraints {
        if c.eval(x)? > 1.0 + margin {
            return Ok(false);
        }
    }
    for s in &prog.rate_constraints {
        if s.eval(x)? > margin {
            return Ok(false);
        }
    }
    Ok(true)
}

fn bucket_sizes(m: usize, x: &Assignment) -> Vec<f64> {
    (0..m).map(|j| x.get(&k_var(j)).copied().unwrap_or(f64::NAN)).collect()
}

/// Successive GP approximation of the multi-AP signomial program.
///
/// Each round condenses every rate constraint at the current schedule and
/// solves the resulting GP. The current point stays feasible for the next
/// condensed GP, so the objective is nonincreasing; a GP answer that is
/// worse than the current point (solver round-off) is discarded and ends the
/// loop at that point.
pub fn solve_multi_ap(
    inst: &NetworkInstance,
    objective: Objective,
    cfg: &SolverConfig,
    stop: &StopRule,
) -> Result<(Solution, CondensationState), ProgramError> {
    let prog = build_multi_ap_with(inst, objective)?;
    let m = prog.receivers;
    let mut point = initial_point(inst, &prog);
    if !satisfies(&prog, &point, cfg.feasibility_margin)? {
        let (gp0, _) = prog.condensed_gp(&point)?;
        let p1 = gp::phase1(&gp0, cfg)?;
        if p1.status != Status::Optimal || p1.value > 1.0 + cfg.feasibility_margin {
            return Err(ProgramError::Infeasible {
                phase1_value: p1.value,
            });
        }
        point = p1.assignment;
    }

    let mut state = CondensationState {
        t: 0,
        history: vec![prog.objective_at(&point)?],
        bucket_history: vec![bucket_sizes(m, &point)],
        expansion_point: point.clone(),
        point,
        weights: Vec::new(),
        converged: false,
    };
    let exact = prog.is_pure_gp();

    while state.t < stop.max_outer {
        let (gp_t, weights) = prog.condensed_gp(&state.point)?;
        let out = gp::solve(&gp_t, cfg)?;
        state.t += 1;
        state.weights = weights;
        let prev = *state.history.last().expect("nonempty");
        let candidate = match out.status {
            Status::Optimal => Some((prog.objective_at(&out.assignment)?, out.assignment)),
            // The current point is feasible for this GP, so failure here is numerical.
            Status::Infeasible if state.t > 1 => None,
            Status::Infeasible => {
                return Err(ProgramError::Infeasible {
                    phase1_value: out.phase1_value,
                })
            }
            s => return Err(ProgramError::Solver(s)),
        };
        match candidate {
            Some((z, x)) if z <= prev => {
                state.expansion_point = std::mem::replace(&mut state.point, x);
                state.history.push(z);
                state.bucket_history.push(bucket_sizes(m, &state.point));
                if exact || (prev - z) <= stop.rel_obj_change * prev.abs() {
                    state.converged = true;
                    break;
                }
            }
            _ => {
                state.expansion_point = state.point.clone();
                state.history.push(prev);
                state.bucket_history.push(bucket_sizes(m, &state.point));
                state.converged = true;
                break;
            }
        }
    }
    let z = *state.history.last().expect("nonempty");
    let sol = prog.solution(&state.point, z).with_buckets_clamped(inst);
    Ok((sol, state))
}
