//! Geometric-program solver.
//!
//! The problem is moved to log space (`y = log x`), monomial equalities are
//! eliminated by parametrizing their affine solution set `y = y0 + N z`, a
//! phase-I problem finds a strictly feasible start, and a log-barrier
//! path-following method with damped Newton centering does the rest. The
//! barrier weight grows tenfold per outer iteration; the method stops when
//! the duality-gap bound `m / tau` falls below `rel_gap_tol`. Because the
//! objective is `log f0`, that bound is a relative gap on `f0` itself.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::posy::{to_convex, Assignment, ConvexProgram, GpProblem, LogSumExp, PosyError};

/// Phase I never pushes the max constraint value below `exp(-PHASE1_FLOOR)`.
const PHASE1_FLOOR: f64 = 30.0;
/// Phase I inside `solve` stops as soon as every constraint has this much log slack.
const PHASE1_EARLY_EXIT: f64 = -0.05;
/// Phase I searches within this log-space box around its start, so that
/// variables which only loosen constraints cannot drive the barrier to -inf.
const PHASE1_BOX: f64 = 60.0;
const BARRIER_GROWTH: f64 = 10.0;
const CENTERING_TOL: f64 = 1e-11;

#[derive(Debug, Error, PartialEq)]
pub enum GpError {
    #[error(transparent)]
    Posy(#[from] PosyError),
    #[error("problem has no variables")]
    NoVariables,
    #[error("start point does not satisfy the equality constraints")]
    BadStart,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub rel_gap_tol: f64,
    /// Newton iterations allowed per centering step.
    pub max_iter: usize,
    pub feasibility_margin: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_gap_tol: 1e-8,
            max_iter: 200,
            feasibility_margin: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    /// Objective in original units.
    pub objective: f64,
    /// Duality-gap bound `m / tau` after centering.
    pub residual: f64,
    pub barrier: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub status: Status,
    pub assignment: Assignment,
    /// `f0(x)` in original units; `NaN` when infeasible.
    pub objective: f64,
    pub gap: f64,
    /// `||grad f0 + sum_i lambda_i grad f_i||_inf` in log space with the
    /// central-path multipliers `lambda_i = 1 / (tau * -F_i)`.
    pub kkt_residual: f64,
    /// Phase-I optimum `s*` (max constraint value); `0` when phase I was skipped.
    pub phase1_value: f64,
    pub trace: Vec<TraceRow>,
}

impl SolveOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn value(&self, name: &str) -> f64 {
        self.assignment.get(name).copied().unwrap_or(f64::NAN)
    }

    /// Writes the iteration trace as CSV (`iter,objective,residual,barrier`).
    pub fn write_trace_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "objective", "residual", "barrier"])?;
        for r in &self.trace {
            w.write_record([
                r.iter.to_string(),
                crate::export::fmt_sig(r.objective),
                crate::export::fmt_sig(r.residual),
                crate::export::fmt_sig(r.barrier),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase1Outcome {
    pub status: Status,
    /// `s* = min_x max_i f_i(x)`, floored at `exp(-30)`; `0` without inequality constraints.
    pub value: f64,
    pub assignment: Assignment,
}

/// The convex program with equalities eliminated: `y = base + basis * z`.
struct Reduced {
    cp: ConvexProgram,
    base: DVector<f64>,
    basis: DMatrix<f64>,
    objective: LogSumExp,
    ineq: Vec<LogSumExp>,
}

impl Reduced {
    fn new(gp: &GpProblem) -> Result<Option<Self>, GpError> {
        if gp.variables.is_empty() {
            return Err(GpError::NoVariables);
        }
        let cp = to_convex(gp)?;
        let n = cp.variables.len();
        let (base, basis) = if cp.eq_matrix.nrows() == 0 {
            (DVector::zeros(n), DMatrix::identity(n, n))
        } else {
            match eliminate(&cp.eq_matrix, &cp.eq_rhs) {
                Some(x) => x,
                None => return Ok(None),
            }
        };
        let objective = cp.objective.restrict(&base, &basis);
        let ineq = cp.ineq.iter().map(|c| c.restrict(&base, &basis)).collect();
        Ok(Some(Reduced {
            cp,
            base,
            basis,
            objective,
            ineq,
        }))
    }

    fn dim(&self) -> usize {
        self.basis.ncols()
    }

    fn lift(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.base + &self.basis * z
    }

    fn project(&self, y: &DVector<f64>) -> Result<DVector<f64>, GpError> {
        let z = self.basis.tr_mul(&(y - &self.base));
        if (self.lift(&z) - y).amax() > 1e-8 * (1.0 + y.amax()) {
            return Err(GpError::BadStart);
        }
        Ok(z)
    }

    fn max_constraint(&self, z: &DVector<f64>) -> f64 {
        self.ineq.iter().map(|c| c.value(z)).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Particular solution and orthonormal null-space basis of `A y = b`, or
/// `None` when the system is inconsistent.
fn eliminate(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let n = a.ncols();
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = 1e-12 * smax.max(1.0) * n as f64;
    let y0 = svd.solve(b, eps).ok()?;
    if (a * &y0 - b).amax() > 1e-9 * (1.0 + b.amax()) {
        return None;
    }
    // Null space from the eigenvectors of A^T A with (numerically) zero eigenvalue.
    let ata = a.tr_mul(a);
    let eig = ata.symmetric_eigen();
    let cutoff = eps * smax.max(1.0);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&k| eig.eigenvalues[k].abs() <= cutoff)
        .map(|k| eig.eigenvectors.column(k).into_owned())
        .collect();
    let basis = if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    Some((y0, basis))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BarrierExit {
    Converged,
    EarlyStop,
    Unbounded,
    IterLimit,
}

struct BarrierResult {
    z: DVector<f64>,
    exit: BarrierExit,
    gap: f64,
    kkt: f64,
}

/// `tau * obj(z) - sum_i log(-cons_i(z))`, or `+inf` outside the domain.
fn barrier_value(obj: &LogSumExp, cons: &[LogSumExp], tau: f64, z: &DVector<f64>) -> f64 {
    let mut v = tau * obj.value(z);
    for c in cons {
        let f = c.value(z);
        if !(f < 0.0) {
            return f64::INFINITY;
        }
        v -= (-f).ln();
    }
    v
}

fn solve_spd(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
    let scale = h.diagonal().amax().max(1.0);
    let mut shift = 0.0;
    loop {
        let mut hs = h.clone();
        if shift > 0.0 {
            for i in 0..hs.nrows() {
                hs[(i, i)] += shift;
            }
        }
        if let Some(ch) = hs.cholesky() {
            return ch.solve(g);
        }
        shift = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
    }
}

/// Log-barrier path following from a strictly feasible `z0`.
fn barrier_method(
    obj: &LogSumExp,
    cons: &[LogSumExp],
    z0: DVector<f64>,
    cfg: &SolverConfig,
    early_stop: Option<f64>,
    trace: &mut Vec<TraceRow>,
) -> BarrierResult {
    let m = cons.len() as f64;
    let unbounded_below = -1.0 / cfg.rel_gap_tol;
    let mut z = z0;
    let mut tau: f64 = 1.0;
    let mut outer = 0;
    loop {
        // Centering.
        let mut iters = 0;
        loop {
            let (f0, g0, h0) = obj.derivatives(&z);
            if f0 < unbounded_below {
                return BarrierResult { z, exit: BarrierExit::Unbounded, gap: f64::NAN, kkt: f64::NAN };
            }
            if let Some(t) = early_stop {
                if f0 < t {
                    return BarrierResult { z, exit: BarrierExit::EarlyStop, gap: f64::NAN, kkt: f64::NAN };
                }
            }
            let mut g = g0 * tau;
            let mut h = h0 * tau;
            for c in cons {
                let (fi, gi, hi) = c.derivatives(&z);
                let s = -fi;
                g += &gi / s;
                h += hi / s + (&gi * gi.transpose()) / (s * s);
            }
            let step = solve_spd(&h, &(-&g));
            let decrement = -g.dot(&step);
            // Below this the decrement is rounding noise in tau * f0 and the log terms.
            let noise = 1e-13 * (tau * (1.0 + f0.abs()) + cons.len() as f64);
            if !(decrement / 2.0 > CENTERING_TOL.max(noise)) {
                break;
            }
            if iters >= cfg.max_iter {
                return BarrierResult { z, exit: BarrierExit::IterLimit, gap: f64::NAN, kkt: f64::NAN };
            }
            iters += 1;
            let phi = barrier_value(obj, cons, tau, &z);
            let mut s = 1.0;
            let mut accepted = false;
            while s > 1e-16 {
                let cand = &z + &step * s;
                let v = barrier_value(obj, cons, tau, &cand);
                if v <= phi - 0.01 * s * decrement {
                    z = cand;
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
            if !accepted {
                // Rounding noise dominates the barrier differences: treat as centered.
                break;
            }
        }

        let f0 = obj.value(&z);
        let gap = if m > 0.0 { m / tau } else { 0.0 };
        trace.push(TraceRow {
            iter: outer,
            objective: f0.exp(),
            residual: gap,
            barrier: tau,
        });
        if gap < cfg.rel_gap_tol {
            let kkt = kkt_residual(obj, cons, tau, &z);
            return BarrierResult { z, exit: BarrierExit::Converged, gap, kkt };
        }
        tau *= BARRIER_GROWTH;
        outer += 1;
    }
}

fn kkt_residual(obj: &LogSumExp, cons: &[LogSumExp], tau: f64, z: &DVector<f64>) -> f64 {
    let (_, mut r, _) = obj.derivatives(z);
    for c in cons {
        let (fi, gi, _) = c.derivatives(z);
        r += gi / (tau * -fi);
    }
    r.amax()
}

/// Phase-I problem over `(z, t)`: minimize `t` with `F_i(z) <= t`, `t >= -FLOOR`
/// and `|z - z0| <= BOX` componentwise.
fn phase1_reduced(
    red: &Reduced,
    z0: &DVector<f64>,
    cfg: &SolverConfig,
    early_stop: Option<f64>,
) -> (DVector<f64>, f64, BarrierExit) {
    let n = red.dim();
    let mut cons: Vec<LogSumExp> = red.ineq.iter().map(|c| c.with_extra_column(-1.0)).collect();
    let mut floor_row = DMatrix::zeros(1, n + 1);
    floor_row[(0, n)] = -1.0;
    cons.push(LogSumExp {
        exponents: floor_row,
        offsets: DVector::from_element(1, -PHASE1_FLOOR),
    });
    for k in 0..n {
        for sign in [1.0, -1.0] {
            let mut row = DMatrix::zeros(1, n + 1);
            row[(0, k)] = sign;
            cons.push(LogSumExp {
                exponents: row,
                offsets: DVector::from_element(1, -sign * z0[k] - PHASE1_BOX),
            });
        }
    }
    let mut obj_row = DMatrix::zeros(1, n + 1);
    obj_row[(0, n)] = 1.0;
    let obj = LogSumExp {
        exponents: obj_row,
        offsets: DVector::zeros(1),
    };
    let t0 = red.max_constraint(z0).max(-PHASE1_FLOOR + 1.0) + 1.0;
    let start = DVector::from_iterator(n + 1, z0.iter().cloned().chain(std::iter::once(t0)));
    let mut scratch = Vec::new();
    let res = barrier_method(&obj, &cons, start, cfg, early_stop, &mut scratch);
    let z = res.z.rows(0, n).into_owned();
    let t = red.max_constraint(&z);
    (z, t, res.exit)
}

/// Minimizes the maximum constraint value `s = max_i f_i(x)`.
/// `s* <= 1 + margin` certifies feasibility.
pub fn phase1(gp: &GpProblem, cfg: &SolverConfig) -> Result<Phase1Outcome, GpError> {
    let red = match Reduced::new(gp)? {
        Some(r) => r,
        None => {
            return Ok(Phase1Outcome {
                status: Status::Infeasible,
                value: f64::INFINITY,
                assignment: Assignment::new(),
            })
        }
    };
    let z0 = DVector::zeros(red.dim());
    if red.ineq.is_empty() {
        return Ok(Phase1Outcome {
            status: Status::Optimal,
            value: 0.0,
            assignment: red.cp.assignment_from(&red.lift(&z0)),
        });
    }
    let (z, t, exit) = phase1_reduced(&red, &z0, cfg, None);
    let status = match exit {
        BarrierExit::IterLimit => Status::IterLimit,
        _ => Status::Optimal,
    };
    Ok(Phase1Outcome {
        status,
        value: t.exp(),
        assignment: red.cp.assignment_from(&red.lift(&z)),
    })
}

pub fn solve(gp: &GpProblem, cfg: &SolverConfig) -> Result<SolveOutcome, GpError> {
    solve_from(gp, cfg, None)
}

/// Like [`solve`], starting phase I (or phase II, when strictly feasible) at `start`.
pub fn solve_from(gp: &GpProblem, cfg: &SolverConfig, start: Option<&Assignment>) -> Result<SolveOutcome, GpError> {
    let infeasible = |phase1_value: f64| SolveOutcome {
        status: Status::Infeasible,
        assignment: Assignment::new(),
        objective: f64::NAN,
        gap: f64::NAN,
        kkt_residual: f64::NAN,
        phase1_value,
        trace: Vec::new(),
    };
    let red = match Reduced::new(gp)? {
        Some(r) => r,
        None => return Ok(infeasible(f64::INFINITY)),
    };
    let z0 = match start {
        Some(x) => red.project(&red.cp.point_from(x)?)?,
        None => DVector::zeros(red.dim()),
    };
    let log_margin = cfg.feasibility_margin.ln_1p();

    if red.dim() == 0 {
        let t = red.max_constraint(&z0);
        if red.ineq.is_empty() || t <= log_margin {
            let y = red.lift(&z0);
            return Ok(SolveOutcome {
                status: Status::Optimal,
                objective: red.objective.value(&z0).exp(),
                assignment: red.cp.assignment_from(&y),
                gap: 0.0,
                kkt_residual: 0.0,
                phase1_value: if red.ineq.is_empty() { 0.0 } else { t.exp() },
                trace: Vec::new(),
            });
        }
        return Ok(infeasible(t.exp()));
    }

    // Phase I, unless the start is already strictly feasible.
    let mut t = red.max_constraint(&z0);
    let mut z = z0;
    let mut phase1_value = 0.0;
    if !red.ineq.is_empty() && !(t < 0.0) {
        let (z1, t1, exit) = phase1_reduced(&red, &z, cfg, Some(PHASE1_EARLY_EXIT));
        phase1_value = t1.exp();
        if exit == BarrierExit::IterLimit && t1 >= 0.0 {
            let mut out = infeasible(phase1_value);
            out.status = Status::IterLimit;
            return Ok(out);
        }
        if t1 > log_margin {
            return Ok(infeasible(phase1_value));
        }
        z = z1;
        t = t1;
    }

    // Feasible only within the margin: relax the constraints into the margin.
    let relaxed: Vec<LogSumExp>;
    let cons: &[LogSumExp] = if red.ineq.is_empty() || t < 0.0 {
        &red.ineq
    } else {
        let shift = 0.5 * (t + log_margin);
        relaxed = red
            .ineq
            .iter()
            .map(|c| LogSumExp {
                exponents: c.exponents.clone(),
                offsets: c.offsets.add_scalar(-shift),
            })
            .collect();
        &relaxed
    };

    let mut trace = Vec::new();
    let res = barrier_method(&red.objective, cons, z, cfg, None, &mut trace);
    let status = match res.exit {
        BarrierExit::Converged | BarrierExit::EarlyStop => Status::Optimal,
        BarrierExit::Unbounded => Status::Unbounded,
        BarrierExit::IterLimit => Status::IterLimit,
    };
    let y = red.lift(&res.z);
    Ok(SolveOutcome {
        status,
        objective: red.objective.value(&res.z).exp(),
        assignment: red.cp.assignment_from(&y),
        gap: res.gap,
        kkt_residual: res.kkt,
        phase1_value,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posy::{Monomial, Posynomial};
    use approx::assert_relative_eq;

    fn mono(c: f64, e: &[(&str, f64)]) -> Monomial {
        Monomial::new(c, e.iter().map(|(n, v)| (n.to_string(), *v))).unwrap()
    }

    fn x_plus_inv() -> Posynomial {
        Posynomial::new(vec![Monomial::var("x"), Monomial::var("x").recip()]).unwrap()
    }

    fn infeasible_pair() -> GpProblem {
        GpProblem::new(
            Monomial::var("x").into(),
            vec![mono(2.0, &[("x", 1.0)]).into(), mono(2.0, &[("x", -1.0)]).into()],
            vec![],
        )
    }

    #[test]
    fn am_gm_toy() {
        let gp = GpProblem::new(x_plus_inv(), vec![], vec![]);
        let out = solve(&gp, &SolverConfig::default()).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert_relative_eq!(out.value("x"), 1.0, max_relative = 1e-6);
        assert_relative_eq!(out.objective, 2.0, max_relative = 1e-10);
    }

    #[test]
    fn single_receiver_delay_program() {
        let (r, d, l, p) = (0.6, 5.0, 1.0, 2.0);
        let obj = Posynomial::new(vec![
            mono(1.0 / (r * l), &[("K", 1.0 - 1.0 / p)]),
            mono(d / l, &[("K", -1.0 / p)]),
        ])
        .unwrap();
        let gp = GpProblem::new(obj, vec![mono(0.01, &[("K", 1.0)]).into(), mono(1.0, &[("K", -1.0)]).into()], vec![]);
        let out = solve(&gp, &SolverConfig::default()).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert_relative_eq!(out.value("K"), 3.0, max_relative = 1e-4);
        assert_relative_eq!(out.objective, 10.0 / 3f64.sqrt(), max_relative = 1e-8);
        assert!(out.gap < 1e-8);
        assert!(!out.trace.is_empty());
    }

    #[test]
    fn empty_feasible_set_is_infeasible() {
        let out = solve(&infeasible_pair(), &SolverConfig::default()).unwrap();
        assert_eq!(out.status, Status::Infeasible);
    }

    #[test]
    fn phase1_values() {
        let gp = GpProblem::new(x_plus_inv(), vec![mono(0.5, &[("x", 1.0)]).into()], vec![]);
        let p1 = phase1(&gp, &SolverConfig::default()).unwrap();
        assert!(p1.value <= 1.0);
        // max(2x, 2/x) is minimized at x = 1.
        let p1 = phase1(&infeasible_pair(), &SolverConfig::default()).unwrap();
        assert_relative_eq!(p1.value, 2.0, max_relative = 1e-6);
        assert_relative_eq!(p1.assignment["x"], 1.0, max_relative = 1e-3);
    }

    #[test]
    fn log_space_unbounded() {
        let gp = GpProblem::new(Monomial::var("x").into(), vec![Monomial::var("x").into()], vec![]);
        assert_eq!(solve(&gp, &SolverConfig::default()).unwrap().status, Status::Unbounded);
        let free = GpProblem::new(Monomial::var("x").into(), vec![], vec![]);
        assert_eq!(solve(&free, &SolverConfig::default()).unwrap().status, Status::Unbounded);
    }

    #[test]
    fn equality_elimination() {
        // minimize x + y with x*y = 4  ->  x = y = 2
        let obj = Posynomial::new(vec![Monomial::var("x"), Monomial::var("y")]).unwrap();
        let gp = GpProblem::new(obj, vec![], vec![mono(0.25, &[("x", 1.0), ("y", 1.0)])]);
        let out = solve(&gp, &SolverConfig::default()).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert_relative_eq!(out.objective, 4.0, max_relative = 1e-9);
        assert_relative_eq!(out.value("x"), 2.0, max_relative = 1e-6);
    }

    #[test]
    fn inconsistent_equalities_are_infeasible() {
        let gp = GpProblem::new(
            Monomial::var("x").into(),
            vec![],
            vec![mono(0.5, &[("x", 1.0)]), mono(0.25, &[("x", 1.0)])],
        );
        assert_eq!(solve(&gp, &SolverConfig::default()).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn fully_determined_point() {
        let gp = GpProblem::new(
            x_plus_inv(),
            vec![mono(0.1, &[("x", 1.0)]).into()],
            vec![mono(0.5, &[("x", 1.0)])],
        );
        let out = solve(&gp, &SolverConfig::default()).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert_relative_eq!(out.objective, 2.5, max_relative = 1e-12);
    }

    #[test]
    fn boundary_only_feasible_set() {
        // x <= 1 and 1/x <= 1 leave only x = 1.
        let gp = GpProblem::new(
            x_plus_inv(),
            vec![Monomial::var("x").into(), Monomial::var("x").recip().into()],
            vec![],
        );
        let out = solve(&gp, &SolverConfig::default()).unwrap();
        assert_eq!(out.status, Status::Optimal);
        assert_relative_eq!(out.value("x"), 1.0, max_relative = 1e-6);
    }

    #[test]
    fn scaling_the_objective_keeps_the_argmin() {
        let obj = Posynomial::new(vec![mono(1.0, &[("x", 1.0), ("y", -1.0)]), mono(2.0, &[("y", 2.0)])]).unwrap();
        let cons = vec![mono(1.0, &[("x", -1.0)]).into(), mono(0.2, &[("y", 1.0)]).into()];
        let a = solve(&GpProblem::new(obj.clone(), cons.clone(), vec![]), &SolverConfig::default()).unwrap();
        let scaled = obj.mul_monomial(&Monomial::constant(7.5).unwrap());
        let b = solve(&GpProblem::new(scaled, cons, vec![]), &SolverConfig::default()).unwrap();
        assert_relative_eq!(b.objective, 7.5 * a.objective, max_relative = 1e-6);
        for k in ["x", "y"] {
            assert_relative_eq!(a.value(k), b.value(k), max_relative = 1e-6);
        }
    }

    #[test]
    fn deterministic() {
        let gp = GpProblem::new(x_plus_inv(), vec![mono(0.8, &[("x", 1.0)]).into()], vec![]);
        let a = solve(&gp, &SolverConfig::default()).unwrap();
        let b = solve(&gp, &SolverConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trace_csv_has_header() {
        let gp = GpProblem::new(x_plus_inv(), vec![mono(0.8, &[("x", 1.0)]).into()], vec![]);
        let out = solve(&gp, &SolverConfig::default()).unwrap();
        let mut buf = Vec::new();
        out.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,objective,residual,barrier\n"));
        assert_eq!(text.lines().count(), out.trace.len() + 1);
    }
}
