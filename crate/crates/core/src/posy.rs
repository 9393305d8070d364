//! Monomials, posynomials and signomials over named positive variables, and
//! the lowering of a geometric program to its log-space convex form.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Values for named variables. All values must be strictly positive.
pub type Assignment = BTreeMap<String, f64>;

#[derive(Debug, Error, PartialEq)]
pub enum PosyError {
    #[error("monomial coefficient must be positive and finite, got {0}")]
    NonPositiveCoefficient(f64),
    #[error("posynomial must have at least one term")]
    Empty,
    #[error("a posynomial with {0} terms can only be raised to a positive integer power")]
    NonIntegerPower(usize),
    #[error("power must be positive, got {0}")]
    NonPositivePower(f64),
    #[error("variable `{0}` is missing from the assignment")]
    MissingVariable(String),
    #[error("variable `{name}` must be positive, got {value}")]
    NonPositiveValue { name: String, value: f64 },
    #[error("variable `{0}` is not declared in the problem")]
    UndeclaredVariable(String),
}

fn lookup(x: &Assignment, name: &str) -> Result<f64, PosyError> {
    match x.get(name) {
        None => Err(PosyError::MissingVariable(name.to_string())),
        Some(&v) if v > 0.0 => Ok(v),
        Some(&v) => Err(PosyError::NonPositiveValue {
            name: name.to_string(),
            value: v,
        }),
    }
}

/// `c * prod_i x_i^a_i` with `c > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    coeff: f64,
    exps: BTreeMap<String, f64>,
}

impl Monomial {
    pub fn new<I, S>(coeff: f64, exps: I) -> Result<Self, PosyError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        if !(coeff > 0.0 && coeff.is_finite()) {
            return Err(PosyError::NonPositiveCoefficient(coeff));
        }
        let mut m = Monomial {
            coeff,
            exps: BTreeMap::new(),
        };
        for (name, e) in exps {
            *m.exps.entry(name.into()).or_insert(0.0) += e;
        }
        m.exps.retain(|_, e| *e != 0.0);
        Ok(m)
    }

    /// Positive constant.
    pub fn constant(c: f64) -> Result<Self, PosyError> {
        Monomial::new(c, std::iter::empty::<(String, f64)>())
    }

    /// `x^1`.
    pub fn var(name: &str) -> Self {
        Monomial {
            coeff: 1.0,
            exps: BTreeMap::from([(name.to_string(), 1.0)]),
        }
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    pub fn exponents(&self) -> &BTreeMap<String, f64> {
        &self.exps
    }

    pub fn exponent(&self, name: &str) -> f64 {
        self.exps.get(name).copied().unwrap_or(0.0)
    }

    /// Scales the coefficient; `k` must be positive.
    pub fn scale(&self, k: f64) -> Result<Self, PosyError> {
        let mut out = self.clone();
        out.coeff *= k;
        if !(out.coeff > 0.0 && out.coeff.is_finite()) {
            return Err(PosyError::NonPositiveCoefficient(out.coeff));
        }
        Ok(out)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut exps = self.exps.clone();
        for (k, e) in &other.exps {
            *exps.entry(k.clone()).or_insert(0.0) += e;
        }
        exps.retain(|_, e| *e != 0.0);
        Monomial {
            coeff: self.coeff * other.coeff,
            exps,
        }
    }

    /// Any real power of a monomial is a monomial.
    pub fn powf(&self, k: f64) -> Monomial {
        let mut exps: BTreeMap<String, f64> = self.exps.iter().map(|(n, e)| (n.clone(), e * k)).collect();
        exps.retain(|_, e| *e != 0.0);
        Monomial {
            coeff: self.coeff.powf(k),
            exps,
        }
    }

    pub fn recip(&self) -> Monomial {
        self.powf(-1.0)
    }

    pub fn eval(&self, x: &Assignment) -> Result<f64, PosyError> {
        let mut v = self.coeff;
        for (name, e) in &self.exps {
            v *= lookup(x, name)?.powf(*e);
        }
        Ok(v)
    }

    /// Partial derivative with respect to `name`.
    pub fn partial(&self, name: &str, x: &Assignment) -> Result<f64, PosyError> {
        let e = self.exponent(name);
        if e == 0.0 {
            return Ok(0.0);
        }
        Ok(e * self.eval(x)? / lookup(x, name)?)
    }

    fn same_exponents(&self, other: &Monomial) -> bool {
        self.exps == other.exps
    }

    fn cmp_exponents(&self, other: &Monomial) -> std::cmp::Ordering {
        let a = self.exps.iter();
        let b = other.exps.iter();
        for ((na, ea), (nb, eb)) in a.zip(b) {
            let c = na.cmp(nb).then(eb.total_cmp(ea));
            if c.is_ne() {
                return c;
            }
        }
        other.exps.len().cmp(&self.exps.len())
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.coeff)?;
        for (name, e) in &self.exps {
            if *e == 1.0 {
                write!(f, "*{name}")?;
            } else {
                write!(f, "*{name}^{e}")?;
            }
        }
        Ok(())
    }
}

/// Sum of monomials with positive coefficients; like terms are merged.
#[derive(Debug, Clone, PartialEq)]
pub struct Posynomial {
    terms: Vec<Monomial>,
}

impl Posynomial {
    pub fn new(terms: Vec<Monomial>) -> Result<Self, PosyError> {
        if terms.is_empty() {
            return Err(PosyError::Empty);
        }
        let mut p = Posynomial { terms: Vec::new() };
        for t in terms {
            p.push(t);
        }
        Ok(p)
    }

    fn push(&mut self, t: Monomial) {
        match self.terms.iter_mut().find(|s| s.same_exponents(&t)) {
            Some(s) => s.coeff += t.coeff,
            None => self.terms.push(t),
        }
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn as_monomial(&self) -> Option<&Monomial> {
        match self.terms.as_slice() {
            [m] => Some(m),
            _ => None,
        }
    }

    pub fn variables(&self) -> BTreeSet<String> {
        self.terms.iter().flat_map(|t| t.exps.keys().cloned()).collect()
    }

    pub fn add(&self, other: &Posynomial) -> Posynomial {
        let mut out = self.clone();
        for t in &other.terms {
            out.push(t.clone());
        }
        out
    }

    pub fn mul(&self, other: &Posynomial) -> Posynomial {
        let mut out = Posynomial { terms: Vec::new() };
        for a in &self.terms {
            for b in &other.terms {
                out.push(a.mul(b));
            }
        }
        out
    }

    /// `self^k`. Monomials accept any positive real `k`; posynomials with
    /// more than one term only positive integers.
    pub fn power(&self, k: f64) -> Result<Posynomial, PosyError> {
        if !(k > 0.0) {
            return Err(PosyError::NonPositivePower(k));
        }
        if let Some(m) = self.as_monomial() {
            return Ok(m.powf(k).into());
        }
        if k.fract() != 0.0 {
            return Err(PosyError::NonIntegerPower(self.terms.len()));
        }
        let mut out = self.clone();
        for _ in 1..(k as u64) {
            out = out.mul(self);
        }
        Ok(out)
    }

    pub fn div_monomial(&self, m: &Monomial) -> Posynomial {
        let inv = m.recip();
        let mut out = Posynomial { terms: Vec::new() };
        for t in &self.terms {
            out.push(t.mul(&inv));
        }
        out
    }

    pub fn mul_monomial(&self, m: &Monomial) -> Posynomial {
        let mut out = Posynomial { terms: Vec::new() };
        for t in &self.terms {
            out.push(t.mul(m));
        }
        out
    }

    pub fn eval(&self, x: &Assignment) -> Result<f64, PosyError> {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    pub fn partial(&self, name: &str, x: &Assignment) -> Result<f64, PosyError> {
        self.terms.iter().map(|t| t.partial(name, x)).sum()
    }

    /// Terms in canonical order (lexicographic by exponent map).
    pub fn canonical_terms(&self) -> Vec<&Monomial> {
        let mut v: Vec<&Monomial> = self.terms.iter().collect();
        v.sort_by(|a, b| a.cmp_exponents(b));
        v
    }
}

impl From<Monomial> for Posynomial {
    fn from(m: Monomial) -> Self {
        Posynomial { terms: vec![m] }
    }
}

impl Add for &Posynomial {
    type Output = Posynomial;
    fn add(self, rhs: &Posynomial) -> Posynomial {
        Posynomial::add(self, rhs)
    }
}

impl Mul for &Posynomial {
    type Output = Posynomial;
    fn mul(self, rhs: &Posynomial) -> Posynomial {
        Posynomial::mul(self, rhs)
    }
}

impl fmt::Display for Posynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.canonical_terms().into_iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

/// `plus - minus`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signomial {
    pub plus: Posynomial,
    pub minus: Option<Posynomial>,
}

impl Signomial {
    pub fn new(plus: Posynomial, minus: Option<Posynomial>) -> Self {
        Signomial { plus, minus }
    }

    pub fn is_posynomial(&self) -> bool {
        self.minus.is_none()
    }

    pub fn eval(&self, x: &Assignment) -> Result<f64, PosyError> {
        let minus = match &self.minus {
            Some(m) => m.eval(x)?,
            None => 0.0,
        };
        Ok(self.plus.eval(x)? - minus)
    }
}

impl fmt::Display for Signomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.plus)?;
        if let Some(m) = &self.minus {
            write!(f, " - ({m})")?;
        }
        Ok(())
    }
}

/// Minimize `objective` subject to `ineq[k] <= 1` and `eq[k] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpProblem {
    pub objective: Posynomial,
    pub ineq: Vec<Posynomial>,
    pub eq: Vec<Monomial>,
    pub variables: Vec<String>,
}

impl GpProblem {
    /// Builds a problem whose variable set is every name referenced, sorted.
    pub fn new(objective: Posynomial, ineq: Vec<Posynomial>, eq: Vec<Monomial>) -> Self {
        let mut names = objective.variables();
        for p in &ineq {
            names.extend(p.variables());
        }
        for m in &eq {
            names.extend(m.exps.keys().cloned());
        }
        GpProblem {
            objective,
            ineq,
            eq,
            variables: names.into_iter().collect(),
        }
    }

    /// Builds a problem over an explicit, ordered variable list.
    pub fn with_variables(
        objective: Posynomial,
        ineq: Vec<Posynomial>,
        eq: Vec<Monomial>,
        variables: Vec<String>,
    ) -> Result<Self, PosyError> {
        let gp = GpProblem {
            objective,
            ineq,
            eq,
            variables,
        };
        gp.check_variables()?;
        Ok(gp)
    }

    pub fn check_variables(&self) -> Result<(), PosyError> {
        let declared: BTreeSet<&String> = self.variables.iter().collect();
        let referenced = std::iter::once(&self.objective)
            .chain(self.ineq.iter())
            .flat_map(|p| p.terms.iter())
            .chain(self.eq.iter())
            .flat_map(|m| m.exps.keys());
        for name in referenced {
            if !declared.contains(name) {
                return Err(PosyError::UndeclaredVariable(name.clone()));
            }
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }
}

/// `log sum_k exp(offset_k + a_k . y)`: the image of a posynomial under `x = exp(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogSumExp {
    /// Row `k` holds the exponents of term `k`.
    pub exponents: DMatrix<f64>,
    /// `log c_k`.
    pub offsets: DVector<f64>,
}

impl LogSumExp {
    pub fn from_posynomial(p: &Posynomial, variables: &[String]) -> Self {
        let n = variables.len();
        let mut exponents = DMatrix::zeros(p.terms.len(), n);
        let mut offsets = DVector::zeros(p.terms.len());
        for (k, t) in p.terms.iter().enumerate() {
            offsets[k] = t.coeff.ln();
            for (name, e) in &t.exps {
                let col = variables
                    .iter()
                    .position(|v| v == name)
                    .expect("variable set checked by caller");
                exponents[(k, col)] = *e;
            }
        }
        LogSumExp { exponents, offsets }
    }

    pub fn num_terms(&self) -> usize {
        self.offsets.len()
    }

    pub fn dim(&self) -> usize {
        self.exponents.ncols()
    }

    /// A single term is affine in `y`.
    pub fn is_affine(&self) -> bool {
        self.num_terms() == 1
    }

    fn affine_parts(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.exponents * y + &self.offsets
    }

    /// Max-shifted log-sum-exp.
    pub fn value(&self, y: &DVector<f64>) -> f64 {
        let z = self.affine_parts(y);
        let m = z.max();
        if !m.is_finite() {
            return m;
        }
        m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
    }

    /// Value, gradient and Hessian at `y`.
    pub fn derivatives(&self, y: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let z = self.affine_parts(y);
        let m = z.max();
        let w: DVector<f64> = z.map(|v| (v - m).exp());
        let s = w.sum();
        let value = m + s.ln();
        let w = w / s;
        let grad = self.exponents.tr_mul(&w);
        // A^T (diag(w) - w w^T) A
        let mut wa = self.exponents.clone();
        for (k, mut row) in wa.row_iter_mut().enumerate() {
            row *= w[k];
        }
        let hess = self.exponents.tr_mul(&wa) - &grad * grad.transpose();
        (value, grad, hess)
    }

    /// Substitutes `y = base + basis * z`.
    pub fn restrict(&self, base: &DVector<f64>, basis: &DMatrix<f64>) -> LogSumExp {
        LogSumExp {
            exponents: &self.exponents * basis,
            offsets: &self.offsets + &self.exponents * base,
        }
    }

    /// Adds one trailing variable with coefficient `c` in every term.
    pub fn with_extra_column(&self, c: f64) -> LogSumExp {
        let (rows, cols) = self.exponents.shape();
        let mut e = self.exponents.clone().resize(rows, cols + 1, 0.0);
        for r in 0..rows {
            e[(r, cols)] = c;
        }
        LogSumExp {
            exponents: e,
            offsets: self.offsets.clone(),
        }
    }
}

/// Log-space form of a GP: minimize `objective(y)` subject to
/// `ineq[k](y) <= 0` and `eq_matrix * y = eq_rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexProgram {
    pub variables: Vec<String>,
    pub objective: LogSumExp,
    pub ineq: Vec<LogSumExp>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
}

impl ConvexProgram {
    pub fn point_from(&self, x: &Assignment) -> Result<DVector<f64>, PosyError> {
        let mut y = DVector::zeros(self.variables.len());
        for (i, n) in self.variables.iter().enumerate() {
            y[i] = lookup(x, n)?.ln();
        }
        Ok(y)
    }

    pub fn assignment_from(&self, y: &DVector<f64>) -> Assignment {
        self.variables.iter().cloned().zip(y.iter().map(|v| v.exp())).collect()
    }
}

/// `y = log x`: posynomials become log-sum-exp functions and each monomial
/// equality `d prod x^a = 1` becomes the affine equation `a . y = -log d`.
pub fn to_convex(gp: &GpProblem) -> Result<ConvexProgram, PosyError> {
    gp.check_variables()?;
    let vars = &gp.variables;
    let n = vars.len();
    let mut eq_matrix = DMatrix::zeros(gp.eq.len(), n);
    let mut eq_rhs = DVector::zeros(gp.eq.len());
    for (r, m) in gp.eq.iter().enumerate() {
        eq_rhs[r] = -m.coeff.ln();
        for (name, e) in &m.exps {
            let c = gp.index_of(name).expect("checked");
            eq_matrix[(r, c)] = *e;
        }
    }
    Ok(ConvexProgram {
        variables: vars.clone(),
        objective: LogSumExp::from_posynomial(&gp.objective, vars),
        ineq: gp.ineq.iter().map(|p| LogSumExp::from_posynomial(p, vars)).collect(),
        eq_matrix,
        eq_rhs,
    })
}

/// Best local monomial approximation of a posynomial `f = sum_i u_i` at `x0`,
/// via the weighted AM-GM bound `f(x) >= prod_i (u_i(x) / w_i)^w_i` with
/// `w_i = u_i(x0) / f(x0)`. The bound is tight at `x0`, where gradients agree.
#[derive(Debug, Clone, PartialEq)]
pub struct Condensation {
    pub monomial: Monomial,
    pub weights: Vec<f64>,
}

pub fn condense(f: &Posynomial, x0: &Assignment) -> Result<Condensation, PosyError> {
    let values: Vec<f64> = f.terms.iter().map(|t| t.eval(x0)).collect::<Result<_, _>>()?;
    let total: f64 = values.iter().sum();
    let weights: Vec<f64> = values.iter().map(|u| u / total).collect();
    condense_with_weights(f, &weights).map(|monomial| Condensation { monomial, weights })
}

/// `prod_i (u_i / w_i)^w_i` for given positive weights summing to one.
pub fn condense_with_weights(f: &Posynomial, weights: &[f64]) -> Result<Monomial, PosyError> {
    assert_eq!(weights.len(), f.terms.len(), "one weight per term");
    let mut out = Monomial::constant(1.0)?;
    for (t, &w) in f.terms.iter().zip(weights) {
        if !(w > 0.0) {
            return Err(PosyError::NonPositiveCoefficient(w));
        }
        out = out.mul(&t.scale(1.0 / w)?.powf(w));
    }
    Ok(out)
}
