//! Dense bounded-variable primal simplex.
//!
//! Every row `i` of `A x (sense) b` is written as `A_i x - s_i = b_i` with a
//! slack `s_i` whose bounds encode the sense (`≥`: `[0, ∞)`, `≤`: `(-∞, 0]`,
//! `=`: `[0, 0]`). Variable bounds are handled implicitly, so tightening a
//! bound never adds rows. A phase-one with artificial columns is used only
//! for rows whose slack cannot start basic.
//!
//! The returned [`LpCertificate`] carries what Benders cut generation needs:
//! row duals, reduced costs split by bound, the optimal basis, and a Farkas
//! ray or primal ray when the LP is not solvable.

use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};
use serde::{Deserialize, Serialize};

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-9;
/// Reduced-cost tolerance used for pricing.
pub const PRICE_TOL: f64 = 1e-9;
/// Tolerance used when checking objective identities.
pub const OBJ_TOL: f64 = 1e-6;

const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 50;
const STALL_LIMIT: usize = 50;
const MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowSense {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
}

impl RowSense {
    fn slack_bounds(self) -> (f64, f64) {
        match self {
            RowSense::Ge => (0.0, f64::INFINITY),
            RowSense::Le => (f64::NEG_INFINITY, 0.0),
            RowSense::Eq => (0.0, 0.0),
        }
    }
}

/// `min cᵀx  s.t.  A x (senses) b,  l ≤ x ≤ u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub matrix: DenseMatrix,
    pub rhs: Vec<f64>,
    pub senses: Vec<RowSense>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    /// Problem with all rows `≥` and variables in `[0, ∞)`.
    pub fn covering(objective: Vec<f64>, matrix: DenseMatrix, rhs: Vec<f64>) -> Self {
        let n = objective.len();
        let m = rhs.len();
        LpProblem {
            objective,
            matrix,
            rhs,
            senses: vec![RowSense::Ge; m],
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn num_cols(&self) -> usize {
        self.objective.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.objective.len();
        let m = self.rhs.len();
        if self.matrix.rows() != m || self.matrix.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, expected {m}x{n}",
                self.matrix.rows(),
                self.matrix.cols()
            )));
        }
        if self.senses.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{} row senses for {m} rows",
                self.senses.len()
            )));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "bounds have lengths {}/{} for {n} columns",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for j in 0..n {
            let (l, u) = (self.lower[j], self.upper[j]);
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::InvalidBounds {
                    index: j,
                    lower: l,
                    upper: u,
                });
            }
        }
        let finite = self
            .objective
            .iter()
            .chain(self.rhs.iter())
            .all(|v| v.is_finite());
        if !finite || (0..m).any(|i| self.matrix.row(i).iter().any(|v| !v.is_finite())) {
            return Err(Error::DimensionMismatch("non-finite problem data".into()));
        }
        Ok(())
    }

    /// `σᵀb − sup { σᵀ(A x − s) : x, s within bounds }`.
    ///
    /// A positive value proves that no point within the bounds satisfies the
    /// rows, so `σ` is a Farkas certificate of infeasibility. Returns `-∞`
    /// when the supremum is unbounded.
    pub fn farkas_violation(&self, sigma: &[f64]) -> f64 {
        let col_weights = self.matrix.vec_mul(sigma);
        let mut sup = 0.0;
        for (j, &w) in col_weights.iter().enumerate() {
            match sup_linear(w, self.lower[j], self.upper[j]) {
                Some(v) => sup += v,
                None => return f64::NEG_INFINITY,
            }
        }
        for (i, sense) in self.senses.iter().enumerate() {
            let (l, u) = sense.slack_bounds();
            match sup_linear(-sigma[i], l, u) {
                Some(v) => sup += v,
                None => return f64::NEG_INFINITY,
            }
        }
        dot(sigma, &self.rhs) - sup
    }
}

/// `sup { w x : l ≤ x ≤ u }`, `None` when unbounded.
fn sup_linear(w: f64, l: f64, u: f64) -> Option<f64> {
    if w.abs() <= 1e-12 {
        Some(0.0)
    } else if w > 0.0 {
        u.is_finite().then_some(w * u)
    } else {
        l.is_finite().then_some(w * l)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// A column of the solver's working basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisColumn {
    Structural(usize),
    Slack(usize),
    /// Artificial column `sign · e_row` that could not be pivoted out.
    Artificial {
        row: usize,
        positive: bool,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpCertificate {
    pub status: LpStatus,
    /// Structural primal values (the last iterate when not optimal).
    pub x: Vec<f64>,
    pub objective: f64,
    /// Row duals `η`; nonnegative on `≥` rows, nonpositive on `≤` rows.
    pub duals: Vec<f64>,
    /// Reduced costs of variables at their lower bound (`≥ 0`).
    pub reduced_lower: Vec<f64>,
    /// Reduced costs of variables at their upper bound (`≤ 0`).
    pub reduced_upper: Vec<f64>,
    /// Basic column of each row, in row order.
    pub basis: Vec<BasisColumn>,
    pub farkas: Option<Vec<f64>>,
    pub ray: Option<Vec<f64>>,
    pub iterations: usize,
}

impl LpCertificate {
    /// `ηᵀb + Σ η̲ᵢ lᵢ + Σ η̄ᵢ uᵢ` over finite bounds.
    pub fn dual_objective(&self, p: &LpProblem) -> f64 {
        let mut v = dot(&self.duals, &p.rhs);
        for j in 0..p.num_cols() {
            if p.lower[j].is_finite() {
                v += self.reduced_lower[j] * p.lower[j];
            }
            if p.upper[j].is_finite() {
                v += self.reduced_upper[j] * p.upper[j];
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VarState {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Nonbasic free variable resting at zero.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ColKind {
    Structural(usize),
    Slack(usize),
    Artificial(usize, bool),
}

enum Outcome {
    Optimal,
    Unbounded(Vec<f64>),
}

struct Engine<'a> {
    p: &'a LpProblem,
    m: usize,
    kinds: Vec<ColKind>,
    cols: Vec<Vec<f64>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<VarState>,
    basis: Vec<usize>,
    binv: DenseMatrix,
    iterations: usize,
    since_refactor: usize,
}

impl<'a> Engine<'a> {
    fn new(p: &'a LpProblem) -> Self {
        let n = p.num_cols();
        let m = p.num_rows();
        let mut kinds = Vec::with_capacity(n + 2 * m);
        let mut cols = Vec::with_capacity(n + 2 * m);
        let mut lower = Vec::with_capacity(n + 2 * m);
        let mut upper = Vec::with_capacity(n + 2 * m);
        let mut x = Vec::with_capacity(n + 2 * m);
        let mut state = Vec::with_capacity(n + 2 * m);
        for j in 0..n {
            kinds.push(ColKind::Structural(j));
            cols.push(p.matrix.column(j));
            let (l, u) = (p.lower[j], p.upper[j]);
            lower.push(l);
            upper.push(u);
            if l.is_finite() {
                x.push(l);
                state.push(VarState::AtLower);
            } else if u.is_finite() {
                x.push(u);
                state.push(VarState::AtUpper);
            } else {
                x.push(0.0);
                state.push(VarState::Free);
            }
        }
        let mut residual = p.rhs.clone();
        for j in 0..n {
            if x[j] != 0.0 {
                for (r, a) in residual.iter_mut().zip(&cols[j]) {
                    *r -= a * x[j];
                }
            }
        }
        let mut basis = vec![0; m];
        let mut binv = DenseMatrix::zeros(m, m);
        let mut artificials = Vec::new();
        for i in 0..m {
            let (sl, su) = p.senses[i].slack_bounds();
            let mut col = vec![0.0; m];
            col[i] = -1.0;
            let slack_idx = kinds.len();
            kinds.push(ColKind::Slack(i));
            cols.push(col);
            lower.push(sl);
            upper.push(su);
            let s = -residual[i];
            if s >= sl - FEAS_TOL && s <= su + FEAS_TOL {
                x.push(s);
                state.push(VarState::Basic(i));
                basis[i] = slack_idx;
                binv[(i, i)] = -1.0;
            } else {
                x.push(0.0);
                state.push(if sl == 0.0 {
                    VarState::AtLower
                } else {
                    VarState::AtUpper
                });
                artificials.push((i, residual[i]));
            }
        }
        for (i, r) in artificials {
            let positive = r > 0.0;
            let mut col = vec![0.0; m];
            col[i] = if positive { 1.0 } else { -1.0 };
            let idx = kinds.len();
            kinds.push(ColKind::Artificial(i, positive));
            cols.push(col);
            lower.push(0.0);
            upper.push(f64::INFINITY);
            x.push(r.abs());
            state.push(VarState::Basic(i));
            basis[i] = idx;
            binv[(i, i)] = if positive { 1.0 } else { -1.0 };
        }
        let total = kinds.len();
        Engine {
            p,
            m,
            kinds,
            cols,
            lower,
            upper,
            cost: vec![0.0; total],
            x,
            state,
            basis,
            binv,
            iterations: 0,
            since_refactor: 0,
        }
    }

    fn has_artificials(&self) -> bool {
        self.kinds
            .iter()
            .any(|k| matches!(k, ColKind::Artificial(..)))
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut b = DenseMatrix::zeros(m, m);
        for (r, &j) in self.basis.iter().enumerate() {
            for i in 0..m {
                b[(i, r)] = self.cols[j][i];
            }
        }
        self.binv = b.inverse()?;
        let mut residual = self.p.rhs.clone();
        for (j, st) in self.state.iter().enumerate() {
            if !matches!(st, VarState::Basic(_)) && self.x[j] != 0.0 {
                for (r, a) in residual.iter_mut().zip(&self.cols[j]) {
                    *r -= a * self.x[j];
                }
            }
        }
        let xb = self.binv.mul_vec(&residual);
        for (r, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[r];
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn duals(&self) -> Vec<f64> {
        let cb: Vec<f64> = self.basis.iter().map(|&j| self.cost[j]).collect();
        self.binv.vec_mul(&cb)
    }

    fn reduced_cost(&self, y: &[f64], j: usize) -> f64 {
        self.cost[j] - dot(y, &self.cols[j])
    }

    fn objective(&self) -> f64 {
        self.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    fn run(&mut self) -> Result<Outcome> {
        let mut stall = 0usize;
        loop {
            self.iterations += 1;
            if self.iterations > MAX_ITERATIONS {
                return Err(Error::IterationLimit(MAX_ITERATIONS));
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let bland = stall >= STALL_LIMIT;
            let y = self.duals();
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.kinds.len() {
                let st = self.state[j];
                if matches!(st, VarState::Basic(_)) || self.lower[j] == self.upper[j] {
                    continue;
                }
                let d = self.reduced_cost(&y, j);
                let eligible = match st {
                    VarState::AtLower => d < -PRICE_TOL,
                    VarState::AtUpper => d > PRICE_TOL,
                    VarState::Free => d.abs() > PRICE_TOL,
                    VarState::Basic(_) => false,
                };
                if !eligible {
                    continue;
                }
                match entering {
                    None => entering = Some((j, d)),
                    Some((_, best)) if !bland && d.abs() > best.abs() => entering = Some((j, d)),
                    _ => {}
                }
                if bland {
                    break;
                }
            }
            let Some((q, dq)) = entering else {
                return Ok(Outcome::Optimal);
            };
            let dir = if dq < 0.0 { 1.0 } else { -1.0 };
            let alpha = self.binv.mul_vec(&self.cols[q]);

            // Ratio test over basic variables.
            let mut theta = f64::INFINITY;
            let mut leave: Option<usize> = None;
            for r in 0..self.m {
                let delta = -dir * alpha[r];
                if delta.abs() <= PIVOT_TOL {
                    continue;
                }
                let j = self.basis[r];
                let ratio = if delta < 0.0 {
                    if !self.lower[j].is_finite() {
                        continue;
                    }
                    ((self.x[j] - self.lower[j]) / -delta).max(0.0)
                } else {
                    if !self.upper[j].is_finite() {
                        continue;
                    }
                    ((self.upper[j] - self.x[j]) / delta).max(0.0)
                };
                let better = match leave {
                    None => true,
                    Some(prev) => {
                        if ratio < theta - 1e-12 {
                            true
                        } else if ratio <= theta + 1e-12 {
                            let (a_new, a_old) = (alpha[r].abs(), alpha[prev].abs());
                            if bland {
                                j < self.basis[prev]
                            } else if (a_new - a_old).abs() > 1e-12 {
                                a_new > a_old
                            } else {
                                j < self.basis[prev]
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    theta = theta.min(ratio);
                    leave = Some(r);
                }
            }
            let flip = self.upper[q] - self.lower[q];
            if leave.is_none() && !flip.is_finite() {
                let n = self.p.num_cols();
                let mut ray = vec![0.0; n];
                if q < n {
                    ray[q] = dir;
                }
                for r in 0..self.m {
                    let j = self.basis[r];
                    if j < n {
                        ray[j] = -dir * alpha[r];
                    }
                }
                return Ok(Outcome::Unbounded(ray));
            }
            let step = if flip.is_finite() && flip <= theta {
                flip
            } else {
                theta
            };
            if step <= 1e-12 {
                stall += 1;
            } else {
                stall = 0;
            }
            self.x[q] += dir * step;
            for r in 0..self.m {
                let j = self.basis[r];
                self.x[j] -= dir * step * alpha[r];
            }
            if flip.is_finite() && flip <= theta {
                self.state[q] = if dir > 0.0 {
                    VarState::AtUpper
                } else {
                    VarState::AtLower
                };
                self.x[q] = if dir > 0.0 {
                    self.upper[q]
                } else {
                    self.lower[q]
                };
                continue;
            }
            let r = leave.expect("finite ratio implies a leaving row");
            let out = self.basis[r];
            let delta = -dir * alpha[r];
            if delta < 0.0 {
                self.state[out] = VarState::AtLower;
                self.x[out] = self.lower[out];
            } else {
                self.state[out] = VarState::AtUpper;
                self.x[out] = self.upper[out];
            }
            self.pivot(r, q, &alpha);
        }
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[r];
        for v in self.binv.row_mut(r) {
            *v /= piv;
        }
        let pivot_row = self.binv.row(r).to_vec();
        for i in 0..m {
            if i == r || alpha[i] == 0.0 {
                continue;
            }
            let f = alpha[i];
            for (v, pr) in self.binv.row_mut(i).iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
        }
        self.basis[r] = q;
        self.state[q] = VarState::Basic(r);
        self.since_refactor += 1;
    }

    /// Pivots zero-valued artificials out of the basis where a non-fixed
    /// original column can replace them, then fixes all artificials at zero.
    fn purge_artificials(&mut self) {
        let n_orig = self.p.num_cols() + self.m;
        for r in 0..self.m {
            let j = self.basis[r];
            if !matches!(self.kinds[j], ColKind::Artificial(..)) {
                continue;
            }
            let row = self.binv.row(r).to_vec();
            let mut best: Option<(usize, f64)> = None;
            for q in 0..n_orig {
                if matches!(self.state[q], VarState::Basic(_)) || self.lower[q] == self.upper[q] {
                    continue;
                }
                let a = dot(&row, &self.cols[q]);
                if a.abs() > 1e-7 && best.is_none_or(|(_, b)| a.abs() > b.abs() + 1e-12) {
                    best = Some((q, a));
                }
            }
            if let Some((q, _)) = best {
                let alpha = self.binv.mul_vec(&self.cols[q]);
                self.state[j] = VarState::AtLower;
                self.x[j] = 0.0;
                self.pivot(r, q, &alpha);
            }
        }
        for j in 0..self.kinds.len() {
            if matches!(self.kinds[j], ColKind::Artificial(..)) {
                self.upper[j] = 0.0;
                if !matches!(self.state[j], VarState::Basic(_)) {
                    self.state[j] = VarState::AtLower;
                    self.x[j] = 0.0;
                }
            }
        }
    }

    fn basis_columns(&self) -> Vec<BasisColumn> {
        self.basis
            .iter()
            .map(|&j| match self.kinds[j] {
                ColKind::Structural(k) => BasisColumn::Structural(k),
                ColKind::Slack(i) => BasisColumn::Slack(i),
                ColKind::Artificial(row, positive) => BasisColumn::Artificial { row, positive },
            })
            .collect()
    }

    fn structural_x(&self) -> Vec<f64> {
        // + 0.0 turns −0.0 into 0.0
        self.x[..self.p.num_cols()]
            .iter()
            .map(|v| v + 0.0)
            .collect()
    }
}

/// Solves an LP to optimality, infeasibility or unboundedness.
///
/// Pivoting is Dantzig's rule with lowest-index tie-breaking, switching to
/// Bland's rule after a run of degenerate pivots, so identical inputs always
/// produce identical certificates.
pub fn solve_lp(p: &LpProblem) -> Result<LpCertificate> {
    p.validate()?;
    let n = p.num_cols();
    let m = p.num_rows();
    let mut eng = Engine::new(p);

    if eng.has_artificials() {
        for (j, k) in eng.kinds.iter().enumerate() {
            eng.cost[j] = if matches!(k, ColKind::Artificial(..)) {
                1.0
            } else {
                0.0
            };
        }
        match eng.run()? {
            Outcome::Optimal => {}
            Outcome::Unbounded(_) => {
                return Err(Error::NumericalBreakdown(
                    "phase one reported unboundedness".into(),
                ))
            }
        }
        eng.refactor()?;
        let infeas = eng.objective();
        let scale = 1.0 + p.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if infeas > FEAS_TOL * scale {
            let sigma = eng.duals();
            return Ok(LpCertificate {
                status: LpStatus::Infeasible,
                x: eng.structural_x(),
                objective: f64::INFINITY,
                duals: vec![0.0; m],
                reduced_lower: vec![0.0; n],
                reduced_upper: vec![0.0; n],
                basis: eng.basis_columns(),
                farkas: Some(sigma),
                ray: None,
                iterations: eng.iterations,
            });
        }
        eng.purge_artificials();
    }

    for j in 0..eng.kinds.len() {
        eng.cost[j] = match eng.kinds[j] {
            ColKind::Structural(k) => p.objective[k],
            _ => 0.0,
        };
    }
    let outcome = eng.run()?;
    eng.refactor()?;
    if let Outcome::Unbounded(ray) = outcome {
        return Ok(LpCertificate {
            status: LpStatus::Unbounded,
            x: eng.structural_x(),
            objective: f64::NEG_INFINITY,
            duals: vec![0.0; m],
            reduced_lower: vec![0.0; n],
            reduced_upper: vec![0.0; n],
            basis: eng.basis_columns(),
            farkas: None,
            ray: Some(ray),
            iterations: eng.iterations,
        });
    }

    let y = eng.duals();
    let mut reduced_lower = vec![0.0; n];
    let mut reduced_upper = vec![0.0; n];
    for j in 0..n {
        let d = eng.reduced_cost(&y, j);
        match eng.state[j] {
            VarState::Basic(_) | VarState::Free => {}
            VarState::AtLower | VarState::AtUpper if eng.lower[j] == eng.upper[j] => {
                if d >= 0.0 {
                    reduced_lower[j] = d;
                } else {
                    reduced_upper[j] = d;
                }
            }
            VarState::AtLower => reduced_lower[j] = d,
            VarState::AtUpper => reduced_upper[j] = d,
        }
    }
    let x = eng.structural_x();
    let objective = dot(&p.objective, &x);
    Ok(LpCertificate {
        status: LpStatus::Optimal,
        x,
        objective,
        duals: y,
        reduced_lower,
        reduced_upper,
        basis: eng.basis_columns(),
        farkas: None,
        ray: None,
        iterations: eng.iterations,
    })
}

/// Inverse of the optimal basis matrix, rows ordered like `cert.basis`.
///
/// Applied to the right-hand side it yields the basic variable values.
pub fn basis_inverse_rows(cert: &LpCertificate, p: &LpProblem) -> Result<DenseMatrix> {
    if cert.status != LpStatus::Optimal {
        return Err(Error::NotOptimal);
    }
    let m = p.num_rows();
    if cert.basis.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} columns for {m} rows",
            cert.basis.len()
        )));
    }
    let mut b = DenseMatrix::zeros(m, m);
    for (r, col) in cert.basis.iter().enumerate() {
        match *col {
            BasisColumn::Structural(j) => {
                for i in 0..m {
                    b[(i, r)] = p.matrix[(i, j)];
                }
            }
            BasisColumn::Slack(i) => b[(i, r)] = -1.0,
            BasisColumn::Artificial { row, positive } => {
                b[(row, r)] = if positive { 1.0 } else { -1.0 }
            }
        }
    }
    b.inverse()
}
