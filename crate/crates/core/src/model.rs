//! Incremental MILP construction for master problems, and affine functions
//! of the first-stage variables with interval bounds over the x-box.

use crate::error::Result;
use crate::linalg::{dot, DenseMatrix};
use crate::milp::MilpProblem;
use crate::simplex::{LpProblem, RowSense};

/// `coeffsᵀx + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineX {
    pub coeffs: Vec<f64>,
    pub constant: f64,
}

impl AffineX {
    /// `wᵀ(b − A x)` for a row-major `A`.
    pub fn from_rhs(weights: &[f64], b: &[f64], a: &[Vec<f64>], nx: usize) -> AffineX {
        let mut coeffs = vec![0.0; nx];
        for (i, &w) in weights.iter().enumerate() {
            if w != 0.0 {
                for (c, aij) in coeffs.iter_mut().zip(&a[i]) {
                    *c -= w * aij;
                }
            }
        }
        AffineX {
            coeffs,
            constant: dot(weights, b),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        dot(&self.coeffs, x) + self.constant
    }

    pub fn add(&mut self, other: &AffineX, scale: f64) {
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += scale * o;
        }
        self.constant += scale * other.constant;
    }

    /// `[min, max]` over the box `lower ≤ x ≤ upper` (finite bounds).
    pub fn range(&self, lower: &[f64], upper: &[f64]) -> (f64, f64) {
        let mut lo = self.constant;
        let mut hi = self.constant;
        for (j, &c) in self.coeffs.iter().enumerate() {
            if c >= 0.0 {
                lo += c * lower[j];
                hi += c * upper[j];
            } else {
                lo += c * upper[j];
                hi += c * lower[j];
            }
        }
        (lo, hi)
    }
}
/// Sparse row: coefficients, sense and right-hand side.
type Row = (Vec<(usize, f64)>, RowSense, f64);

/// Column-wise MILP builder with sparse rows.
#[derive(Debug, Clone, Default)]
pub struct ModelBuilder {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    integer: Vec<bool>,
    rows: Vec<Row>,
}

impl ModelBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64, integer: bool) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.integer.push(integer);
        self.objective.len() - 1
    }

    pub fn add_binary(&mut self) -> usize {
        self.add_var(0.0, 0.0, 1.0, true)
    }

    pub fn set_lower(&mut self, var: usize, lower: f64) {
        self.lower[var] = lower;
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: RowSense, rhs: f64) {
        self.rows.push((coeffs, sense, rhs));
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn build(&self) -> Result<MilpProblem> {
        let n = self.objective.len();
        let mut dense = Vec::with_capacity(self.rows.len());
        for (coeffs, _, _) in &self.rows {
            let mut r = vec![0.0; n];
            for &(j, v) in coeffs {
                r[j] += v;
            }
            dense.push(r);
        }
        let lp = LpProblem {
            objective: self.objective.clone(),
            matrix: DenseMatrix::from_rows(&dense, n)?,
            rhs: self.rows.iter().map(|r| r.2).collect(),
            senses: self.rows.iter().map(|r| r.1).collect(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        };
        MilpProblem::new(lp, self.integer.clone())
    }
}

/// Adds `x ≠ point` for integer `x` within `[lower, upper]` using one
/// binary per feasible direction (`x_j ≥ p_j + 1` or `x_j ≤ p_j − 1`).
pub fn add_no_good(
    b: &mut ModelBuilder,
    xvars: &[usize],
    point: &[f64],
    lower: &[f64],
    upper: &[f64],
) {
    let mut selectors = Vec::new();
    for (k, &xv) in xvars.iter().enumerate() {
        let p = point[k].round();
        if p + 1.0 <= upper[k] {
            // x ≥ p + 1 − (p + 1 − l)(1 − δ)
            let d = b.add_binary();
            let span = p + 1.0 - lower[k];
            b.add_row(vec![(xv, 1.0), (d, -span)], RowSense::Ge, p + 1.0 - span);
            selectors.push(d);
        }
        if p - 1.0 >= lower[k] {
            // x ≤ p − 1 + (u − p + 1)(1 − δ)
            let d = b.add_binary();
            let span = upper[k] - p + 1.0;
            b.add_row(vec![(xv, 1.0), (d, span)], RowSense::Le, p - 1.0 + span);
            selectors.push(d);
        }
    }
    b.add_row(
        selectors.into_iter().map(|d| (d, 1.0)).collect(),
        RowSense::Ge,
        1.0,
    );
}

/// Linearizes `z ≥ min_t (f_t(x) + φ_t·φ̄)` with one selector binary per
/// term: `z ≥ f_t(x) + φ_t·φ̄ − M(1 − u_t)`, `Σ u_t = 1`. A single term is
/// added as a plain inequality.
pub fn add_min_epigraph(
    b: &mut ModelBuilder,
    z: usize,
    xvars: &[usize],
    terms: &[(AffineX, f64)],
    phi: Option<usize>,
    big_m: f64,
) {
    let single = terms.len() == 1;
    let mut selectors = Vec::new();
    for (f, phi_coeff) in terms {
        let mut row: Vec<(usize, f64)> = vec![(z, 1.0)];
        row.extend(
            xvars
                .iter()
                .zip(&f.coeffs)
                .filter(|(_, c)| **c != 0.0)
                .map(|(&v, &c)| (v, -c)),
        );
        if let Some(p) = phi {
            if *phi_coeff != 0.0 {
                row.push((p, -phi_coeff));
            }
        }
        if single {
            b.add_row(row, RowSense::Ge, f.constant);
        } else {
            let u = b.add_binary();
            row.push((u, -big_m));
            b.add_row(row, RowSense::Ge, f.constant - big_m);
            selectors.push(u);
        }
    }
    if !single {
        b.add_row(
            selectors.into_iter().map(|u| (u, 1.0)).collect(),
            RowSense::Eq,
            1.0,
        );
    }
}

/// `(max_t hi_t − min_t lo_t)·1.1 + 1` over the given ranges, or `fallback`
/// when that is not finite.
pub fn spread_big_m(ranges: &[(f64, f64)], fallback: f64) -> f64 {
    let hi = ranges.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let lo = ranges.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let m = (hi - lo).max(0.0) * 1.1 + 1.0;
    if m.is_finite() {
        m
    } else {
        log::warn!("big-M from interval bounds is not finite; using {fallback}");
        fallback
    }
}
