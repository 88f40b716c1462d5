//! Classical Benders decomposition for `min cᵀx + dᵀy  s.t.  Ax + Gy ≥ b, x, y ≥ 0`.

use crate::error::{Error, Result};
use crate::extended::ExtReal;
use crate::linalg::{dot, DenseMatrix};
use crate::model::{AffineX, ModelBuilder};
use crate::simplex::{solve_lp, LpProblem, LpStatus, RowSense};
use crate::trace::{BendersTrace, CutKind, DriverOptions, TraceRow};
use serde::{Deserialize, Serialize};

/// Upper bound used for `x` when the instance gives none.
pub const DEFAULT_X_UPPER: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpBendersInstance {
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub g: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_upper: Option<Vec<f64>>,
}

impl LpBendersInstance {
    pub fn n1(&self) -> usize {
        self.c.len()
    }

    pub fn n2(&self) -> usize {
        self.d.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.b.len();
        check_matrix("a", &self.a, m, self.n1())?;
        check_matrix("g", &self.g, m, self.n2())?;
        if let Some(u) = &self.x_upper {
            if u.len() != self.n1() {
                return Err(Error::InvalidInstance(format!(
                    "x_upper: expected {} entries, found {}",
                    self.n1(),
                    u.len()
                )));
            }
            if u.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidInstance(
                    "x_upper: entries must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(())
    }

    fn x_upper(&self) -> Vec<f64> {
        match &self.x_upper {
            Some(u) => u.clone(),
            None => vec![DEFAULT_X_UPPER; self.n1()],
        }
    }

    /// The full LP over `(x, y)` with the same `x` box the driver uses.
    pub fn extensive_form(&self) -> Result<LpProblem> {
        let (n1, n2) = (self.n1(), self.n2());
        let rows: Vec<Vec<f64>> = (0..self.b.len())
            .map(|i| self.a[i].iter().chain(&self.g[i]).copied().collect())
            .collect();
        let mut upper = self.x_upper();
        upper.extend(std::iter::repeat_n(f64::INFINITY, n2));
        Ok(LpProblem {
            objective: self.c.iter().chain(&self.d).copied().collect(),
            matrix: DenseMatrix::from_rows(&rows, n1 + n2)?,
            rhs: self.b.clone(),
            senses: vec![RowSense::Ge; self.b.len()],
            lower: vec![0.0; n1 + n2],
            upper,
        })
    }
}

pub(crate) fn check_matrix(name: &str, a: &[Vec<f64>], rows: usize, cols: usize) -> Result<()> {
    if a.len() != rows {
        return Err(Error::InvalidInstance(format!(
            "{name}: expected {rows} rows, found {}",
            a.len()
        )));
    }
    for (i, r) in a.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::InvalidInstance(format!(
                "{name}[{i}]: expected {cols} entries, found {}",
                r.len()
            )));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInstance(format!(
                "{name}[{i}]: entries must be finite"
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LpBendersResult {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub trace: BendersTrace,
}

#[derive(Debug, Clone, PartialEq)]
enum Cut {
    /// `z ≥ f(x)`
    Optimality(AffineX),
    /// `f(x) ≤ 0`
    Feasibility(AffineX),
}

/// Subproblem `min dᵀy  s.t.  Gy ≥ r, y ≥ 0`.
fn subproblem(inst: &LpBendersInstance, r: Vec<f64>) -> Result<LpProblem> {
    let g = DenseMatrix::from_rows(&inst.g, inst.n2())?;
    Ok(LpProblem::covering(inst.d.clone(), g, r))
}

/// Lower bound on `dᵀy` over every `(x, y)` in the extensive form.
fn second_stage_floor(inst: &LpBendersInstance) -> Result<Option<f64>> {
    let mut lp = inst.extensive_form()?;
    for v in lp.objective.iter_mut().take(inst.n1()) {
        *v = 0.0;
    }
    let cert = solve_lp(&lp)?;
    match cert.status {
        LpStatus::Optimal => Ok(Some(cert.objective)),
        LpStatus::Unbounded => Ok(None),
        LpStatus::Infeasible => Err(Error::Infeasible(
            "no x in the box admits a feasible second stage".into(),
        )),
    }
}

pub fn solve_lp_benders(inst: &LpBendersInstance, opts: &DriverOptions) -> Result<LpBendersResult> {
    inst.validate()?;
    if inst.x_upper.is_none() {
        log::warn!("no upper bounds on x given; using {DEFAULT_X_UPPER}");
    }
    let n1 = inst.n1();
    let x_upper = inst.x_upper();
    let floor = second_stage_floor(inst)?;
    let mut cuts: Vec<Cut> = Vec::new();
    let mut trace = BendersTrace::default();
    let mut lower = ExtReal::NegInf;
    let mut upper = f64::INFINITY;
    let mut best: Option<(Vec<f64>, Vec<f64>)> = None;

    for iter in 1..=opts.max_iters {
        let has_opt = cuts.iter().any(|c| matches!(c, Cut::Optimality(_)));
        let mut m = ModelBuilder::new();
        let xs: Vec<usize> = (0..n1)
            .map(|j| m.add_var(inst.c[j], 0.0, x_upper[j], false))
            .collect();
        let z = (has_opt || floor.is_some()).then(|| {
            m.add_var(
                1.0,
                floor.unwrap_or(f64::NEG_INFINITY),
                f64::INFINITY,
                false,
            )
        });
        for cut in &cuts {
            match cut {
                Cut::Optimality(f) => {
                    let mut row: Vec<(usize, f64)> =
                        xs.iter().map(|&j| (j, -f.coeffs[j])).collect();
                    row.push((z.expect("z exists once a cut does"), 1.0));
                    m.add_row(row, RowSense::Ge, f.constant);
                }
                Cut::Feasibility(f) => {
                    let row = xs.iter().map(|&j| (j, f.coeffs[j])).collect();
                    m.add_row(row, RowSense::Le, -f.constant);
                }
            }
        }
        let master = m.build()?;
        let mc = solve_lp(&master.lp)?;
        match mc.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => {
                return Err(Error::Infeasible("master problem is infeasible".into()))
            }
            LpStatus::Unbounded => {
                return Err(Error::Unbounded("master problem is unbounded".into()))
            }
        }
        let x: Vec<f64> = mc.x[..n1].iter().map(|v| v + 0.0).collect();
        if z.is_some() {
            lower = lower.max(ExtReal::Finite(mc.objective));
        }

        let rhs: Vec<f64> = (0..inst.b.len())
            .map(|i| inst.b[i] - dot(&inst.a[i], &x))
            .collect();
        let sub = subproblem(inst, rhs.clone())?;
        let sc = solve_lp(&sub)?;
        let (cut, sub_value) = match sc.status {
            LpStatus::Optimal => {
                let v = dot(&inst.c, &x) + sc.objective;
                if v < upper {
                    upper = v;
                    best = Some((x.clone(), sc.x.clone()));
                }
                (
                    Cut::Optimality(AffineX::from_rhs(&sc.duals, &inst.b, &inst.a, n1)),
                    ExtReal::Finite(sc.objective),
                )
            }
            LpStatus::Infeasible => {
                let sigma = sc
                    .farkas
                    .clone()
                    .ok_or_else(|| Error::NumericalBreakdown("missing Farkas ray".into()))?;
                let kappa = dot(&sigma, &rhs) - sub.farkas_violation(&sigma);
                let mut f = AffineX::from_rhs(&sigma, &inst.b, &inst.a, n1);
                f.constant -= kappa;
                (Cut::Feasibility(f), ExtReal::PosInf)
            }
            LpStatus::Unbounded => {
                return Err(Error::Unbounded(
                    "second-stage problem is unbounded below".into(),
                ))
            }
        };
        let closed = matches!(lower, ExtReal::Finite(l) if upper - l <= opts.tol);
        let kind = match (&cut, closed) {
            (_, true) => CutKind::None,
            (Cut::Optimality(_), _) => CutKind::Optimality,
            (Cut::Feasibility(_), _) => CutKind::Feasibility,
        };
        trace.push(TraceRow {
            iter,
            lower,
            upper: ExtReal::of(upper),
            x,
            cut: kind,
            scenario_values: vec![sub_value],
            phi: None,
            terms: 1,
        });
        if closed {
            let (x, y) = best.expect("a finite upper bound has an incumbent");
            return Ok(LpBendersResult {
                x,
                y,
                value: upper,
                iterations: iter,
                trace,
            });
        }
        cuts.push(cut);
    }
    Err(Error::IterationLimit(opts.max_iters))
}
