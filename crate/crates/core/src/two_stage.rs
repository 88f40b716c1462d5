//! Benders decomposition for two-stage stochastic MILPs with finitely many
//! scenarios. Each scenario subproblem is solved by branch-and-bound and its
//! tree becomes a min-of-affine cut on the scenario's epigraph variable.

use crate::benders_lp::check_matrix;
use crate::error::{Error, Result};
use crate::extended::ExtReal;
use crate::linalg::{dot, DenseMatrix};
use crate::milp::{extract_dual_function, solve_milp, BnbOptions, MilpProblem, MilpStatus};
use crate::model::{add_min_epigraph, add_no_good, spread_big_m, AffineX, ModelBuilder};
use crate::simplex::{solve_lp, LpProblem, LpStatus, RowSense};
use crate::trace::{BendersTrace, CutKind, DriverOptions, TraceRow};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Big-M used when interval bounds give no finite value.
pub const FALLBACK_BIG_M: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub probability: f64,
    pub a2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoStageInstance {
    pub c: Vec<f64>,
    pub d2: Vec<f64>,
    #[serde(default)]
    pub a1: Vec<Vec<f64>>,
    #[serde(default)]
    pub b1: Vec<f64>,
    pub g2: Vec<Vec<f64>>,
    pub scenarios: Vec<Scenario>,
    pub x_integer: Vec<bool>,
    pub y_integer: Vec<bool>,
    pub x_lower: Vec<f64>,
    pub x_upper: Vec<f64>,
}

impl TwoStageInstance {
    pub fn n1(&self) -> usize {
        self.c.len()
    }

    pub fn n2(&self) -> usize {
        self.d2.len()
    }

    pub fn m2(&self) -> usize {
        self.g2.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (n1, n2) = (self.n1(), self.n2());
        check_matrix("a1", &self.a1, self.b1.len(), n1)?;
        check_matrix("g2", &self.g2, self.m2(), n2)?;
        let mask = |name: &str, v: &[bool], n: usize| {
            if v.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidInstance(format!(
                    "{name}: expected {n} entries, found {}",
                    v.len()
                )))
            }
        };
        mask("x_integer", &self.x_integer, n1)?;
        mask("y_integer", &self.y_integer, n2)?;
        check_box(&self.x_lower, &self.x_upper, n1)?;
        if self.scenarios.is_empty() {
            return Err(Error::InvalidInstance(
                "scenarios: at least one scenario is required".into(),
            ));
        }
        let mut total = 0.0;
        for (k, s) in self.scenarios.iter().enumerate() {
            if !(0.0..=1.0).contains(&s.probability) {
                return Err(Error::InvalidInstance(format!(
                    "scenarios[{k}].probability must lie in [0, 1]"
                )));
            }
            total += s.probability;
            check_matrix(&format!("scenarios[{k}].a2"), &s.a2, self.m2(), n1)?;
            if s.b2.len() != self.m2() {
                return Err(Error::InvalidInstance(format!(
                    "scenarios[{k}].b2: expected {} entries",
                    self.m2()
                )));
            }
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInstance(format!(
                "scenario probabilities sum to {total}, not 1"
            )));
        }
        Ok(())
    }

    /// Scenario subproblem `min d²ᵀy  s.t.  G²y ≥ b²_ω − A²_ω x, y ≥ 0`.
    pub fn scenario_problem(&self, s: &Scenario, x: &[f64]) -> Result<MilpProblem> {
        let rhs = (0..self.m2()).map(|i| s.b2[i] - dot(&s.a2[i], x)).collect();
        let g = DenseMatrix::from_rows(&self.g2, self.n2())?;
        MilpProblem::new(
            LpProblem::covering(self.d2.clone(), g, rhs),
            self.y_integer.clone(),
        )
    }

    /// Indices of scenarios with positive probability.
    pub fn active_scenarios(&self) -> Vec<usize> {
        (0..self.scenarios.len())
            .filter(|&k| self.scenarios[k].probability > 0.0)
            .collect()
    }
}

pub(crate) fn check_box(lower: &[f64], upper: &[f64], n: usize) -> Result<()> {
    if lower.len() != n || upper.len() != n {
        return Err(Error::InvalidInstance(format!(
            "x_lower/x_upper: expected {n} entries each"
        )));
    }
    for j in 0..n {
        if !lower[j].is_finite() || !upper[j].is_finite() {
            return Err(Error::InvalidInstance(format!(
                "x bounds of variable {j} must be finite"
            )));
        }
        if lower[j] > upper[j] {
            return Err(Error::InvalidBounds {
                index: j,
                lower: lower[j],
                upper: upper[j],
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStageResult {
    pub x: Vec<f64>,
    /// Second-stage solution per scenario; empty for zero-probability scenarios.
    pub y: Vec<Vec<f64>>,
    pub value: f64,
    pub iterations: usize,
    pub trace: BendersTrace,
}

#[derive(Debug, Clone, PartialEq)]
enum Cut {
    Optimality {
        scenario: usize,
        terms: Vec<AffineX>,
        big_m: f64,
    },
    /// `f(x) ≤ 0`
    Feasibility(AffineX),
    NoGood(Vec<f64>),
}

enum ScenarioOutcome {
    Solved {
        value: f64,
        y: Vec<f64>,
        terms: Vec<AffineX>,
    },
    Infeasible(Cut),
}

fn solve_scenario(inst: &TwoStageInstance, k: usize, x: &[f64]) -> Result<ScenarioOutcome> {
    let s = &inst.scenarios[k];
    let p = inst.scenario_problem(s, x)?;
    let sol = solve_milp(&p, &BnbOptions::default())?;
    match sol.status {
        MilpStatus::Optimal => {
            let dual = extract_dual_function(&sol.tree)?;
            let terms = dual
                .terms
                .iter()
                .map(|t| {
                    let mut f = AffineX::from_rhs(&t.beta2, &s.b2, &s.a2, inst.n1());
                    f.constant += t.constant;
                    f
                })
                .collect();
            Ok(ScenarioOutcome::Solved {
                value: sol.value,
                y: sol.x.expect("optimal has a solution"),
                terms,
            })
        }
        MilpStatus::Infeasible => {
            let lp = solve_lp(&p.lp)?;
            if lp.status == LpStatus::Infeasible {
                if let Some(sigma) = lp.farkas {
                    let kappa = dot(&sigma, &p.lp.rhs) - p.lp.farkas_violation(&sigma);
                    let mut f = AffineX::from_rhs(&sigma, &s.b2, &s.a2, inst.n1());
                    f.constant -= kappa;
                    return Ok(ScenarioOutcome::Infeasible(Cut::Feasibility(f)));
                }
            }
            if inst.x_integer.iter().any(|&i| !i) {
                return Err(Error::AssumptionViolated(format!(
                    "scenario {k} is integer infeasible at a point that no linear cut separates and x is not all integer"
                )));
            }
            Ok(ScenarioOutcome::Infeasible(Cut::NoGood(x.to_vec())))
        }
        MilpStatus::Unbounded => Err(Error::Unbounded(format!(
            "scenario {k} subproblem is unbounded"
        ))),
        MilpStatus::NodeLimit => Err(Error::NodeLimit(BnbOptions::default().node_limit)),
    }
}

/// LP-relaxation floor on `d²ᵀy_ω` over the first-stage feasible box.
fn scenario_floor(inst: &TwoStageInstance, k: usize) -> Result<Option<f64>> {
    let (n1, n2) = (inst.n1(), inst.n2());
    let s = &inst.scenarios[k];
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for (i, r) in inst.a1.iter().enumerate() {
        rows.push(
            r.iter()
                .copied()
                .chain(std::iter::repeat_n(0.0, n2))
                .collect::<Vec<_>>(),
        );
        rhs.push(inst.b1[i]);
    }
    for i in 0..inst.m2() {
        rows.push(s.a2[i].iter().chain(&inst.g2[i]).copied().collect());
        rhs.push(s.b2[i]);
    }
    let lp = LpProblem {
        objective: std::iter::repeat_n(0.0, n1)
            .chain(inst.d2.iter().copied())
            .collect(),
        matrix: DenseMatrix::from_rows(&rows, n1 + n2)?,
        senses: vec![RowSense::Ge; rhs.len()],
        rhs,
        lower: inst
            .x_lower
            .iter()
            .copied()
            .chain(std::iter::repeat_n(0.0, n2))
            .collect(),
        upper: inst
            .x_upper
            .iter()
            .copied()
            .chain(std::iter::repeat_n(f64::INFINITY, n2))
            .collect(),
    };
    let cert = solve_lp(&lp)?;
    match cert.status {
        LpStatus::Optimal => Ok(Some(cert.objective)),
        LpStatus::Unbounded => Ok(None),
        LpStatus::Infeasible => Err(Error::Infeasible(format!(
            "scenario {k} is infeasible for every x in the box"
        ))),
    }
}

fn add_first_stage(inst: &TwoStageInstance, m: &mut ModelBuilder) -> Vec<usize> {
    let xs: Vec<usize> = (0..inst.n1())
        .map(|j| {
            m.add_var(
                inst.c[j],
                inst.x_lower[j],
                inst.x_upper[j],
                inst.x_integer[j],
            )
        })
        .collect();
    for (i, r) in inst.a1.iter().enumerate() {
        m.add_row(
            xs.iter().zip(r).map(|(&v, &a)| (v, a)).collect(),
            RowSense::Ge,
            inst.b1[i],
        );
    }
    xs
}

pub fn solve_2ssmilp(inst: &TwoStageInstance, opts: &DriverOptions) -> Result<TwoStageResult> {
    inst.validate()?;
    let n1 = inst.n1();
    let active = inst.active_scenarios();
    let floors: Vec<Option<f64>> = active
        .iter()
        .map(|&k| scenario_floor(inst, k))
        .collect::<Result<_>>()?;
    let mut has_opt = vec![false; inst.scenarios.len()];
    let mut cuts: Vec<Cut> = Vec::new();
    let mut trace = BendersTrace::default();
    let mut lower = ExtReal::NegInf;
    let mut upper = f64::INFINITY;
    let mut best: Option<(Vec<f64>, Vec<Vec<f64>>)> = None;

    for iter in 1..=opts.max_iters {
        let mut m = ModelBuilder::new();
        let xs = add_first_stage(inst, &mut m);
        let mut zs = vec![None; inst.scenarios.len()];
        for (a, &k) in active.iter().enumerate() {
            if has_opt[k] || floors[a].is_some() {
                let lo = floors[a].unwrap_or(f64::NEG_INFINITY);
                zs[k] = Some(m.add_var(inst.scenarios[k].probability, lo, f64::INFINITY, false));
            }
        }
        for cut in &cuts {
            match cut {
                Cut::Optimality {
                    scenario,
                    terms,
                    big_m,
                } => {
                    let t: Vec<(AffineX, f64)> = terms.iter().map(|f| (f.clone(), 0.0)).collect();
                    add_min_epigraph(
                        &mut m,
                        zs[*scenario].expect("cut scenario has z"),
                        &xs,
                        &t,
                        None,
                        *big_m,
                    );
                }
                Cut::Feasibility(f) => {
                    m.add_row(
                        xs.iter().zip(&f.coeffs).map(|(&v, &c)| (v, c)).collect(),
                        RowSense::Le,
                        -f.constant,
                    );
                }
                Cut::NoGood(p) => add_no_good(&mut m, &xs, p, &inst.x_lower, &inst.x_upper),
            }
        }
        let master = m.build()?;
        let ms = solve_milp(&master, &BnbOptions::master())?;
        match ms.status {
            MilpStatus::Optimal => {}
            MilpStatus::Infeasible => {
                return Err(Error::Infeasible("master problem is infeasible".into()))
            }
            MilpStatus::Unbounded => {
                return Err(Error::Unbounded("master problem is unbounded".into()))
            }
            MilpStatus::NodeLimit => return Err(Error::NodeLimit(BnbOptions::master().node_limit)),
        }
        let sol = ms.x.expect("optimal master has a solution");
        let x: Vec<f64> = (0..n1)
            .map(|j| {
                if inst.x_integer[j] {
                    sol[j].round() + 0.0
                } else {
                    sol[j] + 0.0
                }
            })
            .collect();
        if active.iter().all(|&k| zs[k].is_some()) {
            lower = lower.max(ExtReal::Finite(ms.value));
        }

        let outcomes: Vec<Result<ScenarioOutcome>> = active
            .par_iter()
            .map(|&k| solve_scenario(inst, k, &x))
            .collect();
        let mut values = vec![ExtReal::PosInf; inst.scenarios.len()];
        let mut ys = vec![Vec::new(); inst.scenarios.len()];
        let mut new_cuts = Vec::new();
        let mut feasible = true;
        let mut total = dot(&inst.c, &x);
        let mut kind = CutKind::Optimality;
        for (&k, outcome) in active.iter().zip(outcomes) {
            match outcome? {
                ScenarioOutcome::Solved { value, y, terms } => {
                    values[k] = ExtReal::Finite(value);
                    total += inst.scenarios[k].probability * value;
                    ys[k] = y;
                    let ranges: Vec<(f64, f64)> = terms
                        .iter()
                        .map(|f| f.range(&inst.x_lower, &inst.x_upper))
                        .collect();
                    let big_m = spread_big_m(&ranges, FALLBACK_BIG_M);
                    new_cuts.push(Cut::Optimality {
                        scenario: k,
                        terms,
                        big_m,
                    });
                }
                ScenarioOutcome::Infeasible(cut) => {
                    feasible = false;
                    kind = match cut {
                        Cut::NoGood(_) => CutKind::NoGood,
                        _ => CutKind::Feasibility,
                    };
                    new_cuts.push(cut);
                }
            }
        }
        if feasible && total < upper {
            upper = total;
            best = Some((x.clone(), ys));
        }
        let closed = matches!(lower, ExtReal::Finite(l) if upper - l <= opts.tol);
        trace.push(TraceRow {
            iter,
            lower,
            upper: ExtReal::of(upper),
            x,
            cut: if closed { CutKind::None } else { kind },
            scenario_values: values,
            phi: None,
            terms: new_cuts
                .iter()
                .map(|c| match c {
                    Cut::Optimality { terms, .. } => terms.len(),
                    _ => 1,
                })
                .sum(),
        });
        if closed {
            let (x, y) = best.expect("finite upper bound has an incumbent");
            return Ok(TwoStageResult {
                x,
                y,
                value: upper,
                iterations: iter,
                trace,
            });
        }
        for c in new_cuts {
            if let Cut::Optimality { scenario, .. } = &c {
                has_opt[*scenario] = true;
            }
            cuts.push(c);
        }
    }
    Err(Error::IterationLimit(opts.max_iters))
}
