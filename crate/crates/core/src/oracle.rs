//! Brute-force reference solvers: the deterministic equivalent of a two-stage
//! program, enumeration of the first-stage box of a bilevel program, and
//! pointwise value-function sampling. They run the branch-and-bound with
//! stricter tolerances than the drivers.

use crate::error::{Error, Result};
use crate::extended::ExtReal;
use crate::linalg::dot;
use crate::milp::{solve_milp, BnbOptions, MilpProblem, MilpStatus};
use crate::model::ModelBuilder;
use crate::piecewise::grid_points;
use crate::reaction::{evaluate_reaction, MiblpInstance, Reaction};
use crate::simplex::RowSense;
use crate::two_stage::TwoStageInstance;
use rayon::prelude::*;
use serde::Serialize;

/// Default cap on the number of enumerated first-stage points.
pub const DEFAULT_BOX_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStageOracle {
    pub value: f64,
    pub x: Vec<f64>,
    /// Per scenario; empty for zero-probability scenarios.
    pub y: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiblpOracle {
    pub value: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Reaction evaluations performed.
    pub evaluations: usize,
}

fn check_status(status: MilpStatus, what: &str, node_limit: usize) -> Result<()> {
    match status {
        MilpStatus::Optimal => Ok(()),
        MilpStatus::Infeasible => Err(Error::Infeasible(format!("{what} is infeasible"))),
        MilpStatus::Unbounded => Err(Error::Unbounded(format!("{what} is unbounded"))),
        MilpStatus::NodeLimit => Err(Error::NodeLimit(node_limit)),
    }
}

/// Solves the deterministic equivalent with one `y` block per scenario of
/// positive probability.
pub fn oracle_2ssmilp(inst: &TwoStageInstance) -> Result<TwoStageOracle> {
    inst.validate()?;
    let (n1, n2) = (inst.n1(), inst.n2());
    let mut m = ModelBuilder::new();
    let xs: Vec<usize> = (0..n1)
        .map(|j| {
            m.add_var(
                inst.c[j],
                inst.x_lower[j],
                inst.x_upper[j],
                inst.x_integer[j],
            )
        })
        .collect();
    for (row, &b) in inst.a1.iter().zip(&inst.b1) {
        m.add_row(
            xs.iter().zip(row).map(|(&v, &a)| (v, a)).collect(),
            RowSense::Ge,
            b,
        );
    }
    let active = inst.active_scenarios();
    let mut blocks = Vec::new();
    for &k in &active {
        let s = &inst.scenarios[k];
        let ys: Vec<usize> = (0..n2)
            .map(|j| {
                m.add_var(
                    s.probability * inst.d2[j],
                    0.0,
                    f64::INFINITY,
                    inst.y_integer[j],
                )
            })
            .collect();
        for i in 0..inst.m2() {
            let mut row: Vec<(usize, f64)> =
                xs.iter().zip(&s.a2[i]).map(|(&v, &a)| (v, a)).collect();
            row.extend(ys.iter().zip(&inst.g2[i]).map(|(&v, &g)| (v, g)));
            m.add_row(row, RowSense::Ge, s.b2[i]);
        }
        blocks.push((k, ys));
    }
    let opts = BnbOptions::strict();
    let sol = solve_milp(&m.build()?, &opts)?;
    check_status(sol.status, "deterministic equivalent", opts.node_limit)?;
    let v = sol.x.expect("optimal solution");
    let mut y = vec![Vec::new(); inst.scenarios.len()];
    for (k, ys) in blocks {
        y[k] = ys.iter().map(|&j| v[j]).collect();
    }
    Ok(TwoStageOracle {
        value: sol.value,
        x: xs.iter().map(|&j| v[j]).collect(),
        y,
    })
}

/// Integer points of the box in lexicographic order, or `BoxTooLarge`.
pub fn box_points(lower: &[f64], upper: &[f64], cap: usize) -> Result<Vec<Vec<f64>>> {
    let ranges: Vec<(i64, i64)> = lower
        .iter()
        .zip(upper)
        .map(|(l, u)| (l.ceil() as i64, u.floor() as i64))
        .collect();
    let mut count: usize = 1;
    for &(l, u) in &ranges {
        let w = if u < l { 0 } else { (u - l + 1) as usize };
        count = count.saturating_mul(w);
    }
    if count > cap {
        return Err(Error::BoxTooLarge { points: count, cap });
    }
    let mut points = Vec::with_capacity(count);
    if count == 0 {
        return Ok(points);
    }
    let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        points.push(cur.iter().map(|&v| v as f64).collect());
        let mut j = cur.len();
        loop {
            if j == 0 {
                return Ok(points);
            }
            j -= 1;
            if cur[j] < ranges[j].1 {
                cur[j] += 1;
                break;
            }
            cur[j] = ranges[j].0;
        }
    }
}

/// `min cᵀx + ρ(b¹ − A¹x, b² − A²x)` over the integer points of the box,
/// skipping points where the reaction is `+∞`. Ties go to the first point in
/// lexicographic order.
pub fn oracle_miblp(inst: &MiblpInstance, cap: usize) -> Result<MiblpOracle> {
    inst.validate()?;
    let points = box_points(&inst.x_lower, &inst.x_upper, cap)?;
    let opts = BnbOptions::strict();
    let values: Vec<Option<(f64, Vec<f64>)>> = points
        .par_iter()
        .map(|x| {
            let (b1, b2) = inst.rhs_at(x);
            Ok(match evaluate_reaction(inst, &b1, &b2, &opts)? {
                Reaction::Solved(c) => Some((dot(&inst.c, x) + c.rho_value, c.y)),
                _ => None,
            })
        })
        .collect::<Result<_>>()?;
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in values.iter().enumerate() {
        if let Some((val, _)) = v {
            if best.is_none_or(|(_, b)| *val < b) {
                best = Some((k, *val));
            }
        }
    }
    let (k, value) =
        best.ok_or_else(|| Error::Infeasible("no point of the box has a finite reaction".into()))?;
    let y = values[k].as_ref().expect("best point is finite").1.clone();
    Ok(MiblpOracle {
        value,
        x: points[k].clone(),
        y,
        evaluations: points.len(),
    })
}

/// Right-hand side `base + β·direction`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricRhs {
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
}

impl ParametricRhs {
    /// Moves a single row; the others stay at zero.
    pub fn row(m: usize, i: usize) -> Self {
        let mut direction = vec![0.0; m];
        direction[i] = 1.0;
        ParametricRhs {
            base: vec![0.0; m],
            direction,
        }
    }

    pub fn at(&self, beta: f64) -> Vec<f64> {
        self.base
            .iter()
            .zip(&self.direction)
            .map(|(b, d)| b + beta * d)
            .collect()
    }
}

/// `φ(base + β·direction)` at each grid point, `+∞` where infeasible.
pub fn oracle_vf_grid(
    p: &MilpProblem,
    rhs: &ParametricRhs,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<Vec<(f64, ExtReal)>> {
    if rhs.base.len() != p.lp.num_rows() || rhs.direction.len() != p.lp.num_rows() {
        return Err(Error::DimensionMismatch(format!(
            "parametric right-hand side for {} rows",
            p.lp.num_rows()
        )));
    }
    let opts = BnbOptions::strict();
    grid_points(lo, hi, step)?
        .into_par_iter()
        .map(|beta| {
            let mut q = p.clone();
            q.lp.rhs = rhs.at(beta);
            let sol = solve_milp(&q, &opts)?;
            let v = match sol.status {
                MilpStatus::Optimal => ExtReal::Finite(sol.value),
                MilpStatus::Infeasible => ExtReal::PosInf,
                MilpStatus::Unbounded => ExtReal::NegInf,
                MilpStatus::NodeLimit => return Err(Error::NodeLimit(opts.node_limit)),
            };
            Ok((beta, v))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::simplex::LpProblem;
    use crate::two_stage::Scenario;

    fn ip() -> MilpProblem {
        let g = DenseMatrix::from_rows(&[vec![2.0, 5.0, 2.0, 2.0]], 4).unwrap();
        MilpProblem::new(
            LpProblem::covering(vec![2.0, 4.0, 3.0, 4.0], g, vec![0.0]),
            vec![true, true, true, false],
        )
        .unwrap()
    }

    #[test]
    fn value_function_grid() {
        let s = oracle_vf_grid(&ip(), &ParametricRhs::row(1, 0), -2.0, 10.0, 0.5).unwrap();
        let at = |b: f64| s.iter().find(|(x, _)| (*x - b).abs() < 1e-12).unwrap().1;
        assert_eq!(at(0.0), ExtReal::Finite(0.0));
        assert_eq!(at(2.0), ExtReal::Finite(2.0));
        assert_eq!(at(4.0), ExtReal::Finite(4.0));
        assert_eq!(at(5.0), ExtReal::Finite(4.0));
        assert_eq!(at(-1.5), ExtReal::Finite(0.0));
        assert!(s.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn box_enumeration_order_and_cap() {
        let p = box_points(&[0.0, 1.0], &[1.0, 2.0], 10).unwrap();
        assert_eq!(
            p,
            vec![
                vec![0.0, 1.0],
                vec![0.0, 2.0],
                vec![1.0, 1.0],
                vec![1.0, 2.0]
            ]
        );
        assert!(matches!(
            box_points(&[0.0; 3], &[9.0; 3], 999),
            Err(Error::BoxTooLarge {
                points: 1000,
                cap: 999
            })
        ));
        assert!(box_points(&[0.5], &[0.7], 10).unwrap().is_empty());
    }

    fn toy() -> MiblpInstance {
        MiblpInstance {
            c: vec![1.0, -3.0],
            d1: vec![-1.0, 1.0, -5.0, 1.0],
            d2: vec![2.0, 4.0, 3.0, 4.0],
            a1: vec![vec![1.0, -2.0]],
            g1: vec![vec![0.0; 4]],
            b1: vec![-1.0],
            a2: vec![vec![-1.0, -1.0]],
            g2: vec![vec![2.0, 5.0, 2.0, 2.0]],
            b2: vec![0.0],
            y_integer: vec![true, true, true, false],
            x_integer: None,
            x_lower: vec![0.0, 0.0],
            x_upper: vec![3.0, 2.0],
            big_m: None,
            epsilon: None,
            rho_floor: None,
        }
    }

    #[test]
    fn bilevel_enumeration() {
        let r = oracle_miblp(&toy(), DEFAULT_BOX_CAP).unwrap();
        assert!((r.value + 3.0).abs() < 1e-9);
        assert_eq!(r.x, vec![1.0, 1.0]);
        assert_eq!(r.y, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(r.evaluations, 12);
    }

    #[test]
    fn bilevel_enumeration_edge_cases() {
        let mut inst = toy();
        inst.x_lower = vec![2.0, 2.0];
        inst.x_upper = vec![2.0, 2.0];
        // 2 − 2·2 < −1 violates the first-level row
        assert!(matches!(
            oracle_miblp(&inst, DEFAULT_BOX_CAP),
            Err(Error::Infeasible(_))
        ));
        inst.x_lower = vec![1.0, 1.0];
        inst.x_upper = vec![1.0, 1.0];
        let r = oracle_miblp(&inst, DEFAULT_BOX_CAP).unwrap();
        assert_eq!(r.evaluations, 1);
        assert!((r.value + 3.0).abs() < 1e-9);
        assert!(matches!(
            oracle_miblp(&toy(), 5),
            Err(Error::BoxTooLarge { .. })
        ));
    }

    fn two_stage(probs: &[f64]) -> TwoStageInstance {
        let scenarios = probs
            .iter()
            .enumerate()
            .map(|(k, &p)| Scenario {
                probability: p,
                a2: vec![vec![-1.0, -1.0]],
                b2: vec![k as f64],
            })
            .collect();
        TwoStageInstance {
            c: vec![1.0, -3.0],
            d2: vec![2.0, 4.0, 3.0, 4.0],
            a1: vec![],
            b1: vec![],
            g2: vec![vec![2.0, 5.0, 2.0, 2.0]],
            scenarios,
            x_integer: vec![true, true],
            y_integer: vec![true, true, true, false],
            x_lower: vec![0.0, 0.0],
            x_upper: vec![3.0, 2.0],
        }
    }

    #[test]
    fn deterministic_equivalent_matches_enumeration() {
        let inst = two_stage(&[1.0]);
        let r = oracle_2ssmilp(&inst).unwrap();
        let mut best = f64::INFINITY;
        for x in box_points(&inst.x_lower, &inst.x_upper, 100).unwrap() {
            let f = solve_milp(&ip_at(x[0] + x[1]), &BnbOptions::strict()).unwrap();
            best = best.min(dot(&inst.c, &x) + f.value);
        }
        assert!((r.value - best).abs() < 1e-9);
    }

    fn ip_at(beta: f64) -> MilpProblem {
        let mut p = ip();
        p.lp.rhs = vec![beta];
        p
    }

    #[test]
    fn scenario_order_does_not_matter() {
        let a = two_stage(&[0.3, 0.7]);
        let mut b = a.clone();
        b.scenarios.reverse();
        let (va, vb) = (
            oracle_2ssmilp(&a).unwrap().value,
            oracle_2ssmilp(&b).unwrap().value,
        );
        assert!((va - vb).abs() < 1e-9);
        let with_zero = two_stage(&[1.0, 0.0]);
        assert!(oracle_2ssmilp(&with_zero).unwrap().y[1].is_empty());
    }
}
