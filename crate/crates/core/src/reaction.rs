//! Mixed integer bilevel instances and their reaction function
//! `ρ(β¹, β²) = min { d¹ᵀy : y ∈ P₁(β¹) ∩ P₂(β²) ∩ Y, d²ᵀy ≤ φ_IP(β²) }`,
//! evaluated as two ordered MILP solves.

use crate::benders_lp::check_matrix;
use crate::error::{Error, Result};
use crate::linalg::{dot, DenseMatrix};
use crate::milp::{solve_milp, BnbOptions, BnbTree, MilpProblem, MilpStatus};
use crate::piecewise::{AffineTerm, MinAffineDual, RestrictedPrimal};
use crate::simplex::{basis_inverse_rows, solve_lp, LpProblem, LpStatus};
use crate::two_stage::check_box;
use serde::{Deserialize, Serialize};

/// Optional replacements for the computed big-M constants.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BigMOverrides {
    /// Term selection in the min-of-affine epigraph.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_d: Option<f64>,
    /// Shift of the primal function outside its domain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_p: Option<f64>,
    /// Lower side of each domain row indicator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_lower: Option<f64>,
    /// Upper side of each domain row indicator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_upper: Option<f64>,
    /// Count bound linking the row indicators to the block indicator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiblpInstance {
    pub c: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    #[serde(default)]
    pub a1: Vec<Vec<f64>>,
    #[serde(default)]
    pub g1: Vec<Vec<f64>>,
    #[serde(default)]
    pub b1: Vec<f64>,
    pub a2: Vec<Vec<f64>>,
    pub g2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
    pub y_integer: Vec<bool>,
    /// Must be all `true` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_integer: Option<Vec<bool>>,
    pub x_lower: Vec<f64>,
    pub x_upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub big_m: Option<BigMOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Lower bound on the reaction function over the box; replaces the
    /// computed floor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_floor: Option<f64>,
}

impl MiblpInstance {
    pub fn n1(&self) -> usize {
        self.c.len()
    }

    pub fn n2(&self) -> usize {
        self.d1.len()
    }

    pub fn m1(&self) -> usize {
        self.b1.len()
    }

    pub fn m2(&self) -> usize {
        self.b2.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (n1, n2, m1, m2) = (self.n1(), self.n2(), self.m1(), self.m2());
        if self.d2.len() != n2 {
            return Err(Error::InvalidInstance(format!(
                "d2: expected {n2} entries, found {}",
                self.d2.len()
            )));
        }
        check_matrix("a1", &self.a1, m1, n1)?;
        check_matrix("g1", &self.g1, m1, n2)?;
        check_matrix("a2", &self.a2, m2, n1)?;
        check_matrix("g2", &self.g2, m2, n2)?;
        if self.y_integer.len() != n2 {
            return Err(Error::InvalidInstance(format!(
                "y_integer: expected {n2} entries"
            )));
        }
        if let Some(mask) = &self.x_integer {
            if mask.len() != n1 {
                return Err(Error::InvalidInstance(format!(
                    "x_integer: expected {n1} entries"
                )));
            }
            if let Some(j) = mask.iter().position(|&i| !i) {
                return Err(Error::InvalidInstance(format!(
                    "x_integer[{j}] is false: every first-stage variable must be integer"
                )));
            }
        }
        check_box(&self.x_lower, &self.x_upper, n1)?;
        if let Some(e) = self.epsilon {
            if !e.is_finite() || e <= 0.0 {
                return Err(Error::InvalidInstance(
                    "epsilon must be positive and finite".into(),
                ));
            }
        }
        Ok(())
    }

    /// First-level rows that involve `y`.
    pub fn linking_rows(&self) -> Vec<usize> {
        (0..self.m1())
            .filter(|&i| self.g1[i].iter().any(|&v| v != 0.0))
            .collect()
    }

    /// First-level rows on `x` alone; they belong to the master.
    pub fn pure_x_rows(&self) -> Vec<usize> {
        (0..self.m1())
            .filter(|&i| self.g1[i].iter().all(|&v| v == 0.0))
            .collect()
    }

    /// `(b¹ − A¹x, b² − A²x)`.
    pub fn rhs_at(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let b1 = (0..self.m1())
            .map(|i| self.b1[i] - dot(&self.a1[i], x))
            .collect();
        let b2 = (0..self.m2())
            .map(|i| self.b2[i] - dot(&self.a2[i], x))
            .collect();
        (b1, b2)
    }

    /// Follower problem `min d²ᵀy  s.t.  G²y ≥ β², y ≥ 0`.
    pub fn follower(&self, beta2: &[f64]) -> Result<MilpProblem> {
        let g = DenseMatrix::from_rows(&self.g2, self.n2())?;
        MilpProblem::new(
            LpProblem::covering(self.d2.clone(), g, beta2.to_vec()),
            self.y_integer.clone(),
        )
    }

    /// Rows `[G¹_L y ≥ β¹_L; G²y ≥ β²]` over the linking rows `L`.
    fn link_rows(&self, beta1: &[f64], beta2: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for i in self.linking_rows() {
            rows.push(self.g1[i].clone());
            rhs.push(beta1[i]);
        }
        for i in 0..self.m2() {
            rows.push(self.g2[i].clone());
            rhs.push(beta2[i]);
        }
        (rows, rhs)
    }

    /// Lexicographic problem `min d¹ᵀy` over the linking rows, the follower
    /// rows and `−d²ᵀy ≥ −φ`, in that row order.
    pub fn lexicographic(&self, beta1: &[f64], beta2: &[f64], phi: f64) -> Result<MilpProblem> {
        let (mut rows, mut rhs) = self.link_rows(beta1, beta2);
        rows.push(self.d2.iter().map(|v| -v).collect());
        rhs.push(-phi);
        let m = DenseMatrix::from_rows(&rows, self.n2())?;
        MilpProblem::new(
            LpProblem::covering(self.d1.clone(), m, rhs),
            self.y_integer.clone(),
        )
    }

    /// LP relaxation of `P₁(β¹) ∩ P₂(β²)` with a zero objective.
    pub fn link_relaxation(&self, beta1: &[f64], beta2: &[f64]) -> Result<LpProblem> {
        let (rows, rhs) = self.link_rows(beta1, beta2);
        let m = DenseMatrix::from_rows(&rows, self.n2())?;
        Ok(LpProblem::covering(vec![0.0; self.n2()], m, rhs))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReactionCertificate {
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub phi_value: f64,
    pub rho_value: f64,
    /// Optimal `y` of the lexicographic problem.
    pub y: Vec<f64>,
    /// Optimal `y` of the follower problem alone.
    pub follower_y: Vec<f64>,
    /// Branch-and-bound tree of the lexicographic problem.
    pub tree: BnbTree,
    pub primal: RestrictedPrimal,
    pub dual: MinAffineDual,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reaction {
    Solved(Box<ReactionCertificate>),
    /// The follower problem is infeasible (`φ_IP = +∞`).
    SecondStageInfeasible,
    /// No follower-optimal `y` satisfies the linking rows (`ρ = +∞`).
    LinkInfeasible,
}

/// Evaluates `ρ(β¹, β²)`; `β¹` covers every first-level row.
pub fn evaluate_reaction(
    inst: &MiblpInstance,
    beta1: &[f64],
    beta2: &[f64],
    opts: &BnbOptions,
) -> Result<Reaction> {
    if beta1.len() != inst.m1() || beta2.len() != inst.m2() {
        return Err(Error::DimensionMismatch(
            "reaction arguments do not match the instance rows".into(),
        ));
    }
    let follower = solve_milp(&inst.follower(beta2)?, opts)?;
    match follower.status {
        MilpStatus::Optimal => {}
        MilpStatus::Infeasible => return Ok(Reaction::SecondStageInfeasible),
        MilpStatus::Unbounded => {
            return Err(Error::AssumptionViolated(
                "follower problem is unbounded below".into(),
            ));
        }
        MilpStatus::NodeLimit => return Err(Error::NodeLimit(opts.node_limit)),
    }
    if inst.pure_x_rows().iter().any(|&i| beta1[i] > 1e-9) {
        return Ok(Reaction::LinkInfeasible);
    }
    let phi = follower.value;
    let mut lex = solve_milp(&inst.lexicographic(beta1, beta2, phi)?, opts)?;
    if lex.status == MilpStatus::Infeasible {
        // Retry with the value row relaxed by a rounding-sized amount.
        let relaxed = phi + 1e-9 * phi.abs().max(1.0);
        let retry = solve_milp(&inst.lexicographic(beta1, beta2, relaxed)?, opts)?;
        if retry.status != MilpStatus::Infeasible {
            lex = retry;
        }
    }
    match lex.status {
        MilpStatus::Optimal => {}
        MilpStatus::Infeasible => return Ok(Reaction::LinkInfeasible),
        MilpStatus::Unbounded => {
            return Err(Error::AssumptionViolated(
                "reaction problem is unbounded below".into(),
            ));
        }
        MilpStatus::NodeLimit => return Err(Error::NodeLimit(opts.node_limit)),
    }
    let y = lex.x.clone().expect("optimal solution present");
    let primal = build_primal(inst, beta2, &y)?;
    let dual = build_reaction_dual(inst, &lex.tree, beta1, beta2)?;
    Ok(Reaction::Solved(Box::new(ReactionCertificate {
        beta1: beta1.to_vec(),
        beta2: beta2.to_vec(),
        phi_value: phi,
        rho_value: lex.value,
        y,
        follower_y: follower.x.expect("optimal solution present"),
        tree: lex.tree,
        primal,
        dual,
    })))
}

/// Primal function of the follower problem from its continuous restriction
/// at `y`: integer entries of `y` are fixed and the remaining LP over the
/// continuous entries is solved at `β̂² − G²_I y_I`.
///
/// With no continuous entries the restriction has only slack columns, so the
/// domain becomes `β² ≤ G²_I y_I` with constant value `d²_Iᵀy_I`.
pub fn build_primal(inst: &MiblpInstance, beta2: &[f64], y: &[f64]) -> Result<RestrictedPrimal> {
    let m2 = inst.m2();
    let cont: Vec<usize> = (0..inst.n2()).filter(|&j| !inst.y_integer[j]).collect();
    let offset: Vec<f64> = (0..m2)
        .map(|i| {
            (0..inst.n2())
                .filter(|&j| inst.y_integer[j])
                .map(|j| inst.g2[i][j] * y[j])
                .sum()
        })
        .collect();
    let integer_cost: f64 = (0..inst.n2())
        .filter(|&j| inst.y_integer[j])
        .map(|j| inst.d2[j] * y[j])
        .sum();
    let rows: Vec<Vec<f64>> = inst
        .g2
        .iter()
        .map(|r| cont.iter().map(|&j| r[j]).collect())
        .collect();
    let lp = LpProblem::covering(
        cont.iter().map(|&j| inst.d2[j]).collect(),
        DenseMatrix::from_rows(&rows, cont.len())?,
        beta2.iter().zip(&offset).map(|(b, o)| b - o).collect(),
    );
    let cert = solve_lp(&lp)?;
    if cert.status != LpStatus::Optimal {
        return Err(Error::NumericalBreakdown(format!(
            "continuous restriction at a feasible point reported {:?}",
            cert.status
        )));
    }
    let domain = basis_inverse_rows(&cert, &lp)?;
    Ok(RestrictedPrimal {
        eta: cert.duals,
        integer_cost,
        integer_offset: offset,
        domain,
        anchor: beta2.to_vec(),
    })
}

/// One term per leaf of the lexicographic tree; the value row's multiplier
/// becomes the (nonpositive) coefficient on the follower value.
pub fn build_reaction_dual(
    inst: &MiblpInstance,
    tree: &BnbTree,
    beta1: &[f64],
    beta2: &[f64],
) -> Result<MinAffineDual> {
    if tree.leaves.is_empty() {
        return Err(Error::EmptyTree);
    }
    let link = inst.linking_rows();
    let nl = link.len();
    let m2 = inst.m2();
    let terms = tree
        .leaves
        .iter()
        .map(|leaf| {
            let mut beta1 = vec![0.0; inst.m1()];
            for (k, &i) in link.iter().enumerate() {
                beta1[i] = leaf.duals[k];
            }
            AffineTerm {
                beta1,
                beta2: leaf.duals[nl..nl + m2].to_vec(),
                phi: -leaf.duals[nl + m2],
                constant: leaf.alpha,
            }
        })
        .collect();
    MinAffineDual::new(terms, beta1.to_vec(), beta2.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extended::ExtReal;
    use crate::piecewise::{eval_dual, eval_primal};

    /// Leader costs `(−1, 1, −5, 1)` over the covering follower with row `β`.
    fn toy() -> MiblpInstance {
        MiblpInstance {
            c: vec![],
            d1: vec![-1.0, 1.0, -5.0, 1.0],
            d2: vec![2.0, 4.0, 3.0, 4.0],
            a1: vec![],
            g1: vec![],
            b1: vec![],
            a2: vec![vec![]],
            g2: vec![vec![2.0, 5.0, 2.0, 2.0]],
            b2: vec![0.0],
            y_integer: vec![true, true, true, false],
            x_integer: None,
            x_lower: vec![],
            x_upper: vec![],
            big_m: None,
            epsilon: None,
            rho_floor: None,
        }
    }

    fn solve(beta: f64) -> ReactionCertificate {
        match evaluate_reaction(&toy(), &[], &[beta], &BnbOptions::default()).unwrap() {
            Reaction::Solved(c) => *c,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reaction_anchors() {
        let c = solve(5.0);
        assert!((c.rho_value - 1.0).abs() < 1e-9);
        assert!((c.phi_value - 4.0).abs() < 1e-9);
        assert_eq!(c.y, vec![0.0, 1.0, 0.0, 0.0]);
        let c = solve(2.0);
        assert!((c.rho_value + 1.0).abs() < 1e-9);
        assert_eq!(c.y, vec![1.0, 0.0, 0.0, 0.0]);
        let c = solve(0.0);
        assert!(c.rho_value.abs() < 1e-9);
        assert_eq!(c.y, vec![0.0; 4]);
    }

    #[test]
    fn lexicographic_feasibility() {
        for beta in [0.0, 1.0, 2.5, 5.0, 8.0, 9.75] {
            let c = solve(beta);
            assert!(dot(&toy().d2, &c.y) <= c.phi_value + 1e-6);
            assert!((dot(&toy().d1, &c.y) - c.rho_value).abs() < 1e-9);
        }
    }

    #[test]
    fn dual_at_eight_is_strong_and_valid() {
        let c = solve(8.0);
        assert!((c.rho_value + 4.0).abs() < 1e-9);
        assert_eq!(c.dual.terms.len(), 4);
        // The y2 ≥ 2 leaf: −(5/3)φ + 46/3.
        assert!(c.dual.terms.iter().any(|t| (t.phi + 5.0 / 3.0).abs() < 1e-9
            && t.beta2[0].abs() < 1e-9
            && (t.constant - 46.0 / 3.0).abs() < 1e-9));
        assert!(c.dual.terms.iter().all(|t| t.phi <= 0.0));
        let v = eval_dual(&c.dual, &[], &[8.0], ExtReal::Finite(c.phi_value)).unwrap();
        assert!((v.to_f64() - c.rho_value).abs() < 1e-6);
        for k in 0..=40 {
            let beta = k as f64 * 0.25;
            let r = solve(beta);
            let d = eval_dual(&c.dual, &[], &[beta], ExtReal::Finite(r.phi_value)).unwrap();
            assert!(
                d.to_f64() <= r.rho_value + 1e-6,
                "beta {beta}: {d} > {}",
                r.rho_value
            );
        }
    }

    #[test]
    fn single_leaf_dual_at_five() {
        let c = solve(5.0);
        assert_eq!(c.dual.terms.len(), 1);
        let t = &c.dual.terms[0];
        assert!((t.beta2[0] - 23.0 / 7.0).abs() < 1e-6, "{t:?}");
        assert!((t.phi + 27.0 / 7.0).abs() < 1e-6, "{t:?}");
    }

    #[test]
    fn restricted_primal_examples() {
        // y* = (0, 1, 0, 0): fixed part covers β ≤ 5 at cost 4.
        let c = solve(5.0);
        assert_eq!(
            eval_primal(&c.primal, &[5.0]).unwrap(),
            ExtReal::Finite(4.0)
        );
        assert_eq!(
            eval_primal(&c.primal, &[3.0]).unwrap(),
            ExtReal::Finite(4.0)
        );
        assert_eq!(eval_primal(&c.primal, &[5.5]).unwrap(), ExtReal::PosInf);
        let c = solve(2.0);
        assert_eq!(
            eval_primal(&c.primal, &[2.0]).unwrap(),
            ExtReal::Finite(2.0)
        );
        assert_eq!(eval_primal(&c.primal, &[2.25]).unwrap(), ExtReal::PosInf);
        let c = solve(0.0);
        assert_eq!(
            eval_primal(&c.primal, &[0.0]).unwrap(),
            ExtReal::Finite(0.0)
        );
        assert_eq!(eval_primal(&c.primal, &[0.25]).unwrap(), ExtReal::PosInf);
    }

    #[test]
    fn continuous_x_is_rejected() {
        let mut inst = toy();
        inst.c = vec![1.0];
        inst.a2 = vec![vec![-1.0]];
        inst.x_lower = vec![0.0];
        inst.x_upper = vec![1.0];
        inst.x_integer = Some(vec![false]);
        let err = inst.validate().unwrap_err();
        assert!(err.to_string().contains("integer"), "{err}");
    }
}
