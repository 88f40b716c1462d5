//! Dual functions (minimum of affine terms), restricted-domain primal
//! functions, and the max-of-duals global bound built from them.

use crate::error::{Error, Result};
use crate::extended::ExtReal;
use crate::linalg::{dot, DenseMatrix};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Slack allowed when testing membership in a primal function's domain.
pub const DOMAIN_TOL: f64 = 1e-9;

/// `β¹ᵀη¹ + β²ᵀη² + φ·η^φ + α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineTerm {
    #[serde(default)]
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    /// Coefficient on the value-function argument; zero for plain MILP duals.
    #[serde(default)]
    pub phi: f64,
    pub constant: f64,
}

impl AffineTerm {
    pub fn linear(beta2: Vec<f64>, constant: f64) -> Self {
        AffineTerm {
            beta1: Vec::new(),
            beta2,
            phi: 0.0,
            constant,
        }
    }

    pub fn constant(m2: usize, constant: f64) -> Self {
        AffineTerm::linear(vec![0.0; m2], constant)
    }

    /// Affine part without the `φ` contribution.
    pub fn affine_part(&self, beta1: &[f64], beta2: &[f64]) -> f64 {
        dot(&self.beta1, beta1) + dot(&self.beta2, beta2) + self.constant
    }

    pub fn eval(&self, beta1: &[f64], beta2: &[f64], phi_value: ExtReal) -> Result<ExtReal> {
        if beta1.len() != self.beta1.len() || beta2.len() != self.beta2.len() {
            return Err(Error::DimensionMismatch(format!(
                "term expects ({}, {}) arguments, got ({}, {})",
                self.beta1.len(),
                self.beta2.len(),
                beta1.len(),
                beta2.len()
            )));
        }
        let base = ExtReal::Finite(self.affine_part(beta1, beta2));
        if self.phi == 0.0 {
            return Ok(base);
        }
        Ok(base.add_lower(phi_value.scale(self.phi)))
    }
}

/// `min_t term_t`, strong at its anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinAffineDual {
    pub terms: Vec<AffineTerm>,
    #[serde(default)]
    pub anchor_beta1: Vec<f64>,
    pub anchor_beta2: Vec<f64>,
}

impl MinAffineDual {
    pub fn new(
        terms: Vec<AffineTerm>,
        anchor_beta1: Vec<f64>,
        anchor_beta2: Vec<f64>,
    ) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::EmptyTree);
        }
        let (m1, m2) = (anchor_beta1.len(), anchor_beta2.len());
        for t in &terms {
            if t.beta1.len() != m1 || t.beta2.len() != m2 {
                return Err(Error::DimensionMismatch(format!(
                    "term has ({}, {}) coefficients, anchor has ({m1}, {m2})",
                    t.beta1.len(),
                    t.beta2.len()
                )));
            }
            let finite = t.beta1.iter().chain(&t.beta2).all(|v| v.is_finite())
                && t.phi.is_finite()
                && t.constant.is_finite();
            if !finite {
                return Err(Error::NumericalBreakdown("non-finite dual term".into()));
            }
        }
        Ok(MinAffineDual {
            terms,
            anchor_beta1,
            anchor_beta2,
        })
    }

    pub fn uses_phi(&self) -> bool {
        self.terms.iter().any(|t| t.phi != 0.0)
    }
}

/// Evaluates a dual function; `phi_value` is ignored by terms without a
/// `φ` coefficient, and `+∞` makes negative-coefficient terms `−∞`.
pub fn eval_dual(
    d: &MinAffineDual,
    beta1: &[f64],
    beta2: &[f64],
    phi_value: ExtReal,
) -> Result<ExtReal> {
    let mut best = ExtReal::PosInf;
    for t in &d.terms {
        best = best.min(t.eval(beta1, beta2, phi_value)?);
    }
    Ok(best)
}

/// Single-hyperplane primal function of a continuous restriction:
/// `(β² − G²_I y*_I)ᵀη* + d²_Iᵀy*_I` where the restriction's optimal basis
/// stays primal feasible, `+∞` elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictedPrimal {
    /// Dual solution of the continuous restriction.
    pub eta: Vec<f64>,
    /// Cost of the fixed integer part.
    pub integer_cost: f64,
    /// Row activity of the fixed integer part.
    pub integer_offset: Vec<f64>,
    /// Inverse of the restriction's optimal basis.
    pub domain: DenseMatrix,
    pub anchor: Vec<f64>,
}

impl RestrictedPrimal {
    pub fn residual(&self, beta2: &[f64]) -> Vec<f64> {
        beta2
            .iter()
            .zip(&self.integer_offset)
            .map(|(b, o)| b - o)
            .collect()
    }

    pub fn in_domain(&self, beta2: &[f64]) -> bool {
        let r = self.residual(beta2);
        self.domain.mul_vec(&r).iter().all(|&v| v >= -DOMAIN_TOL)
    }

    /// Value of the hyperplane ignoring the domain restriction.
    pub fn hyperplane(&self, beta2: &[f64]) -> f64 {
        dot(&self.residual(beta2), &self.eta) + self.integer_cost
    }
}

pub fn eval_primal(p: &RestrictedPrimal, beta2: &[f64]) -> Result<ExtReal> {
    let m2 = p.integer_offset.len();
    if beta2.len() != m2 || p.eta.len() != m2 || p.domain.rows() != m2 || p.domain.cols() != m2 {
        return Err(Error::DimensionMismatch(format!(
            "primal function over {m2} rows evaluated at {} entries",
            beta2.len()
        )));
    }
    if p.in_domain(beta2) {
        Ok(ExtReal::Finite(p.hyperplane(beta2)))
    } else {
        Ok(ExtReal::PosInf)
    }
}

/// One iteration's contribution to the global bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalMember {
    pub dual: MinAffineDual,
    pub primal: Option<RestrictedPrimal>,
}

impl GlobalMember {
    pub fn eval(&self, beta1: &[f64], beta2: &[f64]) -> Result<ExtReal> {
        let phi = match &self.primal {
            Some(p) => eval_primal(p, beta2)?,
            None if self.dual.uses_phi() => ExtReal::PosInf,
            None => ExtReal::ZERO,
        };
        eval_dual(&self.dual, beta1, beta2, phi)
    }
}

/// `max_i` over the collected dual functions; empty means `−∞`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GlobalDual {
    pub members: Vec<GlobalMember>,
}

impl GlobalDual {
    pub fn push(&mut self, dual: MinAffineDual, primal: Option<RestrictedPrimal>) {
        self.members.push(GlobalMember { dual, primal });
    }
}

pub fn eval_global(g: &GlobalDual, beta1: &[f64], beta2: &[f64]) -> Result<ExtReal> {
    let mut best = ExtReal::NegInf;
    for m in &g.members {
        best = best.max(m.eval(beta1, beta2)?);
    }
    Ok(best)
}

/// The inclusive grid `lo, lo + step, …, ≤ hi`.
pub fn grid_points(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || step <= 0.0 || hi < lo {
        return Err(Error::BadRange(format!("{lo}:{hi}:{step}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| lo + k as f64 * step).collect())
}

/// Samples `f` on [`grid_points`].
pub fn sample_grid<F>(mut f: F, lo: f64, hi: f64, step: f64) -> Result<Vec<(f64, ExtReal)>>
where
    F: FnMut(f64) -> Result<ExtReal>,
{
    grid_points(lo, hi, step)?
        .into_iter()
        .map(|b| Ok((b, f(b)?)))
        .collect()
}

/// Writes samples as `beta,value` CSV with `inf`/`-inf` sentinels.
pub fn write_grid_csv<W: Write>(mut w: W, samples: &[(f64, ExtReal)]) -> std::io::Result<()> {
    writeln!(w, "beta,value")?;
    for (beta, v) in samples {
        writeln!(w, "{beta},{v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_dim(terms: &[(f64, f64, f64)]) -> MinAffineDual {
        let terms = terms
            .iter()
            .map(|&(b, phi, c)| AffineTerm {
                beta1: vec![],
                beta2: vec![b],
                phi,
                constant: c,
            })
            .collect();
        MinAffineDual::new(terms, vec![], vec![0.0]).unwrap()
    }

    fn fin(v: f64) -> ExtReal {
        ExtReal::Finite(v)
    }

    #[test]
    fn constant_dual_is_constant() {
        let d = one_dim(&[(0.0, 0.0, 7.5)]);
        for b in [-3.0, 0.0, 11.0] {
            assert_eq!(eval_dual(&d, &[], &[b], ExtReal::PosInf).unwrap(), fin(7.5));
        }
    }

    #[test]
    fn phi_coefficient_against_infinite_primal() {
        let d = one_dim(&[(23.0 / 7.0, -27.0 / 7.0, 0.0)]);
        assert_eq!(
            eval_dual(&d, &[], &[6.0], ExtReal::PosInf).unwrap(),
            ExtReal::NegInf
        );
        let v = eval_dual(&d, &[], &[5.0], fin(4.0))
            .unwrap()
            .finite()
            .unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // rounded coefficients as printed in tables
        assert!((3.29 * 5.0 - 3.86 * 4.0 - v).abs() < 0.05);
    }

    #[test]
    fn dimension_mismatch() {
        let d = one_dim(&[(1.0, 0.0, 0.0)]);
        assert!(matches!(
            eval_dual(&d, &[], &[1.0, 2.0], ExtReal::ZERO),
            Err(Error::DimensionMismatch(_))
        ));
    }

    fn primal(eta: f64, cost: f64, offset: f64, dom: f64) -> RestrictedPrimal {
        RestrictedPrimal {
            eta: vec![eta],
            integer_cost: cost,
            integer_offset: vec![offset],
            domain: DenseMatrix::from_rows(&[vec![dom]], 1).unwrap(),
            anchor: vec![offset],
        }
    }

    #[test]
    fn restricted_primal_domain() {
        let p = primal(0.0, 4.0, 5.0, -1.0);
        assert_eq!(eval_primal(&p, &[3.0]).unwrap(), fin(4.0));
        assert_eq!(eval_primal(&p, &[5.0]).unwrap(), fin(4.0));
        assert_eq!(eval_primal(&p, &[6.0]).unwrap(), ExtReal::PosInf);
        let zero = primal(0.0, 0.0, 0.0, -1.0);
        assert_eq!(eval_primal(&zero, &[-2.0]).unwrap(), fin(0.0));
        assert_eq!(eval_primal(&zero, &[0.5]).unwrap(), ExtReal::PosInf);
    }

    #[test]
    fn global_max_and_empty() {
        let mut g = GlobalDual::default();
        assert_eq!(eval_global(&g, &[], &[1.0]).unwrap(), ExtReal::NegInf);
        g.push(one_dim(&[(0.0, 0.0, 0.0)]), None);
        g.push(one_dim(&[(0.8, 0.0, 0.0)]), None);
        assert!((eval_global(&g, &[], &[5.0]).unwrap().to_f64() - 4.0).abs() < 1e-12);
        g.push(one_dim(&[(1.0, 0.0, 0.0), (0.0, 0.0, 4.0)]), None);
        assert!((eval_global(&g, &[], &[2.0]).unwrap().to_f64() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn grid_is_inclusive_and_validated() {
        let g = sample_grid(|b| Ok(fin(b)), -2.0, 10.0, 0.25).unwrap();
        assert_eq!(g.len(), 49);
        assert_eq!(g.last().unwrap().0, 10.0);
        assert!(matches!(
            sample_grid(|b| Ok(fin(b)), 0.0, 1.0, 0.0),
            Err(Error::BadRange(_))
        ));
        assert!(matches!(
            sample_grid(|b| Ok(fin(b)), 1.0, 0.0, 0.5),
            Err(Error::BadRange(_))
        ));
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, &[(0.0, ExtReal::PosInf), (1.0, fin(2.0))]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "beta,value\n0,inf\n1,2\n");
    }
}
