//! Benders decomposition for optimistic mixed integer bilevel programs with
//! integer linking variables. Each iteration evaluates the reaction function
//! at the master iterate and adds its dual function, with the follower value
//! replaced by a restricted-domain primal function, as a linearized cut.

use crate::error::{Error, Result};
use crate::extended::ExtReal;
use crate::linalg::{dot, DenseMatrix};
use crate::milp::{solve_milp, BnbOptions, MilpStatus};
use crate::model::{add_min_epigraph, add_no_good, spread_big_m, AffineX, ModelBuilder};
use crate::piecewise::{eval_dual, eval_primal, MinAffineDual, RestrictedPrimal};
use crate::reaction::{evaluate_reaction, MiblpInstance, Reaction};
use crate::simplex::{solve_lp, LpProblem, LpStatus, RowSense};
use crate::trace::{BendersTrace, CutKind, DriverOptions, TraceRow};
use crate::two_stage::FALLBACK_BIG_M;
use serde::Serialize;

/// Default strictness of the off-domain indicator rows.
pub const DEFAULT_EPSILON: f64 = 1e-5;
/// Reaction floor used when neither the LP relaxation nor the instance gives one.
pub const FALLBACK_RHO_FLOOR: f64 = -1e6;

/// Big-M constants of one reaction cut.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutBigM {
    pub m_d: f64,
    pub m_p: f64,
    pub m_lower: Vec<f64>,
    pub m_upper: Vec<f64>,
    pub m: f64,
    pub epsilon: f64,
}

/// One optimality cut `z ≥ ρ̲ⁱ(b¹ − A¹x, b² − A²x)` with everything needed to
/// evaluate it in `β`-space and to linearize it in `x`-space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReactionCut {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub dual: MinAffineDual,
    /// Present when some term has a nonzero follower-value coefficient.
    pub primal: Option<RestrictedPrimal>,
    /// Terms in `x` as `(affine part, coefficient on φ̄)`.
    #[serde(skip)]
    pub terms: Vec<(AffineX, f64)>,
    /// Hyperplane of the primal function in `x`.
    #[serde(skip)]
    pub value: Option<AffineX>,
    /// Basic values `B⁻¹(b² − A²x − G²_I y_I)` of the primal's basis in `x`.
    #[serde(skip)]
    pub domain: Vec<AffineX>,
    pub big_m: CutBigM,
}

impl ReactionCut {
    /// `ρ̲ⁱ(β¹, β²)` with the follower value replaced by the primal function.
    pub fn eval(&self, beta1: &[f64], beta2: &[f64]) -> Result<ExtReal> {
        let phi = match &self.primal {
            Some(p) => eval_primal(p, beta2)?,
            None => ExtReal::ZERO,
        };
        eval_dual(&self.dual, beta1, beta2, phi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MasterCut {
    Reaction(Box<ReactionCut>),
    /// `f(x) ≤ 0`
    Feasibility(AffineX),
    NoGood(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MiblpResult {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub trace: BendersTrace,
    pub cuts: Vec<ReactionCut>,
}

/// Lower bound on `ρ` over the box: instance override, else the LP
/// `min d¹ᵀy` over all rows with `x` relaxed to its box, else a fallback.
///
/// When `d² ≥ 0` and the follower is feasible at the largest right-hand
/// side `β²_max` the box produces, any follower optimum satisfies
/// `d²ᵀy ≤ φ(β²_max)`, which bounds each `y_j` with `d²_j > 0` in the LP.
pub fn reaction_floor(inst: &MiblpInstance) -> Result<f64> {
    if let Some(f) = inst.rho_floor {
        return Ok(f);
    }
    let (n1, n2) = (inst.n1(), inst.n2());
    let mut y_upper = vec![f64::INFINITY; n2];
    if inst.d2.iter().all(|&v| v >= 0.0) {
        let beta_max: Vec<f64> = (0..inst.m2())
            .map(|i| {
                AffineX::from_rhs(&unit(inst.m2(), i), &inst.b2, &inst.a2, n1)
                    .range(&inst.x_lower, &inst.x_upper)
                    .1
            })
            .collect();
        let fs = solve_milp(&inst.follower(&beta_max)?, &BnbOptions::strict())?;
        if fs.status == MilpStatus::Optimal {
            for j in 0..n2 {
                if inst.d2[j] > 0.0 {
                    let u = fs.value / inst.d2[j];
                    y_upper[j] = if inst.y_integer[j] {
                        (u + 1e-9).floor()
                    } else {
                        u
                    };
                }
            }
        }
    }
    let rows: Vec<Vec<f64>> = (0..inst.m1())
        .map(|i| inst.a1[i].iter().chain(&inst.g1[i]).copied().collect())
        .chain((0..inst.m2()).map(|i| inst.a2[i].iter().chain(&inst.g2[i]).copied().collect()))
        .collect();
    let lp = LpProblem {
        objective: std::iter::repeat_n(0.0, n1)
            .chain(inst.d1.iter().copied())
            .collect(),
        matrix: DenseMatrix::from_rows(&rows, n1 + n2)?,
        rhs: inst.b1.iter().chain(&inst.b2).copied().collect(),
        senses: vec![RowSense::Ge; rows.len()],
        lower: inst
            .x_lower
            .iter()
            .copied()
            .chain(std::iter::repeat_n(0.0, n2))
            .collect(),
        upper: inst.x_upper.iter().copied().chain(y_upper).collect(),
    };
    let cert = solve_lp(&lp)?;
    match cert.status {
        LpStatus::Optimal => Ok(cert.objective),
        LpStatus::Infeasible => Err(Error::Infeasible(
            "no point of the box admits a feasible y".into(),
        )),
        LpStatus::Unbounded => {
            log::warn!("leader objective is unbounded over the relaxation; using reaction floor {FALLBACK_RHO_FLOOR}");
            Ok(FALLBACK_RHO_FLOOR)
        }
    }
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

/// Maps a reaction dual and primal at iterate `x` to `x`-space and sizes the
/// big-M constants over the box.
pub fn make_cut(
    inst: &MiblpInstance,
    iteration: usize,
    x: &[f64],
    dual: MinAffineDual,
    primal: RestrictedPrimal,
    rho_floor: f64,
) -> ReactionCut {
    let n1 = inst.n1();
    let (lo, hi) = (&inst.x_lower, &inst.x_upper);
    let uses_phi = dual.uses_phi();
    let terms: Vec<(AffineX, f64)> = dual
        .terms
        .iter()
        .map(|t| {
            let mut f = AffineX::from_rhs(&t.beta1, &inst.b1, &inst.a1, n1);
            f.add(&AffineX::from_rhs(&t.beta2, &inst.b2, &inst.a2, n1), 1.0);
            f.constant += t.constant;
            (f, t.phi)
        })
        .collect();
    let ov = inst.big_m.clone().unwrap_or_default();
    let epsilon = inst.epsilon.unwrap_or(DEFAULT_EPSILON);
    let (value, domain, m_p, m_lower, m_upper, phi_range) = if uses_phi {
        // r(x) = b² − A²x − G²_I y_I
        let shifted: Vec<f64> = inst
            .b2
            .iter()
            .zip(&primal.integer_offset)
            .map(|(b, o)| b - o)
            .collect();
        let mut value = AffineX::from_rhs(&primal.eta, &shifted, &inst.a2, n1);
        value.constant += primal.integer_cost;
        let domain: Vec<AffineX> = (0..primal.domain.rows())
            .map(|j| AffineX::from_rhs(primal.domain.row(j), &shifted, &inst.a2, n1))
            .collect();
        let (val_lo, val_hi) = value.range(lo, hi);
        // Off the domain, φ̄ must push the most negative φ-term below the floor.
        let (t_star, coeff) = terms
            .iter()
            .enumerate()
            .map(|(k, t)| (k, t.1))
            .fold((0, 0.0), |acc, (k, c)| if c < acc.1 { (k, c) } else { acc });
        let computed_mp = if coeff < 0.0 {
            let rest_hi = terms[t_star].0.range(lo, hi).1;
            ((rest_hi - rho_floor) / -coeff - val_lo).max(0.0) * 1.1 + 1.0
        } else {
            1.0
        };
        let m_p = ov.m_p.unwrap_or(computed_mp);
        let (m_lower, m_upper): (Vec<f64>, Vec<f64>) = domain
            .iter()
            .map(|w| {
                let (wl, wh) = w.range(lo, hi);
                let ml = ov.m_lower.unwrap_or((-wl).max(0.0) * 1.1 + 1.0);
                let mu = ov.m_upper.unwrap_or((wh.max(0.0) + epsilon) * 1.1 + 1.0);
                (ml, mu)
            })
            .unzip();
        (
            Some(value),
            domain,
            m_p,
            m_lower,
            m_upper,
            (val_lo, val_hi + m_p),
        )
    } else {
        (None, Vec::new(), 0.0, Vec::new(), Vec::new(), (0.0, 0.0))
    };
    let ranges: Vec<(f64, f64)> = terms
        .iter()
        .map(|(f, c)| {
            let (a, b) = f.range(lo, hi);
            let (p, q) = (c * phi_range.0, c * phi_range.1);
            (a + p.min(q), b + p.max(q))
        })
        .collect();
    let m_d = ov
        .m_d
        .unwrap_or_else(|| spread_big_m(&ranges, FALLBACK_BIG_M));
    let m = ov.m.unwrap_or(domain.len().max(1) as f64);
    ReactionCut {
        iteration,
        x: x.to_vec(),
        primal: uses_phi.then_some(primal),
        dual,
        terms,
        value,
        domain,
        big_m: CutBigM {
            m_d,
            m_p,
            m_lower,
            m_upper,
            m,
            epsilon,
        },
    }
}

/// Master MILP over `x` (first columns), `z` and the per-cut auxiliaries.
///
/// Without any reaction cut, `z` sits at the floor so the master minimizes
/// `cᵀx` alone.
pub fn build_master(
    inst: &MiblpInstance,
    cuts: &[MasterCut],
    rho_floor: f64,
) -> Result<crate::milp::MilpProblem> {
    let n1 = inst.n1();
    let mut m = ModelBuilder::new();
    let xs: Vec<usize> = (0..n1)
        .map(|j| m.add_var(inst.c[j], inst.x_lower[j], inst.x_upper[j], true))
        .collect();
    let z = m.add_var(1.0, rho_floor, f64::INFINITY, false);
    for i in inst.pure_x_rows() {
        m.add_row(
            xs.iter().zip(&inst.a1[i]).map(|(&v, &a)| (v, a)).collect(),
            RowSense::Ge,
            inst.b1[i],
        );
    }
    for cut in cuts {
        match cut {
            MasterCut::Reaction(rc) => add_reaction_block(&mut m, z, &xs, rc),
            MasterCut::Feasibility(f) => {
                m.add_row(
                    xs.iter().zip(&f.coeffs).map(|(&v, &c)| (v, c)).collect(),
                    RowSense::Le,
                    -f.constant,
                );
            }
            MasterCut::NoGood(p) => add_no_good(&mut m, &xs, p, &inst.x_lower, &inst.x_upper),
        }
    }
    m.build()
}

fn add_reaction_block(m: &mut ModelBuilder, z: usize, xs: &[usize], rc: &ReactionCut) {
    let bm = &rc.big_m;
    let phi = rc.value.as_ref().map(|value| {
        let phi = m.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY, false);
        let v = m.add_binary();
        // φ̄ = value(x) + M_P·v
        let mut row: Vec<(usize, f64)> = vec![(phi, 1.0), (v, -bm.m_p)];
        row.extend(
            xs.iter()
                .zip(&value.coeffs)
                .filter(|(_, c)| **c != 0.0)
                .map(|(&x, &c)| (x, -c)),
        );
        m.add_row(row, RowSense::Eq, value.constant);
        let mut indicators = Vec::new();
        for (j, w) in rc.domain.iter().enumerate() {
            let v1 = m.add_binary();
            let wx: Vec<(usize, f64)> = xs
                .iter()
                .zip(&w.coeffs)
                .filter(|(_, c)| **c != 0.0)
                .map(|(&x, &c)| (x, c))
                .collect();
            // w_j(x) ≥ −M̲_j·v¹_j
            let mut lo = wx.clone();
            lo.push((v1, bm.m_lower[j]));
            m.add_row(lo, RowSense::Ge, -w.constant);
            // w_j(x) ≤ M̄_j(1 − v¹_j) − ε
            let mut hi = wx;
            hi.push((v1, bm.m_upper[j]));
            m.add_row(hi, RowSense::Le, bm.m_upper[j] - bm.epsilon - w.constant);
            indicators.push(v1);
        }
        // M·v ≥ Σ v¹ and v ≤ Σ v¹
        let mut any: Vec<(usize, f64)> = vec![(v, bm.m)];
        any.extend(indicators.iter().map(|&k| (k, -1.0)));
        m.add_row(any, RowSense::Ge, 0.0);
        let mut only: Vec<(usize, f64)> = vec![(v, 1.0)];
        only.extend(indicators.iter().map(|&k| (k, -1.0)));
        m.add_row(only, RowSense::Le, 0.0);
        phi
    });
    add_min_epigraph(m, z, xs, &rc.terms, phi, bm.m_d);
}

/// Separates an iterate whose reaction is `+∞`: a Farkas cut on the LP
/// relaxation of the linking and follower rows when it is infeasible,
/// otherwise a no-good cut.
fn infeasibility_cut(
    inst: &MiblpInstance,
    x: &[f64],
    beta1: &[f64],
    beta2: &[f64],
) -> Result<MasterCut> {
    let lp = inst.link_relaxation(beta1, beta2)?;
    let cert = solve_lp(&lp)?;
    if cert.status == LpStatus::Infeasible {
        if let Some(sigma) = cert.farkas {
            let kappa = dot(&sigma, &lp.rhs) - lp.farkas_violation(&sigma);
            let link = inst.linking_rows();
            let mut w1 = vec![0.0; inst.m1()];
            for (k, &i) in link.iter().enumerate() {
                w1[i] = sigma[k];
            }
            let mut f = AffineX::from_rhs(&w1, &inst.b1, &inst.a1, inst.n1());
            f.add(
                &AffineX::from_rhs(&sigma[link.len()..], &inst.b2, &inst.a2, inst.n1()),
                1.0,
            );
            f.constant -= kappa;
            if f.eval(x) > 1e-9 {
                return Ok(MasterCut::Feasibility(f));
            }
        }
    }
    Ok(MasterCut::NoGood(x.to_vec()))
}

pub fn solve_miblp(inst: &MiblpInstance, opts: &DriverOptions) -> Result<MiblpResult> {
    inst.validate()?;
    let n1 = inst.n1();
    let rho_floor = reaction_floor(inst)?;
    let sub_opts = BnbOptions::default();
    let mut cuts: Vec<MasterCut> = Vec::new();
    let mut reaction_cuts: Vec<ReactionCut> = Vec::new();
    let mut trace = BendersTrace::default();
    let mut lower = ExtReal::NegInf;
    let mut upper = f64::INFINITY;
    let mut best: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut visited: Vec<Vec<f64>> = Vec::new();
    let single_point = inst.x_lower == inst.x_upper;

    for iter in 1..=opts.max_iters {
        let master = build_master(inst, &cuts, rho_floor)?;
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
        let x: Vec<f64> = sol[..n1].iter().map(|v| v.round() + 0.0).collect();
        if !reaction_cuts.is_empty() {
            lower = lower.max(ExtReal::Finite(ms.value));
        }

        let (beta1, beta2) = inst.rhs_at(&x);
        let reaction = evaluate_reaction(inst, &beta1, &beta2, &sub_opts)?;
        let (cut, phi, rho, terms) = match reaction {
            Reaction::Solved(cert) => {
                let v = dot(&inst.c, &x) + cert.rho_value;
                if v < upper {
                    upper = v;
                    best = Some((x.clone(), cert.y.clone()));
                }
                let terms = cert.dual.terms.len();
                let cert = *cert;
                let rc = make_cut(inst, iter, &x, cert.dual, cert.primal, rho_floor);
                (
                    MasterCut::Reaction(Box::new(rc)),
                    ExtReal::Finite(cert.phi_value),
                    ExtReal::Finite(cert.rho_value),
                    terms,
                )
            }
            Reaction::SecondStageInfeasible => (
                infeasibility_cut(inst, &x, &beta1, &beta2)?,
                ExtReal::PosInf,
                ExtReal::PosInf,
                0,
            ),
            Reaction::LinkInfeasible => {
                let phi = solve_milp(&inst.follower(&beta2)?, &sub_opts)?.value;
                (
                    infeasibility_cut(inst, &x, &beta1, &beta2)?,
                    ExtReal::of(phi),
                    ExtReal::PosInf,
                    0,
                )
            }
        };
        if single_point && upper.is_finite() {
            lower = ExtReal::Finite(upper);
        }
        let closed = matches!(lower, ExtReal::Finite(l) if upper - l <= opts.tol);
        let kind = match (&cut, closed) {
            (_, true) => CutKind::None,
            (MasterCut::Reaction(_), _) => CutKind::Optimality,
            (MasterCut::Feasibility(_), _) => CutKind::Feasibility,
            (MasterCut::NoGood(_), _) => CutKind::NoGood,
        };
        let x_iter = x.clone();
        trace.push(TraceRow {
            iter,
            lower,
            upper: ExtReal::of(upper),
            x,
            cut: kind,
            scenario_values: vec![rho],
            phi: Some(phi),
            terms,
        });
        if let MasterCut::Reaction(rc) = &cut {
            reaction_cuts.push(rc.as_ref().clone());
        }
        if !closed && visited.contains(&x_iter) {
            log::warn!(
                "iterate {x_iter:?} proposed again at iteration {iter} without closing the gap"
            );
        }
        visited.push(x_iter);
        if closed {
            let (x, y) = best.expect("finite upper bound has an incumbent");
            return Ok(MiblpResult {
                x,
                y,
                value: upper,
                iterations: iter,
                trace,
                cuts: reaction_cuts,
            });
        }
        cuts.push(cut);
    }
    Err(Error::IterationLimit(opts.max_iters))
}
