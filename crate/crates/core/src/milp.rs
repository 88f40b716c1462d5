//! LP-based branch-and-bound that keeps every leaf's dual certificate.
//!
//! Each leaf `t` contributes the affine lower bound `βᵀη^t + α^t` on its
//! node LP, so `min_t` over the leaves is a dual function of the MILP value
//! function that is strong at the solved right-hand side.

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::piecewise::{AffineTerm, MinAffineDual};
use crate::simplex::{solve_lp, LpCertificate, LpProblem, LpStatus, RowSense};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct MilpProblem {
    pub lp: LpProblem,
    /// Integrality mask over the columns.
    pub integer: Vec<bool>,
}

impl MilpProblem {
    pub fn new(lp: LpProblem, integer: Vec<bool>) -> Result<Self> {
        if integer.len() != lp.num_cols() {
            return Err(Error::DimensionMismatch(format!(
                "integrality mask has {} entries for {} columns",
                integer.len(),
                lp.num_cols()
            )));
        }
        Ok(MilpProblem { lp, integer })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnbOptions {
    pub integrality_tol: f64,
    /// Nodes whose bound is within this of the incumbent are not branched.
    pub gap_tol: f64,
    pub node_limit: usize,
    /// Initial weight of the Farkas ray in infeasible-leaf dual points.
    pub ray_weight: f64,
    /// When false, infeasible leaves get a vacuous term and no dual search.
    pub dual_certificates: bool,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            integrality_tol: 1e-6,
            gap_tol: 1e-9,
            node_limit: 100_000,
            ray_weight: 1.0,
            dual_certificates: true,
        }
    }
}

impl BnbOptions {
    /// Settings for master problems, whose trees are not reused.
    pub fn master() -> Self {
        BnbOptions {
            integrality_tol: 1e-9,
            dual_certificates: false,
            ..Self::default()
        }
    }

    /// Tighter settings used by the brute-force oracles.
    pub fn strict() -> Self {
        BnbOptions {
            integrality_tol: 1e-8,
            gap_tol: 1e-10,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NodeLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeafStatus {
    Optimal,
    Infeasible,
}

/// `var ≤ bound` when `upper`, else `var ≥ bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub var: usize,
    pub upper: bool,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbLeaf {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub branches: Vec<Branch>,
    pub status: LeafStatus,
    /// Node LP value (`+∞` when infeasible).
    pub lp_value: f64,
    pub duals: Vec<f64>,
    pub reduced_lower: Vec<f64>,
    pub reduced_upper: Vec<f64>,
    pub alpha: f64,
}

impl BnbLeaf {
    pub fn term(&self) -> AffineTerm {
        AffineTerm::linear(self.duals.clone(), self.alpha)
    }

    pub fn eval(&self, rhs: &[f64]) -> f64 {
        dot(&self.duals, rhs) + self.alpha
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnbTree {
    pub leaves: Vec<BnbLeaf>,
    pub incumbent: Option<Vec<f64>>,
    pub incumbent_value: f64,
    pub lower_bound: f64,
    pub nodes: usize,
    /// Right-hand side the tree was built for.
    pub rhs: Vec<f64>,
    pub root_lower: Vec<f64>,
    pub root_upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpSolution {
    pub status: MilpStatus,
    pub x: Option<Vec<f64>>,
    pub value: f64,
    pub tree: BnbTree,
}

struct Node {
    id: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    branches: Vec<Branch>,
    cert: LpCertificate,
    parent_duals: Option<Vec<f64>>,
}

impl Node {
    fn bound(&self) -> f64 {
        match self.cert.status {
            LpStatus::Optimal => self.cert.objective,
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
        }
    }
}

fn node_lp(p: &MilpProblem, lower: &[f64], upper: &[f64]) -> LpProblem {
    let mut lp = p.lp.clone();
    lp.lower = lower.to_vec();
    lp.upper = upper.to_vec();
    lp
}

fn first_fractional(p: &MilpProblem, x: &[f64], tol: f64) -> Option<usize> {
    (0..x.len()).find(|&j| p.integer[j] && (x[j] - x[j].round()).abs() > tol)
}

/// Solves the MILP by best-bound branch-and-bound.
///
/// Branches on the lowest-index fractional integer variable; node selection
/// is best bound with ties broken by creation order.
pub fn solve_milp(p: &MilpProblem, opts: &BnbOptions) -> Result<MilpSolution> {
    p.lp.validate()?;
    if p.integer.len() != p.lp.num_cols() {
        return Err(Error::DimensionMismatch("integrality mask length".into()));
    }
    let mut root_lower = p.lp.lower.clone();
    let mut root_upper = p.lp.upper.clone();
    for j in 0..root_lower.len() {
        if p.integer[j] {
            root_lower[j] = (root_lower[j] - opts.integrality_tol).ceil();
            root_upper[j] = (root_upper[j] + opts.integrality_tol).floor();
        }
    }
    let mut next_id = 0;
    let mut open: Vec<Node> = Vec::new();
    let mut leaves: Vec<Node> = Vec::new();
    let mut incumbent: Option<Vec<f64>> = None;
    let mut incumbent_value = f64::INFINITY;

    let root_infeasible_box = (0..root_lower.len()).any(|j| root_lower[j] > root_upper[j]);
    let root_cert = if root_infeasible_box {
        None
    } else {
        Some(solve_lp(&node_lp(p, &root_lower, &root_upper))?)
    };
    let tree_of =
        |leaves: Vec<BnbLeaf>, inc: Option<Vec<f64>>, inc_v: f64, lb: f64, nodes: usize| BnbTree {
            leaves,
            incumbent: inc,
            incumbent_value: inc_v,
            lower_bound: lb,
            nodes,
            rhs: p.lp.rhs.clone(),
            root_lower: root_lower.clone(),
            root_upper: root_upper.clone(),
        };
    let Some(root_cert) = root_cert else {
        return Ok(MilpSolution {
            status: MilpStatus::Infeasible,
            x: None,
            value: f64::INFINITY,
            tree: tree_of(Vec::new(), None, f64::INFINITY, f64::INFINITY, 0),
        });
    };
    if root_cert.status == LpStatus::Unbounded {
        return Ok(MilpSolution {
            status: MilpStatus::Unbounded,
            x: None,
            value: f64::NEG_INFINITY,
            tree: tree_of(Vec::new(), None, f64::INFINITY, f64::NEG_INFINITY, 1),
        });
    }
    open.push(Node {
        id: next_id,
        lower: root_lower.clone(),
        upper: root_upper.clone(),
        branches: Vec::new(),
        cert: root_cert,
        parent_duals: None,
    });
    next_id += 1;
    let mut processed = 0usize;
    let mut hit_limit = false;

    loop {
        if open.is_empty() {
            break;
        }
        let mut best = 0;
        for (k, n) in open.iter().enumerate() {
            let (b, bb) = (n.bound(), open[best].bound());
            if b < bb || (b == bb && n.id < open[best].id) {
                best = k;
            }
        }
        let bound = open[best].bound();
        let cutoff = if incumbent_value.is_finite() {
            incumbent_value - opts.gap_tol * incumbent_value.abs().max(1.0)
        } else {
            f64::INFINITY
        };
        if bound >= cutoff {
            break;
        }
        if processed >= opts.node_limit {
            hit_limit = true;
            break;
        }
        let node = open.remove(best);
        processed += 1;
        if node.cert.status == LpStatus::Infeasible {
            leaves.push(node);
            continue;
        }
        if node.cert.status == LpStatus::Unbounded {
            return Ok(MilpSolution {
                status: MilpStatus::Unbounded,
                x: None,
                value: f64::NEG_INFINITY,
                tree: tree_of(Vec::new(), None, f64::INFINITY, f64::NEG_INFINITY, next_id),
            });
        }
        match first_fractional(p, &node.cert.x, opts.integrality_tol) {
            None => {
                let mut x = node.cert.x.clone();
                for j in 0..x.len() {
                    if p.integer[j] {
                        x[j] = x[j].round() + 0.0;
                    }
                }
                let v = dot(&p.lp.objective, &x);
                if v < incumbent_value {
                    incumbent_value = v;
                    incumbent = Some(x);
                }
                leaves.push(node);
            }
            Some(j) => {
                let v = node.cert.x[j];
                let (down, up) = (v.floor(), v.ceil());
                for upper_side in [true, false] {
                    let mut lower = node.lower.clone();
                    let mut upper = node.upper.clone();
                    let branch = if upper_side {
                        upper[j] = down;
                        Branch {
                            var: j,
                            upper: true,
                            bound: down,
                        }
                    } else {
                        lower[j] = up;
                        Branch {
                            var: j,
                            upper: false,
                            bound: up,
                        }
                    };
                    let cert = solve_lp(&node_lp(p, &lower, &upper))?;
                    let mut branches = node.branches.clone();
                    branches.push(branch);
                    open.push(Node {
                        id: next_id,
                        lower,
                        upper,
                        branches,
                        cert,
                        parent_duals: Some(node.cert.duals.clone()),
                    });
                    next_id += 1;
                }
            }
        }
    }

    let lower_bound = open.iter().map(Node::bound).fold(incumbent_value, f64::min);
    leaves.extend(open);
    leaves.sort_by_key(|n| n.id);
    let leaves = leaves
        .into_iter()
        .map(|n| finish_leaf(p, n, incumbent_value, opts))
        .collect();
    let status = if hit_limit {
        MilpStatus::NodeLimit
    } else if incumbent.is_some() {
        MilpStatus::Optimal
    } else {
        MilpStatus::Infeasible
    };
    let value = incumbent_value;
    Ok(MilpSolution {
        status,
        x: incumbent.clone(),
        value,
        tree: tree_of(leaves, incumbent, incumbent_value, lower_bound, next_id),
    })
}

/// Lagrangian bound data for an arbitrary sign-feasible row multiplier:
/// reduced costs `c − Aᵀη` split by sign and `α = Σ min over the box`.
/// Returns `None` if some reduced cost points towards an infinite bound.
fn lagrangian(
    p: &LpProblem,
    eta: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let n = p.num_cols();
    let at = p.matrix.vec_mul(eta);
    let scale = 1.0 + eta.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut rl = vec![0.0; n];
    let mut ru = vec![0.0; n];
    let mut alpha = 0.0;
    for j in 0..n {
        let mut d = p.objective[j] - at[j];
        if d.abs() <= 1e-9 * scale {
            d = 0.0;
        }
        if d > 0.0 {
            if !lower[j].is_finite() {
                return None;
            }
            rl[j] = d;
            alpha += d * lower[j];
        } else if d < 0.0 {
            if !upper[j].is_finite() {
                return None;
            }
            ru[j] = d;
            alpha += d * upper[j];
        }
    }
    Some((rl, ru, alpha))
}

/// Projects multipliers onto the sign pattern required by the row senses.
fn sign_feasible(p: &LpProblem, eta: &[f64]) -> Vec<f64> {
    eta.iter()
        .zip(&p.senses)
        .map(|(&v, s)| match s {
            RowSense::Ge => v.max(0.0),
            RowSense::Le => v.min(0.0),
            RowSense::Eq => v,
        })
        .collect()
}

fn finish_leaf(p: &MilpProblem, n: Node, incumbent: f64, opts: &BnbOptions) -> BnbLeaf {
    let lp = &p.lp;
    match n.cert.status {
        LpStatus::Optimal | LpStatus::Unbounded => {
            let mut alpha = 0.0;
            for j in 0..lp.num_cols() {
                if n.lower[j].is_finite() {
                    alpha += n.cert.reduced_lower[j] * n.lower[j];
                }
                if n.upper[j].is_finite() {
                    alpha += n.cert.reduced_upper[j] * n.upper[j];
                }
            }
            BnbLeaf {
                lower: n.lower,
                upper: n.upper,
                branches: n.branches,
                status: LeafStatus::Optimal,
                lp_value: n.cert.objective,
                duals: n.cert.duals,
                reduced_lower: n.cert.reduced_lower,
                reduced_upper: n.cert.reduced_upper,
                alpha,
            }
        }
        LpStatus::Infeasible => {
            let sigma = n
                .cert
                .farkas
                .clone()
                .unwrap_or_else(|| vec![0.0; lp.num_rows()]);
            let base = n
                .parent_duals
                .clone()
                .unwrap_or_else(|| vec![0.0; lp.num_rows()]);
            let rhs = &lp.rhs;
            let mut weight = opts.ray_weight;
            let mut chosen = None;
            if !opts.dual_certificates {
                weight = f64::INFINITY;
            }
            // Increase the ray weight until the leaf bound reaches the
            // incumbent at the solved right-hand side.
            for _ in 0..64 {
                if !weight.is_finite() {
                    break;
                }
                let eta: Vec<f64> = base
                    .iter()
                    .zip(&sigma)
                    .map(|(b, s)| b + weight * s)
                    .collect();
                let eta = sign_feasible(lp, &eta);
                if let Some((rl, ru, alpha)) = lagrangian(lp, &eta, &n.lower, &n.upper) {
                    let v = dot(&eta, rhs) + alpha;
                    let done =
                        !incumbent.is_finite() || v >= incumbent - 1e-9 * incumbent.abs().max(1.0);
                    chosen = Some((eta, rl, ru, alpha));
                    if done {
                        break;
                    }
                }
                if weight > 1e12 {
                    break;
                }
                weight *= 2.0;
            }
            let (duals, reduced_lower, reduced_upper, alpha) = chosen.unwrap_or_else(|| {
                if opts.dual_certificates {
                    log::warn!("no finite dual bound for infeasible leaf; using a vacuous term");
                }
                let m = lp.num_rows();
                let n_cols = lp.num_cols();
                (vec![0.0; m], vec![0.0; n_cols], vec![0.0; n_cols], -1e30)
            });
            BnbLeaf {
                lower: n.lower,
                upper: n.upper,
                branches: n.branches,
                status: LeafStatus::Infeasible,
                lp_value: f64::INFINITY,
                duals,
                reduced_lower,
                reduced_upper,
                alpha,
            }
        }
    }
}

/// `min_t (βᵀη^t + α^t)` over the leaves of a solved tree.
pub fn extract_dual_function(tree: &BnbTree) -> Result<MinAffineDual> {
    if tree.leaves.is_empty() {
        return Err(Error::EmptyTree);
    }
    let terms = tree.leaves.iter().map(BnbLeaf::term).collect();
    MinAffineDual::new(terms, Vec::new(), tree.rhs.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    /// `min 2y1 + 4y2 + 3y3 + 4y4  s.t.  2y1 + 5y2 + 2y3 + 2y4 ≥ β`,
    /// `y1..y3` integer.
    fn ip(beta: f64) -> MilpProblem {
        let a = DenseMatrix::from_rows(&[vec![2.0, 5.0, 2.0, 2.0]], 4).unwrap();
        let lp = LpProblem::covering(vec![2.0, 4.0, 3.0, 4.0], a, vec![beta]);
        MilpProblem::new(lp, vec![true, true, true, false]).unwrap()
    }

    fn solve(beta: f64) -> MilpSolution {
        solve_milp(&ip(beta), &BnbOptions::default()).unwrap()
    }

    #[test]
    fn value_function_anchors() {
        for (beta, v) in [(5.0, 4.0), (0.0, 0.0), (-1.0, 0.0), (2.0, 2.0), (4.0, 4.0)] {
            let s = solve(beta);
            assert_eq!(s.status, MilpStatus::Optimal);
            assert!((s.value - v).abs() < 1e-9, "beta={beta}: {}", s.value);
        }
        assert_eq!(solve(0.0).tree.nodes, 1);
    }

    #[test]
    fn root_only_duals() {
        let s = solve(5.0);
        assert_eq!(s.tree.leaves.len(), 1);
        let leaf = &s.tree.leaves[0];
        assert!((leaf.duals[0] - 0.8).abs() < 1e-12);
        let expect = [0.4, 0.0, 1.4, 2.4];
        for j in 0..4 {
            assert!((leaf.reduced_lower[j] - expect[j]).abs() < 1e-12);
            assert_eq!(leaf.reduced_upper[j], 0.0);
        }
        let s0 = solve(0.0);
        assert_eq!(s0.tree.leaves[0].duals, vec![0.0]);
        assert_eq!(s0.tree.leaves[0].reduced_lower, vec![2.0, 4.0, 3.0, 4.0]);
    }

    #[test]
    fn two_leaf_tree_at_two() {
        let s = solve(2.0);
        let t = &s.tree;
        assert_eq!(t.leaves.len(), 2);
        let l1 = &t.leaves[0];
        assert_eq!(
            l1.branches,
            vec![Branch {
                var: 1,
                upper: true,
                bound: 0.0
            }]
        );
        assert!((l1.duals[0] - 1.0).abs() < 1e-12 && l1.alpha.abs() < 1e-12);
        assert!((l1.reduced_upper[1] + 1.0).abs() < 1e-12);
        assert_eq!(l1.reduced_lower, vec![0.0, 0.0, 1.0, 2.0]);
        let l2 = &t.leaves[1];
        assert_eq!(
            l2.branches,
            vec![Branch {
                var: 1,
                upper: false,
                bound: 1.0
            }]
        );
        assert!(l2.duals[0].abs() < 1e-12 && (l2.alpha - 4.0).abs() < 1e-12);
    }

    #[test]
    fn empty_tree_is_an_error() {
        let mut t = solve(1.0).tree;
        t.leaves.clear();
        assert!(matches!(extract_dual_function(&t), Err(Error::EmptyTree)));
    }

    #[test]
    fn infeasible_and_unbounded_status() {
        // y integer in [0, 1], 2y >= 3
        let a = DenseMatrix::from_rows(&[vec![2.0]], 1).unwrap();
        let mut lp = LpProblem::covering(vec![1.0], a, vec![3.0]);
        lp.upper = vec![1.0];
        let s = solve_milp(
            &MilpProblem::new(lp, vec![true]).unwrap(),
            &BnbOptions::default(),
        )
        .unwrap();
        assert_eq!(s.status, MilpStatus::Infeasible);

        // y in [0.2, 0.8] integer: no LP needed
        let a = DenseMatrix::from_rows(&[vec![1.0]], 1).unwrap();
        let mut lp = LpProblem::covering(vec![1.0], a, vec![0.0]);
        lp.lower = vec![0.2];
        lp.upper = vec![0.8];
        let s = solve_milp(
            &MilpProblem::new(lp, vec![true]).unwrap(),
            &BnbOptions::default(),
        )
        .unwrap();
        assert_eq!(s.status, MilpStatus::Infeasible);

        let a = DenseMatrix::from_rows(&[vec![1.0]], 1).unwrap();
        let lp = LpProblem::covering(vec![-1.0], a, vec![0.0]);
        let s = solve_milp(
            &MilpProblem::new(lp, vec![true]).unwrap(),
            &BnbOptions::default(),
        )
        .unwrap();
        assert_eq!(s.status, MilpStatus::Unbounded);
    }

    #[test]
    fn infeasible_leaf_gets_valid_term() {
        // min y1 + y2 s.t. 2y1 + 2y2 >= 3, y1 - y2 = 0, integer.
        // Branching produces an infeasible child.
        let a = DenseMatrix::from_rows(&[vec![2.0, 2.0], vec![1.0, -1.0]], 2).unwrap();
        let mut lp = LpProblem::covering(vec![1.0, 1.0], a, vec![3.0, 0.0]);
        lp.senses[1] = RowSense::Eq;
        let p = MilpProblem::new(lp, vec![true, true]).unwrap();
        let s = solve_milp(&p, &BnbOptions::default()).unwrap();
        assert!((s.value - 2.0).abs() < 1e-9);
        let d = extract_dual_function(&s.tree).unwrap();
        let at = crate::piecewise::eval_dual(&d, &[], &p.lp.rhs, crate::ExtReal::ZERO).unwrap();
        assert!((at.to_f64() - 2.0).abs() < 1e-6);
        assert!(s
            .tree
            .leaves
            .iter()
            .any(|l| l.status == LeafStatus::Infeasible));
        for b in [-2.0, 0.0, 1.0, 2.5, 4.0, 7.0] {
            let mut q = p.clone();
            q.lp.rhs[0] = b;
            let exact = solve_milp(&q, &BnbOptions::strict()).unwrap().value;
            let lbv =
                crate::piecewise::eval_dual(&d, &[], &q.lp.rhs, crate::ExtReal::ZERO).unwrap();
            assert!(lbv.to_f64() <= exact + 1e-6, "b={b}: {lbv} > {exact}");
        }
    }
}
