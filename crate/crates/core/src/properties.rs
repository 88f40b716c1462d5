//! Randomized invariants, checked against enumeration where the boxes are small.

use crate::generate;
use crate::oracle::{box_points, oracle_vf_grid, ParametricRhs};
use crate::piecewise::eval_dual;
use crate::{
    evaluate_reaction, extract_dual_function, solve_2ssmilp, solve_lp, solve_miblp, solve_milp,
    AffineTerm, BnbOptions, DenseMatrix, DriverOptions, ExtReal, InstanceFile, LpProblem, LpStatus,
    MilpProblem, MilpStatus, MinAffineDual, Reaction, RowSense,
};
use proptest::prelude::*;

fn sense() -> impl Strategy<Value = RowSense> {
    prop_oneof![Just(RowSense::Ge), Just(RowSense::Le), Just(RowSense::Eq)]
}

prop_compose! {
    fn small_lp()(m in 1usize..4, n in 1usize..4)(
        a in prop::collection::vec(prop::collection::vec(-3i32..=3, n), m),
        rhs in prop::collection::vec(-5i32..=5, m),
        senses in prop::collection::vec(sense(), m),
        cost in prop::collection::vec(-3i32..=3, n),
        upper in prop::collection::vec(prop::option::of(1i32..=5), n),
    ) -> LpProblem {
        let rows: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let n = cost.len();
        LpProblem {
            objective: cost.iter().map(|&v| v as f64).collect(),
            matrix: DenseMatrix::from_rows(&rows, n).unwrap(),
            rhs: rhs.iter().map(|&v| v as f64).collect(),
            senses,
            lower: vec![0.0; n],
            upper: upper.iter().map(|u| u.map_or(f64::INFINITY, |v| v as f64)).collect(),
        }
    }
}

fn activity(p: &LpProblem, x: &[f64], i: usize) -> f64 {
    p.matrix.row(i).iter().zip(x).map(|(a, v)| a * v).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lp_certificates_hold(p in small_lp()) {
        let c = solve_lp(&p).unwrap();
        prop_assert_eq!(&c, &solve_lp(&p).unwrap());
        match c.status {
            LpStatus::Optimal => {
                for i in 0..p.rhs.len() {
                    let r = activity(&p, &c.x, i) - p.rhs[i];
                    match p.senses[i] {
                        RowSense::Ge => prop_assert!(r >= -1e-7 && c.duals[i] >= -1e-9),
                        RowSense::Le => prop_assert!(r <= 1e-7 && c.duals[i] <= 1e-9),
                        RowSense::Eq => prop_assert!(r.abs() <= 1e-7),
                    }
                    prop_assert!((c.duals[i] * r).abs() <= 1e-6, "row {} slack {} dual {}", i, r, c.duals[i]);
                }
                for j in 0..p.num_cols() {
                    prop_assert!(c.x[j] >= p.lower[j] - 1e-9 && c.x[j] <= p.upper[j] + 1e-9);
                    prop_assert!(c.reduced_lower[j] >= -1e-9 && c.reduced_upper[j] <= 1e-9);
                    if c.reduced_lower[j] > 1e-9 {
                        prop_assert!((c.x[j] - p.lower[j]).abs() <= 1e-7);
                    }
                    if c.reduced_upper[j] < -1e-9 {
                        prop_assert!((c.x[j] - p.upper[j]).abs() <= 1e-7);
                    }
                }
                prop_assert!((c.objective - c.dual_objective(&p)).abs() <= 1e-6);
            }
            LpStatus::Infeasible => {
                let sigma = c.farkas.as_ref().expect("Farkas ray");
                prop_assert!(p.farkas_violation(sigma) > 1e-9);
            }
            LpStatus::Unbounded => {
                let ray = c.ray.as_ref().expect("primal ray");
                let slope: f64 = p.objective.iter().zip(ray).map(|(a, b)| a * b).sum();
                prop_assert!(slope < -1e-9);
            }
        }
    }
}

prop_compose! {
    /// Pure integer program on the box `[0, 3]ⁿ`.
    fn small_ip()(m in 1usize..3, n in 1usize..4)(
        a in prop::collection::vec(prop::collection::vec(-2i32..=4, n), m),
        rhs in prop::collection::vec(-2i32..=8, m),
        cost in prop::collection::vec(-2i32..=5, n),
    ) -> MilpProblem {
        let rows: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let n = cost.len();
        let lp = LpProblem {
            objective: cost.iter().map(|&v| v as f64).collect(),
            matrix: DenseMatrix::from_rows(&rows, n).unwrap(),
            rhs: rhs.iter().map(|&v| v as f64).collect(),
            senses: vec![RowSense::Ge; rows.len()],
            lower: vec![0.0; n],
            upper: vec![3.0; n],
        };
        MilpProblem::new(lp, vec![true; n]).unwrap()
    }
}

fn enumerate(p: &MilpProblem, rhs: &[f64]) -> f64 {
    let n = p.lp.num_cols();
    box_points(&vec![0.0; n], &vec![3.0; n], 1000)
        .unwrap()
        .iter()
        .filter(|y| (0..rhs.len()).all(|i| activity(&p.lp, y, i) >= rhs[i] - 1e-9))
        .map(|y| {
            p.lp.objective
                .iter()
                .zip(y)
                .map(|(c, v)| c * v)
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn branch_and_bound_dual_is_valid_and_strong(p in small_ip(), shifts in prop::collection::vec(-3i32..=3, 6)) {
        let s = solve_milp(&p, &BnbOptions::default()).unwrap();
        let exact = enumerate(&p, &p.lp.rhs);
        if exact.is_infinite() {
            prop_assert_eq!(s.status, MilpStatus::Infeasible);
            return Ok(());
        }
        prop_assert_eq!(s.status, MilpStatus::Optimal);
        prop_assert!((s.value - exact).abs() <= 1e-6);
        prop_assert!(s.tree.incumbent_value >= s.tree.lower_bound - 1e-9);

        // every integer point of the root box lies in exactly one leaf box
        let n = p.lp.num_cols();
        for y in box_points(&vec![0.0; n], &vec![3.0; n], 1000).unwrap() {
            let owners = s.tree.leaves.iter().filter(|l| (0..n).all(|j| l.lower[j] <= y[j] && y[j] <= l.upper[j])).count();
            prop_assert_eq!(owners, 1);
        }
        for leaf in &s.tree.leaves {
            let alpha: f64 = (0..n)
                .map(|j| {
                    let lo = if leaf.lower[j].is_finite() { leaf.reduced_lower[j] * leaf.lower[j] } else { 0.0 };
                    let hi = if leaf.upper[j].is_finite() { leaf.reduced_upper[j] * leaf.upper[j] } else { 0.0 };
                    lo + hi
                })
                .sum();
            prop_assert!((alpha - leaf.alpha).abs() <= 1e-6);
        }

        let dual = extract_dual_function(&s.tree).unwrap();
        let at = eval_dual(&dual, &[], &p.lp.rhs, ExtReal::ZERO).unwrap();
        prop_assert!((at.to_f64() - exact).abs() <= 1e-6, "dual {} at anchor, value {}", at, exact);
        for k in 0..3 {
            let rhs: Vec<f64> = (0..p.lp.rhs.len()).map(|i| p.lp.rhs[i] + shifts[(2 * k + i) % 6] as f64).collect();
            let v = eval_dual(&dual, &[], &rhs, ExtReal::ZERO).unwrap();
            prop_assert!(v <= ExtReal::of(enumerate(&p, &rhs) + 1e-6), "dual {} above value at {:?}", v, rhs);
        }
    }

    #[test]
    fn dual_evaluation_is_min_over_terms(
        terms in prop::collection::vec((-5.0f64..5.0, -5.0f64..0.0, -10.0f64..10.0), 1..6),
        beta in -10.0f64..10.0,
        phi in 0.0f64..10.0,
    ) {
        let d = MinAffineDual::new(
            terms.iter().map(|&(b, f, c)| AffineTerm { beta1: vec![], beta2: vec![b], phi: f, constant: c }).collect(),
            vec![],
            vec![0.0],
        ).unwrap();
        let want = terms.iter().map(|&(b, f, c)| b * beta + f * phi + c).fold(f64::INFINITY, f64::min);
        let got = eval_dual(&d, &[], &[beta], ExtReal::Finite(phi)).unwrap();
        prop_assert!((got.to_f64() - want).abs() <= 1e-9);
        if terms.iter().any(|t| t.1 < 0.0) {
            prop_assert_eq!(eval_dual(&d, &[], &[beta], ExtReal::PosInf).unwrap(), ExtReal::NegInf);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn bilevel_cuts_are_valid_at_every_box_point(seed in 0u64..10_000) {
        let inst = generate::miblp(seed);
        let Ok(r) = solve_miblp(&inst, &DriverOptions::default()) else { return Ok(()) };
        prop_assert!(r.trace.bounds_monotone(1e-6));
        for x in box_points(&inst.x_lower, &inst.x_upper, 100).unwrap() {
            let (b1, b2) = inst.rhs_at(&x);
            let Reaction::Solved(c) = evaluate_reaction(&inst, &b1, &b2, &BnbOptions::strict()).unwrap() else { continue };
            for cut in &r.cuts {
                let v = cut.eval(&b1, &b2).unwrap();
                prop_assert!(v <= ExtReal::of(c.rho_value + 1e-6), "cut {} gives {} > {} at {:?}", cut.iteration, v, c.rho_value, x);
                if cut.x == x {
                    prop_assert!((v.to_f64() - c.rho_value).abs() <= 1e-6, "cut {} not strong at its iterate", cut.iteration);
                }
            }
        }
    }

    #[test]
    fn drivers_are_deterministic(seed in 0u64..10_000) {
        let opts = DriverOptions::default();
        let inst = generate::two_stage(seed);
        prop_assert_eq!(solve_2ssmilp(&inst, &opts).unwrap(), solve_2ssmilp(&inst, &opts).unwrap());
        let inst = generate::miblp(seed);
        let (a, b) = (solve_miblp(&inst, &opts), solve_miblp(&inst, &opts));
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn instance_files_round_trip(seed in 0u64..10_000) {
        for f in [
            InstanceFile::LpBenders(generate::lp_benders(seed)),
            InstanceFile::TwoStage(generate::two_stage(seed)),
            InstanceFile::Miblp(generate::miblp(seed)),
        ] {
            prop_assert_eq!(InstanceFile::from_json(&f.to_json()).unwrap(), f);
        }
    }
}

#[test]
fn value_function_is_nondecreasing_for_covering_row() {
    let g = DenseMatrix::from_rows(&[vec![2.0, 5.0, 2.0, 2.0]], 4).unwrap();
    let p = MilpProblem::new(
        LpProblem::covering(vec![2.0, 4.0, 3.0, 4.0], g, vec![0.0]),
        vec![true, true, true, false],
    )
    .unwrap();
    let s = oracle_vf_grid(&p, &ParametricRhs::row(1, 0), -2.0, 10.0, 0.25).unwrap();
    assert!(s.windows(2).all(|w| w[0].1 <= w[1].1));
}
