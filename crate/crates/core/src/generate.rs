//! Seeded random instances at the scale the brute-force oracles handle.
//! Streams come from ChaCha8, so a seed gives the same instance everywhere.

use crate::benders_lp::LpBendersInstance;
use crate::reaction::MiblpInstance;
use crate::two_stage::{Scenario, TwoStageInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ints<R: Rng>(rng: &mut R, n: usize, lo: i32, hi: i32) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..=hi) as f64).collect()
}

fn matrix<R: Rng>(rng: &mut R, m: usize, n: usize, lo: i32, hi: i32) -> Vec<Vec<f64>> {
    (0..m).map(|_| ints(rng, n, lo, hi)).collect()
}

/// Feasible LP with 5 rows and 3 + 3 columns: the right-hand side is
/// generated from a known nonnegative point, and positive costs keep it
/// bounded.
pub fn lp_benders(seed: u64) -> LpBendersInstance {
    let mut r = rng(seed);
    let (m, n1, n2) = (5, 3, 3);
    let a = matrix(&mut r, m, n1, -2, 4);
    let g = matrix(&mut r, m, n2, -2, 4);
    let x0 = ints(&mut r, n1, 0, 4);
    let y0 = ints(&mut r, n2, 0, 4);
    let b = (0..m)
        .map(|i| {
            let act: f64 = (0..n1).map(|j| a[i][j] * x0[j]).sum::<f64>()
                + (0..n2).map(|j| g[i][j] * y0[j]).sum::<f64>();
            act - r.gen_range(0..=2) as f64
        })
        .collect();
    LpBendersInstance {
        c: ints(&mut r, n1, 1, 5),
        d: ints(&mut r, n2, 1, 5),
        a,
        g,
        b,
        x_upper: Some(vec![10.0; n1]),
    }
}

/// Two integer first-stage variables on a 5×5 box, three mixed recourse
/// variables and one to three scenarios. Recourse rows have positive
/// coefficients, so every scenario is feasible.
pub fn two_stage(seed: u64) -> TwoStageInstance {
    let mut r = rng(seed);
    let (n1, n2, m2) = (2, 3, 2);
    let count = r.gen_range(1..=3);
    let weights: Vec<u32> = (0..count).map(|_| r.gen_range(1..=4)).collect();
    let total: u32 = weights.iter().sum();
    let mut scenarios: Vec<Scenario> = weights
        .iter()
        .map(|&w| Scenario {
            probability: w as f64 / total as f64,
            a2: matrix(&mut r, m2, n1, -2, 2),
            b2: ints(&mut r, m2, 0, 8),
        })
        .collect();
    let head: f64 = scenarios[..count - 1].iter().map(|s| s.probability).sum();
    scenarios[count - 1].probability = 1.0 - head;
    let mut y_integer: Vec<bool> = (0..n2).map(|_| r.gen_bool(0.6)).collect();
    y_integer[0] = true;
    TwoStageInstance {
        c: ints(&mut r, n1, -3, 3),
        d2: ints(&mut r, n2, 1, 6),
        a1: vec![],
        b1: vec![],
        g2: matrix(&mut r, m2, n2, 1, 4),
        scenarios,
        x_integer: vec![true; n1],
        y_integer,
        x_lower: vec![0.0; n1],
        x_upper: vec![4.0; n1],
    }
}

/// Two integer linking variables on a box of at most 25 points, three or
/// four follower variables with positive follower costs, and a leader row
/// `Σ y ≤ k + a·x` that bounds `y` and can make points, or whole instances,
/// infeasible.
pub fn miblp(seed: u64) -> MiblpInstance {
    let mut r = rng(seed);
    let n1 = 2;
    let n2 = r.gen_range(3..=4);
    let m2 = r.gen_range(1..=2);
    let x_upper: Vec<f64> = (0..n1).map(|_| r.gen_range(2..=4) as f64).collect();
    let mut y_integer: Vec<bool> = (0..n2).map(|_| r.gen_bool(0.7)).collect();
    y_integer[0] = true;
    // −Σy − a·x ≥ −k
    let a1 = vec![ints(&mut r, n1, -1, 1)];
    let b1 = vec![-(r.gen_range(0..=5) as f64)];
    MiblpInstance {
        c: ints(&mut r, n1, -4, 4),
        d1: ints(&mut r, n2, -5, 5),
        d2: ints(&mut r, n2, 1, 5),
        a1,
        g1: vec![vec![-1.0; n2]],
        b1,
        a2: matrix(&mut r, m2, n1, -2, 0),
        g2: matrix(&mut r, m2, n2, 0, 4)
            .into_iter()
            .map(|mut row| {
                if row.iter().all(|&v| v == 0.0) {
                    row[0] = 1.0;
                }
                row
            })
            .collect(),
        b2: ints(&mut r, m2, 0, 4),
        y_integer,
        x_integer: None,
        x_lower: vec![0.0; n1],
        x_upper,
        big_m: None,
        epsilon: None,
        rho_floor: None,
    }
}
