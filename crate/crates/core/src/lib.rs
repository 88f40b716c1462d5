//! Generalized Benders decomposition for linear, two-stage stochastic integer
//! and mixed integer bilevel programs, built on a dense simplex and an LP-based
//! branch-and-bound that exports dual functions from its search tree.
#![allow(clippy::needless_range_loop)]

pub mod benders_lp;
pub mod error;
pub mod extended;
pub mod generate;
pub mod instance;
pub mod linalg;
pub mod miblp;
pub mod milp;
pub mod model;
pub mod oracle;
pub mod piecewise;
pub mod reaction;
pub mod simplex;
pub mod trace;
pub mod two_stage;

#[cfg(test)]
mod properties;

pub use benders_lp::{solve_lp_benders, LpBendersInstance, LpBendersResult};
pub use error::{Error, Result};
pub use extended::ExtReal;
pub use instance::{InstanceFile, MilpFile};
pub use linalg::DenseMatrix;
pub use miblp::{solve_miblp, MiblpResult, ReactionCut};
pub use milp::{
    extract_dual_function, solve_milp, BnbOptions, BnbTree, MilpProblem, MilpSolution, MilpStatus,
};
pub use oracle::{oracle_2ssmilp, oracle_miblp, oracle_vf_grid, ParametricRhs};
pub use piecewise::{AffineTerm, MinAffineDual, RestrictedPrimal};
pub use reaction::{
    evaluate_reaction, BigMOverrides, MiblpInstance, Reaction, ReactionCertificate,
};
pub use simplex::{basis_inverse_rows, solve_lp, LpCertificate, LpProblem, LpStatus, RowSense};
pub use trace::{BendersTrace, CutKind, DriverOptions};
pub use two_stage::{solve_2ssmilp, Scenario, TwoStageInstance, TwoStageResult};
