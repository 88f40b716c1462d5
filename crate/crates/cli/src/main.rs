use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use genbenders::generate;
use genbenders::oracle::{
    oracle_2ssmilp, oracle_miblp, oracle_vf_grid, ParametricRhs, DEFAULT_BOX_CAP,
};
use genbenders::piecewise::{eval_dual, grid_points, write_grid_csv};
use genbenders::{
    evaluate_reaction, extract_dual_function, solve_2ssmilp, solve_lp_benders, solve_miblp,
    solve_milp, BnbOptions, DriverOptions, Error, ExtReal, InstanceFile, MilpStatus, Reaction,
};
use serde_json::json;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "genbenders",
    version,
    about = "Benders decomposition for LP, two-stage stochastic MILP and bilevel MILP"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a decomposition driver, or branch-and-bound on a single MILP.
    Solve {
        #[arg(value_enum)]
        kind: SolveKind,
        #[command(flatten)]
        common: Common,
    },
    /// Run a brute-force reference solver.
    Oracle {
        #[arg(value_enum)]
        kind: OracleKind,
        #[command(flatten)]
        common: Common,
        /// Largest first-stage box `miblp-enum` will enumerate.
        #[arg(long, default_value_t = DEFAULT_BOX_CAP)]
        cap: usize,
    },
    /// Evaluate a function of one right-hand-side row on a grid and write `beta,value` CSV.
    Sample {
        #[arg(value_enum)]
        kind: SampleKind,
        #[command(flatten)]
        common: Common,
        /// Anchor at which `dual` and `reaction-dual` build their function.
        #[arg(long, allow_hyphen_values = true)]
        at: Option<f64>,
        /// CSV destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Instance file (JSON).
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Generate a random instance from this seed instead of reading one.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Per-iteration CSV trace of a driver run.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// JSON dump of every bilevel cut's dual and primal function.
    #[arg(long)]
    dump_cuts: Option<PathBuf>,
    /// Sampling grid `LO:HI:STEP`.
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Right-hand-side row that the grid value replaces.
    #[arg(long, default_value_t = 0)]
    row: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveKind {
    LpBenders,
    #[value(name = "2ssmilp")]
    TwoStage,
    Miblp,
    Milp,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleKind {
    VfGrid,
    MiblpEnum,
    #[value(name = "2ssmilp-ef")]
    TwoStageEf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleKind {
    /// Value function of a `milp` instance.
    Vf,
    /// Reaction function of a `miblp` instance.
    Reaction,
    /// Branch-and-bound dual function of a `milp` instance built at `--at`.
    Dual,
    /// Reaction dual function of a `miblp` instance built at `--at`, with the
    /// exact follower value substituted.
    ReactionDual,
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

const SOLVED: u8 = 0;
const INFEASIBLE: u8 = 1;
const UNBOUNDED: u8 = 2;
const LIMIT: u8 = 3;
const INPUT: u8 = 4;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Infeasible(_) => INFEASIBLE,
        Error::Unbounded(_) | Error::AssumptionViolated(_) => UNBOUNDED,
        Error::IterationLimit(_) | Error::NodeLimit(_) | Error::BoxTooLarge { .. } => LIMIT,
        Error::NumericalBreakdown(_) | Error::NotOptimal | Error::EmptyTree => LIMIT,
        Error::DimensionMismatch(_)
        | Error::InvalidBounds { .. }
        | Error::BadRange(_)
        | Error::InvalidInstance(_) => INPUT,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: exit_code(&e),
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(e) => exit_code(e),
            None => INPUT,
        };
        Failure { code, error }
    }
}

type Outcome = std::result::Result<u8, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Solve { kind, common } => solve(kind, &common),
        Command::Oracle { kind, common, cap } => oracle(kind, &common, cap),
        Command::Sample {
            kind,
            common,
            at,
            out,
        } => sample(kind, &common, at, out.as_deref()),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            if f.code != INPUT {
                let status = match f.code {
                    INFEASIBLE => "infeasible",
                    UNBOUNDED => "unbounded",
                    _ => "limit",
                };
                println!(
                    "{}",
                    json!({ "status": status, "message": format!("{:#}", f.error) })
                );
            }
            ExitCode::from(f.code)
        }
    }
}

fn load(common: &Common, kind: &str) -> Result<InstanceFile, Failure> {
    let inst = match (&common.instance, common.seed) {
        (Some(p), None) => InstanceFile::load(p)?,
        (None, Some(seed)) => match kind {
            "lp-benders" => InstanceFile::LpBenders(generate::lp_benders(seed)),
            "2ssmilp" => InstanceFile::TwoStage(generate::two_stage(seed)),
            "miblp" => InstanceFile::Miblp(generate::miblp(seed)),
            other => return Err(anyhow!("--seed cannot generate `{other}` instances").into()),
        },
        (Some(_), Some(_)) => {
            return Err(anyhow!("--instance and --seed are mutually exclusive").into())
        }
        (None, None) => return Err(anyhow!("one of --instance or --seed is required").into()),
    };
    if inst.kind() != kind {
        return Err(anyhow!("expected a `{kind}` instance, found `{}`", inst.kind()).into());
    }
    Ok(inst)
}

fn driver_options(common: &Common) -> Result<DriverOptions, Failure> {
    if !(common.tol.is_finite() && common.tol >= 0.0) {
        return Err(anyhow!("--tol must be a nonnegative number").into());
    }
    Ok(DriverOptions {
        tol: common.tol,
        max_iters: common.max_iters,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn print(value: serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(&value).expect("json"));
}

fn solve(kind: SolveKind, common: &Common) -> Outcome {
    let opts = driver_options(common)?;
    match kind {
        SolveKind::LpBenders => {
            let InstanceFile::LpBenders(inst) = load(common, "lp-benders")? else {
                unreachable!()
            };
            let r = solve_lp_benders(&inst, &opts)?;
            if let Some(p) = &common.trace_out {
                r.trace.write_lp_csv(create(p)?).context("writing trace")?;
            }
            print(
                json!({ "status": "solved", "value": r.value, "x": r.x, "y": r.y, "iterations": r.iterations }),
            );
        }
        SolveKind::TwoStage => {
            let InstanceFile::TwoStage(inst) = load(common, "2ssmilp")? else {
                unreachable!()
            };
            let r = solve_2ssmilp(&inst, &opts)?;
            if let Some(p) = &common.trace_out {
                r.trace
                    .write_two_stage_csv(create(p)?, inst.scenarios.len())
                    .context("writing trace")?;
            }
            print(
                json!({ "status": "solved", "value": r.value, "x": r.x, "y": r.y, "iterations": r.iterations }),
            );
        }
        SolveKind::Miblp => {
            let InstanceFile::Miblp(inst) = load(common, "miblp")? else {
                unreachable!()
            };
            let r = solve_miblp(&inst, &opts)?;
            if let Some(p) = &common.trace_out {
                r.trace
                    .write_miblp_csv(create(p)?)
                    .context("writing trace")?;
            }
            if let Some(p) = &common.dump_cuts {
                let mut w = create(p)?;
                serde_json::to_writer_pretty(&mut w, &r.cuts).context("writing cuts")?;
                writeln!(w).context("writing cuts")?;
            }
            print(
                json!({ "status": "solved", "value": r.value, "x": r.x, "y": r.y, "iterations": r.iterations }),
            );
        }
        SolveKind::Milp => {
            let InstanceFile::Milp(file) = load(common, "milp")? else {
                unreachable!()
            };
            let p = file.to_problem()?;
            let s = solve_milp(&p, &BnbOptions::default())?;
            match s.status {
                MilpStatus::Optimal => {}
                MilpStatus::Infeasible => {
                    return Err(Error::Infeasible("MILP has no feasible point".into()).into())
                }
                MilpStatus::Unbounded => {
                    return Err(Error::Unbounded("MILP is unbounded below".into()).into())
                }
                MilpStatus::NodeLimit => {
                    return Err(Error::NodeLimit(BnbOptions::default().node_limit).into())
                }
            }
            let dual = extract_dual_function(&s.tree)?;
            print(json!({
                "status": "solved",
                "value": s.value,
                "y": s.x,
                "nodes": s.tree.nodes,
                "dual_terms": dual.terms.iter().map(|t| json!({ "beta": t.beta2, "constant": t.constant })).collect::<Vec<_>>(),
            }));
        }
    }
    Ok(SOLVED)
}

fn parse_grid(common: &Common) -> Result<Vec<f64>, Failure> {
    let g = common
        .grid
        .as_deref()
        .ok_or_else(|| anyhow!("--grid LO:HI:STEP is required"))?;
    let parts: Vec<&str> = g.split(':').collect();
    let [lo, hi, step] = parts.as_slice() else {
        return Err(anyhow!("--grid expects LO:HI:STEP, got `{g}`").into());
    };
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| anyhow!("--grid: `{s}` is not a number"))
    };
    Ok(grid_points(num(lo)?, num(hi)?, num(step)?)?)
}

fn write_samples(samples: &[(f64, ExtReal)], out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => write_grid_csv(create(p)?, samples),
        None => write_grid_csv(std::io::stdout().lock(), samples),
    }
    .context("writing samples")?;
    Ok(())
}

fn check_row(row: usize, rows: usize) -> Result<(), Failure> {
    if row >= rows {
        return Err(anyhow!("--row {row} is out of range for {rows} rows").into());
    }
    Ok(())
}

fn oracle(kind: OracleKind, common: &Common, cap: usize) -> Outcome {
    match kind {
        OracleKind::VfGrid => {
            let InstanceFile::Milp(file) = load(common, "milp")? else {
                unreachable!()
            };
            let p = file.to_problem()?;
            check_row(common.row, p.lp.rhs.len())?;
            let samples = vf_samples(&p, common)?;
            write_samples(&samples, None)?;
        }
        OracleKind::MiblpEnum => {
            let InstanceFile::Miblp(inst) = load(common, "miblp")? else {
                unreachable!()
            };
            let r = oracle_miblp(&inst, cap)?;
            print(
                json!({ "status": "solved", "value": r.value, "x": r.x, "y": r.y, "evaluations": r.evaluations }),
            );
        }
        OracleKind::TwoStageEf => {
            let InstanceFile::TwoStage(inst) = load(common, "2ssmilp")? else {
                unreachable!()
            };
            let r = oracle_2ssmilp(&inst)?;
            print(json!({ "status": "solved", "value": r.value, "x": r.x, "y": r.y }));
        }
    }
    Ok(SOLVED)
}

fn vf_samples(
    p: &genbenders::MilpProblem,
    common: &Common,
) -> Result<Vec<(f64, ExtReal)>, Failure> {
    let grid = parse_grid(common)?;
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    let step = if grid.len() > 1 {
        grid[1] - grid[0]
    } else {
        1.0
    };
    let mut rhs = ParametricRhs::row(p.lp.rhs.len(), common.row);
    rhs.base = p.lp.rhs.clone();
    rhs.base[common.row] = 0.0;
    Ok(oracle_vf_grid(p, &rhs, lo, hi, step)?)
}

fn sample(kind: SampleKind, common: &Common, at: Option<f64>, out: Option<&Path>) -> Outcome {
    let need_at = || at.ok_or_else(|| Failure::from(anyhow!("--at is required for this sample")));
    let samples = match kind {
        SampleKind::Vf => {
            let InstanceFile::Milp(file) = load(common, "milp")? else {
                unreachable!()
            };
            let p = file.to_problem()?;
            check_row(common.row, p.lp.rhs.len())?;
            vf_samples(&p, common)?
        }
        SampleKind::Dual => {
            let InstanceFile::Milp(file) = load(common, "milp")? else {
                unreachable!()
            };
            let mut p = file.to_problem()?;
            check_row(common.row, p.lp.rhs.len())?;
            let anchor = need_at()?;
            p.lp.rhs[common.row] = anchor;
            let s = solve_milp(&p, &BnbOptions::default())?;
            if s.status != MilpStatus::Optimal {
                bail_status(s.status)?;
            }
            let dual = extract_dual_function(&s.tree)?;
            let mut beta = p.lp.rhs.clone();
            parse_grid(common)?
                .into_iter()
                .map(|b| {
                    beta[common.row] = b;
                    Ok((b, eval_dual(&dual, &[], &beta, ExtReal::ZERO)?))
                })
                .collect::<Result<_, Error>>()?
        }
        SampleKind::Reaction | SampleKind::ReactionDual => {
            let InstanceFile::Miblp(inst) = load(common, "miblp")? else {
                unreachable!()
            };
            check_row(common.row, inst.m2())?;
            let opts = BnbOptions::default();
            let beta1 = inst.b1.clone();
            let mut beta2 = inst.b2.clone();
            let dual = match kind {
                SampleKind::ReactionDual => {
                    beta2[common.row] = need_at()?;
                    match evaluate_reaction(&inst, &beta1, &beta2, &opts)? {
                        Reaction::Solved(c) => Some(c.dual),
                        _ => return Err(anyhow!("the reaction is infinite at the anchor").into()),
                    }
                }
                _ => None,
            };
            let mut samples = Vec::new();
            for b in parse_grid(common)? {
                beta2[common.row] = b;
                let v = match &dual {
                    None => match evaluate_reaction(&inst, &beta1, &beta2, &opts)? {
                        Reaction::Solved(c) => ExtReal::Finite(c.rho_value),
                        _ => ExtReal::PosInf,
                    },
                    Some(d) => {
                        let f = solve_milp(&inst.follower(&beta2)?, &opts)?;
                        let phi = match f.status {
                            MilpStatus::Optimal => ExtReal::Finite(f.value),
                            _ => ExtReal::PosInf,
                        };
                        eval_dual(d, &beta1, &beta2, phi)?
                    }
                };
                samples.push((b, v));
            }
            samples
        }
    };
    write_samples(&samples, out)?;
    Ok(SOLVED)
}

fn bail_status(status: MilpStatus) -> Result<(), Failure> {
    match status {
        MilpStatus::Infeasible => {
            Err(Error::Infeasible("MILP has no feasible point at the anchor".into()).into())
        }
        MilpStatus::Unbounded => {
            Err(Error::Unbounded("MILP is unbounded at the anchor".into()).into())
        }
        MilpStatus::NodeLimit => Err(Error::NodeLimit(BnbOptions::default().node_limit).into()),
        MilpStatus::Optimal => Ok(()),
    }
}
