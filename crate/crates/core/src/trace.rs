//! Per-iteration records of the decomposition drivers and their CSV forms.

use crate::extended::ExtReal;
use serde::Serialize;
use std::io::Write;

/// Stopping rule shared by the decomposition drivers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverOptions {
    /// Absolute gap `UB − LB` at which a driver stops.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for DriverOptions {
    fn default() -> Self {
        DriverOptions {
            tol: 1e-6,
            max_iters: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutKind {
    Optimality,
    Feasibility,
    NoGood,
    /// The iteration closed the gap and no cut was added.
    None,
}

impl CutKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CutKind::Optimality => "optimality",
            CutKind::Feasibility => "feasibility",
            CutKind::NoGood => "no-good",
            CutKind::None => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    pub lower: ExtReal,
    pub upper: ExtReal,
    pub x: Vec<f64>,
    pub cut: CutKind,
    /// Subproblem values per scenario (one entry for single-scenario drivers).
    pub scenario_values: Vec<ExtReal>,
    /// Follower value at the iterate (bilevel driver only).
    pub phi: Option<ExtReal>,
    /// Number of terms in the cut added this iteration.
    pub terms: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BendersTrace {
    pub rows: Vec<TraceRow>,
}

impl BendersTrace {
    pub fn push(&mut self, row: TraceRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// True if the lower bounds never decrease and never exceed the upper bounds.
    pub fn bounds_monotone(&self, tol: f64) -> bool {
        let mut prev = ExtReal::NegInf;
        for r in &self.rows {
            if r.lower < prev {
                return false;
            }
            if let (Some(l), Some(u)) = (r.lower.finite(), r.upper.finite()) {
                if u < l - tol {
                    return false;
                }
            }
            if r.upper == ExtReal::NegInf
                || (r.lower == ExtReal::PosInf && r.upper != ExtReal::PosInf)
            {
                return false;
            }
            prev = r.lower;
        }
        true
    }

    /// `iter,LB,UB,cut_type`
    pub fn write_lp_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iter,LB,UB,cut_type")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.iter, r.lower, r.upper, r.cut.as_str())?;
        }
        Ok(())
    }

    /// `iter,LB,UB,cut_type,scenario_0,…`
    pub fn write_two_stage_csv<W: Write>(&self, mut w: W, scenarios: usize) -> std::io::Result<()> {
        write!(w, "iter,LB,UB,cut_type")?;
        for s in 0..scenarios {
            write!(w, ",scenario_{s}")?;
        }
        writeln!(w)?;
        for r in &self.rows {
            write!(w, "{},{},{},{}", r.iter, r.lower, r.upper, r.cut.as_str())?;
            for v in &r.scenario_values {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// `iter,LB,UB,x,phi,rho,terms,cut_kind` with `x` joined by `;`.
    pub fn write_miblp_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iter,LB,UB,x,phi,rho,terms,cut_kind")?;
        for r in &self.rows {
            let x: Vec<String> = r.x.iter().map(|v| v.to_string()).collect();
            let phi = r.phi.map(|p| p.to_string()).unwrap_or_default();
            let rho = r
                .scenario_values
                .first()
                .map(|p| p.to_string())
                .unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.iter,
                r.lower,
                r.upper,
                x.join(";"),
                phi,
                rho,
                r.terms,
                r.cut.as_str()
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(iter: usize, lower: ExtReal, upper: ExtReal) -> TraceRow {
        TraceRow {
            iter,
            lower,
            upper,
            x: vec![1.0, 2.0],
            cut: CutKind::Optimality,
            scenario_values: vec![ExtReal::Finite(4.0)],
            phi: Some(ExtReal::Finite(4.0)),
            terms: 2,
        }
    }

    #[test]
    fn monotonicity_check() {
        let mut t = BendersTrace::default();
        t.push(row(1, ExtReal::NegInf, ExtReal::Finite(-2.0)));
        t.push(row(2, ExtReal::Finite(-5.0), ExtReal::Finite(-2.0)));
        assert!(t.bounds_monotone(1e-9));
        t.push(row(3, ExtReal::Finite(-6.0), ExtReal::Finite(-2.0)));
        assert!(!t.bounds_monotone(1e-9));
    }

    #[test]
    fn csv_layouts() {
        let mut t = BendersTrace::default();
        t.push(row(1, ExtReal::NegInf, ExtReal::Finite(-2.0)));
        let mut buf = Vec::new();
        t.write_miblp_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(
            s,
            "iter,LB,UB,x,phi,rho,terms,cut_kind\n1,-inf,-2,1;2,4,4,2,optimality\n"
        );
        let mut buf = Vec::new();
        t.write_two_stage_csv(&mut buf, 1).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("iter,LB,UB,cut_type,scenario_0\n1,-inf,-2,optimality,4"));
    }
}
