//! JSON instance files. Every file carries a `kind` tag naming the problem
//! class; matrices are dense and row-major.

use crate::benders_lp::{check_matrix, LpBendersInstance};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::milp::MilpProblem;
use crate::reaction::MiblpInstance;
use crate::simplex::{LpProblem, RowSense};
use crate::two_stage::TwoStageInstance;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A single MILP `min cᵀy  s.t.  row_i(y) (≥|≤|=) rhs_i, lower ≤ y ≤ upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MilpFile {
    pub objective: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    /// All `>=` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub senses: Option<Vec<RowSense>>,
    /// Zero when absent; `null` entries are `−∞`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<Option<f64>>>,
    /// `+∞` when absent or `null`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<Option<f64>>>,
    pub integer: Vec<bool>,
}

impl MilpFile {
    pub fn to_problem(&self) -> Result<MilpProblem> {
        let (m, n) = (self.rhs.len(), self.objective.len());
        check_matrix("matrix", &self.matrix, m, n)?;
        let senses = self.senses.clone().unwrap_or_else(|| vec![RowSense::Ge; m]);
        let bound = |name: &str,
                     v: &Option<Vec<Option<f64>>>,
                     default: f64,
                     missing: f64|
         -> Result<Vec<f64>> {
            match v {
                None => Ok(vec![default; n]),
                Some(v) if v.len() == n => Ok(v.iter().map(|b| b.unwrap_or(missing)).collect()),
                Some(v) => Err(Error::InvalidInstance(format!(
                    "{name}: expected {n} entries, found {}",
                    v.len()
                ))),
            }
        };
        let lower = bound("lower", &self.lower, 0.0, f64::NEG_INFINITY)?;
        let upper = bound("upper", &self.upper, f64::INFINITY, f64::INFINITY)?;
        if senses.len() != m {
            return Err(Error::InvalidInstance(format!(
                "senses: expected {m} entries, found {}",
                senses.len()
            )));
        }
        let lp = LpProblem {
            objective: self.objective.clone(),
            matrix: DenseMatrix::from_rows(&self.matrix, n)?,
            rhs: self.rhs.clone(),
            senses,
            lower,
            upper,
        };
        MilpProblem::new(lp, self.integer.clone()).map_err(|_| {
            Error::InvalidInstance(format!(
                "integer: expected {n} entries, found {}",
                self.integer.len()
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum InstanceFile {
    #[serde(rename = "lp-benders")]
    LpBenders(LpBendersInstance),
    #[serde(rename = "2ssmilp")]
    TwoStage(TwoStageInstance),
    #[serde(rename = "miblp")]
    Miblp(MiblpInstance),
    #[serde(rename = "milp")]
    Milp(MilpFile),
}

impl InstanceFile {
    pub fn kind(&self) -> &'static str {
        match self {
            InstanceFile::LpBenders(_) => "lp-benders",
            InstanceFile::TwoStage(_) => "2ssmilp",
            InstanceFile::Miblp(_) => "miblp",
            InstanceFile::Milp(_) => "milp",
        }
    }

    /// Parses and validates. Syntax errors carry a line and column;
    /// structural errors carry the field path and the line of its key.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::InvalidInstance(e.to_string()))?;
        let kind = match value.as_object_mut().map(|o| o.remove("kind")) {
            Some(Some(serde_json::Value::String(k))) => k,
            Some(_) => return Err(Error::InvalidInstance("missing string field `kind`".into())),
            None => {
                return Err(Error::InvalidInstance(
                    "instance must be a JSON object".into(),
                ))
            }
        };
        let f = match kind.as_str() {
            "lp-benders" => InstanceFile::LpBenders(typed(value, text)?),
            "2ssmilp" => InstanceFile::TwoStage(typed(value, text)?),
            "miblp" => InstanceFile::Miblp(typed(value, text)?),
            "milp" => InstanceFile::Milp(typed(value, text)?),
            other => {
                return Err(Error::InvalidInstance(format!(
                "kind: unknown variant `{other}`, expected one of lp-benders, 2ssmilp, miblp, milp"
            )))
            }
        };
        f.validate()?;
        Ok(f)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instances serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInstance(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::InvalidInstance(m) => Error::InvalidInstance(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|e| Error::InvalidInstance(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            InstanceFile::LpBenders(i) => i.validate(),
            InstanceFile::TwoStage(i) => i.validate(),
            InstanceFile::Miblp(i) => i.validate(),
            InstanceFile::Milp(i) => i.to_problem().map(|_| ()),
        }
    }
}

fn typed<T: serde::de::DeserializeOwned>(value: serde_json::Value, text: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let key = path.split(['.', '[']).next().unwrap_or("");
        let line = (!key.is_empty() && key != ".")
            .then(|| text.lines().position(|l| l.contains(&format!("\"{key}\""))))
            .flatten();
        match line {
            Some(l) => Error::InvalidInstance(format!("{path} (line {}): {}", l + 1, e.inner())),
            None => Error::InvalidInstance(e.inner().to_string()),
        }
    })
}
