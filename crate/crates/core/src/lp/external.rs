//! Out-of-process solver adapter.
//!
//! The model is written to the child's stdin as JSON:
//!
//! ```text
//! {"objective": [..], "lower": [..|null], "upper": [..|null],
//!  "rows": [{"terms": [[var, coef], ..], "relation": "<=", "rhs": ..}, ..]}
//! ```
//!
//! `null` bounds are infinite. The child answers on stdout with
//! `{"status": "optimal"|"infeasible"|"unbounded", "values": [..]}`.
//! `scripts/scipy_highs_backend.py` implements the protocol with HiGHS.

use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use super::{LpBackend, LpModel, LpSolution, LpStatus, Relation, VarId};
use crate::error::{Error, Result};

#[derive(Serialize)]
struct Row<'a> {
    terms: &'a [(VarId, f64)],
    relation: Relation,
    rhs: f64,
}

#[derive(Serialize)]
struct Request<'a> {
    objective: &'a [f64],
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
    rows: Vec<Row<'a>>,
}

#[derive(Deserialize)]
struct Response {
    status: LpStatus,
    #[serde(default)]
    values: Vec<f64>,
    #[serde(default)]
    iterations: usize,
}

#[derive(Clone, Debug)]
pub struct ExternalSolver {
    pub program: String,
    pub args: Vec<String>,
}

impl ExternalSolver {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
        }
    }

    /// Parses a whitespace-separated command line.
    pub fn from_command_line(cmd: &str) -> Result<Self> {
        let mut parts = cmd.split_whitespace().map(str::to_string);
        let program = parts
            .next()
            .ok_or_else(|| Error::Config("empty external solver command".into()))?;
        Ok(Self::new(program, parts.collect()))
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl LpBackend for ExternalSolver {
    fn name(&self) -> &str {
        "external"
    }

    fn solve(&self, model: &LpModel) -> Result<LpSolution> {
        model.validate()?;
        let request = Request {
            objective: &model.objective,
            lower: model.variables.iter().map(|v| finite(v.lower)).collect(),
            upper: model.variables.iter().map(|v| finite(v.upper)).collect(),
            rows: model
                .constraints
                .iter()
                .map(|c| Row {
                    terms: &c.terms,
                    relation: c.relation,
                    rhs: c.rhs,
                })
                .collect(),
        };
        let payload = serde_json::to_vec(&request)?;

        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::External(format!("cannot start {}: {e}", self.program)))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = std::thread::spawn(move || stdin.write_all(&payload));
        let output = child.wait_with_output()?;
        writer
            .join()
            .map_err(|_| Error::External("writer thread panicked".into()))??;
        if !output.status.success() {
            return Err(Error::External(format!(
                "{} exited with {}: {}",
                self.program,
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let response: Response = serde_json::from_slice(&output.stdout)?;
        if response.status == LpStatus::Optimal && response.values.len() != model.num_vars() {
            return Err(Error::External(format!(
                "expected {} values, got {}",
                model.num_vars(),
                response.values.len()
            )));
        }
        let objective_value = if response.status == LpStatus::Optimal {
            model.objective_value(&response.values)
        } else {
            f64::NAN
        };
        Ok(LpSolution {
            status: response.status,
            objective_value,
            values: response.values,
            iterations: response.iterations,
        })
    }
}
