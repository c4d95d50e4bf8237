//! Solver-agnostic linear programs.
//!
//! [`LpModel`] is a plain minimization model with bounded continuous
//! variables and sparse rows. [`BundledSimplex`] solves it with a sparse
//! bounded-variable revised simplex; [`ExternalSolver`] hands it to an
//! out-of-process solver through a JSON exchange. Both implement
//! [`LpBackend`].

mod external;
mod lpfile;
mod lu;
mod simplex;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use external::ExternalSolver;
pub use lpfile::write_lp;
pub use simplex::{BundledSimplex, SolverOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">=")]
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Sparse affine expression `sum(coef * var) + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn add(&mut self, var: VarId, coef: f64) -> &mut Self {
        self.terms.push((var, coef));
        self
    }

    pub fn add_constant(&mut self, value: f64) -> &mut Self {
        self.constant += value;
        self
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(v, c)| c * values[v.0]).sum::<f64>()
    }
}

/// A minimization LP.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LpModel {
    pub variables: Vec<Variable>,
    /// Objective coefficient per variable.
    pub objective: Vec<f64>,
    pub objective_constant: f64,
    pub constraints: Vec<Constraint>,
}

impl LpModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
        });
        self.objective.push(0.0);
        VarId(self.variables.len() - 1)
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn set_cost(&mut self, var: VarId, coef: f64) {
        self.objective[var.0] = coef;
    }

    pub fn add_cost(&mut self, var: VarId, coef: f64) {
        self.objective[var.0] += coef;
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        self.constraints.push(Constraint {
            name: name.into(),
            terms,
            relation,
            rhs,
        });
        self.constraints.len() - 1
    }

    /// Adds `expr <rel> rhs`, folding the expression's constant into the rhs.
    pub fn add_expr_constraint(
        &mut self,
        name: impl Into<String>,
        expr: &LinExpr,
        relation: Relation,
        rhs: f64,
    ) -> usize {
        self.add_constraint(name, expr.terms.clone(), relation, rhs - expr.constant)
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective_constant
            + self
                .objective
                .iter()
                .zip(values)
                .map(|(c, x)| c * x)
                .sum::<f64>()
    }

    /// Largest violation of any bound or row by `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, x) in self.variables.iter().zip(values) {
            worst = worst.max(v.lower - x).max(x - v.upper);
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(v, a)| a * values[v.0]).sum();
            let viol = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.len() != self.variables.len() {
            return Err(Error::Model("objective length differs from variable count".into()));
        }
        for v in &self.variables {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(Error::Model(format!("variable {} has bounds [{}, {}]", v.name, v.lower, v.upper)));
            }
            if v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(Error::Model(format!("variable {} has an empty domain", v.name)));
            }
        }
        if let Some(i) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(Error::Model(format!("objective coefficient of {} is not finite", self.variables[i].name)));
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return Err(Error::Model(format!("constraint {} has non-finite rhs", c.name)));
            }
            for &(v, a) in &c.terms {
                if v.0 >= self.variables.len() {
                    return Err(Error::Model(format!("constraint {} references undeclared variable {}", c.name, v.0)));
                }
                if !a.is_finite() {
                    return Err(Error::Model(format!("constraint {} has a non-finite coefficient", c.name)));
                }
            }
        }
        Ok(())
    }
}

/// Adds `gap >= expr - target` and `gap >= target - expr`. With a positive
/// objective weight on `gap` (declared with lower bound 0), an optimum has
/// `gap == |expr - target|`.
pub fn add_abs_gap(model: &mut LpModel, expr: &LinExpr, target: f64, gap: VarId) {
    let name = model.variables[gap.0].name.clone();
    let mut above = vec![(gap, 1.0)];
    above.extend(expr.terms.iter().map(|&(v, c)| (v, -c)));
    model.add_constraint(format!("{name}_hi"), above, Relation::Ge, expr.constant - target);

    let mut below = vec![(gap, 1.0)];
    below.extend(expr.terms.iter().copied());
    model.add_constraint(format!("{name}_lo"), below, Relation::Ge, target - expr.constant);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective_value: f64,
    /// Indexed by [`VarId`]. Empty unless optimal.
    pub values: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn value(&self, var: VarId) -> f64 {
        self.values[var.0]
    }
}

pub trait LpBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Infeasible and unbounded models are reported through
    /// [`LpSolution::status`]; `Err` is reserved for malformed models and
    /// solver failures.
    fn solve(&self, model: &LpModel) -> Result<LpSolution>;
}

/// Solves with the bundled simplex at default tolerances.
pub fn solve(model: &LpModel) -> Result<LpSolution> {
    BundledSimplex::default().solve(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(model: &mut LpModel, name: &str, value: f64) -> VarId {
        model.add_var(name, value, value)
    }

    #[test]
    fn abs_gap_of_fixed_expression() {
        for (e, t, want) in [(0.3, 0.5, 0.2), (0.5, 0.5, 0.0), (0.9, 0.1, 0.8)] {
            let mut m = LpModel::new();
            let x = fixed(&mut m, "x", e);
            let g = m.add_var("g", 0.0, f64::INFINITY);
            m.set_cost(g, 1.0);
            let mut expr = LinExpr::new();
            expr.add(x, 1.0);
            add_abs_gap(&mut m, &expr, t, g);
            let s = solve(&m).unwrap();
            assert_eq!(s.status, LpStatus::Optimal);
            assert!((s.value(g) - want).abs() < 1e-9, "{e} {t}: {}", s.value(g));
        }
    }

    #[test]
    fn abs_gap_pulls_free_expression_to_target() {
        // min g - 0.1 x, g >= |x - 0.4|, x in [0, 1]. Moving x above 0.4
        // gains 0.1 per unit but costs 1 per unit of gap.
        let mut m = LpModel::new();
        let x = m.add_var("x", 0.0, 1.0);
        let g = m.add_var("g", 0.0, f64::INFINITY);
        m.set_cost(g, 1.0);
        m.set_cost(x, -0.1);
        let mut expr = LinExpr::new();
        expr.add(x, 1.0);
        add_abs_gap(&mut m, &expr, 0.4, g);
        let s = solve(&m).unwrap();
        assert!(s.value(g).abs() < 1e-9);
        assert!((s.value(x) - 0.4).abs() < 1e-9);
        assert!((s.objective_value + 0.04).abs() < 1e-12);
    }

    #[test]
    fn abs_gap_brute_force_grid() {
        // Same model, objective scanned on a grid of x with the gap at its
        // tightest value.
        let best = (0..=1000)
            .map(|i| i as f64 / 1000.0)
            .map(|x| ((x - 0.4f64).abs() - 0.1 * x, x))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        assert!((best.1 - 0.4).abs() < 1e-12);
        assert!((best.0 + 0.04).abs() < 1e-12);
    }

    #[test]
    fn validate_rejects_bad_models() {
        let mut m = LpModel::new();
        m.add_var("x", 1.0, 0.0);
        assert!(m.validate().is_err());

        let mut m = LpModel::new();
        m.add_var("x", 0.0, 1.0);
        m.add_constraint("c", vec![(VarId(3), 1.0)], Relation::Le, 1.0);
        assert!(m.validate().is_err());
        assert!(solve(&m).is_err());
    }
}
