//! Bounded-variable primal revised simplex.
//!
//! Every row `i` gets a logical column `s_i` so that all rows become
//! equalities `A x + s = b`; the relation is carried by the bounds of `s_i`.
//! The starting basis is diagonal: logicals where the row residual fits the
//! logical's bounds, column singletons where one can absorb the residual,
//! and artificials elsewhere. Phase 1 drives artificials to zero, phase 2
//! optimizes. The basis inverse is an LU factorization followed by a file
//! of product-form eta updates, refactorized periodically.

use log::debug;

use super::lu::LuFactor;
use super::{LpBackend, LpModel, LpSolution, LpStatus, Relation};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub max_iterations: usize,
    /// Eta updates between refactorizations.
    pub refactor_interval: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-7,
            optimality_tol: 1e-8,
            max_iterations: 5_000_000,
            refactor_interval: 100,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct BundledSimplex {
    pub options: SolverOptions,
}

impl BundledSimplex {
    pub fn new(options: SolverOptions) -> Self {
        Self { options }
    }
}

impl LpBackend for BundledSimplex {
    fn name(&self) -> &str {
        "bundled"
    }

    fn solve(&self, model: &LpModel) -> Result<LpSolution> {
        model.validate()?;
        Simplex::new(model, self.options).run(model)
    }
}

const NOT_BASIC: usize = usize::MAX;
const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_STREAK: usize = 60;

struct Eta {
    pos: usize,
    pivot: f64,
    idx: Vec<usize>,
    val: Vec<f64>,
}

enum Step {
    Optimal,
    Unbounded,
}

struct Simplex {
    opts: SolverOptions,
    m: usize,
    n_struct: usize,
    /// First artificial column; columns `n_struct..art_start` are logicals.
    art_start: usize,
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    b: Vec<f64>,
    x: Vec<f64>,
    basis_pos: Vec<usize>,
    basic: Vec<usize>,
    lu: LuFactor,
    etas: Vec<Eta>,
    iterations: usize,
    // scratch
    work_row: Vec<f64>,
    work_pos: Vec<f64>,
}

impl Simplex {
    fn new(model: &LpModel, opts: SolverOptions) -> Self {
        let m = model.constraints.len();
        let n_struct = model.num_vars();

        let mut counts = vec![0usize; n_struct];
        for c in &model.constraints {
            for &(v, _) in &c.terms {
                counts[v.0] += 1;
            }
        }
        let mut col_start = Vec::with_capacity(n_struct + 2 * m + 1);
        col_start.push(0);
        for j in 0..n_struct {
            col_start.push(col_start[j] + counts[j]);
        }
        let nnz = col_start[n_struct];
        let mut col_row = vec![0; nnz];
        let mut col_val = vec![0.0; nnz];
        let mut fill = col_start[..n_struct].to_vec();
        for (i, c) in model.constraints.iter().enumerate() {
            for &(v, a) in &c.terms {
                col_row[fill[v.0]] = i;
                col_val[fill[v.0]] = a;
                fill[v.0] += 1;
            }
        }
        // Merge duplicate entries of a variable within one row.
        let mut dedup_start = vec![0];
        let mut rows_out = Vec::with_capacity(nnz);
        let mut vals_out = Vec::with_capacity(nnz);
        for j in 0..n_struct {
            let mut entries: Vec<(usize, f64)> = (col_start[j]..col_start[j + 1])
                .map(|k| (col_row[k], col_val[k]))
                .collect();
            entries.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < entries.len() {
                let row = entries[k].0;
                let mut v = 0.0;
                while k < entries.len() && entries[k].0 == row {
                    v += entries[k].1;
                    k += 1;
                }
                if v != 0.0 {
                    rows_out.push(row);
                    vals_out.push(v);
                }
            }
            dedup_start.push(rows_out.len());
        }
        let (mut col_start, mut col_row, mut col_val) = (dedup_start, rows_out, vals_out);

        let mut cost = model.objective.clone();
        let mut lower: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
        let mut upper: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
        let b: Vec<f64> = model.constraints.iter().map(|c| c.rhs).collect();
        for (i, c) in model.constraints.iter().enumerate() {
            col_row.push(i);
            col_val.push(1.0);
            col_start.push(col_row.len());
            cost.push(0.0);
            let (lo, hi) = match c.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lower.push(lo);
            upper.push(hi);
        }

        let n = n_struct + m;
        let x: Vec<f64> = (0..n).map(|j| initial_value(lower[j], upper[j])).collect();

        Simplex {
            opts,
            m,
            n_struct,
            art_start: n,
            col_start,
            col_row,
            col_val,
            cost,
            lower,
            upper,
            b,
            x,
            basis_pos: vec![NOT_BASIC; n],
            basic: Vec::with_capacity(m),
            lu: LuFactor::default(),
            etas: Vec::new(),
            iterations: 0,
            work_row: vec![0.0; m],
            work_pos: vec![0.0; m],
        }
    }

    fn n(&self) -> usize {
        self.cost.len()
    }

    fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let r = self.col_start[j]..self.col_start[j + 1];
        (&self.col_row[r.clone()], &self.col_val[r])
    }

    /// Builds the diagonal starting basis described in the module docs.
    fn crash(&mut self) {
        let m = self.m;
        let mut residual = self.b.clone();
        for j in 0..self.n_struct {
            let xj = self.x[j];
            if xj != 0.0 {
                let (rows, vals) = self.column(j);
                for (&i, &a) in rows.iter().zip(vals) {
                    residual[i] -= a * xj;
                }
            }
        }
        let mut singletons: Vec<Vec<usize>> = vec![Vec::new(); m];
        for j in 0..self.n_struct {
            let (rows, _) = self.column(j);
            if rows.len() == 1 && self.lower[j] < self.upper[j] {
                singletons[rows[0]].push(j);
            }
        }

        let tol = self.opts.feasibility_tol;
        let mut basic = vec![NOT_BASIC; m];
        for i in 0..m {
            let logical = self.n_struct + i;
            let r = residual[i];
            if r >= self.lower[logical] - tol && r <= self.upper[logical] + tol {
                basic[i] = logical;
                self.x[logical] = r;
                continue;
            }
            self.x[logical] = 0.0;
            let mut chosen = None;
            for &j in &singletons[i] {
                let a = self.column(j).1[0];
                let v = self.x[j] + r / a;
                if v >= self.lower[j] - tol && v <= self.upper[j] + tol {
                    chosen = Some((j, v));
                    break;
                }
            }
            if let Some((j, v)) = chosen {
                basic[i] = j;
                self.x[j] = v;
                continue;
            }
            let sign = if r >= 0.0 { 1.0 } else { -1.0 };
            self.col_row.push(i);
            self.col_val.push(sign);
            self.col_start.push(self.col_row.len());
            self.cost.push(0.0);
            self.lower.push(0.0);
            self.upper.push(f64::INFINITY);
            self.x.push(r.abs());
            self.basis_pos.push(NOT_BASIC);
            basic[i] = self.cost.len() - 1;
        }
        for (p, &j) in basic.iter().enumerate() {
            self.basis_pos[j] = p;
        }
        self.basic = basic;
    }

    fn refactor(&mut self) -> Result<()> {
        loop {
            let mut start = Vec::with_capacity(self.m + 1);
            let mut rows = Vec::new();
            let mut vals = Vec::new();
            start.push(0);
            for &j in &self.basic {
                let (r, v) = self.column(j);
                rows.extend_from_slice(r);
                vals.extend_from_slice(v);
                start.push(rows.len());
            }
            match LuFactor::factorize(self.m, &start, &rows, &vals) {
                Ok(lu) => {
                    self.lu = lu;
                    self.etas.clear();
                    self.recompute_basics();
                    return Ok(());
                }
                Err(singular) => {
                    debug!("singular basis, repairing {} position(s)", singular.positions.len());
                    if singular.positions.is_empty() {
                        return Err(Error::Numerical("singular basis could not be repaired".into()));
                    }
                    for (&p, &row) in singular.positions.iter().zip(&singular.rows) {
                        let out = self.basic[p];
                        self.basis_pos[out] = NOT_BASIC;
                        self.x[out] = nearest_bound(self.x[out], self.lower[out], self.upper[out]);
                        let logical = self.n_struct + row;
                        if self.basis_pos[logical] != NOT_BASIC {
                            return Err(Error::Numerical("singular basis could not be repaired".into()));
                        }
                        self.basic[p] = logical;
                        self.basis_pos[logical] = p;
                    }
                }
            }
        }
    }

    /// `x_B = B^{-1} (b - N x_N)`.
    fn recompute_basics(&mut self) {
        let mut rhs = self.b.clone();
        for j in 0..self.n() {
            if self.basis_pos[j] == NOT_BASIC && self.x[j] != 0.0 {
                let xj = self.x[j];
                let (rows, vals) = self.column(j);
                for (&i, &a) in rows.iter().zip(vals) {
                    rhs[i] -= a * xj;
                }
            }
        }
        let mut out = vec![0.0; self.m];
        self.ftran_rhs(&mut rhs, &mut out);
        for (p, &j) in self.basic.iter().enumerate() {
            self.x[j] = out[p];
        }
    }

    fn ftran_rhs(&self, rhs: &mut [f64], out: &mut [f64]) {
        self.lu.solve(rhs, out);
        for eta in &self.etas {
            let xp = out[eta.pos] / eta.pivot;
            out[eta.pos] = xp;
            if xp != 0.0 {
                for (&i, &a) in eta.idx.iter().zip(&eta.val) {
                    out[i] -= a * xp;
                }
            }
        }
    }

    /// Column `j` of `B^{-1} A`, indexed by basis position.
    fn ftran(&mut self, j: usize) -> Vec<f64> {
        let mut rhs = std::mem::take(&mut self.work_row);
        rhs.iter_mut().for_each(|v| *v = 0.0);
        let (rows, vals) = self.column(j);
        for (&i, &a) in rows.iter().zip(vals) {
            rhs[i] = a;
        }
        let mut out = vec![0.0; self.m];
        self.ftran_rhs(&mut rhs, &mut out);
        self.work_row = rhs;
        out
    }

    /// Simplex multipliers `y = B^{-T} c_B`, indexed by row.
    fn btran(&mut self, costs: &[f64]) -> Vec<f64> {
        let mut rhs = std::mem::take(&mut self.work_pos);
        for (p, &j) in self.basic.iter().enumerate() {
            rhs[p] = costs[j];
        }
        for eta in self.etas.iter().rev() {
            let mut v = rhs[eta.pos];
            for (&i, &a) in eta.idx.iter().zip(&eta.val) {
                v -= a * rhs[i];
            }
            rhs[eta.pos] = v / eta.pivot;
        }
        let mut y = vec![0.0; self.m];
        self.lu.solve_transpose(&mut rhs, &mut y);
        self.work_pos = rhs;
        y
    }

    fn run(mut self, model: &LpModel) -> Result<LpSolution> {
        self.crash();
        self.refactor()?;

        if self.n() > self.art_start {
            let mut phase1 = vec![0.0; self.n()];
            phase1[self.art_start..].iter_mut().for_each(|c| *c = 1.0);
            match self.iterate(&phase1, false)? {
                Step::Optimal => {}
                Step::Unbounded => {
                    return Err(Error::Numerical("phase 1 reported unbounded".into()));
                }
            }
            self.refactor()?;
            let infeasible = (self.art_start..self.n()).any(|j| {
                let row = self.col_row[self.col_start[j]];
                self.x[j] > self.opts.feasibility_tol * (1.0 + self.b[row].abs())
            });
            if infeasible {
                return Ok(self.finish(model, LpStatus::Infeasible));
            }
            for j in self.art_start..self.n() {
                self.upper[j] = 0.0;
                if self.basis_pos[j] == NOT_BASIC {
                    self.x[j] = 0.0;
                }
            }
            self.recompute_basics();
        }

        let costs = self.cost.clone();
        match self.iterate(&costs, true)? {
            Step::Optimal => {}
            Step::Unbounded => return Ok(self.finish(model, LpStatus::Unbounded)),
        }
        self.refactor()?;
        let worst = self.max_bound_violation();
        if worst > 1e-6 {
            return Err(Error::Numerical(format!(
                "basic solution violates bounds by {worst:e} after refactorization"
            )));
        }
        Ok(self.finish(model, LpStatus::Optimal))
    }

    fn max_bound_violation(&self) -> f64 {
        self.basic
            .iter()
            .map(|&j| (self.lower[j] - self.x[j]).max(self.x[j] - self.upper[j]).max(0.0))
            .fold(0.0, f64::max)
    }

    fn finish(self, model: &LpModel, status: LpStatus) -> LpSolution {
        let (values, objective_value) = if status == LpStatus::Optimal {
            let values: Vec<f64> = self.x[..self.n_struct].to_vec();
            let obj = model.objective_value(&values);
            (values, obj)
        } else {
            (Vec::new(), f64::NAN)
        };
        debug!(
            "simplex {status} after {} iterations ({} rows, {} columns)",
            self.iterations, self.m, self.n_struct
        );
        LpSolution {
            status,
            objective_value,
            values,
            iterations: self.iterations,
        }
    }

    fn iterate(&mut self, costs: &[f64], phase2: bool) -> Result<Step> {
        let ftol = self.opts.feasibility_tol;
        let otol = self.opts.optimality_tol;
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(Error::Numerical(format!(
                    "iteration limit {} reached",
                    self.opts.max_iterations
                )));
            }
            if self.etas.len() >= self.opts.refactor_interval {
                self.refactor()?;
            }

            let y = self.btran(costs);
            let Some((q, d)) = self.price(costs, &y, phase2, bland, otol) else {
                return Ok(Step::Optimal);
            };
            let alpha = self.ftran(q);
            // +1 when the entering variable increases.
            let dir = if d < 0.0 { 1.0 } else { -1.0 };

            // Harris pass 1: largest step with bounds relaxed by ftol.
            let mut relaxed = f64::INFINITY;
            for (p, &a) in alpha.iter().enumerate() {
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let j = self.basic[p];
                let rate = dir * a;
                let t = if rate > 0.0 {
                    (self.x[j] - self.lower[j] + ftol) / rate
                } else {
                    (self.upper[j] + ftol - self.x[j]) / -rate
                };
                relaxed = relaxed.min(t);
            }
            // Pass 2: among ratios within the relaxed step, the largest pivot.
            let mut leave: Option<(usize, f64, f64)> = None;
            for (p, &a) in alpha.iter().enumerate() {
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let j = self.basic[p];
                let rate = dir * a;
                let t = if rate > 0.0 {
                    (self.x[j] - self.lower[j]) / rate
                } else {
                    (self.upper[j] - self.x[j]) / -rate
                };
                if !t.is_finite() || t > relaxed {
                    continue;
                }
                let better = match leave {
                    None => true,
                    Some((bp, ba, _)) => {
                        if bland {
                            self.basic[p] < self.basic[bp]
                        } else {
                            a.abs() > ba
                        }
                    }
                };
                if better {
                    leave = Some((p, a.abs(), t.max(0.0)));
                }
            }

            let flip = self.upper[q] - self.lower[q];
            let (theta, leaving) = match leave {
                Some((p, _, t)) if flip > relaxed || flip > t => (t, Some(p)),
                _ if flip.is_finite() => (flip, None),
                _ => {
                    if phase2 {
                        return Ok(Step::Unbounded);
                    }
                    return Err(Error::Numerical("unbounded ray in phase 1".into()));
                }
            };

            if theta > 0.0 {
                for (p, &a) in alpha.iter().enumerate() {
                    if a != 0.0 {
                        let j = self.basic[p];
                        self.x[j] -= dir * theta * a;
                    }
                }
            }
            self.x[q] += dir * theta;
            self.iterations += 1;

            if theta <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_STREAK {
                    bland = true;
                }
            } else {
                degenerate = 0;
                bland = false;
            }

            match leaving {
                None => {
                    self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                }
                Some(p) => {
                    let out = self.basic[p];
                    let rate = dir * alpha[p];
                    self.x[out] = if rate > 0.0 { self.lower[out] } else { self.upper[out] };
                    self.basis_pos[out] = NOT_BASIC;
                    self.basis_pos[q] = p;
                    self.basic[p] = q;
                    let mut idx = Vec::new();
                    let mut val = Vec::new();
                    for (i, &a) in alpha.iter().enumerate() {
                        if i != p && a.abs() > 1e-14 {
                            idx.push(i);
                            val.push(a);
                        }
                    }
                    self.etas.push(Eta {
                        pos: p,
                        pivot: alpha[p],
                        idx,
                        val,
                    });
                }
            }
        }
    }

    /// Dantzig pricing, or lowest-index pricing while stalling.
    fn price(
        &self,
        costs: &[f64],
        y: &[f64],
        phase2: bool,
        bland: bool,
        otol: f64,
    ) -> Option<(usize, f64)> {
        let limit = if phase2 { self.art_start } else { self.n() };
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..limit {
            if self.basis_pos[j] != NOT_BASIC || self.lower[j] == self.upper[j] {
                continue;
            }
            let (rows, vals) = self.column(j);
            let mut d = costs[j];
            for (&i, &a) in rows.iter().zip(vals) {
                d -= y[i] * a;
            }
            let tol = otol * (1.0 + costs[j].abs());
            let xj = self.x[j];
            let eligible = (d < -tol && xj < self.upper[j]) || (d > tol && xj > self.lower[j]);
            if !eligible {
                continue;
            }
            if bland {
                return Some((j, d));
            }
            if d.abs() > best_score {
                best_score = d.abs();
                best = Some((j, d));
            }
        }
        best
    }
}

fn initial_value(lower: f64, upper: f64) -> f64 {
    if lower.is_finite() {
        lower
    } else if upper.is_finite() {
        upper
    } else {
        0.0
    }
}

fn nearest_bound(x: f64, lower: f64, upper: f64) -> f64 {
    match (lower.is_finite(), upper.is_finite()) {
        (true, true) => {
            if (x - lower).abs() <= (upper - x).abs() {
                lower
            } else {
                upper
            }
        }
        (true, false) => lower,
        (false, true) => upper,
        (false, false) => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve, VarId};

    #[test]
    fn single_lower_bound_row() {
        let mut m = LpModel::new();
        let x = m.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        m.set_cost(x, 1.0);
        m.add_constraint("c", vec![(x, 1.0)], Relation::Ge, 3.0);
        let s = solve(&m).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value(x) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn maximize_by_negation() {
        let mut m = LpModel::new();
        let x = m.add_var("x", 0.0, f64::INFINITY);
        m.set_cost(x, -1.0);
        m.add_constraint("c", vec![(x, 1.0)], Relation::Le, 7.0);
        let s = solve(&m).unwrap();
        assert!((s.objective_value + 7.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded_are_statuses() {
        let mut m = LpModel::new();
        let x = m.add_var("x", 0.0, 1.0);
        m.add_constraint("c", vec![(x, 1.0)], Relation::Ge, 2.0);
        assert_eq!(solve(&m).unwrap().status, LpStatus::Infeasible);

        let mut m = LpModel::new();
        let x = m.add_var("x", 0.0, f64::INFINITY);
        let y = m.add_var("y", 0.0, f64::INFINITY);
        m.set_cost(x, -1.0);
        m.add_constraint("c", vec![(x, 1.0), (y, -1.0)], Relation::Le, 1.0);
        assert_eq!(solve(&m).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variable_and_equalities() {
        // min x + 2y, x + y = 4, x - y = 2 (x, y free): x = 3, y = 1.
        let mut m = LpModel::new();
        let x = m.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        let y = m.add_var("y", f64::NEG_INFINITY, f64::INFINITY);
        m.set_cost(x, 1.0);
        m.set_cost(y, 2.0);
        m.add_constraint("a", vec![(x, 1.0), (y, 1.0)], Relation::Eq, 4.0);
        m.add_constraint("b", vec![(x, 1.0), (y, -1.0)], Relation::Eq, 2.0);
        let s = solve(&m).unwrap();
        assert!((s.value(x) - 3.0).abs() < 1e-9 && (s.value(y) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn duplicate_terms_are_merged() {
        let mut m = LpModel::new();
        let x = m.add_var("x", 0.0, 10.0);
        m.set_cost(x, -1.0);
        m.add_constraint("c", vec![(x, 1.0), (x, 1.0)], Relation::Le, 6.0);
        let s = solve(&m).unwrap();
        assert!((s.value(x) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_assignment() {
        // 4x4 assignment problem: highly degenerate, optimum is a permutation.
        let cost = [
            [4.0, 1.0, 3.0, 2.0],
            [2.0, 0.0, 5.0, 3.0],
            [3.0, 2.0, 2.0, 4.0],
            [1.0, 3.0, 4.0, 2.0],
        ];
        let mut m = LpModel::new();
        let mut v = vec![vec![VarId(0); 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                v[i][j] = m.add_var(format!("x{i}{j}"), 0.0, f64::INFINITY);
                m.set_cost(v[i][j], cost[i][j]);
            }
        }
        for i in 0..4 {
            m.add_constraint(format!("r{i}"), (0..4).map(|j| (v[i][j], 1.0)).collect(), Relation::Eq, 1.0);
            m.add_constraint(format!("c{i}"), (0..4).map(|j| (v[j][i], 1.0)).collect(), Relation::Eq, 1.0);
        }
        let s = solve(&m).unwrap();
        // Brute force over the 24 permutations.
        let mut best = f64::INFINITY;
        let mut perm = [0usize, 1, 2, 3];
        permute(&mut perm, 0, &mut |p| {
            best = best.min((0..4).map(|i| cost[i][p[i]]).sum());
        });
        assert!((s.objective_value - best).abs() < 1e-9);
    }

    fn permute(p: &mut [usize; 4], k: usize, f: &mut dyn FnMut(&[usize; 4])) {
        if k == p.len() {
            f(p);
            return;
        }
        for i in k..p.len() {
            p.swap(k, i);
            permute(p, k + 1, f);
            p.swap(k, i);
        }
    }
}
