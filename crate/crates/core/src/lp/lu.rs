//! Sparse LU factorization of a simplex basis.
//!
//! Right-looking elimination. Column and row singletons are taken first
//! (transportation-like bases are almost triangular), the remaining nucleus
//! uses Markowitz pivoting with a row-relative threshold.

const NONE: usize = usize::MAX;
const PIVOT_THRESHOLD: f64 = 0.01;
const ABS_PIVOT_TOL: f64 = 1e-11;
const MARKOWITZ_CANDIDATES: usize = 4;

#[derive(Debug)]
pub(crate) struct Singular {
    /// Basis positions that received no pivot.
    pub positions: Vec<usize>,
    /// Rows that received no pivot.
    pub rows: Vec<usize>,
}

/// `B = L U` in pivot order. Step `k` pivots row `piv_row[k]` against basis
/// position `piv_col[k]`.
#[derive(Debug, Default)]
pub(crate) struct LuFactor {
    piv_row: Vec<usize>,
    piv_col: Vec<usize>,
    piv_val: Vec<f64>,
    l_start: Vec<usize>,
    l_row: Vec<usize>,
    l_val: Vec<f64>,
    u_start: Vec<usize>,
    u_col: Vec<usize>,
    u_val: Vec<f64>,
}

impl LuFactor {
    /// Factorizes an `m x m` matrix given column-wise: column `j` is
    /// `rows[start[j]..start[j+1]]` / `vals[..]`.
    pub fn factorize(
        m: usize,
        start: &[usize],
        rows_in: &[usize],
        vals_in: &[f64],
    ) -> Result<Self, Singular> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); m];
        for j in 0..m {
            for k in start[j]..start[j + 1] {
                let (i, v) = (rows_in[k], vals_in[k]);
                if v != 0.0 {
                    rows[i].push((j, v));
                    cols[j].push(i);
                }
            }
        }

        let mut row_done = vec![false; m];
        let mut col_done = vec![false; m];
        let mut col_singletons: Vec<usize> = (0..m).filter(|&j| cols[j].len() == 1).collect();
        let mut row_singletons: Vec<usize> = (0..m).filter(|&i| rows[i].len() == 1).collect();
        let mut active_cols: Vec<usize> = (0..m).collect();
        let mut mark = vec![NONE; m];

        let mut f = LuFactor {
            l_start: vec![0],
            u_start: vec![0],
            ..Default::default()
        };

        for _ in 0..m {
            let pivot = Self::next_singleton_col(&mut col_singletons, &cols, &col_done)
                .and_then(|c| {
                    let r = cols[c][0];
                    let v = find(&rows[r], c);
                    (v.abs() > ABS_PIVOT_TOL).then_some((r, c))
                })
                .or_else(|| {
                    Self::next_singleton_row(&mut row_singletons, &rows, &row_done).and_then(
                        |r| {
                            let (c, v) = rows[r][0];
                            (v.abs() > ABS_PIVOT_TOL).then_some((r, c))
                        },
                    )
                })
                .or_else(|| {
                    active_cols.retain(|&c| !col_done[c]);
                    Self::markowitz(&active_cols, &rows, &cols)
                });
            let Some((r, c)) = pivot else { break };

            let prow = std::mem::take(&mut rows[r]);
            for &(k, _) in &prow {
                let list = &mut cols[k];
                if let Some(p) = list.iter().position(|&i| i == r) {
                    list.swap_remove(p);
                }
            }
            let pval = find(&prow, c);
            let targets = std::mem::take(&mut cols[c]);
            for &i in &targets {
                let row = &mut rows[i];
                let p = row.iter().position(|&(k, _)| k == c).expect("pattern out of sync");
                let aic = row.swap_remove(p).1;
                let l = aic / pval;
                f.l_row.push(i);
                f.l_val.push(l);
                for (p, &(k, _)) in row.iter().enumerate() {
                    mark[k] = p;
                }
                for &(k, v) in &prow {
                    if k == c {
                        continue;
                    }
                    if mark[k] != NONE {
                        row[mark[k]].1 -= l * v;
                    } else {
                        row.push((k, -l * v));
                        cols[k].push(i);
                    }
                }
                for &(k, _) in row.iter() {
                    mark[k] = NONE;
                }
                if row.len() == 1 {
                    row_singletons.push(i);
                }
            }
            for &(k, v) in &prow {
                if k == c {
                    continue;
                }
                f.u_col.push(k);
                f.u_val.push(v);
                if cols[k].len() == 1 {
                    col_singletons.push(k);
                }
            }
            f.l_start.push(f.l_row.len());
            f.u_start.push(f.u_col.len());
            f.piv_row.push(r);
            f.piv_col.push(c);
            f.piv_val.push(pval);
            row_done[r] = true;
            col_done[c] = true;
        }

        if f.piv_row.len() < m {
            return Err(Singular {
                positions: (0..m).filter(|&j| !col_done[j]).collect(),
                rows: (0..m).filter(|&i| !row_done[i]).collect(),
            });
        }
        Ok(f)
    }

    fn next_singleton_col(
        stack: &mut Vec<usize>,
        cols: &[Vec<usize>],
        done: &[bool],
    ) -> Option<usize> {
        while let Some(c) = stack.pop() {
            if !done[c] && cols[c].len() == 1 {
                return Some(c);
            }
        }
        None
    }

    fn next_singleton_row(
        stack: &mut Vec<usize>,
        rows: &[Vec<(usize, f64)>],
        done: &[bool],
    ) -> Option<usize> {
        while let Some(r) = stack.pop() {
            if !done[r] && rows[r].len() == 1 {
                return Some(r);
            }
        }
        None
    }

    fn markowitz(
        active: &[usize],
        rows: &[Vec<(usize, f64)>],
        cols: &[Vec<usize>],
    ) -> Option<(usize, usize)> {
        let mut order: Vec<usize> = active.iter().copied().filter(|&c| !cols[c].is_empty()).collect();
        order.sort_by_key(|&c| (cols[c].len(), c));
        let mut best: Option<(usize, usize, usize)> = None;
        for &c in order.iter().take(MARKOWITZ_CANDIDATES.max(1)) {
            let cc = cols[c].len() - 1;
            for &i in &cols[c] {
                let row = &rows[i];
                let rmax = row.iter().fold(0.0f64, |a, &(_, v)| a.max(v.abs()));
                let v = find(row, c).abs();
                if v <= ABS_PIVOT_TOL || v < PIVOT_THRESHOLD * rmax {
                    continue;
                }
                let cost = (row.len() - 1) * cc;
                if best.is_none_or(|(b, _, _)| cost < b) {
                    best = Some((cost, i, c));
                }
            }
        }
        if best.is_none() {
            // Threshold rejected every candidate in the cheapest columns;
            // fall back to the largest entry anywhere.
            let mut top: Option<(f64, usize, usize)> = None;
            for &c in &order {
                for &i in &cols[c] {
                    let v = find(&rows[i], c).abs();
                    if v > ABS_PIVOT_TOL && top.is_none_or(|(b, _, _)| v > b) {
                        top = Some((v, i, c));
                    }
                }
            }
            return top.map(|(_, i, c)| (i, c));
        }
        best.map(|(_, i, c)| (i, c))
    }

    /// Solves `B x = rhs`. `rhs` is indexed by row and is destroyed; `out` is
    /// indexed by basis position.
    pub fn solve(&self, rhs: &mut [f64], out: &mut [f64]) {
        for k in 0..self.piv_row.len() {
            let br = rhs[self.piv_row[k]];
            if br != 0.0 {
                for p in self.l_start[k]..self.l_start[k + 1] {
                    rhs[self.l_row[p]] -= self.l_val[p] * br;
                }
            }
        }
        for k in (0..self.piv_row.len()).rev() {
            let mut v = rhs[self.piv_row[k]];
            for p in self.u_start[k]..self.u_start[k + 1] {
                v -= self.u_val[p] * out[self.u_col[p]];
            }
            out[self.piv_col[k]] = v / self.piv_val[k];
        }
    }

    /// Solves `B^T y = rhs`. `rhs` is indexed by basis position and is
    /// destroyed; `out` is indexed by row.
    pub fn solve_transpose(&self, rhs: &mut [f64], out: &mut [f64]) {
        for k in 0..self.piv_row.len() {
            let w = rhs[self.piv_col[k]] / self.piv_val[k];
            out[self.piv_row[k]] = w;
            if w != 0.0 {
                for p in self.u_start[k]..self.u_start[k + 1] {
                    rhs[self.u_col[p]] -= self.u_val[p] * w;
                }
            }
        }
        for k in (0..self.piv_row.len()).rev() {
            let r = self.piv_row[k];
            let mut v = out[r];
            for p in self.l_start[k]..self.l_start[k + 1] {
                v -= self.l_val[p] * out[self.l_row[p]];
            }
            out[r] = v;
        }
    }
}

fn find(row: &[(usize, f64)], col: usize) -> f64 {
    row.iter().find(|&&(k, _)| k == col).map_or(0.0, |&(_, v)| v)
}
