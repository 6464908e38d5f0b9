//! Dense two-phase primal simplex for small linear programs.
//!
//! Solves `maximize c . x` subject to `A x = b`, `G x >= h`, `x >= 0`. The
//! planner's per-step programs have at most a few hundred variables, so a
//! dense tableau is simpler and fast enough; no sparse machinery, no
//! external solver. Phase one minimizes artificial variables to find a
//! feasible basis (detecting infeasibility and dropping redundant rows),
//! phase two optimizes the real objective. Pivoting uses Dantzig's rule and
//! falls back to Bland's rule after a while to rule out cycling.

use thiserror::Error;

/// Entries this close to constraint satisfaction count as feasible.
pub const FEAS_TOL: f64 = 1e-7;
/// Smallest magnitude accepted for a pivot element.
const PIVOT_TOL: f64 = 1e-10;

/// `maximize objective . x` over `x >= 0` with equality and `>=` rows.
#[derive(Clone, Debug, Default)]
pub struct Problem {
    pub objective: Vec<f64>,
    pub eq: Vec<(Vec<f64>, f64)>,
    pub ge: Vec<(Vec<f64>, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub value: f64,
    pub x: Vec<f64>,
}

#[derive(Copy, Clone, Debug, Error, PartialEq, Eq)]
pub enum LpError {
    #[error("constraints admit no solution")]
    Infeasible,
    #[error("objective is unbounded above")]
    Unbounded,
    #[error("a constraint row disagrees with the variable count")]
    BadShape,
    #[error("pivot budget exhausted; the tableau is numerically stuck")]
    NumericalFailure,
}

impl Problem {
    pub fn new(num_vars: usize) -> Self {
        Problem {
            objective: vec![0.0; num_vars],
            eq: Vec::new(),
            ge: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn push_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.eq.push((row, rhs));
    }

    pub fn push_ge(&mut self, row: Vec<f64>, rhs: f64) {
        self.ge.push((row, rhs));
    }

    pub fn solve(&self) -> Result<Solution, LpError> {
        let n = self.objective.len();
        if self
            .eq
            .iter()
            .chain(&self.ge)
            .any(|(row, _)| row.len() != n)
        {
            return Err(LpError::BadShape);
        }
        let m = self.eq.len() + self.ge.len();
        if m == 0 {
            if self.objective.iter().any(|&c| c > FEAS_TOL) {
                return Err(LpError::Unbounded);
            }
            return Ok(Solution {
                value: 0.0,
                x: vec![0.0; n],
            });
        }

        // Columns: structural | surplus (one per >= row) | artificial (one
        // per row). Rows are sign-normalized so every right-hand side is
        // nonnegative and the artificials form a feasible starting basis.
        let n_surplus = self.ge.len();
        let n_real = n + n_surplus;
        let n_tot = n_real + m;
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut rhs: Vec<f64> = Vec::with_capacity(m);
        for (a, b) in &self.eq {
            let mut row = vec![0.0; n_tot];
            row[..n].copy_from_slice(a);
            rows.push(row);
            rhs.push(*b);
        }
        for (k, (g, h)) in self.ge.iter().enumerate() {
            let mut row = vec![0.0; n_tot];
            row[..n].copy_from_slice(g);
            row[n + k] = -1.0;
            rows.push(row);
            rhs.push(*h);
        }
        let mut basis = Vec::with_capacity(m);
        for i in 0..m {
            if rhs[i] < 0.0 {
                for v in rows[i].iter_mut() {
                    *v = -*v;
                }
                rhs[i] = -rhs[i];
            }
            rows[i][n_real + i] = 1.0;
            basis.push(n_real + i);
        }

        let mut budget = 2_000 + 200 * (m + n_tot);
        let mut dantzig_left = 2 * (m + n_tot);

        // Phase one: maximize minus the sum of artificials.
        let mut obj = vec![0.0; n_tot];
        for j in 0..n_tot {
            obj[j] = -rows.iter().map(|r| r[j]).sum::<f64>();
        }
        for o in &mut obj[n_real..] {
            *o += 1.0;
        }
        let mut obj_value = -rhs.iter().sum::<f64>();
        run_simplex(
            &mut rows,
            &mut rhs,
            &mut basis,
            &mut obj,
            &mut obj_value,
            n_tot,
            &mut budget,
            &mut dantzig_left,
        )?;
        if obj_value < -FEAS_TOL {
            return Err(LpError::Infeasible);
        }

        // Pivot leftover artificials out of the basis; rows that offer no
        // pivot are redundant combinations of the others and can go.
        let mut keep = vec![true; rows.len()];
        for i in 0..rows.len() {
            if basis[i] < n_real {
                continue;
            }
            match (0..n_real).find(|&j| rows[i][j].abs() > PIVOT_TOL) {
                Some(j) => pivot(
                    &mut rows,
                    &mut rhs,
                    &mut basis,
                    &mut obj,
                    &mut obj_value,
                    i,
                    j,
                ),
                None => keep[i] = false,
            }
        }
        let mut it = keep.iter();
        rows.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        rhs.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        basis.retain(|_| *it.next().unwrap());
        for row in rows.iter_mut() {
            row.truncate(n_real);
        }

        // Phase two: price the real objective against the current basis.
        let cost = |j: usize| if j < n { self.objective[j] } else { 0.0 };
        let mut obj: Vec<f64> = (0..n_real)
            .map(|j| {
                rows.iter()
                    .zip(&basis)
                    .map(|(row, &b)| cost(b) * row[j])
                    .sum::<f64>()
                    - cost(j)
            })
            .collect();
        let mut obj_value = rhs
            .iter()
            .zip(&basis)
            .map(|(&v, &b)| cost(b) * v)
            .sum::<f64>();
        run_simplex(
            &mut rows,
            &mut rhs,
            &mut basis,
            &mut obj,
            &mut obj_value,
            n_real,
            &mut budget,
            &mut dantzig_left,
        )?;

        let mut x = vec![0.0; n];
        for (i, &b) in basis.iter().enumerate() {
            if b < n {
                x[b] = rhs[i].max(0.0);
            }
        }
        let value = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(Solution { value, x })
    }
}

/// Runs the simplex loop until the objective row has no negative entries
/// among the first `enterable` columns.
#[allow(clippy::too_many_arguments)]
fn run_simplex(
    rows: &mut [Vec<f64>],
    rhs: &mut [f64],
    basis: &mut [usize],
    obj: &mut [f64],
    obj_value: &mut f64,
    enterable: usize,
    budget: &mut usize,
    dantzig_left: &mut usize,
) -> Result<(), LpError> {
    loop {
        let entering = if *dantzig_left > 0 {
            *dantzig_left -= 1;
            (0..enterable)
                .filter(|&j| obj[j] < -FEAS_TOL)
                .min_by(|&a, &b| obj[a].partial_cmp(&obj[b]).unwrap())
        } else {
            (0..enterable).find(|&j| obj[j] < -FEAS_TOL)
        };
        let Some(j) = entering else {
            return Ok(());
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..rows.len() {
            let a = rows[i][j];
            if a > PIVOT_TOL {
                let ratio = rhs[i] / a;
                let better = match leave {
                    None => true,
                    // Break ratio ties toward the smallest basis index; with
                    // Bland's entering rule this guarantees termination.
                    Some((bi, br)) => {
                        ratio < br - 1e-12 || (ratio < br + 1e-12 && basis[i] < basis[bi])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((i, _)) = leave else {
            return Err(LpError::Unbounded);
        };
        if *budget == 0 {
            return Err(LpError::NumericalFailure);
        }
        *budget -= 1;
        pivot(rows, rhs, basis, obj, obj_value, i, j);
    }
}

/// Makes column `j` basic in row `i` by Gaussian elimination, updating the
/// objective row alongside.
fn pivot(
    rows: &mut [Vec<f64>],
    rhs: &mut [f64],
    basis: &mut [usize],
    obj: &mut [f64],
    obj_value: &mut f64,
    i: usize,
    j: usize,
) {
    let p = rows[i][j];
    for v in rows[i].iter_mut() {
        *v /= p;
    }
    rhs[i] /= p;
    let (pivot_row, pivot_rhs) = (rows[i].clone(), rhs[i]);
    for (k, row) in rows.iter_mut().enumerate() {
        if k == i || row[j] == 0.0 {
            continue;
        }
        let f = row[j];
        for (v, pv) in row.iter_mut().zip(&pivot_row) {
            *v -= f * pv;
        }
        row[j] = 0.0;
        rhs[k] -= f * pivot_rhs;
    }
    let f = obj[j];
    if f != 0.0 {
        for (v, pv) in obj.iter_mut().zip(&pivot_row) {
            *v -= f * pv;
        }
        obj[j] = 0.0;
        *obj_value -= f * pivot_rhs;
    }
    basis[i] = j;
}
