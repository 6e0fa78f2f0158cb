//! Dense two-phase primal simplex for the small LPs that back every
//! polytope query.
//!
//! Problems have the form `max/min c·y  s.t.  A y ≤ b` with `y` free. Free
//! variables are split as `y = y⁺ − y⁻`, each row gets a slack, and rows with
//! a negative right-hand side get an artificial variable for phase one.
//! Entering and leaving variables follow Bland's rule, so the method cannot
//! cycle on the heavily degenerate vertices that predecessor sets produce.

// Tableau updates index several rows and columns at once; explicit indices
// read closer to the pivot formulas than iterator chains.
#![allow(clippy::needless_range_loop)]

use serde::{Deserialize, Serialize};

use super::{GeometryError, Polytope};

/// Tolerance on the phase-one objective below which a problem is feasible.
pub const FEASIBILITY_TOL: f64 = 1e-9;

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 50_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LpResult {
    pub status: LpStatus,
    /// Objective value at `argument`; `±inf` when unbounded, NaN when infeasible.
    pub optimum: f64,
    /// Optimal point; empty unless `status` is optimal.
    pub argument: Vec<f64>,
}

impl LpResult {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Optimizes `objective · y` over the polytope `p`.
pub fn lp_solve(objective: &[f64], p: &Polytope, sense: Sense) -> Result<LpResult, GeometryError> {
    if objective.len() != p.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: p.dim(),
            found: objective.len(),
        });
    }
    let normals: Vec<&[f64]> = p.halfspaces().iter().map(|h| h.normal.as_slice()).collect();
    let offsets: Vec<f64> = p.halfspaces().iter().map(|h| h.offset).collect();
    solve_rows(objective, &normals, &offsets, sense)
}

/// Optimizes over `{ y : normals[i]·y ≤ offsets[i] }` given as raw rows.
pub fn solve_rows(
    objective: &[f64],
    normals: &[&[f64]],
    offsets: &[f64],
    sense: Sense,
) -> Result<LpResult, GeometryError> {
    let dim = objective.len();
    let sign = match sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    let c: Vec<f64> = objective.iter().map(|v| sign * v).collect();
    let mut res = Tableau::new(&c, normals, offsets)?.run(dim)?;
    if res.status == LpStatus::Optimal {
        res.optimum *= sign;
    } else if res.status == LpStatus::Unbounded {
        res.optimum = sign * f64::INFINITY;
    }
    Ok(res)
}

struct Tableau {
    rows: usize,
    cols: usize,
    /// Row-major `rows × (cols + 1)`; the last column is the right-hand side.
    data: Vec<f64>,
    basis: Vec<usize>,
    n_struct: usize,
    first_artificial: usize,
    /// Maximization objective over the structural columns.
    cost: Vec<f64>,
}

impl Tableau {
    fn new(c: &[f64], normals: &[&[f64]], offsets: &[f64]) -> Result<Self, GeometryError> {
        let dim = c.len();
        let m = normals.len();
        if offsets.len() != m {
            return Err(GeometryError::DimensionMismatch {
                expected: m,
                found: offsets.len(),
            });
        }
        for n in normals {
            if n.len() != dim {
                return Err(GeometryError::DimensionMismatch {
                    expected: dim,
                    found: n.len(),
                });
            }
        }
        if offsets
            .iter()
            .chain(normals.iter().flat_map(|n| n.iter()))
            .any(|v| !v.is_finite())
        {
            return Err(GeometryError::Numerical(
                "non-finite constraint data".into(),
            ));
        }
        let n_struct = 2 * dim;
        let n_art = offsets.iter().filter(|b| **b < 0.0).count();
        let first_artificial = n_struct + m;
        let cols = first_artificial + n_art;
        let width = cols + 1;
        let mut data = vec![0.0; m * width];
        let mut basis = vec![0; m];
        let mut next_art = first_artificial;
        for i in 0..m {
            let flip = if offsets[i] < 0.0 { -1.0 } else { 1.0 };
            let row = &mut data[i * width..(i + 1) * width];
            for k in 0..dim {
                row[k] = flip * normals[i][k];
                row[dim + k] = -flip * normals[i][k];
            }
            row[n_struct + i] = flip;
            row[cols] = flip * offsets[i];
            if flip < 0.0 {
                row[next_art] = 1.0;
                basis[i] = next_art;
                next_art += 1;
            } else {
                basis[i] = n_struct + i;
            }
        }
        let mut cost = vec![0.0; cols];
        for k in 0..dim {
            cost[k] = c[k];
            cost[dim + k] = -c[k];
        }
        Ok(Self {
            rows: m,
            cols,
            data,
            basis,
            n_struct,
            first_artificial,
            cost,
        })
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, r: usize, s: usize, obj: &mut [f64]) {
        let width = self.cols + 1;
        let p = self.data[r * width + s];
        for j in 0..width {
            self.data[r * width + j] /= p;
        }
        let pivot_row: Vec<f64> = self.data[r * width..(r + 1) * width].to_vec();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.data[i * width + s];
            if f != 0.0 {
                for j in 0..width {
                    self.data[i * width + j] -= f * pivot_row[j];
                }
                self.data[i * width + s] = 0.0;
            }
        }
        let f = obj[s];
        if f != 0.0 {
            for j in 0..width {
                obj[j] -= f * pivot_row[j];
            }
            obj[s] = 0.0;
        }
        self.basis[r] = s;
    }

    /// Minimizes the objective whose reduced-cost row is `obj` (last entry is
    /// minus the current value). Returns `false` if unbounded.
    fn optimize(&mut self, obj: &mut [f64], allowed: usize) -> Result<bool, GeometryError> {
        for _ in 0..MAX_PIVOTS {
            let Some(s) = (0..allowed).find(|&j| obj[j] < -COST_TOL) else {
                return Ok(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, s);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12
                                || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, s, obj),
            }
        }
        Err(GeometryError::Numerical(format!(
            "simplex exceeded {MAX_PIVOTS} pivots"
        )))
    }

    fn run(mut self, dim: usize) -> Result<LpResult, GeometryError> {
        let width = self.cols + 1;
        if self.first_artificial < self.cols {
            let mut phase1 = vec![0.0; width];
            for j in self.first_artificial..self.cols {
                phase1[j] = 1.0;
            }
            for i in 0..self.rows {
                if self.basis[i] >= self.first_artificial {
                    for j in 0..width {
                        phase1[j] -= self.at(i, j);
                    }
                }
            }
            self.optimize(&mut phase1, self.cols)?;
            if -phase1[self.cols] > FEASIBILITY_TOL {
                return Ok(LpResult {
                    status: LpStatus::Infeasible,
                    optimum: f64::NAN,
                    argument: Vec::new(),
                });
            }
            // Drive zero-level artificials out of the basis where possible.
            for i in 0..self.rows {
                if self.basis[i] >= self.first_artificial {
                    if let Some(s) =
                        (0..self.first_artificial).find(|&j| self.at(i, j).abs() > 1e-9)
                    {
                        self.pivot(i, s, &mut phase1);
                    }
                }
            }
        }

        // Phase two minimizes -cost.
        let mut obj = vec![0.0; width];
        for j in 0..self.cols {
            obj[j] = -self.cost[j];
        }
        for i in 0..self.rows {
            let cb = -self.cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..width {
                    obj[j] -= cb * self.at(i, j);
                }
            }
        }
        if !self.optimize(&mut obj, self.first_artificial)? {
            return Ok(LpResult {
                status: LpStatus::Unbounded,
                optimum: f64::INFINITY,
                argument: Vec::new(),
            });
        }
        let mut values = vec![0.0; self.n_struct];
        for i in 0..self.rows {
            if self.basis[i] < self.n_struct {
                values[self.basis[i]] = self.rhs(i);
            }
        }
        let argument: Vec<f64> = (0..dim).map(|k| values[k] - values[dim + k]).collect();
        let optimum = argument
            .iter()
            .zip(&self.cost[..dim])
            .map(|(y, c)| y * c)
            .sum();
        Ok(LpResult {
            status: LpStatus::Optimal,
            optimum,
            argument,
        })
    }
}
