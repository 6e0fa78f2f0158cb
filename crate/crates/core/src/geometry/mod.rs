//! Polytope algebra in H-representation.
//!
//! A [`Polytope`] is an ordered list of [`Halfspace`] rows `{ y : n·y ≤ o }`,
//! each with an optional provenance [`RowLabel`]. All set-level queries
//! (redundancy, containment, equality, Chebyshev center) go through the dense
//! simplex in [`lp`]. Values are immutable after construction; every
//! operation returns a new polytope.

pub mod lp;
mod project;
mod sample;
mod vertices;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lp::{lp_solve, LpResult, LpStatus, Sense};
pub use vertices::{hausdorff, vertices_to_csv};

/// Normals at or below this norm are treated as the zero vector.
pub const DEGENERATE_TOL: f64 = 1e-12;
/// Default membership slack.
pub const MEMBER_TOL: f64 = 1e-9;
/// A row is kept by redundancy removal only if it cuts deeper than this.
pub const REDUNDANCY_TOL: f64 = 1e-7;
/// Default tolerance for containment and set equality.
pub const SET_TOL: f64 = 1e-6;
/// Componentwise tolerance when matching two normalized rows.
pub const ROW_MATCH_TOL: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate halfspace normal (norm {0:e})")]
    DegenerateNormal(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("polytope is empty")]
    Empty,
    #[error("polytope is unbounded")]
    Unbounded,
    #[error("dimension {0} too high for vertex enumeration")]
    DimensionTooHigh(usize),
    #[error("invalid index set: {0}")]
    InvalidIndexSet(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// `{ y : normal·y ≤ offset }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn new(normal: Vec<f64>, offset: f64) -> Self {
        Self { normal, offset }
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    pub fn norm(&self) -> f64 {
        self.normal.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Rescales so the normal has unit Euclidean norm. The set is unchanged.
    pub fn normalize(&self) -> Result<Halfspace, GeometryError> {
        let n = self.norm();
        if n.is_nan() || n <= DEGENERATE_TOL {
            return Err(GeometryError::DegenerateNormal(n));
        }
        Ok(Halfspace {
            normal: self.normal.iter().map(|v| v / n).collect(),
            offset: self.offset / n,
        })
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        dot(&self.normal, y)
    }

    /// `normal·y − offset`; positive means violated.
    pub fn residual(&self, y: &[f64]) -> f64 {
        self.value(y) - self.offset
    }

    /// Largest componentwise deviation between two rows, normals and offsets
    /// compared together.
    pub fn max_abs_deviation(&self, other: &Halfspace) -> f64 {
        self.normal
            .iter()
            .zip(&other.normal)
            .map(|(a, b)| (a - b).abs())
            .fold((self.offset - other.offset).abs(), f64::max)
    }

    pub fn matches(&self, other: &Halfspace, tol: f64) -> bool {
        self.dim() == other.dim() && self.max_abs_deviation(other) <= tol
    }
}

/// Where a row came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RowLabel {
    Initial,
    Recursion { iteration: usize },
    Learned { iteration: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Polytope {
    dim: usize,
    rows: Vec<Halfspace>,
    labels: Vec<Option<RowLabel>>,
}

impl Polytope {
    /// Builds a polytope from raw rows; zero-length row lists describe all of
    /// `R^dim`.
    pub fn new(dim: usize, rows: Vec<Halfspace>) -> Result<Self, GeometryError> {
        if dim == 0 {
            return Err(GeometryError::DimensionMismatch {
                expected: 1,
                found: 0,
            });
        }
        for r in &rows {
            if r.dim() != dim {
                return Err(GeometryError::DimensionMismatch {
                    expected: dim,
                    found: r.dim(),
                });
            }
            if !r.offset.is_finite() || r.normal.iter().any(|v| !v.is_finite()) {
                return Err(GeometryError::Numerical("non-finite row".into()));
            }
        }
        let labels = vec![None; rows.len()];
        Ok(Self { dim, rows, labels })
    }

    pub fn with_labels(
        dim: usize,
        rows: Vec<Halfspace>,
        labels: Vec<Option<RowLabel>>,
    ) -> Result<Self, GeometryError> {
        if labels.len() != rows.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: rows.len(),
                found: labels.len(),
            });
        }
        let mut p = Self::new(dim, rows)?;
        p.labels = labels;
        Ok(p)
    }

    /// Axis-aligned box `lower ≤ y ≤ upper`, rows ordered `+e_0, −e_0, +e_1, …`.
    pub fn from_box(lower: &[f64], upper: &[f64]) -> Result<Self, GeometryError> {
        if lower.len() != upper.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        let d = lower.len();
        let mut rows = Vec::with_capacity(2 * d);
        for k in 0..d {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            rows.push(Halfspace::new(e.clone(), upper[k]));
            e[k] = -1.0;
            rows.push(Halfspace::new(e, -lower[k]));
        }
        let n = rows.len();
        Self::with_labels(d, rows, vec![Some(RowLabel::Initial); n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.rows
    }

    pub fn labels(&self) -> &[Option<RowLabel>] {
        &self.labels
    }

    /// Number of stored rows. Emptiness of the set is an LP question, see
    /// [`Polytope::is_feasible`], so there is deliberately no `is_empty`.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty_repr(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn relabel(mut self, label: RowLabel) -> Self {
        self.labels = vec![Some(label); self.rows.len()];
        self
    }

    /// Copy with every row normalized.
    pub fn normalized(&self) -> Result<Polytope, GeometryError> {
        let rows = self
            .rows
            .iter()
            .map(Halfspace::normalize)
            .collect::<Result<Vec<_>, _>>()?;
        Self::with_labels(self.dim, rows, self.labels.clone())
    }

    fn check_dim(&self, d: usize) -> Result<(), GeometryError> {
        if d != self.dim {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim,
                found: d,
            });
        }
        Ok(())
    }

    /// `H y ≤ h + tol` row-wise.
    pub fn contains_point(&self, y: &[f64], tol: f64) -> Result<bool, GeometryError> {
        self.check_dim(y.len())?;
        Ok(self.rows.iter().all(|r| r.residual(y) <= tol))
    }

    /// Largest row residual at `y` (negative inside), `-inf` for no rows.
    pub fn max_residual(&self, y: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| r.residual(y))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn lp(&self, objective: &[f64], sense: Sense) -> Result<LpResult, GeometryError> {
        lp_solve(objective, self, sense)
    }

    pub fn is_feasible(&self) -> Result<bool, GeometryError> {
        let r = self.lp(&vec![0.0; self.dim], Sense::Maximize)?;
        Ok(r.status != LpStatus::Infeasible)
    }

    /// Appends the normalized row `h`. No redundancy removal is done here so
    /// that learned rows stay identifiable.
    pub fn intersect(
        &self,
        h: &Halfspace,
        label: Option<RowLabel>,
    ) -> Result<Polytope, GeometryError> {
        self.check_dim(h.dim())?;
        let mut out = self.clone();
        out.rows.push(h.normalize()?);
        out.labels.push(label);
        Ok(out)
    }

    /// Intersection with every row of `other`.
    pub fn intersect_all(&self, other: &Polytope) -> Result<Polytope, GeometryError> {
        self.check_dim(other.dim)?;
        let mut out = self.clone();
        out.rows.extend(other.rows.iter().cloned());
        out.labels.extend(other.labels.iter().cloned());
        Ok(out)
    }

    /// Normalizes rows and drops every row implied by the others.
    ///
    /// Row `j` is tested against the rows kept so far plus all untested rows;
    /// it survives when maximizing its normal over the rest (with row `j`
    /// relaxed by one unit) exceeds its offset by more than
    /// [`REDUNDANCY_TOL`].
    pub fn remove_redundancy(&self) -> Result<Polytope, GeometryError> {
        let mut rows = Vec::with_capacity(self.rows.len());
        let mut labels = Vec::with_capacity(self.rows.len());
        for (r, l) in self.rows.iter().zip(&self.labels) {
            match r.normalize() {
                Ok(n) => {
                    rows.push(n);
                    labels.push(*l);
                }
                Err(_) if r.offset >= -MEMBER_TOL => {}
                Err(_) => return Err(GeometryError::Empty),
            }
        }
        let candidate = Polytope::with_labels(self.dim, rows, labels)?;
        if !candidate.is_feasible()? {
            return Err(GeometryError::Empty);
        }
        let mut alive = vec![true; candidate.rows.len()];
        for j in 0..candidate.rows.len() {
            let mut normals: Vec<&[f64]> = Vec::new();
            let mut offsets = Vec::new();
            for (i, r) in candidate.rows.iter().enumerate() {
                if i != j && alive[i] {
                    normals.push(&r.normal);
                    offsets.push(r.offset);
                }
            }
            let row = &candidate.rows[j];
            normals.push(&row.normal);
            offsets.push(row.offset + 1.0);
            let res = lp::solve_rows(&row.normal, &normals, &offsets, Sense::Maximize)?;
            match res.status {
                LpStatus::Optimal => {
                    if res.optimum <= row.offset + REDUNDANCY_TOL {
                        alive[j] = false;
                    }
                }
                LpStatus::Unbounded => {}
                LpStatus::Infeasible => return Err(GeometryError::Empty),
            }
        }
        let (rows, labels) = candidate
            .rows
            .into_iter()
            .zip(candidate.labels)
            .zip(alive)
            .filter_map(|(rl, keep)| keep.then_some(rl))
            .unzip();
        Polytope::with_labels(self.dim, rows, labels)
    }

    /// True iff every row of `self` holds over `inner` within `tol`.
    pub fn contains(&self, inner: &Polytope, tol: f64) -> Result<bool, GeometryError> {
        self.check_dim(inner.dim)?;
        if !inner.is_feasible()? {
            return Err(GeometryError::Empty);
        }
        for r in &self.rows {
            let n = r.norm();
            let res = inner.lp(&r.normal, Sense::Maximize)?;
            match res.status {
                LpStatus::Optimal => {
                    if res.optimum > r.offset + tol * n.max(1.0) {
                        return Ok(false);
                    }
                }
                LpStatus::Unbounded => return Ok(false),
                LpStatus::Infeasible => return Err(GeometryError::Empty),
            }
        }
        Ok(true)
    }

    /// Set equality by mutual containment.
    pub fn set_equals(&self, other: &Polytope, tol: f64) -> Result<bool, GeometryError> {
        Ok(self.contains(other, tol)? && other.contains(self, tol)?)
    }

    /// Center and radius of the largest inscribed ball.
    pub fn chebyshev_center(&self) -> Result<(Vec<f64>, f64), GeometryError> {
        let d = self.dim;
        let mut normals: Vec<Vec<f64>> = self
            .rows
            .iter()
            .map(|r| {
                let mut n = r.normal.clone();
                n.push(r.norm());
                n
            })
            .collect();
        let mut offsets: Vec<f64> = self.rows.iter().map(|r| r.offset).collect();
        let mut nonneg = vec![0.0; d + 1];
        nonneg[d] = -1.0;
        normals.push(nonneg);
        offsets.push(0.0);
        let refs: Vec<&[f64]> = normals.iter().map(Vec::as_slice).collect();
        let mut obj = vec![0.0; d + 1];
        obj[d] = 1.0;
        let res = lp::solve_rows(&obj, &refs, &offsets, Sense::Maximize)?;
        match res.status {
            LpStatus::Optimal => {
                let mut c = res.argument;
                let r = c.pop().unwrap_or(0.0).max(0.0);
                Ok((c, r))
            }
            LpStatus::Unbounded => Err(GeometryError::Unbounded),
            LpStatus::Infeasible => Err(GeometryError::Empty),
        }
    }

    /// Per-coordinate `[min, max]` from `2·dim` LPs.
    pub fn bounding_box(&self) -> Result<Vec<(f64, f64)>, GeometryError> {
        let mut out = Vec::with_capacity(self.dim);
        for k in 0..self.dim {
            let mut e = vec![0.0; self.dim];
            e[k] = 1.0;
            let hi = self.lp(&e, Sense::Maximize)?;
            let lo = self.lp(&e, Sense::Minimize)?;
            match (hi.status, lo.status) {
                (LpStatus::Infeasible, _) | (_, LpStatus::Infeasible) => {
                    return Err(GeometryError::Empty)
                }
                (LpStatus::Unbounded, _) | (_, LpStatus::Unbounded) => {
                    return Err(GeometryError::Unbounded)
                }
                _ => out.push((lo.optimum, hi.optimum)),
            }
        }
        Ok(out)
    }

    /// Fixes the leading coordinates to `fixed` and returns the polytope over
    /// the remaining ones, or `None` when that slice is empty.
    ///
    /// Rows whose trailing block is numerically zero constrain only the fixed
    /// part; they are checked against `fixed` and dropped.
    pub fn section(&self, fixed: &[f64]) -> Result<Option<Polytope>, GeometryError> {
        if fixed.is_empty() || fixed.len() >= self.dim {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim - 1,
                found: fixed.len(),
            });
        }
        let m = fixed.len();
        let mut rows = Vec::with_capacity(self.rows.len());
        for r in &self.rows {
            let (head, tail) = r.normal.split_at(m);
            let offset = r.offset - dot(head, fixed);
            if tail.iter().all(|v| v.abs() <= DEGENERATE_TOL) {
                if offset < -MEMBER_TOL {
                    return Ok(None);
                }
            } else {
                rows.push(Halfspace::new(tail.to_vec(), offset));
            }
        }
        let s = Polytope::new(self.dim - m, rows)?;
        if s.is_feasible()? {
            Ok(Some(s))
        } else {
            Ok(None)
        }
    }

    /// Index of a row of `self` matching `h` within `tol`, if any.
    pub fn find_row(&self, h: &Halfspace, tol: f64) -> Option<usize> {
        self.rows.iter().position(|r| r.matches(h, tol))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(PolytopeRepr::from(self)).expect("polytope serializes")
    }

    pub fn from_json(v: &str) -> Result<Polytope, GeometryError> {
        let repr: PolytopeRepr =
            serde_json::from_str(v).map_err(|e| GeometryError::Numerical(e.to_string()))?;
        repr.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct RowRepr {
    normal: Vec<f64>,
    offset: f64,
    #[serde(default)]
    label: Option<RowLabel>,
}

#[derive(Serialize, Deserialize)]
struct PolytopeRepr {
    dim: usize,
    rows: Vec<RowRepr>,
}

impl From<&Polytope> for PolytopeRepr {
    fn from(p: &Polytope) -> Self {
        PolytopeRepr {
            dim: p.dim,
            rows: p
                .rows
                .iter()
                .zip(&p.labels)
                .map(|(r, l)| RowRepr {
                    normal: r.normal.clone(),
                    offset: r.offset,
                    label: *l,
                })
                .collect(),
        }
    }
}

impl TryFrom<PolytopeRepr> for Polytope {
    type Error = GeometryError;

    fn try_from(r: PolytopeRepr) -> Result<Self, Self::Error> {
        let (rows, labels) = r
            .rows
            .into_iter()
            .map(|row| (Halfspace::new(row.normal, row.offset), row.label))
            .unzip();
        Polytope::with_labels(r.dim, rows, labels)
    }
}

impl Serialize for Polytope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PolytopeRepr::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polytope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = PolytopeRepr::deserialize(d)?;
        repr.try_into().map_err(serde::de::Error::custom)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
