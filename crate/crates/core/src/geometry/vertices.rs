//! Vertex enumeration and Hausdorff distance for low-dimensional polytopes.
//!
//! Both use brute force over row subsets, which is fine for the handful of
//! dimensions and few dozen rows this crate works with.

use nalgebra::{DMatrix, DVector};

use super::{GeometryError, Polytope};

pub const MAX_VERTEX_DIM: usize = 4;
const VERTEX_TOL: f64 = 1e-8;

impl Polytope {
    /// Extreme points. Two-dimensional results are returned in
    /// counter-clockwise order around their centroid.
    pub fn vertices(&self) -> Result<Vec<Vec<f64>>, GeometryError> {
        let d = self.dim();
        if d > MAX_VERTEX_DIM {
            return Err(GeometryError::DimensionTooHigh(d));
        }
        self.bounding_box()?;
        let rows = self.halfspaces();
        let mut out: Vec<Vec<f64>> = Vec::new();
        for subset in Subsets::new(rows.len(), d) {
            let a = DMatrix::from_fn(d, d, |i, j| rows[subset[i]].normal[j]);
            let b = DVector::from_fn(d, |i, _| rows[subset[i]].offset);
            let svd = a.clone().svd(false, false);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            if smin <= 1e-10 * smax.max(1.0) {
                continue;
            }
            let Some(v) = a.lu().solve(&b) else { continue };
            let v: Vec<f64> = v.iter().copied().collect();
            if self.max_residual(&v) > VERTEX_TOL {
                continue;
            }
            if !out.iter().any(|w| max_abs_diff(w, &v) <= VERTEX_TOL) {
                out.push(v);
            }
        }
        if d == 2 && out.len() > 2 {
            let n = out.len() as f64;
            let cx = out.iter().map(|v| v[0]).sum::<f64>() / n;
            let cy = out.iter().map(|v| v[1]).sum::<f64>() / n;
            out.sort_by(|a, b| {
                let ta = (a[1] - cy).atan2(a[0] - cx);
                let tb = (b[1] - cy).atan2(b[0] - cx);
                ta.total_cmp(&tb)
            });
        } else if d == 1 {
            out.sort_by(|a, b| a[0].total_cmp(&b[0]));
        }
        Ok(out)
    }

    /// Euclidean distance from `y` to the polytope.
    ///
    /// The nearest point lies in the relative interior of some face, whose
    /// affine hull is cut out by an independent set of at most `dim` active
    /// rows. Every such set is tried and the closest feasible projection wins.
    pub fn distance_to(&self, y: &[f64]) -> Result<f64, GeometryError> {
        let d = self.dim();
        if y.len() != d {
            return Err(GeometryError::DimensionMismatch {
                expected: d,
                found: y.len(),
            });
        }
        if d > MAX_VERTEX_DIM {
            return Err(GeometryError::DimensionTooHigh(d));
        }
        if self.max_residual(y) <= VERTEX_TOL {
            return Ok(0.0);
        }
        let rows = self.halfspaces();
        let yv = DVector::from_column_slice(y);
        let mut best = f64::INFINITY;
        for k in 1..=d.min(rows.len()) {
            for subset in Subsets::new(rows.len(), k) {
                let n = DMatrix::from_fn(k, d, |i, j| rows[subset[i]].normal[j]);
                let o = DVector::from_fn(k, |i, _| rows[subset[i]].offset);
                let gram = &n * n.transpose();
                let Some(inv) = gram.clone().try_inverse() else {
                    continue;
                };
                if gram.determinant().abs() < 1e-12 {
                    continue;
                }
                let lambda = inv * (&n * &yv - o);
                let proj = &yv - n.transpose() * lambda;
                let p: Vec<f64> = proj.iter().copied().collect();
                if self.max_residual(&p) <= VERTEX_TOL {
                    best = best.min((&proj - &yv).norm());
                }
            }
        }
        if best.is_finite() {
            Ok(best)
        } else {
            Err(GeometryError::Empty)
        }
    }
}

/// Symmetric Hausdorff distance between two bounded polytopes.
pub fn hausdorff(p: &Polytope, q: &Polytope) -> Result<f64, GeometryError> {
    if p.dim() != q.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    let mut h: f64 = 0.0;
    for v in p.vertices()? {
        h = h.max(q.distance_to(&v)?);
    }
    for v in q.vertices()? {
        h = h.max(p.distance_to(&v)?);
    }
    Ok(h)
}

/// One point per line, preceded by a `v0,v1,…` header.
pub fn vertices_to_csv(dim: usize, points: &[Vec<f64>]) -> String {
    let mut s = (0..dim)
        .map(|i| format!("v{i}"))
        .collect::<Vec<_>>()
        .join(",");
    s.push('\n');
    for p in points {
        s.push_str(
            &p.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        s.push('\n');
    }
    s
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// k-subsets of `0..n` in lexicographic order.
struct Subsets {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Subsets {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Subsets {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}
