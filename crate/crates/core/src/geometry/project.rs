//! Fourier–Motzkin elimination.

use super::{GeometryError, Halfspace, Polytope, DEGENERATE_TOL, MEMBER_TOL};

impl Polytope {
    /// `{ y_keep : ∃ y_drop, (y_keep, y_drop) ∈ self }`, with coordinates in
    /// ascending order of `keep`. Dropped coordinates are eliminated one at a
    /// time from the highest index down, pruning redundant rows after each.
    pub fn project(&self, keep: &[usize]) -> Result<Polytope, GeometryError> {
        let mut keep_sorted = keep.to_vec();
        keep_sorted.sort_unstable();
        keep_sorted.dedup();
        if keep_sorted.is_empty()
            || keep_sorted.len() != keep.len()
            || keep_sorted.len() >= self.dim()
            || keep_sorted.iter().any(|&k| k >= self.dim())
        {
            return Err(GeometryError::InvalidIndexSet(format!(
                "{keep:?} in dimension {}",
                self.dim()
            )));
        }
        let mut current = self.remove_redundancy()?;
        for k in (0..self.dim()).rev() {
            if keep_sorted.binary_search(&k).is_err() {
                current = eliminate(&current, k)?.remove_redundancy()?;
            }
        }
        Ok(current)
    }
}

/// Removes coordinate `k`, producing a polytope one dimension lower.
fn eliminate(p: &Polytope, k: usize) -> Result<Polytope, GeometryError> {
    let drop_k = |n: &[f64]| -> Vec<f64> {
        n.iter()
            .enumerate()
            .filter_map(|(i, v)| (i != k).then_some(*v))
            .collect()
    };
    let mut zero = Vec::new();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for r in p.halfspaces() {
        let a = r.normal[k];
        if a > DEGENERATE_TOL {
            pos.push(r);
        } else if a < -DEGENERATE_TOL {
            neg.push(r);
        } else {
            zero.push(Halfspace::new(drop_k(&r.normal), r.offset));
        }
    }
    let mut rows = zero;
    for rp in &pos {
        for rq in &neg {
            let wp = -rq.normal[k];
            let wq = rp.normal[k];
            let normal: Vec<f64> = rp
                .normal
                .iter()
                .zip(&rq.normal)
                .map(|(a, b)| wp * a + wq * b)
                .collect();
            rows.push(Halfspace::new(
                drop_k(&normal),
                wp * rp.offset + wq * rq.offset,
            ));
        }
    }
    let mut kept = Vec::with_capacity(rows.len());
    for r in rows {
        match r.normalize() {
            Ok(n) => kept.push(n),
            Err(_) if r.offset >= -MEMBER_TOL => {}
            Err(_) => return Err(GeometryError::Empty),
        }
    }
    Polytope::new(p.dim() - 1, kept)
}
