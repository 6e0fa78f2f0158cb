//! Model-based ground truth: predecessor operators and the fixed-point
//! recursions for the maximal control invariant set (in state space) and the
//! maximal state-control invariant set (in joint state-input space).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::LtiSystem;
use crate::geometry::{GeometryError, Halfspace, Polytope, RowLabel, MEMBER_TOL, SET_TOL};

pub const DEFAULT_ITERATION_CAP: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvarianceError {
    #[error("recursion did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Iterates `Ω_0 ⊇ Ω_1 ⊇ …` of a predecessor recursion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursionTrace {
    pub iterates: Vec<Polytope>,
    /// Number of steps that produced a strictly smaller set. The final
    /// equality check is not counted.
    pub iterations_to_fixpoint: usize,
    pub fixpoint: Polytope,
}

/// `Π_x(Z)` onto the first `n_x` coordinates.
pub fn state_projection(z: &Polytope, n_x: usize) -> Result<Polytope, InvarianceError> {
    if n_x == 0 || z.dim() <= n_x {
        return Err(InvarianceError::DimensionMismatch {
            expected: n_x + 1,
            found: z.dim(),
        });
    }
    let keep: Vec<usize> = (0..n_x).collect();
    Ok(z.project(&keep)?)
}

/// `{ u : (x, u) ∈ Z }`, or `None` when empty.
pub fn x_section(z: &Polytope, x: &[f64]) -> Result<Option<Polytope>, InvarianceError> {
    Ok(z.section(x)?)
}

/// `Pre_z(Ω)` together with the state projection it was pulled back from.
#[derive(Clone, Debug)]
pub struct Predecessor {
    pub polytope: Polytope,
    pub projection: Polytope,
    /// `source_rows[i]` is the projection row that produced row `i`.
    pub source_rows: Vec<usize>,
}

/// `{ z : [A B] z ∈ Π_x(Ω) }`, row `j` being the normalized pullback of
/// projection row `j`. Pullbacks with a vanishing normal are checked and
/// dropped.
pub fn pre_z(sys: &LtiSystem, omega: &Polytope) -> Result<Predecessor, InvarianceError> {
    let (nx, nu) = (sys.state_dim(), sys.input_dim());
    if omega.dim() != nx + nu {
        return Err(InvarianceError::DimensionMismatch {
            expected: nx + nu,
            found: omega.dim(),
        });
    }
    let projection = state_projection(omega, nx)?;
    let pulled = pullback(sys, &projection)?;
    let mut rows = Vec::new();
    let mut source_rows = Vec::new();
    for (j, h) in pulled.into_iter().enumerate() {
        match h.normalize() {
            Ok(n) => {
                rows.push(n);
                source_rows.push(j);
            }
            Err(_) if h.offset >= -MEMBER_TOL => {}
            Err(_) => return Err(GeometryError::Empty.into()),
        }
    }
    Ok(Predecessor {
        polytope: Polytope::new(nx + nu, rows)?,
        projection,
        source_rows,
    })
}

/// Rows `h·[A B] z ≤ g` for each row `h·x ≤ g` of `target`, unnormalized.
fn pullback(sys: &LtiSystem, target: &Polytope) -> Result<Vec<Halfspace>, InvarianceError> {
    if target.dim() != sys.state_dim() {
        return Err(InvarianceError::DimensionMismatch {
            expected: sys.state_dim(),
            found: target.dim(),
        });
    }
    let ab = sys.ab();
    Ok(target
        .halfspaces()
        .iter()
        .map(|r| {
            let normal = (0..ab.ncols())
                .map(|c| (0..ab.nrows()).map(|i| r.normal[i] * ab[(i, c)]).sum())
                .collect();
            Halfspace::new(normal, r.offset)
        })
        .collect())
}

/// States that some `u ∈ U` steers into `Ω_x` in one step.
pub fn pre_state(
    sys: &LtiSystem,
    omega_x: &Polytope,
    inputs: &Polytope,
) -> Result<Polytope, InvarianceError> {
    let (nx, nu) = (sys.state_dim(), sys.input_dim());
    if inputs.dim() != nu {
        return Err(InvarianceError::DimensionMismatch {
            expected: nu,
            found: inputs.dim(),
        });
    }
    let mut rows = pullback(sys, omega_x)?;
    for r in inputs.halfspaces() {
        let mut n = vec![0.0; nx];
        n.extend_from_slice(&r.normal);
        rows.push(Halfspace::new(n, r.offset));
    }
    let lifted = Polytope::new(nx + nu, rows)?;
    state_projection(&lifted, nx)
}

fn run_recursion(
    omega0: Polytope,
    cap: usize,
    mut step: impl FnMut(&Polytope) -> Result<Polytope, InvarianceError>,
) -> Result<RecursionTrace, InvarianceError> {
    let mut current = omega0.remove_redundancy()?;
    let mut iterates = vec![current.clone()];
    for k in 0..cap {
        let pre = step(&current)?.relabel(RowLabel::Recursion { iteration: k + 1 });
        let next = current.intersect_all(&pre)?.remove_redundancy()?;
        if next.set_equals(&current, SET_TOL)? {
            return Ok(RecursionTrace {
                iterations_to_fixpoint: k,
                fixpoint: current,
                iterates,
            });
        }
        log::debug!("recursion step {}: {} rows", k + 1, next.len());
        iterates.push(next.clone());
        current = next;
    }
    Err(InvarianceError::NonConvergence(cap))
}

/// `Ω_{k+1} = Pre(Ω_k) ∩ Ω_k` from `Ω_0 = X`, converging to the maximal
/// control invariant set.
pub fn compute_mci(
    sys: &LtiSystem,
    states: &Polytope,
    inputs: &Polytope,
) -> Result<RecursionTrace, InvarianceError> {
    compute_mci_capped(sys, states, inputs, DEFAULT_ITERATION_CAP)
}

pub fn compute_mci_capped(
    sys: &LtiSystem,
    states: &Polytope,
    inputs: &Polytope,
    cap: usize,
) -> Result<RecursionTrace, InvarianceError> {
    if states.dim() != sys.state_dim() {
        return Err(InvarianceError::DimensionMismatch {
            expected: sys.state_dim(),
            found: states.dim(),
        });
    }
    run_recursion(states.clone(), cap, |omega| pre_state(sys, omega, inputs))
}

/// `Ω_{k+1} = Pre_z(Ω_k) ∩ Ω_k` from `Ω_0 = Z`, converging to the maximal
/// state-control invariant set.
pub fn compute_msci(sys: &LtiSystem, joint: &Polytope) -> Result<RecursionTrace, InvarianceError> {
    compute_msci_capped(sys, joint, DEFAULT_ITERATION_CAP)
}

pub fn compute_msci_capped(
    sys: &LtiSystem,
    joint: &Polytope,
    cap: usize,
) -> Result<RecursionTrace, InvarianceError> {
    run_recursion(joint.clone(), cap, |omega| Ok(pre_z(sys, omega)?.polytope))
}

/// `C ⊆ Pre_z(C)`.
pub fn is_state_control_invariant(sys: &LtiSystem, c: &Polytope) -> Result<bool, InvarianceError> {
    Ok(pre_z(sys, c)?.polytope.contains(c, SET_TOL)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::make_joint_constraints;

    fn state_box() -> Polytope {
        Polytope::from_box(&[-15.0, -10.0], &[15.0, 10.0]).unwrap()
    }

    fn input_box() -> Polytope {
        Polytope::from_box(&[-5.0], &[5.0]).unwrap()
    }

    fn p0() -> Polytope {
        make_joint_constraints(&state_box(), &input_box()).unwrap()
    }

    #[test]
    fn projection_examples() {
        let x = state_projection(&p0(), 2).unwrap();
        assert!(x.set_equals(&state_box(), 1e-12).unwrap());
        let cube = Polytope::from_box(&[0.0; 3], &[1.0; 3]).unwrap();
        let sq = state_projection(&cube, 2).unwrap();
        assert!(sq
            .set_equals(&Polytope::from_box(&[0.0; 2], &[1.0; 2]).unwrap(), 1e-12)
            .unwrap());
        assert!(state_projection(&cube, 3).is_err());
    }

    #[test]
    fn section_examples() {
        for x in [[0.0, 0.0], [15.0, 10.0]] {
            let s = x_section(&p0(), &x).unwrap().unwrap();
            assert!(s.set_equals(&input_box(), 1e-12).unwrap());
        }
    }

    #[test]
    fn pre_z_first_row() {
        let sys = LtiSystem::double_integrator();
        let pre = pre_z(&sys, &p0()).unwrap();
        let target = Halfspace::new(vec![1.0, 1.0, 0.0], 15.0)
            .normalize()
            .unwrap();
        assert!(pre.polytope.find_row(&target, 1e-12).is_some());
        let target = Halfspace::new(vec![0.0, 1.0, 1.0], 10.0)
            .normalize()
            .unwrap();
        assert!(pre.polytope.find_row(&target, 1e-12).is_some());
    }

    #[test]
    fn pre_z_identity_plant() {
        let sys = LtiSystem::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![0.0], vec![0.0]])
            .unwrap();
        let pre = pre_z(&sys, &p0()).unwrap();
        // No input dependence; the set is the state box times R.
        assert_eq!(pre.polytope.len(), 4);
        assert!(pre.polytope.halfspaces().iter().all(|r| r.normal[2] == 0.0));
        assert!(pre.polytope.contains(&p0(), 1e-12).unwrap());
    }

    #[test]
    fn pre_state_identity_and_empty() {
        let id = LtiSystem::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![0.0], vec![0.0]])
            .unwrap();
        let pre = pre_state(&id, &state_box(), &input_box()).unwrap();
        assert!(pre.set_equals(&state_box(), 1e-12).unwrap());

        let empty = Polytope::new(
            2,
            vec![
                Halfspace::new(vec![1.0, 0.0], -1.0),
                Halfspace::new(vec![-1.0, 0.0], -1.0),
            ],
        )
        .unwrap();
        let sys = LtiSystem::double_integrator();
        assert!(matches!(
            pre_state(&sys, &empty, &input_box()),
            Err(InvarianceError::Geometry(GeometryError::Empty))
        ));
    }

    #[test]
    fn already_invariant_sets_are_fixpoints() {
        let stable =
            LtiSystem::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]], &[vec![0.0], vec![0.0]])
                .unwrap();
        let t = compute_mci(&stable, &state_box(), &input_box()).unwrap();
        assert_eq!(t.iterations_to_fixpoint, 0);
        assert!(t.fixpoint.set_equals(&state_box(), 1e-9).unwrap());

        let zero = LtiSystem::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]], &[vec![0.0], vec![0.0]])
            .unwrap();
        let cube = Polytope::from_box(&[-1.0; 3], &[1.0; 3]).unwrap();
        let t = compute_msci(&zero, &cube).unwrap();
        assert_eq!(t.iterations_to_fixpoint, 0);
        assert!(t.fixpoint.set_equals(&cube, 1e-9).unwrap());
    }

    #[test]
    fn iteration_cap_is_reported() {
        let sys = LtiSystem::double_integrator();
        assert_eq!(
            compute_msci_capped(&sys, &p0(), 1),
            Err(InvarianceError::NonConvergence(1))
        );
    }

    #[test]
    fn p0_is_not_state_control_invariant() {
        let sys = LtiSystem::double_integrator();
        assert!(!is_state_control_invariant(&sys, &p0()).unwrap());
    }
}
