//! Discrete-time LTI plants, joint constraint sets and trajectory rollouts.
//!
//! The learner only ever sees a [`StepOracle`]. [`LtiSystem`] exposes its
//! matrices for simulation and ground-truth computation, and hands out an
//! [`LtiOracle`] that wraps it without any accessor back to `(A, B)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::{Controller, ControllerError};
use crate::geometry::{GeometryError, Halfspace, Polytope, RowLabel, MEMBER_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("system matrices contain non-finite entries")]
    NonFinite,
    #[error("initial state {0:?} is outside the guard")]
    InitialStateOutsideGuard(Vec<f64>),
    #[error("controller infeasible at step {step}: {source}")]
    ControllerInfeasible {
        step: usize,
        #[source]
        source: ControllerError,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `x(k+1) = A x(k) + B u(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self, DynamicsError> {
        if a.nrows() != a.ncols() {
            return Err(DynamicsError::DimensionMismatch {
                what: "A (square)",
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        if b.nrows() != a.nrows() {
            return Err(DynamicsError::DimensionMismatch {
                what: "B rows",
                expected: a.nrows(),
                found: b.nrows(),
            });
        }
        if a.nrows() == 0 || b.ncols() == 0 {
            return Err(DynamicsError::DimensionMismatch {
                what: "system size",
                expected: 1,
                found: 0,
            });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite);
        }
        Ok(Self { a, b })
    }

    /// Row-major construction, e.g. `from_rows(&[vec![1.,1.], vec![0.,1.]], &[vec![0.], vec![1.]])`.
    pub fn from_rows(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Self, DynamicsError> {
        let to_matrix = |rows: &[Vec<f64>], what| -> Result<DMatrix<f64>, DynamicsError> {
            let ncols = rows.first().map_or(0, Vec::len);
            if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
                return Err(DynamicsError::DimensionMismatch {
                    what,
                    expected: ncols,
                    found: bad.len(),
                });
            }
            Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
        };
        Self::new(to_matrix(a, "A columns")?, to_matrix(b, "B columns")?)
    }

    /// The double integrator `A = [[1, 1], [0, 1]]`, `B = [0, 1]ᵀ`.
    pub fn double_integrator() -> Self {
        Self::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]], &[vec![0.0], vec![1.0]])
            .expect("valid matrices")
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    /// `[A B]`, the map from `z = (x, u)` to the next state.
    pub fn ab(&self) -> DMatrix<f64> {
        let (n, m) = (self.state_dim(), self.input_dim());
        DMatrix::from_fn(n, n + m, |i, j| {
            if j < n {
                self.a[(i, j)]
            } else {
                self.b[(i, j - n)]
            }
        })
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, DynamicsError> {
        check_len("state", self.state_dim(), x.len())?;
        check_len("input", self.input_dim(), u.len())?;
        let next =
            &self.a * DVector::from_column_slice(x) + &self.b * DVector::from_column_slice(u);
        Ok(next.iter().copied().collect())
    }

    pub fn oracle(&self) -> LtiOracle {
        LtiOracle { sys: self.clone() }
    }
}

/// Black-box access to a plant: only the successor of a state-input pair.
pub trait StepOracle: Send + Sync {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn next_state(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, DynamicsError>;
}

/// Step oracle backed by an [`LtiSystem`] that it does not reveal.
#[derive(Clone, Debug)]
pub struct LtiOracle {
    sys: LtiSystem,
}

impl StepOracle for LtiOracle {
    fn state_dim(&self) -> usize {
        self.sys.state_dim()
    }

    fn input_dim(&self) -> usize {
        self.sys.input_dim()
    }

    fn next_state(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>, DynamicsError> {
        self.sys.step(x, u)
    }
}

fn check_len(what: &'static str, expected: usize, found: usize) -> Result<(), DynamicsError> {
    if expected != found {
        return Err(DynamicsError::DimensionMismatch {
            what,
            expected,
            found,
        });
    }
    Ok(())
}

/// `{ (x, u) : x ∈ state_box, u ∈ input_box }` with state rows first.
pub fn make_joint_constraints(
    state_box: &Polytope,
    input_box: &Polytope,
) -> Result<Polytope, DynamicsError> {
    let (nx, nu) = (state_box.dim(), input_box.dim());
    for (name, p) in [("state", state_box), ("input", input_box)] {
        let origin = vec![0.0; p.dim()];
        if p.max_residual(&origin) >= -MEMBER_TOL {
            log::warn!("origin is not in the interior of the {name} constraints");
        }
    }
    let mut rows = Vec::with_capacity(state_box.len() + input_box.len());
    for r in state_box.halfspaces() {
        let mut n = r.normal.clone();
        n.resize(nx + nu, 0.0);
        rows.push(Halfspace::new(n, r.offset).normalize()?);
    }
    for r in input_box.halfspaces() {
        let mut n = vec![0.0; nx];
        n.extend_from_slice(&r.normal);
        rows.push(Halfspace::new(n, r.offset).normalize()?);
    }
    let n = rows.len();
    Ok(Polytope::with_labels(
        nx + nu,
        rows,
        vec![Some(RowLabel::Initial); n],
    )?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub k: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub x_next: Vec<f64>,
}

impl Sample {
    /// The state-input pair `z = (x, u)`.
    pub fn z(&self) -> Vec<f64> {
        let mut z = self.x.clone();
        z.extend_from_slice(&self.u);
        z
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    GuardExit,
    Horizon,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub terminated_by: Termination,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn exited(&self) -> bool {
        self.terminated_by == Termination::GuardExit
    }

    pub fn csv_header(nx: usize, nu: usize, with_id: bool) -> String {
        let mut cols: Vec<String> = Vec::new();
        if with_id {
            cols.push("trajectory".into());
        }
        cols.push("k".into());
        cols.extend((0..nx).map(|i| format!("x{i}")));
        cols.extend((0..nu).map(|i| format!("u{i}")));
        cols.extend((0..nx).map(|i| format!("x_next{i}")));
        cols.push("failing".into());
        cols.join(",") + "\n"
    }

    /// CSV rows `k, x…, u…, x_next…, failing`, optionally prefixed by `id`.
    /// Only the final sample of a guard-exit trajectory is flagged failing.
    pub fn csv_rows(&self, id: Option<usize>) -> String {
        let mut s = String::new();
        let last = self.samples.len().saturating_sub(1);
        for (i, smp) in self.samples.iter().enumerate() {
            let mut cols: Vec<String> = Vec::new();
            if let Some(id) = id {
                cols.push(id.to_string());
            }
            cols.push(smp.k.to_string());
            cols.extend(
                smp.x
                    .iter()
                    .chain(&smp.u)
                    .chain(&smp.x_next)
                    .map(|v| v.to_string()),
            );
            cols.push(u8::from(self.exited() && i == last).to_string());
            s.push_str(&cols.join(","));
            s.push('\n');
        }
        s
    }
}

/// Runs `controller` from `x0` for at most `horizon` steps.
///
/// At each step the controller sees the `x`-section of `admissible` (a joint
/// polytope) at the current state. The rollout stops early, keeping the
/// offending sample, as soon as the next state leaves `guard`.
pub fn rollout<O: StepOracle + ?Sized>(
    oracle: &O,
    controller: &mut dyn Controller,
    x0: &[f64],
    horizon: usize,
    guard: &Polytope,
    admissible: &Polytope,
) -> Result<Trajectory, DynamicsError> {
    check_len("initial state", oracle.state_dim(), x0.len())?;
    check_len("guard", oracle.state_dim(), guard.dim())?;
    check_len(
        "admissible set",
        oracle.state_dim() + oracle.input_dim(),
        admissible.dim(),
    )?;
    if !guard.contains_point(x0, MEMBER_TOL)? {
        return Err(DynamicsError::InitialStateOutsideGuard(x0.to_vec()));
    }
    let mut samples = Vec::with_capacity(horizon);
    let mut x = x0.to_vec();
    for k in 0..horizon {
        let section = admissible.section(&x)?;
        let u = controller
            .input(&x, section.as_ref())
            .map_err(|source| DynamicsError::ControllerInfeasible { step: k, source })?;
        check_len("controller output", oracle.input_dim(), u.len())?;
        let x_next = oracle.next_state(&x, &u)?;
        let exited = !guard.contains_point(&x_next, MEMBER_TOL)?;
        samples.push(Sample {
            k,
            x,
            u,
            x_next: x_next.clone(),
        });
        if exited {
            return Ok(Trajectory {
                samples,
                terminated_by: Termination::GuardExit,
            });
        }
        x = x_next;
    }
    Ok(Trajectory {
        samples,
        terminated_by: Termination::Horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controllers::ConstantController;

    fn state_box() -> Polytope {
        Polytope::from_box(&[-15.0, -10.0], &[15.0, 10.0]).unwrap()
    }

    fn input_box() -> Polytope {
        Polytope::from_box(&[-5.0], &[5.0]).unwrap()
    }

    #[test]
    fn step_examples() {
        let sys = LtiSystem::double_integrator();
        assert_eq!(sys.step(&[0.0, 0.0], &[0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(sys.step(&[1.0, 2.0], &[3.0]).unwrap(), vec![3.0, 5.0]);
        assert_eq!(sys.step(&[0.0, 10.0], &[5.0]).unwrap(), vec![10.0, 15.0]);
        assert!(sys.step(&[0.0], &[0.0]).is_err());
        assert!(sys.step(&[0.0, 0.0], &[0.0, 1.0]).is_err());
        assert_eq!(
            sys.oracle().next_state(&[0.0, 0.0], &[0.0]).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn bad_matrices() {
        assert!(LtiSystem::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]], &[vec![0.0]]).is_err());
        assert!(LtiSystem::from_rows(&[vec![1.0, 1.0]], &[vec![0.0]]).is_err());
        assert!(LtiSystem::from_rows(&[vec![f64::NAN]], &[vec![0.0]]).is_err());
    }

    #[test]
    fn ab_concatenates() {
        let ab = LtiSystem::double_integrator().ab();
        assert_eq!(
            ab.row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 1.0, 0.0]
        );
        assert_eq!(
            ab.row(1).iter().copied().collect::<Vec<_>>(),
            vec![0.0, 1.0, 1.0]
        );
    }

    #[test]
    fn joint_constraints() {
        let p0 = make_joint_constraints(&state_box(), &input_box()).unwrap();
        assert_eq!(p0.dim(), 3);
        assert_eq!(p0.len(), 6);
        let expect = Polytope::from_box(&[-15.0, -10.0, -5.0], &[15.0, 10.0, 5.0]).unwrap();
        assert!(p0.set_equals(&expect, 1e-12).unwrap());
        assert!(p0
            .project(&[0, 1])
            .unwrap()
            .set_equals(&state_box(), 1e-12)
            .unwrap());

        let cube = make_joint_constraints(
            &Polytope::from_box(&[0.0, 0.0], &[1.0, 1.0]).unwrap(),
            &Polytope::from_box(&[0.0], &[1.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(cube.len(), 6);
    }

    #[test]
    fn rollout_equilibrium() {
        let sys = LtiSystem::double_integrator();
        let p0 = make_joint_constraints(&state_box(), &input_box()).unwrap();
        let mut c = ConstantController::new(vec![0.0]);
        let t = rollout(&sys.oracle(), &mut c, &[0.0, 0.0], 15, &state_box(), &p0).unwrap();
        assert_eq!(t.len(), 15);
        assert_eq!(t.terminated_by, Termination::Horizon);
        assert!(t.samples.iter().all(|s| s.x == vec![0.0, 0.0]));
    }

    #[test]
    fn rollout_constant_push_fails() {
        let sys = LtiSystem::double_integrator();
        let p0 = make_joint_constraints(&state_box(), &input_box()).unwrap();
        for u in [5.0, -5.0] {
            let mut c = ConstantController::new(vec![u]);
            let t = rollout(&sys.oracle(), &mut c, &[0.0, 0.0], 15, &state_box(), &p0).unwrap();
            // Direct simulation: (0,0) → (0,±5) → (±5,±10) → (±15,±15).
            let mut x = vec![0.0, 0.0];
            let mut exit = None;
            for k in 0..15 {
                let nx = vec![x[0] + x[1], x[1] + u];
                if nx[0].abs() > 15.0 || nx[1].abs() > 10.0 {
                    exit = Some(k);
                    break;
                }
                x = nx;
            }
            assert_eq!(exit, Some(2));
            assert_eq!(t.len(), 3);
            assert!(t.exited());
            let last = t.samples.last().unwrap();
            assert_eq!(last.x_next, vec![15.0 * u.signum(), 15.0 * u.signum()]);
            for w in t.samples.windows(2) {
                assert_eq!(w[0].x_next, w[1].x);
            }
        }
    }

    #[test]
    fn rollout_rejects_start_outside_guard() {
        let sys = LtiSystem::double_integrator();
        let p0 = make_joint_constraints(&state_box(), &input_box()).unwrap();
        let mut c = ConstantController::new(vec![0.0]);
        let e = rollout(&sys.oracle(), &mut c, &[20.0, 0.0], 15, &state_box(), &p0);
        assert!(matches!(e, Err(DynamicsError::InitialStateOutsideGuard(_))));
    }

    #[test]
    fn csv_layout() {
        let t = Trajectory {
            samples: vec![Sample {
                k: 0,
                x: vec![1.0, 2.0],
                u: vec![3.0],
                x_next: vec![3.0, 5.0],
            }],
            terminated_by: Termination::GuardExit,
        };
        assert_eq!(
            Trajectory::csv_header(2, 1, false),
            "k,x0,x1,u0,x_next0,x_next1,failing\n"
        );
        assert_eq!(t.csv_rows(None), "0,1,2,3,3,5,1\n");
        assert_eq!(t.csv_rows(Some(7)), "7,0,1,2,3,3,5,1\n");
    }
}
