//! Controllers used to excite the plant.
//!
//! Every controller maps the current state, together with the current
//! admissible input section supplied by the caller, to an input. Passing the
//! section in (rather than storing a polytope) lets the learning loop tighten
//! its polytope between steps without rebuilding controllers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::lp::solve_rows;
use crate::geometry::{GeometryError, Polytope, Sense, MEMBER_TOL, SET_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("admissible input set is empty at state {0:?}")]
    EmptySection(Vec<f64>),
    #[error("constant input {value:?} is outside the input constraints")]
    ConstantOutOfBounds { value: Vec<f64> },
    #[error("controller misconfigured: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub trait Controller {
    /// `section` is `None` when no admissible input exists at `x`.
    fn input(&mut self, x: &[f64], section: Option<&Polytope>)
        -> Result<Vec<f64>, ControllerError>;
}

/// Open-loop `u ≡ u_c`. Ignores the section on purpose: these controllers
/// exist to drive the plant into failures.
#[derive(Clone, Debug)]
pub struct ConstantController {
    value: Vec<f64>,
}

impl ConstantController {
    pub fn new(value: Vec<f64>) -> Self {
        Self { value }
    }
}

impl Controller for ConstantController {
    fn input(
        &mut self,
        _x: &[f64],
        _section: Option<&Polytope>,
    ) -> Result<Vec<f64>, ControllerError> {
        Ok(self.value.clone())
    }
}

/// Uniform draw from the current section.
#[derive(Clone, Debug)]
pub struct RandomAdmissibleController {
    rng: ChaCha8Rng,
}

impl RandomAdmissibleController {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self { rng }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self::new(ChaCha8Rng::seed_from_u64(seed))
    }
}

impl Controller for RandomAdmissibleController {
    fn input(
        &mut self,
        x: &[f64],
        section: Option<&Polytope>,
    ) -> Result<Vec<f64>, ControllerError> {
        let s = section.ok_or_else(|| ControllerError::EmptySection(x.to_vec()))?;
        Ok(s.sample_uniform(&mut self.rng)?)
    }
}

/// Chebyshev center of the reference polytope's section at `x`.
///
/// With a state-control invariant reference this keeps the closed loop in
/// the reference's state projection forever.
#[derive(Clone, Debug)]
pub struct SafeController {
    reference: Polytope,
    state_dim: usize,
}

impl SafeController {
    pub fn new(reference: Polytope, state_dim: usize) -> Result<Self, ControllerError> {
        if state_dim == 0 || state_dim >= reference.dim() {
            return Err(ControllerError::Config(format!(
                "state dimension {state_dim} does not fit a reference of dimension {}",
                reference.dim()
            )));
        }
        Ok(Self {
            reference,
            state_dim,
        })
    }
}

impl Controller for SafeController {
    fn input(
        &mut self,
        x: &[f64],
        _section: Option<&Polytope>,
    ) -> Result<Vec<f64>, ControllerError> {
        if x.len() != self.state_dim {
            return Err(GeometryError::DimensionMismatch {
                expected: self.state_dim,
                found: x.len(),
            }
            .into());
        }
        match self.reference.section(x)? {
            Some(section) => Ok(section.chebyshev_center()?.0),
            None => self.least_violation(x),
        }
    }
}

impl SafeController {
    /// Input minimizing the largest row violation at `x`. Only used when
    /// rounding has pushed the state a hair outside the reference's state
    /// projection; anything beyond `SET_TOL` is reported as an empty section.
    fn least_violation(&self, x: &[f64]) -> Result<Vec<f64>, ControllerError> {
        let nu = self.reference.dim() - self.state_dim;
        let mut normals = Vec::with_capacity(self.reference.len());
        let mut offsets = Vec::with_capacity(self.reference.len());
        for h in self.reference.halfspaces() {
            let (hx, hu) = h.normal.split_at(self.state_dim);
            let mut n = hu.to_vec();
            n.push(-1.0);
            normals.push(n);
            offsets.push(h.offset - hx.iter().zip(x).map(|(a, b)| a * b).sum::<f64>());
        }
        let rows: Vec<&[f64]> = normals.iter().map(Vec::as_slice).collect();
        let mut objective = vec![0.0; nu];
        objective.push(1.0);
        let r = solve_rows(&objective, &rows, &offsets, Sense::Minimize)?;
        if !r.is_optimal() || r.optimum > SET_TOL {
            return Err(ControllerError::EmptySection(x.to_vec()));
        }
        log::debug!(
            "state {x:?} is {:e} outside the reference; using least-violation input",
            r.optimum
        );
        Ok(r.argument[..nu].to_vec())
    }
}

/// Controller description as it appears in experiment configs.
///
/// `x0` pins the initial state of the trajectory; when absent the learner
/// samples it from the current state projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControllerSpec {
    /// Exempt from section checks; `value` is validated against the initial
    /// input box only.
    Constant {
        value: Vec<f64>,
        #[serde(default)]
        x0: Option<Vec<f64>>,
    },
    RandomAdmissible {
        #[serde(default)]
        x0: Option<Vec<f64>>,
    },
    /// Needs a reference polytope at build time.
    Safe {
        #[serde(default)]
        x0: Option<Vec<f64>>,
    },
}

impl ControllerSpec {
    pub fn x0(&self) -> Option<&[f64]> {
        match self {
            ControllerSpec::Constant { x0, .. }
            | ControllerSpec::RandomAdmissible { x0 }
            | ControllerSpec::Safe { x0 } => x0.as_deref(),
        }
    }

    pub fn is_random(&self) -> bool {
        matches!(self, ControllerSpec::RandomAdmissible { .. })
    }

    /// Checks a constant input against the initial input box.
    pub fn validate(&self, input_box: &Polytope) -> Result<(), ControllerError> {
        if let ControllerSpec::Constant { value, .. } = self {
            if value.iter().any(|v| !v.is_finite())
                || !input_box.contains_point(value, MEMBER_TOL)?
            {
                return Err(ControllerError::ConstantOutOfBounds {
                    value: value.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn build(
        &self,
        rng: ChaCha8Rng,
        reference: Option<(&Polytope, usize)>,
    ) -> Result<Box<dyn Controller>, ControllerError> {
        Ok(match self {
            ControllerSpec::Constant { value, .. } => {
                Box::new(ConstantController::new(value.clone()))
            }
            ControllerSpec::RandomAdmissible { .. } => {
                Box::new(RandomAdmissibleController::new(rng))
            }
            ControllerSpec::Safe { .. } => {
                let (z, nx) = reference.ok_or_else(|| {
                    ControllerError::Config("safe controller needs a reference polytope".into())
                })?;
                Box::new(SafeController::new(z.clone(), nx)?)
            }
        })
    }
}
