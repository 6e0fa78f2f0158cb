//! Failure-aware iterative learning of the maximal state-control invariant
//! set.
//!
//! The learner never sees the plant matrices. It drives the plant through a
//! [`StepOracle`], records trajectories, and whenever a state-input pair
//! inside the current polytope `P_{ℓ-1}` lands outside the state projection
//! `X_{ℓ-1}`, it recovers the predecessor halfspace of each violated
//! projection row by regression on recorded transitions:
//!
//! ```text
//! h_j · x(t+1) = (h_j [A B]) · z(t)   for every recorded t
//! ```
//!
//! so `p = n_x + n_u` linearly independent samples pin down `a_j = [A B]ᵀ h_jᵀ`
//! exactly. The learned row `a_j · z ≤ g_j` reuses the violated row's offset
//! and is intersected into the polytope.

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::{ControllerError, ControllerSpec, RandomAdmissibleController};
use crate::dynamics::{rollout, DynamicsError, StepOracle, Trajectory};
use crate::geometry::{GeometryError, Halfspace, Polytope, RowLabel, MEMBER_TOL};
use crate::invariance::{state_projection, InvarianceError};

/// Relative singular-value threshold for accepting a regressor window.
pub const RANK_TOL: f64 = 1e-8;
/// Largest acceptable residual of the interpolating solve.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Two learned rows closer than this (normalized, componentwise) are the same.
pub const DUPLICATE_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FailError {
    #[error("archive cannot reach rank {needed} (best {reached})")]
    InsufficientExcitation { needed: usize, reached: usize },
    #[error("regression residual {0:e} too large; data are not from a noiseless LTI plant")]
    ResidualTooLarge(f64),
    #[error("learned row does not exclude the failing pair (margin {0:e})")]
    FailureNotExcluded(f64),
    #[error("learning configuration invalid: {0}")]
    Config(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Invariance(#[from] InvarianceError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// A projection row `row·x ≤ offset` exceeded by a recorded next state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolatedRow {
    pub index: usize,
    pub row: Halfspace,
}

/// One-step failing pair: `z ∈ P_{ℓ-1}` but `x_next ∉ X_{ℓ-1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    /// Number of refinements made before this event was detected.
    pub iteration: usize,
    pub trajectory: usize,
    pub step: usize,
    pub z: Vec<f64>,
    pub x_next: Vec<f64>,
    pub violated_rows: Vec<ViolatedRow>,
}

/// `p × p` regression system `Z a = s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressorWindow {
    pub regressors: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    /// `(trajectory id, step)` of each regressor row.
    pub source_indices: Vec<(usize, usize)>,
}

/// A trajectory in the learner's archive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchivedTrajectory {
    pub id: usize,
    pub controller: String,
    pub trajectory: Trajectory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedRow {
    /// Index `ℓ` of the polytope this row created.
    pub iteration: usize,
    /// Normalized halfspace added to the polytope.
    pub halfspace: Halfspace,
    /// Regression estimate before normalization.
    pub raw_normal: Vec<f64>,
    /// Projection row whose predecessor this is.
    pub source_row: ViolatedRow,
    pub event: FailureEvent,
    pub window: RegressorWindow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub rollouts: usize,
    pub horizon: usize,
    pub violations: usize,
    /// `(rollout index, step of exit)` for each violation.
    pub first_exit_steps: Vec<(usize, usize)>,
    pub passed: bool,
    /// Random testing only shows the absence of observed exits.
    pub heuristic: bool,
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailConfig {
    /// Cap `L` on the number of refinements.
    pub max_iterations: usize,
    /// Trajectory length `T`.
    pub horizon: usize,
    /// Controller per trajectory; the last entry repeats.
    pub schedule: Vec<ControllerSpec>,
    /// Random rollouts that must all stay inside before the learner stops.
    pub certification_rollouts: usize,
    /// Cap on trajectories used for learning.
    pub max_trajectories: usize,
    pub seed: u64,
}

impl FailConfig {
    /// Constant `u_min`, constant `u_max` (both from the origin), then random
    /// admissible inputs.
    pub fn constant_then_random(
        u_min: Vec<f64>,
        u_max: Vec<f64>,
        state_dim: usize,
        seed: u64,
    ) -> Self {
        let origin = vec![0.0; state_dim];
        Self {
            max_iterations: 20,
            horizon: 15,
            schedule: vec![
                ControllerSpec::Constant {
                    value: u_min,
                    x0: Some(origin.clone()),
                },
                ControllerSpec::Constant {
                    value: u_max,
                    x0: Some(origin),
                },
                ControllerSpec::RandomAdmissible { x0: None },
            ],
            certification_rollouts: 1200,
            max_trajectories: 500,
            seed,
        }
    }
}

/// Full record of a learning run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnState {
    pub polytopes: Vec<Polytope>,
    pub projections: Vec<Polytope>,
    pub learned: Vec<LearnedRow>,
    pub trajectories: Vec<ArchivedTrajectory>,
    pub certifications: Vec<CertificationReport>,
    pub duplicate_skips: usize,
    /// Violated rows left for later because the archive was not yet rich
    /// enough to identify their pullback.
    pub deferred_rows: usize,
    pub certified: bool,
    pub seed: u64,
    #[serde(skip)]
    state_dim: usize,
}

impl LearnState {
    pub fn new(p0: Polytope, state_dim: usize, seed: u64) -> Result<Self, FailError> {
        let x0 = state_projection(&p0, state_dim)?;
        Ok(Self {
            polytopes: vec![p0],
            projections: vec![x0],
            learned: Vec::new(),
            trajectories: Vec::new(),
            certifications: Vec::new(),
            duplicate_skips: 0,
            deferred_rows: 0,
            certified: false,
            seed,
            state_dim,
        })
    }

    pub fn current(&self) -> &Polytope {
        self.polytopes.last().expect("at least P_0")
    }

    pub fn current_projection(&self) -> &Polytope {
        self.projections.last().expect("at least X_0")
    }

    /// Number of refinements `ℓ` made so far.
    pub fn iterations(&self) -> usize {
        self.polytopes.len() - 1
    }

    /// Trajectories that produced at least one learned row.
    pub fn failing_trajectory_count(&self) -> usize {
        let mut ids: Vec<usize> = self.learned.iter().map(|l| l.event.trajectory).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    pub fn last_certification(&self) -> Option<&CertificationReport> {
        self.certifications.last()
    }
}

/// Events for every step whose pair lies in `p_prev` and whose successor
/// violates a row of `x_prev` by more than the membership tolerance.
pub fn detect_failures(
    traj: &Trajectory,
    trajectory_id: usize,
    iteration: usize,
    p_prev: &Polytope,
    x_prev: &Polytope,
) -> Result<Vec<FailureEvent>, FailError> {
    let mut out = Vec::new();
    for s in &traj.samples {
        let z = s.z();
        if !p_prev.contains_point(&z, MEMBER_TOL)? {
            continue;
        }
        let violated_rows: Vec<ViolatedRow> = x_prev
            .halfspaces()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.residual(&s.x_next) > MEMBER_TOL)
            .map(|(index, r)| ViolatedRow {
                index,
                row: r.clone(),
            })
            .collect();
        if !violated_rows.is_empty() {
            out.push(FailureEvent {
                iteration,
                trajectory: trajectory_id,
                step: s.k,
                z,
                x_next: s.x_next.clone(),
                violated_rows,
            });
        }
    }
    Ok(out)
}

fn accepts_rank(rows: &[Vec<f64>]) -> bool {
    let p = rows[0].len();
    let m = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
    let sv = m.svd(false, false).singular_values;
    let (smin, smax) = (sv.min(), sv.max());
    smax > 0.0 && smin > RANK_TOL * smax
}

/// Greedy window: walks the archive from the newest trajectory and newest
/// sample backwards, keeping each sample that raises the numerical rank,
/// until `p` samples are held.
pub fn build_window(
    archive: &[ArchivedTrajectory],
    row: &Halfspace,
    p: usize,
) -> Result<RegressorWindow, FailError> {
    let mut regressors: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut targets = Vec::with_capacity(p);
    let mut source_indices = Vec::with_capacity(p);
    'outer: for t in archive.iter().rev() {
        for s in t.trajectory.samples.iter().rev() {
            let z = s.z();
            if z.len() != p {
                return Err(FailError::Config(format!(
                    "sample of length {} in a window of size {p}",
                    z.len()
                )));
            }
            regressors.push(z);
            if accepts_rank(&regressors) {
                targets.push(row.value(&s.x_next));
                source_indices.push((t.id, s.k));
                if regressors.len() == p {
                    break 'outer;
                }
            } else {
                regressors.pop();
            }
        }
    }
    if regressors.len() < p {
        return Err(FailError::InsufficientExcitation {
            needed: p,
            reached: regressors.len(),
        });
    }
    Ok(RegressorWindow {
        regressors,
        targets,
        source_indices,
    })
}

/// Solves `Z a = s` by column-pivoted QR.
pub fn learn_normal(w: &RegressorWindow) -> Result<Vec<f64>, FailError> {
    let p = w.targets.len();
    if p == 0 || w.regressors.len() != p || w.regressors.iter().any(|r| r.len() != p) {
        return Err(FailError::Config("regressor window is not square".into()));
    }
    let z = DMatrix::from_fn(p, p, |i, j| w.regressors[i][j]);
    let s = DVector::from_column_slice(&w.targets);
    let a = z
        .clone()
        .col_piv_qr()
        .solve(&s)
        .ok_or(FailError::InsufficientExcitation {
            needed: p,
            reached: p - 1,
        })?;
    let residual = (&z * &a - &s).norm();
    if residual > RESIDUAL_TOL * (1.0 + s.norm()) {
        return Err(FailError::ResidualTooLarge(residual));
    }
    Ok(a.iter().copied().collect())
}

/// Intersects the current polytope with `learned·z ≤ source.row.offset`.
///
/// Returns `false`, leaving the state untouched, when the normalized row
/// already appears in the polytope. Otherwise appends `P_ℓ` and `X_ℓ` and
/// checks that the event's pair is cut off.
pub fn refine(
    state: &mut LearnState,
    event: &FailureEvent,
    source: &ViolatedRow,
    learned: Vec<f64>,
    window: RegressorWindow,
) -> Result<bool, FailError> {
    let h = Halfspace::new(learned.clone(), source.row.offset).normalize()?;
    if state.current().find_row(&h, DUPLICATE_TOL).is_some() {
        log::info!("learned row {:?} already present, skipping", h);
        state.duplicate_skips += 1;
        return Ok(false);
    }
    let margin = h.residual(&event.z);
    if margin.is_nan() || margin <= 0.0 {
        return Err(FailError::FailureNotExcluded(margin));
    }
    let iteration = state.iterations() + 1;
    let next = state
        .current()
        .intersect(&h, Some(RowLabel::Learned { iteration }))?;
    let projection = state_projection(&next, state.state_dim)?;
    log::debug!("ℓ = {iteration}: learned {:?}", h);
    state.polytopes.push(next);
    state.projections.push(projection);
    state.learned.push(LearnedRow {
        iteration,
        halfspace: h,
        raw_normal: learned,
        source_row: source.clone(),
        event: event.clone(),
        window,
    });
    Ok(true)
}

/// Re-examines one trajectory against successively refined polytopes until
/// it exposes no further failures. Returns the number of rows added.
fn learn_from_trajectory(
    state: &mut LearnState,
    traj_id: usize,
    p: usize,
    max_iterations: usize,
) -> Result<usize, FailError> {
    let mut added = 0;
    loop {
        let traj = &state
            .trajectories
            .iter()
            .rev()
            .find(|t| t.id == traj_id)
            .expect("trajectory archived before learning")
            .trajectory;
        let events = detect_failures(
            traj,
            traj_id,
            state.iterations(),
            state.current(),
            state.current_projection(),
        )?;
        if events.is_empty() {
            return Ok(added);
        }
        let mut added_this_pass = 0;
        for ev in &events {
            for vr in &ev.violated_rows {
                if state.iterations() >= max_iterations {
                    return Ok(added);
                }
                let window = match build_window(&state.trajectories, &vr.row, p) {
                    Ok(w) => w,
                    Err(FailError::InsufficientExcitation { reached, .. }) => {
                        log::debug!("deferring row {}: window rank {reached} of {p}", vr.index);
                        state.deferred_rows += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let a = learn_normal(&window)?;
                if refine(state, ev, vr, a, window)? {
                    added += 1;
                    added_this_pass += 1;
                }
            }
        }
        if added_this_pass == 0 {
            return Ok(added);
        }
    }
}

/// One random-admissible rollout from a uniform start in `Π_x(P)`.
fn random_rollout<O: StepOracle + ?Sized>(
    oracle: &O,
    p: &Polytope,
    x: &Polytope,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory, FailError> {
    let x0 = x.sample_uniform(rng)?;
    let mut c = RandomAdmissibleController::new(ChaCha8Rng::seed_from_u64(rng.next_u64()));
    Ok(rollout(oracle, &mut c, &x0, horizon, x, p)?)
}

fn rollout_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

/// Outcome of one rollout during certification: `Ok` with the trajectory,
/// or the step at which the admissible input set was empty.
fn certification_rollout<O: StepOracle + ?Sized>(
    oracle: &O,
    p: &Polytope,
    x: &Polytope,
    horizon: usize,
    seed: u64,
    index: usize,
) -> Result<Result<Trajectory, usize>, FailError> {
    let mut rng = rollout_rng(seed, index);
    match random_rollout(oracle, p, x, horizon, &mut rng) {
        Ok(t) => Ok(Ok(t)),
        Err(FailError::Dynamics(DynamicsError::ControllerInfeasible { step, .. })) => Ok(Err(step)),
        Err(e) => Err(e),
    }
}

/// Runs `n_rollouts` random-admissible rollouts from uniform initial states
/// in `Π_x(P)` and counts exits from `Π_x(P)`. An empty input section along
/// the way counts as a violation.
pub fn certify<O: StepOracle + ?Sized>(
    oracle: &O,
    p: &Polytope,
    n_rollouts: usize,
    horizon: usize,
    seed: u64,
) -> Result<CertificationReport, FailError> {
    let x = state_projection(p, oracle.state_dim())?;
    let mut report = CertificationReport {
        rollouts: n_rollouts,
        horizon,
        violations: 0,
        first_exit_steps: Vec::new(),
        passed: false,
        heuristic: true,
        trajectories: Vec::with_capacity(n_rollouts),
    };
    for i in 0..n_rollouts {
        match certification_rollout(oracle, p, &x, horizon, seed, i)? {
            Ok(t) => {
                if t.exited() {
                    report.violations += 1;
                    report.first_exit_steps.push((i, t.len() - 1));
                }
                report.trajectories.push(t);
            }
            Err(step) => {
                report.violations += 1;
                report.first_exit_steps.push((i, step));
            }
        }
    }
    report.passed = report.violations == 0;
    Ok(report)
}

/// Runs the learning loop from `p0`.
///
/// Each schedule entry yields one trajectory. Constant and safe entries are
/// rolled out once. A random-admissible entry doubles as the termination
/// test: up to `certification_rollouts` rollouts are drawn until one exits
/// the current projection; that one is learned from, and if none exits the
/// polytope is reported certified and the loop stops. The loop also stops
/// after `max_iterations` refinements or `max_trajectories` trajectories.
pub fn run_fail<O: StepOracle + ?Sized>(
    oracle: &O,
    p0: &Polytope,
    config: &FailConfig,
) -> Result<LearnState, FailError> {
    let (nx, nu) = (oracle.state_dim(), oracle.input_dim());
    let p = nx + nu;
    if p0.dim() != p {
        return Err(FailError::Config(format!(
            "P_0 has dimension {}, oracle needs {p}",
            p0.dim()
        )));
    }
    if config.schedule.is_empty() {
        return Err(FailError::Config("empty controller schedule".into()));
    }
    if let Err(e) = p0.bounding_box() {
        return Err(FailError::Config(format!(
            "P_0 must be bounded and nonempty: {e}"
        )));
    }
    let p0 = p0.remove_redundancy()?;
    let mut state = LearnState::new(p0, nx, config.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cert_round = 0usize;

    while state.iterations() < config.max_iterations
        && state.trajectories.len() < config.max_trajectories
    {
        let id = state.trajectories.len();
        let spec = &config.schedule[id.min(config.schedule.len() - 1)];
        let (pl, xl) = (state.current().clone(), state.current_projection().clone());

        let traj = if spec.is_random() && spec.x0().is_none() {
            let seed = rng.next_u64();
            cert_round += 1;
            let mut report = CertificationReport {
                rollouts: 0,
                horizon: config.horizon,
                violations: 0,
                first_exit_steps: Vec::new(),
                passed: false,
                heuristic: true,
                trajectories: Vec::new(),
            };
            let mut failing = None;
            for i in 0..config.certification_rollouts {
                report.rollouts += 1;
                match certification_rollout(oracle, &pl, &xl, config.horizon, seed, i)? {
                    Ok(t) if t.exited() => {
                        report.violations = 1;
                        report.first_exit_steps.push((i, t.len() - 1));
                        failing = Some(t);
                        break;
                    }
                    Ok(t) => report.trajectories.push(t),
                    Err(step) => {
                        report.violations = 1;
                        report.first_exit_steps.push((i, step));
                        log::warn!("empty input section during rollout {i} of round {cert_round}");
                        break;
                    }
                }
            }
            report.passed = report.violations == 0;
            let passed = report.passed;
            if failing.is_some() {
                report.trajectories.clear();
            }
            state.certifications.push(report);
            if passed {
                state.certified = true;
                break;
            }
            match failing {
                Some(t) => t,
                None => continue,
            }
        } else {
            let x0 = match spec.x0() {
                Some(x0) => x0.to_vec(),
                None => xl.sample_uniform(&mut rng)?,
            };
            let ctrl_rng = ChaCha8Rng::seed_from_u64(rng.next_u64());
            let mut controller = spec.build(ctrl_rng, Some((&pl, nx)))?;
            rollout(oracle, controller.as_mut(), &x0, config.horizon, &xl, &pl)?
        };

        state.trajectories.push(ArchivedTrajectory {
            id,
            controller: controller_name(spec).into(),
            trajectory: traj,
        });
        let added = learn_from_trajectory(&mut state, id, p, config.max_iterations)?;
        log::info!(
            "trajectory {id} ({}): {added} rows learned, ℓ = {}",
            controller_name(spec),
            state.iterations()
        );
    }

    if !state.certified {
        let seed = rng.next_u64();
        let report = certify(
            oracle,
            state.current(),
            config.certification_rollouts,
            config.horizon,
            seed,
        )?;
        state.certified = report.passed;
        state.certifications.push(report);
        if !state.certified {
            log::warn!(
                "stopped after {} refinements without certification",
                state.iterations()
            );
        }
    }
    Ok(state)
}

fn controller_name(spec: &ControllerSpec) -> &'static str {
    match spec {
        ControllerSpec::Constant { .. } => "constant",
        ControllerSpec::RandomAdmissible { .. } => "random-admissible",
        ControllerSpec::Safe { .. } => "safe",
    }
}
