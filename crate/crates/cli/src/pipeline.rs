//! The subcommands. Ground truth uses the plant matrices; the learner is
//! handed only the plant's step oracle.

use std::fs;
use std::path::Path;

use invset::fail::{certify, run_fail, CertificationReport, LearnState};
use invset::{compute_mci, compute_msci, hausdorff, state_projection, Polytope, RecursionTrace};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::emit::Emitter;
use crate::error::CliError;
use crate::report::{CertificationSummary, ValidationReport, SCHEMA_VERSION};

#[derive(Debug, Serialize)]
pub struct RecursionSummary {
    pub rows: usize,
    pub iterations: usize,
}

impl From<&RecursionTrace> for RecursionSummary {
    fn from(t: &RecursionTrace) -> Self {
        Self {
            rows: t.fixpoint.len(),
            iterations: t.iterations_to_fixpoint,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct LearnSummary {
    pub learned_rows: usize,
    pub iterations: usize,
    pub failing_trajectories: usize,
    pub trajectories: usize,
    pub duplicate_skips: usize,
    pub deferred_rows: usize,
    pub certified: bool,
}

impl From<&LearnState> for LearnSummary {
    fn from(s: &LearnState) -> Self {
        Self {
            learned_rows: s.learned.len(),
            iterations: s.iterations(),
            failing_trajectories: s.failing_trajectory_count(),
            trajectories: s.trajectories.len(),
            duplicate_skips: s.duplicate_skips,
            deferred_rows: s.deferred_rows,
            certified: s.certified,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Comparison {
    pub p_contains_q: bool,
    pub q_contains_p: bool,
    pub equal: bool,
    /// Absent when the sets are too high-dimensional for vertex enumeration.
    pub hausdorff: Option<f64>,
    pub tolerance: f64,
}

pub fn read_polytope(path: &Path) -> Result<Polytope, CliError> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    Polytope::from_json(&text).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn msci(cfg: &ExperimentConfig, out: &Emitter) -> Result<RecursionTrace, CliError> {
    let trace = compute_msci(&cfg.system, &cfg.joint)?;
    out.polytope_series("msci", &trace.iterates, Some(cfg.system.state_dim()))?;
    out.json("msci_trace.json", &trace)?;
    Ok(trace)
}

pub fn mci(cfg: &ExperimentConfig, out: &Emitter) -> Result<RecursionTrace, CliError> {
    let trace = compute_mci(&cfg.system, &cfg.states, &cfg.inputs)?;
    out.polytope_series("mci", &trace.iterates, None)?;
    out.json("mci_trace.json", &trace)?;
    Ok(trace)
}

pub fn fail_learn(cfg: &ExperimentConfig, out: &Emitter) -> Result<LearnState, CliError> {
    let oracle = cfg.system.oracle();
    let state = run_fail(&oracle, &cfg.joint, &cfg.fail)?;
    let (nx, nu) = (cfg.system.state_dim(), cfg.system.input_dim());
    out.polytope_series("fail", &state.polytopes, Some(nx))?;
    out.trajectories(
        "fail",
        nx,
        nu,
        state.trajectories.iter().map(|t| (t.id, &t.trajectory)),
    )?;
    out.json("fail_state.json", &state)?;
    Ok(state)
}

pub fn certify_polytope(
    cfg: &ExperimentConfig,
    p: &Polytope,
    out: &Emitter,
) -> Result<CertificationReport, CliError> {
    let oracle = cfg.system.oracle();
    let report = certify(
        &oracle,
        p,
        cfg.fail.certification_rollouts,
        cfg.fail.horizon,
        cfg.seed,
    )?;
    let (nx, nu) = (cfg.system.state_dim(), cfg.system.input_dim());
    out.trajectories(
        "certification",
        nx,
        nu,
        report.trajectories.iter().enumerate(),
    )?;
    out.json("certification.json", &report)?;
    Ok(report)
}

pub fn compare(p: &Polytope, q: &Polytope, tolerance: f64) -> Result<Comparison, CliError> {
    let p_contains_q = p.contains(q, tolerance)?;
    let q_contains_p = q.contains(p, tolerance)?;
    let hausdorff = match hausdorff(p, q) {
        Ok(d) => Some(d),
        Err(invset::geometry::GeometryError::DimensionTooHigh(_)) => None,
        Err(e) => return Err(e.into()),
    };
    Ok(Comparison {
        p_contains_q,
        q_contains_p,
        equal: p_contains_q && q_contains_p,
        hausdorff,
        tolerance,
    })
}

/// Full pipeline: ground truth (when a validation section is present), the
/// learning loop, certification of its result, and the report.
pub fn run(cfg: &ExperimentConfig, out: &Emitter) -> Result<ValidationReport, CliError> {
    let nx = cfg.system.state_dim();
    let truth = match &cfg.validation {
        Some(_) => {
            let z = msci(cfg, out)?;
            let x = mci(cfg, out)?;
            let projected = state_projection(&z.fixpoint, nx)?;
            let distance = hausdorff(&projected, &x.fixpoint)?;
            Some((z, x, distance))
        }
        None => None,
    };
    let state = fail_learn(cfg, out)?;
    let learned = state.current();
    let cert = certify_polytope(cfg, learned, out)?;

    let mut report = ValidationReport {
        schema_version: SCHEMA_VERSION,
        seed: cfg.seed,
        msci_rows: None,
        msci_iterations: None,
        mci_rows: None,
        mci_iterations: None,
        projection_hausdorff: None,
        learned_row_match_errors: None,
        fail_recovers_msci: None,
        learned_rows: state.learned.len(),
        fail_iterations: state.iterations(),
        failing_trajectory_count: state.failing_trajectory_count(),
        fail_trajectories: state.trajectories.len(),
        fail_certified: state.certified,
        certification: CertificationSummary {
            violations: cert.violations,
            rollouts: cert.rollouts,
            horizon: cert.horizon,
        },
        thresholds: None,
        pass: Default::default(),
    };
    if let (Some((z, x, distance)), Some(v)) = (&truth, &cfg.validation) {
        report.msci_rows = Some(z.fixpoint.len());
        report.msci_iterations = Some(z.iterations_to_fixpoint);
        report.mci_rows = Some(x.fixpoint.len());
        report.mci_iterations = Some(x.iterations_to_fixpoint);
        report.projection_hausdorff = Some(*distance);
        report.learned_row_match_errors = Some(
            state
                .learned
                .iter()
                .map(|l| {
                    z.fixpoint
                        .halfspaces()
                        .iter()
                        .map(|h| l.halfspace.max_abs_deviation(h))
                        .fold(f64::INFINITY, f64::min)
                })
                .collect(),
        );
        report.fail_recovers_msci = Some(learned.set_equals(&z.fixpoint, v.set_tolerance)?);
    }
    report.evaluate(cfg.validation.as_ref());
    out.json("report.json", &report)?;
    Ok(report)
}
