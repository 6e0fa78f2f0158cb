//! Experiment configuration: TOML with nested tables.
//!
//! ```toml
//! seed = 2024                     # mandatory
//!
//! [system]                        # simulator and ground truth only
//! a = [[1.0, 1.0], [0.0, 1.0]]
//! b = [[0.0], [1.0]]
//!
//! [constraints]
//! state_lower = [-15.0, -10.0]
//! state_upper = [15.0, 10.0]
//! input_lower = [-5.0]
//! input_upper = [5.0]
//!
//! [fail]                          # optional; defaults shown
//! max_iterations = 20
//! horizon = 15
//! certification_rollouts = 1200
//! max_trajectories = 500
//! [[fail.schedule]]               # default: constant lower, constant upper, random
//! kind = "constant"
//! value = [-5.0]
//! x0 = [0.0, 0.0]
//!
//! [validation]                    # optional; omit for a model-blind run
//! msci_rows = 14
//!
//! [output]                        # optional; defaults shown
//! dir = "out"
//! polytopes = true
//! vertices = true
//! trajectories = true
//! certification = true
//! ```
//!
//! Constant controllers in the schedule are exempt from section checks: they
//! exist to drive the plant into failures, so their value is checked against
//! the input box only.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use invset::dynamics::{make_joint_constraints, LtiSystem};
use invset::{ControllerSpec, FailConfig, Polytope};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: cannot read config: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}:{line}:{column}: {field}: {message}")]
    Invalid {
        path: PathBuf,
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("{path}: {field}: {message}")]
    Field {
        path: PathBuf,
        field: String,
        message: String,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: u64,
    system: RawSystem,
    constraints: RawConstraints,
    #[serde(default)]
    fail: RawFail,
    validation: Option<Validation>,
    #[serde(default)]
    output: Output,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    a: Spanned<Vec<Vec<f64>>>,
    b: Spanned<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraints {
    state_lower: Spanned<Vec<f64>>,
    state_upper: Spanned<Vec<f64>>,
    input_lower: Spanned<Vec<f64>>,
    input_upper: Spanned<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFail {
    max_iterations: Option<Spanned<usize>>,
    horizon: Option<Spanned<usize>>,
    certification_rollouts: Option<Spanned<usize>>,
    max_trajectories: Option<Spanned<usize>>,
    schedule: Option<Vec<Spanned<ControllerSpec>>>,
}

/// Ground-truth expectations. Every threshold that decides a pass flag lives
/// here and is echoed into the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Validation {
    pub msci_rows: Option<usize>,
    pub msci_iterations: Option<usize>,
    pub mci_rows: Option<usize>,
    pub mci_iterations: Option<usize>,
    /// Allowed distance between expected and computed iteration counts.
    #[serde(default = "default_iteration_slack")]
    pub iteration_slack: usize,
    #[serde(default = "default_hausdorff_tolerance")]
    pub hausdorff_tolerance: f64,
    /// Componentwise tolerance when matching a learned row to a ground-truth row.
    #[serde(default = "default_row_match_tolerance")]
    pub row_match_tolerance: f64,
    /// Tolerance for the final set equality between the learned polytope and
    /// the ground truth.
    #[serde(default = "default_set_tolerance")]
    pub set_tolerance: f64,
    pub learned_rows: Option<usize>,
    pub max_fail_iterations: Option<usize>,
    pub max_failing_trajectories: Option<usize>,
}

fn default_iteration_slack() -> usize {
    1
}

fn default_hausdorff_tolerance() -> f64 {
    1e-6
}

fn default_row_match_tolerance() -> f64 {
    1e-3
}

fn default_set_tolerance() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub dir: PathBuf,
    pub polytopes: bool,
    pub vertices: bool,
    pub trajectories: bool,
    pub certification: bool,
}

impl Default for Output {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            polytopes: true,
            vertices: true,
            trajectories: true,
            certification: true,
        }
    }
}

/// A validated experiment.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub system: LtiSystem,
    pub states: Polytope,
    pub inputs: Polytope,
    pub joint: Polytope,
    pub fail: FailConfig,
    pub validation: Option<Validation>,
    pub output: Output,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Parses and validates `text`; `path` only labels diagnostics.
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string().trim_end().to_string(),
        })?;
        Validator { text, path }.validate(raw)
    }

    /// Replaces the seed everywhere it is used.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.fail.seed = seed;
        self
    }

    pub fn with_rollouts(mut self, n: usize) -> Self {
        self.fail.certification_rollouts = n;
        self
    }

    pub fn with_output_dir(mut self, dir: PathBuf) -> Self {
        self.output.dir = dir;
        self
    }
}

struct Validator<'a> {
    text: &'a str,
    path: &'a Path,
}

impl Validator<'_> {
    fn error(&self, span: Range<usize>, field: &str, message: impl Into<String>) -> ConfigError {
        let before = &self.text[..span.start.min(self.text.len())];
        let line = before.matches('\n').count() + 1;
        let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        ConfigError::Invalid {
            path: self.path.to_path_buf(),
            line,
            column,
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn field(&self, field: &str, message: impl Into<String>) -> ConfigError {
        ConfigError::Field {
            path: self.path.to_path_buf(),
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn finite_rows(&self, m: &Spanned<Vec<Vec<f64>>>, field: &str) -> Result<(), ConfigError> {
        if m.get_ref().is_empty() {
            return Err(self.error(m.span(), field, "matrix has no rows"));
        }
        let ncols = m.get_ref()[0].len();
        if ncols == 0 {
            return Err(self.error(m.span(), field, "matrix has no columns"));
        }
        for (i, row) in m.get_ref().iter().enumerate() {
            if row.len() != ncols {
                return Err(self.error(
                    m.span(),
                    field,
                    format!("row {i} has {} entries, row 0 has {ncols}", row.len()),
                ));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(self.error(m.span(), field, format!("row {i} has a non-finite entry")));
            }
        }
        Ok(())
    }

    fn bounds(
        &self,
        lower: &Spanned<Vec<f64>>,
        upper: &Spanned<Vec<f64>>,
        dim: usize,
        what: &str,
    ) -> Result<Polytope, ConfigError> {
        for (v, name) in [(lower, "lower"), (upper, "upper")] {
            let field = format!("constraints.{what}_{name}");
            if v.get_ref().len() != dim {
                return Err(self.error(
                    v.span(),
                    &field,
                    format!("expected {dim} entries, found {}", v.get_ref().len()),
                ));
            }
            if v.get_ref().iter().any(|x| !x.is_finite()) {
                return Err(self.error(v.span(), &field, "bounds must be finite"));
            }
        }
        if let Some(i) = (0..dim).find(|&i| lower.get_ref()[i] >= upper.get_ref()[i]) {
            return Err(self.error(
                upper.span(),
                &format!("constraints.{what}_upper"),
                format!(
                    "entry {i}: upper bound {} is not above lower bound {}",
                    upper.get_ref()[i],
                    lower.get_ref()[i]
                ),
            ));
        }
        Polytope::from_box(lower.get_ref(), upper.get_ref()).map_err(|e| {
            self.error(
                lower.span(),
                &format!("constraints.{what}_lower"),
                e.to_string(),
            )
        })
    }

    fn validate(&self, raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
        let RawConfig {
            seed,
            system,
            constraints,
            fail,
            validation,
            output,
        } = raw;

        self.finite_rows(&system.a, "system.a")?;
        self.finite_rows(&system.b, "system.b")?;
        let nx = system.a.get_ref().len();
        if system.a.get_ref()[0].len() != nx {
            return Err(self.error(
                system.a.span(),
                "system.a",
                format!(
                    "A must be square, found {nx}×{}",
                    system.a.get_ref()[0].len()
                ),
            ));
        }
        if system.b.get_ref().len() != nx {
            return Err(self.error(
                system.b.span(),
                "system.b",
                format!(
                    "B must have {nx} rows to match A, found {}",
                    system.b.get_ref().len()
                ),
            ));
        }
        let nu = system.b.get_ref()[0].len();
        let sys = LtiSystem::from_rows(system.a.get_ref(), system.b.get_ref())
            .map_err(|e| self.error(system.a.span(), "system", e.to_string()))?;

        let states = self.bounds(
            &constraints.state_lower,
            &constraints.state_upper,
            nx,
            "state",
        )?;
        let inputs = self.bounds(
            &constraints.input_lower,
            &constraints.input_upper,
            nu,
            "input",
        )?;
        let joint = make_joint_constraints(&states, &inputs).map_err(|e| {
            self.error(constraints.state_lower.span(), "constraints", e.to_string())
        })?;

        let mut cfg = FailConfig::constant_then_random(
            constraints.input_lower.get_ref().clone(),
            constraints.input_upper.get_ref().clone(),
            nx,
            seed,
        );
        let positive = |v: &Option<Spanned<usize>>,
                        field: &str,
                        target: &mut usize|
         -> Result<(), ConfigError> {
            if let Some(v) = v {
                if *v.get_ref() == 0 {
                    return Err(self.error(v.span(), field, "must be at least 1"));
                }
                *target = *v.get_ref();
            }
            Ok(())
        };
        if let Some(l) = &fail.max_iterations {
            cfg.max_iterations = *l.get_ref();
        }
        positive(&fail.horizon, "fail.horizon", &mut cfg.horizon)?;
        positive(
            &fail.certification_rollouts,
            "fail.certification_rollouts",
            &mut cfg.certification_rollouts,
        )?;
        positive(
            &fail.max_trajectories,
            "fail.max_trajectories",
            &mut cfg.max_trajectories,
        )?;
        if let Some(schedule) = fail.schedule {
            if schedule.is_empty() {
                return Err(self.field("fail.schedule", "schedule is empty"));
            }
            for (i, entry) in schedule.iter().enumerate() {
                let field = format!("fail.schedule[{i}]");
                let spec = entry.get_ref();
                spec.validate(&inputs)
                    .map_err(|e| self.error(entry.span(), &field, e.to_string()))?;
                if let ControllerSpec::Constant { value, .. } = spec {
                    if value.len() != nu {
                        return Err(self.error(
                            entry.span(),
                            &field,
                            format!("value has {} entries, input dimension is {nu}", value.len()),
                        ));
                    }
                }
                if let Some(x0) = spec.x0() {
                    if x0.len() != nx {
                        return Err(self.error(
                            entry.span(),
                            &field,
                            format!("x0 has {} entries, state dimension is {nx}", x0.len()),
                        ));
                    }
                    if !states.contains_point(x0, 1e-9).unwrap_or(false) {
                        return Err(self.error(
                            entry.span(),
                            &field,
                            "x0 lies outside the state constraints",
                        ));
                    }
                }
            }
            cfg.schedule = schedule.into_iter().map(Spanned::into_inner).collect();
        }

        if let Some(v) = &validation {
            for (t, name) in [
                (v.hausdorff_tolerance, "hausdorff_tolerance"),
                (v.row_match_tolerance, "row_match_tolerance"),
                (v.set_tolerance, "set_tolerance"),
            ] {
                if !(t.is_finite() && t > 0.0) {
                    return Err(self.field(
                        &format!("validation.{name}"),
                        format!("tolerance must be positive, found {t}"),
                    ));
                }
            }
        }

        Ok(ExperimentConfig {
            seed,
            system: sys,
            states,
            inputs,
            joint,
            fail: cfg,
            validation,
            output,
        })
    }
}
