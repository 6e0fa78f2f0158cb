//! Fixtures shared by the benchmarks.

use invset::dynamics::{make_joint_constraints, LtiSystem};
use invset::{FailConfig, Polytope};

/// The double integrator with `|x1| ≤ 15`, `|x2| ≤ 10`, `|u| ≤ 5`.
pub struct DoubleIntegrator {
    pub system: LtiSystem,
    pub states: Polytope,
    pub inputs: Polytope,
    pub joint: Polytope,
}

impl DoubleIntegrator {
    pub fn new() -> Self {
        let states = Polytope::from_box(&[-15.0, -10.0], &[15.0, 10.0]).expect("box");
        let inputs = Polytope::from_box(&[-5.0], &[5.0]).expect("box");
        let joint = make_joint_constraints(&states, &inputs).expect("joint box");
        Self {
            system: LtiSystem::double_integrator(),
            states,
            inputs,
            joint,
        }
    }

    pub fn fail_config(&self, seed: u64) -> FailConfig {
        FailConfig::constant_then_random(vec![-5.0], vec![5.0], 2, seed)
    }
}

impl Default for DoubleIntegrator {
    fn default() -> Self {
        Self::new()
    }
}
