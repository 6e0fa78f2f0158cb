#![allow(dead_code)]

use invset::dynamics::{make_joint_constraints, LtiSystem};
use invset::geometry::{lp::solve_rows, LpStatus, Polytope, Sense};
use invset::invariance::{compute_msci_capped, pre_state, pre_z, state_projection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Problem {
    pub sys: LtiSystem,
    pub states: Polytope,
    pub inputs: Polytope,
    pub joint: Polytope,
    pub msci: Polytope,
    pub mci: Polytope,
    pub spectral_radius: f64,
}

pub fn double_integrator() -> Problem {
    let sys = LtiSystem::double_integrator();
    let states = Polytope::from_box(&[-15.0, -10.0], &[15.0, 10.0]).unwrap();
    let inputs = Polytope::from_box(&[-5.0], &[5.0]).unwrap();
    finish(sys, states, inputs).unwrap()
}

fn finish(sys: LtiSystem, states: Polytope, inputs: Polytope) -> Option<Problem> {
    let joint = make_joint_constraints(&states, &inputs).ok()?;
    let msci = compute_msci_capped(&sys, &joint, 40).ok()?.fixpoint;
    let (_, r) = msci.chebyshev_center().ok()?;
    if r < 1e-2 || msci.len() > 40 {
        return None;
    }
    // Keep only finitely determined sets: a fixpoint the recursion reached
    // only up to the set tolerance is not invariant to working precision.
    if !pre_z(&sys, &msci)
        .ok()?
        .polytope
        .contains(&msci, 1e-9)
        .ok()?
    {
        return None;
    }
    let mci = state_projection(&msci, sys.state_dim()).ok()?;
    let spectral_radius = sys
        .a()
        .complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max);
    Some(Problem {
        sys,
        states,
        inputs,
        joint,
        msci,
        mci,
        spectral_radius,
    })
}

/// Seeded random two-state, one-input problems whose MSCI is finitely
/// determined with a nonempty interior. Candidates that fail are skipped
/// deterministically.
pub fn random_problems(count: usize, seed: u64) -> Vec<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let a: Vec<Vec<f64>> = vec![
            vec![rng.random_range(-1.3..1.3), rng.random_range(-1.3..1.3)],
            vec![rng.random_range(-1.3..1.3), rng.random_range(-1.3..1.3)],
        ];
        let b: Vec<Vec<f64>> = vec![
            vec![rng.random_range(-1.0..1.0)],
            vec![rng.random_range(-1.0..1.0)],
        ];
        if b[0][0].abs() + b[1][0].abs() < 0.3 {
            continue;
        }
        let sys = LtiSystem::from_rows(&a, &b).unwrap();
        let x1 = rng.random_range(3.0..15.0);
        let x2 = rng.random_range(3.0..15.0);
        let u = rng.random_range(1.0..5.0);
        let states = Polytope::from_box(&[-x1, -x2], &[x1, x2]).unwrap();
        let inputs = Polytope::from_box(&[-u], &[u]).unwrap();
        if let Some(p) = finish(sys, states, inputs) {
            out.push(p);
        }
    }
    out
}

/// Whether some input sequence in `inputs` keeps the plant inside `states`
/// for `horizon` steps starting from `x1`. Solved as one LP over the stacked
/// inputs, so it quantifies over all continuous input sequences.
pub fn survives(
    sys: &LtiSystem,
    x1: &[f64],
    states: &Polytope,
    inputs: &Polytope,
    horizon: usize,
) -> bool {
    if !states.contains_point(x1, 1e-9).unwrap() {
        return false;
    }
    let (nx, nu) = (sys.state_dim(), sys.input_dim());
    let nv = horizon * nu;
    let a = sys.a();
    let b = sys.b();
    // Affine state map x_{k+1} = free_k + G_k v.
    let mut free = nalgebra::DVector::from_column_slice(x1);
    let mut gain = nalgebra::DMatrix::<f64>::zeros(nx, nv);
    let mut normals: Vec<Vec<f64>> = Vec::new();
    let mut offsets: Vec<f64> = Vec::new();
    for k in 0..horizon {
        free = a * &free;
        gain = a * &gain;
        for i in 0..nx {
            for j in 0..nu {
                gain[(i, k * nu + j)] += b[(i, j)];
            }
        }
        for r in states.halfspaces() {
            let h = nalgebra::DVector::from_column_slice(&r.normal);
            let row = gain.transpose() * &h;
            normals.push(row.iter().copied().collect());
            offsets.push(r.offset - h.dot(&free));
        }
        for r in inputs.halfspaces() {
            let mut row = vec![0.0; nv];
            row[k * nu..(k + 1) * nu].copy_from_slice(&r.normal);
            normals.push(row);
            offsets.push(r.offset);
        }
    }
    let refs: Vec<&[f64]> = normals.iter().map(Vec::as_slice).collect();
    let res = solve_rows(&vec![0.0; nv], &refs, &offsets, Sense::Maximize).unwrap();
    res.status != LpStatus::Infeasible
}

/// Grid oracle for the one-step predecessor: a state is in Pre(Ω) when one
/// of 101 gridded inputs steers it into Ω. Disagreements are allowed only
/// within one grid pitch of the boundary.
pub fn grid_check(sys: &LtiSystem, omega: &Polytope, inputs: &Polytope) {
    let pre = pre_state(sys, omega, inputs);
    let bbox = omega.bounding_box().unwrap();
    let (ulo, uhi) = inputs.bounding_box().unwrap()[0];
    let n = 20;
    let pitch_x = bbox
        .iter()
        .map(|(lo, hi)| (hi - lo) / (n - 1) as f64)
        .fold(0.0, f64::max);
    let pitch_u = (uhi - ulo) / 100.0;
    let bnorm = sys.b().norm();
    let pitch = pitch_x.max(bnorm * pitch_u);
    let mut disagreements = 0;
    for i in 0..n {
        for j in 0..n {
            let x = [
                bbox[0].0 + (bbox[0].1 - bbox[0].0) * i as f64 / (n - 1) as f64,
                bbox[1].0 + (bbox[1].1 - bbox[1].0) * j as f64 / (n - 1) as f64,
            ];
            let oracle = (0..=100).any(|k| {
                let u = ulo + pitch_u * k as f64;
                omega
                    .contains_point(&sys.step(&x, &[u]).unwrap(), 1e-9)
                    .unwrap()
            });
            let inside = match &pre {
                Ok(p) => p.contains_point(&x, 1e-9).unwrap(),
                Err(_) => false,
            };
            if oracle != inside {
                disagreements += 1;
                let p = pre
                    .as_ref()
                    .expect("oracle found a point in an empty predecessor");
                assert!(
                    !oracle,
                    "gridded input works at {x:?} but the predecessor excludes it"
                );
                let slack = -p.max_residual(&x);
                assert!(slack <= pitch, "{x:?} is {slack} inside, pitch {pitch}");
            }
        }
    }
    assert!(disagreements <= 40, "{disagreements} disagreements");
}
