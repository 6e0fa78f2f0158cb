mod common;

use common::{double_integrator, grid_check, random_problems, survives};
use invset::dynamics::LtiSystem;
use invset::geometry::{hausdorff, Halfspace, Polytope};
use invset::invariance::{
    compute_mci, compute_msci, is_state_control_invariant, pre_state, pre_z, state_projection,
    x_section,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn double_integrator_ground_truth() {
    let p = double_integrator();
    let msci = compute_msci(&p.sys, &p.joint).unwrap();
    assert_eq!(msci.fixpoint.len(), 14);
    assert_eq!(msci.iterations_to_fixpoint, 3);
    let mci = compute_mci(&p.sys, &p.states, &p.inputs).unwrap();
    assert_eq!(mci.fixpoint.len(), 8);
    assert_eq!(mci.iterations_to_fixpoint, 2);
    assert_eq!(mci.fixpoint.vertices().unwrap().len(), 8);

    let proj = state_projection(&msci.fixpoint, 2).unwrap();
    assert_eq!(proj.len(), 8);
    assert!(hausdorff(&proj, &mci.fixpoint).unwrap() <= 1e-6);
    for h in msci.fixpoint.halfspaces() {
        assert!((h.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn recursions_are_nested() {
    let mut problems = vec![double_integrator()];
    problems.extend(random_problems(5, 101));
    for p in &problems {
        for trace in [
            compute_msci(&p.sys, &p.joint).unwrap(),
            compute_mci(&p.sys, &p.states, &p.inputs).unwrap(),
        ] {
            for w in trace.iterates.windows(2) {
                assert!(w[0].contains(&w[1], 1e-6).unwrap());
            }
            assert_eq!(trace.iterates.last(), Some(&trace.fixpoint));
            assert_eq!(trace.iterates.len(), trace.iterations_to_fixpoint + 1);
        }
    }
}

#[test]
fn msci_containment_and_invariance() {
    let p = double_integrator();
    assert!(p.joint.contains(&p.msci, 1e-6).unwrap());
    assert!(!p.msci.contains(&p.joint, 1e-6).unwrap());
    // A vertex of Z outside Z_∞ witnesses the strict inclusion.
    let outside = p
        .joint
        .vertices()
        .unwrap()
        .into_iter()
        .find(|v| !p.msci.contains_point(v, 1e-9).unwrap());
    assert_eq!(outside.map(|v| v.len()), Some(3));

    assert!(is_state_control_invariant(&p.sys, &p.msci).unwrap());
    assert!(!is_state_control_invariant(&p.sys, &p.joint).unwrap());
    let pre = pre_z(&p.sys, &p.msci).unwrap();
    assert!(pre.polytope.contains(&p.msci, 1e-6).unwrap());

    // A non-binding extra row leaves invariance intact.
    let padded = p
        .msci
        .intersect(&Halfspace::new(vec![1.0, 0.0, 0.0], 100.0), None)
        .unwrap();
    assert!(is_state_control_invariant(&p.sys, &padded).unwrap());

    // The MCI fixpoint is control invariant.
    let mci = compute_mci(&p.sys, &p.states, &p.inputs).unwrap().fixpoint;
    assert!(pre_state(&p.sys, &mci, &p.inputs)
        .unwrap()
        .contains(&mci, 1e-6)
        .unwrap());
}

#[test]
fn pre_z_rows_correspond_to_projection_rows() {
    let p = double_integrator();
    let ab = p.sys.ab();
    for omega in [&p.joint, &p.msci] {
        let pre = pre_z(&p.sys, omega).unwrap();
        for (row, &j) in pre.polytope.halfspaces().iter().zip(&pre.source_rows) {
            let h = &pre.projection.halfspaces()[j];
            let normal: Vec<f64> = (0..3)
                .map(|c| h.normal[0] * ab[(0, c)] + h.normal[1] * ab[(1, c)])
                .collect();
            let expect = Halfspace::new(normal, h.offset).normalize().unwrap();
            assert!(row.matches(&expect, 1e-12), "{row:?} vs {expect:?}");
        }
    }
}

#[test]
fn sections_at_the_origin() {
    let p = double_integrator();
    let s = x_section(&p.joint, &[0.0, 0.0]).unwrap().unwrap();
    assert_eq!(s.bounding_box().unwrap(), vec![(-5.0, 5.0)]);
    let s = x_section(&p.msci, &[0.0, 0.0]).unwrap().unwrap();
    let (lo, hi) = s.bounding_box().unwrap()[0];
    assert!(lo < hi);
    assert_eq!(x_section(&p.msci, &[30.0, 0.0]).unwrap(), None);
}

/// Every pair outside Z_∞ is doomed: no continuous input sequence keeps its
/// successor inside X for 30 steps. Pairs inside Z_∞ are not.
#[test]
fn maximality_probe() {
    let p = double_integrator();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut outside = 0;
    while outside < 1000 {
        let z = p.joint.sample_uniform(&mut rng).unwrap();
        if p.msci.max_residual(&z) <= 1e-6 {
            continue;
        }
        outside += 1;
        let x1 = p.sys.step(&z[..2], &z[2..]).unwrap();
        assert!(
            !survives(&p.sys, &x1, &p.states, &p.inputs, 30),
            "z = {z:?} survives"
        );
    }
    for _ in 0..100 {
        let z = p.msci.sample_uniform(&mut rng).unwrap();
        let x1 = p.sys.step(&z[..2], &z[2..]).unwrap();
        assert!(survives(&p.sys, &x1, &p.states, &p.inputs, 30));
    }
    // States outside X_∞ cannot be kept safe either.
    let mut n = 0;
    while n < 200 {
        let x = p.states.sample_uniform(&mut rng).unwrap();
        if p.mci.max_residual(&x) <= 1e-6 {
            continue;
        }
        n += 1;
        assert!(!survives(&p.sys, &x, &p.states, &p.inputs, 30));
    }
}

#[test]
fn sections_recover_invariance_preserving_inputs() {
    let p = double_integrator();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..100 {
        let x = p.mci.sample_uniform(&mut rng).unwrap();
        let s = x_section(&p.msci, &x).unwrap().expect("nonempty on X_∞");
        let (lo, hi) = s.bounding_box().unwrap()[0];
        for i in 0..=100 {
            let u = lo + (hi - lo) * i as f64 / 100.0;
            let next = p.sys.step(&x, &[u]).unwrap();
            assert!(p.mci.contains_point(&next, 1e-9).unwrap());
        }
    }
}

#[test]
fn pre_state_matches_grid_oracle() {
    let p = double_integrator();
    grid_check(&p.sys, &p.states, &p.inputs);
    for q in random_problems(5, 202) {
        grid_check(&q.sys, &q.states, &q.inputs);
    }
}

#[test]
fn random_problems_project_to_their_mci() {
    for p in random_problems(6, 303) {
        let mci = compute_mci(&p.sys, &p.states, &p.inputs).unwrap().fixpoint;
        assert!(hausdorff(&p.mci, &mci).unwrap() <= 1e-6);
        assert!(is_state_control_invariant(&p.sys, &p.msci).unwrap());
    }
}

#[test]
fn degenerate_plants() {
    let zero =
        LtiSystem::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0]], &[vec![0.0], vec![0.0]]).unwrap();
    let cube = Polytope::from_box(&[-1.0; 3], &[1.0; 3]).unwrap();
    let t = compute_msci(&zero, &cube).unwrap();
    assert!(t.fixpoint.set_equals(&cube, 1e-9).unwrap());

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scale: f64 = rng.random_range(0.1..0.9);
    let stable = LtiSystem::from_rows(
        &[vec![scale, 0.0], vec![0.0, scale]],
        &[vec![0.0], vec![0.0]],
    )
    .unwrap();
    let xb = Polytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
    let ub = Polytope::from_box(&[-1.0], &[1.0]).unwrap();
    let t = compute_mci(&stable, &xb, &ub).unwrap();
    assert_eq!(t.iterations_to_fixpoint, 0);
}
