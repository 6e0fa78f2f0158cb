use rand::Rng;

use super::{GeometryError, Polytope, MEMBER_TOL};

const REJECTION_CAP: usize = 10_000;
const HIT_AND_RUN_STEPS: usize = 50;

impl Polytope {
    /// Uniform draw by rejection from the LP bounding box. After
    /// 10,000 rejected proposals it falls back to 50 hit-and-run steps seeded
    /// at the Chebyshev center.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>, GeometryError> {
        let bounds = self.bounding_box()?;
        for _ in 0..REJECTION_CAP {
            let y: Vec<f64> = bounds
                .iter()
                .map(|&(lo, hi)| {
                    if hi > lo {
                        rng.random_range(lo..=hi)
                    } else {
                        lo
                    }
                })
                .collect();
            if self.contains_point(&y, MEMBER_TOL)? {
                return Ok(y);
            }
        }
        log::debug!("rejection cap reached, falling back to hit-and-run");
        self.hit_and_run(rng)
    }

    fn hit_and_run<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>, GeometryError> {
        let (mut y, _) = self.chebyshev_center()?;
        let d = self.dim();
        for _ in 0..HIT_AND_RUN_STEPS {
            let dir = loop {
                let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                if n > 1e-3 && n <= 1.0 {
                    break v.into_iter().map(|a| a / n).collect::<Vec<_>>();
                }
            };
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for r in self.halfspaces() {
                let rate = r.value(&dir);
                let slack = (r.offset - r.value(&y)).max(0.0);
                if rate > 1e-12 {
                    hi = hi.min(slack / rate);
                } else if rate < -1e-12 {
                    lo = lo.max(slack / rate);
                }
            }
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(GeometryError::Unbounded);
            }
            let t = if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                0.0
            };
            for (yi, di) in y.iter_mut().zip(&dir) {
                *yi += t * di;
            }
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Halfspace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn interval_draws_are_members() {
        let p = Polytope::from_box(&[-5.0], &[5.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let u = p.sample_uniform(&mut rng).unwrap();
            assert!((-5.0..=5.0).contains(&u[0]));
        }
    }

    #[test]
    fn box_mean_is_near_center() {
        let p = Polytope::from_box(&[-15.0, -10.0], &[15.0, 10.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10_000;
        let mut mean = [0.0; 2];
        for _ in 0..n {
            let y = p.sample_uniform(&mut rng).unwrap();
            mean[0] += y[0] / n as f64;
            mean[1] += y[1] / n as f64;
        }
        assert!(mean[0].abs() < 0.5 && mean[1].abs() < 0.5, "{mean:?}");
    }

    #[test]
    fn reproducible_for_a_seed() {
        let p = Polytope::from_box(&[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let a = p.sample_uniform(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = p.sample_uniform(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn thin_sliver_uses_hit_and_run() {
        // Diagonal sliver with area ~1e-6 of its bounding box.
        let p = Polytope::new(
            2,
            vec![
                Halfspace::new(vec![1.0, -1.0], 1e-6),
                Halfspace::new(vec![-1.0, 1.0], 1e-6),
                Halfspace::new(vec![1.0, 0.0], 1.0),
                Halfspace::new(vec![-1.0, 0.0], 1.0),
            ],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = p.hit_and_run(&mut rng).unwrap();
        assert!(p.contains_point(&y, MEMBER_TOL).unwrap());
        let y = p.sample_uniform(&mut rng).unwrap();
        assert!(p.contains_point(&y, MEMBER_TOL).unwrap());
    }
}
