//! Independent numerical search for the true maximal Bell value of a fixed
//! state: seeded particle-swarm optimization over measurement angles, plus
//! an exhaustive grid cross-check for small setting counts.
//!
//! Each observable is parametrized by spherical angles `(theta, phi)` in
//! `[0, pi] x [0, 2 pi)`, so the search box is `2 (n_a + n_b)` dimensional
//! and needs no renormalization.

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bell::{BellCoefficients, MeasurementSet, bell_value};
use crate::error::{Error, Result};
use crate::qstate::BlochForm;

/// Evaluation budget for the grid oracle.
pub const GRID_BUDGET: u128 = 100_000_000;

/// Particle-swarm hyperparameters. Restarts are independent and derive their
/// random streams from `(seed, restart index)`.
#[derive(Debug, Clone)]
pub struct SwarmConfig {
    /// Particles per restart.
    pub particles: usize,
    /// Iteration cap per restart.
    pub iterations: usize,
    /// Velocity inertia weight.
    pub inertia: f64,
    /// Pull toward the particle's own best.
    pub cognitive: f64,
    /// Pull toward the swarm best.
    pub social: f64,
    /// Independent restarts.
    pub restarts: usize,
    /// Base RNG seed.
    pub seed: u64,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            particles: 50,
            iterations: 500,
            inertia: 0.729,
            cognitive: 1.49445,
            social: 1.49445,
            restarts: 10,
            seed: 0,
        }
    }
}

impl SwarmConfig {
    fn validate(&self) -> Result<()> {
        if self.particles == 0 || self.iterations == 0 || self.restarts == 0 {
            return Err(Error::InvalidInput(
                "swarm counts must all be at least 1".into(),
            ));
        }
        if self.inertia <= 0.0 || self.cognitive <= 0.0 || self.social <= 0.0 {
            return Err(Error::InvalidInput(
                "swarm coefficients must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of a search run.
#[derive(Debug, Clone)]
pub struct SearchResult {
    /// Best value found, re-evaluated from `best_measurements`.
    pub best_value: f64,
    /// Measurements attaining `best_value`.
    pub best_measurements: MeasurementSet,
    /// Best value per restart, in restart order.
    pub history: Vec<f64>,
    /// Objective evaluations performed.
    pub evaluations: u64,
}

fn direction(theta: f64, phi: f64) -> Vector3<f64> {
    Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos())
}

fn angles_to_measurements(angles: &[f64], n_a: usize, n_b: usize) -> MeasurementSet {
    let alice = (0..n_a)
        .map(|i| direction(angles[2 * i], angles[2 * i + 1]))
        .collect();
    let bob = (0..n_b)
        .map(|j| {
            let k = 2 * (n_a + j);
            direction(angles[k], angles[k + 1])
        })
        .collect();
    MeasurementSet::new(alice, bob).expect("spherical angles give unit vectors")
}

struct Objective<'a> {
    b: &'a BlochForm,
    weights: Vec<(usize, usize, f64)>,
    n_a: usize,
    n_b: usize,
}

impl Objective<'_> {
    fn eval(&self, angles: &[f64]) -> f64 {
        let alice: Vec<Vector3<f64>> = (0..self.n_a)
            .map(|i| direction(angles[2 * i], angles[2 * i + 1]))
            .collect();
        let mb: Vec<Vector3<f64>> = (0..self.n_b)
            .map(|j| {
                let k = 2 * (self.n_a + j);
                self.b.m * direction(angles[k], angles[k + 1])
            })
            .collect();
        self.weights
            .iter()
            .map(|&(x, y, w)| w * alice[x].dot(&mb[y]))
            .sum()
    }
}

struct RestartOutcome {
    best_value: f64,
    best_angles: Vec<f64>,
    evaluations: u64,
}

fn run_restart(obj: &Objective<'_>, cfg: &SwarmConfig, restart: usize) -> RestartOutcome {
    let dims = 2 * (obj.n_a + obj.n_b);
    let mut lo = vec![0.0; dims];
    let mut hi = vec![0.0; dims];
    for d in 0..dims {
        hi[d] = if d % 2 == 0 {
            std::f64::consts::PI
        } else {
            2.0 * std::f64::consts::PI
        };
        lo[d] = 0.0;
    }
    let vmax: Vec<f64> = hi.iter().map(|h| 0.5 * h).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64 + 1);

    let np = cfg.particles;
    let mut pos: Vec<Vec<f64>> = (0..np)
        .map(|_| (0..dims).map(|d| rng.random_range(lo[d]..hi[d])).collect())
        .collect();
    let mut vel: Vec<Vec<f64>> = (0..np)
        .map(|_| {
            (0..dims)
                .map(|d| rng.random_range(-vmax[d]..vmax[d]))
                .collect()
        })
        .collect();
    let mut pbest = pos.clone();
    let mut pbest_val: Vec<f64> = pos.iter().map(|p| obj.eval(p)).collect();
    let mut evaluations = np as u64;

    let (mut gbest_idx, _) = pbest_val
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| {
            if v > acc.1 { (i, v) } else { acc }
        });
    let mut gbest = pbest[gbest_idx].clone();
    let mut gbest_val = pbest_val[gbest_idx];

    // Stop a restart once the best stops improving meaningfully.
    let window = 50;
    let mut last_window_best = gbest_val;
    let mut since_check = 0;

    for _ in 0..cfg.iterations {
        for p in 0..np {
            for d in 0..dims {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let mut v = cfg.inertia * vel[p][d]
                    + cfg.cognitive * r1 * (pbest[p][d] - pos[p][d])
                    + cfg.social * r2 * (gbest[d] - pos[p][d]);
                v = v.clamp(-vmax[d], vmax[d]);
                let mut x = pos[p][d] + v;
                if x < lo[d] {
                    x = lo[d] + (lo[d] - x);
                    v = -v;
                } else if x > hi[d] {
                    x = hi[d] - (x - hi[d]);
                    v = -v;
                }
                pos[p][d] = x.clamp(lo[d], hi[d]);
                vel[p][d] = v;
            }
            let val = obj.eval(&pos[p]);
            evaluations += 1;
            if val > pbest_val[p] {
                pbest_val[p] = val;
                pbest[p].clone_from(&pos[p]);
                if val > gbest_val {
                    gbest_val = val;
                    gbest_idx = p;
                    gbest.clone_from(&pos[p]);
                }
            }
        }
        let _ = gbest_idx;
        since_check += 1;
        if since_check >= window {
            if gbest_val - last_window_best < 1e-10 {
                break;
            }
            last_window_best = gbest_val;
            since_check = 0;
        }
    }

    RestartOutcome {
        best_value: gbest_val,
        best_angles: gbest,
        evaluations,
    }
}

/// Particle-swarm maximization of the functional over measurement angles.
/// Deterministic for a fixed seed; restarts run in parallel and merge by
/// value.
pub fn pso_max_violation(
    b: &BlochForm,
    coeffs: &BellCoefficients,
    cfg: &SwarmConfig,
) -> Result<SearchResult> {
    cfg.validate()?;
    let obj = Objective {
        b,
        weights: coeffs.nonzero().collect(),
        n_a: coeffs.n_alice(),
        n_b: coeffs.n_bob(),
    };
    let outcomes: Vec<RestartOutcome> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_restart(&obj, cfg, r))
        .collect();

    let history: Vec<f64> = outcomes.iter().map(|o| o.best_value).collect();
    let evaluations: u64 = outcomes.iter().map(|o| o.evaluations).sum();
    let best = outcomes
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.best_value
                .partial_cmp(&b.best_value)
                .expect("finite objective")
                .then(ib.cmp(ia))
        })
        .expect("at least one restart")
        .1;

    let best_measurements = angles_to_measurements(&best.best_angles, obj.n_a, obj.n_b);
    let best_value = bell_value(b, &best_measurements, coeffs)?;
    Ok(SearchResult {
        best_value,
        best_measurements,
        history,
        evaluations,
    })
}

/// Exhaustive search over an angular grid with `resolution` subdivisions of
/// a half-turn (so the planar grid has `2 * resolution` directions per
/// observable). With `planar` set, directions are restricted to the x-z
/// plane; otherwise polar midpoints and the full azimuthal grid are used.
///
/// The additive structure of the functional is exploited exactly: for each
/// combination of Bob directions the best grid response of each Alice
/// observable is independent, so the returned maximum equals the naive
/// product-grid maximum at far fewer evaluations.
pub fn grid_oracle(
    b: &BlochForm,
    coeffs: &BellCoefficients,
    resolution: usize,
    planar: bool,
) -> Result<SearchResult> {
    let (n_a, n_b) = (coeffs.n_alice(), coeffs.n_bob());
    if n_a > 3 || n_b > 3 {
        return Err(Error::InvalidInput(format!(
            "grid oracle supports at most 3 settings per party, got {n_a}x{n_b}"
        )));
    }
    if resolution == 0 || resolution > 60 {
        return Err(Error::InvalidInput(format!(
            "grid resolution must lie in 1..=60, got {resolution}"
        )));
    }

    let step = std::f64::consts::PI / resolution as f64;
    let options: Vec<Vector3<f64>> = if planar {
        (0..2 * resolution)
            .map(|k| {
                let t = k as f64 * step;
                Vector3::new(t.sin(), 0.0, t.cos())
            })
            .collect()
    } else {
        let mut v = Vec::with_capacity(resolution * 2 * resolution);
        for i in 0..resolution {
            let theta = (i as f64 + 0.5) * step;
            for j in 0..2 * resolution {
                let phi = j as f64 * step;
                v.push(direction(theta, phi));
            }
        }
        v
    };
    let n_opt = options.len() as u128;
    let evaluations: u128 = n_opt
        .pow(n_b as u32)
        .saturating_mul(n_a as u128)
        .saturating_mul(n_opt);
    if evaluations > GRID_BUDGET {
        return Err(Error::BudgetExceeded {
            evaluations,
            budget: GRID_BUDGET,
        });
    }

    let mb: Vec<Vector3<f64>> = options.iter().map(|o| b.m * o).collect();
    let weights: Vec<(usize, usize, f64)> = coeffs.nonzero().collect();

    let n_opt = options.len();
    let mut combo = vec![0usize; n_b];
    let mut best_total = f64::NEG_INFINITY;
    let mut best_combo = combo.clone();
    let mut best_alice = vec![0usize; n_a];
    loop {
        // Response vector for each Alice observable given this Bob combo.
        let mut response = vec![Vector3::zeros(); n_a];
        for &(x, y, w) in &weights {
            response[x] += mb[combo[y]] * w;
        }
        let mut total = 0.0;
        let mut alice_pick = vec![0usize; n_a];
        for x in 0..n_a {
            let mut best_dot = f64::NEG_INFINITY;
            for (k, a) in options.iter().enumerate() {
                let d = a.dot(&response[x]);
                if d > best_dot {
                    best_dot = d;
                    alice_pick[x] = k;
                }
            }
            total += best_dot;
        }
        if total > best_total {
            best_total = total;
            best_combo.clone_from(&combo);
            best_alice = alice_pick;
        }
        // Odometer over Bob combinations.
        let mut digit = 0;
        loop {
            if digit == n_b {
                break;
            }
            combo[digit] += 1;
            if combo[digit] < n_opt {
                break;
            }
            combo[digit] = 0;
            digit += 1;
        }
        if digit == n_b {
            break;
        }
    }

    let alice = best_alice.iter().map(|&k| options[k]).collect();
    let bob = best_combo.iter().map(|&k| options[k]).collect();
    let best_measurements = MeasurementSet::new(alice, bob)?;
    let best_value = bell_value(b, &best_measurements, coeffs)?;
    Ok(SearchResult {
        best_value,
        best_measurements,
        history: vec![best_value],
        evaluations: evaluations as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::theorem1_bound;
    use crate::qstate::TwoQubitState;
    use crate::sampling;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Matrix3, Rotation3};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn quick_cfg(seed: u64) -> SwarmConfig {
        SwarmConfig {
            particles: 40,
            iterations: 250,
            restarts: 6,
            seed,
            ..SwarmConfig::default()
        }
    }

    #[test]
    fn pso_recovers_chained_maximum_on_singlet() {
        let b = TwoQubitState::singlet().bloch();
        let coeffs = BellCoefficients::chained(3).unwrap();
        let result = pso_max_violation(&b, &coeffs, &quick_cfg(1)).unwrap();
        assert_abs_diff_eq!(result.best_value, 3.0 * 3.0_f64.sqrt(), epsilon = 1e-4);
        assert_eq!(result.history.len(), 6);
    }

    #[test]
    fn pso_recovers_werner_maximum() {
        let b = TwoQubitState::werner(0.75).unwrap().bloch();
        let coeffs = BellCoefficients::chained(4).unwrap();
        let result = pso_max_violation(&b, &coeffs, &quick_cfg(2)).unwrap();
        assert_abs_diff_eq!(
            result.best_value,
            0.75 * 8.0 * (PI / 8.0).cos(),
            epsilon = 1e-4
        );
    }

    #[test]
    fn pso_is_deterministic_for_a_seed() {
        let b = TwoQubitState::werner(0.6).unwrap().bloch();
        let coeffs = BellCoefficients::chsh();
        let cfg = quick_cfg(7);
        let a = pso_max_violation(&b, &coeffs, &cfg).unwrap();
        let c = pso_max_violation(&b, &coeffs, &cfg).unwrap();
        assert!((a.best_value - c.best_value).abs() <= 1e-12);
        assert_eq!(a.history, c.history);
        assert_eq!(a.evaluations, c.evaluations);
    }

    #[test]
    fn pso_never_exceeds_the_state_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let cfg = SwarmConfig {
            particles: 25,
            iterations: 120,
            restarts: 3,
            seed: 9,
            ..SwarmConfig::default()
        };
        for _ in 0..5 {
            let state = sampling::random_state(&mut rng);
            let form = state.bloch();
            let coeffs = BellCoefficients::chained(3).unwrap();
            let result = pso_max_violation(&form, &coeffs, &cfg).unwrap();
            let bound = theorem1_bound(&form, 3).unwrap();
            assert!(
                result.best_value <= bound + 1e-6,
                "search {} exceeded bound {}",
                result.best_value,
                bound
            );
        }
    }

    #[test]
    fn pso_matches_bound_even_without_degeneracy() {
        // sigma_max is simple here, so the bound is strict; the search must
        // stay below it.
        let b = BlochForm::from_correlation(Matrix3::from_diagonal(
            &nalgebra::Vector3::new(0.9, 0.5, 0.1),
        ));
        let coeffs = BellCoefficients::chained(3).unwrap();
        let result = pso_max_violation(&b, &coeffs, &quick_cfg(3)).unwrap();
        let bound = theorem1_bound(&b, 3).unwrap();
        assert!(result.best_value < bound - 1e-3);
    }

    #[test]
    fn gauge_rotation_leaves_the_optimum_unchanged() {
        let b = TwoQubitState::x_state(0.7, 0.6).unwrap().bloch();
        let axis = nalgebra::Unit::new_normalize(nalgebra::Vector3::new(1.0, 2.0, -0.5));
        let rot = Rotation3::from_axis_angle(&axis, 0.83);
        let rotated = BlochForm::from_correlation(rot.matrix() * b.m * rot.matrix().transpose());
        let coeffs = BellCoefficients::chained(3).unwrap();
        let base = pso_max_violation(&b, &coeffs, &quick_cfg(4)).unwrap();
        let moved = pso_max_violation(&rotated, &coeffs, &quick_cfg(4)).unwrap();
        assert!((base.best_value - moved.best_value).abs() <= 2e-4);
    }

    #[test]
    fn grid_on_mixed_state_is_zero() {
        let b = TwoQubitState::maximally_mixed().bloch();
        let coeffs = BellCoefficients::chsh();
        let result = grid_oracle(&b, &coeffs, 12, true).unwrap();
        assert_abs_diff_eq!(result.best_value, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn planar_grid_hits_chsh_maximum_on_grid_points() {
        let b = TwoQubitState::singlet().bloch();
        let coeffs = BellCoefficients::chsh();
        let result = grid_oracle(&b, &coeffs, 36, true).unwrap();
        // The optimal relative angles are grid points at this resolution.
        assert_abs_diff_eq!(result.best_value, 2.0 * 2.0_f64.sqrt(), epsilon = 1e-9);
        assert!(result.best_value <= 2.0 * 2.0_f64.sqrt() + 5e-3);
    }

    #[test]
    fn planar_grid_matches_werner_chained_value() {
        let b = TwoQubitState::werner(0.8).unwrap().bloch();
        let coeffs = BellCoefficients::chained(3).unwrap();
        let result = grid_oracle(&b, &coeffs, 24, true).unwrap();
        let expected = 0.8 * 3.0 * 3.0_f64.sqrt();
        assert_abs_diff_eq!(result.best_value, expected, epsilon = 1e-9);
        assert!((result.best_value - expected).abs() <= 2e-2);
    }

    #[test]
    fn pso_dominates_grid_on_shared_instances() {
        let b = TwoQubitState::werner(0.9).unwrap().bloch();
        let coeffs = BellCoefficients::chsh();
        let grid = grid_oracle(&b, &coeffs, 18, true).unwrap();
        let swarm = pso_max_violation(&b, &coeffs, &quick_cfg(5)).unwrap();
        assert!(swarm.best_value >= grid.best_value - 1e-6);
    }

    #[test]
    fn grid_budget_and_preconditions() {
        let b = TwoQubitState::singlet().bloch();
        let c3 = BellCoefficients::chained(3).unwrap();
        assert!(matches!(
            grid_oracle(&b, &c3, 60, false),
            Err(Error::BudgetExceeded { .. })
        ));
        assert!(matches!(
            grid_oracle(&b, &c3, 61, true),
            Err(Error::InvalidInput(_))
        ));
        let c4 = BellCoefficients::chained(4).unwrap();
        assert!(matches!(
            grid_oracle(&b, &c4, 10, true),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn nonplanar_grid_approaches_chsh_maximum() {
        let b = TwoQubitState::singlet().bloch();
        let coeffs = BellCoefficients::chsh();
        let result = grid_oracle(&b, &coeffs, 8, false).unwrap();
        assert!(result.best_value <= 2.0 * 2.0_f64.sqrt() + 1e-12);
        assert!(result.best_value > 2.6);
    }
}
