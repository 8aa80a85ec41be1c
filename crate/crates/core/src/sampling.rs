//! Seeded random inputs for sweeps and property tests: Haar-random pure
//! states mixed with white noise, and uniformly distributed measurement
//! directions.

use nalgebra::{Matrix4, Vector3, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::bell::MeasurementSet;
use crate::qstate::{C64, TwoQubitState};

/// Haar-random two-qubit pure state.
pub fn random_pure_state<R: Rng>(rng: &mut R) -> TwoQubitState {
    let mut amps = Vector4::from_fn(|_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    amps /= C64::new(amps.norm(), 0.0);
    let mut rho = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            rho[(i, j)] = amps[i] * amps[j].conj();
        }
    }
    TwoQubitState::new(rho).expect("projector onto a unit vector is a state")
}

/// Haar-random pure state mixed with `I/4` at a uniform random weight.
pub fn random_state<R: Rng>(rng: &mut R) -> TwoQubitState {
    let w: f64 = rng.random_range(0.0..=1.0);
    let pure = random_pure_state(rng);
    let rho = pure.density_matrix() * C64::new(w, 0.0)
        + Matrix4::identity() * C64::new((1.0 - w) * 0.25, 0.0);
    TwoQubitState::new(rho).expect("mixture of states is a state")
}

/// Uniformly random point on the unit sphere.
pub fn random_unit_vector<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

/// Random measurement directions, `n` per party.
pub fn random_measurements<R: Rng>(rng: &mut R, n: usize) -> MeasurementSet {
    let alice = (0..n).map(|_| random_unit_vector(rng)).collect();
    let bob = (0..n).map(|_| random_unit_vector(rng)).collect();
    MeasurementSet::new(alice, bob).expect("sampled directions are unit vectors")
}
