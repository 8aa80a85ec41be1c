//! The chained Bell functional: classical and quantum bounds, the
//! correlation-matrix upper bound and its saturating measurements, behavior
//! tables, the white-noise model, the Gram-matrix program behind the bound's
//! proof, and the two-setting `J_gamma` family.
//!
//! Setting indices are 0-based throughout. Outcome indices map `+1 -> 0`
//! and `-1 -> 1`, so that `<A_x B_y> = sum_ab a b p(ab|xy)`.
//!
//! The chained functional places unit weight on every diagonal pair
//! `(k, k)` — including `(n-1, n-1)` — unit weight on `(k+1, k)`, and weight
//! `-1` on `(0, n-1)`; its expectation over measurements regroups as
//! `a_0.M(b_0 - b_{n-1}) + sum_k a_{k+1}.M(b_k + b_{k+1})`.

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};
use crate::qstate::{BlochForm, correlation_svd};
use crate::sdp::{Constraint, SdpProblem, Sense, SolveOptions, SolverStatus, solve};

/// Unit-norm tolerance for measurement directions.
pub const UNIT_TOL: f64 = 1e-12;
/// Entry nonnegativity slack for behavior tables.
pub const BEHAVIOR_NONNEG_TOL: f64 = 1e-12;
/// Normalization and no-signaling tolerance for behavior tables.
pub const BEHAVIOR_SUM_TOL: f64 = 1e-10;

/// Outcome sign for a table index: `0 -> +1`, `1 -> -1`.
pub const fn outcome_sign(index: usize) -> f64 {
    if index == 0 { 1.0 } else { -1.0 }
}

/// `n` measurement directions per party, each a Bloch unit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    alice: Vec<Vector3<f64>>,
    bob: Vec<Vector3<f64>>,
}

impl MeasurementSet {
    /// Validates unit norms and the minimum setting count.
    pub fn new(alice: Vec<Vector3<f64>>, bob: Vec<Vector3<f64>>) -> Result<Self> {
        if alice.len() < 2 || bob.len() < 2 {
            return Err(Error::InvalidSettingCount {
                n: alice.len().min(bob.len()),
            });
        }
        for v in alice.iter().chain(bob.iter()) {
            let norm = v.norm();
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::NotUnitVector { norm });
            }
        }
        Ok(Self { alice, bob })
    }

    /// Number of Alice settings.
    pub fn n_alice(&self) -> usize {
        self.alice.len()
    }

    /// Number of Bob settings.
    pub fn n_bob(&self) -> usize {
        self.bob.len()
    }

    /// Alice's direction for setting `x`.
    pub fn alice(&self, x: usize) -> &Vector3<f64> {
        &self.alice[x]
    }

    /// Bob's direction for setting `y`.
    pub fn bob(&self, y: usize) -> &Vector3<f64> {
        &self.bob[y]
    }
}

/// Coefficients of a two-party correlator functional `sum w(x,y) <A_x B_y>`.
#[derive(Debug, Clone, PartialEq)]
pub struct BellCoefficients {
    n_a: usize,
    n_b: usize,
    weights: Vec<f64>,
}

impl BellCoefficients {
    /// The chained functional on `n` settings per party.
    pub fn chained(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSettingCount { n });
        }
        let mut c = Self {
            n_a: n,
            n_b: n,
            weights: vec![0.0; n * n],
        };
        for k in 0..n {
            *c.weight_mut(k, k) += 1.0;
        }
        for k in 0..n - 1 {
            *c.weight_mut(k + 1, k) += 1.0;
        }
        *c.weight_mut(0, n - 1) += -1.0;
        Ok(c)
    }

    /// CHSH, i.e. the chained functional at `n = 2`.
    pub fn chsh() -> Self {
        Self::chained(2).expect("n = 2 is valid")
    }

    /// The one-parameter two-setting family trading nonlocality for
    /// randomness: weight 1 on `(0,0)` and `+a, +a, -a` on the other three
    /// pairs with `a = 4 cos^2(gamma + pi/6) - 1`, `gamma` in `[0, pi/12]`.
    pub fn j_gamma(gamma: f64) -> Result<Self> {
        if !(0.0..=std::f64::consts::PI / 12.0 + 1e-15).contains(&gamma) {
            return Err(Error::GammaOutOfRange { gamma });
        }
        let a = 4.0 * (gamma + std::f64::consts::PI / 6.0).cos().powi(2) - 1.0;
        let mut c = Self {
            n_a: 2,
            n_b: 2,
            weights: vec![0.0; 4],
        };
        *c.weight_mut(0, 0) = 1.0;
        *c.weight_mut(0, 1) = a;
        *c.weight_mut(1, 0) = a;
        *c.weight_mut(1, 1) = -a;
        Ok(c)
    }

    /// Party-swapped coefficients; the functional value is invariant when the
    /// measurement sets are swapped accordingly.
    pub fn transposed(&self) -> Self {
        let mut w = vec![0.0; self.weights.len()];
        for x in 0..self.n_a {
            for y in 0..self.n_b {
                w[y * self.n_a + x] = self.weight(x, y);
            }
        }
        Self {
            n_a: self.n_b,
            n_b: self.n_a,
            weights: w,
        }
    }

    /// Alice setting count.
    pub fn n_alice(&self) -> usize {
        self.n_a
    }

    /// Bob setting count.
    pub fn n_bob(&self) -> usize {
        self.n_b
    }

    /// Coefficient of `<A_x B_y>`.
    pub fn weight(&self, x: usize, y: usize) -> f64 {
        self.weights[x * self.n_b + y]
    }

    fn weight_mut(&mut self, x: usize, y: usize) -> &mut f64 {
        &mut self.weights[x * self.n_b + y]
    }

    /// Iterator over the nonzero coefficients as `(x, y, weight)`.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_a).flat_map(move |x| {
            (0..self.n_b).filter_map(move |y| {
                let w = self.weight(x, y);
                (w != 0.0).then_some((x, y, w))
            })
        })
    }

    /// Sum of absolute coefficients, the algebraic cap on the value.
    pub fn abs_sum(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }
}

/// A joint conditional probability table `p(ab|xy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Behavior {
    n_a: usize,
    n_b: usize,
    table: Vec<f64>,
}

impl Behavior {
    /// Validates nonnegativity, normalization per setting pair, and
    /// no-signaling, then wraps the table. The table is indexed by
    /// `(((x * n_b) + y) * 2 + a) * 2 + b` with outcome indices `0 -> +1`.
    pub fn new(n_a: usize, n_b: usize, table: Vec<f64>) -> Result<Self> {
        if table.len() != n_a * n_b * 4 {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "behavior table has {} entries, expected {}",
                    table.len(),
                    n_a * n_b * 4
                ),
            });
        }
        let beh = Self { n_a, n_b, table };
        for (i, &p) in beh.table.iter().enumerate() {
            if p < -BEHAVIOR_NONNEG_TOL {
                return Err(Error::InvalidBehavior {
                    reason: format!("negative probability at flat index {i}"),
                    dev: -p,
                });
            }
        }
        for x in 0..n_a {
            for y in 0..n_b {
                let sum: f64 = (0..2)
                    .flat_map(|a| (0..2).map(move |b| (a, b)))
                    .map(|(a, b)| beh.prob(x, y, a, b))
                    .sum();
                if (sum - 1.0).abs() > BEHAVIOR_SUM_TOL {
                    return Err(Error::InvalidBehavior {
                        reason: format!("probabilities for settings ({x},{y}) sum to {sum}"),
                        dev: (sum - 1.0).abs(),
                    });
                }
            }
        }
        let dev = beh.no_signaling_deviation();
        if dev > BEHAVIOR_SUM_TOL {
            return Err(Error::NoSignalingViolated { max_dev: dev });
        }
        Ok(beh)
    }

    /// The uniform table `p(ab|xy) = 1/4`.
    pub fn uniform(n_a: usize, n_b: usize) -> Self {
        Self {
            n_a,
            n_b,
            table: vec![0.25; n_a * n_b * 4],
        }
    }

    /// Alice setting count.
    pub fn n_alice(&self) -> usize {
        self.n_a
    }

    /// Bob setting count.
    pub fn n_bob(&self) -> usize {
        self.n_b
    }

    /// `p(ab|xy)` with outcome indices `0 -> +1`, `1 -> -1`.
    pub fn prob(&self, x: usize, y: usize, a: usize, b: usize) -> f64 {
        self.table[((x * self.n_b + y) * 2 + a) * 2 + b]
    }

    /// Correlator `<A_x B_y> = sum_ab a b p(ab|xy)`.
    pub fn correlator(&self, x: usize, y: usize) -> f64 {
        let mut acc = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                acc += outcome_sign(a) * outcome_sign(b) * self.prob(x, y, a, b);
            }
        }
        acc
    }

    /// `p(A = +1 | x)`, averaged over Bob's settings.
    pub fn alice_plus(&self, x: usize) -> f64 {
        let mut acc = 0.0;
        for y in 0..self.n_b {
            acc += self.prob(x, y, 0, 0) + self.prob(x, y, 0, 1);
        }
        acc / self.n_b as f64
    }

    /// `p(B = +1 | y)`, averaged over Alice's settings.
    pub fn bob_plus(&self, y: usize) -> f64 {
        let mut acc = 0.0;
        for x in 0..self.n_a {
            acc += self.prob(x, y, 0, 0) + self.prob(x, y, 1, 0);
        }
        acc / self.n_a as f64
    }

    /// Largest marginal drift across remote settings.
    pub fn no_signaling_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for x in 0..self.n_a {
            for a in 0..2 {
                let first: f64 = self.prob(x, 0, a, 0) + self.prob(x, 0, a, 1);
                for y in 1..self.n_b {
                    let m = self.prob(x, y, a, 0) + self.prob(x, y, a, 1);
                    dev = dev.max((m - first).abs());
                }
            }
        }
        for y in 0..self.n_b {
            for b in 0..2 {
                let first: f64 = self.prob(0, y, 0, b) + self.prob(0, y, 1, b);
                for x in 1..self.n_a {
                    let m = self.prob(x, y, 0, b) + self.prob(x, y, 1, b);
                    dev = dev.max((m - first).abs());
                }
            }
        }
        dev
    }

    /// Value of a correlator functional on this table.
    pub fn bell_value(&self, coeffs: &BellCoefficients) -> Result<f64> {
        if coeffs.n_alice() != self.n_a || coeffs.n_bob() != self.n_b {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "coefficients are {}x{}, behavior is {}x{}",
                    coeffs.n_alice(),
                    coeffs.n_bob(),
                    self.n_a,
                    self.n_b
                ),
            });
        }
        Ok(coeffs
            .nonzero()
            .map(|(x, y, w)| w * self.correlator(x, y))
            .sum())
    }
}

/// Local-hidden-variable bound of the chained functional, `2n - 2`.
pub fn classical_bound(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidSettingCount { n });
    }
    Ok(2.0 * n as f64 - 2.0)
}

/// Maximum quantum value of the chained functional, `2n cos(pi/2n)`.
pub fn tsirelson_bound(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidSettingCount { n });
    }
    let n = n as f64;
    Ok(2.0 * n * (std::f64::consts::PI / (2.0 * n)).cos())
}

/// State-dependent upper bound `2n cos(pi/2n) sigma_max(M)`.
pub fn theorem1_bound(b: &BlochForm, n: usize) -> Result<f64> {
    let report = correlation_svd(b, crate::qstate::DEFAULT_DEGENERACY_TOL);
    Ok(tsirelson_bound(n)? * report.sigma_max)
}

/// Smallest Werner visibility whose chained value exceeds the classical
/// bound: `(n - 1) / (n cos(pi/2n))`.
pub fn werner_witness_threshold(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidSettingCount { n });
    }
    let nf = n as f64;
    Ok((nf - 1.0) / (nf * (std::f64::consts::PI / (2.0 * nf)).cos()))
}

/// Entanglement test for the X-state family: all of `1 - 2v + l > 0`,
/// `1 - 2v - l < 0`, `0 < l < 1` must hold.
pub fn xstate_entangled(nu: f64, l: f64) -> bool {
    1.0 - 2.0 * nu + l > 0.0 && 1.0 - 2.0 * nu - l < 0.0 && 0.0 < l && l < 1.0
}

/// Planar measurement directions that reach the quantum maximum on the
/// singlet: `a_i = (-sin((i)pi/n), 0, -cos((i)pi/n))` for 0-based `i` and
/// `b_j = (sin((2j+1)pi/2n), 0, cos((2j+1)pi/2n))`.
pub fn canonical_measurements(n: usize) -> Result<MeasurementSet> {
    if n < 2 {
        return Err(Error::InvalidSettingCount { n });
    }
    let nf = n as f64;
    let alice = (0..n)
        .map(|i| {
            let t = i as f64 * std::f64::consts::PI / nf;
            Vector3::new(-t.sin(), 0.0, -t.cos())
        })
        .collect();
    let bob = (0..n)
        .map(|j| {
            let t = (2 * j + 1) as f64 * std::f64::consts::PI / (2.0 * nf);
            Vector3::new(t.sin(), 0.0, t.cos())
        })
        .collect();
    MeasurementSet::new(alice, bob)
}

/// Correlator `<A B> = a^T M b` for one direction pair.
pub fn correlator(b: &BlochForm, a: &Vector3<f64>, bv: &Vector3<f64>) -> f64 {
    (a.transpose() * b.m * bv)[(0, 0)]
}

/// Alice's single-observable expectation `<A> = r . a`.
pub fn marginal_alice(b: &BlochForm, a: &Vector3<f64>) -> f64 {
    b.r.dot(a)
}

/// Bob's single-observable expectation `<B> = s . b`.
pub fn marginal_bob(b: &BlochForm, bv: &Vector3<f64>) -> f64 {
    b.s.dot(bv)
}

/// Value of the functional for a state form and concrete measurements.
pub fn bell_value(b: &BlochForm, ms: &MeasurementSet, coeffs: &BellCoefficients) -> Result<f64> {
    if ms.n_alice() != coeffs.n_alice() || ms.n_bob() != coeffs.n_bob() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "coefficients are {}x{}, measurements are {}x{}",
                coeffs.n_alice(),
                coeffs.n_bob(),
                ms.n_alice(),
                ms.n_bob()
            ),
        });
    }
    Ok(coeffs
        .nonzero()
        .map(|(x, y, w)| w * correlator(b, ms.alice(x), ms.bob(y)))
        .sum())
}

/// Full probability table
/// `p(ab|xy) = (1 + a <A_x> + b <B_y> + ab <A_x B_y>) / 4`.
pub fn behavior_from_state(b: &BlochForm, ms: &MeasurementSet) -> Result<Behavior> {
    let (n_a, n_b) = (ms.n_alice(), ms.n_bob());
    let mut table = vec![0.0; n_a * n_b * 4];
    for x in 0..n_a {
        let ea = marginal_alice(b, ms.alice(x));
        for y in 0..n_b {
            let eb = marginal_bob(b, ms.bob(y));
            let eab = correlator(b, ms.alice(x), ms.bob(y));
            for a in 0..2 {
                for bi in 0..2 {
                    let (sa, sb) = (outcome_sign(a), outcome_sign(bi));
                    table[((x * n_b + y) * 2 + a) * 2 + bi] =
                        0.25 * (1.0 + sa * ea + sb * eb + sa * sb * eab);
                }
            }
        }
    }
    Behavior::new(n_a, n_b, table)
}

/// White-noise mixture `p q + (1 - p)/4` applied entrywise.
pub fn noisy_behavior(q: &Behavior, p: f64) -> Result<Behavior> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::VisibilityOutOfRange { p });
    }
    let table = q
        .table
        .iter()
        .map(|&v| p * v + (1.0 - p) * 0.25)
        .collect();
    Behavior::new(q.n_a, q.n_b, table)
}

/// Result of [`tightness_check`].
#[derive(Debug, Clone)]
pub struct TightnessReport {
    /// Whether the sufficient saturation condition (degeneracy >= 2) holds.
    pub sufficient: bool,
    /// Human-readable explanation.
    pub reason: String,
    /// Measurements attaining the bound, present iff `sufficient`.
    pub witness: Option<MeasurementSet>,
}

/// Checks the sufficient condition for the upper bound to be attained and,
/// when it holds, constructs saturating measurements: Bob's directions lie in
/// the top-two right-singular plane at angles `(2i+1) pi / 2n` (0-based) and
/// Alice's are `a_0 = M(b_0 - b_{n-1}) / |.|`, `a_{k+1} = M(b_k + b_{k+1}) / |.|`.
pub fn tightness_check(b: &BlochForm, n: usize, rel_tol: f64) -> Result<TightnessReport> {
    if n < 2 {
        return Err(Error::InvalidSettingCount { n });
    }
    let report = correlation_svd(b, rel_tol);
    if report.sigma_max <= 1e-12 {
        return Err(Error::DegenerateCorrelation {
            sigma_max: report.sigma_max,
        });
    }
    if report.degeneracy < 2 {
        return Ok(TightnessReport {
            sufficient: false,
            reason: format!(
                "sigma_max = {:.6} has degeneracy 1 (next singular value {:.6}); \
                 the sufficient saturation condition needs degeneracy >= 2",
                report.sigma_max, report.singular_values[1]
            ),
            witness: None,
        });
    }
    let v1 = report.right_vectors.column(0).into_owned();
    let v2 = report.right_vectors.column(1).into_owned();
    let nf = n as f64;
    let bob: Vec<Vector3<f64>> = (0..n)
        .map(|i| {
            let phi = (2 * i + 1) as f64 * std::f64::consts::PI / (2.0 * nf);
            v1 * phi.cos() + v2 * phi.sin()
        })
        .collect();
    let mut alice = Vec::with_capacity(n);
    let first = b.m * (bob[0] - bob[n - 1]);
    alice.push(first / first.norm());
    for k in 0..n - 1 {
        let dir = b.m * (bob[k] + bob[k + 1]);
        alice.push(dir / dir.norm());
    }
    let witness = MeasurementSet::new(alice, bob)?;
    Ok(TightnessReport {
        sufficient: true,
        reason: format!(
            "sigma_max = {:.6} has degeneracy {} >= 2; planar saturating measurements exist",
            report.sigma_max, report.degeneracy
        ),
        witness: Some(witness),
    })
}

/// Solution of the unit-diagonal Gram-matrix program
/// `maximize tr(M W)/2 s.t. M >= 0, M_ii = 1`.
#[derive(Debug, Clone)]
pub struct GramSolution {
    /// Primal optimum; equals `n cos(pi/n)` analytically.
    pub primal: f64,
    /// Dual optimum.
    pub dual: f64,
    /// Optimal Gram matrix.
    pub gram: DMatrix<f64>,
    /// Primal-dual gap as reported by the solver.
    pub gap: f64,
    /// Interior-point iterations used.
    pub iterations: usize,
}

/// Builds and solves the Gram-matrix program for the `n`-setting chain.
pub fn solve_gram_sdp(n: usize, opts: &SolveOptions) -> Result<GramSolution> {
    if n < 2 {
        return Err(Error::InvalidSettingCount { n });
    }
    let mut w = DMatrix::<f64>::zeros(n, n);
    for i in 0..n - 1 {
        w[(i, i + 1)] += 1.0;
        w[(i + 1, i)] += 1.0;
    }
    w[(0, n - 1)] += -1.0;
    w[(n - 1, 0)] += -1.0;
    let objective = vec![w * 0.5];
    let constraints = (0..n)
        .map(|i| Constraint::from_entries(1.0, &[(0, i, i, 1.0)]))
        .collect();
    let problem = SdpProblem::new(vec![n], objective, constraints, Sense::Maximize)?;
    let sol = solve(&problem, opts)?;
    if sol.status != SolverStatus::Optimal {
        return Err(Error::SolverFailure {
            detail: format!(
                "gram program for n = {n} ended with status {:?} after {} iterations",
                sol.status, sol.iterations
            ),
        });
    }
    Ok(GramSolution {
        primal: sol.primal_value,
        dual: sol.dual_value,
        gram: sol.x[0].clone(),
        gap: sol.gap,
        iterations: sol.iterations,
    })
}
