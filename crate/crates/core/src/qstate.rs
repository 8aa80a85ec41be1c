//! Two-qubit states, their Bloch decomposition, and the singular-value
//! machinery behind the chained-inequality bound.
//!
//! A state is stored as a validated 4x4 density matrix. Its Bloch form
//! `(r, s, M)` collects the local Bloch vectors and the 3x3 correlation
//! matrix `M[k][l] = tr(rho (sigma_k x sigma_l))`; the largest singular
//! value of `M` is the single number the quantum bound depends on.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Matrix4, SMatrix, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex scalar used for density matrices.
pub type C64 = Complex64;

/// Hermiticity tolerance for state validation.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Unit-trace tolerance for state validation.
pub const TRACE_TOL: f64 = 1e-12;
/// Positivity tolerance (smallest admissible eigenvalue) for state validation.
pub const PSD_TOL: f64 = 1e-10;
/// Default relative tolerance for singular-value degeneracy counting.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-8;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Pauli matrix `sigma_k` for `k` in `0..3` (x, y, z).
pub fn pauli(k: usize) -> Matrix2<C64> {
    match k {
        0 => Matrix2::new(ZERO, ONE, ONE, ZERO),
        1 => Matrix2::new(ZERO, -I, I, ZERO),
        2 => Matrix2::new(ONE, ZERO, ZERO, -ONE),
        _ => panic!("pauli index must be 0, 1 or 2, got {k}"),
    }
}

/// Kronecker product of two 2x2 complex matrices.
pub fn kron2(a: &Matrix2<C64>, b: &Matrix2<C64>) -> Matrix4<C64> {
    let mut out = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

fn trace_product(rho: &Matrix4<C64>, op: &Matrix4<C64>) -> C64 {
    let mut acc = ZERO;
    for i in 0..4 {
        for j in 0..4 {
            acc += rho[(i, j)] * op[(j, i)];
        }
    }
    acc
}

/// Smallest eigenvalue of a Hermitian 4x4 matrix, via the real 8x8 embedding
/// `[[Re, -Im], [Im, Re]]` whose spectrum doubles the complex one.
fn min_eigenvalue_hermitian(h: &Matrix4<C64>) -> f64 {
    let mut embed = SMatrix::<f64, 8, 8>::zeros();
    for i in 0..4 {
        for j in 0..4 {
            let z = h[(i, j)];
            embed[(i, j)] = z.re;
            embed[(i + 4, j + 4)] = z.re;
            embed[(i, j + 4)] = -z.im;
            embed[(i + 4, j)] = z.im;
        }
    }
    // Symmetrize against representation round-off before the eigensolve.
    embed = (embed + embed.transpose()) * 0.5;
    let eig = embed.symmetric_eigen();
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// A validated two-qubit density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    rho: Matrix4<C64>,
}

impl TwoQubitState {
    /// Validates Hermiticity, unit trace, and positivity, then wraps the matrix.
    pub fn new(rho: Matrix4<C64>) -> Result<Self> {
        validate_state(rho)
    }

    /// The underlying density matrix.
    pub fn density_matrix(&self) -> &Matrix4<C64> {
        &self.rho
    }

    /// `I/4`, the state with no correlations at all.
    pub fn maximally_mixed() -> Self {
        Self {
            rho: Matrix4::identity() * C64::new(0.25, 0.0),
        }
    }

    /// The singlet `(|01> - |10>)/sqrt(2)` as a density matrix.
    pub fn singlet() -> Self {
        let mut rho = Matrix4::zeros();
        let half = C64::new(0.5, 0.0);
        rho[(1, 1)] = half;
        rho[(2, 2)] = half;
        rho[(1, 2)] = -half;
        rho[(2, 1)] = -half;
        Self { rho }
    }

    /// Werner state `p |psi-><psi-| + (1-p) I/4`.
    pub fn werner(p: f64) -> Result<Self> {
        let singlet = Self::singlet();
        let rho = singlet.rho * C64::new(p, 0.0)
            + Matrix4::identity() * C64::new((1.0 - p) * 0.25, 0.0);
        Self::new(rho)
    }

    /// X-state `(I + nu sx.sy + nu sy.sx + l sz.sz) / 4`.
    pub fn x_state(nu: f64, l: f64) -> Result<Self> {
        let mut rho = Matrix4::identity() * C64::new(0.25, 0.0);
        rho += kron2(&pauli(0), &pauli(1)) * C64::new(0.25 * nu, 0.0);
        rho += kron2(&pauli(1), &pauli(0)) * C64::new(0.25 * nu, 0.0);
        rho += kron2(&pauli(2), &pauli(2)) * C64::new(0.25 * l, 0.0);
        Self::new(rho)
    }

    /// Bloch decomposition of this state.
    pub fn bloch(&self) -> BlochForm {
        bloch_decompose(self)
    }
}

/// Bloch form of a two-qubit state: local vectors `r`, `s` and the 3x3
/// correlation matrix `m`. For states produced by [`bloch_decompose`] every
/// entry lies in `[-1, 1]` and every singular value of `m` is at most 1;
/// synthetic forms used in sweeps need not satisfy either.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochForm {
    /// Alice's marginal Bloch vector.
    pub r: Vector3<f64>,
    /// Bob's marginal Bloch vector.
    pub s: Vector3<f64>,
    /// Correlation matrix `m[k][l] = tr(rho (sigma_k x sigma_l))`.
    pub m: Matrix3<f64>,
}

impl BlochForm {
    /// A form with no marginals, only the given correlation matrix.
    pub fn from_correlation(m: Matrix3<f64>) -> Self {
        Self {
            r: Vector3::zeros(),
            s: Vector3::zeros(),
            m,
        }
    }
}

/// Sorted singular-value report of a correlation matrix.
#[derive(Debug, Clone)]
pub struct SvdReport {
    /// Singular values sorted descending.
    pub singular_values: [f64; 3],
    /// Largest singular value.
    pub sigma_max: f64,
    /// Number of singular values within `rel_tol` (relative) of `sigma_max`.
    pub degeneracy: usize,
    /// Columns are left singular vectors, ordered as `singular_values`.
    pub left_vectors: Matrix3<f64>,
    /// Columns are right singular vectors, ordered as `singular_values`.
    pub right_vectors: Matrix3<f64>,
}

/// Checks the three state invariants and returns the wrapped state.
pub fn validate_state(rho: Matrix4<C64>) -> Result<TwoQubitState> {
    let mut max_dev: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            let dev = (rho[(i, j)] - rho[(j, i)].conj()).norm();
            max_dev = max_dev.max(dev);
        }
    }
    if max_dev > HERMITICITY_TOL {
        return Err(Error::NotHermitian { max_dev });
    }
    let trace = (rho[(0, 0)] + rho[(1, 1)] + rho[(2, 2)] + rho[(3, 3)]).re;
    let dev = (trace - 1.0).abs();
    if dev > TRACE_TOL {
        return Err(Error::TraceNotOne { trace, dev });
    }
    let min_eig = min_eigenvalue_hermitian(&rho);
    if min_eig < -PSD_TOL {
        return Err(Error::NotPositive { min_eig });
    }
    Ok(TwoQubitState { rho })
}

/// Extracts `(r, s, M)` from a valid state.
pub fn bloch_decompose(state: &TwoQubitState) -> BlochForm {
    let rho = &state.rho;
    let id = Matrix2::identity();
    let mut r = Vector3::zeros();
    let mut s = Vector3::zeros();
    let mut m = Matrix3::zeros();
    for k in 0..3 {
        r[k] = trace_product(rho, &kron2(&pauli(k), &id)).re;
        s[k] = trace_product(rho, &kron2(&id, &pauli(k))).re;
        for l in 0..3 {
            m[(k, l)] = trace_product(rho, &kron2(&pauli(k), &pauli(l))).re;
        }
    }
    BlochForm { r, s, m }
}

/// Rebuilds the density matrix from a Bloch form; fails with
/// [`Error::NotPositive`] when `(r, s, M)` is not physical.
pub fn bloch_compose(b: &BlochForm) -> Result<TwoQubitState> {
    let id = Matrix2::identity();
    let mut rho = Matrix4::identity() * C64::new(0.25, 0.0);
    for k in 0..3 {
        rho += kron2(&pauli(k), &id) * C64::new(0.25 * b.r[k], 0.0);
        rho += kron2(&id, &pauli(k)) * C64::new(0.25 * b.s[k], 0.0);
        for l in 0..3 {
            rho += kron2(&pauli(k), &pauli(l)) * C64::new(0.25 * b.m[(k, l)], 0.0);
        }
    }
    validate_state(rho)
}

/// Full SVD of the correlation matrix with singular values sorted descending
/// and a degeneracy count of the top value at relative tolerance `rel_tol`.
pub fn correlation_svd(b: &BlochForm, rel_tol: f64) -> SvdReport {
    debug_assert!(rel_tol > 0.0, "degeneracy tolerance must be positive");
    let svd = b.m.svd(true, true);
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    let sv = svd.singular_values;

    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &c| sv[c].partial_cmp(&sv[a]).expect("finite singular values"));

    let mut singular_values = [0.0; 3];
    let mut left = Matrix3::zeros();
    let mut right = Matrix3::zeros();
    for (dst, &src) in order.iter().enumerate() {
        singular_values[dst] = sv[src];
        left.set_column(dst, &u.column(src));
        right.set_column(dst, &v_t.row(src).transpose());
    }
    let sigma_max = singular_values[0];
    let denom = sigma_max.max(1e-300);
    let degeneracy = singular_values
        .iter()
        .filter(|&&s| (sigma_max - s) / denom <= rel_tol)
        .count();
    SvdReport {
        singular_values,
        sigma_max,
        degeneracy,
        left_vectors: left,
        right_vectors: right,
    }
}

/// Outcome of one `|x^T A y| <= sigma_max ||x|| ||y||` check.
#[derive(Debug, Clone, Copy)]
pub struct SingularBound {
    /// `|x^T A y|`.
    pub lhs: f64,
    /// `sigma_max(A) ||x|| ||y||`.
    pub rhs: f64,
    /// Whether `lhs <= rhs + 1e-10`.
    pub holds: bool,
}

/// Evaluates both sides of the singular-value inequality for a square matrix
/// and a pair of vectors. Serves as the property-test oracle for the bound.
pub fn rayleigh_singular_bound(
    a: &DMatrix<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<SingularBound> {
    let n = a.nrows();
    if a.ncols() != n || x.len() != n || y.len() != n {
        return Err(Error::DimensionMismatch {
            context: format!(
                "matrix is {}x{}, vectors have lengths {} and {}",
                a.nrows(),
                a.ncols(),
                x.len(),
                y.len()
            ),
        });
    }
    let lhs = (x.transpose() * a * y)[(0, 0)].abs();
    let svd = a.clone().svd(false, false);
    let sigma_max = svd
        .singular_values
        .iter()
        .copied()
        .fold(0.0_f64, f64::max);
    let rhs = sigma_max * x.norm() * y.norm();
    Ok(SingularBound {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-10,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag_state(d: [f64; 4]) -> Matrix4<C64> {
        Matrix4::from_diagonal(&nalgebra::Vector4::new(
            C64::new(d[0], 0.0),
            C64::new(d[1], 0.0),
            C64::new(d[2], 0.0),
            C64::new(d[3], 0.0),
        ))
    }

    #[test]
    fn pauli_trace_orthogonality() {
        for k in 0..3 {
            for l in 0..3 {
                let prod = pauli(k) * pauli(l);
                let tr = (prod[(0, 0)] + prod[(1, 1)]).re;
                let expected = if k == l { 2.0 } else { 0.0 };
                assert_abs_diff_eq!(tr, expected, epsilon = 1e-15);
                let tr_im = (prod[(0, 0)] + prod[(1, 1)]).im;
                assert_abs_diff_eq!(tr_im, 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn maximally_mixed_is_valid_and_uncorrelated() {
        let state = TwoQubitState::new(*TwoQubitState::maximally_mixed().density_matrix())
            .expect("identity/4 is a state");
        let b = state.bloch();
        assert!(b.r.norm() < 1e-15);
        assert!(b.s.norm() < 1e-15);
        assert!(b.m.norm() < 1e-15);
    }

    #[test]
    fn singlet_is_valid_with_minus_identity_correlations() {
        let b = TwoQubitState::singlet().bloch();
        assert!(b.r.norm() < 1e-14);
        assert!(b.s.norm() < 1e-14);
        for k in 0..3 {
            for l in 0..3 {
                let expected = if k == l { -1.0 } else { 0.0 };
                assert_abs_diff_eq!(b.m[(k, l)], expected, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn negative_eigenvalue_is_rejected() {
        let scale = 1.0 / (1.0 - 1e-3);
        let rho = diag_state([scale, 0.0, 0.0, -1e-3 * scale]);
        match TwoQubitState::new(rho) {
            Err(Error::NotPositive { min_eig }) => assert!(min_eig < -1e-4),
            other => panic!("expected NotPositive, got {other:?}"),
        }
    }

    #[test]
    fn non_hermitian_is_rejected_with_magnitude() {
        let mut rho = diag_state([0.25; 4]);
        rho[(0, 1)] = C64::new(0.1, 0.0);
        match TwoQubitState::new(rho) {
            Err(Error::NotHermitian { max_dev }) => assert_abs_diff_eq!(max_dev, 0.1, epsilon = 1e-12),
            other => panic!("expected NotHermitian, got {other:?}"),
        }
    }

    #[test]
    fn wrong_trace_is_rejected() {
        let rho = diag_state([0.5; 4]);
        match TwoQubitState::new(rho) {
            Err(Error::TraceNotOne { trace, .. }) => assert_abs_diff_eq!(trace, 2.0, epsilon = 1e-12),
            other => panic!("expected TraceNotOne, got {other:?}"),
        }
    }

    #[test]
    fn werner_decomposition_matches_formula() {
        let p = 0.73;
        let b = TwoQubitState::werner(p).unwrap().bloch();
        for k in 0..3 {
            for l in 0..3 {
                let expected = if k == l { -p } else { 0.0 };
                assert_abs_diff_eq!(b.m[(k, l)], expected, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn x_state_decomposition_matches_pattern() {
        let (nu, l) = (0.7, 0.6);
        let b = TwoQubitState::x_state(nu, l).unwrap().bloch();
        let mut expected = Matrix3::zeros();
        expected[(0, 1)] = nu;
        expected[(1, 0)] = nu;
        expected[(2, 2)] = l;
        assert!((b.m - expected).norm() < 1e-14);
        assert!(b.r.norm() < 1e-14);
        assert!(b.s.norm() < 1e-14);
    }

    #[test]
    fn compose_zero_form_gives_maximally_mixed() {
        let b = BlochForm::from_correlation(Matrix3::zeros());
        let state = bloch_compose(&b).unwrap();
        let diff = state.density_matrix() - TwoQubitState::maximally_mixed().density_matrix();
        assert!(diff.norm() < 1e-15);
    }

    #[test]
    fn compose_diagonal_form_gives_werner() {
        let p = 0.4;
        let b = BlochForm::from_correlation(Matrix3::from_diagonal(&Vector3::new(-p, -p, -p)));
        let state = bloch_compose(&b).unwrap();
        let diff = state.density_matrix() - TwoQubitState::werner(p).unwrap().density_matrix();
        assert!(diff.norm() < 1e-14);
    }

    #[test]
    fn compose_out_of_range_correlation_fails() {
        let b = BlochForm::from_correlation(Matrix3::from_diagonal(&Vector3::new(-2.0, 0.0, 0.0)));
        match bloch_compose(&b) {
            Err(Error::NotPositive { min_eig }) => assert!(min_eig < -0.2),
            other => panic!("expected NotPositive, got {other:?}"),
        }
    }

    #[test]
    fn svd_of_werner_correlations() {
        let p = 0.8;
        let b = BlochForm::from_correlation(Matrix3::from_diagonal(&Vector3::new(-p, -p, -p)));
        let report = correlation_svd(&b, DEFAULT_DEGENERACY_TOL);
        assert_abs_diff_eq!(report.sigma_max, 0.8, epsilon = 1e-14);
        assert_eq!(report.degeneracy, 3);
    }

    #[test]
    fn svd_of_zero_matrix() {
        let report = correlation_svd(
            &BlochForm::from_correlation(Matrix3::zeros()),
            DEFAULT_DEGENERACY_TOL,
        );
        assert_eq!(report.sigma_max, 0.0);
        assert_eq!(report.degeneracy, 3);
    }

    #[test]
    fn svd_of_x_state_correlations() {
        let b = TwoQubitState::x_state(0.7, 0.6).unwrap().bloch();
        let report = correlation_svd(&b, DEFAULT_DEGENERACY_TOL);
        assert_abs_diff_eq!(report.singular_values[0], 0.7, epsilon = 1e-14);
        assert_abs_diff_eq!(report.singular_values[1], 0.7, epsilon = 1e-14);
        assert_abs_diff_eq!(report.singular_values[2], 0.6, epsilon = 1e-14);
        assert_eq!(report.degeneracy, 2);
    }

    #[test]
    fn svd_reconstructs_the_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let m = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let b = BlochForm::from_correlation(m);
            let rep = correlation_svd(&b, DEFAULT_DEGENERACY_TOL);
            let sigma = Matrix3::from_diagonal(&Vector3::from_row_slice(&rep.singular_values));
            let rebuilt = rep.left_vectors * sigma * rep.right_vectors.transpose();
            assert!((rebuilt - m).norm() < 1e-10, "reconstruction drifted");
            for s in rep.singular_values {
                assert!(s >= 0.0);
            }
            assert!(rep.singular_values[0] >= rep.singular_values[1]);
            assert!(rep.singular_values[1] >= rep.singular_values[2]);
        }
    }

    #[test]
    fn singular_bound_identity_and_saturation() {
        let a = DMatrix::identity(3, 3);
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let check = rayleigh_singular_bound(&a, &e1, &e1).unwrap();
        assert_abs_diff_eq!(check.lhs, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(check.rhs, 1.0, epsilon = 1e-14);
        assert!(check.holds);

        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let check = rayleigh_singular_bound(&a, &e1, &e1).unwrap();
        assert_abs_diff_eq!(check.lhs, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(check.rhs, 2.0, epsilon = 1e-14);
        assert!(check.holds);
    }

    #[test]
    fn singular_bound_dimension_mismatch() {
        let a = DMatrix::identity(3, 3);
        let x = DVector::from_vec(vec![1.0, 0.0]);
        let y = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(matches!(
            rayleigh_singular_bound(&a, &x, &y),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn singular_bound_holds_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.random_range(2..6);
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let check = rayleigh_singular_bound(&a, &x, &y).unwrap();
            assert!(check.holds, "lhs {} rhs {}", check.lhs, check.rhs);
        }
    }

    #[test]
    fn singular_bound_equality_from_top_singular_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let n = rng.random_range(2..5);
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let svd = a.clone().svd(true, true);
            let (imax, _) = svd
                .singular_values
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| {
                    if s > acc.1 {
                        (i, s)
                    } else {
                        acc
                    }
                });
            let u = svd.u.as_ref().unwrap().column(imax).into_owned();
            let v = svd.v_t.as_ref().unwrap().row(imax).transpose().into_owned();
            let scale_x = rng.random_range(0.5..2.0);
            let scale_y = rng.random_range(0.5..2.0);
            let check = rayleigh_singular_bound(&a, &(u * scale_x), &(v * scale_y)).unwrap();
            assert!(
                (check.lhs - check.rhs).abs() <= 1e-10,
                "expected saturation, lhs {} rhs {}",
                check.lhs,
                check.rhs
            );
        }
    }
}
