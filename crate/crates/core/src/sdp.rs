//! Dense semidefinite programming over block-diagonal symmetric matrices.
//!
//! Problems are stated in equality standard form over a block variable
//! `X = diag(X_1, ..., X_B)`:
//!
//! ```text
//! minimize/maximize  <C, X>
//! subject to         <A_i, X> = b_i,   X >= 0
//! ```
//!
//! The solver is an infeasible-start primal-dual interior-point method with
//! the HKM search direction and a Mehrotra predictor-corrector step. The
//! Schur complement is factored by dense Cholesky with an adaptive diagonal
//! regularization ladder (0, then 1e-12 escalating tenfold up to 1e-6).
//! Constraint matrices are kept sparse; the objective is dense.
//!
//! Inequalities are not handled here: callers convert them with explicit
//! 1x1 slack blocks.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Symmetry tolerance accepted for objective blocks.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Optimization direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Termination state of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    /// All three residuals met their tolerances.
    Optimal,
    /// Iteration budget exhausted first.
    MaxIter,
    /// The Schur complement stayed indefinite through the full
    /// regularization ladder, or the iteration stalled.
    NumericalTrouble,
}

/// One sparse symmetric constraint `<A, X> = rhs`.
#[derive(Debug, Clone)]
pub struct Constraint {
    rhs: f64,
    terms: Vec<(usize, usize, usize, f64)>,
}

impl Constraint {
    /// Empty constraint with the given right-hand side.
    pub fn new(rhs: f64) -> Self {
        Self {
            rhs,
            terms: Vec::new(),
        }
    }

    /// Adds `coeff * X_block[i, j]` to the constraint, mirroring off-diagonal
    /// entries so the stored matrix stays symmetric.
    pub fn add_entry(&mut self, block: usize, i: usize, j: usize, coeff: f64) {
        if i == j {
            self.terms.push((block, i, j, coeff));
        } else {
            self.terms.push((block, i, j, 0.5 * coeff));
            self.terms.push((block, j, i, 0.5 * coeff));
        }
    }

    /// Builds a constraint from `(block, i, j, coeff)` logical entries.
    pub fn from_entries(rhs: f64, entries: &[(usize, usize, usize, f64)]) -> Self {
        let mut c = Self::new(rhs);
        for &(b, i, j, v) in entries {
            c.add_entry(b, i, j, v);
        }
        c
    }

    /// Right-hand side.
    pub fn rhs(&self) -> f64 {
        self.rhs
    }

    fn apply(&self, x: &[DMatrix<f64>]) -> f64 {
        self.terms
            .iter()
            .map(|&(b, i, j, v)| v * x[b][(i, j)])
            .sum()
    }

    fn frobenius(&self) -> f64 {
        self.terms
            .iter()
            .map(|&(_, _, _, v)| v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn scatter(&self, weight: f64, out: &mut [DMatrix<f64>]) {
        for &(b, i, j, v) in &self.terms {
            out[b][(i, j)] += weight * v;
        }
    }
}

/// A block-diagonal SDP in equality standard form.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    block_dims: Vec<usize>,
    objective: Vec<DMatrix<f64>>,
    constraints: Vec<Constraint>,
    sense: Sense,
}

impl SdpProblem {
    /// Validates block layout, objective symmetry, and the constraint-count
    /// cap `m <= sum_b d_b (d_b + 1) / 2`.
    pub fn new(
        block_dims: Vec<usize>,
        objective: Vec<DMatrix<f64>>,
        constraints: Vec<Constraint>,
        sense: Sense,
    ) -> Result<Self> {
        if block_dims.is_empty() || block_dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidInput(
                "every block dimension must be at least 1".into(),
            ));
        }
        if objective.len() != block_dims.len() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "{} objective blocks for {} block dims",
                    objective.len(),
                    block_dims.len()
                ),
            });
        }
        for (k, (c, &d)) in objective.iter().zip(&block_dims).enumerate() {
            if c.nrows() != d || c.ncols() != d {
                return Err(Error::DimensionMismatch {
                    context: format!("objective block {k} is {}x{}, expected {d}x{d}", c.nrows(), c.ncols()),
                });
            }
            let asym = (c - c.transpose()).abs().max();
            if asym > SYMMETRY_TOL {
                return Err(Error::InvalidInput(format!(
                    "objective block {k} is not symmetric (max asymmetry {asym:.3e})"
                )));
            }
        }
        let cap: usize = block_dims.iter().map(|&d| d * (d + 1) / 2).sum();
        if constraints.len() > cap {
            return Err(Error::InvalidInput(format!(
                "{} constraints exceed the {} independent entries of the variable",
                constraints.len(),
                cap
            )));
        }
        for (k, c) in constraints.iter().enumerate() {
            for &(b, i, j, _) in &c.terms {
                if b >= block_dims.len() || i >= block_dims[b] || j >= block_dims[b] {
                    return Err(Error::DimensionMismatch {
                        context: format!("constraint {k} addresses entry ({i},{j}) of block {b}"),
                    });
                }
            }
        }
        Ok(Self {
            block_dims,
            objective,
            constraints,
            sense,
        })
    }

    /// Block dimensions.
    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    /// Number of equality constraints.
    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// Optimization sense.
    pub fn sense(&self) -> Sense {
        self.sense
    }

    /// Human-readable listing of the problem data, for reproducing failures.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "sdp {:?} over blocks {:?}, {} constraints",
            self.sense,
            self.block_dims,
            self.constraints.len()
        );
        for (k, c) in self.objective.iter().enumerate() {
            let _ = writeln!(out, "objective block {k}:\n{c:.6}");
        }
        for (k, c) in self.constraints.iter().enumerate() {
            let _ = write!(out, "constraint {k}: rhs = {}, entries", c.rhs);
            for &(b, i, j, v) in &c.terms {
                let _ = write!(out, " ({b})[{i},{j}]={v}");
            }
            let _ = writeln!(out);
        }
        out
    }
}

/// Solver knobs.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Relative duality-gap tolerance.
    pub tol_gap: f64,
    /// Relative primal/dual feasibility tolerance.
    pub tol_feas: f64,
    /// Iteration cap.
    pub max_iter: usize,
    /// Print the problem dump to stderr when the solve does not reach
    /// optimality.
    pub dump_on_failure: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol_gap: 1e-7,
            tol_feas: 1e-8,
            max_iter: 200,
            dump_on_failure: false,
        }
    }
}

/// Primal/dual solution pair in the problem's stated sense.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    /// Primal blocks.
    pub x: Vec<DMatrix<f64>>,
    /// Dual multipliers, one per constraint.
    pub y: DVector<f64>,
    /// Dual slack blocks.
    pub z: Vec<DMatrix<f64>>,
    /// Objective value of `x`.
    pub primal_value: f64,
    /// Dual objective value.
    pub dual_value: f64,
    /// Optimality gap, oriented so it is nonnegative at an exact optimum.
    pub gap: f64,
    /// Termination state.
    pub status: SolverStatus,
    /// Iterations performed.
    pub iterations: usize,
}

/// Residuals recomputed directly from a solution, independent of the
/// iteration that produced it.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    /// `max_i |<A_i, X> - b_i|`.
    pub max_equality_residual: f64,
    /// Smallest eigenvalue of the primal blocks.
    pub min_eig_x: f64,
    /// Smallest eigenvalue of the dual slack blocks.
    pub min_eig_z: f64,
    /// Max-abs entry of the dual linear-constraint residual.
    pub dual_residual: f64,
    /// `<X, Z>`.
    pub complementarity: f64,
    /// `|primal - dual|`.
    pub gap: f64,
    /// Equality residual within 1e-7.
    pub primal_ok: bool,
    /// Both eigenvalue floors within -1e-8.
    pub psd_ok: bool,
    /// Gap within `1e-6 (1 + |primal|)`.
    pub gap_ok: bool,
}

fn block_zeros(dims: &[usize]) -> Vec<DMatrix<f64>> {
    dims.iter().map(|&d| DMatrix::zeros(d, d)).collect()
}

fn block_identity(dims: &[usize], scale: f64) -> Vec<DMatrix<f64>> {
    dims.iter()
        .map(|&d| DMatrix::identity(d, d) * scale)
        .collect()
}

fn block_dot(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.zip_fold(y, 0.0, |acc, u, v| acc + u * v))
        .sum()
}

fn block_max_abs(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|m| m.abs().max()).fold(0.0, f64::max)
}

fn block_symmetrize(a: &mut [DMatrix<f64>]) {
    for m in a.iter_mut() {
        let t = m.transpose();
        *m += t;
        *m *= 0.5;
    }
}

fn min_eig_sym(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

fn block_min_eig(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|m| min_eig_sym(m)).fold(f64::INFINITY, f64::min)
}

/// Largest step `alpha` with `X + alpha dX >= 0`, computed from the Cholesky
/// factor of `X`.
fn max_psd_step(x: &[DMatrix<f64>], dx: &[DMatrix<f64>]) -> f64 {
    let mut alpha = f64::INFINITY;
    for (xb, dxb) in x.iter().zip(dx) {
        let chol = match Cholesky::new(xb.clone()) {
            Some(c) => c,
            // X drifted to the PSD boundary; only allow shrinking steps.
            None => return 0.0,
        };
        let l = chol.l();
        let li_dx = l
            .solve_lower_triangular(dxb)
            .expect("cholesky factor is nonsingular");
        let w = l
            .solve_lower_triangular(&li_dx.transpose())
            .expect("cholesky factor is nonsingular")
            .transpose();
        let lam = min_eig_sym(&w);
        if lam < -1e-14 {
            alpha = alpha.min(-1.0 / lam);
        }
    }
    alpha
}

fn cholesky_with_regularization(
    m: &DMatrix<f64>,
) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Some(c);
    }
    let scale = m.diagonal().amax().max(1.0);
    let mut reg = 1e-12;
    while reg <= 1e-6 {
        let mut shifted = m.clone();
        for i in 0..m.nrows() {
            shifted[(i, i)] += reg * scale;
        }
        if let Some(c) = Cholesky::new(shifted) {
            return Some(c);
        }
        reg *= 10.0;
    }
    None
}

struct Residuals {
    r_p: DVector<f64>,
    r_d: Vec<DMatrix<f64>>,
    p_inf: f64,
    d_inf: f64,
    p_obj: f64,
    d_obj: f64,
    rel_gap: f64,
}

fn compute_residuals(
    c: &[DMatrix<f64>],
    constraints: &[Constraint],
    b: &DVector<f64>,
    x: &[DMatrix<f64>],
    y: &DVector<f64>,
    z: &[DMatrix<f64>],
    b_scale: f64,
    c_scale: f64,
) -> Residuals {
    let m = constraints.len();
    let mut r_p = DVector::zeros(m);
    for (i, con) in constraints.iter().enumerate() {
        r_p[i] = b[i] - con.apply(x);
    }
    let mut r_d: Vec<DMatrix<f64>> = c.iter().zip(z).map(|(cb, zb)| cb - zb).collect();
    for (i, con) in constraints.iter().enumerate() {
        con.scatter(-y[i], &mut r_d);
    }
    let p_obj = block_dot(c, x);
    let d_obj = b.dot(y);
    let p_inf = r_p.amax() / (1.0 + b_scale);
    let d_inf = block_max_abs(&r_d) / (1.0 + c_scale);
    let rel_gap = (p_obj - d_obj).abs() / (1.0 + p_obj.abs() + d_obj.abs());
    Residuals {
        r_p,
        r_d,
        p_inf,
        d_inf,
        p_obj,
        d_obj,
        rel_gap,
    }
}

/// Solves the problem with the HKM predictor-corrector interior-point
/// iteration. Deterministic: identical inputs and options give identical
/// iterates.
pub fn solve(problem: &SdpProblem, opts: &SolveOptions) -> Result<SdpSolution> {
    let dims = &problem.block_dims;
    let m = problem.constraints.len();
    let nu: f64 = dims.iter().map(|&d| d as f64).sum();

    // Internal form is minimization.
    let c_int: Vec<DMatrix<f64>> = match problem.sense {
        Sense::Minimize => problem.objective.clone(),
        Sense::Maximize => problem.objective.iter().map(|c| -c).collect(),
    };
    let b = DVector::from_iterator(m, problem.constraints.iter().map(|c| c.rhs));
    let b_scale = if m > 0 { b.amax() } else { 0.0 };
    let c_scale = block_max_abs(&c_int);
    let max_a_norm = problem
        .constraints
        .iter()
        .map(|c| c.frobenius())
        .fold(0.0, f64::max);

    let tau = 1.0 + b_scale + max_a_norm;
    let mut x = block_identity(dims, tau);
    let mut z = block_identity(dims, tau);
    let mut y = DVector::<f64>::zeros(m);

    let mut status = SolverStatus::MaxIter;
    let mut iterations = 0;
    let mut stalls = 0;

    for iter in 0..opts.max_iter {
        iterations = iter;
        let res = compute_residuals(
            &c_int,
            &problem.constraints,
            &b,
            &x,
            &y,
            &z,
            b_scale,
            c_scale,
        );
        if !res.p_obj.is_finite() || !res.d_obj.is_finite() {
            status = SolverStatus::NumericalTrouble;
            break;
        }
        if res.p_inf <= opts.tol_feas && res.d_inf <= opts.tol_feas && res.rel_gap <= opts.tol_gap
        {
            status = SolverStatus::Optimal;
            break;
        }

        let mu = block_dot(&x, &z) / nu;
        if !(mu.is_finite()) || mu < 0.0 {
            status = SolverStatus::NumericalTrouble;
            break;
        }

        // Per-block inverse of Z via Cholesky.
        let mut zinv = Vec::with_capacity(dims.len());
        let mut z_ok = true;
        for zb in &z {
            match Cholesky::new(zb.clone()) {
                Some(chol) => zinv.push(chol.inverse()),
                None => {
                    z_ok = false;
                    break;
                }
            }
        }
        if !z_ok {
            status = SolverStatus::NumericalTrouble;
            break;
        }

        // Schur complement M[i][j] = tr(A_i X A_j Z^-1).
        let mut schur = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let mut acc = 0.0;
                for &(bi, p, q, vi) in &problem.constraints[i].terms {
                    for &(bj, r, s, vj) in &problem.constraints[j].terms {
                        if bi == bj {
                            acc += vi * vj * x[bi][(q, r)] * zinv[bi][(s, p)];
                        }
                    }
                }
                schur[(i, j)] = acc;
                schur[(j, i)] = acc;
            }
        }
        let factor = match cholesky_with_regularization(&schur) {
            Some(f) => f,
            None => {
                status = SolverStatus::NumericalTrouble;
                break;
            }
        };

        // X R_d Z^-1 appears in both the predictor and corrector right-hand
        // sides.
        let xrz: Vec<DMatrix<f64>> = (0..dims.len())
            .map(|k| &x[k] * &res.r_d[k] * &zinv[k])
            .collect();

        let solve_direction = |g: &[DMatrix<f64>]| {
            let mut rhs = res.r_p.clone();
            for (i, con) in problem.constraints.iter().enumerate() {
                rhs[i] -= con.apply(g);
            }
            let dy = factor.solve(&rhs);
            let mut s = block_zeros(dims);
            for (i, con) in problem.constraints.iter().enumerate() {
                con.scatter(dy[i], &mut s);
            }
            let mut dz: Vec<DMatrix<f64>> =
                res.r_d.iter().zip(&s).map(|(rd, sb)| rd - sb).collect();
            block_symmetrize(&mut dz);
            let mut dx: Vec<DMatrix<f64>> = (0..dims.len())
                .map(|k| &g[k] + &x[k] * &s[k] * &zinv[k])
                .collect();
            block_symmetrize(&mut dx);
            (dx, dy, dz)
        };

        // Predictor: sigma = 0, no corrector term.
        let g_aff: Vec<DMatrix<f64>> = (0..dims.len()).map(|k| -&x[k] - &xrz[k]).collect();
        let (dx_aff, _dy_aff, dz_aff) = solve_direction(&g_aff);

        let ap_aff = max_psd_step(&x, &dx_aff).min(1.0);
        let ad_aff = max_psd_step(&z, &dz_aff).min(1.0);
        let mut mu_aff = 0.0;
        for k in 0..dims.len() {
            let xa = &x[k] + &dx_aff[k] * ap_aff;
            let za = &z[k] + &dz_aff[k] * ad_aff;
            mu_aff += xa.zip_fold(&za, 0.0, |acc, u, v| acc + u * v);
        }
        mu_aff = (mu_aff / nu).max(0.0);
        let sigma = ((mu_aff / mu).powi(3)).clamp(1e-10, 1.0);

        // Corrector with centering.
        let g_corr: Vec<DMatrix<f64>> = (0..dims.len())
            .map(|k| {
                &zinv[k] * (sigma * mu) - &x[k] - &xrz[k] - &dx_aff[k] * &dz_aff[k] * &zinv[k]
            })
            .collect();
        let (dx, dy, dz) = solve_direction(&g_corr);

        let ap = (0.98 * max_psd_step(&x, &dx)).min(1.0);
        let ad = (0.98 * max_psd_step(&z, &dz)).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            stalls += 1;
            if stalls >= 5 {
                status = SolverStatus::NumericalTrouble;
                break;
            }
        } else {
            stalls = 0;
        }

        for k in 0..dims.len() {
            x[k] += &dx[k] * ap;
            z[k] += &dz[k] * ad;
        }
        y += dy * ad;
        iterations = iter + 1;
    }

    if status == SolverStatus::MaxIter || status == SolverStatus::NumericalTrouble {
        // Re-check in case the last step reached the tolerances.
        let res = compute_residuals(
            &c_int,
            &problem.constraints,
            &b,
            &x,
            &y,
            &z,
            b_scale,
            c_scale,
        );
        if res.p_obj.is_finite()
            && res.p_inf <= opts.tol_feas
            && res.d_inf <= opts.tol_feas
            && res.rel_gap <= opts.tol_gap
        {
            status = SolverStatus::Optimal;
        }
    }

    let p_obj_int = block_dot(&c_int, &x);
    let d_obj_int = b.dot(&y);
    let (primal_value, dual_value, y_out, gap) = match problem.sense {
        Sense::Minimize => (p_obj_int, d_obj_int, y.clone(), p_obj_int - d_obj_int),
        Sense::Maximize => (-p_obj_int, -d_obj_int, -y.clone(), -d_obj_int - -p_obj_int),
    };

    if status != SolverStatus::Optimal && opts.dump_on_failure {
        eprintln!(
            "sdp solve ended with {status:?} after {iterations} iterations\n{}",
            problem.dump()
        );
    }

    Ok(SdpSolution {
        x,
        y: y_out,
        z,
        primal_value,
        dual_value,
        gap,
        status,
        iterations,
    })
}

/// Recomputes all solution residuals from scratch.
pub fn feasibility_certificate(sol: &SdpSolution, problem: &SdpProblem) -> ResidualReport {
    let mut max_eq = 0.0_f64;
    for con in &problem.constraints {
        max_eq = max_eq.max((con.apply(&sol.x) - con.rhs).abs());
    }
    // Dual slack identity in the stated sense: Z = C - sum y_i A_i for
    // minimization, Z = sum y_i A_i - C for maximization.
    let mut lin = block_zeros(&problem.block_dims);
    for (i, con) in problem.constraints.iter().enumerate() {
        con.scatter(sol.y[i], &mut lin);
    }
    let mut dual_res = 0.0_f64;
    for k in 0..problem.block_dims.len() {
        let expected = match problem.sense {
            Sense::Minimize => &problem.objective[k] - &lin[k],
            Sense::Maximize => &lin[k] - &problem.objective[k],
        };
        dual_res = dual_res.max((expected - &sol.z[k]).abs().max());
    }
    let gap = (sol.primal_value - sol.dual_value).abs();
    ResidualReport {
        max_equality_residual: max_eq,
        min_eig_x: block_min_eig(&sol.x),
        min_eig_z: block_min_eig(&sol.z),
        dual_residual: dual_res,
        complementarity: block_dot(&sol.x, &sol.z),
        gap,
        primal_ok: max_eq <= 1e-7,
        psd_ok: block_min_eig(&sol.x) >= -1e-8 && block_min_eig(&sol.z) >= -1e-8,
        gap_ok: gap <= 1e-6 * (1.0 + sol.primal_value.abs()),
    }
}
