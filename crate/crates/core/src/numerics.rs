//! Dense complex linear algebra: Hermitian eigendecomposition (cyclic
//! Jacobi), projection onto the PSD cone and least-squares solves.
//!
//! Matrices here are small (at most a few dozen rows), so everything is
//! dense and allocation-light rather than blocked.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Tolerances shared by every numeric kernel in the crate.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericOptions {
    /// Relative tolerance for accepting a matrix as Hermitian.
    pub hermitian_tol: f64,
    /// Sweep cap for the Jacobi eigensolver.
    pub eig_max_sweeps: usize,
    /// Condition number above which a least-squares matrix is treated as rank deficient.
    pub rank_condition_limit: f64,
}

impl Default for NumericOptions {
    fn default() -> Self {
        Self {
            hermitian_tol: 1e-12,
            eig_max_sweeps: 60,
            rank_condition_limit: 1e12,
        }
    }
}

static OPTIONS: OnceLock<NumericOptions> = OnceLock::new();

/// The process-wide numeric options. Defaults apply unless
/// [`set_options`] ran first.
pub fn options() -> &'static NumericOptions {
    OPTIONS.get_or_init(NumericOptions::default)
}

/// Install process-wide numeric options. Fails once options have been read
/// or set, so every kernel in a run sees the same values.
pub fn set_options(opts: NumericOptions) -> Result<()> {
    OPTIONS
        .set(opts)
        .map_err(|_| Error::param("numeric options already initialized"))
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// (H + Hᴴ)/2
pub fn hermitian_part(h: &CMatrix) -> CMatrix {
    (h + h.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn is_hermitian(h: &CMatrix, tol: f64) -> bool {
    if !h.is_square() {
        return false;
    }
    let bound = tol * frobenius(h).max(1.0);
    let n = h.nrows();
    (0..n).all(|i| (i..n).all(|j| (h[(i, j)] - h[(j, i)].conj()).norm() <= bound))
}

/// Eigenvalues in descending order and the matching orthonormal eigenvectors
/// (as columns).
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEig {
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            for i in 0..n {
                scaled[(i, j)] *= lambda;
            }
        }
        &scaled * self.vectors.adjoint()
    }
}

/// Cyclic Jacobi eigendecomposition of a Hermitian matrix.
///
/// The input is symmetrized as (H + Hᴴ)/2 before iterating, so small
/// asymmetries from upstream arithmetic are tolerated.
pub fn hermitian_eig(h: &CMatrix) -> Result<HermitianEig> {
    if !h.is_square() {
        return Err(Error::dim(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    let n = h.nrows();
    if n == 0 {
        return Ok(HermitianEig {
            values: Vec::new(),
            vectors: CMatrix::zeros(0, 0),
        });
    }

    // Row-major working copy of the symmetrized input.
    let mut a = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        a[i * n + i] = Complex64::new(h[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let v = (h[(i, j)] + h[(j, i)].conj()) * 0.5;
            a[i * n + j] = v;
            a[j * n + i] = v.conj();
        }
    }
    let mut v = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        v[i * n + i] = Complex64::new(1.0, 0.0);
    }

    let scale = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let stop = (f64::EPSILON * scale).powi(2);
    let max_sweeps = options().eig_max_sweeps;

    let mut converged = false;
    for _ in 0..max_sweeps {
        if off_diagonal_sqr(&a, n) <= stop {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, n, p, q);
            }
        }
    }
    if !converged {
        let off = off_diagonal_sqr(&a, n);
        if off > stop {
            return Err(Error::Numeric {
                message: format!("Jacobi eigensolver exceeded {max_sweeps} sweeps"),
                residual: off.sqrt(),
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].re.total_cmp(&a[i * n + i].re));
    let values = order.iter().map(|&i| a[i * n + i].re).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| v[i * n + order[j]]);
    Ok(HermitianEig { values, vectors })
}

fn off_diagonal_sqr(a: &[Complex64], n: usize) -> f64 {
    let mut s = 0.0;
    for p in 0..n {
        for q in (p + 1)..n {
            s += a[p * n + q].norm_sqr();
        }
    }
    2.0 * s
}

/// One complex Jacobi rotation annihilating a[p][q]. The rotation is a
/// phase change that makes a[p][q] real followed by a real plane rotation.
#[inline]
fn rotate(a: &mut [Complex64], v: &mut [Complex64], n: usize, p: usize, q: usize) {
    let apq = a[p * n + q];
    let mag = apq.norm();
    if mag == 0.0 || !mag.is_finite() {
        return;
    }
    let app = a[p * n + p].re;
    let aqq = a[q * n + q].re;
    // Already negligible relative to the diagonal: the rotation would be a no-op.
    if mag < f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
        a[p * n + q] = Complex64::new(0.0, 0.0);
        a[q * n + p] = Complex64::new(0.0, 0.0);
        return;
    }
    let phase = apq / mag;
    let phase_c = phase.conj();

    let theta = (aqq - app) / (2.0 * mag);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    // A <- A U
    for k in 0..n {
        let akp = a[k * n + p];
        let akq = a[k * n + q];
        a[k * n + p] = akp * c - akq * phase_c * s;
        a[k * n + q] = akp * s + akq * phase_c * c;
    }
    // A <- Uᴴ A
    for k in 0..n {
        let apk = a[p * n + k];
        let aqk = a[q * n + k];
        a[p * n + k] = apk * c - aqk * phase * s;
        a[q * n + k] = apk * s + aqk * phase * c;
    }
    a[p * n + q] = Complex64::new(0.0, 0.0);
    a[q * n + p] = Complex64::new(0.0, 0.0);
    a[p * n + p] = Complex64::new(app - t * mag, 0.0);
    a[q * n + q] = Complex64::new(aqq + t * mag, 0.0);
    // V <- V U
    for k in 0..n {
        let vkp = v[k * n + p];
        let vkq = v[k * n + q];
        v[k * n + p] = vkp * c - vkq * phase_c * s;
        v[k * n + q] = vkp * s + vkq * phase_c * c;
    }
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(h: &CMatrix) -> Result<f64> {
    let eig = hermitian_eig(h)?;
    Ok(eig.values.last().copied().unwrap_or(0.0))
}

/// Frobenius-nearest positive semidefinite matrix: eigenvalues below zero
/// are clipped.
pub fn psd_project(h: &CMatrix) -> Result<CMatrix> {
    let eig = hermitian_eig(h)?;
    Ok(clip_reconstruct(&eig))
}

pub(crate) fn clip_reconstruct(eig: &HermitianEig) -> CMatrix {
    let n = eig.values.len();
    let positive = eig.values.iter().take_while(|&&l| l > 0.0).count();
    if positive == 0 {
        return CMatrix::zeros(n, n);
    }
    let mut w = eig.vectors.columns(0, positive).into_owned();
    for (j, lambda) in eig.values.iter().take(positive).enumerate() {
        let s = lambda.sqrt();
        for i in 0..n {
            w[(i, j)] *= s;
        }
    }
    let mut out = &w * w.adjoint();
    for i in 0..n {
        out[(i, i)].im = 0.0;
        for j in (i + 1)..n {
            let avg = (out[(i, j)] + out[(j, i)].conj()) * 0.5;
            out[(i, j)] = avg;
            out[(j, i)] = avg.conj();
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct LeastSquares {
    /// argmin ‖A x − b‖ (minimum-norm when `rank_deficient`).
    pub solution: CMatrix,
    /// σ_max / σ_min over the min(rows, cols) singular values.
    pub condition: f64,
    pub rank_deficient: bool,
}

/// Least-squares solve of A·X = B, column by column of B.
///
/// Full-column-rank systems return the Moore-Penrose solution
/// (AᴴA)⁻¹AᴴB. Otherwise the minimum-norm solution is returned with
/// `rank_deficient` set.
pub fn least_squares(a: &CMatrix, b: &CMatrix) -> Result<LeastSquares> {
    if a.nrows() != b.nrows() {
        return Err(Error::dim(format!(
            "least squares: A has {} rows, b has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(LeastSquares {
            solution: CMatrix::zeros(n, b.ncols()),
            condition: f64::INFINITY,
            rank_deficient: true,
        });
    }
    let svd = a.clone().svd(true, true);
    let sigma = &svd.singular_values;
    let smax = sigma.iter().cloned().fold(0.0, f64::max);
    let smin = sigma.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let limit = options().rank_condition_limit;
    let rank_deficient = n > m || !(condition < limit);

    let u = svd.u.as_ref().expect("svd computed with U");
    let v_t = svd.v_t.as_ref().expect("svd computed with Vᴴ");
    let cutoff = smax / limit;
    let utb = u.adjoint() * b;
    let mut scaled = utb;
    for (i, &s) in sigma.iter().enumerate() {
        let inv = if s > cutoff { 1.0 / s } else { 0.0 };
        for j in 0..scaled.ncols() {
            scaled[(i, j)] *= inv;
        }
    }
    let solution = v_t.adjoint() * scaled;
    Ok(LeastSquares {
        solution,
        condition,
        rank_deficient,
    })
}

/// As [`least_squares`], but rank deficiency is an error.
pub fn least_squares_strict(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let ls = least_squares(a, b)?;
    if ls.rank_deficient {
        return Err(Error::RankDeficient {
            condition: ls.condition,
        });
    }
    Ok(ls.solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub(crate) fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = CMatrix::from_fn(n, n, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        hermitian_part(&m)
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMatrix::from_fn(rows, cols, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn identity_eigenvalues() {
        let eig = hermitian_eig(&CMatrix::identity(3, 3)).unwrap();
        assert_eq!(eig.values, vec![1.0, 1.0, 1.0]);
        let vhv = eig.vectors.adjoint() * &eig.vectors;
        assert!(frobenius(&(vhv - CMatrix::identity(3, 3))) < 1e-12);
    }

    #[test]
    fn diagonal_eigenvalues_descending() {
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![c(-1.0, 0.0), c(2.0, 0.0)]));
        let eig = hermitian_eig(&d).unwrap();
        assert_eq!(eig.values, vec![2.0, -1.0]);
    }

    #[test]
    fn two_by_two_matches_quadratic_formula() {
        for seed in 0..20 {
            let h = random_hermitian(2, seed);
            let (a, d, b) = (h[(0, 0)].re, h[(1, 1)].re, h[(0, 1)]);
            // λ = (a+d)/2 ± sqrt(((a−d)/2)² + |b|²)
            let mid = 0.5 * (a + d);
            let rad = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
            let eig = hermitian_eig(&h).unwrap();
            assert!((eig.values[0] - (mid + rad)).abs() < 1e-12);
            assert!((eig.values[1] - (mid - rad)).abs() < 1e-12);
        }
    }

    #[test]
    fn non_square_is_dimension_error() {
        let m = CMatrix::zeros(2, 3);
        assert!(matches!(hermitian_eig(&m), Err(Error::Dimension(_))));
    }

    #[test]
    fn reconstruction_on_bordered_size() {
        for seed in 0..10 {
            let h = random_hermitian(17, seed) * c(100.0, 0.0);
            let eig = hermitian_eig(&h).unwrap();
            let err = frobenius(&(eig.reconstruct() - &h));
            assert!(err <= 1e-9 * frobenius(&h).max(1.0), "residual {err}");
            let vhv = eig.vectors.adjoint() * &eig.vectors;
            assert!(frobenius(&(vhv - CMatrix::identity(17, 17))) < 1e-9);
            assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn psd_project_clips() {
        let d = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(-1.0, 0.0)]));
        let p = psd_project(&d).unwrap();
        let want = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]));
        assert!(frobenius(&(p - want)) < 1e-12);
    }

    #[test]
    fn psd_project_fixed_point() {
        let a = random_matrix(6, 6, 3);
        let psd = &a * a.adjoint();
        let p = psd_project(&psd).unwrap();
        assert!(frobenius(&(p - &psd)) < 1e-9);
    }

    /// Oracle: among all candidates V·diag(μ)·Vᴴ where each μ_i is either
    /// λ_i or some non-negative value from a sweep, the clipped choice must
    /// be the closest one. A general PSD X is checked by sampling too.
    #[test]
    fn psd_project_is_nearest_among_candidates() {
        let h = random_hermitian(4, 11);
        let eig = hermitian_eig(&h).unwrap();
        let best = psd_project(&h).unwrap();
        let best_dist = frobenius(&(&best - &h));
        let levels = [0.0, 0.05, 0.1, 0.5, 1.0, 2.0];
        let n = eig.values.len();
        let mut idx = vec![0usize; n];
        loop {
            let mu: Vec<f64> = (0..n)
                .map(|i| {
                    let l = eig.values[i];
                    if idx[i] == 0 {
                        l.max(0.0)
                    } else {
                        levels[idx[i] - 1]
                    }
                })
                .collect();
            let cand = HermitianEig {
                values: mu,
                vectors: eig.vectors.clone(),
            }
            .reconstruct();
            assert!(frobenius(&(&cand - &h)) >= best_dist - 1e-12);
            // odometer over choices
            let mut k = 0;
            loop {
                if k == n {
                    break;
                }
                idx[k] += 1;
                if idx[k] <= levels.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let g = CMatrix::from_fn(4, 4, |_, _| {
                c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let x = &g * g.adjoint();
            assert!(frobenius(&(x - &h)) >= best_dist - 1e-12);
        }
        assert!(min_eigenvalue(&best).unwrap() >= -1e-9);
    }

    #[test]
    fn least_squares_identity() {
        let b = random_matrix(5, 1, 2);
        let x = least_squares(&CMatrix::identity(5, 5), &b).unwrap();
        assert!(!x.rank_deficient);
        assert!(frobenius(&(x.solution - b)) < 1e-12);
    }

    #[test]
    fn least_squares_pseudo_inverse_identity() {
        let a = random_matrix(9, 4, 7);
        let pinv = least_squares(&a, &CMatrix::identity(9, 9)).unwrap().solution;
        assert!(frobenius(&(pinv * &a - CMatrix::identity(4, 4))) < 1e-9);
    }

    #[test]
    fn least_squares_matches_normal_equations() {
        for seed in 0..10 {
            let a = random_matrix(12, 5, seed);
            let b = random_matrix(12, 2, seed + 100);
            let ah = a.adjoint();
            let gram_inv = (&ah * &a).try_inverse().unwrap();
            let oracle = gram_inv * ah * &b;
            let x = least_squares(&a, &b).unwrap().solution;
            assert!(frobenius(&(x - &oracle)) < 1e-9 * frobenius(&oracle).max(1.0));
        }
    }

    #[test]
    fn rank_deficient_is_flagged_and_strict_errors() {
        let mut a = random_matrix(6, 3, 1);
        let col = a.column(0).into_owned();
        a.set_column(2, &col);
        let b = random_matrix(6, 1, 9);
        let ls = least_squares(&a, &b).unwrap();
        assert!(ls.rank_deficient);
        assert!(matches!(
            least_squares_strict(&a, &b),
            Err(Error::RankDeficient { .. })
        ));
        // minimum norm: equal split across the duplicated columns
        let x = ls.solution;
        assert!((x[(0, 0)] - x[(2, 0)]).norm() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn psd_project_idempotent(seed in 0u64..10_000, n in 1usize..9) {
            let h = random_hermitian(n, seed);
            let p = psd_project(&h).unwrap();
            let pp = psd_project(&p).unwrap();
            prop_assert!(frobenius(&(pp - &p)) <= 1e-9);
        }

        #[test]
        fn eigenvalue_sum_is_trace(seed in 0u64..10_000, n in 1usize..18) {
            let h = random_hermitian(n, seed);
            let eig = hermitian_eig(&h).unwrap();
            let trace: f64 = (0..n).map(|i| h[(i, i)].re).sum();
            let sum: f64 = eig.values.iter().sum();
            prop_assert!((sum - trace).abs() <= 1e-9 * trace.abs().max(1.0));
        }

        #[test]
        fn least_squares_residual_bounded_and_orthogonal(seed in 0u64..10_000, m in 3usize..12, n in 1usize..3) {
            let a = random_matrix(m, n, seed);
            let b = random_matrix(m, 1, seed ^ 0xabcdef);
            let x = least_squares(&a, &b).unwrap().solution;
            let res = &b - &a * &x;
            prop_assert!(frobenius(&res) <= frobenius(&b) * (1.0 + 1e-12));
            let proj = a.adjoint() * &res;
            prop_assert!(frobenius(&proj) <= 1e-8 * frobenius(&a) * frobenius(&b));
        }
    }
}
