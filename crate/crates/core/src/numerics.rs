//! Dense complex-matrix kernels shared by the channel, metrics and precoding
//! modules.
//!
//! Log-determinants of noise-plus-gram matrices (`sigma2 * I + G G^H`) are
//! evaluated from the singular values of the gram factor `G`, adding the
//! noise floor after the factorisation. Forming the matrix first and then
//! factorising it loses the noise term completely once signal powers exceed
//! it by ~1e16, which is the normal operating regime of the link model
//! (tens of watts against a -109 dBm noise floor).

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

/// Dense complex matrix, double precision.
pub type CMatrix = DMatrix<Complex64>;

/// Eigenvalues above `-EIGEN_FLOOR * scale` are treated as zero when
/// classifying a matrix as positive semidefinite.
pub const EIGEN_FLOOR: f64 = 1e-9;

/// Elementwise tolerance (relative to the largest entry, floored at 1) for
/// accepting a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },
    #[error("matrix is indefinite beyond the eigen-floor (smallest eigenvalue {min_eigenvalue:e})")]
    Indefinite { min_eigenvalue: f64 },
    #[error("matrix is not Hermitian (max |A - A^H| entry {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("trace cap must be positive and finite, got {0}")]
    InvalidTraceCap(f64),
    #[error("noise power must be positive and finite, got {0}")]
    InvalidNoise(f64),
}

pub type Result<T> = std::result::Result<T, NumericsError>;

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Real diagonal matrix.
pub fn real_diag(values: &[f64]) -> CMatrix {
    let n = values.len();
    let mut m = CMatrix::zeros(n, n);
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = c(*v, 0.0);
    }
    m
}

pub fn scaled_identity(n: usize, value: f64) -> CMatrix {
    CMatrix::identity(n, n) * c(value, 0.0)
}

/// Real part of the trace.
pub fn trace_re(a: &CMatrix) -> f64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)].re).sum()
}

/// `Re Tr(A^H B)`, the real inner product used for Hermitian gradients.
pub fn inner_re(a: &CMatrix, b: &CMatrix) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn check_square(a: &CMatrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(NumericsError::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(a.nrows())
}

/// Largest elementwise deviation `|a_ij - conj(a_ji)|`.
pub fn hermitian_deviation(a: &CMatrix) -> f64 {
    let n = a.nrows().min(a.ncols());
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn ensure_hermitian(a: &CMatrix) -> Result<()> {
    check_square(a)?;
    let deviation = hermitian_deviation(a);
    if deviation > HERMITIAN_TOL * max_abs(a).max(1.0) {
        return Err(NumericsError::NotHermitian { deviation });
    }
    Ok(())
}

/// `(A + A^H) / 2`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * c(0.5, 0.0)
}

fn eigen_scale(a: &CMatrix) -> f64 {
    (0..a.nrows()).map(|i| a[(i, i)].re.abs()).fold(1.0, f64::max)
}

/// Eigen-decomposition of the Hermitian part of `a`.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitian_part(a));
    (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
}

pub fn min_eigenvalue(a: &CMatrix) -> f64 {
    hermitian_eigen(a).0.into_iter().fold(f64::INFINITY, f64::min)
}

/// Plain Cholesky factorisation; `None` at the first non-positive pivot.
fn cholesky_strict(a: &CMatrix, min_pivot: f64) -> Option<CMatrix> {
    let n = a.nrows();
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > min_pivot) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = c(djj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Base-2 log-determinant of a Hermitian positive-definite matrix, computed
/// from its Cholesky factor.
pub fn hermitian_logdet(a: &CMatrix) -> Result<f64> {
    ensure_hermitian(a)?;
    match cholesky_strict(a, 0.0) {
        Some(l) => Ok(2.0 * (0..l.nrows()).map(|i| l[(i, i)].re.log2()).sum::<f64>()),
        None => Err(NumericsError::NotPositiveDefinite { min_eigenvalue: min_eigenvalue(a) }),
    }
}

/// Lower-triangular `B` with real non-negative diagonal and `B B^H = A`.
///
/// Positive-definite inputs take the ordinary Cholesky recurrence. Singular
/// (rank-deficient) PSD inputs fall back to an eigen square root followed by
/// an LQ factorisation, which stays accurate where the recurrence would
/// divide by round-off sized pivots.
pub fn cholesky_lower(a: &CMatrix) -> Result<CMatrix> {
    ensure_hermitian(a)?;
    let n = a.nrows();
    let scale = eigen_scale(a);
    if let Some(l) = cholesky_strict(a, 1e-12 * scale) {
        return Ok(l);
    }
    let (values, vectors) = hermitian_eigen(a);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -EIGEN_FLOOR * scale {
        return Err(NumericsError::Indefinite { min_eigenvalue: min });
    }
    let factor = sqrt_factor(&values, &vectors);
    // F = R^H Q^H from the QR of F^H, so A = F F^H = R^H R.
    let r = factor.adjoint().qr().r();
    let mut lower = r.adjoint();
    for j in 0..n {
        let d = lower[(j, j)];
        let mag = d.norm();
        if mag > 0.0 {
            let phase = d / mag;
            for i in j..n {
                lower[(i, j)] *= phase.conj();
            }
        }
        lower[(j, j)] = c(mag, 0.0);
    }
    Ok(lower)
}

fn sqrt_factor(values: &[f64], vectors: &CMatrix) -> CMatrix {
    let mut f = vectors.clone();
    for (j, v) in values.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    f
}

/// Euclidean projection of `values` onto `{x >= 0, sum(x) <= cap}`.
///
/// Water-level search on the sorted values: the answer is
/// `max(v_i - theta, 0)` with `theta = 0` when the clipped sum already fits.
pub fn project_capped_simplex(values: &[f64], cap: f64) -> Vec<f64> {
    let clipped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    if clipped.iter().sum::<f64>() <= cap {
        return clipped;
    }
    let mut sorted = clipped.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - cap) / (k + 1) as f64;
        if *v - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    let mut projected: Vec<f64> = clipped.iter().map(|v| (v - theta).max(0.0)).collect();
    let total: f64 = projected.iter().sum();
    if total > cap {
        // Round-off in `v - theta`; pull back onto the cap.
        projected.iter_mut().for_each(|v| *v *= cap / total);
    }
    projected
}

/// Hermitian positive semidefinite matrix together with a square-root
/// factor `F` (`F F^H = A`).
#[derive(Debug, Clone, PartialEq)]
pub struct PsdMatrix {
    matrix: CMatrix,
    factor: CMatrix,
}

impl PsdMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { matrix: CMatrix::zeros(n, n), factor: CMatrix::zeros(n, n) }
    }

    pub fn scaled_identity(n: usize, value: f64) -> Self {
        assert!(value >= 0.0, "scaled identity must be non-negative");
        Self { matrix: scaled_identity(n, value), factor: scaled_identity(n, value.sqrt()) }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        assert!(values.iter().all(|v| *v >= 0.0), "diagonal entries must be non-negative");
        let roots: Vec<f64> = values.iter().map(|v| v.sqrt()).collect();
        Self { matrix: real_diag(values), factor: real_diag(&roots) }
    }

    /// Builds from a square-root factor: `A = F F^H`.
    pub fn from_factor(factor: CMatrix) -> Self {
        let matrix = hermitian_part(&(&factor * factor.adjoint()));
        Self { matrix, factor }
    }

    /// Accepts a Hermitian matrix whose eigenvalues are all above the
    /// eigen-floor; round-off negatives are clipped to zero.
    pub fn from_hermitian(a: &CMatrix) -> Result<Self> {
        ensure_hermitian(a)?;
        let (values, vectors) = hermitian_eigen(a);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -EIGEN_FLOOR * eigen_scale(a) {
            return Err(NumericsError::Indefinite { min_eigenvalue: min });
        }
        let clipped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
        Ok(Self::from_eigen(&clipped, &vectors))
    }

    fn from_eigen(values: &[f64], vectors: &CMatrix) -> Self {
        let factor = sqrt_factor(values, vectors);
        Self::from_factor(factor)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn factor(&self) -> &CMatrix {
        &self.factor
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        trace_re(&self.matrix)
    }
}

/// Frobenius-nearest PSD matrix with trace at most `trace_cap`.
pub fn psd_project(a: &CMatrix, trace_cap: f64) -> Result<PsdMatrix> {
    if !(trace_cap > 0.0 && trace_cap.is_finite()) {
        return Err(NumericsError::InvalidTraceCap(trace_cap));
    }
    ensure_hermitian(a)?;
    let (values, vectors) = hermitian_eigen(a);
    let projected = project_capped_simplex(&values, trace_cap);
    Ok(PsdMatrix::from_eigen(&projected, &vectors))
}

/// Eigen-structure of `sigma2 * I + G G^H`, obtained from the SVD of `G`.
#[derive(Debug, Clone)]
pub struct NoisyGram {
    basis: CMatrix,
    eigenvalues: Vec<f64>,
}

fn pad_columns(g: &CMatrix, min_cols: usize) -> CMatrix {
    if g.ncols() >= min_cols {
        return g.clone();
    }
    let mut padded = CMatrix::zeros(g.nrows(), min_cols);
    padded.view_mut((0, 0), (g.nrows(), g.ncols())).copy_from(g);
    padded
}

impl NoisyGram {
    pub fn new(sigma2: f64, g: &CMatrix) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(NumericsError::InvalidNoise(sigma2));
        }
        let n = g.nrows();
        let svd = pad_columns(g, n).svd(true, false);
        let basis = svd.u.expect("left singular vectors requested");
        let eigenvalues = svd.singular_values.iter().map(|s| sigma2 + s * s).collect();
        Ok(Self { basis, eigenvalues })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn log2_det(&self) -> f64 {
        self.eigenvalues.iter().map(|v| v.log2()).sum()
    }

    /// `Lambda^{-1/2} U^H X`, so that `whiten(X)^H whiten(Y) = X^H M^{-1} Y`.
    pub fn whiten(&self, x: &CMatrix) -> CMatrix {
        let mut w = self.basis.adjoint() * x;
        for (i, v) in self.eigenvalues.iter().enumerate() {
            w.row_mut(i).scale_mut(1.0 / v.sqrt());
        }
        w
    }

    /// `X^H M^{-1} X`, Hermitian.
    pub fn inverse_quadratic(&self, x: &CMatrix) -> CMatrix {
        let w = self.whiten(x);
        hermitian_part(&(w.adjoint() * w))
    }
}

/// `log2 |sigma2 * I + G G^H|` from the singular values of `G`.
pub fn log2det_noisy_gram(sigma2: f64, g: &CMatrix) -> Result<f64> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(NumericsError::InvalidNoise(sigma2));
    }
    let n = g.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let singular = pad_columns(g, n).singular_values();
    Ok(singular.iter().map(|s| (sigma2 + s * s).log2()).sum())
}

/// Horizontal concatenation `[A B]`.
pub fn hstack(a: &CMatrix, b: &CMatrix) -> CMatrix {
    assert_eq!(a.nrows(), b.nrows(), "hstack row mismatch");
    let mut out = CMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_complex(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let g = random_complex(rng, n, n);
        hermitian_part(&(&g * g.adjoint())) + scaled_identity(n, 0.1)
    }

    #[test]
    fn logdet_of_identity_and_diagonal() {
        assert_eq!(hermitian_logdet(&CMatrix::identity(3, 3)).unwrap(), 0.0);
        assert!((hermitian_logdet(&real_diag(&[2.0, 2.0])).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn logdet_matches_eigenvalue_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let a = random_pd(&mut rng, 4);
            let oracle: f64 = SymmetricEigen::new(a.clone()).eigenvalues.iter().map(|v| v.log2()).sum();
            assert!((hermitian_logdet(&a).unwrap() - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn logdet_rejects_indefinite_and_names_eigenvalue() {
        let err = hermitian_logdet(&real_diag(&[1.0, -0.5])).unwrap_err();
        match err {
            NumericsError::NotPositiveDefinite { min_eigenvalue } => {
                assert!((min_eigenvalue + 0.5).abs() < 1e-12)
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn logdet_rejects_non_hermitian() {
        let mut a = CMatrix::identity(2, 2);
        a[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(hermitian_logdet(&a), Err(NumericsError::NotHermitian { .. })));
    }

    #[test]
    fn projection_examples() {
        let clipped = psd_project(&real_diag(&[-1.0, 3.0]), 10.0).unwrap();
        assert!((clipped.matrix() - real_diag(&[0.0, 3.0])).camax() < 1e-12);
        let capped = psd_project(&real_diag(&[4.0, 4.0]), 4.0).unwrap();
        assert!((capped.matrix() - real_diag(&[2.0, 2.0])).camax() < 1e-12);
    }

    #[test]
    fn projection_leaves_feasible_matrix_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_pd(&mut rng, 3);
        let cap = trace_re(&a) + 1.0;
        let p = psd_project(&a, cap).unwrap();
        assert!((p.matrix() - &a).camax() < 1e-10);
    }

    #[test]
    fn projection_rejects_bad_input() {
        let mut a = CMatrix::identity(2, 2);
        a[(1, 0)] = c(0.0, 1.0);
        assert!(matches!(psd_project(&a, 1.0), Err(NumericsError::NotHermitian { .. })));
        assert!(matches!(psd_project(&CMatrix::identity(2, 2), 0.0), Err(NumericsError::InvalidTraceCap(_))));
    }

    #[test]
    fn simplex_projection_matches_brute_force() {
        // Oracle: scan theta on a fine grid and keep the minimiser of the
        // distance among feasible points.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..3.0)).collect();
            let cap = rng.random_range(0.1..4.0);
            let fast = project_capped_simplex(&v, cap);
            let mut best = (f64::INFINITY, vec![]);
            for step in 0..=40_000 {
                let theta = step as f64 * 1e-4;
                let x: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
                if x.iter().sum::<f64>() <= cap + 1e-12 {
                    let d: f64 = x.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum();
                    if d < best.0 {
                        best = (d, x);
                    }
                    break;
                }
            }
            for (a, b) in fast.iter().zip(&best.1) {
                assert!((a - b).abs() < 2e-4, "{v:?} cap {cap}: {fast:?} vs {:?}", best.1);
            }
        }
    }

    #[test]
    fn cholesky_examples() {
        let id = cholesky_lower(&CMatrix::identity(3, 3)).unwrap();
        assert!((id - CMatrix::identity(3, 3)).camax() < 1e-15);
        let d = cholesky_lower(&real_diag(&[4.0, 9.0])).unwrap();
        assert!((d - real_diag(&[2.0, 3.0])).camax() < 1e-15);
    }

    #[test]
    fn cholesky_reconstructs_rank_deficient_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for rank in 0..=3 {
            let g = random_complex(&mut rng, 4, rank) * c(10.0, 0.0);
            let q = hermitian_part(&(&g * g.adjoint()));
            let b = cholesky_lower(&q).unwrap();
            assert!(frobenius(&(&b * b.adjoint() - &q)) < 1e-8, "rank {rank}");
            for i in 0..4 {
                assert!(b[(i, i)].im == 0.0 && b[(i, i)].re >= 0.0);
                for j in (i + 1)..4 {
                    assert_eq!(b[(i, j)], c(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(matches!(cholesky_lower(&real_diag(&[1.0, -1.0])), Err(NumericsError::Indefinite { .. })));
    }

    #[test]
    fn noisy_gram_keeps_noise_floor_under_huge_signal() {
        // Rank-one interference 1e3 W against 1e-14 W noise in 3 dimensions:
        // two eigenvalues must stay exactly at the noise floor.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = random_complex(&mut rng, 3, 1) * c(30.0, 0.0);
        let sigma2 = 1.2589e-14;
        let gram = NoisyGram::new(sigma2, &g).unwrap();
        let mut small: Vec<f64> = gram.eigenvalues.clone();
        small.sort_by(f64::total_cmp);
        assert!((small[0] / sigma2 - 1.0).abs() < 1e-12);
        assert!((small[1] / sigma2 - 1.0).abs() < 1e-12);
        let direct = log2det_noisy_gram(sigma2, &g).unwrap();
        assert!((gram.log2_det() - direct).abs() < 1e-12);
    }

    #[test]
    fn noisy_gram_matches_cholesky_when_well_conditioned() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for k in 0..5 {
            let g = random_complex(&mut rng, 3, k);
            let m = hermitian_part(&(&g * g.adjoint())) + scaled_identity(3, 0.5);
            let gram = NoisyGram::new(0.5, &g).unwrap();
            assert!((gram.log2_det() - hermitian_logdet(&m).unwrap()).abs() < 1e-10);
            let x = random_complex(&mut rng, 3, 2);
            let via_inverse = x.adjoint() * m.clone().try_inverse().unwrap() * &x;
            assert!((gram.inverse_quadratic(&x) - via_inverse).camax() < 1e-10);
        }
    }
}
