//! Scaled Frobenius geometry on dense symmetric matrices.
//!
//! Everything in this crate measures matrices with the dimension-scaled
//! Frobenius norm `‖A‖² = Tr(A·Aᵀ)/p`, which fixes `‖I‖ = 1` regardless of
//! the dimension. This module provides the symmetric matrix value type, the
//! scaled inner product, the projection onto the positive semi-definite
//! cone, Gram-Schmidt orthonormalization of matrix families, a complex
//! matrix square root, and the Moore-Penrose pseudo-inverse.
//!
//! All decompositions go through a single symmetric eigendecomposition
//! backend; inputs are symmetrized `(A + Aᵀ)/2` on entry to absorb roundoff.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical tolerances used across the crate.
///
/// Fixed constants with the defaults below; overridable through
/// configuration (the CLI accepts a JSON override file). Never set per call.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct Tolerances {
    /// Relative entrywise asymmetry allowed when constructing a `SymMatrix`:
    /// `|A[i][j] - A[j][i]| <= symmetry * max(1, max|A|)`.
    pub symmetry: f64,
    /// Pairwise inner products and unit-norm deviation allowed in an
    /// orthonormal family.
    pub orthonormality: f64,
    /// A vector whose Gram-Schmidt residual has scaled norm below
    /// `gram_schmidt_drop` times its original norm is dropped as linearly
    /// dependent.
    pub gram_schmidt_drop: f64,
    /// Magnitude of negative eigenvalues tolerated when checking positive
    /// semi-definiteness of a projected matrix.
    pub psd_floor: f64,
    /// Per-dimension relative eigenvalue cutoff of the pseudo-inverse:
    /// eigenvalues with `|λ| <= pinv_rtol_per_dim * p * max|λ|` are zeroed.
    pub pinv_rtol_per_dim: f64,
    /// Relative threshold on `d² = ‖S‖² - Σ⟨S,T⟩²` below which the shrinkage
    /// problem is declared degenerate and the sample covariance is returned.
    pub degeneracy: f64,
    /// Imaginary residue budget of the complex-square-root fast path,
    /// relative to the magnitude of the real part.
    pub imag_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            symmetry: 1e-12,
            orthonormality: 1e-10,
            gram_schmidt_drop: 1e-10,
            psd_floor: 1e-10,
            pinv_rtol_per_dim: 1e-12,
            degeneracy: 1e-12,
            imag_residual: 1e-8,
        }
    }
}

/// Dense symmetric `p×p` matrix with the 1/p-scaled Frobenius geometry.
///
/// The stored entries are exactly symmetric: constructors symmetrize
/// `(A + Aᵀ)/2` after validating that the input was symmetric up to roundoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    data: DMatrix<f64>,
}

impl SymMatrix {
    /// Wraps a square matrix, validating near-symmetry with default
    /// tolerances and symmetrizing the roundoff away.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        Self::new_with(data, &Tolerances::default())
    }

    /// As [`SymMatrix::new`] with explicit tolerances.
    pub fn new_with(data: DMatrix<f64>, tol: &Tolerances) -> Result<Self> {
        if data.nrows() != data.ncols() {
            return Err(Error::DimensionMismatch {
                expected: data.nrows(),
                actual: data.ncols(),
            });
        }
        if data.nrows() == 0 {
            return Err(Error::InvalidParameter(
                "matrix dimension must be >= 1".into(),
            ));
        }
        let scale = data.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let mut max_asym = 0.0_f64;
        for i in 0..data.nrows() {
            for j in (i + 1)..data.ncols() {
                max_asym = max_asym.max((data[(i, j)] - data[(j, i)]).abs());
            }
        }
        if max_asym > tol.symmetry * scale {
            return Err(Error::NotSymmetric {
                max_asymmetry: max_asym,
            });
        }
        Ok(Self::from_symmetrized(data))
    }

    /// Symmetrizes `(A + Aᵀ)/2` without validation. Used internally where the
    /// input is symmetric by construction up to roundoff.
    pub(crate) fn from_symmetrized(data: DMatrix<f64>) -> Self {
        let mut data = data;
        for i in 0..data.nrows() {
            for j in (i + 1)..data.ncols() {
                let avg = 0.5 * (data[(i, j)] + data[(j, i)]);
                data[(i, j)] = avg;
                data[(j, i)] = avg;
            }
        }
        Self { data }
    }

    /// The identity matrix; its scaled norm is 1 in every dimension.
    pub fn identity(dim: usize) -> Self {
        Self {
            data: DMatrix::identity(dim, dim),
        }
    }

    /// The zero matrix.
    pub fn zeros(dim: usize) -> Self {
        Self {
            data: DMatrix::zeros(dim, dim),
        }
    }

    /// Diagonal matrix from the given entries.
    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self {
            data: DMatrix::from_diagonal(&DVector::from_row_slice(diag)),
        }
    }

    /// Builds the symmetric matrix `f(i, j)`; only `i <= j` is consulted.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[(i, j)] = v;
                data[(j, i)] = v;
            }
        }
        Self { data }
    }

    /// Matrix dimension `p`.
    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    /// Borrow of the dense entries.
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Consumes the wrapper and returns the dense entries.
    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Entry accessor.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    /// Smallest eigenvalue, for positive semi-definiteness checks.
    pub fn min_eigenvalue(&self) -> f64 {
        self.data.clone().symmetric_eigenvalues().min()
    }

    /// Linear combination `Σ coeffs[i] · mats[i]` of same-dimension matrices.
    pub fn linear_combination(coeffs: &[f64], mats: &[&SymMatrix]) -> Result<Self> {
        let first = mats.first().ok_or(Error::DegenerateTargetFamily)?;
        if coeffs.len() != mats.len() {
            return Err(Error::DimensionMismatch {
                expected: mats.len(),
                actual: coeffs.len(),
            });
        }
        let mut acc = DMatrix::zeros(first.dim(), first.dim());
        for (&c, m) in coeffs.iter().zip(mats) {
            check_same_dim(first, m)?;
            acc.zip_apply(&m.data, |a, b| *a += c * b);
        }
        Ok(Self::from_symmetrized(acc))
    }
}

fn check_same_dim(a: &SymMatrix, b: &SymMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    Ok(())
}

/// Scaled Frobenius inner product `⟨A,B⟩ = Tr(A·Bᵀ)/p`.
pub fn scaled_inner(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    let dot: f64 = a.data.iter().zip(b.data.iter()).map(|(x, y)| x * y).sum();
    Ok(dot / a.dim() as f64)
}

/// Squared scaled Frobenius norm `‖A‖² = ⟨A,A⟩ >= 0`.
pub fn scaled_norm2(a: &SymMatrix) -> f64 {
    a.data.iter().map(|x| x * x).sum::<f64>() / a.dim() as f64
}

/// Scaled Frobenius norm.
pub fn scaled_norm(a: &SymMatrix) -> f64 {
    scaled_norm2(a).sqrt()
}

/// Squared scaled distance `‖A - B‖²`.
pub fn scaled_distance2(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    check_same_dim(a, b)?;
    let sum: f64 = a
        .data
        .iter()
        .zip(b.data.iter())
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum();
    Ok(sum / a.dim() as f64)
}

/// The single symmetric eigendecomposition backend: returns `(eigenvalues,
/// eigenvectors)` with `A = Q·Λ·Qᵀ`. A convergence failure is surfaced, never
/// silently ignored.
pub(crate) fn sym_eigen(a: &SymMatrix) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let dim = a.dim();
    let eig = nalgebra::SymmetricEigen::try_new(a.data.clone(), f64::EPSILON, 0)
        .ok_or(Error::EigenFailure { dim })?;
    Ok((eig.eigenvalues, eig.eigenvectors))
}

/// Recomposes `Q·diag(vals)·Qᵀ`.
fn recompose(q: &DMatrix<f64>, vals: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = q.clone();
    for (j, &v) in vals.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v);
    }
    scaled * q.transpose()
}

/// Orthogonal projection onto the cone of positive semi-definite matrices:
/// eigendecompose, clip negative eigenvalues to zero, recompose. This is the
/// scaled-Frobenius-nearest PSD matrix.
pub fn psd_project(a: &SymMatrix) -> Result<SymMatrix> {
    let (vals, q) = sym_eigen(a)?;
    let clipped = vals.map(|v| v.max(0.0));
    Ok(SymMatrix::from_symmetrized(recompose(&q, &clipped)))
}

/// Orthonormalizes a family of symmetric matrices under the scaled inner
/// product with the modified (re-orthogonalizing) Gram-Schmidt algorithm,
/// preserving input order. Vectors whose residual falls below the drop
/// tolerance relative to their original norm are removed as linearly
/// dependent.
pub fn gram_schmidt(family: &[SymMatrix]) -> Result<Vec<SymMatrix>> {
    gram_schmidt_with(family, &Tolerances::default())
}

/// As [`gram_schmidt`] with explicit tolerances.
pub fn gram_schmidt_with(family: &[SymMatrix], tol: &Tolerances) -> Result<Vec<SymMatrix>> {
    let first = family.first().ok_or(Error::DegenerateTargetFamily)?;
    let mut basis: Vec<SymMatrix> = Vec::with_capacity(family.len());
    for raw in family {
        check_same_dim(first, raw)?;
        if let Some(next) = orthonormal_residual(&basis, raw, tol)? {
            basis.push(next);
        }
    }
    if basis.is_empty() {
        return Err(Error::DegenerateTargetFamily);
    }
    Ok(basis)
}

/// One Gram-Schmidt step: the normalized residual of `raw` against an
/// already-orthonormal `basis`, or `None` when `raw` is linearly dependent on
/// it within the drop tolerance.
pub(crate) fn orthonormal_residual(
    basis: &[SymMatrix],
    raw: &SymMatrix,
    tol: &Tolerances,
) -> Result<Option<SymMatrix>> {
    let dim = raw.dim();
    let original_norm = scaled_norm(raw);
    if original_norm == 0.0 {
        return Err(Error::InvalidParameter(
            "cannot orthonormalize a zero matrix".into(),
        ));
    }
    let mut v = raw.data.clone();
    // Two passes of modified Gram-Schmidt; the second pass restores
    // orthogonality lost to cancellation when the residual is small.
    for _ in 0..2 {
        for b in basis {
            let coeff = v.iter().zip(b.data.iter()).map(|(x, y)| x * y).sum::<f64>() / dim as f64;
            v.zip_apply(&b.data, |x, y| *x -= coeff * y);
        }
    }
    let residual = SymMatrix::from_symmetrized(v);
    let res_norm = scaled_norm(&residual);
    if res_norm <= tol.gram_schmidt_drop * original_norm {
        return Ok(None); // near-linear dependence: drop
    }
    Ok(Some(SymMatrix {
        data: residual.data / res_norm,
    }))
}

/// Complex matrix square root `R` of a symmetric (not necessarily positive)
/// matrix `T`: `R = Q·diag(√λ)·Qᵀ` with principal complex square roots, so
/// that `R` is complex symmetric and `R·R = T`.
///
/// For any real vector `x`, the sum of complex squares `Σ (R·x)ᵢ²` equals
/// `xᵀ·T·x` up to a small imaginary residue, which is the basis of the fast
/// path for the projected variance estimators.
#[derive(Debug, Clone)]
pub struct ComplexSqrtFactor {
    dim: usize,
    re: DMatrix<f64>,
    im: DMatrix<f64>,
    has_imag: bool,
}

impl ComplexSqrtFactor {
    /// Matrix dimension `p`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when `T` had at least one negative eigenvalue, i.e. `R` has a
    /// nonzero imaginary part.
    pub fn has_imaginary_part(&self) -> bool {
        self.has_imag
    }

    /// Entry of `R` as a complex number.
    pub fn entry(&self, i: usize, j: usize) -> Complex<f64> {
        Complex::new(self.re[(i, j)], self.im[(i, j)])
    }

    /// Dense complex form of `R`.
    pub fn to_complex_matrix(&self) -> DMatrix<Complex<f64>> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.entry(i, j))
    }

    /// For each column `x` of `x_cols`, the complex square sum
    /// `Σᵢ (R·x)ᵢ²` returned as `(real, imaginary, magnitude)` where
    /// `magnitude = Σᵢ |(R·x)ᵢ|²` is the natural scale of the computation
    /// (used to judge whether the imaginary residue is roundoff or breakdown).
    ///
    /// The real and imaginary parts of `R` are applied as two real matrix
    /// products, so the whole call costs two GEMMs (one when `T` is PSD).
    pub fn column_square_sums(
        &self,
        x_cols: &DMatrix<f64>,
    ) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let a = &self.re * x_cols;
        let n = x_cols.ncols();
        let mut re_sums = DVector::zeros(n);
        let mut im_sums = DVector::zeros(n);
        let mut magnitudes = DVector::zeros(n);
        if self.has_imag {
            let b = &self.im * x_cols;
            for k in 0..n {
                let (mut sr, mut si, mut mag) = (0.0, 0.0, 0.0);
                for i in 0..self.dim {
                    let (ar, ai) = (a[(i, k)], b[(i, k)]);
                    sr += ar * ar - ai * ai;
                    si += 2.0 * ar * ai;
                    mag += ar * ar + ai * ai;
                }
                re_sums[k] = sr;
                im_sums[k] = si;
                magnitudes[k] = mag;
            }
        } else {
            for k in 0..n {
                let mut sr = 0.0;
                for i in 0..self.dim {
                    sr += a[(i, k)] * a[(i, k)];
                }
                re_sums[k] = sr;
                magnitudes[k] = sr;
            }
        }
        (re_sums, im_sums, magnitudes)
    }
}

/// Computes the complex square root factor of a symmetric matrix via the
/// shared eigendecomposition backend.
pub fn complex_sqrt_factor(t: &SymMatrix) -> Result<ComplexSqrtFactor> {
    let (vals, q) = sym_eigen(t)?;
    let mut re_diag = DVector::zeros(vals.len());
    let mut im_diag = DVector::zeros(vals.len());
    let mut has_imag = false;
    for (j, &v) in vals.iter().enumerate() {
        if v >= 0.0 {
            re_diag[j] = v.sqrt();
        } else {
            im_diag[j] = (-v).sqrt();
            has_imag = true;
        }
    }
    let re = recompose(&q, &re_diag);
    let im = if has_imag {
        recompose(&q, &im_diag)
    } else {
        DMatrix::zeros(t.dim(), t.dim())
    };
    Ok(ComplexSqrtFactor {
        dim: t.dim(),
        re,
        im,
        has_imag,
    })
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix: eigenvalues with
/// `|λ| <= rtol·max|λ|` are zeroed (with `rtol = pinv_rtol_per_dim · p`), the
/// rest inverted.
pub fn pseudo_inverse(a: &SymMatrix) -> Result<SymMatrix> {
    pseudo_inverse_with(a, &Tolerances::default())
}

/// As [`pseudo_inverse`] with explicit tolerances.
pub fn pseudo_inverse_with(a: &SymMatrix, tol: &Tolerances) -> Result<SymMatrix> {
    let (vals, q) = sym_eigen(a)?;
    let max_abs = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if max_abs == 0.0 {
        return Ok(SymMatrix::zeros(a.dim()));
    }
    let cutoff = tol.pinv_rtol_per_dim * a.dim() as f64 * max_abs;
    let inverted = vals.map(|v| if v.abs() <= cutoff { 0.0 } else { 1.0 / v });
    Ok(SymMatrix::from_symmetrized(recompose(&q, &inverted)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(dim: usize, rng: &mut impl Rng) -> SymMatrix {
        SymMatrix::from_fn(dim, |_, _| rng.random_range(-2.0..2.0))
    }

    /// Test-only Jacobi eigensolver, independent of the nalgebra backend.
    fn jacobi_eigen(a: &SymMatrix) -> (Vec<f64>, DMatrix<f64>) {
        let n = a.dim();
        let mut m = a.as_matrix().clone();
        let mut q = DMatrix::<f64>::identity(n, n);
        for _ in 0..200 {
            let mut off = 0.0;
            let (mut p, mut r) = (0, 1);
            for i in 0..n {
                for j in (i + 1)..n {
                    if m[(i, j)].abs() > off {
                        off = m[(i, j)].abs();
                        p = i;
                        r = j;
                    }
                }
            }
            if off < 1e-14 {
                break;
            }
            let theta = 0.5 * (2.0 * m[(p, r)]).atan2(m[(p, p)] - m[(r, r)]);
            let (c, s) = (theta.cos(), theta.sin());
            let mut rot = DMatrix::<f64>::identity(n, n);
            rot[(p, p)] = c;
            rot[(r, r)] = c;
            rot[(p, r)] = -s;
            rot[(r, p)] = s;
            m = rot.transpose() * m * &rot;
            q *= rot;
        }
        ((0..n).map(|i| m[(i, i)]).collect(), q)
    }

    #[test]
    fn identity_has_unit_norm_in_every_dimension() {
        for p in [1, 2, 5, 17] {
            let i = SymMatrix::identity(p);
            assert_relative_eq!(scaled_inner(&i, &i).unwrap(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn inner_product_with_zero_matrix_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_symmetric(4, &mut rng);
        assert_eq!(scaled_inner(&a, &SymMatrix::zeros(4)).unwrap(), 0.0);
    }

    #[test]
    fn inner_product_of_diagonals() {
        let a = SymMatrix::from_diagonal(&[1.0, 2.0]);
        let b = SymMatrix::from_diagonal(&[3.0, 4.0]);
        assert_relative_eq!(scaled_inner(&a, &b).unwrap(), 5.5, epsilon = 1e-14);
    }

    #[test]
    fn inner_product_dimension_mismatch_errors() {
        let a = SymMatrix::identity(2);
        let b = SymMatrix::identity(3);
        assert!(matches!(
            scaled_inner(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 1)] = 1.0;
        assert!(matches!(SymMatrix::new(m), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn psd_project_clips_negative_diagonal() {
        let a = SymMatrix::from_diagonal(&[2.0, -1.0]);
        let proj = psd_project(&a).unwrap();
        assert_relative_eq!(proj.get(0, 0), 2.0, epsilon = 1e-12);
        assert_relative_eq!(proj.get(1, 1), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn psd_project_fixes_psd_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0_f64));
        let a = SymMatrix::from_symmetrized(&g * g.transpose());
        let proj = psd_project(&a).unwrap();
        assert!(scaled_distance2(&a, &proj).unwrap().sqrt() < 1e-10);
    }

    #[test]
    fn psd_project_matches_independent_jacobi_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a = random_symmetric(5, &mut rng);
            let proj = psd_project(&a).unwrap();
            let (vals, q) = jacobi_eigen(&a);
            let clipped = DVector::from_iterator(5, vals.iter().map(|v| v.max(0.0)));
            let oracle = SymMatrix::from_symmetrized(recompose(&q, &clipped));
            assert!(scaled_distance2(&proj, &oracle).unwrap().sqrt() < 1e-8);
        }
    }

    #[test]
    fn gram_schmidt_keeps_already_orthonormal_family() {
        let i = SymMatrix::identity(3);
        let out = gram_schmidt(std::slice::from_ref(&i)).unwrap();
        assert_eq!(out.len(), 1);
        assert!(scaled_distance2(&out[0], &i).unwrap().sqrt() < 1e-14);
    }

    #[test]
    fn gram_schmidt_two_dimensional_hand_example() {
        let family = [
            SymMatrix::identity(2),
            SymMatrix::from_diagonal(&[2.0, 0.0]),
        ];
        let out = gram_schmidt(&family).unwrap();
        assert_eq!(out.len(), 2);
        // Second member is diag(1,-1) up to sign, the unit-norm diagonal
        // matrix orthogonal to the identity.
        let expected = SymMatrix::from_diagonal(&[1.0, -1.0]);
        let d_plus = scaled_distance2(&out[1], &expected).unwrap();
        let neg = SymMatrix::from_diagonal(&[-1.0, 1.0]);
        let d_minus = scaled_distance2(&out[1], &neg).unwrap();
        assert!(d_plus.min(d_minus).sqrt() < 1e-12);
    }

    #[test]
    fn gram_schmidt_drops_dependent_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_symmetric(4, &mut rng);
        let doubled = SymMatrix::from_symmetrized(a.as_matrix() * 2.0);
        let out = gram_schmidt(&[a.clone(), doubled]).unwrap();
        assert_eq!(out.len(), 1);
        let norm = scaled_norm(&a);
        let expected = SymMatrix::from_symmetrized(a.as_matrix() / norm);
        assert!(scaled_distance2(&out[0], &expected).unwrap().sqrt() < 1e-12);
    }

    #[test]
    fn gram_schmidt_empty_and_fully_dependent_inputs_error() {
        assert!(matches!(
            gram_schmidt(&[]),
            Err(Error::DegenerateTargetFamily)
        ));
        let z = SymMatrix::zeros(3);
        assert!(gram_schmidt(&[z]).is_err());
    }

    #[test]
    fn complex_sqrt_of_identity_is_identity() {
        let r = complex_sqrt_factor(&SymMatrix::identity(3)).unwrap();
        assert!(!r.has_imaginary_part());
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(r.entry(i, j).re, expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn complex_sqrt_of_negative_one_is_i() {
        let r = complex_sqrt_factor(&SymMatrix::from_diagonal(&[-1.0])).unwrap();
        assert!(r.has_imaginary_part());
        assert_relative_eq!(r.entry(0, 0).re, 0.0, epsilon = 1e-12);
        assert_relative_eq!(r.entry(0, 0).im, 1.0, epsilon = 1e-12);
        // (R·x)² sums to -x².
        let x = DMatrix::from_element(1, 1, 3.0);
        let (re, im, _) = r.column_square_sums(&x);
        assert_relative_eq!(re[0], -9.0, epsilon = 1e-12);
        assert_relative_eq!(im[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn complex_sqrt_reconstructs_and_matches_quadratic_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_symmetric(6, &mut rng);
        let r = complex_sqrt_factor(&t).unwrap();

        // R·R = T within tolerance (real part; imaginary residual small).
        let rc = r.to_complex_matrix();
        let square = &rc * &rc;
        let t_norm = scaled_norm(&t).max(1.0);
        let mut max_re = 0.0_f64;
        let mut max_im = 0.0_f64;
        for i in 0..6 {
            for j in 0..6 {
                max_re = max_re.max((square[(i, j)].re - t.get(i, j)).abs());
                max_im = max_im.max(square[(i, j)].im.abs());
            }
        }
        assert!(max_re <= 1e-8 * t_norm);
        assert!(max_im <= 1e-8 * t_norm);

        // x'Tx computed directly vs via R agrees to 1e-8 relative.
        let x = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0_f64));
        let (re_sums, im_sums, _) = r.column_square_sums(&x);
        for k in 0..4 {
            let xk = x.column(k);
            let direct = (xk.transpose() * t.as_matrix() * xk)[(0, 0)];
            assert_relative_eq!(re_sums[k], direct, max_relative = 1e-8);
            assert!(im_sums[k].abs() <= 1e-8 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn pseudo_inverse_examples() {
        let i = pseudo_inverse(&SymMatrix::identity(4)).unwrap();
        assert!(
            scaled_distance2(&i, &SymMatrix::identity(4))
                .unwrap()
                .sqrt()
                < 1e-12
        );

        let rank_deficient = pseudo_inverse(&SymMatrix::from_diagonal(&[2.0, 0.0])).unwrap();
        let expected = SymMatrix::from_diagonal(&[0.5, 0.0]);
        assert!(scaled_distance2(&rank_deficient, &expected).unwrap().sqrt() < 1e-12);
    }

    #[test]
    fn pseudo_inverse_of_full_rank_psd_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = DMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0_f64));
        let a = SymMatrix::from_symmetrized(&g * g.transpose() + DMatrix::identity(8, 8));
        let pinv = pseudo_inverse(&a).unwrap();
        let prod = a.as_matrix() * pinv.as_matrix();
        let identity = DMatrix::<f64>::identity(8, 8);
        assert!((prod - identity).amax() < 1e-8);
    }

    #[test]
    fn pseudo_inverse_of_zero_is_zero() {
        let z = pseudo_inverse(&SymMatrix::zeros(3)).unwrap();
        assert_eq!(scaled_norm2(&z), 0.0);
    }
}
