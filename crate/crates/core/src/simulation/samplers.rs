//! Distribution samplers and population-covariance constructors for the
//! Monte-Carlo studies.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::estimators::ObservationMatrix;
use crate::matrix::{SymMatrix, Tolerances, sym_eigen};

pub(crate) fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Symmetric PSD square-root factor `L` with `L·Lᵀ = Σ`, via the shared
/// eigendecomposition backend. Rejects inputs with meaningfully negative
/// eigenvalues; tiny negative roundoff is clipped to zero.
pub(crate) fn psd_sqrt(sigma: &SymMatrix) -> Result<DMatrix<f64>> {
    let (vals, q) = sym_eigen(sigma)?;
    let max_abs = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = -Tolerances::default().psd_floor * max_abs.max(1.0);
    let min = vals.min();
    if min < floor {
        return Err(Error::NotPositiveSemiDefinite {
            min_eigenvalue: min,
        });
    }
    let mut l = q;
    for (j, &v) in vals.iter().enumerate() {
        l.column_mut(j).scale_mut(v.max(0.0).sqrt());
    }
    Ok(l)
}

/// Draws `W = G·Gᵀ` where the `dof` columns of `G` are i.i.d. `N(0, scale)`.
/// The result is symmetric positive semi-definite; a zero scale gives zero.
pub fn sample_wishart(scale: &SymMatrix, dof: usize, rng: &mut impl Rng) -> Result<SymMatrix> {
    if dof == 0 {
        return Err(Error::InvalidParameter(
            "Wishart degrees of freedom must be >= 1".into(),
        ));
    }
    let l = psd_sqrt(scale)?;
    let g = l * standard_normal_matrix(scale.dim(), dof, rng);
    Ok(SymMatrix::from_symmetrized(&g * g.transpose()))
}

/// Draws `n` columns of a centered multivariate t distribution with `ν > 2`
/// degrees of freedom and covariance exactly `Σ`: each column is
/// `L·z·√(ν/w)` with `z` standard normal, `w ~ χ²_ν`, and
/// `L·Lᵀ = ((ν-2)/ν)·Σ`. Large `ν` is numerically Gaussian-like but sampled
/// through the identical path.
pub fn sample_multivariate_t(
    sigma: &SymMatrix,
    nu: f64,
    n: usize,
    rng: &mut impl Rng,
) -> Result<ObservationMatrix> {
    if nu <= 2.0 {
        return Err(Error::InvalidParameter(format!(
            "multivariate t needs nu > 2 for a finite covariance, got {nu}"
        )));
    }
    let l = psd_sqrt(sigma)? * ((nu - 2.0) / nu).sqrt();
    let data = sample_t_columns(&l, nu, n, rng)?;
    ObservationMatrix::known_zero_mean(data)
}

/// Draws `n` columns of a centered Gaussian with covariance `Σ`.
pub fn sample_gaussian(
    sigma: &SymMatrix,
    n: usize,
    rng: &mut impl Rng,
) -> Result<ObservationMatrix> {
    let l = psd_sqrt(sigma)?;
    ObservationMatrix::known_zero_mean(sample_gaussian_columns(&l, n, rng))
}

/// t columns from a pre-scaled factor (`L·Lᵀ = ((ν-2)/ν)·Σ`).
pub(crate) fn sample_t_columns(
    scaled_sqrt: &DMatrix<f64>,
    nu: f64,
    n: usize,
    rng: &mut impl Rng,
) -> Result<DMatrix<f64>> {
    let chi2 = ChiSquared::new(nu)
        .map_err(|e| Error::InvalidParameter(format!("chi-squared({nu}): {e}")))?;
    let z = standard_normal_matrix(scaled_sqrt.ncols(), n, rng);
    let mut data = scaled_sqrt * z;
    for mut col in data.column_iter_mut() {
        let w: f64 = chi2.sample(rng);
        col.scale_mut((nu / w).sqrt());
    }
    Ok(data)
}

/// Gaussian columns from a factor with `L·Lᵀ = Σ`.
pub(crate) fn sample_gaussian_columns(
    sigma_sqrt: &DMatrix<f64>,
    n: usize,
    rng: &mut impl Rng,
) -> DMatrix<f64> {
    sigma_sqrt * standard_normal_matrix(sigma_sqrt.ncols(), n, rng)
}

/// Block-diagonal covariance with one Wishart draw per block:
/// block `i` has the given size, degrees of freedom, and scale matrix
/// `scale_factors[i]·I`. Off-block entries are exactly zero.
pub fn block_wishart_sigma(
    block_sizes: &[usize],
    dofs: &[usize],
    scale_factors: &[f64],
    rng: &mut impl Rng,
) -> Result<SymMatrix> {
    if block_sizes.is_empty() {
        return Err(Error::InvalidParameter(
            "block_sizes must be non-empty".into(),
        ));
    }
    if block_sizes.len() != dofs.len() || block_sizes.len() != scale_factors.len() {
        return Err(Error::DimensionMismatch {
            expected: block_sizes.len(),
            actual: dofs.len().min(scale_factors.len()),
        });
    }
    let dim: usize = block_sizes.iter().sum();
    let mut data = DMatrix::zeros(dim, dim);
    let mut offset = 0;
    for ((&size, &dof), &factor) in block_sizes.iter().zip(dofs).zip(scale_factors) {
        if size == 0 {
            return Err(Error::InvalidParameter(
                "block sizes must be positive".into(),
            ));
        }
        let scale = SymMatrix::from_symmetrized(DMatrix::identity(size, size) * factor);
        let block = sample_wishart(&scale, dof, rng)?;
        data.view_mut((offset, offset), (size, size))
            .copy_from(block.as_matrix());
        offset += size;
    }
    Ok(SymMatrix::from_symmetrized(data))
}

/// The fixed 50×50 population covariance of the first two experiment suites:
/// ten 5×5 diagonal blocks, block `i` (1-based) drawn from a Wishart with 5
/// degrees of freedom and scale `√(11-i)·I₅`.
pub fn build_block_sigma(rng: &mut impl Rng) -> Result<SymMatrix> {
    let sizes = [5_usize; 10];
    let dofs = [5_usize; 10];
    let factors: Vec<f64> = (1..=10).map(|i| ((11 - i) as f64).sqrt()).collect();
    block_wishart_sigma(&sizes, &dofs, &factors, rng)
}
