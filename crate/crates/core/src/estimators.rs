//! Multi-target linear shrinkage covariance estimators.
//!
//! The estimate is a linear combination `c0·S + Σ cᵢ·Tᵢ` of the sample
//! covariance `S` with an orthonormal target family, followed by a
//! projection onto the positive semi-definite cone. The oracle form uses the
//! population covariance; the bona fide form replaces the unobservable
//! quantities with unbiased variance estimators, in both the known-mean and
//! unknown-mean settings.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{
    ComplexSqrtFactor, SymMatrix, Tolerances, complex_sqrt_factor, psd_project, scaled_inner,
    scaled_norm2,
};
use crate::targets::TargetSet;

/// Whether the observation mean is known exactly or must be estimated.
#[derive(Debug, Clone, PartialEq)]
pub enum MeanMode {
    /// The mean vector is known; columns are centered by it and the `1/n`
    /// covariance normalization applies.
    Known(DVector<f64>),
    /// The mean is estimated empirically; the unbiased `1/(n-1)`
    /// normalization applies.
    Unknown,
}

/// A `p×n` matrix of `n` observations on `p` dimensions (one observation per
/// column), together with the mean handling mode.
#[derive(Debug, Clone)]
pub struct ObservationMatrix {
    data: DMatrix<f64>,
    mean_mode: MeanMode,
}

impl ObservationMatrix {
    /// Wraps observations, validating the mean vector length.
    pub fn new(data: DMatrix<f64>, mean_mode: MeanMode) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidParameter(
                "observation matrix must have at least one row and one column".into(),
            ));
        }
        if let MeanMode::Known(mu) = &mean_mode
            && mu.len() != data.nrows()
        {
            return Err(Error::DimensionMismatch {
                expected: data.nrows(),
                actual: mu.len(),
            });
        }
        Ok(Self { data, mean_mode })
    }

    /// Observations with a known zero mean.
    pub fn known_zero_mean(data: DMatrix<f64>) -> Result<Self> {
        let p = data.nrows();
        Self::new(data, MeanMode::Known(DVector::zeros(p)))
    }

    /// Observations with an unknown mean.
    pub fn unknown_mean(data: DMatrix<f64>) -> Result<Self> {
        Self::new(data, MeanMode::Unknown)
    }

    /// Same data under a different mean mode.
    pub fn with_mean_mode(&self, mean_mode: MeanMode) -> Result<Self> {
        Self::new(self.data.clone(), mean_mode)
    }

    /// Number of dimensions `p`.
    pub fn p(&self) -> usize {
        self.data.nrows()
    }

    /// Number of observations `n`.
    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    /// Raw observations.
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Mean handling mode.
    pub fn mean_mode(&self) -> &MeanMode {
        &self.mean_mode
    }

    /// Minimum number of observations required by the variance estimators
    /// (and therefore by the bona fide shrinkage): denominators involve
    /// `n-1` for the known mean and `n-2`, `n-3` for the unknown mean.
    pub fn min_samples_for_shrinkage(&self) -> usize {
        match self.mean_mode {
            MeanMode::Known(_) => 2,
            MeanMode::Unknown => 4,
        }
    }

    /// Centered columns: `x - μ` for a known mean, `x - x̄` otherwise.
    pub(crate) fn centered(&self) -> DMatrix<f64> {
        let mut xc = self.data.clone();
        match &self.mean_mode {
            MeanMode::Known(mu) => {
                for mut col in xc.column_iter_mut() {
                    col -= mu;
                }
            }
            MeanMode::Unknown => {
                let n = self.n() as f64;
                for i in 0..self.p() {
                    let mean = self.data.row(i).sum() / n;
                    for k in 0..self.n() {
                        xc[(i, k)] -= mean;
                    }
                }
            }
        }
        xc
    }

    fn require_samples(&self, required: usize) -> Result<()> {
        if self.n() < required {
            return Err(Error::InsufficientSamples {
                required,
                actual: self.n(),
            });
        }
        Ok(())
    }
}

/// The shrunk covariance estimate together with its coefficients and
/// diagnostics.
///
/// For the bona fide estimator `c0 ∈ [0, 1]` by truncation; the oracle keeps
/// the unclamped solution of the normal equations. `fallback_used` is set
/// exactly when `d²` fell below the degeneracy threshold and the sample
/// covariance was returned unchanged (the variance diagnostics are then 0).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShrinkageResult {
    /// The estimated covariance matrix (positive semi-definite).
    pub estimate: SymMatrix,
    /// Weight on the sample covariance.
    pub c0: f64,
    /// Weights on the targets, in target order.
    pub c_targets: Vec<f64>,
    /// `d² = ‖S‖² - Σ⟨S,Tₖ⟩²`, the squared distance of `S` from the target span.
    pub d_squared: f64,
    /// Estimate of `E‖S - Σ‖²` (0 for the oracle, which does not need it).
    pub vhat_s: f64,
    /// Estimates of `E⟨S - Σ, Tᵢ⟩²` per target (empty for the oracle).
    pub vhat_proj: Vec<f64>,
    /// Whether the degenerate-`d²` escape returned `S` unchanged.
    pub fallback_used: bool,
}

/// Sample covariance: `(X-μ)(X-μ)ᵀ/n` for a known mean, `X̃X̃ᵀ/(n-1)` with
/// empirical centering otherwise.
pub fn sample_covariance(x: &ObservationMatrix) -> Result<SymMatrix> {
    let denominator = match x.mean_mode() {
        MeanMode::Known(_) => x.n() as f64,
        MeanMode::Unknown => {
            x.require_samples(2)?;
            (x.n() - 1) as f64
        }
    };
    let xc = x.centered();
    Ok(SymMatrix::from_symmetrized(
        &xc * xc.transpose() / denominator,
    ))
}

/// Estimate of `V(S) = E‖S - Σ‖²`.
///
/// Known mean: `Σₖ ‖xₖxₖᵀ - S‖² / (n(n-1))`. Unknown mean: the closed form
/// with the `b̄²` correction and `(n-2)(n-3)` denominators. May be negative
/// in finite samples; only the shrinkage weight is truncated downstream.
pub fn vhat_s(x: &ObservationMatrix, s: &SymMatrix) -> Result<f64> {
    if s.dim() != x.p() {
        return Err(Error::DimensionMismatch {
            expected: x.p(),
            actual: s.dim(),
        });
    }
    x.require_samples(x.min_samples_for_shrinkage())?;
    let n = x.n() as f64;
    let p = x.p() as f64;
    let xc = x.centered();
    // Σₖ ‖xₖ‖⁴: with Σₖ xₖxₖᵀ proportional to S the cross terms collapse,
    // leaving an O(np) evaluation of the defining sum.
    let sum4: f64 = xc
        .column_iter()
        .map(|c| {
            let q = c.norm_squared();
            q * q
        })
        .sum();
    let s_norm2 = scaled_norm2(s);
    match x.mean_mode() {
        MeanMode::Known(_) => {
            let sum_sq = sum4 / p - n * s_norm2;
            Ok(sum_sq / (n * (n - 1.0)))
        }
        MeanMode::Unknown => {
            let c = n / (n - 1.0);
            let b_bar = (c * c * sum4 / p - n * s_norm2) / (n * n);
            let trace_term = scaled_inner(s, &SymMatrix::identity(x.p()))?;
            Ok((n - 1.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0)) * b_bar
                - s_norm2 / (n * (n - 2.0))
                - (n - 1.0) / (n * (n - 2.0) * (n - 3.0)) * p * trace_term * trace_term)
        }
    }
}

/// `Σₖ ⟨x̃ₖx̃ₖᵀ, T⟩²` over the centered columns, evaluated through the complex
/// square root of `T` (two real matrix products). The imaginary residue of
/// each complex square sum must stay within its tolerance relative to the
/// magnitude of the computation; a violation is surfaced as an error.
pub fn projection_square_sum(x: &ObservationMatrix, t: &SymMatrix) -> Result<f64> {
    let factor = complex_sqrt_factor(t)?;
    projection_square_sum_with_factor(&x.centered(), &factor, &Tolerances::default())
}

pub(crate) fn projection_square_sum_with_factor(
    centered: &DMatrix<f64>,
    factor: &ComplexSqrtFactor,
    tol: &Tolerances,
) -> Result<f64> {
    if factor.dim() != centered.nrows() {
        return Err(Error::DimensionMismatch {
            expected: centered.nrows(),
            actual: factor.dim(),
        });
    }
    let p = factor.dim() as f64;
    let (re, im, magnitude) = factor.column_square_sums(centered);
    let mut sum = 0.0;
    for k in 0..centered.ncols() {
        let budget = tol.imag_residual * magnitude[k];
        if im[k].abs() > budget {
            return Err(Error::ImaginaryResidue {
                residue: im[k].abs(),
                tolerance: budget,
            });
        }
        let v = re[k] / p;
        sum += v * v;
    }
    Ok(sum)
}

/// Reference evaluation of `Σₖ ⟨x̃ₖx̃ₖᵀ, T⟩²` that forms each outer product
/// explicitly. Slow; kept as the independent cross-check of the fast path.
pub fn projection_square_sum_naive(x: &ObservationMatrix, t: &SymMatrix) -> Result<f64> {
    if t.dim() != x.p() {
        return Err(Error::DimensionMismatch {
            expected: x.p(),
            actual: t.dim(),
        });
    }
    let xc = x.centered();
    let p = x.p();
    let mut sum = 0.0;
    for k in 0..x.n() {
        let col = xc.column(k);
        let mut inner = 0.0;
        for i in 0..p {
            for j in 0..p {
                inner += col[i] * col[j] * t.get(i, j);
            }
        }
        let v = inner / p as f64;
        sum += v * v;
    }
    Ok(sum)
}

/// Estimate of `V(⟨S,T⟩) = E⟨S - Σ, T⟩²` for one target of an orthonormal
/// family.
pub fn vhat_proj(x: &ObservationMatrix, s: &SymMatrix, t: &SymMatrix) -> Result<f64> {
    let factor = complex_sqrt_factor(t)?;
    vhat_proj_with_factor(x, s, t, &factor, &Tolerances::default())
}

pub(crate) fn vhat_proj_with_factor(
    x: &ObservationMatrix,
    s: &SymMatrix,
    t: &SymMatrix,
    factor: &ComplexSqrtFactor,
    tol: &Tolerances,
) -> Result<f64> {
    if s.dim() != x.p() || t.dim() != x.p() {
        return Err(Error::DimensionMismatch {
            expected: x.p(),
            actual: if s.dim() != x.p() { s.dim() } else { t.dim() },
        });
    }
    x.require_samples(x.min_samples_for_shrinkage())?;
    let sum_quad = projection_square_sum_with_factor(&x.centered(), factor, tol)?;
    vhat_proj_from_sum(x, s, t, sum_quad)
}

/// `⟨S·T, T·S⟩ = Tr(S·T·S·T)/p`.
fn product_self_inner(s: &SymMatrix, t: &SymMatrix) -> f64 {
    let m = s.as_matrix() * t.as_matrix();
    let p = s.dim();
    let mut trace = 0.0;
    for i in 0..p {
        for j in 0..p {
            trace += m[(i, j)] * m[(j, i)];
        }
    }
    trace / p as f64
}

fn degenerate(d_squared: f64, s_norm2: f64, tol: &Tolerances) -> bool {
    d_squared <= tol.degeneracy * s_norm2.max(1.0)
}

fn fallback_result(s: &SymMatrix, d_squared: f64, n_targets: usize) -> ShrinkageResult {
    ShrinkageResult {
        estimate: s.clone(),
        c0: 1.0,
        c_targets: vec![0.0; n_targets],
        d_squared,
        vhat_s: 0.0,
        vhat_proj: vec![0.0; n_targets],
        fallback_used: true,
    }
}

/// Oracle estimator: the orthogonal projection of the population covariance
/// `Σ` onto `span{S, T₁..T_N}`, followed by the PSD-cone projection.
///
/// The closed-form coefficients are
/// `c0* = (⟨S,Σ⟩ - Σₖ⟨S,Tₖ⟩⟨Σ,Tₖ⟩)/d²` and `cᵢ* = ⟨Σ,Tᵢ⟩ - c0*⟨S,Tᵢ⟩`;
/// a degenerate `d²` falls back to `S`.
pub fn oracle_mtse(
    s: &SymMatrix,
    targets: &TargetSet,
    sigma: &SymMatrix,
) -> Result<ShrinkageResult> {
    let tol = Tolerances::default();
    if targets.dim() != s.dim() || sigma.dim() != s.dim() {
        return Err(Error::DimensionMismatch {
            expected: s.dim(),
            actual: if targets.dim() != s.dim() {
                targets.dim()
            } else {
                sigma.dim()
            },
        });
    }
    let s_norm2 = scaled_norm2(s);
    let s_proj: Vec<f64> = targets
        .members()
        .iter()
        .map(|t| scaled_inner(s, t))
        .collect::<Result<_>>()?;
    let d_squared = s_norm2 - s_proj.iter().map(|v| v * v).sum::<f64>();
    if degenerate(d_squared, s_norm2, &tol) {
        return Ok(fallback_result(s, d_squared, targets.len()));
    }
    let sigma_proj: Vec<f64> = targets
        .members()
        .iter()
        .map(|t| scaled_inner(sigma, t))
        .collect::<Result<_>>()?;
    let cross = scaled_inner(s, sigma)?;
    let c0 = (cross
        - s_proj
            .iter()
            .zip(&sigma_proj)
            .map(|(a, b)| a * b)
            .sum::<f64>())
        / d_squared;
    let c_targets: Vec<f64> = sigma_proj
        .iter()
        .zip(&s_proj)
        .map(|(sig, sp)| sig - c0 * sp)
        .collect();
    let estimate = combine_and_project(s, targets, c0, &c_targets)?;
    Ok(ShrinkageResult {
        estimate,
        c0,
        c_targets,
        d_squared,
        vhat_s: 0.0,
        vhat_proj: Vec::new(),
        fallback_used: false,
    })
}

/// Bona fide multi-target shrinkage estimator.
///
/// Computes `ĉ0 = (‖S‖² - V̂(S) - Σₖ(⟨S,Tₖ⟩² - V̂(⟨S,Tₖ⟩)))/d²`, truncates it
/// to `c0 ∈ [0,1]`, sets `cᵢ = (1-c0)⟨S,Tᵢ⟩`, and projects the combination
/// `c0·S + Σᵢ cᵢ·Tᵢ` onto the PSD cone. A degenerate `d²` returns `S`.
pub fn mtse(x: &ObservationMatrix, targets: &TargetSet) -> Result<ShrinkageResult> {
    mtse_with(x, targets, &Tolerances::default())
}

/// As [`mtse`] with explicit tolerances.
pub fn mtse_with(
    x: &ObservationMatrix,
    targets: &TargetSet,
    tol: &Tolerances,
) -> Result<ShrinkageResult> {
    if targets.dim() != x.p() {
        return Err(Error::DimensionMismatch {
            expected: x.p(),
            actual: targets.dim(),
        });
    }
    x.require_samples(x.min_samples_for_shrinkage())?;
    let s = sample_covariance(x)?;
    mtse_from_sample(x, &s, targets, tol)
}

/// Bona fide estimator reusing an already-computed sample covariance.
pub fn mtse_from_sample(
    x: &ObservationMatrix,
    s: &SymMatrix,
    targets: &TargetSet,
    tol: &Tolerances,
) -> Result<ShrinkageResult> {
    let s_norm2 = scaled_norm2(s);
    let s_proj: Vec<f64> = targets
        .members()
        .iter()
        .map(|t| scaled_inner(s, t))
        .collect::<Result<_>>()?;
    let d_squared = s_norm2 - s_proj.iter().map(|v| v * v).sum::<f64>();
    if degenerate(d_squared, s_norm2, tol) {
        return Ok(fallback_result(s, d_squared, targets.len()));
    }
    let vs = vhat_s(x, s)?;
    let factors = targets.sqrt_factors()?;
    let centered = x.centered();
    let mut vps = Vec::with_capacity(targets.len());
    for (t, factor) in targets.members().iter().zip(factors) {
        // Reuse the centered matrix across targets; each vhat is one pass.
        let sum_quad = projection_square_sum_with_factor(&centered, factor, tol)?;
        vps.push(vhat_proj_from_sum(x, s, t, sum_quad)?);
    }
    let chat0 = (s_norm2
        - vs
        - s_proj
            .iter()
            .zip(&vps)
            .map(|(sp, vp)| sp * sp - vp)
            .sum::<f64>())
        / d_squared;
    let c0 = chat0.clamp(0.0, 1.0);
    let c_targets: Vec<f64> = s_proj.iter().map(|sp| (1.0 - c0) * sp).collect();
    let estimate = combine_and_project(s, targets, c0, &c_targets)?;
    Ok(ShrinkageResult {
        estimate,
        c0,
        c_targets,
        d_squared,
        vhat_s: vs,
        vhat_proj: vps,
        fallback_used: false,
    })
}

/// Completes a projected-variance estimate from a precomputed
/// `Σₖ ⟨x̃ₖx̃ₖᵀ, T⟩²`.
fn vhat_proj_from_sum(
    x: &ObservationMatrix,
    s: &SymMatrix,
    t: &SymMatrix,
    sum_quad: f64,
) -> Result<f64> {
    let n = x.n() as f64;
    let p = x.p() as f64;
    let st = scaled_inner(s, t)?;
    match x.mean_mode() {
        MeanMode::Known(_) => Ok((sum_quad - n * st * st) / (n * (n - 1.0))),
        MeanMode::Unknown => {
            let st_ts = product_self_inner(s, t);
            let b_bar_t = p * sum_quad / ((n - 1.0) * (n - 1.0)) - st_ts / n;
            let q0 = (n - 1.0) * (n - 1.0) / (p * (n - 2.0) * (n - 3.0));
            let q1 = (n - 1.0) / (p * n * (n - 2.0));
            let q2 = (n * n - 2.0 * n - 1.0) / (n * (n - 2.0) * (n - 3.0));
            Ok(q0 * b_bar_t + q1 * st_ts - q2 * st * st)
        }
    }
}

fn combine_and_project(
    s: &SymMatrix,
    targets: &TargetSet,
    c0: f64,
    c_targets: &[f64],
) -> Result<SymMatrix> {
    let mut coeffs = Vec::with_capacity(1 + c_targets.len());
    coeffs.push(c0);
    coeffs.extend_from_slice(c_targets);
    let mut mats: Vec<&SymMatrix> = Vec::with_capacity(1 + targets.len());
    mats.push(s);
    mats.extend(targets.members().iter());
    let combination = SymMatrix::linear_combination(&coeffs, &mats)?;
    psd_project(&combination)
}

/// Ledoit-Wolf single-target baseline: exactly `mtse` with the identity as
/// the only target.
pub fn lw_estimator(x: &ObservationMatrix) -> Result<ShrinkageResult> {
    mtse(x, &TargetSet::identity(x.p()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{scaled_distance2, scaled_norm};
    use crate::targets;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_obs(p: usize, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        DMatrix::from_fn(p, n, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn known_mean_single_column_is_outer_product() {
        let data = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let x = ObservationMatrix::known_zero_mean(data).unwrap();
        let s = sample_covariance(&x).unwrap();
        assert_relative_eq!(s.get(0, 0), 1.0);
        assert_relative_eq!(s.get(0, 1), 2.0);
        assert_relative_eq!(s.get(1, 1), 4.0);
    }

    #[test]
    fn unknown_mean_two_columns_forced_form() {
        let x1 = DVector::from_column_slice(&[1.0, -1.0, 2.0]);
        let x2 = DVector::from_column_slice(&[0.5, 3.0, -2.0]);
        let mut data = DMatrix::zeros(3, 2);
        data.set_column(0, &x1);
        data.set_column(1, &x2);
        let x = ObservationMatrix::unknown_mean(data).unwrap();
        let s = sample_covariance(&x).unwrap();
        let diff = &x1 - &x2;
        let expected = SymMatrix::from_symmetrized(&diff * diff.transpose() / 2.0);
        assert!(scaled_distance2(&s, &expected).unwrap().sqrt() < 1e-14);
    }

    #[test]
    fn unknown_mean_needs_two_observations() {
        let data = DMatrix::from_column_slice(2, 1, &[1.0, 2.0]);
        let x = ObservationMatrix::unknown_mean(data).unwrap();
        assert!(matches!(
            sample_covariance(&x),
            Err(Error::InsufficientSamples {
                required: 2,
                actual: 1
            })
        ));
    }

    #[test]
    fn vhat_s_known_mean_two_samples_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let data = normal_obs(3, 2, &mut rng);
        let x1 = data.column(0).into_owned();
        let x2 = data.column(1).into_owned();
        let x = ObservationMatrix::known_zero_mean(data.clone()).unwrap();
        let s = sample_covariance(&x).unwrap();
        let diff = SymMatrix::from_symmetrized(&x1 * x1.transpose() - &x2 * x2.transpose());
        let expected = scaled_norm2(&diff) / 4.0;
        assert_relative_eq!(vhat_s(&x, &s).unwrap(), expected, max_relative = 1e-12);
    }

    #[test]
    fn vhat_terms_vanish_on_identical_columns_known_mean() {
        let col = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let mut data = DMatrix::zeros(3, 4);
        for k in 0..4 {
            data.set_column(k, &col);
        }
        let x = ObservationMatrix::known_zero_mean(data).unwrap();
        let s = sample_covariance(&x).unwrap();
        assert_relative_eq!(vhat_s(&x, &s).unwrap(), 0.0, epsilon = 1e-12);
        let t = SymMatrix::identity(3);
        assert_relative_eq!(vhat_proj(&x, &s, &t).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn vhat_s_matches_literal_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for mode in [true, false] {
            let data = normal_obs(4, 7, &mut rng);
            let x = if mode {
                ObservationMatrix::known_zero_mean(data).unwrap()
            } else {
                ObservationMatrix::unknown_mean(data).unwrap()
            };
            let s = sample_covariance(&x).unwrap();
            let xc = x.centered();
            let n = x.n() as f64;
            let literal = match x.mean_mode() {
                MeanMode::Known(_) => {
                    let mut sum = 0.0;
                    for k in 0..x.n() {
                        let c = xc.column(k);
                        let outer = SymMatrix::from_symmetrized(c * c.transpose() - s.as_matrix());
                        sum += scaled_norm2(&outer);
                    }
                    sum / (n * (n - 1.0))
                }
                MeanMode::Unknown => {
                    let mut b_bar = 0.0;
                    for k in 0..x.n() {
                        let c = xc.column(k);
                        let m = SymMatrix::from_symmetrized(
                            (c * c.transpose()) * (n / (n - 1.0)) - s.as_matrix(),
                        );
                        b_bar += scaled_norm2(&m);
                    }
                    b_bar /= n * n;
                    let p = x.p() as f64;
                    let s_norm2 = scaled_norm2(&s);
                    let tr = scaled_inner(&s, &SymMatrix::identity(x.p())).unwrap();
                    (n - 1.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0)) * b_bar
                        - s_norm2 / (n * (n - 2.0))
                        - (n - 1.0) / (n * (n - 2.0) * (n - 3.0)) * p * tr * tr
                }
            };
            assert_relative_eq!(vhat_s(&x, &s).unwrap(), literal, max_relative = 1e-11);
        }
    }

    #[test]
    fn fast_projection_sum_matches_naive_on_indefinite_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data = normal_obs(10, 7, &mut rng);
        let x = ObservationMatrix::unknown_mean(data).unwrap();
        let raw = SymMatrix::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
        let t = SymMatrix::from_symmetrized(raw.as_matrix() / scaled_norm(&raw));
        let fast = projection_square_sum(&x, &t).unwrap();
        let naive = projection_square_sum_naive(&x, &t).unwrap();
        assert_relative_eq!(fast, naive, max_relative = 1e-8);
    }

    #[test]
    fn vhat_proj_matches_literal_definition_known_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let data = normal_obs(5, 6, &mut rng);
        let x = ObservationMatrix::known_zero_mean(data).unwrap();
        let s = sample_covariance(&x).unwrap();
        let t = SymMatrix::identity(5);
        let xc = x.centered();
        let n = x.n() as f64;
        let mut literal = 0.0;
        for k in 0..x.n() {
            let c = xc.column(k);
            let m = SymMatrix::from_symmetrized(c * c.transpose() - s.as_matrix());
            let inner = scaled_inner(&m, &t).unwrap();
            literal += inner * inner;
        }
        literal /= n * (n - 1.0);
        assert_relative_eq!(
            vhat_proj(&x, &s, &t).unwrap(),
            literal,
            max_relative = 1e-11
        );
    }

    #[test]
    fn oracle_recovers_exact_span_membership() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let targets = targets::block_identity_targets(&[3, 3]).unwrap();
        let data = normal_obs(6, 12, &mut rng);
        let x = ObservationMatrix::known_zero_mean(data).unwrap();
        let s = sample_covariance(&x).unwrap();
        // Σ = 0.5·S + 2·T₁ is PSD (S PSD, T₁ = I after orthonormalization).
        let sigma = SymMatrix::linear_combination(&[0.5, 2.0], &[&s, targets.member(0)]).unwrap();
        let result = oracle_mtse(&s, &targets, &sigma).unwrap();
        assert_relative_eq!(result.c0, 0.5, epsilon = 1e-10);
        assert_relative_eq!(result.c_targets[0], 2.0, epsilon = 1e-10);
        assert_relative_eq!(result.c_targets[1], 0.0, epsilon = 1e-10);
        assert!(scaled_distance2(&result.estimate, &sigma).unwrap() < 1e-18);
    }

    #[test]
    fn oracle_gives_zero_coefficients_for_orthogonal_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let targets = targets::block_identity_targets(&[2, 2]).unwrap();
        let data = normal_obs(4, 9, &mut rng);
        let x = ObservationMatrix::known_zero_mean(data).unwrap();
        let s = sample_covariance(&x).unwrap();
        // Build Σ orthogonal to span{S, T₁, T₂} by explicit orthogonalization.
        let mut u = s.as_matrix().clone();
        for t in targets.members() {
            let coeff = scaled_inner(&s, t).unwrap();
            u -= t.as_matrix() * coeff;
        }
        let u = SymMatrix::from_symmetrized(u);
        let u_hat = SymMatrix::from_symmetrized(u.as_matrix() / scaled_norm(&u));
        let mut m = SymMatrix::from_fn(4, |i, j| ((i * 7 + j * 3) as f64).sin()).into_matrix();
        let m_sym = SymMatrix::from_symmetrized(m.clone());
        m -= u_hat.as_matrix() * scaled_inner(&m_sym, &u_hat).unwrap();
        for t in targets.members() {
            m -= t.as_matrix() * scaled_inner(&m_sym, t).unwrap();
        }
        let sigma_perp = SymMatrix::from_symmetrized(m);
        let result = oracle_mtse(&s, &targets, &sigma_perp).unwrap();
        assert!(result.c0.abs() < 1e-10);
        for c in &result.c_targets {
            assert!(c.abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let targets = targets::block_identity_targets(&[3, 3]).unwrap();
        let data = normal_obs(6, 10, &mut rng);
        let x = ObservationMatrix::known_zero_mean(data).unwrap();
        let s = sample_covariance(&x).unwrap();
        let g = normal_obs(6, 6, &mut rng);
        let sigma = SymMatrix::from_symmetrized(&g * g.transpose() / 6.0);
        let result = oracle_mtse(&s, &targets, &sigma).unwrap();

        let n_t = targets.len();
        let mut a = DMatrix::zeros(n_t + 1, n_t + 1);
        a[(0, 0)] = scaled_norm2(&s);
        for i in 0..n_t {
            let v = scaled_inner(&s, targets.member(i)).unwrap();
            a[(0, i + 1)] = v;
            a[(i + 1, 0)] = v;
            a[(i + 1, i + 1)] = 1.0;
        }
        let mut b = DVector::zeros(n_t + 1);
        b[0] = scaled_inner(&s, &sigma).unwrap();
        for i in 0..n_t {
            b[i + 1] = scaled_inner(targets.member(i), &sigma).unwrap();
        }
        let solved = a
            .lu()
            .solve(&b)
            .expect("A_n invertible under well-posedness");
        assert_relative_eq!(result.c0, solved[0], epsilon = 1e-10);
        for i in 0..n_t {
            assert_relative_eq!(result.c_targets[i], solved[i + 1], epsilon = 1e-10);
        }
    }

    /// Independent single-target Ledoit-Wolf coding of Definitions 6-7 with
    /// naive loops, used as an oracle for the N=1 reduction.
    fn independent_lw_c0(x: &ObservationMatrix) -> f64 {
        let s = sample_covariance(x).unwrap();
        let p = x.p();
        let n = x.n() as f64;
        let xc = x.centered();
        let identity = SymMatrix::identity(p);
        let mut vhat_s_naive = 0.0;
        let mut vhat_t_naive = 0.0;
        for k in 0..x.n() {
            let c = xc.column(k);
            let m = SymMatrix::from_symmetrized(c * c.transpose() - s.as_matrix());
            vhat_s_naive += scaled_norm2(&m);
            let inner = scaled_inner(&m, &identity).unwrap();
            vhat_t_naive += inner * inner;
        }
        vhat_s_naive /= n * (n - 1.0);
        vhat_t_naive /= n * (n - 1.0);
        let s_norm2 = scaled_norm2(&s);
        let st = scaled_inner(&s, &identity).unwrap();
        let d2 = s_norm2 - st * st;
        let chat0 = (s_norm2 - vhat_s_naive - (st * st - vhat_t_naive)) / d2;
        chat0.clamp(0.0, 1.0)
    }

    #[test]
    fn lw_reduction_matches_independent_implementation() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let data = normal_obs(6, 9, &mut rng);
            let x = ObservationMatrix::known_zero_mean(data).unwrap();
            let ours = lw_estimator(&x).unwrap();
            assert!(!ours.fallback_used);
            assert_relative_eq!(ours.c0, independent_lw_c0(&x), epsilon = 1e-10);
        }
    }

    #[test]
    fn lw_is_bit_identical_to_single_identity_mtse() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let data = normal_obs(5, 8, &mut rng);
        let x = ObservationMatrix::unknown_mean(data).unwrap();
        let a = lw_estimator(&x).unwrap();
        let b = mtse(&x, &TargetSet::identity(5)).unwrap();
        assert_eq!(a.c0, b.c0);
        assert_eq!(a.c_targets, b.c_targets);
        assert_eq!(a.estimate.as_matrix(), b.estimate.as_matrix());
    }

    #[test]
    fn shrinkage_vanishes_with_many_samples() {
        // Σ must lie outside the target span (here: non-spherical), otherwise
        // full shrinkage toward the target is the right answer.
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut data = normal_obs(5, 100_000, &mut rng);
        for (i, mut row) in data.row_iter_mut().enumerate() {
            row *= (1 + i) as f64;
        }
        let x = ObservationMatrix::known_zero_mean(data).unwrap();
        let result = lw_estimator(&x).unwrap();
        assert!(result.c0 >= 0.99, "c0 = {} should approach 1", result.c0);
    }

    #[test]
    fn degenerate_span_falls_back_to_sample_covariance() {
        // Constant repeated observation pattern: S is rank one and lies in
        // the span of the matching single-target family.
        let col = DVector::from_column_slice(&[1.0, 2.0]);
        let mut data = DMatrix::zeros(2, 4);
        for k in 0..4 {
            data.set_column(k, &col);
        }
        let x = ObservationMatrix::known_zero_mean(data).unwrap();
        let s = sample_covariance(&x).unwrap();
        let t = SymMatrix::from_symmetrized(s.as_matrix() / scaled_norm(&s));
        let targets =
            TargetSet::from_orthonormal(vec![t], crate::targets::TargetProvenance::Custom).unwrap();
        let result = mtse(&x, &targets).unwrap();
        assert!(result.fallback_used);
        assert_eq!(result.estimate.as_matrix(), s.as_matrix());
    }

    #[test]
    fn constant_columns_fall_back_under_unknown_mean() {
        let col = DVector::from_column_slice(&[3.0, -1.0, 0.5]);
        let mut data = DMatrix::zeros(3, 5);
        for k in 0..5 {
            data.set_column(k, &col);
        }
        let x = ObservationMatrix::unknown_mean(data).unwrap();
        let result = lw_estimator(&x).unwrap();
        assert!(result.fallback_used);
    }

    #[test]
    fn c0_is_clamped_at_zero_for_noise_dominated_input() {
        // Orthogonal columns of different norms make the variance estimate
        // swamp the signal, driving the raw weight negative (equal norms
        // would make S spherical and trip the degeneracy fallback instead).
        let data = DMatrix::from_column_slice(2, 2, &[100.0, 0.0, 0.0, 50.0]);
        let x = ObservationMatrix::known_zero_mean(data).unwrap();
        let result = lw_estimator(&x).unwrap();
        assert!(!result.fallback_used);
        let s = sample_covariance(&x).unwrap();
        let st = scaled_inner(&s, &SymMatrix::identity(2)).unwrap();
        let chat0 =
            (scaled_norm2(&s) - result.vhat_s - (st * st - result.vhat_proj[0])) / result.d_squared;
        assert!(chat0 < 0.0);
        assert_eq!(result.c0, 0.0);
    }

    #[test]
    fn c0_is_clamped_at_one_when_raw_weight_exceeds_it() {
        // Scan a few seeds for a small unknown-mean sample whose raw weight
        // exceeds 1 (the variance estimates can be negative).
        let mut found = false;
        for seed in 0..400 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let data = normal_obs(3, 4, &mut rng);
            let x = ObservationMatrix::unknown_mean(data).unwrap();
            let result = lw_estimator(&x).unwrap();
            if result.fallback_used {
                continue;
            }
            let s = sample_covariance(&x).unwrap();
            let st = scaled_inner(&s, &SymMatrix::identity(3)).unwrap();
            let chat0 = (scaled_norm2(&s) - result.vhat_s - (st * st - result.vhat_proj[0]))
                / result.d_squared;
            if chat0 > 1.0 {
                assert_eq!(result.c0, 1.0);
                found = true;
                break;
            }
        }
        assert!(found, "no seed produced a raw weight above 1");
    }

    #[test]
    fn translation_invariance_under_unknown_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let targets = targets::block_identity_targets(&[3, 3]).unwrap();
        for _ in 0..5 {
            let data = normal_obs(6, 10, &mut rng);
            let shift = DVector::from_fn(6, |i, _| (i as f64) * 10.0 - 25.0);
            let mut shifted = data.clone();
            for mut col in shifted.column_iter_mut() {
                col += &shift;
            }
            let x = ObservationMatrix::unknown_mean(data).unwrap();
            let y = ObservationMatrix::unknown_mean(shifted).unwrap();
            let a = mtse(&x, &targets).unwrap();
            let b = mtse(&y, &targets).unwrap();
            assert_relative_eq!(a.c0, b.c0, epsilon = 1e-10);
            assert!(scaled_distance2(&a.estimate, &b.estimate).unwrap().sqrt() < 1e-10);
        }
    }

    #[test]
    fn estimates_are_positive_semidefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let data = normal_obs(8, 6, &mut rng);
            let x = ObservationMatrix::known_zero_mean(data).unwrap();
            let targets = targets::block_identity_targets(&[4, 4]).unwrap();
            let result = mtse(&x, &targets).unwrap();
            assert!(result.estimate.min_eigenvalue() >= -1e-10);
            assert!(result.c0 >= 0.0 && result.c0 <= 1.0);
        }
    }

    #[test]
    fn oracle_combination_is_optimal_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let targets = targets::block_identity_targets(&[2, 2]).unwrap();
        let data = normal_obs(4, 8, &mut rng);
        let x = ObservationMatrix::known_zero_mean(data).unwrap();
        let s = sample_covariance(&x).unwrap();
        let g = normal_obs(4, 4, &mut rng);
        let sigma = SymMatrix::from_symmetrized(&g * g.transpose() / 4.0);
        let result = oracle_mtse(&s, &targets, &sigma).unwrap();
        let mut mats: Vec<&SymMatrix> = vec![&s];
        mats.extend(targets.members().iter());
        let mut best = Vec::with_capacity(mats.len());
        best.push(result.c0);
        best.extend_from_slice(&result.c_targets);
        let optimal = SymMatrix::linear_combination(&best, &mats).unwrap();
        let optimal_loss = scaled_distance2(&optimal, &sigma).unwrap();
        for delta in [-0.1, -0.01, 0.01, 0.1] {
            for pos in 0..best.len() {
                let mut perturbed = best.clone();
                perturbed[pos] += delta;
                let candidate = SymMatrix::linear_combination(&perturbed, &mats).unwrap();
                let loss = scaled_distance2(&candidate, &sigma).unwrap();
                assert!(optimal_loss <= loss + 1e-12);
            }
        }
    }
}
