//! Construction of orthonormal target families.
//!
//! A target is a fixed symmetric matrix toward which the sample covariance
//! is shrunk; it need not be positive. Families are kept orthonormal under
//! the scaled inner product, which every estimator in this crate relies on.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{
    ComplexSqrtFactor, SymMatrix, Tolerances, complex_sqrt_factor, gram_schmidt_with,
    orthonormal_residual, scaled_inner, scaled_norm,
};
use crate::simulation::sample_wishart;

/// How a target set was constructed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TargetProvenance {
    /// The single identity target (the Ledoit-Wolf configuration).
    Identity,
    /// Identity plus per-block identities, jointly orthonormalized.
    BlockIdentity { block_sizes: Vec<usize> },
    /// One normalized identity block per block, disjoint supports.
    DisjointBlocks { block_sizes: Vec<usize> },
    /// Row/column permutation of another set.
    Permuted {
        shift: usize,
        base: Box<TargetProvenance>,
    },
    /// Normalized Wishart draws, jointly orthonormalized.
    RandomWishart { count: usize },
    /// A base set extended with extra random Wishart targets.
    Extended {
        base: Box<TargetProvenance>,
        extra: usize,
    },
    /// One diagonal indicator target per sector label.
    Sectors { labels: Vec<String> },
    /// Prefix of another set.
    Truncated {
        base: Box<TargetProvenance>,
        count: usize,
    },
    /// Supplied by the caller.
    Custom,
}

/// Orthonormal family of symmetric target matrices.
///
/// Invariants: all members share the same dimension, have unit scaled norm,
/// and are pairwise orthogonal within [`Tolerances::orthonormality`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TargetSet {
    dim: usize,
    members: Vec<SymMatrix>,
    provenance: TargetProvenance,
    #[serde(skip)]
    sqrt_factors: OnceLock<Vec<ComplexSqrtFactor>>,
}

impl TargetSet {
    /// Wraps an already-orthonormal family, validating its Gram matrix.
    pub fn from_orthonormal(members: Vec<SymMatrix>, provenance: TargetProvenance) -> Result<Self> {
        Self::from_orthonormal_with(members, provenance, &Tolerances::default())
    }

    /// As [`TargetSet::from_orthonormal`] with explicit tolerances.
    pub fn from_orthonormal_with(
        members: Vec<SymMatrix>,
        provenance: TargetProvenance,
        tol: &Tolerances,
    ) -> Result<Self> {
        let first = members.first().ok_or(Error::DegenerateTargetFamily)?;
        let dim = first.dim();
        for (i, a) in members.iter().enumerate() {
            for (j, b) in members.iter().enumerate().skip(i) {
                let inner = scaled_inner(a, b)?;
                let expected = if i == j { 1.0 } else { 0.0 };
                if (inner - expected).abs() > tol.orthonormality {
                    return Err(Error::InvalidParameter(format!(
                        "target family is not orthonormal: |<T{i},T{j}> - {expected}| = {:e}",
                        (inner - expected).abs()
                    )));
                }
            }
        }
        Ok(Self {
            dim,
            members,
            provenance,
            sqrt_factors: OnceLock::new(),
        })
    }

    /// Orthonormalizes a raw family with Gram-Schmidt (input order kept,
    /// near-dependent members dropped) and wraps the result.
    pub fn orthonormalize(raw: Vec<SymMatrix>, provenance: TargetProvenance) -> Result<Self> {
        Self::orthonormalize_with(raw, provenance, &Tolerances::default())
    }

    /// As [`TargetSet::orthonormalize`] with explicit tolerances.
    pub fn orthonormalize_with(
        raw: Vec<SymMatrix>,
        provenance: TargetProvenance,
        tol: &Tolerances,
    ) -> Result<Self> {
        let members = gram_schmidt_with(&raw, tol)?;
        let dim = members[0].dim();
        Ok(Self {
            dim,
            members,
            provenance,
            sqrt_factors: OnceLock::new(),
        })
    }

    /// The single-identity set `{I_p}` (`‖I‖ = 1` already).
    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            members: vec![SymMatrix::identity(dim)],
            provenance: TargetProvenance::Identity,
            sqrt_factors: OnceLock::new(),
        }
    }

    /// Matrix dimension `p`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of targets `N`.
    pub fn len(&self) -> usize {
        self.members.len()
    }

    /// True when the family is empty (never holds for a constructed set).
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// The orthonormal members in order.
    pub fn members(&self) -> &[SymMatrix] {
        &self.members
    }

    /// Single member access.
    pub fn member(&self, i: usize) -> &SymMatrix {
        &self.members[i]
    }

    /// Construction descriptor.
    pub fn provenance(&self) -> &TargetProvenance {
        &self.provenance
    }

    /// Gram matrix of pairwise scaled inner products (identity for a valid set).
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |i, j| {
            scaled_inner(&self.members[i], &self.members[j]).expect("same dimension")
        })
    }

    /// The first `count` members as a new set (still orthonormal).
    pub fn truncated(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.len() {
            return Err(Error::InvalidParameter(format!(
                "cannot truncate a {}-target set to {count} targets",
                self.len()
            )));
        }
        let set = Self {
            dim: self.dim,
            members: self.members[..count].to_vec(),
            provenance: TargetProvenance::Truncated {
                base: Box::new(self.provenance.clone()),
                count,
            },
            sqrt_factors: OnceLock::new(),
        };
        if let Some(factors) = self.sqrt_factors.get() {
            let _ = set.sqrt_factors.set(factors[..count].to_vec());
        }
        Ok(set)
    }

    /// Appends `count` random Wishart targets (normalized `W/‖W‖` with
    /// `W ~ Wishart(I_p, p)`), re-orthonormalizing jointly against the
    /// existing members. Degenerate draws are resampled up to 10 times.
    pub fn extended_with_wishart(&self, count: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut members = self.members.clone();
        append_wishart_targets(&mut members, self.dim, count, rng)?;
        Ok(Self {
            dim: self.dim,
            members,
            provenance: TargetProvenance::Extended {
                base: Box::new(self.provenance.clone()),
                extra: count,
            },
            sqrt_factors: OnceLock::new(),
        })
    }

    /// Complex square-root factors of the members, computed once on first
    /// use and shared across calls (the fast projected-variance path).
    pub(crate) fn sqrt_factors(&self) -> Result<&[ComplexSqrtFactor]> {
        if let Some(factors) = self.sqrt_factors.get() {
            return Ok(factors);
        }
        let computed = self
            .members
            .iter()
            .map(complex_sqrt_factor)
            .collect::<Result<Vec<_>>>()?;
        Ok(self.sqrt_factors.get_or_init(|| computed))
    }
}

/// Block-identity target family: the first member is the full identity and
/// members `2..B` place an identity block on blocks `2..B`; the family is
/// then orthonormalized in construction order (identity first).
pub fn block_identity_targets(block_sizes: &[usize]) -> Result<TargetSet> {
    if block_sizes.is_empty() {
        return Err(Error::InvalidParameter(
            "block_sizes must be non-empty".into(),
        ));
    }
    if block_sizes.contains(&0) {
        return Err(Error::InvalidParameter(
            "block sizes must be positive".into(),
        ));
    }
    let dim: usize = block_sizes.iter().sum();
    let mut raw = Vec::with_capacity(block_sizes.len());
    raw.push(SymMatrix::identity(dim));
    let mut offset = block_sizes[0];
    for &size in &block_sizes[1..] {
        raw.push(block_indicator(dim, offset, size));
        offset += size;
    }
    TargetSet::orthonormalize(
        raw,
        TargetProvenance::BlockIdentity {
            block_sizes: block_sizes.to_vec(),
        },
    )
}

/// Disjoint block-identity family: one target per block, each the identity
/// on its block and zero elsewhere, normalized. The supports are disjoint so
/// the family is orthogonal by construction; no full-identity member.
pub fn disjoint_block_targets(block_sizes: &[usize]) -> Result<TargetSet> {
    if block_sizes.is_empty() {
        return Err(Error::InvalidParameter(
            "block_sizes must be non-empty".into(),
        ));
    }
    if block_sizes.contains(&0) {
        return Err(Error::InvalidParameter(
            "block sizes must be positive".into(),
        ));
    }
    let dim: usize = block_sizes.iter().sum();
    let mut members = Vec::with_capacity(block_sizes.len());
    let mut offset = 0;
    for &size in block_sizes {
        let scale = (dim as f64 / size as f64).sqrt();
        members.push(SymMatrix::from_fn(dim, |i, j| {
            if i == j && i >= offset && i < offset + size {
                scale
            } else {
                0.0
            }
        }));
        offset += size;
    }
    TargetSet::from_orthonormal(
        members,
        TargetProvenance::DisjointBlocks {
            block_sizes: block_sizes.to_vec(),
        },
    )
}

/// Applies the row/column permutation `σ(j) = (j + shift) mod p` to every
/// member: `(T')_{σ(k),σ(l)} = T_{k,l}`. A permutation is an isometry of the
/// scaled inner product, so the output stays orthonormal.
pub fn permuted_targets(base: &TargetSet, shift: usize) -> TargetSet {
    let p = base.dim();
    let sigma: Vec<usize> = (0..p).map(|j| (j + shift) % p).collect();
    let members = base
        .members()
        .iter()
        .map(|t| {
            let mut data = DMatrix::zeros(p, p);
            for k in 0..p {
                for l in 0..p {
                    data[(sigma[k], sigma[l])] = t.get(k, l);
                }
            }
            SymMatrix::from_symmetrized(data)
        })
        .collect();
    TargetSet {
        dim: p,
        members,
        provenance: TargetProvenance::Permuted {
            shift,
            base: Box::new(base.provenance().clone()),
        },
        sqrt_factors: OnceLock::new(),
    }
}

/// `count` random targets `W/‖W‖` with `W ~ Wishart(I_p, p)`, jointly
/// orthonormalized. Draws that fall into the span of the accepted members are
/// dropped and resampled, up to 10 retries each.
pub fn random_wishart_targets(p: usize, count: usize, rng: &mut impl Rng) -> Result<TargetSet> {
    if count == 0 {
        return Err(Error::InvalidParameter("count must be >= 1".into()));
    }
    let mut members = Vec::with_capacity(count);
    append_wishart_targets(&mut members, p, count, rng)?;
    Ok(TargetSet {
        dim: p,
        members,
        provenance: TargetProvenance::RandomWishart { count },
        sqrt_factors: OnceLock::new(),
    })
}

const WISHART_TARGET_RETRIES: usize = 10;

fn append_wishart_targets(
    members: &mut Vec<SymMatrix>,
    p: usize,
    count: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    let tol = Tolerances::default();
    let identity = SymMatrix::identity(p);
    for _ in 0..count {
        let mut appended = false;
        for _ in 0..WISHART_TARGET_RETRIES {
            let w = sample_wishart(&identity, p, rng)?;
            let norm = scaled_norm(&w);
            if norm == 0.0 {
                continue;
            }
            let normalized = SymMatrix::from_symmetrized(w.as_matrix() / norm);
            if let Some(next) = orthonormal_residual(members, &normalized, &tol)? {
                members.push(next);
                appended = true;
                break;
            }
        }
        if !appended {
            return Err(Error::DegenerateSample {
                retries: WISHART_TARGET_RETRIES,
            });
        }
    }
    Ok(())
}

/// One diagonal indicator target per distinct sector label (first-appearance
/// order): 1 on the indices carrying the label, 0 elsewhere, normalized.
/// The supports are disjoint so no re-orthogonalization is needed.
pub fn sector_targets<S: AsRef<str>>(labels: &[S]) -> Result<TargetSet> {
    if labels.is_empty() {
        return Err(Error::InvalidParameter("labels must be non-empty".into()));
    }
    let p = labels.len();
    let mut distinct: Vec<String> = Vec::new();
    for label in labels {
        let label = label.as_ref();
        if label.is_empty() {
            return Err(Error::InvalidParameter(
                "sector labels must be non-empty".into(),
            ));
        }
        if !distinct.iter().any(|l| l == label) {
            distinct.push(label.to_string());
        }
    }
    let members = distinct
        .iter()
        .map(|sector| {
            let count = labels.iter().filter(|l| l.as_ref() == sector).count();
            let scale = (p as f64 / count as f64).sqrt();
            SymMatrix::from_fn(p, |i, j| {
                if i == j && labels[i].as_ref() == sector {
                    scale
                } else {
                    0.0
                }
            })
        })
        .collect();
    TargetSet::from_orthonormal(members, TargetProvenance::Sectors { labels: distinct })
}

fn block_indicator(dim: usize, offset: usize, size: usize) -> SymMatrix {
    SymMatrix::from_fn(dim, |i, j| {
        if i == j && i >= offset && i < offset + size {
            1.0
        } else {
            0.0
        }
    })
}
