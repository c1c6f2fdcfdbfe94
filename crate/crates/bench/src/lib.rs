//! Shared fixtures for the criterion benchmarks.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use mtse_core::estimators::ObservationMatrix;
use mtse_core::matrix::SymMatrix;
use mtse_core::targets::{TargetSet, block_identity_targets};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(p: usize, n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(p, n, |_, _| rng.sample(StandardNormal))
}

/// Random full-rank symmetric PSD matrix with unit-scale spectrum.
pub fn random_psd(p: usize, rng: &mut impl Rng) -> SymMatrix {
    let g = normal_matrix(p, p + 5, rng);
    SymMatrix::new(&g * g.transpose() / (p + 5) as f64).unwrap()
}

/// Random symmetric indefinite matrix.
pub fn random_indefinite(p: usize, rng: &mut impl Rng) -> SymMatrix {
    SymMatrix::from_fn(p, |_, _| rng.random_range(-1.0..1.0))
}

/// The block geometry of the simulation studies: ten 5x5 blocks on a 50-dim
/// space, identity first.
pub fn paper_targets() -> TargetSet {
    block_identity_targets(&[5; 10]).unwrap()
}

/// Known-zero-mean observations at the study scale.
pub fn paper_observations(seed: u64) -> ObservationMatrix {
    let mut rng = rng(seed);
    ObservationMatrix::known_zero_mean(normal_matrix(50, 25, &mut rng)).unwrap()
}
