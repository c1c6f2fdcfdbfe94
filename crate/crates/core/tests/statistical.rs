//! Monte-Carlo behavior of the estimators at moderate scale: unbiasedness of
//! the sample covariance, the Ledoit-Wolf improvement over it, oracle
//! dominance over the bona fide estimator, and convergence of the bona fide
//! estimator to the oracle as dimension and sample size grow together.

use mtse_core::MeanMode;
use mtse_core::estimators::sample_covariance;
use mtse_core::matrix::SymMatrix;
use mtse_core::simulation::{
    ExperimentConfig, ExperimentMeanMode, SampleDistribution, SigmaSpec, Sweep, TargetPlan,
    run_experiment, sample_gaussian, sample_wishart,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn sample_covariance_is_unbiased_in_both_modes() {
    let (p, n) = (4, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let scale = SymMatrix::from_diagonal(&vec![1.0 / (p + 4) as f64; p]);
    let sigma = sample_wishart(&scale, p + 4, &mut rng).unwrap();
    let reps = 100_000;
    for unknown in [false, true] {
        let mut sums = nalgebra::DMatrix::<f64>::zeros(p, p);
        let mut sq = nalgebra::DMatrix::<f64>::zeros(p, p);
        for _ in 0..reps {
            let mut obs = sample_gaussian(&sigma, n, &mut rng).unwrap();
            if unknown {
                obs = obs.with_mean_mode(MeanMode::Unknown).unwrap();
            }
            let s = sample_covariance(&obs).unwrap();
            sums += s.as_matrix();
            sq += s.as_matrix().component_mul(s.as_matrix());
        }
        sums /= reps as f64;
        sq /= reps as f64;
        for i in 0..p {
            for j in 0..p {
                let var = (sq[(i, j)] - sums[(i, j)] * sums[(i, j)]).max(0.0);
                let se = (var / reps as f64).sqrt();
                assert!(
                    (sums[(i, j)] - sigma.get(i, j)).abs() <= 3.0 * se,
                    "biased entry ({i},{j}) in {} mode: {} vs {}",
                    if unknown { "unknown" } else { "known" },
                    sums[(i, j)],
                    sigma.get(i, j)
                );
            }
        }
    }
}

fn block_sigma_spec() -> SigmaSpec {
    SigmaSpec::BlockWishart {
        block_sizes: vec![5; 10],
        dof: 5,
        scale_factors: (1..=10).map(|i| ((11 - i) as f64).sqrt()).collect(),
    }
}

#[test]
fn ledoit_wolf_improves_on_sample_covariance_gaussian() {
    let config = ExperimentConfig {
        p: 50,
        n: 25,
        replications: 2000,
        distribution: SampleDistribution::Gaussian,
        sigma_spec: block_sigma_spec(),
        target_plan: TargetPlan::Aligned,
        sweep: Sweep::TargetCounts(vec![1]),
        seed: 0x4d54_5345,
        mean_mode: ExperimentMeanMode::KnownZero,
        redraw_sigma: true,
        track_min_eigenvalue: false,
    };
    let report = run_experiment(&config).unwrap();
    let lw = report.row("lw", 1).unwrap();
    let sample = report.row("sample", 1).unwrap();
    let se_prial = lw.std_error / sample.mean_loss;
    assert!(
        lw.prial > 2.0 * se_prial,
        "LW PRIAL {} not positive beyond noise (se {se_prial})",
        lw.prial
    );
}

#[test]
fn oracle_loss_never_exceeds_bona_fide_loss() {
    let config = ExperimentConfig {
        p: 50,
        n: 25,
        replications: 300,
        distribution: SampleDistribution::StudentT { nu: 9.0 },
        sigma_spec: block_sigma_spec(),
        target_plan: TargetPlan::Aligned,
        sweep: Sweep::TargetCounts((1..=10).collect()),
        seed: 0x4d54_5345,
        mean_mode: ExperimentMeanMode::KnownZero,
        redraw_sigma: true,
        track_min_eigenvalue: false,
    };
    let report = run_experiment(&config).unwrap();
    for k in 1..=10 {
        let oracle = report.row("oracle", k).unwrap();
        let bona = report.row("mtse", k).unwrap();
        assert!(
            oracle.mean_loss <= bona.mean_loss + bona.std_error,
            "oracle should dominate at k={k}: {} vs {}",
            oracle.mean_loss,
            bona.mean_loss
        );
    }
}

#[test]
fn bona_fide_converges_to_oracle_under_heavy_tails() {
    // p/n fixed at 1/2; five equal Wishart blocks; disjoint block targets.
    let sizes = vec![50, 100, 200, 400];
    let config = ExperimentConfig {
        p: 25,
        n: 50,
        replications: 500,
        distribution: SampleDistribution::StudentT { nu: 9.0 },
        sigma_spec: SigmaSpec::EqualBlockWishart { blocks: 5 },
        target_plan: TargetPlan::DisjointBlocks,
        sweep: Sweep::SampleSizes(sizes.clone()),
        seed: 0x4d54_5345,
        mean_mode: ExperimentMeanMode::KnownZero,
        redraw_sigma: true,
        track_min_eigenvalue: false,
    };
    let report = run_experiment(&config).unwrap();
    let means: Vec<f64> = sizes
        .iter()
        .map(|&n| report.row("mtse_to_oracle", n).unwrap().mean_loss)
        .collect();
    let inversions = means.windows(2).filter(|w| w[1] >= w[0]).count();
    assert!(
        inversions <= 1,
        "distance to oracle should decrease along n (allowing one inversion): {means:?}"
    );
    assert!(
        means[sizes.len() - 1] < means[0],
        "no overall decrease: {means:?}"
    );
}
