//! Monte-Carlo experiment harnesses: PRIAL studies over target counts and
//! heavy-tail convergence studies over sample sizes.
//!
//! Replications are embarrassingly parallel. Each replication draws from its
//! own counter-based RNG stream derived from the root seed, and results are
//! accumulated in replication order with pairwise summation, so reports are
//! bit-identical regardless of the number of worker threads.

mod samplers;

pub use samplers::{
    block_wishart_sigma, build_block_sigma, sample_gaussian, sample_multivariate_t, sample_wishart,
};

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{ObservationMatrix, mtse_from_sample, oracle_mtse, sample_covariance};
use crate::matrix::{SymMatrix, Tolerances, scaled_distance2};
use crate::targets::{TargetSet, block_identity_targets, disjoint_block_targets, permuted_targets};

/// Observation distribution of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleDistribution {
    /// Centered Gaussian with the drawn covariance.
    Gaussian,
    /// Centered multivariate t with `ν > 2` degrees of freedom and covariance
    /// exactly the drawn matrix.
    StudentT { nu: f64 },
}

/// How the population covariance is generated.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSpec {
    /// Block-diagonal Wishart draws with explicit per-block sizes and scale
    /// factors (all blocks share one degrees-of-freedom count).
    BlockWishart {
        block_sizes: Vec<usize>,
        dof: usize,
        scale_factors: Vec<f64>,
    },
    /// `blocks` equal blocks of size `p/blocks`, each Wishart with degrees of
    /// freedom equal to the block size and scale `I/dof`, so every block has
    /// identity mean and the spectrum stays bounded as the sweep dimension
    /// grows. Scales with the sweep dimension.
    EqualBlockWishart { blocks: usize },
    /// A fixed covariance used for every replication.
    Explicit(SymMatrix),
}

/// How the target family is built.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPlan {
    /// Identity plus per-block identities matching the sigma blocks,
    /// orthonormalized with the identity first.
    Aligned,
    /// The aligned family with rows and columns permuted by
    /// `σ(j) = (j + shift) mod p`.
    Misaligned { shift: usize },
    /// The aligned family extended with `extra` random Wishart targets.
    AlignedPlusRandom { extra: usize },
    /// One normalized identity block per sigma block, no leading identity.
    DisjointBlocks,
    /// A caller-supplied orthonormal family.
    Custom(TargetSet),
}

/// Sweep dimension of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    /// Evaluate the estimators with the first `k` targets, for each `k`.
    TargetCounts(Vec<usize>),
    /// Evaluate at each sample size `n`, holding `p/n` at the configured
    /// ratio.
    SampleSizes(Vec<usize>),
}

/// Mean handling of the simulated observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentMeanMode {
    /// Estimators receive the true (zero) mean.
    #[default]
    KnownZero,
    /// Estimators center empirically.
    Unknown,
}

fn default_true() -> bool {
    true
}

/// Default root seed used when a configuration omits one ("MTSE" in ASCII).
pub const DEFAULT_SEED: u64 = 0x4d54_5345;

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// Specification of one Monte-Carlo study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Base dimension.
    pub p: usize,
    /// Base sample size.
    pub n: usize,
    /// Number of replications per sweep point.
    pub replications: usize,
    /// Observation distribution.
    pub distribution: SampleDistribution,
    /// Population covariance generator.
    pub sigma_spec: SigmaSpec,
    /// Target family construction.
    pub target_plan: TargetPlan,
    /// Sweep dimension.
    pub sweep: Sweep,
    /// Root seed; every replication derives an independent stream from it.
    /// Defaults to [`DEFAULT_SEED`] when omitted in a config file.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Mean handling (known zero by default, matching the centered samplers).
    #[serde(default)]
    pub mean_mode: ExperimentMeanMode,
    /// Redraw the population covariance for every replication (default), or
    /// draw it once per sweep point and share it.
    #[serde(default = "default_true")]
    pub redraw_sigma: bool,
    /// Track the minimum eigenvalue over every estimate produced (costs one
    /// extra eigendecomposition per estimate).
    #[serde(default)]
    pub track_min_eigenvalue: bool,
}

/// One aggregated report line: an estimator series at a sweep point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRow {
    /// Series name: `sample`, `lw`, `mtse`, `oracle`, or `mtse_to_oracle`
    /// (the squared distance between the bona fide and oracle estimates).
    pub estimator: String,
    /// The sweep value: a target count `k` or a sample size `n`.
    pub sweep_value: usize,
    /// Mean of the per-replication squared scaled losses.
    pub mean_loss: f64,
    /// Percentage relative improvement in average loss versus the sample
    /// covariance at the same sweep point (0 for the sample covariance).
    pub prial: f64,
    /// Standard error of the mean loss: sample std / √replications.
    pub std_error: f64,
    /// Number of replications aggregated.
    pub replications: usize,
}

/// Aggregated study results with the configuration echoed for auditability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// The configuration that produced this report.
    pub config: ExperimentConfig,
    /// One row per estimator series and sweep point.
    pub rows: Vec<ReportRow>,
    /// Wall-clock duration of the run in seconds (JSON metadata only; the
    /// CSV serialization is a pure function of config and seed).
    pub wall_time_secs: f64,
    /// Minimum eigenvalue seen across every produced estimate, when tracked.
    pub min_eigenvalue: Option<f64>,
}

impl ExperimentReport {
    /// Row lookup by series name and sweep value.
    pub fn row(&self, estimator: &str, sweep_value: usize) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.sweep_value == sweep_value)
    }

    /// CSV serialization: `estimator,k_or_n,mean_loss,prial,stderr,replications`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("estimator,k_or_n,mean_loss,prial,stderr,replications\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.estimator,
                row.sweep_value,
                row.mean_loss,
                row.prial,
                row.std_error,
                row.replications
            ));
        }
        out
    }

    /// Pretty-printed JSON with the config echo and wall time.
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Percentage Relative Improvement in Average Loss:
/// `(mean(losses_S) - mean(losses_hat)) / mean(losses_S)`.
pub fn prial(losses_hat: &[f64], losses_s: &[f64]) -> Result<f64> {
    if losses_hat.is_empty() || losses_hat.len() != losses_s.len() {
        return Err(Error::DimensionMismatch {
            expected: losses_s.len().max(1),
            actual: losses_hat.len(),
        });
    }
    let mean_s = pairwise_sum(losses_s) / losses_s.len() as f64;
    if mean_s <= 0.0 {
        return Err(Error::ZeroDenominator {
            context: "PRIAL reference loss",
        });
    }
    let mean_hat = pairwise_sum(losses_hat) / losses_hat.len() as f64;
    Ok((mean_s - mean_hat) / mean_s)
}

/// Order-deterministic pairwise summation.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = pairwise_sum(values) / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let centered: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&centered) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

const TARGET_STREAM: u64 = u64::MAX;
const FIXED_SIGMA_STREAM: u64 = u64::MAX - 1;

fn stream_id(point_idx: usize, rep: usize) -> u64 {
    ((point_idx as u64) << 32) | rep as u64
}

struct DrawPoint {
    p: usize,
    n: usize,
    /// `(sweep_value, truncated target set)` per evaluation at this point.
    evals: Vec<(usize, TargetSet)>,
    identity_set: TargetSet,
    fixed_sigma: Option<SymMatrix>,
}

struct TaskOutcome {
    loss_sample: f64,
    loss_lw: f64,
    evals: Vec<EvalOutcome>,
    min_eig: f64,
}

struct EvalOutcome {
    loss_mtse: f64,
    loss_oracle: f64,
    dist_to_oracle: f64,
}

impl ExperimentConfig {
    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidParameter("replications must be >= 1".into()));
        }
        if let SampleDistribution::StudentT { nu } = self.distribution
            && nu <= 2.0
        {
            return Err(Error::InvalidParameter(format!(
                "Student t requires nu > 2 for a finite covariance, got {nu}"
            )));
        }
        match &self.sweep {
            Sweep::TargetCounts(ks) => {
                if ks.is_empty() || ks.contains(&0) {
                    return Err(Error::InvalidParameter(
                        "target_counts sweep must contain positive counts".into(),
                    ));
                }
            }
            Sweep::SampleSizes(sizes) => {
                if sizes.is_empty() {
                    return Err(Error::InvalidParameter(
                        "sample_sizes sweep must be non-empty".into(),
                    ));
                }
                for &size in sizes {
                    if !(self.p * size).is_multiple_of(self.n) {
                        return Err(Error::InvalidParameter(format!(
                            "sample size {size} does not preserve the p/n ratio {}/{}",
                            self.p, self.n
                        )));
                    }
                }
                let scalable = matches!(self.sigma_spec, SigmaSpec::EqualBlockWishart { .. });
                if !scalable && sizes.iter().any(|&s| s != self.n) {
                    return Err(Error::InvalidParameter(
                        "a sample-size sweep needs a dimension-scalable sigma spec \
                         (equal_block_wishart)"
                            .into(),
                    ));
                }
            }
        }
        if let SigmaSpec::BlockWishart {
            block_sizes,
            dof,
            scale_factors,
        } = &self.sigma_spec
        {
            if block_sizes.iter().sum::<usize>() != self.p {
                return Err(Error::InvalidParameter(format!(
                    "block sizes sum to {}, expected p = {}",
                    block_sizes.iter().sum::<usize>(),
                    self.p
                )));
            }
            if scale_factors.len() != block_sizes.len() {
                return Err(Error::InvalidParameter(
                    "one scale factor per block is required".into(),
                ));
            }
            if *dof == 0 {
                return Err(Error::InvalidParameter("Wishart dof must be >= 1".into()));
            }
        }
        let min_n = match self.mean_mode {
            ExperimentMeanMode::KnownZero => 2,
            ExperimentMeanMode::Unknown => 4,
        };
        let sizes: Vec<usize> = match &self.sweep {
            Sweep::TargetCounts(_) => vec![self.n],
            Sweep::SampleSizes(sizes) => sizes.clone(),
        };
        for size in sizes {
            if size < min_n {
                return Err(Error::InsufficientSamples {
                    required: min_n,
                    actual: size,
                });
            }
        }
        Ok(())
    }

    fn block_sizes_at(&self, p: usize) -> Result<Vec<usize>> {
        match &self.sigma_spec {
            SigmaSpec::BlockWishart { block_sizes, .. } => Ok(block_sizes.clone()),
            SigmaSpec::EqualBlockWishart { blocks } => {
                if *blocks == 0 || !p.is_multiple_of(*blocks) {
                    return Err(Error::InvalidParameter(format!(
                        "dimension {p} is not divisible into {blocks} equal blocks"
                    )));
                }
                Ok(vec![p / blocks; *blocks])
            }
            SigmaSpec::Explicit(_) => Err(Error::InvalidParameter(
                "the aligned/misaligned/block target plans need a block sigma spec".into(),
            )),
        }
    }

    fn build_target_set(&self, p: usize, rng: &mut ChaCha8Rng) -> Result<TargetSet> {
        match &self.target_plan {
            TargetPlan::Aligned => block_identity_targets(&self.block_sizes_at(p)?),
            TargetPlan::Misaligned { shift } => {
                let aligned = block_identity_targets(&self.block_sizes_at(p)?)?;
                Ok(permuted_targets(&aligned, *shift))
            }
            TargetPlan::AlignedPlusRandom { extra } => {
                let aligned = block_identity_targets(&self.block_sizes_at(p)?)?;
                aligned.extended_with_wishart(*extra, rng)
            }
            TargetPlan::DisjointBlocks => disjoint_block_targets(&self.block_sizes_at(p)?),
            TargetPlan::Custom(set) => {
                if set.dim() != p {
                    return Err(Error::DimensionMismatch {
                        expected: p,
                        actual: set.dim(),
                    });
                }
                Ok(set.clone())
            }
        }
    }

    fn draw_sigma(&self, p: usize, rng: &mut ChaCha8Rng) -> Result<SymMatrix> {
        match &self.sigma_spec {
            SigmaSpec::BlockWishart {
                block_sizes,
                dof,
                scale_factors,
            } => {
                let dofs = vec![*dof; block_sizes.len()];
                samplers::block_wishart_sigma(block_sizes, &dofs, scale_factors, rng)
            }
            SigmaSpec::EqualBlockWishart { blocks } => {
                let size = p / blocks;
                let sizes = vec![size; *blocks];
                let factors = vec![1.0 / size as f64; *blocks];
                samplers::block_wishart_sigma(&sizes, &sizes.clone(), &factors, rng)
            }
            SigmaSpec::Explicit(sigma) => {
                if sigma.dim() != p {
                    return Err(Error::DimensionMismatch {
                        expected: p,
                        actual: sigma.dim(),
                    });
                }
                Ok(sigma.clone())
            }
        }
    }
}

fn build_points(config: &ExperimentConfig) -> Result<Vec<DrawPoint>> {
    let mut target_rng = ChaCha8Rng::seed_from_u64(config.seed);
    target_rng.set_stream(TARGET_STREAM);
    let mut sigma_rng = ChaCha8Rng::seed_from_u64(config.seed);
    sigma_rng.set_stream(FIXED_SIGMA_STREAM);

    let dims: Vec<(usize, usize)> = match &config.sweep {
        Sweep::TargetCounts(_) => vec![(config.p, config.n)],
        Sweep::SampleSizes(sizes) => sizes
            .iter()
            .map(|&n_j| ((config.p * n_j) / config.n, n_j))
            .collect(),
    };

    let mut points = Vec::with_capacity(dims.len());
    for (p, n) in dims {
        let full_set = config.build_target_set(p, &mut target_rng)?;
        // Materialize the complex square roots up front so parallel workers
        // share them instead of racing to compute them.
        full_set.sqrt_factors()?;
        let evals = match &config.sweep {
            Sweep::TargetCounts(ks) => {
                let mut evals = Vec::with_capacity(ks.len());
                for &k in ks {
                    if k > full_set.len() {
                        return Err(Error::InvalidParameter(format!(
                            "sweep asks for {k} targets but the plan built only {}",
                            full_set.len()
                        )));
                    }
                    evals.push((k, full_set.truncated(k)?));
                }
                evals
            }
            Sweep::SampleSizes(_) => vec![(n, full_set.clone())],
        };
        let fixed_sigma = if config.redraw_sigma {
            None
        } else {
            Some(config.draw_sigma(p, &mut sigma_rng)?)
        };
        points.push(DrawPoint {
            p,
            n,
            evals,
            identity_set: TargetSet::identity(p),
            fixed_sigma,
        });
    }
    Ok(points)
}

fn run_task(
    config: &ExperimentConfig,
    point: &DrawPoint,
    point_idx: usize,
    rep: usize,
) -> Result<TaskOutcome> {
    let tol = Tolerances::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(stream_id(point_idx, rep));

    let sigma = match &point.fixed_sigma {
        Some(sigma) => sigma.clone(),
        None => config.draw_sigma(point.p, &mut rng)?,
    };
    let sigma_sqrt = samplers::psd_sqrt(&sigma)?;
    let data = match config.distribution {
        SampleDistribution::Gaussian => {
            samplers::sample_gaussian_columns(&sigma_sqrt, point.n, &mut rng)
        }
        SampleDistribution::StudentT { nu } => {
            let scaled = sigma_sqrt * ((nu - 2.0) / nu).sqrt();
            samplers::sample_t_columns(&scaled, nu, point.n, &mut rng)?
        }
    };
    let obs = match config.mean_mode {
        ExperimentMeanMode::KnownZero => ObservationMatrix::known_zero_mean(data)?,
        ExperimentMeanMode::Unknown => ObservationMatrix::unknown_mean(data)?,
    };

    let s = sample_covariance(&obs)?;
    let loss_sample = scaled_distance2(&s, &sigma)?;
    // The Ledoit-Wolf baseline is the single-identity-target special case.
    let lw = mtse_from_sample(&obs, &s, &point.identity_set, &tol)?;
    let loss_lw = scaled_distance2(&lw.estimate, &sigma)?;

    let mut min_eig = f64::INFINITY;
    if config.track_min_eigenvalue {
        min_eig = min_eig
            .min(s.min_eigenvalue())
            .min(lw.estimate.min_eigenvalue());
    }

    let mut evals = Vec::with_capacity(point.evals.len());
    for (_, target_set) in &point.evals {
        let bona = mtse_from_sample(&obs, &s, target_set, &tol)?;
        let oracle = oracle_mtse(&s, target_set, &sigma)?;
        if config.track_min_eigenvalue {
            min_eig = min_eig
                .min(bona.estimate.min_eigenvalue())
                .min(oracle.estimate.min_eigenvalue());
        }
        evals.push(EvalOutcome {
            loss_mtse: scaled_distance2(&bona.estimate, &sigma)?,
            loss_oracle: scaled_distance2(&oracle.estimate, &sigma)?,
            dist_to_oracle: scaled_distance2(&bona.estimate, &oracle.estimate)?,
        });
    }
    Ok(TaskOutcome {
        loss_sample,
        loss_lw,
        evals,
        min_eig,
    })
}

/// Runs a Monte-Carlo study: per replication, draws a population covariance
/// (redrawn or shared per the config), draws observations, evaluates the
/// sample covariance, the Ledoit-Wolf baseline, the bona fide MTSE, and the
/// oracle MTSE at each sweep point, and aggregates losses into PRIAL rows
/// with standard errors. Deterministic under a fixed seed regardless of the
/// worker count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let points = build_points(config)?;
    let reps = config.replications;

    let tasks = points.len() * reps;
    let outcomes: Vec<TaskOutcome> = (0..tasks)
        .into_par_iter()
        .map(|task| {
            let point_idx = task / reps;
            let rep = task % reps;
            run_task(config, &points[point_idx], point_idx, rep).map_err(|e| Error::Replication {
                index: rep,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut min_eig = f64::INFINITY;
    for (point_idx, point) in points.iter().enumerate() {
        let point_outcomes = &outcomes[point_idx * reps..(point_idx + 1) * reps];
        if config.track_min_eigenvalue {
            for outcome in point_outcomes {
                min_eig = min_eig.min(outcome.min_eig);
            }
        }
        let losses_sample: Vec<f64> = point_outcomes.iter().map(|o| o.loss_sample).collect();
        let losses_lw: Vec<f64> = point_outcomes.iter().map(|o| o.loss_lw).collect();
        for (eval_idx, (sweep_value, _)) in point.evals.iter().enumerate() {
            let losses_mtse: Vec<f64> = point_outcomes
                .iter()
                .map(|o| o.evals[eval_idx].loss_mtse)
                .collect();
            let losses_oracle: Vec<f64> = point_outcomes
                .iter()
                .map(|o| o.evals[eval_idx].loss_oracle)
                .collect();
            let dists: Vec<f64> = point_outcomes
                .iter()
                .map(|o| o.evals[eval_idx].dist_to_oracle)
                .collect();
            for (name, losses) in [
                ("sample", &losses_sample),
                ("lw", &losses_lw),
                ("mtse", &losses_mtse),
                ("oracle", &losses_oracle),
                ("mtse_to_oracle", &dists),
            ] {
                let (mean_loss, std_error) = mean_and_stderr(losses);
                rows.push(ReportRow {
                    estimator: name.to_string(),
                    sweep_value: *sweep_value,
                    mean_loss,
                    prial: prial(losses, &losses_sample)?,
                    std_error,
                    replications: reps,
                });
            }
        }
    }

    Ok(ExperimentReport {
        config: config.clone(),
        rows,
        wall_time_secs: start.elapsed().as_secs_f64(),
        min_eigenvalue: config.track_min_eigenvalue.then_some(min_eig),
    })
}
