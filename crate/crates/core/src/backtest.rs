//! Minimum-variance portfolio backtest on daily log-returns.
//!
//! At the beginning of each month the covariance is fitted on the trailing
//! `K` calendar months of daily returns, the closed-form minimum-variance
//! weights `w = Σ⁻¹1 / 1ᵀΣ⁻¹1` are held for the month (pseudo-inverse when
//! singular), and the within-month variance of the daily portfolio returns
//! is recorded. Lower cumulative variance means a better covariance
//! estimator. The whole pipeline is deterministic: no randomness anywhere.

use std::collections::HashMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{ObservationMatrix, mtse_from_sample, sample_covariance};
use crate::matrix::{SymMatrix, Tolerances, pseudo_inverse};
use crate::targets::{TargetSet, sector_targets};

/// An asset with its sector classification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetInfo {
    pub ticker: String,
    pub sector: String,
}

/// Dated panel of asset log-returns with sector labels.
///
/// Invariants: dates are strictly increasing and the return matrix holds no
/// missing values (assets with price gaps are dropped at ingestion).
#[derive(Debug, Clone)]
pub struct ReturnsPanel {
    dates: Vec<NaiveDate>,
    assets: Vec<AssetInfo>,
    /// `dates.len() × assets.len()` log-returns.
    returns: DMatrix<f64>,
    /// Assets dropped for lacking a sector label.
    pub dropped_missing_sector: usize,
    /// Assets dropped for price gaps inside the date range.
    pub dropped_gaps: usize,
}

impl ReturnsPanel {
    /// Builds a panel from parts, validating shapes and date ordering.
    pub fn from_parts(
        dates: Vec<NaiveDate>,
        assets: Vec<AssetInfo>,
        returns: DMatrix<f64>,
    ) -> Result<Self> {
        if returns.nrows() != dates.len() || returns.ncols() != assets.len() {
            return Err(Error::DimensionMismatch {
                expected: dates.len() * assets.len(),
                actual: returns.nrows() * returns.ncols(),
            });
        }
        for pair in dates.windows(2) {
            if pair[1] <= pair[0] {
                return Err(Error::InvalidParameter(format!(
                    "dates must be strictly increasing ({} then {})",
                    pair[0], pair[1]
                )));
            }
        }
        if returns.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "returns contain non-finite values".into(),
            ));
        }
        Ok(Self {
            dates,
            assets,
            returns,
            dropped_missing_sector: 0,
            dropped_gaps: 0,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[AssetInfo] {
        &self.assets
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    /// Sector label per asset, in asset order.
    pub fn sector_labels(&self) -> Vec<&str> {
        self.assets.iter().map(|a| a.sector.as_str()).collect()
    }

    /// A copy with every return multiplied by `factor` (scale studies).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut scaled = self.clone();
        scaled.returns *= factor;
        scaled
    }
}

/// Which covariance estimator drives the rebalancing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Plain sample covariance (pseudo-inverse handles `p > n`).
    Sample,
    /// Ledoit-Wolf: single identity target.
    Lw,
    /// Multi-target shrinkage with one target per GICS-style sector.
    MtseSectors,
}

impl EstimatorKind {
    /// Stable name used in report rows.
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Sample => "sample",
            EstimatorKind::Lw => "lw",
            EstimatorKind::MtseSectors => "mtse-sectors",
        }
    }
}

/// Backtest parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// Number of trailing calendar months used to fit the covariance.
    pub window_months: usize,
    /// Covariance estimator choice.
    pub estimator: EstimatorKind,
    /// Use the population (1/n) variance for the monthly figure instead of
    /// the unbiased (1/(n-1)) default.
    #[serde(default)]
    pub population_variance: bool,
    /// Optional first date considered (inclusive).
    #[serde(default)]
    pub start: Option<NaiveDate>,
    /// Optional last date considered (inclusive).
    #[serde(default)]
    pub end: Option<NaiveDate>,
}

impl BacktestConfig {
    pub fn new(window_months: usize, estimator: EstimatorKind) -> Self {
        Self {
            window_months,
            estimator,
            population_variance: false,
            start: None,
            end: None,
        }
    }
}

/// One evaluation month.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonthRecord {
    /// Month key, `YYYY-MM`.
    pub month: String,
    /// Within-month variance of the daily portfolio returns.
    pub variance: f64,
    /// Sum of the portfolio weights at the rebalance (1 up to roundoff).
    pub weight_sum: f64,
    /// Number of fitting observations used for this month.
    pub fit_days: usize,
}

/// Backtest output: per-month variances and their cumulative sum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestReport {
    pub estimator: String,
    pub window_months: usize,
    pub months: Vec<MonthRecord>,
    pub cumulative_variance: f64,
}

impl BacktestReport {
    /// Per-month CSV: `estimator,K,month,v_T`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("estimator,K,month,v_T\n");
        for record in &self.months {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.estimator, self.window_months, record.month, record.variance
            ));
        }
        out
    }

    /// Summary CSV: `estimator,K,cumulative_variance`.
    pub fn summary_csv_string(&self) -> String {
        format!(
            "estimator,K,cumulative_variance\n{},{},{}\n",
            self.estimator, self.window_months, self.cumulative_variance
        )
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Minimum-variance weights `w = A⁺·1 / (1ᵀ·A⁺·1)`; the pseudo-inverse makes
/// singular estimates usable. Weights may be negative (no long-only
/// constraint) and sum to 1.
pub fn gmv_weights(sigma_hat: &SymMatrix) -> Result<DVector<f64>> {
    let pinv = pseudo_inverse(sigma_hat)?;
    let ones = DVector::from_element(sigma_hat.dim(), 1.0);
    let numerator = pinv.as_matrix() * &ones;
    let denominator = numerator.sum();
    if denominator == 0.0 || !denominator.is_finite() {
        return Err(Error::ZeroDenominator {
            context: "GMV weight normalization (1ᵀΣ⁺1)",
        });
    }
    Ok(numerator / denominator)
}

/// Ingests a close-price CSV (`date,<ticker>,...` with ISO-8601 dates) and a
/// sector CSV (`ticker,sector`) into a log-returns panel. Assets missing a
/// sector label or with price gaps in the range are dropped and counted;
/// malformed rows, non-positive prices, and unordered dates are errors
/// carrying the offending row number.
pub fn ingest_prices(prices_path: &Path, sectors_path: &Path) -> Result<ReturnsPanel> {
    let sectors = read_sector_map(sectors_path)?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(prices_path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || headers.get(0).map(str::trim) != Some("date") {
        return Err(Error::Parse {
            row: 1,
            message: "price CSV must start with a 'date' header column".into(),
        });
    }
    let tickers: Vec<String> = headers
        .iter()
        .skip(1)
        .map(|h| h.trim().to_string())
        .collect();
    if tickers.is_empty() {
        return Err(Error::Parse {
            row: 1,
            message: "price CSV has no asset columns".into(),
        });
    }

    let mut dates: Vec<NaiveDate> = Vec::new();
    // One price series per asset; None marks a gap.
    let mut prices: Vec<Vec<Option<f64>>> = vec![Vec::new(); tickers.len()];
    for (idx, record) in reader.records().enumerate() {
        let row = idx + 2; // 1-based, after the header
        let record = record?;
        if record.len() != tickers.len() + 1 {
            return Err(Error::Parse {
                row,
                message: format!(
                    "expected {} fields, found {}",
                    tickers.len() + 1,
                    record.len()
                ),
            });
        }
        let date = NaiveDate::parse_from_str(record.get(0).unwrap_or("").trim(), "%Y-%m-%d")
            .map_err(|e| Error::Parse {
                row,
                message: format!("bad date: {e}"),
            })?;
        if let Some(last) = dates.last()
            && date <= *last
        {
            return Err(Error::Parse {
                row,
                message: format!("dates must be strictly increasing ({last} then {date})"),
            });
        }
        dates.push(date);
        for (a, cell) in record.iter().skip(1).enumerate() {
            let cell = cell.trim();
            if cell.is_empty()
                || cell.eq_ignore_ascii_case("na")
                || cell.eq_ignore_ascii_case("nan")
            {
                prices[a].push(None);
                continue;
            }
            let value: f64 = cell.parse().map_err(|e| Error::Parse {
                row,
                message: format!("bad price for {}: {e}", tickers[a]),
            })?;
            if value <= 0.0 {
                return Err(Error::Parse {
                    row,
                    message: format!("non-positive price {value} for {}", tickers[a]),
                });
            }
            prices[a].push(Some(value));
        }
    }
    if dates.len() < 2 {
        return Err(Error::InvalidParameter(
            "price history needs at least two days to form returns".into(),
        ));
    }

    let mut kept: Vec<(usize, AssetInfo)> = Vec::new();
    let mut dropped_missing_sector = 0;
    let mut dropped_gaps = 0;
    for (a, ticker) in tickers.iter().enumerate() {
        let Some(sector) = sectors.get(ticker) else {
            dropped_missing_sector += 1;
            continue;
        };
        if prices[a].iter().any(Option::is_none) {
            dropped_gaps += 1;
            continue;
        }
        kept.push((
            a,
            AssetInfo {
                ticker: ticker.clone(),
                sector: sector.clone(),
            },
        ));
    }
    if kept.is_empty() {
        return Err(Error::InvalidParameter(
            "no asset survived ingestion (sectors or gaps)".into(),
        ));
    }

    let n_days = dates.len() - 1;
    let mut returns = DMatrix::zeros(n_days, kept.len());
    for (col, (a, _)) in kept.iter().enumerate() {
        for t in 0..n_days {
            let today = prices[*a][t + 1].expect("gap-free by filter");
            let yesterday = prices[*a][t].expect("gap-free by filter");
            returns[(t, col)] = today.ln() - yesterday.ln();
        }
    }

    let mut panel = ReturnsPanel::from_parts(
        dates[1..].to_vec(),
        kept.into_iter().map(|(_, info)| info).collect(),
        returns,
    )?;
    panel.dropped_missing_sector = dropped_missing_sector;
    panel.dropped_gaps = dropped_gaps;
    Ok(panel)
}

fn read_sector_map(path: &Path) -> Result<HashMap<String, String>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers = reader.headers()?;
    if headers.len() < 2 {
        return Err(Error::Parse {
            row: 1,
            message: "sector CSV needs 'ticker,sector' columns".into(),
        });
    }
    let mut map = HashMap::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = idx + 2;
        let ticker = record.get(0).map(str::trim).unwrap_or("");
        let sector = record.get(1).map(str::trim).unwrap_or("");
        if ticker.is_empty() || sector.is_empty() {
            return Err(Error::Parse {
                row,
                message: "empty ticker or sector".into(),
            });
        }
        map.insert(ticker.to_string(), sector.to_string());
    }
    Ok(map)
}

fn month_key(date: &NaiveDate) -> (i32, u32) {
    (date.year(), date.month())
}

fn month_index(key: (i32, u32)) -> i64 {
    key.0 as i64 * 12 + (key.1 as i64 - 1)
}

fn format_month(key: (i32, u32)) -> String {
    format!("{:04}-{:02}", key.0, key.1)
}

/// Runs the monthly-rebalanced minimum-variance backtest.
///
/// Evaluation months are the panel's calendar months preceded by a full
/// `window_months` of history; fitting uses the unknown-mean estimators on
/// the trailing window's daily rows.
pub fn run_backtest(panel: &ReturnsPanel, config: &BacktestConfig) -> Result<BacktestReport> {
    if config.window_months == 0 {
        return Err(Error::InvalidParameter("window_months must be >= 1".into()));
    }
    let in_range =
        |d: &NaiveDate| config.start.is_none_or(|s| *d >= s) && config.end.is_none_or(|e| *d <= e);
    let rows: Vec<usize> = (0..panel.dates().len())
        .filter(|&t| in_range(&panel.dates()[t]))
        .collect();
    if rows.is_empty() {
        return Err(Error::InvalidParameter(
            "no rows inside the configured date range".into(),
        ));
    }

    let mut months: Vec<(i32, u32)> = Vec::new();
    let mut rows_by_month: HashMap<(i32, u32), Vec<usize>> = HashMap::new();
    for &t in &rows {
        let key = month_key(&panel.dates()[t]);
        if months.last() != Some(&key) {
            months.push(key);
        }
        rows_by_month.entry(key).or_default().push(t);
    }
    if months.len() < config.window_months + 1 {
        return Err(Error::InvalidParameter(format!(
            "panel spans {} months; need at least window_months + 1 = {}",
            months.len(),
            config.window_months + 1
        )));
    }

    // Sector targets are fixed for the whole backtest: the asset universe
    // does not change across months.
    let targets: Option<TargetSet> = match config.estimator {
        EstimatorKind::MtseSectors => Some(sector_targets(&panel.sector_labels())?),
        _ => None,
    };
    let tol = Tolerances::default();
    let identity_set = TargetSet::identity(panel.assets().len());

    let mut records = Vec::new();
    for &eval_key in &months[config.window_months..] {
        let eval_idx = month_index(eval_key);
        // Trailing K calendar months: indexes eval-K .. eval-1.
        let fit_rows: Vec<usize> = rows
            .iter()
            .copied()
            .filter(|&t| {
                let idx = month_index(month_key(&panel.dates()[t]));
                idx >= eval_idx - config.window_months as i64 && idx < eval_idx
            })
            .collect();
        let required = match config.estimator {
            EstimatorKind::Sample => 2,
            _ => 4,
        };
        if fit_rows.len() < required {
            return Err(Error::InsufficientSamples {
                required,
                actual: fit_rows.len(),
            });
        }

        let p = panel.assets().len();
        let mut window = DMatrix::zeros(p, fit_rows.len());
        for (k, &t) in fit_rows.iter().enumerate() {
            for a in 0..p {
                window[(a, k)] = panel.returns()[(t, a)];
            }
        }
        let obs = ObservationMatrix::unknown_mean(window)?;
        let s = sample_covariance(&obs)?;
        let sigma_hat = match (&config.estimator, &targets) {
            (EstimatorKind::Sample, _) => s,
            (EstimatorKind::Lw, _) => mtse_from_sample(&obs, &s, &identity_set, &tol)?.estimate,
            (EstimatorKind::MtseSectors, Some(t)) => mtse_from_sample(&obs, &s, t, &tol)?.estimate,
            (EstimatorKind::MtseSectors, None) => unreachable!("targets built above"),
        };
        let weights = gmv_weights(&sigma_hat)?;
        let weight_sum = weights.sum();

        let month_rows = &rows_by_month[&eval_key];
        if month_rows.len() < 2 {
            return Err(Error::InsufficientSamples {
                required: 2,
                actual: month_rows.len(),
            });
        }
        let daily: Vec<f64> = month_rows
            .iter()
            .map(|&t| {
                (0..p)
                    .map(|a| weights[a] * panel.returns()[(t, a)])
                    .sum::<f64>()
            })
            .collect();
        let mean = daily.iter().sum::<f64>() / daily.len() as f64;
        let ss: f64 = daily.iter().map(|r| (r - mean) * (r - mean)).sum();
        let variance = if config.population_variance {
            ss / daily.len() as f64
        } else {
            ss / (daily.len() - 1) as f64
        };
        records.push(MonthRecord {
            month: format_month(eval_key),
            variance,
            weight_sum,
            fit_days: fit_rows.len(),
        });
    }

    let cumulative_variance = records.iter().map(|r| r.variance).sum();
    Ok(BacktestReport {
        estimator: config.estimator.name().to_string(),
        window_months: config.window_months,
        months: records,
        cumulative_variance,
    })
}
