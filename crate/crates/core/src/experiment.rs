//! Monte Carlo trials, aggregation, parameter scans and the comparison
//! against replica predictions.
//!
//! Every random quantity of trial `t` is drawn from a seed derived from
//! `(base_seed, domain, t)`, so an experiment is a pure function of its
//! [`TrialConfig`] regardless of thread count or completion order.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{
    check_asset_specs, check_factor_spec, sample_ensemble, sample_factors, AssetEnsemble,
    DistributionSpec, EnsembleAverages, EnsembleMoments, FactorSeries,
};
use crate::error::{Error, Result};
use crate::market_sim::{expected_wishart, generate_returns, wishart, NoiseFamily, ReturnMatrix, RiskMatrix};
use crate::replica::{check_alpha, predict, ReplicaPrediction};
use crate::rng::{derive_seed, DOMAIN_ENSEMBLE, DOMAIN_FACTORS, DOMAIN_NOISE, DOMAIN_SCAN};
use crate::solver::{minimize_expected_risk, minimize_risk, SolveReport};

/// Column order of [`AggregateResult::csv_row`].
pub const EXPERIMENT_CSV_HEADER: &str = "alpha,N,p,trials,eps_mean,eps_se,eps_replica,qw_mean,qw_se,qw_replica,eps_or_mean,eps_or_se,eps_or_replica,kappa_mean,kappa_theory,qw_or_replica,status";

const SHARED_ENSEMBLE_INDEX: u64 = u64::MAX;
const SE_FLOOR: f64 = 1e-12;

/// Where the asset ensemble of each trial comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentsMode {
    /// A fresh ensemble per trial; predictions use the pooled trial ensembles.
    #[default]
    RealizedPerTrial,
    /// One ensemble for all trials; only factors and residuals are resampled.
    SharedEnsemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha: f64,
    pub v_spec: DistributionSpec,
    pub b_spec: DistributionSpec,
    pub f_spec: DistributionSpec,
    #[serde(default)]
    pub noise_family: NoiseFamily,
    pub trials: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub moments_mode: MomentsMode,
}

impl TrialConfig {
    /// Number of periods, `round(alpha·N)` with halves rounded up.
    pub fn periods(&self) -> usize {
        (self.alpha * self.n as f64 + 0.5).floor() as usize
    }

    /// `p / N` after rounding; all predictions use this value.
    pub fn effective_alpha(&self) -> f64 {
        self.periods() as f64 / self.n as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidInput(format!("need N >= 2 assets, got {}", self.n)));
        }
        if self.trials == 0 {
            return Err(Error::InvalidInput("need at least one trial".into()));
        }
        check_asset_specs(&self.v_spec, &self.b_spec)?;
        check_factor_spec(&self.f_spec)?;
        check_alpha(self.alpha)?;
        if self.periods() <= self.n {
            return Err(Error::Regime { alpha: self.alpha });
        }
        Ok(())
    }

    fn ensemble_seed(&self, trial_index: usize) -> u64 {
        let index = match self.moments_mode {
            MomentsMode::RealizedPerTrial => trial_index as u64,
            MomentsMode::SharedEnsemble => SHARED_ENSEMBLE_INDEX,
        };
        derive_seed(self.base_seed, DOMAIN_ENSEMBLE, index)
    }
}

/// Per-trial statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    /// Minimal realized risk per asset.
    pub epsilon: f64,
    pub q_w: f64,
    /// Risk per asset of the expected-risk portfolio, `wᵀE[J]w / 2N`.
    pub epsilon_or: f64,
    pub q_w_or: f64,
    pub kappa: f64,
    /// Realized `F` of the trial's factor series.
    pub factor_strength: f64,
    pub averages: EnsembleAverages,
}

/// Everything sampled for one trial.
#[derive(Debug, Clone)]
pub struct TrialMarket {
    pub ensemble: AssetEnsemble,
    pub factors: FactorSeries,
    pub returns: ReturnMatrix,
}

pub fn sample_trial_market(config: &TrialConfig, trial_index: usize) -> Result<TrialMarket> {
    config.validate()?;
    if trial_index >= config.trials {
        return Err(Error::InvalidInput(format!(
            "trial index {trial_index} out of range for {} trials",
            config.trials
        )));
    }
    let ensemble = sample_ensemble(&config.v_spec, &config.b_spec, config.n, config.ensemble_seed(trial_index))?;
    let factors = sample_factors(
        &config.f_spec,
        config.periods(),
        derive_seed(config.base_seed, DOMAIN_FACTORS, trial_index as u64),
    )?;
    let returns = generate_returns(
        &ensemble,
        &factors,
        derive_seed(config.base_seed, DOMAIN_NOISE, trial_index as u64),
        config.noise_family,
    );
    Ok(TrialMarket {
        ensemble,
        factors,
        returns,
    })
}

/// Realized and expected-risk solutions of one trial.
pub fn solve_trial_market(market: &TrialMarket, alpha: f64) -> Result<(RiskMatrix, SolveReport, SolveReport)> {
    let j = wishart(&market.returns);
    let realized = minimize_risk(&j)?;
    let ej = expected_wishart(&market.ensemble, market.factors.strength(), alpha)?;
    let expected = minimize_expected_risk(&ej)?;
    Ok((j, realized, expected))
}

/// Runs trial `trial_index`. Failures carry the trial index.
pub fn run_trial(config: &TrialConfig, trial_index: usize) -> Result<TrialRecord> {
    config.validate()?;
    let attach = |source: Error| Error::TrialFailed {
        index: trial_index,
        partial: Vec::new(),
        source: Box::new(source),
    };
    let market = sample_trial_market(config, trial_index).map_err(attach)?;
    let (_, realized, expected) = solve_trial_market(&market, config.effective_alpha()).map_err(attach)?;
    Ok(TrialRecord {
        trial_index,
        epsilon: realized.epsilon,
        q_w: realized.q_w,
        epsilon_or: expected.epsilon,
        q_w_or: expected.q_w,
        kappa: expected.epsilon / realized.epsilon,
        factor_strength: market.factors.strength(),
        averages: EnsembleAverages::from_ensemble(&market.ensemble),
    })
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub se: f64,
}

impl Summary {
    /// Requires at least two values.
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 values for a standard error, got {}",
                values.len()
            )));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let ss: f64 = values.iter().map(|x| (x - mean) * (x - mean)).sum();
        Ok(Summary {
            mean,
            se: (ss / (n - 1.0) / n).sqrt(),
        })
    }
}

/// Compared quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Quantity {
    #[serde(rename = "epsilon")]
    Epsilon,
    #[serde(rename = "q_w")]
    Qw,
    #[serde(rename = "epsilon_or")]
    EpsilonOr,
    #[serde(rename = "q_w_or")]
    QwOr,
    #[serde(rename = "kappa")]
    Kappa,
}

impl Quantity {
    pub const ALL: [Quantity; 5] = [
        Quantity::Epsilon,
        Quantity::Qw,
        Quantity::EpsilonOr,
        Quantity::QwOr,
        Quantity::Kappa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::Epsilon => "epsilon",
            Quantity::Qw => "q_w",
            Quantity::EpsilonOr => "epsilon_or",
            Quantity::QwOr => "q_w_or",
            Quantity::Kappa => "kappa",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub config: TrialConfig,
    #[serde(rename = "N")]
    pub n: usize,
    pub p: usize,
    /// Effective `p / N`.
    pub alpha: f64,
    pub trials: usize,
    pub epsilon: Summary,
    pub q_w: Summary,
    pub epsilon_or: Summary,
    pub q_w_or: Summary,
    pub kappa: Summary,
    /// Moments of the reference ensemble (pooled over trials, or shared).
    pub moments: EnsembleMoments,
    pub prediction: ReplicaPrediction,
    /// `(mean - prediction) / |prediction|` per quantity.
    pub relative_deviations: BTreeMap<Quantity, f64>,
}

impl AggregateResult {
    pub fn summary(&self, q: Quantity) -> Summary {
        match q {
            Quantity::Epsilon => self.epsilon,
            Quantity::Qw => self.q_w,
            Quantity::EpsilonOr => self.epsilon_or,
            Quantity::QwOr => self.q_w_or,
            Quantity::Kappa => self.kappa,
        }
    }

    pub fn predicted(&self, q: Quantity) -> f64 {
        match q {
            Quantity::Epsilon => self.prediction.epsilon,
            Quantity::Qw => self.prediction.q_w,
            Quantity::EpsilonOr => self.prediction.epsilon_or,
            Quantity::QwOr => self.prediction.q_w_or,
            Quantity::Kappa => self.prediction.kappa,
        }
    }

    pub fn csv_row(&self, status: &str) -> String {
        let fields = [
            self.alpha.to_string(),
            self.n.to_string(),
            self.p.to_string(),
            self.trials.to_string(),
            self.epsilon.mean.to_string(),
            self.epsilon.se.to_string(),
            self.prediction.epsilon.to_string(),
            self.q_w.mean.to_string(),
            self.q_w.se.to_string(),
            self.prediction.q_w.to_string(),
            self.epsilon_or.mean.to_string(),
            self.epsilon_or.se.to_string(),
            self.prediction.epsilon_or.to_string(),
            self.kappa.mean.to_string(),
            self.prediction.kappa.to_string(),
            self.prediction.q_w_or.to_string(),
            sanitize_status(status),
        ];
        fields.join(",")
    }
}

/// CSV row for a configuration whose experiment did not complete.
pub fn failed_csv_row(config: &TrialConfig, status: &str) -> String {
    let mut fields = vec![
        config.effective_alpha().to_string(),
        config.n.to_string(),
        config.periods().to_string(),
        config.trials.to_string(),
    ];
    fields.extend(std::iter::repeat_n(String::new(), 12));
    fields.push(sanitize_status(status));
    fields.join(",")
}

fn sanitize_status(status: &str) -> String {
    status.replace([',', '\n', '\r'], ";")
}

fn aggregate(config: &TrialConfig, records: &[TrialRecord], shared: Option<&AssetEnsemble>) -> Result<AggregateResult> {
    let column = |f: fn(&TrialRecord) -> f64| -> Result<Summary> {
        Summary::of(&records.iter().map(f).collect::<Vec<_>>())
    };
    let averages = match shared {
        Some(e) => EnsembleAverages::from_ensemble(e),
        None => EnsembleAverages::pooled(records.iter().map(|r| &r.averages))
            .ok_or_else(|| Error::InvalidInput("no trial records".into()))?,
    };
    let mean_f = records.iter().map(|r| r.factor_strength).sum::<f64>() / records.len() as f64;
    let moments = EnsembleMoments::from_averages(&averages, mean_f)?;
    let alpha = config.effective_alpha();
    let prediction = predict(&moments, alpha)?;
    let mut result = AggregateResult {
        config: config.clone(),
        n: config.n,
        p: config.periods(),
        alpha,
        trials: records.len(),
        epsilon: column(|r| r.epsilon)?,
        q_w: column(|r| r.q_w)?,
        epsilon_or: column(|r| r.epsilon_or)?,
        q_w_or: column(|r| r.q_w_or)?,
        kappa: column(|r| r.kappa)?,
        moments,
        prediction,
        relative_deviations: BTreeMap::new(),
    };
    for q in Quantity::ALL {
        let pred = result.predicted(q);
        let dev = (result.summary(q).mean - pred) / pred.abs();
        result.relative_deviations.insert(q, dev);
    }
    Ok(result)
}

/// Runs all trials (in parallel on the current rayon pool) and aggregates.
pub fn run_experiment(config: &TrialConfig) -> Result<AggregateResult> {
    config.validate()?;
    if config.trials < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 trials for standard errors, got {}",
            config.trials
        )));
    }
    let outcomes: Vec<Result<TrialRecord>> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, t))
        .collect();
    let mut records = Vec::with_capacity(outcomes.len());
    let mut failure = None;
    for outcome in outcomes {
        match outcome {
            Ok(r) => records.push(r),
            Err(e) if failure.is_none() => failure = Some(e),
            Err(_) => {}
        }
    }
    if let Some(err) = failure {
        return Err(match err {
            Error::TrialFailed { index, source, .. } => Error::TrialFailed {
                index,
                partial: records,
                source,
            },
            other => other,
        });
    }
    let shared = match config.moments_mode {
        MomentsMode::SharedEnsemble => Some(sample_ensemble(
            &config.v_spec,
            &config.b_spec,
            config.n,
            config.ensemble_seed(0),
        )?),
        MomentsMode::RealizedPerTrial => None,
    };
    aggregate(config, &records, shared.as_ref())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxis {
    Alpha,
    #[serde(rename = "N")]
    N,
    #[serde(rename = "F_scale")]
    FScale,
}

impl ScanAxis {
    fn tag(self) -> u64 {
        match self {
            ScanAxis::Alpha => 0,
            ScanAxis::N => 1,
            ScanAxis::FScale => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScanAxis::Alpha => "alpha",
            ScanAxis::N => "N",
            ScanAxis::FScale => "F_scale",
        }
    }
}

impl std::str::FromStr for ScanAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" => Ok(ScanAxis::Alpha),
            "N" | "n" => Ok(ScanAxis::N),
            "F_scale" | "f_scale" => Ok(ScanAxis::FScale),
            other => Err(Error::InvalidInput(format!(
                "unknown scan axis {other:?} (expected alpha, N or F_scale)"
            ))),
        }
    }
}

/// One grid point of a scan.
#[derive(Debug)]
pub struct ScanPoint {
    pub value: f64,
    /// The configuration actually run at this point.
    pub config: TrialConfig,
    pub outcome: Result<AggregateResult>,
}

/// Configuration of grid point `index` at `value`.
pub fn scan_point_config(config: &TrialConfig, axis: ScanAxis, index: usize, value: f64) -> Result<TrialConfig> {
    let mut point = config.clone();
    point.base_seed = derive_seed(config.base_seed, DOMAIN_SCAN + axis.tag(), index as u64);
    match axis {
        ScanAxis::Alpha => point.alpha = value,
        ScanAxis::N => {
            if !(value.is_finite() && value >= 2.0 && value.fract() == 0.0) {
                return Err(Error::InvalidInput(format!("N grid values must be integers >= 2, got {value}")));
            }
            point.n = value as usize;
        }
        ScanAxis::FScale => point.f_spec = config.f_spec.scaled(value)?,
    }
    Ok(point)
}

/// Runs one experiment per grid value. Per-point failures are recorded and
/// the scan continues.
pub fn scan(config: &TrialConfig, axis: ScanAxis, grid: &[f64]) -> Result<Vec<ScanPoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("scan grid is empty".into()));
    }
    Ok(grid
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            let point = scan_point_config(config, axis, i, value);
            match point {
                Ok(cfg) => ScanPoint {
                    value,
                    outcome: run_experiment(&cfg),
                    config: cfg,
                },
                Err(e) => ScanPoint {
                    value,
                    config: config.clone(),
                    outcome: Err(e),
                },
            }
        })
        .collect())
}

/// Relative tolerances per quantity plus a common z-score bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub relative: BTreeMap<Quantity, f64>,
    pub z_max: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let relative = BTreeMap::from([
            (Quantity::Epsilon, 0.03),
            (Quantity::Qw, 0.05),
            (Quantity::EpsilonOr, 0.02),
            (Quantity::QwOr, 0.05),
            (Quantity::Kappa, 0.05),
        ]);
        Tolerances { relative, z_max: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub quantity: Quantity,
    pub empirical: f64,
    pub se: f64,
    pub predicted: f64,
    /// Signed, `(empirical - predicted) / |predicted|`.
    pub relative_deviation: f64,
    pub z_score: f64,
    pub relative_tolerance: f64,
    pub z_max: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
}

impl ComparisonReport {
    pub fn failed(&self) -> Vec<Quantity> {
        self.verdicts.iter().filter(|v| !v.pass).map(|v| v.quantity).collect()
    }

    /// `ok`, or `fail:` followed by the failing quantity names.
    pub fn status(&self) -> String {
        if self.pass {
            "ok".into()
        } else {
            let names: Vec<&str> = self.failed().iter().map(|q| q.name()).collect();
            format!("fail:{}", names.join(";"))
        }
    }
}

/// Checks every quantity with a tolerance entry. A verdict passes when both
/// the relative deviation and the z-score are within bounds. The standard
/// error is floored at `1e-12·|prediction|`, so quantities that are exact per
/// trial (zero spread) pass on a roundoff-level match and fail otherwise.
pub fn compare(result: &AggregateResult, tolerances: &Tolerances) -> ComparisonReport {
    let verdicts: Vec<Verdict> = tolerances
        .relative
        .iter()
        .map(|(&quantity, &relative_tolerance)| {
            let summary = result.summary(quantity);
            let predicted = result.predicted(quantity);
            let diff = summary.mean - predicted;
            let relative_deviation = diff / predicted.abs();
            let se = summary.se.max(SE_FLOOR * predicted.abs());
            let z_score = if diff == 0.0 { 0.0 } else { diff.abs() / se };
            let pass = relative_deviation.abs() <= relative_tolerance && z_score <= tolerances.z_max;
            Verdict {
                quantity,
                empirical: summary.mean,
                se: summary.se,
                predicted,
                relative_deviation,
                z_score,
                relative_tolerance,
                z_max: tolerances.z_max,
                pass,
            }
        })
        .collect();
    let pass = verdicts.iter().all(|v| v.pass);
    ComparisonReport { verdicts, pass }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iid_config(n: usize, alpha: f64, trials: usize) -> TrialConfig {
        TrialConfig {
            n,
            alpha,
            v_spec: DistributionSpec::Constant { value: 1.0 },
            b_spec: DistributionSpec::Constant { value: 0.0 },
            f_spec: DistributionSpec::Gaussian { mean: 0.0, sd: 1.0 },
            noise_family: NoiseFamily::Gaussian,
            trials,
            base_seed: 2024,
            moments_mode: MomentsMode::RealizedPerTrial,
        }
    }

    fn factor_config(n: usize, alpha: f64, trials: usize) -> TrialConfig {
        TrialConfig {
            v_spec: DistributionSpec::TwoPoint {
                value_a: 1.0,
                value_b: 2.0,
                prob_a: 0.5,
            },
            b_spec: DistributionSpec::Gaussian { mean: 1.0, sd: 0.5 },
            ..iid_config(n, alpha, trials)
        }
    }

    #[test]
    fn trial_is_deterministic() {
        let cfg = factor_config(40, 2.0, 3);
        let a = run_trial(&cfg, 1).unwrap();
        let b = run_trial(&cfg, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.epsilon.to_bits(), b.epsilon.to_bits());
        assert_ne!(a, run_trial(&cfg, 2).unwrap());
    }

    #[test]
    fn iid_trial_risk_near_half() {
        let cfg = iid_config(500, 2.0, 4);
        for t in 0..4 {
            let r = run_trial(&cfg, t).unwrap();
            assert!(r.epsilon > 0.4 && r.epsilon < 0.6, "trial {t}: {}", r.epsilon);
            assert!((r.epsilon_or - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn periods_round_half_up() {
        let mut cfg = iid_config(10, 1.25, 2);
        assert_eq!(cfg.periods(), 13);
        cfg.alpha = 1.05;
        assert_eq!(cfg.periods(), 11);
        cfg.alpha = 1.04;
        // p = round(10.4) = 10 = N: outside the regime
        assert!(matches!(cfg.validate(), Err(Error::Regime { .. })));
        cfg.alpha = 0.9;
        assert!(matches!(cfg.validate(), Err(Error::Regime { .. })));
    }

    #[test]
    fn trial_index_out_of_range() {
        let cfg = iid_config(10, 2.0, 2);
        assert!(run_trial(&cfg, 2).is_err());
    }

    #[test]
    fn degenerate_aggregation() {
        let s = Summary::of(&[3.5, 3.5]).unwrap();
        assert_eq!(s, Summary { mean: 3.5, se: 0.0 });
        let s = Summary::of(&[1.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.se - 1.0).abs() < 1e-15);
        assert!(Summary::of(&[1.0]).is_err());
    }

    #[test]
    fn experiment_needs_two_trials() {
        assert!(run_experiment(&iid_config(10, 2.0, 1)).is_err());
    }

    #[test]
    fn experiment_is_reproducible_across_thread_counts() {
        let cfg = factor_config(30, 2.5, 12);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_experiment(&cfg)).unwrap();
        let b = four.install(|| run_experiment(&cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shared_ensemble_mode_reuses_assets() {
        let mut cfg = factor_config(20, 2.0, 3);
        cfg.moments_mode = MomentsMode::SharedEnsemble;
        let a = sample_trial_market(&cfg, 0).unwrap();
        let b = sample_trial_market(&cfg, 2).unwrap();
        assert_eq!(a.ensemble, b.ensemble);
        assert_ne!(a.factors, b.factors);
        let result = run_experiment(&cfg).unwrap();
        let direct = crate::ensemble::compute_moments(&a.ensemble, 1.0).unwrap();
        assert!((result.moments.inv_v - direct.inv_v).abs() < 1e-14);

        cfg.moments_mode = MomentsMode::RealizedPerTrial;
        let a = sample_trial_market(&cfg, 0).unwrap();
        let b = sample_trial_market(&cfg, 2).unwrap();
        assert_ne!(a.ensemble, b.ensemble);
    }

    #[test]
    fn trial_failure_carries_index_and_partial_results() {
        // no residuals and a zero factor: J = 0
        let mut cfg = iid_config(5, 2.0, 3);
        cfg.noise_family = NoiseFamily::None;
        cfg.f_spec = DistributionSpec::Constant { value: 0.0 };
        match run_experiment(&cfg) {
            Err(Error::TrialFailed { index, partial, source }) => {
                assert_eq!(index, 0);
                assert!(partial.is_empty());
                assert!(matches!(*source, Error::Degenerate(_)));
            }
            other => panic!("expected trial failure, got {other:?}"),
        }
    }

    fn fake_result(mean: f64, se: f64, predicted: f64) -> AggregateResult {
        let cfg = iid_config(10, 2.0, 2);
        let summary = Summary { mean, se };
        let moments = EnsembleMoments::from_averages(
            &EnsembleAverages {
                inv_v: 1.0,
                inv_v2: 1.0,
                inv_v_b: 0.0,
                inv_v_b2: 0.0,
                inv_v2_b: 0.0,
                inv_v2_b2: 0.0,
            },
            0.0,
        )
        .unwrap();
        let mut prediction = predict(&moments, 2.0).unwrap();
        prediction.epsilon = predicted;
        AggregateResult {
            config: cfg,
            n: 10,
            p: 20,
            alpha: 2.0,
            trials: 2,
            epsilon: summary,
            q_w: summary,
            epsilon_or: summary,
            q_w_or: summary,
            kappa: summary,
            moments,
            prediction,
            relative_deviations: BTreeMap::new(),
        }
    }

    #[test]
    fn compare_threshold_semantics() {
        let tol = Tolerances {
            relative: BTreeMap::from([(Quantity::Epsilon, 0.03)]),
            z_max: 4.0,
        };
        let exact = compare(&fake_result(0.5, 0.01, 0.5), &tol);
        assert!(exact.pass);
        assert_eq!(exact.verdicts[0].z_score, 0.0);

        let off = compare(&fake_result(0.55, 0.01, 0.5), &tol);
        assert!(!off.pass);
        assert!((off.verdicts[0].relative_deviation - 0.1).abs() < 1e-12);
        assert_eq!(off.failed(), vec![Quantity::Epsilon]);
        assert_eq!(off.status(), "fail:epsilon");

        let below = compare(&fake_result(0.45, 0.01, 0.5), &tol);
        assert!((below.verdicts[0].relative_deviation + 0.1).abs() < 1e-12);

        // within the relative band but many standard errors away
        let z_fail = compare(&fake_result(0.51, 0.001, 0.5), &tol);
        assert!(!z_fail.pass);
        assert!((z_fail.verdicts[0].z_score - 10.0).abs() < 1e-9);

        let zero_se = compare(&fake_result(0.5, 0.0, 0.5), &tol);
        assert!(zero_se.pass);
        let zero_se_off = compare(&fake_result(0.501, 0.0, 0.5), &tol);
        assert!(!zero_se_off.pass);
        let zero_se_roundoff = compare(&fake_result(0.5 + 1e-16, 0.0, 0.5), &tol);
        assert!(zero_se_roundoff.pass);
    }

    #[test]
    fn scan_alpha_concentration_decreases() {
        let cfg = iid_config(60, 2.0, 8);
        let points = scan(&cfg, ScanAxis::Alpha, &[1.5, 2.0, 3.0, 5.0]).unwrap();
        let qw: Vec<f64> = points.iter().map(|p| p.outcome.as_ref().unwrap().q_w.mean).collect();
        assert!(qw.windows(2).all(|w| w[1] < w[0]), "{qw:?}");
        let kappa: Vec<f64> = points
            .iter()
            .map(|p| p.outcome.as_ref().unwrap().prediction.kappa)
            .collect();
        for (k, a) in kappa.iter().zip([1.5, 2.0, 3.0, 5.0]) {
            assert!((k - a / (a - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn scan_zero_factor_scale_reduces_to_independent_case() {
        let cfg = factor_config(40, 3.0, 4);
        let points = scan(&cfg, ScanAxis::FScale, &[0.0, 1.0]).unwrap();
        let zero = points[0].outcome.as_ref().unwrap();
        assert_eq!(zero.moments.factor_strength, 0.0);
        let (eps, qw) = crate::replica::predict_independent(&zero.moments, zero.alpha).unwrap();
        assert_eq!(zero.prediction.epsilon, eps);
        assert_eq!(zero.prediction.q_w, qw);
        let one = points[1].outcome.as_ref().unwrap();
        assert!(one.prediction.epsilon > eps);
    }

    #[test]
    fn scan_records_point_failures_and_continues() {
        let cfg = iid_config(20, 2.0, 3);
        let points = scan(&cfg, ScanAxis::Alpha, &[0.5, 2.0]).unwrap();
        assert!(matches!(points[0].outcome, Err(Error::Regime { .. })));
        assert!(points[1].outcome.is_ok());
        assert!(scan(&cfg, ScanAxis::Alpha, &[]).is_err());
        let bad_n = scan(&cfg, ScanAxis::N, &[2.5]).unwrap();
        assert!(bad_n[0].outcome.is_err());
    }

    #[test]
    fn csv_rows_match_header() {
        let cfg = iid_config(20, 2.0, 3);
        let result = run_experiment(&cfg).unwrap();
        let columns = EXPERIMENT_CSV_HEADER.split(',').count();
        assert_eq!(result.csv_row("ok").split(',').count(), columns);
        assert_eq!(failed_csv_row(&cfg, "error: a, b").split(',').count(), columns);
        assert!(result.csv_row("ok").starts_with("2,20,40,3,"));
    }

    #[test]
    fn config_serialization_uses_capital_n() {
        let cfg = iid_config(20, 2.0, 3);
        let json = serde_json::to_value(&cfg).unwrap();
        assert_eq!(json["N"], 20);
        assert_eq!(json["moments_mode"], "realized_per_trial");
        let back: TrialConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, cfg);
    }
}
