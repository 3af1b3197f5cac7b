//! Distribution specs, asset ensembles, factor series and ensemble averages.
//!
//! Every closed form in [`crate::replica`] consumes a handful of scalar
//! averages of the per-asset residual variances `v_i` and factor loadings
//! `b_i`. They are computed here, either from realized arrays (the default:
//! this handles correlated or non-identically distributed loadings without
//! special cases) or from the analytic moments of the supported families.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, LogNormal, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// A one-dimensional distribution family with its parameters.
///
/// Serialized as a tagged record, e.g.
/// `{"family": "two_point", "value_a": 1.0, "value_b": 2.0, "prob_a": 0.5}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Constant {
        value: f64,
    },
    TwoPoint {
        value_a: f64,
        value_b: f64,
        prob_a: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Gaussian {
        mean: f64,
        sd: f64,
    },
    Lognormal {
        log_mean: f64,
        log_sd: f64,
    },
    /// Stationary Gaussian AR(1) process. Only meaningful for factor series.
    Ar1Gaussian {
        innovation_sd: f64,
        rho: f64,
    },
}

impl DistributionSpec {
    pub fn constant(value: f64) -> Result<Self> {
        let spec = DistributionSpec::Constant { value };
        spec.validate()?;
        Ok(spec)
    }

    pub fn two_point(value_a: f64, value_b: f64, prob_a: f64) -> Result<Self> {
        let spec = DistributionSpec::TwoPoint {
            value_a,
            value_b,
            prob_a,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let spec = DistributionSpec::Uniform { lo, hi };
        spec.validate()?;
        Ok(spec)
    }

    pub fn gaussian(mean: f64, sd: f64) -> Result<Self> {
        let spec = DistributionSpec::Gaussian { mean, sd };
        spec.validate()?;
        Ok(spec)
    }

    pub fn lognormal(log_mean: f64, log_sd: f64) -> Result<Self> {
        let spec = DistributionSpec::Lognormal { log_mean, log_sd };
        spec.validate()?;
        Ok(spec)
    }

    pub fn ar1_gaussian(innovation_sd: f64, rho: f64) -> Result<Self> {
        let spec = DistributionSpec::Ar1Gaussian { innovation_sd, rho };
        spec.validate()?;
        Ok(spec)
    }

    pub fn family(&self) -> &'static str {
        match self {
            DistributionSpec::Constant { .. } => "constant",
            DistributionSpec::TwoPoint { .. } => "two_point",
            DistributionSpec::Uniform { .. } => "uniform",
            DistributionSpec::Gaussian { .. } => "gaussian",
            DistributionSpec::Lognormal { .. } => "lognormal",
            DistributionSpec::Ar1Gaussian { .. } => "ar1_gaussian",
        }
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            DistributionSpec::Constant { value } => vec![value],
            DistributionSpec::TwoPoint {
                value_a,
                value_b,
                prob_a,
            } => vec![value_a, value_b, prob_a],
            DistributionSpec::Uniform { lo, hi } => vec![lo, hi],
            DistributionSpec::Gaussian { mean, sd } => vec![mean, sd],
            DistributionSpec::Lognormal { log_mean, log_sd } => vec![log_mean, log_sd],
            DistributionSpec::Ar1Gaussian { innovation_sd, rho } => vec![innovation_sd, rho],
        }
    }

    /// Parameter sanity, independent of which quantity the distribution describes.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSpec(format!("{}: {msg}", self.family())));
        if self.params().iter().any(|p| !p.is_finite()) {
            return bad("parameters must be finite");
        }
        match *self {
            DistributionSpec::Constant { .. } => Ok(()),
            DistributionSpec::TwoPoint { prob_a, .. } => {
                if (0.0..=1.0).contains(&prob_a) {
                    Ok(())
                } else {
                    bad("prob_a must lie in [0, 1]")
                }
            }
            DistributionSpec::Uniform { lo, hi } => {
                if lo < hi {
                    Ok(())
                } else {
                    bad("need lo < hi")
                }
            }
            DistributionSpec::Gaussian { sd, .. } => {
                if sd >= 0.0 {
                    Ok(())
                } else {
                    bad("sd must be nonnegative")
                }
            }
            DistributionSpec::Lognormal { log_sd, .. } => {
                if log_sd >= 0.0 {
                    Ok(())
                } else {
                    bad("log_sd must be nonnegative")
                }
            }
            DistributionSpec::Ar1Gaussian { innovation_sd, rho } => {
                if innovation_sd < 0.0 {
                    bad("innovation_sd must be nonnegative")
                } else if rho.abs() >= 1.0 {
                    bad("need |rho| < 1 for a stationary process")
                } else {
                    Ok(())
                }
            }
        }
    }

    /// True when every value the family can produce is strictly positive.
    pub fn has_positive_support(&self) -> bool {
        match *self {
            DistributionSpec::Constant { value } => value > 0.0,
            DistributionSpec::TwoPoint {
                value_a,
                value_b,
                prob_a,
            } => (prob_a == 0.0 || value_a > 0.0) && (prob_a == 1.0 || value_b > 0.0),
            DistributionSpec::Uniform { lo, .. } => lo > 0.0,
            DistributionSpec::Lognormal { .. } => true,
            DistributionSpec::Gaussian { .. } | DistributionSpec::Ar1Gaussian { .. } => false,
        }
    }

    /// Analytic mean (stationary mean for AR(1)).
    pub fn mean(&self) -> f64 {
        match *self {
            DistributionSpec::Constant { value } => value,
            DistributionSpec::TwoPoint {
                value_a,
                value_b,
                prob_a,
            } => prob_a * value_a + (1.0 - prob_a) * value_b,
            DistributionSpec::Uniform { lo, hi } => 0.5 * (lo + hi),
            DistributionSpec::Gaussian { mean, .. } => mean,
            DistributionSpec::Lognormal { log_mean, log_sd } => {
                (log_mean + 0.5 * log_sd * log_sd).exp()
            }
            DistributionSpec::Ar1Gaussian { .. } => 0.0,
        }
    }

    /// Analytic `E[X^2]` (stationary for AR(1)).
    pub fn second_moment(&self) -> f64 {
        match *self {
            DistributionSpec::Constant { value } => value * value,
            DistributionSpec::TwoPoint {
                value_a,
                value_b,
                prob_a,
            } => prob_a * value_a * value_a + (1.0 - prob_a) * value_b * value_b,
            DistributionSpec::Uniform { lo, hi } => (lo * lo + lo * hi + hi * hi) / 3.0,
            DistributionSpec::Gaussian { mean, sd } => mean * mean + sd * sd,
            DistributionSpec::Lognormal { log_mean, log_sd } => {
                (2.0 * log_mean + 2.0 * log_sd * log_sd).exp()
            }
            DistributionSpec::Ar1Gaussian { innovation_sd, rho } => {
                innovation_sd * innovation_sd / (1.0 - rho * rho)
            }
        }
    }

    /// Analytic `E[X^-k]` for `k` in {1, 2}; `None` without positive support.
    pub fn inverse_moment(&self, k: u32) -> Option<f64> {
        if !self.has_positive_support() || !(1..=2).contains(&k) {
            return None;
        }
        let kf = f64::from(k);
        let value = match *self {
            DistributionSpec::Constant { value } => value.powi(-(k as i32)),
            DistributionSpec::TwoPoint {
                value_a,
                value_b,
                prob_a,
            } => {
                let term = |x: f64, p: f64| if p == 0.0 { 0.0 } else { p * x.powi(-(k as i32)) };
                term(value_a, prob_a) + term(value_b, 1.0 - prob_a)
            }
            DistributionSpec::Uniform { lo, hi } => {
                if k == 1 {
                    (hi / lo).ln() / (hi - lo)
                } else {
                    1.0 / (lo * hi)
                }
            }
            DistributionSpec::Lognormal { log_mean, log_sd } => {
                (-kf * log_mean + 0.5 * kf * kf * log_sd * log_sd).exp()
            }
            DistributionSpec::Gaussian { .. } | DistributionSpec::Ar1Gaussian { .. } => {
                unreachable!()
            }
        };
        Some(value)
    }

    /// The distribution of `c * X` for `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "scale factor must be finite and nonnegative, got {c}"
            )));
        }
        if c == 0.0 {
            return Ok(DistributionSpec::Constant { value: 0.0 });
        }
        Ok(match *self {
            DistributionSpec::Constant { value } => DistributionSpec::Constant { value: c * value },
            DistributionSpec::TwoPoint {
                value_a,
                value_b,
                prob_a,
            } => DistributionSpec::TwoPoint {
                value_a: c * value_a,
                value_b: c * value_b,
                prob_a,
            },
            DistributionSpec::Uniform { lo, hi } => DistributionSpec::Uniform {
                lo: c * lo,
                hi: c * hi,
            },
            DistributionSpec::Gaussian { mean, sd } => DistributionSpec::Gaussian {
                mean: c * mean,
                sd: c * sd,
            },
            DistributionSpec::Lognormal { log_mean, log_sd } => DistributionSpec::Lognormal {
                log_mean: log_mean + c.ln(),
                log_sd,
            },
            DistributionSpec::Ar1Gaussian { innovation_sd, rho } => {
                DistributionSpec::Ar1Gaussian {
                    innovation_sd: c * innovation_sd,
                    rho,
                }
            }
        })
    }

    /// Whether the analytic mean is zero, as required of a factor series.
    pub fn has_zero_mean(&self) -> bool {
        let scale = self
            .params()
            .iter()
            .fold(0.0_f64, |acc, p| acc.max(p.abs()))
            .max(1.0);
        match self {
            DistributionSpec::Lognormal { .. } => false,
            _ => self.mean().abs() <= 1e-12 * scale,
        }
    }

    /// Draws `n` independent values. AR(1) is rejected: it has a time index.
    pub fn sample_iid<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<f64>> {
        self.validate()?;
        let values = match *self {
            DistributionSpec::Constant { value } => vec![value; n],
            DistributionSpec::TwoPoint {
                value_a,
                value_b,
                prob_a,
            } => {
                let coin = Bernoulli::new(prob_a).map_err(|e| Error::InvalidSpec(e.to_string()))?;
                (0..n)
                    .map(|_| if coin.sample(rng) { value_a } else { value_b })
                    .collect()
            }
            DistributionSpec::Uniform { lo, hi } => {
                let dist = Uniform::new(lo, hi).map_err(|e| Error::InvalidSpec(e.to_string()))?;
                dist.sample_iter(&mut *rng).take(n).collect()
            }
            DistributionSpec::Gaussian { mean, sd } => {
                let dist = Normal::new(mean, sd).map_err(|e| Error::InvalidSpec(e.to_string()))?;
                dist.sample_iter(&mut *rng).take(n).collect()
            }
            DistributionSpec::Lognormal { log_mean, log_sd } => {
                let dist = LogNormal::new(log_mean, log_sd)
                    .map_err(|e| Error::InvalidSpec(e.to_string()))?;
                dist.sample_iter(&mut *rng).take(n).collect()
            }
            DistributionSpec::Ar1Gaussian { .. } => {
                return Err(Error::InvalidSpec(
                    "ar1_gaussian is only accepted for factor series".into(),
                ))
            }
        };
        Ok(values)
    }
}

/// Realized per-asset residual variances `v` and factor loadings `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetEnsemble {
    v: Vec<f64>,
    b: Vec<f64>,
}

impl AssetEnsemble {
    pub fn new(v: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if v.len() != b.len() {
            return Err(Error::InvalidInput(format!(
                "ensemble arrays differ in length: v has {}, b has {}",
                v.len(),
                b.len()
            )));
        }
        if v.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "ensemble needs at least 2 assets, got {}",
                v.len()
            )));
        }
        if let Some(i) = v.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "residual variance v[{i}] = {} is not a finite positive number",
                v[i]
            )));
        }
        if let Some(i) = b.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("factor loading b[{i}] is not finite")));
        }
        Ok(AssetEnsemble { v, b })
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn variances(&self) -> &[f64] {
        &self.v
    }

    pub fn loadings(&self) -> &[f64] {
        &self.b
    }

    /// `(1/N) Σ g(b_i, v_i)`.
    pub fn average<G: Fn(f64, f64) -> f64>(&self, g: G) -> f64 {
        let sum: f64 = self.b.iter().zip(&self.v).map(|(&b, &v)| g(b, v)).sum();
        sum / self.len() as f64
    }

    /// The same ensemble with every loading set to zero.
    pub fn without_factor(&self) -> Self {
        AssetEnsemble {
            v: self.v.clone(),
            b: vec![0.0; self.b.len()],
        }
    }
}

/// Realized factor series with its mean square `F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSeries {
    f: Vec<f64>,
    mean_square: f64,
}

impl FactorSeries {
    pub fn new(f: Vec<f64>) -> Result<Self> {
        let mean_square = factor_strength(&f)?;
        Ok(FactorSeries { f, mean_square })
    }

    pub fn values(&self) -> &[f64] {
        &self.f
    }

    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    /// `F = (1/p) Σ f_μ²`.
    pub fn strength(&self) -> f64 {
        self.mean_square
    }
}

/// Mean square `(1/p) Σ f_μ²` of a factor series.
pub fn factor_strength(f: &[f64]) -> Result<f64> {
    if f.is_empty() {
        return Err(Error::InvalidInput("factor series is empty".into()));
    }
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("factor series has non-finite values".into()));
    }
    Ok(f.iter().map(|x| x * x).sum::<f64>() / f.len() as f64)
}

/// Samples `n` assets. `v` comes from stream 0 and `b` from stream 1 of
/// `seed`, so swapping the loading spec leaves the variances unchanged.
pub fn sample_ensemble(
    v_spec: &DistributionSpec,
    b_spec: &DistributionSpec,
    n: usize,
    seed: u64,
) -> Result<AssetEnsemble> {
    check_asset_specs(v_spec, b_spec)?;
    if n < 2 {
        return Err(Error::InvalidInput(format!("need N >= 2 assets, got {n}")));
    }
    let v = v_spec.sample_iid(&mut stream_rng(seed, 0), n)?;
    let b = b_spec.sample_iid(&mut stream_rng(seed, 1), n)?;
    AssetEnsemble::new(v, b)
}

pub(crate) fn check_asset_specs(v_spec: &DistributionSpec, b_spec: &DistributionSpec) -> Result<()> {
    v_spec.validate()?;
    b_spec.validate()?;
    for (role, spec) in [("v", v_spec), ("b", b_spec)] {
        if matches!(spec, DistributionSpec::Ar1Gaussian { .. }) {
            return Err(Error::InvalidSpec(format!(
                "{role}: ar1_gaussian is only accepted for factor series"
            )));
        }
    }
    if !v_spec.has_positive_support() {
        return Err(Error::InvalidSpec(format!(
            "v: {} has nonpositive support; residual variances must be strictly positive",
            v_spec.family()
        )));
    }
    Ok(())
}

pub(crate) fn check_factor_spec(f_spec: &DistributionSpec) -> Result<()> {
    f_spec.validate()?;
    if !f_spec.has_zero_mean() {
        return Err(Error::InvalidSpec(format!(
            "f: {} has nonzero mean {}; the factor series must be centered",
            f_spec.family(),
            f_spec.mean()
        )));
    }
    Ok(())
}

/// Samples a factor series of length `p`.
///
/// AR(1) series start from the stationary law `N(0, σ²/(1-ρ²))` so that the
/// realized `F` carries no burn-in bias.
pub fn sample_factors(f_spec: &DistributionSpec, p: usize, seed: u64) -> Result<FactorSeries> {
    check_factor_spec(f_spec)?;
    if p == 0 {
        return Err(Error::InvalidInput("need p >= 1 periods".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let f = match *f_spec {
        DistributionSpec::Ar1Gaussian { innovation_sd, rho } => {
            let innovation =
                Normal::new(0.0, innovation_sd).map_err(|e| Error::InvalidSpec(e.to_string()))?;
            let stationary_sd = innovation_sd / (1.0 - rho * rho).sqrt();
            let mut f = Vec::with_capacity(p);
            let mut prev = stationary_sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
            f.push(prev);
            for _ in 1..p {
                prev = rho * prev + innovation.sample(&mut rng);
                f.push(prev);
            }
            f
        }
        _ => f_spec.sample_iid(&mut rng, p)?,
    };
    FactorSeries::new(f)
}

/// Raw ensemble averages `⟨v⁻¹⟩, ⟨v⁻²⟩, ⟨v⁻¹b⟩, ⟨v⁻¹b²⟩, ⟨v⁻²b⟩, ⟨v⁻²b²⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAverages {
    pub inv_v: f64,
    pub inv_v2: f64,
    pub inv_v_b: f64,
    pub inv_v_b2: f64,
    pub inv_v2_b: f64,
    pub inv_v2_b2: f64,
}

impl EnsembleAverages {
    pub fn from_ensemble(ensemble: &AssetEnsemble) -> Self {
        EnsembleAverages {
            inv_v: ensemble.average(|_, v| 1.0 / v),
            inv_v2: ensemble.average(|_, v| 1.0 / (v * v)),
            inv_v_b: ensemble.average(|b, v| b / v),
            inv_v_b2: ensemble.average(|b, v| b * b / v),
            inv_v2_b: ensemble.average(|b, v| b / (v * v)),
            inv_v2_b2: ensemble.average(|b, v| b * b / (v * v)),
        }
    }

    /// Large-N limits for independent `v ~ v_spec` and `b ~ b_spec`.
    pub fn analytic(v_spec: &DistributionSpec, b_spec: &DistributionSpec) -> Result<Self> {
        check_asset_specs(v_spec, b_spec)?;
        let inv_v = v_spec.inverse_moment(1).expect("positive support checked");
        let inv_v2 = v_spec.inverse_moment(2).expect("positive support checked");
        let b1 = b_spec.mean();
        let b2 = b_spec.second_moment();
        Ok(EnsembleAverages {
            inv_v,
            inv_v2,
            inv_v_b: inv_v * b1,
            inv_v_b2: inv_v * b2,
            inv_v2_b: inv_v2 * b1,
            inv_v2_b2: inv_v2 * b2,
        })
    }

    /// Equal-weight pool of several averages (ensembles of equal size).
    pub fn pooled<'a, I: IntoIterator<Item = &'a EnsembleAverages>>(items: I) -> Option<Self> {
        let mut acc = [0.0; 6];
        let mut count = 0usize;
        for a in items {
            for (slot, x) in acc.iter_mut().zip(a.as_array()) {
                *slot += x;
            }
            count += 1;
        }
        if count == 0 {
            return None;
        }
        let n = count as f64;
        Some(EnsembleAverages {
            inv_v: acc[0] / n,
            inv_v2: acc[1] / n,
            inv_v_b: acc[2] / n,
            inv_v_b2: acc[3] / n,
            inv_v2_b: acc[4] / n,
            inv_v2_b2: acc[5] / n,
        })
    }

    fn as_array(&self) -> [f64; 6] {
        [
            self.inv_v,
            self.inv_v2,
            self.inv_v_b,
            self.inv_v_b2,
            self.inv_v2_b,
            self.inv_v2_b2,
        ]
    }
}

/// Scalar ensemble summary feeding every closed form.
///
/// `m1, var1` are the mean and variance of `b` under the weights `v⁻¹`;
/// `m2, var2` the same under `v⁻²`. `m = m1 / (1 + F·var1·⟨v⁻¹⟩)` and
/// `c = F²m²·var2·⟨v⁻²⟩ + (⟨v⁻²⟩/⟨v⁻¹⟩²)·(1 + F·m·(m1 - m2)·⟨v⁻¹⟩)²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMoments {
    pub inv_v: f64,
    pub inv_v2: f64,
    pub m1: f64,
    pub var1: f64,
    pub m2: f64,
    pub var2: f64,
    pub factor_strength: f64,
    pub m: f64,
    pub c: f64,
}

impl EnsembleMoments {
    /// Builds the summary from raw averages. Tilted variances are clamped at
    /// zero to absorb cancellation in `⟨v⁻¹b²⟩/⟨v⁻¹⟩ - m1²`.
    pub fn from_averages(averages: &EnsembleAverages, factor_strength: f64) -> Result<Self> {
        check_factor_strength(factor_strength)?;
        let a = averages;
        if !(a.inv_v > 0.0 && a.inv_v2 > 0.0) {
            return Err(Error::InvalidInput(
                "inverse-variance averages must be positive".into(),
            ));
        }
        let m1 = a.inv_v_b / a.inv_v;
        let var1 = (a.inv_v_b2 / a.inv_v - m1 * m1).max(0.0);
        let m2 = a.inv_v2_b / a.inv_v2;
        let var2 = (a.inv_v2_b2 / a.inv_v2 - m2 * m2).max(0.0);
        Ok(Self::assemble(a.inv_v, a.inv_v2, m1, var1, m2, var2, factor_strength))
    }

    fn assemble(
        inv_v: f64,
        inv_v2: f64,
        m1: f64,
        var1: f64,
        m2: f64,
        var2: f64,
        factor_strength: f64,
    ) -> Self {
        let f = factor_strength;
        let m = m1 / (1.0 + f * var1 * inv_v);
        let bracket = 1.0 + f * m * (m1 - m2) * inv_v;
        let c = f * f * m * m * var2 * inv_v2 + (inv_v2 / (inv_v * inv_v)) * bracket * bracket;
        EnsembleMoments {
            inv_v,
            inv_v2,
            m1,
            var1,
            m2,
            var2,
            factor_strength,
            m,
            c,
        }
    }

    /// Same ensemble, different factor strength (recomputes `m` and `c`).
    pub fn with_factor_strength(&self, factor_strength: f64) -> Result<Self> {
        check_factor_strength(factor_strength)?;
        Ok(Self::assemble(
            self.inv_v,
            self.inv_v2,
            self.m1,
            self.var1,
            self.m2,
            self.var2,
            factor_strength,
        ))
    }
}

fn check_factor_strength(f: f64) -> Result<()> {
    if f.is_finite() && f >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "factor strength F must be finite and nonnegative, got {f}"
        )))
    }
}

/// Moments of a realized ensemble. The tilted variances use centered sums,
/// so they are nonnegative without clamping.
pub fn compute_moments(ensemble: &AssetEnsemble, factor_strength: f64) -> Result<EnsembleMoments> {
    check_factor_strength(factor_strength)?;
    let inv_v = ensemble.average(|_, v| 1.0 / v);
    let inv_v2 = ensemble.average(|_, v| 1.0 / (v * v));
    let m1 = ensemble.average(|b, v| b / v) / inv_v;
    let m2 = ensemble.average(|b, v| b / (v * v)) / inv_v2;
    let var1 = ensemble.average(|b, v| (b - m1) * (b - m1) / v) / inv_v;
    let var2 = ensemble.average(|b, v| (b - m2) * (b - m2) / (v * v)) / inv_v2;
    Ok(EnsembleMoments::assemble(
        inv_v,
        inv_v2,
        m1,
        var1,
        m2,
        var2,
        factor_strength,
    ))
}
