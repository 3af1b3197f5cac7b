use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use minrisk::{DistributionSpec, MomentsMode, NoiseFamily, Quantity, ScanAxis, Tolerances, TrialConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Which moments `predict` evaluates the replica formulas at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMoments {
    /// Population moments of `v_spec`, `b_spec` and `F = E[f²]`.
    #[default]
    Analytic,
    /// Moments of trial 0's sampled ensemble and factor series.
    Realized,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    #[serde(default)]
    pub relative: BTreeMap<Quantity, f64>,
    #[serde(default)]
    pub z_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSettings {
    pub axis: ScanAxis,
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationaritySettings {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_gradient_tolerance")]
    pub gradient_tolerance: f64,
    #[serde(default = "default_gap_tolerance")]
    pub gap_tolerance: f64,
}

fn default_beta() -> f64 {
    1e3
}

fn default_gradient_tolerance() -> f64 {
    1e-6
}

fn default_gap_tolerance() -> f64 {
    0.01
}

impl Default for StationaritySettings {
    fn default() -> Self {
        StationaritySettings {
            beta: default_beta(),
            gradient_tolerance: default_gradient_tolerance(),
            gap_tolerance: default_gap_tolerance(),
        }
    }
}

/// The JSON config document. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
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

    #[serde(default)]
    pub format: OutputFormat,
    /// Main payload destination; standard output when absent.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// JSON summary with the full config echo (experiment and scan).
    #[serde(default)]
    pub summary: Option<PathBuf>,
    /// Directory for trial 0's binary X and J dumps and its portfolio CSV.
    #[serde(default)]
    pub dump_dir: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
    #[serde(default)]
    pub prediction_moments: PredictionMoments,
    #[serde(default)]
    pub scan: Option<ScanSettings>,
    #[serde(default)]
    pub stationarity: StationaritySettings,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("{e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn trial_config(&self) -> TrialConfig {
        TrialConfig {
            n: self.n,
            alpha: self.alpha,
            v_spec: self.v_spec,
            b_spec: self.b_spec,
            f_spec: self.f_spec,
            noise_family: self.noise_family,
            trials: self.trials,
            base_seed: self.base_seed,
            moments_mode: self.moments_mode,
        }
    }

    pub fn tolerances(&self) -> Result<Tolerances, CliError> {
        let mut tol = Tolerances::default();
        for (&q, &value) in &self.tolerances.relative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(CliError::Config(format!(
                    "tolerances.relative.{}: must be a finite non-negative number, got {value}",
                    q.name()
                )));
            }
            tol.relative.insert(q, value);
        }
        if let Some(z) = self.tolerances.z_max {
            if !(z > 0.0) {
                return Err(CliError::Config(format!("tolerances.z_max: must be positive, got {z}")));
            }
            tol.z_max = z;
        }
        Ok(tol)
    }

    /// Fails unless every configured output file can be opened for writing.
    pub fn check_paths(&self) -> Result<(), CliError> {
        for (key, path) in [("output", &self.output), ("summary", &self.summary)] {
            if let Some(path) = path {
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| CliError::Config(format!("{key}: {} is not writable: {e}", path.display())))?;
            }
        }
        if let Some(dir) = &self.dump_dir {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::Config(format!("dump_dir: cannot create {}: {e}", dir.display())))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "N": 10, "alpha": 2.0,
        "v_spec": {"family": "constant", "value": 1.0},
        "b_spec": {"family": "constant", "value": 0.0},
        "f_spec": {"family": "gaussian", "mean": 0.0, "sd": 1.0},
        "trials": 4, "base_seed": 7
    }"#;

    #[test]
    fn defaults_fill_optional_keys() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.format, OutputFormat::Csv);
        assert_eq!(c.noise_family, NoiseFamily::Gaussian);
        assert_eq!(c.prediction_moments, PredictionMoments::Analytic);
        assert_eq!(c.stationarity.beta, 1e3);
        assert_eq!(c.tolerances().unwrap(), Tolerances::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_name() {
        let text = MINIMAL.replace("\"trials\"", "\"trails\": 1, \"trials\"");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("trails"), "{err}");
        assert!(err.contains("line"), "{err}");

        let text = MINIMAL.replace("\"sd\": 1.0", "\"sd\": 1.0, \"shape\": 2");
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn tolerance_overrides_merge() {
        let text = MINIMAL.replace(
            "\"trials\"",
            "\"tolerances\": {\"relative\": {\"epsilon\": 0.0001}, \"z_max\": 3}, \"trials\"",
        );
        let tol = RunConfig::parse(&text).unwrap().tolerances().unwrap();
        assert_eq!(tol.relative[&Quantity::Epsilon], 0.0001);
        assert_eq!(tol.relative[&Quantity::Qw], 0.05);
        assert_eq!(tol.z_max, 3.0);
    }
}
