//! Closed-form large-N results for the budget-constrained minimum-risk
//! portfolio under the single-factor model.
//!
//! All formulas take an [`EnsembleMoments`] summary and the period ratio
//! `alpha = p / N`. The `β → ∞` limit is already taken; finite-β diagnostics
//! of the underlying free energy live in [`stationary`].

pub mod stationary;

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleMoments;
use crate::error::{Error, Result};

/// Column order of [`ReplicaPrediction::csv_row`].
pub const PREDICTION_CSV_HEADER: &str =
    "alpha,epsilon,q_w,q_s,beta_chi_w,beta_chi_s,epsilon_or,kappa,q_w_or";

/// Large-N predictions for one `(alpha, moments)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaPrediction {
    pub alpha: f64,
    /// Minimal investment risk per asset.
    pub epsilon: f64,
    /// Investment concentration `wᵀw / N` of the optimal portfolio.
    pub q_w: f64,
    /// Variance-weighted concentration `Σ v_i w_i² / N`.
    pub q_s: f64,
    /// `β·χ_w`, finite as `β → ∞`.
    pub beta_chi_w: f64,
    /// `β·χ_s`, finite as `β → ∞`.
    pub beta_chi_s: f64,
    /// Risk per asset of the portfolio minimizing the expected risk.
    pub epsilon_or: f64,
    /// Opportunity loss `epsilon_or / epsilon`.
    pub kappa: f64,
    /// Concentration of the expected-risk portfolio.
    pub q_w_or: f64,
}

impl ReplicaPrediction {
    pub fn csv_row(&self) -> String {
        [
            self.alpha,
            self.epsilon,
            self.q_w,
            self.q_s,
            self.beta_chi_w,
            self.beta_chi_s,
            self.epsilon_or,
            self.kappa,
            self.q_w_or,
        ]
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 1.0 {
        Ok(())
    } else {
        Err(Error::Regime { alpha })
    }
}

/// Replica-symmetric predictions with the common factor.
pub fn predict(moments: &EnsembleMoments, alpha: f64) -> Result<ReplicaPrediction> {
    check_alpha(alpha)?;
    let inv_v = moments.inv_v;
    let f = moments.factor_strength;
    let gain = factor_gain(moments);
    let excess = alpha - 1.0;

    let epsilon = excess / (2.0 * inv_v) + 0.5 * excess * gain;
    let q_w = (1.0 / excess) * (1.0 + gain * inv_v) + moments.c;
    let q_s = 1.0 / inv_v
        + f * f * moments.m * moments.m * moments.var1 * inv_v
        + (1.0 / excess) * (1.0 / inv_v + gain);
    let epsilon_or = alpha / (2.0 * inv_v) + 0.5 * alpha * gain;

    Ok(ReplicaPrediction {
        alpha,
        epsilon,
        q_w,
        q_s,
        beta_chi_w: inv_v / excess,
        beta_chi_s: 1.0 / excess,
        epsilon_or,
        kappa: epsilon_or / epsilon,
        q_w_or: moments.c,
    })
}

/// Predictions for independent returns with per-asset variances, ignoring
/// loadings and factor strength: `(epsilon, q_w)`.
pub fn predict_independent(moments: &EnsembleMoments, alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let inv_v = moments.inv_v;
    let excess = alpha - 1.0;
    let epsilon = excess / (2.0 * inv_v);
    let q_w = 1.0 / excess + moments.inv_v2 / (inv_v * inv_v);
    Ok((epsilon, q_w))
}

/// Risk contribution of the common factor, `F·m·m1 = F·m1² / (1 + F·var1·⟨v⁻¹⟩)`.
///
/// Nondecreasing in `F`, zero at `F = 0`, saturating at `m1² / (var1·⟨v⁻¹⟩)`
/// when `var1 > 0`.
pub fn factor_gain(moments: &EnsembleMoments) -> f64 {
    let f = moments.factor_strength;
    if f == 0.0 {
        return 0.0;
    }
    f * moments.m1 * moments.m1 / (1.0 + f * moments.var1 * moments.inv_v)
}
