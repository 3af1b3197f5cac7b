//! Exact minimization of `H(w) = ½ wᵀJw` subject to `Σ w_i = N`.
//!
//! The unique KKT point is `w* = N·J⁻¹1 / (1ᵀJ⁻¹1)` with multiplier
//! `k = N / (1ᵀJ⁻¹1)`, so that `J w* = k·1`. Weights are unrestricted in
//! sign. One Cholesky factorization serves both the realized `J` and the
//! expected `E[J]`.

use std::io::Write;

use nalgebra::{Cholesky, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_sim::RiskMatrix;

/// Portfolio weights, budget-normalized to `Σ w_i = N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub w: Vec<f64>,
}

impl Portfolio {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn budget_residual(&self) -> f64 {
        (self.w.iter().sum::<f64>() - self.w.len() as f64).abs()
    }

    /// `wᵀw / N`.
    pub fn concentration(&self) -> f64 {
        self.w.iter().map(|x| x * x).sum::<f64>() / self.w.len() as f64
    }

    /// Writes `index,weight` lines with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "index,weight")?;
        for (i, w) in self.w.iter().enumerate() {
            writeln!(out, "{i},{w}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub portfolio: Portfolio,
    /// `H(w*) / N`.
    pub epsilon: f64,
    /// `w*ᵀw* / N`.
    pub q_w: f64,
    /// `k` with `J w* = k·1`.
    pub multiplier: f64,
    /// `max_i |(J w*)_i - k|`.
    pub kkt_residual: f64,
    /// `|Σ w*_i - N|`.
    pub budget_residual: f64,
}

/// `H(w)/N = wᵀJw / (2N)`.
pub fn investment_risk(w: &Portfolio, j: &RiskMatrix) -> Result<f64> {
    let n = j.dim();
    if w.len() != n {
        return Err(Error::InvalidInput(format!(
            "portfolio has {} weights but the risk matrix is {n}x{n}",
            w.len()
        )));
    }
    let wv = DVector::from_column_slice(&w.w);
    Ok(wv.dot(&(j.entries() * &wv)) / (2.0 * n as f64))
}

fn kkt_bound(multiplier: f64) -> f64 {
    1e-8 * (1.0 + multiplier.abs())
}

fn max_deviation(jw: &DVector<f64>, k: f64) -> f64 {
    jw.iter().fold(0.0_f64, |acc, x| acc.max((x - k).abs()))
}

/// Minimum-risk portfolio for a realized risk matrix.
pub fn minimize_risk(j: &RiskMatrix) -> Result<SolveReport> {
    let n = j.dim();
    let entries = j.entries();
    let chol = Cholesky::new(entries.clone())
        .ok_or_else(|| Error::Degenerate("Cholesky factorization failed: matrix is not positive definite".into()))?;
    let max_diag = entries.diagonal().amax();
    let min_pivot_sq = chol
        .l_dirty()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |acc, &x| acc.min(x * x));
    // roundoff-level pivots mean the factorization only succeeded by accident
    if !(min_pivot_sq > 1e3 * n as f64 * f64::EPSILON * max_diag) {
        return Err(Error::Degenerate(format!(
            "smallest Cholesky pivot² {min_pivot_sq:e} is at roundoff level relative to max diagonal {max_diag:e}"
        )));
    }

    let ones = DVector::from_element(n, 1.0);
    let z = chol.solve(&ones);
    let total: f64 = z.sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::Degenerate(format!("1ᵀJ⁻¹1 = {total} is not positive")));
    }
    let nf = n as f64;
    let mut w = &z * (nf / total);
    let mut k = nf / total;

    let mut jw = entries * &w;
    if max_deviation(&jw, k) > kkt_bound(k) {
        // one refinement pass; the correction along z keeps the budget
        let r = &jw - DVector::from_element(n, k);
        let delta = chol.solve(&r);
        let shift = delta.sum() / total;
        w = &w - &delta + &z * shift;
        k += shift;
        jw = entries * &w;
    }

    let portfolio = Portfolio {
        w: w.iter().copied().collect(),
    };
    let epsilon = investment_risk(&portfolio, j)?;
    Ok(SolveReport {
        q_w: portfolio.concentration(),
        budget_residual: portfolio.budget_residual(),
        kkt_residual: max_deviation(&jw, k),
        multiplier: k,
        epsilon,
        portfolio,
    })
}

/// Same KKT solve applied to the expected risk matrix `E[J]`.
pub fn minimize_expected_risk(expected: &RiskMatrix) -> Result<SolveReport> {
    minimize_risk(expected)
}
