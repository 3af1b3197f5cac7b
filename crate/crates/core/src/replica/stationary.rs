//! Finite-β replica-symmetric free energy and its stationary point.
//!
//! The extremand is
//!
//! ```text
//! φ(Θ) = -k - h·m + ½(χ_w + q_w)(χ̃_w - q̃_w) + ½ q_w q̃_w
//!        + ½(χ_s + q_s)(χ̃_s - q̃_s) + ½ q_s q̃_s
//!        - (α/2) log(1 + βχ_s) - αβ(q_s + F m²) / (2(1 + βχ_s))
//!        - ½ ⟨log(χ̃_w + v χ̃_s)⟩
//!        + ½ ⟨(q̃_w + v q̃_s + (k + b h)²) / (χ̃_w + v χ̃_s)⟩
//! ```
//!
//! with `⟨·⟩` the empirical average over the ensemble's `(b_i, v_i)`.
//! [`solve_stationary`] finds the point where all eleven partial derivatives
//! vanish: it seeds the direct parameters from the closed forms, solves the
//! conjugate equations given those, and then runs damped Newton on the full
//! system.
//!
//! At the stationary point the closed forms for `χ_w, q_w, χ_s, q_s, m` hold
//! exactly at any finite β, and `-dφ*/dβ = ε + 1/(2β)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_alpha, predict};
use crate::ensemble::{compute_moments, AssetEnsemble};
use crate::error::{Error, Result};

pub const PARAMETER_COUNT: usize = 11;

/// Names of the order parameters, in [`OrderParameterSet::to_array`] order.
pub const PARAMETER_NAMES: [&str; PARAMETER_COUNT] = [
    "k",
    "m",
    "h",
    "chi_w",
    "q_w",
    "chi_w_tilde",
    "q_w_tilde",
    "chi_s",
    "q_s",
    "chi_s_tilde",
    "q_s_tilde",
];

/// The eleven order parameters of the free energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderParameterSet {
    pub k: f64,
    pub m: f64,
    pub h: f64,
    pub chi_w: f64,
    pub q_w: f64,
    pub chi_w_tilde: f64,
    pub q_w_tilde: f64,
    pub chi_s: f64,
    pub q_s: f64,
    pub chi_s_tilde: f64,
    pub q_s_tilde: f64,
}

impl OrderParameterSet {
    pub fn to_array(&self) -> [f64; PARAMETER_COUNT] {
        [
            self.k,
            self.m,
            self.h,
            self.chi_w,
            self.q_w,
            self.chi_w_tilde,
            self.q_w_tilde,
            self.chi_s,
            self.q_s,
            self.chi_s_tilde,
            self.q_s_tilde,
        ]
    }

    pub fn from_array(a: [f64; PARAMETER_COUNT]) -> Self {
        OrderParameterSet {
            k: a[0],
            m: a[1],
            h: a[2],
            chi_w: a[3],
            q_w: a[4],
            chi_w_tilde: a[5],
            q_w_tilde: a[6],
            chi_s: a[7],
            q_s: a[8],
            chi_s_tilde: a[9],
            q_s_tilde: a[10],
        }
    }
}

// indices into the parameter array
const K: usize = 0;
const M: usize = 1;
const H: usize = 2;
const CHI_W: usize = 3;
const Q_W: usize = 4;
const CHI_W_T: usize = 5;
const Q_W_T: usize = 6;
const CHI_S: usize = 7;
const Q_S: usize = 8;
const CHI_S_T: usize = 9;
const Q_S_T: usize = 10;

/// Gradient together with the sum of absolute values of the terms making up
/// each component, used to judge cancellation.
#[derive(Debug, Clone, Copy)]
struct GradientEvaluation {
    components: [f64; PARAMETER_COUNT],
    magnitudes: [f64; PARAMETER_COUNT],
}

impl GradientEvaluation {
    fn relative_residual(&self) -> [f64; PARAMETER_COUNT] {
        std::array::from_fn(|j| self.components[j].abs() / (1.0 + self.magnitudes[j]))
    }
}

struct Landscape<'a> {
    ensemble: &'a AssetEnsemble,
    factor_strength: f64,
    alpha: f64,
    beta: f64,
}

impl<'a> Landscape<'a> {
    fn new(ensemble: &'a AssetEnsemble, factor_strength: f64, alpha: f64, beta: f64) -> Result<Self> {
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidInput(format!("beta must be positive and finite, got {beta}")));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidInput(format!("alpha must be positive and finite, got {alpha}")));
        }
        if !(factor_strength.is_finite() && factor_strength >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "factor strength must be finite and nonnegative, got {factor_strength}"
            )));
        }
        Ok(Landscape {
            ensemble,
            factor_strength,
            alpha,
            beta,
        })
    }

    fn energy_denominator(&self, t: &[f64; PARAMETER_COUNT]) -> Result<f64> {
        let e = 1.0 + self.beta * t[CHI_S];
        if e > 0.0 && e.is_finite() {
            Ok(e)
        } else {
            Err(Error::InvalidInput(format!(
                "1 + beta*chi_s = {e} is not positive; outside the free-energy domain"
            )))
        }
    }

    fn check_weights(&self, t: &[f64; PARAMETER_COUNT]) -> Result<()> {
        if t.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("order parameters must be finite".into()));
        }
        for &v in self.ensemble.variances() {
            let d = t[CHI_W_T] + v * t[CHI_S_T];
            if !(d > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "chi_w_tilde + v*chi_s_tilde = {d} is not positive for v = {v}"
                )));
            }
        }
        Ok(())
    }

    fn in_domain(&self, t: &[f64; PARAMETER_COUNT]) -> bool {
        self.energy_denominator(t).is_ok() && self.check_weights(t).is_ok()
    }

    fn value(&self, t: &[f64; PARAMETER_COUNT]) -> Result<f64> {
        let e = self.energy_denominator(t)?;
        self.check_weights(t)?;
        let (alpha, beta, f) = (self.alpha, self.beta, self.factor_strength);
        let n = self.ensemble.len() as f64;
        let mut log_sum = 0.0;
        let mut ratio_sum = 0.0;
        for (&b, &v) in self.ensemble.loadings().iter().zip(self.ensemble.variances()) {
            let d = t[CHI_W_T] + v * t[CHI_S_T];
            let shift = t[K] + b * t[H];
            log_sum += d.ln();
            ratio_sum += (t[Q_W_T] + v * t[Q_S_T] + shift * shift) / d;
        }
        Ok(-t[K] - t[H] * t[M]
            + 0.5 * (t[CHI_W] + t[Q_W]) * (t[CHI_W_T] - t[Q_W_T])
            + 0.5 * t[Q_W] * t[Q_W_T]
            + 0.5 * (t[CHI_S] + t[Q_S]) * (t[CHI_S_T] - t[Q_S_T])
            + 0.5 * t[Q_S] * t[Q_S_T]
            - 0.5 * alpha * e.ln()
            - alpha * beta * (t[Q_S] + f * t[M] * t[M]) / (2.0 * e)
            - 0.5 * log_sum / n
            + 0.5 * ratio_sum / n)
    }

    fn gradient(&self, t: &[f64; PARAMETER_COUNT]) -> Result<GradientEvaluation> {
        let e = self.energy_denominator(t)?;
        self.check_weights(t)?;
        let (alpha, beta, f) = (self.alpha, self.beta, self.factor_strength);
        let n = self.ensemble.len() as f64;

        // ⟨1/D⟩, ⟨v/D⟩, ⟨R/D²⟩, ⟨vR/D²⟩, ⟨(k+bh)/D⟩, ⟨b(k+bh)/D⟩ and the
        // matching averages of absolute values
        let mut s = [0.0; 6];
        let mut a = [0.0; 6];
        for (&b, &v) in self.ensemble.loadings().iter().zip(self.ensemble.variances()) {
            let d = t[CHI_W_T] + v * t[CHI_S_T];
            let shift = t[K] + b * t[H];
            let r = t[Q_W_T] + v * t[Q_S_T] + shift * shift;
            let r_abs = t[Q_W_T].abs() + (v * t[Q_S_T]).abs() + shift * shift;
            let terms = [1.0 / d, v / d, r / (d * d), v * r / (d * d), shift / d, b * shift / d];
            let abs_terms = [
                1.0 / d,
                v / d,
                r_abs / (d * d),
                v * r_abs / (d * d),
                (shift / d).abs(),
                (b * shift / d).abs(),
            ];
            for i in 0..6 {
                s[i] += terms[i];
                a[i] += abs_terms[i];
            }
        }
        for i in 0..6 {
            s[i] /= n;
            a[i] /= n;
        }
        let [inv_d, v_inv_d, r_d2, vr_d2, shift_d, b_shift_d] = s;
        let [_, _, r_d2_abs, vr_d2_abs, shift_d_abs, b_shift_d_abs] = a;

        let load = alpha * beta / e;
        let energy_curv = alpha * beta * beta * (t[Q_S] + f * t[M] * t[M]) / (e * e);

        let mut g = [0.0; PARAMETER_COUNT];
        let mut mag = [0.0; PARAMETER_COUNT];

        g[K] = -1.0 + shift_d;
        mag[K] = 1.0 + shift_d_abs;

        g[M] = -t[H] - load * f * t[M];
        mag[M] = t[H].abs() + (load * f * t[M]).abs();

        g[H] = -t[M] + b_shift_d;
        mag[H] = t[M].abs() + b_shift_d_abs;

        g[CHI_W] = 0.5 * (t[CHI_W_T] - t[Q_W_T]);
        mag[CHI_W] = 0.5 * (t[CHI_W_T].abs() + t[Q_W_T].abs());

        g[Q_W] = 0.5 * (t[CHI_W_T] - t[Q_W_T]) + 0.5 * t[Q_W_T];
        mag[Q_W] = 0.5 * (t[CHI_W_T] - t[Q_W_T]).abs() + 0.5 * t[Q_W_T].abs();

        g[CHI_W_T] = 0.5 * (t[CHI_W] + t[Q_W]) - 0.5 * inv_d - 0.5 * r_d2;
        mag[CHI_W_T] = 0.5 * ((t[CHI_W] + t[Q_W]).abs() + inv_d + r_d2_abs);

        g[Q_W_T] = -0.5 * (t[CHI_W] + t[Q_W]) + 0.5 * t[Q_W] + 0.5 * inv_d;
        mag[Q_W_T] = 0.5 * ((t[CHI_W] + t[Q_W]).abs() + t[Q_W].abs() + inv_d);

        g[CHI_S] = 0.5 * (t[CHI_S_T] - t[Q_S_T]) - 0.5 * load + 0.5 * energy_curv;
        mag[CHI_S] = 0.5 * ((t[CHI_S_T] - t[Q_S_T]).abs() + load.abs() + energy_curv.abs());

        g[Q_S] = 0.5 * (t[CHI_S_T] - t[Q_S_T]) + 0.5 * t[Q_S_T] - 0.5 * load;
        mag[Q_S] = 0.5 * ((t[CHI_S_T] - t[Q_S_T]).abs() + t[Q_S_T].abs() + load.abs());

        g[CHI_S_T] = 0.5 * (t[CHI_S] + t[Q_S]) - 0.5 * v_inv_d - 0.5 * vr_d2;
        mag[CHI_S_T] = 0.5 * ((t[CHI_S] + t[Q_S]).abs() + v_inv_d + vr_d2_abs);

        g[Q_S_T] = -0.5 * (t[CHI_S] + t[Q_S]) + 0.5 * t[Q_S] + 0.5 * v_inv_d;
        mag[Q_S_T] = 0.5 * ((t[CHI_S] + t[Q_S]).abs() + t[Q_S].abs() + v_inv_d);

        Ok(GradientEvaluation {
            components: g,
            magnitudes: mag,
        })
    }

    /// Given the direct parameters `(χ_w, q_w, χ_s, q_s, m)`, solves the
    /// stationarity equations of `q_w, χ_w, q_s, χ_s, m, k` for the conjugates
    /// and the multipliers `k, h`.
    fn complete_from_direct(
        &self,
        chi_w: f64,
        q_w: f64,
        chi_s: f64,
        q_s: f64,
        m: f64,
    ) -> Result<[f64; PARAMETER_COUNT]> {
        let (alpha, beta, f) = (self.alpha, self.beta, self.factor_strength);
        let e = 1.0 + beta * chi_s;
        if !(e > 0.0) {
            return Err(Error::InvalidInput(format!(
                "chi_s = {chi_s} puts 1 + beta*chi_s outside the domain"
            )));
        }
        // ∂q_w: χ̃_w/2 = 0; ∂χ_w: (χ̃_w - q̃_w)/2 = 0
        let chi_w_t = 0.0;
        let q_w_t = chi_w_t;
        // ∂q_s: χ̃_s/2 = αβ/(2E)
        let chi_s_t = alpha * beta / e;
        // ∂χ_s
        let q_s_t = chi_s_t - alpha * beta / e + alpha * beta * beta * (q_s + f * m * m) / (e * e);
        // ∂m
        let h = -alpha * beta * f * m / e;
        // ∂k: ⟨(k + b h)/D⟩ = 1, linear in k
        let inv_d = self.ensemble.average(|_, v| 1.0 / (chi_w_t + v * chi_s_t));
        let b_inv_d = self.ensemble.average(|b, v| b / (chi_w_t + v * chi_s_t));
        let k = (1.0 - h * b_inv_d) / inv_d;

        let mut t = [0.0; PARAMETER_COUNT];
        t[K] = k;
        t[M] = m;
        t[H] = h;
        t[CHI_W] = chi_w;
        t[Q_W] = q_w;
        t[CHI_W_T] = chi_w_t;
        t[Q_W_T] = q_w_t;
        t[CHI_S] = chi_s;
        t[Q_S] = q_s;
        t[CHI_S_T] = chi_s_t;
        t[Q_S_T] = q_s_t;
        Ok(t)
    }

    /// Per-parameter scales for the Newton iteration.
    fn scales(&self, t: &[f64; PARAMETER_COUNT]) -> [f64; PARAMETER_COUNT] {
        let v_mean = self.ensemble.average(|_, v| v);
        let floor = 1e-12;
        let mut s = [0.0; PARAMETER_COUNT];
        s[K] = t[K].abs().max(1.0);
        s[M] = t[M].abs().max(1.0);
        s[H] = t[H].abs().max(t[K].abs()).max(1.0);
        s[CHI_W] = t[CHI_W].abs().max(floor);
        s[Q_W] = t[Q_W].abs().max(floor);
        s[CHI_S] = t[CHI_S].abs().max(floor);
        s[Q_S] = t[Q_S].abs().max(floor);
        s[CHI_S_T] = t[CHI_S_T].abs().max(floor);
        s[Q_S_T] = t[Q_S_T].abs().max(floor);
        s[CHI_W_T] = t[CHI_W_T].abs().max(s[CHI_S_T] * v_mean);
        s[Q_W_T] = t[Q_W_T].abs().max(s[Q_S_T] * v_mean);
        s
    }

    /// Central-difference Jacobian of the gradient in scaled coordinates.
    fn scaled_jacobian(
        &self,
        t: &[f64; PARAMETER_COUNT],
        scales: &[f64; PARAMETER_COUNT],
    ) -> Result<DMatrix<f64>> {
        const STEP: f64 = 1e-6;
        let mut jac = DMatrix::zeros(PARAMETER_COUNT, PARAMETER_COUNT);
        for j in 0..PARAMETER_COUNT {
            let mut plus = *t;
            let mut minus = *t;
            plus[j] += STEP * scales[j];
            minus[j] -= STEP * scales[j];
            let gp = self.gradient(&plus)?.components;
            let gm = self.gradient(&minus)?.components;
            for i in 0..PARAMETER_COUNT {
                jac[(i, j)] = (gp[i] - gm[i]) / (2.0 * STEP);
            }
        }
        Ok(jac)
    }
}

fn merit(eval: &GradientEvaluation) -> f64 {
    eval.relative_residual().iter().map(|r| r * r).sum()
}

fn max_of(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Value of the free-energy extremand at `theta`.
pub fn free_energy(
    theta: &OrderParameterSet,
    ensemble: &AssetEnsemble,
    factor_strength: f64,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    Landscape::new(ensemble, factor_strength, alpha, beta)?.value(&theta.to_array())
}

/// Analytic gradient of [`free_energy`], in [`PARAMETER_NAMES`] order.
pub fn free_energy_gradient(
    theta: &OrderParameterSet,
    ensemble: &AssetEnsemble,
    factor_strength: f64,
    alpha: f64,
    beta: f64,
) -> Result<[f64; PARAMETER_COUNT]> {
    Ok(Landscape::new(ensemble, factor_strength, alpha, beta)?
        .gradient(&theta.to_array())?
        .components)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryOptions {
    pub max_iterations: usize,
    /// Bound on `|g_j| / (1 + Σ|terms of g_j|)` for every component.
    pub tolerance: f64,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        StationaryOptions {
            max_iterations: 60,
            tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySolution {
    pub theta: OrderParameterSet,
    pub gradient: [f64; PARAMETER_COUNT],
    pub relative_residual: [f64; PARAMETER_COUNT],
    pub free_energy: f64,
    pub iterations: usize,
}

impl StationarySolution {
    pub fn max_abs_gradient(&self) -> f64 {
        max_of(&self.gradient)
    }

    pub fn max_relative_residual(&self) -> f64 {
        max_of(&self.relative_residual)
    }
}

/// Finds the stationary point of the free energy at finite `beta`.
///
/// The direct parameters start from `init` when given, otherwise from the
/// closed forms; the remaining six parameters are then solved from their
/// stationarity equations before the full Newton polish.
pub fn solve_stationary(
    ensemble: &AssetEnsemble,
    factor_strength: f64,
    alpha: f64,
    beta: f64,
    init: Option<&OrderParameterSet>,
    options: &StationaryOptions,
) -> Result<StationarySolution> {
    check_alpha(alpha)?;
    let land = Landscape::new(ensemble, factor_strength, alpha, beta)?;
    let direct = match init {
        Some(t) => (t.chi_w, t.q_w, t.chi_s, t.q_s, t.m),
        None => {
            let moments = compute_moments(ensemble, factor_strength)?;
            let pred = predict(&moments, alpha)?;
            (
                pred.beta_chi_w / beta,
                pred.q_w,
                pred.beta_chi_s / beta,
                pred.q_s,
                moments.m,
            )
        }
    };
    let mut t = land.complete_from_direct(direct.0, direct.1, direct.2, direct.3, direct.4)?;
    land.check_weights(&t)?;
    land.energy_denominator(&t)?;

    let mut eval = land.gradient(&t)?;
    let mut iterations = 0;
    loop {
        let converged = iterations > 0 && max_of(&eval.relative_residual()) <= options.tolerance;
        if converged {
            break;
        }
        if iterations >= options.max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                residual: eval.components.to_vec(),
            });
        }
        iterations += 1;

        let scales = land.scales(&t);
        let jac = land.scaled_jacobian(&t, &scales)?;
        let rhs = -DVector::from_column_slice(&eval.components);
        let step = match jac.clone().lu().solve(&rhs) {
            Some(x) if x.iter().all(|v| v.is_finite()) => x,
            _ => jac
                .svd(true, true)
                .solve(&rhs, 1e-14)
                .map_err(|e| Error::InvalidInput(format!("singular Newton system: {e}")))?,
        };

        let current = merit(&eval);
        let mut accepted = false;
        let mut damping = 1.0;
        while damping > 1e-10 {
            let candidate: [f64; PARAMETER_COUNT] =
                std::array::from_fn(|j| t[j] + damping * step[j] * scales[j]);
            if land.in_domain(&candidate) {
                let cand_eval = land.gradient(&candidate)?;
                if merit(&cand_eval) < current {
                    t = candidate;
                    eval = cand_eval;
                    accepted = true;
                    break;
                }
            }
            damping *= 0.5;
        }
        if !accepted {
            // no descent left: either at roundoff level or stuck
            if max_of(&eval.relative_residual()) <= options.tolerance {
                break;
            }
            return Err(Error::NonConvergence {
                iterations,
                residual: eval.components.to_vec(),
            });
        }
    }

    Ok(StationarySolution {
        theta: OrderParameterSet::from_array(t),
        gradient: eval.components,
        relative_residual: eval.relative_residual(),
        free_energy: land.value(&t)?,
        iterations,
    })
}

/// `-dφ*/dβ` by central differences, re-extremizing at `β(1 ± rel_step)`.
pub fn beta_derivative_epsilon(
    ensemble: &AssetEnsemble,
    factor_strength: f64,
    alpha: f64,
    beta: f64,
    rel_step: f64,
    options: &StationaryOptions,
) -> Result<f64> {
    if !(rel_step > 0.0 && rel_step < 1.0) {
        return Err(Error::InvalidInput(format!("rel_step must lie in (0, 1), got {rel_step}")));
    }
    let delta = beta * rel_step;
    let up = solve_stationary(ensemble, factor_strength, alpha, beta + delta, None, options)?;
    let down = solve_stationary(ensemble, factor_strength, alpha, beta - delta, None, options)?;
    Ok(-(up.free_energy - down.free_energy) / (2.0 * delta))
}

/// Stationarity and β-derivative check for one ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityDiagnostic {
    pub alpha: f64,
    pub beta: f64,
    pub factor_strength: f64,
    pub n_assets: usize,
    pub solution: StationarySolution,
    pub max_abs_gradient: f64,
    pub epsilon_beta_derivative: f64,
    pub epsilon_predicted: f64,
    /// `|epsilon_beta_derivative / epsilon_predicted - 1|`.
    pub relative_gap: f64,
    /// Closed-form direct parameters at this β, for comparison with `solution`.
    pub closed_form: ClosedFormDirect,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormDirect {
    pub chi_w: f64,
    pub q_w: f64,
    pub chi_s: f64,
    pub q_s: f64,
    pub m: f64,
}

impl StationarityDiagnostic {
    pub fn passes(&self, gradient_tolerance: f64, gap_tolerance: f64) -> bool {
        self.max_abs_gradient <= gradient_tolerance && self.relative_gap <= gap_tolerance
    }
}

pub fn stationarity_diagnostic(
    ensemble: &AssetEnsemble,
    factor_strength: f64,
    alpha: f64,
    beta: f64,
    options: &StationaryOptions,
) -> Result<StationarityDiagnostic> {
    let moments = compute_moments(ensemble, factor_strength)?;
    let pred = predict(&moments, alpha)?;
    let solution = solve_stationary(ensemble, factor_strength, alpha, beta, None, options)?;
    let epsilon_beta_derivative =
        beta_derivative_epsilon(ensemble, factor_strength, alpha, beta, 1e-3, options)?;
    Ok(StationarityDiagnostic {
        alpha,
        beta,
        factor_strength,
        n_assets: ensemble.len(),
        max_abs_gradient: solution.max_abs_gradient(),
        solution,
        epsilon_beta_derivative,
        epsilon_predicted: pred.epsilon,
        relative_gap: (epsilon_beta_derivative / pred.epsilon - 1.0).abs(),
        closed_form: ClosedFormDirect {
            chi_w: pred.beta_chi_w / beta,
            q_w: pred.q_w,
            chi_s: pred.beta_chi_s / beta,
            q_s: pred.q_s,
            m: moments.m,
        },
    })
}
