//! Synthetic single-factor markets and their risk matrices.
//!
//! Raw returns are `x_iμ = b_i f_μ / √N + y_iμ` with independent zero-mean
//! residuals of variance `v_i`. Two separate `1/√N` factors are involved:
//! the one above scales the factor term inside the return itself, and the
//! stored matrix holds `x_iμ / √N`, so that `J = X Xᵀ` directly.

use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::ensemble::{AssetEnsemble, FactorSeries};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Law of the residual returns, always with mean 0 and variance `v_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    #[default]
    Gaussian,
    /// Uniform on `[-√(3v), √(3v)]`.
    Uniform,
    /// `±√v` with probability 1/2 each.
    TwoPoint,
    /// No residual term; leaves only the factor part (diagnostics).
    None,
}

impl NoiseFamily {
    fn draw<R: Rng + ?Sized>(self, rng: &mut R, variance: f64) -> f64 {
        let sd = variance.sqrt();
        match self {
            NoiseFamily::Gaussian => sd * rng.sample::<f64, _>(StandardNormal),
            NoiseFamily::Uniform => sd * 3.0_f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
            NoiseFamily::TwoPoint => {
                if rng.random::<bool>() {
                    sd
                } else {
                    -sd
                }
            }
            NoiseFamily::None => 0.0,
        }
    }
}

/// Scaled return matrix `X = {x_iμ / √N}`, `N × p`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnMatrix {
    entries: DMatrix<f64>,
}

/// Symmetric `N × N` risk matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskMatrix {
    entries: DMatrix<f64>,
}

const RETURN_MAGIC: &[u8; 8] = b"MRSKX\0\0\x01";
const RISK_MAGIC: &[u8; 8] = b"MRSKJ\0\0\x01";

impl ReturnMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::InvalidInput("return matrix must be non-empty".into()));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("return matrix has non-finite entries".into()));
        }
        Ok(ReturnMatrix { entries })
    }

    pub fn n_assets(&self) -> usize {
        self.entries.nrows()
    }

    pub fn n_periods(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Header (8-byte magic, `N` and `p` as little-endian u32) followed by
    /// the entries as row-major little-endian f64.
    pub fn write_binary<W: Write>(&self, out: W) -> Result<()> {
        write_dump(out, RETURN_MAGIC, &self.entries)
    }

    pub fn read_binary<R: Read>(input: R) -> Result<Self> {
        ReturnMatrix::new(read_dump(input, RETURN_MAGIC)?)
    }
}

impl RiskMatrix {
    /// Accepts a square, finite matrix symmetric to `1e-12` relative.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "risk matrix must be square and non-empty, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("risk matrix has non-finite entries".into()));
        }
        let scale = entries.amax().max(f64::MIN_POSITIVE);
        let n = entries.nrows();
        for i in 0..n {
            for j in 0..i {
                if (entries[(i, j)] - entries[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!(
                        "risk matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(RiskMatrix { entries })
    }

    pub fn identity(n: usize) -> Self {
        RiskMatrix {
            entries: DMatrix::identity(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn scaled(&self, c: f64) -> Self {
        RiskMatrix {
            entries: &self.entries * c,
        }
    }

    pub fn write_binary<W: Write>(&self, out: W) -> Result<()> {
        write_dump(out, RISK_MAGIC, &self.entries)
    }

    pub fn read_binary<R: Read>(input: R) -> Result<Self> {
        RiskMatrix::new(read_dump(input, RISK_MAGIC)?)
    }
}

fn write_dump<W: Write>(mut out: W, magic: &[u8; 8], m: &DMatrix<f64>) -> Result<()> {
    let rows = u32::try_from(m.nrows()).map_err(|_| Error::InvalidInput("too many rows".into()))?;
    let cols = u32::try_from(m.ncols()).map_err(|_| Error::InvalidInput("too many columns".into()))?;
    out.write_all(magic)?;
    out.write_all(&rows.to_le_bytes())?;
    out.write_all(&cols.to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.len() * 8);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

fn read_dump<R: Read>(mut input: R, magic: &[u8; 8]) -> Result<DMatrix<f64>> {
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    if &header[..8] != magic {
        return Err(Error::InvalidInput("unexpected magic in matrix dump".into()));
    }
    let rows = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(header[12..16].try_into().expect("4 bytes")) as usize;
    let mut body = vec![0u8; rows * cols * 8];
    input.read_exact(&mut body)?;
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Draws one market. Asset `i` takes its residuals from stream `i` of
/// `noise_seed`.
pub fn generate_returns(
    ensemble: &AssetEnsemble,
    factors: &FactorSeries,
    noise_seed: u64,
    noise_family: NoiseFamily,
) -> ReturnMatrix {
    let n = ensemble.len();
    let p = factors.len();
    let sqrt_n = (n as f64).sqrt();
    let f = factors.values();
    let mut rows = Vec::with_capacity(n * p);
    for (i, (&b, &v)) in ensemble.loadings().iter().zip(ensemble.variances()).enumerate() {
        let mut rng = stream_rng(noise_seed, i as u64);
        for &f_mu in f {
            let raw = b * f_mu / sqrt_n + noise_family.draw(&mut rng, v);
            rows.push(raw / sqrt_n);
        }
    }
    ReturnMatrix {
        entries: DMatrix::from_row_slice(n, p, &rows),
    }
}

/// `J = X Xᵀ`; the upper triangle is copied from the lower one so the result
/// is exactly symmetric.
pub fn wishart(x: &ReturnMatrix) -> RiskMatrix {
    let xm = x.entries();
    let mut j = xm * xm.transpose();
    let n = j.nrows();
    for col in 1..n {
        for row in 0..col {
            j[(row, col)] = j[(col, row)];
        }
    }
    RiskMatrix { entries: j }
}

/// `E[J] = α·diag(v) + (α·F/N)·b bᵀ`, the mean of [`wishart`] over the
/// residuals with the factor series held at strength `F`.
pub fn expected_wishart(ensemble: &AssetEnsemble, factor_strength: f64, alpha: f64) -> Result<RiskMatrix> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
    }
    if !(factor_strength.is_finite() && factor_strength >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "factor strength must be finite and nonnegative, got {factor_strength}"
        )));
    }
    let n = ensemble.len();
    let b = ensemble.loadings();
    let v = ensemble.variances();
    let coupling = alpha * factor_strength / n as f64;
    let entries = DMatrix::from_fn(n, n, |i, j| {
        let diag = if i == j { alpha * v[i] } else { 0.0 };
        diag + coupling * b[i] * b[j]
    });
    Ok(RiskMatrix { entries })
}
