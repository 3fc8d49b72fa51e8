//! Reference distributions and Wald tests.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal};

use crate::{Error, Result};

/// 97.5% standard normal quantile.
pub const Z_975: f64 = 1.959963984540054;

pub fn normal_two_sided_p(z: f64) -> f64 {
    if !z.is_finite() {
        return if z.is_nan() { f64::NAN } else { 0.0 };
    }
    2.0 * Normal::standard().sf(z.abs())
}

pub fn chi2_sf(x: f64, df: f64) -> f64 {
    ChiSquared::new(df).map(|d| d.sf(x.max(0.0))).unwrap_or(f64::NAN)
}

pub fn f_sf(x: f64, d1: f64, d2: f64) -> f64 {
    FisherSnedecor::new(d1, d2).map(|d| d.sf(x.max(0.0))).unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Reference {
    ChiSquared,
    /// Wald/q against F(q, denominator).
    F {
        denominator: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaldTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub reference: Reference,
}

/// Wald test of `beta = 0`. For the F reference `statistic` is W/q.
pub fn wald(beta: &DVector<f64>, vcov: &DMatrix<f64>, reference: Reference) -> Result<WaldTest> {
    let q = beta.len();
    if q == 0 || vcov.nrows() != q || vcov.ncols() != q {
        return Err(Error::Data(format!("Wald test needs {q}x{q} covariance, got {}x{}", vcov.nrows(), vcov.ncols())));
    }
    let inv = vcov
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| vcov.clone().pseudo_inverse(1e-12).ok())
        .ok_or_else(|| Error::Singular("Wald covariance".into()))?;
    let w = (beta.transpose() * inv * beta)[(0, 0)];
    Ok(match reference {
        Reference::ChiSquared => WaldTest { statistic: w, df: q, p_value: chi2_sf(w, q as f64), reference },
        Reference::F { denominator } => {
            let f = w / q as f64;
            WaldTest { statistic: f, df: q, p_value: f_sf(f, q as f64, denominator), reference }
        }
    })
}
