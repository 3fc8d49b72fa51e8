//! Regression specification error test for the exponential mean.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{fit_design, Design, FitOptions, ModelSpec, Regressors};
use crate::panel::PanelDataset;
use crate::stats::{wald, Reference};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResetTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub coefficient: f64,
    pub std_error: f64,
}

pub const RESET_TERM: &str = "reset_index_sq";

/// Refits with the squared fitted linear index (standardized) added and
/// tests its coefficient with the cluster-robust Wald χ²(1).
pub fn reset_test(dataset: &PanelDataset, regressors: &Regressors, spec: &ModelSpec) -> Result<ResetTest> {
    reset_test_design(&Design::from_panel(dataset, regressors, spec)?, &spec.options)
}

pub fn reset_test_design(design: &Design, opts: &FitOptions) -> Result<ResetTest> {
    let base = fit_design(design, opts)?;
    if !base.converged {
        return Err(Error::NoConvergence { iterations: base.iterations, residual: f64::NAN });
    }
    let mut d = design.subset(&base.rows);
    let n = base.rows.len();
    let sq: Vec<f64> = base.linear_index.iter().map(|e| e * e).collect();
    let mean = sq.iter().sum::<f64>() / n as f64;
    let sd = (sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    if !(sd > 0.0) {
        return Ok(ResetTest { statistic: 0.0, df: 1, p_value: 1.0, coefficient: 0.0, std_error: 0.0 });
    }
    let keep: Vec<usize> = base.names.iter().map(|nm| d.names.iter().position(|x| x == nm).unwrap()).collect();
    let last = keep.len();
    let mut x = d.x.select_columns(&keep).insert_column(last, 0.0);
    for (i, v) in sq.iter().enumerate() {
        x[(i, last)] = (v - mean) / sd;
    }
    d.names = base.names.clone();
    d.names.push(RESET_TERM.into());
    d.x = x;
    let aug = fit_design(&d, opts)?;
    let Some(j) = aug.index_of(RESET_TERM) else {
        // Squared index absorbed by the fixed effects: no residual signal.
        return Ok(ResetTest { statistic: 0.0, df: 1, p_value: 1.0, coefficient: 0.0, std_error: 0.0 });
    };
    let b = aug.coefficients[j];
    let v = aug.vcov_corrected[(j, j)];
    let t = wald(&DVector::from_vec(vec![b]), &DMatrix::from_vec(1, 1, vec![v]), Reference::ChiSquared)?;
    Ok(ResetTest { statistic: t.statistic, df: 1, p_value: t.p_value, coefficient: b, std_error: v.sqrt() })
}
