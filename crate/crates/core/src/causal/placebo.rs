//! Fictitious-adoption placebo on the pre-treatment sample.

use serde::Serialize;

use super::{control_name, Estimate};
use crate::panel::PanelDataset;
use crate::ppml::{fit, FitResult, ModelSpec, Regressors};
use crate::synth::make_placebo;
use crate::{Error, Result};

pub const PLACEBO_POST: &str = "placebo_post";
pub const PLACEBO_TREND: &str = "placebo_trend";

#[derive(Debug, Clone)]
pub struct PlaceboTest {
    pub shift_years: u32,
    /// Treated × fictitious post.
    pub treat_post: Estimate,
    /// Treated × years relative to the fictitious adoption.
    pub treat_trend: Estimate,
    pub fit: FitResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlaceboRecord {
    pub shift_years: u32,
    pub treat_post: Estimate,
    pub treat_trend: Estimate,
}

impl PlaceboTest {
    pub fn record(&self) -> PlaceboRecord {
        PlaceboRecord { shift_years: self.shift_years, treat_post: self.treat_post, treat_trend: self.treat_trend }
    }
}

/// Placebo regressors on a panel produced by `make_placebo`.
pub fn placebo_regressors(placebo: &PanelDataset, include_controls: bool) -> Regressors {
    let mut regs = Regressors::default();
    regs.push(PLACEBO_POST, placebo.rows.iter().map(|r| f64::from(u8::from(r.post))).collect());
    regs.push(PLACEBO_TREND, placebo.rows.iter().map(|r| r.rel_year().map_or(0.0, f64::from)).collect());
    if include_controls {
        for (j, c) in placebo.control_names.iter().enumerate() {
            regs.push(control_name(c), placebo.rows.iter().map(|r| r.controls[j]).collect());
        }
    }
    regs
}

pub fn placebo_test(
    dataset: &PanelDataset,
    spec: &ModelSpec,
    shift_years: u32,
    include_controls: bool,
) -> Result<PlaceboTest> {
    if dataset.n_treated_states() == 0 {
        return Err(Error::Data("placebo test needs at least one treated state".into()));
    }
    let placebo = make_placebo(dataset, shift_years)?;
    let f = fit(&placebo, &placebo_regressors(&placebo, include_controls), spec)?;
    let est = |name: &str| -> Result<Estimate> {
        let i = f.require(name)?;
        Ok(Estimate::new(f.coefficients[i], f.vcov_corrected[(i, i)].sqrt()))
    };
    Ok(PlaceboTest { shift_years, treat_post: est(PLACEBO_POST)?, treat_trend: est(PLACEBO_TREND)?, fit: f })
}
