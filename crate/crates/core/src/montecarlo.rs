//! Replication drivers: parameter recovery and summary statistics.
//!
//! Every replication draws from its own seed derived from (seed, index), so
//! results do not depend on how rayon schedules the work.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causal::{build_design, post_bb_name, post_name, DesignOptions};
use crate::ppml::{fit, ModelSpec};
use crate::stats::Z_975;
use crate::synth::{assign_cohorts, simulate_outcomes, PanelConfig, TrueParameters};
use crate::{Error, Result};

/// SplitMix64 finalizer over the pair.
pub fn replication_seed(seed: u64, rep: usize) -> u64 {
    let mut z = seed ^ (rep as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `f(rep, rep_seed)` for every replication in parallel; output is in
/// replication order.
pub fn replicate<T, F>(reps: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64) -> T + Sync,
{
    (0..reps).into_par_iter().map(|r| f(r, replication_seed(seed, r))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientSummary {
    pub name: String,
    pub truth: f64,
    pub n: usize,
    pub mean: f64,
    pub bias: f64,
    /// Standard deviation of the estimates across replications.
    pub mc_sd: f64,
    pub mean_se: f64,
    /// |bias| / mean_se.
    pub bias_over_se: f64,
    /// Share of 95% intervals covering the truth.
    pub coverage: f64,
}

pub fn summarize(name: &str, truth: f64, draws: &[(f64, f64)]) -> Result<CoefficientSummary> {
    let n = draws.len();
    if n < 2 {
        return Err(Error::Empty(format!("need at least two replications for '{name}'")));
    }
    let nf = n as f64;
    let mean = draws.iter().map(|d| d.0).sum::<f64>() / nf;
    let mc_sd = (draws.iter().map(|d| (d.0 - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    let mean_se = draws.iter().map(|d| d.1).sum::<f64>() / nf;
    let covered = draws.iter().filter(|(b, se)| (b - truth).abs() <= Z_975 * se).count();
    Ok(CoefficientSummary {
        name: name.to_string(),
        truth,
        n,
        mean,
        bias: mean - truth,
        mc_sd,
        mean_se,
        bias_over_se: (mean - truth).abs() / mean_se,
        coverage: covered as f64 / nf,
    })
}

pub fn rejection_rate(p_values: &[f64], alpha: f64) -> f64 {
    p_values.iter().filter(|&&p| p < alpha).count() as f64 / p_values.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoveryStudy {
    pub panel: PanelConfig,
    pub params: TrueParameters,
    /// County effects are `county_mean + N(0, county_sd)`.
    pub county_mean: f64,
    pub county_sd: f64,
    pub year_sd: f64,
    pub reps: usize,
    pub seed: u64,
    pub model: ModelSpec,
}

impl Default for RecoveryStudy {
    fn default() -> Self {
        let panel = PanelConfig::default();
        let mut params = TrueParameters::zero(panel.type_names.len(), 0);
        params.beta1[0] = 0.03;
        params.beta2[0] = -0.006;
        RecoveryStudy {
            panel,
            params,
            county_mean: 3.0,
            county_sd: 1.0,
            year_sd: 0.1,
            reps: 200,
            seed: 2024,
            model: ModelSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryDraw {
    pub beta2: (f64, f64),
    pub beta1: (f64, f64),
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub reps: usize,
    pub failures: usize,
    pub beta1: CoefficientSummary,
    pub beta2: CoefficientSummary,
}

/// One synthetic panel and fit; (estimate, se) of β₂ and β₁ for the first type.
pub fn recovery_draw(study: &RecoveryStudy, seed: u64) -> Result<RecoveryDraw> {
    let panel = PanelConfig { seed, ..study.panel.clone() };
    let params = study.params.clone().with_random_effects(&panel, study.county_mean, study.county_sd, study.year_sd)?;
    let assignment = assign_cohorts(&panel)?;
    let ds = simulate_outcomes(&assignment, &params, &panel)?;
    let regs = build_design(&ds, &panel.type_names, DesignOptions::default())?;
    let f = fit(&ds, &regs, &study.model)?;
    let k = &panel.type_names[0];
    let pick = |name: &str| -> Result<(f64, f64)> {
        let i = f.require(name)?;
        Ok((f.coefficients[i], f.vcov_corrected[(i, i)].sqrt()))
    };
    Ok(RecoveryDraw { beta2: pick(&post_name(k))?, beta1: pick(&post_bb_name(k))?, converged: f.converged })
}

pub fn run_recovery(study: &RecoveryStudy) -> Result<RecoveryReport> {
    study.panel.validate()?;
    study.params.validate(&study.panel)?;
    let draws = replicate(study.reps, study.seed, |_, s| recovery_draw(study, s));
    // Configuration problems surface identically in every replication.
    if let Some(Err(e)) = draws.iter().find(|d| matches!(d, Err(Error::Config(_)))) {
        return Err(Error::Config(e.to_string()));
    }
    let ok: Vec<RecoveryDraw> = draws.into_iter().filter_map(|d| d.ok()).filter(|d| d.converged).collect();
    let failures = study.reps - ok.len();
    let b1: Vec<(f64, f64)> = ok.iter().map(|d| d.beta1).collect();
    let b2: Vec<(f64, f64)> = ok.iter().map(|d| d.beta2).collect();
    Ok(RecoveryReport {
        reps: study.reps,
        failures,
        beta1: summarize("beta1", study.params.beta1[0], &b1)?,
        beta2: summarize("beta2", study.params.beta2[0], &b2)?,
    })
}
