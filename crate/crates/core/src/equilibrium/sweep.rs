use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::elasticity::{eta_difference, eta_regulated, eta_unregulated};
use super::primitives::{MarketPrimitives, PolicyRegime};
use super::solver::{solve_regulated, solve_unregulated};
use crate::error::Result;

/// How primitives respond to the broadband level in a sweep.
///
/// The telehealth supply elasticity is scaled by
/// `exp(telehealth_elasticity_per_sd * B)`, so higher broadband makes
/// telehealth more elastically supplied when the coefficient is positive.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BroadbandResponse {
    #[serde(default)]
    pub telehealth_elasticity_per_sd: f64,
}

impl BroadbandResponse {
    pub fn apply(&self, base: &MarketPrimitives, broadband_z: f64) -> MarketPrimitives {
        let mut p = *base;
        p.demand.broadband_z = broadband_z;
        p.telehealth_supply.elasticity *= (self.telehealth_elasticity_per_sd * broadband_z).exp();
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub regime: String,
    pub broadband_z: f64,
    #[serde(rename = "Y_unreg")]
    pub y_unreg: f64,
    #[serde(rename = "Y_reg")]
    pub y_reg: f64,
    pub shift: f64,
    pub eta_unreg: f64,
    pub eta_reg: f64,
    pub diff_direct: f64,
    pub diff_factorized: f64,
    pub sign_ok: bool,
}

fn sweep_point(
    base: &MarketPrimitives,
    response: &BroadbandResponse,
    regime: &PolicyRegime,
    b: f64,
) -> Result<SweepRow> {
    let p = response.apply(base, b);
    let unreg = solve_unregulated(&p)?;
    let reg = solve_regulated(&p, regime)?;
    let (_, s_i) = unreg.cost_shares();
    let sigma = p.production.substitution;
    let eps_t = p.telehealth_supply.cost_elasticity();
    let eps_i = p.inperson_supply.cost_elasticity();
    let eta_u = eta_unregulated(s_i, sigma, eps_t, eps_i)?;
    let eta_r = eta_regulated(s_i, eps_t, eps_i)?;
    let (diff_direct, diff_factorized, sign_ok) = match eta_difference(s_i, sigma, eps_t, eps_i) {
        Ok(s) => (s.diff_direct, s.diff_factorized, s.sign_matches),
        Err(_) => (f64::NAN, f64::NAN, false),
    };
    Ok(SweepRow {
        regime: regime.label(),
        broadband_z: b,
        y_unreg: unreg.quantity,
        y_reg: reg.quantity,
        shift: reg.quantity - unreg.quantity,
        eta_unreg: eta_u,
        eta_reg: eta_r,
        diff_direct,
        diff_factorized,
        sign_ok,
    })
}

/// Evaluates every `(regime, broadband)` pair. Rows come back in
/// regime-major order regardless of how the work is scheduled.
pub fn sweep(
    base: &MarketPrimitives,
    response: &BroadbandResponse,
    regimes: &[PolicyRegime],
    broadband: &[f64],
) -> Result<Vec<SweepRow>> {
    base.demand.validate_broadband_range(
        broadband.iter().copied().fold(f64::INFINITY, f64::min),
        broadband.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    )?;
    let jobs: Vec<(PolicyRegime, f64)> = regimes.iter().flat_map(|r| broadband.iter().map(move |&b| (*r, b))).collect();
    jobs.par_iter().map(|(r, b)| sweep_point(base, response, r, *b)).collect()
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
