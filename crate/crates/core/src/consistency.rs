//! Closing the loop between the equilibrium model and the estimator: county
//! treatment effects are the model's output response to a binding price
//! floor, evaluated at each county's broadband level, and the pipeline must
//! recover a broadband gradient of the right sign.

use serde::{Deserialize, Serialize};

use crate::causal::{build_design, AttModel, DesignOptions};
use crate::equilibrium::{
    solve_regulated, solve_unregulated, BroadbandResponse, MarketPrimitives, PolicyRegime, PriceControl,
};
use crate::montecarlo::replicate;
use crate::ppml::{fit, ModelSpec};
use crate::synth::{assign_cohorts, simulate_outcomes_with, BroadbandProcess, PanelConfig, TrueParameters};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyStudy {
    pub primitives: MarketPrimitives,
    pub response: BroadbandResponse,
    /// Floor ρ as a multiple of the largest unregulated revenue share over
    /// the broadband levels, so it binds everywhere.
    pub floor_markup: f64,
    pub levels: Vec<f64>,
    #[serde(default)]
    pub panel: PanelConfig,
    pub county_mean: f64,
    pub county_sd: f64,
    pub year_sd: f64,
    pub reps: usize,
    pub seed: u64,
    #[serde(default)]
    pub model: ModelSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectPoint {
    pub broadband_z: f64,
    pub y_unreg: f64,
    pub y_reg: f64,
    pub log_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyDraw {
    pub beta2: f64,
    pub beta1: f64,
    pub att: Vec<f64>,
    pub increasing: bool,
    pub positive_above_one: bool,
}

impl ConsistencyDraw {
    pub fn pass(&self) -> bool {
        self.increasing && self.positive_above_one
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub rho: f64,
    pub effects: Vec<EffectPoint>,
    pub draws: Vec<ConsistencyDraw>,
    pub failures: usize,
    pub pass_fraction: f64,
}

/// Floor level and the regulated/unregulated output ratio at each level.
pub fn equilibrium_effects(study: &ConsistencyStudy) -> Result<(f64, Vec<EffectPoint>)> {
    if study.levels.is_empty() {
        return Err(Error::Config("no broadband levels".into()));
    }
    let mut rho: f64 = 0.0;
    for &b in &study.levels {
        let p = study.response.apply(&study.primitives, b);
        if p.telehealth_supply.elasticity <= p.inperson_supply.elasticity {
            return Err(Error::Config(format!("telehealth supply is not more elastic than in-person at B = {b}")));
        }
        rho = rho.max(solve_unregulated(&p)?.telehealth_unit_revenue());
    }
    let rho = rho * study.floor_markup;
    let regime = PolicyRegime::price(PriceControl::Floor { rho });
    let effects = study
        .levels
        .iter()
        .map(|&b| {
            let p = study.response.apply(&study.primitives, b);
            let u = solve_unregulated(&p)?;
            let r = solve_regulated(&p, &regime)?;
            Ok(EffectPoint {
                broadband_z: b,
                y_unreg: u.quantity,
                y_reg: r.quantity,
                log_ratio: (r.quantity / u.quantity).ln(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rho, effects))
}

pub fn consistency_draw(study: &ConsistencyStudy, effects: &[EffectPoint], seed: u64) -> Result<ConsistencyDraw> {
    let panel = PanelConfig {
        seed,
        broadband: BroadbandProcess { levels: Some(study.levels.clone()), ..study.panel.broadband.clone() },
        ..study.panel.clone()
    };
    let params = TrueParameters::zero(panel.type_names.len(), panel.controls.len()).with_random_effects(
        &panel,
        study.county_mean,
        study.county_sd,
        study.year_sd,
    )?;
    let assignment = assign_cohorts(&panel)?;
    let effect = |b: f64| effects.iter().find(|e| e.broadband_z == b).map_or(0.0, |e| e.log_ratio);
    let ds = simulate_outcomes_with(&assignment, &params, &panel, |row| {
        if row.post && row.type_flags[0] {
            effect(row.broadband_z)
        } else {
            0.0
        }
    })?;
    let k = &panel.type_names[0];
    let regs = build_design(&ds, std::slice::from_ref(k), DesignOptions::default())?;
    let f = fit(&ds, &regs, &study.model)?;
    let m = AttModel::from_fit(&f, k)?;
    let att: Vec<f64> = study.levels.iter().map(|&b| m.att(b).value).collect();
    Ok(ConsistencyDraw {
        beta2: m.beta2,
        beta1: m.beta1,
        increasing: att.windows(2).all(|w| w[1] > w[0]),
        positive_above_one: study.levels.iter().zip(&att).filter(|(b, _)| **b >= 1.0).all(|(_, a)| *a > 0.0),
        att,
    })
}

pub fn run_consistency(study: &ConsistencyStudy) -> Result<ConsistencyReport> {
    let (rho, effects) = equilibrium_effects(study)?;
    let draws = replicate(study.reps, study.seed, |_, s| consistency_draw(study, &effects, s));
    let total = draws.len();
    let draws: Vec<ConsistencyDraw> = draws.into_iter().filter_map(|d| d.ok()).collect();
    let passed = draws.iter().filter(|d| d.pass()).count();
    Ok(ConsistencyReport {
        rho,
        effects,
        failures: total - draws.len(),
        pass_fraction: passed as f64 / total.max(1) as f64,
        draws,
    })
}
