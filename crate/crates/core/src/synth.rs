//! Synthetic staggered-adoption panels with known coefficients.
//!
//! Outcomes are Poisson with mean exp(index), where
//!
//! ```text
//! index = λ_county + γ_year + Σ_k M_k (β2_k Post + β1_k Post·B + β3_k B) + β4 Post·B + β5·X
//! ```
//!
//! so the exponential conditional mean holds exactly. An optional gamma
//! mixing term (mean one) makes the outcomes over-dispersed.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::panel::{PanelDataset, PanelRow};
use crate::{Error, Result};

/// exp(index) above this is rejected.
pub const MAX_MEAN: f64 = 1e12;

const STREAM_ASSIGN: u64 = 1;
const STREAM_COVARIATES: u64 = 2;
const STREAM_EFFECTS: u64 = 3;
const STREAM_OUTCOMES: u64 = 4;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BroadbandProcess {
    pub county_sd: f64,
    pub trend_mean: f64,
    pub trend_sd: f64,
    pub noise_sd: f64,
    /// Standardize the pooled column to mean 0, sd 1.
    pub standardize: bool,
    /// Draw each county's broadband once from these levels, constant over
    /// time and not standardized. Overrides the trend process.
    pub levels: Option<Vec<f64>>,
}

impl Default for BroadbandProcess {
    fn default() -> Self {
        BroadbandProcess {
            county_sd: 1.0,
            trend_mean: 0.15,
            trend_sd: 0.05,
            noise_sd: 0.2,
            standardize: true,
            levels: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGenerator {
    pub name: String,
    /// Mean and sd of the log level.
    pub log_mean: f64,
    pub log_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelConfig {
    pub n_states: usize,
    pub counties_per_state: usize,
    pub first_year: i32,
    pub last_year: i32,
    pub cohort_years: Vec<i32>,
    pub never_treated_fraction: f64,
    pub type_names: Vec<String>,
    /// Explicit state → type index; unlisted treated states cycle through types.
    pub treatment_type_assignment: BTreeMap<u32, usize>,
    pub broadband: BroadbandProcess,
    pub controls: Vec<ControlGenerator>,
    pub metro_fraction: f64,
    /// Gamma mixing shape; `None` for pure Poisson outcomes.
    pub dispersion: Option<f64>,
    pub seed: u64,
}

impl Default for PanelConfig {
    fn default() -> Self {
        PanelConfig {
            n_states: 50,
            counties_per_state: 20,
            first_year: 2008,
            last_year: 2017,
            cohort_years: (2012..=2017).collect(),
            never_treated_fraction: 0.5,
            type_names: vec!["price_floor".into()],
            treatment_type_assignment: BTreeMap::new(),
            broadband: BroadbandProcess::default(),
            controls: Vec::new(),
            metro_fraction: 0.35,
            dispersion: None,
            seed: 0,
        }
    }
}

impl PanelConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.n_states == 0 || self.counties_per_state == 0 {
            return cfg("need at least one state and one county per state".into());
        }
        if self.first_year > self.last_year {
            return cfg(format!("empty year range {}..={}", self.first_year, self.last_year));
        }
        if !(0.0..=1.0).contains(&self.never_treated_fraction) {
            return cfg(format!("never_treated_fraction {} outside [0, 1]", self.never_treated_fraction));
        }
        if self.cohort_years.is_empty() && self.never_treated_fraction < 1.0 {
            return cfg("no cohort years but some states must be treated".into());
        }
        if let Some(c) = self.cohort_years.iter().find(|&&c| c < self.first_year || c > self.last_year) {
            return cfg(format!("cohort year {c} outside the panel years"));
        }
        if self.type_names.is_empty() {
            return cfg("at least one treatment type is required".into());
        }
        if let Some((s, k)) = self.treatment_type_assignment.iter().find(|(_, &k)| k >= self.type_names.len()) {
            return cfg(format!("state {s} assigned to unknown type index {k}"));
        }
        if !(0.0..=1.0).contains(&self.metro_fraction) {
            return cfg(format!("metro_fraction {} outside [0, 1]", self.metro_fraction));
        }
        if let Some(d) = self.dispersion {
            if !(d.is_finite() && d > 0.0) {
                return cfg(format!("dispersion shape must be positive, got {d}"));
            }
        }
        let b = &self.broadband;
        if [b.county_sd, b.trend_sd, b.noise_sd].iter().any(|&s| !(s.is_finite() && s >= 0.0)) {
            return cfg("broadband dispersions must be nonnegative".into());
        }
        if b.levels.as_ref().is_some_and(|l| l.is_empty() || l.iter().any(|v| !v.is_finite())) {
            return cfg("broadband levels must be a nonempty list of finite values".into());
        }
        if self.controls.iter().any(|c| !(c.log_sd.is_finite() && c.log_sd >= 0.0 && c.log_mean.is_finite())) {
            return cfg("control generators need finite log_mean and nonnegative log_sd".into());
        }
        Ok(())
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.first_year..=self.last_year
    }

    pub fn county_id(&self, state: u32, j: usize) -> u32 {
        (state - 1) * self.counties_per_state as u32 + j as u32 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateAssignment {
    pub state_id: u32,
    pub cohort_year: Option<i32>,
    /// Treatment type index; `None` for never-treated states.
    pub treatment_type: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentAssignment {
    pub states: Vec<StateAssignment>,
}

impl TreatmentAssignment {
    pub fn n_never_treated(&self) -> usize {
        self.states.iter().filter(|s| s.cohort_year.is_none()).count()
    }

    pub fn get(&self, state_id: u32) -> Option<&StateAssignment> {
        self.states.iter().find(|s| s.state_id == state_id)
    }
}

/// Shuffles states, marks a rounded fraction never-treated and spreads the
/// rest evenly over the cohort years.
pub fn assign_cohorts(config: &PanelConfig) -> Result<TreatmentAssignment> {
    config.validate()?;
    let mut rng = rng_for(config.seed, STREAM_ASSIGN);
    let mut ids: Vec<u32> = (1..=config.n_states as u32).collect();
    ids.shuffle(&mut rng);
    let n_never = (config.n_states as f64 * config.never_treated_fraction).round() as usize;
    let k = config.type_names.len();
    let mut states: Vec<StateAssignment> = ids
        .iter()
        .enumerate()
        .map(|(pos, &id)| {
            if pos < n_never {
                StateAssignment { state_id: id, cohort_year: None, treatment_type: None }
            } else {
                let i = pos - n_never;
                StateAssignment {
                    state_id: id,
                    cohort_year: Some(config.cohort_years[i % config.cohort_years.len()]),
                    treatment_type: Some(config.treatment_type_assignment.get(&id).copied().unwrap_or(i % k)),
                }
            }
        })
        .collect();
    states.sort_by_key(|s| s.state_id);
    Ok(TreatmentAssignment { states })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrueParameters {
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub beta3: Vec<f64>,
    pub beta4: f64,
    pub beta5: Vec<f64>,
    /// Missing counties and years contribute 0.
    pub county_effects: BTreeMap<u32, f64>,
    pub year_effects: BTreeMap<i32, f64>,
}

impl Default for TrueParameters {
    fn default() -> Self {
        TrueParameters::zero(1, 0)
    }
}

impl TrueParameters {
    pub fn zero(n_types: usize, n_controls: usize) -> Self {
        TrueParameters {
            beta1: vec![0.0; n_types],
            beta2: vec![0.0; n_types],
            beta3: vec![0.0; n_types],
            beta4: 0.0,
            beta5: vec![0.0; n_controls],
            county_effects: BTreeMap::new(),
            year_effects: BTreeMap::new(),
        }
    }

    /// Fills county effects with `base + N(0, county_sd)` and year effects
    /// with `N(0, year_sd)`.
    pub fn with_random_effects(
        mut self,
        config: &PanelConfig,
        base: f64,
        county_sd: f64,
        year_sd: f64,
    ) -> Result<Self> {
        let county = Normal::new(base, county_sd).map_err(|e| Error::Config(e.to_string()))?;
        let year = Normal::new(0.0, year_sd).map_err(|e| Error::Config(e.to_string()))?;
        let mut rng = rng_for(config.seed, STREAM_EFFECTS);
        self.county_effects = (1..=config.n_states as u32)
            .flat_map(|s| (0..config.counties_per_state).map(move |j| (s, j)))
            .map(|(s, j)| (config.county_id(s, j), county.sample(&mut rng)))
            .collect();
        self.year_effects = config.years().map(|t| (t, year.sample(&mut rng))).collect();
        Ok(self)
    }

    pub fn validate(&self, config: &PanelConfig) -> Result<()> {
        let k = config.type_names.len();
        if self.beta1.len() != k || self.beta2.len() != k || self.beta3.len() != k {
            return Err(Error::Config(format!("coefficient vectors must have one entry per treatment type ({k})")));
        }
        if self.beta5.len() != config.controls.len() {
            return Err(Error::Config(format!(
                "beta5 has {} entries for {} controls",
                self.beta5.len(),
                config.controls.len()
            )));
        }
        let all = self.beta1.iter().chain(&self.beta2).chain(&self.beta3).chain(&self.beta5);
        if all
            .chain([&self.beta4])
            .chain(self.county_effects.values())
            .chain(self.year_effects.values())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Config("non-finite true parameter".into()));
        }
        Ok(())
    }

    /// Linear index for a row, excluding any extra effect.
    pub fn index(&self, row: &PanelRow) -> f64 {
        let post = f64::from(u8::from(row.post));
        let b = row.broadband_z;
        let mut idx = self.county_effects.get(&row.county_id).copied().unwrap_or(0.0)
            + self.year_effects.get(&row.year).copied().unwrap_or(0.0)
            + self.beta4 * post * b;
        for (k, &m) in row.type_flags.iter().enumerate() {
            if m {
                idx += self.beta2[k] * post + self.beta1[k] * post * b + self.beta3[k] * b;
            }
        }
        idx + self.beta5.iter().zip(&row.controls).map(|(c, x)| c * x).sum::<f64>()
    }
}

/// Covariates and treatment flags for every county-year; outcomes are zero.
pub fn generate_covariates(assignment: &TreatmentAssignment, config: &PanelConfig) -> Result<PanelDataset> {
    config.validate()?;
    let mut rng = rng_for(config.seed, STREAM_COVARIATES);
    let bb = &config.broadband;
    let county_level = Normal::new(0.0, bb.county_sd).map_err(|e| Error::Config(e.to_string()))?;
    let county_trend = Normal::new(bb.trend_mean, bb.trend_sd).map_err(|e| Error::Config(e.to_string()))?;
    let noise = Normal::new(0.0, bb.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    let controls = config
        .controls
        .iter()
        .map(|c| LogNormal::new(c.log_mean, c.log_sd).map_err(|e| Error::Config(e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let k = config.type_names.len();

    let mut rows = Vec::with_capacity(config.n_states * config.counties_per_state * config.years().count());
    for s in 1..=config.n_states as u32 {
        let a = assignment.get(s).ok_or_else(|| Error::Config(format!("state {s} missing from the assignment")))?;
        let mut flags = vec![false; k];
        if let Some(t) = a.treatment_type {
            *flags.get_mut(t).ok_or_else(|| Error::Config(format!("unknown type index {t}")))? = true;
        }
        for j in 0..config.counties_per_state {
            let county_id = config.county_id(s, j);
            let metro = rng.random::<f64>() < config.metro_fraction;
            let (level, trend) = match &bb.levels {
                Some(levels) => (levels[rng.random_range(0..levels.len())], 0.0),
                None => (county_level.sample(&mut rng), county_trend.sample(&mut rng)),
            };
            for year in config.years() {
                let broadband_z = match bb.levels {
                    Some(_) => level,
                    None => level + trend * f64::from(year - config.first_year) + noise.sample(&mut rng),
                };
                rows.push(PanelRow {
                    county_id,
                    state_id: s,
                    year,
                    outcome: 0,
                    cohort_year: a.cohort_year,
                    post: a.cohort_year.is_some_and(|c| year >= c),
                    broadband_z,
                    metro,
                    cluster_id: s,
                    type_flags: flags.clone(),
                    controls: controls.iter().map(|d| d.sample(&mut rng).ln()).collect(),
                });
            }
        }
    }
    if bb.levels.is_none() && bb.standardize {
        let n = rows.len() as f64;
        let mean = rows.iter().map(|r| r.broadband_z).sum::<f64>() / n;
        let sd = (rows.iter().map(|r| (r.broadband_z - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        if !(sd > 0.0) {
            return Err(Error::Degenerate("broadband process has zero variance".into()));
        }
        for r in &mut rows {
            r.broadband_z = (r.broadband_z - mean) / sd;
        }
    }
    Ok(PanelDataset {
        type_names: config.type_names.clone(),
        control_names: config.controls.iter().map(|c| c.name.clone()).collect(),
        rows,
    })
}

pub fn simulate_outcomes(
    assignment: &TreatmentAssignment,
    params: &TrueParameters,
    config: &PanelConfig,
) -> Result<PanelDataset> {
    simulate_outcomes_with(assignment, params, config, |_| 0.0)
}

/// As [`simulate_outcomes`], adding `extra(row)` to each row's index. Used to
/// inject pre-trends, misspecification or externally computed effects.
pub fn simulate_outcomes_with(
    assignment: &TreatmentAssignment,
    params: &TrueParameters,
    config: &PanelConfig,
    extra: impl Fn(&PanelRow) -> f64,
) -> Result<PanelDataset> {
    params.validate(config)?;
    let mut ds = generate_covariates(assignment, config)?;
    let mut rng = rng_for(config.seed, STREAM_OUTCOMES);
    let mixing =
        config.dispersion.map(|k| Gamma::new(k, 1.0 / k).map_err(|e| Error::Config(e.to_string()))).transpose()?;
    for row in &mut ds.rows {
        let index = params.index(row) + extra(row);
        row.outcome = draw_count(index, mixing.as_ref(), &mut rng)?;
    }
    Ok(ds)
}

pub(crate) fn draw_count<R: Rng + ?Sized>(index: f64, mixing: Option<&Gamma<f64>>, rng: &mut R) -> Result<u64> {
    if !index.is_finite() || index > MAX_MEAN.ln() {
        return Err(Error::Overflow(index));
    }
    let mut mean = index.exp();
    if let Some(g) = mixing {
        mean *= g.sample(rng);
    }
    if mean < 1e-300 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::Domain(format!("poisson mean {mean}: {e}")))?;
    Ok(d.sample(rng) as u64)
}

/// Drops states first treated before `first_allowed` (always treated in the
/// window) and relabels states treated after `last_allowed` as never treated.
pub fn apply_sample_window(dataset: &PanelDataset, first_allowed: i32, last_allowed: i32) -> Result<PanelDataset> {
    if first_allowed > last_allowed {
        return Err(Error::Range(format!("empty cohort window {first_allowed}..={last_allowed}")));
    }
    let k = dataset.type_names.len();
    let rows: Vec<PanelRow> = dataset
        .rows
        .iter()
        .filter(|r| !r.cohort_year.is_some_and(|c| c < first_allowed))
        .map(|r| {
            let mut r = r.clone();
            if r.cohort_year.is_some_and(|c| c > last_allowed) {
                r.cohort_year = None;
                r.post = false;
                r.type_flags = vec![false; k];
            }
            r
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::Empty("the cohort window removes every row".into()));
    }
    Ok(PanelDataset { rows, ..dataset.clone_header() })
}

/// Pre-treatment panel with treatment moved `shift_years` earlier: rows at or
/// after the true adoption year are dropped and `cohort_year`/`post` describe
/// the fictitious adoption.
pub fn make_placebo(dataset: &PanelDataset, shift_years: u32) -> Result<PanelDataset> {
    if shift_years == 0 {
        return Err(Error::Range("placebo shift must be at least one year".into()));
    }
    let Some((first, _)) = dataset.year_range() else {
        return Err(Error::Empty("empty panel".into()));
    };
    let shift = shift_years as i32;
    let mut rows = Vec::with_capacity(dataset.rows.len());
    for r in &dataset.rows {
        match r.cohort_year {
            None => rows.push(r.clone()),
            Some(c) if r.year < c => {
                let fake = c - shift;
                if fake <= first {
                    return Err(Error::Range(format!(
                        "cohort {c} shifted by {shift_years} leaves no pre-period before {fake}"
                    )));
                }
                let mut r = r.clone();
                r.cohort_year = Some(fake);
                r.post = r.year >= fake;
                rows.push(r);
            }
            Some(_) => {}
        }
    }
    if dataset.n_treated_states() > 0 && !rows.iter().any(|r| r.is_treated()) {
        return Err(Error::Range("no pre-treatment rows remain for treated states".into()));
    }
    Ok(PanelDataset { rows, ..dataset.clone_header() })
}

impl PanelDataset {
    fn clone_header(&self) -> PanelDataset {
        PanelDataset {
            type_names: self.type_names.clone(),
            control_names: self.control_names.clone(),
            rows: Vec::new(),
        }
    }
}
