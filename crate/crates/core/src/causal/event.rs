//! Relative-time event study with broadband interactions.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::control_name;
use crate::panel::PanelDataset;
use crate::ppml::{fit_design, score_bootstrap, Design, FitResult, ModelSpec, Regressors, ScoreBootstrap};
use crate::stats::{wald, Reference, WaldTest};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventStudySpec {
    /// Relative years −pre..=post; the endpoints absorb everything beyond.
    pub pre: u32,
    pub post: u32,
    /// Restrict treatment to one type; `None` uses every treated state.
    pub treatment_type: Option<String>,
    pub include_controls: bool,
    pub interact_broadband: bool,
    /// Draws for the score-bootstrap pre-test; 0 skips it.
    pub bootstrap_reps: usize,
    pub bootstrap_seed: u64,
    pub model: ModelSpec,
}

impl Default for EventStudySpec {
    fn default() -> Self {
        EventStudySpec {
            pre: 7,
            post: 7,
            treatment_type: None,
            include_controls: true,
            interact_broadband: true,
            bootstrap_reps: 999,
            bootstrap_seed: 0,
            model: ModelSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventCoefficient {
    pub rel_year: i32,
    pub coef: f64,
    pub se: f64,
    pub coef_bb: Option<f64>,
    pub se_bb: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EventStudy {
    /// Includes the omitted base year −1 at exactly zero.
    pub coefficients: Vec<EventCoefficient>,
    /// Joint test that every pre-period coefficient is zero, Wald/q against
    /// F(q, G − 1); `None` when the window has no pre-period bins.
    pub pre_test: Option<WaldTest>,
    /// The same restrictions against a wild cluster score bootstrap, which
    /// holds its size when few treated clusters inform the pre-period bins.
    pub pre_test_bootstrap: Option<ScoreBootstrap>,
    pub fit: FitResult,
}

pub const TREATED_BB: &str = "treated_bb";

pub fn rel_name(r: i32) -> String {
    if r < 0 {
        format!("rel_m{}", -r)
    } else {
        format!("rel_p{r}")
    }
}

pub fn rel_bb_name(r: i32) -> String {
    format!("{}_bb", rel_name(r))
}

pub fn event_study(dataset: &PanelDataset, spec: &EventStudySpec) -> Result<EventStudy> {
    if spec.pre < 1 {
        return Err(Error::Range("the window must include the base year -1".into()));
    }
    let type_idx = spec.treatment_type.as_deref().map(|t| dataset.type_index(t)).transpose()?;
    let (lo, hi) = (-(spec.pre as i32), spec.post as i32);
    let treated: Vec<Option<i32>> = dataset
        .rows
        .iter()
        .map(|r| {
            let in_group = type_idx.is_none_or(|k| r.type_flags[k]);
            r.rel_year().filter(|_| in_group).map(|e| e.clamp(lo, hi))
        })
        .collect();
    if treated.iter().all(Option::is_none) {
        return Err(Error::Data("event study needs treated observations".into()));
    }
    for r in lo..=hi {
        if !treated.contains(&Some(r)) {
            return Err(Error::EmptyCell(format!("relative year {r} has no treated observations")));
        }
    }

    let bins: Vec<i32> = (lo..=hi).filter(|&r| r != -1).collect();
    let mut regs = Regressors::default();
    for &r in &bins {
        regs.push(rel_name(r), treated.iter().map(|t| f64::from(u8::from(*t == Some(r)))).collect());
    }
    if spec.interact_broadband {
        for &r in &bins {
            regs.push(
                rel_bb_name(r),
                treated
                    .iter()
                    .zip(&dataset.rows)
                    .map(|(t, row)| if *t == Some(r) { row.broadband_z } else { 0.0 })
                    .collect(),
            );
        }
        regs.push(
            TREATED_BB,
            treated.iter().zip(&dataset.rows).map(|(t, row)| if t.is_some() { row.broadband_z } else { 0.0 }).collect(),
        );
    }
    if spec.include_controls {
        for (j, c) in dataset.control_names.iter().enumerate() {
            regs.push(control_name(c), dataset.rows.iter().map(|r| r.controls[j]).collect());
        }
    }
    let design = Design::from_panel(dataset, &regs, &spec.model)?;
    let f = fit_design(&design, &spec.model.options)?;

    let pick = |name: &str| f.index_of(name).map(|i| (f.coefficients[i], f.vcov_corrected[(i, i)].sqrt()));
    let coefficients = (lo..=hi)
        .map(|r| {
            if r == -1 {
                let bb = spec.interact_broadband.then_some(0.0);
                return EventCoefficient { rel_year: r, coef: 0.0, se: 0.0, coef_bb: bb, se_bb: bb };
            }
            let (coef, se) = pick(&rel_name(r)).unwrap_or((f64::NAN, f64::NAN));
            let bb = spec.interact_broadband.then(|| pick(&rel_bb_name(r)).unwrap_or((f64::NAN, f64::NAN)));
            EventCoefficient { rel_year: r, coef, se, coef_bb: bb.map(|b| b.0), se_bb: bb.map(|b| b.1) }
        })
        .collect();

    let mut pre_names: Vec<String> = (lo..-1).map(rel_name).collect();
    if spec.interact_broadband {
        pre_names.extend((lo..-1).map(rel_bb_name));
    }
    let idx: Vec<usize> = pre_names.iter().filter_map(|n| f.index_of(n)).collect();
    let pre_test = if idx.is_empty() {
        None
    } else {
        let beta = DVector::from_iterator(idx.len(), idx.iter().map(|&i| f.coefficients[i]));
        let v = f.vcov_corrected.select_rows(&idx).select_columns(&idx);
        Some(wald(&beta, &v, Reference::F { denominator: (f.n_clusters as f64 - 1.0).max(1.0) })?)
    };
    let pre_test_bootstrap = if idx.is_empty() || spec.bootstrap_reps == 0 {
        None
    } else {
        let present: Vec<String> = pre_names.into_iter().filter(|n| design.names.contains(n)).collect();
        Some(score_bootstrap(&design, &present, spec.bootstrap_reps, spec.bootstrap_seed, &spec.model.options)?)
    };
    Ok(EventStudy { coefficients, pre_test, pre_test_bootstrap, fit: f })
}
