//! Interaction design and the causal quantities derived from a fit:
//! ATT(B) = exp(β₂ + β₁B) − 1, its broadband derivative (ACRT), event
//! studies and placebo tests.

mod event;
mod placebo;

use std::io;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::panel::PanelDataset;
use crate::ppml::{FitResult, Regressors};
use crate::stats::{normal_two_sided_p, Z_975};
use crate::{Error, Result};

pub use event::{event_study, rel_bb_name, rel_name, EventCoefficient, EventStudy, EventStudySpec, TREATED_BB};
pub use placebo::{placebo_regressors, placebo_test, PlaceboRecord, PlaceboTest, PLACEBO_POST, PLACEBO_TREND};

pub const DEFAULT_LEVELS: [f64; 6] = [0.0, 1.0, 2.0, 4.0, 8.0, 12.0];

pub fn post_name(k: &str) -> String {
    format!("{k}_post")
}

pub fn post_bb_name(k: &str) -> String {
    format!("{k}_post_bb")
}

pub fn bb_name(k: &str) -> String {
    format!("{k}_bb")
}

pub const POST_BB: &str = "post_bb";

pub fn control_name(c: &str) -> String {
    format!("ctrl_{c}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignOptions {
    /// Add M·Post·B, M·B and Post·B; otherwise only M·Post.
    pub include_triple: bool,
    pub include_controls: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions { include_triple: true, include_controls: true }
    }
}

/// Materializes M_k·Post, M_k·Post·B, M_k·B (per type), Post·B and controls.
pub fn build_design(dataset: &PanelDataset, types: &[String], options: DesignOptions) -> Result<Regressors> {
    let idx = types
        .iter()
        .map(|t| dataset.type_index(t).map_err(|_| Error::Data(format!("missing column 'type_{t}'"))))
        .collect::<Result<Vec<_>>>()?;
    let post: Vec<f64> = dataset.rows.iter().map(|r| f64::from(u8::from(r.post))).collect();
    let bb: Vec<f64> = dataset.rows.iter().map(|r| r.broadband_z).collect();
    let mut out = Regressors::default();
    for (t, &k) in types.iter().zip(&idx) {
        let m: Vec<f64> = dataset.rows.iter().map(|r| f64::from(u8::from(r.type_flags[k]))).collect();
        out.push(post_name(t), m.iter().zip(&post).map(|(m, p)| m * p).collect());
        if options.include_triple {
            out.push(post_bb_name(t), (0..m.len()).map(|i| m[i] * post[i] * bb[i]).collect());
            out.push(bb_name(t), m.iter().zip(&bb).map(|(m, b)| m * b).collect());
        }
    }
    if options.include_triple {
        out.push(POST_BB, post.iter().zip(&bb).map(|(p, b)| p * b).collect());
    }
    if options.include_controls {
        for (j, c) in dataset.control_names.iter().enumerate() {
            out.push(control_name(c), dataset.rows.iter().map(|r| r.controls[j]).collect());
        }
    }
    Ok(out)
}

/// A point estimate with delta-method inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    pub fn new(value: f64, se: f64) -> Self {
        let z = value / se;
        Estimate { value, se, z, p: normal_two_sided_p(z), ci_low: value - Z_975 * se, ci_high: value + Z_975 * se }
    }
}

/// (β₂, β₁) for one treatment type with their covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttModel {
    pub beta2: f64,
    pub beta1: f64,
    /// Covariance of (β₂, β₁).
    pub vcov: Matrix2<f64>,
}

impl AttModel {
    pub fn from_fit(fit: &FitResult, k: &str) -> Result<Self> {
        let (p, pb) = (post_name(k), post_bb_name(k));
        let i2 = fit.require(&p)?;
        let i1 = fit.require(&pb)?;
        let v = &fit.vcov_corrected;
        Ok(AttModel {
            beta2: fit.coefficients[i2],
            beta1: fit.coefficients[i1],
            vcov: Matrix2::new(v[(i2, i2)], v[(i2, i1)], v[(i1, i2)], v[(i1, i1)]),
        })
    }

    /// Backs (β₂, β₁) out of ATT at B = 0 and B = 1.
    pub fn from_att_pair(att0: f64, att1: f64) -> Result<Self> {
        if !(att0 > -1.0 && att1 > -1.0) {
            return Err(Error::domain(format!("ATT values must exceed -1, got {att0}, {att1}")));
        }
        let beta2 = att0.ln_1p();
        Ok(AttModel { beta2, beta1: att1.ln_1p() - beta2, vcov: Matrix2::zeros() })
    }

    fn se(&self, grad: Vector2<f64>) -> f64 {
        (grad.transpose() * self.vcov * grad)[(0, 0)].max(0.0).sqrt()
    }

    pub fn att(&self, b: f64) -> Estimate {
        let e = (self.beta2 + self.beta1 * b).exp();
        Estimate::new(e - 1.0, self.se(Vector2::new(e, b * e)))
    }

    /// ∂ATT/∂B = β₁·exp(β₂ + β₁B).
    pub fn acrt(&self, b: f64) -> Estimate {
        let e = (self.beta2 + self.beta1 * b).exp();
        Estimate::new(self.beta1 * e, self.se(Vector2::new(self.beta1 * e, e * (1.0 + self.beta1 * b))))
    }

    /// The triple-interaction coefficient itself.
    pub fn acrt_raw(&self) -> Estimate {
        Estimate::new(self.beta1, self.vcov[(1, 1)].max(0.0).sqrt())
    }

    /// ATT(1) − ATT(0) − ACRT(0).
    pub fn taylor_gap(&self) -> f64 {
        self.att(1.0).value - self.att(0.0).value - self.acrt(0.0).value
    }
}

pub fn att_at(fit: &FitResult, k: &str, b: f64) -> Result<Estimate> {
    Ok(AttModel::from_fit(fit, k)?.att(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Acrt {
    pub derivative: Estimate,
    pub raw: Estimate,
}

pub fn acrt(fit: &FitResult, k: &str, b: f64) -> Result<Acrt> {
    let m = AttModel::from_fit(fit, k)?;
    Ok(Acrt { derivative: m.acrt(b), raw: m.acrt_raw() })
}

/// exp(β₂) − 1; needs only the treat×post coefficient.
pub fn att_percent(fit: &FitResult, k: &str) -> Result<f64> {
    Ok(fit.coefficients[fit.require(&post_name(k))?].exp() - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub policy_type: String,
    pub metric: String,
    pub coefficient: f64,
    pub std_error: f64,
    pub z: f64,
    pub p: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl TableRow {
    pub fn new(policy_type: &str, metric: impl Into<String>, e: Estimate) -> Self {
        TableRow {
            policy_type: policy_type.to_string(),
            metric: metric.into(),
            coefficient: e.value,
            std_error: e.se,
            z: e.z,
            p: e.p,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CausalSummary {
    pub policy_type: String,
    pub levels: Vec<f64>,
    pub att: Vec<Estimate>,
    pub acrt_at: f64,
    pub acrt: Estimate,
    pub acrt_raw: Estimate,
    pub taylor_gap: f64,
}

impl CausalSummary {
    /// One row per broadband level, then the ACRT row.
    pub fn rows(&self) -> Vec<TableRow> {
        let mut rows: Vec<TableRow> = self
            .levels
            .iter()
            .zip(&self.att)
            .map(|(b, e)| TableRow::new(&self.policy_type, format!("ATT(B={b})"), *e))
            .collect();
        rows.push(TableRow::new(&self.policy_type, format!("ACRT(B={})", self.acrt_at), self.acrt));
        rows
    }
}

pub fn att_table(fit: &FitResult, k: &str, levels: &[f64], acrt_at: f64) -> Result<CausalSummary> {
    let m = AttModel::from_fit(fit, k)?;
    Ok(CausalSummary {
        policy_type: k.to_string(),
        levels: levels.to_vec(),
        att: levels.iter().map(|&b| m.att(b)).collect(),
        acrt_at,
        acrt: m.acrt(acrt_at),
        acrt_raw: m.acrt_raw(),
        taylor_gap: m.taylor_gap(),
    })
}

pub fn write_table_csv<W: io::Write>(rows: &[TableRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(beta2: f64, beta1: f64) -> AttModel {
        AttModel { beta2, beta1, vcov: Matrix2::new(0.0004, 0.00005, 0.00005, 0.0001) }
    }

    #[test]
    fn att_examples() {
        let m = model(-0.005817, 0.032751);
        assert!((m.att(0.0).value + 0.0058).abs() < 5e-5);
        assert!((m.att(2.0).value - 0.0614).abs() < 0.002);
        let null = model(0.0, 0.0);
        assert_eq!(null.att(3.0).value, 0.0);
        // Gradient (1, B) at the null.
        let se = (0.0004_f64 + 2.0 * 3.0 * 0.00005 + 9.0 * 0.0001).sqrt();
        assert!((null.att(3.0).se - se).abs() < 1e-15);
    }

    #[test]
    fn acrt_examples() {
        let m = model(-0.005817, 0.032751);
        assert!((m.acrt(0.0).value - 0.03256).abs() < 1e-5);
        assert!((m.att(1.0).value - m.att(0.0).value - 0.0331).abs() < 1e-4);
        assert!((m.taylor_gap() - 0.0005).abs() < 1e-4);
        assert_eq!(model(0.3, 0.0).acrt(5.0).value, 0.0);
        let small = model(0.0, 0.01);
        assert!((small.acrt(0.0).value - 0.01).abs() <= 0.01 * 0.01);
    }

    #[test]
    fn back_out_reproduces_inputs() {
        let m = AttModel::from_att_pair(-0.0058, 0.0273).unwrap();
        assert!((m.att(0.0).value + 0.0058).abs() < 1e-15);
        assert!((m.att(1.0).value - 0.0273).abs() < 1e-15);
        assert!(AttModel::from_att_pair(-1.0, 0.0).is_err());
    }

    #[test]
    fn percent_att_example() {
        assert!(((1.0270_f64).ln().exp() - 1.0 - 0.0270).abs() < 1e-15);
    }

    #[test]
    fn estimate_interval_is_symmetric() {
        let e = Estimate::new(0.1, 0.05);
        assert!((e.ci_high - e.value - Z_975 * 0.05).abs() < 1e-15);
        assert!((e.value - e.ci_low - Z_975 * 0.05).abs() < 1e-15);
        assert!((e.z - 2.0).abs() < 1e-15);
    }
}
