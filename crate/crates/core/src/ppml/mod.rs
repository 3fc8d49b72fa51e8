//! Poisson pseudo-maximum likelihood with absorbed fixed effects.
//!
//! IRLS on the working response z = η + (y − μ)/μ; each step profiles the
//! fixed effects out of z and X by weighted demeaning with weights μ, so only
//! the (small) coefficient system is ever solved densely.

mod demean;
mod reset;
mod score;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::panel::{GroupCodes, PanelDataset};
use crate::{Error, Result};

pub use demean::{absorb, DemeanOptions};
pub use reset::{reset_test, reset_test_design, ResetTest};
pub use score::{score_bootstrap, ScoreBootstrap};

use demean::absorb_in_place;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeDimension {
    County,
    Year,
    State,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterBy {
    /// The panel's `cluster_id` column.
    Cluster,
    State,
    County,
    /// Heteroskedasticity-robust (each row its own cluster).
    Row,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Relative deviance change.
    pub dev_tol: f64,
    /// Max absolute coefficient step.
    pub coef_tol: f64,
    pub max_iter: usize,
    pub demean: DemeanOptions,
    /// Columns whose absorbed squared norm falls below this fraction of the
    /// raw squared norm, after projecting out earlier columns, are dropped.
    pub collinear_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            dev_tol: 1e-9,
            coef_tol: 1e-8,
            max_iter: 100,
            demean: DemeanOptions::default(),
            collinear_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub absorb: Vec<FeDimension>,
    pub cluster: ClusterBy,
    pub options: FitOptions,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            absorb: vec![FeDimension::County, FeDimension::Year],
            cluster: ClusterBy::Cluster,
            options: FitOptions::default(),
        }
    }
}

/// Named, materialized regressor columns aligned with a panel's rows.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Regressors {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Regressors {
    pub fn push(&mut self, name: impl Into<String>, column: Vec<f64>) {
        self.names.push(name.into());
        self.columns.push(column);
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn to_matrix(&self, n: usize) -> Result<DMatrix<f64>> {
        if let Some((name, _)) = self.names.iter().zip(&self.columns).find(|(_, c)| c.len() != n) {
            return Err(Error::Data(format!("regressor '{name}' does not have {n} rows")));
        }
        Ok(DMatrix::from_fn(n, self.columns.len(), |i, j| self.columns[j][i]))
    }
}

/// Everything the estimator needs, detached from the panel layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    pub fe: Vec<GroupCodes>,
    /// `None` gives the heteroskedasticity-robust sandwich.
    pub cluster: Option<GroupCodes>,
}

impl Design {
    pub fn from_panel(dataset: &PanelDataset, regressors: &Regressors, spec: &ModelSpec) -> Result<Design> {
        let fe = spec
            .absorb
            .iter()
            .map(|d| match d {
                FeDimension::County => dataset.county_codes(),
                FeDimension::Year => dataset.year_codes(),
                FeDimension::State => dataset.state_codes(),
            })
            .collect();
        let cluster = match spec.cluster {
            ClusterBy::Cluster => Some(dataset.cluster_codes()),
            ClusterBy::State => Some(dataset.state_codes()),
            ClusterBy::County => Some(dataset.county_codes()),
            ClusterBy::Row => None,
        };
        Ok(Design {
            y: dataset.outcomes(),
            x: regressors.to_matrix(dataset.len())?,
            names: regressors.names.clone(),
            fe,
            cluster,
        })
    }

    fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if n == 0 {
            return Err(Error::Empty("no observations".into()));
        }
        if self.x.ncols() == 0 {
            return Err(Error::Rank("no regressors".into()));
        }
        if self.x.nrows() != n || self.names.len() != self.x.ncols() {
            return Err(Error::Data("design dimensions disagree".into()));
        }
        if self.fe.iter().chain(&self.cluster).any(|g| g.len() != n) {
            return Err(Error::Data("group codes do not match the number of rows".into()));
        }
        if let Some(y) = self.y.iter().find(|y| !(y.is_finite() && **y >= 0.0)) {
            return Err(Error::Data(format!("outcomes must be nonnegative, got {y}")));
        }
        if self.x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite regressor value".into()));
        }
        Ok(())
    }

    fn subset(&self, keep: &[usize]) -> Design {
        Design {
            y: keep.iter().map(|&i| self.y[i]).collect(),
            x: self.x.select_rows(keep),
            names: self.names.clone(),
            fe: self.fe.iter().map(|g| g.subset(keep)).collect(),
            cluster: self.cluster.as_ref().map(|g| g.subset(keep)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Retained regressors, in input order.
    pub names: Vec<String>,
    pub dropped_collinear: Vec<String>,
    pub coefficients: DVector<f64>,
    /// Cluster sandwich without small-sample correction.
    pub vcov_cluster: DMatrix<f64>,
    /// `vcov_cluster` × G/(G−1) · (N−1)/(N−K).
    pub vcov_corrected: DMatrix<f64>,
    pub small_sample_factor: f64,
    /// Indices of the estimation rows in the input.
    pub rows: Vec<usize>,
    pub linear_index: Vec<f64>,
    pub fitted_mean: Vec<f64>,
    pub deviance: f64,
    pub n_obs: usize,
    pub n_clusters: usize,
    pub n_dropped_separated: usize,
    pub n_dropped_collinear: usize,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn coef(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.coefficients[i])
    }

    pub fn se(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.vcov_corrected[(i, i)].sqrt())
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name).ok_or_else(|| Error::CoefficientMissing(name.to_string()))
    }

    /// Sub-block of the corrected covariance for the named coefficients.
    pub fn vcov_block(&self, names: &[&str]) -> Result<DMatrix<f64>> {
        let idx = names.iter().map(|n| self.require(n)).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.vcov_corrected[(idx[a], idx[b])]))
    }
}

pub fn poisson_deviance(y: &[f64], mu: &[f64]) -> f64 {
    2.0 * y.iter().zip(mu).map(|(&y, &m)| if y > 0.0 { y * (y / m).ln() - (y - m) } else { m }).sum::<f64>()
}

/// Rows kept after iteratively removing zero-outcome rows that sit in a
/// fixed-effect cell whose outcomes are all zero.
pub fn separated_rows(y: &[f64], fe: &[GroupCodes]) -> Vec<usize> {
    let mut keep: Vec<usize> = (0..y.len()).collect();
    loop {
        let before = keep.len();
        for g in fe {
            let mut sums = vec![0.0; g.n_levels];
            for &i in &keep {
                sums[g.codes[i] as usize] += y[i];
            }
            keep.retain(|&i| sums[g.codes[i] as usize] > 0.0);
        }
        if keep.len() == before {
            return keep;
        }
    }
}

/// Panel-level separation purge; returns the reduced panel and dropped row ids.
pub fn drop_separated(dataset: &PanelDataset, spec: &ModelSpec) -> (PanelDataset, Vec<usize>) {
    let design = Design::from_panel(dataset, &Regressors::default(), spec).expect("no regressors to misalign");
    let keep = separated_rows(&design.y, &design.fe);
    let mut mask = vec![false; dataset.len()];
    for &i in &keep {
        mask[i] = true;
    }
    let dropped = (0..dataset.len()).filter(|&i| !mask[i]).collect();
    (dataset.select(&keep), dropped)
}

pub fn fit(dataset: &PanelDataset, regressors: &Regressors, spec: &ModelSpec) -> Result<FitResult> {
    fit_design(&Design::from_panel(dataset, regressors, spec)?, &spec.options)
}

/// Sequential Cholesky on the weighted Gram matrix of the absorbed columns,
/// keeping columns in input order.
fn independent_columns(xt: &DMatrix<f64>, raw: &DMatrix<f64>, w: &[f64], tol: f64) -> Vec<usize> {
    let p = xt.ncols();
    let gram = weighted_gram(xt, w);
    let mut kept: Vec<usize> = Vec::new();
    let mut l = DMatrix::<f64>::zeros(p, p);
    for j in 0..p {
        let raw_norm: f64 = raw.column(j).iter().zip(w).map(|(x, w)| w * x * x).sum();
        if raw_norm == 0.0 {
            continue;
        }
        let mut v = gram[(j, j)];
        for (a, &k) in kept.iter().enumerate() {
            let mut s = gram[(j, k)];
            for &m in &kept[..a] {
                s -= l[(j, m)] * l[(k, m)];
            }
            l[(j, k)] = s / l[(k, k)];
            v -= l[(j, k)] * l[(j, k)];
        }
        if v > tol * raw_norm {
            l[(j, j)] = v.sqrt();
            kept.push(j);
        }
    }
    kept
}

fn weighted_gram(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let p = x.ncols();
    let mut g = DMatrix::zeros(p, p);
    for a in 0..p {
        let ca = x.column(a);
        for b in 0..=a {
            let cb = x.column(b);
            let s: f64 = ca.iter().zip(cb.iter()).zip(w).map(|((u, v), w)| w * u * v).sum();
            g[(a, b)] = s;
            g[(b, a)] = s;
        }
    }
    g
}

fn weighted_xty(x: &DMatrix<f64>, w: &[f64], z: &[f64]) -> DVector<f64> {
    DVector::from_fn(x.ncols(), |j, _| x.column(j).iter().zip(w).zip(z).map(|((x, w), z)| w * x * z).sum())
}

fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.clone().cholesky().map(|c| c.solve(b)).ok_or_else(|| Error::Singular("weighted normal equations".into()))
}

pub fn fit_design(design: &Design, opts: &FitOptions) -> Result<FitResult> {
    design.validate()?;
    let n_input = design.y.len();
    let rows = separated_rows(&design.y, &design.fe);
    if rows.is_empty() {
        return Err(Error::AllSeparated("every observation lies in an all-zero fixed-effect cell".into()));
    }
    let d = design.subset(&rows);
    let informative_before: Vec<bool> =
        (0..design.x.ncols()).map(|j| design.x.column(j).iter().any(|&v| v != 0.0)).collect();
    let informative_after: Vec<bool> = (0..d.x.ncols()).map(|j| d.x.column(j).iter().any(|&v| v != 0.0)).collect();
    if informative_before.iter().any(|&b| b) && !informative_after.iter().any(|&b| b) {
        return Err(Error::AllSeparated("separation removed every row carrying regressor variation".into()));
    }
    let n = d.y.len();

    // Warm start: least squares of ln(y + 0.1) with the fixed effects absorbed.
    let ones = vec![1.0; n];
    let mut z: Vec<f64> = d.y.iter().map(|y| (y + 0.1).ln()).collect();
    let mut xt = d.x.clone();
    absorb_in_place(&mut xt, &ones, &d.fe, &opts.demean)?;
    let kept = independent_columns(&xt, &d.x, &ones, opts.collinear_tol);
    if kept.is_empty() {
        return Err(Error::Rank("no regressor survives the collinearity purge".into()));
    }
    let dropped_collinear: Vec<String> =
        (0..d.x.ncols()).filter(|j| !kept.contains(j)).map(|j| d.names[j].clone()).collect();
    let mut xt = xt.select_columns(&kept);
    let mut zt = DMatrix::from_column_slice(n, 1, &z);
    absorb_in_place(&mut zt, &ones, &d.fe, &opts.demean)?;
    let mut beta = solve_spd(&weighted_gram(&xt, &ones), &weighted_xty(&xt, &ones, zt.as_slice()))?;
    let resid = zt.column(0) - &xt * &beta;
    let mut eta: Vec<f64> = z.iter().zip(resid.iter()).map(|(z, r)| z - r).collect();
    let mut mu: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
    let mut dev = poisson_deviance(&d.y, &mu);

    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        // Demeaning is linear and annihilates the FE span, so the previous
        // transformed columns plus the change in z are valid starting points.
        let z_new: Vec<f64> = d.y.iter().zip(&mu).zip(&eta).map(|((y, m), e)| e + (y - m) / m).collect();
        for i in 0..n {
            zt[(i, 0)] += z_new[i] - z[i];
        }
        z = z_new;
        absorb_in_place(&mut zt, &mu, &d.fe, &opts.demean)?;
        absorb_in_place(&mut xt, &mu, &d.fe, &opts.demean)?;
        let beta_new = solve_spd(&weighted_gram(&xt, &mu), &weighted_xty(&xt, &mu, zt.as_slice()))?;
        let resid = zt.column(0) - &xt * &beta_new;
        let eta_full: Vec<f64> = z.iter().zip(resid.iter()).map(|(z, r)| z - r).collect();

        // Step halving guards against overshooting from a poor start.
        let mut step = 1.0;
        let (mut eta_try, mut mu_try, mut dev_try);
        loop {
            eta_try = eta.iter().zip(&eta_full).map(|(a, b)| a + step * (b - a)).collect::<Vec<_>>();
            mu_try = eta_try.iter().map(|e| e.exp()).collect::<Vec<_>>();
            dev_try = poisson_deviance(&d.y, &mu_try);
            if (dev_try.is_finite() && dev_try <= dev * (1.0 + 1e-10) + 1e-12) || step < 1e-3 {
                break;
            }
            step *= 0.5;
        }
        if !dev_try.is_finite() {
            return Err(Error::NoConvergence { iterations, residual: dev_try });
        }
        let beta_step = if step == 1.0 { beta_new } else { &beta + (beta_new - &beta) * step };
        let coef_change = (&beta_step - &beta).amax();
        let dev_change = (dev - dev_try).abs() / dev_try.max(0.1);
        beta = beta_step;
        eta = eta_try;
        mu = mu_try;
        dev = dev_try;
        if dev_change < opts.dev_tol && coef_change < opts.coef_tol {
            converged = true;
            break;
        }
    }

    // Bread and scores at the final weights.
    absorb_in_place(&mut xt, &mu, &d.fe, &opts.demean)?;
    let bread = weighted_gram(&xt, &mu);
    let bread_inv = bread
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular("cluster sandwich bread".into()))?;
    let p = kept.len();
    let resid_y: Vec<f64> = d.y.iter().zip(&mu).map(|(y, m)| y - m).collect();
    let (meat, n_clusters) = match &d.cluster {
        Some(g) => {
            let mut sums = DMatrix::<f64>::zeros(g.n_levels, p);
            for i in 0..n {
                let c = g.codes[i] as usize;
                for j in 0..p {
                    sums[(c, j)] += xt[(i, j)] * resid_y[i];
                }
            }
            (sums.transpose() * &sums, g.n_levels)
        }
        None => {
            let s = DMatrix::from_fn(n, p, |i, j| xt[(i, j)] * resid_y[i]);
            (s.transpose() * &s, n)
        }
    };
    let mut vcov = &bread_inv * meat * &bread_inv;
    vcov = (&vcov + vcov.transpose()) * 0.5;
    let g = n_clusters as f64;
    let factor =
        if n_clusters > 1 && n > p { g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - p as f64) } else { f64::NAN };

    Ok(FitResult {
        names: kept.iter().map(|&j| d.names[j].clone()).collect(),
        n_dropped_collinear: dropped_collinear.len(),
        dropped_collinear,
        coefficients: beta,
        vcov_corrected: &vcov * factor,
        vcov_cluster: vcov,
        small_sample_factor: factor,
        rows,
        linear_index: eta,
        fitted_mean: mu,
        deviance: dev,
        n_obs: n,
        n_clusters,
        n_dropped_separated: n_input - n,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[allow(clippy::needless_range_loop)]
    fn saturated_2x2() -> Design {
        // Two groups × two periods with five replicate rows per cell; the
        // interaction is the only regressor besides the absorbed effects.
        let means = [[10.0, 12.0], [10.0, 15.0]];
        let mut y = Vec::new();
        let (mut g, mut t, mut x) = (Vec::new(), Vec::new(), Vec::new());
        for a in 0..2 {
            for b in 0..2 {
                for r in 0..5 {
                    y.push(means[a][b] + [-2.0, -1.0, 0.0, 1.0, 2.0][r]);
                    g.push(a as u32);
                    t.push(b as u32);
                    x.push(if a == 1 && b == 1 { 1.0 } else { 0.0 });
                }
            }
        }
        Design {
            y,
            x: DMatrix::from_column_slice(x.len(), 1, &x),
            names: vec!["treat_post".into()],
            fe: vec![GroupCodes::from_keys(g), GroupCodes::from_keys(t)],
            cluster: None,
        }
    }

    #[test]
    fn saturated_interaction_matches_closed_form() {
        let f = fit_design(&saturated_2x2(), &FitOptions::default()).unwrap();
        assert!(f.converged);
        let expect = (15.0_f64 * 10.0 / (10.0 * 12.0)).ln();
        assert!((f.coefficients[0] - expect).abs() < 1e-10, "{}", f.coefficients[0]);
    }

    #[test]
    fn exact_exponential_outcomes_are_recovered() {
        let xs: Vec<f64> = (0..40).map(|i| (i % 8) as f64).collect();
        let y: Vec<f64> = xs.iter().map(|x| (0.5_f64 * x).exp()).collect();
        let d = Design {
            y,
            x: DMatrix::from_column_slice(40, 1, &xs),
            names: vec!["x".into()],
            fe: vec![GroupCodes::from_keys((0..40).map(|i| i / 8))],
            cluster: None,
        };
        let f = fit_design(&d, &FitOptions::default()).unwrap();
        assert!((f.coefficients[0] - 0.5).abs() < 1e-9);
        assert!(f.deviance < 1e-12);
    }

    #[test]
    fn group_constant_regressor_is_purged() {
        let mut d = saturated_2x2();
        let g: Vec<f64> = d.fe[0].codes.iter().map(|&c| c as f64 * 3.0).collect();
        let x = d.x.column(0).iter().copied().chain(g).collect::<Vec<_>>();
        d.x = DMatrix::from_column_slice(20, 2, &x);
        d.names.push("group_level".into());
        let f = fit_design(&d, &FitOptions::default()).unwrap();
        assert_eq!(f.dropped_collinear, vec!["group_level".to_string()]);
        assert_eq!(f.names, vec!["treat_post".to_string()]);
    }

    #[test]
    fn all_zero_cells_are_separated() {
        let y = [0.0, 0.0, 0.0, 3.0, 1.0, 2.0, 0.0, 4.0, 5.0];
        let g = vec![GroupCodes::from_keys([0, 0, 0, 1, 1, 1, 2, 2, 2])];
        assert_eq!(separated_rows(&y, &g), vec![3, 4, 5, 6, 7, 8]);
        let none = [1.0, 0.0, 2.0, 3.0, 1.0, 2.0, 0.0, 4.0, 5.0];
        assert_eq!(separated_rows(&none, &g).len(), 9);
    }

    #[test]
    fn deviance_is_zero_at_perfect_fit() {
        assert_eq!(poisson_deviance(&[0.0, 2.0], &[0.0, 2.0]), 0.0);
    }
}
