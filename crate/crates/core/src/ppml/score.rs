//! Wild cluster score bootstrap for joint zero restrictions.
//!
//! The model is fitted once under the null; each draw flips the sign of
//! every cluster's score contribution (Rademacher weights) and recomputes
//! the score statistic. No refitting is needed, and the reference
//! distribution does not lean on the cluster covariance being accurate in
//! every direction, which matters when few clusters inform the restrictions.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{absorb_in_place, fit_design, independent_columns, weighted_gram, Design, FitOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreBootstrap {
    pub statistic: f64,
    /// Restrictions actually tested after the collinearity purge.
    pub df: usize,
    pub p_value: f64,
    pub reps: usize,
}

/// Tests that the coefficients on `tested` are jointly zero.
pub fn score_bootstrap(
    design: &Design,
    tested: &[String],
    reps: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<ScoreBootstrap> {
    if reps == 0 {
        return Err(Error::Config("score bootstrap needs at least one draw".into()));
    }
    let is_tested: Vec<bool> = design.names.iter().map(|n| tested.contains(n)).collect();
    if let Some(t) = tested.iter().find(|t| !design.names.contains(t)) {
        return Err(Error::CoefficientMissing(t.clone()));
    }
    let free: Vec<usize> = (0..design.names.len()).filter(|&j| !is_tested[j]).collect();
    if free.is_empty() {
        return Err(Error::Rank("the restricted model has no regressors".into()));
    }
    let restricted = Design {
        x: design.x.select_columns(&free),
        names: free.iter().map(|&j| design.names[j].clone()).collect(),
        ..design.clone()
    };
    let r = fit_design(&restricted, opts)?;
    if !r.converged {
        return Err(Error::NoConvergence { iterations: r.iterations, residual: r.deviance });
    }

    let d = design.subset(&r.rows);
    let mu = &r.fitted_mean;
    let n = d.y.len();
    let mut xt = d.x.clone();
    absorb_in_place(&mut xt, mu, &d.fe, &opts.demean)?;
    let kept = independent_columns(&xt, &d.x, mu, opts.collinear_tol);
    let t_pos: Vec<usize> = kept.iter().enumerate().filter(|(_, &j)| is_tested[j]).map(|(a, _)| a).collect();
    if t_pos.is_empty() {
        return Ok(ScoreBootstrap { statistic: 0.0, df: 0, p_value: 1.0, reps });
    }
    let xt = xt.select_columns(&kept);
    let hinv = weighted_gram(&xt, mu)
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular("score bootstrap information matrix".into()))?;
    let a = hinv.select_rows(&t_pos);

    let (codes, g): (Vec<usize>, usize) = match &d.cluster {
        Some(c) => (c.codes.iter().map(|&c| c as usize).collect(), c.n_levels),
        None => ((0..n).collect(), n),
    };
    let p = kept.len();
    let mut scores = DMatrix::<f64>::zeros(g, p);
    for i in 0..n {
        let e = d.y[i] - mu[i];
        for j in 0..p {
            scores[(codes[i], j)] += xt[(i, j)] * e;
        }
    }
    // Projected cluster contributions; Rademacher weights leave Σ w² S Sᵀ
    // unchanged, so one covariance serves every draw.
    let proj = &scores * a.transpose();
    let v = proj.transpose() * &proj;
    let vinv = v
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| v.pseudo_inverse(1e-12).ok())
        .ok_or_else(|| Error::Singular("score bootstrap covariance".into()))?;
    let stat = |w: &DVector<f64>| {
        let theta = proj.transpose() * w;
        (theta.transpose() * &vinv * &theta)[(0, 0)]
    };
    let observed = stat(&DVector::from_element(g, 1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = DVector::zeros(g);
    let mut exceed = 0usize;
    for _ in 0..reps {
        w.iter_mut().for_each(|x| *x = if rng.random::<bool>() { 1.0 } else { -1.0 });
        exceed += usize::from(stat(&w) >= observed * (1.0 - 1e-12));
    }
    Ok(ScoreBootstrap { statistic: observed, df: t_pos.len(), p_value: (exceed + 1) as f64 / (reps + 1) as f64, reps })
}
