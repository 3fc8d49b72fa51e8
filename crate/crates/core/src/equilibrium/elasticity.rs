//! Closed-form output supply elasticities with and without the telehealth
//! revenue constraint.
//!
//! All `eps_*` arguments are marginal-cost elasticities `x Γ''(x) / Γ'(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn cost_shares(r_t: f64, t: f64, r_i: f64, i: f64) -> Result<(f64, f64)> {
    if !(r_t > 0.0 && t > 0.0 && r_i > 0.0 && i > 0.0) {
        return Err(Error::domain("cost_shares requires strictly positive prices and quantities"));
    }
    let ct = r_t * t;
    let s_t = ct / (ct + r_i * i);
    Ok((s_t, 1.0 - s_t))
}

fn check_share_and_elasticities(s_i: f64, eps: &[f64]) -> Result<()> {
    if !(s_i > 0.0 && s_i < 1.0) {
        return Err(Error::domain(format!("cost share s_I must lie in (0,1), got {s_i}")));
    }
    if eps.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::domain(format!("elasticities must be positive and finite, got {eps:?}")));
    }
    Ok(())
}

/// Ratio `Î/T̂ = (1 + σ ε_T) / (1 + σ ε_I)` along the cost-minimizing expansion path.
pub fn expansion_ratio(sigma: f64, eps_t: f64, eps_i: f64) -> f64 {
    (1.0 + sigma * eps_t) / (1.0 + sigma * eps_i)
}

#[derive(Debug, Clone, Copy)]
struct Aggregates {
    alpha: f64,
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

fn aggregates(s_i: f64, sigma: f64, eps_t: f64, eps_i: f64) -> Aggregates {
    let s_t = 1.0 - s_i;
    let alpha = expansion_ratio(sigma, eps_t, eps_i);
    Aggregates {
        alpha,
        a: s_t + s_i * alpha,
        b: s_t * eps_t + s_i * alpha * eps_i,
        c: s_i * (1.0 + eps_t),
        d: eps_t * (1.0 - s_i + eps_i) + eps_i * s_i,
    }
}

/// Supply elasticity of the cost-minimizing (unregulated) industry:
/// `(s_T + s_I α) / (s_T ε_T + s_I α ε_I)`.
pub fn eta_unregulated(s_i: f64, sigma: f64, eps_t: f64, eps_i: f64) -> Result<f64> {
    check_share_and_elasticities(s_i, &[sigma, eps_t, eps_i])?;
    let g = aggregates(s_i, sigma, eps_t, eps_i);
    Ok(g.a / g.b)
}

/// Supply elasticity under the revenue constraint `r_T T / Y = ρ`, in the
/// published closed form `s_I (1 + ε_T) / (ε_T (1 - s_I + ε_I) + ε_I s_I)`.
///
/// Differentiating the regulated system at a point where the input mix is
/// cost-minimizing gives the same expression without the leading `s_I`; see
/// [`eta_regulated_at_crossing`]. Both are exposed so the gap is measurable.
pub fn eta_regulated(s_i: f64, eps_t: f64, eps_i: f64) -> Result<f64> {
    check_share_and_elasticities(s_i, &[eps_t, eps_i])?;
    let g = aggregates(s_i, 1.0, eps_t, eps_i);
    Ok(g.c / g.d)
}

/// Regulated supply elasticity at the crossing with the unregulated supply
/// curve (output elasticities equal cost shares there):
/// `(1 + ε_T) / (ε_T (1 - s_I + ε_I) + ε_I s_I)`.
pub fn eta_regulated_at_crossing(s_i: f64, eps_t: f64, eps_i: f64) -> Result<f64> {
    check_share_and_elasticities(s_i, &[eps_t, eps_i])?;
    let g = aggregates(s_i, 1.0, eps_t, eps_i);
    Ok((1.0 + eps_t) / g.d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticitySummary {
    pub s_t: f64,
    pub s_i: f64,
    pub alpha: f64,
    pub eta_unreg: f64,
    pub eta_reg: f64,
    /// `η_unreg - η_reg` computed as `A/B - C/D`.
    pub diff_direct: f64,
    /// The factorized numerator form over `B D`.
    pub diff_factorized: f64,
    /// `sign(diff_direct) == sign(ε_T - ε_I)`.
    pub sign_matches: bool,
}

/// Tolerance under which `diff_direct` counts as zero for the sign audit.
pub const SIGN_ZERO_TOL: f64 = 1e-12;

pub fn eta_difference(s_i: f64, sigma: f64, eps_t: f64, eps_i: f64) -> Result<ElasticitySummary> {
    check_share_and_elasticities(s_i, &[sigma, eps_t, eps_i])?;
    if sigma * s_i >= 1.0 {
        return Err(Error::Assumption(format!("sigma * s_I = {} must be < 1", sigma * s_i)));
    }
    let g = aggregates(s_i, sigma, eps_t, eps_i);
    let diff_direct = g.a / g.b - g.c / g.d;
    let numer = (eps_t - eps_i) * (1.0 - s_i) * (sigma * s_i * eps_t + (1.0 - sigma * s_i) * eps_i + sigma);
    let diff_factorized = numer / (g.b * g.d);
    let gap = eps_t - eps_i;
    let sign_matches = if gap == 0.0 {
        diff_direct.abs() < SIGN_ZERO_TOL
    } else {
        diff_direct.abs() >= SIGN_ZERO_TOL && diff_direct.signum() == gap.signum()
    };
    Ok(ElasticitySummary {
        s_t: 1.0 - s_i,
        s_i,
        alpha: g.alpha,
        eta_unreg: g.a / g.b,
        eta_reg: g.c / g.d,
        diff_direct,
        diff_factorized,
        sign_matches,
    })
}
