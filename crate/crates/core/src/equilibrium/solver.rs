//! Numerical market equilibria.
//!
//! The unregulated system is reduced to one equation in `ln T`: cost
//! minimization gives `ln I` in closed form, production gives `Y`, the
//! zero-profit full price gives `P`, and the remaining residual is
//! `ln Y - ln D(P)`. Under a binding revenue constraint the system is reduced
//! to one equation in `ln Y` instead: the constraint pins `T`, production pins
//! `I`. Both residuals are bracketed and bisected in log units, then polished
//! with a few guarded Newton steps.

use super::demand::demand_eta;
use super::primitives::{Equilibrium, MarketPrimitives, PolicyRegime};
use crate::error::{Error, Result};

/// Log-space search interval for the bracketed variable.
pub const LN_LOWER: f64 = -18.420680743952367; // ln 1e-8
pub const LN_UPPER: f64 = 18.420680743952367; // ln 1e8
const BISECT_TOL: f64 = 1e-12;
const RESIDUAL_TOL: f64 = 1e-9;
const MAX_BISECT: usize = 400;
const NEWTON_STEPS: usize = 4;

/// Log-space state of a candidate market point.
#[derive(Debug, Clone, Copy)]
struct State {
    ln_t: f64,
    ln_i: f64,
    ln_y: f64,
    ln_rt: f64,
    ln_ri: f64,
    price: f64,
}

impl State {
    fn to_equilibrium(self) -> Equilibrium {
        Equilibrium {
            quantity: self.ln_y.exp(),
            full_price: self.price,
            telehealth_input: self.ln_t.exp(),
            inperson_input: self.ln_i.exp(),
            telehealth_price: self.ln_rt.exp(),
            inperson_price: self.ln_ri.exp(),
        }
    }
}

fn full_price_of(ln_rt: f64, ln_t: f64, ln_ri: f64, ln_i: f64, ln_y: f64) -> f64 {
    (ln_rt + ln_t - ln_y).exp() + (ln_ri + ln_i - ln_y).exp()
}

/// Point on the cost-minimizing expansion path with telehealth input `e^ln_t`.
fn expansion_path_state(p: &MarketPrimitives, ln_t: f64) -> State {
    let prod = &p.production;
    let ts = &p.telehealth_supply;
    let is = &p.inperson_supply;
    let inv_sigma = 1.0 / prod.substitution;
    let a = prod.share;
    let ln_i = ((ts.scale / is.scale).ln() - (a / (1.0 - a)).ln() + ln_t * (1.0 / ts.elasticity + inv_sigma))
        / (inv_sigma + 1.0 / is.elasticity);
    let ln_y = prod.tfp.ln() + prod.ln_aggregate(ln_t, ln_i);
    let ln_rt = ts.ln_price(ln_t);
    let ln_ri = is.ln_price(ln_i);
    State { ln_t, ln_i, ln_y, ln_rt, ln_ri, price: full_price_of(ln_rt, ln_t, ln_ri, ln_i, ln_y) }
}

/// Admissible `ln Y` interval on which the revenue constraint `r_T T = ρ Y`
/// and production can hold with positive inputs.
fn constrained_domain(p: &MarketPrimitives, rho: f64) -> (f64, f64) {
    let prod = &p.production;
    if prod.is_cobb_douglas() {
        return (LN_LOWER, LN_UPPER);
    }
    let ts = &p.telehealth_supply;
    let b = 1.0 / (1.0 + 1.0 / ts.elasticity);
    let k0 = (rho.ln() - ts.scale.ln()) * b;
    let c = prod.ces_exponent();
    let threshold = (prod.share.ln() / c + prod.tfp.ln() + k0) / (1.0 - b);
    let margin = 1e-9 * (1.0 + threshold.abs());
    if c > 0.0 {
        (LN_LOWER.max(threshold + margin), LN_UPPER)
    } else {
        (LN_LOWER, LN_UPPER.min(threshold - margin))
    }
}

/// Point on the revenue-constrained supply relation with output `e^ln_y`.
fn constrained_state(p: &MarketPrimitives, rho: f64, ln_y: f64) -> Option<State> {
    let prod = &p.production;
    let ts = &p.telehealth_supply;
    let is = &p.inperson_supply;
    let a = prod.share;
    let ln_t = (rho.ln() + ln_y - ts.scale.ln()) / (1.0 + 1.0 / ts.elasticity);
    let q = ln_y - prod.tfp.ln();
    let ln_i = if prod.is_cobb_douglas() {
        (q - a * ln_t) / (1.0 - a)
    } else {
        let c = prod.ces_exponent();
        let x = a.ln() + c * ln_t - c * q;
        if x >= 0.0 {
            return None;
        }
        let ln_u = c * q + (-x.exp()).ln_1p();
        (ln_u - (1.0 - a).ln()) / c
    };
    if !ln_i.is_finite() {
        return None;
    }
    let ln_rt = ts.ln_price(ln_t);
    let ln_ri = is.ln_price(ln_i);
    let price = rho + (ln_ri + ln_i - ln_y).exp();
    Some(State { ln_t, ln_i, ln_y, ln_rt, ln_ri, price })
}

fn ln_demand(p: &MarketPrimitives, gamma: f64, price: f64) -> Result<f64> {
    let d = &p.demand;
    let eta = demand_eta(d.broadband_z, gamma, d.eta0, d.eta1, d.eta2)?;
    let total = d.total_price(price);
    if !(total > 0.0) {
        return Err(Error::domain(format!("nonpositive full price {total}")));
    }
    Ok(d.demand_shift.ln() - total.ln() / eta)
}

/// Bracketed bisection followed by guarded Newton polishing.
fn find_root(mut f: impl FnMut(f64) -> Result<f64>, lo: f64, hi: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Bracket { lo: lo.exp(), hi: hi.exp(), f_lo: fa, f_hi: fb });
    }
    let mut iterations = 0;
    while b - a > BISECT_TOL && iterations < MAX_BISECT {
        let m = 0.5 * (a + b);
        let fm = f(m)?;
        if fm == 0.0 {
            a = m;
            b = m;
            break;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
        iterations += 1;
    }
    let mut x = 0.5 * (a + b);
    let mut fx = f(x)?;
    for _ in 0..NEWTON_STEPS {
        if fx == 0.0 {
            break;
        }
        let h = 1e-7 * (1.0 + x.abs());
        let slope = (f(x + h)? - f(x - h)?) / (2.0 * h);
        if !(slope.is_finite() && slope != 0.0) {
            break;
        }
        let cand = x - fx / slope;
        if !(cand >= lo && cand <= hi) {
            break;
        }
        let fc = f(cand)?;
        if fc.abs() < fx.abs() {
            x = cand;
            fx = fc;
        } else {
            break;
        }
    }
    if fx.abs() > RESIDUAL_TOL || !fx.is_finite() {
        return Err(Error::NoConvergence { iterations, residual: fx });
    }
    Ok(x)
}

/// Cost-minimizing producers facing demand with cost-control weight `gamma`.
pub fn solve_with_demand_weight(p: &MarketPrimitives, gamma: f64) -> Result<Equilibrium> {
    p.validate()?;
    let ln_t = find_root(
        |ln_t| {
            let s = expansion_path_state(p, ln_t);
            Ok(s.ln_y - ln_demand(p, gamma, s.price)?)
        },
        LN_LOWER,
        LN_UPPER,
    )?;
    Ok(expansion_path_state(p, ln_t).to_equilibrium())
}

pub fn solve_unregulated(p: &MarketPrimitives) -> Result<Equilibrium> {
    solve_with_demand_weight(p, 0.0)
}

/// Equilibrium with the revenue constraint `r_T T / Y = rho` imposed in place
/// of cost minimization, whether or not a control at that level would bind.
pub fn solve_price_constrained(p: &MarketPrimitives, rho: f64, gamma: f64) -> Result<Equilibrium> {
    p.validate()?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Config(format!("revenue constraint must be > 0, got {rho}")));
    }
    let (lo, hi) = constrained_domain(p, rho);
    if !(lo < hi) {
        return Err(Error::InfeasibleRegime(format!(
            "no positive output satisfies r_T T / Y = {rho} inside the search interval"
        )));
    }
    let residual = |ln_y: f64| -> Result<f64> {
        let s = constrained_state(p, rho, ln_y)
            .ok_or_else(|| Error::InfeasibleRegime(format!("production cannot meet r_T T / Y = {rho}")))?;
        Ok(s.ln_y - ln_demand(p, gamma, s.price)?)
    };
    let ln_y = match find_root(residual, lo, hi) {
        Ok(v) => v,
        Err(Error::Bracket { f_lo, f_hi, .. }) => {
            return Err(Error::InfeasibleRegime(format!(
                "demand never meets the constrained supply relation at r_T T / Y = {rho} (residuals {f_lo:e}, {f_hi:e})"
            )))
        }
        Err(e) => return Err(e),
    };
    let s = constrained_state(p, rho, ln_y).expect("root lies inside the feasible domain");
    Ok(s.to_equilibrium())
}

/// Market outcome under `regime`. A price control replaces cost minimization
/// only when it binds relative to the unregulated outcome (with the
/// cost-control-adjusted demand); otherwise the unregulated producer solution
/// is returned.
pub fn solve_regulated(p: &MarketPrimitives, regime: &PolicyRegime) -> Result<Equilibrium> {
    regime.validate()?;
    let gamma = regime.cost_control.gamma();
    let base = solve_with_demand_weight(p, gamma)?;
    match regime.price_control.rho() {
        Some(rho) if regime.price_control.binds_at(base.telehealth_unit_revenue()) => {
            solve_price_constrained(p, rho, gamma)
        }
        _ => Ok(base),
    }
}

/// `Y_regulated - Y_unregulated`.
pub fn equilibrium_shift(p: &MarketPrimitives, regime: &PolicyRegime) -> Result<f64> {
    let unreg = solve_unregulated(p)?;
    let reg = solve_regulated(p, regime)?;
    Ok(reg.quantity - unreg.quantity)
}

/// Scales tfp by `1 + dA` and the demand shift by `1 + dB`.
pub fn apply_shocks(p: &MarketPrimitives, d_a: f64, d_b: f64) -> Result<MarketPrimitives> {
    let mut out = *p;
    out.production.tfp *= 1.0 + d_a;
    out.demand.demand_shift *= 1.0 + d_b;
    if !(out.production.tfp > 0.0) {
        return Err(Error::domain(format!("productivity shock {d_a} makes tfp nonpositive")));
    }
    if !(out.demand.demand_shift > 0.0) {
        return Err(Error::domain(format!("demand shock {d_b} makes the demand shift nonpositive")));
    }
    Ok(out)
}

/// Central finite-difference estimate of `d ln Y / d ln P` along the supply
/// relation, traced by scaling the demand shift by `exp(±bump)`.
///
/// With a price control in `regime` the derivative is taken along the
/// revenue-constrained supply relation at that control's level; without one,
/// along the cost-minimizing supply curve.
pub fn local_supply_elasticity(p: &MarketPrimitives, regime: &PolicyRegime, bump: f64) -> Result<f64> {
    if !(bump > 0.0 && bump.is_finite()) {
        return Err(Error::domain(format!("finite-difference step must be > 0, got {bump}")));
    }
    regime.validate()?;
    let gamma = regime.cost_control.gamma();
    let solve = |factor: f64| -> Result<Equilibrium> {
        let mut q = *p;
        q.demand.demand_shift *= factor;
        match regime.price_control.rho() {
            Some(rho) => solve_price_constrained(&q, rho, gamma),
            None => solve_with_demand_weight(&q, gamma),
        }
    };
    let up = solve(bump.exp())?;
    let dn = solve((-bump).exp())?;
    Ok((up.quantity / dn.quantity).ln() / (up.full_price / dn.full_price).ln())
}

/// The point `E(ρ)` on the cost-minimizing supply curve where `r_T T / Y = rho`.
pub fn unit_revenue_point(p: &MarketPrimitives, rho: f64) -> Result<Equilibrium> {
    p.validate()?;
    let ln_t = find_root(
        |ln_t| {
            let s = expansion_path_state(p, ln_t);
            Ok((s.ln_rt + s.ln_t - s.ln_y) - rho.ln())
        },
        LN_LOWER,
        LN_UPPER,
    )?;
    Ok(expansion_path_state(p, ln_t).to_equilibrium())
}

/// How the producer side is closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Closure {
    /// Cost minimization: MRTS equals `r_T / r_I`.
    CostMinimizing,
    /// Revenue constraint `r_T T / Y = rho`.
    Revenue(f64),
}

/// Relative residuals of the producer conditions at `eq`:
/// `[full price, production, in-person supply, telehealth supply, closure]`.
pub fn producer_residuals(p: &MarketPrimitives, eq: &Equilibrium, closure: Closure) -> [f64; 5] {
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    let fp = (eq.telehealth_price * eq.telehealth_input + eq.inperson_price * eq.inperson_input) / eq.quantity;
    let pf = p.production.output(eq.telehealth_input, eq.inperson_input);
    let is = super::primitives::marginal_input_price(&p.inperson_supply, eq.inperson_input).unwrap_or(f64::NAN);
    let ts = super::primitives::marginal_input_price(&p.telehealth_supply, eq.telehealth_input).unwrap_or(f64::NAN);
    let close = match closure {
        Closure::CostMinimizing => {
            rel(p.production.mrts(eq.telehealth_input, eq.inperson_input), eq.telehealth_price / eq.inperson_price)
        }
        Closure::Revenue(rho) => rel(eq.telehealth_unit_revenue(), rho),
    };
    [rel(eq.full_price, fp), rel(eq.quantity, pf), rel(eq.inperson_price, is), rel(eq.telehealth_price, ts), close]
}

/// Relative residual of final demand with cost-control weight `gamma`.
pub fn demand_residual(p: &MarketPrimitives, eq: &Equilibrium, gamma: f64) -> Result<f64> {
    let d = ln_demand(p, gamma, eq.full_price)?.exp();
    Ok((eq.quantity - d).abs() / d)
}
