//! Consumer demand: curvature law, iso-elastic demand and the two
//! time-price comparative statics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `η(B, γ) = η0 + η1 B - η2 γ B`; the price elasticity of demand is `-1/η`.
///
/// Fails when the result falls outside (0, 1).
pub fn demand_eta(broadband_z: f64, gamma: f64, eta0: f64, eta1: f64, eta2: f64) -> Result<f64> {
    if !(eta1 > 0.0 && eta2 > eta1) {
        return Err(Error::domain(format!("require eta2 > eta1 > 0, got eta1={eta1}, eta2={eta2}")));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::domain(format!("gamma must lie in [0,1], got {gamma}")));
    }
    let eta = eta0 + eta1 * broadband_z - eta2 * gamma * broadband_z;
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Config(format!(
            "demand curvature eta = {eta} outside (0,1) at broadband {broadband_z}, gamma {gamma}"
        )));
    }
    Ok(eta)
}

/// `Y = shift * (P + w τ)^(-1/η)`.
pub fn demand_quantity(money_price: f64, wage: f64, time_per_unit: f64, eta: f64, demand_shift: f64) -> Result<f64> {
    let total = money_price + wage * time_per_unit;
    if !(total > 0.0) {
        return Err(Error::domain(format!("full price must be > 0, got {total}")));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::domain(format!("eta must lie in (0,1), got {eta}")));
    }
    Ok(demand_shift * total.powf(-1.0 / eta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElasticityOrder {
    TimeGreater,
    Equal,
    MoneyGreater,
}

/// Orders the magnitudes of the time-price and money-price elasticities of
/// demand. Both are the total-price elasticity scaled by the component's share
/// of the total price, so the larger component carries the larger elasticity.
pub fn b1_elasticity_order(wage: f64, time_per_unit: f64, money_price: f64) -> Result<ElasticityOrder> {
    let time_price = wage * time_per_unit;
    if money_price < 0.0 || time_price < 0.0 {
        return Err(Error::domain("prices must be nonnegative"));
    }
    if money_price == 0.0 && time_price == 0.0 {
        return Err(Error::domain("time and money prices cannot both be zero"));
    }
    Ok(match time_price.partial_cmp(&money_price) {
        Some(std::cmp::Ordering::Greater) => ElasticityOrder::TimeGreater,
        Some(std::cmp::Ordering::Less) => ElasticityOrder::MoneyGreater,
        _ => ElasticityOrder::Equal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubstitutionSign {
    Positive,
    Zero,
    Negative,
}

/// Sign of the effect of a higher time value on demand for care: positive
/// when the composite good is the more time-intensive one,
/// `ws/(ws+q) > wτ/(wτ+P)`.
pub fn b2_substitution_sign(
    wage: f64,
    comp_time: f64,
    comp_price: f64,
    med_time: f64,
    med_price: f64,
) -> Result<SubstitutionSign> {
    let comp_total = wage * comp_time + comp_price;
    let med_total = wage * med_time + med_price;
    if !(comp_total > 0.0 && med_total > 0.0) {
        return Err(Error::domain("total prices must be > 0"));
    }
    // Cross-multiplied to keep exact ties exact.
    let lhs = wage * comp_time * med_total;
    let rhs = wage * med_time * comp_total;
    let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    let diff = lhs - rhs;
    Ok(if diff.abs() <= 1e-14 * scale {
        SubstitutionSign::Zero
    } else if diff > 0.0 {
        SubstitutionSign::Positive
    } else {
        SubstitutionSign::Negative
    })
}
