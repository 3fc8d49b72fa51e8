#![allow(dead_code)]

pub mod dense_ppml;

use rand::Rng;
use telepar_core::equilibrium::*;

pub fn demand(shift: f64) -> DemandSpec {
    DemandSpec {
        eta0: 0.5,
        eta1: 0.02,
        eta2: 0.06,
        broadband_z: 0.0,
        wage: 1.0,
        time_per_unit: 0.5,
        composite_money_price: 1.0,
        composite_time_per_unit: 1.0,
        demand_shift: shift,
    }
}

pub fn primitives(e_t: f64, e_i: f64, sigma: f64, share: f64) -> MarketPrimitives {
    MarketPrimitives {
        telehealth_supply: InputSupplySpec { elasticity: e_t, scale: 1.0 },
        inperson_supply: InputSupplySpec { elasticity: e_i, scale: 1.5 },
        production: ProductionSpec { tfp: 1.0, share, substitution: sigma },
        demand: demand(3.0),
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

/// A random valid primitive set with broadband at the mean.
pub fn random_primitives<R: Rng>(rng: &mut R) -> MarketPrimitives {
    let eta1 = rng.random_range(0.01..0.03);
    MarketPrimitives {
        telehealth_supply: InputSupplySpec {
            elasticity: log_uniform(rng, 0.2, 5.0),
            scale: log_uniform(rng, 0.5, 2.0),
        },
        inperson_supply: InputSupplySpec { elasticity: log_uniform(rng, 0.2, 5.0), scale: log_uniform(rng, 0.5, 2.0) },
        production: ProductionSpec {
            tfp: log_uniform(rng, 0.5, 2.0),
            share: rng.random_range(0.2..0.8),
            substitution: log_uniform(rng, 0.3, 3.0),
        },
        demand: DemandSpec {
            eta0: rng.random_range(0.2..0.8),
            eta1,
            eta2: eta1 + rng.random_range(0.01..0.04),
            broadband_z: 0.0,
            wage: 1.0,
            time_per_unit: rng.random_range(0.0..1.0),
            composite_money_price: 1.0,
            composite_time_per_unit: 1.0,
            demand_shift: log_uniform(rng, 0.5, 5.0),
        },
    }
}

/// Market residuals at an arbitrary input pair, in log units:
/// `[closure, final demand]`, with prices and output built directly from the
/// primitives. `rho = None` closes with cost minimization.
pub fn market_residuals(p: &MarketPrimitives, t: f64, i: f64, rho: Option<f64>, gamma: f64) -> [f64; 2] {
    let r_t = marginal_input_price(&p.telehealth_supply, t).unwrap();
    let r_i = marginal_input_price(&p.inperson_supply, i).unwrap();
    let y = p.production.output(t, i);
    let price = (r_t * t + r_i * i) / y;
    let eta = demand_eta(p.demand.broadband_z, gamma, p.demand.eta0, p.demand.eta1, p.demand.eta2).unwrap();
    let d = demand_quantity(price, p.demand.wage, p.demand.time_per_unit, eta, p.demand.demand_shift).unwrap();
    let closure = match rho {
        None => (p.production.mrts(t, i) / (r_t / r_i)).ln(),
        Some(rho) => (r_t * t / y / rho).ln(),
    };
    [closure, (y / d).ln()]
}

/// Brute-force 2-D grid search over `(ln T, ln I)` minimizing the largest
/// absolute market residual, zooming in around the incumbent each round.
pub fn grid_search(p: &MarketPrimitives, rho: Option<f64>, gamma: f64) -> (f64, f64) {
    let n = 41;
    let (mut ct, mut ci) = (0.0_f64, 0.0_f64);
    let mut half = 12.0_f64;
    for _ in 0..60 {
        let mut best = (f64::INFINITY, ct, ci);
        for a in 0..n {
            for b in 0..n {
                let lt = ct - half + 2.0 * half * a as f64 / (n - 1) as f64;
                let li = ci - half + 2.0 * half * b as f64 / (n - 1) as f64;
                let r = market_residuals(p, lt.exp(), li.exp(), rho, gamma);
                let m = r[0].abs().max(r[1].abs());
                if m < best.0 {
                    best = (m, lt, li);
                }
            }
        }
        ct = best.1;
        ci = best.2;
        half *= 0.6;
        if half < 1e-10 {
            break;
        }
    }
    (ct.exp(), ci.exp())
}
