//! Supply-chain equilibrium of a health-care market with a telehealth input
//! and an in-person input, under price and cost controls.

pub mod demand;
pub mod elasticity;
pub mod primitives;
pub mod solver;
pub mod sweep;

pub use demand::{
    b1_elasticity_order, b2_substitution_sign, demand_eta, demand_quantity, ElasticityOrder, SubstitutionSign,
};
pub use elasticity::{
    cost_shares, eta_difference, eta_regulated, eta_regulated_at_crossing, eta_unregulated, ElasticitySummary,
};
pub use primitives::{
    full_price, marginal_input_price, CostControl, DemandSpec, Equilibrium, FullPriceSpec, InputSupplySpec,
    MarketPrimitives, PolicyRegime, PriceControl, ProductionSpec, DEFAULT_COST_CEILING,
};
pub use solver::{
    apply_shocks, demand_residual, equilibrium_shift, local_supply_elasticity, producer_residuals,
    solve_price_constrained, solve_regulated, solve_unregulated, solve_with_demand_weight, unit_revenue_point, Closure,
};
pub use sweep::{sweep, write_sweep_csv, BroadbandResponse, SweepRow};
