use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Isoelastic input supply: the input price is `scale * x^(1/elasticity)`.
///
/// `elasticity` is the quantity supply elasticity `d ln x / d ln r`. The
/// elasticity of the marginal-cost schedule, `x Γ''(x) / Γ'(x)`, which is the
/// quantity the closed-form supply elasticities are written in, is its
/// reciprocal (see [`InputSupplySpec::cost_elasticity`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputSupplySpec {
    pub elasticity: f64,
    pub scale: f64,
}

impl InputSupplySpec {
    pub fn new(elasticity: f64, scale: f64) -> Result<Self> {
        let spec = Self { elasticity, scale };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.elasticity > 0.0 && self.elasticity.is_finite()) {
            return Err(Error::Config(format!("supply elasticity must be > 0, got {}", self.elasticity)));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!("supply scale must be > 0, got {}", self.scale)));
        }
        Ok(())
    }

    /// Elasticity of the marginal-cost schedule, `x Γ''/Γ' = 1/elasticity`.
    pub fn cost_elasticity(&self) -> f64 {
        1.0 / self.elasticity
    }

    /// Input price at quantity `x`, evaluated from `ln x`.
    pub(crate) fn ln_price(&self, ln_x: f64) -> f64 {
        self.scale.ln() + ln_x / self.elasticity
    }
}

/// Marginal input price `Γ'(x) = scale * x^(1/elasticity)`.
pub fn marginal_input_price(spec: &InputSupplySpec, quantity: f64) -> Result<f64> {
    if !(quantity > 0.0) {
        return Err(Error::domain(format!("input quantity must be > 0, got {quantity}")));
    }
    Ok(spec.scale * quantity.powf(1.0 / spec.elasticity))
}

/// CES technology `Y = A [a T^c + (1-a) I^c]^(1/c)` with `c = 1 - 1/σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductionSpec {
    pub tfp: f64,
    pub share: f64,
    pub substitution: f64,
}

/// Below this magnitude the CES exponent is treated as the Cobb-Douglas limit.
const COBB_DOUGLAS_EPS: f64 = 1e-12;

impl ProductionSpec {
    pub fn new(tfp: f64, share: f64, substitution: f64) -> Result<Self> {
        let spec = Self { tfp, share, substitution };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tfp > 0.0 && self.tfp.is_finite()) {
            return Err(Error::Config(format!("tfp must be > 0, got {}", self.tfp)));
        }
        if !(self.share > 0.0 && self.share < 1.0) {
            return Err(Error::Config(format!("CES share must lie in (0,1), got {}", self.share)));
        }
        if !(self.substitution > 0.0 && self.substitution.is_finite()) {
            return Err(Error::Config(format!("elasticity of substitution must be > 0, got {}", self.substitution)));
        }
        Ok(())
    }

    pub fn ces_exponent(&self) -> f64 {
        1.0 - 1.0 / self.substitution
    }

    pub(crate) fn is_cobb_douglas(&self) -> bool {
        self.ces_exponent().abs() < COBB_DOUGLAS_EPS
    }

    /// `ln F(T, I)` (without the tfp shift), from log inputs.
    pub(crate) fn ln_aggregate(&self, ln_t: f64, ln_i: f64) -> f64 {
        let a = self.share;
        let c = self.ces_exponent();
        if self.is_cobb_douglas() {
            return a * ln_t + (1.0 - a) * ln_i;
        }
        let u = a.ln() + c * ln_t;
        let v = (1.0 - a).ln() + c * ln_i;
        let m = u.max(v);
        (m + ((u - m).exp() + (v - m).exp()).ln()) / c
    }

    /// Output `A F(T, I)`.
    pub fn output(&self, telehealth: f64, inperson: f64) -> f64 {
        (self.tfp.ln() + self.ln_aggregate(telehealth.ln(), inperson.ln())).exp()
    }

    /// Marginal rate of technical substitution `F_T / F_I`.
    pub fn mrts(&self, telehealth: f64, inperson: f64) -> f64 {
        let a = self.share;
        a / (1.0 - a) * (telehealth / inperson).powf(self.ces_exponent() - 1.0)
    }

    /// Output elasticity of the telehealth input, `F_T T / F`.
    pub fn telehealth_output_elasticity(&self, telehealth: f64, inperson: f64) -> f64 {
        let a = self.share;
        let c = self.ces_exponent();
        if self.is_cobb_douglas() {
            return a;
        }
        let ut = a * telehealth.powf(c);
        let ui = (1.0 - a) * inperson.powf(c);
        ut / (ut + ui)
    }
}

/// Consumer side: iso-elastic demand `Y = shift * (P + wτ)^(-1/η(B, γ))` with
/// `η(B, γ) = η0 + η1 B - η2 γ B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemandSpec {
    pub eta0: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub broadband_z: f64,
    pub wage: f64,
    pub time_per_unit: f64,
    pub composite_money_price: f64,
    pub composite_time_per_unit: f64,
    pub demand_shift: f64,
}

impl DemandSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0) {
            return Err(Error::Config(format!("eta0 must be > 0, got {}", self.eta0)));
        }
        if !(self.eta1 > 0.0 && self.eta2 > self.eta1) {
            return Err(Error::Config(format!(
                "demand curvature requires eta2 > eta1 > 0, got eta1={}, eta2={}",
                self.eta1, self.eta2
            )));
        }
        if !(self.wage > 0.0) {
            return Err(Error::Config(format!("wage must be > 0, got {}", self.wage)));
        }
        if !(self.time_per_unit >= 0.0 && self.composite_time_per_unit >= 0.0) {
            return Err(Error::Config("time requirements must be nonnegative".into()));
        }
        if !(self.composite_money_price > 0.0) {
            return Err(Error::Config("composite money price must be > 0".into()));
        }
        if !(self.demand_shift > 0.0 && self.demand_shift.is_finite()) {
            return Err(Error::Config(format!("demand shift must be > 0, got {}", self.demand_shift)));
        }
        // η is affine in γ, so checking both ends of [0, 1] covers every cost control.
        self.validate_broadband_range(self.broadband_z, self.broadband_z)
    }

    /// Rejects broadband ranges on which `η(B, γ)` leaves (0, 1) for some
    /// `γ ∈ [0, 1]`. η is affine in both arguments, so the corners suffice.
    pub fn validate_broadband_range(&self, lo: f64, hi: f64) -> Result<()> {
        for b in [lo, hi] {
            for gamma in [0.0, 1.0] {
                super::demand::demand_eta(b, gamma, self.eta0, self.eta1, self.eta2)?;
            }
        }
        Ok(())
    }

    /// Time price `w τ` of one unit of care.
    pub fn time_price(&self) -> f64 {
        self.wage * self.time_per_unit
    }

    /// Total price `Π_Y = P_Y + w τ`.
    pub fn total_price(&self, money_price: f64) -> f64 {
        money_price + self.time_price()
    }

    /// Total price of the composite good, `Π_X = q + w s`.
    pub fn composite_total_price(&self) -> f64 {
        self.composite_money_price + self.wage * self.composite_time_per_unit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriceControl {
    #[default]
    None,
    Floor {
        rho: f64,
    },
    Ceiling {
        rho: f64,
    },
    Parity {
        rho: f64,
    },
}

impl PriceControl {
    pub fn rho(&self) -> Option<f64> {
        match *self {
            PriceControl::None => None,
            PriceControl::Floor { rho } | PriceControl::Ceiling { rho } | PriceControl::Parity { rho } => Some(rho),
        }
    }

    /// Whether the control binds given the unregulated telehealth revenue per
    /// unit of output `r_T T / Y`.
    pub fn binds_at(&self, unregulated_unit_revenue: f64) -> bool {
        match *self {
            PriceControl::None => false,
            PriceControl::Floor { rho } | PriceControl::Parity { rho } => rho > unregulated_unit_revenue,
            PriceControl::Ceiling { rho } => rho < unregulated_unit_revenue,
        }
    }
}

/// Default value used for a Cost Ceiling when none is configured.
pub const DEFAULT_COST_CEILING: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostControl {
    #[default]
    None,
    Parity,
    Ceiling {
        #[serde(default = "default_cost_ceiling")]
        gamma: f64,
    },
}

fn default_cost_ceiling() -> f64 {
    DEFAULT_COST_CEILING
}

impl CostControl {
    /// The demand-curvature weight γ: 0 without control, 1 under parity.
    pub fn gamma(&self) -> f64 {
        match *self {
            CostControl::None => 0.0,
            CostControl::Parity => 1.0,
            CostControl::Ceiling { gamma } => gamma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PolicyRegime {
    #[serde(default)]
    pub price_control: PriceControl,
    #[serde(default)]
    pub cost_control: CostControl,
}

impl PolicyRegime {
    pub const NONE: PolicyRegime = PolicyRegime { price_control: PriceControl::None, cost_control: CostControl::None };

    pub fn price(control: PriceControl) -> Self {
        Self { price_control: control, cost_control: CostControl::None }
    }

    pub fn cost(control: CostControl) -> Self {
        Self { price_control: PriceControl::None, cost_control: control }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(rho) = self.price_control.rho() {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(Error::Config(format!("price-control level must be > 0, got {rho}")));
            }
        }
        if let CostControl::Ceiling { gamma } = self.cost_control {
            if !(gamma > 0.0 && gamma < 1.0) {
                return Err(Error::Config(format!("cost-ceiling gamma must lie in (0,1), got {gamma}")));
            }
        }
        Ok(())
    }

    /// Short label used in sweep output.
    pub fn label(&self) -> String {
        let price = match self.price_control {
            PriceControl::None => None,
            PriceControl::Floor { rho } => Some(format!("price_floor({rho})")),
            PriceControl::Ceiling { rho } => Some(format!("price_ceiling({rho})")),
            PriceControl::Parity { rho } => Some(format!("price_parity({rho})")),
        };
        let cost = match self.cost_control {
            CostControl::None => None,
            CostControl::Parity => Some("cost_parity".to_string()),
            CostControl::Ceiling { gamma } => Some(format!("cost_ceiling({gamma})")),
        };
        match (price, cost) {
            (None, None) => "none".into(),
            (Some(p), None) => p,
            (None, Some(c)) => c,
            (Some(p), Some(c)) => format!("{p}+{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketPrimitives {
    pub telehealth_supply: InputSupplySpec,
    pub inperson_supply: InputSupplySpec,
    pub production: ProductionSpec,
    pub demand: DemandSpec,
}

impl MarketPrimitives {
    pub fn validate(&self) -> Result<()> {
        self.telehealth_supply.validate()?;
        self.inperson_supply.validate()?;
        self.production.validate()?;
        self.demand.validate()
    }

    /// Checks `σ s_I < 1` at a solved point.
    pub fn check_substitution_assumption(&self, eq: &Equilibrium) -> Result<()> {
        let (_, s_i) = eq.cost_shares();
        let v = self.production.substitution * s_i;
        if v < 1.0 {
            Ok(())
        } else {
            Err(Error::Assumption(format!("sigma * s_I = {v} must be < 1")))
        }
    }
}

/// A solved market state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub quantity: f64,
    pub full_price: f64,
    pub telehealth_input: f64,
    pub inperson_input: f64,
    pub telehealth_price: f64,
    pub inperson_price: f64,
}

impl Equilibrium {
    /// Telehealth expenditure per unit of output, `r_T T / Y`.
    pub fn telehealth_unit_revenue(&self) -> f64 {
        self.telehealth_price * self.telehealth_input / self.quantity
    }

    pub fn cost_shares(&self) -> (f64, f64) {
        let ct = self.telehealth_price * self.telehealth_input;
        let ci = self.inperson_price * self.inperson_input;
        let s_t = ct / (ct + ci);
        (s_t, 1.0 - s_t)
    }

    /// Relative violation of `P Y = r_T T + r_I I`.
    pub fn zero_profit_gap(&self) -> f64 {
        let revenue = self.full_price * self.quantity;
        let cost = self.telehealth_price * self.telehealth_input + self.inperson_price * self.inperson_input;
        (revenue - cost).abs() / revenue
    }
}

/// Consumer cost-sharing primitives behind the money price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullPriceSpec {
    pub annual_deductible: f64,
    pub fixed_copay: f64,
    pub service_cost: f64,
    pub coinsurance_rate: f64,
    pub premium: f64,
    pub provider_share: f64,
    pub insurer_share: f64,
    pub admin_share: f64,
}

impl FullPriceSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("annual_deductible", self.annual_deductible),
            ("fixed_copay", self.fixed_copay),
            ("service_cost", self.service_cost),
            ("premium", self.premium),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        for (name, v) in [
            ("coinsurance_rate", self.coinsurance_rate),
            ("provider_share", self.provider_share),
            ("insurer_share", self.insurer_share),
            ("admin_share", self.admin_share),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        let total = self.provider_share + self.insurer_share + self.admin_share;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("premium shares must sum to 1, got {total}")));
        }
        Ok(())
    }

    /// Premium per unit of care split as (provider, insurer, admin).
    pub fn premium_split(&self, quantity: f64) -> Result<(f64, f64, f64)> {
        if !(quantity > 0.0) {
            return Err(Error::domain(format!("quantity must be > 0, got {quantity}")));
        }
        let per_unit = self.premium / quantity;
        Ok((per_unit * self.provider_share, per_unit * self.insurer_share, per_unit * self.admin_share))
    }
}

/// Out-of-pocket cost per unit and the full money price:
/// `E_oop = D/Y + c_fixed + rate * S`, `P_Y = E_oop + r/Y`.
pub fn full_price(spec: &FullPriceSpec, quantity: f64) -> Result<(f64, f64)> {
    if !(quantity > 0.0) {
        return Err(Error::domain(format!("quantity must be > 0, got {quantity}")));
    }
    let e_oop = spec.annual_deductible / quantity + spec.fixed_copay + spec.coinsurance_rate * spec.service_cost;
    Ok((e_oop, e_oop + spec.premium / quantity))
}
