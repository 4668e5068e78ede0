//! Market primitives: prosumer parameters, the linear clearing price,
//! quadratic production cost, payoffs and single-prosumer best responses.
//!
//! Payoffs are reported net of consumption utility. The utility of the
//! exogenous consumption does not depend on any strategic variable, so it
//! drops out of every best response and every duality comparison.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Cost coefficients and own consumption of one prosumer.
///
/// Production cost is `a_s * x^2 + b_s * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProsumerParams {
    pub a_s: f64,
    pub b_s: f64,
    pub x_b: f64,
}

impl ProsumerParams {
    pub fn new(a_s: f64, b_s: f64, x_b: f64) -> Result<Self> {
        let params = ProsumerParams { a_s, b_s, x_b };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_s.is_finite() && self.a_s > 0.0) {
            return Err(Error::InvalidParameter {
                field: "a_s",
                value: self.a_s,
            });
        }
        if !(self.b_s.is_finite() && self.b_s >= 0.0) {
            return Err(Error::InvalidParameter {
                field: "b_s",
                value: self.b_s,
            });
        }
        if !(self.x_b.is_finite() && self.x_b >= 0.0) {
            return Err(Error::InvalidParameter {
                field: "x_b",
                value: self.x_b,
            });
        }
        Ok(())
    }

    /// Slope of the best-response denominator, `2 + 2 a_s`.
    #[inline]
    pub fn foc_diagonal(&self) -> f64 {
        2.0 + 2.0 * self.a_s
    }
}

/// Whether a prosumer's own consumption enters its strategic decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Mode {
    /// Prosumers pay the clearing price on their own consumption.
    Duality,
    /// Pure-producer counterfactual: the `x_b` term is dropped.
    Baseline,
}

impl Mode {
    pub const BOTH: [Mode; 2] = [Mode::Duality, Mode::Baseline];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Duality => "duality",
            Mode::Baseline => "baseline",
        }
    }

    /// Consumption that enters the FOC under this mode.
    #[inline]
    pub fn effective_consumption(self, p: &ProsumerParams) -> f64 {
        match self {
            Mode::Duality => p.x_b,
            Mode::Baseline => 0.0,
        }
    }
}

impl core::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "duality" => Ok(Mode::Duality),
            "baseline" => Ok(Mode::Baseline),
            _ => Err(Error::InvalidConfig("mode must be `duality` or `baseline`")),
        }
    }
}

/// A single-bus market: total exogenous demand `demand` (the `D` of the
/// inverse demand `p = D - sum(x_s)`), an ordered list of prosumers and the
/// objective used when solving.
///
/// `D` is a slack sink: nothing ties it to the prosumers' own consumption.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketInstance {
    demand: f64,
    prosumers: Vec<ProsumerParams>,
    mode: Mode,
}

impl MarketInstance {
    pub fn new(demand: f64, prosumers: Vec<ProsumerParams>, mode: Mode) -> Result<Self> {
        if !(demand.is_finite() && demand > 0.0) {
            return Err(Error::InvalidParameter {
                field: "D",
                value: demand,
            });
        }
        if prosumers.len() < 2 {
            return Err(Error::TooFewProsumers(prosumers.len()));
        }
        for p in &prosumers {
            p.validate()?;
        }
        Ok(MarketInstance {
            demand,
            prosumers,
            mode,
        })
    }

    #[inline]
    pub fn demand(&self) -> f64 {
        self.demand
    }

    #[inline]
    pub fn prosumers(&self) -> &[ProsumerParams] {
        &self.prosumers
    }

    #[inline]
    pub fn mode(&self) -> Mode {
        self.mode
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.prosumers.len()
    }

    /// Always false; kept alongside `len` for clippy.
    #[inline]
    pub fn is_empty(&self) -> bool {
        self.prosumers.is_empty()
    }

    pub fn with_mode(&self, mode: Mode) -> MarketInstance {
        MarketInstance {
            mode,
            ..self.clone()
        }
    }

    pub fn with_demand(&self, demand: f64) -> Result<MarketInstance> {
        MarketInstance::new(demand, self.prosumers.clone(), self.mode)
    }

    pub fn with_prosumers(&self, prosumers: Vec<ProsumerParams>) -> Result<MarketInstance> {
        MarketInstance::new(self.demand, prosumers, self.mode)
    }

    pub fn prosumer(&self, i: usize) -> Result<&ProsumerParams> {
        self.prosumers.get(i).ok_or(Error::IndexOutOfRange {
            index: i,
            len: self.prosumers.len(),
        })
    }

    pub(crate) fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: x.len(),
            });
        }
        Ok(())
    }
}

/// `p = D - sum(x_s)`. Non-positive prices are returned as-is.
#[inline]
pub fn clearing_price(demand: f64, x_s: &[f64]) -> f64 {
    demand - x_s.iter().sum::<f64>()
}

#[inline]
pub fn producer_cost(p: &ProsumerParams, x_s: f64) -> f64 {
    p.a_s * x_s * x_s + p.b_s * x_s
}

#[inline]
pub fn marginal_cost(p: &ProsumerParams, x_s: f64) -> f64 {
    2.0 * p.a_s * x_s + p.b_s
}

/// Payoff of prosumer `i` at supply profile `x_s`, net of consumption
/// utility: `-p x_b + p x_s - c(x_s)` under duality, `p x_s - c(x_s)` under
/// baseline.
pub fn payoff(i: usize, m: &MarketInstance, x_s: &[f64]) -> Result<f64> {
    let params = m.prosumer(i)?;
    m.check_len(x_s)?;
    let price = clearing_price(m.demand, x_s);
    Ok(payoff_at(params, m.mode, price, x_s[i]))
}

#[inline]
pub(crate) fn payoff_at(params: &ProsumerParams, mode: Mode, price: f64, own_supply: f64) -> f64 {
    -price * mode.effective_consumption(params) + price * own_supply
        - producer_cost(params, own_supply)
}

/// Best response of prosumer `i` to the competitors' supplies `x_other`
/// (length `n - 1`, in index order with `i` removed).
///
/// May be negative; callers decide whether to clamp.
pub fn best_response(i: usize, m: &MarketInstance, x_other: &[f64]) -> Result<f64> {
    let params = m.prosumer(i)?;
    if x_other.len() + 1 != m.len() {
        return Err(Error::LengthMismatch {
            expected: m.len() - 1,
            found: x_other.len(),
        });
    }
    Ok(best_response_to_total(
        params,
        m.mode,
        m.demand,
        x_other.iter().sum(),
    ))
}

#[inline]
pub(crate) fn best_response_to_total(
    params: &ProsumerParams,
    mode: Mode,
    demand: f64,
    others_total: f64,
) -> f64 {
    (demand - others_total - params.b_s + mode.effective_consumption(params)) / params.foc_diagonal()
}
