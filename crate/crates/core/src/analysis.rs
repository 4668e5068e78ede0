//! Duality versus baseline comparison and the two-prosumer indifference line.

use alloc::vec::Vec;

use crate::equilibrium::{assemble_foc_system, solve_n, EquilibriumResult};
use crate::linalg::Cholesky;
use crate::{Error, MarketInstance, Mode, Result};

/// Tolerance for the "on the line" classification.
pub const ON_LINE_TOLERANCE: f64 = 1e-12;

/// Duality minus baseline equilibrium for the same instance.
#[derive(Debug, Clone, PartialEq)]
pub struct DualityDelta {
    pub dx_s: Vec<f64>,
    pub dp: f64,
}

/// Both equilibria of one instance plus their difference.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeComparison {
    pub duality: EquilibriumResult,
    pub baseline: EquilibriumResult,
    pub delta: DualityDelta,
}

/// Solves `m` under both objectives (same `D`, costs and consumption).
///
/// The supply delta comes from its own system `M dx = x_b`: the two
/// right-hand sides differ only by `x_b`, so `dx` depends on `a_s` and `x_b`
/// alone and is bit-identical under shifts of `D` or `b_s`. The price delta
/// is `-sum(dx)` because price is linear in total supply.
pub fn compare_modes(m: &MarketInstance) -> Result<ModeComparison> {
    let duality = solve_n(&m.with_mode(Mode::Duality))?;
    let baseline = solve_n(&m.with_mode(Mode::Baseline))?;
    let delta = duality_delta(m)?;
    Ok(ModeComparison {
        duality,
        baseline,
        delta,
    })
}

pub fn duality_delta(m: &MarketInstance) -> Result<DualityDelta> {
    let (matrix, _) = assemble_foc_system(m);
    let x_b: Vec<f64> = m.prosumers().iter().map(|p| p.x_b).collect();
    let dx_s = Cholesky::factor(&matrix)?.solve(&x_b);
    let dp = -dx_s.iter().sum::<f64>();
    Ok(DualityDelta { dx_s, dp })
}

/// Own consumption at which prosumer `i` is indifferent between supplying
/// more or less than a pure producer would: `x_bj / (2 a_sj + 2)`.
pub fn indifference_threshold(a_sj: f64, x_bj: f64) -> f64 {
    x_bj / (2.0 * a_sj + 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Above,
    On,
    Below,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Above => "above",
            Side::On => "on",
            Side::Below => "below",
        }
    }

    /// `1`, `0`, `-1` for above, on, below.
    pub fn code(self) -> i8 {
        match self {
            Side::Above => 1,
            Side::On => 0,
            Side::Below => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndifferenceClassification {
    pub side: Side,
    pub threshold: f64,
}

/// Position of prosumer `i`'s consumption relative to the indifference line
/// set by its single competitor.
pub fn classify_two_prosumer(m: &MarketInstance, i: usize) -> Result<IndifferenceClassification> {
    if m.len() != 2 {
        return Err(Error::WrongProsumerCount {
            expected: 2,
            found: m.len(),
        });
    }
    let own = m.prosumer(i)?;
    let other = &m.prosumers()[1 - i];
    let threshold = indifference_threshold(other.a_s, other.x_b);
    let gap = own.x_b - threshold;
    let side = if gap.abs() <= ON_LINE_TOLERANCE {
        Side::On
    } else if gap > 0.0 {
        Side::Above
    } else {
        Side::Below
    };
    Ok(IndifferenceClassification { side, threshold })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinePoint {
    pub a_sj: f64,
    pub x_bj: f64,
    pub x_bi: f64,
}

/// Indifference lines for several competitor cost slopes, sampled at
/// `n_points` evenly spaced `x_bj` in `[0, x_bj_max]`.
pub fn indifference_line_points(
    a_sj_values: &[f64],
    x_bj_max: f64,
    n_points: usize,
) -> Result<Vec<LinePoint>> {
    if n_points < 2 {
        return Err(Error::InvalidConfig("need at least 2 points per line"));
    }
    if !(x_bj_max > 0.0 && x_bj_max.is_finite()) {
        return Err(Error::InvalidParameter {
            field: "x_bj_max",
            value: x_bj_max,
        });
    }
    if let Some(&a) = a_sj_values.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidParameter {
            field: "a_sj",
            value: a,
        });
    }
    let last = (n_points - 1) as f64;
    Ok(a_sj_values
        .iter()
        .flat_map(|&a_sj| {
            (0..n_points).map(move |k| {
                let x_bj = x_bj_max * k as f64 / last;
                LinePoint {
                    a_sj,
                    x_bj,
                    x_bi: indifference_threshold(a_sj, x_bj),
                }
            })
        })
        .collect())
}
