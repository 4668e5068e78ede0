//! Nash equilibria of the quantity game.
//!
//! Two direct routes are provided: the explicit two-prosumer formula and a
//! dense Cholesky solve of the n-prosumer first-order system
//!
//! ```text
//! x_i (2 + 2 a_i) + sum_{j != i} x_j = D - b_i + x_b,i      (duality)
//! x_i (2 + 2 a_i) + sum_{j != i} x_j = D - b_i              (baseline)
//! ```
//!
//! Two independent checks sit next to them: a unilateral deviation search on
//! the payoff functions, and damped simultaneous best-response iteration.

use alloc::vec::Vec;

use crate::linalg::{Cholesky, DenseMatrix};
use crate::market::{best_response_to_total, clearing_price, payoff_at};
use crate::{Error, MarketInstance, Result};

/// Absolute FOC residual accepted for a direct solve.
pub const FOC_TOLERANCE: f64 = 1e-9;

/// Deviation offsets `±{1e-3, 1e-2, 1e-1, 1}`.
pub const DECADE_GRID: [f64; 8] = [-1.0, -1e-1, -1e-2, -1e-3, 1e-3, 1e-2, 1e-1, 1.0];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Flags {
    pub negative_supply: bool,
    pub nonpositive_price: bool,
}

impl Flags {
    pub fn any(self) -> bool {
        self.negative_supply || self.nonpositive_price
    }

    /// Bit 0: negative supply, bit 1: non-positive price.
    pub fn bits(self) -> u8 {
        self.negative_supply as u8 | (self.nonpositive_price as u8) << 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub x_s: Vec<f64>,
    pub price: f64,
    pub payoffs: Vec<f64>,
    pub foc_residual_max: f64,
    pub flags: Flags,
}

impl EquilibriumResult {
    /// Recomputes price, payoffs, residuals and flags for a supply profile.
    pub fn evaluate(m: &MarketInstance, x_s: Vec<f64>) -> Result<Self> {
        m.check_len(&x_s)?;
        let price = clearing_price(m.demand(), &x_s);
        let payoffs = m
            .prosumers()
            .iter()
            .zip(&x_s)
            .map(|(p, &x)| payoff_at(p, m.mode(), price, x))
            .collect();
        let foc_residual_max = foc_residual(m, &x_s)?
            .into_iter()
            .fold(0.0, |acc: f64, r| acc.max(r.abs()));
        let flags = Flags {
            negative_supply: x_s.iter().any(|&x| x < 0.0),
            nonpositive_price: price <= 0.0,
        };
        Ok(EquilibriumResult {
            x_s,
            price,
            payoffs,
            foc_residual_max,
            flags,
        })
    }
}

/// Explicit equilibrium of a two-prosumer market.
pub fn solve_closed_form_2(m: &MarketInstance) -> Result<EquilibriumResult> {
    if m.len() != 2 {
        return Err(Error::WrongProsumerCount {
            expected: 2,
            found: m.len(),
        });
    }
    let d = m.demand();
    let (pi, pj) = (&m.prosumers()[0], &m.prosumers()[1]);
    let (ai, bi, ci) = (pi.a_s, pi.b_s, m.mode().effective_consumption(pi));
    let (aj, bj, cj) = (pj.a_s, pj.b_s, m.mode().effective_consumption(pj));
    let den = 3.0 + 4.0 * ai + 4.0 * aj + 4.0 * ai * aj;

    // Cost part plus demand/consumption part, each over the shared denominator.
    let xi = (-2.0 * aj * bi - 2.0 * bi + bj) / den
        + (d + 2.0 * aj * d + 2.0 * aj * ci + 2.0 * ci - cj) / den;
    let xj = (-2.0 * ai * bj - 2.0 * bj + bi) / den
        + (d + 2.0 * ai * d + 2.0 * ai * cj + 2.0 * cj - ci) / den;
    EquilibriumResult::evaluate(m, alloc::vec![xi, xj])
}

/// FOC matrix `M` (diagonal `2 + 2 a_i`, ones elsewhere) and right-hand side.
pub fn assemble_foc_system(m: &MarketInstance) -> (DenseMatrix, Vec<f64>) {
    let ps = m.prosumers();
    let matrix = DenseMatrix::from_fn(ps.len(), |i, j| {
        if i == j {
            ps[i].foc_diagonal()
        } else {
            1.0
        }
    });
    let rhs = ps
        .iter()
        .map(|p| m.demand() - p.b_s + m.mode().effective_consumption(p))
        .collect();
    (matrix, rhs)
}

/// Equilibrium of an n-prosumer market by a direct solve of the FOC system.
pub fn solve_n(m: &MarketInstance) -> Result<EquilibriumResult> {
    let (matrix, rhs) = assemble_foc_system(m);
    let x = Cholesky::factor(&matrix)?.solve(&rhs);
    EquilibriumResult::evaluate(m, x)
}

/// Per-prosumer FOC residual; zero exactly at the equilibrium.
pub fn foc_residual(m: &MarketInstance, x_s: &[f64]) -> Result<Vec<f64>> {
    m.check_len(x_s)?;
    let d = m.demand();
    Ok(m
        .prosumers()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let others: f64 = others_total(x_s, i);
            x_s[i] * p.foc_diagonal() + others - (d - p.b_s + m.mode().effective_consumption(p))
        })
        .collect())
}

fn others_total(x: &[f64], skip: usize) -> f64 {
    x.iter()
        .enumerate()
        .filter(|&(j, _)| j != skip)
        .map(|(_, v)| v)
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub foc_residuals: Vec<f64>,
    /// Largest payoff gain over all prosumers and offsets. Negative when
    /// every deviation loses.
    pub deviation_improvement_max: f64,
    pub is_nash: bool,
}

/// Checks that no prosumer gains more than `tol` by moving its own supply by
/// any offset in `grid` while the others stay fixed. Payoffs follow the
/// instance's mode.
pub fn deviation_check(
    m: &MarketInstance,
    x_s: &[f64],
    grid: &[f64],
    tol: f64,
) -> Result<VerificationReport> {
    m.check_len(x_s)?;
    validate_grid(grid)?;
    let d = m.demand();
    let total: f64 = x_s.iter().sum();
    let mut best = f64::NEG_INFINITY;
    for (i, p) in m.prosumers().iter().enumerate() {
        let base = payoff_at(p, m.mode(), d - total, x_s[i]);
        for &delta in grid {
            let moved = x_s[i] + delta;
            let gain = payoff_at(p, m.mode(), d - (total + delta), moved) - base;
            best = best.max(gain);
        }
    }
    Ok(VerificationReport {
        foc_residuals: foc_residual(m, x_s)?,
        deviation_improvement_max: best,
        is_nash: best <= tol,
    })
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidGrid("empty"));
    }
    if grid.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidGrid("non-finite offset"));
    }
    if !grid.iter().all(|d| grid.contains(&-d)) {
        return Err(Error::InvalidGrid("not symmetric around zero"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsConfig {
    /// Relaxation factor in `(0, 1]`.
    pub damping: f64,
    /// Convergence threshold on the largest per-step update.
    pub tol: f64,
    pub max_iter: usize,
    /// Clamp every best response at zero (projected iteration).
    pub project_nonnegative: bool,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            damping: 0.5,
            tol: 1e-10,
            max_iter: 10_000,
            project_nonnegative: false,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig("damping must lie in (0, 1]"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidConfig("tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Converged {
    pub equilibrium: EquilibriumResult,
    pub iterations: usize,
}

/// Damped Jacobi best-response iteration
/// `x <- (1 - damping) x + damping BR(x)` until the largest update drops
/// below `cfg.tol`.
pub fn best_response_dynamics(
    m: &MarketInstance,
    x0: &[f64],
    cfg: &DynamicsConfig,
) -> Result<Converged> {
    cfg.validate()?;
    m.check_len(x0)?;
    let mut x = x0.to_vec();
    let mut next = x.clone();
    let mut last_update = f64::INFINITY;
    for iter in 1..=cfg.max_iter {
        for (i, p) in m.prosumers().iter().enumerate() {
            let mut br = best_response_to_total(p, m.mode(), m.demand(), others_total(&x, i));
            if cfg.project_nonnegative {
                br = br.max(0.0);
            }
            next[i] = (1.0 - cfg.damping) * x[i] + cfg.damping * br;
        }
        last_update = x
            .iter()
            .zip(&next)
            .fold(0.0, |acc: f64, (a, b)| acc.max((a - b).abs()));
        core::mem::swap(&mut x, &mut next);
        if last_update < cfg.tol {
            return Ok(Converged {
                equilibrium: EquilibriumResult::evaluate(m, x)?,
                iterations: iter,
            });
        }
        if !last_update.is_finite() {
            break;
        }
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iter,
        last_update,
    })
}

/// Equilibrium with supplies restricted to be non-negative, found by
/// projected best-response iteration from zero. Not used by the
/// unconstrained reproduction runs.
pub fn solve_nonnegative(m: &MarketInstance, cfg: &DynamicsConfig) -> Result<Converged> {
    let cfg = DynamicsConfig {
        project_nonnegative: true,
        ..*cfg
    };
    best_response_dynamics(m, &alloc::vec![0.0; m.len()], &cfg)
}
