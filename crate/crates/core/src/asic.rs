//! Whole-unit valuation: mortality-weighted sums of opportunity values,
//! reception delay, the naive drift baseline, and sensitivity sweeps.

use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::CalibrationContext;
use crate::error::{Error, Result};
use crate::lattice::closed_form_from_terms;
use crate::model::{AsicSpec, MarketModel, RandomWalkParams, ValidationMode, MORTALITY_CUTOFF};

/// One opportunity's contribution to an [`AsicQuote`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpportunityContribution {
    pub turn: u64,
    pub mortality_weight: f64,
    pub value: f64,
}

/// Value at `valuation_turn` of a unit delivered at `reception_turn`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsicQuote {
    pub valuation_turn: u64,
    pub reception_turn: u64,
    pub spot: f64,
    pub value: f64,
    pub breakdown: Vec<OpportunityContribution>,
}

/// Turn offsets after reception that carry weight: up to the lifetime
/// horizon, stopping once mortality drops below [`MORTALITY_CUTOFF`].
fn live_offsets(asic: &AsicSpec) -> impl Iterator<Item = (u64, f64)> + '_ {
    (0..asic.lifetime_horizon)
        .map(|offset| (offset, asic.mortality.weight_at(offset)))
        .take_while(|(_, w)| *w >= MORTALITY_CUTOFF)
}

fn check_inputs(spot: f64, asic: &AsicSpec, market: &MarketModel) -> Result<()> {
    if !(spot.is_finite() && spot > 0.0) {
        return Err(Error::domain(format!("spot must be > 0, got {spot}")));
    }
    asic.validate()?;
    market.validate()
}

/// Value at turn `t` of a unit received at turn `s >= t`, pricing every
/// future opportunity on the lattice rooted at `t`.
pub fn asic_value(
    s: u64,
    t: u64,
    spot: f64,
    asic: &AsicSpec,
    market: &MarketModel,
    walk: &RandomWalkParams,
) -> Result<AsicQuote> {
    if t > s {
        return Err(Error::domain(format!(
            "valuation turn {t} is after reception turn {s}"
        )));
    }
    check_inputs(spot, asic, market)?;
    walk.ensure_non_degenerate()?;
    walk.validate(ValidationMode::ExampleCompat)?;

    let breakdown: Vec<OpportunityContribution> = live_offsets(asic)
        .map(|(offset, weight)| {
            let turn = s + offset;
            let terms = market.opportunity_terms(turn, asic);
            OpportunityContribution {
                turn,
                mortality_weight: weight,
                value: closed_form_from_terms(terms, turn - t, spot, walk),
            }
        })
        .collect();
    let value = breakdown.iter().map(|c| c.mortality_weight * c.value).sum();
    Ok(AsicQuote {
        valuation_turn: t,
        reception_turn: s,
        spot,
        value,
        breakdown,
    })
}

/// Change in value from receiving the unit at `s_delayed` instead of `s`.
/// Negative numbers are losses.
#[allow(clippy::too_many_arguments)]
pub fn reception_delay_loss(
    s: u64,
    s_delayed: u64,
    t: u64,
    spot: f64,
    asic: &AsicSpec,
    market: &MarketModel,
    walk: &RandomWalkParams,
) -> Result<f64> {
    if s_delayed < s || s < t {
        return Err(Error::domain(format!(
            "expected delayed ({s_delayed}) >= reception ({s}) >= valuation ({t})"
        )));
    }
    let on_time = asic_value(s, t, spot, asic, market, walk)?;
    let delayed = asic_value(s_delayed, t, spot, asic, market, walk)?;
    Ok(delayed.value - on_time.value)
}

/// Deterministic baseline: extrapolate the spot at `growth_rate` per turn,
/// take each turn's shutdown-aware profit at that point forecast, and
/// discount at the risk-free rate. No optionality beyond the per-turn max.
#[allow(clippy::too_many_arguments)]
pub fn naive_expected_value(
    s: u64,
    t: u64,
    spot: f64,
    growth_rate: f64,
    gross_rate: f64,
    asic: &AsicSpec,
    market: &MarketModel,
) -> Result<f64> {
    if t > s {
        return Err(Error::domain(format!(
            "valuation turn {t} is after reception turn {s}"
        )));
    }
    if !(growth_rate.is_finite() && growth_rate > 0.0) {
        return Err(Error::domain(format!(
            "growth rate must be > 0, got {growth_rate}"
        )));
    }
    if !(gross_rate.is_finite() && gross_rate > 0.0) {
        return Err(Error::domain(format!(
            "gross rate must be > 0, got {gross_rate}"
        )));
    }
    check_inputs(spot, asic, market)?;
    Ok(live_offsets(asic)
        .map(|(offset, weight)| {
            let turn = s + offset;
            let elapsed = (turn - t) as f64;
            let forecast = spot * growth_rate.powf(elapsed);
            let profit = market.opportunity_terms(turn, asic).payoff(forecast);
            weight * profit / gross_rate.powf(elapsed)
        })
        .sum())
}

/// Probability-weighted average of the two branch values, discounted once.
/// Equals the arbitrage-free one-step price only when `q` is the
/// risk-neutral weight.
pub fn naive_branch_average(v_up: f64, v_down: f64, q: f64, gross_rate: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::domain(format!(
            "probability must lie in [0, 1], got {q}"
        )));
    }
    Ok((q * v_up + (1.0 - q) * v_down) / gross_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Volatility,
    Delay,
    Date,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub axis_value: f64,
    pub value_usd: f64,
    /// Change relative to the baseline, in percent.
    pub percent_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<SweepPoint>,
    pub baseline: SweepPoint,
}

fn check_increasing(grid: &[f64], what: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::domain(format!("{what} grid is empty")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain(format!(
            "{what} grid must be strictly increasing"
        )));
    }
    Ok(())
}

fn percent_change(value: f64, base: f64) -> f64 {
    if base == 0.0 {
        if value == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(value)
        }
    } else {
        100.0 * (value - base) / base
    }
}

/// Revalues the unit for each annual volatility in `sigma_grid`, rebuilding
/// the per-turn walk from `context` with that volatility. Percent changes
/// are relative to the first grid point.
#[allow(clippy::too_many_arguments)]
pub fn volatility_sweep(
    sigma_grid: &[f64],
    context: &CalibrationContext,
    s: u64,
    t: u64,
    spot: f64,
    asic: &AsicSpec,
    market: &MarketModel,
) -> Result<SweepResult> {
    check_increasing(sigma_grid, "volatility")?;
    if sigma_grid[0] <= 0.0 {
        return Err(Error::domain("volatilities must be > 0"));
    }
    let values = sigma_grid
        .par_iter()
        .map(|&sigma| {
            let ctx = CalibrationContext {
                annual_volatility: sigma,
                ..*context
            };
            let walk = ctx.walk()?;
            Ok(asic_value(s, t, spot, asic, market, &walk)?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(build_sweep(
        SweepAxis::Volatility,
        sigma_grid,
        &values,
        values[0],
    ))
}

/// Percent change of the unit's value when delivery slips by each delay in
/// `delays` (turns), relative to delivery at `s`.
#[allow(clippy::too_many_arguments)]
pub fn delay_sweep(
    delays: &[u64],
    s: u64,
    t: u64,
    spot: f64,
    asic: &AsicSpec,
    market: &MarketModel,
    walk: &RandomWalkParams,
) -> Result<SweepResult> {
    let axis: Vec<f64> = delays.iter().map(|&d| d as f64).collect();
    check_increasing(&axis, "delay")?;
    let base = asic_value(s, t, spot, asic, market, walk)?.value;
    let values = delays
        .par_iter()
        .map(|&d| Ok(asic_value(s + d, t, spot, asic, market, walk)?.value))
        .collect::<Result<Vec<f64>>>()?;
    let mut sweep = build_sweep(SweepAxis::Delay, &axis, &values, base);
    sweep.baseline.axis_value = 0.0;
    Ok(sweep)
}

fn build_sweep(axis: SweepAxis, grid: &[f64], values: &[f64], base: f64) -> SweepResult {
    let points: Vec<SweepPoint> = grid
        .iter()
        .zip(values)
        .map(|(&x, &v)| SweepPoint {
            axis_value: x,
            value_usd: v,
            percent_change: percent_change(v, base),
        })
        .collect();
    let baseline = SweepPoint {
        axis_value: grid[0],
        value_usd: base,
        percent_change: 0.0,
    };
    SweepResult {
        axis,
        points,
        baseline,
    }
}
