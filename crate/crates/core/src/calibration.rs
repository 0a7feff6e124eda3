//! Estimation of model parameters from market history.

use chrono::NaiveDate;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::RandomWalkParams;

/// Calendar days per year used for every annualization.
pub const DAYS_PER_YEAR: f64 = 365.0;

/// Inputs that pin down the per-turn random walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationContext {
    /// Annualized volatility of log-returns (σ).
    pub annual_volatility: f64,
    /// Calendar span of the lattice, in years (n).
    pub calendar_horizon: f64,
    /// Number of lattice steps spanning `calendar_horizon` (t).
    pub lattice_steps: u64,
    /// Annual interest rate (η).
    pub annual_interest: f64,
    /// Length of one turn in years.
    pub turn_length: f64,
}

impl CalibrationContext {
    /// Context whose lattice steps are turns of `turn_length` years.
    pub fn per_turn(
        annual_volatility: f64,
        annual_interest: f64,
        turn_length: f64,
        lattice_steps: u64,
    ) -> Result<Self> {
        if !(turn_length.is_finite() && turn_length > 0.0) {
            return Err(Error::Calibration(format!(
                "turn length must be > 0 years, got {turn_length}"
            )));
        }
        if lattice_steps < 1 {
            return Err(Error::Calibration(
                "at least one lattice step required".into(),
            ));
        }
        if !(annual_volatility.is_finite() && annual_volatility >= 0.0) {
            return Err(Error::Calibration(format!(
                "volatility must be >= 0, got {annual_volatility}"
            )));
        }
        if !(annual_interest.is_finite() && annual_interest > -1.0) {
            return Err(Error::Calibration(format!(
                "annual interest must exceed -100%, got {annual_interest}"
            )));
        }
        Ok(CalibrationContext {
            annual_volatility,
            calendar_horizon: turn_length * lattice_steps as f64,
            lattice_steps,
            annual_interest,
            turn_length,
        })
    }

    /// Gross risk-free return per turn, `(1 + η)^turn_length`.
    pub fn gross_rate(&self) -> f64 {
        (1.0 + self.annual_interest).powf(self.turn_length)
    }

    /// The strictly validated per-turn walk implied by this context.
    pub fn walk(&self) -> Result<RandomWalkParams> {
        let (up, down) = crr_factors(
            self.annual_volatility,
            self.calendar_horizon,
            self.lattice_steps,
        )?;
        RandomWalkParams::strict(up, down, self.gross_rate()).map_err(|e| {
            Error::Calibration(format!(
                "calibrated walk (Δ = {up}, δ = {down}, r = {}) is not arbitrage-free: {e}",
                self.gross_rate()
            ))
        })
    }
}

fn check_dated(series: &[(NaiveDate, f64)], what: &str) -> Result<()> {
    for (i, (date, value)) in series.iter().enumerate() {
        if !(value.is_finite() && *value > 0.0) {
            return Err(Error::data(format!(
                "non-positive {what} {value} on {date}"
            )));
        }
        if i > 0 && series[i - 1].0 >= *date {
            return Err(Error::data(format!(
                "{what} dates not increasing at {date}"
            )));
        }
    }
    Ok(())
}

/// Annualized sample standard deviation of log-returns.
///
/// Observation frequency comes from the mean date spacing; missing days are
/// simply absent observations.
pub fn annualized_volatility(prices: &[(NaiveDate, f64)]) -> Result<f64> {
    if prices.len() < 3 {
        return Err(Error::data(format!(
            "volatility needs at least 3 prices, got {}",
            prices.len()
        )));
    }
    check_dated(prices, "price")?;
    let returns: Vec<f64> = prices.windows(2).map(|w| (w[1].1 / w[0].1).ln()).collect();
    let m = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / m;
    let variance = returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);

    let span_days = (prices[prices.len() - 1].0 - prices[0].0).num_days() as f64;
    let spacing_days = span_days / m;
    let per_year = DAYS_PER_YEAR / spacing_days;
    Ok(variance.sqrt() * per_year.sqrt())
}

/// Cox-Ross-Rubinstein factors for `steps` steps spanning `years`.
/// The down factor is the exact reciprocal of the up factor.
pub fn crr_factors(sigma: f64, years: f64, steps: u64) -> Result<(f64, f64)> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Calibration(format!(
            "volatility must be > 0 (got {sigma}); a zero volatility collapses the lattice to Δ = δ = 1"
        )));
    }
    if !(years.is_finite() && years > 0.0) {
        return Err(Error::Calibration(format!(
            "calendar horizon must be > 0, got {years}"
        )));
    }
    if steps < 1 {
        return Err(Error::Calibration("at least one step required".into()));
    }
    let up = (sigma * (years / steps as f64).sqrt()).exp();
    Ok((up, 1.0 / up))
}

/// Least-squares fit of `ln H = ln H0 + g·x`. Returns `(H0, g)`.
pub fn exp_growth_fit(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::data("growth fit needs at least 2 observations"));
    }
    if let Some((x, h)) = points.iter().find(|(_, h)| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::data(format!("non-positive hash-rate {h} at {x}")));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for &(x, h) in points {
        let dx = x - mean_x;
        sxy += dx * (h.ln() - mean_y);
        sxx += dx * dx;
    }
    if sxx == 0.0 {
        return Err(Error::data("growth fit needs at least two distinct times"));
    }
    let slope = sxy / sxx;
    Ok(((mean_y - slope * mean_x).exp(), slope))
}

/// Fits exponential growth to a dated series, measuring time in turns from
/// `origin` (earlier dates give negative turn indices).
pub fn exp_growth_fit_dated(
    series: &[(NaiveDate, f64)],
    origin: NaiveDate,
    turns_per_day: f64,
) -> Result<(f64, f64)> {
    check_dated(series, "hash-rate")?;
    let points: Vec<(f64, f64)> = series
        .iter()
        .map(|(d, h)| ((*d - origin).num_days() as f64 * turns_per_day, *h))
        .collect();
    exp_growth_fit(&points)
}

/// Mapping between calendar dates and turn indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TurnGrid {
    pub start: NaiveDate,
    pub turns_per_day: u32,
    /// Turns in the window.
    pub turns: u64,
    /// One turn, in years.
    pub turn_length: f64,
    pub annual_interest: f64,
    /// `(1 + η)^turn_length`.
    pub gross_rate: f64,
}

impl TurnGrid {
    pub fn turn_of(&self, date: NaiveDate) -> Option<u64> {
        let days = (date - self.start).num_days();
        u64::try_from(days)
            .ok()
            .map(|d| d * self.turns_per_day as u64)
    }

    /// Calendar date containing `turn`.
    pub fn date_of(&self, turn: u64) -> NaiveDate {
        self.start + chrono::Days::new(turn / self.turns_per_day as u64)
    }
}

/// Lays turns over the half-open window `[start, end)`.
pub fn turn_grid(
    start: NaiveDate,
    end: NaiveDate,
    turns_per_day: u32,
    annual_interest: f64,
) -> Result<TurnGrid> {
    let days = (end - start).num_days();
    if days <= 0 {
        return Err(Error::data(format!(
            "empty calendar window {start} .. {end}"
        )));
    }
    if turns_per_day == 0 {
        return Err(Error::data("turns per day must be at least 1"));
    }
    let turn_length = 1.0 / (DAYS_PER_YEAR * turns_per_day as f64);
    Ok(TurnGrid {
        start,
        turns_per_day,
        turns: days as u64 * turns_per_day as u64,
        turn_length,
        annual_interest,
        gross_rate: (1.0 + annual_interest).powf(turn_length),
    })
}

/// Up to `steps` rebalance turns, equally spaced over `[start, expiry)`.
/// When the span is shorter than `steps`, every turn is a rebalance.
pub fn rebalance_schedule(start: u64, expiry: u64, steps: u64) -> Vec<u64> {
    let span = expiry.saturating_sub(start);
    if span == 0 {
        return Vec::new();
    }
    let steps = steps.clamp(1, span);
    (0..steps).map(|j| start + j * span / steps).collect()
}
