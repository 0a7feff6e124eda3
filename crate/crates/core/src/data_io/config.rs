//! The JSON run configuration and its resolution into model inputs.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::calibration::{
    annualized_volatility, exp_growth_fit_dated, CalibrationContext, DAYS_PER_YEAR,
};
use crate::error::{Error, Result};
use crate::model::{
    AsicSpec, ElectricityPrice, HashRateModel, MarketModel, MortalityModel, RandomWalkParams,
    RewardSchedule, ValidationMode,
};

use super::MarketHistory;

/// Top-level configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub asic: AsicConfig,
    #[serde(default)]
    pub market: MarketConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub command: CommandConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsicConfig {
    pub hash_rate_hs: f64,
    /// Wall power draw. Exactly one of this and `energy_per_turn_wh`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_watts: Option<f64>,
    /// Energy burned by one turn of mining.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_per_turn_wh: Option<f64>,
    #[serde(default = "default_lifetime_days")]
    pub lifetime_days: i64,
    #[serde(default)]
    pub reception_delay_days: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub listed_price_usd: Option<f64>,
    /// Defaults to a step function ending at the lifetime.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mortality: Option<MortalityModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    /// Spot at the valuation date; read from the price history when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spot_usd: Option<f64>,
    #[serde(default = "default_interest")]
    pub annual_interest: f64,
    #[serde(default)]
    pub electricity: ElectricityConfig,
    #[serde(default = "default_pool_fee")]
    pub pool_fee: f64,
    #[serde(default = "default_trade_fee")]
    pub coin_trade_fee: f64,
    #[serde(default = "default_trade_fee")]
    pub bond_trade_fee: f64,
    #[serde(default)]
    pub block_reward: BlockRewardConfig,
    /// Network hash-rate forecast; fitted to the hash-rate history when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash_rate: Option<HashRateConfig>,
}

impl Default for MarketConfig {
    fn default() -> Self {
        MarketConfig {
            spot_usd: None,
            annual_interest: default_interest(),
            electricity: ElectricityConfig::default(),
            pool_fee: default_pool_fee(),
            coin_trade_fee: default_trade_fee(),
            bond_trade_fee: default_trade_fee(),
            block_reward: BlockRewardConfig::default(),
            hash_rate: None,
        }
    }
}

/// Electricity tariff with an explicit unit. Exactly one field is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectricityConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usd_per_kwh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usd_per_wh: Option<f64>,
}

impl Default for ElectricityConfig {
    fn default() -> Self {
        ElectricityConfig {
            usd_per_kwh: Some(0.035),
            usd_per_wh: None,
        }
    }
}

impl ElectricityConfig {
    pub fn usd_per_wh(&self) -> Result<f64> {
        let price = match (self.usd_per_kwh, self.usd_per_wh) {
            (Some(kwh), None) => kwh / 1000.0,
            (None, Some(wh)) => wh,
            _ => {
                return Err(Error::Config(
                    "electricity needs exactly one of usd_per_kwh and usd_per_wh".into(),
                ))
            }
        };
        if !(price.is_finite() && price >= 0.0) {
            return Err(Error::Config(format!(
                "electricity price must be >= 0, got {price}"
            )));
        }
        Ok(price)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockRewardConfig {
    /// Coins paid to the whole network per turn.
    #[serde(default = "default_reward")]
    pub coins_per_turn: f64,
    /// The reward halves every this many turns, counted from the valuation date.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halving_epoch_turns: Option<u64>,
}

impl Default for BlockRewardConfig {
    fn default() -> Self {
        BlockRewardConfig {
            coins_per_turn: default_reward(),
            halving_epoch_turns: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HashRateConfig {
    pub initial_hs: f64,
    #[serde(default)]
    pub growth_per_turn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    #[serde(default = "default_turns_per_day")]
    pub turns_per_day: u32,
    #[serde(default = "default_steps")]
    pub steps_per_opportunity: u64,
    /// First date of the volatility window; the window ends at the valuation date.
    #[serde(default = "default_volatility_start")]
    pub volatility_start: Option<NaiveDate>,
    /// Days of hash-rate history before the valuation date used for the growth fit.
    #[serde(default = "default_hashrate_window")]
    pub hashrate_window_days: u64,
    /// Skips estimation from the price history when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annual_volatility: Option<f64>,
    /// Uses these factors verbatim instead of calibrating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walk: Option<WalkConfig>,
    /// Re-estimate volatility at every backtest rebalance.
    #[serde(default = "default_true")]
    pub recalibrate: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            turns_per_day: default_turns_per_day(),
            steps_per_opportunity: default_steps(),
            volatility_start: default_volatility_start(),
            hashrate_window_days: default_hashrate_window(),
            annual_volatility: None,
            walk: None,
            recalibrate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkConfig {
    pub up: f64,
    pub down: f64,
    /// Defaults to the per-turn growth of the annual interest rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gross_rate: Option<f64>,
    #[serde(default = "default_mode")]
    pub mode: ValidationMode,
}

/// Defaults for command-line parameters; flags take precedence.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valuation_date: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valuation_turn: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_days: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_grid: Option<String>,
}

fn default_lifetime_days() -> i64 {
    730
}
fn default_interest() -> f64 {
    0.02
}
fn default_pool_fee() -> f64 {
    0.02
}
fn default_trade_fee() -> f64 {
    0.01
}
fn default_reward() -> f64 {
    // 6.25 coins per block, 144 blocks per day.
    900.0
}
fn default_turns_per_day() -> u32 {
    1
}
fn default_steps() -> u64 {
    25
}
fn default_volatility_start() -> Option<NaiveDate> {
    NaiveDate::from_ymd_opt(2013, 1, 1)
}
fn default_hashrate_window() -> u64 {
    730
}
fn default_true() -> bool {
    true
}
fn default_mode() -> ValidationMode {
    ValidationMode::Strict
}

impl RunConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.asic;
        if !(a.hash_rate_hs.is_finite() && a.hash_rate_hs > 0.0) {
            return Err(Error::Config(format!(
                "asic.hash_rate_hs must be > 0, got {}",
                a.hash_rate_hs
            )));
        }
        match (a.power_watts, a.energy_per_turn_wh) {
            (Some(v), None) | (None, Some(v)) if v.is_finite() && v >= 0.0 => {}
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::Config(
                    "asic needs exactly one of power_watts and energy_per_turn_wh".into(),
                ))
            }
            _ => return Err(Error::Config("asic power must be >= 0".into())),
        }
        if a.lifetime_days <= 0 {
            return Err(Error::Config(format!(
                "asic.lifetime_days must be > 0, got {}",
                a.lifetime_days
            )));
        }
        if let Some(p) = a.listed_price_usd {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::Config(format!(
                    "asic.listed_price_usd must be >= 0, got {p}"
                )));
            }
        }
        if let Some(m) = &a.mortality {
            m.validate()
                .map_err(|e| Error::Config(format!("asic.mortality: {e}")))?;
        }

        let m = &self.market;
        if let Some(spot) = m.spot_usd {
            if !(spot.is_finite() && spot > 0.0) {
                return Err(Error::Config(format!(
                    "market.spot_usd must be > 0, got {spot}"
                )));
            }
        }
        if !(m.annual_interest.is_finite() && m.annual_interest > -1.0) {
            return Err(Error::Config(
                "market.annual_interest must exceed -1".into(),
            ));
        }
        m.electricity.usd_per_wh()?;
        for (name, fee) in [
            ("pool_fee", m.pool_fee),
            ("coin_trade_fee", m.coin_trade_fee),
            ("bond_trade_fee", m.bond_trade_fee),
        ] {
            if !(0.0..1.0).contains(&fee) {
                return Err(Error::Config(format!(
                    "market.{name} must lie in [0, 1), got {fee}"
                )));
            }
        }
        let r = &m.block_reward;
        if !(r.coins_per_turn.is_finite() && r.coins_per_turn >= 0.0) {
            return Err(Error::Config(
                "market.block_reward.coins_per_turn must be >= 0".into(),
            ));
        }
        if r.halving_epoch_turns == Some(0) {
            return Err(Error::Config(
                "market.block_reward.halving_epoch_turns must be > 0".into(),
            ));
        }
        if let Some(h) = m.hash_rate {
            if !(h.initial_hs.is_finite() && h.initial_hs > 0.0 && h.growth_per_turn.is_finite()) {
                return Err(Error::Config(
                    "market.hash_rate.initial_hs must be > 0".into(),
                ));
            }
        }

        let c = &self.calibration;
        if c.turns_per_day == 0 {
            return Err(Error::Config(
                "calibration.turns_per_day must be > 0".into(),
            ));
        }
        if c.steps_per_opportunity == 0 {
            return Err(Error::Config(
                "calibration.steps_per_opportunity must be > 0".into(),
            ));
        }
        if c.hashrate_window_days < 1 {
            return Err(Error::Config(
                "calibration.hashrate_window_days must be > 0".into(),
            ));
        }
        if let Some(sigma) = c.annual_volatility {
            if !(sigma.is_finite() && sigma >= 0.0) {
                return Err(Error::Config(format!(
                    "calibration.annual_volatility must be >= 0, got {sigma}"
                )));
            }
        }
        Ok(())
    }

    /// One turn, in years.
    pub fn turn_length(&self) -> f64 {
        1.0 / (DAYS_PER_YEAR * self.calibration.turns_per_day as f64)
    }

    pub fn turns_per_day(&self) -> u64 {
        self.calibration.turns_per_day as u64
    }

    /// The per-turn gross interest rate.
    pub fn gross_rate(&self) -> f64 {
        (1.0 + self.market.annual_interest).powf(self.turn_length())
    }

    pub fn lifetime_turns(&self) -> u64 {
        self.asic.lifetime_days as u64 * self.turns_per_day()
    }

    pub fn reception_turn(&self) -> u64 {
        self.asic.reception_delay_days * self.turns_per_day()
    }

    /// The hardware as seen from a valuation at turn 0.
    pub fn asic_spec(&self) -> Result<AsicSpec> {
        let a = &self.asic;
        let energy_wh = match (a.power_watts, a.energy_per_turn_wh) {
            (Some(watts), _) => watts * 24.0 / self.turns_per_day() as f64,
            (None, Some(wh)) => wh,
            (None, None) => unreachable!("validated"),
        };
        let lifetime = self.lifetime_turns();
        let spec = AsicSpec {
            hash_rate: a.hash_rate_hs,
            energy_per_turn: energy_wh / a.hash_rate_hs,
            mortality: a
                .mortality
                .clone()
                .unwrap_or(MortalityModel::Step { lifetime }),
            reception_turn: self.reception_turn(),
            lifetime_horizon: lifetime,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn reward_schedule(&self) -> RewardSchedule {
        let r = &self.market.block_reward;
        match r.halving_epoch_turns {
            Some(epoch) => RewardSchedule::Halving {
                initial: r.coins_per_turn,
                epoch,
            },
            None => RewardSchedule::Constant(r.coins_per_turn),
        }
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    RunConfig::from_json(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Where a resolved input came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Config,
    History,
}

/// Everything the models were calibrated to, for the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationSummary {
    pub valuation_date: Option<NaiveDate>,
    pub turns_per_day: u32,
    pub turn_length_years: f64,
    pub annual_interest: f64,
    pub gross_rate: f64,
    pub spot_usd: f64,
    pub spot_source: Source,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annual_volatility: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volatility_source: Option<Source>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub volatility_observations: Option<usize>,
    pub walk_up: f64,
    pub walk_down: f64,
    pub walk_gross_rate: f64,
    pub walk_mode: ValidationMode,
    pub hash_rate_initial_hs: f64,
    pub hash_rate_growth_per_turn: f64,
    pub hash_rate_source: Source,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hash_rate_observations: Option<usize>,
}

/// A configuration resolved against market history at a valuation date.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub asic: AsicSpec,
    pub market: MarketModel,
    pub walk: RandomWalkParams,
    /// Present when the walk was calibrated from a volatility rather than
    /// given explicitly.
    pub context: Option<CalibrationContext>,
    pub summary: CalibrationSummary,
}

impl RunConfig {
    /// Builds model inputs. Values the config leaves out are taken from
    /// `history` as of `valuation_date` (default: the last price date).
    pub fn resolve(
        &self,
        history: Option<&MarketHistory>,
        valuation_date: Option<NaiveDate>,
    ) -> Result<Scenario> {
        self.validate()?;
        let valuation_date = valuation_date
            .or(self.command.valuation_date)
            .or_else(|| history.and_then(|h| h.prices.points.last().map(|p| p.0)));
        let need_history = |what: &str| {
            Error::Config(format!(
                "{what} is not configured and no market history was given"
            ))
        };

        let (spot, spot_source) = match self.market.spot_usd {
            Some(spot) => (spot, Source::Config),
            None => {
                let h = history.ok_or_else(|| need_history("market.spot_usd"))?;
                let date = valuation_date.expect("history has prices");
                let (_, p) = h
                    .prices
                    .last_on_or_before(date)
                    .ok_or_else(|| Error::data(format!("no price on or before {date}")))?;
                (p, Source::History)
            }
        };

        let (hash_initial, hash_growth, hash_source, hash_obs) = match self.market.hash_rate {
            Some(h) => (h.initial_hs, h.growth_per_turn, Source::Config, None),
            None => {
                let h = history.ok_or_else(|| need_history("market.hash_rate"))?;
                let date = valuation_date.ok_or_else(|| need_history("valuation date"))?;
                let start = date - chrono::Days::new(self.calibration.hashrate_window_days);
                let window: Vec<_> = h
                    .hash_rates
                    .between(None, Some(date))
                    .iter()
                    .copied()
                    .filter(|(d, _)| *d > start)
                    .collect();
                let (h0, g) = exp_growth_fit_dated(&window, date, self.turns_per_day() as f64)?;
                (h0, g, Source::History, Some(window.len()))
            }
        };

        let market = MarketModel {
            spot_price: spot,
            hash_rate: HashRateModel::Exponential {
                initial: hash_initial,
                growth: hash_growth,
            },
            block_reward: self.reward_schedule(),
            electricity: ElectricityPrice::Constant(self.market.electricity.usd_per_wh()?),
            pool_fee: self.market.pool_fee,
            coin_trade_fee: self.market.coin_trade_fee,
            bond_trade_fee: self.market.bond_trade_fee,
        };
        market.validate()?;

        let mut sigma_obs = None;
        let (walk, context, sigma, sigma_source, mode) = match self.calibration.walk {
            Some(w) => {
                let rate = w.gross_rate.unwrap_or_else(|| self.gross_rate());
                let walk = RandomWalkParams::with_mode(w.up, w.down, rate, w.mode)?;
                (walk, None, None, None, w.mode)
            }
            None => {
                let (sigma, source) = match self.calibration.annual_volatility {
                    Some(s) => (s, Source::Config),
                    None => {
                        let h =
                            history.ok_or_else(|| need_history("calibration.annual_volatility"))?;
                        let window = h
                            .prices
                            .between(self.calibration.volatility_start, valuation_date);
                        sigma_obs = Some(window.len());
                        (annualized_volatility(window)?, Source::History)
                    }
                };
                let ctx = CalibrationContext::per_turn(
                    sigma,
                    self.market.annual_interest,
                    self.turn_length(),
                    1,
                )?;
                (
                    ctx.walk()?,
                    Some(ctx),
                    Some(sigma),
                    Some(source),
                    ValidationMode::Strict,
                )
            }
        };

        Ok(Scenario {
            asic: self.asic_spec()?,
            summary: CalibrationSummary {
                valuation_date,
                turns_per_day: self.calibration.turns_per_day,
                turn_length_years: self.turn_length(),
                annual_interest: self.market.annual_interest,
                gross_rate: self.gross_rate(),
                spot_usd: spot,
                spot_source,
                annual_volatility: sigma,
                volatility_source: sigma_source,
                volatility_observations: sigma_obs,
                walk_up: walk.up,
                walk_down: walk.down,
                walk_gross_rate: walk.gross_rate,
                walk_mode: mode,
                hash_rate_initial_hs: hash_initial,
                hash_rate_growth_per_turn: hash_growth,
                hash_rate_source: hash_source,
                hash_rate_observations: hash_obs,
            },
            market,
            walk,
            context,
        })
    }
}
