//! Domain types shared by every valuation routine.
//!
//! Time is measured in integer *turns*. The calendar length of a turn is a
//! configuration value (see [`crate::calibration::TurnGrid`]); nothing here
//! assumes one.
//!
//! The exchange rate follows a recombining multiplicative random walk: each
//! turn the price is multiplied either by the up factor or the down factor.
//! Hash-rate, block reward and electricity price are deterministic
//! forecasts indexed by turn.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weight below which the mortality-weighted sum over opportunities stops.
pub const MORTALITY_CUTOFF: f64 = 1e-9;

/// How strictly [`RandomWalkParams::validate`] checks the no-arbitrage ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMode {
    /// `0 < down < 1 < rate < up`.
    Strict,
    /// `0 < down < up`, `rate >= 1`, `down < rate`. Admits a zero interest
    /// rate, as used by small hand-worked examples.
    ExampleCompat,
}

/// The inequality a random walk failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WalkViolation {
    NotFinite,
    DownNotPositive,
    DownNotBelowOne,
    RateNotAboveOne,
    RateBelowOne,
    UpNotAboveRate,
    DownNotBelowUp,
    DownNotBelowRate,
    ProbabilityOutOfRange,
}

impl fmt::Display for WalkViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            WalkViolation::NotFinite => "all factors finite fails",
            WalkViolation::DownNotPositive => "δ > 0 fails",
            WalkViolation::DownNotBelowOne => "δ < 1 fails",
            WalkViolation::RateNotAboveOne => "r > 1 fails",
            WalkViolation::RateBelowOne => "r ≥ 1 fails",
            WalkViolation::UpNotAboveRate => "Δ > r fails",
            WalkViolation::DownNotBelowUp => "δ < Δ fails",
            WalkViolation::DownNotBelowRate => "δ < r fails",
            WalkViolation::ProbabilityOutOfRange => "0 ≤ q ≤ 1 fails",
        };
        f.write_str(s)
    }
}

impl std::error::Error for WalkViolation {}

/// Per-turn description of the exchange-rate walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomWalkParams {
    /// Multiplier applied on an up move (Δ).
    pub up: f64,
    /// Multiplier applied on a down move (δ).
    pub down: f64,
    /// Gross risk-free return per turn, `1 + η`.
    pub gross_rate: f64,
    /// Real-world probability of an up move. Never used for pricing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub up_probability: Option<f64>,
}

impl RandomWalkParams {
    /// Builds a walk and checks it in [`ValidationMode::Strict`].
    pub fn strict(up: f64, down: f64, gross_rate: f64) -> Result<Self> {
        Self::with_mode(up, down, gross_rate, ValidationMode::Strict)
    }

    /// Builds a walk and checks it in [`ValidationMode::ExampleCompat`].
    pub fn example_compat(up: f64, down: f64, gross_rate: f64) -> Result<Self> {
        Self::with_mode(up, down, gross_rate, ValidationMode::ExampleCompat)
    }

    pub fn with_mode(up: f64, down: f64, gross_rate: f64, mode: ValidationMode) -> Result<Self> {
        let walk = RandomWalkParams {
            up,
            down,
            gross_rate,
            up_probability: None,
        };
        walk.validate(mode)?;
        Ok(walk)
    }

    pub fn with_up_probability(mut self, q: f64) -> Result<Self> {
        self.up_probability = Some(q);
        if !(0.0..=1.0).contains(&q) {
            return Err(WalkViolation::ProbabilityOutOfRange.into());
        }
        Ok(self)
    }

    /// Checks the no-arbitrage ordering of the factors. Total: never panics,
    /// reports the first inequality that fails.
    pub fn validate(&self, mode: ValidationMode) -> Result<(), WalkViolation> {
        let (up, down, r) = (self.up, self.down, self.gross_rate);
        if !(up.is_finite() && down.is_finite() && r.is_finite()) {
            return Err(WalkViolation::NotFinite);
        }
        if let Some(q) = self.up_probability {
            if !(0.0..=1.0).contains(&q) {
                return Err(WalkViolation::ProbabilityOutOfRange);
            }
        }
        if down <= 0.0 {
            return Err(WalkViolation::DownNotPositive);
        }
        match mode {
            ValidationMode::Strict => {
                if down >= 1.0 {
                    return Err(WalkViolation::DownNotBelowOne);
                }
                if r <= 1.0 {
                    return Err(WalkViolation::RateNotAboveOne);
                }
                if up <= r {
                    return Err(WalkViolation::UpNotAboveRate);
                }
            }
            ValidationMode::ExampleCompat => {
                if down >= up {
                    return Err(WalkViolation::DownNotBelowUp);
                }
                if r < 1.0 {
                    return Err(WalkViolation::RateBelowOne);
                }
                if down >= r {
                    return Err(WalkViolation::DownNotBelowRate);
                }
            }
        }
        Ok(())
    }

    /// Risk-neutral up weight `(r - δ) / (Δ - δ)`.
    pub fn risk_neutral_up(&self) -> f64 {
        (self.gross_rate - self.down) / (self.up - self.down)
    }

    pub(crate) fn ensure_non_degenerate(&self) -> Result<()> {
        if self.up == self.down {
            return Err(Error::DegenerateLattice);
        }
        Ok(())
    }
}

/// Fraction of hardware still running a given number of turns after
/// reception.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MortalityModel {
    /// Every unit runs for exactly `lifetime` turns.
    Step { lifetime: u64 },
    /// Survival decays as `exp(-decay * t)`.
    Exponential { decay: f64 },
    /// Explicit weights; entry `i` is `M(i)`. Offsets past the end weigh 0,
    /// so a non-zero last entry truncates abruptly.
    Table { weights: Vec<f64> },
}

impl MortalityModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            MortalityModel::Step { .. } => Ok(()),
            MortalityModel::Exponential { decay } => {
                if !(decay.is_finite() && *decay >= 0.0) {
                    return Err(Error::domain(format!(
                        "exponential mortality decay must be finite and >= 0, got {decay}"
                    )));
                }
                Ok(())
            }
            MortalityModel::Table { weights } => {
                if weights.first() != Some(&1.0) {
                    return Err(Error::domain("mortality table must start at 1"));
                }
                for pair in weights.windows(2) {
                    if !(pair[1] >= 0.0 && pair[1] <= pair[0]) {
                        return Err(Error::domain(
                            "mortality table must be non-increasing and non-negative",
                        ));
                    }
                }
                Ok(())
            }
        }
    }

    /// `M(offset)`. Negative offsets are a domain error.
    pub fn weight(&self, offset: i64) -> Result<f64> {
        if offset < 0 {
            return Err(Error::domain(format!(
                "mortality offset must be >= 0, got {offset}"
            )));
        }
        Ok(self.weight_at(offset as u64))
    }

    pub(crate) fn weight_at(&self, offset: u64) -> f64 {
        match self {
            MortalityModel::Step { lifetime } => {
                if offset < *lifetime {
                    1.0
                } else {
                    0.0
                }
            }
            MortalityModel::Exponential { decay } => (-decay * offset as f64).exp(),
            MortalityModel::Table { weights } => usize::try_from(offset)
                .ok()
                .and_then(|i| weights.get(i).copied())
                .unwrap_or(0.0),
        }
    }
}

/// Mining hardware.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsicSpec {
    /// Hashes per second (h).
    pub hash_rate: f64,
    /// Watt-hours per unit of hash-rate per turn (φ), so a turn of mining
    /// burns `hash_rate * energy_per_turn` Wh.
    pub energy_per_turn: f64,
    pub mortality: MortalityModel,
    /// Turn at which the hardware is delivered (s).
    pub reception_turn: u64,
    /// Maximum number of opportunities summed when valuing the whole unit.
    pub lifetime_horizon: u64,
}

impl AsicSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.hash_rate.is_finite() && self.hash_rate > 0.0) {
            return Err(Error::domain(format!(
                "hash rate must be > 0, got {}",
                self.hash_rate
            )));
        }
        if !(self.energy_per_turn.is_finite() && self.energy_per_turn >= 0.0) {
            return Err(Error::domain(format!(
                "energy per turn must be >= 0, got {}",
                self.energy_per_turn
            )));
        }
        if self.lifetime_horizon < 1 {
            return Err(Error::domain("lifetime horizon must be at least one turn"));
        }
        self.mortality.validate()
    }
}

/// Deterministic forecast of the competing network hash-rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HashRateModel {
    /// `initial * exp(growth * t)`.
    Exponential { initial: f64, growth: f64 },
    /// Per-turn values; turns past the end reuse the last value.
    Table(Vec<f64>),
}

impl HashRateModel {
    pub fn at(&self, turn: u64) -> f64 {
        match self {
            HashRateModel::Exponential { initial, growth } => {
                initial * (growth * turn as f64).exp()
            }
            HashRateModel::Table(values) => {
                let i = usize::try_from(turn).unwrap_or(usize::MAX);
                values
                    .get(i)
                    .or_else(|| values.last())
                    .copied()
                    .unwrap_or(f64::NAN)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            HashRateModel::Exponential { initial, growth } => {
                if !(initial.is_finite() && *initial > 0.0 && growth.is_finite()) {
                    return Err(Error::domain("hash-rate forecast must start positive"));
                }
            }
            HashRateModel::Table(values) => {
                if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::domain(
                        "hash-rate table must be non-empty with positive entries",
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Coins paid per turn to the whole network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSchedule {
    Constant(f64),
    /// Halves at every multiple of `epoch` turns.
    Halving {
        initial: f64,
        epoch: u64,
    },
    /// `(start_turn, reward)` pairs sorted by start turn; the first must start at 0.
    Piecewise(Vec<(u64, f64)>),
}

impl RewardSchedule {
    pub fn at(&self, turn: u64) -> f64 {
        match self {
            RewardSchedule::Constant(b) => *b,
            RewardSchedule::Halving { initial, epoch } => {
                let halvings = turn / (*epoch).max(1);
                if halvings >= 1100 {
                    0.0
                } else {
                    initial * 0.5f64.powi(halvings as i32)
                }
            }
            RewardSchedule::Piecewise(steps) => steps
                .iter()
                .take_while(|(start, _)| *start <= turn)
                .last()
                .map(|&(_, b)| b)
                .unwrap_or(0.0),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            RewardSchedule::Constant(b) => *b >= 0.0 && b.is_finite(),
            RewardSchedule::Halving { initial, epoch } => {
                *initial >= 0.0 && initial.is_finite() && *epoch > 0
            }
            RewardSchedule::Piecewise(steps) => {
                steps.first().map(|s| s.0) == Some(0)
                    && steps.windows(2).all(|w| w[0].0 < w[1].0)
                    && steps.iter().all(|s| s.1 >= 0.0 && s.1.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain("invalid block reward schedule"))
        }
    }
}

/// Electricity price in USD per watt-hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElectricityPrice {
    Constant(f64),
    /// Per-turn prices; turns past the end reuse the last value.
    Table(Vec<f64>),
}

impl ElectricityPrice {
    pub fn at(&self, turn: u64) -> f64 {
        match self {
            ElectricityPrice::Constant(e) => *e,
            ElectricityPrice::Table(values) => {
                let i = usize::try_from(turn).unwrap_or(usize::MAX);
                values
                    .get(i)
                    .or_else(|| values.last())
                    .copied()
                    .unwrap_or(0.0)
            }
        }
    }
}

/// Deterministic market forecasts seen from turn 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    /// USD per coin at turn 0.
    pub spot_price: f64,
    pub hash_rate: HashRateModel,
    pub block_reward: RewardSchedule,
    pub electricity: ElectricityPrice,
    /// Fraction of the gross coin reward kept by the pool.
    pub pool_fee: f64,
    pub coin_trade_fee: f64,
    pub bond_trade_fee: f64,
}

impl MarketModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.spot_price.is_finite() && self.spot_price > 0.0) {
            return Err(Error::domain(format!(
                "spot price must be > 0, got {}",
                self.spot_price
            )));
        }
        self.hash_rate.validate()?;
        self.block_reward.validate()?;
        let electricity_ok = match &self.electricity {
            ElectricityPrice::Constant(e) => *e >= 0.0 && e.is_finite(),
            ElectricityPrice::Table(v) => {
                !v.is_empty() && v.iter().all(|e| *e >= 0.0 && e.is_finite())
            }
        };
        if !electricity_ok {
            return Err(Error::domain("electricity price must be >= 0"));
        }
        for (name, fee) in [
            ("pool_fee", self.pool_fee),
            ("coin_trade_fee", self.coin_trade_fee),
            ("bond_trade_fee", self.bond_trade_fee),
        ] {
            if !(0.0..1.0).contains(&fee) {
                return Err(Error::domain(format!(
                    "{name} must lie in [0, 1), got {fee}"
                )));
            }
        }
        Ok(())
    }

    /// Competing network hash-rate forecast for `turn` (H(t)).
    pub fn hash_rate_at(&self, turn: u64) -> f64 {
        self.hash_rate.at(turn)
    }

    /// Gross block reward paid to the network at `turn` (B(t)).
    pub fn block_reward_at(&self, turn: u64) -> f64 {
        self.block_reward.at(turn)
    }

    /// Block reward after the pool's cut.
    pub fn net_block_reward_at(&self, turn: u64) -> f64 {
        (1.0 - self.pool_fee) * self.block_reward.at(turn)
    }

    pub fn electricity_at(&self, turn: u64) -> f64 {
        self.electricity.at(turn)
    }

    /// Reward and activation cost of the opportunity at `turn`, using the
    /// forecast hash-rate.
    pub fn opportunity_terms(&self, turn: u64, asic: &AsicSpec) -> OpportunityTerms {
        self.opportunity_terms_with_hash_rate(turn, asic, self.hash_rate_at(turn))
    }

    /// As [`MarketModel::opportunity_terms`] but with an explicit network
    /// hash-rate, e.g. a realized one.
    pub fn opportunity_terms_with_hash_rate(
        &self,
        turn: u64,
        asic: &AsicSpec,
        network_hash_rate: f64,
    ) -> OpportunityTerms {
        let h = asic.hash_rate;
        OpportunityTerms {
            coins: h / (network_hash_rate + h) * self.net_block_reward_at(turn),
            strike: h * asic.energy_per_turn * self.electricity_at(turn),
        }
    }
}

/// The call-like payoff of one mining opportunity: `max(coins * P - strike, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpportunityTerms {
    /// Coins earned by running the hardware for the turn.
    pub coins: f64,
    /// Electricity cost of running it, USD.
    pub strike: f64,
}

impl OpportunityTerms {
    pub fn payoff(&self, price: f64) -> f64 {
        (self.coins * price - self.strike).max(0.0)
    }
}

/// A node of the recombining price lattice rooted at `valuation_turn`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeState {
    pub valuation_turn: u64,
    pub root_price: f64,
    pub turn: u64,
    pub up_moves: u64,
}

impl LatticeState {
    pub fn new(valuation_turn: u64, root_price: f64, turn: u64, up_moves: u64) -> Result<Self> {
        if turn < valuation_turn || up_moves > turn - valuation_turn {
            return Err(Error::domain(format!(
                "no lattice node with {up_moves} up moves at turn {turn} from turn {valuation_turn}"
            )));
        }
        Ok(LatticeState {
            valuation_turn,
            root_price,
            turn,
            up_moves,
        })
    }

    pub fn down_moves(&self) -> u64 {
        self.turn - self.valuation_turn - self.up_moves
    }

    /// `Δ^ups · δ^downs · P_k`, evaluated as `exp(ups·lnΔ + downs·lnδ) · P_k`.
    pub fn price(&self, walk: &RandomWalkParams) -> f64 {
        node_price(self.root_price, self.up_moves, self.down_moves(), walk)
    }
}

pub(crate) fn node_price(root: f64, ups: u64, downs: u64, walk: &RandomWalkParams) -> f64 {
    (ups as f64 * walk.up.ln() + downs as f64 * walk.down.ln()).exp() * root
}
