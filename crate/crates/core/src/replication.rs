//! Coin-and-bond portfolios that imitate mining opportunities, and the
//! backtest comparing them with running the hardware.
//!
//! For each opportunity the imitating portfolio holds `c` coins and `b`
//! dollars of bonds chosen so that after the next move it is worth exactly
//! the opportunity's lattice value in both branches. Without fees,
//! rebalancing along the lattice never needs new money, and the portfolio
//! liquidates at expiry to the opportunity's payoff.

use std::collections::HashMap;

use chrono::NaiveDate;
use serde::Serialize;

use crate::calibration::{annualized_volatility, rebalance_schedule, CalibrationContext};
use crate::data_io::{MarketHistory, MarketRow, RunConfig, Scenario};
use crate::error::{Error, Result};
use crate::lattice::{closed_form_from_terms, value_lattice};
use crate::model::{AsicSpec, MarketModel, RandomWalkParams, MORTALITY_CUTOFF};

/// Target holdings of an imitating portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImitatingWeights {
    pub coins: f64,
    /// Bond position in USD at the time it is taken; negative means borrowed.
    pub bonds: f64,
}

impl ImitatingWeights {
    pub const EMPTY: ImitatingWeights = ImitatingWeights {
        coins: 0.0,
        bonds: 0.0,
    };

    pub fn scaled(self, factor: f64) -> Self {
        ImitatingWeights {
            coins: self.coins * factor,
            bonds: self.bonds * factor,
        }
    }
}

/// Holdings that replicate a claim worth `v_up` / `v_down` after the next
/// up / down move from `price`.
pub fn imitating_weights(
    price: f64,
    v_up: f64,
    v_down: f64,
    walk: &RandomWalkParams,
) -> Result<ImitatingWeights> {
    walk.ensure_non_degenerate()?;
    if walk.gross_rate == 0.0 {
        return Err(Error::domain("gross rate of 0 cannot discount bonds"));
    }
    if !(price.is_finite() && price > 0.0) {
        return Err(Error::domain(format!("price must be > 0, got {price}")));
    }
    let spread = walk.up - walk.down;
    Ok(ImitatingWeights {
        coins: (v_up - v_down) / (price * spread),
        bonds: (walk.up * v_down - walk.down * v_up) / (walk.gross_rate * spread),
    })
}

/// Mark-to-market value `bonds + coins · price`.
pub fn imitating_value(weights: ImitatingWeights, price: f64) -> f64 {
    weights.bonds + weights.coins * price
}

/// Proportional trading costs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct FeeSchedule {
    /// Charged on `|Δcoins| · price`.
    pub coin: f64,
    /// Charged on `|Δbonds|`.
    pub bond: f64,
}

impl FeeSchedule {
    pub const ZERO: FeeSchedule = FeeSchedule {
        coin: 0.0,
        bond: 0.0,
    };

    pub fn from_market(market: &MarketModel) -> Self {
        FeeSchedule {
            coin: market.coin_trade_fee,
            bond: market.bond_trade_fee,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.coin) || !(0.0..1.0).contains(&self.bond) {
            return Err(Error::domain("trading fees must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Holdings after a rebalance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PortfolioState {
    pub turn: u64,
    pub coins: f64,
    pub bonds: f64,
    pub mark_value: f64,
}

impl PortfolioState {
    pub fn empty(turn: u64) -> Self {
        PortfolioState {
            turn,
            coins: 0.0,
            bonds: 0.0,
            mark_value: 0.0,
        }
    }
}

/// One rebalance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeEntry {
    pub turn: u64,
    /// Opportunity whose sub-portfolio traded.
    pub opportunity: u64,
    pub coin_delta: f64,
    pub bond_delta: f64,
    pub coin_fee: f64,
    pub bond_fee: f64,
    /// New money required (positive) or released (negative) by the trade.
    pub cash_injection: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TradeLog {
    pub entries: Vec<TradeEntry>,
}

impl TradeLog {
    pub fn total_fees(&self) -> f64 {
        self.entries.iter().map(|e| e.coin_fee + e.bond_fee).sum()
    }
}

/// Market conditions at a rebalance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RebalanceContext {
    pub turn: u64,
    pub price: f64,
    /// Growth of the bond position since the previous rebalance.
    pub bond_growth: f64,
    pub fees: FeeSchedule,
    pub allow_short: bool,
}

/// Moves `current` to `target`: bonds accrue by `bond_growth`, the position
/// is marked at `price`, and any shortfall after fees is injected.
pub fn rebalance(
    current: &PortfolioState,
    target: ImitatingWeights,
    ctx: &RebalanceContext,
) -> Result<(PortfolioState, TradeEntry)> {
    ctx.fees.validate()?;
    if target.coins < 0.0 && !ctx.allow_short {
        return Err(Error::ShortPosition {
            turn: ctx.turn,
            coins: target.coins,
        });
    }
    let accrued_bonds = current.bonds * ctx.bond_growth;
    let before = accrued_bonds + current.coins * ctx.price;
    let coin_delta = target.coins - current.coins;
    let bond_delta = target.bonds - accrued_bonds;
    let coin_fee = ctx.fees.coin * coin_delta.abs() * ctx.price;
    let bond_fee = ctx.fees.bond * bond_delta.abs();
    let after = imitating_value(target, ctx.price);
    let state = PortfolioState {
        turn: ctx.turn,
        coins: target.coins,
        bonds: target.bonds,
        mark_value: after,
    };
    let entry = TradeEntry {
        turn: ctx.turn,
        opportunity: 0,
        coin_delta,
        bond_delta,
        coin_fee,
        bond_fee,
        cash_injection: after + coin_fee + bond_fee - before,
    };
    Ok((state, entry))
}

/// A lattice node with its value and imitating holdings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImitationNode {
    pub turn: u64,
    pub up_moves: u64,
    pub price: f64,
    pub value: f64,
    pub coins: f64,
    pub bonds: f64,
}

/// Imitating holdings at every node of opportunity `t`'s lattice from `k`.
/// Holdings at the expiry turn are empty: the portfolio is sold there.
pub fn imitation_table(
    t: u64,
    k: u64,
    spot: f64,
    asic: &AsicSpec,
    market: &MarketModel,
    walk: &RandomWalkParams,
) -> Result<Vec<ImitationNode>> {
    let lattice = value_lattice(t, k, spot, asic, market, walk)?;
    let mut nodes = Vec::new();
    for turn in k..=t {
        for ups in 0..=(turn - k) {
            let price = lattice.price_at(turn, ups, walk);
            let value = lattice.value_at(turn, ups).expect("node in lattice");
            let weights = if turn == t {
                ImitatingWeights::EMPTY
            } else {
                imitating_weights(
                    price,
                    lattice.value_at(turn + 1, ups + 1).expect("child"),
                    lattice.value_at(turn + 1, ups).expect("child"),
                    walk,
                )?
            };
            nodes.push(ImitationNode {
                turn,
                up_moves: ups,
                price,
                value,
                coins: weights.coins,
                bonds: weights.bonds,
            });
        }
    }
    Ok(nodes)
}

/// How the per-turn walk is chosen at each rebalance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WalkPolicy {
    /// One walk for the whole simulation; bonds grow by its gross rate.
    Fixed { walk: RandomWalkParams },
    /// Volatility estimated from prices since `volatility_start` up to the
    /// current date (or only up to purchase when `recalibrate` is false).
    Calibrated {
        annual_interest: f64,
        turn_length: f64,
        volatility_start: Option<NaiveDate>,
        recalibrate: bool,
    },
}

impl WalkPolicy {
    fn gross_rate(&self) -> f64 {
        match self {
            WalkPolicy::Fixed { walk } => walk.gross_rate,
            WalkPolicy::Calibrated {
                annual_interest,
                turn_length,
                ..
            } => (1.0 + annual_interest).powf(*turn_length),
        }
    }
}

/// Inputs of a replication backtest.
#[derive(Debug, Clone)]
pub struct ReplicationPlan<'a> {
    /// Turn 0; the first history row on or after this date.
    pub purchase_date: NaiveDate,
    pub asic: &'a AsicSpec,
    /// Forecasts made at purchase; opportunities are priced against these.
    pub market: &'a MarketModel,
    pub policy: WalkPolicy,
    pub steps_per_opportunity: u64,
    pub fees: FeeSchedule,
    pub allow_short: bool,
}

impl<'a> ReplicationPlan<'a> {
    /// The backtest a configuration describes, starting at `purchase_date`.
    /// An explicit walk in the config is used as is; otherwise volatility is
    /// re-estimated from the price history.
    pub fn from_config(
        config: &RunConfig,
        scenario: &'a Scenario,
        purchase_date: NaiveDate,
    ) -> Result<Self> {
        if config.calibration.turns_per_day != 1 {
            return Err(Error::Config(
                "backtests run on daily history and need calibration.turns_per_day = 1".into(),
            ));
        }
        let policy = match config.calibration.walk {
            Some(_) => WalkPolicy::Fixed {
                walk: scenario.walk,
            },
            None => WalkPolicy::Calibrated {
                annual_interest: config.market.annual_interest,
                turn_length: config.turn_length(),
                volatility_start: config.calibration.volatility_start,
                recalibrate: config.calibration.recalibrate,
            },
        };
        Ok(ReplicationPlan {
            purchase_date,
            asic: &scenario.asic,
            market: &scenario.market,
            policy,
            steps_per_opportunity: config.calibration.steps_per_opportunity,
            fees: FeeSchedule::from_market(&scenario.market),
            allow_short: false,
        })
    }
}

/// Realized outcome of one opportunity's sub-portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpportunityOutcome {
    pub turn: u64,
    pub mortality_weight: f64,
    /// Cost of the initial holdings including fees, weighted.
    pub initial_cost: f64,
    /// Cash returned over the life of the sub-portfolio net of fees and
    /// injections, weighted.
    pub net_proceeds: f64,
}

/// Cumulative realized revenue on each backtest date.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RevenueLeg {
    pub dates: Vec<NaiveDate>,
    pub cumulative: Vec<f64>,
    pub initial_cost: f64,
}

impl RevenueLeg {
    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationRun {
    pub leg: RevenueLeg,
    pub log: TradeLog,
    pub outcomes: Vec<OpportunityOutcome>,
}

/// Live `(offset, weight)` pairs of the unit's opportunities.
fn live_opportunities(asic: &AsicSpec) -> Vec<(u64, f64)> {
    (0..asic.lifetime_horizon)
        .map(|o| (o, asic.mortality.weight_at(o)))
        .take_while(|(_, w)| *w >= MORTALITY_CUTOFF)
        .collect()
}

/// Backtest rows: turn 0 is the purchase date, and the last row is the
/// final live opportunity.
fn backtest_rows(
    history: &MarketHistory,
    purchase: NaiveDate,
    asic: &AsicSpec,
) -> Result<Vec<MarketRow>> {
    let live = live_opportunities(asic);
    let last_turn = asic.reception_turn + live.len().saturating_sub(1) as u64;
    let rows = history.rows_from(purchase);
    let needed = last_turn as usize + 1;
    if rows.len() < needed {
        return Err(Error::data(format!(
            "history from {purchase} has {} aligned rows, backtest needs {needed}",
            rows.len()
        )));
    }
    Ok(rows[..needed].to_vec())
}

struct WalkCache<'h> {
    policy: WalkPolicy,
    history: &'h MarketHistory,
    purchase_row: NaiveDate,
    by_date: HashMap<NaiveDate, RandomWalkParams>,
}

impl WalkCache<'_> {
    fn walk_on(&mut self, date: NaiveDate) -> Result<RandomWalkParams> {
        let (annual_interest, turn_length, start, recalibrate) = match self.policy {
            WalkPolicy::Fixed { walk } => return Ok(walk),
            WalkPolicy::Calibrated {
                annual_interest,
                turn_length,
                volatility_start,
                recalibrate,
            } => (annual_interest, turn_length, volatility_start, recalibrate),
        };
        let as_of = if recalibrate { date } else { self.purchase_row };
        if let Some(walk) = self.by_date.get(&as_of) {
            return Ok(*walk);
        }
        let window = self.history.prices.between(start, Some(as_of));
        let sigma = annualized_volatility(window)?;
        let walk = CalibrationContext::per_turn(sigma, annual_interest, turn_length, 1)?.walk()?;
        self.by_date.insert(as_of, walk);
        Ok(walk)
    }
}

/// Runs the imitating portfolio of every live opportunity along the
/// realized history.
///
/// Each opportunity gets its own sub-portfolio, scaled by its mortality
/// weight, bought at turn 0 and rebalanced at up to
/// `steps_per_opportunity` equally spaced turns. At each rebalance the
/// lattice is re-rooted at the realized price, so realized prices need not
/// be lattice nodes. The sub-portfolio is sold at the opportunity's turn.
pub fn simulate_replication(
    history: &MarketHistory,
    plan: &ReplicationPlan,
) -> Result<ReplicationRun> {
    if plan.steps_per_opportunity < 1 {
        return Err(Error::domain("steps per opportunity must be at least 1"));
    }
    plan.fees.validate()?;
    plan.asic.validate()?;
    plan.market.validate()?;
    let rows = backtest_rows(history, plan.purchase_date, plan.asic)?;
    let mut cache = WalkCache {
        policy: plan.policy,
        history,
        purchase_row: rows[0].date,
        by_date: HashMap::new(),
    };
    let bond_rate = plan.policy.gross_rate();

    let mut log = TradeLog::default();
    let mut outcomes = Vec::new();
    let mut revenue_by_turn = vec![0.0; rows.len()];
    let mut initial_cost = 0.0;

    for (offset, weight) in live_opportunities(plan.asic) {
        let expiry = plan.asic.reception_turn + offset;
        let terms = plan.market.opportunity_terms(expiry, plan.asic);
        let schedule = rebalance_schedule(0, expiry, plan.steps_per_opportunity);

        let mut state = PortfolioState::empty(0);
        let mut outcome = OpportunityOutcome {
            turn: expiry,
            mortality_weight: weight,
            initial_cost: 0.0,
            net_proceeds: 0.0,
        };

        if schedule.is_empty() {
            // Expires at purchase: the claim is cash, bought and paid at once.
            let payoff = weight * terms.payoff(rows[0].price);
            outcome.initial_cost = payoff;
            outcome.net_proceeds = payoff;
            revenue_by_turn[0] += payoff;
            initial_cost += payoff;
            outcomes.push(outcome);
            continue;
        }

        for (i, &turn) in schedule.iter().chain(std::iter::once(&expiry)).enumerate() {
            let row = rows[turn as usize];
            let target = if turn == expiry {
                ImitatingWeights::EMPTY
            } else {
                let walk = cache.walk_on(row.date)?;
                let remaining = expiry - turn - 1;
                let v_up = closed_form_from_terms(terms, remaining, row.price * walk.up, &walk);
                let v_down = closed_form_from_terms(terms, remaining, row.price * walk.down, &walk);
                imitating_weights(row.price, v_up, v_down, &walk)?.scaled(weight)
            };
            let ctx = RebalanceContext {
                turn,
                price: row.price,
                bond_growth: bond_rate.powi((turn - state.turn) as i32),
                fees: plan.fees,
                allow_short: plan.allow_short,
            };
            let (next, mut entry) = rebalance(&state, target, &ctx)?;
            entry.opportunity = expiry;
            if i == 0 {
                outcome.initial_cost += entry.cash_injection;
                initial_cost += entry.cash_injection;
            } else {
                outcome.net_proceeds -= entry.cash_injection;
                revenue_by_turn[turn as usize] -= entry.cash_injection;
            }
            log.entries.push(entry);
            state = next;
        }
        outcomes.push(outcome);
    }

    Ok(ReplicationRun {
        leg: cumulate(&rows, &revenue_by_turn, initial_cost),
        log,
        outcomes,
    })
}

fn cumulate(rows: &[MarketRow], per_turn: &[f64], initial_cost: f64) -> RevenueLeg {
    let mut running = 0.0;
    let cumulative = per_turn
        .iter()
        .map(|r| {
            running += r;
            running
        })
        .collect();
    RevenueLeg {
        dates: rows.iter().map(|r| r.date).collect(),
        cumulative,
        initial_cost,
    }
}

/// Realized revenue of running the hardware: each turn it mines iff the
/// realized reward beats the electricity bill, weighted by mortality.
/// Uses the realized network hash-rate from `history`.
pub fn asic_realized_revenue(
    history: &MarketHistory,
    purchase_date: NaiveDate,
    asic: &AsicSpec,
    market: &MarketModel,
) -> Result<RevenueLeg> {
    asic.validate()?;
    let rows = backtest_rows(history, purchase_date, asic)?;
    let mut per_turn = vec![0.0; rows.len()];
    for (offset, weight) in live_opportunities(asic) {
        let turn = asic.reception_turn + offset;
        let row = rows[turn as usize];
        let terms = market.opportunity_terms_with_hash_rate(turn, asic, row.hash_rate);
        per_turn[turn as usize] = weight * terms.payoff(row.price);
    }
    Ok(cumulate(&rows, &per_turn, 0.0))
}

/// Hardware revenue next to the imitating portfolio's.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub dates: Vec<NaiveDate>,
    pub asic_revenue: Vec<f64>,
    pub portfolio_revenue: Vec<f64>,
    /// Listed hardware price, when known.
    pub asic_initial_cost: Option<f64>,
    pub portfolio_initial_cost: f64,
    pub asic_total: f64,
    pub portfolio_total: f64,
    pub total_fees: f64,
    /// `Σ |portfolio proceeds − hardware payoff| / Σ hardware payoff` over
    /// opportunities.
    pub tracking_error: f64,
}

/// Runs both legs over the same dates.
pub fn backtest(
    history: &MarketHistory,
    plan: &ReplicationPlan,
    asic_listed_price: Option<f64>,
) -> Result<BacktestReport> {
    let hardware = asic_realized_revenue(history, plan.purchase_date, plan.asic, plan.market)?;
    let run = simulate_replication(history, plan)?;
    let payoff_at = |turn: u64| {
        let i = turn as usize;
        hardware.cumulative[i]
            - if i == 0 {
                0.0
            } else {
                hardware.cumulative[i - 1]
            }
    };
    let (mut gap, mut paid) = (0.0, 0.0);
    for o in &run.outcomes {
        let realized = payoff_at(o.turn);
        gap += (o.net_proceeds - realized).abs();
        paid += realized;
    }
    Ok(BacktestReport {
        asic_total: hardware.total(),
        portfolio_total: run.leg.total(),
        total_fees: run.log.total_fees(),
        tracking_error: if paid > 0.0 { gap / paid } else { gap },
        dates: hardware.dates,
        asic_revenue: hardware.cumulative,
        portfolio_revenue: run.leg.cumulative,
        asic_initial_cost: asic_listed_price,
        portfolio_initial_cost: run.leg.initial_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{opportunity_value, short_amount};
    use crate::model::{ElectricityPrice, HashRateModel, MortalityModel, RewardSchedule};
    use proptest::prelude::*;

    fn toy() -> (AsicSpec, MarketModel, RandomWalkParams) {
        let asic = AsicSpec {
            hash_rate: 1.0,
            energy_per_turn: 250.0,
            mortality: MortalityModel::Step { lifetime: 1 },
            reception_turn: 2,
            lifetime_horizon: 1,
        };
        let market = MarketModel {
            spot_price: 200.0,
            hash_rate: HashRateModel::Exponential {
                initial: 1.0,
                growth: 0.0,
            },
            block_reward: RewardSchedule::Constant(2.0),
            electricity: ElectricityPrice::Constant(1.0),
            pool_fee: 0.0,
            coin_trade_fee: 0.0,
            bond_trade_fee: 0.0,
        };
        (
            asic,
            market,
            RandomWalkParams::example_compat(2.0, 0.5, 1.0).unwrap(),
        )
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn weights_match_worked_example() {
        let walk = toy().2;
        let w = imitating_weights(400.0, 550.0, 0.0, &walk).unwrap();
        assert!(close(w.coins, 11.0 / 12.0) && close(w.bonds, -550.0 / 3.0));
        let w = imitating_weights(200.0, 550.0 / 3.0, 0.0, &walk).unwrap();
        assert!(close(w.coins, 11.0 / 18.0) && close(w.bonds, -550.0 / 9.0));
        assert_eq!(
            imitating_weights(100.0, 0.0, 0.0, &walk).unwrap(),
            ImitatingWeights::EMPTY
        );

        let bad = RandomWalkParams {
            gross_rate: 0.0,
            ..walk
        };
        assert!(imitating_weights(1.0, 1.0, 0.0, &bad).is_err());
    }

    #[test]
    fn imitating_value_examples() {
        let root = ImitatingWeights {
            coins: 11.0 / 18.0,
            bonds: -550.0 / 9.0,
        };
        assert!(close(imitating_value(root, 200.0), 550.0 / 9.0));
        assert_eq!(imitating_value(ImitatingWeights::EMPTY, 1234.0), 0.0);
        let up = ImitatingWeights {
            coins: 11.0 / 12.0,
            bonds: -550.0 / 3.0,
        };
        assert!(close(imitating_value(up, 800.0), 550.0));
        assert!(close(imitating_value(up, 200.0), 0.0));
    }

    #[test]
    fn imitation_table_matches_worked_weights() {
        let (asic, market, walk) = toy();
        let table = imitation_table(2, 0, 200.0, &asic, &market, &walk).unwrap();
        let node = |turn, ups| {
            *table
                .iter()
                .find(|n| n.turn == turn && n.up_moves == ups)
                .unwrap()
        };
        let root = node(0, 0);
        assert!(close(root.coins, 11.0 / 18.0) && close(root.bonds, -550.0 / 9.0));
        let up = node(1, 1);
        assert!(close(up.coins, 11.0 / 12.0) && close(up.bonds, -550.0 / 3.0));
        let down = node(1, 0);
        assert_eq!((down.coins, down.bonds), (0.0, 0.0));
        assert!(table
            .iter()
            .filter(|n| n.turn == 2)
            .all(|n| n.coins == 0.0 && n.bonds == 0.0));
        assert_eq!(table.len(), 6);
    }

    #[test]
    fn rebalance_examples() {
        let ctx = RebalanceContext {
            turn: 1,
            price: 100.0,
            bond_growth: 1.0,
            fees: FeeSchedule {
                coin: 0.01,
                bond: 0.0,
            },
            allow_short: false,
        };
        let (_, entry) = rebalance(
            &PortfolioState::empty(0),
            ImitatingWeights {
                coins: 1.0,
                bonds: 0.0,
            },
            &ctx,
        )
        .unwrap();
        assert!(close(entry.coin_fee, 1.0));
        assert!(close(entry.cash_injection, 101.0));

        let held = PortfolioState {
            turn: 0,
            coins: 2.0,
            bonds: -50.0,
            mark_value: 150.0,
        };
        let (state, entry) = rebalance(
            &held,
            ImitatingWeights {
                coins: 2.0,
                bonds: -50.0,
            },
            &ctx,
        )
        .unwrap();
        assert_eq!(
            (entry.coin_fee, entry.bond_fee, entry.cash_injection),
            (0.0, 0.0, 0.0)
        );
        assert_eq!(state.mark_value, 150.0);

        let err = rebalance(
            &held,
            ImitatingWeights {
                coins: -1.0,
                bonds: 0.0,
            },
            &ctx,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ShortPosition { .. }));
        let short_ok = RebalanceContext {
            allow_short: true,
            ..ctx
        };
        assert!(rebalance(
            &held,
            ImitatingWeights {
                coins: -1.0,
                bonds: 0.0
            },
            &short_ok
        )
        .is_ok());
    }

    #[test]
    fn bonds_accrue_before_trading() {
        let held = PortfolioState {
            turn: 0,
            coins: 0.0,
            bonds: 100.0,
            mark_value: 100.0,
        };
        let ctx = RebalanceContext {
            turn: 3,
            price: 10.0,
            bond_growth: 1.1,
            fees: FeeSchedule::ZERO,
            allow_short: false,
        };
        let (_, entry) = rebalance(&held, ImitatingWeights::EMPTY, &ctx).unwrap();
        assert!(close(entry.cash_injection, -110.0));
        assert!(close(entry.bond_delta, -110.0));
    }

    fn start() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 3, 1).unwrap()
    }

    fn plan<'a>(
        asic: &'a AsicSpec,
        market: &'a MarketModel,
        walk: RandomWalkParams,
    ) -> ReplicationPlan<'a> {
        ReplicationPlan {
            purchase_date: start(),
            asic,
            market,
            policy: WalkPolicy::Fixed { walk },
            steps_per_opportunity: 25,
            fees: FeeSchedule::ZERO,
            allow_short: false,
        }
    }

    #[test]
    fn up_then_down_path_liquidates_to_payoff() {
        let (asic, market, walk) = toy();
        let history =
            MarketHistory::from_daily(start(), &[200.0, 400.0, 200.0], &[1.0; 3]).unwrap();
        let run = simulate_replication(&history, &plan(&asic, &market, walk)).unwrap();
        assert!(close(run.leg.initial_cost, 550.0 / 9.0));
        let injections: Vec<f64> = run.log.entries.iter().map(|e| e.cash_injection).collect();
        assert_eq!(injections.len(), 3);
        assert!(injections[1].abs() < 1e-12);
        assert!(injections[2].abs() < 1e-12);
        assert!(run.leg.total().abs() < 1e-12);

        let report = backtest(&history, &plan(&asic, &market, walk), None).unwrap();
        assert_eq!(report.asic_total, 0.0);
        assert_eq!(report.dates.len(), 3);
    }

    #[test]
    fn up_up_path_pays_550() {
        let (asic, market, walk) = toy();
        let history =
            MarketHistory::from_daily(start(), &[200.0, 400.0, 800.0], &[1.0; 3]).unwrap();
        let report = backtest(&history, &plan(&asic, &market, walk), None).unwrap();
        assert!(close(report.portfolio_total, 550.0));
        assert!(close(report.asic_total, 550.0));
        assert!(report.tracking_error < 1e-12);
    }

    #[test]
    fn zero_strike_constant_price_replicates_exactly() {
        let (mut asic, market, _) = toy();
        asic.energy_per_turn = 0.0;
        asic.reception_turn = 4;
        let walk = RandomWalkParams::strict(1.1, 0.9, 1.001).unwrap();
        let history = MarketHistory::from_daily(start(), &[300.0; 5], &[1.0; 5]).unwrap();
        let run = simulate_replication(&history, &plan(&asic, &market, walk)).unwrap();
        // Holds exactly one coin and no bonds throughout.
        assert!(close(run.leg.initial_cost, 300.0));
        assert!(close(run.leg.total(), 300.0));
    }

    #[test]
    fn realized_revenue_examples() {
        let (mut asic, market, _) = toy();
        asic.reception_turn = 0;
        asic.mortality = MortalityModel::Step { lifetime: 3 };
        asic.lifetime_horizon = 3;
        let below = MarketHistory::from_daily(start(), &[100.0, 120.0, 90.0], &[1.0; 3]).unwrap();
        assert_eq!(
            asic_realized_revenue(&below, start(), &asic, &market)
                .unwrap()
                .total(),
            0.0
        );

        let mut free = asic.clone();
        free.energy_per_turn = 0.0;
        let leg = asic_realized_revenue(&below, start(), &free, &market).unwrap();
        assert!(close(leg.total(), 310.0));
        assert_eq!(leg.cumulative, vec![100.0, 220.0, 310.0]);

        let mut single = asic.clone();
        single.mortality = MortalityModel::Step { lifetime: 1 };
        single.lifetime_horizon = 1;
        let up = MarketHistory::from_daily(start(), &[800.0], &[1.0]).unwrap();
        assert!(close(
            asic_realized_revenue(&up, start(), &single, &market)
                .unwrap()
                .total(),
            550.0
        ));
    }

    #[test]
    fn short_history_is_a_data_error() {
        let (asic, market, walk) = toy();
        let history = MarketHistory::from_daily(start(), &[200.0, 400.0], &[1.0; 2]).unwrap();
        let err = simulate_replication(&history, &plan(&asic, &market, walk)).unwrap_err();
        assert!(err.is_data_error());
        assert!(asic_realized_revenue(&history, start(), &asic, &market)
            .unwrap_err()
            .is_data_error());
    }

    #[test]
    fn fees_grow_with_fee_rates() {
        let (mut asic, market, _) = toy();
        asic.reception_turn = 0;
        asic.energy_per_turn = 100.0;
        asic.mortality = MortalityModel::Step { lifetime: 6 };
        asic.lifetime_horizon = 6;
        let walk = RandomWalkParams::strict(1.2, 0.85, 1.001).unwrap();
        let prices = [200.0, 230.0, 190.0, 210.0, 260.0, 240.0];
        let history = MarketHistory::from_daily(start(), &prices, &[1.0; 6]).unwrap();
        let mut last = -1.0;
        for rate in [0.0, 0.001, 0.01, 0.05] {
            let mut p = plan(&asic, &market, walk);
            p.fees = FeeSchedule {
                coin: rate,
                bond: 0.01,
            };
            let fees = simulate_replication(&history, &p).unwrap().log.total_fees();
            assert!(fees >= last);
            last = fees;
        }
    }

    fn path_instance() -> impl Strategy<Value = (RandomWalkParams, f64, f64, u64, u64)> {
        (
            0.5f64..0.95,
            1e-4f64..0.02,
            0.02f64..0.6,
            0.0f64..400.0,
            1u64..=8,
            0u64..256,
        )
            .prop_map(|(down, eta, gap, strike, depth, path)| {
                let r = 1.0 + eta;
                (
                    RandomWalkParams::strict(r + gap, down, r).unwrap(),
                    strike,
                    200.0,
                    depth,
                    path,
                )
            })
    }

    proptest! {
        #[test]
        fn weights_replicate_both_branches(
            (walk, _, price, _, _) in path_instance(),
            v_up in 0.0f64..1e4,
            v_down in 0.0f64..1e4,
        ) {
            let w = imitating_weights(price, v_up, v_down, &walk).unwrap();
            let scale = v_up.max(v_down).max(1.0);
            prop_assert!((w.bonds * walk.gross_rate + w.coins * walk.up * price - v_up).abs() <= 1e-12 * scale);
            prop_assert!((w.bonds * walk.gross_rate + w.coins * walk.down * price - v_down).abs() <= 1e-12 * scale);
            prop_assert_eq!(w.coins, short_amount(price, v_up, v_down, &walk).unwrap());
        }

        #[test]
        fn table_values_match_lattice_prices((walk, strike, spot, depth, _) in path_instance()) {
            let (mut asic, market, _) = toy();
            asic.energy_per_turn = strike;
            let table = imitation_table(depth, 0, spot, &asic, &market, &walk).unwrap();
            for node in table.iter().filter(|n| n.turn < depth) {
                let direct = opportunity_value(depth, node.turn, node.price, &asic, &market, &walk).unwrap().value;
                let w = ImitatingWeights { coins: node.coins, bonds: node.bonds };
                prop_assert!((imitating_value(w, node.price) - direct).abs() <= 1e-9 * direct.max(1.0));
                prop_assert!(node.coins >= 0.0 && node.bonds <= 1e-12 * direct.max(1.0));
            }
        }

        #[test]
        fn zero_fee_lattice_paths_are_self_financing((walk, strike, spot, depth, path) in path_instance()) {
            let (mut asic, market, _) = toy();
            asic.energy_per_turn = strike;
            asic.reception_turn = depth;
            let mut prices = vec![spot];
            for i in 0..depth {
                let last = *prices.last().unwrap();
                prices.push(if path >> i & 1 == 1 { last * walk.up } else { last * walk.down });
            }
            let hashes = vec![1.0; prices.len()];
            let history = MarketHistory::from_daily(start(), &prices, &hashes).unwrap();
            let report = backtest(&history, &plan(&asic, &market, walk), None).unwrap();
            let run = simulate_replication(&history, &plan(&asic, &market, walk)).unwrap();
            let initial = run.leg.initial_cost;
            let expected_initial = opportunity_value(depth, 0, spot, &asic, &market, &walk).unwrap().value;
            prop_assert!((initial - expected_initial).abs() <= 1e-9 * expected_initial.max(1.0));
            for e in run.log.entries.iter().skip(1).take(depth as usize - 1) {
                prop_assert!(e.cash_injection.abs() <= 1e-9 * initial.max(1.0));
            }
            prop_assert!((report.portfolio_total - report.asic_total).abs() <= 1e-9 * report.asic_total.max(1.0));
        }
    }
}
