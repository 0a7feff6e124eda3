//! Pricing of a single mining opportunity on the binomial price lattice.
//!
//! An opportunity expiring at turn `t` pays `max(coins · P_t − strike, 0)`.
//! Seen from an earlier turn `k` it is worth the no-arbitrage price of that
//! payoff. Three independent routes are provided:
//!
//! * backward induction over the recombining lattice, one risk-free
//!   portfolio per node ([`opportunity_value`], [`value_lattice`]);
//! * the closed-form binomial sum over terminal states that finish in the
//!   money ([`closed_form_value`]);
//! * brute-force enumeration of every up/down path under the risk-neutral
//!   measure ([`path_oracle_value`]), for small depths only.
//!
//! Hash-rate and block reward of opportunity `t` are fixed by the forecast;
//! the exchange rate is the only random variable.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    node_price, AsicSpec, MarketModel, OpportunityTerms, RandomWalkParams, ValidationMode,
};

/// Deepest lattice [`path_oracle_value`] will enumerate.
pub const ORACLE_MAX_DEPTH: u64 = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PricingMethod {
    Induction,
    ClosedForm,
    Oracle,
}

/// Value of the opportunity expiring at `opportunity_turn`, seen from
/// `valuation_turn` with spot `spot`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OpportunityQuote {
    pub opportunity_turn: u64,
    pub valuation_turn: u64,
    pub spot: f64,
    pub value: f64,
    pub method: PricingMethod,
}

/// Every node value of one opportunity's lattice.
///
/// `levels[i]` holds the values at turn `valuation_turn + i`, indexed by the
/// number of up moves, so it has `i + 1` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueLattice {
    pub valuation_turn: u64,
    pub opportunity_turn: u64,
    pub root_price: f64,
    pub levels: Vec<Vec<f64>>,
}

impl ValueLattice {
    pub fn root_value(&self) -> f64 {
        self.levels[0][0]
    }

    /// Value at the node reached after `up_moves` ups by `turn`.
    pub fn value_at(&self, turn: u64, up_moves: u64) -> Option<f64> {
        let level = turn.checked_sub(self.valuation_turn)?;
        self.levels
            .get(level as usize)?
            .get(up_moves as usize)
            .copied()
    }

    pub fn price_at(&self, turn: u64, up_moves: u64, walk: &RandomWalkParams) -> f64 {
        let level = turn - self.valuation_turn;
        node_price(self.root_price, up_moves, level - up_moves, walk)
    }
}

fn check_walk(walk: &RandomWalkParams) -> Result<()> {
    walk.ensure_non_degenerate()?;
    walk.validate(ValidationMode::ExampleCompat)?;
    Ok(())
}

fn check_price(price: f64) -> Result<()> {
    if !(price.is_finite() && price > 0.0) {
        return Err(Error::domain(format!("price must be > 0, got {price}")));
    }
    Ok(())
}

fn check_turns(t: u64, k: u64) -> Result<u64> {
    t.checked_sub(k).ok_or_else(|| {
        Error::domain(format!(
            "valuation turn {k} is after the opportunity turn {t}"
        ))
    })
}

/// Value of opportunity `t` at turn `t` itself, given the realized price.
pub fn immediate_value(t: u64, price: f64, asic: &AsicSpec, market: &MarketModel) -> Result<f64> {
    check_price(price)?;
    Ok(market.opportunity_terms(t, asic).payoff(price))
}

/// Coins to short against one opportunity so that the combined position is
/// worth the same after either move.
pub fn short_amount(price: f64, v_up: f64, v_down: f64, walk: &RandomWalkParams) -> Result<f64> {
    walk.ensure_non_degenerate()?;
    check_price(price)?;
    Ok((v_up - v_down) / (price * (walk.up - walk.down)))
}

/// Value one turn earlier of a claim worth `v_up` after an up move and
/// `v_down` after a down move.
pub fn one_step_value(v_up: f64, v_down: f64, walk: &RandomWalkParams) -> Result<f64> {
    check_walk(walk)?;
    Ok(step_back(v_up, v_down, walk))
}

#[inline]
fn step_back(v_up: f64, v_down: f64, walk: &RandomWalkParams) -> f64 {
    let r = walk.gross_rate;
    v_up / r + (v_up - v_down) / (walk.up - walk.down) * (1.0 - walk.up / r)
}

/// Prices opportunity `t` at turn `k` by backward induction.
pub fn opportunity_value(
    t: u64,
    k: u64,
    spot: f64,
    asic: &AsicSpec,
    market: &MarketModel,
    walk: &RandomWalkParams,
) -> Result<OpportunityQuote> {
    let depth = check_turns(t, k)?;
    check_price(spot)?;
    check_walk(walk)?;
    let value = induction_value(market.opportunity_terms(t, asic), depth, spot, walk);
    Ok(OpportunityQuote {
        opportunity_turn: t,
        valuation_turn: k,
        spot,
        value,
        method: PricingMethod::Induction,
    })
}

/// Backward induction for a payoff `depth` turns ahead, with one level
/// buffer overwritten in place. The walk is assumed valid.
pub fn induction_value(
    terms: OpportunityTerms,
    depth: u64,
    spot: f64,
    walk: &RandomWalkParams,
) -> f64 {
    let n = depth as usize;
    let mut level: Vec<f64> = (0..=depth)
        .map(|ups| terms.payoff(node_price(spot, ups, depth - ups, walk)))
        .collect();
    for width in (0..n).rev() {
        for j in 0..=width {
            level[j] = step_back(level[j + 1], level[j], walk);
        }
    }
    level[0]
}

/// Full lattice of values for opportunity `t` seen from `k`.
pub fn value_lattice(
    t: u64,
    k: u64,
    spot: f64,
    asic: &AsicSpec,
    market: &MarketModel,
    walk: &RandomWalkParams,
) -> Result<ValueLattice> {
    let depth = check_turns(t, k)?;
    check_price(spot)?;
    check_walk(walk)?;
    let terms = market.opportunity_terms(t, asic);
    let leaves: Vec<f64> = (0..=depth)
        .map(|ups| terms.payoff(node_price(spot, ups, depth - ups, walk)))
        .collect();
    let mut levels = vec![leaves];
    for width in (0..depth as usize).rev() {
        let next = levels.last().expect("at least the leaves");
        let level = (0..=width)
            .map(|j| step_back(next[j + 1], next[j], walk))
            .collect();
        levels.push(level);
    }
    levels.reverse();
    Ok(ValueLattice {
        valuation_turn: k,
        opportunity_turn: t,
        root_price: spot,
        levels,
    })
}

/// Prices opportunity `t` at turn `k` with the closed-form binomial sum.
pub fn closed_form_value(
    t: u64,
    k: u64,
    spot: f64,
    asic: &AsicSpec,
    market: &MarketModel,
    walk: &RandomWalkParams,
) -> Result<f64> {
    let depth = check_turns(t, k)?;
    check_price(spot)?;
    check_walk(walk)?;
    Ok(closed_form_from_terms(
        market.opportunity_terms(t, asic),
        depth,
        spot,
        walk,
    ))
}

/// Coefficients weighting up and down moves in the closed form:
/// `(κ↑, κ↓)` with `κ↓ = (1 − Δ/r)/(Δ − δ)` and `κ↑ = κ↓ + 1/r`.
pub fn kappa(walk: &RandomWalkParams) -> (f64, f64) {
    let down = (1.0 - walk.up / walk.gross_rate) / (walk.up - walk.down);
    (down + 1.0 / walk.gross_rate, down)
}

/// Fewest up moves (out of `depth`) after which the payoff is positive,
/// clamped at 0 below. May exceed `depth`, meaning worthless everywhere.
pub fn min_up_moves(
    terms: OpportunityTerms,
    depth: u64,
    spot: f64,
    walk: &RandomWalkParams,
) -> i64 {
    if terms.strike <= 0.0 {
        return 0;
    }
    if terms.coins <= 0.0 {
        return i64::MAX;
    }
    let numerator =
        terms.strike.ln() - terms.coins.ln() - spot.ln() - depth as f64 * walk.down.ln();
    let raw = (numerator / (walk.up / walk.down).ln()).ceil();
    if raw <= 0.0 {
        0
    } else if raw >= i64::MAX as f64 {
        i64::MAX
    } else {
        raw as i64
    }
}

/// `base^exp` as `(ln|.|, sign)`, or `None` when it is exactly zero.
fn signed_ln_pow(base: f64, exp: u64) -> Option<(f64, f64)> {
    if exp == 0 {
        return Some((0.0, 1.0));
    }
    if base == 0.0 {
        return None;
    }
    let sign = if base < 0.0 && exp % 2 == 1 {
        -1.0
    } else {
        1.0
    };
    Some((exp as f64 * base.abs().ln(), sign))
}

/// Closed-form value for a payoff `depth` turns ahead. Every factor is
/// combined in log space, so deep lattices neither overflow nor underflow
/// the binomial coefficients.
pub fn closed_form_from_terms(
    terms: OpportunityTerms,
    depth: u64,
    spot: f64,
    walk: &RandomWalkParams,
) -> f64 {
    if terms.coins <= 0.0 {
        return 0.0;
    }
    if depth == 0 {
        return terms.payoff(spot);
    }
    let cutoff = min_up_moves(terms, depth, spot, walk);
    // Start one below the cutoff: the ceiling of a rounded logarithm can
    // land one too high, and a zero payoff term is harmless.
    let start = cutoff.saturating_sub(1).max(0) as u64;
    if start > depth {
        return 0.0;
    }

    let (kappa_up, kappa_down) = kappa(walk);
    let neg_kappa_down = -kappa_down;
    let (ln_up, ln_down) = (walk.up.ln(), walk.down.ln());
    let ln_coins_spot = terms.coins.ln() + spot.ln();
    let ln_strike = if terms.strike > 0.0 {
        Some(terms.strike.ln())
    } else {
        None
    };

    let mut ln_binom = 0.0;
    for i in 0..start {
        ln_binom += ((depth - i) as f64).ln() - ((i + 1) as f64).ln();
    }

    let mut total = 0.0;
    for ups in start..=depth {
        let downs = depth - ups;
        if let (Some((ln_a, sign_a)), Some((ln_b, sign_b))) = (
            signed_ln_pow(kappa_up, ups),
            signed_ln_pow(neg_kappa_down, downs),
        ) {
            let ln_weight = ln_binom + ln_a + ln_b;
            let ln_price = ups as f64 * ln_up + downs as f64 * ln_down;
            let gross = (ln_weight + ln_coins_spot + ln_price).exp();
            let cost = ln_strike.map_or(0.0, |s| (ln_weight + s).exp());
            total += sign_a * sign_b * (gross - cost).max(0.0);
        }
        if ups < depth {
            ln_binom += ((depth - ups) as f64).ln() - ((ups + 1) as f64).ln();
        }
    }
    total
}

/// Prices opportunity `t` at turn `k` by enumerating all `2^(t−k)` paths
/// under the risk-neutral measure. Refuses depths above
/// [`ORACLE_MAX_DEPTH`].
pub fn path_oracle_value(
    t: u64,
    k: u64,
    spot: f64,
    asic: &AsicSpec,
    market: &MarketModel,
    walk: &RandomWalkParams,
) -> Result<f64> {
    let depth = check_turns(t, k)?;
    check_price(spot)?;
    check_walk(walk)?;
    if depth > ORACLE_MAX_DEPTH {
        return Err(Error::EnumerationBound {
            depth,
            max: ORACLE_MAX_DEPTH,
        });
    }
    let terms = market.opportunity_terms(t, asic);
    let q = (walk.gross_rate - walk.down) / (walk.up - walk.down);
    let mut expected = 0.0;
    for path in 0u64..(1u64 << depth) {
        let mut price = spot;
        let mut weight = 1.0;
        for step in 0..depth {
            if path >> step & 1 == 1 {
                price *= walk.up;
                weight *= q;
            } else {
                price *= walk.down;
                weight *= 1.0 - q;
            }
        }
        expected += weight * terms.payoff(price);
    }
    Ok(expected / walk.gross_rate.powi(depth as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ElectricityPrice, HashRateModel, MortalityModel, RewardSchedule};
    use proptest::prelude::*;

    /// One coin per opportunity and a $250 activation cost.
    pub(crate) fn toy_desk() -> (AsicSpec, MarketModel) {
        let asic = AsicSpec {
            hash_rate: 1.0,
            energy_per_turn: 250.0,
            mortality: MortalityModel::Step { lifetime: 1 },
            reception_turn: 0,
            lifetime_horizon: 1,
        };
        let market = MarketModel {
            spot_price: 400.0,
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
        (asic, market)
    }

    /// Desk whose opportunities all pay exactly `terms`.
    pub(crate) fn desk_from_terms(terms: OpportunityTerms) -> (AsicSpec, MarketModel) {
        let (mut asic, mut market) = toy_desk();
        asic.energy_per_turn = terms.strike;
        market.block_reward = RewardSchedule::Constant(2.0 * terms.coins);
        (asic, market)
    }

    fn toy_walk() -> RandomWalkParams {
        RandomWalkParams::example_compat(2.0, 0.5, 1.0).unwrap()
    }

    #[test]
    fn immediate_value_examples() {
        let (asic, market) = toy_desk();
        assert_eq!(immediate_value(1, 800.0, &asic, &market).unwrap(), 550.0);
        assert_eq!(immediate_value(1, 200.0, &asic, &market).unwrap(), 0.0);
        assert_eq!(immediate_value(1, 250.0, &asic, &market).unwrap(), 0.0);
        assert!(immediate_value(1, 0.0, &asic, &market).is_err());
        assert!(immediate_value(1, -3.0, &asic, &market).is_err());
    }

    #[test]
    fn short_amount_examples() {
        let walk = toy_walk();
        let s = short_amount(400.0, 550.0, 0.0, &walk).unwrap();
        assert!((s - 11.0 / 12.0).abs() < 1e-12);
        assert_eq!(short_amount(400.0, 7.0, 7.0, &walk).unwrap(), 0.0);
        let s = short_amount(200.0, 550.0 / 3.0, 0.0, &walk).unwrap();
        assert!((s - 11.0 / 18.0).abs() < 1e-12);

        let flat = RandomWalkParams {
            up: 1.1,
            down: 1.1,
            gross_rate: 1.0,
            up_probability: None,
        };
        assert!(matches!(
            short_amount(1.0, 1.0, 0.0, &flat),
            Err(Error::DegenerateLattice)
        ));
    }

    #[test]
    fn one_step_value_examples() {
        let walk = toy_walk();
        let v = one_step_value(550.0, 0.0, &walk).unwrap();
        assert!((v - 550.0 / 3.0).abs() < 1e-12);
        let v = one_step_value(550.0 / 3.0, 0.0, &walk).unwrap();
        assert!((v - 550.0 / 9.0).abs() < 1e-12);

        let strict = RandomWalkParams::strict(1.3, 0.8, 1.05).unwrap();
        let v = one_step_value(42.0, 42.0, &strict).unwrap();
        assert!((v - 42.0 / 1.05).abs() < 1e-12);
    }

    #[test]
    fn two_turn_lattice_matches_worked_example() {
        let (asic, market) = toy_desk();
        let walk = toy_walk();
        let lattice = value_lattice(2, 0, 200.0, &asic, &market, &walk).unwrap();
        assert_eq!(lattice.levels[2], vec![0.0, 0.0, 550.0]);
        assert!((lattice.value_at(1, 1).unwrap() - 550.0 / 3.0).abs() < 1e-12);
        assert_eq!(lattice.value_at(1, 0).unwrap(), 0.0);
        assert!((lattice.root_value() - 550.0 / 9.0).abs() < 1e-12);

        let quote = opportunity_value(2, 0, 200.0, &asic, &market, &walk).unwrap();
        assert!((quote.value - 550.0 / 9.0).abs() < 1e-12);

        let (up, down) = kappa(&walk);
        assert!((down + 2.0 / 3.0).abs() < 1e-15);
        assert!((up - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            min_up_moves(market.opportunity_terms(2, &asic), 2, 200.0, &walk),
            2
        );
        let closed = closed_form_value(2, 0, 200.0, &asic, &market, &walk).unwrap();
        assert!((closed - 550.0 / 9.0).abs() < 1e-12);
        let oracle = path_oracle_value(2, 0, 200.0, &asic, &market, &walk).unwrap();
        assert!((oracle - 550.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn zero_depth_is_immediate() {
        let (asic, market) = toy_desk();
        let walk = toy_walk();
        for price in [100.0, 250.0, 800.0] {
            let expect = immediate_value(5, price, &asic, &market).unwrap();
            assert_eq!(
                opportunity_value(5, 5, price, &asic, &market, &walk)
                    .unwrap()
                    .value,
                expect
            );
            assert_eq!(
                closed_form_value(5, 5, price, &asic, &market, &walk).unwrap(),
                expect
            );
            assert_eq!(
                path_oracle_value(5, 5, price, &asic, &market, &walk).unwrap(),
                expect
            );
        }
    }

    #[test]
    fn rejects_valuation_after_expiry() {
        let (asic, market) = toy_desk();
        let walk = toy_walk();
        assert!(opportunity_value(1, 2, 100.0, &asic, &market, &walk).is_err());
        assert!(closed_form_value(1, 2, 100.0, &asic, &market, &walk).is_err());
        assert!(value_lattice(1, 2, 100.0, &asic, &market, &walk).is_err());
    }

    #[test]
    fn oracle_refuses_deep_lattices() {
        let (asic, market) = toy_desk();
        let walk = toy_walk();
        assert!(matches!(
            path_oracle_value(26, 0, 100.0, &asic, &market, &walk),
            Err(Error::EnumerationBound { depth: 26, .. })
        ));
    }

    #[test]
    fn worthless_everywhere_is_zero() {
        let (asic, market) = toy_desk();
        let walk = toy_walk();
        // Highest reachable price is 1 * 2^3 = 8 < 250.
        assert_eq!(
            closed_form_value(3, 0, 1.0, &asic, &market, &walk).unwrap(),
            0.0
        );
        assert_eq!(
            path_oracle_value(3, 0, 1.0, &asic, &market, &walk).unwrap(),
            0.0
        );
        assert_eq!(
            opportunity_value(3, 0, 1.0, &asic, &market, &walk)
                .unwrap()
                .value,
            0.0
        );
    }

    #[test]
    fn zero_strike_is_discounted_expected_reward() {
        let (mut asic, market) = toy_desk();
        asic.energy_per_turn = 0.0;
        let walk = RandomWalkParams::strict(1.2, 0.85, 1.01).unwrap();
        let coins = market.opportunity_terms(9, &asic).coins;
        let closed = closed_form_value(9, 0, 300.0, &asic, &market, &walk).unwrap();
        // E*[P_9] = r^9 P_0, discounted back by r^9.
        assert!((closed - coins * 300.0).abs() < 1e-9 * closed);
    }

    #[test]
    fn deep_closed_form_is_finite() {
        let (asic, market) = toy_desk();
        let walk = RandomWalkParams::strict(1.05, 1.0 / 1.05, 1.0001).unwrap();
        let v = closed_form_from_terms(market.opportunity_terms(2000, &asic), 2000, 300.0, &walk);
        assert!(v.is_finite() && v > 0.0);
    }

    fn instance() -> impl Strategy<Value = (RandomWalkParams, OpportunityTerms, u64, f64)> {
        (
            0.3f64..0.99,
            1e-4f64..0.05,
            0.01f64..1.0,
            0.01f64..3.0,
            0.0f64..400.0,
            0u64..=10,
            10.0f64..500.0,
        )
            .prop_map(|(down, eta, up_gap, coins, strike, depth, spot)| {
                let r = 1.0 + eta;
                let walk = RandomWalkParams::strict(r + up_gap, down, r).unwrap();
                (walk, OpportunityTerms { coins, strike }, depth, spot)
            })
    }

    proptest! {
        #[test]
        fn one_step_is_discounted_risk_neutral_expectation(
            (walk, _, _, _) in instance(),
            v_up in 0.0f64..1e4,
            v_down in 0.0f64..1e4,
        ) {
            let q = walk.risk_neutral_up();
            let direct = (q * v_up + (1.0 - q) * v_down) / walk.gross_rate;
            let folded = one_step_value(v_up, v_down, &walk).unwrap();
            prop_assert!((folded - direct).abs() <= 1e-9 * direct.max(1.0));
            prop_assert!(folded >= 0.0);
        }

        #[test]
        fn induction_and_closed_form_agree((walk, terms, depth, spot) in instance()) {
            let a = induction_value(terms, depth, spot, &walk);
            let b = closed_form_from_terms(terms, depth, spot, &walk);
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0), "{a} vs {b}");
        }

        #[test]
        fn monotone_and_convex_in_spot((walk, terms, depth, spot) in instance()) {
            let grid: Vec<f64> = (0..12).map(|i| spot * (0.5 + 0.1 * i as f64)).collect();
            let values: Vec<f64> = grid
                .iter()
                .map(|p| induction_value(terms, depth, *p, &walk))
                .collect();
            for w in values.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9 * w[0].max(1.0));
            }
            // Equally spaced grid: convexity means non-negative second differences.
            for w in values.windows(3) {
                let second = w[2] - 2.0 * w[1] + w[0];
                prop_assert!(second >= -1e-9 * w[1].max(1.0));
            }
        }

        #[test]
        fn value_between_intrinsic_and_expected_reward((walk, terms, depth, spot) in instance()) {
            let v = induction_value(terms, depth, spot, &walk);
            let discount = walk.gross_rate.powi(depth as i32);
            let lower = (terms.coins * spot - terms.strike / discount).max(0.0);
            let upper = terms.coins * spot;
            let tol = 1e-9 * upper.max(1.0);
            prop_assert!(v >= lower - tol && v <= upper + tol, "{lower} <= {v} <= {upper}");
        }

        #[test]
        fn real_world_probability_is_ignored(
            (walk, terms, depth, spot) in instance(),
            q in 0.0f64..=1.0,
        ) {
            let tagged = walk.with_up_probability(q).unwrap();
            prop_assert_eq!(
                induction_value(terms, depth, spot, &walk),
                induction_value(terms, depth, spot, &tagged)
            );
            prop_assert_eq!(
                closed_form_from_terms(terms, depth, spot, &walk),
                closed_form_from_terms(terms, depth, spot, &tagged)
            );
        }

        #[test]
        fn hedged_position_earns_the_risk_free_rate((walk, terms, depth, spot) in instance()) {
            prop_assume!(depth >= 1);
            let (asic, market) = desk_from_terms(terms);
            let lattice = value_lattice(depth, 0, spot, &asic, &market, &walk).unwrap();
            for turn in 0..depth {
                for ups in 0..=turn {
                    let p = lattice.price_at(turn, ups, &walk);
                    let v = lattice.value_at(turn, ups).unwrap();
                    let v_up = lattice.value_at(turn + 1, ups + 1).unwrap();
                    let v_down = lattice.value_at(turn + 1, ups).unwrap();
                    let short = short_amount(p, v_up, v_down, &walk).unwrap();
                    let grown = (v - short * p) * walk.gross_rate;
                    let scale = v_up.abs().max(v_down.abs()).max(1.0);
                    prop_assert!((grown - (v_up - short * walk.up * p)).abs() <= 1e-12 * scale);
                    prop_assert!((grown - (v_down - short * walk.down * p)).abs() <= 1e-12 * scale);
                }
            }
        }
    }
}
