use asicval_core::asic::asic_value;
use asicval_core::calibration::CalibrationContext;
use asicval_core::lattice::{closed_form_from_terms, induction_value, path_oracle_value};
use asicval_core::model::{
    AsicSpec, ElectricityPrice, HashRateModel, MarketModel, MortalityModel, RewardSchedule,
};
use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

fn desk() -> (AsicSpec, MarketModel) {
    let asic = AsicSpec {
        hash_rate: 14e12,
        energy_per_turn: 1372.0 * 24.0 / 14e12,
        mortality: MortalityModel::Step { lifetime: 730 },
        reception_turn: 0,
        lifetime_horizon: 730,
    };
    let market = MarketModel {
        spot_price: 9000.0,
        hash_rate: HashRateModel::Exponential {
            initial: 6e19,
            growth: 0.002,
        },
        block_reward: RewardSchedule::Constant(1800.0),
        electricity: ElectricityPrice::Constant(0.035 / 1000.0),
        pool_fee: 0.02,
        coin_trade_fee: 0.01,
        bond_trade_fee: 0.01,
    };
    (asic, market)
}

fn pricing(c: &mut Criterion) {
    let walk = CalibrationContext::per_turn(0.8, 0.02, 1.0 / 365.0, 1)
        .unwrap()
        .walk()
        .unwrap();
    let (asic, market) = desk();

    c.bench_function("asic_value_730_opportunities", |b| {
        b.iter(|| asic_value(0, 0, black_box(9000.0), &asic, &market, &walk).unwrap())
    });

    let mut group = c.benchmark_group("single_opportunity");
    for depth in [30u64, 365, 730] {
        let terms = market.opportunity_terms(depth, &asic);
        group.bench_with_input(BenchmarkId::new("closed_form", depth), &depth, |b, &d| {
            b.iter(|| closed_form_from_terms(terms, d, black_box(9000.0), &walk))
        });
        group.bench_with_input(BenchmarkId::new("induction", depth), &depth, |b, &d| {
            b.iter(|| induction_value(terms, d, black_box(9000.0), &walk))
        });
    }
    group.bench_function("path_oracle_16", |b| {
        b.iter(|| path_oracle_value(16, 0, black_box(9000.0), &asic, &market, &walk).unwrap())
    });
    group.finish();
}

criterion_group!(benches, pricing);
criterion_main!(benches);
