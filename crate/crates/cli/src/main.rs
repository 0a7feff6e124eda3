use std::path::PathBuf;
use std::process::ExitCode;

use asicval_core::asic::{asic_value, delay_sweep, volatility_sweep};
use asicval_core::calibration::CalibrationContext;
use asicval_core::data_io::{
    load_config, load_hashrate_csv, load_price_csv, render_report, write_report, MarketHistory,
    PriceCheck, Provenance, Report, ReportBody, ReportFormat, RunConfig, Scenario,
};
use asicval_core::lattice::{
    closed_form_value, opportunity_value, OpportunityQuote, PricingMethod,
};
use asicval_core::replication::{backtest, imitation_table, ReplicationPlan};
use asicval_core::Error;
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

/// Relative disagreement between the two pricing methods that fails `price`.
const SELF_CHECK_TOLERANCE: f64 = 1e-6;

#[derive(Parser, Debug)]
#[command(
    name = "asicval",
    version,
    about = "Value mining hardware as a bundle of options"
)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Price history CSV with header `date,price_usd`.
    #[arg(long, global = true)]
    prices: Option<PathBuf>,
    /// Network hash-rate CSV with header `date,hashrate_hs`.
    #[arg(long, global = true)]
    hashrate: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value = "csv", value_parser = ["csv", "json"])]
    format: String,
    /// Valuation (or purchase) date, YYYY-MM-DD.
    #[arg(long, global = true)]
    date: Option<NaiveDate>,
    /// Omit the timestamp so identical inputs give identical bytes.
    #[arg(long, global = true)]
    reproducible: bool,
    /// Print calibration details to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Price one opportunity by backward induction and by the closed form.
    Price(TurnArgs),
    /// Value the whole unit.
    ValueAsic(ValuationArgs),
    /// Value lost to late delivery.
    Delay(DelayArgs),
    /// Unit value across a grid of annual volatilities.
    Sensitivity(SensitivityArgs),
    /// Imitating portfolio at every node of one opportunity's lattice.
    Imitate(TurnArgs),
    /// Replay hardware revenue and its imitating portfolio over history.
    Backtest(BacktestArgs),
}

#[derive(Args, Debug)]
struct TurnArgs {
    /// Opportunity turn.
    #[arg(long)]
    turn: Option<u64>,
    #[arg(long)]
    valuation_turn: Option<u64>,
}

#[derive(Args, Debug)]
struct ValuationArgs {
    #[arg(long)]
    valuation_turn: Option<u64>,
}

#[derive(Args, Debug)]
struct DelayArgs {
    /// Comma-separated delays in days, increasing.
    #[arg(long, value_delimiter = ',')]
    delay_days: Option<Vec<u64>>,
    #[arg(long)]
    valuation_turn: Option<u64>,
}

#[derive(Args, Debug)]
struct SensitivityArgs {
    /// `start:end:step` annual volatilities.
    #[arg(long)]
    sigma_grid: Option<String>,
    #[arg(long)]
    valuation_turn: Option<u64>,
}

#[derive(Args, Debug)]
struct BacktestArgs {
    #[arg(long)]
    steps_per_opportunity: Option<u64>,
}

enum Failure {
    Core(Error),
    SelfCheck(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_data_error() { 3 } else { 2 })
        }
        Err(Failure::SelfCheck(msg)) => {
            eprintln!("self-check failed: {msg}");
            ExitCode::from(4)
        }
    }
}

fn load_history(cli: &Cli) -> Result<Option<MarketHistory>, Error> {
    match (&cli.prices, &cli.hashrate) {
        (None, None) => Ok(None),
        (Some(p), Some(h)) => Ok(Some(MarketHistory::new(
            load_price_csv(p)?,
            load_hashrate_csv(h)?,
        ))),
        (Some(p), None) => Ok(Some(MarketHistory::new(
            load_price_csv(p)?,
            Default::default(),
        ))),
        (None, Some(h)) => Ok(Some(MarketHistory::new(
            Default::default(),
            load_hashrate_csv(h)?,
        ))),
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, Error> {
    value.ok_or_else(|| {
        Error::Config(format!(
            "{flag} is required (flag or command block of the config)"
        ))
    })
}

/// Parses `start:end:step` into an inclusive grid.
fn parse_grid(text: &str) -> Result<Vec<f64>, Error> {
    let bad = || Error::Config(format!("--sigma-grid expects start:end:step, got {text:?}"));
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [start, end, step] = parts[..] else {
        return Err(bad());
    };
    if !(start > 0.0 && end >= start && step > 0.0) {
        return Err(bad());
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let config = load_config(required(cli.config.as_ref(), "--config")?)?;
    let history = load_history(cli)?;
    let scenario = config.resolve(history.as_ref(), cli.date)?;
    if cli.verbose > 0 {
        eprintln!("{:#?}", scenario.summary);
    }
    let cmd = &config.command;
    let (s, spot) = (scenario.asic.reception_turn, scenario.market.spot_price);
    let (asic, market, walk) = (&scenario.asic, &scenario.market, &scenario.walk);

    let (name, body) = match &cli.command {
        Command::Price(args) => {
            let t = required(args.turn.or(cmd.turn), "--turn")?;
            let k = args.valuation_turn.or(cmd.valuation_turn).unwrap_or(0);
            let induction = opportunity_value(t, k, spot, asic, market, walk)?;
            let closed_form = OpportunityQuote {
                value: closed_form_value(t, k, spot, asic, market, walk)?,
                method: PricingMethod::ClosedForm,
                ..induction
            };
            let check = PriceCheck::new(induction, closed_form);
            eprintln!(
                "induction {}  closed form {}  difference {:e}",
                induction.value, closed_form.value, check.difference
            );
            if check.relative_difference.is_nan()
                || check.relative_difference > SELF_CHECK_TOLERANCE
            {
                emit(cli, &config, &scenario, "price", ReportBody::Price(check))?;
                return Err(Failure::SelfCheck(format!(
                    "methods disagree by {:e} relative (limit {SELF_CHECK_TOLERANCE:e})",
                    check.relative_difference
                )));
            }
            ("price", ReportBody::Price(check))
        }
        Command::ValueAsic(args) => {
            let t = args.valuation_turn.or(cmd.valuation_turn).unwrap_or(0);
            (
                "value-asic",
                ReportBody::AsicValue(asic_value(s, t, spot, asic, market, walk)?),
            )
        }
        Command::Delay(args) => {
            let days = required(
                args.delay_days.clone().or(cmd.delay_days.clone()),
                "--delay-days",
            )?;
            let turns: Vec<u64> = days.iter().map(|d| d * config.turns_per_day()).collect();
            let t = args.valuation_turn.or(cmd.valuation_turn).unwrap_or(0);
            let mut sweep = delay_sweep(&turns, s, t, spot, asic, market, walk)?;
            for (point, d) in sweep.points.iter_mut().zip(&days) {
                point.axis_value = *d as f64;
            }
            ("delay", ReportBody::Sweep(sweep))
        }
        Command::Sensitivity(args) => {
            let grid = parse_grid(&required(
                args.sigma_grid.clone().or(cmd.sigma_grid.clone()),
                "--sigma-grid",
            )?)?;
            let t = args.valuation_turn.or(cmd.valuation_turn).unwrap_or(0);
            let context = match scenario.context {
                Some(c) => c,
                None => CalibrationContext::per_turn(
                    grid[0],
                    config.market.annual_interest,
                    config.turn_length(),
                    1,
                )?,
            };
            (
                "sensitivity",
                ReportBody::Sweep(volatility_sweep(&grid, &context, s, t, spot, asic, market)?),
            )
        }
        Command::Imitate(args) => {
            let t = required(args.turn.or(cmd.turn), "--turn")?;
            let k = args.valuation_turn.or(cmd.valuation_turn).unwrap_or(0);
            (
                "imitate",
                ReportBody::Imitation(imitation_table(t, k, spot, asic, market, walk)?),
            )
        }
        Command::Backtest(args) => {
            let history = required(history.as_ref(), "--prices and --hashrate")?;
            let purchase = required(scenario.summary.valuation_date, "--date")?;
            let mut plan = ReplicationPlan::from_config(&config, &scenario, purchase)?;
            if let Some(steps) = args.steps_per_opportunity {
                plan.steps_per_opportunity = steps;
            }
            let report = backtest(history, &plan, config.asic.listed_price_usd)?;
            if cli.verbose > 0 {
                eprintln!(
                    "hardware {}  portfolio {}  fees {}  tracking error {}",
                    report.asic_total,
                    report.portfolio_total,
                    report.total_fees,
                    report.tracking_error
                );
            }
            ("backtest", ReportBody::Backtest(report))
        }
    };
    emit(cli, &config, &scenario, name, body)
}

fn emit(
    cli: &Cli,
    config: &RunConfig,
    scenario: &Scenario,
    name: &str,
    body: ReportBody,
) -> Result<(), Failure> {
    let report = Report {
        command: name.to_string(),
        result: body,
        provenance: Provenance {
            config: config.clone(),
            calibration: scenario.summary.clone(),
            generated_at: (!cli.reproducible).then(|| chrono::Utc::now().to_rfc3339()),
        },
    };
    let format: ReportFormat = cli.format.parse()?;
    match &cli.out {
        Some(path) => write_report(&report, format, path)?,
        None => print!("{}", render_report(&report, format)?),
    }
    Ok(())
}
