//! CSV and JSON serialization of results.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::asic::{AsicQuote, SweepResult};
use crate::error::{Error, Result};
use crate::lattice::OpportunityQuote;
use crate::replication::{BacktestReport, ImitationNode};

use super::{format_sig, round_sig, CalibrationSummary, RunConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!(
                "unknown format {other:?}, expected csv or json"
            ))),
        }
    }
}

/// One opportunity priced by backward induction and by the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceCheck {
    pub induction: OpportunityQuote,
    pub closed_form: OpportunityQuote,
    pub difference: f64,
    pub relative_difference: f64,
}

impl PriceCheck {
    pub fn new(induction: OpportunityQuote, closed_form: OpportunityQuote) -> Self {
        let difference = closed_form.value - induction.value;
        let scale = induction.value.abs().max(closed_form.value.abs());
        PriceCheck {
            induction,
            closed_form,
            difference,
            relative_difference: if scale > 0.0 {
                difference.abs() / scale
            } else {
                0.0
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportBody {
    Price(PriceCheck),
    AsicValue(AsicQuote),
    Sweep(SweepResult),
    Imitation(Vec<ImitationNode>),
    Backtest(BacktestReport),
}

/// Inputs needed to recompute a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config: RunConfig,
    pub calibration: CalibrationSummary,
    /// Wall-clock time of the run; omitted for reproducible output.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub result: ReportBody,
    pub provenance: Provenance,
}

/// Replaces every float in `value` by its rounding to twelve significant digits.
fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().expect("f64 number"));
            *value = serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

pub fn report_to_json(report: &Report) -> Result<String> {
    let mut value = serde_json::to_value(report).map_err(|e| Error::data(e.to_string()))?;
    round_floats(&mut value);
    let mut text = serde_json::to_string_pretty(&value).map_err(|e| Error::data(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// The result table of `body`; provenance is JSON-only.
pub fn body_to_csv(body: &ReportBody) -> String {
    let f = |x: f64| format_sig(x);
    match body {
        ReportBody::Price(p) => csv_table(
            &[
                "opportunity_turn",
                "valuation_turn",
                "spot_usd",
                "induction_usd",
                "closed_form_usd",
                "difference_usd",
            ],
            [vec![
                p.closed_form.opportunity_turn.to_string(),
                p.closed_form.valuation_turn.to_string(),
                f(p.closed_form.spot),
                f(p.induction.value),
                f(p.closed_form.value),
                f(p.difference),
            ]],
        ),
        ReportBody::AsicValue(q) => csv_table(
            &[
                "turn",
                "mortality_weight",
                "value_usd",
                "weighted_value_usd",
            ],
            q.breakdown.iter().map(|c| {
                vec![
                    c.turn.to_string(),
                    f(c.mortality_weight),
                    f(c.value),
                    f(c.mortality_weight * c.value),
                ]
            }),
        ),
        ReportBody::Sweep(s) => csv_table(
            &["axis", "value_usd", "percent_change"],
            s.points
                .iter()
                .map(|p| vec![f(p.axis_value), f(p.value_usd), f(p.percent_change)]),
        ),
        ReportBody::Imitation(nodes) => csv_table(
            &[
                "turn",
                "up_moves",
                "price_usd",
                "value_usd",
                "coins",
                "bonds_usd",
            ],
            nodes.iter().map(|n| {
                vec![
                    n.turn.to_string(),
                    n.up_moves.to_string(),
                    f(n.price),
                    f(n.value),
                    f(n.coins),
                    f(n.bonds),
                ]
            }),
        ),
        ReportBody::Backtest(b) => csv_table(
            &["date", "asic_revenue_usd", "portfolio_revenue_usd"],
            b.dates
                .iter()
                .zip(b.asic_revenue.iter().zip(&b.portfolio_revenue))
                .map(|(d, (a, p))| vec![d.to_string(), f(*a), f(*p)]),
        ),
    }
}

pub fn render_report(report: &Report, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => Ok(body_to_csv(&report.result)),
        ReportFormat::Json => report_to_json(report),
    }
}

pub fn write_report(report: &Report, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = render_report(report, format)?;
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Keys of a JSON object in document order, for tests and tooling.
pub fn object_keys(value: &Value) -> Vec<String> {
    value
        .as_object()
        .map(Map::keys)
        .into_iter()
        .flatten()
        .cloned()
        .collect()
}
