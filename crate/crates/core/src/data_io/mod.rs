//! File formats: market history CSVs, the JSON run configuration, and
//! report serialization.

mod config;
mod report;
mod series;

pub use config::*;
pub use report::*;
pub use series::*;

/// Significant digits kept in every written float.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// Rounds `x` to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}

/// Shortest decimal text for `x` rounded to [`SIGNIFICANT_DIGITS`]
/// significant digits.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    format!("{}", round_sig(x))
}
