//! Published development-set results, converted back to confusion counts.
//!
//! Rows give precision and recall in percent and the API spend per true
//! positive in cents. Counts are recovered as `tp = round(recall * P)` and
//! `fp = round(tp / precision - tp)`. The API spend is expressed as input
//! tokens at [`REFERENCE_TOKEN_PRICE`] so the usual cost formula applies.

use serde::Deserialize;

use super::{parse_decimal, round_to_u64, Money, PromptMetrics, Rational, TokenPrices};

const BUNDLED: &str = include_str!("../../data/devset-reference.toml");

/// Price of one reference token in dollars (one micro-dollar).
pub const REFERENCE_TOKEN_PRICE: &str = "0.000001";

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReferenceRow {
    pub prompt: u32,
    pub precision: String,
    pub recall: String,
    pub f1: String,
    pub hr_per_tp: String,
    pub api_cents_per_tp: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReferenceTable {
    pub devset_size: u64,
    pub devset_positives: u64,
    #[serde(rename = "row")]
    pub rows: Vec<ReferenceRow>,
}

pub fn bundled() -> ReferenceTable {
    toml::from_str(BUNDLED).expect("bundled reference table is valid")
}

pub fn reference_prices() -> TokenPrices {
    let p = Money::parse(REFERENCE_TOKEN_PRICE).unwrap();
    TokenPrices { input: p, output: p }
}

fn pct(s: &str) -> Rational {
    parse_decimal(s).expect("percent value") / Rational::from_integer(100)
}

impl ReferenceRow {
    pub fn to_metrics(&self, devset_size: u64, devset_positives: u64) -> PromptMetrics {
        let tp = round_to_u64(&(pct(&self.recall) * Rational::from_integer(devset_positives as i128)));
        let precision = pct(&self.precision);
        let reviewed = if precision > Rational::from_integer(0) {
            Rational::from_integer(tp as i128) / precision
        } else {
            Rational::from_integer(tp as i128)
        };
        let fp = round_to_u64(&reviewed).saturating_sub(tp);
        let fn_ = devset_positives - tp;
        let dollars = parse_decimal(&self.api_cents_per_tp).expect("api cost") / Rational::from_integer(100);
        let price = parse_decimal(REFERENCE_TOKEN_PRICE).unwrap();
        let input_tokens = round_to_u64(&(dollars * Rational::from_integer(tp as i128) / price));
        PromptMetrics {
            prompt_id: self.prompt,
            tp,
            fp,
            fn_,
            tn: devset_size - tp - fp - fn_,
            input_tokens,
            output_tokens: 0,
            devset_size,
            devset_positives,
        }
    }
}

impl ReferenceTable {
    pub fn metrics(&self) -> Vec<PromptMetrics> {
        self.rows
            .iter()
            .map(|r| r.to_metrics(self.devset_size, self.devset_positives))
            .collect()
    }

    pub fn metrics_for(&self, prompt: u32) -> Option<PromptMetrics> {
        self.rows
            .iter()
            .find(|r| r.prompt == prompt)
            .map(|r| r.to_metrics(self.devset_size, self.devset_positives))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_table_converts() {
        let t = bundled();
        assert_eq!(t.rows.len(), 18);
        let ms = t.metrics();
        for m in &ms {
            m.validate().unwrap();
        }
        let p12 = t.metrics_for(12).unwrap();
        assert_eq!((p12.tp, p12.fp), (67, 13));
        assert_eq!(p12.input_tokens, 93_800);
        let p17 = t.metrics_for(17).unwrap();
        assert_eq!((p17.tp, p17.fp), (100, 11));
        let p5 = t.metrics_for(5).unwrap();
        assert_eq!((p5.tp, p5.fp), (95, 73));
        let p18 = t.metrics_for(18).unwrap();
        assert_eq!((p18.tp, p18.fp), (101, 9));
    }
}
