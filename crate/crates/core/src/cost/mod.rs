//! Cost per true positive and everything derived from it.
//!
//! For a prompt evaluated on an annotated development set, the expected cost
//! of one confirmed positive is
//!
//! ```text
//! J = (c_api_in * input_tokens + c_api_out * output_tokens + c_hr * (TP + FP)) / TP
//! ```
//!
//! The human reviews everything the model calls positive; the API bill covers
//! the whole development run. Setting `c_api_in == c_api_out` gives the
//! single-price form. All arithmetic is exact (see [`Money`]).

mod curve;
mod money;
pub mod reference;
mod report;

use std::collections::BTreeMap;

use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{LabeledResult, Usage};

pub use curve::{cost_curve, CostCurves, CostLine, Crossover, EnvelopeSegment};
pub use money::{format_decimal, parse_decimal, round_to_u64, Money, ParseDecimalError, Rational};
pub use report::comparison_table;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostError {
    #[error("prompt {prompt_id} finds no true positives; cost per true positive is undefined")]
    NoYield { prompt_id: u32 },
    #[error("no prompt yields any true positive")]
    NoViablePrompt,
    #[error("empty prompt list")]
    Empty,
    #[error("{0} must not be negative")]
    NegativePrice(&'static str),
    #[error("precision must be positive")]
    ZeroPrecision,
    #[error("development set yields no true positives")]
    ZeroDevsetYield,
    #[error("inconsistent metrics for prompt {prompt_id}: {reason}")]
    InconsistentMetrics { prompt_id: u32, reason: String },
    #[error("prediction for {0} which is not in the development set")]
    UnknownPrediction(String),
    #[error("c_hr range [{from}, {to}] is empty")]
    DegenerateRange { from: String, to: String },
}

/// Prices entering the cost per true positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostParams {
    /// Human review of one sentence.
    pub c_hr: Money,
    /// One input token.
    pub c_api_in: Money,
    /// One output token.
    pub c_api_out: Money,
}

impl CostParams {
    pub fn new(c_hr: Money, c_api_in: Money, c_api_out: Money) -> Result<Self, CostError> {
        let params = CostParams {
            c_hr,
            c_api_in,
            c_api_out,
        };
        params.validate()?;
        Ok(params)
    }

    /// Same price for input and output tokens.
    pub fn single_price(c_hr: Money, c_api: Money) -> Result<Self, CostError> {
        Self::new(c_hr, c_api, c_api)
    }

    pub fn validate(&self) -> Result<(), CostError> {
        if self.c_hr.is_negative() {
            return Err(CostError::NegativePrice("c_hr"));
        }
        if self.c_api_in.is_negative() {
            return Err(CostError::NegativePrice("c_api_in"));
        }
        if self.c_api_out.is_negative() {
            return Err(CostError::NegativePrice("c_api_out"));
        }
        Ok(())
    }

    pub fn scaled(&self, k: Rational) -> CostParams {
        CostParams {
            c_hr: self.c_hr * k,
            c_api_in: self.c_api_in * k,
            c_api_out: self.c_api_out * k,
        }
    }

    pub fn prices(&self) -> TokenPrices {
        TokenPrices {
            input: self.c_api_in,
            output: self.c_api_out,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenPrices {
    pub input: Money,
    pub output: Money,
}

/// Confusion counts and token usage of one prompt on the development set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMetrics {
    pub prompt_id: u32,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub devset_size: u64,
    pub devset_positives: u64,
}

fn ratio(num: u64, den: u64) -> Option<Rational> {
    (den > 0).then(|| Rational::new(num as i128, den as i128))
}

impl PromptMetrics {
    pub fn validate(&self) -> Result<(), CostError> {
        let bad = |reason: String| CostError::InconsistentMetrics {
            prompt_id: self.prompt_id,
            reason,
        };
        if self.tp + self.fp + self.fn_ + self.tn != self.devset_size {
            return Err(bad(format!(
                "tp+fp+fn+tn = {} but devset_size = {}",
                self.tp + self.fp + self.fn_ + self.tn,
                self.devset_size
            )));
        }
        if self.tp + self.fn_ != self.devset_positives {
            return Err(bad(format!(
                "tp+fn = {} but devset_positives = {}",
                self.tp + self.fn_,
                self.devset_positives
            )));
        }
        Ok(())
    }

    pub fn precision(&self) -> Option<Rational> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<Rational> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> Option<Rational> {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    pub fn api_cost(&self, prices: &TokenPrices) -> Money {
        prices.input * self.input_tokens + prices.output * self.output_tokens
    }
}

/// Everything the model flags, reviewed by a human: the no-LLM baseline is a
/// "prompt" whose precision is the base rate and which spends no tokens.
pub fn human_only_metrics(devset_size: u64, devset_positives: u64) -> PromptMetrics {
    PromptMetrics {
        prompt_id: 0,
        tp: devset_positives,
        fp: devset_size - devset_positives,
        fn_: 0,
        tn: 0,
        input_tokens: 0,
        output_tokens: 0,
        devset_size,
        devset_positives,
    }
}

/// Expected spend per confirmed positive.
pub fn cost_per_tp(m: &PromptMetrics, c: &CostParams) -> Result<Money, CostError> {
    if m.tp == 0 {
        return Err(CostError::NoYield { prompt_id: m.prompt_id });
    }
    let total = m.api_cost(&c.prices()) + c.c_hr * (m.tp + m.fp);
    Ok(total / m.tp)
}

/// Index of the prompt with the lowest cost per true positive. Ties go to the
/// lowest prompt id; prompts without yield never win.
pub fn select_prompt(ms: &[PromptMetrics], c: &CostParams) -> Result<usize, CostError> {
    if ms.is_empty() {
        return Err(CostError::Empty);
    }
    ms.iter()
        .enumerate()
        .filter_map(|(i, m)| cost_per_tp(m, c).ok().map(|j| (j, m.prompt_id, i)))
        .min()
        .map(|(_, _, i)| i)
        .ok_or(CostError::NoViablePrompt)
}

/// Raw corpus size expected to produce `tp_required` positives:
/// `devset_size * tp_required / tp_on_devset`, rounded to nearest.
pub fn required_corpus_size(devset_size: u64, tp_on_devset: u64, tp_required: u64) -> Result<u64, CostError> {
    if tp_on_devset == 0 {
        return Err(CostError::ZeroDevsetYield);
    }
    let n = Rational::new(devset_size as i128 * tp_required as i128, tp_on_devset as i128);
    Ok(round_to_u64(&n))
}

/// Sentences a human must review to confirm `tp_required` positives when
/// only model positives are reviewed.
pub fn expected_human_workload(tp_required: u64, precision: Rational) -> Result<u64, CostError> {
    if precision <= Rational::zero() {
        return Err(CostError::ZeroPrecision);
    }
    Ok(round_to_u64(&(Rational::from_integer(tp_required as i128) / precision)))
}

/// Gold labels of the development set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DevSet {
    pub gold: BTreeMap<String, bool>,
}

impl DevSet {
    pub fn new(gold: impl IntoIterator<Item = (String, bool)>) -> Self {
        DevSet {
            gold: gold.into_iter().collect(),
        }
    }

    pub fn size(&self) -> u64 {
        self.gold.len() as u64
    }

    pub fn positives(&self) -> u64 {
        self.gold.values().filter(|&&g| g).count() as u64
    }

    pub fn negatives(&self) -> u64 {
        self.size() - self.positives()
    }
}

/// Metrics plus derived scores. A zero denominator yields a score of 0 and
/// sets the matching `*_undefined` flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevsetEvaluation {
    pub metrics: PromptMetrics,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    /// Gold ids with no prediction, counted as predicted negative.
    pub unresolved: Vec<String>,
}

pub fn devset_metrics(
    gold: &DevSet,
    predicted: &[LabeledResult],
    usage: &Usage,
    prompt_id: u32,
) -> Result<DevsetEvaluation, CostError> {
    let mut labels: BTreeMap<&str, bool> = BTreeMap::new();
    for p in predicted {
        if !gold.gold.contains_key(&p.candidate_id) {
            return Err(CostError::UnknownPrediction(p.candidate_id.clone()));
        }
        labels.insert(&p.candidate_id, p.label);
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    let mut unresolved = Vec::new();
    for (id, &g) in &gold.gold {
        let p = match labels.get(id.as_str()) {
            Some(&p) => p,
            None => {
                unresolved.push(id.clone());
                false
            }
        };
        match (g, p) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let metrics = PromptMetrics {
        prompt_id,
        tp,
        fp,
        fn_,
        tn,
        input_tokens: usage.input_tokens,
        output_tokens: usage.output_tokens,
        devset_size: gold.size(),
        devset_positives: gold.positives(),
    };
    let as_f64 = |r: Option<Rational>| r.and_then(|r| r.to_f64()).unwrap_or(0.0);
    Ok(DevsetEvaluation {
        precision: as_f64(metrics.precision()),
        recall: as_f64(metrics.recall()),
        f1: as_f64(metrics.f1()),
        precision_undefined: metrics.precision().is_none(),
        recall_undefined: metrics.recall().is_none(),
        metrics,
        unresolved,
    })
}
