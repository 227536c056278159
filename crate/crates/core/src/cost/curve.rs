use serde::Serialize;

use super::{CostError, Money, PromptMetrics, Rational, TokenPrices};

/// Cost per true positive of one prompt as an affine function of `c_hr`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostLine {
    pub prompt_id: u32,
    /// `(tp + fp) / tp`: reviewed sentences per confirmed positive.
    #[serde(serialize_with = "super::money::serialize_rational")]
    pub slope: Rational,
    /// API spend per confirmed positive.
    pub intercept: Money,
}

impl CostLine {
    pub fn from_metrics(m: &PromptMetrics, prices: &TokenPrices) -> Option<CostLine> {
        if m.tp == 0 {
            return None;
        }
        Some(CostLine {
            prompt_id: m.prompt_id,
            slope: Rational::new((m.tp + m.fp) as i128, m.tp as i128),
            intercept: m.api_cost(prices) / m.tp,
        })
    }

    pub fn at(&self, c_hr: Money) -> Money {
        self.intercept + c_hr * self.slope
    }

    /// `c_hr` where both lines cost the same, if they are not parallel.
    pub fn intersect(&self, other: &CostLine) -> Option<Money> {
        let ds = self.slope - other.slope;
        if ds == Rational::from_integer(0) {
            return None;
        }
        Some(Money::new((other.intercept - self.intercept).rational() / ds))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Crossover {
    pub a: u32,
    pub b: u32,
    pub c_hr: Money,
    pub cost: Money,
}

/// `prompt_id` is optimal on `[from, to]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EnvelopeSegment {
    pub prompt_id: u32,
    pub from: Money,
    pub to: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostCurves {
    pub from: Money,
    pub to: Money,
    pub lines: Vec<CostLine>,
    /// Pairwise intersections inside the range, ordered by `c_hr`.
    pub crossovers: Vec<Crossover>,
    /// Lower envelope, left to right.
    pub envelope: Vec<EnvelopeSegment>,
    /// Prompts without any true positive.
    pub excluded: Vec<u32>,
}

pub fn cost_curve(ms: &[PromptMetrics], from: Money, to: Money, prices: &TokenPrices) -> Result<CostCurves, CostError> {
    if from >= to {
        return Err(CostError::DegenerateRange {
            from: from.to_string(),
            to: to.to_string(),
        });
    }
    let mut lines = Vec::new();
    let mut excluded = Vec::new();
    for m in ms {
        match CostLine::from_metrics(m, prices) {
            Some(line) => lines.push(line),
            None => excluded.push(m.prompt_id),
        }
    }

    let mut crossovers = Vec::new();
    for (i, a) in lines.iter().enumerate() {
        for b in &lines[i + 1..] {
            if let Some(x) = a.intersect(b) {
                if x >= from && x <= to {
                    crossovers.push(Crossover {
                        a: a.prompt_id.min(b.prompt_id),
                        b: a.prompt_id.max(b.prompt_id),
                        c_hr: x,
                        cost: a.at(x),
                    });
                }
            }
        }
    }
    crossovers.sort_by_key(|x| (x.c_hr, x.a, x.b));

    let mut cuts: Vec<Money> = vec![from, to];
    cuts.extend(crossovers.iter().map(|c| c.c_hr));
    cuts.sort();
    cuts.dedup();

    let mut envelope: Vec<EnvelopeSegment> = Vec::new();
    for w in cuts.windows(2) {
        let mid = Money::new((w[0].rational() + w[1].rational()) / Rational::from_integer(2));
        let Some(best) = cheapest(&lines, mid) else { break };
        match envelope.last_mut() {
            Some(last) if last.prompt_id == best.prompt_id => last.to = w[1],
            _ => envelope.push(EnvelopeSegment {
                prompt_id: best.prompt_id,
                from: w[0],
                to: w[1],
            }),
        }
    }

    Ok(CostCurves {
        from,
        to,
        lines,
        crossovers,
        envelope,
        excluded,
    })
}

fn cheapest(lines: &[CostLine], c_hr: Money) -> Option<&CostLine> {
    lines.iter().min_by_key(|l| (l.at(c_hr), l.prompt_id))
}

impl CostCurves {
    /// Optimal prompt at `c_hr` with the same tie rule as `select_prompt`.
    pub fn optimal_at(&self, c_hr: Money) -> Option<u32> {
        cheapest(&self.lines, c_hr).map(|l| l.prompt_id)
    }

    /// Order in which prompts become optimal as `c_hr` grows.
    pub fn schedule(&self) -> Vec<u32> {
        self.envelope.iter().map(|s| s.prompt_id).collect()
    }

    /// `c_hr` plus one column per prompt, sampled at `steps + 1` evenly
    /// spaced points.
    pub fn to_csv(&self, steps: u32) -> String {
        let steps = steps.max(1);
        let mut out = String::from("c_hr");
        for l in &self.lines {
            out.push_str(&format!(",prompt_{}", l.prompt_id));
        }
        out.push('\n');
        let width = self.to - self.from;
        for i in 0..=steps {
            let x = self.from + width * Rational::new(i as i128, steps as i128);
            out.push_str(&x.to_decimal_string(6));
            for l in &self.lines {
                out.push(',');
                out.push_str(&l.at(x).to_decimal_string(6));
            }
            out.push('\n');
        }
        out
    }
}
