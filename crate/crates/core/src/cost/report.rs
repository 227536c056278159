use super::{
    cost_per_tp, expected_human_workload, format_decimal, human_only_metrics, required_corpus_size, CostParams, Money,
    PromptMetrics, TokenPrices,
};

/// Aligned text table: corpus size, human workload and total cost to reach
/// `tp_required` positives for each prompt at each human price, plus a
/// human-only baseline row. The cheapest entry per price is starred.
pub fn comparison_table(ms: &[PromptMetrics], prices: &TokenPrices, c_hr_values: &[Money], tp_required: u64) -> String {
    let mut rows: Vec<(String, &PromptMetrics)> = ms.iter().map(|m| (m.prompt_id.to_string(), m)).collect();
    let baseline = ms
        .first()
        .map(|m| human_only_metrics(m.devset_size, m.devset_positives));
    if let Some(b) = &baseline {
        rows.push(("human".to_string(), b));
    }

    let mut header = vec![
        "prompt".to_string(),
        "precision".to_string(),
        "recall".to_string(),
        "sentences".to_string(),
        "human".to_string(),
    ];
    header.extend(c_hr_values.iter().map(|c| format!("total@{c}")));

    let totals: Vec<Vec<Option<Money>>> = rows
        .iter()
        .map(|(_, m)| {
            c_hr_values
                .iter()
                .map(|&c_hr| {
                    let params = CostParams {
                        c_hr,
                        c_api_in: prices.input,
                        c_api_out: prices.output,
                    };
                    cost_per_tp(m, &params).ok().map(|j| j * tp_required)
                })
                .collect()
        })
        .collect();
    let best: Vec<Option<Money>> = (0..c_hr_values.len())
        .map(|k| totals.iter().filter_map(|t| t[k]).min())
        .collect();

    let mut table = vec![header];
    for ((label, m), total) in rows.iter().zip(&totals) {
        let pct = |r: Option<super::Rational>| match r {
            Some(r) => format_decimal(&(r * super::Rational::from_integer(100)), 2),
            None => "-".into(),
        };
        let n = required_corpus_size(m.devset_size, m.tp, tp_required)
            .map(|n| n.to_string())
            .unwrap_or_else(|_| "-".into());
        let h = m
            .precision()
            .and_then(|p| expected_human_workload(tp_required, p).ok())
            .map(|n| n.to_string())
            .unwrap_or_else(|| "-".into());
        let mut row = vec![label.clone(), pct(m.precision()), pct(m.recall()), n, h];
        for (k, t) in total.iter().enumerate() {
            row.push(match t {
                Some(t) if Some(*t) == best[k] => format!("{t:.2}*"),
                Some(t) => format!("{t:.2}"),
                None => "-".into(),
            });
        }
        table.push(row);
    }

    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}
