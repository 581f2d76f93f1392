//! Markdown tables from aggregate rows.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::output::AggregateRow;

fn cell(mean: Option<f64>, se: Option<f64>) -> String {
    match (mean, se) {
        (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
        (Some(m), None) => format!("{m:.4}"),
        _ => "-".into(),
    }
}

/// Methods in first-seen order.
fn methods(rows: &[AggregateRow]) -> Vec<&str> {
    let mut seen = BTreeSet::new();
    rows.iter().map(|r| r.method.as_str()).filter(|m| seen.insert(*m)).collect()
}

fn budget_header(budgets: &BTreeMap<usize, Option<f64>>) -> String {
    budgets
        .iter()
        .map(|(b, k)| match k {
            Some(k) => format!("{b} ({:.0}%)", k * 100.0),
            None => b.to_string(),
        })
        .collect::<Vec<_>>()
        .join(" | ")
}

fn grid(
    out: &mut String,
    heading: &str,
    rows: &[AggregateRow],
    value: impl Fn(&AggregateRow) -> (Option<f64>, Option<f64>),
) {
    let mut budgets = BTreeMap::new();
    for r in rows {
        budgets.entry(r.budget_per_class).or_insert(r.kappa);
    }
    let _ = writeln!(out, "\n### {heading}\n");
    let _ = writeln!(out, "| method | {} |", budget_header(&budgets));
    let _ = writeln!(out, "|---|{}", "---|".repeat(budgets.len()));
    for m in methods(rows) {
        let cells: Vec<String> = budgets
            .keys()
            .map(|b| {
                rows.iter()
                    .find(|r| r.method == m && r.budget_per_class == *b)
                    .map_or("-".into(), |r| {
                        let (mean, se) = value(r);
                        cell(mean, se)
                    })
            })
            .collect();
        let _ = writeln!(out, "| {m} | {} |", cells.join(" | "));
    }
}

/// Method-by-budget tables of accuracy, forgetting and plasticity, then an
/// accuracy-versus-cost listing.
pub fn render_report(title: &str, rows: &[AggregateRow]) -> String {
    let mut out = format!("## {title}\n");
    grid(&mut out, "Average final accuracy", rows, |r| (Some(r.avg_final_acc_mean), r.avg_final_acc_se));
    grid(&mut out, "Forgetting", rows, |r| (r.forgetting_mean, r.forgetting_se));
    grid(&mut out, "Plasticity", rows, |r| (Some(r.plasticity_mean), r.plasticity_se));
    let _ = writeln!(out, "\n### Accuracy vs. cost\n");
    let _ = writeln!(out, "| method | budget | accuracy | optimizer steps | extra passes |");
    let _ = writeln!(out, "|---|---|---|---|---|");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {:.4} | {:.0} | {:.0} |",
            r.method, r.budget_per_class, r.avg_final_acc_mean, r.steps_mean, r.extra_passes_mean
        );
    }
    out
}
