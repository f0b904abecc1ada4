use std::fmt;

use super::experiment::AblationCell;
use super::metrics::{Comparison, EvalReport};

/// Plain-text table with right-aligned numeric columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self {
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut widths: Vec<usize> = self.headers.iter().map(String::len).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let line = |f: &mut fmt::Formatter<'_>, cells: &[String]| -> fmt::Result {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                .collect();
            writeln!(f, "{}", parts.join("  ").trim_end())
        };
        line(f, &self.headers)?;
        let total: usize = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
        writeln!(f, "{}", "-".repeat(total))?;
        for r in &self.rows {
            line(f, r)?;
        }
        Ok(())
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".to_string(), |x| format!("{x:.5}"))
}

pub fn eval_table(report: &EvalReport) -> Table {
    let mut t = Table::new(&["label", "ndcg", "searches", "skipped"]);
    for l in &report.per_milestone {
        t.push(vec![
            l.milestone.to_string(),
            opt(l.mean),
            l.searches.to_string(),
            l.skipped.to_string(),
        ]);
    }
    t
}

pub fn comparison_table(c: &Comparison) -> Table {
    let mut t = Table::new(&["seed", "ndcg_a", "ndcg_b", "delta"]);
    for i in 0..c.seeds.len() {
        t.push(vec![
            c.seeds[i].to_string(),
            format!("{:.5}", c.ndcg_a[i]),
            format!("{:.5}", c.ndcg_b[i]),
            format!("{:+.5}", c.deltas[i]),
        ]);
    }
    t.push(vec![
        "mean".into(),
        format!("{:.5}", c.ndcg_a.iter().sum::<f64>() / c.ndcg_a.len() as f64),
        format!("{:.5}", c.ndcg_b.iter().sum::<f64>() / c.ndcg_b.len() as f64),
        format!("{:+.5} ± {:.5} ({:+.2}%)", c.mean_delta, c.ci_half_width, c.relative_percent),
    ]);
    t
}

pub fn ablation_table(cells: &[AblationCell]) -> Table {
    let mut t = Table::new(&["tasks", "ndcg", "delta", "ci95", "delta_%", "params", "d_params", "searches", "d_searches"]);
    for c in cells {
        t.push(vec![
            c.name.clone(),
            format!("{:.5}", c.mean_ndcg),
            format!("{:+.5}", c.delta_mean),
            format!("{:.5}", c.ci_half_width),
            format!("{:+.2}", c.relative_percent),
            c.parameter_count.to_string(),
            format!("{:+}", c.parameter_delta),
            c.searches.to_string(),
            format!("{:+}", c.search_delta),
        ]);
    }
    t
}
