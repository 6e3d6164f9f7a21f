//! Aligned text tables for cost breakdowns and benchmark runs.

use serde::{Deserialize, Serialize};

use crate::cost::CostBreakdown;

/// One benchmarked head: shape, mean measured times and model predictions, in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub input_dim: usize,
    /// Widths after the input, e.g. `128-16`.
    pub size: String,
    pub unencrypted: Option<f64>,
    pub encrypted: Option<f64>,
    pub predicted: f64,
    pub traced: f64,
}

impl TimingRow {
    pub fn from_breakdown(b: &CostBreakdown, unencrypted: Option<f64>, encrypted: Option<f64>) -> Self {
        TimingRow {
            input_dim: b.dims[0],
            size: b.dims[1..].iter().map(usize::to_string).collect::<Vec<_>>().join("-"),
            unencrypted,
            encrypted,
            predicted: b.total,
            traced: b.traced_total,
        }
    }
}

/// `0.008 ms`, `57 ms`, `1.54 s`.
pub fn format_seconds(s: f64) -> String {
    if s >= 1.0 {
        format!("{s:.2} s")
    } else if s >= 1e-3 {
        format!("{:.1} ms", s * 1e3)
    } else {
        format!("{:.3} ms", s * 1e3)
    }
}

fn render(header: &[&str], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: Vec<String>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let rule = format!("|{}|\n", widths.iter().map(|w| "-".repeat(w + 2)).collect::<Vec<_>>().join("|"));
    let mut out = line(header.iter().map(|h| h.to_string()).collect());
    out.push_str(&rule);
    for r in rows {
        out.push_str(&line(r.clone()));
    }
    out
}

fn opt(s: Option<f64>) -> String {
    s.map_or_else(|| "-".to_string(), format_seconds)
}

/// Input dim, head size, unencrypted and encrypted time per prediction, and the two predictions.
pub fn timing_table(rows: &[TimingRow]) -> String {
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.input_dim.to_string(),
                r.size.clone(),
                opt(r.unencrypted),
                opt(r.encrypted),
                format_seconds(r.predicted),
                format_seconds(r.traced),
            ]
        })
        .collect();
    render(&["Input Dim.", "Size", "Unencrypted", "Encrypted", "Predicted C(i)", "Traced"], &cells)
}

impl CostBreakdown {
    pub fn to_table(&self) -> String {
        let mut cells: Vec<Vec<String>> = self
            .layers
            .iter()
            .map(|l| {
                vec![
                    l.layer.to_string(),
                    l.d_in.to_string(),
                    l.d_out.to_string(),
                    l.n_c.to_string(),
                    format_seconds(l.predicted),
                    format_seconds(l.traced),
                    opt(l.upper_bound),
                ]
            })
            .collect();
        cells.push(vec![
            "total".into(),
            String::new(),
            String::new(),
            String::new(),
            format_seconds(self.total),
            format_seconds(self.traced_total),
            String::new(),
        ]);
        render(&["Layer", "d_in", "d_out", "n_c", "Predicted C(i)", "Traced", "Bound"], &cells)
    }
}
