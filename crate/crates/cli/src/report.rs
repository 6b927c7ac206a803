use std::fmt::Write;

use cfc_core::{CandidateResult, EvaluationReport};

fn pct(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{:.2}", 100.0 * v),
        None => "n/a".to_string(),
    }
}

/// Pads every column to its widest cell; the first column is left-aligned,
/// the rest right-aligned.
fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[c]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

fn to_csv(rows: &[Vec<String>]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn candidate_rows(candidates: &[CandidateResult], best: usize) -> Vec<Vec<String>> {
    let mut rows = vec![vec![
        "k".to_string(),
        "cv_accuracy".to_string(),
        "features".to_string(),
        "fcm_iterations".to_string(),
        "converged".to_string(),
        "selected".to_string(),
    ]];
    for c in candidates {
        rows.push(vec![
            c.k.to_string(),
            format!("{:.4}", c.cv_accuracy),
            c.feature_count.to_string(),
            c.fcm_iterations.to_string(),
            c.fcm_converged.to_string(),
            if c.k == best { "*" } else { "" }.to_string(),
        ]);
    }
    rows
}

pub fn candidates_text(candidates: &[CandidateResult], best: usize) -> String {
    let mut out = align(&candidate_rows(candidates, best));
    let _ = writeln!(out, "\nk* = {best}");
    out
}

pub fn candidates_csv(candidates: &[CandidateResult], best: usize) -> anyhow::Result<String> {
    to_csv(&candidate_rows(candidates, best))
}

/// Per-class rows in percent, one TP and one FP line, with the
/// instance-weighted average as the last column.
fn rate_rows(name: &str, r: &EvaluationReport) -> Vec<Vec<String>> {
    let mut header = vec!["Classifier".to_string(), String::new()];
    header.extend(r.classes.iter().cloned());
    header.push("Average".to_string());

    let mut tp = vec![name.to_string(), "TP".to_string()];
    tp.extend(r.tpr.iter().map(|&v| pct(v)));
    tp.push(pct(Some(r.weighted_tpr)));

    let mut fp = vec![String::new(), "FP".to_string()];
    fp.extend(r.fpr.iter().map(|&v| pct(v)));
    fp.push(pct(Some(r.weighted_fpr)));
    vec![header, tp, fp]
}

pub fn evaluation_text(name: &str, r: &EvaluationReport) -> String {
    let mut out = align(&rate_rows(name, r));
    let _ = writeln!(out);
    let _ = writeln!(out, "instances: {}", r.n);
    let _ = writeln!(out, "accuracy: {:.2}", 100.0 * r.accuracy);
    let _ = writeln!(out, "\nconfusion (rows = truth, columns = prediction)");
    let mut rows = vec![std::iter::once(String::new())
        .chain(r.classes.iter().cloned())
        .collect::<Vec<_>>()];
    for (c, line) in r.classes.iter().zip(&r.confusion) {
        rows.push(
            std::iter::once(c.clone())
                .chain(line.iter().map(usize::to_string))
                .collect(),
        );
    }
    out.push_str(&align(&rows));
    out
}

/// Long form: one row per class and rate, plus the averages.
pub fn evaluation_csv(name: &str, r: &EvaluationReport) -> anyhow::Result<String> {
    let mut rows = vec![vec![
        "classifier".to_string(),
        "class".to_string(),
        "support".to_string(),
        "tp_rate".to_string(),
        "fp_rate".to_string(),
    ]];
    for (i, c) in r.classes.iter().enumerate() {
        rows.push(vec![
            name.to_string(),
            c.clone(),
            r.support[i].to_string(),
            pct(r.tpr[i]),
            pct(r.fpr[i]),
        ]);
    }
    rows.push(vec![
        name.to_string(),
        "Average".to_string(),
        r.n.to_string(),
        pct(Some(r.weighted_tpr)),
        pct(Some(r.weighted_fpr)),
    ]);
    to_csv(&rows)
}
