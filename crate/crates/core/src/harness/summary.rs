//! Per-method summary tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use crate::error::{NesttError, Result};
use crate::record::RunRecord;

pub const GAP_THRESHOLDS: [f64; 3] = [1e-2, 1e-4, 1e-6];

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub sampling: String,
    pub runs: usize,
    pub mean_final_gap: f64,
    pub median_final_gap: f64,
    /// Median over runs of the evaluations needed to reach each of [`GAP_THRESHOLDS`];
    /// `None` unless every run reached it.
    pub evals_to_threshold: [Option<f64>; 3],
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m == 0 {
        f64::NAN
    } else if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// One row per (algorithm, sampling), in order of first appearance.
pub fn summarize(records: &[RunRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(NesttError::InvalidArgument("no records to summarize".into()));
    }
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.algorithm.clone(), r.sampling.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let runs = &groups[&key];
            let gaps: Vec<f64> = runs.iter().map(|r| r.final_gap()).collect();
            let evals_to_threshold = GAP_THRESHOLDS.map(|t| {
                let hits: Option<Vec<f64>> =
                    runs.iter().map(|r| r.evals_to_gap(t).map(|e| e as f64)).collect();
                hits.map(|h| median(&h))
            });
            SummaryRow {
                algorithm: key.0,
                sampling: key.1,
                runs: runs.len(),
                mean_final_gap: gaps.iter().sum::<f64>() / gaps.len() as f64,
                median_final_gap: median(&gaps),
                evals_to_threshold,
            }
        })
        .collect())
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

pub const SUMMARY_HEADER: [&str; 8] = [
    "algorithm",
    "sampling",
    "runs",
    "mean_final_gap",
    "median_final_gap",
    "evals_to_1e-2",
    "evals_to_1e-4",
    "evals_to_1e-6",
];

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SUMMARY_HEADER)?;
    for r in rows {
        out.write_record([
            r.algorithm.clone(),
            r.sampling.clone(),
            r.runs.to_string(),
            format!("{:e}", r.mean_final_gap),
            format!("{:e}", r.median_final_gap),
            cell(r.evals_to_threshold[0]),
            cell(r.evals_to_threshold[1]),
            cell(r.evals_to_threshold[2]),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Fixed-width text rendering.
pub fn render_summary(rows: &[SummaryRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<24} {:<16} {:>4} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "algorithm", "sampling", "runs", "mean_gap", "median_gap", "evals@1e-2", "evals@1e-4", "evals@1e-6"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<24} {:<16} {:>4} {:>12.3e} {:>12.3e} {:>12} {:>12} {:>12}",
            r.algorithm,
            r.sampling,
            r.runs,
            r.mean_final_gap,
            r.median_final_gap,
            cell(r.evals_to_threshold[0]),
            cell(r.evals_to_threshold[1]),
            cell(r.evals_to_threshold[2]),
        );
    }
    s
}
