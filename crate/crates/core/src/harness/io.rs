//! CSV emission and parsing of run records.
//!
//! A run's samples go to `<run_id>.csv`; its fingerprint, output index and final iterate
//! go to the sidecar `<run_id>.meta` so the record can be restored in full.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use crate::error::{NesttError, Result};
use crate::metrics::MetricSample;
use crate::record::RunRecord;

pub const CSV_HEADER: [&str; 11] = [
    "run_id",
    "algorithm",
    "sampling",
    "seed",
    "iter",
    "passes",
    "grad_evals",
    "gap",
    "potential",
    "consensus_violation",
    "wallclock_ns",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:e}"))
}

fn row(record: &RunRecord, s: &MetricSample) -> [String; 11] {
    [
        record.run_id.clone(),
        record.algorithm.clone(),
        record.sampling.clone(),
        record.seed.to_string(),
        s.iter.to_string(),
        format!("{:e}", s.passes),
        s.grad_evals.to_string(),
        format!("{:e}", s.gap),
        opt(s.potential),
        opt(s.consensus_violation),
        s.wallclock_ns.to_string(),
    ]
}

/// Writes the header and every sample of the given records.
pub fn write_csv<W: Write>(records: &[RunRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in records {
        for s in &r.samples {
            out.write_record(row(r, s))?;
        }
    }
    out.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, line: usize) -> Result<T> {
    let raw = rec.get(idx).unwrap_or("");
    raw.parse().map_err(|_| NesttError::Parse {
        line,
        message: format!("bad `{}` value `{raw}`", CSV_HEADER[idx]),
    })
}

fn opt_field(rec: &csv::StringRecord, idx: usize, line: usize) -> Result<Option<f64>> {
    match rec.get(idx) {
        Some("") | None => Ok(None),
        Some(_) => field(rec, idx, line).map(Some),
    }
}

/// Parses records from CSV, grouping consecutive rows by `run_id`. Only the fields present
/// in the CSV are restored; `final_z` is empty and `fingerprint` blank.
pub fn read_csv<R: Read>(r: R) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_reader(r);
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(NesttError::Parse {
            line: 1,
            message: format!("unexpected header `{}`", header.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut records: Vec<RunRecord> = Vec::new();
    for (k, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let run_id = rec.get(0).unwrap_or("").to_string();
        let sample = MetricSample {
            iter: field(&rec, 4, line)?,
            passes: field(&rec, 5, line)?,
            grad_evals: field(&rec, 6, line)?,
            gap: field(&rec, 7, line)?,
            potential: opt_field(&rec, 8, line)?,
            consensus_violation: opt_field(&rec, 9, line)?,
            wallclock_ns: field(&rec, 10, line)?,
        };
        match records.last_mut() {
            Some(last) if last.run_id == run_id => last.samples.push(sample),
            _ => records.push(RunRecord {
                run_id,
                algorithm: rec.get(1).unwrap_or("").to_string(),
                sampling: rec.get(2).unwrap_or("").to_string(),
                seed: field(&rec, 3, line)?,
                fingerprint: String::new(),
                samples: vec![sample],
                final_z: DVector::zeros(0),
                output_index: None,
            }),
        }
    }
    Ok(records)
}

fn write_meta<W: Write>(record: &RunRecord, mut w: W) -> Result<()> {
    writeln!(w, "fingerprint={}", record.fingerprint)?;
    match record.output_index {
        Some(i) => writeln!(w, "output_index={i}")?,
        None => writeln!(w, "output_index=")?,
    }
    let z: Vec<String> = record.final_z.iter().map(|v| format!("{v:e}")).collect();
    writeln!(w, "final_z={}", z.join(" "))?;
    Ok(())
}

fn read_meta<R: BufRead>(r: R, record: &mut RunRecord) -> Result<()> {
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let bad = |message: String| NesttError::Parse { line: k + 1, message };
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        match key {
            "fingerprint" => record.fingerprint = value.to_string(),
            "output_index" if value.is_empty() => record.output_index = None,
            "output_index" => {
                record.output_index =
                    Some(value.parse().map_err(|_| bad(format!("bad output index `{value}`")))?)
            }
            "final_z" => {
                let z: Vec<f64> = value
                    .split_whitespace()
                    .map(|t| t.parse().map_err(|_| bad(format!("bad coordinate `{t}`"))))
                    .collect::<Result<_>>()?;
                record.final_z = DVector::from_vec(z);
            }
            other => return Err(bad(format!("unknown meta key `{other}`"))),
        }
    }
    Ok(())
}

/// Writes `<dir>/<run_id>.csv` and its `.meta` sidecar; returns the CSV path.
pub fn write_run(dir: &Path, record: &RunRecord) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(format!("{}.csv", record.run_id));
    write_csv(std::slice::from_ref(record), File::create(&csv_path)?)?;
    write_meta(record, File::create(csv_path.with_extension("meta"))?)?;
    Ok(csv_path)
}

/// Reads one run CSV plus its sidecar when present.
pub fn read_run(csv_path: &Path) -> Result<RunRecord> {
    let mut records = read_csv(File::open(csv_path)?)?;
    if records.len() != 1 {
        return Err(NesttError::Parse {
            line: 0,
            message: format!("{} holds {} runs, expected one", csv_path.display(), records.len()),
        });
    }
    let mut record = records.remove(0);
    let meta = csv_path.with_extension("meta");
    if meta.exists() {
        read_meta(BufReader::new(File::open(meta)?), &mut record)?;
    }
    Ok(record)
}

/// Reads every run CSV in `dir` (sorted by file name).
pub fn read_runs_dir(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_run(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn record(run_id: &str) -> RunRecord {
        RunRecord {
            run_id: run_id.into(),
            algorithm: "nestt_g".into(),
            sampling: "sqrt_lipschitz".into(),
            seed: 7,
            fingerprint: "abc123".into(),
            samples: vec![
                MetricSample {
                    iter: 0,
                    passes: 1.0,
                    grad_evals: 4,
                    gap: 0.125,
                    potential: Some(-3.5),
                    consensus_violation: Some(0.0),
                    wallclock_ns: 11,
                },
                MetricSample {
                    iter: 4,
                    passes: 2.0,
                    grad_evals: 8,
                    gap: 2.3e-21,
                    potential: None,
                    consensus_violation: None,
                    wallclock_ns: 99,
                },
            ],
            final_z: dvector![0.1, -1.0 / 3.0, 1e-300],
            output_index: Some(3),
        }
    }

    #[test]
    fn header_and_empty_fields() {
        let mut buf = Vec::new();
        write_csv(&[record("a")], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "run_id,algorithm,sampling,seed,iter,passes,grad_evals,gap,potential,consensus_violation,wallclock_ns"
        );
        assert!(lines.nth(1).unwrap().contains(",2.3e-21,,,99"));
    }

    #[test]
    fn run_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let original = record("nestt_g-s7");
        let path = write_run(dir.path(), &original).unwrap();
        assert_eq!(read_run(&path).unwrap(), original);

        let mut other = record("saga-s7");
        other.output_index = None;
        write_run(dir.path(), &other).unwrap();
        let all = read_runs_dir(dir.path()).unwrap();
        assert_eq!(all, vec![original, other]);
    }

    #[test]
    fn rejects_wrong_header() {
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
        let bad = "run_id,algorithm,sampling,seed,iter,passes,grad_evals,gap,potential,consensus_violation,wallclock_ns\nx,y,z,1,oops,1,1,1,,,1\n";
        assert!(matches!(read_csv(bad.as_bytes()), Err(NesttError::Parse { line: 2, .. })));
    }
}
