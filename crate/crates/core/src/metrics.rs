//! Metrics CSV emission and reload, plus multi-seed summaries.

use std::io::{self, Write};
use std::path::Path;

use crate::error::IngestError;
use crate::ledger::RoundRecord;

pub const HEADER: &str =
    "round,train_loss,test_loss,grad_norm,downlink_floats,uplink_floats,client_state_floats,cum_bits,phi1_margin,phi2_margin";

/// 17 significant digits, enough to reproduce every `f64` exactly.
fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_metrics<W: Write>(records: &[RoundRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.round,
            real(r.train_loss),
            real(r.test_loss),
            real(r.grad_norm),
            r.downlink_floats,
            r.uplink_floats,
            r.client_state_floats,
            r.cum_bits,
            real(r.phi1_margin),
            real(r.phi2_margin),
        )?;
    }
    Ok(())
}

pub fn emit_metrics(records: &[RoundRecord], path: &Path) -> io::Result<()> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    write_metrics(records, &mut w)?;
    w.flush()
}

pub fn load_metrics(path: &Path) -> Result<Vec<RoundRecord>, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let malformed = |problems: Vec<String>| IngestError::Malformed {
        path: path.to_path_buf(),
        problems,
    };
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(malformed(vec![format!(
            "line 1: expected header {HEADER:?}"
        )]));
    }
    let mut records = Vec::new();
    let mut problems = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            problems.push(format!(
                "line {}: expected 10 fields, found {}",
                i + 2,
                f.len()
            ));
            continue;
        }
        let int = |k: usize| {
            f[k].parse::<u64>()
                .map_err(|_| format!("line {}: field {} not an integer", i + 2, k + 1))
        };
        let flt = |k: usize| {
            f[k].parse::<f64>()
                .map_err(|_| format!("line {}: field {} not a number", i + 2, k + 1))
        };
        let rec = (|| {
            Ok::<_, String>(RoundRecord {
                round: int(0)?,
                train_loss: flt(1)?,
                test_loss: flt(2)?,
                grad_norm: flt(3)?,
                downlink_floats: int(4)?,
                uplink_floats: int(5)?,
                client_state_floats: int(6)?,
                cum_bits: int(7)?,
                phi1_margin: flt(8)?,
                phi2_margin: flt(9)?,
            })
        })();
        match rec {
            Ok(r) => records.push(r),
            Err(p) => problems.push(p),
        }
    }
    if problems.is_empty() {
        Ok(records)
    } else {
        Err(malformed(problems))
    }
}

/// Mean and normal-approximation 95% band of one column across seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub round: u64,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// `mean +- 1.96 * stderr` per round, with the sample standard deviation.
/// Runs are truncated to the shortest one.
pub fn ensemble_band(runs: &[Vec<RoundRecord>], column: impl Fn(&RoundRecord) -> f64) -> Vec<Band> {
    let len = runs.iter().map(Vec::len).min().unwrap_or(0);
    let n = runs.len() as f64;
    (0..len)
        .map(|t| {
            let xs: Vec<f64> = runs.iter().map(|r| column(&r[t])).collect();
            let mean = xs.iter().sum::<f64>() / n;
            let half = if runs.len() > 1 {
                let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
                1.96 * (var / n).sqrt()
            } else {
                0.0
            };
            Band {
                round: runs[0][t].round,
                mean,
                lo: mean - half,
                hi: mean + half,
            }
        })
        .collect()
}

/// Per-round mean and band for the loss and gradient columns.
pub fn write_report<W: Write>(runs: &[Vec<RoundRecord>], mut out: W) -> io::Result<()> {
    type Column = (&'static str, fn(&RoundRecord) -> f64);
    let cols: [Column; 3] = [
        ("train_loss", |r| r.train_loss),
        ("test_loss", |r| r.test_loss),
        ("grad_norm", |r| r.grad_norm),
    ];
    let bands: Vec<Vec<Band>> = cols.iter().map(|(_, f)| ensemble_band(runs, f)).collect();
    write!(out, "round,seeds")?;
    for (name, _) in &cols {
        write!(out, ",{name}_mean,{name}_lo,{name}_hi")?;
    }
    writeln!(out)?;
    for t in 0..bands[0].len() {
        write!(out, "{},{}", bands[0][t].round, runs.len())?;
        for b in &bands {
            write!(
                out,
                ",{},{},{}",
                real(b[t].mean),
                real(b[t].lo),
                real(b[t].hi)
            )?;
        }
        writeln!(out)?;
    }
    Ok(())
}
