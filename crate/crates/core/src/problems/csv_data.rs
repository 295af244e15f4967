use std::path::Path;

use crate::error::IngestError;

use super::Dataset;

/// Read a comma-separated file whose header names `p` feature columns then a
/// label column. Every bad row is reported with its 1-based line number.
pub fn load_csv_dataset(path: &Path, classes: Option<usize>) -> Result<Dataset, IngestError> {
    let io = |source: std::io::Error| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => io(source),
            other => io(std::io::Error::other(format!("{other:?}"))),
        })?;
    let malformed = |problems: Vec<String>| IngestError::Malformed {
        path: path.to_path_buf(),
        problems,
    };
    let header = reader
        .headers()
        .map_err(|e| malformed(vec![format!("line 1: {e}")]))?
        .clone();
    if header.len() < 2 {
        return Err(malformed(vec![
            "line 1: need at least one feature column and a label column".into(),
        ]));
    }
    let p = header.len() - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut problems = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        if record.len() != p + 1 {
            problems.push(format!(
                "line {line}: expected {} fields, found {}",
                p + 1,
                record.len()
            ));
            continue;
        }
        let mut row = Vec::with_capacity(p);
        let mut ok = true;
        for (col, field) in record.iter().take(p).enumerate() {
            match field.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    problems.push(format!(
                        "line {line}: column '{}' is not a finite number: {field:?}",
                        &header[col]
                    ));
                    ok = false;
                }
            }
        }
        let raw = record[p].trim();
        let label = match raw.parse::<usize>() {
            Ok(l) if classes.is_none_or(|c| l < c) => Some(l),
            Ok(l) => {
                problems.push(format!(
                    "line {line}: label {l} outside [0, {})",
                    classes.unwrap_or(0)
                ));
                None
            }
            Err(_) => {
                problems.push(format!(
                    "line {line}: label {raw:?} is not a non-negative integer"
                ));
                None
            }
        };
        if let (true, Some(l)) = (ok, label) {
            features.extend(row);
            labels.push(l);
        }
    }
    if !problems.is_empty() {
        return Err(malformed(problems));
    }
    Ok(Dataset::new(p, features, labels))
}

/// Write `data` in the format read by [`load_csv_dataset`]; reals use a
/// round-trip-exact representation.
pub fn write_csv_dataset(path: &Path, data: &Dataset) -> Result<(), IngestError> {
    let io = |source: std::io::Error| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| io(std::io::Error::other(e)))?;
    let mut header: Vec<String> = (0..data.p).map(|k| format!("f{k}")).collect();
    header.push("label".into());
    w.write_record(&header)
        .map_err(|e| io(std::io::Error::other(e)))?;
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.row(i).iter().map(|v| format!("{v:?}")).collect();
        rec.push(data.labels[i].to_string());
        w.write_record(&rec)
            .map_err(|e| io(std::io::Error::other(e)))?;
    }
    w.flush().map_err(io)
}
