//! CSV and text formats.
//!
//! Series files have a header `timestamp,<ch1>,...,<chN>` and one row per
//! consecutive integer timestamp. An empty cell is a missing value. Floats
//! are written with the shortest representation that parses back to the
//! same `f64`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use gstpro_core::metrics::EvalReport;
use gstpro_core::series::{Mask, SeriesDataset};
use gstpro_core::train::TrainHistory;
use gstpro_core::Matrix;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Structural(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] gstpro_core::Error),
}

pub type Result<T> = std::result::Result<T, FormatError>;

fn parse_err(line: usize, message: impl Into<String>) -> FormatError {
    FormatError::Parse { line, message: message.into() }
}

/// Header cells and data rows (with 1-based line numbers). Blank lines are
/// skipped.
struct Table {
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table(reader: impl Read) -> Result<Table> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((i, line)) => {
                let line = line?;
                let line = line.trim_start_matches('\u{feff}').trim_end_matches('\r');
                if !line.trim().is_empty() {
                    break (i + 1, split(line));
                }
            }
            None => return Err(FormatError::Structural("empty file".into())),
        }
    };
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cells = split(line);
        if cells.len() != header.1.len() {
            return Err(parse_err(i + 1, format!("expected {} fields, found {}", header.1.len(), cells.len())));
        }
        rows.push((i + 1, cells));
    }
    Ok(Table { header: header.1, rows })
}

fn split(line: &str) -> Vec<String> {
    line.split(',').map(|c| c.trim().to_string()).collect()
}

fn parse_timestamps(table: &Table) -> Result<i64> {
    let mut start = 0;
    for (k, (line, cells)) in table.rows.iter().enumerate() {
        let t: i64 = cells[0].parse().map_err(|_| parse_err(*line, format!("bad timestamp {:?}", cells[0])))?;
        if k == 0 {
            start = t;
        } else if t != start + k as i64 {
            return Err(FormatError::Structural(format!(
                "line {line}: timestamp {t} does not follow {}",
                start + k as i64 - 1
            )));
        }
    }
    Ok(start)
}

fn parse_flag(cell: &str, line: usize) -> Result<bool> {
    match cell {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(parse_err(line, format!("expected 0 or 1, found {other:?}"))),
    }
}

pub fn read_series(reader: impl Read) -> Result<SeriesDataset> {
    let table = read_table(reader)?;
    let names: Vec<String> = table.header[1..].to_vec();
    if names.is_empty() {
        return Err(FormatError::Structural("series has no channels".into()));
    }
    if table.rows.is_empty() {
        return Err(FormatError::Structural("series has no rows".into()));
    }
    let start = parse_timestamps(&table)?;
    let (t, n) = (table.rows.len(), names.len());
    let mut values = Vec::with_capacity(t * n);
    let mut mask = Vec::with_capacity(t * n);
    for (line, cells) in &table.rows {
        for cell in &cells[1..] {
            if cell.is_empty() {
                values.push(0.0);
                mask.push(false);
            } else {
                let v: f64 = cell.parse().map_err(|_| parse_err(*line, format!("bad number {cell:?}")))?;
                if !v.is_finite() {
                    return Err(parse_err(*line, format!("non-finite value {cell:?}")));
                }
                values.push(v);
                mask.push(true);
            }
        }
    }
    Ok(SeriesDataset::new(Matrix::from_vec(t, n, values), Mask::from_vec(t, n, mask)?, None, names, start)?)
}

pub fn write_series(mut w: impl Write, ds: &SeriesDataset) -> Result<()> {
    let mut out = String::from("timestamp");
    for name in ds.channel_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for r in 0..ds.len() {
        write!(out, "{}", ds.timestamp(r)).unwrap();
        for c in 0..ds.n_channels() {
            out.push(',');
            if let Some(v) = ds.observed(r, c) {
                write!(out, "{v}").unwrap();
            }
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

/// Labels file `timestamp,label`. Returns the first timestamp and labels.
pub fn read_labels(reader: impl Read) -> Result<(i64, Vec<bool>)> {
    let table = read_table(reader)?;
    if table.header.len() != 2 {
        return Err(FormatError::Structural("labels file needs exactly two columns".into()));
    }
    if table.rows.is_empty() {
        return Err(FormatError::Structural("labels file has no rows".into()));
    }
    let start = parse_timestamps(&table)?;
    let labels = table.rows.iter().map(|(line, cells)| parse_flag(&cells[1], *line)).collect::<Result<_>>()?;
    Ok((start, labels))
}

pub fn write_labels(mut w: impl Write, start: i64, labels: &[bool]) -> Result<()> {
    let mut out = String::from("timestamp,label\n");
    for (k, &l) in labels.iter().enumerate() {
        writeln!(out, "{},{}", start + k as i64, l as u8).unwrap();
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

/// Mask file: same header and timestamps as the series, entries 0/1.
pub fn write_mask(mut w: impl Write, ds: &SeriesDataset) -> Result<()> {
    let mut out = String::from("timestamp");
    for name in ds.channel_names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for r in 0..ds.len() {
        write!(out, "{}", ds.timestamp(r)).unwrap();
        for &m in ds.mask().row(r) {
            write!(out, ",{}", m as u8).unwrap();
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

/// Returns `(start, mask)`.
pub fn read_mask(reader: impl Read) -> Result<(i64, Mask)> {
    let table = read_table(reader)?;
    let n = table.header.len() - 1;
    if n == 0 {
        return Err(FormatError::Structural("mask has no channels".into()));
    }
    let start = parse_timestamps(&table)?;
    let mut data = Vec::with_capacity(table.rows.len() * n);
    for (line, cells) in &table.rows {
        for cell in &cells[1..] {
            data.push(parse_flag(cell, *line)?);
        }
    }
    Ok((start, Mask::from_vec(table.rows.len(), n, data)?))
}

pub fn write_scores(mut w: impl Write, start: i64, scores: &[f64]) -> Result<()> {
    let mut out = String::from("timestamp,score\n");
    for (k, s) in scores.iter().enumerate() {
        writeln!(out, "{},{s}", start + k as i64).unwrap();
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

/// Returns `(start, scores)`.
pub fn read_scores(reader: impl Read) -> Result<(i64, Vec<f64>)> {
    let table = read_table(reader)?;
    if table.header.len() != 2 {
        return Err(FormatError::Structural("scores file needs exactly two columns".into()));
    }
    if table.rows.is_empty() {
        return Err(FormatError::Structural("scores file has no rows".into()));
    }
    let start = parse_timestamps(&table)?;
    let scores = table
        .rows
        .iter()
        .map(|(line, cells)| cells[1].parse::<f64>().map_err(|_| parse_err(*line, format!("bad score {:?}", cells[1]))))
        .collect::<Result<_>>()?;
    Ok((start, scores))
}

/// Per-channel likelihoods, `timestamp,<ch1>,...`.
pub fn write_channel_scores(mut w: impl Write, start: i64, names: &[String], alphas: &Matrix) -> Result<()> {
    let mut out = String::from("timestamp");
    for name in names {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for r in 0..alphas.rows() {
        write!(out, "{}", start + r as i64).unwrap();
        for v in alphas.row(r) {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn write_history(mut w: impl Write, history: &TrainHistory) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_loss,stopped\n");
    for e in &history.epochs {
        writeln!(out, "{},{},{},{}", e.epoch, e.train_loss, e.val_loss, e.stopped as u8).unwrap();
    }
    w.write_all(out.as_bytes())?;
    Ok(())
}

pub fn format_report(r: &EvalReport) -> String {
    format!("roc_auc={}\nprc_auc={}\npositives={}\nnegatives={}\n", r.roc_auc, r.prc_auc, r.positives, r.negatives)
}

/// Parses `key=value` lines of a report.
pub fn parse_report(text: &str) -> Result<EvalReport> {
    let (mut roc, mut prc, mut pos, mut neg) = (None, None, None, None);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| parse_err(i + 1, "expected key=value"))?;
        let bad = || parse_err(i + 1, format!("bad value for {k}"));
        match k {
            "roc_auc" => roc = Some(v.parse().map_err(|_| bad())?),
            "prc_auc" => prc = Some(v.parse().map_err(|_| bad())?),
            "positives" => pos = Some(v.parse().map_err(|_| bad())?),
            "negatives" => neg = Some(v.parse().map_err(|_| bad())?),
            other => return Err(parse_err(i + 1, format!("unknown key {other:?}"))),
        }
    }
    match (roc, prc, pos, neg) {
        (Some(roc_auc), Some(prc_auc), Some(positives), Some(negatives)) => {
            Ok(EvalReport { roc_auc, prc_auc, positives, negatives })
        }
        _ => Err(FormatError::Structural("report is missing a key".into())),
    }
}

pub fn load_csv(path: &Path) -> Result<SeriesDataset> {
    read_series(fs::File::open(path)?)
}

pub fn save_csv(path: &Path, ds: &SeriesDataset) -> Result<()> {
    let mut buf = Vec::new();
    write_series(&mut buf, ds)?;
    fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_cell_is_missing() {
        let ds = read_series("timestamp,s1,s2\n0,1,2\n1,,3\n2,4,5\n".as_bytes()).unwrap();
        assert_eq!(ds.len(), 3);
        assert!(!ds.mask().get(1, 0));
        assert_eq!(ds.mask().count_observed(), 5);
        assert_eq!(ds.channel_names(), ["s1", "s2"]);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        match read_series("timestamp,a\n0,1\n1,x\n".as_bytes()) {
            Err(FormatError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match read_series("timestamp,a,b\n0,1,2\n1,2\n".as_bytes()) {
            Err(FormatError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(read_series("timestamp,a\n0,1\n2,1\n".as_bytes()), Err(FormatError::Structural(_))));
        assert!(matches!(read_series("timestamp\n0\n".as_bytes()), Err(FormatError::Structural(_))));
        assert!(matches!(read_series("".as_bytes()), Err(FormatError::Structural(_))));
    }

    #[test]
    fn report_round_trip() {
        let r = EvalReport { roc_auc: 0.75, prc_auc: 0.1 + 0.2, positives: 3, negatives: 9 };
        assert_eq!(parse_report(&format_report(&r)).unwrap(), r);
    }

    #[test]
    fn labels_round_trip() {
        let mut buf = Vec::new();
        write_labels(&mut buf, 10, &[true, false, true]).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "timestamp,label\n10,1\n11,0\n12,1\n");
        assert_eq!(read_labels(buf.as_slice()).unwrap(), (10, vec![true, false, true]));
        assert!(read_labels("timestamp,label\n0,2\n".as_bytes()).is_err());
    }
}
