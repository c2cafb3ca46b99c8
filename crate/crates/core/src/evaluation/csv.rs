//! Report tables as CSV.
//!
//! Columns: `snr_db, rate, active_levels, level, bits_tested, bit_errors,
//! ber, frames_tested, frame_errors, fer, low_confidence`. Each report
//! contributes one row per level followed by an `aggregate` row. Counts are
//! integers; reals use the shortest representation that reads back to the
//! same `f64`. Rows without counts (analytic curves) leave them empty.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{aggregate, EvalReport, LevelReport, LOW_CONFIDENCE_ERRORS};
use crate::mlae::LevelSet;
use crate::{Error, Result};

pub const HEADER: [&str; 11] = [
    "snr_db",
    "rate",
    "active_levels",
    "level",
    "bits_tested",
    "bit_errors",
    "ber",
    "frames_tested",
    "frame_errors",
    "fer",
    "low_confidence",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowLevel {
    Level(usize),
    Aggregate,
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub snr_db: f64,
    pub rate: f64,
    pub active_levels: String,
    pub level: RowLevel,
    pub bits_tested: Option<u64>,
    pub bit_errors: Option<u64>,
    pub ber: f64,
    pub frames_tested: Option<u64>,
    pub frame_errors: Option<u64>,
    pub fer: Option<f64>,
    pub low_confidence: bool,
}

impl Row {
    /// A curve point with no counts behind it.
    pub fn analytic(snr_db: f64, rate: f64, ber: f64) -> Self {
        Self {
            snr_db,
            rate,
            active_levels: "1".into(),
            level: RowLevel::Aggregate,
            bits_tested: None,
            bit_errors: None,
            ber,
            frames_tested: None,
            frame_errors: None,
            fer: None,
            low_confidence: false,
        }
    }

    fn fields(&self) -> Vec<String> {
        let opt = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
        vec![
            fmt_real(self.snr_db),
            fmt_real(self.rate),
            self.active_levels.clone(),
            match self.level {
                RowLevel::Level(l) => l.to_string(),
                RowLevel::Aggregate => "aggregate".into(),
            },
            opt(self.bits_tested),
            opt(self.bit_errors),
            fmt_real(self.ber),
            opt(self.frames_tested),
            opt(self.frame_errors),
            self.fer.map(fmt_real).unwrap_or_default(),
            self.low_confidence.to_string(),
        ]
    }
}

fn fmt_real(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v}")
    }
}

fn parse_real(s: &str, line: usize, column: &str) -> Result<f64> {
    match s {
        "inf" => Ok(f64::INFINITY),
        _ => s
            .parse()
            .map_err(|_| Error::Csv(format!("line {line}: {column} {s:?} is not a number"))),
    }
}

fn parse_count(s: &str, line: usize, column: &str) -> Result<Option<u64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Csv(format!("line {line}: {column} {s:?} is not a count")))
}

fn level_row(r: &LevelReport) -> Row {
    Row {
        snr_db: r.snr_db,
        rate: r.rate,
        active_levels: r.active_levels.to_string(),
        level: RowLevel::Level(r.level),
        bits_tested: Some(r.bits_tested),
        bit_errors: Some(r.bit_errors),
        ber: r.ber(),
        frames_tested: Some(r.frames_tested),
        frame_errors: Some(r.frame_errors),
        fer: Some(r.fer()),
        low_confidence: r.low_confidence(),
    }
}

/// Rows for a table of reports: each level, then the aggregate.
pub fn report_rows(reports: &[EvalReport]) -> Vec<Row> {
    let mut rows = Vec::new();
    for rep in reports {
        rows.extend(rep.levels.iter().map(level_row));
        rows.push(Row {
            snr_db: rep.snr_db,
            rate: rep.rate,
            active_levels: rep.active_levels.to_string(),
            level: RowLevel::Aggregate,
            bits_tested: Some(rep.bits_tested),
            bit_errors: Some(rep.bit_errors),
            ber: rep.aggregate_ber,
            frames_tested: Some(rep.frames_tested),
            frame_errors: Some(rep.frame_errors),
            fer: Some(rep.aggregate_fer()),
            low_confidence: rep.low_confidence(),
        });
    }
    rows
}

pub fn write_rows<W: Write>(rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(HEADER).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.fields()).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_string(reports: &[EvalReport]) -> Result<String> {
    let mut buf = Vec::new();
    write_rows(&report_rows(reports), &mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

/// Writes the table to `path` (via a temporary file and rename).
pub fn write_csv(reports: &[EvalReport], path: &Path) -> Result<()> {
    write_rows_to(&report_rows(reports), path)
}

pub fn write_rows_to(rows: &[Row], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_rows(rows, &mut buf)?;
    Ok(crate::write_atomic(path, &buf)?)
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<Row>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers().map_err(|e| Error::Csv(e.to_string()))?;
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Csv(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let f = |c: usize| rec.get(c).unwrap_or("");
        rows.push(Row {
            snr_db: parse_real(f(0), line, "snr_db")?,
            rate: parse_real(f(1), line, "rate")?,
            active_levels: f(2).to_string(),
            level: match f(3) {
                "aggregate" => RowLevel::Aggregate,
                s => RowLevel::Level(
                    s.parse()
                        .map_err(|_| Error::Csv(format!("line {line}: level {s:?}")))?,
                ),
            },
            bits_tested: parse_count(f(4), line, "bits_tested")?,
            bit_errors: parse_count(f(5), line, "bit_errors")?,
            ber: parse_real(f(6), line, "ber")?,
            frames_tested: parse_count(f(7), line, "frames_tested")?,
            frame_errors: parse_count(f(8), line, "frame_errors")?,
            fer: if f(9).is_empty() { None } else { Some(parse_real(f(9), line, "fer")?) },
            low_confidence: match f(10) {
                "true" => true,
                "false" => false,
                s => return Err(Error::Csv(format!("line {line}: low_confidence {s:?}"))),
            },
        });
    }
    Ok(rows)
}

/// Rebuilds reports from level rows; each `aggregate` row closes a report
/// and must agree with the aggregate recomputed from its level rows.
pub fn read_reports<R: Read>(input: R) -> Result<Vec<EvalReport>> {
    let mut reports = Vec::new();
    let mut pending: Vec<LevelReport> = Vec::new();
    for row in read_rows(input)? {
        let need = |v: Option<u64>, what: &str| {
            v.ok_or_else(|| Error::Csv(format!("row at {} dB has no {what}", row.snr_db)))
        };
        match row.level {
            RowLevel::Level(level) => {
                let active: LevelSet = row
                    .active_levels
                    .parse()
                    .map_err(|_| Error::Csv(format!("active_levels {:?}", row.active_levels)))?;
                pending.push(LevelReport {
                    level,
                    snr_db: row.snr_db,
                    rate: row.rate,
                    active_levels: active,
                    bits_tested: need(row.bits_tested, "bits_tested")?,
                    bit_errors: need(row.bit_errors, "bit_errors")?,
                    frames_tested: need(row.frames_tested, "frames_tested")?,
                    frame_errors: need(row.frame_errors, "frame_errors")?,
                });
            }
            RowLevel::Aggregate => {
                let rep = aggregate(&std::mem::take(&mut pending))?;
                let consistent = Some(rep.bits_tested) == row.bits_tested
                    && Some(rep.bit_errors) == row.bit_errors
                    && Some(rep.frames_tested) == row.frames_tested
                    && Some(rep.frame_errors) == row.frame_errors
                    && rep.aggregate_ber.to_bits() == row.ber.to_bits()
                    && row.low_confidence == (rep.bit_errors < LOW_CONFIDENCE_ERRORS);
                if !consistent {
                    return Err(Error::Csv(format!(
                        "aggregate row at {} dB, levels {} disagrees with its level rows",
                        row.snr_db, row.active_levels
                    )));
                }
                reports.push(rep);
            }
        }
    }
    if !pending.is_empty() {
        return Err(Error::Csv("level rows without a closing aggregate row".into()));
    }
    Ok(reports)
}

pub fn read_csv(path: &Path) -> Result<Vec<EvalReport>> {
    read_reports(fs::File::open(path)?)
}

pub fn read_rows_from(path: &Path) -> Result<Vec<Row>> {
    read_rows(fs::File::open(path)?)
}
