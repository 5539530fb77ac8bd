use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;

use super::{check_psu_nesting, BirthRecord, Division};
use crate::error::{Error, Result};

/// Exact, ordered CSV header.
pub const CSV_HEADER: [&str; 18] = [
    "survey_year",
    "division",
    "urban",
    "wealth_quintile",
    "wealth_score",
    "maternal_age_at_birth",
    "maternal_education",
    "parity",
    "birth_order",
    "preceding_interval_months",
    "anc_visits",
    "facility_delivery",
    "skilled_attendant",
    "perceived_birth_size",
    "died_under5",
    "psu_id",
    "stratum_id",
    "sampling_weight",
];

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub records: Vec<BirthRecord>,
    /// Rows dropped in lenient mode, with the reason.
    pub dropped: Vec<(usize, String)>,
    /// Rows whose outcome cell was empty; these are never analysable.
    pub missing_outcome: usize,
}

pub fn load_records(path: impl AsRef<Path>, strict: bool) -> Result<LoadReport> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_records(file, strict)
}

pub fn read_records<R: Read>(reader: R, strict: bool) -> Result<LoadReport> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    check_header(rdr.headers()?)?;

    let mut report = LoadReport::default();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = match row {
            Ok(r) => r,
            Err(e) if strict => return Err(e.into()),
            Err(e) => {
                report.dropped.push((row_no, e.to_string()));
                continue;
            }
        };
        match parse_row(&row) {
            Ok(None) => report.missing_outcome += 1,
            Ok(Some(rec)) => match rec.validate() {
                Ok(()) => report.records.push(rec),
                Err(msg) if strict => return Err(Error::Row { row: row_no, message: msg }),
                Err(msg) => report.dropped.push((row_no, msg)),
            },
            Err(msg) if strict => return Err(Error::Row { row: row_no, message: msg }),
            Err(msg) => report.dropped.push((row_no, msg)),
        }
    }
    if !report.dropped.is_empty() {
        warn!("dropped {} invalid rows", report.dropped.len());
    }
    check_psu_nesting(&report.records)?;
    Ok(report)
}

fn check_header(header: &csv::StringRecord) -> Result<()> {
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    for (i, c) in cols.iter().enumerate() {
        if cols[..i].contains(c) {
            return Err(Error::Header(format!("duplicate column `{c}`")));
        }
    }
    if cols != CSV_HEADER {
        return Err(Error::Header(format!(
            "expected `{}`, found `{}`",
            CSV_HEADER.join(","),
            cols.join(",")
        )));
    }
    Ok(())
}

fn cell(row: &csv::StringRecord, idx: usize) -> std::result::Result<&str, String> {
    row.get(idx)
        .map(str::trim)
        .ok_or_else(|| format!("missing cell for `{}`", CSV_HEADER[idx]))
}

fn req<T: std::str::FromStr>(row: &csv::StringRecord, idx: usize) -> std::result::Result<T, String> {
    let s = cell(row, idx)?;
    s.parse()
        .map_err(|_| format!("cannot parse `{s}` as `{}`", CSV_HEADER[idx]))
}

fn opt<T: std::str::FromStr>(
    row: &csv::StringRecord,
    idx: usize,
) -> std::result::Result<Option<T>, String> {
    let s = cell(row, idx)?;
    if s.is_empty() {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| format!("cannot parse `{s}` as `{}`", CSV_HEADER[idx]))
}

fn parse_bool(s: &str, idx: usize) -> std::result::Result<bool, String> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(format!("`{}` must be 0 or 1, found `{s}`", CSV_HEADER[idx])),
    }
}

fn req_bool(row: &csv::StringRecord, idx: usize) -> std::result::Result<bool, String> {
    parse_bool(cell(row, idx)?, idx)
}

fn opt_bool(row: &csv::StringRecord, idx: usize) -> std::result::Result<Option<bool>, String> {
    let s = cell(row, idx)?;
    if s.is_empty() {
        Ok(None)
    } else {
        parse_bool(s, idx).map(Some)
    }
}

/// `Ok(None)` means the outcome is missing.
fn parse_row(row: &csv::StringRecord) -> std::result::Result<Option<BirthRecord>, String> {
    if row.len() != CSV_HEADER.len() {
        return Err(format!("expected {} cells, found {}", CSV_HEADER.len(), row.len()));
    }
    let died = match cell(row, 14)? {
        "" => return Ok(None),
        s => parse_bool(s, 14)?,
    };
    Ok(Some(BirthRecord {
        survey_year: req(row, 0)?,
        division: cell(row, 1)?.parse::<Division>()?,
        urban: req_bool(row, 2)?,
        wealth_quintile: req(row, 3)?,
        wealth_score: req(row, 4)?,
        maternal_age_at_birth: req(row, 5)?,
        maternal_education: req(row, 6)?,
        parity: req(row, 7)?,
        birth_order: req(row, 8)?,
        preceding_interval_months: opt(row, 9)?,
        anc_visits: opt(row, 10)?,
        facility_delivery: opt_bool(row, 11)?,
        skilled_attendant: opt_bool(row, 12)?,
        perceived_birth_size: opt(row, 13)?,
        died_under5: died,
        psu_id: req(row, 15)?,
        stratum_id: req(row, 16)?,
        sampling_weight: req(row, 17)?,
    }))
}

fn b(v: bool) -> &'static str {
    if v {
        "1"
    } else {
        "0"
    }
}

fn o<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Serializes records with the documented header, LF line endings.
pub fn write_records<W: Write>(mut out: W, records: &[BirthRecord]) -> std::io::Result<()> {
    writeln!(out, "{}", CSV_HEADER.join(","))?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.survey_year,
            r.division,
            b(r.urban),
            r.wealth_quintile,
            r.wealth_score,
            r.maternal_age_at_birth,
            r.maternal_education,
            r.parity,
            r.birth_order,
            o(r.preceding_interval_months),
            o(r.anc_visits),
            o(r.facility_delivery.map(b)),
            o(r.skilled_attendant.map(b)),
            o(r.perceived_birth_size),
            b(r.died_under5),
            r.psu_id,
            r.stratum_id,
            r.sampling_weight,
        )?;
    }
    Ok(())
}
