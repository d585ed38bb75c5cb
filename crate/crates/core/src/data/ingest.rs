use std::collections::HashSet;
use std::fs::File;
use std::path::Path;

use chrono::NaiveDate;

use super::record::{BasinRecord, ForcingBlock};
use super::units::{cfs_to_mm_per_day, MISSING_SENTINEL};
use super::{DataError, Result};

/// A parsed forcing file: consecutive daily rows from `start`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForcingTable {
    pub start: NaiveDate,
    pub variables: Vec<String>,
    /// Row-major `[n_days, n_vars]`.
    pub values: Vec<f64>,
}

/// A parsed streamflow file in its raw unit (cfs), sentinel kept as is.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamflowTable {
    pub start: NaiveDate,
    pub discharge_cfs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeRow {
    pub basin_id: String,
    pub area_km2: f64,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributeTable {
    /// Static attribute names, excluding `basin_id` and `area_km2`.
    pub names: Vec<String>,
    pub rows: Vec<AttributeRow>,
}

impl AttributeTable {
    pub fn get(&self, basin_id: &str) -> Option<&AttributeRow> {
        self.rows.iter().find(|r| r.basin_id == basin_id)
    }
}

fn open(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).flexible(true).from_reader(file))
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> DataError {
    DataError::Parse { file: path.display().to_string(), line, message: message.into() }
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn read_rows(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut rows = Vec::new();
    for rec in open(path)?.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        rows.push(rec);
    }
    Ok(rows)
}

fn parse_date(path: &Path, line: u64, s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| parse_err(path, line, format!("bad date {s:?}: {e}")))
}

fn parse_value(path: &Path, line: u64, s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|_| parse_err(path, line, format!("not a number: {s:?}")))
}

/// Checks that `date` directly follows `prev`.
fn check_next_day(path: &Path, line: u64, prev: NaiveDate, date: NaiveDate) -> Result<()> {
    match (date - prev).num_days() {
        1 => Ok(()),
        n if n <= 0 => Err(parse_err(path, line, format!("date {date} does not follow {prev}: dates must increase"))),
        n => Err(parse_err(path, line, format!("gap of {} missing day(s) between {prev} and {date}", n - 1))),
    }
}

/// Reads `date,var1,...,varK` with a header row.
pub fn parse_forcing(path: &Path) -> Result<ForcingTable> {
    let rows = read_rows(path)?;
    let (header, body) = rows.split_first().ok_or_else(|| parse_err(path, 1, "empty forcing file"))?;
    if header.len() < 2 || !header[0].eq_ignore_ascii_case("date") {
        return Err(parse_err(path, line_of(header), "header must be `date,<variable>,...`"));
    }
    let variables: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let n = variables.len();
    if body.is_empty() {
        return Err(parse_err(path, line_of(header), "no data rows"));
    }
    let mut values = Vec::with_capacity(body.len() * n);
    let mut start = None;
    let mut prev: Option<NaiveDate> = None;
    for rec in body {
        let line = line_of(rec);
        if rec.len() != n + 1 {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", n + 1, rec.len())));
        }
        let date = parse_date(path, line, &rec[0])?;
        match prev {
            Some(p) => check_next_day(path, line, p, date)?,
            None => start = Some(date),
        }
        prev = Some(date);
        for field in rec.iter().skip(1) {
            values.push(parse_value(path, line, field)?);
        }
    }
    Ok(ForcingTable { start: start.expect("non-empty body"), variables, values })
}

/// Reads `date,discharge_cfs` rows; a leading header row is optional.
pub fn parse_streamflow(path: &Path) -> Result<StreamflowTable> {
    let rows = read_rows(path)?;
    let body = match rows.first() {
        Some(first) if first[0].eq_ignore_ascii_case("date") => &rows[1..],
        _ => &rows[..],
    };
    if body.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    let mut discharge_cfs = Vec::with_capacity(body.len());
    let mut start = None;
    let mut prev: Option<NaiveDate> = None;
    for rec in body {
        let line = line_of(rec);
        if rec.len() != 2 {
            return Err(parse_err(path, line, format!("expected 2 fields, found {}", rec.len())));
        }
        let date = parse_date(path, line, &rec[0])?;
        match prev {
            Some(p) => check_next_day(path, line, p, date)?,
            None => start = Some(date),
        }
        prev = Some(date);
        let q = parse_value(path, line, &rec[1])?;
        if q < 0.0 && q != MISSING_SENTINEL {
            return Err(parse_err(path, line, format!("negative discharge {q}")));
        }
        discharge_cfs.push(q);
    }
    Ok(StreamflowTable { start: start.expect("non-empty body"), discharge_cfs })
}

/// Reads `basin_id,area_km2,attr1,...` with a header row.
pub fn parse_attributes(path: &Path) -> Result<AttributeTable> {
    let rows = read_rows(path)?;
    let (header, body) = rows.split_first().ok_or_else(|| parse_err(path, 1, "empty attribute file"))?;
    if header.len() < 2 || &header[0] != "basin_id" || &header[1] != "area_km2" {
        return Err(parse_err(path, line_of(header), "header must start with `basin_id,area_km2`"));
    }
    let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(body.len());
    for rec in body {
        let line = line_of(rec);
        if rec.len() != header.len() {
            return Err(parse_err(path, line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        let basin_id = rec[0].to_string();
        if !seen.insert(basin_id.clone()) {
            return Err(parse_err(path, line, format!("duplicate basin {basin_id}")));
        }
        let area_km2 = parse_value(path, line, &rec[1])?;
        if !(area_km2 > 0.0) {
            return Err(parse_err(path, line, format!("basin {basin_id}: area must be > 0, got {area_km2}")));
        }
        let values = rec.iter().skip(2).map(|s| parse_value(path, line, s)).collect::<Result<_>>()?;
        out.push(AttributeRow { basin_id, area_km2, values });
    }
    Ok(AttributeTable { names, rows: out })
}

/// One basin id per line; blank lines and `#` comments are skipped.
pub fn parse_manifest(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let mut seen = HashSet::new();
    let mut ids = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let id = raw.trim();
        if id.is_empty() || id.starts_with('#') {
            continue;
        }
        if !seen.insert(id.to_string()) {
            return Err(parse_err(path, i as u64 + 1, format!("duplicate basin {id}")));
        }
        ids.push(id.to_string());
    }
    if ids.is_empty() {
        return Err(DataError::Ingest { file: path.display().to_string(), message: "no basins listed".into() });
    }
    Ok(ids)
}

/// Builds a record from one streamflow file and one forcing file per
/// product, trimmed to the dates shared by all of them. Discharge is
/// converted to mm/day and the missing sentinel becomes `NaN`.
pub fn ingest_basin(
    attributes: &AttributeRow,
    attribute_names: &[String],
    streamflow: &Path,
    forcings: &[(String, &Path)],
) -> Result<BasinRecord> {
    if attributes.values.len() != attribute_names.len() {
        return Err(DataError::Param(format!(
            "basin {}: {} attribute values for {} names",
            attributes.basin_id,
            attributes.values.len(),
            attribute_names.len()
        )));
    }
    let flow = parse_streamflow(streamflow)?;
    let discharge = flow
        .discharge_cfs
        .iter()
        .map(|&q| if q == MISSING_SENTINEL { Ok(f64::NAN) } else { cfs_to_mm_per_day(q, attributes.area_km2) })
        .collect::<Result<Vec<_>>>()?;
    let mut record = BasinRecord {
        basin_id: attributes.basin_id.clone(),
        area_km2: attributes.area_km2,
        attribute_names: attribute_names.to_vec(),
        attributes: attributes.values.clone(),
        start: flow.start,
        discharge,
        forcings: Vec::with_capacity(forcings.len()),
    };
    for (product, path) in forcings {
        let table = parse_forcing(path)?;
        let block = ForcingBlock { product: product.clone(), variables: table.variables, values: table.values };
        record.add_forcing(block, table.start).map_err(|e| DataError::Ingest {
            file: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    Ok(record)
}
