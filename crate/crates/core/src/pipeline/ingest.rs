//! CSV readers and writers for player logs, ground-truth sidecars and
//! engineered feature tables.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use super::generator::GroundTruth;
use super::{DayRow, PlayerLog};
use crate::error::{Error, Result};

const LOG_HEADER: [&str; 7] = [
    "player_id",
    "day_index",
    "playtime_hours",
    "level",
    "sessions",
    "actions",
    "purchases",
];

const TRUTH_HEADER: [&str; 4] = [
    "player_id",
    "true_converter",
    "true_conversion_day",
    "true_churn_day",
];

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::parse(line, format!("{kind:?}")),
    }
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers().map_err(csv_error)?;
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::parse(1, "missing header"));
    }
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::parse(
            1,
            format!("header must be `{}`", expected.join(",")),
        ));
    }
    Ok(())
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize, name: &str, line: u64) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse()
        .map_err(|_| Error::parse(line, format!("invalid {name} `{raw}`")))
}

fn optional_day(rec: &csv::StringRecord, i: usize, name: &str, line: u64) -> Result<Option<i64>> {
    match rec.get(i).unwrap_or("") {
        "" => Ok(None),
        _ => field(rec, i, name, line).map(Some),
    }
}

fn records<R: Read>(
    rdr: &mut csv::Reader<R>,
    width: usize,
) -> impl Iterator<Item = Result<(u64, csv::StringRecord)>> + '_ {
    rdr.records().map(move |r| {
        let rec = r.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width {
            return Err(Error::parse(
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        Ok((line, rec))
    })
}

/// Parse a player-log CSV. Players come back sorted by id.
pub fn read_logs<R: Read>(input: R) -> Result<Vec<PlayerLog>> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &LOG_HEADER)?;
    let mut by_player: BTreeMap<String, Vec<DayRow>> = BTreeMap::new();
    for item in records(&mut rdr, LOG_HEADER.len()) {
        let (line, rec) = item?;
        let id = &rec[0];
        if id.is_empty() {
            return Err(Error::parse(line, "empty player_id"));
        }
        let row = DayRow {
            day_index: field(&rec, 1, "day_index", line)?,
            playtime_hours: field(&rec, 2, "playtime_hours", line)?,
            level: field(&rec, 3, "level", line)?,
            sessions: field(&rec, 4, "sessions", line)?,
            actions: field(&rec, 5, "actions", line)?,
            purchases: field(&rec, 6, "purchases", line)?,
        };
        if !(row.playtime_hours.is_finite() && row.playtime_hours >= 0.0) {
            return Err(Error::parse(line, "playtime_hours must be finite and >= 0"));
        }
        if row.level == 0 {
            return Err(Error::parse(line, "level must be positive"));
        }
        by_player.entry(id.to_string()).or_default().push(row);
    }
    by_player
        .into_iter()
        .map(|(id, rows)| PlayerLog::new(id, rows))
        .collect()
}

pub fn ingest_logs(path: &Path) -> Result<Vec<PlayerLog>> {
    read_logs(File::open(path)?)
}

pub fn write_logs<W: Write>(out: W, logs: &[PlayerLog]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LOG_HEADER).map_err(csv_error)?;
    for log in logs {
        for r in &log.rows {
            w.write_record([
                log.player_id.clone(),
                r.day_index.to_string(),
                r.playtime_hours.to_string(),
                r.level.to_string(),
                r.sessions.to_string(),
                r.actions.to_string(),
                r.purchases.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_ground_truth<R: Read>(input: R) -> Result<Vec<GroundTruth>> {
    let mut rdr = reader(input);
    check_header(&mut rdr, &TRUTH_HEADER)?;
    let mut out = Vec::new();
    for item in records(&mut rdr, TRUTH_HEADER.len()) {
        let (line, rec) = item?;
        if rec[0].is_empty() {
            return Err(Error::parse(line, "empty player_id"));
        }
        let true_converter = match &rec[1] {
            "true" | "1" => true,
            "false" | "0" => false,
            other => return Err(Error::parse(line, format!("invalid true_converter `{other}`"))),
        };
        let conversion = optional_day(&rec, 2, "true_conversion_day", line)?;
        if true_converter != conversion.is_some() {
            return Err(Error::parse(
                line,
                "true_conversion_day must be set exactly for converters",
            ));
        }
        out.push(GroundTruth {
            player_id: rec[0].to_string(),
            true_converter,
            true_conversion_day: conversion,
            true_churn_day: optional_day(&rec, 3, "true_churn_day", line)?,
        });
    }
    Ok(out)
}

pub fn write_ground_truth<W: Write>(out: W, truth: &[GroundTruth]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRUTH_HEADER).map_err(csv_error)?;
    let opt = |d: Option<i64>| d.map_or_else(String::new, |d| d.to_string());
    for g in truth {
        w.write_record([
            g.player_id.clone(),
            g.true_converter.to_string(),
            opt(g.true_conversion_day),
            opt(g.true_churn_day),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Engineered covariates keyed by player: `player_id,<feature>...`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub feature_names: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

pub fn read_features<R: Read>(input: R) -> Result<FeatureTable> {
    let mut rdr = reader(input);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.get(0) != Some("player_id") {
        return Err(Error::parse(1, "first column must be player_id"));
    }
    let feature_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for item in records(&mut rdr, header.len()) {
        let (line, rec) = item?;
        if rec[0].is_empty() {
            return Err(Error::parse(line, "empty player_id"));
        }
        let x = (1..rec.len())
            .map(|i| {
                let v: f64 = field(&rec, i, &feature_names[i - 1], line)?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::parse(line, format!("non-finite {}", feature_names[i - 1])))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((rec[0].to_string(), x));
    }
    Ok(FeatureTable {
        feature_names,
        rows,
    })
}

pub fn write_features<W: Write>(out: W, table: &FeatureTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["player_id".to_string()];
    header.extend(table.feature_names.iter().cloned());
    w.write_record(&header).map_err(csv_error)?;
    for (id, x) in &table.rows {
        let mut rec = vec![id.clone()];
        rec.extend(x.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
