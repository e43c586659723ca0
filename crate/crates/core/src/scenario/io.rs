//! Hourly season tables: `timestamp, electric_load_mw, heat_load_mw, wind_mw, pv_mw`.

use std::io::{Read, Write};

use chrono::NaiveDateTime;

use super::{DayRecord, ScenarioError, SeasonData};

const COLUMNS: [&str; 5] = ["timestamp", "electric_load_mw", "heat_load_mw", "wind_mw", "pv_mw"];
const TIME_FORMATS: [&str; 4] = ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"];

fn parse_time(s: &str) -> Option<NaiveDateTime> {
    TIME_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s.trim(), f).ok())
}

/// Parses a season table. Rows of one calendar date form one day; every day
/// must have the same number of rows.
pub fn read_season_csv<R: Read>(reader: R) -> Result<SeasonData, ScenarioError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ScenarioError::Malformed { line: 1, msg: e.to_string() })?
        .clone();
    let mut pos = [0usize; 5];
    for (k, name) in COLUMNS.iter().enumerate() {
        pos[k] = headers
            .iter()
            .position(|h| h == *name)
            .ok_or_else(|| ScenarioError::MissingColumn((*name).to_string()))?;
    }

    let mut days: Vec<DayRecord> = Vec::new();
    let mut last: Option<NaiveDateTime> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ScenarioError::Malformed {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |msg: String| ScenarioError::Malformed { line, msg };
        let field = |k: usize| rec.get(pos[k]).unwrap_or("");
        let ts = parse_time(field(0)).ok_or_else(|| bad(format!("bad timestamp `{}`", field(0))))?;
        if last.is_some_and(|p| ts <= p) {
            return Err(bad(format!("timestamp {ts} is not after the previous row")));
        }
        last = Some(ts);
        let mut vals = [0.0; 4];
        for (k, v) in vals.iter_mut().enumerate() {
            let raw = field(k + 1);
            *v = raw
                .parse::<f64>()
                .map_err(|_| bad(format!("column {}: `{raw}` is not a number", COLUMNS[k + 1])))?;
            if !(*v >= 0.0 && v.is_finite()) {
                return Err(bad(format!("column {}: {v} must be finite and ≥ 0", COLUMNS[k + 1])));
            }
        }
        let date = ts.date();
        if days.last().is_none_or(|d| d.date != date) {
            days.push(DayRecord {
                electric_load: Vec::with_capacity(24),
                heat_load: Vec::with_capacity(24),
                wind_max: Vec::with_capacity(24),
                pv_max: Vec::with_capacity(24),
                date,
            });
        }
        let d = days.last_mut().expect("pushed above");
        d.electric_load.push(vals[0]);
        d.heat_load.push(vals[1]);
        d.wind_max.push(vals[2]);
        d.pv_max.push(vals[3]);
    }
    let season = SeasonData { days };
    season.validate()?;
    Ok(season)
}

/// Writes hourly rows, one day of `steps` rows per record.
pub fn write_season_csv<W: Write>(season: &SeasonData, writer: W) -> Result<(), ScenarioError> {
    let io = |e: csv::Error| ScenarioError::Io(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COLUMNS).map_err(io)?;
    for d in &season.days {
        let steps = d.electric_load.len();
        for t in 0..steps {
            let minutes = (t * 24 * 60 / steps) as u32;
            let ts = d
                .date
                .and_hms_opt(minutes / 60, minutes % 60, 0)
                .expect("offset lies within the day");
            w.write_record([
                ts.format("%Y-%m-%dT%H:%M:%S").to_string(),
                d.electric_load[t].to_string(),
                d.heat_load[t].to_string(),
                d.wind_max[t].to_string(),
                d.pv_max[t].to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| ScenarioError::Io(e.to_string()))
}
