use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, Timelike};

use super::{DayProfile, TimeGrid};
use crate::error::{Error, Result};

const COLUMNS: [&str; 6] = ["timestamp", "use", "gen", "air", "car", "dishwasher"];

/// Reads a smart-meter export with header `timestamp,use,gen,air,car,dishwasher`.
///
/// Samples finer than the grid are averaged over each step window. Days that
/// do not cover every step of `grid` are dropped. The base load is
/// `use - air - car - dishwasher`, clamped at zero.
pub fn load_profiles_csv(path: impl AsRef<Path>, grid: TimeGrid) -> Result<Vec<DayProfile>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_profiles_csv(file, grid)
}

#[derive(Default, Clone, Copy)]
struct Bin {
    sums: [f64; 5],
    count: u32,
}

pub fn read_profiles_csv<R: Read>(reader: R, grid: TimeGrid) -> Result<Vec<DayProfile>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }

    let mut days: BTreeMap<NaiveDate, Vec<Bin>> = BTreeMap::new();
    let mut previous: Option<NaiveDateTime> = None;
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let raw_ts = &record[idx[0]];
        let ts = parse_timestamp(raw_ts)?;
        if previous.is_some_and(|p| ts <= p) {
            return Err(Error::Ordering { row: row + 1, timestamp: raw_ts.to_string() });
        }
        previous = Some(ts);

        let mut values = [0.0; 5];
        for (v, &col) in values.iter_mut().zip(&idx[1..]) {
            let field = &record[col];
            *v = if field.is_empty() {
                0.0
            } else {
                field
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("row {}: `{field}` is not a number", row + 1)))?
            };
            if !v.is_finite() {
                return Err(Error::Numeric(format!("row {}: `{field}`", row + 1)));
            }
        }

        let minute = ts.hour() * 60 + ts.minute();
        let step = grid.step_of_minute(minute);
        let bins = days.entry(ts.date()).or_insert_with(|| vec![Bin::default(); grid.steps()]);
        let bin = &mut bins[step];
        for (s, v) in bin.sums.iter_mut().zip(values) {
            *s += v;
        }
        bin.count += 1;
    }

    let mut out = Vec::new();
    for (date, bins) in days {
        if bins.iter().any(|b| b.count == 0) {
            continue;
        }
        let mut day = DayProfile::zeros(date, grid);
        for (t, bin) in bins.iter().enumerate() {
            let n = bin.count as f64;
            let [use_kw, gen, air, car, dw] = bin.sums.map(|s| s / n);
            day.base_load[t] = (use_kw - air - car - dw).max(0.0);
            day.pv[t] = gen.max(0.0);
            day.ac_nominal[t] = air.max(0.0);
            day.ev_nominal[t] = car.max(0.0);
            day.dw_nominal[t] = dw.max(0.0);
        }
        out.push(day);
    }
    Ok(out)
}

fn parse_timestamp(raw: &str) -> Result<NaiveDateTime> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Ok(dt.naive_local());
    }
    const FORMATS: [&str; 4] = ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
        .ok_or_else(|| Error::Timestamp(raw.to_string()))
}

/// Writes profiles in the ingestion schema, one row per step.
pub fn write_profiles_csv<W: Write>(writer: W, days: &[DayProfile], grid: TimeGrid) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(COLUMNS)?;
    for day in days {
        day.validate(grid.steps())?;
        for t in 0..grid.steps() {
            let minute = grid.start_minute(t);
            let ts = format!("{}T{:02}:{:02}:00", day.date, minute / 60, minute % 60);
            let consumption = day.base_load[t] + day.ac_nominal[t] + day.ev_nominal[t] + day.dw_nominal[t];
            wtr.write_record([
                ts,
                consumption.to_string(),
                day.pv[t].to_string(),
                day.ac_nominal[t].to_string(),
                day.ev_nominal[t].to_string(),
                day.dw_nominal[t].to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> String {
        "timestamp,use,gen,air,car,dishwasher\n".to_string()
    }

    fn rows(date: &str, n: usize, line: impl Fn(usize) -> String) -> String {
        (0..n).map(|i| format!("{date}T{:02}:{:02}:00,{}\n", i * 15 / 60, i * 15 % 60, line(i))).collect()
    }

    #[test]
    fn constant_day_is_pure_base_load() {
        let data = header() + &rows("2016-07-01", 96, |_| "1.0,0,0,0,0".into());
        let days = read_profiles_csv(data.as_bytes(), TimeGrid::QUARTER_HOUR).unwrap();
        assert_eq!(days.len(), 1);
        assert!(days[0].base_load.iter().all(|&v| v == 1.0));
        assert!(days[0].pv.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn base_load_subtracts_devices() {
        let data = header() + &rows("2016-07-01", 96, |_| "2.0,0,0.5,1.0,0.2".into());
        let days = read_profiles_csv(data.as_bytes(), TimeGrid::QUARTER_HOUR).unwrap();
        assert!((days[0].base_load[0] - 0.3).abs() < 1e-12);
        assert_eq!(days[0].ev_nominal[0], 1.0);
    }

    #[test]
    fn base_load_is_clamped() {
        let data = header() + &rows("2016-07-01", 96, |_| "0.5,0,0.5,1.0,0.0".into());
        let days = read_profiles_csv(data.as_bytes(), TimeGrid::QUARTER_HOUR).unwrap();
        assert_eq!(days[0].base_load[5], 0.0);
    }

    #[test]
    fn incomplete_day_dropped() {
        let data = header() + &rows("2016-07-01", 95, |_| "1.0,0,0,0,0".into());
        let days = read_profiles_csv(data.as_bytes(), TimeGrid::QUARTER_HOUR).unwrap();
        assert!(days.is_empty());
    }

    #[test]
    fn missing_column_is_named() {
        let data = "timestamp,use,gen,air,dishwasher\n2016-07-01T00:00:00,1,0,0,0\n";
        match read_profiles_csv(data.as_bytes(), TimeGrid::QUARTER_HOUR) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "car"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn decreasing_timestamps_rejected() {
        let data = header() + "2016-07-01T00:15:00,1,0,0,0,0\n2016-07-01T00:00:00,1,0,0,0,0\n";
        assert!(matches!(
            read_profiles_csv(data.as_bytes(), TimeGrid::QUARTER_HOUR),
            Err(Error::Ordering { row: 2, .. })
        ));
    }

    #[test]
    fn finer_samples_are_averaged() {
        // one-minute data: each 15-min window alternates 1.0 and 3.0
        let mut data = header();
        for m in 0..1440 {
            let v = if m % 2 == 0 { 1.0 } else { 3.0 };
            data += &format!("2016-07-01 {:02}:{:02}:00,{v},0,0,0,0\n", m / 60, m % 60);
        }
        let days = read_profiles_csv(data.as_bytes(), TimeGrid::QUARTER_HOUR).unwrap();
        // 15 samples per window: 8 of one value, 7 of the other
        let first = days[0].base_load[0];
        assert!((first - (8.0 * 1.0 + 7.0 * 3.0) / 15.0).abs() < 1e-12);
    }

    #[test]
    fn rfc3339_with_offset_accepted() {
        let data =
            header() + &(0..24).map(|h| format!("2016-07-01T{h:02}:00:00-05:00,1,0,0,0,0\n")).collect::<String>();
        let days = read_profiles_csv(data.as_bytes(), TimeGrid::HOURLY).unwrap();
        assert_eq!(days.len(), 1);
    }
}
