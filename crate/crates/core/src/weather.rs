//! Weather series: global horizontal irradiance and ambient temperature.
//!
//! Three sources are supported: the simple `timestamp;ghi_w_m2;t_ambient_c`
//! CSV, DWD hourly station product files ("stundenwerte" temperature and
//! solar archives), and a documented synthetic April-like series for runs
//! without external data.

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use thiserror::Error;

use crate::profiles::parse_timestamp;

#[derive(Debug, Error)]
pub enum WeatherError {
    #[error("cannot read weather file {path}: {detail}")]
    File { path: String, detail: String },
    #[error("weather series does not cover {missing} (series spans {from} .. {to})")]
    Coverage {
        missing: NaiveDateTime,
        from: NaiveDateTime,
        to: NaiveDateTime,
    },
    #[error("weather series is empty")]
    Empty,
}

/// Time-ordered weather samples; lookups interpolate linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherSeries {
    times: Vec<NaiveDateTime>,
    ghi_w_m2: Vec<f64>,
    t_ambient_c: Vec<f64>,
}

impl WeatherSeries {
    pub fn new(
        times: Vec<NaiveDateTime>,
        ghi_w_m2: Vec<f64>,
        t_ambient_c: Vec<f64>,
    ) -> WeatherSeries {
        WeatherSeries {
            times,
            ghi_w_m2,
            t_ambient_c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn span(&self) -> Option<(NaiveDateTime, NaiveDateTime)> {
        Some((*self.times.first()?, *self.times.last()?))
    }

    /// Checks that `[start, end]` lies within the series span.
    pub fn covers(&self, start: NaiveDateTime, end: NaiveDateTime) -> Result<(), WeatherError> {
        let (from, to) = self.span().ok_or(WeatherError::Empty)?;
        for probe in [start, end] {
            if probe < from || probe > to {
                return Err(WeatherError::Coverage {
                    missing: probe,
                    from,
                    to,
                });
            }
        }
        Ok(())
    }

    /// Linearly interpolated `(ghi in W/m², ambient temperature in °C)`.
    pub fn sample(&self, t: NaiveDateTime) -> (f64, f64) {
        if self.times.is_empty() {
            return (0.0, 0.0);
        }
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return (self.ghi_w_m2[0], self.t_ambient_c[0]);
        }
        if k == self.times.len() {
            return (*self.ghi_w_m2.last().unwrap(), *self.t_ambient_c.last().unwrap());
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0).num_seconds() as f64 / (t1 - t0).num_seconds() as f64;
        (
            self.ghi_w_m2[k - 1] * (1.0 - w) + self.ghi_w_m2[k] * w,
            self.t_ambient_c[k - 1] * (1.0 - w) + self.t_ambient_c[k] * w,
        )
    }

    /// Serializes to the simple CSV interchange format.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("timestamp;ghi_w_m2;t_ambient_c\n");
        for k in 0..self.times.len() {
            out.push_str(&format!(
                "{};{};{}\n",
                self.times[k].format("%Y-%m-%dT%H:%M:%S"),
                self.ghi_w_m2[k],
                self.t_ambient_c[k]
            ));
        }
        out
    }
}

/// Reads the simple `timestamp;ghi_w_m2;t_ambient_c` CSV.
pub fn import_csv(path: &std::path::Path) -> Result<WeatherSeries, WeatherError> {
    let err = |detail: String| WeatherError::File {
        path: path.display().to_string(),
        detail,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let mut times = Vec::new();
    let mut ghi = Vec::new();
    let mut temp = Vec::new();
    for (i, row) in text.lines().enumerate() {
        if i == 0 || row.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(';').collect();
        if fields.len() != 3 {
            return Err(err(format!("row {}: expected three columns", i + 1)));
        }
        times.push(parse_timestamp(fields[0]).map_err(err)?);
        ghi.push(
            fields[1]
                .trim()
                .parse()
                .map_err(|_| err(format!("row {}: bad ghi {:?}", i + 1, fields[1])))?,
        );
        temp.push(
            fields[2]
                .trim()
                .parse()
                .map_err(|_| err(format!("row {}: bad temperature {:?}", i + 1, fields[2])))?,
        );
    }
    Ok(WeatherSeries::new(times, ghi, temp))
}

/// Synthetic April-like series: mild nights, ~20 °C afternoons and high,
/// mostly clear-sky irradiance with a deterministic per-day attenuation.
///
/// Hourly resolution, starting at `first_day` 00:00 for `days` days plus one
/// closing sample so interpolation covers the final day completely.
pub fn synthetic_april(first_day: NaiveDate, days: u32) -> WeatherSeries {
    let hours = days as i64 * 24;
    let mut times = Vec::with_capacity(hours as usize + 1);
    let mut ghi = Vec::with_capacity(hours as usize + 1);
    let mut temp = Vec::with_capacity(hours as usize + 1);
    let start = first_day.and_hms_opt(0, 0, 0).unwrap();
    for h in 0..=hours {
        let t = start + chrono::Duration::hours(h);
        let hour = t.hour() as f64;
        // Deterministic cloudiness: a fixed pseudo-random factor per day.
        let day_ordinal = t.date().num_days_from_ce() as u64;
        let hash = day_ordinal
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .rotate_left(17);
        let clearness = 0.65 + 0.35 * ((hash % 1000) as f64 / 999.0);
        let solar = if (6.0..=20.0).contains(&hour) {
            let x = (hour - 6.0) / 14.0 * std::f64::consts::PI;
            650.0 * x.sin().max(0.0) * clearness
        } else {
            0.0
        };
        // Daily temperature swing 8..20 °C, warmest at 15:00.
        let phase = (hour - 15.0) / 24.0 * std::f64::consts::TAU;
        let ambient = 14.0 + 6.0 * phase.cos();
        times.push(t);
        ghi.push((solar * 10.0).round() / 10.0);
        temp.push((ambient * 10.0).round() / 10.0);
    }
    WeatherSeries::new(times, ghi, temp)
}

const DWD_MISSING: f64 = -999.0;

fn read_dwd_product(
    path: &std::path::Path,
    value_column: &str,
) -> Result<Vec<(NaiveDateTime, f64)>, WeatherError> {
    let err = |detail: String| WeatherError::File {
        path: path.display().to_string(),
        detail,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| err("empty file".into()))?;
    let columns: Vec<&str> = header.split(';').map(|c| c.trim()).collect();
    let date_idx = columns
        .iter()
        .position(|&c| c == "MESS_DATUM")
        .ok_or_else(|| err("missing column MESS_DATUM".into()))?;
    let value_idx = columns
        .iter()
        .position(|&c| c == value_column)
        .ok_or_else(|| err(format!("missing column {value_column}")))?;
    let mut samples = Vec::new();
    for (i, row) in lines.enumerate() {
        if row.trim().is_empty() || row.starts_with("eor") {
            continue;
        }
        let fields: Vec<&str> = row.split(';').map(|f| f.trim()).collect();
        let raw_date = fields
            .get(date_idx)
            .ok_or_else(|| err(format!("row {}: short record", i + 2)))?;
        // MESS_DATUM is YYYYMMDDHH; solar files may append minutes, so only
        // the first 10 characters are significant.
        let digits: String = raw_date.chars().take(10).collect();
        if digits.len() < 10 {
            return Err(err(format!("row {}: bad MESS_DATUM {raw_date:?}", i + 2)));
        }
        let t = NaiveDateTime::parse_from_str(&format!("{digits}0000"), "%Y%m%d%H%M%S")
            .map_err(|e| err(format!("row {}: bad MESS_DATUM {raw_date:?}: {e}", i + 2)))?;
        let value: f64 = fields
            .get(value_idx)
            .ok_or_else(|| err(format!("row {}: short record", i + 2)))?
            .parse()
            .map_err(|_| err(format!("row {}: bad {value_column}", i + 2)))?;
        samples.push((t, value));
    }
    Ok(samples)
}

/// Imports DWD hourly station data: an air-temperature product file
/// (`TT_TU` column, °C) and a solar product file (`FG_LBERG` column, J/cm²
/// per hour, converted to mean W/m²). Rows are joined on the hour; missing
/// markers (−999) drop the temperature row resp. count as zero irradiance.
pub fn import_dwd(
    temperature_path: &std::path::Path,
    solar_path: &std::path::Path,
) -> Result<WeatherSeries, WeatherError> {
    let temperature = read_dwd_product(temperature_path, "TT_TU")?;
    let solar = read_dwd_product(solar_path, "FG_LBERG")?;
    let solar_by_time: std::collections::BTreeMap<NaiveDateTime, f64> =
        solar.into_iter().collect();
    let mut times = Vec::new();
    let mut ghi = Vec::new();
    let mut temp = Vec::new();
    for (t, tt) in temperature {
        if tt == DWD_MISSING {
            continue;
        }
        let Some(&fg) = solar_by_time.get(&t) else {
            continue;
        };
        let fg = if fg == DWD_MISSING { 0.0 } else { fg };
        times.push(t);
        // J/cm² over one hour → W/m²: ×10⁴ cm²/m² ÷ 3600 s.
        ghi.push(fg * 10_000.0 / 3600.0);
        temp.push(tt);
    }
    Ok(WeatherSeries::new(times, ghi, temp))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_series_is_deterministic_and_plausible() {
        let first_day = NaiveDate::from_ymd_opt(2020, 4, 6).unwrap();
        let a = synthetic_april(first_day, 2);
        let b = synthetic_april(first_day, 2);
        assert_eq!(a, b);
        let (ghi_noon, t_noon) = a.sample(first_day.and_hms_opt(13, 0, 0).unwrap());
        assert!(ghi_noon > 300.0, "midday ghi {ghi_noon}");
        assert!(t_noon > 10.0);
        let (ghi_night, t_night) = a.sample(first_day.and_hms_opt(2, 0, 0).unwrap());
        assert_eq!(ghi_night, 0.0);
        assert!(t_night < t_noon);
    }

    #[test]
    fn csv_round_trip() {
        let first_day = NaiveDate::from_ymd_opt(2020, 4, 6).unwrap();
        let series = synthetic_april(first_day, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weather.csv");
        std::fs::write(&path, series.to_csv()).unwrap();
        let back = import_csv(&path).unwrap();
        assert_eq!(series, back);
    }

    #[test]
    fn coverage_check() {
        let first_day = NaiveDate::from_ymd_opt(2020, 4, 6).unwrap();
        let series = synthetic_april(first_day, 2);
        let start = first_day.and_hms_opt(0, 0, 0).unwrap();
        assert!(series
            .covers(start, start + chrono::Duration::hours(48))
            .is_ok());
        assert!(matches!(
            series.covers(start, start + chrono::Duration::hours(72)),
            Err(WeatherError::Coverage { .. })
        ));
    }

    #[test]
    fn interpolation_is_linear_between_samples() {
        let t0 = NaiveDate::from_ymd_opt(2020, 1, 1)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap();
        let series = WeatherSeries::new(
            vec![t0, t0 + chrono::Duration::hours(1)],
            vec![0.0, 100.0],
            vec![10.0, 12.0],
        );
        let (ghi, temp) = series.sample(t0 + chrono::Duration::minutes(30));
        approx::assert_relative_eq!(ghi, 50.0);
        approx::assert_relative_eq!(temp, 11.0);
    }

    #[test]
    fn dwd_import_joins_and_converts() {
        let dir = tempfile::tempdir().unwrap();
        let temperature = dir.path().join("produkt_tu_stunde.txt");
        std::fs::write(
            &temperature,
            "STATIONS_ID;MESS_DATUM;QN_9;TT_TU;RF_TU;eor\n\
             2261;2020040612;3;15.3;61;eor\n\
             2261;2020040613;3;-999;62;eor\n\
             2261;2020040614;3;16.1;60;eor\n",
        )
        .unwrap();
        let solar = dir.path().join("produkt_st_stunde.txt");
        std::fs::write(
            &solar,
            "STATIONS_ID;MESS_DATUM;QN_592;ATMO_LBERG;FD_LBERG;FG_LBERG;SD_LBERG;ZENIT;MESS_DATUM_WOZ;eor\n\
             2261;2020040612:23;1;-999;96;180;60;48.2;2020040612:53;eor\n\
             2261;2020040614:23;1;-999;94;144;55;52.0;2020040614:53;eor\n",
        )
        .unwrap();
        let series = import_dwd(&temperature, &solar).unwrap();
        // The -999 temperature row is dropped; two joined samples remain.
        assert_eq!(series.times.len(), 2);
        // 180 J/cm² per hour = 500 W/m².
        approx::assert_relative_eq!(series.ghi_w_m2[0], 500.0, epsilon = 1e-9);
        approx::assert_relative_eq!(series.t_ambient_c[0], 15.3);
        approx::assert_relative_eq!(series.ghi_w_m2[1], 400.0, epsilon = 1e-9);
    }
}
