//! Weather series ingestion, Hargreaves evapotranspiration forecasts and
//! construction of forecast-error training windows.
//!
//! CSV layout (one row per period, header required):
//!
//! ```text
//! timestamp,p_meas,t_meas,et_meas,p_fc_1,..,p_fc_H,t_fc_1,..,t_fc_H
//! ```
//!
//! `timestamp` is ISO-8601 (RFC 3339, or a naive `YYYY-MM-DDTHH:MM:SS` read as
//! UTC). Lead `k` forecasts in a row are issued at that row's timestamp and
//! target the period `k - 1` rows later. Empty cells are missing values.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub timestamp: DateTime<Utc>,
    /// Precipitation forecasts for leads `1..=H` (mm); `NaN` when missing.
    pub p_forecast: Vec<f64>,
    pub p_measured: Option<f64>,
    /// Mean temperature forecasts for leads `1..=H` (°C); `NaN` when missing.
    pub t_forecast: Vec<f64>,
    pub t_measured: Option<f64>,
    pub et_measured: Option<f64>,
}

impl WeatherRecord {
    pub fn leads(&self) -> usize {
        self.p_forecast.len()
    }
}

/// Hargreaves model constants. `ra` is expressed in mm per period so the
/// forecast comes out in mm per period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HargreavesParams {
    pub gamma_c: f64,
    pub ra: f64,
    pub td: f64,
}

impl Default for HargreavesParams {
    fn default() -> Self {
        Self {
            gamma_c: 0.0023,
            ra: 4.0,
            td: 12.0,
        }
    }
}

impl HargreavesParams {
    pub fn validate(&self) -> Result<()> {
        for (n, v) in [("gamma_c", self.gamma_c), ("ra", self.ra), ("td", self.td)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{n} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// `Γc · RA · √TD · (T + 17.8)`, floored at zero.
pub fn hargreaves_et(t_mean: f64, params: &HargreavesParams) -> Result<f64> {
    params.validate()?;
    if !t_mean.is_finite() {
        return Err(Error::Validation(format!("temperature must be finite, got {t_mean}")));
    }
    Ok((params.gamma_c * params.ra * params.td.sqrt() * (t_mean + 17.8)).max(0.0))
}

/// Forecast-error windows of length `H`, aligned by window start.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorDataset {
    pub horizon: usize,
    pub eta_windows: Vec<Vec<f64>>,
    pub xi_windows: Vec<Vec<f64>>,
    pub phat_windows: Vec<Vec<f64>>,
    /// Record index at which each window starts.
    pub starts: Vec<usize>,
    /// Window starts that were skipped because of gaps or missing values.
    pub skipped: Vec<usize>,
}

impl ErrorDataset {
    pub fn len(&self) -> usize {
        self.eta_windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta_windows.is_empty()
    }

    /// Sub-dataset made of the given window positions.
    pub fn select(&self, idx: &[usize]) -> ErrorDataset {
        ErrorDataset {
            horizon: self.horizon,
            eta_windows: idx.iter().map(|&i| self.eta_windows[i].clone()).collect(),
            xi_windows: idx.iter().map(|&i| self.xi_windows[i].clone()).collect(),
            phat_windows: idx.iter().map(|&i| self.phat_windows[i].clone()).collect(),
            starts: idx.iter().map(|&i| self.starts[i]).collect(),
            skipped: Vec::new(),
        }
    }
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    None
}

fn parse_cell(s: &str) -> std::result::Result<Option<f64>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| format!("not a number: {s:?}"))
}

struct Columns {
    timestamp: usize,
    p_meas: usize,
    t_meas: usize,
    et_meas: Option<usize>,
    p_fc: Vec<usize>,
    t_fc: Vec<usize>,
}

fn locate_columns(header: &csv::StringRecord) -> std::result::Result<Columns, Vec<String>> {
    let find = |name: &str| header.iter().position(|h| h.trim() == name);
    let mut missing = Vec::new();
    let mut req = |name: &str| {
        find(name).unwrap_or_else(|| {
            missing.push(format!("missing column {name}"));
            usize::MAX
        })
    };
    let timestamp = req("timestamp");
    let p_meas = req("p_meas");
    let t_meas = req("t_meas");
    let mut p_fc = Vec::new();
    while let Some(i) = find(&format!("p_fc_{}", p_fc.len() + 1)) {
        p_fc.push(i);
    }
    let mut t_fc = Vec::new();
    while let Some(i) = find(&format!("t_fc_{}", t_fc.len() + 1)) {
        t_fc.push(i);
    }
    if p_fc.is_empty() {
        missing.push("missing column p_fc_1".into());
    }
    if t_fc.len() != p_fc.len() {
        missing.push(format!(
            "found {} p_fc_* columns but {} t_fc_* columns",
            p_fc.len(),
            t_fc.len()
        ));
    }
    if !missing.is_empty() {
        return Err(missing);
    }
    Ok(Columns {
        timestamp,
        p_meas,
        t_meas,
        et_meas: find("et_meas"),
        p_fc,
        t_fc,
    })
}

/// Read a weather CSV. Rows are returned sorted by timestamp; every malformed
/// row is reported with its line number.
pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Vec<WeatherRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    if text.trim().is_empty() {
        log::warn!("{}: empty weather file", path.display());
        return Ok(Vec::new());
    }
    let fail = |issues: Vec<String>| Error::Ingestion {
        path: path.to_path_buf(),
        issues,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    let cols = locate_columns(&header).map_err(fail)?;

    let mut issues = Vec::new();
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                issues.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let cell = |c: usize| row.get(c).unwrap_or("");
        let mut row_issues = Vec::new();
        let timestamp = parse_timestamp(cell(cols.timestamp));
        if timestamp.is_none() {
            row_issues.push(format!("unparseable timestamp {:?}", cell(cols.timestamp)));
        }
        let mut num = |c: usize, name: &str| match parse_cell(cell(c)) {
            Ok(v) => v,
            Err(e) => {
                row_issues.push(format!("{name}: {e}"));
                None
            }
        };
        let p_measured = num(cols.p_meas, "p_meas");
        let t_measured = num(cols.t_meas, "t_meas");
        let et_measured = cols.et_meas.and_then(|c| num(c, "et_meas"));
        let p_forecast: Vec<f64> = cols
            .p_fc
            .iter()
            .enumerate()
            .map(|(k, &c)| num(c, &format!("p_fc_{}", k + 1)).unwrap_or(f64::NAN))
            .collect();
        let t_forecast: Vec<f64> = cols
            .t_fc
            .iter()
            .enumerate()
            .map(|(k, &c)| num(c, &format!("t_fc_{}", k + 1)).unwrap_or(f64::NAN))
            .collect();
        if let Some(p) = p_measured {
            if p < 0.0 {
                row_issues.push(format!("negative measured precipitation {p}"));
            }
        }
        if let Some(k) = p_forecast.iter().position(|p| *p < 0.0) {
            row_issues.push(format!("negative precipitation forecast at lead {}", k + 1));
        }
        if !row_issues.is_empty() {
            issues.push(format!("line {line}: {}", row_issues.join(", ")));
            continue;
        }
        out.push((
            line,
            WeatherRecord {
                timestamp: timestamp.expect("checked above"),
                p_forecast,
                p_measured,
                t_forecast,
                t_measured,
                et_measured,
            },
        ));
    }
    out.sort_by_key(|(_, r)| r.timestamp);
    for pair in out.windows(2) {
        if pair[0].1.timestamp == pair[1].1.timestamp {
            issues.push(format!(
                "lines {} and {}: duplicate timestamp {}",
                pair[0].0, pair[1].0, pair[1].1.timestamp
            ));
        }
    }
    if !issues.is_empty() {
        return Err(fail(issues));
    }
    Ok(out.into_iter().map(|(_, r)| r).collect())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn fmt_nan(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Write records in the CSV layout read by [`ingest_csv`].
pub fn write_csv(path: impl AsRef<Path>, records: &[WeatherRecord]) -> Result<()> {
    let h = records.first().map(|r| r.leads()).unwrap_or(0);
    let mut s = String::from("timestamp,p_meas,t_meas,et_meas");
    for k in 1..=h {
        let _ = write!(s, ",p_fc_{k}");
    }
    for k in 1..=h {
        let _ = write!(s, ",t_fc_{k}");
    }
    s.push('\n');
    for r in records {
        let _ = write!(
            s,
            "{},{},{},{}",
            r.timestamp.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            fmt_opt(r.p_measured),
            fmt_opt(r.t_measured),
            fmt_opt(r.et_measured)
        );
        for v in r.p_forecast.iter().chain(r.t_forecast.iter()) {
            s.push(',');
            s.push_str(&fmt_nan(*v));
        }
        s.push('\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(s.as_bytes())?;
    Ok(())
}

/// Evapotranspiration forecasts for leads `1..=H` of a record.
pub fn et_forecast(record: &WeatherRecord, hargreaves: &HargreavesParams) -> Result<Vec<f64>> {
    record
        .t_forecast
        .iter()
        .map(|t| {
            if t.is_nan() {
                Ok(f64::NAN)
            } else {
                hargreaves_et(*t, hargreaves)
            }
        })
        .collect()
}

/// Slide a length-`H` window over the series with the given stride.
///
/// Window `i` starting at record `s` pairs forecasts issued at `s` with the
/// measurements of records `s .. s + H`. A window is skipped (and its start
/// recorded in `skipped`) if timestamps are not evenly spaced by
/// `period_hours` or any needed value is missing.
pub fn build_error_windows(
    records: &[WeatherRecord],
    horizon: usize,
    period_hours: f64,
    hargreaves: &HargreavesParams,
    stride: usize,
) -> Result<ErrorDataset> {
    if stride == 0 {
        return Err(Error::Validation("stride must be >= 1".into()));
    }
    if horizon == 0 {
        return Err(Error::Validation("horizon must be >= 1".into()));
    }
    hargreaves.validate()?;
    if records.len() < horizon {
        return Err(Error::Validation(format!(
            "need at least {horizon} records, got {}",
            records.len()
        )));
    }
    let period = chrono::Duration::milliseconds((period_hours * 3.6e6).round() as i64);
    let mut ds = ErrorDataset {
        horizon,
        ..Default::default()
    };
    let mut s = 0;
    while s + horizon <= records.len() {
        match window_at(records, s, horizon, period, hargreaves)? {
            Some((eta, xi, phat)) => {
                ds.eta_windows.push(eta);
                ds.xi_windows.push(xi);
                ds.phat_windows.push(phat);
                ds.starts.push(s);
            }
            None => ds.skipped.push(s),
        }
        s += stride;
    }
    if !ds.skipped.is_empty() {
        log::warn!(
            "{} of {} windows skipped because of gaps or missing values",
            ds.skipped.len(),
            ds.skipped.len() + ds.len()
        );
    }
    Ok(ds)
}

type Window = (Vec<f64>, Vec<f64>, Vec<f64>);

fn window_at(
    records: &[WeatherRecord],
    s: usize,
    horizon: usize,
    period: chrono::Duration,
    hargreaves: &HargreavesParams,
) -> Result<Option<Window>> {
    let issue = &records[s];
    if issue.leads() < horizon || issue.t_forecast.len() < horizon {
        return Ok(None);
    }
    for t in 1..horizon {
        if records[s + t].timestamp - records[s + t - 1].timestamp != period {
            return Ok(None);
        }
    }
    let mut eta = Vec::with_capacity(horizon);
    let mut xi = Vec::with_capacity(horizon);
    let mut phat = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let target = &records[s + t];
        let (Some(p), Some(e)) = (target.p_measured, target.et_measured) else {
            return Ok(None);
        };
        let p_fc = issue.p_forecast[t];
        let t_fc = issue.t_forecast[t];
        if p_fc.is_nan() || t_fc.is_nan() {
            return Ok(None);
        }
        let e_fc = hargreaves_et(t_fc, hargreaves)?;
        eta.push(e - e_fc);
        xi.push(p - p_fc);
        phat.push(p_fc);
    }
    Ok(Some((eta, xi, phat)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn rec(i: i64, h: usize) -> WeatherRecord {
        let ts = Utc.with_ymd_and_hms(2016, 5, 1, 0, 0, 0).unwrap() + chrono::Duration::hours(6 * i);
        WeatherRecord {
            timestamp: ts,
            p_forecast: (0..h).map(|k| (i as f64 + k as f64) * 0.5).collect(),
            p_measured: Some(i as f64 * 0.25),
            t_forecast: vec![20.0; h],
            t_measured: Some(20.0),
            et_measured: Some(1.5),
        }
    }

    #[test]
    fn hargreaves_values() {
        let p = HargreavesParams {
            gamma_c: 0.0023,
            ra: 10.0,
            td: 10.0,
        };
        let v = hargreaves_et(20.0, &p).unwrap();
        assert!((v - 0.0023 * 10.0 * 10f64.sqrt() * 37.8).abs() < 1e-12);
        assert!((v - 2.7493).abs() < 1e-3);
        assert_eq!(hargreaves_et(-17.8, &p).unwrap(), 0.0);
        assert_eq!(hargreaves_et(-30.0, &p).unwrap(), 0.0);
        let p2 = HargreavesParams { ra: 20.0, ..p };
        assert!((hargreaves_et(20.0, &p2).unwrap() - 2.0 * v).abs() < 1e-12);
        assert!(hargreaves_et(1.0, &HargreavesParams { td: 0.0, ..p }).is_err());
    }

    #[test]
    fn hargreaves_monotone() {
        let p = HargreavesParams::default();
        let mut last = f64::NEG_INFINITY;
        for i in -400..400 {
            let v = hargreaves_et(i as f64 * 0.1, &p).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn window_counts() {
        let recs: Vec<_> = (0..736).map(|i| rec(i, 8)).collect();
        let hp = HargreavesParams::default();
        let ds = build_error_windows(&recs, 8, 6.0, &hp, 1).unwrap();
        assert_eq!(ds.len(), 729);
        let ds = build_error_windows(&recs[..8], 8, 6.0, &hp, 1).unwrap();
        assert_eq!(ds.len(), 1);
        // non-overlapping: brute count of starts s with s % 8 == 0 and s + 8 <= 30
        let ds = build_error_windows(&recs[..30], 8, 6.0, &hp, 8).unwrap();
        let brute = (0..30).filter(|s| s % 8 == 0 && s + 8 <= 30).count();
        assert_eq!(ds.len(), brute);
        assert_eq!(ds.len(), (30 - 8) / 8 + 1);
        assert!(build_error_windows(&recs[..5], 8, 6.0, &hp, 1).is_err());
        assert!(build_error_windows(&recs, 8, 6.0, &hp, 0).is_err());
    }

    #[test]
    fn window_alignment_identity() {
        let recs: Vec<_> = (0..40).map(|i| rec(i, 4)).collect();
        let ds = build_error_windows(&recs, 4, 6.0, &HargreavesParams::default(), 1).unwrap();
        for (w, &s) in ds.starts.iter().enumerate() {
            for t in 0..4 {
                let p = recs[s + t].p_measured.unwrap();
                assert!((ds.xi_windows[w][t] + ds.phat_windows[w][t] - p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gaps_are_skipped() {
        let mut recs: Vec<_> = (0..20).map(|i| rec(i, 4)).collect();
        recs.remove(10);
        let ds = build_error_windows(&recs, 4, 6.0, &HargreavesParams::default(), 1).unwrap();
        // windows starting at 7, 8, 9 straddle the removed period
        assert_eq!(ds.skipped, vec![7, 8, 9]);
        assert_eq!(ds.len() + ds.skipped.len(), 19 - 4 + 1);
        recs[3].et_measured = None;
        let ds = build_error_windows(&recs, 4, 6.0, &HargreavesParams::default(), 1).unwrap();
        assert!(ds.skipped.contains(&0) && ds.skipped.contains(&3));
    }

    #[test]
    fn csv_round_trip_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        let recs: Vec<_> = (0..3).map(|i| rec(i, 2)).collect();
        let shuffled = vec![recs[2].clone(), recs[0].clone(), recs[1].clone()];
        write_csv(&path, &shuffled).unwrap();
        let back = ingest_csv(&path).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn csv_negative_precip_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        std::fs::write(
            &path,
            "timestamp,p_meas,t_meas,et_meas,p_fc_1,t_fc_1\n\
             2016-05-01T00:00:00Z,0,20,1,0,20\n\
             2016-05-01T06:00:00Z,-1,20,1,0,20\n",
        )
        .unwrap();
        let err = ingest_csv(&path).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        assert!(err.contains("negative measured precipitation"), "{err}");
    }

    #[test]
    fn csv_missing_columns_and_bad_timestamps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        std::fs::write(&path, "timestamp,p_meas\n2016-05-01T00:00:00Z,0\n").unwrap();
        let err = ingest_csv(&path).unwrap_err().to_string();
        assert!(err.contains("t_meas") && err.contains("p_fc_1"), "{err}");
        std::fs::write(
            &path,
            "timestamp,p_meas,t_meas,p_fc_1,t_fc_1\nyesterday,0,20,0,20\n",
        )
        .unwrap();
        let err = ingest_csv(&path).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("timestamp"), "{err}");
    }

    #[test]
    fn csv_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        std::fs::write(&path, "").unwrap();
        assert!(ingest_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn csv_missing_cells_become_none() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        std::fs::write(
            &path,
            "timestamp,p_meas,t_meas,p_fc_1,t_fc_1\n2016-05-01 00:00:00,,20,,20\n",
        )
        .unwrap();
        let r = ingest_csv(&path).unwrap();
        assert_eq!(r[0].p_measured, None);
        assert_eq!(r[0].et_measured, None);
        assert!(r[0].p_forecast[0].is_nan());
    }
}
