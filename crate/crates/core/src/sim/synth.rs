//! Seeded synthetic weather with forecasts, for runs without a measured series.

use chrono::{DateTime, Datelike, Months, NaiveDate, Timelike, Utc};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weather::{hargreaves_et, HargreavesParams, WeatherRecord};

/// Generator settings. Rain is an independent Bernoulli event per period
/// with an exponential intensity capped at `p_max`; temperature is a seasonal
/// plus diurnal sinusoid with AR(1) noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub period_hours: f64,
    /// Forecast leads per record.
    pub leads: usize,
    pub p_max: f64,
    pub wet_prob: f64,
    /// Mean rain amount in a wet period (mm).
    pub mean_intensity: f64,
    pub temp_mean: f64,
    pub temp_seasonal_amp: f64,
    pub temp_diurnal_amp: f64,
    pub temp_noise: f64,
    /// Standard deviation of the log ratio between measured and Hargreaves ET.
    pub et_noise: f64,
    /// Probability that a wet period is forecast dry at lead 1.
    pub miss_prob: f64,
    /// Probability that a dry period is forecast wet.
    pub false_alarm_prob: f64,
    pub false_alarm_mean: f64,
    /// Standard deviation of the log ratio of forecast to realized rain at lead 1.
    pub intensity_noise: f64,
    /// Relative growth of forecast noise per extra lead.
    pub lead_growth: f64,
    /// Standard deviation of temperature forecast errors at lead 1 (°C).
    pub temp_forecast_noise: f64,
    pub hargreaves: HargreavesParams,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            period_hours: 6.0,
            leads: 8,
            p_max: 50.0,
            wet_prob: 0.2,
            mean_intensity: 3.0,
            temp_mean: 18.0,
            temp_seasonal_amp: 7.0,
            temp_diurnal_amp: 5.0,
            temp_noise: 1.5,
            et_noise: 0.08,
            miss_prob: 0.15,
            false_alarm_prob: 0.1,
            false_alarm_mean: 2.0,
            intensity_noise: 0.4,
            lead_growth: 0.1,
            temp_forecast_noise: 0.8,
            hargreaves: HargreavesParams::default(),
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let prob = |n: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Validation(format!("{n} must lie in [0, 1], got {v}")))
            }
        };
        prob("wet_prob", self.wet_prob)?;
        prob("miss_prob", self.miss_prob)?;
        prob("false_alarm_prob", self.false_alarm_prob)?;
        for (n, v) in [
            ("period_hours", self.period_hours),
            ("p_max", self.p_max),
            ("mean_intensity", self.mean_intensity),
            ("false_alarm_mean", self.false_alarm_mean),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{n} must be > 0, got {v}")));
            }
        }
        for (n, v) in [
            ("temp_noise", self.temp_noise),
            ("et_noise", self.et_noise),
            ("intensity_noise", self.intensity_noise),
            ("lead_growth", self.lead_growth),
            ("temp_forecast_noise", self.temp_forecast_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Validation(format!("{n} must be >= 0, got {v}")));
            }
        }
        if self.leads == 0 {
            return Err(Error::Validation("leads must be >= 1".into()));
        }
        self.hargreaves.validate()
    }
}

/// Number of periods between `start` and `start + months`.
pub fn periods_in(start: NaiveDate, months: u32, period_hours: f64) -> Result<usize> {
    let end = start
        .checked_add_months(Months::new(months))
        .ok_or_else(|| Error::Validation("date range overflows".into()))?;
    let hours = (end - start).num_hours() as f64;
    Ok((hours / period_hours).floor() as usize)
}

/// Realized series first, then forecasts per lead drawn around the realized
/// values, so every forecast and realization lies in `[0, p_max]`.
pub fn generate_synthetic_weather(
    seed: u64,
    start: NaiveDate,
    months: u32,
    params: &SynthParams,
) -> Result<Vec<WeatherRecord>> {
    params.validate()?;
    if months == 0 {
        return Err(Error::Validation("months must be >= 1".into()));
    }
    let n = periods_in(start, months, params.period_hours)?;
    let total = n + params.leads;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0: DateTime<Utc> = start.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
    let step = chrono::Duration::milliseconds((params.period_hours * 3.6e6).round() as i64);
    let stamps: Vec<DateTime<Utc>> = (0..total).map(|i| t0 + step * i as i32).collect();

    let intensity = Exp::new(1.0 / params.mean_intensity).map_err(|e| Error::Validation(e.to_string()))?;
    let false_alarm = Exp::new(1.0 / params.false_alarm_mean).map_err(|e| Error::Validation(e.to_string()))?;
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut p_true = Vec::with_capacity(total);
    let mut t_true = Vec::with_capacity(total);
    let mut e_true = Vec::with_capacity(total);
    let mut ar = 0.0;
    for ts in &stamps {
        let wet = rng.random::<f64>() < params.wet_prob;
        let p = if wet { intensity.sample(&mut rng).min(params.p_max) } else { 0.0 };
        let doy = ts.ordinal() as f64;
        let hour = ts.hour() as f64 + params.period_hours / 2.0;
        ar = 0.8 * ar + 0.6 * params.temp_noise * std_normal.sample(&mut rng);
        let temp = params.temp_mean
            + params.temp_seasonal_amp * (2.0 * std::f64::consts::PI * (doy - 200.0) / 365.0).cos()
            + params.temp_diurnal_amp * (2.0 * std::f64::consts::PI * (hour - 15.0) / 24.0).cos()
            + ar;
        let et = hargreaves_et(temp, &params.hargreaves)? * (params.et_noise * std_normal.sample(&mut rng)).exp();
        p_true.push(p);
        t_true.push(temp);
        e_true.push(et);
    }

    let mut out = Vec::with_capacity(n);
    for s in 0..n {
        let bias = 0.5 * params.temp_forecast_noise * std_normal.sample(&mut rng);
        let mut p_fc = Vec::with_capacity(params.leads);
        let mut t_fc = Vec::with_capacity(params.leads);
        for k in 0..params.leads {
            let grow = 1.0 + params.lead_growth * k as f64;
            let target = s + k;
            let truth = p_true[target];
            let p_hat = if truth > 0.0 {
                if rng.random::<f64>() < (params.miss_prob * grow).min(1.0) {
                    0.0
                } else {
                    (truth * (params.intensity_noise * grow * std_normal.sample(&mut rng)).exp()).min(params.p_max)
                }
            } else if rng.random::<f64>() < (params.false_alarm_prob * grow).min(1.0) {
                false_alarm.sample(&mut rng).min(params.p_max)
            } else {
                0.0
            };
            p_fc.push(p_hat);
            t_fc.push(t_true[target] + bias + params.temp_forecast_noise * grow * std_normal.sample(&mut rng));
        }
        out.push(WeatherRecord {
            timestamp: stamps[s],
            p_forecast: p_fc,
            p_measured: Some(p_true[s]),
            t_forecast: t_fc,
            t_measured: Some(t_true[s]),
            et_measured: Some(e_true[s]),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn may(y: i32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, 5, 1).unwrap()
    }

    #[test]
    fn six_months_of_six_hour_periods() {
        assert_eq!(periods_in(may(2016), 6, 6.0).unwrap(), 184 * 4);
        let recs = generate_synthetic_weather(1, may(2016), 6, &SynthParams::default()).unwrap();
        assert_eq!(recs.len(), 736);
    }

    #[test]
    fn bounds_and_determinism() {
        let p = SynthParams::default();
        let a = generate_synthetic_weather(7, may(2017), 2, &p).unwrap();
        let b = generate_synthetic_weather(7, may(2017), 2, &p).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_weather(8, may(2017), 2, &p).unwrap();
        assert_ne!(a, c);
        for (i, r) in a.iter().enumerate() {
            let pm = r.p_measured.unwrap();
            assert!((0.0..=p.p_max).contains(&pm));
            for (k, f) in r.p_forecast.iter().enumerate() {
                assert!((0.0..=p.p_max).contains(f));
                if let Some(target) = a.get(i + k) {
                    assert!(target.p_measured.unwrap() - f >= -f);
                }
            }
        }
    }

    #[test]
    fn rain_frequency_matches_rate() {
        let p = SynthParams::default();
        let recs = generate_synthetic_weather(3, may(2016), 6, &p).unwrap();
        let n = recs.len() as f64;
        let wet = recs.iter().filter(|r| r.p_measured.unwrap() > 0.0).count() as f64;
        let sigma = (p.wet_prob * (1.0 - p.wet_prob) / n).sqrt();
        assert!((wet / n - p.wet_prob).abs() <= 3.0 * sigma, "{}", wet / n);
    }
}
