//! Household power profiles and time-of-use tariffs.
//!
//! A [`DayProfile`] holds one calendar day of per-step power series: the
//! fixed base load, on-site PV generation and the nominal (uncontrolled)
//! consumption of the three flexible devices. Profiles come either from a
//! smart-meter CSV export ([`load_profiles_csv`]) or from the seeded
//! synthetic generator ([`generate_synthetic_day`]).

mod csv;
mod synthetic;
mod tariff;

pub use self::csv::{load_profiles_csv, read_profiles_csv, write_profiles_csv};
pub use self::synthetic::{generate_synthetic_day, generate_synthetic_days, SyntheticHouseholdParams};
pub use self::tariff::{TariffBook, TariffPeriod, TariffPeriodsConfig, TariffSchedule};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MINUTES_PER_DAY: u32 = 1440;

/// Discretisation of one day into equal steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct TimeGrid {
    steps_per_day: usize,
    step_minutes: u32,
}

#[derive(Deserialize)]
struct RawGrid {
    steps_per_day: usize,
    step_minutes: u32,
}

impl TryFrom<RawGrid> for TimeGrid {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        TimeGrid::new(raw.steps_per_day, raw.step_minutes)
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self::QUARTER_HOUR
    }
}

impl TimeGrid {
    /// 96 steps of 15 minutes.
    pub const QUARTER_HOUR: TimeGrid = TimeGrid { steps_per_day: 96, step_minutes: 15 };
    /// 24 steps of one hour.
    pub const HOURLY: TimeGrid = TimeGrid { steps_per_day: 24, step_minutes: 60 };

    pub fn new(steps_per_day: usize, step_minutes: u32) -> Result<Self> {
        if steps_per_day < 2 {
            return Err(Error::Config(format!("a day needs at least 2 steps, got {steps_per_day}")));
        }
        if steps_per_day as u64 * step_minutes as u64 != MINUTES_PER_DAY as u64 {
            return Err(Error::Config(format!(
                "{steps_per_day} steps of {step_minutes} min do not cover 1440 minutes"
            )));
        }
        Ok(Self { steps_per_day, step_minutes })
    }

    /// Grid with `steps_per_day` equal steps.
    pub fn with_steps(steps_per_day: usize) -> Result<Self> {
        if steps_per_day == 0 || !(MINUTES_PER_DAY as usize).is_multiple_of(steps_per_day) {
            return Err(Error::Config(format!("1440 minutes cannot be split into {steps_per_day} steps")));
        }
        Self::new(steps_per_day, MINUTES_PER_DAY / steps_per_day as u32)
    }

    #[inline]
    pub fn steps(&self) -> usize {
        self.steps_per_day
    }

    #[inline]
    pub fn step_minutes(&self) -> u32 {
        self.step_minutes
    }

    /// Step length in hours (converts kW to kWh).
    #[inline]
    pub fn step_hours(&self) -> f64 {
        self.step_minutes as f64 / 60.0
    }

    /// Minute of the day at which `step` begins.
    #[inline]
    pub fn start_minute(&self, step: usize) -> u32 {
        step as u32 * self.step_minutes
    }

    /// Hour of day at the middle of `step`.
    #[inline]
    pub fn mid_hour(&self, step: usize) -> f64 {
        (step as f64 + 0.5) * self.step_hours()
    }

    /// Step containing `minute` (minutes since midnight).
    #[inline]
    pub fn step_of_minute(&self, minute: u32) -> usize {
        (minute / self.step_minutes) as usize
    }
}

/// One calendar day of power series, all in kW, each of length `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayProfile {
    pub date: NaiveDate,
    pub base_load: Vec<f64>,
    pub pv: Vec<f64>,
    pub ac_nominal: Vec<f64>,
    pub ev_nominal: Vec<f64>,
    pub dw_nominal: Vec<f64>,
}

impl DayProfile {
    /// Builds a profile, checking lengths and that every sample is finite and non-negative.
    pub fn new(
        date: NaiveDate,
        base_load: Vec<f64>,
        pv: Vec<f64>,
        ac_nominal: Vec<f64>,
        ev_nominal: Vec<f64>,
        dw_nominal: Vec<f64>,
    ) -> Result<Self> {
        let profile = Self { date, base_load, pv, ac_nominal, ev_nominal, dw_nominal };
        profile.validate(profile.base_load.len())?;
        Ok(profile)
    }

    /// Zero everywhere.
    pub fn zeros(date: NaiveDate, grid: TimeGrid) -> Self {
        let z = vec![0.0; grid.steps()];
        Self { date, base_load: z.clone(), pv: z.clone(), ac_nominal: z.clone(), ev_nominal: z.clone(), dw_nominal: z }
    }

    pub fn steps(&self) -> usize {
        self.base_load.len()
    }

    pub fn validate(&self, steps: usize) -> Result<()> {
        for (name, series) in self.named_series() {
            if series.len() != steps {
                return Err(Error::Shape(format!(
                    "{} series `{name}` has {} samples, expected {steps}",
                    self.date,
                    series.len()
                )));
            }
            if let Some(v) = series.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::Config(format!("{} series `{name}` holds invalid sample {v}", self.date)));
            }
        }
        Ok(())
    }

    pub fn named_series(&self) -> [(&'static str, &[f64]); 5] {
        [
            ("base_load", &self.base_load),
            ("pv", &self.pv),
            ("ac", &self.ac_nominal),
            ("ev", &self.ev_nominal),
            ("dw", &self.dw_nominal),
        ]
    }

    /// Uncontrolled consumption: base plus nominal device loads.
    pub fn nominal_consumption(&self) -> Vec<f64> {
        (0..self.steps())
            .map(|t| self.base_load[t] + self.ac_nominal[t] + self.ev_nominal[t] + self.dw_nominal[t])
            .collect()
    }

    /// Uncontrolled net load (consumption minus generation).
    pub fn nominal_net_load(&self) -> Vec<f64> {
        self.nominal_consumption().iter().zip(&self.pv).map(|(c, g)| c - g).collect()
    }
}

/// Energy in kWh of a power series sampled on `grid`.
pub fn energy_kwh(series: &[f64], grid: TimeGrid) -> f64 {
    series.iter().sum::<f64>() * grid.step_hours()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_invariants() {
        assert!(TimeGrid::new(96, 15).is_ok());
        assert!(TimeGrid::new(95, 15).is_err());
        assert!(TimeGrid::new(1, 1440).is_err());
        assert_eq!(TimeGrid::with_steps(24).unwrap(), TimeGrid::HOURLY);
        assert!(TimeGrid::with_steps(7).is_err());
        assert_eq!(TimeGrid::QUARTER_HOUR.step_hours(), 0.25);
        assert_eq!(TimeGrid::QUARTER_HOUR.step_of_minute(15 * 60), 60);
    }

    #[test]
    fn grid_rejects_bad_json() {
        let bad: std::result::Result<TimeGrid, _> = serde_json::from_str(r#"{"steps_per_day":10,"step_minutes":10}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn profile_rejects_negative_and_short_series() {
        let date = NaiveDate::from_ymd_opt(2016, 7, 1).unwrap();
        let ok = vec![0.0; 4];
        assert!(DayProfile::new(date, ok.clone(), ok.clone(), ok.clone(), ok.clone(), ok.clone()).is_ok());
        let neg = vec![0.0, -0.1, 0.0, 0.0];
        assert!(matches!(
            DayProfile::new(date, ok.clone(), neg, ok.clone(), ok.clone(), ok.clone()),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            DayProfile::new(date, ok.clone(), ok.clone(), vec![0.0; 3], ok.clone(), ok),
            Err(Error::Shape(_))
        ));
    }
}
