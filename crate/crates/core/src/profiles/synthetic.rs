use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DayProfile, TimeGrid};
use crate::error::{Error, Result};

/// Parameters of the seeded synthetic household.
///
/// The shapes follow typical metered households: a base load with morning
/// and evening bumps, a midday PV bell, an afternoon air-conditioning block,
/// an evening EV charging session and one dishwasher cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticHouseholdParams {
    pub base_peak_kw: f64,
    pub pv_peak_kw: f64,
    pub ac_block_kw: f64,
    /// `[start, end)` minutes since midnight.
    pub ac_window: (u32, u32),
    pub ev_power_kw: f64,
    pub ev_budget_kwh: f64,
    pub ev_start_minute: u32,
    /// Optional `[start, end)` minutes during which the car is plugged in.
    pub ev_available: Option<(u32, u32)>,
    pub dw_power_kw: f64,
    pub dw_cycle_steps: usize,
    pub dw_start_minute: u32,
    /// Relative standard deviation of per-step and per-day noise.
    pub noise_std: f64,
    /// Maximum shift of the EV and dishwasher start times, either direction.
    pub start_jitter_minutes: u32,
    pub seed: u64,
    pub start_date: NaiveDate,
}

impl Default for SyntheticHouseholdParams {
    fn default() -> Self {
        Self {
            base_peak_kw: 1.8,
            pv_peak_kw: 2.5,
            ac_block_kw: 1.2,
            ac_window: (14 * 60, 19 * 60),
            ev_power_kw: 1.4,
            ev_budget_kwh: 2.8,
            ev_start_minute: 19 * 60,
            ev_available: None,
            dw_power_kw: 0.8,
            dw_cycle_steps: 8,
            dw_start_minute: 20 * 60,
            noise_std: 0.1,
            start_jitter_minutes: 60,
            seed: 7,
            start_date: NaiveDate::from_ymd_opt(2016, 6, 1).expect("valid date"),
        }
    }
}

impl SyntheticHouseholdParams {
    /// Default household with a two-hour dishwasher cycle on `grid`.
    pub fn for_grid(grid: TimeGrid) -> Self {
        Self { dw_cycle_steps: ((120 / grid.step_minutes()) as usize).max(1), ..Self::default() }
    }

    pub fn validate(&self, grid: TimeGrid) -> Result<()> {
        let magnitudes = [
            ("base_peak_kw", self.base_peak_kw),
            ("pv_peak_kw", self.pv_peak_kw),
            ("ac_block_kw", self.ac_block_kw),
            ("ev_power_kw", self.ev_power_kw),
            ("ev_budget_kwh", self.ev_budget_kwh),
            ("dw_power_kw", self.dw_power_kw),
            ("noise_std", self.noise_std),
        ];
        for (name, v) in magnitudes {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if self.ev_budget_kwh > 0.0 {
            let window = match self.ev_available {
                Some((s, e)) if e > s => (e - s) as f64 / 60.0,
                Some(_) => return Err(Error::Config("empty EV availability window".into())),
                None => 24.0,
            };
            if self.ev_power_kw <= 0.0 || self.ev_budget_kwh > self.ev_power_kw * window + 1e-9 {
                return Err(Error::Config(format!(
                    "EV budget {} kWh cannot be delivered at {} kW",
                    self.ev_budget_kwh, self.ev_power_kw
                )));
            }
        }
        if self.dw_cycle_steps > grid.steps() {
            return Err(Error::Config(format!("dishwasher cycle of {} steps exceeds the day", self.dw_cycle_steps)));
        }
        Ok(())
    }
}

fn bump(hour: f64, centre: f64, width: f64) -> f64 {
    (-(hour - centre).powi(2) / (2.0 * width * width)).exp()
}

fn base_shape(hour: f64) -> f64 {
    0.3 + 0.5 * bump(hour, 7.5, 1.2) + 1.0 * bump(hour, 19.0, 1.5)
}

fn pv_shape(hour: f64) -> f64 {
    const SUNRISE: f64 = 6.5;
    const SUNSET: f64 = 19.5;
    if hour <= SUNRISE || hour >= SUNSET {
        0.0
    } else {
        (std::f64::consts::PI * (hour - SUNRISE) / (SUNSET - SUNRISE)).sin()
    }
}

fn jittered_step(rng: &mut ChaCha8Rng, minute: u32, jitter: u32, grid: TimeGrid) -> i64 {
    let max = (jitter / grid.step_minutes()) as i64;
    let shift = if max > 0 { rng.gen_range(-max..=max) } else { 0 };
    grid.step_of_minute(minute.min(1439)) as i64 + shift
}

/// Generates day `day_index` of the household. Output depends only on
/// `(params, grid, day_index)`.
pub fn generate_synthetic_day(params: &SyntheticHouseholdParams, grid: TimeGrid, day_index: u32) -> Result<DayProfile> {
    params.validate(grid)?;
    let steps = grid.steps();
    let dt = grid.step_hours();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(day_index as u64);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };

    let date = params
        .start_date
        .checked_add_days(Days::new(day_index as u64))
        .ok_or_else(|| Error::Config(format!("day {day_index} overflows the calendar")))?;
    let mut day = DayProfile::zeros(date, grid);

    // the shape peaks slightly above 1 near 19:00; normalise on a minute grid
    let shape_max = (0..1440).map(|m| base_shape(m as f64 / 60.0)).fold(0.0, f64::max);
    let day_factor = (1.0 + params.noise_std * normal()).max(0.2);
    let cloud = (1.0 - 2.0 * params.noise_std * normal().abs()).clamp(0.2, 1.0);
    for t in 0..steps {
        let h = grid.mid_hour(t);
        let noise = (1.0 + params.noise_std * normal()).max(0.0);
        day.base_load[t] = params.base_peak_kw * base_shape(h) / shape_max * day_factor * noise;
        day.pv[t] = params.pv_peak_kw * pv_shape(h) * cloud;
        let minute = grid.start_minute(t);
        if minute >= params.ac_window.0 && minute < params.ac_window.1 {
            day.ac_nominal[t] = params.ac_block_kw;
        }
    }

    if params.ev_budget_kwh > 0.0 {
        let full = (params.ev_budget_kwh / (params.ev_power_kw * dt) + 1e-9).floor() as usize;
        let remainder = params.ev_budget_kwh - full as f64 * params.ev_power_kw * dt;
        let partial = remainder > 1e-9;
        let n = full + usize::from(partial);
        let (lo, hi) = match params.ev_available {
            Some((s, e)) => {
                let lo = grid.step_of_minute(s) as i64;
                let hi = (e as i64 + grid.step_minutes() as i64 - 1) / grid.step_minutes() as i64;
                (lo, hi.min(steps as i64))
            }
            None => (0, steps as i64),
        };
        let start = jittered_step(&mut rng, params.ev_start_minute, params.start_jitter_minutes, grid)
            .min(hi - n as i64)
            .max(lo) as usize;
        for t in start..start + full {
            day.ev_nominal[t] = params.ev_power_kw;
        }
        if partial {
            day.ev_nominal[start + full] = remainder / dt;
        }
    } else {
        // keep the stream position independent of the EV branch
        let _ = jittered_step(&mut rng, params.ev_start_minute, params.start_jitter_minutes, grid);
    }

    let cycle = params.dw_cycle_steps;
    let dw_start = jittered_step(&mut rng, params.dw_start_minute, params.start_jitter_minutes, grid)
        .clamp(0, (steps - cycle) as i64) as usize;
    if params.dw_power_kw > 0.0 && cycle > 0 {
        day.dw_nominal[dw_start..dw_start + cycle].fill(params.dw_power_kw);
    }

    day.validate(steps)?;
    Ok(day)
}

/// Days `first..first + count` of the household.
pub fn generate_synthetic_days(
    params: &SyntheticHouseholdParams,
    grid: TimeGrid,
    first: u32,
    count: u32,
) -> Result<Vec<DayProfile>> {
    (first..first + count).map(|i| generate_synthetic_day(params, grid, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::energy_kwh;

    #[test]
    fn zero_pv_peak_gives_zero_pv() {
        let p = SyntheticHouseholdParams { pv_peak_kw: 0.0, ..Default::default() };
        let day = generate_synthetic_day(&p, TimeGrid::QUARTER_HOUR, 3).unwrap();
        assert!(day.pv.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_per_seed_and_day() {
        let p = SyntheticHouseholdParams::default();
        let a = generate_synthetic_day(&p, TimeGrid::QUARTER_HOUR, 11).unwrap();
        let b = generate_synthetic_day(&p, TimeGrid::QUARTER_HOUR, 11).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_day(&p, TimeGrid::QUARTER_HOUR, 12).unwrap();
        assert_ne!(a.base_load, c.base_load);
    }

    #[test]
    fn ev_two_hours_at_quarter_hour() {
        let p = SyntheticHouseholdParams { ev_power_kw: 3.3, ev_budget_kwh: 6.6, ..Default::default() };
        let day = generate_synthetic_day(&p, TimeGrid::QUARTER_HOUR, 0).unwrap();
        assert_eq!(day.ev_nominal.iter().filter(|&&v| v > 0.0).count(), 8);
        assert!((energy_kwh(&day.ev_nominal, TimeGrid::QUARTER_HOUR) - 6.6).abs() < 1e-9);
    }

    #[test]
    fn partial_ev_step_keeps_budget() {
        let p = SyntheticHouseholdParams { ev_power_kw: 3.3, ev_budget_kwh: 5.0, ..Default::default() };
        let day = generate_synthetic_day(&p, TimeGrid::QUARTER_HOUR, 4).unwrap();
        assert!((energy_kwh(&day.ev_nominal, TimeGrid::QUARTER_HOUR) - 5.0).abs() < 1e-9);
        assert!(day.ev_nominal.iter().all(|&v| v <= 3.3));
    }

    #[test]
    fn availability_window_confines_charging() {
        let p = SyntheticHouseholdParams { ev_available: Some((60, 5 * 60)), ..Default::default() };
        for i in 0..10 {
            let day = generate_synthetic_day(&p, TimeGrid::QUARTER_HOUR, i).unwrap();
            for (t, &v) in day.ev_nominal.iter().enumerate() {
                if v > 0.0 {
                    assert!((4..20).contains(&t), "day {i} charges at step {t}");
                }
            }
        }
    }

    #[test]
    fn dishwasher_is_one_block() {
        let p = SyntheticHouseholdParams::for_grid(TimeGrid::QUARTER_HOUR);
        let day = generate_synthetic_day(&p, TimeGrid::QUARTER_HOUR, 5).unwrap();
        let on: Vec<usize> = (0..96).filter(|&t| day.dw_nominal[t] > 0.0).collect();
        assert_eq!(on.len(), 8);
        assert_eq!(on.last().unwrap() - on[0], 7);
    }

    #[test]
    fn afternoon_ac_block_and_midday_pv() {
        let grid = TimeGrid::HOURLY;
        let day = generate_synthetic_day(&SyntheticHouseholdParams::for_grid(grid), grid, 0).unwrap();
        assert!(day.ac_nominal[15] > 0.0 && day.ac_nominal[10] == 0.0 && day.ac_nominal[20] == 0.0);
        assert!(day.pv[13] > day.pv[8] && day.pv[2] == 0.0);
        // evening bump exceeds night load
        assert!(day.base_load[19] > 2.0 * day.base_load[3]);
    }

    #[test]
    fn rejects_undeliverable_budget() {
        let p = SyntheticHouseholdParams { ev_power_kw: 1.0, ev_budget_kwh: 30.0, ..Default::default() };
        assert!(generate_synthetic_day(&p, TimeGrid::HOURLY, 0).is_err());
    }
}
