//! The building environment: one day of device control as a Markov decision process.
//!
//! Each step the agent chooses an [`ActionTriple`]: curtail the air
//! conditioner, charge the EV, start the dishwasher. The environment applies
//! the device rules, records the realised device series and counts the
//! agent's actions. Rewards are computed once per day from a
//! [`DaySummary`](crate::rewards::DaySummary), not per step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::daily_cost;
use crate::profiles::{energy_kwh, DayProfile, TariffSchedule, TimeGrid};
use crate::rewards::DaySummary;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceKind {
    /// Energy can be curtailed (air conditioning).
    TimeScaling,
    /// Fixed energy, movable, uninterruptible (dishwasher).
    TimeShifting,
    /// Movable and sessionable (EV charging).
    ScalingAndShifting,
}

/// Flexibility contract of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    pub kind: DeviceKind,
    /// Power drawn while running, kW.
    pub power_kw: f64,
    /// Daily energy budget. `None` takes the day's nominal energy.
    #[serde(default)]
    pub budget_kwh: Option<f64>,
    /// Uninterruptible cycle length in steps (time-shifting devices).
    #[serde(default)]
    pub cycle_steps: usize,
    /// `[lo, hi]` daily action counts that earn the positive count reward.
    #[serde(default = "default_band")]
    pub count_band: (u32, u32),
    /// Targeted charging sessions per day (EV).
    #[serde(default)]
    pub target_sessions: u32,
    /// A disabled device ignores actions and follows its nominal series.
    #[serde(default = "default_true")]
    pub enabled: bool,
}

fn default_band() -> (u32, u32) {
    (1, 1)
}

fn default_true() -> bool {
    true
}

impl DeviceSpec {
    pub fn air_conditioner(power_kw: f64) -> Self {
        Self {
            kind: DeviceKind::TimeScaling,
            power_kw,
            budget_kwh: None,
            cycle_steps: 0,
            count_band: (1, 10),
            target_sessions: 0,
            enabled: true,
        }
    }

    pub fn electric_vehicle(power_kw: f64, target_sessions: u32) -> Self {
        Self {
            kind: DeviceKind::ScalingAndShifting,
            power_kw,
            budget_kwh: None,
            cycle_steps: 0,
            count_band: (target_sessions, target_sessions),
            target_sessions,
            enabled: true,
        }
    }

    pub fn dishwasher(power_kw: f64, cycle_steps: usize) -> Self {
        Self {
            kind: DeviceKind::TimeShifting,
            power_kw,
            budget_kwh: None,
            cycle_steps,
            count_band: (1, 2),
            target_sessions: 0,
            enabled: true,
        }
    }

    pub fn disabled(mut self) -> Self {
        self.enabled = false;
        self
    }

    fn validate(&self, name: &str, grid: TimeGrid) -> Result<()> {
        if !(self.power_kw.is_finite() && self.power_kw >= 0.0) {
            return Err(Error::Config(format!("{name}: power must be non-negative")));
        }
        if self.budget_kwh.is_some_and(|b| !(b.is_finite() && b >= 0.0)) {
            return Err(Error::Config(format!("{name}: budget must be non-negative")));
        }
        if self.kind == DeviceKind::TimeShifting && !(1..=grid.steps()).contains(&self.cycle_steps) {
            return Err(Error::Config(format!("{name}: cycle of {} steps does not fit the day", self.cycle_steps)));
        }
        if self.count_band.0 > self.count_band.1 {
            return Err(Error::Config(format!("{name}: count band {:?} is inverted", self.count_band)));
        }
        Ok(())
    }

    /// Budget for a day whose nominal series is `nominal`.
    pub fn daily_budget(&self, nominal: &[f64], grid: TimeGrid) -> f64 {
        self.budget_kwh.unwrap_or_else(|| energy_kwh(nominal, grid))
    }
}

/// The three controllable devices of a building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Devices {
    pub ac: DeviceSpec,
    pub ev: DeviceSpec,
    pub dw: DeviceSpec,
}

impl Devices {
    /// Devices matching a synthetic household on `grid`.
    pub fn from_synthetic(params: &crate::profiles::SyntheticHouseholdParams) -> Self {
        Self {
            ac: DeviceSpec::air_conditioner(params.ac_block_kw),
            ev: DeviceSpec::electric_vehicle(params.ev_power_kw, 1),
            dw: DeviceSpec::dishwasher(params.dw_power_kw, params.dw_cycle_steps),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    PeakReduction,
    CostMinimization,
}

impl Problem {
    /// Width of the encoded state.
    pub fn state_dim(self) -> usize {
        match self {
            Problem::PeakReduction => 11,
            Problem::CostMinimization => 12,
        }
    }
}

/// Per-series divisors applied when encoding states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub base: f64,
    pub pv: f64,
    pub ac: f64,
    pub ev: f64,
    pub dw: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self { base: 1.0, pv: 1.0, ac: 1.0, ev: 1.0, dw: 1.0 }
    }
}

impl Normalization {
    /// Maxima of each series over `days`; device scalars also cover the device power.
    pub fn from_days(days: &[DayProfile], devices: &Devices) -> Self {
        let max_of =
            |f: fn(&DayProfile) -> &Vec<f64>| days.iter().flat_map(|d| f(d).iter().copied()).fold(0.0, f64::max);
        let nonzero = |v: f64| if v > 0.0 { v } else { 1.0 };
        Self {
            base: nonzero(max_of(|d| &d.base_load)),
            pv: nonzero(max_of(|d| &d.pv)),
            ac: nonzero(max_of(|d| &d.ac_nominal).max(devices.ac.power_kw)),
            ev: nonzero(max_of(|d| &d.ev_nominal).max(devices.ev.power_kw)),
            dw: nonzero(max_of(|d| &d.dw_nominal).max(devices.dw.power_kw)),
        }
    }

    fn validate(&self) -> Result<()> {
        let all = [self.base, self.pv, self.ac, self.ev, self.dw];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("normalization scalars must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub problem: Problem,
    pub grid: TimeGrid,
    pub devices: Devices,
    /// Force-charge any EV deficit into the latest free steps at day end.
    #[serde(default = "default_true")]
    pub ev_enforce_budget: bool,
    /// Start an unstarted dishwasher cycle at the last feasible step.
    #[serde(default = "default_true")]
    pub dw_force_start: bool,
    #[serde(default)]
    pub normalization: Normalization,
}

impl EnvConfig {
    pub fn new(problem: Problem, grid: TimeGrid, devices: Devices) -> Self {
        Self {
            problem,
            grid,
            devices,
            ev_enforce_budget: true,
            dw_force_start: true,
            normalization: Normalization::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.devices.ac.validate("ac", self.grid)?;
        self.devices.ev.validate("ev", self.grid)?;
        self.devices.dw.validate("dw", self.grid)?;
        self.normalization.validate()
    }

    pub fn state_dim(&self) -> usize {
        self.problem.state_dim()
    }
}

/// Number of times the agent performed each action during the day.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCounts {
    /// AC curtailment steps.
    pub ac: u32,
    /// EV idle-to-charging transitions.
    pub ev: u32,
    /// Dishwasher cycles started by the agent.
    pub dw: u32,
}

/// On/off decision for each device at one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionTriple {
    /// Stop the air conditioner.
    pub ac: bool,
    /// Charge the EV.
    pub ev: bool,
    /// Start the dishwasher.
    pub dw: bool,
}

/// Number of combined actions, `2^3`.
pub const COMBINED_ACTIONS: usize = 8;

impl ActionTriple {
    pub const fn new(ac: bool, ev: bool, dw: bool) -> Self {
        Self { ac, ev, dw }
    }

    /// Combined-action index with the AC flag as bit 0, EV bit 1, dishwasher bit 2.
    pub fn index(self) -> usize {
        usize::from(self.ac) | usize::from(self.ev) << 1 | usize::from(self.dw) << 2
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index >= COMBINED_ACTIONS {
            return Err(Error::Bounds { index, len: COMBINED_ACTIONS });
        }
        Ok(Self { ac: index & 1 != 0, ev: index & 2 != 0, dw: index & 4 != 0 })
    }

    pub fn as_array(self) -> [bool; 3] {
        [self.ac, self.ev, self.dw]
    }

    pub fn from_array(flags: [bool; 3]) -> Self {
        Self { ac: flags[0], ev: flags[1], dw: flags[2] }
    }
}

pub fn decode_combined_action(index: usize) -> Result<ActionTriple> {
    ActionTriple::from_index(index)
}

/// Normalised RL input: `t`, then base, PV, AC, EV and dishwasher at `t-1`
/// and `t`, and for cost problems the buy price at `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: StateVector,
    pub action: ActionTriple,
    pub reward: f64,
    pub next_state: StateVector,
    pub done: bool,
}

/// Mutable state of one simulated day.
///
/// The `ac`, `ev` and `dw` series start as copies of the nominal series;
/// each step overwrites its entry with the realised value.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    t: usize,
    day: DayProfile,
    pub ac: Vec<f64>,
    pub ev: Vec<f64>,
    pub dw: Vec<f64>,
    pub ev_delivered_kwh: f64,
    pub ev_budget_kwh: f64,
    pub dw_remaining: usize,
    pub dw_started: bool,
    dw_available: bool,
    pub counts: ActionCounts,
    pub ev_charging: bool,
}

impl EnvState {
    pub fn reset(config: &EnvConfig, day: &DayProfile) -> Result<Self> {
        day.validate(config.grid.steps())?;
        let devices = &config.devices;
        let ev_budget_kwh = devices.ev.daily_budget(&day.ev_nominal, config.grid);
        let dw_available = devices.dw.daily_budget(&day.dw_nominal, config.grid) > EPS && devices.dw.cycle_steps > 0;
        Ok(Self {
            t: 0,
            day: day.clone(),
            ac: day.ac_nominal.clone(),
            ev: day.ev_nominal.clone(),
            dw: day.dw_nominal.clone(),
            ev_delivered_kwh: 0.0,
            ev_budget_kwh,
            dw_remaining: 0,
            dw_started: false,
            dw_available,
            counts: ActionCounts::default(),
            ev_charging: false,
        })
    }

    #[inline]
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn day(&self) -> &DayProfile {
        &self.day
    }

    pub fn steps(&self) -> usize {
        self.day.steps()
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.steps()
    }

    /// Applies `action` at the current step and advances time. Returns `true`
    /// once the day is complete.
    pub fn step(&mut self, config: &EnvConfig, action: ActionTriple) -> Result<bool> {
        if self.is_done() {
            return Err(Error::State(format!("day {} already finished", self.day.date)));
        }
        let t = self.t;
        let steps = self.steps();
        let dt = config.grid.step_hours();
        let devices = &config.devices;

        // air conditioner: curtailed energy is lost
        if !devices.ac.enabled {
            self.ac[t] = self.day.ac_nominal[t];
        } else if action.ac && self.day.ac_nominal[t] > 0.0 {
            self.ac[t] = 0.0;
            self.counts.ac += 1;
        } else {
            self.ac[t] = self.day.ac_nominal[t];
        }

        // electric vehicle
        if !devices.ev.enabled {
            self.ev[t] = self.day.ev_nominal[t];
            self.ev_delivered_kwh += self.ev[t] * dt;
        } else {
            let deficit = self.ev_budget_kwh - self.ev_delivered_kwh;
            if action.ev && deficit > EPS && devices.ev.power_kw > 0.0 {
                let power = devices.ev.power_kw.min(deficit / dt);
                self.ev[t] = power;
                self.ev_delivered_kwh = (self.ev_delivered_kwh + power * dt).min(self.ev_budget_kwh);
                if !self.ev_charging {
                    self.counts.ev += 1;
                }
                self.ev_charging = true;
            } else {
                self.ev[t] = 0.0;
                self.ev_charging = false;
            }
        }

        // dishwasher: one uninterruptible cycle per day
        if !devices.dw.enabled {
            self.dw[t] = self.day.dw_nominal[t];
        } else {
            let cycle = devices.dw.cycle_steps;
            if !self.dw_started && self.dw_available && t + cycle <= steps {
                if action.dw {
                    self.dw_started = true;
                    self.dw_remaining = cycle;
                    self.counts.dw += 1;
                } else if config.dw_force_start && t + cycle == steps {
                    self.dw_started = true;
                    self.dw_remaining = cycle;
                }
            }
            if self.dw_remaining > 0 {
                self.dw[t] = devices.dw.power_kw;
                self.dw_remaining -= 1;
            } else {
                self.dw[t] = 0.0;
            }
        }

        if t + 1 == steps && devices.ev.enabled && config.ev_enforce_budget {
            self.force_ev_budget(devices.ev.power_kw, dt);
        }

        self.t += 1;
        Ok(self.is_done())
    }

    /// Places the remaining EV energy into the latest idle steps.
    fn force_ev_budget(&mut self, power_kw: f64, dt: f64) {
        let mut deficit = self.ev_budget_kwh - self.ev_delivered_kwh;
        if deficit <= EPS || power_kw <= 0.0 {
            return;
        }
        for s in (0..self.steps()).rev() {
            if deficit <= EPS {
                break;
            }
            if self.ev[s] == 0.0 {
                let p = power_kw.min(deficit / dt);
                self.ev[s] = p;
                deficit -= p * dt;
            }
        }
        // budget above power x free steps: top up partially charged steps
        for s in (0..self.steps()).rev() {
            if deficit <= EPS {
                break;
            }
            let room = (power_kw - self.ev[s]).max(0.0);
            let p = room.min(deficit / dt);
            self.ev[s] += p;
            deficit -= p * dt;
        }
        self.ev_delivered_kwh = self.ev_budget_kwh - deficit.max(0.0);
    }

    /// Consumption minus generation over the realised steps (`0..t`).
    pub fn net_load(&self) -> Vec<f64> {
        (0..self.t).map(|s| self.day.base_load[s] + self.ac[s] + self.ev[s] + self.dw[s] - self.day.pv[s]).collect()
    }

    /// Base load plus realised device consumption over `0..t`.
    pub fn consumption(&self) -> Vec<f64> {
        (0..self.t).map(|s| self.day.base_load[s] + self.ac[s] + self.ev[s] + self.dw[s]).collect()
    }

    /// End-of-day summary feeding the reward. Requires a finished day.
    pub fn summary(&self, config: &EnvConfig, tariff: &TariffSchedule) -> Result<DaySummary> {
        if !self.is_done() {
            return Err(Error::State(format!("day {} is still running at step {}", self.day.date, self.t)));
        }
        let grid = config.grid;
        let original_cost = daily_cost(&self.day.nominal_consumption(), &self.day.pv, tariff, grid)?;
        let optimized_cost = daily_cost(&self.consumption(), &self.day.pv, tariff, grid)?;
        Ok(DaySummary {
            original_net_load: self.day.nominal_net_load(),
            optimized_net_load: self.net_load(),
            original_ac: self.day.ac_nominal.clone(),
            optimized_ac: self.ac.clone(),
            counts: self.counts,
            ev_target_sessions: config.devices.ev.target_sessions,
            original_cost: Some(original_cost),
            optimized_cost: Some(optimized_cost),
        })
    }
}

/// Encodes the RL state at the current step. A finished day encodes with the
/// time slot at 1 and every current-step slot at 0.
pub fn encode_state(state: &EnvState, config: &EnvConfig, tariff: &TariffSchedule) -> Result<StateVector> {
    config.normalization.validate()?;
    let n = &config.normalization;
    let steps = state.steps();
    let t = state.t;
    let day = &state.day;
    let mut v = Vec::with_capacity(config.state_dim());
    v.push(t as f64 / steps as f64);
    let pair = |series: &[f64], scale: f64, v: &mut Vec<f64>| {
        let prev = if t > 0 { series[t - 1] } else { 0.0 };
        let now = if t < steps { series[t] } else { 0.0 };
        v.push((prev / scale).clamp(0.0, 1.0));
        v.push((now / scale).clamp(0.0, 1.0));
    };
    pair(&day.base_load, n.base, &mut v);
    pair(&day.pv, n.pv, &mut v);
    pair(&state.ac, n.ac, &mut v);
    pair(&state.ev, n.ev, &mut v);
    pair(&state.dw, n.dw, &mut v);
    if config.problem == Problem::CostMinimization {
        if tariff.steps() != steps {
            return Err(Error::Shape(format!("tariff has {} steps, day has {steps}", tariff.steps())));
        }
        let max = tariff.max_buy();
        let price = if t < steps && max > 0.0 { tariff.buy_rate[t] / max } else { 0.0 };
        v.push(price);
    }
    Ok(StateVector(v))
}
