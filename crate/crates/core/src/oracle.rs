//! Reference schedulers.
//!
//! [`exhaustive_schedule`] enumerates every feasible device schedule of one
//! day and returns the best; it is limited to small instances.
//! [`greedy_valley_fill`] scales to any day. Both score a day by its peak
//! net load or by its cost.

use serde::{Deserialize, Serialize};

use crate::agent::{evaluate_policy, AgentRng, RandomPolicy};
use crate::env::{DeviceSpec, Devices};
use crate::error::{Error, Result};
use crate::metrics::{daily_cost, daily_peak, BuildingEvaluation, DayEvaluation, Method};
use crate::profiles::{DayProfile, TariffSchedule, TimeGrid};
use crate::rewards::RewardCoefficients;
use crate::scenario::Household;
use rand::RngCore;

/// Largest search space [`exhaustive_schedule`] accepts.
pub const EXHAUSTIVE_LIMIT: u128 = 10_000_000;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Peak,
    Cost,
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "peak" => Ok(Self::Peak),
            "cost" => Ok(Self::Cost),
            other => Err(Error::Config(format!("unknown objective `{other}` (expected peak or cost)"))),
        }
    }
}

/// Device decisions for one day. Disabled devices keep their nominal series.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleCandidate {
    pub dw_start: Option<usize>,
    /// Ascending charging steps; the last one may be partial.
    pub ev_steps: Vec<usize>,
    /// Ascending curtailed AC steps.
    pub ac_curtailed: Vec<usize>,
}

/// Device series realised by a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Realized {
    pub ac: Vec<f64>,
    pub ev: Vec<f64>,
    pub dw: Vec<f64>,
    pub net_load: Vec<f64>,
    pub consumption: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleResult {
    pub objective: Objective,
    pub candidate: ScheduleCandidate,
    pub value: f64,
    pub realized: Realized,
    /// Candidates scored.
    pub evaluated: u64,
}

/// What each device can do on a given day.
#[derive(Debug, Clone)]
struct Flexibility {
    ac_on: Vec<usize>,
    ac_max: usize,
    ev_units: usize,
    ev_budget: f64,
    dw_starts: Option<usize>,
}

fn flexibility(day: &DayProfile, devices: &Devices, grid: TimeGrid) -> Result<Flexibility> {
    let steps = grid.steps();
    day.validate(steps)?;
    let dt = grid.step_hours();
    let (ac_on, ac_max) = if devices.ac.enabled {
        let on: Vec<usize> = (0..steps).filter(|&t| day.ac_nominal[t] > 0.0).collect();
        let max = (devices.ac.count_band.1 as usize).min(on.len());
        (on, max)
    } else {
        (Vec::new(), 0)
    };
    let (ev_units, ev_budget) = if devices.ev.enabled {
        let budget = devices.ev.daily_budget(&day.ev_nominal, grid);
        let per_step = devices.ev.power_kw * dt;
        if budget <= EPS || per_step <= 0.0 {
            (0, 0.0)
        } else {
            let units = (budget / per_step - EPS).ceil().max(1.0) as usize;
            if units > steps {
                return Err(Error::Config(format!(
                    "EV budget {budget} kWh does not fit {steps} steps at {} kW",
                    devices.ev.power_kw
                )));
            }
            (units, budget)
        }
    } else {
        (0, 0.0)
    };
    let dw_starts = if devices.dw.enabled
        && devices.dw.cycle_steps > 0
        && devices.dw.cycle_steps <= steps
        && devices.dw.daily_budget(&day.dw_nominal, grid) > EPS
    {
        Some(steps - devices.dw.cycle_steps + 1)
    } else {
        None
    };
    Ok(Flexibility { ac_on, ac_max, ev_units, ev_budget, dw_starts })
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i + 1) as u128;
    }
    acc
}

/// Number of candidates [`exhaustive_schedule`] would score.
pub fn search_space(day: &DayProfile, devices: &Devices, grid: TimeGrid) -> Result<u128> {
    let f = flexibility(day, devices, grid)?;
    let dw = f.dw_starts.unwrap_or(1) as u128;
    let ev = binomial(grid.steps(), f.ev_units);
    let ac: u128 = (0..=f.ac_max).map(|k| binomial(f.ac_on.len(), k)).fold(0u128, |a, b| a.saturating_add(b));
    Ok(dw.saturating_mul(ev).saturating_mul(ac))
}

fn ev_series(steps: &[usize], budget: f64, spec: &DeviceSpec, grid: TimeGrid, len: usize) -> Vec<f64> {
    let dt = grid.step_hours();
    let mut out = vec![0.0; len];
    let mut left = budget;
    for &t in steps {
        let p = spec.power_kw.min(left / dt).max(0.0);
        out[t] = p;
        left -= p * dt;
    }
    out
}

/// Device series and net load of `candidate`.
pub fn realize(day: &DayProfile, devices: &Devices, grid: TimeGrid, candidate: &ScheduleCandidate) -> Result<Realized> {
    let steps = grid.steps();
    let f = flexibility(day, devices, grid)?;
    let mut ac = day.ac_nominal.clone();
    if devices.ac.enabled {
        if candidate.ac_curtailed.len() > f.ac_max {
            return Err(Error::Contract(format!(
                "{} AC curtailments exceed the limit {}",
                candidate.ac_curtailed.len(),
                f.ac_max
            )));
        }
        for &t in &candidate.ac_curtailed {
            if t >= steps || day.ac_nominal[t] <= 0.0 {
                return Err(Error::Contract(format!("AC is not running at step {t}")));
            }
            ac[t] = 0.0;
        }
    }
    let ev = if devices.ev.enabled {
        let mut sorted = candidate.ev_steps.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != f.ev_units || sorted.iter().any(|&t| t >= steps) {
            return Err(Error::Contract(format!("EV needs {} distinct charging steps", f.ev_units)));
        }
        ev_series(&sorted, f.ev_budget, &devices.ev, grid, steps)
    } else {
        day.ev_nominal.clone()
    };
    let dw = if !devices.dw.enabled {
        day.dw_nominal.clone()
    } else {
        let mut dw = vec![0.0; steps];
        match (f.dw_starts, candidate.dw_start) {
            (Some(n), Some(start)) if start < n => {
                dw[start..start + devices.dw.cycle_steps].fill(devices.dw.power_kw);
            }
            (None, None) => {}
            _ => return Err(Error::Contract("dishwasher start missing or out of range".into())),
        }
        dw
    };
    let consumption: Vec<f64> = (0..steps).map(|t| day.base_load[t] + ac[t] + ev[t] + dw[t]).collect();
    let net_load = consumption.iter().zip(&day.pv).map(|(c, g)| c - g).collect();
    Ok(Realized { ac, ev, dw, net_load, consumption })
}

fn score(objective: Objective, r: &Realized, day: &DayProfile, tariff: &TariffSchedule, grid: TimeGrid) -> Result<f64> {
    match objective {
        Objective::Peak => Ok(daily_peak(&r.net_load)),
        Objective::Cost => daily_cost(&r.consumption, &day.pv, tariff, grid),
    }
}

/// Advances `c` to the next `k`-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Scores one step's load in the objective: the step's net load for peak,
/// price-weighted for cost.
struct Scorer<'a> {
    objective: Objective,
    tariff: &'a TariffSchedule,
    pv: &'a [f64],
    dt: f64,
}

impl Scorer<'_> {
    fn value(&self, consumption: &[f64]) -> f64 {
        match self.objective {
            Objective::Peak => consumption.iter().zip(self.pv).map(|(c, g)| c - g).fold(0.0, f64::max),
            Objective::Cost => consumption
                .iter()
                .zip(self.pv)
                .enumerate()
                .map(|(t, (c, g))| (self.tariff.buy_rate[t] * c - self.tariff.sell_rate[t] * g) * self.dt)
                .sum(),
        }
    }
}

/// Globally best schedule by enumeration. Ties keep the first candidate in
/// order of dishwasher start, then EV step set (lexicographic), then AC
/// curtailment set (bitmask over the running steps).
pub fn exhaustive_schedule(
    day: &DayProfile,
    devices: &Devices,
    grid: TimeGrid,
    tariff: &TariffSchedule,
    objective: Objective,
) -> Result<ScheduleResult> {
    let size = search_space(day, devices, grid)?;
    if size > EXHAUSTIVE_LIMIT {
        return Err(Error::Capacity { size, limit: EXHAUSTIVE_LIMIT });
    }
    if tariff.steps() != grid.steps() {
        return Err(Error::Shape(format!("tariff has {} steps, grid {}", tariff.steps(), grid.steps())));
    }
    let f = flexibility(day, devices, grid)?;
    let steps = grid.steps();
    let scorer = Scorer { objective, tariff, pv: &day.pv, dt: grid.step_hours() };
    let fixed: Vec<f64> = (0..steps)
        .map(|t| {
            day.base_load[t]
                + if devices.ev.enabled { 0.0 } else { day.ev_nominal[t] }
                + if devices.dw.enabled { 0.0 } else { day.dw_nominal[t] }
        })
        .collect();
    let dw_options: Vec<Option<usize>> = match f.dw_starts {
        Some(n) => (0..n).map(Some).collect(),
        None => vec![None],
    };
    let ac_masks: Vec<u64> = {
        let m = f.ac_on.len();
        if m >= 64 {
            return Err(Error::Capacity { size: u128::MAX, limit: EXHAUSTIVE_LIMIT });
        }
        (0..1u64 << m).filter(|mask| mask.count_ones() as usize <= f.ac_max).collect()
    };

    let mut best: Option<(f64, ScheduleCandidate)> = None;
    let mut evaluated = 0u64;
    let mut load = vec![0.0; steps];
    let mut with_ev = vec![0.0; steps];
    for dw_start in &dw_options {
        let mut base = fixed.clone();
        if let Some(s) = dw_start {
            for v in &mut base[*s..*s + devices.dw.cycle_steps] {
                *v += devices.dw.power_kw;
            }
        }
        let mut combo: Vec<usize> = (0..f.ev_units).collect();
        loop {
            with_ev.copy_from_slice(&base);
            if f.ev_units > 0 {
                let ev = ev_series(&combo, f.ev_budget, &devices.ev, grid, steps);
                for (w, e) in with_ev.iter_mut().zip(&ev) {
                    *w += e;
                }
            }
            for &mask in &ac_masks {
                load.copy_from_slice(&with_ev);
                for (l, a) in load.iter_mut().zip(&day.ac_nominal) {
                    *l += a;
                }
                if devices.ac.enabled {
                    for (bit, &t) in f.ac_on.iter().enumerate() {
                        if mask >> bit & 1 == 1 {
                            load[t] -= day.ac_nominal[t];
                        }
                    }
                }
                let value = scorer.value(&load);
                evaluated += 1;
                if best.as_ref().is_none_or(|(b, _)| value < b - 1e-12) {
                    let ac_curtailed =
                        f.ac_on.iter().enumerate().filter(|(bit, _)| mask >> bit & 1 == 1).map(|(_, &t)| t).collect();
                    let ev_steps = if devices.ev.enabled { combo.clone() } else { Vec::new() };
                    best = Some((value, ScheduleCandidate { dw_start: *dw_start, ev_steps, ac_curtailed }));
                }
            }
            if f.ev_units == 0 || !next_combination(&mut combo, steps) {
                break;
            }
        }
    }
    let (_, candidate) = best.expect("at least one candidate");
    finish(day, devices, grid, tariff, objective, candidate, evaluated)
}

fn finish(
    day: &DayProfile,
    devices: &Devices,
    grid: TimeGrid,
    tariff: &TariffSchedule,
    objective: Objective,
    candidate: ScheduleCandidate,
    evaluated: u64,
) -> Result<ScheduleResult> {
    let realized = realize(day, devices, grid, &candidate)?;
    let value = score(objective, &realized, day, tariff, grid)?;
    Ok(ScheduleResult { objective, candidate, value, realized, evaluated })
}

/// Heuristic schedule: curtail the AC where load (or price) is highest,
/// place the dishwasher cycle at its best window, then add EV energy one
/// step at a time into the lowest net load (or cheapest) free step.
pub fn greedy_valley_fill(
    day: &DayProfile,
    devices: &Devices,
    grid: TimeGrid,
    tariff: &TariffSchedule,
    objective: Objective,
) -> Result<ScheduleResult> {
    if tariff.steps() != grid.steps() {
        return Err(Error::Shape(format!("tariff has {} steps, grid {}", tariff.steps(), grid.steps())));
    }
    let f = flexibility(day, devices, grid)?;
    let steps = grid.steps();
    let scorer = Scorer { objective, tariff, pv: &day.pv, dt: grid.step_hours() };
    let mut evaluated = 0u64;

    let mut load: Vec<f64> = (0..steps)
        .map(|t| {
            day.base_load[t]
                + day.ac_nominal[t]
                + if devices.ev.enabled { 0.0 } else { day.ev_nominal[t] }
                + if devices.dw.enabled { 0.0 } else { day.dw_nominal[t] }
        })
        .collect();
    let key = |t: usize, load: &[f64]| match objective {
        Objective::Peak => load[t] - day.pv[t],
        Objective::Cost => tariff.buy_rate[t],
    };

    let mut ac_curtailed = {
        let mut order = f.ac_on.clone();
        order.sort_by(|&a, &b| key(b, &load).total_cmp(&key(a, &load)).then(a.cmp(&b)));
        order.truncate(f.ac_max);
        order
    };
    for &t in &ac_curtailed {
        load[t] -= day.ac_nominal[t];
    }
    ac_curtailed.sort_unstable();

    let dw_start = f.dw_starts.map(|n| {
        let cycle = devices.dw.cycle_steps;
        let mut best = (f64::INFINITY, 0);
        let mut trial = load.clone();
        for s in 0..n {
            trial.copy_from_slice(&load);
            for v in &mut trial[s..s + cycle] {
                *v += devices.dw.power_kw;
            }
            let value = scorer.value(&trial);
            evaluated += 1;
            if value < best.0 - 1e-12 {
                best = (value, s);
            }
        }
        for v in &mut load[best.1..best.1 + cycle] {
            *v += devices.dw.power_kw;
        }
        best.1
    });

    let mut ev_steps = Vec::with_capacity(f.ev_units);
    let mut free = vec![true; steps];
    let mut left = f.ev_budget;
    let dt = grid.step_hours();
    for _ in 0..f.ev_units {
        let pick = (0..steps)
            .filter(|&t| free[t])
            .min_by(|&a, &b| {
                key(a, &load)
                    .total_cmp(&key(b, &load))
                    .then((load[a] - day.pv[a]).total_cmp(&(load[b] - day.pv[b])))
                    .then(a.cmp(&b))
            })
            .expect("EV units fit the day");
        let p = devices.ev.power_kw.min(left / dt);
        load[pick] += p;
        left -= p * dt;
        free[pick] = false;
        ev_steps.push(pick);
    }
    // the partial unit sits on the latest step; re-realise in ascending order
    ev_steps.sort_unstable();
    let candidate = ScheduleCandidate { dw_start, ev_steps, ac_curtailed };
    finish(day, devices, grid, tariff, objective, candidate, evaluated + 1)
}

/// Exhaustive where the search space allows, greedy otherwise.
pub fn best_schedule(
    day: &DayProfile,
    devices: &Devices,
    grid: TimeGrid,
    tariff: &TariffSchedule,
    objective: Objective,
) -> Result<ScheduleResult> {
    if search_space(day, devices, grid)? <= EXHAUSTIVE_LIMIT {
        exhaustive_schedule(day, devices, grid, tariff, objective)
    } else {
        greedy_valley_fill(day, devices, grid, tariff, objective)
    }
}

/// Oracle schedule of every day of a household.
pub fn oracle_evaluation(household: &Household, objective: Objective) -> Result<BuildingEvaluation> {
    household.require_days()?;
    let grid = household.grid();
    let days = household
        .days
        .iter()
        .zip(&household.tariffs)
        .map(|(day, tariff)| {
            let r = best_schedule(day, &household.config.devices, grid, tariff, objective)?;
            day_evaluation(day, r.realized.net_load, &r.realized.consumption, tariff, grid)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BuildingEvaluation { building: household.name.clone(), method: Method::Oracle, days })
}

/// The household without any control.
pub fn unoptimized_evaluation(household: &Household) -> Result<BuildingEvaluation> {
    household.require_days()?;
    let grid = household.grid();
    let days = household
        .days
        .iter()
        .zip(&household.tariffs)
        .map(|(day, tariff)| day_evaluation(day, day.nominal_net_load(), &day.nominal_consumption(), tariff, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(BuildingEvaluation { building: household.name.clone(), method: Method::Unoptimized, days })
}

fn day_evaluation(
    day: &DayProfile,
    net_load: Vec<f64>,
    consumption: &[f64],
    tariff: &TariffSchedule,
    grid: TimeGrid,
) -> Result<DayEvaluation> {
    Ok(DayEvaluation {
        date: day.date,
        original_net_load: day.nominal_net_load(),
        optimized_net_load: net_load,
        original_cost: daily_cost(&day.nominal_consumption(), &day.pv, tariff, grid)?,
        optimized_cost: daily_cost(consumption, &day.pv, tariff, grid)?,
    })
}

/// Spread of a metric over trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialStat {
    pub mean: f64,
    pub std: f64,
    /// Standard error of the mean.
    pub sem: f64,
}

impl TrialStat {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { mean, std, sem: std / n.sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    pub trials: usize,
    /// Mean daily peak per trial.
    pub peak: TrialStat,
    /// Mean daily cost per trial.
    pub cost: TrialStat,
}

/// Uniformly random actions on every day, `trials` times.
pub fn random_policy_eval(
    household: &Household,
    coeff: &RewardCoefficients,
    rng: &mut AgentRng,
    trials: usize,
) -> Result<RandomBaseline> {
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    let mut peaks = Vec::with_capacity(trials);
    let mut costs = Vec::with_capacity(trials);
    for _ in 0..trials {
        let eval = evaluate_policy(household, Method::Random, || RandomPolicy, coeff, rng.next_u64(), 1)?;
        let n = eval.days.len() as f64;
        peaks.push(eval.days.iter().map(|d| daily_peak(&d.optimized_net_load)).sum::<f64>() / n);
        costs.push(eval.days.iter().map(|d| d.optimized_cost).sum::<f64>() / n);
    }
    Ok(RandomBaseline { trials, peak: TrialStat::of(&peaks), cost: TrialStat::of(&costs) })
}
