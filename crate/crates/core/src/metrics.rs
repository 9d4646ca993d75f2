//! Evaluation metrics and report tables.
//!
//! Peaks are daily maxima of net load floored at zero; costs price
//! consumption at the buy rate and credit generation at the sell rate.
//! Standard deviations are population deviations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use crate::profiles::write_profiles_csv as export_profiles_csv;

use crate::error::{Error, Result};
use crate::profiles::{TariffSchedule, TimeGrid};

/// Daily peak in kW: the largest net load, floored at zero.
pub fn daily_peak(net_load: &[f64]) -> f64 {
    net_load.iter().copied().fold(0.0, f64::max)
}

/// Daily cost in $: `sum_t (buy_t * consumption_t - sell_t * generation_t) * dt`.
pub fn daily_cost(consumption: &[f64], generation: &[f64], tariff: &TariffSchedule, grid: TimeGrid) -> Result<f64> {
    let n = tariff.steps();
    if consumption.len() != n || generation.len() != n {
        return Err(Error::Shape(format!(
            "cost needs {n} samples, got consumption {} and generation {}",
            consumption.len(),
            generation.len()
        )));
    }
    let dt = grid.step_hours();
    Ok((0..n).map(|t| (tariff.buy_rate[t] * consumption[t] - tariff.sell_rate[t] * generation[t]) * dt).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Unoptimized,
    Dqn,
    Dpg,
    Oracle,
    Random,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Unoptimized => "unoptimized",
            Method::Dqn => "dqn",
            Method::Dpg => "dpg",
            Method::Oracle => "oracle",
            Method::Random => "random",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unoptimized" | "-" => Ok(Method::Unoptimized),
            "dqn" => Ok(Method::Dqn),
            "dpg" => Ok(Method::Dpg),
            "oracle" => Ok(Method::Oracle),
            "random" => Ok(Method::Random),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Outcome of controlling one building for one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayEvaluation {
    pub date: NaiveDate,
    pub original_net_load: Vec<f64>,
    pub optimized_net_load: Vec<f64>,
    pub original_cost: f64,
    pub optimized_cost: f64,
}

impl DayEvaluation {
    pub fn original_peak(&self) -> f64 {
        daily_peak(&self.original_net_load)
    }

    pub fn optimized_peak(&self) -> f64 {
        daily_peak(&self.optimized_net_load)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingEvaluation {
    pub building: String,
    pub method: Method,
    pub days: Vec<DayEvaluation>,
}

impl BuildingEvaluation {
    /// Daily peak after control.
    pub fn peak(&self) -> Stat {
        Stat::of(self.days.iter().map(DayEvaluation::optimized_peak))
    }

    /// Daily cost after control.
    pub fn cost(&self) -> Stat {
        Stat::of(self.days.iter().map(|d| d.optimized_cost))
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let values: Vec<f64> = values.into_iter().collect();
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub building: String,
    pub unoptimized_peak: Stat,
    pub optimized_peak: Stat,
    pub unoptimized_cost: Stat,
    pub optimized_cost: Stat,
    pub days: usize,
}

impl ReportRow {
    fn from_days(building: &str, days: &[DayEvaluation]) -> Self {
        Self {
            building: building.to_string(),
            unoptimized_peak: Stat::of(days.iter().map(DayEvaluation::original_peak)),
            optimized_peak: Stat::of(days.iter().map(DayEvaluation::optimized_peak)),
            unoptimized_cost: Stat::of(days.iter().map(|d| d.original_cost)),
            optimized_cost: Stat::of(days.iter().map(|d| d.optimized_cost)),
            days: days.len(),
        }
    }
}

/// Per-building and aggregate statistics of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub buildings: Vec<ReportRow>,
    /// Statistics of the summed net load of all buildings, over the dates
    /// every building was evaluated on.
    pub aggregate: ReportRow,
    /// Total unoptimized and optimized cost per building over all days.
    pub annual_costs: Vec<(String, f64, f64)>,
}

pub const AGGREGATE: &str = "aggregate";

pub fn build_report(evaluations: &[BuildingEvaluation]) -> Result<EvalReport> {
    let first = evaluations.first().ok_or_else(|| Error::Contract("report needs at least one building".into()))?;
    if let Some(other) = evaluations.iter().find(|e| e.method != first.method) {
        return Err(Error::Contract(format!("mixed methods {} and {}", first.method, other.method)));
    }
    if let Some(empty) = evaluations.iter().find(|e| e.days.is_empty()) {
        return Err(Error::Contract(format!("building `{}` has no evaluated days", empty.building)));
    }

    let buildings = evaluations.iter().map(|e| ReportRow::from_days(&e.building, &e.days)).collect();

    let mut common: BTreeSet<NaiveDate> = first.days.iter().map(|d| d.date).collect();
    for e in &evaluations[1..] {
        let dates: BTreeSet<NaiveDate> = e.days.iter().map(|d| d.date).collect();
        common = common.intersection(&dates).copied().collect();
    }
    let mut summed: BTreeMap<NaiveDate, DayEvaluation> = BTreeMap::new();
    for e in evaluations {
        for d in e.days.iter().filter(|d| common.contains(&d.date)) {
            match summed.get_mut(&d.date) {
                None => {
                    summed.insert(d.date, d.clone());
                }
                Some(acc) => {
                    if acc.original_net_load.len() != d.original_net_load.len() {
                        return Err(Error::Shape(format!("buildings disagree on steps for {}", d.date)));
                    }
                    for (a, b) in acc.original_net_load.iter_mut().zip(&d.original_net_load) {
                        *a += b;
                    }
                    for (a, b) in acc.optimized_net_load.iter_mut().zip(&d.optimized_net_load) {
                        *a += b;
                    }
                    acc.original_cost += d.original_cost;
                    acc.optimized_cost += d.optimized_cost;
                }
            }
        }
    }
    if summed.is_empty() {
        return Err(Error::Contract("buildings share no evaluated dates".into()));
    }
    let summed: Vec<DayEvaluation> = summed.into_values().collect();
    let aggregate = ReportRow::from_days(AGGREGATE, &summed);

    let annual_costs = evaluations
        .iter()
        .map(|e| {
            (
                e.building.clone(),
                e.days.iter().map(|d| d.original_cost).sum(),
                e.days.iter().map(|d| d.optimized_cost).sum(),
            )
        })
        .collect();

    Ok(EvalReport { method: first.method, buildings, aggregate, annual_costs })
}

/// One line of a table CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRecord {
    pub building: String,
    pub method: String,
    pub peak_mu: f64,
    pub peak_sigma: f64,
    pub cost_mu: f64,
    pub cost_sigma: f64,
    pub days: usize,
}

impl EvalReport {
    /// Two records per building (unoptimized then optimized) and two for the aggregate.
    pub fn table_records(&self) -> Vec<TableRecord> {
        let mut out = Vec::new();
        for row in self.buildings.iter().chain(std::iter::once(&self.aggregate)) {
            let record = |method: Method, peak: Stat, cost: Stat| TableRecord {
                building: row.building.clone(),
                method: method.to_string(),
                peak_mu: round6(peak.mean),
                peak_sigma: round6(peak.std),
                cost_mu: round6(cost.mean),
                cost_sigma: round6(cost.std),
                days: row.days,
            };
            out.push(record(Method::Unoptimized, row.unoptimized_peak, row.unoptimized_cost));
            out.push(record(self.method, row.optimized_peak, row.optimized_cost));
        }
        out
    }

    pub fn write_table_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_table_csv(writer, &self.table_records())
    }

    /// `building,method,annual_cost_unoptimized,annual_cost_optimized`.
    pub fn write_annual_costs_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["building", "method", "annual_cost_unoptimized", "annual_cost_optimized"])?;
        for (b, before, after) in &self.annual_costs {
            wtr.write_record([b.clone(), self.method.to_string(), fmt6(*before), fmt6(*after)])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_table_csv<W: Write>(writer: W, records: &[TableRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["building", "method", "peak_mu", "peak_sigma", "cost_mu", "cost_sigma", "days"])?;
    for r in records {
        wtr.write_record([
            r.building.clone(),
            r.method.clone(),
            fmt6(r.peak_mu),
            fmt6(r.peak_sigma),
            fmt6(r.cost_mu),
            fmt6(r.cost_sigma),
            r.days.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn read_table_csv<R: Read>(reader: R) -> Result<Vec<TableRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Merges table records from several runs: the unoptimized row of each
/// building is kept once, method rows in first-seen order.
pub fn merge_tables(tables: &[Vec<TableRecord>]) -> Vec<TableRecord> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for r in tables.iter().flatten() {
        if seen.insert((r.building.clone(), r.method.clone())) {
            out.push(r.clone());
        }
    }
    out
}

/// Renders merged records as a markdown table: one row per method, a
/// mean/std column pair per building.
pub fn render_markdown(records: &[TableRecord]) -> String {
    let mut buildings: Vec<&str> = Vec::new();
    let mut methods: Vec<&str> = Vec::new();
    for r in records {
        if !buildings.contains(&r.building.as_str()) {
            buildings.push(&r.building);
        }
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let lookup = |b: &str, m: &str| records.iter().find(|r| r.building == b && r.method == m);
    let mut out = String::new();
    for (title, pick) in [
        ("Peak [kW]", (|r: &TableRecord| (r.peak_mu, r.peak_sigma)) as fn(&TableRecord) -> (f64, f64)),
        ("Cost [$/day]", |r: &TableRecord| (r.cost_mu, r.cost_sigma)),
    ] {
        out.push_str(&format!("| {title} |"));
        for b in &buildings {
            out.push_str(&format!(" {b} mean | {b} std |"));
        }
        out.push_str("\n|---|");
        out.push_str(&"---|---|".repeat(buildings.len()));
        out.push('\n');
        for m in &methods {
            out.push_str(&format!("| {m} |"));
            for b in &buildings {
                match lookup(b, m) {
                    Some(r) => {
                        let (mu, sigma) = pick(r);
                        out.push_str(&format!(" {mu:.2} | {sigma:.2} |"));
                    }
                    None => out.push_str(" - | - |"),
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Per-episode training monitor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub mean_reward: f64,
    pub mean_peak: f64,
    pub mean_cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub points: Vec<CurvePoint>,
}

impl LearningCurve {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mean_reward).collect()
    }

    /// `episode,mean_reward,mean_peak,mean_cost`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["episode", "mean_reward", "mean_peak", "mean_cost"])?;
        for p in &self.points {
            wtr.write_record([p.episode.to_string(), fmt6(p.mean_reward), fmt6(p.mean_peak), fmt6(p.mean_cost)])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}
