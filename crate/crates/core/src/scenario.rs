//! A household to control: environment configuration, days and the tariff of each day.

use std::ops::Range;

use crate::env::{Devices, EnvConfig, Normalization, Problem};
use crate::error::{Error, Result};
use crate::profiles::{
    generate_synthetic_days, DayProfile, SyntheticHouseholdParams, TariffBook, TariffSchedule, TimeGrid,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Household {
    pub name: String,
    pub config: EnvConfig,
    pub days: Vec<DayProfile>,
    /// Tariff of each day, aligned with `days`.
    pub tariffs: Vec<TariffSchedule>,
}

impl Household {
    pub fn new(
        name: impl Into<String>,
        config: EnvConfig,
        days: Vec<DayProfile>,
        tariffs: &TariffBook,
    ) -> Result<Self> {
        config.validate()?;
        let steps = config.grid.steps();
        for d in &days {
            d.validate(steps)?;
        }
        let tariffs = days.iter().map(|d| tariffs.schedule_for(d.date, config.grid)).collect::<Result<Vec<_>>>()?;
        Ok(Self { name: name.into(), config, days, tariffs })
    }

    /// Days `days` of the synthetic household, with devices and
    /// normalization derived from `params`.
    pub fn synthetic(
        name: impl Into<String>,
        problem: Problem,
        grid: TimeGrid,
        params: &SyntheticHouseholdParams,
        days: Range<u32>,
        tariffs: &TariffBook,
    ) -> Result<Self> {
        let profiles = generate_synthetic_days(params, grid, days.start, days.end - days.start)?;
        let devices = Devices::from_synthetic(params);
        let mut config = EnvConfig::new(problem, grid, devices);
        config.normalization = Normalization::from_days(&profiles, &config.devices);
        Self::new(name, config, profiles, tariffs)
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn grid(&self) -> TimeGrid {
        self.config.grid
    }

    pub fn problem(&self) -> Problem {
        self.config.problem
    }

    /// Same household with another set of days, keeping the configuration
    /// (including normalization) unchanged.
    pub fn with_days(&self, days: Vec<DayProfile>, tariffs: &TariffBook) -> Result<Self> {
        Self::new(self.name.clone(), self.config.clone(), days, tariffs)
    }

    pub fn with_problem(&self, problem: Problem) -> Self {
        let mut out = self.clone();
        out.config.problem = problem;
        out
    }

    pub(crate) fn require_days(&self) -> Result<()> {
        if self.days.is_empty() {
            return Err(Error::Config(format!("household `{}` has no days", self.name)));
        }
        Ok(())
    }
}
