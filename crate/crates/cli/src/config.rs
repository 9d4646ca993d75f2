//! Experiment configuration files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use flexload::profiles::{generate_synthetic_days, load_profiles_csv, SyntheticHouseholdParams};
use flexload::{
    DayProfile, Devices, DpgConfig, DqnConfig, EnvConfig, Household, Normalization, Problem, RewardCoefficients,
    TariffBook, TimeGrid,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Dqn,
    Dpg,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Dqn => "dqn",
            AgentKind::Dpg => "dpg",
        }
    }
}

/// Where the household's days come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Seeded synthetic household; day ranges are `[start, end)` indices.
    Synthetic {
        #[serde(default)]
        params: Option<SyntheticHouseholdParams>,
        train_days: (u32, u32),
        eval_days: (u32, u32),
    },
    /// Smart-meter export. Evaluation uses `eval_path`, or the training file
    /// when absent.
    Csv {
        path: PathBuf,
        #[serde(default)]
        eval_path: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub problem: Problem,
    #[serde(default = "default_steps")]
    pub steps_per_day: usize,
    pub data: DataSource,
    /// Tariff JSON; a flat 0.20/0.05 $/kWh tariff when absent.
    #[serde(default)]
    pub tariff: Option<PathBuf>,
    /// Device specs; derived from the synthetic parameters when absent.
    #[serde(default)]
    pub devices: Option<Devices>,
    #[serde(default = "default_agent")]
    pub agent: AgentKind,
    #[serde(default)]
    pub dpg: DpgConfig,
    #[serde(default)]
    pub dqn: DqnConfig,
    #[serde(default)]
    pub rewards: RewardCoefficients,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_name() -> String {
    "household".into()
}

fn default_steps() -> usize {
    24
}

fn default_agent() -> AgentKind {
    AgentKind::Dpg
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: default_name(),
            problem: Problem::PeakReduction,
            steps_per_day: default_steps(),
            data: DataSource::Synthetic { params: None, train_days: (0, 40), eval_days: (40, 60) },
            tariff: None,
            devices: None,
            agent: default_agent(),
            dpg: DpgConfig::default(),
            dqn: DqnConfig::default(),
            rewards: RewardCoefficients::default(),
            seed: 0,
            out: default_out(),
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(t) = config.tariff.as_mut() {
            resolve(t);
        }
        if let DataSource::Csv { path, eval_path } = &mut config.data {
            resolve(path);
            if let Some(p) = eval_path.as_mut() {
                resolve(p);
            }
        }
        config.grid()?;
        Ok(config)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        Ok(TimeGrid::with_steps(self.steps_per_day)?)
    }

    fn params(&self) -> Result<SyntheticHouseholdParams> {
        let grid = self.grid()?;
        Ok(match &self.data {
            DataSource::Synthetic { params: Some(p), .. } => p.clone(),
            _ => SyntheticHouseholdParams::for_grid(grid),
        })
    }

    pub fn devices(&self) -> Result<Devices> {
        match &self.devices {
            Some(d) => Ok(d.clone()),
            None => Ok(Devices::from_synthetic(&self.params()?)),
        }
    }

    pub fn tariffs(&self) -> Result<TariffBook> {
        match &self.tariff {
            Some(path) => TariffBook::load_json(path).with_context(|| format!("loading tariff {}", path.display())),
            None => Ok(TariffBook::flat(0.20, 0.05)),
        }
    }

    fn load_days(&self, path: &Path) -> Result<Vec<DayProfile>> {
        let days = load_profiles_csv(path, self.grid()?).with_context(|| format!("loading days {}", path.display()))?;
        if days.is_empty() {
            bail!("{} holds no complete day on a {}-step grid", path.display(), self.steps_per_day);
        }
        Ok(days)
    }

    fn synthetic_days(&self, range: (u32, u32)) -> Result<Vec<DayProfile>> {
        if range.1 <= range.0 {
            bail!("empty day range {}..{}", range.0, range.1);
        }
        Ok(generate_synthetic_days(&self.params()?, self.grid()?, range.0, range.1 - range.0)?)
    }

    pub fn train_days(&self) -> Result<Vec<DayProfile>> {
        match &self.data {
            DataSource::Synthetic { train_days, .. } => self.synthetic_days(*train_days),
            DataSource::Csv { path, .. } => self.load_days(path),
        }
    }

    pub fn eval_days(&self) -> Result<Vec<DayProfile>> {
        match &self.data {
            DataSource::Synthetic { eval_days, .. } => self.synthetic_days(*eval_days),
            DataSource::Csv { path, eval_path } => self.load_days(eval_path.as_ref().unwrap_or(path)),
        }
    }

    /// Training household. State normalization comes from the training days,
    /// so evaluation rebuilds it from the same config.
    pub fn train_household(&self) -> Result<Household> {
        let days = self.train_days()?;
        let mut env = EnvConfig::new(self.problem, self.grid()?, self.devices()?);
        env.normalization = Normalization::from_days(&days, &env.devices);
        Ok(Household::new(self.name.clone(), env, days, &self.tariffs()?)?)
    }

    /// Evaluation household, from the config or from an explicit CSV.
    pub fn eval_household(&self, days_csv: Option<&Path>) -> Result<Household> {
        let train = self.train_household()?;
        let days = match days_csv {
            Some(p) => self.load_days(p)?,
            None => self.eval_days()?,
        };
        Ok(train.with_days(days, &self.tariffs()?)?)
    }
}
