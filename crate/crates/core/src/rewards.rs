//! End-of-day joint reward.
//!
//! Three components: action-count rewards for the three devices, peak and
//! export shaping for the peak problem, and cost shaping for the cost
//! problem. Peak reduction scores components one and two, cost minimisation
//! components one and three. Every branch condition is a strict inequality;
//! ties fall to the `otherwise` branch.

use serde::{Deserialize, Serialize};

use crate::env::{ActionCounts, Problem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardCoefficients {
    /// Positive coefficient.
    pub zeta1: f64,
    /// Negative coefficient.
    pub zeta2: f64,
    /// Rewarded range of AC curtailment counts.
    pub ac_count_band: (u32, u32),
    /// Rewarded range of dishwasher starts.
    pub dw_count_band: (u32, u32),
}

impl Default for RewardCoefficients {
    fn default() -> Self {
        Self { zeta1: 40.0, zeta2: -50.0, ac_count_band: (1, 10), dw_count_band: (1, 2) }
    }
}

impl RewardCoefficients {
    pub fn validate(&self) -> Result<()> {
        if !(self.zeta1 > 0.0 && self.zeta2 < 0.0) {
            return Err(Error::Config(format!("need zeta1 > 0 > zeta2, got {} and {}", self.zeta1, self.zeta2)));
        }
        if self.ac_count_band.0 > self.ac_count_band.1 || self.dw_count_band.0 > self.dw_count_band.1 {
            return Err(Error::Config("inverted count band".into()));
        }
        Ok(())
    }
}

/// What the reward sees of a finished day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaySummary {
    /// Net load before control.
    pub original_net_load: Vec<f64>,
    /// Net load after control.
    pub optimized_net_load: Vec<f64>,
    pub original_ac: Vec<f64>,
    pub optimized_ac: Vec<f64>,
    pub counts: ActionCounts,
    pub ev_target_sessions: u32,
    pub original_cost: Option<f64>,
    pub optimized_cost: Option<f64>,
}

fn max_of(series: &[f64]) -> f64 {
    series.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(series: &[f64]) -> f64 {
    series.iter().copied().fold(f64::INFINITY, f64::min)
}

fn band_reward(n: u32, band: (u32, u32), coeff: &RewardCoefficients) -> f64 {
    if n > band.1 {
        -(n as f64)
    } else if n >= band.0 {
        coeff.zeta1
    } else {
        coeff.zeta2
    }
}

/// Component one: differentiated rewards on the daily action counts.
pub fn reward_counts(counts: ActionCounts, ev_target: u32, coeff: &RewardCoefficients) -> f64 {
    let r_ac = band_reward(counts.ac, coeff.ac_count_band, coeff);
    let r_dw = band_reward(counts.dw, coeff.dw_count_band, coeff);
    let r_ev =
        if counts.ev != ev_target { -4.0 * (ev_target as f64 - counts.ev as f64).abs() } else { counts.ev as f64 };
    r_ac + r_ev + r_dw
}

/// Peak shaping on the daily maximum of the net load.
pub fn reward_peak(summary: &DaySummary, coeff: &RewardCoefficients) -> f64 {
    let before = max_of(&summary.original_net_load);
    let after = max_of(&summary.optimized_net_load);
    if after < before {
        -3.0 * coeff.zeta2 + 4.0 * (before - after)
    } else {
        -3.0 * coeff.zeta1 - 1.0
    }
}

fn exports(summary: &DaySummary) -> bool {
    summary.optimized_net_load.iter().any(|&p| p < 0.0)
}

/// Export shaping: penalises the largest export on days that export at all.
pub fn reward_export(summary: &DaySummary, coeff: &RewardCoefficients) -> f64 {
    if exports(summary) {
        coeff.zeta1 / 2.0 - min_of(&summary.optimized_net_load).abs()
    } else {
        -coeff.zeta2 / 2.0
    }
}

/// AC shaping, active on export days.
pub fn reward_ac(summary: &DaySummary, coeff: &RewardCoefficients) -> f64 {
    if exports(summary) {
        coeff.zeta1 / 8.0 + 2.0 * (max_of(&summary.optimized_ac) - max_of(&summary.original_ac))
    } else {
        -coeff.zeta2 / 10.0
    }
}

/// Component three: cost shaping.
pub fn reward_cost(original_cost: f64, optimized_cost: f64, coeff: &RewardCoefficients) -> f64 {
    if optimized_cost < original_cost {
        5.0 * (optimized_cost - original_cost).abs()
    } else {
        -3.0 * coeff.zeta1 - 1.0
    }
}

pub fn joint_reward(problem: Problem, summary: &DaySummary, coeff: &RewardCoefficients) -> Result<f64> {
    let counts = reward_counts(summary.counts, summary.ev_target_sessions, coeff);
    match problem {
        Problem::PeakReduction => {
            Ok(counts + reward_peak(summary, coeff) + reward_export(summary, coeff) + reward_ac(summary, coeff))
        }
        Problem::CostMinimization => match (summary.original_cost, summary.optimized_cost) {
            (Some(before), Some(after)) => Ok(counts + reward_cost(before, after, coeff)),
            _ => Err(Error::Contract("cost reward needs original and optimized costs".into())),
        },
    }
}
