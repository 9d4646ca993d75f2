//! Demand-response control of household flexible loads.
//!
//! The crate models one household day as a sequential decision problem over
//! three devices (air conditioner, electric vehicle, dishwasher), scores days
//! with a shaped end-of-day reward, and trains two agents on it: a multi-action
//! deep Q-network and a per-device policy-gradient agent. Exhaustive and greedy
//! schedulers provide reference optima on small instances.

pub mod agent;
pub mod env;
pub mod error;
pub mod metrics;
pub mod neural;
pub mod oracle;
pub mod profiles;
pub mod rewards;
pub mod scenario;

pub use agent::dpg::{train_dpg, DpgConfig, Trajectory};
pub use agent::dqn::{train_dqn, DqnConfig, ReplayBuffer};
pub use agent::{evaluate_policy, run_day, AgentRng, DayRecord, Policy, RandomPolicy, TrainOutcome};
pub use env::{
    decode_combined_action, encode_state, ActionCounts, ActionTriple, DeviceKind, DeviceSpec, Devices, EnvConfig,
    EnvState, Normalization, Problem, StateVector, Transition, COMBINED_ACTIONS,
};
pub use error::{Error, Result};
pub use metrics::{BuildingEvaluation, DayEvaluation, EvalReport, LearningCurve, Method};
pub use neural::{Direction, Network, OutputMode};
pub use oracle::{exhaustive_schedule, greedy_valley_fill, Objective, ScheduleCandidate, ScheduleResult};
pub use profiles::{DayProfile, TariffBook, TariffSchedule, TimeGrid};
pub use rewards::{joint_reward, DaySummary, RewardCoefficients};
pub use scenario::Household;
