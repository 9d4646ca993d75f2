//! Learning agents and the policy interface shared by training and evaluation.

pub mod dpg;
pub mod dqn;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{encode_state, ActionTriple, EnvState, StateVector};
use crate::error::Result;
use crate::metrics::{daily_peak, BuildingEvaluation, CurvePoint, DayEvaluation, LearningCurve, Method};
use crate::neural::Network;
use crate::rewards::{joint_reward, DaySummary, RewardCoefficients};
use crate::scenario::Household;

/// Random source used by every agent.
pub type AgentRng = ChaCha8Rng;

/// Maps an encoded state to the three device actions.
pub trait Policy {
    fn act(&mut self, state: &StateVector, rng: &mut AgentRng) -> Result<ActionTriple>;
}

impl<F> Policy for F
where
    F: FnMut(&StateVector, &mut AgentRng) -> Result<ActionTriple>,
{
    fn act(&mut self, state: &StateVector, rng: &mut AgentRng) -> Result<ActionTriple> {
        self(state, rng)
    }
}

/// Uniformly random actions.
#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn act(&mut self, _state: &StateVector, rng: &mut AgentRng) -> Result<ActionTriple> {
        Ok(ActionTriple::new(rng.gen(), rng.gen(), rng.gen()))
    }
}

/// Result of running a trained network.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub curve: LearningCurve,
}

/// One finished day.
#[derive(Debug, Clone)]
pub struct DayRecord {
    pub summary: DaySummary,
    pub reward: f64,
    pub evaluation: DayEvaluation,
}

impl DayRecord {
    pub(crate) fn from_state(
        state: &EnvState,
        household: &Household,
        day: usize,
        coeff: &RewardCoefficients,
    ) -> Result<Self> {
        let summary = state.summary(&household.config, &household.tariffs[day])?;
        let reward = joint_reward(household.problem(), &summary, coeff)?;
        let evaluation = DayEvaluation {
            date: state.day().date,
            original_net_load: summary.original_net_load.clone(),
            optimized_net_load: summary.optimized_net_load.clone(),
            original_cost: summary.original_cost.unwrap_or_default(),
            optimized_cost: summary.optimized_cost.unwrap_or_default(),
        };
        Ok(Self { summary, reward, evaluation })
    }

    pub fn optimized_peak(&self) -> f64 {
        daily_peak(&self.evaluation.optimized_net_load)
    }
}

/// Per-episode accumulator behind the learning curve.
#[derive(Debug, Clone, Default)]
pub(crate) struct EpisodeStats {
    rewards: Vec<f64>,
    peaks: Vec<f64>,
    costs: Vec<f64>,
}

impl EpisodeStats {
    pub(crate) fn push(&mut self, record: &DayRecord) {
        self.rewards.push(record.reward);
        self.peaks.push(record.optimized_peak());
        self.costs.push(record.evaluation.optimized_cost);
    }

    pub(crate) fn point(&self, episode: usize) -> CurvePoint {
        CurvePoint {
            episode,
            mean_reward: mean(&self.rewards),
            mean_peak: mean(&self.peaks),
            mean_cost: mean(&self.costs),
        }
    }
}

/// Runs `policy` over day `day` of `household`.
pub fn run_day<P: Policy + ?Sized>(
    household: &Household,
    day: usize,
    policy: &mut P,
    coeff: &RewardCoefficients,
    rng: &mut AgentRng,
) -> Result<DayRecord> {
    let config = &household.config;
    let tariff = &household.tariffs[day];
    let mut state = EnvState::reset(config, &household.days[day])?;
    loop {
        let s = encode_state(&state, config, tariff)?;
        let action = policy.act(&s, rng)?;
        if state.step(config, action)? {
            break;
        }
    }
    DayRecord::from_state(&state, household, day, coeff)
}

/// Evaluates a policy on every day of `household`. Day `i` draws from a
/// generator seeded with `(seed, i)`, so results do not depend on `threads`.
pub fn evaluate_policy<P, F>(
    household: &Household,
    method: Method,
    make_policy: F,
    coeff: &RewardCoefficients,
    seed: u64,
    threads: usize,
) -> Result<BuildingEvaluation>
where
    P: Policy,
    F: Fn() -> P + Sync,
{
    household.require_days()?;
    let run = |range: std::ops::Range<usize>| -> Result<Vec<DayEvaluation>> {
        let mut policy = make_policy();
        range
            .map(|i| {
                let mut rng = AgentRng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                run_day(household, i, &mut policy, coeff, &mut rng).map(|r| r.evaluation)
            })
            .collect()
    };
    let n = household.len();
    let threads = threads.clamp(1, n);
    let days = if threads == 1 {
        run(0..n)?
    } else {
        let chunk = n.div_ceil(threads);
        let parts: Vec<Result<Vec<DayEvaluation>>> = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..n)
                .step_by(chunk)
                .map(|start| {
                    let run = &run;
                    scope.spawn(move || run(start..(start + chunk).min(n)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("evaluation thread panicked")).collect()
        });
        let mut days = Vec::with_capacity(n);
        for part in parts {
            days.extend(part?);
        }
        days
    };
    Ok(BuildingEvaluation { building: household.name.clone(), method, days })
}

/// Mean over a slice; zero when empty.
pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}
