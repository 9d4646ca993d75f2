//! Policy gradient with one Bernoulli head per device.
//!
//! The network's three sigmoid outputs are the probabilities of curtailing
//! the AC, charging the EV and starting the dishwasher. Days are collected
//! into trajectories, returns are discounted within each day, and every
//! `update_every_episodes` episodes one ascent step follows the
//! score-function gradient `(a - p) * G` at the output logits.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{AgentRng, DayRecord, EpisodeStats, Policy, TrainOutcome};
use crate::env::{encode_state, ActionTriple, EnvState, StateVector};
use crate::error::{Error, Result};
use crate::metrics::LearningCurve;
use crate::neural::{Direction, ForwardTrace, Gradients, Network, OutputMode};
use crate::rewards::RewardCoefficients;
use crate::scenario::Household;

/// Output units, one per device.
pub const DEVICE_HEADS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpgConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub episodes: usize,
    pub days_per_episode: usize,
    pub update_every_episodes: usize,
    pub returns: ReturnScaling,
    pub hidden: Vec<usize>,
}

impl Default for DpgConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            alpha: 1e-2,
            episodes: 5_000,
            days_per_episode: 20,
            update_every_episodes: 2,
            returns: ReturnScaling::StepBaseline,
            hidden: vec![100, 100, 100],
        }
    }
}

impl DpgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.update_every_episodes == 0 || self.days_per_episode == 0 {
            return Err(Error::Config("update_every_episodes and days_per_episode must be >= 1".into()));
        }
        Ok(())
    }
}

/// Post-processing of discounted returns before the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnScaling {
    /// Returns as discounted.
    Raw,
    /// Zero mean and unit variance over the update batch.
    Standardized,
    /// Minus the batch mean return at the same step of the day, then unit variance.
    #[default]
    StepBaseline,
}

/// States, sampled actions, probabilities, forward traces and rewards of
/// consecutive days.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub states: Vec<StateVector>,
    pub actions: Vec<ActionTriple>,
    pub probs: Vec<[f64; DEVICE_HEADS]>,
    pub traces: Vec<ForwardTrace>,
    pub rewards: Vec<f64>,
    /// Exclusive end index of each finished day.
    pub day_ends: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn days(&self) -> usize {
        self.day_ends.len()
    }

    pub fn push(&mut self, state: StateVector, action: ActionTriple, probs: [f64; DEVICE_HEADS], trace: ForwardTrace) {
        self.states.push(state);
        self.actions.push(action);
        self.probs.push(probs);
        self.traces.push(trace);
        self.rewards.push(0.0);
    }

    /// Closes the current day, placing `reward` on its last step.
    pub fn end_day(&mut self, reward: f64) -> Result<()> {
        let start = self.day_ends.last().copied().unwrap_or(0);
        if self.len() == start {
            return Err(Error::Contract("cannot close an empty day".into()));
        }
        *self.rewards.last_mut().expect("non-empty") = reward;
        self.day_ends.push(self.len());
        Ok(())
    }

    pub fn clear(&mut self) {
        self.states.clear();
        self.actions.clear();
        self.probs.clear();
        self.traces.clear();
        self.rewards.clear();
        self.day_ends.clear();
    }

    /// `sum_t log pi(a_t | s_t)` from the stored probabilities.
    pub fn log_prob(&self) -> f64 {
        self.actions.iter().zip(&self.probs).map(|(a, p)| log_prob(p, *a)).sum()
    }
}

/// Log-likelihood of `action` under independent Bernoulli heads.
pub fn log_prob(probs: &[f64; DEVICE_HEADS], action: ActionTriple) -> f64 {
    action.as_array().iter().zip(probs).map(|(&a, &p)| if a { p.ln() } else { (1.0 - p).ln() }).sum()
}

fn probs_of(output: &[f64]) -> Result<[f64; DEVICE_HEADS]> {
    output
        .try_into()
        .map_err(|_| Error::Shape(format!("policy network has {} outputs, expected {DEVICE_HEADS}", output.len())))
}

/// Probabilities, sampled actions and the forward trace for one state.
pub fn sample_actions_traced(
    net: &Network,
    state: &StateVector,
    rng: &mut impl RngCore,
) -> Result<(ActionTriple, [f64; DEVICE_HEADS], ForwardTrace)> {
    let (out, trace) = net.forward_one(state.as_slice())?;
    let probs = probs_of(&out)?;
    let flags = probs.map(|p| rng.gen::<f64>() < p);
    Ok((ActionTriple::from_array(flags), probs, trace))
}

/// Three independent Bernoulli draws with the network's output probabilities.
pub fn sample_actions(
    net: &Network,
    state: &StateVector,
    rng: &mut impl RngCore,
) -> Result<(ActionTriple, [f64; DEVICE_HEADS])> {
    sample_actions_traced(net, state, rng).map(|(a, p, _)| (a, p))
}

/// Discounted returns, restarted at each day boundary, optionally
/// standardised to zero mean and unit variance.
pub fn discounted_returns(rewards: &[f64], day_ends: &[usize], gamma: f64, standardize: bool) -> Result<Vec<f64>> {
    let scaling = if standardize { ReturnScaling::Standardized } else { ReturnScaling::Raw };
    scaled_returns(rewards, day_ends, gamma, scaling)
}

fn check_partition(len: usize, day_ends: &[usize]) -> Result<()> {
    let mut start = 0;
    for &end in day_ends {
        if end <= start || end > len {
            break;
        }
        start = end;
    }
    if start != len || day_ends.windows(2).any(|w| w[1] <= w[0]) || day_ends.first() == Some(&0) {
        return Err(Error::Contract(format!("day boundaries {day_ends:?} do not partition {len} rewards")));
    }
    Ok(())
}

/// Discounted returns followed by `scaling`.
pub fn scaled_returns(rewards: &[f64], day_ends: &[usize], gamma: f64, scaling: ReturnScaling) -> Result<Vec<f64>> {
    check_partition(rewards.len(), day_ends)?;
    let mut returns = vec![0.0; rewards.len()];
    let mut start = 0;
    for &end in day_ends {
        let mut g = 0.0;
        for t in (start..end).rev() {
            g = rewards[t] + gamma * g;
            returns[t] = g;
        }
        start = end;
    }
    if returns.is_empty() {
        return Ok(returns);
    }
    match scaling {
        ReturnScaling::Raw => return Ok(returns),
        ReturnScaling::Standardized => {
            let mean = returns.iter().sum::<f64>() / returns.len() as f64;
            for g in &mut returns {
                *g -= mean;
            }
        }
        ReturnScaling::StepBaseline => {
            let longest = day_ends.iter().scan(0, |prev, &e| {
                let len = e - *prev;
                *prev = e;
                Some(len)
            });
            let longest = longest.max().unwrap_or(0);
            let mut sum = vec![0.0; longest];
            let mut count = vec![0usize; longest];
            let mut start = 0;
            for &end in day_ends {
                for t in start..end {
                    sum[t - start] += returns[t];
                    count[t - start] += 1;
                }
                start = end;
            }
            let mut start = 0;
            for &end in day_ends {
                for t in start..end {
                    returns[t] -= sum[t - start] / count[t - start] as f64;
                }
                start = end;
            }
        }
    }
    let n = returns.len() as f64;
    let std = (returns.iter().map(|g| g * g).sum::<f64>() / n).sqrt();
    if std > 1e-12 {
        for g in &mut returns {
            *g /= std;
        }
    }
    Ok(returns)
}

/// `(a - p) * G` for every step and head.
pub fn logit_gradient(actions: &[ActionTriple], probs: &[[f64; DEVICE_HEADS]], returns: &[f64]) -> Result<Array2<f64>> {
    if actions.len() != probs.len() || actions.len() != returns.len() {
        return Err(Error::Contract(format!(
            "{} actions, {} probabilities and {} returns",
            actions.len(),
            probs.len(),
            returns.len()
        )));
    }
    Ok(Array2::from_shape_fn((actions.len(), DEVICE_HEADS), |(i, k)| {
        let a = if actions[i].as_array()[k] { 1.0 } else { 0.0 };
        (a - probs[i][k]) * returns[i]
    }))
}

/// Ascent direction of the expected return, summed over all steps of the trajectory.
pub fn policy_gradient(net: &Network, trajectory: &Trajectory, returns: &[f64]) -> Result<Gradients> {
    if returns.len() != trajectory.len() {
        return Err(Error::Contract(format!(
            "{} returns for a trajectory of {} steps",
            returns.len(),
            trajectory.len()
        )));
    }
    if trajectory.is_empty() {
        return Ok(Gradients::zeros_like(net));
    }
    let grad = logit_gradient(&trajectory.actions, &trajectory.probs, returns)?;
    let trace = if trajectory.traces.len() == trajectory.len() {
        ForwardTrace::stack(&trajectory.traces)?
    } else {
        let width = net.input_size();
        let mut data = Vec::with_capacity(trajectory.len() * width);
        for s in &trajectory.states {
            data.extend_from_slice(s.as_slice());
        }
        let states =
            Array2::from_shape_vec((trajectory.len(), width), data).map_err(|e| Error::Shape(e.to_string()))?;
        net.forward(states.view())?.1
    };
    net.backward_logits(&trace, grad.view())
}

/// Log-likelihood of the stored actions recomputed from the network.
pub fn recompute_log_prob(net: &Network, trajectory: &Trajectory) -> Result<f64> {
    let mut total = 0.0;
    for (s, a) in trajectory.states.iter().zip(&trajectory.actions) {
        total += log_prob(&probs_of(&net.predict(s.as_slice())?)?, *a);
    }
    Ok(total)
}

/// Acts on each device whose probability exceeds one half.
#[derive(Debug, Clone, Copy)]
pub struct GreedyBernoulli<'a>(pub &'a Network);

impl Policy for GreedyBernoulli<'_> {
    fn act(&mut self, state: &StateVector, _rng: &mut AgentRng) -> Result<ActionTriple> {
        let probs = probs_of(&self.0.predict(state.as_slice())?)?;
        Ok(ActionTriple::from_array(probs.map(|p| p > 0.5)))
    }
}

/// Samples actions like during training.
#[derive(Debug, Clone, Copy)]
pub struct SampledBernoulli<'a>(pub &'a Network);

impl Policy for SampledBernoulli<'_> {
    fn act(&mut self, state: &StateVector, rng: &mut AgentRng) -> Result<ActionTriple> {
        sample_actions(self.0, state, rng).map(|(a, _)| a)
    }
}

/// One ascent step from the collected days, then the buffers are emptied.
/// The gradient is averaged over the days of the batch.
pub fn apply_update(net: &mut Network, trajectory: &mut Trajectory, config: &DpgConfig) -> Result<()> {
    if trajectory.days() == 0 {
        trajectory.clear();
        return Ok(());
    }
    let returns = scaled_returns(&trajectory.rewards, &trajectory.day_ends, config.gamma, config.returns)?;
    let mut grads = policy_gradient(net, trajectory, &returns)?;
    grads.scale(1.0 / trajectory.days() as f64);
    trajectory.clear();
    net.sgd_step(&grads, config.alpha, Direction::Ascent)
}

/// Trains a policy network on random days of `household`.
pub fn train_dpg(
    household: &Household,
    config: &DpgConfig,
    coeff: &RewardCoefficients,
    rng: &mut AgentRng,
) -> Result<TrainOutcome> {
    config.validate()?;
    household.require_days()?;
    let env = &household.config;
    let mut sizes = vec![env.state_dim()];
    sizes.extend(&config.hidden);
    sizes.push(DEVICE_HEADS);
    let mut net = Network::new(&sizes, OutputMode::SigmoidPerUnit, rng.next_u64())?;
    let mut curve = LearningCurve::default();
    let mut trajectory = Trajectory::default();
    let days: Vec<usize> = (0..household.len()).collect();

    for episode in 0..config.episodes {
        let mut stats = EpisodeStats::default();
        for _ in 0..config.days_per_episode {
            let day = *days.choose(rng).expect("days checked non-empty");
            let tariff = &household.tariffs[day];
            let mut state = EnvState::reset(env, &household.days[day])?;
            loop {
                let s = encode_state(&state, env, tariff)?;
                let (action, probs, trace) = sample_actions_traced(&net, &s, rng)?;
                trajectory.push(s, action, probs, trace);
                if state.step(env, action)? {
                    break;
                }
            }
            let record = DayRecord::from_state(&state, household, day, coeff)?;
            trajectory.end_day(record.reward)?;
            stats.push(&record);
        }
        if (episode + 1) % config.update_every_episodes == 0 {
            apply_update(&mut net, &mut trajectory, config)?;
        }
        curve.points.push(stats.point(episode));
    }
    Ok(TrainOutcome { network: net, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn policy_net(seed: u64) -> Network {
        Network::new(&[2, 6, DEVICE_HEADS], OutputMode::SigmoidPerUnit, seed).unwrap()
    }

    /// Sigmoid network whose outputs are `probs` for every input.
    fn constant(probs: [f64; 3]) -> Network {
        let mut n = policy_net(1);
        for w in n.weights_mut() {
            w.fill(0.0);
        }
        let last = n.biases_mut().len() - 1;
        for (k, p) in probs.iter().enumerate() {
            n.biases_mut()[last][k] = (p / (1.0 - p)).ln();
        }
        n
    }

    fn state() -> StateVector {
        StateVector(vec![0.3, 0.7])
    }

    #[test]
    fn returns_examples() {
        let g = discounted_returns(&[0.0, 0.0, 10.0], &[3], 0.99, false).unwrap();
        for (a, b) in g.iter().zip([9.801, 9.9, 10.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(discounted_returns(&[1.0, 2.0, 3.0], &[3], 0.0, false).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(discounted_returns(&[5.0, 7.0], &[1, 2], 0.99, false).unwrap(), vec![5.0, 7.0]);
    }

    #[test]
    fn returns_standardized() {
        let g = discounted_returns(&[0.0, 1.0, 0.0, 3.0], &[2, 4], 0.9, true).unwrap();
        let mean = g.iter().sum::<f64>() / 4.0;
        let var = g.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_baseline_centres_each_position() {
        // two identical-length days: positions are centred separately
        let g = scaled_returns(&[0.0, 2.0, 0.0, 4.0], &[2, 4], 1.0, ReturnScaling::StepBaseline).unwrap();
        assert!((g[0] + g[2]).abs() < 1e-12);
        assert!((g[1] + g[3]).abs() < 1e-12);
        assert!((g[0] - g[1]).abs() < 1e-12);
        let var = g.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!((var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn returns_reject_bad_boundaries() {
        assert!(discounted_returns(&[1.0, 2.0], &[1], 0.9, false).is_err());
        assert!(discounted_returns(&[1.0, 2.0], &[2, 2], 0.9, false).is_err());
        assert!(discounted_returns(&[1.0], &[3], 0.9, false).is_err());
    }

    #[test]
    fn logit_gradient_examples() {
        let g = logit_gradient(&[ActionTriple::new(true, false, false)], &[[0.5, 0.5, 0.5]], &[2.0]).unwrap();
        assert!((g[[0, 0]] - 1.0).abs() < 1e-15);
        assert!((g[[0, 1]] + 1.0).abs() < 1e-15);
        assert!(logit_gradient(&[ActionTriple::default()], &[], &[1.0]).is_err());
    }

    fn collect(net: &Network, steps: usize, seed: u64) -> Trajectory {
        let mut rng = AgentRng::seed_from_u64(seed);
        let mut traj = Trajectory::default();
        for i in 0..steps {
            let s = StateVector(vec![i as f64 / steps as f64, 1.0 - i as f64 / steps as f64]);
            let (a, p, tr) = sample_actions_traced(net, &s, &mut rng).unwrap();
            traj.push(s, a, p, tr);
        }
        traj.end_day(3.0).unwrap();
        traj
    }

    #[test]
    fn zero_returns_give_zero_gradient() {
        let net = policy_net(4);
        let traj = collect(&net, 5, 0);
        let g = policy_gradient(&net, &traj, &[0.0; 5]).unwrap();
        assert!(g.flatten().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_linear_in_returns() {
        let net = policy_net(4);
        let traj = collect(&net, 6, 1);
        let returns = [0.5, -1.0, 2.0, 0.25, 1.0, -0.75];
        let doubled: Vec<f64> = returns.iter().map(|g| g * 2.0).collect();
        let g1 = policy_gradient(&net, &traj, &returns).unwrap().flatten();
        let g2 = policy_gradient(&net, &traj, &doubled).unwrap().flatten();
        for (a, b) in g1.iter().zip(&g2) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn stored_and_recomputed_traces_agree() {
        let net = policy_net(4);
        let mut traj = collect(&net, 4, 2);
        let returns = [1.0, -2.0, 0.5, 3.0];
        let stored = policy_gradient(&net, &traj, &returns).unwrap().flatten();
        traj.traces.clear();
        let fresh = policy_gradient(&net, &traj, &returns).unwrap().flatten();
        for (a, b) in stored.iter().zip(&fresh) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(policy_gradient(&net, &traj, &[1.0]).is_err());
    }

    #[test]
    fn log_prob_consistent() {
        let net = policy_net(9);
        let traj = collect(&net, 24, 3);
        assert!((traj.log_prob() - recompute_log_prob(&net, &traj).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn saturated_heads_always_fire() {
        let net = constant([1.0 - 1e-12; 3]);
        let mut rng = AgentRng::seed_from_u64(0);
        let hits = (0..10_000)
            .filter(|_| sample_actions(&net, &state(), &mut rng).unwrap().0 == ActionTriple::new(true, true, true))
            .count();
        assert!(hits as f64 / 10_000.0 >= 0.999);
    }

    #[test]
    fn zero_network_is_fair_coin() {
        let net = constant([0.5; 3]);
        let mut rng = AgentRng::seed_from_u64(1);
        let mut fires = [0usize; 3];
        for _ in 0..10_000 {
            let (a, _) = sample_actions(&net, &state(), &mut rng).unwrap();
            for (f, x) in fires.iter_mut().zip(a.as_array()) {
                *f += usize::from(x);
            }
        }
        for f in fires {
            assert!((f as f64 / 10_000.0 - 0.5).abs() < 0.02);
        }
    }

    #[test]
    fn heads_independent() {
        let net = constant([0.9, 0.1, 0.5]);
        let mut rng = AgentRng::seed_from_u64(2);
        let draws = 100_000;
        let joint = (0..draws)
            .filter(|_| {
                let (a, _) = sample_actions(&net, &state(), &mut rng).unwrap();
                a.ac && !a.ev
            })
            .count();
        assert!((joint as f64 / draws as f64 - 0.81).abs() < 0.02 * 0.81);
    }

    #[test]
    fn update_empties_buffers() {
        let mut net = policy_net(5);
        let mut traj = collect(&net, 5, 4);
        let before = net.flat_params();
        apply_update(&mut net, &mut traj, &DpgConfig { returns: ReturnScaling::Raw, ..Default::default() }).unwrap();
        assert!(traj.is_empty() && traj.days() == 0 && traj.traces.is_empty());
        assert_ne!(net.flat_params(), before);
    }

    #[test]
    fn end_day_places_reward_last() {
        let net = policy_net(5);
        let traj = collect(&net, 3, 0);
        assert_eq!(traj.rewards, vec![0.0, 0.0, 3.0]);
        assert_eq!(traj.day_ends, vec![3]);
        let mut empty = Trajectory::default();
        assert!(empty.end_day(1.0).is_err());
    }
}
