//! Multi-action deep Q-learning over the eight combined actions.
//!
//! One network serves both as the online estimate and as the source of the
//! bootstrap target; experience replay is the only stabiliser.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{AgentRng, DayRecord, EpisodeStats, Policy, TrainOutcome};
use crate::env::{
    decode_combined_action, encode_state, ActionTriple, EnvState, StateVector, Transition, COMBINED_ACTIONS,
};
use crate::error::{Error, Result};
use crate::metrics::LearningCurve;
use crate::neural::{Direction, Network, OutputMode};
use crate::rewards::RewardCoefficients;
use crate::scenario::Household;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the episodes over which epsilon decays linearly.
    pub epsilon_decay_fraction: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Transitions collected before the first update.
    pub warmup: usize,
    pub episodes: usize,
    pub days_per_episode: usize,
    /// Environment steps between two replay updates.
    pub train_every: usize,
    /// When set, replay updates run in bursts after every this many
    /// episodes instead of during collection.
    pub update_every_episodes: Option<usize>,
    /// Multiplies the end-of-day reward before it enters the replay buffer.
    pub reward_scale: f64,
    pub hidden: Vec<usize>,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            alpha: 1e-2,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.5,
            batch_size: 32,
            replay_capacity: 100_000,
            warmup: 1_000,
            episodes: 5_000,
            days_per_episode: 20,
            train_every: 1,
            update_every_episodes: None,
            reward_scale: 1.0,
            hidden: vec![100, 100, 100],
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !unit(self.epsilon_start) || !unit(self.epsilon_end) || !unit(self.epsilon_decay_fraction) {
            return Err(Error::Config("epsilon schedule values must lie in [0, 1]".into()));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return Err(Error::Config(format!("reward_scale must be positive, got {}", self.reward_scale)));
        }
        if self.batch_size == 0 || self.replay_capacity == 0 || self.days_per_episode == 0 || self.train_every == 0 {
            return Err(Error::Config(
                "batch_size, replay_capacity, days_per_episode and train_every must be >= 1".into(),
            ));
        }
        if self.update_every_episodes == Some(0) {
            return Err(Error::Config("update_every_episodes must be >= 1".into()));
        }
        Ok(())
    }

    /// Exploration rate during episode `episode`.
    pub fn epsilon(&self, episode: usize) -> f64 {
        let horizon = self.epsilon_decay_fraction * self.episodes as f64;
        if horizon <= 0.0 || episode as f64 >= horizon {
            return self.epsilon_end;
        }
        let frac = episode as f64 / horizon;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

/// Fixed-capacity ring of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: Vec::new(), next: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Adds a transition, overwriting the oldest once full.
    pub fn push(&mut self, transition: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(transition);
        } else {
            self.items[self.next] = transition;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.items.get(index)
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices(&self, batch: usize, rng: &mut impl RngCore) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..batch).map(|_| rng.gen_range(0..self.items.len())).collect()
    }

    pub fn sample(&self, batch: usize, rng: &mut impl RngCore) -> Vec<&Transition> {
        self.sample_indices(batch, rng).into_iter().map(|i| &self.items[i]).collect()
    }
}

fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy combined-action index. Greedy ties go to the lowest index.
pub fn select_action(net: &Network, state: &StateVector, epsilon: f64, rng: &mut impl RngCore) -> Result<usize> {
    let explore = rng.gen::<f64>() < epsilon;
    if explore {
        return Ok(rng.gen_range(0..COMBINED_ACTIONS));
    }
    greedy_action(net, state)
}

pub fn greedy_action(net: &Network, state: &StateVector) -> Result<usize> {
    let q = net.predict(state.as_slice())?;
    Ok(argmax_lowest(&q))
}

fn stack_states<'a>(states: impl ExactSizeIterator<Item = &'a StateVector>, width: usize) -> Result<Array2<f64>> {
    let rows = states.len();
    let mut data = Vec::with_capacity(rows * width);
    for s in states {
        if s.len() != width {
            return Err(Error::Shape(format!("state of width {} where {width} expected", s.len())));
        }
        data.extend_from_slice(s.as_slice());
    }
    Array2::from_shape_vec((rows, width), data).map_err(|e| Error::Shape(e.to_string()))
}

/// Bootstrap targets `r + gamma * max_a' Q(s', a')`, or `r` for terminal items.
pub fn td_targets(net: &Network, batch: &[&Transition], gamma: f64) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let next = stack_states(batch.iter().map(|t| &t.next_state), net.input_size())?;
    let (q_next, _) = net.forward(next.view())?;
    Ok(batch
        .iter()
        .zip(q_next.rows())
        .map(
            |(t, row)| {
                if t.done {
                    t.reward
                } else {
                    t.reward + gamma * row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                }
            },
        )
        .collect())
}

/// Gradient of the mean squared TD error with respect to the Q outputs.
/// Only the taken action of each row is non-zero.
pub fn td_output_gradient(q: ArrayView2<f64>, actions: &[usize], targets: &[f64]) -> Result<Array2<f64>> {
    let n = q.nrows();
    if actions.len() != n || targets.len() != n {
        return Err(Error::Contract("actions and targets must match the batch".into()));
    }
    let mut grad = Array2::zeros(q.dim());
    for (i, (&a, &y)) in actions.iter().zip(targets).enumerate() {
        if a >= q.ncols() {
            return Err(Error::Bounds { index: a, len: q.ncols() });
        }
        grad[[i, a]] = 2.0 * (q[[i, a]] - y) / n as f64;
    }
    Ok(grad)
}

/// One descent step on the mean squared TD error. Returns the loss before the step.
pub fn dqn_update(net: &mut Network, batch: &[&Transition], gamma: f64, alpha: f64) -> Result<f64> {
    let targets = td_targets(net, batch, gamma)?;
    let states = stack_states(batch.iter().map(|t| &t.state), net.input_size())?;
    let actions: Vec<usize> = batch.iter().map(|t| t.action.index()).collect();
    let (q, trace) = net.forward(states.view())?;
    let loss = actions.iter().zip(&targets).enumerate().map(|(i, (&a, &y))| (q[[i, a]] - y).powi(2)).sum::<f64>()
        / batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("TD loss is {loss}")));
    }
    let grad = td_output_gradient(q.view(), &actions, &targets)?;
    let grads = net.backward(&trace, grad.view())?;
    net.sgd_step(&grads, alpha, Direction::Descent)?;
    Ok(loss)
}

/// Greedy policy of a Q-network.
#[derive(Debug, Clone, Copy)]
pub struct GreedyQ<'a>(pub &'a Network);

impl Policy for GreedyQ<'_> {
    fn act(&mut self, state: &StateVector, _rng: &mut AgentRng) -> Result<ActionTriple> {
        decode_combined_action(greedy_action(self.0, state)?)
    }
}

fn replay_round(net: &mut Network, buffer: &ReplayBuffer, config: &DqnConfig, rng: &mut AgentRng) -> Result<()> {
    let batch = buffer.sample(config.batch_size, rng);
    dqn_update(net, &batch, config.gamma, config.alpha).map(|_| ())
}

/// Trains a Q-network on random days of `household`.
pub fn train_dqn(
    household: &Household,
    config: &DqnConfig,
    coeff: &RewardCoefficients,
    rng: &mut AgentRng,
) -> Result<TrainOutcome> {
    config.validate()?;
    household.require_days()?;
    let env = &household.config;
    let mut sizes = vec![env.state_dim()];
    sizes.extend(&config.hidden);
    sizes.push(COMBINED_ACTIONS);
    let mut net = Network::new(&sizes, OutputMode::Linear, rng.next_u64())?;
    let mut curve = LearningCurve::default();
    let mut buffer = ReplayBuffer::new(config.replay_capacity);
    let ready = config.warmup.max(config.batch_size);
    let mut steps = 0usize;
    let mut pending = 0usize;
    let days: Vec<usize> = (0..household.len()).collect();

    for episode in 0..config.episodes {
        let epsilon = config.epsilon(episode);
        let mut stats = EpisodeStats::default();
        for _ in 0..config.days_per_episode {
            let day = *days.choose(rng).expect("days checked non-empty");
            let tariff = &household.tariffs[day];
            let mut state = EnvState::reset(env, &household.days[day])?;
            let mut s = encode_state(&state, env, tariff)?;
            loop {
                let a = select_action(&net, &s, epsilon, rng)?;
                let action = decode_combined_action(a)?;
                let done = state.step(env, action)?;
                let next = encode_state(&state, env, tariff)?;
                let reward = if done {
                    let record = DayRecord::from_state(&state, household, day, coeff)?;
                    let r = record.reward;
                    stats.push(&record);
                    r * config.reward_scale
                } else {
                    0.0
                };
                buffer.push(Transition { state: s, action, reward, next_state: next.clone(), done });
                steps += 1;
                pending += 1;
                if config.update_every_episodes.is_none()
                    && buffer.len() >= ready
                    && steps.is_multiple_of(config.train_every)
                {
                    replay_round(&mut net, &buffer, config, rng)?;
                }
                s = next;
                if done {
                    break;
                }
            }
        }
        if let Some(every) = config.update_every_episodes {
            if (episode + 1) % every == 0 && buffer.len() >= ready {
                for _ in 0..pending / config.train_every {
                    replay_round(&mut net, &buffer, config, rng)?;
                }
                pending = 0;
            }
        }
        curve.points.push(stats.point(episode));
    }
    Ok(TrainOutcome { network: net, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn net(outputs: usize) -> Network {
        Network::new(&[2, 8, outputs], OutputMode::Linear, 3).unwrap()
    }

    fn transition(reward: f64, done: bool, next: [f64; 2]) -> Transition {
        Transition {
            state: StateVector(vec![0.2, 0.4]),
            action: ActionTriple::new(true, false, false),
            reward,
            next_state: StateVector(next.to_vec()),
            done,
        }
    }

    /// Network whose every output equals `value` regardless of input.
    fn constant(value: f64) -> Network {
        let mut n = net(8);
        for w in n.weights_mut() {
            w.fill(0.0);
        }
        let last = n.biases_mut().len() - 1;
        n.biases_mut()[last].fill(value);
        n
    }

    #[test]
    fn epsilon_schedule() {
        let c = DqnConfig { episodes: 100, ..Default::default() };
        assert_eq!(c.epsilon(0), 1.0);
        assert!((c.epsilon(25) - 0.525).abs() < 1e-12);
        assert_eq!(c.epsilon(50), 0.05);
        assert_eq!(c.epsilon(99), 0.05);
    }

    #[test]
    fn greedy_picks_argmax_and_lowest_tie() {
        let mut n = constant(0.0);
        let mut rng = AgentRng::seed_from_u64(0);
        let s = StateVector(vec![0.5, 0.5]);
        assert_eq!(select_action(&n, &s, 0.0, &mut rng).unwrap(), 0);
        let last = n.biases_mut().len() - 1;
        n.biases_mut()[last][3] = 9.0;
        assert_eq!(select_action(&n, &s, 0.0, &mut rng).unwrap(), 3);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let n = constant(0.0);
        let mut rng = AgentRng::seed_from_u64(11);
        let s = StateVector(vec![0.5, 0.5]);
        let mut counts = [0usize; 8];
        let draws = 100_000;
        for _ in 0..draws {
            counts[select_action(&n, &s, 1.0, &mut rng).unwrap()] += 1;
        }
        let expected = draws as f64 / 8.0;
        for c in counts {
            assert!((c as f64 / draws as f64 - 0.125).abs() < 0.02);
        }
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 7 degrees of freedom, alpha 0.01
        assert!(chi2 < 18.48, "chi2 = {chi2}");
    }

    #[test]
    fn targets() {
        let n = constant(2.0);
        let terminal = transition(5.0, true, [0.1, 0.9]);
        assert_eq!(td_targets(&n, &[&terminal], 0.99).unwrap(), vec![5.0]);
        let live = transition(1.0, false, [0.1, 0.9]);
        assert!((td_targets(&n, &[&live], 0.99).unwrap()[0] - 2.98).abs() < 1e-12);
        assert_eq!(td_targets(&n, &[&live], 0.0).unwrap(), vec![1.0]);
        assert!(td_targets(&n, &[], 0.9).is_err());
    }

    #[test]
    fn terminal_target_ignores_next_state() {
        let n = net(8);
        let a = transition(3.0, true, [0.0, 0.0]);
        let b = transition(3.0, true, [1.0, -4.0]);
        assert_eq!(td_targets(&n, &[&a], 0.99).unwrap(), td_targets(&n, &[&b], 0.99).unwrap());
    }

    #[test]
    fn output_gradient_masks_actions() {
        let q = Array2::from_shape_fn((4, 8), |(i, j)| (i * 8 + j) as f64 * 0.1);
        let actions = [0, 7, 3, 3];
        let g = td_output_gradient(q.view(), &actions, &[9.0, 9.0, 9.0, 9.0]).unwrap();
        for (row, &a) in g.rows().into_iter().zip(&actions) {
            assert_eq!(row.iter().filter(|v| **v != 0.0).count(), 1);
            assert!(row[a] != 0.0);
        }
    }

    #[test]
    fn fixed_point_leaves_params() {
        let mut n = constant(1.5);
        let t = transition(1.5, true, [0.0, 0.0]);
        let before = n.flat_params();
        let loss = dqn_update(&mut n, &[&t], 0.99, 0.1).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(n.flat_params(), before);
    }

    #[test]
    fn descent_reduces_loss() {
        let mut n = constant(0.0);
        let t = transition(1.0, true, [0.0, 0.0]);
        let first = dqn_update(&mut n, &[&t], 0.99, 0.05).unwrap();
        assert!((first - 1.0).abs() < 1e-12);
        let second = dqn_update(&mut n, &[&t], 0.99, 0.05).unwrap();
        assert!(second < first);
    }

    #[test]
    fn zero_rewards_contract_toward_zero() {
        // two states that hand over to each other forever
        let mut n = net(8);
        let s0 = StateVector(vec![1.0, 0.0]);
        let s1 = StateVector(vec![0.0, 1.0]);
        let items: Vec<Transition> = (0..8)
            .flat_map(|a| {
                let action = decode_combined_action(a).unwrap();
                [
                    Transition { state: s0.clone(), action, reward: 0.0, next_state: s1.clone(), done: false },
                    Transition { state: s1.clone(), action, reward: 0.0, next_state: s0.clone(), done: false },
                ]
            })
            .collect();
        let batch: Vec<&Transition> = items.iter().collect();
        let magnitude = |n: &Network| {
            [&s0, &s1].iter().flat_map(|s| n.predict(s.as_slice()).unwrap()).map(f64::abs).fold(0.0, f64::max)
        };
        let start = magnitude(&n);
        for _ in 0..2000 {
            dqn_update(&mut n, &batch, 0.5, 0.02).unwrap();
        }
        assert!(magnitude(&n) < 0.05 * start.max(1e-3), "{} -> {}", start, magnitude(&n));
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut b = ReplayBuffer::new(3);
        for r in 0..5 {
            b.push(transition(r as f64, true, [0.0, 0.0]));
        }
        assert_eq!(b.len(), 3);
        let mut rewards: Vec<f64> = (0..3).map(|i| b.get(i).unwrap().reward).collect();
        rewards.sort_by(f64::total_cmp);
        assert_eq!(rewards, vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn replay_sampling_is_uniform() {
        let mut b = ReplayBuffer::new(50);
        for r in 0..50 {
            b.push(transition(r as f64, true, [0.0, 0.0]));
        }
        let mut rng = AgentRng::seed_from_u64(5);
        let draws = 100_000;
        let mut counts = [0f64; 50];
        for i in b.sample_indices(draws, &mut rng) {
            counts[i] += 1.0;
        }
        let expected = draws as f64 / 50.0;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        // chi-square critical value, 49 degrees of freedom, alpha 0.01
        assert!(chi2 < 74.92, "chi2 = {chi2}");
    }

    #[test]
    fn validates_config() {
        assert!(DqnConfig::default().validate().is_ok());
        assert!(DqnConfig { gamma: 1.5, ..Default::default() }.validate().is_err());
        assert!(DqnConfig { epsilon_end: -0.1, ..Default::default() }.validate().is_err());
        assert!(DqnConfig { update_every_episodes: Some(0), ..Default::default() }.validate().is_err());
    }
}
