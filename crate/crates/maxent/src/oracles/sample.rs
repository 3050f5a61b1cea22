//! Unknown-model oracles backed by an episodic simulator.
//!
//! Planning keeps a persistent table of transition counts. Each planning
//! call repeatedly: builds the set of known states (every action tried at
//! least `m` times), plans on the empirical model where unknown states are
//! absorbing and maximally rewarding, overrides the policy to take the
//! least-tried action on unknown states, and certifies stability by rolling
//! fresh trajectories — any visit to an unknown state rejects the iteration
//! and the counts keep the progress. Density estimation is plain rollout
//! frequency, discount-weighted over a truncated horizon.
//!
//! All sampling is counter-based: every draw is keyed by
//! (seed, episode id, step, slot), so trajectories are reproducible and
//! independent of evaluation order.

use crate::mdp::{MdpError, PolicyRef, StateDistribution, StationaryPolicy, TabularMDP};
use crate::oracles::exact::{value_iteration_plan, PlanError};
use crate::rng::{derive_seed, sample_index, CounterRng};
use ndarray::{Array1, Array3, ArrayView1};
use thiserror::Error;

const DRAW_ACTION: u64 = 0;
const DRAW_COMPONENT: u64 = 1;
const DRAW_RESET: u64 = 2;
const DRAW_TRANSITION: u64 = 3;

#[derive(Debug, Error)]
pub enum SampleOracleError {
    #[error("parameter {name} = {value} is outside its valid range")]
    BadParameter { name: &'static str, value: f64 },
    #[error("reward has length {got}; simulator has {expected} states")]
    RewardLength { got: usize, expected: usize },
    #[error("reward sup norm {norm} exceeds the declared bound {bound}")]
    RewardExceedsBound { norm: f64, bound: f64 },
    #[error(
        "planner exceeded the safety cap of {cap} inner iterations without certifying stability"
    )]
    NonTermination { cap: u64 },
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Episodic access to a hidden tabular MDP.
///
/// Consumers see only the state/action counts, the discount, and sampled
/// transitions; the transition tensor itself stays private so the
/// unknown-model code path cannot cheat.
#[derive(Clone, Debug)]
pub struct EpisodicSimulator {
    mdp: TabularMDP,
    env_rng: CounterRng,
    t0_max: usize,
    next_episode: u64,
    current: Option<Episode>,
}

#[derive(Clone, Copy, Debug)]
struct Episode {
    id: u64,
    state: usize,
    steps: usize,
}

impl EpisodicSimulator {
    pub fn new(mdp: TabularMDP, seed: u64) -> Self {
        Self {
            mdp,
            env_rng: CounterRng::new(derive_seed(seed, 0x454E56)),
            t0_max: 1_000_000,
            next_episode: 0,
            current: None,
        }
    }

    /// Cap on steps per episode; exceeding it is a programming error.
    pub fn with_episode_cap(mut self, t0_max: usize) -> Self {
        self.t0_max = t0_max;
        self
    }

    pub fn n_states(&self) -> usize {
        self.mdp.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    pub fn gamma(&self) -> f64 {
        self.mdp.gamma()
    }

    pub fn t0_max(&self) -> usize {
        self.t0_max
    }

    /// Episodes started so far; also the id of the next episode.
    pub fn episodes_started(&self) -> u64 {
        self.next_episode
    }

    /// Start a new episode: draws `s0 ~ d0` and returns `(episode id, s0)`.
    pub fn reset(&mut self) -> (u64, usize) {
        let id = self.next_episode;
        self.next_episode += 1;
        let u = self.env_rng.f64_at(id, 0, DRAW_RESET);
        let s0 = sample_index(self.mdp.d0().as_slice().expect("d0 is contiguous"), u);
        self.current = Some(Episode { id, state: s0, steps: 0 });
        (id, s0)
    }

    /// Take one step with the given action; returns the successor state.
    pub fn step(&mut self, action: usize) -> usize {
        let ep = self.current.as_mut().expect("step() called before reset()");
        assert!(ep.steps < self.t0_max, "episode exceeded the step cap {}", self.t0_max);
        assert!(action < self.mdp.n_actions(), "action {action} out of range");
        let u = self.env_rng.f64_at(ep.id, ep.steps as u64 + 1, DRAW_TRANSITION);
        let row: Vec<f64> =
            (0..self.mdp.n_states()).map(|n| self.mdp.prob(ep.state, action, n)).collect();
        let next = sample_index(&row, u);
        ep.state = next;
        ep.steps += 1;
        next
    }
}

/// One sampled episode: `states.len() == actions.len() + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub episode: u64,
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Trajectory {
    pub fn transitions(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        (0..self.actions.len()).map(|t| (self.states[t], self.actions[t], self.states[t + 1]))
    }
}

/// Roll one episode of `steps` transitions under the policy.
///
/// Mixture components are drawn once per episode. Action draws are keyed by
/// the simulator's episode id, so distinct episodes never share randomness.
pub fn rollout(
    sim: &mut EpisodicSimulator,
    policy: PolicyRef<'_>,
    agent: &CounterRng,
    steps: usize,
) -> Trajectory {
    let (episode, s0) = sim.reset();
    let stationary: &StationaryPolicy = match policy {
        PolicyRef::Stationary(p) => p,
        PolicyRef::Mixture(m) => {
            let u = agent.f64_at(episode, 0, DRAW_COMPONENT);
            &m.components()[sample_index(m.weights(), u)]
        }
    };
    let mut states = Vec::with_capacity(steps + 1);
    let mut actions = Vec::with_capacity(steps);
    states.push(s0);
    let mut state = s0;
    for t in 0..steps {
        let u = agent.f64_at(episode, t as u64, DRAW_ACTION);
        let row = stationary.probs().row(state);
        let action = sample_index(row.as_slice().expect("policy rows are contiguous"), u);
        state = sim.step(action);
        actions.push(action);
        states.push(state);
    }
    Trajectory { episode, states, actions }
}

/// Persistent transition counts shared across planner invocations.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionCounts {
    n_states: usize,
    n_actions: usize,
    /// counts[(s, a, s')]
    counts: Array3<u64>,
}

impl TransitionCounts {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, counts: Array3::zeros((n_states, n_actions, n_states)) }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn record(&mut self, s: usize, a: usize, next: usize) {
        self.counts[(s, a, next)] += 1;
    }

    pub fn record_trajectory(&mut self, trajectory: &Trajectory) {
        for (s, a, next) in trajectory.transitions() {
            self.record(s, a, next);
        }
    }

    pub fn count(&self, s: usize, a: usize, next: usize) -> u64 {
        self.counts[(s, a, next)]
    }

    /// Times action `a` has been tried in state `s`.
    pub fn action_total(&self, s: usize, a: usize) -> u64 {
        (0..self.n_states).map(|n| self.counts[(s, a, n)]).sum()
    }

    /// The least-tried action in `s`; ties break to the lowest index.
    pub fn least_tried_action(&self, s: usize) -> usize {
        (0..self.n_actions)
            .min_by_key(|&a| self.action_total(s, a))
            .expect("at least one action")
    }

    pub fn total_records(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Empirical transition row, if the pair has been tried at all.
    pub fn empirical_row(&self, s: usize, a: usize) -> Option<Array1<f64>> {
        let total = self.action_total(s, a);
        if total == 0 {
            return None;
        }
        Some(Array1::from_iter(
            (0..self.n_states).map(|n| self.counts[(s, a, n)] as f64 / total as f64),
        ))
    }

    /// Serialize as a line-oriented snapshot: one `c s a s' count` line per
    /// nonzero cell.
    pub fn to_snapshot(&self) -> String {
        let mut out = String::new();
        out.push_str("# maxent counts v1\n");
        out.push_str(&format!("n_states {}\n", self.n_states));
        out.push_str(&format!("n_actions {}\n", self.n_actions));
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                for next in 0..self.n_states {
                    let c = self.counts[(s, a, next)];
                    if c > 0 {
                        out.push_str(&format!("c {s} {a} {next} {c}\n"));
                    }
                }
            }
        }
        out
    }

    /// Parse a snapshot produced by [`Self::to_snapshot`].
    pub fn from_snapshot(text: &str) -> Result<Self, String> {
        let mut n_states = None;
        let mut n_actions = None;
        let mut cells = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let err = |msg: &str| format!("counts snapshot line {}: {msg}", lineno + 1);
            match fields[0] {
                "n_states" if fields.len() == 2 => {
                    n_states =
                        Some(fields[1].parse::<usize>().map_err(|e| err(&e.to_string()))?);
                }
                "n_actions" if fields.len() == 2 => {
                    n_actions =
                        Some(fields[1].parse::<usize>().map_err(|e| err(&e.to_string()))?);
                }
                "c" if fields.len() == 5 => {
                    let parse = |f: &str| f.parse::<u64>().map_err(|e| err(&e.to_string()));
                    cells.push((parse(fields[1])?, parse(fields[2])?, parse(fields[3])?, parse(fields[4])?));
                }
                _ => return Err(err(&format!("unrecognized record {:?}", fields[0]))),
            }
        }
        let n_states = n_states.ok_or("counts snapshot missing n_states")?;
        let n_actions = n_actions.ok_or("counts snapshot missing n_actions")?;
        let mut counts = Self::new(n_states, n_actions);
        for (s, a, next, c) in cells {
            let (s, a, next) = (s as usize, a as usize, next as usize);
            if s >= n_states || next >= n_states || a >= n_actions {
                return Err(format!("counts snapshot cell ({s}, {a}, {next}) out of range"));
            }
            counts.counts[(s, a, next)] += c;
        }
        Ok(counts)
    }
}

/// States whose every action has at least `m` recorded tries.
#[derive(Clone, Debug)]
pub struct KnownSet {
    pub m: u64,
    members: Vec<bool>,
}

impl KnownSet {
    pub fn from_counts(counts: &TransitionCounts, m: u64) -> Self {
        let members = (0..counts.n_states())
            .map(|s| (0..counts.n_actions()).all(|a| counts.action_total(s, a) >= m))
            .collect();
        Self { m, members }
    }

    pub fn all(n_states: usize, m: u64) -> Self {
        Self { m, members: vec![true; n_states] }
    }

    pub fn empty(n_states: usize, m: u64) -> Self {
        Self { m, members: vec![false; n_states] }
    }

    pub fn from_members(members: Vec<bool>, m: u64) -> Self {
        Self { m, members }
    }

    pub fn contains(&self, s: usize) -> bool {
        self.members[s]
    }

    pub fn len(&self) -> usize {
        self.members.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_full(&self) -> bool {
        self.members.iter().all(|&b| b)
    }

    /// True if `other` contains every member of `self`.
    pub fn subset_of(&self, other: &KnownSet) -> bool {
        self.members.iter().zip(&other.members).all(|(&a, &b)| !a || b)
    }
}

/// The planning model induced by a known set: empirical (or true)
/// transitions on known states, absorbing self-loops elsewhere, and the
/// optimistic reward `bound` on unknown states.
#[derive(Clone, Debug)]
pub struct InducedModel {
    pub mdp: TabularMDP,
    pub reward: Array1<f64>,
}

impl InducedModel {
    /// Build from empirical counts. `d0` is the initial distribution to plan
    /// with; callers without knowledge of the true one pass uniform (value
    /// iteration's greedy policy does not depend on it).
    pub fn from_counts(
        counts: &TransitionCounts,
        known: &KnownSet,
        reward: ArrayView1<f64>,
        bound: f64,
        gamma: f64,
        d0: Array1<f64>,
    ) -> Result<Self, SampleOracleError> {
        let n = counts.n_states();
        let k = counts.n_actions();
        let mut t = Array3::zeros((n, k, n));
        for s in 0..n {
            for a in 0..k {
                if known.contains(s) {
                    let row = counts
                        .empirical_row(s, a)
                        .expect("known state has counts for every action");
                    for next in 0..n {
                        t[(s, a, next)] = row[next];
                    }
                } else {
                    t[(s, a, s)] = 1.0;
                }
            }
        }
        let r_k = Array1::from_iter(
            (0..n).map(|s| if known.contains(s) { reward[s] } else { bound }),
        );
        Ok(Self { mdp: TabularMDP::new(t, gamma, d0)?, reward: r_k })
    }

    /// Build from the true transition tensor; used to verify the planner's
    /// value bounds against exact evaluation.
    pub fn from_mdp(
        mdp: &TabularMDP,
        known: &KnownSet,
        reward: ArrayView1<f64>,
        bound: f64,
    ) -> Result<Self, SampleOracleError> {
        let n = mdp.n_states();
        let k = mdp.n_actions();
        let mut t = Array3::zeros((n, k, n));
        for s in 0..n {
            for a in 0..k {
                if known.contains(s) {
                    for next in 0..n {
                        t[(s, a, next)] = mdp.prob(s, a, next);
                    }
                } else {
                    t[(s, a, s)] = 1.0;
                }
            }
        }
        let r_k = Array1::from_iter(
            (0..n).map(|s| if known.contains(s) { reward[s] } else { bound }),
        );
        Ok(Self {
            mdp: TabularMDP::new(t, mdp.gamma(), mdp.d0().to_owned())?,
            reward: r_k,
        })
    }
}

/// Parameters of the sample-based planner.
///
/// `from_theory` fills in the sample-complexity defaults; they are far too
/// large for interactive use, so every field stays public for overrides.
#[derive(Clone, Debug)]
pub struct SamplePlanParams {
    /// Overall suboptimality target of the returned policy.
    pub eps: f64,
    /// Failure probability budget.
    pub delta: f64,
    /// Bound on the reward sup norm; also the optimistic reward on unknown
    /// states.
    pub reward_bound: f64,
    /// Tolerance handed to the inner exact planner.
    pub eps1: f64,
    /// Oversampling threshold defining known states.
    pub m: u64,
    /// Certification rollouts per inner iteration.
    pub n: usize,
    /// Transitions per rollout; stability inspects the first `t0` states.
    pub t0: usize,
    /// Hard cap on inner iterations (safety net only).
    pub max_inner: u64,
}

impl SamplePlanParams {
    pub fn from_theory(
        eps: f64,
        delta: f64,
        reward_bound: f64,
        n_states: usize,
        n_actions: usize,
        gamma: f64,
    ) -> Self {
        let s = n_states as f64;
        let a = n_actions as f64;
        let b = reward_bound;
        let horizon_gap = 1.0 - gamma;
        let target = 0.1 * eps;
        let m = (32.0 * b * b * s * (2.0 * s / delta).ln()
            / (horizon_gap * horizon_gap * target * target))
            .ceil();
        let n_inner = 32.0 * s * s * a * (2.0 * s / delta).ln()
            / (horizon_gap * horizon_gap * target * target * delta);
        let n = (b * n_inner.ln() / target).ceil().max(1.0);
        let t0 = horizon_for(target, gamma);
        let m = if m.is_finite() { m as u64 } else { u64::MAX };
        Self {
            eps,
            delta,
            reward_bound,
            eps1: target / b,
            m,
            n: n as usize,
            t0,
            max_inner: m
                .saturating_mul(10)
                .saturating_mul(n_states as u64)
                .saturating_mul(n_actions as u64),
        }
    }

    fn validate(&self, sim: &EpisodicSimulator) -> Result<(), SampleOracleError> {
        let bad = |name: &'static str, value: f64| SampleOracleError::BadParameter { name, value };
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(bad("eps", self.eps));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(bad("delta", self.delta));
        }
        if !(self.reward_bound > 0.0) {
            return Err(bad("reward_bound", self.reward_bound));
        }
        if !(self.eps1 > 0.0) {
            return Err(bad("eps1", self.eps1));
        }
        if self.m == 0 {
            return Err(bad("m", 0.0));
        }
        if self.n == 0 {
            return Err(bad("n", 0.0));
        }
        if self.t0 == 0 || self.t0 > sim.t0_max() {
            return Err(bad("t0", self.t0 as f64));
        }
        Ok(())
    }
}

/// Horizon at which the discounted tail drops below `tail`.
pub fn horizon_for(tail: f64, gamma: f64) -> usize {
    if gamma <= 0.0 {
        return 1;
    }
    let t = (tail.ln() / gamma.ln()).ceil();
    if t.is_finite() && t >= 1.0 {
        t as usize
    } else {
        1
    }
}

/// Diagnostics from one planning call.
#[derive(Clone, Debug)]
pub struct SamplePlanReport {
    pub policy: StationaryPolicy,
    /// Total inner iterations, including the final stable one.
    pub inner_iterations: u64,
    /// Iterations that ended with an escape from the known set.
    pub unstable_iterations: u64,
    /// Known-set size at the start of each inner iteration.
    pub known_sizes: Vec<usize>,
}

/// Incremental sample-based planner; [`sample_plan`] drives it to
/// completion. Exposed so tests can inspect individual inner iterations.
pub struct SamplePlanner<'a> {
    sim: &'a mut EpisodicSimulator,
    counts: &'a mut TransitionCounts,
    reward: Array1<f64>,
    params: SamplePlanParams,
    agent: CounterRng,
}

/// One inner iteration of the planner loop.
pub struct InnerIteration {
    pub policy: StationaryPolicy,
    pub known_size: usize,
    pub trajectories: Vec<Trajectory>,
    pub stable: bool,
}

impl<'a> SamplePlanner<'a> {
    pub fn new(
        sim: &'a mut EpisodicSimulator,
        counts: &'a mut TransitionCounts,
        reward: ArrayView1<f64>,
        params: SamplePlanParams,
        agent_seed: u64,
    ) -> Result<Self, SampleOracleError> {
        params.validate(sim)?;
        if reward.len() != sim.n_states() {
            return Err(SampleOracleError::RewardLength {
                got: reward.len(),
                expected: sim.n_states(),
            });
        }
        let norm = reward.iter().fold(0.0f64, |m, &r| m.max(r.abs()));
        if norm > params.reward_bound * (1.0 + 1e-12) {
            return Err(SampleOracleError::RewardExceedsBound {
                norm,
                bound: params.reward_bound,
            });
        }
        Ok(Self {
            sim,
            counts,
            reward: reward.to_owned(),
            params,
            agent: CounterRng::new(derive_seed(agent_seed, 0x504C414E)),
        })
    }

    /// Run one inner iteration: plan on the induced model, roll
    /// certification trajectories, and record their counts.
    pub fn step(&mut self) -> Result<InnerIteration, SampleOracleError> {
        let known = KnownSet::from_counts(self.counts, self.params.m);
        let known_size = known.len();
        let n_states = self.sim.n_states();
        let uniform = Array1::from_elem(n_states, 1.0 / n_states as f64);
        let induced = InducedModel::from_counts(
            self.counts,
            &known,
            self.reward.view(),
            self.params.reward_bound,
            self.sim.gamma(),
            uniform,
        )?;
        let plan = value_iteration_plan(&induced.mdp, induced.reward.view(), self.params.eps1)?;
        let mut actions =
            plan.policy.as_deterministic().expect("value iteration returns deterministic policies");
        for (s, slot) in actions.iter_mut().enumerate() {
            if !known.contains(s) {
                *slot = self.counts.least_tried_action(s);
            }
        }
        let policy = StationaryPolicy::deterministic(self.sim.n_actions(), &actions);

        let mut stable = true;
        let mut trajectories = Vec::with_capacity(self.params.n);
        for _ in 0..self.params.n {
            let trajectory =
                rollout(self.sim, PolicyRef::Stationary(&policy), &self.agent, self.params.t0);
            self.counts.record_trajectory(&trajectory);
            // an episode escapes if any of its first t0 states is unknown;
            // each such state has its action recorded above, which is what
            // caps the number of unstable iterations at m |S| |A|
            if trajectory.states[..self.params.t0].iter().any(|&s| !known.contains(s)) {
                stable = false;
            }
            trajectories.push(trajectory);
        }
        Ok(InnerIteration { policy, known_size, trajectories, stable })
    }

    /// Iterate until a stable policy is certified.
    pub fn run(mut self) -> Result<SamplePlanReport, SampleOracleError> {
        let mut inner_iterations = 0u64;
        let mut unstable_iterations = 0u64;
        let mut known_sizes = Vec::new();
        loop {
            inner_iterations += 1;
            if inner_iterations > self.params.max_inner {
                return Err(SampleOracleError::NonTermination { cap: self.params.max_inner });
            }
            let iteration = self.step()?;
            known_sizes.push(iteration.known_size);
            if iteration.stable {
                return Ok(SamplePlanReport {
                    policy: iteration.policy,
                    inner_iterations,
                    unstable_iterations,
                    known_sizes,
                });
            }
            unstable_iterations += 1;
        }
    }
}

/// Sample-based planning against the simulator; counts persist across calls.
pub fn sample_plan(
    sim: &mut EpisodicSimulator,
    counts: &mut TransitionCounts,
    reward: ArrayView1<f64>,
    params: SamplePlanParams,
    agent_seed: u64,
) -> Result<SamplePlanReport, SampleOracleError> {
    SamplePlanner::new(sim, counts, reward, params, agent_seed)?.run()
}

/// Estimate the discounted state distribution of a policy by rolling `m`
/// episodes over a horizon of `t0` states and weighting visit frequencies
/// by the (renormalized) discount.
pub fn estimate_density_with(
    sim: &mut EpisodicSimulator,
    policy: PolicyRef<'_>,
    agent_seed: u64,
    m: usize,
    t0: usize,
) -> Result<StateDistribution, SampleOracleError> {
    if m == 0 {
        return Err(SampleOracleError::BadParameter { name: "m", value: 0.0 });
    }
    if t0 == 0 || t0 > sim.t0_max() {
        return Err(SampleOracleError::BadParameter { name: "t0", value: t0 as f64 });
    }
    let gamma = sim.gamma();
    let agent = CounterRng::new(derive_seed(agent_seed, 0x44454E53));
    // weight per (episode, t): (1-gamma) gamma^t / (1 - gamma^t0), which sums
    // to exactly one over t < t0
    let normalizer = if gamma > 0.0 { 1.0 - gamma.powi(t0 as i32) } else { 1.0 };
    let mut acc = Array1::<f64>::zeros(sim.n_states());
    let per_episode = 1.0 / m as f64;
    for _ in 0..m {
        let trajectory = rollout(sim, policy, &agent, t0.saturating_sub(1));
        let mut weight = (1.0 - gamma) / normalizer * per_episode;
        for &s in trajectory.states.iter().take(t0) {
            acc[s] += weight;
            weight *= gamma;
        }
    }
    Ok(StateDistribution::from_computed(acc)?)
}

/// Number of episodes the density estimator needs for `(eps0, delta)`
/// accuracy over a horizon of `t0` states: a Hoeffding bound union-bounded
/// over states and timesteps.
pub fn density_episodes_for(eps0: f64, delta: f64, n_states: usize, t0: usize) -> usize {
    let m = (200.0 / (eps0 * eps0)) * (2.0 * n_states as f64 * t0 as f64 / delta).ln();
    m.ceil().max(1.0) as usize
}

/// Density estimate with the theory-default episode count and horizon:
/// with probability `1 - delta` the result is within `eps0` of the true
/// distribution in sup norm.
pub fn estimate_density(
    sim: &mut EpisodicSimulator,
    policy: PolicyRef<'_>,
    agent_seed: u64,
    eps0: f64,
    delta: f64,
) -> Result<StateDistribution, SampleOracleError> {
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(SampleOracleError::BadParameter { name: "eps0", value: eps0 });
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(SampleOracleError::BadParameter { name: "delta", value: delta });
    }
    let t0 = horizon_for(0.1 * eps0, sim.gamma());
    let m = density_episodes_for(eps0, delta, sim.n_states(), t0);
    estimate_density_with(sim, policy, agent_seed, m, t0)
}

/// Fraction of `n` fresh rollouts whose first `t0` states leave the known
/// set. Diagnostic for the stability rule.
pub fn escape_frequency(
    sim: &mut EpisodicSimulator,
    policy: PolicyRef<'_>,
    known: &KnownSet,
    agent_seed: u64,
    n: usize,
    t0: usize,
) -> f64 {
    assert!(n >= 1, "need at least one rollout");
    assert!(t0 >= 1, "need a positive horizon");
    let agent = CounterRng::new(derive_seed(agent_seed, 0x45534350));
    let mut escapes = 0usize;
    for _ in 0..n {
        let trajectory = rollout(sim, policy, &agent, t0.saturating_sub(1));
        if trajectory.states.iter().take(t0).any(|&s| !known.contains(s)) {
            escapes += 1;
        }
    }
    escapes as f64 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{chain_mdp, make_simulator, random_mdp, random_policy};
    use crate::mdp::MixturePolicy;
    use crate::rng::StreamRng;
    use ndarray::arr1;

    fn deterministic_chain(n: usize, gamma: f64) -> TabularMDP {
        chain_mdp(n, 0.0, gamma).unwrap()
    }

    #[test]
    fn simulator_is_deterministic_per_seed() {
        let mdp = random_mdp(4, 2, 0.9, 5);
        let run = |seed: u64| {
            let mut sim = make_simulator(mdp.clone(), seed);
            let agent = CounterRng::new(1);
            let pi = random_policy(4, 2, 6);
            (0..5)
                .map(|_| rollout(&mut sim, PolicyRef::Stationary(&pi), &agent, 10))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn simulator_one_step_frequencies_match_model() {
        let mdp = random_mdp(4, 3, 0.9, 17);
        let mut sim = make_simulator(mdp.clone(), 99);
        // force episodes that start in state 0 by restarting until s0 == 0
        let mut freq = vec![0usize; 4];
        let mut hits = 0usize;
        let total = 100_000;
        while hits < total {
            let (_, s0) = sim.reset();
            if s0 != 0 {
                continue;
            }
            let next = sim.step(1);
            freq[next] += 1;
            hits += 1;
        }
        for next in 0..4 {
            let p_hat = freq[next] as f64 / total as f64;
            assert!(
                (p_hat - mdp.prob(0, 1, next)).abs() <= 0.01,
                "state {next}: {p_hat} vs {}",
                mdp.prob(0, 1, next)
            );
        }
    }

    #[test]
    fn deterministic_chain_rollout_goes_right() {
        let mdp = deterministic_chain(5, 0.9);
        let mut sim = make_simulator(mdp, 1);
        let agent = CounterRng::new(2);
        let right = StationaryPolicy::deterministic(2, &[1; 5]);
        let traj = rollout(&mut sim, PolicyRef::Stationary(&right), &agent, 6);
        assert_eq!(traj.states, vec![0, 1, 2, 3, 4, 4, 4]);
    }

    #[test]
    fn counts_snapshot_roundtrip() {
        let mut counts = TransitionCounts::new(3, 2);
        counts.record(0, 1, 2);
        counts.record(0, 1, 2);
        counts.record(2, 0, 0);
        let text = counts.to_snapshot();
        let back = TransitionCounts::from_snapshot(&text).unwrap();
        assert_eq!(counts, back);
    }

    #[test]
    fn known_set_threshold() {
        let mut counts = TransitionCounts::new(2, 2);
        for _ in 0..3 {
            counts.record(0, 0, 1);
            counts.record(0, 1, 0);
        }
        counts.record(1, 0, 1);
        let known = KnownSet::from_counts(&counts, 3);
        assert!(known.contains(0));
        assert!(!known.contains(1));
        assert_eq!(known.len(), 1);
    }

    #[test]
    fn fully_known_counts_exit_immediately() {
        let mdp = random_mdp(3, 2, 0.9, 77);
        let m = 25u64;
        // pre-seed counts by sampling the true model
        let mut counts = TransitionCounts::new(3, 2);
        let mut rng = StreamRng::new(5);
        for s in 0..3 {
            for a in 0..2 {
                for _ in 0..m {
                    let row: Vec<f64> = (0..3).map(|n| mdp.prob(s, a, n)).collect();
                    let next = sample_index(&row, rng.next_f64());
                    counts.record(s, a, next);
                }
            }
        }
        let reward = arr1(&[0.0, 0.3, 1.0]);
        let params = SamplePlanParams {
            eps: 0.1,
            delta: 0.1,
            reward_bound: 1.0,
            eps1: 1e-4,
            m,
            n: 8,
            t0: 20,
            max_inner: 1000,
        };
        let snapshot = counts.clone();
        let mut sim = make_simulator(mdp, 3);
        let report = sample_plan(&mut sim, &mut counts, reward.view(), params.clone(), 9).unwrap();
        assert_eq!(report.inner_iterations, 1);
        assert_eq!(report.unstable_iterations, 0);
        assert_eq!(report.known_sizes, vec![3]);

        // the returned policy matches planning directly on the empirical model
        let known = KnownSet::from_counts(&snapshot, m);
        assert!(known.is_full());
        let induced = InducedModel::from_counts(
            &snapshot,
            &known,
            reward.view(),
            1.0,
            0.9,
            Array1::from_elem(3, 1.0 / 3.0),
        )
        .unwrap();
        let direct = value_iteration_plan(&induced.mdp, induced.reward.view(), 1e-4).unwrap();
        assert_eq!(
            report.policy.as_deterministic().unwrap(),
            direct.policy.as_deterministic().unwrap()
        );
    }

    #[test]
    fn planner_counts_match_trajectory_log() {
        let mdp = random_mdp(2, 2, 0.9, 8);
        let mut sim = make_simulator(mdp, 10);
        let mut counts = TransitionCounts::new(2, 2);
        let params = SamplePlanParams {
            eps: 0.2,
            delta: 0.2,
            reward_bound: 1.0,
            eps1: 1e-3,
            m: 5,
            n: 3,
            t0: 10,
            max_inner: 500,
        };
        let before = counts.clone();
        let mut planner =
            SamplePlanner::new(&mut sim, &mut counts, arr1(&[0.0, 1.0]).view(), params, 4)
                .unwrap();
        let iteration = planner.step().unwrap();
        drop(planner);
        // replay the logged trajectories onto the snapshot
        let mut replayed = before;
        for trajectory in &iteration.trajectories {
            assert_eq!(trajectory.actions.len(), 10);
            replayed.record_trajectory(trajectory);
        }
        assert_eq!(replayed, counts);
        assert_eq!(replayed.total_records(), 3 * 10);
    }

    #[test]
    fn sample_plan_learns_the_deterministic_chain() {
        let mdp = deterministic_chain(5, 0.9);
        let reward = arr1(&[0.0, 0.0, 0.0, 0.0, 1.0]);
        let optimal = crate::oracles::exact::value_iteration_plan(&mdp, reward.view(), 1e-9)
            .unwrap()
            .value;
        let params = SamplePlanParams {
            eps: 0.1,
            delta: 0.1,
            reward_bound: 1.0,
            eps1: 0.01,
            m: 8,
            n: 10,
            t0: 30,
            max_inner: 10 * 8 * 5 * 2,
        };
        let mut good = 0;
        for seed in 0..20u64 {
            let mut sim = make_simulator(mdp.clone(), seed);
            let mut counts = TransitionCounts::new(5, 2);
            let report =
                sample_plan(&mut sim, &mut counts, reward.view(), params.clone(), seed + 1000)
                    .unwrap();
            // known set grows monotonically
            for w in report.known_sizes.windows(2) {
                assert!(w[1] >= w[0], "known set shrank: {:?}", report.known_sizes);
            }
            assert!(report.unstable_iterations <= params.m * 5 * 2);
            let v = mdp.policy_value(&report.policy, reward.view()).unwrap();
            if v >= optimal - 0.1 {
                good += 1;
            }
        }
        assert!(good >= 18, "only {good}/20 runs reached near-optimal value");
    }

    #[test]
    fn density_estimate_deterministic_path_is_exact() {
        let mdp = deterministic_chain(6, 0.9);
        let right = StationaryPolicy::deterministic(2, &[1; 6]);
        let exact = mdp.discounted_occupancy(&right).unwrap();
        let mut sim = make_simulator(mdp, 4);
        let t0 = 40;
        let d_hat =
            estimate_density_with(&mut sim, PolicyRef::Stationary(&right), 7, 3, t0).unwrap();
        let err = d_hat.linf_distance(&exact);
        assert!(err <= 0.9f64.powi(t0 as i32) + 1e-12, "error {err}");
    }

    #[test]
    fn density_estimate_two_state_swap() {
        let mut t = Array3::zeros((2, 1, 2));
        t[(0, 0, 1)] = 1.0;
        t[(1, 0, 0)] = 1.0;
        let mdp = TabularMDP::new(t, 0.5, arr1(&[1.0, 0.0])).unwrap();
        let pi = StationaryPolicy::uniform(2, 1);
        let mut within = 0;
        for seed in 0..50u64 {
            let mut sim = make_simulator(mdp.clone(), seed);
            let d = estimate_density(&mut sim, PolicyRef::Stationary(&pi), seed, 0.05, 0.1)
                .unwrap();
            let err = (d.probs()[0] - 2.0 / 3.0).abs().max((d.probs()[1] - 1.0 / 3.0).abs());
            if err <= 0.05 {
                within += 1;
            }
        }
        assert!(within >= 45, "only {within}/50 estimates within tolerance");
    }

    #[test]
    fn density_estimate_mixture_matches_average() {
        let mdp = deterministic_chain(5, 0.9);
        let left = StationaryPolicy::deterministic(2, &[0; 5]);
        let right = StationaryPolicy::deterministic(2, &[1; 5]);
        let d_left = mdp.discounted_occupancy(&left).unwrap();
        let d_right = mdp.discounted_occupancy(&right).unwrap();
        let mix = MixturePolicy::new(vec![left, right], vec![0.5, 0.5]).unwrap();
        let mut sim = make_simulator(mdp, 11);
        let eps0 = 0.05;
        let d = estimate_density(&mut sim, PolicyRef::Mixture(&mix), 21, eps0, 0.1).unwrap();
        for s in 0..5 {
            let expected = 0.5 * (d_left.probs()[s] + d_right.probs()[s]);
            assert!(
                (d.probs()[s] - expected).abs() <= eps0,
                "state {s}: {} vs {expected}",
                d.probs()[s]
            );
        }
    }

    #[test]
    fn escape_frequency_edges() {
        let mdp = deterministic_chain(5, 0.9);
        let right = StationaryPolicy::deterministic(2, &[1; 5]);
        let mut sim = make_simulator(mdp, 2);
        let all = KnownSet::all(5, 1);
        assert_eq!(
            escape_frequency(&mut sim, PolicyRef::Stationary(&right), &all, 3, 10, 10),
            0.0
        );
        let none = KnownSet::empty(5, 1);
        assert_eq!(
            escape_frequency(&mut sim, PolicyRef::Stationary(&right), &none, 3, 10, 10),
            1.0
        );
        let first_three = KnownSet::from_members(vec![true, true, true, false, false], 1);
        assert_eq!(
            escape_frequency(&mut sim, PolicyRef::Stationary(&right), &first_three, 3, 10, 10),
            1.0
        );
    }

    #[test]
    fn value_sandwich_on_true_induced_model() {
        let mut rng = StreamRng::new(3000);
        for seed in 0..25u64 {
            let n = 4 + (seed % 3) as usize;
            let mdp = random_mdp(n, 2, 0.9, seed + 600);
            let pi = random_policy(n, 2, seed + 700);
            let reward = Array1::from_iter((0..n).map(|_| rng.next_f64()));
            let members: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.6).collect();
            let known = KnownSet::from_members(members, 1);
            let induced = InducedModel::from_mdp(&mdp, &known, reward.view(), 1.0).unwrap();
            let lhs = induced.mdp.policy_value(&pi, induced.reward.view()).unwrap();
            let rhs = mdp.policy_value(&pi, reward.view()).unwrap();
            assert!(lhs >= rhs - 1e-12, "seed {seed}: {lhs} < {rhs}");
        }
    }

    #[test]
    fn simulation_lemma_value_gap() {
        let mut rng = StreamRng::new(4000);
        for seed in 0..25u64 {
            let n = 5;
            let mdp = random_mdp(n, 2, 0.9, seed + 800);
            let known = KnownSet::all(n, 1);
            let reward = Array1::from_iter((0..n).map(|_| rng.next_f64()));
            let truth = InducedModel::from_mdp(&mdp, &known, reward.view(), 1.0).unwrap();
            // empirical model from m samples per pair
            let m = 60;
            let mut counts = TransitionCounts::new(n, 2);
            for s in 0..n {
                for a in 0..2 {
                    let row: Vec<f64> = (0..n).map(|x| mdp.prob(s, a, x)).collect();
                    for _ in 0..m {
                        counts.record(s, a, sample_index(&row, rng.next_f64()));
                    }
                }
            }
            let hat = InducedModel::from_counts(
                &counts,
                &known,
                reward.view(),
                1.0,
                0.9,
                mdp.d0().to_owned(),
            )
            .unwrap();
            let mut l1_max: f64 = 0.0;
            for s in 0..n {
                for a in 0..2 {
                    let l1: f64 = (0..n)
                        .map(|x| (hat.mdp.prob(s, a, x) - mdp.prob(s, a, x)).abs())
                        .sum();
                    l1_max = l1_max.max(l1);
                }
            }
            let pi = random_policy(n, 2, seed + 900);
            let v_true = truth.mdp.policy_value(&pi, reward.view()).unwrap();
            let v_hat = hat.mdp.policy_value(&pi, reward.view()).unwrap();
            let bound = l1_max / (1.0 - 0.9);
            assert!(
                (v_true - v_hat).abs() <= bound + 1e-12,
                "seed {seed}: gap {} > {bound}",
                (v_true - v_hat).abs()
            );
        }
    }

    #[test]
    fn l1_concentration_bound_rarely_violated() {
        let mut rng = StreamRng::new(5000);
        let trials = 200;
        let delta = 0.1;
        let d = 8usize;
        let m = 50usize;
        let bound = (8.0 * d as f64 * (2.0 * d as f64 / delta).ln() / m as f64).sqrt();
        let mut violations = 0;
        for _ in 0..trials {
            let p = rng.next_dirichlet(d, 1.0);
            let mut freq = vec![0usize; d];
            for _ in 0..m {
                freq[sample_index(&p, rng.next_f64())] += 1;
            }
            let l1: f64 =
                (0..d).map(|i| (freq[i] as f64 / m as f64 - p[i]).abs()).sum();
            if l1 > bound {
                violations += 1;
            }
        }
        let slack = delta * trials as f64 + 2.0 * (trials as f64 * delta * (1.0 - delta)).sqrt();
        assert!(
            (violations as f64) <= slack,
            "L1 bound violated {violations} times, allowance {slack}"
        );
    }
}
