//! Tabular MDP representations and occupancy-measure algebra.
//!
//! The discounted state occupancy of a policy is
//! `d = (1-gamma) * (I - gamma * P_pi)^(-1) * d0`, a probability vector:
//! the sum starts at t = 0 and the `(1-gamma)` factor normalizes total mass
//! to one. Mixtures of stationary policies (component drawn once at episode
//! start) have occupancy equal to the convex combination of component
//! occupancies, which makes the set of achievable occupancies convex even
//! though the map from policy matrix to occupancy is not affine.

use ndarray::{Array1, Array2, Array3, ArrayView1};
use thiserror::Error;

/// Absolute tolerance for probability vectors supplied by callers.
pub const CONSTRUCTION_TOL: f64 = 1e-12;
/// Absolute tolerance for probability vectors produced by computation.
pub const COMPUTED_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("transition tensor has shape ({0}, {1}, {2}); expected (S, A, S) with S >= 1, A >= 1")]
    BadTensorShape(usize, usize, usize),
    #[error("transition row for state {s}, action {a} sums to {sum}; expected 1 within {tol}")]
    RowNotStochastic { s: usize, a: usize, sum: f64, tol: f64 },
    #[error("negative transition probability {p} at (s={s}, a={a}, s'={next})")]
    NegativeTransition { s: usize, a: usize, next: usize, p: f64 },
    #[error("discount factor {0} outside [0, 1)")]
    BadDiscount(f64),
    #[error("initial distribution has length {got}; expected {expected}")]
    BadInitialLength { got: usize, expected: usize },
    #[error("probability vector sums to {sum}; expected 1 within {tol}")]
    NotNormalized { sum: f64, tol: f64 },
    #[error("negative probability {p} at index {index}")]
    NegativeProbability { index: usize, p: f64 },
    #[error("policy row for state {s} sums to {sum}; expected 1 within {tol}")]
    PolicyRowNotStochastic { s: usize, sum: f64, tol: f64 },
    #[error("mixture has {components} components but {weights} weights")]
    MixtureLengthMismatch { components: usize, weights: usize },
    #[error("mixture must have at least one component")]
    EmptyMixture,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("linear solve failed: {0}")]
    SolveFailed(String),
}

fn validate_prob_vec(v: ArrayView1<f64>, tol: f64) -> Result<(), MdpError> {
    for (i, &p) in v.iter().enumerate() {
        if p < -tol || !p.is_finite() {
            return Err(MdpError::NegativeProbability { index: i, p });
        }
    }
    let sum: f64 = v.sum();
    if (sum - 1.0).abs() > tol {
        return Err(MdpError::NotNormalized { sum, tol });
    }
    Ok(())
}

/// A probability distribution over states.
#[derive(Clone, Debug, PartialEq)]
pub struct StateDistribution {
    probs: Array1<f64>,
}

impl StateDistribution {
    /// Validates at construction tolerance (1e-12).
    pub fn new(probs: Array1<f64>) -> Result<Self, MdpError> {
        validate_prob_vec(probs.view(), CONSTRUCTION_TOL)?;
        Ok(Self { probs })
    }

    /// Validates at computed tolerance (1e-9) and clamps round-off negatives
    /// to zero.
    pub fn from_computed(mut probs: Array1<f64>) -> Result<Self, MdpError> {
        validate_prob_vec(probs.view(), COMPUTED_TOL)?;
        probs.mapv_inplace(|p| p.max(0.0));
        Ok(Self { probs })
    }

    pub fn delta(n: usize, at: usize) -> Self {
        let mut probs = Array1::zeros(n);
        probs[at] = 1.0;
        Self { probs }
    }

    pub fn uniform(n: usize) -> Self {
        Self { probs: Array1::from_elem(n, 1.0 / n as f64) }
    }

    pub fn probs(&self) -> ArrayView1<'_, f64> {
        self.probs.view()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Number of entries above `1e-12`.
    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 1e-12).count()
    }

    pub fn linf_distance(&self, other: &Self) -> f64 {
        self.probs
            .iter()
            .zip(other.probs.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A joint distribution over state-action pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct StateActionOccupancy {
    probs: Array2<f64>,
}

impl StateActionOccupancy {
    pub fn new(probs: Array2<f64>) -> Result<Self, MdpError> {
        Self::with_tol(probs, CONSTRUCTION_TOL)
    }

    pub fn from_computed(probs: Array2<f64>) -> Result<Self, MdpError> {
        Self::with_tol(probs, COMPUTED_TOL)
    }

    fn with_tol(probs: Array2<f64>, tol: f64) -> Result<Self, MdpError> {
        for (idx, &p) in probs.indexed_iter() {
            if p < -tol || !p.is_finite() {
                return Err(MdpError::NegativeProbability { index: idx.0, p });
            }
        }
        let sum = probs.sum();
        if (sum - 1.0).abs() > tol {
            return Err(MdpError::NotNormalized { sum, tol });
        }
        Ok(Self { probs })
    }

    /// probs[(s, a)]
    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    /// Marginal over actions: the state occupancy.
    pub fn state_marginal(&self) -> Array1<f64> {
        self.probs.sum_axis(ndarray::Axis(1))
    }
}

/// A stationary stochastic policy: one action distribution per state.
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryPolicy {
    probs: Array2<f64>,
}

impl StationaryPolicy {
    pub fn new(probs: Array2<f64>) -> Result<Self, MdpError> {
        for s in 0..probs.nrows() {
            let row = probs.row(s);
            for (a, &p) in row.iter().enumerate() {
                if p < -CONSTRUCTION_TOL || !p.is_finite() {
                    return Err(MdpError::NegativeProbability { index: s * probs.ncols() + a, p });
                }
            }
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > CONSTRUCTION_TOL {
                return Err(MdpError::PolicyRowNotStochastic { s, sum, tol: CONSTRUCTION_TOL });
            }
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self { probs: Array2::from_elem((n_states, n_actions), 1.0 / n_actions as f64) }
    }

    /// One-hot rows given the chosen action per state.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Self {
        let mut probs = Array2::zeros((actions.len(), n_actions));
        for (s, &a) in actions.iter().enumerate() {
            assert!(a < n_actions, "action {a} out of range at state {s}");
            probs[(s, a)] = 1.0;
        }
        Self { probs }
    }

    /// probs[(s, a)]
    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }

    pub fn action_prob(&self, s: usize, a: usize) -> f64 {
        self.probs[(s, a)]
    }

    /// Greedy action list if every row is one-hot, else None.
    pub fn as_deterministic(&self) -> Option<Vec<usize>> {
        let mut actions = Vec::with_capacity(self.n_states());
        for s in 0..self.n_states() {
            let row = self.probs.row(s);
            let mut chosen = None;
            for (a, &p) in row.iter().enumerate() {
                if p == 1.0 && chosen.is_none() {
                    chosen = Some(a);
                } else if p != 0.0 && p != 1.0 {
                    return None;
                } else if p == 1.0 {
                    return None;
                }
            }
            actions.push(chosen?);
        }
        Some(actions)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.probs
            .iter()
            .zip(other.probs.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A finite mixture of stationary policies: the component is drawn once at
/// episode start and followed for the whole episode.
#[derive(Clone, Debug, PartialEq)]
pub struct MixturePolicy {
    components: Vec<StationaryPolicy>,
    weights: Vec<f64>,
}

impl MixturePolicy {
    pub fn new(components: Vec<StationaryPolicy>, weights: Vec<f64>) -> Result<Self, MdpError> {
        if components.is_empty() {
            return Err(MdpError::EmptyMixture);
        }
        if components.len() != weights.len() {
            return Err(MdpError::MixtureLengthMismatch {
                components: components.len(),
                weights: weights.len(),
            });
        }
        validate_prob_vec(ArrayView1::from(&weights[..]), CONSTRUCTION_TOL)?;
        let (s0, a0) = (components[0].n_states(), components[0].n_actions());
        for c in &components[1..] {
            if c.n_states() != s0 || c.n_actions() != a0 {
                return Err(MdpError::DimensionMismatch(
                    "mixture components must share dimensions".into(),
                ));
            }
        }
        Ok(Self { components, weights })
    }

    pub fn single(policy: StationaryPolicy) -> Self {
        Self { components: vec![policy], weights: vec![1.0] }
    }

    /// The conditional-gradient update: scale existing weights by
    /// `(1 - eta)` and append the new component with weight `eta`.
    pub fn push_reweighted(&mut self, policy: StationaryPolicy, eta: f64) {
        assert!((0.0..=1.0).contains(&eta), "step size {eta} outside [0, 1]");
        for w in &mut self.weights {
            *w *= 1.0 - eta;
        }
        self.components.push(policy);
        self.weights.push(eta);
    }

    pub fn components(&self) -> &[StationaryPolicy] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.components[0].n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.components[0].n_actions()
    }
}

/// Borrowed view over either policy form, for operations defined on both.
#[derive(Clone, Copy, Debug)]
pub enum PolicyRef<'a> {
    Stationary(&'a StationaryPolicy),
    Mixture(&'a MixturePolicy),
}

impl<'a> From<&'a StationaryPolicy> for PolicyRef<'a> {
    fn from(p: &'a StationaryPolicy) -> Self {
        PolicyRef::Stationary(p)
    }
}

impl<'a> From<&'a MixturePolicy> for PolicyRef<'a> {
    fn from(p: &'a MixturePolicy) -> Self {
        PolicyRef::Mixture(p)
    }
}

impl PolicyRef<'_> {
    pub fn n_states(&self) -> usize {
        match self {
            PolicyRef::Stationary(p) => p.n_states(),
            PolicyRef::Mixture(p) => p.n_states(),
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            PolicyRef::Stationary(p) => p.n_actions(),
            PolicyRef::Mixture(p) => p.n_actions(),
        }
    }
}

/// A fully specified tabular MDP: transition tensor, discount, and initial
/// state distribution. Rewards are supplied per call as state vectors.
#[derive(Clone, Debug)]
pub struct TabularMDP {
    n_states: usize,
    n_actions: usize,
    /// transition[(s, a, s')] = P(s' | s, a)
    transition: Array3<f64>,
    gamma: f64,
    d0: Array1<f64>,
}

impl TabularMDP {
    /// `transition` is indexed `[(s, a, s')]`; every `(s, a)` row must be a
    /// probability distribution within 1e-12.
    pub fn new(transition: Array3<f64>, gamma: f64, d0: Array1<f64>) -> Result<Self, MdpError> {
        let (s, a, s2) = transition.dim();
        if s == 0 || a == 0 || s != s2 {
            return Err(MdpError::BadTensorShape(s, a, s2));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(MdpError::BadDiscount(gamma));
        }
        if d0.len() != s {
            return Err(MdpError::BadInitialLength { got: d0.len(), expected: s });
        }
        for si in 0..s {
            for ai in 0..a {
                let mut sum = 0.0;
                for ni in 0..s {
                    let p = transition[(si, ai, ni)];
                    if p < -CONSTRUCTION_TOL || !p.is_finite() {
                        return Err(MdpError::NegativeTransition { s: si, a: ai, next: ni, p });
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > CONSTRUCTION_TOL {
                    return Err(MdpError::RowNotStochastic {
                        s: si,
                        a: ai,
                        sum,
                        tol: CONSTRUCTION_TOL,
                    });
                }
            }
        }
        validate_prob_vec(d0.view(), CONSTRUCTION_TOL)?;
        Ok(Self { n_states: s, n_actions: a, transition, gamma, d0 })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn d0(&self) -> ArrayView1<'_, f64> {
        self.d0.view()
    }

    /// P(s' | s, a)
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition[(s, a, next)]
    }

    /// transition[(s, a, s')]
    pub fn transition(&self) -> &Array3<f64> {
        &self.transition
    }

    fn check_policy_dims(&self, policy: PolicyRef<'_>) -> Result<(), MdpError> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(MdpError::DimensionMismatch(format!(
                "policy is {}x{}, MDP is {} states x {} actions",
                policy.n_states(),
                policy.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }

    /// State-to-state operator `P_pi[(s', s)] = sum_a pi(a|s) P(s'|s, a)`.
    ///
    /// Columns are indexed by the source state and are probability
    /// distributions over the successor.
    pub fn transition_operator(&self, policy: &StationaryPolicy) -> Result<Array2<f64>, MdpError> {
        self.check_policy_dims(policy.into())?;
        let n = self.n_states;
        let mut op = Array2::zeros((n, n));
        for s in 0..n {
            for a in 0..self.n_actions {
                let w = policy.action_prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for next in 0..n {
                    op[(next, s)] += w * self.transition[(s, a, next)];
                }
            }
        }
        Ok(op)
    }

    /// Distribution of the state at time `t`: `P_pi^t d0`.
    pub fn t_step_distribution(
        &self,
        policy: &StationaryPolicy,
        t: usize,
    ) -> Result<StateDistribution, MdpError> {
        let op = self.transition_operator(policy)?;
        let mut d = self.d0.clone();
        for _ in 0..t {
            d = op.dot(&d);
        }
        StateDistribution::from_computed(d)
    }

    /// Discounted state occupancy `(1-gamma) (I - gamma P_pi)^(-1) d0`,
    /// via a dense LU solve.
    pub fn discounted_occupancy(
        &self,
        policy: &StationaryPolicy,
    ) -> Result<StateDistribution, MdpError> {
        let op = self.transition_operator(policy)?;
        let n = self.n_states;
        let mut system = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut v = -self.gamma * op[(i, j)];
                if i == j {
                    v += 1.0;
                }
                system[(i, j)] = v;
            }
        }
        let rhs = nalgebra::DVector::from_iterator(n, self.d0.iter().copied());
        let solution = system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| MdpError::SolveFailed("resolvent system is singular".into()))?;
        let d = Array1::from_iter(solution.iter().map(|&x| x * (1.0 - self.gamma)));
        StateDistribution::from_computed(d)
    }

    /// Discounted state-action occupancy `d(s, a) = d(s) pi(a|s)`.
    pub fn discounted_occupancy_sa(
        &self,
        policy: &StationaryPolicy,
    ) -> Result<StateActionOccupancy, MdpError> {
        let d = self.discounted_occupancy(policy)?;
        let mut probs = Array2::zeros((self.n_states, self.n_actions));
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                probs[(s, a)] = d.probs()[s] * policy.action_prob(s, a);
            }
        }
        StateActionOccupancy::from_computed(probs)
    }

    /// Occupancy of a mixture: the weight-convex combination of component
    /// occupancies.
    pub fn mixture_occupancy(
        &self,
        mixture: &MixturePolicy,
    ) -> Result<StateDistribution, MdpError> {
        self.check_policy_dims(mixture.into())?;
        let mut acc = Array1::zeros(self.n_states);
        for (policy, &w) in mixture.components().iter().zip(mixture.weights()) {
            if w == 0.0 {
                continue;
            }
            let d = self.discounted_occupancy(policy)?;
            acc.scaled_add(w, &d.probs());
        }
        StateDistribution::from_computed(acc)
    }

    /// Occupancy of either policy form.
    pub fn occupancy(&self, policy: PolicyRef<'_>) -> Result<StateDistribution, MdpError> {
        match policy {
            PolicyRef::Stationary(p) => self.discounted_occupancy(p),
            PolicyRef::Mixture(p) => self.mixture_occupancy(p),
        }
    }

    /// `<d_pi, r>` for a state-reward vector.
    pub fn policy_value<'a>(
        &self,
        policy: impl Into<PolicyRef<'a>>,
        reward: ArrayView1<f64>,
    ) -> Result<f64, MdpError> {
        if reward.len() != self.n_states {
            return Err(MdpError::DimensionMismatch(format!(
                "reward has length {}, MDP has {} states",
                reward.len(),
                self.n_states
            )));
        }
        let d = self.occupancy(policy.into())?;
        Ok(d.probs().dot(&reward))
    }
}

/// Extract the stationary policy `pi(a|s) = d(s, a) / sum_a d(s, a)`.
///
/// States with zero marginal get a uniform row: any choice there is
/// occupancy-equivalent, and uniform keeps the result deterministic.
pub fn policy_from_occupancy(d: &StateActionOccupancy) -> StationaryPolicy {
    let probs = d.probs();
    let (n_states, n_actions) = probs.dim();
    let mut rows = Array2::zeros((n_states, n_actions));
    for s in 0..n_states {
        let marginal: f64 = probs.row(s).sum();
        if marginal > 0.0 {
            for a in 0..n_actions {
                rows[(s, a)] = probs[(s, a)] / marginal;
            }
        } else {
            for a in 0..n_actions {
                rows[(s, a)] = 1.0 / n_actions as f64;
            }
        }
    }
    // rows are ratios of non-negative numbers summing to 1 up to round-off
    StationaryPolicy { probs: rows }
}

/// Result of checking the occupancy flow constraints.
#[derive(Clone, Debug)]
pub struct FlowCheck {
    /// Per-state residual of
    /// `sum_a d(s,a) - (1-gamma) d0(s) - gamma sum_{s',a'} P(s|s',a') d(s',a')`.
    pub residuals: Array1<f64>,
    /// Whether `max |residual|` is within the requested tolerance.
    pub ok: bool,
}

impl FlowCheck {
    pub fn linf(&self) -> f64 {
        self.residuals.iter().map(|r| r.abs()).fold(0.0, f64::max)
    }
}

/// Evaluate the flow constraints that characterize achievable occupancies.
pub fn check_flow_constraints(
    d: &StateActionOccupancy,
    mdp: &TabularMDP,
    tol: f64,
) -> Result<FlowCheck, MdpError> {
    let probs = d.probs();
    if probs.dim() != (mdp.n_states(), mdp.n_actions()) {
        return Err(MdpError::DimensionMismatch(format!(
            "occupancy is {:?}, MDP is {} states x {} actions",
            probs.dim(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    let n = mdp.n_states();
    let gamma = mdp.gamma();
    let marginal = d.state_marginal();
    let mut inflow = Array1::<f64>::zeros(n);
    for src in 0..n {
        for a in 0..mdp.n_actions() {
            let mass = probs[(src, a)];
            if mass == 0.0 {
                continue;
            }
            for dst in 0..n {
                inflow[dst] += mdp.prob(src, a, dst) * mass;
            }
        }
    }
    let mut residuals = Array1::zeros(n);
    for s in 0..n {
        residuals[s] = marginal[s] - (1.0 - gamma) * mdp.d0()[s] - gamma * inflow[s];
    }
    let check = FlowCheck { residuals, ok: false };
    let ok = check.linf() <= tol;
    Ok(FlowCheck { ok, ..check })
}
