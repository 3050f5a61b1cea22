//! Built-in tabular environments and seeded generators.
//!
//! Includes the six-state branching MDP whose two-step distributions witness
//! that state-distribution entropy is not concave in the policy, plus chains,
//! gridworlds, Dirichlet-random MDPs, and a discretized mountain car.
//! Generation is deterministic given parameters.

use crate::mdp::{MdpError, StateDistribution, StationaryPolicy, TabularMDP};
use crate::oracles::sample::EpisodicSimulator;
use crate::rng::StreamRng;
use ndarray::{Array1, Array2, Array3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Declarative description of a built-in environment.
#[derive(Clone, Debug, PartialEq)]
pub enum EnvSpec {
    /// The 6-state, 2-action branching MDP with absorbing leaves.
    Figure1 { gamma: f64 },
    /// A line of `n` states with left/right actions and slip probability of
    /// moving the opposite way. Start at state 0.
    Chain { n: usize, slip: f64, gamma: f64 },
    /// `width x height` grid, 4 deterministic actions, blocked moves
    /// self-loop. Wall cells are states whose actions all self-loop.
    Gridworld {
        width: usize,
        height: usize,
        walls: Vec<(usize, usize)>,
        start: (usize, usize),
        gamma: f64,
    },
    /// Transitions drawn per (s, a) from a symmetric Dirichlet(alpha);
    /// uniform initial distribution.
    Random { n_states: usize, n_actions: usize, seed: u64, alpha: f64, gamma: f64 },
    /// Classic mountain-car dynamics discretized by cell centers onto a
    /// position x velocity grid; 3 actions; start cell contains
    /// (x = -0.5, v = 0). Each tabular transition integrates `substeps`
    /// continuous updates from the cell center before snapping: a single
    /// update moves far less than one cell at desk-scale grids, which would
    /// freeze the dynamics.
    MountainCarDisc { pos_bins: usize, vel_bins: usize, substeps: usize, gamma: f64 },
}

impl EnvSpec {
    /// Construct the tabular MDP this spec describes.
    pub fn build(&self) -> Result<TabularMDP, EnvError> {
        match self {
            EnvSpec::Figure1 { gamma } => figure1_mdp(*gamma),
            EnvSpec::Chain { n, slip, gamma } => chain_mdp(*n, *slip, *gamma),
            EnvSpec::Gridworld { width, height, walls, start, gamma } => {
                gridworld_mdp(*width, *height, walls, *start, *gamma)
            }
            EnvSpec::Random { n_states, n_actions, seed, alpha, gamma } => {
                random_mdp_alpha(*n_states, *n_actions, *gamma, *alpha, *seed)
            }
            EnvSpec::MountainCarDisc { pos_bins, vel_bins, substeps, gamma } => {
                mountain_car_mdp(*pos_bins, *vel_bins, *substeps, *gamma)
            }
        }
    }

    /// `(width, height)` for environments whose states tile a 2-D grid.
    pub fn grid_shape(&self) -> Option<(usize, usize)> {
        match self {
            EnvSpec::Gridworld { width, height, .. } => Some((*width, *height)),
            EnvSpec::MountainCarDisc { pos_bins, vel_bins, .. } => Some((*pos_bins, *vel_bins)),
            _ => None,
        }
    }
}

fn check_gamma(gamma: f64) -> Result<(), EnvError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(EnvError::InvalidParameter(format!("gamma {gamma} outside [0, 1)")));
    }
    Ok(())
}

/// The 6-state branching MDP. States in order:
/// root, left mid, right mid, and three absorbing leaves.
/// Action 0 takes the left branch, action 1 the right branch.
pub fn figure1_mdp(gamma: f64) -> Result<TabularMDP, EnvError> {
    check_gamma(gamma)?;
    let mut t = Array3::zeros((6, 2, 6));
    t[(0, 0, 1)] = 1.0;
    t[(0, 1, 2)] = 1.0;
    t[(1, 0, 3)] = 1.0;
    t[(1, 1, 4)] = 1.0;
    t[(2, 0, 4)] = 1.0;
    t[(2, 1, 5)] = 1.0;
    for leaf in 3..6 {
        t[(leaf, 0, leaf)] = 1.0;
        t[(leaf, 1, leaf)] = 1.0;
    }
    let mut d0 = Array1::zeros(6);
    d0[0] = 1.0;
    Ok(TabularMDP::new(t, gamma, d0)?)
}

/// The three reference policies on the branching MDP. The first is the
/// pointwise average of the other two, yet its two-step state distribution
/// has strictly lower entropy than either of theirs.
pub fn figure1_policies() -> (StationaryPolicy, StationaryPolicy, StationaryPolicy) {
    let rows = |r0: [f64; 2], r1: [f64; 2], r2: [f64; 2]| {
        let mut probs = Array2::from_elem((6, 2), 0.5);
        probs.row_mut(0).assign(&ndarray::arr1(&r0));
        probs.row_mut(1).assign(&ndarray::arr1(&r1));
        probs.row_mut(2).assign(&ndarray::arr1(&r2));
        StationaryPolicy::new(probs).expect("reference policy rows are stochastic")
    };
    let pi0 = rows([0.5, 0.5], [0.75, 0.25], [0.25, 0.75]);
    let pi1 = rows([2.0 / 3.0, 1.0 / 3.0], [0.5, 0.5], [0.0, 1.0]);
    let pi2 = rows([1.0 / 3.0, 2.0 / 3.0], [1.0, 0.0], [0.5, 0.5]);
    (pi0, pi1, pi2)
}

/// Line of `n` states; action 0 moves left, action 1 moves right, each with
/// `slip` probability of going the opposite way. Off-edge moves stay put.
pub fn chain_mdp(n: usize, slip: f64, gamma: f64) -> Result<TabularMDP, EnvError> {
    check_gamma(gamma)?;
    if n == 0 {
        return Err(EnvError::InvalidParameter("chain needs at least one state".into()));
    }
    if !(0.0..=1.0).contains(&slip) {
        return Err(EnvError::InvalidParameter(format!("slip {slip} outside [0, 1]")));
    }
    let mut t = Array3::zeros((n, 2, n));
    for s in 0..n {
        let left = s.saturating_sub(1);
        let right = (s + 1).min(n - 1);
        t[(s, 0, left)] += 1.0 - slip;
        t[(s, 0, right)] += slip;
        t[(s, 1, right)] += 1.0 - slip;
        t[(s, 1, left)] += slip;
    }
    let mut d0 = Array1::zeros(n);
    d0[0] = 1.0;
    Ok(TabularMDP::new(t, gamma, d0)?)
}

/// Grid actions in order: up, down, left, right.
pub const GRID_ACTIONS: [(isize, isize); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

/// Deterministic gridworld. Wall cells remain states (so the grid is always
/// `width * height` states, indexed `y * width + x`) but every action
/// self-loops there and nothing transitions into them.
pub fn gridworld_mdp(
    width: usize,
    height: usize,
    walls: &[(usize, usize)],
    start: (usize, usize),
    gamma: f64,
) -> Result<TabularMDP, EnvError> {
    check_gamma(gamma)?;
    if width == 0 || height == 0 {
        return Err(EnvError::InvalidParameter("grid must have positive dimensions".into()));
    }
    let mut wall_mask = vec![false; width * height];
    for &(x, y) in walls {
        if x >= width || y >= height {
            return Err(EnvError::InvalidParameter(format!(
                "wall ({x}, {y}) outside {width}x{height} grid"
            )));
        }
        wall_mask[y * width + x] = true;
    }
    if start.0 >= width || start.1 >= height {
        return Err(EnvError::InvalidParameter(format!(
            "start ({}, {}) outside {width}x{height} grid",
            start.0, start.1
        )));
    }
    let start_idx = start.1 * width + start.0;
    if wall_mask[start_idx] {
        return Err(EnvError::InvalidParameter(format!(
            "start cell ({}, {}) is a wall",
            start.0, start.1
        )));
    }
    let n = width * height;
    let mut t = Array3::zeros((n, 4, n));
    for y in 0..height {
        for x in 0..width {
            let s = y * width + x;
            for (a, &(dx, dy)) in GRID_ACTIONS.iter().enumerate() {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                let dest = if wall_mask[s]
                    || nx < 0
                    || ny < 0
                    || nx >= width as isize
                    || ny >= height as isize
                {
                    s
                } else {
                    let cand = ny as usize * width + nx as usize;
                    if wall_mask[cand] {
                        s
                    } else {
                        cand
                    }
                };
                t[(s, a, dest)] = 1.0;
            }
        }
    }
    let mut d0 = Array1::zeros(n);
    d0[start_idx] = 1.0;
    Ok(TabularMDP::new(t, gamma, d0)?)
}

/// Random MDP with Dirichlet(alpha) transition rows and uniform `d0`.
pub fn random_mdp_alpha(
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    alpha: f64,
    seed: u64,
) -> Result<TabularMDP, EnvError> {
    check_gamma(gamma)?;
    if n_states == 0 || n_actions == 0 {
        return Err(EnvError::InvalidParameter("need at least one state and action".into()));
    }
    if !(alpha > 0.0) {
        return Err(EnvError::InvalidParameter(format!("alpha {alpha} must be positive")));
    }
    let mut rng = StreamRng::new(seed);
    let mut t = Array3::zeros((n_states, n_actions, n_states));
    for s in 0..n_states {
        for a in 0..n_actions {
            let row = rng.next_dirichlet(n_states, alpha);
            for (next, &p) in row.iter().enumerate() {
                t[(s, a, next)] = p;
            }
        }
    }
    let d0 = Array1::from_elem(n_states, 1.0 / n_states as f64);
    Ok(TabularMDP::new(t, gamma, d0)?)
}

/// Convenience wrapper with alpha = 1 (uniform over each simplex row).
/// Panics on invalid sizes; intended for tests and verification tooling.
pub fn random_mdp(n_states: usize, n_actions: usize, gamma: f64, seed: u64) -> TabularMDP {
    random_mdp_alpha(n_states, n_actions, gamma, 1.0, seed).expect("valid random MDP parameters")
}

/// Random stationary policy with Dirichlet(1) rows.
pub fn random_policy(n_states: usize, n_actions: usize, seed: u64) -> StationaryPolicy {
    let mut rng = StreamRng::new(seed ^ 0x5EED_F00D);
    let mut probs = Array2::zeros((n_states, n_actions));
    for s in 0..n_states {
        let row = rng.next_dirichlet(n_actions, 1.0);
        for (a, &p) in row.iter().enumerate() {
            probs[(s, a)] = p;
        }
    }
    StationaryPolicy::new(probs).expect("dirichlet rows are stochastic")
}

/// Random state distribution ~ Dirichlet(alpha).
pub fn random_distribution(n: usize, seed: u64, alpha: f64) -> StateDistribution {
    let mut rng = StreamRng::new(seed ^ 0xD157_0000);
    let row = rng.next_dirichlet(n, alpha);
    StateDistribution::new(Array1::from_vec(row)).expect("dirichlet draw is a distribution")
}

// Classic mountain-car constants.
const MC_POS_MIN: f64 = -1.2;
const MC_POS_MAX: f64 = 0.6;
const MC_VEL_MIN: f64 = -0.07;
const MC_VEL_MAX: f64 = 0.07;
const MC_FORCE: f64 = 0.001;
const MC_GRAVITY: f64 = 0.0025;
const MC_START_POS: f64 = -0.5;
const MC_START_VEL: f64 = 0.0;

/// Deterministic discretized mountain car: integrate `substeps` continuous
/// updates from each cell center, then snap to the containing cell. State
/// index is `pos_bin * vel_bins + vel_bin`; 3 actions (reverse, coast,
/// forward).
pub fn mountain_car_mdp(
    pos_bins: usize,
    vel_bins: usize,
    substeps: usize,
    gamma: f64,
) -> Result<TabularMDP, EnvError> {
    check_gamma(gamma)?;
    if pos_bins == 0 || vel_bins == 0 {
        return Err(EnvError::InvalidParameter("need positive bin counts".into()));
    }
    if substeps == 0 {
        return Err(EnvError::InvalidParameter("need at least one substep".into()));
    }
    let pos_width = (MC_POS_MAX - MC_POS_MIN) / pos_bins as f64;
    let vel_width = (MC_VEL_MAX - MC_VEL_MIN) / vel_bins as f64;
    let pos_center = |i: usize| MC_POS_MIN + (i as f64 + 0.5) * pos_width;
    let vel_center = |j: usize| MC_VEL_MIN + (j as f64 + 0.5) * vel_width;
    let pos_bin = |x: f64| {
        (((x - MC_POS_MIN) / pos_width) as usize).min(pos_bins - 1)
    };
    let vel_bin = |v: f64| {
        (((v - MC_VEL_MIN) / vel_width) as usize).min(vel_bins - 1)
    };

    let n = pos_bins * vel_bins;
    let mut t = Array3::zeros((n, 3, n));
    for i in 0..pos_bins {
        for j in 0..vel_bins {
            let s = i * vel_bins + j;
            for a in 0..3 {
                let (mut x, mut v) = (pos_center(i), vel_center(j));
                for _ in 0..substeps {
                    v += MC_FORCE * (a as f64 - 1.0) - MC_GRAVITY * (3.0 * x).cos();
                    v = v.clamp(MC_VEL_MIN, MC_VEL_MAX);
                    x += v;
                    if x <= MC_POS_MIN {
                        x = MC_POS_MIN;
                        v = 0.0; // inelastic left wall
                    }
                    x = x.min(MC_POS_MAX);
                }
                let dest = pos_bin(x) * vel_bins + vel_bin(v);
                t[(s, a, dest)] = 1.0;
            }
        }
    }
    let start = pos_bin(MC_START_POS) * vel_bins + vel_bin(MC_START_VEL);
    let mut d0 = Array1::zeros(n);
    d0[start] = 1.0;
    Ok(TabularMDP::new(t, gamma, d0)?)
}

/// States reachable from the support of `d0` under arbitrary action choices.
pub fn reachable_states(mdp: &TabularMDP) -> Vec<usize> {
    let n = mdp.n_states();
    let mut seen = vec![false; n];
    let mut queue: Vec<usize> =
        (0..n).filter(|&s| mdp.d0()[s] > 0.0).collect();
    for &s in &queue {
        seen[s] = true;
    }
    while let Some(s) = queue.pop() {
        for a in 0..mdp.n_actions() {
            for next in 0..n {
                if mdp.prob(s, a, next) > 0.0 && !seen[next] {
                    seen[next] = true;
                    queue.push(next);
                }
            }
        }
    }
    (0..n).filter(|&s| seen[s]).collect()
}

/// Wrap a model as an episodic black-box simulator with the given seed.
pub fn make_simulator(mdp: TabularMDP, seed: u64) -> EpisodicSimulator {
    EpisodicSimulator::new(mdp, seed)
}
