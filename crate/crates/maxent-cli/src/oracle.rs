//! Brute-force verification oracle: exhaustive grid search over stationary
//! stochastic policies.
//!
//! Stationary policies cover every achievable state distribution, so the
//! grid optimum is a ground-truth reference for the optimizer on small
//! models. The per-state action simplex is enumerated at a fixed resolution;
//! states whose actions all share identical transition rows cannot affect
//! the state distribution and are fixed to uniform, which keeps the
//! enumeration exact while pruning absorbing states.

use crate::{runner, CliError};
use maxent::mdp::{StationaryPolicy, TabularMDP};
use maxent::objectives::RewardFunctional;
use ndarray::Array2;
use std::fs;
use std::path::{Path, PathBuf};

const MAX_STATES: usize = 6;
const MAX_ACTIONS: usize = 3;
const MAX_EVALUATIONS: f64 = 2e8;

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub best_value: f64,
    pub best_policy: StationaryPolicy,
    pub evaluations: u64,
    pub resolution: f64,
}

/// All points of the `k`-simplex with coordinates in multiples of `1/n`.
fn simplex_grid(k: usize, n: usize) -> Vec<Vec<f64>> {
    fn recurse(remaining: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for take in 0..=remaining {
            prefix.push(take);
            recurse(remaining - take, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut integer_points = Vec::new();
    recurse(n, k, &mut Vec::new(), &mut integer_points);
    integer_points
        .into_iter()
        .map(|point| point.into_iter().map(|c| c as f64 / n as f64).collect())
        .collect()
}

/// States where the action choice changes the transition row.
fn choice_states(mdp: &TabularMDP) -> Vec<usize> {
    (0..mdp.n_states())
        .filter(|&s| {
            (1..mdp.n_actions()).any(|a| {
                (0..mdp.n_states()).any(|next| mdp.prob(s, a, next) != mdp.prob(s, 0, next))
            })
        })
        .collect()
}

/// Exhaustive grid search for the best stationary policy under the
/// functional. Guarded to small models.
pub fn grid_search(
    mdp: &TabularMDP,
    functional: &RewardFunctional,
    resolution: f64,
) -> Result<OracleResult, CliError> {
    if mdp.n_states() > MAX_STATES || mdp.n_actions() > MAX_ACTIONS {
        return Err(CliError::Config(format!(
            "oracle accepts at most {MAX_STATES} states and {MAX_ACTIONS} actions; \
             environment has {} states and {} actions",
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    let denom = (1.0 / resolution).round() as usize;
    if denom < 2 {
        return Err(CliError::Config(format!("oracle resolution {resolution} too coarse")));
    }
    let points = simplex_grid(mdp.n_actions(), denom);
    let choices = choice_states(mdp);
    let total = (points.len() as f64).powi(choices.len() as i32);
    if total > MAX_EVALUATIONS {
        return Err(CliError::Config(format!(
            "oracle grid would need {total:.2e} evaluations (cap {MAX_EVALUATIONS:.0e}); \
             raise the resolution or shrink the environment"
        )));
    }

    let n = mdp.n_states();
    let k = mdp.n_actions();
    let mut probs = Array2::from_elem((n, k), 1.0 / k as f64);
    let mut best_value = f64::NEG_INFINITY;
    let mut best_policy: Option<StationaryPolicy> = None;
    let mut evaluations = 0u64;

    // odometer over grid points for each choice state
    let mut indices = vec![0usize; choices.len()];
    loop {
        for (slot, &s) in choices.iter().enumerate() {
            for (a, &p) in points[indices[slot]].iter().enumerate() {
                probs[(s, a)] = p;
            }
        }
        let policy = StationaryPolicy::new(probs.clone())
            .map_err(|e| CliError::Runtime(format!("grid policy: {e}")))?;
        let d = mdp
            .discounted_occupancy(&policy)
            .map_err(|e| CliError::Runtime(format!("grid occupancy: {e}")))?;
        let value = functional.value(&d);
        evaluations += 1;
        if value > best_value {
            best_value = value;
            best_policy = Some(policy);
        }

        // advance the odometer
        let mut slot = 0;
        loop {
            if slot == indices.len() {
                let best_policy = best_policy.expect("at least one evaluation");
                return Ok(OracleResult { best_value, best_policy, evaluations, resolution });
            }
            indices[slot] += 1;
            if indices[slot] < points.len() {
                break;
            }
            indices[slot] = 0;
            slot += 1;
        }
        if choices.is_empty() {
            let best_policy = best_policy.expect("one evaluation");
            return Ok(OracleResult { best_value, best_policy, evaluations, resolution });
        }
    }
}

pub fn oracle_result_to_text(result: &OracleResult) -> String {
    let mut out = String::from("# maxent oracle v1\n");
    out.push_str(&format!("resolution {}\n", result.resolution));
    out.push_str(&format!("evaluations {}\n", result.evaluations));
    out.push_str(&format!("best_value {}\n", result.best_value));
    out.push_str("policy\n");
    for s in 0..result.best_policy.n_states() {
        let row: Vec<String> = (0..result.best_policy.n_actions())
            .map(|a| result.best_policy.action_prob(s, a).to_string())
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

/// The `oracle` subcommand: grid-search the configured environment and
/// functional, write `oracle.txt`, and return the result.
pub fn cmd_oracle(
    config_path: &Path,
    cli_out: Option<&Path>,
    seed_override: Option<u64>,
    overrides: &[String],
) -> Result<(OracleResult, PathBuf), CliError> {
    let loaded = runner::load_config(config_path, seed_override, overrides)?;
    let (mdp, _) = runner::build_env(&loaded.raw.env, &loaded.config_dir)?;
    let functional = loaded.raw.functional.build(mdp.n_states())?;
    let resolution = loaded
        .raw
        .oracle
        .as_ref()
        .and_then(|o| o.resolution)
        .unwrap_or(0.02);
    if !(resolution > 0.0 && resolution <= 0.5) {
        return Err(CliError::Config(format!("oracle.resolution {resolution} outside (0, 0.5]")));
    }
    let result = grid_search(&mdp, &functional, resolution)?;
    let out_dir = runner::resolve_out_dir(cli_out, &loaded.raw, &loaded.stem);
    fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", out_dir.display())))?;
    let path = out_dir.join("oracle.txt");
    fs::write(&path, oracle_result_to_text(&result))
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
    Ok((result, path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use maxent::env::{figure1_mdp, figure1_policies, random_mdp};

    #[test]
    fn simplex_grid_counts() {
        assert_eq!(simplex_grid(2, 50).len(), 51);
        assert_eq!(simplex_grid(3, 50).len(), 52 * 51 / 2);
        for point in simplex_grid(3, 10) {
            let sum: f64 = point.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn figure1_choice_states_are_the_branch_states() {
        let mdp = figure1_mdp(0.99).unwrap();
        assert_eq!(choice_states(&mdp), vec![0, 1, 2]);
    }

    #[test]
    fn grid_search_rejects_large_models() {
        let mdp = random_mdp(7, 2, 0.9, 1);
        let f = RewardFunctional::smoothed_entropy(0.01).unwrap();
        assert!(matches!(grid_search(&mdp, &f, 0.02), Err(CliError::Config(_))));
    }

    #[test]
    fn single_state_oracle_is_immediate() {
        let mdp = random_mdp(1, 2, 0.9, 2);
        let f = RewardFunctional::smoothed_entropy(0.01).unwrap();
        let result = grid_search(&mdp, &f, 0.02).unwrap();
        assert_eq!(result.evaluations, 51);
        let expected = f.value(&maxent::mdp::StateDistribution::delta(1, 0));
        assert_eq!(result.best_value, expected);
    }

    #[test]
    fn figure1_oracle_matches_reference_policy_value() {
        let mdp = figure1_mdp(0.99).unwrap();
        let f = RewardFunctional::smoothed_entropy(1e-3).unwrap();
        let (_, pi1, _) = figure1_policies();
        let reference = f.value(&mdp.discounted_occupancy(&pi1).unwrap());
        // coarse 0.1 grid keeps this test quick; the acceptance suite runs 0.02
        let result = grid_search(&mdp, &f, 0.1).unwrap();
        assert!(
            result.best_value >= reference - 0.02,
            "grid best {} well below reference {reference}",
            result.best_value
        );
    }

    #[test]
    fn refinement_self_consistency_on_two_states() {
        let mdp = random_mdp(2, 2, 0.9, 11);
        let f = RewardFunctional::smoothed_entropy(1e-3).unwrap();
        let coarse = grid_search(&mdp, &f, 0.02).unwrap();
        let fine = grid_search(&mdp, &f, 0.005).unwrap();
        assert!(fine.best_value >= coarse.best_value - 1e-12);
        assert!(
            (fine.best_value - coarse.best_value).abs() <= 1e-3,
            "coarse {} vs fine {}",
            coarse.best_value,
            fine.best_value
        );
    }
}
