//! File formats owned by the harness.
//!
//! ## MDP file (`mdp.txt`)
//!
//! Line-oriented text; `#` starts a comment. Records:
//!
//! ```text
//! n_states <int>
//! n_actions <int>
//! gamma <float>
//! d0 <float> ... <float>          # n_states entries
//! t <s> <a> <s'> <p>              # one per nonzero transition entry
//! ```
//!
//! Unlisted transition entries are zero. The loader validates the full model
//! (row sums, sign, discount, initial distribution) and reports the first
//! violated constraint with its indices.
//!
//! ## Occupancy CSV (`occupancy.csv`)
//!
//! Header `state,probability`, one row per state. Floats print in shortest
//! round-trip form, so re-parsing reproduces the exact values.

use crate::CliError;
use maxent::mdp::{StateDistribution, TabularMDP};
use ndarray::{Array1, Array3};

pub fn mdp_to_text(mdp: &TabularMDP) -> String {
    let mut out = String::from("# maxent mdp v1\n");
    out.push_str(&format!("n_states {}\n", mdp.n_states()));
    out.push_str(&format!("n_actions {}\n", mdp.n_actions()));
    out.push_str(&format!("gamma {}\n", mdp.gamma()));
    let d0: Vec<String> = mdp.d0().iter().map(|p| p.to_string()).collect();
    out.push_str(&format!("d0 {}\n", d0.join(" ")));
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            for next in 0..mdp.n_states() {
                let p = mdp.prob(s, a, next);
                if p != 0.0 {
                    out.push_str(&format!("t {s} {a} {next} {p}\n"));
                }
            }
        }
    }
    out
}

pub fn mdp_from_text(text: &str) -> Result<TabularMDP, CliError> {
    let mut n_states: Option<usize> = None;
    let mut n_actions: Option<usize> = None;
    let mut gamma: Option<f64> = None;
    let mut d0: Option<Vec<f64>> = None;
    let mut quads: Vec<(usize, usize, usize, f64)> = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let fail = |msg: String| CliError::Config(format!("mdp file line {}: {msg}", lineno + 1));
        match fields[0] {
            "n_states" | "n_actions" if fields.len() == 2 => {
                let v = fields[1]
                    .parse::<usize>()
                    .map_err(|e| fail(format!("{}: {e}", fields[0])))?;
                if fields[0] == "n_states" {
                    n_states = Some(v);
                } else {
                    n_actions = Some(v);
                }
            }
            "gamma" if fields.len() == 2 => {
                gamma = Some(fields[1].parse().map_err(|e| fail(format!("gamma: {e}")))?);
            }
            "d0" => {
                let values: Result<Vec<f64>, _> =
                    fields[1..].iter().map(|f| f.parse::<f64>()).collect();
                d0 = Some(values.map_err(|e| fail(format!("d0: {e}")))?);
            }
            "t" if fields.len() == 5 => {
                let s = fields[1].parse::<usize>().map_err(|e| fail(format!("s: {e}")))?;
                let a = fields[2].parse::<usize>().map_err(|e| fail(format!("a: {e}")))?;
                let next = fields[3].parse::<usize>().map_err(|e| fail(format!("s': {e}")))?;
                let p = fields[4].parse::<f64>().map_err(|e| fail(format!("p: {e}")))?;
                quads.push((s, a, next, p));
            }
            other => return Err(fail(format!("unrecognized record {other:?}"))),
        }
    }

    let n_states =
        n_states.ok_or_else(|| CliError::Config("mdp file: missing n_states".into()))?;
    let n_actions =
        n_actions.ok_or_else(|| CliError::Config("mdp file: missing n_actions".into()))?;
    let gamma = gamma.ok_or_else(|| CliError::Config("mdp file: missing gamma".into()))?;
    let d0 = d0.ok_or_else(|| CliError::Config("mdp file: missing d0".into()))?;
    if d0.len() != n_states {
        return Err(CliError::Config(format!(
            "mdp file: d0 has {} entries; n_states is {n_states}",
            d0.len()
        )));
    }
    let mut tensor = Array3::zeros((n_states, n_actions, n_states));
    let mut seen = vec![false; n_states * n_actions * n_states];
    for (s, a, next, p) in quads {
        if s >= n_states || next >= n_states {
            return Err(CliError::Config(format!(
                "mdp file: transition ({s}, {a}, {next}) has a state outside 0..{n_states}"
            )));
        }
        if a >= n_actions {
            return Err(CliError::Config(format!(
                "mdp file: transition ({s}, {a}, {next}) has an action outside 0..{n_actions}"
            )));
        }
        let flat = (s * n_actions + a) * n_states + next;
        if seen[flat] {
            return Err(CliError::Config(format!(
                "mdp file: duplicate transition entry ({s}, {a}, {next})"
            )));
        }
        seen[flat] = true;
        tensor[(s, a, next)] = p;
    }
    TabularMDP::new(tensor, gamma, Array1::from_vec(d0))
        .map_err(|e| CliError::Config(format!("mdp file: {e}")))
}

pub fn occupancy_to_csv(d: &StateDistribution) -> String {
    let mut out = String::from("state,probability\n");
    for (s, p) in d.probs().iter().enumerate() {
        out.push_str(&format!("{s},{p}\n"));
    }
    out
}

pub fn occupancy_from_csv(text: &str) -> Result<Vec<f64>, CliError> {
    let mut lines = text.lines();
    match lines.next() {
        Some("state,probability") => {}
        other => {
            return Err(CliError::Config(format!("occupancy csv: bad header {other:?}")))
        }
    }
    let mut probs = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let (state, p) = line
            .split_once(',')
            .ok_or_else(|| CliError::Config(format!("occupancy csv row {}: no comma", i + 1)))?;
        let state: usize = state
            .parse()
            .map_err(|e| CliError::Config(format!("occupancy csv row {}: {e}", i + 1)))?;
        if state != i {
            return Err(CliError::Config(format!(
                "occupancy csv row {}: state {state} out of order",
                i + 1
            )));
        }
        probs.push(
            p.parse::<f64>()
                .map_err(|e| CliError::Config(format!("occupancy csv row {}: {e}", i + 1)))?,
        );
    }
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use maxent::env::{figure1_mdp, random_mdp};
    use proptest::prelude::*;

    #[test]
    fn mdp_text_round_trip_exact() {
        let mdp = figure1_mdp(0.99).unwrap();
        let text = mdp_to_text(&mdp);
        let back = mdp_from_text(&text).unwrap();
        assert_eq!(back.n_states(), 6);
        assert_eq!(back.gamma(), 0.99);
        for s in 0..6 {
            for a in 0..2 {
                for n in 0..6 {
                    assert_eq!(back.prob(s, a, n), mdp.prob(s, a, n));
                }
            }
        }
    }

    #[test]
    fn loader_reports_first_violation_with_indices() {
        let text = "n_states 2\nn_actions 1\ngamma 0.9\nd0 1 0\nt 0 0 0 0.5\nt 1 0 1 1\n";
        let err = mdp_from_text(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("state 0") && msg.contains("action 0"), "{msg}");

        let dup = "n_states 1\nn_actions 1\ngamma 0.9\nd0 1\nt 0 0 0 0.5\nt 0 0 0 0.5\n";
        let err = mdp_from_text(dup).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");

        let bad_gamma = "n_states 1\nn_actions 1\ngamma 1.0\nd0 1\nt 0 0 0 1\n";
        let err = mdp_from_text(bad_gamma).unwrap_err();
        assert!(err.to_string().contains("discount"), "{err}");
    }

    #[test]
    fn occupancy_csv_round_trip() {
        let d = maxent::env::random_distribution(7, 3, 0.8);
        let csv = occupancy_to_csv(&d);
        let back = occupancy_from_csv(&csv).unwrap();
        for (a, b) in back.iter().zip(d.probs().iter()) {
            assert_eq!(a, b);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn mdp_text_round_trips_random_models(seed in 0u64..1000, n in 2usize..6, k in 1usize..4) {
            let mdp = random_mdp(n, k, 0.9, seed);
            let back = mdp_from_text(&mdp_to_text(&mdp)).unwrap();
            prop_assert_eq!(back.n_states(), n);
            for s in 0..n {
                for a in 0..k {
                    for next in 0..n {
                        prop_assert_eq!(back.prob(s, a, next), mdp.prob(s, a, next));
                    }
                }
            }
            for s in 0..n {
                prop_assert_eq!(back.d0()[s], mdp.d0()[s]);
            }
        }
    }
}
