//! Run configuration: a TOML tree with `--override key=value` support.
//!
//! Resolution order for driver parameters: a schedule (if selected) derives
//! defaults from `eps`, then any explicitly configured field overrides its
//! derived value. The fully resolved configuration is what runs and what
//! the manifest echoes, so re-parsing an echo reproduces the run exactly.

use crate::CliError;
use maxent::driver::{schedule_entropy, schedule_smooth, OracleMode, SampledOverrides};
use maxent::env::EnvSpec;
use maxent::mdp::StateDistribution;
use maxent::objectives::RewardFunctional;
use maxent::DriverConfig;
use ndarray::Array1;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out_dir: Option<String>,
    pub env: EnvConfig,
    pub functional: FunctionalConfig,
    #[serde(default)]
    pub driver: Option<DriverSection>,
    #[serde(default)]
    pub oracle: Option<OracleSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvConfig {
    Figure1 {
        #[serde(default)]
        gamma: Option<f64>,
    },
    Chain {
        n: usize,
        #[serde(default)]
        slip: Option<f64>,
        #[serde(default)]
        gamma: Option<f64>,
    },
    Gridworld {
        width: usize,
        height: usize,
        #[serde(default)]
        walls: Vec<(usize, usize)>,
        #[serde(default)]
        start: Option<(usize, usize)>,
        #[serde(default)]
        gamma: Option<f64>,
    },
    Random {
        n_states: usize,
        n_actions: usize,
        env_seed: u64,
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default)]
        gamma: Option<f64>,
    },
    MountainCarDisc {
        #[serde(default)]
        pos_bins: Option<usize>,
        #[serde(default)]
        vel_bins: Option<usize>,
        #[serde(default)]
        substeps: Option<usize>,
        #[serde(default)]
        gamma: Option<f64>,
    },
    /// Load a model from the MDP file format.
    File { path: String },
}

impl EnvConfig {
    /// Resolve into a builder spec, or `None` for file-backed models.
    pub fn to_spec(&self) -> Option<EnvSpec> {
        match self {
            EnvConfig::Figure1 { gamma } => {
                Some(EnvSpec::Figure1 { gamma: gamma.unwrap_or(0.99) })
            }
            EnvConfig::Chain { n, slip, gamma } => Some(EnvSpec::Chain {
                n: *n,
                slip: slip.unwrap_or(0.0),
                gamma: gamma.unwrap_or(0.9),
            }),
            EnvConfig::Gridworld { width, height, walls, start, gamma } => {
                Some(EnvSpec::Gridworld {
                    width: *width,
                    height: *height,
                    walls: walls.clone(),
                    start: start.unwrap_or((0, 0)),
                    gamma: gamma.unwrap_or(0.9),
                })
            }
            EnvConfig::Random { n_states, n_actions, env_seed, alpha, gamma } => {
                Some(EnvSpec::Random {
                    n_states: *n_states,
                    n_actions: *n_actions,
                    seed: *env_seed,
                    alpha: alpha.unwrap_or(1.0),
                    gamma: gamma.unwrap_or(0.9),
                })
            }
            EnvConfig::MountainCarDisc { pos_bins, vel_bins, substeps, gamma } => {
                Some(EnvSpec::MountainCarDisc {
                    pos_bins: pos_bins.unwrap_or(10),
                    vel_bins: vel_bins.unwrap_or(9),
                    substeps: substeps.unwrap_or(10),
                    gamma: gamma.unwrap_or(0.9),
                })
            }
            EnvConfig::File { .. } => None,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(untagged)]
pub enum TargetConfig {
    Named(String),
    Explicit(Vec<f64>),
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FunctionalConfig {
    pub kind: String,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub target: Option<TargetConfig>,
}

impl FunctionalConfig {
    pub fn build(&self, n_states: usize) -> Result<RewardFunctional, CliError> {
        let sigma = self
            .sigma
            .ok_or_else(|| CliError::Config("functional.sigma is required".into()))?;
        let target = |missing_ok: bool| -> Result<Option<StateDistribution>, CliError> {
            match &self.target {
                None if missing_ok => Ok(None),
                None => Err(CliError::Config(format!(
                    "functional.target is required for kind {:?}",
                    self.kind
                ))),
                Some(TargetConfig::Named(name)) if name == "uniform" => {
                    Ok(Some(StateDistribution::uniform(n_states)))
                }
                Some(TargetConfig::Named(name)) => Err(CliError::Config(format!(
                    "functional.target {name:?} not recognized (use \"uniform\" or an array)"
                ))),
                Some(TargetConfig::Explicit(values)) => {
                    if values.len() != n_states {
                        return Err(CliError::Config(format!(
                            "functional.target has {} entries; environment has {n_states} states",
                            values.len()
                        )));
                    }
                    StateDistribution::new(Array1::from_vec(values.clone()))
                        .map(Some)
                        .map_err(|e| CliError::Config(format!("functional.target: {e}")))
                }
            }
        };
        let wrap = |r: Result<RewardFunctional, maxent::objectives::ObjectiveError>| {
            r.map_err(|e| CliError::Config(format!("functional: {e}")))
        };
        match self.kind.as_str() {
            "smoothed_entropy" => wrap(RewardFunctional::smoothed_entropy(sigma)),
            "kl_to_target" => {
                let q = target(false)?.expect("target required");
                wrap(RewardFunctional::kl_to_target(sigma, q))
            }
            "cross_entropy_to_target" => {
                let q = target(false)?.expect("target required");
                wrap(RewardFunctional::cross_entropy_to_target(sigma, q))
            }
            other => Err(CliError::Config(format!(
                "functional.kind {other:?} unknown (smoothed_entropy | kl_to_target | cross_entropy_to_target)"
            ))),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct DriverSection {
    #[serde(default)]
    pub oracle: Option<String>,
    #[serde(default)]
    pub schedule: Option<String>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub iterations: Option<u64>,
    #[serde(default)]
    pub eps0: Option<f64>,
    #[serde(default)]
    pub eps1: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub plan_m: Option<u64>,
    #[serde(default)]
    pub plan_n: Option<usize>,
    #[serde(default)]
    pub plan_t0: Option<usize>,
    #[serde(default)]
    pub density_m: Option<usize>,
    #[serde(default)]
    pub density_t0: Option<usize>,
    #[serde(default)]
    pub counts_in: Option<String>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default)]
    pub resolution: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Dotted config key -> list of values; cells are the cartesian product.
    #[serde(default)]
    pub grid: Option<toml::value::Table>,
}

/// Parse a TOML document, reporting the field path / line on failure.
pub fn parse_raw(text: &str) -> Result<RawConfig, CliError> {
    let value: toml::Value =
        text.parse().map_err(|e| CliError::Config(format!("config parse error: {e}")))?;
    from_value(value)
}

/// Deserialize an already-parsed TOML tree.
pub fn from_value(value: toml::Value) -> Result<RawConfig, CliError> {
    RawConfig::deserialize(value).map_err(|e| CliError::Config(format!("config error: {e}")))
}

/// Apply one `key=value` override onto the raw TOML tree. The key is a
/// dotted path; the value is parsed as a TOML literal, falling back to a
/// string.
pub fn apply_override(root: &mut toml::Value, spec: &str) -> Result<(), CliError> {
    let (key, raw_value) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override {spec:?} is not key=value")))?;
    let parsed: toml::Value = match format!("x = {raw_value}").parse::<toml::value::Table>() {
        Ok(mut table) => table.remove("x").expect("x was just inserted"),
        Err(_) => toml::Value::String(raw_value.to_string()),
    };
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override {key:?}: {part:?} is not a table")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), parsed);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    unreachable!("override paths are non-empty")
}

/// Fully resolved parameters for one run.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedRun {
    pub seed: u64,
    pub env: EnvConfig,
    pub functional: FunctionalConfig,
    pub effective_sigma: f64,
    pub driver: DriverConfig,
    pub sampled: Option<SampledSettings>,
    pub oracle_resolution: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledSettings {
    pub delta: f64,
    pub overrides: SampledOverrides,
    pub counts_in: Option<PathBuf>,
}

/// Resolve the raw config against a built environment's dimensions.
pub fn resolve(
    raw: &RawConfig,
    n_states: usize,
    config_dir: &Path,
) -> Result<ResolvedRun, CliError> {
    let seed = raw.seed.unwrap_or(0);
    let driver_section = raw.driver.clone().unwrap_or_default();

    // schedule-derived defaults
    let schedule = driver_section.schedule.as_deref().unwrap_or("none");
    let mut derived_sigma = None;
    let (d_eps1, d_eps0, d_eta, d_iters) = match schedule {
        "none" => (None, None, None, None),
        "smooth" => {
            let eps = driver_section.eps.ok_or_else(|| {
                CliError::Config("driver.eps is required when driver.schedule = \"smooth\"".into())
            })?;
            let functional = raw.functional.build(n_states)?;
            let bundle = functional.smoothness(n_states);
            let s = schedule_smooth(eps, bundle.beta, bundle.bound);
            (Some(s.eps1), Some(s.eps0), Some(s.eta), Some(s.iterations))
        }
        "entropy" => {
            if raw.functional.kind != "smoothed_entropy" {
                return Err(CliError::Config(
                    "driver.schedule = \"entropy\" requires functional.kind = \"smoothed_entropy\""
                        .into(),
                ));
            }
            let eps = driver_section.eps.ok_or_else(|| {
                CliError::Config("driver.eps is required when driver.schedule = \"entropy\"".into())
            })?;
            let s = schedule_entropy(eps, n_states);
            derived_sigma = Some(s.sigma);
            (Some(s.eps1), Some(s.eps0), Some(s.eta), Some(s.iterations))
        }
        other => {
            return Err(CliError::Config(format!(
                "driver.schedule {other:?} unknown (none | smooth | entropy)"
            )))
        }
    };

    // explicit values override schedule-derived ones
    let effective_sigma = raw
        .functional
        .sigma
        .or(derived_sigma)
        .ok_or_else(|| CliError::Config("functional.sigma is required".into()))?;
    let require = |name: &str, explicit: Option<f64>, derived: Option<f64>| {
        explicit.or(derived).ok_or_else(|| {
            CliError::Config(format!("driver.{name} is required (no schedule selected)"))
        })
    };
    let eta = require("eta", driver_section.eta, d_eta)?;
    let eps0 = require("eps0", driver_section.eps0, d_eps0)?;
    let eps1 = require("eps1", driver_section.eps1, d_eps1)?;
    let iterations = driver_section
        .iterations
        .or(d_iters)
        .ok_or_else(|| CliError::Config("driver.iterations is required (no schedule selected)".into()))?;
    if iterations == 0 {
        return Err(CliError::Config("driver.iterations must be at least 1".into()));
    }
    let eps = driver_section.eps.unwrap_or(0.1);

    let oracle_kind = driver_section.oracle.as_deref().unwrap_or("exact");
    let (oracle, sampled) = match oracle_kind {
        "exact" => (OracleMode::Exact, None),
        "sampled" => {
            let delta = driver_section.delta.unwrap_or(0.1);
            let overrides = SampledOverrides {
                plan_m: driver_section.plan_m,
                plan_n: driver_section.plan_n,
                plan_t0: driver_section.plan_t0,
                density_m: driver_section.density_m,
                density_t0: driver_section.density_t0,
            };
            let counts_in =
                driver_section.counts_in.as_ref().map(|p| config_dir.join(p));
            (
                OracleMode::Sampled { delta, overrides },
                Some(SampledSettings { delta, overrides, counts_in }),
            )
        }
        other => {
            return Err(CliError::Config(format!(
                "driver.oracle {other:?} unknown (exact | sampled)"
            )))
        }
    };

    let functional = FunctionalConfig {
        kind: raw.functional.kind.clone(),
        sigma: Some(effective_sigma),
        target: raw.functional.target.clone(),
    };
    let resolution = raw.oracle.as_ref().and_then(|o| o.resolution).unwrap_or(0.02);
    if !(resolution > 0.0 && resolution <= 0.5) {
        return Err(CliError::Config(format!(
            "oracle.resolution {resolution} outside (0, 0.5]"
        )));
    }

    Ok(ResolvedRun {
        seed,
        env: raw.env.clone(),
        functional,
        effective_sigma,
        driver: DriverConfig {
            eps,
            eta,
            iterations: iterations as usize,
            eps0,
            eps1,
            oracle,
            seed,
        },
        sampled,
        oracle_resolution: resolution,
    })
}

impl ResolvedRun {
    /// Serialize the effective parameter set in the config schema, so the
    /// echo can be parsed and resolved back into the identical run.
    pub fn echo_toml(&self, raw: &RawConfig) -> String {
        let mut echoed = raw.clone();
        echoed.seed = Some(self.seed);
        echoed.functional = self.functional.clone();
        let mut driver = raw.driver.clone().unwrap_or_default();
        driver.oracle = Some(
            match self.driver.oracle {
                OracleMode::Exact => "exact",
                OracleMode::Sampled { .. } => "sampled",
            }
            .to_string(),
        );
        driver.eps = Some(self.driver.eps);
        driver.eta = Some(self.driver.eta);
        driver.iterations = Some(self.driver.iterations as u64);
        driver.eps0 = Some(self.driver.eps0);
        driver.eps1 = Some(self.driver.eps1);
        if let Some(sampled) = &self.sampled {
            driver.delta = Some(sampled.delta);
            driver.plan_m = sampled.overrides.plan_m;
            driver.plan_n = sampled.overrides.plan_n;
            driver.plan_t0 = sampled.overrides.plan_t0;
            driver.density_m = sampled.overrides.density_m;
            driver.density_t0 = sampled.overrides.density_t0;
        }
        echoed.driver = Some(driver);
        echoed.oracle = Some(OracleSection { resolution: Some(self.oracle_resolution) });
        toml::to_string(&echoed).expect("config echo serializes")
    }
}
