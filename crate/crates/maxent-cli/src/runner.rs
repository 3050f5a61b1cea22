//! End-to-end run execution: build the environment, drive the optimizer,
//! and emit artifacts (trace CSV, occupancy CSV, mixture, optional heatmap,
//! counts snapshot in sampled mode, manifest).

use crate::config::{self, EnvConfig, RawConfig, ResolvedRun};
use crate::{formats, heatmap, manifest, CliError};
use maxent::driver::{self, DriverEnv, DriverOutcome};
use maxent::env::{make_simulator, EnvSpec};
use maxent::mdp::TabularMDP;
use maxent::objectives::RewardFunctional;
use maxent::oracles::sample::TransitionCounts;
use maxent::rng::derive_seed;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

/// Environment variable naming the default output root.
pub const OUT_ROOT_VAR: &str = "MAXENT_OUT_ROOT";

pub struct LoadedConfig {
    pub raw: RawConfig,
    pub config_dir: PathBuf,
    pub stem: String,
}

/// Read a config file and apply CLI overrides and the seed override.
pub fn load_config(
    path: &Path,
    seed_override: Option<u64>,
    overrides: &[String],
) -> Result<LoadedConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
    let mut value: toml::Value = text
        .parse()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for spec in overrides {
        config::apply_override(&mut value, spec)?;
    }
    if let Some(seed) = seed_override {
        config::apply_override(&mut value, &format!("seed={seed}"))?;
    }
    let raw = config::from_value(value)?;
    let config_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    Ok(LoadedConfig { raw, config_dir, stem })
}

/// Decide the output directory: `--out`, then `out_dir` from the config,
/// then `$MAXENT_OUT_ROOT/<stem>`, then `runs/<stem>`.
pub fn resolve_out_dir(
    cli_out: Option<&Path>,
    raw: &RawConfig,
    stem: &str,
) -> PathBuf {
    if let Some(out) = cli_out {
        return out.to_path_buf();
    }
    if let Some(dir) = &raw.out_dir {
        return PathBuf::from(dir);
    }
    let root = std::env::var(OUT_ROOT_VAR).unwrap_or_else(|_| "runs".into());
    Path::new(&root).join(stem)
}

/// Build the model described by the env section.
pub fn build_env(
    env: &EnvConfig,
    config_dir: &Path,
) -> Result<(TabularMDP, Option<EnvSpec>), CliError> {
    match env {
        EnvConfig::File { path } => {
            let full = config_dir.join(path);
            let text = fs::read_to_string(&full)
                .map_err(|e| CliError::Config(format!("reading {}: {e}", full.display())))?;
            Ok((formats::mdp_from_text(&text)?, None))
        }
        other => {
            let spec = other.to_spec().expect("non-file env has a spec");
            let mdp = spec
                .build()
                .map_err(|e| CliError::Config(format!("env: {e}")))?;
            Ok((mdp, Some(spec)))
        }
    }
}

pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub final_objective: f64,
    pub final_raw_entropy: f64,
    pub manifest_path: PathBuf,
}

fn unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::write(dir.join(name), contents)
        .map_err(|e| CliError::Runtime(format!("writing {name}: {e}")))
}

/// Execute a fully resolved run and emit artifacts into `out_dir`.
pub fn execute(
    raw: &RawConfig,
    resolved: &ResolvedRun,
    mdp: &TabularMDP,
    spec: Option<&EnvSpec>,
    out_dir: &Path,
) -> Result<RunArtifacts, CliError> {
    let started = unix_ms();
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", out_dir.display())))?;
    let functional: RewardFunctional = resolved.functional.build(mdp.n_states())?;

    let mut counts_out: Option<TransitionCounts> = None;
    let outcome: DriverOutcome = if let Some(sampled) = &resolved.sampled {
        let mut counts = match &sampled.counts_in {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    CliError::Config(format!("reading counts {}: {e}", path.display()))
                })?;
                let counts = TransitionCounts::from_snapshot(&text).map_err(CliError::Config)?;
                if counts.n_states() != mdp.n_states() || counts.n_actions() != mdp.n_actions() {
                    return Err(CliError::Config(format!(
                        "counts snapshot is {}x{}, environment is {}x{}",
                        counts.n_states(),
                        counts.n_actions(),
                        mdp.n_states(),
                        mdp.n_actions()
                    )));
                }
                counts
            }
            None => TransitionCounts::new(mdp.n_states(), mdp.n_actions()),
        };
        let mut sim = make_simulator(mdp.clone(), derive_seed(resolved.seed, 0x53494D));
        let outcome = driver::run(
            DriverEnv::Sampled { sim: &mut sim, counts: &mut counts },
            &functional,
            &resolved.driver,
        )
        .map_err(|e| CliError::Runtime(e.to_string()))?;
        counts_out = Some(counts);
        outcome
    } else {
        driver::run(DriverEnv::Exact(mdp), &functional, &resolved.driver)
            .map_err(|e| CliError::Runtime(e.to_string()))?
    };

    write_file(out_dir, "trace.csv", &outcome.trace.to_csv())?;
    write_file(
        out_dir,
        "occupancy.csv",
        &formats::occupancy_to_csv(&outcome.final_density),
    )?;
    write_file(out_dir, "mixture.txt", &driver::mixture_to_text(&outcome.mixture))?;

    let mut files = vec![
        ("trace_csv".to_string(), "trace.csv".to_string()),
        ("occupancy_csv".to_string(), "occupancy.csv".to_string()),
        ("mixture".to_string(), "mixture.txt".to_string()),
    ];
    if let Some(spec) = spec {
        if let Some(pgm) = heatmap::occupancy_pgm(
            spec,
            outcome.final_density.probs().as_slice().expect("contiguous"),
        ) {
            write_file(out_dir, "heatmap.pgm", &pgm)?;
            files.push(("heatmap".into(), "heatmap.pgm".into()));
        }
    }
    if let Some(counts) = &counts_out {
        write_file(out_dir, "counts.txt", &counts.to_snapshot())?;
        files.push(("counts".into(), "counts.txt".into()));
    }

    let manifest = manifest::Manifest {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: resolved.seed,
        started_unix_ms: started,
        finished_unix_ms: unix_ms(),
        final_objective: outcome.final_objective,
        final_raw_entropy: outcome.final_raw_entropy,
        files,
        config_echo: resolved.echo_toml(raw),
    };
    let manifest_path = out_dir.join("manifest.txt");
    manifest::write_atomic(&manifest_path, &manifest.to_text())?;

    Ok(RunArtifacts {
        out_dir: out_dir.to_path_buf(),
        final_objective: outcome.final_objective,
        final_raw_entropy: outcome.final_raw_entropy,
        manifest_path,
    })
}

/// The `run` subcommand.
pub fn cmd_run(
    config_path: &Path,
    cli_out: Option<&Path>,
    seed_override: Option<u64>,
    overrides: &[String],
) -> Result<RunArtifacts, CliError> {
    let loaded = load_config(config_path, seed_override, overrides)?;
    let (mdp, spec) = build_env(&loaded.raw.env, &loaded.config_dir)?;
    let resolved = config::resolve(&loaded.raw, mdp.n_states(), &loaded.config_dir)?;
    let out_dir = resolve_out_dir(cli_out, &loaded.raw, &loaded.stem);
    execute(&loaded.raw, &resolved, &mdp, spec.as_ref(), &out_dir)
}

/// The `export-env` subcommand: write the built model in the MDP file
/// format.
pub fn cmd_export_env(
    config_path: &Path,
    cli_out: Option<&Path>,
    seed_override: Option<u64>,
    overrides: &[String],
) -> Result<PathBuf, CliError> {
    let loaded = load_config(config_path, seed_override, overrides)?;
    let (mdp, _) = build_env(&loaded.raw.env, &loaded.config_dir)?;
    let out_dir = resolve_out_dir(cli_out, &loaded.raw, &loaded.stem);
    fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("creating {}: {e}", out_dir.display())))?;
    let path = out_dir.join("mdp.txt");
    fs::write(&path, formats::mdp_to_text(&mdp))
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))?;
    Ok(path)
}
