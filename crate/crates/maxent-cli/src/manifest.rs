//! Run manifests: a line-oriented summary plus an embedded echo of the
//! effective configuration. Written atomically (temp file + rename) once
//! every other artifact exists.

use crate::CliError;
use std::fs;
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub code_version: String,
    pub seed: u64,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub final_objective: f64,
    pub final_raw_entropy: f64,
    /// (role, relative path) pairs for emitted artifacts.
    pub files: Vec<(String, String)>,
    pub config_echo: String,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut out = String::from("# maxent run manifest v1\n");
        out.push_str(&format!("code_version {}\n", self.code_version));
        out.push_str(&format!("seed {}\n", self.seed));
        out.push_str(&format!("started_unix_ms {}\n", self.started_unix_ms));
        out.push_str(&format!("finished_unix_ms {}\n", self.finished_unix_ms));
        out.push_str(&format!("final_objective {}\n", self.final_objective));
        out.push_str(&format!("final_raw_entropy {}\n", self.final_raw_entropy));
        for (role, path) in &self.files {
            out.push_str(&format!("file {role} {path}\n"));
        }
        out.push_str("config_echo_begin\n");
        out.push_str(&self.config_echo);
        if !self.config_echo.ends_with('\n') {
            out.push('\n');
        }
        out.push_str("config_echo_end\n");
        out
    }

    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut code_version = None;
        let mut seed = None;
        let mut started = None;
        let mut finished = None;
        let mut final_objective = None;
        let mut final_raw_entropy = None;
        let mut files = Vec::new();
        let mut echo_lines: Vec<&str> = Vec::new();
        let mut in_echo = false;
        let mut saw_echo_end = false;
        for raw in text.lines() {
            if in_echo {
                if raw == "config_echo_end" {
                    in_echo = false;
                    saw_echo_end = true;
                } else {
                    echo_lines.push(raw);
                }
                continue;
            }
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "config_echo_begin" {
                in_echo = true;
                continue;
            }
            let bad = |msg: String| CliError::Config(format!("manifest: {msg}"));
            let (key, rest) = line
                .split_once(' ')
                .ok_or_else(|| bad(format!("bare record {line:?}")))?;
            match key {
                "code_version" => code_version = Some(rest.to_string()),
                "seed" => seed = Some(rest.parse().map_err(|e| bad(format!("seed: {e}")))?),
                "started_unix_ms" => {
                    started = Some(rest.parse().map_err(|e| bad(format!("started: {e}")))?)
                }
                "finished_unix_ms" => {
                    finished = Some(rest.parse().map_err(|e| bad(format!("finished: {e}")))?)
                }
                "final_objective" => {
                    final_objective =
                        Some(rest.parse().map_err(|e| bad(format!("objective: {e}")))?)
                }
                "final_raw_entropy" => {
                    final_raw_entropy =
                        Some(rest.parse().map_err(|e| bad(format!("entropy: {e}")))?)
                }
                "file" => {
                    let (role, path) = rest
                        .split_once(' ')
                        .ok_or_else(|| bad(format!("file record {rest:?}")))?;
                    files.push((role.to_string(), path.to_string()));
                }
                other => return Err(bad(format!("unknown record {other:?}"))),
            }
        }
        if in_echo || !saw_echo_end {
            return Err(CliError::Config("manifest: unterminated config echo".into()));
        }
        let need = |name: &str| CliError::Config(format!("manifest: missing {name}"));
        Ok(Self {
            code_version: code_version.ok_or_else(|| need("code_version"))?,
            seed: seed.ok_or_else(|| need("seed"))?,
            started_unix_ms: started.ok_or_else(|| need("started_unix_ms"))?,
            finished_unix_ms: finished.ok_or_else(|| need("finished_unix_ms"))?,
            final_objective: final_objective.ok_or_else(|| need("final_objective"))?,
            final_raw_entropy: final_raw_entropy.ok_or_else(|| need("final_raw_entropy"))?,
            files,
            config_echo: {
                let mut echo = echo_lines.join("\n");
                echo.push('\n');
                echo
            },
        })
    }
}

/// Write atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let dir = path.parent().ok_or_else(|| {
        CliError::Runtime(format!("manifest path {} has no parent", path.display()))
    })?;
    let tmp = dir.join(".manifest.tmp");
    fs::write(&tmp, contents)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| CliError::Runtime(format!("renaming manifest into place: {e}")))?;
    Ok(())
}
