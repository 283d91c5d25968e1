use std::path::Path;

use super::{ExperimentSpec, HarnessError};
use crate::solver::ConfigError;

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, HarnessError> {
    value.parse().map_err(|_| {
        HarnessError::Config(ConfigError::Parse {
            key: key.to_string(),
            value: value.to_string(),
        })
    })
}

/// Applies `key = value` lines to `spec`. Blank lines and lines starting
/// with `#` are skipped. Solver keys go to [`crate::solver::SolverConfig::set`];
/// the baselines use the `nm_` and `spsa_` prefixes; `grid_points` sets
/// the curve resolution.
pub fn apply_config_text(spec: &mut ExperimentSpec, text: &str) -> Result<(), HarnessError> {
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| HarnessError::Spec(format!("config line {}: expected `key = value`", n + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "grid_points" => spec.grid_points = parse(key, value)?,
            "nm_shots" => spec.nelder_mead.shots = parse(key, value)?,
            "nm_initial_step" => spec.nelder_mead.initial_step = parse(key, value)?,
            "spsa_a" => spec.spsa.a = parse(key, value)?,
            "spsa_c" => spec.spsa.c = parse(key, value)?,
            "spsa_big_a" => spec.spsa.big_a = parse(key, value)?,
            "spsa_alpha" => spec.spsa.alpha = parse(key, value)?,
            "spsa_gamma" => spec.spsa.gamma = parse(key, value)?,
            "spsa_shots" => spec.spsa.shots = parse(key, value)?,
            _ => spec.solver_config.set(key, value)?,
        }
    }
    Ok(())
}

pub fn apply_config_file(spec: &mut ExperimentSpec, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    apply_config_text(spec, &std::fs::read_to_string(path)?)
}
