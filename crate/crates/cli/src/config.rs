//! Scenario files and command-line overrides.

use std::path::Path;

use elastomono::scenario::{Scenario, ThresholdPolicy};

use crate::args::{parse_eta_list, Options};
use crate::error::{CliError, CliResult};

pub fn parse_scenario(text: &str) -> CliResult<Scenario> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    scenario.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> CliResult<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_scenario(&text)
}

pub fn to_toml(scenario: &Scenario) -> CliResult<String> {
    toml::to_string(scenario).map_err(|e| CliError::Internal(format!("config serialization: {e}")))
}

/// Folds flag values into the scenario so the resolved scenario alone
/// reproduces the run. A noise list (for sweeps) is returned separately and
/// leaves `noise.eta` untouched.
pub fn apply_overrides(scenario: &mut Scenario, opts: &Options, allow_list: bool) -> CliResult<Option<Vec<f64>>> {
    let mut list = None;
    if let Some(spec) = &opts.eta {
        let etas = parse_eta_list(spec)?;
        if etas.len() == 1 && !spec.contains(':') {
            scenario.noise.eta = etas[0];
        } else if allow_list {
            list = Some(etas);
        } else {
            return Err(CliError::Config(format!("--eta '{spec}' must be a single value here")));
        }
    }
    if let Some(seed) = opts.seed {
        scenario.noise.seed = seed;
    }
    if let Some(m) = &opts.mcap {
        scenario.threshold = m
            .parse::<ThresholdPolicy>()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    if let Some(d) = opts.delta_override {
        scenario.noise.delta_override = Some(d);
    }
    scenario.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(list)
}
