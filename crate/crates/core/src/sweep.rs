//! One-parameter sweeps over a base configuration.
//!
//! A parameter is addressed by its dotted path in the configuration
//! document, with array elements by zero-based index: `params.C`,
//! `params.gamma.0`, `timeline.2.U`, `dt_min`.

use std::io::{self, Write};

use serde_json::Value;
use thiserror::Error;

use crate::export::format_sig;
use crate::integrator::{simulate_timeline, Phase};
use crate::model::workability_ceiling;
use crate::scenario::{config_from_value, config_to_value, ConfigError, SimulationConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub path: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub final_z_total: f64,
    pub final_z_strong: f64,
    /// Largest shortfall of workability below the day's ceiling.
    pub peak_r_deficit: f64,
    pub clamp_count: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("sweep needs at least one value")]
    EmptyValues,
    #[error("parameter path `{0}` does not name a numeric field of the configuration")]
    UnresolvedPath(String),
    #[error("{path} = {value}: {source}")]
    Config {
        path: String,
        value: f64,
        source: ConfigError,
    },
}

fn resolve<'a>(root: &'a mut Value, path: &str) -> Option<&'a mut Value> {
    let mut node = root;
    for key in path.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(key)?,
            Value::Array(items) => items.get_mut(key.parse::<usize>().ok()?)?,
            _ => return None,
        };
    }
    Some(node)
}

/// `base` with the field at `path` set to `value`, validated.
pub fn apply_parameter(
    base: &SimulationConfig,
    path: &str,
    value: f64,
) -> Result<SimulationConfig, SweepError> {
    let mut doc = config_to_value(base);
    let slot = resolve(&mut doc, path)
        .filter(|v| v.is_number() || v.is_string())
        .ok_or_else(|| SweepError::UnresolvedPath(path.to_string()))?;
    // `C` is the only string-valued number ("inf").
    if slot.is_string() && !path.ends_with('C') {
        return Err(SweepError::UnresolvedPath(path.to_string()));
    }
    *slot = if value.is_infinite() {
        Value::from("inf")
    } else if path == "record_every" {
        Value::from(value as u64)
    } else {
        Value::from(value)
    };
    config_from_value(doc).map_err(|source| SweepError::Config {
        path: path.to_string(),
        value,
        source,
    })
}

/// Simulates `base` once per value, in input order.
pub fn run_sweep(base: &SimulationConfig, spec: &SweepSpec) -> Result<Vec<SweepRow>, SweepError> {
    if spec.values.is_empty() {
        return Err(SweepError::EmptyValues);
    }
    let configs = spec
        .values
        .iter()
        .map(|&v| apply_parameter(base, &spec.path, v))
        .collect::<Result<Vec<_>, _>>()?;

    // Runs are independent; results are collected back in input order.
    let trajectories: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|cfg| scope.spawn(move || simulate_timeline(cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });

    spec.values
        .iter()
        .zip(trajectories)
        .map(|(&value, traj)| {
            let traj = traj.map_err(|source| SweepError::Config {
                path: spec.path.clone(),
                value,
                source,
            })?;
            let peak_r_deficit = traj
                .samples
                .iter()
                .map(|s| (workability_ceiling(s.t, &traj.params) - s.r).max(0.0))
                .fold(0.0, f64::max);
            Ok(SweepRow {
                value,
                final_z_total: traj.final_state.total(),
                final_z_strong: traj.final_state.strongest(),
                peak_r_deficit,
                clamp_count: traj.clamp_count,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> io::Result<()> {
    writeln!(out, "value,final_Z_total,final_Z_n,peak_r_deficit")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{}",
            format_sig(row.value),
            format_sig(row.final_z_total),
            format_sig(row.final_z_strong),
            format_sig(row.peak_r_deficit)
        )?;
    }
    Ok(())
}

/// Whether the configuration ends with a break.
pub fn ends_with_break(config: &SimulationConfig) -> bool {
    config.timeline.last().is_some_and(|s| s.kind == Phase::Break)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::builtin_scenario;

    #[test]
    fn cutoff_sweep_is_monotone() {
        let base = builtin_scenario("fig2b").unwrap();
        let spec = SweepSpec {
            path: "params.C".into(),
            values: vec![1.0, 2.0, 4.0, 8.0],
        };
        let rows = run_sweep(&base, &spec).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows
            .windows(2)
            .all(|w| w[1].final_z_total >= w[0].final_z_total));
    }

    #[test]
    fn forgetting_sweep_lowers_retention() {
        let base = builtin_scenario("fig4").unwrap();
        assert!(ends_with_break(&base));
        // Raising the weakest category's forgetting keeps gamma non-increasing.
        let spec = SweepSpec {
            path: "params.gamma.0".into(),
            values: vec![0.1, 0.2],
        };
        let rows = run_sweep(&base, &spec).unwrap();
        assert!(rows[1].final_z_total < rows[0].final_z_total);
    }

    #[test]
    fn empty_values_rejected() {
        let base = builtin_scenario("fig2a").unwrap();
        let spec = SweepSpec {
            path: "params.C".into(),
            values: vec![],
        };
        assert_eq!(run_sweep(&base, &spec).unwrap_err(), SweepError::EmptyValues);
    }

    #[test]
    fn unresolved_paths_rejected() {
        let base = builtin_scenario("fig2a").unwrap();
        for path in ["params.k9", "params.gamma.3", "variant", "params", "timeline.0.kind"] {
            assert_eq!(
                apply_parameter(&base, path, 1.0).unwrap_err(),
                SweepError::UnresolvedPath(path.into()),
                "{path}"
            );
        }
    }

    #[test]
    fn invalid_value_reports_config_error() {
        let base = builtin_scenario("fig2a").unwrap();
        assert!(matches!(
            apply_parameter(&base, "params.b", 2.0),
            Err(SweepError::Config { .. })
        ));
        let cfg = apply_parameter(&base, "timeline.1.U", 9.5).unwrap();
        assert_eq!(cfg.timeline[1].u, 9.5);
    }
}
