//! Line-oriented policy artifact: the full run configuration, solve
//! metadata, and one record per observer state (index, canonical candidate
//! list, value, chosen action, optimal-action set). The embedded
//! configuration makes the file self-contained, so a simulation can rebuild
//! the exact observer the policy was solved on.

use sentinel_core::model::DefenderAction;
use sentinel_core::observer::{build_observer_automaton_with_budget, ObserverAutomaton};
use sentinel_core::solver::{Policy, ValueFunction};
use sentinel_core::{Error, Result};

use crate::config::RunConfig;
use crate::pipeline::build_system;

const HEADER: &str = "sentinel-policy v1";

pub fn policy_to_text(config: &RunConfig, aut: &ObserverAutomaton, policy: &Policy) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for line in config.to_toml().lines() {
        if line.is_empty() {
            out.push_str("config\n");
        } else {
            out.push_str(&format!("config {line}\n"));
        }
    }
    out.push_str(&format!("meta states {}\n", aut.state_count()));
    out.push_str(&format!("meta initial {}\n", aut.initial()));
    out.push_str(&format!("meta iterations {}\n", policy.iterations));
    out.push_str(&format!("meta residual {}\n", policy.residual));
    for (idx, state) in aut.states().iter().enumerate() {
        let optimal: Vec<String> =
            policy.optimal_sets[idx].iter().map(|a| a.label()).collect();
        out.push_str(&format!(
            "state {idx} {} {} {} {}\n",
            state.code(),
            policy.value.at(idx),
            policy.actions[idx].label(),
            optimal.join(";"),
        ));
    }
    out
}

/// Parses the artifact and rebuilds the observer it was solved on,
/// validating that the recorded states match the reconstruction.
pub fn policy_from_text(text: &str) -> Result<(RunConfig, ObserverAutomaton, Policy)> {
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(Error::Parse("not a sentinel policy file".into()));
    }
    let mut config_lines: Vec<&str> = Vec::new();
    let mut meta: Vec<(String, String)> = Vec::new();
    let mut records: Vec<(usize, String, f64, DefenderAction, Vec<DefenderAction>)> = Vec::new();
    for line in lines {
        if let Some(rest) = line.strip_prefix("config") {
            config_lines.push(rest.strip_prefix(' ').unwrap_or(rest));
        } else if let Some(rest) = line.strip_prefix("meta ") {
            let (key, value) = rest
                .split_once(' ')
                .ok_or_else(|| Error::Parse(format!("bad meta line {line:?}")))?;
            meta.push((key.to_string(), value.to_string()));
        } else if let Some(rest) = line.strip_prefix("state ") {
            let fields: Vec<&str> = rest.split_whitespace().collect();
            let [idx, code, value, action, optimal] = fields.as_slice() else {
                return Err(Error::Parse(format!("bad state record {line:?}")));
            };
            let idx: usize =
                idx.parse().map_err(|_| Error::Parse(format!("bad state index in {line:?}")))?;
            let value: f64 =
                value.parse().map_err(|_| Error::Parse(format!("bad value in {line:?}")))?;
            let action = DefenderAction::parse_label(action)?;
            let optimal = optimal
                .split(';')
                .map(DefenderAction::parse_label)
                .collect::<Result<Vec<_>>>()?;
            records.push((idx, code.to_string(), value, action, optimal));
        } else if !line.trim().is_empty() {
            return Err(Error::Parse(format!("unrecognized policy line {line:?}")));
        }
    }

    let config = RunConfig::from_toml(&config_lines.join("\n"))?;
    let system = build_system(&config)?;
    let aut = build_observer_automaton_with_budget(
        system,
        &config.initial_observer_state()?,
        config.observer.state_budget,
    )?;

    if records.len() != aut.state_count() {
        return Err(Error::Parse(format!(
            "policy lists {} states but the rebuilt observer has {}",
            records.len(),
            aut.state_count()
        )));
    }
    let mut actions = vec![DefenderAction::Null; records.len()];
    let mut optimal_sets = vec![Vec::new(); records.len()];
    let mut values = vec![0.0; records.len()];
    for (idx, code, value, action, optimal) in records {
        let state = aut.states().get(idx).ok_or_else(|| {
            Error::Parse(format!("state index {idx} out of range"))
        })?;
        if state.code() != code {
            return Err(Error::Parse(format!(
                "state {idx} is {} in the rebuilt observer but {code} in the policy",
                state.code()
            )));
        }
        actions[idx] = action;
        optimal_sets[idx] = optimal;
        values[idx] = value;
    }
    let iterations = meta
        .iter()
        .find(|(k, _)| k == "iterations")
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0);
    let residual = meta
        .iter()
        .find(|(k, _)| k == "residual")
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(0.0);
    let policy = Policy {
        actions,
        optimal_sets,
        value: ValueFunction::new(values),
        residual,
        iterations,
    };
    Ok((config, aut, policy))
}
