//! Command implementations: artifact generation, manifests, and the glue
//! between configuration and the library pipeline.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use sentinel_core::automaton::{build_system_automaton_with_budget, SystemAutomaton};
use sentinel_core::experiments::{
    actions_csv, detect_thresholds, shares_csv, sweep_reimage, thresholds_csv,
};
use sentinel_core::model::AttackerEvent;
use sentinel_core::observer::{
    build_observer_automaton_with_budget, ObserverAutomaton, TransitionTallies,
};
use sentinel_core::sim::{simulate, Adversary};
use sentinel_core::solver::solve;
use sentinel_core::{Error, Result};

use crate::config::RunConfig;
use crate::policy_io;

pub fn build_system(config: &RunConfig) -> Result<SystemAutomaton> {
    build_system_automaton_with_budget(
        config.model.k,
        config.flags(),
        config.observer.state_budget,
    )
}

pub fn build_observer(config: &RunConfig) -> Result<ObserverAutomaton> {
    build_observer_automaton_with_budget(
        build_system(config)?,
        &config.initial_observer_state()?,
        config.observer.state_budget,
    )
}

pub fn config_sha256(config: &RunConfig) -> String {
    let digest = Sha256::digest(config.to_toml().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory precedence: explicit flag, then config, then the
/// SENTINEL_OUT_DIR environment variable, then the working directory.
pub fn resolve_out_dir(flag: Option<&Path>, config: &RunConfig) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if !config.run.out_dir.is_empty() {
        return PathBuf::from(&config.run.out_dir);
    }
    if let Ok(dir) = std::env::var("SENTINEL_OUT_DIR") {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    PathBuf::from(".")
}

#[derive(Serialize)]
struct Manifest<'a, R: Serialize> {
    command: &'a str,
    version: &'a str,
    config_sha256: String,
    parameters: &'a RunConfig,
    results: R,
    artifacts: Vec<String>,
}

fn write_manifest<R: Serialize>(
    path: &Path,
    command: &str,
    config: &RunConfig,
    results: R,
    artifacts: Vec<String>,
) -> Result<()> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: config_sha256(config),
        parameters: config,
        results,
        artifacts,
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Parse(format!("manifest: {e}")))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

fn manifest_path_for(artifact: &Path) -> PathBuf {
    let stem = artifact.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    artifact.with_file_name(format!("{stem}.manifest.json"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ExportFormat {
    Fsm,
    Dot,
}

#[derive(Serialize)]
struct ModelResults {
    k: usize,
    states: usize,
    transitions: usize,
}

pub fn cmd_model_export(config: &RunConfig, format: ExportFormat, out: &Path) -> Result<()> {
    let aut = build_system(config)?;
    let text = match format {
        ExportFormat::Fsm => aut.to_fsm_text(),
        ExportFormat::Dot => aut.to_dot(),
    };
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(out, &text)?;
    write_manifest(
        &manifest_path_for(out),
        "model export",
        config,
        ModelResults {
            k: config.model.k,
            states: aut.state_count(),
            transitions: aut.transition_count(),
        },
        vec![out.file_name().unwrap().to_string_lossy().into_owned()],
    )?;
    Ok(())
}

#[derive(Serialize)]
struct ObserverResults {
    k: usize,
    states: usize,
    transitions: usize,
    intermediate_states: usize,
    defender_branch_edges: usize,
    observation_edges: usize,
    bipartite_total: usize,
    flattened_total: usize,
}

impl ObserverResults {
    fn new(k: usize, t: &TransitionTallies) -> ObserverResults {
        ObserverResults {
            k,
            states: t.decision_states,
            // the headline transition count composes each defender branch
            // with the observations that can follow it
            transitions: t.flattened_total,
            intermediate_states: t.intermediate_states,
            defender_branch_edges: t.defender_branch_edges,
            observation_edges: t.observation_edges,
            bipartite_total: t.bipartite_total,
            flattened_total: t.flattened_total,
        }
    }
}

pub fn cmd_observer_build(config: &RunConfig, format: ExportFormat, out: &Path) -> Result<String> {
    let aut = build_observer(config)?;
    let tallies = aut.tallies();
    let text = match format {
        ExportFormat::Fsm => aut.to_fsm_text(),
        ExportFormat::Dot => aut.to_dot(),
    };
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(out, &text)?;
    write_manifest(
        &manifest_path_for(out),
        "observer build",
        config,
        ObserverResults::new(config.model.k, &tallies),
        vec![out.file_name().unwrap().to_string_lossy().into_owned()],
    )?;
    Ok(format!("states={} transitions={}", tallies.decision_states, tallies.flattened_total))
}

#[derive(Serialize)]
struct SolveResults {
    k: usize,
    states: usize,
    transitions: usize,
    iterations: usize,
    residual: f64,
    error_bound: f64,
    initial_state: usize,
    value_at_initial: f64,
}

pub fn cmd_solve(config: &RunConfig, out_dir: &Path) -> Result<String> {
    let aut = build_observer(config)?;
    let cm = config.cost_model()?;
    let policy = solve(&aut, &cm, &config.solve_settings())?;
    std::fs::create_dir_all(out_dir)?;
    let policy_text = policy_io::policy_to_text(config, &aut, &policy);
    std::fs::write(out_dir.join("policy.txt"), &policy_text)?;

    let results = SolveResults {
        k: config.model.k,
        states: aut.state_count(),
        transitions: aut.tallies().flattened_total,
        iterations: policy.iterations,
        residual: policy.residual,
        error_bound: policy.residual * cm.beta() / (1.0 - cm.beta()),
        initial_state: aut.initial(),
        value_at_initial: policy.value.at(aut.initial()),
    };
    let summary = serde_json::to_string_pretty(&results)
        .map_err(|e| Error::Parse(format!("summary: {e}")))?;
    std::fs::write(out_dir.join("summary.json"), summary + "\n")?;
    write_manifest(
        &out_dir.join("manifest.json"),
        "solve",
        config,
        results,
        vec!["policy.txt".into(), "summary.json".into()],
    )?;
    Ok(format!(
        "states={} iterations={} residual={:e} value={}",
        aut.state_count(),
        policy.iterations,
        policy.residual,
        policy.value.at(aut.initial())
    ))
}

#[derive(Serialize)]
struct SweepResults {
    k: usize,
    states: usize,
    r_from: f64,
    r_to: f64,
    r_step: f64,
    grid_points: usize,
    kind_monotone: bool,
    null_absorbing: bool,
}

pub fn cmd_sweep(config: &RunConfig, out_dir: &Path) -> Result<String> {
    let aut = build_observer(config)?;
    let cm = config.cost_model()?;
    let sweep = sweep_reimage(
        &aut,
        &cm,
        config.sweep.r_from,
        config.sweep.r_to,
        config.sweep.r_step,
        &config.solve_settings(),
    )?;
    let report = detect_thresholds(&sweep);
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("actions.csv"), actions_csv(&sweep, config.sweep.r_step))?;
    std::fs::write(out_dir.join("shares.csv"), shares_csv(&sweep, config.sweep.r_step))?;
    std::fs::write(out_dir.join("thresholds.csv"), thresholds_csv(&sweep, config.sweep.r_step))?;
    write_manifest(
        &out_dir.join("manifest.json"),
        "sweep",
        config,
        SweepResults {
            k: config.model.k,
            states: aut.state_count(),
            r_from: config.sweep.r_from,
            r_to: config.sweep.r_to,
            r_step: config.sweep.r_step,
            grid_points: sweep.r_values.len(),
            kind_monotone: report.kind_monotone,
            null_absorbing: report.null_absorbing,
        },
        vec!["actions.csv".into(), "shares.csv".into(), "thresholds.csv".into()],
    )?;
    Ok(format!(
        "states={} grid_points={} kind_monotone={} null_absorbing={}",
        aut.state_count(),
        sweep.r_values.len(),
        report.kind_monotone,
        report.null_absorbing
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum AdversaryKind {
    Uniform,
    Worst,
    Script,
}

pub fn parse_script(text: &str) -> Result<Vec<AttackerEvent>> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(AttackerEvent::parse_label)
        .collect()
}

pub fn cmd_simulate(
    policy_path: &Path,
    kind: AdversaryKind,
    script_path: Option<&Path>,
    seed: u64,
    horizon: usize,
    z0_code: Option<&str>,
    out: Option<&Path>,
) -> Result<String> {
    let text = std::fs::read_to_string(policy_path)?;
    let (config, aut, policy) = policy_io::policy_from_text(&text)?;
    let adversary = match kind {
        AdversaryKind::Uniform => Adversary::UniformRandom { seed },
        AdversaryKind::Worst => Adversary::WorstCaseGreedy,
        AdversaryKind::Script => {
            let path = script_path.ok_or_else(|| {
                Error::InvalidParameter("--script <file> is required for the script adversary".into())
            })?;
            Adversary::Scripted(parse_script(&std::fs::read_to_string(path)?)?)
        }
    };
    let s0 = aut.initial();
    let z0 = match z0_code {
        Some(code) => sentinel_core::model::SystemState::parse_code(
            code,
            sentinel_core::model::Phase::Decision,
        )?,
        // default: the canonically first candidate of the initial belief
        None => aut.states()[s0].candidates()[0].clone(),
    };
    let cm = config.cost_model()?;
    let trace = simulate(&aut, &cm, config.flags(), &policy, &adversary, s0, &z0, horizon)?;

    let mut lines = String::new();
    for step in &trace.steps {
        let record = serde_json::json!({
            "t": step.t,
            "state": step.true_state.code(),
            "observer_index": step.observer,
            "observer": aut.states()[step.observer].code(),
            "action": step.action.label(),
            "post_action": step.post_action.code(),
            "event": step.event.label(),
            "observation": step.observation.attack.label(),
            "reading": step.observation.sense_reading.map(|z| z.to_string()),
            "stage_cost": step.stage_cost,
        });
        lines.push_str(&record.to_string());
        lines.push('\n');
    }
    let summary = serde_json::json!({
        "discounted_total": trace.discounted_total,
        "horizon": trace.horizon,
        "final_state": trace.final_state.code(),
        "final_observer": aut.states()[trace.final_observer].code(),
        "value_at_initial": policy.value.at(s0),
    });
    lines.push_str(&summary.to_string());
    lines.push('\n');
    match out {
        Some(path) => {
            if let Some(dir) = path.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir)?;
                }
            }
            std::fs::write(path, &lines)?;
            Ok(format!(
                "discounted_total={} horizon={}",
                trace.discounted_total, trace.horizon
            ))
        }
        None => Ok(lines.trim_end().to_string()),
    }
}
