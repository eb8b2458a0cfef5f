//! Re-image cost sweeps: how the optimal policy moves across actions as
//! re-imaging gets more expensive, per-state switch thresholds, and
//! per-action occupancy shares.
//!
//! Every grid point is solved cold from the all-zero value function, so
//! results at a given `r` are independent of the rest of the grid and of
//! worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ActionKind, CostModel, DefenderAction};
use crate::observer::ObserverAutomaton;
use crate::solver::{extract_policy, value_iteration, DpTables, SolveSettings};

/// Fraction of observer states per action kind at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionShares {
    pub r: f64,
    pub null: f64,
    pub sense: f64,
    pub reimage: f64,
}

impl ActionShares {
    pub fn of_kind(&self, kind: ActionKind) -> f64 {
        match kind {
            ActionKind::Null => self.null,
            ActionKind::Sense => self.sense,
            ActionKind::Reimage => self.reimage,
        }
    }
}

/// One change of the chosen action along the grid, located at the midpoint
/// between the last grid point with the old action and the first with the
/// new one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchPoint {
    pub r: f64,
    pub from: DefenderAction,
    pub to: DefenderAction,
}

/// Policies across a re-image cost grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub r_values: Vec<f64>,
    /// Chosen action per observer state (outer) and grid point (inner).
    pub actions: Vec<Vec<DefenderAction>>,
    pub shares: Vec<ActionShares>,
    pub switch_points: Vec<Vec<SwitchPoint>>,
}

/// Per-state threshold structure and the two policy-shape verdicts.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdReport {
    pub per_state: Vec<StateThresholds>,
    /// Every switch goes from a costlier action kind to a cheaper one.
    pub kind_monotone: bool,
    /// Once the choice is null it stays null for all higher `r`.
    pub null_absorbing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateThresholds {
    pub state: usize,
    pub switches: Vec<SwitchPoint>,
    pub kind_monotone: bool,
    pub null_absorbing: bool,
}

/// The ascending re-image cost grid `r_from, r_from + step, ..., r_to`,
/// endpoints included.
pub fn reimage_grid(r_from: f64, r_to: f64, r_step: f64) -> Result<Vec<f64>> {
    if !(r_from > 0.0 && r_from.is_finite() && r_to.is_finite()) || r_to < r_from {
        return Err(Error::InvalidParameter(format!(
            "need 0 < r_from <= r_to, got {r_from}..{r_to}"
        )));
    }
    if !(r_step > 0.0) {
        return Err(Error::InvalidParameter(format!("grid step must be positive, got {r_step}")));
    }
    let span = (r_to - r_from) / r_step;
    let n = if (span - span.round()).abs() < 1e-9 * span.max(1.0) {
        span.round() as usize
    } else {
        span.floor() as usize
    };
    Ok((0..=n).map(|i| r_from + i as f64 * r_step).collect())
}

/// Solves the instance at every grid point and records the chosen actions.
pub fn sweep_reimage(
    aut: &ObserverAutomaton,
    cm_base: &CostModel,
    r_from: f64,
    r_to: f64,
    r_step: f64,
    settings: &SolveSettings,
) -> Result<SweepResult> {
    let r_values = reimage_grid(r_from, r_to, r_step)?;
    let max_sense = cm_base.sense_costs().iter().copied().fold(0.0, f64::max);
    if r_from <= max_sense {
        return Err(Error::InvalidParameter(format!(
            "grid start {r_from} does not exceed the sense cost {max_sense}"
        )));
    }
    let tables = DpTables::build(aut)?;
    let by_r: Vec<Vec<DefenderAction>> = r_values
        .par_iter()
        .map(|&r| -> Result<Vec<DefenderAction>> {
            let cm = cm_base.with_reimage_cost(r)?;
            let outcome = value_iteration(&tables, &cm, settings)?;
            Ok(extract_policy(&outcome, &tables, aut, &cm)?.actions)
        })
        .collect::<Result<Vec<_>>>()?;

    let n_states = aut.state_count();
    let actions: Vec<Vec<DefenderAction>> =
        (0..n_states).map(|s| by_r.iter().map(|row| row[s]).collect()).collect();
    let switch_points = actions.iter().map(|row| switches_of(row, &r_values)).collect();
    let shares = shares_of(&actions, &r_values);
    Ok(SweepResult { r_values, actions, shares, switch_points })
}

fn switches_of(row: &[DefenderAction], r_values: &[f64]) -> Vec<SwitchPoint> {
    row.windows(2)
        .zip(r_values.windows(2))
        .filter(|(pair, _)| pair[0] != pair[1])
        .map(|(pair, r)| SwitchPoint { r: 0.5 * (r[0] + r[1]), from: pair[0], to: pair[1] })
        .collect()
}

fn shares_of(actions: &[Vec<DefenderAction>], r_values: &[f64]) -> Vec<ActionShares> {
    let n_states = actions.len() as f64;
    r_values
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let mut counts = [0usize; 3];
            for row in actions {
                counts[match row[i].kind() {
                    ActionKind::Null => 0,
                    ActionKind::Sense => 1,
                    ActionKind::Reimage => 2,
                }] += 1;
            }
            ActionShares {
                r,
                null: counts[0] as f64 / n_states,
                sense: counts[1] as f64 / n_states,
                reimage: counts[2] as f64 / n_states,
            }
        })
        .collect()
}

/// Per-grid-point fractions of states choosing each action kind; sums to one
/// at every grid point.
pub fn action_share(sweep: &SweepResult) -> Vec<ActionShares> {
    shares_of(&sweep.actions, &sweep.r_values)
}

/// Orders every state's switch sequence and checks the threshold shape:
/// switches only step down the cost order (re-image above sense above null)
/// and null is absorbing.
pub fn detect_thresholds(sweep: &SweepResult) -> ThresholdReport {
    let per_state: Vec<StateThresholds> = sweep
        .actions
        .iter()
        .enumerate()
        .map(|(state, row)| {
            let kinds: Vec<ActionKind> = row.iter().map(|a| a.kind()).collect();
            let kind_monotone = kinds.windows(2).all(|w| w[1] <= w[0]);
            let null_absorbing = kinds
                .iter()
                .position(|&k| k == ActionKind::Null)
                .map(|first| kinds[first..].iter().all(|&k| k == ActionKind::Null))
                .unwrap_or(true);
            StateThresholds {
                state,
                switches: sweep.switch_points[state].clone(),
                kind_monotone,
                null_absorbing,
            }
        })
        .collect();
    let kind_monotone = per_state.iter().all(|s| s.kind_monotone);
    let null_absorbing = per_state.iter().all(|s| s.null_absorbing);
    ThresholdReport { per_state, kind_monotone, null_absorbing }
}

fn decimals_for(step: f64) -> usize {
    (0..=9)
        .find(|&d| {
            let scaled = step * 10f64.powi(d as i32);
            (scaled - scaled.round()).abs() < 1e-9
        })
        .unwrap_or(9)
}

/// Fixed-decimal rendering keyed to the grid step, trailing zeros trimmed.
fn format_grid_value(x: f64, decimals: usize) -> String {
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// `state_index,r,action` rows, state-major.
pub fn actions_csv(sweep: &SweepResult, r_step: f64) -> String {
    let decimals = decimals_for(r_step);
    let mut out = String::from("state_index,r,action\n");
    for (state, row) in sweep.actions.iter().enumerate() {
        for (r, action) in sweep.r_values.iter().zip(row) {
            out.push_str(&format!(
                "{state},{},{}\n",
                format_grid_value(*r, decimals),
                action.label()
            ));
        }
    }
    out
}

/// `r,kind,fraction` rows.
pub fn shares_csv(sweep: &SweepResult, r_step: f64) -> String {
    let decimals = decimals_for(r_step);
    let mut out = String::from("r,kind,fraction\n");
    for share in &sweep.shares {
        for kind in [ActionKind::Null, ActionKind::Sense, ActionKind::Reimage] {
            out.push_str(&format!(
                "{},{kind},{:.6}\n",
                format_grid_value(share.r, decimals),
                share.of_kind(kind)
            ));
        }
    }
    out
}

/// `state_index,r_switch,from,to` rows.
pub fn thresholds_csv(sweep: &SweepResult, r_step: f64) -> String {
    // switch points sit halfway between grid points, one extra decimal
    let decimals = decimals_for(r_step) + 1;
    let mut out = String::from("state_index,r_switch,from,to\n");
    for (state, switches) in sweep.switch_points.iter().enumerate() {
        for sw in switches {
            out.push_str(&format!(
                "{state},{},{},{}\n",
                format_grid_value(sw.r, decimals),
                sw.from.label(),
                sw.to.label()
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::build_system_automaton;
    use crate::model::ModelFlags;
    use crate::observer::{build_observer_automaton, initial_observer};

    fn reference_costs(k: usize, r: f64) -> CostModel {
        CostModel::uniform(k, [0.0, 1.0, 2.0, 8.0], 0.0, 0.1, r, 0.9).unwrap()
    }

    fn instance(k: usize) -> ObserverAutomaton {
        let system = build_system_automaton(k, ModelFlags::default()).unwrap();
        build_observer_automaton(system, &initial_observer(k)).unwrap()
    }

    #[test]
    fn grid_includes_both_endpoints() {
        let grid = reimage_grid(3.0, 30.0, 0.2).unwrap();
        assert_eq!(grid.len(), 136);
        assert_eq!(grid[0], 3.0);
        assert!((grid[135] - 30.0).abs() < 1e-9);

        let single = reimage_grid(5.0, 5.0, 0.2).unwrap();
        assert_eq!(single, vec![5.0]);
    }

    #[test]
    fn grid_rejects_bad_ranges() {
        assert!(reimage_grid(0.0, 10.0, 1.0).is_err());
        assert!(reimage_grid(5.0, 4.0, 1.0).is_err());
        assert!(reimage_grid(1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn sweep_rejects_grid_below_sense_cost() {
        let aut = instance(1);
        let cm = reference_costs(1, 5.0);
        let err = sweep_reimage(&aut, &cm, 0.05, 1.0, 0.1, &SolveSettings::default());
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn single_point_sweep_solves_once() {
        let aut = instance(1);
        let cm = reference_costs(1, 5.0);
        let sweep = sweep_reimage(&aut, &cm, 5.0, 5.0, 1.0, &SolveSettings::default()).unwrap();
        assert_eq!(sweep.r_values.len(), 1);
        assert_eq!(sweep.actions.len(), aut.state_count());
    }

    #[test]
    fn shares_sum_to_one_and_thresholds_are_clean_for_one_computer() {
        let aut = instance(1);
        let cm = reference_costs(1, 5.0);
        let sweep = sweep_reimage(&aut, &cm, 1.0, 12.0, 0.5, &SolveSettings::default()).unwrap();
        for share in action_share(&sweep) {
            assert!((share.null + share.sense + share.reimage - 1.0).abs() < 1e-12);
        }
        let report = detect_thresholds(&sweep);
        assert!(report.kind_monotone);
        assert!(report.null_absorbing);
        // re-imaging must be worthwhile somewhere at the cheap end
        assert!(sweep.shares[0].reimage > 0.0);
    }

    #[test]
    fn refining_the_grid_preserves_existing_points() {
        let aut = instance(1);
        let cm = reference_costs(1, 5.0);
        let coarse = sweep_reimage(&aut, &cm, 4.0, 8.0, 1.0, &SolveSettings::default()).unwrap();
        let fine = sweep_reimage(&aut, &cm, 4.0, 8.0, 0.5, &SolveSettings::default()).unwrap();
        for (ci, r) in coarse.r_values.iter().enumerate() {
            let fi = fine.r_values.iter().position(|x| x == r).expect("shared grid point");
            for state in 0..aut.state_count() {
                assert_eq!(coarse.actions[state][ci], fine.actions[state][fi]);
            }
        }
    }

    #[test]
    fn sweeps_are_deterministic() {
        let aut = instance(1);
        let cm = reference_costs(1, 5.0);
        let a = sweep_reimage(&aut, &cm, 2.0, 6.0, 0.5, &SolveSettings::default()).unwrap();
        let b = sweep_reimage(&aut, &cm, 2.0, 6.0, 0.5, &SolveSettings::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(actions_csv(&a, 0.5), actions_csv(&b, 0.5));
        assert_eq!(shares_csv(&a, 0.5), shares_csv(&b, 0.5));
        assert_eq!(thresholds_csv(&a, 0.5), thresholds_csv(&b, 0.5));
    }

    #[test]
    fn csv_formatting_is_stable() {
        let aut = instance(1);
        let cm = reference_costs(1, 5.0);
        let sweep = sweep_reimage(&aut, &cm, 2.0, 3.0, 0.5, &SolveSettings::default()).unwrap();
        let csv = actions_csv(&sweep, 0.5);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("state_index,r,action"));
        assert!(lines.next().unwrap().starts_with("0,2,"));
        assert!(csv.contains("\n0,2.5,"));
    }
}
