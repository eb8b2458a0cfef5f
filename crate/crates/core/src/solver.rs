//! Min-max value iteration over the observer automaton.
//!
//! Solves `V(S) = min_d max_{Z in S} [ C_Z + C(d) + beta * max_{S' in
//! Q(S,d,Z)} V(S') ]` by repeated application of the backup operator, which
//! is a beta-contraction (bounded, monotone, and discounting), so iteration
//! converges geometrically from any start. Policy extraction keeps the full
//! set of minimizers per state and resolves ties by confidentiality threat.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{CostModel, DefenderAction};
use crate::observer::{ObserverAutomaton, ObserverState};

/// Absolute tolerance for membership in the optimal-action set. Floating
/// equality is meaningless; this is small against cost magnitudes up to 1e3.
pub const VALUE_TIE_TOLERANCE: f64 = 1e-9;

/// From this many states on, backups fan out across threads.
const PARALLEL_BACKUP_THRESHOLD: usize = 512;

/// Value-iteration controls.
#[derive(Debug, Clone)]
pub struct SolveSettings {
    /// Stop once the sup-norm change of one sweep falls to this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Starting value function; all-zero when absent.
    pub initial: Option<Vec<f64>>,
}

impl Default for SolveSettings {
    fn default() -> SolveSettings {
        SolveSettings { tolerance: 1e-9, max_iterations: 100_000, initial: None }
    }
}

impl SolveSettings {
    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "solver tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// A value per decision-side observer state.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    values: Vec<f64>,
}

impl ValueFunction {
    pub fn new(values: Vec<f64>) -> ValueFunction {
        ValueFunction { values }
    }

    pub fn zeros(n: usize) -> ValueFunction {
        ValueFunction { values: vec![0.0; n] }
    }

    pub fn at(&self, state: usize) -> f64 {
        self.values[state]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Converged value function together with the iteration record.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub value: ValueFunction,
    /// Sup-norm change of every sweep, in order.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

impl SolveOutcome {
    pub fn residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(0.0)
    }

    /// A-posteriori distance bound to the fixed point:
    /// `residual * beta / (1 - beta)`.
    pub fn error_bound(&self, beta: f64) -> f64 {
        self.residual() * beta / (1.0 - beta)
    }
}

/// Defense policy over observer states.
#[derive(Debug, Clone)]
pub struct Policy {
    /// Tie-broken choice per observer state.
    pub actions: Vec<DefenderAction>,
    /// Full minimizer set per observer state, in canonical action order.
    pub optimal_sets: Vec<Vec<DefenderAction>>,
    pub value: ValueFunction,
    pub residual: f64,
    pub iterations: usize,
}

/// Flattened per-(state, action, candidate) backup tables extracted from the
/// observer automaton. Costs are looked up per solve, so one table serves a
/// whole cost sweep.
#[derive(Debug, Clone)]
pub struct DpTables {
    k: usize,
    n_states: usize,
    actions: Vec<DefenderAction>,
    /// Entry ranges per (state, action), row-major.
    sa_offsets: Vec<u32>,
    /// Canonical index of the candidate behind each entry.
    entry_state: Vec<u32>,
    /// Q-set ranges per entry.
    entry_q_offsets: Vec<u32>,
    /// Concatenated Q-set members (observer state indices).
    q_next: Vec<u32>,
}

impl DpTables {
    pub fn build(aut: &ObserverAutomaton) -> Result<DpTables> {
        let actions = aut.actions().to_vec();
        let n_states = aut.state_count();
        let mut sa_offsets = Vec::with_capacity(n_states * actions.len() + 1);
        let mut entry_state = Vec::new();
        let mut entry_q_offsets = vec![0u32];
        let mut q_next = Vec::new();
        sa_offsets.push(0);
        for s in 0..n_states {
            for &action in &actions {
                let state = &aut.states()[s];
                for z in state.candidates() {
                    entry_state.push(z.canonical_index() as u32);
                    for next in aut.q_indices(s, action, z)? {
                        q_next.push(next as u32);
                    }
                    entry_q_offsets.push(q_next.len() as u32);
                }
                sa_offsets.push(entry_state.len() as u32);
            }
        }
        Ok(DpTables {
            k: aut.k(),
            n_states,
            actions,
            sa_offsets,
            entry_state,
            entry_q_offsets,
            q_next,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn actions(&self) -> &[DefenderAction] {
        &self.actions
    }

    fn check_compatible(&self, cm: &CostModel, v: &[f64]) -> Result<()> {
        if cm.k() != self.k {
            return Err(Error::InvalidParameter(format!(
                "cost model covers {} computers but the instance has {}",
                cm.k(),
                self.k
            )));
        }
        if v.len() != self.n_states {
            return Err(Error::InvalidParameter(format!(
                "value function has {} entries for {} observer states",
                v.len(),
                self.n_states
            )));
        }
        Ok(())
    }

    /// Per-canonical-index state costs under this cost model.
    fn state_cost_lookup(&self, cm: &CostModel) -> Vec<f64> {
        let n = 4usize.pow(self.k as u32);
        let level_costs = cm.level_costs();
        (0..n)
            .map(|mut idx| {
                let mut cost = 0.0;
                for _ in 0..self.k {
                    cost += level_costs[idx % 4];
                    idx /= 4;
                }
                cost
            })
            .collect()
    }

    /// Worst-case value of playing one action at one state:
    /// `C(action) + max_Z [ C_Z + beta * max_Q v ]`.
    fn action_value(
        &self,
        state: usize,
        action_idx: usize,
        state_costs: &[f64],
        action_cost: f64,
        beta: f64,
        v: &[f64],
    ) -> f64 {
        let sa = state * self.actions.len() + action_idx;
        let mut worst = f64::NEG_INFINITY;
        for e in self.sa_offsets[sa] as usize..self.sa_offsets[sa + 1] as usize {
            let mut continuation = f64::NEG_INFINITY;
            for qi in self.entry_q_offsets[e] as usize..self.entry_q_offsets[e + 1] as usize {
                let next = v[self.q_next[qi] as usize];
                if next > continuation {
                    continuation = next;
                }
            }
            let value = state_costs[self.entry_state[e] as usize] + beta * continuation;
            if value > worst {
                worst = value;
            }
        }
        action_cost + worst
    }

    fn backup_state(
        &self,
        state: usize,
        state_costs: &[f64],
        action_costs: &[f64],
        beta: f64,
        v: &[f64],
    ) -> f64 {
        (0..self.actions.len())
            .map(|a| self.action_value(state, a, state_costs, action_costs[a], beta, v))
            .fold(f64::INFINITY, f64::min)
    }
}

/// One application of the backup operator.
pub fn apply_bellman(tables: &DpTables, cm: &CostModel, v: &[f64]) -> Result<Vec<f64>> {
    tables.check_compatible(cm, v)?;
    let state_costs = tables.state_cost_lookup(cm);
    let action_costs: Vec<f64> = tables.actions.iter().map(|&a| cm.action_cost(a)).collect();
    let beta = cm.beta();
    let backup = |s: usize| tables.backup_state(s, &state_costs, &action_costs, beta, v);
    let tv = if tables.n_states >= PARALLEL_BACKUP_THRESHOLD {
        (0..tables.n_states).into_par_iter().map(backup).collect()
    } else {
        (0..tables.n_states).map(backup).collect()
    };
    Ok(tv)
}

/// One backup together with the per-state minimizer sets (all actions within
/// [`VALUE_TIE_TOLERANCE`] of the best).
pub fn bellman_backup(
    tables: &DpTables,
    cm: &CostModel,
    v: &[f64],
) -> Result<(Vec<f64>, Vec<Vec<DefenderAction>>)> {
    tables.check_compatible(cm, v)?;
    let state_costs = tables.state_cost_lookup(cm);
    let action_costs: Vec<f64> = tables.actions.iter().map(|&a| cm.action_cost(a)).collect();
    let beta = cm.beta();
    let mut tv = Vec::with_capacity(tables.n_states);
    let mut sets = Vec::with_capacity(tables.n_states);
    for s in 0..tables.n_states {
        let values: Vec<f64> = (0..tables.actions.len())
            .map(|a| tables.action_value(s, a, &state_costs, action_costs[a], beta, v))
            .collect();
        let best = values.iter().copied().fold(f64::INFINITY, f64::min);
        let optimal: Vec<DefenderAction> = tables
            .actions
            .iter()
            .zip(&values)
            .filter(|(_, &q)| q <= best + VALUE_TIE_TOLERANCE)
            .map(|(&a, _)| a)
            .collect();
        tv.push(best);
        sets.push(optimal);
    }
    Ok((tv, sets))
}

/// Iterates the backup to the fixed point.
pub fn value_iteration(
    tables: &DpTables,
    cm: &CostModel,
    settings: &SolveSettings,
) -> Result<SolveOutcome> {
    settings.validate()?;
    let mut v = match &settings.initial {
        Some(v0) => {
            tables.check_compatible(cm, v0)?;
            v0.clone()
        }
        None => vec![0.0; tables.n_states],
    };
    let mut residuals = Vec::new();
    for iteration in 1..=settings.max_iterations {
        let tv = apply_bellman(tables, cm, &v)?;
        let residual =
            v.iter().zip(&tv).map(|(a, b)| (a - b).abs()).fold(0.0_f64, f64::max);
        residuals.push(residual);
        v = tv;
        if residual <= settings.tolerance {
            return Ok(SolveOutcome {
                value: ValueFunction::new(v),
                residuals,
                iterations: iteration,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: settings.max_iterations,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// Presumed damage on one computer: the level costs of its component summed
/// over all candidates of the observer state.
pub fn confidentiality_threat(s: &ObserverState, computer: usize, cm: &CostModel) -> f64 {
    s.candidates().iter().map(|z| cm.level_cost(z.level_of(computer))).sum()
}

/// Deterministic selection from an optimal-action set.
///
/// Targeted actions win over doing nothing only when some targeted optimum
/// has strictly positive confidentiality threat; among targeted actions the
/// higher threat wins, then the lower computer index, then sense over
/// re-image (cheaper).
pub fn choose_action(
    optimal: &[DefenderAction],
    s: &ObserverState,
    cm: &CostModel,
) -> DefenderAction {
    let has_null = optimal.contains(&DefenderAction::Null);
    let mut best: Option<(f64, usize, u8, DefenderAction)> = None;
    for &action in optimal {
        let Some(target) = action.target() else { continue };
        let threat = confidentiality_threat(s, target, cm);
        let order = match action {
            DefenderAction::Sense(_) => 0u8,
            _ => 1u8,
        };
        let wins = match &best {
            None => true,
            Some((t, c, o, _)) => {
                threat > *t || (threat == *t && (target < *c || (target == *c && order < *o)))
            }
        };
        if wins {
            best = Some((threat, target, order, action));
        }
    }
    match best {
        Some((threat, _, _, action)) if !has_null || threat > 0.0 => action,
        _ => DefenderAction::Null,
    }
}

/// Optimal-action sets and the tie-broken policy for a converged value
/// function.
pub fn extract_policy(
    outcome: &SolveOutcome,
    tables: &DpTables,
    aut: &ObserverAutomaton,
    cm: &CostModel,
) -> Result<Policy> {
    let (_, optimal_sets) = bellman_backup(tables, cm, outcome.value.values())?;
    let actions = optimal_sets
        .iter()
        .enumerate()
        .map(|(s, set)| choose_action(set, &aut.states()[s], cm))
        .collect();
    Ok(Policy {
        actions,
        optimal_sets,
        value: outcome.value.clone(),
        residual: outcome.residual(),
        iterations: outcome.iterations,
    })
}

/// Builds tables, iterates to convergence, and extracts the policy.
pub fn solve(aut: &ObserverAutomaton, cm: &CostModel, settings: &SolveSettings) -> Result<Policy> {
    let tables = DpTables::build(aut)?;
    let outcome = value_iteration(&tables, cm, settings)?;
    extract_policy(&outcome, &tables, aut, cm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::build_system_automaton;
    use crate::model::{ModelFlags, Observation, Phase, SecurityLevel, SystemState};
    use crate::observer::{build_observer_automaton, observer_step};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn reference_costs(k: usize, r: f64) -> CostModel {
        CostModel::uniform(k, [0.0, 1.0, 2.0, 8.0], 0.0, 0.1, r, 0.9).unwrap()
    }

    /// K=2 instance rooted at the first decision epoch (87 states).
    fn k2_instance() -> (ObserverAutomaton, DpTables) {
        let flags = ModelFlags::default();
        let system = build_system_automaton(2, flags).unwrap();
        let s0 = observer_step(
            &ObserverState::all_normal(2),
            DefenderAction::Null,
            &Observation::hidden(None),
            flags,
        )
        .unwrap();
        let aut = build_observer_automaton(system, &s0).unwrap();
        let tables = DpTables::build(&aut).unwrap();
        (aut, tables)
    }

    fn random_values(n: usize, rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
        (0..n).map(|_| rng.random::<f64>() * scale).collect()
    }

    #[test]
    fn zero_value_backup_matches_stage_costs() {
        let (aut, tables) = k2_instance();
        let cm = reference_costs(2, 10.0);
        let v = vec![0.0; tables.n_states()];
        let (tv, sets) = bellman_backup(&tables, &cm, &v).unwrap();

        let all_f = ObserverState::new(vec![SystemState::parse_code("FF", Phase::Decision).unwrap()])
            .unwrap();
        let idx = aut.index_of(&all_f).expect("the all-F singleton is reachable");
        assert!((tv[idx] - 16.0).abs() < 1e-12, "tv = {}", tv[idx]);
        assert!(sets[idx].contains(&DefenderAction::Null));

        let root = aut.initial();
        // root {NN,NR,RN}: idling risks C=1 next to nothing; with V=0 the
        // worst current candidate dominates: TV = max C_Z = 1
        assert!((tv[root] - 1.0).abs() < 1e-12, "tv = {}", tv[root]);
    }

    #[test]
    fn backup_adds_discounted_constants() {
        let (_, tables) = k2_instance();
        let cm = reference_costs(2, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let v = random_values(tables.n_states(), &mut rng, 200.0);
            let shift = rng.random::<f64>() * 50.0;
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            let tv = apply_bellman(&tables, &cm, &v).unwrap();
            let tv_shifted = apply_bellman(&tables, &cm, &shifted).unwrap();
            for (a, b) in tv.iter().zip(&tv_shifted) {
                assert!((b - (a + cm.beta() * shift)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn backup_is_monotone_and_contracting() {
        let (_, tables) = k2_instance();
        let cm = reference_costs(2, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let v1 = random_values(tables.n_states(), &mut rng, 200.0);
            let bump = random_values(tables.n_states(), &mut rng, 30.0);
            let v2: Vec<f64> = v1.iter().zip(&bump).map(|(a, b)| a + b).collect();
            let tv1 = apply_bellman(&tables, &cm, &v1).unwrap();
            let tv2 = apply_bellman(&tables, &cm, &v2).unwrap();
            for (ta, tb) in tv1.iter().zip(&tv2) {
                assert!(tb >= ta, "monotonicity violated");
            }
            let gap =
                v1.iter().zip(&v2).map(|(a, b)| (a - b).abs()).fold(0.0_f64, f64::max);
            let tgap =
                tv1.iter().zip(&tv2).map(|(a, b)| (a - b).abs()).fold(0.0_f64, f64::max);
            assert!(tgap <= cm.beta() * gap + 1e-12, "contraction violated: {tgap} vs {gap}");
        }
    }

    #[test]
    fn residuals_contract_and_value_respects_bounds() {
        let (_, tables) = k2_instance();
        let cm = reference_costs(2, 10.0);
        let outcome = value_iteration(&tables, &cm, &SolveSettings::default()).unwrap();
        assert!(outcome.residual() <= 1e-9);
        for pair in outcome.residuals.windows(2) {
            assert!(pair[1] <= cm.beta() * pair[0] + 1e-12, "ratio {} -> {}", pair[0], pair[1]);
        }
        let bound = cm.value_bound();
        for &v in outcome.value.values() {
            assert!((0.0..=bound + 1e-9).contains(&v));
        }
    }

    #[test]
    fn nonconvergence_is_reported() {
        let (_, tables) = k2_instance();
        let cm = reference_costs(2, 10.0);
        let settings = SolveSettings { max_iterations: 3, ..SolveSettings::default() };
        let err = value_iteration(&tables, &cm, &settings);
        assert!(matches!(err, Err(Error::NonConvergence { iterations: 3, .. })));
    }

    #[test]
    fn confidentiality_threat_sums_component_costs() {
        use SecurityLevel::*;
        let cm = reference_costs(3, 10.0);
        let s = ObserverState::new(vec![
            SystemState::decision(vec![RemoteCompromised, Normal, Normal]),
            SystemState::decision(vec![RemoteCompromised, Normal, Compromised]),
            SystemState::decision(vec![RemoteCompromised, Compromised, Normal]),
        ])
        .unwrap();
        assert_eq!(confidentiality_threat(&s, 1, &cm), 24.0);
        assert_eq!(confidentiality_threat(&s, 2, &cm), 1.0);
        let cm2 = reference_costs(2, 10.0);
        assert_eq!(confidentiality_threat(&ObserverState::all_normal(2), 1, &cm2), 0.0);
    }

    #[test]
    fn tie_break_prefers_higher_threat_then_lower_index() {
        use SecurityLevel::*;
        let cm = reference_costs(2, 10.0);
        let lopsided = ObserverState::new(vec![
            SystemState::decision(vec![RemoteCompromised, Compromised]),
            SystemState::decision(vec![RemoteCompromised, Normal]),
        ])
        .unwrap();
        let optimal = [DefenderAction::Reimage(1), DefenderAction::Reimage(2)];
        assert_eq!(choose_action(&optimal, &lopsided, &cm), DefenderAction::Reimage(1));

        let symmetric = ObserverState::new(vec![SystemState::decision(vec![
            RemoteCompromised,
            RemoteCompromised,
        ])])
        .unwrap();
        assert_eq!(choose_action(&optimal, &symmetric, &cm), DefenderAction::Reimage(1));

        assert_eq!(choose_action(&[DefenderAction::Null], &symmetric, &cm), DefenderAction::Null);
    }

    #[test]
    fn tie_break_keeps_null_when_targets_are_clean() {
        let cm = reference_costs(2, 10.0);
        let clean = ObserverState::all_normal(2);
        let optimal = [DefenderAction::Null, DefenderAction::Reimage(1)];
        assert_eq!(choose_action(&optimal, &clean, &cm), DefenderAction::Null);
        // without null in the set, a zero-threat target is still chosen,
        // sense before re-image on the same computer
        let optimal = [DefenderAction::Sense(1), DefenderAction::Reimage(1)];
        assert_eq!(choose_action(&optimal, &clean, &cm), DefenderAction::Sense(1));
    }

    #[test]
    fn tie_break_ignores_enumeration_order() {
        use SecurityLevel::*;
        let cm = reference_costs(2, 10.0);
        let s = ObserverState::new(vec![
            SystemState::decision(vec![Compromised, FullyCompromised]),
            SystemState::decision(vec![FullyCompromised, FullyCompromised]),
        ])
        .unwrap();
        let mut optimal = vec![
            DefenderAction::Null,
            DefenderAction::Sense(1),
            DefenderAction::Sense(2),
            DefenderAction::Reimage(2),
        ];
        let forward = choose_action(&optimal, &s, &cm);
        optimal.reverse();
        assert_eq!(choose_action(&optimal, &s, &cm), forward);
    }

    #[test]
    fn extracted_actions_lie_in_their_optimal_sets() {
        let (aut, tables) = k2_instance();
        let cm = reference_costs(2, 10.0);
        let outcome = value_iteration(&tables, &cm, &SolveSettings::default()).unwrap();
        let policy = extract_policy(&outcome, &tables, &aut, &cm).unwrap();
        for (s, action) in policy.actions.iter().enumerate() {
            assert!(policy.optimal_sets[s].contains(action));
        }
    }
}
