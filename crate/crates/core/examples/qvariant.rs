//! Probe: sweep windows under h_admissible_on_w false, and an independent
//! finite-horizon game-tree check of the K=1 dynamic program.

use std::collections::HashMap;

use sentinel_core::automaton::build_system_automaton;
use sentinel_core::experiments::sweep_reimage;
use sentinel_core::model::{
    self, ActionKind, AttackerEvent, CostModel, DefenderAction, ModelFlags, Observation,
    SecurityLevel, SystemState,
};
use sentinel_core::observer::{build_observer_automaton, observer_step, ObserverState};
use sentinel_core::solver::{solve, SolveSettings};

/// Worst-case finite-horizon value by exhaustive recursion over defender
/// actions, sense readings, and admissible attacker events.
fn oracle_value(
    s: &[SystemState],
    t: usize,
    horizon: usize,
    cm: &CostModel,
    flags: ModelFlags,
    memo: &mut HashMap<(Vec<usize>, usize), f64>,
) -> f64 {
    if t == horizon {
        return 0.0;
    }
    let key: Vec<usize> = s.iter().map(|z| z.canonical_index()).collect();
    if let Some(&v) = memo.get(&(key.clone(), t)) {
        return v;
    }
    let k = s[0].k();
    let mut best = f64::INFINITY;
    for action in DefenderAction::alphabet(k) {
        let mut worst = f64::NEG_INFINITY;
        for z in s {
            let stage = cm.state_cost(z) + cm.action_cost(action);
            // candidates agreeing with the realized reading
            let branch: Vec<SystemState> = match action {
                DefenderAction::Sense(i) => {
                    s.iter().filter(|c| c.level_of(i) == z.level_of(i)).cloned().collect()
                }
                _ => s.to_vec(),
            };
            let branch_tilde: Vec<SystemState> = {
                let mut v: Vec<SystemState> =
                    branch.iter().map(|c| model::apply_defender(c, action).unwrap()).collect();
                v.sort();
                v.dedup();
                v
            };
            let z_tilde = model::apply_defender(z, action).unwrap();
            // realizable observations from the true post-action state
            let mut continuations = Vec::new();
            // hidden: union of unobservable successors over the branch
            let mut hidden: Vec<SystemState> = Vec::new();
            for c in &branch_tilde {
                for e in model::admissible_attacker(c, flags).unwrap() {
                    if !matches!(e, AttackerEvent::Network { .. }) {
                        hidden.push(model::apply_attacker(c, e, flags).unwrap());
                    }
                }
            }
            hidden.sort();
            hidden.dedup();
            continuations.push(hidden);
            for e in model::admissible_attacker(&z_tilde, flags).unwrap() {
                if let AttackerEvent::Network { .. } = e {
                    let mut img: Vec<SystemState> = branch_tilde
                        .iter()
                        .filter(|c| model::admissible_attacker(c, flags).unwrap().contains(&e))
                        .map(|c| model::apply_attacker(c, e, flags).unwrap())
                        .collect();
                    img.sort();
                    img.dedup();
                    continuations.push(img);
                }
            }
            let cont = continuations
                .iter()
                .map(|next| oracle_value(next, t + 1, horizon, cm, flags, memo))
                .fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max(stage + cm.beta() * cont);
        }
        best = best.min(worst);
    }
    memo.insert((key, t), best);
    best
}

fn main() {
    // K=1 oracle check of the solver
    for (costs, sense, r, beta) in [
        ([0.0, 1.0, 2.0, 8.0], 0.1, 5.0, 0.9),
        ([0.0, 1.0, 2.0, 8.0], 0.1, 10.0, 0.9),
        ([0.0, 0.5, 3.0, 7.0], 0.2, 4.0, 0.9),
        ([0.1, 1.0, 2.0, 4.0], 0.3, 2.0, 0.85),
        ([0.0, 2.0, 3.0, 9.0], 0.5, 8.0, 0.92),
    ] {
        let flags = ModelFlags::default();
        let cm = CostModel::uniform(1, costs, 0.0, sense, r, beta).unwrap();
        let system = build_system_automaton(1, flags).unwrap();
        let aut = build_observer_automaton(system, &ObserverState::all_normal(1)).unwrap();
        let policy = solve(&aut, &cm, &SolveSettings::default()).unwrap();
        let dp = policy.value.at(aut.initial());
        let mut memo = HashMap::new();
        let horizon = 200;
        let oracle =
            oracle_value(&[SystemState::all_normal(1)], 0, horizon, &cm, flags, &mut memo);
        let bound = beta.powi(horizon as i32) * cm.value_bound() + 1e-6;
        println!(
            "K=1 r={r} beta={beta}: dp={dp:.9} oracle={oracle:.9} diff={:.2e} bound={bound:.2e} ok={}",
            (dp - oracle).abs(),
            (dp - oracle).abs() <= bound
        );
    }

    // K=2 sweep under h_on_w = false
    let flags = ModelFlags { h_admissible_on_w: false };
    let system = build_system_automaton(2, flags).unwrap();
    let s0 = observer_step(
        &ObserverState::all_normal(2),
        DefenderAction::Null,
        &Observation::hidden(None),
        flags,
    )
    .unwrap();
    let aut = build_observer_automaton(system, &s0).unwrap();
    let cm = CostModel::uniform(2, [0.0, 1.0, 2.0, 8.0], 0.0, 0.1, 10.0, 0.9).unwrap();
    let sweep = sweep_reimage(&aut, &cm, 3.0, 30.0, 0.2, &SolveSettings::default()).unwrap();
    let ff = SystemState::decision(vec![SecurityLevel::RemoteCompromised; 2]);
    let ff_states = aut.states_containing(&ff);
    let mut ff_exits = Vec::new();
    let mut other_exits = Vec::new();
    for (s, row) in sweep.actions.iter().enumerate() {
        let mut exit = None;
        for (w, rs) in row.windows(2).zip(sweep.r_values.windows(2)) {
            if w[0].kind() == ActionKind::Reimage && w[1].kind() != ActionKind::Reimage {
                exit = Some(0.5 * (rs[0] + rs[1]));
            }
        }
        if let Some(e) = exit {
            if ff_states.contains(&s) {
                ff_exits.push(e);
            } else {
                other_exits.push(e);
            }
        }
    }
    println!(
        "h_on_w=false: |S|={} FF n={} exits [{:.1},{:.1}]; others n={} exits [{:.1},{:.1}]",
        aut.state_count(),
        ff_exits.len(),
        ff_exits.iter().copied().fold(f64::INFINITY, f64::min),
        ff_exits.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        other_exits.len(),
        other_exits.iter().copied().fold(f64::INFINITY, f64::min),
        other_exits.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
}
