use sentinel_core::automaton::build_system_automaton;
use sentinel_core::experiments::{detect_thresholds, sweep_reimage};
use sentinel_core::model::{
    ActionKind, CostModel, DefenderAction, ModelFlags, Observation, SecurityLevel, SystemState,
};
use sentinel_core::observer::{build_observer_automaton, observer_step, ObserverState};
use sentinel_core::solver::SolveSettings;

fn main() {
    let flags = ModelFlags::default();
    let settings = SolveSettings::default();

    // K=2 sweep, reference costs, grid 3..30 step 0.2
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
    let t0 = std::time::Instant::now();
    let sweep = sweep_reimage(&aut, &cm, 3.0, 30.0, 0.2, &settings).unwrap();
    println!("K=2 sweep took {:?}", t0.elapsed());
    let report = detect_thresholds(&sweep);
    println!("kind_monotone={} null_absorbing={}", report.kind_monotone, report.null_absorbing);

    let ff = SystemState::decision(vec![SecurityLevel::RemoteCompromised; 2]);
    let ff_states = aut.states_containing(&ff);
    println!("FF states: {ff_states:?}");
    for (state, row) in sweep.actions.iter().enumerate() {
        let contains_ff = ff_states.contains(&state);
        // find where the state leaves re-image and what it switches to
        let mut reimage_exit: Option<(f64, ActionKind)> = None;
        for (w, rs) in row.windows(2).zip(sweep.r_values.windows(2)) {
            if w[0].kind() == ActionKind::Reimage && w[1].kind() != ActionKind::Reimage {
                reimage_exit = Some((0.5 * (rs[0] + rs[1]), w[1].kind()));
            }
        }
        let plays_reimage = row.iter().any(|a| a.kind() == ActionKind::Reimage);
        if contains_ff || plays_reimage {
            println!(
                "state {state:3} ff={} plays_reimage={} exit={:?} first={:?} last={:?}",
                contains_ff as u8,
                plays_reimage as u8,
                reimage_exit,
                row.first().unwrap().label(),
                row.last().unwrap().label()
            );
        }
    }

    // K=3 sweep 0.2..60 step 0.2 for the sense share curve
    let system3 = build_system_automaton(3, flags).unwrap();
    let s03 = observer_step(
        &ObserverState::all_normal(3),
        DefenderAction::Null,
        &Observation::hidden(None),
        flags,
    )
    .unwrap();
    let aut3 = build_observer_automaton(system3, &s03).unwrap();
    let cm3 = CostModel::uniform(3, [0.0, 1.0, 2.0, 8.0], 0.0, 0.1, 10.0, 0.9).unwrap();
    let t0 = std::time::Instant::now();
    let sweep3 = sweep_reimage(&aut3, &cm3, 0.2, 60.0, 0.2, &settings).unwrap();
    println!("K=3 sweep took {:?}", t0.elapsed());
    let shares = &sweep3.shares;
    let top = shares.last().unwrap();
    println!(
        "top of grid: r={} sense={:.4} null={:.4} reimage={:.4}",
        top.r, top.sense, top.null, top.reimage
    );
    let (peak_idx, peak) = shares
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.sense.partial_cmp(&b.1.sense).unwrap())
        .unwrap();
    println!(
        "sense peak at r={} share={:.4} (interior: {})",
        peak.r,
        peak.sense,
        peak_idx > 0 && peak_idx + 1 < shares.len()
    );
    for s in shares.iter().step_by(25) {
        println!("  r={:5.1} null={:.3} sense={:.3} reimage={:.3}", s.r, s.null, s.sense, s.reimage);
    }
}
