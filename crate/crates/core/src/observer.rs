//! The defender's observer: the set of system states the network could be in
//! given everything the defender has done and seen so far.
//!
//! The observer state updates in two half-steps mirroring the system
//! automaton. Applying a defender action maps each candidate through
//! [`model::apply_defender`]; a sense action additionally splits the
//! candidate set by the sensed component, one branch per possible reading.
//! The attacker's move is then folded in through the observation: a hidden
//! observation admits the null event and every boundary attack on every
//! candidate, while an observed network attack keeps exactly the candidates
//! that admit it.
//!
//! [`build_observer_automaton`] closes this update over all reachable
//! candidate sets, producing the bipartite observer graph the solver runs
//! on, together with the `Q(S, d, Z)` sets: the next observer states that
//! can actually occur when the true state is `Z` and the defender plays `d`.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::automaton::{ExpandedDefenderEvent, SystemAutomaton};
use crate::error::{Error, Result};
use crate::model::{
    self, AttackObservation, AttackerEvent, DefenderAction, ModelFlags, Observation, Phase,
    SecurityLevel, SystemState,
};

/// Default cap on observer states (both sides combined).
pub const DEFAULT_STATE_BUDGET: usize = 1 << 20;

/// A nonempty, canonically sorted set of candidate system states, all of the
/// same phase and network size.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ObserverState {
    candidates: Vec<SystemState>,
}

impl ObserverState {
    pub fn new(mut candidates: Vec<SystemState>) -> Result<ObserverState> {
        if candidates.is_empty() {
            return Err(Error::EmptyObserverState);
        }
        let k = candidates[0].k();
        let phase = candidates[0].phase();
        if candidates.iter().any(|z| z.k() != k || z.phase() != phase) {
            return Err(Error::InvalidParameter(
                "observer candidates must share network size and phase".into(),
            ));
        }
        candidates.sort();
        candidates.dedup();
        Ok(ObserverState { candidates })
    }

    /// The default initial observer: the all-normal singleton.
    pub fn all_normal(k: usize) -> ObserverState {
        ObserverState { candidates: vec![SystemState::all_normal(k)] }
    }

    /// Full uncertainty: every decision state is a candidate.
    pub fn full(k: usize) -> ObserverState {
        let candidates = (0..4usize.pow(k as u32))
            .map(|i| SystemState::from_canonical_index(k, i, Phase::Decision))
            .collect();
        ObserverState { candidates }
    }

    pub fn candidates(&self) -> &[SystemState] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        false // the nonempty invariant is enforced at construction
    }

    pub fn k(&self) -> usize {
        self.candidates[0].k()
    }

    pub fn phase(&self) -> Phase {
        self.candidates[0].phase()
    }

    pub fn contains(&self, state: &SystemState) -> bool {
        self.candidates.binary_search(state).is_ok()
    }

    /// Candidate codes joined with `+`, e.g. `NN+NR+RN`.
    pub fn code(&self) -> String {
        let codes: Vec<String> = self.candidates.iter().map(|z| z.code()).collect();
        codes.join("+")
    }

    fn index_key(&self) -> Vec<u32> {
        self.candidates.iter().map(|z| z.canonical_index() as u32).collect()
    }

    fn from_indices(k: usize, indices: &[u32], phase: Phase) -> ObserverState {
        let candidates = indices
            .iter()
            .map(|&i| SystemState::from_canonical_index(k, i as usize, phase))
            .collect();
        ObserverState { candidates }
    }
}

impl fmt::Display for ObserverState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.code())
    }
}

/// The default initial observer state: the defender knows the network starts
/// all-normal.
pub fn initial_observer(k: usize) -> ObserverState {
    ObserverState::all_normal(k)
}

/// The defender's belief at its first decision epoch when the attacker moves
/// once before it: the all-normal state plus every single opening breach.
/// Rooting the observer here drops the transient all-normal singleton from
/// the reachable set.
pub fn post_attack_observer(k: usize, flags: ModelFlags) -> Result<ObserverState> {
    observer_step(
        &ObserverState::all_normal(k),
        DefenderAction::Null,
        &Observation::hidden(None),
        flags,
    )
}

/// Splits an observer state by the level of one computer: one branch per
/// reading present, in level order. Branches partition the input.
pub fn sense_partition(
    s: &ObserverState,
    computer: usize,
) -> Result<Vec<(SecurityLevel, ObserverState)>> {
    if computer == 0 || computer > s.k() {
        return Err(Error::InvalidComputer { index: computer, k: s.k() });
    }
    let mut groups: BTreeMap<SecurityLevel, Vec<SystemState>> = BTreeMap::new();
    for z in s.candidates() {
        groups.entry(z.level_of(computer)).or_default().push(z.clone());
    }
    Ok(groups
        .into_iter()
        .map(|(reading, candidates)| (reading, ObserverState { candidates }))
        .collect())
}

fn apply_defender_to_set(s: &ObserverState, action: DefenderAction) -> Result<ObserverState> {
    let mapped = s
        .candidates()
        .iter()
        .map(|z| model::apply_defender(z, action))
        .collect::<Result<Vec<_>>>()?;
    ObserverState::new(mapped)
}

/// One observer update `f(S, d, observation)`.
///
/// The observation must be realizable from `S` under `d`: the sense reading
/// (present iff `d` is a sense) has to match at least one candidate, and an
/// observed network attack has to be admissible at some post-action
/// candidate. Unrealizable observations signal an inconsistency between the
/// observer and the world and are reported as errors.
pub fn observer_step(
    s: &ObserverState,
    action: DefenderAction,
    obs: &Observation,
    flags: ModelFlags,
) -> Result<ObserverState> {
    if s.phase() != Phase::Decision {
        return Err(Error::PhaseViolation { expected: Phase::Decision, actual: s.phase() });
    }
    let branch = match (action, obs.sense_reading) {
        (DefenderAction::Sense(i), Some(reading)) => {
            let matching: Vec<SystemState> = sense_partition(s, i)?
                .into_iter()
                .find(|(r, _)| *r == reading)
                .map(|(_, b)| b.candidates)
                .unwrap_or_default();
            if matching.is_empty() {
                return Err(Error::InconsistentObservation(format!(
                    "sense of computer {i} read {reading} but no candidate in {s} matches"
                )));
            }
            ObserverState { candidates: matching }
        }
        (DefenderAction::Sense(i), None) => {
            return Err(Error::InconsistentObservation(format!(
                "sense of computer {i} must come with a reading"
            )));
        }
        (_, Some(_)) => {
            return Err(Error::InconsistentObservation(
                "sense reading present but the action was not a sense".into(),
            ));
        }
        (_, None) => s.clone(),
    };
    let after_action = apply_defender_to_set(&branch, action)?;

    let successors = match obs.attack {
        AttackObservation::Hidden => {
            // null or boundary attack: any candidate may have taken any of
            // its unobservable events
            let mut next = Vec::new();
            for zt in after_action.candidates() {
                for event in model::admissible_attacker(zt, flags)? {
                    if model::observe(event) == AttackObservation::Hidden {
                        next.push(model::apply_attacker(zt, event, flags)?);
                    }
                }
            }
            next
        }
        AttackObservation::Network { source, target } => {
            let event = AttackerEvent::Network { source, target };
            let mut next = Vec::new();
            for zt in after_action.candidates() {
                if model::admissible_attacker(zt, flags)?.contains(&event) {
                    next.push(model::apply_attacker(zt, event, flags)?);
                }
            }
            if next.is_empty() {
                return Err(Error::InconsistentObservation(format!(
                    "observed {} but no candidate of {} admits it",
                    event.label(),
                    after_action
                )));
            }
            next
        }
    };
    ObserverState::new(successors)
}

/// The set of observer states that can actually occur one step after `S`
/// when the defender plays `d` and the true state is `Z`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QSet {
    members: Vec<ObserverState>,
}

impl QSet {
    fn new(mut members: Vec<ObserverState>) -> QSet {
        members.sort();
        members.dedup();
        QSet { members }
    }

    pub fn members(&self) -> &[ObserverState] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, s: &ObserverState) -> bool {
        self.members.binary_search(s).is_ok()
    }
}

/// Computes `Q(S, d, Z)` directly from the model: one member per observation
/// realizable from the true post-action state.
pub fn compute_q(
    s: &ObserverState,
    action: DefenderAction,
    z: &SystemState,
    flags: ModelFlags,
) -> Result<QSet> {
    if !s.contains(z) {
        return Err(Error::CandidateNotInState { candidate: z.code() });
    }
    let reading = match action {
        DefenderAction::Sense(i) => Some(z.level_of(i)),
        _ => None,
    };
    let z_tilde = model::apply_defender(z, action)?;
    // the hidden observation is always realizable (the null event is); a
    // network observation is realizable iff the true state admits the attack
    let mut observations = vec![Observation { attack: AttackObservation::Hidden, sense_reading: reading }];
    for event in model::admissible_attacker(&z_tilde, flags)? {
        if let AttackerEvent::Network { source, target } = event {
            observations.push(Observation {
                attack: AttackObservation::Network { source, target },
                sense_reading: reading,
            });
        }
    }
    let members = observations
        .iter()
        .map(|obs| observer_step(s, action, obs, flags))
        .collect::<Result<Vec<_>>>()?;
    Ok(QSet::new(members))
}

/// Transition counts of the built observer under the conventions the
/// automaton supports.
///
/// `bipartite_total` counts the edges of the bipartite graph itself:
/// defender branch edges (senses counted once per reading) plus observation
/// edges out of the intermediate side. `flattened_total` counts the
/// transitions of the one-step map `f(S, d, observation)`, i.e. every
/// realizable (branch, observation) combination per state and action, which
/// composes each defender edge with the observation edges that can follow
/// it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionTallies {
    pub decision_states: usize,
    pub intermediate_states: usize,
    pub defender_branch_edges: usize,
    pub observation_edges: usize,
    pub bipartite_total: usize,
    pub flattened_total: usize,
}

/// The reachable observer automaton: a bipartite graph of decision-side
/// observer states (where the policy acts) and intermediate-side observer
/// states (where observations resolve).
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverAutomaton {
    system: SystemAutomaton,
    actions: Vec<DefenderAction>,
    states: Vec<ObserverState>,
    intermediates: Vec<ObserverState>,
    state_index: HashMap<Vec<u32>, usize>,
    /// Per state and action: the sense branches in reading order, or the
    /// single unlabeled branch for null/re-image.
    branches: Vec<Vec<Vec<(Option<SecurityLevel>, usize)>>>,
    /// Per intermediate state: successor on the hidden observation.
    x_edges: Vec<usize>,
    /// Per intermediate state: successors on observed network attacks, by
    /// (source, target).
    h_edges: Vec<Vec<((usize, usize), usize)>>,
    initial: usize,
}

pub fn build_observer_automaton(
    system: SystemAutomaton,
    s0: &ObserverState,
) -> Result<ObserverAutomaton> {
    build_observer_automaton_with_budget(system, s0, DEFAULT_STATE_BUDGET)
}

pub fn build_observer_automaton_with_budget(
    system: SystemAutomaton,
    s0: &ObserverState,
    budget: usize,
) -> Result<ObserverAutomaton> {
    let k = system.k();
    if s0.k() != k {
        return Err(Error::InvalidParameter(format!(
            "initial observer is over {} computers but the automaton has {k}",
            s0.k()
        )));
    }
    if s0.phase() != Phase::Decision {
        return Err(Error::PhaseViolation { expected: Phase::Decision, actual: s0.phase() });
    }
    let actions = DefenderAction::alphabet(k);

    let (initial, branches, state_keys, state_index, intermediate_keys, x_edges, h_edges) = {
        let mut builder = Builder {
            system: &system,
            k,
            budget,
            states: Vec::new(),
            state_index: HashMap::new(),
            intermediates: Vec::new(),
            intermediate_index: HashMap::new(),
            x_edges: Vec::new(),
            h_edges: Vec::new(),
        };
        let initial = builder.register_decision(s0.index_key())?;

        let mut branches = Vec::new();
        let mut next = 0;
        while next < builder.states.len() {
            let set = builder.states[next].clone();
            let mut per_action = Vec::with_capacity(actions.len());
            for &action in &actions {
                let split = builder.defender_branches(&set, action);
                let mut registered = Vec::with_capacity(split.len());
                for (reading, branch_set) in split {
                    registered.push((reading, builder.register_intermediate(branch_set)?));
                }
                per_action.push(registered);
            }
            branches.push(per_action);
            next += 1;
        }
        (
            initial,
            branches,
            builder.states,
            builder.state_index,
            builder.intermediates,
            builder.x_edges,
            builder.h_edges,
        )
    };

    let states =
        state_keys.iter().map(|key| ObserverState::from_indices(k, key, Phase::Decision)).collect();
    let intermediates = intermediate_keys
        .iter()
        .map(|key| ObserverState::from_indices(k, key, Phase::Intermediate))
        .collect();
    Ok(ObserverAutomaton {
        system,
        actions,
        states,
        intermediates,
        state_index,
        branches,
        x_edges,
        h_edges,
        initial,
    })
}

/// Subset-construction worklist state. Candidate sets are sorted arrays of
/// canonical indices; discovery order assigns the indices.
struct Builder<'a> {
    system: &'a SystemAutomaton,
    k: usize,
    budget: usize,
    states: Vec<Vec<u32>>,
    state_index: HashMap<Vec<u32>, usize>,
    intermediates: Vec<Vec<u32>>,
    intermediate_index: HashMap<Vec<u32>, usize>,
    x_edges: Vec<usize>,
    h_edges: Vec<Vec<((usize, usize), usize)>>,
}

impl Builder<'_> {
    fn check_budget(&self) -> Result<()> {
        let total = self.states.len() + self.intermediates.len();
        if total > self.budget {
            return Err(Error::CapacityExceeded { needed: total, budget: self.budget });
        }
        Ok(())
    }

    fn register_decision(&mut self, key: Vec<u32>) -> Result<usize> {
        if let Some(&idx) = self.state_index.get(&key) {
            return Ok(idx);
        }
        let idx = self.states.len();
        self.state_index.insert(key.clone(), idx);
        self.states.push(key);
        self.check_budget()?;
        Ok(idx)
    }

    fn register_intermediate(&mut self, key: Vec<u32>) -> Result<usize> {
        if let Some(&idx) = self.intermediate_index.get(&key) {
            return Ok(idx);
        }
        let idx = self.intermediates.len();
        self.intermediate_index.insert(key.clone(), idx);
        self.intermediates.push(key.clone());
        self.check_budget()?;

        // hidden observation: union over members of all unobservable successors
        let mut x_set: Vec<u32> = Vec::new();
        let mut h_groups: BTreeMap<(usize, usize), Vec<u32>> = BTreeMap::new();
        for &member in &key {
            for (event, target) in self.system.attacker_edges(member as usize) {
                match event {
                    AttackerEvent::Network { source, target: t } => {
                        h_groups.entry((*source, *t)).or_default().push(*target as u32);
                    }
                    _ => x_set.push(*target as u32),
                }
            }
        }
        x_set.sort_unstable();
        x_set.dedup();
        let x_next = self.register_decision(x_set)?;
        self.x_edges.push(x_next);

        let mut h_list = Vec::with_capacity(h_groups.len());
        for (pair, mut set) in h_groups {
            set.sort_unstable();
            set.dedup();
            let next = self.register_decision(set)?;
            h_list.push((pair, next));
        }
        self.h_edges.push(h_list);
        Ok(idx)
    }

    /// Branches of one defender action out of a candidate set: a sense
    /// splits by the sensed digit, null and re-image map the whole set.
    fn defender_branches(
        &self,
        set: &[u32],
        action: DefenderAction,
    ) -> Vec<(Option<SecurityLevel>, Vec<u32>)> {
        match action {
            DefenderAction::Null => vec![(None, set.to_vec())],
            DefenderAction::Reimage(i) => {
                let weight = 4u32.pow((self.k - i) as u32);
                let mut mapped: Vec<u32> =
                    set.iter().map(|&idx| idx - (idx / weight % 4) * weight).collect();
                mapped.sort_unstable();
                mapped.dedup();
                vec![(None, mapped)]
            }
            DefenderAction::Sense(i) => {
                let weight = 4u32.pow((self.k - i) as u32);
                let mut groups: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
                for &idx in set {
                    groups.entry(idx / weight % 4).or_default().push(idx);
                }
                groups
                    .into_iter()
                    .map(|(rank, members)| {
                        (Some(SecurityLevel::from_rank(rank as usize).unwrap()), members)
                    })
                    .collect()
            }
        }
    }
}

impl ObserverAutomaton {
    pub fn k(&self) -> usize {
        self.system.k()
    }

    pub fn system(&self) -> &SystemAutomaton {
        &self.system
    }

    /// Defender actions in canonical order; branch lists are indexed by
    /// position in this slice.
    pub fn actions(&self) -> &[DefenderAction] {
        &self.actions
    }

    /// Decision-side observer states; the policy is a map over these.
    pub fn states(&self) -> &[ObserverState] {
        &self.states
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn intermediate_states(&self) -> &[ObserverState] {
        &self.intermediates
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn index_of(&self, s: &ObserverState) -> Option<usize> {
        self.state_index.get(&s.index_key()).copied()
    }

    fn action_index(&self, action: DefenderAction) -> Result<usize> {
        self.actions
            .iter()
            .position(|&a| a == action)
            .ok_or_else(|| Error::InvalidParameter(format!("action {action} not in the alphabet")))
    }

    /// Branches of `(state, action)`: `(reading, intermediate index)` pairs,
    /// in reading order. Null and re-image have exactly one unlabeled branch.
    pub fn branches(&self, state: usize, action: DefenderAction) -> Result<&[(Option<SecurityLevel>, usize)]> {
        Ok(&self.branches[state][self.action_index(action)?])
    }

    /// Successor of an intermediate observer state under the hidden observation.
    pub fn hidden_successor(&self, intermediate: usize) -> usize {
        self.x_edges[intermediate]
    }

    /// Successors of an intermediate observer state under observed network
    /// attacks, keyed by (source, target).
    pub fn network_successors(&self, intermediate: usize) -> &[((usize, usize), usize)] {
        &self.h_edges[intermediate]
    }

    /// The flattened observer update on state indices.
    pub fn step(&self, state: usize, action: DefenderAction, obs: &Observation) -> Result<usize> {
        let branches = self.branches(state, action)?;
        let is_sense = matches!(action, DefenderAction::Sense(_));
        let intermediate = match (is_sense, obs.sense_reading) {
            (true, Some(reading)) => branches
                .iter()
                .find(|(r, _)| *r == Some(reading))
                .map(|(_, b)| *b)
                .ok_or_else(|| {
                    Error::InconsistentObservation(format!(
                        "reading {reading} matches no branch of {} under {action}",
                        self.states[state]
                    ))
                })?,
            (false, None) => branches[0].1,
            (true, None) => {
                return Err(Error::InconsistentObservation(
                    "sense action requires a reading".into(),
                ))
            }
            (false, Some(_)) => {
                return Err(Error::InconsistentObservation(
                    "reading present but the action was not a sense".into(),
                ))
            }
        };
        match obs.attack {
            AttackObservation::Hidden => Ok(self.x_edges[intermediate]),
            AttackObservation::Network { source, target } => self.h_edges[intermediate]
                .iter()
                .find(|(pair, _)| *pair == (source, target))
                .map(|(_, next)| *next)
                .ok_or_else(|| {
                    Error::InconsistentObservation(format!(
                        "observed lateral_{source}_{target} is not realizable from {}",
                        self.intermediates[intermediate]
                    ))
                }),
        }
    }

    /// `Q(S, d, Z)` as indices into [`ObserverAutomaton::states`], extracted
    /// from the automaton's edges. `z` must be a candidate of the state.
    pub fn q_indices(&self, state: usize, action: DefenderAction, z: &SystemState) -> Result<Vec<usize>> {
        let s = &self.states[state];
        if !s.contains(z) {
            return Err(Error::CandidateNotInState { candidate: z.code() });
        }
        let branches = self.branches(state, action)?;
        let intermediate = match action {
            DefenderAction::Sense(i) => {
                let reading = z.level_of(i);
                branches
                    .iter()
                    .find(|(r, _)| *r == Some(reading))
                    .map(|(_, b)| *b)
                    .expect("the branch matching a candidate's reading always exists")
            }
            _ => branches[0].1,
        };
        let z_tilde = model::apply_defender(z, action)?.canonical_index();
        let mut q = vec![self.x_edges[intermediate]];
        for ((source, target), next) in &self.h_edges[intermediate] {
            if self.system.admits_network(z_tilde, *source, *target) {
                q.push(*next);
            }
        }
        q.sort_unstable();
        q.dedup();
        Ok(q)
    }

    /// `Q(S, d, Z)` materialized as observer states.
    pub fn q_set(&self, state: usize, action: DefenderAction, z: &SystemState) -> Result<QSet> {
        let members =
            self.q_indices(state, action, z)?.into_iter().map(|i| self.states[i].clone()).collect();
        Ok(QSet::new(members))
    }

    /// Indices of decision-side observer states containing the given candidate.
    pub fn states_containing(&self, z: &SystemState) -> Vec<usize> {
        self.states
            .iter()
            .enumerate()
            .filter(|(_, s)| s.contains(z))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn tallies(&self) -> TransitionTallies {
        let defender_branch_edges: usize =
            self.branches.iter().flat_map(|per_action| per_action.iter().map(Vec::len)).sum();
        let observation_edges: usize =
            self.x_edges.len() + self.h_edges.iter().map(Vec::len).sum::<usize>();
        let flattened_total: usize = self
            .branches
            .iter()
            .flat_map(|per_action| {
                per_action
                    .iter()
                    .flat_map(|branches| branches.iter().map(|(_, b)| 1 + self.h_edges[*b].len()))
            })
            .sum();
        TransitionTallies {
            decision_states: self.states.len(),
            intermediate_states: self.intermediates.len(),
            defender_branch_edges,
            observation_edges,
            bipartite_total: defender_branch_edges + observation_edges,
            flattened_total,
        }
    }

    fn state_name(prefix: &str, s: &ObserverState) -> String {
        format!("{}_{}", prefix, s.code())
    }

    /// Same line format as the system automaton export. Sense branches are
    /// labeled with their reading; observation edges carry the grouped
    /// observation labels.
    pub fn to_fsm_text(&self) -> String {
        let mut events: Vec<String> = Vec::new();
        let mut lines: Vec<String> = Vec::new();
        for (i, s) in self.states.iter().enumerate() {
            for (a_idx, action) in self.actions.iter().enumerate() {
                for (reading, target) in &self.branches[i][a_idx] {
                    let label = match (action, reading) {
                        (DefenderAction::Sense(c), Some(r)) => {
                            ExpandedDefenderEvent::Sense { computer: *c, reading: *r }.label()
                        }
                        _ => action.label(),
                    };
                    lines.push(format!(
                        "trans {} {} {} c o",
                        Self::state_name("S", s),
                        label,
                        Self::state_name("T", &self.intermediates[*target]),
                    ));
                    events.push(label);
                }
            }
        }
        for (i, st) in self.intermediates.iter().enumerate() {
            let src = Self::state_name("T", st);
            lines.push(format!(
                "trans {} hidden {} uc o",
                src,
                Self::state_name("S", &self.states[self.x_edges[i]])
            ));
            events.push("hidden".into());
            for ((source, target), next) in &self.h_edges[i] {
                let label = AttackObservation::Network { source: *source, target: *target }.label();
                lines.push(format!(
                    "trans {} {} {} uc o",
                    src,
                    label,
                    Self::state_name("S", &self.states[*next])
                ));
                events.push(label);
            }
        }
        events.sort();
        events.dedup();

        let mut out = String::new();
        out.push_str(&format!(
            "states {} events {}\n",
            self.states.len() + self.intermediates.len(),
            events.len()
        ));
        for s in &self.states {
            out.push_str(&format!("state {} decision\n", Self::state_name("S", s)));
        }
        for st in &self.intermediates {
            out.push_str(&format!("state {} intermediate\n", Self::state_name("T", st)));
        }
        for line in lines {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph observer {\n  rankdir=LR;\n");
        for (i, s) in self.states.iter().enumerate() {
            out.push_str(&format!("  s{} [shape=box,label=\"{}\"];\n", i, s.code()));
        }
        for (i, st) in self.intermediates.iter().enumerate() {
            out.push_str(&format!(
                "  t{} [shape=ellipse,style=dashed,label=\"{}\"];\n",
                i,
                st.code()
            ));
        }
        for (i, _) in self.states.iter().enumerate() {
            for (a_idx, action) in self.actions.iter().enumerate() {
                for (reading, target) in &self.branches[i][a_idx] {
                    let label = match (action, reading) {
                        (DefenderAction::Sense(c), Some(r)) => {
                            ExpandedDefenderEvent::Sense { computer: *c, reading: *r }.label()
                        }
                        _ => action.label(),
                    };
                    out.push_str(&format!("  s{} -> t{} [label=\"{}\"];\n", i, target, label));
                }
            }
        }
        for i in 0..self.intermediates.len() {
            out.push_str(&format!(
                "  t{} -> s{} [label=\"hidden\",style=dashed];\n",
                i, self.x_edges[i]
            ));
            for ((source, target), next) in &self.h_edges[i] {
                out.push_str(&format!(
                    "  t{} -> s{} [label=\"lateral_{}_{}\",style=dashed];\n",
                    i, next, source, target
                ));
            }
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automaton::build_system_automaton;
    use SecurityLevel::*;

    fn deci(levels: &[SecurityLevel]) -> SystemState {
        SystemState::decision(levels.to_vec())
    }

    fn obs_state(level_sets: &[&[SecurityLevel]]) -> ObserverState {
        ObserverState::new(level_sets.iter().map(|l| deci(l)).collect()).unwrap()
    }

    /// The running three-computer example: S = {FNN, FNR, FRN}.
    fn three_computer_example() -> ObserverState {
        obs_state(&[
            &[RemoteCompromised, Normal, Normal],
            &[RemoteCompromised, Normal, Compromised],
            &[RemoteCompromised, Compromised, Normal],
        ])
    }

    #[test]
    fn initial_observer_is_the_all_normal_singleton() {
        let s = initial_observer(2);
        assert_eq!(s.candidates(), &[deci(&[Normal, Normal])]);
        assert_eq!(ObserverState::full(1).len(), 4);
        assert!(matches!(ObserverState::new(vec![]), Err(Error::EmptyObserverState)));
    }

    #[test]
    fn sense_partition_splits_by_component() {
        let s = three_computer_example();
        let parts = sense_partition(&s, 2).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].0, Normal);
        assert_eq!(
            parts[0].1,
            obs_state(&[
                &[RemoteCompromised, Normal, Normal],
                &[RemoteCompromised, Normal, Compromised],
            ])
        );
        assert_eq!(parts[1].0, Compromised);
        assert_eq!(parts[1].1, obs_state(&[&[RemoteCompromised, Compromised, Normal]]));
    }

    #[test]
    fn sense_partition_of_singleton_is_itself() {
        let s = obs_state(&[&[FullyCompromised, Normal]]);
        let parts = sense_partition(&s, 1).unwrap();
        assert_eq!(parts, vec![(FullyCompromised, s.clone())]);
    }

    #[test]
    fn observer_step_replays_the_sensed_network_attack() {
        let s = three_computer_example();
        let obs = Observation::network(1, 2, Some(Normal));
        let next = observer_step(&s, DefenderAction::Sense(2), &obs, ModelFlags::default()).unwrap();
        assert_eq!(
            next,
            obs_state(&[
                &[RemoteCompromised, FullyCompromised, Normal],
                &[RemoteCompromised, FullyCompromised, Compromised],
            ])
        );
    }

    #[test]
    fn hidden_step_from_all_normal_adds_single_breaches() {
        let s = initial_observer(2);
        let next = observer_step(
            &s,
            DefenderAction::Null,
            &Observation::hidden(None),
            ModelFlags::default(),
        )
        .unwrap();
        assert_eq!(
            next,
            obs_state(&[&[Normal, Normal], &[Normal, Compromised], &[Compromised, Normal]])
        );
    }

    #[test]
    fn unrealizable_network_observation_errors() {
        let s = initial_observer(2);
        let err = observer_step(
            &s,
            DefenderAction::Null,
            &Observation::network(1, 2, None),
            ModelFlags::default(),
        );
        assert!(matches!(err, Err(Error::InconsistentObservation(_))));
    }

    #[test]
    fn mismatched_sense_reading_errors() {
        let s = obs_state(&[&[Normal, Normal]]);
        let err = observer_step(
            &s,
            DefenderAction::Sense(1),
            &Observation::hidden(Some(RemoteCompromised)),
            ModelFlags::default(),
        );
        assert!(matches!(err, Err(Error::InconsistentObservation(_))));
    }

    #[test]
    fn hidden_step_never_drops_candidates_under_null() {
        // the null attack keeps every candidate alive
        let s = obs_state(&[
            &[Normal, Compromised],
            &[FullyCompromised, RemoteCompromised],
            &[RemoteCompromised, RemoteCompromised],
        ]);
        let next = observer_step(
            &s,
            DefenderAction::Null,
            &Observation::hidden(None),
            ModelFlags::default(),
        )
        .unwrap();
        for z in s.candidates() {
            assert!(next.contains(z));
        }
    }

    #[test]
    fn q_set_for_the_three_computer_example() {
        let s = three_computer_example();
        let z = deci(&[RemoteCompromised, Normal, Compromised]);
        let q = compute_q(&s, DefenderAction::Sense(2), &z, ModelFlags::default()).unwrap();
        let listed = obs_state(&[
            &[RemoteCompromised, FullyCompromised, Normal],
            &[RemoteCompromised, FullyCompromised, Compromised],
        ]);
        assert!(q.contains(&listed));
        // hidden plus lateral_1_2 plus lateral_1_3 are realizable from (F,N,R)
        assert_eq!(q.len(), 3);
    }

    #[test]
    fn q_set_k1_has_single_member() {
        let s = obs_state(&[&[Normal]]);
        let z = deci(&[Normal]);
        let q = compute_q(&s, DefenderAction::Null, &z, ModelFlags::default()).unwrap();
        assert_eq!(q.members(), &[obs_state(&[&[Normal], &[Compromised]])]);

        let s = obs_state(&[&[RemoteCompromised]]);
        let z = deci(&[RemoteCompromised]);
        let q = compute_q(&s, DefenderAction::Reimage(1), &z, ModelFlags::default()).unwrap();
        assert_eq!(q.members(), &[obs_state(&[&[Normal], &[Compromised]])]);
    }

    #[test]
    fn q_requires_membership() {
        let s = obs_state(&[&[Normal]]);
        let z = deci(&[RemoteCompromised]);
        let err = compute_q(&s, DefenderAction::Null, &z, ModelFlags::default());
        assert!(matches!(err, Err(Error::CandidateNotInState { .. })));
    }

    fn build(k: usize) -> ObserverAutomaton {
        let system = build_system_automaton(k, ModelFlags::default()).unwrap();
        build_observer_automaton(system, &initial_observer(k)).unwrap()
    }

    #[test]
    fn k1_observer_matches_brute_force_powerset_reachability() {
        // independent oracle: explicit reachability over all nonempty
        // subsets of the four decision states, as bitmasks
        let flags = ModelFlags::default();
        let step_mask = |mask: u16, action: DefenderAction, hidden: bool| -> u16 {
            let mut tilde = 0u16;
            for rank in 0..4 {
                if mask & (1 << rank) != 0 {
                    let z = SystemState::from_canonical_index(1, rank, Phase::Decision);
                    let zt = model::apply_defender(&z, action).unwrap();
                    tilde |= 1 << zt.canonical_index();
                }
            }
            let mut next = 0u16;
            for rank in 0..4 {
                if tilde & (1 << rank) != 0 {
                    let zt = SystemState::from_canonical_index(1, rank, Phase::Intermediate);
                    for event in model::admissible_attacker(&zt, flags).unwrap() {
                        if hidden == (model::observe(event) == AttackObservation::Hidden) {
                            let z2 = model::apply_attacker(&zt, event, flags).unwrap();
                            next |= 1 << z2.canonical_index();
                        }
                    }
                }
            }
            next
        };
        let mut reachable = vec![1u16]; // {N}
        let mut frontier = vec![1u16];
        while let Some(mask) = frontier.pop() {
            let mut moves: Vec<u16> = Vec::new();
            moves.push(step_mask(mask, DefenderAction::Null, true));
            moves.push(step_mask(mask, DefenderAction::Reimage(1), true));
            for rank in 0..4 {
                if mask & (1 << rank) != 0 {
                    moves.push(step_mask(1 << rank, DefenderAction::Sense(1), true));
                }
            }
            for next in moves {
                if next != 0 && !reachable.contains(&next) {
                    reachable.push(next);
                    frontier.push(next);
                }
            }
        }

        let aut = build(1);
        assert_eq!(aut.state_count(), reachable.len());
    }

    #[test]
    fn q_indices_agree_with_direct_computation() {
        let aut = build(2);
        let flags = ModelFlags::default();
        for (idx, s) in aut.states().iter().enumerate() {
            for &action in aut.actions() {
                for z in s.candidates() {
                    let direct = compute_q(s, action, z, flags).unwrap();
                    let via_automaton = aut.q_set(idx, action, z).unwrap();
                    assert_eq!(direct, via_automaton, "state {idx} action {action} z {z}");
                }
            }
        }
    }

    #[test]
    fn every_q_member_is_reachable_via_a_realizable_observation() {
        let aut = build(2);
        let flags = ModelFlags::default();
        let s_idx = aut.state_count() - 1;
        let s = &aut.states()[s_idx];
        for &action in aut.actions() {
            for z in s.candidates() {
                let reading = match action {
                    DefenderAction::Sense(i) => Some(z.level_of(i)),
                    _ => None,
                };
                let z_tilde = model::apply_defender(z, action).unwrap();
                let mut observations = vec![Observation::hidden(reading)];
                for event in model::admissible_attacker(&z_tilde, flags).unwrap() {
                    if let AttackerEvent::Network { source, target } = event {
                        observations.push(Observation::network(source, target, reading));
                    }
                }
                let q = aut.q_indices(s_idx, action, z).unwrap();
                let mut reached: Vec<usize> = observations
                    .iter()
                    .map(|obs| aut.step(s_idx, action, obs).unwrap())
                    .collect();
                reached.sort_unstable();
                reached.dedup();
                assert_eq!(q, reached);
            }
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let a = build(2);
        let b = build(2);
        assert_eq!(a, b);
        assert_eq!(a.to_fsm_text(), b.to_fsm_text());
    }

    #[test]
    fn automaton_step_agrees_with_observer_step() {
        let aut = build(2);
        let flags = ModelFlags::default();
        // spot-check the flattened step against the set-level function on
        // every state under null and both senses with the hidden observation
        for (idx, s) in aut.states().iter().enumerate() {
            let next_idx = aut.step(idx, DefenderAction::Null, &Observation::hidden(None)).unwrap();
            let direct =
                observer_step(s, DefenderAction::Null, &Observation::hidden(None), flags).unwrap();
            assert_eq!(aut.states()[next_idx], direct);
            for i in 1..=2 {
                for (reading, _) in sense_partition(s, i).unwrap() {
                    let obs = Observation::hidden(Some(reading));
                    let next_idx = aut.step(idx, DefenderAction::Sense(i), &obs).unwrap();
                    let direct = observer_step(s, DefenderAction::Sense(i), &obs, flags).unwrap();
                    assert_eq!(aut.states()[next_idx], direct);
                }
            }
        }
    }
}
