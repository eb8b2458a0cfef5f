//! The system automaton from the defender's viewpoint: a bipartite graph of
//! decision states (defender moves) and intermediate states (attacker moves)
//! over all `4^K` level tuples, `2 * 4^K` states in total.
//!
//! Sense actions are expanded by their reading — `sense_i_z` exists only at
//! decision states where computer `i` actually sits at level `z` — so that
//! observer construction over this automaton captures the information gained
//! by sensing. Grouping the expanded senses back into one nondeterministic
//! action per computer happens on the observer side.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{
    self, AttackerEvent, DefenderAction, ModelFlags, Phase, SecurityLevel, SystemState,
};

/// Default cap on total automaton states (decision + intermediate).
pub const DEFAULT_STATE_BUDGET: usize = 1 << 22;

/// Defender event with sense split by its reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExpandedDefenderEvent {
    Null,
    Sense { computer: usize, reading: SecurityLevel },
    Reimage(usize),
}

impl ExpandedDefenderEvent {
    /// The grouped action this expanded event belongs to.
    pub fn action(&self) -> DefenderAction {
        match self {
            ExpandedDefenderEvent::Null => DefenderAction::Null,
            ExpandedDefenderEvent::Sense { computer, .. } => DefenderAction::Sense(*computer),
            ExpandedDefenderEvent::Reimage(i) => DefenderAction::Reimage(*i),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ExpandedDefenderEvent::Null => "idle".into(),
            ExpandedDefenderEvent::Sense { computer, reading } => {
                format!("sense_{computer}_{reading}")
            }
            ExpandedDefenderEvent::Reimage(i) => format!("reimage_{i}"),
        }
    }

    pub fn parse_label(label: &str) -> Result<ExpandedDefenderEvent> {
        let err = || Error::Parse(format!("unknown defender event {label:?}"));
        if label == "idle" {
            return Ok(ExpandedDefenderEvent::Null);
        }
        if let Some(rest) = label.strip_prefix("sense_") {
            let (computer, reading) = rest.split_once('_').ok_or_else(err)?;
            let computer = computer.parse().map_err(|_| err())?;
            let reading = reading
                .chars()
                .next()
                .and_then(SecurityLevel::from_code)
                .filter(|_| reading.len() == 1)
                .ok_or_else(err)?;
            return Ok(ExpandedDefenderEvent::Sense { computer, reading });
        }
        if let Some(i) = label.strip_prefix("reimage_") {
            return i.parse().map(ExpandedDefenderEvent::Reimage).map_err(|_| err());
        }
        Err(err())
    }
}

impl fmt::Display for ExpandedDefenderEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Any event label occurring in the system automaton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SystemEvent {
    Defender(ExpandedDefenderEvent),
    Attacker(AttackerEvent),
}

impl SystemEvent {
    /// Defender events are controllable, attacker events are not.
    pub fn is_controllable(&self) -> bool {
        matches!(self, SystemEvent::Defender(_))
    }

    /// Everything the defender does is observable; of the attacker's events
    /// only network attacks are.
    pub fn is_observable(&self) -> bool {
        match self {
            SystemEvent::Defender(_) => true,
            SystemEvent::Attacker(AttackerEvent::Network { .. }) => true,
            SystemEvent::Attacker(_) => false,
        }
    }

    pub fn label(&self) -> String {
        match self {
            SystemEvent::Defender(e) => e.label(),
            SystemEvent::Attacker(e) => e.label(),
        }
    }
}

/// Bipartite system automaton over decision and intermediate states.
///
/// States on each side are indexed by [`SystemState::canonical_index`], so
/// index `i` on both sides carries the same level tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemAutomaton {
    k: usize,
    decision_states: Vec<SystemState>,
    intermediate_states: Vec<SystemState>,
    defender_edges: Vec<Vec<(ExpandedDefenderEvent, usize)>>,
    attacker_edges: Vec<Vec<(AttackerEvent, usize)>>,
}

pub fn build_system_automaton(k: usize, flags: ModelFlags) -> Result<SystemAutomaton> {
    build_system_automaton_with_budget(k, flags, DEFAULT_STATE_BUDGET)
}

pub fn build_system_automaton_with_budget(
    k: usize,
    flags: ModelFlags,
    budget: usize,
) -> Result<SystemAutomaton> {
    if k == 0 {
        return Err(Error::InvalidParameter("network needs at least one computer".into()));
    }
    // 2 * 4^k states, checked without overflowing.
    let states = 4usize
        .checked_pow(k as u32)
        .and_then(|n| n.checked_mul(2))
        .ok_or(Error::CapacityExceeded { needed: usize::MAX, budget })?;
    if states > budget {
        return Err(Error::CapacityExceeded { needed: states, budget });
    }
    let n = states / 2;

    let decision_states: Vec<SystemState> =
        (0..n).map(|i| SystemState::from_canonical_index(k, i, Phase::Decision)).collect();
    let intermediate_states: Vec<SystemState> =
        (0..n).map(|i| SystemState::from_canonical_index(k, i, Phase::Intermediate)).collect();

    let mut defender_edges = Vec::with_capacity(n);
    for z in &decision_states {
        let mut edges = Vec::with_capacity(2 + 2 * k);
        for action in DefenderAction::alphabet(k) {
            let event = match action {
                DefenderAction::Null => ExpandedDefenderEvent::Null,
                DefenderAction::Sense(i) => {
                    // only the sense matching the true component exists here
                    ExpandedDefenderEvent::Sense { computer: i, reading: z.level_of(i) }
                }
                DefenderAction::Reimage(i) => ExpandedDefenderEvent::Reimage(i),
            };
            let target = model::apply_defender(z, action)?.canonical_index();
            edges.push((event, target));
        }
        defender_edges.push(edges);
    }

    let mut attacker_edges = Vec::with_capacity(n);
    for zt in &intermediate_states {
        let mut edges = Vec::new();
        for event in model::admissible_attacker(zt, flags)? {
            let target = model::apply_attacker(zt, event, flags)?.canonical_index();
            edges.push((event, target));
        }
        attacker_edges.push(edges);
    }

    Ok(SystemAutomaton { k, decision_states, intermediate_states, defender_edges, attacker_edges })
}

impl SystemAutomaton {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Total state count, decision plus intermediate sides.
    pub fn state_count(&self) -> usize {
        self.decision_states.len() + self.intermediate_states.len()
    }

    pub fn decision_states(&self) -> &[SystemState] {
        &self.decision_states
    }

    pub fn intermediate_states(&self) -> &[SystemState] {
        &self.intermediate_states
    }

    /// Expanded defender edges out of the decision state with this canonical index.
    pub fn defender_edges(&self, decision_index: usize) -> &[(ExpandedDefenderEvent, usize)] {
        &self.defender_edges[decision_index]
    }

    /// Attacker edges out of the intermediate state with this canonical index.
    pub fn attacker_edges(&self, intermediate_index: usize) -> &[(AttackerEvent, usize)] {
        &self.attacker_edges[intermediate_index]
    }

    pub fn transition_count(&self) -> usize {
        self.defender_edges.iter().map(Vec::len).sum::<usize>()
            + self.attacker_edges.iter().map(Vec::len).sum::<usize>()
    }

    /// Whether a network attack from `source` to `target` is admissible at
    /// the intermediate state with this canonical index.
    pub fn admits_network(&self, intermediate_index: usize, source: usize, target: usize) -> bool {
        self.attacker_edges[intermediate_index]
            .iter()
            .any(|(e, _)| *e == AttackerEvent::Network { source, target })
    }

    fn state_name(state: &SystemState) -> String {
        match state.phase() {
            Phase::Decision => format!("D_{}", state.code()),
            Phase::Intermediate => format!("I_{}", state.code()),
        }
    }

    /// Plain-text listing of the automaton; byte-identical for equal inputs.
    ///
    /// Format: `states <n> events <m>` header, then one `state <name>
    /// <phase>` line per state (decision side first), then one `trans <src>
    /// <event> <dst> <c|uc> <o|uo>` line per transition.
    pub fn to_fsm_text(&self) -> String {
        let mut events: Vec<String> = Vec::new();
        let mut lines: Vec<String> = Vec::new();
        for (i, z) in self.decision_states.iter().enumerate() {
            for (event, dst) in &self.defender_edges[i] {
                let ev = SystemEvent::Defender(*event);
                lines.push(format!(
                    "trans {} {} {} {} {}",
                    Self::state_name(z),
                    ev.label(),
                    Self::state_name(&self.intermediate_states[*dst]),
                    if ev.is_controllable() { "c" } else { "uc" },
                    if ev.is_observable() { "o" } else { "uo" },
                ));
                events.push(ev.label());
            }
        }
        for (i, zt) in self.intermediate_states.iter().enumerate() {
            for (event, dst) in &self.attacker_edges[i] {
                let ev = SystemEvent::Attacker(*event);
                lines.push(format!(
                    "trans {} {} {} {} {}",
                    Self::state_name(zt),
                    ev.label(),
                    Self::state_name(&self.decision_states[*dst]),
                    if ev.is_controllable() { "c" } else { "uc" },
                    if ev.is_observable() { "o" } else { "uo" },
                ));
                events.push(ev.label());
            }
        }
        events.sort();
        events.dedup();

        let mut out = String::new();
        out.push_str(&format!("states {} events {}\n", self.state_count(), events.len()));
        for z in &self.decision_states {
            out.push_str(&format!("state {} {}\n", Self::state_name(z), z.phase()));
        }
        for zt in &self.intermediate_states {
            out.push_str(&format!("state {} {}\n", Self::state_name(zt), zt.phase()));
        }
        for line in lines {
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// DOT rendering; decision states are boxes, intermediate states ellipses.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph system {\n  rankdir=LR;\n");
        for z in &self.decision_states {
            out.push_str(&format!(
                "  {} [shape=box,label=\"{}\"];\n",
                Self::state_name(z),
                z.code()
            ));
        }
        for zt in &self.intermediate_states {
            out.push_str(&format!(
                "  {} [shape=ellipse,style=dashed,label=\"{}\"];\n",
                Self::state_name(zt),
                zt.code()
            ));
        }
        for (i, z) in self.decision_states.iter().enumerate() {
            for (event, dst) in &self.defender_edges[i] {
                out.push_str(&format!(
                    "  {} -> {} [label=\"{}\"];\n",
                    Self::state_name(z),
                    Self::state_name(&self.intermediate_states[*dst]),
                    event.label()
                ));
            }
        }
        for (i, zt) in self.intermediate_states.iter().enumerate() {
            for (event, dst) in &self.attacker_edges[i] {
                out.push_str(&format!(
                    "  {} -> {} [label=\"{}\",style=dashed];\n",
                    Self::state_name(zt),
                    Self::state_name(&self.decision_states[*dst]),
                    event.label()
                ));
            }
        }
        out.push_str("}\n");
        out
    }
}

fn parse_state_name(name: &str) -> Result<SystemState> {
    let err = || Error::Parse(format!("bad state name {name:?}"));
    if let Some(code) = name.strip_prefix("D_") {
        SystemState::parse_code(code, Phase::Decision).map_err(|_| err())
    } else if let Some(code) = name.strip_prefix("I_") {
        SystemState::parse_code(code, Phase::Intermediate).map_err(|_| err())
    } else {
        Err(err())
    }
}

/// Parses the text produced by [`SystemAutomaton::to_fsm_text`].
pub fn parse_fsm(text: &str) -> Result<SystemAutomaton> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty automaton listing".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [kw_states, n_states, kw_events, _n_events] = fields.as_slice() else {
        return Err(Error::Parse(format!("bad header {header:?}")));
    };
    if *kw_states != "states" || *kw_events != "events" {
        return Err(Error::Parse(format!("bad header {header:?}")));
    }
    let n_states: usize =
        n_states.parse().map_err(|_| Error::Parse(format!("bad state count in {header:?}")))?;

    let mut decision_states = Vec::new();
    let mut intermediate_states = Vec::new();
    let mut transitions = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["state", name, phase] => {
                let state = parse_state_name(name)?;
                if state.phase().to_string() != *phase {
                    return Err(Error::Parse(format!("phase mismatch in {line:?}")));
                }
                match state.phase() {
                    Phase::Decision => decision_states.push(state),
                    Phase::Intermediate => intermediate_states.push(state),
                }
            }
            ["trans", src, event, dst, ctrl, obs] => {
                transitions.push((
                    parse_state_name(src)?,
                    event.to_string(),
                    parse_state_name(dst)?,
                    *ctrl == "c",
                    *obs == "o",
                ));
            }
            _ => return Err(Error::Parse(format!("unrecognized line {line:?}"))),
        }
    }
    if decision_states.len() + intermediate_states.len() != n_states {
        return Err(Error::Parse("state count does not match header".into()));
    }
    if decision_states.is_empty() {
        return Err(Error::Parse("no decision states listed".into()));
    }
    let k = decision_states[0].k();

    let n = decision_states.len();
    let mut defender_edges: Vec<Vec<(ExpandedDefenderEvent, usize)>> = vec![Vec::new(); n];
    let mut attacker_edges: Vec<Vec<(AttackerEvent, usize)>> =
        vec![Vec::new(); intermediate_states.len()];
    for (src, label, dst, ctrl, obs) in transitions {
        let event = match src.phase() {
            Phase::Decision => SystemEvent::Defender(ExpandedDefenderEvent::parse_label(&label)?),
            Phase::Intermediate => SystemEvent::Attacker(AttackerEvent::parse_label(&label)?),
        };
        if event.is_controllable() != ctrl || event.is_observable() != obs {
            return Err(Error::Parse(format!(
                "controllability/observability marks disagree with event {label:?}"
            )));
        }
        if dst.phase() == src.phase() {
            return Err(Error::Parse(format!("transition {label:?} does not switch phase")));
        }
        match event {
            SystemEvent::Defender(e) => {
                defender_edges[src.canonical_index()].push((e, dst.canonical_index()));
            }
            SystemEvent::Attacker(e) => {
                attacker_edges[src.canonical_index()].push((e, dst.canonical_index()));
            }
        }
    }

    Ok(SystemAutomaton { k, decision_states, intermediate_states, defender_edges, attacker_edges })
}
