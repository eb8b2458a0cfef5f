//! The dynamic defense model: per-computer security levels, network states,
//! attacker/defender events with their admissibility and transition rules,
//! and the cost structure driving the optimization.
//!
//! A network of `K` computers evolves in alternating half-steps. At a
//! *decision* state the defender picks one action (do nothing, sense a
//! computer, or re-image it); the resulting *intermediate* state then hosts
//! exactly one attacker event (do nothing, push one computer across its next
//! security boundary, or use a remote-compromised computer to attack another
//! over the network). Only network attacks are visible to the defender; all
//! other attacker events collapse into the single observation
//! [`AttackObservation::Hidden`].

use std::fmt;

use crate::error::{Error, Result};

/// Security level of a single computer, ordered from intact to fully lost.
///
/// The three order steps correspond to the three security boundaries an
/// attacker has to cross: `Normal -> Compromised -> FullyCompromised ->
/// RemoteCompromised`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SecurityLevel {
    /// No boundary crossed.
    Normal,
    /// User-level access obtained (first boundary crossed).
    Compromised,
    /// Root/execute privilege obtained (second boundary crossed).
    FullyCompromised,
    /// Able to stage attacks on other computers (all boundaries crossed).
    RemoteCompromised,
}

impl SecurityLevel {
    pub const ALL: [SecurityLevel; 4] = [
        SecurityLevel::Normal,
        SecurityLevel::Compromised,
        SecurityLevel::FullyCompromised,
        SecurityLevel::RemoteCompromised,
    ];

    /// Position in the total order, 0 (`Normal`) to 3 (`RemoteCompromised`).
    pub fn rank(self) -> usize {
        match self {
            SecurityLevel::Normal => 0,
            SecurityLevel::Compromised => 1,
            SecurityLevel::FullyCompromised => 2,
            SecurityLevel::RemoteCompromised => 3,
        }
    }

    pub fn from_rank(rank: usize) -> Option<SecurityLevel> {
        SecurityLevel::ALL.get(rank).copied()
    }

    /// One-letter code used in state names: N, R, W, F.
    pub fn code(self) -> char {
        match self {
            SecurityLevel::Normal => 'N',
            SecurityLevel::Compromised => 'R',
            SecurityLevel::FullyCompromised => 'W',
            SecurityLevel::RemoteCompromised => 'F',
        }
    }

    pub fn from_code(c: char) -> Option<SecurityLevel> {
        match c {
            'N' => Some(SecurityLevel::Normal),
            'R' => Some(SecurityLevel::Compromised),
            'W' => Some(SecurityLevel::FullyCompromised),
            'F' => Some(SecurityLevel::RemoteCompromised),
            _ => None,
        }
    }
}

impl fmt::Display for SecurityLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Which player acts at a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    /// Defender actions are admissible here.
    Decision,
    /// Attacker events are admissible here.
    Intermediate,
}

impl Phase {
    pub fn other(self) -> Phase {
        match self {
            Phase::Decision => Phase::Intermediate,
            Phase::Intermediate => Phase::Decision,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Decision => f.write_str("decision"),
            Phase::Intermediate => f.write_str("intermediate"),
        }
    }
}

/// The K-tuple of per-computer security levels, tagged with the phase.
///
/// Ordering is by the level tuple with computer 1 most significant, which
/// coincides with [`SystemState::canonical_index`] order within one phase.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SystemState {
    levels: Vec<SecurityLevel>,
    phase: Phase,
}

impl SystemState {
    pub fn new(levels: Vec<SecurityLevel>, phase: Phase) -> SystemState {
        assert!(!levels.is_empty(), "a system state needs at least one computer");
        SystemState { levels, phase }
    }

    pub fn decision(levels: Vec<SecurityLevel>) -> SystemState {
        SystemState::new(levels, Phase::Decision)
    }

    pub fn intermediate(levels: Vec<SecurityLevel>) -> SystemState {
        SystemState::new(levels, Phase::Intermediate)
    }

    /// All-`Normal` decision state for a network of `k` computers.
    pub fn all_normal(k: usize) -> SystemState {
        SystemState::decision(vec![SecurityLevel::Normal; k])
    }

    pub fn k(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[SecurityLevel] {
        &self.levels
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Level of computer `i`, 1-based.
    pub fn level_of(&self, computer: usize) -> SecurityLevel {
        self.levels[computer - 1]
    }

    /// Base-4 index with computer 1 most significant; a bijection onto
    /// `0..4^K - 1` within each phase.
    pub fn canonical_index(&self) -> usize {
        self.levels.iter().fold(0, |acc, z| acc * 4 + z.rank())
    }

    pub fn from_canonical_index(k: usize, mut index: usize, phase: Phase) -> SystemState {
        let mut levels = vec![SecurityLevel::Normal; k];
        for slot in levels.iter_mut().rev() {
            *slot = SecurityLevel::from_rank(index % 4).unwrap();
            index /= 4;
        }
        SystemState { levels, phase }
    }

    /// Concatenated level codes, e.g. `FNR`.
    pub fn code(&self) -> String {
        self.levels.iter().map(|z| z.code()).collect()
    }

    pub fn parse_code(code: &str, phase: Phase) -> Result<SystemState> {
        let levels = code
            .chars()
            .map(|c| {
                SecurityLevel::from_code(c)
                    .ok_or_else(|| Error::Parse(format!("unknown level code {c:?} in {code:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if levels.is_empty() {
            return Err(Error::Parse("empty state code".into()));
        }
        Ok(SystemState { levels, phase })
    }

    pub fn with_level(&self, computer: usize, level: SecurityLevel) -> SystemState {
        let mut levels = self.levels.clone();
        levels[computer - 1] = level;
        SystemState { levels, phase: self.phase }
    }

    pub fn with_phase(&self, phase: Phase) -> SystemState {
        SystemState { levels: self.levels.clone(), phase }
    }

    fn check_computer(&self, index: usize) -> Result<()> {
        if index == 0 || index > self.k() {
            return Err(Error::InvalidComputer { index, k: self.k() });
        }
        Ok(())
    }

    fn expect_phase(&self, expected: Phase) -> Result<()> {
        if self.phase != expected {
            return Err(Error::PhaseViolation { expected, actual: self.phase });
        }
        Ok(())
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

/// One attacker event. Admissible only at intermediate states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttackerEvent {
    /// No action; always admissible, never observed.
    Null,
    /// Push `computer` across security boundary `boundary` (1..=3). Only
    /// admissible when the computer sits exactly below that boundary; never
    /// observed by the defender.
    Boundary { computer: usize, boundary: usize },
    /// Use remote-compromised `source` to attack `target` over the network,
    /// leaving the target fully compromised. The one attacker event the
    /// defender observes.
    Network { source: usize, target: usize },
}

impl AttackerEvent {
    pub fn label(&self) -> String {
        match self {
            AttackerEvent::Null => "quiet".into(),
            AttackerEvent::Boundary { computer, boundary } => {
                format!("breach_{computer}_{boundary}")
            }
            AttackerEvent::Network { source, target } => format!("lateral_{source}_{target}"),
        }
    }

    pub fn parse_label(label: &str) -> Result<AttackerEvent> {
        let err = || Error::Parse(format!("unknown attacker event {label:?}"));
        if label == "quiet" {
            return Ok(AttackerEvent::Null);
        }
        if let Some(rest) = label.strip_prefix("breach_") {
            let (computer, boundary) = rest.split_once('_').ok_or_else(err)?;
            return Ok(AttackerEvent::Boundary {
                computer: computer.parse().map_err(|_| err())?,
                boundary: boundary.parse().map_err(|_| err())?,
            });
        }
        if let Some(rest) = label.strip_prefix("lateral_") {
            let (source, target) = rest.split_once('_').ok_or_else(err)?;
            return Ok(AttackerEvent::Network {
                source: source.parse().map_err(|_| err())?,
                target: target.parse().map_err(|_| err())?,
            });
        }
        Err(err())
    }
}

impl fmt::Display for AttackerEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Category of a defender action, ordered by cost (`Null < Sense < Reimage`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionKind {
    Null,
    Sense,
    Reimage,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionKind::Null => f.write_str("null"),
            ActionKind::Sense => f.write_str("sense"),
            ActionKind::Reimage => f.write_str("reimage"),
        }
    }
}

/// One defender action. Admissible at every decision state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DefenderAction {
    /// Do nothing.
    Null,
    /// Reveal the current level of the given computer (1-based); the system
    /// state is unchanged.
    Sense(usize),
    /// Restore the given computer to `Normal` from whatever level it is at.
    Reimage(usize),
}

impl DefenderAction {
    pub fn kind(&self) -> ActionKind {
        match self {
            DefenderAction::Null => ActionKind::Null,
            DefenderAction::Sense(_) => ActionKind::Sense,
            DefenderAction::Reimage(_) => ActionKind::Reimage,
        }
    }

    /// Targeted computer, if any.
    pub fn target(&self) -> Option<usize> {
        match self {
            DefenderAction::Null => None,
            DefenderAction::Sense(i) | DefenderAction::Reimage(i) => Some(*i),
        }
    }

    pub fn label(&self) -> String {
        match self {
            DefenderAction::Null => "idle".into(),
            DefenderAction::Sense(i) => format!("sense_{i}"),
            DefenderAction::Reimage(i) => format!("reimage_{i}"),
        }
    }

    pub fn parse_label(label: &str) -> Result<DefenderAction> {
        if label == "idle" {
            return Ok(DefenderAction::Null);
        }
        let err = || Error::Parse(format!("unknown defender action {label:?}"));
        if let Some(i) = label.strip_prefix("sense_") {
            return i.parse().map(DefenderAction::Sense).map_err(|_| err());
        }
        if let Some(i) = label.strip_prefix("reimage_") {
            return i.parse().map(DefenderAction::Reimage).map_err(|_| err());
        }
        Err(err())
    }

    /// The defender alphabet in canonical order: null, then sense by
    /// computer, then re-image by computer.
    pub fn alphabet(k: usize) -> Vec<DefenderAction> {
        let mut actions = Vec::with_capacity(1 + 2 * k);
        actions.push(DefenderAction::Null);
        actions.extend((1..=k).map(DefenderAction::Sense));
        actions.extend((1..=k).map(DefenderAction::Reimage));
        actions
    }
}

impl fmt::Display for DefenderAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// What the defender sees of the attacker's move: either the grouped
/// stand-in for everything it cannot observe, or a network attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttackObservation {
    /// Null or boundary attack happened; indistinguishable to the defender.
    Hidden,
    /// A network attack from `source` to `target` was detected.
    Network { source: usize, target: usize },
}

impl AttackObservation {
    pub fn label(&self) -> String {
        match self {
            AttackObservation::Hidden => "hidden".into(),
            AttackObservation::Network { source, target } => format!("lateral_{source}_{target}"),
        }
    }
}

impl fmt::Display for AttackObservation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Everything the defender learns in one time step: the sense reading (iff
/// the action taken was a sense) and the grouped attack observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Observation {
    pub attack: AttackObservation,
    pub sense_reading: Option<SecurityLevel>,
}

impl Observation {
    pub fn hidden(sense_reading: Option<SecurityLevel>) -> Observation {
        Observation { attack: AttackObservation::Hidden, sense_reading }
    }

    pub fn network(source: usize, target: usize, sense_reading: Option<SecurityLevel>) -> Observation {
        Observation { attack: AttackObservation::Network { source, target }, sense_reading }
    }
}

/// Model variation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelFlags {
    /// Whether a network attack may also hit a target that is already fully
    /// compromised (a no-op on the target's level). Default `true`.
    pub h_admissible_on_w: bool,
}

impl Default for ModelFlags {
    fn default() -> ModelFlags {
        ModelFlags { h_admissible_on_w: true }
    }
}

/// Per-step state costs, per-action costs, and the discount factor.
///
/// Invariants enforced at construction: level costs strictly increase with
/// the level, action costs satisfy `null < sense[i] < reimage[i]` for every
/// computer, and the discount lies in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    level_costs: [f64; 4],
    null_cost: f64,
    sense_costs: Vec<f64>,
    reimage_costs: Vec<f64>,
    beta: f64,
}

impl CostModel {
    pub fn new(
        level_costs: [f64; 4],
        null_cost: f64,
        sense_costs: Vec<f64>,
        reimage_costs: Vec<f64>,
        beta: f64,
    ) -> Result<CostModel> {
        let cm = CostModel { level_costs, null_cost, sense_costs, reimage_costs, beta };
        cm.validate()?;
        Ok(cm)
    }

    /// Cost model with the same sense and re-image cost on every computer.
    pub fn uniform(
        k: usize,
        level_costs: [f64; 4],
        null_cost: f64,
        sense_cost: f64,
        reimage_cost: f64,
        beta: f64,
    ) -> Result<CostModel> {
        CostModel::new(level_costs, null_cost, vec![sense_cost; k], vec![reimage_cost; k], beta)
    }

    fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let all_finite = self.level_costs.iter().all(|c| c.is_finite());
        if !all_finite || !(0.0 <= self.level_costs[0]) {
            problems.push("level costs must be finite and nonnegative".to_string());
        } else if !self.level_costs.windows(2).all(|w| w[0] < w[1]) {
            problems.push("level costs must strictly increase from normal to remote-compromised".to_string());
        }
        if self.sense_costs.len() != self.reimage_costs.len() || self.sense_costs.is_empty() {
            problems.push("sense and re-image cost lists must be nonempty and of equal length".to_string());
        } else {
            for (i, (&e, &r)) in self.sense_costs.iter().zip(&self.reimage_costs).enumerate() {
                if !(e.is_finite() && r.is_finite())
                    || !(0.0 <= self.null_cost && self.null_cost < e && e < r)
                {
                    problems.push(format!(
                        "action costs for computer {} must satisfy 0 <= null ({}) < sense ({e}) < reimage ({r})",
                        i + 1,
                        self.null_cost
                    ));
                }
            }
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            problems.push(format!("discount must lie strictly between 0 and 1, got {}", self.beta));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }

    pub fn k(&self) -> usize {
        self.sense_costs.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Per-step cost of one computer sitting at `level`.
    pub fn level_cost(&self, level: SecurityLevel) -> f64 {
        self.level_costs[level.rank()]
    }

    pub fn level_costs(&self) -> [f64; 4] {
        self.level_costs
    }

    /// Per-step cost of a network state: sum of the per-computer level costs.
    pub fn state_cost(&self, state: &SystemState) -> f64 {
        state.levels().iter().map(|&z| self.level_cost(z)).sum()
    }

    pub fn null_cost(&self) -> f64 {
        self.null_cost
    }

    pub fn sense_costs(&self) -> &[f64] {
        &self.sense_costs
    }

    pub fn reimage_costs(&self) -> &[f64] {
        &self.reimage_costs
    }

    pub fn action_cost(&self, action: DefenderAction) -> f64 {
        match action {
            DefenderAction::Null => self.null_cost,
            DefenderAction::Sense(i) => self.sense_costs[i - 1],
            DefenderAction::Reimage(i) => self.reimage_costs[i - 1],
        }
    }

    /// Same model with every re-image cost replaced by `r`.
    pub fn with_reimage_cost(&self, r: f64) -> Result<CostModel> {
        CostModel::new(
            self.level_costs,
            self.null_cost,
            self.sense_costs.clone(),
            vec![r; self.reimage_costs.len()],
            self.beta,
        )
    }

    /// Largest possible single-step cost: worst state plus priciest action.
    pub fn max_stage_cost(&self) -> f64 {
        let worst_state = self.level_costs[3] * self.k() as f64;
        let worst_action =
            self.reimage_costs.iter().copied().fold(self.null_cost, f64::max);
        worst_state + worst_action
    }

    /// Upper bound on any discounted value: `max_stage_cost / (1 - beta)`.
    pub fn value_bound(&self) -> f64 {
        self.max_stage_cost() / (1.0 - self.beta)
    }
}

/// Attacker events admissible at an intermediate state, in canonical order:
/// null first, then boundary attacks by (computer, boundary), then network
/// attacks by (source, target).
pub fn admissible_attacker(state: &SystemState, flags: ModelFlags) -> Result<Vec<AttackerEvent>> {
    state.expect_phase(Phase::Intermediate)?;
    let mut events = vec![AttackerEvent::Null];
    for (idx, z) in state.levels().iter().enumerate() {
        if z.rank() < 3 {
            events.push(AttackerEvent::Boundary { computer: idx + 1, boundary: z.rank() + 1 });
        }
    }
    for (s_idx, zs) in state.levels().iter().enumerate() {
        if *zs != SecurityLevel::RemoteCompromised {
            continue;
        }
        for (t_idx, zt) in state.levels().iter().enumerate() {
            if s_idx == t_idx {
                continue;
            }
            let targetable = match zt {
                SecurityLevel::Normal | SecurityLevel::Compromised => true,
                SecurityLevel::FullyCompromised => flags.h_admissible_on_w,
                SecurityLevel::RemoteCompromised => false,
            };
            if targetable {
                events.push(AttackerEvent::Network { source: s_idx + 1, target: t_idx + 1 });
            }
        }
    }
    Ok(events)
}

/// Applies one attacker event to an intermediate state, yielding the next
/// decision state. Errors if the event is not admissible there.
pub fn apply_attacker(
    state: &SystemState,
    event: AttackerEvent,
    flags: ModelFlags,
) -> Result<SystemState> {
    state.expect_phase(Phase::Intermediate)?;
    let inadmissible = || Error::Inadmissible { event: event.label(), state: state.code() };
    let next = match event {
        AttackerEvent::Null => state.clone(),
        AttackerEvent::Boundary { computer, boundary } => {
            state.check_computer(computer)?;
            if !(1..=3).contains(&boundary) || state.level_of(computer).rank() != boundary - 1 {
                return Err(inadmissible());
            }
            state.with_level(computer, SecurityLevel::from_rank(boundary).unwrap())
        }
        AttackerEvent::Network { source, target } => {
            state.check_computer(source)?;
            state.check_computer(target)?;
            if source == target || state.level_of(source) != SecurityLevel::RemoteCompromised {
                return Err(inadmissible());
            }
            let targetable = match state.level_of(target) {
                SecurityLevel::Normal | SecurityLevel::Compromised => true,
                SecurityLevel::FullyCompromised => flags.h_admissible_on_w,
                SecurityLevel::RemoteCompromised => false,
            };
            if !targetable {
                return Err(inadmissible());
            }
            state.with_level(target, SecurityLevel::FullyCompromised)
        }
    };
    Ok(next.with_phase(Phase::Decision))
}

/// Applies one defender action to a decision state, yielding the
/// intermediate state the attacker moves from. Every action is admissible at
/// every decision state; only re-image changes the levels.
pub fn apply_defender(state: &SystemState, action: DefenderAction) -> Result<SystemState> {
    state.expect_phase(Phase::Decision)?;
    let next = match action {
        DefenderAction::Null => state.clone(),
        DefenderAction::Sense(i) => {
            state.check_computer(i)?;
            state.clone()
        }
        DefenderAction::Reimage(i) => {
            state.check_computer(i)?;
            state.with_level(i, SecurityLevel::Normal)
        }
    };
    Ok(next.with_phase(Phase::Intermediate))
}

/// What the defender observes of an attacker event: network attacks are seen
/// as-is, everything else is the grouped hidden observation.
pub fn observe(event: AttackerEvent) -> AttackObservation {
    match event {
        AttackerEvent::Null | AttackerEvent::Boundary { .. } => AttackObservation::Hidden,
        AttackerEvent::Network { source, target } => AttackObservation::Network { source, target },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use SecurityLevel::*;

    fn cm2(r: f64) -> CostModel {
        CostModel::uniform(2, [0.0, 1.0, 2.0, 8.0], 0.0, 0.1, r, 0.9).unwrap()
    }

    fn inter(levels: &[SecurityLevel]) -> SystemState {
        SystemState::intermediate(levels.to_vec())
    }

    fn deci(levels: &[SecurityLevel]) -> SystemState {
        SystemState::decision(levels.to_vec())
    }

    #[test]
    fn level_costs_match_reference_parameters() {
        let cm = cm2(3.0);
        assert_eq!(cm.level_cost(Normal), 0.0);
        assert_eq!(cm.level_cost(Compromised), 1.0);
        assert_eq!(cm.level_cost(RemoteCompromised), 8.0);
    }

    #[test]
    fn state_cost_sums_components() {
        let cm = cm2(3.0);
        assert_eq!(cm.state_cost(&deci(&[Normal, Normal])), 0.0);
        assert_eq!(cm.state_cost(&deci(&[RemoteCompromised, RemoteCompromised])), 16.0);
        let cm3 = CostModel::uniform(3, [0.0, 1.0, 2.0, 8.0], 0.0, 0.1, 3.0, 0.9).unwrap();
        assert_eq!(cm3.state_cost(&deci(&[Normal, Compromised, FullyCompromised])), 3.0);
    }

    #[test]
    fn action_costs_match_reference_parameters() {
        let cm = cm2(3.0);
        assert_eq!(cm.action_cost(DefenderAction::Null), 0.0);
        assert_eq!(cm.action_cost(DefenderAction::Sense(2)), 0.1);
        assert_eq!(cm.action_cost(DefenderAction::Reimage(1)), 3.0);
    }

    #[test]
    fn cost_model_rejects_bad_orderings() {
        assert!(CostModel::uniform(2, [0.0, 1.0, 2.0, 1.5], 0.0, 0.1, 3.0, 0.9).is_err());
        assert!(CostModel::uniform(2, [0.0, 1.0, 2.0, 8.0], 0.0, 0.1, 0.05, 0.9).is_err());
        assert!(CostModel::uniform(2, [0.0, 1.0, 2.0, 8.0], 0.0, 0.1, 3.0, 1.0).is_err());
        assert!(CostModel::uniform(2, [0.0, 1.0, 2.0, 8.0], 0.2, 0.1, 3.0, 0.9).is_err());
    }

    #[test]
    fn admissible_attacker_from_all_normal() {
        let events = admissible_attacker(&inter(&[Normal, Normal]), ModelFlags::default()).unwrap();
        assert_eq!(
            events,
            vec![
                AttackerEvent::Null,
                AttackerEvent::Boundary { computer: 1, boundary: 1 },
                AttackerEvent::Boundary { computer: 2, boundary: 1 },
            ]
        );
    }

    #[test]
    fn network_attack_admissible_from_remote_compromise() {
        let events =
            admissible_attacker(&inter(&[RemoteCompromised, Normal]), ModelFlags::default())
                .unwrap();
        assert!(events.contains(&AttackerEvent::Network { source: 1, target: 2 }));
    }

    #[test]
    fn fully_lost_network_admits_only_null_without_w_targets() {
        let flags = ModelFlags { h_admissible_on_w: false };
        let events =
            admissible_attacker(&inter(&[RemoteCompromised, RemoteCompromised]), flags).unwrap();
        assert_eq!(events, vec![AttackerEvent::Null]);
    }

    #[test]
    fn network_attack_sets_target_fully_compromised() {
        let next = apply_attacker(
            &inter(&[RemoteCompromised, Normal]),
            AttackerEvent::Network { source: 1, target: 2 },
            ModelFlags::default(),
        )
        .unwrap();
        assert_eq!(next, deci(&[RemoteCompromised, FullyCompromised]));
    }

    #[test]
    fn boundary_attack_steps_one_level() {
        let next = apply_attacker(
            &inter(&[Normal, Compromised]),
            AttackerEvent::Boundary { computer: 1, boundary: 1 },
            ModelFlags::default(),
        )
        .unwrap();
        assert_eq!(next, deci(&[Compromised, Compromised]));
    }

    #[test]
    fn null_attack_is_identity() {
        let z = inter(&[RemoteCompromised, RemoteCompromised]);
        let next = apply_attacker(&z, AttackerEvent::Null, ModelFlags::default()).unwrap();
        assert_eq!(next, z.with_phase(Phase::Decision));
    }

    #[test]
    fn inadmissible_attack_is_rejected() {
        let err = apply_attacker(
            &inter(&[Normal, Normal]),
            AttackerEvent::Network { source: 1, target: 2 },
            ModelFlags::default(),
        );
        assert!(matches!(err, Err(Error::Inadmissible { .. })));
    }

    #[test]
    fn attacker_events_need_intermediate_phase() {
        let err = admissible_attacker(&deci(&[Normal]), ModelFlags::default());
        assert!(matches!(err, Err(Error::PhaseViolation { .. })));
    }

    #[test]
    fn reimage_resets_one_computer() {
        let next = apply_defender(
            &deci(&[Normal, Compromised, RemoteCompromised]),
            DefenderAction::Reimage(3),
        )
        .unwrap();
        assert_eq!(next, inter(&[Normal, Compromised, Normal]));
    }

    #[test]
    fn sense_and_null_leave_levels_alone() {
        let z = deci(&[RemoteCompromised, FullyCompromised]);
        let sensed = apply_defender(&z, DefenderAction::Sense(1)).unwrap();
        assert_eq!(sensed.levels(), z.levels());
        let idled = apply_defender(&deci(&[Normal, Normal]), DefenderAction::Null).unwrap();
        assert_eq!(idled, inter(&[Normal, Normal]));
    }

    #[test]
    fn observation_grouping() {
        assert_eq!(observe(AttackerEvent::Null), AttackObservation::Hidden);
        assert_eq!(
            observe(AttackerEvent::Boundary { computer: 2, boundary: 3 }),
            AttackObservation::Hidden
        );
        assert_eq!(
            observe(AttackerEvent::Network { source: 1, target: 2 }),
            AttackObservation::Network { source: 1, target: 2 }
        );
    }

    #[test]
    fn canonical_index_round_trips() {
        for idx in 0..64 {
            let z = SystemState::from_canonical_index(3, idx, Phase::Decision);
            assert_eq!(z.canonical_index(), idx);
        }
    }

    fn arb_level() -> impl Strategy<Value = SecurityLevel> {
        prop::sample::select(SecurityLevel::ALL.to_vec())
    }

    fn arb_intermediate(max_k: usize) -> impl Strategy<Value = SystemState> {
        prop::collection::vec(arb_level(), 1..=max_k).prop_map(SystemState::intermediate)
    }

    proptest! {
        #[test]
        fn damage_is_monotone(z in arb_intermediate(4), h_on_w in any::<bool>()) {
            let flags = ModelFlags { h_admissible_on_w: h_on_w };
            for event in admissible_attacker(&z, flags).unwrap() {
                let next = apply_attacker(&z, event, flags).unwrap();
                for (before, after) in z.levels().iter().zip(next.levels()) {
                    prop_assert!(after >= before);
                }
            }
        }

        #[test]
        fn boundary_attack_raises_exactly_one_component(z in arb_intermediate(4)) {
            let flags = ModelFlags::default();
            for event in admissible_attacker(&z, flags).unwrap() {
                if let AttackerEvent::Boundary { computer, .. } = event {
                    let next = apply_attacker(&z, event, flags).unwrap();
                    prop_assert_eq!(next.level_of(computer).rank(), z.level_of(computer).rank() + 1);
                    for i in 1..=z.k() {
                        if i != computer {
                            prop_assert_eq!(next.level_of(i), z.level_of(i));
                        }
                    }
                    // admissible from exactly one level: re-applying after the step must fail
                    let again = apply_attacker(&next.with_phase(Phase::Intermediate), event, flags);
                    prop_assert!(again.is_err());
                }
            }
        }

        #[test]
        fn reimage_resets_only_its_target(z in arb_intermediate(4).prop_map(|z| z.with_phase(Phase::Decision)), i in 1usize..=4) {
            prop_assume!(i <= z.k());
            let next = apply_defender(&z, DefenderAction::Reimage(i)).unwrap();
            prop_assert_eq!(next.level_of(i), Normal);
            for j in 1..=z.k() {
                if j != i {
                    prop_assert_eq!(next.level_of(j), z.level_of(j));
                }
            }
        }

        #[test]
        fn state_cost_strictly_increases_with_any_component(z in arb_intermediate(4), i in 1usize..=4) {
            prop_assume!(i <= z.k());
            let cm = CostModel::uniform(z.k(), [0.0, 1.0, 2.0, 8.0], 0.0, 0.1, 3.0, 0.9).unwrap();
            let rank = z.level_of(i).rank();
            prop_assume!(rank < 3);
            let raised = z.with_level(i, SecurityLevel::from_rank(rank + 1).unwrap());
            prop_assert!(cm.state_cost(&raised) > cm.state_cost(&z));
        }

        #[test]
        fn observe_is_total_and_marks_exactly_network_attacks(z in arb_intermediate(4)) {
            for event in admissible_attacker(&z, ModelFlags::default()).unwrap() {
                let obs = observe(event);
                match event {
                    AttackerEvent::Network { source, target } => {
                        prop_assert_eq!(obs, AttackObservation::Network { source, target });
                    }
                    _ => prop_assert_eq!(obs, AttackObservation::Hidden),
                }
            }
        }
    }
}
