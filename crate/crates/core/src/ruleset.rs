//! The protocol data model: RuleSets, Rules, Clauses and Actions, plus the
//! local execution of purification and tomography actions.
//!
//! A RuleSet is distributed to both nodes at connection setup. Each Rule
//! pairs a Condition (a conjunction of Clauses) with an Action; the engine
//! fires a Rule whenever its Condition holds over the resources currently
//! allocated to it. Actions consume Bell pairs, lock the kept pair until
//! the partner's measurement outcomes arrive, and emit one classical
//! message keyed by (ruleset, rule, action index) so the receiving node
//! can pair it with its own record.

use rand::Rng;
use thiserror::Error;

use crate::qstate::{Basis, NodeRngs, PairId, QubitRegistry};
use crate::simcore::event::{NodeId, SimTime};

#[derive(Debug, Error, PartialEq)]
pub enum RulesetError {
    #[error("unknown purification type id {0}")]
    UnknownPurificationType(i64),
    #[error("ruleset text is malformed at line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// The four purification circuits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PurifyMethod {
    /// Single selection, single error.
    SsSp,
    /// Single selection, double error.
    SsDp,
    /// Double selection, single error.
    DsSp,
    /// Double selection, double error.
    DsDp,
}

impl PurifyMethod {
    /// Bell pairs consumed per firing, including the pair that survives.
    pub fn resources_required(self) -> usize {
        match self {
            PurifyMethod::SsSp => 2,
            PurifyMethod::SsDp => 3,
            PurifyMethod::DsSp => 3,
            PurifyMethod::DsDp => 5,
        }
    }

    /// Numeric protocol identifier used in configuration files. 3003 is
    /// the alternating single-selection single-error protocol; the other
    /// three follow the same doubled-digit pattern.
    pub fn type_id(self) -> i64 {
        match self {
            PurifyMethod::SsSp => 3003,
            PurifyMethod::SsDp => 4004,
            PurifyMethod::DsSp => 5005,
            PurifyMethod::DsDp => 6006,
        }
    }

    pub fn from_type_id(id: i64) -> Result<Self, RulesetError> {
        match id {
            3003 => Ok(PurifyMethod::SsSp),
            4004 => Ok(PurifyMethod::SsDp),
            5005 => Ok(PurifyMethod::DsSp),
            6006 => Ok(PurifyMethod::DsDp),
            other => Err(RulesetError::UnknownPurificationType(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PurifyMethod::SsSp => "Ss-Sp",
            PurifyMethod::SsDp => "Ss-Dp",
            PurifyMethod::DsSp => "Ds-Sp",
            PurifyMethod::DsDp => "Ds-Dp",
        }
    }
}

/// Which error kind a purification round attacks first. Rounds alternate
/// so that the errors one round injects are what the next round detects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundPhase {
    /// Detect bit flips; double-error circuits run the X stage first.
    X,
    /// The dual circuit with the sacrificial measurement path conjugated
    /// by H, detecting phase flips; double-error circuits run Z first.
    Z,
}

impl RoundPhase {
    pub fn for_round(round: u32) -> RoundPhase {
        if round.is_multiple_of(2) {
            RoundPhase::X
        } else {
            RoundPhase::Z
        }
    }
}

/// A conditional statement inside a Rule's Condition.
#[derive(Debug, Clone, PartialEq)]
pub enum Clause {
    /// Enough unlocked resources are allocated to the Rule.
    ResourceCondition { num_required: usize },
    /// Not enough measurements have been recorded yet; also drives the
    /// RuleSet's termination once the target is reached.
    MeasurementCondition { num_required: u64, num_current: u64 },
}

/// What a Rule does when its Condition holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Purify { method: PurifyMethod, phase: RoundPhase },
    Tomography,
}

impl Action {
    pub fn resources_required(self) -> usize {
        match self {
            Action::Purify { method, .. } => method.resources_required(),
            Action::Tomography => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub rule_id: u32,
    pub partner: NodeId,
    pub condition: Vec<Clause>,
    pub action: Action,
    /// Incremented exactly once per firing; pairs the two nodes' records.
    pub action_index: u64,
}

impl Rule {
    /// Conjunction over the clauses. Resource clauses count only unlocked
    /// resources; the measurement clause goes false once satisfied.
    pub fn condition_met(&self, free_resources: usize) -> bool {
        self.condition.iter().all(|c| match c {
            Clause::ResourceCondition { num_required } => free_resources >= *num_required,
            Clause::MeasurementCondition {
                num_required,
                num_current,
            } => num_current < num_required,
        })
    }

    pub fn record_measurement(&mut self) {
        for c in &mut self.condition {
            if let Clause::MeasurementCondition { num_current, .. } = c {
                *num_current += 1;
            }
        }
    }
}

/// Counter-based termination: the RuleSet is discarded once enough
/// tomography measurements have been performed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminationCondition {
    pub required_measurements: u64,
    pub current_measurements: u64,
}

impl TerminationCondition {
    pub fn satisfied(&self) -> bool {
        self.current_measurements >= self.required_measurements
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleSet {
    pub ruleset_id: u64,
    pub owner_addr: NodeId,
    pub rules: Vec<Rule>,
    pub termination: TerminationCondition,
}

/// Hash of generation time, node address and a random word. Connections
/// are distinguished by this identifier, so collisions must be negligible
/// at 64 bits.
pub fn generate_ruleset_id(wall_time_ns: u64, node_addr: NodeId, random: u64) -> u64 {
    // splitmix64 finalizer over the three words.
    let mut h = wall_time_ns
        .wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(node_addr.0 as u64)
        .wrapping_add(random.rotate_left(17));
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^= h >> 31;
    h
}

/// Per-round method selection for the recurrence protocol, with an
/// optional mid-protocol switch (run one method for the first rounds,
/// then change to another).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PurificationSchedule {
    pub base: PurifyMethod,
    pub switch: Option<(u32, PurifyMethod)>,
}

impl PurificationSchedule {
    pub fn uniform(method: PurifyMethod) -> Self {
        Self {
            base: method,
            switch: None,
        }
    }

    pub fn method_for_round(&self, round: u32) -> PurifyMethod {
        match self.switch {
            Some((at, m)) if round >= at => m,
            _ => self.base,
        }
    }
}

/// Builds the bootstrap RuleSet: `n_rounds` purification Rules with
/// alternating phases, then a tomography Rule whose measurement counter
/// doubles as the termination condition. Called once per node with the
/// shared ruleset id; the two copies mirror each other.
pub fn build_bootstrap_ruleset(
    ruleset_id: u64,
    n_rounds: u32,
    schedule: PurificationSchedule,
    num_measure: u64,
    owner: NodeId,
) -> RuleSet {
    let partner = owner.other();
    let mut rules = Vec::with_capacity(n_rounds as usize + 1);
    for round in 0..n_rounds {
        let method = schedule.method_for_round(round);
        rules.push(Rule {
            rule_id: round,
            partner,
            condition: vec![Clause::ResourceCondition {
                num_required: method.resources_required(),
            }],
            action: Action::Purify {
                method,
                phase: RoundPhase::for_round(round),
            },
            action_index: 0,
        });
    }
    rules.push(Rule {
        rule_id: n_rounds,
        partner,
        condition: vec![
            Clause::ResourceCondition { num_required: 1 },
            Clause::MeasurementCondition {
                num_required: num_measure,
                num_current: 0,
            },
        ],
        action: Action::Tomography,
        action_index: 0,
    });
    RuleSet {
        ruleset_id,
        owner_addr: owner,
        rules,
        termination: TerminationCondition {
            required_measurements: num_measure,
            current_measurements: 0,
        },
    }
}

/// Classical packet carrying one firing's measurement outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeMessage {
    pub source: NodeId,
    pub destination: NodeId,
    pub ruleset_id: u64,
    pub rule_id: u32,
    pub action_index: u64,
    pub outcomes: Vec<(i8, Basis)>,
}

impl std::fmt::Display for OutcomeMessage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "outcome src={} dst={} ruleset={:#018x} rule={} action={}",
            self.source.0, self.destination.0, self.ruleset_id, self.rule_id, self.action_index
        )?;
        for (o, b) in &self.outcomes {
            write!(f, " {}{}", if *o > 0 { '+' } else { '-' }, b.letter())?;
        }
        Ok(())
    }
}

/// One local gate of a purification circuit, indexing into the firing's
/// resource list (0 is the kept pair).
#[derive(Debug, Clone, Copy)]
enum CircuitOp {
    Cnot { control: usize, target: usize },
    H(usize),
    MeasureZ(usize),
}

/// Local circuit for a method and phase. Every measurement is along Z;
/// X-basis comparisons appear as an H on the measured pair's path.
fn circuit(method: PurifyMethod, phase: RoundPhase) -> &'static [CircuitOp] {
    use CircuitOp::*;
    match (method, phase) {
        (PurifyMethod::SsSp, RoundPhase::X) => &[Cnot { control: 0, target: 1 }, MeasureZ(1)],
        (PurifyMethod::SsSp, RoundPhase::Z) => {
            &[Cnot { control: 1, target: 0 }, H(1), MeasureZ(1)]
        }
        (PurifyMethod::DsSp, RoundPhase::X) => &[
            Cnot { control: 0, target: 1 },
            Cnot { control: 2, target: 1 },
            H(2),
            MeasureZ(1),
            MeasureZ(2),
        ],
        (PurifyMethod::DsSp, RoundPhase::Z) => &[
            Cnot { control: 1, target: 0 },
            Cnot { control: 1, target: 2 },
            H(1),
            MeasureZ(1),
            MeasureZ(2),
        ],
        (PurifyMethod::SsDp, RoundPhase::X) => &[
            Cnot { control: 0, target: 1 },
            MeasureZ(1),
            Cnot { control: 2, target: 0 },
            H(2),
            MeasureZ(2),
        ],
        (PurifyMethod::SsDp, RoundPhase::Z) => &[
            Cnot { control: 1, target: 0 },
            H(1),
            MeasureZ(1),
            Cnot { control: 0, target: 2 },
            MeasureZ(2),
        ],
        (PurifyMethod::DsDp, RoundPhase::X) => &[
            Cnot { control: 0, target: 1 },
            Cnot { control: 2, target: 1 },
            H(2),
            MeasureZ(1),
            MeasureZ(2),
            Cnot { control: 3, target: 0 },
            Cnot { control: 3, target: 4 },
            H(3),
            MeasureZ(3),
            MeasureZ(4),
        ],
        (PurifyMethod::DsDp, RoundPhase::Z) => &[
            Cnot { control: 1, target: 0 },
            Cnot { control: 1, target: 2 },
            H(1),
            MeasureZ(1),
            MeasureZ(2),
            Cnot { control: 0, target: 3 },
            Cnot { control: 4, target: 3 },
            H(4),
            MeasureZ(3),
            MeasureZ(4),
        ],
    }
}

/// Outcome of one node's local purification firing.
#[derive(Debug, Clone)]
pub struct PurifyFiring {
    pub kept: PairId,
    pub sacrificed: Vec<PairId>,
    /// Reported outcomes, in circuit measurement order.
    pub outcomes: Vec<(i8, Basis)>,
}

/// Runs one purification circuit on this node's halves. `resources` is
/// the role-ordered selection, oldest first; index 0 survives. Every
/// involved half is re-evolved to `now` before the first gate touches it.
pub fn execute_purification(
    registry: &mut QubitRegistry,
    node: NodeId,
    method: PurifyMethod,
    phase: RoundPhase,
    resources: &[PairId],
    now: SimTime,
    rngs: &mut NodeRngs,
) -> PurifyFiring {
    assert_eq!(resources.len(), method.resources_required());
    for &id in resources {
        registry.refresh(id, node, now, &mut rngs.memory);
    }
    let mut outcomes = Vec::new();
    let mut sacrificed = Vec::new();
    for op in circuit(method, phase) {
        match *op {
            CircuitOp::Cnot { control, target } => {
                registry.propagate_cnot(
                    resources[control],
                    resources[target],
                    node,
                    &mut rngs.gates,
                );
            }
            CircuitOp::H(i) => registry.propagate_h(resources[i], node, &mut rngs.gates),
            CircuitOp::MeasureZ(i) => {
                let (reported, _) =
                    registry.measure_pauli_frame(resources[i], node, Basis::Z, now, rngs);
                outcomes.push((reported, Basis::Z));
                sacrificed.push(resources[i]);
            }
        }
    }
    PurifyFiring {
        kept: resources[0],
        sacrificed,
        outcomes,
    }
}

/// Runs one tomography firing: a uniformly random basis and a density
/// measurement of this node's half.
pub fn execute_tomography(
    registry: &mut QubitRegistry,
    node: NodeId,
    resource: PairId,
    now: SimTime,
    rngs: &mut NodeRngs,
) -> (i8, Basis, Option<crate::qstate::PairResolution>) {
    let basis = Basis::ALL[rngs.basis.gen_range(0..3)];
    let (outcome, resolution) = registry.measure_density(resource, node, basis, now, rngs);
    (outcome, basis, resolution)
}

/// Keep/discard decision: every local outcome must coincide with the
/// partner's, position by position. Both nodes evaluate the same data and
/// reach the same verdict.
pub fn verdict(local: &[(i8, Basis)], remote: &[(i8, Basis)]) -> bool {
    local.len() == remote.len()
        && local
            .iter()
            .zip(remote.iter())
            .all(|((lo, lb), (ro, rb))| lo == ro && lb == rb)
}

/// Canonical text dump, one `key = value` line per field. `load_ruleset`
/// parses the same layout back.
pub fn dump_ruleset(rs: &RuleSet) -> String {
    let mut out = String::new();
    out.push_str(&format!("ruleset.id = {:#018x}\n", rs.ruleset_id));
    out.push_str(&format!("ruleset.owner = {}\n", rs.owner_addr.0));
    out.push_str(&format!(
        "ruleset.termination.measurements = {}\n",
        rs.termination.required_measurements
    ));
    for rule in &rs.rules {
        let tag = format!("rule.{}", rule.rule_id);
        out.push_str(&format!("{tag}.partner = {}\n", rule.partner.0));
        for clause in &rule.condition {
            match clause {
                Clause::ResourceCondition { num_required } => {
                    out.push_str(&format!("{tag}.clause.resources = {num_required}\n"));
                }
                Clause::MeasurementCondition { num_required, .. } => {
                    out.push_str(&format!("{tag}.clause.measurements = {num_required}\n"));
                }
            }
        }
        let action = match rule.action {
            Action::Purify { method, phase } => format!(
                "purify {} {}",
                method.name(),
                match phase {
                    RoundPhase::X => "X",
                    RoundPhase::Z => "Z",
                }
            ),
            Action::Tomography => "tomography".to_string(),
        };
        out.push_str(&format!("{tag}.action = {action}\n"));
    }
    out
}

pub fn load_ruleset(text: &str) -> Result<RuleSet, RulesetError> {
    let mut ruleset_id = None;
    let mut owner = None;
    let mut measurements = None;
    let mut rules: Vec<Rule> = Vec::new();

    let malformed = |line: usize, reason: &str| RulesetError::Malformed {
        line,
        reason: reason.to_string(),
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| malformed(idx + 1, "missing '='"))?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "ruleset.id" => {
                let hex = value.trim_start_matches("0x");
                ruleset_id =
                    Some(u64::from_str_radix(hex, 16).map_err(|_| malformed(idx + 1, "bad id"))?);
            }
            "ruleset.owner" => {
                owner = Some(NodeId(
                    value.parse().map_err(|_| malformed(idx + 1, "bad owner"))?,
                ));
            }
            "ruleset.termination.measurements" => {
                measurements = Some(
                    value
                        .parse()
                        .map_err(|_| malformed(idx + 1, "bad measurement count"))?,
                );
            }
            k if k.starts_with("rule.") => {
                let mut parts = k.splitn(3, '.');
                parts.next();
                let rule_id: u32 = parts
                    .next()
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| malformed(idx + 1, "bad rule id"))?;
                let field = parts
                    .next()
                    .ok_or_else(|| malformed(idx + 1, "missing rule field"))?;
                if rules.len() <= rule_id as usize {
                    rules.resize(
                        rule_id as usize + 1,
                        Rule {
                            rule_id: 0,
                            partner: NodeId(0),
                            condition: Vec::new(),
                            action: Action::Tomography,
                            action_index: 0,
                        },
                    );
                    for (i, r) in rules.iter_mut().enumerate() {
                        r.rule_id = i as u32;
                    }
                }
                let rule = &mut rules[rule_id as usize];
                match field {
                    "partner" => {
                        rule.partner = NodeId(
                            value
                                .parse()
                                .map_err(|_| malformed(idx + 1, "bad partner"))?,
                        )
                    }
                    "clause.resources" => rule.condition.push(Clause::ResourceCondition {
                        num_required: value
                            .parse()
                            .map_err(|_| malformed(idx + 1, "bad clause"))?,
                    }),
                    "clause.measurements" => rule.condition.push(Clause::MeasurementCondition {
                        num_required: value
                            .parse()
                            .map_err(|_| malformed(idx + 1, "bad clause"))?,
                        num_current: 0,
                    }),
                    "action" => {
                        rule.action = if value == "tomography" {
                            Action::Tomography
                        } else {
                            let mut words = value.split_whitespace();
                            if words.next() != Some("purify") {
                                return Err(malformed(idx + 1, "unknown action"));
                            }
                            let method = match words.next() {
                                Some("Ss-Sp") => PurifyMethod::SsSp,
                                Some("Ss-Dp") => PurifyMethod::SsDp,
                                Some("Ds-Sp") => PurifyMethod::DsSp,
                                Some("Ds-Dp") => PurifyMethod::DsDp,
                                _ => return Err(malformed(idx + 1, "unknown method")),
                            };
                            let phase = match words.next() {
                                Some("X") => RoundPhase::X,
                                Some("Z") => RoundPhase::Z,
                                _ => return Err(malformed(idx + 1, "unknown phase")),
                            };
                            Action::Purify { method, phase }
                        }
                    }
                    other => return Err(malformed(idx + 1, &format!("unknown field {other}"))),
                }
            }
            other => return Err(malformed(idx + 1, &format!("unknown key {other}"))),
        }
    }
    Ok(RuleSet {
        ruleset_id: ruleset_id.ok_or_else(|| malformed(0, "missing ruleset.id"))?,
        owner_addr: owner.ok_or_else(|| malformed(0, "missing ruleset.owner"))?,
        rules,
        termination: TerminationCondition {
            required_measurements: measurements
                .ok_or_else(|| malformed(0, "missing termination"))?,
            current_measurements: 0,
        },
    })
}
