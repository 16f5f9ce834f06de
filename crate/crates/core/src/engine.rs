//! Per-node RuleEngine: resource allocation, rule firing, outcome-message
//! pairing, lock resolution, promotion and termination.
//!
//! Each node runs one engine over its copy of the RuleSet. New resources
//! enter the first Rule's list; a resource must pass a Rule before being
//! reassigned to the next. Rules are re-evaluated top-down after every
//! state change, firing at most one action per pass so traces stay
//! deterministic. A purified pair stays locked until the partner's
//! outcome message resolves its verdict; both nodes derive the same
//! verdict from the same exchanged data.

use std::collections::{BTreeSet, HashMap};

use crate::qstate::{NodeRngs, PairId, PairResolution, QubitRegistry};
use crate::ruleset::{
    execute_purification, execute_tomography, verdict, Action, OutcomeMessage, RuleSet,
};
use crate::simcore::event::{NodeId, SimTime};
use crate::tomography::TomographyAccumulator;

/// Pending-record key: uniquely pairs the two nodes' firings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PendingKey {
    pub ruleset_id: u64,
    pub rule_id: u32,
    pub action_index: u64,
}

/// One locally fired action awaiting the partner's outcomes.
#[derive(Debug, Clone)]
pub struct PendingRecord {
    pub outcomes: Vec<(i8, crate::qstate::Basis)>,
    /// Locked kept pair for purification firings; none for tomography.
    pub kept: Option<PairId>,
}

/// Side effects of processing one event, handed back to the driver.
#[derive(Debug, Default)]
pub struct EngineEffects {
    pub messages: Vec<OutcomeMessage>,
    /// Ground-truth records for pairs fully measured by tomography.
    pub resolutions: Vec<PairResolution>,
    /// Set when this engine's termination condition was reached during
    /// the processing.
    pub terminated_now: bool,
    /// Structured trace lines (rule firings and verdicts).
    pub trace: Vec<String>,
}

/// Event-driven rule engine state for one node.
#[derive(Debug)]
pub struct RuleEngine {
    node: NodeId,
    ruleset: Option<RuleSet>,
    /// Per-rule allocated resources, ordered oldest first. Ties on the
    /// shared entanglement time break on the shared pair id, so both
    /// nodes order identically.
    allocated: Vec<BTreeSet<(SimTime, PairId)>>,
    /// Resources that arrived with no RuleSet installed yet.
    unassigned: BTreeSet<(SimTime, PairId)>,
    pending: HashMap<PendingKey, PendingRecord>,
    /// Partner outcomes that arrived before the local firing.
    early: HashMap<PendingKey, Vec<(i8, crate::qstate::Basis)>>,
    accumulator: TomographyAccumulator,
    terminated: bool,
    /// Messages dropped for carrying an unknown RuleSet identifier.
    pub unknown_ruleset_drops: u64,
}

impl RuleEngine {
    pub fn new(node: NodeId) -> Self {
        Self {
            node,
            ruleset: None,
            allocated: Vec::new(),
            unassigned: BTreeSet::new(),
            pending: HashMap::new(),
            early: HashMap::new(),
            accumulator: TomographyAccumulator::new(),
            terminated: false,
            unknown_ruleset_drops: 0,
        }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn accumulator(&self) -> &TomographyAccumulator {
        &self.accumulator
    }

    pub fn terminated(&self) -> bool {
        self.terminated
    }

    pub fn measurements_recorded(&self) -> u64 {
        self.accumulator.total()
    }

    /// Installs the RuleSet and drains any pooled resources into its
    /// first Rule.
    pub fn install_ruleset(&mut self, ruleset: RuleSet) {
        self.allocated = vec![BTreeSet::new(); ruleset.rules.len()];
        self.ruleset = Some(ruleset);
        if let Some(rule0) = self.allocated.first_mut() {
            rule0.append(&mut self.unassigned);
        }
    }

    pub fn ruleset(&self) -> Option<&RuleSet> {
        self.ruleset.as_ref()
    }

    /// Newly acknowledged resources always enter the first Rule.
    pub fn on_new_resource(&mut self, pair: PairId, entangled_at: SimTime) {
        if self.ruleset.is_none() || self.terminated {
            self.unassigned.insert((entangled_at, pair));
            return;
        }
        self.allocated[0].insert((entangled_at, pair));
    }

    /// Count of this rule's resources whose local half is not locked.
    fn free_in_rule(&self, registry: &QubitRegistry, rule_idx: usize) -> usize {
        self.allocated[rule_idx]
            .iter()
            .filter(|(_, id)| !registry.is_locked(*id, self.node))
            .count()
    }

    fn select_free(
        &self,
        registry: &QubitRegistry,
        rule_idx: usize,
        count: usize,
    ) -> Vec<(SimTime, PairId)> {
        self.allocated[rule_idx]
            .iter()
            .filter(|(_, id)| !registry.is_locked(*id, self.node))
            .take(count)
            .copied()
            .collect()
    }

    /// Re-evaluates all rules top-down, firing one action per pass until
    /// nothing is fireable.
    pub fn evaluate(
        &mut self,
        registry: &mut QubitRegistry,
        rngs: &mut NodeRngs,
        now: SimTime,
        effects: &mut EngineEffects,
    ) {
        if self.ruleset.is_none() {
            return;
        }
        loop {
            if self.terminated {
                return;
            }
            let fired = self.fire_first_ready(registry, rngs, now, effects);
            if !fired {
                return;
            }
        }
    }

    fn fire_first_ready(
        &mut self,
        registry: &mut QubitRegistry,
        rngs: &mut NodeRngs,
        now: SimTime,
        effects: &mut EngineEffects,
    ) -> bool {
        let n_rules = self.ruleset.as_ref().unwrap().rules.len();
        for idx in 0..n_rules {
            let free = self.free_in_rule(registry, idx);
            let ruleset = self.ruleset.as_ref().unwrap();
            let rule = &ruleset.rules[idx];
            if !rule.condition_met(free) {
                continue;
            }
            match rule.action {
                Action::Purify { method, phase } => {
                    self.fire_purify(registry, rngs, now, idx, method, phase, effects);
                }
                Action::Tomography => {
                    self.fire_tomography(registry, rngs, now, idx, effects);
                }
            }
            return true;
        }
        false
    }

    #[allow(clippy::too_many_arguments)]
    fn fire_purify(
        &mut self,
        registry: &mut QubitRegistry,
        rngs: &mut NodeRngs,
        now: SimTime,
        rule_idx: usize,
        method: crate::ruleset::PurifyMethod,
        phase: crate::ruleset::RoundPhase,
        effects: &mut EngineEffects,
    ) {
        let selected = self.select_free(registry, rule_idx, method.resources_required());
        let resources: Vec<PairId> = selected.iter().map(|(_, id)| *id).collect();

        let (ruleset_id, partner, action_index) = {
            let ruleset = self.ruleset.as_mut().unwrap();
            let rule = &mut ruleset.rules[rule_idx];
            let ai = rule.action_index;
            rule.action_index += 1;
            (ruleset.ruleset_id, rule.partner, ai)
        };
        let key = PendingKey {
            ruleset_id,
            rule_id: rule_idx as u32,
            action_index,
        };

        let firing =
            execute_purification(registry, self.node, method, phase, &resources, now, rngs);
        registry.lock_side(firing.kept, self.node, ruleset_id, key.rule_id, action_index);
        // Sacrificed halves were measured and released; drop them from
        // the rule's list. The kept pair stays listed but locked.
        for entry in &selected {
            if entry.1 != firing.kept {
                self.allocated[rule_idx].remove(entry);
            }
        }
        effects.trace.push(format!(
            "node={} fire rule={} idx={} {} {:?} kept={} consumed={:?}",
            self.node.0,
            key.rule_id,
            action_index,
            method.name(),
            phase,
            firing.kept.0,
            firing.sacrificed.iter().map(|p| p.0).collect::<Vec<_>>(),
        ));
        effects.messages.push(OutcomeMessage {
            source: self.node,
            destination: partner,
            ruleset_id,
            rule_id: key.rule_id,
            action_index,
            outcomes: firing.outcomes.clone(),
        });
        let record = PendingRecord {
            outcomes: firing.outcomes,
            kept: Some(firing.kept),
        };
        assert!(
            self.pending.insert(key, record).is_none(),
            "duplicate pending record for {key:?}"
        );
        if let Some(remote) = self.early.remove(&key) {
            self.resolve(registry, key, &remote, effects);
        }
    }

    fn fire_tomography(
        &mut self,
        registry: &mut QubitRegistry,
        rngs: &mut NodeRngs,
        now: SimTime,
        rule_idx: usize,
        effects: &mut EngineEffects,
    ) {
        let selected = self.select_free(registry, rule_idx, 1);
        let entry = selected[0];

        let (ruleset_id, partner, action_index) = {
            let ruleset = self.ruleset.as_mut().unwrap();
            let rule = &mut ruleset.rules[rule_idx];
            let ai = rule.action_index;
            rule.action_index += 1;
            rule.record_measurement();
            ruleset.termination.current_measurements += 1;
            (ruleset.ruleset_id, rule.partner, ai)
        };
        let key = PendingKey {
            ruleset_id,
            rule_id: rule_idx as u32,
            action_index,
        };

        let (outcome, basis, resolution) =
            execute_tomography(registry, self.node, entry.1, now, rngs);
        self.allocated[rule_idx].remove(&entry);
        effects.trace.push(format!(
            "node={} fire rule={} idx={} tomography pair={} basis={}",
            self.node.0,
            key.rule_id,
            action_index,
            entry.1 .0,
            basis.letter(),
        ));
        if let Some(r) = resolution {
            effects.resolutions.push(r);
        }
        effects.messages.push(OutcomeMessage {
            source: self.node,
            destination: partner,
            ruleset_id,
            rule_id: key.rule_id,
            action_index,
            outcomes: vec![(outcome, basis)],
        });
        let record = PendingRecord {
            outcomes: vec![(outcome, basis)],
            kept: None,
        };
        assert!(
            self.pending.insert(key, record).is_none(),
            "duplicate pending record for {key:?}"
        );
        if let Some(remote) = self.early.remove(&key) {
            self.resolve(registry, key, &remote, effects);
        }
        if self.ruleset.as_ref().unwrap().termination.satisfied() {
            self.terminated = true;
            effects.terminated_now = true;
            effects
                .trace
                .push(format!("node={} ruleset terminated", self.node.0));
        }
    }

    /// Handles an incoming outcome message; buffers it if the matching
    /// local firing has not happened yet.
    pub fn on_message(
        &mut self,
        msg: &OutcomeMessage,
        registry: &mut QubitRegistry,
        effects: &mut EngineEffects,
    ) {
        let known = self
            .ruleset
            .as_ref()
            .is_some_and(|rs| rs.ruleset_id == msg.ruleset_id);
        if !known {
            self.unknown_ruleset_drops += 1;
            return;
        }
        let key = PendingKey {
            ruleset_id: msg.ruleset_id,
            rule_id: msg.rule_id,
            action_index: msg.action_index,
        };
        if self.pending.contains_key(&key) {
            let remote = msg.outcomes.clone();
            self.resolve(registry, key, &remote, effects);
        } else {
            self.early.insert(key, msg.outcomes.clone());
        }
    }

    /// Exactly-once resolution of a pending record against the partner's
    /// outcomes.
    fn resolve(
        &mut self,
        registry: &mut QubitRegistry,
        key: PendingKey,
        remote: &[(i8, crate::qstate::Basis)],
        effects: &mut EngineEffects,
    ) {
        let record = self.pending.remove(&key).expect("pending record vanished");
        match record.kept {
            Some(kept) => {
                let pass = verdict(&record.outcomes, remote);
                let rule_idx = key.rule_id as usize;
                let entry = self.allocated[rule_idx]
                    .iter()
                    .find(|(_, id)| *id == kept)
                    .copied()
                    .expect("kept pair missing from its rule list");
                self.allocated[rule_idx].remove(&entry);
                effects.trace.push(format!(
                    "node={} verdict rule={} idx={} pair={} pass={}",
                    self.node.0, key.rule_id, key.action_index, kept.0, pass
                ));
                if pass {
                    registry.unlock_side(kept, self.node);
                    self.allocated[rule_idx + 1].insert(entry);
                } else {
                    registry.release_side(kept, self.node);
                }
            }
            None => {
                // Tomography: join the two halves into one record, own
                // outcome first.
                let (own_outcome, own_basis) = record.outcomes[0];
                let (remote_outcome, remote_basis) = remote[0];
                self.accumulator
                    .record((own_basis, remote_basis), (own_outcome, remote_outcome));
            }
        }
    }

    /// Lifecycle audit: every allocated resource must hold a live local
    /// half, and pending kept pairs must be locked.
    pub fn audit(&self, registry: &QubitRegistry) {
        for (idx, list) in self.allocated.iter().enumerate() {
            for (_, id) in list {
                assert!(
                    registry.pair_exists(*id),
                    "node {} rule {idx} lists dead pair {id:?}",
                    self.node.0
                );
            }
        }
        for (key, record) in &self.pending {
            if let Some(kept) = record.kept {
                assert!(
                    registry.is_locked(kept, self.node),
                    "node {} pending {key:?} kept pair not locked",
                    self.node.0
                );
            }
        }
    }
}
