//! One simulation trial: installs the RuleSets, drives entanglement
//! generation and the two rule engines through the event queue until the
//! tomography target is met or the RuleSet times out, then reconstructs
//! the density matrix and packages the outputs.
//!
//! One generation cycle is four classical legs plus the burst itself:
//! the analyzer's timing notification reaches the nodes, photons fly to
//! the analyzer, the batched results return to the nodes, and each node's
//! ready message (carrying its free-qubit count, which sizes the next
//! burst) closes the loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::{EngineEffects, RuleEngine};
use crate::errmodel::{ChannelModel, MemoryModel, ModelError};
use crate::link::{
    attempt, compute_timing, side_distributions, AttemptOutcome, AttemptReport, BsaBatchResult,
    EmissionSchedule, LinkArchitecture, LinkConfig, LinkError,
};
use crate::qstate::{NodeRngs, QubitRegistry};
use crate::ruleset::{build_bootstrap_ruleset, generate_ruleset_id, OutcomeMessage};
use crate::simcore::config::{ConfigError, ExperimentConfig};
use crate::simcore::event::{Destination, EventKind, EventQueue, NodeId, SimTime};
use crate::simcore::output::TrialOutput;
use crate::tomography::{
    error_decomposition, fidelity, reconstruct, stokes, ErrorDecomposition, TrialStats,
};
use crate::qstate::DensityMatrix;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Classical packets on the wire.
#[derive(Debug, Clone)]
enum Message {
    /// Node announces itself and its free qubits to the analyzer.
    BootUp { node: NodeId, free: usize },
    /// Analyzer's burst plan for both nodes.
    Timing(EmissionSchedule),
    /// Batched per-attempt results of one burst.
    Results(BsaBatchResult),
    /// Node finished processing results; carries the fresh free count.
    Ready {
        node: NodeId,
        free: usize,
        active: bool,
    },
    /// Rule engine outcome exchange.
    Outcome(OutcomeMessage),
}

/// Analyzer controller state across bursts.
#[derive(Debug, Default)]
struct Analyzer {
    ready: [Option<(usize, bool)>; 2],
    schedule: Option<EmissionSchedule>,
    generation_stopped: bool,
}

/// Ground-truth tallies over tomography-measured pairs.
#[derive(Debug, Default, Clone, Copy)]
pub struct GodCounts {
    pub clean: u64,
    pub x: u64,
    pub y: u64,
    pub z: u64,
    pub other: u64,
    pub fidelity_sum: f64,
}

impl GodCounts {
    pub fn measured(&self) -> u64 {
        self.clean + self.x + self.y + self.z + self.other
    }

    pub fn mean_fidelity(&self) -> f64 {
        let n = self.measured();
        if n == 0 {
            0.0
        } else {
            self.fidelity_sum / n as f64
        }
    }
}

#[derive(Debug)]
pub struct TrialResult {
    pub output: TrialOutput,
    /// Node 0's reconstructed density matrix (node 1 sees it swapped).
    pub density: DensityMatrix,
    pub stats: TrialStats,
    pub god: GodCounts,
    pub timed_out: bool,
    pub completion: SimTime,
    pub events_processed: u64,
    pub trace: Option<String>,
}

struct Trial<'a> {
    cfg: &'a ExperimentConfig,
    link: LinkConfig,
    side_dists: [[f64; 5]; 2],
    queue: EventQueue<Message>,
    registry: QubitRegistry,
    engines: [RuleEngine; 2],
    node_rngs: [NodeRngs; 2],
    link_rng: ChaCha8Rng,
    analyzer: Analyzer,
    /// Reserved qubit indices for the in-flight burst, per node.
    burst: [Vec<usize>; 2],
    god: GodCounts,
    timed_out: bool,
    done: bool,
    completion: SimTime,
    events_processed: u64,
    trace: Option<String>,
}

const AUDIT_EVERY: u64 = 10_000;

impl<'a> Trial<'a> {
    fn new(cfg: &'a ExperimentConfig, seed: u64, with_trace: bool) -> Result<Self, SimError> {
        let link = cfg.link_config();
        link.validate()?;
        let channel = ChannelModel::new(cfg.channel)?;
        let side_dists = side_distributions(&link, &channel)?;
        let memory = MemoryModel::new(&cfg.memory)?;
        let registry = QubitRegistry::new(cfg.buffers, memory, cfg.gate_errors());

        let mut link_rng_key = [0u8; 32];
        link_rng_key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut link_rng = ChaCha8Rng::from_seed(link_rng_key);
        link_rng.set_stream(0);

        Ok(Self {
            cfg,
            link,
            side_dists,
            queue: EventQueue::new(),
            registry,
            engines: [RuleEngine::new(NodeId(0)), RuleEngine::new(NodeId(1))],
            node_rngs: [
                NodeRngs::for_trial(seed, NodeId(0)),
                NodeRngs::for_trial(seed, NodeId(1)),
            ],
            link_rng,
            analyzer: Analyzer::default(),
            burst: [Vec::new(), Vec::new()],
            god: GodCounts::default(),
            timed_out: false,
            done: false,
            completion: SimTime::ZERO,
            events_processed: 0,
            trace: with_trace.then(String::new),
        })
    }

    fn trace_line(&mut self, line: impl AsRef<str>) {
        if let Some(t) = &mut self.trace {
            t.push_str(&format!("t={} {}\n", self.queue.now().0, line.as_ref()));
        }
    }

    fn node_delay(&self, node: NodeId) -> u64 {
        self.link.side_delay_ps(node)
    }

    fn send_to_analyzer(&mut self, from: NodeId, message: Message) {
        let at = self.queue.now().plus_ps(self.node_delay(from));
        self.queue.schedule(
            at,
            EventKind::ClassicalDelivery {
                to: Destination::Analyzer,
                message,
            },
        );
    }

    fn send_to_node(&mut self, node: NodeId, message: Message) {
        let at = self.queue.now().plus_ps(self.node_delay(node));
        self.queue.schedule(
            at,
            EventKind::ClassicalDelivery {
                to: Destination::Node(node),
                message,
            },
        );
    }

    fn send_between_nodes(&mut self, msg: OutcomeMessage) {
        let at = self
            .queue
            .now()
            .plus_ps(self.link.node_to_node_delay_ps());
        self.queue.schedule(
            at,
            EventKind::ClassicalDelivery {
                to: Destination::Node(msg.destination),
                message: Message::Outcome(msg),
            },
        );
    }

    fn dispatch_effects(&mut self, mut effects: EngineEffects) {
        for line in effects.trace.drain(..) {
            self.trace_line(line);
        }
        for msg in effects.messages.drain(..) {
            self.send_between_nodes(msg);
        }
        for r in effects.resolutions.drain(..) {
            debug_assert!(r.density);
            self.god.fidelity_sum += r.fidelity_actual;
            if r.god_entangled && !r.nonpauli && !r.fake {
                match r.word {
                    (false, false) => self.god.clean += 1,
                    (true, false) => self.god.x += 1,
                    (false, true) => self.god.z += 1,
                    (true, true) => self.god.y += 1,
                }
            } else {
                self.god.other += 1;
            }
        }
        // Completion: both accumulators hold every joint record.
        if !self.done
            && self.engines[0].measurements_recorded() >= self.cfg.num_measure
            && self.engines[1].measurements_recorded() >= self.cfg.num_measure
        {
            self.done = true;
            self.completion = self.queue.now();
        }
    }

    fn evaluate_engine(&mut self, node: NodeId) {
        let mut effects = EngineEffects::default();
        self.engines[node.0].evaluate(
            &mut self.registry,
            &mut self.node_rngs[node.0],
            self.queue.now(),
            &mut effects,
        );
        self.dispatch_effects(effects);
    }

    /// Analyzer: once both nodes have reported, plan the next burst.
    fn maybe_plan_burst(&mut self) {
        if self.analyzer.generation_stopped || self.analyzer.schedule.is_some() {
            return;
        }
        let (Some((free_a, active_a)), Some((free_b, active_b))) =
            (self.analyzer.ready[0], self.analyzer.ready[1])
        else {
            return;
        };
        if !active_a || !active_b {
            self.analyzer.generation_stopped = true;
            self.trace_line("analyzer generation stopped");
            return;
        }
        self.analyzer.ready = [None, None];
        let schedule = compute_timing(&self.link, self.queue.now(), [free_a, free_b]);
        self.analyzer.schedule = Some(schedule);
        self.trace_line(format!(
            "analyzer burst count={} arrival={}",
            schedule.count, schedule.arrival_start.0
        ));
        for node in [NodeId(0), NodeId(1)] {
            self.send_to_node(node, Message::Timing(schedule));
        }
        if schedule.count > 0 {
            self.queue
                .schedule(schedule.last_arrival(), EventKind::BsaResolve);
        }
    }

    fn on_timing(&mut self, node: NodeId, schedule: EmissionSchedule) {
        if schedule.count == 0 {
            // Empty burst: answer with the fresh count so the analyzer
            // retries after the ack round trip.
            let free = self.registry.free_count(node);
            let active = !self.engines[node.0].terminated();
            self.send_to_analyzer(node, Message::Ready { node, free, active });
            return;
        }
        let due = schedule.first_emission[node.0];
        self.queue.schedule(due, EventKind::EmissionDue { node });
    }

    fn on_emission_due(&mut self, node: NodeId) {
        let count = self.analyzer.schedule.expect("emission without a plan").count;
        let reserved = self.registry.reserve_for_emission(node, count);
        assert_eq!(
            reserved.len(),
            count,
            "free qubits shrank between ready and emission"
        );
        self.burst[node.0] = reserved;
    }

    fn on_bsa_resolve(&mut self) {
        let schedule = self.analyzer.schedule.take().expect("resolve without a plan");
        let mut result = BsaBatchResult::default();
        for j in 0..schedule.count {
            let qubits = [self.burst[0][j], self.burst[1][j]];
            let detected_at = schedule.arrival_time(j);
            match attempt(&mut self.link_rng, &self.link, &self.side_dists) {
                AttemptOutcome::Success { errors } => {
                    let pair = self.registry.create_pair(
                        qubits,
                        [
                            schedule.emission_time(NodeId(0), j),
                            schedule.emission_time(NodeId(1), j),
                        ],
                        detected_at,
                        false,
                    );
                    for (node, err) in errors.iter().enumerate() {
                        if let Some(p) = err {
                            self.registry.apply_pauli(pair, NodeId(node), *p);
                        }
                    }
                    result.reports.push(AttemptReport::Success {
                        pair,
                        qubits,
                        entangled_at: detected_at,
                    });
                }
                AttemptOutcome::FakeSuccess => {
                    let pair = self.registry.create_pair(
                        qubits,
                        [
                            schedule.emission_time(NodeId(0), j),
                            schedule.emission_time(NodeId(1), j),
                        ],
                        detected_at,
                        true,
                    );
                    result.reports.push(AttemptReport::Success {
                        pair,
                        qubits,
                        entangled_at: detected_at,
                    });
                }
                AttemptOutcome::Failure => {
                    result.reports.push(AttemptReport::Failure { qubits });
                }
            }
        }
        self.burst = [Vec::new(), Vec::new()];
        for node in [NodeId(0), NodeId(1)] {
            self.send_to_node(node, Message::Results(result.clone()));
        }
    }

    fn on_results(&mut self, node: NodeId, result: &BsaBatchResult) {
        for report in &result.reports {
            match report {
                AttemptReport::Failure { qubits } => {
                    self.registry.release_reserved(node, qubits[node.0]);
                }
                AttemptReport::Success {
                    pair, entangled_at, ..
                } => {
                    self.engines[node.0].on_new_resource(*pair, *entangled_at);
                }
            }
        }
        self.queue
            .schedule(self.queue.now(), EventKind::RuleEvaluate { node });
        let free = self.registry.free_count(node);
        let active = !self.engines[node.0].terminated();
        self.send_to_analyzer(node, Message::Ready { node, free, active });
    }

    fn on_classical(&mut self, to: Destination, message: Message) {
        match (to, message) {
            (Destination::Analyzer, Message::BootUp { node, free }) => {
                self.analyzer.ready[node.0] = Some((free, true));
                self.maybe_plan_burst();
            }
            (Destination::Analyzer, Message::Ready { node, free, active }) => {
                self.analyzer.ready[node.0] = Some((free, active));
                self.maybe_plan_burst();
            }
            (Destination::Node(node), Message::Timing(schedule)) => {
                self.on_timing(node, schedule);
            }
            (Destination::Node(node), Message::Results(result)) => {
                self.on_results(node, &result);
            }
            (Destination::Node(node), Message::Outcome(msg)) => {
                let mut effects = EngineEffects::default();
                self.engines[node.0].on_message(&msg, &mut self.registry, &mut effects);
                self.dispatch_effects(effects);
                self.queue
                    .schedule(self.queue.now(), EventKind::RuleEvaluate { node });
            }
            (to, message) => panic!("message {message:?} delivered to {to:?}"),
        }
    }

    fn run(mut self) -> Result<TrialResult, SimError> {
        let schedule = self.cfg.purification_schedule()?;
        let rounds = if self.cfg.link_tomography {
            self.cfg.initial_purification
        } else {
            0
        };
        let ruleset_id = generate_ruleset_id(self.cfg.seed, NodeId(0), self.cfg.num_measure);
        for node in [NodeId(0), NodeId(1)] {
            self.engines[node.0].install_ruleset(build_bootstrap_ruleset(
                ruleset_id,
                rounds,
                schedule,
                self.cfg.num_measure,
                node,
            ));
        }

        // Boot: nodes announce themselves once the notification buffer
        // elapses; the RuleSet clock starts at installation.
        let start = SimTime(self.cfg.notification_buffer.0);
        self.queue
            .schedule(SimTime(start.0 + self.cfg.ruleset_timeout.0), EventKind::Timeout);
        for node in [NodeId(0), NodeId(1)] {
            let free = self.registry.free_count(node);
            let at = start.plus_ps(self.node_delay(node));
            self.queue.schedule(
                at,
                EventKind::ClassicalDelivery {
                    to: Destination::Analyzer,
                    message: Message::BootUp { node, free },
                },
            );
        }

        while let Some(event) = self.queue.pop() {
            self.events_processed += 1;
            if self.events_processed.is_multiple_of(AUDIT_EVERY) {
                self.registry.audit();
                self.engines[0].audit(&self.registry);
                self.engines[1].audit(&self.registry);
            }
            match event.kind {
                EventKind::ClassicalDelivery { to, message } => self.on_classical(to, message),
                EventKind::EmissionDue { node } => self.on_emission_due(node),
                EventKind::BsaResolve => self.on_bsa_resolve(),
                EventKind::RuleEvaluate { node } => self.evaluate_engine(node),
                EventKind::Timeout => {
                    if !self.done {
                        self.timed_out = true;
                        self.completion = self.queue.now();
                        self.trace_line("ruleset timeout");
                        break;
                    }
                }
                EventKind::TrialEnd => break,
            }
            if self.done {
                break;
            }
        }
        self.finalize()
    }

    fn finalize(self) -> Result<TrialResult, SimError> {
        let acc = self.engines[0].accumulator();
        let (density, fr, decomposition) = match stokes(acc) {
            Ok(s) => {
                let rho = reconstruct(&s);
                let fr = fidelity(&rho, &DensityMatrix::bell(false, false));
                let d = error_decomposition(&rho);
                (rho, fr, d)
            }
            // Timed out before covering all nine settings: no
            // reconstruction is possible.
            Err(_) => (
                DensityMatrix::zero(),
                0.0,
                ErrorDecomposition {
                    f: 0.0,
                    x: 0.0,
                    z: 0.0,
                    y: 0.0,
                },
            ),
        };

        let tomography_time_s = self
            .completion
            .saturating_since(self.cfg.notification_buffer) as f64
            / crate::simcore::event::PS_PER_SEC as f64;
        let measured = acc.total();
        let bellpair_per_sec = if tomography_time_s > 0.0 {
            measured as f64 / tomography_time_s
        } else {
            0.0
        };

        let node_names = match self.link.architecture {
            LinkArchitecture::MeetInTheMiddle | LinkArchitecture::SenderReceiver => {
                ["EndNode1[0]".to_string(), "EndNode2[0]".to_string()]
            }
        };
        let output = TrialOutput {
            node_names,
            cost: 0.0,
            distance_km: self.link.side_lengths_km,
            fidelity: fr,
            bellpair_per_sec,
            tomography_time_s,
            tomography_measurements: self.cfg.num_measure,
            actual_measurements: measured,
            god_clean_pair_total: self.god.clean,
            god_x_pair_total: self.god.x,
            god_y_pair_total: self.god.y,
            god_z_pair_total: self.god.z,
            decomposition,
        };
        let stats = TrialStats {
            fidelity_reconstructed: fr,
            fidelity_actual: self.god.mean_fidelity(),
            throughput: bellpair_per_sec,
        };
        Ok(TrialResult {
            output,
            density,
            stats,
            god: self.god,
            timed_out: self.timed_out,
            completion: self.completion,
            events_processed: self.events_processed,
            trace: self.trace,
        })
    }
}

/// Runs one trial to completion. Deterministic for a given (config, seed).
pub fn run_trial(cfg: &ExperimentConfig, seed: u64) -> Result<TrialResult, SimError> {
    Trial::new(cfg, seed, false)?.run()
}

/// Like [`run_trial`] but collecting the structured event trace.
pub fn run_trial_traced(cfg: &ExperimentConfig, seed: u64) -> Result<TrialResult, SimError> {
    Trial::new(cfg, seed, true)?.run()
}
