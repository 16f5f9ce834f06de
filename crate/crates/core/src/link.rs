//! Physical-layer entanglement generation.
//!
//! Covers both link architectures: MeetInTheMiddle puts the Bell state
//! analyzer mid-fibre between the nodes, SenderReceiver puts it inside
//! the receiving endpoint. The analyzer coordinates emission bursts so
//! that photon pairs co-arrive, resolves each attempt stochastically, and
//! acknowledges a whole burst with one batched classical message.

use rand::Rng;
use thiserror::Error;

use crate::errmodel::{
    compose_pauli, sample_channel_class, ChannelErrorClass, ChannelModel, ModelError, Pauli,
    SingleGateError,
};
use crate::simcore::event::{NodeId, SimTime, PS_PER_SEC};

pub const SPEED_OF_LIGHT_M_PER_S: f64 = 299_792_458.0;

#[derive(Debug, Error, PartialEq)]
pub enum LinkError {
    #[error("probability {0} outside [0,1]")]
    ProbabilityOutOfRange(f64),
    #[error("link length must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error("detection rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkArchitecture {
    MeetInTheMiddle,
    SenderReceiver,
}

impl LinkArchitecture {
    pub fn name(self) -> &'static str {
        match self {
            LinkArchitecture::MeetInTheMiddle => "MeetInTheMiddle",
            LinkArchitecture::SenderReceiver => "SenderReceiver",
        }
    }
}

/// Static description of the physical link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConfig {
    pub architecture: LinkArchitecture,
    /// Fibre length from each node to the analyzer, in km. For
    /// SenderReceiver the receiver's memory couples locally (0 km).
    pub side_lengths_km: [f64; 2],
    pub refractive_index: f64,
    /// Zero-phonon-line probability times collection efficiency.
    pub emission_prob: f64,
    pub detector_efficiency: f64,
    pub detection_rate_per_sec: f64,
    /// Per-window probability that dark counts fake a coincidence.
    pub darkcount_prob: f64,
    /// Probability that a two-photon arrival actually heralds success.
    pub bsa_success_ceiling: f64,
    /// Readout error of the heralding detector clicks: lands as a Pauli
    /// on the source memory, like the channel errors.
    pub detection_readout: SingleGateError,
    /// Memory qubits per QNIC.
    pub buffer_size: usize,
}

impl LinkConfig {
    pub fn validate(&self) -> Result<(), LinkError> {
        for p in [
            self.emission_prob,
            self.detector_efficiency,
            self.darkcount_prob,
            self.bsa_success_ceiling,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(LinkError::ProbabilityOutOfRange(p));
            }
        }
        if self.total_length_km() <= 0.0 {
            return Err(LinkError::NonPositiveLength(self.total_length_km()));
        }
        if self.detection_rate_per_sec <= 0.0 {
            return Err(LinkError::NonPositiveRate(self.detection_rate_per_sec));
        }
        Ok(())
    }

    pub fn total_length_km(&self) -> f64 {
        self.side_lengths_km[0] + self.side_lengths_km[1]
    }

    /// One-way fibre latency between a node and the analyzer, also used
    /// for classical messages along the same span.
    pub fn side_delay_ps(&self, node: NodeId) -> u64 {
        self.fiber_delay_ps(self.side_lengths_km[node.0])
    }

    pub fn max_side_delay_ps(&self) -> u64 {
        self.side_delay_ps(NodeId(0)).max(self.side_delay_ps(NodeId(1)))
    }

    /// Node-to-node classical latency (the full fibre span).
    pub fn node_to_node_delay_ps(&self) -> u64 {
        self.fiber_delay_ps(self.total_length_km())
    }

    fn fiber_delay_ps(&self, km: f64) -> u64 {
        (km * 1000.0 * self.refractive_index / SPEED_OF_LIGHT_M_PER_S * PS_PER_SEC as f64).round()
            as u64
    }

    /// Spacing between attempts, bounded below by detector recovery.
    pub fn attempt_interval_ps(&self) -> u64 {
        ((PS_PER_SEC as f64 / self.detection_rate_per_sec).round() as u64).max(1)
    }
}

/// One burst's coordinated emission plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionSchedule {
    /// When each node fires its first photon.
    pub first_emission: [SimTime; 2],
    /// When the first photon pair meets at the analyzer.
    pub arrival_start: SimTime,
    pub interval_ps: u64,
    /// Attempts in this burst: the smaller free-qubit count.
    pub count: usize,
}

impl EmissionSchedule {
    pub fn emission_time(&self, node: NodeId, attempt: usize) -> SimTime {
        self.first_emission[node.0].plus_ps(attempt as u64 * self.interval_ps)
    }

    pub fn arrival_time(&self, attempt: usize) -> SimTime {
        self.arrival_start.plus_ps(attempt as u64 * self.interval_ps)
    }

    pub fn last_arrival(&self) -> SimTime {
        self.arrival_time(self.count.saturating_sub(1))
    }
}

/// Plans the next burst from the analyzer's clock: photons co-arrive at
/// the earliest instant both nodes can reach after hearing the plan, and
/// the farther node emits first.
pub fn compute_timing(link: &LinkConfig, now: SimTime, free_qubits: [usize; 2]) -> EmissionSchedule {
    let arrival_start = now.plus_ps(2 * link.max_side_delay_ps());
    EmissionSchedule {
        first_emission: [
            SimTime(arrival_start.0 - link.side_delay_ps(NodeId(0))),
            SimTime(arrival_start.0 - link.side_delay_ps(NodeId(1))),
        ],
        arrival_start,
        interval_ps: link.attempt_interval_ps(),
        count: free_qubits[0].min(free_qubits[1]),
    }
}

/// Result of one generation attempt at the analyzer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttemptOutcome {
    /// Both photons detected: the memories are heralded as entangled and
    /// each photon's sampled channel Pauli is reapplied to its source.
    Success { errors: [Option<Pauli>; 2] },
    /// A dark count faked the missing click: the nodes believe they share
    /// a pair, but the memories are only classically correlated.
    FakeSuccess,
    Failure,
}

/// Per-side photon fate feeding one attempt.
fn photon_survives<R: Rng + ?Sized>(
    rng: &mut R,
    link: &LinkConfig,
    dist: &[f64; 5],
) -> (bool, Option<Pauli>) {
    if rng.gen::<f64>() >= link.emission_prob {
        return (false, None);
    }
    let class = sample_channel_class(rng, dist);
    let pauli = match class {
        ChannelErrorClass::Lost => return (false, None),
        ChannelErrorClass::Clean => None,
        ChannelErrorClass::X => Some(Pauli::X),
        ChannelErrorClass::Z => Some(Pauli::Z),
        ChannelErrorClass::Y => Some(Pauli::Y),
    };
    if rng.gen::<f64>() >= link.detector_efficiency {
        return (false, None);
    }
    (true, pauli)
}

/// Resolves one attempt given each side's cached channel distribution.
/// On success each memory inherits its photon's channel Pauli composed
/// with a sampled detection readout Pauli.
pub fn attempt<R: Rng + ?Sized>(
    rng: &mut R,
    link: &LinkConfig,
    side_dists: &[[f64; 5]; 2],
) -> AttemptOutcome {
    let (alive_a, err_a) = photon_survives(rng, link, &side_dists[0]);
    let (alive_b, err_b) = photon_survives(rng, link, &side_dists[1]);
    if alive_a
        && alive_b
        && (link.bsa_success_ceiling >= 1.0 || rng.gen::<f64>() < link.bsa_success_ceiling)
    {
        let click_a = link.detection_readout.sample(rng);
        let click_b = link.detection_readout.sample(rng);
        return AttemptOutcome::Success {
            errors: [compose_pauli(err_a, click_a), compose_pauli(err_b, click_b)],
        };
    }
    if link.darkcount_prob > 0.0 && rng.gen::<f64>() < link.darkcount_prob {
        return AttemptOutcome::FakeSuccess;
    }
    AttemptOutcome::Failure
}

/// Cached per-side channel distributions for a link.
pub fn side_distributions(
    link: &LinkConfig,
    channel: &ChannelModel,
) -> Result<[[f64; 5]; 2], LinkError> {
    Ok([
        channel.distribution(link.side_lengths_km[0])?,
        channel.distribution(link.side_lengths_km[1])?,
    ])
}

/// What the analyzer reports for one attempt in the batched ack.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttemptReport {
    /// Attempt succeeded; both nodes treat the listed qubits as a shared
    /// resource (fake successes are indistinguishable in-band).
    Success {
        pair: crate::qstate::PairId,
        qubits: [usize; 2],
        entangled_at: SimTime,
    },
    Failure {
        qubits: [usize; 2],
    },
}

/// One burst's batched acknowledgement, sent as a single classical
/// message so per-attempt results do not flood the channel.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BsaBatchResult {
    pub reports: Vec<AttemptReport>,
}
