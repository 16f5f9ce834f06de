//! Pauli-frame tracking of stationary memory qubits.
//!
//! Each Bell pair's quantum state is the pair of per-qubit Pauli frames
//! (x/z flip flags) plus non-Pauli statuses (excited, relaxed, mixed) and
//! a dark-count "fake pair" tag. Gates propagate flags classically;
//! purification measurements resolve outcome correlations from the joint
//! error word; tomography measurements sample from a density matrix built
//! on demand.
//!
//! Pair state lives in a ledger separate from the physical qubit slots:
//! the two halves of a pair are measured at different event times, and a
//! measured slot may be reinitialized and re-emitted while the partner
//! half is still pending, so the joint record must outlive either slot.

use std::collections::HashMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::errmodel::{GateErrors, MemoryErrorClass, MemoryModel, Pauli};
use crate::simcore::event::{NodeId, SimTime};

/// One node's random streams, split per subsystem so a configuration
/// change in one error source does not perturb another's draw sequence.
#[derive(Debug)]
pub struct NodeRngs {
    pub gates: ChaCha8Rng,
    pub measurement: ChaCha8Rng,
    pub basis: ChaCha8Rng,
    pub memory: ChaCha8Rng,
}

impl NodeRngs {
    pub fn for_trial(seed: u64, node: NodeId) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8] = node.0 as u8;
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::from_seed(key);
            rng.set_stream(id);
            rng
        };
        Self {
            gates: stream(1),
            measurement: stream(2),
            basis: stream(3),
            memory: stream(4),
        }
    }
}

/// Measurement basis axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    X,
    Y,
    Z,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::X, Basis::Y, Basis::Z];

    pub fn letter(self) -> char {
        match self {
            Basis::X => 'X',
            Basis::Y => 'Y',
            Basis::Z => 'Z',
        }
    }

    /// Whether a Pauli error flips the reported outcome of a measurement
    /// along this axis (it does when the two anticommute).
    pub fn flipped_by(self, p: Pauli) -> bool {
        !matches!(
            (self, p),
            (Basis::X, Pauli::X) | (Basis::Y, Pauli::Y) | (Basis::Z, Pauli::Z)
        )
    }
}

/// Non-Pauli memory status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NonPauli {
    #[default]
    None,
    Excited,
    Relaxed,
    Mixed,
}

/// Identity of a physical memory qubit slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QubitAddress {
    pub node: NodeId,
    pub index: usize,
}

/// Lifecycle status of a memory qubit slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QubitStatus {
    #[default]
    Free,
    /// Reserved for an in-flight generation attempt.
    Reserved,
    /// Holds half of a live pair handled by the rule engine.
    Busy,
    /// Holds a purified half awaiting the partner's verdict.
    Locked {
        ruleset_id: u64,
        rule_id: u32,
        action_index: u64,
    },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct QubitSlot {
    pub status: QubitStatus,
    pub pair: Option<PairId>,
}

/// Identity of a generated Bell pair, unique within a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairId(pub u64);

/// One qubit's share of a pair.
#[derive(Debug, Clone)]
pub struct PairSide {
    pub qubit: Option<usize>,
    pub x_flag: bool,
    pub z_flag: bool,
    pub nonpauli: NonPauli,
    pub last_updated: SimTime,
    /// Set when this side has been measured; its frame no longer evolves.
    pub frozen: bool,
}

/// Pending measurement of one side, awaiting the partner half.
#[derive(Debug, Clone, Copy)]
pub struct PendingMeasurement {
    pub basis: Basis,
    /// Physical outcome before any measurement-error flip.
    pub raw: i8,
    /// Outcome as reported to the protocol.
    pub reported: i8,
    pub density: bool,
    pub time: SimTime,
}

#[derive(Debug, Clone)]
pub struct PairState {
    pub id: PairId,
    pub entangled_at: SimTime,
    /// Ground truth: false for fake pairs and after any non-Pauli event.
    pub god_entangled: bool,
    /// Dark-count false herald: classically correlated, never entangled.
    pub fake: bool,
    pub sides: [PairSide; 2],
    pub pending: [Option<PendingMeasurement>; 2],
}

impl PairState {
    pub fn x_parity(&self) -> bool {
        self.sides[0].x_flag ^ self.sides[1].x_flag
    }

    pub fn z_parity(&self) -> bool {
        self.sides[0].z_flag ^ self.sides[1].z_flag
    }

    fn any_nonpauli(&self) -> bool {
        self.sides.iter().any(|s| s.nonpauli != NonPauli::None)
    }

    /// Product of same-basis outcomes dictated by the joint error word.
    pub fn word_sign(&self, basis: Basis) -> i8 {
        let x = self.x_parity();
        let z = self.z_parity();
        let neg = match basis {
            Basis::Z => x,
            Basis::X => z,
            Basis::Y => !(x ^ z),
        };
        if neg {
            -1
        } else {
            1
        }
    }
}

/// Everything known about a pair at the moment both halves were measured.
/// Returned once per pair, from the second measurement.
#[derive(Debug, Clone)]
pub struct PairResolution {
    pub id: PairId,
    pub god_entangled: bool,
    pub fake: bool,
    pub word: (bool, bool),
    pub nonpauli: bool,
    /// Fidelity of the pair's true state to the nominal Bell state.
    pub fidelity_actual: f64,
    pub density: bool,
}

/// All memory qubits of both nodes plus the pair ledger.
#[derive(Debug)]
pub struct QubitRegistry {
    slots: [Vec<QubitSlot>; 2],
    pairs: HashMap<PairId, PairState>,
    next_pair: u64,
    memory: MemoryModel,
    gates: GateErrors,
}

impl QubitRegistry {
    pub fn new(buffer_size: usize, memory: MemoryModel, gates: GateErrors) -> Self {
        Self {
            slots: [
                vec![QubitSlot::default(); buffer_size],
                vec![QubitSlot::default(); buffer_size],
            ],
            pairs: HashMap::new(),
            next_pair: 0,
            memory,
            gates,
        }
    }

    pub fn gates(&self) -> &GateErrors {
        &self.gates
    }

    pub fn buffer_size(&self, node: NodeId) -> usize {
        self.slots[node.0].len()
    }

    pub fn free_count(&self, node: NodeId) -> usize {
        self.slots[node.0]
            .iter()
            .filter(|s| s.status == QubitStatus::Free)
            .count()
    }

    pub fn pair(&self, id: PairId) -> &PairState {
        &self.pairs[&id]
    }

    pub fn pair_exists(&self, id: PairId) -> bool {
        self.pairs.contains_key(&id)
    }

    pub fn live_pairs(&self) -> usize {
        self.pairs.len()
    }

    /// Reserves up to `count` free qubits (lowest index first) for a burst.
    pub fn reserve_for_emission(&mut self, node: NodeId, count: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(count);
        for (i, slot) in self.slots[node.0].iter_mut().enumerate() {
            if out.len() == count {
                break;
            }
            if slot.status == QubitStatus::Free {
                slot.status = QubitStatus::Reserved;
                out.push(i);
            }
        }
        out
    }

    /// Returns a reserved qubit to the free pool after a failed attempt.
    pub fn release_reserved(&mut self, node: NodeId, index: usize) {
        let slot = &mut self.slots[node.0][index];
        debug_assert_eq!(slot.status, QubitStatus::Reserved);
        *slot = QubitSlot::default();
    }

    /// Entangles two reserved qubits. `emitted` carries each side's photon
    /// emission time, which is when its memory error clock starts.
    pub fn create_pair(
        &mut self,
        qubits: [usize; 2],
        emitted: [SimTime; 2],
        entangled_at: SimTime,
        fake: bool,
    ) -> PairId {
        let id = PairId(self.next_pair);
        self.next_pair += 1;
        for (node, &q) in qubits.iter().enumerate() {
            let slot = &mut self.slots[node][q];
            debug_assert_eq!(slot.status, QubitStatus::Reserved);
            slot.status = QubitStatus::Busy;
            slot.pair = Some(id);
        }
        let side = |node: usize| PairSide {
            qubit: Some(qubits[node]),
            x_flag: false,
            z_flag: false,
            nonpauli: NonPauli::None,
            last_updated: emitted[node],
            frozen: false,
        };
        self.pairs.insert(
            id,
            PairState {
                id,
                entangled_at,
                god_entangled: !fake,
                fake,
                sides: [side(0), side(1)],
                pending: [None, None],
            },
        );
        id
    }

    /// Applies a channel-sampled Pauli back onto the source memory qubit.
    pub fn apply_pauli(&mut self, id: PairId, node: NodeId, p: Pauli) {
        let side = &mut self.pairs.get_mut(&id).unwrap().sides[node.0];
        apply_pauli_to_side(side, p);
    }

    /// Locks one node's half of a kept pair while its verdict is pending.
    pub fn lock_side(
        &mut self,
        id: PairId,
        node: NodeId,
        ruleset_id: u64,
        rule_id: u32,
        action_index: u64,
    ) {
        if let Some(q) = self.pairs[&id].sides[node.0].qubit {
            self.slots[node.0][q].status = QubitStatus::Locked {
                ruleset_id,
                rule_id,
                action_index,
            };
        }
    }

    pub fn is_locked(&self, id: PairId, node: NodeId) -> bool {
        match self.pairs[&id].sides[node.0].qubit {
            Some(q) => matches!(self.slots[node.0][q].status, QubitStatus::Locked { .. }),
            None => false,
        }
    }

    /// Unlocks one node's half of a kept pair after a passing verdict.
    pub fn unlock_side(&mut self, id: PairId, node: NodeId) {
        if let Some(q) = self.pairs[&id].sides[node.0].qubit {
            if matches!(self.slots[node.0][q].status, QubitStatus::Locked { .. }) {
                self.slots[node.0][q].status = QubitStatus::Busy;
            }
        }
    }

    /// Releases one node's half of a pair back to the free pool (discard
    /// verdict or teardown). Drops the pair once fully resolved.
    pub fn release_side(&mut self, id: PairId, node: NodeId) {
        let pair = self.pairs.get_mut(&id).unwrap();
        let side = &mut pair.sides[node.0];
        if let Some(q) = side.qubit.take() {
            self.slots[node.0][q] = QubitSlot::default();
        }
        side.frozen = true;
        self.drop_if_resolved(id);
    }

    fn drop_if_resolved(&mut self, id: PairId) {
        let pair = &self.pairs[&id];
        let gone = pair
            .sides
            .iter()
            .enumerate()
            .all(|(n, s)| s.qubit.is_none() && (s.frozen || pair.pending[n].is_some()));
        let both_measured_or_freed = pair
            .sides
            .iter()
            .enumerate()
            .all(|(n, _)| pair.pending[n].is_some() || pair.sides[n].frozen);
        if gone && both_measured_or_freed {
            self.pairs.remove(&id);
        }
    }

    /// Re-evolves one side's error frame to `now`, sampling a fresh class
    /// from the memory chain. An excitation or relaxation poisons the
    /// partner half into the completely mixed state.
    pub fn refresh<R: Rng + ?Sized>(&mut self, id: PairId, node: NodeId, now: SimTime, rng: &mut R) {
        let pair = self.pairs.get_mut(&id).unwrap();
        let side = &mut pair.sides[node.0];
        if side.frozen {
            return;
        }
        debug_assert!(now >= side.last_updated, "refresh into the past");
        let elapsed = now.saturating_since(side.last_updated);
        if elapsed == 0 {
            return;
        }
        let class0 = match side.nonpauli {
            NonPauli::Excited => MemoryErrorClass::Excited,
            NonPauli::Relaxed => MemoryErrorClass::Relaxed,
            NonPauli::Mixed => MemoryErrorClass::Mixed,
            NonPauli::None => match (side.x_flag, side.z_flag) {
                (false, false) => MemoryErrorClass::Clean,
                (true, false) => MemoryErrorClass::X,
                (false, true) => MemoryErrorClass::Z,
                (true, true) => MemoryErrorClass::Y,
            },
        };
        let mut pi0 = [0.0; 7];
        pi0[class0.index()] = 1.0;
        let pi = self.memory.evolve_ps(&pi0, elapsed);
        let class = crate::errmodel::sample_memory_class(rng, &pi);
        side.last_updated = now;
        let (x, z, np) = match class {
            MemoryErrorClass::Clean => (false, false, NonPauli::None),
            MemoryErrorClass::X => (true, false, NonPauli::None),
            MemoryErrorClass::Z => (false, true, NonPauli::None),
            MemoryErrorClass::Y => (true, true, NonPauli::None),
            MemoryErrorClass::Excited => (false, false, NonPauli::Excited),
            MemoryErrorClass::Relaxed => (false, false, NonPauli::Relaxed),
            MemoryErrorClass::Mixed => (false, false, NonPauli::Mixed),
        };
        side.x_flag = x;
        side.z_flag = z;
        side.nonpauli = np;
        if np != NonPauli::None {
            pair.god_entangled = false;
            if matches!(np, NonPauli::Excited | NonPauli::Relaxed) {
                let partner = &mut pair.sides[node.other().0];
                if !partner.frozen && partner.nonpauli == NonPauli::None {
                    partner.nonpauli = NonPauli::Mixed;
                    partner.x_flag = false;
                    partner.z_flag = false;
                }
            }
        }
    }

    /// CNOT between two local halves: the control's bit flip copies onto
    /// the target and the target's phase flip copies onto the control,
    /// then one sampled gate error lands on the operands.
    pub fn propagate_cnot<R: Rng + ?Sized>(
        &mut self,
        control: PairId,
        target: PairId,
        node: NodeId,
        rng: &mut R,
    ) {
        assert_ne!(control, target, "cnot needs two distinct pairs");
        let cx = self.pairs[&control].sides[node.0].x_flag;
        let tz = self.pairs[&target].sides[node.0].z_flag;
        {
            let t = &mut self.pairs.get_mut(&target).unwrap().sides[node.0];
            t.x_flag ^= cx;
        }
        {
            let c = &mut self.pairs.get_mut(&control).unwrap().sides[node.0];
            c.z_flag ^= tz;
        }
        if let Some(err) = self.gates.cnot.sample(rng) {
            if let Some(p) = err.control {
                apply_pauli_to_side(&mut self.pairs.get_mut(&control).unwrap().sides[node.0], p);
            }
            if let Some(p) = err.target {
                apply_pauli_to_side(&mut self.pairs.get_mut(&target).unwrap().sides[node.0], p);
            }
        }
    }

    /// Hadamard on one half: exchanges bit- and phase-flip flags.
    pub fn propagate_h<R: Rng + ?Sized>(&mut self, id: PairId, node: NodeId, rng: &mut R) {
        let side = &mut self.pairs.get_mut(&id).unwrap().sides[node.0];
        std::mem::swap(&mut side.x_flag, &mut side.z_flag);
        if let Some(p) = self.gates.h.sample(rng) {
            apply_pauli_to_side(side, p);
        }
    }

    /// Pauli-frame measurement of one half, used by purification. The
    /// first half measured draws a uniform raw outcome; the second is
    /// correlated through the joint error word (fake pairs correlate only
    /// along Z). Non-Pauli statuses are invisible here: only the density
    /// path can observe them. The slot is released for reinitialization.
    pub fn measure_pauli_frame(
        &mut self,
        id: PairId,
        node: NodeId,
        basis: Basis,
        now: SimTime,
        rngs: &mut NodeRngs,
    ) -> (i8, Option<PairResolution>) {
        self.refresh(id, node, now, &mut rngs.memory);
        let rng = &mut rngs.measurement;
        let pair = self.pairs.get_mut(&id).unwrap();
        let side = &pair.sides[node.0];
        assert!(
            side.qubit.is_some() && !side.frozen,
            "pauli-frame measurement of a qubit that is not held: pair {id:?} node {node:?}"
        );
        let other = node.other().0;
        let raw = match pair.pending[other] {
            None => if rng.gen::<bool>() { 1 } else { -1 },
            Some(first) => {
                debug_assert_eq!(first.basis, basis, "purification bases must agree");
                let sign = if pair.fake {
                    match basis {
                        Basis::Z => {
                            if pair.x_parity() {
                                -1
                            } else {
                                1
                            }
                        }
                        // No coherence: X/Y outcomes of a fake pair are
                        // independent coin flips.
                        Basis::X | Basis::Y => if rng.gen::<bool>() { 1 } else { -1 },
                    }
                } else {
                    pair.word_sign(basis)
                };
                first.raw * sign
            }
        };
        self.finish_measurement(id, node, basis, raw, false, now, rngs)
    }

    /// Density-matrix measurement of one half, used by tomography. The
    /// first half samples its local marginal; the second samples the
    /// conditional of the joint distribution Tr[(Ma x Mb) rho].
    pub fn measure_density(
        &mut self,
        id: PairId,
        node: NodeId,
        basis: Basis,
        now: SimTime,
        rngs: &mut NodeRngs,
    ) -> (i8, Option<PairResolution>) {
        self.refresh(id, node, now, &mut rngs.memory);
        let rng = &mut rngs.measurement;
        let pair = self.pairs.get_mut(&id).unwrap();
        let side = &pair.sides[node.0];
        assert!(
            side.qubit.is_some() && !side.frozen,
            "density measurement of a qubit that is not held: pair {id:?} node {node:?}"
        );
        let other = node.other().0;
        let raw = match pair.pending[other] {
            None => {
                let p_plus = local_marginal_plus(&pair.sides[node.0], pair.fake, basis);
                if rng.gen::<f64>() < p_plus {
                    1
                } else {
                    -1
                }
            }
            Some(first) => {
                // Conditional over this side's outcome given the frozen
                // partner outcome; rho uses each side's frame as of its
                // own measurement time.
                let rho = build_density_matrix_from_state(pair);
                let (basis_a, basis_b, a_known) = if other == 0 {
                    (first.basis, basis, first.raw)
                } else {
                    (basis, first.basis, first.raw)
                };
                let joint = rho.measurement_distribution(basis_a, basis_b);
                let (p_match_plus, p_match_minus) = if other == 0 {
                    // Partner (node 0) outcome known; this side is b.
                    match a_known {
                        1 => (joint[0], joint[1]),
                        _ => (joint[2], joint[3]),
                    }
                } else {
                    match a_known {
                        1 => (joint[0], joint[2]),
                        _ => (joint[1], joint[3]),
                    }
                };
                let total = p_match_plus + p_match_minus;
                if total <= 0.0 || rng.gen::<f64>() < p_match_plus / total {
                    1
                } else {
                    -1
                }
            }
        };
        self.finish_measurement(id, node, basis, raw, true, now, rngs)
    }

    #[allow(clippy::too_many_arguments)]
    fn finish_measurement(
        &mut self,
        id: PairId,
        node: NodeId,
        basis: Basis,
        raw: i8,
        density: bool,
        now: SimTime,
        rngs: &mut NodeRngs,
    ) -> (i8, Option<PairResolution>) {
        let table = if density {
            &self.gates.tomography_readout
        } else {
            &self.gates.purification_measurement
        };
        let flip = match table.sample(&mut rngs.measurement) {
            Some(p) => basis.flipped_by(p),
            None => false,
        };
        let reported = if flip { -raw } else { raw };

        let pair = self.pairs.get_mut(&id).unwrap();
        // Resolution snapshot must precede the slot release so the frozen
        // frame reflects the state at measurement time.
        pair.sides[node.0].frozen = true;
        let resolution = if pair.pending[node.other().0].is_some() {
            let rho = build_density_matrix_from_state(pair);
            Some(PairResolution {
                id,
                god_entangled: pair.god_entangled,
                fake: pair.fake,
                word: (pair.x_parity(), pair.z_parity()),
                nonpauli: pair.any_nonpauli(),
                fidelity_actual: rho.fidelity_to(&DensityMatrix::bell(false, false)),
                density,
            })
        } else {
            None
        };
        pair.pending[node.0] = Some(PendingMeasurement {
            basis,
            raw,
            reported,
            density,
            time: now,
        });
        if let Some(q) = pair.sides[node.0].qubit.take() {
            self.slots[node.0][q] = QubitSlot::default();
        }
        self.drop_if_resolved(id);
        (reported, resolution)
    }

    /// The pair's joint density matrix, node 0's qubit first.
    pub fn build_density_matrix(&self, id: PairId) -> DensityMatrix {
        build_density_matrix_from_state(&self.pairs[&id])
    }

    /// Lifecycle consistency check, run periodically by the event loop.
    pub fn audit(&self) {
        for node in 0..2 {
            for (i, slot) in self.slots[node].iter().enumerate() {
                match slot.status {
                    QubitStatus::Free | QubitStatus::Reserved => {
                        assert!(
                            slot.pair.is_none(),
                            "node {node} qubit {i}: {:?} slot still linked to a pair",
                            slot.status
                        );
                    }
                    QubitStatus::Busy | QubitStatus::Locked { .. } => {
                        let id = slot.pair.unwrap_or_else(|| {
                            panic!("node {node} qubit {i}: busy slot with no pair")
                        });
                        let pair = self.pairs.get(&id).unwrap_or_else(|| {
                            panic!("node {node} qubit {i}: dangling pair {id:?}")
                        });
                        assert_eq!(
                            pair.sides[node].qubit,
                            Some(i),
                            "pair {id:?} does not point back at node {node} qubit {i}"
                        );
                        assert!(!pair.sides[node].frozen);
                    }
                }
            }
        }
        for (id, pair) in &self.pairs {
            for node in 0..2 {
                if let Some(q) = pair.sides[node].qubit {
                    assert_eq!(
                        self.slots[node][q].pair,
                        Some(*id),
                        "pair {id:?} side {node} points at a foreign slot"
                    );
                }
            }
        }
    }
}

fn apply_pauli_to_side(side: &mut PairSide, p: Pauli) {
    match p {
        Pauli::X => side.x_flag = !side.x_flag,
        Pauli::Z => side.z_flag = !side.z_flag,
        Pauli::Y => {
            side.x_flag = !side.x_flag;
            side.z_flag = !side.z_flag;
        }
    }
}

/// P(outcome = +1) for one half measured alone.
fn local_marginal_plus(side: &PairSide, _fake: bool, basis: Basis) -> f64 {
    match (side.nonpauli, basis) {
        (NonPauli::Excited, Basis::Z) => {
            if side.x_flag {
                1.0
            } else {
                0.0
            }
        }
        (NonPauli::Relaxed, Basis::Z) => {
            if side.x_flag {
                0.0
            } else {
                1.0
            }
        }
        // Half of a Bell pair, a mixed qubit, or any diagonal state
        // probed along X/Y: uniformly random.
        _ => 0.5,
    }
}

fn local_state(side: &PairSide) -> [[Complex64; 2]; 2] {
    let zero = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let half = Complex64::new(0.5, 0.0);
    match side.nonpauli {
        NonPauli::Excited => {
            if side.x_flag {
                [[one, zero], [zero, zero]]
            } else {
                [[zero, zero], [zero, one]]
            }
        }
        NonPauli::Relaxed => {
            if side.x_flag {
                [[zero, zero], [zero, one]]
            } else {
                [[one, zero], [zero, zero]]
            }
        }
        _ => [[half, zero], [zero, half]],
    }
}

fn build_density_matrix_from_state(pair: &PairState) -> DensityMatrix {
    if pair.any_nonpauli() {
        return DensityMatrix::from_tensor(local_state(&pair.sides[0]), local_state(&pair.sides[1]));
    }
    if pair.fake {
        return DensityMatrix::classical_correlated(pair.x_parity());
    }
    DensityMatrix::bell(pair.x_parity(), pair.z_parity())
}

/// Two-qubit density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(pub [[Complex64; 4]; 4]);

impl DensityMatrix {
    pub fn zero() -> Self {
        DensityMatrix([[Complex64::new(0.0, 0.0); 4]; 4])
    }

    pub fn from_pure(v: [Complex64; 4]) -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = v[i] * v[j].conj();
            }
        }
        m
    }

    /// The Bell state selected by the pair's error word.
    pub fn bell(x_parity: bool, z_parity: bool) -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let a = Complex64::new(s, 0.0);
        let b = Complex64::new(if z_parity { -s } else { s }, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let v = if x_parity {
            [zero, a, b, zero]
        } else {
            [a, zero, zero, b]
        };
        Self::from_pure(v)
    }

    /// Classically correlated dark-count pair: an even mixture of |00> and
    /// |11> (or |01> and |10> once a bit flip has landed on one side).
    pub fn classical_correlated(x_parity: bool) -> Self {
        let mut m = Self::zero();
        let half = Complex64::new(0.5, 0.0);
        if x_parity {
            m.0[1][1] = half;
            m.0[2][2] = half;
        } else {
            m.0[0][0] = half;
            m.0[3][3] = half;
        }
        m
    }

    pub fn completely_mixed() -> Self {
        let mut m = Self::zero();
        for i in 0..4 {
            m.0[i][i] = Complex64::new(0.25, 0.0);
        }
        m
    }

    pub fn from_tensor(a: [[Complex64; 2]; 2], b: [[Complex64; 2]; 2]) -> Self {
        let mut m = Self::zero();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        m.0[i * 2 + k][j * 2 + l] = a[i][j] * b[k][l];
                    }
                }
            }
        }
        m
    }

    pub fn scale_add(&mut self, w: f64, other: &DensityMatrix) {
        for i in 0..4 {
            for j in 0..4 {
                self.0[i][j] += other.0[i][j] * w;
            }
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..4).map(|i| self.0[i][i]).sum()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        for i in 0..4 {
            for j in 0..4 {
                if (self.0[i][j] - self.0[j][i].conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Tr[self * other], real part.
    pub fn fidelity_to(&self, other: &DensityMatrix) -> f64 {
        let mut t = Complex64::new(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                t += self.0[i][j] * other.0[j][i];
            }
        }
        t.re
    }

    /// Joint outcome distribution [P(++), P(+-), P(-+), P(--)] for
    /// projective measurements along the two axes.
    pub fn measurement_distribution(&self, basis_a: Basis, basis_b: Basis) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (idx, (sa, sb)) in [(1, 1), (1, -1), (-1, 1), (-1, -1)].iter().enumerate() {
            let op = DensityMatrix::from_tensor(projector(basis_a, *sa), projector(basis_b, *sb));
            let mut t = Complex64::new(0.0, 0.0);
            for i in 0..4 {
                for j in 0..4 {
                    t += op.0[i][j] * self.0[j][i];
                }
            }
            out[idx] = t.re.max(0.0);
        }
        out
    }

    /// Reorders the tensor factors (qubit swap), giving the partner
    /// node's view of the same pair.
    pub fn swapped(&self) -> Self {
        let perm = [0usize, 2, 1, 3];
        let mut m = Self::zero();
        for i in 0..4 {
            for j in 0..4 {
                m.0[i][j] = self.0[perm[i]][perm[j]];
            }
        }
        m
    }
}

/// Rank-1 projector (I + s*sigma)/2 along a basis axis.
pub fn projector(basis: Basis, sign: i8) -> [[Complex64; 2]; 2] {
    let s = sign as f64;
    let half = 0.5;
    let c = |re: f64, im: f64| Complex64::new(re, im);
    match basis {
        Basis::Z => [
            [c(half * (1.0 + s), 0.0), c(0.0, 0.0)],
            [c(0.0, 0.0), c(half * (1.0 - s), 0.0)],
        ],
        Basis::X => [
            [c(half, 0.0), c(half * s, 0.0)],
            [c(half * s, 0.0), c(half, 0.0)],
        ],
        Basis::Y => [
            [c(half, 0.0), c(0.0, -half * s)],
            [c(0.0, half * s), c(half, 0.0)],
        ],
    }
}
