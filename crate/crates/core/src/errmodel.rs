//! Stochastic error models for memories, channels, gates and detectors.
//!
//! Memory decoherence is a seven-state discrete-time Markov chain stepped
//! once per microsecond; channel noise is a five-state chain stepped once
//! per kilometre. Both are represented as row-stochastic transition
//! matrices and evolved by matrix power. Gate and measurement noise are
//! single categorical draws from configured rate/ratio tables.

use std::cell::RefCell;
use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

/// Time quantum of the memory chain, in picoseconds.
pub const MEMORY_STEP_PS: u64 = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("row {row} off-diagonal probability mass {mass} reaches 1; rates too large for the step size")]
    RowMassExceedsOne { row: usize, mass: f64 },
    #[error("negative rate: {0}")]
    NegativeRate(f64),
    #[error("negative channel length: {0}")]
    NegativeLength(f64),
    #[error("gate error rate {0} outside [0,1]")]
    RateOutOfRange(f64),
    #[error("gate error ratios invalid (negative, or all zero with nonzero rate)")]
    InvalidRatios,
    #[error("probability vector does not sum to 1 (sum = {0})")]
    NotADistribution(f64),
}

/// Error classification of a stationary memory qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MemoryErrorClass {
    Clean,
    X,
    Z,
    Y,
    Excited,
    Relaxed,
    Mixed,
}

impl MemoryErrorClass {
    pub const COUNT: usize = 7;

    pub fn index(self) -> usize {
        match self {
            MemoryErrorClass::Clean => 0,
            MemoryErrorClass::X => 1,
            MemoryErrorClass::Z => 2,
            MemoryErrorClass::Y => 3,
            MemoryErrorClass::Excited => 4,
            MemoryErrorClass::Relaxed => 5,
            MemoryErrorClass::Mixed => 6,
        }
    }

    pub fn from_index(i: usize) -> Self {
        match i {
            0 => MemoryErrorClass::Clean,
            1 => MemoryErrorClass::X,
            2 => MemoryErrorClass::Z,
            3 => MemoryErrorClass::Y,
            4 => MemoryErrorClass::Excited,
            5 => MemoryErrorClass::Relaxed,
            6 => MemoryErrorClass::Mixed,
            _ => panic!("memory error class index out of range: {i}"),
        }
    }
}

/// Error classification of a photon traversing a fibre channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelErrorClass {
    Clean,
    X,
    Z,
    Y,
    Lost,
}

impl ChannelErrorClass {
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        match self {
            ChannelErrorClass::Clean => 0,
            ChannelErrorClass::X => 1,
            ChannelErrorClass::Z => 2,
            ChannelErrorClass::Y => 3,
            ChannelErrorClass::Lost => 4,
        }
    }

    pub fn from_index(i: usize) -> Self {
        match i {
            0 => ChannelErrorClass::Clean,
            1 => ChannelErrorClass::X,
            2 => ChannelErrorClass::Z,
            3 => ChannelErrorClass::Y,
            4 => ChannelErrorClass::Lost,
            _ => panic!("channel error class index out of range: {i}"),
        }
    }
}

/// Row-stochastic transition matrix over `N` states.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix<const N: usize> {
    rows: [[f64; N]; N],
}

impl<const N: usize> TransitionMatrix<N> {
    /// Validates entries in [0,1] and row sums within 1e-9 of 1.
    pub fn new(rows: [[f64; N]; N]) -> Result<Self, ModelError> {
        for (i, row) in rows.iter().enumerate() {
            let mut sum = 0.0;
            for &p in row {
                if !(0.0..=1.0).contains(&p) {
                    return Err(ModelError::RowMassExceedsOne { row: i, mass: p });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(ModelError::NotADistribution(sum));
            }
        }
        Ok(Self { rows })
    }

    pub fn identity() -> Self {
        let mut rows = [[0.0; N]; N];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self { rows }
    }

    pub fn rows(&self) -> &[[f64; N]; N] {
        &self.rows
    }

    pub fn multiply(&self, other: &Self) -> Self {
        let mut out = [[0.0; N]; N];
        for i in 0..N {
            for k in 0..N {
                let a = self.rows[i][k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..N {
                    out[i][j] += a * other.rows[k][j];
                }
            }
        }
        Self { rows: out }
    }

    /// Matrix power by repeated squaring.
    pub fn power(&self, mut n: u64) -> Self {
        let mut result = Self::identity();
        let mut base = self.clone();
        while n > 0 {
            if n & 1 == 1 {
                result = result.multiply(&base);
            }
            n >>= 1;
            if n > 0 {
                base = base.multiply(&base);
            }
        }
        result
    }

    /// Left-multiplies a row distribution by this matrix.
    pub fn apply(&self, pi: &[f64; N]) -> [f64; N] {
        let mut out = [0.0; N];
        for i in 0..N {
            let p = pi[i];
            if p == 0.0 {
                continue;
            }
            for j in 0..N {
                out[j] += p * self.rows[i][j];
            }
        }
        out
    }
}

/// Per-microsecond memory transition probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryRates {
    pub x_per_us: f64,
    pub y_per_us: f64,
    pub z_per_us: f64,
    pub excite_per_us: f64,
    pub relax_per_us: f64,
    pub mixed_per_us: f64,
}

impl MemoryRates {
    pub const ZERO: MemoryRates = MemoryRates {
        x_per_us: 0.0,
        y_per_us: 0.0,
        z_per_us: 0.0,
        excite_per_us: 0.0,
        relax_per_us: 0.0,
        mixed_per_us: 0.0,
    };

    /// Builds per-microsecond rates from a total Pauli rate per second
    /// (split by the given X:Y:Z ratios) and a memory lifetime with an
    /// excitation:relaxation ratio. The lifetime is the inverse of the
    /// combined excitation + relaxation rate.
    pub fn from_physical(
        pauli_rate_per_sec: f64,
        xyz_ratios: [f64; 3],
        lifetime_sec: f64,
        excite_relax_ratio: f64,
    ) -> Result<Self, ModelError> {
        if pauli_rate_per_sec < 0.0 {
            return Err(ModelError::NegativeRate(pauli_rate_per_sec));
        }
        if lifetime_sec < 0.0 {
            return Err(ModelError::NegativeRate(lifetime_sec));
        }
        let ratio_sum: f64 = xyz_ratios.iter().sum();
        let split = |r: f64| {
            if ratio_sum == 0.0 {
                0.0
            } else {
                pauli_rate_per_sec * r / ratio_sum * 1e-6
            }
        };
        let escape_per_us = if lifetime_sec == 0.0 {
            0.0
        } else {
            1.0 / lifetime_sec * 1e-6
        };
        let excite = escape_per_us * excite_relax_ratio / (excite_relax_ratio + 1.0);
        let relax = escape_per_us / (excite_relax_ratio + 1.0);
        Ok(MemoryRates {
            x_per_us: split(xyz_ratios[0]),
            y_per_us: split(xyz_ratios[1]),
            z_per_us: split(xyz_ratios[2]),
            excite_per_us: excite,
            relax_per_us: relax,
            mixed_per_us: 0.0,
        })
    }
}

/// Builds the 7x7 per-microsecond memory matrix.
///
/// Layout: the Pauli block composes errors (a fresh Y on an existing X
/// lands in Z, and so on); the excited/relaxed/mixed rows carry no mass
/// back into the Pauli block; the mixed column receives only the
/// configured completely-mixed rate.
pub fn memory_transition_matrix(r: &MemoryRates) -> Result<TransitionMatrix<7>, ModelError> {
    for v in [
        r.x_per_us,
        r.y_per_us,
        r.z_per_us,
        r.excite_per_us,
        r.relax_per_us,
        r.mixed_per_us,
    ] {
        if v < 0.0 {
            return Err(ModelError::NegativeRate(v));
        }
    }
    let (px, py, pz) = (r.x_per_us, r.y_per_us, r.z_per_us);
    let (pe, pr, pm) = (r.excite_per_us, r.relax_per_us, r.mixed_per_us);

    let mut rows = [[0.0; 7]; 7];
    // Pauli block: row order Clean, X, Z, Y; column order the same.
    rows[0] = [0.0, px, pz, py, pe, pr, pm];
    rows[1] = [px, 0.0, py, pz, pe, pr, pm];
    rows[2] = [pz, py, 0.0, px, pe, pr, pm];
    rows[3] = [py, pz, px, 0.0, pe, pr, pm];
    rows[4] = [0.0, 0.0, 0.0, 0.0, 0.0, pr, pm];
    rows[5] = [0.0, 0.0, 0.0, 0.0, pe, 0.0, pm];
    rows[6] = [0.0, 0.0, 0.0, 0.0, pe, pr, 0.0];

    for (i, row) in rows.iter_mut().enumerate() {
        let off: f64 = row.iter().sum();
        if off >= 1.0 {
            return Err(ModelError::RowMassExceedsOne { row: i, mass: off });
        }
        row[i] = 1.0 - off;
    }
    TransitionMatrix::new(rows)
}

/// Memory decoherence model with cached power-of-two matrices.
#[derive(Debug)]
pub struct MemoryModel {
    base: TransitionMatrix<7>,
    pow2: RefCell<Vec<TransitionMatrix<7>>>,
}

impl MemoryModel {
    pub fn new(rates: &MemoryRates) -> Result<Self, ModelError> {
        let base = memory_transition_matrix(rates)?;
        Ok(Self {
            base: base.clone(),
            pow2: RefCell::new(vec![base]),
        })
    }

    pub fn matrix(&self) -> &TransitionMatrix<7> {
        &self.base
    }

    /// Evolves a state distribution by `steps` microseconds.
    pub fn evolve(&self, pi0: &[f64; 7], steps: u64) -> [f64; 7] {
        let mut pi = *pi0;
        let mut n = steps;
        let mut level = 0;
        while n > 0 {
            if n & 1 == 1 {
                let cache = self.pow2.borrow();
                pi = cache[level].apply(&pi);
            }
            n >>= 1;
            level += 1;
            if n > 0 {
                let mut cache = self.pow2.borrow_mut();
                if cache.len() <= level {
                    let next = cache[level - 1].multiply(&cache[level - 1]);
                    cache.push(next);
                }
            }
        }
        pi
    }

    /// Evolves an elapsed time given in picoseconds, rounded to the
    /// nearest whole microsecond step.
    pub fn evolve_ps(&self, pi0: &[f64; 7], elapsed_ps: u64) -> [f64; 7] {
        let steps = (elapsed_ps + MEMORY_STEP_PS / 2) / MEMORY_STEP_PS;
        self.evolve(pi0, steps)
    }
}

/// Per-kilometre channel transition probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRates {
    pub x_per_km: f64,
    pub y_per_km: f64,
    pub z_per_km: f64,
    pub loss_per_km: f64,
}

impl ChannelRates {
    pub const ZERO: ChannelRates = ChannelRates {
        x_per_km: 0.0,
        y_per_km: 0.0,
        z_per_km: 0.0,
        loss_per_km: 0.0,
    };
}

/// Builds the 5x5 per-kilometre channel matrix. `scale` shrinks every
/// rate proportionally, which is how fractional final steps are built.
fn channel_matrix_scaled(r: &ChannelRates, scale: f64) -> Result<TransitionMatrix<5>, ModelError> {
    for v in [r.x_per_km, r.y_per_km, r.z_per_km, r.loss_per_km] {
        if v < 0.0 {
            return Err(ModelError::NegativeRate(v));
        }
    }
    let px = r.x_per_km * scale;
    let py = r.y_per_km * scale;
    let pz = r.z_per_km * scale;
    let pl = r.loss_per_km * scale;

    let mut rows = [[0.0; 5]; 5];
    rows[0] = [0.0, px, pz, py, pl];
    rows[1] = [px, 0.0, py, pz, pl];
    rows[2] = [pz, py, 0.0, px, pl];
    rows[3] = [py, pz, px, 0.0, pl];
    rows[4] = [0.0, 0.0, 0.0, 0.0, 0.0];
    for (i, row) in rows.iter_mut().enumerate().take(4) {
        let off: f64 = row.iter().sum();
        if off >= 1.0 {
            return Err(ModelError::RowMassExceedsOne { row: i, mass: off });
        }
        row[i] = 1.0 - off;
    }
    rows[4][4] = 1.0;
    TransitionMatrix::new(rows)
}

pub fn channel_transition_matrix(r: &ChannelRates) -> Result<TransitionMatrix<5>, ModelError> {
    channel_matrix_scaled(r, 1.0)
}

/// Channel noise model. Output distributions are computed once per
/// distinct length and cached.
#[derive(Debug)]
pub struct ChannelModel {
    rates: ChannelRates,
    per_km: TransitionMatrix<5>,
    cache: RefCell<HashMap<u64, [f64; 5]>>,
}

impl ChannelModel {
    pub fn new(rates: ChannelRates) -> Result<Self, ModelError> {
        Ok(Self {
            rates,
            per_km: channel_transition_matrix(&rates)?,
            cache: RefCell::new(HashMap::new()),
        })
    }

    /// Distribution over {Clean, X, Z, Y, Lost} for a clean photon after
    /// `length_km` of fibre. Whole kilometres step the per-km matrix; a
    /// fractional remainder steps a matrix built from proportionally
    /// scaled rates.
    pub fn distribution(&self, length_km: f64) -> Result<[f64; 5], ModelError> {
        if length_km < 0.0 {
            return Err(ModelError::NegativeLength(length_km));
        }
        let key = length_km.to_bits();
        if let Some(hit) = self.cache.borrow().get(&key) {
            return Ok(*hit);
        }
        let whole = length_km.floor() as u64;
        let frac = length_km - length_km.floor();
        let mut pi = [1.0, 0.0, 0.0, 0.0, 0.0];
        pi = self.per_km.power(whole).apply(&pi);
        if frac > 0.0 {
            pi = channel_matrix_scaled(&self.rates, frac)?.apply(&pi);
        }
        self.cache.borrow_mut().insert(key, pi);
        Ok(pi)
    }
}

/// Draws one index from a probability vector. The vector must sum to 1
/// within 1e-6; residual mass from rounding lands on the last entry.
pub fn sample_index<R: Rng + ?Sized>(rng: &mut R, pi: &[f64]) -> usize {
    debug_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in pi.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    pi.len() - 1
}

pub fn sample_memory_class<R: Rng + ?Sized>(rng: &mut R, pi: &[f64; 7]) -> MemoryErrorClass {
    MemoryErrorClass::from_index(sample_index(rng, pi))
}

pub fn sample_channel_class<R: Rng + ?Sized>(rng: &mut R, pi: &[f64; 5]) -> ChannelErrorClass {
    ChannelErrorClass::from_index(sample_index(rng, pi))
}

/// Pauli error operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    X,
    Y,
    Z,
}

/// Error table of a single-qubit gate or measurement: a total rate and
/// X:Y:Z outcome weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleGateError {
    pub rate: f64,
    pub ratios: [f64; 3],
}

impl SingleGateError {
    pub const IDEAL: SingleGateError = SingleGateError {
        rate: 0.0,
        ratios: [1.0, 1.0, 1.0],
    };

    pub fn new(rate: f64, ratios: [f64; 3]) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(ModelError::RateOutOfRange(rate));
        }
        if ratios.iter().any(|&r| r < 0.0) || (rate > 0.0 && ratios.iter().sum::<f64>() == 0.0) {
            return Err(ModelError::InvalidRatios);
        }
        Ok(Self { rate, ratios })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Pauli> {
        if self.rate == 0.0 || rng.gen::<f64>() >= self.rate {
            return None;
        }
        let total: f64 = self.ratios.iter().sum();
        let idx = sample_index(
            rng,
            &[
                self.ratios[0] / total,
                self.ratios[1] / total,
                self.ratios[2] / total,
            ],
        );
        Some([Pauli::X, Pauli::Y, Pauli::Z][idx])
    }
}

/// The nine CNOT error outcomes, ordered as the configuration keys:
/// IZ, ZI, ZZ, IX, XI, XX, IY, YI, YY. The first letter is the error
/// landing on the target qubit, the second on the control qubit.
pub const CNOT_ERROR_COMBOS: [(Option<Pauli>, Option<Pauli>); 9] = [
    (None, Some(Pauli::Z)),
    (Some(Pauli::Z), None),
    (Some(Pauli::Z), Some(Pauli::Z)),
    (None, Some(Pauli::X)),
    (Some(Pauli::X), None),
    (Some(Pauli::X), Some(Pauli::X)),
    (None, Some(Pauli::Y)),
    (Some(Pauli::Y), None),
    (Some(Pauli::Y), Some(Pauli::Y)),
];

/// Error table of the CNOT gate: a total rate and nine outcome weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnotGateError {
    pub rate: f64,
    pub ratios: [f64; 9],
}

/// One sampled CNOT error: which Pauli lands on which operand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnotError {
    pub target: Option<Pauli>,
    pub control: Option<Pauli>,
}

impl CnotGateError {
    pub const IDEAL: CnotGateError = CnotGateError {
        rate: 0.0,
        ratios: [1.0; 9],
    };

    pub fn new(rate: f64, ratios: [f64; 9]) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(ModelError::RateOutOfRange(rate));
        }
        if ratios.iter().any(|&r| r < 0.0) || (rate > 0.0 && ratios.iter().sum::<f64>() == 0.0) {
            return Err(ModelError::InvalidRatios);
        }
        Ok(Self { rate, ratios })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<CnotError> {
        if self.rate == 0.0 || rng.gen::<f64>() >= self.rate {
            return None;
        }
        let total: f64 = self.ratios.iter().sum();
        let mut probs = [0.0; 9];
        for (p, r) in probs.iter_mut().zip(self.ratios.iter()) {
            *p = r / total;
        }
        let (target, control) = CNOT_ERROR_COMBOS[sample_index(rng, &probs)];
        Some(CnotError { target, control })
    }
}

/// Error tables for every modelled gate kind.
///
/// The measurement table describes the physical readout gate. Where it
/// acts is a routing question answered at configuration time: by default
/// it lands as a Pauli on each memory at the detector click that heralds
/// entanglement, which is what reproduces the reference fidelities. The
/// two optional readout tables inject additional reported-outcome flips
/// into tomography measurements and purification verdict measurements;
/// both default to ideal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateErrors {
    pub h: SingleGateError,
    pub x: SingleGateError,
    pub z: SingleGateError,
    pub measurement: SingleGateError,
    pub tomography_readout: SingleGateError,
    pub purification_measurement: SingleGateError,
    pub cnot: CnotGateError,
}

impl GateErrors {
    pub const IDEAL: GateErrors = GateErrors {
        h: SingleGateError::IDEAL,
        x: SingleGateError::IDEAL,
        z: SingleGateError::IDEAL,
        measurement: SingleGateError::IDEAL,
        tomography_readout: SingleGateError::IDEAL,
        purification_measurement: SingleGateError::IDEAL,
        cnot: CnotGateError::IDEAL,
    };
}

/// Composes two optional Pauli errors on one qubit (X and Z components
/// combine modulo 2; opposite halves build Y, equal halves cancel).
pub fn compose_pauli(a: Option<Pauli>, b: Option<Pauli>) -> Option<Pauli> {
    fn bits(p: Option<Pauli>) -> (bool, bool) {
        match p {
            None => (false, false),
            Some(Pauli::X) => (true, false),
            Some(Pauli::Z) => (false, true),
            Some(Pauli::Y) => (true, true),
        }
    }
    let (ax, az) = bits(a);
    let (bx, bz) = bits(b);
    match (ax ^ bx, az ^ bz) {
        (false, false) => None,
        (true, false) => Some(Pauli::X),
        (false, true) => Some(Pauli::Z),
        (true, true) => Some(Pauli::Y),
    }
}
