//! Brute-force state-vector oracle for the purification circuits.
//!
//! Independent of the Pauli-frame implementation: the oracle builds the
//! full 4^n-dimensional state of n Bell pairs, applies the circuit as
//! unitaries on both nodes' qubits, and reads measurement statistics from
//! amplitudes. For Pauli-word inputs every verdict comparison and the
//! kept pair's residual word are probability-1 events, so the two routes
//! must agree exactly.

use num_complex::Complex64;

/// Dense state vector, little-endian bit order.
pub struct StateVec {
    amps: Vec<Complex64>,
}

impl StateVec {
    /// `n_pairs` nominal Bell pairs; pair k occupies qubits 2k (node 0)
    /// and 2k+1 (node 1).
    pub fn bell_pairs(n_pairs: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << (2 * n_pairs)];
        let norm = (1.0f64 / (1 << n_pairs) as f64).sqrt();
        // Superposition over all pairwise-equal bit patterns.
        for combo in 0..(1u64 << n_pairs) {
            let mut idx = 0u64;
            for k in 0..n_pairs {
                if (combo >> k) & 1 == 1 {
                    idx |= 0b11 << (2 * k);
                }
            }
            amps[idx as usize] = Complex64::new(norm, 0.0);
        }
        Self { amps }
    }

    pub fn qubit(pair: usize, node: usize) -> usize {
        2 * pair + node
    }

    pub fn apply_x(&mut self, q: usize) {
        let mask = 1usize << q;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                self.amps.swap(i, i | mask);
            }
        }
    }

    pub fn apply_z(&mut self, q: usize) {
        let mask = 1usize << q;
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & mask != 0 {
                *a = -*a;
            }
        }
    }

    pub fn apply_h(&mut self, q: usize) {
        let mask = 1usize << q;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let a = self.amps[i];
                let b = self.amps[i | mask];
                self.amps[i] = (a + b) * s;
                self.amps[i | mask] = (a - b) * s;
            }
        }
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) {
        let cm = 1usize << control;
        let tm = 1usize << target;
        for i in 0..self.amps.len() {
            if i & cm != 0 && i & tm == 0 {
                self.amps.swap(i, i | tm);
            }
        }
    }

    /// Expectation of a tensor of Z operators over the given qubits.
    pub fn z_product_expectation(&self, qubits: &[usize]) -> f64 {
        let mut mask = 0usize;
        for &q in qubits {
            mask |= 1 << q;
        }
        self.amps
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let parity = (i & mask).count_ones() % 2;
                let sign = if parity == 0 { 1.0 } else { -1.0 };
                sign * a.norm_sqr()
            })
            .sum()
    }

    /// Expectation of X x X on two qubits.
    pub fn xx_expectation(&self, q1: usize, q2: usize) -> f64 {
        let m = (1usize << q1) | (1usize << q2);
        self.amps
            .iter()
            .enumerate()
            .map(|(i, a)| (a.conj() * self.amps[i ^ m]).re)
            .sum()
    }
}

/// A purification circuit in protocol form: two-pair gates applied
/// identically on both nodes, then Z-comparisons of the measured pairs.
/// Transcribed from the protocol definitions independently of the
/// implementation's tables.
pub struct OracleCircuit {
    /// (control pair, target pair) CNOTs and single-pair Hs, in order.
    pub ops: Vec<OracleOp>,
    /// Pairs compared via Z readout, in message order.
    pub measured: Vec<usize>,
}

#[derive(Clone, Copy)]
pub enum OracleOp {
    Cnot { control: usize, target: usize },
    H(usize),
}

pub fn oracle_circuit(method: &str, phase_x: bool) -> OracleCircuit {
    use OracleOp::*;
    let (ops, measured): (Vec<OracleOp>, Vec<usize>) = match (method, phase_x) {
        ("ss-sp", true) => (vec![Cnot { control: 0, target: 1 }], vec![1]),
        ("ss-sp", false) => (vec![Cnot { control: 1, target: 0 }, H(1)], vec![1]),
        ("ds-sp", true) => (
            vec![
                Cnot { control: 0, target: 1 },
                Cnot { control: 2, target: 1 },
                H(2),
            ],
            vec![1, 2],
        ),
        ("ds-sp", false) => (
            vec![
                Cnot { control: 1, target: 0 },
                Cnot { control: 1, target: 2 },
                H(1),
            ],
            vec![1, 2],
        ),
        ("ss-dp", true) => (
            vec![
                Cnot { control: 0, target: 1 },
                Cnot { control: 2, target: 0 },
                H(2),
            ],
            vec![1, 2],
        ),
        ("ss-dp", false) => (
            vec![
                Cnot { control: 1, target: 0 },
                H(1),
                Cnot { control: 0, target: 2 },
            ],
            vec![1, 2],
        ),
        ("ds-dp", true) => (
            vec![
                Cnot { control: 0, target: 1 },
                Cnot { control: 2, target: 1 },
                H(2),
                Cnot { control: 3, target: 0 },
                Cnot { control: 3, target: 4 },
                H(3),
            ],
            vec![1, 2, 3, 4],
        ),
        ("ds-dp", false) => (
            vec![
                Cnot { control: 1, target: 0 },
                Cnot { control: 1, target: 2 },
                H(1),
                Cnot { control: 0, target: 3 },
                Cnot { control: 4, target: 3 },
                H(4),
            ],
            vec![1, 2, 3, 4],
        ),
        other => panic!("no oracle circuit for {other:?}"),
    };
    OracleCircuit { ops, measured }
}

/// The oracle's prediction for one input word assignment.
pub struct OraclePrediction {
    /// Each comparison's outcome product (+1 means the two nodes'
    /// readouts coincide). Always exactly +/-1 for Pauli-word inputs.
    pub comparison_signs: Vec<i8>,
    /// Kept pair's residual error word (x_parity, z_parity).
    pub kept_word: (bool, bool),
}

/// Runs the full quantum simulation for Pauli-word inputs.
/// `words[k] = (x, z)` is the error word applied to pair k's node-0 half.
pub fn oracle_predict(method: &str, phase_x: bool, words: &[(bool, bool)]) -> OraclePrediction {
    let circuit = oracle_circuit(method, phase_x);
    let mut psi = StateVec::bell_pairs(words.len());
    for (k, &(x, z)) in words.iter().enumerate() {
        if x {
            psi.apply_x(StateVec::qubit(k, 0));
        }
        if z {
            psi.apply_z(StateVec::qubit(k, 0));
        }
    }
    // Both nodes run the same local circuit on their halves.
    for node in 0..2 {
        for op in &circuit.ops {
            match *op {
                OracleOp::Cnot { control, target } => psi.apply_cnot(
                    StateVec::qubit(control, node),
                    StateVec::qubit(target, node),
                ),
                OracleOp::H(pair) => psi.apply_h(StateVec::qubit(pair, node)),
            }
        }
    }
    let exact_sign = |v: f64| -> i8 {
        assert!(
            (v.abs() - 1.0).abs() < 1e-9,
            "comparison is not deterministic: {v}"
        );
        if v > 0.0 {
            1
        } else {
            -1
        }
    };
    let comparison_signs = circuit
        .measured
        .iter()
        .map(|&pair| {
            exact_sign(
                psi.z_product_expectation(&[StateVec::qubit(pair, 0), StateVec::qubit(pair, 1)]),
            )
        })
        .collect();
    // The kept pair's Bell class from its stabilizer signs.
    let zz = exact_sign(
        psi.z_product_expectation(&[StateVec::qubit(0, 0), StateVec::qubit(0, 1)]),
    );
    let xx = exact_sign(psi.xx_expectation(StateVec::qubit(0, 0), StateVec::qubit(0, 1)));
    OraclePrediction {
        comparison_signs,
        kept_word: (zz < 0, xx < 0),
    }
}

/// Word index to (x, z): 0 clean, 1 X, 2 Z, 3 Y.
pub fn word_from_index(i: usize) -> (bool, bool) {
    match i {
        0 => (false, false),
        1 => (true, false),
        2 => (false, true),
        3 => (true, true),
        _ => unreachable!(),
    }
}
