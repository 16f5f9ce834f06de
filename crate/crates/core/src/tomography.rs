//! Density-matrix reconstruction from joint measurement counts.
//!
//! Counts over the nine basis settings reduce to the 16 two-qubit Stokes
//! parameters, which linearly determine the density matrix. Reconstruction
//! is plain linear inversion: the estimate is Hermitian with unit trace
//! but is not forced positive semidefinite, so fidelities and error rates
//! can land slightly outside [0,1] at finite sample size.

use std::collections::HashMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::qstate::{Basis, DensityMatrix};

#[derive(Debug, Error, PartialEq)]
pub enum TomographyError {
    #[error("setting ({0:?},{1:?}) has no recorded outcomes; reconstruction unavailable")]
    EmptySetting(Basis, Basis),
}

/// One joint detector setting.
pub type Setting = (Basis, Basis);

/// Joint measurement counts over the nine settings.
#[derive(Debug, Clone, Default)]
pub struct TomographyAccumulator {
    counts: HashMap<(Basis, Basis, i8, i8), u64>,
    total: u64,
}

impl TomographyAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, setting: Setting, outcome: (i8, i8)) {
        debug_assert!(outcome.0.abs() == 1 && outcome.1.abs() == 1);
        *self
            .counts
            .entry((setting.0, setting.1, outcome.0, outcome.1))
            .or_insert(0) += 1;
        self.total += 1;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, setting: Setting, outcome: (i8, i8)) -> u64 {
        self.counts
            .get(&(setting.0, setting.1, outcome.0, outcome.1))
            .copied()
            .unwrap_or(0)
    }

    fn setting_total(&self, setting: Setting) -> u64 {
        [(1, 1), (1, -1), (-1, 1), (-1, -1)]
            .iter()
            .map(|&(a, b)| self.count(setting, (a, b)))
            .sum()
    }

    /// P(a, b | setting) over the four joint outcomes, ordered
    /// (++, +-, -+, --).
    fn probabilities(&self, setting: Setting) -> Result<[f64; 4], TomographyError> {
        let total = self.setting_total(setting);
        if total == 0 {
            return Err(TomographyError::EmptySetting(setting.0, setting.1));
        }
        let p = |a, b| self.count(setting, (a, b)) as f64 / total as f64;
        Ok([p(1, 1), p(1, -1), p(-1, 1), p(-1, -1)])
    }
}

/// The 16 two-qubit Stokes parameters, indexed [i][j] with 0 = identity
/// and 1..3 = X, Y, Z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StokesParams(pub [[f64; 4]; 4]);

fn axis(i: usize) -> Basis {
    match i {
        1 => Basis::X,
        2 => Basis::Y,
        3 => Basis::Z,
        _ => unreachable!(),
    }
}

/// Estimates the Stokes parameters from counts. Correlation terms use the
/// matching mixed setting; each single-qubit marginal is estimated from
/// the one same-basis setting its defining sum names, including the
/// swapped roles of the two Y-basis marginals.
pub fn stokes(acc: &TomographyAccumulator) -> Result<StokesParams, TomographyError> {
    // Sign patterns over the joint outcomes (++, +-, -+, --).
    const CORRELATION: [f64; 4] = [1.0, -1.0, -1.0, 1.0];
    const MARGINAL_A: [f64; 4] = [1.0, 1.0, -1.0, -1.0];
    const MARGINAL_B: [f64; 4] = [1.0, -1.0, 1.0, -1.0];

    let term = |setting: Setting, signs: &[f64; 4]| -> Result<f64, TomographyError> {
        let p = acc.probabilities(setting)?;
        Ok(p.iter().zip(signs.iter()).map(|(p, s)| p * s).sum())
    };

    let mut s = [[0.0; 4]; 4];
    s[0][0] = 1.0;
    for i in 1..4 {
        for j in 1..4 {
            s[i][j] = term((axis(i), axis(j)), &CORRELATION)?;
        }
    }
    s[1][0] = term((Basis::X, Basis::X), &MARGINAL_A)?;
    s[3][0] = term((Basis::Z, Basis::Z), &MARGINAL_A)?;
    s[0][1] = term((Basis::X, Basis::X), &MARGINAL_B)?;
    s[0][3] = term((Basis::Z, Basis::Z), &MARGINAL_B)?;
    // The Y-pair marginals swap roles relative to the X and Z pairs.
    s[0][2] = term((Basis::Y, Basis::Y), &MARGINAL_A)?;
    s[2][0] = term((Basis::Y, Basis::Y), &MARGINAL_B)?;
    Ok(StokesParams(s))
}

fn sigma(i: usize) -> [[Complex64; 2]; 2] {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    match i {
        0 => [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]],
        1 => [[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]],
        2 => [[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]],
        3 => [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]],
        _ => unreachable!(),
    }
}

/// Linear inversion: rho = (1/4) sum S[i][j] sigma_i x sigma_j.
pub fn reconstruct(s: &StokesParams) -> DensityMatrix {
    let mut rho = DensityMatrix::zero();
    for i in 0..4 {
        for j in 0..4 {
            if s.0[i][j] == 0.0 {
                continue;
            }
            let term = DensityMatrix::from_tensor(sigma(i), sigma(j));
            rho.scale_add(s.0[i][j] / 4.0, &term);
        }
    }
    rho
}

/// Exact Stokes parameters of a known density matrix: Tr[(si x sj) rho].
/// Test and ground-truth companion to the counting estimator.
pub fn stokes_of_density(rho: &DensityMatrix) -> StokesParams {
    let mut s = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let op = DensityMatrix::from_tensor(sigma(i), sigma(j));
            s[i][j] = rho.fidelity_to(&op);
        }
    }
    StokesParams(s)
}

/// Tr[rho_r rho_ideal], real part. Linear-inversion inputs may fall
/// slightly outside [0,1]; the value is reported as computed.
pub fn fidelity(rho_r: &DensityMatrix, rho_ideal: &DensityMatrix) -> f64 {
    rho_r.fidelity_to(rho_ideal)
}

/// Overlaps with the four Bell states: the nominal-state fidelity and the
/// reconstructed X, Z and Y error rates. Sums to the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorDecomposition {
    pub f: f64,
    pub x: f64,
    pub z: f64,
    pub y: f64,
}

pub fn error_decomposition(rho: &DensityMatrix) -> ErrorDecomposition {
    ErrorDecomposition {
        f: rho.fidelity_to(&DensityMatrix::bell(false, false)),
        x: rho.fidelity_to(&DensityMatrix::bell(true, false)),
        z: rho.fidelity_to(&DensityMatrix::bell(false, true)),
        y: rho.fidelity_to(&DensityMatrix::bell(true, true)),
    }
}

/// Per-trial quantities fed into cross-trial aggregation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialStats {
    pub fidelity_reconstructed: f64,
    pub fidelity_actual: f64,
    pub throughput: f64,
}

/// Cross-trial summary: moments of the reconstructed fidelity, the mean
/// absolute gap to the hidden actual fidelity, and mean throughput.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateStats {
    pub trials: usize,
    pub mean_fidelity: f64,
    pub stddev_fidelity: f64,
    pub min_fidelity: f64,
    pub max_fidelity: f64,
    pub mean_abs_diff: f64,
    pub mean_throughput: f64,
}

pub fn aggregate(trials: &[TrialStats]) -> AggregateStats {
    assert!(!trials.is_empty(), "aggregate needs at least one trial");
    let n = trials.len() as f64;
    let mean = trials.iter().map(|t| t.fidelity_reconstructed).sum::<f64>() / n;
    let var = if trials.len() > 1 {
        trials
            .iter()
            .map(|t| (t.fidelity_reconstructed - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };
    AggregateStats {
        trials: trials.len(),
        mean_fidelity: mean,
        stddev_fidelity: var.sqrt(),
        min_fidelity: trials
            .iter()
            .map(|t| t.fidelity_reconstructed)
            .fold(f64::INFINITY, f64::min),
        max_fidelity: trials
            .iter()
            .map(|t| t.fidelity_reconstructed)
            .fold(f64::NEG_INFINITY, f64::max),
        mean_abs_diff: trials
            .iter()
            .map(|t| (t.fidelity_reconstructed - t.fidelity_actual).abs())
            .sum::<f64>()
            / n,
        mean_throughput: trials.iter().map(|t| t.throughput).sum::<f64>() / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record_exact(acc: &mut TomographyAccumulator, rho: &DensityMatrix, per_setting: u64) {
        // Deterministic counts proportional to the exact probabilities.
        for a in Basis::ALL {
            for b in Basis::ALL {
                let d = rho.measurement_distribution(a, b);
                for (idx, &(oa, ob)) in [(1, 1), (1, -1), (-1, 1), (-1, -1)].iter().enumerate() {
                    let n = (d[idx] * per_setting as f64).round() as u64;
                    for _ in 0..n {
                        acc.record((a, b), (oa, ob));
                    }
                }
            }
        }
    }

    #[test]
    fn record_increments_counts_independently() {
        let mut acc = TomographyAccumulator::new();
        assert_eq!(acc.count((Basis::X, Basis::Z), (1, -1)), 0);
        acc.record((Basis::X, Basis::Z), (1, -1));
        assert_eq!(acc.count((Basis::X, Basis::Z), (1, -1)), 1);
        acc.record((Basis::X, Basis::Z), (1, -1));
        assert_eq!(acc.count((Basis::X, Basis::Z), (1, -1)), 2);
        acc.record((Basis::Y, Basis::Y), (-1, 1));
        assert_eq!(acc.count((Basis::X, Basis::Z), (1, -1)), 2);
        assert_eq!(acc.count((Basis::Y, Basis::Y), (-1, 1)), 1);
        assert_eq!(acc.total(), 3);
    }

    #[test]
    fn stokes_of_exact_bell_counts() {
        let mut acc = TomographyAccumulator::new();
        record_exact(&mut acc, &DensityMatrix::bell(false, false), 1000);
        let s = stokes(&acc).unwrap();
        assert!((s.0[1][1] - 1.0).abs() < 1e-9);
        assert!((s.0[2][2] + 1.0).abs() < 1e-9);
        assert!((s.0[3][3] - 1.0).abs() < 1e-9);
        for i in 0..4 {
            for j in 0..4 {
                if i != j && i * j == 0 || (i != j && i > 0 && j > 0) {
                    assert!(s.0[i][j].abs() < 1e-9, "S[{i}][{j}] = {}", s.0[i][j]);
                }
            }
        }
        assert_eq!(s.0[0][0], 1.0);
    }

    #[test]
    fn stokes_of_completely_mixed_counts_vanish() {
        let mut acc = TomographyAccumulator::new();
        record_exact(&mut acc, &DensityMatrix::completely_mixed(), 400);
        let s = stokes(&acc).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i == 0 && j == 0 {
                    assert_eq!(s.0[0][0], 1.0);
                } else {
                    assert!(s.0[i][j].abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn empty_setting_is_an_error() {
        let mut acc = TomographyAccumulator::new();
        acc.record((Basis::Z, Basis::Z), (1, 1));
        assert!(matches!(
            stokes(&acc),
            Err(TomographyError::EmptySetting(_, _))
        ));
    }

    #[test]
    fn sampled_stokes_converge_at_root_n() {
        // Bell-diagonal mixture; every marginal vanishes, so the printed
        // estimator and the analytic parameters agree in expectation.
        let mut rho = DensityMatrix::zero();
        rho.scale_add(0.7, &DensityMatrix::bell(false, false));
        rho.scale_add(0.2, &DensityMatrix::bell(true, false));
        rho.scale_add(0.1, &DensityMatrix::bell(false, true));
        let exact = stokes_of_density(&rho);

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n_total = 1_000_000u64;
        let mut acc = TomographyAccumulator::new();
        for _ in 0..n_total {
            let a = Basis::ALL[rng.gen_range(0..3)];
            let b = Basis::ALL[rng.gen_range(0..3)];
            let d = rho.measurement_distribution(a, b);
            let mut u: f64 = rng.gen();
            let mut idx = 3;
            for (k, p) in d.iter().enumerate() {
                if u < *p {
                    idx = k;
                    break;
                }
                u -= p;
            }
            let (oa, ob) = [(1, 1), (1, -1), (-1, 1), (-1, -1)][idx];
            acc.record((a, b), (oa, ob));
        }
        let est = stokes(&acc).unwrap();
        // Each setting holds about n/9 samples.
        let bound = 3.0 / ((n_total as f64) / 9.0).sqrt();
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (est.0[i][j] - exact.0[i][j]).abs() < bound,
                    "S[{i}][{j}]: {} vs {}",
                    est.0[i][j],
                    exact.0[i][j]
                );
            }
        }
    }

    #[test]
    fn reconstruct_inverts_exact_stokes() {
        // reconstruct . stokes_of_density is the identity on trace-1
        // Hermitian matrices.
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..20 {
            let mut rho = DensityMatrix::zero();
            let mut weights = [0.0; 4];
            let mut total = 0.0;
            for w in weights.iter_mut() {
                *w = rng.gen::<f64>();
                total += *w;
            }
            let cases = [
                DensityMatrix::bell(false, false),
                DensityMatrix::bell(true, false),
                DensityMatrix::classical_correlated(false),
                DensityMatrix::completely_mixed(),
            ];
            for (w, m) in weights.iter().zip(cases.iter()) {
                rho.scale_add(w / total, m);
            }
            let back = reconstruct(&stokes_of_density(&rho));
            for i in 0..4 {
                for j in 0..4 {
                    assert!((back.0[i][j] - rho.0[i][j]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn reconstruct_identity_stokes_is_maximally_mixed() {
        let mut s = [[0.0; 4]; 4];
        s[0][0] = 1.0;
        let rho = reconstruct(&StokesParams(s));
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 0.25 } else { 0.0 };
                assert!((rho.0[i][j].re - expect).abs() < 1e-12);
                assert!(rho.0[i][j].im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reconstructed_bell_state_has_half_corners() {
        let s = stokes_of_density(&DensityMatrix::bell(false, false));
        let rho = reconstruct(&s);
        assert!((rho.0[0][3].re - 0.5).abs() < 1e-12);
        assert!((rho.0[0][0].re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fidelity_reference_points() {
        let bell = DensityMatrix::bell(false, false);
        assert!((fidelity(&bell, &bell) - 1.0).abs() < 1e-12);
        assert!((fidelity(&DensityMatrix::completely_mixed(), &bell) - 0.25).abs() < 1e-12);
        let mut mix = DensityMatrix::zero();
        mix.scale_add(0.9, &bell);
        mix.scale_add(0.1, &DensityMatrix::bell(true, false));
        assert!((fidelity(&mix, &bell) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn fidelity_is_linear_in_the_estimate() {
        let bell = DensityMatrix::bell(false, false);
        let a = DensityMatrix::bell(true, false);
        let b = DensityMatrix::completely_mixed();
        let mut mix = DensityMatrix::zero();
        mix.scale_add(0.3, &a);
        mix.scale_add(0.7, &b);
        let direct = fidelity(&mix, &bell);
        let linear = 0.3 * fidelity(&a, &bell) + 0.7 * fidelity(&b, &bell);
        assert!((direct - linear).abs() < 1e-12);
    }

    #[test]
    fn decomposition_of_pure_error_states() {
        let d = error_decomposition(&DensityMatrix::bell(true, false));
        assert!((d.x - 1.0).abs() < 1e-12);
        assert!(d.f.abs() < 1e-12 && d.z.abs() < 1e-12 && d.y.abs() < 1e-12);
    }

    #[test]
    fn decomposition_components_sum_to_one() {
        let mut rho = DensityMatrix::zero();
        rho.scale_add(0.55, &DensityMatrix::bell(false, false));
        rho.scale_add(0.25, &DensityMatrix::classical_correlated(false));
        rho.scale_add(0.20, &DensityMatrix::completely_mixed());
        let d = error_decomposition(&rho);
        assert!((d.f + d.x + d.z + d.y - 1.0).abs() < 1e-9);
    }

    #[test]
    fn decomposition_of_a_reference_reconstruction() {
        // Frozen from a published run's density matrix block: the real
        // part below decomposes to F = 0.487046, X = 0.512954,
        // Z = 0.00895361, Y = -0.00895361.
        let re = [
            [0.245333, 0.00546737, 0.00436971, 0.239046],
            [0.00546737, 0.250667, 0.260954, 0.0115033],
            [0.00436971, 0.260954, 0.253333, 0.0104056],
            [0.239046, 0.0115033, 0.0104056, 0.250667],
        ];
        let im = [
            [0.0, 0.00795211, 0.00799364, -0.00275699],
            [-0.00795211, 0.0, 0.0163757, -0.00541632],
            [-0.00799364, -0.0163757, 0.0, 0.00106851],
            [0.00275699, 0.00541632, -0.00106851, 0.0],
        ];
        let mut rho = DensityMatrix::zero();
        for i in 0..4 {
            for j in 0..4 {
                rho.0[i][j] = Complex64::new(re[i][j], im[i][j]);
            }
        }
        let d = error_decomposition(&rho);
        assert!((d.f - 0.487046).abs() < 1e-6);
        assert!((d.x - 0.512954).abs() < 1e-6);
        assert!((d.z - 0.00895361).abs() < 1e-6);
        assert!((d.y - -0.00895361).abs() < 1e-6);
    }

    #[test]
    fn aggregate_hand_checked_values() {
        let trials = [
            TrialStats {
                fidelity_reconstructed: 0.6,
                fidelity_actual: 0.7,
                throughput: 100.0,
            },
            TrialStats {
                fidelity_reconstructed: 0.8,
                fidelity_actual: 0.7,
                throughput: 300.0,
            },
        ];
        let a = aggregate(&trials);
        assert!((a.mean_fidelity - 0.7).abs() < 1e-12);
        assert!((a.stddev_fidelity - 0.1414).abs() < 1e-3);
        assert!((a.mean_abs_diff - 0.1).abs() < 1e-12);
        assert!((a.min_fidelity - 0.6).abs() < 1e-12);
        assert!((a.max_fidelity - 0.8).abs() < 1e-12);
        assert!((a.mean_throughput - 200.0).abs() < 1e-12);

        let single = aggregate(&trials[..1]);
        assert_eq!(single.stddev_fidelity, 0.0);
    }

    #[test]
    fn aggregate_variance_matches_the_estimator_bound() {
        // Synthetic trials from a uniform spread: the sample sigma must
        // land near the population value within estimator variance.
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let n = 400;
        let sigma_true = 0.05f64;
        let trials: Vec<TrialStats> = (0..n)
            .map(|_| {
                // Sum of 12 uniforms approximates a unit normal.
                let z: f64 = (0..12).map(|_| rng.gen::<f64>()).sum::<f64>() - 6.0;
                TrialStats {
                    fidelity_reconstructed: 0.7 + sigma_true * z,
                    fidelity_actual: 0.7,
                    throughput: 1.0,
                }
            })
            .collect();
        let a = aggregate(&trials);
        // sigma of the sigma estimator is about sigma/sqrt(2(n-1)).
        let bound = 4.0 * sigma_true / (2.0 * (n as f64 - 1.0)).sqrt();
        assert!((a.stddev_fidelity - sigma_true).abs() < bound);
    }
}
