//! Expectation values, entanglement entropy and ensemble statistics.
//!
//! Ensemble moments are accumulated in fixed point (`i128`), so merging
//! partial ensembles is exact integer addition: the result does not depend on
//! how trajectories were grouped or in which order workers finished.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{partial_trace, FockSpace, HilbertError, SparseOperator, StateVector, C64};

/// Eigenvalues at or below this contribute nothing to the entropy.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;
/// Eigenvalues below this are treated as numerical corruption.
pub const NEGATIVE_EIGENVALUE_LIMIT: f64 = -1e-8;
/// Default relative settling tolerance.
pub const DEFAULT_SETTLE_TOLERANCE: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
    #[error("reduced density matrix has eigenvalue {0:e} below -1e-8")]
    NegativeEigenvalue(f64),
    #[error("value {0} cannot be accumulated (non-finite or |v| >= 2^30)")]
    Unaccumulable(f64),
    #[error("moment accumulator overflow")]
    Overflow,
    #[error("series length {found} does not match {expected} time points")]
    LengthMismatch { expected: usize, found: usize },
    #[error("ensembles disagree on {0}")]
    Incompatible(&'static str),
    #[error("averaging window needs at least 2 points, has {0}")]
    WindowTooShort(usize),
    #[error("ensemble is empty")]
    Empty,
}

/// `⟨ψ|A|ψ⟩`.
pub fn expectation(psi: &StateVector, op: &SparseOperator) -> Result<C64, ObservableError> {
    if op.dim() != psi.dim() {
        return Err(HilbertError::DimensionMismatch {
            expected: op.dim(),
            found: psi.dim(),
        }
        .into());
    }
    Ok(op.expectation_raw(psi.amplitudes()))
}

/// `-Σ λ ln λ` in nats over eigenvalues above [`EIGENVALUE_FLOOR`].
pub fn von_neumann_entropy(eigenvalues: &[f64]) -> Result<f64, ObservableError> {
    let mut s = 0.0;
    for &l in eigenvalues {
        if l < NEGATIVE_EIGENVALUE_LIMIT {
            return Err(ObservableError::NegativeEigenvalue(l));
        }
        if l > EIGENVALUE_FLOOR {
            s -= l * l.ln();
        }
    }
    Ok(s.max(0.0))
}

/// Entropy of entanglement of a two-mode pure state, from the reduced state of
/// `keep`.
pub fn entanglement_entropy_of(psi: &StateVector, space: &FockSpace, keep: usize) -> Result<f64, ObservableError> {
    let rho = partial_trace(psi, space, keep)?;
    von_neumann_entropy(&rho.eigenvalues())
}

/// Entropy of entanglement `S(ρ₁) = -Tr ρ₁ ln ρ₁` (nats).
pub fn entanglement_entropy(psi: &StateVector, space: &FockSpace) -> Result<f64, ObservableError> {
    entanglement_entropy_of(psi, space, 0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropySample {
    pub tau: f64,
    /// nats
    pub entropy: f64,
    pub leakage: f64,
}

const SUM_SCALE: f64 = 18_446_744_073_709_551_616.0; // 2^64
const SQ_SCALE: f64 = 281_474_976_710_656.0; // 2^48
const MAX_ABS: f64 = 1_073_741_824.0; // 2^30

/// Count, sum and sum of squares in fixed point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Moments {
    count: u64,
    sum: i128,
    sum_sq: i128,
}

impl Moments {
    pub fn push(&mut self, v: f64) -> Result<(), ObservableError> {
        if !v.is_finite() || v.abs() >= MAX_ABS {
            return Err(ObservableError::Unaccumulable(v));
        }
        let s = (v * SUM_SCALE).round() as i128;
        let q = (v * v * SQ_SCALE).round() as i128;
        self.sum = self.sum.checked_add(s).ok_or(ObservableError::Overflow)?;
        self.sum_sq = self.sum_sq.checked_add(q).ok_or(ObservableError::Overflow)?;
        self.count += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<(), ObservableError> {
        self.sum = self.sum.checked_add(other.sum).ok_or(ObservableError::Overflow)?;
        self.sum_sq = self.sum_sq.checked_add(other.sum_sq).ok_or(ObservableError::Overflow)?;
        self.count += other.count;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        self.sum as f64 / SUM_SCALE / self.count as f64
    }

    /// Unbiased sample variance, clamped at zero.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let mean = self.mean();
        let second = self.sum_sq as f64 / SQ_SCALE / n;
        ((second - mean * mean) * n / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.variance() / self.count as f64).sqrt()
    }
}

/// Point-by-point ensemble moments of one observable, plus moments of each
/// trajectory's post-transient time average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub observable: String,
    pub times: Vec<f64>,
    pub points: Vec<Moments>,
    /// Moments of per-trajectory means over `times[window_start..]`.
    pub window_means: Moments,
    pub window_start: usize,
}

impl EnsembleStats {
    /// Empty ensemble over `times`; the first `transient_fraction` of the
    /// points is excluded from time averages.
    pub fn new(observable: impl Into<String>, times: Vec<f64>, transient_fraction: f64) -> Self {
        let n = times.len();
        let frac = transient_fraction.clamp(0.0, 1.0);
        let window_start = ((n as f64) * frac).floor() as usize;
        Self {
            observable: observable.into(),
            points: vec![Moments::default(); n],
            times,
            window_means: Moments::default(),
            window_start: window_start.min(n),
        }
    }

    pub fn count(&self) -> u64 {
        self.window_means.count()
    }

    /// Add one trajectory's series, sampled at `self.times`.
    pub fn push_series(&mut self, values: &[f64]) -> Result<(), ObservableError> {
        if values.len() != self.times.len() {
            return Err(ObservableError::LengthMismatch {
                expected: self.times.len(),
                found: values.len(),
            });
        }
        let window = &values[self.window_start..];
        if window.is_empty() {
            return Err(ObservableError::WindowTooShort(0));
        }
        let mut points = self.points.clone();
        for (m, &v) in points.iter_mut().zip(values) {
            m.push(v)?;
        }
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        self.window_means.push(mean)?;
        self.points = points;
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<(), ObservableError> {
        if self.observable != other.observable {
            return Err(ObservableError::Incompatible("observable"));
        }
        if self.times != other.times || self.window_start != other.window_start {
            return Err(ObservableError::Incompatible("time grid"));
        }
        for (a, b) in self.points.iter_mut().zip(&other.points) {
            a.merge(b)?;
        }
        self.window_means.merge(&other.window_means)
    }

    pub fn means(&self) -> Vec<f64> {
        self.points.iter().map(Moments::mean).collect()
    }
}

/// Time-and-ensemble average over the post-transient window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettledMean {
    pub mean: f64,
    pub stderr: f64,
    pub settled: bool,
    /// Means of the earlier and later halves of the window.
    pub block_means: (f64, f64),
    pub trajectories: u64,
}

fn mean_of(points: &[Moments]) -> f64 {
    points.iter().map(Moments::mean).sum::<f64>() / points.len() as f64
}

const SINGLE_TRAJECTORY_BATCHES: usize = 8;

/// Settled mean of an ensemble.
///
/// The standard error comes from the spread of per-trajectory time averages;
/// with a single trajectory it falls back to batch means over the window.
/// `settled` requires the two window halves to agree and the standard error
/// to be within `tolerance` of the mean.
pub fn settled_mean(stats: &EnsembleStats, tolerance: f64) -> Result<SettledMean, ObservableError> {
    let window = &stats.points[stats.window_start..];
    if window.len() < 2 {
        return Err(ObservableError::WindowTooShort(window.len()));
    }
    let n_traj = stats.window_means.count();
    if n_traj == 0 {
        return Err(ObservableError::Empty);
    }
    let half = window.len() / 2;
    let block_means = (mean_of(&window[..half]), mean_of(&window[half..]));
    let mean = stats.window_means.mean();
    let stderr = if n_traj >= 2 {
        stats.window_means.stderr()
    } else {
        let batches = SINGLE_TRAJECTORY_BATCHES.min(window.len());
        let size = window.len() / batches;
        let mut m = Moments::default();
        for b in 0..batches {
            m.push(mean_of(&window[b * size..(b + 1) * size]))?;
        }
        m.stderr()
    };
    let scale = tolerance * mean.abs();
    let settled = (block_means.0 - block_means.1).abs() <= scale && stderr <= scale;
    Ok(SettledMean {
        mean,
        stderr,
        settled,
        block_means,
        trajectories: n_traj,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{annihilation, number, position, FockSpace};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn simple_expectations() {
        let s = FockSpace::single(30).unwrap();
        let vac = StateVector::fock(&s, &[0]).unwrap();
        assert_eq!(expectation(&vac, &number(&s, 0).unwrap()).unwrap(), C64::new(0.0, 0.0));
        let alpha = C64::new(0.8, 0.4);
        let coh = StateVector::coherent(&s, &[alpha]).unwrap();
        let a = annihilation(&s, 0).unwrap();
        assert!((expectation(&coh, &a).unwrap() - alpha).norm() < 1e-10);
        let x = position(&s, 0).unwrap();
        for n in 0..30 {
            let psi = StateVector::fock(&s, &[n]).unwrap();
            assert_eq!(expectation(&psi, &x).unwrap().norm(), 0.0);
        }
        let small = FockSpace::single(3).unwrap();
        assert!(expectation(&vac, &number(&small, 0).unwrap()).is_err());
    }

    #[test]
    fn entropy_of_basic_states() {
        let s = FockSpace::pair(4).unwrap();
        let prod = StateVector::fock(&s, &[2, 1]).unwrap();
        assert!(entanglement_entropy(&prod, &s).unwrap().abs() < 1e-10);
        let mut amps = vec![C64::new(0.0, 0.0); 16];
        amps[0] = C64::new(1.0, 0.0);
        amps[5] = C64::new(1.0, 0.0);
        let bell = StateVector::new(amps).unwrap();
        assert!((entanglement_entropy(&bell, &s).unwrap() - 2f64.ln()).abs() < 1e-10);
        let single = FockSpace::single(4).unwrap();
        let psi = StateVector::fock(&single, &[0]).unwrap();
        assert!(entanglement_entropy(&psi, &single).is_err());
    }

    #[test]
    fn entropy_floor_and_corruption() {
        assert_eq!(von_neumann_entropy(&[1.0, 1e-13, -1e-9]).unwrap(), 0.0);
        assert!(matches!(
            von_neumann_entropy(&[1.0, -1e-6]),
            Err(ObservableError::NegativeEigenvalue(_))
        ));
    }

    #[test]
    fn moments_basic() {
        let mut m = Moments::default();
        for v in [1.0, 2.0, 3.0, 4.0] {
            m.push(v).unwrap();
        }
        assert_eq!(m.mean(), 2.5);
        assert!((m.variance() - 5.0 / 3.0).abs() < 1e-12);
        assert!(m.push(f64::NAN).is_err());
        assert!(m.push(2e9).is_err());
    }

    fn stats_from(series: &[Vec<f64>], transient: f64) -> EnsembleStats {
        let times: Vec<f64> = (0..series[0].len()).map(|k| k as f64).collect();
        let mut st = EnsembleStats::new("S", times, transient);
        for s in series {
            st.push_series(s).unwrap();
        }
        st
    }

    #[test]
    fn constant_series_settles_immediately() {
        let st = stats_from(&[vec![0.4; 40], vec![0.4; 40]], 0.25);
        let r = settled_mean(&st, 0.01).unwrap();
        assert!(r.settled);
        assert_eq!(r.stderr, 0.0);
        assert!((r.mean - 0.4).abs() < 1e-15);
        let single = stats_from(&[vec![0.4; 40]], 0.25);
        assert!(settled_mean(&single, 0.01).unwrap().settled);
    }

    #[test]
    fn drifting_series_does_not_settle() {
        let series: Vec<f64> = (0..200).map(|k| 1.0 + 0.01 * k as f64).collect();
        let st = stats_from(&[series.clone(), series], 0.25);
        assert!(!settled_mean(&st, 0.01).unwrap().settled);
    }

    #[test]
    fn iid_noise_mean_within_four_standard_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = 0.7;
        let series: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..64).map(|_| m + 0.2 * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let st = stats_from(&series, 0.25);
        let r = settled_mean(&st, 0.01).unwrap();
        assert!(r.stderr > 0.0);
        assert!((r.mean - m).abs() < 4.0 * r.stderr, "{r:?}");
    }

    #[test]
    fn window_too_short() {
        let st = stats_from(&[vec![1.0; 2]], 0.5);
        assert!(matches!(settled_mean(&st, 0.01), Err(ObservableError::WindowTooShort(1))));
    }

    #[test]
    fn merge_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let series: Vec<Vec<f64>> = (0..30).map(|_| (0..16).map(|_| rng.random::<f64>()).collect()).collect();
        let whole = stats_from(&series, 0.25);
        let mut left = stats_from(&series[..11], 0.25);
        let right = stats_from(&series[11..], 0.25);
        left.merge(&right).unwrap();
        assert_eq!(left, whole);
        assert_eq!(settled_mean(&left, 0.01).unwrap(), settled_mean(&whole, 0.01).unwrap());
    }
}
