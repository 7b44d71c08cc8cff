//! Trajectory ensembles: parallel execution over a bounded worker pool with
//! results folded in trajectory-index order, so every aggregate is
//! independent of the number of workers.

use std::ops::Range;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::hilbert::{DensityMatrix, StateVector, C64};
use crate::models::SystemModel;
use crate::observables::{EnsembleStats, ObservableError};
use crate::stochastic::{run_trajectory, StepError, StepperConfig, TimeSpan, TrajectoryRecord};

pub const ENTROPY: &str = "entropy_nats";
pub const LEAKAGE: &str = "leakage";

/// Trajectories handed to the pool at once; results are folded after each
/// chunk, so memory stays bounded and checkpoints stay ordered.
pub const CHUNK_SIZE: usize = 64;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("trajectory {0} has a different time grid")]
    TimeGrid(u64),
    #[error("no valid trajectories")]
    Empty,
}

/// Observable names recorded for a model with `n_modes` modes.
pub fn observable_names(n_modes: usize) -> Vec<String> {
    let mut names = Vec::new();
    for k in 0..n_modes {
        names.push(format!("x{k}"));
        names.push(format!("p{k}"));
    }
    if n_modes == 2 {
        names.push(ENTROPY.to_string());
    }
    names.push(LEAKAGE.to_string());
    names
}

fn series(record: &TrajectoryRecord) -> Vec<&[f64]> {
    let mut out: Vec<&[f64]> = Vec::new();
    for (x, p) in record.positions.iter().zip(&record.momenta) {
        out.push(x);
        out.push(p);
    }
    if record.positions.len() == 2 {
        out.push(&record.entropy);
    }
    out.push(&record.leakage);
    out
}

/// Running aggregate of an ensemble. Aborted trajectories are counted but
/// excluded from the statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleAccumulator {
    pub stats: Vec<EnsembleStats>,
    pub valid: u64,
    pub invalid: u64,
    pub max_leakage: f64,
    pub jumps: u64,
    pub expected_jumps: f64,
    pub aborts: Vec<(u64, String)>,
}

impl EnsembleAccumulator {
    pub fn new(n_modes: usize, times: Vec<f64>, transient_fraction: f64) -> Self {
        let stats = observable_names(n_modes)
            .into_iter()
            .map(|name| EnsembleStats::new(name, times.clone(), transient_fraction))
            .collect();
        Self {
            stats,
            valid: 0,
            invalid: 0,
            max_leakage: 0.0,
            jumps: 0,
            expected_jumps: 0.0,
            aborts: Vec::new(),
        }
    }

    pub fn stat(&self, observable: &str) -> Option<&EnsembleStats> {
        self.stats.iter().find(|s| s.observable == observable)
    }

    pub fn absorb(&mut self, record: &TrajectoryRecord) -> Result<(), EnsembleError> {
        self.max_leakage = self.max_leakage.max(record.max_leakage);
        if !record.is_valid() {
            self.invalid += 1;
            self.aborts
                .push((record.index, record.abort.clone().unwrap_or_default()));
            return Ok(());
        }
        let times = &self.stats[0].times;
        if record.times.len() != times.len() {
            return Err(EnsembleError::TimeGrid(record.index));
        }
        for (stat, values) in self.stats.iter_mut().zip(series(record)) {
            stat.push_series(values)?;
        }
        self.valid += 1;
        self.jumps += record.jumps.len() as u64;
        self.expected_jumps += record.expected_jumps;
        Ok(())
    }
}

/// Ensemble definition shared by every trajectory.
#[derive(Clone, Copy, Debug)]
pub struct EnsembleSpec<'a> {
    pub model: &'a SystemModel,
    pub psi0: &'a StateVector,
    pub config: StepperConfig,
    pub seed: u64,
    pub span: TimeSpan,
}

impl EnsembleSpec<'_> {
    pub fn record_times(&self) -> Vec<f64> {
        self.span.record_times(self.config.dt)
    }

    pub fn run_one(&self, index: u64) -> Result<TrajectoryRecord, StepError> {
        run_trajectory(self.model, self.psi0, &self.config, self.seed, index, &self.span)
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, EnsembleError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| EnsembleError::Pool(e.to_string()))
}

/// Run trajectories `indices` on `workers` threads, calling `sink` with each
/// record in ascending index order.
pub fn for_each_trajectory<F>(
    spec: &EnsembleSpec<'_>,
    indices: Range<u64>,
    workers: usize,
    mut sink: F,
) -> Result<(), EnsembleError>
where
    F: FnMut(TrajectoryRecord) -> Result<(), EnsembleError>,
{
    let pool = pool(workers)?;
    let all: Vec<u64> = indices.collect();
    for chunk in all.chunks(CHUNK_SIZE) {
        let records: Vec<Result<TrajectoryRecord, StepError>> =
            pool.install(|| chunk.par_iter().map(|&i| spec.run_one(i)).collect());
        for record in records {
            sink(record?)?;
        }
    }
    Ok(())
}

/// Aggregate statistics of trajectories `indices`.
pub fn run_ensemble(
    spec: &EnsembleSpec<'_>,
    indices: Range<u64>,
    transient_fraction: f64,
    workers: usize,
) -> Result<EnsembleAccumulator, EnsembleError> {
    let mut acc = EnsembleAccumulator::new(spec.model.space().n_modes(), spec.record_times(), transient_fraction);
    for_each_trajectory(spec, indices, workers, |record| acc.absorb(&record))?;
    Ok(acc)
}

/// Ensemble-mean density matrix `Σ|ψ⟩⟨ψ| / n` of the final states of
/// trajectories `indices`.
pub fn ensemble_density(
    spec: &EnsembleSpec<'_>,
    indices: Range<u64>,
    workers: usize,
) -> Result<DensityMatrix, EnsembleError> {
    let dim = spec.model.space().dim();
    let mut sum = DMatrix::<C64>::zeros(dim, dim);
    let mut n = 0usize;
    for_each_trajectory(spec, indices, workers, |record| {
        if let (true, Some(psi)) = (record.is_valid(), record.final_state.as_ref()) {
            let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
            sum += &v * v.adjoint();
            n += 1;
        }
        Ok(())
    })?;
    if n == 0 {
        return Err(EnsembleError::Empty);
    }
    Ok(DensityMatrix::from_matrix_unchecked(sum / C64::new(n as f64, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::FockSpace;
    use crate::models::{duffing_pair, harmonic_mode, DuffingParams, HarmonicParams};
    use crate::stochastic::Unravelling;

    fn damped_mode() -> SystemModel {
        harmonic_mode(
            &HarmonicParams {
                zeta: 0.2,
                static_force: 0.0,
                drive_amplitude: 0.3,
                drive_omega: 1.0,
                damping_correction: true,
            },
            &FockSpace::single(12).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn names_by_mode_count() {
        assert_eq!(observable_names(1), ["x0", "p0", "leakage"]);
        assert_eq!(observable_names(2), ["x0", "p0", "x1", "p1", ENTROPY, LEAKAGE]);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let model = damped_mode();
        let psi0 = model.coherent_state(&[(1.0, 0.0)]).unwrap();
        for unravelling in [Unravelling::Qsd, Unravelling::Jumps] {
            let spec = EnsembleSpec {
                model: &model,
                psi0: &psi0,
                config: StepperConfig::new(unravelling, 0.01),
                seed: 11,
                span: TimeSpan {
                    start: 0.0,
                    steps: 200,
                    record_every: 20,
                },
            };
            let a = run_ensemble(&spec, 0..70, 0.25, 1).unwrap();
            let b = run_ensemble(&spec, 0..70, 0.25, 3).unwrap();
            assert_eq!(a, b);
            let mut split = run_ensemble(&spec, 0..30, 0.25, 2).unwrap();
            let rest = run_ensemble(&spec, 30..70, 0.25, 2).unwrap();
            for (s, r) in split.stats.iter_mut().zip(&rest.stats) {
                s.merge(r).unwrap();
            }
            assert_eq!(split.stats, a.stats);
        }
    }

    #[test]
    fn uncoupled_pair_has_no_entanglement() {
        // The Euler step drops the product of the two modes' increments, so
        // product states pick up entanglement at a rate that vanishes with dt.
        let params = DuffingParams {
            mu: 0.0,
            ..DuffingParams::default()
        };
        let model = duffing_pair(&params, &FockSpace::pair(10).unwrap()).unwrap();
        let psi0 = model.coherent_state(&[(0.5, 0.0), (-0.3, 0.2)]).unwrap();
        let spec = EnsembleSpec {
            model: &model,
            psi0: &psi0,
            config: StepperConfig {
                leakage_limit: None,
                ..StepperConfig::new(Unravelling::Qsd, 5e-5)
            },
            seed: 3,
            span: TimeSpan {
                start: 0.0,
                steps: 20_000,
                record_every: 2_000,
            },
        };
        for_each_trajectory(&spec, 0..4, 2, |record| {
            assert!(record.entropy.iter().all(|&s| s < 1e-6), "{:?}", record.entropy);
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn ensemble_density_is_a_state() {
        let model = damped_mode();
        let psi0 = model.coherent_state(&[(1.0, 0.0)]).unwrap();
        let spec = EnsembleSpec {
            model: &model,
            psi0: &psi0,
            config: StepperConfig::new(Unravelling::Jumps, 0.01),
            seed: 5,
            span: TimeSpan {
                start: 0.0,
                steps: 100,
                record_every: 100,
            },
        };
        let rho = ensemble_density(&spec, 0..20, 2).unwrap();
        assert!((rho.trace().re - 1.0).abs() < 1e-10);
        assert!(rho.eigenvalues().iter().all(|&e| e > -1e-10));
    }
}
