//! Itô Euler–Maruyama steppers for the quantum state diffusion and quantum
//! jump unravellings, and a trajectory driver.
//!
//! Noise comes from ChaCha8 (`rand_chacha::ChaCha8Rng`). Each trajectory owns
//! the stream `(run seed, trajectory index)`: the run seed keys the generator
//! and the trajectory index selects its 64-bit stream id, so a trajectory's
//! noise does not depend on which worker runs it or when.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::{leakage_of, norm, SparseOperator, StateVector, C64};
use crate::models::SystemModel;
use crate::observables::{entanglement_entropy, ObservableError};

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unravelling {
    Qsd,
    Jumps,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    ComplexWiener,
    Poisson,
}

/// Seeded noise source for one trajectory.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    seed: u64,
    stream: u64,
    kind: NoiseKind,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64, kind: NoiseKind) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, kind, rng }
    }

    pub fn for_unravelling(seed: u64, stream: u64, unravelling: Unravelling) -> Self {
        let kind = match unravelling {
            Unravelling::Qsd => NoiseKind::ComplexWiener,
            Unravelling::Jumps => NoiseKind::Poisson,
        };
        Self::new(seed, stream, kind)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    /// Complex Wiener increment with `E[dξ] = E[dξ²] = 0`, `E[|dξ|²] = dt`.
    pub fn complex_wiener(&mut self, dt: f64) -> C64 {
        let scale = (0.5 * dt).sqrt();
        let re: f64 = self.rng.sample(StandardNormal);
        let im: f64 = self.rng.sample(StandardNormal);
        C64::new(re, im) * scale
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    /// Time step in τ.
    pub dt: f64,
    pub renormalize: bool,
    pub unravelling: Unravelling,
    /// Abort once top-10% population exceeds this; `None` disables the check.
    pub leakage_limit: Option<f64>,
    /// Upper bound on `⟨L†L⟩ dt` per channel for the jump unravelling.
    pub max_jump_probability: f64,
}

impl StepperConfig {
    pub const DEFAULT_LEAKAGE_LIMIT: f64 = 1e-4;
    pub const DEFAULT_MAX_JUMP_PROBABILITY: f64 = 0.1;

    pub fn new(unravelling: Unravelling, dt: f64) -> Self {
        Self {
            dt,
            renormalize: true,
            unravelling,
            leakage_limit: Some(Self::DEFAULT_LEAKAGE_LIMIT),
            max_jump_probability: Self::DEFAULT_MAX_JUMP_PROBABILITY,
        }
    }

    pub fn validate(&self) -> Result<(), StepError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(StepError::InvalidTimeStep(self.dt));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("state dimension {found} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("leakage {leakage:e} exceeds limit {limit:e} at tau = {tau}")]
    Leakage { tau: f64, leakage: f64, limit: f64 },
    #[error("jump probability {probability} on channel {channel} exceeds {limit} at tau = {tau}; reduce dt")]
    JumpRateTooHigh {
        tau: f64,
        channel: usize,
        probability: f64,
        limit: f64,
    },
    #[error("state became non-finite or vanished at tau = {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Observable(#[from] ObservableError),
}

/// Outcome of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    /// `‖ψ + dψ‖ - 1` before renormalisation.
    pub norm_drift: f64,
    pub leakage: f64,
    pub jumped: Option<usize>,
    /// Sum over channels of `⟨L†L⟩ dt`, the expected jump count for the step.
    pub jump_probability: f64,
}

/// Reusable stepping context: precomputed `L†L` and scratch buffers.
pub struct Stepper<'m> {
    model: &'m SystemModel,
    config: StepperConfig,
    decay_ops: Vec<SparseOperator>,
    masks: Vec<Vec<bool>>,
    h_psi: Vec<C64>,
    l_psi: Vec<Vec<C64>>,
    k_psi: Vec<Vec<C64>>,
    next: Vec<C64>,
}

impl<'m> Stepper<'m> {
    pub fn new(model: &'m SystemModel, config: StepperConfig) -> Result<Self, StepError> {
        config.validate()?;
        let dim = model.space().dim();
        let decay_ops = model
            .lindblad_ops()
            .iter()
            .map(|l| l.adjoint().matmul(l).expect("square operators").into_hermitian().expect("L†L is Hermitian"))
            .collect();
        let channels = model.lindblad_ops().len();
        Ok(Self {
            model,
            config,
            decay_ops,
            masks: model.space().leakage_masks(),
            h_psi: vec![ZERO; dim],
            l_psi: vec![vec![ZERO; dim]; channels],
            k_psi: vec![vec![ZERO; dim]; channels],
            next: vec![ZERO; dim],
        })
    }

    pub fn config(&self) -> &StepperConfig {
        &self.config
    }

    pub fn model(&self) -> &SystemModel {
        self.model
    }

    pub fn step(&mut self, psi: &mut [C64], tau: f64, noise: &mut NoiseStream) -> Result<StepReport, StepError> {
        match self.config.unravelling {
            Unravelling::Qsd => self.qsd_step(psi, tau, noise),
            Unravelling::Jumps => self.jump_step(psi, tau, noise),
        }
    }

    fn check_dim(&self, psi: &[C64]) -> Result<(), StepError> {
        let expected = self.model.space().dim();
        if psi.len() != expected {
            Err(StepError::DimensionMismatch {
                expected,
                found: psi.len(),
            })
        } else {
            Ok(())
        }
    }

    /// `dψ = -iHψ dt + Σ_j [⟨L_j†⟩L_j - ½L_j†L_j - ½⟨L_j†⟩⟨L_j⟩]ψ dt + Σ_j (L_j - ⟨L_j⟩)ψ dξ_j`
    /// with expectations in the pre-step state.
    pub fn qsd_step(&mut self, psi: &mut [C64], tau: f64, noise: &mut NoiseStream) -> Result<StepReport, StepError> {
        self.check_dim(psi)?;
        let dt = self.config.dt;
        self.model.apply_hamiltonian(tau, psi, &mut self.h_psi);
        for (v, h) in self.next.iter_mut().zip(&self.h_psi) {
            *v = -I * dt * h;
        }
        for (j, l) in self.model.lindblad_ops().iter().enumerate() {
            l.apply_into(psi, &mut self.l_psi[j]);
            self.decay_ops[j].apply_into(psi, &mut self.k_psi[j]);
            let mean_l: C64 = psi.iter().zip(&self.l_psi[j]).map(|(a, b)| a.conj() * b).sum();
            let dxi = noise.complex_wiener(dt);
            let drift_scalar = -0.5 * mean_l.norm_sqr() * dt;
            let coeff_l = mean_l.conj() * dt + dxi;
            let coeff_psi = drift_scalar - mean_l * dxi;
            for (((v, lp), kp), p) in self.next.iter_mut().zip(&self.l_psi[j]).zip(&self.k_psi[j]).zip(psi.iter()) {
                *v += coeff_l * lp - 0.5 * dt * kp + coeff_psi * p;
            }
        }
        for (v, p) in self.next.iter_mut().zip(psi.iter()) {
            *v += p;
        }
        self.finish(psi, tau, None, 0.0)
    }

    /// One jump-unravelling step: with probability `⟨L_j†L_j⟩ dt` apply
    /// `ψ → L_jψ/‖L_jψ‖`; otherwise follow the no-jump drift
    /// `[-iH - ½Σ_j(L_j†L_j - ⟨L_j†L_j⟩)]ψ dt`. A single uniform draw is
    /// partitioned into channel intervals, so at most one channel fires.
    pub fn jump_step(&mut self, psi: &mut [C64], tau: f64, noise: &mut NoiseStream) -> Result<StepReport, StepError> {
        self.check_dim(psi)?;
        let dt = self.config.dt;
        let mut probabilities = Vec::with_capacity(self.decay_ops.len());
        for (j, k) in self.decay_ops.iter().enumerate() {
            k.apply_into(psi, &mut self.k_psi[j]);
            let mean_k: f64 = psi.iter().zip(&self.k_psi[j]).map(|(a, b)| (a.conj() * b).re).sum();
            let p = mean_k.max(0.0) * dt;
            if p >= self.config.max_jump_probability {
                return Err(StepError::JumpRateTooHigh {
                    tau,
                    channel: j,
                    probability: p,
                    limit: self.config.max_jump_probability,
                });
            }
            probabilities.push(p);
        }
        let total: f64 = probabilities.iter().sum();
        let u = noise.uniform();
        let mut edge = 0.0;
        let mut fired = None;
        for (j, p) in probabilities.iter().enumerate() {
            edge += p;
            if u < edge {
                fired = Some(j);
                break;
            }
        }
        if let Some(j) = fired {
            self.model.lindblad_ops()[j].apply_into(psi, &mut self.next);
        } else {
            self.model.apply_hamiltonian(tau, psi, &mut self.h_psi);
            for ((v, h), p) in self.next.iter_mut().zip(&self.h_psi).zip(psi.iter()) {
                *v = p - I * dt * h;
            }
            for (j, k_psi) in self.k_psi.iter().enumerate() {
                let mean_k = probabilities[j] / dt;
                for ((v, kp), p) in self.next.iter_mut().zip(k_psi).zip(psi.iter()) {
                    *v -= 0.5 * dt * (kp - mean_k * p);
                }
            }
        }
        self.finish(psi, tau, fired, total)
    }

    fn finish(
        &mut self,
        psi: &mut [C64],
        tau: f64,
        jumped: Option<usize>,
        jump_probability: f64,
    ) -> Result<StepReport, StepError> {
        let n = norm(&self.next);
        if !(n.is_finite() && n > 0.0) {
            return Err(StepError::NonFinite(tau));
        }
        let norm_drift = n - 1.0;
        // After a jump the state is always normalised.
        let scale = if self.config.renormalize || jumped.is_some() { 1.0 / n } else { 1.0 };
        for (p, v) in psi.iter_mut().zip(&self.next) {
            *p = v * scale;
        }
        let leakage = leakage_of(psi, &self.masks) / (n * scale).powi(2);
        if let Some(limit) = self.config.leakage_limit {
            if leakage > limit {
                return Err(StepError::Leakage {
                    tau: tau + self.config.dt,
                    leakage,
                    limit,
                });
            }
        }
        Ok(StepReport {
            norm_drift: if jumped.is_some() { 0.0 } else { norm_drift },
            leakage,
            jumped,
            jump_probability,
        })
    }
}

/// Single QSD step on a normalised state.
pub fn qsd_step(
    psi: &StateVector,
    model: &SystemModel,
    tau: f64,
    dt: f64,
    noise: &mut NoiseStream,
) -> Result<StateVector, StepError> {
    let mut stepper = Stepper::new(model, StepperConfig::new(Unravelling::Qsd, dt))?;
    let mut amps = psi.amplitudes().to_vec();
    stepper.qsd_step(&mut amps, tau, noise)?;
    Ok(StateVector::from_normalized(amps))
}

/// Single quantum-jump step on a normalised state.
pub fn jump_step(
    psi: &StateVector,
    model: &SystemModel,
    tau: f64,
    dt: f64,
    noise: &mut NoiseStream,
) -> Result<StateVector, StepError> {
    let mut stepper = Stepper::new(model, StepperConfig::new(Unravelling::Jumps, dt))?;
    let mut amps = psi.amplitudes().to_vec();
    stepper.jump_step(&mut amps, tau, noise)?;
    Ok(StateVector::from_normalized(amps))
}

/// Time window and sampling cadence of a trajectory, in τ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub start: f64,
    pub steps: usize,
    /// Record every this many steps (the initial state is always recorded).
    pub record_every: usize,
}

impl TimeSpan {
    pub fn record_times(&self, dt: f64) -> Vec<f64> {
        let every = self.record_every.max(1);
        (0..=self.steps)
            .filter(|k| k % every == 0)
            .map(|k| self.start + k as f64 * dt)
            .collect()
    }
}

/// Recorded history of one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    pub index: u64,
    pub unravelling: Unravelling,
    pub times: Vec<f64>,
    /// `⟨x_k⟩` per mode, per recorded time.
    pub positions: Vec<Vec<f64>>,
    /// `⟨p_k⟩` per mode, per recorded time.
    pub momenta: Vec<Vec<f64>>,
    /// Entropy of entanglement (nats); empty for single-mode models.
    pub entropy: Vec<f64>,
    pub leakage: Vec<f64>,
    pub max_leakage: f64,
    /// Largest `|‖ψ + dψ‖ - 1|` over no-jump steps.
    pub max_norm_drift: f64,
    /// `(τ, channel)` of every jump.
    pub jumps: Vec<(f64, usize)>,
    /// Accumulated `Σ ⟨L†L⟩ dt`.
    pub expected_jumps: f64,
    pub abort: Option<String>,
    #[serde(skip)]
    pub final_state: Option<StateVector>,
}

impl TrajectoryRecord {
    pub fn is_valid(&self) -> bool {
        self.abort.is_none()
    }
}

fn record_point(
    record: &mut TrajectoryRecord,
    model: &SystemModel,
    psi: &StateVector,
    tau: f64,
    leakage: f64,
) -> Result<(), StepError> {
    record.times.push(tau);
    for (k, (x, p)) in model.positions().iter().zip(model.momenta()).enumerate() {
        record.positions[k].push(x.expectation_raw(psi.amplitudes()).re);
        record.momenta[k].push(p.expectation_raw(psi.amplitudes()).re);
    }
    if model.space().n_modes() == 2 {
        record.entropy.push(entanglement_entropy(psi, model.space())?);
    }
    record.leakage.push(leakage);
    Ok(())
}

/// Integrate one trajectory. The result is a deterministic function of
/// `(model, psi0, config, seed, index, span)`. Step failures end the
/// trajectory and are reported in `abort`; the record keeps what was
/// computed up to that point.
pub fn run_trajectory(
    model: &SystemModel,
    psi0: &StateVector,
    config: &StepperConfig,
    seed: u64,
    index: u64,
    span: &TimeSpan,
) -> Result<TrajectoryRecord, StepError> {
    let mut stepper = Stepper::new(model, *config)?;
    stepper.check_dim(psi0.amplitudes())?;
    let mut noise = NoiseStream::for_unravelling(seed, index, config.unravelling);
    let n_modes = model.space().n_modes();
    let mut record = TrajectoryRecord {
        seed,
        index,
        unravelling: config.unravelling,
        times: Vec::new(),
        positions: vec![Vec::new(); n_modes],
        momenta: vec![Vec::new(); n_modes],
        entropy: Vec::new(),
        leakage: Vec::new(),
        max_leakage: 0.0,
        max_norm_drift: 0.0,
        jumps: Vec::new(),
        expected_jumps: 0.0,
        abort: None,
        final_state: None,
    };
    let every = span.record_every.max(1);
    let mut amps = psi0.amplitudes().to_vec();
    let initial_leakage = psi0.leakage(model.space());
    record.max_leakage = initial_leakage;
    record_point(&mut record, model, psi0, span.start, initial_leakage)?;
    for k in 0..span.steps {
        let tau = span.start + k as f64 * config.dt;
        match stepper.step(&mut amps, tau, &mut noise) {
            Ok(report) => {
                record.max_leakage = record.max_leakage.max(report.leakage);
                record.max_norm_drift = record.max_norm_drift.max(report.norm_drift.abs());
                record.expected_jumps += report.jump_probability;
                if let Some(ch) = report.jumped {
                    record.jumps.push((tau + config.dt, ch));
                }
                if (k + 1) % every == 0 {
                    let psi = StateVector::from_normalized(amps.clone());
                    record_point(&mut record, model, &psi, span.start + (k + 1) as f64 * config.dt, report.leakage)?;
                }
            }
            Err(StepError::Leakage { tau, leakage, limit }) => {
                record.max_leakage = record.max_leakage.max(leakage);
                record.abort = Some(StepError::Leakage { tau, leakage, limit }.to_string());
                break;
            }
            Err(e @ (StepError::JumpRateTooHigh { .. } | StepError::NonFinite(_))) => {
                record.abort = Some(e.to_string());
                break;
            }
            Err(e) => return Err(e),
        }
    }
    record.final_state = Some(StateVector::from_normalized(amps));
    Ok(record)
}
