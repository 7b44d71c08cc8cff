//! Classical limits: the normalised RSJ equation for one SQUID ring and the
//! dissipative Duffing pair, integrated with fixed-step RK4, plus
//! entrained/chaotic regime classification from stroboscopic sections and
//! the largest Lyapunov exponent.
//!
//! The quantum models carry the damping in two places: the Hamiltonian term
//! `Γ/2 (qp + pq)` (Hamilton's equations give `q̇ += Γq`, `ṗ -= Γp`) and the
//! Lindblad channel `√(2Γ) a` (whose mean-field drift is `q̇ -= Γq`,
//! `ṗ -= Γp`). Summed, the position drift cancels and the momentum is damped
//! at `2Γ`, which is the classical equation of motion used here.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{DuffingParams, SquidDimensionlessParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassicalError {
    #[error("state became non-finite at t = {0}")]
    NonFinite(f64),
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("need at least {required} steps per drive period, got {found}")]
    UnderResolved { required: usize, found: usize },
    #[error("need {required} drive periods after the transient, got {found}")]
    TooShort { required: usize, found: usize },
}

/// Autonomous-in-form vector field `ẏ = f(t, y)` with its Jacobian action.
pub trait Flow<const D: usize> {
    fn rhs(&self, t: f64, y: &[f64; D]) -> [f64; D];
    /// `J(t, y) v`.
    fn tangent(&self, t: f64, y: &[f64; D], v: &[f64; D]) -> [f64; D];
}

fn axpy<const D: usize>(y: &[f64; D], a: f64, k: &[f64; D]) -> [f64; D] {
    std::array::from_fn(|i| y[i] + a * k[i])
}

fn rk4_combine<const D: usize>(y: &[f64; D], dt: f64, k: [[f64; D]; 4]) -> [f64; D] {
    std::array::from_fn(|i| y[i] + dt / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]))
}

pub fn rk4_step<F: Flow<D>, const D: usize>(flow: &F, t: f64, y: &[f64; D], dt: f64) -> [f64; D] {
    let k1 = flow.rhs(t, y);
    let k2 = flow.rhs(t + 0.5 * dt, &axpy(y, 0.5 * dt, &k1));
    let k3 = flow.rhs(t + 0.5 * dt, &axpy(y, 0.5 * dt, &k2));
    let k4 = flow.rhs(t + dt, &axpy(y, dt, &k3));
    rk4_combine(y, dt, [k1, k2, k3, k4])
}

/// RK4 step of the state together with a tangent vector.
fn rk4_step_tangent<F: Flow<D>, const D: usize>(
    flow: &F,
    t: f64,
    y: &[f64; D],
    v: &[f64; D],
    dt: f64,
) -> ([f64; D], [f64; D]) {
    let h = 0.5 * dt;
    let k1 = flow.rhs(t, y);
    let l1 = flow.tangent(t, y, v);
    let y2 = axpy(y, h, &k1);
    let v2 = axpy(v, h, &l1);
    let k2 = flow.rhs(t + h, &y2);
    let l2 = flow.tangent(t + h, &y2, &v2);
    let y3 = axpy(y, h, &k2);
    let v3 = axpy(v, h, &l2);
    let k3 = flow.rhs(t + h, &y3);
    let l3 = flow.tangent(t + h, &y3, &v3);
    let y4 = axpy(y, dt, &k3);
    let v4 = axpy(v, dt, &l3);
    let k4 = flow.rhs(t + dt, &y4);
    let l4 = flow.tangent(t + dt, &y4, &v4);
    (rk4_combine(y, dt, [k1, k2, k3, k4]), rk4_combine(v, dt, [l1, l2, l3, l4]))
}

/// Normalised RSJ ring, `y = [φ, dφ/dτ]`.
#[derive(Clone, Copy, Debug)]
pub struct RsjFlow {
    pub params: SquidDimensionlessParams,
}

/// `φ'' = -2ζφ' - φ - (β/2π) sin[2π(φ + φ_x)] + φ_d sin(ωτ)`.
pub fn rsj_rhs(state: &[f64; 2], tau: f64, p: &SquidDimensionlessParams) -> [f64; 2] {
    let [phi, dphi] = *state;
    let josephson = p.beta / (2.0 * PI) * (2.0 * PI * (phi + p.phi_x)).sin();
    [dphi, -2.0 * p.zeta * dphi - phi - josephson + p.phi_d * (p.omega * tau).sin()]
}

impl Flow<2> for RsjFlow {
    fn rhs(&self, t: f64, y: &[f64; 2]) -> [f64; 2] {
        rsj_rhs(y, t, &self.params)
    }

    fn tangent(&self, _t: f64, y: &[f64; 2], v: &[f64; 2]) -> [f64; 2] {
        let p = &self.params;
        let stiffness = 1.0 + p.beta * (2.0 * PI * (y[0] + p.phi_x)).cos();
        [v[1], -stiffness * v[0] - 2.0 * p.zeta * v[1]]
    }
}

/// Classical Duffing pair, `y = [q₁, p₁, q₂, p₂]`, time in drive units
/// (period 2π).
#[derive(Clone, Copy, Debug)]
pub struct DuffingPairFlow {
    pub params: DuffingParams,
}

/// Hamilton's equations of the Duffing pair Hamiltonian plus the Lindblad
/// mean-field drift: `q̇ = p`, `ṗ = -β²q³ + q - (g/β)cos t - 2Γp - μ q_other`.
pub fn duffing_classical_rhs(state: &[f64; 4], t: f64, params: &DuffingParams) -> [f64; 4] {
    let DuffingParams { beta, g, gamma, mu } = *params;
    let drive = g / beta * t.cos();
    let mut out = [0.0; 4];
    for i in 0..2 {
        let q = state[2 * i];
        let p = state[2 * i + 1];
        let other = state[2 * (1 - i)];
        // Hamiltonian part, including Γ/2 (qp + pq).
        let dq_h = p + gamma * q;
        let dp_h = -beta * beta * q * q * q + q - drive - gamma * p - mu * other;
        // Drift of the Lindblad channel √(2Γ) a.
        out[2 * i] = dq_h - gamma * q;
        out[2 * i + 1] = dp_h - gamma * p;
    }
    out
}

impl Flow<4> for DuffingPairFlow {
    fn rhs(&self, t: f64, y: &[f64; 4]) -> [f64; 4] {
        duffing_classical_rhs(y, t, &self.params)
    }

    fn tangent(&self, _t: f64, y: &[f64; 4], v: &[f64; 4]) -> [f64; 4] {
        let DuffingParams { beta, gamma, mu, .. } = self.params;
        let mut out = [0.0; 4];
        for i in 0..2 {
            let q = y[2 * i];
            out[2 * i] = v[2 * i + 1];
            out[2 * i + 1] = (1.0 - 3.0 * beta * beta * q * q) * v[2 * i] - 2.0 * gamma * v[2 * i + 1] - mu * v[2 * (1 - i)];
        }
        out
    }
}

/// Sampled classical trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalTrajectory<const D: usize> {
    pub times: Vec<f64>,
    pub states: Vec<[f64; D]>,
}

/// Fixed-step RK4 from `t0`, recording every `record_every` steps (and the
/// initial state).
pub fn integrate<F: Flow<D>, const D: usize>(
    flow: &F,
    y0: [f64; D],
    t0: f64,
    dt: f64,
    steps: usize,
    record_every: usize,
) -> Result<ClassicalTrajectory<D>, ClassicalError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(ClassicalError::InvalidTimeStep(dt));
    }
    let every = record_every.max(1);
    let mut y = y0;
    let mut out = ClassicalTrajectory {
        times: vec![t0],
        states: vec![y0],
    };
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        y = rk4_step(flow, t, &y, dt);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(ClassicalError::NonFinite(t + dt));
        }
        if (k + 1) % every == 0 {
            out.times.push(t0 + (k + 1) as f64 * dt);
            out.states.push(y);
        }
    }
    Ok(out)
}

pub const MIN_STEPS_PER_PERIOD: usize = 200;

/// RSJ trajectory `[φ, φ']` over `steps` of size `dt` (τ units). The step
/// must resolve the drive with at least 200 steps per period.
pub fn integrate_rsj(
    state0: [f64; 2],
    params: &SquidDimensionlessParams,
    t0: f64,
    dt: f64,
    steps: usize,
    record_every: usize,
) -> Result<ClassicalTrajectory<2>, ClassicalError> {
    let period = 2.0 * PI / params.omega;
    let per_period = (period / dt).floor() as usize;
    if per_period < MIN_STEPS_PER_PERIOD {
        return Err(ClassicalError::UnderResolved {
            required: MIN_STEPS_PER_PERIOD,
            found: per_period,
        });
    }
    integrate(&RsjFlow { params: *params }, state0, t0, dt, steps, record_every)
}

pub fn integrate_duffing_pair(
    state0: [f64; 4],
    params: &DuffingParams,
    t0: f64,
    dt: f64,
    steps: usize,
    record_every: usize,
) -> Result<ClassicalTrajectory<4>, ClassicalError> {
    integrate(&DuffingPairFlow { params: *params }, state0, t0, dt, steps, record_every)
}

/// Stroboscopic section and Lyapunov estimate of a driven trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct DrivenTrajectory<const D: usize> {
    pub drive_period: f64,
    /// State at each multiple of the drive period after the transient.
    pub section: Vec<[f64; D]>,
    /// `ln ‖δy‖` growth per drive period, one entry per period after the
    /// transient.
    pub tangent_growth: Vec<f64>,
    /// State at the end of the transient (drive phase zero).
    pub transient_end: [f64; D],
}

impl<const D: usize> DrivenTrajectory<D> {
    /// Largest Lyapunov exponent per drive period over `periods`.
    pub fn lyapunov(&self, periods: std::ops::Range<usize>) -> f64 {
        let slice = &self.tangent_growth[periods];
        slice.iter().sum::<f64>() / slice.len() as f64
    }
}

/// Integrate `transient + periods` drive periods from `y0` at `t = 0`,
/// sampling the section at drive phase zero and tracking a tangent vector
/// over the post-transient part.
pub fn drive_and_sample<F: Flow<D>, const D: usize>(
    flow: &F,
    y0: [f64; D],
    drive_period: f64,
    steps_per_period: usize,
    transient: usize,
    periods: usize,
) -> Result<DrivenTrajectory<D>, ClassicalError> {
    if steps_per_period < MIN_STEPS_PER_PERIOD {
        return Err(ClassicalError::UnderResolved {
            required: MIN_STEPS_PER_PERIOD,
            found: steps_per_period,
        });
    }
    let dt = drive_period / steps_per_period as f64;
    let mut y = y0;
    for n in 0..transient {
        for k in 0..steps_per_period {
            let t = n as f64 * drive_period + k as f64 * dt;
            y = rk4_step(flow, t, &y, dt);
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(ClassicalError::NonFinite(n as f64 * drive_period));
        }
    }
    let transient_end = y;
    let mut v = [0.0; D];
    for (i, vi) in v.iter_mut().enumerate() {
        *vi = 1.0 / ((i + 1) as f64).sqrt();
    }
    let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm0);
    let mut section = Vec::with_capacity(periods);
    let mut tangent_growth = Vec::with_capacity(periods);
    for n in transient..transient + periods {
        section.push(y);
        for k in 0..steps_per_period {
            let t = n as f64 * drive_period + k as f64 * dt;
            (y, v) = rk4_step_tangent(flow, t, &y, &v, dt);
        }
        if !y.iter().all(|x| x.is_finite()) {
            return Err(ClassicalError::NonFinite((n + 1) as f64 * drive_period));
        }
        let growth = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        tangent_growth.push(growth.ln());
        v.iter_mut().for_each(|x| *x /= growth);
    }
    Ok(DrivenTrajectory {
        drive_period,
        section,
        tangent_growth,
        transient_end,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Entrained,
    Chaotic,
    Ambiguous,
}

/// Classification thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeCriteria {
    pub cluster_radius: f64,
    pub max_clusters: usize,
    /// Lyapunov exponent per drive period above which motion is chaotic.
    pub chaos_threshold: f64,
    pub min_periods: usize,
}

impl Default for RegimeCriteria {
    fn default() -> Self {
        Self {
            cluster_radius: 1e-3,
            max_clusters: 3,
            chaos_threshold: 0.01,
            min_periods: 200,
        }
    }
}

/// Greedy clustering of section points; returns the number of clusters.
pub fn count_clusters<const D: usize>(points: &[[f64; D]], radius: f64) -> usize {
    let mut centers: Vec<[f64; D]> = Vec::new();
    for p in points {
        let near = centers.iter().any(|c| {
            c.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() < radius
        });
        if !near {
            centers.push(*p);
        }
    }
    centers.len()
}

/// Entrained when the section collapses to at most `max_clusters` points of
/// radius `cluster_radius` and the Lyapunov estimate is negative; chaotic
/// when the Lyapunov estimate exceeds `chaos_threshold`; otherwise ambiguous.
pub fn classify_regime<const D: usize>(
    trajectory: &DrivenTrajectory<D>,
    criteria: &RegimeCriteria,
) -> Result<Regime, ClassicalError> {
    let n = trajectory.section.len();
    if n < criteria.min_periods {
        return Err(ClassicalError::TooShort {
            required: criteria.min_periods,
            found: n,
        });
    }
    let lyapunov = trajectory.lyapunov(0..n);
    if lyapunov > criteria.chaos_threshold {
        return Ok(Regime::Chaotic);
    }
    let clusters = count_clusters(&trajectory.section, criteria.cluster_radius);
    if clusters <= criteria.max_clusters && lyapunov < 0.0 {
        Ok(Regime::Entrained)
    } else {
        Ok(Regime::Ambiguous)
    }
}

/// Total mechanical energy of the undriven, uncoupled Duffing pair.
pub fn duffing_energy(state: &[f64; 4], beta: f64) -> f64 {
    (0..2)
        .map(|i| {
            let q = state[2 * i];
            let p = state[2 * i + 1];
            0.5 * p * p + beta * beta * q.powi(4) / 4.0 - 0.5 * q * q
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{squid_dimensionless, SquidPhysicalParams};

    fn base() -> SquidDimensionlessParams {
        squid_dimensionless(&SquidPhysicalParams::base()).unwrap()
    }

    #[test]
    fn rsj_rhs_cases() {
        let mut p = base();
        p.beta = 0.0;
        p.zeta = 0.0;
        p.phi_d = 0.0;
        assert_eq!(rsj_rhs(&[1.0, 0.0], 0.3, &p), [0.0, -1.0]);

        let p = base();
        // φ = -φ_x removes the Josephson term.
        let out = rsj_rhs(&[-p.phi_x, 0.0], 0.0, &p);
        assert!((out[1] - p.phi_x).abs() < 1e-12);
        // β = 2, φ_x = 1/2, φ = 0: -(2/2π) sin(π) = 0.
        let out = rsj_rhs(&[0.0, 0.0], 0.0, &p);
        assert!(out[1].abs() < 1e-15);
    }

    #[test]
    fn undriven_damped_ring_decays() {
        let mut p = base();
        p.phi_d = 0.0;
        let dt = 2.0 * PI / 400.0;
        let tr = integrate_rsj([0.35, 0.0], &p, 0.0, dt, 400 * 20, 400).unwrap();
        let energy = |y: &[f64; 2]| {
            0.5 * y[1] * y[1] + 0.5 * y[0] * y[0] - p.beta / (4.0 * PI * PI) * (2.0 * PI * (y[0] + p.phi_x)).cos()
        };
        for w in tr.states.windows(2) {
            assert!(energy(&w[1]) <= energy(&w[0]) + 1e-12);
        }
        let first = tr.states[0][0].abs();
        let last = tr.states.last().unwrap()[0].abs();
        assert!(last < first);
    }

    #[test]
    fn under_resolved_drive_rejected() {
        let p = base();
        assert!(matches!(
            integrate_rsj([0.0, 0.0], &p, 0.0, 0.1, 10, 1),
            Err(ClassicalError::UnderResolved { .. })
        ));
    }

    /// Closed form for `φ'' + 2ζφ' + φ = φ_d sin(ωτ)` from rest.
    fn linear_response(zeta: f64, omega: f64, phi_d: f64, tau: f64) -> f64 {
        let det = (1.0 - omega * omega).powi(2) + (2.0 * zeta * omega).powi(2);
        let a = phi_d * (1.0 - omega * omega) / det; // sin coefficient
        let b = -phi_d * 2.0 * zeta * omega / det; // cos coefficient
        let wd = (1.0 - zeta * zeta).sqrt();
        // Homogeneous part fixed by φ(0) = φ'(0) = 0.
        let c1 = -b;
        let c2 = (-a * omega + zeta * c1) / wd;
        a * (omega * tau).sin() + b * (omega * tau).cos() + (-zeta * tau).exp() * (c1 * (wd * tau).cos() + c2 * (wd * tau).sin())
    }

    #[test]
    fn linear_limit_matches_closed_form() {
        let mut p = base();
        p.beta = 0.0;
        p.omega = 0.8;
        let dt = 2.0 * PI / p.omega / 2000.0;
        let tr = integrate_rsj([0.0, 0.0], &p, 0.0, dt, 2000 * 10, 50).unwrap();
        let scale = tr
            .times
            .iter()
            .map(|&t| linear_response(p.zeta, p.omega, p.phi_d, t).abs())
            .fold(0.0, f64::max);
        for (t, y) in tr.times.iter().zip(&tr.states) {
            let exact = linear_response(p.zeta, p.omega, p.phi_d, *t);
            assert!((y[0] - exact).abs() < 1e-6 * scale, "t={t}");
        }
    }

    #[test]
    fn base_ring_is_bounded() {
        let p = base();
        let dt = 2.0 * PI / 400.0;
        let tr = integrate_rsj([0.3, 0.0], &p, 0.0, dt, 400 * 500, 40).unwrap();
        assert!(tr.states.iter().all(|y| y[0].abs() < 10.0));
    }

    #[test]
    fn free_duffing_conserves_energy() {
        let params = DuffingParams {
            beta: 1.0,
            g: 0.0,
            gamma: 0.0,
            mu: 0.0,
        };
        let dt = 1e-3;
        let steps = (2.0 * PI / dt).round() as usize;
        let y0 = [1.3, 0.2, -0.4, 0.7];
        let tr = integrate_duffing_pair(y0, &params, 0.0, dt, steps, steps).unwrap();
        let e0 = duffing_energy(&y0, 1.0);
        let e1 = duffing_energy(tr.states.last().unwrap(), 1.0);
        assert!((e1 - e0).abs() < 1e-8);
    }

    #[test]
    fn duffing_fixed_points() {
        for beta in [1.0, 0.5, 0.25] {
            let params = DuffingParams {
                beta,
                g: 0.0,
                gamma: 0.0,
                mu: 0.0,
            };
            for q in [0.0, 1.0 / beta, -1.0 / beta] {
                let d = duffing_classical_rhs(&[q, 0.0, q, 0.0], 0.0, &params);
                assert!(d.iter().all(|v| v.abs() < 1e-12));
            }
        }
    }

    #[test]
    fn symmetric_duffing_stays_symmetric() {
        let params = DuffingParams::default();
        let tr = integrate_duffing_pair([0.5, -0.1, 0.5, -0.1], &params, 0.0, 1e-3, 30_000, 100).unwrap();
        for y in &tr.states {
            assert!((y[0] - y[2]).abs() < 1e-9 && (y[1] - y[3]).abs() < 1e-9);
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let params = DuffingParams::default();
        let flow = DuffingPairFlow { params };
        let y0 = [0.5, 0.0, -0.2, 0.1];
        let t_end = 4.0;
        let run = |dt: f64| {
            let steps = (t_end / dt).round() as usize;
            *integrate(&flow, y0, 0.0, dt, steps, steps).unwrap().states.last().unwrap()
        };
        let reference = run(0.1 / 8.0);
        let err = |y: [f64; 4]| y.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let ratio = err(run(0.1)) / err(run(0.05));
        assert!((12.0..20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn linear_oscillator_is_entrained() {
        let mut p = base();
        p.beta = 0.0;
        let tr = drive_and_sample(&RsjFlow { params: p }, [0.1, 0.0], 2.0 * PI, 400, 50, 200).unwrap();
        assert_eq!(classify_regime(&tr, &RegimeCriteria::default()).unwrap(), Regime::Entrained);
        p.phi_d = 0.0;
        let tr = drive_and_sample(&RsjFlow { params: p }, [0.1, 0.0], 2.0 * PI, 400, 50, 200).unwrap();
        assert_eq!(classify_regime(&tr, &RegimeCriteria::default()).unwrap(), Regime::Entrained);
    }

    #[test]
    fn short_section_rejected() {
        let p = base();
        let tr = drive_and_sample(&RsjFlow { params: p }, [0.1, 0.0], 2.0 * PI, 400, 5, 20).unwrap();
        assert!(matches!(
            classify_regime(&tr, &RegimeCriteria::default()),
            Err(ClassicalError::TooShort { .. })
        ));
    }
}
