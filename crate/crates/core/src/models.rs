//! Hamiltonians and Lindblad operators for the coupled Duffing pair and the
//! coupled SQUID-ring pair, plus the circuit-parameter bookkeeping that maps
//! SI quantities onto oscillator units.
//!
//! Energies are in units of `ħω₀` and time in `τ = ω₀ t`. Position and
//! momentum follow `x = (a + a†)/√2`, `p = i(a† - a)/√2`.
//!
//! SQUID rings sit at a large flux bias, so the Fock basis of each ring is
//! displaced to the static bias point `x_c`. The operators themselves are the
//! undisplaced ones (`x = x' + x_c`, `a = a' + x_c/√2`); only the truncation
//! is centred on the bias. Pure c-number terms of the Hamiltonian are dropped.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::{ELEMENTARY_CHARGE, FLUX_QUANTUM, HBAR};
use crate::hilbert::{
    annihilation, momentum, padded_operator, position, position_function, FockSpace, HilbertError, SparseOperator, StateVector, C64,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{0} must be positive, got {1}")]
    NonPositive(&'static str, f64),
    #[error("{0} must be non-negative, got {1}")]
    Negative(&'static str, f64),
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("model needs a {expected}-mode space, got {found}")]
    WrongModes { expected: usize, found: usize },
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

fn positive(name: &'static str, v: f64) -> Result<(), ModelError> {
    if !v.is_finite() {
        Err(ModelError::NonFinite(name))
    } else if v <= 0.0 {
        Err(ModelError::NonPositive(name, v))
    } else {
        Ok(())
    }
}

fn non_negative(name: &'static str, v: f64) -> Result<(), ModelError> {
    if !v.is_finite() {
        Err(ModelError::NonFinite(name))
    } else if v < 0.0 {
        Err(ModelError::Negative(name, v))
    } else {
        Ok(())
    }
}

fn finite(name: &'static str, v: f64) -> Result<(), ModelError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonFinite(name))
    }
}

/// Duffing oscillator pair. `beta` is the correspondence scaling parameter;
/// the classical dynamics in `βq` are independent of it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DuffingParams {
    pub beta: f64,
    pub g: f64,
    pub gamma: f64,
    pub mu: f64,
}

impl Default for DuffingParams {
    fn default() -> Self {
        Self {
            beta: 1.0,
            g: 0.3,
            gamma: 0.125,
            mu: 0.2,
        }
    }
}

impl DuffingParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        positive("beta", self.beta)?;
        non_negative("gamma", self.gamma)?;
        finite("g", self.g)?;
        finite("mu", self.mu)
    }
}

/// SQUID ring circuit parameters in SI units, with the accumulated
/// capacitance (`scale_a`) and inductance (`scale_b`) scale factors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquidPhysicalParams {
    /// F
    pub capacitance: f64,
    /// H
    pub inductance: f64,
    /// Ω
    pub resistance: f64,
    /// A
    pub critical_current: f64,
    /// A
    pub drive_current: f64,
    /// rad/s
    pub drive_frequency: f64,
    /// Wb
    pub flux_bias: f64,
    pub scale_a: f64,
    pub scale_b: f64,
}

impl SquidPhysicalParams {
    pub const BASE_CAPACITANCE: f64 = 1e-13;
    pub const BASE_INDUCTANCE: f64 = 3e-10;
    pub const BASE_RESISTANCE: f64 = 100.0;
    pub const BASE_SCREENING: f64 = 2.0;
    pub const BASE_DRIVE_CURRENT: f64 = 0.9e-6;

    /// Reference ring: C = 1e-13 F, L = 3e-10 H, R = 100 Ω, β = 2,
    /// ω_d = ω₀, Φ_x = Φ₀/2, I_d = 0.9 μA.
    pub fn base() -> Self {
        let capacitance = Self::BASE_CAPACITANCE;
        let inductance = Self::BASE_INDUCTANCE;
        Self {
            capacitance,
            inductance,
            resistance: Self::BASE_RESISTANCE,
            critical_current: Self::BASE_SCREENING * FLUX_QUANTUM / (2.0 * PI * inductance),
            drive_current: Self::BASE_DRIVE_CURRENT,
            drive_frequency: 1.0 / (inductance * capacitance).sqrt(),
            flux_bias: 0.5 * FLUX_QUANTUM,
            scale_a: 1.0,
            scale_b: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        positive("capacitance", self.capacitance)?;
        positive("inductance", self.inductance)?;
        positive("resistance", self.resistance)?;
        positive("critical_current", self.critical_current)?;
        positive("drive_frequency", self.drive_frequency)?;
        positive("scale_a", self.scale_a)?;
        positive("scale_b", self.scale_b)?;
        finite("drive_current", self.drive_current)?;
        finite("flux_bias", self.flux_bias)
    }

    pub fn omega0(&self) -> f64 {
        1.0 / (self.inductance * self.capacitance).sqrt()
    }
}

/// Dimensionless groups of the RSJ equation of motion plus the quantum
/// scale `big_omega` and the angular frequency `omega0` (rad/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquidDimensionlessParams {
    /// `2π L I_c / Φ₀`
    pub beta: f64,
    /// `1 / (2 ω₀ R C)`
    pub zeta: f64,
    /// `ω_d / ω₀`
    pub omega: f64,
    /// `I_d L / Φ₀`
    pub phi_d: f64,
    /// `Φ_x / Φ₀`
    pub phi_x: f64,
    /// `[(4e²/ħ) √(L/C)]^{1/2}`
    pub big_omega: f64,
    pub omega0: f64,
    /// Josephson prefactor `I_c / (2 e ω₀)` in units of `ħω₀`.
    pub josephson_energy: f64,
    /// Oscillator position per flux quantum, `√(Cω₀/ħ) Φ₀`; equals `2π/Ω`.
    pub flux_unit: f64,
}

pub fn squid_dimensionless(phys: &SquidPhysicalParams) -> Result<SquidDimensionlessParams, ModelError> {
    phys.validate()?;
    let c = phys.capacitance;
    let l = phys.inductance;
    let omega0 = phys.omega0();
    Ok(SquidDimensionlessParams {
        beta: 2.0 * PI * l * phys.critical_current / FLUX_QUANTUM,
        zeta: 1.0 / (2.0 * omega0 * phys.resistance * c),
        omega: phys.drive_frequency / omega0,
        phi_d: phys.drive_current * l / FLUX_QUANTUM,
        phi_x: phys.flux_bias / FLUX_QUANTUM,
        big_omega: ((4.0 * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / HBAR) * (l / c).sqrt()).sqrt(),
        omega0,
        josephson_energy: phys.critical_current / (2.0 * ELEMENTARY_CHARGE * omega0),
        flux_unit: (c * omega0 / HBAR).sqrt() * FLUX_QUANTUM,
    })
}

/// `C → aC`, `L → bL`, `R → √(b/a) R`, `ω_d → ω_d/√(ab)`, and both
/// `I_c → I_c/b` and `I_d → I_d/b` so that `β` and `φ_d` stay fixed. The flux
/// bias is untouched.
pub fn apply_scaling(phys: &SquidPhysicalParams, a: f64, b: f64) -> Result<SquidPhysicalParams, ModelError> {
    positive("a", a)?;
    positive("b", b)?;
    Ok(SquidPhysicalParams {
        capacitance: phys.capacitance * a,
        inductance: phys.inductance * b,
        resistance: phys.resistance * (b / a).sqrt(),
        critical_current: phys.critical_current / b,
        drive_current: phys.drive_current / b,
        drive_frequency: phys.drive_frequency / (a * b).sqrt(),
        flux_bias: phys.flux_bias,
        scale_a: phys.scale_a * a,
        scale_b: phys.scale_b * b,
    })
}

/// External flux in oscillator position units,
/// `x(τ) = √(Cω₀/ħ) Φ₀ [φ_x + φ_d sin(ωτ)]`.
pub fn drive_flux(phys: &SquidPhysicalParams, tau: f64) -> Result<f64, ModelError> {
    let d = squid_dimensionless(phys)?;
    Ok(d.flux_unit * (d.phi_x + d.phi_d * (d.omega * tau).sin()))
}

/// Time-dependent coefficient multiplying one Hamiltonian term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Drive {
    Cos { amplitude: f64, omega: f64 },
    Sin { amplitude: f64, omega: f64 },
}

impl Drive {
    pub fn value(&self, tau: f64) -> f64 {
        match *self {
            Drive::Cos { amplitude, omega } => amplitude * (omega * tau).cos(),
            Drive::Sin { amplitude, omega } => amplitude * (omega * tau).sin(),
        }
    }
}

/// Affine map from the oscillator position of one mode to the coordinate used
/// by the matching classical equations: `q = x / scale - offset`,
/// `dq/dτ = p / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinateMap {
    pub scale: f64,
    pub offset: f64,
}

impl CoordinateMap {
    pub const IDENTITY: Self = Self { scale: 1.0, offset: 0.0 };

    pub fn to_classical(&self, x: f64, p: f64) -> (f64, f64) {
        (x / self.scale - self.offset, p / self.scale)
    }

    pub fn to_oscillator(&self, q: f64, dq: f64) -> (f64, f64) {
        ((q + self.offset) * self.scale, dq * self.scale)
    }
}

/// `H(τ) = H_static + Σ_k f_k(τ) H_k` with Lindblad channels and the
/// per-mode position/momentum observables.
#[derive(Clone, Debug)]
pub struct SystemModel {
    space: FockSpace,
    static_hamiltonian: SparseOperator,
    driven_terms: Vec<(SparseOperator, Drive)>,
    lindblad_ops: Vec<SparseOperator>,
    positions: Vec<SparseOperator>,
    momenta: Vec<SparseOperator>,
    /// Position of the Fock-basis origin for each mode.
    centers: Vec<f64>,
    coordinates: Vec<CoordinateMap>,
    drive_period: f64,
}

impl SystemModel {
    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    pub fn static_hamiltonian(&self) -> &SparseOperator {
        &self.static_hamiltonian
    }

    pub fn driven_terms(&self) -> &[(SparseOperator, Drive)] {
        &self.driven_terms
    }

    pub fn lindblad_ops(&self) -> &[SparseOperator] {
        &self.lindblad_ops
    }

    pub fn positions(&self) -> &[SparseOperator] {
        &self.positions
    }

    pub fn momenta(&self) -> &[SparseOperator] {
        &self.momenta
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn coordinates(&self) -> &[CoordinateMap] {
        &self.coordinates
    }

    /// Drive period in units of τ.
    pub fn drive_period(&self) -> f64 {
        self.drive_period
    }

    /// Assembled Hermitian Hamiltonian at time `tau`.
    pub fn hamiltonian_at(&self, tau: f64) -> SparseOperator {
        let mut h = self.static_hamiltonian.clone();
        for (op, drive) in &self.driven_terms {
            h = h.add(&op.scale_real(drive.value(tau))).expect("terms share the model space");
        }
        h
    }

    /// `out = H(τ) ψ` without assembling `H(τ)`.
    pub fn apply_hamiltonian(&self, tau: f64, psi: &[C64], out: &mut [C64]) {
        self.static_hamiltonian.apply_into(psi, out);
        for (op, drive) in &self.driven_terms {
            op.apply_add(C64::new(drive.value(tau), 0.0), psi, out);
        }
    }

    /// Product coherent state centred on `(x_k, p_k)` for each mode, in
    /// oscillator units.
    pub fn coherent_state(&self, phase_points: &[(f64, f64)]) -> Result<StateVector, ModelError> {
        if phase_points.len() != self.space.n_modes() {
            return Err(HilbertError::DimensionMismatch {
                expected: self.space.n_modes(),
                found: phase_points.len(),
            }
            .into());
        }
        let alphas: Vec<C64> = phase_points
            .iter()
            .zip(&self.centers)
            .map(|(&(x, p), &c)| C64::new(x - c, p) * std::f64::consts::FRAC_1_SQRT_2)
            .collect();
        Ok(StateVector::coherent(&self.space, &alphas)?)
    }

    /// Coherent state centred on classical coordinates `(q_k, dq_k/dτ)`.
    pub fn coherent_state_classical(&self, points: &[(f64, f64)]) -> Result<StateVector, ModelError> {
        let osc: Vec<(f64, f64)> = points
            .iter()
            .zip(&self.coordinates)
            .map(|(&(q, dq), map)| map.to_oscillator(q, dq))
            .collect();
        self.coherent_state(&osc)
    }
}

fn require_modes(space: &FockSpace, n: usize) -> Result<(), ModelError> {
    if space.n_modes() != n {
        Err(ModelError::WrongModes {
            expected: n,
            found: space.n_modes(),
        })
    } else {
        Ok(())
    }
}

fn sum_all(dim: usize, ops: &[SparseOperator]) -> Result<SparseOperator, HilbertError> {
    ops.iter().try_fold(SparseOperator::zeros(dim), |acc, op| acc.add(op))
}

/// Single-mode polynomial of degree at most four in `(x, p)`, with the matrix
/// elements of the untruncated operator up to the top level.
fn polynomial(
    space: &FockSpace,
    mode: usize,
    f: impl FnOnce(&SparseOperator, &SparseOperator) -> Result<SparseOperator, HilbertError>,
) -> Result<SparseOperator, HilbertError> {
    padded_operator(space, mode, 2, |s| f(&position(s, 0)?, &momentum(s, 0)?))
}

/// `qp + pq`.
fn symmetric_product(x: &SparseOperator, p: &SparseOperator) -> Result<SparseOperator, HilbertError> {
    x.matmul(p)?.add(&p.matmul(x)?)?.into_hermitian()
}

/// Two Duffing oscillators,
/// `H(t) = Σ_i [p²/2 + β²q⁴/4 - q²/2 + (g/β) cos(t) q + Γ/2 (qp + pq)] + μ q₁q₂`,
/// with `L_i = √(2Γ) a_i`.
pub fn duffing_pair(params: &DuffingParams, space: &FockSpace) -> Result<SystemModel, ModelError> {
    params.validate()?;
    require_modes(space, 2)?;
    let dim = space.dim();
    let mut terms = Vec::new();
    let mut driven_terms = Vec::new();
    let mut lindblad_ops = Vec::new();
    let mut positions = Vec::new();
    let mut momenta = Vec::new();
    for mode in 0..2 {
        let q = position(space, mode)?;
        let p = momentum(space, mode)?;
        let q2 = polynomial(space, mode, |q, _| q.matmul(q))?;
        let q4 = polynomial(space, mode, |q, _| q.matmul(q)?.matmul(&q.matmul(q)?))?;
        terms.push(polynomial(space, mode, |_, p| p.matmul(p))?.scale_real(0.5));
        terms.push(q4.scale_real(params.beta * params.beta / 4.0));
        terms.push(q2.scale_real(-0.5));
        terms.push(polynomial(space, mode, symmetric_product)?.scale_real(params.gamma / 2.0));
        driven_terms.push((
            q.clone(),
            Drive::Cos {
                amplitude: params.g / params.beta,
                omega: 1.0,
            },
        ));
        lindblad_ops.push(annihilation(space, mode)?.scale_real((2.0 * params.gamma).sqrt()));
        positions.push(q);
        momenta.push(p);
    }
    terms.push(positions[0].matmul(&positions[1])?.scale_real(params.mu));
    let static_hamiltonian = sum_all(dim, &terms)?.into_hermitian()?;
    Ok(SystemModel {
        space: *space,
        static_hamiltonian,
        driven_terms,
        lindblad_ops,
        positions,
        momenta,
        centers: vec![0.0; 2],
        coordinates: vec![CoordinateMap::IDENTITY; 2],
        drive_period: 2.0 * PI,
    })
}

struct RingTerms {
    hamiltonian: Vec<SparseOperator>,
    drive: (SparseOperator, Drive),
    lindblad: SparseOperator,
    x_lab: SparseOperator,
    p: SparseOperator,
}

/// One ring: `p²/2 + [x - x(τ)]²/2 - E_J cos(Ω x) + ζ/2 (px + xp)` with
/// `L = √(2ζ) a`, expressed on a Fock basis centred at `center`.
fn ring_terms(
    space: &FockSpace,
    mode: usize,
    d: &SquidDimensionlessParams,
    center: f64,
) -> Result<RingTerms, ModelError> {
    let dim = space.dim();
    let id = SparseOperator::identity(dim);
    let x_shift = position(space, mode)?;
    let p = momentum(space, mode)?;
    let x_lab = x_shift.add(&id.scale_real(center))?.into_hermitian()?;
    let omega = d.big_omega;
    let josephson = position_function(space, mode, |y| (omega * (y + center)).cos())?;
    // [x - x_c - δx(τ)]²/2 = x'²/2 - δx(τ) x' + c-number.
    let hamiltonian = vec![
        polynomial(space, mode, |_, p| p.matmul(p))?.scale_real(0.5),
        polynomial(space, mode, |x, _| x.matmul(x))?.scale_real(0.5),
        josephson.scale_real(-d.josephson_energy),
        polynomial(space, mode, |x, p| {
            let shift = SparseOperator::identity(x.dim()).scale_real(center);
            symmetric_product(&x.add(&shift)?.into_hermitian()?, p)
        })?
        .scale_real(d.zeta / 2.0),
    ];
    let drive = (
        x_shift,
        Drive::Sin {
            amplitude: -d.flux_unit * d.phi_d,
            omega: d.omega,
        },
    );
    let a_lab = annihilation(space, mode)?.add(&id.scale_real(center * std::f64::consts::FRAC_1_SQRT_2))?;
    Ok(RingTerms {
        hamiltonian,
        drive,
        lindblad: a_lab.scale_real((2.0 * d.zeta).sqrt()),
        x_lab,
        p,
    })
}

fn squid_model(phys: &SquidPhysicalParams, mu: f64, space: &FockSpace) -> Result<SystemModel, ModelError> {
    finite("mu", mu)?;
    let d = squid_dimensionless(phys)?;
    let center = d.flux_unit * d.phi_x;
    let mut terms = Vec::new();
    let mut driven_terms = Vec::new();
    let mut lindblad_ops = Vec::new();
    let mut positions = Vec::new();
    let mut momenta = Vec::new();
    for mode in 0..space.n_modes() {
        let ring = ring_terms(space, mode, &d, center)?;
        terms.extend(ring.hamiltonian);
        driven_terms.push(ring.drive);
        lindblad_ops.push(ring.lindblad);
        positions.push(ring.x_lab);
        momenta.push(ring.p);
    }
    if space.n_modes() == 2 {
        let coupling = positions[0].matmul(&positions[1])?.scale_real(mu);
        // Drop the c-number μ x_c² carried by the lab-frame product.
        let constant = SparseOperator::identity(space.dim()).scale_real(mu * center * center);
        terms.push(coupling.sub(&constant)?);
    }
    let static_hamiltonian = sum_all(space.dim(), &terms)?.into_hermitian()?;
    let n = space.n_modes();
    Ok(SystemModel {
        space: *space,
        static_hamiltonian,
        driven_terms,
        lindblad_ops,
        positions,
        momenta,
        centers: vec![center; n],
        coordinates: vec![
            CoordinateMap {
                scale: d.flux_unit,
                offset: d.phi_x,
            };
            n
        ],
        drive_period: 2.0 * PI / d.omega,
    })
}

/// Two identical SQUID rings coupled through `μ x₁ x₂`.
pub fn squid_pair(phys: &SquidPhysicalParams, mu: f64, space: &FockSpace) -> Result<SystemModel, ModelError> {
    require_modes(space, 2)?;
    squid_model(phys, mu, space)
}

/// A single SQUID ring.
pub fn squid_single(phys: &SquidPhysicalParams, space: &FockSpace) -> Result<SystemModel, ModelError> {
    require_modes(space, 1)?;
    squid_model(phys, 0.0, space)
}

/// Driven, damped harmonic mode used as an analytic reference:
/// `H = p²/2 + x²/2 - F x + A cos(ωτ) x [+ ζ/2 (px + xp)]`, `L = √(2ζ) a`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarmonicParams {
    pub zeta: f64,
    pub static_force: f64,
    pub drive_amplitude: f64,
    pub drive_omega: f64,
    pub damping_correction: bool,
}

pub fn harmonic_mode(params: &HarmonicParams, space: &FockSpace) -> Result<SystemModel, ModelError> {
    require_modes(space, 1)?;
    non_negative("zeta", params.zeta)?;
    positive("drive_omega", params.drive_omega)?;
    let x = position(space, 0)?;
    let p = momentum(space, 0)?;
    let mut terms = vec![
        polynomial(space, 0, |_, p| p.matmul(p))?.scale_real(0.5),
        polynomial(space, 0, |x, _| x.matmul(x))?.scale_real(0.5),
        x.scale_real(-params.static_force),
    ];
    if params.damping_correction {
        terms.push(polynomial(space, 0, symmetric_product)?.scale_real(params.zeta / 2.0));
    }
    let static_hamiltonian = sum_all(space.dim(), &terms)?.into_hermitian()?;
    Ok(SystemModel {
        space: *space,
        static_hamiltonian,
        driven_terms: vec![(
            x.clone(),
            Drive::Cos {
                amplitude: params.drive_amplitude,
                omega: params.drive_omega,
            },
        )],
        lindblad_ops: vec![annihilation(space, 0)?.scale_real((2.0 * params.zeta).sqrt())],
        positions: vec![x],
        momenta: vec![p],
        centers: vec![0.0],
        coordinates: vec![CoordinateMap::IDENTITY],
        drive_period: 2.0 * PI / params.drive_omega,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::hermitian_eigenvalues;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn base_dimensionless_values() {
        let d = squid_dimensionless(&SquidPhysicalParams::base()).unwrap();
        // Independent arithmetic (frozen): 1/sqrt(3e-23) etc.
        assert!(rel(d.omega0, 1.825_741_858_350_553_8e11) < 1e-12);
        assert!((d.zeta - 0.2738612788).abs() < 1e-9);
        assert!((d.big_omega - 0.2309).abs() < 5e-5);
        assert!((d.beta - 2.0).abs() < 1e-14);
        assert!((d.omega - 1.0).abs() < 1e-14);
        assert!((d.phi_x - 0.5).abs() < 1e-15);
        assert!((d.phi_d - 0.1306).abs() < 5e-5);
        assert!((d.josephson_energy - 37.5).abs() < 0.05);
        assert!(rel(d.flux_unit, 2.0 * PI / d.big_omega) < 1e-12);
        assert!((SquidPhysicalParams::base().critical_current - 2.194e-6).abs() < 5e-10);
    }

    #[test]
    fn scaling_identity_and_example() {
        let base = SquidPhysicalParams::base();
        assert_eq!(apply_scaling(&base, 1.0, 1.0).unwrap(), base);
        let s = apply_scaling(&base, 100.0, 1.0).unwrap();
        assert!((s.resistance - 10.0).abs() < 1e-12);
        assert!(rel(s.capacitance, 1e-11) < 1e-14);
        assert!(rel(s.drive_frequency, base.drive_frequency / 10.0) < 1e-14);
        let d0 = squid_dimensionless(&base).unwrap();
        let d1 = squid_dimensionless(&s).unwrap();
        for (a, b) in [
            (d0.beta, d1.beta),
            (d0.zeta, d1.zeta),
            (d0.omega, d1.omega),
            (d0.phi_d, d1.phi_d),
            (d0.phi_x, d1.phi_x),
        ] {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(rel(d1.big_omega, d0.big_omega / 100f64.powf(0.25)) < 1e-12);
        assert!(matches!(apply_scaling(&base, 0.0, 1.0), Err(ModelError::NonPositive("a", _))));
    }

    #[test]
    fn non_positive_circuit_rejected() {
        let mut p = SquidPhysicalParams::base();
        p.resistance = -1.0;
        assert!(squid_dimensionless(&p).is_err());
    }

    #[test]
    fn drive_flux_bias_and_period() {
        let mut p = SquidPhysicalParams::base();
        let d = squid_dimensionless(&p).unwrap();
        assert!((drive_flux(&p, 0.0).unwrap() - 0.5 * d.flux_unit).abs() < 1e-12);
        let period = 2.0 * PI / d.omega;
        for tau in [0.3, 1.7, 4.1] {
            let a = drive_flux(&p, tau).unwrap();
            let b = drive_flux(&p, tau + period).unwrap();
            assert!((a - b).abs() < 1e-10);
        }
        p.drive_current = 0.0;
        for tau in [0.0, 1.0, 2.5] {
            assert!((drive_flux(&p, tau).unwrap() - 0.5 * d.flux_unit).abs() < 1e-12);
        }
    }

    #[test]
    fn duffing_requires_pair() {
        let s = FockSpace::single(5).unwrap();
        assert!(matches!(
            duffing_pair(&DuffingParams::default(), &s),
            Err(ModelError::WrongModes { expected: 2, found: 1 })
        ));
        assert!(squid_pair(&SquidPhysicalParams::base(), 0.2, &s).is_err());
    }

    #[test]
    fn duffing_uncoupled_has_no_cross_terms() {
        let s = FockSpace::pair(6).unwrap();
        let params = DuffingParams {
            mu: 0.0,
            gamma: 0.0,
            ..Default::default()
        };
        let m = duffing_pair(&params, &s).unwrap();
        for tau in [0.0, 1.3] {
            for (r, c, _) in m.hamiltonian_at(tau).triplets() {
                let changes0 = s.level(r, 0) != s.level(c, 0);
                let changes1 = s.level(r, 1) != s.level(c, 1);
                assert!(!(changes0 && changes1), "cross-mode element at ({r},{c})");
            }
        }
    }

    #[test]
    fn duffing_drive_coefficient() {
        let s = FockSpace::pair(6).unwrap();
        let m = duffing_pair(&DuffingParams::default(), &s).unwrap();
        let (op, drive) = &m.driven_terms()[0];
        assert_eq!(op, &position(&s, 0).unwrap());
        assert!((drive.value(0.0) - 0.3).abs() < 1e-15);
        assert!(drive.value(PI / 2.0).abs() < 1e-15);
        let h = m.hamiltonian_at(PI / 2.0);
        let h0 = m.static_hamiltonian();
        assert!(h.sub(h0).unwrap().triplets().all(|(_, _, v)| v.norm() < 1e-15));
    }

    #[test]
    fn hamiltonians_hermitian_at_many_times() {
        let s = FockSpace::pair(6).unwrap();
        let duff = duffing_pair(&DuffingParams::default(), &s).unwrap();
        let phys = apply_scaling(&SquidPhysicalParams::base(), 1e-3, 1.0).unwrap();
        let squid = squid_pair(&phys, 0.2, &s).unwrap();
        for k in 0..100 {
            let tau = 0.37 * k as f64;
            for m in [&duff, &squid] {
                assert!(m.hamiltonian_at(tau).hermitian_defect() < 1e-12);
            }
        }
    }

    #[test]
    fn squid_cross_term_is_mu_x_x() {
        let s = FockSpace::pair(5).unwrap();
        let phys = apply_scaling(&SquidPhysicalParams::base(), 1e-3, 1.0).unwrap();
        let coupled = squid_pair(&phys, 0.2, &s).unwrap();
        let free = squid_pair(&phys, 0.0, &s).unwrap();
        let diff = coupled.static_hamiltonian().sub(free.static_hamiltonian()).unwrap();
        let x0 = &coupled.positions()[0];
        let x1 = &coupled.positions()[1];
        let c = coupled.centers()[0];
        let expected = x0
            .matmul(x1)
            .unwrap()
            .sub(&SparseOperator::identity(s.dim()).scale_real(c * c))
            .unwrap()
            .scale_real(0.2);
        let err = diff.sub(&expected).unwrap().triplets().map(|(_, _, v)| v.norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }

    #[test]
    fn bare_ring_spectrum_is_harmonic() {
        let mut phys = SquidPhysicalParams::base();
        phys.drive_current = 0.0;
        let n = 30;
        let s = FockSpace::single(n).unwrap();
        let d = squid_dimensionless(&phys).unwrap();
        let ring = ring_terms(&s, 0, &SquidDimensionlessParams { josephson_energy: 0.0, zeta: 0.0, ..d }, 0.0).unwrap();
        let h = sum_all(n, &ring.hamiltonian).unwrap();
        let eig = hermitian_eigenvalues(&h.to_dense());
        // p²/2 + x²/2 on the truncated basis: lowest levels are n + 1/2.
        for (k, e) in eig.iter().take(n / 2).enumerate() {
            assert!((e - (k as f64 + 0.5)).abs() < 1e-8, "level {k}: {e}");
        }
    }

    #[test]
    fn lindblad_ops_are_scaled_annihilators() {
        let s = FockSpace::pair(4).unwrap();
        let m = duffing_pair(&DuffingParams::default(), &s).unwrap();
        let a = annihilation(&s, 1).unwrap();
        let l = &m.lindblad_ops()[1];
        let err = l.sub(&a.scale_real((2.0 * DuffingParams::default().gamma).sqrt())).unwrap().nnz();
        assert_eq!(err, 0);
    }
}
