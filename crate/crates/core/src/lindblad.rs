//! Deterministic Lindblad master-equation integration (fixed-step RK4 on the
//! dense density matrix). Small Hilbert spaces only; this is the reference
//! the stochastic ensembles are checked against.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::hilbert::{DensityMatrix, SparseOperator, C64};
use crate::models::SystemModel;

/// Largest joint dimension accepted by [`integrate_master`].
pub const MAX_DIMENSION: usize = 4096;
/// Largest trace drift tolerated between recorded points.
pub const MAX_TRACE_DRIFT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LindbladError {
    #[error("density matrix dimension {found} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("dimension {0} exceeds the master-equation limit of {MAX_DIMENSION}")]
    TooLarge(usize),
    #[error("trace drifted by {drift:e} at tau = {tau}")]
    TraceDrift { tau: f64, drift: f64 },
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
}

fn check_dim(model: &SystemModel, rho: &DMatrix<C64>) -> Result<(), LindbladError> {
    let expected = model.space().dim();
    if rho.nrows() != expected || rho.ncols() != expected {
        return Err(LindbladError::DimensionMismatch {
            expected,
            found: rho.nrows(),
        });
    }
    Ok(())
}

struct Generator<'m> {
    model: &'m SystemModel,
    decay_ops: Vec<SparseOperator>,
}

impl<'m> Generator<'m> {
    fn new(model: &'m SystemModel) -> Self {
        let decay_ops = model
            .lindblad_ops()
            .iter()
            .map(|l| l.adjoint().matmul(l).expect("square operators"))
            .collect();
        Self { model, decay_ops }
    }

    fn rhs(&self, rho: &DMatrix<C64>, tau: f64) -> DMatrix<C64> {
        // The products below assume ρ = ρ†; on an anti-Hermitian remainder
        // they are not dissipative, so rounding errors would grow.
        let rho = &((rho + rho.adjoint()) * C64::new(0.5, 0.0));
        let mut h_rho = self.model.static_hamiltonian().mul_dense(rho);
        for (op, drive) in self.model.driven_terms() {
            h_rho += op.mul_dense(rho) * C64::new(drive.value(tau), 0.0);
        }
        // -i[H, ρ] = -i(Hρ - (Hρ)†) for Hermitian ρ.
        let mut out = (&h_rho - h_rho.adjoint()) * C64::new(0.0, -1.0);
        for (l, k) in self.model.lindblad_ops().iter().zip(&self.decay_ops) {
            let l_rho = l.mul_dense(rho);
            out += l.mul_dense(&l_rho.adjoint());
            let k_rho = k.mul_dense(rho);
            out -= (&k_rho + k_rho.adjoint()) * C64::new(0.5, 0.0);
        }
        out
    }
}

/// `dρ/dτ = -i[H(τ), ρ] + Σ_j (L_j ρ L_j† - ½{L_j†L_j, ρ})` for Hermitian `ρ`.
pub fn lindblad_rhs(rho: &DMatrix<C64>, model: &SystemModel, tau: f64) -> Result<DMatrix<C64>, LindbladError> {
    check_dim(model, rho)?;
    Ok(Generator::new(model).rhs(rho, tau))
}

#[derive(Clone, Debug)]
pub struct MasterEquationRun<'m> {
    pub model: &'m SystemModel,
    pub rho0: DensityMatrix,
    pub t_start: f64,
    pub dt: f64,
    pub steps: usize,
    pub record_every: usize,
}

#[derive(Clone, Debug)]
pub struct MasterSolution {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    /// Largest trace correction applied at a recorded point.
    pub max_trace_correction: f64,
    /// Largest `|ρ - ρ†|` entry removed at a recorded point.
    pub max_hermitian_correction: f64,
}

impl MasterSolution {
    pub fn last(&self) -> &DensityMatrix {
        self.states.last().expect("the initial state is always recorded")
    }
}

/// Fixed-step RK4. Each recorded `ρ` is re-Hermitised and trace-renormalised;
/// the corrections are reported in the solution.
pub fn integrate_master(run: &MasterEquationRun<'_>) -> Result<MasterSolution, LindbladError> {
    let dim = run.model.space().dim();
    if dim > MAX_DIMENSION {
        return Err(LindbladError::TooLarge(dim));
    }
    if !(run.dt.is_finite() && run.dt > 0.0) {
        return Err(LindbladError::InvalidTimeStep(run.dt));
    }
    check_dim(run.model, run.rho0.matrix())?;
    let gen = Generator::new(run.model);
    let every = run.record_every.max(1);
    let dt = run.dt;
    let half = C64::new(0.5 * dt, 0.0);
    let full = C64::new(dt, 0.0);
    let sixth = C64::new(dt / 6.0, 0.0);
    let two = C64::new(2.0, 0.0);

    let mut rho = run.rho0.matrix().clone();
    let mut solution = MasterSolution {
        times: vec![run.t_start],
        states: vec![run.rho0.clone()],
        max_trace_correction: 0.0,
        max_hermitian_correction: 0.0,
    };
    for k in 0..run.steps {
        let tau = run.t_start + k as f64 * dt;
        let k1 = gen.rhs(&rho, tau);
        let k2 = gen.rhs(&(&rho + &k1 * half), tau + 0.5 * dt);
        let k3 = gen.rhs(&(&rho + &k2 * half), tau + 0.5 * dt);
        let k4 = gen.rhs(&(&rho + &k3 * full), tau + dt);
        rho += (k1 + (k2 + k3) * two + k4) * sixth;
        if (k + 1) % every == 0 || k + 1 == run.steps {
            let t = tau + dt;
            let sym = (&rho + rho.adjoint()) * C64::new(0.5, 0.0);
            let herm = (&rho - &sym).iter().map(|v| v.norm()).fold(0.0, f64::max);
            let trace = sym.trace().re;
            let drift = (trace - 1.0).abs();
            if drift > MAX_TRACE_DRIFT {
                return Err(LindbladError::TraceDrift { tau: t, drift });
            }
            rho = sym / C64::new(trace, 0.0);
            solution.max_trace_correction = solution.max_trace_correction.max(drift);
            solution.max_hermitian_correction = solution.max_hermitian_correction.max(herm);
            if (k + 1) % every == 0 {
                solution.times.push(t);
                solution.states.push(DensityMatrix::from_matrix_unchecked(rho.clone()));
            }
        }
    }
    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{annihilation, number, FockSpace, StateVector};
    use crate::models::{harmonic_mode, HarmonicParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mode(zeta: f64, n: usize) -> SystemModel {
        harmonic_mode(
            &HarmonicParams {
                zeta,
                static_force: 0.0,
                drive_amplitude: 0.0,
                drive_omega: 1.0,
                damping_correction: false,
            },
            &FockSpace::single(n).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn trace_of_rhs_vanishes() {
        let m = mode(0.3, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let states: Vec<_> = (0..4).map(|_| StateVector::random(10, &mut rng)).collect();
        let rho = DensityMatrix::mixture(&states).unwrap();
        let d = lindblad_rhs(rho.matrix(), &m, 0.7).unwrap();
        assert!(d.trace().norm() < 1e-12);
    }

    #[test]
    fn number_decay_rate() {
        let zeta = 0.2;
        let m = mode(zeta, 6);
        let s = *m.space();
        let rho = DensityMatrix::pure(&StateVector::fock(&s, &[1]).unwrap());
        let d = lindblad_rhs(rho.matrix(), &m, 0.0).unwrap();
        let n = number(&s, 0).unwrap();
        let rate = DensityMatrix::from_matrix_unchecked(d).expectation(&n).re;
        // Dense oracle: Tr(n D[L]ρ) with L = √(2ζ) a.
        let l = annihilation(&s, 0).unwrap().to_dense() * C64::new((2.0 * zeta).sqrt(), 0.0);
        let r = rho.matrix();
        let ldl = l.adjoint() * &l;
        let dissipator = &l * r * l.adjoint() - (&ldl * r + r * &ldl) * C64::new(0.5, 0.0);
        let oracle = (n.to_dense() * dissipator).trace().re;
        assert!((rate - oracle).abs() < 1e-12);
        assert!((rate + 2.0 * zeta).abs() < 1e-12);
    }

    #[test]
    fn dimension_guard() {
        let m = mode(0.1, 5);
        let bad = DMatrix::<C64>::identity(4, 4);
        assert!(matches!(lindblad_rhs(&bad, &m, 0.0), Err(LindbladError::DimensionMismatch { .. })));
    }

    #[test]
    fn coherent_decay_envelope() {
        let zeta = 0.15;
        let m = mode(zeta, 30);
        let s = *m.space();
        let alpha = C64::new(2.0, 0.0);
        let psi = StateVector::coherent(&s, &[alpha]).unwrap();
        let run = MasterEquationRun {
            model: &m,
            rho0: DensityMatrix::pure(&psi),
            t_start: 0.0,
            dt: 1e-3,
            steps: 5000,
            record_every: 500,
        };
        let sol = integrate_master(&run).unwrap();
        let a = annihilation(&s, 0).unwrap();
        let n = number(&s, 0).unwrap();
        let a0 = sol.states[0].expectation(&a);
        let n0 = sol.states[0].expectation(&n).re;
        for (t, rho) in sol.times.iter().zip(&sol.states) {
            // ⟨a⟩(τ) = ⟨a⟩(0) e^{-iτ} e^{-ζτ}; ⟨a†a⟩ decays as e^{-2ζτ}.
            let expected = a0 * (C64::new(-zeta * t, -t)).exp();
            let got = rho.expectation(&a);
            assert!((got - expected).norm() / expected.norm() < 1e-6, "t={t}: {got} vs {expected}");
            let n_expected = n0 * (-2.0 * zeta * t).exp();
            assert!((rho.expectation(&n).re - n_expected).abs() / n_expected < 1e-6);
        }
    }

    #[test]
    fn purity_preserved_without_damping() {
        let m = mode(0.0, 20);
        let s = *m.space();
        let psi = StateVector::coherent(&s, &[C64::new(1.0, 0.5)]).unwrap();
        let run = MasterEquationRun {
            model: &m,
            rho0: DensityMatrix::pure(&psi),
            t_start: 0.0,
            dt: 2e-3,
            steps: 2000,
            record_every: 200,
        };
        let sol = integrate_master(&run).unwrap();
        for rho in &sol.states {
            assert!((rho.purity() - 1.0).abs() < 1e-8);
        }
    }
}
