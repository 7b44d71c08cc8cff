use nalgebra::DMatrix;
use proptest::prelude::*;
use qtraj::hilbert::{partial_trace, FockSpace, SparseOperator, StateVector, C64};
use qtraj::models::{apply_scaling, squid_dimensionless, SquidPhysicalParams};
use qtraj::observables::{entanglement_entropy, entanglement_entropy_of};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(space: &FockSpace, seed: u64) -> StateVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    StateVector::random(space.dim(), &mut rng)
}

/// Unitary `exp(3iH)` for a random Hermitian `H`.
fn random_unitary(n: usize, seed: u64) -> DMatrix<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let h = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new(0.0, 3.0 * l).exp()));
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn reduced_states_are_valid(n in 2usize..7, keep in 0usize..2, seed in any::<u64>()) {
        let space = FockSpace::pair(n).unwrap();
        let psi = random_state(&space, seed);
        let rho = partial_trace(&psi, &space, keep).unwrap();
        prop_assert!((rho.trace() - C64::new(1.0, 0.0)).norm() < 1e-12);
        let m = rho.matrix();
        prop_assert!((m - m.adjoint()).iter().all(|v| v.norm() < 1e-14));
        prop_assert!(rho.eigenvalues().iter().all(|&l| l > -1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn entropy_is_symmetric_between_modes(n in 2usize..8, seed in any::<u64>()) {
        let space = FockSpace::pair(n).unwrap();
        let psi = random_state(&space, seed);
        let s0 = entanglement_entropy_of(&psi, &space, 0).unwrap();
        let s1 = entanglement_entropy_of(&psi, &space, 1).unwrap();
        prop_assert!((s0 - s1).abs() < 1e-9);
        prop_assert!(s0 >= 0.0 && s0 <= (n as f64).ln() + 1e-8);
    }

    #[test]
    fn entropy_invariant_under_local_unitaries(n in 2usize..7, mode in 0usize..2, seed in any::<u64>()) {
        let space = FockSpace::pair(n).unwrap();
        let psi = random_state(&space, seed);
        let u = SparseOperator::from_dense(&random_unitary(n, seed ^ 0x5eed), false).unwrap();
        let rotated = psi.transformed(&u.embed(&space, mode).unwrap()).unwrap();
        let before = entanglement_entropy(&psi, &space).unwrap();
        let after = entanglement_entropy(&rotated, &space).unwrap();
        prop_assert!((before - after).abs() < 1e-9);
    }

    #[test]
    fn product_states_have_no_entropy(n in 2usize..8, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = StateVector::random(n, &mut rng).into_amplitudes();
        let b = StateVector::random(n, &mut rng).into_amplitudes();
        let psi = StateVector::product(&[a, b]).unwrap();
        let space = FockSpace::pair(n).unwrap();
        prop_assert!(entanglement_entropy(&psi, &space).unwrap().abs() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn dimensionless_parameters_are_scale_invariant(la in -6.0f64..3.0, lb in -3.0f64..3.0) {
        let (a, b) = (10f64.powf(la), 10f64.powf(lb));
        let base = SquidPhysicalParams::base();
        let d0 = squid_dimensionless(&base).unwrap();
        let d = squid_dimensionless(&apply_scaling(&base, a, b).unwrap()).unwrap();
        for (x, y) in [(d0.beta, d.beta), (d0.zeta, d.zeta), (d0.omega, d.omega), (d0.phi_d, d.phi_d), (d0.phi_x, d.phi_x)] {
            prop_assert!((x - y).abs() < 1e-12, "{x} vs {y} at a={a:e}, b={b:e}");
        }
        let ratio = d.big_omega / d0.big_omega;
        prop_assert!((ratio / (b / a).powf(0.25) - 1.0).abs() < 1e-12);
    }
}
