use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qbench::benchmark::is_ppt;
use qbench::model::*;
use qbench::random::*;
use qbench::tensor::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn dims() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..4, 1usize..4, 1usize..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn jamiolkowski_score_matches_direct((din, dout, dr) in dims(), seed in any::<u64>(), nk in 1usize..4) {
        let mut r = rng(seed);
        let sigma = random_density(&mut r, &[din, dr], din * dr);
        let obs = random_hermitian(&mut r, &[dout, dr]);
        let t = DetTest::new(sigma, obs).unwrap();
        let ch = random_channel(&mut r, din, dout, nk);
        let omega = performance_operator(&t).unwrap();
        let direct = score_det_direct(&t, &ch).unwrap();
        let jam = score_det_jam(&omega, &jamiolkowski(&ch)).unwrap();
        prop_assert!((direct - jam).abs() < 1e-10, "{direct} vs {jam}");
    }

    #[test]
    fn jamiolkowski_marginal_is_identity((din, dout, _) in dims(), seed in any::<u64>(), nk in 1usize..4) {
        let ch = random_channel(&mut rng(seed), din, dout, nk);
        let marg = partial_trace(&jamiolkowski(&ch), &[1]).unwrap();
        prop_assert!(marg.sub(&Operator::identity(&[din])).unwrap().norm_fro() < 1e-10);
        // The swap-ordered convention makes C^{T_A}, not C, positive.
        prop_assert!(partial_transpose(&jamiolkowski(&ch), 1).unwrap().is_psd(1e-10));
    }

    #[test]
    fn subchannels_do_not_increase_trace((din, dout, _) in dims(), seed in any::<u64>(), nk in 1usize..4) {
        let mut r = rng(seed);
        let ch = random_subchannel(&mut r, din, dout, nk);
        let rho = random_density(&mut r, &[din], din);
        let out = apply_channel(&ch, &rho).unwrap();
        prop_assert!(out.trace().re <= 1.0 + 1e-12);
        prop_assert!(out.is_psd(1e-12));
    }

    #[test]
    fn probabilistic_score_ignores_kraus_rescaling((din, dout, dr) in dims(), seed in any::<u64>(), q in 0.05f64..1.0) {
        let mut r = rng(seed);
        let t = DetTest::new(random_density(&mut r, &[din, dr], din * dr), random_hermitian(&mut r, &[dout, dr])).unwrap();
        let ch = random_subchannel(&mut r, din, dout, 2);
        let (s1, p1) = score_prob_direct(&t, &ch).unwrap();
        let (s2, p2) = score_prob_direct(&t, &ch.scaled(q).unwrap()).unwrap();
        prop_assert!((s1 - s2).abs() < 1e-9 * s1.abs().max(1.0));
        prop_assert!((p2 - q * p1).abs() < 1e-12);
    }

    #[test]
    fn prob_score_matches_operator_form((din, dout, dr) in dims(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let sigma = random_density(&mut r, &[din, dr], din * dr);
        let t = DetTest::new(sigma.clone(), random_hermitian(&mut r, &[dout, dr])).unwrap();
        let omega = performance_operator(&t).unwrap();
        let sigma_a = partial_trace(&sigma, &[0]).unwrap();
        let pt = ProbTest::new(omega, sigma_a).unwrap();
        let ch = random_subchannel(&mut r, din, dout, 2);
        let (s1, p1) = score_prob_direct(&t, &ch).unwrap();
        let (s2, p2) = score_prob(&pt, &ch).unwrap();
        prop_assert!((s1 - s2).abs() < 1e-9 && (p1 - p2).abs() < 1e-12);
    }

    #[test]
    fn measure_and_prepare_channels_are_ppt(seed in any::<u64>(), din in 2usize..4, dout in 2usize..4, n in 1usize..5) {
        let mut r = rng(seed);
        // POVM from a random isometry split into rank-one pieces.
        let u = random_unitary(&mut r, din * n);
        let v = u.view((0, 0), (din * n, din)).into_owned();
        let povm: Vec<Operator> = (0..n)
            .map(|k| {
                let blk = v.rows(k * din, din).into_owned();
                Operator::new(vec![din], blk.adjoint() * blk).unwrap()
            })
            .collect();
        let outputs: Vec<Operator> = (0..n).map(|_| random_density(&mut r, &[dout], 1)).collect();
        let ch = mp_channel(&povm, &outputs).unwrap();
        prop_assert!(ch.trace_preserving());
        prop_assert!(is_ppt(&jamiolkowski(&ch)).unwrap());
    }

    #[test]
    fn fidelity_operator_is_a_subnormalized_state(seed in any::<u64>(), d in 2usize..4, n in 1usize..5) {
        let mut r = rng(seed);
        let states: Vec<PureState> = (0..n).map(|_| random_pure(&mut r, &[d])).collect();
        let t = fidelity_test(&Ensemble::pure_uniform(states).unwrap()).unwrap();
        prop_assert!(t.omega.is_psd(1e-12));
        prop_assert!(t.omega.trace().re <= 1.0 + 1e-12);
        prop_assert!(t.sigma_a.is_density(1e-12));
    }
}

#[test]
fn identity_channel_is_perfect_on_fidelity_tests() {
    let t = fidelity_test(&Ensemble::pure_uniform(qubit_octahedron()).unwrap()).unwrap();
    let (s, p) = score_prob(&t, &Channel::identity(2)).unwrap();
    assert!((s - 1.0).abs() < 1e-12 && (p - 1.0).abs() < 1e-12);
    let (s, _) = score_prob(&t, &Channel::completely_depolarizing(2)).unwrap();
    assert!((s - 0.5).abs() < 1e-12);
}

#[test]
fn vanishing_success_is_reported() {
    let t = fidelity_test(&Ensemble::pure_uniform(qubit_octahedron()).unwrap()).unwrap();
    let ch = Channel::identity(2).scaled(1e-20).unwrap();
    assert!(matches!(score_prob(&t, &ch), Err(qbench::QbError::VanishingSuccess(_))));
}

#[test]
fn channel_rejects_non_tp_kraus_when_tp_requested() {
    let k = CMat::identity(2, 2) * c(0.5, 0.0);
    assert!(Channel::new(vec![k.clone()], true).is_err());
    assert!(!Channel::new(vec![k], false).unwrap().trace_preserving());
}
