use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qbench::benchmark::*;
use qbench::builtins;
use qbench::model::*;
use qbench::random::*;
use qbench::tensor::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn quick() -> PnrConfig {
    PnrConfig { restarts: 16, ..PnrConfig::default() }
}

fn product_value(m: &Operator, a: &CVec, b: &CVec) -> f64 {
    let ab = a.kronecker(b);
    (ab.adjoint() * m.mat() * ab)[(0, 0)].re
}

/// Separable, hence PPT, operator `Σ_k ρ_k ⊗ σ_k`.
fn separable<R: rand::Rng>(r: &mut R, d1: usize, d2: usize, terms: usize) -> Operator {
    let mut out = Operator::zeros(&[d1, d2]);
    for _ in 0..terms {
        let t = kron(&random_density(r, &[d1], 1), &random_density(r, &[d2], 1));
        out = out.add(&t).unwrap();
    }
    out.scale(1.0 / terms as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pnr_is_sandwiched(seed in any::<u64>(), d1 in 1usize..4, d2 in 1usize..4) {
        let mut r = rng(seed);
        let m = random_hermitian(&mut r, &[d1, d2]);
        let res = product_numerical_range(&m, &quick()).unwrap();
        prop_assert!(res.lower_bound <= res.value + 1e-12 && res.value <= res.upper_bound + 1e-12);
        prop_assert!(res.value <= m.max_eigenvalue().unwrap() + 1e-10);
        prop_assert!((product_value(&m, &res.maximizer_a, &res.maximizer_b) - res.value).abs() < 1e-9);
        let (a, b) = (random_pure(&mut r, &[d1]), random_pure(&mut r, &[d2]));
        prop_assert!(product_value(&m, a.vector(), b.vector()) <= res.value + 1e-9);
    }

    #[test]
    fn pnr_shifts_with_identity(seed in any::<u64>(), shift in -3.0f64..3.0) {
        let m = random_hermitian(&mut rng(seed), &[2, 3]);
        let shifted = m.add(&Operator::identity(&[2, 3]).scale(shift)).unwrap();
        let v0 = product_numerical_range(&m, &quick()).unwrap().value;
        let v1 = product_numerical_range(&shifted, &quick()).unwrap().value;
        prop_assert!((v1 - v0 - shift).abs() < 1e-8, "{v0} + {shift} vs {v1}");
    }

    #[test]
    fn deterministic_benchmark_is_below_probabilistic(seed in any::<u64>()) {
        let mut r = rng(seed);
        let omega = separable(&mut r, 2, 2, 3);
        let sigma = random_density(&mut r, &[2], 2);
        let det = det_benchmark(&omega, &BenchConfig::default()).unwrap();
        let prob = prob_benchmark(&ProbTest::new(omega, sigma).unwrap(), &quick()).unwrap();
        prop_assert!(det.value <= prob.value + 1e-6, "{} vs {}", det.value, prob.value);
    }
}

#[test]
fn grid_bracket_contains_seesaw_value() {
    let mut r = rng(2024);
    for _ in 0..5 {
        let m = random_hermitian(&mut r, &[2, 2]);
        let seesaw = product_numerical_range(&m, &quick()).unwrap();
        let g = pnr_grid_oracle(&m, 0.05).unwrap();
        assert!(g.lower <= seesaw.value + 1e-9 && seesaw.value <= g.upper + 1e-9, "{} ∉ [{}, {}]", seesaw.value, g.lower, g.upper);
        assert!((g.lower - seesaw.value).abs() < 1e-8);
    }
}

#[test]
fn twirling_preserves_the_score() {
    let s = builtins::teleport(2).unwrap();
    let rep = GroupRep::pauli();
    let mut r = rng(8);
    for _ in 0..4 {
        let ch = random_channel(&mut r, 2, 2, 3);
        let mut kraus = Vec::new();
        for ((u, up), &w) in rep.elements.iter().zip(&rep.weights) {
            for k in ch.kraus() {
                kraus.push(up.adjoint() * k * u * c(w.sqrt(), 0.0));
            }
        }
        let twirled = Channel::new(kraus, true).unwrap();
        let a = score_det_jam(&s.omega, &jamiolkowski(&ch)).unwrap();
        let b = score_det_jam(&s.omega, &jamiolkowski(&twirled)).unwrap();
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

#[test]
fn measure_and_prepare_scores_stay_below_the_benchmark() {
    let s = builtins::teleport(2).unwrap();
    let bench = det_benchmark(&s.omega, &BenchConfig::default()).unwrap().value;
    assert!((bench - 2.0 / 3.0).abs() < 1e-8);
    let mut r = rng(99);
    for n in 1..6 {
        let u = random_unitary(&mut r, 2 * n);
        let v = u.view((0, 0), (2 * n, 2)).into_owned();
        let povm: Vec<Operator> =
            (0..n).map(|k| Operator::new(vec![2], v.rows(2 * k, 2).adjoint() * v.rows(2 * k, 2)).unwrap()).collect();
        let outs: Vec<Operator> = (0..n).map(|_| random_density(&mut r, &[2], 1)).collect();
        let ch = mp_channel(&povm, &outs).unwrap();
        assert!(score_det_jam(&s.omega, &jamiolkowski(&ch)).unwrap() <= bench + 1e-9);
    }
    let optimal = optimal_mp_channel(&s.omega, s.rep.as_ref().unwrap(), None, &PnrConfig::default()).unwrap();
    assert!((score_det_jam(&s.omega, &jamiolkowski(&optimal)).unwrap() - bench).abs() < 1e-8);
}

#[test]
fn biased_input_raises_the_probabilistic_benchmark() {
    let s = builtins::teleport(2).unwrap();
    let sym = (CMat::identity(4, 4) + builtins::swap(2)) * c(1.0 / 6.0, 0.0);
    let omega = Operator::new(vec![2, 2], sym).unwrap();
    assert!(omega.sub(&s.omega).unwrap().norm_fro() < 1e-12);
    let t = ProbTest::new(omega, Operator::diag(&[0.9, 0.1])).unwrap();
    let v = prob_benchmark(&t, &PnrConfig::default()).unwrap().value;
    assert!(v > 2.0 / 3.0 + 1e-3, "{v}");
}

#[test]
fn mismatched_representation_is_not_covariant() {
    let s = builtins::teleport(2).unwrap();
    let rep = GroupRep::pauli();
    assert!(check_covariance(&s.omega, &rep, 1e-9));
    let mut shuffled = rep.elements.clone();
    let first = shuffled[0].1.clone();
    let n = shuffled.len();
    for i in 0..n - 1 {
        shuffled[i].1 = shuffled[i + 1].1.clone();
    }
    shuffled[n - 1].1 = first;
    let bad = GroupRep::new(shuffled, rep.weights.clone()).unwrap();
    assert!(!check_covariance(&s.omega, &bad, 1e-9));
    assert!(covariant_benchmark(&s.omega, &bad, &PnrConfig::default()).is_err());
}

#[test]
fn non_ppt_operators_are_refused() {
    let s = builtins::chsh();
    assert!(!is_ppt(&s.omega).unwrap());
    assert!(matches!(det_benchmark(&s.omega, &BenchConfig::default()), Err(qbench::QbError::PptViolation(_))));
}
