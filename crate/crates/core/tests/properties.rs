use std::f64::consts::TAU;
use std::sync::Arc;

use num_bigint::BigInt;
use proptest::prelude::*;
use umax::poisson::bound_rhs;
use umax::simulate::umax;
use umax::*;

fn points(thetas: &[f64]) -> Vec<Point> {
    thetas.iter().map(|&t| Point::new(t)).collect()
}

fn angles(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..TAU, n)
}

fn gap_generators() -> impl Strategy<Value = GFunction> {
    prop_oneof![
        Just(GFunction::SinHalf),
        Just(GFunction::HalfSin),
        (0.2f64..1.0).prop_map(|y| GFunction::PowSin { y }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernels_are_rotation_and_permutation_invariant(
        t in angles(5),
        shift in 0.0..TAU,
        g in gap_generators(),
    ) {
        for spec in [
            KernelSpec::gap_sum(g.clone(), 5).unwrap(),
            KernelSpec::pairwise_sum(GFunction::SinHalf, 5).unwrap(),
        ] {
            let base = eval_on_points(&spec, &points(&t)).unwrap();
            let rotated: Vec<f64> = t.iter().map(|x| x + shift).collect();
            let mut reversed = t.clone();
            reversed.reverse();
            let r = eval_on_points(&spec, &points(&rotated)).unwrap();
            let p = eval_on_points(&spec, &points(&reversed)).unwrap();
            prop_assert!((base - r).abs() < 1e-10 * (1.0 + base.abs()));
            prop_assert!((base - p).abs() < 1e-10 * (1.0 + base.abs()));
        }
    }

    #[test]
    fn concave_gap_sums_obey_jensen(t in angles(4), g in gap_generators()) {
        let spec = KernelSpec::gap_sum(g.clone(), 4).unwrap();
        let v = eval_on_points(&spec, &points(&t)).unwrap();
        prop_assert!(v <= 4.0 * g.eval(TAU / 4.0) + 1e-12);
    }

    #[test]
    fn dp_equals_bruteforce_bitwise(t in angles(11), m in 2usize..6, g in gap_generators()) {
        let spec = KernelSpec::gap_sum(g, m).unwrap();
        let p = points(&t);
        prop_assert_eq!(
            umax_bruteforce(&p, &spec).unwrap().to_bits(),
            umax_gapsum_dp(&p, &spec).unwrap().to_bits()
        );
        let neg = spec.negated();
        prop_assert_eq!(
            umax_bruteforce(&p, &neg).unwrap().to_bits(),
            umax_gapsum_dp(&p, &neg).unwrap().to_bits()
        );
    }

    #[test]
    fn adding_a_point_never_lowers_the_maximum(t in angles(9), extra in 0.0..TAU) {
        let spec = KernelSpec::pairwise_sum(GFunction::SinHalf, 3).unwrap();
        let before = umax_bruteforce(&points(&t), &spec).unwrap();
        let mut more = t.clone();
        more.push(extra);
        prop_assert!(umax_bruteforce(&points(&more), &spec).unwrap() >= before);
    }

    #[test]
    fn negation_matches_a_negated_custom_kernel(t in angles(7)) {
        let spec = KernelSpec::pairwise_sum(GFunction::SinHalf, 3).unwrap();
        let custom = KernelSpec::custom(3, Arc::new(|x: &[f64]| {
            let mut s = 0.0;
            for i in 0..x.len() {
                for j in 0..i {
                    s -= 2.0 * ((x[i] - x[j]) / 2.0).sin().abs();
                }
            }
            s
        })).unwrap();
        let p = points(&t);
        let a = umax(&p, &spec.negated(), Evaluator::BruteForce).unwrap();
        let b = umax(&p, &custom, Evaluator::BruteForce).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn limit_cdf_is_monotone(a in 0.0f64..50.0, b in 0.0f64..50.0, m in 2usize..7) {
        let law = LimitLaw::from_constant(m, Mode::UMax, 0.3, 1.0).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (fl, fh) = (limit_cdf(&law, lo).unwrap(), limit_cdf(&law, hi).unwrap());
        prop_assert!(fl <= fh);
        prop_assert!((0.0..=1.0).contains(&fl) && (0.0..=1.0).contains(&fh));
    }

    #[test]
    fn bound_rhs_is_monotone(
        n in 6usize..400,
        p in 0.0f64..1e-3,
        taus in prop::collection::vec(0.0f64..1e-2, 2),
        bump in 1e-6f64..1e-3,
        which in 0usize..3,
    ) {
        let base = bound_rhs(n, 3, p, &taus).unwrap();
        let (mut p2, mut t2) = (p, taus.clone());
        if which == 0 { p2 += bump } else { t2[which - 1] += bump }
        prop_assert!(base >= 0.0);
        prop_assert!(bound_rhs(n, 3, p2, &t2).unwrap() >= base);
    }
}

#[test]
fn tridiagonal_identity_exact_up_to_64() {
    for n in 1..=64usize {
        let expected = BigInt::from(n + 1);
        assert_eq!(tridiagonal_det::<BigInt>(n).unwrap(), expected);
        assert_eq!(det_exact(&tridiagonal_matrix::<BigInt>(n)), expected);
    }
}

#[test]
fn tridiagonal_identity_over_rationals() {
    use num_rational::BigRational;
    for n in [1usize, 5, 17, 40] {
        let d = det_exact(&tridiagonal_matrix::<BigRational>(n));
        assert_eq!(d, BigRational::from_integer(BigInt::from(n + 1)));
    }
}
