use critshuffle::curve::{delta_from_tradeoff, delta_np, tradeoff_generic, Direction};
use critshuffle::dist::lattice::int_point;
use critshuffle::dist::{
    affine_map, convolve, make_skellam, tv_distance, IntDist, LatticeDist, Rational, SkellamMethod,
};
use critshuffle::limit::{poisson_shift_delta_closed, poisson_shift_pair};
use proptest::prelude::*;

fn int_dist() -> impl Strategy<Value = IntDist> {
    (-5i64..5, prop::collection::vec(0.0f64..1.0, 1..8)).prop_filter_map("zero mass", |(offset, w)| {
        let total: f64 = w.iter().sum();
        if total < 1e-3 {
            return None;
        }
        let mut mass: Vec<f64> = w.iter().map(|x| x / total).collect();
        let drift: f64 = 1.0 - mass.iter().sum::<f64>();
        mass[0] = (mass[0] + drift).max(0.0);
        IntDist::new(offset, mass, 0.0).ok()
    })
}

fn embed1(p: &IntDist) -> LatticeDist {
    let points = p.iter().map(|(x, m)| (int_point(&[x]), m)).collect();
    LatticeDist::new(1, points, 0.0).unwrap()
}

proptest! {
    #[test]
    fn convolution_commutes_and_keeps_mass(a in int_dist(), b in int_dist()) {
        let ab = convolve(&a, &b);
        let ba = convolve(&b, &a);
        prop_assert!(tv_distance(&ab, &ba).upper < 1e-14);
        prop_assert!((ab.total_mass() - 1.0).abs() < 1e-12);
        prop_assert!((ab.mean() - a.mean() - b.mean()).abs() < 1e-10);
        prop_assert!((ab.variance() - a.variance() - b.variance()).abs() < 1e-9);
    }

    #[test]
    fn tv_is_a_metric(a in int_dist(), b in int_dist(), c in int_dist()) {
        let ab = tv_distance(&a, &b).upper;
        prop_assert!((0.0..=1.0 + 1e-15).contains(&ab));
        prop_assert!((ab - tv_distance(&b, &a).upper).abs() < 1e-15);
        prop_assert!(tv_distance(&a, &a).upper < 1e-15);
        prop_assert!(ab <= tv_distance(&a, &c).upper + tv_distance(&c, &b).upper + 1e-14);
    }

    #[test]
    fn delta_at_zero_is_tv_and_nonincreasing(p in int_dist(), q in int_dist()) {
        let tv = tv_distance(&p, &q).upper;
        prop_assert!((delta_np(&p, &q, 0.0, Direction::Forward).value - tv).abs() < 1e-14);
        let mut prev = f64::INFINITY;
        for eps in [0.0, 0.25, 0.5, 1.0, 2.0, 5.0] {
            let d = delta_np(&p, &q, eps, Direction::TwoSided).value;
            prop_assert!(d <= prev + 1e-15);
            prop_assert!(d >= delta_np(&p, &q, eps, Direction::Forward).value - 1e-15);
            prev = d;
        }
    }

    #[test]
    fn delta_is_invariant_under_relabeling(p in int_dist(), q in int_dist(), flip in any::<bool>(), eps in 0.0f64..3.0) {
        let s = if flip { -1 } else { 1 };
        let (ps, qs) = (affine_map(&p, s, 2).unwrap(), affine_map(&q, s, 2).unwrap());
        let d = delta_np(&p, &q, eps, Direction::Forward).value;
        prop_assert!((delta_np(&ps, &qs, eps, Direction::Forward).value - d).abs() < 1e-14);
    }

    #[test]
    fn post_processing_cannot_increase_delta(p in int_dist(), q in int_dist(), m in 2i64..4, eps in 0.0f64..3.0) {
        let (lp, lq) = (embed1(&p), embed1(&q));
        let coarse = |x: &[Rational]| vec![(x[0] / Rational::from_integer(m)).floor()];
        let (cp, cq) = (lp.pushforward(1, coarse), lq.pushforward(1, coarse));
        for dir in [Direction::Forward, Direction::Reverse] {
            prop_assert!(delta_np(&cp, &cq, eps, dir).value <= delta_np(&lp, &lq, eps, dir).value + 1e-14);
        }
    }

    #[test]
    fn tradeoff_round_trips_to_delta(p in int_dist(), q in int_dist(), eps in 0.0f64..3.0) {
        let curve = tradeoff_generic(&p, &q).unwrap();
        let direct = delta_np(&p, &q, eps, Direction::Forward).value;
        prop_assert!((delta_from_tradeoff(&curve, eps) - direct).abs() < 1e-10);
    }

    #[test]
    fn poisson_shift_closed_form(lambda in 0.05f64..6.0, eps in 0.0f64..6.0) {
        let (p, q) = poisson_shift_pair(lambda, 1e-15).unwrap();
        let closed = poisson_shift_delta_closed(lambda, eps).unwrap();
        prop_assert!((closed - delta_np(&p, &q, eps, Direction::Forward).value).abs() < 1e-12);
        // Only the atom at 0 contributes once lambda e^-eps <= 1.
        if lambda * (-eps).exp() <= 1.0 {
            prop_assert!((delta_np(&p, &q, eps, Direction::Reverse).value - (-lambda).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn skellam_methods_agree(l0 in 0.0f64..6.0, l1 in 0.0f64..6.0) {
        prop_assume!(l0 + l1 > 1e-3);
        let a = make_skellam(l0, l1, 1e-14, SkellamMethod::Bessel).unwrap();
        let b = make_skellam(l0, l1, 1e-14, SkellamMethod::Convolution).unwrap();
        prop_assert!(tv_distance(&a, &b).upper < 1e-11);
        prop_assert!((a.mean() - (l0 - l1)).abs() < 1e-9);
    }
}
