use nalgebra::DMatrix;
use ppd_core::glm::GlmProblem;
use ppd_core::model::{EndpointSpec, Family, GlmData, Link, PriorSpec, SamplingPrior, TwoGroupSummary};
use ppd_core::normconst::{A0Grid, PolySurface};
use ppd_core::two_group::{conjugate_posterior, prob_effect_below, ConjugatePosterior, EffectScale};
use ppd_core::RngStream;
use proptest::prelude::*;

proptest! {
    #[test]
    fn inverse_links_are_increasing(a in -30.0f64..30.0, d in 1e-3f64..5.0) {
        for link in [Link::Logit, Link::Probit, Link::Log, Link::CLogLog, Link::Identity] {
            prop_assert!(link.inverse(a) <= link.inverse(a + d), "{link:?}");
        }
    }

    #[test]
    fn summaries_round_trip_through_json(y in 0.0f64..1e6, n in 1u64..1_000_000, v in proptest::option::of(1e-6f64..1e3)) {
        let s = TwoGroupSummary { y_sum: y, n, v };
        let back: TwoGroupSummary = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        prop_assert_eq!(s, back);
    }

    #[test]
    fn streams_round_trip_and_replay(seed in any::<u64>(), id in any::<u64>()) {
        use rand::Rng;
        let s = RngStream::new(seed, id);
        let back: RngStream = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        prop_assert_eq!(s, back);
        let a: u64 = s.rng().random();
        let b: u64 = back.rng().random();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn sampling_priors_round_trip(values in proptest::collection::vec(-5.0f64..5.0, 1..20)) {
        let p = SamplingPrior::values(&values);
        let back: SamplingPrior = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        prop_assert_eq!(p, back);
    }

    #[test]
    fn conjugate_update_is_linear_in_a0(a in 0.0f64..1.0, b in 0.0f64..1.0, y in 0u32..50) {
        let prior = PriorSpec::default().control_prior(Family::Bernoulli);
        let h = TwoGroupSummary::new(y as f64, 60);
        let split = conjugate_posterior(Family::Bernoulli, prior, None, [(&h, a), (&h, b)]).unwrap();
        let joint = conjugate_posterior(Family::Bernoulli, prior, None, [(&h, a + b)]).unwrap();
        match (split, joint) {
            (ConjugatePosterior::Beta { shape1: s1, shape2: s2 }, ConjugatePosterior::Beta { shape1: j1, shape2: j2 }) => {
                prop_assert!((s1 - j1).abs() < 1e-9 && (s2 - j2).abs() < 1e-9);
            }
            _ => prop_assert!(false),
        }
    }

    #[test]
    fn effect_probability_is_a_monotone_cdf(
        a1 in 1.0f64..200.0, b1 in 1.0f64..200.0, a2 in 1.0f64..200.0, b2 in 1.0f64..200.0,
        d in -0.5f64..0.5, step in 0.001f64..0.3,
    ) {
        let t = ConjugatePosterior::Beta { shape1: a1, shape2: b1 };
        let c = ConjugatePosterior::Beta { shape1: a2, shape2: b2 };
        let lo = prob_effect_below(&c, &t, d, EffectScale::Difference).unwrap();
        let hi = prob_effect_below(&c, &t, d + step, EffectScale::Difference).unwrap();
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!(lo <= hi + 2e-6);
    }

    #[test]
    fn power_prior_kernel_adds_over_sets(
        b0 in -2.0f64..2.0, b1 in -1.0f64..1.0, a in 0.0f64..1.0, c in 0.0f64..1.0, seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = RngStream::new(seed, 0).rng();
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
            let x = DMatrix::from_fn(25, 1, |_, _| rng.random::<f64>() - 0.5);
            let y = (0..25).map(|_| f64::from(rng.random::<bool>())).collect();
            GlmData::new(y, x)
        };
        let h1 = mk(&mut rng);
        let h2 = mk(&mut rng);
        let e = EndpointSpec::canonical(Family::Bernoulli);
        let mut both = GlmProblem::new(&e, None, &[&h1, &h2]).unwrap();
        let mut one = GlmProblem::new(&e, None, &[&h1]).unwrap();
        let mut two = GlmProblem::new(&e, None, &[&h2]).unwrap();
        let beta = [b0, b1];
        let lhs = both.log_power_prior_kernel(&beta, &[a, c]);
        let rhs = one.log_power_prior_kernel(&beta, &[a]) + two.log_power_prior_kernel(&beta, &[c]);
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn surface_records_round_trip(coefs in proptest::collection::vec(-50.0f64..50.0, 3)) {
        // Fit an exact quadratic so the surface has degree 2.
        let grid = A0Grid::lattice(8, 0.1, 0.9).unwrap();
        let values: Vec<f64> = (0..8).map(|i| {
            let a = grid.rows[(i, 0)];
            coefs[0] + coefs[1] * a + coefs[2] * a * a
        }).collect();
        let s = PolySurface::fit(&grid, &values, EndpointSpec::canonical(Family::Poisson), "fp").unwrap();
        let back = PolySurface::from_text(&s.to_text()).unwrap();
        prop_assert_eq!(&s, &back);
        prop_assert_eq!(s.eval(&[0.37]).unwrap(), back.eval(&[0.37]).unwrap());
    }

    #[test]
    fn surface_decoder_never_panics(text in "\\PC*") {
        let _ = PolySurface::from_text(&text);
    }
}
