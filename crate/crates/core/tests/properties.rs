use fockstab::lyapunov::k2_closed_form;
use fockstab::{
    choose_alpha, lyapunov_value, ControlParams, DisplacementTable, FeedbackSystem, LyapunovParams, ModelParams,
    Outcome, RngStream, RunConfig, StateVector,
};
use proptest::prelude::*;

fn system() -> &'static FeedbackSystem {
    use std::sync::OnceLock;
    static SYS: OnceLock<FeedbackSystem> = OnceLock::new();
    SYS.get_or_init(|| {
        let mp = ModelParams::new(0.25, 0.61, 2, 40).unwrap();
        let lp = LyapunovParams::new(&mp, None).unwrap();
        FeedbackSystem::new(mp, lp, ControlParams::new(0.2)).unwrap()
    })
}

fn wide_table() -> &'static DisplacementTable {
    use std::sync::OnceLock;
    static T: OnceLock<DisplacementTable> = OnceLock::new();
    T.get_or_init(|| DisplacementTable::new(40, 1.0).unwrap())
}

prop_compose! {
    fn state(max_support: usize)(seed in any::<u64>(), support in 1..=max_support) -> StateVector {
        StateVector::random(&mut RngStream::new(seed), support, 40)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn branch_probabilities_sum_to_one(s in state(41)) {
        let m = system().lyapunov.measurement();
        let total = m.probability(&s, Outcome::Ground) + m.probability(&s, Outcome::Excited);
        prop_assert!((total - 1.0).abs() <= 1e-12);
        for o in [Outcome::Ground, Outcome::Excited] {
            if let Ok((post, p)) = m.collapse(&s, o) {
                prop_assert!(p > 0.0);
                prop_assert!((post.norm_sqr() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn displacement_is_norm_preserving_and_invertible(s in state(20), alpha in -1.0f64..1.0) {
        let t = wide_table();
        let d = t.apply(&s, alpha);
        prop_assert!((d.norm_sqr() - 1.0).abs() <= 1e-12);
        let back = t.apply(&d, -alpha);
        for (a, b) in back.amplitudes().iter().zip(s.amplitudes()) {
            prop_assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn lyapunov_is_nonnegative_and_measurement_decreases_it(s in state(41)) {
        let lp = &system().lyapunov;
        let v = lyapunov_value(&s, lp);
        prop_assert!(v.total >= 0.0);
        prop_assert!((v.v1 + v.v2 - v.total).abs() <= 1e-14);
        prop_assert!(k2_closed_form(&s, lp) <= 0.0);
    }

    #[test]
    fn feedback_never_increases_value(s in state(38)) {
        let sys = system();
        let v = sys.value(&s);
        let (alpha, v_star) = choose_alpha(&s, &sys.control, &sys.lyapunov, &sys.table);
        prop_assert!(v_star <= v);
        prop_assert!(alpha.abs() <= sys.control.alpha_bar);
        let direct = sys.value(&sys.table.apply(&s, alpha));
        prop_assert!((direct - v_star).abs() <= 1e-12);
    }

    #[test]
    fn uniform_draws_stay_in_unit_interval(seed in any::<u64>()) {
        let mut rng = RngStream::new(seed);
        for _ in 0..100 {
            let u = rng.next_f64();
            prop_assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn config_round_trip(
        theta in 0.0f64..1.0,
        alpha_bar in 0.0f64..0.5,
        steps in 0usize..500,
        seed in any::<u64>(),
        delta in prop_oneof![Just(None), (1e-4f64..0.1).prop_map(Some)],
    ) {
        let mut json = serde_json::json!({
            "theta": theta, "alpha_bar": alpha_bar, "steps": steps, "master_seed": seed,
        });
        if let Some(d) = delta {
            json["delta"] = d.into();
        }
        let c = RunConfig::from_json(&json.to_string()).unwrap();
        let once = c.to_json();
        let again = RunConfig::from_json(&once).unwrap();
        prop_assert_eq!(&again, &c);
        prop_assert_eq!(again.to_json(), once);
    }
}
