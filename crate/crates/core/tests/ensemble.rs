use fockstab::ensemble::mean_value_increases;
use fockstab::{
    coherent_state, doob_audit, run_ensemble, ControlParams, EnsembleConfig, FeedbackSystem, LyapunovParams,
    ModelParams, StateVector,
};

fn system(alpha_bar: f64) -> FeedbackSystem {
    let mp = ModelParams::new(0.25, 0.61, 2, 40).unwrap();
    let lp = LyapunovParams::new(&mp, None).unwrap();
    FeedbackSystem::new(mp, lp, ControlParams::new(alpha_bar)).unwrap()
}

fn cfg(trajectories: usize, steps: usize, seed: u64) -> EnsembleConfig {
    EnsembleConfig {
        trajectories,
        steps,
        master_seed: seed,
        convergence_fidelity: 0.99,
        record_stride: 5,
    }
}

#[test]
fn convergence_fraction_grows_with_horizon() {
    let sys = system(0.2);
    let init = coherent_state(2f64.sqrt(), &sys.model).unwrap();
    let fractions: Vec<f64> = [40, 100, 200]
        .into_iter()
        .map(|steps| {
            run_ensemble(&cfg(200, steps, 13), &sys, &init, 0, false)
                .unwrap()
                .stats
                .final_row()
                .conv_fraction
        })
        .collect();
    assert!(fractions.windows(2).all(|w| w[1] >= w[0]), "{fractions:?}");
}

#[test]
fn nested_runs_share_prefixes() {
    let sys = system(0.2);
    let init = coherent_state(2f64.sqrt(), &sys.model).unwrap();
    let short = run_ensemble(&cfg(20, 30, 17), &sys, &init, 0, false).unwrap();
    let long = run_ensemble(&cfg(20, 60, 17), &sys, &init, 0, false).unwrap();
    assert_eq!(short.stats.rows[..], long.stats.rows[..short.stats.rows.len()]);
}

#[test]
fn pure_measurement_obeys_maximal_inequality() {
    let sys = system(0.0);
    let init = coherent_state(2f64.sqrt(), &sys.model).unwrap();
    let res = run_ensemble(&cfg(400, 100, 19), &sys, &init, 0, false).unwrap();
    let v0 = sys.value(&init);
    for ratio in [1.05, 1.2, 2.0, 10.0] {
        let rep = doob_audit(&res, v0, ratio * v0);
        assert!(rep.passed, "{rep:?}");
    }
    assert!(mean_value_increases(&res.stats, 3.0).is_empty());
}

#[test]
fn pure_measurement_concentrates_on_some_level() {
    let sys = system(0.0);
    let amps: Vec<f64> = (0..41).map(|n| if n < 8 { 1.0 } else { 0.0 }).collect();
    let init = StateVector::from_real(&amps).unwrap();
    let fractions: Vec<f64> = [10, 100, 1000]
        .into_iter()
        .map(|steps| {
            run_ensemble(&cfg(200, steps, 23), &sys, &init, 0, false)
                .unwrap()
                .concentration()
                .fraction
        })
        .collect();
    assert!(fractions.windows(2).all(|w| w[1] >= w[0]), "{fractions:?}");
    assert!(fractions[2] >= 0.95, "{fractions:?}");
    // no preference for the target: its mass tracks its initial population
    let res = run_ensemble(&cfg(400, 300, 29), &sys, &init, 0, false).unwrap();
    let p: f64 = 1.0 / 8.0;
    let se = (p * (1.0 - p) / 400.0).sqrt();
    assert!((res.concentration().target_mass - p).abs() <= 4.0 * se);
}
