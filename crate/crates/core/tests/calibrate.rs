use fishswim_core::calibrate::{
    cross_correlation_lag, fit_servo_params, load_reference_dir, run_excitation, CalibrationReport,
    CalibrationSetup, Excitation, ResponseTrace, ServoParams, SAMPLE_PERIOD,
};
use fishswim_core::Error;

fn amp() -> f64 {
    20f64.to_radians()
}

fn refs(setup: &CalibrationSetup, p: &ServoParams) -> Vec<(String, ResponseTrace)> {
    vec![
        (
            "step".into(),
            run_excitation(setup, &Excitation::step(amp(), 0.5, 2.0), p).unwrap(),
        ),
        (
            "sine".into(),
            run_excitation(setup, &Excitation::sinusoid(amp(), 1.0, 2.0), p).unwrap(),
        ),
    ]
}

/// Latency-only search around fixed gains.
fn latency_setup(p: &ServoParams) -> CalibrationSetup {
    CalibrationSetup {
        initial: ServoParams { latency: 0.04, ..*p },
        kp_grid: vec![p.kp],
        kd_grid: vec![p.kd],
        latency_grid: (0..=30).map(|i| i as f64 * 0.004).collect(),
        refine_sweeps: 0,
        ..Default::default()
    }
}

#[test]
fn stiff_servo_settles_on_the_step() {
    let setup = CalibrationSetup::default();
    let p = ServoParams {
        kp: 20.0,
        kd: 0.5,
        latency: 0.0,
    };
    let tr = run_excitation(&setup, &Excitation::step(amp(), 0.2, 3.0), &p).unwrap();
    let tail = &tr.measured[tr.len() - 25..];
    for m in tail {
        for j in m {
            assert!((j - amp()).abs() < 0.02 * amp(), "{j}");
        }
    }
}

#[test]
fn latency_shifts_the_step_response() {
    let setup = CalibrationSetup::default();
    let base = ServoParams {
        kp: 3.0,
        kd: 0.1,
        latency: 0.0,
    };
    let ex = Excitation::step(amp(), 0.5, 2.0);
    let a = run_excitation(&setup, &ex, &base).unwrap();
    for latency in [0.04, 0.068, 0.1] {
        let b = run_excitation(&setup, &ex, &ServoParams { latency, ..base }).unwrap();
        // rates, so the step edge dominates the correlation
        let ja: Vec<f64> = a.measured.windows(2).map(|w| w[1][2] - w[0][2]).collect();
        let jb: Vec<f64> = b.measured.windows(2).map(|w| w[1][2] - w[0][2]).collect();
        let lag = cross_correlation_lag(&ja, &jb, 20) as f64 * SAMPLE_PERIOD;
        println!("latency {latency}: lag {lag:.3} s");
        assert!(lag >= latency - SAMPLE_PERIOD / 2.0 - 1e-9);
    }
}

#[test]
fn identical_params_give_identical_traces() {
    let setup = CalibrationSetup::default();
    let p = setup.initial;
    let ex = Excitation::sinusoid(amp(), 1.0, 1.0);
    assert_eq!(
        run_excitation(&setup, &ex, &p).unwrap(),
        run_excitation(&setup, &ex, &p).unwrap()
    );
}

#[test]
fn fit_returns_current_params_on_own_output() {
    let setup = CalibrationSetup {
        kp_grid: vec![1.0, 4.0],
        kd_grid: vec![0.05, 0.2],
        latency_grid: vec![0.0, 0.1],
        refine_sweeps: 2,
        ..Default::default()
    };
    let r = fit_servo_params(&setup, &refs(&setup, &setup.initial)).unwrap();
    assert_eq!(r.params, setup.initial);
    assert_eq!(r.total_rmse, 0.0);
    assert!(r.total_rmse <= r.initial_rmse);
}

#[test]
fn zero_latency_is_identified_as_zero() {
    let truth = ServoParams {
        kp: 3.0,
        kd: 0.1,
        latency: 0.0,
    };
    let setup = latency_setup(&truth);
    let r = fit_servo_params(&setup, &refs(&setup, &truth)).unwrap();
    assert_eq!(r.params.latency, 0.0);
}

#[test]
fn latency_identification_is_monotone() {
    let base = ServoParams {
        kp: 3.0,
        kd: 0.1,
        latency: 0.0,
    };
    let mut prev = -1.0;
    for truth in [0.02, 0.04, 0.06, 0.08, 0.1] {
        let p = ServoParams {
            latency: truth,
            ..base
        };
        let setup = latency_setup(&p);
        let fitted = fit_servo_params(&setup, &refs(&setup, &p))
            .unwrap()
            .params
            .latency;
        println!("true latency {truth}: fitted {fitted:.3}");
        assert!(fitted > prev);
        prev = fitted;
    }
}

#[test]
fn reference_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_reference_dir(dir.path()), Err(Error::Data(_))));
    let setup = CalibrationSetup::default();
    let rs = refs(&setup, &setup.initial);
    for (name, tr) in &rs {
        let f = std::fs::File::create(dir.path().join(format!("{name}.csv"))).unwrap();
        tr.write_csv(f).unwrap();
    }
    let back = load_reference_dir(dir.path()).unwrap();
    let names: Vec<_> = back.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["sine", "step"]);
    for (n, tr) in &back {
        let orig = &rs.iter().find(|(m, _)| m == n).unwrap().1;
        assert_eq!(tr.len(), orig.len());
        for (a, b) in tr.measured.iter().zip(&orig.measured) {
            for j in 0..3 {
                assert!((a[j] - b[j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn report_json_round_trip() {
    let r = CalibrationReport {
        params: ServoParams {
            kp: 3.1,
            kd: 0.09,
            latency: 0.072,
        },
        total_rmse: 0.002,
        initial_rmse: 0.07,
        residuals: vec![],
        evaluations: 12,
    };
    let back = CalibrationReport::from_json(&r.to_json().unwrap()).unwrap();
    assert_eq!(back, r);
    let servo = back.params.apply(&Default::default());
    assert_eq!(servo.kp, [3.1; 3]);
}
