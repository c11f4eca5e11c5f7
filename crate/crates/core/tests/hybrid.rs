use zenocert::hybrid::{simulate, zeno_time, HybridSystem, SimOptions, SystemFile, Verdict};

fn example(name: &str) -> SystemFile {
    let path = format!("{}/../cli/examples/{name}.json", env!("CARGO_MANIFEST_DIR"));
    SystemFile::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn ball(c: f64) -> HybridSystem {
    example("ball").build(&[("c".into(), c)]).unwrap()
}

/// Flight times of the ideal ball from height 1 at rest: sqrt(2), then
/// 2 sqrt(2) c^k, summing to sqrt(2) (1 + c) / (1 - c).
fn accumulation_time(c: f64) -> f64 {
    2f64.sqrt() * (1.0 + c) / (1.0 - c)
}

#[test]
fn ball_accumulation_time() {
    for c in [0.3, 0.5, 0.8] {
        let exec = simulate(&ball(c), "1", &[1.0, 0.0], &[], &SimOptions::default()).unwrap();
        assert_eq!(exec.verdict, Verdict::ZenoDetected, "c = {c}");
        let t = zeno_time(&exec).unwrap();
        let expect = accumulation_time(c);
        assert!((t - expect).abs() <= 0.01 * expect, "c = {c}: {t} vs {expect}");
        // impact times follow the same closed form
        let tau = exec.transition_times();
        let mut acc = 2f64.sqrt();
        for (k, t) in tau.iter().take(6).enumerate() {
            assert!((t - acc).abs() < 1e-8, "impact {k}: {t} vs {acc}");
            acc += 2.0 * 2f64.sqrt() * c.powi(k as i32 + 1);
        }
    }
}

#[test]
fn ball_impacts_are_exact() {
    let c = 0.5;
    let sys = ball(c);
    let exec = simulate::<f64>(&sys, "1", &[1.0, 0.0], &[], &SimOptions::default()).unwrap();
    assert!(exec.transitions.len() > 20);
    let reset = &sys.edges[0].reset;
    for tr in &exec.transitions {
        assert!(tr.pre[0].abs() <= 1e-10, "guard residual {}", tr.pre[0]);
        let image = reset.eval(&tr.pre);
        let err = image.iter().zip(&tr.post).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-10);
        let before = 0.5 * tr.pre[1] * tr.pre[1];
        let after = 0.5 * tr.post[1] * tr.post[1];
        assert!((after / before - c * c).abs() <= 1e-6 * c * c);
    }
    let tau = exec.transition_times();
    assert!(tau.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn dead_reset_stops_at_first_impact() {
    let exec = simulate(&ball(0.0), "1", &[1.0, 0.0], &[], &SimOptions::default()).unwrap();
    assert_eq!(exec.verdict, Verdict::ZenoDetected);
    let t = zeno_time(&exec).unwrap();
    assert!((t - 2f64.sqrt()).abs() < 1e-8, "{t}");
}

#[test]
fn growing_restitution_does_not_accumulate() {
    let opts = SimOptions {
        horizon: 60.0,
        ..Default::default()
    };
    let exec = simulate(&ball(1.1), "1", &[1.0, 0.0], &[], &opts).unwrap();
    assert_ne!(exec.verdict, Verdict::ZenoDetected);
    let gaps = exec.gaps();
    assert!(gaps.len() >= 3);
    assert!(gaps.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn simulation_is_deterministic() {
    let sys = example("example1").build(&[]).unwrap();
    let a = simulate(&sys, "1", &[1.0, 0.0], &[], &SimOptions::default()).unwrap();
    let b = simulate(&sys, "1", &[1.0, 0.0], &[], &SimOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn example1_is_zeno() {
    let sys = example("example1").build(&[]).unwrap();
    let exec = simulate(&sys, "1", &[1.0, 0.0], &[], &SimOptions::default()).unwrap();
    assert_eq!(exec.verdict, Verdict::ZenoDetected);
    assert!(exec.zeno_time.unwrap() > exec.transitions[0].time);
}

#[test]
fn f32_ball() {
    let sys = ball(0.5);
    let opts = SimOptions {
        rtol: 1e-6,
        atol: 1e-7,
        event_tol: 1e-5,
        zeno_gap_tol: 1e-2,
        zeno_window: 4,
        ..Default::default()
    };
    let exec = simulate::<f32>(&sys, "1", &[1.0, 0.0], &[], &opts).unwrap();
    assert_eq!(exec.verdict, Verdict::ZenoDetected);
    let t = zeno_time(&exec).unwrap() as f64;
    assert!((t - accumulation_time(0.5)).abs() < 0.01 * accumulation_time(0.5), "{t}");
}

#[test]
fn parameterized_simulation_needs_values() {
    let sys = example("example4").build(&[]).unwrap();
    assert!(simulate::<f64>(&sys, "1", &[1.0, 0.0], &[], &SimOptions::default()).is_err());
    let exec = simulate(&sys, "1", &[1.0, 0.0], &[("p".into(), 0.5)], &SimOptions::default()).unwrap();
    assert_eq!(exec.verdict, Verdict::ZenoDetected);
}
