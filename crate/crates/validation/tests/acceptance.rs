//! One check per acceptance criterion, each printing a `PASS` or `FAIL`
//! line. The process exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zenocert::hybrid::{simulate, zeno_time, HybridSystem, SimOptions, SystemFile, Verdict};
use zenocert::poly::parse;
use zenocert::sdp::{
    solve, verify_infeasibility_ray, LinearForm, Mat, SdpConstraint, SdpOptions, SdpProblem, SdpStatus,
};
use zenocert::sos::{check_sos, gram_polynomial, MonomialBasis, SosCheck, SosProgram};
use zenocert::zeno::{
    bisect, build_fp1, grid_points, post_verify, sweep, verify, Direction, Formulation, Outcome, RSearch,
    SynthesisConfig, Verification,
};

const IDENTITY_RESIDUAL: f64 = 1e-6;
const SAMPLE_MARGIN: f64 = 1e-6;

fn example(name: &str) -> SystemFile {
    let path = format!("{}/../cli/examples/{name}.json", env!("CARGO_MANIFEST_DIR"));
    SystemFile::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn ball(c: f64) -> HybridSystem {
    example("ball").build(&[("c".into(), c)]).unwrap()
}

static FAILED: AtomicBool = AtomicBool::new(false);

fn report(n: u32, title: &str, ok: bool, detail: String) {
    println!("criterion {n} ({title}): {} | {detail}", if ok { "PASS" } else { "FAIL" });
    if !ok {
        FAILED.store(true, Ordering::Relaxed);
    }
}

fn residual_ok(v: &Verification) -> bool {
    v.certificate
        .as_ref()
        .is_some_and(|c| c.multipliers.max_identity_residual <= IDENTITY_RESIDUAL)
}

fn criterion_1_example1_degree_6() {
    let mut config = SynthesisConfig::with_degree(6);
    config.samples = 10_000;
    config.cert_margin = SAMPLE_MARGIN;
    let system = example("example1").build(&[]).unwrap();
    let consts = example("example1").constant_values(&[]).unwrap();
    let start = Instant::now();
    let v = verify(&system, &config).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (violations, residual) = match &v.certificate {
        Some(cert) => {
            let again = post_verify(&system, cert, &config.sampling());
            (again.violations() + cert.sampling.violations(), cert.multipliers.max_identity_residual)
        }
        None => (usize::MAX, f64::NAN),
    };
    let ok = consts["c1"] == 0.5
        && consts["c2"] == 0.8
        && consts["c3"] == 0.001
        && v.outcome == Outcome::Certified
        && residual <= IDENTITY_RESIDUAL
        && violations == 0
        && secs <= 60.0;
    report(
        1,
        "example 1 at degree 6",
        ok,
        format!("{} in {secs:.1}s, residual {residual:.2e}, {violations} sampling violations", v.outcome),
    );
}

fn criterion_2_example4_bisection() {
    let config = SynthesisConfig::with_degree(4);
    let start = Instant::now();
    let res = bisect(&example("example4"), "C", &config, (0.5, 1.5), Direction::Maximize, 0.01).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ok = res.bound.is_some_and(|b| b >= 0.95) && secs <= 600.0;
    report(
        2,
        "example 4 maximal C",
        ok,
        format!("bound {:?} after {} probes in {secs:.1}s", res.bound, res.probes.len()),
    );
}

fn criterion_3_example5_degree_trend() {
    // degree 12 is skipped; the two-point form of the check applies
    let mut config = SynthesisConfig {
        r: RSearch::Grid(vec![0.99]),
        ..Default::default()
    };
    let file = example("example5");
    let mut bounds: Vec<Option<f64>> = Vec::new();
    let mut notes = Vec::new();
    for degree in [8, 10] {
        // the check is a conjunction: a degree-8 bound outside the range settles it
        if degree == 10 && !bounds[0].is_some_and(|b| (1.7..=2.6).contains(&b)) {
            notes.push("degree 10: not run, degree 8 already fails".into());
            bounds.push(None);
            continue;
        }
        config.degree = degree;
        let start = Instant::now();
        let res = bisect(&file, "C", &config, (1.0, 4.0), Direction::Minimize, 0.05).unwrap();
        notes.push(format!(
            "degree {degree}: bound {:?} ({:.0}s{})",
            res.bound,
            start.elapsed().as_secs_f64(),
            res.note.map(|n| format!(", {n}")).unwrap_or_default()
        ));
        bounds.push(res.bound);
    }
    let ok = match (bounds[0], bounds[1]) {
        (Some(b8), Some(b10)) => (1.7..=2.6).contains(&b8) && b8 > b10,
        _ => false,
    };
    report(3, "example 5 bound decreases with degree", ok, notes.join("; "));
}

fn criterion_4_examples_2_and_3_degree_8() {
    let config = SynthesisConfig::with_degree(8);
    let mut ok = true;
    let mut notes = Vec::new();
    for name in ["example2", "example3"] {
        let start = Instant::now();
        let v = verify(&example(name).build(&[]).unwrap(), &config).unwrap();
        let passed = v.outcome == Outcome::Certified && residual_ok(&v);
        ok &= passed;
        let last = v.attempts.last().map(|a| a.status.clone()).unwrap_or_default();
        notes.push(format!(
            "{name}: {} after {} attempts in {:.0}s (last status {last})",
            v.outcome,
            v.attempts.len(),
            start.elapsed().as_secs_f64()
        ));
    }
    report(4, "examples 2 and 3 at degree 8", ok, notes.join("; "));
}

fn criterion_5_simulated_accumulation_time() {
    let mut ok = true;
    let mut notes = Vec::new();
    for c in [0.3, 0.5, 0.8] {
        let exec = simulate(&ball(c), "1", &[1.0, 0.0], &[], &SimOptions::default()).unwrap();
        let expect = 2f64.sqrt() * (1.0 + c) / (1.0 - c);
        let t = zeno_time(&exec).unwrap_or(f64::NAN);
        let rel = (t - expect).abs() / expect;
        ok &= exec.verdict == Verdict::ZenoDetected && rel <= 0.01;
        notes.push(format!("c={c}: {t:.6} vs {expect:.6}"));
    }
    report(5, "ball accumulation time", ok, notes.join("; "));
}

fn criterion_6_energy_growth_control() {
    let system = ball(1.1);
    let mut ok = true;
    let mut notes = Vec::new();
    for degree in [2, 4, 6, 8] {
        let v = verify(&system, &SynthesisConfig::with_degree(degree)).unwrap();
        ok &= matches!(v.outcome, Outcome::NoCertificate | Outcome::Inconclusive);
        notes.push(format!("degree {degree}: {}", v.outcome));
    }
    let opts = SimOptions {
        horizon: 60.0,
        ..Default::default()
    };
    let exec = simulate(&system, "1", &[1.0, 0.0], &[], &opts).unwrap();
    let gaps = exec.gaps();
    // geometric shrinking would need every ratio below one
    let ratios: Vec<f64> = gaps.windows(2).map(|w| w[1] / w[0]).collect();
    let shrinking = ratios.iter().any(|&r| r < 1.0);
    ok &= exec.verdict != Verdict::ZenoDetected && ratios.len() >= 2 && !shrinking;
    notes.push(format!(
        "simulation {} with {} gaps, ratios in [{:.3}, {:.3}]",
        exec.verdict.as_str(),
        gaps.len(),
        ratios.iter().cloned().fold(f64::INFINITY, f64::min),
        ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    ));
    report(6, "restitution 1.1 is not certified", ok, notes.join("; "));
}

fn sos_round_trip() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let opts = SdpOptions::default();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let nv = rng.gen_range(1..=3);
        let names: Vec<String> = (0..nv).map(|i| format!("x{}", i + 1)).collect();
        let half = rng.gen_range(1..=if nv == 3 { 1 } else { 2 });
        let basis = MonomialBasis::new(&names, half);
        let n = basis.len();
        let g = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let p = gram_polynomial(&basis, &g.matmul(&g.transpose()));
        match check_sos(&p, &opts).unwrap() {
            SosCheck::Sos { basis, gram } => {
                worst = worst.max(gram_polynomial(&basis, &gram).sub_poly(&p).max_abs_coeff())
            }
            _ => worst = f64::INFINITY,
        }
    }
    (worst <= 1e-7, format!("Gram round trip worst error {worst:.1e}"))
}

fn motzkin() -> (bool, String) {
    let v: Vec<String> = vec!["x1".into(), "x2".into()];
    let m = parse("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1", &v).unwrap();
    let mut prog = SosProgram::new(&v);
    let s = prog.new_sos_var("s", 6);
    prog.add_identity("gram", s.lin().sub(&prog.lift(&m).unwrap()).unwrap())
        .unwrap();
    let problem = prog.compile().unwrap();
    let ok = match check_sos(&m, &SdpOptions::default()).unwrap() {
        SosCheck::NotSos { ray: Some(ray) } => verify_infeasibility_ray(&problem, &ray, 1e-8),
        _ => false,
    };
    (ok, format!("Motzkin ray verified: {ok}"))
}

/// Hand-sized problems plus compiled SOS programs.
fn regression_set() -> Vec<SdpProblem<f64>> {
    let con = |form, rhs| SdpConstraint { form, rhs };
    let mut set = vec![
        SdpProblem::new(
            vec![2],
            0,
            vec![
                con(LinearForm::new().entry(0, 0, 0, 1.0).entry(0, 1, 1, 1.0).entry(0, 0, 1, 1.0), 2.0),
                con(LinearForm::new().entry(0, 0, 0, 1.0).entry(0, 1, 1, -1.0), 0.0),
            ],
            LinearForm::new().entry(0, 0, 0, 1.0).entry(0, 1, 1, 1.0),
        )
        .unwrap(),
        SdpProblem::new(
            vec![1, 2],
            1,
            vec![
                con(LinearForm::new().entry(0, 0, 0, 1.0).free_coef(0, 1.0), 3.0),
                con(LinearForm::new().entry(1, 0, 0, 1.0).entry(1, 1, 1, 1.0), 1.0),
                con(LinearForm::new().free_coef(0, 1.0).entry(1, 0, 1, 1.0), 0.5),
            ],
            LinearForm::new().entry(0, 0, 0, 1.0).entry(1, 0, 0, 2.0).entry(1, 1, 1, 1.0),
        )
        .unwrap(),
    ];
    let v: Vec<String> = vec!["x1".into(), "x2".into()];
    for text in ["x1^4 + x2^4 + 1", "(x1 - x2)^2 + x1^2*x2^2", "x1^2 + 2*x1*x2 + 3*x2^2"] {
        let p = parse(text, &v).unwrap();
        let mut prog = SosProgram::new(&v);
        let s = prog.new_sos_var("s", p.degree());
        prog.add_identity("gram", s.lin().sub(&prog.lift(&p).unwrap()).unwrap())
            .unwrap();
        set.push(prog.compile().unwrap());
    }
    let mut config = SynthesisConfig::with_degree(4);
    config.r = RSearch::Grid(vec![0.99]);
    set.push(build_fp1(&ball(0.5), &config).unwrap().program.compile().unwrap());
    set
}

fn sdp_invariants() -> (bool, String) {
    let opts = SdpOptions::default();
    let mut ok = true;
    let mut solved = 0;
    for p in regression_set() {
        let a = solve(&p, &opts);
        let b = solve(&p, &opts);
        ok &= a.iterations == b.iterations && a.x == b.x && a.y == b.y && a.status == b.status;
        if a.status == SdpStatus::Optimal {
            solved += 1;
            let slack = opts.gap_tol * (1.0 + a.primal_objective.abs() + a.dual_objective.abs());
            ok &= a.primal_objective >= a.dual_objective - slack;
        }
    }
    ok &= solved >= 5;
    (ok, format!("weak duality and determinism on {solved} solved problems: {ok}"))
}

fn certified_residuals_and_agreement() -> (bool, String) {
    let mut ok = true;
    let mut certified = 0;
    let mut worst = 0.0f64;
    let mut config = SynthesisConfig::with_degree(4);
    for c in [0.1, 0.3, 0.5, 0.7, 0.9, 1.2] {
        let mut verdicts = Vec::new();
        for formulation in [Formulation::Nominal, Formulation::Parametric] {
            config.formulation = formulation;
            let v = verify(&ball(c), &config).unwrap();
            if let Some(cert) = &v.certificate {
                certified += 1;
                worst = worst.max(cert.multipliers.max_identity_residual);
            }
            verdicts.push(v.outcome);
        }
        ok &= verdicts[0] == verdicts[1];
    }
    let uncertain = example("example4").build(&[("C".into(), 0.5)]).unwrap();
    let v = verify(&uncertain, &SynthesisConfig::with_degree(4)).unwrap();
    if let Some(cert) = &v.certificate {
        certified += 1;
        worst = worst.max(cert.multipliers.max_identity_residual);
    }
    ok &= certified >= 11 && worst <= IDENTITY_RESIDUAL;
    (
        ok,
        format!("FP1/FP2 agreement and residuals: {certified} certified runs, worst residual {worst:.1e}"),
    )
}

fn criterion_7_property_suites() {
    let parts = [sos_round_trip(), motzkin(), sdp_invariants(), certified_residuals_and_agreement()];
    let ok = parts.iter().all(|p| p.0);
    let detail: Vec<String> = parts.into_iter().map(|p| p.1).collect();
    report(7, "property suites", ok, detail.join("; "));
}

fn criterion_8_example1_map() {
    let mut config = SynthesisConfig::with_degree(6);
    config.escalate = true;
    config.max_degree = 8;
    config.r = RSearch::Grid(vec![0.99]);
    let step = 0.1;
    let c2: Vec<f64> = (1..=12).map(|k| (k as f64 * step * 1e9).round() / 1e9).collect();
    let file = example("example1");
    let mut ok = true;
    let mut notes = Vec::new();
    for c3 in [0.0, 0.01] {
        let mut edges = Vec::new();
        for c1 in [0.1, 0.5, 0.9] {
            let points = grid_points(&[
                ("c1".into(), vec![c1]),
                ("c2".into(), c2.clone()),
                ("c3".into(), vec![c3]),
            ]);
            let res = sweep(&file, &config, &points);
            // largest c2 below which every grid point is certified
            let edge = res
                .rows
                .iter()
                .take_while(|r| r.outcome == Outcome::Certified)
                .last()
                .map(|r| r.values[1]);
            edges.push(edge.unwrap_or(0.0));
        }
        let spread = edges.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - edges.iter().cloned().fold(f64::INFINITY, f64::min);
        ok &= spread < step && edges.iter().all(|&e| e > 0.0);
        notes.push(format!("c3={c3}: c2 boundary {edges:?} for c1 = 0.1, 0.5, 0.9"));
    }
    report(8, "example 1 feasibility map", ok, notes.join("; "));
}

fn main() -> ExitCode {
    criterion_1_example1_degree_6();
    criterion_2_example4_bisection();
    criterion_3_example5_degree_trend();
    criterion_4_examples_2_and_3_degree_8();
    criterion_5_simulated_accumulation_time();
    criterion_6_energy_growth_control();
    criterion_7_property_suites();
    criterion_8_example1_map();
    if FAILED.load(Ordering::Relaxed) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
