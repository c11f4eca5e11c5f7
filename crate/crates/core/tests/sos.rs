use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zenocert::poly::parse;
use zenocert::sdp::{verify_infeasibility_ray, Mat, SdpOptions};
use zenocert::sos::{check_sos, gram_polynomial, MonomialBasis, SosCheck, SosOutcome, SosProgram};
use zenocert::Polynomial;

fn vars(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

#[test]
fn random_gram_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let opts = SdpOptions::default();
    for k in 0..100 {
        let nv = rng.gen_range(1..=3);
        let names: Vec<String> = (0..nv).map(|i| format!("x{}", i + 1)).collect();
        let half = rng.gen_range(1..=if nv == 3 { 1 } else { 2 });
        let basis = MonomialBasis::new(&names, half);
        let n = basis.len();
        let g = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = g.matmul(&g.transpose());
        let p = gram_polynomial(&basis, &q);
        match check_sos(&p, &opts).unwrap() {
            SosCheck::Sos { basis, gram } => {
                let err = gram_polynomial(&basis, &gram).sub_poly(&p).max_abs_coeff();
                assert!(err <= 1e-7, "case {k}: coefficient error {err}");
            }
            other => panic!("case {k}: {other:?}"),
        }
    }
}

#[test]
fn motzkin_is_rejected_with_ray() {
    let v = vars(&["x1", "x2"]);
    let m = parse("x1^4*x2^2 + x1^2*x2^4 - 3*x1^2*x2^2 + 1", &v).unwrap();
    let mut prog = SosProgram::new(&v);
    let s = prog.new_sos_var("s", 6);
    prog.add_identity("gram", s.lin().sub(&prog.lift(&m).unwrap()).unwrap())
        .unwrap();
    let problem = prog.compile().unwrap();
    match check_sos(&m, &SdpOptions::default()).unwrap() {
        SosCheck::NotSos { ray: Some(ray) } => {
            assert!(verify_infeasibility_ray(&problem, &ray, 1e-8));
        }
        other => panic!("{other:?}"),
    }
}

/// Minimum over a grid, used as an independent bound for the negativity checks.
fn grid_min(p: &Polynomial) -> f64 {
    let mut best = f64::INFINITY;
    let steps = 400;
    for i in 0..=steps {
        for j in 0..=steps {
            let x = -3.0 + 6.0 * i as f64 / steps as f64;
            let y = -3.0 + 6.0 * j as f64 / steps as f64;
            let pt: Vec<f64> = [x, y][..p.nvars()].to_vec();
            best = best.min(p.eval(&pt));
        }
    }
    best
}

#[test]
fn shifted_below_minimum_is_not_sos() {
    let v = vars(&["x1", "x2"]);
    let opts = SdpOptions::default();
    for text in [
        "x1^2 + x2^2 + 1",
        "(x1 - 1)^2 + (x2 + 0.5)^2 + 0.25",
        "x1^4 + x2^4 + 2",
        "(x1*x2 - 1)^2 + x1^2 + 0.5",
    ] {
        let p = parse(text, &v).unwrap();
        let min = grid_min(&p);
        assert!(matches!(check_sos(&p, &opts).unwrap(), SosCheck::Sos { .. }), "{text}");
        let shifted = p.sub_poly(&Polynomial::constant(&v, min + 0.05));
        assert!(
            matches!(check_sos(&shifted, &opts).unwrap(), SosCheck::NotSos { ray: Some(_) }),
            "{text} minus {}",
            min + 0.05
        );
    }
}

#[test]
fn multipliers_sample_nonnegative_and_identities_hold() {
    // find V, s0, s1 with V - s0 - s1 * (1 - x^2 - y^2) = x^2 + y^2
    let v = vars(&["x", "y"]);
    let mut prog = SosProgram::new(&v);
    let big_v = prog.new_poly_var("V", 4);
    let s0 = prog.new_sos_var("s0", 4);
    let s1 = prog.new_sos_var("s1", 2);
    let ball = parse("1 - x^2 - y^2", &v).unwrap();
    let target = prog.lift(&parse("x^2 + y^2", &v).unwrap()).unwrap();
    let lhs = big_v
        .lin()
        .sub(&s0.lin())
        .unwrap()
        .sub(&s1.lin().mul_poly(&ball).unwrap())
        .unwrap()
        .sub(&target)
        .unwrap();
    prog.add_identity("id", lhs).unwrap();
    let SosOutcome::Feasible(sol) = prog.compile_and_solve(&SdpOptions::default()).unwrap() else {
        panic!("expected feasible");
    };
    assert!(sol.max_identity_residual() <= 1e-6);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for s in [&s0, &s1] {
        let p = sol.sos(s);
        for _ in 0..1000 {
            let pt = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            assert!(p.eval(&pt) >= -1e-8);
        }
    }
}
