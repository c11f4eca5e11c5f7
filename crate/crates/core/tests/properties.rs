use proptest::prelude::*;
use zenocert::hybrid::{simulate, SimOptions, SystemFile};
use zenocert::poly::{monomials_up_to, parse, Monomial};
use zenocert::zeno::RSearch;
use zenocert::{PolyVector, Polynomial};

fn vars() -> Vec<String> {
    vec!["x1".into(), "x2".into(), "x3".into()]
}

/// Random polynomial of degree <= 4 in three variables with small integer
/// exponents and coefficients in [-2, 2].
fn poly() -> impl Strategy<Value = Polynomial> {
    prop::collection::vec(((0u32..=2, 0u32..=2, 0u32..=2), -2.0f64..2.0), 0..6).prop_map(|terms| {
        let terms = terms.into_iter().filter(|((a, b, c), _)| a + b + c <= 4).map(|((a, b, c), k)| {
            (Monomial::from_exponents(&[a, b, c]), k)
        });
        Polynomial::from_terms(&vars(), terms)
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5f64..1.5, 3)
}

fn close(a: &Polynomial, b: &Polynomial, tol: f64) -> bool {
    a.sub_poly(b).max_abs_coeff() <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ring_axioms(a in poly(), b in poly(), c in poly()) {
        prop_assert!(close(&a.add_poly(&b), &b.add_poly(&a), 1e-12));
        prop_assert!(close(&a.mul_poly(&b), &b.mul_poly(&a), 1e-12));
        prop_assert!(close(&a.add_poly(&b).add_poly(&c), &a.add_poly(&b.add_poly(&c)), 1e-12));
        prop_assert!(close(&a.mul_poly(&b).mul_poly(&c), &a.mul_poly(&b.mul_poly(&c)), 1e-12));
        prop_assert!(close(
            &a.mul_poly(&b.add_poly(&c)),
            &a.mul_poly(&b).add_poly(&a.mul_poly(&c)),
            1e-12
        ));
    }

    #[test]
    fn compose_commutes_with_evaluation(p in poly(), s in prop::collection::vec(poly(), 3), x in point()) {
        // keep the composed degree moderate
        let s: Vec<Polynomial> = s.into_iter().map(|q| if q.degree() > 2 { Polynomial::zero(&vars()) } else { q }).collect();
        let subst = PolyVector::new(s);
        let composed = p.compose(&subst).unwrap().eval(&x);
        let direct = p.eval(&subst.eval(&x));
        prop_assert!((composed - direct).abs() <= 1e-9 * (1.0 + direct.abs()), "{composed} vs {direct}");
    }

    #[test]
    fn gradient_matches_central_differences(p in poly(), x in point()) {
        let g = p.gradient().eval(&x);
        let h = 1e-5;
        for i in 0..3 {
            let mut up = x.clone();
            let mut down = x.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (p.eval(&up) - p.eval(&down)) / (2.0 * h);
            let scale = 1.0 + g[i].abs().max(fd.abs());
            prop_assert!((fd - g[i]).abs() <= 1e-6 * scale, "d/dx{}: {} vs {fd}", i + 1, g[i]);
        }
    }

    #[test]
    fn parse_print_round_trip(p in poly()) {
        let again: Polynomial = parse(&p.to_string(), &vars()).unwrap();
        prop_assert_eq!(again.term_map(), p.term_map());
    }

    #[test]
    fn canonical_terms(a in poly(), b in poly()) {
        let prod = a.mul_poly(&b);
        for (m, k) in prod.terms() {
            prop_assert!(k.abs() >= 1e-14);
            prop_assert!(m.pairs().all(|(_, e)| e > 0));
            prop_assert_eq!(m.degree(), m.pairs().map(|(_, e)| e).sum::<u32>());
        }
    }

    #[test]
    fn basis_size_is_binomial(n in 1usize..=4, d in 0u32..=5) {
        let binom = (1..=n as u64).fold(1u64, |acc, k| acc * (d as u64 + k) / k);
        prop_assert_eq!(monomials_up_to(n, d).len(), binom as usize);
    }

    #[test]
    fn every_r_combination_contracts(values in prop::collection::vec(0.05f64..=1.0, 1..5), modes in 1usize..5) {
        if let Ok(combos) = RSearch::Grid(values).combinations(modes) {
            for r in combos {
                prop_assert_eq!(r.len(), modes);
                prop_assert!(r.iter().any(|&v| v < 1.0));
                prop_assert!(r.iter().all(|&v| v > 0.0 && v <= 1.0));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn impacts_scale_kinetic_energy(c in 0.1f64..0.9, h in 0.2f64..3.0) {
        let path = format!("{}/../cli/examples/ball.json", env!("CARGO_MANIFEST_DIR"));
        let file = SystemFile::from_json(&std::fs::read_to_string(path).unwrap()).unwrap();
        let sys = file.build(&[("c".into(), c)]).unwrap();
        let exec = simulate(&sys, "1", &[h, 0.0], &[], &SimOptions::default()).unwrap();
        prop_assert!(exec.transitions.len() > 5);
        for tr in exec.transitions.iter().take(20) {
            let before = tr.pre[1] * tr.pre[1];
            let after = tr.post[1] * tr.post[1];
            prop_assert!((after / before - c * c).abs() <= 1e-6 * c * c);
            prop_assert!(tr.pre[0].abs() <= 1e-10);
        }
    }
}
