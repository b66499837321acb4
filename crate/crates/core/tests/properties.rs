use proptest::prelude::*;

use toric_balanced::polytope::fixtures::{cp1, cp1xcp1, cp2, f1};
use toric_balanced::polytope::rational::to_f64;
use toric_balanced::polytope::{lattice_points, Polytope};
use toric_balanced::quantization::{
    hilb, log_bergman_density, make_grid, mass_pass, moment_and_metric, GridSpec, HermitianWeights,
};
use toric_balanced::solver::gauge_compare;
use toric_balanced::weights::{
    f_character, g_derivatives, g_functional, g_hessian_min_eigenvalue, section_mass, weight_vector, SectionMass,
    TorusElement,
};

fn fixture(i: usize) -> Polytope {
    [cp1(), cp2(), f1(), cp1xcp1()][i].clone()
}

fn torus(m: usize, scale: f64) -> impl Strategy<Value = TorusElement> {
    prop::collection::vec(-scale..scale, m).prop_map(|v| TorusElement::new(v).unwrap())
}

/// `(polytope, k, weights)` with weights in `[0.05, 1]`.
fn masses() -> impl Strategy<Value = (Polytope, u32, Vec<f64>)> {
    (0usize..4, 1u32..6).prop_flat_map(|(i, k)| {
        let p = fixture(i);
        let n = lattice_points(&p, k).unwrap().len();
        (Just(p), Just(k), prop::collection::vec(0.05f64..1.0, n))
    })
}

fn section(p: &Polytope, k: u32, d: Vec<f64>) -> SectionMass {
    SectionMass::new(lattice_points(p, k).unwrap(), d).unwrap()
}

fn random_form() -> impl Strategy<Value = HermitianWeights> {
    (0usize..4, 1u32..4, any::<u64>())
        .prop_map(|(i, k, seed)| HermitianWeights::random(lattice_points(&fixture(i), k).unwrap(), seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn g_hessian_is_positive_definite((p, k, d) in masses(), v in torus(2, 3.0)) {
        let m = p.dim();
        let v = TorusElement::new(v.as_slice()[..m].to_vec()).unwrap();
        let d = section(&p, k, d);
        prop_assert!(g_hessian_min_eigenvalue(&d, &v) > 0.0);
    }

    #[test]
    fn g_gradient_matches_differences((p, k, d) in masses(), v in torus(2, 1.0)) {
        let m = p.dim();
        let v = v.as_slice()[..m].to_vec();
        let d = section(&p, k, d);
        let (g, grad, _) = g_derivatives(&d, &TorusElement::new(v.clone()).unwrap());
        prop_assert!((g - g_functional(&d, &TorusElement::new(v.clone()).unwrap())).abs() < 1e-12 * g);
        for j in 0..m {
            let h = 1e-6;
            let mut a = v.clone();
            let mut b = v.clone();
            a[j] += h;
            b[j] -= h;
            let fd = (g_functional(&d, &TorusElement::new(a).unwrap()) - g_functional(&d, &TorusElement::new(b).unwrap())) / (2.0 * h);
            prop_assert!((fd - grad[j]).abs() < 1e-6 * (1.0 + g));
        }
    }

    #[test]
    fn section_mass_is_normalized((p, k, d) in masses()) {
        let d = section(&p, k, d);
        prop_assert!((d.values().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(d.values().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn weight_vector_is_centered(i in 0usize..4, k in 1u32..7, v in torus(2, 5.0)) {
        let p = fixture(i);
        let v = TorusElement::new(v.as_slice()[..p.dim()].to_vec()).unwrap();
        let pts = lattice_points(&p, k).unwrap();
        let lambda = weight_vector(&v, &pts);
        let scale = lambda.iter().map(|x| x.abs()).fold(1.0, f64::max);
        prop_assert!(lambda.iter().sum::<f64>().abs() < 1e-12 * scale * lambda.len() as f64);
    }

    #[test]
    fn character_is_linear((p, k, d) in masses(), v in torus(2, 1.0), a in torus(2, 2.0), b in torus(2, 2.0), c in -3.0f64..3.0) {
        let m = p.dim();
        let cut = |t: &TorusElement| TorusElement::new(t.as_slice()[..m].to_vec()).unwrap();
        let (v, a, b) = (cut(&v), cut(&a), cut(&b));
        let d = section(&p, k, d);
        let sum = TorusElement::new(a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x + y).collect()).unwrap();
        let lhs = f_character(&d, &v, &sum);
        let rhs = f_character(&d, &v, &a) + f_character(&d, &v, &b);
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
        prop_assert!((f_character(&d, &v, &a.scaled(c)) - c * f_character(&d, &v, &a)).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn gauge_compare_ignores_affine_changes(h in random_form(), delta in torus(2, 2.0), c in -5.0f64..5.0) {
        let shifted = h.gauge_shift(&delta.as_slice()[..h.dim()], c);
        prop_assert!(gauge_compare(&h, &shifted).unwrap() < 1e-12);
        prop_assert!(gauge_compare(&h, &h).unwrap() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn moment_lies_in_the_polytope(h in random_form(), u in prop::collection::vec(-8.0f64..8.0, 2)) {
        let p = fixture_of(&h);
        let u = &u[..h.dim()];
        let (mo, me) = moment_and_metric(&h, u).unwrap();
        let k = h.k() as f64;
        for f in p.facets() {
            let lhs: f64 = f.normal.iter().zip(&mo).map(|(n, x)| *n as f64 * x / k).sum();
            prop_assert!(lhs + to_f64(&f.offset) >= -1e-12);
        }
        let m = h.dim();
        let min_eig = toric_balanced::quantization::kernel::min_eigenvalue(m, &me);
        prop_assert!(min_eig > 0.0);
        prop_assert!(log_bergman_density(&h, u).unwrap().is_finite());
    }
}

fn fixture_of(h: &HermitianWeights) -> Polytope {
    match h.points().polytope_name() {
        "cp1" => cp1(),
        "cp2" => cp2(),
        "f1" => f1(),
        _ => cp1xcp1(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn quadrature_invariants(h in random_form()) {
        let g = make_grid(&h, &GridSpec::default()).unwrap();
        let pass = mass_pass(&h, &g).unwrap();
        prop_assert!((pass.total - g.target_volume()).abs() <= g.rel_tol() * g.target_volume());
        let out = hilb(&h, &g).unwrap();
        let tr: f64 = out.logw().iter().zip(h.logw()).map(|(a, b)| (a - b).exp()).sum();
        prop_assert!((tr / h.len() as f64 - 1.0).abs() < 1e-8, "trace {}", tr);
        let d = section_mass(&h, &g).unwrap();
        prop_assert!((d.values().iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn hilb_is_scale_equivariant(h in random_form(), c in 0.1f64..10.0) {
        let hc = h.scaled(c);
        let a = hilb(&h, &make_grid(&h, &GridSpec::default()).unwrap()).unwrap();
        let b = hilb(&hc, &make_grid(&hc, &GridSpec::default()).unwrap()).unwrap();
        for (x, y) in a.logw().iter().zip(b.logw()) {
            prop_assert!((y - x - c.ln()).abs() < 1e-8);
        }
    }
}
