use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use multidiv::diver::{div_recursive, div_strong, weak_div_residual, VolumeStructure};
use multidiv::fields::{ChartDomain, ScalarField, VectorField};
use multidiv::quad::{Bump, IntegrationDomain, QuadratureSpec};
use multidiv::sampling::{random_form, random_multivector, random_points, FieldKind};
use multidiv::surface::{ElementarySurface, FlowEngine, StraighteningMap, TransversalSystem, Tube};
use multidiv::Expression;

fn gaussian(d: &ChartDomain) -> VolumeStructure {
    let n = d.dimension();
    let r2: Vec<String> = (0..n).map(|i| format!("x{i}^2")).collect();
    VolumeStructure::new(ScalarField::parse(&format!("exp(-({})/2)", r2.join(" + ")), d).unwrap(), 4).unwrap()
}

fn gaussian_circle() -> Tube {
    let ambient = ChartDomain::cube(2, -3.0, 3.0).unwrap();
    let chart = ChartDomain::new(vec![-PI, -1.0], vec![PI, 1.0]).unwrap();
    let map = StraighteningMap::parse(
        &["exp(x1)*cos(x0)", "exp(x1)*sin(x0)"],
        &["atan2(x1, x0)", "log(x0^2 + x1^2)/2"],
        1,
        chart,
    )
    .unwrap();
    let surface = ElementarySurface::new(map.clone(), ChartDomain::new(vec![-PI], vec![PI]).unwrap()).unwrap();
    let alpha = TransversalSystem::associated_form(&map, &Expression::one(), &ambient).unwrap();
    let system = TransversalSystem::new(vec![VectorField::parse(&["x0", "x1"], &ambient).unwrap()], alpha, 0.5).unwrap();
    let rho = ScalarField::parse("exp(-(x0^2 + x1^2)/2)/(2*pi)", &ambient).unwrap();
    Tube::new(surface, system, VolumeStructure::new(rho, 5).unwrap(), FlowEngine::default(), 4).unwrap()
}

fn arc(a: f64, b: f64) -> IntegrationDomain {
    IntegrationDomain::Box {
        lower: vec![a],
        upper: vec![b],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn strong_and_recursive_divergence_agree(
        (n, k) in (1usize..=4).prop_flat_map(|n| (Just(n), 1..=n)),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = ChartDomain::cube(n, -1.0, 1.0).unwrap();
        let vs = gaussian(&d);
        let z = random_multivector(&mut rng, &d, k, 2, FieldKind::Polynomial);
        let a = div_strong(&z, &vs).unwrap();
        let b = div_recursive(&z, &vs).unwrap();
        for p in random_points(&mut rng, &d, 8) {
            let (x, y) = (a.eval(&p).unwrap(), b.eval(&p).unwrap());
            prop_assert!(x.sub(&y).unwrap().norm() <= 1e-10 * (1.0 + x.norm()));
        }
    }

    #[test]
    fn weak_identity_holds_in_the_plane(k in 1usize..=2, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = ChartDomain::cube(2, -2.0, 2.0).unwrap();
        let vs = gaussian(&d);
        let z = random_multivector(&mut rng, &d, k, 1, FieldKind::Polynomial);
        let w = div_strong(&z, &vs).unwrap();
        let omega = random_form(&mut rng, &d, k - 1, FieldKind::Polynomial);
        let test = Bump::new(vec![0.2, -0.1], 1.5, &d).unwrap().localize(&omega);
        let r = weak_div_residual(&z, &w, &test, &vs, &QuadratureSpec::gauss(24)).unwrap();
        prop_assert!(r.residual <= 1e-6 * (1.0 + r.flux.value.abs()), "{r:?}");
    }

    #[test]
    fn flows_of_commuting_fields_form_a_group(
        t in proptest::collection::vec(-0.3f64..0.3, 2),
        s in proptest::collection::vec(-0.3f64..0.3, 2),
        x in proptest::collection::vec(0.3f64..1.0, 2),
    ) {
        let d = ChartDomain::cube(2, -4.0, 4.0).unwrap();
        let ys = [
            VectorField::parse(&["x0", "x1"], &d).unwrap(),
            VectorField::parse(&["-x1", "x0"], &d).unwrap(),
        ];
        let engine = FlowEngine::default();
        prop_assert!(engine.semigroup_residual(&ys, &t, &s, &x).unwrap() < 1e-11);
        let back: Vec<f64> = t.iter().map(|v| -v).collect();
        let there = engine.flow(&ys, &t, &x).unwrap();
        let home = engine.flow(&ys, &back, &there).unwrap();
        prop_assert!((home[0] - x[0]).abs() < 1e-11 && (home[1] - x[1]).abs() < 1e-11);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn surface_measure_is_additive(a in -3.0f64..-0.5, c in -0.4f64..0.4, b in 0.5f64..3.0, r in 0.02f64..0.2) {
        let tube = gaussian_circle();
        let q = QuadratureSpec::gauss(16);
        let whole = tube.tube_measure(&arc(a, b), r, &q).unwrap().value;
        let parts = tube.tube_measure(&arc(a, c), r, &q).unwrap().value + tube.tube_measure(&arc(c, b), r, &q).unwrap().value;
        prop_assert!((whole - parts).abs() < 1e-12);
        let one = |_: &multidiv::surface::TubePoint| Ok(1.0);
        let direct = tube.surface_integral(&one, &arc(a, b), &q).unwrap().value;
        let expected = (-0.5f64).exp() / (2.0 * PI) * (b - a);
        prop_assert!((direct - expected).abs() < 1e-13);
    }
}

#[test]
fn thin_tubes_scale_with_the_ball() {
    let tube = gaussian_circle();
    let q = QuadratureSpec::gauss(16);
    let region = tube.surface().inner_region();
    let ratios: Vec<f64> = [0.1, 0.01, 0.001]
        .iter()
        .map(|&r| tube.tube_measure(&region, r, &q).unwrap().value / (2.0 * r))
        .collect();
    let sigma = (-0.5f64).exp();
    for (i, v) in ratios.iter().enumerate() {
        assert!((v - sigma).abs() < 0.1f64.powi(i as i32 + 1), "{ratios:?}");
    }
}
