use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sojourn_core::catalog::{self, SystemSpec};
use sojourn_core::dynamics::{
    is_critical, nabla_h, poisson_bracket, t_f_observable, HamiltonianSystem, Orbit,
    DEFAULT_CRITICAL_EPS,
};
use sojourn_core::locfn::{
    dot, geometric_radii, grad_rf, norm_sq, pair_integral, LocalisationFunction, PairOptions,
};
use sojourn_core::sojourn::{converge, sojourn_difference, SojournMode, SojournOptions};

fn sys(name: &str) -> Box<dyn HamiltonianSystem> {
    catalog::build(&SystemSpec::new(name)).unwrap()
}

fn sample(s: &dyn HamiltonianSystem, seed: u64) -> Vec<f64> {
    s.sample_point(&mut ChaCha8Rng::seed_from_u64(seed))
}

fn vec2() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, 2)
}

fn nonzero2() -> impl Strategy<Value = Vec<f64>> {
    vec2().prop_filter("away from zero", |v| norm_sq(v) > 0.05)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pair_integral_is_odd_in_x(x in vec2(), y in nonzero2(), r in 0.5..50.0f64) {
        for f in [
            LocalisationFunction::radial(2, 2.0, 1.0).unwrap(),
            LocalisationFunction::product(2, 2.0, 1.0).unwrap(),
            LocalisationFunction::characteristic_ball(2).unwrap(),
        ] {
            let a = pair_integral(&f, &x, &y, r, PairOptions::default()).unwrap().value;
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            let b = pair_integral(&f, &neg, &y, r, PairOptions::default()).unwrap().value;
            prop_assert_eq!(a, -b);
        }
    }

    #[test]
    fn radial_gradient_is_exact(x in nonzero2(), rho in 1.5..6.0f64) {
        let f = LocalisationFunction::radial(2, rho, 1.0).unwrap();
        let g = grad_rf(&f, &x).unwrap();
        let n2 = norm_sq(&x);
        prop_assert_eq!(g, vec![-x[0] / n2, -x[1] / n2]);
    }

    #[test]
    fn bracket_is_antisymmetric(seed in any::<u64>(), which in 0usize..4) {
        let s = sys(["kinetic", "friedrichs", "pendulum", "central_force"][which]);
        let z = sample(s.as_ref(), seed);
        let phi = |w: &[f64]| s.phi(w)[0];
        let h = |w: &[f64]| s.hamiltonian(w);
        let ab = poisson_bracket(s.as_ref(), &phi, &h, &z).unwrap();
        let ba = poisson_bracket(s.as_ref(), &h, &phi, &z).unwrap();
        prop_assert!((ab + ba).abs() < 1e-9 * (1.0 + ab.abs()), "{} vs {}", ab, ba);
    }

    #[test]
    fn radial_time_observable_closed_form(seed in any::<u64>(), which in 0usize..3) {
        let s = sys(["kinetic", "stark", "friedrichs"][which]);
        let z = sample(s.as_ref(), seed);
        let f = LocalisationFunction::radial(s.phi_dim(), 3.0, 1.0).unwrap();
        let y = nabla_h(s.as_ref(), &z).unwrap();
        let t = t_f_observable(s.as_ref(), &f, &z, DEFAULT_CRITICAL_EPS).unwrap();
        let closed = dot(&s.phi(&z), &y) / norm_sq(&y);
        // Same formula up to the order of floating-point operations.
        prop_assert!((t - closed).abs() <= 4.0 * f64::EPSILON * closed.abs().max(1e-300), "{} vs {}", t, closed);
    }

    #[test]
    fn critical_orbits_keep_phi(q in vec2(), t in -20.0..20.0f64) {
        for name in ["kinetic", "friedrichs"] {
            let s = sys(name);
            let z = [q[0], q[1], 0.0, 0.0];
            if !s.in_domain(&z) || !is_critical(s.as_ref(), &z, 1e-10).unwrap() {
                continue;
            }
            let orbit = Orbit::new(s.as_ref(), &z).unwrap();
            prop_assert_eq!(s.phi(&orbit.state_at(t).unwrap()), s.phi(&z));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sojourn_equals_flow_free_integral(seed in any::<u64>(), which in 0usize..3, r in 2.0..200.0f64) {
        let s = sys(["kinetic", "stark", "friedrichs"][which]);
        let z = sample(s.as_ref(), seed);
        // A slow component makes the product tail bound astronomically long.
        prop_assume!(nabla_h(s.as_ref(), &z).unwrap().iter().all(|v| v.abs() > 0.3));
        let f = LocalisationFunction::product(2, 3.0, 1.0).unwrap();
        let opts = SojournOptions::default();
        let a = sojourn_difference(s.as_ref(), &f, &z, r, opts).unwrap();
        let b = pair_integral(
            &f,
            &s.phi(&z),
            &nabla_h(s.as_ref(), &z).unwrap(),
            r,
            PairOptions { quad_tol: opts.quad_tol, tail_tol: opts.tail_tol },
        )
        .unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-7, "{} vs {}", a.value, b.value);
    }

    #[test]
    fn radial_limits_do_not_depend_on_f(seed in any::<u64>(), which in 0usize..2) {
        let s = sys(["kinetic", "sphere_covering"][which]);
        let z = sample(s.as_ref(), seed);
        let d = s.phi_dim();
        let radii = geometric_radii(10.0, 2.0, 5);
        let limit = |f: LocalisationFunction| {
            converge(s.as_ref(), &f, &z, &radii, SojournMode::Continuous, SojournOptions::default())
                .unwrap()
                .limit
        };
        let a = limit(LocalisationFunction::radial(d, 2.0, 1.0).unwrap());
        let b = limit(LocalisationFunction::radial(d, 5.0, 0.5).unwrap());
        prop_assert!((a - b).abs() < 1e-5, "{} vs {}", a, b);
    }

    #[test]
    fn limits_shift_with_the_flow(seed in any::<u64>(), shift in -8.0..8.0f64) {
        let s = sys("friedrichs");
        let z = sample(s.as_ref(), seed);
        let moved = Orbit::new(s.as_ref(), &z).unwrap().state_at(shift).unwrap();
        let f = LocalisationFunction::product(2, 2.0, 1.0).unwrap();
        let radii = geometric_radii(10.0, 2.0, 6);
        let limit = |m: &[f64]| {
            converge(s.as_ref(), &f, m, &radii, SojournMode::Continuous, SojournOptions::default())
                .unwrap()
                .limit
        };
        let gap = limit(&moved) - limit(&z);
        prop_assert!((gap - shift).abs() < 1e-3, "gap {} vs shift {}", gap, shift);
    }
}
