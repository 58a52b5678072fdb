use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twostep::schemes::{order_condition_residuals, SchemeCoefficients, SchemeFamily};
use twostep::stability::{
    a_stable_closed_form, a_stable_sampled, characteristic_coeffs, cohn_schur_contained,
    companion_matrix, max_root_modulus, quadratic_roots, spectral_radius, stability_region,
    CharacteristicCoeffs, Window,
};

fn family_member(family: SchemeFamily, alpha: f64) -> SchemeCoefficients {
    SchemeCoefficients::new(family, alpha).unwrap()
}

/// Max distance after the better of the two pairings.
fn pairing_distance(x: [Complex64; 2], y: [Complex64; 2]) -> f64 {
    let straight = (x[0] - y[0]).norm().max((x[1] - y[1]).norm());
    let crossed = (x[0] - y[1]).norm().max((x[1] - y[0]).norm());
    straight.min(crossed)
}

#[test]
fn order_conditions_hold_for_1000_alphas() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let alpha = rng.gen_range(-2.0..3.0);
        for family in [SchemeFamily::GeneralizedBdf2, SchemeFamily::GeneralizedAm2] {
            let r = order_condition_residuals(&family_member(family, alpha));
            assert!(
                r.iter().all(|v| v.abs() <= 1e-13),
                "{family:?} {alpha}: {r:?}"
            );
        }
    }
}

#[test]
fn rho_roots_at_origin_independent_of_alpha() {
    let zero = Complex64::new(0.0, 0.0);
    for alpha in [-1.0, 0.2, 0.75, 1.9] {
        let mut r = quadratic_roots(&characteristic_coeffs(
            &SchemeCoefficients::bdf2(alpha).unwrap(),
            zero,
        ))
        .unwrap();
        r.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((r[0] - 1.0 / 3.0).norm() < 1e-15 && (r[1] - 1.0).norm() < 1e-15);

        let r = quadratic_roots(&characteristic_coeffs(
            &SchemeCoefficients::am2(alpha).unwrap(),
            zero,
        ))
        .unwrap();
        assert!(pairing_distance(r, [zero, Complex64::new(1.0, 0.0)]) < 1e-15);
    }
}

#[test]
fn companion_eigenvalues_match_characteristic_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let family = if rng.gen_bool(0.5) {
            SchemeFamily::GeneralizedBdf2
        } else {
            SchemeFamily::GeneralizedAm2
        };
        let s = family_member(family, rng.gen_range(0.05..3.0));
        let z = Complex64::new(-rng.gen_range(1e-3..50.0), rng.gen_range(-50.0..50.0));
        let eig = companion_matrix(&s, z).unwrap().eigenvalues();
        let roots = quadratic_roots(&characteristic_coeffs(&s, z)).unwrap();
        let scale = 1.0 + roots[0].norm().max(roots[1].norm());
        assert!(
            pairing_distance(eig, roots) <= 1e-10 * scale,
            "{family:?} z={z}"
        );
    }
}

#[test]
fn cohn_schur_agrees_with_direct_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rand_c =
        |rng: &mut ChaCha8Rng| Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    let mut inside = 0;
    let mut checked = 0;
    while checked < 10_000 {
        let q = CharacteristicCoeffs::new(rand_c(&mut rng), rand_c(&mut rng), rand_c(&mut rng));
        if q.a.norm() < 1e-3 {
            continue;
        }
        let m = max_root_modulus(&q);
        // the two tests disagree only through rounding right at the circle
        if (m - 1.0).abs() < 1e-9 {
            continue;
        }
        checked += 1;
        let contained = cohn_schur_contained(&q).unwrap();
        assert_eq!(contained, m <= 1.0 + 1e-10, "{q:?} max modulus {m}");
        inside += contained as usize;
    }
    assert!(inside > 100, "too few contained samples: {inside}");
}

#[test]
fn closed_form_and_sampled_agree_on_alpha_grid() {
    for k in 0..100 {
        let alpha = 2.0 * k as f64 / 99.0;
        for family in [SchemeFamily::GeneralizedBdf2, SchemeFamily::GeneralizedAm2] {
            let threshold = family.a_stability_threshold().unwrap();
            if (alpha - threshold).abs() < 1e-6 {
                continue;
            }
            let closed = a_stable_closed_form(family, alpha).unwrap();
            let sampled = a_stable_sampled(&family_member(family, alpha), 20_001).unwrap();
            assert_eq!(closed, sampled.stable, "{family:?} alpha={alpha}");
            assert_eq!(sampled.witness.is_some(), !sampled.stable);
        }
    }
}

#[test]
fn strict_interior_for_damped_z() {
    // log-spaced |Re z| in [0.01, 1e3] and Im z in [−1e3, 1e3]
    let n = 200;
    let re: Vec<f64> = (0..n)
        .map(|i| -(10f64).powf(-2.0 + 5.0 * i as f64 / (n - 1) as f64))
        .collect();
    let im: Vec<f64> = (0..n)
        .map(|j| {
            let u = -1.0 + 2.0 * j as f64 / (n - 1) as f64;
            u.signum() * (10f64.powf(3.0 * u.abs()) - 1.0)
        })
        .collect();
    for (family, alpha) in [
        (SchemeFamily::GeneralizedBdf2, 0.76),
        (SchemeFamily::GeneralizedBdf2, 1.2),
        (SchemeFamily::GeneralizedAm2, 0.51),
        (SchemeFamily::GeneralizedAm2, 0.9),
    ] {
        let s = family_member(family, alpha);
        for &x in &re {
            for &y in &im {
                let z = Complex64::new(x, y);
                if z.norm() > 1e3 {
                    continue;
                }
                let r = spectral_radius(&companion_matrix(&s, z).unwrap());
                assert!(r < 1.0, "{family:?} alpha={alpha} z={z}: {r}");
            }
        }
    }
}

#[test]
fn region_area_report() {
    let window = Window::square(5.0);
    let mut areas = Vec::new();
    for alpha in [0.75, 0.9, 1.0, 1.2] {
        let r =
            stability_region(&SchemeCoefficients::bdf2(alpha).unwrap(), window, 101, 101).unwrap();
        areas.push((alpha, r.stable_area()));
    }
    let monotone = areas.windows(2).all(|w| w[1].1 >= w[0].1);
    println!("bdf2 stable area over [-5,5]^2: {areas:?} (non-decreasing: {monotone})");
}

proptest! {
    #[test]
    fn roots_satisfy_polynomial(
        ar in -3.0..3.0f64, ai in -3.0..3.0f64,
        br in -3.0..3.0f64, bi in -3.0..3.0f64,
        cr in -3.0..3.0f64, ci in -3.0..3.0f64,
    ) {
        let q = CharacteristicCoeffs::new(Complex64::new(ar, ai), Complex64::new(br, bi), Complex64::new(cr, ci));
        prop_assume!(q.a.norm() > 1e-2);
        let roots = quadratic_roots(&q).unwrap();
        let scale = q.a.norm() + q.b.norm() + q.c.norm();
        for w in roots {
            let mag = 1.0 + w.norm() * w.norm();
            prop_assert!(q.eval(w).norm() <= 1e-12 * scale * mag);
        }
        let sum = roots[0] + roots[1];
        prop_assert!((sum + q.b / q.a).norm() <= 1e-10 * (1.0 + sum.norm()));
    }

    #[test]
    fn a_stable_members_contain_roots_on_the_axis(alpha in 0.75..3.0f64, t in -1e4..1e4f64) {
        let s = SchemeCoefficients::bdf2(alpha).unwrap();
        let q = characteristic_coeffs(&s, Complex64::new(0.0, t));
        prop_assert!(cohn_schur_contained(&q).unwrap());
        let s = SchemeCoefficients::am2(alpha - 0.25).unwrap();
        let q = characteristic_coeffs(&s, Complex64::new(0.0, t));
        prop_assert!(cohn_schur_contained(&q).unwrap());
    }

    #[test]
    fn companion_reproduces_recurrence(alpha in 0.0..2.0f64, x in -5.0..0.0f64, y in -5.0..5.0f64,
                                       u0 in -1.0..1.0f64, u1 in -1.0..1.0f64) {
        let s = SchemeCoefficients::bdf2(alpha).unwrap();
        let z = Complex64::new(x, y);
        let m = companion_matrix(&s, z).unwrap();
        let v = [Complex64::new(u0, 0.0), Complex64::new(u1, 0.0)];
        let next = m.apply(v);
        prop_assert_eq!(next[0], v[1]);
        let q = characteristic_coeffs(&s, z);
        let r = q.a * next[1] + q.b * v[1] + q.c * v[0];
        prop_assert!(r.norm() <= 1e-12 * (1.0 + q.a.norm() + q.b.norm() + q.c.norm()));
    }
}
