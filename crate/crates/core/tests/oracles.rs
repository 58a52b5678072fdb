use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twostep::energy::skew_dominance_constant;
use twostep::problems::{build, exact_solution, BenchmarkId};

const BENCHMARKS: [BenchmarkId; 3] = [
    BenchmarkId::DampedDriven,
    BenchmarkId::DampedDrivenSkew,
    BenchmarkId::DampedDrivenSkew2,
];

#[test]
fn exact_solutions_satisfy_the_ode() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let d = 1e-6;
    for id in BENCHMARKS {
        let p = build(id).unwrap();
        assert_eq!(p.y0, exact_solution(id, 0.0).unwrap());
        for _ in 0..1000 {
            let t = rng.gen_range(d..100.0);
            let dy = (exact_solution(id, t + d).unwrap() - exact_solution(id, t - d).unwrap())
                / (2.0 * d);
            let y = exact_solution(id, t).unwrap();
            let residual = dy + p.operator() * &y - p.forcing.eval(t);
            assert!(residual.norm() <= 1e-6, "{id:?} t={t}: {}", residual.norm());
        }
    }
}

/// Classical RK4 on `u' = g(t) − λu` in complex form.
fn rk4(lambda: Complex64, h: f64, steps: usize) -> Complex64 {
    let g = |t: f64| Complex64::new(t.sin() + (2f64.sqrt() * t).cos(), 0.0);
    let f = |t: f64, u: Complex64| g(t) - lambda * u;
    let mut u = Complex64::new(1.0, 0.0);
    for n in 0..steps {
        let t = n as f64 * h;
        let k1 = f(t, u);
        let k2 = f(t + h / 2.0, u + h / 2.0 * k1);
        let k3 = f(t + h / 2.0, u + h / 2.0 * k2);
        let k4 = f(t + h, u + h * k3);
        u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    u
}

#[test]
fn rk4_reference_matches_exact_solution() {
    for (id, kappa) in [
        (BenchmarkId::DampedDriven, 0.0),
        (BenchmarkId::DampedDrivenSkew, 1.0),
        (BenchmarkId::DampedDrivenSkew2, 4.0),
    ] {
        let u = rk4(Complex64::new(10.0, kappa), 1e-6, 1_000_000);
        let y = exact_solution(id, 1.0).unwrap();
        assert!((y[0] - u.re).abs() <= 1e-10, "{id:?}: {} vs {}", y[0], u.re);
        if y.len() == 2 {
            assert!((y[1] - u.im).abs() <= 1e-10, "{id:?}: {} vs {}", y[1], u.im);
        }
    }
}

#[test]
fn built_problems_are_well_formed() {
    for id in BENCHMARKS {
        let p = build(id).unwrap();
        assert_eq!(p.l0, 10.0);
        assert!((&p.l - p.l.transpose()).norm() == 0.0);
        assert!((&p.ls + p.ls.transpose()).norm() == 0.0);
    }
    let c1 = |id| skew_dominance_constant(&build(id).unwrap());
    assert_eq!(c1(BenchmarkId::DampedDriven), f64::INFINITY);
    assert!((c1(BenchmarkId::DampedDrivenSkew) - 10.0).abs() < 1e-12);
    assert!((c1(BenchmarkId::DampedDrivenSkew2) - 0.625).abs() < 1e-12);
}
