use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;

use levylab::cone::{in_cone, ConeValue};
use levylab::limitlaw::{interval_mass_with, phi, psi, LimitLawSolver};
use levylab::rng::rng_from_seed;

fn random_point<R: Rng>(rng: &mut R) -> (f64, Complex64, ConeValue) {
    let alpha: f64 = rng.random_range(0.1..1.95);
    let h = alpha / 2.0;
    let z = Complex64::from_polar(rng.random_range(0.2..60.0), rng.random_range(0.01..PI - 0.01));
    let x = Complex64::from_polar(rng.random_range(0.0..3.0), rng.random_range(-1.0..1.0) * h * FRAC_PI_2);
    (alpha, z, ConeValue::new(x, h).unwrap())
}

#[test]
fn transforms_preserve_cones() {
    let mut rng = rng_from_seed(1);
    for _ in 0..1000 {
        let (alpha, z, x) = random_point(&mut rng);
        let p = phi(alpha, z, x).unwrap();
        let q = psi(alpha, z, x).unwrap();
        assert!(in_cone(p.value, alpha / 2.0, 1e-9), "{alpha} {z} {x:?}");
        assert!(in_cone(q.value, 1.0, 1e-9));
    }
}

#[test]
fn lipschitz_constant_decays_like_z_to_minus_alpha() {
    let alpha = 1.0;
    let h = alpha / 2.0;
    let mut rng = rng_from_seed(2);
    let draw = |rng: &mut levylab::rng::LabRng| {
        let x = Complex64::from_polar(rng.random_range(0.1..2.0), rng.random_range(-0.9..0.9) * h * FRAC_PI_2);
        ConeValue::new(x, h).unwrap()
    };
    let ratio = |z: Complex64, a: ConeValue, b: ConeValue| {
        let d = (phi(alpha, z, a).unwrap().value - phi(alpha, z, b).unwrap().value).norm();
        d / (z.norm().powf(-alpha) * (a.value - b.value).norm())
    };
    let z = Complex64::from_polar(50.0, 1.0);
    // fit once on a calibration batch, then check fresh pairs
    let c = (0..50).map(|_| ratio(z, draw(&mut rng), draw(&mut rng))).fold(0.0, f64::max);
    for _ in 0..200 {
        let r = ratio(z, draw(&mut rng), draw(&mut rng));
        assert!(r <= 2.0 * c, "{r} vs fitted {c}");
    }
}

#[test]
fn fixed_point_is_unique_beyond_threshold() {
    let s = LimitLawSolver::with_defaults(1.2).unwrap();
    let e0 = s.contraction_threshold().unwrap();
    let mut rng = rng_from_seed(3);
    for _ in 0..5 {
        let z = Complex64::from_polar(e0 * rng.random_range(1.0..4.0), rng.random_range(0.05..PI - 0.05));
        let mut ys = vec![];
        for _ in 0..2 {
            let start = Complex64::from_polar(rng.random_range(0.01..3.0), rng.random_range(-0.9..0.9) * 0.6 * FRAC_PI_2);
            ys.push(s.solve_from(z, start).unwrap().y.value);
        }
        assert!((ys[0] - ys[1]).norm() < 1e-8, "{z}: {ys:?}");
    }
}

#[test]
fn density_positive_and_even() {
    for alpha in [0.5, 1.0, 1.7] {
        let s = LimitLawSolver::with_defaults(alpha).unwrap();
        for k in 0..30 {
            let e = 0.1 + 0.5 * k as f64;
            let f = s.density_on_axis(e).unwrap();
            assert!(f >= 0.0);
            assert!((f - s.density_on_axis(-e).unwrap()).abs() < 1e-8);
        }
    }
}

#[test]
fn interval_masses() {
    let s = LimitLawSolver::with_defaults(1.5).unwrap();
    let all = interval_mass_with(&s, -50.0, 50.0, 1e-2).unwrap();
    // the tails beyond ±50 carry about 50^{-α}
    assert!((all.mass - 1.0).abs() <= all.error_bound + 50f64.powf(-1.5), "{all:?}");
    let half = interval_mass_with(&s, 0.0, 50.0, 1e-2).unwrap();
    assert!((half.mass - 0.5).abs() <= half.error_bound + 50f64.powf(-1.5), "{half:?}");

    let s = LimitLawSolver::with_defaults(1.2).unwrap();
    let refined: Vec<_> = [0.05, 0.02, 0.01].iter().map(|&eta| interval_mass_with(&s, 1.0, 1.5, eta).unwrap()).collect();
    for w in refined.windows(2) {
        assert!((w[0].mass - w[1].mass).abs() <= w[0].error_bound + w[1].error_bound);
        assert!(w[1].error_bound < w[0].error_bound);
    }
}
