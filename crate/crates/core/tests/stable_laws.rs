use levylab::rng::rng_from_seed;
use levylab::stable::{v_alpha, w_alpha, PosStable, SymStable};
use levylab::stats::{ks_critical, ks_two_sample};

#[test]
fn characteristic_function_on_grid() {
    let n = 1_000_000;
    let tol = 4.0 / (n as f64).sqrt();
    for k in 0..9 {
        let alpha = 0.3 + 0.2 * k as f64;
        let law = SymStable::new(alpha).unwrap();
        let mut rng = rng_from_seed(10 + k);
        let xs: Vec<f64> = (0..n).map(|_| law.draw(&mut rng)).collect();
        for t in [0.25, 0.5, 1.0, 2.0] {
            let emp = xs.iter().map(|x| (t * x).cos()).sum::<f64>() / n as f64;
            let exact = (-w_alpha(alpha) * f64::powf(t, alpha)).exp();
            assert!((emp - exact).abs() < tol, "alpha {alpha} t {t}: {emp} vs {exact}");
        }
    }
}

#[test]
fn stable_under_addition() {
    let n = 100_000;
    let crit = ks_critical(1e-3, n, n);
    for (k, alpha) in [0.5, 1.0, 1.7].into_iter().enumerate() {
        let law = SymStable::new(alpha).unwrap();
        let mut rng = rng_from_seed(30 + k as u64);
        let single: Vec<f64> = (0..n).map(|_| law.draw(&mut rng)).collect();
        let scale = 2f64.powf(1.0 / alpha);
        let sums: Vec<f64> = (0..n).map(|_| (law.draw(&mut rng) + law.draw(&mut rng)) / scale).collect();
        let d = ks_two_sample(&single, &sums);
        assert!(d < crit, "alpha {alpha}: KS {d} vs {crit}");
    }
}

#[test]
fn positive_stable_laplace_grid() {
    let n = 400_000;
    for (k, a) in [0.25, 0.5, 0.75].into_iter().enumerate() {
        let law = PosStable::new(a, 1.0).unwrap();
        let mut rng = rng_from_seed(50 + k as u64);
        let xs: Vec<f64> = (0..n).map(|_| law.draw(&mut rng)).collect();
        assert!(xs.iter().all(|&x| x > 0.0));
        for t in [0.5, 1.0, 2.0] {
            let vals: Vec<f64> = xs.iter().map(|x| (-t * x).exp()).collect();
            let est = levylab::stats::Estimate::from_samples(&vals);
            let exact = (-v_alpha(a).unwrap() * f64::powf(t, a)).exp();
            assert!((est.mean - exact).abs() < 4.0 * est.std_err, "a {a} t {t}: {est:?} vs {exact}");
        }
    }
}
