use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64;
use rand::Rng;

use levylab::cone::{bilinear, in_cone, unit};
use levylab::ensemble::{build_matrix, frac_moment_of, resolvent_diag, spectrum};
use levylab::rde::{
    rde_frac_moment, run_pool, run_pool_from, vanishing_imag_diagnostic, GammaGrid, PoolConfig, ResolventPool,
};
use levylab::rng::rng_from_seed;
use levylab::stats::{ks_critical, ks_two_sample};

fn config(alpha: f64, z: Complex64, size: usize, generations: usize, seed: u64) -> PoolConfig {
    PoolConfig { size, generations, seed, ..PoolConfig::new(alpha, z) }
}

#[test]
fn pool_is_stationary_after_burn_in() {
    let z = Complex64::new(2.0, 0.3);
    let burn = run_pool(&config(0.5, z, 20_000, 30, 1)).unwrap();
    let later = run_pool_from(burn.pool.clone(), &config(0.5, z, 20_000, 5, 2)).unwrap();
    let crit = 2.0 * ks_critical(0.05, 20_000, 20_000);
    let re = |p: &ResolventPool| p.samples.iter().map(|x| x.re).collect::<Vec<_>>();
    let im = |p: &ResolventPool| p.samples.iter().map(|x| x.im).collect::<Vec<_>>();
    assert!(ks_two_sample(&re(&burn.pool), &re(&later.pool)) < crit);
    assert!(ks_two_sample(&im(&burn.pool), &im(&later.pool)) < crit);
    assert!(later.pool.samples.iter().all(|x| x.im >= 0.0));
}

#[test]
fn fractional_moment_stabilizes_at_large_energy() {
    let alpha = 0.5;
    let cfg = PoolConfig { trunc: 100, ..config(alpha, Complex64::new(10.0, 0.05), 100_000, 50, 3) };
    let run = run_pool(&cfg).unwrap();
    let late: Vec<f64> = run.history.iter().rev().take(10).map(|g| g.mean_abs_frac).collect();
    let (lo, hi) = late.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    assert!((hi - lo) / lo < 0.01, "{late:?}");
    // the free value |z|^{-α/2} sets the scale
    let scale = 10f64.powf(-alpha / 2.0);
    assert!(hi < 2.0 * scale, "{hi} vs {scale}");
}

#[test]
fn pool_gamma_lies_in_cone_and_bilinear_bounds_hold() {
    let run = run_pool(&config(0.5, Complex64::new(3.0, 0.2), 20_000, 20, 4)).unwrap();
    let grid = GammaGrid::from_pool(&run.pool, 33).unwrap();
    assert!(grid.in_cone(1e-12));
    let mut rng = rng_from_seed(5);
    for &r in run.pool.samples.iter().take(2000) {
        let h = -Complex64::i() * r;
        let u = unit(rng.random_range(0.0..std::f64::consts::FRAC_PI_2));
        let iu = bilinear(Complex64::i(), u).norm();
        let hu = bilinear(h, u).norm();
        assert!(iu * h.norm() <= hu * (1.0 + 1e-12) && hu <= 2f64.sqrt() * h.norm() * (1.0 + 1e-12));
        assert!(in_cone(h, 1.0, 1e-12));
    }
    // e^{iπ/4} picks out (√2 Im R)^κ
    let kappa = 0.25;
    let g = rde_frac_moment(&run.pool, unit(FRAC_PI_4), kappa).unwrap().mean;
    let direct = run.pool.samples.iter().map(|x| (2f64.sqrt() * x.im).powf(kappa)).sum::<f64>()
        / run.pool.len() as f64
        * statrs::function::gamma::gamma(1.0 - kappa);
    assert!((g.re - direct).abs() < 1e-10 && g.im.abs() < 1e-10);
}

#[test]
fn finite_n_approaches_pool() {
    let (alpha, z) = (0.5, Complex64::new(1.0, 0.5));
    let run = run_pool(&config(alpha, z, 100_000, 40, 6)).unwrap();
    let u = unit(0.3);
    let target = rde_frac_moment(&run.pool, u, alpha / 2.0).unwrap().mean;
    // same total number of diagonal entries at each size
    let gaps: Vec<f64> = [(500, 16), (1000, 8), (2000, 4)]
        .iter()
        .map(|&(n, seeds)| {
            let v: Vec<Complex64> = (0..seeds)
                .map(|s| {
                    let m = build_matrix(n, alpha, 7000 + 100 * n as u64 + s).unwrap();
                    frac_moment_of(&resolvent_diag(&spectrum(&m).unwrap(), z).unwrap(), u, alpha / 2.0).unwrap()
                })
                .collect();
            (v.iter().sum::<Complex64>() / seeds as f64 - target).norm()
        })
        .collect();
    println!("gaps {gaps:?}");
    assert!(gaps[2] < gaps[0], "{gaps:?}");
}

#[test]
fn large_energy_imaginary_part_vanishes_on_axis() {
    let alpha = 0.5;
    // at E = 10 the ratio is still 0.13 at this η and falls like η^{0.24}
    let edge = run_pool(&config(alpha, Complex64::new(20.0, 0.0), 50_000, 40, 8)).unwrap();
    let bulk = run_pool(&config(alpha, Complex64::new(0.3, 0.0), 50_000, 40, 9)).unwrap();
    let e = edge.pool.imag_moment(alpha / 2.0).mean;
    let b = bulk.pool.imag_moment(alpha / 2.0).mean;
    println!("edge {e} bulk {b}");
    assert!(e < 0.1 * b, "{e} vs {b}");
}

#[test]
fn vanishing_diagnostic_directions() {
    let alpha = 0.5;
    let etas = [0.2, 0.1, 0.05, 0.02];
    let base = config(alpha, Complex64::new(10.0, 0.2), 30_000, 30, 10);
    let edge = vanishing_imag_diagnostic(alpha, 10.0, &etas, &base).unwrap();
    let bulk = vanishing_imag_diagnostic(alpha, 0.2, &etas, &base).unwrap();
    println!("edge slope {} bulk slope {}", edge.slope, bulk.slope);
    assert!(edge.slope > 0.0);
    // contrast: the bulk loses far less over the same η range
    let drop = |t: &levylab::rde::VanishingTable| 1.0 - t.rows.last().unwrap().mean_im_frac / t.rows[0].mean_im_frac;
    assert!(drop(&bulk) < 0.5 * drop(&edge), "bulk drop {} vs edge drop {}", drop(&bulk), drop(&edge));
    for t in [&edge, &bulk] {
        assert!(t.rows.iter().all(|r| r.mean_im_frac >= 0.0 && r.mean_im_frac <= r.bound));
    }
}
