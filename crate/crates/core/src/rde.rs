//! Population dynamics for `R₀(z) = −(z + Σ_k ξ_k R_k(z))^{-1}`, the
//! fractional-moment map `γ_z(u)`, the real-axis `(a, b)` system, and the
//! discrete `G_z` operator.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::{gamma, ln_gamma};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use crate::cone::{bilinear, check_u, in_cone, unit};
use crate::ensemble::frac_prefactor;
use crate::error::{check_alpha, LabError, Result};
use crate::quad::{integrate, integrate_semi_infinite, QuadOptions};
use crate::rng::{derive_seed, rng_from_seed, tag};
use crate::stable::PosStable;
use crate::stats::{log_log_slope, ComplexEstimate, Estimate};

/// Points `ξ_k = Γ_k^{-2/α}` of the Poisson process, largest first.
#[derive(Debug, Clone, Serialize)]
pub struct PoissonWeights {
    pub weights: Vec<f64>,
    pub alpha: f64,
    /// `Σ_{k>K} E ξ_k`; infinite when `K + 1 ≤ 2/α`.
    pub tail_mean: f64,
}

/// `Σ_{k>K} Γ(k − 2/α)/Γ(k)`.
pub fn poisson_tail_mean(alpha: f64, k: usize) -> f64 {
    let p = 2.0 / alpha;
    if (k as f64 + 1.0) <= p {
        return f64::INFINITY;
    }
    let exact = 20_000;
    let mut sum = 0.0;
    for j in (k + 1)..=(k + exact) {
        let jf = j as f64;
        sum += (ln_gamma(jf - p) - ln_gamma(jf)).exp();
    }
    // Γ(j−p)/Γ(j) ~ j^{−p}; integral remainder from the midpoint rule
    let m = (k + exact) as f64 + 0.5;
    sum + m.powf(1.0 - p) / (p - 1.0)
}

fn draw_weights<R: Rng + ?Sized>(alpha: f64, k: usize, rng: &mut R, out: &mut Vec<f64>) {
    out.clear();
    let p = -2.0 / alpha;
    let mut arrival = 0.0f64;
    for _ in 0..k {
        let e: f64 = Exp1.sample(rng);
        arrival += e;
        out.push(arrival.powf(p));
    }
}

pub fn sample_poisson_weights<R: Rng + ?Sized>(alpha: f64, k: usize, rng: &mut R) -> Result<PoissonWeights> {
    check_alpha(alpha)?;
    if k == 0 {
        return Err(LabError::param("need at least one Poisson point"));
    }
    let mut weights = Vec::with_capacity(k);
    draw_weights(alpha, k, rng, &mut weights);
    Ok(PoissonWeights { weights, alpha, tail_mean: poisson_tail_mean(alpha, k) })
}

/// Empirical law of `R₀(z)` as a pool of samples.
#[derive(Debug, Clone, Serialize)]
pub struct ResolventPool {
    pub samples: Vec<Complex64>,
    pub z: Complex64,
    pub alpha: f64,
    pub generation: usize,
}

impl ResolventPool {
    /// Pool of `size` copies of `init`.
    pub fn constant(alpha: f64, z: Complex64, size: usize, init: Complex64) -> Result<Self> {
        check_alpha(alpha)?;
        if size == 0 {
            return Err(LabError::Usage("empty pool".into()));
        }
        if z.im < 0.0 {
            return Err(LabError::domain(format!("need Im z >= 0, got {z}")));
        }
        Ok(ResolventPool { samples: vec![init; size], z, alpha, generation: 0 })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Same samples, new spectral parameter (for warm starts).
    pub fn retarget(&self, z: Complex64) -> Self {
        ResolventPool { z, generation: 0, ..self.clone() }
    }

    pub fn mean(&self) -> Complex64 {
        self.samples.iter().sum::<Complex64>() / self.len() as f64
    }

    /// `E |R|^κ` with standard error.
    pub fn abs_moment(&self, kappa: f64) -> Estimate {
        let v: Vec<f64> = self.samples.iter().map(|r| r.norm().powf(kappa)).collect();
        Estimate::from_samples(&v)
    }

    /// `E (Im R)^κ` with standard error.
    pub fn imag_moment(&self, kappa: f64) -> Estimate {
        let v: Vec<f64> = self.samples.iter().map(|r| r.im.max(0.0).powf(kappa)).collect();
        Estimate::from_samples(&v)
    }
}

const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy)]
pub struct StepOptions {
    pub trunc: usize,
    /// Replace `Σ_{k>K} ξ_k R_k` by `(Σ_{k>K} E ξ_k) · mean(R)`.
    pub tail_correction: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions { trunc: 200, tail_correction: true }
    }
}

/// One generation; returns the new pool and the number of resampled entries.
///
/// Work is split in fixed chunks with seeds derived from `seed`, so the
/// result does not depend on the number of worker threads.
pub fn step_with_seed(pool: &ResolventPool, opts: StepOptions, seed: u64) -> Result<(ResolventPool, usize)> {
    if pool.is_empty() {
        return Err(LabError::Usage("empty pool".into()));
    }
    let n = pool.len();
    let z = pool.z;
    let alpha = pool.alpha;
    let k = opts.trunc;
    let tail = if opts.tail_correction && k > 0 {
        let t = poisson_tail_mean(alpha, k);
        if t.is_finite() {
            t * pool.mean()
        } else {
            return Err(LabError::param(format!("truncation {k} too small for alpha {alpha}")));
        }
    } else {
        Complex64::new(0.0, 0.0)
    };
    let old = &pool.samples;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let resampled: usize = out
        .par_chunks_mut(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut rng = rng_from_seed(derive_seed(seed, &[c as u64]));
            let mut w = Vec::with_capacity(k);
            let mut redo = 0usize;
            for slot in chunk.iter_mut() {
                loop {
                    draw_weights(alpha, k, &mut rng, &mut w);
                    let mut s = z + tail;
                    for &xi in &w {
                        s += old[rng.random_range(0..n)] * xi;
                    }
                    if s.norm() > 1e-14 {
                        *slot = -1.0 / s;
                        break;
                    }
                    redo += 1;
                    if redo > 1000 {
                        *slot = Complex64::new(f64::NAN, f64::NAN);
                        break;
                    }
                }
            }
            redo
        })
        .sum();
    if out.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
        return Err(LabError::numerical(format!("population update at z = {z} produced non-finite samples")));
    }
    if resampled > 0 {
        log::debug!("generation {}: resampled {resampled} near-singular entries", pool.generation + 1);
    }
    Ok((ResolventPool { samples: out, z, alpha, generation: pool.generation + 1 }, resampled))
}

/// One generation driven by `rng` (a single `u64` is drawn as chunk seed).
pub fn population_dynamics_step<R: Rng + ?Sized>(pool: &ResolventPool, k: usize, rng: &mut R) -> Result<ResolventPool> {
    let seed: u64 = rng.random();
    Ok(step_with_seed(pool, StepOptions { trunc: k, tail_correction: true }, seed)?.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct PoolConfig {
    pub alpha: f64,
    pub z: Complex64,
    pub size: usize,
    pub trunc: usize,
    pub generations: usize,
    pub seed: u64,
    pub tail_correction: bool,
}

impl PoolConfig {
    pub fn new(alpha: f64, z: Complex64) -> Self {
        PoolConfig { alpha, z, size: 100_000, trunc: 200, generations: 50, seed: 0, tail_correction: true }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub mean_abs_frac: f64,
    pub mean_im_frac: f64,
    pub mean_im_frac_se: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PoolRun {
    #[serde(skip)]
    pub pool: ResolventPool,
    pub history: Vec<GenerationStats>,
    pub tail_mean: f64,
    /// `tail_mean < 10⁻³ |z|`.
    pub tail_small: bool,
    pub resampled: usize,
}

impl PoolRun {
    /// Mean of `E (Im R)^{α/2}` over the last `k` generations.
    pub fn late_im_frac(&self, k: usize) -> f64 {
        let k = k.min(self.history.len()).max(1);
        let tail = &self.history[self.history.len() - k..];
        tail.iter().map(|g| g.mean_im_frac).sum::<f64>() / k as f64
    }
}

/// Imaginary part used for runs requested on the real axis.
pub const REAL_AXIS_ETA: f64 = 1e-3;

/// Run population dynamics from a given pool. A real `z` is moved to
/// `z + i·REAL_AXIS_ETA`.
pub fn run_pool_from(mut start: ResolventPool, cfg: &PoolConfig) -> Result<PoolRun> {
    if start.z.im < 0.0 {
        return Err(LabError::domain("need Im z >= 0"));
    }
    if start.z.im == 0.0 {
        log::info!("z = {} is real; running at Im z = {REAL_AXIS_ETA}", start.z);
        start.z.im = REAL_AXIS_ETA;
    }
    let opts = StepOptions { trunc: cfg.trunc, tail_correction: cfg.tail_correction };
    let h = cfg.alpha / 2.0;
    let mut pool = start;
    let mut history = Vec::with_capacity(cfg.generations);
    let mut resampled = 0;
    for g in 0..cfg.generations {
        let seed = derive_seed(cfg.seed, &[tag("generation"), g as u64]);
        let (next, r) = step_with_seed(&pool, opts, seed)?;
        pool = next;
        resampled += r;
        let im = pool.imag_moment(h);
        history.push(GenerationStats {
            generation: pool.generation,
            mean_abs_frac: pool.abs_moment(h).mean,
            mean_im_frac: im.mean,
            mean_im_frac_se: im.std_err,
        });
    }
    let tail_mean = if cfg.trunc > 0 { poisson_tail_mean(cfg.alpha, cfg.trunc) } else { 0.0 };
    let tail_small = tail_mean < 1e-3 * pool.z.norm();
    if !tail_small {
        log::warn!("Poisson tail mean {tail_mean:.3e} is not small against |z|; relying on the mean-field correction");
    }
    Ok(PoolRun { pool, history, tail_mean, tail_small, resampled })
}

/// Run population dynamics from the constant pool `{i}`.
pub fn run_pool(cfg: &PoolConfig) -> Result<PoolRun> {
    let start = ResolventPool::constant(cfg.alpha, cfg.z, cfg.size, Complex64::i())?;
    run_pool_from(start, cfg)
}

/// `Γ(1−κ) · mean ((−iR).u)^κ` over the pool, with standard errors.
pub fn rde_frac_moment(pool: &ResolventPool, u: Complex64, kappa: f64) -> Result<ComplexEstimate> {
    if pool.is_empty() {
        return Err(LabError::Usage("fractional moment of an empty pool".into()));
    }
    frac_moment_estimate(&pool.samples, u, kappa)
}

/// Fractional moment of any sample of resolvent values, with standard errors.
pub fn frac_moment_estimate(r: &[Complex64], u: Complex64, kappa: f64) -> Result<ComplexEstimate> {
    let u = crate::cone::quarter_circle(u)?;
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(LabError::param(format!("kappa must lie in (0,1], got {kappa}")));
    }
    let pre = frac_prefactor(kappa);
    let v: Vec<Complex64> = r.iter().map(|&x| bilinear(-Complex64::i() * x, u).powf(kappa) * pre).collect();
    Ok(ComplexEstimate::from_samples(&v))
}

#[derive(Debug, Clone, Serialize)]
pub struct VanishingRow {
    pub eta: f64,
    pub mean_abs_frac: f64,
    pub mean_im_frac: f64,
    pub std_err: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VanishingTable {
    pub alpha: f64,
    pub e: f64,
    pub rows: Vec<VanishingRow>,
    /// Slope of `log E(Im R)^{α/2}` against `log η`.
    pub slope: f64,
    pub generations: usize,
    pub tail_mean: f64,
    pub tail_small: bool,
    pub resampled: usize,
}

/// `E (Im R₀(E + iη))^{α/2}` along a decreasing `η` list. Each level is
/// warm-started from the previous pool and averaged over its last 10
/// generations.
pub fn vanishing_imag_diagnostic(alpha: f64, e: f64, etas: &[f64], base: &PoolConfig) -> Result<VanishingTable> {
    check_alpha(alpha)?;
    if etas.is_empty() || etas.windows(2).any(|w| w[1] >= w[0]) || etas.iter().any(|&x| !(x > 0.0)) {
        return Err(LabError::param("eta list must be positive and strictly decreasing"));
    }
    let h = alpha / 2.0;
    let mut rows = Vec::with_capacity(etas.len());
    let mut pool: Option<ResolventPool> = None;
    let (mut tail_mean, mut tail_small, mut resampled) = (0.0, true, 0);
    for (i, &eta) in etas.iter().enumerate() {
        let z = Complex64::new(e, eta);
        let cfg = PoolConfig { alpha, z, seed: derive_seed(base.seed, &[tag("eta"), i as u64]), ..base.clone() };
        let start = match &pool {
            Some(p) => p.retarget(z),
            None => ResolventPool::constant(alpha, z, cfg.size, Complex64::i())?,
        };
        let run = run_pool_from(start, &cfg)?;
        let late: Vec<&GenerationStats> = run.history.iter().rev().take(10).collect();
        let mean = late.iter().map(|g| g.mean_im_frac).sum::<f64>() / late.len() as f64;
        let abs = late.iter().map(|g| g.mean_abs_frac).sum::<f64>() / late.len() as f64;
        let se = late.iter().map(|g| g.mean_im_frac_se).sum::<f64>() / late.len() as f64;
        rows.push(VanishingRow { eta, mean_abs_frac: abs, mean_im_frac: mean, std_err: se, bound: eta.powf(-h) });
        tail_mean = run.tail_mean;
        tail_small &= run.tail_small;
        resampled += run.resampled;
        pool = Some(run.pool);
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.eta).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_im_frac.max(f64::MIN_POSITIVE)).collect();
    let slope = if rows.len() >= 2 { log_log_slope(&xs, &ys) } else { f64::NAN };
    Ok(VanishingTable { alpha, e, rows, slope, generations: base.generations, tail_mean, tail_small, resampled })
}

/// Real-axis solution `R = −(E + a^{2/α} S − b^{2/α} S′)^{-1}`.
#[derive(Debug, Clone, Serialize)]
pub struct AbSolution {
    pub alpha: f64,
    pub e: f64,
    pub a: f64,
    pub b: f64,
    /// `a − F_a(a, b)` on an independent sample.
    pub residual_a: f64,
    pub residual_b: f64,
    pub se_a: f64,
    pub se_b: f64,
    pub iterations: usize,
    pub mc_size: usize,
    pub seed: u64,
}

impl AbSolution {
    /// Draw `count` samples of the real-axis law.
    pub fn sample_law(&self, count: usize, seed: u64) -> Result<Vec<f64>> {
        let (s1, s2) = ab_stable_pairs(self.alpha, count, seed)?;
        let p = 2.0 / self.alpha;
        Ok(s1
            .iter()
            .zip(&s2)
            .map(|(&s, &t)| -1.0 / (self.e + self.a.powf(p) * s - self.b.powf(p) * t))
            .collect())
    }

    pub fn within_errors(&self, k: f64) -> bool {
        self.residual_a.abs() <= k * self.se_a && self.residual_b.abs() <= k * self.se_b
    }
}

fn ab_stable_pairs(alpha: f64, count: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let h = alpha / 2.0;
    let law = PosStable::with_laplace_exponent(h, gamma(1.0 - h))?;
    let mut rng = rng_from_seed(seed);
    let s1 = (0..count).map(|_| law.draw(&mut rng)).collect();
    let s2 = (0..count).map(|_| law.draw(&mut rng)).collect();
    Ok((s1, s2))
}

fn ab_map(alpha: f64, e: f64, a: f64, b: f64, s1: &[f64], s2: &[f64]) -> (Estimate, Estimate) {
    let p = 2.0 / alpha;
    let h = alpha / 2.0;
    let (ap, bp) = (a.powf(p), b.powf(p));
    let mut neg = Vec::with_capacity(s1.len());
    let mut pos = Vec::with_capacity(s1.len());
    for (&s, &t) in s1.iter().zip(s2) {
        let x = 1.0 / (e + ap * s - bp * t);
        neg.push((-x).max(0.0).powf(h));
        pos.push(x.max(0.0).powf(h));
    }
    (Estimate::from_samples(&neg), Estimate::from_samples(&pos))
}

/// Damped fixed-point iteration on common random numbers, checked on an
/// independent sample of the same size.
pub fn solve_real_axis_ab(alpha: f64, e: f64, mc_size: usize, seed: u64) -> Result<AbSolution> {
    check_alpha(alpha)?;
    if alpha >= 2.0 / 3.0 {
        return Err(LabError::OutOfRegime(format!("real-axis system needs alpha < 2/3, got {alpha}")));
    }
    if e == 0.0 || mc_size < 100 {
        return Err(LabError::param("need E != 0 and at least 100 Monte Carlo pairs"));
    }
    let (s1, s2) = ab_stable_pairs(alpha, mc_size, derive_seed(seed, &[tag("ab-fit")]))?;
    let h = alpha / 2.0;
    let start = e.abs().powf(-h);
    let (mut a, mut b) = if e > 0.0 { (0.1 * start, start) } else { (start, 0.1 * start) };
    let resid = |a: f64, b: f64| {
        let (fa, fb) = ab_map(alpha, e, a, b, &s1, &s2);
        (fa.mean - a, fb.mean - b, (fa.std_err, fb.std_err))
    };
    // a few damped sweeps, then Newton with a difference Jacobian
    for _ in 0..20 {
        let (ra, rb, _) = resid(a, b);
        a = (a + 0.5 * ra).max(0.0);
        b = (b + 0.5 * rb).max(0.0);
    }
    let finish = |a: f64, b: f64, iterations: usize| -> Result<AbSolution> {
        let (s1c, s2c) = ab_stable_pairs(alpha, mc_size, derive_seed(seed, &[tag("ab-check")]))?;
        let (ca, cb) = ab_map(alpha, e, a, b, &s1c, &s2c);
        Ok(AbSolution {
            alpha,
            e,
            a,
            b,
            residual_a: a - ca.mean,
            residual_b: b - cb.mean,
            se_a: ca.std_err,
            se_b: cb.std_err,
            iterations,
            mc_size,
            seed,
        })
    };
    let max_iter = 200;
    let mut last = f64::INFINITY;
    let mut last_noise = f64::INFINITY;
    for it in 0..max_iter {
        let (ra, rb, (se_a, se_b)) = resid(a, b);
        let norm = ra.hypot(rb);
        last = norm;
        last_noise = (ra / se_a).abs().max((rb / se_b).abs());
        // relative to the Monte Carlo noise, per equation
        let noise = last_noise;
        if noise <= 1e-4 {
            return finish(a, b, it + 21);
        }
        let d = 1e-6 * (a + b);
        let (ra1, rb1, _) = resid(a + d, b);
        let (ra2, rb2, _) = resid(a, b + d);
        let (j11, j21) = ((ra1 - ra) / d, (rb1 - rb) / d);
        let (j12, j22) = ((ra2 - ra) / d, (rb2 - rb) / d);
        let det = j11 * j22 - j12 * j21;
        let (mut da, mut db) = if det.abs() > 1e-14 {
            (-(j22 * ra - j12 * rb) / det, -(-j21 * ra + j11 * rb) / det)
        } else {
            (0.5 * ra, 0.5 * rb)
        };
        let mut accepted = false;
        for _ in 0..30 {
            let (na, nb) = ((a + da).max(0.0), (b + db).max(0.0));
            let (qa, qb, _) = resid(na, nb);
            if qa.hypot(qb) < norm {
                a = na;
                b = nb;
                accepted = true;
                break;
            }
            da *= 0.5;
            db *= 0.5;
        }
        if !accepted {
            // The sample map jumps where a denominator crosses zero, which
            // can stall Newton; a residual this small is still negligible.
            if noise <= 0.1 {
                return finish(a, b, it + 21);
            }
            break;
        }
    }
    Err(LabError::Convergence {
        message: format!("(a, b) solve at E = {e} stalled (a = {a}, b = {b}, residual {last:.3e}, {last_noise:.2} SE)"),
        iterations: max_iter,
    })
}

/// `c_α = α / (2^{α/2} Γ(α/2)² Γ(1 − α/2))`.
pub fn c_alpha(alpha: f64) -> f64 {
    let h = alpha / 2.0;
    alpha / (2f64.powf(h) * gamma(h).powi(2) * gamma(1.0 - h))
}

/// Constant actually used in front of `F`: `c_α Γ(1 − α/2)`.
///
/// With `c_α` alone the population-dynamics `γ_z` comes back scaled by
/// `1/Γ(1 − α/2)` for every direction and every tested `α`; the extra factor
/// makes `γ_z` a fixed point.
pub fn g_constant(alpha: f64) -> f64 {
    c_alpha(alpha) * gamma(1.0 - alpha / 2.0)
}

/// A function on the quarter circle `S¹₊`, sampled at uniform angles in
/// `[0, π/2]` and extended to `K_1^+` by `g(λu) = λ^{α/2} g(u)`.
#[derive(Debug, Clone, Serialize)]
pub struct GammaGrid {
    pub alpha: f64,
    pub angles: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl GammaGrid {
    pub fn from_fn(alpha: f64, points: usize, f: impl Fn(Complex64) -> Complex64) -> Result<Self> {
        check_alpha(alpha)?;
        if points < 8 {
            return Err(LabError::param("a gamma grid needs at least 8 points"));
        }
        let angles: Vec<f64> = (0..points).map(|j| FRAC_PI_2 * j as f64 / (points - 1) as f64).collect();
        let values = angles.iter().map(|&t| f(unit(t))).collect();
        Ok(GammaGrid { alpha, angles, values })
    }

    /// `γ(u) = Γ(1 − α/2) mean ((−iR).u)^{α/2}` from a pool.
    pub fn from_pool(pool: &ResolventPool, points: usize) -> Result<Self> {
        let h = pool.alpha / 2.0;
        let pre = gamma(1.0 - h);
        let hs: Vec<Complex64> = pool.samples.iter().map(|&r| -Complex64::i() * r).collect();
        Self::from_fn(pool.alpha, points, |u| {
            hs.iter().map(|&x| bilinear(x, u).powf(h)).sum::<Complex64>() / hs.len() as f64 * pre
        })
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: Vec<Complex64>) -> Self {
        GammaGrid { alpha: self.alpha, angles: self.angles.clone(), values }
    }

    pub fn difference(&self, other: &GammaGrid) -> Vec<Complex64> {
        self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect()
    }

    /// Linear interpolation in angle on `[0, π/2]`.
    pub fn at_angle(&self, theta: f64) -> Complex64 {
        let m = self.angles.len();
        let x = (theta / FRAC_PI_2).clamp(0.0, 1.0) * (m - 1) as f64;
        let j = (x.floor() as usize).min(m - 2);
        let t = x - j as f64;
        self.values[j] * (1.0 - t) + self.values[j + 1] * t
    }

    /// Homogeneous extension to `w ∈ K_1^+`.
    pub fn at(&self, w: Complex64) -> Complex64 {
        let r = w.norm();
        if r == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        self.at_angle(w.arg()) * r.powf(self.alpha / 2.0)
    }

    pub fn in_cone(&self, slack: f64) -> bool {
        self.values.iter().all(|&v| in_cone(v, self.alpha / 2.0, slack))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GOperatorOptions {
    pub rel_tol: f64,
    /// Lower bound on the `y`-split point `T = |i.e^{iθ}|/2`.
    pub min_split: f64,
}

impl Default for GOperatorOptions {
    fn default() -> Self {
        GOperatorOptions { rel_tol: 1e-4, min_split: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct GApplication {
    pub grid: GammaGrid,
    /// Per-point failure message; failed points hold NaN.
    pub flags: Vec<Option<String>>,
}

impl GApplication {
    pub fn ok(&self) -> bool {
        self.flags.iter().all(Option::is_none)
    }
}

/// `e^b − e^a` without cancellation when `b − a` is small.
#[inline]
fn exp_diff(a: Complex64, b: Complex64) -> Complex64 {
    let d = b - a;
    if d.norm() < 0.5 {
        let (s, c) = d.im.sin_cos();
        let em1 = Complex64::new(d.re.exp_m1() * c - 2.0 * (0.5 * d.im).sin().powi(2), d.re.exp() * s);
        a.exp() * em1
    } else {
        b.exp() - a.exp()
    }
}

/// `∫_0^∞ r^{α/2−1} (e^{−ra − r^{α/2}p} − e^{−r(a+c) − r^{α/2}q}) dr`
/// along a rotated ray, with `r = ρ^{2/α}`.
fn r_integral(alpha: f64, a: Complex64, c: Complex64, p: Complex64, q: Complex64, rel: f64) -> Result<Complex64> {
    let h = alpha / 2.0;
    let ac = a + c;
    let phi = -0.5 * (a.arg() + ac.arg());
    let w = Complex64::from_polar(1.0, phi);
    let wh = Complex64::from_polar(1.0, h * phi);
    let (ar, acr, pr, qr) = (a * w, ac * w, p * wh, q * wh);
    let decay = ar.re.min(acr.re);
    if !(decay > 0.0) {
        return Err(LabError::numerical(format!("r-integral does not decay (a = {a}, c = {c})")));
    }
    let damp = pr.re.min(qr.re).max(0.0);
    let mut scale = decay.powf(-h);
    if damp > 0.0 {
        scale = scale.min(1.0 / damp);
    }
    let inv_h = 1.0 / h;
    let r = integrate_semi_infinite(
        |rho: f64| {
            let r = rho.powf(inv_h);
            let e1 = -(r * ar) - rho * pr;
            let e2 = -(r * acr) - rho * qr;
            [-exp_diff(e2, e1)]
        },
        scale,
        QuadOptions { abs_tol: 1e-15, rel_tol: rel, max_intervals: 4000 },
    )?;
    // e^{A} − e^{B} with A the first exponent
    Ok(-r.value[0] * wh * inv_h)
}

fn f_operator_at(g: &GammaGrid, hz: Complex64, u: Complex64, opts: GOperatorOptions) -> Result<Complex64> {
    let alpha = g.alpha;
    let h = alpha / 2.0;
    let rel = opts.rel_tol;
    let hu = bilinear(hz, u);
    // inner y-integral at fixed θ
    let y_integral = |theta: f64| -> Result<Complex64> {
        let e = unit(theta);
        let a = bilinear(hz, e);
        let p = g.at(e);
        let split = ((theta.cos() - theta.sin()).abs() / 2.0).max(opts.min_split);
        let f = |y: f64| -> Result<Complex64> {
            if y == 0.0 {
                return Ok(Complex64::new(0.0, 0.0));
            }
            let q = g.at(e + u * y);
            r_integral(alpha, a, hu * y, p, q, 0.1 * rel)
        };
        let failure: std::cell::RefCell<Option<LabError>> = Default::default();
        let guard = |v: Result<Complex64>| match v {
            Ok(x) => [x],
            Err(err) => {
                failure.borrow_mut().get_or_insert(err);
                [Complex64::new(0.0, 0.0)]
            }
        };
        // [0, T] with y = s^k, k = 2/(2−α): y^{−h−1} dy = k s^{−1−kh} ds ... times f(y) = O(y)
        let k = 2.0 / (2.0 - alpha);
        let s_max = split.powf(1.0 / k);
        let lower = integrate(
            |s: f64| {
                if s == 0.0 {
                    return [Complex64::new(0.0, 0.0)];
                }
                let y = s.powf(k);
                guard(f(y).map(|v| v * (k * s.powf(k - 1.0) * y.powf(-h - 1.0))))
            },
            0.0,
            s_max,
            QuadOptions::with_rel_tol(rel),
        );
        // [T, ∞) with y = T w^{−1/h}: y^{−h−1} dy = (1/h) T^{−h} dw
        let upper = integrate(
            |w: f64| {
                if w == 0.0 {
                    return [Complex64::new(0.0, 0.0)];
                }
                let y = split * w.powf(-1.0 / h);
                guard(f(y).map(|v| v * (split.powf(-h) / h)))
            },
            0.0,
            1.0,
            QuadOptions::with_rel_tol(rel),
        );
        if let Some(err) = failure.into_inner() {
            return Err(err);
        }
        Ok(lower?.value[0] + upper?.value[0])
    };
    // θ-integral with (sin 2θ)^{h−1}; θ = w^{1/h} near 0 and θ = π/2 − w^{1/h} near π/2
    let failure: std::cell::RefCell<Option<LabError>> = Default::default();
    let theta_part = |theta: f64, jac: f64| -> [Complex64; 1] {
        match y_integral(theta) {
            Ok(v) => [v * ((2.0 * theta).sin().powf(h - 1.0) * jac)],
            Err(err) => {
                failure.borrow_mut().get_or_insert(err);
                [Complex64::new(0.0, 0.0)]
            }
        }
    };
    let w_max = FRAC_PI_4.powf(h);
    let inv_h = 1.0 / h;
    let left = integrate(
        |w: f64| {
            if w == 0.0 {
                return [Complex64::new(0.0, 0.0)];
            }
            let theta = w.powf(inv_h);
            theta_part(theta, inv_h * theta / w)
        },
        0.0,
        w_max,
        QuadOptions::with_rel_tol(rel),
    );
    let right = integrate(
        |w: f64| {
            if w == 0.0 {
                return [Complex64::new(0.0, 0.0)];
            }
            let d = w.powf(inv_h);
            theta_part(FRAC_PI_2 - d, inv_h * d / w)
        },
        0.0,
        w_max,
        QuadOptions::with_rel_tol(rel),
    );
    if let Some(err) = failure.into_inner() {
        return Err(err);
    }
    Ok(left?.value[0] + right?.value[0])
}

/// `G_z(g)(u)` at a single direction `u ∈ S¹₊`.
pub fn g_operator_at(gamma_grid: &GammaGrid, z: Complex64, u: Complex64, opts: GOperatorOptions) -> Result<Complex64> {
    let u = crate::cone::quarter_circle(u)?;
    Ok(f_operator_at(gamma_grid, -Complex64::i() * z, check_u(u), opts)? * g_constant(gamma_grid.alpha))
}

/// `G_z(g)(u) = c F_{−iz}(g)(ǔ)` (see [`g_constant`]) at every grid angle (parallel over points).
pub fn apply_g_operator(gamma_grid: &GammaGrid, z: Complex64, opts: GOperatorOptions) -> Result<GApplication> {
    let alpha = gamma_grid.alpha;
    if !(alpha < 1.0) {
        return Err(LabError::OutOfRegime(format!("the G operator is defined for alpha < 1, got {alpha}")));
    }
    if !(z.im > 0.0) {
        return Err(LabError::domain(format!("need Im z > 0, got {z}")));
    }
    if !gamma_grid.in_cone(1e-9) {
        return Err(LabError::domain("grid values must lie in K_{alpha/2}"));
    }
    let hz = -Complex64::i() * z;
    let ca = g_constant(alpha);
    let results: Vec<Result<Complex64>> = gamma_grid
        .angles
        .par_iter()
        .map(|&t| f_operator_at(gamma_grid, hz, check_u(unit(t)), opts).map(|v| v * ca))
        .collect();
    let mut values = Vec::with_capacity(results.len());
    let mut flags = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(v) if in_cone(v, alpha / 2.0, 1e-9) => {
                values.push(v);
                flags.push(None);
            }
            Ok(v) => {
                values.push(v);
                flags.push(Some(format!("value {v} left the cone")));
            }
            Err(e) => {
                values.push(Complex64::new(f64::NAN, f64::NAN));
                flags.push(Some(e.to_string()));
            }
        }
    }
    Ok(GApplication { grid: gamma_grid.with_values(values), flags })
}

/// Angular half-width around `π/4` left out of the Hölder quotients.
pub const PI4_WINDOW: f64 = 0.5e-3;

fn i_dot(theta: f64) -> f64 {
    (theta.cos() - theta.sin()).abs()
}

fn holder_part(angles: &[f64], f: &[Complex64], beta: f64, weight_exp: f64) -> f64 {
    let mut best = 0.0f64;
    for i in 0..angles.len() {
        if (angles[i] - FRAC_PI_4).abs() < PI4_WINDOW {
            continue;
        }
        for j in (i + 1)..angles.len() {
            if (angles[j] - FRAC_PI_4).abs() < PI4_WINDOW {
                continue;
            }
            let d = 2.0 * (0.5 * (angles[i] - angles[j]).abs()).sin();
            let w = i_dot(angles[i]).min(i_dot(angles[j]));
            best = best.max((f[i] - f[j]).norm() / d.powf(beta) * w.powf(weight_exp));
        }
    }
    best
}

/// Discrete `‖f‖_{β,ε}` over the grid angles.
pub fn norm_beta_eps(angles: &[f64], f: &[Complex64], beta: f64, eps: f64) -> f64 {
    let sup = angles.iter().zip(f).map(|(&t, v)| v.norm() * i_dot(t).powf(eps)).fold(0.0, f64::max);
    sup + holder_part(angles, f, beta, beta + eps)
}

/// Discrete `‖f‖_β` (weight exponent `β − α/2`).
pub fn norm_beta(angles: &[f64], f: &[Complex64], beta: f64, alpha: f64) -> f64 {
    let sup = f.iter().map(|v| v.norm()).fold(0.0, f64::max);
    sup + holder_part(angles, f, beta, beta - alpha / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_critical, ks_two_sample, median};

    #[test]
    fn weights_are_decreasing_with_known_median() {
        let mut rng = rng_from_seed(3);
        let w = sample_poisson_weights(1.0, 50, &mut rng).unwrap();
        assert!(w.weights.windows(2).all(|p| p[0] > p[1] && p[1] > 0.0));
        let firsts: Vec<f64> = (0..20_000)
            .map(|_| sample_poisson_weights(1.0, 1, &mut rng).unwrap().weights[0])
            .collect();
        let m = median(&firsts);
        let expect = 2f64.ln().powf(-2.0);
        // density of ξ₁ at its median: f = e^{-x^{-1/2}} x^{-3/2}/2
        let dens = (-expect.powf(-0.5)).exp() * expect.powf(-1.5) / 2.0;
        let se = 0.5 / (dens * (firsts.len() as f64).sqrt());
        assert!((m - expect).abs() < 4.0 * se, "{m} vs {expect}");
    }

    #[test]
    fn weight_sums_are_positive_stable() {
        // Σ ξ_k has E e^{−tS} = exp(−Γ(1−α/2) t^{α/2})
        let alpha = 0.5;
        let mut rng = rng_from_seed(4);
        let n = 20_000;
        let sums: Vec<f64> = (0..n)
            .map(|_| sample_poisson_weights(alpha, 200, &mut rng).unwrap().weights.iter().sum())
            .collect();
        let law = PosStable::with_laplace_exponent(alpha / 2.0, gamma(1.0 - alpha / 2.0)).unwrap();
        let direct: Vec<f64> = (0..n).map(|_| law.draw(&mut rng)).collect();
        assert!(ks_two_sample(&sums, &direct) < ks_critical(1e-3, n, n));
    }

    #[test]
    fn tail_mean_matches_direct_sum() {
        let direct: f64 = (201..2_000_000).map(|k| {
            let k = k as f64;
            (ln_gamma(k - 4.0) - ln_gamma(k)).exp()
        }).sum();
        assert!((poisson_tail_mean(0.5, 200) - direct).abs() < 1e-9 * direct);
        assert!(poisson_tail_mean(0.5, 3).is_infinite());
    }

    #[test]
    fn degenerate_pool_gives_free_resolvent() {
        let z = Complex64::new(0.3, 0.7);
        let pool = ResolventPool::constant(1.0, z, 10, Complex64::new(0.0, 0.0)).unwrap();
        let opts = StepOptions { trunc: 0, tail_correction: false };
        let (next, _) = step_with_seed(&pool, opts, 1).unwrap();
        for s in &next.samples {
            assert!((s + 1.0 / z).norm() < 1e-15);
        }
    }

    #[test]
    fn pool_stays_in_upper_half_plane_and_is_deterministic() {
        let mut cfg = PoolConfig::new(0.8, Complex64::new(1.0, 0.2));
        cfg.size = 5000;
        cfg.trunc = 50;
        cfg.generations = 5;
        cfg.seed = 9;
        let a = run_pool(&cfg).unwrap();
        let b = run_pool(&cfg).unwrap();
        assert_eq!(a.pool.samples, b.pool.samples);
        for s in &a.pool.samples {
            assert!(s.im >= -1e-12 && s.norm() <= 1.0 / cfg.z.im + 1e-12);
        }
    }

    #[test]
    fn constant_pool_moment() {
        let pool = ResolventPool::constant(0.5, Complex64::new(1.0, 1.0), 4, Complex64::i()).unwrap();
        let u = unit(0.3);
        let k = 0.25;
        let m = rde_frac_moment(&pool, u, k).unwrap();
        let expect = gamma(1.0 - k) * (u.re + u.im).powf(k);
        assert!((m.mean - expect).norm() < 1e-12);
        let empty = ResolventPool { samples: vec![], ..pool };
        assert!(matches!(rde_frac_moment(&empty, u, k), Err(LabError::Usage(_))));
    }

    #[test]
    fn c_alpha_value() {
        assert!((c_alpha(0.5) - 0.0261).abs() < 5e-5);
    }

    #[test]
    fn ab_system_symmetry() {
        let p = solve_real_axis_ab(0.5, 10.0, 20_000, 5).unwrap();
        let m = solve_real_axis_ab(0.5, -10.0, 20_000, 5).unwrap();
        assert!(p.a >= 0.0 && p.b >= 0.0 && p.a.is_finite() && p.b.is_finite());
        // E → −E swaps a and b in law (S and S′ trade places)
        assert!((p.a - m.b).abs() < 4.0 * p.se_a.hypot(m.se_b), "{p:?} {m:?}");
        assert!((p.b - m.a).abs() < 4.0 * p.se_b.hypot(m.se_a), "{p:?} {m:?}");
        assert!(p.within_errors(4.0), "{p:?}");
        assert!(matches!(solve_real_axis_ab(0.7, 10.0, 1000, 1), Err(LabError::OutOfRegime(_))));
    }

    #[test]
    fn norms() {
        let g = GammaGrid::from_fn(0.5, 33, |_| Complex64::new(0.7, 0.2)).unwrap();
        let c = Complex64::new(0.7, 0.2).norm();
        assert!((norm_beta_eps(&g.angles, &g.values, 0.5, 0.0) - c).abs() < 1e-14);
        let scaled: Vec<Complex64> = g.values.iter().map(|v| v * 3.0).collect();
        let smooth = GammaGrid::from_fn(0.5, 33, |u| bilinear(Complex64::new(1.0, 0.0), u).powf(0.25)).unwrap();
        let n1 = norm_beta_eps(&smooth.angles, &smooth.values, 0.5, 0.1);
        let s3: Vec<Complex64> = smooth.values.iter().map(|v| v * -2.0).collect();
        assert!((norm_beta_eps(&smooth.angles, &s3, 0.5, 0.1) - 2.0 * n1).abs() < 1e-12);
        assert!((norm_beta_eps(&g.angles, &scaled, 0.5, 0.0) - 3.0 * c).abs() < 1e-12);
        let fine = GammaGrid::from_fn(0.5, 65, |u| bilinear(Complex64::new(1.0, 0.0), u).powf(0.25)).unwrap();
        let n2 = norm_beta_eps(&fine.angles, &fine.values, 0.5, 0.1);
        assert!((n1 - n2).abs() < 0.02 * n1, "{n1} {n2}");
    }
}
