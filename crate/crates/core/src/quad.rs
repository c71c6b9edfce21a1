//! Adaptive Gauss–Kronrod (G10/K21) quadrature for complex vector-valued
//! integrands.
//!
//! Integrands return `[Complex64; N]` so that several integrals sharing the
//! same expensive exponentials (a function and its derivative, say) are
//! accumulated in one pass over the nodes.

use num_complex::Complex64;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{LabError, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_600_525_478,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];

// Gauss weights for the odd-indexed Kronrod nodes 1,3,5,7,9.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-14,
            rel_tol: 1e-11,
            max_intervals: 2000,
        }
    }
}

impl QuadOptions {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadOptions { rel_tol, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<const N: usize> {
    pub value: [Complex64; N],
    pub error: f64,
    pub evaluations: usize,
}

fn norm<const N: usize>(v: &[Complex64; N]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

struct Panel<const N: usize> {
    a: f64,
    b: f64,
    value: [Complex64; N],
    error: f64,
}

impl<const N: usize> PartialEq for Panel<N> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<const N: usize> Eq for Panel<N> {}
impl<const N: usize> PartialOrd for Panel<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Panel<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod21<const N: usize, F>(f: &F, a: f64, b: f64) -> Panel<N>
where
    F: Fn(f64) -> [Complex64; N],
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let zero = [Complex64::new(0.0, 0.0); N];
    let mut k = zero;
    let mut g = zero;
    let fc = f(c);
    for j in 0..N {
        k[j] = fc[j] * WGK[10];
    }
    for (i, &x) in XGK[..10].iter().enumerate() {
        let f1 = f(c - h * x);
        let f2 = f(c + h * x);
        for j in 0..N {
            let s = f1[j] + f2[j];
            k[j] += s * WGK[i];
            if i % 2 == 1 {
                g[j] += s * WG[i / 2];
            }
        }
    }
    let mut err = 0.0f64;
    for j in 0..N {
        k[j] *= h;
        g[j] *= h;
        err = err.max((k[j] - g[j]).norm());
    }
    Panel { a, b, value: k, error: err }
}

/// Adaptive integration over the finite interval [a, b].
pub fn integrate<const N: usize, F>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResult<N>>
where
    F: Fn(f64) -> [Complex64; N],
{
    if a == b {
        return Ok(QuadResult {
            value: [Complex64::new(0.0, 0.0); N],
            error: 0.0,
            evaluations: 0,
        });
    }
    let first = kronrod21(&f, a, b);
    let mut evaluations = 21;
    let mut total = first.value;
    let mut total_err = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    loop {
        let tol = opts.abs_tol.max(opts.rel_tol * norm(&total));
        if total_err <= tol {
            break;
        }
        if heap.len() >= opts.max_intervals {
            return Err(LabError::Numerical {
                message: format!(
                    "quadrature on [{a}, {b}] did not reach tolerance {tol:.3e}; estimate {total_err:.3e}"
                ),
                seed: None,
            });
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval can no longer be split in floating point
            heap.push(worst);
            return Err(LabError::numerical(format!(
                "quadrature on [{a}, {b}] exhausted floating point resolution; estimate {total_err:.3e}"
            )));
        }
        let left = kronrod21(&f, worst.a, mid);
        let right = kronrod21(&f, mid, worst.b);
        evaluations += 42;
        for j in 0..N {
            total[j] += left.value[j] + right.value[j] - worst.value[j];
        }
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // recompute the sum from the panels to shed accumulated rounding
    let mut value = [Complex64::new(0.0, 0.0); N];
    let mut error = 0.0;
    for p in heap.iter() {
        for j in 0..N {
            value[j] += p.value[j];
        }
        error += p.error;
    }
    Ok(QuadResult { value, error, evaluations })
}

/// Integration over [0, ∞) for integrands that decay beyond a known `scale`.
///
/// Panels [0, s], [s, 2s], [2s, 4s], ... are integrated adaptively until two
/// consecutive panels contribute less than the tolerance.
pub fn integrate_semi_infinite<const N: usize, F>(f: F, scale: f64, opts: QuadOptions) -> Result<QuadResult<N>>
where
    F: Fn(f64) -> [Complex64; N],
{
    if !(scale.is_finite() && scale > 0.0) {
        return Err(LabError::numerical(format!("bad decay scale {scale}")));
    }
    let mut value = [Complex64::new(0.0, 0.0); N];
    let mut error = 0.0;
    let mut evaluations = 0;
    let mut a = 0.0;
    let mut b = scale;
    let mut quiet = 0;
    for _ in 0..200 {
        let panel = integrate(&f, a, b, opts)?;
        evaluations += panel.evaluations;
        for j in 0..N {
            value[j] += panel.value[j];
        }
        error += panel.error;
        let tol = opts.abs_tol.max(opts.rel_tol * norm(&value));
        if norm(&panel.value) + panel.error <= tol {
            quiet += 1;
            if quiet >= 2 {
                return Ok(QuadResult { value, error, evaluations });
            }
        } else {
            quiet = 0;
        }
        a = b;
        b *= 2.0;
    }
    Err(LabError::numerical("semi-infinite quadrature did not decay"))
}

/// Convenience wrapper for a single real-valued integrand.
pub fn integrate_real<F>(f: F, a: f64, b: f64, opts: QuadOptions) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let r = integrate(|x| [Complex64::new(f(x), 0.0)], a, b, opts)?;
    Ok((r.value[0].re, r.error))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let (v, _) = integrate_real(|x| x.powi(7) - 3.0 * x * x, 0.0, 2.0, QuadOptions::default()).unwrap();
        assert!((v - (32.0 - 8.0)).abs() < 1e-12);
    }

    #[test]
    fn endpoint_singularity_converges() {
        // ∫_0^1 x^{-1/2} dx = 2
        let (v, _) = integrate_real(|x| x.powf(-0.5), 0.0, 1.0, QuadOptions::with_rel_tol(1e-9)).unwrap();
        assert!((v - 2.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn semi_infinite_complex_exponential() {
        // ∫_0^∞ e^{-(1-i)t} dt = 1/(1-i)
        let w = Complex64::new(1.0, -1.0);
        let r = integrate_semi_infinite(|t| [(-w * t).exp()], 1.0, QuadOptions::default()).unwrap();
        assert!((r.value[0] - 1.0 / w).norm() < 1e-12);
    }

    #[test]
    fn gaussian_integral() {
        let r = integrate_semi_infinite(|t| [Complex64::new((-t * t).exp(), 0.0)], 1.0, QuadOptions::default())
            .unwrap();
        assert!((r.value[0].re - PI.sqrt() / 2.0).abs() < 1e-12);
    }
}
