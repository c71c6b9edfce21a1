//! Stable laws with the normalization used throughout the crate.
//!
//! Symmetric draws have characteristic function `exp(-w_α |t|^α)` with
//! `w_α = π / (sin(πα/2) Γ(α))`, which makes `P(|X| ≥ t) ~ t^{-α}`.
//! Positive draws of index `α' < 1` have Laplace transform
//! `exp(-σ^{α'} v_{α'} t^{α'})` with `v_{α'} = (2/π) sin(πα'/2) Γ(1-α') Γ(α')`.
//!
//! Both samplers are Chambers–Mallows–Stuck type transforms of a uniform angle
//! and an independent unit exponential.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};
use std::f64::consts::PI;

use crate::error::{check_alpha, LabError, Result};

/// Index, skewness and scale of a stable law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableParams {
    alpha: f64,
    beta: f64,
    sigma: f64,
}

impl StableParams {
    pub fn new(alpha: f64, beta: f64, sigma: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(-1.0..=1.0).contains(&beta) {
            return Err(LabError::param(format!("beta must lie in [-1,1], got {beta}")));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(LabError::param(format!("sigma must be positive, got {sigma}")));
        }
        Ok(StableParams { alpha, beta, sigma })
    }

    /// The symmetric law with characteristic function `exp(-w_α|t|^α)`.
    pub fn symmetric(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Self::new(alpha, 0.0, w_alpha(alpha).powf(1.0 / alpha))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn w_alpha(&self) -> f64 {
        w_alpha(self.alpha)
    }

    pub fn v_alpha(&self) -> Result<f64> {
        v_alpha(self.alpha)
    }
}

/// `w_α = π / (sin(πα/2) Γ(α))`.
pub fn w_alpha(alpha: f64) -> f64 {
    PI / ((PI * alpha / 2.0).sin() * gamma(alpha))
}

/// `v_α = (2/π) sin(πα/2) Γ(1-α) Γ(α)`, defined for `0 < α < 1`.
pub fn v_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(LabError::param(format!(
            "positive stable laws need index in (0,1), got {alpha}"
        )));
    }
    Ok(2.0 / PI * (PI * alpha / 2.0).sin() * gamma(1.0 - alpha) * gamma(alpha))
}

/// One symmetric draw with characteristic function `exp(-|t|^α)`.
#[inline]
pub fn standard_sym_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let v = PI * (rng.random::<f64>() - 0.5);
    let w: f64 = Exp1.sample(rng);
    if alpha == 1.0 {
        return v.tan();
    }
    (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// Reusable sampler for the canonical symmetric law of index `alpha`.
#[derive(Debug, Clone, Copy)]
pub struct SymStable {
    alpha: f64,
    scale: f64,
}

impl SymStable {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(SymStable {
            alpha,
            scale: w_alpha(alpha).powf(1.0 / alpha),
        })
    }

    /// Scale with `P(|X| ≥ t) ~ t^{-α}`, i.e. characteristic function
    /// `exp(-(w_α/2)|t|^α)`. This is the entry law the limiting equations for
    /// the spectrum are written for.
    pub fn tail_normalized(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(SymStable {
            alpha,
            scale: (0.5 * w_alpha(alpha)).powf(1.0 / alpha),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.scale * standard_sym_stable(self.alpha, rng)
    }
}

/// I.i.d. symmetric stable draws with characteristic function `exp(-w_α|t|^α)`.
pub fn sample_sym_stable<R: Rng + ?Sized>(alpha: f64, count: usize, rng: &mut R) -> Result<Vec<f64>> {
    let s = SymStable::new(alpha)?;
    Ok((0..count).map(|_| s.draw(rng)).collect())
}

/// Reusable sampler for a totally skewed positive stable law.
#[derive(Debug, Clone, Copy)]
pub struct PosStable {
    alpha: f64,
    scale: f64,
}

impl PosStable {
    /// Law with Laplace transform `exp(-σ^α v_α t^α)`.
    pub fn new(alpha: f64, sigma: f64) -> Result<Self> {
        let v = v_alpha(alpha)?;
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(LabError::param(format!("sigma must be positive, got {sigma}")));
        }
        Ok(PosStable { alpha, scale: sigma * v.powf(1.0 / alpha) })
    }

    /// Law with Laplace transform `exp(-c t^α)`.
    pub fn with_laplace_exponent(alpha: f64, c: f64) -> Result<Self> {
        v_alpha(alpha)?;
        if !(c.is_finite() && c > 0.0) {
            return Err(LabError::param(format!("Laplace exponent must be positive, got {c}")));
        }
        Ok(PosStable { alpha, scale: c.powf(1.0 / alpha) })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // Kanter's representation: Laplace transform exp(-t^α) before scaling.
        let a = self.alpha;
        let u = PI * rng.random::<f64>();
        let w: f64 = Exp1.sample(rng);
        let s = (a * u).sin() / u.sin().powf(1.0 / a) * (((1.0 - a) * u).sin() / w).powf((1.0 - a) / a);
        self.scale * s
    }
}

/// I.i.d. positive stable draws with `E e^{-tS} = exp(-σ^{α'} v_{α'} t^{α'})`.
pub fn sample_pos_stable<R: Rng + ?Sized>(
    alpha_half: f64,
    sigma: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let s = PosStable::new(alpha_half, sigma)?;
    Ok((0..count).map(|_| s.draw(rng)).collect())
}

/// One draw of the Gaussian-times-stable decomposition of `<X, A X>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFormSplit {
    /// `‖A^{1/2} G‖_α²` for a standard Gaussian vector `G`.
    pub gauss_norm_sq: f64,
    /// Independent positive `α/2`-stable factor.
    pub stable_factor: f64,
    pub product: f64,
}

/// Sampler for `<X, A X>` with `X` i.i.d. canonical symmetric stable, using
/// the representation `‖A^{1/2}G‖_α² S`.
#[derive(Debug, Clone)]
pub struct QuadraticFormSampler {
    alpha: f64,
    sqrt_a: DMatrix<f64>,
    stable: Option<PosStable>,
    zero: bool,
}

impl QuadraticFormSampler {
    pub fn new(a: &DMatrix<f64>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !a.is_square() {
            return Err(LabError::domain("quadratic form matrix must be square"));
        }
        let n = a.nrows();
        for i in 0..n {
            for j in 0..i {
                if (a[(i, j)] - a[(j, i)]).abs() > 1e-12 * (1.0 + a[(i, j)].abs()) {
                    return Err(LabError::domain("quadratic form matrix must be symmetric"));
                }
            }
        }
        let a_norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let zero = a_norm == 0.0;
        let eig = SymmetricEigen::new(a.clone());
        let floor = -1e-10 * a_norm;
        if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| l < floor) {
            return Err(LabError::domain(format!(
                "matrix is not positive semidefinite (eigenvalue {bad:.3e})"
            )));
        }
        let roots = DVector::from_iterator(n, eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()));
        let q = &eig.eigenvectors;
        let sqrt_a = q * DMatrix::from_diagonal(&roots) * q.transpose();
        // S ~ Stab_{α/2}(1, 2σ² v_{α/2}^{-2/α}) with σ^α = w_α
        let sigma = w_alpha(alpha).powf(1.0 / alpha);
        let half = alpha / 2.0;
        let stable = if zero {
            None
        } else {
            let scale = 2.0 * sigma * sigma * v_alpha(half)?.powf(-2.0 / alpha);
            Some(PosStable::new(half, scale)?)
        };
        Ok(QuadraticFormSampler { alpha, sqrt_a, stable, zero })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> QuadraticFormSplit {
        let n = self.sqrt_a.nrows();
        let g = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)));
        let y = &self.sqrt_a * g;
        let norm_alpha = y.iter().map(|v| v.abs().powf(self.alpha)).sum::<f64>().powf(1.0 / self.alpha);
        let gauss_norm_sq = norm_alpha * norm_alpha;
        let stable_factor = match &self.stable {
            Some(s) => s.draw(rng),
            None => 1.0,
        };
        let product = if self.zero { 0.0 } else { gauss_norm_sq * stable_factor };
        QuadraticFormSplit { gauss_norm_sq, stable_factor, product }
    }
}

/// A single draw of the quadratic-form decomposition for a PSD matrix.
pub fn quadratic_form_split<R: Rng + ?Sized>(a: &DMatrix<f64>, alpha: f64, rng: &mut R) -> Result<QuadraticFormSplit> {
    Ok(QuadraticFormSampler::new(a, alpha)?.draw(rng))
}

/// Result of the series for `E exp(c S^{-α/(1-α)})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverseStableMoment {
    /// Partial sum, or `+∞` when divergence was detected.
    pub value: f64,
    pub diverged: bool,
    pub terms_used: usize,
}

/// Series evaluation of `E exp(c S^{-p})`, `p = α/(1-α)`, for `S ~ Stab_α(1, σ)`.
///
/// Uses `E S^{-kp} = σ̂^{-kp} Γ(kp/α) / (α Γ(kp))` with `σ̂ = σ v_α^{1/α}`.
/// Summation stops once a term drops below `1e-14` of the partial sum or after
/// `terms` terms; twenty consecutive increasing terms mark divergence.
pub fn inverse_stable_exp_moment(c: f64, alpha: f64, sigma: f64, terms: usize) -> Result<InverseStableMoment> {
    if !(c.is_finite() && c > 0.0) {
        return Err(LabError::param(format!("c must be positive, got {c}")));
    }
    if terms < 10 {
        return Err(LabError::param("at least 10 series terms are required"));
    }
    let v = v_alpha(alpha)?;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(LabError::param(format!("sigma must be positive, got {sigma}")));
    }
    let p = alpha / (1.0 - alpha);
    let sigma_hat = sigma * v.powf(1.0 / alpha);
    let (ln_c, ln_s) = (c.ln(), sigma_hat.ln());
    let mut sum = 1.0;
    let mut prev = f64::INFINITY;
    let mut rising = 0;
    for k in 1..=terms {
        let kf = k as f64;
        let kp = kf * p;
        let ln_term = kf * ln_c - kp * ln_s + ln_gamma(kp / alpha) - ln_gamma(kp) - ln_gamma(kf + 1.0) - alpha.ln();
        let term = ln_term.exp();
        sum += term;
        if term > prev {
            rising += 1;
            if rising >= 20 {
                return Ok(InverseStableMoment { value: f64::INFINITY, diverged: true, terms_used: k });
            }
        } else {
            rising = 0;
        }
        if term < 1e-14 * sum {
            return Ok(InverseStableMoment { value: sum, diverged: false, terms_used: k });
        }
        prev = term;
    }
    Ok(InverseStableMoment { value: sum, diverged: false, terms_used: terms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::stats::{ks_critical, ks_two_sample, median, Estimate};
    use nalgebra::DMatrix;

    /// Exact `P(|X| > t)` for the canonical symmetric law with `α < 1`, from the
    /// convergent series of the stable tail (independent of the sampler).
    fn sym_tail_series(alpha: f64, t: f64) -> f64 {
        let x = t / w_alpha(alpha).powf(1.0 / alpha);
        let mut sum = 0.0;
        for k in 1..200 {
            let kf = k as f64;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let term = sign * (ln_gamma(alpha * kf) - ln_gamma(kf + 1.0) - alpha * kf * x.ln()).exp()
                * (kf * PI * alpha / 2.0).sin();
            sum += term;
            if term.abs() < 1e-18 {
                break;
            }
        }
        2.0 / PI * sum
    }

    #[test]
    fn normalization_constants() {
        assert!((w_alpha(1.0) - PI).abs() < 1e-12);
        assert!((v_alpha(0.5).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!(v_alpha(1.0).is_err());
        assert!(StableParams::new(2.0, 0.0, 1.0).is_err());
        assert!(StableParams::new(0.0, 0.0, 1.0).is_err());
        assert!(StableParams::new(1.0, 1.5, 1.0).is_err());
        assert!(StableParams::new(1.0, 0.0, 0.0).is_err());
        let p = StableParams::symmetric(1.5).unwrap();
        assert!((p.sigma().powf(1.5) - p.w_alpha()).abs() < 1e-12);
    }

    #[test]
    fn cauchy_characteristic_function() {
        let mut rng = rng_from_seed(11);
        let xs = sample_sym_stable(1.0, 1_000_000, &mut rng).unwrap();
        let c: Vec<f64> = xs.iter().map(|x| x.cos()).collect();
        let est = Estimate::from_samples(&c);
        let exact = (-PI).exp();
        assert!((est.mean - exact).abs() < 3.0 * est.std_err, "{est:?} vs {exact}");
    }

    #[test]
    fn symmetric_median_is_zero() {
        let mut rng = rng_from_seed(12);
        let xs = sample_sym_stable(1.5, 1_000_000, &mut rng).unwrap();
        // the density at 0 is of order one, so the median error is ~ 1/sqrt(N)
        assert!(median(&xs).abs() < 5e-3);
    }

    #[test]
    fn empty_request_and_bad_alpha() {
        let mut rng = rng_from_seed(1);
        assert!(sample_sym_stable(0.7, 0, &mut rng).unwrap().is_empty());
        assert!(sample_sym_stable(2.0, 3, &mut rng).is_err());
        assert!(sample_pos_stable(1.0, 1.0, 3, &mut rng).is_err());
    }

    #[test]
    fn tail_matches_series_oracle() {
        // The w_α normalization gives t^α P(|X| ≥ t) → 2 (one unit per side).
        let alpha = 0.8;
        let mut rng = rng_from_seed(13);
        let xs = sample_sym_stable(alpha, 10_000_000, &mut rng).unwrap();
        for t in [20.0, 50.0, 100.0] {
            let hits = xs.iter().filter(|x| x.abs() >= t).count() as f64;
            let p = hits / xs.len() as f64;
            let exact = sym_tail_series(alpha, t);
            let se = (exact * (1.0 - exact) / xs.len() as f64).sqrt();
            assert!((p - exact).abs() < 4.0 * se, "t={t}: {p} vs {exact}");
        }
        let far = 1e8;
        assert!((sym_tail_series(alpha, far) * far.powf(alpha) - 2.0).abs() < 1e-3);
    }

    #[test]
    fn positive_stable_laplace_transform() {
        let mut rng = rng_from_seed(14);
        let s = sample_pos_stable(0.5, 1.0, 1_000_000, &mut rng).unwrap();
        assert!(s.iter().all(|&x| x > 0.0));
        let e: Vec<f64> = s.iter().map(|x| (-x).exp()).collect();
        let est = Estimate::from_samples(&e);
        assert!((est.mean - (-(2f64.sqrt())).exp()).abs() < 3.0 * est.std_err);

        let s = sample_pos_stable(0.25, 1.0, 1_000_000, &mut rng).unwrap();
        let v = v_alpha(0.25).unwrap();
        for t in [0.5, 1.0, 2.0] {
            let e: Vec<f64> = s.iter().map(|x| (-t * x).exp()).collect();
            let est = Estimate::from_samples(&e);
            let exact = (-v * f64::powf(t, 0.25)).exp();
            assert!((est.mean - exact).abs() < 3.5 * est.std_err, "t={t} {est:?} {exact}");
        }
    }

    #[test]
    fn quadratic_form_of_zero_matrix() {
        let mut rng = rng_from_seed(15);
        let q = quadratic_form_split(&DMatrix::zeros(4, 4), 1.2, &mut rng).unwrap();
        assert_eq!(q.product, 0.0);
    }

    #[test]
    fn quadratic_form_rejects_indefinite() {
        let mut rng = rng_from_seed(15);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(quadratic_form_split(&a, 1.2, &mut rng), Err(LabError::Domain(_))));
        // tiny negative eigenvalues are clamped
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-13]);
        assert!(quadratic_form_split(&b, 1.2, &mut rng).is_ok());
    }

    #[test]
    fn quadratic_form_single_coordinate() {
        let n = 5;
        let mut a = DMatrix::zeros(n, n);
        a[(0, 0)] = 1.0;
        let sampler = QuadraticFormSampler::new(&a, 1.2).unwrap();
        let sym = SymStable::new(1.2).unwrap();
        let mut rng = rng_from_seed(16);
        let m = 40_000;
        let split: Vec<f64> = (0..m).map(|_| sampler.draw(&mut rng).product).collect();
        let direct: Vec<f64> = (0..m).map(|_| sym.draw(&mut rng).powi(2)).collect();
        assert!(ks_two_sample(&split, &direct) < ks_critical(1e-3, m, m));
    }

    #[test]
    fn inverse_moment_series() {
        let tiny = inverse_stable_exp_moment(1e-12, 0.5, 1.0, 50).unwrap();
        assert!((tiny.value - 1.0).abs() < 1e-10 && !tiny.diverged);

        let series = inverse_stable_exp_moment(0.01, 0.5, 1.0, 200).unwrap();
        let mut rng = rng_from_seed(17);
        let s = sample_pos_stable(0.5, 1.0, 1_000_000, &mut rng).unwrap();
        let mc: Vec<f64> = s.iter().map(|x| (0.01 / x).exp()).collect();
        let est = Estimate::from_samples(&mc);
        assert!((series.value - est.mean).abs() < 0.01 * series.value, "{series:?} {est:?}");

        // For α = 1/2 the term ratio tends to 4c/σ̂ with σ̂ = 2σ, so c₀ = 1/2 at σ = 1.
        let big = inverse_stable_exp_moment(5.0, 0.5, 1.0, 500).unwrap();
        assert!(big.diverged && big.value.is_infinite());
        assert!(inverse_stable_exp_moment(0.4, 0.5, 1.0, 2000).unwrap().value.is_finite());
        assert!(inverse_stable_exp_moment(0.1, 0.5, 1.0, 5).is_err());
    }
}
