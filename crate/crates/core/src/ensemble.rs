//! Lévy–Wigner matrices, their spectra, and resolvent statistics.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::gamma;
use std::io::Write;

use crate::cone::{bilinear, quarter_circle};
use crate::error::{check_alpha, LabError, Result};
use crate::io::{decimal17, hexfloat};
use crate::linalg::{default_eigensolver, EigenPairs, SymmetricEigensolver};
use crate::rng::rng_from_seed;
use crate::stable::SymStable;

/// Symmetric matrix `X` of i.i.d. symmetric α-stable entries with
/// `P(|X_ij| ≥ t) ~ t^{-α}`. The object of study is `A = X / a_n` with
/// `a_n = n^{1/α}`.
#[derive(Debug, Clone)]
pub struct WignerLevyMatrix {
    n: usize,
    alpha: f64,
    seed: u64,
    entries: DMatrix<f64>,
}

impl WignerLevyMatrix {
    /// Wrap an explicit symmetric matrix (mostly for tests).
    pub fn from_entries(entries: DMatrix<f64>, alpha: f64, seed: u64) -> Result<Self> {
        check_alpha(alpha)?;
        let n = entries.nrows();
        if n < 2 || !entries.is_square() {
            return Err(LabError::param("matrix must be square with n >= 2"));
        }
        for i in 0..n {
            for j in 0..i {
                if entries[(i, j)] != entries[(j, i)] {
                    return Err(LabError::domain(format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
            }
        }
        Ok(WignerLevyMatrix { n, alpha, seed, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The unscaled matrix `X`.
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn a_n(&self) -> f64 {
        (self.n as f64).powf(1.0 / self.alpha)
    }

    /// `A = X / a_n`.
    pub fn scaled(&self) -> DMatrix<f64> {
        &self.entries / self.a_n()
    }

    /// Row `k` of `X` with its diagonal entry removed.
    pub fn row_without_diagonal(&self, k: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.n - 1,
            (0..self.n).filter(|&j| j != k).map(|j| self.entries[(k, j)]),
        )
    }

    fn tag_error(&self, e: LabError) -> LabError {
        match e {
            LabError::Numerical { message, .. } => LabError::Numerical { message, seed: Some(self.seed) },
            other => other,
        }
    }
}

/// Fill the upper triangle (diagonal included) row by row from `seed`.
pub fn build_matrix(n: usize, alpha: f64, seed: u64) -> Result<WignerLevyMatrix> {
    if n < 2 {
        return Err(LabError::param(format!("matrix size must be at least 2, got {n}")));
    }
    let sampler = SymStable::tail_normalized(alpha)?;
    let mut rng = rng_from_seed(seed);
    let mut x = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = sampler.draw(&mut rng);
            x[(i, j)] = v;
            x[(j, i)] = v;
        }
    }
    Ok(WignerLevyMatrix { n, alpha, seed, entries: x })
}

/// Eigenvalues ascending, eigenvector `k` in column `k`.
#[derive(Debug, Clone)]
pub struct SpectralData {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpectralData {
    pub fn from_pairs(pairs: EigenPairs) -> Result<Self> {
        let n = pairs.values.len();
        if pairs.vectors.nrows() != n || pairs.vectors.ncols() != n {
            return Err(LabError::domain("spectral data needs a full square eigenvector matrix"));
        }
        if pairs.values.windows(2).any(|w| w[0] > w[1]) {
            return Err(LabError::domain("eigenvalues must be sorted ascending"));
        }
        Ok(SpectralData { eigenvalues: pairs.values, eigenvectors: pairs.vectors })
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    /// `λ_k` in descending indexing, `k = 1` being the largest.
    pub fn lambda_desc(&self, k: usize) -> f64 {
        assert!(k >= 1 && k <= self.n(), "descending index {k} out of range");
        self.eigenvalues[self.n() - k]
    }

    /// Eigenvector paired with [`lambda_desc`](Self::lambda_desc)`(k)`.
    pub fn vector_desc(&self, k: usize) -> DVector<f64> {
        assert!(k >= 1 && k <= self.n(), "descending index {k} out of range");
        self.eigenvectors.column(self.n() - k).into_owned()
    }
}

pub fn spectrum(matrix: &WignerLevyMatrix) -> Result<SpectralData> {
    spectrum_with(matrix, default_eigensolver())
}

pub fn spectrum_with(matrix: &WignerLevyMatrix, solver: &dyn SymmetricEigensolver) -> Result<SpectralData> {
    let pairs = solver.eigh(&matrix.scaled()).map_err(|e| matrix.tag_error(e))?;
    SpectralData::from_pairs(pairs)
}

/// Eigenvalues of `A`, ascending, without vectors.
pub fn eigenvalues(matrix: &WignerLevyMatrix, solver: &dyn SymmetricEigensolver) -> Result<Vec<f64>> {
    solver.eigenvalues(&matrix.scaled()).map_err(|e| matrix.tag_error(e))
}

/// Eigenpairs of `A` with eigenvalue in `[lo, hi]`.
pub fn spectrum_window(
    matrix: &WignerLevyMatrix,
    lo: f64,
    hi: f64,
    solver: &dyn SymmetricEigensolver,
) -> Result<EigenPairs> {
    solver.eigh_window(&matrix.scaled(), lo, hi).map_err(|e| matrix.tag_error(e))
}

/// `N_I = |{k : λ_k ∈ [a, b]}|` for ascending eigenvalues.
pub fn interval_count(eigenvalues: &[f64], a: f64, b: f64) -> Result<usize> {
    if a > b || a.is_nan() || b.is_nan() {
        return Err(LabError::domain(format!("interval [{a}, {b}] is not ordered")));
    }
    let lo = eigenvalues.partition_point(|&x| x < a);
    let hi = eigenvalues.partition_point(|&x| x <= b);
    Ok(hi - lo)
}

fn check_upper(z: Complex64) -> Result<()> {
    if z.im > 0.0 && z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(LabError::domain(format!("need Im z > 0, got z = {z}")))
    }
}

/// `g_{μ_A}(z) = (1/n) Σ (λ_i − z)^{-1}`.
pub fn stieltjes(eigenvalues: &[f64], z: Complex64) -> Result<Complex64> {
    check_upper(z)?;
    let s: Complex64 = eigenvalues.iter().map(|&l| 1.0 / (l - z)).sum();
    Ok(s / eigenvalues.len() as f64)
}

/// Diagonal of the resolvent `R(z) = (A − z)^{-1}`.
pub fn resolvent_diag(spec: &SpectralData, z: Complex64) -> Result<Vec<Complex64>> {
    check_upper(z)?;
    let n = spec.n();
    let v = spec.eigenvectors();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for (i, &l) in spec.eigenvalues().iter().enumerate() {
        let w = 1.0 / (l - z);
        for (k, &x) in v.column(i).iter().enumerate() {
            out[k] += w * (x * x);
        }
    }
    Ok(out)
}

/// `tr R R* = Σ_j |λ_j − z|^{-2}`.
pub fn trace_resolvent_square(eigenvalues: &[f64], z: Complex64) -> Result<f64> {
    check_upper(z)?;
    Ok(eigenvalues.iter().map(|&l| 1.0 / (l - z).norm_sqr()).sum())
}

/// `Γ(1−κ) (1/n) Σ_k ((−i R_kk) . u)^κ`; the `Γ` factor is dropped at `κ = 1`.
pub fn empirical_frac_moment(spec: &SpectralData, z: Complex64, u: Complex64, kappa: f64) -> Result<Complex64> {
    let r = resolvent_diag(spec, z)?;
    frac_moment_of(&r, u, kappa)
}

/// Same statistic from precomputed resolvent diagonals (or any sample of `R`).
pub fn frac_moment_of(r: &[Complex64], u: Complex64, kappa: f64) -> Result<Complex64> {
    let u = quarter_circle(u)?;
    check_kappa(kappa)?;
    if r.is_empty() {
        return Err(LabError::Usage("fractional moment of an empty sample".into()));
    }
    let s: Complex64 = r.iter().map(|&x| bilinear(-Complex64::i() * x, u).powf(kappa)).sum();
    Ok(s / r.len() as f64 * frac_prefactor(kappa))
}

pub fn frac_prefactor(kappa: f64) -> f64 {
    if kappa == 1.0 {
        1.0
    } else {
        gamma(1.0 - kappa)
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 && kappa <= 1.0 {
        Ok(())
    } else {
        Err(LabError::param(format!("kappa must lie in (0,1], got {kappa}")))
    }
}

/// `(1/n) Σ_k (Im R_kk(z))^κ`.
pub fn frac_moment_imag(spec: &SpectralData, z: Complex64, kappa: f64) -> Result<f64> {
    check_kappa(kappa)?;
    let r = resolvent_diag(spec, z)?;
    Ok(r.iter().map(|x| x.im.max(0.0).powf(kappa)).sum::<f64>() / r.len() as f64)
}

/// `W_I(i) = (n / |Λ_I|) Σ_{v ∈ Λ_I} v_i²` from the eigenvectors of one window.
pub fn localization_weights(window: &EigenPairs) -> Option<Vec<f64>> {
    let m = window.vectors.ncols();
    if m == 0 {
        return None;
    }
    let n = window.vectors.nrows();
    let scale = n as f64 / m as f64;
    Some(
        window
            .vectors
            .row_iter()
            .map(|row| scale * row.iter().map(|x| x * x).sum::<f64>())
            .collect(),
    )
}

/// `A` with row and column `k` removed.
pub fn principal_minor(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    a.clone().remove_row(k).remove_column(k)
}

/// Spectrum of the minor `A^{(k)}`.
#[derive(Debug, Clone)]
pub struct MinorSpectrum {
    pub k: usize,
    pub pairs: EigenPairs,
}

/// Full spectra of the minors `A^{(k)}` for the requested `k` (parallel over `k`).
pub fn minor_spectra(
    matrix: &WignerLevyMatrix,
    ks: &[usize],
    solver: &dyn SymmetricEigensolver,
) -> Result<Vec<MinorSpectrum>> {
    let a = matrix.scaled();
    if let Some(&bad) = ks.iter().find(|&&k| k >= matrix.n()) {
        return Err(LabError::param(format!("minor index {bad} out of range")));
    }
    ks.par_iter()
        .map(|&k| {
            let pairs = solver.eigh(&principal_minor(&a, k)).map_err(|e| matrix.tag_error(e))?;
            Ok(MinorSpectrum { k, pairs })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EsyBound {
    /// `4η² a_n² (n/m) Σ_k dist_k^{-2}` over the `m` supplied minors.
    pub bound: f64,
    pub minors_used: usize,
    /// Minors with no eigenvalue in `I`; each makes the bound infinite.
    pub empty_minors: usize,
}

/// The geometric counting bound on `N_I` for `I = [E − η, E + η]`.
///
/// With a subset of minors the sum is rescaled by `n / m`, which gives an
/// unbiased estimate of the full bound rather than a bound.
pub fn esy_counting_bound(matrix: &WignerLevyMatrix, minors: &[MinorSpectrum], e: f64, eta: f64) -> Result<EsyBound> {
    if !(eta > 0.0) {
        return Err(LabError::param(format!("eta must be positive, got {eta}")));
    }
    if minors.is_empty() {
        return Err(LabError::param("no minor spectra supplied"));
    }
    let mut sum = 0.0;
    let mut empty = 0;
    for m in minors {
        let x = matrix.row_without_diagonal(m.k);
        let mut dist2 = 0.0;
        let mut inside = 0;
        for (i, &l) in m.pairs.values.iter().enumerate() {
            if (l - e).abs() <= eta {
                inside += 1;
                dist2 += m.pairs.vectors.column(i).dot(&x).powi(2);
            }
        }
        if inside == 0 {
            empty += 1;
            sum = f64::INFINITY;
        } else if dist2 == 0.0 {
            return Err(LabError::Numerical {
                message: format!("row {} is orthogonal to every eigenvector in the window", m.k),
                seed: Some(matrix.seed()),
            });
        } else {
            sum += 1.0 / dist2;
        }
    }
    let scale = matrix.n() as f64 / minors.len() as f64;
    let an = matrix.a_n();
    Ok(EsyBound {
        bound: 4.0 * eta * eta * an * an * scale * sum,
        minors_used: minors.len(),
        empty_minors: empty,
    })
}

/// Archive eigenvalues as CSV: `seed,index,value,hex`.
pub fn write_eigenvalues_csv<W: Write>(mut w: W, seed: u64, eigenvalues: &[f64]) -> Result<()> {
    writeln!(w, "seed,index,value,hex")?;
    for (k, &l) in eigenvalues.iter().enumerate() {
        writeln!(w, "{seed},{k},{},{}", decimal17(l), hexfloat(l))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::unit;
    use crate::linalg::NalgebraQr;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn build_is_symmetric_and_deterministic() {
        let m = build_matrix(2, 1.3, 5).unwrap();
        assert_eq!(m.entries()[(0, 1)], m.entries()[(1, 0)]);
        let a = build_matrix(30, 0.7, 9).unwrap();
        let b = build_matrix(30, 0.7, 9).unwrap();
        assert_eq!(a.entries(), b.entries());
        assert!(build_matrix(1, 1.0, 0).is_err());
        assert!(build_matrix(5, 2.0, 0).is_err());
    }

    #[test]
    fn row_maximum_is_frechet() {
        // P(max_j |A_1j| ≤ s) → exp(−s^{−α}) under the tail normalization
        let (n, alpha, s) = (300, 1.5, 1.0);
        let trials = 400;
        let hits = (0..trials)
            .filter(|&seed| {
                let m = build_matrix(n, alpha, seed).unwrap();
                let a = m.scaled();
                a.row(0).iter().all(|x| x.abs() <= s)
            })
            .count() as f64;
        let p = (-(s as f64).powf(-alpha)).exp();
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((hits / trials as f64 - p).abs() < 4.0 * se, "{} vs {p}", hits / trials as f64);
    }

    #[test]
    fn two_by_two_closed_form() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let m = WignerLevyMatrix::from_entries(x, 1.0, 0).unwrap();
        let s = spectrum(&m).unwrap();
        assert!((s.eigenvalues()[0] + 0.5).abs() < 1e-15);
        assert!((s.lambda_desc(1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn spectral_invariants() {
        let m = build_matrix(120, 1.5, 3).unwrap();
        let a = m.scaled();
        for solver in [&crate::linalg::Lapack as &dyn SymmetricEigensolver, &NalgebraQr] {
            let s = spectrum_with(&m, solver).unwrap();
            let v = s.eigenvectors();
            let orth = (v.transpose() * v - DMatrix::identity(120, 120)).norm();
            assert!(orth < 1e-8, "{}: {orth}", solver.name());
            let anorm = a.norm();
            for k in 0..120 {
                let r = (&a * v.column(k) - v.column(k) * s.eigenvalues()[k]).norm();
                assert!(r < 1e-6 * anorm);
            }
            let tr: f64 = s.eigenvalues().iter().sum();
            assert!((tr - a.trace()).abs() < 1e-8 * 120.0 * anorm);
        }
    }

    #[test]
    fn interval_counts() {
        let e = [-1.0, 0.0, 0.5, 0.5, 2.0];
        assert_eq!(interval_count(&e, -1.0, 2.0).unwrap(), 5);
        assert_eq!(interval_count(&e, 0.25, 0.25).unwrap(), 0);
        assert_eq!(interval_count(&e, 0.5, 0.5).unwrap(), 2);
        assert!(interval_count(&e, 1.0, 0.0).is_err());
    }

    #[test]
    fn resolvent_identities() {
        let m = build_matrix(80, 1.1, 4).unwrap();
        let s = spectrum(&m).unwrap();
        let z = Complex64::new(0.4, 0.05);
        let r = resolvent_diag(&s, z).unwrap();
        for x in &r {
            assert!(x.im > 0.0 && x.norm() <= 1.0 / z.im);
        }
        let g = stieltjes(s.eigenvalues(), z).unwrap();
        let mean: Complex64 = r.iter().sum::<Complex64>() / 80.0;
        assert!((g - mean).norm() < 1e-10);
        let t = trace_resolvent_square(s.eigenvalues(), z).unwrap();
        assert!((t - 80.0 * g.im / z.im).abs() < 1e-10 * t);
        assert!(resolvent_diag(&s, Complex64::new(1.0, 0.0)).is_err());
        // a single eigenvalue at distance η
        let t1 = trace_resolvent_square(&[0.3], Complex64::new(0.3, 0.2)).unwrap();
        assert!((t1 - 25.0).abs() < 1e-12);
    }

    #[test]
    fn frac_moment_identities() {
        let m = build_matrix(60, 0.9, 8).unwrap();
        let s = spectrum(&m).unwrap();
        let z = Complex64::new(1.0, 0.1);
        let kappa = 0.45;
        let diag = empirical_frac_moment(&s, z, unit(FRAC_PI_4), kappa).unwrap();
        let imag = frac_moment_imag(&s, z, kappa).unwrap();
        let expect = 2f64.sqrt().powf(kappa) * gamma(1.0 - kappa) * imag;
        assert!((diag.re - expect).abs() < 1e-10 * expect && diag.im.abs() < 1e-12);

        let lin = empirical_frac_moment(&s, z, Complex64::new(1.0, 0.0), 1.0).unwrap();
        let g = stieltjes(s.eigenvalues(), z).unwrap();
        assert!((lin - (-Complex64::i() * g)).norm() < 1e-10);
        assert!((frac_moment_imag(&s, z, 1.0).unwrap() - g.im).abs() < 1e-10);
        assert!(empirical_frac_moment(&s, z, Complex64::new(-1.0, 0.0), 0.5).is_err());
    }

    #[test]
    fn localization_weights_average_to_one() {
        let m = build_matrix(100, 0.6, 2).unwrap();
        let w = spectrum_window(&m, -0.5, 0.5, default_eigensolver()).unwrap();
        let weights = localization_weights(&w).unwrap();
        let mean: f64 = weights.iter().sum::<f64>() / 100.0;
        assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn esy_bound_dominates_count() {
        let m = build_matrix(60, 0.8, 21).unwrap();
        let s = spectrum(&m).unwrap();
        let ks: Vec<usize> = (0..60).collect();
        let minors = minor_spectra(&m, &ks, default_eigensolver()).unwrap();
        for (e, eta) in [(0.0, 0.3), (1.0, 0.1), (-0.5, 0.5)] {
            let n_i = interval_count(s.eigenvalues(), e - eta, e + eta).unwrap();
            let b = esy_counting_bound(&m, &minors, e, eta).unwrap();
            assert!(b.bound >= n_i as f64 * (1.0 - 1e-6), "{b:?} < {n_i}");
            for mk in &minors {
                let nk = interval_count(&mk.pairs.values, e - eta, e + eta).unwrap();
                assert!((n_i as i64 - nk as i64).abs() <= 1);
            }
        }
    }

    #[test]
    fn csv_dump() {
        let mut buf = Vec::new();
        write_eigenvalues_csv(&mut buf, 7, &[1.5, -0.25]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "7,0,1.5000000000000000e0,0x1.8p+0");
    }
}
