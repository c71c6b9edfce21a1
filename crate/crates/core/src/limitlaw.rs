//! The limiting spectral law `μ_α` through the fixed point `y = φ_{α,z}(y)`,
//! `g_{μ_α}(z) = i ψ_{α,z}(y)`.
//!
//! With `h = α/2` and `c = Γ(1 − h)`,
//!
//! ```text
//! φ(x) = Γ(h)^{-1} ∫_0^∞ t^{h-1} e^{itz} e^{-c t^h x} dt,   ψ(x) = ∫_0^∞ e^{itz} e^{-c t^h x} dt.
//! ```
//!
//! Both integrands are analytic in `t` off the negative axis, so the default
//! quadrature integrates along a rotated ray `t = s e^{iθ}` chosen so that the
//! oscillating factor `e^{itz}` decays as well. This keeps the cost flat as
//! `Im z → 0`, and on the real axis itself (`z ≠ 0`).

use num_complex::Complex64;
use serde::Serialize;
use statrs::function::gamma::gamma;
use std::cell::Cell;
use std::f64::consts::{FRAC_PI_2, PI};

use crate::cone::{in_cone, ConeValue, CONE_SLACK};
use crate::error::{check_alpha, LabError, Result};
use crate::quad::{integrate, integrate_semi_infinite, QuadOptions};
use crate::stats::linear_fit;

/// `φ`, `ψ` and their derivatives in `x` at one point.
#[derive(Debug, Clone, Copy)]
pub struct Transforms {
    pub phi: Complex64,
    pub dphi: Complex64,
    pub psi: Complex64,
    pub dpsi: Complex64,
    pub error: f64,
}

/// A way of evaluating the `φ`/`ψ` integrals.
pub trait TransformQuadrature: Send + Sync {
    fn name(&self) -> &'static str;
    fn evaluate(&self, alpha: f64, z: Complex64, x: Complex64, opts: QuadOptions) -> Result<Transforms>;
}

/// Integrate along the ray `arg t = θ` (see module docs).
#[derive(Debug, Default, Clone, Copy)]
pub struct RotatedContour;

/// Integrate along the positive real axis; needs `Im z > 0` and slows down as
/// `Im z → 0`. Kept as an independent check of [`RotatedContour`].
#[derive(Debug, Default, Clone, Copy)]
pub struct RealAxis;

pub const QUADRATURES: &[&str] = &["rotated", "real-axis"];

pub fn transform_quadrature(name: &str) -> Result<Box<dyn TransformQuadrature>> {
    match name {
        "rotated" => Ok(Box::new(RotatedContour)),
        "real-axis" => Ok(Box::new(RealAxis)),
        other => Err(LabError::param(format!(
            "unknown quadrature '{other}' (available: {})",
            QUADRATURES.join(", ")
        ))),
    }
}

/// Ray angle: `e^{itz}` must decay (`θ + arg z ∈ (0, π)`) and `t^h x` must keep
/// a nonnegative real part (`|hθ + arg x| ≤ π/2`).
fn ray_angle(alpha: f64, z: Complex64, x: Complex64) -> Result<f64> {
    if z.im < 0.0 || z.norm() == 0.0 {
        return Err(LabError::domain(format!("need Im z >= 0 and z != 0, got {z}")));
    }
    let h = alpha / 2.0;
    let a = z.arg();
    let ax = if x.norm() == 0.0 { 0.0 } else { x.arg() };
    let lo = (-a).max((-FRAC_PI_2 - ax) / h);
    let hi = (PI - a).min((FRAC_PI_2 - ax) / h);
    if !(hi > lo) {
        return Err(LabError::domain(format!("no admissible contour for z = {z}, x = {x}")));
    }
    let margin = 0.1 * (hi - lo);
    Ok((FRAC_PI_2 - a).clamp(lo + margin, hi - margin))
}

fn evaluate_on_ray(alpha: f64, z: Complex64, x: Complex64, theta: f64, opts: QuadOptions) -> Result<Transforms> {
    let h = alpha / 2.0;
    let c = gamma(1.0 - h);
    let omega = Complex64::from_polar(1.0, theta);
    let omega_h = Complex64::from_polar(1.0, h * theta);
    let iwz = Complex64::i() * omega * z;
    let cwx = c * omega_h * x;
    let d1 = -iwz.re;
    let d2 = cwx.re;
    if !(d1 > 0.0 || d2 > 0.0) {
        return Err(LabError::domain(format!("integrand does not decay at z = {z}, x = {x}")));
    }
    let mut scale = f64::INFINITY;
    if d1 > 0.0 {
        scale = scale.min(d1.powf(-h));
    }
    if d2 > 0.0 {
        scale = scale.min(1.0 / d2);
    }
    let inv_h = 1.0 / h;
    // t = v^{1/h} along the ray
    let r = integrate_semi_infinite(
        |v: f64| {
            if v == 0.0 {
                let e = Complex64::new(1.0, 0.0);
                let jac = if inv_h == 1.0 { 1.0 } else { 0.0 };
                return [e, Complex64::new(0.0, 0.0), e * jac, Complex64::new(0.0, 0.0)];
            }
            let s = v.powf(inv_h);
            let e = (iwz * s - cwx * v).exp();
            let de = -c * omega_h * v * e;
            let jac = s / v;
            [e, de, e * jac, de * jac]
        },
        scale,
        opts,
    )?;
    let pre_phi = omega_h / gamma(h + 1.0);
    let pre_psi = omega * inv_h;
    Ok(Transforms {
        phi: pre_phi * r.value[0],
        dphi: pre_phi * r.value[1],
        psi: pre_psi * r.value[2],
        dpsi: pre_psi * r.value[3],
        error: r.error * pre_phi.norm().max(pre_psi.norm()),
    })
}

impl TransformQuadrature for RotatedContour {
    fn name(&self) -> &'static str {
        "rotated"
    }

    fn evaluate(&self, alpha: f64, z: Complex64, x: Complex64, opts: QuadOptions) -> Result<Transforms> {
        let theta = ray_angle(alpha, z, x)?;
        evaluate_on_ray(alpha, z, x, theta, opts)
    }
}

impl TransformQuadrature for RealAxis {
    fn name(&self) -> &'static str {
        "real-axis"
    }

    fn evaluate(&self, alpha: f64, z: Complex64, x: Complex64, opts: QuadOptions) -> Result<Transforms> {
        if !(z.im > 0.0) {
            return Err(LabError::domain(format!("real-axis quadrature needs Im z > 0, got {z}")));
        }
        evaluate_on_ray(alpha, z, x, 0.0, opts)
    }
}

fn check_x(alpha: f64, x: &ConeValue) -> Result<()> {
    if (x.cone_index - alpha / 2.0).abs() > 1e-15 || !x.contains_self() {
        return Err(LabError::domain(format!("x must lie in K_{}", alpha / 2.0)));
    }
    Ok(())
}

/// `φ_{α,z}(x)` with the default quadrature.
pub fn phi(alpha: f64, z: Complex64, x: ConeValue) -> Result<ConeValue> {
    check_alpha(alpha)?;
    check_x(alpha, &x)?;
    let t = RotatedContour.evaluate(alpha, z, x.value, QuadOptions::default())?;
    ConeValue::new(t.phi, alpha / 2.0)
}

/// `ψ_{α,z}(x)`, a value in `K_1`.
pub fn psi(alpha: f64, z: Complex64, x: ConeValue) -> Result<ConeValue> {
    check_alpha(alpha)?;
    check_x(alpha, &x)?;
    let t = RotatedContour.evaluate(alpha, z, x.value, QuadOptions::default())?;
    ConeValue::new(t.psi, 1.0)
}

/// Solved fixed point at one `z`.
#[derive(Debug, Clone, Serialize)]
pub struct LimitPoint {
    pub z: Complex64,
    pub y: ConeValue,
    pub g: Complex64,
    pub residual: f64,
    pub path_length: usize,
    /// Newton's Jacobian `1 − φ'(y)` nearly vanished or continuation needed
    /// repeated step refinement: `z` may be close to an exceptional point.
    pub suspected_exceptional: bool,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Target for `|y − φ(y)|`.
    pub tol: f64,
    /// Largest accepted residual.
    pub accept: f64,
    pub max_picard: usize,
    pub max_newton: usize,
    /// Geometric continuation factor: `η ← η (1 − τ)`.
    pub tau: f64,
    pub min_tau: f64,
    pub quad: QuadOptions,
    pub quadrature: String,
    /// Overrides the detected contraction threshold.
    pub e0: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-12,
            accept: 1e-9,
            max_picard: 10_000,
            max_newton: 60,
            tau: 0.25,
            min_tau: 1e-4,
            quad: QuadOptions::default(),
            quadrature: "rotated".into(),
            e0: None,
        }
    }
}

pub struct LimitLawSolver {
    alpha: f64,
    opts: SolverOptions,
    quad: Box<dyn TransformQuadrature>,
    e0: Cell<Option<f64>>,
}

impl std::fmt::Debug for LimitLawSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LimitLawSolver")
            .field("alpha", &self.alpha)
            .field("quadrature", &self.quad.name())
            .field("e0", &self.e0.get())
            .finish()
    }
}

struct Newton {
    y: Complex64,
    residual: f64,
    jacobian: f64,
    t: Transforms,
}

impl LimitLawSolver {
    pub fn new(alpha: f64, opts: SolverOptions) -> Result<Self> {
        check_alpha(alpha)?;
        let quad = transform_quadrature(&opts.quadrature)?;
        let e0 = Cell::new(opts.e0);
        Ok(LimitLawSolver { alpha, opts, quad, e0 })
    }

    pub fn with_defaults(alpha: f64) -> Result<Self> {
        Self::new(alpha, SolverOptions::default())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn transforms(&self, z: Complex64, x: Complex64) -> Result<Transforms> {
        self.quad.evaluate(self.alpha, z, x, self.opts.quad)
    }

    /// Picard start `φ(0) = (−iz)^{−α/2}`.
    pub fn initial_guess(&self, z: Complex64) -> Complex64 {
        (-Complex64::i() * z).powf(-self.alpha / 2.0)
    }

    /// Smallest `r` on the ray `z = i r` (over a doubling grid) from which on
    /// the Picard map contracts with factor below 0.9 over 20 iterations.
    pub fn contraction_threshold(&self) -> Result<f64> {
        if let Some(e0) = self.e0.get() {
            return Ok(e0);
        }
        let grid: Vec<f64> = (0..12).map(|k| 0.125 * 2f64.powi(k)).collect();
        let mut threshold = None;
        for &r in grid.iter().rev() {
            if self.picard_factor(Complex64::new(0.0, r))? < 0.9 {
                threshold = Some(r);
            } else {
                break;
            }
        }
        let e0 = threshold.ok_or_else(|| LabError::Convergence {
            message: "Picard map does not contract anywhere on the test ray".into(),
            iterations: 20,
        })?;
        self.e0.set(Some(e0));
        Ok(e0)
    }

    fn picard_factor(&self, z: Complex64) -> Result<f64> {
        let mut y = self.initial_guess(z);
        let mut steps = Vec::with_capacity(20);
        for _ in 0..20 {
            let next = self.transforms(z, y)?.phi;
            steps.push((next - y).norm());
            y = next;
            if steps.last() == Some(&0.0) {
                return Ok(0.0);
            }
        }
        let first = steps[0].max(f64::MIN_POSITIVE);
        Ok((steps[19] / first).powf(1.0 / 19.0))
    }

    fn newton(&self, z: Complex64, start: Complex64) -> Result<Newton> {
        let h = self.alpha / 2.0;
        let mut y = start;
        let mut t = self.transforms(z, y)?;
        let mut res = (y - t.phi).norm();
        let mut jac = (1.0 - t.dphi).norm();
        for _ in 0..self.opts.max_newton {
            if res <= self.opts.tol * y.norm().max(1.0) {
                break;
            }
            let step = (y - t.phi) / (1.0 - t.dphi);
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let cand = y - step * lambda;
                if in_cone(cand, h, CONE_SLACK) {
                    if let Ok(tc) = self.transforms(z, cand) {
                        let rc = (cand - tc.phi).norm();
                        if rc < res {
                            y = cand;
                            t = tc;
                            res = rc;
                            jac = (1.0 - t.dphi).norm();
                            accepted = true;
                            break;
                        }
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Ok(Newton { y, residual: res, jacobian: jac, t })
    }

    fn picard(&self, z: Complex64) -> Result<Complex64> {
        let mut y = self.initial_guess(z);
        let mut last = f64::INFINITY;
        let mut stagnant = 0;
        for it in 0..self.opts.max_picard {
            let next = self.transforms(z, y)?.phi;
            let d = (next - y).norm();
            y = next;
            if d < 1e-8 * y.norm().max(1.0) {
                return Ok(y);
            }
            if d >= last {
                stagnant += 1;
                if stagnant > 50 {
                    return Err(LabError::Convergence {
                        message: format!("Picard iteration at z = {z} stopped contracting (last step {d:.3e})"),
                        iterations: it + 1,
                    });
                }
            }
            last = d;
        }
        Err(LabError::Convergence {
            message: format!("Picard iteration at z = {z} did not settle"),
            iterations: self.opts.max_picard,
        })
    }

    fn finish(&self, z: Complex64, n: Newton, path: usize, flagged: bool) -> Result<LimitPoint> {
        if !(n.residual <= self.opts.accept) {
            return Err(LabError::Convergence {
                message: format!("fixed point at z = {z} has residual {:.3e} (last iterate {})", n.residual, n.y),
                iterations: path,
            });
        }
        let y = ConeValue::new(n.y, self.alpha / 2.0)?;
        Ok(LimitPoint {
            z,
            y,
            g: Complex64::i() * n.t.psi,
            residual: n.residual,
            path_length: path,
            suspected_exceptional: flagged || n.jacobian < 1e-6,
        })
    }

    /// Newton from a caller-supplied start; no continuation.
    pub fn solve_from(&self, z: Complex64, start: Complex64) -> Result<LimitPoint> {
        let n = self.newton(z, start)?;
        self.finish(z, n, 1, false)
    }

    /// Full solve: Picard where the map contracts, otherwise continuation
    /// downward in `Im z` from `Re z + i(E₀ + 1)`.
    pub fn solve(&self, z: Complex64) -> Result<LimitPoint> {
        if z.im < 0.0 {
            return Err(LabError::domain(format!("need Im z >= 0, got {z}")));
        }
        let e0 = self.contraction_threshold()?;
        if z.im >= e0 {
            let y = self.picard(z)?;
            let n = self.newton(z, y)?;
            return self.finish(z, n, 1, false);
        }
        let top = Complex64::new(z.re, e0 + 1.0);
        let y = self.picard(top)?;
        let start = self.newton(top, y)?;
        self.continue_to(top, start.y, z)
    }

    /// Continue a solution known at `from` (with `y`) down to `to`, which must
    /// have the same real part and smaller imaginary part.
    pub fn continue_to(&self, from: Complex64, y: Complex64, to: Complex64) -> Result<LimitPoint> {
        let mut eta = from.im;
        let mut y = y;
        let mut tau = self.opts.tau;
        let mut path = 1;
        let mut refinements = 0;
        let target = to.im;
        let mut last: Option<Newton> = None;
        while eta > target || last.is_none() {
            // geometric steps; the last hop to the real axis is taken from 1e-6
            let proposal = eta * (1.0 - tau);
            let next = if proposal <= target || proposal < 1e-6 { target } else { proposal };
            let z = Complex64::new(to.re, next);
            let attempt = self.newton(z, y);
            match attempt {
                Ok(n) if n.residual <= self.opts.accept && n.residual.is_finite() => {
                    y = n.y;
                    eta = next;
                    path += 1;
                    last = Some(n);
                    tau = (tau * 1.5).min(self.opts.tau);
                }
                _ => {
                    refinements += 1;
                    tau *= 0.5;
                    if tau < self.opts.min_tau {
                        return Err(LabError::Convergence {
                            message: format!(
                                "continuation toward {to} stalled at Im z = {eta:.3e}; suspected exceptional point"
                            ),
                            iterations: path,
                        });
                    }
                }
            }
        }
        let n = last.expect("at least one level solved");
        self.finish(to, n, path, refinements >= 8)
    }

    /// Solve at `E + iη` for each `η` of a decreasing sequence, continuing
    /// from one level to the next.
    pub fn solve_path(&self, e: f64, etas: &[f64]) -> Result<Vec<LimitPoint>> {
        if etas.windows(2).any(|w| w[1] >= w[0]) || etas.iter().any(|&x| x < 0.0) {
            return Err(LabError::param("eta sequence must be strictly decreasing and nonnegative"));
        }
        let mut out: Vec<LimitPoint> = Vec::with_capacity(etas.len());
        for &eta in etas {
            let z = Complex64::new(e, eta);
            let p = match out.last() {
                Some(prev) => self.continue_to(prev.z, prev.y.value, z)?,
                None => self.solve(z)?,
            };
            out.push(p);
        }
        Ok(out)
    }

    /// `f_α(E)` directly on the real axis (`E ≠ 0`), by continuation to `η = 0`.
    pub fn density_on_axis(&self, e: f64) -> Result<f64> {
        if e == 0.0 {
            return Err(LabError::domain("the rotated contour needs E != 0 on the real axis"));
        }
        let p = self.solve(Complex64::new(e, 0.0))?;
        Ok((p.g.im / PI).max(0.0))
    }
}

/// `(1/π) Im g` along an `η` sequence and its linear extrapolation to `η = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct DensityEstimate {
    pub e: f64,
    pub etas: Vec<f64>,
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub extrapolated: f64,
    /// Slope of the linear fit in `η`.
    pub slope: f64,
    /// The last three values are not monotone in `η`.
    pub non_monotone: bool,
    pub suspected_exceptional: bool,
}

pub fn limit_density(alpha: f64, e: f64, etas: &[f64]) -> Result<DensityEstimate> {
    limit_density_with(&LimitLawSolver::with_defaults(alpha)?, e, etas)
}

pub fn limit_density_with(solver: &LimitLawSolver, e: f64, etas: &[f64]) -> Result<DensityEstimate> {
    if etas.is_empty() {
        return Err(LabError::param("empty eta sequence"));
    }
    if *etas.last().unwrap() < 1e-4 {
        return Err(LabError::param("smallest eta must be at least 1e-4"));
    }
    let points = solver.solve_path(e, etas)?;
    let values: Vec<f64> = points.iter().map(|p| p.g.im / PI).collect();
    let residuals = points.iter().map(|p| p.residual).collect();
    let k = values.len().min(3);
    let tail_eta = &etas[etas.len() - k..];
    let tail_val = &values[values.len() - k..];
    let (slope, intercept) = if k >= 2 {
        linear_fit(tail_eta, tail_val)
    } else {
        (0.0, tail_val[0])
    };
    let non_monotone = k == 3 && (tail_val[1] - tail_val[0]) * (tail_val[2] - tail_val[1]) < 0.0;
    Ok(DensityEstimate {
        e,
        etas: etas.to_vec(),
        values,
        residuals,
        extrapolated: intercept.max(0.0),
        slope,
        non_monotone,
        suspected_exceptional: points.iter().any(|p| p.suspected_exceptional),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct IntervalMass {
    pub a: f64,
    pub b: f64,
    pub eta: f64,
    pub mass: f64,
    /// `(L/π) (4η/π) (1 + log(1 + |I|/η))` with `L = sup Im g` on the nodes.
    pub error_bound: f64,
    pub quadrature_error: f64,
}

/// `μ_α([a,b]) ≈ (1/π) ∫_a^b Im g(E + iη) dE`.
pub fn interval_mass_from_stieltjes(alpha: f64, a: f64, b: f64, eta: f64) -> Result<IntervalMass> {
    interval_mass_with(&LimitLawSolver::with_defaults(alpha)?, a, b, eta)
}

pub fn interval_mass_with(solver: &LimitLawSolver, a: f64, b: f64, eta: f64) -> Result<IntervalMass> {
    if !(b > a) || !(eta > 0.0) {
        return Err(LabError::param(format!("need a < b and eta > 0, got [{a}, {b}], eta {eta}")));
    }
    if b - a < eta {
        return Err(LabError::param("interval shorter than eta"));
    }
    let walker = LineWalker::new(solver, eta);
    let (total, qerr) = walker.integrate_im_g(a, b, QuadOptions::with_rel_tol(1e-8))?;
    let len = b - a;
    let l = walker.sup_im_g();
    Ok(IntervalMass {
        a,
        b,
        eta,
        mass: total / PI,
        error_bound: l / PI * (4.0 * eta / PI) * (1.0 + (1.0 + len / eta).ln()),
        quadrature_error: qerr / PI,
    })
}

/// `∫_a^b f_α(E) dE` evaluated on the real axis. An interval straddling 0 is
/// split there so that `E = 0` itself is never sampled.
pub fn axis_mass(solver: &LimitLawSolver, a: f64, b: f64, opts: QuadOptions) -> Result<(f64, f64)> {
    if a < 0.0 && b > 0.0 {
        let (l, el) = axis_mass(solver, a, 0.0, opts)?;
        let (r, er) = axis_mass(solver, 0.0, b, opts)?;
        return Ok((l + r, el + er));
    }
    let walker = LineWalker::new(solver, 0.0);
    let (v, err) = walker.integrate_im_g(a, b, opts)?;
    Ok((v / PI, err / PI))
}

/// Solves along the horizontal line `Im z = η`, warm-starting Newton from the
/// nearest point already solved.
pub struct LineWalker<'a> {
    solver: &'a LimitLawSolver,
    eta: f64,
    known: std::cell::RefCell<Vec<(f64, Complex64)>>,
    sup: Cell<f64>,
}

impl<'a> LineWalker<'a> {
    pub fn new(solver: &'a LimitLawSolver, eta: f64) -> Self {
        LineWalker { solver, eta, known: Default::default(), sup: Cell::new(0.0) }
    }

    pub fn solve(&self, e: f64) -> Result<LimitPoint> {
        let z = Complex64::new(e, self.eta);
        let near = {
            let known = self.known.borrow();
            let i = known.partition_point(|&(x, _)| x < e);
            let mut best: Option<(f64, Complex64)> = None;
            for j in [i.wrapping_sub(1), i] {
                if let Some(&(x, y)) = known.get(j) {
                    if best.map_or(true, |(bx, _)| (x - e).abs() < (bx - e).abs()) {
                        best = Some((x, y));
                    }
                }
            }
            best
        };
        let reach = 0.1 * e.abs().max(1.0);
        let warm = near
            .filter(|&(x, _)| (x - e).abs() <= reach && x.signum() == e.signum())
            .and_then(|(_, y)| self.solver.solve_from(z, y).ok());
        let p = match warm {
            Some(p) => p,
            None => self.solver.solve(z)?,
        };
        let mut known = self.known.borrow_mut();
        let i = known.partition_point(|&(x, _)| x < e);
        known.insert(i, (e, p.y.value));
        self.sup.set(self.sup.get().max(p.g.im));
        Ok(p)
    }

    pub fn sup_im_g(&self) -> f64 {
        self.sup.get()
    }

    /// `∫_a^b Im g(E + iη) dE` and the quadrature error estimate.
    pub fn integrate_im_g(&self, a: f64, b: f64, opts: QuadOptions) -> Result<(f64, f64)> {
        let failure: std::cell::RefCell<Option<LabError>> = Default::default();
        let r = integrate(
            |e| match self.solve(e) {
                Ok(p) => [Complex64::new(p.g.im, 0.0)],
                Err(err) => {
                    failure.borrow_mut().get_or_insert(err);
                    [Complex64::new(0.0, 0.0)]
                }
            },
            a,
            b,
            opts,
        );
        if let Some(err) = failure.into_inner() {
            return Err(err);
        }
        let r = r?;
        Ok((r.value[0].re, r.error))
    }
}
