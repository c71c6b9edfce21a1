//! Desk-scale experiments comparing sampled matrices against the limit law
//! and the population-dynamics solution, behind a name registry.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::BTreeMap;

use crate::ensemble::{
    build_matrix, eigenvalues, frac_moment_imag, interval_count, localization_weights, minor_spectra,
    spectrum_window, SpectralData,
};
use crate::error::{check_alpha, LabError, Result};
use crate::limitlaw::{axis_mass, LimitLawSolver};
use crate::linalg::default_eigensolver;
use crate::quad::QuadOptions;
use crate::rde::{run_pool, PoolConfig};
use crate::rng::{derive_seed, rng_from_seed, tag};
use crate::stats::{ks_critical, ks_two_sample, log_log_slope, quantile, Estimate};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Local-law exponent `ρ` and Wegner exponent `γ = (1/2 + 1/α)^{-1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoGamma {
    pub alpha: f64,
    pub rho: f64,
    pub gamma_exp: f64,
}

pub fn rho_of_alpha(alpha: f64) -> Result<RhoGamma> {
    check_alpha(alpha)?;
    let rho = if alpha >= 1.6 {
        0.5
    } else if alpha > 1.0 {
        alpha / (8.0 - 3.0 * alpha)
    } else {
        alpha / (2.0 + 3.0 * alpha)
    };
    Ok(RhoGamma { alpha, rho, gamma_exp: 1.0 / (0.5 + 1.0 / alpha) })
}

/// A pass/fail verdict recorded in a report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Rows for one plot-data CSV file.
#[derive(Debug, Clone, Serialize)]
pub struct PlotData {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub version: String,
    pub config: Value,
    pub records: Vec<Value>,
    pub aggregate: BTreeMap<String, Value>,
    pub checks: Vec<Check>,
    pub flags: Vec<String>,
    /// Parameters outside the regime where the statement applies.
    pub out_of_regime: Vec<String>,
    #[serde(skip)]
    pub plots: Vec<PlotData>,
}

impl ExperimentReport {
    fn new(name: &str, config: &impl Serialize) -> Result<Self> {
        Ok(ExperimentReport {
            experiment: name.into(),
            version: VERSION.into(),
            config: serde_json::to_value(config)?,
            records: vec![],
            aggregate: BTreeMap::new(),
            checks: vec![],
            flags: vec![],
            out_of_regime: vec![],
            plots: vec![],
        })
    }

    /// Every record carries the seed that reproduces it.
    fn record(&mut self, seed: u64, mut fields: Value) {
        if let Value::Object(map) = &mut fields {
            map.insert("seed".into(), json!(seed));
        }
        self.records.push(fields);
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check { name: name.into(), passed, detail });
    }

    fn set(&mut self, key: &str, v: impl Serialize) {
        self.aggregate.insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    fn plot(&mut self, file: &str, header: &[&str], rows: Vec<Vec<f64>>) {
        self.plots.push(PlotData { file: file.into(), header: header.iter().map(|s| s.to_string()).collect(), rows });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check_named(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

pub trait Experiment: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn default_config(&self) -> Value;
    /// Validate `config` (missing keys take defaults) and run.
    fn run(&self, config: &Value) -> Result<ExperimentReport>;
}

/// Parse a flat JSON object into a config, filling defaults.
pub fn parse_config<C: DeserializeOwned>(config: &Value) -> Result<C> {
    let v = if config.is_null() { json!({}) } else { config.clone() };
    serde_json::from_value(v).map_err(|e| LabError::param(format!("bad config: {e}")))
}

pub const EXPERIMENTS: &[&str] =
    &["local-law", "concentration", "wegner", "deloc", "loc", "frac-moment", "gaussian-projection"];

pub fn experiment(name: &str) -> Result<Box<dyn Experiment>> {
    Ok(match name {
        "local-law" => Box::new(LocalLaw),
        "concentration" => Box::new(Concentration),
        "wegner" => Box::new(Wegner),
        "deloc" => Box::new(Delocalization),
        "loc" => Box::new(Localization),
        "frac-moment" => Box::new(FracMomentVanishing),
        "gaussian-projection" => Box::new(GaussianProjection),
        _ => {
            return Err(LabError::param(format!(
                "unknown experiment '{name}' (known: {})",
                EXPERIMENTS.join(", ")
            )))
        }
    })
}

fn trial_seed(master: u64, exp: &str, n: usize, trial: usize) -> u64 {
    derive_seed(master, &[tag(exp), n as u64, trial as u64])
}

fn check_window(w: [f64; 2]) -> Result<()> {
    if !(w[0] < w[1]) || !w[0].is_finite() || !w[1].is_finite() {
        return Err(LabError::param(format!("window must satisfy a < b, got {w:?}")));
    }
    Ok(())
}

fn check_n_list(ns: &[usize]) -> Result<()> {
    if ns.is_empty() || ns.iter().any(|&n| n < 2) {
        return Err(LabError::param("n list must be nonempty with n >= 2"));
    }
    Ok(())
}

fn median_of(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

// ---------------------------------------------------------------- local law

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalLawConfig {
    pub alpha: f64,
    pub n_list: Vec<usize>,
    pub window: [f64; 2],
    pub trials: usize,
    /// Interval length is `c1 · n^{-ρ} (log n)²`.
    pub c1: f64,
    pub seed: u64,
}

impl Default for LocalLawConfig {
    fn default() -> Self {
        LocalLawConfig { alpha: 1.5, n_list: vec![500, 2000], window: [1.0, 2.0], trials: 50, c1: 0.1, seed: 0 }
    }
}

impl LocalLawConfig {
    fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        check_n_list(&self.n_list)?;
        check_window(self.window)?;
        if self.window[0] <= 0.0 && self.window[1] >= 0.0 {
            return Err(LabError::param("the window must avoid 0"));
        }
        if self.trials == 0 || !(self.c1 > 0.0) {
            return Err(LabError::param("need trials >= 1 and c1 > 0"));
        }
        let rho = rho_of_alpha(self.alpha)?.rho;
        for &n in &self.n_list {
            let len = interval_length(self.c1, n, rho);
            if len > self.window[1] - self.window[0] {
                return Err(LabError::param(format!("interval length {len:.3} at n = {n} exceeds the window")));
            }
        }
        Ok(())
    }
}

pub fn interval_length(c1: f64, n: usize, rho: f64) -> f64 {
    let nf = n as f64;
    c1 * nf.powf(-rho) * nf.ln().powi(2)
}

/// Disjoint intervals of length `len` tiling the left part of `window`.
pub fn tile_window(window: [f64; 2], len: f64) -> Vec<[f64; 2]> {
    let count = ((window[1] - window[0]) / len + 1e-12).floor() as usize;
    (0..count).map(|j| [window[0] + j as f64 * len, window[0] + (j + 1) as f64 * len]).collect()
}

pub struct LocalLaw;

impl Experiment for LocalLaw {
    fn name(&self) -> &'static str {
        "local-law"
    }

    fn description(&self) -> &'static str {
        "|mu_A(I) - mu_alpha(I)| / |I| on intervals of length c1 n^-rho (log n)^2"
    }

    fn default_config(&self) -> Value {
        serde_json::to_value(LocalLawConfig::default()).unwrap()
    }

    fn run(&self, config: &Value) -> Result<ExperimentReport> {
        let cfg: LocalLawConfig = parse_config(config)?;
        cfg.validate()?;
        local_law_experiment(&cfg)
    }
}

pub fn local_law_experiment(cfg: &LocalLawConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut rep = ExperimentReport::new("local-law", cfg)?;
    let rg = rho_of_alpha(cfg.alpha)?;
    let solver = LimitLawSolver::with_defaults(cfg.alpha)?;
    let mut plot = vec![];
    let mut medians = vec![];
    for &n in &cfg.n_list {
        let len = interval_length(cfg.c1, n, rg.rho);
        let intervals = tile_window(cfg.window, len);
        // the limit law is even, so μ_α(−I) = μ_α(I)
        let mut limit = Vec::with_capacity(intervals.len());
        for iv in &intervals {
            limit.push(axis_mass(&solver, iv[0], iv[1], QuadOptions::with_rel_tol(1e-8))?.0);
        }
        let trials: Vec<Result<(u64, Vec<f64>)>> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let seed = trial_seed(cfg.seed, "local-law", n, t);
                let m = build_matrix(n, cfg.alpha, seed)?;
                Ok((seed, eigenvalues(&m, default_eigensolver())?))
            })
            .collect();
        let (mut direct, mut reflected) = (vec![], vec![]);
        for (t, r) in trials.into_iter().enumerate() {
            let (seed, eigs) = r?;
            for (iv, &mu) in intervals.iter().zip(&limit) {
                for (side, (a, b)) in [("direct", (iv[0], iv[1])), ("reflected", (-iv[1], -iv[0]))] {
                    let mu_a = interval_count(&eigs, a, b)? as f64 / n as f64;
                    let ratio = (mu_a - mu).abs() / len;
                    if side == "direct" { direct.push(ratio) } else { reflected.push(ratio) }
                    rep.record(seed, json!({"n": n, "trial": t, "side": side, "a": a, "b": b,
                        "mu_a": mu_a, "mu_alpha": mu, "ratio": ratio}));
                }
            }
        }
        let med = median_of(&direct);
        medians.push(med);
        rep.set(&format!("n{n}.interval_length"), len);
        rep.set(&format!("n{n}.intervals"), intervals.len());
        rep.set(&format!("n{n}.median_ratio"), med);
        rep.set(&format!("n{n}.q10_ratio"), quantile(&direct, 0.1));
        rep.set(&format!("n{n}.q90_ratio"), quantile(&direct, 0.9));
        rep.set(&format!("n{n}.median_ratio_reflected"), median_of(&reflected));
        let ks = ks_two_sample(&direct, &reflected);
        let crit = ks_critical(1e-3, direct.len(), reflected.len());
        rep.check(
            &format!("reflection-n{n}"),
            ks < crit,
            format!("KS distance between I and -I ratios {ks:.4} (critical {crit:.4})"),
        );
        plot.push(vec![n as f64, med, quantile(&direct, 0.1), quantile(&direct, 0.9)]);
    }
    rep.set("rho", rg.rho);
    if medians.len() >= 2 {
        let (first, last) = (medians[0], *medians.last().unwrap());
        rep.check(
            "median-ratio-decreases",
            last < first,
            format!("median ratio {first:.5} at n = {} vs {last:.5} at n = {}", cfg.n_list[0], cfg.n_list.last().unwrap()),
        );
    }
    rep.plot("ratio_vs_n.csv", &["n", "median_ratio", "q10", "q90"], plot);
    Ok(rep)
}

// ------------------------------------------------------------ concentration

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConcentrationConfig {
    pub alpha: f64,
    pub n: usize,
    pub interval: [f64; 2],
    pub seeds: usize,
    pub t_list: Vec<f64>,
    pub seed: u64,
}

impl Default for ConcentrationConfig {
    fn default() -> Self {
        ConcentrationConfig { alpha: 1.5, n: 500, interval: [1.0, 2.0], seeds: 500, t_list: vec![0.01, 0.02], seed: 0 }
    }
}

pub struct Concentration;

impl Experiment for Concentration {
    fn name(&self) -> &'static str {
        "concentration"
    }

    fn description(&self) -> &'static str {
        "deviation frequencies of mu_A(I) against 2 exp(-n t^2 / 2)"
    }

    fn default_config(&self) -> Value {
        serde_json::to_value(ConcentrationConfig::default()).unwrap()
    }

    fn run(&self, config: &Value) -> Result<ExperimentReport> {
        concentration_experiment(&parse_config(config)?)
    }
}

pub fn concentration_experiment(cfg: &ConcentrationConfig) -> Result<ExperimentReport> {
    check_alpha(cfg.alpha)?;
    check_window(cfg.interval)?;
    if cfg.seeds < 2 || cfg.n < 2 || cfg.t_list.iter().any(|&t| !(t > 0.0)) {
        return Err(LabError::param("need seeds >= 2, n >= 2 and positive t values"));
    }
    let mut rep = ExperimentReport::new("concentration", cfg)?;
    let n = cfg.n;
    let mus: Vec<Result<(u64, f64)>> = (0..cfg.seeds)
        .into_par_iter()
        .map(|s| {
            let seed = trial_seed(cfg.seed, "concentration", n, s);
            let m = build_matrix(n, cfg.alpha, seed)?;
            let eigs = eigenvalues(&m, default_eigensolver())?;
            Ok((seed, interval_count(&eigs, cfg.interval[0], cfg.interval[1])? as f64 / n as f64))
        })
        .collect();
    let mut values = Vec::with_capacity(mus.len());
    for r in mus {
        let (seed, mu) = r?;
        values.push(mu);
        rep.record(seed, json!({"n": n, "mu_a": mu}));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    rep.set("mean_mu", mean);
    let mut rows = vec![];
    for &t in &cfg.t_list {
        let freq = values.iter().filter(|&&m| (m - mean).abs() >= t).count() as f64 / values.len() as f64;
        let bound = 2.0 * (-(n as f64) * t * t / 2.0).exp();
        rep.set(&format!("t{t}.frequency"), freq);
        rep.set(&format!("t{t}.bound"), bound);
        rep.check(
            &format!("deviation-t{t}"),
            freq <= 2.0 * bound,
            format!("frequency {freq:.4} vs 2 x bound {:.4}", 2.0 * bound),
        );
        rows.push(vec![t, freq, bound]);
    }
    rep.plot("deviation_vs_t.csv", &["t", "frequency", "bound"], rows);
    Ok(rep)
}

// ------------------------------------------------------------------- wegner

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WegnerConfig {
    pub alpha: f64,
    pub n: usize,
    pub e: f64,
    /// Half-widths of `I = [E − η, E + η]`; default spans one decade above the cutoff.
    pub eta_list: Option<Vec<f64>>,
    pub trials: usize,
    /// Trials on which interlacing against minors is verified.
    pub interlacing_trials: usize,
    pub minors_per_trial: usize,
    pub seed: u64,
}

impl Default for WegnerConfig {
    fn default() -> Self {
        WegnerConfig {
            alpha: 0.8,
            n: 1000,
            e: 0.5,
            eta_list: None,
            trials: 300,
            interlacing_trials: 2,
            minors_per_trial: 4,
            seed: 0,
        }
    }
}

impl WegnerConfig {
    pub fn cutoff(&self) -> f64 {
        (self.n as f64).powf(-(self.alpha + 2.0) / 4.0)
    }

    pub fn etas(&self) -> Vec<f64> {
        match &self.eta_list {
            Some(v) => v.clone(),
            None => (0..4).map(|k| self.cutoff() * 10f64.powf(k as f64 / 3.0)).collect(),
        }
    }
}

pub struct Wegner;

impl Experiment for Wegner {
    fn name(&self) -> &'static str {
        "wegner"
    }

    fn description(&self) -> &'static str {
        "quantiles of N_I / (n eta^gamma) across eta above n^-(alpha+2)/4"
    }

    fn default_config(&self) -> Value {
        serde_json::to_value(WegnerConfig::default()).unwrap()
    }

    fn run(&self, config: &Value) -> Result<ExperimentReport> {
        wegner_experiment(&parse_config(config)?)
    }
}

pub fn wegner_experiment(cfg: &WegnerConfig) -> Result<ExperimentReport> {
    check_alpha(cfg.alpha)?;
    let mut etas = cfg.etas();
    if cfg.n < 2 || cfg.trials == 0 || etas.is_empty() || etas.iter().any(|&x| !(x > 0.0)) {
        return Err(LabError::param("need n >= 2, trials >= 1 and positive etas"));
    }
    etas.sort_by(f64::total_cmp);
    let mut rep = ExperimentReport::new("wegner", cfg)?;
    let rg = rho_of_alpha(cfg.alpha)?;
    let cutoff = cfg.cutoff();
    rep.set("cutoff", cutoff);
    rep.set("gamma_exp", rg.gamma_exp);
    let in_regime: Vec<bool> = etas.iter().map(|&x| x >= cutoff * (1.0 - 1e-12)).collect();
    for (&eta, &ok) in etas.iter().zip(&in_regime) {
        if !ok {
            rep.out_of_regime.push(format!("eta = {eta:.4e} is below the cutoff n^-(alpha+2)/4 = {cutoff:.4e}"));
        }
    }
    let n = cfg.n;
    let solver = default_eigensolver();
    let trials: Vec<Result<(u64, Vec<usize>, Option<bool>)>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(cfg.seed, "wegner", n, t);
            let m = build_matrix(n, cfg.alpha, seed)?;
            let eigs = eigenvalues(&m, solver)?;
            let counts = etas
                .iter()
                .map(|&eta| interval_count(&eigs, cfg.e - eta, cfg.e + eta))
                .collect::<Result<Vec<_>>>()?;
            let interlace = if t < cfg.interlacing_trials {
                let ks: Vec<usize> = (0..cfg.minors_per_trial.min(n)).map(|j| j * n / cfg.minors_per_trial.max(1)).collect();
                let mut ok = true;
                for ms in minor_spectra(&m, &ks, solver)? {
                    for &eta in &etas {
                        let full = interval_count(&eigs, cfg.e - eta, cfg.e + eta)? as i64;
                        let minor = interval_count(&ms.pairs.values, cfg.e - eta, cfg.e + eta)? as i64;
                        ok &= (full - minor).abs() <= 1;
                    }
                }
                Some(ok)
            } else {
                None
            };
            Ok((seed, counts, interlace))
        })
        .collect();
    let mut ratios: Vec<Vec<f64>> = vec![vec![]; etas.len()];
    let mut monotone = true;
    let mut interlacing = true;
    for (t, r) in trials.into_iter().enumerate() {
        let (seed, counts, inter) = r?;
        monotone &= counts.windows(2).all(|w| w[0] <= w[1]);
        if let Some(ok) = inter {
            interlacing &= ok;
        }
        for (j, (&eta, &c)) in etas.iter().zip(&counts).enumerate() {
            let ratio = c as f64 / (n as f64 * eta.powf(rg.gamma_exp));
            ratios[j].push(ratio);
            rep.record(seed, json!({"trial": t, "eta": eta, "count": c, "ratio": ratio, "in_regime": in_regime[j]}));
        }
    }
    let mut rows = vec![];
    let mut p99_in = vec![];
    for (j, &eta) in etas.iter().enumerate() {
        let r = &ratios[j];
        let p99 = quantile(r, 0.99);
        let key = format!("eta{j}");
        rep.set(&format!("{key}.eta"), eta);
        rep.set(&format!("{key}.median"), quantile(r, 0.5));
        rep.set(&format!("{key}.p90"), quantile(r, 0.9));
        rep.set(&format!("{key}.p99"), p99);
        rep.set(&format!("{key}.max"), r.iter().cloned().fold(f64::MIN, f64::max));
        let rate = tail_decay_rate(r);
        rep.set(&format!("{key}.tail_rate"), rate);
        if in_regime[j] {
            p99_in.push(p99);
        }
        rows.push(vec![eta, quantile(r, 0.5), quantile(r, 0.9), p99, rate]);
    }
    if !p99_in.is_empty() {
        let hi = p99_in.iter().cloned().fold(f64::MIN, f64::max);
        let lo = p99_in.iter().cloned().fold(f64::MAX, f64::min);
        rep.set("p99_spread", hi / lo);
        rep.check("p99-bounded", hi / lo < 3.0, format!("99th percentile spread {:.3}x across in-regime etas", hi / lo));
    }
    rep.check("count-monotone", monotone, "N_I non-decreasing in |I| on every trial".into());
    if cfg.interlacing_trials > 0 {
        rep.check("interlacing", interlacing, "|N_I(A) - N_I(A^(k))| <= 1 on every tested minor".into());
    }
    rep.plot("ratio_quantiles_vs_eta.csv", &["eta", "median", "p90", "p99", "tail_rate"], rows);
    Ok(rep)
}

/// Exponential decay rate of the empirical survival function above the median.
fn tail_decay_rate(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let start = v.len() / 2;
    let (mut x, mut y) = (vec![], vec![]);
    for (i, &val) in v.iter().enumerate().skip(start) {
        let surv = (v.len() - i) as f64 / n;
        x.push(val);
        y.push(surv.ln());
    }
    if x.len() < 3 || x.first() == x.last() {
        return f64::NAN;
    }
    -crate::stats::linear_fit(&x, &y).0
}

// ----------------------------------------------------------- delocalization

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelocConfig {
    pub alpha: f64,
    pub n_list: Vec<usize>,
    pub window: [f64; 2],
    pub trials: usize,
    pub seed: u64,
}

impl Default for DelocConfig {
    fn default() -> Self {
        DelocConfig { alpha: 1.5, n_list: vec![500, 1000, 2000, 4000], window: [1.0, 2.0], trials: 30, seed: 0 }
    }
}

pub struct Delocalization;

impl Experiment for Delocalization {
    fn name(&self) -> &'static str {
        "deloc"
    }

    fn description(&self) -> &'static str {
        "sup-norm of eigenvectors with eigenvalue in a window, versus n"
    }

    fn default_config(&self) -> Value {
        serde_json::to_value(DelocConfig::default()).unwrap()
    }

    fn run(&self, config: &Value) -> Result<ExperimentReport> {
        delocalization_stats(&parse_config(config)?)
    }
}

pub fn delocalization_stats(cfg: &DelocConfig) -> Result<ExperimentReport> {
    check_alpha(cfg.alpha)?;
    check_n_list(&cfg.n_list)?;
    check_window(cfg.window)?;
    if cfg.alpha <= 1.0 {
        return Err(LabError::OutOfRegime(format!("delocalization needs alpha > 1, got {}", cfg.alpha)));
    }
    if cfg.trials == 0 {
        return Err(LabError::param("need trials >= 1"));
    }
    let mut rep = ExperimentReport::new("deloc", cfg)?;
    let rg = rho_of_alpha(cfg.alpha)?;
    let predicted = -rg.rho * (1.0 - 1.0 / cfg.alpha);
    rep.set("predicted_exponent", predicted);
    let mut xs = vec![];
    let mut ys = vec![];
    let mut rows = vec![];
    let mut l1_means = vec![];
    let mut unit_ok = true;
    let mut dual_ok = true;
    for &n in &cfg.n_list {
        let trials: Vec<Result<(u64, Option<Value>)>> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                let seed = trial_seed(cfg.seed, "deloc", n, t);
                let m = build_matrix(n, cfg.alpha, seed)?;
                let w = spectrum_window(&m, cfg.window[0], cfg.window[1], default_eigensolver())?;
                let k = w.vectors.ncols();
                if k == 0 {
                    return Ok((seed, None));
                }
                let mut sup = 0.0f64;
                let (mut l1, mut l4, mut l2_err, mut dual) = (0.0, 0.0, 0.0f64, true);
                for v in w.vectors.column_iter() {
                    let s = v.amax();
                    let n1: f64 = v.iter().map(|x| x.abs()).sum();
                    let n2 = v.norm();
                    sup = sup.max(s);
                    l1 += n1;
                    l4 += v.iter().map(|x| x.powi(4)).sum::<f64>().powf(0.25);
                    l2_err = l2_err.max((n2 - 1.0).abs());
                    dual &= n1 >= n2 * n2 / s * (1.0 - 1e-12);
                }
                Ok((
                    seed,
                    Some(json!({"n": n, "trial": t, "count": k, "sup_norm_max": sup,
                        "l1_mean": l1 / k as f64, "l4_mean": l4 / k as f64, "l2_error": l2_err, "dual_bound": dual})),
                ))
            })
            .collect();
        let mut logs = vec![];
        let mut l1s = vec![];
        for r in trials {
            let (seed, rec) = r?;
            match rec {
                None => rep.flags.push(format!("n = {n}, seed {seed}: no eigenvalue in the window, trial skipped")),
                Some(rec) => {
                    logs.push(rec["sup_norm_max"].as_f64().unwrap().ln());
                    l1s.push(rec["l1_mean"].as_f64().unwrap());
                    unit_ok &= rec["l2_error"].as_f64().unwrap() < 1e-10;
                    dual_ok &= rec["dual_bound"].as_bool().unwrap();
                    rep.record(seed, rec);
                }
            }
        }
        if logs.is_empty() {
            continue;
        }
        let mean_log = logs.iter().sum::<f64>() / logs.len() as f64;
        let l1m = l1s.iter().sum::<f64>() / l1s.len() as f64;
        rep.set(&format!("n{n}.mean_log_sup"), mean_log);
        rep.set(&format!("n{n}.median_sup"), median_of(&logs).exp());
        rep.set(&format!("n{n}.l1_mean"), l1m);
        xs.push(n as f64);
        ys.push(mean_log.exp());
        l1_means.push(l1m);
        rows.push(vec![n as f64, mean_log.exp(), l1m]);
    }
    if xs.len() >= 2 {
        let slope = log_log_slope(&xs, &ys);
        rep.set("slope", slope);
        rep.check("sup-norm-slope", slope <= -0.05, format!("slope {slope:.4} (predicted exponent {predicted:.4})"));
        rep.check(
            "l1-grows",
            l1_means.windows(2).all(|w| w[1] > w[0]),
            format!("mean l1 norms {l1_means:?}"),
        );
    }
    rep.check("unit-l2", unit_ok, "every recorded eigenvector has unit l2 norm".into());
    rep.check("dual-bound", dual_ok, "l1 >= l2^2 / l_inf for every recorded eigenvector".into());
    rep.plot("supnorm_vs_n.csv", &["n", "geometric_mean_sup_norm", "l1_mean"], rows);
    Ok(rep)
}

// ------------------------------------------------------------- localization

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocConfig {
    pub alpha: f64,
    pub n_list: Vec<usize>,
    /// The contrast is evaluated at this size (must be in `n_list`).
    pub n_contrast: usize,
    pub e: f64,
    pub bulk_e: f64,
    /// Window length is `len_const · n^{-ρ} (log n)²`.
    pub len_const: f64,
    /// Exponent of the fractional moment; defaults to α/2.
    pub kappa: Option<f64>,
    pub delta: f64,
    pub seeds: usize,
    pub seed: u64,
}

impl Default for LocConfig {
    fn default() -> Self {
        LocConfig {
            alpha: 0.5,
            n_list: vec![1000, 2000, 4000],
            n_contrast: 2000,
            e: 10.0,
            bulk_e: 0.3,
            len_const: 0.2,
            kappa: None,
            delta: 0.1,
            seeds: 20,
            seed: 0,
        }
    }
}

pub struct Localization;

impl Experiment for Localization {
    fn name(&self) -> &'static str {
        "loc"
    }

    fn description(&self) -> &'static str {
        "fractional moments of W_I and the support set J at large |E| versus the bulk"
    }

    fn default_config(&self) -> Value {
        serde_json::to_value(LocConfig::default()).unwrap()
    }

    fn run(&self, config: &Value) -> Result<ExperimentReport> {
        localization_stats(&parse_config(config)?)
    }
}

/// Fractional moment of `W`, the set `J` and the mass it carries.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct WStats {
    pub mean_w: f64,
    pub frac_moment: f64,
    pub j_size: usize,
    pub j_mass: f64,
}

pub fn w_statistics(w: &[f64], kappa: f64, delta: f64) -> WStats {
    let n = w.len() as f64;
    let mean_w = w.iter().sum::<f64>() / n;
    let eps = w.iter().map(|x| x.powf(kappa)).sum::<f64>() / n;
    let threshold = (eps / delta).powf(-1.0 / (1.0 - kappa));
    let (mut size, mut mass) = (0, 0.0);
    for &x in w {
        if x >= threshold {
            size += 1;
            mass += x;
        }
    }
    WStats { mean_w, frac_moment: eps, j_size: size, j_mass: mass / n }
}

pub fn localization_stats(cfg: &LocConfig) -> Result<ExperimentReport> {
    check_alpha(cfg.alpha)?;
    check_n_list(&cfg.n_list)?;
    if cfg.alpha >= 2.0 / 3.0 {
        return Err(LabError::OutOfRegime(format!("localization needs alpha < 2/3, got {}", cfg.alpha)));
    }
    let kappa = cfg.kappa.unwrap_or(cfg.alpha / 2.0);
    if !(kappa > 0.0 && kappa < 1.0) || !(cfg.delta > 0.0 && cfg.delta < 1.0) || cfg.seeds == 0 {
        return Err(LabError::param("need kappa, delta in (0,1) and seeds >= 1"));
    }
    if !cfg.n_list.contains(&cfg.n_contrast) {
        return Err(LabError::param("n_contrast must be one of n_list"));
    }
    let mut rep = ExperimentReport::new("loc", cfg)?;
    let rg = rho_of_alpha(cfg.alpha)?;
    let mut w_mean_ok = true;
    let mut j_mass_ok = true;
    let mut j_fracs = vec![];
    let mut rows = vec![];
    for &n in &cfg.n_list {
        let len = interval_length(cfg.len_const, n, rg.rho);
        let minimum = interval_length(1.0, n, rg.rho);
        if len < minimum {
            rep.out_of_regime.push(format!("n = {n}: |I| = {len:.3} is below n^-rho (log n)^2 = {minimum:.3}"));
        }
        // the bulk window only feeds the contrast check
        let windows: &[(&str, f64)] =
            if n == cfg.n_contrast { &[("edge", cfg.e), ("bulk", cfg.bulk_e)] } else { &[("edge", cfg.e)] };
        let trials: Vec<Result<(u64, Vec<Option<WStats>>)>> = (0..cfg.seeds)
            .into_par_iter()
            .map(|s| {
                let seed = trial_seed(cfg.seed, "loc", n, s);
                let m = build_matrix(n, cfg.alpha, seed)?;
                let mut out = vec![];
                for &(_, c) in windows {
                    let w = spectrum_window(&m, c - len / 2.0, c + len / 2.0, default_eigensolver())?;
                    out.push(localization_weights(&w).map(|w| w_statistics(&w, kappa, cfg.delta)));
                }
                Ok((seed, out))
            })
            .collect();
        let mut fm = [vec![], vec![]];
        let mut jf = vec![];
        for r in trials {
            let (seed, stats) = r?;
            for (k, st) in stats.into_iter().enumerate() {
                let label = windows[k].0;
                match st {
                    None => rep.flags.push(format!("n = {n}, seed {seed}: empty {label} window, skipped")),
                    Some(st) => {
                        w_mean_ok &= (st.mean_w - 1.0).abs() < 1e-9;
                        j_mass_ok &= st.j_mass >= 1.0 - cfg.delta - 1e-12;
                        fm[k].push(st.frac_moment);
                        if k == 0 {
                            jf.push(st.j_size as f64 / n as f64);
                        }
                        rep.record(seed, json!({"n": n, "window": label, "center": windows[k].1, "length": len,
                            "mean_w": st.mean_w, "frac_moment": st.frac_moment, "j_size": st.j_size, "j_mass": st.j_mass}));
                    }
                }
            }
        }
        let edge = Estimate::from_samples(&fm[0]);
        let jfrac = jf.iter().sum::<f64>() / jf.len().max(1) as f64;
        rep.set(&format!("n{n}.edge_frac_moment"), edge);
        rep.set(&format!("n{n}.j_fraction"), jfrac);
        j_fracs.push(jfrac);
        rows.push(vec![n as f64, edge.mean, jfrac]);
        if n == cfg.n_contrast {
            let bulk = Estimate::from_samples(&fm[1]);
            rep.set(&format!("n{n}.bulk_frac_moment"), bulk);
            rep.check(
                "edge-bulk-contrast",
                2.0 * edge.mean <= bulk.mean,
                format!("edge {:.4} vs bulk {:.4} at n = {n}", edge.mean, bulk.mean),
            );
        }
    }
    rep.check("w-mean-one", w_mean_ok, "(1/n) sum W_I(i) = 1 on every window".into());
    rep.check("j-mass", j_mass_ok, format!("J carries at least 1 - delta = {} of the mass", 1.0 - cfg.delta));
    if j_fracs.len() >= 2 {
        rep.check(
            "j-fraction-decreases",
            j_fracs.windows(2).all(|w| w[1] < w[0]),
            format!("|J|/n = {j_fracs:?}"),
        );
    }
    rep.plot("loc_vs_n.csv", &["n", "edge_frac_moment", "j_fraction"], rows);
    Ok(rep)
}

// --------------------------------------------------- frac-moment vanishing

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FracMomentConfig {
    pub alpha: f64,
    pub n_list: Vec<usize>,
    pub e: f64,
    pub bulk_e: f64,
    /// Fixed `η`; default `n^{-1/6}` per size.
    pub eta: Option<f64>,
    pub seeds: usize,
    /// Population-dynamics comparison at the largest n (0 disables).
    pub pool_size: usize,
    pub pool_generations: usize,
    pub trunc: usize,
    pub seed: u64,
}

impl Default for FracMomentConfig {
    fn default() -> Self {
        FracMomentConfig {
            alpha: 0.5,
            n_list: vec![500, 1000, 2000],
            e: 10.0,
            bulk_e: 0.3,
            eta: None,
            seeds: 20,
            pool_size: 50_000,
            pool_generations: 40,
            trunc: 200,
            seed: 0,
        }
    }
}

pub struct FracMomentVanishing;

impl Experiment for FracMomentVanishing {
    fn name(&self) -> &'static str {
        "frac-moment"
    }

    fn description(&self) -> &'static str {
        "(1/n) sum (Im R_ii)^(alpha/2) at eta = n^-1/6, large |E| versus bulk, against the RDE pool"
    }

    fn default_config(&self) -> Value {
        serde_json::to_value(FracMomentConfig::default()).unwrap()
    }

    fn run(&self, config: &Value) -> Result<ExperimentReport> {
        frac_moment_vanishing_experiment(&parse_config(config)?)
    }
}

pub fn frac_moment_vanishing_experiment(cfg: &FracMomentConfig) -> Result<ExperimentReport> {
    check_alpha(cfg.alpha)?;
    check_n_list(&cfg.n_list)?;
    if cfg.alpha >= 2.0 / 3.0 {
        return Err(LabError::OutOfRegime(format!("vanishing fractional moments need alpha < 2/3, got {}", cfg.alpha)));
    }
    if cfg.seeds < 2 {
        return Err(LabError::param("need at least 2 seeds"));
    }
    let mut rep = ExperimentReport::new("frac-moment", cfg)?;
    let h = cfg.alpha / 2.0;
    let mut edges = vec![];
    let mut rows = vec![];
    let mut bound_ok = true;
    let mut last: Option<(usize, f64, Estimate, Estimate)> = None;
    for &n in &cfg.n_list {
        let eta = cfg.eta.unwrap_or((n as f64).powf(-1.0 / 6.0));
        let trials: Vec<Result<(u64, f64, f64)>> = (0..cfg.seeds)
            .into_par_iter()
            .map(|s| {
                let seed = trial_seed(cfg.seed, "frac-moment", n, s);
                let m = build_matrix(n, cfg.alpha, seed)?;
                let spec = SpectralData::from_pairs(default_eigensolver().eigh(&m.scaled()).map_err(|e| match e {
                    LabError::Numerical { message, .. } => LabError::Numerical { message, seed: Some(seed) },
                    other => other,
                })?)?;
                let edge = frac_moment_imag(&spec, Complex64::new(cfg.e, eta), h)?;
                let bulk = frac_moment_imag(&spec, Complex64::new(cfg.bulk_e, eta), h)?;
                Ok((seed, edge, bulk))
            })
            .collect();
        let (mut ev, mut bv) = (vec![], vec![]);
        for r in trials {
            let (seed, edge, bulk) = r?;
            bound_ok &= edge <= eta.powf(-h) && bulk <= eta.powf(-h);
            ev.push(edge);
            bv.push(bulk);
            rep.record(seed, json!({"n": n, "eta": eta, "edge": edge, "bulk": bulk}));
        }
        let (e_est, b_est) = (Estimate::from_samples(&ev), Estimate::from_samples(&bv));
        rep.set(&format!("n{n}.eta"), eta);
        rep.set(&format!("n{n}.edge"), e_est);
        rep.set(&format!("n{n}.bulk"), b_est);
        edges.push(e_est.mean);
        rows.push(vec![n as f64, eta, e_est.mean, e_est.std_err, b_est.mean, b_est.std_err]);
        last = Some((n, eta, e_est, b_est));
    }
    let (n, eta, edge, bulk) = last.unwrap();
    rep.check(
        "edge-below-half-bulk",
        2.0 * edge.mean <= bulk.mean,
        format!("edge {:.5} vs bulk {:.5} at n = {n}", edge.mean, bulk.mean),
    );
    if edges.len() >= 2 {
        rep.check("edge-decreases", edges.windows(2).all(|w| w[1] < w[0]), format!("edge means {edges:?}"));
    }
    rep.check("resolvent-bound", bound_ok, "every value is at most eta^(-alpha/2)".into());
    if cfg.pool_size > 0 {
        let mut pc = PoolConfig::new(cfg.alpha, Complex64::new(cfg.e, eta));
        pc.size = cfg.pool_size;
        pc.generations = cfg.pool_generations;
        pc.trunc = cfg.trunc;
        pc.seed = derive_seed(cfg.seed, &[tag("frac-moment-pool")]);
        let run = run_pool(&pc)?;
        let late: Vec<f64> = run.history.iter().rev().take(10).map(|g| g.mean_im_frac).collect();
        let pool = Estimate::from_samples(&late);
        let se_pool = pool.std_err.max(run.history.last().unwrap().mean_im_frac_se);
        let z = (edge.mean - pool.mean).abs() / edge.std_err.hypot(se_pool);
        rep.set("pool_value", pool.mean);
        rep.set("pool_std_err", se_pool);
        rep.check(
            "matches-rde-pool",
            z <= 3.0,
            format!("n = {n}: {:.5} vs pool {:.5} ({z:.2} combined SE)", edge.mean, pool.mean),
        );
    }
    rep.plot("frac_moment_vs_n.csv", &["n", "eta", "edge", "edge_se", "bulk", "bulk_se"], rows);
    Ok(rep)
}

// ------------------------------------------------------ gaussian projection

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionConfig {
    pub n: usize,
    pub d_list: Vec<usize>,
    pub p: f64,
    pub delta: f64,
    pub trials: usize,
    /// Gaussian vectors drawn per sampled projection.
    pub vectors_per_projection: usize,
    pub seed: u64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig { n: 400, d_list: vec![200], p: 1.0, delta: 0.1, trials: 10_000, vectors_per_projection: 100, seed: 0 }
    }
}

pub struct GaussianProjection;

impl Experiment for GaussianProjection {
    fn name(&self) -> &'static str {
        "gaussian-projection"
    }

    fn description(&self) -> &'static str {
        "failure frequency of ||P G||_p >= delta (tr P^p)^(1/p) for random rank-d projections"
    }

    fn default_config(&self) -> Value {
        serde_json::to_value(ProjectionConfig::default()).unwrap()
    }

    fn run(&self, config: &Value) -> Result<ExperimentReport> {
        gaussian_projection_check(&parse_config(config)?)
    }
}

fn lp_norm(v: &[f64], p: f64) -> f64 {
    if p == 2.0 {
        return v.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Failure count of `‖PG‖_p ≥ δ d^{1/p}` over `trials` draws.
pub fn projection_failures(n: usize, d: usize, p: f64, delta: f64, trials: usize, per: usize, seed: u64) -> Result<usize> {
    let per = per.max(1);
    let batches = trials.div_ceil(per);
    let threshold = delta * (d as f64).powf(1.0 / p);
    let counts: Vec<usize> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_from_seed(derive_seed(seed, &[b as u64]));
            let g = DMatrix::<f64>::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
            let q = if d == n { DMatrix::identity(n, n) } else { g.qr().q() };
            let m = per.min(trials - b * per);
            let mut fails = 0;
            for _ in 0..m {
                let x = nalgebra::DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
                let px = &q * (q.transpose() * &x);
                if lp_norm(px.as_slice(), p) < threshold {
                    fails += 1;
                }
            }
            fails
        })
        .collect();
    Ok(counts.into_iter().sum())
}

pub fn gaussian_projection_check(cfg: &ProjectionConfig) -> Result<ExperimentReport> {
    if cfg.n == 0 || cfg.d_list.is_empty() || cfg.d_list.iter().any(|&d| d == 0 || d > cfg.n) {
        return Err(LabError::param("need 1 <= d <= n for every d"));
    }
    if !(cfg.p > 0.0 && cfg.p <= 2.0) || !(cfg.delta > 0.0) || cfg.trials == 0 {
        return Err(LabError::param("need p in (0, 2], delta > 0 and trials >= 1"));
    }
    let mut rep = ExperimentReport::new("gaussian-projection", cfg)?;
    let mut freqs = vec![];
    let mut rows = vec![];
    for &d in &cfg.d_list {
        let seed = derive_seed(cfg.seed, &[tag("projection"), d as u64]);
        let fails = projection_failures(cfg.n, d, cfg.p, cfg.delta, cfg.trials, cfg.vectors_per_projection, seed)?;
        let freq = fails as f64 / cfg.trials as f64;
        rep.record(seed, json!({"n": cfg.n, "d": d, "p": cfg.p, "delta": cfg.delta, "failures": fails, "frequency": freq}));
        freqs.push(freq);
        rows.push(vec![d as f64, freq]);
    }
    if freqs.len() >= 2 {
        rep.check(
            "frequency-decreases-in-d",
            freqs.windows(2).all(|w| w[1] <= w[0]),
            format!("failure frequencies {freqs:?}"),
        );
        // exponential shape: log frequency against d over the nonzero entries
        let (x, y): (Vec<f64>, Vec<f64>) = cfg
            .d_list
            .iter()
            .zip(&freqs)
            .filter(|(_, &f)| f > 0.0)
            .map(|(&d, &f)| (d as f64, f.ln()))
            .unzip();
        if x.len() >= 2 {
            rep.set("log_frequency_slope", crate::stats::linear_fit(&x, &y).0);
        }
    }
    rep.plot("failure_vs_d.csv", &["d", "frequency"], rows);
    Ok(rep)
}
