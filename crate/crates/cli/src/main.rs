//! Command line front end for the heavy-tailed matrix laboratory.
//!
//! Every command writes `report.json` (deterministic for a given config and
//! seed) and `timings.json` (wall clock, not reproducible) into the output
//! directory, plus command-specific CSV files. Failures write `error.json`
//! and exit with 2 (configuration), 3 (numerical) or 4 (out of regime).

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use levylab::ensemble::{build_matrix, stieltjes, write_eigenvalues_csv};
use levylab::experiments::{experiment, rho_of_alpha, ExperimentReport, EXPERIMENTS, VERSION};
use levylab::io::{decimal17, hexfloat, write_csv_hex};
use levylab::limitlaw::{limit_density_with, LimitLawSolver, SolverOptions};
use levylab::linalg::{eigensolver, EIGENSOLVERS};
use levylab::rde::{vanishing_imag_diagnostic, PoolConfig};
use levylab::{LabError, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::{json, Map, Value};

/// Environment variable that overrides the output directory.
const OUTPUT_ENV: &str = "LEVYLAB_OUTPUT_DIR";
const DEFAULT_OUTPUT: &str = "levylab-out";

#[derive(Parser, Debug)]
#[command(name = "levylab", version, about = "Heavy-tailed Wigner matrices: spectra, limit law, resolvent recursion")]
struct Cli {
    /// Output directory (default: $LEVYLAB_OUTPUT_DIR, then the config's output_dir, then ./levylab-out)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for parallel sections (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Add hexfloat columns to CSV output
    #[arg(long, global = true)]
    hex: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw one matrix and write its upper triangle
    SampleMatrix(MatrixArgs),
    /// Eigenvalues of one matrix
    Spectrum(SpectrumArgs),
    /// Limiting density on a grid of energies
    LimitDensity(DensityArgs),
    /// Finite-n interval masses against the limit law
    LocalLaw(ExperimentArgs),
    /// Eigenvalue counts in short intervals
    Wegner(ExperimentArgs),
    /// Eigenvector sup-norms versus n
    Deloc(ExperimentArgs),
    /// Localization weights W_I at large |E| versus the bulk
    Loc(ExperimentArgs),
    /// Population dynamics for the resolvent recursion
    Rde(RdeArgs),
    /// (1/n) sum (Im R_ii)^(alpha/2) at eta = n^-1/6 versus the recursion
    FracMoment(ExperimentArgs),
    /// Run several experiments from one config file
    Report(ReportArgs),
    /// Print the local-law exponent rho and the Wegner exponent gamma
    Rho(RhoArgs),
}

#[derive(Args, Debug, Clone)]
struct ConfigArgs {
    /// JSON config file with a flat key namespace
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override one config key (value parsed as JSON, else as a string)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct MatrixArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Eigensolver backend
    #[arg(long)]
    solver: Option<String>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args, Debug)]
struct DensityArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    emin: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    emax: Option<f64>,
    #[arg(long)]
    points: Option<usize>,
    /// Decreasing comma-separated eta values
    #[arg(long, value_delimiter = ',')]
    eta_list: Option<Vec<f64>>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args, Debug)]
struct RdeArgs {
    #[arg(long)]
    alpha: Option<f64>,
    /// Real part of z
    #[arg(long = "re", allow_hyphen_values = true)]
    re: Option<f64>,
    /// Comma-separated imaginary parts (run from largest to smallest)
    #[arg(long, value_delimiter = ',')]
    im_list: Option<Vec<f64>>,
    /// Pool size
    #[arg(long)]
    pool: Option<usize>,
    /// Number of Poisson points kept
    #[arg(long)]
    trunc: Option<usize>,
    /// Generations per imaginary part
    #[arg(long)]
    gens: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// JSON object mapping experiment names to their configs
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RhoArgs {
    #[arg(long)]
    alpha: f64,
}

/// Resolved run: merged config, output directory and stage timings.
struct Run {
    out: PathBuf,
    hex: bool,
    timings: BTreeMap<String, f64>,
    started: Instant,
}

impl Run {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let r = f();
        self.timings.insert(name.into(), t.elapsed().as_secs_f64());
        r
    }

    fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    fn write_json(&self, file: &str, v: &Value) -> Result<()> {
        let mut w = BufWriter::new(File::create(self.path(file))?);
        serde_json::to_writer_pretty(&mut w, v)?;
        writeln!(w)?;
        Ok(())
    }

    fn write_csv(&self, file: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        write_csv_hex(BufWriter::new(File::create(self.path(file))?), header, rows, self.hex)
    }

    fn finish(&self, command: &str) -> Result<()> {
        let mut t = Map::new();
        t.insert("command".into(), json!(command));
        t.insert("wall_clock_seconds".into(), json!(self.started.elapsed().as_secs_f64()));
        t.insert("stages".into(), json!(self.timings));
        self.write_json("timings.json", &Value::Object(t))
    }
}

fn load_config(args: &ConfigArgs) -> Result<Map<String, Value>> {
    let mut map = match &args.config {
        Some(p) => match serde_json::from_str::<Value>(&fs::read_to_string(p)?)? {
            Value::Object(m) => m,
            _ => return Err(LabError::param("config file must hold a JSON object")),
        },
        None => Map::new(),
    };
    for kv in &args.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| LabError::param(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.into()));
        map.insert(k.into(), value);
    }
    Ok(map)
}

fn put<T: serde::Serialize>(map: &mut Map<String, Value>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        map.insert(key.into(), serde_json::to_value(v).unwrap());
    }
}

fn take<T: serde::de::DeserializeOwned>(map: &Map<String, Value>, key: &str, default: T) -> Result<T> {
    match map.get(key) {
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| LabError::param(format!("config key '{key}': {e}"))),
        None => Ok(default),
    }
}

fn reject_unknown(map: &Map<String, Value>, known: &[&str]) -> Result<()> {
    for k in map.keys() {
        if !known.contains(&k.as_str()) {
            return Err(LabError::param(format!("unknown config key '{k}' (known: {})", known.join(", "))));
        }
    }
    Ok(())
}

fn report_header(command: &str, config: Value) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("command".into(), json!(command));
    m.insert("version".into(), json!(VERSION));
    m.insert("config".into(), config);
    m
}

fn output_dir(flag: &Option<PathBuf>, cfg: &mut Map<String, Value>) -> Result<PathBuf> {
    let from_cfg = cfg.remove("output_dir").map(|v| serde_json::from_value::<String>(v)).transpose()?;
    Ok(flag
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .or_else(|| from_cfg.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT)))
}

fn cmd_sample_matrix(run: &mut Run, a: &MatrixArgs, mut cfg: Map<String, Value>) -> Result<()> {
    put(&mut cfg, "alpha", a.alpha);
    put(&mut cfg, "n", a.n);
    put(&mut cfg, "seed", a.seed);
    reject_unknown(&cfg, &["alpha", "n", "seed"])?;
    let alpha: f64 = take(&cfg, "alpha", 1.5)?;
    let n: usize = take(&cfg, "n", 100)?;
    let seed: u64 = take(&cfg, "seed", 0)?;
    let m = run.stage("sample", || build_matrix(n, alpha, seed))?;
    let mut w = BufWriter::new(File::create(run.path("matrix.csv"))?);
    writeln!(w, "i,j,value,hex")?;
    for i in 0..n {
        for j in i..n {
            let x = m.entries()[(i, j)];
            writeln!(w, "{i},{j},{},{}", decimal17(x), hexfloat(x))?;
        }
    }
    w.flush()?;
    let mut rep = report_header("sample-matrix", json!({"alpha": alpha, "n": n, "seed": seed}));
    rep.insert("scale_a_n".into(), json!(m.a_n()));
    rep.insert("files".into(), json!(["matrix.csv"]));
    run.write_json("report.json", &Value::Object(rep))
}

fn cmd_spectrum(run: &mut Run, a: &SpectrumArgs, mut cfg: Map<String, Value>) -> Result<()> {
    put(&mut cfg, "alpha", a.alpha);
    put(&mut cfg, "n", a.n);
    put(&mut cfg, "seed", a.seed);
    put(&mut cfg, "solver", a.solver.clone());
    reject_unknown(&cfg, &["alpha", "n", "seed", "solver"])?;
    let alpha: f64 = take(&cfg, "alpha", 1.5)?;
    let n: usize = take(&cfg, "n", 500)?;
    let seed: u64 = take(&cfg, "seed", 0)?;
    let solver_name: String = take(&cfg, "solver", EIGENSOLVERS[0].to_string())?;
    let solver = eigensolver(&solver_name)?;
    let m = run.stage("sample", || build_matrix(n, alpha, seed))?;
    let eigs = run.stage("eigenvalues", || levylab::ensemble::eigenvalues(&m, solver.as_ref()))?;
    write_eigenvalues_csv(BufWriter::new(File::create(run.path("eigenvalues.csv"))?), seed, &eigs)?;
    let g = stieltjes(&eigs, Complex64::i())?;
    let mut rep = report_header(
        "spectrum",
        json!({"alpha": alpha, "n": n, "seed": seed, "solver": solver_name}),
    );
    rep.insert("lambda_min".into(), json!(eigs[0]));
    rep.insert("lambda_max".into(), json!(eigs[n - 1]));
    rep.insert("stieltjes_at_i".into(), json!([g.re, g.im]));
    rep.insert("files".into(), json!(["eigenvalues.csv"]));
    run.write_json("report.json", &Value::Object(rep))
}

fn cmd_limit_density(run: &mut Run, a: &DensityArgs, mut cfg: Map<String, Value>) -> Result<i32> {
    put(&mut cfg, "alpha", a.alpha);
    put(&mut cfg, "emin", a.emin);
    put(&mut cfg, "emax", a.emax);
    put(&mut cfg, "points", a.points);
    put(&mut cfg, "eta_list", a.eta_list.clone());
    reject_unknown(&cfg, &["alpha", "emin", "emax", "points", "eta_list"])?;
    let alpha: f64 = take(&cfg, "alpha", 1.5)?;
    let emin: f64 = take(&cfg, "emin", -4.0)?;
    let emax: f64 = take(&cfg, "emax", 4.0)?;
    let points: usize = take(&cfg, "points", 200)?;
    let etas: Vec<f64> = take(&cfg, "eta_list", vec![0.04, 0.02, 0.01, 0.005])?;
    if !(emin < emax) || points < 2 {
        return Err(LabError::param("need emin < emax and at least 2 points"));
    }
    if etas.is_empty() || etas.windows(2).any(|w| w[1] >= w[0]) || *etas.last().unwrap() < 1e-4 {
        return Err(LabError::param("eta_list must be strictly decreasing with smallest value >= 1e-4"));
    }
    // validates alpha before any compute
    LimitLawSolver::new(alpha, SolverOptions::default())?;
    let grid: Vec<f64> = (0..points).map(|k| emin + (emax - emin) * k as f64 / (points - 1) as f64).collect();
    let results: Vec<Result<levylab::limitlaw::DensityEstimate>> = run.stage("solve", || {
        Ok(grid
            .par_iter()
            .map_init(
                || LimitLawSolver::new(alpha, SolverOptions::default()),
                |solver, &e| match solver {
                    Ok(s) => limit_density_with(s, e, &etas),
                    Err(err) => Err(LabError::numerical(err.to_string())),
                },
            )
            .collect())
    })?;
    let eta_min = *etas.last().unwrap();
    let mut rows = Vec::with_capacity(points);
    let mut flags = vec![];
    for (&e, r) in grid.iter().zip(results) {
        match r {
            Ok(d) => {
                let res = d.residuals.iter().cloned().fold(0.0, f64::max);
                if d.non_monotone || d.suspected_exceptional {
                    flags.push(json!({"e": e, "non_monotone": d.non_monotone, "suspected_exceptional": d.suspected_exceptional}));
                }
                rows.push(vec![e, eta_min, *d.values.last().unwrap(), d.extrapolated, res]);
            }
            Err(err) => {
                flags.push(json!({"e": e, "error": err.to_string()}));
                rows.push(vec![e, eta_min, f64::NAN, f64::NAN, f64::NAN]);
            }
        }
    }
    run.write_csv("density.csv", &["E", "eta", "f_estimate", "extrapolated", "residual"], &rows)?;
    let failed = rows.iter().filter(|r| r[2].is_nan()).count();
    let mut rep = report_header(
        "limit-density",
        json!({"alpha": alpha, "emin": emin, "emax": emax, "points": points, "eta_list": etas}),
    );
    rep.insert("flags".into(), json!(flags));
    rep.insert("failed_points".into(), json!(failed));
    rep.insert("files".into(), json!(["density.csv"]));
    run.write_json("report.json", &Value::Object(rep))?;
    Ok(if failed > 0 { 3 } else { 0 })
}

fn write_experiment(run: &Run, rep: &ExperimentReport) -> Result<()> {
    let mut v = serde_json::to_value(rep)?;
    let files: Vec<&str> = rep.plots.iter().map(|p| p.file.as_str()).collect();
    v["files"] = json!(files);
    run.write_json("report.json", &v)?;
    for p in &rep.plots {
        let header: Vec<&str> = p.header.iter().map(String::as_str).collect();
        run.write_csv(&p.file, &header, &p.rows)?;
    }
    Ok(())
}

fn exit_for(rep: &ExperimentReport) -> i32 {
    if rep.out_of_regime.is_empty() {
        0
    } else {
        4
    }
}

fn cmd_experiment(run: &mut Run, name: &str, a: &ExperimentArgs, mut cfg: Map<String, Value>) -> Result<i32> {
    put(&mut cfg, "alpha", a.alpha);
    put(&mut cfg, "seed", a.seed);
    let exp = experiment(name)?;
    let rep = run.stage(name, || exp.run(&Value::Object(cfg)))?;
    write_experiment(run, &rep)?;
    Ok(exit_for(&rep))
}

fn cmd_rde(run: &mut Run, a: &RdeArgs, mut cfg: Map<String, Value>) -> Result<()> {
    put(&mut cfg, "alpha", a.alpha);
    put(&mut cfg, "re", a.re);
    put(&mut cfg, "im_list", a.im_list.clone());
    put(&mut cfg, "pool", a.pool);
    put(&mut cfg, "trunc", a.trunc);
    put(&mut cfg, "gens", a.gens);
    put(&mut cfg, "seed", a.seed);
    reject_unknown(&cfg, &["alpha", "re", "im_list", "pool", "trunc", "gens", "seed", "tail_correction"])?;
    let alpha: f64 = take(&cfg, "alpha", 0.5)?;
    let re: f64 = take(&cfg, "re", 10.0)?;
    let mut ims: Vec<f64> = take(&cfg, "im_list", vec![0.2, 0.1, 0.05, 0.02])?;
    let pool: usize = take(&cfg, "pool", 100_000)?;
    let trunc: usize = take(&cfg, "trunc", 200)?;
    let gens: usize = take(&cfg, "gens", 50)?;
    let seed: u64 = take(&cfg, "seed", 0)?;
    let tail_correction: bool = take(&cfg, "tail_correction", true)?;
    ims.sort_by(|x, y| y.total_cmp(x));
    ims.dedup();
    if pool == 0 || gens == 0 {
        return Err(LabError::param("need pool >= 1 and gens >= 1"));
    }
    let base = PoolConfig { alpha, z: Complex64::new(re, ims[0]), size: pool, trunc, generations: gens, seed, tail_correction };
    let table = run.stage("population-dynamics", || vanishing_imag_diagnostic(alpha, re, &ims, &base))?;
    let results: Vec<Value> = table
        .rows
        .iter()
        .map(|r| {
            json!({"z": [re, r.eta], "mean_abs_frac": r.mean_abs_frac, "mean_im_frac": r.mean_im_frac,
                "std_err": r.std_err, "bound": r.bound})
        })
        .collect();
    let mut rep = report_header(
        "rde",
        json!({"alpha": alpha, "re": re, "im_list": ims, "pool": pool, "trunc": trunc, "gens": gens,
            "seed": seed, "tail_correction": tail_correction}),
    );
    rep.insert("results".into(), json!(results));
    rep.insert("slope".into(), json!(table.slope));
    rep.insert("generations".into(), json!(table.generations));
    rep.insert(
        "diagnostics".into(),
        json!({"tail_mean": table.tail_mean, "tail_small": table.tail_small, "resampled": table.resampled}),
    );
    let rows: Vec<Vec<f64>> = table.rows.iter().map(|r| vec![r.eta, r.mean_abs_frac, r.mean_im_frac, r.std_err]).collect();
    run.write_csv("frac_moment_vs_eta.csv", &["eta", "mean_abs_frac", "mean_im_frac", "std_err"], &rows)?;
    rep.insert("files".into(), json!(["frac_moment_vs_eta.csv"]));
    run.write_json("report.json", &Value::Object(rep))
}

fn cmd_report(run: &mut Run, a: &ReportArgs) -> Result<i32> {
    let plan: Map<String, Value> = match &a.config {
        Some(p) => match serde_json::from_str::<Value>(&fs::read_to_string(p)?)? {
            Value::Object(m) => m,
            _ => return Err(LabError::param("report config must map experiment names to configs")),
        },
        None => EXPERIMENTS.iter().map(|n| (n.to_string(), json!({}))).collect(),
    };
    let exps = plan.keys().map(|k| experiment(k)).collect::<Result<Vec<_>>>()?;
    let mut summary = Map::new();
    let mut code = 0;
    for (exp, (name, cfg)) in exps.iter().zip(&plan) {
        let rep = run.stage(name, || exp.run(cfg))?;
        let dir = run.out.join(name);
        fs::create_dir_all(&dir)?;
        let sub = Run { out: dir, hex: run.hex, timings: BTreeMap::new(), started: Instant::now() };
        write_experiment(&sub, &rep)?;
        code = code.max(exit_for(&rep));
        summary.insert(
            name.clone(),
            json!({"checks": rep.checks, "out_of_regime": rep.out_of_regime, "all_passed": rep.all_passed()}),
        );
    }
    let mut rep = report_header("report", Value::Object(plan));
    rep.insert("experiments".into(), Value::Object(summary));
    run.write_json("report.json", &Value::Object(rep))?;
    Ok(code)
}

fn error_json(err: &LabError) -> Value {
    let mut v = json!({"error": err.kind(), "message": err.to_string(), "exit_code": err.exit_code()});
    if let LabError::Numerical { seed: Some(s), .. } = err {
        v["seed"] = json!(s);
    }
    v
}

fn execute(cli: &Cli) -> Result<i32> {
    if let Command::Rho(a) = &cli.command {
        let r = rho_of_alpha(a.alpha)?;
        println!("rho = {}", r.rho);
        println!("gamma = {}", r.gamma_exp);
        return Ok(0);
    }
    let mut cfg = match &cli.command {
        Command::SampleMatrix(a) => load_config(&a.cfg)?,
        Command::Spectrum(a) => load_config(&a.cfg)?,
        Command::LimitDensity(a) => load_config(&a.cfg)?,
        Command::Rde(a) => load_config(&a.cfg)?,
        Command::LocalLaw(a) | Command::Wegner(a) | Command::Deloc(a) | Command::Loc(a) | Command::FracMoment(a) => {
            load_config(&a.cfg)?
        }
        Command::Report(_) | Command::Rho(_) => Map::new(),
    };
    let out = output_dir(&cli.out, &mut cfg)?;
    fs::create_dir_all(&out)?;
    let mut run = Run { out, hex: cli.hex, timings: BTreeMap::new(), started: Instant::now() };
    let result = match &cli.command {
        Command::SampleMatrix(a) => cmd_sample_matrix(&mut run, a, cfg).map(|_| 0),
        Command::Spectrum(a) => cmd_spectrum(&mut run, a, cfg).map(|_| 0),
        Command::LimitDensity(a) => cmd_limit_density(&mut run, a, cfg),
        Command::LocalLaw(a) => cmd_experiment(&mut run, "local-law", a, cfg),
        Command::Wegner(a) => cmd_experiment(&mut run, "wegner", a, cfg),
        Command::Deloc(a) => cmd_experiment(&mut run, "deloc", a, cfg),
        Command::Loc(a) => cmd_experiment(&mut run, "loc", a, cfg),
        Command::FracMoment(a) => cmd_experiment(&mut run, "frac-moment", a, cfg),
        Command::Rde(a) => cmd_rde(&mut run, a, cfg).map(|_| 0),
        Command::Report(a) => cmd_report(&mut run, a),
        Command::Rho(_) => unreachable!(),
    };
    let name = command_name(&cli.command);
    match result {
        Ok(code) => {
            run.finish(name)?;
            Ok(code)
        }
        Err(err) => {
            let _ = run.write_json("error.json", &error_json(&err));
            let _ = run.finish(name);
            Err(err)
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::SampleMatrix(_) => "sample-matrix",
        Command::Spectrum(_) => "spectrum",
        Command::LimitDensity(_) => "limit-density",
        Command::LocalLaw(_) => "local-law",
        Command::Wegner(_) => "wegner",
        Command::Deloc(_) => "deloc",
        Command::Loc(_) => "loc",
        Command::Rde(_) => "rde",
        Command::FracMoment(_) => "frac-moment",
        Command::Report(_) => "report",
        Command::Rho(_) => "rho",
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                eprintln!("{}", json!({"error": "usage", "message": e.to_string().trim(), "exit_code": 2}));
                std::process::exit(2);
            }
            e.exit();
        }
    };
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build_global() {
            eprintln!("{}", json!({"error": "usage", "message": e.to_string(), "exit_code": 2}));
            std::process::exit(2);
        }
    }
    let code = match execute(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("{}", error_json(&err));
            err.exit_code()
        }
    };
    std::process::exit(code);
}
