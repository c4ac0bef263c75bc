//! Batch driver: parse a run configuration, execute the requested pipeline,
//! emit a machine-readable JSON report (and a short summary on stderr).
//!
//! Exit codes: 0 success, 2 non-converged diagnostics (values still
//! written, flagged), 1 hard error.

use clap::Parser;
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use sgwres::dirac::{build_dirac, wres_dirac};
use sgwres::fpint::{finite_part_integral, FpConfig, HomTerm, RealFn};
use sgwres::geometry::{fixed_rays, MetricField};
use sgwres::laplacian::{
    epsilon_shift_wres, heat_trace_coefficients, wres_from_heat, GeneralizedLaplacian,
};
use sgwres::{Result, SgError};

#[derive(Parser)]
#[command(
    name = "sgwres",
    about = "Regularized residues of pseudodifferential symbols on R^n"
)]
struct Cli {
    /// curvature | fpint | wres-dirac | wres-laplacian | epsilon-shift | verify-kkw
    command: String,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Overrides quad.fit_tolerance and the verify-kkw gap tolerance.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Jitter applied to sample points in the check commands.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Flat dotted-key configuration: one `section.key = value` per line,
/// `#` comments.
struct Config(BTreeMap<String, String>);

impl Config {
    fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Config(map))
    }

    fn str(&self, key: &str, default: &str) -> String {
        self.0.get(key).cloned().unwrap_or_else(|| default.into())
    }

    fn f64(&self, key: &str, default: f64) -> std::result::Result<f64, String> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| format!("{}: bad number {:?}", key, v)),
        }
    }

    fn usize(&self, key: &str, default: usize) -> std::result::Result<usize, String> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| format!("{}: bad integer {:?}", key, v)),
        }
    }

    fn bool(&self, key: &str, default: bool) -> std::result::Result<bool, String> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| format!("{}: bad bool {:?}", key, v)),
        }
    }
}

fn metric_from(cfg: &Config) -> std::result::Result<MetricField, String> {
    let n = cfg.usize("metric.n", 4)?;
    if n < 2 || n > 8 {
        return Err(format!("metric.n = {} out of range [2, 8]", n));
    }
    match cfg.str("metric.kind", "flat").as_str() {
        "flat" => Ok(MetricField::flat(n)),
        "conformal" => {
            let c = cfg.f64("metric.c", 0.25)?;
            let p = cfg.f64("metric.p", 2.0)?;
            Ok(MetricField::conformal(n, c, p))
        }
        other => Err(format!("metric.kind = {:?} not recognized", other)),
    }
}

fn fp_config_from(
    cfg: &Config,
    tolerance: Option<f64>,
    defaults: FpConfig,
) -> std::result::Result<FpConfig, String> {
    let d = defaults;
    let fit_tolerance = match tolerance {
        Some(t) if t > 0.0 => t,
        Some(t) => return Err(format!("--tolerance {} must be positive", t)),
        None => cfg.f64("quad.fit_tolerance", d.fit_tolerance)?,
    };
    if fit_tolerance <= 0.0 {
        return Err("quad.fit_tolerance must be positive".into());
    }
    Ok(FpConfig {
        sphere_level: cfg.usize("quad.sphere_level", d.sphere_level)?,
        rho0: cfg.f64("quad.rho0", d.rho0)?,
        ladder_count: cfg.usize("quad.ladder_count", d.ladder_count)?,
        radial_points: cfg.usize("quad.radial_points", d.radial_points)?,
        fit_tolerance,
        assume_radial: cfg.bool("quad.assume_radial", true)?,
        xi_sphere_level: cfg.usize("quad.xi_sphere_level", d.xi_sphere_level)?,
    })
}

/// Lighter quadrature defaults for the symbol route, where every integrand
/// evaluation is a sphere integral of parametrix jets.
fn symbol_route_defaults() -> FpConfig {
    FpConfig {
        radial_points: 12,
        ladder_count: 6,
        xi_sphere_level: 2,
        ..FpConfig::default()
    }
}

fn laplacian_from(cfg: &Config, g: &MetricField) -> std::result::Result<GeneralizedLaplacian, String> {
    let kind = cfg.str("endo.kind", "zero");
    match kind.as_str() {
        "zero" => {
            let rank = cfg.usize("endo.rank", 1)?;
            Ok(GeneralizedLaplacian::free(g, rank))
        }
        "constant" => {
            let rank = cfg.usize("endo.rank", 1)?;
            let c = cfg.f64("endo.c", 0.0)?;
            Ok(GeneralizedLaplacian::with_constant_k(g, rank, c))
        }
        "lichnerowicz" => GeneralizedLaplacian::lichnerowicz(g).map_err(|e| e.to_string()),
        other => Err(format!("endo.kind = {:?} not recognized", other)),
    }
}

/// Deterministic sample points: fixed directions scaled to a spread of
/// radii, with an optional seed-driven jitter.
fn sample_points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let rays = fixed_rays(n, count);
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
    };
    rays.into_iter()
        .enumerate()
        .map(|(i, ray)| {
            let jitter = if seed == 0 { 0.0 } else { 0.05 * next() };
            let r = 0.25 + 1.5 * i as f64 / count.max(1) as f64 + jitter;
            ray.iter().map(|&u| r * u).collect()
        })
        .collect()
}

/// The configurable fpint integrands: `powlaw` is (1 + |x|^2)^q with its
/// analytic x-expansion from the binomial series, `constant` is a plain
/// constant (expansion term at degree 0).
fn fp_integrand(cfg: &Config, n: usize) -> std::result::Result<(RealFn, Vec<HomTerm>, f64), String> {
    match cfg.str("fpint.integrand", "powlaw").as_str() {
        "powlaw" => {
            let q = cfg.f64("fpint.exponent", -3.0)?;
            let a: RealFn = Arc::new(move |x: &[f64]| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                Ok((1.0 + r2).powf(q))
            });
            // (1+r^2)^q = r^{2q} sum_k C(q,k) r^{-2k}
            let mut terms = Vec::new();
            let mut coeff = 1.0;
            let mut k = 0u32;
            while 2.0 * q - 2.0 * k as f64 >= -(n as f64) - 1.0 {
                let c = coeff;
                terms.push(HomTerm {
                    degree: 2.0 * q - 2.0 * k as f64,
                    f: Arc::new(move |_u: &[f64]| Ok(c)),
                });
                coeff *= (q - k as f64) / (k as f64 + 1.0);
                k += 1;
            }
            Ok((a, terms, 2.0 * q))
        }
        "constant" => {
            let c = cfg.f64("fpint.value", 1.0)?;
            let a: RealFn = Arc::new(move |_x: &[f64]| Ok(c));
            let terms = vec![HomTerm {
                degree: 0.0,
                f: Arc::new(move |_u: &[f64]| Ok(c)),
            }];
            Ok((a, terms, 0.0))
        }
        other => Err(format!("fpint.integrand = {:?} not recognized", other)),
    }
}

#[derive(Serialize)]
struct Report {
    schema: &'static str,
    command: String,
    #[serde(flatten)]
    body: Value,
}

fn emit(cli: &Cli, body: Value) -> std::io::Result<()> {
    let report = Report {
        schema: "sg-wres/1",
        command: cli.command.clone(),
        body,
    };
    let mut text = serde_json::to_string_pretty(&report).expect("report serialization");
    text.push('\n');
    match &cli.output {
        Some(path) => std::fs::write(path, text),
        None => {
            print!("{}", text);
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> std::result::Result<(Value, bool), String> {
    let cfg = match &cli.config {
        Some(path) => Config::parse(
            &std::fs::read_to_string(path).map_err(|e| format!("{}: {}", path.display(), e))?,
        )?,
        None => Config(BTreeMap::new()),
    };
    let hard = |e: SgError| e.to_string();

    match cli.command.as_str() {
        "curvature" => {
            let g = metric_from(&cfg)?;
            let count = cfg.usize("samples.count", 8)?;
            let points = sample_points(g.n, count, cli.seed);
            let data: Result<Vec<_>> = points.iter().map(|x| g.curvature_at(x)).collect();
            let sg_report = g.check_sg_classical(2, 8).map_err(hard)?;
            let ok = sg_report.pass;
            Ok((
                json!({
                    "n": g.n,
                    "points": data.map_err(hard)?,
                    "sg_classical": sg_report,
                }),
                ok,
            ))
        }
        "fpint" => {
            let n = cfg.usize("metric.n", 4)?;
            let fp_cfg = fp_config_from(&cfg, cli.tolerance, FpConfig::default())?;
            let (a, terms, m) = fp_integrand(&cfg, n)?;
            let report = finite_part_integral(n, m, &a, &terms, None, None, &fp_cfg).map_err(hard)?;
            let ok = report.converged;
            Ok((json!({ "n": n, "order": m, "report": report }), ok))
        }
        "wres-dirac" => {
            let g = metric_from(&cfg)?;
            if g.n != 4 {
                return Err(format!("wres-dirac requires n=4 (metric.n = {})", g.n));
            }
            let fp_cfg = fp_config_from(&cfg, cli.tolerance, symbol_route_defaults())?;
            let count = cfg.usize("kastler.points", 10)?;
            let points = sample_points(4, count, cli.seed);
            let dd = build_dirac(&g).map_err(hard)?;
            let report = wres_dirac(&dd, &points, &fp_cfg).map_err(hard)?;
            let ok = report.symbol_report.fpint.as_ref().map_or(true, |r| r.converged);
            Ok((serde_json::to_value(&report).unwrap(), ok))
        }
        "wres-laplacian" => {
            let g = metric_from(&cfg)?;
            let fp_cfg = fp_config_from(&cfg, cli.tolerance, FpConfig::default())?;
            let lap = laplacian_from(&cfg, &g)?;
            let ht = heat_trace_coefficients(&lap, &fp_cfg).map_err(hard)?;
            let w = wres_from_heat(&lap, &fp_cfg).map_err(hard)?;
            let ok = ht.c1_report.converged && ht.volume_report.converged;
            Ok((
                json!({ "heat_trace": ht, "wres": w }),
                ok,
            ))
        }
        "epsilon-shift" => {
            let g = metric_from(&cfg)?;
            let fp_cfg = fp_config_from(&cfg, cli.tolerance, FpConfig::default())?;
            let eps = cfg.f64("epsilon.value", 0.0)?;
            if eps < 0.0 {
                return Err(format!("epsilon.value = {} must be >= 0", eps));
            }
            let r = epsilon_shift_wres(&g, eps, &fp_cfg).map_err(hard)?;
            Ok((serde_json::to_value(&r).unwrap(), true))
        }
        "verify-kkw" => {
            let g = metric_from(&cfg)?;
            if g.n != 4 {
                return Err(format!("verify-kkw requires n=4 (metric.n = {})", g.n));
            }
            let fp_cfg = fp_config_from(&cfg, cli.tolerance, symbol_route_defaults())?;
            let gap_tol = cli.tolerance.unwrap_or(cfg.f64("verify.tolerance", 1e-3)?);
            let count = cfg.usize("kastler.points", 4)?;
            let points = sample_points(4, count, cli.seed);
            let dd = build_dirac(&g).map_err(hard)?;
            let symbol = wres_dirac(&dd, &points, &fp_cfg).map_err(hard)?;
            let lap = GeneralizedLaplacian::lichnerowicz(&g).map_err(hard)?;
            let heat = wres_from_heat(&lap, &fp_cfg).map_err(hard)?;
            let relative_gap = (symbol.wres_symbol_route - heat.value).abs()
                / heat.value.abs().max(1e-10);
            let ok = relative_gap <= gap_tol
                && symbol.symbol_report.fpint.as_ref().map_or(true, |r| r.converged);
            Ok((
                json!({
                    "wres_symbol_route": symbol.wres_symbol_route,
                    "wres_curvature_route": symbol.wres_curvature_route,
                    "wres_heat_route": heat.value,
                    "relative_gap": relative_gap,
                    "gap_tolerance": gap_tol,
                    "pass": ok,
                    "symbol": symbol,
                    "heat": heat,
                }),
                ok,
            ))
        }
        other => Err(format!("unknown command {:?}", other)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((body, ok)) => {
            if let Err(e) = emit(&cli, body) {
                eprintln!("error: {}", e);
                return ExitCode::from(1);
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                eprintln!("warning: diagnostics flagged non-converged or out of tolerance");
                ExitCode::from(2)
            }
        }
        Err(msg) => {
            eprintln!("error: {}", msg);
            ExitCode::from(1)
        }
    }
}
