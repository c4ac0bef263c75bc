//! Finite-part integrals over R^n with explicit subtraction of the divergent
//! radial powers (and a log term in the integer-order case), plus assembly of
//! the regularized noncommutative residue from a sphere trace.

use crate::error::{Result, SgError};
use crate::geometry::MetricField;
use crate::quad::{gauss_legendre_panel, sphere_rule, SphereRule};
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

pub type RealFn = Arc<dyn Fn(&[f64]) -> Result<f64> + Send + Sync>;

/// An x-homogeneous expansion term, given by its restriction to |x| = 1.
#[derive(Clone)]
pub struct HomTerm {
    pub degree: f64,
    pub f: RealFn,
}

#[derive(Clone, Debug)]
pub struct FpConfig {
    pub sphere_level: usize,
    pub rho0: f64,
    pub ladder_count: usize,
    /// Gauss-Legendre points per radial panel.
    pub radial_points: usize,
    pub fit_tolerance: f64,
    /// Evaluate the integrand along a single ray and scale by the sphere
    /// measure (valid for rotation-invariant integrands; spot-checked).
    pub assume_radial: bool,
    /// Sphere level for the inner xi-integral of the residue assembly; the
    /// parametrix trace is nearly polynomial on the sphere, so a low level
    /// is exact to many digits while each node costs a full jet evaluation.
    pub xi_sphere_level: usize,
}

impl Default for FpConfig {
    fn default() -> Self {
        FpConfig {
            sphere_level: 6,
            rho0: 8.0,
            ladder_count: 8,
            radial_points: 32,
            fit_tolerance: 1e-6,
            assume_radial: false,
            xi_sphere_level: 3,
        }
    }
}

#[derive(Clone, Serialize)]
pub struct FPIntReport {
    pub value: f64,
    pub betas: Vec<f64>,
    pub log_coefficient: f64,
    pub rho_samples: Vec<f64>,
    /// Per-rho subtraction record (the divergent sum removed at each rho).
    pub subtracted_tail: Vec<f64>,
    pub remainders: Vec<f64>,
    pub fit_residual: f64,
    pub converged: bool,
}

/// Integral of an x-homogeneous term against the (optionally weighted)
/// surface measure on |x| = 1.
pub fn beta_coefficient(h: &RealFn, rule: &SphereRule, weight: Option<&RealFn>) -> Result<f64> {
    let mut err: Option<SgError> = None;
    let v = rule.integrate(|u| {
        let base = match h(u) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                return 0.0;
            }
        };
        let w = match weight {
            None => 1.0,
            Some(wf) => match wf(u) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    return 0.0;
                }
            },
        };
        base * w
    });
    if let Some(e) = err {
        return Err(e);
    }
    if !v.is_finite() {
        return Err(SgError::NonFinite("surface coefficient"));
    }
    Ok(v)
}

/// F(r) = r^{n-1} * integral over directions of the (density-weighted)
/// integrand minus the supplied expansion terms r^{deg} h(omega) sw(omega);
/// subtracting under the integral sign keeps the cancellation at full
/// relative precision. The radial shortcut replaces the direction integral
/// by value-at-one-ray times the sphere measure.
#[allow(clippy::too_many_arguments)]
fn shell_value(
    a: &RealFn,
    density: Option<&RealFn>,
    sub_terms: &[(f64, RealFn, f64)], // (degree, h on |x|=1, surface weight sample unused)
    surface_weight: Option<&RealFn>,
    rule: &SphereRule,
    n: usize,
    r: f64,
    assume_radial: bool,
) -> Result<f64> {
    let eval = |u: &[f64]| -> Result<f64> {
        let x: Vec<f64> = u.iter().map(|&ui| r * ui).collect();
        let mut v = a(&x)?;
        if let Some(d) = density {
            v *= d(&x)?;
        }
        if !sub_terms.is_empty() {
            let sw = match surface_weight {
                None => 1.0,
                Some(wf) => wf(u)?,
            };
            for (deg, h, _) in sub_terms {
                v -= r.powf(*deg) * h(u)? * sw;
            }
        }
        Ok(v)
    };
    let shell = if assume_radial {
        let mut e1 = vec![0.0; n];
        e1[0] = 1.0;
        eval(&e1)? * rule.integrate(|_| 1.0)
    } else {
        let mut err: Option<SgError> = None;
        let v = rule.integrate(|u| match eval(u) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        v
    };
    let f = r.powi(n as i32 - 1) * shell;
    if !f.is_finite() {
        return Err(SgError::NonFinite("shell integrand"));
    }
    Ok(f)
}

/// Finite-part integral of a symbol of order m over R^n.
///
/// Computes I(rho) on a dyadic radius ladder, removes the divergent powers
/// sum_j beta_j/(n+m-j) rho^{n+m-j} (plus beta_{n+m} log rho when m is an
/// integer), and extrapolates the remainder to rho -> infinity by a
/// least-squares fit in inverse powers of rho. The tail beyond the first
/// ladder radius is accumulated with the subtraction applied pointwise under
/// the integral sign, which avoids catastrophic cancellation between large
/// I(rho) and the subtracted sum.
pub fn finite_part_integral(
    n: usize,
    m: f64,
    a: &RealFn,
    x_terms: &[HomTerm],
    density: Option<&RealFn>,
    surface_weight: Option<&RealFn>,
    cfg: &FpConfig,
) -> Result<FPIntReport> {
    if n < 2 {
        return Err(SgError::UnsupportedDimension(n));
    }
    let rule = sphere_rule(n, cfg.sphere_level)?;
    let integer_order = (m - m.round()).abs() < 1e-9;
    let nm = n as f64 + m;

    // subtraction data: expansion terms with n+m-j >= 0 (integer order,
    // exponent 0 is the log term) or n+m-j > 0 (non-integer order)
    let jmax: i64 = if integer_order {
        nm.round() as i64
    } else if nm > 0.0 {
        nm.floor() as i64
    } else {
        -1
    };
    let mut betas: Vec<f64> = Vec::new();
    let mut log_coefficient = 0.0;
    let mut power_terms: Vec<(f64, f64)> = Vec::new(); // (beta_j, exponent n+m-j)
    let mut sub_terms: Vec<(f64, RealFn, f64)> = Vec::new();
    for j in 0..=jmax.max(-1) {
        let deg = if integer_order { m.round() } else { m } - j as f64;
        let (beta, term) = match x_terms.iter().find(|t| (t.degree - deg).abs() < 1e-9) {
            Some(t) => (
                beta_coefficient(&t.f, &rule, surface_weight)?,
                Some(t.f.clone()),
            ),
            None => (0.0, None),
        };
        betas.push(beta);
        let ex = nm - j as f64;
        if integer_order && j == jmax {
            log_coefficient = beta;
        } else {
            power_terms.push((beta, ex));
        }
        if let Some(f) = term {
            sub_terms.push((deg, f, beta));
        }
    }
    if jmax < 0 {
        betas.clear();
    }

    let subtracted_at = |rho: f64| -> f64 {
        let mut s: f64 = power_terms.iter().map(|&(b, e)| b / e * rho.powf(e)).sum();
        s += log_coefficient * rho.ln();
        s
    };

    let ladder: Vec<f64> = (0..cfg.ladder_count)
        .map(|k| cfg.rho0 * (1u64 << k) as f64)
        .collect();

    // I(rho0) over [0, rho0] in a few equal panels, no subtraction
    let base_panels = 4usize;
    let mut i0 = 0.0;
    for p in 0..base_panels {
        let a0 = cfg.rho0 * p as f64 / base_panels as f64;
        let b0 = cfg.rho0 * (p + 1) as f64 / base_panels as f64;
        let (rs, ws) = gauss_legendre_panel(a0, b0, cfg.radial_points);
        let vals: Vec<Result<f64>> = rs
            .par_iter()
            .map(|&r| shell_value(a, density, &[], None, &rule, n, r, cfg.assume_radial))
            .collect();
        for (v, w) in vals.into_iter().zip(ws.iter()) {
            i0 += v? * w;
        }
    }

    let mut remainders = Vec::with_capacity(ladder.len());
    let mut subtracted_tail = Vec::with_capacity(ladder.len());
    let mut rem = i0 - subtracted_at(ladder[0]);
    remainders.push(rem);
    subtracted_tail.push(subtracted_at(ladder[0]));
    for k in 1..ladder.len() {
        let (rs, ws) = gauss_legendre_panel(ladder[k - 1], ladder[k], cfg.radial_points);
        let vals: Vec<Result<f64>> = rs
            .par_iter()
            .map(|&r| {
                shell_value(
                    a,
                    density,
                    &sub_terms,
                    surface_weight,
                    &rule,
                    n,
                    r,
                    cfg.assume_radial,
                )
            })
            .collect();
        let mut inc = 0.0;
        for (v, &w) in vals.into_iter().zip(ws.iter()) {
            inc += v? * w;
        }
        rem += inc;
        remainders.push(rem);
        subtracted_tail.push(subtracted_at(ladder[k]));
    }

    // slowest surviving decay exponent: the first expansion term beyond the
    // subtraction range contributes rho^{n+m-(jmax+1)}
    let e1 = (jmax + 1) as f64 - nm;
    let (value, fit_residual) = extrapolate(&ladder, &remainders, e1.max(0.5));
    let converged = fit_residual <= cfg.fit_tolerance * (1.0 + value.abs());
    Ok(FPIntReport {
        value,
        betas,
        log_coefficient,
        rho_samples: ladder,
        subtracted_tail,
        remainders,
        fit_residual,
        converged,
    })
}

/// Least-squares fit of rem(rho) = v + sum_k c_k rho^{-(e1+k)}; returns the
/// constant term and the rms misfit. The earliest ladder point is dropped
/// when enough points remain, since the power model is worst there.
fn extrapolate(all_rhos: &[f64], all_rems: &[f64], e1: f64) -> (f64, f64) {
    let skip = if all_rhos.len() >= 7 { 1 } else { 0 };
    let rhos = &all_rhos[skip..];
    let rems = &all_rems[skip..];
    let npts = rhos.len();
    let nb = 6.min(npts);
    let r0 = rhos[0];
    let basis = |rho: f64, k: usize| {
        if k == 0 {
            1.0
        } else {
            (r0 / rho).powf(e1 + (k - 1) as f64)
        }
    };
    // normal equations
    let mut ata = vec![0.0; nb * nb];
    let mut atb = vec![0.0; nb];
    for (&rho, &y) in rhos.iter().zip(rems.iter()) {
        for p in 0..nb {
            let bp = basis(rho, p);
            atb[p] += bp * y;
            for q in 0..nb {
                ata[p * nb + q] += bp * basis(rho, q);
            }
        }
    }
    let coef = solve_real(nb, &mut ata, &mut atb);
    let mut ss = 0.0;
    for (&rho, &y) in rhos.iter().zip(rems.iter()) {
        let fit: f64 = coef.iter().enumerate().map(|(k, &c)| c * basis(rho, k)).sum();
        ss += (fit - y) * (fit - y);
    }
    (coef[0], (ss / npts as f64).sqrt())
}

fn solve_real(n: usize, a: &mut [f64], b: &mut [f64]) -> Vec<f64> {
    for col in 0..n {
        let mut best = col;
        for r in (col + 1)..n {
            if a[r * n + col].abs() > a[best * n + col].abs() {
                best = r;
            }
        }
        if best != col {
            for j in 0..n {
                a.swap(col * n + j, best * n + j);
            }
            b.swap(col, best);
        }
        let p = a[col * n + col];
        if p.abs() < 1e-300 {
            continue;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[r * n + col] / p;
            for j in col..n {
                a[r * n + j] -= f * a[col * n + j];
            }
            b[r] -= f * b[col];
        }
    }
    (0..n)
        .map(|i| {
            let p = a[i * n + i];
            if p.abs() < 1e-300 {
                0.0
            } else {
                b[i] / p
            }
        })
        .collect()
}

#[derive(Clone, Serialize)]
pub struct WresReport {
    pub value: f64,
    pub mu: f64,
    pub non_integer_order: bool,
    pub smoothing: bool,
    /// Relative gap between one-ray and rotated-ray samples when the radial
    /// shortcut is active.
    pub radial_check_gap: f64,
    pub fpint: Option<FPIntReport>,
}

/// Assemble the regularized residue (2 pi)^{-n} fp-int of
/// f(x) = sphere integral of the trace of the xi-degree -n component,
/// against the metric volume density, with the surface coefficients taken
/// against the metric-induced surface measure.
///
/// `trace_fn(x, xi_unit)` evaluates that trace; `None` means the symbol has
/// no xi-degree -n component (smoothing case), which contributes zero.
pub fn assemble_wres(
    n: usize,
    mu: f64,
    order_m: f64,
    trace_fn: Option<RealFn2>,
    x_terms: &[HomTerm],
    g: &MetricField,
    cfg: &FpConfig,
) -> Result<WresReport> {
    if (mu - mu.round()).abs() > 1e-9 {
        return Ok(WresReport {
            value: 0.0,
            mu,
            non_integer_order: true,
            smoothing: false,
            radial_check_gap: 0.0,
            fpint: None,
        });
    }
    let trace_fn = match trace_fn {
        None => {
            return Ok(WresReport {
                value: 0.0,
                mu,
                non_integer_order: false,
                smoothing: true,
                radial_check_gap: 0.0,
                fpint: None,
            })
        }
        Some(t) => t,
    };
    let xi_rule = Arc::new(sphere_rule(n, cfg.xi_sphere_level)?);
    let f: RealFn = {
        let tr = trace_fn.clone();
        let xi_rule = xi_rule.clone();
        Arc::new(move |x: &[f64]| {
            let mut err: Option<SgError> = None;
            let v = xi_rule.integrate(|xi| match tr(x, xi) {
                Ok(v) => v,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            });
            match err {
                Some(e) => Err(e),
                None => Ok(v),
            }
        })
    };
    let mut radial_check_gap: f64 = 0.0;
    if cfg.assume_radial {
        // spot check: the density-weighted integrand must agree between the
        // first-axis ray and a rotated direction
        let density_at = |x: &[f64]| -> Result<f64> { g.sqrt_det(x) };
        for &r in &[cfg.rho0 * 0.37, cfg.rho0 * 2.6] {
            let mut x1 = vec![0.0; n];
            x1[0] = r;
            let mut x2 = vec![0.0; n];
            let inv = 1.0 / (n as f64).sqrt();
            for xi in x2.iter_mut() {
                *xi = r * inv;
            }
            let v1 = f(&x1)? * density_at(&x1)?;
            let v2 = f(&x2)? * density_at(&x2)?;
            let scale = v1.abs().max(v2.abs()).max(1e-12);
            radial_check_gap = radial_check_gap.max((v1 - v2).abs() / scale);
        }
        if radial_check_gap > 1e-4 {
            return Err(SgError::InvalidConfig(format!(
                "radial shortcut requested but integrand is anisotropic (gap {radial_check_gap:.3e})"
            )));
        }
    }
    let density: RealFn = {
        let g = g.clone();
        Arc::new(move |x: &[f64]| g.sqrt_det(x))
    };
    let surface: RealFn = {
        let g = g.clone();
        Arc::new(move |x: &[f64]| g.surface_density(x))
    };
    let report = finite_part_integral(
        n,
        order_m,
        &f,
        x_terms,
        Some(&density),
        Some(&surface),
        cfg,
    )?;
    let scale = (2.0 * std::f64::consts::PI).powi(-(n as i32));
    Ok(WresReport {
        value: scale * report.value,
        mu,
        non_integer_order: false,
        smoothing: false,
        radial_check_gap,
        fpint: Some(report),
    })
}

pub type RealFn2 = Arc<dyn Fn(&[f64], &[f64]) -> Result<f64> + Send + Sync>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::adaptive_integral;
    use std::f64::consts::PI;

    fn cfg() -> FpConfig {
        FpConfig::default()
    }

    fn as_fn<F: Fn(&[f64]) -> f64 + Send + Sync + 'static>(f: F) -> RealFn {
        Arc::new(move |x: &[f64]| Ok(f(x)))
    }

    fn norm2(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn l1_symbol_closed_form() {
        // integral of (1+|x|^2)^{-3} over R^4 is vol(S^3)/4 = pi^2/2
        let a = as_fn(|x| (1.0 + norm2(x)).powi(-3));
        let r = finite_part_integral(4, -6.0, &a, &[], None, None, &cfg()).unwrap();
        assert!(r.converged);
        assert!(r.betas.is_empty());
        assert!(
            (r.value - PI * PI / 2.0).abs() < 1e-8,
            "value {} residual {}",
            r.value,
            r.fit_residual
        );
    }

    #[test]
    fn log_case_cancels() {
        // (1+|x|^2)^{-1} on R^4: remainder pi^2 ln(rho^2/(1+rho^2)) -> 0
        let a = as_fn(|x| (1.0 + norm2(x)).powi(-1));
        let terms = vec![
            HomTerm {
                degree: -2.0,
                f: as_fn(|_| 1.0),
            },
            HomTerm {
                degree: -4.0,
                f: as_fn(|_| -1.0),
            },
        ];
        let r = finite_part_integral(4, -2.0, &a, &terms, None, None, &cfg()).unwrap();
        assert_eq!(r.betas.len(), 3);
        assert!((r.betas[0] - 2.0 * PI * PI).abs() < 1e-9);
        assert!(r.betas[1].abs() < 1e-12);
        assert!((r.log_coefficient + 2.0 * PI * PI).abs() < 1e-9);
        assert!(r.value.abs() < 1e-6, "value {}", r.value);
    }

    #[test]
    fn constant_symbol_exact_cancellation() {
        let a = as_fn(|_| 1.0);
        let terms = vec![HomTerm {
            degree: 0.0,
            f: as_fn(|_| 1.0),
        }];
        let r = finite_part_integral(4, 0.0, &a, &terms, None, None, &cfg()).unwrap();
        assert!(r.value.abs() < 1e-10, "value {}", r.value);
        assert!(r.log_coefficient.abs() < 1e-12);
    }

    #[test]
    fn non_integer_order_no_log() {
        // |x|-degree -2.5 symbol: one divergent power (exponent 1.5), no log
        let a = as_fn(|x| (1.0 + norm2(x)).powf(-1.25));
        let terms = vec![HomTerm {
            degree: -2.5,
            f: as_fn(|_| 1.0),
        }];
        let r = finite_part_integral(4, -2.5, &a, &terms, None, None, &cfg()).unwrap();
        assert_eq!(r.log_coefficient, 0.0);
        assert_eq!(r.betas.len(), 2);
        assert!(r.converged, "residual {}", r.fit_residual);
        // closed form: with u = r^2, the radial antiderivative is
        // (1/2)[(4/3)(1+u)^{3/4} + 4(1+u)^{-1/4} - 16/3]; after removing the
        // growing power the finite part is -8/3 per unit sphere measure
        let oracle = 2.0 * PI * PI * (-8.0 / 3.0);
        assert!(
            (r.value - oracle).abs() < 1e-6 * oracle.abs(),
            "value {} oracle {}",
            r.value,
            oracle
        );
    }

    #[test]
    fn linearity() {
        let a = as_fn(|x| (1.0 + norm2(x)).powi(-1));
        let b = as_fn(|x| (1.0 + norm2(x)).powi(-3));
        let combo = as_fn(|x| 2.0 * (1.0 + norm2(x)).powi(-1) - 3.0 * (1.0 + norm2(x)).powi(-3));
        let terms_a = vec![
            HomTerm {
                degree: -2.0,
                f: as_fn(|_| 1.0),
            },
            HomTerm {
                degree: -4.0,
                f: as_fn(|_| -1.0),
            },
        ];
        let terms_combo = vec![
            HomTerm {
                degree: -2.0,
                f: as_fn(|_| 2.0),
            },
            HomTerm {
                degree: -4.0,
                f: as_fn(|_| -2.0),
            },
        ];
        let ra = finite_part_integral(4, -2.0, &a, &terms_a, None, None, &cfg()).unwrap();
        let rb = finite_part_integral(4, -6.0, &b, &[], None, None, &cfg()).unwrap();
        let rc = finite_part_integral(4, -2.0, &combo, &terms_combo, None, None, &cfg()).unwrap();
        assert!((rc.value - (2.0 * ra.value - 3.0 * rb.value)).abs() < 1e-6);
    }

    #[test]
    fn ladder_independence() {
        let a = as_fn(|x| (1.0 + norm2(x)).powi(-3));
        let mut c2 = cfg();
        c2.rho0 *= 2.0;
        let r1 = finite_part_integral(4, -6.0, &a, &[], None, None, &cfg()).unwrap();
        let r2 = finite_part_integral(4, -6.0, &a, &[], None, None, &c2).unwrap();
        assert!((r1.value - r2.value).abs() < 1e-6 * r1.value.abs());
    }

    #[test]
    fn agrees_with_adaptive_on_l1() {
        let rule = sphere_rule(4, 6).unwrap();
        let fns: Vec<RealFn> = vec![
            as_fn(|x| (1.0 + norm2(x)).powi(-3)),
            as_fn(|x| (1.0 + norm2(x)).powi(-4)),
            as_fn(|x| (-norm2(x)).exp()),
            as_fn(|x| x[0] * x[0] * (1.0 + norm2(x)).powi(-4)),
        ];
        for a in &fns {
            let r = finite_part_integral(4, -6.0, a, &[], None, None, &cfg()).unwrap();
            let oracle = adaptive_integral(&|x: &[f64]| a(x).unwrap(), 4, &rule, 1e-10).unwrap();
            assert!(
                (r.value - oracle).abs() < 1e-6 * oracle.abs().max(1.0),
                "fp {} adaptive {}",
                r.value,
                oracle
            );
        }
    }

    #[test]
    fn radial_shortcut_matches_full() {
        let a = as_fn(|x| (1.0 + norm2(x)).powi(-3));
        let mut cr = cfg();
        cr.assume_radial = true;
        let r1 = finite_part_integral(4, -6.0, &a, &[], None, None, &cfg()).unwrap();
        let r2 = finite_part_integral(4, -6.0, &a, &[], None, None, &cr).unwrap();
        assert!((r1.value - r2.value).abs() < 1e-10);
    }

    #[test]
    fn wres_flags() {
        let g = MetricField::flat(4);
        let r = assemble_wres(4, 1.5, -4.0, None, &[], &g, &cfg()).unwrap();
        assert!(r.non_integer_order && r.value == 0.0);
        let r = assemble_wres(4, 2.0, -4.0, None, &[], &g, &cfg()).unwrap();
        assert!(r.smoothing && r.value == 0.0);
    }

    #[test]
    fn wres_constant_trace_is_zero() {
        // trace identically 1: the residue reduces to the constant-symbol
        // finite part, which cancels exactly
        let g = MetricField::flat(4);
        let tr: RealFn2 = Arc::new(|_x, _xi| Ok(1.0));
        // the leading x-term is the sphere measure as the rule sees it
        let vol = sphere_rule(4, cfg().xi_sphere_level)
            .unwrap()
            .integrate(|_| 1.0);
        assert!((vol - 2.0 * PI * PI).abs() < 1e-11);
        let terms = vec![HomTerm {
            degree: 0.0,
            f: as_fn(move |_| vol),
        }];
        let r = assemble_wres(4, 2.0, 0.0, Some(tr), &terms, &g, &cfg()).unwrap();
        assert!(r.value.abs() < 1e-10, "value {}", r.value);
    }
}
