//! Heat-coefficient route: generalized Laplacians nabla*nabla + K on a
//! rank-r bundle, the local t^1 heat coefficient a1 = (1/6) s Id - K, the
//! finite-part heat-trace coefficients C0/C1, and the residue extracted from
//! c_{2,0} = (4 pi)^{-n/2} C1.

use crate::dirac::SpinConnectionFn;
use crate::error::{Result, SgError};
use crate::fpint::{finite_part_integral, FPIntReport, FpConfig, HomTerm, RealFn};
use crate::geometry::{MetricField, MetricKind};
use crate::jet::{Jet, JetShape};
use crate::mat::CMat;
use crate::quad::gamma;
use serde::Serialize;
use std::sync::Arc;

pub type EndoFn = Arc<dyn Fn(&[f64]) -> Result<CMat> + Send + Sync>;

/// Delta = nabla*nabla + K on a rank-`rank` Hermitian bundle over (R^n, g).
/// `trk_x_terms` are the x-homogeneous terms of trace(K_x) at infinity,
/// needed by the finite-part subtraction when K does not decay.
#[derive(Clone)]
pub struct GeneralizedLaplacian {
    pub g: MetricField,
    pub rank: usize,
    pub connection: SpinConnectionFn,
    pub k: EndoFn,
    pub trk_x_terms: Vec<HomTerm>,
}

pub fn zero_connection(n: usize, rank: usize) -> SpinConnectionFn {
    Arc::new(move |x: &[f64], order: usize| {
        let shape = JetShape::single(n, order);
        Ok(vec![Jet::zero(shape, x, rank); n])
    })
}

impl GeneralizedLaplacian {
    /// Trivial bundle with zero endomorphism and flat connection.
    pub fn free(g: &MetricField, rank: usize) -> Self {
        let connection = zero_connection(g.n, rank);
        let k: EndoFn = Arc::new(move |_x: &[f64]| Ok(CMat::zeros(rank)));
        GeneralizedLaplacian {
            g: g.clone(),
            rank,
            connection,
            k,
            trk_x_terms: vec![],
        }
    }

    /// K = c Id (constant endomorphism; trace(K) contributes the degree-0
    /// x-term rank*c to the subtraction).
    pub fn with_constant_k(g: &MetricField, rank: usize, c: f64) -> Self {
        let mut lap = Self::free(g, rank);
        lap.k = Arc::new(move |_x: &[f64]| Ok(CMat::identity(rank).scale((c).into())));
        let tr = rank as f64 * c;
        lap.trk_x_terms = vec![HomTerm {
            degree: 0.0,
            f: Arc::new(move |_u: &[f64]| Ok(tr)),
        }];
        lap
    }

    /// K = s/4 Id on the spinor rank 2^{n/2}, so that Delta has the same
    /// local data as the square of the Dirac operator.
    pub fn lichnerowicz(g: &MetricField) -> Result<Self> {
        if g.n % 2 != 0 {
            return Err(SgError::UnsupportedDimension(g.n));
        }
        let rank = 1usize << (g.n / 2);
        let mut lap = Self::free(g, rank);
        let gk = g.clone();
        lap.k = Arc::new(move |x: &[f64]| {
            let s = gk.scalar_curvature(x)?;
            Ok(CMat::identity(rank).scale((s / 4.0).into()))
        });
        Ok(lap)
    }
}

pub struct HeatCoefficients {
    pub x: Vec<f64>,
    pub a0: CMat,
    /// (1/6) s(x) Id - K_x, the coefficient of t in the on-diagonal kernel
    /// expansion; everything past it is dropped.
    pub a1: CMat,
}

/// Local heat coefficients at a point; a1 depends only on the scalar
/// curvature and K, not on the connection.
pub fn heat_a1(lap: &GeneralizedLaplacian, x: &[f64]) -> Result<HeatCoefficients> {
    let s = lap.g.scalar_curvature(x)?;
    let kx = (lap.k)(x)?;
    if kx.d != lap.rank {
        return Err(SgError::DimensionMismatch(format!(
            "endomorphism dimension {} != rank {}",
            kx.d, lap.rank
        )));
    }
    let a1 = CMat::identity(lap.rank).scale((s / 6.0).into()).sub(&kx);
    Ok(HeatCoefficients {
        x: x.to_vec(),
        a0: CMat::identity(lap.rank),
        a1,
    })
}

fn radial_cfg(g: &MetricField, cfg: &FpConfig) -> FpConfig {
    let mut c = cfg.clone();
    c.assume_radial =
        cfg.assume_radial && matches!(g.kind, MetricKind::Flat | MetricKind::Conformal { .. });
    c
}

/// sqrt(det g)(x) - 1, evaluated without cancellation at large |x| for the
/// registry metrics (expm1 of n*phi in the conformal case).
fn sqrt_det_rem(g: &MetricField) -> RealFn {
    let n = g.n as f64;
    match g.kind {
        MetricKind::Flat => Arc::new(move |_x: &[f64]| Ok(0.0)),
        MetricKind::Conformal { c, p } => Arc::new(move |x: &[f64]| {
            let q: f64 = x.iter().map(|v| v * v).sum();
            Ok((n * c * (1.0 + q).powf(-p)).exp_m1())
        }),
        MetricKind::General { .. } => {
            let gd = g.clone();
            Arc::new(move |x: &[f64]| Ok(gd.sqrt_det(x)? - 1.0))
        }
    }
}

/// Finite part of the metric volume: fp-int of sqrt(det g) dx, computed as
/// fp-int of 1 (identically zero on R^n) plus fp-int of sqrt(det g) - 1. The
/// split keeps the divergent-term cancellation exact instead of losing
/// ulp-level accuracy against the r^{n-1} shell weight at the top of the
/// radius ladder.
pub fn fp_volume(g: &MetricField, cfg: &FpConfig) -> Result<FPIntReport> {
    let a = sqrt_det_rem(g);
    let mut terms: Vec<HomTerm> = Vec::new();
    let m = match g.kind {
        MetricKind::Flat => -(g.n as f64 + 2.0),
        MetricKind::Conformal { c, p } => {
            let lead = g.n as f64 * c;
            terms.push(HomTerm {
                degree: -2.0 * p,
                f: Arc::new(move |_u: &[f64]| Ok(lead)),
            });
            -2.0 * p
        }
        MetricKind::General { .. } => {
            if g.alpha.is_finite() {
                -g.alpha
            } else {
                -(g.n as f64 + 2.0)
            }
        }
    };
    finite_part_integral(g.n, m, &a, &terms, None, None, &radial_cfg(g, cfg))
}

/// Finite part of the total scalar curvature: fp-int of s sqrt(det g) dx.
pub fn fp_scalar_curvature(g: &MetricField, cfg: &FpConfig) -> Result<FPIntReport> {
    let gs = g.clone();
    let a: RealFn = Arc::new(move |x: &[f64]| {
        Ok(gs.scalar_curvature(x)? * gs.sqrt_det(x)?)
    });
    // s decays two orders faster than g - delta; below the subtraction range
    // for the registry metrics, so no x-terms
    let m = if g.alpha.is_finite() {
        -(g.alpha + 2.0)
    } else {
        -(g.n as f64 + 2.0)
    };
    finite_part_integral(g.n, m, &a, &[], None, None, &radial_cfg(g, cfg))
}

#[derive(Serialize)]
pub struct HeatTraceReport {
    pub n: usize,
    pub rank: usize,
    /// fp-int of rank * sqrt(det g) dx.
    pub c0: f64,
    /// fp-int of [rank/6 s - trace(K)] sqrt(det g) dx.
    pub c1: f64,
    /// fp report of the decaying part of the C1 integrand.
    pub c1_report: FPIntReport,
    /// fp report of sqrt(det g) - 1 (the volume finite part; fp-int of the
    /// constant part is identically zero on R^n).
    pub volume_report: FPIntReport,
}

/// Degree-0 (constant) part of trace(K) at infinity, if one was declared.
fn trk_constant(lap: &GeneralizedLaplacian) -> Result<f64> {
    let mut e1 = vec![0.0; lap.g.n];
    e1[0] = 1.0;
    match lap.trk_x_terms.iter().find(|t| t.degree == 0.0) {
        Some(t) => (t.f)(&e1),
        None => Ok(0.0),
    }
}

/// The two leading coefficients of the regularized heat trace
/// (4 pi t)^{-n/2} (C0 + C1 t + O(t^2)).
///
/// The non-decaying part of each integrand (rank, resp. the constant part of
/// trace(K)) is split off and handled through fp_volume, keeping the result
/// exactly linear in K; the remainder decays and needs no subtraction for
/// the registry metrics. Declared trace(K) terms of nonzero degree are
/// passed to the subtraction as-is.
pub fn heat_trace_coefficients(
    lap: &GeneralizedLaplacian,
    cfg: &FpConfig,
) -> Result<HeatTraceReport> {
    let g = &lap.g;
    let rank = lap.rank;
    let volume_report = fp_volume(g, cfg)?;
    let c0 = rank as f64 * volume_report.value;

    let trk0 = trk_constant(lap)?;
    let c1_report = {
        let gl = g.clone();
        let kf = lap.k.clone();
        let a: RealFn = Arc::new(move |x: &[f64]| {
            let s = gl.scalar_curvature(x)?;
            let trk = kf(x)?.trace().re;
            Ok((rank as f64 / 6.0 * s - (trk - trk0)) * gl.sqrt_det(x)?)
        });
        let terms: Vec<HomTerm> = lap
            .trk_x_terms
            .iter()
            .filter(|t| t.degree != 0.0)
            .map(|t| {
                let f = t.f.clone();
                HomTerm {
                    degree: t.degree,
                    f: Arc::new(move |u: &[f64]| Ok(-f(u)?)),
                }
            })
            .collect();
        let m = if terms.is_empty() {
            if g.alpha.is_finite() {
                -(g.alpha + 2.0)
            } else {
                -(g.n as f64 + 2.0)
            }
        } else {
            terms.iter().map(|t| t.degree).fold(f64::MIN, f64::max)
        };
        finite_part_integral(g.n, m, &a, &terms, None, None, &radial_cfg(g, cfg))?
    };
    let c1 = c1_report.value - trk0 * volume_report.value;
    Ok(HeatTraceReport {
        n: g.n,
        rank,
        c0,
        c1,
        c1_report,
        volume_report,
    })
}

/// (n-2) / (Gamma(n/2) (4 pi)^{n/2}), the prefactor of the general residue
/// formula in dimension n.
pub fn residue_prefactor(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    (n as f64 - 2.0) / (gamma(h) * (4.0 * std::f64::consts::PI).powf(h))
}

/// Relative gap between 2 Gamma((n-2)/2)^{-1} (4 pi)^{-n/2} and the
/// residue_prefactor expression; the Gamma functional equation makes them
/// equal.
pub fn gamma_identity_gap(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    let w1 = 2.0 / gamma(h - 1.0) * (4.0 * std::f64::consts::PI).powf(-h);
    let w2 = residue_prefactor(n);
    (w1 - w2).abs() / w2.abs()
}

#[derive(Serialize)]
pub struct HeatWresReport {
    pub n: usize,
    pub rank: usize,
    pub c0: f64,
    pub c1: f64,
    /// (4 pi)^{-n/2} C1, the coefficient of t^{-(n-2)/2} in the trace
    /// expansion.
    pub c20: f64,
    /// wres(Delta^{-n/2+1}) = 2 Gamma((n-2)/2)^{-1} c20.
    pub value: f64,
    pub gamma_identity_gap: f64,
    pub c1_report: FPIntReport,
}

/// wres(Delta^{-n/2+1}) through the heat coefficients.
pub fn wres_from_heat(lap: &GeneralizedLaplacian, cfg: &FpConfig) -> Result<HeatWresReport> {
    let n = lap.g.n;
    if n < 4 || n % 2 != 0 {
        return Err(SgError::UnsupportedDimension(n));
    }
    let ht = heat_trace_coefficients(lap, cfg)?;
    let h = n as f64 / 2.0;
    let c20 = (4.0 * std::f64::consts::PI).powf(-h) * ht.c1;
    let value = 2.0 / gamma(h - 1.0) * c20;
    Ok(HeatWresReport {
        n,
        rank: lap.rank,
        c0: ht.c0,
        c1: ht.c1,
        c20,
        value,
        gamma_identity_gap: gamma_identity_gap(n),
        c1_report: ht.c1_report,
    })
}

#[derive(Serialize)]
pub struct EpsilonShiftReport {
    pub n: usize,
    pub epsilon: f64,
    pub fp_scalar: f64,
    pub fp_volume: f64,
    pub value: f64,
}

/// wres((D^2 + eps I)^{-n/2+1}) in closed form:
/// (n-2) 2^{n/2} / (Gamma(n/2) (4 pi)^{n/2}) (-1/12 fp-int s - eps fp-int 1),
/// both finite parts against the metric volume.
pub fn epsilon_shift_wres(
    g: &MetricField,
    epsilon: f64,
    cfg: &FpConfig,
) -> Result<EpsilonShiftReport> {
    let n = g.n;
    if n < 4 || n % 2 != 0 {
        return Err(SgError::UnsupportedDimension(n));
    }
    let fs = fp_scalar_curvature(g, cfg)?;
    let fv = fp_volume(g, cfg)?;
    let pref = residue_prefactor(n) * (1u64 << (n / 2)) as f64;
    let value = pref * (-fs.value / 12.0 - epsilon * fv.value);
    Ok(EpsilonShiftReport {
        n,
        epsilon,
        fp_scalar: fs.value,
        fp_volume: fv.value,
        value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dirac::{build_clifford, kkw_constant, spin_connection};
    use crate::quad::{adaptive_simpson, sphere_volume};
    use std::f64::consts::PI;

    fn cfg() -> FpConfig {
        FpConfig {
            assume_radial: true,
            ..FpConfig::default()
        }
    }

    #[test]
    fn a1_formulas() {
        let flat = MetricField::flat(4);
        let x = [0.4, -1.1, 0.2, 0.7];
        let hc = heat_a1(&GeneralizedLaplacian::free(&flat, 4), &x).unwrap();
        assert!(hc.a1.norm_max() < 1e-14);
        assert!(hc.a0.sub(&CMat::identity(4)).norm_max() == 0.0);

        let hc = heat_a1(&GeneralizedLaplacian::with_constant_k(&flat, 4, 0.3), &x).unwrap();
        assert!(hc.a1.add(&CMat::identity(4).scale(0.3.into())).norm_max() < 1e-14);

        let g = MetricField::conformal(4, 0.25, 2.0);
        let s = g.scalar_curvature(&x).unwrap();
        let hc = heat_a1(&GeneralizedLaplacian::free(&g, 4), &x).unwrap();
        let want = CMat::identity(4).scale((s / 6.0).into());
        assert!(hc.a1.sub(&want).norm_max() < 1e-12 * s.abs().max(1.0));
    }

    #[test]
    fn a1_connection_independent() {
        let g = MetricField::conformal(4, 0.25, 2.0);
        let x = [0.4, -1.1, 0.2, 0.7];
        let mut lap_zero = GeneralizedLaplacian::lichnerowicz(&g).unwrap();
        let mut lap_spin = lap_zero.clone();
        lap_zero.connection = zero_connection(4, 4);
        lap_spin.connection = spin_connection(&g, &build_clifford(4).unwrap()).unwrap();
        let a = heat_a1(&lap_zero, &x).unwrap();
        let b = heat_a1(&lap_spin, &x).unwrap();
        assert!(a.a1.sub(&b.a1).norm_max() == 0.0);
    }

    #[test]
    fn flat_coefficients_vanish() {
        let flat = MetricField::flat(4);
        let c = cfg();
        for lap in [
            GeneralizedLaplacian::free(&flat, 4),
            GeneralizedLaplacian::with_constant_k(&flat, 4, 0.7),
        ] {
            let ht = heat_trace_coefficients(&lap, &c).unwrap();
            assert!(ht.c0.abs() < 1e-10, "C0 = {}", ht.c0);
            assert!(ht.c1.abs() < 1e-10, "C1 = {}", ht.c1);
            let w = wres_from_heat(&lap, &c).unwrap();
            assert!(w.value.abs() < 1e-10);
        }
    }

    #[test]
    fn conformal_c1_matches_adaptive() {
        // alpha = 4 > 2: the integrand is absolutely integrable, so the
        // finite part must agree with plain adaptive quadrature
        let g = MetricField::conformal(4, 0.25, 2.0);
        let lap = GeneralizedLaplacian::free(&g, 3);
        let ht = heat_trace_coefficients(&lap, &cfg()).unwrap();
        assert!(ht.c1_report.converged);
        // rotation-invariant integrand: 1D adaptive Simpson on the radial
        // profile times the sphere measure
        let gq = g.clone();
        let radial = move |s: f64| {
            if s >= 1.0 {
                return 0.0;
            }
            let r = s / (1.0 - s);
            let x = [r, 0.0, 0.0, 0.0];
            let v = gq.scalar_curvature(&x).unwrap() * gq.sqrt_det(&x).unwrap() * 0.5;
            v * r * r * r / ((1.0 - s) * (1.0 - s))
        };
        let plain = sphere_volume(4) * adaptive_simpson(&radial, 0.0, 0.999999, 1e-12, 30);
        assert!(
            (ht.c1 - plain).abs() < 1e-4 * plain.abs(),
            "C1 = {} plain = {}",
            ht.c1,
            plain
        );
    }

    #[test]
    fn lichnerowicz_reproduces_dirac_constant() {
        let g = MetricField::conformal(4, 0.25, 2.0);
        let lap = GeneralizedLaplacian::lichnerowicz(&g).unwrap();
        let w = wres_from_heat(&lap, &cfg()).unwrap();
        let fs = fp_scalar_curvature(&g, &cfg()).unwrap();
        let want = kkw_constant() * fs.value;
        assert!(
            (w.value - want).abs() < 1e-6 * want.abs(),
            "heat = {} expected = {}",
            w.value,
            want
        );
    }

    #[test]
    fn additivity_and_rank_scaling() {
        let g = MetricField::conformal(4, 0.3, 2.5);
        let c = cfg();
        let w0 = wres_from_heat(&GeneralizedLaplacian::free(&g, 4), &c)
            .unwrap()
            .value;
        let w1 = wres_from_heat(&GeneralizedLaplacian::with_constant_k(&g, 4, 0.2), &c)
            .unwrap()
            .value;
        let w2 = wres_from_heat(&GeneralizedLaplacian::with_constant_k(&g, 4, 0.5), &c)
            .unwrap()
            .value;
        let w12 = wres_from_heat(&GeneralizedLaplacian::with_constant_k(&g, 4, 0.7), &c)
            .unwrap()
            .value;
        let scale = w0.abs().max(w12.abs()).max(1.0);
        assert!(
            (w12 - w1 - w2 + w0).abs() < 1e-10 * scale,
            "w0={} w1={} w2={} w12={}",
            w0,
            w1,
            w2,
            w12
        );

        let w8 = wres_from_heat(&GeneralizedLaplacian::free(&g, 8), &c)
            .unwrap()
            .value;
        assert!((w8 - 2.0 * w0).abs() < 1e-10 * scale);
    }

    #[test]
    fn gamma_identities() {
        for n in [4usize, 6, 8] {
            assert!(gamma_identity_gap(n) < 1e-14, "n = {}", n);
        }
        // prefactor times spinor rank over 12 equals 1/(24 pi^2) at n = 4
        let lock = residue_prefactor(4) * 4.0 / 12.0;
        assert!((lock - 1.0 / (24.0 * PI * PI)).abs() < 1e-16);
    }

    #[test]
    fn epsilon_shift() {
        let c = cfg();
        let flat = MetricField::flat(4);
        for eps in [0.0, 0.3, 1.7] {
            let r = epsilon_shift_wres(&flat, eps, &c).unwrap();
            assert!(r.value.abs() < 1e-10);
        }
        let g = MetricField::conformal(4, 0.25, 2.0);
        let v0 = epsilon_shift_wres(&g, 0.0, &c).unwrap().value;
        let v1 = epsilon_shift_wres(&g, 0.4, &c).unwrap().value;
        let v2 = epsilon_shift_wres(&g, 0.8, &c).unwrap().value;
        let scale = v0.abs().max(v2.abs()).max(1.0);
        assert!((v2 - 2.0 * v1 + v0).abs() < 1e-10 * scale, "not affine");
        // eps = 0 is the Lichnerowicz case
        let w = wres_from_heat(&GeneralizedLaplacian::lichnerowicz(&g).unwrap(), &c)
            .unwrap()
            .value;
        assert!((v0 - w).abs() < 1e-6 * w.abs(), "v0 = {} w = {}", v0, w);
    }
}
