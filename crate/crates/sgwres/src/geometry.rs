//! Riemannian data on R^n built from an SG-classical metric: Christoffel
//! symbols, curvature, orthonormal frames, volume and surface densities, and
//! the numerical decay check behind the SG-classicality assumption.

use crate::error::{Result, SgError};
use crate::jet::{Jet, JetShape};
use crate::jmat::JMat;
use serde::Serialize;
use std::sync::Arc;

pub type EntryClosure = Arc<dyn Fn(&[f64], usize) -> Result<Vec<Jet>> + Send + Sync>;

#[derive(Clone)]
pub enum MetricKind {
    Flat,
    /// g_jk = e^{2 phi} delta_jk with phi(x) = c (1 + |x|^2)^{-p}.
    Conformal { c: f64, p: f64 },
    /// Escape hatch: closure returning the n^2 entry jets at a point.
    General { entries: EntryClosure },
}

/// An SG-classical metric on R^n with decay parameter alpha.
#[derive(Clone)]
pub struct MetricField {
    pub n: usize,
    pub kind: MetricKind,
    pub alpha: f64,
}

/// Pointwise curvature package in the fixed sign convention
/// R^i_jkl = d_k Gamma^i_lj - d_l Gamma^i_kj + Gamma^i_km Gamma^m_lj
///         - Gamma^i_lm Gamma^m_kj,  Ric_jk = R^i_jik,  s = g^{jk} Ric_jk.
#[derive(Clone, Serialize)]
pub struct CurvatureData {
    pub x: Vec<f64>,
    pub gamma: Vec<f64>,
    pub riem: Vec<f64>,
    pub ric: Vec<f64>,
    pub s: f64,
    pub sqrt_det_g: f64,
}

impl MetricField {
    pub fn flat(n: usize) -> Self {
        MetricField {
            n,
            kind: MetricKind::Flat,
            alpha: f64::INFINITY,
        }
    }

    pub fn conformal(n: usize, c: f64, p: f64) -> Self {
        MetricField {
            n,
            kind: MetricKind::Conformal { c, p },
            alpha: 2.0 * p,
        }
    }

    pub fn general(n: usize, alpha: f64, entries: EntryClosure) -> Self {
        MetricField {
            n,
            kind: MetricKind::General { entries },
            alpha,
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.kind, MetricKind::Flat)
    }

    /// Jet of the conformal factor phi at x (conformal metrics only).
    pub fn phi_jet(&self, x: &[f64], order: usize) -> Result<Option<Jet>> {
        match &self.kind {
            MetricKind::Conformal { c, p } => {
                let shape = JetShape::single(self.n, order);
                let mut u = Jet::constant_re(shape, x, 1.0);
                for i in 0..self.n {
                    let xi = Jet::variable(shape, x, 0, i)?;
                    u = u.add(&xi.mul(&xi)?)?;
                }
                Ok(Some(u.powf(-p)?.scale_re(*c)))
            }
            _ => Ok(None),
        }
    }

    /// Entry jets g_jk at x (n^2 scalar jets, row-major, symmetric).
    pub fn entries_jet(&self, x: &[f64], order: usize) -> Result<JMat> {
        let n = self.n;
        let shape = JetShape::single(n, order);
        match &self.kind {
            MetricKind::Flat => {
                let mut e = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        e.push(Jet::constant_re(shape, x, if i == j { 1.0 } else { 0.0 }));
                    }
                }
                Ok(JMat::new(n, e))
            }
            MetricKind::Conformal { .. } => {
                let phi = self.phi_jet(x, order)?.unwrap();
                let factor = phi.scale_re(2.0).exp()?;
                let zero = Jet::zero(shape, x, 1);
                let mut e = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        e.push(if i == j { factor.clone() } else { zero.clone() });
                    }
                }
                Ok(JMat::new(n, e))
            }
            MetricKind::General { entries } => {
                let e = entries(x, order)?;
                if e.len() != n * n {
                    return Err(SgError::DimensionMismatch(format!(
                        "general metric closure returned {} entries, expected {}",
                        e.len(),
                        n * n
                    )));
                }
                Ok(JMat::new(n, e))
            }
        }
    }

    pub fn inverse_entries_jet(&self, x: &[f64], order: usize) -> Result<JMat> {
        self.entries_jet(x, order)?.inverse()
    }

    /// Jet of sqrt(det g) at x.
    pub fn sqrt_det_jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        self.entries_jet(x, order)?.det()?.sqrt()
    }

    pub fn sqrt_det(&self, x: &[f64]) -> Result<f64> {
        Ok(self.sqrt_det_jet(x, 0)?.value().as_scalar().re)
    }

    /// Christoffel symbols as jets: index i*n^2 + j*n + k for Gamma^i_jk.
    /// Needs metric jets one order higher than the requested jet order.
    pub fn christoffel_jets(&self, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        let n = self.n;
        let g = self.entries_jet(x, order + 1)?;
        let ginv = g.inverse()?;
        let mut dg = Vec::with_capacity(n * n * n);
        // dg[l][j][k] = d_l g_jk as jets of the requested order
        for l in 0..n {
            let mut alpha = vec![0usize; n];
            alpha[l] = 1;
            for j in 0..n {
                for k in 0..n {
                    dg.push(g.at(j, k).derivative(&alpha)?);
                }
            }
        }
        let idx = |l: usize, j: usize, k: usize| l * n * n + j * n + k;
        let mut gamma = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut acc: Option<Jet> = None;
                    for l in 0..n {
                        // d_j g_lk + d_k g_lj - d_l g_jk
                        let t = dg[idx(j, l, k)]
                            .add(&dg[idx(k, l, j)])?
                            .sub(&dg[idx(l, j, k)])?;
                        let ginv_il = ginv.at(i, l).truncate([order, 0]);
                        let term = ginv_il.mul(&t)?;
                        acc = Some(match acc {
                            None => term,
                            Some(a) => a.add(&term)?,
                        });
                    }
                    gamma.push(acc.unwrap().scale_re(0.5));
                }
            }
        }
        Ok(gamma)
    }

    /// Curvature package at a point; metric must be jet-evaluable to order 2.
    pub fn curvature_at(&self, x: &[f64]) -> Result<CurvatureData> {
        let n = self.n;
        let gamma_jets = self.christoffel_jets(x, 1)?;
        let g = self.entries_jet(x, 0)?;
        let ginv = g.inverse()?;
        let gam = |i: usize, j: usize, k: usize| -> &Jet { &gamma_jets[i * n * n + j * n + k] };
        let gval = |jet: &Jet| jet.value().as_scalar().re;
        let mut gamma = vec![0.0; n * n * n];
        for (slot, jet) in gamma_jets.iter().enumerate() {
            gamma[slot] = gval(jet);
        }
        let dgam = |i: usize, k: usize, l: usize, j: usize| -> Result<f64> {
            // d_k Gamma^i_lj
            let mut alpha = vec![0usize; n];
            alpha[k] = 1;
            Ok(gam(i, l, j).extract_partial(&alpha)?.as_scalar().re)
        };
        let mut riem = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut v = dgam(i, k, l, j)? - dgam(i, l, k, j)?;
                        for m in 0..n {
                            v += gamma[i * n * n + k * n + m] * gamma[m * n * n + l * n + j]
                                - gamma[i * n * n + l * n + m] * gamma[m * n * n + k * n + j];
                        }
                        riem[((i * n + j) * n + k) * n + l] = v;
                    }
                }
            }
        }
        let mut ric = vec![0.0; n * n];
        for j in 0..n {
            for k in 0..n {
                let mut v = 0.0;
                for i in 0..n {
                    v += riem[((i * n + j) * n + i) * n + k];
                }
                ric[j * n + k] = v;
            }
        }
        let mut s = 0.0;
        for j in 0..n {
            for k in 0..n {
                s += ginv.at(j, k).value().as_scalar().re * ric[j * n + k];
            }
        }
        let sqrt_det_g = self.sqrt_det(x)?;
        if sqrt_det_g <= 0.0 {
            return Err(SgError::NotPositiveDefinite { pivot: sqrt_det_g });
        }
        Ok(CurvatureData {
            x: x.to_vec(),
            gamma,
            riem,
            ric,
            s,
            sqrt_det_g,
        })
    }

    /// Scalar curvature only.
    pub fn scalar_curvature(&self, x: &[f64]) -> Result<f64> {
        Ok(self.curvature_at(x)?.s)
    }

    /// Jet of the lower-triangular orthonormal frame e_a^i (rows are frame
    /// vectors): e = L^{-1} for the Cholesky factor g = L L^T, so that
    /// e g e^T = Id to the jet order.
    pub fn orthonormal_frame(&self, x: &[f64], order: usize) -> Result<JMat> {
        let g = self.entries_jet(x, order)?;
        g.cholesky_lower()?.lower_inverse()
    }

    /// Metric-induced surface density on the Euclidean unit sphere at a
    /// point x with |x| = 1: sqrt(det of g restricted to the tangent space).
    pub fn surface_density(&self, x: &[f64]) -> Result<f64> {
        let n = self.n;
        match &self.kind {
            MetricKind::Flat => return Ok(1.0),
            MetricKind::Conformal { .. } => {
                // induced density of e^{2 phi} delta on a hypersurface
                let phi = self.phi_jet(x, 0)?.unwrap().value().as_scalar().re;
                return Ok(((n - 1) as f64 * phi).exp());
            }
            MetricKind::General { .. } => {}
        }
        let g = self.entries_jet(x, 0)?;
        let gv = |i: usize, j: usize| g.at(i, j).value().as_scalar().re;
        // Euclidean-orthonormal basis of the tangent space by Gram-Schmidt
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n - 1);
        for i in 0..n {
            let mut v = vec![0.0; n];
            v[i] = 1.0;
            let dot_x: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
            for (vi, xi) in v.iter_mut().zip(x.iter()) {
                *vi -= dot_x * xi;
            }
            for b in &basis {
                let d: f64 = v.iter().zip(b.iter()).map(|(a, c)| a * c).sum();
                for (vi, bi) in v.iter_mut().zip(b.iter()) {
                    *vi -= d * bi;
                }
            }
            let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-8 {
                for vi in v.iter_mut() {
                    *vi /= norm;
                }
                basis.push(v);
                if basis.len() == n - 1 {
                    break;
                }
            }
        }
        let m = basis.len();
        let mut gt = vec![0.0; m * m];
        for a in 0..m {
            for b in 0..m {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        acc += basis[a][i] * gv(i, j) * basis[b][j];
                    }
                }
                gt[a * m + b] = acc;
            }
        }
        let det = real_det(m, &mut gt);
        if det <= 0.0 {
            return Err(SgError::NotPositiveDefinite { pivot: det });
        }
        Ok(det.sqrt())
    }

    /// Ray-fit check of the SG decay |D^beta g_jk| <= C (1+|x|)^{-|beta|},
    /// plus the asymptotic-flatness rate on g - delta.
    pub fn check_sg_classical(&self, beta_max: usize, n_rays: usize) -> Result<SgClassicalReport> {
        let n = self.n;
        let rays = fixed_rays(n, n_rays.max(8));
        let radii: Vec<f64> = (0..9).map(|k| 10f64.powf(k as f64 * 0.5)).collect();
        let mut per_order = Vec::new();
        let mut flat_gap_norms: Vec<f64> = Vec::new();
        let mut all_pass = true;
        for border in 0..=beta_max {
            let mut norms: Vec<f64> = Vec::with_capacity(radii.len());
            for &r in &radii {
                let mut worst: f64 = 0.0;
                for ray in &rays {
                    let x: Vec<f64> = ray.iter().map(|&u| r * u).collect();
                    let g = self.entries_jet(&x, border)?;
                    for e in &g.e {
                        for slot in 0..e.tbl.len() {
                            let alpha = e.tbl.index_of(slot);
                            let total: usize = alpha.iter().sum();
                            if total != border {
                                continue;
                            }
                            let v = e.extract_partial(&alpha)?.as_scalar().norm();
                            worst = worst.max(v);
                        }
                    }
                    if border == 0 {
                        // track |g - delta| along the same samples
                        let mut gap: f64 = 0.0;
                        for i in 0..n {
                            for j in 0..n {
                                let d = if i == j { 1.0 } else { 0.0 };
                                gap = gap
                                    .max((g.at(i, j).value().as_scalar().re - d).abs());
                            }
                        }
                        flat_gap_norms.push(gap);
                    }
                }
                norms.push(worst);
            }
            let tiny = norms.iter().all(|&v| v < 1e-13);
            let fitted = if tiny {
                f64::NEG_INFINITY
            } else {
                fit_log_slope(&radii, &norms)
            };
            let pass = tiny || fitted <= -(border as f64) + 0.1;
            all_pass &= pass;
            per_order.push(DecayFit {
                order: border,
                fitted_exponent: fitted,
                max_norm: norms.iter().cloned().fold(0.0, f64::max),
                pass,
            });
        }
        // asymptotic flatness fit: collapse the per-(ray,radius) samples back
        // to per-radius maxima
        let alpha_fit = if self.alpha.is_finite() {
            let rays_per_radius = rays.len();
            let per_radius: Vec<f64> = radii
                .iter()
                .enumerate()
                .map(|(k, _)| {
                    flat_gap_norms[k * rays_per_radius..(k + 1) * rays_per_radius]
                        .iter()
                        .cloned()
                        .fold(0.0, f64::max)
                })
                .collect();
            let tiny = per_radius.iter().all(|&v| v < 1e-13);
            let fitted = if tiny {
                f64::NEG_INFINITY
            } else {
                fit_log_slope(&radii, &per_radius)
            };
            let pass = tiny || fitted <= -self.alpha + 0.1;
            all_pass &= pass;
            Some(DecayFit {
                order: 0,
                fitted_exponent: fitted,
                max_norm: per_radius.iter().cloned().fold(0.0, f64::max),
                pass,
            })
        } else {
            None
        };
        Ok(SgClassicalReport {
            beta_max,
            per_order,
            alpha_fit,
            pass: all_pass,
        })
    }
}

#[derive(Clone, Serialize)]
pub struct DecayFit {
    pub order: usize,
    pub fitted_exponent: f64,
    pub max_norm: f64,
    pub pass: bool,
}

#[derive(Clone, Serialize)]
pub struct SgClassicalReport {
    pub beta_max: usize,
    pub per_order: Vec<DecayFit>,
    pub alpha_fit: Option<DecayFit>,
    pub pass: bool,
}

/// Deterministic set of unit directions (small LCG, then normalize).
pub fn fixed_rays(n: usize, count: usize) -> Vec<Vec<f64>> {
    let mut state: u64 = 0x9e3779b97f4a7c15;
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
    };
    let mut rays = Vec::with_capacity(count);
    // include the coordinate axes first
    for i in 0..n.min(count) {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        rays.push(v);
    }
    while rays.len() < count {
        let mut v: Vec<f64> = (0..n).map(|_| next()).collect();
        let norm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 0.1 {
            for vi in v.iter_mut() {
                *vi /= norm;
            }
            rays.push(v);
        }
    }
    rays
}

/// Least-squares slope of log(y) against log(1 + x).
pub fn fit_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys.iter())
        .filter(|(_, &y)| y > 1e-250)
        .map(|(&x, &y)| ((1.0 + x).ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NEG_INFINITY;
    }
    let m = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (m * sxy - sx * sy) / (m * sxx - sx * sx)
}

fn real_det(m: usize, a: &mut [f64]) -> f64 {
    let mut det = 1.0;
    for col in 0..m {
        let mut best = col;
        for r in (col + 1)..m {
            if a[r * m + col].abs() > a[best * m + col].abs() {
                best = r;
            }
        }
        if a[best * m + col].abs() < 1e-300 {
            return 0.0;
        }
        if best != col {
            det = -det;
            for j in 0..m {
                a.swap(col * m + j, best * m + j);
            }
        }
        let p = a[col * m + col];
        det *= p;
        for r in (col + 1)..m {
            let f = a[r * m + col] / p;
            for j in col..m {
                a[r * m + j] -= f * a[col * m + j];
            }
        }
    }
    det
}
