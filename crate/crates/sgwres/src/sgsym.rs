//! Matrix symbols with xi-homogeneous component expansions: composition via
//! the Leibniz asymptotic expansion, the parametrix recursion, and sampled
//! sector-ellipticity checks.

use crate::error::{Result, SgError};
use crate::jet::{Jet, JetShape};
use crate::mat::CMat;
use num_complex::Complex64;
use serde::Serialize;
use std::sync::Arc;

/// Component evaluator: (x, xi, x-order, xi-order) -> bivariate jet of the
/// homogeneous piece at the point (x, xi), xi != 0. Homogeneity in xi holds
/// by construction of the closure.
pub type CompFn = Arc<dyn Fn(&[f64], &[f64], usize, usize) -> Result<Jet> + Send + Sync>;

#[derive(Clone)]
pub struct Component {
    /// xi-homogeneity degree mu - j.
    pub degree: f64,
    pub f: CompFn,
}

/// An SG-classical matrix symbol, truncated at the available component depth.
#[derive(Clone)]
pub struct SGSymbol {
    pub n: usize,
    /// Matrix dimension.
    pub d: usize,
    /// xi-order.
    pub mu: f64,
    /// x-order.
    pub m: f64,
    /// components[j] has xi-degree mu - j; missing entries are zero.
    pub components: Vec<Component>,
}

/// Sector with vertex at the origin, opening half-angle theta away from the
/// positive real axis; the symbol spectrum must stay within |arg| < theta.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SectorSpec {
    pub theta: f64,
}

impl SectorSpec {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta < std::f64::consts::PI) {
            return Err(SgError::InvalidConfig(format!(
                "sector angle {theta} outside (0, pi)"
            )));
        }
        Ok(SectorSpec { theta })
    }
}

pub fn pair_shape(n: usize, kx: usize, kxi: usize) -> JetShape {
    JetShape::pair(n, n, kx, kxi)
}

pub fn pair_base(x: &[f64], xi: &[f64]) -> Vec<f64> {
    let mut b = Vec::with_capacity(x.len() + xi.len());
    b.extend_from_slice(x);
    b.extend_from_slice(xi);
    b
}

/// All multi-indices over `n` variables with total degree exactly `total`.
pub fn multi_indices(n: usize, total: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; n];
    fn rec(cur: &mut Vec<usize>, pos: usize, left: usize, out: &mut Vec<Vec<usize>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            cur[pos] = 0;
            return;
        }
        for v in 0..=left {
            cur[pos] = v;
            rec(cur, pos + 1, left - v, out);
        }
        cur[pos] = 0;
    }
    if n == 0 {
        if total == 0 {
            out.push(vec![]);
        }
        return out;
    }
    rec(&mut cur, 0, total, &mut out);
    out
}

fn factorial(alpha: &[usize]) -> f64 {
    alpha
        .iter()
        .map(|&a| (1..=a).map(|v| v as f64).product::<f64>())
        .product()
}

fn minus_i_pow(k: usize) -> Complex64 {
    match k % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, -1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, 1.0),
    }
}

impl SGSymbol {
    /// The identity symbol (unit of the algebra).
    pub fn identity(n: usize, d: usize) -> SGSymbol {
        let f: CompFn = Arc::new(move |x, xi, kx, kxi| {
            Ok(Jet::identity(pair_shape(x.len(), kx, kxi), &pair_base(x, xi), d))
        });
        SGSymbol {
            n,
            d,
            mu: 0.0,
            m: 0.0,
            components: vec![Component { degree: 0.0, f }],
        }
    }

    /// Component with the given xi-homogeneity degree.
    pub fn xi_component(&self, degree: f64) -> Result<&Component> {
        self.components
            .iter()
            .find(|c| (c.degree - degree).abs() < 1e-9)
            .ok_or(SgError::MissingComponent(degree))
    }

    /// Value of the truncated symbol (sum of all stored components) at a
    /// point with xi != 0.
    pub fn approx_value(&self, x: &[f64], xi: &[f64]) -> Result<CMat> {
        let mut acc = CMat::zeros(self.d);
        for c in &self.components {
            let v = (c.f)(x, xi, 0, 0)?;
            let v = if v.d == 1 && self.d != 1 {
                CMat::identity(self.d).scale(v.value().as_scalar())
            } else {
                v.value().clone()
            };
            acc.add_assign(&v);
        }
        Ok(acc)
    }

    /// Numerical homogeneity gap of component j: worst relative mismatch of
    /// f(x, t xi) against t^{deg} f(x, xi) over the given scalings.
    pub fn homogeneity_gap(&self, j: usize, x: &[f64], xi: &[f64], ts: &[f64]) -> Result<f64> {
        let c = &self.components[j];
        let v1 = (c.f)(x, xi, 0, 0)?.value().clone();
        let mut worst: f64 = 0.0;
        for &t in ts {
            let txi: Vec<f64> = xi.iter().map(|&v| t * v).collect();
            let v2 = (c.f)(x, &txi, 0, 0)?.value().clone();
            let gap = v2.sub(&v1.scale(Complex64::new(t.powf(c.degree), 0.0)));
            worst = worst.max(gap.norm_max() / v1.norm_max().max(1e-300));
        }
        Ok(worst)
    }
}

/// Leibniz composition: c_j = sum_{k+l+|alpha|=j} (1/alpha!)
/// (d_xi^alpha a_k) (D_x^alpha b_l), D_x = -i d_x, for j < depth.
pub fn compose(a: &SGSymbol, b: &SGSymbol, depth: usize) -> Result<SGSymbol> {
    if a.n != b.n || (a.d != b.d && a.d != 1 && b.d != 1) {
        return Err(SgError::DimensionMismatch(format!(
            "compose: n {} vs {}, d {} vs {}",
            a.n, b.n, a.d, b.d
        )));
    }
    let n = a.n;
    let d = a.d.max(b.d);
    let mu = a.mu + b.mu;
    let mut components = Vec::with_capacity(depth);
    for j in 0..depth {
        let a_comps: Vec<Component> = a.components.clone();
        let b_comps: Vec<Component> = b.components.clone();
        let f: CompFn = Arc::new(move |x, xi, kx, kxi| {
            let mut acc = Jet::zero(pair_shape(n, kx, kxi), &pair_base(x, xi), d);
            for (k, ca) in a_comps.iter().enumerate().take(j + 1) {
                for (l, cb) in b_comps.iter().enumerate() {
                    if k + l > j {
                        break;
                    }
                    let an = j - k - l;
                    let a_jet = (ca.f)(x, xi, kx, kxi + an)?;
                    let b_jet = (cb.f)(x, xi, kx + an, kxi)?;
                    for alpha in multi_indices(n, an) {
                        // derivative indices: groups are (x, xi)
                        let mut d_xi = vec![0usize; 2 * n];
                        let mut d_x = vec![0usize; 2 * n];
                        for i in 0..n {
                            d_xi[n + i] = alpha[i];
                            d_x[i] = alpha[i];
                        }
                        let da = a_jet.derivative(&d_xi)?;
                        let db = b_jet.derivative(&d_x)?;
                        let term = da
                            .mul(&db)?
                            .scale(minus_i_pow(an).unscale(factorial(&alpha)));
                        acc = acc.add(&term)?;
                    }
                }
            }
            Ok(acc)
        });
        components.push(Component {
            degree: mu - j as f64,
            f,
        });
    }
    Ok(SGSymbol {
        n,
        d,
        mu,
        m: a.m + b.m,
        components,
    })
}

/// Parametrix recursion for an elliptic symbol of positive xi-order:
/// b_0 = p_0^{-1} and
/// b_j = -( sum_{l<j, k+l+|alpha|=j} (1/alpha!) d_xi^alpha b_l D_x^alpha p_k )
///       p_0^{-1}.
/// The composition b # p - Id then vanishes componentwise down to xi-order
/// mu_p - depth.
pub fn parametrix(p: &SGSymbol, depth: usize) -> Result<SGSymbol> {
    let n = p.n;
    let d = p.d;
    let mu = p.mu;
    if p.components.is_empty() {
        return Err(SgError::MissingComponent(mu));
    }
    let mut components: Vec<Component> = Vec::with_capacity(depth);
    let p0 = p.components[0].f.clone();
    let b0: CompFn = Arc::new(move |x, xi, kx, kxi| p0(x, xi, kx, kxi)?.inv());
    components.push(Component {
        degree: -mu,
        f: b0,
    });
    for j in 1..depth {
        let prev: Vec<Component> = components.clone();
        let p_comps: Vec<Component> = p.components.clone();
        let f: CompFn = Arc::new(move |x, xi, kx, kxi| {
            let mut acc = Jet::zero(pair_shape(n, kx, kxi), &pair_base(x, xi), d);
            for (l, cb) in prev.iter().enumerate().take(j) {
                for (k, cp) in p_comps.iter().enumerate() {
                    if k + l > j {
                        break;
                    }
                    let an = j - k - l;
                    if k == 0 && an == 0 {
                        continue; // that is the b_j term being solved for
                    }
                    let b_jet = (cb.f)(x, xi, kx, kxi + an)?;
                    let p_jet = (cp.f)(x, xi, kx + an, kxi)?;
                    for alpha in multi_indices(n, an) {
                        let mut d_xi = vec![0usize; 2 * n];
                        let mut d_x = vec![0usize; 2 * n];
                        for i in 0..n {
                            d_xi[n + i] = alpha[i];
                            d_x[i] = alpha[i];
                        }
                        let da = b_jet.derivative(&d_xi)?;
                        let db = p_jet.derivative(&d_x)?;
                        let term = da
                            .mul(&db)?
                            .scale(minus_i_pow(an).unscale(factorial(&alpha)));
                        acc = acc.add(&term)?;
                    }
                }
            }
            let pinv = (prev[0].f)(x, xi, kx, kxi)?;
            Ok(acc.mul(&pinv)?.scale_re(-1.0))
        });
        components.push(Component {
            degree: -mu - j as f64,
            f,
        });
    }
    Ok(SGSymbol {
        n,
        d,
        mu: -mu,
        m: 0.0,
        components,
    })
}

#[derive(Clone, Serialize)]
pub struct EllipticityReport {
    pub theta: f64,
    pub pass: bool,
    /// Largest |arg lambda| over all sampled eigenvalues.
    pub max_arg: f64,
    /// Smallest |lambda| over all sampled eigenvalues (degeneracy indicator).
    pub min_modulus: f64,
    /// sup of ||(a - lambda)^{-1}|| (1+|xi|)^mu over the sampled boundary
    /// rays of the sector.
    pub resolvent_bound: f64,
    pub samples: usize,
}

/// Sampled sector-ellipticity: the truncated symbol's eigenvalues must all
/// satisfy |arg| < theta at every sample (|xi| in {R, 2R, 10R} times a
/// direction grid times an x-grid reaching large |x|), so the spectrum
/// misses the closed sector around the negative axis and its reflection.
pub fn lambda_ellipticity_check(
    a: &SGSymbol,
    sector: SectorSpec,
    radius: f64,
    x_points: &[Vec<f64>],
) -> Result<EllipticityReport> {
    let n = a.n;
    let rule = crate::quad::sphere_rule(n, 2)?;
    let mut max_arg: f64 = 0.0;
    let mut min_modulus = f64::INFINITY;
    let mut resolvent_bound: f64 = 0.0;
    let mut samples = 0usize;
    // boundary rays of the sector at a few moduli
    let lam_mods = [1.0, radius.powf(a.mu.abs().max(1.0)), (10.0 * radius).powf(a.mu.abs().max(1.0))];
    for x in x_points {
        for dir in &rule.nodes {
            for &scale in &[1.0, 2.0, 10.0] {
                let xi: Vec<f64> = dir.iter().map(|&u| scale * radius * u).collect();
                let v = a.approx_value(x, &xi)?;
                for lam in v.eigenvalues() {
                    max_arg = max_arg.max(lam.arg().abs());
                    min_modulus = min_modulus.min(lam.norm());
                }
                let xi_norm: f64 = xi.iter().map(|t| t * t).sum::<f64>().sqrt();
                let weight = (1.0 + xi_norm).powf(a.mu);
                for &lm in &lam_mods {
                    for sign in [1.0, -1.0] {
                        let ang = sign * (std::f64::consts::PI - sector.theta);
                        let lam = Complex64::from_polar(lm, ang);
                        let shifted = v.sub(&CMat::identity(a.d).scale(lam));
                        if let Ok(inv) = shifted.inverse() {
                            resolvent_bound = resolvent_bound.max(inv.norm_fro() * weight);
                        }
                    }
                }
                samples += 1;
            }
        }
    }
    Ok(EllipticityReport {
        theta: sector.theta,
        pass: max_arg < sector.theta,
        max_arg,
        min_modulus,
        resolvent_bound,
        samples,
    })
}

/// |xi|^2 times the identity: the flat Laplacian symbol.
pub fn flat_laplacian_symbol(n: usize, d: usize) -> SGSymbol {
    let f: CompFn = Arc::new(move |x, xi, kx, kxi| {
        let shape = pair_shape(x.len(), kx, kxi);
        let base = pair_base(x, xi);
        let mut q = Jet::zero(shape, &base, 1);
        for i in 0..x.len() {
            let v = Jet::variable(shape, &base, 1, i)?;
            q = q.add(&v.mul(&v)?)?;
        }
        Ok(q.promote_d(d))
    });
    SGSymbol {
        n,
        d,
        mu: 2.0,
        m: 0.0,
        components: vec![Component { degree: 2.0, f }],
    }
}
