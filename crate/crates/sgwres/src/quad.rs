//! Quadrature: product Gauss rules on S^{n-1}, radial panels, and an
//! adaptive plain integral used as the L^1 cross-check.

use crate::error::{Result, SgError};
use serde::Serialize;

/// Lanczos approximation, good to ~1e-14 for the arguments used here.
pub fn gamma(x: f64) -> f64 {
    if x < 0.5 {
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma(1.0 - x))
    } else {
        const G: f64 = 7.0;
        const C: [f64; 9] = [
            0.99999999999980993,
            676.5203681218851,
            -1259.1392167224028,
            771.32342877765313,
            -176.61502916214059,
            12.507343278686905,
            -0.13857109526572012,
            9.9843695780195716e-6,
            1.5056327351493116e-7,
        ];
        let x = x - 1.0;
        let mut a = C[0];
        let t = x + G + 0.5;
        for (i, &ci) in C.iter().enumerate().skip(1) {
            a += ci / (x + i as f64);
        }
        (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
    }
}

/// Surface measure of the unit sphere S^{n-1}.
pub fn sphere_volume(n: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(n as f64 / 2.0) / gamma(n as f64 / 2.0)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m {
        // initial guess (Chebyshev)
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre P_m and derivative by recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let mut p0 = 1.0;
        let mut p1 = x;
        for k in 2..=m {
            let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped to [a, b].
pub fn gauss_legendre_panel(a: f64, b: f64, m: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(m);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        x.iter().map(|&t| mid + half * t).collect(),
        w.iter().map(|&wi| wi * half).collect(),
    )
}

/// Gauss-Chebyshev (second kind): integrates f(t) sqrt(1-t^2) dt on [-1,1].
fn chebyshev2(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for k in 1..=m {
        let th = k as f64 * std::f64::consts::PI / (m as f64 + 1.0);
        nodes.push(th.cos());
        weights.push(std::f64::consts::PI / (m as f64 + 1.0) * th.sin() * th.sin());
    }
    (nodes, weights)
}

/// Product quadrature rule on the unit sphere S^{n-1}.
#[derive(Clone, Serialize)]
pub struct SphereRule {
    pub n: usize,
    pub nodes: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

impl SphereRule {
    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        // Kahan summation keeps the rule exactness visible at 1e-12 scale.
        let mut acc = 0.0;
        let mut comp = 0.0;
        for (node, w) in self.nodes.iter().zip(self.weights.iter()) {
            let y = w * f(node) - comp;
            let t = acc + y;
            comp = (t - acc) - y;
            acc = t;
        }
        acc
    }
}

/// Recursive product-angle rule on S^{n-1}; `level` controls node counts so
/// that polynomials of degree at least 2*level are integrated exactly.
pub fn sphere_rule(n: usize, level: usize) -> Result<SphereRule> {
    if !(2..=8).contains(&n) {
        return Err(SgError::UnsupportedDimension(n));
    }
    if n == 2 {
        // equispaced points on the circle: exact for harmonics of degree < m
        let m = 2 * level + 4;
        let mut nodes = Vec::with_capacity(m);
        let w = 2.0 * std::f64::consts::PI / m as f64;
        for k in 0..m {
            let th = 2.0 * std::f64::consts::PI * k as f64 / m as f64;
            nodes.push(vec![th.cos(), th.sin()]);
        }
        return Ok(SphereRule {
            n,
            nodes,
            weights: vec![w; m],
            exact_degree: m - 1,
        });
    }
    let sub = sphere_rule(n - 1, level)?;
    // polar factor: integral over t in [-1,1] with weight (1-t^2)^{(n-3)/2}
    let p = n - 3;
    let m = level + 3;
    let (t, w): (Vec<f64>, Vec<f64>) = if p % 2 == 1 {
        let (t, w) = chebyshev2(m);
        // absorb the remaining even part of the weight
        let w = t
            .iter()
            .zip(w.iter())
            .map(|(&ti, &wi)| wi * (1.0 - ti * ti).powi(((p - 1) / 2) as i32))
            .collect();
        (t, w)
    } else {
        let (t, w) = gauss_legendre(m);
        let w = t
            .iter()
            .zip(w.iter())
            .map(|(&ti, &wi)| wi * (1.0 - ti * ti).powi((p / 2) as i32))
            .collect();
        (t, w)
    };
    let mut nodes = Vec::with_capacity(t.len() * sub.nodes.len());
    let mut weights = Vec::with_capacity(nodes.capacity());
    for (tk, wk) in t.iter().zip(w.iter()) {
        let s = (1.0 - tk * tk).sqrt();
        for (u, wu) in sub.nodes.iter().zip(sub.weights.iter()) {
            let mut node = Vec::with_capacity(n);
            node.push(*tk);
            node.extend(u.iter().map(|&ui| s * ui));
            nodes.push(node);
            weights.push(wk * wu);
        }
    }
    Ok(SphereRule {
        n,
        nodes,
        weights,
        exact_degree: (2 * level).max(2),
    })
}

/// Adaptive plain integral of f over R^n via the substitution r = s/(1-s):
/// adaptive Simpson in s on [0,1), sphere rule in the angles.
pub fn adaptive_integral<F: Fn(&[f64]) -> f64 + Sync>(
    f: &F,
    n: usize,
    rule: &SphereRule,
    tol: f64,
) -> Result<f64> {
    let radial = |r: f64| -> f64 {
        if r == 0.0 {
            return 0.0; // r^{n-1} factor kills the origin for n >= 2
        }
        let s = rule.integrate(|u| {
            let x: Vec<f64> = u.iter().map(|&ui| r * ui).collect();
            f(&x)
        });
        s * r.powi((n - 1) as i32)
    };
    let g = |s: f64| -> f64 {
        if s >= 1.0 {
            return 0.0;
        }
        let r = s / (1.0 - s);
        radial(r) / ((1.0 - s) * (1.0 - s))
    };
    let v = adaptive_simpson(&g, 0.0, 0.999999, tol, 30);
    if !v.is_finite() {
        return Err(SgError::NonFinite("adaptive_integral"));
    }
    Ok(v)
}

pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() < 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}
