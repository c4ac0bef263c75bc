//! End-to-end acceptance gate. Runs one check per release criterion and
//! prints a PASS/FAIL line for each; the test fails if any criterion fails.
//!
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::f64::consts::PI;
use std::sync::Arc;

use sgwres::dirac::{build_dirac, kastler_integral, kkw_constant, wres_dirac};
use sgwres::fpint::{finite_part_integral, FpConfig, HomTerm, RealFn};
use sgwres::geometry::{fit_log_slope, fixed_rays, MetricField};
use sgwres::laplacian::{
    epsilon_shift_wres, fp_scalar_curvature, gamma_identity_gap, heat_a1, residue_prefactor,
    wres_from_heat, GeneralizedLaplacian,
};
use sgwres::quad::{adaptive_simpson, sphere_rule};
use sgwres::sgsym::{compose, flat_laplacian_symbol, pair_base, pair_shape, parametrix, CompFn,
    Component, SGSymbol};
use sgwres::jet::Jet;

struct Gate {
    failures: Vec<String>,
    idx: usize,
}

impl Gate {
    fn new() -> Self {
        Gate {
            failures: Vec::new(),
            idx: 0,
        }
    }

    fn check(&mut self, what: &str, pass: bool, detail: String) {
        self.idx += 1;
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("criterion {:02} {} {} ({})", self.idx, tag, what, detail);
        if !pass {
            self.failures.push(format!("{}: {}", what, detail));
        }
    }
}

fn radial_cfg() -> FpConfig {
    FpConfig {
        assume_radial: true,
        ..FpConfig::default()
    }
}

/// Low-cost configuration for the full symbol-route residue (the inner
/// xi-integral is near-polynomial, so low levels lose nothing).
fn symbol_route_cfg() -> FpConfig {
    FpConfig {
        radial_points: 12,
        ladder_count: 6,
        xi_sphere_level: 2,
        assume_radial: true,
        ..FpConfig::default()
    }
}

/// (1+|x|^2)^q with its binomial x-expansion terms.
fn powlaw(n: usize, q: f64) -> (RealFn, Vec<HomTerm>) {
    let a: RealFn = Arc::new(move |x: &[f64]| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        Ok((1.0 + r2).powf(q))
    });
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
    (a, terms)
}

/// Integral over R^4 of a radial profile f(r), by 1d adaptive quadrature on
/// the compactified half line.
fn radial_integral_r4(f: impl Fn(f64) -> f64) -> f64 {
    let g = |s: f64| {
        let r = s / (1.0 - s);
        f(r) * r * r * r / ((1.0 - s) * (1.0 - s))
    };
    2.0 * PI * PI * adaptive_simpson(&g, 0.0, 0.999999, 1e-12, 40)
}

/// Integral over R^4 of (1+|x|^2)^q by quadrature on [0, R] plus the
/// binomial-series tail; blunt truncation alone loses ~1e-4 for the
/// slowest-decaying profiles.
fn powlaw_integral_r4(q: f64) -> f64 {
    let r_cut = 10.0f64;
    let head = adaptive_simpson(
        &|r: f64| (1.0 + r * r).powf(q) * r * r * r,
        0.0,
        r_cut,
        1e-13,
        40,
    );
    // int_R^inf (1+r^2)^q r^3 dr = sum_k C(q,k) R^{2q-2k+4} / (2k-2q-4)
    let mut tail = 0.0;
    let mut coeff = 1.0;
    for k in 0..30 {
        let e = 2.0 * q - 2.0 * k as f64 + 4.0;
        tail += coeff * r_cut.powf(e) / (-e);
        coeff *= (q - k as f64) / (k as f64 + 1.0);
    }
    2.0 * PI * PI * (head + tail)
}

/// |xi|^2 + 1 as a three-component classical symbol.
fn shifted_laplacian(n: usize) -> SGSymbol {
    let mut p = flat_laplacian_symbol(n, 1);
    let zero: CompFn = Arc::new(move |x, xi, kx, kxi| {
        Ok(Jet::zero(pair_shape(x.len(), kx, kxi), &pair_base(x, xi), 1))
    });
    let one: CompFn = Arc::new(move |x, xi, kx, kxi| {
        Ok(Jet::constant_re(
            pair_shape(x.len(), kx, kxi),
            &pair_base(x, xi),
            1.0,
        ))
    });
    p.components.push(Component {
        degree: 1.0,
        f: zero,
    });
    p.components.push(Component { degree: 0.0, f: one });
    p
}

#[test]
fn acceptance() {
    let mut gate = Gate::new();

    // 1. S^3 quadrature exactness: total measure and second moment.
    {
        let rule = sphere_rule(4, 6).unwrap();
        let total = rule.integrate(|_| 1.0);
        let moment = rule.integrate(|u| u[0] * u[0]);
        let gap = (total - 2.0 * PI * PI)
            .abs()
            .max((moment - PI * PI / 2.0).abs());
        gate.check(
            "sphere quadrature exactness",
            gap < 1e-12,
            format!("measure gap {:.3e}", gap),
        );
    }

    // 2. Finite-part closed forms on R^4.
    {
        let cfg = radial_cfg();
        let (a3, t3) = powlaw(4, -3.0);
        let v3 = finite_part_integral(4, -6.0, &a3, &t3, None, None, &cfg)
            .unwrap()
            .value;
        let (a1, t1) = powlaw(4, -1.0);
        let v1 = finite_part_integral(4, -2.0, &a1, &t1, None, None, &cfg)
            .unwrap()
            .value;
        let one: RealFn = Arc::new(|_x| Ok(1.0));
        let tone = vec![HomTerm {
            degree: 0.0,
            f: Arc::new(|_u: &[f64]| Ok(1.0)),
        }];
        let v0 = finite_part_integral(4, 0.0, &one, &tone, None, None, &cfg)
            .unwrap()
            .value;
        let pass =
            (v3 - PI * PI / 2.0).abs() < 1e-6 && v1.abs() < 1e-6 && v0.abs() < 1e-10;
        gate.check(
            "finite-part closed forms",
            pass,
            format!(
                "gaps {:.3e} {:.3e} {:.3e}",
                (v3 - PI * PI / 2.0).abs(),
                v1.abs(),
                v0.abs()
            ),
        );
    }

    // 3. Absolutely integrable case reduces to the ordinary integral: ten
    // integrable profiles, finite part vs plain quadrature, 1e-6 relative.
    {
        let cfg = radial_cfg();
        let mut worst = 0.0f64;
        let qs = [-2.3, -2.6, -3.0, -3.4, -3.8, -4.2, -4.6, -5.0, -5.5, -6.0];
        for &q in &qs {
            let (a, terms) = powlaw(4, q);
            let fp = finite_part_integral(4, 2.0 * q, &a, &terms, None, None, &cfg).unwrap();
            let plain = powlaw_integral_r4(q);
            let rel = (fp.value - plain).abs() / plain.abs().max(1e-10);
            worst = worst.max(rel);
            assert!(fp.converged, "q={} not converged", q);
        }
        gate.check(
            "integrable symbols match plain integral",
            worst < 1e-6,
            format!("worst relative gap {:.3e}", worst),
        );
    }

    // 4. Flat space: both residue routes vanish.
    {
        let g = MetricField::flat(4);
        let cfg = FpConfig {
            sphere_level: 1,
            radial_points: 4,
            ladder_count: 4,
            xi_sphere_level: 1,
            assume_radial: true,
            ..FpConfig::default()
        };
        let dd = build_dirac(&g).unwrap();
        let pts = vec![vec![0.4, -0.2, 0.1, 0.3]];
        let rep = wres_dirac(&dd, &pts, &cfg).unwrap();
        let heat = wres_from_heat(&GeneralizedLaplacian::lichnerowicz(&g).unwrap(), &cfg)
            .unwrap()
            .value;
        let worst = rep
            .wres_symbol_route
            .abs()
            .max(rep.wres_curvature_route.abs())
            .max(heat.abs());
        gate.check(
            "flat metric gives zero in both routes",
            worst < 1e-8,
            format!("max |value| {:.3e}", worst),
        );
    }

    let g = MetricField::conformal(4, 0.25, 2.0);
    let g5 = MetricField::conformal(4, 0.3, 2.5);

    // 5. Pointwise density identity: the normalized sphere integral of the
    // parametrix trace equals -(1/24 pi^2) s(x) at >= 10 points.
    {
        let dd = build_dirac(&g).unwrap();
        let rule = sphere_rule(4, 4).unwrap();
        let mut count = 0usize;
        let mut worst = 0.0f64;
        for ray in fixed_rays(4, 5) {
            for &r in &[0.5f64, 1.0, 1.6] {
                let x: Vec<f64> = ray.iter().map(|v| v * r).collect();
                let s = g.scalar_curvature(&x).unwrap();
                if s.abs() <= 1e-6 {
                    continue;
                }
                let k = kastler_integral(&dd, &x, &rule).unwrap();
                worst = worst.max((k / s - kkw_constant()).abs() / kkw_constant().abs());
                count += 1;
            }
        }
        gate.check(
            "pointwise curvature density",
            count >= 10 && worst < 1e-3,
            format!("{} points, worst relative gap {:.3e}", count, worst),
        );
    }

    // 6. Two-route agreement on both registry metrics (symbol/parametrix
    // route vs heat-coefficient route).
    let mut route_detail = String::new();
    {
        let cfg = symbol_route_cfg();
        let mut pass = true;
        for (name, gm) in [("alpha4", &g), ("alpha5", &g5)] {
            let dd = build_dirac(gm).unwrap();
            let rep = wres_dirac(&dd, &[], &cfg).unwrap();
            let heat = wres_from_heat(&GeneralizedLaplacian::lichnerowicz(gm).unwrap(), &cfg)
                .unwrap()
                .value;
            let gap = (rep.wres_symbol_route - heat).abs() / heat.abs().max(1e-10);
            route_detail.push_str(&format!("{} gap {:.3e} ", name, gap));
            pass &= gap <= 1e-3;
        }
        gate.check("two-route agreement", pass, route_detail.trim().to_string());
    }

    // 7. Dirac-square heat route reproduces -(1/24 pi^2) times the
    // finite-part total scalar curvature.
    {
        let cfg = radial_cfg();
        let fs = fp_scalar_curvature(&g, &cfg).unwrap().value;
        let heat = wres_from_heat(&GeneralizedLaplacian::lichnerowicz(&g).unwrap(), &cfg)
            .unwrap()
            .value;
        let rel = (heat - kkw_constant() * fs).abs() / (kkw_constant() * fs).abs();
        gate.check(
            "heat route matches curvature constant",
            rel < 1e-6,
            format!("relative gap {:.3e}", rel),
        );
    }

    // 8. Fast-decay metric (alpha = 5): s is absolutely integrable and the
    // finite part agrees with plain quadrature.
    {
        let cfg = radial_cfg();
        let fp = fp_scalar_curvature(&g5, &cfg).unwrap().value;
        let g5c = g5.clone();
        let plain = radial_integral_r4(move |r| {
            let x = [r, 0.0, 0.0, 0.0];
            g5c.scalar_curvature(&x).unwrap() * g5c.sqrt_det(&x).unwrap()
        });
        let rel = (fp - plain).abs() / plain.abs().max(1e-10);
        gate.check(
            "integrable curvature matches plain integral",
            rel < 1e-4,
            format!("relative gap {:.3e}", rel),
        );
    }

    // 9. Spectral-shift formula is affine in the shift and zero on flat
    // space.
    {
        let cfg = radial_cfg();
        let v0 = epsilon_shift_wres(&g, 0.0, &cfg).unwrap().value;
        let v1 = epsilon_shift_wres(&g, 1.0, &cfg).unwrap().value;
        let v2 = epsilon_shift_wres(&g, 2.0, &cfg).unwrap().value;
        let affine = ((v2 - v1) - (v1 - v0)).abs();
        let flat = epsilon_shift_wres(&MetricField::flat(4), 3.0, &cfg)
            .unwrap()
            .value
            .abs();
        gate.check(
            "shift formula affine and flat-zero",
            affine < 1e-10 && flat < 1e-12,
            format!("affinity defect {:.3e}, flat {:.3e}", affine, flat),
        );
    }

    // 10. Constant consistency lock and the Gamma-function identity.
    {
        let lock = (residue_prefactor(4) * 4.0 / 12.0 - 1.0 / (24.0 * PI * PI)).abs();
        let gmax = [4usize, 6, 8]
            .iter()
            .map(|&n| gamma_identity_gap(n))
            .fold(0.0f64, f64::max);
        gate.check(
            "constant lock and Gamma identities",
            lock < 1e-18 && gmax < 1e-14,
            format!("lock gap {:.3e}, Gamma gap {:.3e}", lock, gmax),
        );
    }

    // 11. Property spot checks: jet derivatives vs finite differences,
    // composition associativity, parametrix remainder order, Lichnerowicz
    // coefficient, Euler homogeneity.
    {
        let mut fails = Vec::new();

        // jet first derivatives of the volume density vs central differences
        let x = [0.4, -0.2, 0.1, 0.3];
        let jet = g.sqrt_det_jet(&x, 1).unwrap();
        let h = 1e-5;
        for i in 0..4 {
            let mut alpha = [0usize; 4];
            alpha[i] = 1;
            let d = jet.extract_partial(&alpha).unwrap().as_scalar().re;
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (g.sqrt_det(&xp).unwrap() - g.sqrt_det(&xm).unwrap()) / (2.0 * h);
            if (d - fd).abs() >= 1e-6 {
                fails.push(format!("jet-vs-fd i={} gap {:.3e}", i, (d - fd).abs()));
            }
        }

        // associativity of symbol composition
        let p2 = flat_laplacian_symbol(2, 1);
        let left = compose(&compose(&p2, &p2, 3).unwrap(), &p2, 3).unwrap();
        let right = compose(&p2, &compose(&p2, &p2, 3).unwrap(), 3).unwrap();
        let (xa, xia) = ([0.3, -0.5], [0.9, 0.4]);
        for j in 0..3 {
            let vl = (left.components[j].f)(&xa, &xia, 0, 0).unwrap();
            let vr = (right.components[j].f)(&xa, &xia, 0, 0).unwrap();
            let gap = vl.sub(&vr).unwrap().norm_max();
            if gap >= 1e-9 {
                fails.push(format!("associativity j={} gap {:.3e}", j, gap));
            }
        }

        // truncated parametrix remainder decays at the predicted order: with
        // only the first two parametrix components, b # p - 1 = O(|xi|^-2)
        let p = shifted_laplacian(4);
        let b = parametrix(&p, 3).unwrap();
        let mut b2 = b.clone();
        b2.components.truncate(2);
        let c = compose(&b2, &p, 3).unwrap();
        let xs = [0.4, 1.2, -0.3, 0.0];
        let scales = [4.0f64, 8.0, 16.0, 32.0];
        let resid: Vec<f64> = scales
            .iter()
            .map(|&t| {
                let xi = [t * 0.5, t * 0.5, -t * 0.5, t * 0.5];
                let mut acc = 0.0;
                for comp in &c.components {
                    acc += (comp.f)(&xs, &xi, 0, 0).unwrap().value().as_scalar().re;
                }
                (acc - 1.0).abs()
            })
            .collect();
        let slope = fit_log_slope(&scales, &resid);
        if slope > -2.0 + 0.1 {
            fails.push(format!("remainder slope {:.3}", slope));
        }

        // Lichnerowicz endomorphism: a1 = -s/12 on the diagonal
        let lich = GeneralizedLaplacian::lichnerowicz(&g).unwrap();
        let s = g.scalar_curvature(&x).unwrap();
        let a1 = heat_a1(&lich, &x).unwrap().a1;
        let diag = a1[(0, 0)].re;
        if (diag + s / 12.0).abs() >= 1e-6 {
            fails.push(format!("a1 diag gap {:.3e}", (diag + s / 12.0).abs()));
        }

        // Euler identity xi . d_xi b_j = deg * b_j on parametrix components
        let xi = [1.1, -0.5, 0.3, 0.8];
        for comp in &b.components {
            let jet = (comp.f)(&xs, &xi, 0, 1).unwrap();
            let mut acc = num_complex::Complex64::new(0.0, 0.0);
            for i in 0..4 {
                let mut alpha = vec![0usize; 8];
                alpha[4 + i] = 1;
                acc += jet.extract_partial(&alpha).unwrap().as_scalar() * xi[i];
            }
            let expect = jet.value().as_scalar() * comp.degree;
            if (acc - expect).norm() >= 1e-10 {
                fails.push(format!(
                    "euler deg {} gap {:.3e}",
                    comp.degree,
                    (acc - expect).norm()
                ));
            }
        }

        gate.check(
            "property spot checks",
            fails.is_empty(),
            if fails.is_empty() {
                "all green".to_string()
            } else {
                fails.join("; ")
            },
        );
    }

    assert!(
        gate.failures.is_empty(),
        "acceptance failures:\n{}",
        gate.failures.join("\n")
    );
}
