//! Python bindings: metrics, finite-part integrals, the Dirac symbol route
//! and the heat-coefficient route. Structured reports are returned as JSON
//! strings (same schema as the CLI) so callers can json.loads them.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::sync::Arc;

use sgwres::dirac::{build_dirac, kastler_integral, wres_dirac, DiracData};
use sgwres::fpint::{finite_part_integral, FpConfig, HomTerm, RealFn};
use sgwres::geometry::MetricField;
use sgwres::laplacian as lap;
use sgwres::quad::sphere_rule;

fn err(e: sgwres::SgError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_json<T: serde::Serialize>(v: &T) -> PyResult<String> {
    serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Quadrature / extrapolation parameters mirroring the CLI quad.* keys.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct QuadConfig {
    inner: FpConfig,
}

#[pymethods]
impl QuadConfig {
    #[new]
    #[pyo3(signature = (sphere_level=None, rho0=None, ladder_count=None, radial_points=None, fit_tolerance=None, assume_radial=None, xi_sphere_level=None))]
    fn new(
        sphere_level: Option<usize>,
        rho0: Option<f64>,
        ladder_count: Option<usize>,
        radial_points: Option<usize>,
        fit_tolerance: Option<f64>,
        assume_radial: Option<bool>,
        xi_sphere_level: Option<usize>,
    ) -> Self {
        let d = FpConfig::default();
        QuadConfig {
            inner: FpConfig {
                sphere_level: sphere_level.unwrap_or(d.sphere_level),
                rho0: rho0.unwrap_or(d.rho0),
                ladder_count: ladder_count.unwrap_or(d.ladder_count),
                radial_points: radial_points.unwrap_or(d.radial_points),
                fit_tolerance: fit_tolerance.unwrap_or(d.fit_tolerance),
                assume_radial: assume_radial.unwrap_or(true),
                xi_sphere_level: xi_sphere_level.unwrap_or(d.xi_sphere_level),
            },
        }
    }
}

/// An SG-classical metric on R^n.
#[pyclass(skip_from_py_object)]
#[derive(Clone)]
struct Metric {
    inner: MetricField,
}

#[pymethods]
impl Metric {
    #[staticmethod]
    fn flat(n: usize) -> Metric {
        Metric {
            inner: MetricField::flat(n),
        }
    }

    /// g_jk = e^{2 phi} delta_jk with phi = c (1+|x|^2)^{-p}.
    #[staticmethod]
    fn conformal(n: usize, c: f64, p: f64) -> Metric {
        Metric {
            inner: MetricField::conformal(n, c, p),
        }
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    fn scalar_curvature(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.scalar_curvature(&x).map_err(err)
    }

    fn sqrt_det(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.sqrt_det(&x).map_err(err)
    }

    /// Christoffels, curvature tensors, s and the volume density at x
    /// (JSON record).
    fn curvature(&self, x: Vec<f64>) -> PyResult<String> {
        to_json(&self.inner.curvature_at(&x).map_err(err)?)
    }

    /// Ray-fit decay check of the metric entries (JSON report).
    fn check_sg_classical(&self, beta_max: usize, rays: usize) -> PyResult<String> {
        to_json(&self.inner.check_sg_classical(beta_max, rays).map_err(err)?)
    }
}

/// The Dirac operator package on (R^4, g): gamma matrices, symbol, square,
/// parametrix.
#[pyclass]
struct Dirac {
    inner: DiracData,
}

#[pymethods]
impl Dirac {
    #[new]
    fn new(g: &Metric) -> PyResult<Self> {
        Ok(Dirac {
            inner: build_dirac(&g.inner).map_err(err)?,
        })
    }

    /// Normalized sphere integral of the spinor trace of the xi-degree -4
    /// parametrix component; equals -(1/24 pi^2) s(x).
    #[pyo3(signature = (x, sphere_level=4))]
    fn kastler_integral(&self, x: Vec<f64>, sphere_level: usize) -> PyResult<f64> {
        let rule = sphere_rule(4, sphere_level).map_err(err)?;
        kastler_integral(&self.inner, &x, &rule).map_err(err)
    }

    /// Both residue routes (symbol/parametrix and curvature) as a JSON
    /// report.
    fn wres(&self, kastler_points: Vec<Vec<f64>>, cfg: &QuadConfig) -> PyResult<String> {
        to_json(&wres_dirac(&self.inner, &kastler_points, &cfg.inner).map_err(err)?)
    }
}

/// Generalized Laplacian nabla*nabla + K.
#[pyclass]
struct Laplacian {
    inner: lap::GeneralizedLaplacian,
}

#[pymethods]
impl Laplacian {
    /// Zero endomorphism on a trivial rank-r bundle.
    #[staticmethod]
    fn free(g: &Metric, rank: usize) -> Laplacian {
        Laplacian {
            inner: lap::GeneralizedLaplacian::free(&g.inner, rank),
        }
    }

    /// K = c Id.
    #[staticmethod]
    fn constant_k(g: &Metric, rank: usize, c: f64) -> Laplacian {
        Laplacian {
            inner: lap::GeneralizedLaplacian::with_constant_k(&g.inner, rank, c),
        }
    }

    /// K = s/4 Id on the spinor rank, matching the square of the Dirac
    /// operator.
    #[staticmethod]
    fn lichnerowicz(g: &Metric) -> PyResult<Laplacian> {
        Ok(Laplacian {
            inner: lap::GeneralizedLaplacian::lichnerowicz(&g.inner).map_err(err)?,
        })
    }

    #[getter]
    fn rank(&self) -> usize {
        self.inner.rank
    }

    /// The t^1 heat coefficient (1/6) s(x) Id - K_x as a nested list
    /// [[re, im], ...] row-major.
    fn heat_a1(&self, x: Vec<f64>) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let hc = lap::heat_a1(&self.inner, &x).map_err(err)?;
        let d = hc.a1.d;
        Ok((0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let z = hc.a1[(i, j)];
                        vec![z.re, z.im]
                    })
                    .collect()
            })
            .collect())
    }

    /// C0, C1 of the regularized heat trace (JSON report).
    fn heat_trace(&self, cfg: &QuadConfig) -> PyResult<String> {
        to_json(&lap::heat_trace_coefficients(&self.inner, &cfg.inner).map_err(err)?)
    }

    /// wres(Delta^{-n/2+1}) through the heat coefficients (JSON report).
    fn wres(&self, cfg: &QuadConfig) -> PyResult<String> {
        to_json(&lap::wres_from_heat(&self.inner, &cfg.inner).map_err(err)?)
    }
}

/// Finite-part integral of (1+|x|^2)^q over R^n (JSON report); the
/// x-expansion terms come from the binomial series.
#[pyfunction]
fn fp_powlaw(n: usize, q: f64, cfg: &QuadConfig) -> PyResult<String> {
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
    to_json(&finite_part_integral(n, 2.0 * q, &a, &terms, None, None, &cfg.inner).map_err(err)?)
}

/// Finite-part integral of the constant c over R^n (exact cancellation,
/// JSON report).
#[pyfunction]
fn fp_constant(n: usize, c: f64, cfg: &QuadConfig) -> PyResult<String> {
    let a: RealFn = Arc::new(move |_x: &[f64]| Ok(c));
    let terms = vec![HomTerm {
        degree: 0.0,
        f: Arc::new(move |_u: &[f64]| Ok(c)),
    }];
    to_json(&finite_part_integral(n, 0.0, &a, &terms, None, None, &cfg.inner).map_err(err)?)
}

/// Finite part of the total scalar curvature of g (JSON report).
#[pyfunction]
fn fp_scalar_curvature(g: &Metric, cfg: &QuadConfig) -> PyResult<String> {
    to_json(&lap::fp_scalar_curvature(&g.inner, &cfg.inner).map_err(err)?)
}

/// wres((D^2 + eps)^{-n/2+1}) closed form (JSON report).
#[pyfunction]
fn epsilon_shift(g: &Metric, eps: f64, cfg: &QuadConfig) -> PyResult<String> {
    to_json(&lap::epsilon_shift_wres(&g.inner, eps, &cfg.inner).map_err(err)?)
}

/// -(1/(24 pi^2)), the four-dimensional identity constant.
#[pyfunction]
fn kkw_constant() -> f64 {
    sgwres::dirac::kkw_constant()
}

/// (n-2)/(Gamma(n/2) (4 pi)^{n/2}).
#[pyfunction]
fn residue_prefactor(n: usize) -> f64 {
    lap::residue_prefactor(n)
}

/// Relative gap of the two equivalent Gamma-factor expressions.
#[pyfunction]
fn gamma_identity_gap(n: usize) -> f64 {
    lap::gamma_identity_gap(n)
}

#[pymodule]
fn sgwres_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<QuadConfig>()?;
    m.add_class::<Metric>()?;
    m.add_class::<Dirac>()?;
    m.add_class::<Laplacian>()?;
    m.add_function(wrap_pyfunction!(fp_powlaw, m)?)?;
    m.add_function(wrap_pyfunction!(fp_constant, m)?)?;
    m.add_function(wrap_pyfunction!(fp_scalar_curvature, m)?)?;
    m.add_function(wrap_pyfunction!(epsilon_shift, m)?)?;
    m.add_function(wrap_pyfunction!(kkw_constant, m)?)?;
    m.add_function(wrap_pyfunction!(residue_prefactor, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_identity_gap, m)?)?;
    Ok(())
}
