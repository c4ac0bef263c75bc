//! Small dense complex matrices (spinor dimension <= 16, typically 1 or 4).

use crate::error::{Result, SgError};
use num_complex::Complex64;
use smallvec::SmallVec;

type Store = SmallVec<[Complex64; 16]>;

/// Dense d x d complex matrix, row major. `d = 1` doubles as a scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    pub d: usize,
    a: Store,
}

impl CMat {
    pub fn zeros(d: usize) -> Self {
        CMat {
            d,
            a: smallvec::smallvec![Complex64::new(0.0, 0.0); d * d],
        }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn scalar(z: Complex64) -> Self {
        let mut m = Self::zeros(1);
        m[(0, 0)] = z;
        m
    }

    pub fn scalar_re(x: f64) -> Self {
        Self::scalar(Complex64::new(x, 0.0))
    }

    pub fn from_rows(d: usize, rows: &[Complex64]) -> Self {
        assert_eq!(rows.len(), d * d);
        CMat {
            d,
            a: rows.iter().copied().collect(),
        }
    }

    pub fn as_scalar(&self) -> Complex64 {
        debug_assert_eq!(self.d, 1);
        self.a[0]
    }

    pub fn add(&self, o: &CMat) -> CMat {
        debug_assert_eq!(self.d, o.d);
        let mut r = self.clone();
        for (x, y) in r.a.iter_mut().zip(o.a.iter()) {
            *x += *y;
        }
        r
    }

    pub fn sub(&self, o: &CMat) -> CMat {
        debug_assert_eq!(self.d, o.d);
        let mut r = self.clone();
        for (x, y) in r.a.iter_mut().zip(o.a.iter()) {
            *x -= *y;
        }
        r
    }

    pub fn add_assign(&mut self, o: &CMat) {
        debug_assert_eq!(self.d, o.d);
        for (x, y) in self.a.iter_mut().zip(o.a.iter()) {
            *x += *y;
        }
    }

    pub fn scale(&self, z: Complex64) -> CMat {
        let mut r = self.clone();
        for x in r.a.iter_mut() {
            *x *= z;
        }
        r
    }

    pub fn neg(&self) -> CMat {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    pub fn mul(&self, o: &CMat) -> CMat {
        debug_assert_eq!(self.d, o.d);
        let d = self.d;
        if d == 1 {
            return CMat::scalar(self.a[0] * o.a[0]);
        }
        let mut r = CMat::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let aik = self.a[i * d + k];
                if aik == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..d {
                    r.a[i * d + j] += aik * o.a[k * d + j];
                }
            }
        }
        r
    }

    /// self += z * (a * b), fused into the accumulator to avoid temporaries.
    pub fn acc_mul(&mut self, z: Complex64, a: &CMat, b: &CMat) {
        let d = self.d;
        if d == 1 {
            self.a[0] += z * a.a[0] * b.a[0];
            return;
        }
        for i in 0..d {
            for k in 0..d {
                let c = z * a.a[i * d + k];
                if c == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..d {
                    self.a[i * d + j] += c * b.a[k * d + j];
                }
            }
        }
    }

    /// Kronecker product.
    pub fn kron(&self, o: &CMat) -> CMat {
        let d = self.d * o.d;
        let mut out = CMat::zeros(d);
        for i in 0..self.d {
            for j in 0..self.d {
                let s = self[(i, j)];
                for k in 0..o.d {
                    for l in 0..o.d {
                        out[(i * o.d + k, j * o.d + l)] = s * o[(k, l)];
                    }
                }
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.d).map(|i| self.a[i * self.d + i]).sum()
    }

    pub fn transpose(&self) -> CMat {
        let d = self.d;
        let mut r = CMat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                r.a[j * d + i] = self.a[i * d + j];
            }
        }
        r
    }

    pub fn norm_fro(&self) -> f64 {
        self.a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn norm_max(&self) -> f64 {
        self.a.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Gauss-Jordan inverse with partial pivoting.
    pub fn inverse(&self) -> Result<CMat> {
        let d = self.d;
        let mut m = self.clone();
        let mut inv = CMat::identity(d);
        for col in 0..d {
            // pivot
            let mut best = col;
            let mut best_norm = m.a[col * d + col].norm();
            for r in (col + 1)..d {
                let nr = m.a[r * d + col].norm();
                if nr > best_norm {
                    best = r;
                    best_norm = nr;
                }
            }
            if best_norm < 1e-300 {
                return Err(SgError::SingularLeading { pivot: best_norm });
            }
            if best != col {
                for j in 0..d {
                    m.a.swap(col * d + j, best * d + j);
                    inv.a.swap(col * d + j, best * d + j);
                }
            }
            let p = m.a[col * d + col];
            for j in 0..d {
                m.a[col * d + j] /= p;
                inv.a[col * d + j] /= p;
            }
            for r in 0..d {
                if r == col {
                    continue;
                }
                let f = m.a[r * d + col];
                if f == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..d {
                    let u = m.a[col * d + j];
                    let v = inv.a[col * d + j];
                    m.a[r * d + j] -= f * u;
                    inv.a[r * d + j] -= f * v;
                }
            }
        }
        Ok(inv)
    }

    /// Coefficients of the characteristic polynomial via Faddeev-LeVerrier:
    /// returns c such that det(lambda I - A) = lambda^d + c[0] lambda^{d-1} + ... + c[d-1].
    pub fn char_poly(&self) -> Vec<Complex64> {
        let d = self.d;
        let mut coeffs = Vec::with_capacity(d);
        let mut m = CMat::identity(d);
        for k in 1..=d {
            m = self.mul(&m);
            // c_k = -tr(A M_{k-1}) / k
            let c_k = -(m.trace()) / Complex64::new(k as f64, 0.0);
            coeffs.push(c_k);
            // M_k = A M_{k-1} + c_k I
            for i in 0..d {
                m.a[i * d + i] += c_k;
            }
        }
        coeffs
    }

    /// Eigenvalues via Durand-Kerner on the characteristic polynomial.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let d = self.d;
        if d == 1 {
            return vec![self.a[0]];
        }
        let c = self.char_poly();
        // p(z) = z^d + c[0] z^{d-1} + ... + c[d-1]
        let eval = |z: Complex64| -> Complex64 {
            let mut v = Complex64::new(1.0, 0.0);
            for ck in &c {
                v = v * z + ck;
            }
            v
        };
        let radius = 1.0 + c.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let seed = Complex64::new(0.4, 0.9);
        let mut roots: Vec<Complex64> = (0..d)
            .map(|k| seed.powu(k as u32 + 1) * radius)
            .collect();
        for _ in 0..200 {
            let mut delta = 0.0f64;
            for i in 0..d {
                let mut denom = Complex64::new(1.0, 0.0);
                for j in 0..d {
                    if j != i {
                        denom *= roots[i] - roots[j];
                    }
                }
                if denom.norm() < 1e-300 {
                    denom = Complex64::new(1e-300, 0.0);
                }
                let step = eval(roots[i]) / denom;
                roots[i] -= step;
                delta = delta.max(step.norm());
            }
            if delta < 1e-14 * radius.max(1.0) {
                break;
            }
        }
        roots
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.a[i * self.d + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.a[i * self.d + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_roundtrip() {
        let m = CMat::from_rows(
            2,
            &[
                Complex64::new(2.0, 1.0),
                Complex64::new(0.5, 0.0),
                Complex64::new(-1.0, 0.3),
                Complex64::new(1.5, -0.2),
            ],
        );
        let inv = m.inverse().unwrap();
        let id = m.mul(&inv);
        assert!(id.sub(&CMat::identity(2)).norm_max() < 1e-13);
    }

    #[test]
    fn eigenvalues_diagonal() {
        let mut m = CMat::zeros(3);
        m[(0, 0)] = Complex64::new(1.0, 0.0);
        m[(1, 1)] = Complex64::new(-2.0, 0.5);
        m[(2, 2)] = Complex64::new(3.0, -1.0);
        let mut ev = m.eigenvalues();
        ev.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((ev[0] - Complex64::new(-2.0, 0.5)).norm() < 1e-10);
        assert!((ev[1] - Complex64::new(1.0, 0.0)).norm() < 1e-10);
        assert!((ev[2] - Complex64::new(3.0, -1.0)).norm() < 1e-10);
    }

    #[test]
    fn eigenvalues_nontrivial() {
        // [[0,1],[1,0]] has eigenvalues +-1
        let m = CMat::from_rows(
            2,
            &[
                Complex64::new(0.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        );
        let mut ev = m.eigenvalues();
        ev.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((ev[0].re + 1.0).abs() < 1e-10 && ev[0].im.abs() < 1e-10);
        assert!((ev[1].re - 1.0).abs() < 1e-10 && ev[1].im.abs() < 1e-10);
    }
}
