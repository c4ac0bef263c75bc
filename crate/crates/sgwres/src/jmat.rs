//! Square matrices of scalar jets (metric entries, frames, Christoffel
//! assembly). Entries are d=1 jets over a common basepoint.

use crate::error::{Result, SgError};
use crate::jet::Jet;

#[derive(Clone)]
pub struct JMat {
    pub n: usize,
    pub e: Vec<Jet>, // row-major scalar jets
}

impl JMat {
    pub fn new(n: usize, e: Vec<Jet>) -> Self {
        assert_eq!(e.len(), n * n);
        JMat { n, e }
    }

    pub fn at(&self, i: usize, j: usize) -> &Jet {
        &self.e[i * self.n + j]
    }

    pub fn mul(&self, o: &JMat) -> Result<JMat> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut acc = self.at(i, 0).mul(o.at(0, j))?;
                for k in 1..n {
                    acc = acc.add(&self.at(i, k).mul(o.at(k, j))?)?;
                }
                out.push(acc);
            }
        }
        Ok(JMat::new(n, out))
    }

    /// Lower-triangular Cholesky factor, g = L L^T. Errors on non-positive
    /// pivots.
    pub fn cholesky_lower(&self) -> Result<JMat> {
        let n = self.n;
        let shape = self.e[0].shape();
        let base = self.e[0].base.clone();
        let zero = Jet::zero(shape, &base, 1);
        let mut l = vec![zero; n * n];
        for j in 0..n {
            let mut diag = self.at(j, j).clone();
            for k in 0..j {
                diag = diag.sub(&l[j * n + k].mul(&l[j * n + k])?)?;
            }
            let pivot = diag.value().as_scalar().re;
            if pivot <= 0.0 {
                return Err(SgError::NotPositiveDefinite { pivot });
            }
            let ljj = diag.sqrt()?;
            let ljj_inv = ljj.recip()?;
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut v = self.at(i, j).clone();
                for k in 0..j {
                    v = v.sub(&l[i * n + k].mul(&l[j * n + k])?)?;
                }
                l[i * n + j] = v.mul(&ljj_inv)?;
            }
        }
        Ok(JMat::new(n, l))
    }

    /// Inverse of a lower-triangular matrix by forward substitution.
    pub fn lower_inverse(&self) -> Result<JMat> {
        let n = self.n;
        let shape = self.e[0].shape();
        let base = self.e[0].base.clone();
        let zero = Jet::zero(shape, &base, 1);
        let mut m = vec![zero; n * n];
        for i in 0..n {
            let dinv = self.at(i, i).recip()?;
            m[i * n + i] = dinv.clone();
            for j in 0..i {
                let mut acc = self.at(i, j).mul(&m[j * n + j])?;
                for k in (j + 1)..i {
                    acc = acc.add(&self.at(i, k).mul(&m[k * n + j])?)?;
                }
                m[i * n + j] = acc.mul(&dinv)?.scale_re(-1.0);
            }
        }
        Ok(JMat::new(n, m))
    }

    /// Full inverse via Gauss-Jordan with value-level pivoting.
    pub fn inverse(&self) -> Result<JMat> {
        let n = self.n;
        let shape = self.e[0].shape();
        let base = self.e[0].base.clone();
        let mut a = self.e.clone();
        let mut inv: Vec<Jet> = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                inv.push(Jet::constant_re(shape, &base, if i == j { 1.0 } else { 0.0 }));
            }
        }
        for col in 0..n {
            let mut best = col;
            let mut best_norm = a[col * n + col].value().as_scalar().norm();
            for r in (col + 1)..n {
                let nr = a[r * n + col].value().as_scalar().norm();
                if nr > best_norm {
                    best = r;
                    best_norm = nr;
                }
            }
            if best_norm < 1e-300 {
                return Err(SgError::SingularLeading { pivot: best_norm });
            }
            if best != col {
                for j in 0..n {
                    a.swap(col * n + j, best * n + j);
                    inv.swap(col * n + j, best * n + j);
                }
            }
            let pinv = a[col * n + col].recip()?;
            for j in 0..n {
                a[col * n + j] = a[col * n + j].mul(&pinv)?;
                inv[col * n + j] = inv[col * n + j].mul(&pinv)?;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[r * n + col].clone();
                if f.norm_max() == 0.0 {
                    continue;
                }
                for j in 0..n {
                    a[r * n + j] = a[r * n + j].sub(&f.mul(&a[col * n + j])?)?;
                    inv[r * n + j] = inv[r * n + j].sub(&f.mul(&inv[col * n + j])?)?;
                }
            }
        }
        Ok(JMat::new(n, inv))
    }

    /// Determinant by cofactor expansion (n <= 8 in practice, jets commute).
    pub fn det(&self) -> Result<Jet> {
        let n = self.n;
        if n == 1 {
            return Ok(self.e[0].clone());
        }
        let mut acc: Option<Jet> = None;
        for j in 0..n {
            // minor (0, j)
            let mut sub = Vec::with_capacity((n - 1) * (n - 1));
            for r in 1..n {
                for c in 0..n {
                    if c != j {
                        sub.push(self.at(r, c).clone());
                    }
                }
            }
            let minor = JMat::new(n - 1, sub).det()?;
            let term = self.at(0, j).mul(&minor)?;
            let term = if j % 2 == 0 { term } else { term.scale_re(-1.0) };
            acc = Some(match acc {
                None => term,
                Some(a) => a.add(&term)?,
            });
        }
        Ok(acc.unwrap())
    }
}
