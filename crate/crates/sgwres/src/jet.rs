//! Truncated multivariate Taylor arithmetic with complex matrix values.
//!
//! A `Jet` stores Taylor-normalized coefficients (coefficient at alpha equals
//! (1/alpha!) d^alpha f at the basepoint) over one or two groups of variables,
//! each group with its own truncation order. Symbol calculus uses two groups
//! (x and xi); geometry uses a single group.

use crate::error::{Result, SgError};
use crate::mat::CMat;
use num_complex::Complex64;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

pub const MAX_GROUP_DIM: usize = 8;

/// Multi-index within one variable group.
pub type GIdx = [u8; MAX_GROUP_DIM];

/// Variable layout: up to two groups with independent truncation orders.
/// `dims[1] == 0` means a single-group jet.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct JetShape {
    pub dims: [usize; 2],
    pub orders: [usize; 2],
}

impl JetShape {
    pub fn single(dim: usize, order: usize) -> Self {
        JetShape {
            dims: [dim, 0],
            orders: [order, 0],
        }
    }

    pub fn pair(dim_x: usize, dim_xi: usize, order_x: usize, order_xi: usize) -> Self {
        JetShape {
            dims: [dim_x, dim_xi],
            orders: [order_x, order_xi],
        }
    }

    pub fn nvars(&self) -> usize {
        self.dims[0] + self.dims[1]
    }

    pub fn total_order(&self) -> usize {
        self.orders[0] + self.orders[1]
    }
}

fn gidx_norm(a: &GIdx) -> usize {
    a.iter().map(|&v| v as usize).sum()
}

fn gidx_factorial(a: &GIdx) -> f64 {
    let mut f = 1.0;
    for &v in a.iter() {
        for k in 2..=(v as u64) {
            f *= k as f64;
        }
    }
    f
}

fn enumerate_group(dim: usize, order: usize) -> Vec<GIdx> {
    let mut out = Vec::new();
    let mut cur: GIdx = [0; MAX_GROUP_DIM];
    fn rec(dim: usize, pos: usize, left: usize, cur: &mut GIdx, out: &mut Vec<GIdx>) {
        if pos == dim {
            out.push(*cur);
            return;
        }
        for v in 0..=left {
            cur[pos] = v as u8;
            rec(dim, pos + 1, left - v, cur, out);
        }
        cur[pos] = 0;
    }
    // enumerate by total degree for a canonical deterministic order
    for deg in 0..=order {
        let mut layer = Vec::new();
        rec(dim, 0, deg, &mut cur, &mut layer);
        layer.retain(|a| gidx_norm(a) == deg);
        out.extend(layer);
    }
    out
}

struct GroupTable {
    idx: Vec<GIdx>,
    lookup: HashMap<GIdx, u32>,
    /// (i, j, k) with idx[i] + idx[j] == idx[k]
    prod: Vec<(u32, u32, u32)>,
}

fn build_group(dim: usize, order: usize) -> GroupTable {
    let idx = enumerate_group(dim, order);
    let lookup: HashMap<GIdx, u32> = idx
        .iter()
        .enumerate()
        .map(|(i, a)| (*a, i as u32))
        .collect();
    let mut prod = Vec::new();
    for (i, a) in idx.iter().enumerate() {
        for (j, b) in idx.iter().enumerate() {
            if gidx_norm(a) + gidx_norm(b) > order {
                continue;
            }
            let mut s: GIdx = [0; MAX_GROUP_DIM];
            for t in 0..dim {
                s[t] = a[t] + b[t];
            }
            if let Some(&k) = lookup.get(&s) {
                prod.push((i as u32, j as u32, k));
            }
        }
    }
    GroupTable { idx, lookup, prod }
}

pub struct IndexTable {
    pub shape: JetShape,
    g0: GroupTable,
    g1: GroupTable,
}

impl IndexTable {
    pub fn len(&self) -> usize {
        self.g0.idx.len() * self.g1.idx.len()
    }

    fn flat(&self, ia: usize, ib: usize) -> usize {
        ia * self.g1.idx.len() + ib
    }

    /// Multi-index (concatenated groups) of a flat coefficient slot.
    pub fn index_of(&self, slot: usize) -> Vec<usize> {
        let n1 = self.g1.idx.len();
        let a = &self.g0.idx[slot / n1];
        let b = &self.g1.idx[slot % n1];
        let mut v: Vec<usize> = a[..self.shape.dims[0]].iter().map(|&x| x as usize).collect();
        v.extend(b[..self.shape.dims[1]].iter().map(|&x| x as usize));
        v
    }

    fn split(&self, alpha: &[usize]) -> Result<(GIdx, GIdx)> {
        if alpha.len() != self.shape.nvars() {
            return Err(SgError::DimensionMismatch(format!(
                "multi-index length {} vs {} variables",
                alpha.len(),
                self.shape.nvars()
            )));
        }
        let mut a: GIdx = [0; MAX_GROUP_DIM];
        let mut b: GIdx = [0; MAX_GROUP_DIM];
        for i in 0..self.shape.dims[0] {
            a[i] = alpha[i] as u8;
        }
        for i in 0..self.shape.dims[1] {
            b[i] = alpha[self.shape.dims[0] + i] as u8;
        }
        Ok((a, b))
    }
}

fn table_cache() -> &'static Mutex<HashMap<JetShape, Arc<IndexTable>>> {
    static CACHE: OnceLock<Mutex<HashMap<JetShape, Arc<IndexTable>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

pub fn table(shape: JetShape) -> Arc<IndexTable> {
    let mut cache = table_cache().lock().unwrap();
    cache
        .entry(shape)
        .or_insert_with(|| {
            Arc::new(IndexTable {
                shape,
                g0: build_group(shape.dims[0], shape.orders[0]),
                g1: build_group(shape.dims[1], shape.orders[1]),
            })
        })
        .clone()
}

/// Truncated Taylor expansion of a matrix-valued function at a basepoint.
#[derive(Clone)]
pub struct Jet {
    pub tbl: Arc<IndexTable>,
    /// Basepoint, all variable groups concatenated.
    pub base: Vec<f64>,
    /// Matrix dimension of the values.
    pub d: usize,
    coeffs: Vec<CMat>,
}

impl Jet {
    pub fn shape(&self) -> JetShape {
        self.tbl.shape
    }

    pub fn zero(shape: JetShape, base: &[f64], d: usize) -> Jet {
        let tbl = table(shape);
        let n = tbl.len();
        Jet {
            tbl,
            base: base.to_vec(),
            d,
            coeffs: vec![CMat::zeros(d); n],
        }
    }

    pub fn constant(shape: JetShape, base: &[f64], value: CMat) -> Jet {
        let d = value.d;
        let mut j = Jet::zero(shape, base, d);
        j.coeffs[0] = value;
        j
    }

    pub fn constant_re(shape: JetShape, base: &[f64], x: f64) -> Jet {
        Jet::constant(shape, base, CMat::scalar_re(x))
    }

    pub fn identity(shape: JetShape, base: &[f64], d: usize) -> Jet {
        Jet::constant(shape, base, CMat::identity(d))
    }

    /// Jet of the coordinate function for variable `i` of group `group`.
    /// The value is read from the basepoint.
    pub fn variable(shape: JetShape, base: &[f64], group: usize, i: usize) -> Result<Jet> {
        if i >= shape.dims[group] {
            return Err(SgError::IndexOutOfRange {
                index: i,
                dim: shape.dims[group],
            });
        }
        let mut j = Jet::zero(shape, base, 1);
        let offset = if group == 0 { 0 } else { shape.dims[0] };
        j.coeffs[0] = CMat::scalar_re(base[offset + i]);
        if shape.orders[group] >= 1 {
            let mut alpha = vec![0usize; shape.nvars()];
            alpha[offset + i] = 1;
            j.set_coeff(&alpha, CMat::scalar_re(1.0))?;
        }
        Ok(j)
    }

    /// All coordinate jets of one group at a common basepoint.
    pub fn variables(shape: JetShape, base: &[f64], group: usize) -> Result<Vec<Jet>> {
        (0..shape.dims[group])
            .map(|i| Jet::variable(shape, base, group, i))
            .collect()
    }

    pub fn coeff(&self, alpha: &[usize]) -> Result<&CMat> {
        let (a, b) = self.tbl.split(alpha)?;
        let ia = self.tbl.g0.lookup.get(&a).ok_or(SgError::OrderExceeded {
            requested: gidx_norm(&a),
            available: self.tbl.shape.orders[0],
        })?;
        let ib = self.tbl.g1.lookup.get(&b).ok_or(SgError::OrderExceeded {
            requested: gidx_norm(&b),
            available: self.tbl.shape.orders[1],
        })?;
        Ok(&self.coeffs[self.tbl.flat(*ia as usize, *ib as usize)])
    }

    pub fn set_coeff(&mut self, alpha: &[usize], value: CMat) -> Result<()> {
        let (a, b) = self.tbl.split(alpha)?;
        let ia = *self.tbl.g0.lookup.get(&a).ok_or(SgError::OrderExceeded {
            requested: gidx_norm(&a),
            available: self.tbl.shape.orders[0],
        })? as usize;
        let ib = *self.tbl.g1.lookup.get(&b).ok_or(SgError::OrderExceeded {
            requested: gidx_norm(&b),
            available: self.tbl.shape.orders[1],
        })? as usize;
        let slot = self.tbl.flat(ia, ib);
        self.coeffs[slot] = value;
        Ok(())
    }

    /// Value at the basepoint.
    pub fn value(&self) -> &CMat {
        &self.coeffs[0]
    }

    /// alpha! * coeff(alpha) = (d^alpha f)(basepoint).
    pub fn extract_partial(&self, alpha: &[usize]) -> Result<CMat> {
        let (a, b) = self.tbl.split(alpha)?;
        let fact = gidx_factorial(&a) * gidx_factorial(&b);
        Ok(self.coeff(alpha)?.scale(Complex64::new(fact, 0.0)))
    }

    fn check_compat(&self, o: &Jet) -> Result<()> {
        if self.tbl.shape.dims != o.tbl.shape.dims || self.d != o.d {
            return Err(SgError::DimensionMismatch(format!(
                "{:?} vs {:?} (d {} vs {})",
                self.tbl.shape, o.tbl.shape, self.d, o.d
            )));
        }
        if self.base.len() != o.base.len()
            || self
                .base
                .iter()
                .zip(o.base.iter())
                .any(|(x, y)| x.to_bits() != y.to_bits())
        {
            return Err(SgError::BasepointMismatch);
        }
        Ok(())
    }

    /// Truncate to smaller (or equal) orders per group.
    pub fn truncate(&self, orders: [usize; 2]) -> Jet {
        let shape = JetShape {
            dims: self.tbl.shape.dims,
            orders: [
                orders[0].min(self.tbl.shape.orders[0]),
                orders[1].min(self.tbl.shape.orders[1]),
            ],
        };
        if shape == self.tbl.shape {
            return self.clone();
        }
        let mut out = Jet::zero(shape, &self.base, self.d);
        for (ia, a) in out.tbl.g0.idx.iter().enumerate() {
            let sa = *self.tbl.g0.lookup.get(a).unwrap() as usize;
            for (ib, b) in out.tbl.g1.idx.iter().enumerate() {
                let sb = *self.tbl.g1.lookup.get(b).unwrap() as usize;
                let slot = out.tbl.flat(ia, ib);
                out.coeffs[slot] = self.coeffs[self.tbl.flat(sa, sb)].clone();
            }
        }
        out
    }

    fn aligned(&self, o: &Jet) -> Result<(Jet, Jet)> {
        self.check_compat(o)?;
        let orders = [
            self.tbl.shape.orders[0].min(o.tbl.shape.orders[0]),
            self.tbl.shape.orders[1].min(o.tbl.shape.orders[1]),
        ];
        Ok((self.truncate(orders), o.truncate(orders)))
    }

    pub fn add(&self, o: &Jet) -> Result<Jet> {
        let (mut a, b) = self.aligned(o)?;
        for (x, y) in a.coeffs.iter_mut().zip(b.coeffs.iter()) {
            x.add_assign(y);
        }
        Ok(a)
    }

    pub fn sub(&self, o: &Jet) -> Result<Jet> {
        self.add(&o.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, z: Complex64) -> Jet {
        let mut r = self.clone();
        for c in r.coeffs.iter_mut() {
            *c = c.scale(z);
        }
        r
    }

    pub fn scale_re(&self, x: f64) -> Jet {
        self.scale(Complex64::new(x, 0.0))
    }

    /// Left-multiply every coefficient by a constant matrix.
    pub fn lmul_mat(&self, m: &CMat) -> Jet {
        let mut r = self.clone();
        for c in r.coeffs.iter_mut() {
            *c = m.mul(c);
        }
        r
    }

    /// Right-multiply every coefficient by a constant matrix.
    pub fn rmul_mat(&self, m: &CMat) -> Jet {
        let mut r = self.clone();
        for c in r.coeffs.iter_mut() {
            *c = c.mul(m);
        }
        r
    }

    /// Truncated Cauchy product.
    pub fn mul(&self, o: &Jet) -> Result<Jet> {
        if self.d != o.d && self.d != 1 && o.d != 1 {
            return Err(SgError::DimensionMismatch(format!(
                "matrix dims {} vs {}",
                self.d, o.d
            )));
        }
        // scalar * matrix promotion
        if self.d == 1 && o.d != 1 {
            return self.promote_d(o.d).mul(o);
        }
        if o.d == 1 && self.d != 1 {
            return self.mul(&o.promote_d(self.d));
        }
        let (a, b) = self.aligned(o)?;
        let tbl = a.tbl.clone();
        let mut out = Jet::zero(tbl.shape, &a.base, a.d);
        let one = Complex64::new(1.0, 0.0);
        let n1 = tbl.g1.idx.len();
        for &(ia, ja, ka) in tbl.g0.prod.iter() {
            for &(ib, jb, kb) in tbl.g1.prod.iter() {
                let x = &a.coeffs[ia as usize * n1 + ib as usize];
                let y = &b.coeffs[ja as usize * n1 + jb as usize];
                out.coeffs[ka as usize * n1 + kb as usize].acc_mul(one, x, y);
            }
        }
        Ok(out)
    }

    /// Promote a scalar-valued jet to d x d (value times identity).
    pub fn promote_d(&self, d: usize) -> Jet {
        debug_assert_eq!(self.d, 1);
        let mut out = Jet::zero(self.tbl.shape, &self.base, d);
        for (slot, c) in self.coeffs.iter().enumerate() {
            out.coeffs[slot] = CMat::identity(d).scale(c.as_scalar());
        }
        out
    }

    /// Embed a single-group x-jet into a two-group shape (function independent of
    /// the second group). `base` must extend the jet's basepoint.
    pub fn embed_pair(&self, shape: JetShape, base: &[f64]) -> Result<Jet> {
        if self.tbl.shape.dims[1] != 0 || shape.dims[0] != self.tbl.shape.dims[0] {
            return Err(SgError::DimensionMismatch(
                "embed_pair expects a single-group jet matching group 0".into(),
            ));
        }
        if shape.orders[0] > self.tbl.shape.orders[0] {
            return Err(SgError::OrderExceeded {
                requested: shape.orders[0],
                available: self.tbl.shape.orders[0],
            });
        }
        let mut out = Jet::zero(shape, base, self.d);
        for (ia, a) in out.tbl.g0.idx.iter().enumerate() {
            let src = *self.tbl.g0.lookup.get(a).unwrap() as usize;
            let slot = out.tbl.flat(ia, 0);
            out.coeffs[slot] = self.coeffs[src].clone();
        }
        Ok(out)
    }

    /// Jet of the partial derivative d^alpha f, with orders reduced accordingly.
    pub fn derivative(&self, alpha: &[usize]) -> Result<Jet> {
        let (da, db) = self.tbl.split(alpha)?;
        let (na, nb) = (gidx_norm(&da), gidx_norm(&db));
        if na > self.tbl.shape.orders[0] || nb > self.tbl.shape.orders[1] {
            return Err(SgError::OrderExceeded {
                requested: na + nb,
                available: self.tbl.shape.total_order(),
            });
        }
        let shape = JetShape {
            dims: self.tbl.shape.dims,
            orders: [self.tbl.shape.orders[0] - na, self.tbl.shape.orders[1] - nb],
        };
        let mut out = Jet::zero(shape, &self.base, self.d);
        for (ia, a) in out.tbl.g0.idx.iter().enumerate() {
            let mut sa: GIdx = [0; MAX_GROUP_DIM];
            for t in 0..MAX_GROUP_DIM {
                sa[t] = a[t] + da[t];
            }
            let src_a = *self.tbl.g0.lookup.get(&sa).unwrap() as usize;
            // (beta+alpha)! / beta!
            let fa = gidx_factorial(&sa) / gidx_factorial(a);
            for (ib, b) in out.tbl.g1.idx.iter().enumerate() {
                let mut sb: GIdx = [0; MAX_GROUP_DIM];
                for t in 0..MAX_GROUP_DIM {
                    sb[t] = b[t] + db[t];
                }
                let src_b = *self.tbl.g1.lookup.get(&sb).unwrap() as usize;
                let fb = gidx_factorial(&sb) / gidx_factorial(b);
                let slot = out.tbl.flat(ia, ib);
                out.coeffs[slot] =
                    self.coeffs[self.tbl.flat(src_a, src_b)].scale(Complex64::new(fa * fb, 0.0));
            }
        }
        Ok(out)
    }

    /// Multiplicative inverse: requires invertible leading coefficient.
    /// For a = a0 + r (r nilpotent), a^{-1} = sum_k (-a0^{-1} r)^k a0^{-1}.
    pub fn inv(&self) -> Result<Jet> {
        let a0 = self.value().clone();
        let a0inv = a0.inverse()?;
        let shape = self.tbl.shape;
        let mut r = self.clone();
        r.coeffs[0] = CMat::zeros(self.d);
        // u = -a0^{-1} r
        let u = r.lmul_mat(&a0inv).scale(Complex64::new(-1.0, 0.0));
        let kmax = shape.total_order();
        let mut acc = Jet::constant(shape, &self.base, CMat::identity(self.d));
        let mut pow = Jet::constant(shape, &self.base, CMat::identity(self.d));
        for _ in 1..=kmax {
            pow = pow.mul(&u)?;
            acc = acc.add(&pow)?;
        }
        Ok(acc.rmul_mat(&a0inv))
    }

    /// Composition f(u) for a scalar jet u, given derivatives f^{(k)}(u0),
    /// k = 0..=total_order, at the jet's value.
    pub fn compose_scalar(&self, derivs: &[Complex64]) -> Result<Jet> {
        if self.d != 1 {
            return Err(SgError::DimensionMismatch(
                "compose_scalar requires a scalar jet".into(),
            ));
        }
        let kmax = self.tbl.shape.total_order();
        if derivs.len() < kmax + 1 {
            return Err(SgError::OrderExceeded {
                requested: kmax,
                available: derivs.len().saturating_sub(1),
            });
        }
        let mut v = self.clone();
        v.coeffs[0] = CMat::zeros(1);
        let mut fact = 1.0;
        let mut facts = vec![1.0];
        for k in 1..=kmax {
            fact *= k as f64;
            facts.push(fact);
        }
        let mut acc = Jet::constant(self.tbl.shape, &self.base, CMat::scalar(derivs[kmax] / facts[kmax]));
        for k in (0..kmax).rev() {
            acc = acc.mul(&v)?;
            acc = acc.add(&Jet::constant(
                self.tbl.shape,
                &self.base,
                CMat::scalar(derivs[k] / facts[k]),
            ))?;
        }
        Ok(acc)
    }

    fn scalar_value(&self) -> Complex64 {
        self.value().as_scalar()
    }

    pub fn exp(&self) -> Result<Jet> {
        let k = self.tbl.shape.total_order();
        let e = self.scalar_value().exp();
        self.compose_scalar(&vec![e; k + 1])
    }

    pub fn ln(&self) -> Result<Jet> {
        let k = self.tbl.shape.total_order();
        let u0 = self.scalar_value();
        let mut d = vec![u0.ln()];
        // f^{(k)}(u) = (-1)^{k-1} (k-1)! u^{-k}
        let mut c = Complex64::new(1.0, 0.0);
        for j in 1..=k {
            d.push(c * u0.powi(-(j as i32)));
            c *= Complex64::new(-(j as f64), 0.0);
        }
        self.compose_scalar(&d)
    }

    /// u^p for real p; requires value off the branch cut (we use it with
    /// positive real values).
    pub fn powf(&self, p: f64) -> Result<Jet> {
        let k = self.tbl.shape.total_order();
        let u0 = self.scalar_value();
        let mut d = Vec::with_capacity(k + 1);
        let mut c = Complex64::new(1.0, 0.0);
        for j in 0..=k {
            d.push(c * u0.powf(p - j as f64));
            c *= Complex64::new(p - j as f64, 0.0);
        }
        self.compose_scalar(&d)
    }

    pub fn sqrt(&self) -> Result<Jet> {
        self.powf(0.5)
    }

    pub fn recip(&self) -> Result<Jet> {
        self.powf(-1.0)
    }

    pub fn sin(&self) -> Result<Jet> {
        let k = self.tbl.shape.total_order();
        let u0 = self.scalar_value();
        let cyc = [u0.sin(), u0.cos(), -u0.sin(), -u0.cos()];
        let d: Vec<Complex64> = (0..=k).map(|j| cyc[j % 4]).collect();
        self.compose_scalar(&d)
    }

    pub fn cos(&self) -> Result<Jet> {
        let k = self.tbl.shape.total_order();
        let u0 = self.scalar_value();
        let cyc = [u0.cos(), -u0.sin(), -u0.cos(), u0.sin()];
        let d: Vec<Complex64> = (0..=k).map(|j| cyc[j % 4]).collect();
        self.compose_scalar(&d)
    }

    /// Largest absolute coefficient entry; used in residual checks.
    pub fn norm_max(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_max()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}

/// Spec-level convenience: jet of coordinate x_i at a basepoint with the
/// given value (other coordinates at 0).
pub fn jet_variable(i: usize, value: f64, dim: usize, order: usize) -> Result<Jet> {
    let shape = JetShape::single(dim, order);
    let mut base = vec![0.0; dim];
    base[i.min(dim.saturating_sub(1))] = value;
    if i >= dim {
        return Err(SgError::IndexOutOfRange { index: i, dim });
    }
    Jet::variable(shape, &base, 0, i)
}
