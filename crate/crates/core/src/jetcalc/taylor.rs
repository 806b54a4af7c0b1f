//! Truncated multivariate Taylor polynomials.
//!
//! A `Taylor` holds the coefficients of a polynomial in `nvars` nilpotent
//! displacements up to total degree `order`. Arithmetic on these values is
//! forward-mode differentiation to arbitrary order: seeding coordinate `i` with
//! `x_i + δ_i` and evaluating any smooth expression yields all partial
//! derivatives up to `order` at once.
//!
//! Monomials are enumerated by total degree, so the table for order `k - 1` is a
//! prefix of the table for order `k`. Truncation is slicing.

use std::collections::HashMap;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Debug)]
pub struct MonoTable {
    pub nvars: usize,
    pub order: usize,
    pub monos: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    /// (i, j, k) with monos[i] + monos[j] = monos[k]
    mul: Vec<(u32, u32, u32)>,
    /// per degree `d`, number of monomials of degree <= d
    counts: Vec<usize>,
    /// per degree `d`, number of mul triples whose product has degree <= d
    mul_counts: Vec<usize>,
}

impl MonoTable {
    fn build(nvars: usize, order: usize) -> MonoTable {
        let mut monos: Vec<Vec<u8>> = Vec::new();
        let mut counts = Vec::with_capacity(order + 1);
        for d in 0..=order {
            let mut cur = vec![0u8; nvars];
            push_degree(&mut monos, &mut cur, 0, d);
            counts.push(monos.len());
        }
        let index: HashMap<Vec<u8>, usize> =
            monos.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        let mut mul = Vec::new();
        let mut mul_counts = Vec::with_capacity(order + 1);
        for d in 0..=order {
            let lo = if d == 0 { 0 } else { counts[d - 1] };
            for k in lo..counts[d] {
                let mk = &monos[k];
                for (i, mi) in monos[..=k].iter().enumerate() {
                    if mi.iter().zip(mk).all(|(a, b)| a <= b) {
                        let rest: Vec<u8> = mk.iter().zip(mi).map(|(b, a)| b - a).collect();
                        let j = index[&rest];
                        mul.push((i as u32, j as u32, k as u32));
                    }
                }
            }
            mul_counts.push(mul.len());
        }
        MonoTable { nvars, order, monos, index, mul, counts, mul_counts }
    }

    pub fn len(&self, order: usize) -> usize {
        self.counts[order]
    }

    pub fn index_of(&self, mono: &[u8]) -> Option<usize> {
        self.index.get(mono).copied()
    }
}

/// Monomial exponents in storage order, up to total degree `order`.
pub fn monomials(nvars: usize, order: usize) -> Vec<Vec<u8>> {
    let t = table(nvars, order);
    t.monos[..t.len(order)].to_vec()
}

fn push_degree(out: &mut Vec<Vec<u8>>, cur: &mut [u8], var: usize, left: usize) {
    if var + 1 == cur.len() {
        cur[var] = left as u8;
        out.push(cur.to_vec());
        cur[var] = 0;
        return;
    }
    if cur.is_empty() {
        if left == 0 {
            out.push(Vec::new());
        }
        return;
    }
    for e in (0..=left).rev() {
        cur[var] = e as u8;
        push_degree(out, cur, var + 1, left - e);
    }
    cur[var] = 0;
}

fn table(nvars: usize, order: usize) -> Arc<MonoTable> {
    static TABLES: OnceLock<Mutex<HashMap<(usize, usize), Arc<MonoTable>>>> = OnceLock::new();
    let map = TABLES.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = map.lock().expect("taylor table cache poisoned");
    guard
        .entry((nvars, order))
        .or_insert_with(|| Arc::new(MonoTable::build(nvars, order)))
        .clone()
}

/// Truncated Taylor expansion in `nvars` variables up to total degree `order`.
#[derive(Clone, Debug)]
pub struct Taylor {
    t: Arc<MonoTable>,
    order: usize,
    c: Vec<f64>,
}

impl Taylor {
    pub fn constant(nvars: usize, order: usize, value: f64) -> Taylor {
        let t = table(nvars, order);
        let mut c = vec![0.0; t.len(order)];
        c[0] = value;
        Taylor { t, order, c }
    }

    /// The seeded coordinate `value + δ_var`.
    pub fn variable(nvars: usize, order: usize, var: usize, value: f64) -> Taylor {
        let mut x = Taylor::constant(nvars, order, value);
        if order >= 1 {
            x.c[1 + var] = 1.0;
        }
        x
    }

    /// Seeds every coordinate of `point`.
    pub fn seed(point: &[f64], order: usize) -> Vec<Taylor> {
        let n = point.len();
        point.iter().enumerate().map(|(i, &v)| Taylor::variable(n, order, i, v)).collect()
    }

    pub fn nvars(&self) -> usize {
        self.t.nvars
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn set_coeff(&mut self, exps: &[u8], v: f64) {
        let i = self.t.index_of(exps).expect("monomial outside table");
        self.c[i] = v;
    }

    pub fn zero_like(&self) -> Taylor {
        Taylor { t: self.t.clone(), order: self.order, c: vec![0.0; self.c.len()] }
    }

    pub fn const_like(&self, v: f64) -> Taylor {
        let mut z = self.zero_like();
        z.c[0] = v;
        z
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }

    /// Coefficient of the monomial with the given exponents (not multiplied by factorials).
    pub fn coeff(&self, exps: &[u8]) -> f64 {
        match self.t.index_of(exps) {
            Some(i) if i < self.c.len() => self.c[i],
            _ => 0.0,
        }
    }

    /// Mixed partial derivative `∂^|e| / ∂u^e` at the expansion point.
    pub fn derivative(&self, exps: &[u8]) -> f64 {
        let fact: f64 = exps.iter().map(|&e| factorial(e as usize)).product();
        self.coeff(exps) * fact
    }

    pub fn d1(&self, i: usize) -> f64 {
        if self.order < 1 {
            return 0.0;
        }
        self.c[1 + i]
    }

    pub fn d2(&self, i: usize, j: usize) -> f64 {
        let mut e = vec![0u8; self.nvars()];
        e[i] += 1;
        e[j] += 1;
        self.derivative(&e)
    }

    pub fn gradient(&self) -> Vec<f64> {
        (0..self.nvars()).map(|i| self.d1(i)).collect()
    }

    pub fn hessian(&self) -> Vec<Vec<f64>> {
        let n = self.nvars();
        let mut h = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = self.d2(i, j);
                h[i][j] = v;
                h[j][i] = v;
            }
        }
        h
    }

    pub fn truncate(&self, order: usize) -> Taylor {
        let order = order.min(self.order);
        Taylor { t: self.t.clone(), order, c: self.c[..self.t.len(order)].to_vec() }
    }

    /// Raises the nominal order, filling unknown higher coefficients with zero.
    /// Only meaningful for values that are exactly polynomial of low degree.
    pub fn pad(&self, order: usize) -> Taylor {
        if order <= self.order {
            return self.truncate(order);
        }
        let t = if order <= self.t.order { self.t.clone() } else { table(self.nvars(), order) };
        let mut c = vec![0.0; t.len(order)];
        c[..self.c.len()].copy_from_slice(&self.c);
        Taylor { t, order, c }
    }

    /// `∂/∂u_var`, one order lower.
    pub fn partial(&self, var: usize) -> Taylor {
        if self.order == 0 {
            return Taylor { t: self.t.clone(), order: 0, c: vec![0.0] };
        }
        let out_order = self.order - 1;
        let n = self.t.len(out_order);
        let mut c = vec![0.0; n];
        let mut m = vec![0u8; self.nvars()];
        for (k, slot) in c.iter_mut().enumerate() {
            m.copy_from_slice(&self.t.monos[k]);
            m[var] += 1;
            let src = self.t.index[&m];
            *slot = self.c[src] * m[var] as f64;
        }
        Taylor { t: self.t.clone(), order: out_order, c }
    }

    /// Antiderivative in `var` vanishing on `δ_var = 0`, one order higher.
    pub fn antiderivative(&self, var: usize) -> Taylor {
        let out_order = self.order + 1;
        let t = if out_order <= self.t.order { self.t.clone() } else { table(self.nvars(), out_order) };
        let mut c = vec![0.0; t.len(out_order)];
        let mut m = vec![0u8; self.nvars()];
        for (k, &v) in self.c.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            m.copy_from_slice(&self.t.monos[k]);
            m[var] += 1;
            let dst = t.index[&m];
            c[dst] = v / m[var] as f64;
        }
        Taylor { t, order: out_order, c }
    }

    /// Drops every term containing `δ_var`.
    pub fn restrict_zero(&self, var: usize) -> Taylor {
        let mut out = self.clone();
        for (k, v) in out.c.iter_mut().enumerate() {
            if self.t.monos[k][var] != 0 {
                *v = 0.0;
            }
        }
        out
    }

    fn common(&self, other: &Taylor) -> usize {
        assert_eq!(self.nvars(), other.nvars(), "taylor variable count mismatch");
        self.order.min(other.order)
    }

    fn mul_into(a: &[f64], b: &[f64], t: &MonoTable, order: usize, out: &mut [f64]) {
        for &(i, j, k) in &t.mul[..t.mul_counts[order]] {
            out[k as usize] += a[i as usize] * b[j as usize];
        }
    }

    fn product(&self, other: &Taylor) -> Taylor {
        let order = self.common(other);
        let t = if self.t.order >= order { self.t.clone() } else { other.t.clone() };
        let mut c = vec![0.0; t.len(order)];
        Taylor::mul_into(&self.c, &other.c, &t, order, &mut c);
        Taylor { t, order, c }
    }

    /// Evaluates `Σ_k d_k (self - self₀)^k` given univariate coefficients `d`.
    pub fn compose(&self, d: &[f64]) -> Taylor {
        let k = self.order;
        let mut h = self.clone();
        h.c[0] = 0.0;
        let mut r = self.const_like(d[k.min(d.len() - 1)]);
        for i in (0..k).rev() {
            r = r.product(&h);
            r.c[0] += d[i];
        }
        r
    }

    pub fn recip(&self) -> Taylor {
        let a = self.value();
        let mut d = Vec::with_capacity(self.order + 1);
        let inv = 1.0 / a;
        let mut p = inv;
        for k in 0..=self.order {
            d.push(if k % 2 == 0 { p } else { -p });
            p *= inv;
        }
        self.compose(&d)
    }

    pub fn exp(&self) -> Taylor {
        let e = self.value().exp();
        let d: Vec<f64> = (0..=self.order).map(|k| e / factorial(k)).collect();
        self.compose(&d)
    }

    pub fn ln(&self) -> Taylor {
        let a = self.value();
        let mut d = vec![a.ln()];
        for k in 1..=self.order {
            let s = if k % 2 == 1 { 1.0 } else { -1.0 };
            d.push(s / (k as f64 * a.powi(k as i32)));
        }
        self.compose(&d)
    }

    /// Real power. Non-integer exponents need a positive value.
    pub fn powf(&self, p: f64) -> Taylor {
        if p.fract() == 0.0 && p.abs() <= 16.0 {
            return self.powi(p as i32);
        }
        let a = self.value();
        let mut d = Vec::with_capacity(self.order + 1);
        let mut binom = 1.0;
        for k in 0..=self.order {
            d.push(binom * a.powf(p - k as f64));
            binom *= (p - k as f64) / (k as f64 + 1.0);
        }
        self.compose(&d)
    }

    pub fn powi(&self, p: i32) -> Taylor {
        if p < 0 {
            return self.recip().powi(-p);
        }
        let mut result = self.const_like(1.0);
        let mut base = self.clone();
        let mut e = p as u32;
        while e > 0 {
            if e & 1 == 1 {
                result = result.product(&base);
            }
            e >>= 1;
            if e > 0 {
                base = base.product(&base);
            }
        }
        result
    }

    pub fn sqrt(&self) -> Taylor {
        self.powf(0.5)
    }

    pub fn sin(&self) -> Taylor {
        let (s, c) = self.value().sin_cos();
        let cyc = [s, c, -s, -c];
        let d: Vec<f64> = (0..=self.order).map(|k| cyc[k % 4] / factorial(k)).collect();
        self.compose(&d)
    }

    pub fn cos(&self) -> Taylor {
        let (s, c) = self.value().sin_cos();
        let cyc = [c, -s, -c, s];
        let d: Vec<f64> = (0..=self.order).map(|k| cyc[k % 4] / factorial(k)).collect();
        self.compose(&d)
    }

    pub fn sinh(&self) -> Taylor {
        let (s, c) = (self.value().sinh(), self.value().cosh());
        let d: Vec<f64> =
            (0..=self.order).map(|k| if k % 2 == 0 { s } else { c } / factorial(k)).collect();
        self.compose(&d)
    }

    pub fn cosh(&self) -> Taylor {
        let (s, c) = (self.value().sinh(), self.value().cosh());
        let d: Vec<f64> =
            (0..=self.order).map(|k| if k % 2 == 0 { c } else { s } / factorial(k)).collect();
        self.compose(&d)
    }

    pub fn tanh(&self) -> Taylor {
        self.compose(&tanh_series(self.value(), self.order))
    }

    pub fn sech(&self) -> Taylor {
        let t = tanh_series(self.value(), self.order);
        // s' = -s tanh
        let mut s = vec![1.0 / self.value().cosh()];
        for k in 0..self.order {
            let conv: f64 = (0..=k).map(|j| s[j] * t[k - j]).sum();
            s.push(-conv / (k as f64 + 1.0));
        }
        self.compose(&s)
    }

    pub fn abs(&self) -> Taylor {
        if self.value() < 0.0 {
            -self
        } else {
            self.clone()
        }
    }

    pub fn square(&self) -> Taylor {
        self.product(self)
    }
}

fn tanh_series(a: f64, order: usize) -> Vec<f64> {
    // y' = 1 - y²
    let mut y = vec![a.tanh()];
    for k in 0..order {
        let conv: f64 = (0..=k).map(|j| y[j] * y[k - j]).sum();
        let rhs = if k == 0 { 1.0 - conv } else { -conv };
        y.push(rhs / (k as f64 + 1.0));
    }
    y
}

pub(crate) fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

impl Neg for Taylor {
    type Output = Taylor;
    fn neg(mut self) -> Taylor {
        self.c.iter_mut().for_each(|v| *v = -*v);
        self
    }
}

impl Neg for &Taylor {
    type Output = Taylor;
    fn neg(self) -> Taylor {
        -self.clone()
    }
}

fn add_impl(a: &Taylor, b: &Taylor, sign: f64) -> Taylor {
    let order = a.common(b);
    let (src, other) = if a.order == order { (a, b) } else { (b, a) };
    let mut c = src.c.clone();
    if std::ptr::eq(src, a) {
        for (x, y) in c.iter_mut().zip(&other.c) {
            *x += sign * y;
        }
    } else {
        for (x, y) in c.iter_mut().zip(&other.c) {
            *x = y + sign * *x;
        }
    }
    Taylor { t: src.t.clone(), order, c }
}

macro_rules! binops {
    ($tr:ident, $m:ident, $body:expr) => {
        impl $tr<&Taylor> for &Taylor {
            type Output = Taylor;
            fn $m(self, rhs: &Taylor) -> Taylor {
                let f: fn(&Taylor, &Taylor) -> Taylor = $body;
                f(self, rhs)
            }
        }
        impl $tr<Taylor> for Taylor {
            type Output = Taylor;
            fn $m(self, rhs: Taylor) -> Taylor {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Taylor> for Taylor {
            type Output = Taylor;
            fn $m(self, rhs: &Taylor) -> Taylor {
                (&self).$m(rhs)
            }
        }
        impl $tr<Taylor> for &Taylor {
            type Output = Taylor;
            fn $m(self, rhs: Taylor) -> Taylor {
                self.$m(&rhs)
            }
        }
    };
}

binops!(Add, add, |a, b| add_impl(a, b, 1.0));
binops!(Sub, sub, |a, b| add_impl(a, b, -1.0));
binops!(Mul, mul, |a, b| a.product(b));
binops!(Div, div, |a, b| a.product(&b.recip()));

macro_rules! scalar_ops {
    ($t:ty) => {
        impl Add<f64> for $t {
            type Output = Taylor;
            fn add(self, rhs: f64) -> Taylor {
                let mut r = self.clone();
                r.c[0] += rhs;
                r
            }
        }
        impl Sub<f64> for $t {
            type Output = Taylor;
            fn sub(self, rhs: f64) -> Taylor {
                let mut r = self.clone();
                r.c[0] -= rhs;
                r
            }
        }
        impl Mul<f64> for $t {
            type Output = Taylor;
            fn mul(self, rhs: f64) -> Taylor {
                let mut r = self.clone();
                r.c.iter_mut().for_each(|v| *v *= rhs);
                r
            }
        }
        impl Div<f64> for $t {
            type Output = Taylor;
            fn div(self, rhs: f64) -> Taylor {
                let mut r = self.clone();
                r.c.iter_mut().for_each(|v| *v /= rhs);
                r
            }
        }
        impl Add<$t> for f64 {
            type Output = Taylor;
            fn add(self, rhs: $t) -> Taylor {
                rhs + self
            }
        }
        impl Sub<$t> for f64 {
            type Output = Taylor;
            fn sub(self, rhs: $t) -> Taylor {
                -(rhs - self)
            }
        }
        impl Mul<$t> for f64 {
            type Output = Taylor;
            fn mul(self, rhs: $t) -> Taylor {
                rhs * self
            }
        }
        impl Div<$t> for f64 {
            type Output = Taylor;
            fn div(self, rhs: $t) -> Taylor {
                rhs.recip() * self
            }
        }
    };
}

scalar_ops!(Taylor);
scalar_ops!(&Taylor);

impl AddAssign<&Taylor> for Taylor {
    fn add_assign(&mut self, rhs: &Taylor) {
        *self = &*self + rhs;
    }
}

impl AddAssign<Taylor> for Taylor {
    fn add_assign(&mut self, rhs: Taylor) {
        *self = &*self + &rhs;
    }
}

impl SubAssign<&Taylor> for Taylor {
    fn sub_assign(&mut self, rhs: &Taylor) {
        *self = &*self - rhs;
    }
}

impl SubAssign<Taylor> for Taylor {
    fn sub_assign(&mut self, rhs: Taylor) {
        *self = &*self - &rhs;
    }
}

impl MulAssign<f64> for Taylor {
    fn mul_assign(&mut self, rhs: f64) {
        self.c.iter_mut().for_each(|v| *v *= rhs);
    }
}

impl AddAssign<f64> for Taylor {
    fn add_assign(&mut self, rhs: f64) {
        self.c[0] += rhs;
    }
}

/// Adds `w * x` in place, at the common order.
pub fn axpy(acc: &mut Taylor, w: f64, x: &Taylor) {
    if acc.order > x.order {
        *acc = acc.truncate(x.order);
    }
    for (a, b) in acc.c.iter_mut().zip(&x.c) {
        *a += w * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn table_prefix_property() {
        let t3 = table(3, 3);
        let t2 = table(3, 2);
        assert_eq!(&t3.monos[..t2.monos.len()], &t2.monos[..]);
        assert_eq!(t3.len(3), 20);
    }

    #[test]
    fn polynomial_derivatives() {
        let u = Taylor::seed(&[2.0, 3.0], 2);
        let f = &u[0] * &u[0] * &u[1];
        assert_eq!(f.value(), 12.0);
        assert_eq!(f.gradient(), vec![12.0, 4.0]);
        assert_eq!(f.hessian(), vec![vec![6.0, 4.0], vec![4.0, 0.0]]);
    }

    #[test]
    fn high_order_univariate() {
        let x = Taylor::variable(1, 6, 0, 0.3);
        let s = x.sin();
        for k in 0..=6u8 {
            let expect = match k % 4 {
                0 => 0.3f64.sin(),
                1 => 0.3f64.cos(),
                2 => -0.3f64.sin(),
                _ => -0.3f64.cos(),
            };
            assert!(close(s.derivative(&[k]), expect, 1e-13));
        }
        let e = (&x * 2.0).exp().ln();
        assert!(close(e.d1(0), 2.0, 1e-13));
        assert!(e.derivative(&[3]).abs() < 1e-10);
    }

    #[test]
    fn sech_and_tanh_consistent() {
        let x = Taylor::variable(1, 5, 0, 0.7);
        let lhs = x.sech().square() + x.tanh().square();
        assert!(close(lhs.value(), 1.0, 1e-14));
        for k in 1..=5u8 {
            assert!(lhs.derivative(&[k]).abs() < 1e-11, "k={k}");
        }
        let c = x.cosh();
        let r = &c * &x.sech();
        assert!((r.derivative(&[4])).abs() < 1e-11);
    }

    #[test]
    fn division_and_powers() {
        let u = Taylor::seed(&[1.5, -0.5], 3);
        let a = (&u[0] / &u[1]) * &u[1];
        assert!(close(a.value(), 1.5, 1e-14));
        assert!(close(a.d1(0), 1.0, 1e-14));
        assert!(a.d2(0, 1).abs() < 1e-13);
        let p = u[0].powf(2.5);
        assert!(close(p.derivative(&[3, 0]), 2.5 * 1.5 * 0.5 * 1.5f64.powf(-0.5), 1e-12));
        let q = u[1].powi(3);
        assert!(close(q.derivative(&[0, 2]), 6.0 * -0.5, 1e-13));
        let r = u[1].powi(-2);
        assert!(close(r.d1(1), -2.0 * (-0.5f64).powi(-3), 1e-12));
    }

    #[test]
    fn partial_and_antiderivative_invert() {
        let u = Taylor::seed(&[0.4, 0.9], 4);
        let f = (&u[0] * &u[1]).sin() + u[1].exp();
        let back = f.partial(1).antiderivative(1);
        let mut expect = f.clone();
        // dropping the δ_1-free part
        let free = f.restrict_zero(1);
        expect -= &free;
        for (a, b) in back.coeffs().iter().zip(expect.coeffs()) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}
