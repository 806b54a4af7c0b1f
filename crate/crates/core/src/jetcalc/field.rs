use std::fmt;
use std::sync::Arc;

use super::taylor::Taylor;
use super::JetError;

/// Value, gradient and Hessian of a scalar at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<Vec<f64>>,
}

impl Jet2 {
    pub fn dim(&self) -> usize {
        self.grad.len()
    }
}

impl From<&Taylor> for Jet2 {
    fn from(t: &Taylor) -> Jet2 {
        Jet2 { value: t.value(), grad: t.gradient(), hess: t.hessian() }
    }
}

/// A smooth scalar on a coordinate chart.
///
/// `taylor(point, k)` returns the expansion of the field at `point` to total
/// order `k` in all `dim()` coordinates.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;
    fn taylor(&self, point: &[f64], order: usize) -> Result<Taylor, JetError>;

    fn value(&self, point: &[f64]) -> Result<f64, JetError> {
        Ok(self.taylor(point, 0)?.value())
    }
}

pub type Field = Arc<dyn ScalarField>;

pub(crate) fn check_dim(expected: usize, point: &[f64]) -> Result<(), JetError> {
    if point.len() != expected {
        return Err(JetError::DimensionMismatch { expected, got: point.len() });
    }
    Ok(())
}

pub(crate) fn check_finite(t: Taylor, point: &[f64]) -> Result<Taylor, JetError> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(JetError::NonFinite { point: point.to_vec() })
    }
}

pub fn eval_jet2(field: &dyn ScalarField, point: &[f64]) -> Result<Jet2, JetError> {
    check_dim(field.dim(), point)?;
    let t = field.taylor(point, 2)?;
    Ok(Jet2::from(&t))
}

type TaylorFn = dyn Fn(&[Taylor]) -> Result<Taylor, JetError> + Send + Sync;

/// A field given by a closed-form closure over seeded coordinates.
pub struct FnField {
    dim: usize,
    f: Box<TaylorFn>,
}

impl FnField {
    pub fn new(dim: usize, f: impl Fn(&[Taylor]) -> Taylor + Send + Sync + 'static) -> FnField {
        FnField { dim, f: Box::new(move |u| Ok(f(u))) }
    }

    pub fn fallible(
        dim: usize,
        f: impl Fn(&[Taylor]) -> Result<Taylor, JetError> + Send + Sync + 'static,
    ) -> FnField {
        FnField { dim, f: Box::new(f) }
    }
}

impl fmt::Debug for FnField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnField(dim={})", self.dim)
    }
}

impl ScalarField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn taylor(&self, point: &[f64], order: usize) -> Result<Taylor, JetError> {
        check_dim(self.dim, point)?;
        let u = Taylor::seed(point, order);
        check_finite((self.f)(&u)?, point)
    }
}

pub fn field_fn(dim: usize, f: impl Fn(&[Taylor]) -> Taylor + Send + Sync + 'static) -> Field {
    Arc::new(FnField::new(dim, f))
}

pub fn constant(dim: usize, c: f64) -> Field {
    Arc::new(ConstField { dim, c })
}

#[derive(Debug)]
pub struct ConstField {
    dim: usize,
    c: f64,
}

impl ScalarField for ConstField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn taylor(&self, point: &[f64], order: usize) -> Result<Taylor, JetError> {
        check_dim(self.dim, point)?;
        Ok(Taylor::constant(self.dim, order, self.c))
    }
}

/// Exact partial derivative of another field.
pub struct Partial {
    inner: Field,
    var: usize,
}

impl Partial {
    pub fn new(inner: Field, var: usize) -> Partial {
        Partial { inner, var }
    }
}

impl ScalarField for Partial {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn taylor(&self, point: &[f64], order: usize) -> Result<Taylor, JetError> {
        Ok(self.inner.taylor(point, order + 1)?.partial(self.var))
    }
}

pub fn partial(inner: Field, var: usize) -> Field {
    Arc::new(Partial::new(inner, var))
}

/// Restricts a field on a subset of coordinates to a larger chart.
///
/// `map[k]` is the index in the larger chart of the inner field's coordinate `k`.
pub struct Embedded {
    inner: Field,
    dim: usize,
    map: Vec<usize>,
}

impl Embedded {
    pub fn new(inner: Field, dim: usize, map: Vec<usize>) -> Embedded {
        assert_eq!(inner.dim(), map.len());
        Embedded { inner, dim, map }
    }
}

impl ScalarField for Embedded {
    fn dim(&self) -> usize {
        self.dim
    }

    fn taylor(&self, point: &[f64], order: usize) -> Result<Taylor, JetError> {
        check_dim(self.dim, point)?;
        let sub: Vec<f64> = self.map.iter().map(|&i| point[i]).collect();
        let t = self.inner.taylor(&sub, order)?;
        Ok(reembed(&t, self.dim, &self.map))
    }
}

pub fn embed(inner: Field, dim: usize, map: Vec<usize>) -> Field {
    Arc::new(Embedded::new(inner, dim, map))
}

/// Re-indexes a Taylor expansion into a chart with more variables.
pub fn reembed(t: &Taylor, dim: usize, map: &[usize]) -> Taylor {
    let mut out = Taylor::constant(dim, t.order(), 0.0);
    let mut big = vec![0u8; dim];
    let sub_monos = super::taylor::monomials(map.len(), t.order());
    for (k, mono) in sub_monos.iter().enumerate() {
        let v = t.coeffs()[k];
        if v == 0.0 {
            continue;
        }
        big.iter_mut().for_each(|e| *e = 0);
        for (j, &e) in mono.iter().enumerate() {
            big[map[j]] = e;
        }
        out.set_coeff(&big, v);
    }
    out
}

/// Keeps only the variables listed in `keep`, dropping every term that
/// involves any other variable. Inverse of [`reembed`] on fields that do not
/// depend on the dropped coordinates.
pub fn project(t: &Taylor, keep: &[usize]) -> Taylor {
    let mut out = Taylor::constant(keep.len(), t.order(), 0.0);
    let big = super::taylor::monomials(t.nvars(), t.order());
    let mut small = vec![0u8; keep.len()];
    for (k, mono) in big.iter().enumerate() {
        let v = t.coeffs()[k];
        if v == 0.0 {
            continue;
        }
        let inside: u32 = keep.iter().map(|&i| mono[i] as u32).sum();
        let total: u32 = mono.iter().map(|&e| e as u32).sum();
        if inside != total {
            continue;
        }
        for (j, &i) in keep.iter().enumerate() {
            small[j] = mono[i];
        }
        out.set_coeff(&small, v);
    }
    out
}

/// Pointwise combination of other fields, evaluated on their expansions.
pub struct Combined {
    dim: usize,
    /// Extra orders requested from the inputs, for closures that differentiate.
    headroom: usize,
    inputs: Vec<Field>,
    f: Box<dyn Fn(&[Taylor]) -> Taylor + Send + Sync>,
}

impl ScalarField for Combined {
    fn dim(&self) -> usize {
        self.dim
    }

    fn taylor(&self, point: &[f64], order: usize) -> Result<Taylor, JetError> {
        check_dim(self.dim, point)?;
        let args: Result<Vec<Taylor>, JetError> =
            self.inputs.iter().map(|i| i.taylor(point, order + self.headroom)).collect();
        check_finite((self.f)(&args?).truncate(order), point)
    }
}

/// `f(inputs…)` as a field; every input must live on the same chart.
pub fn combine(inputs: Vec<Field>, f: impl Fn(&[Taylor]) -> Taylor + Send + Sync + 'static) -> Field {
    combine_diff(inputs, 0, f)
}

/// Like [`combine`], for closures taking up to `headroom` partial derivatives of their inputs.
pub fn combine_diff(
    inputs: Vec<Field>,
    headroom: usize,
    f: impl Fn(&[Taylor]) -> Taylor + Send + Sync + 'static,
) -> Field {
    let dim = inputs.first().map_or(0, |i| i.dim());
    assert!(inputs.iter().all(|i| i.dim() == dim), "combined fields must share a chart");
    Arc::new(Combined { dim, headroom, inputs, f: Box::new(f) })
}

/// `∫_{lower}^{u_var} integrand(u with u_var = s) ds`, differentiable in every coordinate.
///
/// The expansion splits into the line integral at fixed `u_var` (terms free of
/// `δ_var`, integrated with composite Gauss-Legendre panels) plus the exact local
/// antiderivative of the integrand's own expansion.
pub struct LineIntegral {
    integrand: Field,
    var: usize,
    lower: f64,
    tol: f64,
}

impl LineIntegral {
    pub fn new(integrand: Field, var: usize, lower: f64, tol: f64) -> LineIntegral {
        LineIntegral { integrand, var, lower, tol }
    }
}

impl ScalarField for LineIntegral {
    fn dim(&self) -> usize {
        self.integrand.dim()
    }

    fn taylor(&self, point: &[f64], order: usize) -> Result<Taylor, JetError> {
        check_dim(self.dim(), point)?;
        let v = point[self.var];
        let line = super::quad::line_taylor(
            |s| {
                let mut p = point.to_vec();
                p[self.var] = s;
                Ok(self.integrand.taylor(&p, order)?.restrict_zero(self.var))
            },
            self.lower,
            v,
            self.tol,
        )?;
        if order == 0 {
            return Ok(line);
        }
        let local = self.integrand.taylor(point, order - 1)?.antiderivative(self.var);
        Ok(line + local)
    }
}

pub fn line_integral(integrand: Field, var: usize, lower: f64) -> Field {
    Arc::new(LineIntegral::new(integrand, var, lower, 1e-11))
}
