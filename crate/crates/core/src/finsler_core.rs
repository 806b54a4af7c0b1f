//! Finsler generating functions and everything derived from the y-Hessian of F².

use std::sync::Arc;

use thiserror::Error;

use crate::jetcalc::{embed, field_fn, Field, FnField, JetError, Taylor};
use crate::nholon::{invert_block, GeomError, Layout, Mat, MetricModel, DMetric, ShellJets};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FinslerError {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid parameters: {0}")]
    Params(String),
}

/// `F²(x, y)` over `n` base and `m` fiber coordinates, `(x, y)` concatenated.
#[derive(Clone)]
pub struct FinslerFunction {
    pub n: usize,
    pub m: usize,
    pub f2: Field,
}

impl std::fmt::Debug for FinslerFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FinslerFunction(n={}, m={})", self.n, self.m)
    }
}

impl FinslerFunction {
    pub fn new(n: usize, m: usize, f2: Field) -> Result<FinslerFunction, FinslerError> {
        if f2.dim() != n + m {
            return Err(FinslerError::Params(format!("F² has dim {}, expected {}", f2.dim(), n + m)));
        }
        Ok(FinslerFunction { n, m, f2 })
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn f2_value(&self, point: &[f64]) -> Result<f64, FinslerError> {
        Ok(self.f2.value(point)?)
    }

    /// Largest relative defect of `F²(x, βy) = β² F²(x, y)` over `betas`.
    pub fn homogeneity_defect(&self, point: &[f64], betas: &[f64]) -> Result<f64, FinslerError> {
        let base = self.f2_value(point)?;
        let mut worst = 0.0f64;
        for &beta in betas {
            let mut p = point.to_vec();
            p[self.n..].iter_mut().for_each(|v| *v *= beta);
            let scaled = self.f2_value(&p)?;
            let d = (scaled - beta * beta * base).abs() / (beta * beta * base.abs()).max(f64::MIN_POSITIVE);
            worst = worst.max(d);
        }
        Ok(worst)
    }

    /// Relative defect of `y^a y^b g_ab = F²`.
    pub fn euler_defect(&self, point: &[f64]) -> Result<f64, FinslerError> {
        let g = hessian_metric(self, point)?;
        let y = &point[self.n..];
        let mut s = 0.0;
        for a in 0..self.m {
            for b in 0..self.m {
                s += y[a] * y[b] * g[a][b];
            }
        }
        let f2 = self.f2_value(point)?;
        Ok((s - f2).abs() / f2.abs().max(f64::MIN_POSITIVE))
    }

    fn check_point(&self, point: &[f64]) -> Result<(), FinslerError> {
        if point.len() != self.dim() {
            return Err(JetError::DimensionMismatch { expected: self.dim(), got: point.len() }.into());
        }
        if point[self.n..].iter().all(|v| *v == 0.0) {
            return Err(FinslerError::Precondition("y = 0: F² is not smooth at the zero section".into()));
        }
        Ok(())
    }
}

fn hessian_from(f: &FinslerFunction, l: &Taylor) -> Mat {
    let n = f.n;
    (0..f.m)
        .map(|a| {
            let da = l.partial(n + a);
            (0..f.m).map(|b| da.partial(n + b) * 0.5).collect()
        })
        .collect()
}

/// Semispray `G^a` from `L = F²` given to order `k + 2`; result has order `k`.
fn semispray_from(f: &FinslerFunction, l: &Taylor, point: &[f64]) -> Result<Vec<Taylor>, FinslerError> {
    if f.n != f.m {
        return Err(FinslerError::Params("the semispray needs m = n".into()));
    }
    let n = f.n;
    let g = hessian_from(f, l);
    let ginv = invert_block(&g, "Finsler Hessian", point)?;
    let order = l.order() - 2;
    let u = Taylor::seed(point, order);
    let mut s = Vec::with_capacity(n);
    for b in 0..n {
        let dyb = l.partial(n + b);
        let mut acc = -l.partial(b).truncate(order);
        for k in 0..n {
            acc += &dyb.partial(k) * &u[n + k];
        }
        s.push(acc);
    }
    Ok((0..n)
        .map(|a| {
            let mut acc = u[0].zero_like();
            for b in 0..n {
                acc += &ginv[a][b] * &s[b];
            }
            acc * 0.25
        })
        .collect())
}

/// `^F g_ab = ½ ∂²F²/∂y^a∂y^b` at `(x, y)`.
pub fn hessian_metric(f: &FinslerFunction, point: &[f64]) -> Result<Vec<Vec<f64>>, FinslerError> {
    f.check_point(point)?;
    let l = f.f2.taylor(point, 2)?;
    let g = hessian_from(f, &l);
    invert_block(&g, "Finsler Hessian", point)?;
    Ok(crate::nholon::values(&g))
}

/// Semispray `G^a` and Cartan N-connection `N_i^a = ∂G^a/∂y^i` (stored `[i][a]`).
pub fn semispray_and_nconnection(
    f: &FinslerFunction,
    point: &[f64],
) -> Result<(Vec<f64>, Vec<Vec<f64>>), FinslerError> {
    f.check_point(point)?;
    let l = f.f2.taylor(point, 3)?;
    let g = semispray_from(f, &l, point)?;
    let gv = g.iter().map(Taylor::value).collect();
    let nc = (0..f.n).map(|i| (0..f.m).map(|a| g[a].d1(f.n + i)).collect()).collect();
    Ok((gv, nc))
}

struct SasakiModel {
    f: FinslerFunction,
}

impl MetricModel for SasakiModel {
    fn layout(&self) -> Layout {
        Layout::single(self.f.n, self.f.m)
    }

    fn shell_jets(&self, point: &[f64], order: usize) -> Result<ShellJets, GeomError> {
        let wrap = |e: FinslerError| match e {
            FinslerError::Geom(g) => g,
            FinslerError::Jet(j) => GeomError::Jet(j),
            other => GeomError::Precondition(other.to_string()),
        };
        self.f.check_point(point).map_err(wrap)?;
        let l = self.f.f2.taylor(point, order + 3)?;
        let g = hessian_from(&self.f, &l.truncate(order + 2));
        let semi = semispray_from(&self.f, &l, point).map_err(wrap)?;
        let n = self.f.n;
        let nc: Mat = (0..n).map(|i| (0..self.f.m).map(|a| semi[a].partial(n + i)).collect()).collect();
        Ok(ShellJets { g: g.clone(), h: vec![g], nc: vec![nc] })
    }
}

/// Sasaki-type lift: both blocks are the Hessian metric, N is the Cartan N-connection.
pub fn sasaki_lift(f: &FinslerFunction) -> Result<DMetric, FinslerError> {
    if f.n != f.m {
        return Err(FinslerError::Params("the Sasaki lift needs m = n".into()));
    }
    Ok(DMetric::new(SasakiModel { f: f.clone() }))
}

/// A section `y(x)` of the tangent bundle, one field over the base per fiber component.
#[derive(Clone)]
pub struct OsculatingSection {
    pub y_of_x: Vec<Field>,
}

/// `f_ij(x) = ^F g_ij(x, y(x))`.
pub fn osculate(f: &FinslerFunction, s: &OsculatingSection, x: &[f64]) -> Result<Vec<Vec<f64>>, FinslerError> {
    if s.y_of_x.len() != f.m || x.len() != f.n {
        return Err(FinslerError::Params("section must have one component per fiber coordinate".into()));
    }
    let mut p = x.to_vec();
    for comp in &s.y_of_x {
        p.push(comp.value(x)?);
    }
    if p[f.n..].iter().all(|v| *v == 0.0) {
        return Err(FinslerError::Precondition(format!("section vanishes at {x:?}")));
    }
    hessian_metric(f, &p)
}

/// Coefficients of the deformed quadratic element and its dispersion relation.
#[derive(Clone, Debug, PartialEq)]
pub struct DispersionParams {
    pub c: f64,
    pub g_hat: Vec<Vec<f64>>,
    /// Totally symmetric tensor of rank `2r`, flattened row-major over the spatial dimension.
    pub q: Vec<f64>,
    pub r: u32,
}

impl DispersionParams {
    pub fn new(c: f64, g_hat: Vec<Vec<f64>>, q: Vec<f64>, r: u32) -> Result<DispersionParams, FinslerError> {
        let d = g_hat.len();
        if r == 0 {
            return Err(FinslerError::Params("r must be at least 1".into()));
        }
        if q.len() != d.pow(2 * r) {
            return Err(FinslerError::Params(format!("q needs {} entries", d.pow(2 * r))));
        }
        let p = DispersionParams { c, g_hat, q, r };
        if !p.q_is_symmetric() {
            return Err(FinslerError::Params("q must be totally symmetric".into()));
        }
        Ok(p)
    }

    fn unflatten(&self, mut k: usize) -> Vec<usize> {
        let d = self.g_hat.len();
        let mut idx = vec![0; 2 * self.r as usize];
        for slot in idx.iter_mut().rev() {
            *slot = k % d;
            k /= d;
        }
        idx
    }

    fn flat(&self, idx: &[usize]) -> usize {
        let d = self.g_hat.len();
        idx.iter().fold(0, |acc, &i| acc * d + i)
    }

    fn q_is_symmetric(&self) -> bool {
        (0..self.q.len()).all(|k| {
            let mut idx = self.unflatten(k);
            idx.sort_unstable();
            (self.q[k] - self.q[self.flat(&idx)]).abs() <= 1e-14 * (1.0 + self.q[k].abs())
        })
    }

    /// `q_{i1…i2r} y^{i1}…y^{i2r}`.
    pub fn q_contract(&self, y: &[f64]) -> f64 {
        (0..self.q.len())
            .filter(|&k| self.q[k] != 0.0)
            .map(|k| self.q[k] * self.unflatten(k).iter().map(|&i| y[i]).product::<f64>())
            .sum()
    }

    pub fn quadratic(&self, k: &[f64]) -> f64 {
        let d = self.g_hat.len();
        (0..d).map(|i| (0..d).map(|j| self.g_hat[i][j] * k[i] * k[j]).sum::<f64>()).sum()
    }
}

/// `ω²` of the deformed dispersion relation with `y := k`.
///
/// With `linear_bracket` the leading factor uses `[g k k]` instead of its square.
pub fn dispersion_omega2(p: &DispersionParams, k: &[f64], linear_bracket: bool) -> Result<f64, FinslerError> {
    if k.len() != p.g_hat.len() {
        return Err(JetError::DimensionMismatch { expected: p.g_hat.len(), got: k.len() }.into());
    }
    let gkk = p.quadratic(k);
    if gkk == 0.0 {
        return Err(FinslerError::Precondition("g k k vanishes".into()));
    }
    let lead = if linear_bracket { gkk } else { gkk * gkk };
    let corr = p.q_contract(k) / (p.r as f64 * gkk.powi(2 * p.r as i32));
    Ok(p.c * p.c * lead * (1.0 - corr))
}

/// Built-in generating functions.
#[derive(Clone)]
pub enum Generator {
    /// `F² = −(y¹)² + Σ (y^i)²` on an `n`-dimensional base.
    MinkowskiQuadratic { n: usize },
    /// `F² = g_ij(x) y^i y^j`; each `g_ij` is a field over the base.
    RiemannQuadratic { g: Vec<Vec<Field>> },
    /// `F = |η y y|^{(1−b)/2} |n_k y^k|^b` with `n_k = η_kl n^l`, `η = diag(−,+,…,+)`.
    Bogoslovsky { b: f64, n_up: Vec<f64> },
    /// `F = |g y y|^{(1−b(x))/2} |n_k(x) y^k|^{b(x)}`, fields over the base.
    BogoslovskyGeneral { b: Field, g: Vec<Vec<Field>>, n_down: Vec<Field> },
    /// `F² = ±(y¹)² + ĝ y y [1 + q·y^{2r} / (r (ĝ y y)^r)]` over the remaining components.
    Deformed { params: DispersionParams, lorentzian: bool },
}

fn eta(n: usize, i: usize) -> f64 {
    if i == 0 {
        -1.0
    } else {
        let _ = n;
        1.0
    }
}

/// `sign(s) |s|^{1−b} |t|^{2b}`: the squared Bogoslovsky element with its sign flag.
fn bogoslovsky_f2(s: &Taylor, t: &Taylor, b: &Taylor) -> Result<Taylor, JetError> {
    if s.value() == 0.0 {
        return Err(JetError::Domain("base quadratic form vanishes (lightlike y)".into()));
    }
    let sign = s.value().signum();
    let bv = b.value();
    let pow_s = if b.order() > 0 && b.coeffs()[1..].iter().any(|v| *v != 0.0) {
        ((1.0 - b) * s.abs().ln()).exp()
    } else {
        s.abs().powf(1.0 - bv)
    };
    if bv == 0.0 && b.coeffs().iter().all(|v| *v == 0.0) {
        return Ok(pow_s * sign);
    }
    if t.value() == 0.0 {
        return Err(JetError::Domain("n_k y^k vanishes".into()));
    }
    let pow_t = ((b * 2.0) * t.abs().ln()).exp();
    Ok(pow_s * pow_t * sign)
}

fn lift(n: usize, f: &Field) -> Field {
    embed(f.clone(), 2 * n, (0..n).collect())
}

pub fn builtin_generator(kind: Generator) -> Result<FinslerFunction, FinslerError> {
    match kind {
        Generator::MinkowskiQuadratic { n } => {
            let f2 = field_fn(2 * n, move |u| {
                let mut acc = u[0].zero_like();
                for i in 0..n {
                    acc += u[n + i].square() * eta(n, i);
                }
                acc
            });
            FinslerFunction::new(n, n, f2)
        }
        Generator::RiemannQuadratic { g } => {
            let n = g.len();
            let lifted: Vec<Vec<Field>> = g.iter().map(|r| r.iter().map(|f| lift(n, f)).collect()).collect();
            let f2: Field = Arc::new(FnField::fallible(2 * n, move |u| {
                let p: Vec<f64> = u.iter().map(Taylor::value).collect();
                let order = u[0].order();
                let mut acc = u[0].zero_like();
                for i in 0..n {
                    for j in 0..n {
                        acc += lifted[i][j].taylor(&p, order)? * (&u[n + i] * &u[n + j]);
                    }
                }
                Ok(acc)
            }));
            FinslerFunction::new(n, n, f2)
        }
        Generator::Bogoslovsky { b, n_up } => {
            let n = n_up.len();
            let n_down: Vec<f64> = (0..n).map(|k| eta(n, k) * n_up[k]).collect();
            let f2: Field = Arc::new(FnField::fallible(2 * n, move |u| {
                let mut s = u[0].zero_like();
                let mut t = u[0].zero_like();
                for i in 0..n {
                    s += u[n + i].square() * eta(n, i);
                    t += &u[n + i] * n_down[i];
                }
                bogoslovsky_f2(&s, &t, &u[0].const_like(b))
            }));
            FinslerFunction::new(n, n, f2)
        }
        Generator::BogoslovskyGeneral { b, g, n_down } => {
            let n = g.len();
            if n_down.len() != n {
                return Err(FinslerError::Params("n_k needs one component per base coordinate".into()));
            }
            let gl: Vec<Vec<Field>> = g.iter().map(|r| r.iter().map(|f| lift(n, f)).collect()).collect();
            let nl: Vec<Field> = n_down.iter().map(|f| lift(n, f)).collect();
            let bl = lift(n, &b);
            let f2: Field = Arc::new(FnField::fallible(2 * n, move |u| {
                let p: Vec<f64> = u.iter().map(Taylor::value).collect();
                let order = u[0].order();
                let mut s = u[0].zero_like();
                let mut t = u[0].zero_like();
                for i in 0..n {
                    for j in 0..n {
                        s += gl[i][j].taylor(&p, order)? * (&u[n + i] * &u[n + j]);
                    }
                    t += nl[i].taylor(&p, order)? * &u[n + i];
                }
                bogoslovsky_f2(&s, &t, &bl.taylor(&p, order)?)
            }));
            FinslerFunction::new(n, n, f2)
        }
        Generator::Deformed { params, lorentzian } => {
            let d = params.g_hat.len();
            let n = if lorentzian { d + 1 } else { d };
            let off = if lorentzian { 1 } else { 0 };
            let r = params.r as i32;
            let f2: Field = Arc::new(FnField::fallible(2 * n, move |u| {
                let ys: Vec<Taylor> = (0..d).map(|i| u[n + off + i].clone()).collect();
                let mut gyy = u[0].zero_like();
                for i in 0..d {
                    for j in 0..d {
                        if params.g_hat[i][j] != 0.0 {
                            gyy += &(&ys[i] * &ys[j]) * params.g_hat[i][j];
                        }
                    }
                }
                if gyy.value() == 0.0 {
                    return Err(JetError::Domain("spatial quadratic form vanishes".into()));
                }
                let mut qy = u[0].zero_like();
                for k in 0..params.q.len() {
                    if params.q[k] == 0.0 {
                        continue;
                    }
                    let mut term = u[0].const_like(params.q[k]);
                    for i in params.unflatten(k) {
                        term = term * &ys[i];
                    }
                    qy += term;
                }
                let ratio = qy / gyy.powi(r) * (1.0 / r as f64);
                let mut out = &gyy * &(ratio + 1.0);
                if lorentzian {
                    out -= u[n].square();
                }
                Ok(out)
            }));
            FinslerFunction::new(n, n, f2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jetcalc::{constant, fd_hessian};

    fn quartic(q: f64) -> FinslerFunction {
        let f2 = field_fn(4, move |u| {
            let s = u[2].square() + u[3].square();
            &s + &(u[2].powi(4) * q / &s)
        });
        FinslerFunction::new(2, 2, f2).unwrap()
    }

    #[test]
    fn minkowski_hessian_is_eta() {
        let f = builtin_generator(Generator::MinkowskiQuadratic { n: 4 }).unwrap();
        let g = hessian_metric(&f, &[0.0, 0.1, 0.2, 0.3, 1.0, 0.5, 0.2, 0.1]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let e = if i != j { 0.0 } else if i == 0 { -1.0 } else { 1.0 };
                assert_eq!(g[i][j], e);
            }
        }
    }

    #[test]
    fn quartic_hessian_matches_finite_differences() {
        let f = quartic(0.01);
        let p = [0.0, 0.0, 1.0, 2.0];
        let g = hessian_metric(&f, &p).unwrap();
        let fd = fd_hessian(&|v| f.f2.value(v).unwrap(), &p, 1e-4);
        for a in 0..2 {
            for b in 0..2 {
                assert!((g[a][b] - 0.5 * fd[2 + a][2 + b]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn bogoslovsky_value_and_collapse() {
        let f = builtin_generator(Generator::Bogoslovsky { b: 0.2, n_up: vec![1.0, 0.0, 0.0, 1.0] }).unwrap();
        let p = [0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 1.0];
        let big_f = f.f2_value(&p).unwrap().abs().sqrt();
        assert!((big_f - 3f64.powf(0.4)).abs() < 1e-12);
        assert!((big_f - 1.5518).abs() < 1e-4);
        let f0 = builtin_generator(Generator::Bogoslovsky { b: 0.0, n_up: vec![1.0, 0.0, 0.0, 1.0] }).unwrap();
        let p = [0.0, 0.0, 0.0, 0.0, 2.0, 0.3, 0.0, 1.0];
        assert!((f0.f2_value(&p).unwrap() - (-4.0 + 0.09 + 1.0)).abs() < 1e-14);
    }

    #[test]
    fn riemannian_semispray_is_christoffel() {
        // g = diag(1, x1²) polar-like plane
        let g = vec![
            vec![constant(2, 1.0), constant(2, 0.0)],
            vec![constant(2, 0.0), field_fn(2, |u| u[0].square())],
        ];
        let f = builtin_generator(Generator::RiemannQuadratic { g }).unwrap();
        let (r, y1, y2) = (1.3, 0.4, -0.7);
        let (gs, _) = semispray_and_nconnection(&f, &[r, 0.2, y1, y2]).unwrap();
        // γ^1_22 = −r, γ^2_12 = 1/r
        assert!((gs[0] - 0.5 * (-r * y2 * y2)).abs() < 1e-12);
        assert!((gs[1] - 0.5 * (2.0 * y1 * y2 / r)).abs() < 1e-12);
    }

    #[test]
    fn dispersion_examples() {
        let id = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let mut q = vec![0.0; 9];
        q[0] = 0.1;
        let p = DispersionParams::new(2.0, id.clone(), q, 1).unwrap();
        let w = dispersion_omega2(&p, &[1.0, 0.0, 0.0], false).unwrap();
        assert!((w - 0.9 * 4.0).abs() < 1e-14);
        let p0 = DispersionParams::new(1.0, id, vec![0.0; 9], 1).unwrap();
        let a = dispersion_omega2(&p0, &[0.3, 0.1, 0.2], false).unwrap();
        let b = dispersion_omega2(&p0, &[0.6, 0.2, 0.4], false).unwrap();
        assert!((b / a - 16.0).abs() < 1e-12);
    }

    #[test]
    fn sasaki_of_flat_has_no_n() {
        let f = builtin_generator(Generator::MinkowskiQuadratic { n: 2 }).unwrap();
        let g = sasaki_lift(&f).unwrap();
        let j = g.jets(&[0.1, 0.2, 1.0, 0.3], 1).unwrap();
        assert!(j.nc.iter().flatten().all(|t| t.value() == 0.0));
        assert_eq!(j.h[0][0].value(), -1.0);
    }

    #[test]
    fn zero_section_rejected() {
        let f = quartic(0.01);
        assert!(matches!(hessian_metric(&f, &[0.0, 0.0, 0.0, 0.0]), Err(FinslerError::Precondition(_))));
    }
}
