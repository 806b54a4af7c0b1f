//! Separated field equations for diagonal ansatz metrics with N-coefficients,
//! generators of their exact solutions, and residual reports.
//!
//! Ansatz layout: `n = 2` horizontal coordinates followed by vertical shells of
//! two coordinates each `(v, y)`. Shell coefficients depend on every earlier
//! coordinate and on `v`, never on `y` (the Killing direction). Within a shell
//! the coframes are `dv + w_β du^β` and `dy + n_β du^β`.

use rayon::prelude::*;
use thiserror::Error;

use crate::dconn::{ConnOptions, ConnectionKind};
use crate::dcurv::{curvature_pack, CurvOptions};
use crate::jetcalc::{combine, combine_diff, constant, field_fn, Field, JetError, PanelRule, Taylor};
use crate::nholon::{ComponentMetric, DMetric, GeomError, Layout, MetricModel, Shell, ShellJets};

/// Diagonal source: one value for the horizontal pair and one per vertical shell.
///
/// Coordinates of a pair share a value, so the per-coordinate diagonal is
/// `(Υ₂, Υ₂, Υ₄, Υ₄, …)`.
#[derive(Clone)]
pub struct Source {
    pub horizontal: Field,
    pub shells: Vec<Field>,
}

impl Source {
    pub fn new(horizontal: Field, shells: Vec<Field>) -> Source {
        Source { horizontal, shells }
    }

    pub fn zero(dim: usize, shells: usize) -> Source {
        Source { horizontal: constant(dim, 0.0), shells: (0..shells).map(|_| constant(dim, 0.0)).collect() }
    }

    pub fn constant(dim: usize, horizontal: f64, shells: &[f64]) -> Source {
        Source { horizontal: constant(dim, horizontal), shells: shells.iter().map(|&c| constant(dim, c)).collect() }
    }

    /// Per-coordinate diagonal `Υ^α_α` at a point for the given layout.
    pub fn diagonal(&self, layout: &Layout, point: &[f64]) -> Result<Vec<f64>, GeomError> {
        if self.shells.len() != layout.shells.len() {
            return Err(GeomError::Shape(format!(
                "source has {} shell values, metric has {} shells",
                self.shells.len(),
                layout.shells.len()
            )));
        }
        let mut out = vec![self.horizontal.value(point)?; layout.n];
        for (s, f) in self.shells.iter().enumerate() {
            let v = f.value(point)?;
            out.extend(std::iter::repeat(v).take(layout.shells[s]));
        }
        Ok(out)
    }
}

/// Residual of one equation over a point set.
#[derive(Clone, Debug, PartialEq)]
pub struct EquationResidual {
    pub id: String,
    pub max_abs: f64,
    pub argmax: Vec<f64>,
    /// Signed `LHS − RHS` at every sample point.
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualReport {
    pub equations: Vec<EquationResidual>,
    pub points: Vec<Vec<f64>>,
}

impl ResidualReport {
    fn from_rows(ids: Vec<String>, points: &[Vec<f64>], rows: Vec<Vec<f64>>) -> ResidualReport {
        let equations = ids
            .into_iter()
            .enumerate()
            .map(|(e, id)| {
                let values: Vec<f64> = rows.iter().map(|r| r[e]).collect();
                let (mut best, mut at) = (0.0f64, 0usize);
                for (p, v) in values.iter().enumerate() {
                    // NaN must surface as the worst residual
                    if v.abs() > best || v.is_nan() {
                        best = if v.is_nan() { f64::INFINITY } else { v.abs() };
                        at = p;
                    }
                }
                let argmax = points.get(at).cloned().unwrap_or_default();
                EquationResidual { id, max_abs: best, argmax, values }
            })
            .collect();
        ResidualReport { equations, points: points.to_vec() }
    }

    pub fn samples(&self) -> usize {
        self.points.len()
    }

    pub fn max_residual(&self) -> f64 {
        self.equations.iter().map(|e| e.max_abs).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&EquationResidual> {
        self.equations.iter().max_by(|a, b| a.max_abs.total_cmp(&b.max_abs))
    }

    pub fn get(&self, id: &str) -> Option<&EquationResidual> {
        self.equations.iter().find(|e| e.id == id)
    }

    pub fn violations(&self, tol: f64) -> Vec<&EquationResidual> {
        self.equations.iter().filter(|e| !(e.max_abs < tol)).collect()
    }

    /// Largest pointwise difference per equation id present in both reports.
    pub fn compare(&self, other: &ResidualReport) -> Result<Vec<(String, f64)>, GeomError> {
        if self.points != other.points {
            return Err(GeomError::Shape("reports were sampled on different points".into()));
        }
        let mut out = Vec::new();
        for e in &self.equations {
            if let Some(o) = other.get(&e.id) {
                let d = e.values.iter().zip(&o.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                out.push((e.id.clone(), d));
            }
        }
        Ok(out)
    }
}

fn ricci_id(alpha: usize) -> String {
    format!("ricci_{0}_{0}", alpha + 1)
}

fn mixed_id(a: usize, k: usize) -> String {
    format!("mixed_{}_{}", a + 1, k + 1)
}

fn einstein_id(alpha: usize) -> String {
    format!("einstein_{0}_{0}", alpha + 1)
}

// ---------------------------------------------------------------------------
// Closed forms. Horizontal coordinates are 0 and 1; `v` is the shell's first
// coordinate. Inputs must be expansions of order 2 or more.

/// `R^1_1 = R^2_2` of a diagonal 2-d block.
pub(crate) fn h_ricci(g1: &Taylor, g2: &Taylor) -> f64 {
    let (a, b) = (g1.value(), g2.value());
    let br = g2.d2(0, 0) - g1.d1(0) * g2.d1(0) / (2.0 * a) - g2.d1(0).powi(2) / (2.0 * b) + g1.d2(1, 1)
        - g1.d1(1) * g2.d1(1) / (2.0 * b)
        - g1.d1(1).powi(2) / (2.0 * a);
    -br / (2.0 * a * b)
}

fn v_bracket(hv: &Taylor, hk: &Taylor, v: usize) -> f64 {
    hk.d2(v, v) - hk.d1(v).powi(2) / (2.0 * hk.value()) - hv.d1(v) * hk.d1(v) / (2.0 * hv.value())
}

/// `R^v_v = R^y_y` of a shell.
pub(crate) fn v_ricci(hv: &Taylor, hk: &Taylor, v: usize) -> f64 {
    -v_bracket(hv, hk, v) / (2.0 * hv.value() * hk.value())
}

/// Canonical-connection mixed equation for `w_β`; `denom` replaces `h_k` in the first term.
pub(crate) fn canonical_w_mixed(hv: &Taylor, hk: &Taylor, w: &Taylor, beta: usize, v: usize, denom: f64) -> f64 {
    let (a, b) = (hv.value(), hk.value());
    w.value() / (2.0 * denom) * v_bracket(hv, hk, v) + hk.d1(v) / (4.0 * b) * (hv.d1(beta) / a + hk.d1(beta) / b)
        - hk.d2(beta, v) / (2.0 * b)
}

/// Canonical-connection mixed equation for `n_β`.
pub(crate) fn canonical_n_mixed(hv: &Taylor, hk: &Taylor, n: &Taylor, v: usize) -> f64 {
    let (a, b) = (hv.value(), hk.value());
    b / (2.0 * a) * n.d2(v, v) + (b / a * hv.d1(v) - 1.5 * hk.d1(v)) * n.d1(v) / (2.0 * a)
}

fn coeff_a(hv: &Taylor, hk: &Taylor, v: usize) -> Taylor {
    hv.partial(v) / (2.0 * hv) + hk.partial(v) / (2.0 * hk)
}

fn coeff_b(g: &[Taylor], hv: &Taylor, hk: &Taylor, k: usize, v: usize) -> Taylor {
    let a = coeff_a(hv, hk, v);
    hk.partial(v) / (2.0 * hk) * (g[0].partial(k) / (2.0 * &g[0]) - g[1].partial(k) / (2.0 * &g[1])) - a.partial(k)
}

/// Which printed form of the `n`-equation coefficients to use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KVariant {
    #[default]
    Standard,
    /// The 4-d cosmological variant whose first coefficient divides both terms by `h_y`.
    Cosmological,
}

fn coeff_k(g: &[Taylor], hv: &Taylor, hk: &Taylor, i: usize, variant: KVariant) -> Taylor {
    let (g1, g2) = (&g[0], &g[1]);
    if i == 0 {
        let first = match variant {
            KVariant::Standard => g1.partial(1) / (g2 * hv),
            KVariant::Cosmological => g1.partial(1) / (g2 * hk),
        };
        -0.5 * (first + g2.partial(0) / (g2 * hk))
    } else {
        0.5 * (g2.partial(0) / (g1 * hv) - g2.partial(1) / (g2 * hk))
    }
}

/// h-v connection mixed equation for `w_k`.
pub(crate) fn hv_w_mixed(g: &[Taylor], hv: &Taylor, hk: &Taylor, w: &Taylor, k: usize, v: usize) -> f64 {
    let a = coeff_a(hv, hk, v);
    hv.d1(v) / (2.0 * hv.value()) * w.d1(v) + a.d1(v) * w.value() + coeff_b(g, hv, hk, k, v).value()
}

/// h-v connection mixed equation for `n_k`.
pub(crate) fn hv_n_mixed(g: &[Taylor], hv: &Taylor, hk: &Taylor, n: &Taylor, k: usize, v: usize) -> f64 {
    -hk.d1(v) / (2.0 * hv.value()) * n.d1(v) + hk.d1(v) / 2.0 * coeff_k(g, hv, hk, k, KVariant::Standard).value()
}

// ---------------------------------------------------------------------------
// Shape checks.

const KILLING_TOL: f64 = 1e-9;

fn check_diag(m: &[Vec<Taylor>], what: &str) -> Result<(), GeomError> {
    for (i, row) in m.iter().enumerate() {
        for (j, t) in row.iter().enumerate() {
            if i != j && t.value().abs() > 1e-14 * (1.0 + m[i][i].value().abs()) {
                return Err(GeomError::Shape(format!("{what} block is not diagonal at ({}, {})", i + 1, j + 1)));
            }
        }
    }
    Ok(())
}

fn check_independent(t: &Taylor, var: usize, what: &str) -> Result<(), GeomError> {
    if t.d1(var).abs() > KILLING_TOL * (1.0 + t.value().abs()) {
        return Err(GeomError::Shape(format!("{what} depends on coordinate {}", var + 1)));
    }
    Ok(())
}

/// Validates the ansatz shape of shell jets: diagonal blocks, horizontal block
/// free of vertical coordinates, no shell coefficient depending on a Killing
/// coordinate or on a later shell.
fn check_ansatz(layout: &Layout, sj: &ShellJets) -> Result<(), GeomError> {
    if layout.n != 2 || layout.shells.iter().any(|&m| m != 2) {
        return Err(GeomError::Shape(format!("ansatz needs 2 horizontal and 2-dimensional shells, got {layout:?}")));
    }
    let dim = layout.dim();
    check_diag(&sj.g, "horizontal")?;
    for i in 0..2 {
        for var in 2..dim {
            check_independent(&sj.g[i][i], var, "horizontal metric")?;
        }
    }
    for (s, h) in sj.h.iter().enumerate() {
        check_diag(h, &format!("shell {s}"))?;
        let off = layout.offset(s);
        let coeffs = h.iter().flatten().chain(sj.nc[s].iter().flatten());
        for t in coeffs {
            check_independent(t, off + 1, "shell coefficient")?;
            for var in off + 2..dim {
                check_independent(t, var, "shell coefficient")?;
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Residual evaluators.

/// Connection whose separated equations are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SeparatedKind {
    #[default]
    Canonical,
    Hv,
}

impl std::str::FromStr for SeparatedKind {
    type Err = GeomError;

    fn from_str(s: &str) -> Result<SeparatedKind, GeomError> {
        match s.to_ascii_lowercase().as_str() {
            "canonical" => Ok(SeparatedKind::Canonical),
            "hv" | "h-v" | "cartan" => Ok(SeparatedKind::Hv),
            other => Err(GeomError::Shape(format!("no separated system for connection '{other}'"))),
        }
    }
}

impl From<SeparatedKind> for ConnectionKind {
    fn from(k: SeparatedKind) -> ConnectionKind {
        match k {
            SeparatedKind::Canonical => ConnectionKind::Canonical,
            SeparatedKind::Hv => ConnectionKind::Hv,
        }
    }
}

fn sample_rows<F>(points: &[Vec<f64>], f: F) -> Result<Vec<Vec<f64>>, GeomError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, GeomError> + Sync,
{
    points.par_iter().map(|p| f(p)).collect()
}

/// Separated equations of a single-shell ansatz (`2 + 2`) as closed forms in the
/// metric coefficients; residuals are `LHS − RHS` with `R^α_α = −Υ_α`.
pub fn residuals_separated(
    g: &DMetric,
    kind: SeparatedKind,
    src: &Source,
    points: &[Vec<f64>],
) -> Result<ResidualReport, GeomError> {
    let layout = g.layout();
    if layout != Layout::single(2, 2) {
        return Err(GeomError::Shape(format!("separated system needs a 2+2 ansatz, got {layout:?}")));
    }
    let mut ids: Vec<String> = (0..4).map(ricci_id).collect();
    for a in 2..4 {
        ids.extend((0..2).map(|k| mixed_id(a, k)));
    }
    let rows = sample_rows(points, |p| {
        let sj = g.shell_jets(p, 2)?;
        check_ansatz(&layout, &sj)?;
        let ups = src.diagonal(&layout, p)?;
        let gd = [sj.g[0][0].clone(), sj.g[1][1].clone()];
        let (hv, hk) = (&sj.h[0][0][0], &sj.h[0][1][1]);
        let rh = h_ricci(&gd[0], &gd[1]);
        let rv = v_ricci(hv, hk, 2);
        let mut row = vec![rh + ups[0], rh + ups[1], rv + ups[2], rv + ups[3]];
        for k in 0..2 {
            let w = &sj.nc[0][k][0];
            row.push(match kind {
                SeparatedKind::Canonical => canonical_w_mixed(hv, hk, w, k, 2, hk.value()),
                SeparatedKind::Hv => hv_w_mixed(&gd, hv, hk, w, k, 2),
            });
        }
        for k in 0..2 {
            let n = &sj.nc[0][k][1];
            row.push(match kind {
                SeparatedKind::Canonical => canonical_n_mixed(hv, hk, n, 2),
                SeparatedKind::Hv => hv_n_mixed(&gd, hv, hk, n, k, 2),
            });
        }
        Ok(row)
    })?;
    Ok(ResidualReport::from_rows(ids, points, rows))
}

fn raise(inv: &[Vec<f64>], low: &[Vec<f64>], i: usize) -> f64 {
    (0..inv.len()).map(|j| inv[i][j] * low[j][i]).sum()
}

/// The same equation ids as [`residuals_separated`] computed through the full
/// curvature pipeline, plus `einstein_α_α = E^α_α − Υ_α` for every coordinate.
///
/// Works for any single-split metric; multi-shell metrics are flattened.
pub fn residuals_generic(
    g: &DMetric,
    kind: ConnectionKind,
    conn_opts: ConnOptions,
    src: &Source,
    points: &[Vec<f64>],
) -> Result<ResidualReport, GeomError> {
    let layout = g.layout();
    let (n, m) = (layout.n, layout.m());
    let mut ids: Vec<String> = (0..n + m).map(ricci_id).collect();
    for a in n..n + m {
        ids.extend((0..n).map(|k| mixed_id(a, k)));
    }
    ids.extend((0..n + m).map(einstein_id));
    let rows = sample_rows(points, |p| {
        let cp = curvature_pack(g, kind, conn_opts, CurvOptions::default(), p)?;
        let j = g.jets(p, 0)?;
        let gi = crate::nholon::values(&j.g_inv()?);
        let hi = crate::nholon::values(&j.h_inv()?);
        let ups = src.diagonal(&layout, p)?;
        let r = &cp.ricci;
        let mut row = Vec::with_capacity(ids_len(n, m));
        for i in 0..n {
            row.push(raise(&gi, &r.hh, i) + ups[i]);
        }
        for a in 0..m {
            row.push(raise(&hi, &r.vv, a) + ups[n + a]);
        }
        for a in 0..m {
            for k in 0..n {
                row.push(r.vh[a][k]);
            }
        }
        let e = &cp.einstein.einstein;
        let eh: Vec<Vec<f64>> = e[..n].iter().map(|r| r[..n].to_vec()).collect();
        let ev: Vec<Vec<f64>> = e[n..].iter().map(|r| r[n..].to_vec()).collect();
        for i in 0..n {
            row.push(raise(&gi, &eh, i) - ups[i]);
        }
        for a in 0..m {
            row.push(raise(&hi, &ev, a) - ups[n + a]);
        }
        Ok(row)
    })?;
    Ok(ResidualReport::from_rows(ids, points, rows))
}

fn ids_len(n: usize, m: usize) -> usize {
    2 * (n + m) + n * m
}

/// How the third shell's printed equations are read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ThirdShellReading {
    /// Same kernel as the other shells.
    #[default]
    Structural,
    /// As printed: the `w` equation divides by the first shell's `h_y`, and the
    /// diagonal bracket pairs `∂h₇` with the second shell's `h_y`.
    Literal,
}

/// Printed per-shell equations of a three-shell ansatz (`2 + 2 + 2 + 2`, canonical connection).
pub fn residuals_8d(
    g: &DMetric,
    src: &Source,
    points: &[Vec<f64>],
    reading: ThirdShellReading,
) -> Result<ResidualReport, GeomError> {
    let layout = g.layout();
    if layout != Layout::new(2, vec![2, 2, 2]) {
        return Err(GeomError::Shape(format!("three-shell system needs a 2+2+2+2 ansatz, got {layout:?}")));
    }
    let mut ids: Vec<String> = (0..8).map(ricci_id).collect();
    for s in 0..3 {
        let off = layout.offset(s);
        for a in off..off + 2 {
            ids.extend((0..off).map(|k| mixed_id(a, k)));
        }
    }
    let rows = sample_rows(points, |p| {
        let sj = g.shell_jets(p, 2)?;
        check_ansatz(&layout, &sj)?;
        let ups = src.diagonal(&layout, p)?;
        let rh = h_ricci(&sj.g[0][0], &sj.g[1][1]);
        let mut row = vec![rh + ups[0], rh + ups[1]];
        let mut diag = Vec::new();
        let mut mixed = Vec::new();
        for s in 0..3 {
            let off = layout.offset(s);
            let (hv, hk) = (&sj.h[s][0][0], &sj.h[s][1][1]);
            let literal = s == 2 && reading == ThirdShellReading::Literal;
            let rv = if literal {
                // the printed bracket uses ∂h₆, which does not depend on the third shell's v
                let h6 = &sj.h[1][1][1];
                let br = hk.d2(off, off) - hk.d1(off).powi(2) / (2.0 * hk.value())
                    - hv.d1(off) * h6.d1(off) / (2.0 * hv.value());
                -br / (2.0 * hv.value() * hk.value())
            } else {
                v_ricci(hv, hk, off)
            };
            diag.push(rv + ups[off]);
            diag.push(rv + ups[off + 1]);
            let denom = if literal { sj.h[0][1][1].value() } else { hk.value() };
            for beta in 0..off {
                mixed.push(canonical_w_mixed(hv, hk, &sj.nc[s][beta][0], beta, off, denom));
            }
            for beta in 0..off {
                mixed.push(canonical_n_mixed(hv, hk, &sj.nc[s][beta][1], off));
            }
        }
        row.extend(diag);
        row.extend(mixed);
        Ok(row)
    })?;
    Ok(ResidualReport::from_rows(ids, points, rows))
}

// ---------------------------------------------------------------------------
// Generated metrics.

/// How `|ς|` is built from its line integral `I = ∫₀^v ι dv`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaForm {
    /// `|ς| = 1 / (1/|ς₀| + I)`; solves the diagonal vertical equation exactly.
    Reciprocal,
    /// `ς = ς₀ + I`.
    Linear,
}

/// Rule producing `w_β`.
#[derive(Clone)]
pub enum WRule {
    /// First-order h-v equation `w* + P w + Q = 0` solved by variation of constants.
    /// `literal` uses the printed quadrature `w₀ e^{-∫P} ∫ (Q/2) e^{-∫P}` instead.
    Hv { w0: Vec<Field>, literal: bool },
    /// Algebraic canonical equation; `w0` is used where its bracket vanishes.
    /// `sigma_ratio` replaces the solve by `−∂_β ς / ς*`.
    Canonical { w0: Vec<Field>, sigma_ratio: bool },
    Zero,
}

/// Rule producing `n_β`.
#[derive(Clone)]
pub enum NRule {
    /// `n = n₀ + ∫₀^v h_v K_β ω dv` with optional extra weight `ω`.
    Hv { n0: Vec<Field>, variant: KVariant, weight: Option<Field> },
    /// `n = n₀ + n₁ ∫₀^v |h_y|^{3/2} / h_v dv`, or the reciprocal integrand when `inverse`.
    Canonical { n0: Vec<Field>, n1: Vec<Field>, inverse: bool },
    Zero,
}

/// Generating data of one shell: `h_v = ε_v h₀ (∂_v Θ)² |ς|`, `h_y = ε_y Φ²`.
#[derive(Clone)]
pub struct ShellSpec {
    pub eps_v: f64,
    pub eps_k: f64,
    pub amplitude: Field,
    pub profile: Field,
    pub h0: Field,
    pub sigma0: Field,
    pub sigma_integrand: Field,
    pub sigma_form: SigmaForm,
    pub w: WRule,
    pub n: NRule,
    /// Lower limit of every `v`-integral of the shell.
    pub lower: f64,
}

/// Lower bound on `|∂_v Θ|`.
pub const PROFILE_SLOPE_MIN: f64 = 1e-6;
const SWEEP_TOL: f64 = 1e-10;
const MAX_PANELS: usize = 256;

/// A metric of the separated ansatz, evaluated by sweeping each shell's
/// `v`-line from 0 with spectral panel integration.
#[derive(Clone)]
pub struct AnsatzModel {
    layout: Layout,
    g: [Field; 2],
    shells: Vec<ShellSpec>,
}

impl AnsatzModel {
    pub fn new(g: [Field; 2], shells: Vec<ShellSpec>) -> Result<AnsatzModel, GeomError> {
        if shells.is_empty() || shells.len() > 3 {
            return Err(GeomError::Shape(format!("1 to 3 shells supported, got {}", shells.len())));
        }
        let layout = Layout::new(2, vec![2; shells.len()]);
        let dim = layout.dim();
        let mut all: Vec<&Field> = g.iter().collect();
        for sh in &shells {
            all.extend([&sh.amplitude, &sh.profile, &sh.h0, &sh.sigma0, &sh.sigma_integrand]);
            match &sh.w {
                WRule::Hv { w0, .. } | WRule::Canonical { w0, .. } => all.extend(w0),
                WRule::Zero => {}
            }
            match &sh.n {
                NRule::Hv { n0, weight, .. } => {
                    all.extend(n0);
                    all.extend(weight);
                }
                NRule::Canonical { n0, n1, .. } => {
                    all.extend(n0);
                    all.extend(n1);
                }
                NRule::Zero => {}
            }
        }
        if let Some(f) = all.iter().find(|f| f.dim() != dim) {
            return Err(GeomError::Shape(format!("generating field of dim {} for a {dim}-d ansatz", f.dim())));
        }
        Ok(AnsatzModel { layout, g, shells })
    }

    pub fn into_dmetric(self) -> DMetric {
        DMetric::new(self)
    }
}

fn degenerate(block: &str, p: &[f64], value: f64) -> GeomError {
    GeomError::Degenerate { block: block.into(), point: p.to_vec(), det: value, threshold: 0.0 }
}

fn nth(fields: &[Field], i: usize, p: &[f64], order: usize) -> Result<Option<Taylor>, GeomError> {
    Ok(match fields.get(i) {
        Some(f) => Some(f.taylor(p, order)?),
        None => None,
    })
}

/// Local part of a line integral: the antiderivative of the integrand's own expansion.
fn local(t: &Taylor, var: usize) -> Taylor {
    if t.order() == 0 {
        t.zero_like()
    } else {
        t.truncate(t.order() - 1).antiderivative(var)
    }
}

/// Nodes of a composite Gauss rule on `[start, end]` and spectral cumulative sums.
struct Line {
    rule: &'static PanelRule,
    start: f64,
    end: f64,
    panels: usize,
}

impl Line {
    fn width(&self) -> f64 {
        (self.end - self.start) / self.panels as f64
    }

    fn nodes(&self) -> Vec<f64> {
        let h = self.width();
        let mut out = Vec::with_capacity(self.panels * self.rule.nodes.len());
        for p in 0..self.panels {
            let lo = self.start + h * p as f64;
            out.extend(self.rule.nodes.iter().map(|x| lo + 0.5 * h * (x + 1.0)));
        }
        out
    }

    /// Cumulative integrals at every node and the total, from node samples.
    fn cumulate(&self, vals: &[Taylor], zero: &Taylor) -> (Vec<Taylor>, Taylor) {
        let q = self.rule.nodes.len();
        let half = 0.5 * self.width();
        let mut start = zero.clone();
        let mut cum = Vec::with_capacity(vals.len());
        for panel in vals.chunks(q) {
            for row in &self.rule.s {
                let mut acc = start.clone();
                for (sk, v) in row.iter().zip(panel) {
                    crate::jetcalc::axpy(&mut acc, half * sk, v);
                }
                cum.push(acc);
            }
            for (w, v) in self.rule.weights.iter().zip(panel) {
                crate::jetcalc::axpy(&mut start, half * w, v);
            }
        }
        (cum, start)
    }
}

/// Shell quantities at one point of the `v`-line.
struct ShellNode {
    hv: Taylor,
    hk: Taylor,
    sigma: Taylor,
    /// `∂_v h_v`
    hv_slope: f64,
    /// `P` of the h-v `w` equation, `None` where `h_v*` vanishes.
    p_coeff: Option<Taylor>,
    q_coeff: Vec<Taylor>,
    n_integrand: Vec<Taylor>,
}

struct ShellOut {
    hv: Taylor,
    hk: Taylor,
    w: Vec<Taylor>,
    n: Vec<Taylor>,
}

impl ShellOut {
    fn distance(&self, other: &ShellOut) -> (f64, f64) {
        let mut d = 0.0f64;
        let mut scale = 0.0f64;
        let a = [&self.hv, &self.hk].into_iter().chain(&self.w).chain(&self.n);
        let b = [&other.hv, &other.hk].into_iter().chain(&other.w).chain(&other.n);
        for (x, y) in a.zip(b) {
            for (u, v) in x.coeffs().iter().zip(y.coeffs()) {
                d = d.max((u - v).abs());
                scale = scale.max(u.abs());
            }
        }
        (d, scale)
    }
}

impl AnsatzModel {
    fn node(
        &self,
        s: usize,
        p: &[f64],
        iota_int: &Taylor,
        order: usize,
        g: &[Taylor],
    ) -> Result<ShellNode, GeomError> {
        let sh = &self.shells[s];
        let v = self.layout.offset(s);
        let beta_count = v;
        let slope = sh.profile.taylor(p, order)?.partial(v);
        if slope.value().abs() < PROFILE_SLOPE_MIN {
            return Err(GeomError::Precondition(format!(
                "profile slope {:e} below {PROFILE_SLOPE_MIN:e} at {p:?}",
                slope.value()
            )));
        }
        let s0 = sh.sigma0.taylor(p, order)?;
        let sigma = match sh.sigma_form {
            SigmaForm::Reciprocal => (s0.abs().recip() + iota_int).recip(),
            SigmaForm::Linear => s0 + iota_int,
        };
        if sigma.value() == 0.0 || !sigma.value().is_finite() {
            return Err(degenerate("ς", p, sigma.value()));
        }
        let hv = sh.eps_v * sh.h0.taylor(p, order)? * slope.square() * sigma.abs();
        let hk = sh.eps_k * sh.amplitude.taylor(p, order)?.square();
        if hk.value() == 0.0 {
            return Err(degenerate("h_y", p, 0.0));
        }
        let (mut p_coeff, mut q_coeff, mut n_integrand) = (None, Vec::new(), Vec::new());
        let hv_slope = hv.d1(v);
        if let WRule::Hv { .. } = sh.w {
            let hvs = hv.partial(v);
            if hvs.value().abs() > 1e-12 * (1.0 + hv.value().abs()) {
                let ratio = 2.0 * &hv / hvs;
                p_coeff = Some(&ratio * coeff_a(&hv, &hk, v).partial(v));
                for k in 0..beta_count {
                    q_coeff.push(&ratio * coeff_b(g, &hv, &hk, k, v));
                }
            }
        }
        match &sh.n {
            NRule::Hv { variant, weight, .. } => {
                let wt = match weight {
                    Some(f) => Some(f.taylor(p, order)?),
                    None => None,
                };
                for k in 0..beta_count {
                    let mut t = &hv * coeff_k(g, &hv, &hk, k, *variant);
                    if let Some(w) = &wt {
                        t = t * w;
                    }
                    n_integrand.push(t);
                }
            }
            NRule::Canonical { inverse, .. } => {
                let ratio = hk.abs().powf(1.5) / &hv;
                let t = if *inverse { ratio.recip() } else { ratio };
                n_integrand = vec![t; beta_count];
            }
            NRule::Zero => {}
        }
        Ok(ShellNode { hv, hk, sigma, hv_slope, p_coeff, q_coeff, n_integrand })
    }

    fn sweep(&self, s: usize, point: &[f64], order: usize, panels: usize, g_at: &dyn Fn(&[f64]) -> Result<Vec<Taylor>, GeomError>) -> Result<ShellOut, GeomError> {
        let sh = &self.shells[s];
        let v = self.layout.offset(s);
        let work = order + 3;
        let zero = Taylor::constant(point.len(), work, 0.0);
        let line = Line { rule: PanelRule::standard(), start: sh.lower, end: point[v], panels };
        let at = |t: f64| {
            let mut q = point.to_vec();
            q[v] = t;
            q
        };
        let pts: Vec<Vec<f64>> = if point[v] == sh.lower { Vec::new() } else { line.nodes().into_iter().map(at).collect() };

        // ς integral
        let iota: Vec<Taylor> = pts.iter().map(|q| sh.sigma_integrand.taylor(q, work)).collect::<Result<_, _>>()?;
        let xj: Vec<Taylor> = iota.iter().map(|t| t.restrict_zero(v)).collect();
        let (cum_sigma, tot_sigma) = line.cumulate(&xj, &zero);
        let mut nodes = Vec::with_capacity(pts.len());
        for ((q, c), i) in pts.iter().zip(&cum_sigma).zip(&iota) {
            nodes.push(self.node(s, q, &(c + local(i, v)), work, &g_at(q)?)?);
        }
        let iota_end = sh.sigma_integrand.taylor(point, work)?;
        let g_end = g_at(point)?;
        let end = self.node(s, point, &(&tot_sigma + local(&iota_end, v)), work, &g_end)?;
        let beta_count = v;

        // n integrals
        let n_total: Vec<Taylor> = (0..end.n_integrand.len())
            .map(|k| {
                let xs: Vec<Taylor> = nodes.iter().map(|nd| nd.n_integrand[k].restrict_zero(v)).collect();
                let (_, tot) = line.cumulate(&xs, &zero);
                tot + local(&end.n_integrand[k], v)
            })
            .collect();

        let w = match &sh.w {
            WRule::Zero => Vec::new(),
            WRule::Canonical { w0, sigma_ratio } => {
                let mut out = Vec::with_capacity(beta_count);
                for k in 0..beta_count {
                    let wk = if *sigma_ratio {
                        -(end.sigma.partial(k) / end.sigma.partial(v))
                    } else {
                        let (hv, hk) = (&end.hv, &end.hk);
                        let hks = hk.partial(v);
                        let bracket = hks.partial(v) - hks.square() / (2.0 * hk) - hv.partial(v) * &hks / (2.0 * hv);
                        let nk = &hks / (4.0 * hk) * (hv.partial(k) / hv + hk.partial(k) / hk) - hks.partial(k) / (2.0 * hk);
                        if bracket.value().abs() > 1e-12 * (1.0 + hks.partial(v).value().abs()) {
                            -2.0 * hk * nk / bracket
                        } else {
                            nth(w0, k, point, work)?.unwrap_or_else(|| zero.clone())
                        }
                    };
                    out.push(wk);
                }
                out
            }
            WRule::Hv { w0, literal } => {
                let degenerate = end.p_coeff.is_none() || nodes.iter().any(|nd| nd.p_coeff.is_none());
                if !degenerate && nodes.iter().any(|nd| nd.hv_slope.signum() != end.hv_slope.signum()) {
                    return Err(GeomError::Precondition(format!(
                        "h_v* changes sign on the v-line through {point:?}; the w equation is singular there"
                    )));
                }
                if degenerate {
                    if end.p_coeff.is_some() || nodes.iter().any(|nd| nd.p_coeff.is_some()) {
                        return Err(GeomError::Precondition(format!(
                            "h_v* vanishes inside the v-line through {point:?}"
                        )));
                    }
                    // h_v* ≡ 0: the equation is algebraic, A* w + B = 0
                    let a_star = coeff_a(&end.hv, &end.hk, v).partial(v);
                    (0..beta_count).map(|k| -(coeff_b(&g_end, &end.hv, &end.hk, k, v) / &a_star)).collect()
                } else {
                    let pe = end.p_coeff.as_ref().expect("checked");
                    let xs: Vec<Taylor> = nodes.iter().map(|nd| nd.p_coeff.as_ref().expect("checked").restrict_zero(v)).collect();
                    let (cum_p, tot_p) = line.cumulate(&xs, &zero);
                    let ip_end = tot_p + local(pe, v);
                    let sign = if *literal { -1.0 } else { 1.0 };
                    let mut out = Vec::with_capacity(beta_count);
                    for k in 0..beta_count {
                        let integrand = |nd: &ShellNode, ip: &Taylor| {
                            let e = (sign * ip).exp();
                            if *literal {
                                0.5 * &nd.q_coeff[k] * e
                            } else {
                                &nd.q_coeff[k] * e
                            }
                        };
                        let xs: Vec<Taylor> = nodes
                            .iter()
                            .zip(&cum_p)
                            .map(|(nd, c)| integrand(nd, &(c + local(nd.p_coeff.as_ref().expect("checked"), v))).restrict_zero(v))
                            .collect();
                        let (_, tot) = line.cumulate(&xs, &zero);
                        let j = tot + local(&integrand(&end, &ip_end), v);
                        let w0k = nth(w0, k, point, work)?.unwrap_or_else(|| zero.clone());
                        let decay = (-&ip_end).exp();
                        out.push(if *literal { w0k * decay * j } else { decay * (w0k - j) });
                    }
                    out
                }
            }
        };

        let n = match &sh.n {
            NRule::Zero => Vec::new(),
            NRule::Hv { n0, .. } => (0..beta_count)
                .map(|k| Ok(nth(n0, k, point, work)?.unwrap_or_else(|| zero.clone()) + &n_total[k]))
                .collect::<Result<_, GeomError>>()?,
            NRule::Canonical { n0, n1, .. } => (0..beta_count)
                .map(|k| {
                    let base = nth(n0, k, point, work)?.unwrap_or_else(|| zero.clone());
                    Ok(match nth(n1, k, point, work)? {
                        Some(c) => base + c * &n_total[k],
                        None => base,
                    })
                })
                .collect::<Result<_, GeomError>>()?,
        };
        let cut = |t: Taylor| t.truncate(order);
        Ok(ShellOut {
            hv: cut(end.hv),
            hk: cut(end.hk),
            w: w.into_iter().map(cut).collect(),
            n: n.into_iter().map(cut).collect(),
        })
    }

    fn shell(&self, s: usize, point: &[f64], order: usize) -> Result<ShellOut, GeomError> {
        let v = self.layout.offset(s);
        let g_at = |q: &[f64]| -> Result<Vec<Taylor>, GeomError> {
            Ok(vec![self.g[0].taylor(q, order + 3)?, self.g[1].taylor(q, order + 3)?])
        };
        let span = point[v] - self.shells[s].lower;
        let mut panels = ((span.abs() / 0.5).ceil() as usize).max(1);
        let mut prev = self.sweep(s, point, order, panels, &g_at)?;
        if span == 0.0 {
            return Ok(prev);
        }
        loop {
            panels *= 2;
            let next = self.sweep(s, point, order, panels, &g_at)?;
            let (d, scale) = next.distance(&prev);
            if d <= SWEEP_TOL * (1.0 + scale) {
                return Ok(next);
            }
            if panels >= MAX_PANELS {
                return Err(GeomError::Jet(JetError::Quadrature { best: next.hv.value(), error: d }));
            }
            prev = next;
        }
    }
}

impl MetricModel for AnsatzModel {
    fn layout(&self) -> Layout {
        self.layout.clone()
    }

    fn shell_jets(&self, point: &[f64], order: usize) -> Result<ShellJets, GeomError> {
        let dim = self.layout.dim();
        if point.len() != dim {
            return Err(GeomError::Jet(JetError::DimensionMismatch { expected: dim, got: point.len() }));
        }
        let zero = Taylor::constant(dim, order, 0.0);
        let mut g = vec![vec![zero.clone(); 2]; 2];
        g[0][0] = self.g[0].taylor(point, order)?;
        g[1][1] = self.g[1].taylor(point, order)?;
        let mut h = Vec::new();
        let mut nc = Vec::new();
        for s in 0..self.shells.len() {
            let out = self.shell(s, point, order)?;
            let mut blk = vec![vec![zero.clone(); 2]; 2];
            blk[0][0] = out.hv;
            blk[1][1] = out.hk;
            h.push(blk);
            let rows = (0..self.layout.offset(s))
                .map(|b| {
                    vec![
                        out.w.get(b).cloned().unwrap_or_else(|| zero.clone()),
                        out.n.get(b).cloned().unwrap_or_else(|| zero.clone()),
                    ]
                })
                .collect();
            nc.push(rows);
        }
        Ok(ShellJets { g, h, nc })
    }
}

// ---------------------------------------------------------------------------
// Recipes.

/// Which form of the solution formulas a generator emits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FormulaReading {
    /// Forms that solve the separated equations exactly.
    #[default]
    Exact,
    /// The formulas as printed: linear `ς` with the `1/8` factor, the printed
    /// `w` quadrature and the unscaled `ψ` relation.
    Printed,
}

fn check_sign(name: &str, e: f64) -> Result<(), GeomError> {
    if e == 1.0 || e == -1.0 {
        Ok(())
    } else {
        Err(GeomError::Precondition(format!("signature flag {name} must be ±1, got {e}")))
    }
}

/// `Υ₂` matched to `g_i = ε_i e^ψ`.
///
/// `Exact` gives `(ε₁ ∂₁²ψ + ε₂ ∂₂²ψ) / (2 e^ψ)`, which is what the diagonal
/// horizontal equation requires; `Printed` drops the `2 e^ψ`.
pub fn horizontal_source(psi: Field, eps1: f64, eps2: f64, reading: FormulaReading) -> Field {
    combine_diff(vec![psi], 2, move |u| {
        let lap = eps1 * u[0].partial(0).partial(0) + eps2 * u[0].partial(1).partial(1);
        match reading {
            FormulaReading::Exact => lap / (2.0 * u[0].exp()),
            FormulaReading::Printed => lap,
        }
    })
}

fn horizontal_pair(psi: &Field, eps1: f64, eps2: f64) -> [Field; 2] {
    [combine(vec![psi.clone()], move |u| eps1 * u[0].exp()), combine(vec![psi.clone()], move |u| eps2 * u[0].exp())]
}

/// `ς` integrand for `f`, `⁰f`, `⁰h` and `Υ` on shell coordinate `v`.
fn sigma_integrand(f: &Field, f0: &Field, h0: &Field, ups: &Field, eps_v: f64, v: usize, reading: FormulaReading) -> Field {
    combine_diff(vec![f.clone(), f0.clone(), h0.clone(), ups.clone()], 1, move |u| {
        let core = u[0].partial(v) * (&u[0] - &u[1]) * &u[2] * &u[3];
        match reading {
            FormulaReading::Exact => 2.0 * eps_v * core,
            FormulaReading::Printed => -eps_v / 8.0 * core,
        }
    })
}

fn sigma_form(reading: FormulaReading) -> SigmaForm {
    match reading {
        FormulaReading::Exact => SigmaForm::Reciprocal,
        FormulaReading::Printed => SigmaForm::Linear,
    }
}

fn difference(a: &Field, b: &Field) -> Field {
    combine(vec![a.clone(), b.clone()], |u| &u[0] - &u[1])
}

/// Generating data of a `2 + 2` solution for the h-v connection.
///
/// `g_i = ε_i e^ψ`, `h₃ = ε₃ ⁰h (f*)² |ς|`, `h₄ = ε₄ (f − ⁰f)²`, with `w_j`
/// and `n_i` from their first-order equations along `v` (coordinate 2).
#[derive(Clone)]
pub struct SolutionRecipe {
    pub eps: [f64; 4],
    pub psi: Field,
    pub f: Field,
    pub f0: Field,
    pub h0: Field,
    pub sigma0: Field,
    pub w0: Vec<Field>,
    pub n0: Vec<Field>,
    pub upsilon4: Field,
    pub reading: FormulaReading,
    /// Lower limit of the `v`-integrals.
    pub v_lower: f64,
}

impl SolutionRecipe {
    /// Defaults: `⁰f = 0`, `⁰h = ⁰ς = 1`, zero `w₀`, `n₀` and `Υ₄`, all signs `+1`.
    pub fn new(psi: Field, f: Field) -> SolutionRecipe {
        SolutionRecipe {
            eps: [1.0; 4],
            psi,
            f,
            f0: constant(4, 0.0),
            h0: constant(4, 1.0),
            sigma0: constant(4, 1.0),
            w0: Vec::new(),
            n0: Vec::new(),
            upsilon4: constant(4, 0.0),
            reading: FormulaReading::Exact,
            v_lower: 0.0,
        }
    }

    pub fn source(&self) -> Source {
        let h = horizontal_source(self.psi.clone(), self.eps[0], self.eps[1], self.reading);
        Source::new(h, vec![self.upsilon4.clone()])
    }
}

pub fn generate_sol1(r: &SolutionRecipe) -> Result<DMetric, GeomError> {
    for (i, e) in r.eps.iter().enumerate() {
        check_sign(&format!("ε{}", i + 1), *e)?;
    }
    let shell = ShellSpec {
        eps_v: r.eps[2],
        eps_k: r.eps[3],
        amplitude: difference(&r.f, &r.f0),
        profile: r.f.clone(),
        h0: r.h0.clone(),
        sigma0: r.sigma0.clone(),
        sigma_integrand: sigma_integrand(&r.f, &r.f0, &r.h0, &r.upsilon4, r.eps[2], 2, r.reading),
        sigma_form: sigma_form(r.reading),
        w: WRule::Hv { w0: r.w0.clone(), literal: r.reading == FormulaReading::Printed },
        n: NRule::Hv { n0: r.n0.clone(), variant: KVariant::Standard, weight: None },
        lower: r.v_lower,
    };
    Ok(AnsatzModel::new(horizontal_pair(&r.psi, r.eps[0], r.eps[1]), vec![shell])?.into_dmetric())
}

/// Coordinate names of the 4-d cosmological chart.
pub const COSMO4_COORDS: [&str; 4] = ["hr", "t", "htheta", "hphi"];

/// The diagonal prime metric `a²dr² − dt² + a²r²dθ² + a²r² sin²θ dφ²`; `scale` is `a(t)` on the 4-d chart.
pub fn prime_4d(scale: Field) -> Result<DMetric, GeomError> {
    let one = constant(4, 1.0);
    polarize_4d(scale, [one.clone(), one.clone(), one.clone(), one], None)
}

fn coord(dim: usize, k: usize) -> Field {
    field_fn(dim, move |u| u[k].clone())
}

fn prime_4d_fields(scale: &Field) -> [Field; 4] {
    let (a, r, th) = (scale.clone(), coord(4, 0), coord(4, 2));
    [
        combine(vec![a.clone()], |u| u[0].square()),
        constant(4, -1.0),
        combine(vec![a.clone(), r.clone()], |u| (&u[0] * &u[1]).square()),
        combine(vec![a, r, th], |u| (&u[0] * &u[1] * u[2].sin()).square()),
    ]
}

/// Polarized prime metric: `g_i = η_i ǧ_i`, `h_a = η_a ȟ_a` and optional N-coefficients `(w, n)`.
pub fn polarize_4d(scale: Field, eta: [Field; 4], n_coeffs: Option<([Field; 2], [Field; 2])>) -> Result<DMetric, GeomError> {
    let prime = prime_4d_fields(&scale);
    let mut diag = prime.iter().zip(eta.iter()).map(|(p, e)| combine(vec![p.clone(), e.clone()], |u| &u[0] * &u[1]));
    let g = vec![diag.next().expect("4"), diag.next().expect("4")];
    let h = vec![diag.next().expect("4"), diag.next().expect("4")];
    let mut cm = ComponentMetric::diagonal(g, vec![h])?;
    if let Some((w, n)) = n_coeffs {
        let sh: &mut Shell = cm.shell_mut(0);
        for k in 0..2 {
            sh.set_n(k, 0, w[k].clone());
            sh.set_n(k, 1, n[k].clone());
        }
    }
    Ok(cm.into_dmetric())
}

/// Generating data of the 4-d off-diagonal cosmology on `(hr, t, hθ, hφ)`.
#[derive(Clone)]
pub struct CosmoRecipe4d {
    /// `a(t)` as a field on the 4-d chart.
    pub scale: Field,
    pub psi: Field,
    pub f: Field,
    pub f0: Field,
    pub w0: Vec<Field>,
    pub n0: Vec<Field>,
    pub upsilon4: f64,
    pub reading: FormulaReading,
    /// Lower limit of the `hθ`-integrals; the pole `hθ = 0` is degenerate.
    pub theta_lower: f64,
}

impl CosmoRecipe4d {
    pub fn new(scale: Field, psi: Field, f: Field) -> CosmoRecipe4d {
        CosmoRecipe4d {
            scale,
            psi,
            f,
            f0: constant(4, 0.0),
            w0: Vec::new(),
            n0: Vec::new(),
            upsilon4: 0.0,
            reading: FormulaReading::Exact,
            theta_lower: std::f64::consts::FRAC_PI_2,
        }
    }

    pub fn source(&self) -> Source {
        let h = horizontal_source(self.psi.clone(), 1.0, -1.0, self.reading);
        Source::new(h, vec![constant(4, self.upsilon4)])
    }
}

/// Target metric `g_hr = e^ψ`, `g_t = −e^ψ` with polarized vertical block.
///
/// `Exact` uses `h_θ = [∂_θ Φ]² |ς|`, `h_φ = Φ²` for `Φ = (f − ⁰f) a r sin θ`,
/// which solves the separated system. `Printed` keeps `η₄ = (f*)²|ς|` on the
/// prime `ȟ₄`, the linear `ς`, the printed `w` quadrature and the `n` integrand
/// `η₄ a² r K` with the cosmological `K`.
pub fn generate_4d_cosmo(r: &CosmoRecipe4d) -> Result<DMetric, GeomError> {
    let amplitude = combine(vec![r.f.clone(), r.f0.clone(), r.scale.clone(), coord(4, 0), coord(4, 2)], |u| {
        (&u[0] - &u[1]) * &u[2] * &u[3] * u[4].sin()
    });
    let ups = constant(4, r.upsilon4);
    let shell = match r.reading {
        FormulaReading::Exact => ShellSpec {
            eps_v: 1.0,
            eps_k: 1.0,
            amplitude: amplitude.clone(),
            profile: amplitude.clone(),
            h0: constant(4, 1.0),
            sigma0: constant(4, 1.0),
            sigma_integrand: sigma_integrand(&amplitude, &constant(4, 0.0), &constant(4, 1.0), &ups, 1.0, 2, r.reading),
            sigma_form: SigmaForm::Reciprocal,
            w: WRule::Hv { w0: r.w0.clone(), literal: false },
            n: NRule::Hv { n0: r.n0.clone(), variant: KVariant::Standard, weight: None },
            lower: r.theta_lower,
        },
        FormulaReading::Printed => {
            let h0 = combine(vec![r.scale.clone(), coord(4, 0)], |u| (&u[0] * &u[1]).square());
            let inv_r = field_fn(4, |u| u[0].recip());
            ShellSpec {
                eps_v: 1.0,
                eps_k: 1.0,
                amplitude,
                profile: r.f.clone(),
                h0,
                sigma0: constant(4, 1.0),
                sigma_integrand: sigma_integrand(&r.f, &r.f0, &constant(4, 1.0), &ups, 1.0, 2, r.reading),
                sigma_form: SigmaForm::Linear,
                w: WRule::Hv { w0: r.w0.clone(), literal: true },
                n: NRule::Hv { n0: r.n0.clone(), variant: KVariant::Cosmological, weight: Some(inv_r) },
                lower: r.theta_lower,
            }
        }
    };
    Ok(AnsatzModel::new(horizontal_pair(&r.psi, 1.0, -1.0), vec![shell])?.into_dmetric())
}

/// Generating data of one lifted shell (canonical connection).
#[derive(Clone)]
pub struct LiftShell {
    pub eps_v: f64,
    pub eps_k: f64,
    pub f: Field,
    pub f0: Field,
    pub h0: Field,
    pub sigma0: Field,
    pub upsilon: Field,
    pub w0: Vec<Field>,
    pub n0: Vec<Field>,
    pub n1: Vec<Field>,
    pub v_lower: f64,
}

impl LiftShell {
    pub fn new(f: Field) -> LiftShell {
        let dim = f.dim();
        LiftShell {
            eps_v: 1.0,
            eps_k: 1.0,
            f,
            f0: constant(dim, 0.0),
            h0: constant(dim, 1.0),
            sigma0: constant(dim, 1.0),
            upsilon: constant(dim, 0.0),
            w0: Vec::new(),
            n0: Vec::new(),
            n1: Vec::new(),
            v_lower: 0.0,
        }
    }
}

/// Multi-shell solution of the canonical system: `2` horizontal coordinates and
/// up to three shells `(v, y)` with `v` at the shell offset.
#[derive(Clone)]
pub struct ShellLiftRecipe {
    pub eps: [f64; 2],
    pub psi: Field,
    pub shells: Vec<LiftShell>,
    pub reading: FormulaReading,
    /// Printed reading only: the third shell's `ς` integrand takes the second shell's `⁰h`.
    pub borrowed_h0: bool,
}

impl ShellLiftRecipe {
    pub fn new(psi: Field, shells: Vec<LiftShell>) -> ShellLiftRecipe {
        ShellLiftRecipe { eps: [1.0, 1.0], psi, shells, reading: FormulaReading::Exact, borrowed_h0: false }
    }

    pub fn source(&self) -> Source {
        let h = horizontal_source(self.psi.clone(), self.eps[0], self.eps[1], self.reading);
        Source::new(h, self.shells.iter().map(|s| s.upsilon.clone()).collect())
    }
}

pub fn generate_shell_lift(r: &ShellLiftRecipe) -> Result<DMetric, GeomError> {
    check_sign("ε1", r.eps[0])?;
    check_sign("ε2", r.eps[1])?;
    let printed = r.reading == FormulaReading::Printed;
    let mut specs = Vec::new();
    for (s, sh) in r.shells.iter().enumerate() {
        check_sign("ε_v", sh.eps_v)?;
        check_sign("ε_y", sh.eps_k)?;
        let v = 2 + 2 * s;
        let h0_sigma = if printed && r.borrowed_h0 && s == 2 { &r.shells[1].h0 } else { &sh.h0 };
        specs.push(ShellSpec {
            eps_v: sh.eps_v,
            eps_k: sh.eps_k,
            amplitude: difference(&sh.f, &sh.f0),
            profile: sh.f.clone(),
            h0: sh.h0.clone(),
            sigma0: sh.sigma0.clone(),
            sigma_integrand: sigma_integrand(&sh.f, &sh.f0, h0_sigma, &sh.upsilon, sh.eps_v, v, r.reading),
            sigma_form: sigma_form(r.reading),
            w: WRule::Canonical { w0: sh.w0.clone(), sigma_ratio: printed },
            n: NRule::Canonical { n0: sh.n0.clone(), n1: sh.n1.clone(), inverse: printed },
            lower: sh.v_lower,
        });
    }
    Ok(AnsatzModel::new(horizontal_pair(&r.psi, r.eps[0], r.eps[1]), specs)?.into_dmetric())
}

// ---------------------------------------------------------------------------
// Eight dimensions: the diagonal two-scale-factor base and its solitonic deformation.

/// Coordinate orders of the 8-d chart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame8 {
    /// `(hr, t | hθ, hφ | vr, x1 | vθ, vφ)`, the `2+2+2+2` shape read by [`residuals_8d`].
    Shells,
    /// `(x1, hr, t | hθ | vr, hφ | vθ, vφ)`, so that `vr` and `hφ` share a shell and the
    /// soliton may couple them to `t` and `hθ`.
    Solitonic,
}

impl Frame8 {
    pub fn coords(&self) -> [&'static str; 8] {
        match self {
            Frame8::Shells => ["hr", "t", "htheta", "hphi", "vr", "x1", "vtheta", "vphi"],
            Frame8::Solitonic => ["x1", "hr", "t", "htheta", "vr", "hphi", "vtheta", "vphi"],
        }
    }

    fn index(&self, name: &str) -> usize {
        self.coords().iter().position(|c| *c == name).expect("known coordinate")
    }
}

/// Scale factors `ha(t)`, `va(t)` (one-variable fields) and curvature constants.
#[derive(Clone)]
pub struct DiagfansParams {
    pub ha: Field,
    pub va: Field,
    pub hk: f64,
    pub vk: f64,
    /// Signature of the extra horizontal direction `x1`.
    pub eps1: f64,
}

impl DiagfansParams {
    pub fn new(ha: Field, va: Field) -> DiagfansParams {
        DiagfansParams { ha, va, hk: 0.0, vk: 0.0, eps1: 1.0 }
    }
}

/// Diagonal coefficients keyed by coordinate name.
fn diagfans_fields(p: &DiagfansParams, frame: Frame8) -> Result<Vec<(&'static str, Field)>, GeomError> {
    if p.ha.dim() != 1 || p.va.dim() != 1 {
        return Err(GeomError::Shape("scale factors must be fields of t alone".into()));
    }
    let at = |name| frame.index(name);
    let ha = crate::jetcalc::embed(p.ha.clone(), 8, vec![at("t")]);
    let va = crate::jetcalc::embed(p.va.clone(), 8, vec![at("t")]);
    let (hr, hth, vr, vth) = (coord(8, at("hr")), coord(8, at("htheta")), coord(8, at("vr")), coord(8, at("vtheta")));
    let (hk, vk) = (p.hk, p.vk);
    Ok(vec![
        ("x1", constant(8, p.eps1)),
        ("hr", combine(vec![ha.clone(), hr.clone()], move |u| u[0].square() / (1.0 - hk * u[1].square()))),
        ("t", constant(8, -1.0)),
        ("htheta", combine(vec![ha.clone(), hr.clone()], |u| (&u[0] * &u[1]).square())),
        ("hphi", combine(vec![ha, hr, hth], |u| (&u[0] * &u[1] * u[2].sin()).square())),
        ("vr", combine(vec![va.clone(), vr.clone()], move |u| u[0].square() / (1.0 - vk * u[1].square()))),
        ("vtheta", combine(vec![va.clone(), vr.clone()], |u| (&u[0] * &u[1]).square())),
        ("vphi", combine(vec![va, vr, vth], |u| (&u[0] * &u[1] * u[2].sin()).square())),
    ])
}

fn frame_metric(frame: Frame8, mut coeff: impl FnMut(&str) -> Field) -> Result<ComponentMetric, GeomError> {
    let names = frame.coords();
    let sizes: &[usize] = match frame {
        Frame8::Shells => &[2, 2, 2, 2],
        Frame8::Solitonic => &[3, 1, 2, 2],
    };
    let mut blocks = Vec::new();
    let mut k = 0;
    for &sz in sizes {
        blocks.push(names[k..k + sz].iter().map(|n| coeff(n)).collect::<Vec<_>>());
        k += sz;
    }
    let g = blocks.remove(0);
    ComponentMetric::diagonal(g, blocks)
}

/// The diagonal 8-d metric with an `x1` direction, a curved `(hr, t)` velocity
/// section of scale `ha` and a spherical `v` section of scale `va`.
pub fn diagfans(p: &DiagfansParams, frame: Frame8) -> Result<DMetric, GeomError> {
    let fields = diagfans_fields(p, frame)?;
    let lookup = |name: &str| fields.iter().find(|(n, _)| *n == name).expect("all coordinates").1.clone();
    Ok(frame_metric(frame, lookup)?.into_dmetric())
}

/// Largest deformation amplitude accepted by [`generate_8d_solitonic`].
pub const SOLITON_EPS_MAX: f64 = 0.1;

/// Deforms the [`Frame8::Solitonic`] base by a soliton `ξ(t, hθ, vr)`:
/// `h_vr` and `h_hφ` pick up the factor `1 + εξ`, and the `(vr, hφ)` shell gets
/// `w_β = −ε ∂_β ξ` and `n_β = ε ∫₀^{vr} ∂_β ξ` for `β ∈ {t, hθ}`. At `ε = 0` the
/// base is returned untouched.
pub fn generate_8d_solitonic(base: &DiagfansParams, xi: &Field, eps: f64) -> Result<DMetric, GeomError> {
    if !(eps.abs() <= SOLITON_EPS_MAX) {
        return Err(GeomError::Precondition(format!("|ε| = {} exceeds {SOLITON_EPS_MAX}", eps.abs())));
    }
    if xi.dim() != 3 {
        return Err(GeomError::Shape(format!("soliton must be a field of (t, hθ, vr), got dim {}", xi.dim())));
    }
    let frame = Frame8::Solitonic;
    if eps == 0.0 {
        return diagfans(base, frame);
    }
    let at = |name| frame.index(name);
    let xi8 = crate::jetcalc::embed(xi.clone(), 8, vec![at("t"), at("htheta"), at("vr")]);
    let fields = diagfans_fields(base, frame)?;
    let mut cm = frame_metric(frame, |name| {
        let f = fields.iter().find(|(n, _)| *n == name).expect("all coordinates").1.clone();
        if name == "vr" || name == "hphi" {
            combine(vec![f, xi8.clone()], move |u| &u[0] * (1.0 + eps * &u[1]))
        } else {
            f
        }
    })?;
    let shell = cm.shell_mut(1);
    for beta in [at("t"), at("htheta")] {
        let d = crate::jetcalc::partial(xi8.clone(), beta);
        shell.set_n(beta, 0, combine(vec![d.clone()], move |u| -eps * &u[0]));
        let integral = crate::jetcalc::line_integral(d, at("vr"), 0.0);
        shell.set_n(beta, 1, combine(vec![integral], move |u| eps * &u[0]));
    }
    Ok(cm.into_dmetric())
}

// ---------------------------------------------------------------------------
// The horizontal relation `ε₁ ∂₁²ψ + ε₂ ∂₂²ψ = Υ₂` on a grid.

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsiError {
    #[error("bad grid: {0}")]
    Grid(String),
    #[error("iteration stalled after {iterations} steps at residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("marching unstable: x-step {hx} exceeds y-step {hy}")]
    Unstable { hx: f64, hy: f64 },
    #[error("marched solution blew up at column {column}")]
    BlowUp { column: usize },
}

/// Uniform rectangular grid with `nx × ny` nodes including the boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid2 {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub nx: usize,
    pub ny: usize,
}

impl Grid2 {
    pub fn new(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> Grid2 {
        Grid2 { x, y, nx, ny }
    }

    pub fn hx(&self) -> f64 {
        (self.x.1 - self.x.0) / (self.nx - 1) as f64
    }

    pub fn hy(&self) -> f64 {
        (self.y.1 - self.y.0) / (self.ny - 1) as f64
    }

    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x.0 + self.hx() * i as f64, self.y.0 + self.hy() * j as f64)
    }
}

#[derive(Clone, Debug)]
pub struct PsiSolution {
    pub grid: Grid2,
    /// Row-major values, `values[i * ny + j]` at `(x_i, y_j)`.
    pub values: Vec<f64>,
    /// Max-norm residual of the discrete operator on interior nodes.
    pub residual: f64,
    pub iterations: usize,
}

impl PsiSolution {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.ny + j]
    }
}

fn discrete_residual(psi: &[f64], rhs: &[f64], grid: &Grid2, e1: f64, e2: f64) -> f64 {
    let (nx, ny) = (grid.nx, grid.ny);
    let (cx, cy) = (e1 / grid.hx().powi(2), e2 / grid.hy().powi(2));
    let mut worst = 0.0f64;
    for i in 1..nx - 1 {
        for j in 1..ny - 1 {
            let k = i * ny + j;
            let l = cx * (psi[k + ny] - 2.0 * psi[k] + psi[k - ny]) + cy * (psi[k + 1] - 2.0 * psi[k] + psi[k - 1]);
            worst = worst.max((l - rhs[k]).abs());
        }
    }
    worst
}

/// Second-order finite differences for `ε₁ ψ_xx + ε₂ ψ_yy = Υ₂` with Dirichlet data.
///
/// Same signs: conjugate gradients on the 5-point Laplacian. Opposite signs:
/// explicit marching in `x` from the two boundary columns at `x₀` (the data on
/// the far `x` edge is not imposed); requires `h_x ≤ h_y`.
pub fn solve_psi(
    upsilon: &dyn Fn(f64, f64) -> f64,
    eps1: f64,
    eps2: f64,
    grid: &Grid2,
    boundary: &dyn Fn(f64, f64) -> f64,
) -> Result<PsiSolution, PsiError> {
    if grid.nx < 3 || grid.ny < 3 || !(grid.hx() > 0.0) || !(grid.hy() > 0.0) {
        return Err(PsiError::Grid(format!("{grid:?}")));
    }
    if ![eps1, eps2].iter().all(|e| *e == 1.0 || *e == -1.0) {
        return Err(PsiError::Grid(format!("signature flags must be ±1, got ({eps1}, {eps2})")));
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let mut rhs = vec![0.0; nx * ny];
    let mut psi = vec![0.0; nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            let (x, y) = grid.coords(i, j);
            rhs[i * ny + j] = upsilon(x, y);
            if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                psi[i * ny + j] = boundary(x, y);
            }
        }
    }
    if eps1 * eps2 > 0.0 {
        let iterations = conjugate_gradient(&mut psi, &rhs, grid, eps1)?;
        let residual = discrete_residual(&psi, &rhs, grid, eps1, eps2);
        return Ok(PsiSolution { grid: *grid, values: psi, residual, iterations });
    }
    let (hx, hy) = (grid.hx(), grid.hy());
    if hx > hy * (1.0 + 1e-12) {
        return Err(PsiError::Unstable { hx, hy });
    }
    for j in 0..ny {
        let (x, y) = grid.coords(1, j);
        psi[ny + j] = boundary(x, y);
    }
    let ratio = (hx / hy).powi(2);
    for i in 1..nx - 1 {
        for j in 1..ny - 1 {
            let k = i * ny + j;
            let lyy = psi[k + 1] - 2.0 * psi[k] + psi[k - 1];
            // ε₁(ψ₊ − 2ψ + ψ₋)/hx² = Υ − ε₂ ψ_yy
            psi[k + ny] = 2.0 * psi[k] - psi[k - ny] + eps1 * (hx * hx * rhs[k] - eps2 * ratio * lyy);
        }
        for j in [0, ny - 1] {
            let (x, y) = grid.coords(i + 1, j);
            psi[(i + 1) * ny + j] = boundary(x, y);
        }
        if psi[(i + 1) * ny..(i + 2) * ny].iter().any(|v| !(v.abs() < 1e12)) {
            return Err(PsiError::BlowUp { column: i + 1 });
        }
    }
    let residual = discrete_residual(&psi, &rhs, grid, eps1, eps2);
    Ok(PsiSolution { grid: *grid, values: psi, residual, iterations: nx - 2 })
}

/// Solves `ε (Δ_h ψ) = Υ` on interior nodes; boundary entries of `psi` are fixed.
fn conjugate_gradient(psi: &mut [f64], rhs: &[f64], grid: &Grid2, eps: f64) -> Result<usize, PsiError> {
    let (nx, ny) = (grid.nx, grid.ny);
    let (cx, cy) = (1.0 / grid.hx().powi(2), 1.0 / grid.hy().powi(2));
    let interior = |k: usize| {
        let (i, j) = (k / ny, k % ny);
        i > 0 && j > 0 && i < nx - 1 && j < ny - 1
    };
    // A = −Δ_h restricted to the interior (SPD)
    let apply = |x: &[f64], out: &mut [f64]| {
        for k in 0..x.len() {
            out[k] = if interior(k) {
                let l = cx * (x[k + ny] - 2.0 * x[k] + x[k - ny]) + cy * (x[k + 1] - 2.0 * x[k] + x[k - 1]);
                -l
            } else {
                0.0
            };
        }
    };
    let total = psi.len();
    // boundary contribution moves to the right-hand side
    let mut ap = vec![0.0; total];
    apply(psi, &mut ap);
    let mut r: Vec<f64> = (0..total).map(|k| if interior(k) { -eps * rhs[k] - ap[k] } else { 0.0 }).collect();
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let max_iter = 20 * (nx + ny) * 10;
    for it in 0..max_iter {
        let rmax = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if rmax < 1e-11 * scale {
            return Ok(it);
        }
        apply(&p, &mut ap);
        // apply() only sees interior p, boundary p entries are zero
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let alpha = rr / pap;
        for k in 0..total {
            psi[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for k in 0..total {
            p[k] = r[k] + beta * p[k];
        }
    }
    let residual = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Err(PsiError::NoConvergence { iterations: max_iter, residual })
}
