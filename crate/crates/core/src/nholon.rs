//! Nonlinear connections, adapted frames and d-metrics with vertical shells.
//!
//! A d-metric is evaluated as a bundle of Taylor expansions ([`ShellJets`]) at a
//! point. Multi-shell metrics are flattened to one horizontal/vertical split
//! ([`MetricJets`]) before any connection is built.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::jetcalc::{
    degeneracy_threshold, invert_general, project, Field, JetError, ScalarField, Taylor,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error(transparent)]
    Jet(#[from] JetError),
    #[error("degenerate {block} at {point:?}: |det| = {det:e} below {threshold:e}")]
    Degenerate { block: String, point: Vec<f64>, det: f64, threshold: f64 },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
}

pub type Mat = Vec<Vec<Taylor>>;

pub(crate) fn zeros(nvars: usize, order: usize, r: usize, c: usize) -> Mat {
    vec![vec![Taylor::constant(nvars, order, 0.0); c]; r]
}

pub(crate) fn values(m: &Mat) -> Vec<Vec<f64>> {
    m.iter().map(|r| r.iter().map(Taylor::value).collect()).collect()
}

/// Inverse of a symmetric block with a degeneracy check naming the block.
pub(crate) fn invert_block(m: &Mat, block: &str, point: &[f64]) -> Result<Mat, GeomError> {
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let vals = values(m);
    let threshold = degeneracy_threshold(&vals);
    let degenerate = |det| GeomError::Degenerate {
        block: block.to_string(),
        point: point.to_vec(),
        det,
        threshold,
    };
    let (inv, det) = invert_general(m).map_err(|_| degenerate(0.0))?;
    if det.abs() < threshold || !det.is_finite() {
        return Err(degenerate(det));
    }
    Ok(inv)
}

/// Dimension bookkeeping: `n` horizontal coordinates followed by vertical shells.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub shells: Vec<usize>,
}

impl Layout {
    pub fn new(n: usize, shells: Vec<usize>) -> Layout {
        Layout { n, shells }
    }

    pub fn single(n: usize, m: usize) -> Layout {
        Layout { n, shells: vec![m] }
    }

    pub fn dim(&self) -> usize {
        self.n + self.m()
    }

    pub fn m(&self) -> usize {
        self.shells.iter().sum()
    }

    /// First coordinate index of shell `s` (equals the dimension of everything before it).
    pub fn offset(&self, s: usize) -> usize {
        self.n + self.shells[..s].iter().sum::<usize>()
    }
}

/// Block data of a d-metric at a point.
///
/// `nc[s][β][a]` couples shell `s` to every earlier coordinate `β`: the shell
/// coframe is `dy^a + Σ_β nc[s][β][a] du^β`.
#[derive(Clone, Debug)]
pub struct ShellJets {
    pub g: Mat,
    pub h: Vec<Mat>,
    pub nc: Vec<Mat>,
}

pub trait MetricModel: Send + Sync {
    fn layout(&self) -> Layout;
    fn shell_jets(&self, point: &[f64], order: usize) -> Result<ShellJets, GeomError>;
}

/// A d-metric: h-block, vertical shells and their N-coefficients.
#[derive(Clone)]
pub struct DMetric {
    model: Arc<dyn MetricModel>,
}

impl fmt::Debug for DMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DMetric({:?})", self.layout())
    }
}

/// A single h/v split of a d-metric, every entry a Taylor expansion in all coordinates.
#[derive(Clone, Debug)]
pub struct MetricJets {
    pub n: usize,
    pub m: usize,
    pub point: Vec<f64>,
    pub g: Mat,
    pub h: Mat,
    /// `nc[i][a]` = N_i^a.
    pub nc: Mat,
}

impl DMetric {
    pub fn new(model: impl MetricModel + 'static) -> DMetric {
        DMetric { model: Arc::new(model) }
    }

    pub fn from_arc(model: Arc<dyn MetricModel>) -> DMetric {
        DMetric { model }
    }

    pub fn layout(&self) -> Layout {
        self.model.layout()
    }

    pub fn dim(&self) -> usize {
        self.layout().dim()
    }

    pub fn shell_jets(&self, point: &[f64], order: usize) -> Result<ShellJets, GeomError> {
        let l = self.layout();
        if point.len() != l.dim() {
            return Err(JetError::DimensionMismatch { expected: l.dim(), got: point.len() }.into());
        }
        self.model.shell_jets(point, order)
    }

    /// Flattened split with every shell in the vertical part.
    pub fn jets(&self, point: &[f64], order: usize) -> Result<MetricJets, GeomError> {
        self.split_jets(point, order, 0)
    }

    /// Split with the base and shells `< k` horizontal and shells `>= k` vertical.
    pub fn split_jets(&self, point: &[f64], order: usize, k: usize) -> Result<MetricJets, GeomError> {
        let layout = self.layout();
        if k >= layout.shells.len() {
            return Err(GeomError::Shape(format!(
                "split at shell {k} but metric has {} shells",
                layout.shells.len()
            )));
        }
        let sj = self.shell_jets(point, order)?;
        Ok(flatten(&layout, &sj, point, k))
    }

    /// Coordinate-frame metric of the whole space.
    pub fn full_metric(&self, point: &[f64], order: usize) -> Result<Mat, GeomError> {
        Ok(self.jets(point, order)?.full_metric())
    }

    /// The sub-metric made of the base and the first `keep` shells.
    ///
    /// Dropped coordinates are held at `pad` (one value per dropped coordinate);
    /// the kept coefficients must not depend on them.
    pub fn truncated(&self, keep: usize, pad: Vec<f64>) -> Result<DMetric, GeomError> {
        let layout = self.layout();
        if keep == 0 || keep > layout.shells.len() {
            return Err(GeomError::Shape(format!("cannot keep {keep} shells")));
        }
        let kept = layout.offset(keep);
        if pad.len() != layout.dim() - kept {
            return Err(GeomError::Shape("pad length must match dropped coordinates".into()));
        }
        Ok(DMetric::new(Truncated { inner: self.clone(), keep, pad }))
    }
}

struct Truncated {
    inner: DMetric,
    keep: usize,
    pad: Vec<f64>,
}

impl MetricModel for Truncated {
    fn layout(&self) -> Layout {
        let l = self.inner.layout();
        Layout::new(l.n, l.shells[..self.keep].to_vec())
    }

    fn shell_jets(&self, point: &[f64], order: usize) -> Result<ShellJets, GeomError> {
        let mut full = point.to_vec();
        full.extend_from_slice(&self.pad);
        let sj = self.inner.shell_jets(&full, order)?;
        let keep: Vec<usize> = (0..point.len()).collect();
        let p = |m: &Mat| -> Mat { m.iter().map(|r| r.iter().map(|t| project(t, &keep)).collect()).collect() };
        Ok(ShellJets {
            g: p(&sj.g),
            h: sj.h[..self.keep].iter().map(p).collect(),
            nc: sj.nc[..self.keep].iter().map(p).collect(),
        })
    }
}

/// Coframe matrix `C` (rows = adapted coframe, columns = coordinate differentials)
/// and block-diagonal metric `B` with full metric `CᵀBC`.
fn coframe_and_blocks(layout: &Layout, sj: &ShellJets, proto: &Taylor) -> (Mat, Mat) {
    let d = layout.dim();
    let zero = proto.zero_like();
    let mut c = vec![vec![zero.clone(); d]; d];
    let mut b = vec![vec![zero.clone(); d]; d];
    for i in 0..d {
        c[i][i] = proto.const_like(1.0);
    }
    for i in 0..layout.n {
        for j in 0..layout.n {
            b[i][j] = sj.g[i][j].clone();
        }
    }
    for (s, &ds) in layout.shells.iter().enumerate() {
        let off = layout.offset(s);
        for a in 0..ds {
            for beta in 0..off {
                c[off + a][beta] = sj.nc[s][beta][a].clone();
            }
            for bb in 0..ds {
                b[off + a][off + bb] = sj.h[s][a][bb].clone();
            }
        }
    }
    (c, b)
}

/// `Xᵀ Y Z` restricted to row range `rows` of X/column range `cols` of Z.
fn congruence(x: &Mat, y: &Mat, z: &Mat, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>, inner: std::ops::Range<usize>) -> Mat {
    let mut out = Vec::new();
    for p in rows.clone() {
        let mut row = Vec::new();
        for q in cols.clone() {
            let mut acc = y[inner.start][inner.start].zero_like();
            for r in inner.clone() {
                if x[r][p].coeffs().iter().all(|v| *v == 0.0) {
                    continue;
                }
                for s in inner.clone() {
                    if z[s][q].coeffs().iter().all(|v| *v == 0.0) || y[r][s].coeffs().iter().all(|v| *v == 0.0) {
                        continue;
                    }
                    acc += &(&x[r][p] * &y[r][s]) * &z[s][q];
                }
            }
            row.push(acc);
        }
        out.push(row);
    }
    out
}

fn flatten(layout: &Layout, sj: &ShellJets, point: &[f64], k: usize) -> MetricJets {
    let d = layout.dim();
    let order = sj.g.first().and_then(|r| r.first()).map(Taylor::order).unwrap_or_else(|| sj.h[0][0][0].order());
    let proto = Taylor::constant(d, order, 0.0);
    let (c, b) = coframe_and_blocks(layout, sj, &proto);
    let p = layout.offset(k);
    let m = d - p;
    // horizontal: coordinate metric of the first p coordinates
    let g = congruence(&c, &b, &c, 0..p, 0..p, 0..p);
    // vertical: E unit lower-triangular, M the couplings to horizontal coordinates
    let e: Mat = (p..d).map(|r| c[r][p..d].to_vec()).collect();
    let mx: Mat = (p..d).map(|r| c[r][..p].to_vec()).collect();
    let hblk: Mat = (p..d).map(|r| b[r][p..d].to_vec()).collect();
    let h = congruence(&e, &hblk, &e, 0..m, 0..m, 0..m);
    // N = E⁻¹ M by forward substitution
    let mut nflat: Mat = vec![vec![proto.clone(); p]; m];
    for a in 0..m {
        for i in 0..p {
            let mut v = mx[a][i].clone();
            for bb in 0..a {
                if e[a][bb].coeffs().iter().any(|x| *x != 0.0) {
                    v -= &e[a][bb] * &nflat[bb][i];
                }
            }
            nflat[a][i] = v;
        }
    }
    let nc: Mat = (0..p).map(|i| (0..m).map(|a| nflat[a][i].clone()).collect()).collect();
    MetricJets { n: p, m, point: point.to_vec(), g, h, nc }
}

impl MetricJets {
    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn order(&self) -> usize {
        self.h.first().and_then(|r| r.first()).or_else(|| self.g.first().and_then(|r| r.first())).map(Taylor::order).unwrap_or(0)
    }

    pub fn proto(&self) -> Taylor {
        Taylor::constant(self.dim(), self.order(), 0.0)
    }

    pub fn g_inv(&self) -> Result<Mat, GeomError> {
        invert_block(&self.g, "h-block", &self.point)
    }

    pub fn h_inv(&self) -> Result<Mat, GeomError> {
        invert_block(&self.h, "v-block", &self.point)
    }

    /// N-adapted derivative `e_α f`; indices `< n` are horizontal.
    pub fn e(&self, f: &Taylor, alpha: usize) -> Taylor {
        if alpha >= self.n {
            return f.partial(alpha);
        }
        let mut r = f.partial(alpha);
        for a in 0..self.m {
            let na = &self.nc[alpha][a];
            if na.coeffs().iter().all(|v| *v == 0.0) {
                continue;
            }
            r -= na * &f.partial(self.n + a);
        }
        r
    }

    /// Assembled coordinate-frame metric: `[g + Nᵀ h N, Nᵀ h; h N, h]`.
    pub fn full_metric(&self) -> Mat {
        let (n, m) = (self.n, self.m);
        let mut out = zeros(self.dim(), self.order(), n + m, n + m);
        // hN[a][j] = Σ_b h_ab N_j^b
        let mut hn = zeros(self.dim(), self.order(), m, n);
        for a in 0..m {
            for j in 0..n {
                let mut acc = self.proto();
                for b in 0..m {
                    acc += &self.h[a][b] * &self.nc[j][b];
                }
                hn[a][j] = acc;
            }
        }
        for i in 0..n {
            for j in 0..n {
                let mut acc = self.g[i][j].clone();
                for a in 0..m {
                    acc += &self.nc[i][a] * &hn[a][j];
                }
                out[i][j] = acc;
            }
            for a in 0..m {
                out[i][n + a] = hn[a][i].clone();
                out[n + a][i] = hn[a][i].clone();
            }
        }
        for a in 0..m {
            for b in 0..m {
                out[n + a][n + b] = self.h[a][b].clone();
            }
        }
        out
    }

    /// Truncates every entry to `order`.
    pub fn truncate(&self, order: usize) -> MetricJets {
        let t = |m: &Mat| -> Mat { m.iter().map(|r| r.iter().map(|x| x.truncate(order)).collect()).collect() };
        MetricJets { n: self.n, m: self.m, point: self.point.clone(), g: t(&self.g), h: t(&self.h), nc: t(&self.nc) }
    }
}

type Slot = Option<Field>;

fn slot_taylor(s: &Slot, point: &[f64], order: usize) -> Result<Taylor, GeomError> {
    match s {
        Some(f) => Ok(f.taylor(point, order)?),
        None => Ok(Taylor::constant(point.len(), order, 0.0)),
    }
}

/// One vertical shell of a component-defined d-metric.
#[derive(Clone)]
pub struct Shell {
    /// Symmetric block; only entries with `a <= b` are read.
    pub h: Vec<Vec<Slot>>,
    /// `nc[β][a]` for every coordinate `β` before the shell.
    pub nc: Vec<Vec<Slot>>,
}

impl Shell {
    pub fn diagonal(h: Vec<Field>, prefix: usize) -> Shell {
        let d = h.len();
        let mut blk = vec![vec![None; d]; d];
        for (a, f) in h.into_iter().enumerate() {
            blk[a][a] = Some(f);
        }
        Shell { h: blk, nc: vec![vec![None; d]; prefix] }
    }

    pub fn set_n(&mut self, beta: usize, a: usize, f: Field) {
        self.nc[beta][a] = Some(f);
    }
}

/// A d-metric given coefficient by coefficient as scalar fields over all coordinates.
#[derive(Clone)]
pub struct ComponentMetric {
    layout: Layout,
    g: Vec<Vec<Slot>>,
    shells: Vec<Shell>,
}

impl ComponentMetric {
    pub fn new(g: Vec<Vec<Slot>>, shells: Vec<Shell>) -> Result<ComponentMetric, GeomError> {
        let n = g.len();
        if shells.is_empty() || shells.len() > 3 {
            return Err(GeomError::Shape(format!("1 to 3 shells supported, got {}", shells.len())));
        }
        let layout = Layout::new(n, shells.iter().map(|s| s.h.len()).collect());
        let dim = layout.dim();
        for (s, sh) in shells.iter().enumerate() {
            if sh.nc.len() != layout.offset(s) {
                return Err(GeomError::Shape(format!(
                    "shell {s} needs {} coupling rows, got {}",
                    layout.offset(s),
                    sh.nc.len()
                )));
            }
            if sh.nc.iter().any(|r| r.len() != sh.h.len()) || sh.h.iter().any(|r| r.len() != sh.h.len()) {
                return Err(GeomError::Shape(format!("shell {s} has ragged blocks")));
            }
        }
        if g.iter().any(|r| r.len() != n) {
            return Err(GeomError::Shape("h-block must be square".into()));
        }
        let all = g.iter().flatten().chain(shells.iter().flat_map(|s| s.h.iter().flatten().chain(s.nc.iter().flatten())));
        for f in all.flatten() {
            if f.dim() != dim {
                return Err(GeomError::Shape(format!("coefficient field of dim {} in {dim}-d metric", f.dim())));
            }
        }
        Ok(ComponentMetric { layout, g, shells })
    }

    pub fn diagonal(g: Vec<Field>, shells: Vec<Vec<Field>>) -> Result<ComponentMetric, GeomError> {
        let n = g.len();
        let mut gm = vec![vec![None; n]; n];
        for (i, f) in g.into_iter().enumerate() {
            gm[i][i] = Some(f);
        }
        let mut prefix = n;
        let mut out = Vec::new();
        for h in shells {
            let d = h.len();
            out.push(Shell::diagonal(h, prefix));
            prefix += d;
        }
        ComponentMetric::new(gm, out)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn shell_mut(&mut self, s: usize) -> &mut Shell {
        &mut self.shells[s]
    }

    pub fn set_g(&mut self, i: usize, j: usize, f: Field) {
        self.g[i.min(j)][i.max(j)] = Some(f);
    }

    pub fn into_dmetric(self) -> DMetric {
        DMetric::new(self)
    }
}

fn sym_block(b: &[Vec<Slot>], point: &[f64], order: usize) -> Result<Mat, GeomError> {
    let d = b.len();
    let mut out = zeros(point.len(), order, d, d);
    for i in 0..d {
        for j in i..d {
            let src = if b[i][j].is_some() { &b[i][j] } else { &b[j][i] };
            let t = slot_taylor(src, point, order)?;
            out[j][i] = t.clone();
            out[i][j] = t;
        }
    }
    Ok(out)
}

impl MetricModel for ComponentMetric {
    fn layout(&self) -> Layout {
        self.layout.clone()
    }

    fn shell_jets(&self, point: &[f64], order: usize) -> Result<ShellJets, GeomError> {
        let g = sym_block(&self.g, point, order)?;
        let mut h = Vec::new();
        let mut nc = Vec::new();
        for sh in &self.shells {
            h.push(sym_block(&sh.h, point, order)?);
            let rows: Result<Mat, GeomError> = sh
                .nc
                .iter()
                .map(|r| r.iter().map(|s| slot_taylor(s, point, order)).collect())
                .collect();
            nc.push(rows?);
        }
        Ok(ShellJets { g, h, nc })
    }
}

/// N-connection coefficients `N_i^a` as fields over `(x, y)`.
#[derive(Clone)]
pub struct NConnection {
    pub n: usize,
    pub m: usize,
    pub coeffs: Vec<Vec<Slot>>,
}

impl fmt::Debug for NConnection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NConnection({}x{})", self.n, self.m)
    }
}

struct FlatN {
    metric: DMetric,
    i: usize,
    a: usize,
}

impl ScalarField for FlatN {
    fn dim(&self) -> usize {
        self.metric.dim()
    }

    fn taylor(&self, point: &[f64], order: usize) -> Result<Taylor, JetError> {
        let j = self.metric.jets(point, order).map_err(|e| match e {
            GeomError::Jet(j) => j,
            other => JetError::Domain(other.to_string()),
        })?;
        Ok(j.nc[self.i][self.a].clone())
    }
}

impl NConnection {
    pub fn new(n: usize, m: usize, coeffs: Vec<Vec<Slot>>) -> Result<NConnection, GeomError> {
        if coeffs.len() != n || coeffs.iter().any(|r| r.len() != m) {
            return Err(GeomError::Shape(format!("N-connection must be {n}x{m}")));
        }
        for f in coeffs.iter().flatten().flatten() {
            if f.dim() != n + m {
                return Err(GeomError::Shape(format!("N coefficient of dim {} over {} coordinates", f.dim(), n + m)));
            }
        }
        Ok(NConnection { n, m, coeffs })
    }

    pub fn zero(n: usize, m: usize) -> NConnection {
        NConnection { n, m, coeffs: vec![vec![None; m]; n] }
    }

    /// The flattened N-connection of a d-metric.
    pub fn from_metric(g: &DMetric) -> NConnection {
        let l = g.layout();
        let (n, m) = (l.n, l.m());
        let coeffs = (0..n)
            .map(|i| {
                (0..m)
                    .map(|a| Some(Arc::new(FlatN { metric: g.clone(), i, a }) as Field))
                    .collect()
            })
            .collect();
        NConnection { n, m, coeffs }
    }

    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn jets(&self, point: &[f64], order: usize) -> Result<Mat, GeomError> {
        if point.len() != self.dim() {
            return Err(JetError::DimensionMismatch { expected: self.dim(), got: point.len() }.into());
        }
        self.coeffs
            .iter()
            .map(|r| r.iter().map(|s| slot_taylor(s, point, order)).collect())
            .collect()
    }

    /// Jets of a metric with unit blocks carrying this N-connection.
    pub(crate) fn as_metric_jets(&self, point: &[f64], order: usize) -> Result<MetricJets, GeomError> {
        let d = self.dim();
        let unit = |k: usize| -> Mat {
            (0..k).map(|i| (0..k).map(|j| Taylor::constant(d, order, if i == j { 1.0 } else { 0.0 })).collect()).collect()
        };
        Ok(MetricJets { n: self.n, m: self.m, point: point.to_vec(), g: unit(self.n), h: unit(self.m), nc: self.jets(point, order)? })
    }
}

/// N-adapted frame and coframe at a point, as coefficient matrices over coordinates.
///
/// Row `α` of `e_down` holds the components of `e_α` on `∂_μ`; row `α` of
/// `e_up` holds the components of `e^α` on `du^μ`.
#[derive(Clone, Debug, PartialEq)]
pub struct FramePack {
    pub e_down: Vec<Vec<f64>>,
    pub e_up: Vec<Vec<f64>>,
}

impl FramePack {
    pub fn duality_defect(&self) -> f64 {
        let d = self.e_down.len();
        let mut worst = 0.0f64;
        for a in 0..d {
            for b in 0..d {
                let s: f64 = (0..d).map(|mu| self.e_up[a][mu] * self.e_down[b][mu]).sum();
                let t = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((s - t).abs());
            }
        }
        worst
    }
}

pub(crate) fn frames_from_values(n: usize, m: usize, nv: &[Vec<f64>]) -> FramePack {
    let d = n + m;
    let mut e_down = vec![vec![0.0; d]; d];
    let mut e_up = vec![vec![0.0; d]; d];
    for a in 0..d {
        e_down[a][a] = 1.0;
        e_up[a][a] = 1.0;
    }
    for i in 0..n {
        for a in 0..m {
            e_down[i][n + a] = -nv[i][a];
            e_up[n + a][i] = nv[i][a];
        }
    }
    FramePack { e_down, e_up }
}

pub fn adapted_frames(nconn: &NConnection, point: &[f64]) -> Result<FramePack, GeomError> {
    let nv = values(&nconn.jets(point, 0)?);
    Ok(frames_from_values(nconn.n, nconn.m, &nv))
}

/// Commutator coefficients `[e_α, e_β] = w^γ_{αβ} e_γ`, stored as `w[γ][α][β]`.
#[derive(Clone, Debug)]
pub struct Anholonomy {
    pub n: usize,
    pub m: usize,
    pub w: Vec<Vec<Vec<f64>>>,
}

impl Anholonomy {
    pub fn max_abs(&self) -> f64 {
        self.w.iter().flatten().flatten().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// `Ω^a_{ij} = e_j(N_i^a) − e_i(N_j^a)` as Taylor expansions, stored `[a][i][j]`.
pub(crate) fn omega_jets(j: &MetricJets) -> Vec<Mat> {
    let (n, m) = (j.n, j.m);
    let proto = j.proto().truncate(j.order().saturating_sub(1));
    let mut out = vec![vec![vec![proto.clone(); n]; n]; m];
    for a in 0..m {
        for i in 0..n {
            for k in (i + 1)..n {
                let v = j.e(&j.nc[i][a], k) - j.e(&j.nc[k][a], i);
                out[a][k][i] = -&v;
                out[a][i][k] = v;
            }
        }
    }
    out
}

pub fn ncurvature(nconn: &NConnection, point: &[f64]) -> Result<Vec<Vec<Vec<f64>>>, GeomError> {
    let j = nconn.as_metric_jets(point, 1)?;
    Ok(omega_jets(&j).iter().map(values).collect())
}

pub fn anholonomy_coeffs(nconn: &NConnection, point: &[f64]) -> Result<Anholonomy, GeomError> {
    let j = nconn.as_metric_jets(point, 1)?;
    let (n, m) = (j.n, j.m);
    let d = n + m;
    let om = omega_jets(&j);
    let mut w = vec![vec![vec![0.0; d]; d]; d];
    for a in 0..m {
        for i in 0..n {
            for k in 0..n {
                w[n + a][i][k] = om[a][i][k].value();
            }
            for b in 0..m {
                // [e_i, ∂_b] = (∂_b N_i^a) ∂_a
                let v = j.nc[i][a].d1(n + b);
                w[n + a][i][n + b] = v;
                w[n + a][n + b][i] = -v;
            }
        }
    }
    Ok(Anholonomy { n, m, w })
}

/// The assembled coordinate metric of a d-metric at a point.
pub fn assemble_offdiagonal(g: &DMetric, point: &[f64]) -> Result<Vec<Vec<f64>>, GeomError> {
    Ok(values(&g.full_metric(point, 0)?))
}

pub fn nadapted_derivative(field: &dyn ScalarField, nconn: &NConnection, alpha: usize, point: &[f64]) -> Result<f64, GeomError> {
    if alpha >= nconn.dim() {
        return Err(GeomError::Shape(format!("frame index {alpha} out of range")));
    }
    let f = field.taylor(point, 1)?;
    if alpha >= nconn.n {
        return Ok(f.d1(alpha));
    }
    let nv = nconn.jets(point, 0)?;
    let mut r = f.d1(alpha);
    for a in 0..nconn.m {
        r -= nv[alpha][a].value() * f.d1(nconn.n + a);
    }
    Ok(r)
}
