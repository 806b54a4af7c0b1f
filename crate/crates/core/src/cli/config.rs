//! Run configuration: one TOML document per run.

use std::str::FromStr;

use serde::Deserialize;

use super::expr::parse_field;
use super::CliError;
use crate::ansatzgen::{
    self, CosmoRecipe4d, DiagfansParams, FormulaReading, Frame8, SeparatedKind, SolutionRecipe, Source,
    ThirdShellReading,
};
use crate::cosmo::{self, SolitonParams};
use crate::dconn::ConnectionKind;
use crate::finsler_core::{self, FinslerFunction};
use crate::jetcalc::{constant, Field};
use crate::nholon::{ComponentMetric, DMetric, GeomError, Layout, MetricModel, Shell, ShellJets};

pub const SPEC_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Hessian,
    Connection,
    Curvature,
    Verify,
    CosmoEvolve,
    CosmoClassify,
    Soliton,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Hessian => "hessian",
            Command::Connection => "connection",
            Command::Curvature => "curvature",
            Command::Verify => "verify",
            Command::CosmoEvolve => "cosmo-evolve",
            Command::CosmoClassify => "cosmo-classify",
            Command::Soliton => "soliton",
        }
    }
}

impl FromStr for Command {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Command, CliError> {
        use clap::ValueEnum;
        Command::value_variants()
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| CliError::Input(format!("unknown command '{s}'")))
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub spec_version: u32,
    pub command: Option<Command>,
    pub threads: Option<usize>,
    pub tolerance: Option<f64>,
    pub model: Option<ModelSpec>,
    pub points: Option<PointSpec>,
    pub connection: Option<String>,
    pub source: Option<SourceSpec>,
    pub verify: Option<VerifySpec>,
    pub cosmo: Option<EvolveSpec>,
    pub classify: Option<ClassifySpec>,
    pub soliton: Option<SolitonSpec>,
}

/// Either a diagonal list or a full (upper triangle read) matrix of expressions.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum Block {
    Diagonal(Vec<String>),
    Full(Vec<Vec<String>>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShellSpec {
    pub h: Block,
    /// `n[β][a]`, one row per earlier coordinate.
    pub n: Option<Vec<Vec<String>>>,
}

/// Model table: a `kind`-tagged generator plus an optional relative
/// perturbation of the first vertical coefficient, for negative checks.
#[derive(Clone, Debug, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    pub perturb: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Inline {
        coords: Vec<String>,
        horizontal: usize,
        g: Block,
        #[serde(default)]
        shell: Vec<ShellSpec>,
    },
    Finsler {
        /// Base coordinates followed by fiber coordinates.
        coords: Vec<String>,
        base: usize,
        f2: String,
    },
    Sol1 {
        #[serde(default = "sol1_coords")]
        coords: Vec<String>,
        psi: String,
        f: String,
        f0: Option<String>,
        h0: Option<String>,
        sigma0: Option<String>,
        upsilon4: Option<String>,
        #[serde(default)]
        w0: Vec<String>,
        #[serde(default)]
        n0: Vec<String>,
        eps: Option<[f64; 4]>,
        reading: Option<String>,
        v_lower: Option<f64>,
    },
    Cosmo4d {
        scale: String,
        psi: String,
        f: String,
        f0: Option<String>,
        #[serde(default)]
        w0: Vec<String>,
        #[serde(default)]
        n0: Vec<String>,
        upsilon4: Option<f64>,
        reading: Option<String>,
        theta_lower: Option<f64>,
    },
    Diagfans {
        ha: String,
        va: String,
        hk: Option<f64>,
        vk: Option<f64>,
        eps1: Option<f64>,
        frame: Option<String>,
    },
    Solitonic {
        ha: String,
        va: String,
        hk: Option<f64>,
        vk: Option<f64>,
        eps1: Option<f64>,
        kappa: f64,
        l: f64,
        eps_sign: f64,
        eps: f64,
    },
}

fn sol1_coords() -> Vec<String> {
    ["x1", "x2", "v", "y"].map(String::from).to_vec()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PointSpec {
    /// `n` points per axis including both ends.
    Grid { domain: Vec<[f64; 2]>, n: usize },
    /// Halton sequence; `seed` is the number of leading terms skipped.
    Halton { domain: Vec<[f64; 2]>, count: usize, #[serde(default)] seed: u64 },
    List { points: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub horizontal: String,
    pub shells: Vec<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    /// `separated` (default), `generic` or `shells8`.
    pub evaluator: Option<String>,
    /// Connection family of the separated equations: `canonical` or `hv`.
    pub separated: Option<String>,
    /// Third-shell reading for `shells8`: `structural` or `literal`.
    pub reading: Option<String>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveSpec {
    pub hh: f64,
    pub vh: f64,
    #[serde(default = "one")]
    pub ha: f64,
    #[serde(default = "one")]
    pub va: f64,
    #[serde(default = "one")]
    pub rho0: f64,
    #[serde(default)]
    pub h_omega: f64,
    #[serde(default)]
    pub v_omega: f64,
    #[serde(default)]
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySpec {
    pub gammas: Option<Vec<f64>>,
    /// `[start, end, count]`, evenly spaced and inclusive.
    pub range: Option<(f64, f64, usize)>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonSpec {
    pub cases: Vec<(f64, f64, f64)>,
}

/// Turns a TOML error span into `line:column`.
fn locate(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    (before.matches('\n').count() + 1, before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1)
}

impl RunConfig {
    pub fn parse(src: &str, origin: &str) -> Result<RunConfig, CliError> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| locate(src, s.start));
            CliError::Parse { at: format!("{origin}:{line}:{column}"), message: e.message().to_string() }
        })?;
        if cfg.spec_version != SPEC_VERSION {
            return Err(CliError::Input(format!(
                "{origin}: spec_version {} is not supported (expected {SPEC_VERSION})",
                cfg.spec_version
            )));
        }
        Ok(cfg)
    }

    pub fn model(&self) -> Result<&ModelSpec, CliError> {
        self.model.as_ref().ok_or_else(|| CliError::Input("missing [model] table".into()))
    }
}

fn field(key: &str, src: &str, coords: &[&str]) -> Result<Field, CliError> {
    parse_field(src, coords).map_err(|e| CliError::Parse {
        at: format!("{key}:{}:{}", e.line, e.column),
        message: format!("{} in '{src}'", e.message),
    })
}

fn opt_field(key: &str, src: &Option<String>, coords: &[&str], default: f64) -> Result<Field, CliError> {
    match src {
        Some(s) => field(key, s, coords),
        None => Ok(constant(coords.len(), default)),
    }
}

fn fields(key: &str, srcs: &[String], coords: &[&str]) -> Result<Vec<Field>, CliError> {
    srcs.iter().enumerate().map(|(k, s)| field(&format!("{key}[{k}]"), s, coords)).collect()
}

fn names(coords: &[String]) -> Vec<&str> {
    coords.iter().map(String::as_str).collect()
}

fn parse_enum<T: FromStr>(key: &str, s: &Option<String>, default: T) -> Result<T, CliError> {
    match s {
        None => Ok(default),
        Some(s) => s.parse().map_err(|_| CliError::Input(format!("{key}: unknown value '{s}'"))),
    }
}

fn reading(key: &str, s: &Option<String>) -> Result<FormulaReading, CliError> {
    match s.as_deref() {
        None | Some("exact") => Ok(FormulaReading::Exact),
        Some("printed") => Ok(FormulaReading::Printed),
        Some(other) => Err(CliError::Input(format!("{key}: unknown reading '{other}' (exact, printed)"))),
    }
}

/// Optional `"0"`/empty entries leave a slot unset.
fn slot(key: &str, src: &str, coords: &[&str]) -> Result<Option<Field>, CliError> {
    let t = src.trim();
    if t.is_empty() || t == "0" {
        Ok(None)
    } else {
        field(key, t, coords).map(Some)
    }
}

fn block(key: &str, b: &Block, coords: &[&str]) -> Result<Vec<Vec<Option<Field>>>, CliError> {
    match b {
        Block::Diagonal(d) => {
            let mut out = vec![vec![None; d.len()]; d.len()];
            for (i, s) in d.iter().enumerate() {
                out[i][i] = slot(&format!("{key}[{i}]"), s, coords)?;
            }
            Ok(out)
        }
        Block::Full(rows) => {
            let n = rows.len();
            if rows.iter().any(|r| r.len() != n) {
                return Err(CliError::Input(format!("{key}: matrix must be square")));
            }
            let mut out = vec![vec![None; n]; n];
            for i in 0..n {
                for j in i..n {
                    out[i][j] = slot(&format!("{key}[{i}][{j}]"), &rows[i][j], coords)?;
                }
            }
            Ok(out)
        }
    }
}

fn diagfans_params(ha: &str, va: &str, hk: Option<f64>, vk: Option<f64>, eps1: Option<f64>) -> Result<DiagfansParams, CliError> {
    let t = ["t"];
    let mut p = DiagfansParams::new(field("model.ha", ha, &t)?, field("model.va", va, &t)?);
    p.hk = hk.unwrap_or(0.0);
    p.vk = vk.unwrap_or(0.0);
    p.eps1 = eps1.unwrap_or(1.0);
    Ok(p)
}

/// A metric built from the model table, its coordinate names and, for
/// generated solutions, the matching source.
pub struct BuiltModel {
    pub metric: DMetric,
    pub coords: Vec<String>,
    pub source: Option<Source>,
    pub default_evaluator: Evaluator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Evaluator {
    Separated(SeparatedKind),
    Generic,
    Shells8(ThirdShellReading),
}

struct Perturbed {
    inner: DMetric,
    factor: f64,
}

impl MetricModel for Perturbed {
    fn layout(&self) -> Layout {
        self.inner.layout()
    }

    fn shell_jets(&self, point: &[f64], order: usize) -> Result<ShellJets, GeomError> {
        let mut sj = self.inner.shell_jets(point, order)?;
        sj.h[0][0][0] = &sj.h[0][0][0] * self.factor;
        Ok(sj)
    }
}

impl ModelSpec {
    pub fn finsler(&self) -> Result<(FinslerFunction, Vec<String>), CliError> {
        self.kind.finsler()
    }

    pub fn build(&self) -> Result<BuiltModel, CliError> {
        let mut m = self.kind.build()?;
        if let Some(eps) = self.perturb {
            m.metric = DMetric::new(Perturbed { inner: m.metric, factor: 1.0 + eps });
        }
        Ok(m)
    }
}

impl ModelKind {
    pub fn finsler(&self) -> Result<(FinslerFunction, Vec<String>), CliError> {
        match self {
            ModelKind::Finsler { coords, base, f2 } => {
                if coords.len() != 2 * base {
                    return Err(CliError::Input("model.coords must list base then fiber coordinates".into()));
                }
                let f2 = field("model.f2", f2, &names(coords))?;
                Ok((FinslerFunction::new(*base, coords.len() - base, f2)?, coords.clone()))
            }
            _ => Err(CliError::Input("this command needs a model of kind 'finsler'".into())),
        }
    }

    pub fn build(&self) -> Result<BuiltModel, CliError> {
        let separated = |kind| Evaluator::Separated(kind);
        Ok(match self {
            ModelKind::Inline { coords, horizontal, g, shell } => {
                let c = names(coords);
                let g = block("model.g", g, &c)?;
                if g.len() != *horizontal {
                    return Err(CliError::Input(format!("model.g is {}x{0}, horizontal = {horizontal}", g.len())));
                }
                let mut shells = Vec::new();
                let mut prefix = *horizontal;
                for (s, spec) in shell.iter().enumerate() {
                    let h = block(&format!("model.shell[{s}].h"), &spec.h, &c)?;
                    let d = h.len();
                    let mut sh = Shell { h, nc: vec![vec![None; d]; prefix] };
                    if let Some(rows) = &spec.n {
                        if rows.len() != prefix || rows.iter().any(|r| r.len() != d) {
                            return Err(CliError::Input(format!("model.shell[{s}].n must be {prefix} rows of {d}")));
                        }
                        for (beta, row) in rows.iter().enumerate() {
                            for (a, src) in row.iter().enumerate() {
                                if let Some(f) = slot(&format!("model.shell[{s}].n[{beta}][{a}]"), src, &c)? {
                                    sh.set_n(beta, a, f);
                                }
                            }
                        }
                    }
                    prefix += d;
                    shells.push(sh);
                }
                if prefix != coords.len() {
                    return Err(CliError::Input(format!("blocks cover {prefix} coordinates, model.coords has {}", coords.len())));
                }
                let metric = ComponentMetric::new(g, shells)?.into_dmetric();
                BuiltModel { metric, coords: coords.clone(), source: None, default_evaluator: Evaluator::Generic }
            }
            ModelKind::Finsler { .. } => {
                let (f, coords) = self.finsler()?;
                let metric = finsler_core::sasaki_lift(&f)?;
                BuiltModel { metric, coords, source: None, default_evaluator: Evaluator::Generic }
            }
            ModelKind::Sol1 { coords, psi, f, f0, h0, sigma0, upsilon4, w0, n0, eps, reading: rd, v_lower } => {
                let c = names(coords);
                if c.len() != 4 {
                    return Err(CliError::Input("model.coords: the separated ansatz has 4 coordinates".into()));
                }
                let mut r = SolutionRecipe::new(field("model.psi", psi, &c)?, field("model.f", f, &c)?);
                r.f0 = opt_field("model.f0", f0, &c, 0.0)?;
                r.h0 = opt_field("model.h0", h0, &c, 1.0)?;
                r.sigma0 = opt_field("model.sigma0", sigma0, &c, 1.0)?;
                r.upsilon4 = opt_field("model.upsilon4", upsilon4, &c, 0.0)?;
                r.w0 = fields("model.w0", w0, &c)?;
                r.n0 = fields("model.n0", n0, &c)?;
                r.eps = eps.unwrap_or([1.0; 4]);
                r.reading = reading("model.reading", rd)?;
                r.v_lower = v_lower.unwrap_or(0.0);
                let metric = ansatzgen::generate_sol1(&r)?;
                BuiltModel {
                    metric,
                    coords: coords.clone(),
                    source: Some(r.source()),
                    default_evaluator: separated(SeparatedKind::Hv),
                }
            }
            ModelKind::Cosmo4d { scale, psi, f, f0, w0, n0, upsilon4, reading: rd, theta_lower } => {
                let c = ansatzgen::COSMO4_COORDS;
                let mut r = CosmoRecipe4d::new(field("model.scale", scale, &c)?, field("model.psi", psi, &c)?, field("model.f", f, &c)?);
                r.f0 = opt_field("model.f0", f0, &c, 0.0)?;
                r.w0 = fields("model.w0", w0, &c)?;
                r.n0 = fields("model.n0", n0, &c)?;
                r.upsilon4 = upsilon4.unwrap_or(0.0);
                r.reading = reading("model.reading", rd)?;
                if let Some(t) = theta_lower {
                    r.theta_lower = *t;
                }
                let metric = ansatzgen::generate_4d_cosmo(&r)?;
                BuiltModel {
                    metric,
                    coords: c.map(String::from).to_vec(),
                    source: Some(r.source()),
                    default_evaluator: separated(SeparatedKind::Hv),
                }
            }
            ModelKind::Diagfans { ha, va, hk, vk, eps1, frame } => {
                let p = diagfans_params(ha, va, *hk, *vk, *eps1)?;
                let frame = match frame.as_deref() {
                    None | Some("shells") => Frame8::Shells,
                    Some("solitonic") => Frame8::Solitonic,
                    Some(other) => return Err(CliError::Input(format!("model.frame: unknown frame '{other}'"))),
                };
                let evaluator = match frame {
                    Frame8::Shells => Evaluator::Shells8(ThirdShellReading::Structural),
                    Frame8::Solitonic => Evaluator::Generic,
                };
                BuiltModel {
                    metric: ansatzgen::diagfans(&p, frame)?,
                    coords: frame.coords().map(String::from).to_vec(),
                    source: None,
                    default_evaluator: evaluator,
                }
            }
            ModelKind::Solitonic { ha, va, hk, vk, eps1, kappa, l, eps_sign, eps } => {
                let p = diagfans_params(ha, va, *hk, *vk, *eps1)?;
                let sol = cosmo::kp_line_soliton(&SolitonParams::new(*kappa, *l, *eps_sign))?;
                BuiltModel {
                    metric: ansatzgen::generate_8d_solitonic(&p, &sol.field, *eps)?,
                    coords: Frame8::Solitonic.coords().map(String::from).to_vec(),
                    source: None,
                    default_evaluator: Evaluator::Generic,
                }
            }
        })
    }
}

impl SourceSpec {
    pub fn build(&self, coords: &[String]) -> Result<Source, CliError> {
        let c = names(coords);
        Ok(Source::new(field("source.horizontal", &self.horizontal, &c)?, fields("source.shells", &self.shells, &c)?))
    }
}

impl VerifySpec {
    pub fn evaluator(&self, default: Evaluator) -> Result<Evaluator, CliError> {
        Ok(match self.evaluator.as_deref() {
            None => match (default, &self.separated, &self.reading) {
                (Evaluator::Separated(k), s, _) => Evaluator::Separated(parse_enum("verify.separated", s, k)?),
                (Evaluator::Shells8(r), _, rd) => Evaluator::Shells8(third_reading(rd, r)?),
                (e, _, _) => e,
            },
            Some("separated") => Evaluator::Separated(parse_enum("verify.separated", &self.separated, SeparatedKind::Canonical)?),
            Some("generic") => Evaluator::Generic,
            Some("shells8") => Evaluator::Shells8(third_reading(&self.reading, ThirdShellReading::Structural)?),
            Some(other) => {
                return Err(CliError::Input(format!("verify.evaluator: unknown '{other}' (separated, generic, shells8)")))
            }
        })
    }
}

fn third_reading(s: &Option<String>, default: ThirdShellReading) -> Result<ThirdShellReading, CliError> {
    match s.as_deref() {
        None => Ok(default),
        Some("structural") => Ok(ThirdShellReading::Structural),
        Some("literal") => Ok(ThirdShellReading::Literal),
        Some(other) => Err(CliError::Input(format!("verify.reading: unknown '{other}' (structural, literal)"))),
    }
}

pub fn connection_kind(cfg: &RunConfig) -> Result<ConnectionKind, CliError> {
    parse_enum("connection", &cfg.connection, ConnectionKind::Canonical)
}

fn halton(mut index: u64, base: u64) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

const PRIMES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn check_domain(domain: &[[f64; 2]], dim: usize) -> Result<(), CliError> {
    if domain.len() != dim {
        return Err(CliError::Input(format!("points.domain has {} axes, the model has {dim} coordinates", domain.len())));
    }
    for (k, [lo, hi]) in domain.iter().enumerate() {
        if !(lo < hi) {
            return Err(CliError::Input(format!("points.domain[{k}] = [{lo}, {hi}] is degenerate")));
        }
    }
    Ok(())
}

impl PointSpec {
    pub fn points(&self, dim: usize) -> Result<Vec<Vec<f64>>, CliError> {
        match self {
            PointSpec::Grid { domain, n } => {
                check_domain(domain, dim)?;
                if *n < 2 {
                    return Err(CliError::Input("points.n must be at least 2".into()));
                }
                let total = n.pow(dim as u32);
                Ok((0..total)
                    .map(|mut idx| {
                        domain
                            .iter()
                            .rev()
                            .map(|[lo, hi]| {
                                let k = idx % n;
                                idx /= n;
                                lo + (hi - lo) * k as f64 / (n - 1) as f64
                            })
                            .collect::<Vec<_>>()
                            .into_iter()
                            .rev()
                            .collect()
                    })
                    .collect())
            }
            PointSpec::Halton { domain, count, seed } => {
                check_domain(domain, dim)?;
                if dim > PRIMES.len() {
                    return Err(CliError::Input(format!("Halton points support up to {} coordinates", PRIMES.len())));
                }
                Ok((0..*count as u64)
                    .map(|i| {
                        domain.iter().zip(PRIMES).map(|([lo, hi], b)| lo + (hi - lo) * halton(i + seed + 1, b)).collect()
                    })
                    .collect())
            }
            PointSpec::List { points } => {
                if let Some(p) = points.iter().find(|p| p.len() != dim) {
                    return Err(CliError::Input(format!("point {p:?} does not have {dim} coordinates")));
                }
                Ok(points.clone())
            }
        }
    }
}

pub(crate) fn default_points(cfg: &RunConfig, dim: usize) -> Result<Vec<Vec<f64>>, CliError> {
    cfg.points.as_ref().ok_or_else(|| CliError::Input("missing [points] table".into()))?.points(dim)
}
