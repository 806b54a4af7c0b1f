use std::path::PathBuf;

use super::config::{connection_kind, default_points, Evaluator, RunConfig};
use super::report::{export_csv, Cell, Table};
use super::{CliError, Command};
use crate::ansatzgen::{self, ResidualReport};
use crate::cosmo::{self, HubbleInit, SolitonParams};
use crate::dconn::{dconnection, ConnOptions};
use crate::dcurv::{curvature_pack, CurvOptions};
use crate::finsler_core::hessian_metric;

/// Command-line overrides; each wins over the config value.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub command: Command,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub tolerance: Option<f64>,
    /// Thread count from the environment, used when neither flag nor config sets one.
    pub env_threads: Option<String>,
}

impl RunOptions {
    pub fn new(command: Command, out: impl Into<PathBuf>) -> RunOptions {
        RunOptions { command, out: out.into(), threads: None, tolerance: None, env_threads: None }
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub exit: i32,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

pub const DEFAULT_TOLERANCE: f64 = 1e-6;

fn threads(cfg: &RunConfig, opts: &RunOptions) -> Result<Option<usize>, CliError> {
    let n = match (opts.threads, cfg.threads, &opts.env_threads) {
        (Some(n), _, _) | (None, Some(n), _) => Some(n),
        (None, None, Some(s)) => Some(
            s.trim().parse().map_err(|_| CliError::Input(format!("FINSLER_FORGE_THREADS = '{s}' is not a count")))?,
        ),
        _ => None,
    };
    if n == Some(0) {
        return Err(CliError::Input("threads must be positive".into()));
    }
    Ok(n)
}

pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<Outcome, CliError> {
    if let Some(c) = cfg.command {
        if c != opts.command {
            return Err(CliError::Input(format!(
                "config is for '{}' but '{}' was requested",
                c.name(),
                opts.command.name()
            )));
        }
    }
    let tolerance = opts.tolerance.or(cfg.tolerance).unwrap_or(DEFAULT_TOLERANCE);
    if !(tolerance > 0.0) {
        return Err(CliError::Input(format!("tolerance must be positive, got {tolerance}")));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads(cfg, opts)? {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    let (table, exit, summary) = pool.install(|| dispatch(cfg, opts.command, tolerance))?;
    std::fs::create_dir_all(&opts.out)?;
    let path = opts.out.join(format!("{}.csv", opts.command.name()));
    export_csv(&table, &path)?;
    Ok(Outcome { exit, files: vec![path], summary })
}

fn point_header(coords: &[String], tail: &[&str]) -> Table {
    let mut h = vec!["point".to_string()];
    h.extend(coords.iter().cloned());
    h.extend(tail.iter().map(|s| s.to_string()));
    Table::new(h)
}

fn point_cells(k: usize, p: &[f64]) -> Vec<Cell> {
    let mut row = vec![Cell::from(k)];
    row.extend(p.iter().map(|v| Cell::from(*v)));
    row
}

fn dispatch(cfg: &RunConfig, command: Command, tolerance: f64) -> Result<(Table, i32, String), CliError> {
    match command {
        Command::Hessian => hessian(cfg),
        Command::Connection => connection(cfg),
        Command::Curvature => curvature(cfg),
        Command::Verify => verify(cfg, tolerance),
        Command::CosmoEvolve => evolve(cfg),
        Command::CosmoClassify => classify(cfg),
        Command::Soliton => soliton(cfg),
    }
}

fn hessian(cfg: &RunConfig) -> Result<(Table, i32, String), CliError> {
    let (f, coords) = cfg.model()?.finsler()?;
    let points = default_points(cfg, coords.len())?;
    let fiber = &coords[f.n..];
    let mut t = point_header(&coords, &["i", "j", "value"]);
    for (k, p) in points.iter().enumerate() {
        let g = hessian_metric(&f, p)?;
        for (i, row) in g.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let mut r = point_cells(k, p);
                r.extend([fiber[i].as_str().into(), fiber[j].as_str().into(), (*v).into()]);
                t.push(r);
            }
        }
    }
    let summary = format!("hessian: {} points, {}x{} blocks", points.len(), fiber.len(), fiber.len());
    Ok((t, 0, summary))
}

fn connection(cfg: &RunConfig) -> Result<(Table, i32, String), CliError> {
    let model = cfg.model()?.build()?;
    let kind = connection_kind(cfg)?;
    let points = default_points(cfg, model.coords.len())?;
    let mut t = point_header(&model.coords, &["family", "upper", "lower1", "lower2", "value"]);
    for (k, p) in points.iter().enumerate() {
        let c = dconnection(kind, &model.metric, p, ConnOptions::default())?.values();
        let (h, v) = model.coords.split_at(c.lh.len());
        let families = [("L_h", &c.lh, [h, h, h]), ("L_v", &c.lv, [v, v, h]), ("C_h", &c.ch, [h, h, v]), ("C_v", &c.cv, [v, v, v])];
        for (name, vals, [up, lo1, lo2]) in families {
            for (a, plane) in vals.iter().enumerate() {
                for (b, line) in plane.iter().enumerate() {
                    for (d, val) in line.iter().enumerate() {
                        let mut r = point_cells(k, p);
                        r.extend([
                            name.into(),
                            up[a].as_str().into(),
                            lo1[b].as_str().into(),
                            lo2[d].as_str().into(),
                            (*val).into(),
                        ]);
                        t.push(r);
                    }
                }
            }
        }
    }
    Ok((t, 0, format!("connection ({kind:?}): {} points", points.len())))
}

fn curvature(cfg: &RunConfig) -> Result<(Table, i32, String), CliError> {
    let model = cfg.model()?.build()?;
    let kind = connection_kind(cfg)?;
    let points = default_points(cfg, model.coords.len())?;
    let mut t = point_header(&model.coords, &["quantity", "i", "j", "value"]);
    let names = &model.coords;
    for (k, p) in points.iter().enumerate() {
        let cp = curvature_pack(&model.metric, kind, ConnOptions::default(), CurvOptions::default(), p)?;
        let e = &cp.einstein;
        for (q, v) in [("scalar", e.scalar), ("h_scalar", e.h_scalar), ("v_scalar", e.v_scalar)] {
            let mut r = point_cells(k, p);
            r.extend([q.into(), "".into(), "".into(), v.into()]);
            t.push(r);
        }
        for (q, m) in [("ricci", cp.ricci.full()), ("einstein", e.einstein.clone())] {
            for (i, row) in m.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    let mut r = point_cells(k, p);
                    r.extend([q.into(), names[i].as_str().into(), names[j].as_str().into(), (*v).into()]);
                    t.push(r);
                }
            }
        }
    }
    Ok((t, 0, format!("curvature ({kind:?}): {} points", points.len())))
}

/// Evaluates the field equations of the configured model at the configured points.
pub fn residual_report(cfg: &RunConfig) -> Result<(ResidualReport, Vec<String>), CliError> {
    let model = cfg.model()?.build()?;
    let source = match (&cfg.source, model.source) {
        (Some(s), _) => s.build(&model.coords)?,
        (None, Some(s)) => s,
        (None, None) => return Err(CliError::Input("this model needs a [source] table".into())),
    };
    let evaluator = cfg.verify.clone().unwrap_or_default().evaluator(model.default_evaluator)?;
    let points = default_points(cfg, model.coords.len())?;
    let report = match evaluator {
        Evaluator::Separated(kind) => ansatzgen::residuals_separated(&model.metric, kind, &source, &points)?,
        Evaluator::Generic => {
            ansatzgen::residuals_generic(&model.metric, connection_kind(cfg)?, ConnOptions::default(), &source, &points)?
        }
        Evaluator::Shells8(reading) => ansatzgen::residuals_8d(&model.metric, &source, &points, reading)?,
    };
    Ok((report, model.coords))
}

fn verify(cfg: &RunConfig, tolerance: f64) -> Result<(Table, i32, String), CliError> {
    let (report, coords) = residual_report(cfg)?;
    let mut header = vec!["equation".to_string(), "max_residual".to_string(), "status".to_string()];
    header.extend(coords.iter().map(|c| format!("argmax_{c}")));
    let mut t = Table::new(header);
    let mut violated = Vec::new();
    for e in &report.equations {
        let ok = e.max_abs <= tolerance;
        if !ok {
            violated.push(e.id.clone());
        }
        let mut r = vec![e.id.as_str().into(), e.max_abs.into(), if ok { "pass" } else { "fail" }.into()];
        r.extend(e.argmax.iter().map(|v| Cell::from(*v)));
        t.push(r);
    }
    let summary = if violated.is_empty() {
        format!("verify: {} equations within {tolerance:e} (max {:e})", report.equations.len(), report.max_residual())
    } else {
        format!("verify: residual above {tolerance:e} in {}", violated.join(", "))
    };
    Ok((t, if violated.is_empty() { 0 } else { 1 }, summary))
}

fn evolve(cfg: &RunConfig) -> Result<(Table, i32, String), CliError> {
    let s = cfg.cosmo.as_ref().ok_or_else(|| CliError::Input("missing [cosmo] table".into()))?;
    let init = HubbleInit {
        ha: s.ha,
        va: s.va,
        rho0: s.rho0,
        h_omega: s.h_omega,
        v_omega: s.v_omega,
        ..HubbleInit::new(s.hh, s.vh)
    };
    let traj = cosmo::integrate_trajectory(&init, (s.t0, s.t1), s.dt)?;
    let mut t = Table::new(cosmo::Sample::HEADER);
    for sample in &traj.samples {
        t.push(sample.row().iter().map(|v| Cell::from(*v)).collect());
    }
    let summary = match traj.blowup {
        Some(at) => format!("cosmo-evolve: rates exceed {:e} after t = {at} (finite-time singularity)", cosmo::BLOWUP),
        None => format!("cosmo-evolve: {} samples, final gamma {}", traj.samples.len(), traj.last().gamma),
    };
    Ok((t, 0, summary))
}

fn classify(cfg: &RunConfig) -> Result<(Table, i32, String), CliError> {
    let c = cfg.classify.as_ref().ok_or_else(|| CliError::Input("missing [classify] table".into()))?;
    let mut gammas = c.gammas.clone().unwrap_or_default();
    if let Some((a, b, n)) = c.range {
        if n < 2 {
            return Err(CliError::Input("classify.range needs at least 2 samples".into()));
        }
        gammas.extend((0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64));
    }
    if gammas.is_empty() {
        return Err(CliError::Input("classify needs gammas or range".into()));
    }
    let map = cosmo::regime_map(&gammas)?;
    let mut t = Table::new(["gamma0", "label", "printed"]);
    for r in &map {
        let printed: Vec<&str> = r.literal.iter().map(|l| l.label()).collect();
        let printed = if printed.is_empty() { "none".to_string() } else { printed.join("|") };
        t.push(vec![r.gamma0.into(), r.regime.label().into(), printed.into()]);
    }
    Ok((t, 0, format!("cosmo-classify: {} initial fractions", map.len())))
}

fn soliton(cfg: &RunConfig) -> Result<(Table, i32, String), CliError> {
    let s = cfg.soliton.as_ref().ok_or_else(|| CliError::Input("missing [soliton] table".into()))?;
    let mut t = Table::new(["kappa", "l", "eps_sign", "omega", "residual"]);
    let mut worst = 0.0f64;
    for &(kappa, l, eps_sign) in &s.cases {
        let sol = cosmo::kp_line_soliton(&SolitonParams::new(kappa, l, eps_sign))?;
        worst = worst.max(sol.residual);
        t.push(vec![kappa.into(), l.into(), eps_sign.into(), sol.params.omega.into(), sol.residual.into()]);
    }
    Ok((t, 0, format!("soliton: {} cases, max residual {worst:e}", s.cases.len())))
}
