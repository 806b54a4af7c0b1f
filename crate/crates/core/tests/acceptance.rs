//! Acceptance run: one line per criterion with the measured figure and the runtime.
//!
//! Exits non-zero when any criterion fails. Criteria 3 and 6 are expected to fail;
//! see the notes printed with them.

use std::cell::RefCell;
use std::collections::HashMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use finsler_forge::ansatzgen::{
    diagfans, generate_4d_cosmo, generate_8d_solitonic, generate_sol1, residuals_generic, residuals_separated,
    CosmoRecipe4d, DiagfansParams, Frame8, SeparatedKind, SolutionRecipe, Source,
};
use finsler_forge::cli::config::PointSpec;
use finsler_forge::cli::expr::parse_field;
use finsler_forge::cosmo::{self, CosmoParams, CosmoState, HubbleInit, SolitonParams};
use finsler_forge::dconn::{
    check_lc_conditions, connection_from_jets, distortion_identity_residual, distortion_tensor, ConnOptions, ConnectionKind,
    DistortionReading,
};
use finsler_forge::dcurv::{coordinate_einstein_adapted, curvature_pack, nonmetricity_from, torsion_from, CurvOptions};
use finsler_forge::finsler_core::{sasaki_lift, FinslerFunction};
use finsler_forge::jetcalc::{fd_gradient, fd_hessian, Field, Taylor};
use finsler_forge::nholon::{ComponentMetric, DMetric, GeomError, Layout, MetricModel, ShellJets};

type Res<T> = Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// Test-metric corpus.

const SOL1_VARS: [&str; 4] = ["x1", "x2", "v", "y"];
const COSMO_VARS: [&str; 4] = ["r", "t", "theta", "phi"];

fn ex(src: &str, vars: &[&str]) -> Field {
    parse_field(src, vars).unwrap_or_else(|e| panic!("{src}: {e}"))
}

fn halton(domain: &[[f64; 2]], count: usize, seed: u64) -> Vec<Vec<f64>> {
    PointSpec::Halton { domain: domain.to_vec(), count, seed }.points(domain.len()).expect("valid domain")
}

const BOX: [[f64; 2]; 4] = [[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]];
const FIBER_BOX: [[f64; 2]; 4] = [[-1.0, 1.0], [-1.0, 1.0], [0.5, 1.5], [0.5, 1.5]];
const SOL1_BOX: [[f64; 2]; 4] = [[-0.3, 0.7], [-0.4, 0.9], [0.6, 1.4], [-0.3, 0.5]];
const COSMO_BOX: [[f64; 2]; 4] = [[0.9, 1.2], [0.1, 0.6], [0.65, 0.95], [-0.5, 0.5]];

fn diagonal(g: [&str; 2], h: [&str; 2], vars: &[&str]) -> ComponentMetric {
    ComponentMetric::diagonal(vec![ex(g[0], vars), ex(g[1], vars)], vec![vec![ex(h[0], vars), ex(h[1], vars)]])
        .expect("diagonal blocks")
}

const XY: [&str; 4] = ["x1", "x2", "y1", "y2"];

fn flat() -> DMetric {
    diagonal(["1", "1"], ["1", "1"], &XY).into_dmetric()
}

fn conformal() -> DMetric {
    let psi = "exp(0.3 * x1 + 0.2 * sin(x2))";
    diagonal([psi, psi], ["1", "1"], &XY).into_dmetric()
}

fn quartic_lift() -> DMetric {
    let f2 = ex("sqrt(y1^4 + y2^4) * exp(0.3 * x1 + 0.1 * x2)", &XY);
    sasaki_lift(&FinslerFunction::new(2, 2, f2).expect("finsler function")).expect("lift")
}

/// x- and y-dependent blocks with two N-coefficients.
fn off_diagonal() -> DMetric {
    let mut cm = diagonal(["exp(0.3 * x1 + 0.2 * y1)", "2 + 0.1 * x1"], ["exp(0.2 * x2 + 0.1 * y2)", "1 + 0.1 * x1^2 + 0.2 * y1"], &XY);
    cm.shell_mut(0).set_n(0, 0, ex("0.3 * x2 + 0.2 * y1 * x1", &XY));
    cm.shell_mut(0).set_n(1, 1, ex("0.4 * sin(x1) + 0.1 * y2", &XY));
    cm.into_dmetric()
}

/// `N_i^a = −∂_i φ^a(x)` and `h = H(y − φ(x))`: the constraints for Levi-Civita extraction hold.
fn lc_metric() -> DMetric {
    let phi0 = "(0.5 * sin(x1) + 0.2 * x1 * x2)";
    let phi1 = "(0.3 * x2^2)";
    let mut cm = diagonal(
        ["-exp(0.2 * x2)", "(exp(x1) + exp(-x1)) / 2"],
        [&format!("exp(0.4 * (y1 - {phi0}))"), &format!("1 + 0.3 * (y2 - {phi1})^2")],
        &XY,
    );
    cm.shell_mut(0).set_n(0, 0, ex("-(0.5 * cos(x1) + 0.2 * x2)", &XY));
    cm.shell_mut(0).set_n(1, 0, ex("-0.2 * x1", &XY));
    cm.shell_mut(0).set_n(1, 1, ex("-0.6 * x2", &XY));
    cm.into_dmetric()
}

struct Sol1Data {
    psi: &'static str,
    f: &'static str,
    f0: &'static str,
    h0: &'static str,
    upsilon4: &'static str,
    w0: [&'static str; 2],
    n0: [&'static str; 2],
    eps: [f64; 4],
}

const SOL1_DATA: [Sol1Data; 5] = [
    Sol1Data {
        psi: "0.2 * sin(x1) * cos(x2)",
        f: "v + 0.3 * x1 * v^2 + 0.1 * cos(x2) * v",
        f0: "-1 - 0.1 * sin(x2)",
        h0: "1 + 0.2 * x2^2",
        upsilon4: "0.4 + 0.1 * sin(x1)",
        w0: ["0.3 + 0.1 * x1", "-0.2"],
        n0: ["0.5", "sin(x2)"],
        eps: [1.0; 4],
    },
    Sol1Data {
        psi: "0.3 * exp(-x1^2) * x2",
        f: "v + 0.2 * v^2 * (1 + 0.1 * cos(x1))",
        f0: "-1.2",
        h0: "1",
        upsilon4: "0.4",
        w0: ["0.1 * x2", "0.2"],
        n0: ["0.1", "0.2 * x1"],
        eps: [1.0; 4],
    },
    Sol1Data {
        psi: "0.1 * sin(x1 + x2) + 0.05 * x1^2",
        f: "exp(0.5 * v) * (1 + 0.1 * x2)",
        f0: "-0.2",
        h0: "1.5",
        upsilon4: "0.1 + 0.02 * x2",
        w0: ["0", "0.1"],
        n0: ["0.3 * cos(x1)", "0"],
        eps: [1.0, -1.0, 1.0, 1.0],
    },
    Sol1Data {
        psi: "0.2 * log(1 + x1^2 + x2^2)",
        f: "v + 0.4 * v^2 + 0.2 * v^3 + 0.1 * sin(x1) * v",
        f0: "-1 + 0.1 * x2",
        h0: "1 + 0.1 * cos(x1)",
        upsilon4: "0.1 + 0.05 * cos(x1)",
        w0: ["-0.1", "0.2 * x1"],
        n0: ["0.2", "0.1 * x2"],
        eps: [1.0; 4],
    },
    Sol1Data {
        psi: "0.15 * x1 * x2 + 0.1 * cos(2 * x1)",
        f: "v + 0.5 * v^2 + 0.1 * x1 * v + 0.2 * x2",
        f0: "-0.3 * (1 + 0.1 * x2^2)",
        h0: "0.8",
        upsilon4: "0.05",
        w0: ["0.2", "-0.1 * x2"],
        n0: ["0.4 * x1", "-0.3"],
        eps: [1.0, 1.0, 1.0, -1.0],
    },
];

fn sol1_recipe(d: &Sol1Data) -> SolutionRecipe {
    let v = &SOL1_VARS;
    let mut r = SolutionRecipe::new(ex(d.psi, v), ex(d.f, v));
    r.f0 = ex(d.f0, v);
    r.h0 = ex(d.h0, v);
    r.upsilon4 = ex(d.upsilon4, v);
    r.w0 = d.w0.iter().map(|s| ex(s, v)).collect();
    r.n0 = d.n0.iter().map(|s| ex(s, v)).collect();
    r.eps = d.eps;
    r
}

struct CosmoData {
    scale: &'static str,
    psi: &'static str,
    f: &'static str,
    upsilon4: f64,
    w0: [&'static str; 2],
}

const COSMO_DATA: [CosmoData; 5] = [
    CosmoData { scale: "1 + 0.3 * t", psi: "0.1 * r * cos(t)", f: "theta + 0.2 * r * theta^2", upsilon4: 0.05, w0: ["0.2", "0.1"] },
    CosmoData { scale: "exp(0.4 * t)", psi: "0.2 * sin(r) * t", f: "theta * (1 + 0.1 * t)", upsilon4: 0.1, w0: ["0", "0.3"] },
    CosmoData { scale: "(1 + t)^(2/3)", psi: "0.05 * r^2", f: "theta + 0.1 * theta^3", upsilon4: 0.2, w0: ["0.1 * t", "0"] },
    CosmoData { scale: "1 + 0.2 * t^2", psi: "0.1 * cos(r + t)", f: "theta + 0.1 * theta^2 + 0.2 * r", upsilon4: 0.08, w0: ["-0.1", "0.1 * r"] },
    CosmoData { scale: "1 + 0.1 * sin(t)", psi: "0.1 * r * t", f: "theta^2 + 0.3 * theta", upsilon4: 0.15, w0: ["0.05", "-0.05"] },
];

fn cosmo_recipe(d: &CosmoData) -> CosmoRecipe4d {
    let v = &COSMO_VARS;
    let mut r = CosmoRecipe4d::new(ex(d.scale, v), ex(d.psi, v), ex(d.f, v));
    r.upsilon4 = d.upsilon4;
    r.w0 = d.w0.iter().map(|s| ex(s, v)).collect();
    r.theta_lower = 0.8;
    r
}

struct Generated {
    name: String,
    metric: DMetric,
    source: Source,
    points: Vec<Vec<f64>>,
}

fn generated() -> Res<Vec<Generated>> {
    let mut out = Vec::new();
    for (k, d) in SOL1_DATA.iter().enumerate() {
        let r = sol1_recipe(d);
        let metric = generate_sol1(&r).map_err(err)?;
        out.push(Generated { name: format!("sol1#{k}"), metric, source: r.source(), points: halton(&SOL1_BOX, 8, 11 + k as u64) });
    }
    for (k, d) in COSMO_DATA.iter().enumerate() {
        let r = cosmo_recipe(d);
        let metric = generate_4d_cosmo(&r).map_err(err)?;
        out.push(Generated { name: format!("cosmo#{k}"), metric, source: r.source(), points: halton(&COSMO_BOX, 8, 23 + k as u64) });
    }
    Ok(out)
}

fn frw() -> DiagfansParams {
    DiagfansParams { hk: 0.3, vk: -0.2, ..DiagfansParams::new(ex("1 + 0.2 * t^2", &["t"]), ex("1 + 0.1 * t", &["t"])) }
}

fn points8(count: usize) -> Vec<Vec<f64>> {
    let d = [[-0.5, 0.5], [0.2, 1.0], [0.2, 1.2], [0.4, 1.2], [0.2, 1.0], [0.1, 0.9], [0.6, 1.4], [0.0, 1.0]];
    halton(&d, count, 5)
}

fn soliton_field() -> Res<Field> {
    Ok(cosmo::kp_line_soliton(&SolitonParams::new(1.0, 1.0, 1.0)).map_err(err)?.field)
}

/// Multiplies one vertical coefficient by a constant factor.
struct Scaled {
    inner: DMetric,
    slot: usize,
    factor: f64,
}

impl MetricModel for Scaled {
    fn layout(&self) -> Layout {
        self.inner.layout()
    }

    fn shell_jets(&self, point: &[f64], order: usize) -> Result<ShellJets, GeomError> {
        let mut sj = self.inner.shell_jets(point, order)?;
        let t = &sj.h[0][self.slot][self.slot] * self.factor;
        sj.h[0][self.slot][self.slot] = t;
        Ok(sj)
    }
}

fn max3(v: &[Vec<Vec<f64>>]) -> f64 {
    v.iter().flatten().flatten().fold(0.0f64, |m, x| m.max(x.abs()))
}

// ---------------------------------------------------------------------------
// Criteria.

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Res<Verdict> {
    Ok(Verdict { pass, detail })
}

fn metric_compatibility() -> Res<Verdict> {
    let sol1 = generate_sol1(&sol1_recipe(&SOL1_DATA[0])).map_err(err)?;
    let cosmo = generate_4d_cosmo(&cosmo_recipe(&COSMO_DATA[0])).map_err(err)?;
    let corpus = [
        ("flat", flat(), BOX),
        ("conformal", conformal(), BOX),
        ("quartic lift", quartic_lift(), FIBER_BOX),
        ("sol1", sol1, SOL1_BOX),
        ("4-d cosmo", cosmo, COSMO_BOX),
    ];
    let mut worst = (0.0f64, "");
    for (name, g, domain) in &corpus {
        for p in halton(domain, 100, 1) {
            let j = g.jets(&p, 1).map_err(err)?;
            for kind in [ConnectionKind::Canonical, ConnectionKind::Cartan] {
                let c = connection_from_jets(kind, &j, ConnOptions::default()).map_err(err)?;
                let q = nonmetricity_from(&c, &j).map_err(err)?.max_abs();
                if q > worst.0 || q.is_nan() {
                    worst = (q, name);
                }
            }
        }
    }
    verdict(worst.0 < 1e-8, format!("max |Q| = {:.2e} (worst on {}) over 5 metrics x 100 points x 2 connections", worst.0, worst.1))
}

fn pure_torsion() -> Res<Verdict> {
    let corpus = [
        (flat(), BOX),
        (conformal(), BOX),
        (quartic_lift(), FIBER_BOX),
        (off_diagonal(), FIBER_BOX),
        (lc_metric(), BOX),
        (generate_sol1(&sol1_recipe(&SOL1_DATA[0])).map_err(err)?, SOL1_BOX),
        (generate_4d_cosmo(&cosmo_recipe(&COSMO_DATA[0])).map_err(err)?, COSMO_BOX),
    ];
    let mut worst = 0.0f64;
    let mut count = 0;
    for (g, domain) in &corpus {
        for p in halton(domain, 20, 7) {
            let j = g.jets(&p, 1).map_err(err)?;
            let c = connection_from_jets(ConnectionKind::Canonical, &j, ConnOptions::default()).map_err(err)?;
            let t = torsion_from(&c, &j).map_err(err)?;
            worst = worst.max(max3(&t.hh)).max(max3(&t.vv));
            count += 1;
        }
    }
    verdict(worst < 1e-10, format!("max |T^i_jk|, |T^a_bc| = {worst:.2e} at {count} points"))
}

fn distortion_identity() -> Res<Verdict> {
    let g = off_diagonal();
    let (mut printed, mut corrected) = (0.0f64, 0.0f64);
    for p in halton(&FIBER_BOX, 50, 3) {
        printed = printed.max(distortion_identity_residual(&g, &p, DistortionReading::Printed).map_err(err)?);
        corrected = corrected.max(distortion_identity_residual(&g, &p, DistortionReading::Corrected).map_err(err)?);
    }
    verdict(
        printed < 1e-7,
        format!(
            "max componentwise mismatch {printed:.2e} at 50 points with the distortion as printed \
             (expected failure: two mixed vertical components are exchanged and Z^i_bk misses +C^i_kb; \
             with those corrected the mismatch is {corrected:.2e})"
        ),
    )
}

fn lc_extraction() -> Res<Verdict> {
    let g = lc_metric();
    let pts = halton(&BOX, 20, 9);
    let rep = check_lc_conditions(&g, &pts, 1e-10).map_err(err)?;
    if !rep.extractable {
        return verdict(false, format!("test metric violates the constraints: {:?}", rep.violated));
    }
    let (mut z, mut einstein) = (0.0f64, 0.0f64);
    for p in &pts {
        z = z.max(distortion_tensor(&g, p).map_err(err)?.max_abs());
        let pack = curvature_pack(&g, ConnectionKind::Canonical, ConnOptions::default(), CurvOptions::default(), p)
            .map_err(err)?;
        let coord = coordinate_einstein_adapted(&g, p).map_err(err)?;
        for (ra, rb) in pack.einstein.einstein.iter().zip(&coord) {
            for (a, b) in ra.iter().zip(rb) {
                einstein = einstein.max((a - b).abs());
            }
        }
    }
    verdict(z < 1e-8 && einstein < 1e-7, format!("max |Z| = {z:.2e}, Einstein mismatch {einstein:.2e} at 20 points"))
}

fn closure() -> Res<Verdict> {
    let mut worst = (0.0f64, String::new());
    let mut weakest = (f64::INFINITY, String::new());
    for g in generated()? {
        let rep = residuals_separated(&g.metric, SeparatedKind::Hv, &g.source, &g.points).map_err(|e| format!("{}: {e}", g.name))?;
        if rep.max_residual() > worst.0 || rep.max_residual().is_nan() {
            worst = (rep.max_residual(), g.name.clone());
        }
        for slot in 0..2 {
            let pert = DMetric::new(Scaled { inner: g.metric.clone(), slot, factor: 1.01 });
            let r = residuals_separated(&pert, SeparatedKind::Hv, &g.source, &g.points).map_err(err)?.max_residual();
            if r < weakest.0 {
                weakest = (r, format!("{} h{}", g.name, slot + 3));
            }
        }
    }
    verdict(
        worst.0 < 1e-6 && weakest.0 > 1e-4,
        format!(
            "10 generated solutions: max residual {:.2e} ({}); smallest response to a 1% perturbation {:.2e} ({})",
            worst.0, worst.1, weakest.0, weakest.1
        ),
    )
}

fn two_paths() -> Res<Verdict> {
    let (mut diag, mut mixed) = ((0.0f64, String::new()), (0.0f64, String::new()));
    for g in generated()? {
        for (sep, conn) in [(SeparatedKind::Hv, ConnectionKind::Hv), (SeparatedKind::Canonical, ConnectionKind::Canonical)] {
            let a = residuals_separated(&g.metric, sep, &g.source, &g.points).map_err(err)?;
            let b = residuals_generic(&g.metric, conn, ConnOptions::default(), &g.source, &g.points).map_err(err)?;
            for (id, d) in a.compare(&b).map_err(err)? {
                let slot = if id.starts_with("ricci") { &mut diag } else { &mut mixed };
                if d > slot.0 || d.is_nan() {
                    *slot = (d, format!("{} {conn:?} {id}", g.name));
                }
            }
        }
    }
    verdict(
        diag.0.max(mixed.0) < 1e-6,
        format!(
            "diagonal equations agree to {:.2e}; mixed equations differ by {:.2e} ({}) \
             (expected failure: the printed separated mixed equations are not the mixed Ricci components)",
            diag.0, mixed.0, mixed.1
        ),
    )
}

fn threshold_algebra() -> Res<Verdict> {
    let t = cosmo::critical_thresholds();
    let quad = |g: f64| g * g - 2.0 * g - 1.5;
    let cubic = |g: f64| (g - 1.0) * (g * g + 2.0 * g + 0.5);
    let e1 = quad(t.hplus).abs().max(quad(t.hminus).abs());
    let mut e2 = 0.0f64;
    for root in [1.0, t.hatt, t.hrep] {
        e2 = e2.max(cubic(root).abs()).max(cosmo::gamma_rhs(root, 1.0).map_err(err)?.abs());
    }
    // the cubic has exactly three real roots, so these are all of them
    let distinct = (t.hatt - t.hrep).abs() > 0.1 && (t.hatt - 1.0).abs() > 0.1;
    verdict(e1 < 1e-12 && e2 < 1e-12 && distinct, format!("acceleration quadratic at H± {e1:.2e}; flow cubic at {{1, Hatt, Hrep}} {e2:.2e}"))
}

fn fixed_point() -> Res<Verdict> {
    let run = cosmo::integrate_trajectory(&HubbleInit::new(1.0, 1.0), (0.0, 10.0), 1e-3).map_err(err)?;
    let drift = run.samples.iter().map(|s| (s.gamma - 1.0).abs()).fold(0.0, f64::max);
    let end = |dt: f64| -> Res<f64> {
        Ok(cosmo::integrate_trajectory(&HubbleInit::new(1.0, 0.5), (0.0, 1.0), dt).map_err(err)?.last().vh)
    };
    let (a, b, c) = (end(1e-3)?, end(5e-4)?, end(2.5e-4)?);
    let ratio = (a - b) / (b - c);
    verdict(
        drift < 1e-9 && (12.0..=20.0).contains(&ratio) && run.blowup.is_none(),
        format!("max |gamma - 1| = {drift:.2e} over [0, 10]; step-halving error ratio {ratio:.2}"),
    )
}

fn consistent(ha: f64, ha_dot: f64, p: &CosmoParams, rho: f64) -> Res<CosmoState> {
    let va_dot = cosmo::constrained_va_dot(ha, ha_dot, 1.0, p, rho).map_err(err)?;
    Ok(CosmoState { ha, va: 1.0, ha_dot, va_dot })
}

fn conservation() -> Res<Verdict> {
    let p = CosmoParams::default();
    let run = cosmo::integrate_closure(&consistent(1.0, 0.1, &p, 0.3)?, 0.3, &p, (0.0, 1.0), 1e-3).map_err(err)?;
    let q = |s: &cosmo::ClosureSample| s.rho * s.state.ha.powf(4.0 * (1.0 + p.h_omega)) * s.state.va.powf(3.0 * (1.0 + p.v_omega));
    let q0 = q(&run[0]);
    let drift = run.iter().map(|s| (q(s) / q0 - 1.0).abs()).fold(0.0, f64::max);
    let density = run.last().map(|s| s.residuals[0].abs()).unwrap_or(0.0);
    verdict(
        drift < 1e-6,
        format!("relative drift {drift:.2e} on the dust closure over [0, 1] (density-equation residual at t = 1: {density:.2e})"),
    )
}

fn radiation_stability() -> Res<Verdict> {
    let p = CosmoParams { v_omega: 1.0 / 3.0, ..Default::default() };
    let init = consistent(1.0 + 1e-3, 0.0, &p, 0.2)?;
    let run = cosmo::integrate_closure(&init, 0.2, &p, (0.0, 10.0), 1e-3).map_err(err)?;
    let excursion = run.iter().map(|s| (s.state.ha - init.ha).abs()).fold(0.0, f64::max);
    let p = CosmoParams { h_omega: -0.5, ..Default::default() };
    let run = cosmo::integrate_closure(&consistent(1.0, 0.0, &p, 0.2)?, 0.2, &p, (0.0, 2.0), 1e-3).map_err(err)?;
    let negative = run
        .iter()
        .map(|s| s.residuals.iter().fold(s.ha_ddot.abs().max((s.state.ha - 1.0).abs()), |m, r| m.max(r.abs())))
        .fold(0.0, f64::max);
    verdict(
        excursion < 1e-2 && negative < 1e-8,
        format!("radiation: max |ha - ha(0)| = {excursion:.2e} over [0, 10]; negative pressure: constant ha residual {negative:.2e}"),
    )
}

fn soliton() -> Res<Verdict> {
    let mut worst = 0.0f64;
    for (kappa, l) in [(1.0, 0.0), (1.0, 1.0), (2.0, 1.0)] {
        for eps in [1.0, -1.0] {
            let s = cosmo::kp_line_soliton(&SolitonParams::new(kappa, l, eps)).map_err(err)?;
            worst = worst.max(s.residual);
        }
    }
    let base = diagfans(&frw(), Frame8::Solitonic).map_err(err)?;
    let g = generate_8d_solitonic(&frw(), &soliton_field()?, 0.0).map_err(err)?;
    let mut identical = base.layout() == g.layout();
    for p in points8(20) {
        let (a, b) = (g.full_metric(&p, 2).map_err(err)?, base.full_metric(&p, 2).map_err(err)?);
        identical &= a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| {
            x.coeffs().iter().zip(y.coeffs()).all(|(u, v)| u.to_bits() == v.to_bits())
        });
    }
    verdict(
        worst < 1e-6 && identical,
        format!("max KP residual {worst:.2e} over 6 cases on 21^3 grids; zero-amplitude 8-d metric bit-identical: {identical}"),
    )
}

/// Relative AD/FD mismatch of every coefficient field of `g`, scaled by the coefficient's jet.
fn ad_mismatch(g: &DMetric, p: &[f64]) -> Res<(f64, f64)> {
    let flatten = |sj: &ShellJets| -> Vec<Taylor> {
        let mut v: Vec<Taylor> = sj.g.iter().flatten().cloned().collect();
        for m in sj.h.iter().chain(&sj.nc) {
            v.extend(m.iter().flatten().cloned());
        }
        v
    };
    let jets = flatten(&g.shell_jets(p, 2).map_err(err)?);
    // every stencil point serves all coefficients
    let cache: RefCell<HashMap<Vec<u64>, Vec<f64>>> = RefCell::default();
    let values = |q: &[f64]| -> Vec<f64> {
        let key: Vec<u64> = q.iter().map(|x| x.to_bits()).collect();
        cache
            .borrow_mut()
            .entry(key)
            .or_insert_with(|| flatten(&g.shell_jets(q, 0).expect("inside the chart")).iter().map(Taylor::value).collect())
            .clone()
    };
    let (mut grad, mut hess) = (0.0f64, 0.0f64);
    for (e, t) in jets.iter().enumerate() {
        let value = |q: &[f64]| values(q)[e];
        let fg = fd_gradient(&value, p, 1e-5);
        // Richardson step on the second differences: O(h⁴) truncation without the 1/h² noise of a tiny step
        let (coarse, fine) = (fd_hessian(&value, p, 2e-3), fd_hessian(&value, p, 1e-3));
        let fh: Vec<Vec<f64>> =
            coarse.iter().zip(&fine).map(|(c, f)| c.iter().zip(f).map(|(c, f)| (4.0 * f - c) / 3.0).collect()).collect();
        let (ag, ah) = (t.gradient(), t.hessian());
        let scale = ag.iter().chain(ah.iter().flatten()).fold(t.value().abs(), |m, x| m.max(x.abs()));
        if scale == 0.0 {
            continue;
        }
        for (a, f) in ag.iter().zip(&fg) {
            grad = grad.max((a - f).abs() / scale);
        }
        for (a, f) in ah.iter().flatten().zip(fh.iter().flatten()) {
            hess = hess.max((a - f).abs() / scale);
        }
    }
    Ok((grad, hess))
}

fn ad_soundness() -> Res<Verdict> {
    let mut corpus: Vec<(String, DMetric, Vec<Vec<f64>>)> = vec![
        ("flat".into(), flat(), halton(&BOX, 3, 2)),
        ("conformal".into(), conformal(), halton(&BOX, 3, 2)),
        ("quartic lift".into(), quartic_lift(), halton(&FIBER_BOX, 3, 2)),
        ("off-diagonal".into(), off_diagonal(), halton(&FIBER_BOX, 3, 2)),
        ("lc".into(), lc_metric(), halton(&BOX, 3, 2)),
        ("diagfans".into(), diagfans(&frw(), Frame8::Shells).map_err(err)?, points8(3)),
        ("solitonic".into(), generate_8d_solitonic(&frw(), &soliton_field()?, 0.05).map_err(err)?, points8(3)),
    ];
    for g in generated()? {
        corpus.push((g.name, g.metric, g.points[..3].to_vec()));
    }
    let mut worst = (0.0f64, String::new());
    for (name, g, pts) in &corpus {
        for p in pts {
            let (dg, dh) = ad_mismatch(g, p)?;
            let m = dg.max(dh);
            if m > worst.0 || m.is_nan() {
                worst = (m, name.clone());
            }
        }
    }
    verdict(worst.0 < 1e-6, format!("max relative AD/FD mismatch {:.2e} ({}) over {} metrics", worst.0, worst.1, corpus.len()))
}

type Criterion = (&'static str, Option<u64>, fn() -> Res<Verdict>);

const CRITERIA: [Criterion; 12] = [
    ("metric compatibility", Some(10), metric_compatibility),
    ("pure torsion vanishing", Some(5), pure_torsion),
    ("distortion identity", Some(30), distortion_identity),
    ("Levi-Civita extraction", None, lc_extraction),
    ("generator/evaluator closure", Some(60), closure),
    ("two-path consistency", None, two_paths),
    ("threshold algebra", None, threshold_algebra),
    ("fixed point and RK4 order", None, fixed_point),
    ("conservation law", None, conservation),
    ("radiation stability, negative pressure", None, radiation_stability),
    ("soliton certificate", Some(60), soliton),
    ("AD soundness", None, ad_soundness),
];

fn main() -> ExitCode {
    let mut failed = Vec::new();
    for (k, (name, limit, check)) in CRITERIA.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let in_time = limit.is_none_or(|s| took <= Duration::from_secs(s));
        let budget = limit.map_or(String::new(), |s| format!(", limit {s} s"));
        let (pass, detail) = match result {
            Ok(v) => (v.pass && in_time, v.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "criterion {:>2} {} {name}: {detail} [{:.2} s{budget}]",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
        if !pass {
            failed.push(k + 1);
        }
    }
    if failed.is_empty() {
        println!("all 12 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("failing criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
