//! Diagonal two-scale-factor cosmology, the Hubble-fraction flow and its
//! regimes, and the KP line soliton used to deform the 8-d metric.

use std::f64::consts::PI;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::jetcalc::{field_fn, Field, JetError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CosmoError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("bad input: {0}")]
    Input(String),
    #[error("no dispersion relation: {0}")]
    Dispersion(String),
    #[error(transparent)]
    Jet(#[from] JetError),
}

/// Curvature constants, equations of state and the total-space coupling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosmoParams {
    pub hk: f64,
    pub vk: f64,
    pub h_omega: f64,
    pub v_omega: f64,
    pub g_bar: f64,
    pub eps1: f64,
}

impl Default for CosmoParams {
    fn default() -> CosmoParams {
        CosmoParams { hk: 0.0, vk: 0.0, h_omega: 0.0, v_omega: 0.0, g_bar: 1.0, eps1: 1.0 }
    }
}

impl CosmoParams {
    pub fn validate(&self) -> Result<(), CosmoError> {
        if !(self.g_bar > 0.0) || !self.h_omega.is_finite() || !self.v_omega.is_finite() {
            return Err(CosmoError::Precondition(format!("invalid parameters {self:?}")));
        }
        Ok(())
    }
}

/// Scale factors and their rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CosmoState {
    pub ha: f64,
    pub va: f64,
    pub ha_dot: f64,
    pub va_dot: f64,
}

impl CosmoState {
    pub fn hubble(&self) -> HubbleState {
        HubbleState { hh: self.ha_dot / self.ha, vh: self.va_dot / self.va }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HubbleState {
    pub hh: f64,
    pub vh: f64,
}

impl HubbleState {
    pub fn gamma(&self) -> f64 {
        self.hh / self.vh
    }
}

fn curv_term(rate: f64, k: f64, a: f64) -> f64 {
    rate * rate + k / (a * a)
}

/// `LHS − RHS` of the three diagonal equations (density, v-pressure, h-pressure).
pub fn diag_friedmann_residuals(
    s: &CosmoState,
    ha_ddot: f64,
    va_ddot: f64,
    p: &CosmoParams,
    rho: f64,
    hp: f64,
    vp: f64,
) -> [f64; 3] {
    let (hh, vh) = (s.ha_dot / s.ha, s.va_dot / s.va);
    let xh = curv_term(hh, p.hk, s.ha);
    let xv = curv_term(vh, p.vk, s.va);
    let g = PI * p.g_bar;
    [
        4.0 * vh * hh + 2.0 * xh + xv - 8.0 / 3.0 * g * rho,
        4.0 * ha_ddot / s.ha + 2.0 * va_ddot / s.va + 6.0 * xh + xv + 8.0 * g * vp,
        ha_ddot / s.ha + va_ddot / s.va + 2.0 * xh + xv + 8.0 / 3.0 * g * hp,
    ]
}

/// `ρ₀ ha^{−4(1+hω)} va^{−3(1+vω)}`.
pub fn conserved_density(ha: f64, va: f64, h_omega: f64, v_omega: f64, rho0: f64) -> f64 {
    rho0 * ha.powf(-4.0 * (1.0 + h_omega)) * va.powf(-3.0 * (1.0 + v_omega))
}

/// `(ḣH, v̇H)` for flat, pressureless sections.
pub fn hubble_rhs(h: HubbleState) -> (f64, f64) {
    let (hh, vh) = (h.hh, h.vh);
    (0.5 * vh * vh - vh * hh - 3.0 * hh * hh, -2.5 * vh * vh - 2.0 * vh * hh + hh * hh)
}

/// `γ̇` for `γ = hH / vH`, from the quotient rule on [`hubble_rhs`].
pub fn gamma_rhs(gamma: f64, vh: f64) -> Result<f64, CosmoError> {
    if vh == 0.0 {
        return Err(CosmoError::Precondition("γ is undefined for vH = 0".into()));
    }
    let h = HubbleState { hh: gamma * vh, vh };
    let (hd, vd) = hubble_rhs(h);
    Ok((hd * vh - h.hh * vd) / (vh * vh))
}

/// Critical values of the Hubble fraction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    /// Upper acceleration boundary `1 + √(5/2)`.
    pub hplus: f64,
    /// Lower acceleration boundary `1 − √(5/2)`.
    pub hminus: f64,
    /// `−1 + 1/√2`, labelled attracting.
    pub hatt: f64,
    /// `−1 − 1/√2`, labelled repelling.
    pub hrep: f64,
}

pub fn critical_thresholds() -> Thresholds {
    let r = 2.5f64.sqrt();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Thresholds { hplus: 1.0 + r, hminus: 1.0 - r, hatt: -1.0 + s, hrep: -1.0 - s }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Acceleration {
    Accelerating,
    Decelerating,
}

/// Sign of `v̈a / va` for `vH > 0`: accelerating outside `[H−, H+]`.
pub fn acceleration_test(gamma: f64) -> Acceleration {
    let t = critical_thresholds();
    if gamma > t.hplus || gamma < t.hminus {
        Acceleration::Accelerating
    } else {
        Acceleration::Decelerating
    }
}

/// `v̈a / va = v̇H + vH²` for given rates.
pub fn v_acceleration(h: HubbleState) -> f64 {
    hubble_rhs(h).1 + h.vh * h.vh
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    AccelThenDecel,
    AlwaysDecel,
    DecelThenAccel,
    AlwaysAccel,
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::AccelThenDecel => "accel_then_decel",
            Regime::AlwaysDecel => "always_decel",
            Regime::DecelThenAccel => "decel_then_accel",
            Regime::AlwaysAccel => "always_accel",
        }
    }

    fn from_ends(first: Acceleration, last: Acceleration) -> Regime {
        use Acceleration::*;
        match (first, last) {
            (Accelerating, Decelerating) => Regime::AccelThenDecel,
            (Decelerating, Decelerating) => Regime::AlwaysDecel,
            (Decelerating, Accelerating) => Regime::DecelThenAccel,
            (Accelerating, Accelerating) => Regime::AlwaysAccel,
        }
    }
}

/// Outcome of [`classify_regime`].
#[derive(Clone, Debug, PartialEq)]
pub struct RegimeReport {
    pub gamma0: f64,
    pub regime: Regime,
    /// Limit of the flow.
    pub gamma_end: f64,
    /// Acceleration states visited, consecutive duplicates removed.
    pub sequence: Vec<Acceleration>,
    /// Labels of the printed interval table, see [`literal_regime`].
    pub literal: Vec<Regime>,
}

/// `dγ/dτ` with `dτ = vH dt`; the flow direction for `vH > 0`.
fn gamma_flow(g: f64) -> f64 {
    -(g - 1.0) * (g * g + 2.0 * g + 0.5)
}

/// Integrates the fraction flow from `γ₀` and applies [`acceleration_test`] along it.
pub fn classify_regime(gamma0: f64) -> Result<RegimeReport, CosmoError> {
    if !gamma0.is_finite() {
        return Err(CosmoError::Input(format!("γ₀ = {gamma0}")));
    }
    let dt = 1e-3;
    let mut g = gamma0;
    let mut sequence = vec![acceleration_test(g)];
    for _ in 0..2_000_000 {
        if gamma_flow(g).abs() < 1e-13 {
            break;
        }
        g = rk4_scalar(gamma_flow, g, dt);
        let a = acceleration_test(g);
        if sequence.last() != Some(&a) {
            sequence.push(a);
        }
    }
    let regime = Regime::from_ends(sequence[0], *sequence.last().expect("nonempty"));
    Ok(RegimeReport { gamma0, regime, gamma_end: g, sequence, literal: literal_regime(gamma0) })
}

/// Every printed interval containing `γ₀`. With the printed threshold values the
/// third interval is empty and the second and fourth overlap on `(H_rep, H−)`.
pub fn literal_regime(gamma0: f64) -> Vec<Regime> {
    let t = critical_thresholds();
    let mut out = Vec::new();
    if gamma0 > t.hplus {
        out.push(Regime::AccelThenDecel);
    }
    if t.hrep < gamma0 && gamma0 < t.hplus {
        out.push(Regime::AlwaysDecel);
    }
    if t.hminus < gamma0 && gamma0 < t.hrep {
        out.push(Regime::DecelThenAccel);
    }
    if gamma0 < t.hminus {
        out.push(Regime::AlwaysAccel);
    }
    out
}

/// Parallel [`classify_regime`] over initial fractions.
pub fn regime_map(gammas: &[f64]) -> Result<Vec<RegimeReport>, CosmoError> {
    gammas.par_iter().map(|&g| classify_regime(g)).collect()
}

fn rk4_scalar(f: impl Fn(f64) -> f64, y: f64, h: f64) -> f64 {
    let k1 = f(y);
    let k2 = f(y + 0.5 * h * k1);
    let k3 = f(y + 0.5 * h * k2);
    let k4 = f(y + h * k3);
    y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn rk4_step<const N: usize>(f: &dyn Fn(&[f64; N]) -> [f64; N], y: &[f64; N], h: f64) -> [f64; N] {
    let add = |a: &[f64; N], b: &[f64; N], s: f64| -> [f64; N] { std::array::from_fn(|i| a[i] + s * b[i]) };
    let k1 = f(y);
    let k2 = f(&add(y, &k1, 0.5 * h));
    let k3 = f(&add(y, &k2, 0.5 * h));
    let k4 = f(&add(y, &k3, h));
    std::array::from_fn(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateCase {
    General,
    Radiation,
    EqualOmega,
}

impl FromStr for RateCase {
    type Err = CosmoError;

    fn from_str(s: &str) -> Result<RateCase, CosmoError> {
        match s {
            "general" => Ok(RateCase::General),
            "radiation" => Ok(RateCase::Radiation),
            "equal_omega" => Ok(RateCase::EqualOmega),
            other => Err(CosmoError::Input(format!("unknown rate case '{other}'"))),
        }
    }
}

/// Difference `β` between the v- and h-expansion rates.
pub fn expansion_rate_difference(h: HubbleState, h_omega: f64, v_omega: f64, case: RateCase) -> f64 {
    match case {
        RateCase::General => (1.0 - 3.0 * v_omega + 2.0 * h_omega) * h.vh - (1.0 + 3.0 * v_omega - 4.0 * h_omega) * h.hh,
        RateCase::Radiation => 2.0 * h.hh,
        RateCase::EqualOmega => h.vh - h.hh,
    }
}

/// One output row of a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub hh: f64,
    pub vh: f64,
    pub gamma: f64,
    pub ha: f64,
    pub va: f64,
    pub rho: f64,
}

impl Sample {
    pub const HEADER: [&'static str; 7] = ["t", "hH", "vH", "gamma", "ha", "va", "rho"];

    pub fn row(&self) -> [f64; 7] {
        [self.t, self.hh, self.vh, self.gamma, self.ha, self.va, self.rho]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    /// Time of the last valid sample when a rate exceeded the blow-up bound.
    pub blowup: Option<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectories start with the initial sample")
    }
}

/// Rates above this are reported as a finite-time singularity.
pub const BLOWUP: f64 = 1e12;

/// Initial data of the Hubble-rate system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HubbleInit {
    pub rates: HubbleState,
    pub ha: f64,
    pub va: f64,
    /// Density at `ha = va = 1`.
    pub rho0: f64,
    pub h_omega: f64,
    pub v_omega: f64,
}

impl HubbleInit {
    pub fn new(hh: f64, vh: f64) -> HubbleInit {
        HubbleInit { rates: HubbleState { hh, vh }, ha: 1.0, va: 1.0, rho0: 1.0, h_omega: 0.0, v_omega: 0.0 }
    }
}

fn check_step(t_span: (f64, f64), dt: f64) -> Result<usize, CosmoError> {
    if !(dt > 0.0) || !(t_span.1 >= t_span.0) {
        return Err(CosmoError::Precondition(format!("need dt > 0 and t1 ≥ t0, got dt = {dt}, span {t_span:?}")));
    }
    Ok(((t_span.1 - t_span.0) / dt).round() as usize)
}

/// Fixed-step RK4 of the Hubble-rate system with `ȧ = H a`; density from the conservation law.
pub fn integrate_trajectory(init: &HubbleInit, t_span: (f64, f64), dt: f64) -> Result<Trajectory, CosmoError> {
    let steps = check_step(t_span, dt)?;
    if !(init.ha > 0.0 && init.va > 0.0) {
        return Err(CosmoError::Precondition("scale factors must be positive".into()));
    }
    let h = (t_span.1 - t_span.0) / steps.max(1) as f64;
    let rhs = |y: &[f64; 4]| -> [f64; 4] {
        let (hd, vd) = hubble_rhs(HubbleState { hh: y[0], vh: y[1] });
        [hd, vd, y[0], y[1]]
    };
    let sample = |t: f64, y: &[f64; 4]| {
        let (ha, va) = (init.ha * y[2].exp(), init.va * y[3].exp());
        Sample {
            t,
            hh: y[0],
            vh: y[1],
            gamma: y[0] / y[1],
            ha,
            va,
            rho: conserved_density(ha, va, init.h_omega, init.v_omega, init.rho0),
        }
    };
    // log scale factors keep ȧ = H a exact in the exponent
    let mut y = [init.rates.hh, init.rates.vh, 0.0, 0.0];
    let mut samples = vec![sample(t_span.0, &y)];
    for k in 0..steps {
        let next = rk4_step(&rhs, &y, h);
        if !next.iter().all(|v| v.is_finite()) || next[0].abs() > BLOWUP || next[1].abs() > BLOWUP {
            return Ok(Trajectory { blowup: Some(t_span.0 + h * k as f64), samples });
        }
        y = next;
        samples.push(sample(t_span.0 + h * (k + 1) as f64, &y));
    }
    Ok(Trajectory { samples, blowup: None })
}

/// Pressures as fractions of the density: `hp = hω ρ`, `vp = vω ρ` come from [`CosmoParams`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosureSample {
    pub t: f64,
    pub state: CosmoState,
    pub ha_ddot: f64,
    pub va_ddot: f64,
    /// Density carried as a state variable by its continuity equation.
    pub rho: f64,
    pub residuals: [f64; 3],
}

/// Second derivatives solved from the two pressure equations.
pub fn closure_accelerations(s: &CosmoState, p: &CosmoParams, rho: f64) -> (f64, f64) {
    let (hh, vh) = (s.ha_dot / s.ha, s.va_dot / s.va);
    let xh = curv_term(hh, p.hk, s.ha);
    let xv = curv_term(vh, p.vk, s.va);
    let g = PI * p.g_bar;
    // 4A + 2B = r2, A + B = r3 with A = ḧa/ha, B = v̈a/va
    let r2 = -8.0 * g * p.v_omega * rho - 6.0 * xh - xv;
    let r3 = -8.0 / 3.0 * g * p.h_omega * rho - 2.0 * xh - xv;
    let a = 0.5 * r2 - r3;
    let b = r3 - a;
    (a * s.ha, b * s.va)
}

/// `vȧ` satisfying the density equation for the given `ha`, `ḣa`, `va` and `ρ` (expanding root).
pub fn constrained_va_dot(ha: f64, ha_dot: f64, va: f64, p: &CosmoParams, rho: f64) -> Result<f64, CosmoError> {
    let hh = ha_dot / ha;
    // vH² + 4 hH vH + (2 X_h + vk/va² − 8πGρ/3) = 0
    let c = 2.0 * curv_term(hh, p.hk, ha) + p.vk / (va * va) - 8.0 / 3.0 * PI * p.g_bar * rho;
    let disc = 4.0 * hh * hh - c;
    if disc < 0.0 {
        return Err(CosmoError::Precondition(format!("density equation has no real rate (discriminant {disc:e})")));
    }
    Ok((-2.0 * hh + disc.sqrt()) * va)
}

/// RK4 of the pressure equations; the density equation is only imposed on the initial
/// data and reported as `residuals[0]`. Density follows `ρ̇ = −[4(1+hω) hH + 3(1+vω) vH] ρ`.
pub fn integrate_closure(
    init: &CosmoState,
    rho0: f64,
    p: &CosmoParams,
    t_span: (f64, f64),
    dt: f64,
) -> Result<Vec<ClosureSample>, CosmoError> {
    p.validate()?;
    let steps = check_step(t_span, dt)?;
    if !(init.ha > 0.0 && init.va > 0.0) {
        return Err(CosmoError::Precondition("scale factors must be positive".into()));
    }
    let h = (t_span.1 - t_span.0) / steps.max(1) as f64;
    let state = |y: &[f64; 5]| CosmoState { ha: y[0], va: y[1], ha_dot: y[2], va_dot: y[3] };
    let rhs = |y: &[f64; 5]| -> [f64; 5] {
        let s = state(y);
        let (hdd, vdd) = closure_accelerations(&s, p, y[4]);
        let hub = s.hubble();
        let drho = -(4.0 * (1.0 + p.h_omega) * hub.hh + 3.0 * (1.0 + p.v_omega) * hub.vh) * y[4];
        [y[2], y[3], hdd, vdd, drho]
    };
    let sample = |t: f64, y: &[f64; 5]| {
        let s = state(y);
        let (hdd, vdd) = closure_accelerations(&s, p, y[4]);
        let residuals = diag_friedmann_residuals(&s, hdd, vdd, p, y[4], p.h_omega * y[4], p.v_omega * y[4]);
        ClosureSample { t, state: s, ha_ddot: hdd, va_ddot: vdd, rho: y[4], residuals }
    };
    let mut y = [init.ha, init.va, init.ha_dot, init.va_dot, rho0];
    let mut out = vec![sample(t_span.0, &y)];
    for k in 0..steps {
        y = rk4_step(&rhs, &y, h);
        if !y.iter().all(|v| v.is_finite()) || y[2].abs() > BLOWUP || y[3].abs() > BLOWUP {
            return Err(CosmoError::Precondition(format!("closure blew up after t = {}", t_span.0 + h * k as f64)));
        }
        out.push(sample(t_span.0 + h * (k + 1) as f64, &y));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// KP line soliton.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolitonParams {
    pub kappa: f64,
    pub l: f64,
    /// Frequency; overwritten by the dispersion solve.
    pub omega: f64,
    pub eps_sign: f64,
    /// Deformation amplitude of the 8-d metric.
    pub amplitude: f64,
}

impl SolitonParams {
    pub fn new(kappa: f64, l: f64, eps_sign: f64) -> SolitonParams {
        SolitonParams { kappa, l, omega: 0.0, eps_sign, amplitude: 0.0 }
    }
}

/// `2κ² sech²(κ θ + l r − ω t)` on `(t, hθ, vr)`.
pub fn line_soliton_field(p: &SolitonParams) -> Field {
    let SolitonParams { kappa, l, omega, .. } = *p;
    field_fn(3, move |u| {
        let phase = kappa * &u[1] + l * &u[2] - omega * &u[0];
        2.0 * kappa * kappa * phase.sech().square()
    })
}

/// Signed residual of `ξ_rr + ε(ξ_t + 6ξξ_θ + ξ_θθθ)_θ` from a 4th-order expansion.
pub fn kp_residual(xi: &Field, eps_sign: f64, point: &[f64]) -> Result<f64, CosmoError> {
    let t = xi.taylor(point, 4)?;
    let d = |e: [u8; 3]| t.derivative(&e);
    let xi_t_th = d([1, 1, 0]);
    let nonlinear = 6.0 * (d([0, 1, 0]).powi(2) + t.value() * d([0, 2, 0]));
    Ok(d([0, 0, 2]) + eps_sign * (xi_t_th + nonlinear + d([0, 4, 0])))
}

#[derive(Clone)]
pub struct KpSoliton {
    pub params: SolitonParams,
    pub field: Field,
    /// Max |residual| over the certificate grid.
    pub residual: f64,
}

/// Sample grid `n³` over one soliton width around the crest at the origin.
pub fn soliton_grid(kappa: f64, n: usize) -> Vec<[f64; 3]> {
    let w = 1.0 / kappa.abs();
    let at = |k: usize| -w + 2.0 * w * k as f64 / (n - 1) as f64;
    let mut out = Vec::with_capacity(n * n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out.push([at(i), at(j), at(k)]);
            }
        }
    }
    out
}

/// Fixes `ω` by a secant solve on the residual and certifies it on a 21³ grid.
pub fn kp_line_soliton(p: &SolitonParams) -> Result<KpSoliton, CosmoError> {
    if p.kappa == 0.0 || !p.kappa.is_finite() {
        return Err(CosmoError::Precondition("κ must be nonzero".into()));
    }
    if p.eps_sign != 1.0 && p.eps_sign != -1.0 {
        return Err(CosmoError::Dispersion(format!("ε must be ±1, got {}", p.eps_sign)));
    }
    // probe off the crest, where ξ_θθ ≠ 0
    let probe = [0.0, 0.9 / p.kappa, 0.0];
    let residual_at = |omega: f64| {
        let q = SolitonParams { omega, ..*p };
        kp_residual(&line_soliton_field(&q), p.eps_sign, &probe)
    };
    let (mut w0, mut w1) = (0.0, 1.0);
    let (mut r0, mut r1) = (residual_at(w0)?, residual_at(w1)?);
    for _ in 0..50 {
        if r1 == 0.0 {
            break;
        }
        let slope = (r1 - r0) / (w1 - w0);
        if slope == 0.0 || !slope.is_finite() {
            return Err(CosmoError::Dispersion(format!("residual insensitive to ω for {p:?}")));
        }
        let w2 = w1 - r1 / slope;
        (w0, r0) = (w1, r1);
        w1 = w2;
        r1 = residual_at(w1)?;
        if (w1 - w0).abs() <= 1e-14 * (1.0 + w1.abs()) {
            break;
        }
    }
    let params = SolitonParams { omega: w1, ..*p };
    let field = line_soliton_field(&params);
    let grid = soliton_grid(p.kappa, 21);
    let residual = grid
        .par_iter()
        .map(|q| kp_residual(&field, p.eps_sign, q).map(f64::abs))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))?;
    Ok(KpSoliton { params, field, residual })
}

/// `γ̃ = γ + ε (χ* − ϖ₅*)` from the derivative values `χ*` and `ϖ₅*`.
pub fn modulated_fraction(gamma: f64, chi_star: f64, varpi5_star: f64, eps: f64) -> Result<f64, CosmoError> {
    if eps.abs() > 0.1 {
        return Err(CosmoError::Precondition(format!("|ε| = {} exceeds 0.1", eps.abs())));
    }
    Ok(gamma + eps * (chi_star - varpi5_star))
}

/// Acceleration states before and after modulation when they differ.
pub fn regime_flip(gamma: f64, gamma_tilde: f64) -> Option<(Acceleration, Acceleration)> {
    let (a, b) = (acceleration_test(gamma), acceleration_test(gamma_tilde));
    (a != b).then_some((a, b))
}

/// Reference scalar for the KP dispersion: `4κ³ + ε l²/κ`.
pub fn kp_dispersion(kappa: f64, l: f64, eps_sign: f64) -> f64 {
    4.0 * kappa.powi(3) + eps_sign * l * l / kappa
}
