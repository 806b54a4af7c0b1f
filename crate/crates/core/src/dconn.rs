//! Distinguished connections, the coordinate Levi-Civita connection and the
//! distortion tensor between them.
//!
//! Index convention: `D_{e_k} e_j = L^i_{jk} e_i`, so the last lower index is
//! the direction of differentiation. Coefficients are Taylor expansions one
//! order below the metric jets they come from.

use std::str::FromStr;

use crate::jetcalc::Taylor;
use crate::nholon::{invert_block, omega_jets, values, DMetric, GeomError, Mat, MetricJets};

pub type Arr3 = Vec<Vec<Vec<Taylor>>>;
pub type Val3 = Vec<Vec<Vec<f64>>>;

pub(crate) fn arr3(proto: &Taylor, a: usize, b: usize, c: usize) -> Arr3 {
    vec![vec![vec![proto.zero_like(); c]; b]; a]
}

pub(crate) fn vals3(a: &Arr3) -> Val3 {
    a.iter().map(values).collect()
}

fn max3(a: &Val3) -> f64 {
    a.iter().flatten().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConnectionKind {
    Canonical,
    Cartan,
    Hv,
    Berwald,
    Chern,
    Hashiguchi,
}

impl FromStr for ConnectionKind {
    type Err = GeomError;
    fn from_str(s: &str) -> Result<ConnectionKind, GeomError> {
        match s.to_ascii_lowercase().as_str() {
            "canonical" => Ok(ConnectionKind::Canonical),
            "cartan" => Ok(ConnectionKind::Cartan),
            "hv" | "h-v" => Ok(ConnectionKind::Hv),
            "berwald" => Ok(ConnectionKind::Berwald),
            "chern" => Ok(ConnectionKind::Chern),
            "hashiguchi" => Ok(ConnectionKind::Hashiguchi),
            other => Err(GeomError::Precondition(format!("unknown connection kind '{other}'"))),
        }
    }
}

/// How to read the vertical `C` coefficient whose printed form repeats `e_c`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CReading {
    /// `e_c g_bd + e_b g_cd − e_d g_bc`.
    #[default]
    Symmetric,
    /// `e_c g_bd + e_c g_cd − e_d g_bc`, character for character.
    Literal,
}

/// Source of the mixed families `L^a_bk`, `C^i_jc` of the Cartan and h-v
/// connections, which only prescribe `L^i_jk` and `C^a_bc`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MixedFill {
    /// `Identify` when the two blocks agree as jets (Finsler-type metric),
    /// `Canonical` otherwise.
    #[default]
    Auto,
    /// Copied from the pure families under `a = n + i`.
    Identify,
    /// Taken from the canonical d-connection.
    Canonical,
}

fn blocks_coincide(j: &MetricJets) -> bool {
    let scale = j.g.iter().flatten().chain(j.h.iter().flatten()).flat_map(|t| t.coeffs().iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    j.g.iter().flatten().zip(j.h.iter().flatten()).all(|(a, b)| {
        a.coeffs().iter().zip(b.coeffs()).all(|(x, y)| (x - y).abs() <= 1e-12 * scale.max(1.0))
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConnOptions {
    pub c_reading: CReading,
    pub mixed_fill: MixedFill,
}

/// `(L^i_jk, L^a_bk, C^i_jc, C^a_bc)` stored `[upper][lower][lower]`.
#[derive(Clone, Debug)]
pub struct DConnectionCoeffs {
    pub n: usize,
    pub m: usize,
    pub lh: Arr3,
    pub lv: Arr3,
    pub ch: Arr3,
    pub cv: Arr3,
}

/// Pointwise values of the four families.
#[derive(Clone, Debug, PartialEq)]
pub struct DConnValues {
    pub lh: Val3,
    pub lv: Val3,
    pub ch: Val3,
    pub cv: Val3,
}

impl DConnValues {
    pub fn max_abs(&self) -> f64 {
        max3(&self.lh).max(max3(&self.lv)).max(max3(&self.ch)).max(max3(&self.cv))
    }
}

impl DConnectionCoeffs {
    pub fn values(&self) -> DConnValues {
        DConnValues { lh: vals3(&self.lh), lv: vals3(&self.lv), ch: vals3(&self.ch), cv: vals3(&self.cv) }
    }

    /// All coefficients as one frame tensor `Γ[γ][α][β]`, `β` the direction.
    pub fn frame_tensor(&self) -> Arr3 {
        let (n, m) = (self.n, self.m);
        let d = n + m;
        let proto = self.proto();
        let mut g = arr3(&proto, d, d, d);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    g[i][j][k] = self.lh[i][j][k].clone();
                }
                for c in 0..m {
                    g[i][j][n + c] = self.ch[i][j][c].clone();
                }
            }
        }
        for a in 0..m {
            for b in 0..m {
                for k in 0..n {
                    g[n + a][n + b][k] = self.lv[a][b][k].clone();
                }
                for c in 0..m {
                    g[n + a][n + b][n + c] = self.cv[a][b][c].clone();
                }
            }
        }
        g
    }

    fn proto(&self) -> Taylor {
        self.lh
            .first()
            .and_then(|x| x.first())
            .and_then(|x| x.first())
            .or_else(|| self.cv.first().and_then(|x| x.first()).and_then(|x| x.first()))
            .expect("non-empty connection")
            .zero_like()
    }
}

/// `½ g^{ir} (e_k g_jr + e_j g_kr − e_r g_jk)` with `e` the N-adapted h-derivative.
fn h_christoffel(j: &MetricJets, ginv: &Mat, proto: &Taylor) -> Arr3 {
    let n = j.n;
    // eg[k][a][b] = e_k g_ab
    let eg: Vec<Mat> = (0..n).map(|k| j.g.iter().map(|r| r.iter().map(|t| j.e(t, k)).collect()).collect()).collect();
    let mut out = arr3(proto, n, n, n);
    for i in 0..n {
        for a in 0..n {
            for k in a..n {
                let mut acc = proto.clone();
                for r in 0..n {
                    let s = &(&eg[k][a][r] + &eg[a][k][r]) - &eg[r][a][k];
                    acc += &ginv[i][r] * &s;
                }
                let v = acc * 0.5;
                out[i][k][a] = v.clone();
                out[i][a][k] = v;
            }
        }
    }
    out
}

/// Vertical `½ h^{ad}(…)` with the chosen reading, `e_c = ∂/∂y^c`.
fn v_christoffel(j: &MetricJets, hinv: &Mat, proto: &Taylor, reading: CReading) -> Arr3 {
    let (n, m) = (j.n, j.m);
    // dh[c][a][b] = ∂_c h_ab
    let dh: Vec<Mat> = (0..m).map(|c| j.h.iter().map(|r| r.iter().map(|t| t.partial(n + c)).collect()).collect()).collect();
    let mut out = arr3(proto, m, m, m);
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                let mut acc = proto.clone();
                for d in 0..m {
                    let second = match reading {
                        CReading::Symmetric => &dh[b][c][d],
                        CReading::Literal => &dh[c][c][d],
                    };
                    let s = &(&dh[c][b][d] + second) - &dh[d][b][c];
                    acc += &hinv[a][d] * &s;
                }
                out[a][b][c] = acc * 0.5;
            }
        }
    }
    out
}

fn canonical_lv(j: &MetricJets, hinv: &Mat, proto: &Taylor) -> Arr3 {
    let (n, m) = (j.n, j.m);
    // dn[b][k][a] = ∂_b N_k^a
    let dn: Vec<Mat> = (0..m).map(|b| j.nc.iter().map(|r| r.iter().map(|t| t.partial(n + b)).collect()).collect()).collect();
    let h = &j.h;
    let mut out = arr3(proto, m, m, n);
    for k in 0..n {
        let ekh: Mat = h.iter().map(|r| r.iter().map(|t| j.e(t, k)).collect()).collect();
        for a in 0..m {
            for b in 0..m {
                let mut acc = proto.clone();
                for c in 0..m {
                    let mut s = ekh[b][c].clone();
                    for d in 0..m {
                        s -= &h[d][c] * &dn[b][k][d];
                        s -= &h[d][b] * &dn[c][k][d];
                    }
                    acc += &hinv[a][c] * &s;
                }
                out[a][b][k] = &dn[b][k][a] + &(acc * 0.5);
            }
        }
    }
    out
}

fn canonical_ch(j: &MetricJets, ginv: &Mat, proto: &Taylor) -> Arr3 {
    let (n, m) = (j.n, j.m);
    let mut out = arr3(proto, n, n, m);
    for c in 0..m {
        let dg: Mat = j.g.iter().map(|r| r.iter().map(|t| t.partial(n + c)).collect()).collect();
        for i in 0..n {
            for jj in 0..n {
                let mut acc = proto.clone();
                for k in 0..n {
                    acc += &ginv[i][k] * &dg[jj][k];
                }
                out[i][jj][c] = acc * 0.5;
            }
        }
    }
    out
}

fn berwald_lv(j: &MetricJets, proto: &Taylor) -> Arr3 {
    let (n, m) = (j.n, j.m);
    let mut out = arr3(proto, m, m, n);
    for a in 0..m {
        for b in 0..m {
            for k in 0..n {
                out[a][b][k] = j.nc[k][a].partial(n + b);
            }
        }
    }
    out
}

fn require_square(j: &MetricJets, kind: ConnectionKind) -> Result<(), GeomError> {
    if j.n != j.m {
        return Err(GeomError::Shape(format!("{kind:?} connection needs m = n, got n = {}, m = {}", j.n, j.m)));
    }
    Ok(())
}

/// Builds a d-connection from metric jets; the result is one order lower.
pub fn connection_from_jets(kind: ConnectionKind, j: &MetricJets, opts: ConnOptions) -> Result<DConnectionCoeffs, GeomError> {
    let (n, m) = (j.n, j.m);
    let order = j.order();
    if order == 0 {
        return Err(GeomError::Precondition("connection coefficients need metric jets of order >= 1".into()));
    }
    let proto = j.proto().truncate(order - 1);
    let ginv = j.g_inv()?;
    let hinv = j.h_inv()?;
    let zero_c = |a, b, c| arr3(&proto, a, b, c);
    let coeffs = match kind {
        ConnectionKind::Canonical => DConnectionCoeffs {
            n,
            m,
            lh: h_christoffel(j, &ginv, &proto),
            lv: canonical_lv(j, &hinv, &proto),
            ch: canonical_ch(j, &ginv, &proto),
            cv: v_christoffel(j, &hinv, &proto, opts.c_reading),
        },
        ConnectionKind::Cartan | ConnectionKind::Hv => {
            require_square(j, kind)?;
            let lh = h_christoffel(j, &ginv, &proto);
            let reading = if kind == ConnectionKind::Cartan { opts.c_reading } else { CReading::Symmetric };
            let cv = v_christoffel(j, &hinv, &proto, reading);
            let identify = match opts.mixed_fill {
                MixedFill::Auto => blocks_coincide(j),
                MixedFill::Identify => true,
                MixedFill::Canonical => false,
            };
            let (lv, ch) = if identify {
                (lh.clone(), cv.clone())
            } else {
                (canonical_lv(j, &hinv, &proto), canonical_ch(j, &ginv, &proto))
            };
            DConnectionCoeffs { n, m, lh, lv, ch, cv }
        }
        ConnectionKind::Berwald => {
            require_square(j, kind)?;
            let lv = berwald_lv(j, &proto);
            DConnectionCoeffs { n, m, lh: lv.clone(), lv, ch: zero_c(n, n, m), cv: zero_c(m, m, m) }
        }
        ConnectionKind::Chern => {
            let lh = h_christoffel(j, &ginv, &proto);
            let lv = if n == m { lh.clone() } else { canonical_lv(j, &hinv, &proto) };
            DConnectionCoeffs { n, m, lh, lv, ch: zero_c(n, n, m), cv: zero_c(m, m, m) }
        }
        ConnectionKind::Hashiguchi => {
            require_square(j, kind)?;
            let lv = berwald_lv(j, &proto);
            let cv = v_christoffel(j, &hinv, &proto, opts.c_reading);
            DConnectionCoeffs { n, m, lh: lv.clone(), lv, ch: cv.clone(), cv }
        }
    };
    Ok(coeffs)
}

pub fn dconnection(kind: ConnectionKind, g: &DMetric, point: &[f64], opts: ConnOptions) -> Result<DConnectionCoeffs, GeomError> {
    let j = g.jets(point, 2)?;
    connection_from_jets(kind, &j, opts)
}

pub fn canonical_dconnection(g: &DMetric, point: &[f64]) -> Result<DConnectionCoeffs, GeomError> {
    dconnection(ConnectionKind::Canonical, g, point, ConnOptions::default())
}

pub fn cartan_dconnection(g: &DMetric, point: &[f64]) -> Result<DConnectionCoeffs, GeomError> {
    dconnection(ConnectionKind::Cartan, g, point, ConnOptions::default())
}

pub fn hv_dconnection(g: &DMetric, point: &[f64]) -> Result<DConnectionCoeffs, GeomError> {
    dconnection(ConnectionKind::Hv, g, point, ConnOptions::default())
}

pub fn notable_dconnection(kind: &str, g: &DMetric, point: &[f64]) -> Result<DConnectionCoeffs, GeomError> {
    let k: ConnectionKind = kind.parse()?;
    match k {
        ConnectionKind::Berwald | ConnectionKind::Chern | ConnectionKind::Hashiguchi => {
            dconnection(k, g, point, ConnOptions::default())
        }
        other => Err(GeomError::Precondition(format!("{other:?} is not one of berwald, chern, hashiguchi"))),
    }
}

/// Coordinate Christoffel symbols `Γ^ρ_{μν}` stored `[ρ][μ][ν]`, one order below `metric`.
pub fn christoffel_jets(metric: &Mat, point: &[f64]) -> Result<Arr3, GeomError> {
    let d = metric.len();
    let inv = invert_block(metric, "coordinate metric", point)?;
    let order = metric[0][0].order();
    if order == 0 {
        return Err(GeomError::Precondition("Christoffel symbols need metric jets of order >= 1".into()));
    }
    let proto = metric[0][0].zero_like().truncate(order - 1);
    let dg: Vec<Mat> = (0..d).map(|l| metric.iter().map(|r| r.iter().map(|t| t.partial(l)).collect()).collect()).collect();
    let mut out = arr3(&proto, d, d, d);
    for r in 0..d {
        for mu in 0..d {
            for nu in mu..d {
                let mut acc = proto.clone();
                for s in 0..d {
                    let t = &(&dg[mu][nu][s] + &dg[nu][mu][s]) - &dg[s][mu][nu];
                    acc += &inv[r][s] * &t;
                }
                let v = acc * 0.5;
                out[r][nu][mu] = v.clone();
                out[r][mu][nu] = v;
            }
        }
    }
    Ok(out)
}

/// Christoffel symbols of the assembled metric of `g`.
pub fn levi_civita(g: &DMetric, point: &[f64]) -> Result<Val3, GeomError> {
    let full = g.full_metric(point, 1)?;
    Ok(vals3(&christoffel_jets(&full, point)?))
}

/// Levi-Civita coefficients of the assembled metric pushed to the N-adapted frame:
/// `Γ^γ_{αβ} = e^γ_μ e_β^ν (∂_ν e_α^μ + e_α^λ Γ^μ_{λν})`.
pub fn lc_adapted_jets(j: &MetricJets) -> Result<Arr3, GeomError> {
    let (n, m) = (j.n, j.m);
    let d = n + m;
    let full = j.full_metric();
    let gam = christoffel_jets(&full, &j.point)?;
    let order = j.order();
    let proto = j.proto().truncate(order - 1);
    // frame e_α^μ and coframe e^γ_μ as Taylor matrices
    let one = j.proto().const_like(1.0);
    let mut fr = vec![vec![j.proto(); d]; d];
    let mut co = vec![vec![j.proto(); d]; d];
    for a in 0..d {
        fr[a][a] = one.clone();
        co[a][a] = one.clone();
    }
    for i in 0..n {
        for a in 0..m {
            fr[i][n + a] = -&j.nc[i][a];
            co[n + a][i] = j.nc[i][a].clone();
        }
    }
    let nonzero = |t: &Taylor| t.coeffs().iter().any(|v| *v != 0.0);
    let mut out = arr3(&proto, d, d, d);
    for alpha in 0..d {
        for beta in 0..d {
            // v^μ = e_β^ν (∂_ν e_α^μ + e_α^λ Γ^μ_λν)
            let mut v = vec![proto.clone(); d];
            for mu in 0..d {
                let mut acc = proto.clone();
                for nu in 0..d {
                    if !nonzero(&fr[beta][nu]) {
                        continue;
                    }
                    let mut inner = fr[alpha][mu].partial(nu);
                    for l in 0..d {
                        if nonzero(&fr[alpha][l]) {
                            inner += &fr[alpha][l] * &gam[mu][l][nu];
                        }
                    }
                    acc += &fr[beta][nu] * &inner;
                }
                v[mu] = acc;
            }
            for g in 0..d {
                let mut acc = proto.clone();
                for mu in 0..d {
                    if nonzero(&co[g][mu]) {
                        acc += &co[g][mu] * &v[mu];
                    }
                }
                out[g][alpha][beta] = acc;
            }
        }
    }
    Ok(out)
}

/// Which closed forms to use for the distortion tensor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DistortionReading {
    /// The printed component formulas.
    #[default]
    Printed,
    /// Printed formulas with `Z^a_bk` and `Z^a_jb` exchanged and the missing
    /// `Ĉ^i_kb` restored in `Z^i_bk`.
    Corrected,
}

/// Distortion components, each stored `[upper][lower][lower]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DistortionTensor {
    pub n: usize,
    pub m: usize,
    pub z_a_jk: Val3,
    pub z_i_bk: Val3,
    pub z_a_bk: Val3,
    pub z_i_kb: Val3,
    pub z_i_jk: Val3,
    pub z_a_jb: Val3,
    pub z_a_bc: Val3,
    pub z_i_ab: Val3,
}

impl DistortionTensor {
    pub fn max_abs(&self) -> f64 {
        [&self.z_a_jk, &self.z_i_bk, &self.z_a_bk, &self.z_i_kb, &self.z_i_jk, &self.z_a_jb, &self.z_a_bc, &self.z_i_ab]
            .iter()
            .map(|a| max3(a))
            .fold(0.0, f64::max)
    }

    /// As one frame tensor `Z[γ][α][β]` with `β` the direction.
    pub fn frame_tensor(&self) -> Val3 {
        let (n, m) = (self.n, self.m);
        let d = n + m;
        let mut z = vec![vec![vec![0.0; d]; d]; d];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    z[i][j][k] = self.z_i_jk[i][j][k];
                }
            }
            for a in 0..m {
                for k in 0..n {
                    z[i][n + a][k] = self.z_i_bk[i][a][k];
                    z[i][k][n + a] = self.z_i_kb[i][k][a];
                }
                for b in 0..m {
                    z[i][n + a][n + b] = self.z_i_ab[i][a][b];
                }
            }
        }
        for a in 0..m {
            for j in 0..n {
                for k in 0..n {
                    z[n + a][j][k] = self.z_a_jk[a][j][k];
                }
                for b in 0..m {
                    z[n + a][j][n + b] = self.z_a_jb[a][j][b];
                    z[n + a][n + b][j] = self.z_a_bk[a][b][j];
                }
            }
            for b in 0..m {
                for c in 0..m {
                    z[n + a][n + b][n + c] = self.z_a_bc[a][b][c];
                }
            }
        }
        z
    }
}

pub fn distortion_from_jets(j: &MetricJets, reading: DistortionReading) -> Result<DistortionTensor, GeomError> {
    let (n, m) = (j.n, j.m);
    let conn = connection_from_jets(ConnectionKind::Canonical, j, ConnOptions::default())?;
    let cv = conn.values();
    let g = values(&j.g);
    let h = values(&j.h);
    let gi = values(&j.g_inv()?);
    let hi = values(&j.h_inv()?);
    let om: Val3 = omega_jets(j).iter().map(values).collect();
    // T̂^c_ja = L̂^c_aj − ∂_a N_j^c, stored t[c][j][a]
    let mut t = vec![vec![vec![0.0; m]; n]; m];
    for c in 0..m {
        for jj in 0..n {
            for a in 0..m {
                t[c][jj][a] = cv.lv[c][a][jj] - j.nc[jj][c].d1(n + a);
            }
        }
    }
    let ch = &cv.ch;
    let delta = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let xi_h = |i: usize, hh: usize, jj: usize, k: usize| 0.5 * (delta(i, jj) * delta(hh, k) - g[jj][k] * gi[i][hh]);
    let xi_v = |sign: f64, a: usize, b: usize, c: usize, d: usize| 0.5 * (delta(a, c) * delta(b, d) + sign * h[c][d] * hi[a][b]);
    let z3 = |a, b, c| vec![vec![vec![0.0; c]; b]; a];
    let mut out = DistortionTensor {
        n,
        m,
        z_a_jk: z3(m, n, n),
        z_i_bk: z3(n, m, n),
        z_a_bk: z3(m, m, n),
        z_i_kb: z3(n, n, m),
        z_i_jk: z3(n, n, n),
        z_a_jb: z3(m, n, m),
        z_a_bc: z3(m, m, m),
        z_i_ab: z3(n, m, m),
    };
    for a in 0..m {
        for jj in 0..n {
            for k in 0..n {
                let mut s = -0.5 * om[a][jj][k];
                for i in 0..n {
                    for b in 0..m {
                        s -= ch[i][jj][b] * g[i][k] * hi[a][b];
                    }
                }
                out.z_a_jk[a][jj][k] = s;
            }
        }
    }
    for i in 0..n {
        for b in 0..m {
            for k in 0..n {
                let mut omega_part = 0.0;
                for jj in 0..n {
                    for c in 0..m {
                        omega_part += 0.5 * om[c][jj][k] * h[c][b] * gi[jj][i];
                    }
                }
                let mut xi_part = 0.0;
                for jj in 0..n {
                    for hh in 0..n {
                        xi_part += xi_h(i, hh, jj, k) * ch[jj][hh][b];
                    }
                }
                out.z_i_bk[i][b][k] = match reading {
                    DistortionReading::Printed => omega_part - xi_part,
                    DistortionReading::Corrected => omega_part + ch[i][k][b],
                };
                out.z_i_kb[i][k][b] = omega_part + xi_part;
            }
        }
    }
    // xi_t(sign)[a][b][k] = ±Ξ^{ad}_{cb} T̂^c_{kd}
    let xi_t = |sign: f64| {
        let mut r = vec![vec![vec![0.0; n]; m]; m];
        for a in 0..m {
            for b in 0..m {
                for k in 0..n {
                    for c in 0..m {
                        for d in 0..m {
                            r[a][b][k] += xi_v(sign, a, d, c, b) * t[c][k][d];
                        }
                    }
                }
            }
        }
        r
    };
    let (plus, minus) = (xi_t(1.0), xi_t(-1.0));
    // The printed pair sits in swapped slots: the `+Ξ` contraction is the
    // mixed (a, j, b) component and the `−Ξ` one, identically zero, is (a, b, k).
    let (bk, jb) = match reading {
        DistortionReading::Printed => (&plus, &minus),
        DistortionReading::Corrected => (&minus, &plus),
    };
    for a in 0..m {
        for b in 0..m {
            for k in 0..n {
                out.z_a_bk[a][b][k] = bk[a][b][k];
                out.z_a_jb[a][k][b] = jb[a][b][k];
            }
        }
    }
    for i in 0..n {
        for a in 0..m {
            for b in 0..m {
                let mut s = 0.0;
                for jj in 0..n {
                    let mut br = 0.0;
                    for c in 0..m {
                        br += t[c][jj][a] * h[c][b] + t[c][jj][b] * h[c][a];
                    }
                    s -= 0.5 * gi[i][jj] * br;
                }
                out.z_i_ab[i][a][b] = s;
            }
        }
    }
    Ok(out)
}

pub fn distortion_tensor(g: &DMetric, point: &[f64]) -> Result<DistortionTensor, GeomError> {
    distortion_from_jets(&g.jets(point, 2)?, DistortionReading::Printed)
}

/// Maximum componentwise gap between adapted-frame Levi-Civita and canonical + Z.
pub fn distortion_identity_residual(g: &DMetric, point: &[f64], reading: DistortionReading) -> Result<f64, GeomError> {
    let j = g.jets(point, 2)?;
    let lc = vals3(&lc_adapted_jets(&j)?);
    let can = vals3(&connection_from_jets(ConnectionKind::Canonical, &j, ConnOptions::default())?.frame_tensor());
    let z = distortion_from_jets(&j, reading)?.frame_tensor();
    let d = j.dim();
    let mut worst = 0.0f64;
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                worst = worst.max((lc[a][b][c] - can[a][b][c] - z[a][b][c]).abs());
            }
        }
    }
    Ok(worst)
}

/// Maxima of the three Levi-Civita extraction conditions at a set of points.
#[derive(Clone, Debug, PartialEq)]
pub struct LcReport {
    /// `max |L̂^c_aj − e_a(N_j^c)|`
    pub torsion_mixed: f64,
    /// `max |Ĉ^i_jb|`
    pub c_mixed: f64,
    /// `max |Ω^a_ji|`
    pub omega: f64,
    pub extractable: bool,
    pub violated: Vec<&'static str>,
}

pub fn check_lc_conditions(g: &DMetric, points: &[Vec<f64>], tol: f64) -> Result<LcReport, GeomError> {
    let (mut t, mut c, mut o) = (0.0f64, 0.0f64, 0.0f64);
    for p in points {
        let j = g.jets(p, 2)?;
        let conn = connection_from_jets(ConnectionKind::Canonical, &j, ConnOptions::default())?.values();
        let n = j.n;
        for cc in 0..j.m {
            for a in 0..j.m {
                for jj in 0..n {
                    t = t.max((conn.lv[cc][a][jj] - j.nc[jj][cc].d1(n + a)).abs());
                }
            }
        }
        c = c.max(max3(&conn.ch));
        let om: Val3 = omega_jets(&j).iter().map(values).collect();
        o = o.max(max3(&om));
    }
    let mut violated = Vec::new();
    if t > tol {
        violated.push("L^c_aj - e_a(N_j^c)");
    }
    if c > tol {
        violated.push("C^i_jb");
    }
    if o > tol {
        violated.push("Omega^a_ji");
    }
    Ok(LcReport { torsion_mixed: t, c_mixed: c, omega: o, extractable: violated.is_empty(), violated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jetcalc::{constant, field_fn, Field};
    use crate::nholon::ComponentMetric;

    fn conformal2() -> DMetric {
        let psi = |u: &[Taylor]| (&u[0] * 0.3 + u[1].sin() * 0.2).exp();
        ComponentMetric::diagonal(
            vec![field_fn(4, psi), field_fn(4, psi)],
            vec![vec![constant(4, 1.0), constant(4, 1.0)]],
        )
        .unwrap()
        .into_dmetric()
    }

    #[test]
    fn conformal_christoffels() {
        let g = conformal2();
        let p = [0.4, 0.7, 0.1, 0.2];
        let c = canonical_dconnection(&g, &p).unwrap().values();
        let psi_1 = 0.3;
        let psi_2 = 0.2 * 0.7f64.cos();
        assert!((c.lh[0][0][0] - psi_1 / 2.0).abs() < 1e-14);
        assert!((c.lh[0][1][1] + psi_1 / 2.0).abs() < 1e-14);
        assert!((c.lh[0][0][1] - psi_2 / 2.0).abs() < 1e-14);
        let lc = levi_civita(&g, &p).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                for k in 0..2 {
                    assert!((lc[a][b][k] - c.lh[a][b][k]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn flat_is_zero_for_every_kind() {
        let one = || constant(4, 1.0);
        let g = ComponentMetric::diagonal(vec![one(), one()], vec![vec![one(), one()]]).unwrap().into_dmetric();
        for k in [
            ConnectionKind::Canonical,
            ConnectionKind::Cartan,
            ConnectionKind::Hv,
            ConnectionKind::Berwald,
            ConnectionKind::Chern,
            ConnectionKind::Hashiguchi,
        ] {
            let c = dconnection(k, &g, &[0.1, 0.2, 0.3, 0.4], ConnOptions::default()).unwrap();
            assert_eq!(c.values().max_abs(), 0.0, "{k:?}");
        }
    }

    #[test]
    fn schwarzschild_christoffels() {
        // (t, r, θ, φ) with 2M = 1
        let f = |u: &[Taylor]| 1.0 - u[1].recip();
        let g: Vec<Field> = vec![field_fn(4, move |u| -f(u)), field_fn(4, move |u| f(u).recip())];
        let h: Vec<Field> = vec![field_fn(4, |u| u[1].square()), field_fn(4, |u| u[1].square() * u[2].sin().square())];
        let m = ComponentMetric::diagonal(g, vec![h]).unwrap().into_dmetric();
        let (r, th) = (3.0, 0.8);
        let lc = levi_civita(&m, &[0.0, r, th, 0.5]).unwrap();
        let fr = 1.0 - 1.0 / r;
        assert!((lc[0][0][1] - 0.5 / (r * r * fr)).abs() < 1e-12);
        assert!((lc[1][0][0] - 0.5 * fr / (r * r)).abs() < 1e-12);
        assert!((lc[1][2][2] + r * fr).abs() < 1e-12);
        assert!((lc[2][1][2] - 1.0 / r).abs() < 1e-12);
        assert!((lc[3][2][3] - th.cos() / th.sin()).abs() < 1e-12);
        assert!((lc[2][3][3] + th.sin() * th.cos()).abs() < 1e-12);
    }

    fn generic(ydep: bool) -> DMetric {
        let mut cm = ComponentMetric::diagonal(
            vec![
                field_fn(4, move |u| (&u[0] * 0.3 + if ydep { &u[2] * 0.2 } else { u[1].sin() * 0.1 }).exp()),
                field_fn(4, |u| &u[0] * 0.1 + 2.0),
            ],
            vec![vec![
                field_fn(4, |u| (&u[1] * 0.2 + &u[3] * 0.1).exp()),
                field_fn(4, |u| &u[0].square() * 0.1 + 1.0 + &u[2] * 0.2),
            ]],
        )
        .unwrap();
        cm.shell_mut(0).set_n(0, 0, field_fn(4, |u| &u[1] * 0.3 + &u[2] * &u[0] * 0.2));
        cm.shell_mut(0).set_n(1, 1, field_fn(4, |u| u[0].sin() * 0.4 + &u[3] * 0.1));
        cm.into_dmetric()
    }

    #[test]
    fn corrected_distortion_closes_levi_civita() {
        for ydep in [false, true] {
            let g = generic(ydep);
            let r = distortion_identity_residual(&g, &[0.3, 0.5, 0.2, 0.7], DistortionReading::Corrected).unwrap();
            assert!(r < 1e-12, "ydep {ydep}: {r}");
        }
    }

    #[test]
    fn printed_distortion_misplaces_mixed_vertical_slots() {
        let g = generic(false);
        let p = [0.3, 0.5, 0.2, 0.7];
        let r = distortion_identity_residual(&g, &p, DistortionReading::Printed).unwrap();
        assert!(r > 1e-2);
        let pr = distortion_tensor(&g, &p).unwrap();
        let co = distortion_from_jets(&g.jets(&p, 2).unwrap(), DistortionReading::Corrected).unwrap();
        assert_eq!(pr.z_a_bk[0][0][0], co.z_a_jb[0][0][0]);
    }

    #[test]
    fn lc_conditions_report() {
        let g = conformal2();
        let rep = check_lc_conditions(&g, &[vec![0.1, 0.2, 0.3, 0.4]], 1e-10).unwrap();
        assert!(rep.extractable, "{rep:?}");
        let rep = check_lc_conditions(&generic(true), &[vec![0.1, 0.2, 0.3, 0.4]], 1e-10).unwrap();
        assert!(!rep.extractable);
        assert_eq!(rep.violated.len(), 3);
    }

    #[test]
    fn unknown_notable_kind() {
        let g = conformal2();
        assert!(notable_dconnection("weyl", &g, &[0.1, 0.2, 0.3, 0.4]).is_err());
        assert!(notable_dconnection("canonical", &g, &[0.1, 0.2, 0.3, 0.4]).is_err());
    }
}
