//! Torsion, curvature, Ricci and Einstein d-tensors of a d-connection, plus a
//! coordinate Riemann oracle for the assembled metric.

use rayon::prelude::*;

use crate::dconn::{christoffel_jets, connection_from_jets, ConnOptions, ConnectionKind, DConnectionCoeffs, Val3};
use crate::jetcalc::Taylor;
use crate::nholon::{invert_block, omega_jets, values, DMetric, GeomError, Mat, MetricJets, NConnection};

pub type Val4 = Vec<Vec<Vec<Vec<f64>>>>;

fn val4(a: usize, b: usize, c: usize, d: usize) -> Val4 {
    vec![vec![vec![vec![0.0; d]; c]; b]; a]
}

fn val3(a: usize, b: usize, c: usize) -> Val3 {
    vec![vec![vec![0.0; c]; b]; a]
}

fn max3(a: &Val3) -> f64 {
    a.iter().flatten().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

fn max4(a: &Val4) -> f64 {
    a.iter().flatten().flatten().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

/// Sign of the mixed torsion entering the two mixed curvature families.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MixedTorsion {
    /// `T^b_ka = L^b_ak − ∂_a N_k^b`, the torsion sign used next to it.
    #[default]
    Printed,
    /// `∂_a N_k^b − L^b_ak`, which makes the families equal `R(e_a, e_k)`.
    Geometric,
}

/// Contraction in the last term of `R^c_bka`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum VerticalMixedIndex {
    /// `C^c_bd T^d_ka`.
    #[default]
    Contracted,
    /// `Σ_d C^c_bd T^c_ka`, character for character.
    Literal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CurvOptions {
    pub mixed_torsion: MixedTorsion,
    pub vertical_index: VerticalMixedIndex,
}

/// The five torsion families, `[upper][lower][lower]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Torsion {
    /// `T^i_jk`
    pub hh: Val3,
    /// `T^i_ja`
    pub hv: Val3,
    /// `T^a_ji`
    pub omega: Val3,
    /// `T^a_bi`
    pub vh: Val3,
    /// `T^a_bc`
    pub vv: Val3,
}

impl Torsion {
    pub fn max_abs(&self) -> f64 {
        [&self.hh, &self.hv, &self.omega, &self.vh, &self.vv].iter().map(|a| max3(a)).fold(0.0, f64::max)
    }
}

/// Curvature families named by their printed index pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct Curvature {
    /// `R^i_hjk`
    pub hhhh: Val4,
    /// `R^a_bjk`
    pub vvhh: Val4,
    /// `R^i_jka`
    pub hhhv: Val4,
    /// `R^c_bka`
    pub vvhv: Val4,
    /// `R^i_jbc`
    pub hhvv: Val4,
    /// `R^a_bcd`
    pub vvvv: Val4,
}

impl Curvature {
    pub fn max_abs(&self) -> f64 {
        [&self.hhhh, &self.vvhh, &self.hhhv, &self.vvhv, &self.hhvv, &self.vvvv].iter().map(|a| max4(a)).fold(0.0, f64::max)
    }

    /// Largest violation of the antisymmetries in the last index pair.
    pub fn antisymmetry_defect(&self) -> f64 {
        let pair = |a: &Val4| {
            let mut e = 0.0f64;
            for x in a {
                for y in x {
                    for (k, zk) in y.iter().enumerate() {
                        for (l, v) in zk.iter().enumerate() {
                            if l < y.len() && k < y[l].len() {
                                e = e.max((v + y[l][k]).abs());
                            }
                        }
                    }
                }
            }
            e
        };
        pair(&self.hhhh).max(pair(&self.vvhh)).max(pair(&self.hhvv)).max(pair(&self.vvvv))
    }
}

/// `(R_ij, R_ia, R_ai, R_ab)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RicciBlocks {
    pub hh: Vec<Vec<f64>>,
    pub hv: Vec<Vec<f64>>,
    pub vh: Vec<Vec<f64>>,
    pub vv: Vec<Vec<f64>>,
}

impl RicciBlocks {
    /// Assembled `R_αβ` in the adapted frame.
    pub fn full(&self) -> Vec<Vec<f64>> {
        let (n, m) = (self.hh.len(), self.vv.len());
        let mut r = vec![vec![0.0; n + m]; n + m];
        for i in 0..n {
            for j in 0..n {
                r[i][j] = self.hh[i][j];
            }
            for a in 0..m {
                r[i][n + a] = self.hv[i][a];
                r[n + a][i] = self.vh[a][i];
            }
        }
        for a in 0..m {
            for b in 0..m {
                r[n + a][n + b] = self.vv[a][b];
            }
        }
        r
    }

    /// `max |R_ia − R_ai|`.
    pub fn asymmetry(&self) -> f64 {
        let mut e = 0.0f64;
        for (i, row) in self.hv.iter().enumerate() {
            for (a, v) in row.iter().enumerate() {
                e = e.max((v - self.vh[a][i]).abs());
            }
        }
        e
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EinsteinPack {
    /// `g^ij R_ij + h^ab R_ab`
    pub scalar: f64,
    /// h-part `g^ij R_ij`
    pub h_scalar: f64,
    /// v-part `h^ab R_ab`
    pub v_scalar: f64,
    /// `E_αβ` in the adapted frame.
    pub einstein: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvaturePack {
    pub torsion: Torsion,
    pub curvature: Curvature,
    pub ricci: RicciBlocks,
    pub einstein: EinsteinPack,
}

fn check_shapes(conn: &DConnectionCoeffs, j: &MetricJets) -> Result<(), GeomError> {
    if conn.n != j.n || conn.m != j.m {
        return Err(GeomError::Shape(format!(
            "connection is {}+{} but the N-connection is {}+{}",
            conn.n, conn.m, j.n, j.m
        )));
    }
    Ok(())
}

/// Torsion from connection jets and the N-connection carried by `j`.
pub fn torsion_from(conn: &DConnectionCoeffs, j: &MetricJets) -> Result<Torsion, GeomError> {
    check_shapes(conn, j)?;
    let (n, m) = (j.n, j.m);
    let c = conn.values();
    let om: Val3 = omega_jets(j).iter().map(values).collect();
    let mut t = Torsion { hh: val3(n, n, n), hv: c.ch.clone(), omega: om, vh: val3(m, m, n), vv: val3(m, m, m) };
    for i in 0..n {
        for a in 0..n {
            for k in 0..n {
                t.hh[i][a][k] = c.lh[i][a][k] - c.lh[i][k][a];
            }
        }
    }
    for a in 0..m {
        for b in 0..m {
            for i in 0..n {
                t.vh[a][b][i] = j.nc[i][a].d1(n + b) - c.lv[a][b][i];
            }
            for cc in 0..m {
                t.vv[a][b][cc] = c.cv[a][b][cc] - c.cv[a][cc][b];
            }
        }
    }
    Ok(t)
}

pub fn dtorsion(conn: &DConnectionCoeffs, nconn: &NConnection, point: &[f64]) -> Result<Torsion, GeomError> {
    torsion_from(conn, &nconn.as_metric_jets(point, 1)?)
}

/// Curvature families; `conn` must carry at least first-order jets.
pub fn curvature_from(conn: &DConnectionCoeffs, j: &MetricJets, opts: CurvOptions) -> Result<Curvature, GeomError> {
    check_shapes(conn, j)?;
    let (n, m) = (j.n, j.m);
    let v = conn.values();
    let (lh, lv, ch, cv) = (&v.lh, &v.lv, &v.ch, &v.cv);
    let om: Val3 = omega_jets(j).iter().map(values).collect();
    let e = |t: &Taylor, alpha: usize| j.e(t, alpha).value();
    // mixed torsion T^b_ka stored [b][k][a]
    let mut tm = val3(m, n, m);
    for b in 0..m {
        for k in 0..n {
            for a in 0..m {
                let dn = j.nc[k][b].d1(n + a);
                tm[b][k][a] = match opts.mixed_torsion {
                    MixedTorsion::Printed => lv[b][a][k] - dn,
                    MixedTorsion::Geometric => dn - lv[b][a][k],
                };
            }
        }
    }
    let mut r = Curvature {
        hhhh: val4(n, n, n, n),
        vvhh: val4(m, m, n, n),
        hhhv: val4(n, n, n, m),
        vvhv: val4(m, m, n, m),
        hhvv: val4(n, n, m, m),
        vvvv: val4(m, m, m, m),
    };
    for i in 0..n {
        for h in 0..n {
            for jj in 0..n {
                for k in 0..n {
                    let mut s = e(&conn.lh[i][h][jj], k) - e(&conn.lh[i][h][k], jj);
                    for mm in 0..n {
                        s += lh[mm][h][jj] * lh[i][mm][k] - lh[mm][h][k] * lh[i][mm][jj];
                    }
                    for a in 0..m {
                        s -= ch[i][h][a] * om[a][k][jj];
                    }
                    r.hhhh[i][h][jj][k] = s;
                }
            }
        }
    }
    for a in 0..m {
        for b in 0..m {
            for jj in 0..n {
                for k in 0..n {
                    let mut s = e(&conn.lv[a][b][jj], k) - e(&conn.lv[a][b][k], jj);
                    for c in 0..m {
                        s += lv[c][b][jj] * lv[a][c][k] - lv[c][b][k] * lv[a][c][jj];
                        s -= cv[a][b][c] * om[c][k][jj];
                    }
                    r.vvhh[a][b][jj][k] = s;
                }
            }
        }
    }
    // R^i_jka = e_a L^i_jk − D_k C^i_ja + C^i_jb T^b_ka
    for i in 0..n {
        for jj in 0..n {
            for k in 0..n {
                for a in 0..m {
                    let mut dkc = e(&conn.ch[i][jj][a], k);
                    for mm in 0..n {
                        dkc += lh[i][mm][k] * ch[mm][jj][a] - lh[mm][jj][k] * ch[i][mm][a];
                    }
                    for b in 0..m {
                        dkc -= lv[b][a][k] * ch[i][jj][b];
                    }
                    let mut s = e(&conn.lh[i][jj][k], n + a) - dkc;
                    for b in 0..m {
                        s += ch[i][jj][b] * tm[b][k][a];
                    }
                    r.hhhv[i][jj][k][a] = s;
                }
            }
        }
    }
    // R^c_bka = e_a L^c_bk − D_k C^c_ba + C^c_bd T^d_ka
    for c in 0..m {
        for b in 0..m {
            for k in 0..n {
                for a in 0..m {
                    let mut dkc = e(&conn.cv[c][b][a], k);
                    for d in 0..m {
                        dkc += lv[c][d][k] * cv[d][b][a] - lv[d][b][k] * cv[c][d][a] - lv[d][a][k] * cv[c][b][d];
                    }
                    let mut s = e(&conn.lv[c][b][k], n + a) - dkc;
                    for d in 0..m {
                        let t = match opts.vertical_index {
                            VerticalMixedIndex::Contracted => tm[d][k][a],
                            VerticalMixedIndex::Literal => tm[c][k][a],
                        };
                        s += cv[c][b][d] * t;
                    }
                    r.vvhv[c][b][k][a] = s;
                }
            }
        }
    }
    for i in 0..n {
        for jj in 0..n {
            for b in 0..m {
                for c in 0..m {
                    let mut s = e(&conn.ch[i][jj][b], n + c) - e(&conn.ch[i][jj][c], n + b);
                    for h in 0..n {
                        s += ch[h][jj][b] * ch[i][h][c] - ch[h][jj][c] * ch[i][h][b];
                    }
                    r.hhvv[i][jj][b][c] = s;
                }
            }
        }
    }
    for a in 0..m {
        for b in 0..m {
            for c in 0..m {
                for d in 0..m {
                    let mut s = e(&conn.cv[a][b][c], n + d) - e(&conn.cv[a][b][d], n + c);
                    for ee in 0..m {
                        s += cv[ee][b][c] * cv[a][ee][d] - cv[ee][b][d] * cv[a][ee][c];
                    }
                    r.vvvv[a][b][c][d] = s;
                }
            }
        }
    }
    Ok(r)
}

pub fn dcurvature(conn: &DConnectionCoeffs, nconn: &NConnection, point: &[f64], opts: CurvOptions) -> Result<Curvature, GeomError> {
    curvature_from(conn, &nconn.as_metric_jets(point, 1)?, opts)
}

pub fn ricci_dtensor(curv: &Curvature) -> RicciBlocks {
    let n = curv.hhhh.len();
    let m = curv.vvvv.len();
    let mut r = RicciBlocks { hh: vec![vec![0.0; n]; n], hv: vec![vec![0.0; m]; n], vh: vec![vec![0.0; n]; m], vv: vec![vec![0.0; m]; m] };
    for i in 0..n {
        for jj in 0..n {
            r.hh[i][jj] = (0..n).map(|k| curv.hhhh[k][i][jj][k]).sum();
        }
        for a in 0..m {
            r.hv[i][a] = -(0..n).map(|k| curv.hhhv[k][i][k][a]).sum::<f64>();
        }
    }
    for a in 0..m {
        for i in 0..n {
            r.vh[a][i] = (0..m).map(|b| curv.vvhv[b][a][i][b]).sum();
        }
        for b in 0..m {
            r.vv[a][b] = (0..m).map(|c| curv.vvvv[c][a][b][c]).sum();
        }
    }
    r
}

fn einstein_blocks(g: &[Vec<f64>], h: &[Vec<f64>], gi: &[Vec<f64>], hi: &[Vec<f64>], ricci: &RicciBlocks) -> EinsteinPack {
    let (n, m) = (g.len(), h.len());
    let mut hs = 0.0;
    for i in 0..n {
        for jj in 0..n {
            hs += gi[i][jj] * ricci.hh[i][jj];
        }
    }
    let mut vs = 0.0;
    for a in 0..m {
        for b in 0..m {
            vs += hi[a][b] * ricci.vv[a][b];
        }
    }
    let s = hs + vs;
    let mut e = ricci.full();
    for i in 0..n {
        for jj in 0..n {
            e[i][jj] -= 0.5 * g[i][jj] * s;
        }
    }
    for a in 0..m {
        for b in 0..m {
            e[n + a][n + b] -= 0.5 * h[a][b] * s;
        }
    }
    EinsteinPack { scalar: s, h_scalar: hs, v_scalar: vs, einstein: e }
}

pub fn scalar_and_einstein(g: &DMetric, ricci: &RicciBlocks, point: &[f64]) -> Result<EinsteinPack, GeomError> {
    let j = g.jets(point, 0)?;
    Ok(einstein_from(&j, ricci)?)
}

fn einstein_from(j: &MetricJets, ricci: &RicciBlocks) -> Result<EinsteinPack, GeomError> {
    let gi = values(&j.g_inv()?);
    let hi = values(&j.h_inv()?);
    Ok(einstein_blocks(&values(&j.g), &values(&j.h), &gi, &hi, ricci))
}

/// `Q = D g` by families.
#[derive(Clone, Debug, PartialEq)]
pub struct Nonmetricity {
    /// `Q_kij`
    pub hhh: Val3,
    /// `Q_kab`
    pub hvv: Val3,
    /// `Q_cij`
    pub vhh: Val3,
    /// `Q_cab`
    pub vvv: Val3,
}

impl Nonmetricity {
    pub fn max_abs(&self) -> f64 {
        max3(&self.hhh).max(max3(&self.hvv)).max(max3(&self.vhh)).max(max3(&self.vvv))
    }
}

pub fn nonmetricity_from(conn: &DConnectionCoeffs, j: &MetricJets) -> Result<Nonmetricity, GeomError> {
    check_shapes(conn, j)?;
    let (n, m) = (j.n, j.m);
    let v = conn.values();
    let g = values(&j.g);
    let h = values(&j.h);
    let mut q = Nonmetricity { hhh: val3(n, n, n), hvv: val3(n, m, m), vhh: val3(m, n, n), vvv: val3(m, m, m) };
    for k in 0..n {
        for a in 0..n {
            for b in 0..n {
                let mut s = j.e(&j.g[a][b], k).value();
                for mm in 0..n {
                    s -= v.lh[mm][a][k] * g[mm][b] + v.lh[mm][b][k] * g[a][mm];
                }
                q.hhh[k][a][b] = s;
            }
        }
        for a in 0..m {
            for b in 0..m {
                let mut s = j.e(&j.h[a][b], k).value();
                for c in 0..m {
                    s -= v.lv[c][a][k] * h[c][b] + v.lv[c][b][k] * h[a][c];
                }
                q.hvv[k][a][b] = s;
            }
        }
    }
    for c in 0..m {
        for a in 0..n {
            for b in 0..n {
                let mut s = j.g[a][b].d1(n + c);
                for mm in 0..n {
                    s -= v.ch[mm][a][c] * g[mm][b] + v.ch[mm][b][c] * g[a][mm];
                }
                q.vhh[c][a][b] = s;
            }
        }
        for a in 0..m {
            for b in 0..m {
                let mut s = j.h[a][b].d1(n + c);
                for d in 0..m {
                    s -= v.cv[d][a][c] * h[d][b] + v.cv[d][b][c] * h[a][d];
                }
                q.vvv[c][a][b] = s;
            }
        }
    }
    Ok(q)
}

/// Nonmetricity of `conn` (computed at `point`) with respect to `g`.
pub fn nonmetricity(conn: &DConnectionCoeffs, g: &DMetric, point: &[f64]) -> Result<Nonmetricity, GeomError> {
    nonmetricity_from(conn, &g.jets(point, 1)?)
}

/// Everything for one connection kind at one point.
pub fn curvature_pack(
    g: &DMetric,
    kind: ConnectionKind,
    conn_opts: ConnOptions,
    opts: CurvOptions,
    point: &[f64],
) -> Result<CurvaturePack, GeomError> {
    let j = g.jets(point, 2)?;
    let conn = connection_from_jets(kind, &j, conn_opts)?;
    let torsion = torsion_from(&conn, &j)?;
    let curvature = curvature_from(&conn, &j, opts)?;
    let ricci = ricci_dtensor(&curvature);
    let einstein = einstein_from(&j, &ricci)?;
    Ok(CurvaturePack { torsion, curvature, ricci, einstein })
}

/// Parallel map of [`curvature_pack`] over points.
pub fn curvature_scan(
    g: &DMetric,
    kind: ConnectionKind,
    conn_opts: ConnOptions,
    opts: CurvOptions,
    points: &[Vec<f64>],
) -> Result<Vec<CurvaturePack>, GeomError> {
    points.par_iter().map(|p| curvature_pack(g, kind, conn_opts, opts, p)).collect()
}

/// Coordinate Riemann tensor `R^ρ_{σμν}` of a metric given by second-order jets.
pub fn riemann_from_metric(metric: &Mat, point: &[f64]) -> Result<Val4, GeomError> {
    let d = metric.len();
    let gam = christoffel_jets(metric, point)?;
    let gv: Val3 = gam.iter().map(values).collect();
    let mut r = val4(d, d, d, d);
    for rho in 0..d {
        for s in 0..d {
            for mu in 0..d {
                for nu in (mu + 1)..d {
                    let mut v = gam[rho][nu][s].d1(mu) - gam[rho][mu][s].d1(nu);
                    for l in 0..d {
                        v += gv[rho][mu][l] * gv[l][nu][s] - gv[rho][nu][l] * gv[l][mu][s];
                    }
                    r[rho][s][mu][nu] = v;
                    r[rho][s][nu][mu] = -v;
                }
            }
        }
    }
    Ok(r)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateCurvature {
    pub ricci: Vec<Vec<f64>>,
    pub scalar: f64,
    pub einstein: Vec<Vec<f64>>,
}

pub fn coordinate_curvature_from(metric: &Mat, point: &[f64]) -> Result<CoordinateCurvature, GeomError> {
    let d = metric.len();
    let r = riemann_from_metric(metric, point)?;
    let inv = values(&invert_block(metric, "coordinate metric", point)?);
    let g = values(metric);
    let mut ric = vec![vec![0.0; d]; d];
    for s in 0..d {
        for nu in 0..d {
            ric[s][nu] = (0..d).map(|rho| r[rho][s][rho][nu]).sum();
        }
    }
    let mut scalar = 0.0;
    for a in 0..d {
        for b in 0..d {
            scalar += inv[a][b] * ric[a][b];
        }
    }
    let einstein = (0..d).map(|a| (0..d).map(|b| ric[a][b] - 0.5 * g[a][b] * scalar).collect()).collect();
    Ok(CoordinateCurvature { ricci: ric, scalar, einstein })
}

/// Ricci, scalar and Einstein tensors of the assembled metric in coordinates.
pub fn coordinate_curvature(g: &DMetric, point: &[f64]) -> Result<CoordinateCurvature, GeomError> {
    coordinate_curvature_from(&g.full_metric(point, 2)?, point)
}

/// `T_αβ = e_α^μ e_β^ν T_μν` with `e_i = ∂_i − N_i^a ∂_a`.
pub fn to_adapted_frame(t: &[Vec<f64>], nvals: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = nvals.len();
    let d = t.len();
    let m = d - n;
    let frame = |alpha: usize| -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[alpha] = 1.0;
        if alpha < n {
            for a in 0..m {
                v[n + a] = -nvals[alpha][a];
            }
        }
        v
    };
    let frames: Vec<Vec<f64>> = (0..d).map(frame).collect();
    let mut out = vec![vec![0.0; d]; d];
    for a in 0..d {
        for b in 0..d {
            let mut s = 0.0;
            for mu in 0..d {
                if frames[a][mu] == 0.0 {
                    continue;
                }
                for nu in 0..d {
                    s += frames[a][mu] * frames[b][nu] * t[mu][nu];
                }
            }
            out[a][b] = s;
        }
    }
    out
}

/// Coordinate Einstein tensor of the assembled metric, expressed in the adapted frame.
pub fn coordinate_einstein_adapted(g: &DMetric, point: &[f64]) -> Result<Vec<Vec<f64>>, GeomError> {
    let j = g.jets(point, 2)?;
    let cc = coordinate_curvature_from(&j.full_metric(), point)?;
    Ok(to_adapted_frame(&cc.einstein, &values(&j.nc)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dconn::canonical_dconnection;
    use crate::jetcalc::{constant, field_fn};
    use crate::nholon::ComponentMetric;

    fn sphere() -> DMetric {
        // (θ, φ | y1, y2) with a flat fibre
        ComponentMetric::diagonal(
            vec![constant(4, 1.0), field_fn(4, |u| u[0].sin().square())],
            vec![vec![constant(4, 1.0), constant(4, 1.0)]],
        )
        .unwrap()
        .into_dmetric()
    }

    #[test]
    fn unit_sphere() {
        let g = sphere();
        let th = 0.9;
        let p = [th, 0.3, 0.1, 0.2];
        let pack = curvature_pack(&g, ConnectionKind::Canonical, ConnOptions::default(), CurvOptions::default(), &p).unwrap();
        // the printed family is R(e_k, e_j) e_h, so R^θ_φφθ carries +sin²θ
        assert!((pack.curvature.hhhh[0][1][1][0] - th.sin().powi(2)).abs() < 1e-12);
        assert!((pack.curvature.hhhh[0][1][0][1] + th.sin().powi(2)).abs() < 1e-12);
        assert!((pack.einstein.h_scalar - 2.0).abs() < 1e-12);
        assert!(pack.einstein.v_scalar.abs() < 1e-14);
        let cc = coordinate_curvature(&g, &p).unwrap();
        assert!((cc.scalar - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flat_everything_zero() {
        let one = || constant(4, 1.0);
        let g = ComponentMetric::diagonal(vec![one(), one()], vec![vec![one(), one()]]).unwrap().into_dmetric();
        let pack = curvature_pack(&g, ConnectionKind::Canonical, ConnOptions::default(), CurvOptions::default(), &[0.1; 4]).unwrap();
        assert_eq!(pack.torsion.max_abs(), 0.0);
        assert_eq!(pack.curvature.max_abs(), 0.0);
        assert_eq!(pack.einstein.scalar, 0.0);
    }

    #[test]
    fn torsion_of_pure_n_connection() {
        // N_0^1 = x1² so Ω^1_01 = e_1 N_0 − e_0 N_1 = 2 x1
        let nconn = NConnection::new(2, 2, vec![vec![None, Some(field_fn(4, |u| u[1].square()))], vec![None, None]]).unwrap();
        let one = || constant(4, 1.0);
        let g = ComponentMetric::diagonal(vec![one(), one()], vec![vec![one(), one()]]).unwrap().into_dmetric();
        let p = [0.2, 0.6, 0.0, 0.0];
        let conn = canonical_dconnection(&g, &p).unwrap();
        let t = dtorsion(&conn, &nconn, &p).unwrap();
        assert!((t.omega[1][0][1] - 1.2).abs() < 1e-14);
        assert!((t.omega[1][1][0] + 1.2).abs() < 1e-14);
    }

    #[test]
    fn canonical_is_metric_compatible_with_off_diagonal_terms() {
        let mut cm = ComponentMetric::diagonal(
            vec![field_fn(4, |u| (&u[0] * 0.3 + &u[2] * 0.2).exp()), field_fn(4, |u| &u[0] * 0.1 + 2.0)],
            vec![vec![field_fn(4, |u| (&u[1] * 0.2 + &u[3] * 0.1).exp()), field_fn(4, |u| &u[0].square() * 0.1 + 1.0 + &u[2] * 0.2)]],
        )
        .unwrap();
        cm.shell_mut(0).set_n(0, 0, field_fn(4, |u| &u[1] * 0.3 + &u[2] * &u[0] * 0.2));
        let g = cm.into_dmetric();
        let p = [0.3, 0.5, 0.2, 0.7];
        let conn = canonical_dconnection(&g, &p).unwrap();
        assert!(nonmetricity(&conn, &g, &p).unwrap().max_abs() < 1e-13);
        let pack = curvature_pack(&g, ConnectionKind::Canonical, ConnOptions::default(), CurvOptions::default(), &p).unwrap();
        assert!(max3(&pack.torsion.hh) < 1e-13 && max3(&pack.torsion.vv) < 1e-13);
        assert!(pack.curvature.antisymmetry_defect() < 1e-13);
        assert!(pack.ricci.asymmetry() > 1e-6);
    }

    #[test]
    fn schwarzschild_is_vacuum() {
        let f = |u: &[Taylor]| 1.0 - u[1].recip();
        let m = ComponentMetric::diagonal(
            vec![field_fn(4, move |u| -f(u)), field_fn(4, move |u| f(u).recip())],
            vec![vec![field_fn(4, |u| u[1].square()), field_fn(4, |u| u[1].square() * u[2].sin().square())]],
        )
        .unwrap()
        .into_dmetric();
        let p = [0.0, 3.0, 0.8, 0.5];
        let cc = coordinate_curvature(&m, &p).unwrap();
        assert!(cc.ricci.iter().flatten().all(|v| v.abs() < 1e-12));
        // h = (r², r² sin²θ) depends on x only through r, and on y: the canonical
        // connection differs from Levi-Civita but its d-Einstein is still finite
        let pack = curvature_pack(&m, ConnectionKind::Canonical, ConnOptions::default(), CurvOptions::default(), &p).unwrap();
        assert!(pack.einstein.scalar.is_finite());
    }

    #[test]
    fn lc_extractable_metric_matches_coordinate_einstein() {
        // g(x), N_i^a = −∂_i φ^a(x), h = H(y − φ(x))
        let phi0 = |u: &[Taylor]| u[0].sin() * 0.5 + &u[1] * &u[0] * 0.2;
        let phi1 = |u: &[Taylor]| u[1].square() * 0.3;
        let mut cm = ComponentMetric::diagonal(
            vec![field_fn(4, |u| -(&u[1] * 0.2).exp()), field_fn(4, |u| u[0].cosh())],
            vec![vec![
                field_fn(4, move |u| (&(&u[2] - &phi0(u)) * 0.4).exp()),
                field_fn(4, move |u| (&u[3] - &phi1(u)).square() * 0.3 + 1.0),
            ]],
        )
        .unwrap();
        cm.shell_mut(0).set_n(0, 0, field_fn(4, |u| -(u[0].cos() * 0.5 + &u[1] * 0.2)));
        cm.shell_mut(0).set_n(1, 0, field_fn(4, |u| -(&u[0] * 0.2)));
        cm.shell_mut(0).set_n(1, 1, field_fn(4, |u| -(&u[1] * 0.6)));
        let g = cm.into_dmetric();
        let p = vec![0.3, 0.4, 0.5, 0.6];
        let rep = crate::dconn::check_lc_conditions(&g, &[p.clone()], 1e-12).unwrap();
        assert!(rep.extractable, "{rep:?}");
        let pack = curvature_pack(&g, ConnectionKind::Canonical, ConnOptions::default(), CurvOptions::default(), &p).unwrap();
        let coord = coordinate_einstein_adapted(&g, &p).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert!((pack.einstein.einstein[a][b] - coord[a][b]).abs() < 1e-10, "[{a}][{b}]");
            }
        }
    }

    fn finsler_lift() -> DMetric {
        let f2 = field_fn(4, |u| {
            let s = u[2].square() + u[3].square();
            &(&s * &(&u[0] * 0.3 + &u[1] * 0.1).exp()) + &(u[2].powi(4) * 0.2 / &s)
        });
        crate::finsler_core::sasaki_lift(&crate::finsler_core::FinslerFunction::new(2, 2, f2).unwrap()).unwrap()
    }

    #[test]
    fn cartan_compatibility_and_fill() {
        use crate::dconn::{dconnection, MixedFill};
        let p = [0.2, 0.1, 1.0, 0.7];
        let lift = finsler_lift();
        for kind in [ConnectionKind::Canonical, ConnectionKind::Cartan, ConnectionKind::Hv] {
            let c = dconnection(kind, &lift, &p, ConnOptions::default()).unwrap();
            assert!(nonmetricity(&c, &lift, &p).unwrap().max_abs() < 1e-10, "{kind:?}");
        }
        let chern = dconnection(ConnectionKind::Chern, &lift, &p, ConnOptions::default()).unwrap();
        assert!(nonmetricity(&chern, &lift, &p).unwrap().max_abs() > 1e-4);
        // g ≠ h: identification breaks compatibility, the canonical fill keeps it
        let generic = ComponentMetric::diagonal(
            vec![field_fn(4, |u| (&u[0] * 0.3).exp()), constant(4, 2.0)],
            vec![vec![field_fn(4, |u| &u[1].square() + 1.0), field_fn(4, |u| (&u[2] * 0.2).exp())]],
        )
        .unwrap()
        .into_dmetric();
        let auto = dconnection(ConnectionKind::Cartan, &generic, &p, ConnOptions::default()).unwrap();
        assert!(nonmetricity(&auto, &generic, &p).unwrap().max_abs() < 1e-12);
        let ident = ConnOptions { mixed_fill: MixedFill::Identify, ..Default::default() };
        let bad = dconnection(ConnectionKind::Cartan, &generic, &p, ident).unwrap();
        assert!(nonmetricity(&bad, &generic, &p).unwrap().max_abs() > 1e-3);
    }
}
