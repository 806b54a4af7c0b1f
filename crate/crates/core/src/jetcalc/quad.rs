use std::sync::OnceLock;

use super::taylor::{axpy, Taylor};
use super::JetError;

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * K15_WEIGHTS[7];
    let mut g = fc * G7_WEIGHTS[3];
    for i in 0..7 {
        let x = h * GK_NODES[i];
        let s = f(c - x) + f(c + x);
        k += K15_WEIGHTS[i] * s;
        if i % 2 == 1 {
            g += G7_WEIGHTS[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature of `f` over `[a, b]`.
///
/// Returns an estimate whose accumulated error estimate is below `tol`, or a
/// quadrature error carrying the best estimate after the interval budget runs out.
pub fn quad_1d(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64, JetError> {
    if a == b {
        return Ok(0.0);
    }
    let mut intervals = vec![{
        let (v, e) = gk15(&mut f, a, b);
        (a, b, v, e)
    }];
    let max_intervals = 2000;
    loop {
        let total: f64 = intervals.iter().map(|iv| iv.2).sum();
        let err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if !total.is_finite() {
            return Err(JetError::Quadrature { best: total, error: err });
        }
        if err <= tol.max(4.0 * f64::EPSILON * total.abs()) {
            return Ok(total);
        }
        if intervals.len() >= max_intervals {
            return Err(JetError::Quadrature { best: total, error: err });
        }
        let worst = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _, _) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, z);
        x[n - 1 - i] = z;
        w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

fn legendre_all(n: usize, z: f64) -> Vec<f64> {
    let mut p = vec![1.0, z];
    for k in 1..n {
        let next = ((2 * k + 1) as f64 * z * p[k] - k as f64 * p[k - 1]) / (k + 1) as f64;
        p.push(next);
    }
    p.truncate(n + 1);
    p
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let p = legendre_all(n, z);
    let dp = n as f64 * (z * p[n] - p[n - 1]) / (z * z - 1.0);
    (p[n], dp)
}

/// Gauss-Legendre rule with its spectral integration matrix.
///
/// `s[j][k]` integrates the Lagrange basis polynomial of node `k` from -1 to node `j`,
/// so cumulative integrals at the nodes are `Σ_k s[j][k] f(x_k)`.
#[derive(Debug)]
pub struct PanelRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub s: Vec<Vec<f64>>,
}

impl PanelRule {
    pub fn new(n: usize) -> PanelRule {
        let (x, w) = gauss_legendre(n);
        let p_nodes: Vec<Vec<f64>> = x.iter().map(|&z| legendre_all(n, z)).collect();
        let mut s = vec![vec![0.0; n]; n];
        for j in 0..n {
            let pj = legendre_all(n, x[j]);
            let mut ip = vec![x[j] + 1.0];
            for m in 1..n {
                ip.push((pj[m + 1] - pj[m - 1]) / (2 * m + 1) as f64);
            }
            for k in 0..n {
                s[j][k] = (0..n)
                    .map(|m| w[k] * p_nodes[k][m] * (2 * m + 1) as f64 / 2.0 * ip[m])
                    .sum();
            }
        }
        PanelRule { nodes: x, weights: w, s }
    }

    pub fn standard() -> &'static PanelRule {
        static RULE: OnceLock<PanelRule> = OnceLock::new();
        RULE.get_or_init(|| PanelRule::new(12))
    }
}

fn panel_sum(
    f: &mut dyn FnMut(f64) -> Result<Taylor, JetError>,
    a: f64,
    b: f64,
    panels: usize,
) -> Result<Taylor, JetError> {
    let rule = PanelRule::standard();
    let h = (b - a) / panels as f64;
    let mut acc: Option<Taylor> = None;
    for p in 0..panels {
        let lo = a + h * p as f64;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let v = f(lo + 0.5 * h * (x + 1.0))?;
            match acc.as_mut() {
                Some(t) => axpy(t, 0.5 * h * w, &v),
                None => acc = Some(v * (0.5 * h * w)),
            }
        }
    }
    Ok(acc.expect("at least one panel"))
}

/// Composite Gauss-Legendre integral of a Taylor-valued integrand.
///
/// Panels double until the value coefficient changes by less than `tol`.
pub fn line_taylor(
    mut f: impl FnMut(f64) -> Result<Taylor, JetError>,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<Taylor, JetError> {
    let mut panels = ((b - a).abs() / 0.5).ceil().max(1.0) as usize;
    let mut prev = panel_sum(&mut f, a, b, panels)?;
    for _ in 0..8 {
        panels *= 2;
        let next = panel_sum(&mut f, a, b, panels)?;
        let diff = (next.value() - prev.value()).abs();
        if diff <= tol * (1.0 + next.value().abs()) {
            return Ok(next);
        }
        prev = next;
    }
    Err(JetError::Quadrature { best: prev.value(), error: f64::NAN })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_examples() {
        assert!((quad_1d(|_| 1.0, 0.0, 1.0, 1e-12).unwrap() - 1.0).abs() < 1e-14);
        assert!((quad_1d(|v| v * v, 0.0, 1.0, 1e-12).unwrap() - 1.0 / 3.0).abs() < 1e-10);
        let s = quad_1d(f64::sin, 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!((s - 2.0).abs() < 1e-10);
    }

    #[test]
    fn exact_on_polynomials_up_to_degree_21() {
        for deg in 0..=21 {
            let r = quad_1d(|v| v.powi(deg), -0.5, 1.5, 1e-14).unwrap();
            let exact = (1.5f64.powi(deg + 1) - (-0.5f64).powi(deg + 1)) / (deg + 1) as f64;
            assert!((r - exact).abs() < 1e-12 * exact.abs().max(1.0), "deg {deg}");
        }
    }

    #[test]
    fn nonconvergence_reports_best_estimate() {
        let r = quad_1d(|v| 1.0 / v.abs().sqrt().max(1e-300), -1.0, 1.0, 1e-15);
        match r {
            Err(JetError::Quadrature { best, .. }) => assert!(best > 0.0),
            Ok(v) => assert!(v > 3.0),
            Err(e) => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(12);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(22)).sum();
        assert!((s - 2.0 / 23.0).abs() < 1e-14);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn integration_matrix_is_cumulative() {
        let r = PanelRule::new(10);
        for (j, &xj) in r.nodes.iter().enumerate() {
            let approx: f64 = (0..10).map(|k| r.s[j][k] * (3.0 * r.nodes[k].powi(2))).sum();
            assert!((approx - (xj.powi(3) + 1.0)).abs() < 1e-13);
        }
    }
}
