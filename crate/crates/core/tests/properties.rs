//! Randomized checks of the library invariants.

use proptest::prelude::*;

use finsler_forge::cli::expr::{parse_field, Expr};
use finsler_forge::cli::{export_csv, read_csv, Table};
use finsler_forge::cosmo::{self, critical_thresholds, HubbleState};
use finsler_forge::dconn::canonical_dconnection;
use finsler_forge::dcurv::dtorsion;
use finsler_forge::finsler_core::{builtin_generator, hessian_metric, sasaki_lift, FinslerFunction, Generator};
use finsler_forge::jetcalc::{fd_gradient, fd_hessian, gauss_legendre, invert_symmetric, matmul, max_identity_defect};
use finsler_forge::nholon::{adapted_frames, NConnection};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn quartic() -> FinslerFunction {
    let f2 = parse_field("sqrt(y1^4 + y2^4) * (1 + 0.1 * x1^2) + 0.2 * sin(x2) * y1 * y2", &["x1", "x2", "y1", "y2"]).unwrap();
    FinslerFunction::new(2, 2, f2).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jets_match_finite_differences(
        a in -2.0..2.0f64, b in -2.0..2.0f64, c in 0.1..1.5f64,
        x in -1.0..1.0f64, y in -1.0..1.0f64,
    ) {
        let src = format!("{a} * sin(x * y) + {b} * exp({c} * x) * y^3 + sqrt(2 + cos(y)) / (1 + x^2)");
        let f = parse_field(&src, &["x", "y"]).unwrap();
        let p = [x, y];
        let t = f.taylor(&p, 2).unwrap();
        let value = |q: &[f64]| f.value(q).unwrap();
        let g = fd_gradient(&value, &p, 1e-5);
        let h = fd_hessian(&value, &p, 1e-4);
        let (tg, th) = (t.gradient(), t.hessian());
        for i in 0..2 {
            prop_assert!(rel(tg[i], g[i]) < 1e-6, "grad {i}: {} vs {}", tg[i], g[i]);
            for j in 0..2 {
                prop_assert!(rel(th[i][j], h[i][j]) < 1e-6, "hess {i}{j}: {} vs {}", th[i][j], h[i][j]);
                prop_assert_eq!(th[i][j], th[j][i]);
            }
        }
        // evaluation is pure
        let again = f.taylor(&p, 2).unwrap();
        prop_assert_eq!(again.coeffs(), t.coeffs());
    }

    #[test]
    fn printed_expressions_reparse(a in -3.0..3.0f64, c in -1e3..1e3f64, k in 1i32..5, x in 0.1..2.0f64) {
        let src = format!("{a} * x^{k} - log(1 + x) / sech(y) + 2^x * ({c}) + -y^-2");
        let vars = ["x", "y"];
        let e = Expr::parse(&src, &vars).unwrap();
        let printed = e.source(&vars).to_string();
        prop_assert_eq!(&Expr::parse(&printed, &vars).unwrap(), &e, "{}", printed);
        let (f, again) = (parse_field(&src, &vars).unwrap(), parse_field(&printed, &vars).unwrap());
        prop_assert_eq!(f.value(&[x, 0.5]).unwrap(), again.value(&[x, 0.5]).unwrap());
    }

    #[test]
    fn symmetric_inverse_round_trips(entries in prop::collection::vec(-1.0..1.0f64, 10), shift in 4.5..8.0f64) {
        let mut m = vec![vec![0.0; 4]; 4];
        let mut k = 0;
        for i in 0..4 {
            for j in i..4 {
                m[i][j] = entries[k];
                m[j][i] = entries[k];
                k += 1;
            }
            m[i][i] += if i == 0 { -shift } else { shift };
        }
        let inv = invert_symmetric(&m).unwrap();
        let back = invert_symmetric(&inv).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((back[i][j] - m[i][j]).abs() < 1e-9);
            }
        }
        prop_assert!(max_identity_defect(&matmul(&m, &inv)) < 1e-12);
    }

    #[test]
    fn gauss_rule_integrates_its_degree(coeffs in prop::collection::vec(-2.0..2.0f64, 1..=10)) {
        // an n-point rule is exact through degree 2n - 1
        let (x, w) = gauss_legendre(5);
        let quad: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * coeffs.iter().rev().fold(0.0, |acc, c| acc * xi + c)).sum();
        let exact: f64 = coeffs.iter().enumerate().map(|(k, c)| if k % 2 == 0 { 2.0 * c / (k as f64 + 1.0) } else { 0.0 }).sum();
        prop_assert!((quad - exact).abs() < 1e-12);
    }

    #[test]
    fn builtin_generators_are_homogeneous(
        b in 0.05..0.4f64, n1 in 0.1..0.5f64,
        x in prop::collection::vec(-1.0..1.0f64, 4),
        y in prop::collection::vec(0.2..1.5f64, 4), beta in 0.3..3.0f64,
    ) {
        let mut point = x.clone();
        // timelike, future directed: y⁰ dominates
        point.extend([3.0 + y[0], y[1], y[2], y[3]]);
        let f = builtin_generator(Generator::Bogoslovsky { b, n_up: vec![1.0, n1, 0.0, 0.0] }).unwrap();
        prop_assert!(f.homogeneity_defect(&point, &[0.5, 2.0, 3.0, beta]).unwrap() < 1e-8);
        prop_assert!(f.euler_defect(&point).unwrap() < 1e-8);
        let m = builtin_generator(Generator::MinkowskiQuadratic { n: 4 }).unwrap();
        prop_assert!(m.homogeneity_defect(&point, &[beta]).unwrap() < 1e-8);
        prop_assert!(m.euler_defect(&point).unwrap() < 1e-8);
    }

    #[test]
    fn quartic_hessian_is_symmetric_and_consistent(
        x1 in -1.0..1.0f64, x2 in -1.0..1.0f64, y1 in 0.3..1.5f64, y2 in 0.3..1.5f64,
    ) {
        let f = quartic();
        let p = [x1, x2, y1, y2];
        let g = hessian_metric(&f, &p).unwrap();
        prop_assert_eq!(g[0][1], g[1][0]);
        prop_assert!(f.euler_defect(&p).unwrap() < 1e-8);
    }

    #[test]
    fn frames_are_dual_and_pure_torsions_vanish(
        x1 in -1.0..1.0f64, x2 in -1.0..1.0f64, y1 in 0.3..1.5f64, y2 in 0.3..1.5f64,
    ) {
        let g = sasaki_lift(&quartic()).unwrap();
        let p = [x1, x2, y1, y2];
        let nconn = NConnection::from_metric(&g);
        prop_assert!(adapted_frames(&nconn, &p).unwrap().duality_defect() < 1e-12);
        let conn = canonical_dconnection(&g, &p).unwrap();
        let t = dtorsion(&conn, &nconn, &p).unwrap();
        let worst = t.hh.iter().chain(&t.vv).flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(worst < 1e-10, "pure torsion {worst}");
        for (i, plane) in t.hh.iter().enumerate() {
            for j in 0..2 {
                for k in 0..2 {
                    prop_assert!((plane[j][k] + t.hh[i][k][j]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn gamma_flow_factorizes(gamma in -4.0..4.0f64, vh in 0.01..5.0f64) {
        let lhs = cosmo::gamma_rhs(gamma, vh).unwrap();
        let rhs = -vh * (gamma - 1.0) * (gamma * gamma + 2.0 * gamma + 0.5);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        // γ̇ from the rate equations directly
        let (hh_dot, vh_dot) = cosmo::hubble_rhs(HubbleState { hh: gamma * vh, vh });
        let direct = (hh_dot * vh - gamma * vh * vh_dot) / (vh * vh);
        prop_assert!((lhs - direct).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn thresholds_balance_acceleration(vh in 0.01..5.0f64) {
        let t = critical_thresholds();
        for gamma in [t.hplus, t.hminus] {
            let (_, vh_dot) = cosmo::hubble_rhs(HubbleState { hh: gamma * vh, vh });
            prop_assert!((vh_dot + vh * vh).abs() < 1e-12 * (1.0 + vh * vh));
        }
        for root in [1.0, t.hatt, t.hrep] {
            prop_assert!(cosmo::gamma_rhs(root, vh).unwrap().abs() < 1e-12 * (1.0 + vh));
        }
    }

    #[test]
    fn csv_round_trips_bit_exact(vals in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..40)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = Table::new(["k", "v"]);
        for (k, v) in vals.iter().enumerate() {
            t.push(vec![k.into(), (*v).into()]);
        }
        export_csv(&t, &path).unwrap();
        let (header, rows) = read_csv(&path).unwrap();
        prop_assert_eq!(header, vec!["k".to_string(), "v".to_string()]);
        for (row, v) in rows.iter().zip(&vals) {
            prop_assert_eq!(row[1].parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
