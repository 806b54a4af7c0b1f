use super::taylor::Taylor;
use super::JetError;

/// Entry type for dense elimination: plain reals or Taylor expansions.
pub trait Entry: Clone {
    fn val(&self) -> f64;
    fn zero_from(&self) -> Self;
    fn one_from(&self) -> Self;
    fn sub_mul(&self, a: &Self, b: &Self) -> Self;
    fn div_by(&self, d: &Self) -> Self;
}

impl Entry for f64 {
    fn val(&self) -> f64 {
        *self
    }
    fn zero_from(&self) -> f64 {
        0.0
    }
    fn one_from(&self) -> f64 {
        1.0
    }
    fn sub_mul(&self, a: &f64, b: &f64) -> f64 {
        self - a * b
    }
    fn div_by(&self, d: &f64) -> f64 {
        self / d
    }
}

impl Entry for Taylor {
    fn val(&self) -> f64 {
        self.value()
    }
    fn zero_from(&self) -> Taylor {
        self.zero_like()
    }
    fn one_from(&self) -> Taylor {
        self.const_like(1.0)
    }
    fn sub_mul(&self, a: &Taylor, b: &Taylor) -> Taylor {
        self - a * b
    }
    fn div_by(&self, d: &Taylor) -> Taylor {
        self / d
    }
}

/// Determinant magnitude below which a matrix counts as degenerate.
pub fn degeneracy_threshold(m: &[Vec<f64>]) -> f64 {
    let scale = m.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    1e-12 * scale.powi(m.len() as i32)
}

/// Inverse by Gauss-Jordan elimination with partial pivoting on values.
/// Also returns the determinant of the value part.
pub fn invert_general<T: Entry>(m: &[Vec<T>]) -> Result<(Vec<Vec<T>>, f64), JetError> {
    let n = m.len();
    if n == 0 {
        return Ok((Vec::new(), 1.0));
    }
    let mut a: Vec<Vec<T>> = m.to_vec();
    let proto = m[0][0].clone();
    let mut inv: Vec<Vec<T>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { proto.one_from() } else { proto.zero_from() }).collect())
        .collect();
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].val().abs().total_cmp(&a[y][col].val().abs()))
            .unwrap_or(col);
        if a[piv][col].val() == 0.0 {
            return Err(JetError::Singular { det: 0.0, threshold: 0.0 });
        }
        if piv != col {
            a.swap(piv, col);
            inv.swap(piv, col);
            det = -det;
        }
        let p = a[col][col].clone();
        det *= p.val();
        for j in 0..n {
            a[col][j] = a[col][j].div_by(&p);
            inv[col][j] = inv[col][j].div_by(&p);
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[r][col].clone();
            for j in 0..n {
                a[r][j] = a[r][j].sub_mul(&factor, &a[col][j]);
                inv[r][j] = inv[r][j].sub_mul(&factor, &inv[col][j]);
            }
        }
    }
    Ok((inv, det))
}

/// Inverse of a symmetric (possibly indefinite) real matrix.
pub fn invert_symmetric(m: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, JetError> {
    let n = m.len();
    for (i, row) in m.iter().enumerate() {
        if row.len() != n {
            return Err(JetError::DimensionMismatch { expected: n, got: row.len() });
        }
        for j in 0..i {
            let tol = 1e-12 * (1.0 + m[i][j].abs().max(m[j][i].abs()));
            if (m[i][j] - m[j][i]).abs() > tol {
                return Err(JetError::Domain(format!("matrix not symmetric at ({i},{j})")));
            }
        }
    }
    let threshold = degeneracy_threshold(m);
    let (mut inv, det) = match invert_general(m) {
        Ok(r) => r,
        Err(_) => return Err(JetError::Singular { det: 0.0, threshold }),
    };
    if det.abs() < threshold {
        return Err(JetError::Singular { det, threshold });
    }
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (inv[i][j] + inv[j][i]);
            inv[i][j] = s;
            inv[j][i] = s;
        }
    }
    Ok(inv)
}

/// Inverse of a symmetric matrix of Taylor expansions, with the degeneracy test on values.
pub fn invert_symmetric_taylor(m: &[Vec<Taylor>]) -> Result<Vec<Vec<Taylor>>, JetError> {
    let vals: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|t| t.value()).collect()).collect();
    let threshold = degeneracy_threshold(&vals);
    let (inv, det) = invert_general(m).map_err(|_| JetError::Singular { det: 0.0, threshold })?;
    if det.abs() < threshold {
        return Err(JetError::Singular { det, threshold });
    }
    Ok(inv)
}

pub fn determinant(m: &[Vec<f64>]) -> f64 {
    invert_general(m).map(|(_, d)| d).unwrap_or(0.0)
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let k = b.len();
    let m = if k == 0 { 0 } else { b[0].len() };
    let mut c = vec![vec![0.0; m]; n];
    for i in 0..n {
        for l in 0..k {
            let x = a[i][l];
            for j in 0..m {
                c[i][j] += x * b[l][j];
            }
        }
    }
    c
}

pub fn max_identity_defect(a: &[Vec<f64>]) -> f64 {
    let mut e = 0.0f64;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let t = if i == j { 1.0 } else { 0.0 };
            e = e.max((v - t).abs());
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_minkowski() {
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(invert_symmetric(&id).unwrap(), id);
        let eta: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if i != j { 0.0 } else if i == 0 { -1.0 } else { 1.0 }).collect())
            .collect();
        assert_eq!(invert_symmetric(&eta).unwrap(), eta);
    }

    #[test]
    fn singular_rejected() {
        let m = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(matches!(invert_symmetric(&m), Err(JetError::Singular { .. })));
    }

    #[test]
    fn indefinite_needs_pivoting() {
        let m = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 2.0], vec![0.0, 2.0, -1.0]];
        let inv = invert_symmetric(&m).unwrap();
        assert!(max_identity_defect(&matmul(&m, &inv)) < 1e-14);
    }

    #[test]
    fn taylor_inverse_differentiates() {
        let u = Taylor::seed(&[0.3], 2);
        let m = vec![
            vec![u[0].exp(), u[0].clone()],
            vec![u[0].clone(), -(u[0].cos())],
        ];
        let inv = invert_symmetric_taylor(&m).unwrap();
        let mut prod = m[0][0].zero_like();
        for k in 0..2 {
            prod += &m[0][k] * &inv[k][0];
        }
        assert!((prod.value() - 1.0).abs() < 1e-14);
        assert!(prod.d1(0).abs() < 1e-13);
        assert!(prod.d2(0, 0).abs() < 1e-12);
    }
}
