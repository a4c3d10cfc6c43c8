//! Dense complex matrix routines: exponentials, eigen-decompositions, restricted inverses.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn norm1(m: &CMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// exp(m t) by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(m: &CMatrix, t: f64) -> Result<CMatrix> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::InvalidInput("expm requires a square matrix".into()));
    }
    if !is_finite(m) || !t.is_finite() {
        return Err(Error::Numerical("expm input is not finite".into()));
    }
    let a = m * c(t);
    let nrm = norm1(&a);
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * c(0.5f64.powi(s));
    let b = PADE13;
    let id = CMatrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * c(b[13]) + &a4 * c(b[11]) + &a2 * c(b[9]));
    let u = &a
        * (inner_u + &a6 * c(b[7]) + &a4 * c(b[5]) + &a2 * c(b[3]) + &id * c(b[1]));
    let inner_v = &a6 * (&a6 * c(b[12]) + &a4 * c(b[10]) + &a2 * c(b[8]));
    let v = inner_v + &a6 * c(b[6]) + &a4 * c(b[4]) + &a2 * c(b[2]) + &id * c(b[0]);
    let mut r = (&v - &u)
        .lu()
        .solve(&(&v + &u))
        .ok_or_else(|| Error::Numerical("singular Padé denominator in expm".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    if !is_finite(&r) {
        return Err(Error::Numerical("matrix exponential overflowed".into()));
    }
    Ok(r)
}

/// Complex Schur form m = Q T Q†.
pub fn schur(m: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let s = nalgebra::linalg::Schur::try_new(m.clone(), 1e-15, 100_000)
        .ok_or_else(|| Error::Numerical("Schur iteration did not converge".into()))?;
    Ok(s.unpack())
}

pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    let (_, t) = schur(m)?;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Eigenvalues and (unit-norm) eigenvectors, columns of the returned matrix.
pub fn eigen_decomposition(m: &CMatrix) -> Result<(Vec<C64>, CMatrix)> {
    let (q, t) = schur(m)?;
    let n = t.nrows();
    let small = f64::EPSILON * t.norm().max(1.0);
    let mut y = CMatrix::zeros(n, n);
    for k in 0..n {
        let lam = t[(k, k)];
        y[(k, k)] = c(1.0);
        for i in (0..k).rev() {
            let mut s = C64::new(0.0, 0.0);
            for j in (i + 1)..=k {
                s += t[(i, j)] * y[(j, k)];
            }
            let mut d = t[(i, i)] - lam;
            if d.norm() < small {
                d = c(small);
            }
            y[(i, k)] = -s / d;
        }
        let nrm = y.column(k).norm();
        y.column_mut(k).scale_mut(1.0 / nrm);
    }
    let values = (0..n).map(|i| t[(i, i)]).collect();
    Ok((values, q * y))
}

/// exp(m t) through the eigen-decomposition; only meaningful for diagonalizable m.
pub fn expm_eig(m: &CMatrix, t: f64) -> Result<CMatrix> {
    let (vals, v) = eigen_decomposition(m)?;
    let vinv = v
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("eigenvector matrix is singular".into()))?;
    let d = CMatrix::from_diagonal(&CVector::from_iterator(
        vals.len(),
        vals.iter().map(|l| (l * t).exp()),
    ));
    let r = v * d * vinv;
    if !is_finite(&r) {
        return Err(Error::Numerical("matrix exponential overflowed".into()));
    }
    Ok(r)
}

/// Smallest |Re λ| among eigenvalues whose real part is not numerically zero.
pub fn slowest_decay_rate(m: &CMatrix) -> Result<Option<f64>> {
    let tol = 1e-8 * m.norm().max(1.0);
    Ok(eigenvalues(m)?
        .into_iter()
        .map(|l| -l.re)
        .filter(|r| *r > tol)
        .reduce(f64::min))
}

/// Orthonormal basis (columns) of the range of m.
pub fn range_basis(m: &CMatrix, rel_tol: f64) -> CMatrix {
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut idx: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > rel_tol * smax.max(f64::MIN_POSITIVE))
        .collect();
    idx.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });
    let cols: Vec<CVector> = idx.iter().map(|&i| u.column(i).into_owned()).collect();
    if cols.is_empty() {
        CMatrix::zeros(m.nrows(), 0)
    } else {
        CMatrix::from_columns(&cols)
    }
}

pub fn condition_number(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin == 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Inverse of `l` on the l-invariant subspace range(q), composed with q.
///
/// The result X satisfies L X L = L and X L X = X whenever P L = 0 with P = I - q.
pub fn restricted_inverse(l: &CMatrix, q: &CMatrix) -> Result<CMatrix> {
    let b = range_basis(q, 1e-8);
    if b.ncols() == 0 {
        return Ok(CMatrix::zeros(l.nrows(), l.ncols()));
    }
    let bh = b.adjoint();
    let m = &bh * l * &b;
    let condition = condition_number(&m);
    if !(condition < 1e12) {
        return Err(Error::Singular { condition });
    }
    let minv = m
        .lu()
        .try_inverse()
        .ok_or(Error::Singular {
            condition: f64::INFINITY,
        })?;
    Ok(&b * minv * bh * q)
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// -∫_0^∞ e^{l u} q du by Gauss-Legendre on a short panel and exact interval doubling.
pub fn relaxation_integral(l: &CMatrix, q: &CMatrix) -> Result<CMatrix> {
    let h = 1.0 / l.norm().max(1e-300);
    let (x, w) = gauss_legendre(24);
    let mut g = CMatrix::zeros(l.nrows(), q.ncols());
    for (xi, wi) in x.iter().zip(&w) {
        let u = 0.5 * h * (xi + 1.0);
        g += expm(l, u)? * q * c(0.5 * h * wi);
    }
    let mut e = expm(l, h)?;
    let qn = q.norm().max(1e-300);
    for _ in 0..200 {
        if (&e * q).norm() < 1e-13 * qn {
            return Ok(-g);
        }
        g = &g + &e * &g;
        e = &e * &e;
    }
    Err(Error::Numerical(
        "relaxation integral did not converge; generator is not contracting on range(q)".into(),
    ))
}

/// Least-squares line through (x, y): (slope, intercept, slope standard error).
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, Option<f64>)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = (n > 2).then(|| {
        let ssr: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (ssr / (n - 2) as f64 / sxx).sqrt()
    });
    Some((slope, intercept, stderr))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pade_matches_diagonal() {
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![c(-1.0), c(-2.0)]));
        let e = expm(&m, 1.0).unwrap();
        assert!((e[(0, 0)].re - (-1.0f64).exp()).abs() < 1e-14);
        assert!((e[(1, 1)].re - (-2.0f64).exp()).abs() < 1e-14);
        assert!(e[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
        let (x, w) = gauss_legendre(1);
        assert_eq!(x, vec![0.0]);
        assert!((w[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn schur_gives_complex_eigenvalues() {
        let m = CMatrix::from_row_slice(2, 2, &[c(0.0), c(-1.0), c(1.0), c(0.0)]);
        let mut ev = eigenvalues(&m).unwrap();
        ev.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((ev[0] - C64::new(0.0, -1.0)).norm() < 1e-12);
        assert!((ev[1] - C64::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn overflow_is_reported() {
        let m = CMatrix::from_element(2, 2, c(1e3));
        assert!(matches!(expm(&m, 10.0), Err(Error::Numerical(_))));
    }

    #[test]
    fn fit_recovers_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        let (s, b, e) = linear_fit(&x, &y).unwrap();
        assert!((s + 2.0).abs() < 1e-12 && (b - 3.0).abs() < 1e-12);
        assert!(e.unwrap() < 1e-12);
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
    }
}
