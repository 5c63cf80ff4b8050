//! Small dense symmetric linear algebra and scalar root finding.
//!
//! Everything here works on matrices of order at most a few dozen, so the
//! routines favour accuracy and simplicity: cyclic Jacobi for the symmetric
//! eigenproblem, Cholesky for SPD solves, plain bisection for monotone roots.

use crate::error::{BcoError, Result};

/// Symmetric matrix stored densely in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    /// Builds from row-major data, rejecting asymmetry beyond `1e-12` of the
    /// largest entry. Accepted input is exactly symmetrized.
    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(BcoError::Invariant(format!(
                "expected {} entries for order {n}, got {}",
                n * n,
                data.len()
            )));
        }
        let scale = data.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
        let mut m = SymMatrix { n, data };
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (m.data[i * n + j], m.data[j * n + i]);
                if (a - b).abs() > 1e-12 * scale {
                    return Err(BcoError::Invariant(format!(
                        "matrix not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
                let avg = 0.5 * (a + b);
                m.data[i * n + j] = avg;
                m.data[j * n + i] = avg;
            }
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(BcoError::Invariant("rows must form a square matrix".into()));
        }
        Self::from_row_major(n, rows.concat())
    }

    /// Outer product `v vᵀ` scaled by `alpha`.
    pub fn outer(v: &[f64], alpha: f64) -> Self {
        let n = v.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = alpha * v[i] * v[j];
            }
        }
        m
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Sets both `(i,j)` and `(j,i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn add_diag(&mut self, c: f64) {
        for i in 0..self.n {
            self.data[i * self.n + i] += c;
        }
    }

    pub fn add_assign(&mut self, other: &SymMatrix, alpha: f64) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        SymMatrix {
            n: self.n,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n);
        self.data
            .chunks_exact(self.n)
            .map(|row| dot(row, v))
            .collect()
    }

    /// `vᵀ M v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.matvec(v))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Leading principal `k × k` block.
    pub fn top_left(&self, k: usize) -> SymMatrix {
        let mut m = Self::zeros(k);
        for i in 0..k {
            for j in 0..k {
                m.data[i * k + j] = self.get(i, j);
            }
        }
        m
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }
}

/// Row-major product of two square matrices of equal order (not necessarily
/// symmetric).
pub fn matmul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add_scaled(a: &[f64], alpha: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + alpha * y).collect()
}

/// Eigen-decomposition `M = Q Λ Qᵀ` with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Row-major `n × n`; column `k` is the eigenvector for `values[k]`.
    pub vectors: Vec<f64>,
}

impl SymEigen {
    pub fn order(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        let n = self.order();
        (0..n).map(|i| self.vectors[i * n + k]).collect()
    }

    /// `Q f(Λ) Qᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.order();
        let fl: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = SymMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.vectors[i * n + k] * fl[k] * self.vectors[j * n + k];
                }
                out.set(i, j, acc);
            }
        }
        out
    }
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Symmetric eigen-decomposition by cyclic Jacobi rotations.
///
/// A rotation is skipped once the off-diagonal entry is negligible relative
/// to its diagonal pair, which keeps small eigenvalues of SPD matrices
/// accurate to high relative precision.
pub fn sym_eig(m: &SymMatrix) -> SymEigen {
    let n = m.order();
    let mut a = m.data.clone();
    let mut v = SymMatrix::identity(n).data;
    let scale = m.frobenius();

    if scale > 0.0 {
        for _ in 0..JACOBI_MAX_SWEEPS {
            let mut rotated = false;
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    if apq == 0.0
                        || apq.abs() <= f64::EPSILON * 0.5 * (app.abs() * aqq.abs()).sqrt()
                        || apq.abs() <= 1e-300 * scale
                    {
                        a[p * n + q] = 0.0;
                        a[q * n + p] = 0.0;
                        continue;
                    }
                    rotated = true;
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;

                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&k| a[k * n + k]).collect();
    let mut vectors = vec![0.0; n * n];
    for (col, &k) in order.iter().enumerate() {
        for i in 0..n {
            vectors[i * n + col] = v[i * n + k];
        }
    }
    SymEigen { values, vectors }
}

fn require_spd(eig: &SymEigen) -> Result<()> {
    let min = eig.values.first().copied().unwrap_or(0.0);
    let max = eig.values.last().copied().unwrap_or(0.0);
    if !(min > 1e-14 * max.abs()) || !(min > 0.0) {
        return Err(BcoError::Conditioning {
            min_eigenvalue: min,
        });
    }
    Ok(())
}

/// `M^p` for SPD `M` through the eigen-decomposition.
pub fn mat_pow(m: &SymMatrix, p: f64) -> Result<SymMatrix> {
    let eig = sym_eig(m);
    require_spd(&eig)?;
    Ok(eig.map(|l| l.powf(p)))
}

/// `M^{1/2}` and `M^{-1/2}` computed from a single decomposition.
#[derive(Clone, Debug)]
pub struct SpdRoots {
    pub sqrt: SymMatrix,
    pub inv_sqrt: SymMatrix,
    pub min_eigenvalue: f64,
}

impl SpdRoots {
    pub fn new(m: &SymMatrix) -> Result<Self> {
        let eig = sym_eig(m);
        require_spd(&eig)?;
        Ok(SpdRoots {
            sqrt: eig.map(f64::sqrt),
            inv_sqrt: eig.map(|l| 1.0 / l.sqrt()),
            min_eigenvalue: eig.values[0],
        })
    }
}

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn new(m: &SymMatrix) -> Result<Self> {
        let n = m.order();
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut diag = m.get(j, j);
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                let min_eigenvalue = sym_eig(m).values.first().copied().unwrap_or(f64::NAN);
                return Err(BcoError::Conditioning { min_eigenvalue });
            }
            let ljj = diag.sqrt();
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut s = m.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Cholesky { n, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.l[i * n + k] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                y[i] -= self.l[k * n + i] * y[k];
            }
            y[i] /= self.l[i * n + i];
        }
        y
    }
}

/// Solves `M x = b` for SPD `M`.
pub fn solve_spd(m: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    Ok(Cholesky::new(m)?.solve(b))
}

/// `‖v‖_M = √(vᵀMv)`, or the dual norm `√(vᵀM⁻¹v)` when `dual` is set.
pub fn local_norm(v: &[f64], m: &SymMatrix, dual: bool) -> Result<f64> {
    if v.len() != m.order() {
        return Err(BcoError::Invariant(format!(
            "dimension mismatch: vector {} vs matrix {}",
            v.len(),
            m.order()
        )));
    }
    let chol = Cholesky::new(m)?;
    let q = if dual {
        dot(v, &chol.solve(v))
    } else {
        m.quad_form(v)
    };
    Ok(q.max(0.0).sqrt())
}

/// Bisection for a continuous monotone `f` on `[lo, hi]`.
///
/// Returns the midpoint of the final bracket, whose width is at most `tol`
/// (or the bracket can no longer be split in floating point).
pub fn bisect_root(f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    bisect_root_counted(f, lo, hi, tol).map(|(x, _)| x)
}

/// As [`bisect_root`], also reporting the number of function evaluations
/// spent on interior midpoints.
pub fn bisect_root_counted(
    mut f: impl FnMut(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<(f64, usize)> {
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok((lo, 0));
    }
    if f_hi == 0.0 {
        return Ok((hi, 0));
    }
    if !(f_lo.signum() != f_hi.signum()) || f_lo.is_nan() || f_hi.is_nan() {
        return Err(BcoError::Bracketing { f_lo, f_hi });
    }
    let lo_negative = f_lo < 0.0;
    let mut iterations = 0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let fm = f(mid);
        if fm == 0.0 {
            return Ok((mid, iterations));
        }
        if (fm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), iterations))
}

/// Central-difference gradient. A non-finite or failing evaluation on the
/// stencil is reported as a domain violation.
pub fn fd_gradient(f: impl Fn(&[f64]) -> Result<f64>, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let eval = |p: &[f64]| -> Result<f64> {
        let v = f(p)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(BcoError::DomainViolation { slack: f64::NAN })
        }
    };
    let mut p = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        p[i] = x[i] + h;
        let fp = eval(&p)?;
        p[i] = x[i] - h;
        let fm = eval(&p)?;
        p[i] = x[i];
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}

/// Central-difference Hessian from function values only.
pub fn fd_hessian(f: impl Fn(&[f64]) -> Result<f64>, x: &[f64], h: f64) -> Result<SymMatrix> {
    let eval = |p: &[f64]| -> Result<f64> {
        let v = f(p)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(BcoError::DomainViolation { slack: f64::NAN })
        }
    };
    let n = x.len();
    let f0 = eval(x)?;
    let mut m = SymMatrix::zeros(n);
    let mut p = x.to_vec();
    for i in 0..n {
        p[i] = x[i] + h;
        let fp = eval(&p)?;
        p[i] = x[i] - h;
        let fm = eval(&p)?;
        p[i] = x[i];
        m.set(i, i, (fp - 2.0 * f0 + fm) / (h * h));
        for j in (i + 1)..n {
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                p[i] = x[i] + si * h;
                p[j] = x[j] + sj * h;
                let v = eval(&p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let fpp = corner(1.0, 1.0)?;
            let fpm = corner(1.0, -1.0)?;
            let fmp = corner(-1.0, 1.0)?;
            let fmm = corner(-1.0, -1.0)?;
            m.set(i, j, (fpp - fpm - fmp + fmm) / (4.0 * h * h));
        }
    }
    Ok(m)
}

/// Max-abs relative discrepancy `‖a − b‖∞ / max(‖a‖∞, floor)`.
pub fn rel_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let num = a
        .iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let den = a.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(floor);
    num / den
}
