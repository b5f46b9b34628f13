//! Dense symmetric matrices in the small dimensions the lab works in
//! (n ≤ 3 for densities, a few hundred for quadrature construction).
//!
//! Everything here is plain `Vec<f64>` row-major storage with
//! eigendecompositions by Jacobi rotation. At these sizes a dependency on a
//! full linear-algebra stack buys nothing.

use crate::error::{Error, Result};

/// Relative tolerance for accepting a matrix as symmetric.
pub const SYMMETRY_RTOL: f64 = 1e-12;

/// Eigenvalue floor below which a covariance is treated as singular.
pub const EIG_FLOOR: f64 = 1e-10;

/// A symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat {
    n: usize,
    data: Vec<f64>,
}

impl SymMat {
    /// Builds from rows, checking squareness and symmetry to [`SYMMETRY_RTOL`]
    /// (relative to the largest entry). The stored matrix is the symmetrized
    /// average, so downstream code never sees an asymmetric remainder.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("empty matrix"));
        }
        for row in rows {
            if row.len() != n {
                return Err(Error::invalid(format!(
                    "matrix is not square: {n} rows but a row of length {}",
                    row.len()
                )));
            }
        }
        let scale = rows
            .iter()
            .flatten()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
            .max(1e-300);
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if (rows[i][j] - rows[j][i]).abs() > SYMMETRY_RTOL * scale {
                    return Err(Error::invalid(format!(
                        "matrix is not symmetric at ({i}, {j}): {} vs {}",
                        rows[i][j], rows[j][i]
                    )));
                }
                data[i * n + j] = 0.5 * (rows[i][j] + rows[j][i]);
            }
        }
        Ok(SymMat { n, data })
    }

    /// Builds from a closure without a symmetry check; the closure is only
    /// consulted for i ≤ j.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = SymMat {
            n,
            data: vec![0.0; n * n],
        };
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                m.data[i * n + j] = v;
                m.data[j * n + i] = v;
            }
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diag(values: &[f64]) -> Self {
        Self::from_fn(values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.data[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// xᵀ A x.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                acc += x[i] * self.get(i, j) * x[j];
            }
        }
        acc
    }

    /// Eigendecomposition by cyclic Jacobi rotation: returns eigenvalues in
    /// ascending order and the matching orthonormal eigenvectors as columns,
    /// so `A = V diag(λ) Vᵀ`.
    pub fn eigen(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = self.n;
        let mut a = self.data.clone();
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        let idx = |i: usize, j: usize| i * n + j;
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[idx(p, q)] * a[idx(p, q)];
                }
            }
            if off.sqrt() <= 1e-15 * (1.0 + self.frob_norm()) {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[idx(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[idx(q, q)] - a[idx(p, p)]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[idx(k, p)];
                        let akq = a[idx(k, q)];
                        a[idx(k, p)] = c * akp - s * akq;
                        a[idx(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[idx(p, k)];
                        let aqk = a[idx(q, k)];
                        a[idx(p, k)] = c * apk - s * aqk;
                        a[idx(q, k)] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[idx(k, p)];
                        let vkq = v[idx(k, q)];
                        v[idx(k, p)] = c * vkp - s * vkq;
                        v[idx(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[idx(i, i)].partial_cmp(&a[idx(j, j)]).unwrap());
        let values: Vec<f64> = order.iter().map(|&i| a[idx(i, i)]).collect();
        let vectors: Vec<Vec<f64>> = order
            .iter()
            .map(|&col| (0..n).map(|row| v[idx(row, col)]).collect())
            .collect();
        (values, vectors)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen().0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn det(&self) -> f64 {
        match self.n {
            1 => self.get(0, 0),
            2 => self.get(0, 0) * self.get(1, 1) - self.get(0, 1) * self.get(1, 0),
            3 => {
                let m = |i, j| self.get(i, j);
                m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
                    - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                    + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
            }
            _ => self.eigenvalues().iter().product(),
        }
    }

    /// log|A| via eigenvalues; errors if any eigenvalue is ≤ [`EIG_FLOOR`].
    pub fn log_det(&self) -> Result<f64> {
        let ev = self.eigenvalues();
        if ev[0] <= EIG_FLOOR {
            return Err(Error::SingularCovariance {
                min_eigenvalue: ev[0],
            });
        }
        Ok(ev.iter().map(|l| l.ln()).sum())
    }

    /// Applies a spectral function: f(A) = V diag(f(λ)) Vᵀ.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> SymMat {
        let (values, vectors) = self.eigen();
        SymMat::from_fn(self.n, |i, j| {
            (0..self.n)
                .map(|k| vectors[k][i] * f(values[k]) * vectors[k][j])
                .sum()
        })
    }

    pub fn inverse(&self) -> Result<SymMat> {
        self.check_pd()?;
        Ok(self.spectral_map(|l| 1.0 / l))
    }

    /// A^{-1/2} with the [`EIG_FLOOR`] guard.
    pub fn inv_sqrt(&self) -> Result<SymMat> {
        self.check_pd()?;
        Ok(self.spectral_map(|l| 1.0 / l.sqrt()))
    }

    pub fn sqrt(&self) -> Result<SymMat> {
        self.check_pd()?;
        Ok(self.spectral_map(|l| l.sqrt()))
    }

    fn check_pd(&self) -> Result<()> {
        let min = self.min_eigenvalue();
        if min <= EIG_FLOOR {
            return Err(Error::SingularCovariance {
                min_eigenvalue: min,
            });
        }
        Ok(())
    }

    /// T A Tᵀ for symmetric T (enough for whitening, where T = K^{-1/2}).
    pub fn congruence(&self, t: &SymMat) -> SymMat {
        let n = self.n;
        // B = T A
        let mut b = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                b[i * n + j] = (0..n).map(|k| t.get(i, k) * self.get(k, j)).sum();
            }
        }
        // C = B Tᵀ, symmetrized against roundoff
        SymMat::from_fn(n, |i, j| {
            let cij: f64 = (0..n).map(|k| b[i * n + k] * t.get(j, k)).sum();
            let cji: f64 = (0..n).map(|k| b[j * n + k] * t.get(i, k)).sum();
            0.5 * (cij + cji)
        })
    }

    pub fn frob_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Max absolute entry difference.
    pub fn max_abs_diff(&self, other: &SymMat) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }
}

/// Eigenvalues and first eigenvector components of a symmetric tridiagonal
/// matrix, by the implicit-shift QL iteration. `diag` holds the diagonal,
/// `off` the subdiagonal (length one less).
///
/// Returns `(values, first_components)` unsorted; `first_components[k]` is the
/// first entry of the k-th orthonormal eigenvector. This is exactly what
/// Golub–Welsch quadrature construction needs, so full eigenvector
/// accumulation is skipped.
pub(crate) fn sym_tridiag_eigen(diag: &[f64], off: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    assert_eq!(off.len() + 1, n.max(1));
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(0.0);
    // Row 0 of the accumulated rotation product: starts as e₀ᵀ.
    let mut z = vec![0.0; n];
    if n > 0 {
        z[0] = 1.0;
    }
    let eps = f64::EPSILON;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= eps * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter <= 60, "tridiagonal QL failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + if g >= 0.0 { r.abs() } else { -r.abs() });
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zi1 = z[i + 1];
                z[i + 1] = s * z[i] + c * zi1;
                z[i] = c * z[i] - s * zi1;
                if i == l {
                    d[l] -= p;
                    e[l] = g;
                    e[m] = 0.0;
                }
            }
        }
    }
    (d, z)
}
