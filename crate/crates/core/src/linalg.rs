//! Dense weighted least squares via Householder QR, plus sandwich covariances.

use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), cols, "ragged rows");
            m.data[i * cols..(i + 1) * cols].copy_from_slice(r);
        }
        m
    }

    /// Builds an `n x p` matrix from `p` columns of length `n`.
    pub fn from_columns(columns: &[Vec<T>]) -> Self {
        let n = columns.first().map_or(0, Vec::len);
        let mut m = Self::zeros(n, columns.len());
        for (j, c) in columns.iter().enumerate() {
            assert_eq!(c.len(), n, "ragged columns");
            for (i, &v) in c.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Columns that are (numerically) linear combinations of earlier columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankDeficient {
    pub dependent: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct LsFit<T> {
    pub coef: Vec<T>,
    pub residuals: Vec<T>,
    /// `(X'WX)^{-1}`.
    pub bread: Matrix<T>,
}

/// Minimises `sum_i w_i (y_i - x_i'b)^2`. Weights must be nonnegative.
pub fn weighted_lstsq<T: Real>(x: &Matrix<T>, y: &[T], w: &[T]) -> Result<LsFit<T>, RankDeficient> {
    let (n, p) = (x.rows(), x.cols());
    assert_eq!(y.len(), n);
    assert_eq!(w.len(), n);
    if n < p {
        return Err(RankDeficient {
            dependent: (n..p).collect(),
        });
    }

    let sw: Vec<T> = w.iter().map(|&wi| wi.max(T::zero()).sqrt()).collect();
    let mut a = x.clone();
    let mut b: Vec<T> = y.iter().zip(&sw).map(|(&yi, &s)| yi * s).collect();
    for i in 0..n {
        for j in 0..p {
            a[(i, j)] = a[(i, j)] * sw[i];
        }
    }
    let col_norms: Vec<T> = (0..p)
        .map(|j| (0..n).map(|i| a[(i, j)] * a[(i, j)]).sum::<T>().sqrt())
        .collect();

    let mut diag = vec![T::zero(); p];
    for k in 0..p {
        let norm = (k..n).map(|i| a[(i, k)] * a[(i, k)]).sum::<T>().sqrt();
        if norm == T::zero() {
            diag[k] = T::zero();
            continue;
        }
        let alpha = if a[(k, k)] > T::zero() { -norm } else { norm };
        // v = a[k.., k] - alpha e_k, stored in place
        a[(k, k)] = a[(k, k)] - alpha;
        let vnorm2: T = (k..n).map(|i| a[(i, k)] * a[(i, k)]).sum();
        if vnorm2 > T::zero() {
            for j in (k + 1)..p {
                let s: T = (k..n).map(|i| a[(i, k)] * a[(i, j)]).sum();
                let f = (s + s) / vnorm2;
                for i in k..n {
                    a[(i, j)] = a[(i, j)] - f * a[(i, k)];
                }
            }
            let s: T = (k..n).map(|i| a[(i, k)] * b[i]).sum();
            let f = (s + s) / vnorm2;
            for i in k..n {
                b[i] = b[i] - f * a[(i, k)];
            }
        }
        diag[k] = alpha;
    }

    let tol = T::rank_tol();
    let dependent: Vec<usize> = (0..p)
        .filter(|&j| col_norms[j] == T::zero() || diag[j].abs() <= tol * col_norms[j])
        .collect();
    if !dependent.is_empty() {
        return Err(RankDeficient { dependent });
    }

    // R: diag on the diagonal, a[(i, j)] for i < j above it.
    let r = |i: usize, j: usize| if i == j { diag[i] } else { a[(i, j)] };
    let mut coef = vec![T::zero(); p];
    for i in (0..p).rev() {
        let s: T = ((i + 1)..p).map(|j| r(i, j) * coef[j]).sum();
        coef[i] = (b[i] - s) / r(i, i);
    }

    let mut rinv = Matrix::zeros(p, p);
    for j in 0..p {
        rinv[(j, j)] = T::one() / r(j, j);
        for i in (0..j).rev() {
            let s: T = ((i + 1)..=j).map(|k| r(i, k) * rinv[(k, j)]).sum();
            rinv[(i, j)] = -s / r(i, i);
        }
    }
    let mut bread = Matrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let s: T = (j..p).map(|k| rinv[(i, k)] * rinv[(j, k)]).sum();
            bread[(i, j)] = s;
            bread[(j, i)] = s;
        }
    }

    let residuals = (0..n)
        .map(|i| y[i] - crate::scalar::dot(x.row(i), &coef))
        .collect();
    Ok(LsFit {
        coef,
        residuals,
        bread,
    })
}

/// Sandwich covariance `B M B` with meat summed over clusters of `w_i e_i x_i`.
/// Each row is its own cluster when `clusters` is `None`. No small-sample
/// scaling is applied.
pub fn sandwich<T: Real>(
    x: &Matrix<T>,
    w: &[T],
    fit: &LsFit<T>,
    clusters: Option<&[usize]>,
) -> Matrix<T> {
    let p = x.cols();
    let n = x.rows();
    let mut scores: Vec<Vec<T>> = Vec::new();
    match clusters {
        None => {
            for i in 0..n {
                let s = w[i] * fit.residuals[i];
                scores.push(x.row(i).iter().map(|&v| v * s).collect());
            }
        }
        Some(ids) => {
            let g = ids.iter().copied().max().map_or(0, |m| m + 1);
            scores = vec![vec![T::zero(); p]; g];
            for i in 0..n {
                let s = w[i] * fit.residuals[i];
                for j in 0..p {
                    scores[ids[i]][j] = scores[ids[i]][j] + x[(i, j)] * s;
                }
            }
        }
    }
    let mut meat = Matrix::zeros(p, p);
    for s in &scores {
        for a in 0..p {
            for b in 0..p {
                meat[(a, b)] = meat[(a, b)] + s[a] * s[b];
            }
        }
    }
    let bm = mat_mul(&fit.bread, &meat);
    mat_mul(&bm, &fit.bread)
}

pub(crate) fn mat_mul<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    assert_eq!(a.cols(), b.rows());
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for k in 0..a.cols() {
            let aik = a[(i, k)];
            for j in 0..b.cols() {
                out[(i, j)] = out[(i, j)] + aik * b[(k, j)];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_recovered() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let x = Matrix::from_rows(&xs.iter().map(|&v| vec![1.0, v]).collect::<Vec<_>>());
        let y: Vec<f64> = xs.iter().map(|v| 3.0 - 2.0 * v).collect();
        let fit = weighted_lstsq(&x, &y, &[1.0; 4]).unwrap();
        assert!((fit.coef[0] - 3.0).abs() < 1e-12);
        assert!((fit.coef[1] + 2.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn bread_is_inverse_of_gram() {
        let rows = vec![vec![1.0, 0.5], vec![1.0, -1.0], vec![1.0, 2.0]];
        let w = [2.0, 1.0, 0.5];
        let x = Matrix::from_rows(&rows);
        let fit = weighted_lstsq(&x, &[0.0, 1.0, 2.0], &w).unwrap();
        let mut gram = Matrix::<f64>::zeros(2, 2);
        for (i, r) in rows.iter().enumerate() {
            for a in 0..2 {
                for b in 0..2 {
                    gram[(a, b)] += w[i] * r[a] * r[b];
                }
            }
        }
        let id = mat_mul(&gram, &fit.bread);
        for a in 0..2 {
            for b in 0..2 {
                let e: f64 = if a == b { 1.0 } else { 0.0 };
                assert!((id[(a, b)] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn duplicated_column_is_reported() {
        let x = Matrix::from_rows(&[
            vec![1.0, 2.0, 2.0],
            vec![1.0, 3.0, 3.0],
            vec![1.0, 5.0, 5.0],
            vec![1.0, 7.0, 7.0],
        ]);
        let err = weighted_lstsq(&x, &[1.0, 2.0, 3.0, 4.0], &[1.0; 4]).unwrap_err();
        assert_eq!(err.dependent, vec![2]);
    }

    #[test]
    fn works_in_single_precision() {
        let x = Matrix::<f32>::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]);
        let fit = weighted_lstsq(&x, &[1.0, 3.0, 5.0], &[1.0; 3]).unwrap();
        assert!((fit.coef[1] - 2.0).abs() < 1e-5);
    }
}
