//! Principal components of the preference embeddings.

use crate::error::{Error, Result};
use crate::tensor::{dot, Matrix};

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as columns.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape("symmetric_eigen input", format!("{n}x{n}"), format!("{:?}", a.shape())));
    }
    let mut m = a.clone();
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    let scale = m.frobenius_sq().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m.get(p, q) * m.get(p, q);
            }
        }
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m.get(k, p), m.get(k, q));
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let (mpk, mqk) = (m.get(p, k), m.get(q, k));
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).total_cmp(&m.get(i, i)).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, col, v.get(k, src));
        }
    }
    Ok((values, vectors))
}

/// Number of kept components: `max(1, ⌊ε·h⌋)` capped at `min(h, N_p)`.
pub fn num_components(hidden: usize, n_pref: usize, epsilon: f64) -> usize {
    let k = ((epsilon * hidden as f64).floor() as usize).max(1);
    k.min(hidden).min(n_pref)
}

/// Column-centred copy of `data` and the column means.
pub fn center_columns(data: &Matrix) -> (Matrix, Vec<f64>) {
    let (n, h) = data.shape();
    let mut mean = vec![0.0; h];
    for row in data.iter_rows() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut centered = data.clone();
    for i in 0..n {
        for (c, m) in centered.row_mut(i).iter_mut().zip(&mean) {
            *c -= m;
        }
    }
    (centered, mean)
}

/// Top-`k` covariance eigenpairs of the `n × h` centred data through the
/// `n × n` Gram matrix (`n < h`). Directions beyond the data rank are
/// completed with an orthonormal set from the coordinate axes.
fn gram_eigen(centered: &Matrix, k: usize) -> Result<(Vec<f64>, Matrix)> {
    let (n, h) = centered.shape();
    let mut gram = centered.matmul(&centered.transpose())?;
    gram.scale(1.0 / (n - 1) as f64);
    let (values, w) = symmetric_eigen(&gram)?;
    let xt = centered.transpose();
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut out_values = Vec::with_capacity(k);
    for (j, &mu) in values.iter().enumerate().take(k) {
        if mu <= 1e-12 * top || mu <= 0.0 {
            break;
        }
        let wj: Vec<f64> = (0..n).map(|r| w.get(r, j)).collect();
        let mut v: Vec<f64> = (0..h).map(|r| dot(xt.row(r), &wj)).collect();
        let norm = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        cols.push(v);
        out_values.push(mu);
    }
    let mut axis = 0;
    while cols.len() < k && axis < h {
        let mut v = vec![0.0; h];
        v[axis] = 1.0;
        axis += 1;
        for _ in 0..2 {
            for c in &cols {
                let d = dot(c, &v);
                v.iter_mut().zip(c).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            cols.push(v);
            out_values.push(0.0);
        }
    }
    let mut vectors = Matrix::zeros(h, k);
    for (c, v) in cols.iter().enumerate() {
        for (r, &x) in v.iter().enumerate() {
            vectors.set(r, c, x);
        }
    }
    Ok((out_values, vectors))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaProjection {
    /// `h × k`, columns are principal directions.
    pub basis: Matrix,
    /// Top-`k` covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// `N_p × k` centred data times basis.
    pub projected: Matrix,
}

/// Projects the rows of `pref` onto the top principal directions of their
/// column-centred covariance. Each basis column is signed so that its
/// largest-magnitude entry is positive.
pub fn pca_project(pref: &Matrix, epsilon: f64) -> Result<PcaProjection> {
    let (n_p, h) = pref.shape();
    if n_p < 2 {
        return Err(Error::Invalid(format!("PCA needs at least 2 rows, found {n_p}")));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Config(format!("epsilon {epsilon} not in [0, 1]")));
    }
    let k = num_components(h, n_p, epsilon);
    let (centered, _) = center_columns(pref);
    let (values, vectors) = if n_p < h {
        gram_eigen(&centered, k)?
    } else {
        let mut cov = centered.transpose().matmul(&centered)?;
        cov.scale(1.0 / (n_p - 1) as f64);
        symmetric_eigen(&cov)?
    };
    let mut basis = Matrix::zeros(h, k);
    for col in 0..k {
        let mut pivot = 0;
        for r in 1..h {
            if vectors.get(r, col).abs() > vectors.get(pivot, col).abs() {
                pivot = r;
            }
        }
        let sign = if vectors.get(pivot, col) < 0.0 { -1.0 } else { 1.0 };
        for r in 0..h {
            basis.set(r, col, sign * vectors.get(r, col));
        }
    }
    let projected = centered.matmul(&basis)?;
    Ok(PcaProjection {
        basis,
        eigenvalues: values[..k].to_vec(),
        projected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_count_rule() {
        assert_eq!(num_components(8, 8, 0.5), 4);
        assert_eq!(num_components(8, 3, 0.5), 3);
        assert_eq!(num_components(8, 8, 0.0), 1);
        assert_eq!(num_components(8, 8, 1.0), 8);
    }

    #[test]
    fn jacobi_diagonalizes() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 1.0]]).unwrap();
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        for c in 0..3 {
            let v: Vec<f64> = (0..3).map(|r| vecs.get(r, c)).collect();
            for r in 0..3 {
                let av: f64 = (0..3).map(|k| a.get(r, k) * v[k]).sum();
                assert!((av - vals[c] * v[r]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_axis_variation() {
        let data = Matrix::from_rows(&[
            vec![1.0, 2.0, 3.0],
            vec![-2.0, 2.0, 3.0],
            vec![5.0, 2.0, 3.0],
        ])
        .unwrap();
        let pca = pca_project(&data, 1.0).unwrap();
        assert!((pca.basis.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(pca.basis.get(1, 0).abs() < 1e-12 && pca.basis.get(2, 0).abs() < 1e-12);
        assert!(pca_project(&Matrix::zeros(1, 3), 0.5).is_err());
    }
}
