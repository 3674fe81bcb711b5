//! Distance correlation and the PCA-reduced preference diversity loss.
//!
//! The `k` coordinates of a vector are treated as `k` scalar samples. With
//! double-centred distance matrices `A` and `B`,
//! `V²(x, y) = mean(A ∘ B)` and the returned statistic is
//! `V(x, y) / √(V(x, x) · V(y, y))`.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

use super::pca::{center_columns, pca_project};

/// Distance variances below this make the correlation 0.
pub const DVAR_FLOOR: f64 = 1e-12;

/// Double-centred absolute-difference matrix of a sample vector.
fn double_centered(x: &[f64]) -> Vec<f64> {
    let k = x.len();
    let mut a = vec![0.0; k * k];
    for s in 0..k {
        for t in 0..k {
            a[s * k + t] = (x[s] - x[t]).abs();
        }
    }
    // Symmetric, so row means equal column means.
    let means: Vec<f64> = (0..k).map(|s| a[s * k..(s + 1) * k].iter().sum::<f64>() / k as f64).collect();
    let grand = means.iter().sum::<f64>() / k as f64;
    for s in 0..k {
        for t in 0..k {
            a[s * k + t] += grand - means[s] - means[t];
        }
    }
    a
}

fn mean_product(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

/// Distance correlation in `[0, 1]`; 0 when either distance variance is
/// below [`DVAR_FLOOR`].
pub fn distance_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    distance_correlation_grad(x, y).map(|(v, _, _)| v)
}

/// Distance correlation with its gradients with respect to `x` and `y`.
pub fn distance_correlation_grad(x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let k = x.len();
    if y.len() != k {
        return Err(Error::shape("distance_correlation inputs", k, y.len()));
    }
    if k < 2 {
        return Err(Error::Invalid(format!("distance correlation needs at least 2 coordinates, found {k}")));
    }
    let a = double_centered(x);
    let b = double_centered(y);
    let s_xy = mean_product(&a, &b);
    let s_xx = mean_product(&a, &a);
    let s_yy = mean_product(&b, &b);
    let zero = || Ok((0.0, vec![0.0; k], vec![0.0; k]));
    if s_xx.sqrt() < DVAR_FLOOR || s_yy.sqrt() < DVAR_FLOOR || s_xy <= 0.0 {
        return zero();
    }
    let r = (s_xy.sqrt() / (s_xx * s_yy).sqrt().sqrt()).min(1.0);

    // r = S_xy^½ S_xx^-¼ S_yy^-¼ and ∂S_xy/∂a = B / k², ∂S_xx/∂a = 2A / k².
    let kk = (k * k) as f64;
    let c_xy = r / (2.0 * s_xy) / kk;
    let c_xx = -r / (4.0 * s_xx) * 2.0 / kk;
    let c_yy = -r / (4.0 * s_yy) * 2.0 / kk;
    let grad = |v: &[f64], own: &[f64], other: &[f64], c_own: f64| -> Vec<f64> {
        (0..k)
            .map(|s| {
                let mut g = 0.0;
                for t in 0..k {
                    let w = c_xy * other[s * k + t] + c_own * own[s * k + t];
                    let d = v[s] - v[t];
                    if d > 0.0 {
                        g += w;
                    } else if d < 0.0 {
                        g -= w;
                    }
                }
                2.0 * g
            })
            .collect()
    };
    let dx = grad(x, &a, &b, c_xx);
    let dy = grad(y, &b, &a, c_yy);
    Ok((r, dx, dy))
}

/// Sum of distance correlations over unordered row pairs of `projected`, with
/// the gradient on each row.
fn pairwise_dcorr(projected: &Matrix) -> Result<(f64, Matrix)> {
    let n = projected.rows();
    let mut total = 0.0;
    let mut grad = Matrix::zeros(n, projected.cols());
    for p in 0..n {
        for q in p + 1..n {
            let (v, dp, dq) = distance_correlation_grad(projected.row(p), projected.row(q))?;
            total += v;
            for (g, d) in grad.row_mut(p).iter_mut().zip(&dp) {
                *g += d;
            }
            for (g, d) in grad.row_mut(q).iter_mut().zip(&dq) {
                *g += d;
            }
        }
    }
    Ok((total, grad))
}

/// Loss and gradient with a fixed projection `basis` (`h × k`).
pub fn soft_dcorr_with_basis(pref: &Matrix, basis: &Matrix) -> Result<(f64, Matrix)> {
    let (centered, _) = center_columns(pref);
    let projected = centered.matmul(basis)?;
    let (value, d_proj) = pairwise_dcorr(&projected)?;
    let d_centered = d_proj.matmul(&basis.transpose())?;
    // Centring is linear: subtract the column means of the gradient.
    let (d_pref, _) = center_columns(&d_centered);
    Ok((value, d_pref))
}

/// Soft distance-correlation loss over preference rows. The PCA basis is
/// recomputed from `pref` and treated as constant for the gradient.
pub fn soft_dcorr_loss(pref: &Matrix, epsilon: f64) -> Result<(f64, Matrix)> {
    let pca = pca_project(pref, epsilon)?;
    soft_dcorr_with_basis(pref, &pca.basis)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_correlation_is_one() {
        let x = [0.3, -1.2, 2.5, 0.0, 0.7];
        assert!((distance_correlation(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((distance_correlation(&x, &neg).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_vector_gives_zero() {
        assert_eq!(distance_correlation(&[2.0; 4], &[1.0, 2.0, 3.0, 5.0]).unwrap(), 0.0);
        assert!(distance_correlation(&[1.0], &[2.0]).is_err());
    }

    #[test]
    fn identical_rows_give_zero_loss() {
        let m = Matrix::from_rows(&vec![vec![1.0, 2.0, 3.0, 4.0]; 3]).unwrap();
        let (v, g) = soft_dcorr_loss(&m, 1.0).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn two_preferences_give_one() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 0.5, 4.0], vec![0.0, -1.0, 3.0, 2.0]]).unwrap();
        let (v, _) = soft_dcorr_loss(&m, 1.0).unwrap();
        // With two rows the centred rows are negatives of each other.
        assert!((v - 1.0).abs() < 1e-9, "{v}");
    }
}
