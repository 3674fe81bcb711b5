//! Pairwise and listwise ranking losses.

use crate::error::{Error, Result};
use crate::tensor::{dot, neg_log_sigmoid, sigmoid, Matrix};

/// Loss value with gradients on both score vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct PairLoss {
    pub value: f64,
    pub d_pos: Vec<f64>,
    pub d_neg: Vec<f64>,
}

/// `Σ_k −ln σ(pos_k − neg_k)`.
pub fn bpr_loss(pos: &[f64], neg: &[f64]) -> Result<PairLoss> {
    if pos.len() != neg.len() {
        return Err(Error::shape("bpr scores", pos.len(), neg.len()));
    }
    if pos.is_empty() {
        return Err(Error::Invalid("bpr_loss needs at least one pair".into()));
    }
    let mut value = 0.0;
    let mut d_pos = Vec::with_capacity(pos.len());
    let mut d_neg = Vec::with_capacity(pos.len());
    for (&p, &n) in pos.iter().zip(neg) {
        let gap = p - n;
        value += neg_log_sigmoid(gap);
        let w = sigmoid(-gap);
        d_pos.push(-w);
        d_neg.push(w);
    }
    Ok(PairLoss { value, d_pos, d_neg })
}

/// `½ Σ ‖v‖²`; the gradient of each vector is the vector itself.
pub fn l2_reg<'a>(vectors: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    0.5 * vectors.into_iter().map(|v| dot(v, v)).sum::<f64>()
}

/// Click loss of one impression: `−ln(e^pos / (e^pos + Σ_k e^neg_k))`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClickLoss {
    pub value: f64,
    pub d_pos: f64,
    pub d_neg: Vec<f64>,
}

pub fn nrms_click_loss(pos: f64, neg: &[f64]) -> Result<ClickLoss> {
    if neg.is_empty() {
        return Err(Error::Invalid("click loss needs at least one negative".into()));
    }
    let max = neg.iter().copied().fold(pos, f64::max);
    let value = if max == pos {
        neg.iter().map(|&n| (n - pos).exp()).sum::<f64>().ln_1p()
    } else {
        let total = (pos - max).exp() + neg.iter().map(|&n| (n - max).exp()).sum::<f64>();
        (max - pos) + total.ln()
    };
    let denom = (pos - max).exp() + neg.iter().map(|&n| (n - max).exp()).sum::<f64>();
    let p_pos = (pos - max).exp() / denom;
    let d_neg = neg.iter().map(|&n| (n - max).exp() / denom).collect();
    Ok(ClickLoss {
        value,
        d_pos: p_pos - 1.0,
        d_neg,
    })
}

/// Cross-system contrastive loss and gradients on the trainable side only.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossSystemLoss {
    pub value: f64,
    pub d_user: Matrix,
    pub d_pos: Matrix,
    pub d_neg: Matrix,
}

/// Per triple:
/// `−ln σ(u_K·(p_C − n_C)) − ln σ(u_C·(p_K − n_K))`, where `_K` rows are the
/// trainable system's embeddings and `_C` rows are fixed anchors. Each
/// argument holds one row per triple.
pub fn cross_system_loss(
    user: &Matrix,
    pos: &Matrix,
    neg: &Matrix,
    anchor_user: &Matrix,
    anchor_pos: &Matrix,
    anchor_neg: &Matrix,
) -> Result<CrossSystemLoss> {
    let shape = user.shape();
    for (name, m) in [
        ("positive items", pos),
        ("negative items", neg),
        ("anchor users", anchor_user),
        ("anchor positive items", anchor_pos),
        ("anchor negative items", anchor_neg),
    ] {
        if m.shape() != shape {
            return Err(Error::shape(
                format!("cross-system {name}"),
                format!("{shape:?}"),
                format!("{:?}", m.shape()),
            ));
        }
    }
    let (n, h) = shape;
    let mut out = CrossSystemLoss {
        value: 0.0,
        d_user: Matrix::zeros(n, h),
        d_pos: Matrix::zeros(n, h),
        d_neg: Matrix::zeros(n, h),
    };
    for t in 0..n {
        let diff_anchor: Vec<f64> = anchor_pos
            .row(t)
            .iter()
            .zip(anchor_neg.row(t))
            .map(|(a, b)| a - b)
            .collect();
        let x1 = dot(user.row(t), &diff_anchor);
        let x2 = dot(anchor_user.row(t), pos.row(t)) - dot(anchor_user.row(t), neg.row(t));
        out.value += neg_log_sigmoid(x1) + neg_log_sigmoid(x2);
        let w1 = sigmoid(-x1);
        let w2 = sigmoid(-x2);
        for k in 0..h {
            out.d_user.row_mut(t)[k] = -w1 * diff_anchor[k];
            out.d_pos.row_mut(t)[k] = -w2 * anchor_user.get(t, k);
            out.d_neg.row_mut(t)[k] = w2 * anchor_user.get(t, k);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn bpr_closed_forms() {
        assert_eq!(bpr_loss(&[0.3], &[0.3]).unwrap().value, LN_2);
        let v = bpr_loss(&[20.0], &[0.0]).unwrap().value;
        assert!((v - (-20f64).exp().ln_1p()).abs() < 1e-24);
        assert!((v - 2.061e-9).abs() < 1e-12);
        assert!(bpr_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn l2_of_unit_vector() {
        assert_eq!(l2_reg([&[0.0, 0.0][..]]), 0.0);
        assert_eq!(l2_reg([&[0.0, 1.0][..]]), 0.5);
    }

    #[test]
    fn click_closed_forms() {
        let c = nrms_click_loss(0.5, &[0.5, 0.5, 0.5]).unwrap();
        assert!((c.value - 4f64.ln()).abs() < 1e-12);
        let c = nrms_click_loss(20.0, &[0.0; 4]).unwrap();
        assert!((c.value - 8.24e-9).abs() < 1e-11, "{}", c.value);
        // Gradients of a log-softmax sum to zero.
        let c = nrms_click_loss(0.1, &[1.0, -2.0]).unwrap();
        assert!((c.d_pos + c.d_neg.iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn cross_system_zero_gaps() {
        let z = Matrix::zeros(2, 3);
        let ones = Matrix::from_rows(&[vec![1.0; 3], vec![1.0; 3]]).unwrap();
        let l = cross_system_loss(&ones, &z, &z, &ones, &z, &z).unwrap();
        assert!((l.value - 4.0 * LN_2).abs() < 1e-12);
        assert!(cross_system_loss(&ones, &z, &z, &Matrix::zeros(2, 4), &z, &z).is_err());
    }
}
