use crate::content::ContentParams;
use crate::error::{Error, Result};
use crate::model::KmpnParams;
use crate::tensor::Matrix;

/// A set of named trainable tensors.
pub trait ParamSet {
    fn named(&self) -> Vec<(&'static str, &Matrix)>;
    fn named_mut(&mut self) -> Vec<(&'static str, &mut Matrix)>;
}

impl ParamSet for KmpnParams {
    fn named(&self) -> Vec<(&'static str, &Matrix)> {
        self.tensors().to_vec()
    }

    fn named_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        self.tensors_mut().into_iter().collect()
    }
}

impl ParamSet for ContentParams {
    fn named(&self) -> Vec<(&'static str, &Matrix)> {
        self.tensors().to_vec()
    }

    fn named_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
        self.tensors_mut().into_iter().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<P: ParamSet>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState,
    config: &AdamConfig,
    lr: f64,
) -> Result<()> {
    let grads = grads.named();
    for (name, g) in &grads {
        if !g.is_finite() {
            return Err(Error::NonFinite((*name).to_string()));
        }
    }
    let mut params = params.named_mut();
    if params.len() != grads.len() {
        return Err(Error::shape("adam tensor count", params.len(), grads.len()));
    }
    for ((name, p), (_, g)) in params.iter().zip(&grads) {
        if p.shape() != g.shape() {
            return Err(Error::shape(
                format!("adam gradient for {name}"),
                format!("{:?}", p.shape()),
                format!("{:?}", g.shape()),
            ));
        }
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|(_, p)| vec![0.0; p.as_slice().len()]).collect();
        state.v = state.m.clone();
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - config.beta1.powi(t);
    let bc2 = 1.0 - config.beta2.powi(t);
    for (((_, p), (_, g)), (m, v)) in params
        .iter_mut()
        .zip(&grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((x, &gi), mi), vi) in p.as_mut_slice().iter_mut().zip(g.as_slice()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = config.beta1 * *mi + (1.0 - config.beta1) * gi;
            *vi = config.beta2 * *vi + (1.0 - config.beta2) * gi * gi;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *x -= lr * m_hat / (v_hat.sqrt() + config.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Scalar(Matrix);

    impl ParamSet for Scalar {
        fn named(&self) -> Vec<(&'static str, &Matrix)> {
            vec![("x", &self.0)]
        }
        fn named_mut(&mut self) -> Vec<(&'static str, &mut Matrix)> {
            vec![("x", &mut self.0)]
        }
    }

    fn scalar(v: f64) -> Scalar {
        Scalar(Matrix::from_vec(1, 1, vec![v]).unwrap())
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar(1.0);
        let mut st = AdamState::new();
        adam_step(&mut p, &scalar(-3.7), &mut st, &AdamConfig::default(), 0.01).unwrap();
        assert!((p.0.get(0, 0) - 1.01).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = scalar(2.0);
        let mut st = AdamState::new();
        adam_step(&mut p, &scalar(0.0), &mut st, &AdamConfig::default(), 0.1).unwrap();
        assert_eq!(p.0.get(0, 0), 2.0);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn quadratic_bowl_descends() {
        // f(x) = x², gradient 2x.
        let mut p = scalar(3.0);
        let mut st = AdamState::new();
        let mut last = 9.0;
        for _ in 0..3 {
            let x = p.0.get(0, 0);
            adam_step(&mut p, &scalar(2.0 * x), &mut st, &AdamConfig::default(), 0.1).unwrap();
            let f = p.0.get(0, 0).powi(2);
            assert!(f < last);
            last = f;
        }
    }

    #[test]
    fn non_finite_gradient_named() {
        let mut p = scalar(1.0);
        let err = adam_step(&mut p, &scalar(f64::NAN), &mut AdamState::new(), &AdamConfig::default(), 0.1).unwrap_err();
        assert_eq!(err.to_string(), "non-finite gradient in tensor x");
    }
}
