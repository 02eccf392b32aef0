//! Adam, the pre-training and fine-tuning loops, and finite-difference
//! gradient verification.

mod gradcheck;
mod log;
mod train;

pub use gradcheck::{
    check_encoder, encoder_probe, grad_check, probe_params, probe_sequence, GradCheckReport, TensorCheck, FD_STEP,
};
pub use log::{LogEntry, Phase, TrainLog};
pub use train::{
    accuracy, examples_from_reports, finetune, mlm_accuracy, predict, pretrain_mlm, Example, FinetuneConfig,
    FinetuneOutcome, PretrainConfig,
};

use crate::error::{Error, Result};
use crate::{ParamSet, Scalar, Tensor};

/// Adam moments for every tensor of a parameter set, in `tensors()` order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<P: ParamSet<T>>(params: &P, lr: f64) -> Self {
        let zeros: Vec<Tensor<T>> = params.tensors().iter().map(|(_, t)| Tensor::zeros_like(t)).collect();
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One Adam update of every tensor.
pub fn adam_step<T: Scalar, P: ParamSet<T>>(params: &mut P, grads: &P, state: &mut AdamState<T>) -> Result<()> {
    adam_step_masked(params, grads, state, |_| true)
}

/// One Adam update restricted to tensors whose name passes `trainable`.
/// Frozen tensors keep their values and moments.
pub fn adam_step_masked<T: Scalar, P: ParamSet<T>>(
    params: &mut P,
    grads: &P,
    state: &mut AdamState<T>,
    trainable: impl Fn(&str) -> bool,
) -> Result<()> {
    let grads = grads.tensors();
    let mut tensors = params.tensors_mut();
    if tensors.len() != grads.len() || tensors.len() != state.m.len() {
        return Err(Error::config(
            "parameter, gradient and optimizer tensors differ in number",
        ));
    }
    for ((name, p), (_, g)) in tensors.iter().zip(&grads) {
        if p.shape() != g.shape() {
            return Err(Error::config(format!("gradient shape mismatch for `{name}`")));
        }
        if trainable(name) && !g.is_finite() {
            return Err(Error::numeric(format!("non-finite gradient in `{name}`")));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(state.beta1), T::lit(state.beta2));
    let c1 = T::one() - T::lit(state.beta1.powi(t));
    let c2 = T::one() - T::lit(state.beta2.powi(t));
    let lr = T::lit(state.lr);
    let eps = T::lit(state.eps);
    for (i, ((name, p), (_, g))) in tensors.iter_mut().zip(&grads).enumerate() {
        if !trainable(name) {
            continue;
        }
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((w, &gj), mj), vj) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mj = b1 * *mj + (T::one() - b1) * gj;
            *vj = b2 * *vj + (T::one() - b2) * gj * gj;
            let m_hat = *mj / c1;
            let v_hat = *vj / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug, PartialEq)]
    struct Pair(Tensor<f64>);

    impl ParamSet<f64> for Pair {
        fn tensors(&self) -> Vec<(String, &Tensor<f64>)> {
            vec![("w".into(), &self.0)]
        }
        fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<f64>)> {
            vec![("w".into(), &mut self.0)]
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Pair(Tensor::from_vec(&[2], vec![1.0, -2.0]));
        let before = p.clone();
        let g = Pair(Tensor::zeros(&[2]));
        let mut st = AdamState::new(&p, 0.1);
        adam_step(&mut p, &g, &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = Pair(Tensor::from_vec(&[3], vec![0.0, 0.0, 0.0]));
        let g = Pair(Tensor::from_vec(&[3], vec![0.5, -3.0, 1e-3]));
        let mut st = AdamState::new(&p, 0.01);
        adam_step(&mut p, &g, &mut st).unwrap();
        for (w, gj) in p.0.data().iter().zip(g.0.data()) {
            let expect = -0.01 * gj / (gj.abs() + 1e-8);
            assert!((w - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn quadratic_matches_sequential_oracle() {
        // f(w) = 0.5 (a w0² + b w1²)
        let (a, b) = (2.0, 0.5);
        let mut p = Pair(Tensor::from_vec(&[2], vec![1.0, -1.5]));
        let mut st = AdamState::new(&p, 0.05);

        let mut w = [1.0f64, -1.5];
        let (mut m, mut v) = ([0.0f64; 2], [0.0f64; 2]);
        for step in 1..=3 {
            let g = Pair(Tensor::from_vec(&[2], vec![a * p.0.data()[0], b * p.0.data()[1]]));
            adam_step(&mut p, &g, &mut st).unwrap();

            let grad = [a * w[0], b * w[1]];
            for j in 0..2 {
                m[j] = 0.9 * m[j] + 0.1 * grad[j];
                v[j] = 0.999 * v[j] + 0.001 * grad[j] * grad[j];
                let mh = m[j] / (1.0 - 0.9f64.powi(step));
                let vh = v[j] / (1.0 - 0.999f64.powi(step));
                w[j] -= 0.05 * mh / (vh.sqrt() + 1e-8);
            }
        }
        for j in 0..2 {
            assert!((p.0.data()[j] - w[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut p = Pair(Tensor::zeros(&[2]));
        let g = Pair(Tensor::from_vec(&[2], vec![f64::NAN, 0.0]));
        let mut st = AdamState::new(&p, 0.1);
        let err = adam_step(&mut p, &g, &mut st).unwrap_err();
        assert!(err.to_string().contains("`w`"));
        assert_eq!(st.step(), 0);
    }

    #[test]
    fn frozen_tensor_untouched() {
        let mut p = Pair(Tensor::from_vec(&[2], vec![1.0, 2.0]));
        let g = Pair(Tensor::from_vec(&[2], vec![1.0, 1.0]));
        let mut st = AdamState::new(&p, 0.1);
        adam_step_masked(&mut p, &g, &mut st, |_| false).unwrap();
        assert_eq!(p.0.data(), &[1.0, 2.0]);
    }
}
