//! Adam with bias correction.

use crate::denoiser::DenoiserParams;
use crate::error::{Error, Result};
use crate::gradient::GradientVector;
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct AdamState<F: Scalar> {
    m: Vec<F>,
    v: Vec<F>,
    step: u64,
    pub learning_rate: F,
    pub beta1: F,
    pub beta2: F,
    pub epsilon: F,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(param_count: usize, learning_rate: F) -> Self {
        Self {
            m: vec![F::zero(); param_count],
            v: vec![F::zero(); param_count],
            step: 0,
            learning_rate,
            beta1: F::from_f64(0.9),
            beta2: F::from_f64(0.999),
            epsilon: F::from_f64(1e-8),
        }
    }

    pub fn from_parts(
        m: Vec<F>,
        v: Vec<F>,
        step: u64,
        learning_rate: F,
        beta1: F,
        beta2: F,
        epsilon: F,
    ) -> Result<Self> {
        if m.len() != v.len() {
            return Err(Error::RejectedInput("moment length mismatch".into()));
        }
        if m.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite optimizer moment".into()));
        }
        Ok(Self { m, v, step, learning_rate, beta1, beta2, epsilon })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[F] {
        &self.m
    }

    pub fn second_moment(&self) -> &[F] {
        &self.v
    }
}

/// One Adam update on a flat parameter slice.
pub fn adam_step_flat<F: Scalar>(
    state: &mut AdamState<F>,
    params: &mut [F],
    grad: &[F],
) -> Result<()> {
    if params.len() != state.m.len() || grad.len() != state.m.len() {
        return Err(Error::RejectedInput(format!(
            "gradient/parameter length {} / {} does not match optimizer state {}",
            grad.len(),
            params.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = F::one() - state.beta1.powi(t);
    let bc2 = F::one() - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = state.beta1 * state.m[i] + (F::one() - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (F::one() - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] = params[i] - state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

/// One Adam update on a denoiser's trainable parameters.
pub fn adam_step<F: Scalar>(
    state: &mut AdamState<F>,
    params: &mut DenoiserParams<F>,
    grad: &GradientVector<F>,
) -> Result<()> {
    if grad.len() != params.param_count() {
        return Err(Error::RejectedInput(format!(
            "gradient length {} does not align with {} parameters",
            grad.len(),
            params.param_count()
        )));
    }
    let mut flat = params.to_flat();
    adam_step_flat(state, &mut flat, grad.values())?;
    params.apply_flat(&flat)
}
