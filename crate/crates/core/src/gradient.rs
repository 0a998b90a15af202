//! Per-sample gradient extraction.

use crate::autodiff::{Graph, VarId};
use crate::denoiser::{DenoiserParams, ParamVars};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Flat, parameter-aligned gradient with its Euclidean norm cached at
/// construction.
#[derive(Debug, Clone)]
pub struct GradientVector<F: Scalar> {
    values: Vec<F>,
    norm: F,
}

impl<F: Scalar> GradientVector<F> {
    pub fn from_values(values: Vec<F>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite gradient entry".into()));
        }
        let norm = values.iter().map(|v| *v * *v).sum::<F>().sqrt();
        Ok(Self { values, norm })
    }

    pub fn zeros(len: usize) -> Self {
        Self { values: vec![F::zero(); len], norm: F::zero() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn norm(&self) -> F {
        self.norm
    }

    pub fn scaled(&self, k: F) -> Self {
        Self {
            values: self.values.iter().map(|v| *v * k).collect(),
            norm: self.norm * k.abs(),
        }
    }
}

/// Per-example losses and gradients: one (loss, gradient) pair per example,
/// each the gradient of that example's loss alone.
///
/// The loss builder receives a fresh graph with the parameters already
/// registered and returns the scalar loss node for one example. Examples are
/// processed in order; the merge is deterministic by construction.
pub fn per_sample_losses_and_grads<F, E, L>(
    params: &DenoiserParams<F>,
    loss_fn: L,
    batch: &[E],
) -> Result<Vec<(F, GradientVector<F>)>>
where
    F: Scalar,
    L: Fn(&mut Graph<F>, &DenoiserParams<F>, &ParamVars, &E) -> Result<VarId>,
{
    if batch.is_empty() {
        return Err(Error::RejectedInput("empty batch".into()));
    }
    let mut out = Vec::with_capacity(batch.len());
    for (index, example) in batch.iter().enumerate() {
        let mut g = Graph::new();
        let vars = params.register(&mut g);
        let loss = loss_fn(&mut g, params, &vars, example)?;
        let loss_value = g.scalar(loss);
        if !loss_value.is_finite() {
            return Err(Error::NonFiniteLoss { index });
        }
        let grads = g.backward(loss);
        let flat = params.flatten_grads(&grads, &vars);
        let grad =
            GradientVector::from_values(flat).map_err(|_| Error::NonFiniteLoss { index })?;
        out.push((loss_value, grad));
    }
    Ok(out)
}

/// One gradient per example; see [`per_sample_losses_and_grads`].
pub fn per_sample_gradients<F, E, L>(
    params: &DenoiserParams<F>,
    loss_fn: L,
    batch: &[E],
) -> Result<Vec<GradientVector<F>>>
where
    F: Scalar,
    L: Fn(&mut Graph<F>, &DenoiserParams<F>, &ParamVars, &E) -> Result<VarId>,
{
    Ok(per_sample_losses_and_grads(params, loss_fn, batch)?
        .into_iter()
        .map(|(_, g)| g)
        .collect())
}

/// Mean of per-sample gradients; callers use it for non-private steps.
pub fn mean_gradient<F: Scalar>(grads: &[GradientVector<F>]) -> Result<GradientVector<F>> {
    let first = grads
        .first()
        .ok_or_else(|| Error::RejectedInput("empty gradient list".into()))?;
    let mut acc = vec![F::zero(); first.len()];
    for g in grads {
        if g.len() != acc.len() {
            return Err(Error::RejectedInput("gradient length mismatch".into()));
        }
        for (a, v) in acc.iter_mut().zip(g.values()) {
            *a += *v;
        }
    }
    let k = F::from_usize(grads.len());
    for a in &mut acc {
        *a = *a / k;
    }
    GradientVector::from_values(acc)
}
