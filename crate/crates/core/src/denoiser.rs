//! σ-conditioned MLP denoiser with EDM-style preconditioning.
//!
//! The network sees `[c_in(σ)·x  |  one-hot class  |  Fourier(c_noise(σ))]`
//! and its raw output is folded back through the skip connection:
//! `D(x, σ) = c_skip(σ)·x + c_out(σ)·net(...)`. The Fourier frequencies are
//! drawn once at construction and never trained.

use crate::autodiff::{Graph, VarId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use std::f64::consts::PI;

/// Preconditioning factors for one noise level.
#[derive(Debug, Clone, Copy)]
pub struct Precond<F: Scalar> {
    pub c_skip: F,
    pub c_out: F,
    pub c_in: F,
    pub c_noise: F,
}

pub fn edm_precond<F: Scalar>(sigma: F, sigma_data: F) -> Precond<F> {
    let s2 = sigma * sigma;
    let d2 = sigma_data * sigma_data;
    let denom = (s2 + d2).sqrt();
    Precond {
        c_skip: d2 / (s2 + d2),
        c_out: sigma * sigma_data / denom,
        c_in: F::one() / denom,
        c_noise: sigma.ln() / F::from_f64(4.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserConfig<F: Scalar> {
    /// Image shape `[channels, height, width]`.
    pub image_shape: Vec<usize>,
    /// Number of label classes appended one-hot to the input; 0 disables
    /// class conditioning.
    pub num_classes: usize,
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    /// Number of Fourier feature pairs embedding `c_noise(σ)`.
    pub embed_features: usize,
    pub sigma_data: F,
}

impl<F: Scalar> DenoiserConfig<F> {
    pub fn new(image_shape: Vec<usize>, num_classes: usize, hidden: Vec<usize>) -> Self {
        Self {
            image_shape,
            num_classes,
            hidden,
            embed_features: 8,
            sigma_data: F::from_f64(0.5),
        }
    }

    pub fn image_dim(&self) -> usize {
        self.image_shape.iter().product()
    }

    pub fn input_dim(&self) -> usize {
        self.image_dim() + self.num_classes + 2 * self.embed_features
    }
}

#[derive(Debug, Clone)]
pub struct Layer<F: Scalar> {
    pub weights: Vec<F>,
    pub bias: Vec<F>,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// Trainable parameters of the denoiser plus the fixed σ-embedding
/// frequencies. Parameter count is constant for the lifetime of the value.
#[derive(Debug, Clone)]
pub struct DenoiserParams<F: Scalar> {
    cfg: DenoiserConfig<F>,
    layers: Vec<Layer<F>>,
    freqs: Vec<F>,
}

/// Leaf ids for each layer's weights and bias, in flattening order.
pub struct ParamVars {
    pub layers: Vec<(VarId, VarId)>,
}

impl<F: Scalar> DenoiserParams<F> {
    fn layer_dims(cfg: &DenoiserConfig<F>) -> Vec<(usize, usize)> {
        let mut dims = Vec::new();
        let mut prev = cfg.input_dim();
        for &h in &cfg.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, cfg.image_dim()));
        dims
    }

    /// Random init: centered Gaussian weights scaled by `1/sqrt(in_dim)`,
    /// zero biases, standard normal Fourier frequencies.
    pub fn init<R: Rng>(cfg: DenoiserConfig<F>, rng: &mut R) -> Self {
        let layers = Self::layer_dims(&cfg)
            .into_iter()
            .map(|(in_dim, out_dim)| {
                let scale = (1.0 / in_dim as f64).sqrt();
                let weights = (0..in_dim * out_dim)
                    .map(|_| F::from_f64(rng.sample::<f64, _>(StandardNormal) * scale))
                    .collect();
                Layer { weights, bias: vec![F::zero(); out_dim], in_dim, out_dim }
            })
            .collect();
        let freqs = (0..cfg.embed_features)
            .map(|_| F::from_f64(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Self { cfg, layers, freqs }
    }

    /// All-zero weights and biases (the net contributes nothing); frequencies
    /// set to a deterministic ladder so the embedding stays well-defined.
    pub fn zeros(cfg: DenoiserConfig<F>) -> Self {
        let layers = Self::layer_dims(&cfg)
            .into_iter()
            .map(|(in_dim, out_dim)| Layer {
                weights: vec![F::zero(); in_dim * out_dim],
                bias: vec![F::zero(); out_dim],
                in_dim,
                out_dim,
            })
            .collect();
        let freqs = (0..cfg.embed_features)
            .map(|j| F::from_f64(2f64.powi(j as i32 % 8)))
            .collect();
        Self { cfg, layers, freqs }
    }

    pub fn from_parts(cfg: DenoiserConfig<F>, layers: Vec<Layer<F>>, freqs: Vec<F>) -> Result<Self> {
        let dims = Self::layer_dims(&cfg);
        if layers.len() != dims.len() {
            return Err(Error::RejectedInput("layer count mismatch".into()));
        }
        for (layer, (in_dim, out_dim)) in layers.iter().zip(&dims) {
            if layer.in_dim != *in_dim
                || layer.out_dim != *out_dim
                || layer.weights.len() != in_dim * out_dim
                || layer.bias.len() != *out_dim
            {
                return Err(Error::RejectedInput("layer dims mismatch".into()));
            }
        }
        if freqs.len() != cfg.embed_features {
            return Err(Error::RejectedInput("frequency count mismatch".into()));
        }
        Ok(Self { cfg, layers, freqs })
    }

    pub fn cfg(&self) -> &DenoiserConfig<F> {
        &self.cfg
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn freqs(&self) -> &[F] {
        &self.freqs
    }

    /// Trainable parameter count (weights and biases; frequencies are fixed).
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Flatten trainable parameters layer by layer, weights then bias.
    pub fn to_flat(&self) -> Vec<F> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn apply_flat(&mut self, flat: &[F]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::RejectedInput(format!(
                "flat parameter vector has {} entries, expected {}",
                flat.len(),
                self.param_count()
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite parameter".into()));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let wlen = l.weights.len();
            l.weights.copy_from_slice(&flat[off..off + wlen]);
            off += wlen;
            let blen = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + blen]);
            off += blen;
        }
        Ok(())
    }

    /// Register every trainable tensor as a graph leaf.
    pub fn register(&self, g: &mut Graph<F>) -> ParamVars {
        let layers = self
            .layers
            .iter()
            .map(|l| (g.leaf(l.weights.clone()), g.leaf(l.bias.clone())))
            .collect();
        ParamVars { layers }
    }

    /// Flatten per-leaf adjoints into the `to_flat` order.
    pub fn flatten_grads(&self, grads: &crate::autodiff::Gradients<F>, vars: &ParamVars) -> Vec<F> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in &vars.layers {
            out.extend_from_slice(grads.wrt(*w));
            out.extend_from_slice(grads.wrt(*b));
        }
        out
    }

    fn validate_inputs(&self, shape: &[usize], sigma: F, class: Option<usize>) -> Result<()> {
        if shape != self.cfg.image_shape.as_slice() {
            return Err(Error::RejectedInput(format!(
                "image shape {:?} does not match configured {:?}",
                shape, self.cfg.image_shape
            )));
        }
        if !sigma.is_finite() || sigma <= F::zero() {
            return Err(Error::RejectedInput(format!("sigma must be finite and positive, got {sigma}")));
        }
        match class {
            Some(c) if c >= self.cfg.num_classes => Err(Error::RejectedInput(format!(
                "class {} out of range for {} classes",
                c, self.cfg.num_classes
            ))),
            _ => Ok(()),
        }
    }

    fn embedding(&self, c_noise: F) -> Vec<F> {
        let two_pi = F::from_f64(2.0 * PI);
        let mut e = Vec::with_capacity(2 * self.freqs.len());
        for &f in &self.freqs {
            let arg = two_pi * f * c_noise;
            e.push(arg.cos());
            e.push(arg.sin());
        }
        e
    }

    /// Build `D(x, σ)` on a graph; `vars` must come from [`Self::register`]
    /// on the same graph.
    pub fn denoise_on_graph(
        &self,
        g: &mut Graph<F>,
        vars: &ParamVars,
        x: &Tensor<F>,
        sigma: F,
        class: Option<usize>,
    ) -> Result<VarId> {
        self.validate_inputs(x.shape(), sigma, class)?;
        let pre = edm_precond(sigma, self.cfg.sigma_data);

        let x_leaf = g.leaf(x.data().to_vec());
        let scaled = g.scale(x_leaf, pre.c_in);
        let mut input = scaled;
        if self.cfg.num_classes > 0 {
            let mut onehot = vec![F::zero(); self.cfg.num_classes];
            if let Some(c) = class {
                onehot[c] = F::one();
            }
            let oh = g.leaf(onehot);
            input = g.concat(input, oh);
        }
        let emb = g.leaf(self.embedding(pre.c_noise));
        input = g.concat(input, emb);

        let mut h = input;
        let last = vars.layers.len() - 1;
        for (i, (w, b)) in vars.layers.iter().enumerate() {
            h = g.affine(*w, *b, h)?;
            if i != last {
                h = g.silu(h);
            }
        }
        // D = c_skip * x + c_out * net
        g.add_scaled(x_leaf, h, pre.c_skip, pre.c_out)
    }

    pub fn denoise_class(&self, x: &Tensor<F>, sigma: F, class: Option<usize>) -> Result<Tensor<F>> {
        let mut g = Graph::new();
        let vars = self.register(&mut g);
        let out = self.denoise_on_graph(&mut g, &vars, x, sigma, class)?;
        Tensor::new(x.shape().to_vec(), g.values(out).to_vec())
    }
}

/// Anything that can denoise an image at a noise level. The trained MLP is
/// the production implementation; tests plug in analytic oracles.
pub trait Denoiser<F: Scalar> {
    fn image_shape(&self) -> &[usize];

    fn denoise_class(&self, x: &Tensor<F>, sigma: F, class: Option<usize>) -> Result<Tensor<F>>;

    fn denoise(&self, x: &Tensor<F>, sigma: F) -> Result<Tensor<F>> {
        self.denoise_class(x, sigma, None)
    }
}

impl<F: Scalar> Denoiser<F> for DenoiserParams<F> {
    fn image_shape(&self) -> &[usize] {
        &self.cfg.image_shape
    }

    fn denoise_class(&self, x: &Tensor<F>, sigma: F, class: Option<usize>) -> Result<Tensor<F>> {
        DenoiserParams::denoise_class(self, x, sigma, class)
    }
}

/// Ideal denoiser for a single-point data distribution: always returns the
/// point, whatever the noise level.
pub struct PointOracle<F: Scalar>(pub Tensor<F>);

impl<F: Scalar> Denoiser<F> for PointOracle<F> {
    fn image_shape(&self) -> &[usize] {
        self.0.shape()
    }

    fn denoise_class(&self, _x: &Tensor<F>, _sigma: F, _class: Option<usize>) -> Result<Tensor<F>> {
        Ok(self.0.clone())
    }
}
