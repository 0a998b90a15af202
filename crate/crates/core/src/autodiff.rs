//! Tape-based reverse-mode automatic differentiation over flat vectors.
//!
//! Nodes are appended in construction order, which is already a topological
//! order, so the backward pass is a single reverse sweep. The op set is the
//! minimum needed for the σ-conditioned MLP denoiser, the weighted denoising
//! losses, and the evaluation classifiers.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Debug)]
enum Op<F: Scalar> {
    Leaf,
    /// `y = W x + b`, weights row-major `out_dim x in_dim`.
    Affine { weights: VarId, bias: VarId, input: VarId, out_dim: usize, in_dim: usize },
    Silu { input: VarId },
    Concat { a: VarId, b: VarId },
    Scale { input: VarId, factor: F },
    /// Elementwise `fa * a + fb * b`.
    AddScaled { a: VarId, b: VarId, fa: F, fb: F },
    Sub { a: VarId, b: VarId },
    /// Scalar `sum_i x_i^2`.
    SumSq { input: VarId },
    /// Scalar mean of scalar terms.
    MeanOf { terms: Vec<VarId> },
    /// Scalar `logsumexp(z) - z[class]`.
    SoftmaxCrossEntropy { logits: VarId, class: usize },
}

#[derive(Debug)]
struct Node<F: Scalar> {
    values: Vec<F>,
    op: Op<F>,
}

#[derive(Debug, Default)]
pub struct Graph<F: Scalar> {
    nodes: Vec<Node<F>>,
}

impl<F: Scalar> Graph<F> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, values: Vec<F>, op: Op<F>) -> VarId {
        self.nodes.push(Node { values, op });
        VarId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, values: Vec<F>) -> VarId {
        self.push(values, Op::Leaf)
    }

    pub fn values(&self, id: VarId) -> &[F] {
        &self.nodes[id.0].values
    }

    pub fn scalar(&self, id: VarId) -> F {
        debug_assert_eq!(self.nodes[id.0].values.len(), 1);
        self.nodes[id.0].values[0]
    }

    pub fn affine(&mut self, weights: VarId, bias: VarId, input: VarId) -> Result<VarId> {
        let out_dim = self.values(bias).len();
        let in_dim = self.values(input).len();
        if self.values(weights).len() != out_dim * in_dim {
            return Err(Error::RejectedInput(format!(
                "affine weights have {} entries, expected {}x{}",
                self.values(weights).len(),
                out_dim,
                in_dim
            )));
        }
        let mut out = vec![F::zero(); out_dim];
        {
            let w = self.values(weights);
            let x = self.values(input);
            let b = self.values(bias);
            for r in 0..out_dim {
                let row = &w[r * in_dim..(r + 1) * in_dim];
                let mut acc = b[r];
                for (wv, xv) in row.iter().zip(x) {
                    acc += *wv * *xv;
                }
                out[r] = acc;
            }
        }
        Ok(self.push(out, Op::Affine { weights, bias, input, out_dim, in_dim }))
    }

    pub fn silu(&mut self, input: VarId) -> VarId {
        let out: Vec<F> = self
            .values(input)
            .iter()
            .map(|&x| x * sigmoid(x))
            .collect();
        self.push(out, Op::Silu { input })
    }

    pub fn concat(&mut self, a: VarId, b: VarId) -> VarId {
        let mut out = self.values(a).to_vec();
        out.extend_from_slice(self.values(b));
        self.push(out, Op::Concat { a, b })
    }

    pub fn scale(&mut self, input: VarId, factor: F) -> VarId {
        let out: Vec<F> = self.values(input).iter().map(|&x| x * factor).collect();
        self.push(out, Op::Scale { input, factor })
    }

    pub fn add_scaled(&mut self, a: VarId, b: VarId, fa: F, fb: F) -> Result<VarId> {
        if self.values(a).len() != self.values(b).len() {
            return Err(Error::RejectedInput("add_scaled length mismatch".into()));
        }
        let out: Vec<F> = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(&x, &y)| fa * x + fb * y)
            .collect();
        Ok(self.push(out, Op::AddScaled { a, b, fa, fb }))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        if self.values(a).len() != self.values(b).len() {
            return Err(Error::RejectedInput("sub length mismatch".into()));
        }
        let out: Vec<F> = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(&x, &y)| x - y)
            .collect();
        Ok(self.push(out, Op::Sub { a, b }))
    }

    pub fn sum_sq(&mut self, input: VarId) -> VarId {
        let s = self.values(input).iter().map(|&x| x * x).sum();
        self.push(vec![s], Op::SumSq { input })
    }

    pub fn mean_of(&mut self, terms: Vec<VarId>) -> Result<VarId> {
        if terms.is_empty() {
            return Err(Error::RejectedInput("mean of zero terms".into()));
        }
        let k = F::from_usize(terms.len());
        let s: F = terms.iter().map(|t| self.scalar(*t)).sum();
        Ok(self.push(vec![s / k], Op::MeanOf { terms }))
    }

    pub fn softmax_cross_entropy(&mut self, logits: VarId, class: usize) -> Result<VarId> {
        let z = self.values(logits);
        if class >= z.len() {
            return Err(Error::RejectedInput(format!(
                "class {} out of range for {} logits",
                class,
                z.len()
            )));
        }
        let m = z.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
        let lse = m + z.iter().map(|&v| (v - m).exp()).sum::<F>().ln();
        let loss = lse - z[class];
        Ok(self.push(vec![loss], Op::SoftmaxCrossEntropy { logits, class }))
    }

    /// Reverse sweep from a scalar loss; returns one adjoint buffer per node.
    pub fn backward(&self, loss: VarId) -> Gradients<F> {
        let mut adjoints: Vec<Vec<F>> = self
            .nodes
            .iter()
            .map(|n| vec![F::zero(); n.values.len()])
            .collect();
        debug_assert_eq!(self.nodes[loss.0].values.len(), 1);
        adjoints[loss.0][0] = F::one();

        for idx in (0..self.nodes.len()).rev() {
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Affine { weights, bias, input, out_dim, in_dim } => {
                    let g = std::mem::take(&mut adjoints[idx]);
                    let x = self.values(*input).to_vec();
                    let w = self.values(*weights).to_vec();
                    {
                        let gw = &mut adjoints[weights.0];
                        for r in 0..*out_dim {
                            let gr = g[r];
                            let row = &mut gw[r * in_dim..(r + 1) * in_dim];
                            for (slot, xv) in row.iter_mut().zip(&x) {
                                *slot += gr * *xv;
                            }
                        }
                    }
                    {
                        let gb = &mut adjoints[bias.0];
                        for (slot, gr) in gb.iter_mut().zip(&g) {
                            *slot += *gr;
                        }
                    }
                    {
                        let gx = &mut adjoints[input.0];
                        for r in 0..*out_dim {
                            let gr = g[r];
                            let row = &w[r * in_dim..(r + 1) * in_dim];
                            for (slot, wv) in gx.iter_mut().zip(row) {
                                *slot += gr * *wv;
                            }
                        }
                    }
                    adjoints[idx] = g;
                }
                Op::Silu { input } => {
                    let g = std::mem::take(&mut adjoints[idx]);
                    let x = self.values(*input);
                    let gx = &mut adjoints[input.0];
                    for i in 0..x.len() {
                        let s = sigmoid(x[i]);
                        gx[i] += g[i] * s * (F::one() + x[i] * (F::one() - s));
                    }
                    adjoints[idx] = g;
                }
                Op::Concat { a, b } => {
                    let g = std::mem::take(&mut adjoints[idx]);
                    let na = self.values(*a).len();
                    for (slot, gv) in adjoints[a.0].iter_mut().zip(&g[..na]) {
                        *slot += *gv;
                    }
                    for (slot, gv) in adjoints[b.0].iter_mut().zip(&g[na..]) {
                        *slot += *gv;
                    }
                    adjoints[idx] = g;
                }
                Op::Scale { input, factor } => {
                    let g = std::mem::take(&mut adjoints[idx]);
                    let gx = &mut adjoints[input.0];
                    for (slot, gv) in gx.iter_mut().zip(&g) {
                        *slot += *gv * *factor;
                    }
                    adjoints[idx] = g;
                }
                Op::AddScaled { a, b, fa, fb } => {
                    let g = std::mem::take(&mut adjoints[idx]);
                    for (slot, gv) in adjoints[a.0].iter_mut().zip(&g) {
                        *slot += *gv * *fa;
                    }
                    for (slot, gv) in adjoints[b.0].iter_mut().zip(&g) {
                        *slot += *gv * *fb;
                    }
                    adjoints[idx] = g;
                }
                Op::Sub { a, b } => {
                    let g = std::mem::take(&mut adjoints[idx]);
                    for (slot, gv) in adjoints[a.0].iter_mut().zip(&g) {
                        *slot += *gv;
                    }
                    for (slot, gv) in adjoints[b.0].iter_mut().zip(&g) {
                        *slot -= *gv;
                    }
                    adjoints[idx] = g;
                }
                Op::SumSq { input } => {
                    let g = adjoints[idx][0];
                    let x = self.values(*input);
                    let two = F::from_f64(2.0);
                    let gx = &mut adjoints[input.0];
                    for i in 0..x.len() {
                        gx[i] += g * two * x[i];
                    }
                }
                Op::MeanOf { terms } => {
                    let g = adjoints[idx][0];
                    let k = F::from_usize(terms.len());
                    for t in terms {
                        adjoints[t.0][0] += g / k;
                    }
                }
                Op::SoftmaxCrossEntropy { logits, class } => {
                    let g = adjoints[idx][0];
                    let z = self.values(*logits);
                    let m = z.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
                    let denom: F = z.iter().map(|&v| (v - m).exp()).sum();
                    let gz = &mut adjoints[logits.0];
                    for i in 0..z.len() {
                        let p = (z[i] - m).exp() / denom;
                        let ind = if i == *class { F::one() } else { F::zero() };
                        gz[i] += g * (p - ind);
                    }
                }
            }
        }
        Gradients { adjoints }
    }
}

fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Adjoints for every node of a graph, indexed by [`VarId`].
pub struct Gradients<F: Scalar> {
    adjoints: Vec<Vec<F>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn wrt(&self, id: VarId) -> &[F] {
        &self.adjoints[id.0]
    }
}
