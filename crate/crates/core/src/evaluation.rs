//! Desk-scale generation-quality metrics: Fréchet distance between Gaussian
//! fits of PCA pixel features, and classifier accuracy on real test data for
//! classifiers trained on generated data.
//!
//! The PCA feature basis stands in for a pretrained embedding network, so
//! absolute distances are not comparable to published large-scale numbers;
//! only orderings under identical settings are meaningful.

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::linalg::{matmul_square, sym_eigen, sym_sqrt, trace};
use crate::optim::{adam_step_flat, AdamState};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use std::io::Write;

/// Frozen linear feature map: top-k principal components of the fitting set.
#[derive(Debug, Clone)]
pub struct FeatureExtractor<F: Scalar> {
    mean: Vec<F>,
    /// k x d row-major; rows are orthonormal.
    basis: Vec<F>,
    k: usize,
    d: usize,
}

impl<F: Scalar> FeatureExtractor<F> {
    /// Fit on a reference set (by convention the real training images) and
    /// freeze.
    pub fn fit(images: &[Tensor<F>], k: usize) -> Result<Self> {
        let n = images.len();
        let first = images
            .first()
            .ok_or_else(|| Error::RejectedInput("cannot fit features on zero images".into()))?;
        let d = first.len();
        if k == 0 || k > d {
            return Err(Error::RejectedInput(format!("feature count {k} outside 1..={d}")));
        }
        if n < 2 {
            return Err(Error::RejectedInput("need at least 2 images to fit features".into()));
        }
        let mut mean = vec![F::zero(); d];
        for img in images {
            if img.len() != d {
                return Err(Error::RejectedInput("feature fitting images must share a shape".into()));
            }
            for (m, v) in mean.iter_mut().zip(img.data()) {
                *m += *v;
            }
        }
        let n_f = F::from_usize(n);
        for m in &mut mean {
            *m = *m / n_f;
        }
        let mut cov = vec![F::zero(); d * d];
        let mut centered = vec![F::zero(); d];
        for img in images {
            for ((c, v), m) in centered.iter_mut().zip(img.data()).zip(&mean) {
                *c = *v - *m;
            }
            for i in 0..d {
                let ci = centered[i];
                if ci == F::zero() {
                    continue;
                }
                let row = &mut cov[i * d..(i + 1) * d];
                for (slot, cj) in row.iter_mut().zip(&centered) {
                    *slot += ci * *cj;
                }
            }
        }
        let denom = F::from_usize(n - 1);
        for c in &mut cov {
            *c = *c / denom;
        }
        let (_vals, vecs) = sym_eigen(&cov, d)?;
        let basis = vecs[..k * d].to_vec();
        Ok(Self { mean, basis, k, d })
    }

    pub fn feature_dim(&self) -> usize {
        self.k
    }

    pub fn project(&self, image: &Tensor<F>) -> Result<Vec<F>> {
        if image.len() != self.d {
            return Err(Error::RejectedInput("image dimension mismatch".into()));
        }
        let mut out = vec![F::zero(); self.k];
        for (r, slot) in out.iter_mut().enumerate() {
            let row = &self.basis[r * self.d..(r + 1) * self.d];
            let mut acc = F::zero();
            for ((b, v), m) in row.iter().zip(image.data()).zip(&self.mean) {
                acc += *b * (*v - *m);
            }
            *slot = acc;
        }
        Ok(out)
    }

    pub fn project_all(&self, images: &[Tensor<F>]) -> Result<Vec<Vec<F>>> {
        images.iter().map(|img| self.project(img)).collect()
    }

    /// Max deviation of the basis Gram matrix from the identity.
    pub fn gram_identity_error(&self) -> F {
        let mut worst = F::zero();
        for i in 0..self.k {
            for j in 0..self.k {
                let mut dot = F::zero();
                for t in 0..self.d {
                    dot += self.basis[i * self.d + t] * self.basis[j * self.d + t];
                }
                let target = if i == j { F::one() } else { F::zero() };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

pub const COVARIANCE_REGULARIZER: f64 = 1e-6;

/// Mean and regularized covariance of a feature sample.
#[derive(Debug, Clone)]
pub struct GaussianFit<F: Scalar> {
    pub mean: Vec<F>,
    /// k x k row-major, diagonal regularized.
    pub cov: Vec<F>,
    pub samples: usize,
}

pub fn fit_gaussian<F: Scalar>(features: &[Vec<F>]) -> Result<GaussianFit<F>> {
    let n = features.len();
    let k = features
        .first()
        .map(|f| f.len())
        .ok_or_else(|| Error::RejectedInput("cannot fit a Gaussian on zero samples".into()))?;
    if n < k + 1 {
        return Err(Error::RejectedInput(format!(
            "need at least {} samples for a {k}-dimensional fit, got {n}",
            k + 1
        )));
    }
    let mut mean = vec![F::zero(); k];
    for f in features {
        if f.len() != k {
            return Err(Error::RejectedInput("feature dimension mismatch".into()));
        }
        for (m, v) in mean.iter_mut().zip(f) {
            *m += *v;
        }
    }
    let n_f = F::from_usize(n);
    for m in &mut mean {
        *m = *m / n_f;
    }
    let mut cov = vec![F::zero(); k * k];
    for f in features {
        for i in 0..k {
            let ci = f[i] - mean[i];
            for j in 0..k {
                cov[i * k + j] += ci * (f[j] - mean[j]);
            }
        }
    }
    let denom = F::from_usize(n - 1);
    for c in &mut cov {
        *c = *c / denom;
    }
    for i in 0..k {
        cov[i * k + i] += F::from_f64(COVARIANCE_REGULARIZER);
    }
    Ok(GaussianFit { mean, cov, samples: n })
}

/// `||μ1-μ2||² + Tr(Σ1 + Σ2 - 2(Σ1Σ2)^{1/2})`, the cross term evaluated by
/// eigendecomposition of the symmetrized product `Σ1^{1/2} Σ2 Σ1^{1/2}` with
/// negative eigenvalues clamped at zero.
pub fn frechet_distance<F: Scalar>(a: &GaussianFit<F>, b: &GaussianFit<F>) -> Result<F> {
    let k = a.mean.len();
    if b.mean.len() != k {
        return Err(Error::RejectedInput("Gaussian fits have different dimensions".into()));
    }
    let mean_term: F = a
        .mean
        .iter()
        .zip(&b.mean)
        .map(|(x, y)| (*x - *y) * (*x - *y))
        .sum();
    let sqrt_a = sym_sqrt(&a.cov, k)?;
    let inner = matmul_square(&sqrt_a, &matmul_square(&b.cov, &sqrt_a, k), k);
    // inner is symmetric PSD up to rounding; clamp in the eigenbasis.
    let (vals, _) = sym_eigen(&inner, k)?;
    let cross: F = vals.iter().map(|v| v.max(F::zero()).sqrt()).sum();
    let dist = mean_term + trace(&a.cov, k) + trace(&b.cov, k) - F::from_f64(2.0) * cross;
    Ok(dist.max(F::zero()))
}

/// Convenience: fit features + Gaussians and return the distance.
pub fn frechet_feature_distance<F: Scalar>(
    extractor: &FeatureExtractor<F>,
    real: &[Tensor<F>],
    generated: &[Tensor<F>],
) -> Result<F> {
    let a = fit_gaussian(&extractor.project_all(real)?)?;
    let b = fit_gaussian(&extractor.project_all(generated)?)?;
    frechet_distance(&a, &b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassifierKind {
    LogisticRegression,
    /// Wider MLP standing in for the published CNN at desk scale.
    WideMlp,
}

impl ClassifierKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassifierKind::LogisticRegression => "logreg",
            ClassifierKind::WideMlp => "mlp",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CasSettings {
    pub epochs: usize,
    /// None trains full-batch (deterministic in the dataset multiset).
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub hidden: usize,
}

impl Default for CasSettings {
    fn default() -> Self {
        Self { epochs: 50, batch_size: Some(128), learning_rate: 5e-4, hidden: 128 }
    }
}

#[derive(Debug, Clone)]
pub struct CasReport {
    pub classifier: ClassifierKind,
    pub accuracy_pct: f64,
    pub warning: Option<String>,
}

struct MlpClassifier<F: Scalar> {
    layers: Vec<(Vec<F>, Vec<F>, usize, usize)>, // weights, bias, in, out
}

impl<F: Scalar> MlpClassifier<F> {
    fn new(dims: &[usize], rng: &mut ChaCha12Rng) -> Self {
        let mut layers = Vec::new();
        for w in dims.windows(2) {
            let (inp, out) = (w[0], w[1]);
            let scale = (1.0 / inp as f64).sqrt();
            let weights = (0..inp * out)
                .map(|_| F::from_f64(rng.sample::<f64, _>(StandardNormal) * scale))
                .collect();
            layers.push((weights, vec![F::zero(); out], inp, out));
        }
        Self { layers }
    }

    fn flat(&self) -> Vec<F> {
        let mut out = Vec::new();
        for (w, b, _, _) in &self.layers {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    fn set_flat(&mut self, flat: &[F]) {
        let mut off = 0;
        for (w, b, _, _) in &mut self.layers {
            let wlen = w.len();
            w.copy_from_slice(&flat[off..off + wlen]);
            off += wlen;
            let blen = b.len();
            b.copy_from_slice(&flat[off..off + blen]);
            off += blen;
        }
    }

    /// Build the cross-entropy loss for one example on a graph, returning
    /// (loss id, leaf ids in flat order).
    fn loss_on_graph(
        &self,
        g: &mut Graph<F>,
        image: &Tensor<F>,
        label: u8,
    ) -> Result<(crate::autodiff::VarId, Vec<crate::autodiff::VarId>)> {
        let mut leaves = Vec::new();
        let mut h = g.leaf(image.data().to_vec());
        let last = self.layers.len() - 1;
        for (i, (w, b, _, _)) in self.layers.iter().enumerate() {
            let wv = g.leaf(w.clone());
            let bv = g.leaf(b.clone());
            leaves.push(wv);
            leaves.push(bv);
            h = g.affine(wv, bv, h)?;
            if i != last {
                h = g.silu(h);
            }
        }
        let loss = g.softmax_cross_entropy(h, label as usize)?;
        Ok((loss, leaves))
    }

    fn logits(&self, image: &Tensor<F>) -> Vec<F> {
        let mut h = image.data().to_vec();
        let last = self.layers.len() - 1;
        for (i, (w, b, inp, out)) in self.layers.iter().enumerate() {
            let mut next = vec![F::zero(); *out];
            for r in 0..*out {
                let mut acc = b[r];
                let row = &w[r * inp..(r + 1) * inp];
                for (wv, hv) in row.iter().zip(&h) {
                    acc += *wv * *hv;
                }
                next[r] = acc;
            }
            if i != last {
                for v in &mut next {
                    let s = if *v >= F::zero() {
                        F::one() / (F::one() + (-*v).exp())
                    } else {
                        let e = v.exp();
                        e / (F::one() + e)
                    };
                    *v = *v * s;
                }
            }
            h = next;
        }
        h
    }

    fn predict(&self, image: &Tensor<F>) -> u8 {
        let logits = self.logits(image);
        let mut best = 0usize;
        for (i, v) in logits.iter().enumerate() {
            if *v > logits[best] {
                best = i;
            }
        }
        best as u8
    }
}

/// Train a classifier on generated data and report its accuracy on the real
/// test set.
pub fn cas<F: Scalar>(
    generated: &[(Tensor<F>, u8)],
    real_test: &[(Tensor<F>, u8)],
    kind: ClassifierKind,
    settings: &CasSettings,
    seed: u64,
) -> Result<CasReport> {
    if generated.is_empty() || real_test.is_empty() {
        return Err(Error::RejectedInput("empty dataset".into()));
    }
    let num_classes = real_test
        .iter()
        .chain(generated.iter())
        .map(|(_, l)| *l as usize + 1)
        .max()
        .unwrap();
    let dim = generated[0].0.len();

    let mut warning = None;
    for class in real_test.iter().map(|(_, l)| *l) {
        if !generated.iter().any(|(_, l)| *l == class) {
            warning = Some(format!(
                "degenerate training set: class {class} present in the test set has no generated examples"
            ));
            break;
        }
    }

    let dims: Vec<usize> = match kind {
        ClassifierKind::LogisticRegression => vec![dim, num_classes],
        ClassifierKind::WideMlp => vec![dim, settings.hidden, num_classes],
    };
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut model = MlpClassifier::<F>::new(&dims, &mut rng);
    let mut flat = model.flat();
    let mut adam = AdamState::new(flat.len(), F::from_f64(settings.learning_rate));

    let n = generated.len();
    for _epoch in 0..settings.epochs {
        let batches: Vec<Vec<usize>> = match settings.batch_size {
            None => vec![(0..n).collect()],
            Some(bs) => {
                let mut idx: Vec<usize> = (0..n).collect();
                for i in (1..n).rev() {
                    let j = rng.random_range(0..=i);
                    idx.swap(i, j);
                }
                idx.chunks(bs.max(1)).map(|c| c.to_vec()).collect()
            }
        };
        for batch in batches {
            let mut g = Graph::new();
            let mut leaf_sets = Vec::new();
            let mut terms = Vec::new();
            for &i in &batch {
                let (loss, leaves) = model.loss_on_graph(&mut g, &generated[i].0, generated[i].1)?;
                terms.push(loss);
                leaf_sets.push(leaves);
            }
            let mean = g.mean_of(terms)?;
            if !g.scalar(mean).is_finite() {
                return Err(Error::Numerical("non-finite classifier loss".into()));
            }
            let grads = g.backward(mean);
            // Sum adjoints across the per-example leaf copies.
            let mut grad = vec![F::zero(); flat.len()];
            for leaves in &leaf_sets {
                let mut off = 0;
                for leaf in leaves {
                    let adj = grads.wrt(*leaf);
                    for (slot, v) in grad[off..off + adj.len()].iter_mut().zip(adj) {
                        *slot += *v;
                    }
                    off += adj.len();
                }
            }
            adam_step_flat(&mut adam, &mut flat, &grad)?;
            model.set_flat(&flat);
        }
    }

    let correct = real_test
        .iter()
        .filter(|(img, label)| model.predict(img) == *label)
        .count();
    let accuracy_pct = 100.0 * correct as f64 / real_test.len() as f64;
    Ok(CasReport { classifier: kind, accuracy_pct, warning })
}

/// One row of the metrics report CSV.
#[derive(Debug, Clone)]
pub struct MetricsReportRow {
    pub method: String,
    pub epsilon: f64,
    pub seed: u64,
    pub frechet_feature_distance: f64,
    pub cas_logreg: f64,
    pub cas_mlp: f64,
}

/// CSV columns: method, epsilon, seed, frechet_feature_distance,
/// cas_logreg, cas_mlp.
pub fn write_metrics_report_csv<W: Write>(w: &mut W, rows: &[MetricsReportRow]) -> Result<()> {
    writeln!(w, "method,epsilon,seed,frechet_feature_distance,cas_logreg,cas_mlp")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.method, r.epsilon, r.seed, r.frechet_feature_distance, r.cas_logreg, r.cas_mlp
        )?;
    }
    Ok(())
}
