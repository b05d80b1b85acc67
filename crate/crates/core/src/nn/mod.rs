//! Feed-forward networks with batch normalization and dropout, trained by
//! a hand-written reverse pass and AdamW.
//!
//! Each hidden block is `Linear -> BatchNorm -> ReLU -> Dropout`; the head
//! is a plain `Linear`. Tensors are row-major `f64`, one sample per row.

mod adamw;
mod tensor;

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PalcasError, Result};

pub use adamw::{AdamW, AdamWConfig};
pub use tensor::{checksum, NamedTensor};

const BN_EPS: f64 = 1e-5;
/// Weight of the current batch in the running statistics.
const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub dropout: f64,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 || self.hidden.iter().any(|&h| h == 0) {
            return Err(PalcasError::Config("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(PalcasError::Config("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Linear {
    /// `in × out`.
    w: Array2<f64>,
    b: Array1<f64>,
}

impl Linear {
    fn init(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        let w = Array2::from_shape_fn((input, output), |_| rng.gen_range(-bound..bound));
        let b = Array1::from_shape_fn(output, |_| rng.gen_range(-bound..bound));
        Self { w, b }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
struct BatchNorm {
    gamma: Array1<f64>,
    beta: Array1<f64>,
    running_mean: Array1<f64>,
    running_var: Array1<f64>,
}

impl BatchNorm {
    fn new(n: usize) -> Self {
        Self {
            gamma: Array1::ones(n),
            beta: Array1::zeros(n),
            running_mean: Array1::zeros(n),
            running_var: Array1::ones(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    linear: Linear,
    norm: BatchNorm,
}

/// Intermediate values of one forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    blocks: Vec<BlockTape>,
    head_input: Array2<f64>,
}

#[derive(Debug, Clone)]
struct BlockTape {
    input: Array2<f64>,
    normalized: Array2<f64>,
    inv_std: Array1<f64>,
    /// Whether batch statistics were used; eval passes use running ones.
    batch_stats: bool,
    /// ReLU gate times dropout scale.
    gate: Array2<f64>,
}

/// Gradients in [`Mlp::trainable`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads(pub Vec<Vec<f64>>);

impl Grads {
    pub fn norm(&self) -> f64 {
        self.0.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().flatten().for_each(|g| *g *= k);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    blocks: Vec<Block>,
    head: Linear,
}

impl Mlp {
    pub fn new(spec: MlpSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        let mut blocks = Vec::with_capacity(spec.hidden.len());
        let mut width = spec.input;
        for &h in &spec.hidden {
            blocks.push(Block { linear: Linear::init(width, h, rng), norm: BatchNorm::new(h) });
            width = h;
        }
        let head = Linear::init(width, spec.output, rng);
        Ok(Self { spec, blocks, head })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn parameter_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// Eval-mode output: running statistics, no dropout.
    pub fn infer(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        for b in &self.blocks {
            let z = b.linear.apply(&h);
            let n = &b.norm;
            let inv = n.running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            h = ((z - &n.running_mean) * &inv * &n.gamma + &n.beta).mapv(|v| v.max(0.0));
        }
        self.head.apply(&h)
    }

    /// Eval-mode pass that records a tape for [`Mlp::backward`].
    pub fn forward_eval(&self, x: &Array2<f64>) -> (Array2<f64>, Tape) {
        self.run::<rand_chacha::ChaCha8Rng>(x, None).0
    }

    /// Training pass: batch statistics, dropout, running-stat update.
    pub fn forward_train(&mut self, x: &Array2<f64>, rng: &mut impl Rng) -> (Array2<f64>, Tape) {
        let (out, stats) = self.run(x, Some(rng));
        let n = x.nrows() as f64;
        for (b, (mean, var)) in self.blocks.iter_mut().zip(stats) {
            let unbiased = if n > 1.0 { var * (n / (n - 1.0)) } else { var };
            let bn = &mut b.norm;
            bn.running_mean = &bn.running_mean * (1.0 - BN_MOMENTUM) + mean * BN_MOMENTUM;
            bn.running_var = &bn.running_var * (1.0 - BN_MOMENTUM) + unbiased * BN_MOMENTUM;
        }
        out
    }

    #[allow(clippy::type_complexity)]
    fn run<R: Rng>(
        &self,
        x: &Array2<f64>,
        mut train: Option<&mut R>,
    ) -> ((Array2<f64>, Tape), Vec<(Array1<f64>, Array1<f64>)>) {
        let mut h = x.to_owned();
        let mut tapes = Vec::with_capacity(self.blocks.len());
        let mut stats = Vec::new();
        let keep = 1.0 - self.spec.dropout;
        for b in &self.blocks {
            let z = b.linear.apply(&h);
            let n = &b.norm;
            let (mean, var) = if train.is_some() {
                let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                let var = (&z - &mean).mapv(|d| d * d).mean_axis(Axis(0)).expect("non-empty batch");
                (mean, var)
            } else {
                (n.running_mean.clone(), n.running_var.clone())
            };
            let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
            let normalized = (&z - &mean) * &inv_std;
            let y = &normalized * &n.gamma + &n.beta;
            let mut gate = y.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            if let Some(rng) = train.as_mut() {
                if self.spec.dropout > 0.0 {
                    gate.mapv_inplace(|g| if rng.gen::<f64>() < keep { g / keep } else { 0.0 });
                }
                stats.push((mean, var));
            }
            let out = &y * &gate;
            tapes.push(BlockTape {
                input: std::mem::replace(&mut h, out),
                normalized,
                inv_std,
                batch_stats: train.is_some(),
                gate,
            });
        }
        let out = self.head.apply(&h);
        ((out, Tape { blocks: tapes, head_input: h }), stats)
    }

    /// Gradients of `sum(d_out ⊙ output)` with respect to the trainable
    /// tensors and the input.
    pub fn backward(&self, tape: &Tape, d_out: &Array2<f64>) -> (Grads, Array2<f64>) {
        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(4 * self.blocks.len() + 2);
        let head_w = tape.head_input.t().dot(d_out);
        let head_b = d_out.sum_axis(Axis(0));
        let mut d = d_out.dot(&self.head.w.t());
        let mut rev: Vec<[Vec<f64>; 4]> = Vec::with_capacity(self.blocks.len());
        for (b, t) in self.blocks.iter().zip(&tape.blocks).rev() {
            let dy = &d * &t.gate;
            let d_gamma = (&dy * &t.normalized).sum_axis(Axis(0));
            let d_beta = dy.sum_axis(Axis(0));
            let dxhat = &dy * &b.norm.gamma;
            let dz = if t.batch_stats {
                let n = dy.nrows() as f64;
                let s1 = dxhat.sum_axis(Axis(0));
                let s2 = (&dxhat * &t.normalized).sum_axis(Axis(0));
                ((&dxhat * n) - &s1 - &t.normalized * &s2) * &t.inv_std / n
            } else {
                &dxhat * &t.inv_std
            };
            let d_w = t.input.t().dot(&dz);
            let d_b = dz.sum_axis(Axis(0));
            d = dz.dot(&b.linear.w.t());
            rev.push([flat2(d_w), d_b.to_vec(), d_gamma.to_vec(), d_beta.to_vec()]);
        }
        for g in rev.into_iter().rev() {
            grads.extend(g);
        }
        grads.push(flat2(head_w));
        grads.push(head_b.to_vec());
        (Grads(grads), d)
    }

    /// Trainable tensors: per block `w, b, gamma, beta`, then head `w, b`.
    pub fn trainable(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for b in &self.blocks {
            out.push(slice(&b.linear.w));
            out.push(b.linear.b.as_slice().expect("contiguous"));
            out.push(b.norm.gamma.as_slice().expect("contiguous"));
            out.push(b.norm.beta.as_slice().expect("contiguous"));
        }
        out.push(slice(&self.head.w));
        out.push(self.head.b.as_slice().expect("contiguous"));
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for b in &mut self.blocks {
            out.push(b.linear.w.as_slice_mut().expect("contiguous"));
            out.push(b.linear.b.as_slice_mut().expect("contiguous"));
            out.push(b.norm.gamma.as_slice_mut().expect("contiguous"));
            out.push(b.norm.beta.as_slice_mut().expect("contiguous"));
        }
        out.push(self.head.w.as_slice_mut().expect("contiguous"));
        out.push(self.head.b.as_slice_mut().expect("contiguous"));
        out
    }

    /// Every tensor including running statistics, prefixed by `prefix`.
    pub fn named_tensors(&self, prefix: &str) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let p = format!("{prefix}.block{i}");
            out.push(NamedTensor::from2(format!("{p}.weight"), &b.linear.w));
            out.push(NamedTensor::from1(format!("{p}.bias"), &b.linear.b));
            out.push(NamedTensor::from1(format!("{p}.bn_gamma"), &b.norm.gamma));
            out.push(NamedTensor::from1(format!("{p}.bn_beta"), &b.norm.beta));
            out.push(NamedTensor::from1(format!("{p}.bn_running_mean"), &b.norm.running_mean));
            out.push(NamedTensor::from1(format!("{p}.bn_running_var"), &b.norm.running_var));
        }
        out.push(NamedTensor::from2(format!("{prefix}.head.weight"), &self.head.w));
        out.push(NamedTensor::from1(format!("{prefix}.head.bias"), &self.head.b));
        out
    }

    /// Overwrites every tensor from `tensors`, which must match
    /// [`Mlp::named_tensors`] in names and shapes.
    pub fn load_named(&mut self, prefix: &str, tensors: &[NamedTensor]) -> Result<()> {
        let expected = self.named_tensors(prefix);
        let lookup = |name: &str, shape: &[usize]| -> Result<&NamedTensor> {
            let t = tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| PalcasError::Schema(format!("missing tensor {name}")))?;
            if t.shape != shape {
                return Err(PalcasError::Schema(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    t.shape, shape
                )));
            }
            Ok(t)
        };
        let found: Vec<&NamedTensor> =
            expected.iter().map(|e| lookup(&e.name, &e.shape)).collect::<Result<_>>()?;
        let mut it = found.into_iter();
        let mut next = |dst: &mut [f64]| dst.copy_from_slice(&it.next().expect("checked").data);
        for b in &mut self.blocks {
            next(b.linear.w.as_slice_mut().expect("contiguous"));
            next(b.linear.b.as_slice_mut().expect("contiguous"));
            next(b.norm.gamma.as_slice_mut().expect("contiguous"));
            next(b.norm.beta.as_slice_mut().expect("contiguous"));
            next(b.norm.running_mean.as_slice_mut().expect("contiguous"));
            next(b.norm.running_var.as_slice_mut().expect("contiguous"));
        }
        next(self.head.w.as_slice_mut().expect("contiguous"));
        next(self.head.b.as_slice_mut().expect("contiguous"));
        Ok(())
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("contiguous")
}

fn flat2(a: Array2<f64>) -> Vec<f64> {
    a.as_standard_layout().iter().copied().collect()
}

/// Huber loss (threshold 1) averaged over elements, and its gradient.
pub fn huber(pred: &Array2<f64>, target: &Array2<f64>) -> (f64, Array2<f64>) {
    let n = pred.len() as f64;
    let diff = pred - target;
    let loss = diff.iter().map(|&d| if d.abs() <= 1.0 { 0.5 * d * d } else { d.abs() - 0.5 }).sum::<f64>() / n;
    let grad = diff.mapv(|d| d.clamp(-1.0, 1.0) / n);
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net(dropout: f64) -> (Mlp, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = MlpSpec { input: 3, hidden: vec![5, 4], output: 2, dropout };
        (Mlp::new(spec, &mut rng).unwrap(), rng)
    }

    fn batch(rng: &mut ChaCha8Rng, n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, 3), |_| rng.gen_range(-1.0..1.0))
    }

    /// Loss `sum(w ⊙ out)` for a fixed weighting `w`.
    fn weighted(out: &Array2<f64>, w: &Array2<f64>) -> f64 {
        (out * w).sum()
    }

    #[test]
    fn train_gradients_match_finite_differences() {
        let (mut m, mut rng) = net(0.0);
        let x = batch(&mut rng, 6);
        let w = Array2::from_shape_fn((6, 2), |_| rng.gen_range(-1.0..1.0));
        let snapshot = m.clone();
        let (out, tape) = m.forward_train(&x, &mut rng);
        let (g, dx) = snapshot.backward(&tape, &w);
        let _ = out;
        let h = 1e-6;
        let loss_at = |net: &Mlp, x: &Array2<f64>| {
            let mut n = net.clone();
            let mut r = ChaCha8Rng::seed_from_u64(0);
            weighted(&n.forward_train(x, &mut r).0, &w)
        };
        for (t, grad) in g.0.iter().enumerate() {
            for k in 0..grad.len() {
                let mut plus = snapshot.clone();
                plus.trainable_mut()[t][k] += h;
                let mut minus = snapshot.clone();
                minus.trainable_mut()[t][k] -= h;
                let num = (loss_at(&plus, &x) - loss_at(&minus, &x)) / (2.0 * h);
                assert!((num - grad[k]).abs() < 1e-5 * (1.0 + num.abs()), "tensor {t}[{k}]: {num} vs {}", grad[k]);
            }
        }
        for i in 0..x.nrows() {
            for j in 0..x.ncols() {
                let mut xp = x.clone();
                xp[[i, j]] += h;
                let mut xm = x.clone();
                xm[[i, j]] -= h;
                let num = (loss_at(&snapshot, &xp) - loss_at(&snapshot, &xm)) / (2.0 * h);
                assert!((num - dx[[i, j]]).abs() < 1e-5 * (1.0 + num.abs()));
            }
        }
    }

    #[test]
    fn eval_gradients_match_finite_differences() {
        let (mut m, mut rng) = net(0.1);
        for _ in 0..3 {
            let x = batch(&mut rng, 8);
            m.forward_train(&x, &mut rng);
        }
        let x = batch(&mut rng, 4);
        let w = Array2::from_shape_fn((4, 2), |_| rng.gen_range(-1.0..1.0));
        let (out, tape) = m.forward_eval(&x);
        assert_eq!(out, m.infer(&x));
        let (g, dx) = m.backward(&tape, &w);
        let h = 1e-6;
        for (t, grad) in g.0.iter().enumerate() {
            for k in (0..grad.len()).step_by(3) {
                let mut plus = m.clone();
                plus.trainable_mut()[t][k] += h;
                let mut minus = m.clone();
                minus.trainable_mut()[t][k] -= h;
                let num = (weighted(&plus.infer(&x), &w) - weighted(&minus.infer(&x), &w)) / (2.0 * h);
                assert!((num - grad[k]).abs() < 1e-6 * (1.0 + num.abs()));
            }
        }
        let mut xp = x.clone();
        xp[[1, 2]] += h;
        let mut xm = x.clone();
        xm[[1, 2]] -= h;
        let num = (weighted(&m.infer(&xp), &w) - weighted(&m.infer(&xm), &w)) / (2.0 * h);
        assert!((num - dx[[1, 2]]).abs() < 1e-6);
    }

    #[test]
    fn running_statistics_track_batches() {
        let (mut m, mut rng) = net(0.0);
        let x = batch(&mut rng, 16);
        m.forward_train(&x, &mut rng);
        let z = m.blocks[0].linear.apply(&x);
        let mean = z.mean_axis(Axis(0)).unwrap();
        let expect = &mean * BN_MOMENTUM;
        for (a, b) in m.blocks[0].norm.running_mean.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn named_tensors_round_trip() {
        let (m, mut rng) = net(0.1);
        let other = Mlp::new(m.spec().clone(), &mut rng).unwrap();
        let mut copy = other.clone();
        copy.load_named("q", &m.named_tensors("q")).unwrap();
        assert_eq!(copy, m);
        let mut bad = m.named_tensors("q");
        bad[0].shape = vec![1, 1];
        assert!(matches!(copy.load_named("q", &bad), Err(PalcasError::Schema(_))));
    }

    #[test]
    fn huber_regions() {
        let p = Array2::from_shape_vec((1, 2), vec![0.5, 3.0]).unwrap();
        let t = Array2::zeros((1, 2));
        let (l, g) = huber(&p, &t);
        assert!((l - (0.125 + 2.5) / 2.0).abs() < 1e-15);
        assert_eq!(g.as_slice().unwrap(), &[0.25, 0.5]);
    }
}
