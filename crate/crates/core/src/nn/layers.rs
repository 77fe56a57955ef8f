//! Layer primitives. Activations are stored batch-major: `[batch][channel][length]`
//! for sequences and `[batch][features]` for vectors.

use rand::Rng;

use super::{gemm, Layout, Real};

/// 1-D convolution with "same"-style padding `kernel / 2` and optional stride.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    /// `[out][in][kernel]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv1d<T> {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: vec![T::zero(); out_channels * in_channels * kernel],
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn padding(&self) -> usize {
        self.kernel / 2
    }

    pub fn output_len(&self, len: usize) -> usize {
        (len + 2 * self.padding() - self.kernel) / self.stride + 1
    }

    fn patch(&self) -> usize {
        self.in_channels * self.kernel
    }

    pub fn init_uniform<R: Rng>(&mut self, rng: &mut R) {
        let fan_in = self.patch();
        init_fan_in(&mut self.weight, fan_in, rng);
        self.bias.iter_mut().for_each(|b| *b = T::zero());
    }

    /// Unfolds one item `[in][len]` into `[in * kernel][out_len]`.
    fn im2col(&self, x: &[T], len: usize, out_len: usize, cols: &mut [T]) {
        let pad = self.padding() as isize;
        for ci in 0..self.in_channels {
            let row_in = &x[ci * len..(ci + 1) * len];
            for kk in 0..self.kernel {
                let row = &mut cols[(ci * self.kernel + kk) * out_len..][..out_len];
                for (o, v) in row.iter_mut().enumerate() {
                    let src = (o * self.stride) as isize + kk as isize - pad;
                    *v = if src >= 0 && (src as usize) < len {
                        row_in[src as usize]
                    } else {
                        T::zero()
                    };
                }
            }
        }
    }

    fn col2im_add(&self, cols: &[T], len: usize, out_len: usize, dx: &mut [T]) {
        let pad = self.padding() as isize;
        for ci in 0..self.in_channels {
            let row_out = &mut dx[ci * len..(ci + 1) * len];
            for kk in 0..self.kernel {
                let row = &cols[(ci * self.kernel + kk) * out_len..][..out_len];
                for (o, &v) in row.iter().enumerate() {
                    let dst = (o * self.stride) as isize + kk as isize - pad;
                    if dst >= 0 && (dst as usize) < len {
                        row_out[dst as usize] += v;
                    }
                }
            }
        }
    }

    /// `x`: `[batch][in][len]` → `[batch][out][out_len]`.
    pub fn forward(&self, x: &[T], batch: usize, len: usize) -> Vec<T> {
        let out_len = self.output_len(len);
        let mut out = vec![T::zero(); batch * self.out_channels * out_len];
        let mut cols = vec![T::zero(); self.patch() * out_len];
        let lw = Layout::row_major(self.out_channels, self.patch());
        let lc = Layout::row_major(self.patch(), out_len);
        let lo = Layout::row_major(self.out_channels, out_len);
        for b in 0..batch {
            let xb = &x[b * self.in_channels * len..(b + 1) * self.in_channels * len];
            self.im2col(xb, len, out_len, &mut cols);
            let ob =
                &mut out[b * self.out_channels * out_len..(b + 1) * self.out_channels * out_len];
            for (co, row) in ob.chunks_mut(out_len).enumerate() {
                row.iter_mut().for_each(|v| *v = self.bias[co]);
            }
            gemm(&self.weight, lw, &cols, lc, T::one(), ob, lo);
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(
        &self,
        x: &[T],
        dy: &[T],
        batch: usize,
        len: usize,
        grad: &mut Conv1d<T>,
    ) -> Vec<T> {
        let out_len = self.output_len(len);
        let mut dx = vec![T::zero(); batch * self.in_channels * len];
        let mut cols = vec![T::zero(); self.patch() * out_len];
        let mut dcols = vec![T::zero(); self.patch() * out_len];
        let lw = Layout::row_major(self.out_channels, self.patch());
        let lc = Layout::row_major(self.patch(), out_len);
        let lo = Layout::row_major(self.out_channels, out_len);
        for b in 0..batch {
            let xb = &x[b * self.in_channels * len..(b + 1) * self.in_channels * len];
            let dyb = &dy[b * self.out_channels * out_len..(b + 1) * self.out_channels * out_len];
            self.im2col(xb, len, out_len, &mut cols);
            for (co, row) in dyb.chunks(out_len).enumerate() {
                grad.bias[co] += row.iter().copied().sum::<T>();
            }
            gemm(dyb, lo, &cols, lc.t(), T::one(), &mut grad.weight, lw);
            gemm(&self.weight, lw.t(), dyb, lo, T::zero(), &mut dcols, lc);
            let dxb = &mut dx[b * self.in_channels * len..(b + 1) * self.in_channels * len];
            self.col2im_add(&dcols, len, out_len, dxb);
        }
        dx
    }
}

/// Fully connected layer, `y = W x + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    /// `[out][in]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Dense<T> {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn init_uniform<R: Rng>(&mut self, rng: &mut R) {
        init_fan_in(&mut self.weight, self.inputs, rng);
        self.bias.iter_mut().for_each(|b| *b = T::zero());
    }

    /// `x`: `[batch][in]` → `[batch][out]`.
    pub fn forward(&self, x: &[T], batch: usize) -> Vec<T> {
        let mut y: Vec<T> = (0..batch).flat_map(|_| self.bias.iter().copied()).collect();
        let lw = Layout::row_major(self.outputs, self.inputs);
        gemm(
            x,
            Layout::row_major(batch, self.inputs),
            &self.weight,
            lw.t(),
            T::one(),
            &mut y,
            Layout::row_major(batch, self.outputs),
        );
        y
    }

    pub fn backward(&self, x: &[T], dy: &[T], batch: usize, grad: &mut Dense<T>) -> Vec<T> {
        let lx = Layout::row_major(batch, self.inputs);
        let ly = Layout::row_major(batch, self.outputs);
        let lw = Layout::row_major(self.outputs, self.inputs);
        for row in dy.chunks(self.outputs) {
            for (g, &d) in grad.bias.iter_mut().zip(row) {
                *g += d;
            }
        }
        gemm(dy, ly.t(), x, lx, T::one(), &mut grad.weight, lw);
        let mut dx = vec![T::zero(); batch * self.inputs];
        gemm(dy, ly, &self.weight, lw, T::zero(), &mut dx, lx);
        dx
    }
}

/// Uniform in `±sqrt(6 / fan_in)`, drawn in double precision so that `f32`
/// and `f64` models built from the same seed agree.
fn init_fan_in<T: Real, R: Rng>(w: &mut [T], fan_in: usize, rng: &mut R) {
    let bound = (6.0 / fan_in as f64).sqrt();
    for v in w {
        *v = T::of(rng.gen_range(-bound..bound));
    }
}

pub fn relu_inplace<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Masks `grad` by the activation pattern of a post-ReLU tensor.
pub fn relu_backward_inplace<T: Real>(activated: &[T], grad: &mut [T]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= T::zero() {
            *g = T::zero();
        }
    }
}

/// `[batch][channels][len]` → `[batch][channels]`.
pub fn global_avg_pool<T: Real>(x: &[T], batch: usize, channels: usize, len: usize) -> Vec<T> {
    let scale = T::one() / T::of(len as f64);
    x.chunks(len)
        .take(batch * channels)
        .map(|row| row.iter().copied().sum::<T>() * scale)
        .collect()
}

pub fn global_avg_pool_backward<T: Real>(dy: &[T], len: usize) -> Vec<T> {
    let scale = T::one() / T::of(len as f64);
    dy.iter()
        .flat_map(|&d| std::iter::repeat_n(d * scale, len))
        .collect()
}

/// Row-wise softmax of `[batch][classes]` logits.
pub fn softmax<T: Real>(logits: &[T], classes: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(classes) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&z| (z - m).exp()).collect();
        let s: T = exps.iter().copied().sum();
        out.extend(exps.into_iter().map(|e| e / s));
    }
    out
}

/// Mean cross-entropy of `[batch][classes]` logits against class indices,
/// with its gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Real>(
    logits: &[T],
    classes: usize,
    targets: &[usize],
) -> (T, Vec<T>) {
    let batch = targets.len();
    let inv = T::one() / T::of(batch as f64);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &y) in logits.chunks(classes).zip(targets) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + row.iter().map(|&z| (z - m).exp()).sum::<T>().ln();
        loss += (lse - row[y]) * inv;
        for (c, &z) in row.iter().enumerate() {
            let p = (z - lse).exp();
            let target = if c == y { T::one() } else { T::zero() };
            grad.push((p - target) * inv);
        }
    }
    (loss, grad)
}
