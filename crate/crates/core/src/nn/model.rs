use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    global_avg_pool, global_avg_pool_backward, relu_backward_inplace, relu_inplace, softmax,
    softmax_cross_entropy, Conv1d, Dense,
};
use super::Real;
use crate::error::{Error, Result};
use crate::features::{WindowFeatures, SCALAR_FEATURES};

pub const CLASSES: usize = 2;
pub const EXPERT_CLASS: usize = 1;
const GAZE_CHANNELS: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Gaze sequence length per channel (sampling rate × window size).
    pub seq_len: usize,
    pub stem_channels: usize,
    /// Width of each residual block; blocks after the first are preceded by a
    /// stride-2 convolution changing the width.
    pub block_channels: Vec<usize>,
    pub kernel_size: usize,
    pub scalar_hidden: usize,
    pub fusion_hidden: usize,
    pub skip_connections: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            seq_len: 1000,
            stem_channels: 16,
            block_channels: vec![16, 32, 64],
            kernel_size: 7,
            scalar_hidden: 16,
            fusion_hidden: 64,
            skip_connections: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn with_seq_len(mut self, seq_len: usize) -> Self {
        self.seq_len = seq_len;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let widths_ok = self.stem_channels >= 1
            && self.scalar_hidden >= 1
            && self.fusion_hidden >= 1
            && self.block_channels.iter().all(|&c| c >= 1);
        if !widths_ok {
            return Err(Error::Config("all layer widths must be at least 1".into()));
        }
        if self.block_channels.is_empty() {
            return Err(Error::Config(
                "at least one residual block is required".into(),
            ));
        }
        if self.block_channels[0] != self.stem_channels {
            return Err(Error::Config(format!(
                "first residual block width {} must equal stem width {} for the identity skip",
                self.block_channels[0], self.stem_channels
            )));
        }
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        if self.seq_len < 2 {
            return Err(Error::Config("sequence length must be at least 2".into()));
        }
        Ok(())
    }

    pub fn embedding_width(&self) -> usize {
        *self.block_channels.last().expect("validated")
    }

    pub fn fusion_inputs(&self) -> usize {
        self.embedding_width() + SCALAR_FEATURES * self.scalar_hidden
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualBlock<T> {
    pub down: Option<Conv1d<T>>,
    pub conv1: Conv1d<T>,
    pub conv2: Conv1d<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalarStream<T> {
    pub fc1: Dense<T>,
    pub fc2: Dense<T>,
}

/// Network parameters. The same type holds gradients and optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub config: ModelConfig,
    pub stem: Conv1d<T>,
    pub blocks: Vec<ResidualBlock<T>>,
    pub scalar: Vec<ScalarStream<T>>,
    pub fusion: Dense<T>,
    pub output: Dense<T>,
}

/// Single-precision network used for training and inference.
pub type Model = Network<f32>;

/// One assembled mini-batch.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    pub size: usize,
    /// `[batch][2][seq_len]`
    pub seq: Vec<T>,
    /// `[batch][3]`
    pub scalars: Vec<T>,
    pub targets: Vec<usize>,
}

impl<T: Real> Batch<T> {
    pub fn from_features(items: &[&WindowFeatures], seq_len: usize) -> Result<Self> {
        let mut seq = Vec::with_capacity(items.len() * GAZE_CHANNELS * seq_len);
        let mut scalars = Vec::with_capacity(items.len() * SCALAR_FEATURES);
        for (i, f) in items.iter().enumerate() {
            if f.gaze_seq.len() != GAZE_CHANNELS * seq_len {
                return Err(Error::Shape(format!(
                    "item {i}: gaze sequence has {} values, model expects {}",
                    f.gaze_seq.len(),
                    GAZE_CHANNELS * seq_len
                )));
            }
            seq.extend(f.gaze_seq.iter().map(|&v| T::of(v)));
            scalars.extend(f.scalars().iter().map(|&v| T::of(v)));
        }
        Ok(Self {
            size: items.len(),
            seq,
            scalars,
            targets: items.iter().map(|f| f.label.class_index()).collect(),
        })
    }
}

struct BlockTape<T> {
    /// Post-activation output of the downsampling convolution, if any.
    down: Option<Vec<T>>,
    r1: Vec<T>,
    out: Vec<T>,
    len: usize,
}

struct Tape<T> {
    stem: Vec<T>,
    blocks: Vec<BlockTape<T>>,
    scalar_in: Vec<Vec<T>>,
    scalar_h1: Vec<Vec<T>>,
    scalar_h2: Vec<Vec<T>>,
    cat: Vec<T>,
    fused: Vec<T>,
    logits: Vec<T>,
}

impl<T: Real> Network<T> {
    /// Zero-valued network with the configured shapes.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let k = config.kernel_size;
        let mut blocks = Vec::with_capacity(config.block_channels.len());
        let mut prev = config.stem_channels;
        for (i, &c) in config.block_channels.iter().enumerate() {
            blocks.push(ResidualBlock {
                down: (i > 0).then(|| Conv1d::new(prev, c, k, 2)),
                conv1: Conv1d::new(c, c, k, 1),
                conv2: Conv1d::new(c, c, k, 1),
            });
            prev = c;
        }
        let h = config.scalar_hidden;
        Ok(Self {
            config: config.clone(),
            stem: Conv1d::new(GAZE_CHANNELS, config.stem_channels, k, 1),
            blocks,
            scalar: (0..SCALAR_FEATURES)
                .map(|_| ScalarStream {
                    fc1: Dense::new(1, h),
                    fc2: Dense::new(h, h),
                })
                .collect(),
            fusion: Dense::new(config.fusion_inputs(), config.fusion_hidden),
            output: Dense::new(config.fusion_hidden, CLASSES),
        })
    }

    /// Fan-in scaled uniform weights from the config seed; zero biases.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        net.stem.init_uniform(&mut rng);
        for b in &mut net.blocks {
            if let Some(d) = &mut b.down {
                d.init_uniform(&mut rng);
            }
            b.conv1.init_uniform(&mut rng);
            b.conv2.init_uniform(&mut rng);
        }
        for s in &mut net.scalar {
            s.fc1.init_uniform(&mut rng);
            s.fc2.init_uniform(&mut rng);
        }
        net.fusion.init_uniform(&mut rng);
        net.output.init_uniform(&mut rng);
        Ok(net)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut()
            .into_iter()
            .for_each(|t| t.iter_mut().for_each(|v| *v = T::zero()));
        z
    }

    /// Zeroes the final layer so both classes score exactly 0.5.
    pub fn zero_output_layer(&mut self) {
        self.output.weight.iter_mut().for_each(|v| *v = T::zero());
        self.output.bias.iter_mut().for_each(|v| *v = T::zero());
    }

    /// Parameter tensors with stable names, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Vec<T>)> {
        let mut out = Vec::new();
        out.push(("stem.weight".to_string(), &self.stem.weight));
        out.push(("stem.bias".to_string(), &self.stem.bias));
        for (i, b) in self.blocks.iter().enumerate() {
            if let Some(d) = &b.down {
                out.push((format!("blocks.{i}.down.weight"), &d.weight));
                out.push((format!("blocks.{i}.down.bias"), &d.bias));
            }
            out.push((format!("blocks.{i}.conv1.weight"), &b.conv1.weight));
            out.push((format!("blocks.{i}.conv1.bias"), &b.conv1.bias));
            out.push((format!("blocks.{i}.conv2.weight"), &b.conv2.weight));
            out.push((format!("blocks.{i}.conv2.bias"), &b.conv2.bias));
        }
        for (i, s) in self.scalar.iter().enumerate() {
            out.push((format!("scalar.{i}.fc1.weight"), &s.fc1.weight));
            out.push((format!("scalar.{i}.fc1.bias"), &s.fc1.bias));
            out.push((format!("scalar.{i}.fc2.weight"), &s.fc2.weight));
            out.push((format!("scalar.{i}.fc2.bias"), &s.fc2.bias));
        }
        out.push(("fusion.weight".to_string(), &self.fusion.weight));
        out.push(("fusion.bias".to_string(), &self.fusion.bias));
        out.push(("output.weight".to_string(), &self.output.weight));
        out.push(("output.bias".to_string(), &self.output.bias));
        out
    }

    /// Same order as [`Network::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = vec![&mut self.stem.weight, &mut self.stem.bias];
        for b in &mut self.blocks {
            if let Some(d) = &mut b.down {
                out.push(&mut d.weight);
                out.push(&mut d.bias);
            }
            out.push(&mut b.conv1.weight);
            out.push(&mut b.conv1.bias);
            out.push(&mut b.conv2.weight);
            out.push(&mut b.conv2.bias);
        }
        for s in &mut self.scalar {
            out.push(&mut s.fc1.weight);
            out.push(&mut s.fc1.bias);
            out.push(&mut s.fc2.weight);
            out.push(&mut s.fc2.bias);
        }
        out.push(&mut self.fusion.weight);
        out.push(&mut self.fusion.bias);
        out.push(&mut self.output.weight);
        out.push(&mut self.output.bias);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        let mut out = Network::<U>::zeros(&self.config).expect("config already validated");
        for ((_, src), dst) in self.tensors().into_iter().zip(out.tensors_mut()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = U::of(s.to_f64().expect("finite"));
            }
        }
        out
    }

    fn check_batch(&self, batch: &Batch<T>) -> Result<()> {
        let l = self.config.seq_len;
        if batch.seq.len() != batch.size * GAZE_CHANNELS * l
            || batch.scalars.len() != batch.size * SCALAR_FEATURES
        {
            return Err(Error::Shape(format!(
                "batch of {} does not match sequence length {l}",
                batch.size
            )));
        }
        Ok(())
    }

    fn run(&self, batch: &Batch<T>) -> Tape<T> {
        let b = batch.size;
        let mut len = self.config.seq_len;
        let mut stem = self.stem.forward(&batch.seq, b, len);
        relu_inplace(&mut stem);

        let mut blocks: Vec<BlockTape<T>> = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let prev = blocks.last().map_or(&stem, |t| &t.out);
            let down = block.down.as_ref().map(|d| {
                let mut h = d.forward(prev, b, len);
                relu_inplace(&mut h);
                h
            });
            if let Some(d) = &block.down {
                len = d.output_len(len);
            }
            let h = down.as_ref().unwrap_or(prev);
            let mut r1 = block.conv1.forward(h, b, len);
            relu_inplace(&mut r1);
            let mut out = block.conv2.forward(&r1, b, len);
            if self.config.skip_connections {
                for (o, &x) in out.iter_mut().zip(h) {
                    *o += x;
                }
            }
            relu_inplace(&mut out);
            blocks.push(BlockTape { down, r1, out, len });
        }

        let last = blocks.last().expect("at least one block");
        let width = self.config.embedding_width();
        let emb = global_avg_pool(&last.out, b, width, last.len);

        let mut scalar_in = Vec::with_capacity(SCALAR_FEATURES);
        let mut scalar_h1 = Vec::with_capacity(SCALAR_FEATURES);
        let mut scalar_h2 = Vec::with_capacity(SCALAR_FEATURES);
        for (k, stream) in self.scalar.iter().enumerate() {
            let x: Vec<T> = batch
                .scalars
                .chunks(SCALAR_FEATURES)
                .map(|r| r[k])
                .collect();
            let mut h1 = stream.fc1.forward(&x, b);
            relu_inplace(&mut h1);
            let mut h2 = stream.fc2.forward(&h1, b);
            relu_inplace(&mut h2);
            scalar_in.push(x);
            scalar_h1.push(h1);
            scalar_h2.push(h2);
        }

        let h = self.config.scalar_hidden;
        let mut cat = Vec::with_capacity(b * self.config.fusion_inputs());
        for i in 0..b {
            cat.extend_from_slice(&emb[i * width..(i + 1) * width]);
            for h2 in &scalar_h2 {
                cat.extend_from_slice(&h2[i * h..(i + 1) * h]);
            }
        }
        let mut fused = self.fusion.forward(&cat, b);
        relu_inplace(&mut fused);
        let logits = self.output.forward(&fused, b);

        Tape {
            stem,
            blocks,
            scalar_in,
            scalar_h1,
            scalar_h2,
            cat,
            fused,
            logits,
        }
    }

    /// Raw class logits, `[batch][2]`.
    pub fn logits(&self, batch: &Batch<T>) -> Result<Vec<T>> {
        self.check_batch(batch)?;
        Ok(self.run(batch).logits)
    }

    /// Softmax class probabilities, `[batch][2]`; column 1 is the expertise score.
    pub fn probabilities(&self, batch: &Batch<T>) -> Result<Vec<T>> {
        Ok(softmax(&self.logits(batch)?, CLASSES))
    }

    /// Mean cross-entropy over the batch and its gradient for every parameter.
    pub fn loss_and_gradients(&self, batch: &Batch<T>) -> Result<(T, Network<T>)> {
        self.check_batch(batch)?;
        if batch.targets.iter().any(|&t| t >= CLASSES) {
            return Err(Error::Parameter("class index out of range".into()));
        }
        let b = batch.size;
        let tape = self.run(batch);
        let (loss, dlogits) = softmax_cross_entropy(&tape.logits, CLASSES, &batch.targets);
        if !loss.is_finite() {
            return Err(Error::NonFinite { batch: 0 });
        }
        let mut grad = self.zeros_like();

        let mut dfused = self
            .output
            .backward(&tape.fused, &dlogits, b, &mut grad.output);
        relu_backward_inplace(&tape.fused, &mut dfused);
        let dcat = self
            .fusion
            .backward(&tape.cat, &dfused, b, &mut grad.fusion);

        let width = self.config.embedding_width();
        let h = self.config.scalar_hidden;
        let stride = self.config.fusion_inputs();
        let mut demb = Vec::with_capacity(b * width);
        let mut dh2: Vec<Vec<T>> = (0..SCALAR_FEATURES)
            .map(|_| Vec::with_capacity(b * h))
            .collect();
        for row in dcat.chunks(stride) {
            demb.extend_from_slice(&row[..width]);
            for (k, d) in dh2.iter_mut().enumerate() {
                d.extend_from_slice(&row[width + k * h..width + (k + 1) * h]);
            }
        }

        for (k, stream) in self.scalar.iter().enumerate() {
            let mut d2 = std::mem::take(&mut dh2[k]);
            relu_backward_inplace(&tape.scalar_h2[k], &mut d2);
            let mut d1 = stream
                .fc2
                .backward(&tape.scalar_h1[k], &d2, b, &mut grad.scalar[k].fc2);
            relu_backward_inplace(&tape.scalar_h1[k], &mut d1);
            stream
                .fc1
                .backward(&tape.scalar_in[k], &d1, b, &mut grad.scalar[k].fc1);
        }

        let last_len = tape.blocks.last().expect("at least one block").len;
        let mut dout = global_avg_pool_backward(&demb, last_len);
        for (i, block) in self.blocks.iter().enumerate().rev() {
            let t = &tape.blocks[i];
            let prev = if i == 0 {
                &tape.stem
            } else {
                &tape.blocks[i - 1].out
            };
            let h_in = t.down.as_ref().unwrap_or(prev);
            let gblock = &mut grad.blocks[i];

            relu_backward_inplace(&t.out, &mut dout);
            let mut dr1 = block
                .conv2
                .backward(&t.r1, &dout, b, t.len, &mut gblock.conv2);
            relu_backward_inplace(&t.r1, &mut dr1);
            let mut dh = block
                .conv1
                .backward(h_in, &dr1, b, t.len, &mut gblock.conv1);
            if self.config.skip_connections {
                for (d, &s) in dh.iter_mut().zip(&dout) {
                    *d += s;
                }
            }
            dout = match (&block.down, &t.down) {
                (Some(conv), Some(activated)) => {
                    relu_backward_inplace(activated, &mut dh);
                    let prev_len = if i == 0 {
                        self.config.seq_len
                    } else {
                        tape.blocks[i - 1].len
                    };
                    conv.backward(
                        prev,
                        &dh,
                        b,
                        prev_len,
                        gblock.down.as_mut().expect("same shape"),
                    )
                }
                _ => dh,
            };
        }
        relu_backward_inplace(&tape.stem, &mut dout);
        self.stem
            .backward(&batch.seq, &dout, b, self.config.seq_len, &mut grad.stem);

        Ok((loss, grad))
    }
}

impl Model {
    /// Expertise scores (expert-class probability) for a set of windows,
    /// evaluated in chunks.
    pub fn predict_scores(&self, windows: &[&WindowFeatures]) -> Result<Vec<f64>> {
        const CHUNK: usize = 64;
        let mut scores = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(CHUNK) {
            scores.extend(forward(self, chunk)?.iter().map(|p| p[EXPERT_CLASS]));
        }
        Ok(scores)
    }
}

/// Per-item class probabilities; each row sums to 1.
pub fn forward(model: &Model, windows: &[&WindowFeatures]) -> Result<Vec<[f64; CLASSES]>> {
    let batch = Batch::<f32>::from_features(windows, model.config.seq_len)?;
    let logits = model.logits(&batch)?;
    // softmax in double precision so rows sum to 1 within 1e-9
    let logits: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
    Ok(softmax(&logits, CLASSES)
        .chunks(CLASSES)
        .map(|p| [p[0], p[1]])
        .collect())
}

pub fn predict_expertise(model: &Model, window: &WindowFeatures) -> Result<f64> {
    Ok(forward(model, &[window])?[0][EXPERT_CLASS])
}

pub fn init_model(config: &ModelConfig) -> Result<Model> {
    Model::init(config)
}
