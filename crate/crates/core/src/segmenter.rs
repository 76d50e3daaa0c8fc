//! U-Net occlusion segmenter with squeeze-and-excitation encoder blocks.
//!
//! Every convolution is followed by instance normalisation and ReLU.
//! Encoder block `i`: 3x3 convolution, optional SE gate, then 2x2
//! max-pool; the pre-pool map is kept as the skip connection. Each decoder
//! level upsamples by two, applies a 3x3 transposed convolution,
//! concatenates the skip of the same level and fuses the pair with a 3x3
//! convolution. A 1x1 head yields one logit per pixel.

use std::path::Path;

use defilter_nn::layers::{Conv2d, ConvTranspose2d};
use defilter_nn::{Adam, Bound, ConvOptions, ParamStore, Tape, Tensor, Var};
use image::RgbImage;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::mask::OcclusionMask;
use crate::schedule::OptimSchedule;
use crate::tensor::{image_to_tensor, mask_to_tensor, tensor_plane};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegNetConfig {
    pub encoder_blocks: usize,
    /// Zero-based encoder blocks that carry an SE gate.
    pub se_block_layers: Vec<usize>,
    pub base_channels: usize,
    /// `(height, width)`.
    pub input_size: (u32, u32),
    pub se_reduction: usize,
    pub threshold: f32,
}

impl Default for SegNetConfig {
    fn default() -> Self {
        SegNetConfig {
            encoder_blocks: 5,
            se_block_layers: (0..5).collect(),
            base_channels: 32,
            input_size: (512, 512),
            se_reduction: 16,
            threshold: 0.5,
        }
    }
}

impl SegNetConfig {
    pub fn desk() -> Self {
        SegNetConfig {
            base_channels: 16,
            input_size: (64, 64),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.encoder_blocks == 0 || self.encoder_blocks > 12 {
            return bad(format!("encoder_blocks = {}", self.encoder_blocks));
        }
        let f = 1u32 << self.encoder_blocks;
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % f != 0 || w % f != 0 {
            return bad(format!(
                "input {h}x{w} is not divisible by 2^{} = {f}",
                self.encoder_blocks
            ));
        }
        if let Some(&i) = self.se_block_layers.iter().find(|&&i| i >= self.encoder_blocks) {
            return bad(format!("SE layer {i} outside {} encoder blocks", self.encoder_blocks));
        }
        if self.base_channels == 0 || self.se_reduction == 0 {
            return bad("base_channels and se_reduction must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("threshold {}", self.threshold));
        }
        Ok(())
    }

    fn width(&self, block: usize) -> usize {
        self.base_channels << block
    }
}

/// Squeeze (global average pool), excite (two pointwise layers, ReLU then
/// sigmoid), and rescale each channel by its gate.
#[derive(Clone, Debug)]
pub struct SqueezeExcite {
    pub reduce: Conv2d,
    pub expand: Conv2d,
}

impl SqueezeExcite {
    pub fn new(
        store: &mut ParamStore<f32>,
        name: &str,
        channels: usize,
        reduction: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let hidden = (channels / reduction).max(1);
        Ok(SqueezeExcite {
            reduce: Conv2d::pointwise(store, &format!("{name}.reduce"), channels, hidden, rng)?,
            expand: Conv2d::pointwise(store, &format!("{name}.expand"), hidden, channels, rng)?,
        })
    }

    pub fn gate<'t>(&self, p: &Bound<'t, f32>, x: Var<'t, f32>) -> Result<Var<'t, f32>> {
        let s = x.global_avg_pool()?;
        let e = self.reduce.forward(p, s)?.relu();
        Ok(self.expand.forward(p, e)?.sigmoid())
    }

    pub fn forward<'t>(&self, p: &Bound<'t, f32>, x: Var<'t, f32>) -> Result<Var<'t, f32>> {
        let g = self.gate(p, x)?;
        Ok(x.mul(g)?)
    }
}

#[derive(Clone, Debug)]
struct EncoderBlock {
    conv: Conv2d,
    se: Option<SqueezeExcite>,
}

#[derive(Clone, Debug)]
struct DecoderBlock {
    deconv: ConvTranspose2d,
    fuse: Conv2d,
}

#[derive(Clone)]
pub struct SegModel {
    config: SegNetConfig,
    store: ParamStore<f32>,
    encoder: Vec<EncoderBlock>,
    decoder: Vec<DecoderBlock>,
    head: Conv2d,
    /// Training iterations applied so far.
    pub iteration: u64,
    pub loss_history: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct SegMeta {
    config: SegNetConfig,
    iteration: u64,
    loss_history: Vec<f32>,
}

const CHECKPOINT_KIND: &str = "segnet";

impl SegModel {
    /// Builds a freshly initialised network; `seed` fixes the weights.
    pub fn build(config: SegNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut encoder = Vec::new();
        let mut in_ch = 3;
        for b in 0..config.encoder_blocks {
            let out = config.width(b);
            let conv = Conv2d::new(&mut store, &format!("enc{b}.conv"), in_ch, out, 3, ConvOptions::same(3, 1), &mut rng)?;
            let se = if config.se_block_layers.contains(&b) {
                Some(SqueezeExcite::new(&mut store, &format!("enc{b}.se"), out, config.se_reduction, &mut rng)?)
            } else {
                None
            };
            encoder.push(EncoderBlock { conv, se });
            in_ch = out;
        }
        let mut decoder = Vec::new();
        for b in (0..config.encoder_blocks).rev() {
            let out = config.width(b);
            let deconv = ConvTranspose2d::new(&mut store, &format!("dec{b}.deconv"), in_ch, out, 3, 1, 1, &mut rng)?;
            let fuse = Conv2d::new(&mut store, &format!("dec{b}.fuse"), 2 * out, out, 3, ConvOptions::same(3, 1), &mut rng)?;
            decoder.push(DecoderBlock { deconv, fuse });
            in_ch = out;
        }
        let head = Conv2d::pointwise(&mut store, "head", in_ch, 1, &mut rng)?;
        Ok(SegModel {
            config,
            store,
            encoder,
            decoder,
            head,
            iteration: 0,
            loss_history: Vec::new(),
        })
    }

    pub fn config(&self) -> &SegNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.store
    }

    /// Per-pixel logits `[N, 1, H, W]` for images `[N, 3, H, W]`.
    pub fn forward<'t>(&self, p: &Bound<'t, f32>, x: Var<'t, f32>) -> Result<Var<'t, f32>> {
        let (_, c, h, w) = x.value().dims4()?;
        let (eh, ew) = self.config.input_size;
        if c != 3 || (h as u32, w as u32) != (eh, ew) {
            return Err(Error::Shape(format!(
                "segmenter expects 3x{eh}x{ew} input, got {c}x{h}x{w}"
            )));
        }
        let mut skips = Vec::with_capacity(self.encoder.len());
        let mut x = x;
        for block in &self.encoder {
            let mut y = instance_norm(block.conv.forward(p, x)?)?.relu();
            if let Some(se) = &block.se {
                y = se.forward(p, y)?;
            }
            skips.push(y);
            x = y.max_pool2d(2)?;
        }
        for block in &self.decoder {
            let up = instance_norm(block.deconv.forward(p, x.upsample_nearest(2)?)?)?.relu();
            let skip = skips.pop().expect("one skip per level");
            x = instance_norm(block.fuse.forward(p, Var::concat_channels(&[up, skip])?)?)?.relu();
        }
        Ok(self.head.forward(p, x)?)
    }

    /// Spatial size of the deepest encoder output.
    pub fn bottleneck_size(&self) -> (u32, u32) {
        let f = 1u32 << self.config.encoder_blocks;
        (self.config.input_size.0 / f, self.config.input_size.1 / f)
    }

    /// Sigmoid probabilities for one image, row-major.
    pub fn probabilities(&self, image: &RgbImage) -> Result<Vec<f32>> {
        let tape = Tape::new();
        let p = self.store.bind(&tape, false);
        let logits = self.forward(&p, tape.constant(image_to_tensor(image)))?;
        let probs = logits.sigmoid().value();
        Ok(tensor_plane(&probs, 0)?.to_vec())
    }

    /// Thresholded probabilities followed by a 3x3 opening.
    pub fn segment(&self, image: &RgbImage) -> Result<OcclusionMask> {
        self.segment_with_threshold(image, self.config.threshold)
    }

    pub fn segment_with_threshold(&self, image: &RgbImage, threshold: f32) -> Result<OcclusionMask> {
        let probs = self.probabilities(image)?;
        postprocess(image.width(), image.height(), &probs, threshold)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = SegMeta {
            config: self.config.clone(),
            iteration: self.iteration,
            loss_history: self.loss_history.clone(),
        };
        checkpoint::save(path, CHECKPOINT_KIND, &meta, &[("segnet", &self.store)])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut loaded = checkpoint::load::<SegMeta>(path, CHECKPOINT_KIND)?;
        let stored = loaded.take("segnet")?;
        let mut model = Self::build(loaded.meta.config, 0)?;
        if model.store.load_matching(&stored)? != model.store.len() || stored.len() != model.store.len() {
            return Err(Error::Checkpoint(format!(
                "{}: parameters do not match the configuration",
                path.display()
            )));
        }
        model.iteration = loaded.meta.iteration;
        model.loss_history = loaded.meta.loss_history;
        Ok(model)
    }
}

/// Per-sample, per-channel standardisation over the spatial axes.
pub fn instance_norm(x: Var<'_, f32>) -> Result<Var<'_, f32>> {
    let centred = x.sub(x.global_avg_pool()?)?;
    let std = centred.sqr().global_avg_pool()?.add_scalar(1e-5).sqrt();
    Ok(centred.div(std)?)
}

/// Thresholds `probs` (pixels `>= threshold` are set) and opens the result.
pub fn postprocess(width: u32, height: u32, probs: &[f32], threshold: f32) -> Result<OcclusionMask> {
    let mut m = OcclusionMask::threshold(width, height, probs, threshold)?.open();
    m.threshold_used = Some(threshold);
    Ok(m)
}

/// Mean binary cross-entropy of probabilities clamped to `[eps, 1 - eps]`.
pub fn binary_cross_entropy(probs: &[f64], target: &[f64], eps: f64) -> Result<f64> {
    if probs.len() != target.len() {
        return Err(Error::Shape(format!("{} predictions for {} targets", probs.len(), target.len())));
    }
    if probs.is_empty() {
        return Err(Error::NoData("empty prediction".into()));
    }
    let total: f64 = probs
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = p.clamp(eps, 1.0 - eps);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / probs.len() as f64)
}

/// An image and the mask the network should predict for it.
#[derive(Clone, Debug)]
pub struct SegSample {
    pub image: RgbImage,
    pub mask: OcclusionMask,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegTrainOptions {
    pub iterations: u64,
    pub batch_size: usize,
    pub schedule: OptimSchedule,
    pub seed: u64,
}

impl Default for SegTrainOptions {
    fn default() -> Self {
        SegTrainOptions {
            iterations: 400,
            batch_size: 8,
            schedule: OptimSchedule::default(),
            seed: 0,
        }
    }
}

/// Deterministic minibatch order: reshuffled every pass over the data.
pub(crate) struct Batches {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl Batches {
    pub(crate) fn new(len: usize, seed: u64) -> Self {
        let mut b = Batches {
            order: (0..len).collect(),
            pos: len,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        b.pos = b.order.len();
        b
    }

    pub(crate) fn next(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size.min(self.order.len()) {
            if self.pos == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            out.push(self.order[self.pos]);
            self.pos += 1;
        }
        out
    }
}

fn stack(samples: &[SegSample], idx: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let images: Vec<_> = idx.iter().map(|&i| image_to_tensor(&samples[i].image)).collect();
    let masks: Vec<_> = idx.iter().map(|&i| mask_to_tensor(&samples[i].mask)).collect();
    Ok((Tensor::stack_batch(&images)?, Tensor::stack_batch(&masks)?))
}

/// Adam on the mean per-pixel BCE. Appends one loss per iteration to the
/// model's history.
pub fn train_segnet(model: &mut SegModel, samples: &[SegSample], opts: &SegTrainOptions) -> Result<()> {
    defilter_nn::with_flush_to_zero(|| train_inner(model, samples, opts))
}

fn train_inner(model: &mut SegModel, samples: &[SegSample], opts: &SegTrainOptions) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::NoData("no segmentation training samples".into()));
    }
    let (h, w) = model.config.input_size;
    for s in samples {
        if (s.image.height(), s.image.width()) != (h, w) || s.mask.dimensions() != (w, h) {
            return Err(Error::Shape(format!("training sample is not {w}x{h}")));
        }
    }
    let mut adam = Adam::new(&model.store);
    let mut batches = Batches::new(samples.len(), opts.seed);
    for _ in 0..opts.iterations {
        let idx = batches.next(opts.batch_size.max(1));
        let (x, y) = stack(samples, &idx)?;
        let tape = Tape::new();
        let p = model.store.bind(&tape, true);
        let logits = model.forward(&p, tape.constant(x))?;
        let loss = logits.bce_with_logits(&y)?;
        let value = loss.value().item();
        let grads = tape.backward(loss)?;
        let g = p.gradients(&grads);
        drop(p);
        let lr = opts.schedule.lr_at(model.iteration) as f32;
        adam.step(&mut model.store, &g, lr)?;
        model.iteration += 1;
        model.loss_history.push(value);
        log::debug!("segnet iteration {} loss {value:.5}", model.iteration);
    }
    Ok(())
}

/// Mean IoU of the post-processed predictions against the samples' masks.
pub fn mean_iou(model: &SegModel, samples: &[SegSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::NoData("no samples".into()));
    }
    let mut total = 0.0;
    for s in samples {
        total += model.segment(&s.image)?.iou(&s.mask)?;
    }
    Ok(total / samples.len() as f64)
}
