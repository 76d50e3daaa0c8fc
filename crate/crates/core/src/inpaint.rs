//! Two-stage gated-convolution inpainting with a convolutional
//! least-squares discriminator and a fixed perceptual feature network.
//!
//! Images are `[N, 3, H, W]` tensors in `[0, 1]`; masks are `[N, 1, H, W]`
//! with 1 marking pixels to regenerate.

use std::path::Path;

use defilter_nn::layers::Conv2d;
use defilter_nn::{Adam, Axis, Bound, ConvOptions, Float, ParamStore, Tape, Tensor, Var};
use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::mask::OcclusionMask;
use crate::quality::gaussian_kernel;
use crate::schedule::OptimSchedule;
use crate::segmenter::{Batches, SegModel};
use crate::tensor::{image_to_tensor, mask_to_tensor, tensor_to_image};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Elu,
    LeakyRelu,
    Identity,
}

impl Activation {
    pub fn apply<'t, T: Float>(self, x: Var<'t, T>) -> Var<'t, T> {
        match self {
            Activation::Elu => x.elu(T::one()),
            Activation::LeakyRelu => x.leaky_relu(T::from_f64(0.2)),
            Activation::Identity => x,
        }
    }
}

/// `activation(conv_f(x)) ⊙ sigmoid(conv_g(x))`.
#[derive(Clone, Debug)]
pub struct GatedConv2d {
    pub feature: Conv2d,
    pub gate: Conv2d,
    pub activation: Activation,
}

impl GatedConv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Float>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        opts: ConvOptions,
        activation: Activation,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(GatedConv2d {
            feature: Conv2d::new(store, &format!("{name}.feature"), in_channels, out_channels, kernel, opts, rng)?,
            gate: Conv2d::new(store, &format!("{name}.gate"), in_channels, out_channels, kernel, opts, rng)?,
            activation,
        })
    }

    pub fn forward<'t, T: Float>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        let c = x.value().dims4()?.1;
        if c != self.feature.in_channels {
            return Err(Error::Shape(format!(
                "gated convolution expects {} channels, got {c}",
                self.feature.in_channels
            )));
        }
        let f = self.activation.apply(self.feature.forward(p, x)?);
        let g = self.gate.forward(p, x)?.sigmoid();
        Ok(f.mul(g)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvKind {
    Gated,
    DilatedGated,
    Normal,
}

/// One generator layer. `upsample` doubles the resolution before the
/// convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: ConvKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub upsample: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub base_channels: usize,
    /// Dilation rates of the bottleneck layers.
    pub dilations: Vec<usize>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            base_channels: 32,
            dilations: vec![2, 4, 8, 16],
        }
    }
}

pub const STAGE_INPUT_CHANNELS: usize = 4;

impl GeneratorConfig {
    /// Layer plan of one stage (coarse and refine share it): down to a
    /// quarter of the resolution, dilated gated bottleneck, back up, and a
    /// plain 3-channel output convolution.
    pub fn stage_layers(&self) -> Vec<LayerSpec> {
        let c = self.base_channels;
        let l = |kind, i, o, k, s, d, up| LayerSpec {
            kind,
            in_channels: i,
            out_channels: o,
            kernel: k,
            stride: s,
            dilation: d,
            upsample: up,
        };
        use ConvKind::*;
        let mut v = vec![
            l(Gated, STAGE_INPUT_CHANNELS, c, 5, 1, 1, false),
            l(Gated, c, 2 * c, 3, 2, 1, false),
            l(Gated, 2 * c, 2 * c, 3, 1, 1, false),
            l(Gated, 2 * c, 2 * c, 3, 2, 1, false),
        ];
        v.extend(self.dilations.iter().map(|&d| l(DilatedGated, 2 * c, 2 * c, 3, 1, d, false)));
        v.extend([
            l(Gated, 2 * c, 2 * c, 3, 1, 1, false),
            l(Gated, 2 * c, c, 3, 1, 1, true),
            l(Gated, c, c, 3, 1, 1, false),
            l(Gated, c, (c / 2).max(1), 3, 1, 1, true),
            l(Normal, (c / 2).max(1), 3, 3, 1, 1, false),
        ]);
        v
    }
}

#[derive(Clone, Debug)]
enum Layer {
    Gated(GatedConv2d),
    Plain(Conv2d),
}

#[derive(Clone, Debug)]
struct Stage {
    layers: Vec<(LayerSpec, Layer)>,
}

impl Stage {
    fn build(store: &mut ParamStore<f32>, name: &str, cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut layers = Vec::new();
        for (i, spec) in cfg.stage_layers().into_iter().enumerate() {
            let opts = ConvOptions {
                stride: spec.stride,
                padding: spec.dilation * (spec.kernel - 1) / 2,
                dilation: spec.dilation,
            };
            let lname = format!("{name}.{i}");
            let layer = match spec.kind {
                ConvKind::Normal => Layer::Plain(Conv2d::new(store, &lname, spec.in_channels, spec.out_channels, spec.kernel, opts, rng)?),
                _ => Layer::Gated(GatedConv2d::new(
                    store,
                    &lname,
                    spec.in_channels,
                    spec.out_channels,
                    spec.kernel,
                    opts,
                    Activation::Elu,
                    rng,
                )?),
            };
            layers.push((spec, layer));
        }
        Ok(Stage { layers })
    }

    /// Sigmoid image from `[masked image, mask]`.
    fn forward<'t>(&self, p: &Bound<'t, f32>, mut x: Var<'t, f32>) -> Result<Var<'t, f32>> {
        for (spec, layer) in &self.layers {
            if spec.upsample {
                x = x.upsample_nearest(2)?;
            }
            x = match layer {
                Layer::Gated(g) => g.forward(p, x)?,
                Layer::Plain(c) => c.forward(p, x)?,
            };
        }
        Ok(x.sigmoid())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub layers: usize,
    pub kernel: usize,
    pub stride: usize,
    pub base_channels: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            layers: 6,
            kernel: 5,
            stride: 2,
            base_channels: 64,
        }
    }
}

impl DiscriminatorConfig {
    fn widths(&self) -> Vec<usize> {
        (0..self.layers).map(|i| self.base_channels << i.min(2)).collect()
    }

    /// Spatial size of the critic map for an `h x w` input.
    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let pad = (self.kernel - 1) / 2;
        let step = |n: usize| (n + 2 * pad - self.kernel) / self.stride + 1;
        (0..self.layers).fold((h, w), |(h, w), _| (step(h), step(w)))
    }
}

/// Strided convolutions over `[composite, mask]`; every element of the
/// final map is its own least-squares critic.
#[derive(Clone, Debug)]
pub struct Discriminator {
    convs: Vec<Conv2d>,
}

impl Discriminator {
    pub fn build(store: &mut ParamStore<f32>, cfg: &DiscriminatorConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut convs = Vec::new();
        let mut in_ch = 4;
        for (i, out) in cfg.widths().into_iter().enumerate() {
            let opts = ConvOptions::strided(cfg.kernel, cfg.stride);
            convs.push(Conv2d::new(store, &format!("disc.{i}"), in_ch, out, cfg.kernel, opts, rng)?);
            in_ch = out;
        }
        Ok(Discriminator { convs })
    }

    pub fn forward<'t>(&self, p: &Bound<'t, f32>, image: Var<'t, f32>, mask: Var<'t, f32>) -> Result<Var<'t, f32>> {
        let mut x = Var::concat_channels(&[image, mask])?;
        let last = self.convs.len() - 1;
        for (i, conv) in self.convs.iter().enumerate() {
            x = conv.forward(p, x)?;
            if i < last {
                x = x.leaky_relu(0.2);
            }
        }
        Ok(x)
    }
}

pub const PERCEPTUAL_TAPS: usize = 3;

/// Fixed feature extractor: three 3x3 convolution + leaky-ReLU stages with
/// 2x2 max-pooling between them, tapped after each activation. The weights
/// are a deterministic random draw and are never trained.
#[derive(Clone)]
pub struct PerceptualNet {
    store: ParamStore<f32>,
    convs: Vec<Conv2d>,
}

impl PerceptualNet {
    pub fn fallback(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut convs = Vec::new();
        let mut in_ch = 3;
        for (i, out) in [8, 16, 32].into_iter().enumerate() {
            convs.push(
                Conv2d::new(&mut store, &format!("perc.{i}"), in_ch, out, 3, ConvOptions::same(3, 1), &mut rng)
                    .expect("fresh store"),
            );
            in_ch = out;
        }
        PerceptualNet { store, convs }
    }

    pub fn bind<'t>(&self, tape: &'t Tape<f32>) -> Bound<'t, f32> {
        self.store.bind(tape, false)
    }

    pub fn features<'t>(&self, p: &Bound<'t, f32>, x: Var<'t, f32>) -> Result<Vec<Var<'t, f32>>> {
        let mut taps = Vec::with_capacity(PERCEPTUAL_TAPS);
        let mut x = x;
        for (i, conv) in self.convs.iter().enumerate() {
            if i > 0 {
                x = x.max_pool2d(2)?;
            }
            x = conv.forward(p, x)?.leaky_relu(0.2);
            taps.push(x);
        }
        Ok(taps)
    }
}

/// Mean smooth-L1 of `output - target`.
pub fn huber_loss<'t, T: Float>(output: Var<'t, T>, target: Var<'t, T>) -> Result<Var<'t, T>> {
    Ok(output.sub(target)?.smooth_l1().mean_all())
}

/// Gaussian window for the differentiable SSIM term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsimWindow {
    pub size: usize,
    pub sigma: f64,
}

impl Default for SsimWindow {
    fn default() -> Self {
        SsimWindow { size: 11, sigma: 1.5 }
    }
}

/// `1 - mean SSIM` per channel on `[0, 1]` data (`C1 = 0.01²`,
/// `C2 = 0.03²`), over fully contained windows.
pub fn ssim_loss<'t, T: Float>(output: Var<'t, T>, target: Var<'t, T>, window: SsimWindow) -> Result<Var<'t, T>> {
    let k: Vec<T> = gaussian_kernel(window.size, window.sigma).into_iter().map(T::from_f64).collect();
    let blur = |v: Var<'t, T>| -> Result<Var<'t, T>> { Ok(v.filter_1d(&k, Axis::Rows)?.filter_1d(&k, Axis::Cols)?) };
    let (c1, c2) = (T::from_f64(1e-4), T::from_f64(9e-4));
    let two = T::from_f64(2.0);
    let mu_a = blur(output)?;
    let mu_b = blur(target)?;
    let mu_aa = mu_a.sqr();
    let mu_bb = mu_b.sqr();
    let mu_ab = mu_a.mul(mu_b)?;
    let var_a = blur(output.sqr())?.sub(mu_aa)?;
    let var_b = blur(target.sqr())?.sub(mu_bb)?;
    let cov = blur(output.mul(target)?)?.sub(mu_ab)?;
    let num = mu_ab.mul_scalar(two).add_scalar(c1).mul(cov.mul_scalar(two).add_scalar(c2))?;
    let den = mu_aa.add(mu_bb)?.add_scalar(c1).mul(var_a.add(var_b)?.add_scalar(c2))?;
    Ok(num.div(den)?.mean_all().neg().add_scalar(T::one()))
}

/// `L_rc = L_H + L_SSIM`.
pub fn reconstruction_loss<'t, T: Float>(output: Var<'t, T>, target: Var<'t, T>, window: SsimWindow) -> Result<Var<'t, T>> {
    Ok(huber_loss(output, target)?.add(ssim_loss(output, target, window)?)?)
}

/// Mean over taps of the mean squared feature difference.
pub fn perceptual_loss<'t, T: Float>(pairs: &[(Var<'t, T>, Var<'t, T>)]) -> Result<Var<'t, T>> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no perceptual feature maps".into()));
    }
    let mut total: Option<Var<'t, T>> = None;
    for &(a, b) in pairs {
        let d = a.sub(b)?.sqr().mean_all();
        total = Some(match total {
            Some(t) => t.add(d)?,
            None => d,
        });
    }
    Ok(total.expect("non-empty").mul_scalar(T::from_f64(1.0 / pairs.len() as f64)))
}

/// `0.5 · (MSE(fake, 0) + MSE(real, 1))`.
pub fn discriminator_loss<'t, T: Float>(real: Var<'t, T>, fake: Var<'t, T>) -> Result<Var<'t, T>> {
    if real.shape() != fake.shape() {
        return Err(Error::Shape(format!("critic maps {:?} and {:?}", real.shape(), fake.shape())));
    }
    Ok(fake
        .mse_to_value(T::zero())
        .add(real.mse_to_value(T::one()))?
        .mul_scalar(T::half()))
}

/// `MSE(D(composite), 1)`.
pub fn adversarial_loss<'t, T: Float>(fake: Var<'t, T>) -> Var<'t, T> {
    fake.mse_to_value(T::one())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub rc_coarse: f64,
    pub rc_refined: f64,
    pub perceptual: f64,
    pub adversarial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            rc_coarse: 30.0,
            rc_refined: 70.0,
            perceptual: 50.0,
            adversarial: 0.7,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.rc_coarse, self.rc_refined, self.perceptual, self.adversarial];
        if all.iter().all(|&w| w > 0.0 && w.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config(format!("loss weights must be positive: {self:?}")))
        }
    }

    /// The weighted sum of already computed components.
    pub fn total(&self, c: &LossComponents) -> f64 {
        self.rc_coarse * c.rc_coarse + self.rc_refined * c.rc_refined + self.perceptual * c.perceptual + self.adversarial * c.adversarial
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub rc_coarse: f64,
    pub rc_refined: f64,
    pub perceptual: f64,
    pub adversarial: f64,
    pub total: f64,
}

/// Weighted generator objective. `perceptual` pairs the feature maps of the
/// refined output with those of the target.
pub fn generator_loss<'t, T: Float>(
    coarse: Var<'t, T>,
    refined: Var<'t, T>,
    target: Var<'t, T>,
    disc_out: Var<'t, T>,
    perceptual: &[(Var<'t, T>, Var<'t, T>)],
    weights: &LossWeights,
    window: SsimWindow,
) -> Result<(Var<'t, T>, LossComponents)> {
    let rc_c = reconstruction_loss(coarse, target, window)?;
    let rc_r = reconstruction_loss(refined, target, window)?;
    let perc = perceptual_loss(perceptual)?;
    let adv = adversarial_loss(disc_out);
    let w = |x: f64| T::from_f64(x);
    let total = rc_c
        .mul_scalar(w(weights.rc_coarse))
        .add(rc_r.mul_scalar(w(weights.rc_refined)))?
        .add(perc.mul_scalar(w(weights.perceptual)))?
        .add(adv.mul_scalar(w(weights.adversarial)))?;
    let item = |v: Var<'t, T>| v.value().item().as_f64();
    let parts = LossComponents {
        rc_coarse: item(rc_c),
        rc_refined: item(rc_r),
        perceptual: item(perc),
        adversarial: item(adv),
        total: item(total),
    };
    Ok((total, parts))
}

/// `mask · generated + (1 - mask) · input` on tensors.
pub fn composite_var<'t>(generated: Var<'t, f32>, input: Var<'t, f32>, mask: Var<'t, f32>) -> Result<Var<'t, f32>> {
    let keep = mask.neg().add_scalar(1.0);
    Ok(generated.mul(mask)?.add(input.mul(keep)?)?)
}

/// Pixels under the mask come from `generated`, all others are copied from
/// `input` unchanged.
pub fn composite(generated: &RgbImage, input: &RgbImage, mask: &OcclusionMask) -> Result<RgbImage> {
    if generated.dimensions() != input.dimensions() || mask.dimensions() != input.dimensions() {
        return Err(Error::Shape(format!(
            "composite of {:?}, {:?} and mask {:?}",
            generated.dimensions(),
            input.dimensions(),
            mask.dimensions()
        )));
    }
    Ok(RgbImage::from_fn(input.width(), input.height(), |x, y| {
        if mask.get(x, y) {
            *generated.get_pixel(x, y)
        } else {
            *input.get_pixel(x, y)
        }
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    /// `(height, width)`.
    pub input_size: (u32, u32),
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub perceptual_seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            input_size: (512, 512),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            perceptual_seed: 7,
        }
    }
}

impl GanConfig {
    pub fn desk() -> Self {
        GanConfig {
            input_size: (64, 64),
            generator: GeneratorConfig {
                base_channels: 16,
                ..GeneratorConfig::default()
            },
            discriminator: DiscriminatorConfig {
                base_channels: 16,
                ..DiscriminatorConfig::default()
            },
            perceptual_seed: 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % 4 != 0 || w % 4 != 0 {
            return Err(Error::Config(format!("inpainter input {h}x{w} must be a multiple of 4")));
        }
        if self.generator.base_channels == 0 || self.discriminator.base_channels == 0 {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        let d = &self.discriminator;
        if d.layers == 0 || d.kernel % 2 == 0 || d.stride == 0 {
            return Err(Error::Config(format!("discriminator {d:?}")));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GanLossRecord {
    pub discriminator: f64,
    pub generator: LossComponents,
}

/// Generator, discriminator and perceptual network with their parameters
/// and training state.
#[derive(Clone)]
pub struct Inpainter {
    config: GanConfig,
    gen_store: ParamStore<f32>,
    disc_store: ParamStore<f32>,
    coarse: Stage,
    refine: Stage,
    disc: Discriminator,
    perceptual: PerceptualNet,
    optim: Option<(Adam<f32>, Adam<f32>)>,
    pub iteration: u64,
    pub lr: f64,
    pub loss_history: Vec<GanLossRecord>,
}

#[derive(Serialize, Deserialize)]
struct GanMeta {
    config: GanConfig,
    config_hash: String,
    iteration: u64,
    lr: f64,
    loss_history: Vec<GanLossRecord>,
}

const GAN_KIND: &str = "inpainter";

impl Inpainter {
    pub fn build(config: GanConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gen_store = ParamStore::new();
        let coarse = Stage::build(&mut gen_store, "coarse", &config.generator, &mut rng)?;
        let refine = Stage::build(&mut gen_store, "refine", &config.generator, &mut rng)?;
        let mut disc_store = ParamStore::new();
        let disc = Discriminator::build(&mut disc_store, &config.discriminator, &mut rng)?;
        let perceptual = PerceptualNet::fallback(config.perceptual_seed);
        Ok(Inpainter {
            config,
            gen_store,
            disc_store,
            coarse,
            refine,
            disc,
            perceptual,
            optim: None,
            iteration: 0,
            lr: 0.0,
            loss_history: Vec::new(),
        })
    }

    pub fn config(&self) -> &GanConfig {
        &self.config
    }

    pub fn generator_params(&self) -> &ParamStore<f32> {
        &self.gen_store
    }

    pub fn discriminator_params(&self) -> &ParamStore<f32> {
        &self.disc_store
    }

    fn check_input(&self, x: &Tensor<f32>, mask: &Tensor<f32>) -> Result<()> {
        let (n, c, h, w) = x.dims4()?;
        let (eh, ew) = self.config.input_size;
        if c != 3 || (h as u32, w as u32) != (eh, ew) || mask.shape() != [n, 1, h, w] {
            return Err(Error::Shape(format!(
                "inpainter expects 3x{eh}x{ew} images with matching masks, got {:?} and {:?}",
                x.shape(),
                mask.shape()
            )));
        }
        Ok(())
    }

    /// Coarse and refined outputs for `[N, 3, H, W]` images and their masks.
    /// The coarse stage sees the filtered pixels themselves, so content
    /// showing through translucent overlays is available to it.
    pub fn generate_vars<'t>(
        &self,
        p: &Bound<'t, f32>,
        image: Var<'t, f32>,
        mask: Var<'t, f32>,
    ) -> Result<(Var<'t, f32>, Var<'t, f32>)> {
        let coarse = self.coarse.forward(p, Var::concat_channels(&[image, mask])?)?;
        let rough = composite_var(coarse, image, mask)?;
        let refined = self.refine.forward(p, Var::concat_channels(&[rough, mask])?)?;
        Ok((coarse, refined))
    }

    /// Raw coarse and refined images (not yet composited).
    pub fn generate(&self, image: &RgbImage, mask: &OcclusionMask) -> Result<(RgbImage, RgbImage)> {
        let (x, m) = (image_to_tensor(image), mask_to_tensor(mask));
        self.check_input(&x, &m)?;
        let tape = Tape::new();
        let p = self.gen_store.bind(&tape, false);
        let (c, r) = self.generate_vars(&p, tape.constant(x), tape.constant(m))?;
        Ok((tensor_to_image(&c.value(), 0)?, tensor_to_image(&r.value(), 0)?))
    }

    /// The refined output composited into `image` under `mask`.
    pub fn inpaint(&self, image: &RgbImage, mask: &OcclusionMask) -> Result<RgbImage> {
        if mask.count() == 0 {
            return Ok(image.clone());
        }
        let (_, refined) = self.generate(image, mask)?;
        composite(&refined, image, mask)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = GanMeta {
            config: self.config.clone(),
            config_hash: self.config.hash(),
            iteration: self.iteration,
            lr: self.lr,
            loss_history: self.loss_history.clone(),
        };
        checkpoint::save(path, GAN_KIND, &meta, &[("generator", &self.gen_store), ("discriminator", &self.disc_store)])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut loaded = checkpoint::load::<GanMeta>(path, GAN_KIND)?;
        let meta = &loaded.meta;
        if meta.config.hash() != meta.config_hash {
            return Err(Error::Checkpoint(format!("{}: configuration hash mismatch", path.display())));
        }
        let mut model = Self::build(meta.config.clone(), 0)?;
        let gen = loaded.take("generator")?;
        let disc = loaded.take("discriminator")?;
        let full = |dst: &mut ParamStore<f32>, src: &ParamStore<f32>| -> Result<()> {
            if src.len() != dst.len() || dst.load_matching(src)? != dst.len() {
                return Err(Error::Checkpoint(format!("{}: parameters do not match the configuration", path.display())));
            }
            Ok(())
        };
        full(&mut model.gen_store, &gen)?;
        full(&mut model.disc_store, &disc)?;
        model.iteration = loaded.meta.iteration;
        model.lr = loaded.meta.lr;
        model.loss_history = loaded.meta.loss_history;
        Ok(model)
    }
}

/// Segment, inpaint under the predicted mask and composite. Returns the
/// reconstruction and the mask that was used.
pub fn remove_filter(seg: &SegModel, gan: &Inpainter, image: &RgbImage) -> Result<(RgbImage, OcclusionMask)> {
    let mask = seg.segment(image)?;
    Ok((gan.inpaint(image, &mask)?, mask))
}

/// Occluded input, its occlusion mask and the clean image.
#[derive(Clone, Debug)]
pub struct GanSample {
    pub input: RgbImage,
    pub mask: OcclusionMask,
    pub truth: RgbImage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanTrainOptions {
    pub iterations: u64,
    pub batch_size: usize,
    pub schedule: OptimSchedule,
    pub weights: LossWeights,
    pub ssim_window: SsimWindow,
    pub seed: u64,
}

impl Default for GanTrainOptions {
    fn default() -> Self {
        GanTrainOptions {
            iterations: 1000,
            batch_size: 4,
            schedule: OptimSchedule::default(),
            weights: LossWeights::default(),
            ssim_window: SsimWindow::default(),
            seed: 0,
        }
    }
}

fn stack_gan(samples: &[GanSample], idx: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>, Tensor<f32>)> {
    let pick = |f: &dyn Fn(&GanSample) -> Tensor<f32>| -> Result<Tensor<f32>> {
        Ok(Tensor::stack_batch(&idx.iter().map(|&i| f(&samples[i])).collect::<Vec<_>>())?)
    };
    Ok((
        pick(&|s| image_to_tensor(&s.input))?,
        pick(&|s| mask_to_tensor(&s.mask))?,
        pick(&|s| image_to_tensor(&s.truth))?,
    ))
}

/// Alternating updates: each iteration one discriminator step on the
/// detached composite, then one generator step against the updated
/// discriminator. The perceptual network stays frozen.
pub fn train_gan(model: &mut Inpainter, samples: &[GanSample], opts: &GanTrainOptions) -> Result<()> {
    defilter_nn::with_flush_to_zero(|| train_gan_inner(model, samples, opts))
}

fn train_gan_inner(model: &mut Inpainter, samples: &[GanSample], opts: &GanTrainOptions) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::NoData("no inpainting training samples".into()));
    }
    opts.weights.validate()?;
    let (h, w) = model.config.input_size;
    for s in samples {
        if s.input.dimensions() != (w, h) || s.truth.dimensions() != (w, h) || s.mask.dimensions() != (w, h) {
            return Err(Error::Shape(format!("training sample is not {w}x{h}")));
        }
    }
    let (mut g_opt, mut d_opt) = model
        .optim
        .take()
        .unwrap_or_else(|| (Adam::new(&model.gen_store), Adam::new(&model.disc_store)));
    let mut batches = Batches::new(samples.len(), opts.seed ^ model.iteration);
    for _ in 0..opts.iterations {
        let idx = batches.next(opts.batch_size.max(1));
        let (x, m, y) = stack_gan(samples, &idx)?;
        let lr = opts.schedule.lr_at(model.iteration);

        let tape = Tape::new();
        let gp = model.gen_store.bind(&tape, true);
        let (image, mask, truth) = (tape.constant(x), tape.constant(m), tape.constant(y));
        let (coarse, refined) = model.generate_vars(&gp, image, mask)?;
        let fake = composite_var(refined, image, mask)?;

        let d_value = {
            let dtape = Tape::new();
            let dp = model.disc_store.bind(&dtape, true);
            let dm = dtape.constant((*mask.value()).clone());
            let real_out = model.disc.forward(&dp, dtape.constant((*truth.value()).clone()), dm)?;
            let fake_out = model.disc.forward(&dp, dtape.constant((*fake.value()).clone()), dm)?;
            let loss = discriminator_loss(real_out, fake_out)?;
            let value = loss.value().item() as f64;
            let grads = dtape.backward(loss)?;
            let g = dp.gradients(&grads);
            drop(dp);
            d_opt.step(&mut model.disc_store, &g, lr as f32)?;
            value
        };

        let dp = model.disc_store.bind(&tape, false);
        let disc_out = model.disc.forward(&dp, fake, mask)?;
        let pp = model.perceptual.bind(&tape);
        let f_out = model.perceptual.features(&pp, refined)?;
        let f_truth = model.perceptual.features(&pp, truth)?;
        let pairs: Vec<_> = f_out.into_iter().zip(f_truth).collect();
        let (loss, parts) = generator_loss(coarse, refined, truth, disc_out, &pairs, &opts.weights, opts.ssim_window)?;
        let grads = tape.backward(loss)?;
        let g = gp.gradients(&grads);
        drop((gp, dp, pp));
        g_opt.step(&mut model.gen_store, &g, lr as f32)?;

        model.iteration += 1;
        model.lr = lr;
        model.loss_history.push(GanLossRecord {
            discriminator: d_value,
            generator: parts,
        });
        log::debug!("gan iteration {} d {d_value:.4} g {:.4}", model.iteration, parts.total);
    }
    model.optim = Some((g_opt, d_opt));
    Ok(())
}
