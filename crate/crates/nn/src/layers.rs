use rand::Rng;

use crate::error::Result;
use crate::float::Float;
use crate::init::kaiming_uniform;
use crate::ops::conv::ConvOptions;
use crate::params::{Bound, ParamId, ParamStore};
use crate::tape::Var;
use crate::tensor::Tensor;

/// Square-kernel convolution with bias.
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub opts: ConvOptions,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Float>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        opts: ConvOptions,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let fan_in = in_channels * kernel * kernel;
        let weight = store.add(
            format!("{name}.weight"),
            kaiming_uniform(&[out_channels, in_channels, kernel, kernel], fan_in, rng),
        )?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]))?;
        Ok(Conv2d {
            weight,
            bias,
            opts,
            in_channels,
            out_channels,
        })
    }

    /// 1x1 convolution, i.e. a dense layer over channels.
    pub fn pointwise<T: Float>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::new(store, name, in_channels, out_channels, 1, ConvOptions::default(), rng)
    }

    pub fn forward<'t, T: Float>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.conv2d(p.get(self.weight), Some(p.get(self.bias)), self.opts)
    }
}

/// Transposed convolution with bias.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Float>(
        store: &mut ParamStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        // fan-in of the equivalent direct convolution
        let fan_in = in_channels * kernel * kernel / (stride * stride).max(1);
        let weight = store.add(
            format!("{name}.weight"),
            kaiming_uniform(&[in_channels, out_channels, kernel, kernel], fan_in, rng),
        )?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]))?;
        Ok(ConvTranspose2d {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward<'t, T: Float>(&self, p: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.conv_transpose2d(p.get(self.weight), Some(p.get(self.bias)), self.stride, self.padding)
    }
}
