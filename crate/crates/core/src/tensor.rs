//! Conversions between rasters and `[N, C, H, W]` tensors in `[0, 1]`.

use defilter_nn::Tensor;
use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::mask::OcclusionMask;

/// `[1, 3, H, W]` with channel values divided by 255.
pub fn image_to_tensor(img: &RgbImage) -> Tensor<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let plane = w * h;
    let mut data = vec![0.0f32; 3 * plane];
    for (i, p) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * plane + i] = p.0[c] as f32 / 255.0;
        }
    }
    Tensor::new(&[1, 3, h, w], data).expect("sized from the image")
}

/// `[1, 1, H, W]` holding 0 or 1.
pub fn mask_to_tensor(mask: &OcclusionMask) -> Tensor<f32> {
    let (w, h) = mask.dimensions();
    Tensor::new(
        &[1, 1, h as usize, w as usize],
        mask.data().iter().map(|&v| v as f32).collect(),
    )
    .expect("sized from the mask")
}

/// Image `n` of a `[N, 3, H, W]` tensor, clamped and rounded to 8 bits.
pub fn tensor_to_image(t: &Tensor<f32>, n: usize) -> Result<RgbImage> {
    let (batch, c, h, w) = t.dims4()?;
    if c != 3 || n >= batch {
        return Err(Error::Shape(format!("image {n} of tensor {:?}", t.shape())));
    }
    let plane = h * w;
    let base = n * 3 * plane;
    let d = t.data();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        let ch = |k: usize| (d[base + k * plane + i].clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([ch(0), ch(1), ch(2)])
    }))
}

/// Plane `n` of a `[N, 1, H, W]` tensor.
pub fn tensor_plane(t: &Tensor<f32>, n: usize) -> Result<&[f32]> {
    let (batch, c, h, w) = t.dims4()?;
    if c != 1 || n >= batch {
        return Err(Error::Shape(format!("plane {n} of tensor {:?}", t.shape())));
    }
    Ok(&t.data()[n * h * w..(n + 1) * h * w])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_round_trip_is_exact() {
        let img = RgbImage::from_fn(5, 3, |x, y| Rgb([(x * 50) as u8, (y * 90) as u8, 7]));
        let t = image_to_tensor(&img);
        assert_eq!(t.shape(), &[1, 3, 3, 5]);
        assert_eq!(tensor_to_image(&t, 0).unwrap(), img);
        assert!(tensor_to_image(&t, 1).is_err());
    }

    #[test]
    fn mask_tensor_values() {
        let m = OcclusionMask::from_fn(3, 2, |x, y| x == y);
        let t = mask_to_tensor(&m);
        assert_eq!(tensor_plane(&t, 0).unwrap(), &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
    }
}
