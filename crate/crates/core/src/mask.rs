//! Binary occlusion masks and 3x3 morphology.

use image::{GrayImage, Luma};

use crate::error::{Error, Result};

/// Per-pixel binary map, row-major, every element 0 or 1.
#[derive(Clone, Debug, PartialEq)]
pub struct OcclusionMask {
    width: u32,
    height: u32,
    data: Vec<u8>,
    /// Binarisation threshold for predicted masks; `None` for ground truth.
    pub threshold_used: Option<f32>,
}

impl OcclusionMask {
    pub fn empty(width: u32, height: u32) -> Self {
        OcclusionMask {
            width,
            height,
            data: vec![0; (width * height) as usize],
            threshold_used: None,
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut m = Self::empty(width, height);
        for y in 0..height {
            for x in 0..width {
                m.data[(y * width + x) as usize] = f(x, y) as u8;
            }
        }
        m
    }

    pub fn from_bits(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != (width * height) as usize {
            return Err(Error::Shape(format!(
                "{} mask elements for {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("mask elements must be 0 or 1".into()));
        }
        Ok(OcclusionMask {
            width,
            height,
            data,
            threshold_used: None,
        })
    }

    /// Non-zero pixels of a grey image are set.
    pub fn from_gray(img: &GrayImage) -> Self {
        OcclusionMask {
            width: img.width(),
            height: img.height(),
            data: img.pixels().map(|p| (p.0[0] > 0) as u8).collect(),
            threshold_used: None,
        }
    }

    /// Pixels where `probs >= threshold`.
    pub fn threshold(width: u32, height: u32, probs: &[f32], threshold: f32) -> Result<Self> {
        if probs.len() != (width * height) as usize {
            return Err(Error::Shape(format!(
                "{} probabilities for {width}x{height}",
                probs.len()
            )));
        }
        Ok(OcclusionMask {
            width,
            height,
            data: probs.iter().map(|&p| (p >= threshold) as u8).collect(),
            threshold_used: Some(threshold),
        })
    }

    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| Luma([self.get(x, y) as u8 * 255]))
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[(y * self.width + x) as usize] != 0
    }

    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.data[(y * self.width + x) as usize] = v as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Fraction of set pixels.
    pub fn density(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.data.len() as f64
        }
    }

    fn neighbourhood(&self, erode: bool) -> Self {
        let (w, h) = (self.width as i64, self.height as i64);
        let mut out = Self::empty(self.width, self.height);
        out.threshold_used = self.threshold_used;
        for y in 0..h {
            for x in 0..w {
                let mut acc = erode;
                'win: for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            continue;
                        }
                        let v = self.data[(ny * w + nx) as usize] != 0;
                        if erode && !v {
                            acc = false;
                            break 'win;
                        }
                        if !erode && v {
                            acc = true;
                            break 'win;
                        }
                    }
                }
                out.data[(y * w + x) as usize] = acc as u8;
            }
        }
        out
    }

    /// 3x3 square erosion; neighbours outside the image are ignored.
    pub fn erode(&self) -> Self {
        self.neighbourhood(true)
    }

    /// 3x3 square dilation; neighbours outside the image are ignored.
    pub fn dilate(&self) -> Self {
        self.neighbourhood(false)
    }

    /// One erosion followed by one dilation.
    pub fn open(&self) -> Self {
        self.erode().dilate()
    }

    pub fn is_subset_of(&self, other: &OcclusionMask) -> bool {
        self.data.iter().zip(&other.data).all(|(&a, &b)| a <= b)
    }

    /// Intersection over union; two empty masks score 1.
    pub fn iou(&self, other: &OcclusionMask) -> Result<f64> {
        if self.dimensions() != other.dimensions() {
            return Err(Error::Shape(format!(
                "masks {:?} and {:?}",
                self.dimensions(),
                other.dimensions()
            )));
        }
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.data.iter().zip(&other.data) {
            inter += (a & b) as usize;
            union += (a | b) as usize;
        }
        Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Morphology straight from the definition: min/max over the in-bounds
    /// 3x3 window.
    fn oracle(m: &OcclusionMask, erode: bool) -> OcclusionMask {
        let (w, h) = (m.width() as i64, m.height() as i64);
        OcclusionMask::from_fn(m.width(), m.height(), |x, y| {
            let mut vals = Vec::new();
            for ny in (y as i64 - 1)..=(y as i64 + 1) {
                for nx in (x as i64 - 1)..=(x as i64 + 1) {
                    if (0..w).contains(&nx) && (0..h).contains(&ny) {
                        vals.push(m.get(nx as u32, ny as u32));
                    }
                }
            }
            if erode {
                vals.iter().all(|&v| v)
            } else {
                vals.iter().any(|&v| v)
            }
        })
    }

    #[test]
    fn isolated_pixel_is_removed() {
        let m = OcclusionMask::from_fn(9, 9, |x, y| x == 4 && y == 4);
        assert_eq!(m.open().count(), 0);
    }

    #[test]
    fn solid_block_survives_opening() {
        let m = OcclusionMask::from_fn(20, 20, |x, y| (5..15).contains(&x) && (5..15).contains(&y));
        let opened = m.open();
        assert_eq!(opened, oracle(&oracle(&m, true), false));
        assert_eq!(m.erode().count(), 64);
        // square elements reproduce a square block exactly
        assert_eq!(opened, m);
    }

    #[test]
    fn zero_probabilities_give_an_empty_mask() {
        let m = OcclusionMask::threshold(4, 3, &[0.0; 12], 0.5).unwrap();
        assert_eq!(m.count(), 0);
        assert_eq!(m.threshold_used.unwrap(), 0.5);
    }

    #[test]
    fn iou_basics() {
        let a = OcclusionMask::from_fn(4, 4, |x, _| x < 2);
        let b = OcclusionMask::from_fn(4, 4, |x, _| x < 1);
        assert_eq!(a.iou(&a).unwrap(), 1.0);
        assert_eq!(a.iou(&b).unwrap(), 0.5);
        assert_eq!(OcclusionMask::empty(2, 2).iou(&OcclusionMask::empty(2, 2)).unwrap(), 1.0);
        assert!(a.iou(&OcclusionMask::empty(3, 4)).is_err());
    }

    proptest! {
        #[test]
        fn morphology_matches_oracle_and_is_ordered(
            bits in proptest::collection::vec(0u8..2, 7 * 6)
        ) {
            let m = OcclusionMask::from_bits(7, 6, bits).unwrap();
            let e = m.erode();
            prop_assert_eq!(&e, &oracle(&m, true));
            prop_assert_eq!(m.dilate(), oracle(&m, false));
            prop_assert!(e.is_subset_of(&m));
            prop_assert!(e.is_subset_of(&e.dilate()));
            prop_assert!(m.open().is_subset_of(&m));
            prop_assert!(m.open().data().iter().all(|&v| v <= 1));
        }
    }
}
