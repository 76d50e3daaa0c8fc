//! Selfie-filter removal for face recognition experiments: synthetic faces,
//! sticker compositing, occlusion augmentation, segmentation, inpainting,
//! quality metrics and verification metrics.
//!
//! The guide in `book/` walks through each part.

pub mod augment;
pub mod biometric;
pub mod checkpoint;
pub mod compositor;
pub mod draw;
pub mod error;
pub mod face;
pub mod geometry;
pub mod inpaint;
pub mod io;
pub mod mask;
pub mod pipeline;
pub mod quality;
pub mod schedule;
pub mod segmenter;
pub mod stickers;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/faces-and-filters.md")]
    mod faces_and_filters {}
    #[doc = include_str!("../../../book/src/augmentation.md")]
    mod augmentation {}
    #[doc = include_str!("../../../book/src/segmentation.md")]
    mod segmentation {}
    #[doc = include_str!("../../../book/src/inpainting.md")]
    mod inpainting {}
    #[doc = include_str!("../../../book/src/quality.md")]
    mod quality {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/pipeline.md")]
    mod pipeline {}
}
