//! Face records: an RGB raster with its 68 landmarks and identity labels.

use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FacePolygon, Point2};
use crate::io;

pub const LANDMARK_COUNT: usize = 68;

/// Standard luma of one RGB pixel, rounded half up, computed exactly in
/// integers: `round(0.299 R + 0.587 G + 0.114 B)`.
#[inline]
pub fn luma(rgb: [u8; 3]) -> u8 {
    let [r, g, b] = rgb.map(u32::from);
    ((299 * r + 587 * g + 114 * b + 500) / 1000) as u8
}

/// Grey-level raster of `image`, row-major.
pub fn luma_plane(image: &RgbImage) -> Vec<u8> {
    image.pixels().map(|p| luma(p.0)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FaceRecord {
    image: RgbImage,
    landmarks: Vec<Point2>,
    pub identity: String,
    pub source_id: String,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    identity: String,
    source_id: String,
    landmarks: Vec<Point2>,
}

impl FaceRecord {
    /// Checks the landmark count and that every landmark lies inside the
    /// image, i.e. within `[0, w-1] x [0, h-1]`.
    pub fn new(
        image: RgbImage,
        landmarks: Vec<Point2>,
        identity: impl Into<String>,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        if landmarks.len() != LANDMARK_COUNT {
            return Err(Error::InvalidRecord(format!(
                "expected {LANDMARK_COUNT} landmarks, got {}",
                landmarks.len()
            )));
        }
        let (w, h) = (image.width() as f64, image.height() as f64);
        if let Some((i, p)) = landmarks.iter().enumerate().find(|(_, p)| {
            !(p.x.is_finite() && p.y.is_finite())
                || p.x < 0.0
                || p.y < 0.0
                || p.x > w - 1.0
                || p.y > h - 1.0
        }) {
            return Err(Error::InvalidRecord(format!(
                "landmark {i} at ({}, {}) outside {w}x{h} image",
                p.x, p.y
            )));
        }
        Ok(FaceRecord {
            image,
            landmarks,
            identity: identity.into(),
            source_id: source_id.into(),
        })
    }

    pub fn image(&self) -> &RgbImage {
        &self.image
    }

    pub fn landmarks(&self) -> &[Point2] {
        &self.landmarks
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    /// Same labels and landmarks over a different raster of equal size.
    pub fn with_image(&self, image: RgbImage) -> Result<Self> {
        if image.dimensions() != self.image.dimensions() {
            return Err(Error::Shape(format!(
                "replacement image {:?} differs from {:?}",
                image.dimensions(),
                self.image.dimensions()
            )));
        }
        Ok(FaceRecord {
            image,
            ..self.clone()
        })
    }

    /// Convex hull of the landmarks.
    pub fn facial_polygon(&self) -> Result<FacePolygon> {
        FacePolygon::hull_of(&self.landmarks)
    }

    /// Mirror image about the vertical axis. Landmark order is kept, so
    /// index semantics (left eye, right eye) swap sides.
    pub fn flipped_horizontally(&self) -> FaceRecord {
        let w = self.image.width() as f64;
        FaceRecord {
            image: image::imageops::flip_horizontal(&self.image),
            landmarks: self
                .landmarks
                .iter()
                .map(|p| Point2::new(w - 1.0 - p.x, p.y))
                .collect(),
            identity: self.identity.clone(),
            source_id: self.source_id.clone(),
        }
    }

    /// Writes `<stem>.png` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        io::save_rgb(&self.image, &dir.join(format!("{stem}.png")))?;
        let sidecar = Sidecar {
            identity: self.identity.clone(),
            source_id: self.source_id.clone(),
            landmarks: self.landmarks.clone(),
        };
        io::write_json(&dir.join(format!("{stem}.json")), &sidecar)
    }

    /// Reads a record saved by [`FaceRecord::save`] given the PNG path.
    pub fn load(png: &Path) -> Result<Self> {
        let image = io::load_rgb(png)?;
        let sidecar: Sidecar = io::read_json(&png.with_extension("json"))?;
        FaceRecord::new(image, sidecar.landmarks, sidecar.identity, sidecar.source_id)
    }
}
