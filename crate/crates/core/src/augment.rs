//! Semi-synthetic occlusions: random shapes dropped into a grid partition of
//! the facial polygon.

use image::RgbImage;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compositor::blend_channel;
use crate::draw;
use crate::error::{Error, Result};
use crate::face::FaceRecord;
use crate::geometry::{FacePolygon, Point2};
use crate::mask::OcclusionMask;

/// One cell of the partition: the interior pixels that fall in it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subregion {
    pub index: usize,
    pub pixels: Vec<(i64, i64)>,
}

impl Subregion {
    /// Inclusive pixel bounding box `(x0, y0, x1, y1)`, `None` when empty.
    pub fn bounds(&self) -> Option<(i64, i64, i64, i64)> {
        let first = self.pixels.first()?;
        Some(self.pixels.iter().fold(
            (first.0, first.1, first.0, first.1),
            |(x0, y0, x1, y1), &(x, y)| (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
        ))
    }
}

/// Rows and columns of the most nearly square `r x c = n` grid, `r <= c`.
pub fn grid_shape(n: usize) -> (usize, usize) {
    let mut r = (n as f64).sqrt().floor() as usize;
    while r > 1 && n % r != 0 {
        r -= 1;
    }
    let r = r.max(1);
    (r, n / r)
}

/// Splits the polygon interior into `n` pixel-disjoint cells of a regular
/// grid laid over the interior's bounding box. Cells the polygon does not
/// reach come back empty, so the union is always exactly the interior.
pub fn subdivide(polygon: &FacePolygon, n: usize) -> Result<Vec<Subregion>> {
    if n == 0 {
        return Err(Error::InvalidSubdivision("need at least one subregion".into()));
    }
    if n > polygon.pixel_count() {
        return Err(Error::InvalidSubdivision(format!(
            "{n} subregions for {} interior pixels",
            polygon.pixel_count()
        )));
    }
    let pixels = polygon.interior_pixels();
    let (x0, y0, x1, y1) = pixels.iter().fold(
        (i64::MAX, i64::MAX, i64::MIN, i64::MIN),
        |(a, b, c, d), &(x, y)| (a.min(x), b.min(y), c.max(x), d.max(y)),
    );
    let (rows, cols) = grid_shape(n);
    let (bw, bh) = ((x1 - x0 + 1) as usize, (y1 - y0 + 1) as usize);
    let mut cells: Vec<Subregion> = (0..n)
        .map(|index| Subregion {
            index,
            pixels: Vec::new(),
        })
        .collect();
    for (x, y) in pixels {
        let col = (x - x0) as usize * cols / bw;
        let row = (y - y0) as usize * rows / bh;
        cells[row * cols + col].pixels.push((x, y));
    }
    Ok(cells)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Rectangle,
    Ellipse,
    Polygon,
}

/// One drawn shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub color: [u8; 3],
    pub alpha: u8,
    pub subregion_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentOptions {
    pub n_subregions: usize,
    pub fill_fraction: f64,
    /// Draw only this kind instead of a random one.
    pub kind: Option<ShapeKind>,
    /// Fixed opacity instead of a random one in `[96, 255]`.
    pub alpha: Option<u8>,
}

impl AugmentOptions {
    pub fn new(n_subregions: usize, fill_fraction: f64) -> Self {
        AugmentOptions {
            n_subregions,
            fill_fraction,
            kind: None,
            alpha: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Augmented {
    pub record: FaceRecord,
    pub mask: OcclusionMask,
    pub shapes: Vec<ShapeSpec>,
}

/// [`augment_with`] with random shape kinds and opacities.
pub fn augment(
    record: &FaceRecord,
    seed: u64,
    n_subregions: usize,
    fill_fraction: f64,
) -> Result<(FaceRecord, OcclusionMask)> {
    let out = augment_with(record, seed, &AugmentOptions::new(n_subregions, fill_fraction))?;
    Ok((out.record, out.mask))
}

/// Picks `ceil(fill_fraction * n)` distinct subregions and paints one shape
/// of random colour into each, sized to the subregion's bounding box and
/// clipped to the subregion. The mask marks every pixel a shape touched.
pub fn augment_with(record: &FaceRecord, seed: u64, opts: &AugmentOptions) -> Result<Augmented> {
    if !(0.0..=1.0).contains(&opts.fill_fraction) {
        return Err(Error::InvalidArgument(format!(
            "fill_fraction {} outside [0, 1]",
            opts.fill_fraction
        )));
    }
    let polygon = record.facial_polygon()?;
    let cells = subdivide(&polygon, opts.n_subregions)?;
    let n = cells.len();
    let picks = ((opts.fill_fraction * n as f64).ceil() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = sample(&mut rng, n, picks).into_vec();
    chosen.sort_unstable();

    let (w, h) = (record.width(), record.height());
    let mut image = record.image().clone();
    let mut mask = OcclusionMask::empty(w, h);
    let mut shapes = Vec::with_capacity(picks);
    let mut in_cell = vec![false; (w * h) as usize];
    for idx in chosen {
        let kind = opts.kind.unwrap_or(match rng.random_range(0..3) {
            0 => ShapeKind::Rectangle,
            1 => ShapeKind::Ellipse,
            _ => ShapeKind::Polygon,
        });
        let color = [rng.random(), rng.random(), rng.random()];
        let alpha = opts.alpha.unwrap_or_else(|| rng.random_range(96..=255));
        // polygon vertices are drawn even when the cell is empty so the
        // random stream does not depend on the cell contents
        let t: [f64; 4] = [rng.random(), rng.random(), rng.random(), rng.random()];
        shapes.push(ShapeSpec {
            kind,
            color,
            alpha,
            subregion_index: idx,
        });
        let cell = &cells[idx];
        let Some((x0, y0, x1, y1)) = cell.bounds() else {
            continue;
        };
        for &(x, y) in &cell.pixels {
            in_cell[(y as u32 * w + x as u32) as usize] = true;
        }
        // continuous box around the cell's pixel centres
        let (bx0, by0, bx1, by1) = (x0 as f64 - 0.5, y0 as f64 - 0.5, x1 as f64 + 0.5, y1 as f64 + 0.5);
        let mut paint = |x: u32, y: u32| {
            let i = (y * w + x) as usize;
            if !in_cell[i] || mask.get(x, y) {
                return;
            }
            let px = image.get_pixel_mut(x, y);
            for c in 0..3 {
                px.0[c] = blend_channel(color[c], px.0[c], alpha);
            }
            mask.set(x, y, true);
        };
        match kind {
            ShapeKind::Rectangle => {
                for &(x, y) in &cell.pixels {
                    paint(x as u32, y as u32);
                }
            }
            ShapeKind::Ellipse => {
                let c = Point2::new((bx0 + bx1) / 2.0, (by0 + by1) / 2.0);
                draw::ellipse(c, (bx1 - bx0) / 2.0, (by1 - by0) / 2.0, 0.0, w, h, &mut paint);
            }
            ShapeKind::Polygon => {
                // one vertex on each side of the box: top, right, bottom, left
                let quad = [
                    Point2::new(bx0 + t[0] * (bx1 - bx0), by0),
                    Point2::new(bx1, by0 + t[1] * (by1 - by0)),
                    Point2::new(bx0 + t[2] * (bx1 - bx0), by1),
                    Point2::new(bx0, by0 + t[3] * (by1 - by0)),
                ];
                draw::polygon(&quad, w, h, &mut paint);
            }
        }
        for &(x, y) in &cell.pixels {
            in_cell[(y as u32 * w + x as u32) as usize] = false;
        }
    }
    Ok(Augmented {
        record: record.with_image(image)?,
        mask,
        shapes,
    })
}

/// Pixels where two rasters differ.
pub fn diff_mask(a: &RgbImage, b: &RgbImage) -> OcclusionMask {
    OcclusionMask::from_fn(a.width(), a.height(), |x, y| a.get_pixel(x, y) != b.get_pixel(x, y))
}
