//! The ten built-in selfie-filter stickers.
//!
//! Each sticker is drawn in the face frame of [`crate::synth`] onto an RGBA
//! canvas and anchored to landmarks of the mean template face, so the anchor
//! similarity scales and rotates it with the target face.

use image::{Rgba, RgbaImage};

use crate::compositor::{Anchor, FilterAsset, Placement};
use crate::draw;
use crate::geometry::Point2;
use crate::synth::template_landmarks;

/// Overlay pixels per face-frame unit.
const PPU: f64 = 24.0;

/// Names of every built-in sticker, in catalogue order.
pub const NAMES: [&str; 10] = [
    "card", "kitty", "bunny", "mickey", "glasses", "dog", "mask", "panda", "squirrel", "joker",
];

struct StickerCanvas {
    origin: Point2,
    img: RgbaImage,
}

impl StickerCanvas {
    /// Canvas covering the face-frame box `[x0, x1] x [y0, y1]`.
    fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        let w = ((x1 - x0) * PPU).ceil() as u32 + 1;
        let h = ((y1 - y0) * PPU).ceil() as u32 + 1;
        StickerCanvas {
            origin: Point2::new(x0, y0),
            img: RgbaImage::new(w, h),
        }
    }

    fn px(&self, p: Point2) -> Point2 {
        p.sub(self.origin).scale(PPU)
    }

    fn paint(&mut self, color: [u8; 4]) -> impl FnMut(u32, u32) + '_ {
        move |x, y| self.img.put_pixel(x, y, Rgba(color))
    }

    fn polygon(&mut self, pts: &[(f64, f64)], color: [u8; 4]) {
        let pts: Vec<_> = pts.iter().map(|&(x, y)| self.px(Point2::new(x, y))).collect();
        let (w, h) = self.img.dimensions();
        draw::polygon(&pts, w, h, self.paint(color));
    }

    fn ellipse(&mut self, c: (f64, f64), rx: f64, ry: f64, angle: f64, color: [u8; 4]) {
        let c = self.px(Point2::new(c.0, c.1));
        let (w, h) = self.img.dimensions();
        draw::ellipse(c, rx * PPU, ry * PPU, angle, w, h, self.paint(color));
    }

    fn stroke(&mut self, pts: &[(f64, f64)], radius: f64, color: [u8; 4]) {
        let pts: Vec<_> = pts.iter().map(|&(x, y)| self.px(Point2::new(x, y))).collect();
        let (w, h) = self.img.dimensions();
        draw::stroke(&pts, radius * PPU, w, h, self.paint(color));
    }

    fn finish(self, name: &str, placement: Placement, landmarks: &[usize]) -> FilterAsset {
        let template = template_landmarks();
        let anchors = landmarks
            .iter()
            .map(|&i| Anchor {
                landmark_index: i,
                overlay_xy: self.px(template[i]),
            })
            .collect();
        FilterAsset::new(name, self.img, anchors, placement).expect("built-in sticker is valid")
    }
}

/// Anchor sets by region.
const EYES: [usize; 4] = [36, 39, 42, 45];
const NOSE: [usize; 4] = [27, 30, 39, 42];
const MOUTH: [usize; 4] = [48, 54, 33, 8];
const FACE: [usize; 6] = [0, 16, 8, 27, 36, 45];

/// Jaw-following outline in the face frame, widened by `grow` and closed
/// across the top at height `top`.
fn face_outline(grow: f64, top: f64) -> Vec<(f64, f64)> {
    let t = template_landmarks();
    let mut pts: Vec<(f64, f64)> = t[..17]
        .iter()
        .map(|p| (p.x * (1.0 + grow), p.y + grow * (p.y + 0.08).max(0.0)))
        .collect();
    let w = t[16].x * (1.0 + grow);
    pts.push((w, top));
    pts.push((-w, top));
    pts
}

const WHITE: [u8; 4] = [250, 250, 250, 255];
const BLACK: [u8; 4] = [15, 15, 18, 255];

pub fn card() -> FilterAsset {
    let mut c = StickerCanvas::new(0.1, 0.35, 1.0, 1.0);
    c.polygon(&[(0.3, 0.45), (0.88, 0.4), (0.92, 0.85), (0.34, 0.9)], [255, 244, 214, 255]);
    for k in 0..3 {
        let y = 0.55 + 0.1 * k as f64;
        c.stroke(&[(0.4, y), (0.82, y - 0.03)], 0.018, [40, 80, 200, 255]);
    }
    c.finish("card", Placement::Mouth, &MOUTH)
}

pub fn kitty() -> FilterAsset {
    let mut c = StickerCanvas::new(-1.3, -1.6, 1.3, 0.6);
    for s in [-1.0, 1.0] {
        c.polygon(&[(s * 0.35, -1.05), (s * 0.95, -1.55), (s * 0.95, -0.85)], [250, 160, 190, 255]);
        c.polygon(&[(s * 0.5, -1.05), (s * 0.88, -1.38), (s * 0.88, -0.98)], [255, 210, 225, 255]);
        for k in 0..3 {
            let y = 0.2 + 0.08 * k as f64;
            c.stroke(&[(s * 0.25, 0.25), (s * 0.95, y - 0.05)], 0.012, [30, 30, 30, 255]);
        }
    }
    c.ellipse((0.0, 0.2), 0.09, 0.06, 0.0, [240, 120, 150, 255]);
    c.finish("kitty", Placement::Eyes, &EYES)
}

pub fn bunny() -> FilterAsset {
    let mut c = StickerCanvas::new(-0.9, -2.0, 0.9, 0.5);
    for s in [-1.0, 1.0] {
        c.ellipse((s * 0.35, -1.45), 0.17, 0.5, s * 0.2, [245, 245, 245, 255]);
        c.ellipse((s * 0.35, -1.42), 0.08, 0.36, s * 0.2, [250, 180, 200, 255]);
    }
    c.ellipse((0.0, 0.19), 0.1, 0.07, 0.0, [235, 110, 140, 255]);
    c.polygon(&[(-0.07, 0.27), (0.07, 0.27), (0.07, 0.4), (-0.07, 0.4)], WHITE);
    c.finish("bunny", Placement::Nose, &NOSE)
}

pub fn mickey() -> FilterAsset {
    let mut c = StickerCanvas::new(-1.3, -1.7, 1.3, -0.5);
    for s in [-1.0, 1.0] {
        c.ellipse((s * 0.72, -1.25), 0.33, 0.33, 0.0, BLACK);
    }
    c.ellipse((0.0, -0.98), 0.16, 0.1, 0.0, [220, 30, 40, 255]);
    c.finish("mickey", Placement::Eyes, &EYES)
}

pub fn glasses() -> FilterAsset {
    let mut c = StickerCanvas::new(-1.1, -0.8, 1.1, 0.2);
    for s in [-1.0, 1.0] {
        let lens = [
            (s * 0.05, -0.66),
            (s * 0.92, -0.68),
            (s * 0.96, -0.16),
            (s * 0.76, 0.12),
            (s * 0.18, 0.12),
            (s * 0.05, -0.16),
        ];
        c.polygon(&lens, [12, 8, 30, 255]);
        c.stroke(&[(s * 0.86, -0.55), (s * 1.05, -0.5)], 0.04, [200, 170, 40, 255]);
    }
    c.stroke(&[(-0.86, -0.62), (0.86, -0.62)], 0.035, [200, 170, 40, 255]);
    c.finish("glasses", Placement::Eyes, &EYES)
}

pub fn dog() -> FilterAsset {
    let mut c = StickerCanvas::new(-1.5, -1.1, 1.5, 1.3);
    let ear = [80, 45, 20, 255];
    for s in [-1.0, 1.0] {
        c.ellipse((s * 0.95, -0.15), 0.34, 0.7, s * -0.25, ear);
    }
    c.ellipse((0.0, 0.4), 0.62, 0.44, 0.0, [240, 220, 190, 255]);
    c.ellipse((0.0, 0.18), 0.19, 0.12, 0.0, BLACK);
    c.ellipse((0.0, 0.9), 0.15, 0.24, 0.0, [235, 90, 110, 255]);
    c.finish("dog", Placement::Nose, &NOSE)
}

pub fn mask() -> FilterAsset {
    let mut c = StickerCanvas::new(-1.3, -0.4, 1.3, 1.4);
    let body = face_outline(0.1, -0.1);
    c.polygon(&body, [28, 32, 40, 255]);
    for k in 0..5 {
        let x = -0.4 + 0.2 * k as f64;
        c.polygon(&[(x - 0.07, 0.5), (x + 0.07, 0.5), (x + 0.05, 0.7), (x - 0.05, 0.7)], WHITE);
    }
    c.stroke(&[(-1.05, 0.0), (-1.25, -0.25)], 0.04, [28, 32, 40, 255]);
    c.stroke(&[(1.05, 0.0), (1.25, -0.25)], 0.04, [28, 32, 40, 255]);
    c.finish("mask", Placement::Mouth, &MOUTH)
}

pub fn panda() -> FilterAsset {
    let mut c = StickerCanvas::new(-1.4, -1.6, 1.4, 1.35);
    for s in [-1.0, 1.0] {
        c.ellipse((s * 0.8, -1.05), 0.3, 0.3, 0.0, BLACK);
    }
    let head = face_outline(0.12, -0.95);
    c.polygon(&head, WHITE);
    for s in [-1.0, 1.0] {
        c.ellipse((s * 0.4, -0.27), 0.3, 0.22, s * 0.5, BLACK);
        c.ellipse((s * 0.4, -0.29), 0.07, 0.07, 0.0, WHITE);
    }
    c.ellipse((0.0, 0.22), 0.16, 0.11, 0.0, BLACK);
    c.stroke(&[(-0.25, 0.55), (0.0, 0.45), (0.25, 0.55)], 0.03, BLACK);
    c.finish("panda", Placement::TotalFace, &FACE)
}

pub fn squirrel() -> FilterAsset {
    let mut c = StickerCanvas::new(-1.4, -1.7, 1.4, 1.35);
    let fur = [75, 38, 12, 255];
    for s in [-1.0, 1.0] {
        c.polygon(&[(s * 0.4, -0.95), (s * 0.85, -1.6), (s * 1.0, -0.8)], fur);
    }
    let head = face_outline(0.12, -0.95);
    c.polygon(&head, fur);
    for s in [-1.0, 1.0] {
        c.ellipse((s * 0.52, 0.45), 0.38, 0.34, 0.0, [245, 225, 190, 255]);
        c.ellipse((s * 0.4, -0.3), 0.12, 0.12, 0.0, BLACK);
    }
    c.ellipse((0.0, 0.2), 0.12, 0.08, 0.0, BLACK);
    c.polygon(&[(-0.1, 0.55), (0.1, 0.55), (0.1, 0.8), (-0.1, 0.8)], WHITE);
    c.finish("squirrel", Placement::TotalFace, &FACE)
}

pub fn joker() -> FilterAsset {
    let mut c = StickerCanvas::new(-1.4, -1.3, 1.4, 1.35);
    // translucent face paint: the face stays faintly visible underneath
    let head = face_outline(0.1, -0.9);
    c.polygon(&head, [12, 14, 16, 230]);
    for s in [-1.0, 1.0] {
        c.polygon(&[(s * 0.4, -0.62), (s * 0.68, -0.28), (s * 0.4, 0.02), (s * 0.12, -0.28)], WHITE);
        c.ellipse((s * 0.4, -0.28), 0.08, 0.08, 0.0, BLACK);
    }
    c.polygon(&[(-0.55, 0.48), (0.55, 0.48), (0.35, 0.72), (-0.35, 0.72)], [210, 20, 30, 255]);
    c.finish("joker", Placement::TotalFace, &FACE)
}

/// Every built-in sticker, in [`NAMES`] order.
pub fn catalogue() -> Vec<FilterAsset> {
    vec![
        card(),
        kitty(),
        bunny(),
        mickey(),
        glasses(),
        dog(),
        mask(),
        panda(),
        squirrel(),
        joker(),
    ]
}

pub fn by_name(name: &str) -> Option<FilterAsset> {
    catalogue().into_iter().find(|a| a.name == name)
}
