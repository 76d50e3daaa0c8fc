//! Writes a contact sheet of synthetic faces and every sticker applied to
//! the first face: `cargo run --example gallery -- out.png`.

use defilter::compositor::apply_filter;
use defilter::{stickers, synth};
use image::{imageops, RgbImage};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "gallery.png".into());
    let size = 64;
    let faces = synth::dataset("G", 10, 2, size, 42);
    let mut sheet = RgbImage::new(size * 10, size * 3);
    for (i, face) in faces.iter().enumerate() {
        let (col, row) = ((i / 2) as u32, (i % 2) as u32);
        imageops::replace(&mut sheet, face.image(), (col * size) as i64, (row * size) as i64);
    }
    for (k, asset) in stickers::catalogue().iter().enumerate() {
        let filtered = apply_filter(&faces[2 * k], asset).expect("sticker fits");
        imageops::replace(&mut sheet, filtered.image(), (k as u32 * size) as i64, (2 * size) as i64);
    }
    let big = imageops::resize(&sheet, sheet.width() * 3, sheet.height() * 3, imageops::FilterType::Nearest);
    big.save(&out).expect("write contact sheet");
    println!("wrote {out}");
}
