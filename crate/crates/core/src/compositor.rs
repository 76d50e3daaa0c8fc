//! Landmark-anchored sticker compositing and occlusion coverage scoring.

use std::fmt;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, RgbaImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::face::{luma, FaceRecord, LANDMARK_COUNT};
use crate::geometry::{FacePolygon, Point2, Similarity};
use crate::io;

/// Facial region a filter predominantly covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Mouth,
    Eyes,
    Nose,
    TotalFace,
}

impl Placement {
    pub const ALL: [Placement; 4] = [
        Placement::Mouth,
        Placement::Eyes,
        Placement::Nose,
        Placement::TotalFace,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Placement::Mouth => "mouth",
            Placement::Eyes => "eyes",
            Placement::Nose => "nose",
            Placement::TotalFace => "total_face",
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Ties an overlay pixel position to a landmark.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub landmark_index: usize,
    pub overlay_xy: Point2,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterAsset {
    overlay: RgbaImage,
    anchors: Vec<Anchor>,
    pub placement: Placement,
    pub name: String,
}

#[derive(Serialize, Deserialize)]
struct AssetSidecar {
    name: String,
    placement: Placement,
    anchors: Vec<Anchor>,
}

impl FilterAsset {
    pub fn new(
        name: impl Into<String>,
        overlay: RgbaImage,
        anchors: Vec<Anchor>,
        placement: Placement,
    ) -> Result<Self> {
        let name = name.into();
        if anchors.len() < 2 {
            return Err(Error::InvalidAsset(format!(
                "`{name}` has {} anchors; at least 2 are needed",
                anchors.len()
            )));
        }
        if let Some(a) = anchors.iter().find(|a| a.landmark_index >= LANDMARK_COUNT) {
            return Err(Error::InvalidAsset(format!(
                "`{name}` anchors landmark {} of {LANDMARK_COUNT}",
                a.landmark_index
            )));
        }
        let first = anchors[0].overlay_xy;
        if anchors.iter().all(|a| a.overlay_xy == first) {
            return Err(Error::InvalidAsset(format!(
                "`{name}` anchors share one overlay point; scale is undetermined"
            )));
        }
        Ok(FilterAsset {
            overlay,
            anchors,
            placement,
            name,
        })
    }

    pub fn overlay(&self) -> &RgbaImage {
        &self.overlay
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    /// Writes `<name>.png` and its `<name>.json` sidecar into `dir`.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let png = dir.join(format!("{}.png", self.name));
        io::save_rgba(&self.overlay, &png)?;
        io::write_json(
            &png.with_extension("json"),
            &AssetSidecar {
                name: self.name.clone(),
                placement: self.placement,
                anchors: self.anchors.clone(),
            },
        )?;
        Ok(png)
    }

    pub fn load(png: &Path) -> Result<Self> {
        let overlay = io::load_rgba(png)?;
        let side: AssetSidecar = io::read_json(&png.with_extension("json"))?;
        FilterAsset::new(side.name, overlay, side.anchors, side.placement)
    }

    /// Similarity taking overlay coordinates onto `landmarks`.
    pub fn placement_transform(&self, landmarks: &[Point2]) -> Result<Similarity> {
        let mut src = Vec::with_capacity(self.anchors.len());
        let mut dst = Vec::with_capacity(self.anchors.len());
        for a in &self.anchors {
            let p = landmarks.get(a.landmark_index).ok_or_else(|| {
                Error::InvalidAsset(format!(
                    "`{}` anchors landmark {} but the record has {}",
                    self.name,
                    a.landmark_index,
                    landmarks.len()
                ))
            })?;
            src.push(a.overlay_xy);
            dst.push(*p);
        }
        Similarity::fit(&src, &dst).ok_or_else(|| {
            Error::DegeneratePlacement(format!(
                "`{}` anchor landmarks coincide; no similarity fits",
                self.name
            ))
        })
    }
}

/// Alpha blend of one channel, `round(a·o + (1-a)·i)` with `a = alpha/255`.
/// Exact: the quotient can never land on a half.
#[inline]
pub fn blend_channel(overlay: u8, input: u8, alpha: u8) -> u8 {
    let num = alpha as u32 * overlay as u32 + (255 - alpha as u32) * input as u32;
    ((2 * num + 255) / 510) as u8
}

/// Composites `asset` onto `record`. See [`apply_filter_with_mask`].
pub fn apply_filter(record: &FaceRecord, asset: &FilterAsset) -> Result<FaceRecord> {
    apply_filter_with_mask(record, asset).map(|(r, _)| r)
}

/// Composites `asset` onto `record` and returns the coverage mask (255 where
/// the sampled overlay alpha is non-zero).
///
/// Every image pixel is mapped back into the overlay through the inverse
/// anchor similarity and samples its nearest overlay pixel. Identity and
/// landmarks are carried over unchanged.
pub fn apply_filter_with_mask(
    record: &FaceRecord,
    asset: &FilterAsset,
) -> Result<(FaceRecord, GrayImage)> {
    let forward = asset.placement_transform(record.landmarks())?;
    let inverse = forward.inverse();
    let (w, h) = (record.width(), record.height());
    let (ow, oh) = (asset.overlay.width() as f64, asset.overlay.height() as f64);
    let mut out = record.image().clone();
    let mut mask = GrayImage::new(w, h);
    let mut touched = false;
    for y in 0..h {
        for x in 0..w {
            let q = inverse.apply(Point2::new(x as f64, y as f64));
            let (ox, oy) = (q.x.round(), q.y.round());
            if ox < 0.0 || oy < 0.0 || ox >= ow || oy >= oh {
                continue;
            }
            touched = true;
            let o = asset.overlay.get_pixel(ox as u32, oy as u32).0;
            if o[3] == 0 {
                continue;
            }
            let px = out.get_pixel_mut(x, y);
            for c in 0..3 {
                px.0[c] = blend_channel(o[c], px.0[c], o[3]);
            }
            mask.put_pixel(x, y, Luma([255]));
        }
    }
    if !touched {
        return Err(Error::DegeneratePlacement(format!(
            "`{}` lands entirely outside the {w}x{h} image",
            asset.name
        )));
    }
    Ok((record.with_image(out)?, mask))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageClass {
    Low,
    Medium,
    High,
}

impl CoverageClass {
    pub const ALL: [CoverageClass; 3] = [CoverageClass::Low, CoverageClass::Medium, CoverageClass::High];

    /// `< 0.15` low, `[0.15, 0.40]` medium, `> 0.40` high.
    pub fn of(intensity: f64) -> CoverageClass {
        if intensity < 0.15 {
            CoverageClass::Low
        } else if intensity <= 0.40 {
            CoverageClass::Medium
        } else {
            CoverageClass::High
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CoverageClass::Low => "low",
            CoverageClass::Medium => "medium",
            CoverageClass::High => "high",
        }
    }
}

impl fmt::Display for CoverageClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Fraction in `[0, 1]`.
    pub coverage_intensity: f64,
    pub coverage_class: CoverageClass,
    pub filter_name: String,
}

impl CoverageReport {
    pub fn percent(&self) -> f64 {
        self.coverage_intensity * 100.0
    }
}

/// Mean absolute luma change inside `polygon`, as a fraction of 255.
pub fn coverage_intensity(
    original: &FaceRecord,
    filtered: &FaceRecord,
    polygon: &FacePolygon,
    filter_name: &str,
) -> Result<CoverageReport> {
    let (a, b) = (original.image(), filtered.image());
    if a.dimensions() != b.dimensions() {
        return Err(Error::Shape(format!(
            "original {:?} vs filtered {:?}",
            a.dimensions(),
            b.dimensions()
        )));
    }
    if polygon.pixel_count() == 0 {
        return Err(Error::DegenerateLandmarks("empty facial polygon".into()));
    }
    let (w, h) = (a.width() as i64, a.height() as i64);
    let mut total: u64 = 0;
    for span in polygon.spans() {
        if span.y < 0 || span.y >= h {
            continue;
        }
        for x in span.x0.max(0)..=span.x1.min(w - 1) {
            let (x, y) = (x as u32, span.y as u32);
            let d = luma(a.get_pixel(x, y).0).abs_diff(luma(b.get_pixel(x, y).0));
            total += d as u64;
        }
    }
    let intensity = total as f64 / (polygon.pixel_count() as f64 * 255.0);
    Ok(CoverageReport {
        coverage_intensity: intensity,
        coverage_class: CoverageClass::of(intensity),
        filter_name: filter_name.to_string(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Baseline,
    Filtered,
    Augmented,
    Reconstructed,
}

/// One image of a dataset. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub identity: String,
    pub source_id: String,
    pub filter_name: Option<String>,
    pub placement: Option<Placement>,
    pub coverage_intensity: Option<f64>,
    pub coverage_class: Option<CoverageClass>,
    pub role: Role,
    /// Ground-truth occlusion mask, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
    /// Unoccluded counterpart of this image, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_path: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
}

pub const MANIFEST_FILE: &str = "manifest.jsonl";

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_jsonl(path, &self.rows)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(DatasetManifest {
            rows: io::read_jsonl(path)?,
        })
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &ManifestRow> {
        self.rows.iter().filter(move |r| r.role == role)
    }
}

/// File stem for a record: its source id with path separators replaced.
pub fn record_stem(record: &FaceRecord) -> String {
    record
        .source_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes every baseline and every (record, asset) composite under
/// `output_root`, with ground-truth masks, plus `manifest.jsonl`.
///
/// Layout: `baseline/<stem>.png`, `filtered/<asset>/<stem>.png`,
/// `masks/<asset>/<stem>.png`. Rows are ordered record by record, baseline
/// first, then assets in the given order.
pub fn build_manifest(
    records: &[FaceRecord],
    assets: &[FilterAsset],
    output_root: &Path,
) -> Result<DatasetManifest> {
    if records.is_empty() {
        return Err(Error::NoData("build_manifest needs at least one record".into()));
    }
    std::fs::create_dir_all(output_root).map_err(|e| Error::io(output_root, e))?;
    let mut rows = Vec::with_capacity(records.len() * (assets.len() + 1));
    for record in records {
        let stem = record_stem(record);
        let polygon = record.facial_polygon()?;
        let baseline = format!("baseline/{stem}.png");
        record.save(&output_root.join("baseline"), &stem)?;
        rows.push(ManifestRow {
            path: baseline.clone(),
            identity: record.identity.clone(),
            source_id: record.source_id.clone(),
            filter_name: None,
            placement: None,
            coverage_intensity: None,
            coverage_class: None,
            role: Role::Baseline,
            mask_path: None,
            truth_path: None,
        });
        for asset in assets {
            let (filtered, mask) = apply_filter_with_mask(record, asset)?;
            let report = coverage_intensity(record, &filtered, &polygon, &asset.name)?;
            let dir = format!("filtered/{}", asset.name);
            filtered.save(&output_root.join(&dir), &stem)?;
            let mask_path = format!("masks/{}/{stem}.png", asset.name);
            io::save_gray(&mask, &output_root.join(&mask_path))?;
            rows.push(ManifestRow {
                path: format!("{dir}/{stem}.png"),
                identity: record.identity.clone(),
                source_id: record.source_id.clone(),
                filter_name: Some(asset.name.clone()),
                placement: Some(asset.placement),
                coverage_intensity: Some(report.coverage_intensity),
                coverage_class: Some(report.coverage_class),
                role: Role::Filtered,
                mask_path: Some(mask_path),
                truth_path: Some(baseline.clone()),
            });
        }
    }
    let manifest = DatasetManifest { rows };
    manifest.save(&output_root.join(MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage, Rgba};

    fn square_record(size: u32, fill: [u8; 3]) -> FaceRecord {
        let img = RgbImage::from_pixel(size, size, Rgb(fill));
        // landmarks spread over a square from (2,2) to (size-3, size-3)
        let hi = (size - 3) as f64;
        let lm = (0..LANDMARK_COUNT)
            .map(|i| match i % 4 {
                0 => Point2::new(2.0, 2.0),
                1 => Point2::new(hi, 2.0),
                2 => Point2::new(hi, hi),
                _ => Point2::new(2.0, hi),
            })
            .collect();
        FaceRecord::new(img, lm, "id", "src").unwrap()
    }

    /// Overlay mapped 1:1 onto image pixels starting at `(x0, y0)`.
    fn block_asset(overlay: RgbaImage, x0: f64, y0: f64, record: &FaceRecord) -> FilterAsset {
        // landmarks 0 and 1 sit at (2,2) and (hi,2)
        let lm = record.landmarks();
        let a = Anchor {
            landmark_index: 0,
            overlay_xy: Point2::new(lm[0].x - x0, lm[0].y - y0),
        };
        let b = Anchor {
            landmark_index: 1,
            overlay_xy: Point2::new(lm[1].x - x0, lm[1].y - y0),
        };
        FilterAsset::new("block", overlay, vec![a, b], Placement::Mouth).unwrap()
    }

    #[test]
    fn transparent_overlay_leaves_image_unchanged() {
        let rec = square_record(32, [90, 120, 150]);
        let asset = block_asset(RgbaImage::new(10, 10), 5.0, 5.0, &rec);
        let (out, mask) = apply_filter_with_mask(&rec, &asset).unwrap();
        assert_eq!(out, rec);
        assert!(mask.pixels().all(|p| p.0[0] == 0));
    }

    #[test]
    fn opaque_overlay_replaces_its_block_only() {
        let rec = square_record(32, [90, 120, 150]);
        let overlay = RgbaImage::from_pixel(6, 4, Rgba([10, 200, 30, 255]));
        let asset = block_asset(overlay, 8.0, 11.0, &rec);
        let (out, mask) = apply_filter_with_mask(&rec, &asset).unwrap();
        for (x, y, p) in out.image().enumerate_pixels() {
            let inside = (8..14).contains(&x) && (11..15).contains(&y);
            let want = if inside { [10, 200, 30] } else { [90, 120, 150] };
            assert_eq!(p.0, want, "pixel ({x},{y})");
            assert_eq!(mask.get_pixel(x, y).0[0] == 255, inside);
        }
        assert_eq!(out.landmarks(), rec.landmarks());
        assert_eq!(out.identity, rec.identity);
    }

    #[test]
    fn half_alpha_blend_matches_per_pixel_oracle() {
        let rec = square_record(24, [37, 201, 90]);
        let overlay = RgbaImage::from_pixel(24, 24, Rgba([250, 3, 128, 128]));
        let asset = block_asset(overlay, 0.0, 0.0, &rec);
        let out = apply_filter(&rec, &asset).unwrap();
        let a = 128.0 / 255.0;
        for p in out.image().pixels() {
            for (c, (&o, &i)) in [250u8, 3, 128].iter().zip(&[37u8, 201, 90]).enumerate() {
                let want = (a * o as f64 + (1.0 - a) * i as f64).round() as u8;
                assert_eq!(p.0[c], want);
            }
        }
    }

    #[test]
    fn blend_channel_matches_float_rounding_everywhere() {
        for alpha in 0..=255u32 {
            for o in (0..=255u32).step_by(3) {
                for i in (0..=255u32).step_by(5) {
                    let a = alpha as f64 / 255.0;
                    let want = (a * o as f64 + (1.0 - a) * i as f64).round() as u8;
                    assert_eq!(blend_channel(o as u8, i as u8, alpha as u8), want);
                }
            }
        }
    }

    #[test]
    fn placement_outside_image_is_degenerate() {
        let rec = square_record(16, [0, 0, 0]);
        let asset = block_asset(RgbaImage::from_pixel(4, 4, Rgba([1, 1, 1, 255])), 100.0, 100.0, &rec);
        assert!(matches!(apply_filter(&rec, &asset), Err(Error::DegeneratePlacement(_))));
    }

    #[test]
    fn asset_validation() {
        let overlay = RgbaImage::new(4, 4);
        let one = vec![Anchor {
            landmark_index: 3,
            overlay_xy: Point2::new(0.0, 0.0),
        }];
        assert!(matches!(
            FilterAsset::new("x", overlay.clone(), one, Placement::Eyes),
            Err(Error::InvalidAsset(_))
        ));
        let bad_index = vec![
            Anchor {
                landmark_index: 68,
                overlay_xy: Point2::new(0.0, 0.0),
            },
            Anchor {
                landmark_index: 1,
                overlay_xy: Point2::new(1.0, 0.0),
            },
        ];
        assert!(matches!(
            FilterAsset::new("x", overlay, bad_index, Placement::Eyes),
            Err(Error::InvalidAsset(_))
        ));
    }

    #[test]
    fn coverage_identity_and_maximal_change() {
        let black = square_record(20, [0, 0, 0]);
        let poly = black.facial_polygon().unwrap();
        let same = coverage_intensity(&black, &black, &poly, "none").unwrap();
        assert_eq!(same.coverage_intensity, 0.0);
        assert_eq!(same.coverage_class, CoverageClass::Low);
        let white = black.with_image(RgbImage::from_pixel(20, 20, Rgb([255; 3]))).unwrap();
        let full = coverage_intensity(&black, &white, &poly, "white").unwrap();
        assert_eq!(full.coverage_intensity, 1.0);
        assert_eq!(full.coverage_class, CoverageClass::High);
        assert_eq!(full.percent(), 100.0);
    }

    #[test]
    fn twenty_percent_change_is_medium() {
        // square (1,1)-(12,12) has 10x10 interior pixels
        let img = RgbImage::new(16, 16);
        let lm = (0..LANDMARK_COUNT)
            .map(|i| match i % 4 {
                0 => Point2::new(1.0, 1.0),
                1 => Point2::new(12.0, 1.0),
                2 => Point2::new(12.0, 12.0),
                _ => Point2::new(1.0, 12.0),
            })
            .collect();
        let rec = FaceRecord::new(img, lm, "id", "s").unwrap();
        let poly = rec.facial_polygon().unwrap();
        assert_eq!(poly.pixel_count(), 100);
        let mut changed = rec.image().clone();
        for (k, (x, y)) in poly.interior_pixels().into_iter().enumerate() {
            if k % 5 == 0 {
                changed.put_pixel(x as u32, y as u32, Rgb([255; 3]));
            }
        }
        let report = coverage_intensity(&rec, &rec.with_image(changed).unwrap(), &poly, "f").unwrap();
        assert!((report.coverage_intensity - 0.20).abs() < 1e-15);
        assert_eq!(report.coverage_class, CoverageClass::Medium);
    }

    #[test]
    fn class_boundaries_use_closed_medium_interval() {
        assert_eq!(CoverageClass::of(0.1499), CoverageClass::Low);
        assert_eq!(CoverageClass::of(0.15), CoverageClass::Medium);
        assert_eq!(CoverageClass::of(0.40), CoverageClass::Medium);
        assert_eq!(CoverageClass::of(0.4001), CoverageClass::High);
    }

    #[test]
    fn manifest_counts_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let r1 = square_record(16, [10, 10, 10]);
        let mut r2 = square_record(16, [20, 20, 20]);
        r2.source_id = "src2".into();
        let opaque = RgbaImage::from_pixel(4, 4, Rgba([200, 0, 0, 255]));
        let a1 = block_asset(opaque.clone(), 4.0, 4.0, &r1);
        let mut a2 = block_asset(opaque, 6.0, 6.0, &r1);
        a2.name = "other".into();
        let m = build_manifest(&[r1.clone(), r2.clone()], &[a1, a2], dir.path()).unwrap();
        assert_eq!(m.rows.len(), 6);
        assert_eq!(m.with_role(Role::Baseline).count(), 2);
        assert_eq!(m.with_role(Role::Filtered).count(), 4);
        for row in &m.rows {
            assert!(dir.path().join(&row.path).exists(), "{}", row.path);
        }
        let back = DatasetManifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, m);

        let only = tempfile::tempdir().unwrap();
        let m = build_manifest(&[r1, r2], &[], only.path()).unwrap();
        assert_eq!(m.rows.len(), 2);
        assert!(m.rows.iter().all(|r| r.role == Role::Baseline));
    }

    #[test]
    fn asset_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let rec = square_record(16, [0, 0, 0]);
        let asset = block_asset(RgbaImage::from_pixel(3, 2, Rgba([1, 2, 3, 4])), 1.0, 1.0, &rec);
        let png = asset.save(dir.path()).unwrap();
        assert_eq!(FilterAsset::load(&png).unwrap(), asset);
    }
}
