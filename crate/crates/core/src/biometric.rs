//! Verification metrics, score normalisation and a built-in face engine.
//!
//! Scores follow the "higher is more similar" convention and a comparison
//! matches when `score >= threshold`. All rates are fractions of one.

use std::fmt::Write as _;

use image::{imageops, GrayImage, Luma, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::face::luma;
use crate::geometry::Point2;

/// Maps `scores` affinely so that `native.0 -> target.0` and
/// `native.1 -> target.1`.
pub fn minmax_normalize(scores: &[f64], native: (f64, f64), target: (f64, f64)) -> Result<Vec<f64>> {
    let (lo, hi) = native;
    if !(hi > lo) {
        return Err(Error::DegenerateRange { min: lo, max: hi });
    }
    let (r0, r1) = target;
    Ok(scores
        .iter()
        .map(|&x| (x - lo) / (hi - lo) * (r1 - r0) + r0)
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub detected: bool,
    pub confidence: f64,
    pub engine_id: String,
    pub native_range: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionStats {
    /// Mean confidence over detected images (0 when none were detected).
    pub mean: f64,
    /// Population standard deviation over detected images.
    pub std: f64,
    /// Fraction of images without a detection.
    pub error_rate: f64,
    pub total: usize,
}

pub fn detection_stats(results: &[DetectionResult]) -> Result<DetectionStats> {
    if results.is_empty() {
        return Err(Error::NoData("no detection results".into()));
    }
    let detected: Vec<f64> = results.iter().filter(|r| r.detected).map(|r| r.confidence).collect();
    let (mean, std) = if detected.is_empty() {
        (0.0, 0.0)
    } else {
        let n = detected.len() as f64;
        let mean = detected.iter().sum::<f64>() / n;
        let var = detected.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    Ok(DetectionStats {
        mean,
        std,
        error_rate: (results.len() - detected.len()) as f64 / results.len() as f64,
        total: results.len(),
    })
}

/// Genuine and impostor comparison scores plus enrolment bookkeeping.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
    pub enrol_failures: usize,
    pub total_enrol_attempts: usize,
}

impl TrialSet {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>) -> Self {
        TrialSet {
            genuine,
            impostor,
            enrol_failures: 0,
            total_enrol_attempts: 0,
        }
    }

    /// Concatenation of two sets; counts add.
    pub fn merge(mut self, other: &TrialSet) -> TrialSet {
        self.genuine.extend_from_slice(&other.genuine);
        self.impostor.extend_from_slice(&other.impostor);
        self.enrol_failures += other.enrol_failures;
        self.total_enrol_attempts += other.total_enrol_attempts;
        self
    }

    fn check(&self) -> Result<()> {
        if self.genuine.is_empty() || self.impostor.is_empty() {
            return Err(Error::NoData(format!(
                "{} genuine and {} impostor scores",
                self.genuine.len(),
                self.impostor.len()
            )));
        }
        if self.genuine.iter().chain(&self.impostor).any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument("scores must be finite".into()));
        }
        Ok(())
    }
}

/// Sorted copies of both score lists, answering rate queries by bisection.
struct Sweep {
    genuine: Vec<f64>,
    impostor: Vec<f64>,
}

impl Sweep {
    fn new(t: &TrialSet) -> Result<Self> {
        t.check()?;
        let mut genuine = t.genuine.clone();
        let mut impostor = t.impostor.clone();
        genuine.sort_by(f64::total_cmp);
        impostor.sort_by(f64::total_cmp);
        Ok(Sweep { genuine, impostor })
    }

    /// `(FMR, FNMR)` at `t`: impostors `>= t` and genuines `< t`.
    fn rates(&self, t: f64) -> (f64, f64) {
        let imp_below = self.impostor.partition_point(|&s| s < t);
        let gen_below = self.genuine.partition_point(|&s| s < t);
        (
            (self.impostor.len() - imp_below) as f64 / self.impostor.len() as f64,
            gen_below as f64 / self.genuine.len() as f64,
        )
    }

    /// Every distinct observed score, ascending.
    fn thresholds(&self) -> Vec<f64> {
        let mut all: Vec<f64> = self.genuine.iter().chain(&self.impostor).copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        all
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EerPoint {
    pub eer: f64,
    pub threshold: f64,
    pub fmr: f64,
    pub fnmr: f64,
}

/// Equal error rate: over the observed scores, the threshold minimising
/// `|FMR - FNMR|` (lowest threshold on ties), reported as the midpoint.
pub fn eer(trials: &TrialSet) -> Result<EerPoint> {
    let sweep = Sweep::new(trials)?;
    let mut best: Option<(f64, EerPoint)> = None;
    for t in sweep.thresholds() {
        let (fmr, fnmr) = sweep.rates(t);
        let gap = (fmr - fnmr).abs();
        if best.is_none_or(|(g, _)| gap < g) {
            best = Some((
                gap,
                EerPoint {
                    eer: (fmr + fnmr) / 2.0,
                    threshold: t,
                    fmr,
                    fnmr,
                },
            ));
        }
    }
    Ok(best.expect("non-empty score lists").1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub target_fmr: f64,
    pub fnmr: f64,
    /// FMR actually reached at the chosen threshold.
    pub attained_fmr: f64,
    /// `f64::INFINITY` when only rejecting everything meets the target.
    pub threshold: f64,
    /// Fewer impostor trials than `1 / target`: the target cannot be
    /// resolved and the attained FMR is what the data allows.
    pub resolution_limited: bool,
}

/// FNMR at the lowest threshold whose FMR does not exceed each target.
/// Candidates are the observed scores plus a reject-all threshold.
pub fn fnmr_at_fmr(trials: &TrialSet, targets: &[f64]) -> Result<Vec<OperatingPoint>> {
    let sweep = Sweep::new(trials)?;
    let mut candidates = sweep.thresholds();
    candidates.push(f64::INFINITY);
    let rates: Vec<(f64, f64)> = candidates.iter().map(|&t| sweep.rates(t)).collect();
    targets
        .iter()
        .map(|&target| {
            if !(target > 0.0 && target <= 1.0) {
                return Err(Error::InvalidArgument(format!("FMR target {target} outside (0, 1]")));
            }
            // FMR is non-increasing in the threshold, so the first hit is lowest
            let i = rates.iter().position(|&(fmr, _)| fmr <= target).expect("reject-all has FMR 0");
            Ok(OperatingPoint {
                target_fmr: target,
                fnmr: rates[i].1,
                attained_fmr: rates[i].0,
                threshold: candidates[i],
                resolution_limited: (sweep.impostor.len() as f64) * target < 1.0,
            })
        })
        .collect()
}

/// Failure-to-enrol rate; 0 when nothing was attempted.
pub fn fte(trials: &TrialSet) -> f64 {
    if trials.total_enrol_attempts == 0 {
        0.0
    } else {
        trials.enrol_failures as f64 / trials.total_enrol_attempts as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub threshold: f64,
    pub fmr: f64,
    pub fnmr: f64,
}

/// One point per observed score plus the reject-all end, by ascending
/// threshold: FMR falls and FNMR rises along the curve.
pub fn det_curve(trials: &TrialSet) -> Result<Vec<DetPoint>> {
    let sweep = Sweep::new(trials)?;
    let mut thresholds = sweep.thresholds();
    thresholds.push(f64::INFINITY);
    Ok(thresholds
        .into_iter()
        .map(|t| {
            let (fmr, fnmr) = sweep.rates(t);
            DetPoint {
                threshold: t,
                fmr,
                fnmr,
            }
        })
        .collect())
}

pub fn det_csv(points: &[DetPoint]) -> String {
    let mut out = String::from("threshold,fmr,fnmr\n");
    for p in points {
        writeln!(out, "{},{},{}", p.threshold, p.fmr, p.fnmr).expect("write to string");
    }
    out
}

/// Inverse standard normal CDF (Acklam's rational approximation, relative
/// error below 1.2e-9), for plotting DET curves on normal-deviate axes.
pub fn probit(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383_577_518_672_69e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let lo = 0.02425;
    if p < lo {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - lo {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -probit(1.0 - p)
    }
}

/// A face-processing engine: detector, quality assessor and comparator.
pub trait EngineAdapter {
    fn id(&self) -> &str;
    fn detect(&self, image: &RgbImage, landmarks: Option<&[Point2]>) -> DetectionResult;
    /// Quality in `[0, 1]`.
    fn quality(&self, image: &RgbImage, landmarks: Option<&[Point2]>) -> f64;
    fn embed(&self, image: &RgbImage, landmarks: Option<&[Point2]>) -> Result<Vec<f64>>;
    fn compare(&self, a: &[f64], b: &[f64]) -> f64;
}

pub const EMBED_SIDE: u32 = 32;

/// Crop to the landmark bounding box grown by 10% (or the whole image),
/// greyscale, resize to 32x32, flatten, remove the mean and scale to unit
/// norm.
pub fn baseline_embed(image: &RgbImage, landmarks: Option<&[Point2]>) -> Result<Vec<f64>> {
    let small = crop_resize(image, landmarks, 0.1, EMBED_SIDE);
    unit_zero_mean(small.as_raw().iter().map(|&v| v as f64).collect())
}

fn crop_resize(image: &RgbImage, points: Option<&[Point2]>, grow: f64, side: u32) -> GrayImage {
    let gray = GrayImage::from_fn(image.width(), image.height(), |x, y| {
        Luma([luma(image.get_pixel(x, y).0)])
    });
    let crop = match points {
        Some(lm) if !lm.is_empty() => {
            let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
            for p in lm {
                x0 = x0.min(p.x);
                y0 = y0.min(p.y);
                x1 = x1.max(p.x);
                y1 = y1.max(p.y);
            }
            let (gx, gy) = ((x1 - x0) * grow, (y1 - y0) * grow);
            let cx0 = (x0 - gx).floor().clamp(0.0, (image.width() - 1) as f64) as u32;
            let cy0 = (y0 - gy).floor().clamp(0.0, (image.height() - 1) as f64) as u32;
            let cx1 = ((x1 + gx).ceil().max(0.0) as u32).clamp(cx0, image.width() - 1);
            let cy1 = ((y1 + gy).ceil().max(0.0) as u32).clamp(cy0, image.height() - 1);
            imageops::crop_imm(&gray, cx0, cy0, cx1 - cx0 + 1, cy1 - cy0 + 1).to_image()
        }
        _ => gray,
    };
    imageops::resize(&crop, side, side, imageops::FilterType::Triangle)
}

const DETECT_SIDE: u32 = 24;

/// Inner-face structure (brows to chin, landmarks 17 onwards): the gradient
/// magnitude of the crop, at unit norm. Magnitudes ignore contrast polarity
/// and any smooth illumination ramp.
fn detection_features(image: &RgbImage, landmarks: Option<&[Point2]>) -> Result<Vec<f64>> {
    let inner = landmarks.map(|lm| if lm.len() > 17 { &lm[17..] } else { lm });
    let small = crop_resize(image, inner, 0.05, DETECT_SIDE);
    let n = DETECT_SIDE as usize;
    let at = |x: usize, y: usize| small.as_raw()[y.min(n - 1) * n + x.min(n - 1)] as f64;
    let mut v = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let gx = at(x + 1, y) - at(x.saturating_sub(1), y);
            let gy = at(x, y + 1) - at(x, y.saturating_sub(1));
            v.push(gx.hypot(gy));
        }
    }
    unit_zero_mean(v)
}

/// Subtracts the mean and normalises to unit length.
pub fn unit_zero_mean(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let mean = v.iter().sum::<f64>() / v.len().max(1) as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 1e-9 * (v.len() as f64).sqrt() {
        return Err(Error::ZeroVector);
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Deterministic stand-in engine. Detection confidence is the cosine
/// between the image's embedding and a face template's embedding; a face
/// is detected when it reaches `min_confidence`.
#[derive(Clone, Debug)]
pub struct BaselineEngine {
    template: Vec<f64>,
    pub min_confidence: f64,
}

impl BaselineEngine {
    pub fn new(template: &RgbImage, template_landmarks: Option<&[Point2]>, min_confidence: f64) -> Result<Self> {
        Ok(BaselineEngine {
            template: detection_features(template, template_landmarks)?,
            min_confidence,
        })
    }

    /// Template from the neutral synthetic face.
    pub fn synthetic(size: u32) -> Self {
        let face = crate::synth::render(
            &crate::synth::Identity::mean(),
            &crate::synth::Session::neutral(),
            size,
            "template",
        );
        Self::new(face.image(), Some(face.landmarks()), 0.1).expect("template has texture")
    }
}

impl EngineAdapter for BaselineEngine {
    fn id(&self) -> &str {
        "baseline"
    }

    fn detect(&self, image: &RgbImage, landmarks: Option<&[Point2]>) -> DetectionResult {
        let confidence = detection_features(image, landmarks)
            .map(|e| cosine(&e, &self.template))
            .unwrap_or(-1.0);
        DetectionResult {
            detected: confidence >= self.min_confidence,
            confidence,
            engine_id: self.id().into(),
            native_range: (-1.0, 1.0),
        }
    }

    fn quality(&self, image: &RgbImage, landmarks: Option<&[Point2]>) -> f64 {
        let d = self.detect(image, landmarks);
        minmax_normalize(&[d.confidence], d.native_range, (0.0, 1.0)).expect("fixed range")[0].clamp(0.0, 1.0)
    }

    fn embed(&self, image: &RgbImage, landmarks: Option<&[Point2]>) -> Result<Vec<f64>> {
        baseline_embed(image, landmarks)
    }

    fn compare(&self, a: &[f64], b: &[f64]) -> f64 {
        cosine(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use proptest::prelude::*;

    #[test]
    fn normalisation_endpoints_and_dlib_range() {
        let out = minmax_normalize(&[0.0, 4.0, 2.0], (0.0, 4.0), (0.0, 1.0)).unwrap();
        assert_eq!(out, vec![0.0, 1.0, 0.5]);
        assert!(matches!(
            minmax_normalize(&[1.0], (2.0, 2.0), (0.0, 1.0)),
            Err(Error::DegenerateRange { .. })
        ));
    }

    #[test]
    fn detection_statistics() {
        let r = |d: bool, c: f64| DetectionResult {
            detected: d,
            confidence: c,
            engine_id: "e".into(),
            native_range: (0.0, 4.0),
        };
        let s = detection_stats(&[r(true, 2.0), r(true, 2.0), r(true, 2.0)]).unwrap();
        assert_eq!((s.mean, s.std, s.error_rate), (2.0, 0.0, 0.0));
        let s = detection_stats(&[r(true, 1.0), r(true, 3.0), r(false, 0.0), r(true, 2.0)]).unwrap();
        assert_eq!(s.error_rate, 0.25);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(detection_stats(&[]).is_err());
    }

    #[test]
    fn separable_and_identical_sets() {
        let sep = TrialSet::new(vec![0.9, 0.8], vec![0.1, 0.2]);
        assert_eq!(eer(&sep).unwrap().eer, 0.0);
        for p in fnmr_at_fmr(&sep, &[0.0001, 0.001, 0.01]).unwrap() {
            assert_eq!(p.fnmr, 0.0);
        }
        let det = det_curve(&sep).unwrap();
        assert!(det.iter().any(|p| p.fmr == 0.0 && p.fnmr == 0.0));

        let same: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let ident = TrialSet::new(same.clone(), same);
        assert_eq!(eer(&ident).unwrap().eer, 0.5);
        assert!(det_curve(&ident).unwrap().iter().any(|p| p.fmr == 0.5 && p.fnmr == 0.5));
    }

    #[test]
    fn empty_class_is_no_data() {
        assert!(matches!(eer(&TrialSet::new(vec![], vec![1.0])), Err(Error::NoData(_))));
    }

    #[test]
    fn unresolvable_target_is_flagged_not_an_error() {
        let t = TrialSet::new(vec![0.5, 0.6], vec![0.1, 0.55, 0.7]);
        let p = fnmr_at_fmr(&t, &[0.01]).unwrap()[0];
        assert!(p.resolution_limited);
        assert_eq!(p.attained_fmr, 0.0);
        assert_eq!(p.threshold, f64::INFINITY);
        assert_eq!(p.fnmr, 1.0);
    }

    #[test]
    fn fte_ratio() {
        let mut t = TrialSet::new(vec![1.0], vec![0.0]);
        assert_eq!(fte(&t), 0.0);
        t.enrol_failures = 2838;
        t.total_enrol_attempts = 100_000;
        assert_eq!(fte(&t), 0.02838);
    }

    #[test]
    fn probit_reference_values() {
        assert!(probit(0.5).abs() < 1e-9);
        assert!((probit(0.975) - 1.959963984540054).abs() < 1e-8);
        assert!((probit(0.001) + 3.090232306167813).abs() < 1e-8);
    }

    fn textured() -> RgbImage {
        RgbImage::from_fn(40, 40, |x, y| Rgb([(x * 5 + y) as u8, (y * 3) as u8, (x * y % 251) as u8]))
    }

    #[test]
    fn cosine_identities() {
        let v = baseline_embed(&textured(), None).unwrap();
        assert!((cosine(&v, &v) - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((cosine(&v, &neg) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn brightness_shift_is_removed() {
        let base = RgbImage::from_fn(32, 32, |x, y| Rgb([(x * 4 + 40) as u8, (y * 4 + 40) as u8, 90]));
        let shifted = RgbImage::from_fn(32, 32, |x, y| Rgb([(x * 4 + 60) as u8, (y * 4 + 60) as u8, 110]));
        let (a, b) = (baseline_embed(&base, None).unwrap(), baseline_embed(&shifted, None).unwrap());
        assert!((cosine(&a, &b) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn flat_image_has_no_embedding() {
        let flat = RgbImage::from_pixel(16, 16, Rgb([80; 3]));
        assert!(matches!(baseline_embed(&flat, None), Err(Error::ZeroVector)));
    }

    #[test]
    fn baseline_engine_detects_synthetic_faces() {
        let engine = BaselineEngine::synthetic(64);
        for face in crate::synth::dataset("T", 5, 1, 64, 1) {
            let d = engine.detect(face.image(), Some(face.landmarks()));
            assert!(d.detected, "confidence {}", d.confidence);
            let q = engine.quality(face.image(), Some(face.landmarks()));
            assert!((0.0..=1.0).contains(&q));
        }
    }

    #[test]
    fn detection_ignores_contrast_polarity() {
        let engine = BaselineEngine::synthetic(64);
        let face = &crate::synth::dataset("T", 1, 1, 64, 2)[0];
        let mut inverted = face.image().clone();
        inverted.iter_mut().for_each(|v| *v = 255 - *v);
        let a = engine.detect(face.image(), Some(face.landmarks())).confidence;
        let b = engine.detect(&inverted, Some(face.landmarks())).confidence;
        assert!((a - b).abs() < 0.05, "{a} vs {b}");
    }

    #[test]
    fn noise_is_not_a_face() {
        use rand::{Rng, SeedableRng};
        let engine = BaselineEngine::synthetic(64);
        let face = &crate::synth::dataset("T", 1, 1, 64, 3)[0];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let noise = RgbImage::from_fn(64, 64, |_, _| Rgb([rng.random(), rng.random(), rng.random()]));
        let d = engine.detect(&noise, Some(face.landmarks()));
        assert!(!d.detected, "confidence {}", d.confidence);
    }

    /// Rates by direct counting at every candidate threshold.
    fn brute(t: &TrialSet) -> Vec<(f64, f64, f64)> {
        let mut th: Vec<f64> = t.genuine.iter().chain(&t.impostor).copied().collect();
        th.sort_by(f64::total_cmp);
        th.dedup();
        th.push(f64::INFINITY);
        th.into_iter()
            .map(|x| {
                let fmr = t.impostor.iter().filter(|&&s| s >= x).count() as f64 / t.impostor.len() as f64;
                let fnmr = t.genuine.iter().filter(|&&s| s < x).count() as f64 / t.genuine.len() as f64;
                (x, fmr, fnmr)
            })
            .collect()
    }

    fn scores() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec((0i32..50).prop_map(|v| v as f64 / 10.0), 1..40)
    }

    proptest! {
        #[test]
        fn metrics_match_brute_force(g in scores(), i in scores()) {
            let t = TrialSet::new(g, i);
            let table = brute(&t);
            let det = det_curve(&t).unwrap();
            prop_assert_eq!(det.len(), table.len());
            for (p, &(x, fmr, fnmr)) in det.iter().zip(&table) {
                prop_assert_eq!((p.threshold, p.fmr, p.fnmr), (x, fmr, fnmr));
            }
            let e = eer(&t).unwrap();
            let finite = &table[..table.len() - 1];
            let best = finite.iter().map(|r| (r.1 - r.2).abs()).fold(f64::MAX, f64::min);
            let first = finite.iter().find(|r| (r.1 - r.2).abs() == best).unwrap();
            prop_assert_eq!(e.threshold, first.0);
            prop_assert_eq!(e.eer, (first.1 + first.2) / 2.0);

            let targets = [0.01, 0.1, 0.3, 1.0];
            let ops = fnmr_at_fmr(&t, &targets).unwrap();
            for (op, &target) in ops.iter().zip(&targets) {
                let r = table.iter().find(|r| r.1 <= target).unwrap();
                prop_assert_eq!(op.fnmr, r.2);
            }
            for w in ops.windows(2) {
                prop_assert!(w[1].fnmr <= w[0].fnmr);
            }
            for w in det.windows(2) {
                prop_assert!(w[1].fmr <= w[0].fmr && w[1].fnmr >= w[0].fnmr);
            }
        }

        #[test]
        fn eer_is_bounded_when_genuine_dominates(i in scores(), shifts in proptest::collection::vec(0i32..20, 40)) {
            // each genuine score sits above its paired impostor score, so
            // FMR + FNMR <= 1 at every threshold
            let g: Vec<f64> = i.iter().zip(&shifts).map(|(&s, &d)| s + d as f64 / 10.0).collect();
            let t = TrialSet::new(g, i);
            let e = eer(&t).unwrap().eer;
            prop_assert!((0.0..=0.5 + 1.0 / t.impostor.len() as f64).contains(&e));
        }

        #[test]
        fn normalisation_preserves_eer_and_det(g in scores(), i in scores(), lo in -5.0f64..0.0, span in 5.0f64..10.0) {
            let t = TrialSet::new(g, i);
            let norm = |v: &[f64]| minmax_normalize(v, (lo, lo + span), (0.0, 1.0)).unwrap();
            let n = TrialSet::new(norm(&t.genuine), norm(&t.impostor));
            prop_assert_eq!(eer(&t).unwrap().eer, eer(&n).unwrap().eer);
            let rates = |d: Vec<DetPoint>| d.into_iter().map(|p| (p.fmr, p.fnmr)).collect::<Vec<_>>();
            prop_assert_eq!(rates(det_curve(&t).unwrap()), rates(det_curve(&n).unwrap()));
        }

        #[test]
        fn merged_error_rate_is_weighted_mean(a in proptest::collection::vec(any::<bool>(), 1..30), b in proptest::collection::vec(any::<bool>(), 1..30)) {
            let mk = |v: &[bool]| v.iter().map(|&d| DetectionResult {
                detected: d, confidence: 1.0, engine_id: "e".into(), native_range: (0.0, 1.0),
            }).collect::<Vec<_>>();
            let (ra, rb) = (mk(&a), mk(&b));
            let sa = detection_stats(&ra).unwrap();
            let sb = detection_stats(&rb).unwrap();
            let all: Vec<_> = ra.into_iter().chain(rb).collect();
            let s = detection_stats(&all).unwrap();
            let w = (sa.error_rate * a.len() as f64 + sb.error_rate * b.len() as f64) / (a.len() + b.len()) as f64;
            prop_assert!((s.error_rate - w).abs() < 1e-12);
        }
    }
}
