//! Procedural face generator.
//!
//! Faces are drawn from a 68-point landmark layout in the iBUG ordering
//! (jaw 0-16, brows 17-26, nose 27-35, eyes 36-47, mouth 48-67). Each
//! identity fixes shape and colour parameters; each session adds pose,
//! lighting, background and sensor-noise jitter. Landmarks live in a face
//! frame (x right, y down, one unit is roughly half the face width) and are
//! mapped to pixels by the session's similarity transform.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::draw;
use crate::face::{FaceRecord, LANDMARK_COUNT};
use crate::geometry::{Point2, Similarity};

/// Shape and colour parameters shared by every image of one person.
#[derive(Clone, Debug, PartialEq)]
pub struct Identity {
    pub label: String,
    pub skin: [f64; 3],
    pub hair: [f64; 3],
    pub iris: [f64; 3],
    pub lip: [f64; 3],
    pub hair_style: u8,
    pub hairline: f64,
    pub face_w: f64,
    pub face_h: f64,
    pub jaw_exp: f64,
    pub eye_dx: f64,
    pub eye_y: f64,
    pub eye_w: f64,
    pub eye_h: f64,
    pub brow_gap: f64,
    pub brow_thick: f64,
    pub brow_tilt: f64,
    pub brow_arch: f64,
    pub nose_len: f64,
    pub nose_w: f64,
    pub mouth_y: f64,
    pub mouth_w: f64,
    pub lip_h: f64,
    pub marks: Vec<(Point2, f64)>,
}

/// Per-capture nuisance parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub dx: f64,
    pub dy: f64,
    pub scale: f64,
    pub angle: f64,
    pub brightness: f64,
    pub contrast: f64,
    pub light: f64,
    pub background: [f64; 3],
    pub mouth_open: f64,
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

fn tinted(luma_target: f64, tone: [f64; 3]) -> [f64; 3] {
    let l = 0.299 * tone[0] + 0.587 * tone[1] + 0.114 * tone[2];
    tone.map(|c| (c * luma_target / l).clamp(0.0, 255.0))
}

impl Identity {
    /// The neutral face every sticker is designed against.
    pub fn mean() -> Identity {
        Identity {
            label: "mean".into(),
            skin: tinted(135.0, [1.0, 0.78, 0.64]),
            hair: tinted(60.0, [1.0, 0.8, 0.6]),
            iris: [70.0, 60.0, 45.0],
            lip: tinted(105.0, [1.0, 0.55, 0.55]),
            hair_style: 0,
            hairline: -0.82,
            face_w: 0.98,
            face_h: 1.0,
            jaw_exp: 0.8,
            eye_dx: 0.39,
            eye_y: -0.29,
            eye_w: 0.185,
            eye_h: 0.08,
            brow_gap: 0.2,
            brow_thick: 0.065,
            brow_tilt: 0.0,
            brow_arch: 0.06,
            nose_len: 0.12,
            nose_w: 0.17,
            mouth_y: 0.56,
            mouth_w: 0.33,
            lip_h: 0.085,
            marks: Vec::new(),
        }
    }

    pub fn sample(label: impl Into<String>, rng: &mut impl Rng) -> Identity {
        let skin_tone = [1.0, rng.random_range(0.68..0.86), rng.random_range(0.52..0.72)];
        let hair_tone = [1.0, rng.random_range(0.7..0.95), rng.random_range(0.45..0.85)];
        let n_marks = rng.random_range(0..4);
        let marks = (0..n_marks)
            .map(|_| {
                let p = Point2::new(rng.random_range(-0.65..0.65), rng.random_range(-0.2..0.8));
                (p, rng.random_range(0.03..0.06))
            })
            .collect();
        Identity {
            label: label.into(),
            skin: tinted(rng.random_range(105.0..165.0), skin_tone),
            hair: tinted(rng.random_range(20.0..170.0), hair_tone),
            iris: tinted(rng.random_range(30.0..120.0), [0.6, rng.random_range(0.6..1.0), 1.0]),
            lip: tinted(rng.random_range(70.0..130.0), [1.0, rng.random_range(0.45..0.65), 0.55]),
            hair_style: rng.random_range(0..4),
            hairline: rng.random_range(-0.95..-0.7),
            face_w: rng.random_range(0.88..1.08),
            face_h: rng.random_range(0.92..1.08),
            jaw_exp: rng.random_range(0.6..1.0),
            eye_dx: rng.random_range(0.33..0.45),
            eye_y: rng.random_range(-0.34..-0.24),
            eye_w: rng.random_range(0.15..0.22),
            eye_h: rng.random_range(0.06..0.1),
            brow_gap: rng.random_range(0.15..0.25),
            brow_thick: rng.random_range(0.04..0.09),
            brow_tilt: rng.random_range(-0.08..0.08),
            brow_arch: rng.random_range(0.02..0.1),
            nose_len: rng.random_range(0.05..0.2),
            nose_w: rng.random_range(0.12..0.22),
            mouth_y: rng.random_range(0.5..0.62),
            mouth_w: rng.random_range(0.26..0.4),
            lip_h: rng.random_range(0.06..0.11),
            marks,
        }
    }

    /// Landmarks in the face frame, with the mouth opened by `mouth_open`.
    pub fn landmarks(&self, mouth_open: f64) -> Vec<Point2> {
        let mut lm = Vec::with_capacity(LANDMARK_COUNT);
        // jaw: superelliptic lower arc from left temple to right temple
        let chin = 1.05 * self.face_h;
        for t in 0..17 {
            let phi = t as f64 / 16.0 * std::f64::consts::PI;
            let (c, s) = (phi.cos(), phi.sin());
            let x = -c.signum() * c.abs().powf(self.jaw_exp) * self.face_w;
            let y = -0.08 + s.powf(self.jaw_exp) * (chin + 0.08);
            lm.push(Point2::new(x, y));
        }
        let brow_y = self.eye_y - self.brow_gap;
        for side in [-1.0, 1.0] {
            for k in 0..5 {
                // left brow runs outer -> inner, right brow inner -> outer
                let s = if side < 0.0 { k as f64 / 4.0 } else { 1.0 - k as f64 / 4.0 };
                let x = side * (0.8 - 0.62 * s) * self.face_w.min(1.0);
                let arch = self.brow_arch * (std::f64::consts::PI * s).sin();
                let y = brow_y - arch + self.brow_tilt * (0.5 - s);
                lm.push(Point2::new(x, y));
            }
        }
        let nose_tip = 0.1 + self.nose_len;
        for k in 0..4 {
            let y = -0.3 + (nose_tip - 0.04 + 0.3) * k as f64 / 3.0;
            lm.push(Point2::new(0.0, y));
        }
        let nostril_y = nose_tip + 0.05;
        for k in 0..5 {
            let u = (k as f64 - 2.0) / 2.0;
            let y = nostril_y + 0.03 * (1.0 - u.abs());
            lm.push(Point2::new(u * self.nose_w, y));
        }
        for side in [-1.0, 1.0] {
            let c = Point2::new(side * self.eye_dx, self.eye_y);
            let (ew, eh) = (self.eye_w, self.eye_h);
            // corner, two upper, corner, two lower, walking clockwise on screen
            let ring = [
                (-ew, 0.0),
                (-ew / 3.0, -eh),
                (ew / 3.0, -eh),
                (ew, 0.0),
                (ew / 3.0, eh * 0.9),
                (-ew / 3.0, eh * 0.9),
            ];
            for (dx, dy) in ring {
                lm.push(Point2::new(c.x + dx, c.y + dy));
            }
        }
        let (my, mw, ut) = (self.mouth_y, self.mouth_w, self.lip_h);
        let lt = self.lip_h * 1.15;
        let open = mouth_open;
        let outer = [
            (-mw, 0.0),
            (-0.6 * mw, -0.85 * ut),
            (-0.25 * mw, -ut),
            (0.0, -0.8 * ut),
            (0.25 * mw, -ut),
            (0.6 * mw, -0.85 * ut),
            (mw, 0.0),
            (0.6 * mw, 0.85 * lt + open),
            (0.25 * mw, lt + open),
            (0.0, lt + open),
            (-0.25 * mw, lt + open),
            (-0.6 * mw, 0.85 * lt + open),
        ];
        let inner = [
            (-0.85 * mw, 0.0),
            (-0.3 * mw, -0.15 * ut),
            (0.0, -0.15 * ut),
            (0.3 * mw, -0.15 * ut),
            (0.85 * mw, 0.0),
            (0.3 * mw, 0.9 * open + 0.01),
            (0.0, open + 0.01),
            (-0.3 * mw, 0.9 * open + 0.01),
        ];
        for (dx, dy) in outer.into_iter().chain(inner) {
            lm.push(Point2::new(dx, my + dy));
        }
        debug_assert_eq!(lm.len(), LANDMARK_COUNT);
        lm
    }
}

/// Landmarks of [`Identity::mean`] with a closed mouth, in the face frame.
pub fn template_landmarks() -> Vec<Point2> {
    Identity::mean().landmarks(0.0)
}

impl Session {
    /// No jitter: centred, upright, neutral light, grey background.
    pub fn neutral() -> Session {
        Session {
            dx: 0.0,
            dy: 0.0,
            scale: 1.0,
            angle: 0.0,
            brightness: 0.0,
            contrast: 1.0,
            light: 0.0,
            background: [128.0; 3],
            mouth_open: 0.0,
            noise_sigma: 0.0,
            noise_seed: 0,
        }
    }

    pub fn sample(rng: &mut impl Rng) -> Session {
        let bg: f64 = rng.random_range(70.0..190.0);
        Session {
            dx: rng.random_range(-1.5..1.5),
            dy: rng.random_range(-1.5..1.5),
            scale: rng.random_range(0.96..1.04),
            angle: rng.random_range(-0.06..0.06),
            brightness: rng.random_range(-12.0..12.0),
            contrast: rng.random_range(0.92..1.08),
            light: rng.random_range(-0.15..0.15),
            background: [0.0, 1.0, 2.0].map(|_| (bg + rng.random_range(-25.0..25.0f64)).clamp(0.0, 255.0)),
            mouth_open: if rng.random_bool(0.3) { rng.random_range(0.02..0.07) } else { 0.0 },
            noise_sigma: 2.5,
            noise_seed: rng.random(),
        }
    }

    /// Face frame to pixel coordinates for a `size x size` image.
    pub fn frame_to_pixels(&self, size: u32) -> Similarity {
        let s = size as f64 / 64.0;
        let k = 18.5 * s * self.scale;
        Similarity {
            a: k * self.angle.cos(),
            b: k * self.angle.sin(),
            tx: size as f64 / 2.0 - 0.5 + self.dx * s,
            ty: size as f64 * 0.52 + self.dy * s,
        }
    }
}

struct Canvas {
    w: u32,
    h: u32,
    px: Vec<[f64; 3]>,
}

impl Canvas {
    fn fill(&mut self, color: [f64; 3], shape: impl FnOnce(u32, u32, &mut dyn FnMut(u32, u32))) {
        let (w, h) = (self.w, self.h);
        let px = &mut self.px;
        shape(w, h, &mut |x, y| px[(y * w + x) as usize] = color);
    }
}

fn shade(c: [f64; 3], f: f64) -> [f64; 3] {
    c.map(|v| (v * f).clamp(0.0, 255.0))
}

/// Renders `identity` under `session` as a `size x size` face record.
pub fn render(identity: &Identity, session: &Session, size: u32, source_id: &str) -> FaceRecord {
    let to_px = session.frame_to_pixels(size);
    let map = |pts: &[Point2]| pts.iter().map(|&p| to_px.apply(p)).collect::<Vec<_>>();
    let unit = to_px.scale_factor();
    let lm_frame = identity.landmarks(session.mouth_open);
    let lm = map(&lm_frame);
    let mut cv = Canvas {
        w: size,
        h: size,
        px: vec![session.background; (size * size) as usize],
    };
    let id = identity;

    // hair mass behind the head
    let back_ry = if id.hair_style == 1 { 1.45 } else { 1.05 };
    let back_c = to_px.apply(Point2::new(0.0, if id.hair_style == 1 { 0.05 } else { -0.35 }));
    if id.hair_style != 2 {
        cv.fill(id.hair, |w, h, p| {
            draw::ellipse(back_c, 1.12 * id.face_w * unit, back_ry * unit, session.angle, w, h, p)
        });
    }
    // neck
    let neck = map(&[
        Point2::new(-0.42, 0.6),
        Point2::new(0.42, 0.6),
        Point2::new(0.5, 2.0),
        Point2::new(-0.5, 2.0),
    ]);
    cv.fill(shade(id.skin, 0.82), |w, h, p| draw::polygon(&neck, w, h, p));
    // face: jaw arc closed by a forehead dome
    let mut outline: Vec<Point2> = lm_frame[..17].to_vec();
    for k in 1..16 {
        let phi = k as f64 / 16.0 * std::f64::consts::PI;
        outline.push(Point2::new(phi.cos() * id.face_w, -0.08 - phi.sin() * 1.0));
    }
    let outline = map(&outline);
    cv.fill(id.skin, |w, h, p| draw::polygon(&outline, w, h, p));
    // fringe above the hairline
    let fringe_low = match id.hair_style {
        2 => id.hairline - 0.25,
        3 => id.hairline + 0.12,
        _ => id.hairline,
    };
    let mut fringe = vec![Point2::new(-1.1 * id.face_w, -0.3)];
    for k in 0..=8 {
        let x = -id.face_w + 2.0 * id.face_w * k as f64 / 8.0;
        let wave = if k % 2 == 0 { 0.0 } else { 0.05 };
        fringe.push(Point2::new(x, fringe_low + wave));
    }
    fringe.push(Point2::new(1.1 * id.face_w, -0.3));
    fringe.push(Point2::new(1.1 * id.face_w, -1.4));
    fringe.push(Point2::new(-1.1 * id.face_w, -1.4));
    let fringe = map(&fringe);
    let hair_color = id.hair;
    {
        // clip the fringe to the head outline so it never paints background
        let mut head = vec![false; (size * size) as usize];
        draw::polygon(&outline, size, size, |x, y| head[(y * size + x) as usize] = true);
        if id.hair_style != 2 {
            let back_rx = 1.12 * id.face_w * unit;
            draw::ellipse(back_c, back_rx, back_ry * unit, session.angle, size, size, |x, y| {
                head[(y * size + x) as usize] = true
            });
        }
        let px = &mut cv.px;
        draw::polygon(&fringe, size, size, |x, y| {
            let i = (y * size + x) as usize;
            if head[i] {
                px[i] = hair_color;
            }
        });
    }
    // brows
    let brow_color = shade(id.hair, 0.7);
    for range in [17..22, 22..27] {
        let pts = lm[range].to_vec();
        cv.fill(brow_color, |w, h, p| draw::stroke(&pts, id.brow_thick * unit, w, h, p));
    }
    // eyes: sclera, iris, pupil
    for (range, side) in [(36..42, -1.0), (42..48, 1.0)] {
        let ring = lm[range].to_vec();
        cv.fill([235.0, 232.0, 225.0], |w, h, p| draw::polygon(&ring, w, h, p));
        let c = to_px.apply(Point2::new(side * id.eye_dx, id.eye_y));
        let r = id.eye_h * 1.05 * unit;
        let mut inside = vec![false; (size * size) as usize];
        draw::polygon(&ring, size, size, |x, y| inside[(y * size + x) as usize] = true);
        let px = &mut cv.px;
        draw::ellipse(c, r, r, 0.0, size, size, |x, y| {
            let i = (y * size + x) as usize;
            if inside[i] {
                px[i] = id.iris;
            }
        });
        draw::ellipse(c, r * 0.45, r * 0.45, 0.0, size, size, |x, y| {
            let i = (y * size + x) as usize;
            if inside[i] {
                px[i] = [15.0, 15.0, 20.0];
            }
        });
        let upper = lm[if side < 0.0 { 36..40 } else { 42..46 }].to_vec();
        cv.fill(shade(id.skin, 0.55), |w, h, p| draw::stroke(&upper, 0.5, w, h, p));
    }
    // nose: shaded ridge and nostrils
    let ridge = lm[27..31].to_vec();
    cv.fill(shade(id.skin, 0.9), |w, h, p| draw::stroke(&ridge, 0.03 * unit + 0.3, w, h, p));
    let base = lm[31..36].to_vec();
    cv.fill(shade(id.skin, 0.7), |w, h, p| draw::stroke(&base, 0.035 * unit + 0.3, w, h, p));
    // mouth
    let outer = lm[48..60].to_vec();
    cv.fill(id.lip, |w, h, p| draw::polygon(&outer, w, h, p));
    let inner = lm[60..68].to_vec();
    if session.mouth_open > 0.0 {
        cv.fill([40.0, 20.0, 22.0], |w, h, p| draw::polygon(&inner, w, h, p));
    } else {
        let seam = lm[60..65].to_vec();
        cv.fill(shade(id.lip, 0.6), |w, h, p| draw::stroke(&seam, 0.5, w, h, p));
    }
    for &(c, r) in &id.marks {
        let c = to_px.apply(c);
        cv.fill(shade(id.skin, 0.5), |w, h, p| draw::ellipse(c, r * unit, r * unit, 0.0, w, h, p));
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(session.noise_seed);
    let noise = Normal::new(0.0, session.noise_sigma.max(1e-12)).expect("positive sigma");
    let cx = size as f64 / 2.0;
    let img = RgbImage::from_fn(size, size, |x, y| {
        let v = cv.px[(y * size + x) as usize];
        let light = session.light * (x as f64 - cx) * 64.0 / size as f64;
        let n = if session.noise_sigma > 0.0 {
            noise.sample(&mut noise_rng)
        } else {
            0.0
        };
        Rgb(v.map(|c| {
            let out = session.contrast * (c - 128.0) + 128.0 + session.brightness + light + n;
            out.round().clamp(0.0, 255.0) as u8
        }))
    });
    FaceRecord::new(img, lm, identity.label.clone(), source_id).expect("landmarks inside the canvas")
}

/// Deterministic dataset of `identities x sessions` faces.
///
/// Identity labels are `<prefix><nnnn>`; source ids are
/// `<prefix>-<nnnn>-<session>`, so two datasets with different prefixes never
/// share a person or an image.
pub fn dataset(prefix: &str, identities: usize, sessions: usize, size: u32, seed: u64) -> Vec<FaceRecord> {
    let mut out = Vec::with_capacity(identities * sessions);
    for i in 0..identities {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let identity = Identity::sample(format!("{prefix}{i:04}"), &mut rng);
        for s in 0..sessions {
            let session = Session::sample(&mut rng);
            out.push(render(&identity, &session, size, &format!("{prefix}-{i:04}-{s}")));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_is_deterministic_and_labelled() {
        let a = dataset("A", 3, 2, 64, 7);
        let b = dataset("A", 3, 2, 64, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert_eq!(a[3].identity, "A0001");
        assert_eq!(a[3].source_id, "A-0001-1");
        assert_ne!(a[0].image(), a[1].image());
    }

    #[test]
    fn landmarks_stay_inside_at_several_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for size in [48u32, 64, 128] {
            for _ in 0..40 {
                let id = Identity::sample("x", &mut rng);
                let s = Session::sample(&mut rng);
                let rec = render(&id, &s, size, "x");
                assert!(rec.facial_polygon().unwrap().pixel_count() > (size * size / 6) as usize);
            }
        }
    }

    #[test]
    fn template_hull_contains_every_landmark() {
        let lm = template_landmarks();
        assert_eq!(lm.len(), LANDMARK_COUNT);
        let hull = crate::geometry::convex_hull(&lm);
        assert!(hull.len() <= LANDMARK_COUNT);
        let n = hull.len();
        for p in &lm {
            for i in 0..n {
                assert!(crate::geometry::orient(hull[i], hull[(i + 1) % n], *p) >= -1e-12);
            }
        }
    }
}
