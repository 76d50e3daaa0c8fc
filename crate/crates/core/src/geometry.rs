//! Planar geometry: points, similarity transforms and the facial polygon.
//!
//! Pixel `(x, y)` is identified with the lattice point `(x, y)`; a pixel is
//! inside a polygon when that point lies strictly inside it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }
}

impl From<[f64; 2]> for Point2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Point2 { x, y }
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

/// z-component of `(b - a) x (c - a)`; positive when `a, b, c` turn
/// counter-clockwise in a y-up frame.
pub fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Rotation + uniform scale + translation: `p -> z·p + t` with `z = a + ib`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity {
    pub a: f64,
    pub b: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Similarity {
    pub const IDENTITY: Similarity = Similarity {
        a: 1.0,
        b: 0.0,
        tx: 0.0,
        ty: 0.0,
    };

    /// Least-squares similarity taking each `src[i]` onto `dst[i]`.
    ///
    /// Returns `None` when fewer than two pairs are given or the source points
    /// all coincide.
    pub fn fit(src: &[Point2], dst: &[Point2]) -> Option<Similarity> {
        if src.len() < 2 || src.len() != dst.len() {
            return None;
        }
        let n = src.len() as f64;
        let cs = src.iter().fold(Point2::new(0.0, 0.0), |acc, &p| acc.add(p)).scale(1.0 / n);
        let cd = dst.iter().fold(Point2::new(0.0, 0.0), |acc, &p| acc.add(p)).scale(1.0 / n);
        let (mut dot, mut cross, mut energy) = (0.0, 0.0, 0.0);
        for (&p, &q) in src.iter().zip(dst) {
            let (p, q) = (p.sub(cs), q.sub(cd));
            dot += p.x * q.x + p.y * q.y;
            cross += p.x * q.y - p.y * q.x;
            energy += p.norm_sq();
        }
        if energy <= f64::EPSILON {
            return None;
        }
        let (a, b) = (dot / energy, cross / energy);
        if a * a + b * b <= f64::EPSILON {
            return None;
        }
        Some(Similarity {
            a,
            b,
            tx: cd.x - (a * cs.x - b * cs.y),
            ty: cd.y - (b * cs.x + a * cs.y),
        })
    }

    pub fn apply(&self, p: Point2) -> Point2 {
        Point2::new(
            self.a * p.x - self.b * p.y + self.tx,
            self.b * p.x + self.a * p.y + self.ty,
        )
    }

    pub fn scale_factor(&self) -> f64 {
        (self.a * self.a + self.b * self.b).sqrt()
    }

    pub fn inverse(&self) -> Similarity {
        // z^-1 = conj(z) / |z|^2
        let d = self.a * self.a + self.b * self.b;
        let (a, b) = (self.a / d, -self.b / d);
        Similarity {
            a,
            b,
            tx: -(a * self.tx - b * self.ty),
            ty: -(b * self.tx + a * self.ty),
        }
    }
}

/// Convex hull by monotone chain, counter-clockwise (y-up sense), with
/// collinear points dropped.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|p, q| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Horizontal run of interior pixels on one row, `x0..=x1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span {
    pub y: i64,
    pub x0: i64,
    pub x1: i64,
}

impl Span {
    pub fn len(&self) -> usize {
        (self.x1 - self.x0 + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.x1 < self.x0
    }
}

/// Simple polygon with its strict-interior pixel count.
#[derive(Clone, Debug, PartialEq)]
pub struct FacePolygon {
    vertices: Vec<Point2>,
    pixel_count: usize,
}

impl FacePolygon {
    /// Wraps a simple polygon, rasterising it once to count interior pixels.
    pub fn new(vertices: Vec<Point2>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::DegenerateLandmarks(format!(
                "polygon needs 3 vertices, got {}",
                vertices.len()
            )));
        }
        let mut poly = FacePolygon {
            vertices,
            pixel_count: 0,
        };
        poly.pixel_count = poly.spans().iter().map(Span::len).sum();
        if poly.pixel_count == 0 {
            return Err(Error::DegenerateLandmarks(
                "polygon contains no pixel centres".into(),
            ));
        }
        Ok(poly)
    }

    /// Convex hull of `points`.
    pub fn hull_of(points: &[Point2]) -> Result<Self> {
        let hull = convex_hull(points);
        if hull.len() < 3 {
            return Err(Error::DegenerateLandmarks(format!(
                "landmarks span {} distinct hull vertices",
                hull.len()
            )));
        }
        Self::new(hull)
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn pixel_count(&self) -> usize {
        self.pixel_count
    }

    /// Integer bounding box `(x_min, y_min, x_max, y_max)` of the vertices.
    pub fn bounds(&self) -> (i64, i64, i64, i64) {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in &self.vertices {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        (x0.floor() as i64, y0.floor() as i64, x1.ceil() as i64, y1.ceil() as i64)
    }

    /// Interior pixels as row spans, top to bottom.
    ///
    /// Scanline fill with the even-odd rule and half-open edge crossings;
    /// lattice points lying on an edge are excluded.
    pub fn spans(&self) -> Vec<Span> {
        let (_, y_min, _, y_max) = self.bounds();
        let n = self.vertices.len();
        let mut spans = Vec::new();
        let mut crossings = Vec::with_capacity(n);
        for y in y_min..=y_max {
            let yf = y as f64;
            crossings.clear();
            for i in 0..n {
                let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
                if (a.y <= yf && yf < b.y) || (b.y <= yf && yf < a.y) {
                    crossings.push(a.x + (yf - a.y) * (b.x - a.x) / (b.y - a.y));
                }
            }
            crossings.sort_by(f64::total_cmp);
            for pair in crossings.chunks_exact(2) {
                let (left, right) = (pair[0], pair[1]);
                // strictly between the crossings
                let mut x0 = left.floor() as i64 + 1;
                let mut x1 = right.ceil() as i64 - 1;
                while x0 <= x1 && self.on_boundary(Point2::new(x0 as f64, yf)) {
                    x0 += 1;
                }
                while x1 >= x0 && self.on_boundary(Point2::new(x1 as f64, yf)) {
                    x1 -= 1;
                }
                if x0 <= x1 {
                    spans.push(Span { y, x0, x1 });
                }
            }
        }
        // interior points of a horizontal edge are on the boundary too
        self.strip_horizontal_edges(spans)
    }

    fn strip_horizontal_edges(&self, spans: Vec<Span>) -> Vec<Span> {
        let n = self.vertices.len();
        let horizontal: Vec<(f64, f64, f64)> = (0..n)
            .filter_map(|i| {
                let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
                (a.y == b.y).then(|| (a.y, a.x.min(b.x), a.x.max(b.x)))
            })
            .collect();
        if horizontal.is_empty() {
            return spans;
        }
        let mut out = Vec::with_capacity(spans.len());
        for span in spans {
            let yf = span.y as f64;
            let mut cur: Option<Span> = None;
            for x in span.x0..=span.x1 {
                let xf = x as f64;
                let blocked = horizontal
                    .iter()
                    .any(|&(hy, lo, hi)| hy == yf && lo <= xf && xf <= hi);
                match (&mut cur, blocked) {
                    (Some(s), false) => s.x1 = x,
                    (None, false) => cur = Some(Span { y: span.y, x0: x, x1: x }),
                    (Some(_), true) => out.push(cur.take().expect("open span")),
                    (None, true) => {}
                }
            }
            out.extend(cur);
        }
        out
    }

    fn on_boundary(&self, p: Point2) -> bool {
        let n = self.vertices.len();
        (0..n).any(|i| {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            orient(a, b, p) == 0.0
                && p.x >= a.x.min(b.x)
                && p.x <= a.x.max(b.x)
                && p.y >= a.y.min(b.y)
                && p.y <= a.y.max(b.y)
        })
    }

    /// Row-major boolean raster of the interior clipped to `width x height`.
    pub fn interior_mask(&self, width: u32, height: u32) -> Vec<bool> {
        let mut mask = vec![false; (width as usize) * (height as usize)];
        for s in self.spans() {
            if s.y < 0 || s.y >= height as i64 {
                continue;
            }
            let x0 = s.x0.max(0);
            let x1 = s.x1.min(width as i64 - 1);
            for x in x0..=x1 {
                mask[s.y as usize * width as usize + x as usize] = true;
            }
        }
        mask
    }

    /// Interior pixel coordinates, row-major.
    pub fn interior_pixels(&self) -> Vec<(i64, i64)> {
        self.spans()
            .into_iter()
            .flat_map(|s| (s.x0..=s.x1).map(move |x| (x, s.y)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(side: f64) -> Vec<Point2> {
        vec![
            Point2::new(0.0, 0.0),
            Point2::new(side, 0.0),
            Point2::new(side, side),
            Point2::new(0.0, side),
        ]
    }

    /// Strict-interior count by testing every lattice point against every
    /// edge of a convex counter-clockwise polygon.
    fn brute_force_count(poly: &[Point2]) -> usize {
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for p in poly {
            x0 = x0.min(p.x);
            y0 = y0.min(p.y);
            x1 = x1.max(p.x);
            y1 = y1.max(p.y);
        }
        let mut count = 0;
        for y in (y0.floor() as i64)..=(y1.ceil() as i64) {
            for x in (x0.floor() as i64)..=(x1.ceil() as i64) {
                let p = Point2::new(x as f64, y as f64);
                let n = poly.len();
                if (0..n).all(|i| orient(poly[i], poly[(i + 1) % n], p) > 0.0) {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn square_of_side_ten_has_81_interior_pixels() {
        let poly = FacePolygon::hull_of(&square(10.0)).unwrap();
        assert_eq!(poly.vertices().len(), 4);
        assert_eq!(poly.pixel_count(), 81);
        assert_eq!(brute_force_count(poly.vertices()), 81);
    }

    #[test]
    fn hull_drops_interior_and_collinear_points() {
        let mut pts = square(4.0);
        pts.push(Point2::new(2.0, 0.0));
        pts.push(Point2::new(2.0, 2.0));
        pts.push(Point2::new(1.0, 3.0));
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        let n = hull.len();
        for i in 0..n {
            assert!(orient(hull[i], hull[(i + 1) % n], hull[(i + 2) % n]) > 0.0);
        }
    }

    #[test]
    fn identical_points_are_degenerate() {
        let pts = vec![Point2::new(3.0, 3.0); 68];
        assert!(matches!(FacePolygon::hull_of(&pts), Err(Error::DegenerateLandmarks(_))));
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pts: Vec<_> = (0..10).map(|i| Point2::new(i as f64, 2.0 * i as f64)).collect();
        assert!(matches!(FacePolygon::hull_of(&pts), Err(Error::DegenerateLandmarks(_))));
    }

    #[test]
    fn triangle_with_slanted_edges_matches_brute_force() {
        let tri = vec![
            Point2::new(1.0, 1.0),
            Point2::new(13.0, 4.0),
            Point2::new(5.0, 11.0),
        ];
        let poly = FacePolygon::hull_of(&tri).unwrap();
        assert_eq!(poly.pixel_count(), brute_force_count(poly.vertices()));
    }

    #[test]
    fn similarity_fit_recovers_known_transform() {
        let truth = Similarity {
            a: 1.5 * 0.3f64.cos(),
            b: 1.5 * 0.3f64.sin(),
            tx: 4.0,
            ty: -2.0,
        };
        let src = vec![Point2::new(0.0, 0.0), Point2::new(10.0, 0.0), Point2::new(3.0, 7.0)];
        let dst: Vec<_> = src.iter().map(|&p| truth.apply(p)).collect();
        let fit = Similarity::fit(&src, &dst).unwrap();
        for (&p, &q) in src.iter().zip(&dst) {
            let r = fit.apply(p);
            assert!((r.x - q.x).abs() < 1e-9 && (r.y - q.y).abs() < 1e-9);
        }
        let back = fit.inverse().apply(fit.apply(Point2::new(2.5, -1.0)));
        assert!((back.x - 2.5).abs() < 1e-12 && (back.y + 1.0).abs() < 1e-12);
    }

    #[test]
    fn similarity_fit_rejects_coincident_sources() {
        let src = vec![Point2::new(1.0, 1.0); 3];
        let dst = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), Point2::new(0.0, 1.0)];
        assert!(Similarity::fit(&src, &dst).is_none());
    }

    proptest::proptest! {
        #[test]
        fn rasterised_hull_matches_brute_force(
            pts in proptest::collection::vec((0.0f64..40.0, 0.0f64..40.0), 3..30)
        ) {
            let pts: Vec<_> = pts.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
            if let Ok(poly) = FacePolygon::hull_of(&pts) {
                proptest::prop_assert_eq!(poly.pixel_count(), brute_force_count(poly.vertices()));
            }
        }

        #[test]
        fn lattice_hulls_match_brute_force(
            pts in proptest::collection::vec((0i32..20, 0i32..20), 3..12)
        ) {
            // integer vertices put many lattice points exactly on edges
            let pts: Vec<_> = pts.into_iter().map(|(x, y)| Point2::new(x as f64, y as f64)).collect();
            if let Ok(poly) = FacePolygon::hull_of(&pts) {
                proptest::prop_assert_eq!(poly.pixel_count(), brute_force_count(poly.vertices()));
            }
        }
    }
}
