//! Pixel-centre rasterisation of filled shapes.
//!
//! Each routine calls `plot(x, y)` for every pixel of a `w x h` grid whose
//! centre `(x, y)` lies inside the shape (boundary included).

use crate::geometry::Point2;

/// Even-odd fill of an arbitrary closed polygon.
pub fn polygon(points: &[Point2], w: u32, h: u32, mut plot: impl FnMut(u32, u32)) {
    if points.len() < 3 {
        return;
    }
    let (ymin, ymax) = points
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
    let y0 = ymin.ceil().max(0.0) as i64;
    let y1 = ymax.floor().min(h as f64 - 1.0) as i64;
    let n = points.len();
    let mut xs = Vec::with_capacity(n);
    for y in y0..=y1 {
        let yf = y as f64;
        xs.clear();
        for i in 0..n {
            let (a, b) = (points[i], points[(i + 1) % n]);
            if (a.y <= yf && yf < b.y) || (b.y <= yf && yf < a.y) {
                xs.push(a.x + (yf - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let x0 = pair[0].ceil().max(0.0) as i64;
            let x1 = pair[1].floor().min(w as f64 - 1.0) as i64;
            for x in x0..=x1 {
                plot(x as u32, y as u32);
            }
        }
    }
}

/// Rotated ellipse with centre `c`, radii `(rx, ry)` and rotation `angle`
/// (radians).
pub fn ellipse(c: Point2, rx: f64, ry: f64, angle: f64, w: u32, h: u32, mut plot: impl FnMut(u32, u32)) {
    if rx <= 0.0 || ry <= 0.0 {
        return;
    }
    let r = rx.max(ry);
    let (cos, sin) = (angle.cos(), angle.sin());
    let x0 = (c.x - r).ceil().max(0.0) as i64;
    let x1 = (c.x + r).floor().min(w as f64 - 1.0) as i64;
    let y0 = (c.y - r).ceil().max(0.0) as i64;
    let y1 = (c.y + r).floor().min(h as f64 - 1.0) as i64;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 - c.x, y as f64 - c.y);
            let u = (dx * cos + dy * sin) / rx;
            let v = (-dx * sin + dy * cos) / ry;
            if u * u + v * v <= 1.0 {
                plot(x as u32, y as u32);
            }
        }
    }
}

/// Pixels within `radius` of the polyline through `points`.
pub fn stroke(points: &[Point2], radius: f64, w: u32, h: u32, mut plot: impl FnMut(u32, u32)) {
    if points.is_empty() {
        return;
    }
    let (mut xmin, mut ymin, mut xmax, mut ymax) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in points {
        xmin = xmin.min(p.x);
        ymin = ymin.min(p.y);
        xmax = xmax.max(p.x);
        ymax = ymax.max(p.y);
    }
    let x0 = (xmin - radius).ceil().max(0.0) as i64;
    let x1 = (xmax + radius).floor().min(w as f64 - 1.0) as i64;
    let y0 = (ymin - radius).ceil().max(0.0) as i64;
    let y1 = (ymax + radius).floor().min(h as f64 - 1.0) as i64;
    let r2 = radius * radius;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let p = Point2::new(x as f64, y as f64);
            let near = if points.len() == 1 {
                p.sub(points[0]).norm_sq() <= r2
            } else {
                points.windows(2).any(|s| segment_dist_sq(p, s[0], s[1]) <= r2)
            };
            if near {
                plot(x as u32, y as u32);
            }
        }
    }
}

fn segment_dist_sq(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b.sub(a);
    let len = ab.norm_sq();
    let t = if len == 0.0 {
        0.0
    } else {
        ((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len
    };
    let t = t.clamp(0.0, 1.0);
    p.sub(a.add(ab.scale(t))).norm_sq()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_fill_includes_boundary_centres() {
        let sq = [
            Point2::new(1.0, 1.0),
            Point2::new(4.0, 1.0),
            Point2::new(4.0, 4.0),
            Point2::new(1.0, 4.0),
        ];
        let mut n = 0;
        polygon(&sq, 10, 10, |_, _| n += 1);
        // rows 1..=3 (half-open in y), columns 1..=4
        assert_eq!(n, 12);
    }

    #[test]
    fn ellipse_and_stroke_stay_in_bounds() {
        let mut hits = Vec::new();
        ellipse(Point2::new(0.0, 0.0), 5.0, 3.0, 0.4, 4, 4, |x, y| hits.push((x, y)));
        stroke(&[Point2::new(-3.0, 2.0), Point2::new(9.0, 2.0)], 1.0, 4, 4, |x, y| hits.push((x, y)));
        assert!(hits.iter().all(|&(x, y)| x < 4 && y < 4));
        assert!(hits.contains(&(0, 0)));
        assert!(hits.contains(&(3, 2)));
    }
}
