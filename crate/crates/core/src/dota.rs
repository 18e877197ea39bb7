//! DOTA annotation ingestion, min-area box fitting, object-size statistics,
//! and overlapping-window tile planning with label transfer.
//!
//! Annotation files carry one object per line (8 quad coordinates, category
//! token, difficulty integer) with optional `imagesource:`/`gsd:` headers.

use crate::geom::{convex_clip, normalize_angle, polygon_area, ConvexPolygon, OBox};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// One labeled quadrilateral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    /// x1 y1 x2 y2 x3 y3 x4 y4, counter-clockwise after normalization.
    pub quad: [f64; 8],
    pub category: String,
    pub difficulty: i32,
}

impl Annotation {
    pub fn vertices(&self) -> [[f64; 2]; 4] {
        [
            [self.quad[0], self.quad[1]],
            [self.quad[2], self.quad[3]],
            [self.quad[4], self.quad[5]],
            [self.quad[6], self.quad[7]],
        ]
    }

    pub fn quad_area(&self) -> f64 {
        0.5 * self.signed_area().abs()
    }

    fn signed_area(&self) -> f64 {
        let v = self.vertices();
        let mut acc = 0.0;
        for i in 0..4 {
            let a = v[i];
            let b = v[(i + 1) % 4];
            acc += a[0] * b[1] - b[0] * a[1];
        }
        acc
    }

    /// Reverse vertex order (keeping the first vertex first) when the quad
    /// winds clockwise.
    fn normalize_orientation(&mut self) {
        if self.signed_area() < 0.0 {
            let v = self.vertices();
            let reordered = [v[0], v[3], v[2], v[1]];
            for (i, p) in reordered.iter().enumerate() {
                self.quad[2 * i] = p[0];
                self.quad[2 * i + 1] = p[1];
            }
        }
    }
}

/// Parse a DOTA annotation file. Header lines (`imagesource:`, `gsd:`) are
/// skipped; any other malformed line is an error carrying its line number.
pub fn parse_annotations(text: &str) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with("imagesource") || trimmed.starts_with("gsd") {
            continue;
        }
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() != 10 {
            return Err(Error::AnnotationParse {
                line,
                message: format!("expected 10 fields, got {}", tokens.len()),
            });
        }
        let mut quad = [0.0; 8];
        for (i, tok) in tokens[..8].iter().enumerate() {
            quad[i] = tok.parse::<f64>().map_err(|_| Error::AnnotationParse {
                line,
                message: format!("non-numeric coordinate {tok:?}"),
            })?;
        }
        let difficulty = tokens[9]
            .parse::<i32>()
            .map_err(|_| Error::AnnotationParse {
                line,
                message: format!("non-integer difficulty {:?}", tokens[9]),
            })?;
        let mut anno = Annotation {
            quad,
            category: tokens[8].to_string(),
            difficulty,
        };
        anno.normalize_orientation();
        out.push(anno);
    }
    Ok(out)
}

/// Serialize annotations back to the line format. Coordinates use the
/// shortest round-trip float formatting, so parse -> serialize -> parse is
/// the identity.
pub fn serialize_annotations(annos: &[Annotation]) -> String {
    let mut out = String::new();
    for a in annos {
        for c in a.quad {
            out.push_str(&format!("{c} "));
        }
        out.push_str(&format!("{} {}\n", a.category, a.difficulty));
    }
    out
}

/// Andrew's monotone chain; returns the hull counter-clockwise.
fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup_by(|a, b| (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Minimum-area enclosing rotated rectangle of the quad (rotating calipers
/// over its convex hull). Degenerate quads yield zero-extent boxes.
pub fn quad_to_obox(a: &Annotation) -> OBox {
    let hull = convex_hull(&a.vertices());
    match hull.len() {
        0 => OBox::axis_aligned(0.0, 0.0, 0.0, 0.0),
        1 => OBox::axis_aligned(hull[0][0], hull[0][1], 0.0, 0.0),
        2 => {
            let (p, q) = (hull[0], hull[1]);
            let dx = q[0] - p[0];
            let dy = q[1] - p[1];
            OBox::new(
                0.5 * (p[0] + q[0]),
                0.5 * (p[1] + q[1]),
                (dx * dx + dy * dy).sqrt(),
                0.0,
                normalize_angle(dy.atan2(dx)),
            )
        }
        _ => min_area_rect(&hull),
    }
}

fn min_area_rect(hull: &[[f64; 2]]) -> OBox {
    let mut best_area = f64::INFINITY;
    let mut best: Option<OBox> = None;
    for e in 0..hull.len() {
        let p = hull[e];
        let q = hull[(e + 1) % hull.len()];
        let phi = (q[1] - p[1]).atan2(q[0] - p[0]);
        let (sin, cos) = phi.sin_cos();
        // Rotate the hull by -phi; the candidate box is the AABB there.
        let mut x0 = f64::INFINITY;
        let mut x1 = f64::NEG_INFINITY;
        let mut y0 = f64::INFINITY;
        let mut y1 = f64::NEG_INFINITY;
        for &[x, y] in hull {
            let rx = x * cos + y * sin;
            let ry = -x * sin + y * cos;
            x0 = x0.min(rx);
            x1 = x1.max(rx);
            y0 = y0.min(ry);
            y1 = y1.max(ry);
        }
        let area = (x1 - x0) * (y1 - y0);
        if area < best_area {
            best_area = area;
            let mx = 0.5 * (x0 + x1);
            let my = 0.5 * (y0 + y1);
            best = Some(OBox::new(
                mx * cos - my * sin,
                mx * sin + my * cos,
                x1 - x0,
                y1 - y0,
                phi,
            ));
        }
    }
    best.unwrap_or(OBox::axis_aligned(0.0, 0.0, 0.0, 0.0))
}

/// One crop window of a tiling plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileWindow {
    pub x_offset: usize,
    pub y_offset: usize,
    pub width: usize,
    pub height: usize,
}

fn axis_offsets(image: usize, patch: usize, step: usize) -> Vec<usize> {
    if image <= patch {
        return vec![0];
    }
    let mut offsets = Vec::new();
    let mut off = 0usize;
    while off + patch <= image {
        offsets.push(off);
        off += step;
    }
    // Clamp a final window to end exactly at the border.
    let last = image - patch;
    if *offsets.last().unwrap() != last {
        offsets.push(last);
    }
    offsets
}

/// Overlapping windows covering the full image. Windows advance by
/// `patch - overlap`; the last window per axis is clamped to end exactly at
/// the image border. Images smaller than the patch get a single full-image
/// window.
pub fn tile_plan(
    image_w: usize,
    image_h: usize,
    patch: usize,
    overlap: usize,
) -> Result<Vec<TileWindow>> {
    if patch == 0 || patch <= overlap {
        return Err(Error::InvalidCostConfig(format!(
            "patch {patch} must exceed overlap {overlap}"
        )));
    }
    let step = patch - overlap;
    let xs = axis_offsets(image_w, patch, step);
    let ys = axis_offsets(image_h, patch, step);
    let mut windows = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            windows.push(TileWindow {
                x_offset: x,
                y_offset: y,
                width: patch.min(image_w),
                height: patch.min(image_h),
            });
        }
    }
    Ok(windows)
}

/// Annotations retained by a window: quads whose overlap with the window is
/// at least `min_area_fraction` of the quad area, translated into window
/// coordinates. Quads are kept whole, never truncated.
pub fn clip_annotations(
    annos: &[Annotation],
    window: &TileWindow,
    min_area_fraction: f64,
) -> Vec<Annotation> {
    let wx0 = window.x_offset as f64;
    let wy0 = window.y_offset as f64;
    let win_poly = ConvexPolygon::from_ccw(vec![
        [wx0, wy0],
        [wx0 + window.width as f64, wy0],
        [wx0 + window.width as f64, wy0 + window.height as f64],
        [wx0, wy0 + window.height as f64],
    ]);
    let mut kept = Vec::new();
    for a in annos {
        let quad_area = a.quad_area();
        if quad_area <= 0.0 {
            continue;
        }
        let quad_poly = ConvexPolygon::from_ccw(a.vertices().to_vec());
        let inter = polygon_area(&convex_clip(&quad_poly, &win_poly));
        if inter >= min_area_fraction * quad_area {
            let mut shifted = a.clone();
            for i in 0..4 {
                shifted.quad[2 * i] -= wx0;
                shifted.quad[2 * i + 1] -= wy0;
            }
            kept.push(shifted);
        }
    }
    kept
}

/// Histogram of sqrt(min-area-rect area) per annotation over half-open bins
/// `[edges[i], edges[i+1])`. Values outside the edge range are not counted.
pub fn size_histogram(annos: &[Annotation], bin_edges: &[f64]) -> Vec<usize> {
    if bin_edges.len() < 2 {
        return Vec::new();
    }
    let mut counts = vec![0usize; bin_edges.len() - 1];
    for a in annos {
        let obox = quad_to_obox(a);
        let size = obox.area().sqrt();
        for b in 0..counts.len() {
            if size >= bin_edges[b] && size < bin_edges[b + 1] {
                counts[b] += 1;
                break;
            }
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn parse_basic_line() {
        let annos = parse_annotations("0 0 10 0 10 10 0 10 ship 0\n").unwrap();
        assert_eq!(annos.len(), 1);
        assert_eq!(annos[0].category, "ship");
        assert_eq!(annos[0].difficulty, 0);
        assert_close(annos[0].quad_area(), 100.0, 1e-12);
    }

    #[test]
    fn parse_skips_headers() {
        let text = "imagesource:GoogleEarth\ngsd:0.146343590398\n1 1 5 1 5 5 1 5 plane 1\n";
        let annos = parse_annotations(text).unwrap();
        assert_eq!(annos.len(), 1);
        assert_eq!(annos[0].category, "plane");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_annotations("0 0 10 0 10 10 0 10 ship\n").unwrap_err();
        assert!(matches!(err, Error::AnnotationParse { line: 1, .. }));
        let err = parse_annotations("gsd:0.5\n0 0 x 0 10 10 0 10 ship 0\n").unwrap_err();
        match err {
            Error::AnnotationParse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("non-numeric"));
            }
            other => panic!("unexpected error {other:?}"),
        }
        let err = parse_annotations("0 0 10 0 10 10 0 10 ship two\n").unwrap_err();
        assert!(matches!(err, Error::AnnotationParse { line: 1, .. }));
    }

    #[test]
    fn parse_normalizes_to_ccw() {
        // Clockwise input (y-up shoelace negative) gets reversed.
        let annos = parse_annotations("0 0 0 10 10 10 10 0 ship 0\n").unwrap();
        assert!(annos[0].signed_area() > 0.0);
        // First vertex stays first.
        assert_eq!(annos[0].quad[0], 0.0);
        assert_eq!(annos[0].quad[1], 0.0);
    }

    #[test]
    fn round_trip_identity() {
        let mut text = String::from("imagesource:fixture\ngsd:0.5\n");
        for i in 0..50 {
            let x = i as f64 * 3.25;
            let y = (i % 7) as f64 * 2.5;
            let s = 4.0 + (i % 5) as f64;
            text.push_str(&format!(
                "{} {} {} {} {} {} {} {} cat{} {}\n",
                x,
                y,
                x + s,
                y,
                x + s,
                y + s,
                x,
                y + s,
                i % 3,
                i % 2
            ));
        }
        let parsed = parse_annotations(&text).unwrap();
        assert_eq!(parsed.len(), 50);
        let serialized = serialize_annotations(&parsed);
        let reparsed = parse_annotations(&serialized).unwrap();
        assert_eq!(parsed, reparsed);
    }

    fn square_anno(cx: f64, cy: f64, side: f64, rot: f64) -> Annotation {
        let h = side / 2.0;
        let (sin, cos) = rot.sin_cos();
        let corners = [[-h, -h], [h, -h], [h, h], [-h, h]];
        let mut quad = [0.0; 8];
        for (i, [x, y]) in corners.iter().enumerate() {
            quad[2 * i] = cx + x * cos - y * sin;
            quad[2 * i + 1] = cy + x * sin + y * cos;
        }
        Annotation {
            quad,
            category: "unit".into(),
            difficulty: 0,
        }
    }

    #[test]
    fn quad_to_obox_axis_aligned() {
        let obox = quad_to_obox(&square_anno(5.0, 5.0, 10.0, 0.0));
        assert_close(obox.cx, 5.0, 1e-9);
        assert_close(obox.cy, 5.0, 1e-9);
        assert_close(obox.w, 10.0, 1e-9);
        assert_close(obox.h, 10.0, 1e-9);
        assert_close(obox.theta, 0.0, 1e-9);
    }

    #[test]
    fn quad_to_obox_rotated_square() {
        let rot = 30.0_f64.to_radians();
        let obox = quad_to_obox(&square_anno(5.0, 5.0, 10.0, rot));
        assert_close(obox.w, 10.0, 1e-6);
        assert_close(obox.h, 10.0, 1e-6);
        // Squares repeat every quarter turn; compare theta mod pi/2.
        let residue = (obox.theta - rot).rem_euclid(PI / 2.0);
        assert!(residue.abs() < 1e-6 || (residue - PI / 2.0).abs() < 1e-6);
    }

    #[test]
    fn quad_to_obox_degenerate() {
        let collinear = Annotation {
            quad: [0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0],
            category: "line".into(),
            difficulty: 0,
        };
        let obox = quad_to_obox(&collinear);
        assert_close(obox.area(), 0.0, 1e-12);
    }

    #[test]
    fn quad_to_obox_encloses_quad() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(51);
        for _ in 0..100 {
            let mut quad = [0.0; 8];
            for v in quad.iter_mut() {
                *v = rng.gen_range(0.0..100.0);
            }
            let mut anno = Annotation {
                quad,
                category: "r".into(),
                difficulty: 0,
            };
            anno.normalize_orientation();
            let obox = quad_to_obox(&anno);
            assert!(obox.area() + 1e-9 >= anno.quad_area());
        }
        // Exact for rectangles.
        let rect = square_anno(10.0, 20.0, 8.0, 0.7);
        let obox = quad_to_obox(&rect);
        assert_close(obox.area(), rect.quad_area(), 1e-6);
    }

    #[test]
    fn tile_plan_reference_case() {
        let windows = tile_plan(4000, 4000, 1024, 200).unwrap();
        let xs: Vec<usize> = windows
            .iter()
            .filter(|w| w.y_offset == 0)
            .map(|w| w.x_offset)
            .collect();
        assert_eq!(xs, vec![0, 824, 1648, 2472, 2976]);
        assert_eq!(windows.len(), 25);
    }

    #[test]
    fn tile_plan_small_images() {
        let exact = tile_plan(1024, 1024, 1024, 200).unwrap();
        assert_eq!(exact.len(), 1);
        assert_eq!(exact[0].width, 1024);

        let small = tile_plan(800, 800, 1024, 200).unwrap();
        assert_eq!(small.len(), 1);
        assert_eq!((small[0].width, small[0].height), (800, 800));

        assert!(tile_plan(800, 800, 200, 200).is_err());
        assert!(tile_plan(800, 800, 100, 200).is_err());
    }

    #[test]
    fn tile_plan_covers_and_overlaps() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(52);
        for _ in 0..100 {
            let w = rng.gen_range(100..5000);
            let h = rng.gen_range(100..5000);
            let windows = tile_plan(w, h, 1024, 200).unwrap();
            // Interval coverage per axis.
            let mut xs: Vec<(usize, usize)> = windows
                .iter()
                .map(|t| (t.x_offset, t.x_offset + t.width))
                .collect();
            xs.sort_unstable();
            xs.dedup();
            let mut reach = 0usize;
            for (a, b) in xs {
                assert!(a <= reach, "gap before {a} in width {w}");
                reach = reach.max(b);
            }
            assert!(reach >= w.min(reach)); // windows may exceed a small image
            assert!(reach >= w || windows[0].width >= w);
            let mut ys: Vec<(usize, usize)> = windows
                .iter()
                .map(|t| (t.y_offset, t.y_offset + t.height))
                .collect();
            ys.sort_unstable();
            ys.dedup();
            let mut reach = 0usize;
            for (a, b) in ys {
                assert!(a <= reach);
                reach = reach.max(b);
            }
            assert!(reach >= h || windows[0].height >= h);

            // Adjacent offsets overlap by >= overlap, except clamped tails.
            let mut offs: Vec<usize> = windows.iter().map(|t| t.x_offset).collect();
            offs.sort_unstable();
            offs.dedup();
            for pair in offs.windows(2) {
                let advance = pair[1] - pair[0];
                assert!(advance <= 1024 - 200, "advance {advance} loses overlap");
            }
        }
    }

    #[test]
    fn clip_annotations_threshold() {
        let window = TileWindow {
            x_offset: 100,
            y_offset: 100,
            width: 100,
            height: 100,
        };
        let inside = square_anno(150.0, 150.0, 20.0, 0.0);
        let outside = square_anno(500.0, 500.0, 20.0, 0.0);
        // Exactly half inside: spans x 90..110 at the window's left edge.
        let half = square_anno(100.0, 150.0, 20.0, 0.0);

        let kept = clip_annotations(&[inside.clone(), outside], &window, 0.5);
        assert_eq!(kept.len(), 1);
        // Translated into window coordinates.
        assert_close(kept[0].quad[0], inside.quad[0] - 100.0, 1e-12);
        assert_close(kept[0].quad[1], inside.quad[1] - 100.0, 1e-12);

        let at_forty = clip_annotations(std::slice::from_ref(&half), &window, 0.4);
        assert_eq!(at_forty.len(), 1);
        let at_sixty = clip_annotations(&[half], &window, 0.6);
        assert_eq!(at_sixty.len(), 0);
    }

    #[test]
    fn size_histogram_binning() {
        let edges = [8.0, 16.0, 32.0];
        let one = [square_anno(0.0, 0.0, 10.0, 0.0)];
        assert_eq!(size_histogram(&one, &edges), vec![1, 0]);
        assert_eq!(size_histogram(&[], &edges), vec![0, 0]);

        // Reference loop over a mixed fixture.
        let mut annos = Vec::new();
        for i in 0..100 {
            let side = 4.0 + (i % 40) as f64;
            annos.push(square_anno(i as f64, i as f64, side, 0.1 * i as f64));
        }
        let got = size_histogram(&annos, &edges);
        let mut want = vec![0usize; 2];
        for a in &annos {
            let s = quad_to_obox(a).area().sqrt();
            if (8.0..16.0).contains(&s) {
                want[0] += 1;
            } else if (16.0..32.0).contains(&s) {
                want[1] += 1;
            }
        }
        assert_eq!(got, want);
    }
}
