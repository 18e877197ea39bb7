//! Exact oriented-box geometry: conversions, areas, convex intersection, IoU,
//! plus a grid-sampling oracle used to cross-check the analytic IoU path.
//!
//! All operations are pure functions on immutable values.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Vertices closer than this are merged; the collinearity (signed-area) test
/// uses the same epsilon.
pub const CLIP_EPS: f64 = 1e-9;

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl HBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        debug_assert!(x_min <= x_max && y_min <= y_max);
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }
}

/// Oriented box: center, extents, rotation.
///
/// `theta` is kept in `[-pi/2, pi/2)`; `w` is the first extent regardless of
/// which of the two is longer, so decoding stays unambiguous.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
}

/// Wrap an angle into `[-pi/2, pi/2)` modulo pi (a rectangle is invariant
/// under half-turns).
pub fn normalize_angle(theta: f64) -> f64 {
    let mut t = theta % PI;
    if t < -FRAC_PI_2 {
        t += PI;
    } else if t >= FRAC_PI_2 {
        t -= PI;
    }
    t
}

impl OBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Self {
        debug_assert!(w >= 0.0 && h >= 0.0);
        Self {
            cx,
            cy,
            w,
            h,
            theta: normalize_angle(theta),
        }
    }

    /// Axis-aligned box (theta = 0).
    pub fn axis_aligned(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx, cy, w, h, 0.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Corners in counter-clockwise order, starting from the (+w/2, +h/2)
    /// corner in the box frame.
    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (sin, cos) = self.theta.sin_cos();
        let hw = 0.5 * self.w;
        let hh = 0.5 * self.h;
        let local = [[hw, hh], [-hw, hh], [-hw, -hh], [hw, -hh]];
        local.map(|[x, y]| [self.cx + x * cos - y * sin, self.cy + x * sin + y * cos])
    }

    /// Smallest axis-aligned box containing this box.
    pub fn enclosing_hbox(&self) -> HBox {
        let c = self.corners();
        let mut b = HBox {
            x_min: f64::INFINITY,
            y_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for [x, y] in c {
            b.x_min = b.x_min.min(x);
            b.y_min = b.y_min.min(y);
            b.x_max = b.x_max.max(x);
            b.y_max = b.y_max.max(y);
        }
        b
    }

    /// Point-in-box test in the box's own frame.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (sin, cos) = self.theta.sin_cos();
        let dx = x - self.cx;
        let dy = y - self.cy;
        let lx = dx * cos + dy * sin;
        let ly = -dx * sin + dy * cos;
        lx.abs() <= 0.5 * self.w && ly.abs() <= 0.5 * self.h
    }
}

/// Convex polygon with vertices in strict counter-clockwise order, or empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvexPolygon {
    verts: Vec<[f64; 2]>,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

impl ConvexPolygon {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Build from vertices already known to be convex and counter-clockwise
    /// (rectangle corners, clip outputs). No reordering is performed.
    pub fn from_ccw(verts: Vec<[f64; 2]>) -> Self {
        Self { verts }
    }

    /// Merge near-duplicate vertices and drop collinear middles.
    pub fn normalized(&self) -> Self {
        let n = self.verts.len();
        if n < 3 {
            return Self::empty();
        }
        // Merge consecutive vertices closer than CLIP_EPS (cyclically).
        let mut merged: Vec<[f64; 2]> = Vec::with_capacity(n);
        for &v in &self.verts {
            if let Some(&last) = merged.last() {
                if (v[0] - last[0]).abs() < CLIP_EPS && (v[1] - last[1]).abs() < CLIP_EPS {
                    continue;
                }
            }
            merged.push(v);
        }
        if merged.len() >= 2 {
            let first = merged[0];
            let last = *merged.last().unwrap();
            if (first[0] - last[0]).abs() < CLIP_EPS && (first[1] - last[1]).abs() < CLIP_EPS {
                merged.pop();
            }
        }
        if merged.len() < 3 {
            return Self::empty();
        }
        // Drop middles of collinear triples (signed area below CLIP_EPS).
        let m = merged.len();
        let mut keep: Vec<[f64; 2]> = Vec::with_capacity(m);
        for i in 0..m {
            let prev = merged[(i + m - 1) % m];
            let next = merged[(i + 1) % m];
            if cross(prev, merged[i], next).abs() >= CLIP_EPS {
                keep.push(merged[i]);
            }
        }
        if keep.len() < 3 {
            return Self::empty();
        }
        Self { verts: keep }
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.verts
    }

    pub fn is_empty(&self) -> bool {
        self.verts.len() < 3
    }
}

/// Four corners of `b` in counter-clockwise order. Degenerate boxes (zero
/// extent) yield a polygon of zero area.
pub fn obox_to_polygon(b: &OBox) -> ConvexPolygon {
    ConvexPolygon::from_ccw(b.corners().to_vec())
}

/// Shoelace area; 0 for polygons with fewer than 3 vertices.
pub fn polygon_area(p: &ConvexPolygon) -> f64 {
    let v = p.vertices();
    if v.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..v.len() {
        let a = v[i];
        let b = v[(i + 1) % v.len()];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    0.5 * acc
}

/// Intersection of two convex counter-clockwise polygons
/// (Sutherland-Hodgman: clip `subject` against each edge of `clip`).
pub fn convex_clip(subject: &ConvexPolygon, clip: &ConvexPolygon) -> ConvexPolygon {
    if subject.is_empty() || clip.is_empty() {
        return ConvexPolygon::empty();
    }
    let mut current = subject.vertices().to_vec();
    let cv = clip.vertices();
    for e in 0..cv.len() {
        if current.is_empty() {
            break;
        }
        let a = cv[e];
        let b = cv[(e + 1) % cv.len()];
        let mut next: Vec<[f64; 2]> = Vec::with_capacity(current.len() + 1);
        for i in 0..current.len() {
            let p = current[i];
            let q = current[(i + 1) % current.len()];
            let side_p = cross(a, b, p);
            let side_q = cross(a, b, q);
            let p_in = side_p >= 0.0;
            let q_in = side_q >= 0.0;
            if p_in {
                next.push(p);
            }
            if p_in != q_in {
                // Edge p->q crosses the clip line; side values have opposite
                // signs so the denominator is nonzero.
                let t = side_p / (side_p - side_q);
                next.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
        current = next;
    }
    ConvexPolygon::from_ccw(current).normalized()
}

/// Rotated-box IoU via polygon clipping. Returns 0 when the union has zero
/// area, so degenerate boxes are legal inputs.
///
/// Arguments are ordered canonically before clipping so that
/// `iou_obb(a, b)` and `iou_obb(b, a)` run the identical computation and
/// agree bit-for-bit.
pub fn iou_obb(a: &OBox, b: &OBox) -> f64 {
    let key = |x: &OBox| [x.cx, x.cy, x.w, x.h, x.theta];
    let (first, second) = if key(a)
        .iter()
        .zip(key(b).iter())
        .find_map(|(p, q)| match p.total_cmp(q) {
            std::cmp::Ordering::Equal => None,
            ord => Some(ord),
        })
        .unwrap_or(std::cmp::Ordering::Equal)
        == std::cmp::Ordering::Greater
    {
        (b, a)
    } else {
        (a, b)
    };
    let inter = polygon_area(&convex_clip(
        &obox_to_polygon(first),
        &obox_to_polygon(second),
    ));
    let union = first.area() + second.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Axis-aligned IoU in closed form.
pub fn iou_hbb(a: &HBox, b: &HBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Grid-sampling IoU estimate, independent of the clipping path.
///
/// The intersection area is estimated by point-in-box tests on a
/// `resolution` x `resolution` grid over the overlap of the two enclosing
/// boxes; the union comes from the exact rectangle areas. Resolutions below
/// 64 are rejected as too coarse to be an oracle.
pub fn iou_raster_oracle(a: &OBox, b: &OBox, resolution: usize) -> crate::Result<f64> {
    if resolution < 64 {
        return Err(crate::Error::ResolutionTooCoarse(resolution));
    }
    let ba = a.enclosing_hbox();
    let bb = b.enclosing_hbox();
    let x0 = ba.x_min.max(bb.x_min);
    let x1 = ba.x_max.min(bb.x_max);
    let y0 = ba.y_min.max(bb.y_min);
    let y1 = ba.y_max.min(bb.y_max);
    if x1 <= x0 || y1 <= y0 {
        return Ok(0.0);
    }
    let dx = (x1 - x0) / resolution as f64;
    let dy = (y1 - y0) / resolution as f64;

    // Hoist the frame transforms; walk each row incrementally.
    let (sin_a, cos_a) = a.theta.sin_cos();
    let (sin_b, cos_b) = b.theta.sin_cos();
    let (haw, hah) = (0.5 * a.w, 0.5 * a.h);
    let (hbw, hbh) = (0.5 * b.w, 0.5 * b.h);

    let mut hits: u64 = 0;
    for iy in 0..resolution {
        let y = y0 + (iy as f64 + 0.5) * dy;
        let x_start = x0 + 0.5 * dx;
        // Local coords of (x_start, y) in each box frame; stepping x by dx
        // moves (dx*cos, -dx*sin) in the local frame.
        let mut ax = (x_start - a.cx) * cos_a + (y - a.cy) * sin_a;
        let mut ay = -(x_start - a.cx) * sin_a + (y - a.cy) * cos_a;
        let mut bx = (x_start - b.cx) * cos_b + (y - b.cy) * sin_b;
        let mut by = -(x_start - b.cx) * sin_b + (y - b.cy) * cos_b;
        for _ in 0..resolution {
            if ax.abs() <= haw && ay.abs() <= hah && bx.abs() <= hbw && by.abs() <= hbh {
                hits += 1;
            }
            ax += dx * cos_a;
            ay -= dx * sin_a;
            bx += dx * cos_b;
            by -= dx * sin_b;
        }
    }
    let inter = hits as f64 * dx * dy;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return Ok(0.0);
    }
    Ok((inter / union).clamp(0.0, 1.0))
}
