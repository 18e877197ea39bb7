//! Anchor lattice generation, max-IoU assignment, per-level coverage
//! analysis, and the worst-case anchor/object IoU geometry that drives
//! single-feature selection.

use crate::geom::{iou_hbb, iou_obb, HBox, OBox};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Anchor configuration across pyramid levels.
///
/// `base_sizes[l]` attaches to `strides[l]`; every base size must be an
/// integer multiple of its stride and consecutive sizes must differ by a
/// factor of two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSpec {
    pub base_sizes: Vec<f64>,
    pub aspect_ratios: Vec<f64>,
    pub strides: Vec<f64>,
    #[serde(default = "default_scales")]
    pub scales_per_size: Vec<f64>,
}

fn default_scales() -> Vec<f64> {
    vec![1.0]
}

impl AnchorSpec {
    pub fn new(base_sizes: Vec<f64>, aspect_ratios: Vec<f64>, strides: Vec<f64>) -> Result<Self> {
        let spec = Self {
            base_sizes,
            aspect_ratios,
            strides,
            scales_per_size: default_scales(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_sizes.is_empty() {
            return Err(Error::InvalidAnchorSpec("no base sizes".into()));
        }
        if self.base_sizes.len() != self.strides.len() {
            return Err(Error::InvalidAnchorSpec(format!(
                "{} base sizes vs {} strides",
                self.base_sizes.len(),
                self.strides.len()
            )));
        }
        if self.aspect_ratios.is_empty() || self.scales_per_size.is_empty() {
            return Err(Error::InvalidAnchorSpec(
                "aspect_ratios and scales_per_size must be non-empty".into(),
            ));
        }
        for (&s, &st) in self.base_sizes.iter().zip(&self.strides) {
            if s <= 0.0 || st <= 0.0 {
                return Err(Error::InvalidAnchorSpec(
                    "sizes and strides must be > 0".into(),
                ));
            }
            let ratio = s / st;
            if (ratio - ratio.round()).abs() > 1e-9 {
                return Err(Error::InvalidAnchorSpec(format!(
                    "base size {s} is not an integer multiple of stride {st}"
                )));
            }
        }
        for pair in self.base_sizes.windows(2) {
            if (pair[1] / pair[0] - 2.0).abs() > 1e-9 {
                return Err(Error::InvalidAnchorSpec(format!(
                    "consecutive sizes {} and {} do not differ by a factor of 2",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.base_sizes.len()
    }

    /// Conventional DOTA configuration: sizes 32..512 on strides 4..64.
    pub fn dota_original() -> Self {
        Self::new(
            vec![32.0, 64.0, 128.0, 256.0, 512.0],
            vec![0.5, 1.0, 2.0],
            vec![4.0, 8.0, 16.0, 32.0, 64.0],
        )
        .expect("preset is valid")
    }

    /// Small-object configuration: sizes 16..256 on strides 4..64.
    pub fn dota_adjusted() -> Self {
        Self::new(
            vec![16.0, 32.0, 64.0, 128.0, 256.0],
            vec![0.5, 1.0, 2.0],
            vec![4.0, 8.0, 16.0, 32.0, 64.0],
        )
        .expect("preset is valid")
    }
}

/// Anchor extents for base size `s` and aspect ratio `r`: (s*sqrt(r), s/sqrt(r)).
fn template_extents(size: f64, ratio: f64, scale: f64) -> (f64, f64) {
    let s = size * scale;
    (s * ratio.sqrt(), s / ratio.sqrt())
}

/// The implicit set of anchors on one feature level.
///
/// Anchor `(i, j, k)` is centered at `((j + 0.5) * stride, (i + 0.5) * stride)`
/// with extents `templates[k]`; its flat index is
/// `(i * feature_w + j) * anchors_per_location + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorLattice {
    pub level: usize,
    pub stride: f64,
    pub feature_h: usize,
    pub feature_w: usize,
    templates: Vec<(f64, f64)>,
}

impl AnchorLattice {
    pub fn anchors_per_location(&self) -> usize {
        self.templates.len()
    }

    pub fn len(&self) -> usize {
        self.feature_h * self.feature_w * self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn templates(&self) -> &[(f64, f64)] {
        &self.templates
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            (j as f64 + 0.5) * self.stride,
            (i as f64 + 0.5) * self.stride,
        )
    }

    pub fn anchor_hbox(&self, i: usize, j: usize, k: usize) -> HBox {
        let (cx, cy) = self.center(i, j);
        let (w, h) = self.templates[k];
        HBox::new(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)
    }

    pub fn anchor_obox(&self, i: usize, j: usize, k: usize) -> OBox {
        let (cx, cy) = self.center(i, j);
        let (w, h) = self.templates[k];
        OBox::axis_aligned(cx, cy, w, h)
    }

    pub fn flat_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.feature_w + j) * self.templates.len() + k
    }

    pub fn contains_index(&self, i: usize, j: usize, k: usize) -> bool {
        i < self.feature_h && j < self.feature_w && k < self.templates.len()
    }
}

/// Lattice for one pyramid level of `spec`.
pub fn generate_lattice(
    spec: &AnchorSpec,
    level: usize,
    feature_h: usize,
    feature_w: usize,
) -> Result<AnchorLattice> {
    if level >= spec.levels() {
        return Err(Error::LevelOutOfRange {
            level,
            levels: spec.levels(),
        });
    }
    let size = spec.base_sizes[level];
    let mut templates = Vec::with_capacity(spec.aspect_ratios.len() * spec.scales_per_size.len());
    for &r in &spec.aspect_ratios {
        for &sc in &spec.scales_per_size {
            templates.push(template_extents(size, r, sc));
        }
    }
    Ok(AnchorLattice {
        level,
        stride: spec.strides[level],
        feature_h,
        feature_w,
        templates,
    })
}

/// Single-level lattice carrying the anchors of every pyramid level, the
/// configuration used when all other features are removed. With 5 sizes and
/// 3 ratios this yields 15 anchors per location.
pub fn multi_anchor_lattice(
    spec: &AnchorSpec,
    stride: f64,
    feature_h: usize,
    feature_w: usize,
) -> AnchorLattice {
    let mut templates = Vec::with_capacity(
        spec.base_sizes.len() * spec.aspect_ratios.len() * spec.scales_per_size.len(),
    );
    for &size in &spec.base_sizes {
        for &r in &spec.aspect_ratios {
            for &sc in &spec.scales_per_size {
                templates.push(template_extents(size, r, sc));
            }
        }
    }
    AnchorLattice {
        level: 0,
        stride,
        feature_h,
        feature_w,
        templates,
    }
}

/// How assignment IoU between an axis-aligned anchor and an oriented object
/// is computed. Horizontal-anchor RPNs conventionally match against the
/// object's enclosing horizontal box; the exact rotated overlap is also
/// available.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AssignIouMode {
    #[default]
    EnclosingHbb,
    ExactObb,
}

/// Best anchor for one object across all supplied lattices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub object_index: usize,
    pub best_level: usize,
    pub best_anchor: (usize, usize, usize),
    pub best_iou: f64,
    pub positive: bool,
}

fn assign_one(
    object_index: usize,
    object: &OBox,
    lattices: &[AnchorLattice],
    pos_threshold: f64,
    mode: AssignIouMode,
) -> Assignment {
    let obj_hbox = object.enclosing_hbox();
    let mut best_level = lattices[0].level;
    let mut best_anchor = (0, 0, 0);
    let mut best_iou = 0.0_f64;

    for lat in lattices {
        if lat.is_empty() {
            continue;
        }
        // Anchors whose center is farther than (anchor + object) / 2 from the
        // object box on either axis have zero IoU, so a window around the
        // object covers every candidate. The window uses the widest template.
        let (max_w, max_h) = lat
            .templates
            .iter()
            .fold((0.0_f64, 0.0_f64), |(mw, mh), &(w, h)| {
                (mw.max(w), mh.max(h))
            });
        let lo_j = ((obj_hbox.x_min - 0.5 * max_w) / lat.stride - 0.5).floor() as i64 - 1;
        let hi_j = ((obj_hbox.x_max + 0.5 * max_w) / lat.stride - 0.5).ceil() as i64 + 1;
        let lo_i = ((obj_hbox.y_min - 0.5 * max_h) / lat.stride - 0.5).floor() as i64 - 1;
        let hi_i = ((obj_hbox.y_max + 0.5 * max_h) / lat.stride - 0.5).ceil() as i64 + 1;
        let lo_j = lo_j.clamp(0, lat.feature_w as i64 - 1) as usize;
        let hi_j = hi_j.clamp(0, lat.feature_w as i64 - 1) as usize;
        let lo_i = lo_i.clamp(0, lat.feature_h as i64 - 1) as usize;
        let hi_i = hi_i.clamp(0, lat.feature_h as i64 - 1) as usize;

        for i in lo_i..=hi_i {
            for j in lo_j..=hi_j {
                for k in 0..lat.templates.len() {
                    let iou = match mode {
                        AssignIouMode::EnclosingHbb => {
                            iou_hbb(&lat.anchor_hbox(i, j, k), &obj_hbox)
                        }
                        AssignIouMode::ExactObb => iou_obb(&lat.anchor_obox(i, j, k), object),
                    };
                    // Strict improvement keeps the first (lowest level, lowest
                    // flat index) anchor on ties.
                    if iou > best_iou {
                        best_iou = iou;
                        best_level = lat.level;
                        best_anchor = (i, j, k);
                    }
                }
            }
        }
    }

    Assignment {
        object_index,
        best_level,
        best_anchor,
        best_iou,
        positive: best_iou >= pos_threshold,
    }
}

/// Per object, the max-IoU anchor across all lattices. Ties break toward the
/// lower level and then the lower flat anchor index.
pub fn assign_max_iou(
    objects: &[OBox],
    lattices: &[AnchorLattice],
    pos_threshold: f64,
    mode: AssignIouMode,
) -> Result<Vec<Assignment>> {
    if lattices.is_empty() {
        return Err(Error::EmptyLattices);
    }
    if !(0.0 < pos_threshold && pos_threshold < 1.0) {
        return Err(Error::InvalidThreshold(pos_threshold));
    }
    Ok(objects
        .par_iter()
        .enumerate()
        .map(|(idx, obj)| assign_one(idx, obj, lattices, pos_threshold, mode))
        .collect())
}

/// Fraction of objects whose best anchor sits on one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCoverage {
    pub level: usize,
    pub stride: f64,
    pub matched_count: usize,
    pub matched_fraction: f64,
}

/// Per-level matched fractions plus the fraction matched on no level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub total_objects: usize,
    pub pos_threshold: f64,
    pub levels: Vec<LevelCoverage>,
    pub unmatched_count: usize,
    pub unmatched_fraction: f64,
}

impl CoverageReport {
    /// CSV with columns `level,matched_count,matched_fraction`; the trailing
    /// row reports objects no level matched.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,matched_count,matched_fraction\n");
        for lv in &self.levels {
            out.push_str(&format!(
                "P{},{},{:.6}\n",
                lv.stride.log2().round() as i64,
                lv.matched_count,
                lv.matched_fraction
            ));
        }
        out.push_str(&format!(
            "none,{},{:.6}\n",
            self.unmatched_count, self.unmatched_fraction
        ));
        out
    }
}

/// Assign every object against the full pyramid of `spec` for an image of the
/// given extent and report the per-level matched fractions.
pub fn coverage_report(
    objects: &[OBox],
    spec: &AnchorSpec,
    image_w: usize,
    image_h: usize,
    pos_threshold: f64,
    mode: AssignIouMode,
) -> Result<CoverageReport> {
    spec.validate()?;
    let mut lattices = Vec::with_capacity(spec.levels());
    for level in 0..spec.levels() {
        let stride = spec.strides[level];
        let fh = (image_h as f64 / stride).ceil() as usize;
        let fw = (image_w as f64 / stride).ceil() as usize;
        lattices.push(generate_lattice(spec, level, fh.max(1), fw.max(1))?);
    }
    let assignments = assign_max_iou(objects, &lattices, pos_threshold, mode)?;

    let total = objects.len();
    let mut counts = vec![0usize; spec.levels()];
    let mut unmatched = 0usize;
    for a in &assignments {
        if a.positive {
            counts[a.best_level] += 1;
        } else {
            unmatched += 1;
        }
    }
    let frac = |c: usize| {
        if total == 0 {
            0.0
        } else {
            c as f64 / total as f64
        }
    };
    Ok(CoverageReport {
        total_objects: total,
        pos_threshold,
        levels: counts
            .iter()
            .enumerate()
            .map(|(level, &c)| LevelCoverage {
                level,
                stride: spec.strides[level],
                matched_count: c,
                matched_fraction: frac(c),
            })
            .collect(),
        unmatched_count: unmatched,
        unmatched_fraction: frac(unmatched),
    })
}

/// Minimum over object positions of the best anchor IoU, for a square
/// axis-aligned object of side `object_size` against square anchors of side
/// `anchor_size` placed on a lattice of the given stride.
///
/// With centers at `(index + 0.5) * stride` the worst object center sits
/// mid-way between lattice points (offset stride/2 per axis), giving a
/// per-axis overlap of `min(anchor, object, (anchor + object)/2 - stride/2)`
/// clamped at zero.
pub fn worst_case_iou(anchor_size: f64, stride: f64, object_size: f64) -> f64 {
    debug_assert!(anchor_size > 0.0 && stride > 0.0 && object_size > 0.0);
    let overlap = (0.5 * (anchor_size + object_size) - 0.5 * stride)
        .min(anchor_size)
        .min(object_size)
        .max(0.0);
    let inter = overlap * overlap;
    let union = anchor_size * anchor_size + object_size * object_size - inter;
    if union <= 0.0 {
        return 0.0;
    }
    inter / union
}
