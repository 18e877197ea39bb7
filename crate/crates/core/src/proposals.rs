//! Single-feature RPN post-processing: score filtering, top-k pre-selection,
//! box decoding, rotated NMS, and RoI-budget sweeps.

use crate::anchors::AnchorLattice;
use crate::geom::{iou_obb, normalize_angle, OBox};
use crate::scoremap::{apply_hpf, make_kernel, sigmoid_map, Kernel, KernelKind, ScoreMap};
use crate::tensor::Tensor;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Regression-width clamp before exponentiation.
const MAX_LOG_EXTENT_DELTA: f64 = 6.907755278982137; // ln(1000)

/// Per-anchor regression values (dx, dy, dw, dh, dtheta), stored like a
/// `ScoreMap` with `anchors_per_location * 5` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaMap {
    pub height: usize,
    pub width: usize,
    pub anchors_per_location: usize,
    values: Vec<f64>,
}

impl DeltaMap {
    pub fn zeros(height: usize, width: usize, anchors_per_location: usize) -> Self {
        Self {
            height,
            width,
            anchors_per_location,
            values: vec![0.0; height * width * anchors_per_location * 5],
        }
    }

    pub fn from_values(
        height: usize,
        width: usize,
        anchors_per_location: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != height * width * anchors_per_location * 5 {
            return Err(Error::ShapeMismatch(format!(
                "{}x{}x({}*5) delta map needs {} values, got {}",
                height,
                width,
                anchors_per_location,
                height * width * anchors_per_location * 5,
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            anchors_per_location,
            values,
        })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> [f64; 5] {
        let base = ((i * self.width + j) * self.anchors_per_location + k) * 5;
        [
            self.values[base],
            self.values[base + 1],
            self.values[base + 2],
            self.values[base + 3],
            self.values[base + 4],
        ]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, d: [f64; 5]) {
        let base = ((i * self.width + j) * self.anchors_per_location + k) * 5;
        self.values[base..base + 5].copy_from_slice(&d);
    }

    /// From a rank-3 `[h, w, a*5]` tensor.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (h, w, c) = match t.dims.as_slice() {
            [h, w, c] => (*h, *w, *c),
            other => {
                return Err(Error::ShapeMismatch(format!(
                    "expected rank-3 delta tensor, got dims {:?}",
                    other
                )))
            }
        };
        if c % 5 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "delta channels {c} not a multiple of 5"
            )));
        }
        Self::from_values(h, w, c / 5, t.data.iter().map(|&v| v as f64).collect())
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            dims: vec![self.height, self.width, self.anchors_per_location * 5],
            data: self.values.iter().map(|&v| v as f32).collect(),
        }
    }
}

/// Decoded oriented box with its score and originating anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub bbox: OBox,
    pub score: f64,
    pub source_anchor: (usize, usize, usize),
}

/// Knobs of the post-processing pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub k_pre: usize,
    pub k_post: usize,
    pub nms_iou_threshold: f64,
    pub hpf_enabled: bool,
    pub hpf_kernel: Kernel,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k_pre: 2000,
            k_post: 2000,
            nms_iou_threshold: 0.8,
            hpf_enabled: true,
            hpf_kernel: make_kernel(KernelKind::Unsharp, 5).expect("default kernel"),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_post == 0 || self.k_post > self.k_pre {
            return Err(Error::InvalidPipelineConfig(format!(
                "need 0 < k_post <= k_pre, got k_post={} k_pre={}",
                self.k_post, self.k_pre
            )));
        }
        if !(0.0 < self.nms_iou_threshold && self.nms_iou_threshold < 1.0) {
            return Err(Error::InvalidPipelineConfig(format!(
                "nms_iou_threshold {} outside (0, 1)",
                self.nms_iou_threshold
            )));
        }
        Ok(())
    }
}

/// Standard delta decode against anchor boxes:
/// `x = xa + dx*wa`, `y = ya + dy*ha`, `w = wa*exp(dw)`, `h = ha*exp(dh)`,
/// `theta = dtheta` normalized; `dw`/`dh` clamp at ln(1000) before exp.
pub fn decode(
    lattice: &AnchorLattice,
    deltas: &DeltaMap,
    indices: &[(usize, usize, usize)],
) -> Result<Vec<OBox>> {
    let mut out = Vec::with_capacity(indices.len());
    for &(i, j, k) in indices {
        if !lattice.contains_index(i, j, k) {
            return Err(Error::AnchorIndexOutOfRange {
                i,
                j,
                k,
                h: lattice.feature_h,
                w: lattice.feature_w,
                a: lattice.anchors_per_location(),
            });
        }
        let (xa, ya) = lattice.center(i, j);
        let (wa, ha) = lattice.templates()[k];
        let [dx, dy, dw, dh, dt] = deltas.get(i, j, k);
        out.push(OBox::new(
            xa + dx * wa,
            ya + dy * ha,
            wa * dw.min(MAX_LOG_EXTENT_DELTA).exp(),
            ha * dh.min(MAX_LOG_EXTENT_DELTA).exp(),
            normalize_angle(dt),
        ));
    }
    Ok(out)
}

/// Indices of the `k` highest scores; ties break toward the lower flat index
/// (row-major, channel fastest).
pub fn topk(scores: &ScoreMap, k: usize) -> Vec<(usize, usize, usize)> {
    let n = scores.len();
    let mut order: Vec<u32> = (0..n as u32).collect();
    let vals = scores.values();
    order.sort_unstable_by(|&a, &b| {
        vals[b as usize]
            .total_cmp(&vals[a as usize])
            .then(a.cmp(&b))
    });
    order
        .into_iter()
        .take(k)
        .map(|flat| {
            let flat = flat as usize;
            let c = flat % scores.channels;
            let cell = flat / scores.channels;
            (cell / scores.width, cell % scores.width, c)
        })
        .collect()
}

/// Greedy descending-score suppression with rotated IoU. Output is sorted by
/// descending score; ties keep input order. Every surviving pair has IoU
/// strictly below the threshold.
pub fn rotated_nms(props: &[Proposal], iou_threshold: f64) -> Vec<Proposal> {
    let mut order: Vec<usize> = (0..props.len()).collect();
    order.sort_by(|&a, &b| props[b].score.total_cmp(&props[a].score).then(a.cmp(&b)));

    let mut kept: Vec<&Proposal> = Vec::new();
    for &idx in &order {
        let cand = &props[idx];
        let cand_hbox = cand.bbox.enclosing_hbox();
        let overlaps = kept.iter().any(|k| {
            // Cheap reject: disjoint enclosing boxes cannot reach any
            // positive IoU.
            let kb = k.bbox.enclosing_hbox();
            if kb.x_min > cand_hbox.x_max
                || kb.x_max < cand_hbox.x_min
                || kb.y_min > cand_hbox.y_max
                || kb.y_max < cand_hbox.y_min
            {
                return false;
            }
            iou_obb(&k.bbox, &cand.bbox) >= iou_threshold
        });
        if !overlaps {
            kept.push(cand);
        }
    }
    kept.into_iter().cloned().collect()
}

/// Full post-processing pass: sigmoid, optional high-pass filter, top-k
/// pre-selection, decode, rotated NMS, truncate to `k_post`.
pub fn rpn_postprocess(
    scores: &ScoreMap,
    deltas: &DeltaMap,
    lattice: &AnchorLattice,
    cfg: &PipelineConfig,
) -> Result<Vec<Proposal>> {
    cfg.validate()?;
    if scores.height != lattice.feature_h
        || scores.width != lattice.feature_w
        || scores.channels != lattice.anchors_per_location()
    {
        return Err(Error::ShapeMismatch(format!(
            "scores {}x{}x{} vs lattice {}x{}x{}",
            scores.height,
            scores.width,
            scores.channels,
            lattice.feature_h,
            lattice.feature_w,
            lattice.anchors_per_location()
        )));
    }
    if deltas.height != scores.height
        || deltas.width != scores.width
        || deltas.anchors_per_location != scores.channels
    {
        return Err(Error::ShapeMismatch(format!(
            "deltas {}x{}x({}*5) vs scores {}x{}x{}",
            deltas.height,
            deltas.width,
            deltas.anchors_per_location,
            scores.height,
            scores.width,
            scores.channels
        )));
    }

    let activated = sigmoid_map(scores);
    let ranked = if cfg.hpf_enabled {
        apply_hpf(&activated, &cfg.hpf_kernel)?
    } else {
        activated
    };
    let indices = topk(&ranked, cfg.k_pre);
    let boxes = decode(lattice, deltas, &indices)?;
    let props: Vec<Proposal> = indices
        .iter()
        .zip(boxes)
        .map(|(&(i, j, k), bbox)| Proposal {
            bbox,
            score: ranked.get(i, j, k),
            source_anchor: (i, j, k),
        })
        .collect();
    let mut kept = rotated_nms(&props, cfg.nms_iou_threshold);
    kept.truncate(cfg.k_post);
    Ok(kept)
}

/// One row of an RoI-budget sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub budget: usize,
    pub proposal_count: usize,
    /// Duplication statistic: mean rotated IoU over all kept pairs
    /// (0 when fewer than two proposals survive).
    pub mean_pairwise_iou: f64,
}

/// Run the pipeline once per RoI budget (the budget caps `k_post`) and report
/// how much the kept set overlaps itself.
pub fn roi_budget_sweep(
    scores: &ScoreMap,
    deltas: &DeltaMap,
    lattice: &AnchorLattice,
    budgets: &[usize],
    cfg: &PipelineConfig,
) -> Result<Vec<BudgetRow>> {
    if budgets.is_empty() {
        return Err(Error::InvalidPipelineConfig("empty budget list".into()));
    }
    let mut rows = Vec::with_capacity(budgets.len());
    for &budget in budgets {
        let mut run_cfg = cfg.clone();
        run_cfg.k_post = budget;
        run_cfg.k_pre = cfg.k_pre.max(budget);
        let kept = rpn_postprocess(scores, deltas, lattice, &run_cfg)?;
        rows.push(BudgetRow {
            budget,
            proposal_count: kept.len(),
            mean_pairwise_iou: mean_pairwise_iou(&kept),
        });
    }
    Ok(rows)
}

pub fn mean_pairwise_iou(props: &[Proposal]) -> f64 {
    if props.len() < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut pairs = 0u64;
    for a in 0..props.len() {
        for b in (a + 1)..props.len() {
            total += iou_obb(&props[a].bbox, &props[b].bbox);
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// Proposals as CSV rows `cx,cy,w,h,theta,score` with fixed 6-decimal
/// formatting for reproducible outputs.
pub fn proposals_to_csv(props: &[Proposal]) -> String {
    let mut out = String::from("cx,cy,w,h,theta,score\n");
    for p in props {
        out.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            p.bbox.cx, p.bbox.cy, p.bbox.w, p.bbox.h, p.bbox.theta, p.score
        ));
    }
    out
}

/// Parse proposal CSV; `#` comment lines and the header row are skipped.
pub fn proposals_from_csv(text: &str) -> Result<Vec<Proposal>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("cx,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::AnnotationParse {
                line: lineno + 1,
                message: format!("expected 6 proposal fields, got {}", fields.len()),
            });
        }
        let nums: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.trim().parse::<f64>()).collect();
        let nums = nums.map_err(|e| Error::AnnotationParse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        out.push(Proposal {
            bbox: OBox::new(nums[0], nums[1], nums[2], nums[3], nums[4]),
            score: nums[5],
            source_anchor: (0, 0, 0),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchors::{generate_lattice, multi_anchor_lattice, AnchorSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn small_lattice() -> AnchorLattice {
        let spec = AnchorSpec::new(vec![16.0], vec![1.0], vec![8.0]).unwrap();
        generate_lattice(&spec, 0, 8, 8).unwrap()
    }

    #[test]
    fn decode_identity_and_shifts() {
        let lat = small_lattice();
        let deltas = DeltaMap::zeros(8, 8, 1);
        let boxes = decode(&lat, &deltas, &[(2, 3, 0)]).unwrap();
        assert_eq!(boxes[0], OBox::axis_aligned(28.0, 20.0, 16.0, 16.0));

        let mut d = DeltaMap::zeros(8, 8, 1);
        d.set(2, 3, 0, [1.0, 0.0, 2.0_f64.ln(), 0.0, 0.0]);
        let boxes = decode(&lat, &d, &[(2, 3, 0)]).unwrap();
        assert_close(boxes[0].cx, 28.0 + 16.0, 1e-12);
        assert_close(boxes[0].w, 32.0, 1e-12);
        assert_close(boxes[0].h, 16.0, 1e-12);

        // extreme dw clamps at ln(1000)
        let mut d = DeltaMap::zeros(8, 8, 1);
        d.set(0, 0, 0, [0.0, 0.0, 1e9, 0.0, 0.0]);
        let boxes = decode(&lat, &d, &[(0, 0, 0)]).unwrap();
        assert_close(boxes[0].w, 16.0 * 1000.0, 1e-6);

        assert!(decode(&lat, &deltas, &[(9, 0, 0)]).is_err());
    }

    #[test]
    fn topk_selection_and_ties() {
        let m = ScoreMap::from_values(2, 2, 1, vec![0.1, 0.9, 0.5, 0.7]).unwrap();
        let all = topk(&m, 4);
        assert_eq!(all.len(), 4);
        assert_eq!(all[0], (0, 1, 0));
        assert_eq!(all[1], (1, 1, 0));
        assert_eq!(all[2], (1, 0, 0));
        assert_eq!(all[3], (0, 0, 0));
        // k larger than the map: everything
        assert_eq!(topk(&m, 100).len(), 4);

        let flat = ScoreMap::constant(2, 3, 2, 0.5);
        let two = topk(&flat, 2);
        assert_eq!(two, vec![(0, 0, 0), (0, 0, 1)]);
    }

    #[test]
    fn topk_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let m = ScoreMap::from_values(4, 4, 3, (0..48).map(|_| rng.gen_range(0.0..1.0)).collect())
            .unwrap();
        let k3 = topk(&m, 3);
        let mut all: Vec<(f64, usize)> = m
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| (v, i))
            .collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (got, want) in k3.iter().zip(all.iter()) {
            let flat = m.idx(got.0, got.1, got.2);
            assert_eq!(flat, want.1);
        }
        // nesting: topk(k) is a prefix-set of topk(k+1)
        let k4 = topk(&m, 4);
        assert!(k3.iter().all(|ix| k4.contains(ix)));
    }

    fn prop(cx: f64, cy: f64, w: f64, h: f64, theta: f64, score: f64) -> Proposal {
        Proposal {
            bbox: OBox::new(cx, cy, w, h, theta),
            score,
            source_anchor: (0, 0, 0),
        }
    }

    #[test]
    fn nms_basics() {
        let single = vec![prop(0.0, 0.0, 4.0, 4.0, 0.0, 0.9)];
        assert_eq!(rotated_nms(&single, 0.5), single);

        let twins = vec![
            prop(0.0, 0.0, 4.0, 4.0, 0.0, 0.8),
            prop(0.0, 0.0, 4.0, 4.0, 0.0, 0.9),
        ];
        let kept = rotated_nms(&twins, 0.5);
        assert_eq!(kept.len(), 1);
        assert_close(kept[0].score, 0.9, 1e-12);
    }

    /// Straightforward reference NMS without the enclosing-box prefilter.
    fn nms_reference(props: &[Proposal], thr: f64) -> Vec<Proposal> {
        let mut order: Vec<usize> = (0..props.len()).collect();
        order.sort_by(|&a, &b| props[b].score.total_cmp(&props[a].score).then(a.cmp(&b)));
        let mut kept: Vec<usize> = Vec::new();
        for &i in &order {
            if kept
                .iter()
                .all(|&j| iou_obb(&props[j].bbox, &props[i].bbox) < thr)
            {
                kept.push(i);
            }
        }
        kept.into_iter().map(|i| props[i].clone()).collect()
    }

    #[test]
    fn nms_matches_reference_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let props: Vec<Proposal> = (0..50)
            .map(|_| {
                prop(
                    rng.gen_range(0.0..64.0),
                    rng.gen_range(0.0..64.0),
                    rng.gen_range(4.0..32.0),
                    rng.gen_range(4.0..32.0),
                    rng.gen_range(-1.5..1.5),
                    rng.gen_range(0.0..1.0),
                )
            })
            .collect();
        for thr in [0.3, 0.5, 0.8] {
            let got = rotated_nms(&props, thr);
            let want = nms_reference(&props, thr);
            assert_eq!(got, want);
        }
    }

    #[test]
    fn nms_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..20 {
            let props: Vec<Proposal> = (0..30)
                .map(|_| {
                    prop(
                        rng.gen_range(0.0..48.0),
                        rng.gen_range(0.0..48.0),
                        rng.gen_range(4.0..24.0),
                        rng.gen_range(4.0..24.0),
                        rng.gen_range(-1.5..1.5),
                        rng.gen_range(0.0..1.0),
                    )
                })
                .collect();
            let kept = rotated_nms(&props, 0.5);
            // idempotence
            assert_eq!(rotated_nms(&kept, 0.5), kept);
            // pairwise bound
            for a in 0..kept.len() {
                for b in (a + 1)..kept.len() {
                    assert!(iou_obb(&kept[a].bbox, &kept[b].bbox) < 0.5);
                }
            }
            // monotone scores
            for w in kept.windows(2) {
                assert!(w[0].score >= w[1].score);
            }
        }
    }

    fn pipeline_fixture() -> (ScoreMap, DeltaMap, AnchorLattice) {
        let spec = AnchorSpec::new(vec![16.0, 32.0], vec![0.5, 1.0, 2.0], vec![8.0, 16.0]).unwrap();
        let lattice = multi_anchor_lattice(&spec, 8.0, 8, 8);
        let apl = lattice.anchors_per_location();
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let scores = ScoreMap::from_values(
            8,
            8,
            apl,
            (0..8 * 8 * apl).map(|_| rng.gen_range(-3.0..3.0)).collect(),
        )
        .unwrap();
        let deltas = DeltaMap::from_values(
            8,
            8,
            apl,
            (0..8 * 8 * apl * 5)
                .map(|_| rng.gen_range(-0.2..0.2))
                .collect(),
        )
        .unwrap();
        (scores, deltas, lattice)
    }

    #[test]
    fn postprocess_respects_budget_and_is_total() {
        let (scores, deltas, lattice) = pipeline_fixture();
        let cfg = PipelineConfig {
            k_pre: 40,
            k_post: 10,
            nms_iou_threshold: 0.8,
            hpf_enabled: false,
            ..PipelineConfig::default()
        };
        let out = rpn_postprocess(&scores, &deltas, &lattice, &cfg).unwrap();
        assert!(out.len() <= 10);

        // all-equal scores: pipeline still returns exactly k_post proposals
        let zeros = ScoreMap::zeros(8, 8, lattice.anchors_per_location());
        let dz = DeltaMap::zeros(8, 8, lattice.anchors_per_location());
        let cfg2 = PipelineConfig {
            k_pre: 64,
            k_post: 5,
            nms_iou_threshold: 0.8,
            hpf_enabled: false,
            ..PipelineConfig::default()
        };
        let out2 = rpn_postprocess(&zeros, &dz, &lattice, &cfg2).unwrap();
        assert_eq!(out2.len(), 5);
        for p in &out2 {
            assert_close(p.score, 0.5, 1e-12);
        }
    }

    #[test]
    fn postprocess_shape_mismatch_rejected() {
        let (scores, deltas, lattice) = pipeline_fixture();
        let bad_scores = ScoreMap::zeros(4, 8, lattice.anchors_per_location());
        assert!(
            rpn_postprocess(&bad_scores, &deltas, &lattice, &PipelineConfig::default()).is_err()
        );
        let bad_deltas = DeltaMap::zeros(8, 8, 2);
        assert!(
            rpn_postprocess(&scores, &bad_deltas, &lattice, &PipelineConfig::default()).is_err()
        );
    }

    #[test]
    fn hpf_toggle_changes_selection_not_decode() {
        // A small isolated peak that the unsharp filter promotes past a wide
        // plateau of slightly higher scores.
        let spec = AnchorSpec::new(vec![16.0], vec![1.0], vec![8.0]).unwrap();
        let lattice = generate_lattice(&spec, 0, 16, 16).unwrap();
        let mut scores = ScoreMap::constant(16, 16, 1, -4.0);
        // Plateau: logit 0.45 -> sigmoid ~0.61
        for i in 2..9 {
            for j in 2..9 {
                scores.set(i, j, 0, 0.45);
            }
        }
        // Isolated peak: logit 0.4 -> sigmoid ~0.60, below the plateau raw
        scores.set(12, 12, 0, 0.4);
        let deltas = DeltaMap::zeros(16, 16, 1);

        let base = PipelineConfig {
            k_pre: 3,
            k_post: 3,
            nms_iou_threshold: 0.9,
            hpf_enabled: false,
            ..PipelineConfig::default()
        };
        let without = rpn_postprocess(&scores, &deltas, &lattice, &base).unwrap();
        assert!(without.iter().all(|p| p.source_anchor != (12, 12, 0)));

        let with = PipelineConfig {
            hpf_enabled: true,
            ..base
        };
        let filtered = rpn_postprocess(&scores, &deltas, &lattice, &with).unwrap();
        assert!(filtered.iter().any(|p| p.source_anchor == (12, 12, 0)));
        // Decode rule unchanged: identical anchors decode to identical boxes.
        for p in filtered.iter().chain(without.iter()) {
            let (i, j, k) = p.source_anchor;
            assert_eq!(p.bbox, lattice.anchor_obox(i, j, k));
        }
    }

    #[test]
    fn budget_sweep_rows() {
        let (scores, deltas, lattice) = pipeline_fixture();
        let cfg = PipelineConfig {
            k_pre: 64,
            k_post: 64,
            nms_iou_threshold: 0.8,
            hpf_enabled: false,
            ..PipelineConfig::default()
        };
        let rows = roi_budget_sweep(&scores, &deltas, &lattice, &[4, 16, 64], &cfg).unwrap();
        assert_eq!(rows.len(), 3);
        for row in &rows {
            assert!(row.proposal_count <= row.budget);
            assert!((0.0..=1.0).contains(&row.mean_pairwise_iou));
        }
        assert!(roi_budget_sweep(&scores, &deltas, &lattice, &[], &cfg).is_err());

        // budget 1: the single highest-score proposal
        let one = roi_budget_sweep(&scores, &deltas, &lattice, &[1], &cfg).unwrap();
        assert_eq!(one[0].proposal_count, 1);
        let full = rpn_postprocess(&scores, &deltas, &lattice, &cfg).unwrap();
        let mut with_one = cfg.clone();
        with_one.k_post = 1;
        let best = rpn_postprocess(&scores, &deltas, &lattice, &with_one).unwrap();
        assert_eq!(best[0], full[0]);
    }

    #[test]
    fn budget_sweep_covers_two_peaks() {
        let spec = AnchorSpec::new(vec![16.0], vec![1.0], vec![8.0]).unwrap();
        let lattice = generate_lattice(&spec, 0, 16, 16).unwrap();
        let mut scores = ScoreMap::constant(16, 16, 1, -6.0);
        scores.set(3, 3, 0, 4.0);
        scores.set(12, 12, 0, 3.5);
        let deltas = DeltaMap::zeros(16, 16, 1);
        let cfg = PipelineConfig {
            k_pre: 16,
            k_post: 16,
            nms_iou_threshold: 0.5,
            hpf_enabled: false,
            ..PipelineConfig::default()
        };
        let rows = roi_budget_sweep(&scores, &deltas, &lattice, &[2], &cfg).unwrap();
        assert_eq!(rows[0].proposal_count, 2);
        let kept = {
            let mut c = cfg.clone();
            c.k_post = 2;
            rpn_postprocess(&scores, &deltas, &lattice, &c).unwrap()
        };
        let anchors: Vec<_> = kept.iter().map(|p| p.source_anchor).collect();
        assert!(anchors.contains(&(3, 3, 0)));
        assert!(anchors.contains(&(12, 12, 0)));
    }

    #[test]
    fn postprocess_is_deterministic() {
        let (scores, deltas, lattice) = pipeline_fixture();
        let cfg = PipelineConfig {
            k_pre: 50,
            k_post: 20,
            nms_iou_threshold: 0.7,
            hpf_enabled: true,
            ..PipelineConfig::default()
        };
        let a = rpn_postprocess(&scores, &deltas, &lattice, &cfg).unwrap();
        let b = rpn_postprocess(&scores, &deltas, &lattice, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn proposal_csv_round_trip() {
        let props = vec![
            prop(12.5, 8.25, 16.0, 9.0, 0.125, 0.75),
            prop(-3.0, 44.0, 8.0, 8.0, -1.25, 0.5),
        ];
        let csv = proposals_to_csv(&props);
        assert!(csv.starts_with("cx,cy,w,h,theta,score\n"));
        let back = proposals_from_csv(&csv).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in props.iter().zip(&back) {
            assert_close(a.bbox.cx, b.bbox.cx, 1e-6);
            assert_close(a.score, b.score, 1e-6);
        }
        assert!(proposals_from_csv("1,2,3\n").is_err());
        assert!(proposals_from_csv("a,b,c,d,e,f\n").is_err());
    }
}
