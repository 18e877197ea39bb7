//! Analytic FLOPs accounting for two-stage detector components.
//!
//! Convention: one multiply-accumulate counts as one FLOP. Bias terms,
//! normalization, activations, top-down interpolation, and NMS are excluded;
//! they contribute under a percent of the totals this model reproduces.
//! Backbone cost is a supplied constant since backbone internals are out of
//! scope here.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Feature-pyramid neck layout: per-stage lateral input channels (bottom-up
/// order, e.g. C2..C5), the shared output width, and the level strides. When
/// `extra_level_via_pool` is set, the last stride is produced by pooling and
/// costs nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeckConfig {
    pub in_channels: Vec<usize>,
    pub out_channels: usize,
    pub input_image_side: usize,
    pub levels: Vec<usize>,
    pub extra_level_via_pool: bool,
}

impl NeckConfig {
    pub fn validate(&self) -> Result<()> {
        let lateral_levels = if self.extra_level_via_pool {
            self.levels.len().saturating_sub(1)
        } else {
            self.levels.len()
        };
        if self.in_channels.len() != lateral_levels {
            return Err(Error::InvalidCostConfig(format!(
                "{} lateral channel counts for {} lateral levels",
                self.in_channels.len(),
                lateral_levels
            )));
        }
        if self.levels.is_empty() || self.out_channels == 0 || self.input_image_side == 0 {
            return Err(Error::InvalidCostConfig("empty neck config".into()));
        }
        for w in self.levels.windows(2) {
            if w[1] != w[0] * 2 {
                return Err(Error::InvalidCostConfig(format!(
                    "strides must ascend by powers of 2, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    fn lateral_strides(&self) -> &[usize] {
        if self.extra_level_via_pool {
            &self.levels[..self.levels.len() - 1]
        } else {
            &self.levels
        }
    }
}

/// RPN head: shared 3x3 conv plus 1x1 classification and regression heads,
/// applied per retained level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpnConfig {
    pub channels: usize,
    pub anchors_per_location: usize,
    pub reg_params_per_anchor: usize,
    pub levels: Vec<usize>,
}

impl RpnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0
            || self.anchors_per_location == 0
            || self.reg_params_per_anchor == 0
            || self.levels.is_empty()
        {
            return Err(Error::InvalidCostConfig("empty rpn config".into()));
        }
        Ok(())
    }
}

/// Two-fc RoI head: flatten, fc chain, classification and box outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiHeadConfig {
    pub num_rois: usize,
    pub roi_feature_side: usize,
    pub roi_channels: usize,
    pub fc_dims: Vec<usize>,
    pub num_classes: usize,
}

impl RoiHeadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_rois == 0
            || self.roi_feature_side == 0
            || self.roi_channels == 0
            || self.fc_dims.is_empty()
            || self.num_classes == 0
        {
            return Err(Error::InvalidCostConfig("empty roi head config".into()));
        }
        Ok(())
    }
}

/// Per-component GFLOPs of one detector configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub backbone_gflops: f64,
    pub neck_gflops: f64,
    pub rpn_gflops: f64,
    pub filter_gflops: f64,
    pub roi_head_gflops: f64,
    pub total_gflops: f64,
}

impl CostBreakdown {
    fn assemble(backbone: f64, neck: f64, rpn: f64, filter: f64, roi_head: f64) -> Self {
        Self {
            backbone_gflops: backbone,
            neck_gflops: neck,
            rpn_gflops: rpn,
            filter_gflops: filter,
            roi_head_gflops: roi_head,
            total_gflops: backbone + neck + rpn + filter + roi_head,
        }
    }
}

/// GFLOPs of one convolution layer: `k^2 * in_ch * out_ch * out_h * out_w`.
pub fn conv_cost(
    kernel_side: usize,
    in_ch: usize,
    out_ch: usize,
    out_h: usize,
    out_w: usize,
) -> f64 {
    debug_assert!(kernel_side > 0 && in_ch > 0 && out_ch > 0 && out_h > 0 && out_w > 0);
    (kernel_side * kernel_side * in_ch * out_ch) as f64 * (out_h * out_w) as f64 / 1e9
}

/// Neck cost for the retained levels.
///
/// A kept level needs its own 1x1 lateral plus every lateral above it on the
/// top-down path, and one 3x3 output conv at its own resolution. The pooled
/// extra level costs nothing beyond the chain of the topmost lateral stage.
pub fn neck_cost(cfg: &NeckConfig, keep_levels: &[usize]) -> Result<f64> {
    cfg.validate()?;
    if keep_levels.is_empty() {
        return Err(Error::InvalidCostConfig("keep_levels is empty".into()));
    }
    let laterals = cfg.lateral_strides();
    let mut need_lateral = vec![false; laterals.len()];
    let mut need_output = vec![false; laterals.len()];
    for &stride in keep_levels {
        if let Some(idx) = laterals.iter().position(|&s| s == stride) {
            for flag in need_lateral.iter_mut().skip(idx) {
                *flag = true;
            }
            need_output[idx] = true;
        } else if cfg.extra_level_via_pool && stride == *cfg.levels.last().unwrap() {
            // Pooled from the topmost output map: keep that whole chain.
            let last = laterals.len() - 1;
            need_lateral[last] = true;
            need_output[last] = true;
        } else {
            return Err(Error::InvalidCostConfig(format!(
                "keep level {stride} is not a configured level"
            )));
        }
    }

    let mut total = 0.0;
    for (idx, &stride) in laterals.iter().enumerate() {
        let side = cfg.input_image_side / stride;
        if need_lateral[idx] {
            total += conv_cost(1, cfg.in_channels[idx], cfg.out_channels, side, side);
        }
        if need_output[idx] {
            total += conv_cost(3, cfg.out_channels, cfg.out_channels, side, side);
        }
    }
    Ok(total)
}

/// RPN head cost summed over its levels.
pub fn rpn_cost(cfg: &RpnConfig, input_image_side: usize) -> f64 {
    let mut total = 0.0;
    for &stride in &cfg.levels {
        let side = input_image_side / stride;
        total += conv_cost(3, cfg.channels, cfg.channels, side, side);
        total += conv_cost(1, cfg.channels, cfg.anchors_per_location, side, side);
        total += conv_cost(
            1,
            cfg.channels,
            cfg.anchors_per_location * cfg.reg_params_per_anchor,
            side,
            side,
        );
    }
    total
}

/// Score-map filter cost: `k^2 * h * w * channels` multiplies.
pub fn filter_cost(map_h: usize, map_w: usize, channels: usize, kernel_side: usize) -> Result<f64> {
    if map_h == 0 || map_w == 0 || channels == 0 || kernel_side == 0 {
        return Err(Error::InvalidCostConfig(
            "filter dims must be positive".into(),
        ));
    }
    Ok((kernel_side * kernel_side * channels) as f64 * (map_h * map_w) as f64 / 1e9)
}

/// RoI head cost: per RoI, flatten -> fc chain -> class / box outputs.
///
/// The class output has `num_classes + 1` logits (background included); the
/// box output regresses 5 values per class.
pub fn roi_head_cost(cfg: &RoiHeadConfig) -> Result<f64> {
    cfg.validate()?;
    let flat = cfg.roi_feature_side * cfg.roi_feature_side * cfg.roi_channels;
    let mut per_roi = 0usize;
    let mut prev = flat;
    for &dim in &cfg.fc_dims {
        per_roi += prev * dim;
        prev = dim;
    }
    per_roi += prev * (cfg.num_classes + 1);
    per_roi += prev * (5 * cfg.num_classes);
    Ok(cfg.num_rois as f64 * per_roi as f64 / 1e9)
}

/// Stride of the feature retained by the single-feature configuration.
pub const SELECTED_STRIDE: usize = 8;

/// Kernel side used for the score-map filter cost.
pub const FILTER_KERNEL_SIDE: usize = 5;

/// Assemble a full per-component breakdown.
///
/// `simplified` keeps only the stride-8 level in the neck and RPN and moves
/// the anchors of the removed levels onto it (anchors per location times the
/// baseline level count). `hpf` adds the score-map filter cost on the
/// retained RPN maps.
pub fn detector_cost(
    backbone_gflops: f64,
    neck: &NeckConfig,
    rpn: &RpnConfig,
    roi: &RoiHeadConfig,
    simplified: bool,
    hpf: bool,
) -> Result<CostBreakdown> {
    neck.validate()?;
    rpn.validate()?;
    if backbone_gflops < 0.0 {
        return Err(Error::InvalidCostConfig(
            "backbone gflops must be >= 0".into(),
        ));
    }

    let (neck_g, rpn_cfg) = if simplified {
        if !neck.levels.contains(&SELECTED_STRIDE) {
            return Err(Error::InvalidCostConfig(format!(
                "simplified config requires a stride-{SELECTED_STRIDE} level"
            )));
        }
        let rpn_cfg = RpnConfig {
            channels: rpn.channels,
            anchors_per_location: rpn.anchors_per_location * rpn.levels.len(),
            reg_params_per_anchor: rpn.reg_params_per_anchor,
            levels: vec![SELECTED_STRIDE],
        };
        (neck_cost(neck, &[SELECTED_STRIDE])?, rpn_cfg)
    } else {
        (neck_cost(neck, &neck.levels)?, rpn.clone())
    };

    let rpn_g = rpn_cost(&rpn_cfg, neck.input_image_side);
    let filter_g = if hpf {
        let mut acc = 0.0;
        for &stride in &rpn_cfg.levels {
            let side = neck.input_image_side / stride;
            acc += filter_cost(side, side, rpn_cfg.anchors_per_location, FILTER_KERNEL_SIDE)?;
        }
        acc
    } else {
        0.0
    };
    let roi_g = roi_head_cost(roi)?;

    Ok(CostBreakdown::assemble(
        backbone_gflops,
        neck_g,
        rpn_g,
        filter_g,
        roi_g,
    ))
}

/// Percent total-FLOPs reduction of `simplified` relative to `baseline`.
pub fn reduction_percent(baseline: &CostBreakdown, simplified: &CostBreakdown) -> f64 {
    (1.0 - simplified.total_gflops / baseline.total_gflops) * 100.0
}

/// A named detector configuration, the unit of the model config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub name: String,
    pub backbone_gflops: f64,
    pub neck: NeckConfig,
    pub rpn: RpnConfig,
    pub roi_head: RoiHeadConfig,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        self.neck.validate()?;
        self.rpn.validate()?;
        self.roi_head.validate()
    }

    pub fn baseline_cost(&self) -> Result<CostBreakdown> {
        detector_cost(
            self.backbone_gflops,
            &self.neck,
            &self.rpn,
            &self.roi_head,
            false,
            false,
        )
    }

    pub fn simplified_cost(&self, hpf: bool) -> Result<CostBreakdown> {
        detector_cost(
            self.backbone_gflops,
            &self.neck,
            &self.rpn,
            &self.roi_head,
            true,
            hpf,
        )
    }
}

/// R50-FPN-style reference configuration on a 1024 input: C2..C5 laterals
/// 256/512/1024/2048 into 256 channels, strides 4..64 with pooled P6, 3
/// anchors x 6 regression params, 1000 RoIs at 7x7x256 through two 1024-wide
/// fc layers over 16 classes.
pub fn reference_r50_config(name: &str, backbone_gflops: f64) -> DetectorConfig {
    DetectorConfig {
        name: name.to_string(),
        backbone_gflops,
        neck: NeckConfig {
            in_channels: vec![256, 512, 1024, 2048],
            out_channels: 256,
            input_image_side: 1024,
            levels: vec![4, 8, 16, 32, 64],
            extra_level_via_pool: true,
        },
        rpn: RpnConfig {
            channels: 256,
            anchors_per_location: 3,
            reg_params_per_anchor: 6,
            levels: vec![4, 8, 16, 32, 64],
        },
        roi_head: RoiHeadConfig {
            num_rois: 1000,
            roi_feature_side: 7,
            roi_channels: 256,
            fc_dims: vec![1024, 1024],
            num_classes: 16,
        },
    }
}
