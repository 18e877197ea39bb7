//! Run configuration: optional JSON config file plus flag overrides. The
//! fully-resolved settings are echoed into every report.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sfdet_core::anchors::AnchorSpec;
use sfdet_core::proposals::PipelineConfig;
use sfdet_core::scoremap::{make_kernel, Kernel, KernelKind};
use std::path::Path;

/// Kernel selection as it appears in config files: a named stencil or
/// explicit custom weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: String,
    pub size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            kind: "unsharp".into(),
            size: 5,
            weights: None,
        }
    }
}

impl KernelSpec {
    pub fn resolve(&self) -> Result<Kernel> {
        if let Some(weights) = &self.weights {
            return Ok(Kernel::from_weights(self.size, weights.clone())?);
        }
        let kind: KernelKind = self.kind.parse()?;
        Ok(make_kernel(kind, self.size)?)
    }
}

/// Pipeline settings in config-file form.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineParams {
    pub k_pre: usize,
    pub k_post: usize,
    pub nms_iou_threshold: f64,
    pub hpf_enabled: bool,
    pub hpf_kernel: KernelSpec,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            k_pre: 2000,
            k_post: 2000,
            nms_iou_threshold: 0.8,
            hpf_enabled: true,
            hpf_kernel: KernelSpec::default(),
        }
    }
}

impl PipelineParams {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let cfg = PipelineConfig {
            k_pre: self.k_pre,
            k_post: self.k_post,
            nms_iou_threshold: self.nms_iou_threshold,
            hpf_enabled: self.hpf_enabled,
            hpf_kernel: self.hpf_kernel.resolve()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Root of the optional `--config` JSON file. Every section has defaults;
/// command-line flags override file values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub anchors: AnchorSpec,
    pub pipeline: PipelineParams,
    /// Downsample factor of the retained single feature.
    pub stride: f64,
    /// Minimum IoU for a positive anchor match.
    pub pos_threshold: f64,
    /// Image side assumed when building lattices from annotations.
    pub image_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            anchors: AnchorSpec::dota_adjusted(),
            pipeline: PipelineParams::default(),
            stride: 8.0,
            pos_threshold: 0.5,
            image_size: 1024,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if cfg.stride <= 0.0 {
            bail!("config stride must be > 0");
        }
        cfg.anchors.validate()?;
        Ok(cfg)
    }
}
