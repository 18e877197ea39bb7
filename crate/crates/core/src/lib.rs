//! Analysis toolkit for single-feature two-stage detectors.
//!
//! The crate covers the algorithmic side of simplifying a feature-pyramid
//! detector down to one feature level: exact rotated-box geometry and IoU,
//! anchor lattice generation and coverage analysis, RPN score-map filtering
//! and proposal post-processing, an analytic per-component FLOPs model, and
//! DOTA annotation ingestion with image tiling.

pub mod anchors;
pub mod costmodel;
pub mod dota;
pub mod geom;
pub mod proposals;
pub mod scoremap;
pub mod tensor;

mod error;

pub use error::{Error, Result};

pub use anchors::{AnchorLattice, AnchorSpec, AssignIouMode, Assignment, CoverageReport};
pub use costmodel::{CostBreakdown, DetectorConfig, NeckConfig, RoiHeadConfig, RpnConfig};
pub use dota::{Annotation, TileWindow};
pub use geom::{ConvexPolygon, HBox, OBox};
pub use proposals::{DeltaMap, PipelineConfig, Proposal};
pub use scoremap::{Kernel, KernelKind, ScoreMap};
