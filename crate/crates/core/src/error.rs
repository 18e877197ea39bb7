use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid anchor spec: {0}")]
    InvalidAnchorSpec(String),

    #[error("level {level} out of range ({levels} levels)")]
    LevelOutOfRange { level: usize, levels: usize },

    #[error("at least one anchor lattice is required")]
    EmptyLattices,

    #[error("threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),

    #[error("raster oracle resolution {0} too coarse (minimum 64)")]
    ResolutionTooCoarse(usize),

    #[error("unsupported kernel: {kind} {size}x{size}")]
    UnsupportedKernel { kind: String, size: usize },

    #[error("kernel size {kernel} exceeds map dims {height}x{width}")]
    KernelLargerThanMap {
        kernel: usize,
        height: usize,
        width: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("anchor index ({i}, {j}, {k}) out of range for lattice {h}x{w}x{a}")]
    AnchorIndexOutOfRange {
        i: usize,
        j: usize,
        k: usize,
        h: usize,
        w: usize,
        a: usize,
    },

    #[error("invalid pipeline config: {0}")]
    InvalidPipelineConfig(String),

    #[error("invalid cost config: {0}")]
    InvalidCostConfig(String),

    #[error("line {line}: {message}")]
    AnnotationParse { line: usize, message: String },

    #[error("bad tensor file: {0}")]
    BadTensor(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
