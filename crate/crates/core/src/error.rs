use alloc::string::String;

/// Errors raised anywhere in the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("Jacobi eigen-solver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("dimension {0} is not a power of two")]
    NonPowerOfTwo(usize),
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("loss must be a 1x1 value, got {rows}x{cols}")]
    NotScalarLoss { rows: usize, cols: usize },
    #[error("state-space realization requires stride 1, got ({0}, {1})")]
    StridedInput(usize, usize),
    #[error("realization breaks the fixed shift structure: {0}")]
    StructureViolation(String),
    #[error("channel mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("spatial size {size} not divisible by stride {stride}")]
    NotDivisible { size: usize, stride: usize },
    #[error("tall Cayley transform needs rows >= cols, got {rows}x{cols}")]
    TooFewRows { rows: usize, cols: usize },
    #[error("gain chain mismatch at layer {layer}: {detail}")]
    ChainMismatch { layer: usize, detail: String },
    #[error("invalid pooling geometry: {0}")]
    InvalidGeometry(String),
    #[error("loss became non-finite at epoch {epoch}, step {step}")]
    DivergedLoss { epoch: usize, step: usize },
    #[error("invalid configuration: {0}")]
    InvalidSpec(String),
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("invalid layer chain: {0}")]
    Shape(String),
    #[error("bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },
    #[error("record count mismatch: {images} images, {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("file truncated: needed {needed} bytes, found {found}")]
    TruncatedFile { needed: usize, found: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, detail: String) -> Error {
    Error::ShapeMismatch { op, detail }
}
