use thiserror::Error;

/// Failure modes shared across the crate.
#[derive(Error, Debug)]
pub enum Error {
    #[error("degenerate basis: vectors are zero or collinear")]
    DegenerateBasis,
    #[error("scale descriptor must be nonzero")]
    ZeroScale,
    #[error("shape descriptor lies outside the canonical region")]
    OutOfRegion,
    #[error("integer action must have positive determinant")]
    BadAction,
    #[error("shape descriptors must lie in the upper half plane")]
    NotUpperHalfPlane,
    #[error("bad dimensions: {0}x{1}")]
    BadDimensions(usize, usize),
    #[error("spectrum contains no energy outside the DC region")]
    EmptySpectrum,
    #[error("neighborhood too flat for sub-pixel refinement at ({0}, {1})")]
    FlatNeighborhood(usize, usize),
    #[error("argument out of range: {0}")]
    OutOfRange(String),
    #[error("peak pair is collinear")]
    CollinearPeaks,
    #[error("no valid lattice candidate could be formed")]
    NoValidCandidate,
    #[error("image is constant; no threshold separates it")]
    ConstantImage,
    #[error("overlay supports at most {0} layers, got {1}")]
    TooManyLayers(usize, usize),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
