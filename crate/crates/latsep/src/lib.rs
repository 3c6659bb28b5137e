//! Lattice representation, a translation-invariant lattice metric, and
//! greedy identification/separation of superposed lattice layers in images.
//!
//! The crate is organized bottom-up:
//!
//! - [`image`]: minimal grayscale/RGB containers, PGM/PPM IO, synthetic
//!   scene generation and layer overlays.
//! - [`lattice`]: bases, canonical (scale, shape) descriptors, unimodular
//!   shape actions, point generation, rasterization, sublattices and
//!   wallpaper classification.
//! - [`metric`]: the scale, shape and combined lattice distances.
//! - [`spectral`]: Radon transform, polar Fourier magnitudes, peak picking
//!   and sub-pixel refinement.
//! - [`lisa`]: the iterative identify-score-correct-subtract separation
//!   pipeline.

pub mod error;
pub mod image;
pub mod lattice;
pub mod lisa;
pub mod metric;
pub mod spectral;

/// Tolerance for exact-equivalence decisions (canonical descriptors agreeing
/// up to floating-point noise).
pub const TOL_EQ: f64 = 1e-9;

/// Tolerance for estimated quantities recovered from images (descriptors
/// read off spectra, refined positions).
pub const TOL_EST: f64 = 1e-3;

pub use error::{Error, Result};
pub use image::{
    generate_scene, render_overlay, GrayImage, LayerSpec, MaskKind, MaskSpec, RgbImage, SceneSpec,
    OVERLAY_PALETTE,
};
pub use lattice::{
    are_equivalent, are_equivalent_est, are_equivalent_tol, classify_wallpaper,
    easy_sublattice_families, equivalent_shape_actions, gauss_reduce, generate_points, is_minimal,
    parentlattice, rasterize, reciprocal, sublattice, to_descriptors, Complex, IntegerAction,
    LatticeBasis, LatticeDescriptors, TranslatedLattice, WallpaperClass, Window,
};
pub use lisa::{
    candidate_from_peaks, correct_candidate, find_translation, identify_best, lisa_run,
    otsu_threshold, perturb_lattice, preprocess, score_candidate, CandidateScore, LisaConfig,
    ScoredLayer, SeparationResult, StopReason,
};
pub use metric::{dist_lattice, dist_product, dist_scale, dist_shape, fourtuple, MetricConfig, MetricResult};
pub use spectral::{
    find_peaks, polar_spectrum, radial_refine, radon, subpixel_refine, PolarSpectrum, Sinogram,
    SpectralPeak,
};
