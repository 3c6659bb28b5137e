//! Greedy identification and separation of superposed lattice layers.
//!
//! Each round preprocesses the working image into uniform unit particles,
//! reads candidate bases off pairs of polar-spectrum peaks, recovers the
//! translation, scores candidates by an under/over-fitting energy, optionally
//! corrects the pick by re-identifying on its own remainder, subtracts the
//! winner, and repeats on the residual until too little intensity is left.

use num_complex::Complex64 as Complex;
use rand::SeedableRng;
use rand_distr::Distribution;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::lattice::{
    generate_points, rasterize, to_descriptors, LatticeBasis, LatticeDescriptors,
    TranslatedLattice, Window,
};
use crate::spectral::{find_peaks, polar_spectrum, subpixel_refine, SpectralPeak};

/// Pipeline parameters. `Default` reproduces the reference setup.
#[derive(Clone, Copy, Debug)]
pub struct LisaConfig {
    /// Number of spectral components kept for candidate construction.
    pub j_components: usize,
    /// Correction iterations per layer (1 disables correction).
    pub k_corrections: usize,
    /// Weight of the over-fitting term.
    pub gamma: f64,
    /// Guard for the over-fitting division.
    pub epsilon: f64,
    /// Particle PSF standard deviation in pixels.
    pub sigma: f64,
    /// Residual mean intensity below which the loop stops.
    pub stop_mean: f64,
    /// Detection threshold for particle local maxima.
    pub particle_thresh: f64,
    /// Angular resolution of the polar spectrum.
    pub n_angles: usize,
    /// Hard cap on extracted layers.
    pub max_layers: usize,
    /// Zero out sub-threshold background with Otsu's method before
    /// detecting particles.
    pub use_otsu: bool,
}

impl Default for LisaConfig {
    fn default() -> Self {
        LisaConfig {
            j_components: 6,
            k_corrections: 10,
            gamma: 10.0,
            epsilon: 1e-8,
            sigma: 1.35,
            stop_mean: 0.01,
            particle_thresh: 0.5,
            n_angles: 360,
            max_layers: 12,
            use_otsu: false,
        }
    }
}

impl LisaConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.j_components < 2 {
            return bad("at least 2 spectral components are required");
        }
        if self.k_corrections < 1 {
            return bad("correction count must be at least 1");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be nonnegative");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be positive");
        }
        if !(self.stop_mean > 0.0) {
            return bad("stop threshold must be positive");
        }
        if !(self.particle_thresh > 0.0 && self.particle_thresh <= 1.0) {
            return bad("particle threshold must lie in (0, 1]");
        }
        if self.n_angles < 2 {
            return bad("at least 2 angles are required");
        }
        if self.max_layers < 1 {
            return bad("layer cap must be at least 1");
        }
        Ok(())
    }
}

/// Under/over-fitting decomposition of a candidate's energy.
#[derive(Clone, Copy, Debug)]
pub struct CandidateScore {
    pub underfit: f64,
    pub overfit: f64,
    pub total: f64,
    /// Squared mass of the truncated remainder. Not part of `total`: the
    /// re-detection energies are blind to sub-pixel drift, so candidates
    /// whose totals tie are ranked by how little raw residue they leave.
    pub residual: f64,
}

/// `total` decides; totals within a relative hair are ranked by raw
/// residue, which still resolves sub-pixel differences between otherwise
/// equally covering candidates.
fn cmp_scores(a: &CandidateScore, b: &CandidateScore) -> std::cmp::Ordering {
    let scale = a.total.abs().max(b.total.abs()).max(1e-12);
    if (a.total - b.total).abs() > 1e-6 * scale {
        a.total.total_cmp(&b.total)
    } else {
        a.residual.total_cmp(&b.residual)
    }
}

/// One extracted layer.
#[derive(Clone, Copy, Debug)]
pub struct ScoredLayer {
    pub descriptors: LatticeDescriptors,
    pub mu: Complex,
    pub score: CandidateScore,
}

/// Why the extraction loop ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    ResidualBelowThreshold,
    NoCandidate,
    LayerCapReached,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::ResidualBelowThreshold => "residual-below-threshold",
            StopReason::NoCandidate => "no-candidate",
            StopReason::LayerCapReached => "layer-cap-reached",
        }
    }
}

/// Layers in extraction order plus the final residual statistics.
#[derive(Clone, Debug)]
pub struct SeparationResult {
    pub layers: Vec<ScoredLayer>,
    pub residual_mean: f64,
    pub iterations: usize,
    pub stop: StopReason,
}

impl SeparationResult {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "layers": self.layers.iter().map(|l| {
                serde_json::json!({
                    "beta": [l.descriptors.beta().re, l.descriptors.beta().im],
                    "rho": [l.descriptors.rho().re, l.descriptors.rho().im],
                    "mu": [l.mu.re, l.mu.im],
                    "underfit": l.score.underfit,
                    "overfit": l.score.overfit,
                    "total": l.score.total,
                })
            }).collect::<Vec<_>>(),
            "residual_mean": self.residual_mean,
            "iterations": self.iterations,
            "stop": self.stop.as_str(),
        })
    }
}

/// Integer positions of local maxima strictly above `thresh`. On plateaus
/// the rule (strict against the east/south neighbors, non-strict against the
/// others) keeps exactly one representative.
pub(crate) fn local_maxima(img: &GrayImage, thresh: f64) -> Vec<(usize, usize)> {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = img.get(x, y);
            if v <= thresh {
                continue;
            }
            // Strict against neighbors later in scan order...
            let strict = [(1i64, 0i64), (-1, 1), (0, 1), (1, 1)];
            // ...non-strict against the earlier ones.
            let loose = [(-1i64, 0i64), (-1, -1), (0, -1), (1, -1)];
            let ok = strict.iter().all(|&(dx, dy)| {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 || v > img.get(nx as usize, ny as usize)
            }) && loose.iter().all(|&(dx, dy)| {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 || v >= img.get(nx as usize, ny as usize)
            });
            if ok {
                out.push((x, y));
            }
        }
    }
    out
}

/// Sub-pixel particle positions: local maxima refined where the
/// log-quadratic fit is available, integer positions otherwise.
pub(crate) fn refined_maxima(img: &GrayImage, thresh: f64) -> Vec<Complex> {
    local_maxima(img, thresh)
        .into_iter()
        .map(|(x, y)| match subpixel_refine(img, x, y) {
            Ok((fx, fy)) => Complex::new(fx, fy),
            Err(_) => Complex::new(x as f64, y as f64),
        })
        .collect()
}

pub(crate) fn preprocess_with(
    img: &GrayImage,
    sigma: f64,
    thresh: f64,
    use_otsu: bool,
) -> GrayImage {
    let denoised;
    let src = if use_otsu {
        match otsu_threshold(img) {
            Ok(t) => {
                let mut copy = img.clone();
                for v in copy.data_mut() {
                    if *v < t {
                        *v = 0.0;
                    }
                }
                denoised = copy;
                &denoised
            }
            Err(_) => img,
        }
    } else {
        img
    };
    let points = refined_maxima(src, thresh);
    let mut out = GrayImage::new(img.width(), img.height()).expect("source image is non-empty");
    crate::image::stamp_points(&mut out, &points, sigma);
    out
}

/// The particle-uniformization operator: every detected particle is replaced
/// by a unit-height Gaussian of width `sigma` at its refined position.
pub fn preprocess(img: &GrayImage, sigma: f64) -> GrayImage {
    let cfg = LisaConfig::default();
    preprocess_with(img, sigma, cfg.particle_thresh, false)
}

/// Histogram threshold maximizing between-class variance (256 bins).
pub fn otsu_threshold(img: &GrayImage) -> Result<f64> {
    let mut hist = [0usize; 256];
    for &v in img.data() {
        hist[((v * 255.0).round() as usize).min(255)] += 1;
    }
    let total = img.data().len() as f64;
    let grand_sum: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let mut best = (0usize, -1.0f64);
    let (mut w0, mut sum0) = (0.0f64, 0.0f64);
    for k in 0..255 {
        w0 += hist[k] as f64;
        sum0 += k as f64 * hist[k] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (grand_sum - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best.1 {
            best = (k, between);
        }
    }
    if best.1 < 0.0 {
        return Err(Error::ConstantImage);
    }
    Ok((best.0 as f64 + 0.5) / 255.0)
}

/// Spatial basis from two non-collinear frequency peaks via the
/// cross-product (dual basis) construction, canonicalized.
pub fn candidate_from_peaks(p1: &SpectralPeak, p2: &SpectralPeak) -> Result<LatticeDescriptors> {
    let w1 = (p1.radius * p1.angle.cos(), p1.radius * p1.angle.sin());
    let w2 = (p2.radius * p2.angle.cos(), p2.radius * p2.angle.sin());
    let det = w1.0 * w2.1 - w1.1 * w2.0;
    let scale = (p1.radius * p2.radius).max(f64::MIN_POSITIVE);
    if det.abs() <= 1e-3 * scale {
        return Err(Error::CollinearPeaks);
    }
    let b1 = Complex::new(w2.1, -w2.0) / det.abs();
    let b2 = Complex::new(-w1.1, w1.0) / det.abs();
    let basis = LatticeBasis::new(b1, b2).map_err(|_| Error::CollinearPeaks)?;
    to_descriptors(&basis)
}

const TRANSLATION_GRID_MIN: usize = 16;
const TRANSLATION_GRID_MAX: usize = 64;
const TRANSLATION_MAX_PARTICLES: usize = 400;
/// How many offset-density modes are handed to the scorer. Translated
/// copies of one lattice fold onto distinct modes of the same cell; keeping
/// only the global peak would let a blurred compromise between two close
/// copies shadow both.
const TRANSLATION_MODES: usize = 5;

pub(crate) fn translation_modes(
    d: &LatticeDescriptors,
    img: &GrayImage,
    sigma: f64,
    thresh: f64,
) -> Vec<Complex> {
    let particles = refined_maxima(img, thresh);
    if particles.is_empty() {
        return vec![Complex::new(0.0, 0.0)];
    }
    let stride = particles.len().div_ceil(TRANSLATION_MAX_PARTICLES);
    let basis = d.basis();
    let (b1, b2) = (basis.b1, basis.b2);
    let det = basis.det();
    // Fractional lattice coordinates of each particle.
    let coords: Vec<(f64, f64)> = particles
        .iter()
        .step_by(stride)
        .map(|p| {
            let u = (b2.im * p.re - b2.re * p.im) / det;
            let v = (-b1.im * p.re + b1.re * p.im) / det;
            (u.rem_euclid(1.0), v.rem_euclid(1.0))
        })
        .collect();

    let g = ((2.0 * b1.norm().max(b2.norm())).ceil() as usize)
        .clamp(TRANSLATION_GRID_MIN, TRANSLATION_GRID_MAX);
    // Narrower than the particle footprint: offsets a few pixels apart must
    // stay separate modes rather than blur into their midpoint.
    let kde_sigma = 0.75 * sigma;
    let inv = 1.0 / (2.0 * kde_sigma * kde_sigma);
    let cutoff = 16.0 * kde_sigma * kde_sigma;
    let mut density = vec![0.0f64; g * g];
    for (ui, vi) in &coords {
        for jv in 0..g {
            let mut dv = jv as f64 / g as f64 - vi;
            dv -= dv.round();
            for ju in 0..g {
                let mut du = ju as f64 / g as f64 - ui;
                du -= du.round();
                let disp = du * b1 + dv * b2;
                let n2 = disp.norm_sqr();
                if n2 <= cutoff {
                    density[jv * g + ju] += (-n2 * inv).exp();
                }
            }
        }
    }

    let global_peak = density.iter().cloned().fold(0.0f64, f64::max);
    if global_peak <= 0.0 {
        return vec![Complex::new(0.0, 0.0)];
    }

    // Local maxima of the periodic density surface, strongest first.
    let at = |ju: usize, jv: usize| density[(jv % g) * g + (ju % g)];
    let mut modes: Vec<(f64, usize, usize)> = Vec::new();
    for jv in 0..g {
        for ju in 0..g {
            let v = at(ju, jv);
            if v <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'probe: for dv in [g - 1, 0, 1] {
                for du in [g - 1, 0, 1] {
                    if du == 0 && dv == 0 {
                        continue;
                    }
                    if at(ju + du, jv + dv) > v {
                        is_max = false;
                        break 'probe;
                    }
                }
            }
            if is_max {
                modes.push((v, ju, jv));
            }
        }
    }
    modes.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    modes.truncate(TRANSLATION_MODES);

    let half = g / 2;
    let mut out: Vec<Complex> = Vec::new();
    for &(_, bu, bv) in &modes {
        // Center the torus on the mode so the quadratic refinement sees a
        // full neighborhood, then refine on the density surface.
        let mut rolled = GrayImage::new(g, g).expect("grid is non-empty");
        for y in 0..g {
            for x in 0..g {
                let su = (x + bu + g - half) % g;
                let sv = (y + bv + g - half) % g;
                rolled.set(x, y, (density[sv * g + su] / global_peak).min(1.0));
            }
        }
        let (rx, ry) = subpixel_refine(&rolled, half, half)
            .unwrap_or((half as f64, half as f64));
        let u_star = (bu as f64 + rx - half as f64) / g as f64;
        let v_star = (bv as f64 + ry - half as f64) / g as f64;
        let mu_raw = u_star * b1 + v_star * b2;

        // Smallest centered representative, lexicographic tie-break.
        let mut best_mu = mu_raw;
        for m in -2i64..=2 {
            for n in -2i64..=2 {
                let cand = mu_raw - m as f64 * b1 - n as f64 * b2;
                let better =
                    (cand.norm(), cand.re, cand.im) < (best_mu.norm(), best_mu.re, best_mu.im);
                if better {
                    best_mu = cand;
                }
            }
        }
        if !out.iter().any(|&q| (q - best_mu).norm() < 0.5) {
            out.push(best_mu);
        }
    }
    if out.is_empty() {
        out.push(Complex::new(0.0, 0.0));
    }
    out
}

pub(crate) fn find_translation_with(
    d: &LatticeDescriptors,
    img: &GrayImage,
    sigma: f64,
    thresh: f64,
) -> Complex {
    translation_modes(d, img, sigma, thresh)[0]
}

/// Translation of the candidate lattice best aligned with the image's
/// particles: the strongest mode of the particle-offset density over the
/// lattice's fundamental cell, quadratically refined.
pub fn find_translation(d: &LatticeDescriptors, img: &GrayImage, sigma: f64) -> Complex {
    find_translation_with(d, img, sigma, LisaConfig::default().particle_thresh)
}

fn stamp_image(d: &LatticeDescriptors, mu: Complex, sigma: f64, w: usize, h: usize) -> GrayImage {
    let lat = TranslatedLattice { descriptors: *d, mu };
    rasterize(&[lat], sigma, w, h).expect("valid candidate stamps")
}

/// Smallest remainder height still treated as leftover structure: above it
/// the remainder is rescaled to unit height before re-detection. Pure
/// subtraction debris from a sub-pixel misfit stays below ~0.06 and must
/// not be rescaled into phantom particles, while a candidate whose points
/// sit a pixel off every particle leaves bumps of 0.2+ that have to be
/// re-detected and charged as under-fitting.
const NORM_GATE: f64 = 0.1;

/// Under/over-fitting energy of a translated candidate against `u`.
///
/// The under-fitting term preprocesses the truncated remainder and measures
/// what overlaps the preprocessed image; the remainder is rescaled to unit
/// height first whenever it still carries structure above `NORM_GATE`. The
/// over-fitting term compares the candidate's point count against the
/// number of its points actually backed by a particle.
pub fn score_candidate(
    d: &LatticeDescriptors,
    mu: Complex,
    u: &GrayImage,
    cfg: &LisaConfig,
) -> CandidateScore {
    let f_u = preprocess_with(u, cfg.sigma, cfg.particle_thresh, false);
    score_candidate_with(d, mu, u, &f_u, cfg)
}

/// `score_candidate` against a precomputed `preprocess_with(u, ..)`, which
/// is candidate-independent and worth hoisting out of candidate loops.
fn score_candidate_with(
    d: &LatticeDescriptors,
    mu: Complex,
    u: &GrayImage,
    f_u: &GrayImage,
    cfg: &LisaConfig,
) -> CandidateScore {
    let (w, h) = (u.width(), u.height());
    let stamp = stamp_image(d, mu, cfg.sigma, w, h);
    let res = u.sub_clamped(&stamp).expect("same dimensions");
    let residual = res.data().iter().map(|v| v * v).sum::<f64>();
    let detect = if res.max() >= NORM_GATE { res.normalized() } else { res };
    let f_res = preprocess_with(&detect, cfg.sigma, cfg.particle_thresh, false);
    let underfit = f_res
        .data()
        .iter()
        .zip(f_u.data().iter())
        .map(|(a, b)| (a * b) * (a * b))
        .sum::<f64>()
        .sqrt();

    let lat = TranslatedLattice { descriptors: *d, mu };
    let points = generate_points(&lat, Window::of_image(w, h));
    let covered = stamp.min_with(u).expect("same dimensions");
    let maxima = local_maxima(&covered, cfg.particle_thresh);
    let reach = 1.5 * cfg.sigma;
    let filled = points
        .iter()
        .filter(|p| {
            maxima
                .iter()
                .any(|&(mx, my)| {
                    let dx = mx as f64 - p.re;
                    let dy = my as f64 - p.im;
                    dx.hypot(dy) <= reach
                })
        })
        .count();
    let overfit = (points.len() as f64 / (filled as f64 + cfg.epsilon) - 1.0).abs();
    CandidateScore { underfit, overfit, total: underfit + cfg.gamma * overfit, residual }
}

fn candidate_key(d: &LatticeDescriptors) -> (i64, i64, i64, i64) {
    let q = 1e6;
    (
        (d.beta().re * q).round() as i64,
        (d.beta().im * q).round() as i64,
        (d.rho().re * q).round() as i64,
        (d.rho().im * q).round() as i64,
    )
}

/// Best-scoring lattice candidate over all non-collinear peak pairs.
pub fn identify_best(
    u: &GrayImage,
    cfg: &LisaConfig,
) -> Result<(LatticeDescriptors, Complex, CandidateScore)> {
    cfg.validate()?;
    let spec = polar_spectrum(u, cfg.n_angles)?;
    let peaks = find_peaks(&spec, cfg.j_components)?;
    let area = (u.width() * u.height()) as f64;

    let f_u = preprocess_with(u, cfg.sigma, cfg.particle_thresh, false);
    let mut seen = std::collections::HashSet::new();
    let mut best: Option<(LatticeDescriptors, Complex, CandidateScore)> = None;
    for i in 0..peaks.len() {
        for j in i + 1..peaks.len() {
            let Ok(d) = candidate_from_peaks(&peaks[i], &peaks[j]) else { continue };
            if d.det() > area || d.beta().norm() < 2.0 {
                continue;
            }
            if !seen.insert(candidate_key(&d)) {
                continue;
            }
            for mu in translation_modes(&d, u, cfg.sigma, cfg.particle_thresh) {
                let score = score_candidate_with(&d, mu, u, &f_u, cfg);
                let better = match &best {
                    None => true,
                    Some((bd, _, bs)) => cmp_scores(&score, bs)
                        .then_with(|| {
                            (d.beta().norm(), d.beta().arg())
                                .partial_cmp(&(bd.beta().norm(), bd.beta().arg()))
                                .expect("finite descriptors")
                        })
                        .is_lt(),
                };
                if better {
                    best = Some((d, mu, score));
                }
            }
        }
    }
    best.ok_or(Error::NoValidCandidate)
}

/// Re-identifies on the candidate's own remainder up to `K - 1` times and
/// keeps the best-scoring candidate seen (including the input, so the
/// result is never worse).
pub fn correct_candidate(
    u: &GrayImage,
    first: (LatticeDescriptors, Complex, CandidateScore),
    cfg: &LisaConfig,
) -> (LatticeDescriptors, Complex, CandidateScore) {
    let f_u = preprocess_with(u, cfg.sigma, cfg.particle_thresh, false);
    let mut chain = first;
    let mut best = first;
    for _ in 1..cfg.k_corrections {
        let stamp = stamp_image(&chain.0, chain.1, cfg.sigma, u.width(), u.height());
        let res = u.sub_clamped(&stamp).expect("same dimensions");
        let f_res = preprocess_with(&res, cfg.sigma, cfg.particle_thresh, false);
        let Ok((d, _, _)) = identify_best(&f_res, cfg) else { break };
        let (mu, score) = translation_modes(&d, u, cfg.sigma, cfg.particle_thresh)
            .into_iter()
            .map(|m| (m, score_candidate_with(&d, m, u, &f_u, cfg)))
            .min_by(|a, b| cmp_scores(&a.1, &b.1))
            .expect("at least one translation mode");
        chain = (d, mu, score);
        if cmp_scores(&score, &best.2).is_lt() {
            best = chain;
        }
    }
    best
}

/// Runs the full greedy separation loop on a raw image.
pub fn lisa_run(img: &GrayImage, cfg: &LisaConfig) -> Result<SeparationResult> {
    cfg.validate()?;
    let mut work = preprocess_with(img, cfg.sigma, cfg.particle_thresh, cfg.use_otsu);
    let mut layers = Vec::new();
    let stop;
    loop {
        if work.mean() < cfg.stop_mean {
            stop = StopReason::ResidualBelowThreshold;
            break;
        }
        if layers.len() >= cfg.max_layers {
            stop = StopReason::LayerCapReached;
            break;
        }
        let found = match identify_best(&work, cfg) {
            Ok(f) => f,
            Err(Error::EmptySpectrum) | Err(Error::NoValidCandidate) => {
                stop = StopReason::NoCandidate;
                break;
            }
            Err(e) => return Err(e),
        };
        let (d, mu, score) = if cfg.k_corrections > 1 {
            correct_candidate(&work, found, cfg)
        } else {
            found
        };
        layers.push(ScoredLayer { descriptors: d, mu, score });
        let stamp = stamp_image(&d, mu, cfg.sigma, work.width(), work.height());
        let res = work.sub_clamped(&stamp).expect("same dimensions");
        if res.mean() < cfg.stop_mean {
            work = res;
            stop = StopReason::ResidualBelowThreshold;
            break;
        }
        work = preprocess_with(&res, cfg.sigma, cfg.particle_thresh, false);
    }
    Ok(SeparationResult {
        residual_mean: work.mean(),
        iterations: layers.len(),
        layers,
        stop,
    })
}

/// Adds i.i.d. Gaussian offsets (std `s` per coordinate) to each point,
/// deterministically from `seed`. `s = 0` returns the input unchanged.
pub fn perturb_lattice(points: &[Complex], s: f64, seed: u64) -> Vec<Complex> {
    if s == 0.0 {
        return points.to_vec();
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = rand_distr::Normal::new(0.0, s).expect("positive std");
    points
        .iter()
        .map(|p| {
            let dx: f64 = normal.sample(&mut rng);
            let dy: f64 = normal.sample(&mut rng);
            Complex::new(p.re + dx, p.im + dy)
        })
        .collect()
}
