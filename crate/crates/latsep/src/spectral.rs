//! Radon projections, the polar Fourier magnitude built from them, and peak
//! extraction with sub-bin refinement.
//!
//! Projections are accumulated by splatting each pixel onto a half-pixel
//! offset grid with a narrow Gaussian kernel whose weights are normalized per
//! splat, so every projection carries exactly the image mass. The kernel's
//! frequency rolloff is divided back out of the per-angle FFT magnitudes,
//! which keeps the polar spectrum consistent with the true two-dimensional
//! transform of the image well past the frequencies lattice work needs.

use std::sync::OnceLock;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Offset-grid spacing in pixels.
const DELTA: f64 = 0.5;
/// Splat kernel width in pixels.
const SIGMA_K: f64 = 0.65;
/// Kernel support half-width in offset bins.
const HALF_TAPS: i64 = 8;
const TAPS: usize = 2 * HALF_TAPS as usize + 1;
/// Quantization of the fractional splat position.
const TABLE_ROWS: usize = 4096;
/// Extra offset-grid slack beyond the image half-diagonal, in pixels.
const GRID_MARGIN: f64 = 5.0;

fn kernel_table() -> &'static Vec<[f64; TAPS]> {
    static TABLE: OnceLock<Vec<[f64; TAPS]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let sigma_bins = SIGMA_K / DELTA;
        let inv = 1.0 / (2.0 * sigma_bins * sigma_bins);
        // Rows are keyed at the nodes r / TABLE_ROWS (both ends inclusive)
        // and looked up by rounding, so a fractional position of exactly
        // zero gets an exact kernel and mirrored positions land on exactly
        // complementary rows: symmetric inputs project symmetrically.
        (0..=TABLE_ROWS)
            .map(|r| {
                let frac = r as f64 / TABLE_ROWS as f64;
                let mut row = [0.0; TAPS];
                let mut sum = 0.0;
                for (t, slot) in row.iter_mut().enumerate() {
                    let d = t as f64 - HALF_TAPS as f64 - frac;
                    *slot = (-d * d * inv).exp();
                    sum += *slot;
                }
                for slot in row.iter_mut() {
                    *slot /= sum;
                }
                row
            })
            .collect()
    })
}

/// Line-integral projections of an image, one row per angle.
#[derive(Clone, Debug)]
pub struct Sinogram {
    /// Projection angles in `[0, pi)`, strictly increasing.
    pub angles: Vec<f64>,
    /// Signed offsets from the image center, in pixels.
    pub offsets: Vec<f64>,
    /// `values[i][j]` is the projection at `angles[i]`, `offsets[j]`.
    pub values: Vec<Vec<f64>>,
}

/// Projects the image onto `n_angles` directions evenly covering `[0, pi)`.
pub fn radon(img: &GrayImage, n_angles: usize) -> Result<Sinogram> {
    if n_angles < 2 {
        return Err(Error::InvalidParameter("radon needs at least 2 angles".into()));
    }
    let (w, h) = (img.width(), img.height());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let reach = (cx.hypot(cy) + GRID_MARGIN).ceil();
    let n_bins = (2.0 * reach / DELTA) as usize + 1;
    let offsets: Vec<f64> = (0..n_bins).map(|j| -reach + j as f64 * DELTA).collect();
    let table = kernel_table();
    let data = img.data();

    let per_angle: Vec<(f64, Vec<f64>)> = (0..n_angles)
        .into_par_iter()
        .map(|i| {
            let alpha = i as f64 * std::f64::consts::PI / n_angles as f64;
            let (sin_a, cos_a) = alpha.sin_cos();
            let mut row = vec![0.0f64; n_bins];
            for y in 0..h {
                let mut s = -cx * cos_a + (y as f64 - cy) * sin_a;
                let base_idx = y * w;
                for x in 0..w {
                    let v = data[base_idx + x];
                    if v != 0.0 {
                        let t = (s + reach) / DELTA;
                        let cell = t.floor();
                        let frac = t - cell;
                        let weights =
                            &table[((frac * TABLE_ROWS as f64).round() as usize).min(TABLE_ROWS)];
                        let start = cell as i64 - HALF_TAPS;
                        debug_assert!(start >= 0 && (start as usize) + TAPS <= n_bins);
                        let slots = &mut row[start as usize..start as usize + TAPS];
                        for (slot, wt) in slots.iter_mut().zip(weights.iter()) {
                            *slot += v * wt;
                        }
                    }
                    s += cos_a;
                }
            }
            (alpha, row)
        })
        .collect();
    let (angles, values) = per_angle.into_iter().unzip();
    Ok(Sinogram { angles, offsets, values })
}

/// Fourier magnitudes of the projections on a polar frequency grid.
#[derive(Clone, Debug)]
pub struct PolarSpectrum {
    /// Angles as in the sinogram.
    pub angles: Vec<f64>,
    /// Radial frequencies in cycles per pixel, starting one bin above DC.
    pub radii: Vec<f64>,
    /// `magnitudes[i][k]` at `angles[i]`, `radii[k]`; nonnegative.
    pub magnitudes: Vec<Vec<f64>>,
    /// Frequencies at or below this are treated as DC and excluded from
    /// peak finding.
    pub dc_radius: f64,
}

impl PolarSpectrum {
    /// Radial bin spacing in cycles per pixel.
    pub fn radial_step(&self) -> f64 {
        self.radii[0]
    }

    /// Angular bin spacing in radians.
    pub fn angular_step(&self) -> f64 {
        std::f64::consts::PI / self.angles.len() as f64
    }
}

fn next_pow2(n: usize) -> usize {
    let mut p = 1;
    while p < n {
        p *= 2;
    }
    p
}

/// Per-angle Fourier magnitude of the projections, with the splat kernel's
/// rolloff divided out. Radii are kept up to 0.5 cycles/pixel.
pub fn polar_spectrum(img: &GrayImage, n_angles: usize) -> Result<PolarSpectrum> {
    let sino = radon(img, n_angles)?;
    let m = sino.offsets.len();
    let len = next_pow2(2 * m);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);

    // Frequency index r corresponds to r / (len * DELTA) cycles per pixel;
    // keep everything up to 0.5 cycles/pixel.
    let step = 1.0 / (len as f64 * DELTA);
    let kept = len / 4;
    let radii: Vec<f64> = (1..=kept).map(|r| r as f64 * step).collect();
    let comp: Vec<f64> = radii
        .iter()
        .map(|g| (2.0 * std::f64::consts::PI.powi(2) * SIGMA_K * SIGMA_K * g * g).exp())
        .collect();

    let scratch_len = fft.get_inplace_scratch_len();
    let magnitudes: Vec<Vec<f64>> = sino
        .values
        .par_iter()
        .map_init(
            || (vec![Complex64::new(0.0, 0.0); len], vec![Complex64::new(0.0, 0.0); scratch_len]),
            |(buf, scratch), row| {
                for slot in buf.iter_mut() {
                    *slot = Complex64::new(0.0, 0.0);
                }
                for (slot, &v) in buf.iter_mut().zip(row.iter()) {
                    slot.re = v;
                }
                fft.process_with_scratch(buf, scratch);
                (1..=kept).map(|r| buf[r].norm() * comp[r - 1]).collect()
            },
        )
        .collect();

    let (w, h) = (img.width(), img.height());
    let dc_radius = (2.0 * step).max(3.0 / w.min(h) as f64);
    Ok(PolarSpectrum { angles: sino.angles, radii, magnitudes, dc_radius })
}

/// One refined spectral peak.
#[derive(Clone, Copy, Debug)]
pub struct SpectralPeak {
    /// Radial frequency in cycles per pixel, sub-bin refined.
    pub radius: f64,
    /// Angle in `[0, pi)`, sub-bin refined.
    pub angle: f64,
    /// Magnitude of the peak cell.
    pub magnitude: f64,
}

/// Connected components of `mags > threshold` over the masked radial range,
/// 8-connected with angle wraparound. Returns per-cell component ids
/// (`usize::MAX` for background) and the component count.
fn components(
    mags: &[Vec<f64>],
    first_col: usize,
    threshold: f64,
    labels: Option<&mut Vec<usize>>,
) -> usize {
    let n = mags.len();
    let m = mags[0].len();
    let idx = |i: usize, k: usize| i * m + k;
    let mut label_store;
    let labels = match labels {
        Some(l) => {
            l.clear();
            l.resize(n * m, usize::MAX);
            l
        }
        None => {
            label_store = vec![usize::MAX; n * m];
            &mut label_store
        }
    };
    let mut count = 0;
    let mut stack = Vec::new();
    for i in 0..n {
        for k in first_col..m {
            if mags[i][k] <= threshold || labels[idx(i, k)] != usize::MAX {
                continue;
            }
            labels[idx(i, k)] = count;
            stack.push((i, k));
            while let Some((ci, ck)) = stack.pop() {
                for di in -1i64..=1 {
                    for dk in -1i64..=1 {
                        if di == 0 && dk == 0 {
                            continue;
                        }
                        let ni = (ci as i64 + di).rem_euclid(n as i64) as usize;
                        let nk = ck as i64 + dk;
                        if nk < first_col as i64 || nk >= m as i64 {
                            continue;
                        }
                        let nk = nk as usize;
                        if mags[ni][nk] > threshold && labels[idx(ni, nk)] == usize::MAX {
                            labels[idx(ni, nk)] = count;
                            stack.push((ni, nk));
                        }
                    }
                }
            }
            count += 1;
        }
    }
    count
}

/// Finds up to `max_components` peaks: picks a magnitude threshold by
/// bisection so the super-threshold region splits into at most that many
/// connected components, then reports each component's strongest cell with
/// the radius refined by impulse-train correlation and the angle by a
/// three-point log fit.
pub fn find_peaks(spec: &PolarSpectrum, max_components: usize) -> Result<Vec<SpectralPeak>> {
    if max_components < 1 {
        return Err(Error::InvalidParameter("component count must be at least 1".into()));
    }
    let n = spec.angles.len();
    let m = spec.radii.len();
    // Columns at or below the DC exclusion radius never participate.
    let first_col = spec.radii.iter().position(|&r| r > spec.dc_radius).unwrap_or(m);
    let mut max_mag: f64 = 0.0;
    for row in &spec.magnitudes {
        for &v in &row[first_col.min(m)..] {
            max_mag = max_mag.max(v);
        }
    }
    if !(max_mag > 0.0) {
        return Err(Error::EmptySpectrum);
    }

    let (mut lo, mut hi) = (0.0f64, max_mag);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if components(&spec.magnitudes, first_col, mid, None) <= max_components {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut labels = Vec::new();
    let mut count = components(&spec.magnitudes, first_col, hi, Some(&mut labels));
    if count == 0 {
        // The bisection never left the top end; take everything just below it.
        hi = max_mag * (1.0 - 1e-9);
        count = components(&spec.magnitudes, first_col, hi, Some(&mut labels));
    }

    // Strongest cell of each component.
    let mut best: Vec<Option<(usize, usize)>> = vec![None; count];
    for i in 0..n {
        for k in first_col..m {
            let id = labels[i * m + k];
            if id == usize::MAX {
                continue;
            }
            let better = match best[id] {
                None => true,
                Some((bi, bk)) => spec.magnitudes[i][k] > spec.magnitudes[bi][bk],
            };
            if better {
                best[id] = Some((i, k));
            }
        }
    }

    let mut peaks = Vec::with_capacity(count);
    for cell in best.into_iter().flatten() {
        let (i, k) = cell;
        let row = &spec.magnitudes[i];
        // Bin coordinates including the DC slot, so harmonics of the peak
        // sit at integer multiples of its bin.
        let mut signal = Vec::with_capacity(m + 1);
        signal.push(0.0);
        signal.extend_from_slice(row);
        let bin = (k + 1) as f64;
        let refined_bin = radial_refine(&signal, bin, 1.0).unwrap_or(bin);
        let radius = refined_bin * spec.radial_step();

        let up = spec.magnitudes[(i + 1) % n][k];
        let down = spec.magnitudes[(i + n - 1) % n][k];
        let here = row[k];
        let mut delta = 0.0;
        if down > 0.0 && up > 0.0 && here > 0.0 {
            let (l0, lm, lp) = (here.ln(), down.ln(), up.ln());
            let den = lm + lp - 2.0 * l0;
            if den.abs() >= 1e-12 {
                delta = ((lm - lp) / (2.0 * den)).clamp(-0.5, 0.5);
            }
        }
        let mut angle = spec.angles[i] + delta * spec.angular_step();
        if angle < 0.0 {
            angle += std::f64::consts::PI;
        } else if angle >= std::f64::consts::PI {
            angle -= std::f64::consts::PI;
        }
        peaks.push(SpectralPeak { radius, angle, magnitude: here });
    }
    peaks.sort_by(|a, b| {
        b.magnitude
            .partial_cmp(&a.magnitude)
            .unwrap()
            .then(a.angle.partial_cmp(&b.angle).unwrap())
            .then(a.radius.partial_cmp(&b.radius).unwrap())
    });
    Ok(peaks)
}

/// Sharpens the period of a radial peak by correlating the signal with a
/// Gaussian impulse train. Candidate periods cover `gamma0 ± 0.5` bins in
/// steps of 0.01, tried center-outward so exact ties keep the center. Each
/// impulse contributes the kernel-weighted average of the signal under it
/// (insensitive to window truncation at the array ends), and the score is
/// the mean over impulses. The impulse count is fixed from the largest
/// candidate period so the mean's denominator cannot jump mid-search and
/// drag the optimum toward wherever a trailing harmonic falls off the end.
pub fn radial_refine(signal: &[f64], gamma0: f64, sigma_f: f64) -> Result<f64> {
    let len = signal.len() as f64;
    if !(gamma0 > 0.0) || gamma0 >= len {
        return Err(Error::OutOfRange(format!(
            "period {gamma0} outside signal support 0..{len}"
        )));
    }
    if !(sigma_f > 0.0) {
        return Err(Error::OutOfRange("impulse width must be positive".into()));
    }
    let reach = (4.0 * sigma_f).ceil() as i64;
    let inv = 1.0 / (2.0 * sigma_f * sigma_f);
    let m_max = (((len - 1.0) / (gamma0 + 0.5)).floor() as usize).max(1);
    let score = |period: f64| -> f64 {
        let mut total = 0.0;
        for m in 1..=m_max {
            let center = m as f64 * period;
            let lo = ((center - reach as f64).ceil() as i64).max(0);
            let hi = ((center + reach as f64).floor() as i64).min(len as i64 - 1);
            let (mut num, mut den) = (0.0, 0.0);
            for j in lo..=hi {
                let d = j as f64 - center;
                let k = (-d * d * inv).exp();
                num += signal[j as usize] * k;
                den += k;
            }
            if den > 0.0 {
                total += num / den;
            }
        }
        total / m_max as f64
    };

    let mut best_p = gamma0;
    let mut best_s = score(gamma0);
    for k in 1..=50 {
        for sign in [1.0, -1.0] {
            let p = gamma0 + sign * k as f64 * 0.01;
            if p <= 0.0 || p >= len {
                continue;
            }
            let s = score(p);
            if s > best_s {
                best_s = s;
                best_p = p;
            }
        }
    }
    Ok(best_p)
}

/// Sub-pixel location of a local maximum from the three-point log-quadratic
/// fit along each axis; exact when the surface is Gaussian.
pub fn subpixel_refine(img: &GrayImage, x: usize, y: usize) -> Result<(f64, f64)> {
    let (w, h) = (img.width(), img.height());
    if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
        return Err(Error::OutOfRange(format!(
            "({x}, {y}) has no full neighborhood in {w}x{h}"
        )));
    }
    let axis = |minus: f64, center: f64, plus: f64| -> Result<f64> {
        if minus <= 0.0 || center <= 0.0 || plus <= 0.0 {
            return Err(Error::FlatNeighborhood(x, y));
        }
        let (lm, l0, lp) = (minus.ln(), center.ln(), plus.ln());
        let den = lm + lp - 2.0 * l0;
        if den.abs() < 1e-12 {
            return Err(Error::FlatNeighborhood(x, y));
        }
        Ok(((lm - lp) / (2.0 * den)).clamp(-0.5, 0.5))
    };
    let dx = axis(img.get(x - 1, y), img.get(x, y), img.get(x + 1, y))?;
    let dy = axis(img.get(x, y - 1), img.get(x, y), img.get(x, y + 1))?;
    Ok((x as f64 + dx, y as f64 + dy))
}
