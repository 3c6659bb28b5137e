//! Planar lattice bases, canonical scale/shape descriptors, integer actions on
//! them, and point-set operations.
//!
//! A lattice is written `{k1*b1 + k2*b2}` over complex basis vectors. A basis
//! is *positive* when `|b1| <= |b2|` and `Im(b2/b1) > 0`, and *minimal* when
//! neither `b1 + b2` nor `b1 - b2` is shorter than the longer basis vector.
//! Every lattice has a minimal positive basis; its scale descriptor is
//! `beta = b1` and its shape descriptor `rho = b2/b1` lies in the region
//! `P = { |rho| >= 1, |Re rho| <= 1/2, Im rho > 0 }`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::{TOL_EQ, TOL_EST};

pub type Complex = Complex64;

fn finite(c: Complex) -> bool {
    c.re.is_finite() && c.im.is_finite()
}

/// Ordered pair of independent basis vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeBasis {
    pub b1: Complex,
    pub b2: Complex,
}

impl LatticeBasis {
    pub fn new(b1: Complex, b2: Complex) -> Result<Self> {
        if !finite(b1) || !finite(b2) {
            return Err(Error::InvalidParameter("basis vectors must be finite".into()));
        }
        let cross = (b1.conj() * b2).im.abs();
        if cross <= 1e-12 * b1.norm() * b2.norm() || b1.norm() == 0.0 || b2.norm() == 0.0 {
            return Err(Error::DegenerateBasis);
        }
        Ok(LatticeBasis { b1, b2 })
    }

    /// Signed cell area `Im(conj(b1) * b2)`.
    pub fn det(&self) -> f64 {
        (self.b1.conj() * self.b2).im
    }
}

/// Whether no strictly shorter basis vector can be produced by one
/// addition or subtraction of the other vector.
pub fn is_minimal(basis: &LatticeBasis) -> Result<bool> {
    LatticeBasis::new(basis.b1, basis.b2)?;
    let longest = basis.b1.norm().max(basis.b2.norm());
    let slack = 1e-12 * longest;
    Ok((basis.b1 + basis.b2).norm() >= longest - slack
        && (basis.b1 - basis.b2).norm() >= longest - slack)
}

/// Lagrange reduction to a minimal positive basis. The shorter vector is kept
/// first, the integer multiple `round(Re(b2/b1))` of it is repeatedly removed
/// from the longer one, and signs are fixed afterwards so that the orientation
/// is positive and `Arg(b1)` lands in `(-pi/2, pi/2]`.
pub fn gauss_reduce(basis: &LatticeBasis) -> Result<LatticeBasis> {
    LatticeBasis::new(basis.b1, basis.b2)?;
    let (mut b1, mut b2) = (basis.b1, basis.b2);
    for _ in 0..10_000 {
        if b1.norm() > b2.norm() {
            std::mem::swap(&mut b1, &mut b2);
        }
        let q = (b2 / b1).re.round();
        b2 -= q * b1;
        if b2.norm() >= b1.norm() {
            break;
        }
    }
    if b2.norm() < b1.norm() {
        return Err(Error::DegenerateBasis);
    }
    if (b1.conj() * b2).im < 0.0 {
        b2 = -b2;
    }
    if b1.re < 0.0 || (b1.re == 0.0 && b1.im < 0.0) {
        b1 = -b1;
        b2 = -b2;
    }
    Ok(LatticeBasis { b1, b2 })
}

/// Canonical `(beta, rho)` pair of a lattice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LatticeDescriptors {
    beta: Complex,
    rho: Complex,
}

const REGION_SLACK: f64 = 1e-9;

fn in_region(rho: Complex, slack: f64) -> bool {
    rho.im > 0.0 && rho.norm() >= 1.0 - slack && rho.re.abs() <= 0.5 + slack
}

impl LatticeDescriptors {
    pub fn new(beta: Complex, rho: Complex) -> Result<Self> {
        if !finite(beta) || !finite(rho) {
            return Err(Error::InvalidParameter("descriptors must be finite".into()));
        }
        if beta.norm() == 0.0 {
            return Err(Error::ZeroScale);
        }
        if !in_region(rho, REGION_SLACK) {
            return Err(Error::OutOfRegion);
        }
        Ok(LatticeDescriptors { beta, rho })
    }

    pub fn beta(&self) -> Complex {
        self.beta
    }

    pub fn rho(&self) -> Complex {
        self.rho
    }

    /// The minimal positive basis `(beta, beta * rho)`.
    pub fn basis(&self) -> LatticeBasis {
        LatticeBasis { b1: self.beta, b2: self.beta * self.rho }
    }

    /// Cell area `|beta|^2 * Im(rho)`.
    pub fn det(&self) -> f64 {
        self.beta.norm_sqr() * self.rho.im
    }
}

/// Reduces an arbitrary basis and reads off its descriptors.
pub fn to_descriptors(basis: &LatticeBasis) -> Result<LatticeDescriptors> {
    let min = gauss_reduce(basis)?;
    let rho = min.b2 / min.b1;
    LatticeDescriptors::new(min.b1, rho)
}

/// Integer unimodular-style action `(k1, k2, k3, k4)`. On shapes it acts as
/// the fractional-linear map `rho -> (k3 + k4*rho) / (k1 + k2*rho)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct IntegerAction {
    pub k1: i64,
    pub k2: i64,
    pub k3: i64,
    pub k4: i64,
}

impl IntegerAction {
    pub const IDENTITY: IntegerAction = IntegerAction::new(1, 0, 0, 1);
    /// `rho -> rho + 1`
    pub const T: IntegerAction = IntegerAction::new(1, 0, 1, 1);
    /// `rho -> rho - 1`
    pub const T_INV: IntegerAction = IntegerAction::new(1, 0, -1, 1);
    /// `rho -> -1/rho`
    pub const S: IntegerAction = IntegerAction::new(0, 1, -1, 0);
    pub const T_INV_S: IntegerAction = IntegerAction::new(0, 1, -1, -1);
    pub const TS: IntegerAction = IntegerAction::new(0, 1, -1, 1);
    pub const TST: IntegerAction = IntegerAction::new(1, 1, 0, 1);
    pub const ST: IntegerAction = IntegerAction::new(1, 1, -1, 0);
    pub const ST_INV: IntegerAction = IntegerAction::new(1, -1, 1, 0);
    pub const STS: IntegerAction = IntegerAction::new(1, -1, 0, 1);

    pub const fn new(k1: i64, k2: i64, k3: i64, k4: i64) -> Self {
        IntegerAction { k1, k2, k3, k4 }
    }

    pub fn det(&self) -> i64 {
        self.k1 * self.k4 - self.k2 * self.k3
    }

    /// The action recovering the original lattice from a sub- or
    /// parent-lattice produced by `self`.
    pub fn adjugate(&self) -> IntegerAction {
        IntegerAction::new(self.k4, -self.k2, -self.k3, self.k1)
    }

    pub fn apply_shape(&self, rho: Complex) -> Complex {
        let den = Complex::new(self.k1 as f64, 0.0) + Complex::new(self.k2 as f64, 0.0) * rho;
        let num = Complex::new(self.k3 as f64, 0.0) + Complex::new(self.k4 as f64, 0.0) * rho;
        num / den
    }

    /// Unit complex `exp(i * Arg(k1 + k2*rho))` multiplying the scale
    /// descriptor when the action carries one equivalent basis to another.
    pub fn scale_rotation(&self, rho: Complex) -> Complex {
        let den = Complex::new(self.k1 as f64, 0.0) + Complex::new(self.k2 as f64, 0.0) * rho;
        den / den.norm()
    }
}

fn shape_actions_tol(rho: Complex, tol: f64) -> Vec<(IntegerAction, Complex)> {
    let on_circle = (rho.norm() - 1.0).abs() <= tol;
    let re_neg = (rho.re + 0.5).abs() <= tol;
    let re_pos = (rho.re - 0.5).abs() <= tol;
    use IntegerAction as A;
    let actions: &[IntegerAction] = if on_circle && re_neg {
        &[A::IDENTITY, A::S, A::T, A::T_INV_S, A::ST, A::TST]
    } else if on_circle && re_pos {
        &[A::IDENTITY, A::S, A::T_INV, A::TS, A::ST_INV, A::STS]
    } else if on_circle {
        &[A::IDENTITY, A::S]
    } else if re_neg {
        &[A::IDENTITY, A::T]
    } else if re_pos {
        &[A::IDENTITY, A::T_INV]
    } else {
        &[A::IDENTITY]
    };
    actions.iter().map(|a| (*a, a.apply_shape(rho))).collect()
}

/// All integer actions carrying `rho` to an equivalent shape inside the
/// canonical region, paired with the resulting shape. The list depends on
/// where `rho` sits: interior points map only to themselves, the vertical
/// edges and the unit circle each add one mate, and the two corner points
/// each admit six actions.
pub fn equivalent_shape_actions(rho: Complex) -> Result<Vec<(IntegerAction, Complex)>> {
    if !finite(rho) || !in_region(rho, REGION_SLACK) {
        return Err(Error::OutOfRegion);
    }
    Ok(shape_actions_tol(rho, TOL_EQ.max(REGION_SLACK)))
}

/// Exact-input equivalence test (relative tolerance `TOL_EQ`).
pub fn are_equivalent(a: &LatticeDescriptors, b: &LatticeDescriptors) -> bool {
    are_equivalent_tol(a, b, TOL_EQ)
}

/// Equivalence with a caller-chosen tolerance; use `TOL_EST` for descriptors
/// estimated from spectra.
pub fn are_equivalent_tol(a: &LatticeDescriptors, b: &LatticeDescriptors, tol: f64) -> bool {
    let shape_scale = tol * b.rho.norm().max(1.0);
    let beta_scale = tol * a.beta.norm().max(b.beta.norm());
    for (action, rho2) in shape_actions_tol(a.rho, tol.max(REGION_SLACK)) {
        if (rho2 - b.rho).norm() > shape_scale {
            continue;
        }
        let rotated = action.scale_rotation(a.rho) * a.beta;
        if (rotated - b.beta).norm() <= beta_scale || (rotated + b.beta).norm() <= beta_scale {
            return true;
        }
    }
    false
}

/// A lattice together with a translation offset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TranslatedLattice {
    pub descriptors: LatticeDescriptors,
    pub mu: Complex,
}

impl TranslatedLattice {
    pub fn new(descriptors: LatticeDescriptors, mu: Complex) -> Result<Self> {
        if !finite(mu) {
            return Err(Error::InvalidParameter("translation must be finite".into()));
        }
        Ok(TranslatedLattice { descriptors, mu })
    }
}

/// Axis-aligned rectangle with inclusive bounds, in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Window {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Window { x0, x1, y0, y1 }
    }

    /// `[0, w-1] x [0, h-1]`.
    pub fn of_image(width: usize, height: usize) -> Self {
        Window { x0: 0.0, x1: width as f64 - 1.0, y0: 0.0, y1: height as f64 - 1.0 }
    }

    pub fn is_empty(&self) -> bool {
        self.x1 < self.x0 || self.y1 < self.y0
    }

    fn contains(&self, p: Complex) -> bool {
        const EPS: f64 = 1e-9;
        p.re >= self.x0 - EPS && p.re <= self.x1 + EPS && p.im >= self.y0 - EPS && p.im <= self.y1 + EPS
    }
}

/// Every lattice point `mu + k1*b1 + k2*b2` inside `window`, enumerated by
/// mapping the window corners into coefficient space.
pub fn generate_points(lat: &TranslatedLattice, window: Window) -> Vec<Complex> {
    if window.is_empty() {
        return Vec::new();
    }
    let basis = lat.descriptors.basis();
    let (b1, b2) = (basis.b1, basis.b2);
    let det = basis.det();
    let coeff = |v: Complex| -> (f64, f64) {
        ((b2.im * v.re - b2.re * v.im) / det, (-b1.im * v.re + b1.re * v.im) / det)
    };
    let corners = [
        Complex::new(window.x0, window.y0),
        Complex::new(window.x1, window.y0),
        Complex::new(window.x0, window.y1),
        Complex::new(window.x1, window.y1),
    ];
    let (mut k1_min, mut k1_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut k2_min, mut k2_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in corners {
        let (k1, k2) = coeff(c - lat.mu);
        k1_min = k1_min.min(k1);
        k1_max = k1_max.max(k1);
        k2_min = k2_min.min(k2);
        k2_max = k2_max.max(k2);
    }
    let mut points = Vec::new();
    for k2 in (k2_min.floor() as i64 - 1)..=(k2_max.ceil() as i64 + 1) {
        for k1 in (k1_min.floor() as i64 - 1)..=(k1_max.ceil() as i64 + 1) {
            let p = lat.mu + k1 as f64 * b1 + k2 as f64 * b2;
            if window.contains(p) {
                points.push(p);
            }
        }
    }
    points
}

/// Renders lattice layers as unit-height Gaussian particles of width `sigma`,
/// composited across points and layers by pointwise maximum.
pub fn rasterize(
    lattices: &[TranslatedLattice],
    sigma: f64,
    width: usize,
    height: usize,
) -> Result<GrayImage> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter("sigma must be positive".into()));
    }
    let mut img = GrayImage::new(width, height)?;
    let margin = 6.0 * sigma + 1.0;
    let window = Window::new(
        -margin,
        width as f64 - 1.0 + margin,
        -margin,
        height as f64 - 1.0 + margin,
    );
    for lat in lattices {
        let points = generate_points(lat, window);
        crate::image::stamp_points(&mut img, &points, sigma);
    }
    Ok(img)
}

/// Reciprocal lattice descriptors: the scale rotates by `-pi/2` and shrinks
/// by the cell area, while the shape is preserved.
pub fn reciprocal(d: &LatticeDescriptors) -> LatticeDescriptors {
    let det = d.det();
    let beta = d.beta() * Complex::new(0.0, -1.0) / det;
    let basis = LatticeBasis { b1: beta, b2: beta * d.rho() };
    to_descriptors(&basis).expect("reciprocal of a valid lattice is valid")
}

/// Wallpaper-group families distinguishable from the shape descriptor alone.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WallpaperClass {
    Hexagonal,
    Square,
    Rectangular,
    Rhombic,
    Parallelogrammic,
}

impl std::fmt::Display for WallpaperClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            WallpaperClass::Hexagonal => "hexagonal",
            WallpaperClass::Square => "square",
            WallpaperClass::Rectangular => "rectangular",
            WallpaperClass::Rhombic => "rhombic",
            WallpaperClass::Parallelogrammic => "parallelogrammic",
        };
        f.write_str(s)
    }
}

/// Classifies `rho` by symmetry, most specific class first.
pub fn classify_wallpaper(rho: Complex) -> Result<WallpaperClass> {
    if !finite(rho) || !in_region(rho, REGION_SLACK) {
        return Err(Error::OutOfRegion);
    }
    let tol = TOL_EQ * rho.norm().max(1.0);
    let on_circle = (rho.norm() - 1.0).abs() <= tol;
    let on_edge = (rho.re.abs() - 0.5).abs() <= tol;
    Ok(if on_circle && on_edge {
        WallpaperClass::Hexagonal
    } else if (rho - Complex::new(0.0, 1.0)).norm() <= tol {
        WallpaperClass::Square
    } else if rho.re.abs() <= tol {
        WallpaperClass::Rectangular
    } else if on_circle || on_edge {
        WallpaperClass::Rhombic
    } else {
        WallpaperClass::Parallelogrammic
    })
}

fn transformed(d: &LatticeDescriptors, action: &IntegerAction, scale: f64) -> Result<LatticeDescriptors> {
    let rho = d.rho();
    let den = Complex::new(action.k1 as f64, 0.0) + Complex::new(action.k2 as f64, 0.0) * rho;
    let beta = d.beta() * den * scale;
    let rho2 = action.apply_shape(rho);
    to_descriptors(&LatticeBasis { b1: beta, b2: beta * rho2 })
}

/// Sub-lattice reached by an integer action with positive determinant,
/// canonicalized. `(k1, k2, k3, k4) = (1, 0, 1, 2)` sends `[beta, rho]` to
/// `[beta, 2*rho + 1]`.
pub fn sublattice(d: &LatticeDescriptors, action: &IntegerAction) -> Result<LatticeDescriptors> {
    if action.det() <= 0 {
        return Err(Error::BadAction);
    }
    transformed(d, action, 1.0)
}

/// Parent lattice reached by an integer action with positive determinant;
/// the same action as [`sublattice`] scaled back by the determinant.
pub fn parentlattice(d: &LatticeDescriptors, action: &IntegerAction) -> Result<LatticeDescriptors> {
    let det = action.det();
    if det <= 0 {
        return Err(Error::BadAction);
    }
    transformed(d, action, 1.0 / det as f64)
}

/// The two always-available sub-lattice families up to index `n`:
/// `[m*beta, rho/m]` for `m <= n` when `|rho| >= n`, and `[beta, m*rho]`
/// for `m <= n` when `|Re rho| <= 1/(2n)`. Duplicates are merged.
pub fn easy_sublattice_families(d: &LatticeDescriptors, n: u32) -> Result<Vec<LatticeDescriptors>> {
    if n == 0 {
        return Err(Error::InvalidParameter("family index must be at least 1".into()));
    }
    let mut out: Vec<LatticeDescriptors> = Vec::new();
    let push = |cand: LatticeDescriptors, out: &mut Vec<LatticeDescriptors>| {
        if !out.iter().any(|e| are_equivalent(e, &cand)) {
            out.push(cand);
        }
    };
    let nf = n as f64;
    if d.rho().norm() >= nf - 1e-12 {
        for m in 1..=n as i64 {
            let cand = sublattice(d, &IntegerAction::new(m, 0, 0, 1))?;
            push(cand, &mut out);
        }
    }
    if d.rho().re.abs() <= 1.0 / (2.0 * nf) + 1e-12 {
        for m in 1..=n as i64 {
            let cand = sublattice(d, &IntegerAction::new(1, 0, 0, m))?;
            push(cand, &mut out);
        }
    }
    Ok(out)
}

/// Looser equivalence used for spectrally estimated descriptors.
pub fn are_equivalent_est(a: &LatticeDescriptors, b: &LatticeDescriptors) -> bool {
    are_equivalent_tol(a, b, TOL_EST)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    fn close(a: Complex, b: Complex, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn reduce_fig_example() {
        let basis = LatticeBasis::new(c(0.0, 4.0), c(-3.0, 4.0)).unwrap();
        let min = gauss_reduce(&basis).unwrap();
        assert!(close(min.b1, c(3.0, 0.0), 1e-12), "{:?}", min);
        assert!(close(min.b2, c(0.0, 4.0), 1e-12), "{:?}", min);
    }

    #[test]
    fn reduce_is_idempotent_on_minimal_input() {
        let basis = LatticeBasis::new(c(3.0, 0.0), c(0.0, 4.0)).unwrap();
        let min = gauss_reduce(&basis).unwrap();
        assert_eq!(min.b1, c(3.0, 0.0));
        assert_eq!(min.b2, c(0.0, 4.0));
    }

    #[test]
    fn reduce_rejects_collinear() {
        assert!(matches!(
            LatticeBasis::new(c(1.0, 2.0), c(2.0, 4.0)),
            Err(Error::DegenerateBasis)
        ));
    }

    #[test]
    fn minimality_examples() {
        let good = LatticeBasis::new(c(3.0, 0.0), c(0.0, 4.0)).unwrap();
        assert!(is_minimal(&good).unwrap());
        let bad = LatticeBasis { b1: c(0.0, 4.0), b2: c(-3.0, 4.0) };
        assert!(!is_minimal(&bad).unwrap());
    }

    #[test]
    fn descriptors_of_rotated_square_basis() {
        let basis = LatticeBasis::new(c(11.8177, 2.0838), c(-2.1706, 12.3101)).unwrap();
        let d = to_descriptors(&basis).unwrap();
        assert!((d.beta().norm() - 12.0).abs() <= 1e-3);
        assert!(close(d.rho(), c(0.0, 1.0417), 1e-3), "{:?}", d.rho());
    }

    #[test]
    fn descriptor_region_is_enforced() {
        assert!(matches!(
            LatticeDescriptors::new(c(1.0, 0.0), c(0.9, 0.1)),
            Err(Error::OutOfRegion)
        ));
        assert!(matches!(
            LatticeDescriptors::new(c(0.0, 0.0), c(0.0, 1.5)),
            Err(Error::ZeroScale)
        ));
    }

    #[test]
    fn shape_action_rows() {
        let interior = equivalent_shape_actions(c(0.1, 1.3)).unwrap();
        assert_eq!(interior.len(), 1);
        assert_eq!(interior[0].0, IntegerAction::IDENTITY);

        let left = equivalent_shape_actions(c(-0.5, 1.4)).unwrap();
        assert_eq!(left.len(), 2);
        assert_eq!(left[1].0, IntegerAction::T);
        assert!(close(left[1].1, c(0.5, 1.4), 1e-12));

        let right = equivalent_shape_actions(c(0.5, 1.4)).unwrap();
        assert_eq!(right[1].0, IntegerAction::T_INV);

        let circle = equivalent_shape_actions(c(0.0, 1.0)).unwrap();
        assert_eq!(circle.len(), 2);
        assert_eq!(circle[1].0, IntegerAction::S);
        assert!(close(circle[1].1, c(0.0, 1.0), 1e-12));

        let sqrt3_2 = 3.0f64.sqrt() / 2.0;
        let corner_l = equivalent_shape_actions(c(-0.5, sqrt3_2)).unwrap();
        assert_eq!(corner_l.len(), 6);
        for (_, rho) in &corner_l {
            assert!(in_region(*rho, 1e-9), "{rho:?}");
        }
        let corner_r = equivalent_shape_actions(c(0.5, sqrt3_2)).unwrap();
        assert_eq!(corner_r.len(), 6);
    }

    #[test]
    fn equivalence_examples() {
        let a = to_descriptors(&LatticeBasis::new(c(3.0, 0.0), c(0.0, 4.0)).unwrap()).unwrap();
        let b = to_descriptors(&LatticeBasis::new(c(0.0, 4.0), c(-3.0, 4.0)).unwrap()).unwrap();
        let cc = to_descriptors(&LatticeBasis::new(c(-3.0, -4.0), c(-6.0, -4.0)).unwrap()).unwrap();
        assert!(are_equivalent(&a, &b));
        assert!(are_equivalent(&a, &cc));
        assert!(are_equivalent(&b, &cc));

        let unit = LatticeDescriptors::new(c(1.0, 0.0), c(0.0, 1.0)).unwrap();
        let double = LatticeDescriptors::new(c(2.0, 0.0), c(0.0, 1.0)).unwrap();
        assert!(!are_equivalent(&unit, &double));
    }

    #[test]
    fn equivalence_uses_circle_scale_rotation() {
        let a = LatticeDescriptors::new(c(2.0, 0.0), c(0.0, 1.0)).unwrap();
        let b = LatticeDescriptors::new(c(0.0, 2.0), c(0.0, 1.0)).unwrap();
        assert!(are_equivalent(&a, &b));
        let off = LatticeDescriptors::new(c(2.0, 0.1), c(0.0, 1.0)).unwrap();
        assert!(!are_equivalent(&a, &off));
    }

    #[test]
    fn equivalence_is_reflexive_and_symmetric_on_random_lattices() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let b1 = c(rng.gen_range(-9..=9) as f64, rng.gen_range(-9..=9) as f64);
            let b2 = c(rng.gen_range(-9..=9) as f64, rng.gen_range(-9..=9) as f64);
            let Ok(basis) = LatticeBasis::new(b1, b2) else { continue };
            let d = to_descriptors(&basis).unwrap();
            assert!(are_equivalent(&d, &d));
            let e = to_descriptors(&LatticeBasis { b1: basis.b2, b2: basis.b1 }).unwrap();
            assert!(are_equivalent(&d, &e) && are_equivalent(&e, &d));
        }
    }

    #[test]
    fn point_generation_examples() {
        let unit = TranslatedLattice::new(
            LatticeDescriptors::new(c(1.0, 0.0), c(0.0, 1.0)).unwrap(),
            c(0.0, 0.0),
        )
        .unwrap();
        assert_eq!(generate_points(&unit, Window::new(0.0, 2.0, 0.0, 2.0)).len(), 9);

        let twelve = TranslatedLattice::new(
            LatticeDescriptors::new(c(12.0, 0.0), c(0.0, 1.0)).unwrap(),
            c(0.0, 0.0),
        )
        .unwrap();
        assert_eq!(generate_points(&twelve, Window::new(0.0, 119.0, 0.0, 119.0)).len(), 100);

        assert!(generate_points(&unit, Window::new(5.0, 2.0, 0.0, 2.0)).is_empty());
    }

    #[test]
    fn points_match_brute_force_enumeration() {
        use rand::{Rng, SeedableRng};
        use std::collections::HashSet;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let window = Window::new(-20.0, 20.0, -20.0, 20.0);
        for _ in 0..40 {
            let b1 = c(rng.gen_range(-6..=6) as f64, rng.gen_range(-6..=6) as f64);
            let b2 = c(rng.gen_range(-6..=6) as f64, rng.gen_range(-6..=6) as f64);
            let Ok(basis) = LatticeBasis::new(b1, b2) else { continue };
            let d = to_descriptors(&basis).unwrap();
            let lat = TranslatedLattice::new(d, c(0.0, 0.0)).unwrap();
            let got: HashSet<(i64, i64)> = generate_points(&lat, window)
                .into_iter()
                .map(|p| (p.re.round() as i64, p.im.round() as i64))
                .collect();
            let kmax = (b1.norm().max(b2.norm()) * 30.0 / basis.det().abs()).ceil() as i64 + 2;
            let mut want = HashSet::new();
            for k1 in -kmax..=kmax {
                for k2 in -kmax..=kmax {
                    let p = k1 as f64 * b1 + k2 as f64 * b2;
                    if p.re.abs() <= 20.0 + 1e-9 && p.im.abs() <= 20.0 + 1e-9 {
                        want.insert((p.re.round() as i64, p.im.round() as i64));
                    }
                }
            }
            assert_eq!(got, want);
        }
    }

    #[test]
    fn rasterize_basics() {
        let lat = TranslatedLattice::new(
            LatticeDescriptors::new(c(12.0, 0.0), c(0.0, 1.0)).unwrap(),
            c(0.0, 0.0),
        )
        .unwrap();
        let img = rasterize(&[lat], 1.35, 60, 60).unwrap();
        assert!((img.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((img.get(12, 24) - 1.0).abs() < 1e-12);
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));

        let duplicated = rasterize(&[lat, lat], 1.35, 60, 60).unwrap();
        assert_eq!(img, duplicated);

        assert!(rasterize(&[lat], 1.35, 0, 60).is_err());
        assert!(rasterize(&[lat], -1.0, 60, 60).is_err());
    }

    #[test]
    fn reciprocal_of_square_lattice() {
        let d = LatticeDescriptors::new(c(12.0, 0.0), c(0.0, 1.0)).unwrap();
        let r = reciprocal(&d);
        assert!((r.beta().norm() - 1.0 / 12.0).abs() < 1e-12);
        assert!(close(r.rho(), c(0.0, 1.0), 1e-12));
        let rr = reciprocal(&r);
        assert!(close(rr.beta(), d.beta(), 1e-9));
        assert!(close(rr.rho(), d.rho(), 1e-9));
    }

    #[test]
    fn reciprocal_double_dual_on_random_lattices() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let b1 = c(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0));
            let b2 = c(rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0));
            let Ok(basis) = LatticeBasis::new(b1, b2) else { continue };
            let d = to_descriptors(&basis).unwrap();
            let rr = reciprocal(&reciprocal(&d));
            assert!(are_equivalent_tol(&d, &rr, 1e-7), "{d:?} vs {rr:?}");
        }
    }

    #[test]
    fn wallpaper_classes() {
        let s3 = 3.0f64.sqrt() / 2.0;
        assert_eq!(classify_wallpaper(c(0.0, 1.0)).unwrap(), WallpaperClass::Square);
        assert_eq!(classify_wallpaper(c(-0.5, s3)).unwrap(), WallpaperClass::Hexagonal);
        assert_eq!(classify_wallpaper(c(0.5, s3)).unwrap(), WallpaperClass::Hexagonal);
        assert_eq!(classify_wallpaper(c(0.0, 1.7)).unwrap(), WallpaperClass::Rectangular);
        assert_eq!(classify_wallpaper(c(0.5, 1.4)).unwrap(), WallpaperClass::Rhombic);
        let phi = 75.0f64.to_radians();
        assert_eq!(
            classify_wallpaper(c(phi.cos(), phi.sin())).unwrap(),
            WallpaperClass::Rhombic
        );
        assert_eq!(
            classify_wallpaper(c(0.1, 1.2)).unwrap(),
            WallpaperClass::Parallelogrammic
        );
        assert!(classify_wallpaper(c(0.9, 0.1)).is_err());
    }

    #[test]
    fn sub_and_parent_lattices() {
        let d = LatticeDescriptors::new(c(1.0, 0.0), c(0.0, 2.0)).unwrap();
        let action = IntegerAction::new(1, 0, 1, 2);
        let sub = sublattice(&d, &action).unwrap();
        let expect = to_descriptors(&LatticeBasis::new(c(1.0, 0.0), c(1.0, 4.0)).unwrap()).unwrap();
        assert!(are_equivalent(&sub, &expect));

        let parent = parentlattice(&d, &action).unwrap();
        let expect_parent =
            to_descriptors(&LatticeBasis::new(c(0.5, 0.0), c(0.5, 2.0)).unwrap()).unwrap();
        assert!(are_equivalent(&parent, &expect_parent));

        let bad = IntegerAction::new(1, 0, 0, -1);
        assert!(matches!(sublattice(&d, &bad), Err(Error::BadAction)));
        assert!(matches!(parentlattice(&d, &bad), Err(Error::BadAction)));
    }

    // Every point of `inner` on the window has integer coordinates in
    // `outer`'s basis.
    fn brute_force_contained(inner: &LatticeDescriptors, outer: &LatticeDescriptors) -> bool {
        let ob = outer.basis();
        let det = ob.det();
        let lat = TranslatedLattice::new(*inner, c(0.0, 0.0)).unwrap();
        let pts = generate_points(&lat, Window::new(-50.0, 50.0, -50.0, 50.0));
        assert!(!pts.is_empty());
        pts.iter().all(|p| {
            let k1 = (ob.b2.im * p.re - ob.b2.re * p.im) / det;
            let k2 = (-ob.b1.im * p.re + ob.b1.re * p.im) / det;
            (k1 - k1.round()).abs() < 1e-6 && (k2 - k2.round()).abs() < 1e-6
        })
    }

    #[test]
    fn sub_parent_containment_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let mut checked = 0;
        while checked < 50 {
            let b1 = c(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let b2 = c(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let Ok(basis) = LatticeBasis::new(b1, b2) else { continue };
            if basis.det().abs() < 2.0 {
                continue;
            }
            let d = to_descriptors(&basis).unwrap();
            let action = IntegerAction::new(
                rng.gen_range(1..=3),
                rng.gen_range(-2..=2),
                rng.gen_range(-2..=2),
                rng.gen_range(1..=3),
            );
            if action.det() <= 0 {
                continue;
            }
            let sub = sublattice(&d, &action).unwrap();
            let parent = parentlattice(&d, &action).unwrap();
            assert!(brute_force_contained(&sub, &d), "{action:?}");
            assert!(brute_force_contained(&d, &parent), "{action:?}");

            // The adjugate undoes the index: the parent of the sub-lattice
            // under the adjugate action restores the covolume and still
            // contains the sub-lattice.
            let back = parentlattice(&sub, &action.adjugate()).unwrap();
            assert!((back.det() - d.det()).abs() <= 1e-6 * d.det(), "{action:?}");
            assert!(brute_force_contained(&sub, &back), "{action:?}");
            checked += 1;
        }
    }

    #[test]
    fn sublattice_points_lie_in_parent() {
        let d = LatticeDescriptors::new(c(2.0, 1.0), c(0.3, 1.4)).unwrap();
        let action = IntegerAction::new(2, 1, 0, 1);
        let sub = sublattice(&d, &action).unwrap();
        let parent_basis = d.basis();
        let det = parent_basis.det();
        let lat = TranslatedLattice::new(sub, c(0.0, 0.0)).unwrap();
        let pts = generate_points(&lat, Window::new(-50.0, 50.0, -50.0, 50.0));
        assert!(!pts.is_empty());
        for p in pts {
            let k1 = (parent_basis.b2.im * p.re - parent_basis.b2.re * p.im) / det;
            let k2 = (-parent_basis.b1.im * p.re + parent_basis.b1.re * p.im) / det;
            assert!((k1 - k1.round()).abs() < 1e-6, "{k1}");
            assert!((k2 - k2.round()).abs() < 1e-6, "{k2}");
        }
    }

    #[test]
    fn easy_families_enumeration() {
        let d = LatticeDescriptors::new(c(1.0, 0.0), c(0.0, 3.0)).unwrap();
        let fams = easy_sublattice_families(&d, 3).unwrap();
        let expect_a = LatticeDescriptors::new(c(2.0, 0.0), c(0.0, 1.5)).unwrap();
        let expect_b = LatticeDescriptors::new(c(1.0, 0.0), c(0.0, 6.0)).unwrap();
        assert!(fams.iter().any(|f| are_equivalent(f, &expect_a)));
        assert!(fams.iter().any(|f| are_equivalent(f, &expect_b)));
        assert_eq!(fams.len(), 5);

        let single = easy_sublattice_families(&d, 1).unwrap();
        assert_eq!(single.len(), 1);
        assert!(are_equivalent(&single[0], &d));

        let narrow = LatticeDescriptors::new(c(1.0, 0.0), c(0.3, 1.2)).unwrap();
        assert!(easy_sublattice_families(&narrow, 2).unwrap().is_empty());
    }
}
