//! Distances between lattices built from a weighted scale metric on `beta`,
//! the Poincare metric on `rho`, and a minimization over paths that pass
//! through the `|rho| = 1` seam where a lattice has two descriptor
//! representations.
//!
//! The full distance `dist_lattice` is the minimum of the direct product
//! distance and eight path families `D1..D8`. Each family routes through one
//! or two points `(beta, e^{i phi})` on the seam, where the free re-labeling
//! `(beta, e^{i phi}) ~ (e^{i phi} beta, -e^{-i phi})` may be applied; the
//! seam angles are sampled on a grid over `[pi/3, 2pi/3]` and optionally
//! polished by golden-section search.

use num_complex::Complex64 as Complex;

use crate::error::{Error, Result};
use crate::lattice::{to_descriptors, LatticeBasis, LatticeDescriptors};

/// Parameters of the lattice metric.
#[derive(Clone, Copy, Debug)]
pub struct MetricConfig {
    /// Length-versus-angle sensitivity of the scale metric, in (0, 1).
    pub w: f64,
    /// Seam-angle grid resolution: the grid has `n_grid + 1` points.
    pub n_grid: usize,
    /// Polish each family's grid optimum by golden-section search.
    pub refine: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig { w: 0.05, n_grid: 60, refine: true }
    }
}

impl MetricConfig {
    pub fn new(w: f64, n_grid: usize, refine: bool) -> Result<Self> {
        let cfg = MetricConfig { w, n_grid, refine };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if !(self.w.is_finite() && self.w > 0.0 && self.w < 1.0) {
            return Err(Error::InvalidParameter("metric weight must lie in (0, 1)".into()));
        }
        if self.n_grid < 1 {
            return Err(Error::InvalidParameter("grid resolution must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which of the nine candidate paths achieved the minimum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathKind {
    Direct,
    D1,
    D2,
    D3,
    D4,
    D5,
    D6,
    D7,
    D8,
}

impl std::fmt::Display for PathKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PathKind::Direct => "direct",
            PathKind::D1 => "D1",
            PathKind::D2 => "D2",
            PathKind::D3 => "D3",
            PathKind::D4 => "D4",
            PathKind::D5 => "D5",
            PathKind::D6 => "D6",
            PathKind::D7 => "D7",
            PathKind::D8 => "D8",
        };
        f.write_str(s)
    }
}

/// Value of the lattice distance together with the achieving path and its
/// seam angles (absent for legs the path does not use).
#[derive(Clone, Copy, Debug)]
pub struct MetricResult {
    pub value: f64,
    pub path: PathKind,
    pub phi: Option<f64>,
    pub phi_prime: Option<f64>,
}

fn scale_metric_raw(beta: Complex, beta2: Complex, w: f64) -> f64 {
    let dlen = beta.norm() - beta2.norm();
    // atan2 of (|cross|, dot) is stable at both ends of [0, pi], unlike
    // acos, whose sqrt-shaped cusp turns 1-ulp dot errors into ~1e-8 angles.
    let prod = beta * beta2.conj();
    let ang = prod.im.abs().atan2(prod.re);
    (w * dlen * dlen + (1.0 - w) * ang * ang).sqrt()
}

/// Quotient scale metric: minimum over the sign of the first argument.
pub fn dist_scale(beta: Complex, beta2: Complex, w: f64) -> Result<f64> {
    if beta.norm() == 0.0 || beta2.norm() == 0.0 {
        return Err(Error::ZeroScale);
    }
    Ok(scale_metric_raw(beta, beta2, w).min(scale_metric_raw(-beta, beta2, w)))
}

fn poincare_raw(rho: Complex, rho2: Complex) -> f64 {
    let num = (rho - rho2).norm() + (rho - rho2.conj()).norm();
    let den = 2.0 * (rho.im * rho2.im).sqrt();
    2.0 * (num / den).max(1.0).ln()
}

/// Quotient Poincare metric: minimum over unit horizontal shifts of the
/// first argument.
pub fn dist_shape(rho: Complex, rho2: Complex) -> Result<f64> {
    if !(rho.im > 0.0) || !(rho2.im > 0.0) {
        return Err(Error::NotUpperHalfPlane);
    }
    let one = Complex::new(1.0, 0.0);
    Ok(poincare_raw(rho, rho2)
        .min(poincare_raw(rho - one, rho2))
        .min(poincare_raw(rho + one, rho2)))
}

/// Direct product distance `sqrt(d_K^2 + d_P^2)`.
pub fn dist_product(a: &LatticeDescriptors, b: &LatticeDescriptors, cfg: &MetricConfig) -> Result<f64> {
    cfg.validate()?;
    let dk = dist_scale(a.beta(), b.beta(), cfg.w)?;
    let dp = dist_shape(a.rho(), b.rho())?;
    Ok(dk.hypot(dp))
}

const PHI_LO: f64 = std::f64::consts::PI / 3.0;
const PHI_HI: f64 = 2.0 * std::f64::consts::PI / 3.0;
const ZERO_CLAMP: f64 = 1e-12;
/// A new candidate must beat the incumbent by this much, so that ties between
/// path families resolve to the earliest family independent of rounding.
const TIE_SLACK: f64 = 1e-12;

struct PathEval {
    w: f64,
    beta_a: Complex,
    beta_b: Complex,
    rho_a: Complex,
    rho_b: Complex,
}

fn circ(phi: f64) -> Complex {
    Complex::from_polar(1.0, phi)
}

impl PathEval {
    fn dk(&self, x: Complex, y: Complex) -> f64 {
        scale_metric_raw(x, y, self.w).min(scale_metric_raw(-x, y, self.w))
    }

    fn dp(&self, x: Complex, y: Complex) -> f64 {
        let one = Complex::new(1.0, 0.0);
        poincare_raw(x, y).min(poincare_raw(x - one, y)).min(poincare_raw(x + one, y))
    }

    fn direct(&self) -> f64 {
        self.dk(self.beta_a, self.beta_b).hypot(self.dp(self.rho_a, self.rho_b))
    }

    /// Path value for `kind` at seam angles `phi` (source side) and
    /// `phi_prime` (target side); unused angles are ignored.
    fn family(&self, kind: PathKind, phi: f64, phi_prime: f64) -> f64 {
        let a_leg = |p: f64| self.dp(self.rho_a, circ(p));
        let b_leg = |p: f64| self.dp(circ(p), self.rho_b);
        let hop = |p: f64| circ(std::f64::consts::PI - p);
        let rot = |p: f64| circ(p);
        match kind {
            PathKind::Direct => self.direct(),
            PathKind::D1 => self
                .dk(self.beta_a, self.beta_b)
                .hypot(a_leg(phi_prime))
                + b_leg(phi_prime),
            PathKind::D2 => self
                .dk(self.beta_a, rot(phi_prime) * self.beta_b)
                .hypot(self.dp(self.rho_a, hop(phi_prime)))
                + b_leg(phi_prime),
            PathKind::D3 => a_leg(phi) + self.dk(self.beta_a, self.beta_b).hypot(b_leg(phi)),
            PathKind::D4 => {
                a_leg(phi)
                    + self.dk(self.beta_a, self.beta_b).hypot(self.dp(circ(phi), circ(phi_prime)))
                    + b_leg(phi_prime)
            }
            PathKind::D5 => {
                a_leg(phi)
                    + self
                        .dk(self.beta_a, rot(phi_prime) * self.beta_b)
                        .hypot(self.dp(circ(phi), hop(phi_prime)))
                    + b_leg(phi_prime)
            }
            PathKind::D6 => {
                a_leg(phi)
                    + self
                        .dk(rot(phi) * self.beta_a, self.beta_b)
                        .hypot(self.dp(hop(phi), self.rho_b))
            }
            PathKind::D7 => {
                a_leg(phi)
                    + self
                        .dk(rot(phi) * self.beta_a, self.beta_b)
                        .hypot(self.dp(hop(phi), circ(phi_prime)))
                    + b_leg(phi_prime)
            }
            PathKind::D8 => {
                a_leg(phi)
                    + self
                        .dk(rot(phi) * self.beta_a, rot(phi_prime) * self.beta_b)
                        .hypot(self.dp(hop(phi), hop(phi_prime)))
                    + b_leg(phi_prime)
            }
        }
    }
}

fn uses_phi(kind: PathKind) -> bool {
    matches!(
        kind,
        PathKind::D3 | PathKind::D4 | PathKind::D5 | PathKind::D6 | PathKind::D7 | PathKind::D8
    )
}

fn uses_phi_prime(kind: PathKind) -> bool {
    matches!(
        kind,
        PathKind::D1 | PathKind::D2 | PathKind::D4 | PathKind::D5 | PathKind::D7 | PathKind::D8
    )
}

/// Golden-section minimization on `[lo, hi]`; returns the best sampled point.
fn golden_min(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, iters: usize) -> (f64, f64) {
    let inv = (5.0f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv * (b - a);
    let mut x2 = a + inv * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let (mut best_x, mut best_f) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    for _ in 0..iters {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv * (b - a);
            f2 = f(x2);
        }
        let (x, fx) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
        if fx < best_f {
            best_f = fx;
            best_x = x;
        }
    }
    (best_x, best_f)
}

const GOLDEN_ITERS: usize = 40;

/// Full lattice distance: minimum of the direct distance and eight seam-path
/// families, each grid-searched over its seam angles and optionally polished.
pub fn dist_lattice(
    a: &LatticeDescriptors,
    b: &LatticeDescriptors,
    cfg: &MetricConfig,
) -> Result<MetricResult> {
    cfg.validate()?;
    let a = to_descriptors(&a.basis())?;
    let b = to_descriptors(&b.basis())?;
    let ev = PathEval {
        w: cfg.w,
        beta_a: a.beta(),
        beta_b: b.beta(),
        rho_a: a.rho(),
        rho_b: b.rho(),
    };

    let n = cfg.n_grid;
    let step = (PHI_HI - PHI_LO) / n as f64;
    let phis: Vec<f64> = (0..=n).map(|j| PHI_LO + j as f64 * step).collect();
    let a_leg: Vec<f64> = phis.iter().map(|&p| ev.dp(ev.rho_a, circ(p))).collect();
    let b_leg: Vec<f64> = phis.iter().map(|&p| ev.dp(circ(p), ev.rho_b)).collect();
    // Seam-to-seam shape distances, indexed [j][k]; the re-labeled angle
    // pi - phi_k is the grid point N - k, so one table serves D4/D5/D7/D8.
    let cc: Vec<Vec<f64>> = (0..=n)
        .map(|j| (0..=n).map(|k| ev.dp(circ(phis[j]), circ(phis[k]))).collect())
        .collect();
    let dk_ab = ev.dk(ev.beta_a, ev.beta_b);
    let dk_rot_a: Vec<f64> = phis.iter().map(|&p| ev.dk(circ(p) * ev.beta_a, ev.beta_b)).collect();
    let dk_rot_b: Vec<f64> = phis.iter().map(|&p| ev.dk(ev.beta_a, circ(p) * ev.beta_b)).collect();

    let mut best = MetricResult {
        value: ev.direct(),
        path: PathKind::Direct,
        phi: None,
        phi_prime: None,
    };

    let families = [
        PathKind::D1,
        PathKind::D2,
        PathKind::D3,
        PathKind::D4,
        PathKind::D5,
        PathKind::D6,
        PathKind::D7,
        PathKind::D8,
    ];
    for kind in families {
        // Grid minimum for this family.
        let mut gv = f64::INFINITY;
        let (mut gj, mut gk) = (0usize, 0usize);
        match kind {
            PathKind::D1 => {
                for k in 0..=n {
                    let v = dk_ab.hypot(a_leg[k]) + b_leg[k];
                    if v < gv {
                        gv = v;
                        gk = k;
                    }
                }
            }
            PathKind::D2 => {
                for k in 0..=n {
                    let v = dk_rot_b[k].hypot(a_leg[n - k]) + b_leg[k];
                    if v < gv {
                        gv = v;
                        gk = k;
                    }
                }
            }
            PathKind::D3 => {
                for j in 0..=n {
                    let v = a_leg[j] + dk_ab.hypot(b_leg[j]);
                    if v < gv {
                        gv = v;
                        gj = j;
                    }
                }
            }
            PathKind::D6 => {
                for j in 0..=n {
                    let v = a_leg[j] + dk_rot_a[j].hypot(b_leg[n - j]);
                    if v < gv {
                        gv = v;
                        gj = j;
                    }
                }
            }
            PathKind::D4 | PathKind::D5 | PathKind::D7 | PathKind::D8 => {
                for j in 0..=n {
                    for k in 0..=n {
                        let mid = match kind {
                            PathKind::D4 => dk_ab.hypot(cc[j][k]),
                            PathKind::D5 => dk_rot_b[k].hypot(cc[j][n - k]),
                            PathKind::D7 => dk_rot_a[j].hypot(cc[n - j][k]),
                            _ => ev
                                .dk(circ(phis[j]) * ev.beta_a, circ(phis[k]) * ev.beta_b)
                                .hypot(cc[n - j][n - k]),
                        };
                        let v = a_leg[j] + mid + b_leg[k];
                        if v < gv {
                            gv = v;
                            gj = j;
                            gk = k;
                        }
                    }
                }
            }
            PathKind::Direct => unreachable!(),
        }

        let mut phi = phis[gj];
        let mut phi_prime = phis[gk];
        let mut value = gv;

        if cfg.refine {
            let bracket = |x: f64| ((x - step).max(PHI_LO), (x + step).min(PHI_HI));
            let rounds = if uses_phi(kind) && uses_phi_prime(kind) { 2 } else { 1 };
            for _ in 0..rounds {
                if uses_phi(kind) {
                    let (lo, hi) = bracket(phi);
                    let pp = phi_prime;
                    let f = |x: f64| ev.family(kind, x, pp);
                    let (x, fx) = golden_min(&f, lo, hi, GOLDEN_ITERS);
                    if fx < value {
                        value = fx;
                        phi = x;
                    }
                }
                if uses_phi_prime(kind) {
                    let (lo, hi) = bracket(phi_prime);
                    let p = phi;
                    let f = |x: f64| ev.family(kind, p, x);
                    let (x, fx) = golden_min(&f, lo, hi, GOLDEN_ITERS);
                    if fx < value {
                        value = fx;
                        phi_prime = x;
                    }
                }
            }
        }

        if value < best.value - TIE_SLACK {
            best = MetricResult {
                value,
                path: kind,
                phi: uses_phi(kind).then_some(phi),
                phi_prime: uses_phi_prime(kind).then_some(phi_prime),
            };
        }
    }

    if best.value < ZERO_CLAMP {
        best.value = 0.0;
    }
    Ok(best)
}

/// Geometric reading `(|b1|, |b2|, theta, psi)` of a basis: vector lengths,
/// the grid orientation `Arg b1` in `(-pi/2, pi/2]`, and the angle between
/// the basis vectors. The basis is canonicalized first.
pub fn fourtuple(basis: &LatticeBasis) -> Result<(f64, f64, f64, f64)> {
    let d = to_descriptors(basis)?;
    let min = d.basis();
    let theta = min.b1.arg();
    let cospsi =
        ((min.b1 * min.b2.conj()).re / (min.b1.norm() * min.b2.norm())).clamp(-1.0, 1.0);
    Ok((min.b1.norm(), min.b2.norm(), theta, cospsi.acos()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    fn desc(beta: Complex, rho: Complex) -> LatticeDescriptors {
        LatticeDescriptors::new(beta, rho).unwrap()
    }

    #[test]
    fn scale_metric_examples() {
        let d = dist_scale(c(11.0, 0.0), c(13.0, 0.0), 0.05).unwrap();
        assert!((d - 0.2f64.sqrt()).abs() < 1e-12);
        assert_eq!(dist_scale(c(3.0, 4.0), c(3.0, 4.0), 0.05).unwrap(), 0.0);
        assert!(dist_scale(c(1.0, 0.0), c(-1.0, 0.0), 0.05).unwrap() < 1e-12);
        assert!(matches!(
            dist_scale(c(0.0, 0.0), c(1.0, 0.0), 0.05),
            Err(Error::ZeroScale)
        ));
    }

    #[test]
    fn shape_metric_examples() {
        let hex = circ(PI / 3.0);
        let d = dist_shape(hex, c(0.0, 1.0)).unwrap();
        assert!((d - 0.5493061443340548).abs() < 1e-9, "{d}");
        assert_eq!(dist_shape(c(0.3, 1.7), c(0.3, 1.7)).unwrap(), 0.0);
        let glued = dist_shape(c(-0.5, 1.5), c(0.5, 1.5)).unwrap();
        assert_eq!(glued, 0.0);
        assert!(matches!(
            dist_shape(c(0.0, -1.0), c(0.0, 1.0)),
            Err(Error::NotUpperHalfPlane)
        ));
    }

    #[test]
    fn product_distance_recombines_components() {
        let cfg = MetricConfig::default();
        let a = desc(c(11.0, 0.0), circ(PI / 3.0));
        let b = desc(c(13.0, 0.0), c(0.0, 1.0));
        let d = dist_product(&a, &b, &cfg).unwrap();
        assert!((d - 0.7083).abs() < 1e-3, "{d}");
        let dk = dist_scale(a.beta(), b.beta(), cfg.w).unwrap();
        let dp = dist_shape(a.rho(), b.rho()).unwrap();
        assert!((d - dk.hypot(dp)).abs() < 1e-15);
        assert_eq!(dist_product(&a, &a, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn lattice_distance_of_rotated_near_square_pair() {
        let cfg = MetricConfig::default();
        let a = to_descriptors(
            &LatticeBasis::new(c(11.8177, 2.0838), c(-2.1706, 12.3101)).unwrap(),
        )
        .unwrap();
        let b = to_descriptors(
            &LatticeBasis::new(c(2.0838, -11.8177), c(12.3101, 2.1706)).unwrap(),
        )
        .unwrap();
        let r = dist_lattice(&a, &b, &cfg).unwrap();
        assert!((r.value - 0.0816).abs() < 1e-2, "{}", r.value);
        assert!((r.value - 2.0 * (12.5f64 / 12.0).ln()).abs() < 1e-3, "{}", r.value);
        assert_eq!(r.path, PathKind::D2);
        let pp = r.phi_prime.unwrap();
        assert!((pp - PI / 2.0).abs() < 0.05, "{pp}");
        assert!(r.phi.is_none());
    }

    #[test]
    fn lattice_distance_small_rotation_pair() {
        let cfg = MetricConfig::default();
        let a = desc(c(11.0, 0.0), circ(PI / 3.0));
        let b = desc(c(11.0, 0.0), circ(61.0 * PI / 180.0));
        let r = dist_lattice(&a, &b, &cfg).unwrap();
        assert!((r.value - 0.0203).abs() < 1e-2, "{}", r.value);
    }

    #[test]
    fn lattice_distance_zero_on_equivalent_pairs() {
        let cfg = MetricConfig::default();
        let a = desc(c(3.0, 1.0), c(0.2, 1.4));
        assert_eq!(dist_lattice(&a, &a, &cfg).unwrap().value, 0.0);

        // Seam re-labeling at an on-grid angle.
        let sq_a = desc(c(2.0, 0.0), c(0.0, 1.0));
        let sq_b = desc(c(0.0, 2.0), c(0.0, 1.0));
        let r = dist_lattice(&sq_a, &sq_b, &cfg).unwrap();
        assert!(r.value <= 1e-9, "{}", r.value);

        // Edge gluing.
        let e_a = desc(c(5.0, 0.0), c(-0.5, 1.5));
        let e_b = desc(c(5.0, 0.0), c(0.5, 1.5));
        assert!(dist_lattice(&e_a, &e_b, &cfg).unwrap().value <= 1e-9);

        // Hexagonal corner relabelings.
        let rho_l = circ(2.0 * PI / 3.0);
        let beta = c(4.0, 1.0);
        let a_corner = desc(beta, rho_l);
        for (action, rho2) in crate::lattice::equivalent_shape_actions(rho_l).unwrap() {
            let beta2 = action.scale_rotation(rho_l) * beta;
            let b_corner = to_descriptors(&LatticeBasis::new(beta2, beta2 * rho2).unwrap()).unwrap();
            let r = dist_lattice(&a_corner, &b_corner, &cfg).unwrap();
            assert!(r.value <= 1e-9, "action {action:?}: {}", r.value);
        }
    }

    #[test]
    fn lattice_distance_zero_on_off_grid_seam_pair() {
        let cfg = MetricConfig::default();
        let theta = 1.1; // not a grid multiple of pi/180
        let a = desc(c(7.0, 0.0), circ(theta));
        let beta2 = circ(theta) * c(7.0, 0.0);
        let rho2 = circ(PI - theta);
        let b = to_descriptors(&LatticeBasis::new(beta2, beta2 * rho2).unwrap()).unwrap();
        let r = dist_lattice(&a, &b, &cfg).unwrap();
        assert!(r.value <= 1e-6, "{}", r.value);

        let coarse = MetricConfig { refine: false, ..cfg };
        let rc = dist_lattice(&a, &b, &coarse).unwrap();
        assert!(rc.value > r.value, "grid {} vs refined {}", rc.value, r.value);
    }

    #[test]
    fn lattice_distance_positive_on_inequivalent_pairs() {
        let cfg = MetricConfig::default();
        let a = desc(c(11.0, 0.0), circ(PI / 3.0));
        let b = desc(c(13.0, 0.0), c(0.0, 1.0));
        let r = dist_lattice(&a, &b, &cfg).unwrap();
        assert!((r.value - 0.7083).abs() < 1e-2, "{}", r.value);
        assert_eq!(r.path, PathKind::Direct);

        let u = desc(c(1.0, 0.0), c(0.0, 1.0));
        let v = desc(c(2.0, 0.0), c(0.0, 1.0));
        assert!(dist_lattice(&u, &v, &cfg).unwrap().value > 0.1);
    }

    #[test]
    fn lattice_distance_symmetry_and_direct_bound() {
        use rand::{Rng, SeedableRng};
        let cfg = MetricConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..25 {
            let a = desc(
                Complex::from_polar(rng.gen_range(0.5..4.0), rng.gen_range(-1.4..1.4)),
                c(rng.gen_range(-0.5..0.5), rng.gen_range(1.0..2.0)),
            );
            let b = desc(
                Complex::from_polar(rng.gen_range(0.5..4.0), rng.gen_range(-1.4..1.4)),
                c(rng.gen_range(-0.5..0.5), rng.gen_range(1.0..2.0)),
            );
            let ab = dist_lattice(&a, &b, &cfg).unwrap();
            let ba = dist_lattice(&b, &a, &cfg).unwrap();
            assert!((ab.value - ba.value).abs() <= 1e-9, "{} vs {}", ab.value, ba.value);
            let direct = dist_product(&a, &b, &cfg).unwrap();
            assert!(ab.value <= direct + 1e-12);
        }
    }

    #[test]
    fn lattice_distance_triangle_inequality_spot_check() {
        use rand::{Rng, SeedableRng};
        let cfg = MetricConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(37);
        for _ in 0..12 {
            let mut mk = || {
                desc(
                    Complex::from_polar(rng.gen_range(0.5..3.0), rng.gen_range(-1.4..1.4)),
                    c(rng.gen_range(-0.5..0.5), rng.gen_range(1.0..1.8)),
                )
            };
            let (a, b, m) = (mk(), mk(), mk());
            let ab = dist_lattice(&a, &b, &cfg).unwrap().value;
            let am = dist_lattice(&a, &m, &cfg).unwrap().value;
            let mb = dist_lattice(&m, &b, &cfg).unwrap().value;
            assert!(ab <= am + mb + 0.05, "{ab} vs {am} + {mb}");
        }
    }

    #[test]
    fn grid_refinement_is_monotone() {
        let coarse = MetricConfig { n_grid: 60, refine: false, ..MetricConfig::default() };
        let fine = MetricConfig { n_grid: 120, refine: false, ..MetricConfig::default() };
        let pairs = [
            (desc(c(7.0, 0.0), circ(1.1)), desc(c(2.0, 1.0), c(0.1, 1.3))),
            (desc(c(11.0, 0.0), circ(PI / 3.0)), desc(c(13.0, 0.0), c(0.0, 1.0))),
            (desc(c(1.0, 0.5), c(-0.3, 1.1)), desc(c(0.5, -1.0), c(0.4, 1.6))),
        ];
        for (a, b) in pairs {
            let dc = dist_lattice(&a, &b, &coarse).unwrap().value;
            let df = dist_lattice(&a, &b, &fine).unwrap().value;
            assert!(df <= dc + 1e-12, "{df} vs {dc}");
        }
    }

    #[test]
    fn fourtuple_examples() {
        let b1 = Complex::from_polar(12.0, 10.0f64.to_radians());
        let b2 = Complex::from_polar(12.5, 100.0f64.to_radians());
        let (l1, l2, theta, psi) = fourtuple(&LatticeBasis::new(b1, b2).unwrap()).unwrap();
        assert!((l1 - 12.0).abs() < 1e-9);
        assert!((l2 - 12.5).abs() < 1e-9);
        assert!((theta.to_degrees() - 10.0).abs() < 0.1);
        assert!((psi.to_degrees() - 90.0).abs() < 0.1);

        let (u1, u2, t, p) = fourtuple(
            &LatticeBasis::new(c(1.0, 0.0), c(0.0, 1.0)).unwrap(),
        )
        .unwrap();
        assert!((u1 - 1.0).abs() < 1e-12 && (u2 - 1.0).abs() < 1e-12);
        assert!(t.abs() < 1e-12 && (p - PI / 2.0).abs() < 1e-12);

        // Relative orientation difference between the two near-identical
        // grids differs by 900% even though the lattices nearly coincide.
        let a1 = Complex::from_polar(12.0, 1.0f64.to_radians());
        let a2 = Complex::from_polar(12.5, 91.0f64.to_radians());
        let (_, _, theta_b, _) = fourtuple(&LatticeBasis::new(a1, a2).unwrap()).unwrap();
        let rel = (theta - theta_b).abs() / theta_b.abs();
        assert!((rel - 9.0).abs() < 1e-6, "{rel}");
    }

    #[test]
    fn config_validation() {
        assert!(MetricConfig::new(0.05, 60, true).is_ok());
        assert!(MetricConfig::new(0.0, 60, true).is_err());
        assert!(MetricConfig::new(1.0, 60, true).is_err());
        assert!(MetricConfig::new(0.5, 0, true).is_err());
    }
}
