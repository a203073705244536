//! Symmetric truncated Lévy measures.
//!
//! Three families are supported: isotropic stable (`c s^{-1-α} ds` times the
//! surface measure of the unit sphere), cylindrical stable (an independent
//! one-dimensional law on every coordinate axis), and finite symmetric atom
//! sets. Stable kinds have closed forms for every moment used downstream;
//! atom sets are summed exactly.

use crate::error::{Error, Result};
use crate::linalg::DVec;
use crate::numerics;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub z: DVec,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureKind {
    TruncatedIsotropicStable {
        alpha: f64,
        c: f64,
        support_radius: f64,
    },
    TruncatedCylindricalStable {
        alpha: f64,
        c: f64,
        support_radius: f64,
    },
    /// `alpha` is the stability index the atom set is meant to emulate; it
    /// sets the exponents of the (A₁) bounds. `support_radius` defaults to
    /// the largest atom norm.
    DiscreteSymmetric {
        atoms: Vec<Atom>,
        alpha: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        support_radius: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentRegion {
    SmallBall,
    AnnulusToOne,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyMeasureSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub dim: usize,
    pub c0: f64,
    pub rho: f64,
    pub kind: MeasureKind,
}

fn default_name() -> String {
    "nu".to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificationReport {
    pub radii: usize,
    pub directions: usize,
    /// min over samples of `directional / (c0 r^{2-α})`; must be ≥ 1.
    pub min_lower_ratio: f64,
    /// max over samples of `c0 · second_moment / r^{2-α}`; must be ≤ 1.
    pub max_upper_ratio: f64,
    /// worst relative gap between closed-form and quadrature moments
    /// (zero for atom sets, which are summed exactly).
    pub max_moment_rel_err: f64,
    pub pass: bool,
}

pub const CERT_RADII: usize = 32;
pub const CERT_DIRECTIONS: usize = 16;

fn sphere_area(dim: usize) -> f64 {
    if dim == 1 {
        2.0
    } else {
        2.0 * PI
    }
}

impl LevyMeasureSpec {
    /// Validates structure and certifies (A₁) on the standard sample.
    pub fn new(name: &str, dim: usize, c0: f64, rho: f64, kind: MeasureKind) -> Result<Self> {
        let spec = Self::uncertified(name, dim, c0, rho, kind)?;
        spec.certify_strict()?;
        Ok(spec)
    }

    /// Structural validation only: ranges, dimensions, atom symmetry.
    pub fn uncertified(name: &str, dim: usize, c0: f64, rho: f64, kind: MeasureKind) -> Result<Self> {
        let spec = Self {
            name: name.to_string(),
            dim,
            c0,
            rho,
            kind,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidMeasure(m));
        if self.dim != 1 && self.dim != 2 {
            return bad(format!("dimension {} not in {{1, 2}}", self.dim));
        }
        if !(self.c0 > 0.0 && self.c0 < 1.0) {
            return bad(format!("c0 = {} not in (0, 1)", self.c0));
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho = {} not in (0, 1)", self.rho));
        }
        let alpha = self.alpha();
        if !(alpha > 0.0 && alpha < 2.0) {
            return bad(format!("alpha = {alpha} not in (0, 2)"));
        }
        match &self.kind {
            MeasureKind::TruncatedIsotropicStable { c, support_radius, .. }
            | MeasureKind::TruncatedCylindricalStable { c, support_radius, .. } => {
                if !(*c > 0.0 && c.is_finite()) {
                    return bad(format!("intensity c = {c} must be positive"));
                }
                if !(*support_radius > 0.0 && support_radius.is_finite()) {
                    return bad(format!("support radius {support_radius} must be positive"));
                }
            }
            MeasureKind::DiscreteSymmetric { atoms, support_radius, .. } => {
                if atoms.is_empty() {
                    return bad("empty atom set".into());
                }
                for a in atoms {
                    if a.z.dim() != self.dim {
                        return bad(format!("atom {:?} has dimension {}", a.z.as_slice(), a.z.dim()));
                    }
                    if !(a.w > 0.0 && a.w.is_finite()) {
                        return bad(format!("atom weight {} must be positive", a.w));
                    }
                    if a.z.norm() == 0.0 {
                        return bad("atom at the origin".into());
                    }
                    let mirror = atoms.iter().any(|b| b.z == -a.z && b.w == a.w);
                    if !mirror {
                        return bad(format!("atom {:?} has no mirror with equal weight", a.z.as_slice()));
                    }
                }
                if let Some(r) = support_radius {
                    let max = atoms.iter().map(|a| a.z.norm()).fold(0.0, f64::max);
                    if max > *r {
                        return bad(format!("atom of norm {max} outside support radius {r}"));
                    }
                }
            }
        }
        if self.rho > self.support_radius() {
            return bad(format!(
                "rho = {} exceeds the support radius {}",
                self.rho,
                self.support_radius()
            ));
        }
        Ok(())
    }

    pub fn alpha(&self) -> f64 {
        match &self.kind {
            MeasureKind::TruncatedIsotropicStable { alpha, .. }
            | MeasureKind::TruncatedCylindricalStable { alpha, .. }
            | MeasureKind::DiscreteSymmetric { alpha, .. } => *alpha,
        }
    }

    pub fn support_radius(&self) -> f64 {
        match &self.kind {
            MeasureKind::TruncatedIsotropicStable { support_radius, .. }
            | MeasureKind::TruncatedCylindricalStable { support_radius, .. } => *support_radius,
            MeasureKind::DiscreteSymmetric { atoms, support_radius, .. } => support_radius
                .unwrap_or_else(|| atoms.iter().map(|a| a.z.norm()).fold(0.0, f64::max)),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, MeasureKind::DiscreteSymmetric { .. })
    }

    /// Short content hash identifying this spec in artifacts.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    fn check_radius(&self, r: f64) -> Result<()> {
        let support = self.support_radius();
        if !(r > 0.0) || r > support {
            return Err(Error::InvalidRadius { r, support });
        }
        Ok(())
    }

    /// `∫_{B_r} ⟨θ, z⟩² ν(dz)`.
    pub fn small_ball_directional(&self, r: f64, theta: &DVec) -> Result<f64> {
        self.check_radius(r)?;
        if theta.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "direction of dimension {} for a {}-d measure",
                theta.dim(),
                self.dim
            )));
        }
        let t = theta.norm_sq();
        Ok(match &self.kind {
            MeasureKind::TruncatedIsotropicStable { alpha, c, .. } => {
                c * sphere_area(self.dim) / self.dim as f64 * r.powf(2.0 - alpha) / (2.0 - alpha) * t
            }
            MeasureKind::TruncatedCylindricalStable { alpha, c, .. } => {
                2.0 * c * r.powf(2.0 - alpha) / (2.0 - alpha) * t
            }
            MeasureKind::DiscreteSymmetric { atoms, .. } => atoms
                .iter()
                .filter(|a| a.z.norm() <= r)
                .map(|a| a.w * a.z.dot(theta).powi(2))
                .sum(),
        })
    }

    /// `∫_{B_r} |z|² ν(dz)`.
    pub fn small_ball_second_moment(&self, r: f64) -> Result<f64> {
        self.check_radius(r)?;
        Ok(self.moment_between(0.0, r, 2.0))
    }

    /// `∫_{lo < |z| ≤ hi} |z|^θ ν(dz)` without range checks, `0 ≤ lo ≤ hi`.
    pub fn moment_between(&self, lo: f64, hi: f64, theta: f64) -> f64 {
        let big_r = self.support_radius();
        let hi = hi.min(big_r);
        if hi <= lo {
            return 0.0;
        }
        let radial = |alpha: f64| {
            let e = theta - alpha;
            if lo == 0.0 {
                hi.powf(e) / e
            } else if e.abs() < 1e-14 {
                (hi / lo).ln()
            } else {
                (hi.powf(e) - lo.powf(e)) / e
            }
        };
        match &self.kind {
            MeasureKind::TruncatedIsotropicStable { alpha, c, .. } => c * sphere_area(self.dim) * radial(*alpha),
            MeasureKind::TruncatedCylindricalStable { alpha, c, .. } => {
                self.dim as f64 * 2.0 * c * radial(*alpha)
            }
            MeasureKind::DiscreteSymmetric { atoms, .. } => atoms
                .iter()
                .filter(|a| {
                    let n = a.z.norm();
                    n > lo && n <= hi
                })
                .map(|a| a.w * a.z.norm().powf(theta))
                .sum(),
        }
    }

    /// `∫_{|z|≤r} |z|^θ ν(dz)` (small ball, θ > α) or `∫_{r<|z|≤1} |z|^θ ν(dz)`
    /// (annulus, 0 ≤ θ < α). The annulus is clipped at the support radius.
    pub fn moment_integral(&self, r: f64, theta: f64, region: MomentRegion) -> Result<f64> {
        let alpha = self.alpha();
        match region {
            MomentRegion::SmallBall => {
                if !(theta > alpha) {
                    return Err(Error::ExponentOutOfRange {
                        exponent: theta,
                        alpha,
                        reason: "small-ball moments need exponent > alpha",
                    });
                }
                self.check_radius(r)?;
                Ok(self.moment_between(0.0, r, theta))
            }
            MomentRegion::AnnulusToOne => {
                if !(theta >= 0.0 && theta < alpha) {
                    return Err(Error::ExponentOutOfRange {
                        exponent: theta,
                        alpha,
                        reason: "annulus moments need 0 <= exponent < alpha",
                    });
                }
                if !(r > 0.0) || r > 1.0 {
                    return Err(Error::InvalidRadius { r, support: 1.0 });
                }
                Ok(self.moment_between(r, 1.0, theta))
            }
        }
    }

    /// `ν({ε < |z| ≤ R})`.
    pub fn mass_above(&self, eps: f64) -> Result<f64> {
        let support = self.support_radius();
        if !(eps > 0.0) || eps >= support {
            return Err(Error::InvalidCutoff { eps, support });
        }
        Ok(self.moment_between(eps, support, 0.0))
    }

    /// `∫_{ε<|z|≤R} |z|² ν(dz)`, the second moment of the retained jumps.
    pub fn second_moment_above(&self, eps: f64) -> Result<f64> {
        let support = self.support_radius();
        if !(eps >= 0.0) || eps >= support {
            return Err(Error::InvalidCutoff { eps, support });
        }
        Ok(self.moment_between(eps, support, 2.0))
    }

    /// Same integrals as [`moment_integral`](Self::moment_integral), computed
    /// by adaptive quadrature of the radial density instead of closed forms.
    /// Used as an independent oracle; atom sets return the exact sum.
    pub fn moment_integral_quadrature(&self, r: f64, theta: f64, region: MomentRegion) -> Result<f64> {
        self.moment_integral(r, theta, region)?;
        let (lo, hi) = match region {
            MomentRegion::SmallBall => (0.0, r),
            MomentRegion::AnnulusToOne => (r, 1.0_f64.min(self.support_radius())),
        };
        if hi <= lo {
            return Ok(0.0);
        }
        let (alpha, density_const) = match &self.kind {
            MeasureKind::TruncatedIsotropicStable { alpha, c, .. } => (*alpha, c * sphere_area(self.dim)),
            MeasureKind::TruncatedCylindricalStable { alpha, c, .. } => (*alpha, self.dim as f64 * 2.0 * c),
            MeasureKind::DiscreteSymmetric { .. } => return Ok(self.moment_between(lo, hi, theta)),
        };
        let f = |s: f64| density_const * s.powf(theta - 1.0 - alpha);
        // tail below 1e-12·hi added in closed form
        let floor = if lo == 0.0 { hi * 1e-12 } else { lo };
        let mut v = numerics::integrate_log(&f, floor, hi, 1e-13);
        if lo == 0.0 {
            v += density_const * floor.powf(theta - alpha) / (theta - alpha);
        }
        Ok(v)
    }

    /// Quadrature oracle for the directional small-ball integral.
    pub fn small_ball_directional_quadrature(&self, r: f64, theta: &DVec) -> Result<f64> {
        let closed = self.small_ball_directional(r, theta)?;
        let (alpha, c) = match &self.kind {
            MeasureKind::TruncatedIsotropicStable { alpha, c, .. } => (*alpha, *c),
            MeasureKind::TruncatedCylindricalStable { alpha, c, .. } => (*alpha, *c),
            MeasureKind::DiscreteSymmetric { .. } => return Ok(closed),
        };
        let floor = r * 1e-12;
        let radial = numerics::integrate_log(&|s| s.powf(1.0 - alpha), floor, r, 1e-13)
            + floor.powf(2.0 - alpha) / (2.0 - alpha);
        let angular = match (&self.kind, self.dim) {
            (MeasureKind::TruncatedIsotropicStable { .. }, 1) => 2.0 * theta[0] * theta[0],
            (MeasureKind::TruncatedIsotropicStable { .. }, _) => {
                let g = |phi: f64| (theta[0] * phi.cos() + theta[1] * phi.sin()).powi(2);
                numerics::integrate(&g, 0.0, 2.0 * PI, 1e-14, 0.0)
            }
            _ => 2.0 * theta.norm_sq(),
        };
        Ok(c * radial * angular)
    }

    /// Checks the (A₁) lower and upper bounds on 32 log-spaced radii in
    /// `(R·1e-4, ρ)` and 16 directions, plus closed-form/quadrature moment
    /// agreement for stable kinds.
    pub fn certify(&self) -> Result<CertificationReport> {
        self.validate()?;
        let alpha = self.alpha();
        let radii = numerics::log_spaced_open(self.support_radius() * 1e-4, self.rho, CERT_RADII);
        let dirs = unit_directions(self.dim, CERT_DIRECTIONS);
        let mut min_lower = f64::INFINITY;
        let mut max_upper = 0.0_f64;
        for &r in &radii {
            let scale = r.powf(2.0 - alpha);
            for th in &dirs {
                let v = self.small_ball_directional(r, th)?;
                min_lower = min_lower.min(v / (self.c0 * scale));
            }
            let m2 = self.small_ball_second_moment(r)?;
            max_upper = max_upper.max(self.c0 * m2 / scale);
        }
        let mut max_err = 0.0_f64;
        if !self.is_discrete() {
            let support = self.support_radius();
            for &r in radii.iter().step_by(4) {
                for theta in [alpha + 0.5 * (2.0 - alpha), 2.0, alpha + 1.0] {
                    let a = self.moment_integral(r, theta, MomentRegion::SmallBall)?;
                    let b = self.moment_integral_quadrature(r, theta, MomentRegion::SmallBall)?;
                    max_err = max_err.max(rel_err(a, b));
                }
                if r < 1.0 && support >= 1.0 {
                    for theta in [0.0, 0.5 * alpha] {
                        let a = self.moment_integral(r, theta, MomentRegion::AnnulusToOne)?;
                        let b = self.moment_integral_quadrature(r, theta, MomentRegion::AnnulusToOne)?;
                        max_err = max_err.max(rel_err(a, b));
                    }
                }
                let th = &dirs[1];
                let a = self.small_ball_directional(r, th)?;
                let b = self.small_ball_directional_quadrature(r, th)?;
                max_err = max_err.max(rel_err(a, b));
            }
        }
        let pass = min_lower >= 1.0 && max_upper <= 1.0 && max_err <= 1e-8;
        Ok(CertificationReport {
            radii: radii.len(),
            directions: dirs.len(),
            min_lower_ratio: min_lower,
            max_upper_ratio: max_upper,
            max_moment_rel_err: max_err,
            pass,
        })
    }

    fn certify_strict(&self) -> Result<CertificationReport> {
        let rep = self.certify()?;
        if !rep.pass {
            return Err(Error::CertificationFailed(format!(
                "{}: min lower ratio {:.4e} (need >= 1), max upper ratio {:.4e} (need <= 1), moment error {:.2e}",
                self.name, rep.min_lower_ratio, rep.max_upper_ratio, rep.max_moment_rel_err
            )));
        }
        Ok(rep)
    }

    /// Least-squares exponent of `r ↦ ∫_{B_r}|z|^θ ν(dz)` on log axes.
    pub fn small_ball_scaling_exponent(&self, theta: f64, radii: &[f64]) -> Result<f64> {
        let mut xs = Vec::with_capacity(radii.len());
        let mut ys = Vec::with_capacity(radii.len());
        for &r in radii {
            xs.push(r.ln());
            ys.push(self.moment_integral(r, theta, MomentRegion::SmallBall)?.ln());
        }
        Ok(numerics::linear_fit(&xs, &ys).0)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// `n` unit directions: `±1` in one dimension, equally spaced angles
/// (starting on the first axis) in two.
pub fn unit_directions(dim: usize, n: usize) -> Vec<DVec> {
    if dim == 1 {
        return (0..n)
            .map(|k| DVec::scalar(if k % 2 == 0 { 1.0 } else { -1.0 }))
            .collect();
    }
    (0..n)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / n as f64;
            DVec::new2(a.cos(), a.sin())
        })
        .collect()
}

/// Specs shipped with the lab.
pub mod shipped {
    use super::*;

    pub fn isotropic_1d() -> LevyMeasureSpec {
        LevyMeasureSpec::new(
            "isotropic_1d_alpha0.7",
            1,
            0.5,
            0.5,
            MeasureKind::TruncatedIsotropicStable {
                alpha: 0.7,
                c: 1.0,
                support_radius: 1.0,
            },
        )
        .expect("shipped spec certifies")
    }

    pub fn cylindrical_2d() -> LevyMeasureSpec {
        LevyMeasureSpec::new(
            "cylindrical_2d_alpha1.2",
            2,
            0.15,
            0.5,
            MeasureKind::TruncatedCylindricalStable {
                alpha: 1.2,
                c: 1.0,
                support_radius: 1.0,
            },
        )
        .expect("shipped spec certifies")
    }

    /// Eight atoms: a heavy cross at radius 5e-5 carrying the small-ball
    /// mass in every direction, and a light diagonal cross at radius 0.8.
    pub fn discrete_2d() -> LevyMeasureSpec {
        let s = 5e-5;
        let d = 0.8 / 2f64.sqrt();
        let mut atoms = Vec::new();
        for (z, w) in [
            (DVec::new2(s, 0.0), 1e7),
            (DVec::new2(0.0, s), 1e7),
            (DVec::new2(d, d), 1.0),
            (DVec::new2(d, -d), 1.0),
        ] {
            atoms.push(Atom { z, w });
            atoms.push(Atom { z: -z, w });
        }
        LevyMeasureSpec::new(
            "discrete_2d_8atom",
            2,
            0.05,
            0.5,
            MeasureKind::DiscreteSymmetric {
                atoms,
                alpha: 1.5,
                support_radius: None,
            },
        )
        .expect("shipped spec certifies")
    }

    /// One-dimensional α = 1.2 law used by the SDE and random-ODE pipelines.
    pub fn sde_1d() -> LevyMeasureSpec {
        LevyMeasureSpec::new(
            "isotropic_1d_alpha1.2",
            1,
            0.3,
            0.5,
            MeasureKind::TruncatedIsotropicStable {
                alpha: 1.2,
                c: 1.0,
                support_radius: 1.0,
            },
        )
        .expect("shipped spec certifies")
    }

    pub fn all() -> Vec<LevyMeasureSpec> {
        vec![isotropic_1d(), cylindrical_2d(), discrete_2d()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iso1(alpha: f64) -> LevyMeasureSpec {
        LevyMeasureSpec::uncertified(
            "t",
            1,
            0.5,
            0.5,
            MeasureKind::TruncatedIsotropicStable {
                alpha,
                c: 1.0,
                support_radius: 1.0,
            },
        )
        .unwrap()
    }

    fn pair(x: f64, w: f64) -> LevyMeasureSpec {
        LevyMeasureSpec::uncertified(
            "atoms",
            1,
            0.5,
            0.2,
            MeasureKind::DiscreteSymmetric {
                atoms: vec![Atom { z: DVec::scalar(x), w }, Atom { z: DVec::scalar(-x), w }],
                alpha: 1.0,
                support_radius: None,
            },
        )
        .unwrap()
    }

    #[test]
    fn directional_closed_form() {
        // 2·r^{2-α}/(2-α) with r = 0.5, α = 1
        let v = iso1(1.0).small_ball_directional(0.5, &DVec::scalar(1.0)).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
        let q = iso1(1.0).small_ball_directional_quadrature(0.5, &DVec::scalar(1.0)).unwrap();
        assert!((q - 1.0).abs() < 1e-10);
    }

    #[test]
    fn atoms_outside_ball_contribute_nothing() {
        let s = LevyMeasureSpec::uncertified(
            "x",
            2,
            0.5,
            0.5,
            MeasureKind::DiscreteSymmetric {
                atoms: vec![
                    Atom { z: DVec::new2(0.8, 0.0), w: 1.0 },
                    Atom { z: DVec::new2(-0.8, 0.0), w: 1.0 },
                ],
                alpha: 1.0,
                support_radius: None,
            },
        )
        .unwrap();
        assert_eq!(s.small_ball_directional(0.5, &DVec::new2(1.0, 0.0)).unwrap(), 0.0);
    }

    #[test]
    fn moment_examples() {
        let v = iso1(0.5).moment_integral(0.25, 1.0, MomentRegion::SmallBall).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
        let v = pair(0.3, 2.0).moment_integral(0.3, 2.0, MomentRegion::SmallBall).unwrap();
        assert!((v - 0.36).abs() < 1e-15);
        assert_eq!(iso1(0.7).moment_integral(1.0, 0.3, MomentRegion::AnnulusToOne).unwrap(), 0.0);
    }

    #[test]
    fn mass_examples() {
        assert!((iso1(1.0).mass_above(0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!((pair(0.3, 2.0).mass_above(0.1).unwrap() - 4.0).abs() < 1e-15);
        assert!(iso1(1.0).mass_above(1.0 - 1e-12).unwrap() < 1e-10);
        assert!(matches!(iso1(1.0).mass_above(0.0), Err(Error::InvalidCutoff { .. })));
        assert!(matches!(iso1(1.0).mass_above(1.0), Err(Error::InvalidCutoff { .. })));
    }

    #[test]
    fn range_errors() {
        let s = iso1(1.0);
        assert!(matches!(s.small_ball_directional(0.0, &DVec::scalar(1.0)), Err(Error::InvalidRadius { .. })));
        assert!(matches!(s.small_ball_directional(1.5, &DVec::scalar(1.0)), Err(Error::InvalidRadius { .. })));
        assert!(matches!(
            s.moment_integral(0.5, 0.9, MomentRegion::SmallBall),
            Err(Error::ExponentOutOfRange { .. })
        ));
        assert!(matches!(
            s.moment_integral(0.5, 1.2, MomentRegion::AnnulusToOne),
            Err(Error::ExponentOutOfRange { .. })
        ));
    }

    #[test]
    fn shipped_specs_certify() {
        for s in shipped::all().into_iter().chain([shipped::sde_1d()]) {
            let rep = s.certify().unwrap();
            assert!(rep.pass, "{}: {rep:?}", s.name);
            assert_eq!(rep.radii * rep.directions, 512);
        }
    }

    #[test]
    fn degenerate_axis_atoms_rejected() {
        let atoms = vec![
            Atom { z: DVec::new2(1e-4, 0.0), w: 1e7 },
            Atom { z: DVec::new2(-1e-4, 0.0), w: 1e7 },
        ];
        let r = LevyMeasureSpec::new(
            "axis",
            2,
            0.05,
            0.5,
            MeasureKind::DiscreteSymmetric {
                atoms,
                alpha: 1.5,
                support_radius: Some(1.0),
            },
        );
        assert!(matches!(r, Err(Error::CertificationFailed(_))));
    }

    #[test]
    fn asymmetric_atoms_rejected() {
        let r = LevyMeasureSpec::uncertified(
            "bad",
            1,
            0.5,
            0.2,
            MeasureKind::DiscreteSymmetric {
                atoms: vec![Atom { z: DVec::scalar(0.3), w: 1.0 }, Atom { z: DVec::scalar(-0.3), w: 2.0 }],
                alpha: 1.0,
                support_radius: None,
            },
        );
        assert!(matches!(r, Err(Error::InvalidMeasure(_))));
    }

    #[test]
    fn scaling_exponent_matches_theta_minus_alpha() {
        let s = shipped::cylindrical_2d();
        let radii = numerics::log_spaced(1e-3, 0.5, 12);
        let e = s.small_ball_scaling_exponent(2.0, &radii).unwrap();
        assert!((e - 0.8).abs() < 1e-12);
    }

    #[test]
    fn serde_round_trip() {
        let s = shipped::discrete_2d();
        let json = serde_json::to_string(&s).unwrap();
        let back: LevyMeasureSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.fingerprint(), s.fingerprint());
    }

    proptest! {
        #[test]
        fn closed_form_matches_quadrature(alpha in 0.1f64..1.9, logr in -8.0f64..0.0, dtheta in 0.05f64..1.5) {
            let s = iso1(alpha);
            let r = logr.exp();
            let th = alpha + dtheta;
            let a = s.moment_integral(r, th, MomentRegion::SmallBall).unwrap();
            let b = s.moment_integral_quadrature(r, th, MomentRegion::SmallBall).unwrap();
            prop_assert!(rel_err(a, b) < 1e-8, "{a} vs {b}");
        }

        #[test]
        fn directional_even_in_theta(angle in 0.0f64..6.3, r in 0.001f64..1.0) {
            for s in [shipped::cylindrical_2d(), shipped::discrete_2d()] {
                let r = r.min(s.support_radius());
                let th = DVec::new2(angle.cos(), angle.sin());
                let a = s.small_ball_directional(r, &th).unwrap();
                let b = s.small_ball_directional(r, &-th).unwrap();
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn directional_monotone_in_r(r1 in 1e-4f64..1.0, r2 in 1e-4f64..1.0) {
            let s = iso1(1.3);
            let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            let th = DVec::scalar(1.0);
            prop_assert!(s.small_ball_directional(lo, &th).unwrap() <= s.small_ball_directional(hi, &th).unwrap());
        }
    }
}
