//! Compound-Poisson approximations of the driving process `Z`.
//!
//! Jumps of size at most `ε` are discarded; the rest arrive at rate
//! `ν({ε < |z| ≤ R})` with sizes drawn from the normalised restriction of `ν`.

use crate::error::{Error, Result};
use crate::levy_model::{LevyMeasureSpec, MeasureKind};
use crate::linalg::DVec;
use crate::numerics::derive_seed;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;
use std::f64::consts::PI;
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Jump {
    pub t: f64,
    pub z: DVec,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpPath {
    pub dim: usize,
    pub horizon: f64,
    pub cutoff: f64,
    pub support_radius: f64,
    pub seed: u64,
    pub spec_ref: String,
    pub jumps: Vec<Jump>,
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Samples one jump path on `(0, T]` keeping jumps with `|z| > ε`.
pub fn sample_jump_path(spec: &LevyMeasureSpec, horizon: f64, eps: f64, seed: u64) -> Result<JumpPath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::ParameterOutOfRange(format!("horizon {horizon} must be positive")));
    }
    let rate = spec.mass_above(eps)?;
    let support = spec.support_radius();
    let mut rng = rng_from_seed(seed);
    let mean = rate * horizon;
    let count = if mean > 0.0 {
        Poisson::new(mean)
            .map_err(|e| Error::ParameterOutOfRange(format!("poisson mean {mean}: {e}")))?
            .sample(&mut rng) as usize
    } else {
        0
    };
    let mut times: Vec<f64> = (0..count).map(|_| horizon * (1.0 - rng.random::<f64>())).collect();
    times.sort_by(|a, b| a.total_cmp(b));
    times.dedup();
    while times.len() < count {
        times.push(horizon * (1.0 - rng.random::<f64>()));
        times.sort_by(|a, b| a.total_cmp(b));
        times.dedup();
    }
    let sizes = JumpSizeSampler::new(spec, eps)?;
    let jumps = times
        .into_iter()
        .map(|t| Jump { t, z: sizes.sample(&mut rng) })
        .collect();
    Ok(JumpPath {
        dim: spec.dim,
        horizon,
        cutoff: eps,
        support_radius: support,
        seed,
        spec_ref: spec.fingerprint(),
        jumps,
    })
}

/// Path `k` of a batch uses seed `derive_seed(master, k)`.
pub fn sample_batch(spec: &LevyMeasureSpec, horizon: f64, eps: f64, master: u64, n: usize) -> Result<Vec<JumpPath>> {
    (0..n as u64)
        .map(|k| sample_jump_path(spec, horizon, eps, derive_seed(master, k)))
        .collect()
}

/// Exact draws from `ν` restricted to `{ε < |z| ≤ R}`, normalised.
pub struct JumpSizeSampler {
    dim: usize,
    eps: f64,
    inner: SizeLaw,
}

enum SizeLaw {
    Radial { alpha: f64, lo: f64, hi: f64, cylindrical: bool },
    Atoms { atoms: Vec<DVec>, index: Option<WeightedIndex<f64>> },
}

impl JumpSizeSampler {
    pub fn new(spec: &LevyMeasureSpec, eps: f64) -> Result<Self> {
        spec.mass_above(eps)?;
        let support = spec.support_radius();
        let inner = match &spec.kind {
            MeasureKind::TruncatedIsotropicStable { alpha, .. } => SizeLaw::Radial {
                alpha: *alpha,
                lo: eps,
                hi: support,
                cylindrical: false,
            },
            MeasureKind::TruncatedCylindricalStable { alpha, .. } => SizeLaw::Radial {
                alpha: *alpha,
                lo: eps,
                hi: support,
                cylindrical: true,
            },
            MeasureKind::DiscreteSymmetric { atoms, .. } => {
                let kept: Vec<_> = atoms.iter().filter(|a| a.z.norm() > eps).collect();
                let index = if kept.is_empty() {
                    None
                } else {
                    Some(
                        WeightedIndex::new(kept.iter().map(|a| a.w))
                            .map_err(|e| Error::InvalidMeasure(e.to_string()))?,
                    )
                };
                SizeLaw::Atoms {
                    atoms: kept.iter().map(|a| a.z).collect(),
                    index,
                }
            }
        };
        Ok(Self { dim: spec.dim, eps, inner })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVec {
        match &self.inner {
            SizeLaw::Radial { alpha, lo, hi, cylindrical } => {
                let (a, b) = (lo.powf(-alpha), hi.powf(-alpha));
                let s = loop {
                    let u = 1.0 - rng.random::<f64>();
                    let s = (a - u * (a - b)).powf(-1.0 / alpha);
                    if s > self.eps && s <= *hi {
                        break s;
                    }
                };
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                if self.dim == 1 {
                    DVec::scalar(sign * s)
                } else if *cylindrical {
                    let axis = rng.random_range(0..self.dim);
                    DVec::unit(self.dim, axis) * (sign * s)
                } else {
                    let phi = 2.0 * PI * rng.random::<f64>();
                    DVec::new2(s * phi.cos(), s * phi.sin())
                }
            }
            SizeLaw::Atoms { atoms, index } => {
                let idx = index.as_ref().expect("sampling from an empty atom set");
                atoms[idx.sample(rng)]
            }
        }
    }
}

impl JumpPath {
    pub fn empty(dim: usize, horizon: f64, cutoff: f64, support_radius: f64) -> Self {
        Self {
            dim,
            horizon,
            cutoff,
            support_radius,
            seed: 0,
            spec_ref: String::new(),
            jumps: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.jumps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jumps.is_empty()
    }

    pub fn jump_times(&self) -> Vec<f64> {
        self.jumps.iter().map(|j| j.t).collect()
    }

    /// `Z_t = Σ_{s ≤ t} z_s`.
    pub fn evaluate_z(&self, t: f64) -> Result<DVec> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::TimeOutOfRange { t, horizon: self.horizon });
        }
        let mut acc = DVec::zeros(self.dim);
        for j in self.jumps.iter().take_while(|j| j.t <= t) {
            acc += j.z;
        }
        Ok(acc)
    }

    /// New path with `(r, z)` merged in; `self` is untouched.
    pub fn insert_jump(&self, r: f64, z: DVec) -> Result<JumpPath> {
        if !(r > 0.0 && r <= self.horizon) {
            return Err(Error::TimeOutOfRange { t: r, horizon: self.horizon });
        }
        if z.dim() != self.dim {
            return Err(Error::DimensionMismatch(format!("jump of dimension {} on a {}-d path", z.dim(), self.dim)));
        }
        let norm = z.norm();
        if !(norm > self.cutoff && norm <= self.support_radius) {
            return Err(Error::JumpOutOfSupport {
                norm,
                lower: self.cutoff,
                upper: self.support_radius,
            });
        }
        let pos = self.jumps.partition_point(|j| j.t < r);
        if self.jumps.get(pos).is_some_and(|j| j.t == r) {
            return Err(Error::DuplicateTimestamp(r));
        }
        let mut out = self.clone();
        out.jumps.insert(pos, Jump { t: r, z });
        Ok(out)
    }

    /// The path seen from time `s`: jumps in `(s, T]` moved to `(0, T − s]`.
    pub fn shifted(&self, s: f64) -> Result<JumpPath> {
        if !(s >= 0.0 && s < self.horizon) {
            return Err(Error::TimeOutOfRange { t: s, horizon: self.horizon });
        }
        let mut out = self.clone();
        out.horizon = self.horizon - s;
        out.jumps = self
            .jumps
            .iter()
            .filter(|j| j.t > s)
            .map(|j| Jump { t: j.t - s, z: j.z })
            .collect();
        Ok(out)
    }

    /// Restriction to `(0, t]` with horizon `t`.
    pub fn truncated(&self, t: f64) -> Result<JumpPath> {
        if !(t > 0.0 && t <= self.horizon) {
            return Err(Error::TimeOutOfRange { t, horizon: self.horizon });
        }
        let mut out = self.clone();
        out.horizon = t;
        out.jumps.retain(|j| j.t <= t);
        Ok(out)
    }

    pub fn quadratic_variation(&self) -> f64 {
        self.jumps.iter().map(|j| j.z.norm_sq()).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# dim={}", self.dim);
        let _ = writeln!(s, "# horizon={}", self.horizon);
        let _ = writeln!(s, "# cutoff={}", self.cutoff);
        let _ = writeln!(s, "# support_radius={}", self.support_radius);
        let _ = writeln!(s, "# seed={}", self.seed);
        let _ = writeln!(s, "# spec_ref={}", self.spec_ref);
        s.push('t');
        for i in 1..=self.dim {
            let _ = write!(s, ",z_{i}");
        }
        s.push('\n');
        for j in &self.jumps {
            let _ = write!(s, "{}", j.t);
            for x in j.z.as_slice() {
                let _ = write!(s, ",{x}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<JumpPath> {
        let mut meta = std::collections::BTreeMap::new();
        let mut rows = Vec::new();
        let mut header_seen = false;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(kv) = line.strip_prefix('#') {
                let (k, v) = kv
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("bad metadata line '{line}'")))?;
                meta.insert(k.trim().to_string(), v.trim().to_string());
            } else if !header_seen {
                header_seen = true;
            } else {
                rows.push(line.to_string());
            }
        }
        let get = |k: &str| -> Result<&String> { meta.get(k).ok_or_else(|| Error::Parse(format!("missing '{k}'"))) };
        let num = |k: &str| -> Result<f64> {
            get(k)?.parse().map_err(|_| Error::Parse(format!("'{k}' is not a number")))
        };
        let dim: usize = get("dim")?.parse().map_err(|_| Error::Parse("bad dim".into()))?;
        let seed: u64 = get("seed")?.parse().map_err(|_| Error::Parse("bad seed".into()))?;
        let mut path = JumpPath {
            dim,
            horizon: num("horizon")?,
            cutoff: num("cutoff")?,
            support_radius: num("support_radius")?,
            seed,
            spec_ref: get("spec_ref")?.clone(),
            jumps: Vec::with_capacity(rows.len()),
        };
        for row in rows {
            let vals: Vec<f64> = row
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number in '{row}'"))))
                .collect::<Result<_>>()?;
            if vals.len() != dim + 1 {
                return Err(Error::Parse(format!("row '{row}' has {} columns", vals.len())));
            }
            path.jumps.push(Jump { t: vals[0], z: DVec::from_slice(&vals[1..]) });
        }
        if path.jumps.windows(2).any(|w| w[0].t >= w[1].t) {
            return Err(Error::Parse("jump times not strictly increasing".into()));
        }
        Ok(path)
    }
}

/// Bias certificate for dropping jumps below `ε`: the exact
/// `T·∫_{|z|≤ε}|z|²ν(dz)` and its `(A₁)` bound `T·ε^{2−α}/c0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TruncationCertificate {
    pub discarded_second_moment: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn truncation_certificate(spec: &LevyMeasureSpec, horizon: f64, eps: f64) -> Result<TruncationCertificate> {
    let m = spec.small_ball_second_moment(eps)?;
    let exact = horizon * m;
    let bound = horizon * eps.powf(2.0 - spec.alpha()) / spec.c0;
    Ok(TruncationCertificate {
        discarded_second_moment: exact,
        bound,
        holds: exact <= bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::{shipped, Atom};
    use proptest::prelude::*;

    fn cauchy_1d() -> LevyMeasureSpec {
        LevyMeasureSpec::uncertified(
            "cauchy",
            1,
            0.5,
            0.5,
            MeasureKind::TruncatedIsotropicStable {
                alpha: 1.0,
                c: 1.0,
                support_radius: 1.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn deterministic_in_seed() {
        let s = shipped::cylindrical_2d();
        let a = sample_jump_path(&s, 3.0, 0.05, 11).unwrap();
        let b = sample_jump_path(&s, 3.0, 0.05, 11).unwrap();
        let c = sample_jump_path(&s, 3.0, 0.05, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn mean_count_matches_rate() {
        let s = cauchy_1d();
        let n = 10_000;
        let total: usize = sample_batch(&s, 10.0, 0.5, 1, n).unwrap().iter().map(|p| p.len()).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 20.0).abs() <= 3.0 * 20f64.sqrt() / 100.0, "mean {mean}");
    }

    #[test]
    fn terminal_value_centered_and_qv_matches_moment() {
        let s = cauchy_1d();
        let n = 10_000;
        let paths = sample_batch(&s, 10.0, 0.5, 2, n).unwrap();
        let zt: Vec<f64> = paths.iter().map(|p| p.evaluate_z(10.0).unwrap()[0]).collect();
        let mean = zt.iter().sum::<f64>() / n as f64;
        let var = zt.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() <= 4.0 * (var / n as f64).sqrt());
        let qv: Vec<f64> = paths.iter().map(|p| p.quadratic_variation()).collect();
        let qmean = qv.iter().sum::<f64>() / n as f64;
        let qvar = qv.iter().map(|x| (x - qmean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let want = 10.0 * s.second_moment_above(0.5).unwrap();
        assert!((qmean - want).abs() <= 4.0 * (qvar / n as f64).sqrt(), "{qmean} vs {want}");
    }

    #[test]
    fn empty_when_no_mass() {
        let s = LevyMeasureSpec::uncertified(
            "atoms",
            1,
            0.5,
            0.2,
            MeasureKind::DiscreteSymmetric {
                atoms: vec![Atom { z: DVec::scalar(0.3), w: 1.0 }, Atom { z: DVec::scalar(-0.3), w: 1.0 }],
                alpha: 1.0,
                support_radius: Some(1.0),
            },
        )
        .unwrap();
        let p = sample_jump_path(&s, 5.0, 0.5, 3).unwrap();
        assert!(p.is_empty());
        assert_eq!(p.evaluate_z(5.0).unwrap(), DVec::zeros(1));
    }

    #[test]
    fn step_function_semantics() {
        let p = JumpPath::empty(1, 2.0, 0.1, 1.0).insert_jump(1.0, DVec::scalar(0.7)).unwrap();
        assert_eq!(p.evaluate_z(0.99).unwrap()[0], 0.0);
        assert_eq!(p.evaluate_z(1.0).unwrap()[0], 0.7);
        let q = p.insert_jump(1.5, DVec::scalar(-0.2)).unwrap();
        assert_eq!(q.evaluate_z(2.0).unwrap()[0], 0.7 + -0.2);
        assert!(matches!(q.evaluate_z(2.5), Err(Error::TimeOutOfRange { .. })));
        assert!(matches!(q.insert_jump(1.0, DVec::scalar(0.5)), Err(Error::DuplicateTimestamp(_))));
        assert!(matches!(q.insert_jump(0.5, DVec::scalar(0.05)), Err(Error::JumpOutOfSupport { .. })));
    }

    #[test]
    fn sizes_respect_support() {
        for s in shipped::all() {
            let eps = 0.1;
            let p = sample_jump_path(&s, 20.0, eps, 5).unwrap();
            assert!(p.jumps.iter().all(|j| j.z.norm() > eps && j.z.norm() <= s.support_radius()));
            assert!(p.jumps.windows(2).all(|w| w[0].t < w[1].t));
            assert!(p.jumps.iter().all(|j| j.t > 0.0 && j.t <= 20.0));
        }
    }

    #[test]
    fn csv_round_trip_bit_exact() {
        let p = sample_jump_path(&shipped::cylindrical_2d(), 4.0, 0.03, 99).unwrap();
        let back = JumpPath::from_csv(&p.to_csv()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn truncation_bias_bounded() {
        let s = shipped::isotropic_1d();
        let c = truncation_certificate(&s, 2.0, 0.01).unwrap();
        assert!(c.holds);
    }

    proptest! {
        #[test]
        fn insertion_adds_exactly_z(seed in 0u64..500, r in 0.01f64..2.0, z in 0.2f64..1.0) {
            let p = sample_jump_path(&shipped::sde_1d(), 2.0, 0.1, seed).unwrap();
            prop_assume!(p.jumps.iter().all(|j| j.t != r));
            let q = p.insert_jump(r, DVec::scalar(z)).unwrap();
            let d = q.evaluate_z(2.0).unwrap()[0] - p.evaluate_z(2.0).unwrap()[0];
            prop_assert!((d - z).abs() < 1e-12);
            let before = r * 0.5;
            prop_assert_eq!(q.evaluate_z(before).unwrap(), p.evaluate_z(before).unwrap());
        }

        #[test]
        fn shifted_path_consistent(seed in 0u64..200, s in 0.0f64..1.5, t in 0.0f64..0.5) {
            let p = sample_jump_path(&shipped::sde_1d(), 2.0, 0.1, seed).unwrap();
            let q = p.shifted(s).unwrap();
            let lhs = p.evaluate_z(s + t).unwrap() - p.evaluate_z(s).unwrap();
            let rhs = q.evaluate_z(t).unwrap();
            // shifting times subtracts s; jumps exactly at the boundary can round either way
            prop_assert!((lhs - rhs).max_abs() < 1e-12 || p.jumps.iter().any(|j| ((j.t - s) - t).abs() < 1e-12));
        }
    }
}
