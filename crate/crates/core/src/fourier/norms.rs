//! Discrete norms. Vector and matrix fields use the pointwise Euclidean
//! (Frobenius) magnitude.

use super::dyadic::{chi, DyadicBlockSet};
use super::field::GridField;
use super::grid::PeriodicGrid;
use crate::error::{Error, Result};
use crate::linalg::DVec;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "norm", rename_all = "snake_case")]
pub enum Norm {
    Lp { p: f64 },
    Besov { s: f64, p: f64, q: f64 },
    Slobodeckij { theta: f64, p: f64 },
    Holder { beta: f64 },
    LocalizedSobolev { s: f64, p: f64 },
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0) {
        return Err(Error::ParameterOutOfRange(format!("exponent p = {p} must be in [1, inf]")));
    }
    Ok(())
}

fn check_unit_open(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::ParameterOutOfRange(format!("{name} = {v} must be in (0, 1)")));
    }
    Ok(())
}

pub fn norm(f: &GridField, which: Norm) -> Result<f64> {
    match which {
        Norm::Lp { p } => {
            check_p(p)?;
            Ok(lp_of_magnitudes(&f.pointwise_magnitude(), p, f.grid().cell_volume()))
        }
        Norm::Besov { s, p, q } => {
            check_p(p)?;
            check_p(q)?;
            if !s.is_finite() {
                return Err(Error::ParameterOutOfRange(format!("smoothness s = {s}")));
            }
            let set = DyadicBlockSet::new(*f.grid());
            besov_with(&set, f, s, p, q)
        }
        Norm::Slobodeckij { theta, p } => {
            check_unit_open("theta", theta)?;
            check_p(p)?;
            if p.is_infinite() {
                return Err(Error::ParameterOutOfRange("Slobodeckij needs finite p".into()));
            }
            Ok(slobodeckij(f.grid(), &components_of(f), theta, p, None))
        }
        Norm::Holder { beta } => {
            if !(beta > 0.0 && beta <= 1.0) {
                return Err(Error::ParameterOutOfRange(format!("beta = {beta} must be in (0, 1]")));
            }
            Ok(holder(f, beta))
        }
        Norm::LocalizedSobolev { s, p } => {
            check_unit_open("s", s)?;
            check_p(p)?;
            if p.is_infinite() {
                return Err(Error::ParameterOutOfRange("localized Sobolev needs finite p".into()));
            }
            Ok(localized_sobolev(f, s, p))
        }
    }
}

pub fn lp_of_magnitudes(m: &[f64], p: f64, cell: f64) -> f64 {
    if p.is_infinite() {
        m.iter().copied().fold(0.0, f64::max)
    } else {
        (m.iter().map(|x| x.powf(p)).sum::<f64>() * cell).powf(1.0 / p)
    }
}

/// Besov norm reusing a precomputed block set.
pub fn besov_with(set: &DyadicBlockSet, f: &GridField, s: f64, p: f64, q: f64) -> Result<f64> {
    let cell = f.grid().cell_volume();
    let terms: Vec<f64> = set
        .blocks(f)?
        .iter()
        .zip(set.levels())
        .map(|(b, j)| 2f64.powf(j as f64 * s) * lp_of_magnitudes(&b.pointwise_magnitude(), p, cell))
        .collect();
    Ok(if q.is_infinite() {
        terms.into_iter().fold(0.0, f64::max)
    } else {
        terms.iter().map(|t| t.powf(q)).sum::<f64>().powf(1.0 / q)
    })
}

/// Per-level `‖Δ_j f‖_p` for `j = −1..=J`.
pub fn block_norms(set: &DyadicBlockSet, f: &GridField, p: f64) -> Result<Vec<f64>> {
    let cell = f.grid().cell_volume();
    Ok(set
        .blocks(f)?
        .iter()
        .map(|b| lp_of_magnitudes(&b.pointwise_magnitude(), p, cell))
        .collect())
}

fn components_of(f: &GridField) -> Vec<&[f64]> {
    (0..f.components()).map(|c| f.component(c)).collect()
}

/// Grid offsets `δ ≠ 0` with periodic length `≤ radius`, and their lengths.
fn offsets_within(grid: &PeriodicGrid, radius: f64) -> Vec<([i64; 2], f64)> {
    let n = grid.n as i64;
    let h = grid.spacing();
    let kmax = ((radius / h).floor() as i64).min(n / 2);
    let mut out = Vec::new();
    let range: Vec<i64> = (-kmax..=kmax).filter(|k| *k > -n / 2 || kmax < n / 2).collect();
    if grid.dim == 1 {
        for &k in &range {
            if k != 0 {
                out.push(([k, 0], (k as f64 * h).abs()));
            }
        }
    } else {
        for &a in &range {
            for &b in &range {
                let r = h * ((a * a + b * b) as f64).sqrt();
                if (a, b) != (0, 0) && r <= radius + 1e-12 {
                    out.push(([a, b], r));
                }
            }
        }
    }
    out
}

fn shifted_index(grid: &PeriodicGrid, i: usize, off: [i64; 2]) -> usize {
    let n = grid.n as i64;
    let m = grid.multi_index(i);
    let a = (m[0] as i64 + off[0]).rem_euclid(n) as usize;
    let b = (m[1] as i64 + off[1]).rem_euclid(n) as usize;
    grid.flat_index([a, b])
}

fn diff_magnitude(comps: &[&[f64]], i: usize, k: usize) -> f64 {
    if comps.len() == 1 {
        (comps[0][i] - comps[0][k]).abs()
    } else {
        comps.iter().map(|c| (c[i] - c[k]).powi(2)).sum::<f64>().sqrt()
    }
}

/// `[f]_{θ,p} = (Σ_{x≠y, |x−y|≤L} |f(x)−f(y)|^p / |x−y|^{d+θp} h^{2d})^{1/p}`.
/// With `support`, only pairs touching the listed points are summed (the
/// field must vanish elsewhere).
fn slobodeckij(grid: &PeriodicGrid, comps: &[&[f64]], theta: f64, p: f64, support: Option<&[usize]>) -> f64 {
    let d = grid.dim as f64;
    let offs = offsets_within(grid, grid.half_period);
    let cell2 = grid.cell_volume().powi(2);
    let weights: Vec<f64> = offs.iter().map(|(_, r)| r.powf(-(d + theta * p))).collect();
    let mut total = 0.0;
    match support {
        None => {
            for i in 0..grid.len() {
                for ((off, _), w) in offs.iter().zip(&weights) {
                    let k = shifted_index(grid, i, *off);
                    total += w * diff_magnitude(comps, i, k).powf(p);
                }
            }
        }
        Some(supp) => {
            let mut inside = vec![false; grid.len()];
            for &i in supp {
                inside[i] = true;
            }
            for &i in supp {
                for ((off, _), w) in offs.iter().zip(&weights) {
                    let k = shifted_index(grid, i, *off);
                    let v = w * diff_magnitude(comps, i, k).powf(p);
                    // pairs with both ends inside are visited twice, as in the full sum
                    total += if inside[k] { v } else { 2.0 * v };
                }
            }
        }
    }
    (total * cell2).powf(1.0 / p)
}

fn holder(f: &GridField, beta: f64) -> f64 {
    let grid = f.grid();
    let comps = components_of(f);
    let sup = f.sup_norm();
    let offs = offsets_within(grid, 1.0);
    let mut semi = 0.0_f64;
    for i in 0..grid.len() {
        for (off, r) in &offs {
            let k = shifted_index(grid, i, *off);
            semi = semi.max(diff_magnitude(&comps, i, k) / r.powf(beta));
        }
    }
    sup + semi
}

/// `max_z ‖f χ(· − z)‖_{W^s_p}` over the lattice of centers with spacing 1.
fn localized_sobolev(f: &GridField, s: f64, p: f64) -> f64 {
    let grid = f.grid();
    let n = grid.len();
    let ncomp = f.components();
    let per_axis = (2.0 * grid.half_period).floor() as i64;
    let centers: Vec<DVec> = if grid.dim == 1 {
        (0..per_axis).map(|k| DVec::scalar(-grid.half_period + k as f64)).collect()
    } else {
        let mut v = Vec::new();
        for a in 0..per_axis {
            for b in 0..per_axis {
                v.push(DVec::new2(-grid.half_period + a as f64, -grid.half_period + b as f64));
            }
        }
        v
    };
    let mut best = 0.0_f64;
    let mut buf = vec![0.0; n * ncomp];
    for z in &centers {
        let mut supp = Vec::new();
        buf.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let r = grid.periodic_delta(&grid.point(i), z).norm();
            let w = chi(r);
            if w > 0.0 {
                supp.push(i);
                for c in 0..ncomp {
                    buf[c * n + i] = w * f.component(c)[i];
                }
            }
        }
        let comps: Vec<&[f64]> = (0..ncomp).map(|c| &buf[c * n..(c + 1) * n]).collect();
        let mags: Vec<f64> = supp
            .iter()
            .map(|&i| comps.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .collect();
        let lp = lp_of_magnitudes(&mags, p, grid.cell_volume());
        let semi = slobodeckij(grid, &comps, s, p, Some(&supp));
        best = best.max(lp + semi);
    }
    best
}

/// Bessel-potential norm `‖F⁻¹[(1+|ξ|²)^{s/2} F f]‖_p`.
pub fn bessel_potential(f: &GridField, s: f64, p: f64) -> Result<f64> {
    check_p(p)?;
    let g = *f.grid();
    let m: Vec<f64> = g.frequency_norms().iter().map(|r| (1.0 + r * r).powf(0.5 * s)).collect();
    let lifted = f.apply_real_multiplier_table(&m);
    Ok(lp_of_magnitudes(&lifted.pointwise_magnitude(), p, g.cell_volume()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::field::FieldShape;
    use crate::fourier::sample::holder_sample;

    fn grid1(n: usize) -> PeriodicGrid {
        PeriodicGrid::new(1, 8.0, n).unwrap()
    }

    #[test]
    fn zero_field_has_zero_norms() {
        let g = grid1(64);
        let f = GridField::zeros(g, FieldShape::Scalar);
        for w in [
            Norm::Lp { p: 2.0 },
            Norm::Lp { p: f64::INFINITY },
            Norm::Besov { s: 0.5, p: 2.0, q: 2.0 },
            Norm::Slobodeckij { theta: 0.5, p: 2.0 },
            Norm::Holder { beta: 0.5 },
            Norm::LocalizedSobolev { s: 0.5, p: 2.0 },
        ] {
            assert_eq!(norm(&f, w).unwrap(), 0.0);
        }
    }

    #[test]
    fn sine_lp_norms() {
        let g = grid1(256);
        let k = 3.0;
        let f = GridField::from_fn_scalar(g, |x| (k * std::f64::consts::PI * x[0] / 8.0).sin());
        let inf = norm(&f, Norm::Lp { p: f64::INFINITY }).unwrap();
        assert!((inf - 1.0).abs() < 1e-3);
        let two = norm(&f, Norm::Lp { p: 2.0 }).unwrap();
        assert!((two - 16f64.sqrt() / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn parameter_checks() {
        let f = GridField::zeros(grid1(32), FieldShape::Scalar);
        assert!(norm(&f, Norm::Lp { p: 0.5 }).is_err());
        assert!(norm(&f, Norm::Slobodeckij { theta: 1.0, p: 2.0 }).is_err());
        assert!(norm(&f, Norm::Holder { beta: 0.0 }).is_err());
        assert!(norm(&f, Norm::Holder { beta: 1.0 }).is_ok());
    }

    #[test]
    fn localized_support_sum_matches_full_sum() {
        let g = grid1(128);
        let f = GridField::from_fn_scalar(g, |x| chi(x[0] - 0.3) * (2.0 * x[0]).sin());
        let full = slobodeckij(&g, &[f.values()], 0.4, 2.0, None);
        let supp: Vec<usize> = (0..g.len()).filter(|&i| f.values()[i] != 0.0).collect();
        let part = slobodeckij(&g, &[f.values()], 0.4, 2.0, Some(&supp));
        assert!((full - part).abs() < 1e-10 * full);
    }

    #[test]
    fn single_ring_besov() {
        let g = grid1(256);
        let set = DyadicBlockSet::new(g);
        let base = holder_sample(0.5, &g, 3, 1.0, None);
        let j = 3;
        let f = set.block(&base, j).unwrap();
        let b = norm(&f, Norm::Besov { s: 0.6, p: f64::INFINITY, q: f64::INFINITY }).unwrap();
        let want = 2f64.powf(j as f64 * 0.6) * f.sup_norm();
        assert!((b - want).abs() <= 0.05 * want);
    }

    #[test]
    fn embedding_direction() {
        let g = grid1(256);
        for seed in 0..3 {
            let f = holder_sample(0.7, &g, seed, 1.0, None);
            let loc = norm(&f, Norm::LocalizedSobolev { s: 0.4, p: 2.0 }).unwrap();
            let hol = norm(&f, Norm::Holder { beta: 0.7 }).unwrap();
            assert!(loc.is_finite() && loc <= 10.0 * hol);
        }
    }

    #[test]
    fn bessel_potential_of_constant() {
        let g = grid1(64);
        let f = GridField::constant_scalar(g, 2.0);
        let v = bessel_potential(&f, 0.7, 2.0).unwrap();
        assert!((v - 2.0 * 4.0).abs() < 1e-12);
    }
}
