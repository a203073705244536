//! Random test fields.

use super::field::{FieldShape, GridField};
use super::grid::PeriodicGrid;
use crate::levy_sampler::rng_from_seed;
use crate::linalg::DVec;
use crate::numerics::derive_seed;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

/// Lacunary cosine series: one mode per level `j = 0..=J` at the largest
/// grid frequency not above `2^j` (random axis in 2-d), amplitude
/// `amplitude·2^{−jβ}` and a uniform random phase.
pub fn holder_sample(beta: f64, grid: &PeriodicGrid, seed: u64, amplitude: f64, max_level: Option<i32>) -> GridField {
    let top = max_level.unwrap_or(grid.max_level()).min(grid.max_level());
    let mut rng = rng_from_seed(seed);
    let mut modes: Vec<(DVec, f64, f64)> = Vec::new();
    for j in 0..=top {
        let target = 2f64.powi(j);
        let k = (target * grid.half_period / PI).floor();
        let axis = if grid.dim == 2 { rng.random_range(0..2) } else { 0 };
        let phase = 2.0 * PI * rng.random::<f64>();
        if k < 1.0 {
            continue;
        }
        let xi = DVec::unit(grid.dim, axis) * (PI * k / grid.half_period);
        modes.push((xi, amplitude * 2f64.powf(-(j as f64) * beta), phase));
    }
    GridField::from_fn_scalar(*grid, |x| modes.iter().map(|(xi, a, ph)| a * (xi.dot(x) + ph).cos()).sum())
}

/// `d` independent [`holder_sample`] components.
pub fn holder_sample_vector(beta: f64, grid: &PeriodicGrid, seed: u64, amplitude: f64, max_level: Option<i32>) -> GridField {
    let parts: Vec<GridField> = (0..grid.dim)
        .map(|c| holder_sample(beta, grid, derive_seed(seed, c as u64), amplitude, max_level))
        .collect();
    let values = parts.into_iter().flat_map(|p| p.into_values()).collect();
    GridField::new(*grid, FieldShape::Vector, values).expect("sized")
}

/// Gaussian random field with every mode of radial frequency `≤ band`
/// present, spectral weight `(1+|ξ|)^{−decay}`; real by construction.
pub fn band_limited_field(grid: &PeriodicGrid, seed: u64, band: f64, decay: f64) -> GridField {
    let mut rng = rng_from_seed(seed);
    let n = grid.len();
    let mut values = vec![0.0; n];
    let mut modes = Vec::new();
    for i in 0..n {
        let xi = grid.frequency(i);
        let r = xi.norm();
        let m = grid.multi_index(i);
        let nyq = (0..grid.dim).any(|a| grid.is_nyquist(m[a]));
        if r > band || nyq {
            continue;
        }
        let w = (1.0 + r).powf(-decay);
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        modes.push((xi, w * a, w * b));
    }
    for (i, v) in values.iter_mut().enumerate() {
        let x = grid.point(i);
        *v = modes.iter().map(|(xi, a, b)| a * xi.dot(&x).cos() + b * xi.dot(&x).sin()).sum();
    }
    GridField::new(*grid, FieldShape::Scalar, values).expect("sized")
}
