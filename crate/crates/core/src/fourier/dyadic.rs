//! Littlewood–Paley blocks on a periodic grid.
//!
//! `χ(ξ) = ψ(3 − 2|ξ|)` with `ψ(t) = g(t)/(g(t) + g(1 − t))`, `g(t) = e^{−1/t}`
//! for `t > 0`. Outside the transition band `1 < |ξ| < 3/2` the multipliers
//! are exactly 0 or 1.

use super::field::GridField;
use super::grid::PeriodicGrid;
use crate::error::{Error, Result};

fn g(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

fn psi(t: f64) -> f64 {
    if t >= 1.0 {
        return 1.0;
    }
    if t <= 0.0 {
        return 0.0;
    }
    let a = g(t);
    a / (a + g(1.0 - t))
}

/// Radial cutoff: 1 on `|ξ| ≤ 1`, 0 on `|ξ| ≥ 3/2`.
pub fn chi(r: f64) -> f64 {
    psi(3.0 - 2.0 * r.abs())
}

/// Ring function `φ(ξ) = χ(ξ) − χ(2ξ)`.
pub fn ring(r: f64) -> f64 {
    chi(r) - chi(2.0 * r)
}

/// Multiplier of `Δ_j` at radial frequency `r`.
pub fn block_multiplier(j: i32, r: f64) -> f64 {
    if j < 0 {
        chi(2.0 * r)
    } else {
        ring(r / 2f64.powi(j))
    }
}

/// Multiplier of `S_j = Σ_{k<j} Δ_k`.
pub fn lowpass_multiplier(j: i32, r: f64) -> f64 {
    if j < 0 {
        0.0
    } else {
        chi(r * 2f64.powi(1 - j))
    }
}

/// Sampled block multipliers for levels `−1..=J` on one grid.
#[derive(Clone, Debug)]
pub struct DyadicBlockSet {
    grid: PeriodicGrid,
    max_level: i32,
    freq_norms: Vec<f64>,
    multipliers: Vec<Vec<f64>>,
}

impl DyadicBlockSet {
    pub fn new(grid: PeriodicGrid) -> Self {
        let max_level = grid.max_level();
        let freq_norms = grid.frequency_norms();
        let multipliers = (-1..=max_level)
            .map(|j| freq_norms.iter().map(|&r| block_multiplier(j, r)).collect())
            .collect();
        Self {
            grid,
            max_level,
            freq_norms,
            multipliers,
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn max_level(&self) -> i32 {
        self.max_level
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<i32> {
        -1..=self.max_level
    }

    pub fn multiplier(&self, j: i32) -> Result<&[f64]> {
        self.check_level(j, self.max_level)?;
        Ok(&self.multipliers[(j + 1) as usize])
    }

    fn check_level(&self, j: i32, max: i32) -> Result<()> {
        if j < -1 || j > max {
            return Err(Error::LevelOutOfRange { level: j, min: -1, max });
        }
        Ok(())
    }

    fn check_grid(&self, f: &GridField) -> Result<()> {
        if *f.grid() != self.grid {
            return Err(Error::DimensionMismatch("field lives on a different grid".into()));
        }
        Ok(())
    }

    /// `Δ_j f`, componentwise.
    pub fn block(&self, f: &GridField, j: i32) -> Result<GridField> {
        self.check_grid(f)?;
        Ok(f.apply_real_multiplier_table(self.multiplier(j)?))
    }

    /// Every block `Δ_{−1} f, …, Δ_J f` from one forward transform.
    pub fn blocks(&self, f: &GridField) -> Result<Vec<GridField>> {
        self.check_grid(f)?;
        Ok(self.multipliers.iter().map(|m| f.apply_real_multiplier_table(m)).collect())
    }

    /// `S_j f` for `−1 ≤ j ≤ J + 1`.
    pub fn lowpass(&self, f: &GridField, j: i32) -> Result<GridField> {
        self.check_grid(f)?;
        self.check_level(j, self.max_level + 1)?;
        let m: Vec<f64> = self.freq_norms.iter().map(|&r| lowpass_multiplier(j, r)).collect();
        Ok(f.apply_real_multiplier_table(&m))
    }

    /// `max_ξ |χ(2ξ) + Σ_{j=0}^{k} φ(2^{−j}ξ) − χ(2^{−k}ξ)|` over grid
    /// frequencies and `k ≤ J`.
    pub fn partition_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (i, &r) in self.freq_norms.iter().enumerate() {
            let mut acc = self.multipliers[0][i];
            for k in 0..=self.max_level {
                acc += self.multipliers[(k + 1) as usize][i];
                worst = worst.max((acc - chi(r / 2f64.powi(k))).abs());
            }
        }
        worst
    }

    /// `true` when `Δ_j` and `Δ_{j'}` multipliers have disjoint support.
    pub fn disjoint(&self, j: i32, jp: i32) -> bool {
        let a = &self.multipliers[(j + 1) as usize];
        let b = &self.multipliers[(jp + 1) as usize];
        a.iter().zip(b).all(|(x, y)| x * y == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::field::FieldShape;
    use proptest::prelude::*;

    #[test]
    fn cutoff_values() {
        assert_eq!(chi(0.0), 1.0);
        assert_eq!(chi(1.0), 1.0);
        assert_eq!(chi(1.5), 0.0);
        assert_eq!(ring(1.0), 1.0);
        assert!(chi(1.25) > 0.0 && chi(1.25) < 1.0);
        assert!((chi(1.25) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constants_live_in_the_low_block() {
        let g = PeriodicGrid::new(1, 8.0, 64).unwrap();
        let set = DyadicBlockSet::new(g);
        let f = GridField::constant_scalar(g, 2.5);
        assert!(set.block(&f, -1).unwrap().max_abs_diff(&f) < 1e-14);
        for j in 0..=set.max_level() {
            assert!(set.block(&f, j).unwrap().sup_norm() < 1e-14);
        }
        assert!(set.lowpass(&f, -1).unwrap().sup_norm() == 0.0);
        assert!(set.lowpass(&f, 2).unwrap().max_abs_diff(&f) < 1e-14);
    }

    #[test]
    fn level_errors() {
        let g = PeriodicGrid::new(1, 8.0, 64).unwrap();
        let set = DyadicBlockSet::new(g);
        let f = GridField::zeros(g, FieldShape::Scalar);
        assert!(matches!(set.block(&f, -2), Err(Error::LevelOutOfRange { .. })));
        assert!(matches!(set.block(&f, set.max_level() + 1), Err(Error::LevelOutOfRange { .. })));
        assert!(set.lowpass(&f, set.max_level() + 1).is_ok());
    }

    #[test]
    fn exact_dyadic_frequency_is_passed() {
        // L = π puts integer frequencies on the grid
        let g = PeriodicGrid::new(1, std::f64::consts::PI, 128).unwrap();
        let set = DyadicBlockSet::new(g);
        for j in 0..=set.max_level() {
            let xi = 2f64.powi(j);
            let f = GridField::from_fn_scalar(g, |x| (xi * x[0]).cos());
            assert!(set.block(&f, j).unwrap().max_abs_diff(&f) < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn ring_is_nonnegative_and_supported(r in 0.0f64..4.0) {
            let v = ring(r);
            prop_assert!(v >= 0.0);
            if !(0.5..=1.5).contains(&r) {
                prop_assert_eq!(v, 0.0);
            }
        }
    }
}
