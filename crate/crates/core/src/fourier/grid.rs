use crate::error::{Error, Result};
use crate::linalg::DVec;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

/// Uniform periodic grid on `[−L, L)^d` with `N` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    pub dim: usize,
    pub half_period: f64,
    pub n: usize,
}

impl PeriodicGrid {
    pub fn new(dim: usize, half_period: f64, n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::ParameterOutOfRange(format!("grid dimension {dim} not in {{1, 2}}")));
        }
        if !(half_period > 0.0 && half_period.is_finite()) {
            return Err(Error::ParameterOutOfRange(format!("half period {half_period} must be positive")));
        }
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::ParameterOutOfRange(format!("{n} points per axis: need a power of two >= 16")));
        }
        Ok(Self { dim, half_period, n })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_period / self.n as f64
    }

    /// Volume element `h^d` of the Riemann sums.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        (2.0 * self.half_period).powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis indices of flat index `i`; the last axis is contiguous.
    pub fn multi_index(&self, i: usize) -> [usize; 2] {
        if self.dim == 1 {
            [i, 0]
        } else {
            [i / self.n, i % self.n]
        }
    }

    pub fn flat_index(&self, idx: [usize; 2]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] * self.n + idx[1]
        }
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_period + i as f64 * self.spacing()
    }

    pub fn point(&self, i: usize) -> DVec {
        let m = self.multi_index(i);
        if self.dim == 1 {
            DVec::scalar(self.coord(m[0]))
        } else {
            DVec::new2(self.coord(m[0]), self.coord(m[1]))
        }
    }

    /// Signed wavenumber of FFT bin `k`; the Nyquist bin maps to `−N/2`.
    pub fn wavenumber(&self, k: usize) -> i64 {
        let n = self.n as i64;
        let k = k as i64;
        if k < n / 2 {
            k
        } else {
            k - n
        }
    }

    pub fn axis_frequency(&self, k: usize) -> f64 {
        PI * self.wavenumber(k) as f64 / self.half_period
    }

    pub fn is_nyquist(&self, k: usize) -> bool {
        k == self.n / 2
    }

    /// Frequency vector of flat spectral index `i`.
    pub fn frequency(&self, i: usize) -> DVec {
        let m = self.multi_index(i);
        if self.dim == 1 {
            DVec::scalar(self.axis_frequency(m[0]))
        } else {
            DVec::new2(self.axis_frequency(m[0]), self.axis_frequency(m[1]))
        }
    }

    pub fn frequency_norms(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.frequency(i).norm()).collect()
    }

    /// Largest radial frequency fully resolved on every axis, `πN/(2L)`.
    pub fn nyquist_frequency(&self) -> f64 {
        PI * self.n as f64 / (2.0 * self.half_period)
    }

    /// Highest dyadic level `J = ⌊log₂(Nπ/(3L))⌋`.
    pub fn max_level(&self) -> i32 {
        (self.n as f64 * PI / (3.0 * self.half_period)).log2().floor() as i32
    }

    /// Periodic displacement `x − y` wrapped into `[−L, L)` per axis.
    pub fn periodic_delta(&self, x: &DVec, y: &DVec) -> DVec {
        let p = 2.0 * self.half_period;
        (*x - *y).map(|d| d - p * ((d + self.half_period) / p).floor())
    }

    /// Wraps a point into the fundamental cell.
    pub fn wrap(&self, x: &DVec) -> DVec {
        let p = 2.0 * self.half_period;
        x.map(|v| v - p * ((v + self.half_period) / p).floor())
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

fn transform(grid: &PeriodicGrid, data: &mut [Complex64], inverse: bool) {
    let n = grid.n;
    let fft = plan(n, inverse);
    if grid.dim == 1 {
        fft.process(data);
    } else {
        for row in data.chunks_mut(n) {
            fft.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = data[i * n + j];
            }
            fft.process(&mut col);
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
    }
    if inverse {
        let s = 1.0 / grid.len() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }
}

/// Unnormalised forward DFT of real samples.
pub fn forward(grid: &PeriodicGrid, values: &[f64]) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    transform(grid, &mut data, false);
    data
}

/// Normalised inverse DFT, keeping the real part.
pub fn inverse_real(grid: &PeriodicGrid, mut spectrum: Vec<Complex64>) -> Vec<f64> {
    transform(grid, &mut spectrum, true);
    spectrum.into_iter().map(|c| c.re).collect()
}

pub fn inverse_complex(grid: &PeriodicGrid, mut spectrum: Vec<Complex64>) -> Vec<Complex64> {
    transform(grid, &mut spectrum, true);
    spectrum
}
