//! Off-grid evaluation of grid fields.
//!
//! `Spectral` is the trigonometric interpolant (exact on band-limited
//! fields; the Nyquist mode uses `cos`). `Cubic` is 4-point periodic
//! Lagrange interpolation per axis, for hot loops.

use super::field::GridField;
use super::grid::PeriodicGrid;
use crate::linalg::{DMat, DVec};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InterpMode {
    #[default]
    Spectral,
    Cubic,
}

#[derive(Clone, Debug)]
pub struct Interpolant {
    grid: PeriodicGrid,
    mode: InterpMode,
    ncomp: usize,
    values: Vec<f64>,
    spectra: Vec<Vec<Complex64>>,
    // spectral derivatives per component and axis, for cubic gradients
    grads: Vec<Vec<f64>>,
}

impl Interpolant {
    pub fn new(field: &GridField, mode: InterpMode) -> Self {
        let grid = *field.grid();
        let ncomp = field.components();
        let scale = 1.0 / grid.len() as f64;
        let spectra = field
            .spectrum()
            .iter()
            .map(|s| s.iter().map(|c| c * scale).collect())
            .collect();
        let grads = if mode == InterpMode::Cubic {
            let mut out = Vec::new();
            for c in 0..ncomp {
                let fc = field.component_field(c);
                for a in 0..grid.dim {
                    out.push(fc.partial(a).into_values());
                }
            }
            out
        } else {
            Vec::new()
        };
        Self {
            grid,
            mode,
            ncomp,
            values: field.values().to_vec(),
            spectra,
            grads,
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.ncomp
    }

    pub fn mode(&self) -> InterpMode {
        self.mode
    }

    /// Per-axis basis `E_k(x) = e^{iξ_k(x+L)}` (Nyquist: `cos`) and its
    /// derivative.
    fn basis(&self, x: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let g = &self.grid;
        let n = g.n;
        let w = std::f64::consts::PI / g.half_period;
        let s = x + g.half_period;
        let step = Complex64::from_polar(1.0, w * s);
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        let mut de = vec![Complex64::new(0.0, 0.0); n];
        let mut cur = Complex64::new(1.0, 0.0);
        for k in 0..n / 2 {
            e[k] = cur;
            de[k] = Complex64::new(0.0, w * k as f64) * cur;
            if k > 0 {
                e[n - k] = cur.conj();
                de[n - k] = Complex64::new(0.0, -w * k as f64) * cur.conj();
            }
            cur *= step;
        }
        let a = w * (n / 2) as f64 * s;
        e[n / 2] = Complex64::new(a.cos(), 0.0);
        de[n / 2] = Complex64::new(-w * (n / 2) as f64 * a.sin(), 0.0);
        (e, de)
    }

    fn spectral_eval(&self, x: &DVec, want_grad: bool) -> (Vec<f64>, Vec<DVec>) {
        let g = &self.grid;
        let n = g.n;
        let d = g.dim;
        let mut vals = vec![0.0; self.ncomp];
        let mut grads = vec![DVec::zeros(d); self.ncomp];
        if d == 1 {
            let (e, de) = self.basis(x[0]);
            for c in 0..self.ncomp {
                let s = &self.spectra[c];
                let mut acc = Complex64::new(0.0, 0.0);
                let mut dacc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc += s[k] * e[k];
                    if want_grad {
                        dacc += s[k] * de[k];
                    }
                }
                vals[c] = acc.re;
                grads[c][0] = dacc.re;
            }
        } else {
            let (e0, de0) = self.basis(x[0]);
            let (e1, de1) = self.basis(x[1]);
            for c in 0..self.ncomp {
                let s = &self.spectra[c];
                let mut acc = Complex64::new(0.0, 0.0);
                let mut d0 = Complex64::new(0.0, 0.0);
                let mut d1 = Complex64::new(0.0, 0.0);
                for k0 in 0..n {
                    let row = &s[k0 * n..(k0 + 1) * n];
                    let mut r = Complex64::new(0.0, 0.0);
                    let mut rd = Complex64::new(0.0, 0.0);
                    for k1 in 0..n {
                        r += row[k1] * e1[k1];
                        if want_grad {
                            rd += row[k1] * de1[k1];
                        }
                    }
                    acc += r * e0[k0];
                    if want_grad {
                        d0 += r * de0[k0];
                        d1 += rd * e0[k0];
                    }
                }
                vals[c] = acc.re;
                grads[c] = DVec::new2(d0.re, d1.re);
            }
        }
        (vals, grads)
    }

    /// Lagrange weights for the 4 nodes around `x` on one axis.
    fn cubic_stencil(&self, x: f64) -> ([usize; 4], [f64; 4]) {
        let g = &self.grid;
        let n = g.n as i64;
        let t = (x + g.half_period) / g.spacing();
        let i0 = t.floor();
        let u = t - i0;
        let base = i0 as i64 - 1;
        let idx = [0, 1, 2, 3].map(|k| (base + k).rem_euclid(n) as usize);
        // nodes at -1, 0, 1, 2 relative to i0
        let w = [
            -u * (u - 1.0) * (u - 2.0) / 6.0,
            (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
            -(u + 1.0) * u * (u - 2.0) / 2.0,
            (u + 1.0) * u * (u - 1.0) / 6.0,
        ];
        (idx, w)
    }

    fn cubic_apply(&self, data: &[f64], x: &DVec) -> f64 {
        let g = &self.grid;
        if g.dim == 1 {
            let (idx, w) = self.cubic_stencil(x[0]);
            (0..4).map(|k| w[k] * data[idx[k]]).sum()
        } else {
            let (i0, w0) = self.cubic_stencil(x[0]);
            let (i1, w1) = self.cubic_stencil(x[1]);
            let mut acc = 0.0;
            for a in 0..4 {
                let mut r = 0.0;
                for b in 0..4 {
                    r += w1[b] * data[g.flat_index([i0[a], i1[b]])];
                }
                acc += w0[a] * r;
            }
            acc
        }
    }

    /// All components at `x`.
    pub fn eval(&self, x: &DVec) -> Vec<f64> {
        match self.mode {
            InterpMode::Spectral => self.spectral_eval(x, false).0,
            InterpMode::Cubic => {
                let n = self.grid.len();
                (0..self.ncomp)
                    .map(|c| self.cubic_apply(&self.values[c * n..(c + 1) * n], x))
                    .collect()
            }
        }
    }

    pub fn eval_scalar(&self, x: &DVec) -> f64 {
        self.eval(x)[0]
    }

    pub fn eval_vec(&self, x: &DVec) -> DVec {
        DVec::from_slice(&self.eval(x))
    }

    /// Value and Jacobian (`(a, b) = ∂_b f_a`) of a vector field.
    pub fn eval_vec_with_jacobian(&self, x: &DVec) -> (DVec, DMat) {
        let d = self.grid.dim;
        match self.mode {
            InterpMode::Spectral => {
                let (v, g) = self.spectral_eval(x, true);
                let mut j = DMat::zeros(d);
                for a in 0..d {
                    for b in 0..d {
                        j.set(a, b, g[a][b]);
                    }
                }
                (DVec::from_slice(&v), j)
            }
            InterpMode::Cubic => {
                let v = self.eval_vec(x);
                let mut j = DMat::zeros(d);
                for a in 0..d {
                    for b in 0..d {
                        j.set(a, b, self.cubic_apply(&self.grads[a * d + b], x));
                    }
                }
                (v, j)
            }
        }
    }
}
