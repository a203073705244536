use super::grid::{self, PeriodicGrid};
use crate::error::{Error, Result};
use crate::linalg::{DMat, DVec};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::sync::OnceLock;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldShape {
    Scalar,
    Vector,
    Matrix,
}

impl FieldShape {
    pub fn components(&self, dim: usize) -> usize {
        match self {
            FieldShape::Scalar => 1,
            FieldShape::Vector => dim,
            FieldShape::Matrix => dim * dim,
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            FieldShape::Scalar => "scalar",
            FieldShape::Vector => "vector",
            FieldShape::Matrix => "matrix",
        }
    }
}

/// Real field on a periodic grid, stored component-major: component `c` of
/// point `i` lives at `values[c·N^d + i]`. Matrix components are row-major.
#[derive(Clone, Debug)]
pub struct GridField {
    grid: PeriodicGrid,
    shape: FieldShape,
    values: Vec<f64>,
    spectrum: OnceLock<Vec<Vec<Complex64>>>,
}

impl PartialEq for GridField {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.shape == other.shape && self.values == other.values
    }
}

impl GridField {
    pub fn new(grid: PeriodicGrid, shape: FieldShape, values: Vec<f64>) -> Result<Self> {
        let want = grid.len() * shape.components(grid.dim);
        if values.len() != want {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {} field needing {want}",
                values.len(),
                shape.tag()
            )));
        }
        Ok(Self {
            grid,
            shape,
            values,
            spectrum: OnceLock::new(),
        })
    }

    pub fn zeros(grid: PeriodicGrid, shape: FieldShape) -> Self {
        let n = grid.len() * shape.components(grid.dim);
        Self::new(grid, shape, vec![0.0; n]).expect("sized")
    }

    pub fn constant_scalar(grid: PeriodicGrid, c: f64) -> Self {
        Self::new(grid, FieldShape::Scalar, vec![c; grid.len()]).expect("sized")
    }

    pub fn constant_vector(grid: PeriodicGrid, c: &DVec) -> Self {
        Self::from_fn_vector(grid, |_| *c)
    }

    pub fn from_fn_scalar(grid: PeriodicGrid, f: impl Fn(&DVec) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self::new(grid, FieldShape::Scalar, values).expect("sized")
    }

    pub fn from_fn_vector(grid: PeriodicGrid, f: impl Fn(&DVec) -> DVec) -> Self {
        let n = grid.len();
        let d = grid.dim;
        let mut values = vec![0.0; n * d];
        for i in 0..n {
            let v = f(&grid.point(i));
            for c in 0..d {
                values[c * n + i] = v[c];
            }
        }
        Self::new(grid, FieldShape::Vector, values).expect("sized")
    }

    pub fn from_fn_matrix(grid: PeriodicGrid, f: impl Fn(&DVec) -> DMat) -> Self {
        let n = grid.len();
        let d = grid.dim;
        let mut values = vec![0.0; n * d * d];
        for i in 0..n {
            let m = f(&grid.point(i));
            for (c, v) in m.row_major().into_iter().enumerate() {
                values[c * n + i] = v;
            }
        }
        Self::new(grid, FieldShape::Matrix, values).expect("sized")
    }

    /// Stacks scalar fields into a vector (`d` parts) or matrix (`d²` parts).
    pub fn from_components(parts: &[GridField]) -> Result<Self> {
        let grid = parts
            .first()
            .ok_or_else(|| Error::DimensionMismatch("no components".into()))?
            .grid;
        let d = grid.dim;
        let shape = match parts.len() {
            1 => FieldShape::Scalar,
            k if k == d => FieldShape::Vector,
            k if k == d * d => FieldShape::Matrix,
            k => return Err(Error::DimensionMismatch(format!("{k} components in dimension {d}"))),
        };
        let mut values = Vec::with_capacity(grid.len() * parts.len());
        for p in parts {
            if p.grid != grid || p.shape != FieldShape::Scalar {
                return Err(Error::DimensionMismatch("components must be scalar fields on one grid".into()));
            }
            values.extend_from_slice(&p.values);
        }
        Self::new(grid, shape, values)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn shape(&self) -> FieldShape {
        self.shape
    }

    pub fn components(&self) -> usize {
        self.shape.components(self.grid.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[c * n..(c + 1) * n]
    }

    pub fn component_field(&self, c: usize) -> GridField {
        GridField::new(self.grid, FieldShape::Scalar, self.component(c).to_vec()).expect("sized")
    }

    pub fn scalar_at(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn vec_at(&self, i: usize) -> DVec {
        let n = self.grid.len();
        let mut out = DVec::zeros(self.grid.dim);
        for c in 0..self.grid.dim {
            out[c] = self.values[c * n + i];
        }
        out
    }

    pub fn mat_at(&self, i: usize) -> DMat {
        let n = self.grid.len();
        let d = self.grid.dim;
        let entries: Vec<f64> = (0..d * d).map(|c| self.values[c * n + i]).collect();
        DMat::from_row_major(&entries)
    }

    /// Euclidean (Frobenius for matrices) magnitude at every point.
    pub fn pointwise_magnitude(&self) -> Vec<f64> {
        let n = self.grid.len();
        let k = self.components();
        (0..n)
            .map(|i| {
                if k == 1 {
                    self.values[i].abs()
                } else {
                    (0..k).map(|c| self.values[c * n + i].powi(2)).sum::<f64>().sqrt()
                }
            })
            .collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.pointwise_magnitude().into_iter().fold(0.0, f64::max)
    }

    /// Largest operator norm of a matrix field.
    pub fn sup_operator_norm(&self) -> f64 {
        assert_eq!(self.shape, FieldShape::Matrix);
        (0..self.grid.len()).map(|i| self.mat_at(i).op_norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &GridField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField::new(self.grid, self.shape, self.values.iter().map(|&x| f(x)).collect()).expect("sized")
    }

    pub fn scale(&self, s: f64) -> GridField {
        self.map_values(|x| s * x)
    }

    pub fn axpy(&self, a: f64, other: &GridField) -> GridField {
        assert_eq!(self.values.len(), other.values.len());
        let values = self.values.iter().zip(&other.values).map(|(x, y)| x + a * y).collect();
        GridField::new(self.grid, self.shape, values).expect("sized")
    }

    pub fn add(&self, other: &GridField) -> GridField {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &GridField) -> GridField {
        self.axpy(-1.0, other)
    }

    /// Pointwise product with a scalar field.
    pub fn mul_scalar_field(&self, s: &GridField) -> GridField {
        let n = self.grid.len();
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(k, x)| x * s.values[k % n])
            .collect();
        GridField::new(self.grid, self.shape, values).expect("sized")
    }

    /// DFT of every component, computed once.
    pub fn spectrum(&self) -> &[Vec<Complex64>] {
        self.spectrum.get_or_init(|| {
            (0..self.components())
                .map(|c| grid::forward(&self.grid, self.component(c)))
                .collect()
        })
    }

    pub fn from_spectra(grid: PeriodicGrid, shape: FieldShape, spectra: Vec<Vec<Complex64>>) -> Self {
        let mut values = Vec::with_capacity(grid.len() * spectra.len());
        for s in spectra {
            values.extend(grid::inverse_real(&grid, s));
        }
        GridField::new(grid, shape, values).expect("sized")
    }

    /// Applies a complex Fourier multiplier `m(ξ)` to every component and
    /// keeps the real part (so a Nyquist bin sees `Re m`).
    pub fn apply_multiplier(&self, m: impl Fn(&DVec) -> Complex64) -> GridField {
        let mult: Vec<Complex64> = (0..self.grid.len()).map(|i| m(&self.grid.frequency(i))).collect();
        self.apply_multiplier_table(&mult)
    }

    pub fn apply_multiplier_table(&self, mult: &[Complex64]) -> GridField {
        let spectra = self
            .spectrum()
            .iter()
            .map(|s| s.iter().zip(mult).map(|(a, b)| a * b).collect())
            .collect();
        GridField::from_spectra(self.grid, self.shape, spectra)
    }

    pub fn apply_real_multiplier_table(&self, mult: &[f64]) -> GridField {
        let spectra = self
            .spectrum()
            .iter()
            .map(|s| s.iter().zip(mult).map(|(a, b)| a * b).collect())
            .collect();
        GridField::from_spectra(self.grid, self.shape, spectra)
    }

    /// Spectral partial derivative of a scalar field along `axis`; the
    /// Nyquist bin of that axis is dropped.
    pub fn partial(&self, axis: usize) -> GridField {
        assert_eq!(self.shape, FieldShape::Scalar);
        let g = self.grid;
        let mult: Vec<Complex64> = (0..g.len())
            .map(|i| {
                let k = g.multi_index(i)[axis];
                if g.is_nyquist(k) {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, g.axis_frequency(k))
                }
            })
            .collect();
        self.apply_multiplier_table(&mult)
    }

    /// Gradient: scalar → vector, vector → matrix with entry `(a, b) = ∂_b f_a`.
    pub fn gradient(&self) -> Result<GridField> {
        let d = self.grid.dim;
        let parts: Vec<GridField> = match self.shape {
            FieldShape::Scalar => (0..d).map(|b| self.partial(b)).collect(),
            FieldShape::Vector => {
                let mut out = Vec::with_capacity(d * d);
                for a in 0..d {
                    let fa = self.component_field(a);
                    for b in 0..d {
                        out.push(fa.partial(b));
                    }
                }
                out
            }
            FieldShape::Matrix => {
                return Err(Error::DimensionMismatch("gradient of a matrix field".into()));
            }
        };
        GridField::from_components(&parts)
    }

    /// `b·∇u` for a vector field `b` and scalar or vector `u` (componentwise).
    pub fn advect(b: &GridField, u: &GridField) -> Result<GridField> {
        if b.shape != FieldShape::Vector {
            return Err(Error::DimensionMismatch("advecting field must be a vector field".into()));
        }
        let d = b.grid.dim;
        let n = b.grid.len();
        let comps = u.components();
        let mut values = vec![0.0; n * comps];
        for c in 0..comps {
            let uc = u.component_field(c);
            for axis in 0..d {
                let du = uc.partial(axis);
                let bc = b.component(axis);
                for i in 0..n {
                    values[c * n + i] += bc[i] * du.values[i];
                }
            }
        }
        GridField::new(b.grid, u.shape, values)
    }

    /// Mean over the grid of every component.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.grid.len() as f64;
        (0..self.components()).map(|c| self.component(c).iter().sum::<f64>() / n).collect()
    }

    /// `∫ ⟨f, g⟩ dx` by the Riemann sum.
    pub fn inner(&self, other: &GridField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn to_csv(&self) -> String {
        let g = &self.grid;
        let mut s = String::new();
        let _ = writeln!(s, "# dim={}", g.dim);
        let _ = writeln!(s, "# half_period={}", g.half_period);
        let _ = writeln!(s, "# n={}", g.n);
        let _ = writeln!(s, "# shape={}", self.shape.tag());
        for a in 0..g.dim {
            if a > 0 {
                s.push(',');
            }
            let _ = write!(s, "x_{}", a + 1);
        }
        for c in 0..self.components() {
            let _ = write!(s, ",v_{}", c + 1);
        }
        s.push('\n');
        for i in 0..g.len() {
            let p = g.point(i);
            for a in 0..g.dim {
                if a > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{}", p[a]);
            }
            for c in 0..self.components() {
                let _ = write!(s, ",{}", self.values[c * g.len() + i]);
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<GridField> {
        let mut meta = std::collections::BTreeMap::new();
        let mut rows: Vec<&str> = Vec::new();
        let mut header = false;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(kv) = line.strip_prefix('#') {
                if let Some((k, v)) = kv.trim().split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
            } else if !header {
                header = true;
            } else {
                rows.push(line);
            }
        }
        let get = |k: &str| meta.get(k).ok_or_else(|| Error::Parse(format!("missing '{k}'")));
        let dim: usize = get("dim")?.parse().map_err(|_| Error::Parse("bad dim".into()))?;
        let half_period: f64 = get("half_period")?.parse().map_err(|_| Error::Parse("bad half_period".into()))?;
        let n: usize = get("n")?.parse().map_err(|_| Error::Parse("bad n".into()))?;
        let shape = match get("shape")?.as_str() {
            "scalar" => FieldShape::Scalar,
            "vector" => FieldShape::Vector,
            "matrix" => FieldShape::Matrix,
            s => return Err(Error::Parse(format!("unknown shape '{s}'"))),
        };
        let grid = PeriodicGrid::new(dim, half_period, n)?;
        let comps = shape.components(dim);
        if rows.len() != grid.len() {
            return Err(Error::Parse(format!("{} rows for {} grid points", rows.len(), grid.len())));
        }
        let mut values = vec![0.0; grid.len() * comps];
        for (i, row) in rows.iter().enumerate() {
            let cols: Vec<&str> = row.split(',').collect();
            if cols.len() != dim + comps {
                return Err(Error::Parse(format!("row {i} has {} columns", cols.len())));
            }
            for c in 0..comps {
                values[c * grid.len() + i] = cols[dim + c]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad value in row {i}")))?;
            }
        }
        GridField::new(grid, shape, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_matches_finite_differences() {
        let g = PeriodicGrid::new(1, 8.0, 256).unwrap();
        let w = std::f64::consts::PI / 8.0;
        let f = GridField::from_fn_scalar(g, |x| (w * x[0]).sin() + 0.3 * (3.0 * w * x[0]).cos());
        let df = f.gradient().unwrap();
        let exact = GridField::from_fn_scalar(g, |x| w * (w * x[0]).cos() - 0.9 * w * (3.0 * w * x[0]).sin());
        assert!(df.max_abs_diff(&exact) < 1e-12);
        // centered differences carry an O(h²) error
        let h = g.spacing();
        let n = g.n;
        let v = f.values();
        let fd: Vec<f64> = (0..n).map(|i| (v[(i + 1) % n] - v[(i + n - 1) % n]) / (2.0 * h)).collect();
        let err = fd.iter().zip(df.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 0.1 * h * h * 10.0);
    }

    #[test]
    fn vector_gradient_layout() {
        let g = PeriodicGrid::new(2, 8.0, 32).unwrap();
        let w = std::f64::consts::PI / 8.0;
        let f = GridField::from_fn_vector(g, |x| DVec::new2((w * x[1]).sin(), (2.0 * w * x[0]).cos()));
        let j = f.gradient().unwrap();
        let i = 77;
        let x = g.point(i);
        let m = j.mat_at(i);
        assert!(m.get(0, 0).abs() < 1e-12);
        assert!((m.get(0, 1) - w * (w * x[1]).cos()).abs() < 1e-12);
        assert!((m.get(1, 0) + 2.0 * w * (2.0 * w * x[0]).sin()).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let g = PeriodicGrid::new(2, 4.0, 16).unwrap();
        let f = GridField::from_fn_vector(g, |x| DVec::new2(x[0].sin() / 3.0, x[1] * 0.1));
        let back = GridField::from_csv(&f.to_csv()).unwrap();
        assert_eq!(back, f);
    }
}
