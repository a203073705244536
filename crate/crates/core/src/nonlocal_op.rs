//! The nonlocal operator
//! `ℒf(x) = ∫ [f(x+σ(x)z) − f(x) − ∇f(x)·σ(x)z 1_{|z|≤1}] ν(dz)`,
//! its symbol for constant `σ`, and the Bernstein and commutator checks.

use crate::error::{Error, Result};
use crate::fourier::{
    band_limited_field, norms, DyadicBlockSet, FieldShape, GridField, InterpMode, Interpolant, PeriodicGrid,
};
use crate::levy_model::{unit_directions, LevyMeasureSpec, MeasureKind};
use crate::linalg::{DMat, DVec};
use crate::numerics::{self, derive_seed};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

#[derive(Clone, Debug)]
pub enum SigmaField {
    Constant { sigma: DMat, lambda: f64 },
    Variable { field: GridField, lambda: f64, lipschitz: f64, interp: Box<Interpolant> },
}

fn ellipticity(m: &DMat) -> f64 {
    let (hi, lo) = m.singular_values();
    if lo == 0.0 {
        return f64::INFINITY;
    }
    hi.max(1.0 / lo).max(1.0)
}

impl SigmaField {
    pub fn constant(sigma: DMat) -> Result<Self> {
        let lambda = ellipticity(&sigma);
        if !lambda.is_finite() {
            return Err(Error::ParameterOutOfRange("sigma is singular".into()));
        }
        Ok(SigmaField::Constant { sigma, lambda })
    }

    pub fn identity(dim: usize) -> Self {
        SigmaField::Constant {
            sigma: DMat::identity(dim),
            lambda: 1.0,
        }
    }

    /// Matrix-valued grid field; `Λ` is the worst ellipticity over the grid
    /// and the Lipschitz constant is the largest finite-difference slope
    /// between neighbouring points.
    pub fn variable(field: GridField) -> Result<Self> {
        if field.shape() != FieldShape::Matrix {
            return Err(Error::DimensionMismatch("sigma must be a matrix field".into()));
        }
        let g = *field.grid();
        let mut lambda = 1.0_f64;
        for i in 0..g.len() {
            lambda = lambda.max(ellipticity(&field.mat_at(i)));
        }
        if !lambda.is_finite() {
            return Err(Error::ParameterOutOfRange("sigma is singular somewhere".into()));
        }
        let h = g.spacing();
        let mut lip = 0.0_f64;
        for i in 0..g.len() {
            let m = g.multi_index(i);
            for a in 0..g.dim {
                let mut nb = m;
                nb[a] = (nb[a] + 1) % g.n;
                let k = g.flat_index(nb);
                let diff = field.mat_at(k).add(&field.mat_at(i).scale(-1.0));
                lip = lip.max(diff.op_norm() / h);
            }
        }
        let interp = Box::new(Interpolant::new(&field, InterpMode::Spectral));
        Ok(SigmaField::Variable {
            field,
            lambda,
            lipschitz: lip,
            interp,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            SigmaField::Constant { sigma, .. } => sigma.dim(),
            SigmaField::Variable { field, .. } => field.grid().dim,
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            SigmaField::Constant { lambda, .. } | SigmaField::Variable { lambda, .. } => *lambda,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            SigmaField::Constant { .. } => 0.0,
            SigmaField::Variable { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn constant_matrix(&self) -> Option<&DMat> {
        match self {
            SigmaField::Constant { sigma, .. } => Some(sigma),
            SigmaField::Variable { .. } => None,
        }
    }

    pub fn at_index(&self, i: usize) -> DMat {
        match self {
            SigmaField::Constant { sigma, .. } => *sigma,
            SigmaField::Variable { field, .. } => field.mat_at(i),
        }
    }

    pub fn at(&self, x: &DVec) -> DMat {
        match self {
            SigmaField::Constant { sigma, .. } => *sigma,
            SigmaField::Variable { interp, .. } => DMat::from_row_major(&interp.eval(x)),
        }
    }

    /// Grid-average matrix.
    pub fn mean(&self) -> DMat {
        match self {
            SigmaField::Constant { sigma, .. } => *sigma,
            SigmaField::Variable { field, .. } => DMat::from_row_major(&field.mean()),
        }
    }

    /// Checks `Λ⁻¹|ξ| ≤ |σ(x)ξ| ≤ Λ|ξ|` over grid points and 16 directions.
    pub fn check_nondegenerate(&self) -> bool {
        let d = self.dim();
        let dirs = unit_directions(d, 16);
        let lam = self.lambda();
        let pts: Vec<DMat> = match self {
            SigmaField::Constant { sigma, .. } => vec![*sigma],
            SigmaField::Variable { field, .. } => (0..field.grid().len()).map(|i| field.mat_at(i)).collect(),
        };
        pts.iter().all(|m| {
            dirs.iter().all(|xi| {
                let v = m.mul_vec(xi).norm();
                v >= (1.0 - 1e-12) / lam && v <= lam * (1.0 + 1e-12)
            })
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InnerBall {
    /// The ball `|z| < R·2^{−levels}` is replaced by nodes matching its
    /// second and fourth moments.
    #[default]
    Lumped,
    /// The ball is left out: the quadrature represents `ν` restricted to
    /// `|z| ≥ R·2^{−levels}`.
    Dropped,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadOptions {
    pub levels: usize,
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    pub inner: InnerBall,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            levels: 12,
            radial_nodes: 8,
            angular_nodes: 32,
            inner: InnerBall::Lumped,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub z: DVec,
    pub w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuQuadrature {
    pub spec_ref: String,
    pub dim: usize,
    pub alpha: f64,
    pub support_radius: f64,
    pub options: QuadOptions,
    /// Lower edge of the panelled region, `R·2^{−levels}` (0 for atoms).
    pub inner_radius: f64,
    pub nodes: Vec<Node>,
    /// Closed-form `∫|z|²ν(dz)` over the region the nodes represent.
    pub target_second_moment: f64,
}

/// Geometric panels with the default node counts.
pub fn build_quadrature(spec: &LevyMeasureSpec, levels: usize) -> Result<NuQuadrature> {
    build_quadrature_with(
        spec,
        QuadOptions {
            levels,
            ..QuadOptions::default()
        },
    )
}

pub fn build_quadrature_with(spec: &LevyMeasureSpec, opts: QuadOptions) -> Result<NuQuadrature> {
    if opts.levels < 1 || opts.radial_nodes < 1 {
        return Err(Error::ParameterOutOfRange("quadrature needs levels >= 1 and radial_nodes >= 1".into()));
    }
    let r_sup = spec.support_radius();
    let alpha = spec.alpha();
    let (c, dirs, ang_w): (f64, Vec<DVec>, f64) = match &spec.kind {
        MeasureKind::DiscreteSymmetric { atoms, .. } => {
            let nodes: Vec<Node> = atoms.iter().map(|a| Node { z: a.z, w: a.w }).collect();
            let m2 = nodes.iter().map(|n| n.w * n.z.norm_sq()).sum();
            return Ok(NuQuadrature {
                spec_ref: spec.fingerprint(),
                dim: spec.dim,
                alpha,
                support_radius: r_sup,
                options: opts,
                inner_radius: 0.0,
                nodes,
                target_second_moment: m2,
            });
        }
        MeasureKind::TruncatedIsotropicStable { c, .. } if spec.dim == 1 => {
            (*c, vec![DVec::scalar(1.0), DVec::scalar(-1.0)], 1.0)
        }
        MeasureKind::TruncatedIsotropicStable { c, .. } => {
            let n = opts.angular_nodes.max(4) & !1;
            let dirs = (0..n)
                .map(|k| {
                    let a = 2.0 * PI * (k as f64 + 0.5) / n as f64;
                    DVec::new2(a.cos(), a.sin())
                })
                .collect();
            (*c, dirs, 2.0 * PI / n as f64)
        }
        MeasureKind::TruncatedCylindricalStable { c, .. } => {
            let mut dirs = Vec::new();
            for a in 0..spec.dim {
                dirs.push(DVec::unit(spec.dim, a));
                dirs.push(-DVec::unit(spec.dim, a));
            }
            (*c, dirs, 1.0)
        }
    };
    let gl = numerics::gauss_legendre(opts.radial_nodes);
    let eps = r_sup * 2f64.powi(-(opts.levels as i32));
    // radial nodes (s, ∫ s^{-1-α} ds share) over [eps, R], split at 1
    let mut radial: Vec<(f64, f64)> = Vec::new();
    for i in 0..opts.levels {
        let hi = r_sup * 2f64.powi(-(i as i32));
        let lo = hi / 2.0;
        let mut cuts = vec![lo, hi];
        if lo < 1.0 && hi > 1.0 {
            cuts.insert(1, 1.0);
        }
        for w in cuts.windows(2) {
            let (a, b) = (w[0].ln(), w[1].ln());
            for &(x, wt) in &gl {
                let t = 0.5 * (a + b) + 0.5 * (b - a) * x;
                let s = t.exp();
                // ∫ s^{-1-α} ds = ∫ s^{-α} dt
                radial.push((s, 0.5 * (b - a) * wt * s.powf(-alpha)));
            }
        }
    }
    let mut target = spec.moment_between(eps, r_sup, 2.0);
    if opts.inner == InnerBall::Lumped {
        // match ∫_{|z|<eps} s² and s⁴ along each direction
        let m2 = eps.powf(2.0 - alpha) / (2.0 - alpha);
        let m4 = eps.powf(4.0 - alpha) / (4.0 - alpha);
        let s = (m4 / m2).sqrt();
        radial.push((s, m2 / (s * s)));
        target = spec.moment_between(0.0, r_sup, 2.0);
    }
    let mut nodes = Vec::with_capacity(radial.len() * dirs.len());
    for (s, w) in &radial {
        for d in &dirs {
            nodes.push(Node {
                z: *d * *s,
                w: c * ang_w * w,
            });
        }
    }
    Ok(NuQuadrature {
        spec_ref: spec.fingerprint(),
        dim: spec.dim,
        alpha,
        support_radius: r_sup,
        options: opts,
        inner_radius: eps,
        nodes,
        target_second_moment: target,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadratureCertificate {
    pub second_moment: f64,
    pub target: f64,
    pub rel_err: f64,
    pub symmetric: bool,
    pub pass: bool,
}

impl NuQuadrature {
    pub fn second_moment(&self) -> f64 {
        self.nodes.iter().map(|n| n.w * n.z.norm_sq()).sum()
    }

    /// Second-moment agreement (relative 1e−6) and exact ± symmetry.
    pub fn certify(&self) -> QuadratureCertificate {
        let m = self.second_moment();
        let rel = (m - self.target_second_moment).abs() / self.target_second_moment;
        let symmetric = self
            .nodes
            .iter()
            .all(|n| self.nodes.iter().any(|k| k.z == -n.z && k.w == n.w));
        QuadratureCertificate {
            second_moment: m,
            target: self.target_second_moment,
            rel_err: rel,
            symmetric,
            pass: rel <= 1e-6 && symmetric,
        }
    }

    /// Nodes with `|z| > eps`.
    pub fn nodes_above(&self, eps: f64) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(move |n| n.z.norm() > eps)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# spec_ref={}", self.spec_ref);
        let _ = writeln!(s, "# inner_radius={}", self.inner_radius);
        for a in 1..=self.dim {
            let _ = write!(s, "z_{a},");
        }
        s.push_str("w\n");
        for n in &self.nodes {
            for x in n.z.as_slice() {
                let _ = write!(s, "{x},");
            }
            let _ = writeln!(s, "{}", n.w);
        }
        s
    }
}

fn one_minus_cos(t: f64) -> f64 {
    let h = (0.5 * t).sin();
    2.0 * h * h
}

/// `ψ_σ(ξ) = Σ_k w_k (1 − cos(ξ·σz_k))`.
pub fn symbol_psi(quad: &NuQuadrature, sigma: &DMat, xi: &DVec) -> f64 {
    let eta = sigma.transpose_mul_vec(xi);
    quad.nodes.iter().map(|n| n.w * one_minus_cos(eta.dot(&n.z))).sum()
}

pub fn symbol_psi_field(quad: &NuQuadrature, sigma: &SigmaField, xi: &DVec) -> Result<f64> {
    match sigma.constant_matrix() {
        Some(m) => Ok(symbol_psi(quad, m, xi)),
        None => Err(Error::VariableSigma),
    }
}

/// `ψ_σ` at every grid frequency.
pub fn symbol_table(quad: &NuQuadrature, sigma: &DMat, grid: &PeriodicGrid) -> Vec<f64> {
    (0..grid.len()).map(|i| symbol_psi(quad, sigma, &grid.frequency(i))).collect()
}

fn check_grid(f: &GridField, sigma: &SigmaField, quad: &NuQuadrature) -> Result<()> {
    let g = f.grid();
    if sigma.dim() != g.dim || quad.dim != g.dim {
        return Err(Error::DimensionMismatch(format!(
            "field in {}-d, sigma in {}-d, quadrature in {}-d",
            g.dim,
            sigma.dim(),
            quad.dim
        )));
    }
    if let SigmaField::Variable { field, .. } = sigma {
        if field.grid() != g {
            return Err(Error::DimensionMismatch("sigma and f live on different grids".into()));
        }
    }
    let reach = quad.support_radius * sigma.lambda();
    if g.half_period < 2.0 * reach {
        return Err(Error::GridTooCoarse(format!(
            "half period {} below twice the jump reach {reach}",
            g.half_period
        )));
    }
    let res = interpolation_residual(g, reach);
    if res > 1e-8 {
        return Err(Error::GridTooCoarse(format!("interpolation residual {res:.3e} on the band-limit test")));
    }
    Ok(())
}

/// Trigonometric interpolation of the top resolved harmonic at points
/// shifted by up to `reach`, against the analytic values.
pub fn interpolation_residual(grid: &PeriodicGrid, reach: f64) -> f64 {
    let k = (grid.n / 2 - 1) as f64;
    let w = PI * k / grid.half_period;
    let f = GridField::from_fn_scalar(*grid, |x| (w * x[0] + 0.3).cos());
    let it = Interpolant::new(&f, InterpMode::Spectral);
    let mut worst = 0.0_f64;
    for m in 0..16 {
        let s = reach * (m as f64 + 0.5) / 16.0;
        let mut x = grid.point(3 * m);
        x[0] += s;
        worst = worst.max((it.eval_scalar(&x) - (w * x[0] + 0.3).cos()).abs());
    }
    worst
}

/// `ℒ_σ f` by quadrature: shifted values through trigonometric
/// interpolation (per-node spectral shifts for constant `σ`, pointwise
/// interpolation for variable `σ`), gradient by spectral differentiation.
pub fn apply_l(f: &GridField, sigma: &SigmaField, quad: &NuQuadrature) -> Result<GridField> {
    check_grid(f, sigma, quad)?;
    let g = *f.grid();
    let n = g.len();
    let d = g.dim;
    let mut out = vec![0.0; f.values().len()];
    for c in 0..f.components() {
        let fc = f.component_field(c);
        let grads: Vec<GridField> = (0..d).map(|a| fc.partial(a)).collect();
        let vals = fc.values();
        let acc = &mut out[c * n..(c + 1) * n];
        match sigma {
            SigmaField::Constant { sigma: m, .. } => {
                let spec = fc.spectrum()[0].clone();
                let freqs: Vec<DVec> = (0..n).map(|i| g.frequency(i)).collect();
                for node in &quad.nodes {
                    let shift = m.mul_vec(&node.z);
                    let shifted_spec: Vec<Complex64> = spec
                        .iter()
                        .zip(&freqs)
                        .map(|(s, xi)| s * Complex64::from_polar(1.0, xi.dot(&shift)))
                        .collect();
                    let shifted = crate::fourier::grid::inverse_real(&g, shifted_spec);
                    let comp = node.z.norm() <= 1.0;
                    for i in 0..n {
                        let mut v = shifted[i] - vals[i];
                        if comp {
                            for a in 0..d {
                                v -= grads[a].values()[i] * shift[a];
                            }
                        }
                        acc[i] += node.w * v;
                    }
                }
            }
            SigmaField::Variable { .. } => {
                let it = Interpolant::new(&fc, InterpMode::Spectral);
                for i in 0..n {
                    let x = g.point(i);
                    let m = sigma.at_index(i);
                    let mut total = 0.0;
                    for node in &quad.nodes {
                        let shift = m.mul_vec(&node.z);
                        let mut v = it.eval_scalar(&(x + shift)) - vals[i];
                        if node.z.norm() <= 1.0 {
                            for a in 0..d {
                                v -= grads[a].values()[i] * shift[a];
                            }
                        }
                        total += node.w * v;
                    }
                    acc[i] = total;
                }
            }
        }
    }
    GridField::new(g, f.shape(), out)
}

/// `−ψ_σ(ξ)` applied as a Fourier multiplier (constant `σ` only).
pub fn apply_l_symbol(f: &GridField, sigma: &SigmaField, quad: &NuQuadrature) -> Result<GridField> {
    let m = sigma.constant_matrix().ok_or(Error::VariableSigma)?;
    let table: Vec<f64> = symbol_table(quad, m, f.grid()).into_iter().map(|v| -v).collect();
    Ok(f.apply_real_multiplier_table(&table))
}

/// `min ψ(ξ)/|ξ|^α` over grid frequencies with `1/ρ ≤ |ξ| ≤ ξ_max`.
pub fn symbol_lower_constant(quad: &NuQuadrature, sigma: &DMat, grid: &PeriodicGrid, rho: f64) -> f64 {
    let xmax = grid.nyquist_frequency();
    (0..grid.len())
        .map(|i| grid.frequency(i))
        .filter(|xi| {
            let r = xi.norm();
            r >= 1.0 / rho && r <= xmax
        })
        .map(|xi| symbol_psi(quad, sigma, &xi) / xi.norm().powf(quad.alpha))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BernsteinLevel {
    pub j: i32,
    pub min_ratio: f64,
    pub median_ratio: f64,
    pub trials_used: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BernsteinReport {
    pub p: f64,
    pub trials: usize,
    pub levels: Vec<BernsteinLevel>,
    pub global_median: f64,
    pub median_spread: f64,
    pub empirical_j0: Option<i32>,
    pub all_positive: bool,
    pub min_low_block: f64,
    pub low_block_nonnegative: bool,
    /// worst relative gap between the quadrature and Plancherel routes (p = 2)
    pub plancherel_max_rel_err: Option<f64>,
}

fn block_dissipation(g: &GridField, lg: &GridField, p: f64) -> f64 {
    let cell = g.grid().cell_volume();
    g.values()
        .iter()
        .zip(lg.values())
        .map(|(a, b)| -a.abs().powf(p - 2.0) * a * b)
        .sum::<f64>()
        * cell
}

/// `D_j = −∫|Δ_j f|^{p−2}Δ_j f·ℒΔ_j f dx` against `2^{αj}‖Δ_j f‖_p^p` on
/// random band-limited fields.
pub fn bernstein_report(
    quad: &NuQuadrature,
    sigma: &DMat,
    grid: &PeriodicGrid,
    p: f64,
    j_range: std::ops::RangeInclusive<i32>,
    trials: usize,
    seed: u64,
) -> Result<BernsteinReport> {
    if p < 2.0 {
        return Err(Error::ParameterOutOfRange(format!("Bernstein needs p >= 2, got {p}")));
    }
    let set = DyadicBlockSet::new(*grid);
    let jmax = set.max_level();
    if *j_range.start() < 1 || *j_range.end() > jmax - 1 {
        return Err(Error::LevelOutOfRange {
            level: if *j_range.start() < 1 { *j_range.start() } else { *j_range.end() },
            min: 1,
            max: jmax - 1,
        });
    }
    let sig = SigmaField::constant(*sigma)?;
    let psi = symbol_table(quad, sigma, grid);
    let band = 1.5 * 2f64.powi(jmax);
    let njs = j_range.clone().count();
    let mut ratios: Vec<Vec<f64>> = vec![Vec::new(); njs];
    let mut min_low = f64::INFINITY;
    let mut max_plancherel: Option<f64> = None;
    let cell = grid.cell_volume();
    for t in 0..trials {
        let f = band_limited_field(grid, derive_seed(seed, t as u64), band, 0.0);
        let low = set.block(&f, -1)?;
        let dl = block_dissipation(&low, &apply_l(&low, &sig, quad)?, p);
        min_low = min_low.min(dl);
        for (slot, j) in j_range.clone().enumerate() {
            let b = set.block(&f, j)?;
            let lp = norms::lp_of_magnitudes(&b.pointwise_magnitude(), p, cell);
            if lp == 0.0 {
                continue;
            }
            let dj = block_dissipation(&b, &apply_l(&b, &sig, quad)?, p);
            ratios[slot].push(dj / (2f64.powf(quad.alpha * j as f64) * lp.powf(p)));
            if p == 2.0 {
                let spec = &b.spectrum()[0];
                let planch: f64 = spec.iter().zip(&psi).map(|(s, ps)| ps * s.norm_sqr()).sum::<f64>() * cell
                    / grid.len() as f64;
                let rel = (planch - dj).abs() / planch.abs().max(dj.abs());
                max_plancherel = Some(max_plancherel.unwrap_or(0.0).max(rel));
            }
        }
    }
    let levels: Vec<BernsteinLevel> = j_range
        .clone()
        .zip(&ratios)
        .map(|(j, r)| BernsteinLevel {
            j,
            min_ratio: r.iter().copied().fold(f64::INFINITY, f64::min),
            median_ratio: numerics::median(r),
            trials_used: r.len(),
        })
        .collect();
    let all: Vec<f64> = ratios.iter().flatten().copied().collect();
    let global_median = numerics::median(&all);
    let meds: Vec<f64> = levels.iter().map(|l| l.median_ratio).collect();
    let spread = meds.iter().copied().fold(0.0, f64::max) / meds.iter().copied().fold(f64::INFINITY, f64::min);
    let empirical_j0 = levels
        .iter()
        .zip(&ratios)
        .find(|(_, r)| r.iter().all(|&v| v >= 0.5 * global_median))
        .map(|(l, _)| l.j);
    Ok(BernsteinReport {
        p,
        trials,
        all_positive: all.iter().all(|&v| v > 0.0),
        levels,
        global_median,
        median_spread: spread,
        empirical_j0,
        min_low_block: min_low,
        low_block_nonnegative: min_low >= -1e-10,
        plancherel_max_rel_err: max_plancherel,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommutatorReport {
    pub p: f64,
    pub beta: f64,
    pub levels: Vec<i32>,
    pub norms: Vec<f64>,
    /// `norm_j / (2^{−βj} ‖b‖_{C^β} ‖∇u‖_p)`
    pub ratios: Vec<f64>,
    pub slope: f64,
    pub holder_b: f64,
    pub grad_u_lp: f64,
}

/// `‖Δ_j(b·∇u) − b·∇Δ_j u‖_p` per level with a log₂ regression over `j`.
pub fn commutator_report(
    b: &GridField,
    u: &GridField,
    beta: f64,
    p: f64,
    j_range: std::ops::RangeInclusive<i32>,
) -> Result<CommutatorReport> {
    let grid = *b.grid();
    let set = DyadicBlockSet::new(grid);
    let cell = grid.cell_volume();
    let bgu = GridField::advect(b, u)?;
    let holder_b = norms::norm(b, norms::Norm::Holder { beta })?;
    let grad_u_lp = norms::lp_of_magnitudes(&u.gradient()?.pointwise_magnitude(), p, cell);
    let mut levels = Vec::new();
    let mut vals = Vec::new();
    let mut ratios = Vec::new();
    for j in j_range {
        let a = set.block(&bgu, j)?;
        let du = set.block(u, j)?;
        let c = a.sub(&GridField::advect(b, &du)?);
        let v = norms::lp_of_magnitudes(&c.pointwise_magnitude(), p, cell);
        levels.push(j);
        vals.push(v);
        ratios.push(v / (2f64.powf(-beta * j as f64) * holder_b * grad_u_lp));
    }
    let xs: Vec<f64> = levels.iter().map(|&j| j as f64).collect();
    let ys: Vec<f64> = vals.iter().map(|v| v.log2()).collect();
    let slope = if vals.iter().all(|&v| v > 0.0) && xs.len() >= 2 {
        numerics::linear_fit(&xs, &ys).0
    } else {
        f64::NAN
    };
    Ok(CommutatorReport {
        p,
        beta,
        levels,
        norms: vals,
        ratios,
        slope,
        holder_b,
        grad_u_lp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::holder_sample_vector;
    use crate::levy_model::{shipped, Atom};

    fn cauchy() -> LevyMeasureSpec {
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

    fn psi_oracle(xi: f64) -> f64 {
        // 2∫_0^1 (1 − cos(ξs)) s^{-2} ds; the integrand tends to ξ²/2 at 0
        let f = |s: f64| if s == 0.0 { 0.5 * xi * xi } else { one_minus_cos(xi * s) / (s * s) };
        2.0 * numerics::integrate(&f, 0.0, 1.0, 1e-15, 0.0)
    }

    #[test]
    fn symbol_matches_oracle() {
        let q = build_quadrature(&cauchy(), 12).unwrap();
        let v = symbol_psi(&q, &DMat::identity(1), &DVec::scalar(4.0));
        let o = psi_oracle(4.0);
        assert!((v - o).abs() / o < 1e-6, "{v} vs {o}");
        assert_eq!(symbol_psi(&q, &DMat::identity(1), &DVec::scalar(0.0)), 0.0);
        assert_eq!(
            symbol_psi(&q, &DMat::identity(1), &DVec::scalar(-4.0)),
            symbol_psi(&q, &DMat::identity(1), &DVec::scalar(4.0))
        );
    }

    #[test]
    fn refinement_reduces_symbol_error() {
        let xis = [1.0, 4.0, 16.0];
        let err = |levels| {
            let opts = QuadOptions {
                levels,
                radial_nodes: 16,
                ..QuadOptions::default()
            };
            let q = build_quadrature_with(&cauchy(), opts).unwrap();
            xis.iter()
                .map(|&x| (symbol_psi(&q, &DMat::identity(1), &DVec::scalar(x)) - psi_oracle(x)).abs())
                .fold(0.0, f64::max)
        };
        let e: Vec<f64> = [3, 6, 12].iter().map(|&l| err(l)).collect();
        assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
    }

    #[test]
    fn quadratures_certify() {
        for s in shipped::all() {
            let q = build_quadrature(&s, 8).unwrap();
            assert!(q.certify().pass, "{}: {:?}", s.name, q.certify());
        }
        let dropped = build_quadrature_with(
            &shipped::sde_1d(),
            QuadOptions {
                levels: 3,
                inner: InnerBall::Dropped,
                ..QuadOptions::default()
            },
        )
        .unwrap();
        assert!(dropped.certify().pass);
        assert!(dropped.nodes.iter().all(|n| n.z.norm() >= 0.125));
    }

    #[test]
    fn discrete_nodes_are_atoms() {
        let s = shipped::discrete_2d();
        let q = build_quadrature(&s, 6).unwrap();
        if let MeasureKind::DiscreteSymmetric { atoms, .. } = &s.kind {
            let back: Vec<Atom> = q.nodes.iter().map(|n| Atom { z: n.z, w: n.w }).collect();
            assert_eq!(&back, atoms);
        }
    }

    #[test]
    fn plane_wave_eigenfunction() {
        let g = PeriodicGrid::new(2, 8.0, 32).unwrap();
        let q = build_quadrature_with(
            &shipped::cylindrical_2d(),
            QuadOptions {
                levels: 8,
                radial_nodes: 4,
                ..QuadOptions::default()
            },
        )
        .unwrap();
        let m = DMat::from_row_major(&[1.0, 0.2, -0.1, 0.9]);
        let sig = SigmaField::constant(m).unwrap();
        let xi = g.frequency(g.flat_index([3, 29]));
        let f = GridField::from_fn_scalar(g, |x| xi.dot(x).cos());
        let lf = apply_l(&f, &sig, &q).unwrap();
        let psi = symbol_psi(&q, &m, &xi);
        let want = f.scale(-psi);
        assert!(lf.max_abs_diff(&want) <= 1e-8 * psi);
    }

    #[test]
    fn constants_and_affine_annihilated() {
        let g = PeriodicGrid::new(1, 8.0, 128).unwrap();
        let q = build_quadrature(&cauchy(), 10).unwrap();
        let sig = SigmaField::identity(1);
        let c = GridField::constant_scalar(g, 3.0);
        assert!(apply_l(&c, &sig, &q).unwrap().sup_norm() < 1e-10);
    }

    #[test]
    fn symmetric_bilinear_identity() {
        let g = PeriodicGrid::new(1, 8.0, 64).unwrap();
        let q = build_quadrature_with(
            &shipped::sde_1d(),
            QuadOptions {
                levels: 6,
                radial_nodes: 3,
                ..QuadOptions::default()
            },
        )
        .unwrap();
        let sig = SigmaField::identity(1);
        let f = band_limited_field(&g, 1, 8.0, 1.0);
        let h = band_limited_field(&g, 2, 8.0, 1.0);
        let lhs = -h.inner(&apply_l(&f, &sig, &q).unwrap());
        let fi = Interpolant::new(&f, InterpMode::Spectral);
        let hi = Interpolant::new(&h, InterpMode::Spectral);
        let mut rhs = 0.0;
        for node in &q.nodes {
            for i in 0..g.len() {
                let x = g.point(i);
                let y = x + node.z;
                rhs += 0.5 * node.w * (fi.eval_scalar(&y) - f.values()[i]) * (hi.eval_scalar(&y) - h.values()[i]);
            }
        }
        rhs *= g.cell_volume();
        assert!((lhs - rhs).abs() < 1e-10 * (1.0 + rhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn variable_route_matches_constant_route() {
        let g = PeriodicGrid::new(1, 8.0, 64).unwrap();
        let q = build_quadrature_with(
            &shipped::sde_1d(),
            QuadOptions {
                levels: 6,
                radial_nodes: 3,
                ..QuadOptions::default()
            },
        )
        .unwrap();
        let m = DMat::from_row_major(&[1.3]);
        let cst = SigmaField::constant(m).unwrap();
        let var = SigmaField::variable(GridField::from_fn_matrix(g, |_| m)).unwrap();
        let f = band_limited_field(&g, 4, 6.0, 1.0);
        let a = apply_l(&f, &cst, &q).unwrap();
        let b = apply_l(&f, &var, &q).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-10 * (1.0 + a.sup_norm()));
        let c = apply_l_symbol(&f, &cst, &q).unwrap();
        assert!(a.max_abs_diff(&c) < 1e-9 * (1.0 + a.sup_norm()));
        assert!(matches!(apply_l_symbol(&f, &var, &q), Err(Error::VariableSigma)));
    }

    #[test]
    fn too_small_grid_rejected() {
        let g = PeriodicGrid::new(1, 1.5, 64).unwrap();
        let q = build_quadrature(&cauchy(), 6).unwrap();
        let f = GridField::constant_scalar(g, 1.0);
        assert!(matches!(apply_l(&f, &SigmaField::identity(1), &q), Err(Error::GridTooCoarse(_))));
    }

    #[test]
    fn linearity() {
        let g = PeriodicGrid::new(1, 8.0, 64).unwrap();
        let q = build_quadrature(&shipped::isotropic_1d(), 8).unwrap();
        let sig = SigmaField::identity(1);
        let f = band_limited_field(&g, 5, 10.0, 0.5);
        let h = band_limited_field(&g, 6, 10.0, 0.5);
        let (a, b) = (1.7, -0.4);
        let lhs = apply_l(&f.scale(a).axpy(b, &h), &sig, &q).unwrap();
        let rhs = apply_l(&f, &sig, &q).unwrap().scale(a).axpy(b, &apply_l(&h, &sig, &q).unwrap());
        assert!(lhs.max_abs_diff(&rhs) <= 1e-10 * (a.abs() * f.sup_norm() + b.abs() * h.sup_norm()) * 10.0);
    }

    #[test]
    fn commutator_vanishes_for_constant_b() {
        let g = PeriodicGrid::new(1, 8.0, 256).unwrap();
        let b = GridField::constant_vector(g, &DVec::scalar(0.7));
        let u = band_limited_field(&g, 3, 20.0, 1.0);
        let r = commutator_report(&b, &u, 0.5, 2.0, 1..=4).unwrap();
        assert!(r.norms.iter().all(|&v| v < 1e-12));
    }

    #[test]
    fn commutator_linear_in_u() {
        let g = PeriodicGrid::new(1, 8.0, 512).unwrap();
        let b = holder_sample_vector(0.7, &g, 3, 1.0, None);
        let u = GridField::from_fn_scalar(g, |x| (PI * x[0] / 8.0).cos());
        let r1 = commutator_report(&b, &u, 0.7, 2.0, 2..=5).unwrap();
        let r2 = commutator_report(&b, &u.scale(2.0), 0.7, 2.0, 2..=5).unwrap();
        for (a, c) in r1.norms.iter().zip(&r2.norms) {
            assert!((2.0 * a - c).abs() < 1e-12 * c.max(1.0));
        }
    }

    #[test]
    fn sigma_checks() {
        let s = SigmaField::constant(DMat::from_row_major(&[2.0, 0.0, 0.0, 0.5])).unwrap();
        assert_eq!(s.lambda(), 2.0);
        assert!(s.check_nondegenerate());
        assert!(SigmaField::constant(DMat::zeros(2)).is_err());
    }
}
