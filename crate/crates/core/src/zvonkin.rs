//! Zvonkin change of variables `φ = id + u` with `λu − ℒu − b·∇u = b`,
//! its inverse, and the transformed coefficients
//! `a(y) = λu(φ⁻¹(y))`, `g(y,z) = u(x+σ(x)z) − u(x) + σ(x)z`, `x = φ⁻¹(y)`.

use crate::error::{Error, Result};
use crate::fourier::{FieldShape, GridField, InterpMode, Interpolant};
use crate::linalg::{DMat, DVec};
use crate::nonlocal_op::{NuQuadrature, SigmaField};
use crate::numerics;
use crate::resolvent::{solve, ResolventProblem, SolverOptions};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZvonkinOptions {
    pub target: f64,
    pub lambda_start: f64,
    pub lambda_cap: f64,
    pub solver: SolverOptions,
    /// defaults to the midpoint of `(α/2, α+β−1)`
    pub mu: Option<f64>,
    pub interp: InterpMode,
    pub inversion_tol: f64,
}

impl Default for ZvonkinOptions {
    fn default() -> Self {
        Self {
            target: 0.5,
            lambda_start: 1.0,
            lambda_cap: 1e7,
            solver: SolverOptions::default(),
            mu: None,
            interp: InterpMode::Spectral,
            inversion_tol: 1e-13,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepStep {
    pub lambda: f64,
    /// `None` when the resolvent did not converge at this `λ`
    pub sup_grad: Option<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct ZvonkinTransform {
    pub u: GridField,
    pub grad_u: GridField,
    pub lambda: f64,
    pub sup_grad: f64,
    pub sigma: SigmaField,
    pub quad: NuQuadrature,
    pub b: GridField,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub residual_sup: f64,
    pub sweep: Vec<SweepStep>,
    pub inversion_tol: f64,
    interp: Interpolant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Inversion {
    pub x: DVec,
    pub iterations: usize,
    /// `⌈log(|u(y)|/tol)/log(1/sup_grad)⌉ + 1`
    pub bound: usize,
    pub residual: f64,
}

fn default_mu(alpha: f64, beta: f64) -> f64 {
    0.5 * (0.5 * alpha + alpha + beta - 1.0)
}

fn gradient_field(u: &GridField) -> GridField {
    let d = u.grid().dim;
    let mut values = Vec::with_capacity(u.values().len() * d);
    for a in 0..d {
        let ua = u.component_field(a);
        for b in 0..d {
            values.extend(ua.partial(b).into_values());
        }
    }
    GridField::new(*u.grid(), FieldShape::Matrix, values).expect("sized")
}

/// Solves the vector resolvent with `f = b`, doubling `λ` until
/// `‖∇u‖_∞ ≤ target`.
pub fn build_transform(
    b: &GridField,
    beta: f64,
    sigma: &SigmaField,
    quad: &NuQuadrature,
    opts: &ZvonkinOptions,
) -> Result<ZvonkinTransform> {
    let alpha = quad.alpha;
    if !(beta > 1.0 - alpha / 2.0 && beta <= 1.0) {
        return Err(Error::ExponentOutOfRange {
            exponent: beta,
            alpha,
            reason: "drift regularity beta must lie in (1 - alpha/2, 1]",
        });
    }
    if !(opts.target > 0.0 && opts.target < 1.0) {
        return Err(Error::ParameterOutOfRange(format!("target {} must be in (0, 1)", opts.target)));
    }
    if b.shape() != FieldShape::Vector {
        return Err(Error::DimensionMismatch("drift must be a vector field".into()));
    }
    let mu = opts.mu.unwrap_or_else(|| default_mu(alpha, beta));
    if !(mu > alpha / 2.0 && mu < alpha + beta - 1.0) {
        return Err(Error::ExponentOutOfRange {
            exponent: mu,
            alpha,
            reason: "mu must lie in (alpha/2, alpha + beta - 1)",
        });
    }
    let mut prob = ResolventProblem::new(opts.lambda_start, b, b, sigma, quad);
    prob.options = opts.solver;
    let mut lambda = opts.lambda_start;
    let mut sweep = Vec::new();
    let mut last_grad = f64::INFINITY;
    loop {
        match solve(&prob.with_lambda(lambda)) {
            Ok(sol) => {
                let grad_u = gradient_field(&sol.u);
                let sg = grad_u.sup_operator_norm();
                sweep.push(SweepStep {
                    lambda,
                    sup_grad: Some(sg),
                    iterations: sol.iterations,
                });
                last_grad = sg;
                if sg <= opts.target {
                    let interp = Interpolant::new(&sol.u, opts.interp);
                    return Ok(ZvonkinTransform {
                        u: sol.u,
                        grad_u,
                        lambda,
                        sup_grad: sg,
                        sigma: sigma.clone(),
                        quad: quad.clone(),
                        b: b.clone(),
                        alpha,
                        beta,
                        mu,
                        residual_sup: sol.residual_sup,
                        sweep,
                        inversion_tol: opts.inversion_tol,
                        interp,
                    });
                }
            }
            Err(Error::NoConvergence { iterations, .. }) => sweep.push(SweepStep {
                lambda,
                sup_grad: None,
                iterations,
            }),
            Err(e) => return Err(e),
        }
        if lambda * 2.0 > opts.lambda_cap {
            return Err(Error::LambdaExplosion {
                lambda,
                sup_grad: last_grad,
            });
        }
        lambda *= 2.0;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct A4Check {
    pub sigma_lipschitz: f64,
    pub r0: f64,
    pub support_radius: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GBoundFit {
    pub mu: f64,
    pub radii: Vec<f64>,
    pub k: Vec<f64>,
    /// `max K(z)/(|z|^μ + |z|)` over the sweep
    pub c_hat: f64,
    /// log-log slope of `K` against `|z|`
    pub exponent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KMomentReport {
    pub radii: Vec<f64>,
    /// `Σ_{|z_k| ≤ r} w_k K(z_k)²`
    pub moments: Vec<f64>,
    /// `moments / r^{2μ−α}`
    pub scaled: Vec<f64>,
    pub finite: bool,
    pub scaled_non_increasing_as_r_shrinks: bool,
}

/// `ã(φ(x)) = λu(x) − Σ_{|z_k|>ε} w_k g(φ(x), z_k)` tabulated on the grid.
#[derive(Clone, Debug)]
pub struct CompensatedDrift {
    pub eps: f64,
    pub table: GridField,
    interp: Interpolant,
}

impl CompensatedDrift {
    pub fn at_x(&self, x: &DVec) -> DVec {
        self.interp.eval_vec(x)
    }
}

#[derive(Serialize, Deserialize)]
struct BundleMeta {
    lambda: f64,
    sup_grad: f64,
    alpha: f64,
    beta: f64,
    mu: f64,
    residual_sup: f64,
    sweep: Vec<SweepStep>,
    inversion_tol: f64,
    interp: InterpMode,
    sigma_constant: Option<DMat>,
    quadrature: NuQuadrature,
}

impl ZvonkinTransform {
    pub fn dim(&self) -> usize {
        self.u.grid().dim
    }

    pub fn support_radius(&self) -> f64 {
        self.quad.support_radius
    }

    pub fn interp_mode(&self) -> InterpMode {
        self.interp.mode()
    }

    /// Same transform with a different off-grid evaluation mode.
    pub fn with_interp(&self, mode: InterpMode) -> Self {
        let mut t = self.clone();
        t.interp = Interpolant::new(&self.u, mode);
        t
    }

    pub fn u_at(&self, x: &DVec) -> DVec {
        self.interp.eval_vec(x)
    }

    pub fn u_and_jacobian(&self, x: &DVec) -> (DVec, DMat) {
        self.interp.eval_vec_with_jacobian(x)
    }

    pub fn phi(&self, x: &DVec) -> DVec {
        *x + self.u_at(x)
    }

    fn iteration_bound(&self, uy: f64, tol: f64) -> usize {
        if uy <= tol || self.sup_grad == 0.0 {
            return 1;
        }
        ((uy / tol).ln() / (1.0 / self.sup_grad).ln()).ceil() as usize + 1
    }

    /// `x_{k+1} = y − u(x_k)` from `x_0 = y`.
    pub fn invert_phi(&self, y: &DVec, tol: f64) -> Inversion {
        self.invert_phi_from(y, y, tol)
    }

    /// As [`Self::invert_phi`] from a caller-supplied start.
    pub fn invert_phi_from(&self, y: &DVec, start: &DVec, tol: f64) -> Inversion {
        let uy = self.u_at(y).norm();
        let bound = self.iteration_bound(uy, tol);
        let mut x = *start;
        let mut iterations = 0;
        // the cap only guards against an off-grid Lipschitz constant above 1
        let cap = 10 * bound.max(8) + 200;
        let s = self.sup_grad.min(0.99);
        let factor = if s > 0.0 { s / (1.0 - s) } else { 0.0 };
        loop {
            let next = *y - self.u_at(&x);
            let step = (next - x).norm();
            x = next;
            iterations += 1;
            if factor * step <= tol || iterations >= cap {
                break;
            }
        }
        let residual = (self.phi(&x) - *y).norm();
        Inversion {
            x,
            iterations,
            bound,
            residual,
        }
    }

    pub fn inverse(&self, y: &DVec) -> DVec {
        self.invert_phi(y, self.inversion_tol).x
    }

    pub fn a_at_x(&self, x: &DVec) -> DVec {
        self.u_at(x) * self.lambda
    }

    pub fn coeff_a(&self, y: &DVec) -> DVec {
        self.a_at_x(&self.inverse(y))
    }

    fn check_jump(&self, z: &DVec) -> Result<()> {
        let r = self.support_radius();
        let n = z.norm();
        if n > r * (1.0 + 1e-12) {
            return Err(Error::JumpOutOfSupport {
                norm: n,
                lower: 0.0,
                upper: r,
            });
        }
        Ok(())
    }

    pub fn g_at_x(&self, x: &DVec, z: &DVec) -> Result<DVec> {
        self.check_jump(z)?;
        Ok(self.g_unchecked(x, z))
    }

    fn g_unchecked(&self, x: &DVec, z: &DVec) -> DVec {
        let sz = self.sigma.at(x).mul_vec(z);
        self.u_at(&(*x + sz)) - self.u_at(x) + sz
    }

    pub fn coeff_g(&self, y: &DVec, z: &DVec) -> Result<DVec> {
        self.check_jump(z)?;
        Ok(self.g_unchecked(&self.inverse(y), z))
    }

    /// `C` in `|g(y,z)| ≤ C|z|`.
    pub fn g_bound_constant(&self) -> f64 {
        (1.0 + self.sup_grad) * self.sigma.lambda()
    }

    /// `min det(I + ∇u)` over the grid.
    pub fn min_det(&self) -> f64 {
        let d = self.dim();
        (0..self.u.grid().len())
            .map(|i| DMat::identity(d).add(&self.grad_u.mat_at(i)).det())
            .fold(f64::INFINITY, f64::min)
    }

    /// `min |φ(x)−φ(x′)|/|x−x′|` over grid pairs at distance `≤ 1`.
    pub fn injectivity_ratio(&self) -> f64 {
        let g = *self.u.grid();
        let h = g.spacing();
        let reach = (1.0 / h).floor() as i64;
        let n = g.n as i64;
        let mut worst = f64::INFINITY;
        for i in 0..g.len() {
            let m = g.multi_index(i);
            let ui = self.u.vec_at(i);
            let offsets: Vec<[i64; 2]> = if g.dim == 1 {
                (1..=reach).map(|k| [k, 0]).collect()
            } else {
                let mut v = Vec::new();
                for a in -reach..=reach {
                    for b in -reach..=reach {
                        if (a, b) > (0, 0) && ((a * a + b * b) as f64).sqrt() <= reach as f64 {
                            v.push([a, b]);
                        }
                    }
                }
                v
            };
            for o in offsets {
                let mut idx = [0usize; 2];
                for a in 0..g.dim {
                    idx[a] = (m[a] as i64 + o[a]).rem_euclid(n) as usize;
                }
                let k = g.flat_index(idx);
                let dx = DVec::from_slice(&o[..g.dim].iter().map(|&v| v as f64 * h).collect::<Vec<_>>());
                let dphi = dx + self.u.vec_at(k) - ui;
                worst = worst.min(dphi.norm() / dx.norm());
            }
        }
        worst
    }

    /// Largest `|a(y)−a(y′)|/|y−y′|` over neighbouring grid images
    /// `y = φ(x)`; `a(φ(x)) = λu(x)` needs no inversion.
    pub fn lipschitz_a(&self) -> f64 {
        let g = *self.u.grid();
        let h = g.spacing();
        let mut worst = 0.0_f64;
        for i in 0..g.len() {
            let m = g.multi_index(i);
            for a in 0..g.dim {
                let mut nb = m;
                nb[a] = (nb[a] + 1) % g.n;
                let k = g.flat_index(nb);
                let du = self.u.vec_at(k) - self.u.vec_at(i);
                let dy = DVec::unit(g.dim, a) * h + du;
                worst = worst.max(self.lambda * du.norm() / dy.norm());
            }
        }
        worst
    }

    /// `r₀ = 1/Lip(σ)` against the support radius.
    pub fn a4_check(&self) -> A4Check {
        let lip = self.sigma.lipschitz();
        let r0 = if lip > 0.0 { 1.0 / lip } else { f64::INFINITY };
        A4Check {
            sigma_lipschitz: lip,
            r0,
            support_radius: self.support_radius(),
            pass: self.support_radius() <= r0,
        }
    }

    pub fn require_a4(&self) -> Result<A4Check> {
        let c = self.a4_check();
        if !c.pass {
            return Err(Error::ParameterOutOfRange(format!(
                "support radius {} exceeds r0 = {}",
                c.support_radius, c.r0
            )));
        }
        Ok(c)
    }

    /// `K(z)`: largest central-difference operator norm of `y ↦ g(y,z)`
    /// over the images `y = φ(x)` of the grid points.
    pub fn gradient_bound_g(&self, z: &DVec) -> Result<f64> {
        self.check_jump(z)?;
        if z.norm() == 0.0 {
            return Ok(0.0);
        }
        let g = *self.u.grid();
        let d = g.dim;
        let h = 1e-5;
        let tol = 1e-14;
        let mut worst = 0.0_f64;
        for i in 0..g.len() {
            let x0 = g.point(i);
            let y0 = self.phi(&x0);
            let mut jac = DMat::zeros(d);
            for b in 0..d {
                let e = DVec::unit(d, b) * h;
                let xp = self.invert_phi_from(&(y0 + e), &x0, tol).x;
                let xm = self.invert_phi_from(&(y0 - e), &x0, tol).x;
                let col = (self.g_unchecked(&xp, z) - self.g_unchecked(&xm, z)) * (0.5 / h);
                for a in 0..d {
                    jac.set(a, b, col[a]);
                }
            }
            worst = worst.max(jac.op_norm());
        }
        Ok(worst)
    }

    /// `K` along `|z| = r` for the given radii, in direction `dir`.
    pub fn fit_g_bound(&self, dir: &DVec, radii: &[f64]) -> Result<GBoundFit> {
        let unit = *dir * (1.0 / dir.norm());
        let k: Vec<f64> = radii
            .iter()
            .map(|&r| self.gradient_bound_g(&(unit * r)))
            .collect::<Result<_>>()?;
        let c_hat = radii
            .iter()
            .zip(&k)
            .map(|(r, k)| k / (r.powf(self.mu) + r))
            .fold(0.0, f64::max);
        let lx: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let ly: Vec<f64> = k.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
        Ok(GBoundFit {
            mu: self.mu,
            radii: radii.to_vec(),
            c_hat,
            exponent: numerics::linear_fit(&lx, &ly).0,
            k,
        })
    }

    /// `∫_{|z|≤r} K(z)²ν(dz)` by the quadrature for each `r`.
    pub fn k_moment_report(&self, radii: &[f64]) -> Result<KMomentReport> {
        let ks: Vec<(f64, f64, f64)> = self
            .quad
            .nodes
            .iter()
            .map(|n| Ok((n.z.norm(), n.w, self.gradient_bound_g(&n.z)?)))
            .collect::<Result<_>>()?;
        let moments: Vec<f64> = radii
            .iter()
            .map(|&r| ks.iter().filter(|(s, _, _)| *s <= r).map(|(_, w, k)| w * k * k).sum())
            .collect();
        let e = 2.0 * self.mu - self.alpha;
        let scaled: Vec<f64> = radii.iter().zip(&moments).map(|(r, m)| m / r.powf(e)).collect();
        let mut order: Vec<usize> = (0..radii.len()).collect();
        order.sort_by(|&a, &b| radii[b].total_cmp(&radii[a]));
        let non_inc = order.windows(2).all(|w| scaled[w[1]] <= scaled[w[0]] * (1.0 + 1e-9));
        Ok(KMomentReport {
            radii: radii.to_vec(),
            finite: moments.iter().all(|m| m.is_finite()),
            moments,
            scaled,
            scaled_non_increasing_as_r_shrinks: non_inc,
        })
    }

    /// Tabulates `ã` for jumps above `eps` with the transform's quadrature.
    pub fn compensated_drift(&self, eps: f64) -> Result<CompensatedDrift> {
        let g = *self.u.grid();
        let n = g.len();
        let d = g.dim;
        let nodes: Vec<_> = self.quad.nodes_above(eps).copied().collect();
        for node in &nodes {
            self.check_jump(&node.z)?;
        }
        let mut comp = vec![0.0; n * d];
        match &self.sigma {
            SigmaField::Constant { sigma, .. } => {
                let spectra = self.u.spectrum();
                let freqs: Vec<DVec> = (0..n).map(|i| g.frequency(i)).collect();
                for node in &nodes {
                    let shift = sigma.mul_vec(&node.z);
                    let phase: Vec<Complex64> =
                        freqs.iter().map(|xi| Complex64::from_polar(1.0, xi.dot(&shift))).collect();
                    for c in 0..d {
                        let s: Vec<Complex64> = spectra[c].iter().zip(&phase).map(|(a, p)| a * p).collect();
                        let shifted = crate::fourier::grid::inverse_real(&g, s);
                        let uc = self.u.component(c);
                        for i in 0..n {
                            comp[c * n + i] += node.w * (shifted[i] - uc[i] + shift[c]);
                        }
                    }
                }
            }
            SigmaField::Variable { .. } => {
                for i in 0..n {
                    let x = g.point(i);
                    let mut acc = DVec::zeros(d);
                    for node in &nodes {
                        acc += self.g_unchecked(&x, &node.z) * node.w;
                    }
                    for c in 0..d {
                        comp[c * n + i] = acc[c];
                    }
                }
            }
        }
        let lu = self.u.scale(self.lambda);
        let table = lu.sub(&GridField::new(g, FieldShape::Vector, comp)?);
        let interp = Interpolant::new(&table, self.interp.mode());
        Ok(CompensatedDrift { eps, table, interp })
    }

    /// Writes `u.csv`, `b.csv`, optionally `sigma.csv`, and `transform.json`.
    pub fn save_bundle(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("u.csv"), self.u.to_csv())?;
        std::fs::write(dir.join("b.csv"), self.b.to_csv())?;
        if let SigmaField::Variable { field, .. } = &self.sigma {
            std::fs::write(dir.join("sigma.csv"), field.to_csv())?;
        }
        let meta = BundleMeta {
            lambda: self.lambda,
            sup_grad: self.sup_grad,
            alpha: self.alpha,
            beta: self.beta,
            mu: self.mu,
            residual_sup: self.residual_sup,
            sweep: self.sweep.clone(),
            inversion_tol: self.inversion_tol,
            interp: self.interp.mode(),
            sigma_constant: self.sigma.constant_matrix().copied(),
            quadrature: self.quad.clone(),
        };
        let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(dir.join("transform.json"), text)?;
        Ok(())
    }

    pub fn load_bundle(dir: &Path) -> Result<Self> {
        let meta: BundleMeta = serde_json::from_str(&std::fs::read_to_string(dir.join("transform.json"))?)
            .map_err(|e| Error::Parse(e.to_string()))?;
        let u = GridField::from_csv(&std::fs::read_to_string(dir.join("u.csv"))?)?;
        let b = GridField::from_csv(&std::fs::read_to_string(dir.join("b.csv"))?)?;
        let sigma = match meta.sigma_constant {
            Some(m) => SigmaField::constant(m)?,
            None => SigmaField::variable(GridField::from_csv(&std::fs::read_to_string(dir.join("sigma.csv"))?)?)?,
        };
        let grad_u = gradient_field(&u);
        let interp = Interpolant::new(&u, meta.interp);
        Ok(Self {
            u,
            grad_u,
            lambda: meta.lambda,
            sup_grad: meta.sup_grad,
            sigma,
            quad: meta.quadrature,
            b,
            alpha: meta.alpha,
            beta: meta.beta,
            mu: meta.mu,
            residual_sup: meta.residual_sup,
            sweep: meta.sweep,
            inversion_tol: meta.inversion_tol,
            interp,
        })
    }
}

/// Drift fixtures shipped with the lab, each paired with a measure and grid.
pub mod shipped {
    use super::*;
    use crate::fourier::{holder_sample_vector, PeriodicGrid};
    use crate::levy_model::{shipped as specs, LevyMeasureSpec};
    use crate::nonlocal_op::build_quadrature;

    #[derive(Clone, Debug)]
    pub struct DriftFixture {
        pub name: &'static str,
        pub spec: LevyMeasureSpec,
        pub b: GridField,
        pub beta: f64,
        pub sigma: SigmaField,
        pub levels: usize,
    }

    impl DriftFixture {
        pub fn quadrature(&self) -> Result<NuQuadrature> {
            build_quadrature(&self.spec, self.levels)
        }

        pub fn build(&self, opts: &ZvonkinOptions) -> Result<ZvonkinTransform> {
            build_transform(&self.b, self.beta, &self.sigma, &self.quadrature()?, opts)
        }
    }

    pub fn holder_1d() -> DriftFixture {
        let g = PeriodicGrid::new(1, 8.0, 128).expect("valid grid");
        DriftFixture {
            name: "holder_1d_beta0.7",
            spec: specs::sde_1d(),
            b: holder_sample_vector(0.7, &g, 11, 2.0, None),
            beta: 0.7,
            sigma: SigmaField::identity(1),
            levels: 8,
        }
    }

    pub fn plane_wave_1d() -> DriftFixture {
        let g = PeriodicGrid::new(1, 8.0, 128).expect("valid grid");
        let k = std::f64::consts::PI / 4.0;
        DriftFixture {
            name: "plane_wave_1d",
            spec: specs::isotropic_1d(),
            b: GridField::from_fn_vector(g, |x| DVec::scalar(0.8 * (k * x[0]).sin())),
            beta: 1.0,
            sigma: SigmaField::identity(1),
            levels: 8,
        }
    }

    pub fn holder_2d() -> DriftFixture {
        let g = PeriodicGrid::new(2, 8.0, 32).expect("valid grid");
        DriftFixture {
            name: "holder_2d_beta0.8",
            spec: specs::cylindrical_2d(),
            b: holder_sample_vector(0.8, &g, 21, 1.0, None),
            beta: 0.8,
            sigma: SigmaField::identity(2),
            levels: 6,
        }
    }

    pub fn constant_2d() -> DriftFixture {
        let g = PeriodicGrid::new(2, 8.0, 32).expect("valid grid");
        DriftFixture {
            name: "constant_2d",
            spec: specs::discrete_2d(),
            b: GridField::constant_vector(g, &DVec::new2(0.3, -0.2)),
            beta: 1.0,
            sigma: SigmaField::identity(2),
            levels: 6,
        }
    }

    pub fn all() -> Vec<DriftFixture> {
        vec![holder_1d(), plane_wave_1d(), holder_2d(), constant_2d()]
    }
}
