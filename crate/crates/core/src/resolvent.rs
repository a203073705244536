//! The resolvent equation `λu − ℒu − b·∇u = f` on a periodic grid.
//!
//! Constant `σ`: fixed point `u ← (λ+ψ)⁻¹[f + b·∇u]` in frequency space.
//! Variable `σ`: the same iteration preconditioned with the grid-average
//! matrix, the difference `ℒ_σ − L_σ̄` carried on the right side. Every
//! returned solution has its residual recomputed through [`apply_l`].

use crate::error::{Error, Result};
use crate::fourier::{norm, GridField, Norm};
use crate::nonlocal_op::{apply_l, apply_l_symbol, symbol_table, NuQuadrature, SigmaField};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// stop when successive iterates differ by at most this in sup norm
    pub tolerance: f64,
    /// certified residual bound, relative to `1 + ‖f‖_∞`
    pub residual_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            residual_tol: 1e-6,
            max_iters: 400,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    Zero,
    /// `(λ+ψ)⁻¹ f`
    #[default]
    Symbol,
}

#[derive(Clone, Debug)]
pub struct ResolventProblem<'a> {
    pub lambda: f64,
    pub b: &'a GridField,
    pub f: &'a GridField,
    pub sigma: &'a SigmaField,
    pub quad: &'a NuQuadrature,
    pub options: SolverOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolventSolution {
    #[serde(skip)]
    pub u: GridField,
    pub residual_sup: f64,
    pub iterations: usize,
    pub lambda_used: f64,
    /// `‖u_{k+1} − u_k‖_∞ / ‖u_k − u_{k−1}‖_∞` per iteration
    pub ratios: Vec<f64>,
}

impl ResolventSolution {
    /// Geometric mean of the recorded contraction ratios.
    pub fn contraction(&self) -> f64 {
        let r: Vec<f64> = self.ratios.iter().copied().filter(|v| *v > 0.0 && v.is_finite()).collect();
        if r.is_empty() {
            return 0.0;
        }
        (r.iter().map(|v| v.ln()).sum::<f64>() / r.len() as f64).exp()
    }
}

impl<'a> ResolventProblem<'a> {
    pub fn new(lambda: f64, b: &'a GridField, f: &'a GridField, sigma: &'a SigmaField, quad: &'a NuQuadrature) -> Self {
        Self {
            lambda,
            b,
            f,
            sigma,
            quad,
            options: SolverOptions::default(),
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self { lambda, ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::ParameterOutOfRange(format!("lambda = {} must be positive", self.lambda)));
        }
        if self.b.grid() != self.f.grid() {
            return Err(Error::DimensionMismatch("b and f live on different grids".into()));
        }
        if self.b.components() != self.b.grid().dim {
            return Err(Error::DimensionMismatch("b must be a vector field".into()));
        }
        if let SigmaField::Variable { field, .. } = self.sigma {
            if field.grid() != self.f.grid() {
                return Err(Error::DimensionMismatch("sigma and f live on different grids".into()));
            }
        }
        Ok(())
    }

    /// `‖λu − ℒu − b·∇u − f‖_∞` with `ℒ` by quadrature.
    pub fn residual(&self, u: &GridField) -> Result<f64> {
        let lu = apply_l(u, self.sigma, self.quad)?;
        let adv = GridField::advect(self.b, u)?;
        let r = u.scale(self.lambda).sub(&lu).sub(&adv).sub(self.f);
        Ok(r.sup_norm())
    }
}

fn iterate(
    prob: &ResolventProblem,
    inv: &[f64],
    init: InitialGuess,
    correction: impl Fn(&GridField) -> Result<GridField>,
) -> Result<ResolventSolution> {
    prob.validate()?;
    let opts = prob.options;
    let step = |u: &GridField| -> Result<GridField> {
        let rhs = prob.f.add(&GridField::advect(prob.b, u)?).add(&correction(u)?);
        Ok(rhs.apply_real_multiplier_table(inv))
    };
    let mut u = match init {
        InitialGuess::Symbol => prob.f.apply_real_multiplier_table(inv),
        InitialGuess::Zero => prob.f.scale(0.0),
    };
    let mut prev_diff = f64::NAN;
    let mut ratios = Vec::new();
    let mut bad = 0;
    let mut iterations = 0;
    loop {
        if iterations >= opts.max_iters {
            return Err(Error::NoConvergence {
                iterations,
                last_ratio: ratios.last().copied().unwrap_or(f64::NAN),
            });
        }
        let next = step(&u)?;
        iterations += 1;
        let diff = next.max_abs_diff(&u);
        if !diff.is_finite() {
            return Err(Error::NoConvergence {
                iterations,
                last_ratio: f64::INFINITY,
            });
        }
        u = next;
        if prev_diff.is_finite() && prev_diff > 0.0 {
            let r = diff / prev_diff;
            ratios.push(r);
            // ratios near round-off carry no information
            if r >= 1.0 && diff > 1e3 * f64::EPSILON * (1.0 + u.sup_norm()) {
                bad += 1;
                if bad >= 5 {
                    return Err(Error::NoConvergence { iterations, last_ratio: r });
                }
            } else {
                bad = 0;
            }
        }
        if diff <= opts.tolerance {
            break;
        }
        prev_diff = diff;
    }
    let residual_sup = prob.residual(&u)?;
    let bound = opts.residual_tol * (1.0 + prob.f.sup_norm());
    if !(residual_sup <= bound) {
        return Err(Error::CertificationFailed(format!(
            "resolvent residual {residual_sup:.3e} above {bound:.3e}"
        )));
    }
    Ok(ResolventSolution {
        u,
        residual_sup,
        iterations,
        lambda_used: prob.lambda,
        ratios,
    })
}

fn inverse_symbol(prob: &ResolventProblem, sigma: &crate::linalg::DMat) -> Vec<f64> {
    symbol_table(prob.quad, sigma, prob.f.grid())
        .into_iter()
        .map(|p| 1.0 / (prob.lambda + p))
        .collect()
}

pub fn solve_constant_sigma(prob: &ResolventProblem) -> Result<ResolventSolution> {
    solve_constant_sigma_from(prob, InitialGuess::Symbol)
}

pub fn solve_constant_sigma_from(prob: &ResolventProblem, init: InitialGuess) -> Result<ResolventSolution> {
    let m = prob.sigma.constant_matrix().ok_or(Error::VariableSigma)?;
    let inv = inverse_symbol(prob, m);
    iterate(prob, &inv, init, |u| Ok(u.scale(0.0)))
}

pub fn solve_variable_sigma(prob: &ResolventProblem) -> Result<ResolventSolution> {
    solve_variable_sigma_from(prob, InitialGuess::Symbol)
}

pub fn solve_variable_sigma_from(prob: &ResolventProblem, init: InitialGuess) -> Result<ResolventSolution> {
    let bar = SigmaField::constant(prob.sigma.mean())?;
    let inv = inverse_symbol(prob, &prob.sigma.mean());
    iterate(prob, &inv, init, |u| {
        Ok(apply_l(u, prob.sigma, prob.quad)?.sub(&apply_l_symbol(u, &bar, prob.quad)?))
    })
}

/// Dispatches on the kind of `σ`.
pub fn solve(prob: &ResolventProblem) -> Result<ResolventSolution> {
    match prob.sigma {
        SigmaField::Constant { .. } => solve_constant_sigma(prob),
        SigmaField::Variable { .. } => solve_variable_sigma(prob),
    }
}

/// Smallest `λ = start·2^k ≤ cap` at which [`solve`] converges.
pub fn find_lambda0(prob: &ResolventProblem, start: f64, cap: f64) -> Result<ResolventSolution> {
    let mut lambda = start;
    loop {
        match solve(&prob.with_lambda(lambda)) {
            Ok(sol) => return Ok(sol),
            Err(Error::NoConvergence { .. }) if lambda * 2.0 <= cap => lambda *= 2.0,
            Err(e) => return Err(e),
        }
    }
}

/// Sup distance between the solutions started from `0` and from
/// `(λ+ψ)⁻¹f`.
pub fn uniqueness_gap(prob: &ResolventProblem) -> Result<f64> {
    let (a, b) = match prob.sigma {
        SigmaField::Constant { .. } => (
            solve_constant_sigma_from(prob, InitialGuess::Zero)?,
            solve_constant_sigma_from(prob, InitialGuess::Symbol)?,
        ),
        SigmaField::Variable { .. } => (
            solve_variable_sigma_from(prob, InitialGuess::Zero)?,
            solve_variable_sigma_from(prob, InitialGuess::Symbol)?,
        ),
    };
    Ok(a.u.max_abs_diff(&b.u))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AprioriRow {
    pub lambda: f64,
    pub gamma: f64,
    pub p: f64,
    /// `[λ‖u‖_{B^γ_{p,p}} + ‖u‖_{B^{α+γ}_{p,p}}] / ‖f‖_{B^γ_{p,p}}`
    pub ratio: f64,
    /// `[λ‖u‖_{B^γ_{∞,∞}} + ‖u‖_{B^{α+γ}_{∞,∞}}] / ‖f‖_{B^β_{∞,∞}}`
    pub holder_ratio: f64,
    pub contraction: f64,
    pub u_sup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AprioriReport {
    pub alpha: f64,
    pub beta: f64,
    pub rows: Vec<AprioriRow>,
    pub ratio_non_increasing: bool,
    pub holder_ratio_non_increasing: bool,
    pub contraction_decreasing: bool,
    /// largest observed ratio, the fitted constant of the estimate
    pub fitted_constant: f64,
}

/// Estimate ratios for `u` solved at `λ ∈ {λ₀, 2λ₀, 4λ₀}`, `λ₀ =
/// sol.lambda_used`.
pub fn apriori_report(sol: &ResolventSolution, prob: &ResolventProblem, gamma: f64, beta: f64, p: f64) -> Result<AprioriReport> {
    let alpha = prob.quad.alpha;
    let lo = (1.0 - alpha).max(0.0);
    if !(gamma > lo && gamma < beta) {
        return Err(Error::ExponentOutOfRange {
            exponent: gamma,
            alpha,
            reason: "gamma must lie in ((1-alpha)+, beta)",
        });
    }
    let f_w = norm(prob.f, Norm::Besov { s: gamma, p, q: p })?;
    let f_h = norm(prob.f, Norm::Besov { s: beta, p: f64::INFINITY, q: f64::INFINITY })?;
    let mut rows = Vec::new();
    for k in 0..3 {
        let lambda = sol.lambda_used * 2f64.powi(k);
        let s = if k == 0 { sol.clone() } else { solve(&prob.with_lambda(lambda))? };
        let u = &s.u;
        let w = lambda * norm(u, Norm::Besov { s: gamma, p, q: p })? + norm(u, Norm::Besov { s: alpha + gamma, p, q: p })?;
        let inf = f64::INFINITY;
        let h = lambda * norm(u, Norm::Besov { s: gamma, p: inf, q: inf })?
            + norm(u, Norm::Besov { s: alpha + gamma, p: inf, q: inf })?;
        rows.push(AprioriRow {
            lambda,
            gamma,
            p,
            ratio: w / f_w,
            holder_ratio: h / f_h,
            contraction: s.contraction(),
            u_sup: u.sup_norm(),
        });
    }
    let non_inc = |v: Vec<f64>| v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    Ok(AprioriReport {
        alpha,
        beta,
        ratio_non_increasing: non_inc(rows.iter().map(|r| r.ratio).collect()),
        holder_ratio_non_increasing: non_inc(rows.iter().map(|r| r.holder_ratio).collect()),
        contraction_decreasing: rows.windows(2).all(|w| w[1].contraction < w[0].contraction || w[0].contraction == 0.0),
        fitted_constant: rows.iter().map(|r| r.ratio.max(r.holder_ratio)).fold(0.0, f64::max),
        rows,
    })
}
