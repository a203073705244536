//! Pathwise solvers for `dX = b(X)dt + σ(X−)z N(dt,dz)` driven by a
//! sampled compound-Poisson path.
//!
//! `picard_solve` iterates the transformed equation for `Y = φ(X)`,
//! `euler_solve` steps `X` directly. Both use a mesh holding every jump
//! time and a left-endpoint rule in time.

use crate::error::{Error, Result};
use crate::fourier::Interpolant;
use crate::levy_sampler::JumpPath;
use crate::linalg::{DMat, DVec};
use crate::nonlocal_op::SigmaField;
use crate::zvonkin::{CompensatedDrift, ZvonkinTransform};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardOptions {
    pub n_max: usize,
    pub tol: f64,
    /// window halving trigger on `Δ_{n+1}/Δ_n`
    pub contraction_limit: f64,
    /// first window length tried; `None` means the whole horizon
    pub initial_window: Option<f64>,
    pub min_window: f64,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            n_max: 60,
            tol: 1e-12,
            contraction_limit: 0.5,
            initial_window: None,
            min_window: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PicardInit {
    /// `Y⁰_t ≡ Y₀`
    #[default]
    Constant,
    /// `Y⁰_t = Y₀ + Z_t`
    Jumps,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Picard,
    Euler,
}

/// A transform together with its compensated drift for one jump cutoff.
#[derive(Clone, Debug)]
pub struct SdeModel {
    pub transform: ZvonkinTransform,
    pub drift: CompensatedDrift,
}

impl SdeModel {
    pub fn new(transform: ZvonkinTransform, cutoff: f64) -> Result<Self> {
        let drift = transform.compensated_drift(cutoff)?;
        Ok(Self { transform, drift })
    }

    pub fn dim(&self) -> usize {
        self.transform.dim()
    }

    pub fn cutoff(&self) -> f64 {
        self.drift.eps
    }

    fn inverse_from(&self, y: &DVec, start: &DVec) -> DVec {
        self.transform.invert_phi_from(y, start, self.transform.inversion_tol).x
    }
}

#[derive(Clone, Debug)]
pub struct SdeProblem<'a> {
    pub model: &'a SdeModel,
    pub path: &'a JumpPath,
    pub x0: DVec,
    pub horizon: f64,
    pub dt: f64,
    pub picard: PicardOptions,
    pub init: PicardInit,
    /// times forced into the mesh
    pub extra_times: Vec<f64>,
}

impl<'a> SdeProblem<'a> {
    pub fn new(model: &'a SdeModel, path: &'a JumpPath, x0: DVec, horizon: f64, dt: f64) -> Self {
        Self {
            model,
            path,
            x0,
            horizon,
            dt,
            picard: PicardOptions::default(),
            init: PicardInit::Constant,
            extra_times: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::ParameterOutOfRange(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon <= self.path.horizon * (1.0 + 1e-12)) {
            return Err(Error::TimeOutOfRange {
                t: self.horizon,
                horizon: self.path.horizon,
            });
        }
        if self.x0.dim() != self.model.dim() || self.path.dim != self.model.dim() {
            return Err(Error::DimensionMismatch("x0, path and transform dimensions differ".into()));
        }
        if (self.path.cutoff - self.model.cutoff()).abs() > 1e-12 * self.path.cutoff.max(1e-300) {
            return Err(Error::ParameterOutOfRange(format!(
                "path cutoff {} differs from the compensator cutoff {}",
                self.path.cutoff,
                self.model.cutoff()
            )));
        }
        Ok(())
    }
}

/// Time grid with the jump attached to each point (`None` if no jump).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mesh {
    pub times: Vec<f64>,
    pub jumps: Vec<Option<DVec>>,
}

impl Mesh {
    /// Uniform steps `k·dt`, every jump time in `(0, T]` and `extras`;
    /// times closer than `1e−12·T` are merged into the earlier one.
    pub fn build(path: &JumpPath, horizon: f64, dt: f64, extras: &[f64]) -> Mesh {
        let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
        let mut pts: Vec<(f64, Option<DVec>)> = (0..=steps).map(|k| ((k as f64 * dt).min(horizon), None)).collect();
        for j in path.jumps.iter().filter(|j| j.t <= horizon) {
            pts.push((j.t, Some(j.z)));
        }
        for &e in extras.iter().filter(|&&e| e > 0.0 && e <= horizon) {
            pts.push((e, None));
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let merge = 1e-12 * horizon;
        let mut times: Vec<f64> = Vec::with_capacity(pts.len());
        let mut jumps: Vec<Option<DVec>> = Vec::with_capacity(pts.len());
        for (t, z) in pts {
            match times.last() {
                Some(&last) if t - last <= merge => {
                    if let Some(z) = z {
                        let slot = jumps.last_mut().expect("nonempty");
                        *slot = Some(slot.map_or(z, |w| w + z));
                    }
                }
                _ => {
                    times.push(t);
                    jumps.push(z);
                }
            }
        }
        // a jump merged into t = 0 is dropped: the path lives on (0, T]
        jumps[0] = None;
        Mesh { times, jumps }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index of the mesh time equal (within merging) to `t`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-12 * self.times.last().copied().unwrap_or(1.0).max(1.0);
        let k = self.times.partition_point(|&s| s < t - tol);
        (k < self.len() && (self.times[k] - t).abs() <= tol).then_some(k)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathSolution {
    pub scheme: Scheme,
    pub times: Vec<f64>,
    /// `Y_t` after any jump at `t` (empty for Euler)
    pub y: Vec<DVec>,
    pub x: Vec<DVec>,
    /// `Δ_n = sup_t |Yⁿ_t − Yⁿ⁻¹_t|` per window
    pub gaps: Vec<Vec<f64>>,
    pub windows: Vec<(f64, f64)>,
    pub window_length: f64,
    /// worst `|φ(X_t) − Y_t|` along the mesh
    pub inversion_max: f64,
}

impl PathSolution {
    pub fn final_x(&self) -> DVec {
        *self.x.last().expect("nonempty")
    }

    /// `Δ_{n+1}/Δ_n` for the given `n`, over every window where both
    /// gaps exceed `floor`.
    pub fn contraction_ratios(&self, n: usize, floor: f64) -> Vec<f64> {
        self.gaps
            .iter()
            .filter(|g| g.len() > n && g[n - 1] > floor && g[n] > floor)
            .map(|g| g[n] / g[n - 1])
            .collect()
    }

    /// Sup distance at the times of `self` found in `other`'s mesh.
    pub fn sup_distance(&self, other: &PathSolution) -> f64 {
        let mesh = Mesh {
            times: other.times.clone(),
            jumps: vec![None; other.times.len()],
        };
        self.times
            .iter()
            .zip(&self.x)
            .filter_map(|(t, x)| mesh.index_of(*t).map(|k| (*x - other.x[k]).norm()))
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let d = self.x.first().map_or(0, |v| v.dim());
        let mut s = String::from("t");
        for a in 1..=d {
            let _ = write!(s, ",Y_{a}");
        }
        for a in 1..=d {
            let _ = write!(s, ",X_{a}");
        }
        s.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            let _ = write!(s, "{t}");
            for a in 0..d {
                let v = self.y.get(k).map_or(f64::NAN, |y| y[a]);
                let _ = write!(s, ",{v}");
            }
            for a in 0..d {
                let _ = write!(s, ",{}", self.x[k][a]);
            }
            s.push('\n');
        }
        s
    }
}

/// One Picard sweep of the window `[i0, i1]`. `y_minus[k]` is the state
/// just before the jump at `times[k]`; `x`, `x_minus` their preimages.
struct Iterate {
    y: Vec<DVec>,
    y_minus: Vec<DVec>,
    x: Vec<DVec>,
    x_minus: Vec<DVec>,
}

impl Iterate {
    fn constant(y0: DVec, x0: DVec, len: usize) -> Self {
        Self {
            y: vec![y0; len],
            y_minus: vec![y0; len],
            x: vec![x0; len],
            x_minus: vec![x0; len],
        }
    }

    fn with_jumps(model: &SdeModel, mesh: &Mesh, i0: usize, y0: DVec, x0: DVec, len: usize) -> Self {
        let mut it = Self::constant(y0, x0, len);
        let mut acc = y0;
        for k in 1..len {
            it.y_minus[k] = acc;
            if let Some(z) = mesh.jumps[i0 + k] {
                acc += z;
            }
            it.y[k] = acc;
            it.x_minus[k] = model.inverse_from(&it.y_minus[k], &it.x[k - 1]);
            it.x[k] = model.inverse_from(&it.y[k], &it.x_minus[k]);
        }
        it
    }

    fn next(&self, model: &SdeModel, mesh: &Mesh, i0: usize) -> Self {
        let len = self.y.len();
        let tr = &model.transform;
        let mut out = Self {
            y: Vec::with_capacity(len),
            y_minus: Vec::with_capacity(len),
            x: Vec::with_capacity(len),
            x_minus: Vec::with_capacity(len),
        };
        out.y.push(self.y[0]);
        out.y_minus.push(self.y[0]);
        out.x.push(self.x[0]);
        out.x_minus.push(self.x[0]);
        for k in 0..len - 1 {
            let dt = mesh.times[i0 + k + 1] - mesh.times[i0 + k];
            let ym = out.y[k] + model.drift.at_x(&self.x[k]) * dt;
            let yk = match mesh.jumps[i0 + k + 1] {
                Some(z) => ym + jump_g(tr, &self.x_minus[k + 1], &z),
                None => ym,
            };
            out.y_minus.push(ym);
            out.y.push(yk);
        }
        for k in 1..len {
            let xm = model.inverse_from(&out.y_minus[k], &self.x_minus[k]);
            out.x_minus.push(xm);
            let start = if mesh.jumps[i0 + k].is_some() { self.x[k] } else { xm };
            out.x.push(model.inverse_from(&out.y[k], &start));
        }
        out
    }

    fn gap(&self, other: &Iterate) -> f64 {
        self.y
            .iter()
            .zip(&other.y)
            .chain(self.y_minus.iter().zip(&other.y_minus))
            .map(|(a, b)| (*a - *b).norm())
            .fold(0.0, f64::max)
    }
}

// no support check: merged jumps can exceed R by rounding
fn jump_g(tr: &ZvonkinTransform, x: &DVec, z: &DVec) -> DVec {
    let sz = tr.sigma.at(x).mul_vec(z);
    tr.u_at(&(*x + sz)) - tr.u_at(x) + sz
}

enum WindowOutcome {
    Converged(Iterate, Vec<f64>),
    TooLong(Vec<f64>),
}

fn run_window(
    model: &SdeModel,
    mesh: &Mesh,
    i0: usize,
    i1: usize,
    y0: DVec,
    x0: DVec,
    opts: &PicardOptions,
    init: PicardInit,
) -> WindowOutcome {
    let len = i1 - i0 + 1;
    let mut cur = match init {
        PicardInit::Constant => Iterate::constant(y0, x0, len),
        PicardInit::Jumps => Iterate::with_jumps(model, mesh, i0, y0, x0, len),
    };
    let mut gaps: Vec<f64> = Vec::new();
    let mut rising = 0;
    let scale = 1.0 + y0.norm();
    for _ in 0..opts.n_max {
        let next = cur.next(model, mesh, i0);
        let gap = next.gap(&cur);
        cur = next;
        if !gap.is_finite() {
            gaps.push(gap);
            return WindowOutcome::TooLong(gaps);
        }
        if let Some(&prev) = gaps.last() {
            if gap > prev {
                rising += 1;
                if rising >= 3 {
                    gaps.push(gap);
                    return WindowOutcome::TooLong(gaps);
                }
            } else {
                rising = 0;
            }
            let floor = 1e3 * f64::EPSILON * scale;
            if gaps.len() >= 2 && prev > floor && gap > floor && gap > opts.contraction_limit * prev {
                gaps.push(gap);
                return WindowOutcome::TooLong(gaps);
            }
        }
        gaps.push(gap);
        if gap <= opts.tol {
            return WindowOutcome::Converged(cur, gaps);
        }
    }
    if gaps.last().is_some_and(|&g| g <= 1e3 * opts.tol.max(f64::EPSILON * scale)) {
        WindowOutcome::Converged(cur, gaps)
    } else {
        WindowOutcome::TooLong(gaps)
    }
}

fn window_bounds(mesh: &Mesh, horizon: f64, len: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut k = 1;
    loop {
        let edge = (k as f64 * len).min(horizon);
        let end = mesh.index_of(edge).unwrap_or(mesh.len() - 1);
        if end > start {
            out.push((start, end));
            start = end;
        }
        if edge >= horizon || start == mesh.len() - 1 {
            break;
        }
        k += 1;
    }
    out
}

fn window_edges(horizon: f64, len: f64) -> Vec<f64> {
    let n = (horizon / len - 1e-9).ceil() as usize;
    (1..n).map(|k| k as f64 * len).collect()
}

/// Picard solve on fixed windows of length `len`; `Err` carries the gaps
/// of the first window that failed to contract.
fn picard_fixed(prob: &SdeProblem, len: f64) -> std::result::Result<PathSolution, Vec<f64>> {
    let model = prob.model;
    let mut extras = prob.extra_times.clone();
    extras.extend(window_edges(prob.horizon, len));
    let mesh = Mesh::build(prob.path, prob.horizon, prob.dt, &extras);
    let y0 = model.transform.phi(&prob.x0);
    let mut y = vec![y0; mesh.len()];
    let mut x = vec![prob.x0; mesh.len()];
    let mut all_gaps = Vec::new();
    let mut windows = Vec::new();
    for (i0, i1) in window_bounds(&mesh, prob.horizon, len) {
        match run_window(model, &mesh, i0, i1, y[i0], x[i0], &prob.picard, prob.init) {
            WindowOutcome::Converged(it, gaps) => {
                y[i0..=i1].copy_from_slice(&it.y);
                x[i0..=i1].copy_from_slice(&it.x);
                all_gaps.push(gaps);
                windows.push((mesh.times[i0], mesh.times[i1]));
            }
            WindowOutcome::TooLong(gaps) => return Err(gaps),
        }
    }
    let inversion_max = y
        .iter()
        .zip(&x)
        .map(|(y, x)| (model.transform.phi(x) - *y).norm())
        .fold(0.0, f64::max);
    Ok(PathSolution {
        scheme: Scheme::Picard,
        times: mesh.times,
        y,
        x,
        gaps: all_gaps,
        windows,
        window_length: len,
        inversion_max,
    })
}

/// Picard iteration for `Y = φ(X)`, windows halved until every window
/// contracts.
pub fn picard_solve(prob: &SdeProblem) -> Result<PathSolution> {
    prob.validate()?;
    let mut len = prob.picard.initial_window.unwrap_or(prob.horizon).min(prob.horizon);
    loop {
        match picard_fixed(prob, len) {
            Ok(sol) => return Ok(sol),
            Err(gaps) => {
                if len / 2.0 < prob.picard.min_window {
                    return Err(Error::PicardDivergence { window: len, gaps });
                }
                len /= 2.0;
            }
        }
    }
}

/// Single Picard run over `[0, horizon]` with no window splitting.
pub fn picard_single_window(prob: &SdeProblem) -> Result<PathSolution> {
    prob.validate()?;
    picard_fixed(prob, prob.horizon).map_err(|gaps| Error::PicardDivergence {
        window: prob.horizon,
        gaps,
    })
}

/// Direct Euler steps for `X`: `X_{k+1} = X_k + b(X_k)Δt`, then
/// `+ σ(X_{k+1}−)z` at a jump.
pub fn euler_solve(
    b: &Interpolant,
    sigma: &SigmaField,
    path: &JumpPath,
    x0: &DVec,
    horizon: f64,
    dt: f64,
) -> Result<PathSolution> {
    if !(dt > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("dt = {dt} must be positive")));
    }
    if !(horizon > 0.0 && horizon <= path.horizon * (1.0 + 1e-12)) {
        return Err(Error::TimeOutOfRange {
            t: horizon,
            horizon: path.horizon,
        });
    }
    let mesh = Mesh::build(path, horizon, dt, &[]);
    let mut x = Vec::with_capacity(mesh.len());
    x.push(*x0);
    for k in 0..mesh.len() - 1 {
        let h = mesh.times[k + 1] - mesh.times[k];
        let mut next = x[k] + b.eval_vec(&x[k]) * h;
        if let Some(z) = mesh.jumps[k + 1] {
            next += sigma.at(&next).mul_vec(&z);
        }
        x.push(next);
    }
    Ok(PathSolution {
        scheme: Scheme::Euler,
        times: mesh.times,
        y: Vec::new(),
        x,
        gaps: Vec::new(),
        windows: vec![(0.0, horizon)],
        window_length: horizon,
        inversion_max: 0.0,
    })
}

/// `∇X_t(x)` by central differences, all solves on the same path and
/// window length.
pub fn flow_jacobian(prob: &SdeProblem, h: f64) -> Result<(Vec<f64>, Vec<DMat>)> {
    let base = picard_solve(prob)?;
    let d = prob.x0.dim();
    let mut fixed = prob.clone();
    fixed.picard.initial_window = Some(base.window_length);
    let mut cols: Vec<Vec<DVec>> = Vec::with_capacity(d);
    for i in 0..d {
        let e = DVec::unit(d, i) * h;
        let mut p = fixed.clone();
        p.x0 = prob.x0 + e;
        let plus = picard_solve(&p)?;
        p.x0 = prob.x0 - e;
        let minus = picard_solve(&p)?;
        if plus.times != base.times || minus.times != base.times {
            return Err(Error::ParameterOutOfRange("perturbed solves used different meshes".into()));
        }
        cols.push(plus.x.iter().zip(&minus.x).map(|(a, b)| (*a - *b) * (0.5 / h)).collect());
    }
    // X_0(x) = x, so the t = 0 entry is I without differencing
    let jac = (0..base.times.len())
        .map(|k| {
            if k == 0 {
                return DMat::identity(d);
            }
            let mut m = DMat::zeros(d);
            for (i, c) in cols.iter().enumerate() {
                for a in 0..d {
                    m.set(a, i, c[k][a]);
                }
            }
            m
        })
        .collect();
    Ok((base.times, jac))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeProcess {
    pub r: f64,
    /// `r` actually used (moved by one step off an existing jump time)
    pub r_used: f64,
    pub z: DVec,
    pub times: Vec<f64>,
    pub d: Vec<DVec>,
}

impl DerivativeProcess {
    pub fn sup_distance(&self, other: &DerivativeProcess) -> f64 {
        self.d.iter().zip(&other.d).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max)
    }
}

fn check_insertion(prob: &SdeProblem, r: f64, z: &DVec) -> Result<f64> {
    if !(r > 0.0 && r < prob.horizon) {
        return Err(Error::TimeOutOfRange { t: r, horizon: prob.horizon });
    }
    let n = z.norm();
    if !(n > prob.path.cutoff && n <= prob.path.support_radius) {
        return Err(Error::JumpOutOfSupport {
            norm: n,
            lower: prob.path.cutoff,
            upper: prob.path.support_radius,
        });
    }
    let clash = |t: f64| prob.path.jumps.iter().any(|j| (j.t - t).abs() <= 1e-12 * prob.horizon);
    if !clash(r) {
        return Ok(r);
    }
    let up = r + prob.dt;
    let moved = if up < prob.horizon && !clash(up) { up } else { r - prob.dt };
    if moved <= 0.0 || clash(moved) {
        return Err(Error::DuplicateTimestamp(r));
    }
    Ok(moved)
}

/// `D_{r,z}Y_t = Y_t(path + (r,z)) − Y_t(path)` on a common mesh.
pub fn malliavin_insertion(prob: &SdeProblem, r: f64, z: &DVec) -> Result<DerivativeProcess> {
    prob.validate()?;
    let r_used = check_insertion(prob, r, z)?;
    let bumped_path = prob.path.insert_jump(r_used, *z)?;
    let mut base = prob.clone();
    base.extra_times.push(r_used);
    let mut sol = picard_solve(&base)?;
    let mut bumped = base.clone();
    bumped.path = &bumped_path;
    bumped.picard.initial_window = Some(sol.window_length);
    let other = picard_solve(&bumped)?;
    if other.window_length != sol.window_length {
        // both runs must share windows so the meshes coincide
        base.picard.initial_window = Some(other.window_length);
        sol = picard_solve(&base)?;
    }
    if other.times != sol.times {
        return Err(Error::ParameterOutOfRange("insertion runs used different meshes".into()));
    }
    Ok(DerivativeProcess {
        r,
        r_used,
        z: *z,
        d: other.y.iter().zip(&sol.y).map(|(a, b)| *a - *b).collect(),
        times: sol.times,
    })
}

/// One sweep of the derivative recursion given `Yⁿ` (`it`) and `Dⁿ`.
fn derivative_step(
    model: &SdeModel,
    mesh: &Mesh,
    i0: usize,
    it: &Iterate,
    d_prev: &[DVec],
    d_prev_minus: &[DVec],
    d_start: DVec,
    r_index: usize,
    z: &DVec,
) -> (Vec<DVec>, Vec<DVec>) {
    let tr = &model.transform;
    let len = it.y.len();
    let mut d = vec![DVec::zeros(z.dim()); len];
    let mut dm = vec![DVec::zeros(z.dim()); len];
    d[0] = d_start;
    dm[0] = d_start;
    for k in 0..len - 1 {
        let gk = i0 + k + 1;
        let dt = mesh.times[gk] - mesh.times[i0 + k];
        let mut next = d[k];
        if d_prev[k].norm() > 0.0 {
            let xs = model.inverse_from(&(it.y[k] + d_prev[k]), &it.x[k]);
            next += (model.drift.at_x(&xs) - model.drift.at_x(&it.x[k])) * dt;
        }
        dm[k + 1] = next;
        if let Some(eta) = mesh.jumps[gk] {
            if d_prev_minus[k + 1].norm() > 0.0 {
                let xs = model.inverse_from(&(it.y_minus[k + 1] + d_prev_minus[k + 1]), &it.x_minus[k + 1]);
                next += jump_g(tr, &xs, &eta) - jump_g(tr, &it.x_minus[k + 1], &eta);
            }
        }
        if gk == r_index {
            next += jump_g(tr, &it.x_minus[k + 1], z);
        }
        d[k + 1] = next;
    }
    (d, dm)
}

/// Joint Picard iteration of `(Yⁿ, Dⁿ)` with
/// `Dⁿ⁺¹_t = g(Yⁿ_{r−},z) + ∫_r^t[ã(Yⁿ+Dⁿ) − ã(Yⁿ)]ds + Σ[g(Yⁿ_{s−}+Dⁿ_{s−},η) − g(Yⁿ_{s−},η)]`.
pub fn malliavin_recursive(prob: &SdeProblem, r: f64, z: &DVec) -> Result<DerivativeProcess> {
    prob.validate()?;
    let r_used = check_insertion(prob, r, z)?;
    let mut base = prob.clone();
    base.extra_times.push(r_used);
    // window length from the plain solve, so both routes share the mesh
    let len = picard_solve(&base)?.window_length;
    let model = prob.model;
    let mut extras = base.extra_times.clone();
    extras.extend(window_edges(prob.horizon, len));
    let mesh = Mesh::build(prob.path, prob.horizon, prob.dt, &extras);
    let r_index = mesh.index_of(r_used).ok_or_else(|| Error::ParameterOutOfRange("r missing from mesh".into()))?;
    let y0 = model.transform.phi(&prob.x0);
    let mut y = vec![y0; mesh.len()];
    let mut x = vec![prob.x0; mesh.len()];
    let mut dd = vec![DVec::zeros(z.dim()); mesh.len()];
    for (i0, i1) in window_bounds(&mesh, prob.horizon, len) {
        let wl = i1 - i0 + 1;
        let mut cur = match prob.init {
            PicardInit::Constant => Iterate::constant(y[i0], x[i0], wl),
            PicardInit::Jumps => Iterate::with_jumps(model, &mesh, i0, y[i0], x[i0], wl),
        };
        let mut d_cur = vec![dd[i0]; wl];
        let mut dm_cur = vec![dd[i0]; wl];
        let mut converged = false;
        for _ in 0..prob.picard.n_max {
            let (d_next, dm_next) = derivative_step(model, &mesh, i0, &cur, &d_cur, &dm_cur, dd[i0], r_index, z);
            let next = cur.next(model, &mesh, i0);
            let gap = next.gap(&cur).max(
                d_next
                    .iter()
                    .zip(&d_cur)
                    .map(|(a, b)| (*a - *b).norm())
                    .fold(0.0, f64::max),
            );
            cur = next;
            d_cur = d_next;
            dm_cur = dm_next;
            if gap <= prob.picard.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::PicardDivergence { window: len, gaps: Vec::new() });
        }
        y[i0..=i1].copy_from_slice(&cur.y);
        x[i0..=i1].copy_from_slice(&cur.x);
        dd[i0..=i1].copy_from_slice(&d_cur);
    }
    Ok(DerivativeProcess {
        r,
        r_used,
        z: *z,
        times: mesh.times,
        d: dd,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeBoundRow {
    pub r: f64,
    /// `f̂ⁿ_r` for `n = 1..`
    pub f_hat: Vec<f64>,
    pub max_ratio_after_3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivativeBoundReport {
    pub horizon: f64,
    pub paths: usize,
    pub nodes: usize,
    pub rows: Vec<DerivativeBoundRow>,
    /// `max_r f̂¹_r`, the fitted constant
    pub constant: f64,
    /// `max_n f̂ⁿ_r ≤ 2 f̂¹_r + constant` for every `r`
    pub bounded: bool,
    pub non_exploding: bool,
}

/// Monte Carlo `f̂ⁿ_r = E Σ_k w_k sup_{t∈[r,T]} |D_{r,z_k}Yⁿ_t|²` over
/// quadrature nodes above the cutoff, on a single window `[0, T]`.
pub fn derivative_bound_report(
    model: &SdeModel,
    paths: &[JumpPath],
    x0: &DVec,
    horizon: f64,
    dt: f64,
    r_grid: &[f64],
    n_iter: usize,
) -> Result<DerivativeBoundReport> {
    let nodes: Vec<_> = model.transform.quad.nodes_above(model.cutoff()).copied().collect();
    let mut sums = vec![vec![0.0; n_iter]; r_grid.len()];
    for path in paths {
        for (ri, &r) in r_grid.iter().enumerate() {
            let mut prob = SdeProblem::new(model, path, *x0, horizon, dt);
            let r_used = check_insertion(&prob, r, &nodes[0].z).unwrap_or(r);
            prob.extra_times.push(r_used);
            let mesh = Mesh::build(path, horizon, dt, &prob.extra_times);
            let r_index = mesh.index_of(r_used).expect("r in mesh");
            let y0 = model.transform.phi(x0);
            let mut its = vec![Iterate::constant(y0, *x0, mesh.len())];
            for n in 0..n_iter {
                let next = its[n].next(model, &mesh, 0);
                its.push(next);
            }
            for node in &nodes {
                let zero = vec![DVec::zeros(x0.dim()); mesh.len()];
                let (mut d, mut dm) = (zero.clone(), zero);
                for n in 0..n_iter {
                    let (dn, dmn) = derivative_step(model, &mesh, 0, &its[n], &d, &dm, DVec::zeros(x0.dim()), r_index, &node.z);
                    d = dn;
                    dm = dmn;
                    let sup = d[r_index..].iter().map(|v| v.norm_sq()).fold(0.0, f64::max);
                    sums[ri][n] += node.w * sup;
                }
            }
        }
    }
    let m = paths.len().max(1) as f64;
    let rows: Vec<DerivativeBoundRow> = r_grid
        .iter()
        .zip(&sums)
        .map(|(&r, s)| {
            let f_hat: Vec<f64> = s.iter().map(|v| v / m).collect();
            let max_ratio_after_3 = f_hat
                .windows(2)
                .skip(2)
                .map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 1.0 })
                .fold(0.0, f64::max);
            DerivativeBoundRow { r, f_hat, max_ratio_after_3 }
        })
        .collect();
    let constant = rows.iter().map(|r| r.f_hat[0]).fold(0.0, f64::max);
    let bounded = rows
        .iter()
        .all(|r| r.f_hat.iter().copied().fold(0.0, f64::max) <= 2.0 * r.f_hat[0] + constant);
    let non_exploding = rows.iter().all(|r| r.max_ratio_after_3 <= 1.1);
    Ok(DerivativeBoundReport {
        horizon,
        paths: paths.len(),
        nodes: nodes.len(),
        rows,
        constant,
        bounded,
        non_exploding,
    })
}
