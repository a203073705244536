//! One function per subcommand. Each returns a JSON report and the list of
//! asserted invariants that failed; artifacts go through `Lab::write`.

use crate::config::{DriftKind, ExperimentConfig, ForcingKind, SigmaKind};
use crate::error::{CliError, Context};
use jumplab::fourier::{
    band_limited_field, holder_sample_vector, DyadicBlockSet, FieldShape, GridField, InterpMode, Interpolant,
    PeriodicGrid,
};
use jumplab::levy_model::LevyMeasureSpec;
use jumplab::levy_sampler::{rng_from_seed, sample_batch, sample_jump_path, truncation_certificate, JumpPath};
use jumplab::linalg::{DMat, DVec};
use jumplab::nonlocal_op::{
    bernstein_report, build_quadrature_with, commutator_report, symbol_psi, InnerBall, NuQuadrature, QuadOptions,
    SigmaField,
};
use jumplab::numerics::{derive_seed, log_spaced};
use jumplab::pbp_ode::{path_hash, perturbation_probe, uniqueness_experiment, LadderOptions};
use jumplab::resolvent::{apriori_report, find_lambda0, solve, uniqueness_gap, ResolventProblem, SolverOptions};
use jumplab::sde_engine::{
    derivative_bound_report, euler_solve, flow_jacobian, malliavin_insertion, malliavin_recursive, picard_solve,
    PicardOptions, SdeModel, SdeProblem,
};
use jumplab::zvonkin::{build_transform, ZvonkinOptions, ZvonkinTransform};
use rand::Rng;
use serde_json::{json, Value};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

pub const STAGES: [&str; 11] = [
    "certify-measure",
    "sample-path",
    "lp-suite",
    "bernstein",
    "commutator",
    "resolvent",
    "zvonkin",
    "sde",
    "flow",
    "malliavin",
    "pbp",
];

pub struct Lab<'a> {
    pub cfg: &'a ExperimentConfig,
    pub out: PathBuf,
    pub artifacts: Vec<PathBuf>,
}

pub struct StageResult {
    pub report: Value,
    pub failures: Vec<String>,
}

impl StageResult {
    fn new(report: Value, checks: Vec<(bool, String)>) -> Self {
        Self {
            report,
            failures: checks.into_iter().filter(|(ok, _)| !ok).map(|(_, m)| m).collect(),
        }
    }
}

impl<'a> Lab<'a> {
    pub fn new(cfg: &'a ExperimentConfig, out: &Path) -> Self {
        Self {
            cfg,
            out: out.to_path_buf(),
            artifacts: Vec::new(),
        }
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let p = self.out.join(name);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|source| CliError::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
        std::fs::write(&p, contents).map_err(|source| CliError::Io {
            path: p.display().to_string(),
            source,
        })?;
        self.artifacts.push(PathBuf::from(name));
        Ok(())
    }

    fn seed(&self, stage: u64) -> u64 {
        derive_seed(self.cfg.master_seed, stage)
    }

    fn spec(&self) -> Result<LevyMeasureSpec, CliError> {
        self.cfg.spec()
    }

    fn grid(&self) -> Result<PeriodicGrid, CliError> {
        let d = self.spec()?.dim;
        PeriodicGrid::new(d, self.cfg.grid.half_period, self.cfg.grid.n).stage("grid")
    }

    fn quad(&self) -> Result<NuQuadrature, CliError> {
        let opts = QuadOptions {
            levels: self.cfg.measure.quad_levels,
            inner: self.cfg.measure.inner,
            ..QuadOptions::default()
        };
        build_quadrature_with(&self.spec()?, opts).stage("quadrature")
    }

    /// Quadrature of the SDE pipelines: no inner node, cutoff `2^{−levels}`.
    fn sde_quad(&self) -> Result<NuQuadrature, CliError> {
        let opts = QuadOptions {
            levels: self.cfg.sde.levels,
            inner: InnerBall::Dropped,
            ..QuadOptions::default()
        };
        build_quadrature_with(&self.spec()?, opts).stage("quadrature")
    }

    fn sigma(&self, g: &PeriodicGrid) -> Result<SigmaField, CliError> {
        let d = g.dim;
        match self.cfg.sigma.kind {
            SigmaKind::Identity => Ok(SigmaField::identity(d)),
            SigmaKind::Constant => SigmaField::constant(DMat::from_row_major(&self.cfg.sigma.matrix)).stage("sigma"),
            SigmaKind::Variable => {
                let w = PI / 4.0;
                let l = self.cfg.sigma.lipschitz;
                let f = GridField::from_fn_matrix(*g, |x| {
                    let mut m = DMat::identity(d);
                    for i in 0..d {
                        m.set(i, i, 1.0 + l / w * (w * x[i]).sin());
                    }
                    m
                });
                SigmaField::variable(f).stage("sigma")
            }
        }
    }

    fn drift(&self, g: &PeriodicGrid) -> GridField {
        let c = &self.cfg.drift;
        match c.kind {
            DriftKind::Zero => GridField::zeros(*g, FieldShape::Vector),
            DriftKind::Constant => GridField::constant_vector(*g, &DVec::from_slice(&c.constant)),
            DriftKind::PlaneWave => {
                let xi = DVec::from_slice(&c.wavenumber) * (PI / g.half_period);
                let d = g.dim;
                GridField::from_fn_vector(*g, |x| {
                    let s = c.amplitude * xi.dot(x).sin();
                    DVec::from_slice(&vec![s; d])
                })
            }
            DriftKind::Holder => {
                let lvl = (c.max_level >= 0).then_some(c.max_level);
                holder_sample_vector(c.beta, g, self.seed(100), c.amplitude, lvl)
            }
        }
    }

    fn declared_beta(&self) -> f64 {
        match self.cfg.drift.kind {
            DriftKind::Holder => self.cfg.drift.beta,
            _ => 1.0,
        }
    }

    fn zvonkin_options(&self) -> ZvonkinOptions {
        let z = &self.cfg.zvonkin;
        ZvonkinOptions {
            target: z.target,
            lambda_start: z.lambda_start,
            lambda_cap: z.lambda_cap,
            solver: self.solver_options(),
            mu: z.mu,
            interp: z.interp,
            inversion_tol: z.inversion_tol,
        }
    }

    fn solver_options(&self) -> SolverOptions {
        let r = &self.cfg.resolvent;
        SolverOptions {
            tolerance: r.tolerance,
            residual_tol: r.residual_tol,
            max_iters: r.max_iters,
        }
    }

    fn transform(&self, quad: &NuQuadrature) -> Result<ZvonkinTransform, CliError> {
        let g = self.grid()?;
        build_transform(&self.drift(&g), self.declared_beta(), &self.sigma(&g)?, quad, &self.zvonkin_options())
            .stage("zvonkin")
    }

    fn sde_model(&self) -> Result<SdeModel, CliError> {
        let q = self.sde_quad()?;
        let cutoff = q.inner_radius;
        SdeModel::new(self.transform(&q)?, cutoff).stage("sde model")
    }

    fn sde_paths(&self, model: &SdeModel, stage: u64, n: usize, horizon: f64) -> Result<Vec<JumpPath>, CliError> {
        sample_batch(&self.spec()?, horizon, model.cutoff(), self.seed(stage), n).stage("paths")
    }

    fn picard(&self) -> PicardOptions {
        let s = &self.cfg.sde;
        PicardOptions {
            n_max: s.n_max,
            tol: s.tol,
            contraction_limit: s.contraction_limit,
            ..PicardOptions::default()
        }
    }

    pub fn run(&mut self, stage: &str) -> Result<StageResult, CliError> {
        match stage {
            "certify-measure" => self.certify_measure(),
            "sample-path" => self.sample_path(),
            "lp-suite" => self.lp_suite(),
            "bernstein" => self.bernstein(),
            "commutator" => self.commutator(),
            "resolvent" => self.resolvent(),
            "zvonkin" => self.zvonkin(),
            "sde" => self.sde(),
            "flow" => self.flow(),
            "malliavin" => self.malliavin(),
            "pbp" => self.pbp(),
            other => Err(CliError::ConfigInvalid(format!("unknown stage `{other}`"))),
        }
    }

    fn certify_measure(&mut self) -> Result<StageResult, CliError> {
        let spec = self.spec()?;
        let rep = spec.certify().stage("certify-measure")?;
        let q = self.quad()?;
        let qc = q.certify();
        self.write("quadrature.csv", &q.to_csv())?;
        let checks = vec![
            (rep.pass, format!("(A1) bounds fail: {rep:?}")),
            (qc.pass, format!("quadrature certificate fails: {qc:?}")),
        ];
        let report = json!({
            "spec": spec,
            "fingerprint": spec.fingerprint(),
            "certificate": rep,
            "quadrature": { "nodes": q.nodes.len(), "inner_radius": q.inner_radius, "certificate": qc },
            "pass": rep.pass && qc.pass,
        });
        Ok(StageResult::new(report, checks))
    }

    fn sample_path(&mut self) -> Result<StageResult, CliError> {
        let spec = self.spec()?;
        let m = &self.cfg.measure;
        let p = sample_jump_path(&spec, m.path_horizon, m.path_cutoff, self.seed(1)).stage("sample-path")?;
        let cert = truncation_certificate(&spec, m.path_horizon, m.path_cutoff).stage("sample-path")?;
        self.write("path.csv", &p.to_csv())?;
        let report = json!({
            "jumps": p.len(),
            "horizon": p.horizon,
            "cutoff": p.cutoff,
            "seed": p.seed,
            "quadratic_variation": p.quadratic_variation(),
            "terminal_value": p.evaluate_z(p.horizon).stage("sample-path")?,
            "path_sha256": path_hash(&p),
            "truncation": cert,
        });
        Ok(StageResult::new(report, vec![(cert.holds, format!("truncation bound fails: {cert:?}"))]))
    }

    fn lp_suite(&mut self) -> Result<StageResult, CliError> {
        let g = self.grid()?;
        let set = DyadicBlockSet::new(g);
        let jmax = set.max_level();
        let part = set.partition_residual();
        let mut orth = 0.0_f64;
        let mut recon = 0.0_f64;
        let trials = if g.dim == 1 { 50 } else { 10 };
        for t in 0..trials {
            let f = band_limited_field(&g, derive_seed(self.seed(2), t), 2f64.powi(jmax), 0.5);
            let blocks = set.blocks(&f).stage("lp-suite")?;
            let mut sum = GridField::zeros(g, FieldShape::Scalar);
            for b in &blocks {
                sum = sum.add(b);
            }
            recon = recon.max(sum.max_abs_diff(&f) / f.sup_norm());
            let energy = f.inner(&f);
            for j in -1..=jmax {
                for k in (j + 2)..=jmax {
                    let ip = blocks[(j + 1) as usize].inner(&blocks[(k + 1) as usize]);
                    orth = orth.max(ip.abs() / energy);
                }
            }
        }
        let report = json!({
            "levels": jmax + 2,
            "fields": trials,
            "partition_residual": part,
            "orthogonality_residual": orth,
            "reconstruction_residual": recon,
        });
        let checks = vec![
            (part <= 1e-12, format!("partition residual {part:e}")),
            (orth <= 1e-12, format!("orthogonality residual {orth:e}")),
            (recon <= 1e-12, format!("reconstruction residual {recon:e}")),
        ];
        Ok(StageResult::new(report, checks))
    }

    fn bernstein(&mut self) -> Result<StageResult, CliError> {
        let g = self.grid()?;
        let q = self.quad()?;
        let jmax = g.max_level();
        if jmax < 4 {
            return Err(CliError::ConfigInvalid(format!("grid too small for Bernstein levels (J = {jmax})")));
        }
        let mut reps = Vec::new();
        let mut checks = Vec::new();
        for p in [2.0, 4.0] {
            let rep = bernstein_report(&q, &DMat::identity(g.dim), &g, p, 3..=jmax - 1, 100, self.seed(3))
                .stage("bernstein")?;
            checks.push((rep.all_positive, format!("p={p}: non-positive ratio")));
            checks.push((rep.median_spread <= 4.0, format!("p={p}: median spread {}", rep.median_spread)));
            if let Some(e) = rep.plancherel_max_rel_err {
                checks.push((e <= 1e-8, format!("Plancherel cross-check {e:e}")));
            }
            reps.push(rep);
        }
        let csv: String = std::iter::once("p,j,min_ratio,median_ratio\n".to_string())
            .chain(reps.iter().flat_map(|r| {
                r.levels
                    .iter()
                    .map(move |l| format!("{},{},{:e},{:e}\n", r.p, l.j, l.min_ratio, l.median_ratio))
            }))
            .collect();
        self.write("bernstein.csv", &csv)?;
        Ok(StageResult::new(json!({ "alpha": q.alpha, "reports": reps }), checks))
    }

    fn commutator(&mut self) -> Result<StageResult, CliError> {
        let g = self.grid()?;
        let beta = self.cfg.drift.beta;
        let b = holder_sample_vector(beta, &g, self.seed(4), 1.0, None);
        let l = g.half_period;
        let u = GridField::from_fn_scalar(g, |x| (PI * x[0] / l).cos());
        let jmax = g.max_level();
        if jmax < 4 {
            return Err(CliError::ConfigInvalid(format!("grid too small for commutator levels (J = {jmax})")));
        }
        let rep = commutator_report(&b, &u, beta, 2.0, 2..=jmax - 1).stage("commutator")?;
        let csv: String = std::iter::once("j,norm,ratio\n".to_string())
            .chain(rep.levels.iter().zip(&rep.norms).zip(&rep.ratios).map(|((j, n), r)| format!("{j},{n:e},{r:e}\n")))
            .collect();
        self.write("commutator.csv", &csv)?;
        let ok = (rep.slope + beta).abs() <= 0.2;
        Ok(StageResult::new(
            json!({ "report": rep }),
            vec![(ok, format!("slope {} not within 0.2 of -{beta}", rep.slope))],
        ))
    }

    fn resolvent(&mut self) -> Result<StageResult, CliError> {
        let g = self.grid()?;
        let q = self.quad()?;
        let sigma = self.sigma(&g)?;
        let b = self.drift(&g);
        let r = &self.cfg.resolvent;
        let mut checks = Vec::new();
        let report = match r.forcing {
            ForcingKind::PlaneWave => {
                let xi = DVec::from_slice(&r.wavenumber) * (PI / g.half_period);
                let f = GridField::from_fn_scalar(g, |x| xi.dot(x).cos());
                let mut prob = ResolventProblem::new(r.lambda, &b, &f, &sigma, &q);
                prob.options = self.solver_options();
                let sol = solve(&prob).stage("resolvent")?;
                let constant_b = matches!(self.cfg.drift.kind, DriftKind::Zero | DriftKind::Constant);
                let closed = match (sigma.constant_matrix(), constant_b) {
                    (Some(s), true) => {
                        let v = b.vec_at(0);
                        let psi = symbol_psi(&q, s, &xi);
                        let d = r.lambda + psi;
                        let e = v.dot(&xi);
                        let exact = GridField::from_fn_scalar(g, |x| {
                            let t = xi.dot(x);
                            (d * t.cos() - e * t.sin()) / (d * d + e * e)
                        });
                        let rel = sol.u.max_abs_diff(&exact) / exact.sup_norm();
                        checks.push((rel <= r.closed_form_tol, format!("closed form rel err {rel:e}")));
                        Some(json!({ "lambda": r.lambda, "psi": psi, "drift_dot_xi": e, "rel_err": rel }))
                    }
                    _ => None,
                };
                self.write("resolvent_u.csv", &sol.u.to_csv())?;
                json!({ "forcing": "plane_wave", "solution": sol, "closed_form": closed })
            }
            ForcingKind::Drift => {
                let mut prob = ResolventProblem::new(r.lambda, &b, &b, &sigma, &q);
                prob.options = self.solver_options();
                let sol = find_lambda0(&prob, r.lambda, r.lambda_cap).stage("resolvent")?;
                let fsup = b.sup_norm();
                checks.push((
                    sol.residual_sup <= r.residual_tol * fsup.max(f64::MIN_POSITIVE),
                    format!("residual {} exceeds {} |f|", sol.residual_sup, r.residual_tol),
                ));
                let at = prob.with_lambda(sol.lambda_used);
                let gap = uniqueness_gap(&at).stage("resolvent")?;
                checks.push((gap <= 10.0 * r.tolerance, format!("initialisations differ by {gap:e}")));
                let apriori = apriori_report(&sol, &prob, r.gamma, self.declared_beta(), r.p).ok();
                self.write("resolvent_u.csv", &sol.u.to_csv())?;
                json!({
                    "forcing": "drift",
                    "solution": sol,
                    "uniqueness_gap": gap,
                    "apriori": apriori,
                })
            }
        };
        Ok(StageResult::new(report, checks))
    }

    fn zvonkin(&mut self) -> Result<StageResult, CliError> {
        let q = self.quad()?;
        let tr = self.transform(&q)?;
        let z = &self.cfg.zvonkin;
        let g = *tr.u.grid();
        let mut rng = rng_from_seed(self.seed(6));
        let mut round_trip = 0.0_f64;
        let mut bound_ok = true;
        for _ in 0..z.round_trip_points {
            let x = DVec::from_slice(
                &(0..g.dim)
                    .map(|_| rng.random_range(-g.half_period..g.half_period))
                    .collect::<Vec<_>>(),
            );
            let inv = tr.invert_phi(&tr.phi(&x), 1e-12);
            round_trip = round_trip.max((inv.x - x).norm());
            bound_ok &= inv.iterations <= inv.bound;
        }
        let r = tr.support_radius();
        let radii = log_spaced(r / 50.0, r, 6);
        let fit = tr.fit_g_bound(&DVec::unit(g.dim, 0), &radii).stage("zvonkin")?;
        let moments = match z.k_moments {
            true => Some(tr.k_moment_report(&radii).stage("zvonkin")?),
            false => None,
        };
        let sweep_monotone = tr
            .sweep
            .iter()
            .filter_map(|s| s.sup_grad)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[1] <= w[0]);
        let min_det = tr.min_det();
        tr.save_bundle(&self.out.join("transform")).stage("zvonkin")?;
        for f in ["u.csv", "b.csv", "transform.json"] {
            self.artifacts.push(Path::new("transform").join(f));
        }
        if matches!(tr.sigma, SigmaField::Variable { .. }) {
            self.artifacts.push(Path::new("transform").join("sigma.csv"));
        }
        let report = json!({
            "lambda": tr.lambda,
            "sup_grad": tr.sup_grad,
            "mu": tr.mu,
            "residual_sup": tr.residual_sup,
            "sweep": tr.sweep,
            "sweep_monotone": sweep_monotone,
            "min_det": min_det,
            "injectivity_ratio": tr.injectivity_ratio(),
            "lipschitz_a": tr.lipschitz_a(),
            "g_bound_constant": tr.g_bound_constant(),
            "a4": tr.a4_check(),
            "round_trip_max": round_trip,
            "round_trip_points": z.round_trip_points,
            "iteration_bound_respected": bound_ok,
            "g_bound_fit": fit,
            "k_moments": moments,
        });
        let checks = vec![
            (tr.sup_grad <= z.target, format!("sup_grad {} above target", tr.sup_grad)),
            (round_trip <= z.round_trip_tol, format!("round trip error {round_trip:e}")),
            (min_det > 0.0, format!("det(I + grad u) = {min_det}")),
            (bound_ok, "inversion exceeded its iteration bound".into()),
        ];
        Ok(StageResult::new(report, checks))
    }

    fn sde(&mut self) -> Result<StageResult, CliError> {
        let m = self.sde_model()?;
        let s = self.cfg.sde.clone();
        let paths = self.sde_paths(&m, 7, s.paths, s.horizon)?;
        let b = Interpolant::new(&m.transform.b, InterpMode::Spectral);
        let x0 = DVec::from_slice(&s.x0);
        let fine_dt = s.dt / 2f64.powi(s.euler_refinements as i32);
        let mut ladders = Vec::new();
        let mut worst = 0.0_f64;
        let mut monotone = true;
        let mut sums = [0.0; 5];
        let mut counts = [0usize; 5];
        let mut inversion = 0.0_f64;
        for (k, p) in paths.iter().enumerate() {
            let mut prob = SdeProblem::new(&m, p, x0, s.horizon, fine_dt);
            prob.picard = self.picard();
            let sol = picard_solve(&prob).stage("sde")?;
            inversion = inversion.max(sol.inversion_max);
            for (i, n) in (2..=6).enumerate() {
                for r in sol.contraction_ratios(n, 1e-11) {
                    sums[i] += r;
                    counts[i] += 1;
                }
            }
            let mut dists = Vec::new();
            for j in 0..=s.euler_refinements {
                let e = euler_solve(&b, &m.transform.sigma, p, &x0, s.horizon, s.dt / 2f64.powi(j as i32))
                    .stage("sde")?;
                dists.push(sol.sup_distance(&e));
            }
            monotone &= dists.windows(2).all(|w| w[1] <= w[0] || w[1] < 1e-9);
            worst = worst.max(*dists.last().expect("ladder"));
            if k == 0 {
                self.write("sde_picard.csv", &sol.to_csv())?;
                self.write("sde_path.csv", &p.to_csv())?;
            }
            ladders.push(json!({ "path_sha256": path_hash(p), "euler_distances": dists, "windows": sol.windows.len() }));
        }
        let means: Vec<Option<f64>> =
            sums.iter().zip(&counts).map(|(s, &c)| (c > 0).then(|| s / c as f64)).collect();
        let ratios_ok = means.iter().flatten().all(|&r| r <= s.ratio_limit);
        let report = json!({
            "paths": paths.len(),
            "fine_dt": fine_dt,
            "cutoff": m.cutoff(),
            "lambda": m.transform.lambda,
            "mean_contraction_ratios_n2_to_6": means,
            "ratio_samples": counts,
            "picard_vs_euler_final": worst,
            "refinement_monotone": monotone,
            "inversion_max": inversion,
            "ladders": ladders,
        });
        let checks = vec![
            (worst <= s.agreement_tol, format!("Picard vs Euler distance {worst:e}")),
            (ratios_ok, format!("mean contraction ratios {means:?}")),
            (inversion <= 1e-10, format!("inversion residual {inversion:e}")),
        ];
        Ok(StageResult::new(report, checks))
    }

    fn flow(&mut self) -> Result<StageResult, CliError> {
        let m = self.sde_model()?;
        let a4 = m.transform.require_a4().stage("flow")?;
        let s = self.cfg.sde.clone();
        let paths = self.sde_paths(&m, 8, s.flow_paths, s.horizon)?;
        let x0 = DVec::from_slice(&s.x0);
        let mut min_det = f64::INFINITY;
        let mut start_identity = true;
        let mut first = None;
        for p in &paths {
            let mut prob = SdeProblem::new(&m, p, x0, s.horizon, s.dt);
            prob.picard = self.picard();
            let (times, jac) = flow_jacobian(&prob, s.flow_h * (1.0 + x0.norm())).stage("flow")?;
            start_identity &= jac[0] == DMat::identity(x0.dim());
            min_det = jac.iter().map(|j| j.det()).fold(min_det, f64::min);
            if first.is_none() {
                first = Some((times, jac));
            }
        }
        if let Some((times, jac)) = first {
            let d = x0.dim();
            let mut csv = String::from("t");
            for i in 0..d {
                for j in 0..d {
                    csv.push_str(&format!(",j{i}{j}"));
                }
            }
            csv.push_str(",det\n");
            for (t, m) in times.iter().zip(&jac) {
                csv.push_str(&format!("{t:e}"));
                for v in m.row_major() {
                    csv.push_str(&format!(",{v:e}"));
                }
                csv.push_str(&format!(",{:e}\n", m.det()));
            }
            self.write("flow_jacobian.csv", &csv)?;
        }
        let report = json!({ "a4": a4, "paths": paths.len(), "min_det": min_det, "start_identity": start_identity });
        let checks = vec![
            (start_identity, "grad X_0 differs from the identity".to_string()),
            (min_det > 0.0, format!("det grad X_t reaches {min_det}")),
        ];
        Ok(StageResult::new(report, checks))
    }

    fn malliavin(&mut self) -> Result<StageResult, CliError> {
        let m = self.sde_model()?;
        let c = self.cfg.malliavin.clone();
        let horizon = self.cfg.sde.horizon;
        let paths = self.sde_paths(&m, 9, c.samples, horizon)?;
        let mut rng = rng_from_seed(self.seed(10));
        let lo = m.cutoff();
        let hi = m.transform.support_radius();
        let d = m.dim();
        let mut worst = 0.0_f64;
        let mut samples = Vec::new();
        for p in &paths {
            let x0 = DVec::from_slice(&(0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
            let mut prob = SdeProblem::new(&m, p, x0, horizon, c.dt);
            prob.picard = self.picard();
            let r = rng.random_range(0.05 * horizon..0.95 * horizon);
            let mag = rng.random_range(lo * 1.01..hi);
            let mut dir = DVec::zeros(d);
            dir[rng.random_range(0..d)] = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let z = dir * mag;
            let a = malliavin_insertion(&prob, r, &z).stage("malliavin")?;
            let b = malliavin_recursive(&prob, r, &z).stage("malliavin")?;
            let gap = a.sup_distance(&b) / (1.0 + z.norm());
            worst = worst.max(gap);
            samples.push(json!({ "r": a.r_used, "z": z, "scaled_gap": gap }));
        }
        let bpaths = self.sde_paths(&m, 11, c.bound_paths, c.bound_horizon)?;
        let x0 = DVec::from_slice(&self.cfg.sde.x0);
        let rep = derivative_bound_report(&m, &bpaths, &x0, c.bound_horizon, c.dt, &c.r_grid, c.n_iter)
            .stage("malliavin")?;
        let growth = rep.rows.iter().map(|r| r.max_ratio_after_3).fold(0.0, f64::max);
        let csv: String = std::iter::once("r,n,f_hat\n".to_string())
            .chain(rep.rows.iter().flat_map(|row| {
                row.f_hat.iter().enumerate().map(move |(n, f)| format!("{},{},{f:e}\n", row.r, n + 1))
            }))
            .collect();
        self.write("malliavin_bound.csv", &csv)?;
        let report = json!({ "route_gap_max": worst, "samples": samples, "bound": rep, "max_growth_after_3": growth });
        let checks = vec![
            (worst <= c.route_tol, format!("route gap {worst:e}")),
            (rep.bounded, "f_hat exceeds 2 f_hat^1 + constant".into()),
            (growth <= c.growth_limit, format!("f_hat growth ratio {growth}")),
        ];
        Ok(StageResult::new(report, checks))
    }

    fn pbp(&mut self) -> Result<StageResult, CliError> {
        let spec = self.spec()?;
        let g = self.grid()?;
        let c = self.cfg.pbp.clone();
        let field = holder_sample_vector(c.beta, &g, self.seed(12), c.amplitude, None);
        let b = Interpolant::new(&field, InterpMode::Spectral);
        let paths = sample_batch(&spec, c.horizon, self.cfg.measure.path_cutoff, self.seed(13), c.paths)
            .stage("pbp")?;
        let x0 = DVec::from_slice(&c.x0);
        let opts = LadderOptions {
            dt0: c.dt0,
            refinements: c.refinements,
            schemes: c.schemes.clone(),
            tolerance: c.tolerance,
        };
        let rep = uniqueness_experiment(&b, spec.alpha(), c.beta, &paths, &x0, c.horizon, &opts).stage("pbp")?;
        for (k, p) in paths.iter().enumerate() {
            self.write(&format!("pbp_paths/path_{k:03}.csv"), &p.to_csv())?;
        }
        let probe = match paths.first() {
            Some(p) => Some(
                perturbation_probe(
                    &b,
                    p,
                    &x0,
                    c.horizon,
                    c.probe_dt,
                    c.probe_perturbation,
                    c.probe_trials,
                    c.probe_tol,
                    self.seed(14),
                )
                .stage("pbp")?,
            ),
            None => None,
        };
        let mut checks = vec![(
            rep.verdict == "consistent-with-uniqueness",
            format!("scheme pairs differ by up to {:e}", rep.max_pair_distance),
        )];
        if let Some(pr) = &probe {
            checks.push((
                pr.max_spread <= 10.0 * pr.solver_tol,
                format!("perturbed inner solves spread {:e}", pr.max_spread),
            ));
        }
        Ok(StageResult::new(json!({ "uniqueness": rep, "perturbation_probe": probe }), checks))
    }
}
