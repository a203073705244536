use jumplab::fourier::dyadic::DyadicBlockSet;
use jumplab::fourier::{
    band_limited_field, holder_sample_vector, FieldShape, GridField, InterpMode, Interpolant,
    PeriodicGrid,
};
use jumplab::levy_model::{shipped, CERT_DIRECTIONS, CERT_RADII};
use jumplab::levy_sampler::{rng_from_seed, sample_jump_path, JumpPath};
use jumplab::linalg::{DMat, DVec};
use jumplab::nonlocal_op::{
    bernstein_report, build_quadrature, build_quadrature_with, commutator_report, symbol_psi, InnerBall,
    QuadOptions, SigmaField,
};
use jumplab::pbp_ode::{solve_random_ode, uniqueness_experiment, LadderOptions, OdeScheme};
use jumplab::resolvent::{apriori_report, find_lambda0, solve, ResolventProblem};
use jumplab::sde_engine::{
    derivative_bound_report, euler_solve, flow_jacobian, malliavin_insertion, malliavin_recursive, picard_solve,
    SdeModel, SdeProblem,
};
use jumplab::zvonkin::{build_transform, shipped as drifts, ZvonkinOptions};
use rand::Rng;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

type Check = Result<String, String>;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    secs: f64,
    limit: f64,
    detail: String,
}

fn run(id: usize, name: &'static str, limit: f64, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let res = catch_unwind(AssertUnwindSafe(f));
    let secs = start.elapsed().as_secs_f64();
    let (pass, detail) = match res {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(p) => (
            false,
            p.downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()),
        ),
    };
    let o = Outcome {
        id,
        name,
        pass,
        secs,
        limit,
        detail,
    };
    println!(
        "[{}] criterion {:>2} {:<28} {:>8.2}s / {:>4.0}s  {}",
        if o.pass && o.secs < o.limit { "PASS" } else { "FAIL" },
        o.id,
        o.name,
        o.secs,
        o.limit,
        o.detail
    );
    o
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn sde_model(amp: f64, sigma: SigmaField) -> SdeModel {
    let g = PeriodicGrid::new(1, 8.0, 128).unwrap();
    let opts = QuadOptions {
        levels: 3,
        inner: InnerBall::Dropped,
        ..QuadOptions::default()
    };
    let q = build_quadrature_with(&shipped::sde_1d(), opts).unwrap();
    let b = if amp == 0.0 {
        GridField::zeros(g, FieldShape::Vector)
    } else {
        holder_sample_vector(0.7, &g, 4, amp, Some(3))
    };
    let tr = build_transform(&b, 0.7, &sigma, &q, &ZvonkinOptions::default()).unwrap();
    SdeModel::new(tr, q.inner_radius).unwrap()
}

fn sde_path(seed: u64) -> JumpPath {
    sample_jump_path(&shipped::sde_1d(), 1.0, 0.125, seed).unwrap()
}

fn c1_measures() -> Check {
    let mut worst = 0.0_f64;
    for spec in shipped::all() {
        let rep = spec.certify().map_err(|e| e.to_string())?;
        ensure(rep.radii == CERT_RADII && rep.directions == CERT_DIRECTIONS, "sample size")?;
        ensure(rep.pass, format!("{} failed (A1): {rep:?}", spec.name))?;
        ensure(rep.max_moment_rel_err <= 1e-8, format!("{} moments {}", spec.name, rep.max_moment_rel_err))?;
        worst = worst.max(rep.max_moment_rel_err);
    }
    Ok(format!("3 specs certified, worst moment rel err {worst:.1e}"))
}

fn c2_littlewood_paley() -> Check {
    let g = PeriodicGrid::new(1, 8.0, 256).unwrap();
    let set = DyadicBlockSet::new(g);
    let part = set.partition_residual();
    ensure(part <= 1e-12, format!("partition {part:e}"))?;
    let jmax = set.max_level();
    let mut orth = 0.0_f64;
    let mut recon = 0.0_f64;
    for t in 0..50 {
        let f = band_limited_field(&g, 1000 + t, 2f64.powi(jmax), 0.5);
        let blocks = set.blocks(&f).map_err(|e| e.to_string())?;
        let mut sum = GridField::zeros(g, FieldShape::Scalar);
        for b in &blocks {
            sum = sum.add(b);
        }
        recon = recon.max(sum.max_abs_diff(&f) / f.sup_norm());
        let energy = f.inner(&f);
        for j in -1..=jmax {
            for k in (j + 2)..=jmax {
                ensure(set.disjoint(j, k), format!("blocks {j},{k} overlap"))?;
                let ip = blocks[(j + 1) as usize].inner(&blocks[(k + 1) as usize]);
                orth = orth.max(ip.abs() / energy);
            }
        }
    }
    ensure(orth <= 1e-12, format!("orthogonality {orth:e}"))?;
    ensure(recon <= 1e-12, format!("reconstruction {recon:e}"))?;
    Ok(format!("partition {part:.1e}, orthogonality {orth:.1e}, reconstruction {recon:.1e}"))
}

fn c3_bernstein() -> Check {
    let g = PeriodicGrid::new(1, 8.0, 256).unwrap();
    let jmax = g.max_level();
    let mut notes = Vec::new();
    for spec in [shipped::isotropic_1d(), shipped::sde_1d()] {
        let q = build_quadrature(&spec, 10).map_err(|e| e.to_string())?;
        for p in [2.0, 4.0] {
            let rep = bernstein_report(&q, &DMat::identity(1), &g, p, 3..=jmax - 1, 100, 77)
                .map_err(|e| e.to_string())?;
            ensure(rep.all_positive, format!("{} p={p}: non-positive ratio", spec.name))?;
            ensure(rep.median_spread <= 4.0, format!("{} p={p}: spread {}", spec.name, rep.median_spread))?;
            if p == 2.0 {
                let e = rep.plancherel_max_rel_err.unwrap_or(f64::INFINITY);
                ensure(e <= 1e-8, format!("{} Plancherel {e:e}", spec.name))?;
            }
            notes.push(format!("a={} p={p} spread {:.2}", q.alpha, rep.median_spread));
        }
    }
    Ok(notes.join(", "))
}

fn c4_commutator() -> Check {
    let g = PeriodicGrid::new(1, 8.0, 512).unwrap();
    let u = GridField::from_fn_scalar(g, |x| (PI * x[0] / 8.0).cos());
    let mut notes = Vec::new();
    for beta in [0.5, 0.7] {
        let b = holder_sample_vector(beta, &g, 13, 1.0, None);
        let rep = commutator_report(&b, &u, beta, 2.0, 2..=g.max_level() - 1).map_err(|e| e.to_string())?;
        ensure((rep.slope + beta).abs() <= 0.2, format!("beta={beta}: slope {}", rep.slope))?;
        notes.push(format!("beta={beta} slope {:.3}", rep.slope));
    }
    Ok(notes.join(", "))
}

fn c5_resolvent() -> Check {
    let g1 = PeriodicGrid::new(1, 8.0, 128).unwrap();
    let q1 = build_quadrature(&shipped::sde_1d(), 10).unwrap();
    let id1 = SigmaField::identity(1);

    let w = PI / 8.0 * 6.0;
    let f = GridField::from_fn_scalar(g1, |x| (w * x[0]).cos());
    let zero = GridField::zeros(g1, FieldShape::Vector);
    let sol = solve(&ResolventProblem::new(2.0, &zero, &f, &id1, &q1)).map_err(|e| e.to_string())?;
    let psi = symbol_psi(&q1, &DMat::identity(1), &DVec::scalar(w));
    let exact = f.scale(1.0 / (2.0 + psi));
    let e0 = sol.u.max_abs_diff(&exact) / exact.sup_norm();
    ensure(e0 <= 1e-8, format!("b=0 plane wave {e0:e}"))?;

    let g2 = PeriodicGrid::new(2, 8.0, 32).unwrap();
    let q2 = build_quadrature(&shipped::cylindrical_2d(), 10).unwrap();
    let xi = DVec::new2(3.0, -2.0) * (PI / 8.0);
    let v = DVec::new2(0.7, 0.4);
    let f2 = GridField::from_fn_scalar(g2, |x| xi.dot(x).cos());
    let bc = GridField::constant_vector(g2, &v);
    let sig = DMat::from_row_major(&[1.0, 0.2, -0.1, 0.9]);
    let s2 = SigmaField::constant(sig).unwrap();
    let lambda = 3.0;
    let sol = solve(&ResolventProblem::new(lambda, &bc, &f2, &s2, &q2)).map_err(|e| e.to_string())?;
    let d = lambda + symbol_psi(&q2, &sig, &xi);
    let e = v.dot(&xi);
    let exact = GridField::from_fn_scalar(g2, |x| {
        let t = xi.dot(x);
        (d * t.cos() - e * t.sin()) / (d * d + e * e)
    });
    let e1 = sol.u.max_abs_diff(&exact) / exact.sup_norm();
    ensure(e1 <= 1e-8, format!("constant-drift plane wave {e1:e}"))?;

    let mut worst_res = 0.0_f64;
    let b1 = holder_sample_vector(0.6, &g1, 7, 1.0, None);
    let prob = ResolventProblem::new(1.0, &b1, &b1, &id1, &q1);
    let s = find_lambda0(&prob, 1.0, 1e6).map_err(|e| e.to_string())?;
    ensure(s.residual_sup <= 1e-6 * b1.sup_norm(), format!("1-d residual {}", s.residual_sup))?;
    worst_res = worst_res.max(s.residual_sup / b1.sup_norm());
    let q2c = build_quadrature(&shipped::cylindrical_2d(), 6).unwrap();
    let b2 = holder_sample_vector(0.6, &g2, 8, 1.0, None);
    let id2 = SigmaField::identity(2);
    let prob2 = ResolventProblem::new(1.0, &b2, &b2, &id2, &q2c);
    let s2sol = find_lambda0(&prob2, 1.0, 1e6).map_err(|e| e.to_string())?;
    ensure(s2sol.residual_sup <= 1e-6 * b2.sup_norm(), format!("2-d residual {}", s2sol.residual_sup))?;
    worst_res = worst_res.max(s2sol.residual_sup / b2.sup_norm());

    let mut trends = Vec::new();
    for (spec, amp) in [(shipped::sde_1d(), 4.0), (shipped::isotropic_1d(), 2.0)] {
        let q = build_quadrature(&spec, 10).unwrap();
        let bh = holder_sample_vector(0.6, &g1, 10, amp, None);
        let probh = ResolventProblem::new(1.0, &bh, &bh, &id1, &q);
        let solh = find_lambda0(&probh, 1.0, 1e6).map_err(|e| e.to_string())?;
        let rep = apriori_report(&solh, &probh, 0.45, 0.6, 2.0).map_err(|e| e.to_string())?;
        let holder: Vec<f64> = rep.rows.iter().map(|r| r.holder_ratio).collect();
        let lp: Vec<f64> = rep.rows.iter().map(|r| r.ratio).collect();
        ensure(rep.holder_ratio_non_increasing, format!("{} Holder ratios {holder:?}", spec.name))?;
        ensure(lp.iter().all(|&r| r <= 2.0), format!("{} Lp ratios {lp:?}", spec.name))?;
        trends.push(format!(
            "a={} Holder {:.3}->{:.3} Lp {:.3}->{:.3}",
            q.alpha, holder[0], holder[2], lp[0], lp[2]
        ));
    }
    Ok(format!(
        "plane waves {e0:.1e}/{e1:.1e}, residual/|f| {worst_res:.1e}, apriori {}",
        trends.join(", ")
    ))
}

fn c6_zvonkin() -> Check {
    let mut notes = Vec::new();
    for fx in drifts::all() {
        let tr = fx.build(&ZvonkinOptions::default()).map_err(|e| format!("{}: {e}", fx.name))?;
        ensure(tr.sup_grad <= 0.5, format!("{} sup_grad {}", fx.name, tr.sup_grad))?;
        let det = tr.min_det();
        ensure(det > 0.0, format!("{} det {det}", fx.name))?;
        let mut rng = rng_from_seed(600);
        let l = fx.b.grid().half_period;
        let mut worst = 0.0_f64;
        for _ in 0..1000 {
            let x = DVec::from_slice(&(0..tr.dim()).map(|_| rng.random_range(-l..l)).collect::<Vec<_>>());
            let back = tr.invert_phi(&tr.phi(&x), 1e-12);
            worst = worst.max((back.x - x).norm());
        }
        ensure(worst <= 1e-8, format!("{} round trip {worst:e}", fx.name))?;
        notes.push(format!("{} lambda {} grad {:.3}", fx.name, tr.lambda, tr.sup_grad));
    }
    Ok(notes.join("; "))
}

fn c7_picard() -> Check {
    let m = sde_model(1.0, SigmaField::identity(1));
    let mut sums = [0.0; 5];
    let mut counts = [0usize; 5];
    let mut window = f64::INFINITY;
    for seed in 0..100 {
        let p = sde_path(7000 + seed);
        let prob = SdeProblem::new(&m, &p, DVec::scalar(0.25), 1.0, 1.0 / 128.0);
        let sol = picard_solve(&prob).map_err(|e| e.to_string())?;
        window = window.min(sol.window_length);
        for (k, n) in (2..=6).enumerate() {
            for r in sol.contraction_ratios(n, 1e-11) {
                sums[k] += r;
                counts[k] += 1;
            }
        }
    }
    let means: Vec<f64> = sums.iter().zip(&counts).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
    ensure(counts.iter().all(|&c| c > 0), format!("no ratios sampled {counts:?}"))?;
    ensure(means.iter().all(|&r| r <= 0.6), format!("mean ratios {means:?}"))?;
    let shown: Vec<String> = means.iter().map(|r| format!("{r:.3}")).collect();
    Ok(format!("mean ratios n=2..6 [{}], smallest window {window}", shown.join(", ")))
}

fn c8_strong_uniqueness() -> Check {
    let m0 = sde_model(0.0, SigmaField::identity(1));
    let mut exact = 0.0_f64;
    for seed in 0..5 {
        let p = sde_path(8000 + seed);
        let x0 = DVec::scalar(0.3);
        let sol = picard_solve(&SdeProblem::new(&m0, &p, x0, 1.0, 0.01)).map_err(|e| e.to_string())?;
        let b0 = Interpolant::new(&m0.transform.b, InterpMode::Spectral);
        let eu = euler_solve(&b0, &m0.transform.sigma, &p, &x0, 1.0, 0.01).map_err(|e| e.to_string())?;
        for (t, (x, y)) in sol.times.iter().zip(sol.x.iter().zip(&eu.x)) {
            let z = x0 + p.evaluate_z(*t).map_err(|e| e.to_string())?;
            exact = exact.max((*x - z).norm()).max((*y - z).norm());
        }
    }
    ensure(exact <= 1e-13, format!("b=0 error {exact:e}"))?;

    let m = sde_model(1.0, SigmaField::identity(1));
    let b = Interpolant::new(&m.transform.b, InterpMode::Spectral);
    let dt0 = 1.0 / 64.0;
    let mut worst = 0.0_f64;
    for seed in 0..50 {
        let p = sde_path(8100 + seed);
        let x0 = DVec::scalar(-0.5 + 0.02 * seed as f64);
        let fine = picard_solve(&SdeProblem::new(&m, &p, x0, 1.0, dt0 / 16.0)).map_err(|e| e.to_string())?;
        let eu = euler_solve(&b, &m.transform.sigma, &p, &x0, 1.0, dt0 / 16.0).map_err(|e| e.to_string())?;
        worst = worst.max(fine.sup_distance(&eu));
    }
    ensure(worst <= 1e-3, format!("Picard vs Euler {worst:e}"))?;
    Ok(format!("b=0 error {exact:.1e}, Picard vs Euler at dt/16 {worst:.2e}"))
}

fn c9_flow() -> Check {
    let g = PeriodicGrid::new(1, 8.0, 128).unwrap();
    let w = PI / 4.0;
    let sfield = GridField::from_fn_matrix(g, |x| DMat::from_row_major(&[1.0 + 0.2 / w * (w * x[0]).sin()]));
    let sigma = SigmaField::variable(sfield).unwrap();
    let m = sde_model(1.0, sigma);
    let a4 = m.transform.require_a4().map_err(|e| e.to_string())?;
    let mut min_det = f64::INFINITY;
    for seed in 0..100 {
        let p = sde_path(9000 + seed);
        let x0 = DVec::scalar(-1.0 + 0.02 * seed as f64);
        let prob = SdeProblem::new(&m, &p, x0, 1.0, 1.0 / 64.0);
        let (_, jac) = flow_jacobian(&prob, 1e-3).map_err(|e| e.to_string())?;
        ensure(jac[0] == DMat::identity(1), format!("grad X_0 = {:?}", jac[0]))?;
        min_det = jac.iter().map(|j| j.det()).fold(min_det, f64::min);
    }
    ensure(min_det > 0.0, format!("min det {min_det}"))?;
    Ok(format!("r0 {:.2} >= R {}, min det {min_det:.3}", a4.r0, a4.support_radius))
}

fn c10_malliavin() -> Check {
    let m = sde_model(1.0, SigmaField::identity(1));
    let mut rng = rng_from_seed(1010);
    let mut worst = 0.0_f64;
    for k in 0..50 {
        let p = sde_path(10_000 + k);
        let prob = SdeProblem::new(&m, &p, DVec::scalar(rng.random_range(-1.0..1.0)), 1.0, 1.0 / 128.0);
        let r = rng.random_range(0.05..0.95);
        let mag = rng.random_range(0.13..1.0);
        let z = DVec::scalar(if rng.random::<bool>() { mag } else { -mag });
        let a = malliavin_insertion(&prob, r, &z).map_err(|e| e.to_string())?;
        let b = malliavin_recursive(&prob, r, &z).map_err(|e| e.to_string())?;
        let d = a.sup_distance(&b) / (1.0 + z.norm());
        worst = worst.max(d);
    }
    ensure(worst <= 1e-4, format!("route gap {worst:e}"))?;
    let paths: Vec<JumpPath> = (0..20).map(|k| sde_path(10_100 + k)).collect();
    let r_grid = [0.05, 0.15, 0.25, 0.35, 0.45];
    let rep = derivative_bound_report(&m, &paths, &DVec::scalar(0.1), 0.5, 1.0 / 128.0, &r_grid, 8)
        .map_err(|e| e.to_string())?;
    let ratio = rep.rows.iter().map(|r| r.max_ratio_after_3).fold(0.0, f64::max);
    ensure(rep.bounded, format!("unbounded f_hat {:?}", rep.rows))?;
    ensure(rep.non_exploding && ratio <= 1.1, format!("ratio {ratio}"))?;
    Ok(format!("route gap {worst:.1e}, max ratio n>=3 {ratio:.4}, constant {:.4}", rep.constant))
}

fn c11_path_by_path() -> Check {
    let g = PeriodicGrid::new(1, 8.0, 128).unwrap();
    let x0 = DVec::scalar(0.1);
    let paths: Vec<JumpPath> = (0..20)
        .map(|k| sample_jump_path(&shipped::sde_1d(), 1.0, 0.05, 11_000 + k).unwrap())
        .collect();

    let zero = Interpolant::new(&GridField::zeros(g, FieldShape::Vector), InterpMode::Spectral);
    let rep0 = uniqueness_experiment(&zero, 1.2, 0.5, &paths[..3], &x0, 1.0, &LadderOptions::default())
        .map_err(|e| e.to_string())?;
    ensure(rep0.max_pair_distance == 0.0, format!("b=0 distance {}", rep0.max_pair_distance))?;
    let v = 0.75;
    let cst = Interpolant::new(&GridField::constant_vector(g, &DVec::scalar(v)), InterpMode::Spectral);
    let mut cerr = 0.0_f64;
    for s in OdeScheme::ALL {
        let run = solve_random_ode(&cst, &paths[0], &x0, 1.0, s, 1.0 / 64.0).map_err(|e| e.to_string())?;
        for (t, z) in run.times.iter().zip(&run.z) {
            cerr = cerr.max((z[0] - x0[0] - v * t).abs());
        }
    }
    ensure(cerr <= 1e-13, format!("constant drift error {cerr:e}"))?;

    let b = Interpolant::new(&holder_sample_vector(0.5, &g, 3, 0.5, None), InterpMode::Spectral);
    let opts = LadderOptions {
        dt0: 1.0 / 512.0,
        ..LadderOptions::default()
    };
    let rep = uniqueness_experiment(&b, 1.2, 0.5, &paths, &x0, 1.0, &opts).map_err(|e| e.to_string())?;
    ensure(rep.hypothesis_holds, "beta outside the hypothesis regime")?;
    ensure(
        rep.verdict == "consistent-with-uniqueness",
        format!("max pair distance {:e}", rep.max_pair_distance),
    )?;
    Ok(format!(
        "20 paths, max pair distance {:.1e}, constant drift error {cerr:.1e}",
        rep.max_pair_distance
    ))
}

#[test]
fn acceptance_criteria() {
    let outcomes = vec![
        run(1, "measure certification", 5.0, c1_measures),
        run(2, "Littlewood-Paley identities", 10.0, c2_littlewood_paley),
        run(3, "Bernstein lower bound", 60.0, c3_bernstein),
        run(4, "commutator decay", 30.0, c4_commutator),
        run(5, "resolvent correctness", 60.0, c5_resolvent),
        run(6, "Zvonkin transform", 60.0, c6_zvonkin),
        run(7, "Picard contraction", 300.0, c7_picard),
        run(8, "strong uniqueness", 300.0, c8_strong_uniqueness),
        run(9, "flow Jacobian", 300.0, c9_flow),
        run(10, "Malliavin derivative", 600.0, c10_malliavin),
        run(11, "path-by-path uniqueness", 300.0, c11_path_by_path),
    ];
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.pass || o.secs >= o.limit)
        .map(|o| format!("{} ({}): {:.1}s, {}", o.id, o.name, o.secs, o.detail))
        .collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
