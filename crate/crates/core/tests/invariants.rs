use jumplab::fourier::{holder_sample_vector, FieldShape, GridField, InterpMode, Interpolant, PeriodicGrid};
use jumplab::levy_model::shipped;
use jumplab::levy_sampler::{sample_jump_path, JumpPath};
use jumplab::linalg::{DMat, DVec};
use jumplab::nonlocal_op::{build_quadrature, build_quadrature_with, symbol_psi, InnerBall, QuadOptions, SigmaField};
use jumplab::pbp_ode::{solve_random_ode, OdeScheme};
use jumplab::resolvent::{solve, ResolventProblem};
use jumplab::sde_engine::{picard_solve, SdeModel, SdeProblem};
use jumplab::zvonkin::{build_transform, ZvonkinOptions, ZvonkinTransform};
use proptest::prelude::*;
use std::sync::OnceLock;

fn transform() -> &'static ZvonkinTransform {
    static TR: OnceLock<ZvonkinTransform> = OnceLock::new();
    TR.get_or_init(|| {
        let g = PeriodicGrid::new(1, 8.0, 128).unwrap();
        let opts = QuadOptions {
            levels: 3,
            inner: InnerBall::Dropped,
            ..QuadOptions::default()
        };
        let q = build_quadrature_with(&shipped::sde_1d(), opts).unwrap();
        let b = holder_sample_vector(0.7, &g, 4, 1.0, Some(3));
        build_transform(&b, 0.7, &SigmaField::identity(1), &q, &ZvonkinOptions::default()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn path_csv_round_trip(seed in 0u64..10_000, eps in 0.05f64..0.5) {
        let p = sample_jump_path(&shipped::cylindrical_2d(), 1.0, eps, seed).unwrap();
        let back = JumpPath::from_csv(&p.to_csv()).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn symbol_is_even_and_nonnegative(x in -20.0f64..20.0, y in -20.0f64..20.0) {
        let q = build_quadrature(&shipped::cylindrical_2d(), 6).unwrap();
        let s = DMat::identity(2);
        let a = symbol_psi(&q, &s, &DVec::new2(x, y));
        let b = symbol_psi(&q, &s, &DVec::new2(-x, -y));
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn resolvent_is_linear_in_data(c in -3.0f64..3.0, lambda in 1.0f64..20.0) {
        let g = PeriodicGrid::new(1, 8.0, 64).unwrap();
        let q = build_quadrature(&shipped::sde_1d(), 6).unwrap();
        let b = holder_sample_vector(0.6, &g, 2, 0.3, None);
        let f = GridField::from_fn_scalar(g, |x| (0.5 * x[0]).sin());
        let s = SigmaField::identity(1);
        let u1 = solve(&ResolventProblem::new(lambda, &b, &f, &s, &q)).unwrap().u;
        let fc = f.scale(c);
        let uc = solve(&ResolventProblem::new(lambda, &b, &fc, &s, &q)).unwrap().u;
        prop_assert!(uc.max_abs_diff(&u1.scale(c)) <= 1e-8 * (1.0 + c.abs()));
    }

    #[test]
    fn phi_round_trip(x in -8.0f64..8.0) {
        let tr = transform();
        let x = DVec::scalar(x);
        let inv = tr.invert_phi(&tr.phi(&x), 1e-13);
        prop_assert!((inv.x - x).norm() <= 1e-11);
    }

    #[test]
    fn picard_tracks_the_inverse(seed in 0u64..500, x0 in -2.0f64..2.0) {
        let tr = transform().clone();
        let cutoff = tr.quad.inner_radius;
        let m = SdeModel::new(tr, cutoff).unwrap();
        let p = sample_jump_path(&shipped::sde_1d(), 0.5, cutoff, seed).unwrap();
        let sol = picard_solve(&SdeProblem::new(&m, &p, DVec::scalar(x0), 0.5, 1.0 / 64.0)).unwrap();
        prop_assert!(sol.inversion_max <= 1e-10);
        prop_assert!(sol.times.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(sol.x[0], DVec::scalar(x0));
    }

    #[test]
    fn random_ode_constant_drift_exact(seed in 0u64..500, v in -2.0f64..2.0, dt in 0.002f64..0.1) {
        let g = PeriodicGrid::new(1, 8.0, 32).unwrap();
        let b = Interpolant::new(&GridField::constant_vector(g, &DVec::scalar(v)), InterpMode::Spectral);
        let p = sample_jump_path(&shipped::sde_1d(), 1.0, 0.1, seed).unwrap();
        for s in OdeScheme::ALL {
            let r = solve_random_ode(&b, &p, &DVec::scalar(0.0), 1.0, s, dt).unwrap();
            for (t, z) in r.times.iter().zip(&r.z) {
                prop_assert!((z[0] - v * t).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn bundle_feeds_the_sde_engine() {
    let tr = transform().clone();
    let dir = std::env::temp_dir().join(format!("jumplab-bundle-{}", std::process::id()));
    tr.save_bundle(&dir).unwrap();
    let back = ZvonkinTransform::load_bundle(&dir).unwrap();
    std::fs::remove_dir_all(&dir).ok();
    let cutoff = tr.quad.inner_radius;
    let p = sample_jump_path(&shipped::sde_1d(), 1.0, cutoff, 3).unwrap();
    let a = SdeModel::new(tr, cutoff).unwrap();
    let b = SdeModel::new(back, cutoff).unwrap();
    let x0 = DVec::scalar(0.5);
    let sa = picard_solve(&SdeProblem::new(&a, &p, x0, 1.0, 1.0 / 64.0)).unwrap();
    let sb = picard_solve(&SdeProblem::new(&b, &p, x0, 1.0, 1.0 / 64.0)).unwrap();
    assert!(sa.sup_distance(&sb) <= 1e-12, "{}", sa.sup_distance(&sb));
}

#[test]
fn zero_field_shapes() {
    let g = PeriodicGrid::new(2, 4.0, 16).unwrap();
    let z = GridField::zeros(g, FieldShape::Matrix);
    assert_eq!(z.components(), 4);
    assert_eq!(z.sup_norm(), 0.0);
}
