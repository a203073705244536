//! Small numerical utilities shared by the modules: 1-d adaptive quadrature,
//! Gauss–Legendre rules, log-spaced sweeps, regression slopes and seed mixing.

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
// Gauss weights attach to the odd-indexed Kronrod nodes (1, 3, 5, 7).
const GK_WEIGHTS_G: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * GK_WEIGHTS_K[7];
    let mut g = fc * GK_WEIGHTS_G[3];
    for i in 0..7 {
        let dx = h * GK_NODES[i];
        let s = f(c - dx) + f(c + dx);
        k += GK_WEIGHTS_K[i] * s;
        if i % 2 == 1 {
            g += GK_WEIGHTS_G[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// Subdivides the interval with the largest error estimate until the summed
/// estimate drops below `max(abs_tol, rel_tol·|I|)` or `max_intervals` is hit.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let max_intervals = 4000;
    let mut intervals = vec![{
        let (v, e) = gauss_kronrod_15(f, a, b);
        (a, b, v, e)
    }];
    loop {
        let total: f64 = intervals.iter().map(|iv| iv.2).sum();
        let err: f64 = intervals.iter().map(|iv| iv.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) || intervals.len() >= max_intervals {
            return total;
        }
        let (idx, _) = intervals
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = intervals.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gauss_kronrod_15(f, lo, mid);
        let (v2, e2) = gauss_kronrod_15(f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
    }
}

/// Integrates `f(s)` for `s ∈ [a, b]`, `0 < a < b`, in the variable `t = ln s`.
/// Power-law singularities at the origin become smooth exponentials.
pub fn integrate_log(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    assert!(a > 0.0 && b >= a);
    let g = |t: f64| {
        let s = t.exp();
        f(s) * s
    };
    integrate(&g, a.ln(), b.ln(), rel_tol, 0.0)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// `n` log-spaced points strictly inside `(lo, hi)` (cell midpoints in log scale).
pub fn log_spaced_open(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * (i as f64 + 0.5) / n as f64).exp())
        .collect()
}

/// `n ≥ 2` log-spaced points including both endpoints.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// SplitMix64 finalizer; derives the seed of member `k` of a batch from the
/// master seed as `mix(master ^ mix(k + 1))`.
pub fn derive_seed(master: u64, k: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(master ^ mix(k.wrapping_add(1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_polynomial_exact() {
        let v = integrate(&|x| x.powi(6) - 2.0 * x, 0.0, 2.0, 1e-14, 0.0);
        assert!((v - (128.0 / 7.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn log_integration_handles_power_singularity() {
        // ∫_{1e-8}^1 s^{-0.7} ds = (1 - 1e-8^{0.3}) / 0.3
        let v = integrate_log(&|s| s.powf(-0.7), 1e-8, 1.0, 1e-13);
        let exact = (1.0 - 1e-8_f64.powf(0.3)) / 0.3;
        assert!((v - exact).abs() / exact < 1e-12);
    }

    #[test]
    fn gauss_legendre_integrates_degree_2n_minus_1() {
        for n in 1..10 {
            let rule = gauss_legendre(n);
            let deg = 2 * n - 1;
            let v: f64 = rule.iter().map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            // ∫_{-1}^{1} x^{deg-1} dx, deg-1 even
            let exact = 2.0 / deg as f64;
            assert!((v - exact).abs() < 1e-13, "n={n} got {v}");
            let total: f64 = rule.iter().map(|(_, w)| w).sum();
            assert!((total - 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| -0.7 * v + 2.0).collect();
        let (s, c) = linear_fit(&x, &y);
        assert!((s + 0.7).abs() < 1e-14 && (c - 2.0).abs() < 1e-14);
    }

    #[test]
    fn derived_seeds_distinct() {
        let seeds: std::collections::BTreeSet<u64> = (0..1000).map(|k| derive_seed(7, k)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
