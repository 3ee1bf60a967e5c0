use plugwatt_core::inference::paired_t_test_on;
use plugwatt_core::stats::{student_t_cdf, student_t_quantile, student_t_two_tailed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

/// Normalizing constant Γ((ν+1)/2) / (√(νπ) Γ(ν/2)) by the Γ(x+1) = xΓ(x)
/// recursion from Γ(1) = 1 and Γ(1/2) = √π.
fn t_norm(df: u32) -> f64 {
    let mut ratio = if df % 2 == 1 { 1.0 / PI.sqrt() } else { PI.sqrt() / 2.0 };
    let mut nu = if df % 2 == 1 { 1 } else { 2 };
    while nu < df {
        ratio *= (nu as f64 + 1.0) / nu as f64;
        nu += 2;
    }
    ratio / (df as f64 * PI).sqrt()
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 50)
}

fn cdf_oracle(t: f64, df: u32) -> f64 {
    let c = t_norm(df);
    let nu = df as f64;
    let pdf = move |x: f64| c * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0);
    let half = adaptive_simpson(&pdf, 0.0, t.abs(), 1e-13);
    0.5 + t.signum() * half
}

#[test]
fn cdf_matches_numerical_integration() {
    let ts = [-10.0, -7.3, -4.0, -2.5, -1.0, -0.3, 0.0, 0.1, 0.7, 1.645, 1.96, 2.9, 5.5, 10.0];
    let mut worst = 0.0f64;
    for df in 1..=200u32 {
        for &t in &ts {
            let err = (student_t_cdf(t, df as f64) - cdf_oracle(t, df)).abs();
            worst = worst.max(err);
            assert!(err < 1e-8, "df {df} t {t}: err {err}");
        }
    }
    eprintln!("worst |cdf - oracle| = {worst:.2e}");
}

#[test]
fn quantile_inverts_cdf() {
    for df in [1.0, 2.0, 5.0, 30.0, 86.0, 200.0] {
        for p in [0.6, 0.9, 0.975, 0.995] {
            let q = student_t_quantile(p, df);
            assert!((student_t_cdf(q, df) - p).abs() < 1e-10);
        }
    }
}

#[test]
fn ci_coverage_over_monte_carlo_trials() {
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let truth = 2.5;
    let dist = Normal::new(truth, 4.0).unwrap();
    let trials = 10_000;
    let mut covered = 0;
    let mut rejected = 0;
    for i in 0..trials {
        let n = 5 + i % 40;
        let xs: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let r = paired_t_test_on(&xs, 50.0).unwrap();
        if r.ci95_watts[0] <= truth && truth <= r.ci95_watts[1] {
            covered += 1;
        }
        let centered: Vec<f64> = xs.iter().map(|x| x - truth).collect();
        if paired_t_test_on(&centered, 50.0).unwrap().p_two_tailed < 0.05 {
            rejected += 1;
        }
    }
    let coverage = covered as f64 / trials as f64;
    let size = rejected as f64 / trials as f64;
    eprintln!("coverage {coverage:.4}, null rejection {size:.4}");
    assert!((coverage - 0.95).abs() <= 0.02);
    assert!((size - 0.05).abs() <= 0.02);
}

#[test]
fn two_tailed_p_is_symmetric() {
    for df in [1.0, 3.0, 74.0] {
        for t in [0.5, 1.62, 3.0] {
            assert_eq!(student_t_two_tailed(t, df), student_t_two_tailed(-t, df));
        }
    }
}
