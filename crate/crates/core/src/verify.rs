//! Independent reference computations used by the self-test and the test
//! suites. Nothing here is called from the solver path; each routine is a
//! deliberately different (and slower) route to a quantity the library
//! computes elsewhere.

use std::f64::consts::PI;

/// `J_m(x)` by the ascending series with factorials accumulated directly.
/// Accurate while the terms do not cancel badly (roughly `x < 15`).
pub fn bessel_j_series(m: u32, x: f64) -> f64 {
    let half = x / 2.0;
    let mut sum = 0.0;
    let mut k_fact = 1.0;
    for k in 0..120u32 {
        if k > 0 {
            k_fact *= k as f64;
        }
        let mk_fact: f64 = (1..=(m + k)).map(|i| i as f64).product();
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let term = sign * half.powi((2 * k + m) as i32) / (k_fact * mk_fact);
        sum += term;
        if k > 4 && term.abs() < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// `J_m(x) = (1/π) ∫₀^π cos(mτ - x sin τ) dτ` by the trapezoid rule, which
/// converges geometrically for this periodic integrand.
pub fn bessel_j_integral(m: u32, x: f64) -> f64 {
    let panels = 400;
    let h = PI / panels as f64;
    let f = |tau: f64| (m as f64 * tau - x * tau.sin()).cos();
    let inner: f64 = (1..panels).map(|k| f(k as f64 * h)).sum();
    (inner + 0.5 * (f(0.0) + f(PI))) * h / PI
}

/// Scans from `start` in steps of 0.1 for the `n`-th sign change, then bisects.
/// Every zero of `J_m` exceeds `m`, so scans start at `m / 2` where the
/// function is comfortably above rounding noise.
fn nth_sign_change_root(f: impl Fn(f64) -> f64, start: f64, n: u32) -> f64 {
    let mut count = 0;
    let mut a = start;
    loop {
        let b = a + 0.1;
        assert!(b < 60.0, "zero {n} not found");
        if f(a).signum() != f(b).signum() {
            count += 1;
            if count == n {
                let (mut lo, mut hi) = (a, b);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid).signum() == f(lo).signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return 0.5 * (lo + hi);
            }
        }
        a = b;
    }
}

fn scan_start(m: u32) -> f64 {
    (0.5 * m as f64).max(0.05)
}

/// `n`-th positive zero of `J_m` by bisection on the ascending series.
pub fn bessel_zero_bisection(m: u32, n: u32) -> f64 {
    nth_sign_change_root(|x| bessel_j_series(m, x), scan_start(m), n)
}

/// `n`-th positive zero of `J_m` by bisection on the integral representation;
/// valid over the whole supported envelope.
pub fn bessel_zero_integral_bisection(m: u32, n: u32) -> f64 {
    nth_sign_change_root(|x| bessel_j_integral(m, x), scan_start(m), n)
}

/// Five-point central-difference Laplacian.
pub fn five_point_laplacian(f: impl Fn(&[f64; 2]) -> f64, p: &[f64; 2], h: f64) -> f64 {
    let c = f(p);
    let e = f(&[p[0] + h, p[1]]);
    let w = f(&[p[0] - h, p[1]]);
    let n = f(&[p[0], p[1] + h]);
    let s = f(&[p[0], p[1] - h]);
    (e + w + n + s - 4.0 * c) / (h * h)
}

/// Central difference of a scalar function of one variable.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Parameter Jacobian by central differences with step `1e-6 (1 + |θ_j|)`.
/// `eval` maps a parameter vector to the field values at a fixed point set.
pub fn finite_difference_jacobian(
    eval: impl Fn(&[f64]) -> Vec<f64>,
    theta: &[f64],
) -> Vec<Vec<f64>> {
    let rows = eval(theta).len();
    let mut jac = vec![vec![0.0; theta.len()]; rows];
    let mut probe = theta.to_vec();
    for j in 0..theta.len() {
        let h = 1e-6 * (1.0 + theta[j].abs());
        probe[j] = theta[j] + h;
        let plus = eval(&probe);
        probe[j] = theta[j] - h;
        let minus = eval(&probe);
        probe[j] = theta[j];
        for i in 0..rows {
            jac[i][j] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    jac
}

/// Amplification factor of one classical explicit Euler step on `c' = -a c`.
pub fn euler_factor(decay_rate: f64, dt: f64) -> f64 {
    1.0 - decay_rate * dt
}

/// Amplification factor of one classical Heun step on `c' = -a c`.
pub fn heun_factor(decay_rate: f64, dt: f64) -> f64 {
    let k = decay_rate * dt;
    1.0 - k + 0.5 * k * k
}

/// Observed order of accuracy from errors at step sizes `h` and `h / 2`.
pub fn observed_order(coarse_error: f64, fine_error: f64) -> f64 {
    (coarse_error / fine_error).log2()
}
