//! Real special functions: Gamma, Riemann/Hurwitz zeta, the K-Bessel
//! function, Gauss–Legendre quadrature nodes.
//!
//! Everything here is standard double-precision numerics tuned for the
//! parameter ranges this crate actually uses (real `s` in `(1, 8]`,
//! positive real Gamma arguments, Bessel orders below 4), with relative
//! accuracy comfortably below `1e-12`.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Lanczos coefficients, `g = 7`, `n = 9` (max relative error ~2e-10 on the
/// real axis, in practice ~1e-13 for the arguments used here).
const LANCZOS_G: f64 = 7.0;
const LANCZOS_C: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the Gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires x > 0, got {x}");
    if x < 0.5 {
        // Reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x).
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_C[0];
    for (i, c) in LANCZOS_C.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Gamma function for `x > 0`.
pub fn gamma(x: f64) -> f64 {
    ln_gamma(x).exp()
}

/// `B_{2k} / (2k)!` for `k = 1..=7`, used by the Euler–Maclaurin tail.
const BERN_OVER_FACT: [f64; 7] = [
    8.333_333_333_333_333e-2,   // B2/2!
    -1.388_888_888_888_889e-3,  // B4/4!
    3.306_878_306_878_307e-5,   // B6/6!
    -8.267_195_767_195_768e-7,  // B8/8!
    2.087_675_698_786_81e-8,    // B10/10!
    -5.284_190_138_687_493e-10, // B12/12!
    1.338_253_653_068_468e-11,  // B14/14!
];

/// Hurwitz zeta tail `sum_{k>=0} (x+k)^{-s}` by Euler–Maclaurin, valid for
/// real `s > 1` and `x >= 10` (error far below 1e-15 there for `s <= 8`).
pub fn hurwitz_zeta_tail(s: f64, x: f64) -> f64 {
    debug_assert!(s > 1.0 && x >= 10.0);
    let mut acc = x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // term_j = B_{2j}/(2j)! * s (s+1) ... (s+2j-2) * x^{-s-2j+1}
    let mut rising = s; // (s)_1
    let mut xpow = x.powf(-s - 1.0);
    for (j, b) in BERN_OVER_FACT.iter().enumerate() {
        acc += b * rising * xpow;
        // extend rising factorial by two factors, x power by two.
        let m = 2.0 * (j as f64) + 1.0;
        rising *= (s + m) * (s + m + 1.0);
        xpow /= x * x;
    }
    acc
}

/// Riemann zeta for real `s > 1`.
pub fn zeta(s: f64) -> f64 {
    assert!(s > 1.0, "zeta(s) implemented for s > 1 only, got {s}");
    const N: usize = 24;
    let mut acc = 0.0;
    for n in 1..N {
        acc += (n as f64).powf(-s);
    }
    acc + hurwitz_zeta_tail(s, N as f64)
}

/// Modified Bessel function of the second kind `K_nu(x)`, real order
/// `nu >= 0`, argument `x > 0`.
///
/// Uses the integral representation
/// `K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt`.  The integrand is
/// entire, so Gauss–Legendre on the interval where it is above underflow
/// converges spectrally; for the ranges exercised here (`nu <= 4`,
/// `x >= 0.3`) the relative error is below `1e-13`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(nu >= 0.0 && x > 0.0, "bessel_k needs nu >= 0, x > 0");
    if x >= 750.0 {
        // K_nu(x) ~ sqrt(pi/2x) e^{-x}; underflows to zero here.
        return 0.0;
    }
    // Beyond t_max the integrand is < e^{-800 + nu t_max} ~ 1e-330.
    let t_max = (800.0_f64 / x).acosh();
    let (nodes, weights) = bessel_quadrature();
    let mut acc = 0.0;
    for (&u, &w) in nodes.iter().zip(weights) {
        // map [-1, 1] -> [0, t_max]
        let t = 0.5 * t_max * (u + 1.0);
        acc += w * (-x * t.cosh()).exp() * (nu * t).cosh();
    }
    0.5 * t_max * acc
}

/// Shared Gauss–Legendre rule for `bessel_k` (order 160 is generous for
/// every argument range the crate touches).
fn bessel_quadrature() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(160))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
///
/// Newton iteration on the Legendre recurrence; standard and exact to
/// machine precision for the orders used here (`n <= 256`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Chebyshev-based initial guess.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P'_n(x) by recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
