//! Exact arithmetic for real quadratic irrationals.
//!
//! Geodesic feet on the boundary of the upper half-plane are numbers of the
//! form `(p + q sqrt(d)) / r` with integer `p, q, r` and `d >= 0`, together
//! with the point at infinity (feet of vertical geodesics). Whether two
//! geodesics cross is decided by whether their feet strictly interlace on
//! the boundary circle `R ∪ {∞}`; that is an integer invariant, so the
//! comparisons here are performed exactly by cross-multiplication and
//! squaring, never through floating point.
//!
//! The comparison of `a + b sqrt(m)` against `c + e sqrt(n)` needs two
//! nested squarings in the worst case (the inner one eliminating
//! `sqrt(m n)`); all intermediates are `BigInt`, so there is no overflow
//! regime. A fast `i128` path for the single-radical sign test
//! [`sign_linear_in_sqrt`] covers the enumeration hot loops.

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use std::cmp::Ordering;

/// Sign of `a + b*sqrt(d)` for `d >= 0`, computed exactly.
///
/// Uses checked `i128` arithmetic and falls back to `BigInt` when the
/// squarings would overflow. Returns -1, 0, or 1.
pub fn sign_linear_in_sqrt(a: i128, b: i128, d: i128) -> i32 {
    debug_assert!(d >= 0);
    if b == 0 || d == 0 {
        return sign_i128(a);
    }
    let sa = sign_i128(a);
    let sb = sign_i128(b);
    if sa == sb {
        return sa; // includes a == 0 handled above only when b == 0
    }
    if sa == 0 {
        return sb;
    }
    if sb == 0 {
        return sa;
    }
    // Opposite signs: compare a^2 against b^2 d.
    if let (Some(a2), Some(b2)) = (a.checked_mul(a), b.checked_mul(b)) {
        if let Some(b2d) = b2.checked_mul(d) {
            return match a2.cmp(&b2d) {
                Ordering::Greater => sa,
                Ordering::Less => sb,
                Ordering::Equal => 0,
            };
        }
    }
    let (ba, bb, bd) = (BigInt::from(a), BigInt::from(b), BigInt::from(d));
    match (&ba * &ba).cmp(&(&bb * &bb * &bd)) {
        Ordering::Greater => sa,
        Ordering::Less => sb,
        Ordering::Equal => 0,
    }
}

fn sign_i128(x: i128) -> i32 {
    match x.cmp(&0) {
        Ordering::Greater => 1,
        Ordering::Less => -1,
        Ordering::Equal => 0,
    }
}

fn sign_big(x: &BigInt) -> i32 {
    if x.is_zero() {
        0
    } else if x.is_positive() {
        1
    } else {
        -1
    }
}

/// Sign of `u + v*sqrt(w)` with `BigInt` operands, `w >= 0`.
fn sign_linear_in_sqrt_big(u: &BigInt, v: &BigInt, w: &BigInt) -> i32 {
    let su = sign_big(u);
    if v.is_zero() || w.is_zero() {
        return su;
    }
    let sv = sign_big(v);
    if su == 0 {
        return sv;
    }
    if su == sv {
        return su;
    }
    match (u * u).cmp(&(v * v * w)) {
        Ordering::Greater => su,
        Ordering::Less => sv,
        Ordering::Equal => 0,
    }
}

/// A point of the boundary circle `R ∪ {∞}`: either exactly
/// `(p + q sqrt(d)) / r` with `r > 0`, or infinity.
///
/// `d >= 0` is arbitrary (it may be a perfect square or carry square
/// factors); values with different `d` compare correctly against each
/// other. Rational numbers are represented with `q = 0`.
#[derive(Debug, Clone)]
pub enum BoundaryPoint {
    /// `(p + q sqrt(d)) / r`, with `r > 0`.
    Finite { p: BigInt, q: BigInt, r: BigInt, d: BigInt },
    /// The point at infinity (foot of every vertical geodesic).
    Infinity,
}

impl BoundaryPoint {
    /// The rational number `n / m` (`m != 0`).
    pub fn rational(n: impl Into<BigInt>, m: impl Into<BigInt>) -> Self {
        let n = n.into();
        let m = m.into();
        assert!(!m.is_zero(), "rational boundary point needs m != 0");
        let (p, r) = if m.is_negative() { (-n, -m) } else { (n, m) };
        BoundaryPoint::Finite { p, q: BigInt::from(0), r, d: BigInt::from(0) }
    }

    /// The quadratic irrational `(p + q sqrt(d)) / r` (`r != 0`, `d >= 0`).
    pub fn quadratic(
        p: impl Into<BigInt>,
        q: impl Into<BigInt>,
        r: impl Into<BigInt>,
        d: impl Into<BigInt>,
    ) -> Self {
        let (p, q, r, d) = (p.into(), q.into(), r.into(), d.into());
        assert!(!r.is_zero(), "quadratic boundary point needs r != 0");
        assert!(!d.is_negative(), "radicand must be nonnegative");
        let (p, q, r) = if r.is_negative() { (-p, -q, -r) } else { (p, q, r) };
        BoundaryPoint::Finite { p, q, r, d }
    }

    pub fn infinity() -> Self {
        BoundaryPoint::Infinity
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, BoundaryPoint::Infinity)
    }

    /// Floating-point approximation (infinity maps to `f64::INFINITY`).
    ///
    /// Small components are evaluated directly (exact for plain rationals
    /// within `f64` range); components too large for `f64` products go
    /// through logarithms of the magnitudes, which keeps ~1e-15 relative
    /// accuracy per term no matter how large the integers are.
    pub fn to_f64(&self) -> f64 {
        match self {
            BoundaryPoint::Infinity => f64::INFINITY,
            BoundaryPoint::Finite { p, q, r, d } => {
                let huge =
                    p.bits().max(r.bits()).max(q.bits() + d.bits() / 2) > 900;
                if !huge {
                    let p = big_to_f64(p);
                    let q = big_to_f64(q);
                    let r = big_to_f64(r);
                    let d = big_to_f64(d);
                    return (p + q * d.sqrt()) / r;
                }
                let ln_r = ln_big(r);
                let term = |x: &BigInt, extra: f64| -> f64 {
                    if x.is_zero() {
                        0.0
                    } else {
                        let s = if x.is_negative() { -1.0 } else { 1.0 };
                        s * (ln_big(&x.abs()) + extra - ln_r).exp()
                    }
                };
                let sqrt_part = if d.is_zero() { 0.0 } else { 0.5 * ln_big(d) };
                term(p, 0.0) + if d.is_zero() { 0.0 } else { term(q, sqrt_part) }
            }
        }
    }

    /// Exact total order on the finite reals, with `∞` greater than
    /// everything (adequate for interval logic; circular logic handles `∞`
    /// separately).
    pub fn cmp_exact(&self, other: &BoundaryPoint) -> Ordering {
        match (self, other) {
            (BoundaryPoint::Infinity, BoundaryPoint::Infinity) => Ordering::Equal,
            (BoundaryPoint::Infinity, _) => Ordering::Greater,
            (_, BoundaryPoint::Infinity) => Ordering::Less,
            (
                BoundaryPoint::Finite { p: p1, q: q1, r: r1, d: d1 },
                BoundaryPoint::Finite { p: p2, q: q2, r: r2, d: d2 },
            ) => {
                // (p1 + q1 sqrt(d1))/r1 - (p2 + q2 sqrt(d2))/r2, r1, r2 > 0:
                // sign of T + B sqrt(d1) - E sqrt(d2) with
                // T = p1 r2 - p2 r1, B = q1 r2, E = q2 r1.
                let t = p1 * r2 - p2 * r1;
                let b = q1 * r2;
                let e = q2 * r1;
                match sign_sum_two_radicals(&t, &b, d1, &(-e), d2) {
                    1 => Ordering::Greater,
                    -1 => Ordering::Less,
                    _ => Ordering::Equal,
                }
            }
        }
    }

    /// Exact equality of boundary points.
    pub fn eq_exact(&self, other: &BoundaryPoint) -> bool {
        self.cmp_exact(other) == Ordering::Equal
    }
}

/// Sign of `t + b sqrt(m) + e sqrt(n)` with `m, n >= 0`, exact.
fn sign_sum_two_radicals(t: &BigInt, b: &BigInt, m: &BigInt, e: &BigInt, n: &BigInt) -> i32 {
    // First the sign of s = b sqrt(m) + e sqrt(n).
    let bm_zero = b.is_zero() || m.is_zero();
    let en_zero = e.is_zero() || n.is_zero();
    let s_sign = match (bm_zero, en_zero) {
        (true, true) => 0,
        (true, false) => sign_big(e),
        (false, true) => sign_big(b),
        (false, false) => {
            let sb = sign_big(b);
            let se = sign_big(e);
            if sb == se {
                sb
            } else {
                // compare b^2 m against e^2 n
                match (b * b * m).cmp(&(e * e * n)) {
                    Ordering::Greater => sb,
                    Ordering::Less => se,
                    Ordering::Equal => 0,
                }
            }
        }
    };
    let t_sign = sign_big(t);
    if s_sign == 0 {
        return t_sign;
    }
    if t_sign == 0 || t_sign == s_sign {
        return s_sign;
    }
    // Opposite signs: compare t^2 against s^2 = b^2 m + e^2 n + 2 b e sqrt(m n).
    // t^2 - s^2 = U + V sqrt(W) with U = t^2 - b^2 m - e^2 n, V = -2 b e, W = m n.
    let u = t * t - b * b * m - e * e * n;
    let v = BigInt::from(-2) * b * e;
    let w = m * n;
    match sign_linear_in_sqrt_big(&u, &v, &w) {
        1 => t_sign,  // |t| > |s|
        -1 => s_sign, // |t| < |s|
        _ => 0,
    }
}

/// Convert a `BigInt` to `f64` without overflowing to infinity until the
/// value genuinely exceeds the `f64` range.
pub fn big_to_f64(x: &BigInt) -> f64 {
    // num-bigint's conversion already handles magnitude correctly.
    use num_traits::ToPrimitive;
    x.to_f64().unwrap_or(f64::NAN)
}

/// Natural logarithm of a positive `BigInt`, accurate to ~1e-15 relative
/// error regardless of magnitude (no overflow for huge Pell solutions).
pub fn ln_big(x: &BigInt) -> f64 {
    assert!(x.is_positive(), "ln_big needs a positive integer");
    let bits = x.bits();
    if bits <= 52 {
        return big_to_f64(x).ln();
    }
    // x = m * 2^k with m the top 52 bits.
    let k = bits - 52;
    let m = x >> k;
    big_to_f64(&m).ln() + (k as f64) * std::f64::consts::LN_2
}

/// Do the foot pairs `{a1, a2}` and `{b1, b2}` strictly interlace on the
/// boundary circle `R ∪ {∞}`?
///
/// Strict interlacing is exactly the condition for the two complete
/// geodesics to cross transversally at one interior point. Shared feet
/// (tangency at the boundary or identical geodesics) do not interlace.
pub fn strictly_interlace(
    a1: &BoundaryPoint,
    a2: &BoundaryPoint,
    b1: &BoundaryPoint,
    b2: &BoundaryPoint,
) -> bool {
    // Shared foot => not strict.
    for a in [a1, a2] {
        for b in [b1, b2] {
            if a.eq_exact(b) {
                return false;
            }
        }
    }
    match (a1.is_infinite(), a2.is_infinite()) {
        (true, true) => false, // degenerate pair
        (true, false) | (false, true) => {
            // Chord from finite foot `a` to ∞ (a vertical line): crosses
            // {b1,b2} iff `a` lies strictly between b1 and b2. If the b-pair
            // also contains ∞ the two verticals never cross.
            if b1.is_infinite() || b2.is_infinite() {
                return false;
            }
            let a = if a1.is_infinite() { a2 } else { a1 };
            let (lo, hi) = sorted(b1, b2);
            lo.cmp_exact(a) == Ordering::Less && a.cmp_exact(hi) == Ordering::Less
        }
        (false, false) => {
            if b1.is_infinite() || b2.is_infinite() {
                // Symmetric to the case above.
                let b = if b1.is_infinite() { b2 } else { b1 };
                let (lo, hi) = sorted(a1, a2);
                return lo.cmp_exact(b) == Ordering::Less && b.cmp_exact(hi) == Ordering::Less;
            }
            // All finite: interlace iff exactly one of b1, b2 lies in the
            // open interval (min a, max a).
            let (lo, hi) = sorted(a1, a2);
            let inside = |x: &BoundaryPoint| {
                lo.cmp_exact(x) == Ordering::Less && x.cmp_exact(hi) == Ordering::Less
            };
            inside(b1) != inside(b2)
        }
    }
}

fn sorted<'a>(
    x: &'a BoundaryPoint,
    y: &'a BoundaryPoint,
) -> (&'a BoundaryPoint, &'a BoundaryPoint) {
    if x.cmp_exact(y) == Ordering::Greater {
        (y, x)
    } else {
        (x, y)
    }
}
