//! Indefinite binary quadratic forms: discriminants, Gauss reduction
//! cycles, class representatives, Pell units, and geodesic length data.
//!
//! A form `(a, b, c)` stands for `a x^2 + b x y + c y^2` with discriminant
//! `d = b^2 - 4ac`. Throughout this module `d` is positive, non-square and
//! `≡ 0, 1 (mod 4)`. The key classical facts used:
//!
//! - a form is *reduced* when `0 < b < sqrt(d)` and
//!   `sqrt(d) - b < 2|a| < sqrt(d) + b`; there are finitely many reduced
//!   forms of each discriminant, and the right-neighbor step `rho` permutes
//!   them in disjoint cycles, one cycle per `SL(2,Z)`-class;
//! - the product of the `rho`-step matrices around one cycle is the
//!   fundamental automorph of the starting form; its trace `t` and the
//!   companion `u` give the least solution of `t^2 - d u^2 = 4`, with
//!   `eps_d = (t + u sqrt(d))/2 > 1`;
//! - the closed geodesic attached to a class has length `2 log eps_d`, and
//!   the full (unoriented) union for discriminant `d` has total length
//!   `h(d) log eps_d`.
//!
//! Form coefficients are `i64` with `i128` intermediates (safe for
//! `d` up to `10^12`); Pell solutions and automorphs, which grow
//! exponentially, use `BigInt`.

use crate::exact::ln_big;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::collections::HashMap;
use thiserror::Error;

/// Why an integer fails to be a valid discriminant for this crate.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum DiscriminantError {
    #[error("discriminant must be positive, got {0}")]
    NotPositive(i64),
    #[error("discriminant must not be a perfect square, got {0} = {1}^2")]
    PerfectSquare(i64, i64),
    #[error("discriminant must be congruent to 0 or 1 mod 4, got {0} which is {1} mod 4")]
    BadResidue(i64, i64),
}

/// A valid discriminant `d > 0`, non-square, `d ≡ 0, 1 (mod 4)`, together
/// with its factorization `d = D b^2` into a fundamental discriminant `D`
/// and conductor `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Discriminant {
    d: i64,
    fundamental: i64,
    conductor: i64,
}

impl Discriminant {
    /// Validate `n` and compute the fundamental factorization.
    pub fn validate(n: i64) -> Result<Self, DiscriminantError> {
        if n <= 0 {
            return Err(DiscriminantError::NotPositive(n));
        }
        let r = isqrt_i64(n);
        if r * r == n {
            return Err(DiscriminantError::PerfectSquare(n, r));
        }
        let m = n % 4;
        if m != 0 && m != 1 {
            return Err(DiscriminantError::BadResidue(n, m));
        }
        // Squarefree kernel k: n = k * s^2. The fundamental discriminant is
        // k when k ≡ 1 (mod 4), and 4k otherwise.
        let mut k = 1i64;
        for (p, e) in factorize(n) {
            if e % 2 == 1 {
                k *= p;
            }
        }
        let fundamental = if k % 4 == 1 { k } else { 4 * k };
        let conductor = isqrt_i64(n / fundamental);
        debug_assert_eq!(fundamental * conductor * conductor, n);
        Ok(Discriminant { d: n, fundamental, conductor })
    }

    pub fn value(&self) -> i64 {
        self.d
    }

    /// The fundamental discriminant `D` with `d = D b^2`.
    pub fn fundamental(&self) -> i64 {
        self.fundamental
    }

    /// The conductor `b` with `d = D b^2`.
    pub fn conductor(&self) -> i64 {
        self.conductor
    }

    pub fn is_fundamental(&self) -> bool {
        self.conductor == 1
    }

    /// `floor(sqrt(d))`, used by the reduction inequalities.
    pub fn isqrt(&self) -> i64 {
        isqrt_i64(self.d)
    }
}

/// Integer square root, exact.
pub fn isqrt_i64(n: i64) -> i64 {
    debug_assert!(n >= 0);
    let mut r = (n as f64).sqrt() as i64;
    while r > 0 && r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// Trial-division factorization of `|n|` into `(prime, exponent)` pairs.
pub fn factorize(n: i64) -> Vec<(i64, u32)> {
    let mut n = n.abs();
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    let mut push = |p: i64, n: &mut i64| {
        if *n % p == 0 {
            let mut e = 0;
            while *n % p == 0 {
                *n /= p;
                e += 1;
            }
            out.push((p, e));
        }
    };
    push(2, &mut n);
    push(3, &mut n);
    let mut p = 5i64;
    while p * p <= n {
        push(p, &mut n);
        push(p + 2, &mut n);
        p += 6;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

/// A primitive integral binary quadratic form `(a, b, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QuadForm {
    pub a: i64,
    pub b: i64,
    pub c: i64,
}

impl QuadForm {
    pub fn new(a: i64, b: i64, c: i64) -> Self {
        QuadForm { a, b, c }
    }

    /// `b^2 - 4ac`, computed in `i128` to avoid overflow.
    pub fn discriminant(&self) -> i128 {
        let (a, b, c) = (self.a as i128, self.b as i128, self.c as i128);
        b * b - 4 * a * c
    }

    pub fn is_primitive(&self) -> bool {
        gcd3(self.a, self.b, self.c) == 1
    }

    /// Negated form `(-a, -b, -c)`; same axis, opposite orientation.
    pub fn neg(&self) -> Self {
        QuadForm::new(-self.a, -self.b, -self.c)
    }

    /// Canonical representative of the pair `{q, -q}` (the one with
    /// `a > 0`); the unoriented geodesic depends only on this pair.
    pub fn abs(&self) -> Self {
        if self.a > 0 {
            *self
        } else {
            self.neg()
        }
    }

    /// Gauss-reduced test: `0 < b < sqrt(d)` and
    /// `sqrt(d) - b < 2|a| < sqrt(d) + b`, decided exactly in integers.
    pub fn is_reduced(&self) -> bool {
        let d = self.discriminant();
        if d <= 0 {
            return false;
        }
        let b = self.b as i128;
        if b <= 0 || b * b >= d {
            return false;
        }
        let ta = 2 * (self.a as i128).abs();
        // sqrt(d) < 2|a| + b  <=>  d < (2|a| + b)^2
        if d >= (ta + b) * (ta + b) {
            return false;
        }
        // 2|a| < sqrt(d) + b  <=>  2|a| - b < sqrt(d), trivially true when
        // 2|a| <= b.
        if ta > b && (ta - b) * (ta - b) >= d {
            return false;
        }
        true
    }

    /// Right-neighbor reduction step: `(a, b, c) -> (c, r, (r^2 - d)/4c)`
    /// with `r ≡ -b (mod 2|c|)` chosen in the standard window
    /// (`sqrt(d) - 2|c| < r < sqrt(d)` when `|c| < sqrt(d)`, else
    /// `-|c| < r <= |c|`).
    pub fn rho(&self) -> Self {
        let d = self.discriminant();
        let c = self.c as i128;
        let ac = c.abs();
        debug_assert!(ac > 0);
        let two_ac = 2 * ac;
        let r0 = (-(self.b as i128)).rem_euclid(two_ac); // in [0, 2|c|)
        let r = if ac * ac > d {
            if r0 <= ac {
                r0
            } else {
                r0 - two_ac
            }
        } else {
            let isq = isqrt_i64(d as i64) as i128;
            // Largest r ≡ r0 (mod 2|c|) with r <= floor(sqrt(d)); since d
            // is non-square this is exactly r < sqrt(d).
            r0 + two_ac * (isq - r0).div_euclid(two_ac)
        };
        let cc = (r * r - d) / (4 * c);
        QuadForm::new(self.c, r as i64, cc as i64)
    }

    /// The `SL(2,Z)` matrix of one `rho` step, `(0, -1; 1, s)` with
    /// `s = (b + r) / 2c`, satisfying `rho(q) = q ∘ step`.
    fn rho_step_matrix(&self) -> [[i64; 2]; 2] {
        let next = self.rho();
        let s = ((self.b as i128 + next.b as i128) / (2 * self.c as i128)) as i64;
        [[0, -1], [1, s]]
    }

    /// Apply the substitution `(x, y) -> m (x, y)^T`: returns `q ∘ m`.
    ///
    /// The axis of `q ∘ m` is the preimage under the Möbius action of `m`
    /// of the axis of `q`. Intermediates in `BigInt`; the result must fit
    /// `i64` (it does whenever the transported axis stays in a bounded
    /// region, which is how this crate uses it).
    pub fn transform(&self, m: &[[BigInt; 2]; 2]) -> QuadForm {
        let (a, b, c) = (BigInt::from(self.a), BigInt::from(self.b), BigInt::from(self.c));
        let (m11, m12, m21, m22) = (&m[0][0], &m[0][1], &m[1][0], &m[1][1]);
        let a2 = &a * m11 * m11 + &b * m11 * m21 + &c * m21 * m21;
        let b2 = BigInt::from(2) * (&a * m11 * m12 + &c * m21 * m22)
            + &b * (m11 * m22 + m12 * m21);
        let c2 = &a * m12 * m12 + &b * m12 * m22 + &c * m22 * m22;
        QuadForm::new(
            a2.to_i64().expect("transformed form coefficient overflows i64"),
            b2.to_i64().expect("transformed form coefficient overflows i64"),
            c2.to_i64().expect("transformed form coefficient overflows i64"),
        )
    }

    /// Gauss reduction: iterate `rho` until reduced.
    pub fn reduce(&self) -> QuadForm {
        let mut q = *self;
        // rho strictly decreases |a| until the reduced band is reached;
        // the iteration count is O(log max coefficient).
        for _ in 0..10_000 {
            if q.is_reduced() {
                return q;
            }
            q = q.rho();
        }
        panic!("reduction failed to terminate for {self:?}");
    }

    /// The full cycle of reduced forms through `self` (which must be
    /// reduced), in `rho` order starting at `self`.
    pub fn reduction_cycle(&self) -> Vec<QuadForm> {
        assert!(self.is_reduced(), "reduction_cycle requires a reduced form");
        let mut cycle = vec![*self];
        let mut q = self.rho();
        while q != *self {
            cycle.push(q);
            q = q.rho();
            assert!(cycle.len() < 1_000_000, "runaway reduction cycle");
        }
        cycle
    }

    /// Is `q` equivalent to `-q` (the attached geodesic then closes up on
    /// itself under orientation reversal)?
    pub fn is_ambiguous(&self) -> bool {
        let cycle = self.reduce().reduction_cycle();
        let neg_red = self.neg().reduce();
        cycle.contains(&neg_red)
    }
}

fn gcd2(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn gcd3(a: i64, b: i64, c: i64) -> i64 {
    gcd2(gcd2(a, b), c)
}

/// The fundamental automorph of a form: the generator of its stabilizer in
/// `SL(2,Z)`, with the attached Pell data.
#[derive(Debug, Clone)]
pub struct Automorph {
    /// Integer matrix `((t - b u)/2, -c u; a u, (t + b u)/2)`.
    pub m: [[BigInt; 2]; 2],
    /// Least `t > 0` with `t^2 - d u^2 = 4`.
    pub t: BigInt,
    /// Companion `u > 0`.
    pub u: BigInt,
}

impl Automorph {
    /// Determinant of the matrix (always 1).
    pub fn det(&self) -> BigInt {
        &self.m[0][0] * &self.m[1][1] - &self.m[0][1] * &self.m[1][0]
    }

    /// Check that the matrix fixes the given form exactly.
    pub fn fixes(&self, q: &QuadForm) -> bool {
        let (a, b, c) = (BigInt::from(q.a), BigInt::from(q.b), BigInt::from(q.c));
        let (m11, m12, m21, m22) = (&self.m[0][0], &self.m[0][1], &self.m[1][0], &self.m[1][1]);
        let a2 = &a * m11 * m11 + &b * m11 * m21 + &c * m21 * m21;
        let b2 = BigInt::from(2) * (&a * m11 * m12 + &c * m21 * m22)
            + &b * (m11 * m22 + m12 * m21);
        let c2 = &a * m12 * m12 + &b * m12 * m22 + &c * m22 * m22;
        a2 == a && b2 == b && c2 == c
    }
}

/// Least positive solution of `t^2 - d u^2 = 4`, via the product of the
/// reduction-step matrices around one cycle (exact integer arithmetic; the
/// trace of the cycle automorph is the fundamental `t`).
pub fn fundamental_pell(disc: &Discriminant) -> (BigInt, BigInt) {
    let q0 = some_reduced_form(disc);
    let mut m = [
        [BigInt::one(), BigInt::zero()],
        [BigInt::zero(), BigInt::one()],
    ];
    let mut q = q0;
    loop {
        let s = q.rho_step_matrix();
        m = mat_mul_i64(&m, &s);
        q = q.rho();
        if q == q0 {
            break;
        }
    }
    // Normalize sign in PSL(2,Z) so the trace is positive.
    let tr = &m[0][0] + &m[1][1];
    if tr.is_negative() {
        for row in &mut m {
            for e in row {
                *e = -&*e;
            }
        }
    }
    let t = &m[0][0] + &m[1][1];
    let u = &m[1][0] / BigInt::from(q0.a);
    debug_assert!(u.is_positive());
    debug_assert_eq!(&t * &t - BigInt::from(disc.value()) * &u * &u, BigInt::from(4));
    (t, u)
}

/// The fundamental automorph of `q` (primitive, of discriminant `d`):
/// matrix `((t - b u)/2, -c u; a u, (t + b u)/2)` for the least Pell
/// solution `(t, u)`.
pub fn fundamental_automorph(disc: &Discriminant, q: &QuadForm) -> Automorph {
    let (t, u) = fundamental_pell(disc);
    automorph_from_pell(q, &t, &u)
}

fn automorph_from_pell(q: &QuadForm, t: &BigInt, u: &BigInt) -> Automorph {
    let (a, b, c) = (BigInt::from(q.a), BigInt::from(q.b), BigInt::from(q.c));
    let m = [
        [(t - &b * u) / 2, -&c * u],
        [&a * u, (t + &b * u) / 2],
    ];
    Automorph { m, t: t.clone(), u: u.clone() }
}

fn mat_mul_i64(m: &[[BigInt; 2]; 2], s: &[[i64; 2]; 2]) -> [[BigInt; 2]; 2] {
    let s = [
        [BigInt::from(s[0][0]), BigInt::from(s[0][1])],
        [BigInt::from(s[1][0]), BigInt::from(s[1][1])],
    ];
    [
        [
            &m[0][0] * &s[0][0] + &m[0][1] * &s[1][0],
            &m[0][0] * &s[0][1] + &m[0][1] * &s[1][1],
        ],
        [
            &m[1][0] * &s[0][0] + &m[1][1] * &s[1][0],
            &m[1][0] * &s[0][1] + &m[1][1] * &s[1][1],
        ],
    ]
}

/// `log eps_d` for `eps_d = (t + u sqrt(d))/2`, computed from the exact
/// Pell pair with a magnitude-stable logarithm (relative error ~1e-15 even
/// when `t` has thousands of digits).
pub fn log_eps(disc: &Discriminant) -> f64 {
    let (t, u) = fundamental_pell(disc);
    log_eps_from_pell(disc.value(), &t, &u)
}

fn log_eps_from_pell(d: i64, t: &BigInt, u: &BigInt) -> f64 {
    // ln((t + u sqrt d)/2) = ln t + ln(1 + (u sqrt d)/t) - ln 2, with the
    // ratio evaluated through logs of the big integers.
    let ln_t = ln_big(t);
    let ratio = (ln_big(u) + 0.5 * (d as f64).ln() - ln_t).exp();
    ln_t + ratio.ln_1p() - std::f64::consts::LN_2
}

/// Any single reduced form of the given discriminant (the lexicographically
/// first by `(b, a)` in the enumeration order).
fn some_reduced_form(disc: &Discriminant) -> QuadForm {
    enumerate_reduced_forms(disc)
        .into_iter()
        .next()
        .expect("every valid discriminant has a reduced form")
}

/// All reduced primitive forms of discriminant `d`: `0 < b < sqrt(d)`,
/// `b ≡ d (mod 2)`, and `a c = (b^2 - d)/4` running over signed divisor
/// splittings that satisfy the reduction window.
pub fn enumerate_reduced_forms(disc: &Discriminant) -> Vec<QuadForm> {
    let d = disc.value();
    let isq = disc.isqrt();
    let mut out = Vec::new();
    let b0 = if d % 2 == 0 { 2 } else { 1 };
    let mut b = b0;
    while b <= isq {
        let n = (d - b * b) / 4; // a * c = -n, n > 0
        for m1 in divisors(n) {
            let m2 = n / m1;
            // Reduction window on |a| = m1: sqrt(d) - b < 2 m1 < sqrt(d) + b.
            let ta = 2 * m1 as i128;
            let (bi, di) = (b as i128, d as i128);
            if di >= (ta + bi) * (ta + bi) {
                continue;
            }
            if ta > bi && (ta - bi) * (ta - bi) >= di {
                continue;
            }
            if gcd3(m1, b, m2) != 1 {
                continue;
            }
            out.push(QuadForm::new(m1, b, -m2));
            out.push(QuadForm::new(-m1, b, m2));
        }
        b += 2;
    }
    out.sort();
    out
}

fn divisors(n: i64) -> Vec<i64> {
    debug_assert!(n > 0);
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut k = 1;
    while k * k <= n {
        if n % k == 0 {
            small.push(k);
            if k * k != n {
                large.push(n / k);
            }
        }
        k += 1;
    }
    large.reverse();
    small.extend(large);
    small
}

/// The classes of primitive forms of discriminant `d`: one representative
/// per reduction cycle (the lexicographically least `(a, b, c)` in the
/// cycle), plus the shared length data.
#[derive(Debug, Clone)]
pub struct ClassSet {
    pub disc: Discriminant,
    /// One representative per class, sorted lexicographically.
    pub reps: Vec<QuadForm>,
    /// Which representatives are ambiguous (equivalent to their negation).
    pub ambiguous: Vec<bool>,
    /// Least Pell solution of `t^2 - d u^2 = 4`.
    pub pell_t: BigInt,
    pub pell_u: BigInt,
    /// `log eps_d`.
    pub log_eps: f64,
}

impl ClassSet {
    /// The class number `h(d)`.
    pub fn h(&self) -> usize {
        self.reps.len()
    }

    /// Oriented total length `2 h(d) log eps_d` of the union of closed
    /// geodesics, and unoriented total length `h(d) log eps_d`.
    pub fn total_lengths(&self) -> (f64, f64) {
        let l = self.h() as f64 * self.log_eps;
        (2.0 * l, l)
    }
}

/// Enumerate all reduced forms, partition them into `rho`-cycles, and pick
/// one representative per cycle.
pub fn class_representatives(disc: &Discriminant) -> ClassSet {
    let all = enumerate_reduced_forms(disc);
    let mut index: HashMap<QuadForm, usize> = HashMap::with_capacity(all.len());
    for (i, q) in all.iter().enumerate() {
        index.insert(*q, i);
    }
    let mut seen = vec![false; all.len()];
    let mut reps = Vec::new();
    let mut cycle_count_check = 0usize;
    for (i, q0) in all.iter().enumerate() {
        if seen[i] {
            continue;
        }
        // Walk the cycle, marking members and tracking the lex-least.
        let mut best = *q0;
        let mut q = *q0;
        loop {
            let j = *index
                .get(&q)
                .expect("rho step left the reduced-form set");
            if seen[j] {
                break;
            }
            seen[j] = true;
            cycle_count_check += 1;
            if q < best {
                best = q;
            }
            q = q.rho();
        }
        reps.push(best);
    }
    debug_assert_eq!(cycle_count_check, all.len());
    reps.sort();
    let ambiguous = reps.iter().map(QuadForm::is_ambiguous).collect();
    let (pell_t, pell_u) = fundamental_pell(disc);
    let log_eps = log_eps_from_pell(disc.value(), &pell_t, &pell_u);
    ClassSet { disc: *disc, reps, ambiguous, pell_t, pell_u, log_eps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::str::FromStr;

    fn disc(d: i64) -> Discriminant {
        Discriminant::validate(d).unwrap()
    }

    #[test]
    fn validate_discriminant_accepts_and_factors() {
        let d5 = disc(5);
        assert_eq!((d5.value(), d5.fundamental(), d5.conductor()), (5, 5, 1));
        let d20 = disc(20);
        assert_eq!((d20.fundamental(), d20.conductor()), (5, 2));
        let d45 = disc(45);
        assert_eq!((d45.fundamental(), d45.conductor()), (5, 3));
        let d80 = disc(80);
        assert_eq!((d80.fundamental(), d80.conductor()), (5, 4));
        let d128 = disc(128);
        assert_eq!((d128.fundamental(), d128.conductor()), (8, 4));
        let d12 = disc(12);
        assert!(d12.is_fundamental());
    }

    #[test]
    fn validate_discriminant_rejects_with_reasons() {
        assert_eq!(Discriminant::validate(9), Err(DiscriminantError::PerfectSquare(9, 3)));
        assert_eq!(Discriminant::validate(-4), Err(DiscriminantError::NotPositive(-4)));
        assert_eq!(Discriminant::validate(0), Err(DiscriminantError::NotPositive(0)));
        assert_eq!(Discriminant::validate(7), Err(DiscriminantError::BadResidue(7, 3)));
        assert_eq!(Discriminant::validate(6), Err(DiscriminantError::BadResidue(6, 2)));
        assert_eq!(Discriminant::validate(16), Err(DiscriminantError::PerfectSquare(16, 4)));
    }

    #[test]
    fn reduction_spot_checks() {
        // (1,1,-1) with d=5 is reduced: 0 < 1 < sqrt5, sqrt5 - 1 < 2 < sqrt5 + 1.
        assert!(QuadForm::new(1, 1, -1).is_reduced());
        assert!(QuadForm::new(1, 2, -1).is_reduced()); // d = 8
        assert!(!QuadForm::new(1, -1, -1).is_reduced()); // b < 0
        // (-1,1,1) reduces into the cycle of (1,1,-1).
        let r = QuadForm::new(-1, 1, 1);
        assert!(r.is_reduced());
        let cyc = QuadForm::new(1, 1, -1).reduction_cycle();
        assert!(cyc.contains(&r));
        // reduce() is idempotent on reduced forms... up to landing in the
        // same cycle; on an already reduced form it is the identity.
        assert_eq!(QuadForm::new(1, 1, -1).reduce(), QuadForm::new(1, 1, -1));
        // A wildly unreduced form lands in the reduced band with the same
        // discriminant.
        let q = QuadForm::new(3, 11, 5);
        assert_eq!(q.discriminant(), 61);
        let r = q.reduce();
        assert!(r.is_reduced());
        assert_eq!(r.discriminant(), 61);
    }

    #[test]
    fn cycles_match_reference_for_small_d() {
        // d = 5: single 2-cycle {(1,1,-1), (-1,1,1)}.
        let cs5 = class_representatives(&disc(5));
        assert_eq!(cs5.h(), 1);
        let cyc = cs5.reps[0].reduction_cycle();
        assert_eq!(cyc.len(), 2);
        assert!(cyc.contains(&QuadForm::new(1, 1, -1)));
        assert!(cyc.contains(&QuadForm::new(-1, 1, 1)));
        // d = 8.
        let cs8 = class_representatives(&disc(8));
        assert_eq!(cs8.h(), 1);
        let cyc = cs8.reps[0].reduction_cycle();
        assert_eq!(cyc.len(), 2);
        assert!(cyc.contains(&QuadForm::new(1, 2, -1)));
        // d = 12: two 2-cycles.
        let cs12 = class_representatives(&disc(12));
        assert_eq!(cs12.h(), 2);
        // d = 40: a 6-cycle and a 2-cycle.
        let cs40 = class_representatives(&disc(40));
        assert_eq!(cs40.h(), 2);
        let lens: Vec<usize> = cs40.reps.iter().map(|q| q.reduction_cycle().len()).collect();
        let mut lens = lens;
        lens.sort();
        assert_eq!(lens, vec![2, 6]);
        let six = cs40
            .reps
            .iter()
            .find(|q| q.reduction_cycle().len() == 6)
            .unwrap()
            .reduction_cycle();
        assert!(six.contains(&QuadForm::new(-3, 2, 3)));
        assert!(six.contains(&QuadForm::new(2, 4, -3)));
    }

    #[test]
    fn class_numbers_match_reference() {
        // Independently computed by exhaustive reduced-form enumeration and
        // cycle partition at high precision.
        for (d, h) in [
            (5, 1),
            (8, 1),
            (12, 2),
            (13, 1),
            (17, 1),
            (20, 1),
            (21, 2),
            (24, 2),
            (40, 2),
            (44, 2),
            (45, 2),
            (60, 4),
            (61, 1),
            (105, 4),
            (148, 3),
            (229, 3),
            (236, 2),
            (240, 4),
        ] {
            assert_eq!(class_representatives(&disc(d)).h(), h, "h({d})");
        }
    }

    #[test]
    fn pell_solutions_match_reference() {
        for (d, t, u) in [
            (5i64, 3i64, 1i64),
            (8, 6, 2),
            (12, 4, 1),
            (13, 11, 3),
            (17, 66, 16),
            (20, 18, 4),
            (40, 38, 6),
            (61, 1523, 195),
            (73, 4_562_498, 534_000),
        ] {
            let (pt, pu) = fundamental_pell(&disc(d));
            assert_eq!(pt, BigInt::from(t), "t for d={d}");
            assert_eq!(pu, BigInt::from(u), "u for d={d}");
        }
    }

    #[test]
    fn pell_handles_huge_fundamental_units() {
        let (t, u) = fundamental_pell(&disc(661));
        assert_eq!(t, BigInt::from_str("3202449832523").unwrap());
        assert_eq!(u, BigInt::from_str("124560862095").unwrap());
        let (t, u) = fundamental_pell(&disc(1621));
        assert_eq!(t, BigInt::from_str("23267330432525342852015627").unwrap());
        assert_eq!(u, BigInt::from_str("577903134597288688851375").unwrap());
        // d = 9949: dozens of digits; check log eps against reference.
        let le = log_eps(&disc(9949));
        assert!((le - 162.4650619415274757).abs() < 1e-10, "log_eps(9949) = {le}");
    }

    #[test]
    fn log_eps_matches_reference() {
        for (d, want) in [
            (5, 0.962_423_650_119_206_9),
            (8, 1.762_747_174_039_086_1),
            (12, 1.316_957_896_924_816_7),
            (13, 2.389_526_434_574_218_6),
            (17, 4.189_425_094_522_202_6),
            (20, 2.887_270_950_357_620_7),
            (40, 3.636_892_918_464_133_6),
            (61, 7.328_436_921_772_875_1),
            (73, 15.333_380_838_516_575),
            (1621, 58.409_092_481_168_948),
        ] {
            let got = log_eps(&disc(d));
            assert!((got - want).abs() < 1e-11 * want.max(1.0), "log_eps({d}) = {got}, want {want}");
        }
    }

    #[test]
    fn automorph_has_det_one_and_fixes_its_form() {
        // Spec example: automorph of (1,1,-1) for d=5 is (1,1;1,2).
        let d5 = disc(5);
        let q = QuadForm::new(1, 1, -1);
        let aut = fundamental_automorph(&d5, &q);
        assert_eq!(aut.m[0][0], BigInt::from(1));
        assert_eq!(aut.m[0][1], BigInt::from(1));
        assert_eq!(aut.m[1][0], BigInt::from(1));
        assert_eq!(aut.m[1][1], BigInt::from(2));
        assert_eq!(aut.det(), BigInt::one());
        assert!(aut.fixes(&q));
        // Every class representative of a spread of discriminants.
        for d in [8, 12, 13, 40, 60, 105, 229] {
            let dd = disc(d);
            let cs = class_representatives(&dd);
            for rep in &cs.reps {
                let aut = fundamental_automorph(&dd, rep);
                assert_eq!(aut.det(), BigInt::one(), "det for d={d}");
                assert!(aut.fixes(rep), "automorph fixes rep for d={d}");
            }
        }
    }

    #[test]
    fn ambiguity_counts_match_reference() {
        for (d, count) in [(5, 1), (8, 1), (12, 0), (40, 2), (60, 0), (229, 1)] {
            let cs = class_representatives(&disc(d));
            let got = cs.ambiguous.iter().filter(|&&x| x).count();
            assert_eq!(got, count, "ambiguous classes for d={d}");
        }
    }

    #[test]
    fn total_lengths_doubling() {
        let cs = class_representatives(&disc(5));
        let (lo, lu) = cs.total_lengths();
        assert!((lu - 0.962_423_650_119_206_9).abs() < 1e-12);
        assert!((lo - 2.0 * lu).abs() < 1e-15);
        let cs40 = class_representatives(&disc(40));
        let (lo40, lu40) = cs40.total_lengths();
        assert!((lu40 - 2.0 * 3.636_892_918_464_133_6).abs() < 1e-11);
        assert!((lo40 - 2.0 * lu40).abs() < 1e-12);
    }

    #[test]
    fn reduced_enumeration_is_consistent() {
        // Every enumerated form is reduced, primitive, has the right
        // discriminant, and the cycle partition covers the whole set.
        for d in [5i64, 8, 12, 13, 40, 60, 105, 229, 240] {
            let dd = disc(d);
            let all = enumerate_reduced_forms(&dd);
            assert!(!all.is_empty());
            for q in &all {
                assert!(q.is_reduced(), "{q:?} not reduced, d={d}");
                assert!(q.is_primitive(), "{q:?} not primitive, d={d}");
                assert_eq!(q.discriminant(), d as i128);
            }
            let cs = class_representatives(&dd);
            let total: usize = cs.reps.iter().map(|q| q.reduction_cycle().len()).sum();
            assert_eq!(total, all.len(), "cycle partition covers all reduced forms, d={d}");
        }
    }

    #[test]
    fn rho_preserves_reducedness_and_discriminant() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let d = loop {
                let d = rng.gen_range(5i64..5000);
                if Discriminant::validate(d).is_ok() {
                    break d;
                }
            };
            let dd = disc(d);
            let all = enumerate_reduced_forms(&dd);
            let q = all[rng.gen_range(0..all.len())];
            let r = q.rho();
            assert!(r.is_reduced(), "rho left the reduced set: {q:?} -> {r:?} (d={d})");
            assert_eq!(r.discriminant(), d as i128);
        }
    }
}
