//! Upper half-plane geometry and the unit tangent bundle of the modular
//! surface.
//!
//! Points are `z = x + i y`, `y > 0`, with metric `(dx^2 + dy^2)/y^2`. The
//! group `SL(2,R)` acts by Möbius maps; `PSL(2,R)` acts simply transitively
//! on unit tangent vectors, so a *frame* (a group element) and a unit
//! tangent vector are interchangeable. The frame of a tangent vector is
//! built from the Iwasawa coordinates `g = n(x) a(y) R_psi`:
//!
//! - `n(x) = (1, x; 0, 1)`, `a(y) = (sqrt y, 0; 0, 1/sqrt y)`,
//!   `R_psi = (cos psi, -sin psi; sin psi, cos psi)`;
//! - `g` maps the upward tangent at `i` to the tangent at `x + i y` with
//!   direction angle `theta = pi/2 - 2 psi` (a Möbius map turns tangents by
//!   `-2 arg(c z + d)`, and for `R_psi` at `i` that argument is `psi`);
//! - Haar measure in these coordinates is `dx dy dpsi / y^2`, the fiber
//!   angle `psi` running over `[0, pi)`; the unit tangent bundle of the
//!   modular surface has total volume `pi^2 / 3`.
//!
//! Geodesics are vertical rays or semicircles centered on the real axis.
//! Their feet are kept as exact boundary points ([`crate::exact`]) so that
//! crossing decisions are integer-exact even when the endpoints came from
//! floating point; the `f64` coordinates of crossing points and angles are
//! good to roughly `1e-12` and compared with tolerance `1e-9` downstream.
//!
//! The chart used for the kernel Jacobian is
//! `Psi(t1, phi, t2) = a(e^{t1}) R_{phi/2} a(e^{-t2})`; its density against
//! Haar measure is `(1/2) |sin phi|`, which [`psi_density`] recovers
//! numerically as an independent check.

use crate::exact::{strictly_interlace, BoundaryPoint};
use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

/// Total Haar volume of the unit tangent bundle of the modular surface,
/// `pi^2 / 3` (base area `pi/3` times fiber measure `pi`).
pub const UNIT_TANGENT_VOLUME: f64 = PI * PI / 3.0;

/// A point `x + i y` of the upper half-plane (`y > 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        assert!(y > 0.0, "upper half-plane point needs y > 0, got y = {y}");
        Point { x, y }
    }
}

/// A unit tangent vector: base point plus direction angle `theta` in
/// `[0, 2pi)` measured from the positive `x`-axis (Euclidean angle; the
/// metric is conformal so angles agree).
#[derive(Debug, Clone, Copy)]
pub struct UnitTangent {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl UnitTangent {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        assert!(y > 0.0, "upper half-plane tangent needs y > 0, got y = {y}");
        UnitTangent { x, y, theta: theta.rem_euclid(2.0 * PI) }
    }

    pub fn base(&self) -> Point {
        Point { x: self.x, y: self.y }
    }
}

/// An element of `SL(2,R)` acting as `z -> (a z + b)/(c z + d)`, stored as
/// `f64` entries. Integer entries up to `2^53` are represented exactly, so
/// words in the modular group of moderate length stay exact.
#[derive(Debug, Clone, Copy)]
pub struct MoebiusMap {
    pub m: [[f64; 2]; 2],
}

impl MoebiusMap {
    pub fn identity() -> Self {
        MoebiusMap { m: [[1.0, 0.0], [0.0, 1.0]] }
    }

    pub fn from_integer(m: &[[i64; 2]; 2]) -> Self {
        MoebiusMap {
            m: [
                [m[0][0] as f64, m[0][1] as f64],
                [m[1][0] as f64, m[1][1] as f64],
            ],
        }
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// Matrix product `self * other` (apply `other` first).
    pub fn mul(&self, other: &MoebiusMap) -> MoebiusMap {
        let a = &self.m;
        let b = &other.m;
        MoebiusMap {
            m: [
                [
                    a[0][0] * b[0][0] + a[0][1] * b[1][0],
                    a[0][0] * b[0][1] + a[0][1] * b[1][1],
                ],
                [
                    a[1][0] * b[0][0] + a[1][1] * b[1][0],
                    a[1][0] * b[0][1] + a[1][1] * b[1][1],
                ],
            ],
        }
    }

    /// Inverse, assuming `det = 1`.
    pub fn inv(&self) -> MoebiusMap {
        let [[a, b], [c, d]] = self.m;
        MoebiusMap { m: [[d, -b], [-c, a]] }
    }

    /// Möbius action on a point.
    pub fn apply(&self, p: Point) -> Point {
        let [[a, b], [c, d]] = self.m;
        let den = (c * p.x + d) * (c * p.x + d) + (c * p.y) * (c * p.y);
        let x = ((a * p.x + b) * (c * p.x + d) + a * c * p.y * p.y) / den;
        let y = p.y * self.det() / den;
        Point::new(x, y)
    }

    /// Derivative action on a unit tangent: the direction angle changes by
    /// `-2 arg(c z + d)`.
    pub fn apply_tangent(&self, u: UnitTangent) -> UnitTangent {
        let p = self.apply(u.base());
        let [[_, _], [c, d]] = self.m;
        let arg = (c * u.y).atan2(c * u.x + d);
        UnitTangent::new(p.x, p.y, u.theta - 2.0 * arg)
    }
}

/// Iwasawa coordinates of `g` in `SL(2,R)` with `det g = 1`:
/// `g = n(x) a(y) R_psi`, returning `(x, y, psi)` with `psi` reduced to
/// `[0, pi)` (the `PSL` fiber).
pub fn iwasawa(g: &MoebiusMap) -> (f64, f64, f64) {
    let [[a, b], [c, d]] = g.m;
    let y = 1.0 / (c * c + d * d);
    let x = (a * c + b * d) * y;
    let psi = c.atan2(d).rem_euclid(PI);
    (x, y, psi)
}

/// The frame `n(x) a(y) R_psi`.
pub fn frame_from_iwasawa(x: f64, y: f64, psi: f64) -> MoebiusMap {
    let sy = y.sqrt();
    let (s, c) = psi.sin_cos();
    MoebiusMap {
        m: [
            [sy * c + x / sy * s, -sy * s + x / sy * c],
            [s / sy, c / sy],
        ],
    }
}

/// The frame carrying the upward tangent at `i` to the given unit tangent.
pub fn frame_of_tangent(u: &UnitTangent) -> MoebiusMap {
    frame_from_iwasawa(u.x, u.y, (FRAC_PI_2 - u.theta) / 2.0)
}

/// The unit tangent represented by a frame: base point from Iwasawa, and
/// direction `theta = pi/2 - 2 psi`.
pub fn tangent_of_frame(g: &MoebiusMap) -> UnitTangent {
    let (x, y, psi) = iwasawa(g);
    UnitTangent::new(x, y, FRAC_PI_2 - 2.0 * psi)
}

/// Hyperbolic distance, computed through
/// `cosh d = 1 + ((dx)^2 + (dy)^2) / (2 y1 y2)` with a log1p-stable
/// `arccosh` (accurate for nearby points).
pub fn dist(p: Point, q: Point) -> f64 {
    let dx = p.x - q.x;
    let dy = p.y - q.y;
    let e = (dx * dx + dy * dy) / (2.0 * p.y * q.y); // cosh d - 1
    (e + (e * (e + 2.0)).sqrt()).ln_1p()
}

/// The chart `Psi(t1, phi, t2) = a(e^{t1}) R_{phi/2} a(e^{-t2})` used to
/// parameterize pairs of crossing geodesic arcs.
pub fn psi_matrix(t1: f64, phi: f64, t2: f64) -> MoebiusMap {
    let (s, c) = (0.5 * phi).sin_cos();
    let e_diff = (0.5 * (t1 - t2)).exp();
    let e_sum = (0.5 * (t1 + t2)).exp();
    MoebiusMap {
        m: [[e_diff * c, -e_sum * s], [s / e_sum, c / e_diff]],
    }
}

/// Numerical density of the `Psi` chart against Haar measure
/// `dx dy dpsi / y^2`: the absolute Jacobian determinant of
/// `(t1, phi, t2) -> (x, y, psi)` times `1/y^2`, by central differences.
/// It should equal `(1/2) |sin phi|`; agreement is a strong consistency
/// check between the chart and the Iwasawa coordinates.
pub fn psi_density(t1: f64, phi: f64, t2: f64) -> f64 {
    let h = 1e-5;
    let col = |i: usize, delta: f64| -> [f64; 3] {
        let (mut a, mut b, mut c) = (t1, phi, t2);
        match i {
            0 => a += delta,
            1 => b += delta,
            _ => c += delta,
        }
        let (x, y, psi) = iwasawa(&psi_matrix(a, b, c));
        [x, y, psi]
    };
    let mut jac = [[0.0f64; 3]; 3];
    for i in 0..3 {
        let plus = col(i, h);
        let minus = col(i, -h);
        jac[0][i] = (plus[0] - minus[0]) / (2.0 * h);
        jac[1][i] = (plus[1] - minus[1]) / (2.0 * h);
        // The fiber angle lives on a circle of circumference pi; take the
        // difference along the short way so the branch cut at 0 ~ pi does
        // not corrupt the derivative.
        jac[2][i] = wrap_mod(plus[2] - minus[2], PI) / (2.0 * h);
    }
    let det = jac[0][0] * (jac[1][1] * jac[2][2] - jac[1][2] * jac[2][1])
        - jac[0][1] * (jac[1][0] * jac[2][2] - jac[1][2] * jac[2][0])
        + jac[0][2] * (jac[1][0] * jac[2][1] - jac[1][1] * jac[2][0]);
    let (_, y, _) = iwasawa(&psi_matrix(t1, phi, t2));
    det.abs() / (y * y)
}

/// Reduce `x` into `(-m/2, m/2]`.
fn wrap_mod(x: f64, m: f64) -> f64 {
    let r = x.rem_euclid(m);
    if r > m / 2.0 {
        r - m
    } else {
        r
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ArcError {
    #[error("geodesic needs two distinct boundary feet")]
    CoincidentFeet,
    #[error("segment endpoints coincide")]
    DegenerateSegment,
}

/// Parameter window along an arc (arc-length units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Window {
    /// The complete geodesic.
    Full,
    /// The closed sub-arc `[a, b]` in the arc's own parameterization.
    Interval(f64, f64),
}

impl Window {
    pub fn contains(&self, t: f64) -> bool {
        match *self {
            Window::Full => true,
            Window::Interval(a, b) => a <= t && t <= b,
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Window::Full => f64::INFINITY,
            Window::Interval(a, b) => b - a,
        }
    }
}

/// Cached floating-point shape of an arc.
#[derive(Debug, Clone, Copy)]
enum ArcShape {
    /// Semicircle with center `(m, 0)` and the given radius; `rightward`
    /// = motion from foot `m - R` to foot `m + R`.
    Circle { center: f64, radius: f64, rightward: bool },
    /// Vertical line at `x`; `upward` = motion toward `∞`.
    Vertical { x: f64, upward: bool },
}

/// An oriented geodesic (or sub-arc) of the upper half-plane.
///
/// The parameterization is by arc length: for semicircles
/// `z(t) = m + R(sigma tanh t + i sech t)` with `t = 0` at the apex and
/// `sigma = +1` for rightward motion; for verticals `z(t) = x + i e^{±t}`
/// with `t = 0` at height 1. Feet are exact; shape coordinates are `f64`.
#[derive(Debug, Clone)]
pub struct GeodesicArc {
    foot_minus: BoundaryPoint,
    foot_plus: BoundaryPoint,
    shape: ArcShape,
    pub window: Window,
}

impl GeodesicArc {
    /// Oriented geodesic from `foot_minus` to `foot_plus`.
    pub fn from_feet(
        foot_minus: BoundaryPoint,
        foot_plus: BoundaryPoint,
        window: Window,
    ) -> Result<Self, ArcError> {
        if foot_minus.eq_exact(&foot_plus) {
            return Err(ArcError::CoincidentFeet);
        }
        let shape = match (foot_minus.is_infinite(), foot_plus.is_infinite()) {
            (true, _) => ArcShape::Vertical { x: foot_plus.to_f64(), upward: false },
            (_, true) => ArcShape::Vertical { x: foot_minus.to_f64(), upward: true },
            _ => {
                let a = foot_minus.to_f64();
                let b = foot_plus.to_f64();
                ArcShape::Circle {
                    center: 0.5 * (a + b),
                    radius: 0.5 * (b - a).abs(),
                    rightward: b > a,
                }
            }
        };
        Ok(GeodesicArc { foot_minus, foot_plus, shape, window })
    }

    /// The axis of an indefinite form `(a, b, c)`: the geodesic between the
    /// roots of `a x^2 + b x + c`, oriented toward the attracting root
    /// `(-b + sqrt(d))/(2a)`.
    pub fn axis_of_form(q: &crate::bqf::QuadForm) -> Self {
        assert!(q.a != 0, "axis needs a != 0 (true whenever d is non-square)");
        let d = q.discriminant();
        assert!(d > 0, "axis needs positive discriminant");
        let plus = BoundaryPoint::quadratic(-q.b, 1, 2 * q.a, d);
        let minus = BoundaryPoint::quadratic(-q.b, -1, 2 * q.a, d);
        GeodesicArc::from_feet(minus, plus, Window::Full)
            .expect("distinct roots for non-square discriminant")
    }

    /// The oriented arc from `p1` to `p2`, with exact feet derived from the
    /// binary representation of the coordinates and window set to the
    /// parameter range `[t(p1), t(p2)]`.
    pub fn through_points(p1: Point, p2: Point) -> Result<Self, ArcError> {
        if p1 == p2 {
            return Err(ArcError::DegenerateSegment);
        }
        let mut arc = if p1.x == p2.x {
            let upward = p2.y > p1.y;
            let foot = boundary_from_f64(p1.x);
            let (fm, fp) = if upward {
                (foot, BoundaryPoint::infinity())
            } else {
                (BoundaryPoint::infinity(), foot)
            };
            GeodesicArc::from_feet(fm, fp, Window::Full)?
        } else {
            // Exact center and radius-squared over a common denominator:
            // feet = (P D ± sqrt(N)) / (D Q).
            let (x1, dx1) = f64_to_big_ratio(p1.x);
            let (y1, dy1) = f64_to_big_ratio(p1.y);
            let (x2, dx2) = f64_to_big_ratio(p2.x);
            let (y2, dy2) = f64_to_big_ratio(p2.y);
            let dcom = &dx1 * &dy1 * &dx2 * &dy2;
            let sx1 = &x1 * (&dcom / &dx1);
            let sy1 = &y1 * (&dcom / &dy1);
            let sx2 = &x2 * (&dcom / &dx2);
            let sy2 = &y2 * (&dcom / &dy2);
            let p = &sx1 * &sx1 + &sy1 * &sy1 - &sx2 * &sx2 - &sy2 * &sy2;
            let q = BigInt::from(2) * &dcom * (&sx1 - &sx2);
            let n = {
                let t = &sx1 * &q - &p * &dcom;
                let u = &sy1 * &q;
                &t * &t + &u * &u
            };
            let mut pd = &p * &dcom;
            let mut dq = &dcom * &q;
            let mut n = n;
            // The coordinate denominators are powers of two, so the triple
            // shares a large 2-power; strip it to keep components small.
            let v2 = |x: &BigInt| if x.is_zero() { u64::MAX } else { x.trailing_zeros().unwrap() };
            let v = v2(&pd).min(v2(&dq)).min(v2(&n) / 2);
            if v > 0 && v < u64::MAX {
                pd >>= v;
                dq >>= v;
                n >>= 2 * v;
            }
            let (fa, fb) = (
                BoundaryPoint::quadratic(pd.clone(), BigInt::from(-1), dq.clone(), n.clone()),
                BoundaryPoint::quadratic(pd, BigInt::from(1), dq, n),
            );
            // Orientation: rightward iff x2 > x1. The quadratic() call
            // normalizes the denominator sign, so sort the feet by value.
            let (fm, fp) = if p2.x > p1.x {
                if fa.to_f64() < fb.to_f64() {
                    (fa, fb)
                } else {
                    (fb, fa)
                }
            } else if fa.to_f64() < fb.to_f64() {
                (fb, fa)
            } else {
                (fa, fb)
            };
            GeodesicArc::from_feet(fm, fp, Window::Full)?
        };
        let t1 = arc.param_of(p1);
        let t2 = arc.param_of(p2);
        debug_assert!(t2 > t1 - 1e-12, "orientation should make t increase");
        arc.window = Window::Interval(t1, t2);
        Ok(arc)
    }

    pub fn foot_minus(&self) -> &BoundaryPoint {
        &self.foot_minus
    }

    pub fn foot_plus(&self) -> &BoundaryPoint {
        &self.foot_plus
    }

    /// Point at arc-length parameter `t`.
    pub fn point_at(&self, t: f64) -> Point {
        match self.shape {
            ArcShape::Circle { center, radius, rightward } => {
                let sigma = if rightward { 1.0 } else { -1.0 };
                Point::new(center + sigma * radius * t.tanh(), radius / t.cosh())
            }
            ArcShape::Vertical { x, upward } => {
                let sigma = if upward { 1.0 } else { -1.0 };
                Point::new(x, (sigma * t).exp())
            }
        }
    }

    /// Unit tangent at parameter `t`, pointing along the orientation.
    pub fn tangent_at(&self, t: f64) -> UnitTangent {
        let p = self.point_at(t);
        match self.shape {
            ArcShape::Circle { rightward, .. } => {
                let sigma = if rightward { 1.0 } else { -1.0 };
                let theta = (-t.tanh()).atan2(sigma / t.cosh());
                UnitTangent::new(p.x, p.y, theta)
            }
            ArcShape::Vertical { upward, .. } => {
                let theta = if upward { FRAC_PI_2 } else { 3.0 * FRAC_PI_2 };
                UnitTangent::new(p.x, p.y, theta)
            }
        }
    }

    /// Arc-length parameter of a point assumed to lie on the arc (for
    /// points off the arc this is the parameter of a nearby point; no
    /// projection is attempted).
    pub fn param_of(&self, p: Point) -> f64 {
        match self.shape {
            ArcShape::Circle { center, radius, rightward } => {
                let sigma = if rightward { 1.0 } else { -1.0 };
                let ratio = (radius / p.y).max(1.0);
                // arccosh, stable near 1
                let e = ratio - 1.0;
                let mag = (e + (e * (e + 2.0)).sqrt()).ln_1p();
                if sigma * (p.x - center) >= 0.0 {
                    mag
                } else {
                    -mag
                }
            }
            ArcShape::Vertical { upward, .. } => {
                let sigma = if upward { 1.0 } else { -1.0 };
                sigma * p.y.ln()
            }
        }
    }

    /// Translate by an integer Möbius map: feet move exactly, the window
    /// is re-anchored so that it covers the image of the old window.
    pub fn translate(&self, g: &[[BigInt; 2]; 2]) -> GeodesicArc {
        let fm = apply_integer_moebius(g, &self.foot_minus);
        let fp = apply_integer_moebius(g, &self.foot_plus);
        let mut out = GeodesicArc::from_feet(fm, fp, Window::Full)
            .expect("Möbius maps preserve distinctness of feet");
        if let Window::Interval(a, b) = self.window {
            let gm = MoebiusMap {
                m: [
                    [big_f64(&g[0][0]), big_f64(&g[0][1])],
                    [big_f64(&g[1][0]), big_f64(&g[1][1])],
                ],
            };
            let ta = out.param_of(gm.apply(self.point_at(a)));
            out.window = Window::Interval(ta, ta + (b - a));
        }
        out
    }
}

fn big_f64(x: &BigInt) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// The geodesic through a unit tangent, oriented along it, with `Full`
/// window. The tangent base point sits at parameter [`GeodesicArc::param_of`]
/// of itself (not at 0 in general).
pub fn geodesic_through(u: &UnitTangent) -> GeodesicArc {
    let c = u.theta.cos();
    if c.abs() < 1e-12 {
        let foot = boundary_from_f64(u.x);
        let upward = u.theta.sin() > 0.0;
        let (fm, fp) = if upward {
            (foot, BoundaryPoint::infinity())
        } else {
            (BoundaryPoint::infinity(), foot)
        };
        return GeodesicArc::from_feet(fm, fp, Window::Full).expect("distinct feet");
    }
    let center = u.x + u.y * u.theta.tan();
    let radius = u.y / c.abs();
    let (fm, fp) = if c > 0.0 {
        (boundary_from_f64(center - radius), boundary_from_f64(center + radius))
    } else {
        (boundary_from_f64(center + radius), boundary_from_f64(center - radius))
    };
    GeodesicArc::from_feet(fm, fp, Window::Full).expect("distinct feet")
}

/// A transversal crossing of two arcs.
#[derive(Debug, Clone, Copy)]
pub struct ArcCrossing {
    pub point: Point,
    /// Counterclockwise angle from the tangent of the first arc to the
    /// tangent of the second, in `(0, 2pi)`; reduce mod `pi` for
    /// orientation-free statistics.
    pub angle_ccw: f64,
    /// Crossing parameters on each arc.
    pub t1: f64,
    pub t2: f64,
}

/// Intersection point of two geodesic arcs, or `None` when the complete
/// geodesics do not cross (decided exactly from the feet) or the crossing
/// parameters fall outside either window.
pub fn intersect_arcs(g1: &GeodesicArc, g2: &GeodesicArc) -> Option<ArcCrossing> {
    if !strictly_interlace(&g1.foot_minus, &g1.foot_plus, &g2.foot_minus, &g2.foot_plus) {
        return None;
    }
    let point = match (&g1.shape, &g2.shape) {
        (
            ArcShape::Circle { center: m1, radius: r1, .. },
            ArcShape::Circle { center: m2, radius: r2, .. },
        ) => {
            let x = 0.5 * ((r1 * r1 - r2 * r2) / (m2 - m1) + m1 + m2);
            let y2 = r1 * r1 - (x - m1) * (x - m1);
            Point::new(x, y2.max(0.0).sqrt())
        }
        (ArcShape::Circle { center, radius, .. }, ArcShape::Vertical { x, .. })
        | (ArcShape::Vertical { x, .. }, ArcShape::Circle { center, radius, .. }) => {
            let y2 = radius * radius - (x - center) * (x - center);
            Point::new(*x, y2.max(0.0).sqrt())
        }
        // Two verticals share the foot at infinity and never interlace.
        (ArcShape::Vertical { .. }, ArcShape::Vertical { .. }) => unreachable!(),
    };
    let t1 = g1.param_of(point);
    let t2 = g2.param_of(point);
    if !g1.window.contains(t1) || !g2.window.contains(t2) {
        return None;
    }
    let th1 = g1.tangent_at(t1).theta;
    let th2 = g2.tangent_at(t2).theta;
    let angle_ccw = (th2 - th1).rem_euclid(2.0 * PI);
    Some(ArcCrossing { point, angle_ccw, t1, t2 })
}

/// Reduce an angle to `(0, pi)` for unoriented crossing statistics.
pub fn angle_mod_pi(angle: f64) -> f64 {
    let a = angle.rem_euclid(PI);
    if a == 0.0 {
        PI
    } else {
        a
    }
}

/// Exact Möbius action of an integer matrix on a boundary point.
pub fn apply_integer_moebius(g: &[[BigInt; 2]; 2], p: &BoundaryPoint) -> BoundaryPoint {
    let (al, be, ga, de) = (&g[0][0], &g[0][1], &g[1][0], &g[1][1]);
    match p {
        BoundaryPoint::Infinity => {
            if ga.is_zero() {
                BoundaryPoint::infinity()
            } else {
                BoundaryPoint::rational(al.clone(), ga.clone())
            }
        }
        BoundaryPoint::Finite { p, q, r, d } => {
            // (al (p + q sqrt d) + be r) / (ga (p + q sqrt d) + de r)
            let a = al * p + be * r;
            let b = al * q;
            let c = ga * p + de * r;
            let e = ga * q;
            let r2 = &c * &c - &e * &e * d;
            if r2.is_zero() {
                return BoundaryPoint::infinity();
            }
            let p2 = &a * &c - &b * &e * d;
            let q2 = &b * &c - &a * &e;
            BoundaryPoint::quadratic(p2, q2, r2, d.clone())
        }
    }
}

/// Is the point in the closed standard fundamental domain
/// `|x| <= 1/2, x^2 + y^2 >= 1`?
pub fn in_fundamental_domain(p: Point) -> bool {
    p.x.abs() <= 0.5 && p.x * p.x + p.y * p.y >= 1.0
}

/// Is the point in the open interior, with a safety margin?
pub fn strictly_inside_fundamental_domain(p: Point, margin: f64) -> bool {
    p.x.abs() < 0.5 - margin && p.x * p.x + p.y * p.y > 1.0 + margin
}

/// Reduce a point to the standard fundamental domain of the modular group,
/// returning the reduced point and the integer witness `g` with
/// `g z = z_reduced`. Boundary ties go to `x = -1/2` and to `x <= 0` on the
/// unit circle.
///
/// Valid for `y` down to about `1e-12` (the witness entries grow like
/// `1/sqrt(y)` and must stay exactly representable; they are returned as
/// `i64`).
pub fn reduce_to_fundamental_domain_int(p: Point) -> (Point, [[i64; 2]; 2]) {
    assert!(p.y > 0.0);
    let (mut x, mut y) = (p.x, p.y);
    let mut g = [[1i128, 0i128], [0, 1]];
    let mut steps = 0;
    loop {
        let n = x.round();
        if n != 0.0 {
            let ni = n as i128;
            // T^{-n}: row0 -= n * row1
            g[0][0] -= ni * g[1][0];
            g[0][1] -= ni * g[1][1];
            x -= n;
        }
        let nsq = x * x + y * y;
        if nsq < 1.0 {
            // S: z -> -1/z
            g = [[-g[1][0], -g[1][1]], [g[0][0], g[0][1]]];
            x = -x / nsq;
            y /= nsq;
        } else {
            break;
        }
        steps += 1;
        assert!(steps < 10_000, "fundamental-domain reduction did not terminate");
    }
    if x == 0.5 {
        g[0][0] -= g[1][0];
        g[0][1] -= g[1][1];
        x = -0.5;
    }
    if x > 0.0 && x * x + y * y == 1.0 {
        g = [[-g[1][0], -g[1][1]], [g[0][0], g[0][1]]];
        x = -x;
    }
    let gi = [
        [
            i64::try_from(g[0][0]).expect("witness entry overflow"),
            i64::try_from(g[0][1]).expect("witness entry overflow"),
        ],
        [
            i64::try_from(g[1][0]).expect("witness entry overflow"),
            i64::try_from(g[1][1]).expect("witness entry overflow"),
        ],
    ];
    (Point::new(x, y), gi)
}

/// [`reduce_to_fundamental_domain_int`] with the witness as a Möbius map.
pub fn reduce_to_fundamental_domain(p: Point) -> (Point, MoebiusMap) {
    let (q, g) = reduce_to_fundamental_domain_int(p);
    (q, MoebiusMap::from_integer(&g))
}

/// Exact rational boundary point equal to a finite `f64` (every finite
/// double is `± m 2^e`).
pub fn boundary_from_f64(x: f64) -> BoundaryPoint {
    let (num, den) = f64_to_big_ratio(x);
    BoundaryPoint::rational(num, den)
}

/// Decompose a finite `f64` as an exact fraction `num / den` in lowest
/// 2-power terms, `den > 0`.
fn f64_to_big_ratio(x: f64) -> (BigInt, BigInt) {
    assert!(x.is_finite(), "need a finite coordinate, got {x}");
    if x == 0.0 {
        return (BigInt::from(0), BigInt::from(1));
    }
    let bits = x.to_bits();
    let neg = bits >> 63 == 1;
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mantissa, mut exp) = if exp_bits == 0 {
        (frac, -1074i64) // subnormal
    } else {
        (frac | (1u64 << 52), exp_bits - 1075)
    };
    // Keep the fraction reduced: trailing zero bits of the mantissa move
    // into the exponent (1.0 becomes 1/1 rather than 2^52 / 2^52).
    let shift = mantissa.trailing_zeros() as i64;
    let mantissa = mantissa >> shift;
    exp += shift;
    let mut num = BigInt::from(mantissa);
    let mut den = BigInt::from(1);
    if exp >= 0 {
        num <<= exp as u64;
    } else {
        den <<= (-exp) as u64;
    }
    if neg {
        num = -num;
    }
    (num, den)
}
