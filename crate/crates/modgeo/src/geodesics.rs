//! Closed geodesics of a given discriminant on the modular surface.
//!
//! Each `SL(2,Z)`-class of primitive forms of discriminant `d` gives a
//! closed geodesic: the axis of any form in the class projects to a closed
//! curve whose flow period is `2 log eps_d`. This module realizes that
//! curve concretely as a chain of short sub-arcs, each carried by the axis
//! of an integer form whose axis passes near the fundamental domain.
//!
//! Walking instead of flowing along one fixed axis lift matters
//! numerically: a point at arc-length `t` from the apex of a fixed axis
//! has `x`-coordinate within `~e^{-2t}` of the axis foot, so beyond
//! `t ≈ 18` the position would collapse onto the foot in `f64`. The walk
//! advances at most [`MAX_SUBARC_LEN`] at a time, reduces the endpoint to
//! the fundamental domain, and transports the form by the exact integer
//! witness, so every stored coordinate stays of order one and the error
//! after a full period is ~1e-13 even for periods in the hundreds. The
//! walk must return exactly to its starting form after one period; that
//! integer equality is checked and is a strong joint test of the form
//! arithmetic, the Pell unit, and the geometry.

use crate::bqf::{class_representatives, ClassSet, Discriminant, DiscriminantError, QuadForm};
use crate::hyperbolic::{
    reduce_to_fundamental_domain_int, GeodesicArc, MoebiusMap, Point, UnitTangent, Window,
};
use crate::special::gauss_legendre;
use num_bigint::BigInt;
use std::f64::consts::PI;

/// Maximum sub-arc length used when folding a closed geodesic into the
/// fundamental domain.
pub const MAX_SUBARC_LEN: f64 = 1.0;

/// Arc-length offset from the axis apex to the `s = 0` anchor of a walk.
///
/// An arbitrary (generic) constant: apexes of reduced forms often land
/// exactly on the boundary of the fundamental domain — for d = 12 one apex
/// is the corner `(1/2, sqrt 3 / 2)` itself — where the reduction has to
/// break a tie and the start and end of a period can pick different
/// representatives. Anchoring at a generic interior point makes the exact
/// form-closure check meaningful.
const START_OFFSET: f64 = 0.295_167_235_300_866_5;

/// A piece of a closed geodesic, carried by the axis of `form`, starting
/// at axis parameter `t_start` (arc length from the apex) and running
/// forward by `len`. `s_start` is the accumulated arc length from the
/// beginning of the period.
#[derive(Debug, Clone)]
pub struct SubArc {
    pub form: QuadForm,
    pub t_start: f64,
    pub len: f64,
    pub s_start: f64,
}

impl SubArc {
    /// The carrying axis with the window of this sub-arc.
    pub fn arc(&self) -> GeodesicArc {
        let mut arc = GeodesicArc::axis_of_form(&self.form);
        arc.window = Window::Interval(self.t_start, self.t_start + self.len);
        arc
    }
}

/// One closed geodesic (one form class), folded into sub-arcs near the
/// fundamental domain. `s = 0` is a fixed generic anchor (the axis apex of
/// the representative flowed forward by a small constant).
#[derive(Debug, Clone)]
pub struct ClosedGeodesic {
    /// The class representative whose axis carries the anchor.
    pub rep: QuadForm,
    /// Flow period `2 log eps_d`.
    pub period: f64,
    pub subarcs: Vec<SubArc>,
}

impl ClosedGeodesic {
    /// Fold the axis of `rep` (reduced or not) into sub-arcs over one full
    /// period `2 log eps`. Panics if the walk fails to close up, which
    /// would mean inconsistent arithmetic upstream.
    pub fn build(rep: &QuadForm, log_eps: f64) -> Self {
        let period = 2.0 * log_eps;
        // Start near the apex of the axis, reduced into the fundamental
        // domain (the transported form then has its axis near the domain).
        let axis = GeodesicArc::axis_of_form(rep);
        let (p0, w) = reduce_to_fundamental_domain_int(axis.point_at(START_OFFSET));
        let mut q = transport(rep, &w);
        let mut t = GeodesicArc::axis_of_form(&q).param_of(p0);
        let start = (q, t);
        let mut subarcs = Vec::with_capacity((period / MAX_SUBARC_LEN).ceil() as usize);
        let mut s = 0.0;
        while s < period - 1e-12 {
            let len = MAX_SUBARC_LEN.min(period - s);
            subarcs.push(SubArc { form: q, t_start: t, len, s_start: s });
            let end = GeodesicArc::axis_of_form(&q).point_at(t + len);
            let (p_next, w) = reduce_to_fundamental_domain_int(end);
            q = transport(&q, &w);
            t = GeodesicArc::axis_of_form(&q).param_of(p_next);
            s += len;
        }
        assert_eq!(
            q, start.0,
            "closed geodesic failed to close up after one period (d = {})",
            rep.discriminant()
        );
        assert!(
            (t - start.1).abs() < 1e-6,
            "period parameter drifted: {} vs {}",
            t,
            start.1
        );
        ClosedGeodesic { rep: *rep, period, subarcs }
    }

    /// The sub-arc containing arc-length position `s` (mod the period).
    pub fn subarc_at(&self, s: f64) -> &SubArc {
        let s = s.rem_euclid(self.period);
        // Binary search on s_start.
        let idx = match self
            .subarcs
            .binary_search_by(|sa| sa.s_start.partial_cmp(&s).unwrap())
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        &self.subarcs[idx]
    }

    /// Point at arc length `s` along the period (a representative near the
    /// fundamental domain).
    pub fn point_at(&self, s: f64) -> Point {
        let s = s.rem_euclid(self.period);
        let sa = self.subarc_at(s);
        GeodesicArc::axis_of_form(&sa.form).point_at(sa.t_start + (s - sa.s_start))
    }

    /// Unit tangent at arc length `s`, pointing along the flow.
    pub fn tangent_at(&self, s: f64) -> UnitTangent {
        let s = s.rem_euclid(self.period);
        let sa = self.subarc_at(s);
        GeodesicArc::axis_of_form(&sa.form).tangent_at(sa.t_start + (s - sa.s_start))
    }

    /// Integrate `f` over this closed orbit with respect to arc length,
    /// by Gauss–Legendre quadrature with `nodes` points per sub-arc
    /// (the integrand is analytic along the curve, so convergence is
    /// spectral; 32–96 nodes give near machine precision for the smooth
    /// integrands used in this crate).
    pub fn integrate<F: FnMut(UnitTangent) -> f64>(&self, nodes: usize, mut f: F) -> f64 {
        let (xs, ws) = gauss_legendre(nodes);
        let mut total = 0.0;
        for sa in &self.subarcs {
            let arc = GeodesicArc::axis_of_form(&sa.form);
            let half = 0.5 * sa.len;
            let mid = sa.t_start + half;
            let mut acc = 0.0;
            for (x, w) in xs.iter().zip(&ws) {
                acc += w * f(arc.tangent_at(mid + half * x));
            }
            total += acc * half;
        }
        total
    }
}

/// Transport a form by the integer witness `w` (from a fundamental-domain
/// reduction): the new form's axis is `w` applied to the old axis.
fn transport(q: &QuadForm, w: &[[i64; 2]; 2]) -> QuadForm {
    // axis(q ∘ m) = m^{-1} axis(q), so to push the axis forward by w we
    // substitute by w^{-1} = (d, -b; -c, a).
    let inv = [
        [BigInt::from(w[1][1]), BigInt::from(-w[0][1])],
        [BigInt::from(-w[1][0]), BigInt::from(w[0][0])],
    ];
    q.transform(&inv)
}

/// The full union of closed geodesics of one discriminant: one member per
/// form class. Its oriented total length is `2 h(d) log eps_d`.
#[derive(Debug, Clone)]
pub struct GeodesicFamily {
    pub class_set: ClassSet,
    pub members: Vec<ClosedGeodesic>,
}

impl GeodesicFamily {
    pub fn new(disc: &Discriminant) -> Self {
        let class_set = class_representatives(disc);
        let members = class_set
            .reps
            .iter()
            .map(|rep| ClosedGeodesic::build(rep, class_set.log_eps))
            .collect();
        GeodesicFamily { class_set, members }
    }

    /// Integrate `f` against the arc-length measure of the family: the sum
    /// over classes of the integral over one flow period. The measure has
    /// total mass `2 h(d) log eps_d`.
    pub fn integrate<F: FnMut(UnitTangent) -> f64>(&self, nodes: usize, mut f: F) -> f64 {
        self.members
            .iter()
            .map(|g| g.integrate(nodes, &mut f))
            .sum()
    }
}

/// Mass of the invariant measure `(dx dy / y^2) (dtheta / 2)` over the
/// unit tangent bundle of the modular surface, with `theta` running over
/// `[0, 2 pi)`: `(pi / 3) * pi = pi^2 / 3`.
pub const UNIT_TANGENT_VOLUME: f64 = PI * PI / 3.0;

/// Integral of `f` over the unit tangent bundle against
/// `(dx dy / y^2) (dtheta / 2)`, by tensor Gauss-Legendre quadrature:
/// `nx` nodes in `x` over `[-1/2, 1/2]`, `ny` nodes in `u = 1/y` over
/// `(0, 1/sqrt(1 - x^2)]` (the substitution flattens the cusp), `nth`
/// nodes in `theta` over `[0, 2 pi)`. Spectrally accurate for smooth `f`
/// supported away from the cusp.
pub fn unit_tangent_integral<F>(mut f: F, nx: usize, ny: usize, nth: usize) -> f64
where
    F: FnMut(UnitTangent) -> f64,
{
    let (gx, wx) = gauss_legendre(nx);
    let (gy, wy) = gauss_legendre(ny);
    let (gt, wt) = gauss_legendre(nth);
    let mut total = 0.0;
    for (x, wxk) in gx.iter().zip(&wx) {
        let x = 0.5 * x;
        let u_max = 1.0 / (1.0 - x * x).sqrt();
        let mut slab = 0.0;
        for (u, wyk) in gy.iter().zip(&wy) {
            let u = 0.5 * u_max * (u + 1.0);
            let y = 1.0 / u;
            let mut ring = 0.0;
            for (t, wtk) in gt.iter().zip(&wt) {
                let theta = PI * (t + 1.0);
                ring += wtk * f(UnitTangent::new(x, y, theta));
            }
            // d theta / 2 over [0, 2 pi): the theta map has Jacobian pi,
            // halved to pi / 2.
            slab += wyk * ring * (0.5 * PI);
        }
        // dx du with du = dy / y^2 flattened onto [0, u_max].
        total += wxk * slab * (0.5 * u_max) * 0.5;
    }
    total
}

/// One discriminant's row of the equidistribution comparison: the period
/// `integral of f over the family`, the limit `target = (3 / pi^2)
/// integral of f` over the unit tangent bundle, and the signed deviation
/// `period / (2 h log eps) - target`.
#[derive(Debug, Clone)]
pub struct DukeRow {
    pub d: i64,
    pub h: usize,
    pub log_eps: f64,
    /// `integral of f` along the oriented family (total length `2 h log eps`).
    pub period: f64,
    /// `(3 / pi^2) integral of f d mu` over the unit tangent bundle.
    pub target: f64,
    /// Normalized period minus target.
    pub deviation: f64,
}

/// For each discriminant, integrate `f` along the full oriented family
/// and compare the length-normalized period against the equidistribution
/// limit `(3 / pi^2) integral of f`. Samples are reduced to the
/// fundamental domain (point and direction) before `f` sees them, so `f`
/// only needs to be defined there. The limit is blind to orientation
/// (each family carries both), so odd observables in `theta` cancel on
/// both sides.
pub fn duke_test<F>(mut f: F, d_list: &[i64]) -> Result<Vec<DukeRow>, DiscriminantError>
where
    F: FnMut(UnitTangent) -> f64,
{
    let target = 3.0 / (PI * PI) * unit_tangent_integral(&mut f, 48, 48, 24);
    let mut rows = Vec::with_capacity(d_list.len());
    for &d in d_list {
        let disc = Discriminant::validate(d)?;
        let fam = GeodesicFamily::new(&disc);
        let period = fam.integrate(48, |u| {
            let (_, w) = reduce_to_fundamental_domain_int(u.base());
            f(MoebiusMap::from_integer(&w).apply_tangent(u))
        });
        let h = fam.class_set.h();
        let log_eps = fam.class_set.log_eps;
        let total_len = 2.0 * h as f64 * log_eps;
        rows.push(DukeRow {
            d,
            h,
            log_eps,
            period,
            target,
            deviation: period / total_len - target,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bqf;
    use crate::hyperbolic::{dist, in_fundamental_domain, reduce_to_fundamental_domain};

    fn disc(d: i64) -> Discriminant {
        Discriminant::validate(d).unwrap()
    }

    #[test]
    fn walks_close_up_for_a_spread_of_discriminants() {
        // ClosedGeodesic::build asserts exact form closure internally; the
        // point here is that it succeeds across class counts and period
        // sizes, including d = 1621 with period ~116.8.
        for d in [5i64, 8, 12, 13, 40, 60, 61, 73, 229, 1621] {
            let fam = GeodesicFamily::new(&disc(d));
            assert_eq!(fam.members.len(), fam.class_set.h());
            for g in &fam.members {
                let total: f64 = g.subarcs.iter().map(|s| s.len).sum();
                assert!((total - g.period).abs() < 1e-9, "subarc lengths sum to period");
            }
        }
    }

    #[test]
    fn subarc_anchors_stay_near_the_fundamental_domain() {
        for d in [13i64, 61, 229] {
            let fam = GeodesicFamily::new(&disc(d));
            for g in &fam.members {
                for sa in &g.subarcs {
                    let p = GeodesicArc::axis_of_form(&sa.form).point_at(sa.t_start);
                    // Anchors are reduced points (up to boundary dust).
                    assert!(
                        in_fundamental_domain(Point::new(
                            p.x.clamp(-0.5, 0.5),
                            p.y + 1e-9
                        )),
                        "anchor off domain: {p:?} (d = {d})"
                    );
                }
            }
        }
    }

    #[test]
    fn point_at_is_continuous_and_periodic_on_the_surface() {
        let fam = GeodesicFamily::new(&disc(13));
        let g = &fam.members[0];
        // Across each sub-arc boundary the two representatives project to
        // the same surface point.
        for sa in &g.subarcs {
            let s = sa.s_start;
            let before = g.point_at(s - 1e-9);
            let after = g.point_at(s + 1e-9);
            let (rb, _) = reduce_to_fundamental_domain(before);
            let (ra, _) = reduce_to_fundamental_domain(after);
            assert!(
                dist(rb, ra) < 1e-6,
                "discontinuity at s = {s}: {rb:?} vs {ra:?}"
            );
        }
        // Periodicity.
        let p0 = g.point_at(0.0);
        let p1 = g.point_at(g.period);
        assert!(dist(p0, p1) < 1e-9);
        // s = 0 lies on the representative's axis orbit: it is the reduced
        // image of a specific axis point.
        let (anchor, _) = reduce_to_fundamental_domain(p0);
        assert!(dist(p0, anchor) < 1e-9, "anchor is already reduced");
    }

    #[test]
    fn integrate_constant_gives_period() {
        for d in [5i64, 12, 40] {
            let fam = GeodesicFamily::new(&disc(d));
            let le = fam.class_set.log_eps;
            for g in &fam.members {
                let got = g.integrate(16, |_| 1.0);
                assert!(
                    (got - 2.0 * le).abs() < 1e-10 * (1.0 + 2.0 * le),
                    "constant integral = period, d = {d}"
                );
            }
            let total = fam.integrate(16, |_| 1.0);
            let want = 2.0 * fam.class_set.h() as f64 * le;
            assert!((total - want).abs() < 1e-10 * want);
        }
    }

    #[test]
    fn integrate_agrees_across_node_counts() {
        // Spectral convergence: a smooth observable integrated with 24 and
        // 48 nodes agrees to near machine precision.
        let fam = GeodesicFamily::new(&disc(40));
        let f = |u: UnitTangent| (u.y.ln()).cos() + 0.3 * (2.0 * u.x).sin();
        let a: f64 = fam.members.iter().map(|g| g.integrate(24, f)).sum();
        let b: f64 = fam.members.iter().map(|g| g.integrate(48, f)).sum();
        assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
    }

    #[test]
    fn tangents_follow_the_flow() {
        // Flowing a small step from (point, tangent) lands on the curve.
        let fam = GeodesicFamily::new(&disc(8));
        let g = &fam.members[0];
        for k in 0..40 {
            let s = g.period * (k as f64) / 40.0;
            let u = g.tangent_at(s);
            let h = 1e-6;
            let p2 = g.point_at(s + h);
            // Euclidean direction of motion matches theta to O(h).
            let want = ((p2.y - u.y).atan2(p2.x - u.x) - u.theta).rem_euclid(2.0 * std::f64::consts::PI);
            let err = want.min(2.0 * std::f64::consts::PI - want);
            assert!(err < 1e-4, "tangent direction at s = {s}: err {err}");
        }
    }

    #[test]
    fn d5_walk_shape() {
        let fam = GeodesicFamily::new(&disc(5));
        let g = &fam.members[0];
        assert_eq!(g.rep, QuadForm::new(-1, 1, 1));
        assert!((g.period - 2.0 * 0.962_423_650_119_206_9).abs() < 1e-12);
        assert_eq!(g.subarcs.len(), 2);
        // All carried forms have discriminant 5.
        for sa in &g.subarcs {
            assert_eq!(sa.form.discriminant(), 5);
        }
    }

    #[test]
    fn unit_tangent_quadrature_mass() {
        let mass = unit_tangent_integral(|_| 1.0, 32, 32, 8);
        assert!((mass - UNIT_TANGENT_VOLUME).abs() < 1e-10, "mass = {mass}");
    }

    #[test]
    fn duke_constant_observable_has_zero_deviation() {
        let rows = duke_test(|_| 1.0, &[5, 12, 40]).unwrap();
        for r in &rows {
            assert!((r.target - 1.0).abs() < 1e-10);
            let len = 2.0 * r.h as f64 * r.log_eps;
            assert!((r.period - len).abs() < 1e-9 * len, "d = {}", r.d);
            assert!(r.deviation.abs() < 1e-9, "d = {}", r.d);
        }
        assert!(duke_test(|_| 1.0, &[7]).is_err(), "7 = 3 mod 4 rejected");
    }

    #[test]
    fn duke_deviation_shrinks_for_a_bump_observable() {
        // A smooth bump supported inside the fundamental domain. The
        // d = 5 walk misses it entirely (deviation = -target); by
        // d ~ 1e5 the normalized period is within 10% of the target.
        // Per-d monotonicity is not expected, so compare medians.
        let bump = |u: UnitTangent| {
            let r2 = (u.x / 0.4).powi(2) + ((u.y - 1.5) / 0.4).powi(2);
            if r2 < 1.0 { (-1.0 / (1.0 - r2)).exp() } else { 0.0 }
        };
        let rows = duke_test(bump, &[5, 8, 12, 13, 17, 21, 1093, 9973, 99989]).unwrap();
        assert!(rows[0].period.abs() < 1e-12, "C_5 misses the bump");
        let median = |mut v: Vec<f64>| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            0.5 * (v[(v.len() - 1) / 2] + v[v.len() / 2])
        };
        let small = median(rows[..6].iter().map(|r| r.deviation.abs()).collect());
        let large = median(rows[6..].iter().map(|r| r.deviation.abs()).collect());
        assert!(
            large < small,
            "median |deviation| should shrink: {small} -> {large}"
        );
        for r in &rows[6..] {
            assert!(r.deviation.abs() < 0.04, "d = {}: {}", r.d, r.deviation);
        }
    }

    #[test]
    fn duke_angle_observable_converges_to_the_liouville_average() {
        // f depends only on the direction; the limit measure averages it
        // to exactly 1/2. Short geodesics are strongly anisotropic
        // (C_5 gives -0.43); by d ~ 1e5 the deviation is below 3e-2.
        let rows = duke_test(|u| u.theta.sin().powi(2), &[5, 1093, 99989]).unwrap();
        assert!((rows[0].target - 0.5).abs() < 1e-12);
        assert!(rows[0].deviation.abs() > 0.4);
        assert!(rows[1].deviation.abs() < 0.05);
        assert!(rows[2].deviation.abs() < 0.03);
    }

    #[test]
    fn family_total_length_matches_class_data() {
        for d in [60i64, 105, 240] {
            let dd = disc(d);
            let fam = GeodesicFamily::new(&dd);
            let cs = bqf::class_representatives(&dd);
            let (oriented, _) = cs.total_lengths();
            let total = fam.integrate(8, |_| 1.0);
            assert!((total - oriented).abs() < 1e-9 * oriented, "d = {d}");
        }
    }
}
