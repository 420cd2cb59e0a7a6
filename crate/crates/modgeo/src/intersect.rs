//! Crossing enumeration: a compact geodesic segment against the full
//! family of closed geodesics of one discriminant, or one family against
//! another, with exact crossing detection and angle statistics.
//!
//! # Method
//!
//! The segment `beta` is lifted once to a fixed arc in the upper half
//! plane.  Every crossing of the projected segment with the projected
//! family is then a crossing of that fixed lift with the axis of some
//! integral form of discriminant `d`, so the enumeration runs over
//! candidate forms whose axis semicircle can meet a bounding box of the
//! lift ([`candidate_forms`]); the actual crossing decision is exact
//! integer interlacing of the quadratic-irrational feet, and only the
//! crossing point, parameter and angle are floating point.
//!
//! A form and its negation trace the same unoriented geodesic, so events
//! are deduplicated by the `{q, -q}` pair: only the `a > 0` member is
//! reported, and the oriented event total is exactly twice the event
//! count.
//!
//! Long arcs are split into sub-segments of length at most
//! [`MAX_SUBARC_LEN`] with half-open parameter windows, so an event on a
//! cut point is counted exactly once and candidate boxes stay small.  For
//! a family-against-family run the walked geodesic is additionally folded
//! back into the fundamental domain sub-arc by sub-arc (the periods of
//! long geodesics plunge exponentially deep toward their feet, where a
//! single fixed lift would lose every significant digit), which is
//! legitimate because the candidate form set is stable under the integer
//! Möbius transport of the fold.

use std::collections::HashSet;
use std::f64::consts::PI;

use crate::bqf::{Discriminant, QuadForm};
use crate::geodesics::{GeodesicFamily, MAX_SUBARC_LEN};
use crate::hyperbolic::{
    angle_mod_pi, geodesic_through, intersect_arcs, reduce_to_fundamental_domain, ArcError,
    GeodesicArc, Point, UnitTangent, Window,
};

/// Events closer than this to an angle of `0`/`pi` (tangency) or to a
/// segment endpoint are flagged in the report counters.
pub const DEGENERATE_EPS: f64 = 1e-9;

/// A compact oriented geodesic segment in the upper half plane.
#[derive(Debug, Clone)]
pub struct Segment {
    arc: GeodesicArc,
}

impl Segment {
    /// The segment from `p1` to `p2` along the geodesic through them.
    pub fn from_endpoints(p1: Point, p2: Point) -> Result<Self, ArcError> {
        let arc = GeodesicArc::through_points(p1, p2)?;
        Ok(Segment { arc })
    }

    /// The segment of arc length `len` starting at the base point of `u`
    /// and running along it.
    pub fn from_tangent(u: UnitTangent, len: f64) -> Result<Self, ArcError> {
        if !(len > 0.0) {
            return Err(ArcError::DegenerateSegment);
        }
        let mut arc = geodesic_through(&u);
        let t0 = arc.param_of(Point::new(u.x, u.y));
        arc.window = Window::Interval(t0, t0 + len);
        Ok(Segment { arc })
    }

    pub fn arc(&self) -> &GeodesicArc {
        &self.arc
    }

    /// Parameter window `[lo, hi]` on the underlying geodesic.
    pub fn bounds(&self) -> (f64, f64) {
        match self.arc.window {
            Window::Interval(a, b) => (a, b),
            Window::Full => unreachable!("segments always carry a finite window"),
        }
    }

    /// Arc length.
    pub fn length(&self) -> f64 {
        let (lo, hi) = self.bounds();
        hi - lo
    }

    /// The image segment under an integer Möbius map.
    pub fn translate(&self, g: &[[num_bigint::BigInt; 2]; 2]) -> Segment {
        Segment { arc: self.arc.translate(g) }
    }
}

/// Closed axis-parallel rectangle in the upper half plane.
#[derive(Debug, Clone, Copy)]
pub struct HBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

/// Bounding box of a windowed arc.  For a semicircular arc `y` peaks at
/// parameter `0` (the apex) and `x` is monotone; for a vertical arc the
/// parameter-0 point `y = 1` lies between the endpoint heights, so
/// sampling it is harmless.
fn arc_box(arc: &GeodesicArc) -> HBox {
    let Window::Interval(lo, hi) = arc.window else {
        panic!("arc_box needs a windowed arc");
    };
    let p1 = arc.point_at(lo);
    let p2 = arc.point_at(hi);
    let mut bbox = HBox {
        x_min: p1.x.min(p2.x),
        x_max: p1.x.max(p2.x),
        y_min: p1.y.min(p2.y),
        y_max: p1.y.max(p2.y),
    };
    if lo <= 0.0 && 0.0 <= hi {
        let apex = arc.point_at(0.0);
        bbox.y_max = bbox.y_max.max(apex.y);
    }
    bbox
}

/// Every primitive integral form `(a, b, c)` of discriminant `d` whose
/// axis semicircle (center `-b/(2a)`, radius `sqrt(d)/(2|a|)`) meets the
/// box, in both orientations, sorted by `(b, a)`.
///
/// Completeness: an axis meeting the box must reach height `y_min`, so
/// `|a| <= sqrt(d)/(2 y_min)`; for each `|a|` the center must lie in the
/// reach interval around the box's `x` range, thinned by the interval of
/// centers whose axis passes entirely above `y_max`.  Numeric prefilters
/// are slack by `1e-9` toward inclusion; the exact crossing test
/// downstream makes the final decision.
pub fn candidate_forms(disc: &Discriminant, bbox: &HBox) -> Vec<QuadForm> {
    assert!(
        bbox.y_min > 0.0 && bbox.x_min <= bbox.x_max && bbox.y_min <= bbox.y_max,
        "candidate box must lie in the upper half plane"
    );
    let d = disc.value();
    let sd = (d as f64).sqrt();
    let mut out = Vec::new();
    let mut a_abs = 1i64;
    loop {
        let r = sd / (2.0 * a_abs as f64);
        if r < bbox.y_min - 1e-9 {
            break;
        }
        // Horizontal reach of the axis while inside the box's y band.
        let w_hi = (r * r - bbox.y_min * bbox.y_min).max(0.0).sqrt();
        let w_lo = if r > bbox.y_max {
            (r * r - bbox.y_max * bbox.y_max).sqrt()
        } else {
            0.0
        };
        let m_lo = bbox.x_min - w_hi;
        let m_hi = bbox.x_max + w_hi;
        // Centers whose axis overflies the box: box strictly inside
        // (m - w_lo, m + w_lo).
        let ex = (bbox.x_max - w_lo, bbox.x_min + w_lo);
        for a in [a_abs, -a_abs] {
            push_forms_for_center_range(d, a, m_lo, m_hi, ex, &mut out);
        }
        a_abs += 1;
    }
    out.sort_by_key(|q| (q.b, q.a));
    out
}

/// Append the forms with leading coefficient `a` whose axis center
/// `-b/(2a)` lies in `[m_lo, m_hi]` but not strictly inside the excluded
/// interval `ex`.
fn push_forms_for_center_range(
    d: i64,
    a: i64,
    m_lo: f64,
    m_hi: f64,
    ex: (f64, f64),
    out: &mut Vec<QuadForm>,
) {
    // b = -2 a m maps the center interval to a b interval, flipping
    // orientation with the sign of a.
    let (b_lo, b_hi) = if a > 0 {
        (-2.0 * a as f64 * m_hi, -2.0 * a as f64 * m_lo)
    } else {
        (-2.0 * a as f64 * m_lo, -2.0 * a as f64 * m_hi)
    };
    let (ex_lo, ex_hi) = if a > 0 {
        (-2.0 * a as f64 * ex.1, -2.0 * a as f64 * ex.0)
    } else {
        (-2.0 * a as f64 * ex.0, -2.0 * a as f64 * ex.1)
    };
    let b_start = (b_lo - 1e-9).ceil() as i64;
    let b_end = (b_hi + 1e-9).floor() as i64;
    let four_a = 4 * a;
    let mut b = b_start;
    // b and d must share parity for b^2 - d to be divisible by 4.
    if (b - d).rem_euclid(2) != 0 {
        b += 1;
    }
    while b <= b_end {
        let bf = b as f64;
        if !(bf > ex_lo + 1e-9 && bf < ex_hi - 1e-9) && (b * b - d) % four_a == 0 {
            let c = (b * b - d) / four_a;
            let q = QuadForm::new(a, b, c);
            if q.is_primitive() {
                debug_assert_eq!(q.discriminant(), d as i128);
                out.push(q);
            }
        }
        b += 2;
    }
}

/// One transversal crossing.
#[derive(Debug, Clone)]
pub struct IntersectionEvent {
    /// Crossing point, reduced to the fundamental domain.
    pub point: Point,
    /// Crossing angle in `(0, pi]`: counterclockwise from the segment's
    /// tangent to the axis tangent, mod pi (the family is unoriented).
    pub angle: f64,
    /// The responsible translate, normalized to `a > 0`.
    pub form: QuadForm,
    /// Arc length along the traversed segment or family walk.
    pub param_on_beta: f64,
}

/// Crossings of one run, with bookkeeping counters.
#[derive(Debug, Clone)]
pub struct CrossingReport {
    /// Unoriented crossing events in deterministic `(sub-segment, b, a)`
    /// order; the oriented total is exactly twice this count.
    pub events: Vec<IntersectionEvent>,
    /// Near-tangential encounters (angle within [`DEGENERATE_EPS`] of 0 or
    /// pi), counted before the angle-window cut.
    pub degenerate: usize,
    /// Events within [`DEGENERATE_EPS`] of the segment endpoints.
    pub at_endpoint: usize,
}

/// All crossings of `beta` with the unoriented family of discriminant
/// `d`, keeping angles inside the open window `(th1, th2)` with
/// `0 <= th1 < th2 <= pi`.
pub fn segment_vs_family(
    seg: &Segment,
    disc: &Discriminant,
    theta_window: (f64, f64),
) -> CrossingReport {
    let (seg_lo, seg_hi) = seg.bounds();
    let mut report = CrossingReport { events: Vec::new(), degenerate: 0, at_endpoint: 0 };
    let n_chunks = ((seg_hi - seg_lo) / MAX_SUBARC_LEN).ceil().max(1.0) as usize;
    let step = (seg_hi - seg_lo) / n_chunks as f64;
    for k in 0..n_chunks {
        let c_lo = seg_lo + k as f64 * step;
        let c_hi = if k + 1 == n_chunks { seg_hi } else { seg_lo + (k + 1) as f64 * step };
        let mut chunk = seg.arc.clone();
        chunk.window = Window::Interval(c_lo, c_hi);
        // Events exactly on the upper cut belong to the next chunk; the
        // final chunk keeps its endpoint.
        let open_top = if k + 1 == n_chunks { f64::INFINITY } else { c_hi };
        collect_crossings(&chunk, disc, theta_window, open_top, None, &mut report, |t| {
            t - seg_lo
        });
    }
    for ev in &report.events {
        let p = ev.param_on_beta;
        if p < DEGENERATE_EPS || p > (seg_hi - seg_lo) - DEGENERATE_EPS {
            report.at_endpoint += 1;
        }
    }
    report
}

/// Crossings of one windowed arc with the family: the shared inner loop
/// of the segment and family runs.
fn collect_crossings<F: Fn(f64) -> f64>(
    chunk: &GeodesicArc,
    disc: &Discriminant,
    (th1, th2): (f64, f64),
    open_top: f64,
    excluded: Option<&HashSet<QuadForm>>,
    report: &mut CrossingReport,
    param_map: F,
) {
    assert!(
        0.0 <= th1 && th1 < th2 && th2 <= PI + 1e-12,
        "angle window must satisfy 0 <= th1 < th2 <= pi"
    );
    let bbox = arc_box(chunk);
    let candidates = candidate_forms(disc, &bbox);
    for q in candidates {
        if q.a <= 0 {
            continue; // {q, -q} dedup: count each unoriented axis once
        }
        if let Some(skip) = excluded {
            if skip.contains(&q.reduce()) {
                continue;
            }
        }
        let axis = GeodesicArc::axis_of_form(&q);
        let Some(cr) = intersect_arcs(chunk, &axis) else {
            continue;
        };
        if cr.t1 >= open_top {
            continue;
        }
        let angle = angle_mod_pi(cr.angle_ccw);
        if angle < DEGENERATE_EPS || angle > PI - DEGENERATE_EPS {
            report.degenerate += 1;
        }
        if !(angle > th1 && angle < th2) {
            continue;
        }
        let (point, _) = reduce_to_fundamental_domain(cr.point);
        report.events.push(IntersectionEvent {
            point,
            angle,
            form: q,
            param_on_beta: param_map(cr.t1),
        });
    }
}

/// Crossings of the full family of `d1` with the full family of `d2`.
#[derive(Debug, Clone)]
pub struct FamilyCrossingReport {
    pub d1: i64,
    pub d2: i64,
    /// One event per (walk passage, unoriented `d2` axis) incidence along
    /// the walks of the `d1` class representatives; `param_on_beta` is
    /// concatenated walk arc length.  Each walk double-covers its point
    /// set, so every unoriented branch crossing on the surface appears
    /// twice, and the oriented double count over the full tangent-bundle
    /// product is twice the event total.
    pub events: Vec<IntersectionEvent>,
    pub degenerate: usize,
}

impl FamilyCrossingReport {
    /// Event total: `2 I(C_{d1}, C_{d2})`, twice the number of unoriented
    /// branch crossings on the surface.
    pub fn count(&self) -> usize {
        self.events.len()
    }
}

/// Intersect the walked family of `d1` with the family of `d2`.
///
/// Each class representative of `d1` is walked over one full period
/// (folded into the fundamental domain), and its sub-arcs are intersected
/// with the `d2` axes; the period windows are half-open so each crossing
/// is counted exactly once per passage.
///
/// For `d1 = d2` the self-pairing is excluded: candidates equivalent to
/// the walked class or its reverse are skipped, so only crossings between
/// distinct unoriented closed geodesics are reported — and each such
/// crossing is then encountered twice (once along each participant), the
/// ordered-pair convention.
pub fn family_vs_family(
    fam1: &GeodesicFamily,
    disc2: &Discriminant,
    theta_window: (f64, f64),
) -> FamilyCrossingReport {
    let same = fam1.class_set.disc.value() == disc2.value();
    let mut report = CrossingReport { events: Vec::new(), degenerate: 0, at_endpoint: 0 };
    let mut offset = 0.0;
    for member in &fam1.members {
        let excluded: Option<HashSet<QuadForm>> = if same {
            let mut set = HashSet::new();
            set.extend(member.rep.reduce().reduction_cycle());
            set.extend(member.rep.neg().reduce().reduction_cycle());
            Some(set)
        } else {
            None
        };
        for sub in &member.subarcs {
            let chunk = sub.arc();
            let Window::Interval(_, t_hi) = chunk.window else {
                unreachable!("sub-arcs are windowed")
            };
            let base = offset + sub.s_start - sub.t_start;
            collect_crossings(
                &chunk,
                disc2,
                theta_window,
                t_hi, // half-open everywhere: the period end wraps to 0
                excluded.as_ref(),
                &mut report,
                |t| base + t,
            );
        }
        offset += member.period;
    }
    FamilyCrossingReport {
        d1: fam1.class_set.disc.value(),
        d2: disc2.value(),
        events: report.events,
        degenerate: report.degenerate,
    }
}

/// A histogram bin of crossing angles.
#[derive(Debug, Clone, Copy)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub observed: usize,
    pub expected: f64,
}

/// Angle statistics of one crossing run against the `(3/pi^2) sin(theta)`
/// law.
#[derive(Debug, Clone)]
pub struct EquidistributionReport {
    /// Non-degenerate event count.
    pub count: usize,
    /// `count / normalization`, the paper-normalized crossing count.
    pub normalized: f64,
    /// The limit of `normalized`: `(3/pi^2) (cos th1 - cos th2)`.
    pub target: f64,
    /// Kolmogorov–Smirnov distance of the angles from the truncated
    /// `sin` law on the window.
    pub ks_angle: f64,
    /// Kolmogorov–Smirnov distance of the crossing parameters from
    /// uniform on `[0, param_span]`.
    pub ks_param: f64,
    /// Tangential events excluded from `count` and the histogram.
    pub degenerate: usize,
    pub histogram: Vec<HistogramBin>,
}

/// Build the angle statistics for a finished run.
///
/// `normalization` is the paper's length product — `l(beta) * l(C_d)`
/// for a segment run, `l(C_{d1}) * l(C_{d2})` for a family run, with
/// family length `h(d) log eps_d` — and `param_span` is the total arc
/// length traversed (segment length, or summed walk periods).
pub fn equidistribution_report(
    events: &[IntersectionEvent],
    theta_window: (f64, f64),
    normalization: f64,
    param_span: f64,
    bins: usize,
) -> EquidistributionReport {
    let (th1, th2) = theta_window;
    assert!(bins >= 4, "need at least 4 bins, got {bins}");
    let keep: Vec<&IntersectionEvent> = events
        .iter()
        .filter(|e| e.angle >= DEGENERATE_EPS && e.angle <= PI - DEGENERATE_EPS)
        .collect();
    let degenerate = events.len() - keep.len();
    let count = keep.len();
    let mass = th1.cos() - th2.cos();
    let mut histogram = Vec::with_capacity(bins);
    let width = (th2 - th1) / bins as f64;
    for i in 0..bins {
        let lo = th1 + i as f64 * width;
        let hi = if i + 1 == bins { th2 } else { th1 + (i + 1) as f64 * width };
        let observed = keep.iter().filter(|e| e.angle >= lo && (e.angle < hi || i + 1 == bins)).count();
        let expected = count as f64 * (lo.cos() - hi.cos()) / mass;
        histogram.push(HistogramBin { lo, hi, observed, expected });
    }
    // KS against the truncated sin-law CDF on the window.
    let mut angles: Vec<f64> = keep.iter().map(|e| e.angle).collect();
    angles.sort_by(f64::total_cmp);
    let cdf_angle = |t: f64| (th1.cos() - t.cos()) / mass;
    let ks_angle = ks_statistic(&angles, cdf_angle);
    let mut params: Vec<f64> = keep.iter().map(|e| e.param_on_beta).collect();
    params.sort_by(f64::total_cmp);
    let ks_param = ks_statistic(&params, |t| (t / param_span).clamp(0.0, 1.0));
    EquidistributionReport {
        count,
        normalized: count as f64 / normalization,
        target: 3.0 / (PI * PI) * mass,
        ks_angle,
        ks_param,
        degenerate,
        histogram,
    }
}

/// Kolmogorov–Smirnov distance between a sorted sample and a CDF.
fn ks_statistic<F: Fn(f64) -> f64>(sorted: &[f64], cdf: F) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n as f64 - f).max(f - i as f64 / n as f64);
    }
    d
}

/// Brute-force cross-check for [`segment_vs_family`]: scan every primitive
/// form with `|a| <= cap_a`, `|b| <= cap_b` and test the exact interlacing
/// directly, with no box-based pruning.  Returns the unoriented `a > 0`
/// events' `(form, angle)` pairs sorted by `(b, a)`.
pub fn segment_vs_family_brute(
    seg: &Segment,
    disc: &Discriminant,
    cap_a: i64,
    cap_b: i64,
    theta_window: (f64, f64),
) -> Vec<(QuadForm, f64)> {
    let d = disc.value();
    let mut hits = Vec::new();
    for a in 1..=cap_a {
        for b in -cap_b..=cap_b {
            if (b * b - d).rem_euclid(4 * a) != 0 {
                continue;
            }
            let c = (b * b - d) / (4 * a);
            let q = QuadForm::new(a, b, c);
            if !q.is_primitive() {
                continue;
            }
            let axis = GeodesicArc::axis_of_form(&q);
            if let Some(cr) = intersect_arcs(seg.arc(), &axis) {
                let angle = angle_mod_pi(cr.angle_ccw);
                if angle > theta_window.0 && angle < theta_window.1 {
                    hits.push((q, angle));
                }
            }
        }
    }
    hits.sort_by_key(|(q, _)| (q.b, q.a));
    hits
}
