//! The point-pair intersection kernel on the unit tangent bundle.
//!
//! For `delta > 0` and an angle window `(theta1, theta2)`, the pairwise
//! kernel `k_delta(u1, u2)` is the indicator that the forward geodesic
//! arcs of length `delta` issued from `u1` and `u2` cross transversally
//! at an angle (mod `pi`) inside the window.  Its group average
//! `K_delta(u1, u2) = sum_gamma k_delta(u1, gamma u2)` descends to the
//! modular surface and ties analytic double integrals to honest crossing
//! counts:
//!
//! - the plane volume identity `int k_delta((i,up), g) dg
//!   = (cos theta1 - cos theta2) delta^2` ([`check_volume_identity`]);
//! - the closed-curve count identity: the double integral of `K_delta`
//!   over the walks of two families, divided by `delta^2`, equals the
//!   oriented crossing total — an integer ([`check_count_identity`]);
//! - the weighted segment identity: against a segment `beta` extended
//!   forward by `delta`, each crossing enters with weight
//!   `min(p/delta, 1, (l+delta-p)/delta)` in its extension parameter `p`
//!   ([`check_weighted_identity`]);
//! - the cusp blow-up: along a horocyclic tangent at Euclidean height `R`
//!   the diagonal value `K_delta(u, u)` grows linearly in `R`
//!   ([`cusp_blowup`]).
//!
//! The indicator is evaluated in closed form.  Writing `m = g1^{-1} g2`
//! for the relative frame and factoring `m = a(e^{t1}) R_{phi/2}
//! a(e^{-t2})` (flow `t1` forward along the first arc, turn, flow `t2`
//! backward along the second), the arcs cross iff `0 < t1 < delta` and
//! `0 < t2 < delta`.  The chart angle `phi` is the clockwise turn from
//! the first tangent to the second at the crossing, so the
//! counterclockwise crossing angle is `alpha = 2 pi - phi`, and the
//! window test applies to `alpha mod pi` — the same convention as the
//! crossing reports in [`crate::intersect`].  Everything is sharp: no
//! stepping, no tolerance in the indicator itself.
//!
//! Group elements near a pair of base points are enumerated by reducing
//! both points to the fundamental domain and breadth-first search over
//! the generator word graph `{T, T^{-1}, S}` with distance pruning; the
//! support bound `dist(z1, z2) > 2 delta  =>  K = 0` keeps the balls
//! tiny.

use std::collections::{HashMap, HashSet, VecDeque};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::bqf::Discriminant;
use crate::derive_seed;
use crate::geodesics::GeodesicFamily;
use crate::hyperbolic::{
    angle_mod_pi, dist, frame_from_iwasawa, frame_of_tangent, intersect_arcs, psi_density,
    reduce_to_fundamental_domain_int, ArcError, MoebiusMap, Point, UnitTangent, Window,
};
use crate::intersect::{family_vs_family, segment_vs_family, Segment};
use num_bigint::BigInt;

/// Hard cap on enumeration radii; the BFS ball grows like `e^r`.
pub const MAX_ENUM_RADIUS: f64 = 4.0;

/// Discriminant cap for the count-identity quadrature (the grids scale
/// like `(h(d) log eps_d / delta)^2`).
pub const MAX_COUNT_IDENTITY_DISC: i64 = 60;

/// Minimum grid resolution for the aligned quadratures: at least this
/// many cells per `delta` on every axis.
pub const MIN_CELLS_PER_DELTA: usize = 8;

/// Extra BFS expansion allowance beyond the requested radius.
///
/// Both endpoints are reduced before the search, so the straight word
/// path to any admissible element stays within the target distance plus
/// one fundamental-cell diameter on the thick part (`<= 1.2`); the
/// constant leaves room on top of that.  Cross-checked in the tests
/// against a fatter cushion and against exhaustive word enumeration.
const BFS_CUSHION: f64 = 2.5;

/// Refuse to expand beyond this many BFS nodes (a radius-4 ball with
/// cushion stays well under 10^5).
const BFS_NODE_CAP: usize = 400_000;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error(
        "kernel parameters out of range: delta = {delta}, window = ({theta1}, {theta2}); \
         need 0 < delta < 1 and 0 <= theta1 <= theta2 <= pi"
    )]
    BadParams { delta: f64, theta1: f64, theta2: f64 },
    #[error("{cells} cells per delta is too coarse for the aligned quadrature; need at least {min}")]
    GridTooCoarse { cells: usize, min: usize },
    #[error(
        "the count identity needs two distinct discriminants (got d = {d} twice): the \
         double integral would mix in each geodesic's self-intersection mass"
    )]
    SameDiscriminant { d: i64 },
    #[error("discriminant {d} exceeds the count-identity quadrature budget (d <= {max})")]
    DiscriminantTooLarge { d: i64, max: i64 },
    #[error(
        "the segment extended by delta crosses itself ({kind:?} near parameters \
         {param1:.6} and {param2:.6}); the weighted identity requires an embedded extension"
    )]
    SelfIntersectingExtension { kind: SelfCrossKind, param1: f64, param2: f64 },
    #[error("segment length {len} does not exceed delta = {delta}; the weighted identity needs 0 < delta < length")]
    SegmentTooShort { len: f64, delta: f64 },
    #[error(transparent)]
    Arc(#[from] ArcError),
}

/// Aperture `delta` and angle window `(theta1, theta2)` of the kernel.
///
/// The window test is open on both sides and applies to the crossing
/// angle mod `pi`, so `theta1 = 0` with `theta2 = pi` is the full
/// (unwindowed) kernel and `theta1 = theta2` is the empty one.
#[derive(Debug, Clone, Copy)]
pub struct KernelParams {
    pub delta: f64,
    pub theta1: f64,
    pub theta2: f64,
}

impl KernelParams {
    pub fn new(delta: f64, theta1: f64, theta2: f64) -> Result<Self, KernelError> {
        let ok = delta > 0.0
            && delta < 1.0
            && theta1 >= 0.0
            && theta1 <= theta2
            && theta2 <= PI
            && delta.is_finite();
        if !ok {
            return Err(KernelError::BadParams { delta, theta1, theta2 });
        }
        Ok(KernelParams { delta, theta1, theta2 })
    }

    /// The full-window kernel of aperture `delta`.
    pub fn full(delta: f64) -> Self {
        KernelParams::new(delta, 0.0, PI).expect("full window is always valid")
    }

    fn admits(&self, angle: f64) -> bool {
        angle > self.theta1 && angle < self.theta2
    }
}

/// Transversal crossing of two complete geodesics in relative-frame
/// coordinates: flow `t1` forward along the first to reach the crossing,
/// turn, flow `t2` backward along the second; `angle` is the
/// counterclockwise angle in `(0, 2 pi)` from the first tangent to the
/// second at the crossing.
#[derive(Debug, Clone, Copy)]
pub struct ChartCrossing {
    pub t1: f64,
    pub t2: f64,
    pub angle: f64,
}

/// Factor `m = a(e^{t1}) R_{phi/2} a(e^{-t2})` and read off the crossing
/// data of the two oriented geodesics whose relative frame is `m`.
///
/// Writing `m = [[p, q], [r, s]]` (normalized to `r >= 0`), the
/// factorization has `q = -e^{(t1+t2)/2} sin(phi/2)`,
/// `r = e^{-(t1+t2)/2} sin(phi/2)`, `p s = cos^2(phi/2)`; it exists with
/// real `t1, t2` exactly when `r > 0`, `q < 0`, and `p s > 0`.  `r = 0`
/// is a common axis (no transversal crossing), `p s = 0` is the
/// anti-parallel coincidence `phi = pi` (same axis, opposite
/// orientations) — both excluded.
pub fn split_crossing(m: &MoebiusMap) -> Option<ChartCrossing> {
    let [[mut p, mut q], [mut r, mut s]] = m.m;
    if r < 0.0 {
        p = -p;
        q = -q;
        r = -r;
        s = -s;
    }
    if r <= 0.0 {
        return None;
    }
    if q >= 0.0 || p * s <= 0.0 {
        return None;
    }
    let tsum = (-q / r).ln();
    let tdiff = (p / s).ln();
    let t1 = 0.5 * (tsum + tdiff);
    let t2 = 0.5 * (tsum - tdiff);
    let sin_half = (-q * r).max(0.0).sqrt();
    let cos_half = (p * s).max(0.0).sqrt().copysign(p);
    let phi = 2.0 * sin_half.atan2(cos_half);
    if phi == PI {
        return None;
    }
    // The chart turn is clockwise; report the counterclockwise angle.
    Some(ChartCrossing { t1, t2, angle: 2.0 * PI - phi })
}

/// The pairwise kernel on frames: `Some(angle mod pi)` iff the forward
/// `delta`-arcs of the two frames cross inside the window.
pub fn k_delta_frames(g1: &MoebiusMap, g2: &MoebiusMap, p: &KernelParams) -> Option<f64> {
    let m = g1.inv().mul(g2);
    let cr = split_crossing(&m)?;
    if !(cr.t1 > 0.0 && cr.t1 < p.delta && cr.t2 > 0.0 && cr.t2 < p.delta) {
        return None;
    }
    let a = angle_mod_pi(cr.angle);
    if p.admits(a) {
        Some(a)
    } else {
        None
    }
}

/// The pairwise kernel `k_delta(u1, u2)`: `Some(angle mod pi)` iff the
/// forward `delta`-arcs issued from the two tangents cross transversally
/// at an angle inside the window, `None` otherwise (coincident axes
/// included).
pub fn k_delta(u1: &UnitTangent, u2: &UnitTangent, p: &KernelParams) -> Option<f64> {
    k_delta_frames(&frame_of_tangent(u1), &frame_of_tangent(u2), p)
}

// ---------------------------------------------------------------------------
// Group enumeration.
// ---------------------------------------------------------------------------

type IMat = [i64; 4]; // row-major [a, b, c, d], determinant 1

const I_ID: IMat = [1, 0, 0, 1];
const I_T: IMat = [1, 1, 0, 1];
const I_TINV: IMat = [1, -1, 0, 1];
const I_S: IMat = [0, -1, 1, 0];

fn imul(x: &IMat, y: &IMat) -> IMat {
    [
        x[0] * y[0] + x[1] * y[2],
        x[0] * y[1] + x[1] * y[3],
        x[2] * y[0] + x[3] * y[2],
        x[2] * y[1] + x[3] * y[3],
    ]
}

fn iinv(x: &IMat) -> IMat {
    [x[3], -x[1], -x[2], x[0]]
}

/// Sign-canonical representative of `{m, -m}`.
fn icanon(m: IMat) -> IMat {
    let flip = m[2] < 0 || (m[2] == 0 && m[0] < 0);
    if flip {
        [-m[0], -m[1], -m[2], -m[3]]
    } else {
        m
    }
}

fn iapply(m: &IMat, z: Point) -> Point {
    let (a, b, c, d) = (m[0] as f64, m[1] as f64, m[2] as f64, m[3] as f64);
    let den = (c * z.x + d) * (c * z.x + d) + c * c * z.y * z.y;
    Point::new(
        ((a * z.x + b) * (c * z.x + d) + a * c * z.y * z.y) / den,
        z.y / den,
    )
}

fn to_moebius(m: &IMat) -> MoebiusMap {
    MoebiusMap::from_integer(&[[m[0], m[1]], [m[2], m[3]]])
}

/// BFS over the word graph on `{T, T^{-1}, S}` from the identity:
/// emit every `V` with `dist(z1, V z2) < radius`, expanding a node while
/// its distance stays below `radius + cushion`.  Both inputs must
/// already be reduced.
fn gamma_ball_reduced(z1: Point, z2: Point, radius: f64, cushion: f64) -> Vec<IMat> {
    let mut visited: HashSet<IMat> = HashSet::new();
    let mut queue: VecDeque<IMat> = VecDeque::new();
    let mut out = Vec::new();
    visited.insert(I_ID);
    queue.push_back(I_ID);
    while let Some(v) = queue.pop_front() {
        let d = dist(z1, iapply(&v, z2));
        if d < radius {
            out.push(v);
        }
        if d < radius + cushion {
            for step in [I_T, I_TINV, I_S] {
                let child = icanon(imul(&v, &step));
                if visited.insert(child) {
                    queue.push_back(child);
                }
            }
            assert!(
                visited.len() <= BFS_NODE_CAP,
                "group enumeration ball exploded (radius {radius})"
            );
        }
    }
    out
}

/// All integer `gamma` (one sign representative each) with
/// `dist(z1, gamma z2) < radius`, as integer matrices.
fn gamma_near_int(z1: &Point, z2: &Point, radius: f64) -> Vec<IMat> {
    assert!(
        radius > 0.0 && radius <= MAX_ENUM_RADIUS,
        "enumeration radius {radius} outside (0, {MAX_ENUM_RADIUS}]"
    );
    let (z1r, w1) = reduce_to_fundamental_domain_int(*z1);
    let (z2r, w2) = reduce_to_fundamental_domain_int(*z2);
    let w1 = [w1[0][0], w1[0][1], w1[1][0], w1[1][1]];
    let w2 = [w2[0][0], w2[0][1], w2[1][0], w2[1][1]];
    let w1inv = iinv(&w1);
    gamma_ball_reduced(z1r, z2r, radius, BFS_CUSHION)
        .into_iter()
        .map(|v| imul(&imul(&w1inv, &v), &w2))
        .collect()
}

/// All integer Möbius maps `gamma` with `dist(z1, gamma z2) < radius`.
///
/// Both points are reduced to the fundamental domain first (the witness
/// maps are recombined into the output), then the word graph over
/// `{T, T^{-1}, S}` is searched breadth-first with distance pruning.
/// Near the cusp the result is dominated by the translations
/// `z -> z + n`.  One representative per `{gamma, -gamma}` pair.
pub fn enumerate_gamma_near(z1: &Point, z2: &Point, radius: f64) -> Vec<MoebiusMap> {
    gamma_near_int(z1, z2, radius).iter().map(to_moebius).collect()
}

/// The group average `K_delta(u1, u2) = sum_gamma k_delta(u1, gamma u2)`.
///
/// The sum runs over `gamma` with `dist(z1, gamma z2) < 2 delta`: a
/// crossing of the two `delta`-arcs lies within `delta` of both base
/// points, so all other terms vanish.
pub fn k_delta_sum(u1: &UnitTangent, u2: &UnitTangent, p: &KernelParams) -> usize {
    let g1 = frame_of_tangent(u1);
    let g2 = frame_of_tangent(u2);
    enumerate_gamma_near(&u1.base(), &u2.base(), 2.0 * p.delta)
        .iter()
        .filter(|g| k_delta_frames(&g1, &g.mul(&g2), p).is_some())
        .count()
}

// ---------------------------------------------------------------------------
// Volume identity.
// ---------------------------------------------------------------------------

/// `(cos theta1 - cos theta2) delta^2`: the exact value of
/// `int k_delta((i, up), g) dg` in the Haar normalization
/// `dg = dx dy dpsi / y^2`, `psi in [0, pi)`.
pub fn volume_target(p: &KernelParams) -> f64 {
    (p.theta1.cos() - p.theta2.cos()) * p.delta * p.delta
}

#[derive(Debug, Clone, Copy)]
pub struct VolumeReport {
    pub estimate: f64,
    pub stderr: f64,
    pub target: f64,
    pub samples: u64,
}

impl VolumeReport {
    /// `|estimate - target|` in units of the standard error.
    pub fn sigmas(&self) -> f64 {
        if self.stderr > 0.0 {
            (self.estimate - self.target).abs() / self.stderr
        } else if self.estimate == self.target {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Monte Carlo check of the plane volume identity.
///
/// Samples `(x, y, psi)` with density `dx dy dpsi / y^2` from a box that
/// contains the support of `k_delta((i, up), ·)` (all admissible second
/// frames sit within `2 delta` of `i`; the box takes `2.2 delta` of
/// slack in every direction, with `1/y` sampled uniformly so the `y`
/// marginal is exact).  Sample-parallel and deterministic: the stream is
/// split into fixed-size tasks seeded by `(seed, task)`, so the result
/// depends only on `(seed, samples)`, never on the thread count.
pub fn check_volume_identity(
    p: &KernelParams,
    samples: u64,
    seed: u64,
    threads: usize,
) -> VolumeReport {
    assert!(samples >= 10_000, "need at least 10^4 samples");
    let pad = 2.2 * p.delta;
    let xw = 3.0 * pad.sinh();
    let ylo = (-pad).exp() / 1.5;
    let yhi = pad.exp() * 1.5;
    let (wlo, whi) = (1.0 / yhi, 1.0 / ylo);
    let boxvol = 2.0 * xw * (whi - wlo) * PI;

    const TASK: u64 = 1 << 16;
    let tasks = samples.div_ceil(TASK);
    let run = |task: u64| -> u64 {
        let n = TASK.min(samples - task * TASK);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, task));
        let id = MoebiusMap::identity();
        let mut hits = 0u64;
        for _ in 0..n {
            let x = rng.gen_range(-xw..xw);
            let w = rng.gen_range(wlo..whi);
            let psi = rng.gen_range(0.0..PI);
            let g2 = frame_from_iwasawa(x, 1.0 / w, psi);
            if k_delta_frames(&id, &g2, p).is_some() {
                hits += 1;
            }
        }
        hits
    };

    let threads = threads.max(1).min(64) as u64;
    let hits: u64 = if threads == 1 || tasks == 1 {
        (0..tasks).map(run).sum()
    } else {
        // Tasks are dealt round-robin; u64 addition is exact, so the
        // total is independent of the partition.
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads.min(tasks))
                .map(|w| {
                    let run = &run;
                    scope.spawn(move || {
                        (w..tasks).step_by(threads as usize).map(run).sum::<u64>()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).sum()
        })
    };

    let phat = hits as f64 / samples as f64;
    VolumeReport {
        estimate: phat * boxvol,
        stderr: boxvol * (phat * (1.0 - phat) / samples as f64).sqrt(),
        target: volume_target(p),
        samples,
    }
}

/// Deterministic cross-check of the volume identity through the flow
/// chart: the admissible region is `t1, t2 in (0, delta)` with the chart
/// turn `phi` in the two arcs where `(2 pi - phi) mod pi` falls in the
/// window, and the chart volume density is `1/2 |sin phi|` — evaluated
/// here numerically from the chart itself, not from the closed form.
pub fn chart_volume(p: &KernelParams, nodes: usize) -> f64 {
    let (xs, ws) = crate::special::gauss_legendre(nodes.max(8));
    let mut total = 0.0;
    // alpha = 2 pi - phi in (theta1, theta2) or (theta1 + pi, theta2 + pi)
    let phi_arcs = [
        (2.0 * PI - p.theta2, 2.0 * PI - p.theta1),
        (PI - p.theta2, PI - p.theta1),
    ];
    for (plo, phi_hi) in phi_arcs {
        if phi_hi - plo <= 0.0 {
            continue;
        }
        let (pc, pr) = (0.5 * (plo + phi_hi), 0.5 * (phi_hi - plo));
        let (tc, tr) = (0.5 * p.delta, 0.5 * p.delta);
        for (i, &xi) in xs.iter().enumerate() {
            let t1 = tc + tr * xi;
            for (j, &xj) in xs.iter().enumerate() {
                let t2 = tc + tr * xj;
                for (k, &xk) in xs.iter().enumerate() {
                    let phi = pc + pr * xk;
                    total += ws[i] * ws[j] * ws[k] * tr * tr * pr * psi_density(t1, phi, t2);
                }
            }
        }
    }
    total
}

// ---------------------------------------------------------------------------
// Count identity for pairs of families.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CountIdentityReport {
    pub d1: i64,
    pub d2: i64,
    pub delta: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub cells_per_delta: usize,
    /// Double-integral quadrature `sum K · h^2 / delta^2` (equals
    /// `hits / m^2` exactly, `m` = cells per delta).
    pub quadrature: f64,
    /// `quadrature` rounded to the nearest integer.
    pub rounded: i64,
    /// Windowed event total from the intersect side.
    pub events: usize,
    /// The oriented crossing total `2 · events` the quadrature must hit.
    pub oriented_count: i64,
    /// Integer-exact agreement: the raw hit count is divisible by `m^2`
    /// and the quotient equals `oriented_count`.
    pub exact: bool,
}

struct MemberGrid {
    frames: Vec<MoebiusMap>,
    points: Vec<Point>,
}

/// Place the lattice origin inside the largest gap of the per-member
/// event parameters so that no `delta`-rectangle straddles the period
/// seam: every event keeps clearance `>= 3h` behind the seam and
/// `>= delta + 3h` ahead of it.  With exact spacing `h = delta / m`,
/// each half-open rectangle side `(p - delta, p)` then contains exactly
/// `m` lattice points.
fn lattice_origin(params: &mut Vec<f64>, period: f64, delta: f64, h: f64) -> f64 {
    let fallback = 0.618_033_988_75 * h;
    if params.is_empty() {
        return fallback;
    }
    params.sort_by(|a, b| a.partial_cmp(b).expect("finite parameters"));
    let mut best = (0.0f64, 0.0f64); // (gap length, gap start)
    for i in 0..params.len() {
        let next = if i + 1 == params.len() {
            params[0] + period
        } else {
            params[i + 1]
        };
        let gap = next - params[i];
        if gap > best.0 {
            best = (gap, params[i]);
        }
    }
    if best.0 < delta + 6.0 * h {
        return fallback;
    }
    (best.1 + 0.5 * (best.0 - delta)).rem_euclid(period)
}

/// Arc-length lattice (spacing exactly `delta / m`) along each member of
/// a family, with per-member origins chosen by [`lattice_origin`]; each
/// node is reduced and stored as a frame.
fn family_grids(
    fam: &GeodesicFamily,
    events_by_member: Vec<Vec<f64>>,
    delta: f64,
    m: usize,
) -> Vec<MemberGrid> {
    let h = delta / m as f64;
    fam.members
        .iter()
        .zip(events_by_member)
        .map(|(member, mut params)| {
            let origin = lattice_origin(&mut params, member.period, delta, h);
            let n = (member.period / h).floor() as usize;
            let mut frames = Vec::with_capacity(n);
            let mut points = Vec::with_capacity(n);
            for k in 0..n {
                let u = member.tangent_at(origin + k as f64 * h);
                let (z, w) = reduce_to_fundamental_domain_int(Point::new(u.x, u.y));
                frames.push(MoebiusMap::from_integer(&w).mul(&frame_of_tangent(&u)));
                points.push(z);
            }
            MemberGrid { frames, points }
        })
        .collect()
}

/// Group the global walk parameters of a family crossing report by
/// member (all members share one period).
fn params_by_member(fam: &GeodesicFamily, params: impl Iterator<Item = f64>) -> Vec<Vec<f64>> {
    let mut by_member = vec![Vec::new(); fam.members.len()];
    let period = fam.members[0].period;
    for p in params {
        let idx = ((p / period).floor() as usize).min(by_member.len() - 1);
        by_member[idx].push(p - idx as f64 * period);
    }
    by_member
}

fn grids_for_pair(
    disc1: &Discriminant,
    disc2: &Discriminant,
    delta: f64,
    m: usize,
) -> (Vec<MemberGrid>, Vec<MemberGrid>, usize) {
    let fam1 = GeodesicFamily::new(disc1);
    let fam2 = GeodesicFamily::new(disc2);
    // Full-window events drive the seam placement on both axes (a
    // superset of every windowed rectangle set); the windowed event
    // count is taken separately by the caller.
    let ev12 = family_vs_family(&fam1, disc2, (0.0, PI));
    let ev21 = family_vs_family(&fam2, disc1, (0.0, PI));
    let grids1 = family_grids(
        &fam1,
        params_by_member(&fam1, ev12.events.iter().map(|e| e.param_on_beta)),
        delta,
        m,
    );
    let grids2 = family_grids(
        &fam2,
        params_by_member(&fam2, ev21.events.iter().map(|e| e.param_on_beta)),
        delta,
        m,
    );
    (grids1, grids2, ev12.count())
}

/// Copies of the reduced fundamental cell that can carry a reduced point
/// within a small distance of another reduced point: the word ball of
/// length 4 is enough for radii up to ~0.15 anywhere on the thick part.
fn neighbor_copies() -> Vec<IMat> {
    let mut seen: HashSet<IMat> = HashSet::new();
    let mut layer = vec![I_ID];
    seen.insert(I_ID);
    for _ in 0..4 {
        let mut next = Vec::new();
        for v in &layer {
            for step in [I_T, I_TINV, I_S] {
                let child = icanon(imul(v, &step));
                if seen.insert(child) {
                    next.push(child);
                }
            }
        }
        layer = next;
    }
    seen.into_iter().collect()
}

const BUCKET_CELL: f64 = 0.25;

fn bucket_key(x: f64, y: f64) -> (i64, i64) {
    ((x / BUCKET_CELL).floor() as i64, (y / BUCKET_CELL).floor() as i64)
}

/// Numerically exact quadrature of the double integral of `K_delta` over
/// the walks of the two families, divided by `delta^2`, compared against
/// the oriented crossing total from the intersect side.
///
/// The integrand is the indicator of a finite union of axis-aligned
/// `delta x delta` parameter rectangles, one per (walk passage, walk
/// passage) crossing incidence; with lattice spacing exactly
/// `delta / cells`, per-member origins seated away from every rectangle
/// (the seam trick above), each rectangle contains exactly `cells^2`
/// lattice points, so the quadrature is `hits / cells^2` with no error
/// term at all — the comparison is integer-exact.
///
/// Each walk double-covers its point set, so the oriented total is twice
/// the event count reported by [`family_vs_family`].
pub fn check_count_identity(
    disc1: &Discriminant,
    disc2: &Discriminant,
    p: &KernelParams,
    cells_per_delta: usize,
) -> Result<CountIdentityReport, KernelError> {
    precheck_count_identity(disc1, disc2, cells_per_delta)?;
    let m = cells_per_delta;
    if p.theta1 >= p.theta2 {
        return Ok(assemble_count_report(disc1, disc2, p, m, 0, 0));
    }
    let (grids1, grids2, _) = grids_for_pair(disc1, disc2, p.delta, m);
    let events = family_vs_family(&GeodesicFamily::new(disc1), disc2, (p.theta1, p.theta2)).count();

    // Spatial prefilter: hash every near-copy of every second-family
    // node into Euclidean buckets, so each first-family node only pays
    // for genuinely close pairs before any group search runs.
    let copies = neighbor_copies();
    let flat2: Vec<(&MoebiusMap, Point)> = grids2
        .iter()
        .flat_map(|g| g.frames.iter().zip(g.points.iter().copied()))
        .collect();
    let mut buckets: HashMap<(i64, i64), Vec<(u32, f64, f64)>> = HashMap::new();
    for (j, &(_, z)) in flat2.iter().enumerate() {
        for cp in &copies {
            let q = iapply(cp, z);
            if q.x.abs() <= 1.9 && q.y >= 0.2 && q.y <= 4.2 {
                buckets.entry(bucket_key(q.x, q.y)).or_default().push((j as u32, q.x, q.y));
            }
        }
    }

    let rho = 2.0 * p.delta + 0.01;
    let mut hits: u64 = 0;
    let mut cand: Vec<u32> = Vec::new();
    for g1 in &grids1 {
        for (f1, &z1) in g1.frames.iter().zip(g1.points.iter()) {
            cand.clear();
            let xr = z1.y * rho.sinh();
            let (ylo, yhi) = (z1.y * (-rho).exp(), z1.y * rho.exp());
            let (kx0, kx1) = (
                ((z1.x - xr) / BUCKET_CELL).floor() as i64,
                ((z1.x + xr) / BUCKET_CELL).floor() as i64,
            );
            let (ky0, ky1) = (
                (ylo / BUCKET_CELL).floor() as i64,
                (yhi / BUCKET_CELL).floor() as i64,
            );
            for kx in kx0..=kx1 {
                for ky in ky0..=ky1 {
                    if let Some(entries) = buckets.get(&(kx, ky)) {
                        for &(j, qx, qy) in entries {
                            if dist(z1, Point::new(qx, qy)) < rho {
                                cand.push(j);
                            }
                        }
                    }
                }
            }
            cand.sort_unstable();
            cand.dedup();
            for &j in &cand {
                let (f2, z2) = flat2[j as usize];
                for v in gamma_ball_reduced(z1, z2, 2.0 * p.delta, BFS_CUSHION) {
                    if k_delta_frames(f1, &to_moebius(&v).mul(f2), p).is_some() {
                        hits += 1;
                    }
                }
            }
        }
    }
    Ok(assemble_count_report(disc1, disc2, p, m, hits, events))
}

/// Reference implementation of [`check_count_identity`]: identical grids
/// and kernel, but a full quadratic scan over all node pairs with no
/// spatial prefilter.  Used to validate the prefilter.
pub fn check_count_identity_brute(
    disc1: &Discriminant,
    disc2: &Discriminant,
    p: &KernelParams,
    cells_per_delta: usize,
) -> Result<CountIdentityReport, KernelError> {
    precheck_count_identity(disc1, disc2, cells_per_delta)?;
    let m = cells_per_delta;
    if p.theta1 >= p.theta2 {
        return Ok(assemble_count_report(disc1, disc2, p, m, 0, 0));
    }
    let (grids1, grids2, _) = grids_for_pair(disc1, disc2, p.delta, m);
    let events = family_vs_family(&GeodesicFamily::new(disc1), disc2, (p.theta1, p.theta2)).count();
    let mut hits: u64 = 0;
    for g1 in &grids1 {
        for (f1, &z1) in g1.frames.iter().zip(g1.points.iter()) {
            for g2 in &grids2 {
                for (f2, &z2) in g2.frames.iter().zip(g2.points.iter()) {
                    for v in gamma_ball_reduced(z1, z2, 2.0 * p.delta, BFS_CUSHION) {
                        if k_delta_frames(f1, &to_moebius(&v).mul(f2), p).is_some() {
                            hits += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(assemble_count_report(disc1, disc2, p, m, hits, events))
}

fn precheck_count_identity(
    disc1: &Discriminant,
    disc2: &Discriminant,
    cells_per_delta: usize,
) -> Result<(), KernelError> {
    if cells_per_delta < MIN_CELLS_PER_DELTA {
        return Err(KernelError::GridTooCoarse {
            cells: cells_per_delta,
            min: MIN_CELLS_PER_DELTA,
        });
    }
    if disc1.value() == disc2.value() {
        return Err(KernelError::SameDiscriminant { d: disc1.value() });
    }
    for d in [disc1.value(), disc2.value()] {
        if d > MAX_COUNT_IDENTITY_DISC {
            return Err(KernelError::DiscriminantTooLarge { d, max: MAX_COUNT_IDENTITY_DISC });
        }
    }
    Ok(())
}

fn assemble_count_report(
    disc1: &Discriminant,
    disc2: &Discriminant,
    p: &KernelParams,
    m: usize,
    hits: u64,
    events: usize,
) -> CountIdentityReport {
    let mm = (m * m) as u64;
    let quadrature = hits as f64 / mm as f64;
    let rounded = quadrature.round() as i64;
    let oriented_count = 2 * events as i64;
    CountIdentityReport {
        d1: disc1.value(),
        d2: disc2.value(),
        delta: p.delta,
        theta1: p.theta1,
        theta2: p.theta2,
        cells_per_delta: m,
        quadrature,
        rounded,
        events,
        oriented_count,
        exact: hits % mm == 0 && rounded == oriented_count,
    }
}

// ---------------------------------------------------------------------------
// Weighted identity for a segment against a family.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelfCrossKind {
    /// Two parameters of the extended segment meet transversally on the
    /// surface.
    Transversal,
    /// Two stretches run along the same oriented geodesic (the segment
    /// wraps a closed geodesic).
    Parallel,
    /// Two stretches run along the same geodesic with opposite
    /// orientations (a cone-point bounce folds the segment onto itself).
    Reversed,
}

/// A self-intersection of a segment's surface image.
#[derive(Debug, Clone, Copy)]
pub struct SelfCrossing {
    pub kind: SelfCrossKind,
    /// Representative arc-length parameters (from the segment start) of
    /// the two offending stretches.
    pub param1: f64,
    pub param2: f64,
}

/// Scan a segment's surface image for self-intersections.
///
/// The segment is tiled into stretches of length `<= 0.3`; for every
/// tile pair, every group element bringing the tiles within reach is
/// classified through the relative frame: a transversal crossing of the
/// two lifted lines with both parameters on the segment (and distinct),
/// a coincident same-orientation overlap, or a coincident reversed
/// overlap.  Returns the first offence found, `None` when the image is
/// embedded.
pub fn segment_self_crossing(seg: &Segment) -> Option<SelfCrossing> {
    let (lo, hi) = seg.bounds();
    let total = hi - lo;
    let n = (total / 0.3).ceil().max(1.0) as usize;
    let step = total / n as f64;
    let arc = seg.arc();

    let mut frames = Vec::with_capacity(n + 1);
    let mut points = Vec::with_capacity(n + 1);
    let mut wits = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let u = arc.tangent_at(lo + k as f64 * step);
        let (z, w) = reduce_to_fundamental_domain_int(Point::new(u.x, u.y));
        frames.push(MoebiusMap::from_integer(&w).mul(&frame_of_tangent(&u)));
        points.push(z);
        wits.push([w[0][0], w[0][1], w[1][0], w[1][1]]);
    }

    const COINCIDE_EPS: f64 = 1e-9;
    let radius = (2.0 * step + 0.2).min(MAX_ENUM_RADIUS);
    for i in 0..n {
        for j in i..n {
            for v in gamma_ball_reduced(points[i], points[j], radius, BFS_CUSHION) {
                let m = frames[i].inv().mul(&to_moebius(&v).mul(&frames[j]));
                let [[mp, mq], [mr, ms]] = m.m;
                // The coincidence cases sit on the boundary of the
                // crossing chart: arithmetic noise in the off-diagonal
                // entries would otherwise feed `split_crossing` a
                // garbage log-ratio, so test them first.
                if mr.abs() < COINCIDE_EPS && mq.abs() < COINCIDE_EPS {
                    // Same oriented axis; the group element shifts it by
                    // c.  The tautological relation between tiles of one
                    // lift is the identity after the reduction witnesses
                    // are recombined - skip exactly that.
                    let graw = imul(&iinv(&wits[i]), &imul(&v, &wits[j]));
                    if icanon(graw) == I_ID {
                        continue;
                    }
                    let c = (mp / ms).abs().ln();
                    // Tile j occupies [c, c + step] in tile i's chart.
                    if c.abs() < step - 1e-9 {
                        return Some(SelfCrossing {
                            kind: SelfCrossKind::Parallel,
                            param1: i as f64 * step + c.max(0.0),
                            param2: j as f64 * step,
                        });
                    }
                } else if mp.abs() < COINCIDE_EPS && ms.abs() < COINCIDE_EPS {
                    // Same axis, reversed: chart parameter t -> c - t.
                    let c = (-mq / mr).ln();
                    // Tile j occupies [c - step, c] in tile i's chart.
                    if c > 1e-9 && c - step < step - 1e-9 {
                        return Some(SelfCrossing {
                            kind: SelfCrossKind::Reversed,
                            param1: i as f64 * step + (c - step).max(0.0),
                            param2: j as f64 * step + (c - step).max(0.0),
                        });
                    }
                } else if let Some(cr) = split_crossing(&m) {
                    let s1 = i as f64 * step + cr.t1;
                    let s2 = j as f64 * step + cr.t2;
                    let on = |s: f64| s > -1e-7 && s < total + 1e-7;
                    // Accept only crossings owned by this tile pair.  The
                    // chart sees crossings anywhere along the geodesic,
                    // but every crossing is owned by the pair of tiles
                    // holding its two parameters (whose ball reaches it
                    // within 2 step), and clipping to the owner makes the
                    // scan deterministic.
                    let tile = |k: usize, s: f64| {
                        s > k as f64 * step - 1e-6 && s < (k + 1) as f64 * step + 1e-6
                    };
                    if on(s1) && on(s2) && tile(i, s1) && tile(j, s2) && (s1 - s2).abs() > 1e-6 {
                        return Some(SelfCrossing {
                            kind: SelfCrossKind::Transversal,
                            param1: s1,
                            param2: s2,
                        });
                    }
                }
            }
        }
    }
    None
}

#[derive(Debug, Clone)]
pub struct WeightedIdentityReport {
    pub d: i64,
    pub delta: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub beta_length: f64,
    /// `(1 / (2 delta^2)) ∫∫ K` over (extended segment) x (family walk).
    pub lhs: f64,
    /// Weighted event sum over the extension `beta_0`.
    pub rhs: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    /// `(extension parameter, weight)` per crossing event.
    pub crossings: Vec<(f64, f64)>,
    pub degenerate: usize,
}

/// The min-weight of an event at extension parameter `p` against a
/// segment of length `len` extended forward by `delta`.
fn event_weight(p: f64, delta: f64, len: f64) -> f64 {
    (p / delta).min(1.0).min((len + delta - p) / delta)
}

const WEIGHTED_CELLS_PER_DELTA: usize = 16;

/// Exact-quadrature check of the weighted crossing identity for a
/// segment `beta` against the family of `d`.
///
/// The left side integrates `K_delta` over (the `delta`-extension of
/// `beta`) x (the family walks), normalized by `1 / (2 delta^2)` — the
/// factor 2 because each walk double-covers its point set.  The
/// `beta`-axis is cut exactly at the jump parameters `{p - delta, p}` of
/// the events; the walk axes carry exact lattices seated by the same
/// seam rule as [`check_count_identity`], so the quadrature has no
/// discretization error.  The right side sums
/// `min(p/delta, 1, (l + delta - p)/delta)` over the crossings of the
/// extension with the family, each surface crossing once.
///
/// The identity requires the extended segment to be embedded; a
/// self-intersecting extension is rejected with the offending
/// parameters.
pub fn check_weighted_identity(
    beta: &Segment,
    disc: &Discriminant,
    p: &KernelParams,
) -> Result<WeightedIdentityReport, KernelError> {
    let len = beta.length();
    if len <= p.delta {
        return Err(KernelError::SegmentTooShort { len, delta: p.delta });
    }
    let (lo, _) = beta.bounds();
    let beta0 = Segment::from_tangent(beta.arc().tangent_at(lo), len + p.delta)?;
    if let Some(sc) = segment_self_crossing(&beta0) {
        return Err(KernelError::SelfIntersectingExtension {
            kind: sc.kind,
            param1: sc.param1,
            param2: sc.param2,
        });
    }
    if p.theta1 >= p.theta2 {
        return Ok(WeightedIdentityReport {
            d: disc.value(),
            delta: p.delta,
            theta1: p.theta1,
            theta2: p.theta2,
            beta_length: len,
            lhs: 0.0,
            rhs: 0.0,
            abs_err: 0.0,
            rel_err: 0.0,
            crossings: Vec::new(),
            degenerate: 0,
        });
    }

    let report = segment_vs_family(&beta0, disc, (p.theta1, p.theta2));
    let crossings: Vec<(f64, f64)> = report
        .events
        .iter()
        .map(|e| (e.param_on_beta, event_weight(e.param_on_beta, p.delta, len)))
        .collect();
    let rhs: f64 = crossings.iter().map(|&(_, w)| w).sum();

    // --- Left side. ---
    let fam = GeodesicFamily::new(disc);
    let (lo0, _) = beta0.bounds();

    // Walk passage parameters through the event points give the jump
    // positions on the family axes (for seam placement) and, clipped,
    // the jump positions on the beta axis.
    let mut passes_by_member: Vec<Vec<f64>> = vec![Vec::new(); fam.members.len()];
    let line = {
        let mut a = beta0.arc().clone();
        a.window = Window::Full;
        a
    };
    for ev in &report.events {
        let praw = beta0.arc().point_at(lo0 + ev.param_on_beta);
        let (pred, wred) = reduce_to_fundamental_domain_int(praw);
        for (mi, member) in fam.members.iter().enumerate() {
            for sub in &member.subarcs {
                let sub_arc = sub.arc();
                let mid = sub_arc.point_at(sub.t_start + 0.5 * sub.len);
                let radius = (0.5 * sub.len + 0.05).min(MAX_ENUM_RADIUS);
                for v in gamma_near_int(&mid, &pred, radius) {
                    let g = imul(&v, &[wred[0][0], wred[0][1], wred[1][0], wred[1][1]]);
                    let gb = [
                        [BigInt::from(g[0]), BigInt::from(g[1])],
                        [BigInt::from(g[2]), BigInt::from(g[3])],
                    ];
                    if let Some(cr) = intersect_arcs(&sub_arc, &line.translate(&gb)) {
                        passes_by_member[mi].push(sub.s_start + (cr.t1 - sub.t_start));
                    }
                }
            }
        }
    }
    for qs in &mut passes_by_member {
        qs.sort_by(|a, b| a.partial_cmp(b).expect("finite parameters"));
        qs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    }

    let grids = family_grids(&fam, passes_by_member, p.delta, WEIGHTED_CELLS_PER_DELTA);
    let h = p.delta / WEIGHTED_CELLS_PER_DELTA as f64;

    // Beta-axis cells aligned to the event jumps, restricted to the
    // un-extended window [0, len] (the extension carries no mass:
    // rectangles live behind their event).
    let mut cuts = vec![0.0, len];
    for &(pe, _) in &crossings {
        for c in [pe - p.delta, pe] {
            if c > 1e-12 && c < len - 1e-12 {
                cuts.push(c);
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite parameters"));
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut lhs_raw = 0.0;
    for win in cuts.windows(2) {
        let width = win[1] - win[0];
        if width < 1e-12 {
            continue;
        }
        let u = beta0.arc().tangent_at(lo0 + 0.5 * (win[0] + win[1]));
        let (z1, w1) = reduce_to_fundamental_domain_int(Point::new(u.x, u.y));
        let f1 = MoebiusMap::from_integer(&w1).mul(&frame_of_tangent(&u));
        let mut row = 0u64;
        for grid in &grids {
            for (f2, &z2) in grid.frames.iter().zip(grid.points.iter()) {
                for v in gamma_ball_reduced(z1, z2, 2.0 * p.delta, BFS_CUSHION) {
                    if k_delta_frames(&f1, &to_moebius(&v).mul(f2), p).is_some() {
                        row += 1;
                    }
                }
            }
        }
        lhs_raw += width * h * row as f64;
    }
    let lhs = lhs_raw / (2.0 * p.delta * p.delta);

    let abs_err = (lhs - rhs).abs();
    Ok(WeightedIdentityReport {
        d: disc.value(),
        delta: p.delta,
        theta1: p.theta1,
        theta2: p.theta2,
        beta_length: len,
        lhs,
        rhs,
        abs_err,
        rel_err: abs_err / rhs.abs().max(1e-300),
        crossings,
        degenerate: report.degenerate,
    })
}

// ---------------------------------------------------------------------------
// Cusp blow-up.
// ---------------------------------------------------------------------------

/// The horocyclic tangent at Euclidean height `height` whose forward
/// `delta`-arc runs clockwise along the circle `|z| = height`.
///
/// The arc spans position angles `pi/2 + alpha` down to `pi/2 - alpha`
/// with `alpha = 2 arctan(e^{delta/2}) - pi/2` (hyperbolic length
/// exactly `delta`).  High up the cusp, the translates `z -> z + n`
/// shear such an arc across itself, so the diagonal kernel sum grows
/// linearly with the height.
pub fn horocycle_tangent(delta: f64, height: f64) -> UnitTangent {
    let alpha = 2.0 * (0.5 * delta).exp().atan() - 0.5 * PI;
    UnitTangent::new(-height * alpha.sin(), height * alpha.cos(), alpha)
}

#[derive(Debug, Clone)]
pub struct CuspProfile {
    pub delta: f64,
    pub theta: f64,
    pub heights: Vec<f64>,
    pub counts: Vec<usize>,
    /// Least-squares slope of `ln count` against `ln height`.
    pub slope: f64,
    pub r_squared: f64,
}

/// Diagonal kernel sums `K_delta(u, u)` along the horocyclic tangents of
/// [`horocycle_tangent`] at the given heights, window `(0, theta)`, with
/// a log-log least-squares fit of the growth.
pub fn cusp_blowup(delta: f64, theta: f64, heights: &[f64]) -> CuspProfile {
    let p = KernelParams::new(delta, 0.0, theta).expect("blow-up window");
    let counts: Vec<usize> = heights
        .iter()
        .map(|&r| {
            let u = horocycle_tangent(delta, r);
            k_delta_sum(&u, &u, &p)
        })
        .collect();
    let (slope, r_squared) = if counts.iter().any(|&c| c == 0) || heights.len() < 2 {
        (0.0, 0.0)
    } else {
        let xs: Vec<f64> = heights.iter().map(|r| r.ln()).collect();
        let ys: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
        let n = xs.len() as f64;
        let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
        if sxx > 0.0 && syy > 0.0 {
            (sxy / sxx, (sxy * sxy) / (sxx * syy))
        } else {
            (0.0, 0.0)
        }
    };
    CuspProfile {
        delta,
        theta,
        heights: heights.to_vec(),
        counts,
        slope,
        r_squared,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperbolic::geodesic_through;

    fn tangent_before(x: f64, y: f64, theta: f64, back: f64) -> UnitTangent {
        let arc = geodesic_through(&UnitTangent::new(x, y, theta));
        let t = arc.param_of(Point::new(x, y));
        arc.tangent_at(t - back)
    }

    #[test]
    fn crossing_at_i_right_angle() {
        let u1 = tangent_before(0.0, 1.0, 0.0, 0.2);
        let u2 = tangent_before(0.0, 1.0, 0.5 * PI, 0.2);
        let p = KernelParams::new(0.5, 0.25 * PI, 0.75 * PI).unwrap();
        let a = k_delta(&u1, &u2, &p).expect("arcs cross at i");
        assert!((a - 0.5 * PI).abs() < 1e-9, "angle {a}");
        let b = k_delta(&u2, &u1, &p).expect("symmetric crossing");
        assert!((b - 0.5 * PI).abs() < 1e-9, "angle {b}");
        // Beyond reach: same construction, delta too small to meet.
        let tight = KernelParams::new(0.15, 0.25 * PI, 0.75 * PI).unwrap();
        assert_eq!(k_delta(&u1, &u2, &tight), None);
    }

    #[test]
    fn crossing_params_and_angle_match_arc_intersection() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let delta = 0.4;
        let p = KernelParams::full(delta);
        let mut tested = 0;
        while tested < 200 {
            let px = rng.gen_range(-0.4..0.4);
            let py = rng.gen_range(0.9..1.6);
            let ta = rng.gen_range(0.0..2.0 * PI);
            let tb = rng.gen_range(0.0..2.0 * PI);
            let s1 = rng.gen_range(0.02..delta - 0.02);
            let s2 = rng.gen_range(0.02..delta - 0.02);
            let expected = angle_mod_pi(tb - ta);
            if expected < 1e-3 || expected > PI - 1e-3 {
                continue;
            }
            let u1 = tangent_before(px, py, ta, s1);
            let u2 = tangent_before(px, py, tb, s2);
            let a = k_delta(&u1, &u2, &p).expect("constructed crossing");
            assert!((a - expected).abs() < 1e-9, "angle {a} vs {expected}");
            // The flow-chart parameters locate the same crossing.
            let m = frame_of_tangent(&u1).inv().mul(&frame_of_tangent(&u2));
            let cr = split_crossing(&m).unwrap();
            assert!((cr.t1 - s1).abs() < 1e-9 && (cr.t2 - s2).abs() < 1e-9);
            // And the exact arc-crossing predicate agrees.
            let seg1 = Segment::from_tangent(u1, delta).unwrap();
            let seg2 = Segment::from_tangent(u2, delta).unwrap();
            let ac = intersect_arcs(seg1.arc(), seg2.arc()).expect("arcs cross");
            assert!((angle_mod_pi(ac.angle_ccw) - a).abs() < 1e-9);
            tested += 1;
        }
    }

    #[test]
    fn invariance_under_plane_motions() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = KernelParams::new(0.3, 0.4, 2.4).unwrap();
        let mut checked = 0;
        for _ in 0..4000 {
            if checked >= 1000 {
                break;
            }
            let u1 = UnitTangent::new(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(0.8..1.8),
                rng.gen_range(0.0..2.0 * PI),
            );
            let u2 = UnitTangent::new(
                u1.x + rng.gen_range(-0.5..0.5),
                (u1.y + rng.gen_range(-0.5..0.5)).max(0.3),
                rng.gen_range(0.0..2.0 * PI),
            );
            // Skip configurations inside the boundary shell, where a
            // rounding flip is legitimate.
            let m = frame_of_tangent(&u1).inv().mul(&frame_of_tangent(&u2));
            let [[mp, mq], [mr, ms]] = m.m;
            if mr.abs() < 1e-6 || mq.abs() < 1e-6 || (mp * ms).abs() < 1e-6 {
                continue;
            }
            if let Some(cr) = split_crossing(&m) {
                let margin = [
                    cr.t1,
                    p.delta - cr.t1,
                    cr.t2,
                    p.delta - cr.t2,
                    (angle_mod_pi(cr.angle) - p.theta1).abs(),
                    (angle_mod_pi(cr.angle) - p.theta2).abs(),
                ]
                .into_iter()
                .fold(f64::INFINITY, f64::min);
                if margin.abs() < 1e-6 {
                    continue;
                }
            }
            let g = frame_from_iwasawa(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(0.2..5.0),
                rng.gen_range(0.0..PI),
            );
            let before = k_delta(&u1, &u2, &p);
            let after = k_delta(&g.apply_tangent(u1), &g.apply_tangent(u2), &p);
            match (before, after) {
                (None, None) => {}
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-6, "{a} vs {b}"),
                other => panic!("invariance broken: {other:?}"),
            }
            checked += 1;
        }
        assert!(checked >= 1000);
    }

    #[test]
    fn indicator_vanishes_beyond_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = KernelParams::full(0.2);
        let mut far = 0;
        for _ in 0..2000 {
            let u1 = UnitTangent::new(
                rng.gen_range(-1.5..1.5),
                rng.gen_range(0.4..3.0),
                rng.gen_range(0.0..2.0 * PI),
            );
            let u2 = UnitTangent::new(
                rng.gen_range(-1.5..1.5),
                rng.gen_range(0.4..3.0),
                rng.gen_range(0.0..2.0 * PI),
            );
            if dist(u1.base(), u2.base()) >= 2.0 * p.delta {
                assert_eq!(k_delta(&u1, &u2, &p), None);
                far += 1;
            }
        }
        assert!(far > 1500);
    }

    #[test]
    fn gamma_ball_small_radius_cases() {
        // Generic base point: a radius below the injectivity radius sees
        // only the identity.
        let z = Point::new(0.13, 1.21);
        let only_id = enumerate_gamma_near(&z, &z, 0.1);
        assert_eq!(only_id.len(), 1);
        let m = only_id[0].m;
        assert!((m[0][0].abs() - 1.0).abs() < 1e-12 && m[0][1].abs() < 1e-12);
        assert!(m[1][0].abs() < 1e-12);

        // At the order-2 cone point the stabilizer comes along: S fixes
        // i exactly, so the ball holds two classes, the identity and S.
        let i = Point::new(0.0, 1.0);
        let at_i = enumerate_gamma_near(&i, &i, 0.1);
        assert_eq!(at_i.len(), 2);
        let trace_zero = at_i
            .iter()
            .filter(|g| (g.m[0][0] + g.m[1][1]).abs() < 1e-12)
            .count();
        assert_eq!(trace_zero, 1, "exactly one elliptic class fixing i");
    }

    #[test]
    fn gamma_ball_high_in_the_cusp_is_parabolic() {
        let z = Point::new(0.0, 50.0);
        let ball = enumerate_gamma_near(&z, &z, 1.0);
        // arccosh(1 + n^2 / (2 * 50^2)) < 1  <=>  |n| <= 52.
        assert_eq!(ball.len(), 105);
        for g in &ball {
            assert!(g.m[1][0].abs() < 1e-12, "parabolic translations only");
        }
        let shifts: HashSet<i64> = ball
            .iter()
            .map(|g| (g.m[0][1] / g.m[0][0]).round() as i64)
            .collect();
        assert_eq!(shifts.len(), 105);
        assert!(shifts.contains(&52) && shifts.contains(&-52) && shifts.contains(&0));
    }

    /// Exhaustive word enumeration up to length 12, no pruning.
    fn gamma_ball_exhaustive(z1: Point, z2: Point, radius: f64) -> HashSet<IMat> {
        let mut seen: HashSet<IMat> = HashSet::new();
        let mut layer = vec![I_ID];
        seen.insert(I_ID);
        for _ in 0..12 {
            let mut next = Vec::new();
            for v in &layer {
                for step in [I_T, I_TINV, I_S] {
                    let child = icanon(imul(v, &step));
                    if seen.insert(child) {
                        next.push(child);
                    }
                }
            }
            layer = next;
        }
        seen.into_iter().filter(|v| dist(z1, iapply(v, z2)) < radius).collect()
    }

    #[test]
    fn gamma_ball_complete_against_exhaustive_words() {
        // Both inputs reduced (|x| <= 1/2 and y >= 1.05 forces |z| > 1).
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..25 {
            let z1 = Point::new(rng.gen_range(-0.5..0.5), rng.gen_range(1.05..2.5));
            let z2 = Point::new(
                (z1.x + rng.gen_range(-0.3..0.3)).clamp(-0.5, 0.5),
                (z1.y + rng.gen_range(-0.3..0.3)).max(1.05),
            );
            for radius in [0.5, 1.5, 3.0] {
                let pruned: HashSet<IMat> = gamma_ball_reduced(z1, z2, radius, BFS_CUSHION)
                    .into_iter()
                    .collect();
                let full = gamma_ball_exhaustive(z1, z2, radius);
                assert_eq!(pruned, full, "radius {radius} at {z1:?} / {z2:?}");
            }
        }
    }

    #[test]
    fn gamma_ball_insensitive_to_fatter_cushion() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..20 {
            let z1 = Point::new(rng.gen_range(-0.5..0.5), rng.gen_range(1.05..8.0));
            let z2 = Point::new(rng.gen_range(-0.5..0.5), rng.gen_range(1.05..8.0));
            let lean: HashSet<IMat> =
                gamma_ball_reduced(z1, z2, 2.5, BFS_CUSHION).into_iter().collect();
            let fat: HashSet<IMat> = gamma_ball_reduced(z1, z2, 2.5, 4.0).into_iter().collect();
            assert_eq!(lean, fat);
        }
    }

    #[test]
    fn group_sum_at_most_one_on_the_thick_part() {
        // With delta = 0.1, two group terms both crossing would exhibit
        // a non-identity element of displacement < 4 delta = 0.4 near
        // the base points.  On the region below height 1.9 and at least
        // 0.45 from every cone point, the smallest displacements are
        // 2 dist(., i) > 0.5 (order 2), > 0.43 via the sinh bound at rho
        // (order 3), arccosh(1 + 1/(2 * 1.9^2)) ~ 0.52 (parabolic), and
        // 2 arccosh(3/2) ~ 1.92 (hyperbolic) - all above 0.4, so the
        // kernel sum is forced to be 0 or 1 there.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p = KernelParams::full(0.1);
        let cone_free = |z: Point| {
            dist(z, Point::new(0.0, 1.0)) > 0.45
                && dist(z, Point::new(-0.5, 0.75f64.sqrt())) > 0.45
                && dist(z, Point::new(0.5, 0.75f64.sqrt())) > 0.45
        };
        let mut checked = 0;
        for _ in 0..5000 {
            if checked >= 400 {
                break;
            }
            let u1 = UnitTangent::new(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(1.45..1.9),
                rng.gen_range(0.0..2.0 * PI),
            );
            let u2 = UnitTangent::new(
                (u1.x + rng.gen_range(-0.2..0.2)).clamp(-0.5, 0.5),
                (u1.y + rng.gen_range(-0.2..0.2)).clamp(1.45, 1.9),
                rng.gen_range(0.0..2.0 * PI),
            );
            let cone_ok = |z: Point| {
                let (zr, _) = reduce_to_fundamental_domain_int(z);
                cone_free(zr) && zr.y <= 1.9
            };
            if !cone_ok(u1.base()) || !cone_ok(u2.base()) {
                continue;
            }
            assert!(k_delta_sum(&u1, &u2, &p) <= 1);
            checked += 1;
        }
        assert!(checked >= 400);
    }

    #[test]
    fn monte_carlo_volume_smoke() {
        let p = KernelParams::new(0.2, 0.25 * PI, 0.75 * PI).unwrap();
        let r = check_volume_identity(&p, 200_000, 424242, 1);
        assert!((r.target - 2.0f64.sqrt() * 0.04).abs() < 1e-15);
        assert!(r.sigmas() < 3.0, "estimate {} target {} stderr {}", r.estimate, r.target, r.stderr);
        // The estimate depends only on the seed, not the thread count.
        let r2 = check_volume_identity(&p, 200_000, 424242, 3);
        assert_eq!(r.estimate, r2.estimate);
        // Empty window.
        let empty = KernelParams::new(0.2, 1.0, 1.0).unwrap();
        let re = check_volume_identity(&empty, 10_000, 1, 1);
        assert_eq!(re.estimate, 0.0);
        assert_eq!(re.target, 0.0);
    }

    #[test]
    fn chart_volume_matches_closed_form() {
        for (d, t1, t2) in [
            (0.2, 0.25 * PI, 0.75 * PI),
            (0.35, 0.0, PI),
            (0.1, 0.3, 1.1),
        ] {
            let p = KernelParams::new(d, t1, t2).unwrap();
            let v = chart_volume(&p, 24);
            let target = volume_target(&p);
            assert!(
                (v - target).abs() <= 1e-6 * target.max(1e-12),
                "chart {v} vs {target}"
            );
        }
    }

    #[test]
    fn count_identity_exact_for_5_8() {
        let d5 = Discriminant::validate(5).unwrap();
        let d8 = Discriminant::validate(8).unwrap();
        let p = KernelParams::full(0.05);
        let r = check_count_identity(&d5, &d8, &p, 8).unwrap();
        assert_eq!(r.events, 4);
        assert_eq!(r.oriented_count, 8);
        assert_eq!(r.rounded, 8);
        assert!(r.exact, "quadrature {} not exact", r.quadrature);
        // Halving delta leaves the rounded value unchanged.
        let fine = KernelParams::full(0.025);
        let rf = check_count_identity(&d5, &d8, &fine, 8).unwrap();
        assert_eq!(rf.rounded, 8);
        assert!(rf.exact);
    }

    #[test]
    fn count_identity_window_partition_sums_to_full() {
        let d5 = Discriminant::validate(5).unwrap();
        let d8 = Discriminant::validate(8).unwrap();
        let cuts = [0.0, PI / 3.0, 2.0 * PI / 3.0, PI];
        let mut total = 0;
        for w in cuts.windows(2) {
            let p = KernelParams::new(0.05, w[0], w[1]).unwrap();
            let r = check_count_identity(&d5, &d8, &p, 8).unwrap();
            assert!(r.exact);
            total += r.rounded;
        }
        assert_eq!(total, 8);
    }

    #[test]
    fn count_identity_prefilter_agrees_with_brute_scan() {
        let d5 = Discriminant::validate(5).unwrap();
        let d8 = Discriminant::validate(8).unwrap();
        let p = KernelParams::full(0.05);
        let fast = check_count_identity(&d5, &d8, &p, 8).unwrap();
        let brute = check_count_identity_brute(&d5, &d8, &p, 8).unwrap();
        assert_eq!(fast.quadrature, brute.quadrature);
    }

    #[test]
    fn count_identity_refuses_bad_inputs() {
        let d5 = Discriminant::validate(5).unwrap();
        let d8 = Discriminant::validate(8).unwrap();
        let p = KernelParams::full(0.05);
        assert!(matches!(
            check_count_identity(&d5, &d8, &p, 4),
            Err(KernelError::GridTooCoarse { .. })
        ));
        let big = Discriminant::validate(61).unwrap();
        assert!(matches!(
            check_count_identity(&d5, &big, &p, 8),
            Err(KernelError::DiscriminantTooLarge { .. })
        ));
        assert!(matches!(
            check_count_identity(&d5, &d5, &p, 8),
            Err(KernelError::SameDiscriminant { .. })
        ));
    }

    #[test]
    fn params_validation() {
        assert!(KernelParams::new(0.2, 0.0, PI).is_ok());
        assert!(KernelParams::new(0.2, 1.0, 1.0).is_ok());
        assert!(KernelParams::new(0.0, 0.0, PI).is_err());
        assert!(KernelParams::new(1.0, 0.0, PI).is_err());
        assert!(KernelParams::new(0.2, -0.1, PI).is_err());
        assert!(KernelParams::new(0.2, 2.0, 1.0).is_err());
        assert!(KernelParams::new(0.2, 0.0, PI + 0.1).is_err());
    }

    #[test]
    fn weight_formula_branches() {
        let (delta, len) = (0.1, 1.0);
        assert!((event_weight(0.05, delta, len) - 0.5).abs() < 1e-15);
        assert!((event_weight(0.1, delta, len) - 1.0).abs() < 1e-15);
        assert!((event_weight(0.7, delta, len) - 1.0).abs() < 1e-15);
        assert!((event_weight(1.0, delta, len) - 1.0).abs() < 1e-15);
        assert!((event_weight(1.075, delta, len) - 0.25).abs() < 1e-12);
    }

    fn axis_tangent(a: i64, b: i64, c: i64, t: f64) -> UnitTangent {
        use crate::bqf::QuadForm;
        use crate::hyperbolic::GeodesicArc;
        let arc = GeodesicArc::axis_of_form(&QuadForm::new(a, b, c));
        arc.tangent_at(t)
    }

    #[test]
    fn self_crossing_detects_the_cone_bounce() {
        // The axis of (1,1,-1) folds at i (half period 0.4812...): a
        // segment spanning the fold is rejected as reversed, a shorter
        // one passes.
        let apex = axis_tangent(1, 1, -1, 0.0);
        let long = Segment::from_tangent(apex, 0.62).unwrap();
        let sc = segment_self_crossing(&long).expect("fold detected");
        assert_eq!(sc.kind, SelfCrossKind::Reversed);
        assert!((0.5 * (sc.param1 + sc.param2) - 0.4812).abs() < 0.35);
        let apex = axis_tangent(1, 1, -1, 0.0);
        let short = Segment::from_tangent(apex, 0.40).unwrap();
        assert!(segment_self_crossing(&short).is_none());
    }

    #[test]
    fn self_crossing_detects_wrapping_a_closed_geodesic() {
        // 2 log eps_12 = 2.634, so the closed image has length 2.634 and
        // a segment of length 2.694 wraps with a same-orientation
        // overlap.  The image also crosses itself transversally at the
        // axis parameters (0.297, 2.337) and (0.659, 1.976) mod 2.634;
        // starting just past the first crossing puts the wrap pair ahead
        // of both in scan order.
        let u = axis_tangent(1, 2, -2, 0.30);
        let long = Segment::from_tangent(u, 2.694).unwrap();
        let sc = segment_self_crossing(&long).expect("wrap detected");
        assert_eq!(sc.kind, SelfCrossKind::Parallel);
        // The same start without the wrap still holds a transversal
        // return: parameters 0.659 and 1.976 sit 1.317 apart.
        let u = axis_tangent(1, 2, -2, 0.30);
        let crossing = Segment::from_tangent(u, 1.9).unwrap();
        let sc = segment_self_crossing(&crossing).expect("return detected");
        assert_eq!(sc.kind, SelfCrossKind::Transversal);
        // The crossing pairs are {-0.297, +0.297} and {-0.659, +0.659}
        // mod 2.634, so [0, 1] holds one parameter of each pair but
        // neither partner: embedded.
        let u = axis_tangent(1, 2, -2, 0.0);
        let short = Segment::from_tangent(u, 1.0).unwrap();
        assert!(segment_self_crossing(&short).is_none());
    }

    #[test]
    fn self_crossing_detects_transversal_returns() {
        // Long generic segments on a surface of area pi/3 almost always
        // cross themselves; verify each detection independently.
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut found = 0;
        for _ in 0..40 {
            let u = UnitTangent::new(
                rng.gen_range(-0.4..0.4),
                rng.gen_range(0.9..1.4),
                rng.gen_range(0.0..2.0 * PI),
            );
            let seg = match Segment::from_tangent(u, 2.8) {
                Ok(s) => s,
                Err(_) => continue,
            };
            if let Some(sc) = segment_self_crossing(&seg) {
                if sc.kind == SelfCrossKind::Transversal {
                    let (lo, _) = seg.bounds();
                    let p1 = seg.arc().point_at(lo + sc.param1);
                    let p2 = seg.arc().point_at(lo + sc.param2);
                    let (r1, _) = reduce_to_fundamental_domain_int(p1);
                    let (r2, _) = reduce_to_fundamental_domain_int(p2);
                    assert!(
                        dist(r1, r2) < 1e-6,
                        "reported crossing is not a surface meeting: {r1:?} vs {r2:?}"
                    );
                    assert!((sc.param1 - sc.param2).abs() > 1e-6);
                    found += 1;
                }
            }
        }
        assert!(found >= 3, "only {found} transversal self-crossings found");
    }

    #[test]
    fn weighted_identity_on_a_vertical_segment() {
        // A vertical segment at x = 0.03 crossing the d = 5 image both
        // inside the bulk (weight 1) and inside the ramp (weight < 1).
        let beta = Segment::from_endpoints(Point::new(0.03, 0.95), Point::new(0.03, 1.45)).unwrap();
        let d5 = Discriminant::validate(5).unwrap();
        let p = KernelParams::full(0.05);
        let r = check_weighted_identity(&beta, &d5, &p).unwrap();
        assert_eq!(r.degenerate, 0);
        assert!(r.crossings.len() >= 2, "events: {:?}", r.crossings);
        assert!(r.crossings.iter().any(|&(_, w)| w < 1.0 - 1e-9));
        assert!(r.crossings.iter().any(|&(_, w)| (w - 1.0).abs() < 1e-9));
        assert!(
            r.rel_err <= 1e-3,
            "lhs {} rhs {} rel {}",
            r.lhs,
            r.rhs,
            r.rel_err
        );
    }

    #[test]
    fn weighted_identity_rejects_folded_segments() {
        let apex = axis_tangent(1, 1, -1, 0.0);
        let beta = Segment::from_tangent(apex, 1.2).unwrap();
        let d5 = Discriminant::validate(5).unwrap();
        let p = KernelParams::full(0.05);
        match check_weighted_identity(&beta, &d5, &p) {
            Err(KernelError::SelfIntersectingExtension { kind, .. }) => {
                assert_eq!(kind, SelfCrossKind::Reversed);
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn cusp_blowup_grows_linearly() {
        // The translate by n crosses the height-R horocyclic arc iff the
        // crossing parameter spread 2 artanh(n / 2R) fits inside delta,
        // i.e. n < 2 R tanh(delta / 2); the reversed partners (n < 0)
        // carry angles near pi, outside the (0, pi/2) window.  With
        // delta = 0.2 the thresholds 2 R tanh(0.1) = 1.99, 3.99, 7.97,
        // 15.95 pin the counts.
        let profile = cusp_blowup(0.2, 0.5 * PI, &[10.0, 20.0, 40.0, 80.0]);
        assert_eq!(profile.counts, vec![1, 3, 7, 15]);
        assert!(profile.slope > 1.0 && profile.slope < 1.5, "slope {}", profile.slope);
        assert!(profile.r_squared > 0.99, "r^2 {}", profile.r_squared);
    }

    #[test]
    fn horocycle_arc_has_length_delta() {
        // The forward delta-arc runs along |z| = R: check the endpoint.
        let (delta, r) = (0.3, 12.0);
        let u = horocycle_tangent(delta, r);
        let arc = geodesic_through(&u);
        let t0 = arc.param_of(Point::new(u.x, u.y));
        let end = arc.point_at(t0 + delta);
        assert!(((end.x * end.x + end.y * end.y).sqrt() - r).abs() < 1e-9);
        let alpha = 2.0 * (0.5 * delta).exp().atan() - 0.5 * PI;
        assert!((end.x - r * alpha.sin()).abs() < 1e-9, "symmetric exit");
    }
}
