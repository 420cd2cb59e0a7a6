//! Browser bindings for the `modgeo` library.
//!
//! Three operations, each returning a JSON string so the page needs no
//! generated glue types: [`family_json`] traces the closed geodesics
//! `C_d` inside the fundamental domain, [`crossings_json`] intersects a
//! user-placed segment with `C_d` and reports the angle statistics, and
//! [`pair_json`] crosses two families.  Invalid input comes back as
//! `{"error": "..."}` instead of a panic, so the page can surface it.
//!
//! The crate also builds natively (`crate-type = ["rlib"]`), which is how
//! its tests run; the wasm artifact is produced by `build.sh`.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use modgeo::bqf::Discriminant;
use modgeo::geodesics::GeodesicFamily;
use modgeo::hyperbolic::{reduce_to_fundamental_domain_int, UnitTangent};
use modgeo::intersect::{
    equidistribution_report, family_vs_family, segment_vs_family, IntersectionEvent, Segment,
};

const HISTOGRAM_BINS: usize = 12;

fn error_json(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

fn round6(x: f64) -> f64 {
    // Pixel-level precision; keeps the JSON payload small.
    (x * 1e6).round() / 1e6
}

fn event_values(events: &[IntersectionEvent]) -> Vec<Value> {
    events
        .iter()
        .map(|e| {
            json!({
                "x": round6(e.point.x),
                "y": round6(e.point.y),
                "angle": round6(e.angle),
                "param": round6(e.param_on_beta),
                "a": e.form.a,
                "b": e.form.b,
                "c": e.form.c,
            })
        })
        .collect()
}

fn histogram_values(stats: &modgeo::intersect::EquidistributionReport) -> Vec<Value> {
    stats
        .histogram
        .iter()
        .map(|b| {
            json!({
                "lo": round6(b.lo),
                "hi": round6(b.hi),
                "observed": b.observed,
                "expected": round6(b.expected),
            })
        })
        .collect()
}

/// The classes of discriminant `d` with a fundamental-domain trace of
/// each closed geodesic, ready for canvas plotting.
#[wasm_bindgen]
pub fn family_json(d: i64) -> String {
    let disc = match Discriminant::validate(d) {
        Ok(disc) => disc,
        Err(err) => return error_json(err),
    };
    let family = GeodesicFamily::new(&disc);
    let set = &family.class_set;

    let classes: Vec<Value> = family
        .members
        .iter()
        .enumerate()
        .map(|(i, member)| {
            // Sample densely enough that the folded trace reads as a
            // curve, but cap the payload for large discriminants.
            let n = ((member.period * 400.0) as usize).clamp(256, 6000);
            let trace: Vec<[f64; 2]> = (0..n)
                .map(|k| {
                    let s = member.period * k as f64 / n as f64;
                    let (p, _) = reduce_to_fundamental_domain_int(member.point_at(s));
                    [round6(p.x), round6(p.y)]
                })
                .collect();
            json!({
                "a": member.rep.a,
                "b": member.rep.b,
                "c": member.rep.c,
                "ambiguous": set.ambiguous[i],
                "period": round6(member.period),
                "trace": trace,
            })
        })
        .collect();

    json!({
        "d": d,
        "h": set.h(),
        "log_eps": set.log_eps,
        "classes": classes,
    })
    .to_string()
}

/// Crossings of the segment from `(x, y)` in direction `theta` (length
/// `len`) with the family `C_d`, plus the angle histogram against the
/// `(3/pi^2) sin(theta)` law.
#[wasm_bindgen]
pub fn crossings_json(d: i64, x: f64, y: f64, theta: f64, len: f64) -> String {
    let disc = match Discriminant::validate(d) {
        Ok(disc) => disc,
        Err(err) => return error_json(err),
    };
    if !(y.is_finite() && y > 0.0) {
        return error_json(format!("segment base needs y > 0, got y = {y}"));
    }
    if !(len.is_finite() && len > 0.0) {
        return error_json(format!("segment length must be positive, got {len}"));
    }
    if !(x.is_finite() && theta.is_finite()) {
        return error_json("segment base point and angle must be finite");
    }
    let seg = match Segment::from_tangent(UnitTangent::new(x, y, theta), len) {
        Ok(seg) => seg,
        Err(err) => return error_json(err),
    };

    let set = modgeo::bqf::class_representatives(&disc);
    let report = segment_vs_family(&seg, &disc, (0.0, std::f64::consts::PI));
    let normalization = seg.length() * set.h() as f64 * set.log_eps;
    let stats = equidistribution_report(
        &report.events,
        (0.0, std::f64::consts::PI),
        normalization,
        seg.length(),
        HISTOGRAM_BINS,
    );

    let (lo, hi) = seg.bounds();
    let n = 96;
    let path: Vec<[f64; 2]> = (0..=n)
        .map(|k| {
            let t = lo + (hi - lo) * k as f64 / n as f64;
            let p = seg.arc().point_at(t);
            [round6(p.x), round6(p.y)]
        })
        .collect();

    json!({
        "d": d,
        "h": set.h(),
        "count": stats.count,
        "normalized": stats.normalized,
        "target": stats.target,
        "ks_angle": round6(stats.ks_angle),
        "degenerate": stats.degenerate,
        "path": path,
        "events": event_values(&report.events),
        "histogram": histogram_values(&stats),
    })
    .to_string()
}

/// Crossings of the family `C_d1` with the family `C_d2`.  For `d1 = d2`
/// only crossings between distinct classes are reported.
#[wasm_bindgen]
pub fn pair_json(d1: i64, d2: i64) -> String {
    let disc1 = match Discriminant::validate(d1) {
        Ok(disc) => disc,
        Err(err) => return error_json(err),
    };
    let disc2 = match Discriminant::validate(d2) {
        Ok(disc) => disc,
        Err(err) => return error_json(err),
    };

    let fam1 = GeodesicFamily::new(&disc1);
    let set2 = modgeo::bqf::class_representatives(&disc2);
    let report = family_vs_family(&fam1, &disc2, (0.0, std::f64::consts::PI));

    let l1 = fam1.class_set.h() as f64 * fam1.class_set.log_eps;
    let l2 = set2.h() as f64 * set2.log_eps;
    let (walk_span, _) = fam1.class_set.total_lengths();
    let stats = equidistribution_report(
        &report.events,
        (0.0, std::f64::consts::PI),
        2.0 * l1 * l2,
        walk_span,
        HISTOGRAM_BINS,
    );

    json!({
        "d1": d1,
        "d2": d2,
        "h1": fam1.class_set.h(),
        "h2": set2.h(),
        // `count` doubles the surface crossings (ordered-pair convention);
        // `crossings` is the unoriented total the eye can check.
        "count": report.count(),
        "crossings": report.count() / 2,
        "normalized": stats.normalized,
        "target": stats.target,
        "events": event_values(&report.events),
        "histogram": histogram_values(&stats),
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Value {
        serde_json::from_str(&s).expect("operations must return valid JSON")
    }

    #[test]
    fn family_json_traces_stay_in_the_fundamental_domain() {
        let v = parse(&family_json(5));
        assert_eq!(v["d"], 5);
        assert_eq!(v["h"], 1);
        let classes = v["classes"].as_array().unwrap();
        assert_eq!(classes.len(), 1);
        let trace = classes[0]["trace"].as_array().unwrap();
        assert!(trace.len() >= 256);
        for p in trace {
            let x = p[0].as_f64().unwrap();
            let y = p[1].as_f64().unwrap();
            assert!(x.abs() <= 0.5 + 1e-5, "reduced x out of range: {x}");
            assert!(x * x + y * y >= 1.0 - 1e-5, "reduced point below the unit circle");
        }
    }

    #[test]
    fn invalid_discriminants_come_back_as_error_json() {
        for bad in [7, 9, -4, 16] {
            let v = parse(&family_json(bad));
            assert!(v["error"].is_string(), "d = {bad} must be rejected");
        }
        let v = parse(&crossings_json(7, 0.0, 1.0, 0.0, 1.0));
        assert!(v["error"].is_string());
        let v = parse(&pair_json(5, 9));
        assert!(v["error"].is_string());
    }

    #[test]
    fn bad_segments_come_back_as_error_json_not_panics() {
        let v = parse(&crossings_json(5, 0.0, -1.0, 0.0, 1.0));
        assert!(v["error"].as_str().unwrap().contains("y > 0"));
        let v = parse(&crossings_json(5, 0.0, 1.0, 0.0, 0.0));
        assert!(v["error"].as_str().unwrap().contains("positive"));
        let v = parse(&crossings_json(5, f64::NAN, 1.0, 0.0, 1.0));
        assert!(v["error"].is_string());
    }

    #[test]
    fn crossings_json_reports_events_and_a_full_histogram() {
        let v = parse(&crossings_json(1093, 0.02, 1.05, 1.1, 0.5));
        let count = v["count"].as_u64().unwrap();
        assert!(count > 0, "this segment is known to cross C_1093");
        assert_eq!(v["events"].as_array().unwrap().len() as u64, count);
        let hist = v["histogram"].as_array().unwrap();
        assert_eq!(hist.len(), 12);
        let observed: u64 = hist.iter().map(|b| b["observed"].as_u64().unwrap()).sum();
        assert_eq!(observed, count);
        assert_eq!(v["path"].as_array().unwrap().len(), 97);
    }

    #[test]
    fn pair_json_matches_the_known_first_pair() {
        let v = parse(&pair_json(5, 8));
        assert_eq!(v["count"], 4, "C_5 and C_8 cross twice on the surface");
        assert_eq!(v["crossings"], 2);
        assert_eq!(v["events"].as_array().unwrap().len(), 4);
        // Self-pair of a one-class family: nothing to cross, but no error.
        let v = parse(&pair_json(5, 5));
        assert_eq!(v["count"], 0);
    }
}
