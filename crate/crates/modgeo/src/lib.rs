//! Closed geodesics of real quadratic discriminant on the modular surface.
//!
//! This crate constructs, for a positive non-square discriminant `d`, the
//! finite union `C_d` of closed geodesics on the modular surface
//! `X = PSL(2,Z) \ H` attached to the classes of primitive integral binary
//! quadratic forms of discriminant `d`, and provides machinery to
//!
//! - enumerate and reduce indefinite binary quadratic forms, solve the Pell
//!   equation `t^2 - d u^2 = 4`, and compute class numbers and geodesic
//!   lengths ([`bqf`]);
//! - work in the upper half-plane model: Möbius actions, hyperbolic
//!   distance, the Iwasawa parametrization of the unit tangent bundle,
//!   exact geodesic-crossing predicates, and the `A K A` chart whose volume
//!   density is `1/2 |sin phi|` ([`hyperbolic`]);
//! - realize closed geodesics as explicit arcs with exact quadratic
//!   irrational feet and integrate functions along them ([`geodesics`]);
//! - count intersections of geodesic segments with `C_d`, and of `C_d1`
//!   with `C_d2`, with exact integer crossing detection and angle
//!   statistics against the equidistribution density `(3/pi^2) sin theta`
//!   ([`intersect`]);
//! - evaluate the point-pair intersection kernel `k_delta`, its group
//!   average `K_delta`, and verify the exact identities tying the kernel to
//!   intersection counts ([`kernel`]);
//! - evaluate Kronecker symbols, Dirichlet L-values, the class number
//!   formula `h(d) log eps_d = sqrt(d) L(1,d)`, and the Eisenstein period
//!   identity ([`lfunc`]).
//!
//! Integer invariants (crossing counts, class numbers) are computed with
//! exact integer arithmetic throughout; floating point enters only for
//! locations, angles, lengths, and analytic values.

pub mod bqf;
pub mod exact;
pub mod geodesics;
pub mod hyperbolic;
pub mod intersect;
pub mod kernel;
pub mod lfunc;
pub mod special;

/// Seed derivation for deterministic parallel work splitting.
///
/// `splitmix64` is the standard 64-bit mixer; deriving one stream per work
/// chunk from `(seed, chunk_index)` makes aggregate results independent of
/// the number of worker threads.
pub fn derive_seed(seed: u64, chunk: u64) -> u64 {
    let mut z = seed ^ chunk.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
