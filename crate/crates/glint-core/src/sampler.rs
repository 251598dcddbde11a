//! Monte-Carlo intersection of the reflection and direct cones.
//!
//! Candidate transmitter positions are drawn uniformly in the reflection
//! cone's parameter space (not volume-uniform: the parametrization is kept as
//! is) and filtered through the direct-cone membership test to form the
//! inlier set.
//!
//! Sampling is counter-based: sample `i` comes from its own RNG stream
//! derived from `(seed, i)`, so parallel generation is order-independent and
//! bit-identical to sequential execution.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cones::EllipticalCone;
use crate::scalar::Real;

/// Which frame the membership residual is decomposed in.
///
/// `ConeLocal` projects the residual onto the cone's own spread directions
/// and is exact for any axis orientation. `WorldYZ` takes the raw world y/z
/// components, which matches the small-angle form that is accurate only while
/// the cone axis stays near the x-axis; it is kept selectable for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MembershipFrame {
    #[default]
    ConeLocal,
    WorldYZ,
}

/// Sampling parameters for one cone intersection.
#[derive(Debug, Clone, Copy)]
pub struct SamplerConfig<T: Real> {
    /// Number of candidate points to draw.
    pub sample_count: usize,
    /// Seed for the counter-based generator.
    pub seed: u64,
    /// Feasibility bound: samples start at this distance from the apex. For
    /// the reflection cone this is the apex-to-reflection-center distance, so
    /// candidates stay above the surface.
    pub min_length: T,
    /// Residual decomposition used by the membership test.
    pub frame: MembershipFrame,
}

impl<T: Real> SamplerConfig<T> {
    pub fn new(sample_count: usize, seed: u64, min_length: T) -> Self {
        Self {
            sample_count,
            seed,
            min_length,
            frame: MembershipFrame::ConeLocal,
        }
    }
}

/// Candidate points that fell inside both cones.
#[derive(Debug, Clone, PartialEq)]
pub struct InlierSet<T: Real> {
    pub points: Vec<Vector3<T>>,
    /// How many candidates were drawn in total.
    pub total_sampled: usize,
    /// Observation time in seconds.
    pub timestamp: T,
}

impl<T: Real> InlierSet<T> {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Mean of the inlier points, if any.
    pub fn centroid(&self) -> Option<Vector3<T>> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p);
        Some(sum / T::of(self.points.len() as f64))
    }
}

/// Draw one candidate from the cone's parameter space.
fn draw_candidate<T: Real>(cone: &EllipticalCone<T>, cfg: &SamplerConfig<T>, index: usize) -> Vector3<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let gamma = T::uniform_01(&mut rng) * T::two_pi();
    let vertical = T::uniform_01(&mut rng) * cone.vertical_half_angle;
    let horizontal = T::uniform_01(&mut rng) * cone.horizontal_half_angle;
    let length = cfg.min_length + T::uniform_01(&mut rng) * (cone.length - cfg.min_length);
    cone.point_unchecked(gamma, length, vertical, horizontal)
}

/// Sample `cfg.sample_count` points uniformly in parameter space:
/// `gamma ~ U(0, 2*pi)`, angles `~ U(0, half_angle)`,
/// `length ~ U(min_length, L)`. Deterministic for a fixed seed regardless of
/// thread count.
pub fn sample_reflection_cone<T: Real + Send + Sync>(
    cone: &EllipticalCone<T>,
    cfg: &SamplerConfig<T>,
) -> Vec<Vector3<T>> {
    (0..cfg.sample_count)
        .into_par_iter()
        .map(|i| draw_candidate(cone, cfg, i))
        .collect()
}

/// Membership test: does `point` lie inside the finite elliptical cone?
///
/// The point is projected onto the cone axis; it must fall within the cone's
/// length, and the perpendicular residual must satisfy the elliptical
/// cross-section inequality at that axial distance. A zero-width direction
/// admits only zero residual. At zero axial distance only the apex itself is
/// contained.
pub fn contains<T: Real>(cone: &EllipticalCone<T>, point: &Vector3<T>, frame: MembershipFrame) -> bool {
    let rel = point - cone.apex;
    let along = rel.dot(&cone.axis);
    if along < T::zero() || along > cone.length {
        return false;
    }
    let residual = rel - cone.axis * along;
    if along == T::zero() {
        return residual.norm_squared() == T::zero();
    }
    let (res_v, res_h) = match frame {
        MembershipFrame::ConeLocal => (
            residual.dot(&cone.vertical_dir),
            residual.dot(&cone.horizontal_dir),
        ),
        MembershipFrame::WorldYZ => (residual.z, residual.y),
    };
    let bound_v = along * cone.vertical_half_angle.tan();
    let bound_h = along * cone.horizontal_half_angle.tan();
    let mut total = T::zero();
    for (res, bound) in [(res_v, bound_v), (res_h, bound_h)] {
        if bound == T::zero() {
            if res != T::zero() {
                return false;
            }
        } else {
            let ratio = res / bound;
            total += ratio * ratio;
        }
    }
    total <= T::one()
}

/// Sample the reflection cone and keep the candidates that also lie inside
/// the direct cone and above the surface plane (the plane halfway between the
/// reflection apex and the origin).
///
/// An empty result is propagated as is; it signals geometrically inconsistent
/// measurements upstream.
pub fn intersect<T: Real + Send + Sync>(
    reflection: &EllipticalCone<T>,
    direct: &EllipticalCone<T>,
    cfg: &SamplerConfig<T>,
    timestamp: T,
) -> InlierSet<T> {
    let surface_z = reflection.apex.z / T::of(2.0);
    let points: Vec<Vector3<T>> = (0..cfg.sample_count)
        .into_par_iter()
        .filter_map(|i| {
            let p = draw_candidate(reflection, cfg, i);
            (p.z >= surface_z && contains(direct, &p, cfg.frame)).then_some(p)
        })
        .collect();
    InlierSet {
        points,
        total_sampled: cfg.sample_count,
        timestamp,
    }
}

/// Write a point cloud as `x,y,z` CSV rows for external visualization.
pub fn write_point_cloud_csv<W: std::io::Write, T: Real>(
    out: &mut W,
    points: &[Vector3<T>],
) -> std::io::Result<()> {
    writeln!(out, "x,y,z")?;
    for p in points {
        writeln!(out, "{},{},{}", p.x, p.y, p.z)?;
    }
    Ok(())
}
