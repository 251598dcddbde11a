//! Finite convex elliptical cones built from the reflection and direct
//! bearings of an active marker.
//!
//! The reflection cone opens from the observer's mirror image beneath the
//! surface toward the measured reflection spread; the direct cone opens from
//! the observer along the direct bearing with fixed uncertainty angles. Their
//! intersection bounds the transmitter position.

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::scalar::Real;

/// Bearings steeper than this below the horizon are accepted; shallower ones
/// produce numerically unbounded surface intersections.
pub const GRAZING_EPSILON_Z: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ConeError {
    #[error("bearing does not intersect the surface (points at or above the horizon)")]
    NoSurfaceIntersection,
    #[error("grazing bearing: surface intersection is numerically unbounded")]
    GrazingBearing,
    #[error("behind-camera bearing (forward component must be positive)")]
    BehindCamera,
    #[error("invalid cone: {0}")]
    InvalidCone(String),
    #[error("cone parameter {name} out of range")]
    ParameterOutOfRange { name: &'static str },
    #[error("invalid surface geometry: {0}")]
    InvalidSurface(String),
}

/// Scene extents shared across cone construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceGeometry<T: Real> {
    /// Observer height above the reflective surface, meters.
    pub observer_height: T,
    /// Upper bound on transmitter height (observer frame), meters.
    pub max_height: T,
    /// Upper bound on forward extent along the x-axis, meters.
    pub max_forward: T,
}

impl<T: Real> SurfaceGeometry<T> {
    pub fn new(observer_height: T, max_height: T, max_forward: T) -> Result<Self, ConeError> {
        if observer_height <= T::zero() || max_height <= T::zero() || max_forward <= T::zero() {
            return Err(ConeError::InvalidSurface(
                "observer height, max height, and max forward extent must be positive".into(),
            ));
        }
        Ok(Self {
            observer_height,
            max_height,
            max_forward,
        })
    }

    /// Surface plane height in the observer frame.
    pub fn surface_z(&self) -> T {
        -self.observer_height
    }
}

/// Where a bearing pierces the reflective surface, plus the angles describing
/// the measured reflection spread.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionGeometry<T: Real> {
    /// Reflection center on the surface plane.
    pub center: Vector3<T>,
    /// Surface point of the vertical extremum of the reflection ellipse.
    pub vertical_extremum: Vector3<T>,
    /// Surface point of the horizontal extremum of the reflection ellipse.
    pub horizontal_extremum: Vector3<T>,
    /// Depression angle of the reflection-center bearing below the horizon.
    pub depression: T,
    /// Depression angle of the vertical-extremum bearing.
    pub vertical_depression: T,
    /// Azimuth of the reflection-center bearing (kept for diagnostics; the
    /// surface intersection consumes the lateral/vertical ratio directly).
    pub azimuth: T,
}

impl<T: Real> ReflectionGeometry<T> {
    /// Build from the attitude-compensated bearings of the reflection center
    /// and the two extremal pixels of its ellipse.
    ///
    /// Degenerate (zero-spread) geometry is allowed: pass the center bearing
    /// for the extrema.
    pub fn from_bearings(
        center_bearing: Vector3<T>,
        vertical_bearing: Vector3<T>,
        horizontal_bearing: Vector3<T>,
        observer_height: T,
    ) -> Result<Self, ConeError> {
        let center = reflection_point(center_bearing, observer_height)?;
        let vertical_extremum = reflection_point(vertical_bearing, observer_height)?;
        let horizontal_extremum = reflection_point(horizontal_bearing, observer_height)?;
        Ok(Self {
            center,
            vertical_extremum,
            horizontal_extremum,
            depression: depression_angle(&center_bearing),
            vertical_depression: depression_angle(&vertical_bearing),
            azimuth: center_bearing.y.atan2(center_bearing.x),
        })
    }
}

/// Intersect a below-horizon bearing with the surface plane.
///
/// Returns the surface point; its z-component is exactly `-observer_height`.
pub fn reflection_point<T: Real>(
    bearing: Vector3<T>,
    observer_height: T,
) -> Result<Vector3<T>, ConeError> {
    if bearing.x <= T::zero() {
        return Err(ConeError::BehindCamera);
    }
    if bearing.z >= T::zero() {
        return Err(ConeError::NoSurfaceIntersection);
    }
    let down = bearing.z.abs();
    if down < T::of(GRAZING_EPSILON_Z) {
        return Err(ConeError::GrazingBearing);
    }
    Ok(Vector3::new(
        observer_height * bearing.x / down,
        observer_height * bearing.y / down,
        -observer_height,
    ))
}

/// Angle of a bearing below the horizontal plane, measured in the vertical
/// plane containing the bearing.
fn depression_angle<T: Real>(bearing: &Vector3<T>) -> T {
    (bearing.z.abs() / bearing.x).atan()
}

/// A finite convex elliptical cone.
///
/// The frame `{axis, vertical_dir, horizontal_dir}` is an orthonormal
/// right-handed triad; `vertical_dir` spans the vertical spread of the cone
/// (the world z-axis projected off the axis), `horizontal_dir` the lateral
/// spread. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticalCone<T: Real> {
    pub apex: Vector3<T>,
    pub endpoint: Vector3<T>,
    pub axis: Vector3<T>,
    pub vertical_dir: Vector3<T>,
    pub horizontal_dir: Vector3<T>,
    /// Half-apex angle of the vertical spread, radians.
    pub vertical_half_angle: T,
    /// Half-apex angle of the horizontal spread, radians.
    pub horizontal_half_angle: T,
    /// Distance from apex to endpoint, meters.
    pub length: T,
}

impl<T: Real> EllipticalCone<T> {
    pub fn new(
        apex: Vector3<T>,
        endpoint: Vector3<T>,
        vertical_half_angle: T,
        horizontal_half_angle: T,
    ) -> Result<Self, ConeError> {
        let span = endpoint - apex;
        let length = span.norm();
        if length <= T::zero() {
            return Err(ConeError::InvalidCone("endpoint coincides with apex".into()));
        }
        let half_pi = T::frac_pi_2();
        for (angle, name) in [
            (vertical_half_angle, "vertical half-apex angle"),
            (horizontal_half_angle, "horizontal half-apex angle"),
        ] {
            if angle < T::zero() || angle >= half_pi {
                return Err(ConeError::InvalidCone(format!(
                    "{name} must lie in [0, pi/2), got {angle}"
                )));
            }
        }
        let axis = span / length;
        let z = Vector3::z();
        let mut vertical = z - axis * z.dot(&axis);
        if vertical.norm() < T::of(1e-9) {
            // axis is (anti)parallel to world z: fall back to the x-axis projection
            let x = Vector3::x();
            vertical = x - axis * x.dot(&axis);
        }
        let vertical_dir = vertical.normalize();
        let horizontal_dir = axis.cross(&vertical_dir);
        Ok(Self {
            apex,
            endpoint,
            axis,
            vertical_dir,
            horizontal_dir,
            vertical_half_angle,
            horizontal_half_angle,
            length,
        })
    }

    /// Zero spread in both directions; the cone collapses to its axis segment.
    pub fn is_degenerate(&self) -> bool {
        self.vertical_half_angle == T::zero() && self.horizontal_half_angle == T::zero()
    }

    /// Evaluate the parametric cone equation.
    ///
    /// Valid ranges: `gamma` in `[0, 2*pi]`, `length` in `[0, L]`,
    /// `vertical_angle` in `[0, vertical_half_angle]`, `horizontal_angle` in
    /// `[0, horizontal_half_angle]`.
    pub fn point(
        &self,
        gamma: T,
        length: T,
        vertical_angle: T,
        horizontal_angle: T,
    ) -> Result<Vector3<T>, ConeError> {
        if gamma < T::zero() || gamma > T::two_pi() {
            return Err(ConeError::ParameterOutOfRange { name: "gamma" });
        }
        if length < T::zero() || length > self.length {
            return Err(ConeError::ParameterOutOfRange { name: "length" });
        }
        if vertical_angle < T::zero() || vertical_angle > self.vertical_half_angle {
            return Err(ConeError::ParameterOutOfRange {
                name: "vertical_angle",
            });
        }
        if horizontal_angle < T::zero() || horizontal_angle > self.horizontal_half_angle {
            return Err(ConeError::ParameterOutOfRange {
                name: "horizontal_angle",
            });
        }
        Ok(self.point_unchecked(gamma, length, vertical_angle, horizontal_angle))
    }

    /// Parametric evaluation without range checks; callers guarantee validity.
    pub(crate) fn point_unchecked(
        &self,
        gamma: T,
        length: T,
        vertical_angle: T,
        horizontal_angle: T,
    ) -> Vector3<T> {
        let (sin_g, cos_g) = gamma.sin_cos();
        self.apex
            + self.axis * length
            + self.vertical_dir * (length * vertical_angle.tan() * cos_g)
            + self.horizontal_dir * (length * horizontal_angle.tan() * sin_g)
    }

    /// Boundary wireframe as line segments: rings at fractions of the length
    /// plus generator lines from the apex to the endpoint ellipse.
    pub fn wireframe(&self, rings: usize, rays: usize) -> Vec<[Vector3<T>; 2]> {
        let rays = rays.max(3);
        let mut segments = Vec::new();
        let boundary = |gamma: T, l: T| {
            self.point_unchecked(
                gamma,
                l,
                self.vertical_half_angle,
                self.horizontal_half_angle,
            )
        };
        for ring in 1..=rings {
            let l = self.length * T::of(ring as f64) / T::of(rings as f64);
            let mut prev = boundary(T::zero(), l);
            for k in 1..=rays {
                let gamma = T::two_pi() * T::of(k as f64) / T::of(rays as f64);
                let next = boundary(gamma, l);
                segments.push([prev, next]);
                prev = next;
            }
        }
        for k in 0..rays {
            let gamma = T::two_pi() * T::of(k as f64) / T::of(rays as f64);
            segments.push([self.apex, boundary(gamma, self.length)]);
        }
        segments
    }
}

/// Write cone wireframes as CSV line segments for external plotting.
pub fn write_wireframe_csv<W: std::io::Write, T: Real>(
    out: &mut W,
    cones: &[(&str, &EllipticalCone<T>)],
    rings: usize,
    rays: usize,
) -> std::io::Result<()> {
    writeln!(out, "cone,x1,y1,z1,x2,y2,z2")?;
    for (name, cone) in cones {
        for [a, b] in cone.wireframe(rings, rays) {
            writeln!(out, "{name},{},{},{},{},{},{}", a.x, a.y, a.z, b.x, b.y, b.z)?;
        }
    }
    Ok(())
}

/// Build the reflection cone from the measured reflection geometry.
///
/// The apex is the observer's mirror image `(0, 0, -2*z_o)`; the axis runs
/// from the apex through the reflection center and is extended until its
/// z-component reaches the configured maximum height. The vertical half-apex
/// angle is the depression-angle difference of the extremal and center
/// bearings; the horizontal one comes from the lateral offset of the
/// horizontal extremum seen from the apex (both measured in the x-y plane).
pub fn build_reflection_cone<T: Real>(
    geom: &ReflectionGeometry<T>,
    surf: &SurfaceGeometry<T>,
) -> Result<EllipticalCone<T>, ConeError> {
    let z_o = surf.observer_height;
    let apex = Vector3::new(T::zero(), T::zero(), -(z_o + z_o));
    let vertical_half_angle = (geom.vertical_depression - geom.depression).abs();

    let lateral = planar_distance(&geom.horizontal_extremum, &geom.center);
    let apex_reach = planar_distance(&geom.center, &apex);
    if apex_reach <= T::zero() {
        return Err(ConeError::InvalidCone(
            "reflection center sits directly above the cone apex".into(),
        ));
    }
    let horizontal_half_angle = (lateral / apex_reach).atan();

    // Endpoint: the apex->center ray extended to the maximum height. The
    // z-component of (center - apex) equals z_o, so the scale factor is
    // (max_height + 2*z_o) / z_o.
    let scale = (surf.max_height + z_o + z_o) / z_o;
    let endpoint = apex + (geom.center - apex) * scale;

    EllipticalCone::new(apex, endpoint, vertical_half_angle, horizontal_half_angle)
}

/// Build the direct-bearing cone from the observer.
///
/// The apex sits at the origin; the endpoint extends the bearing to the
/// configured forward limit. The half-apex angles are fixed uncertainty
/// constants, not measurements.
pub fn build_direct_cone<T: Real>(
    bearing: Vector3<T>,
    vertical_half_angle: T,
    horizontal_half_angle: T,
    max_forward: T,
) -> Result<EllipticalCone<T>, ConeError> {
    if bearing.x <= T::zero() {
        return Err(ConeError::BehindCamera);
    }
    let endpoint = Vector3::new(
        max_forward,
        max_forward * bearing.y / bearing.x,
        max_forward * bearing.z / bearing.x,
    );
    EllipticalCone::new(
        Vector3::zeros(),
        endpoint,
        vertical_half_angle,
        horizontal_half_angle,
    )
}

fn planar_distance<T: Real>(a: &Vector3<T>, b: &Vector3<T>) -> T {
    Vector2::new(a.x - b.x, a.y - b.y).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};

    /// Closed-form mirror oracle: reflect the transmitter across the surface
    /// plane and intersect the sight line with it. Independent of the
    /// bearing/angle route used by the implementation.
    fn mirror_oracle(transmitter: Vector3<f64>, z_o: f64) -> (Vector3<f64>, Vector3<f64>) {
        let mirrored = Vector3::new(transmitter.x, transmitter.y, -2.0 * z_o - transmitter.z);
        let t = -z_o / mirrored.z;
        let surface_point = mirrored * t;
        (surface_point, mirrored.normalize())
    }

    #[test]
    fn reflection_point_45_degree_symmetry() {
        let b = Vector3::new(1.0, 0.0, -1.0).normalize();
        let r = reflection_point(b, 2.0).unwrap();
        assert_relative_eq!(r, Vector3::new(2.0, 0.0, -2.0), epsilon = 1e-12);
    }

    #[test]
    fn reflection_point_matches_mirror_oracle() {
        // transmitter at (4, 0, 1) seen from height 2
        let (q, bearing) = mirror_oracle(Vector3::new(4.0, 0.0, 1.0), 2.0);
        let r = reflection_point(bearing, 2.0).unwrap();
        assert_relative_eq!(r, q, epsilon = 1e-12);
        assert_relative_eq!(r, Vector3::new(1.6, 0.0, -2.0), epsilon = 1e-12);
        // the ray origin->bearing passes through r
        let t = r.norm();
        assert_relative_eq!(bearing * t, r, epsilon = 1e-12);
    }

    #[test]
    fn reflection_point_diagonal_symmetry() {
        let b = Vector3::new(1.0, 1.0, -1.0).normalize();
        let r = reflection_point(b, 3.0).unwrap();
        assert_relative_eq!(r, Vector3::new(3.0, 3.0, -3.0), epsilon = 1e-12);
    }

    #[test]
    fn reflection_point_rejects_bad_bearings() {
        assert!(matches!(
            reflection_point(Vector3::new(1.0, 0.0, 0.1), 2.0),
            Err(ConeError::NoSurfaceIntersection)
        ));
        assert!(matches!(
            reflection_point(Vector3::new(1.0, 0.0, -1e-4), 2.0),
            Err(ConeError::GrazingBearing)
        ));
        assert!(matches!(
            reflection_point(Vector3::new(-1.0, 0.0, -1.0), 2.0),
            Err(ConeError::BehindCamera)
        ));
    }

    #[test]
    fn surface_points_sit_exactly_on_plane() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let z_o = rng.gen_range(0.5..5.0);
            let b = Vector3::new(
                rng.gen_range(0.1..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..-0.01),
            )
            .normalize();
            let r = reflection_point(b, z_o).unwrap();
            assert_eq!(r.z, -z_o);
        }
    }

    fn zero_spread_geometry(bearing: Vector3<f64>, z_o: f64) -> ReflectionGeometry<f64> {
        ReflectionGeometry::from_bearings(bearing, bearing, bearing, z_o).unwrap()
    }

    #[test]
    fn zero_extent_cone_axis_passes_through_reflection_center() {
        let bearing = Vector3::new(0.8, 0.0, -1.0).normalize();
        let geom = zero_spread_geometry(bearing, 2.0);
        let surf = SurfaceGeometry::new(2.0, 2.5, 15.0).unwrap();
        let cone = build_reflection_cone(&geom, &surf).unwrap();
        assert_relative_eq!(cone.apex, Vector3::new(0.0, 0.0, -4.0), epsilon = 1e-12);
        assert_relative_eq!(
            cone.axis,
            Vector3::new(0.8, 0.0, 1.0).normalize(),
            epsilon = 1e-12
        );
        assert_eq!(cone.vertical_half_angle, 0.0);
        assert_eq!(cone.horizontal_half_angle, 0.0);
        assert!(cone.is_degenerate());
        // endpoint tops out at the configured maximum height
        assert_relative_eq!(cone.endpoint.z, 2.5, epsilon = 1e-12);
    }

    #[test]
    fn horizontal_half_angle_from_lateral_offset() {
        let geom = ReflectionGeometry {
            center: Vector3::new(2.0, 0.0, -2.0),
            vertical_extremum: Vector3::new(2.0, 0.0, -2.0),
            horizontal_extremum: Vector3::new(2.0, 0.2, -2.0),
            depression: 0.785,
            vertical_depression: 0.785,
            azimuth: 0.0,
        };
        let surf = SurfaceGeometry::new(2.0, 2.5, 15.0).unwrap();
        let cone = build_reflection_cone(&geom, &surf).unwrap();
        assert_relative_eq!(cone.horizontal_half_angle, 0.1f64.atan(), epsilon = 1e-12);
    }

    #[test]
    fn mirror_identity_zero_width_axis_hits_transmitter() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let transmitter = Vector3::new(
                rng.gen_range(2.0..30.0),
                rng.gen_range(-8.0..8.0),
                rng.gen_range(0.2..3.0),
            );
            let z_o = rng.gen_range(1.0..5.0);
            let (_, bearing) = mirror_oracle(transmitter, z_o);
            let geom = zero_spread_geometry(bearing, z_o);
            let surf = SurfaceGeometry::new(z_o, transmitter.z + 2.0, 40.0).unwrap();
            let cone = build_reflection_cone(&geom, &surf).unwrap();
            // distance from the transmitter to the cone axis line
            let rel = transmitter - cone.apex;
            let off_axis = (rel - cone.axis * rel.dot(&cone.axis)).norm();
            assert!(off_axis < 1e-9, "axis misses transmitter by {off_axis}");
        }
    }

    #[test]
    fn scaling_observer_height_scales_geometry_not_angles() {
        let bearing = Vector3::new(0.7, 0.25, -0.5).normalize();
        let horiz = Vector3::new(0.7, 0.28, -0.5).normalize();
        let vert = Vector3::new(0.7, 0.25, -0.53).normalize();
        let g1 = ReflectionGeometry::from_bearings(bearing, vert, horiz, 2.0).unwrap();
        let g2 = ReflectionGeometry::from_bearings(bearing, vert, horiz, 4.0).unwrap();
        assert_relative_eq!(g2.center, g1.center * 2.0, epsilon = 1e-12);
        assert_relative_eq!(g2.depression, g1.depression, epsilon = 1e-12);
        assert_relative_eq!(g2.azimuth, g1.azimuth, epsilon = 1e-12);

        let s1 = SurfaceGeometry::new(2.0, 2.5, 15.0).unwrap();
        let s2 = SurfaceGeometry::new(4.0, 5.0, 15.0).unwrap();
        let c1 = build_reflection_cone(&g1, &s1).unwrap();
        let c2 = build_reflection_cone(&g2, &s2).unwrap();
        assert_relative_eq!(c2.apex, c1.apex * 2.0, epsilon = 1e-12);
        assert_relative_eq!(
            c2.horizontal_half_angle,
            c1.horizontal_half_angle,
            epsilon = 1e-12
        );
    }

    #[test]
    fn direct_cone_forward_bearing() {
        let cone = build_direct_cone(Vector3::new(1.0, 0.0, 0.0), 0.07, 0.07, 10.0).unwrap();
        assert_relative_eq!(cone.endpoint, Vector3::new(10.0, 0.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(cone.axis, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(cone.length, 10.0, epsilon = 1e-12);
    }

    #[test]
    fn direct_cone_endpoint_follows_bearing_slope() {
        let bearing = Vector3::new(4.0, 0.0, 1.0).normalize();
        let cone = build_direct_cone(bearing, 0.05, 0.05, 40.0).unwrap();
        assert_relative_eq!(cone.endpoint, Vector3::new(40.0, 0.0, 10.0), epsilon = 1e-12);
        assert_relative_eq!(cone.axis, bearing, epsilon = 1e-12);
    }

    #[test]
    fn direct_cone_rejects_backward_bearing() {
        assert!(matches!(
            build_direct_cone(Vector3::new(-0.2, 0.4, 0.1), 0.05, 0.05, 10.0),
            Err(ConeError::BehindCamera)
        ));
    }

    #[test]
    fn cone_frame_is_orthonormal_right_handed() {
        let bearing = Vector3::new(0.9, -0.3, 0.2).normalize();
        let cone = build_direct_cone(bearing, 0.06, 0.05, 20.0).unwrap();
        let pairs: [(Vector3<f64>, Vector3<f64>); 3] = [
            (cone.axis, cone.vertical_dir),
            (cone.axis, cone.horizontal_dir),
            (cone.vertical_dir, cone.horizontal_dir),
        ];
        for (a, b) in pairs {
            assert!(a.dot(&b).abs() <= 1e-9);
        }
        for v in [cone.axis, cone.vertical_dir, cone.horizontal_dir] {
            assert_relative_eq!(v.norm(), 1.0, epsilon = 1e-12);
        }
        let triple = cone.axis.dot(&cone.vertical_dir.cross(&cone.horizontal_dir));
        assert_relative_eq!(triple, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cone_point_zero_length_is_apex() {
        let cone = build_direct_cone(Vector3::new(1.0, 0.1, 0.05), 0.05, 0.05, 10.0).unwrap();
        let p = cone.point(1.234, 0.0, 0.02, 0.01).unwrap();
        assert_relative_eq!(p, cone.apex, epsilon = 1e-12);
    }

    #[test]
    fn cone_point_axis_tip_is_endpoint() {
        let cone = build_direct_cone(Vector3::new(1.0, 0.1, 0.05), 0.05, 0.05, 10.0).unwrap();
        let p = cone.point(0.5, cone.length, 0.0, 0.0).unwrap();
        assert_relative_eq!(p, cone.endpoint, epsilon = 1e-10);
    }

    #[test]
    fn cone_point_rejects_out_of_range() {
        let cone = build_direct_cone(Vector3::new(1.0, 0.0, 0.0), 0.05, 0.05, 10.0).unwrap();
        assert!(cone.point(-0.1, 1.0, 0.0, 0.0).is_err());
        assert!(cone.point(0.0, 11.0, 0.0, 0.0).is_err());
        assert!(cone.point(0.0, 1.0, 0.06, 0.0).is_err());
        assert!(cone.point(0.0, 1.0, 0.0, 0.06).is_err());
    }

    #[test]
    fn wireframe_has_expected_segment_count() {
        let cone = build_direct_cone(Vector3::new(1.0, 0.0, 0.0), 0.05, 0.05, 10.0).unwrap();
        let segs = cone.wireframe(3, 16);
        assert_eq!(segs.len(), 3 * 16 + 16);
        let mut csv = Vec::new();
        write_wireframe_csv(&mut csv, &[("direct", &cone)], 3, 16).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("cone,x1,y1,z1,x2,y2,z2\n"));
        assert_eq!(text.lines().count(), 1 + 3 * 16 + 16);
    }
}
