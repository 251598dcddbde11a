//! Omnidirectional (fisheye) camera model: pixel ↔ 3-D unit bearing conversion
//! plus observer roll/pitch compensation.
//!
//! # Coordinate conventions
//!
//! - **Camera/body frame**: `x` forward along the optical axis, `y` left
//!   (parallel to the surface), `z` up. The image center maps to `(1, 0, 0)`.
//! - **Pixel coordinates** `(u, v)`: `u` grows to the right, `v` grows
//!   downward. A `+u` displacement therefore tilts the bearing toward `-y`,
//!   a `+v` displacement toward `-z`.
//! - The radial unprojection polynomial maps pixel radius (distance from the
//!   image center after undoing the affine stretch) to the angle from the
//!   optical axis; the projection polynomial is its inverse. The ideal
//!   equidistant lens is `theta = rho / f` / `rho = f * theta`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix2, Rotation3, Vector2, Vector3};
use thiserror::Error;

use crate::scalar::{deg_to_rad, Real};

/// Magic tag on the first line of a calibration file.
pub const CALIBRATION_HEADER: &str = "glint-calibration v1";

/// Maximum pixel error allowed by the projection round-trip self-test.
pub const ROUND_TRIP_TOLERANCE_PX: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("pixel ({0}, {1}) outside image bounds")]
    OutOfBounds(f64, f64),
    #[error("pixel outside the calibrated field of view")]
    OutsideFov,
    #[error("bearing outside the calibrated field of view")]
    BearingOutsideFov,
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("calibration self-test failed: round-trip error {0:.3} px exceeds {1} px")]
    SelfTest(f64, f64),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("invalid attitude: {0}")]
    InvalidAttitude(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Polynomial camera model for a fisheye lens.
///
/// Immutable after construction; all operations are pure functions.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration<T: Real> {
    /// Coefficients of the pixel-radius → axis-angle polynomial, ascending powers.
    unprojection: Vec<T>,
    /// Coefficients of the axis-angle → pixel-radius polynomial, ascending powers.
    projection: Vec<T>,
    /// Image center `(u0, v0)` in pixels.
    center: Vector2<T>,
    /// 2×2 stretch/skew matrix applied on top of the radial model.
    affine: Matrix2<T>,
    affine_inv: Matrix2<T>,
    /// Image size `(width, height)` in pixels.
    resolution: (u32, u32),
    /// Calibrated image-circle radius in pixels; pixels farther out are outside the FOV.
    max_radius: T,
    /// Angle from the optical axis at `max_radius`.
    max_angle: T,
}

impl<T: Real> CameraCalibration<T> {
    /// Build and validate a calibration.
    ///
    /// `max_radius = None` defaults to the distance from the center to the
    /// nearest image border. Validation checks the structural invariants and
    /// runs the projection round-trip self-test on a pixel grid.
    pub fn new(
        unprojection: Vec<T>,
        projection: Vec<T>,
        center: (T, T),
        affine: Matrix2<T>,
        resolution: (u32, u32),
        max_radius: Option<T>,
    ) -> Result<Self, CameraError> {
        let (w, h) = resolution;
        if w == 0 || h == 0 {
            return Err(CameraError::InvalidCalibration(
                "resolution components must be positive".into(),
            ));
        }
        let center = Vector2::new(center.0, center.1);
        let wt = T::of(w as f64);
        let ht = T::of(h as f64);
        if center.x < T::zero() || center.x >= wt || center.y < T::zero() || center.y >= ht {
            return Err(CameraError::InvalidCalibration(
                "image center outside resolution bounds".into(),
            ));
        }
        if unprojection.is_empty() || projection.is_empty() {
            return Err(CameraError::InvalidCalibration(
                "polynomial coefficient lists must be nonempty".into(),
            ));
        }
        let affine_inv = affine.try_inverse().ok_or_else(|| {
            CameraError::InvalidCalibration("affine matrix is singular".into())
        })?;
        let border = center.x.min(wt - center.x).min(center.y).min(ht - center.y);
        let max_radius = max_radius.unwrap_or(border);
        if max_radius <= T::zero() {
            return Err(CameraError::InvalidCalibration(
                "radius limit must be positive".into(),
            ));
        }
        let max_angle = poly_eval(&unprojection, max_radius);
        if max_angle <= T::zero() || max_angle >= T::pi() {
            return Err(CameraError::InvalidCalibration(
                "unprojection polynomial must map the radius limit into (0, pi)".into(),
            ));
        }
        let cal = Self {
            unprojection,
            projection,
            center,
            affine,
            affine_inv,
            resolution,
            max_radius,
            max_angle,
        };
        cal.self_test()?;
        Ok(cal)
    }

    /// Ideal equidistant fisheye covering `fov_deg` across the inscribed image circle.
    ///
    /// Ships as the built-in synthetic model for simulation and tests.
    pub fn ideal_equidistant(width: u32, height: u32, fov_deg: T) -> Self {
        let rho_max = T::of((width.min(height) as f64 - 1.0) / 2.0);
        let theta_max = deg_to_rad(fov_deg) / T::of(2.0);
        let focal = rho_max / theta_max;
        let center = (
            T::of((width as f64 - 1.0) / 2.0),
            T::of((height as f64 - 1.0) / 2.0),
        );
        Self::new(
            vec![T::zero(), T::one() / focal],
            vec![T::zero(), focal],
            center,
            Matrix2::identity(),
            (width, height),
            Some(rho_max),
        )
        .expect("ideal equidistant model is always valid")
    }

    pub fn resolution(&self) -> (u32, u32) {
        self.resolution
    }

    pub fn center(&self) -> Vector2<T> {
        self.center
    }

    /// Calibrated image-circle radius in pixels.
    pub fn max_radius(&self) -> T {
        self.max_radius
    }

    /// Largest angle from the optical axis inside the calibrated FOV.
    pub fn max_angle(&self) -> T {
        self.max_angle
    }

    /// Local scale of the projection: pixels per radian at the given axis
    /// angle (derivative of the projection polynomial).
    pub fn pixels_per_radian(&self, theta: T) -> T {
        let mut acc = T::zero();
        for (k, &c) in self.projection.iter().enumerate().skip(1) {
            acc += c * T::of(k as f64) * theta.powi((k - 1) as i32);
        }
        acc
    }

    /// Convert a pixel to a unit bearing vector in the camera frame.
    pub fn cam2world(&self, pixel: Vector2<T>) -> Result<Vector3<T>, CameraError> {
        let (w, h) = self.resolution;
        if pixel.x < T::zero()
            || pixel.x >= T::of(w as f64)
            || pixel.y < T::zero()
            || pixel.y >= T::of(h as f64)
        {
            return Err(CameraError::OutOfBounds(pixel.x.as_f64(), pixel.y.as_f64()));
        }
        let d = self.affine_inv * (pixel - self.center);
        let rho = d.norm();
        if rho > self.max_radius {
            return Err(CameraError::OutsideFov);
        }
        if rho == T::zero() {
            return Ok(Vector3::new(T::one(), T::zero(), T::zero()));
        }
        let theta = poly_eval(&self.unprojection, rho);
        if theta < T::zero() || theta >= T::pi() {
            return Err(CameraError::OutsideFov);
        }
        let (sin_t, cos_t) = theta.sin_cos();
        let bearing = Vector3::new(cos_t, -sin_t * d.x / rho, -sin_t * d.y / rho);
        Ok(bearing.normalize())
    }

    /// Convert a unit bearing in the camera frame to a pixel.
    pub fn world2cam(&self, bearing: Vector3<T>) -> Result<Vector2<T>, CameraError> {
        let b = bearing.normalize();
        let lateral = (b.y * b.y + b.z * b.z).sqrt();
        let theta = lateral.atan2(b.x);
        if theta > self.max_angle {
            return Err(CameraError::BearingOutsideFov);
        }
        if lateral == T::zero() {
            return Ok(self.center);
        }
        let rho = poly_eval(&self.projection, theta);
        let d = Vector2::new(-b.y / lateral, -b.z / lateral) * rho;
        Ok(self.center + self.affine * d)
    }

    /// Round-trip every grid pixel inside the FOV and reject the model if the
    /// reprojection error exceeds [`ROUND_TRIP_TOLERANCE_PX`].
    fn self_test(&self) -> Result<(), CameraError> {
        let (w, h) = self.resolution;
        let mut worst = 0.0f64;
        let steps = 24u32;
        for i in 0..=steps {
            for j in 0..=steps {
                let u = T::of(i as f64 * (w as f64 - 1.0) / steps as f64);
                let v = T::of(j as f64 * (h as f64 - 1.0) / steps as f64);
                let pixel = Vector2::new(u, v);
                let bearing = match self.cam2world(pixel) {
                    Ok(b) => b,
                    Err(_) => continue, // outside the image circle
                };
                let back = self.world2cam(bearing)?;
                worst = worst.max((back - pixel).norm().as_f64());
            }
        }
        if worst > ROUND_TRIP_TOLERANCE_PX {
            return Err(CameraError::SelfTest(worst, ROUND_TRIP_TOLERANCE_PX));
        }
        Ok(())
    }

    /// Serialize to the plain-text calibration format.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{CALIBRATION_HEADER}");
        let _ = writeln!(s, "resolution {} {}", self.resolution.0, self.resolution.1);
        let _ = writeln!(s, "center {} {}", self.center.x, self.center.y);
        let _ = writeln!(
            s,
            "affine {} {} {} {}",
            self.affine[(0, 0)],
            self.affine[(0, 1)],
            self.affine[(1, 0)],
            self.affine[(1, 1)]
        );
        let _ = write!(s, "unprojection");
        for c in &self.unprojection {
            let _ = write!(s, " {c}");
        }
        let _ = writeln!(s);
        let _ = write!(s, "projection");
        for c in &self.projection {
            let _ = write!(s, " {c}");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "radius_limit {}", self.max_radius);
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), CameraError> {
        std::fs::write(path, self.to_file_string())?;
        Ok(())
    }

    /// Load a calibration file, validating it (including the round-trip self-test).
    pub fn load(path: &Path) -> Result<Self, CameraError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parse the plain-text calibration format.
    ///
    /// Line 1 must be the versioned header; the remaining lines are
    /// `key value...` pairs in any order. `#` starts a comment.
    pub fn parse(text: &str, source: &str) -> Result<Self, CameraError> {
        let err = |line: usize, msg: String| CameraError::Parse {
            path: source.to_string(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, first)) if first.trim() == CALIBRATION_HEADER => {}
            Some((_, first)) => {
                return Err(err(1, format!("expected header '{CALIBRATION_HEADER}', found '{first}'")))
            }
            None => return Err(err(1, "empty file".into())),
        }

        let mut resolution = None;
        let mut center = None;
        let mut affine = None;
        let mut unprojection: Option<Vec<T>> = None;
        let mut projection: Option<Vec<T>> = None;
        let mut radius_limit = None;

        for (idx, raw) in lines {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap();
            let values: Vec<&str> = parts.collect();
            let parse_t = |s: &str| -> Result<T, CameraError> {
                s.parse::<T>()
                    .map_err(|_| err(line_no, format!("invalid number '{s}'")))
            };
            match key {
                "resolution" => {
                    if values.len() != 2 {
                        return Err(err(line_no, "resolution expects 2 integers".into()));
                    }
                    let w = values[0]
                        .parse::<u32>()
                        .map_err(|_| err(line_no, format!("invalid width '{}'", values[0])))?;
                    let h = values[1]
                        .parse::<u32>()
                        .map_err(|_| err(line_no, format!("invalid height '{}'", values[1])))?;
                    resolution = Some((w, h));
                }
                "center" => {
                    if values.len() != 2 {
                        return Err(err(line_no, "center expects 2 numbers".into()));
                    }
                    center = Some((parse_t(values[0])?, parse_t(values[1])?));
                }
                "affine" => {
                    if values.len() != 4 {
                        return Err(err(line_no, "affine expects 4 numbers (row major)".into()));
                    }
                    affine = Some(Matrix2::new(
                        parse_t(values[0])?,
                        parse_t(values[1])?,
                        parse_t(values[2])?,
                        parse_t(values[3])?,
                    ));
                }
                "unprojection" => {
                    let coeffs = values.iter().map(|s| parse_t(s)).collect::<Result<_, _>>()?;
                    unprojection = Some(coeffs);
                }
                "projection" => {
                    let coeffs = values.iter().map(|s| parse_t(s)).collect::<Result<_, _>>()?;
                    projection = Some(coeffs);
                }
                "radius_limit" => {
                    if values.len() != 1 {
                        return Err(err(line_no, "radius_limit expects 1 number".into()));
                    }
                    radius_limit = Some(parse_t(values[0])?);
                }
                other => return Err(err(line_no, format!("unknown key '{other}'"))),
            }
        }

        let missing = |what: &str| {
            CameraError::InvalidCalibration(format!("{source}: missing '{what}' entry"))
        };
        Self::new(
            unprojection.ok_or_else(|| missing("unprojection"))?,
            projection.ok_or_else(|| missing("projection"))?,
            center.ok_or_else(|| missing("center"))?,
            affine.unwrap_or_else(Matrix2::identity),
            resolution.ok_or_else(|| missing("resolution"))?,
            radius_limit,
        )
    }
}

/// Observer roll/pitch and height above the reflective surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverAttitude<T: Real> {
    /// Roll angle in radians, |roll| < pi/2.
    pub roll: T,
    /// Pitch angle in radians, |pitch| < pi/2.
    pub pitch: T,
    /// Height above the reflective surface in meters, > 0.
    pub height: T,
}

impl<T: Real> ObserverAttitude<T> {
    pub fn new(roll: T, pitch: T, height: T) -> Result<Self, CameraError> {
        let half_pi = T::frac_pi_2();
        if roll.abs() >= half_pi || pitch.abs() >= half_pi {
            return Err(CameraError::InvalidAttitude(
                "roll and pitch magnitudes must stay below pi/2".into(),
            ));
        }
        if height <= T::zero() || !height.finite() {
            return Err(CameraError::InvalidAttitude(
                "height above the surface must be positive".into(),
            ));
        }
        Ok(Self { roll, pitch, height })
    }

    /// Level attitude at the given height.
    pub fn level(height: T) -> Result<Self, CameraError> {
        Self::new(T::zero(), T::zero(), height)
    }
}

/// Undo the observer's roll and pitch on a camera-frame bearing.
///
/// Applies `R_x(-roll) * R_y(-pitch)` where `R_y` / `R_x` are the standard
/// right-handed rotations about the camera `y` / `x` axes: the pitch is
/// compensated first, then the roll. With a level attitude the bearing is
/// returned unchanged. Yaw never enters: the output frame is defined relative
/// to the camera's own horizontal center.
pub fn compensate_attitude<T: Real>(bearing: Vector3<T>, att: &ObserverAttitude<T>) -> Vector3<T> {
    if att.roll == T::zero() && att.pitch == T::zero() {
        return bearing;
    }
    let undo_pitch = Rotation3::from_axis_angle(&Vector3::y_axis(), -att.pitch);
    let undo_roll = Rotation3::from_axis_angle(&Vector3::x_axis(), -att.roll);
    undo_roll * (undo_pitch * bearing)
}

/// Inverse of [`compensate_attitude`]: re-apply the observer's roll and pitch.
pub fn apply_attitude<T: Real>(bearing: Vector3<T>, att: &ObserverAttitude<T>) -> Vector3<T> {
    let pitch = Rotation3::from_axis_angle(&Vector3::y_axis(), att.pitch);
    let roll = Rotation3::from_axis_angle(&Vector3::x_axis(), att.roll);
    pitch * (roll * bearing)
}

/// Azimuth of a bearing: angle in the x-y plane, positive toward +y.
pub fn azimuth<T: Real>(bearing: &Vector3<T>) -> T {
    bearing.y.atan2(bearing.x)
}

/// Elevation of a bearing above the horizontal plane.
pub fn elevation<T: Real>(bearing: &Vector3<T>) -> T {
    bearing.z.atan2((bearing.x * bearing.x + bearing.y * bearing.y).sqrt())
}

fn poly_eval<T: Real>(coeffs: &[T], x: T) -> T {
    let mut acc = T::zero();
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}
