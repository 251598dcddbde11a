//! Synthetic scene generator with ground truth.
//!
//! A transmitter follows a waypoint trajectory above a reflective surface
//! while the observer sits at the origin. Frames are rendered either as
//! grayscale images (Gaussian blobs for the direct marker light and its
//! vertically elongated reflection) or directly as noisy centroid
//! measurements, together with the exact ground truth for evaluation.
//!
//! Reflection intensity follows Fresnel reflectance for unpolarized light;
//! the reflection's vertical elongation is a phenomenological stand-in for
//! surface roughness and surface waves, parameterized by an effective surface
//! slope.

use image::GrayImage;
use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

use crate::camera::CameraCalibration;
use crate::detection::Centroid;
use crate::scalar::Real;

/// Converts Gaussian surface-height roughness (meters) into an effective
/// surface-slope contribution. Phenomenological constant.
pub const ROUGHNESS_SLOPE_PER_METER: f64 = 25.0;

/// Exposure time that maps `base_intensity` one-to-one onto pixel values.
pub const REFERENCE_EXPOSURE_MS: f64 = 20.0;

#[derive(Debug, Error)]
pub enum SimulatorError {
    #[error("transmitter at or below the reflective surface")]
    BelowSurface,
    #[error("time {0} outside the trajectory span")]
    TimeOutsideTrajectory(f64),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("{path}: {msg}")]
    SceneFile { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which direction the Fresnel evaluation averages the two polarizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FresnelMode {
    /// Average of the two amplitude coefficients. Cancels to zero at normal
    /// incidence; kept for fidelity.
    Literal,
    /// Average of the squared amplitude coefficients: the standard power
    /// reflectance, bounded to [0, 1]. Default for rendering.
    Squared,
}

/// Reflectance of unpolarized light at a dielectric boundary.
///
/// `theta_i` is the incidence angle from the surface normal in `[0, pi/2)`;
/// `n_i`/`n_t` are the refractive indices of the incident and transmitting
/// media. Total internal reflection returns 1.
pub fn fresnel_reflectance<T: Real>(theta_i: T, n_i: T, n_t: T, mode: FresnelMode) -> T {
    let cos_i = theta_i.cos();
    let sin_i = theta_i.sin();
    let sin_t = n_i / n_t * sin_i;
    if sin_t >= T::one() {
        return T::one(); // beyond the critical angle
    }
    let cos_t = (T::one() - sin_t * sin_t).sqrt();
    // parallel (p) and perpendicular (s) amplitude coefficients
    let r_par = (n_t * cos_i - n_i * cos_t) / (n_i * cos_t + n_t * cos_i);
    let r_perp = (n_i * cos_i - n_t * cos_t) / (n_i * cos_i + n_t * cos_t);
    let half = T::of(0.5);
    match mode {
        FresnelMode::Literal => half * (r_par + r_perp),
        FresnelMode::Squared => half * (r_par * r_par + r_perp * r_perp),
    }
}

/// Where a transmitter's reflection appears: the surface point and the unit
/// bearing from the observer toward it.
///
/// Ground-truth counterpart of the measurement-side reflection geometry: the
/// transmitter is mirrored across the surface plane and the sight line to the
/// mirror image is intersected with the plane.
pub fn mirror_project<T: Real>(
    transmitter: Vector3<T>,
    observer_height: T,
) -> Result<(Vector3<T>, Vector3<T>), SimulatorError> {
    if transmitter.z <= -observer_height {
        return Err(SimulatorError::BelowSurface);
    }
    let mirrored = Vector3::new(
        transmitter.x,
        transmitter.y,
        -(observer_height + observer_height) - transmitter.z,
    );
    let scale = -observer_height / mirrored.z;
    let surface_point = mirrored * scale;
    Ok((surface_point, mirrored.normalize()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceConfig<T: Real> {
    /// Refractive index of the surface medium (transmitting side).
    pub refractive_index: T,
    /// Refractive index of the medium the light travels through.
    pub incident_index: T,
    /// Gaussian surface-roughness height std, meters.
    pub roughness_std: T,
    /// Surface wave amplitude, meters.
    pub wave_amplitude: T,
    /// Surface wave wavelength, meters.
    pub wave_wavelength: T,
}

impl<T: Real> Default for SurfaceConfig<T> {
    fn default() -> Self {
        Self {
            refractive_index: T::of(1.33),
            incident_index: T::one(),
            roughness_std: T::zero(),
            wave_amplitude: T::zero(),
            wave_wavelength: T::one(),
        }
    }
}

impl<T: Real> SurfaceConfig<T> {
    /// Effective surface-slope std combining roughness and wave steepness.
    pub fn effective_slope(&self) -> T {
        let roughness = self.roughness_std * T::of(ROUGHNESS_SLOPE_PER_METER);
        let wave = if self.wave_wavelength > T::zero() {
            T::two_pi() * self.wave_amplitude / self.wave_wavelength
        } else {
            T::zero()
        };
        roughness + wave
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterConfig<T: Real> {
    /// Lambertian exponent of the radiant-intensity profile; 0 is isotropic.
    pub lambertian_exponent: T,
    /// Point-spread std of a rendered blob, pixels.
    pub blob_radius_px: T,
    /// Source brightness before exposure scaling; the marker saturates the
    /// sensor rather than dimming with distance.
    pub base_intensity: T,
}

impl<T: Real> Default for EmitterConfig<T> {
    fn default() -> Self {
        Self {
            lambertian_exponent: T::zero(),
            blob_radius_px: T::of(1.5),
            base_intensity: T::of(4000.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig<T: Real> {
    /// Per-axis Gaussian jitter added to centroid-mode measurements, pixels.
    pub centroid_jitter_px: T,
    /// Probability that a blob drops out of a centroid-mode frame.
    pub dropout_prob: T,
}

impl<T: Real> Default for NoiseConfig<T> {
    fn default() -> Self {
        Self {
            centroid_jitter_px: T::zero(),
            dropout_prob: T::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Waypoint<T: Real> {
    pub t: T,
    pub position: Vector3<T>,
}

/// Full description of a synthetic scene.
#[derive(Debug, Clone)]
pub struct SceneConfig<T: Real> {
    /// Observer height above the surface, meters.
    pub observer_height: T,
    /// Time-stamped transmitter waypoints, strictly increasing in time.
    pub trajectory: Vec<Waypoint<T>>,
    pub surface: SurfaceConfig<T>,
    pub emitter: EmitterConfig<T>,
    pub camera: CameraCalibration<T>,
    pub noise: NoiseConfig<T>,
    /// Camera exposure, milliseconds; scales blob intensity linearly around
    /// [`REFERENCE_EXPOSURE_MS`].
    pub exposure_ms: T,
    /// Frames per second for experiment runs.
    pub frame_rate: T,
}

impl<T: Real> SceneConfig<T> {
    /// Stationary transmitter watched for `duration` seconds; the default
    /// camera, surface, and noise settings apply.
    pub fn hover(transmitter: Vector3<T>, observer_height: T, duration: T) -> Self {
        Self {
            observer_height,
            trajectory: vec![
                Waypoint {
                    t: T::zero(),
                    position: transmitter,
                },
                Waypoint {
                    t: duration,
                    position: transmitter,
                },
            ],
            surface: SurfaceConfig::default(),
            emitter: EmitterConfig::default(),
            camera: CameraCalibration::ideal_equidistant(752, 480, T::of(185.0)),
            noise: NoiseConfig::default(),
            exposure_ms: T::of(REFERENCE_EXPOSURE_MS),
            frame_rate: T::of(60.0),
        }
    }

    pub fn validate(&self) -> Result<(), SimulatorError> {
        if self.trajectory.is_empty() {
            return Err(SimulatorError::InvalidScene("trajectory has no waypoints".into()));
        }
        for pair in self.trajectory.windows(2) {
            if pair[1].t <= pair[0].t {
                return Err(SimulatorError::InvalidScene(
                    "trajectory timestamps must be strictly increasing".into(),
                ));
            }
        }
        if self.observer_height <= T::zero() {
            return Err(SimulatorError::InvalidScene("observer height must be positive".into()));
        }
        if self.surface.refractive_index <= T::zero() || self.surface.incident_index <= T::zero() {
            return Err(SimulatorError::InvalidScene("refractive indices must be positive".into()));
        }
        if self.noise.dropout_prob < T::zero() || self.noise.dropout_prob >= T::one() {
            return Err(SimulatorError::InvalidScene("dropout_prob must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Time span covered by the trajectory.
    pub fn time_span(&self) -> (T, T) {
        (
            self.trajectory.first().map(|w| w.t).unwrap_or_default(),
            self.trajectory.last().map(|w| w.t).unwrap_or_default(),
        )
    }

    /// Linearly interpolated transmitter position at time `t`.
    pub fn transmitter_at(&self, t: T) -> Result<Vector3<T>, SimulatorError> {
        let (start, end) = self.time_span();
        if self.trajectory.len() == 1 {
            return Ok(self.trajectory[0].position);
        }
        if t < start || t > end {
            return Err(SimulatorError::TimeOutsideTrajectory(t.as_f64()));
        }
        let idx = self
            .trajectory
            .windows(2)
            .position(|pair| t <= pair[1].t)
            .unwrap_or(self.trajectory.len() - 2);
        let a = &self.trajectory[idx];
        let b = &self.trajectory[idx + 1];
        let alpha = (t - a.t) / (b.t - a.t);
        Ok(a.position + (b.position - a.position) * alpha)
    }
}

/// Ground truth attached to every rendered frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTruth<T: Real> {
    pub t: T,
    pub transmitter: Vector3<T>,
    /// Pixel of the direct blob, absent if outside the camera FOV.
    pub direct_pixel: Option<Vector2<T>>,
    /// Pixel of the reflection blob, absent if outside the FOV.
    pub reflection_pixel: Option<Vector2<T>>,
    /// Relative reflection intensity before quantization.
    pub reflection_intensity: T,
    /// Gaussian blob stds of the reflection `(vertical, horizontal)`, pixels.
    pub extent_px: (T, T),
}

/// Extremal pixels of a simulated reflection blob, tied to its centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtentMeasurement<T: Real> {
    pub centroid_index: usize,
    pub vertical_extremum: Vector2<T>,
    pub horizontal_extremum: Vector2<T>,
}

/// One frame of centroid-mode output: what the detection stage would have
/// produced from an image, classes unassigned.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidFrame<T: Real> {
    pub t: T,
    pub centroids: Vec<Centroid<T>>,
    pub extents: Vec<ExtentMeasurement<T>>,
}

pub enum RenderMode {
    Image,
    /// Emit centroids directly; blobs dimmer than the threshold vanish and
    /// extremal pixels are computed at this threshold's level set.
    Centroids { detection_threshold: u8 },
}

pub enum Frame<T: Real> {
    Image(GrayImage),
    Centroids(CentroidFrame<T>),
}

impl<T: Real> Frame<T> {
    pub fn as_image(&self) -> Option<&GrayImage> {
        match self {
            Frame::Image(img) => Some(img),
            Frame::Centroids(_) => None,
        }
    }

    pub fn as_centroids(&self) -> Option<&CentroidFrame<T>> {
        match self {
            Frame::Image(_) => None,
            Frame::Centroids(c) => Some(c),
        }
    }
}

struct BlobSpec<T: Real> {
    pixel: Vector2<T>,
    peak: T,
    sigma_u: T,
    sigma_v: T,
    is_reflection: bool,
}

/// Render the scene at time `t`.
///
/// Deterministic for a fixed `(scene, seed, t)`: the frame RNG is derived
/// from the seed and the time stamp.
pub fn render_frame<T: Real>(
    scene: &SceneConfig<T>,
    t: T,
    seed: u64,
    mode: RenderMode,
) -> Result<(Frame<T>, FrameTruth<T>), SimulatorError> {
    scene.validate()?;
    let transmitter = scene.transmitter_at(t)?;
    if transmitter.z <= -scene.observer_height {
        return Err(SimulatorError::BelowSurface);
    }
    let mut rng = frame_rng(seed, t);

    let exposure_scale = scene.exposure_ms / T::of(REFERENCE_EXPOSURE_MS);
    let base = scene.emitter.base_intensity * exposure_scale;

    // direct blob
    let direct_pixel = scene.camera.world2cam(transmitter.normalize()).ok();
    let direct_peak = clamp_intensity(base);

    // reflection blob
    let (surface_point, reflection_bearing) = mirror_project(transmitter, scene.observer_height)?;
    let reflection_pixel = scene.camera.world2cam(reflection_bearing).ok();

    // incidence angle at the surface point, from the vertical
    let incoming = (surface_point - transmitter).normalize();
    let cos_incidence = incoming.z.abs().min(T::one());
    let theta_i = cos_incidence.acos();
    let reflectance = fresnel_reflectance(
        theta_i,
        scene.surface.incident_index,
        scene.surface.refractive_index,
        FresnelMode::Squared,
    );

    // Lambertian factor: the marker's emission axis faces the observer, so
    // the reflected path leaves at an angle to it
    let toward_observer = (-transmitter).normalize();
    let emission = incoming;
    let cos_emit = emission.dot(&toward_observer).max(T::zero());
    let lambertian = if scene.emitter.lambertian_exponent > T::zero() {
        cos_emit.powf(scene.emitter.lambertian_exponent)
    } else {
        T::one()
    };

    let reflection_intensity = base * lambertian * reflectance;
    let reflection_peak = clamp_intensity(reflection_intensity);

    // vertical elongation: angular spread of the reflected ray mapped through
    // the local pixel scale (a surface tilted by delta deflects the ray by 2*delta)
    let sigma_u = scene.emitter.blob_radius_px;
    let sigma_v = match reflection_pixel {
        Some(_) => {
            let spread_angle = T::of(2.0) * scene.surface.effective_slope();
            let theta = reflection_bearing.yz().norm().atan2(reflection_bearing.x);
            let px_per_rad = scene.camera.pixels_per_radian(theta);
            (sigma_u * sigma_u + (spread_angle * px_per_rad).powi(2)).sqrt()
        }
        None => sigma_u,
    };

    let truth = FrameTruth {
        t,
        transmitter,
        direct_pixel,
        reflection_pixel,
        reflection_intensity,
        extent_px: (sigma_v, sigma_u),
    };

    let mut blobs = Vec::new();
    if let Some(pixel) = direct_pixel {
        blobs.push(BlobSpec {
            pixel,
            peak: direct_peak,
            sigma_u,
            sigma_v: sigma_u,
            is_reflection: false,
        });
    }
    if let Some(pixel) = reflection_pixel {
        blobs.push(BlobSpec {
            pixel,
            peak: reflection_peak,
            sigma_u,
            sigma_v,
            is_reflection: true,
        });
    }

    let frame = match mode {
        RenderMode::Image => Frame::Image(render_image(scene, &blobs)),
        RenderMode::Centroids { detection_threshold } => Frame::Centroids(render_centroids(
            scene,
            t,
            &blobs,
            detection_threshold,
            &mut rng,
        )),
    };
    Ok((frame, truth))
}

fn frame_rng<T: Real>(seed: u64, t: T) -> ChaCha8Rng {
    let t_bits = t.as_f64().to_bits();
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ t_bits)
}

fn clamp_intensity<T: Real>(value: T) -> T {
    value.max(T::zero()).min(T::of(255.0))
}

fn render_image<T: Real>(scene: &SceneConfig<T>, blobs: &[BlobSpec<T>]) -> GrayImage {
    let (w, h) = scene.camera.resolution();
    let mut img = GrayImage::new(w, h);
    for blob in blobs {
        if blob.peak < T::one() {
            continue;
        }
        let reach_u = (blob.sigma_u * T::of(4.0)).as_f64().ceil() as i64 + 1;
        let reach_v = (blob.sigma_v * T::of(4.0)).as_f64().ceil() as i64 + 1;
        let cu = blob.pixel.x.as_f64().round() as i64;
        let cv = blob.pixel.y.as_f64().round() as i64;
        for y in (cv - reach_v).max(0)..=(cv + reach_v).min(h as i64 - 1) {
            for x in (cu - reach_u).max(0)..=(cu + reach_u).min(w as i64 - 1) {
                let du = (T::of(x as f64) - blob.pixel.x) / blob.sigma_u;
                let dv = (T::of(y as f64) - blob.pixel.y) / blob.sigma_v;
                let value = blob.peak * (-(du * du + dv * dv) / T::of(2.0)).exp();
                let value = value.as_f64().round() as i64;
                if value <= 0 {
                    continue;
                }
                let px = img.get_pixel_mut(x as u32, y as u32);
                px.0[0] = px.0[0].saturating_add(value.min(255) as u8);
            }
        }
    }
    img
}

fn render_centroids<T: Real>(
    scene: &SceneConfig<T>,
    t: T,
    blobs: &[BlobSpec<T>],
    threshold: u8,
    rng: &mut ChaCha8Rng,
) -> CentroidFrame<T> {
    let jitter = scene.noise.centroid_jitter_px;
    let mut frame = CentroidFrame {
        t,
        centroids: Vec::new(),
        extents: Vec::new(),
    };
    for blob in blobs {
        // draw the random values unconditionally so the stream stays aligned
        // across frames regardless of visibility
        let dropout = T::uniform_01(rng);
        let noise: Vec<T> = (0..6).map(|_| T::standard_normal(rng)).collect();
        let quantized = blob.peak.as_f64().round();
        if quantized < threshold as f64 {
            continue;
        }
        if scene.noise.dropout_prob > T::zero() && dropout < scene.noise.dropout_prob {
            continue;
        }
        // level-set radii of the Gaussian blob at the detection threshold
        let ratio = (blob.peak / T::of(threshold as f64).max(T::one())).max(T::one());
        let reach = (T::of(2.0) * ratio.ln()).sqrt();
        let r_u = blob.sigma_u * reach;
        let r_v = blob.sigma_v * reach;
        let area = (T::pi() * r_u * r_v).as_f64().round().max(1.0) as u32;

        let position = blob.pixel + Vector2::new(noise[0], noise[1]) * jitter;
        let index = frame.centroids.len();
        frame.centroids.push(Centroid::at(
            position.x,
            position.y,
            area,
            quantized.min(255.0) as u8,
        ));
        if blob.is_reflection {
            frame.extents.push(ExtentMeasurement {
                centroid_index: index,
                vertical_extremum: position + Vector2::new(noise[2] * jitter, r_v + noise[3] * jitter),
                horizontal_extremum: position
                    + Vector2::new(r_u + noise[4] * jitter, noise[5] * jitter),
            });
        }
    }
    frame
}

// --- scene files -----------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    observer_height: f64,
    #[serde(default = "default_frame_rate")]
    frame_rate: f64,
    #[serde(default = "default_exposure")]
    exposure_ms: f64,
    #[serde(default)]
    surface: SurfaceFile,
    #[serde(default)]
    emitter: EmitterFile,
    camera: CameraFile,
    #[serde(default)]
    noise: NoiseFile,
    #[serde(default)]
    waypoint: Vec<WaypointFile>,
    /// Alternative to inline waypoints: CSV with `t,x,y,z` rows.
    trajectory_csv: Option<String>,
}

fn default_frame_rate() -> f64 {
    60.0
}

fn default_exposure() -> f64 {
    REFERENCE_EXPOSURE_MS
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SurfaceFile {
    #[serde(default = "default_n_water")]
    refractive_index: f64,
    #[serde(default = "default_n_air")]
    incident_index: f64,
    #[serde(default)]
    roughness_std: f64,
    #[serde(default)]
    wave_amplitude: f64,
    #[serde(default = "default_wavelength")]
    wave_wavelength: f64,
}

fn default_n_water() -> f64 {
    1.33
}

fn default_n_air() -> f64 {
    1.0
}

fn default_wavelength() -> f64 {
    1.0
}

impl Default for SurfaceFile {
    fn default() -> Self {
        Self {
            refractive_index: 1.33,
            incident_index: 1.0,
            roughness_std: 0.0,
            wave_amplitude: 0.0,
            wave_wavelength: 1.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmitterFile {
    #[serde(default)]
    lambertian_exponent: f64,
    #[serde(default = "default_blob_radius")]
    blob_radius_px: f64,
    #[serde(default = "default_base_intensity")]
    base_intensity: f64,
}

fn default_blob_radius() -> f64 {
    1.5
}

fn default_base_intensity() -> f64 {
    4000.0
}

impl Default for EmitterFile {
    fn default() -> Self {
        Self {
            lambertian_exponent: 0.0,
            blob_radius_px: 1.5,
            base_intensity: 4000.0,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraFile {
    /// Path to a calibration file, relative to the scene file.
    calibration: Option<String>,
    width: Option<u32>,
    height: Option<u32>,
    fov_deg: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseFile {
    #[serde(default)]
    centroid_jitter_px: f64,
    #[serde(default)]
    dropout_prob: f64,
}

#[derive(Debug, Deserialize)]
struct WaypointFile {
    t: f64,
    position: [f64; 3],
}

impl<T: Real> SceneConfig<T> {
    /// Load a scene description from a TOML file.
    pub fn load(path: &Path) -> Result<Self, SimulatorError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimulatorError::SceneFile {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let file: SceneFile = toml::from_str(&text).map_err(|e| SimulatorError::SceneFile {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let dir = path.parent().unwrap_or_else(|| Path::new("."));

        let camera = match &file.camera.calibration {
            Some(rel) => {
                let cal_path = dir.join(rel);
                CameraCalibration::load(&cal_path).map_err(|e| SimulatorError::SceneFile {
                    path: path.display().to_string(),
                    msg: format!("camera calibration: {e}"),
                })?
            }
            None => {
                let (Some(w), Some(h), Some(fov)) =
                    (file.camera.width, file.camera.height, file.camera.fov_deg)
                else {
                    return Err(SimulatorError::SceneFile {
                        path: path.display().to_string(),
                        msg: "camera needs either 'calibration' or width/height/fov_deg".into(),
                    });
                };
                CameraCalibration::ideal_equidistant(w, h, T::of(fov))
            }
        };

        let mut trajectory: Vec<Waypoint<T>> = file
            .waypoint
            .iter()
            .map(|w| Waypoint {
                t: T::of(w.t),
                position: Vector3::new(T::of(w.position[0]), T::of(w.position[1]), T::of(w.position[2])),
            })
            .collect();
        if let Some(rel) = &file.trajectory_csv {
            if !trajectory.is_empty() {
                return Err(SimulatorError::SceneFile {
                    path: path.display().to_string(),
                    msg: "give either inline waypoints or trajectory_csv, not both".into(),
                });
            }
            trajectory = load_trajectory_csv(&dir.join(rel))?;
        }

        let scene = Self {
            observer_height: T::of(file.observer_height),
            trajectory,
            surface: SurfaceConfig {
                refractive_index: T::of(file.surface.refractive_index),
                incident_index: T::of(file.surface.incident_index),
                roughness_std: T::of(file.surface.roughness_std),
                wave_amplitude: T::of(file.surface.wave_amplitude),
                wave_wavelength: T::of(file.surface.wave_wavelength),
            },
            emitter: EmitterConfig {
                lambertian_exponent: T::of(file.emitter.lambertian_exponent),
                blob_radius_px: T::of(file.emitter.blob_radius_px),
                base_intensity: T::of(file.emitter.base_intensity),
            },
            camera,
            noise: NoiseConfig {
                centroid_jitter_px: T::of(file.noise.centroid_jitter_px),
                dropout_prob: T::of(file.noise.dropout_prob),
            },
            exposure_ms: T::of(file.exposure_ms),
            frame_rate: T::of(file.frame_rate),
        };
        scene.validate()?;
        Ok(scene)
    }
}

/// Read waypoints from a `t,x,y,z` CSV file (header row required).
pub fn load_trajectory_csv<T: Real>(path: &Path) -> Result<Vec<Waypoint<T>>, SimulatorError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| SimulatorError::SceneFile {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    let mut points = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| SimulatorError::SceneFile {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let field = |k: usize| -> Result<T, SimulatorError> {
            record
                .get(k)
                .and_then(|s| s.trim().parse::<T>().ok())
                .ok_or_else(|| SimulatorError::SceneFile {
                    path: path.display().to_string(),
                    msg: format!("row {}: bad field {k}", i + 2),
                })
        };
        points.push(Waypoint {
            t: field(0)?,
            position: Vector3::new(field(1)?, field(2)?, field(3)?),
        });
    }
    Ok(points)
}

/// Write waypoints as a `t,x,y,z` CSV file.
pub fn write_trajectory_csv<W: std::io::Write, T: Real>(
    out: &mut W,
    points: &[Waypoint<T>],
) -> std::io::Result<()> {
    writeln!(out, "t,x,y,z")?;
    for w in points {
        writeln!(out, "{},{},{},{}", w.t, w.position.x, w.position.y, w.position.z)?;
    }
    Ok(())
}
