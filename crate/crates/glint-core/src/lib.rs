//! Relative localization from surface reflections of active markers.
//!
//! A fisheye camera sees a teammate's marker light twice: directly, and
//! mirrored in the surface below (floor, water). Both detections constrain
//! the transmitter's position:
//!
//! 1. **camera** – pixels become unit bearing vectors, compensated for
//!    observer roll and pitch.
//! 2. **detection** – binarization, connected-component analysis, blob
//!    classification (direct / reflection / background), reflection extent.
//! 3. **cones** – the reflection spread spans a finite elliptical cone from
//!    the observer's mirror image; the direct bearing spans a second cone
//!    from the observer with fixed uncertainty angles.
//! 4. **sampler** – candidates drawn uniformly in the reflection cone's
//!    parameter space are filtered through the direct cone's membership test.
//! 5. **tracker** – a constant-velocity particle filter with a robust Cauchy
//!    kernel smooths the surviving inliers into a position estimate.
//! 6. **simulator** – synthetic scenes with Fresnel reflectance and
//!    roughness-driven reflection elongation provide ground truth.
//! 7. **pipeline** / **harness** – per-frame composition, named parameter
//!    profiles, experiment runs, replay, and per-axis error reports.
//!
//! All geometry and estimation code is generic over the scalar type via
//! [`scalar::Real`] (`f32` or `f64`); the aliases below pin the common
//! choices.

pub mod camera;
pub mod cones;
pub mod detection;
pub mod harness;
pub mod pipeline;
pub mod sampler;
pub mod scalar;
pub mod simulator;
pub mod tracker;

/// Double-precision calibration, the usual choice.
pub type Calibration64 = camera::CameraCalibration<f64>;
/// Single-precision calibration for memory-tight deployments.
pub type Calibration32 = camera::CameraCalibration<f32>;
/// Double-precision elliptical cone.
pub type Cone64 = cones::EllipticalCone<f64>;
/// Single-precision elliptical cone.
pub type Cone32 = cones::EllipticalCone<f32>;
/// Double-precision scene description.
pub type Scene64 = simulator::SceneConfig<f64>;
/// Double-precision tracker.
pub type Tracker64 = tracker::Tracker<f64>;
