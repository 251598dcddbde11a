//! Per-frame composition: centroids in, relative-position estimate out.
//!
//! A pipeline owns the classifier's persistence record and the particle
//! filter for one tracked transmitter. Each frame flows through
//! classification, reflection/direct cone construction, sampled cone
//! intersection, and the tracker update. Frames without a usable
//! direct/reflection pair become prediction-only steps.

use nalgebra::{Vector2, Vector3};

use crate::camera::{compensate_attitude, CameraCalibration, ObserverAttitude};
use crate::cones::{
    build_direct_cone, build_reflection_cone, EllipticalCone, ReflectionGeometry, SurfaceGeometry,
};
use crate::detection::{
    classify_centroids, extract_components, measure_extent, Centroid, CentroidClass,
    ClassifierConfig, PersistenceRecord, Rect,
};
use crate::sampler::{intersect, sample_reflection_cone, InlierSet, MembershipFrame, SamplerConfig};
use crate::scalar::Real;
use crate::tracker::{Tracker, TrackerConfig, TrackerError};

/// Everything the per-frame pipeline needs to know.
#[derive(Debug, Clone)]
pub struct PipelineConfig<T: Real> {
    /// Candidate samples per frame.
    pub sample_count: usize,
    /// Cap on the measured vertical half-apex angle of the reflection cone,
    /// radians.
    pub reflection_vertical_cap: T,
    /// Direct-cone vertical uncertainty half-angle, radians.
    pub direct_vertical_half_angle: T,
    /// Direct-cone horizontal uncertainty half-angle, radians.
    pub direct_horizontal_half_angle: T,
    /// Forward extent of the direct cone, meters.
    pub max_forward: T,
    /// Height the reflection cone is extended to, meters.
    pub max_height: T,
    /// Intensity threshold for image binarization and extent measurement.
    pub detection_threshold: u8,
    pub membership_frame: MembershipFrame,
    pub classifier: ClassifierConfig<T>,
    pub tracker: TrackerConfig<T>,
    /// Keep per-frame sample clouds and cones for external dumps.
    pub collect_diagnostics: bool,
}

impl<T: Real> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self {
            sample_count: 1000,
            reflection_vertical_cap: crate::scalar::deg_to_rad(T::of(3.0)),
            direct_vertical_half_angle: crate::scalar::deg_to_rad(T::of(4.0)),
            direct_horizontal_half_angle: crate::scalar::deg_to_rad(T::of(4.0)),
            max_forward: T::of(15.0),
            max_height: T::of(2.5),
            detection_threshold: 60,
            membership_frame: MembershipFrame::ConeLocal,
            classifier: ClassifierConfig::default(),
            tracker: TrackerConfig::default(),
            collect_diagnostics: false,
        }
    }
}

/// Measured reflection: centroid pixel plus the extremal pixels of its ellipse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectionObservation<T: Real> {
    pub centroid: Vector2<T>,
    pub vertical_extremum: Vector2<T>,
    pub horizontal_extremum: Vector2<T>,
}

/// One frame's classified measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservation<T: Real> {
    pub t: T,
    pub attitude: ObserverAttitude<T>,
    pub direct_pixel: Option<Vector2<T>>,
    pub reflection: Option<ReflectionObservation<T>>,
}

/// Optional per-frame internals for external visualization.
#[derive(Debug, Clone)]
pub struct FrameDiagnostics<T: Real> {
    pub samples: Vec<Vector3<T>>,
    pub inliers: Vec<Vector3<T>>,
    pub reflection_cone: EllipticalCone<T>,
    pub direct_cone: EllipticalCone<T>,
}

/// Pipeline output for one frame.
#[derive(Debug, Clone)]
pub struct FrameEstimate<T: Real> {
    pub t: T,
    /// Tracker estimate, present once the filter has initialized.
    pub estimate: Option<Vector3<T>>,
    /// Weighted std of the particle cloud per axis.
    pub spread: Vector3<T>,
    /// Inliers that survived the direct-cone test this frame.
    pub inlier_count: usize,
    /// Mean of this frame's inliers (the raw, filter-free observation).
    pub inlier_centroid: Option<Vector3<T>>,
    pub diagnostics: Option<FrameDiagnostics<T>>,
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Tracker(#[from] TrackerError),
    #[error(transparent)]
    Camera(#[from] crate::camera::CameraError),
    #[error(transparent)]
    Cone(#[from] crate::cones::ConeError),
    #[error(transparent)]
    Detection(#[from] crate::detection::DetectionError),
}

pub struct Pipeline<T: Real> {
    config: PipelineConfig<T>,
    calibration: CameraCalibration<T>,
    seed: u64,
    tracker: Tracker<T>,
    history: PersistenceRecord<T>,
    frame_index: u64,
    last_time: Option<T>,
}

impl<T: Real + Send + Sync> Pipeline<T> {
    pub fn new(
        config: PipelineConfig<T>,
        calibration: CameraCalibration<T>,
        seed: u64,
    ) -> Result<Self, PipelineError> {
        let tracker = Tracker::new(config.tracker, seed ^ 0x7261_636b_6572)?;
        Ok(Self {
            config,
            calibration,
            seed,
            tracker,
            history: PersistenceRecord::new(),
            frame_index: 0,
            last_time: None,
        })
    }

    pub fn config(&self) -> &PipelineConfig<T> {
        &self.config
    }

    pub fn calibration(&self) -> &CameraCalibration<T> {
        &self.calibration
    }

    pub fn tracker(&self) -> &Tracker<T> {
        &self.tracker
    }

    /// Classify raw centroids, attach the matching extent measurements, and
    /// process the frame. `extents` pairs centroid indices with the vertical
    /// and horizontal extremal pixels (centroid-mode simulator output).
    pub fn process_centroids(
        &mut self,
        t: T,
        attitude: &ObserverAttitude<T>,
        centroids: &mut [Centroid<T>],
        extents: &[(usize, Vector2<T>, Vector2<T>)],
    ) -> Result<FrameEstimate<T>, PipelineError> {
        classify_centroids(
            centroids,
            &mut self.history,
            &self.calibration,
            attitude,
            &self.config.classifier,
        );
        let observation = self.observation_from_classified(t, attitude, centroids, extents);
        self.process_observation(&observation)
    }

    /// Full image path: extract centroids, classify, measure the reflection's
    /// extent from the image, and process the frame.
    pub fn process_image(
        &mut self,
        t: T,
        attitude: &ObserverAttitude<T>,
        img: &image::GrayImage,
    ) -> Result<(FrameEstimate<T>, Vec<Centroid<T>>), PipelineError> {
        let threshold = self.config.detection_threshold;
        let with_bounds = extract_components::<T>(img, threshold)?;
        let mut centroids: Vec<Centroid<T>> = with_bounds.iter().map(|(c, _)| c.clone()).collect();
        classify_centroids(
            &mut centroids,
            &mut self.history,
            &self.calibration,
            attitude,
            &self.config.classifier,
        );
        let mut extents = Vec::new();
        for (i, c) in centroids.iter().enumerate() {
            if c.class != CentroidClass::Reflection {
                continue;
            }
            let bbox = Rect::scaled(&with_bounds[i].1, 5, img);
            let extent = measure_extent(img, c, threshold, bbox)?;
            extents.push((i, extent.vertical_extremum, extent.horizontal_extremum));
        }
        let observation = self.observation_from_classified(t, attitude, &centroids, &extents);
        let estimate = self.process_observation(&observation)?;
        Ok((estimate, centroids))
    }

    fn observation_from_classified(
        &self,
        t: T,
        attitude: &ObserverAttitude<T>,
        centroids: &[Centroid<T>],
        extents: &[(usize, Vector2<T>, Vector2<T>)],
    ) -> FrameObservation<T> {
        let reflection = centroids
            .iter()
            .enumerate()
            .find(|(_, c)| c.class == CentroidClass::Reflection);
        let direct_pixel = match reflection {
            // prefer the direct centroid the reflection was paired with
            Some((_, r)) => r
                .partner
                .and_then(|d| centroids.get(d))
                .or_else(|| centroids.iter().find(|c| c.class == CentroidClass::Direct))
                .map(|c| c.position),
            None => centroids
                .iter()
                .find(|c| c.class == CentroidClass::Direct)
                .map(|c| c.position),
        };
        let reflection = reflection.map(|(i, c)| {
            let extent = extents.iter().find(|(k, _, _)| *k == i);
            match extent {
                Some((_, pv, ph)) => ReflectionObservation {
                    centroid: c.position,
                    vertical_extremum: *pv,
                    horizontal_extremum: *ph,
                },
                // no extent measured: zero-spread reflection
                None => ReflectionObservation {
                    centroid: c.position,
                    vertical_extremum: c.position,
                    horizontal_extremum: c.position,
                },
            }
        });
        FrameObservation {
            t,
            attitude: *attitude,
            direct_pixel,
            reflection,
        }
    }

    /// Process one classified frame observation.
    ///
    /// The tracker predicts over the elapsed time first; if the frame carries
    /// a usable direct/reflection pair, the cones are intersected and the
    /// inliers fold into the filter. Geometric rejects (grazing bearings,
    /// behind-camera pixels) degrade to prediction-only frames rather than
    /// erroring out.
    pub fn process_observation(
        &mut self,
        obs: &FrameObservation<T>,
    ) -> Result<FrameEstimate<T>, PipelineError> {
        let dt = match self.last_time {
            Some(last) if obs.t > last => obs.t - last,
            _ => T::zero(),
        };
        self.last_time = Some(obs.t);
        self.tracker.predict(dt)?;

        let mut estimate = FrameEstimate {
            t: obs.t,
            estimate: None,
            spread: Vector3::zeros(),
            inlier_count: 0,
            inlier_centroid: None,
            diagnostics: None,
        };

        if let Some(inliers) = self.try_intersect(obs, &mut estimate) {
            estimate.inlier_count = inliers.points.len();
            estimate.inlier_centroid = inliers.centroid();
            self.tracker.update(&inliers)?;
        }

        self.frame_index += 1;
        if let Some(state) = self.tracker.state() {
            estimate.estimate = Some(state.estimate);
            estimate.spread = state.spread;
        }
        Ok(estimate)
    }

    /// Build and intersect the cones for this frame, if the measurements allow.
    fn try_intersect(
        &mut self,
        obs: &FrameObservation<T>,
        out: &mut FrameEstimate<T>,
    ) -> Option<InlierSet<T>> {
        let reflection = obs.reflection.as_ref()?;
        let direct_pixel = obs.direct_pixel?;
        let bearing = |pixel: Vector2<T>| -> Option<Vector3<T>> {
            let b = self.calibration.cam2world(pixel).ok()?;
            Some(compensate_attitude(b, &obs.attitude))
        };
        let direct_bearing = bearing(direct_pixel)?;
        let reflection_bearing = bearing(reflection.centroid)?;
        let vertical_bearing = bearing(reflection.vertical_extremum)?;
        let horizontal_bearing = bearing(reflection.horizontal_extremum)?;

        let height = obs.attitude.height;
        let geometry = ReflectionGeometry::from_bearings(
            reflection_bearing,
            vertical_bearing,
            horizontal_bearing,
            height,
        )
        .ok()?;
        let surface =
            SurfaceGeometry::new(height, self.config.max_height, self.config.max_forward).ok()?;
        let mut reflection_cone = build_reflection_cone(&geometry, &surface).ok()?;
        if reflection_cone.vertical_half_angle > self.config.reflection_vertical_cap {
            reflection_cone = EllipticalCone::new(
                reflection_cone.apex,
                reflection_cone.endpoint,
                self.config.reflection_vertical_cap,
                reflection_cone.horizontal_half_angle,
            )
            .ok()?;
        }
        let direct_cone = build_direct_cone(
            direct_bearing,
            self.config.direct_vertical_half_angle,
            self.config.direct_horizontal_half_angle,
            self.config.max_forward,
        )
        .ok()?;

        let mut sampler_cfg = SamplerConfig::new(
            self.config.sample_count,
            frame_seed(self.seed, self.frame_index),
            (geometry.center - reflection_cone.apex).norm(),
        );
        sampler_cfg.frame = self.config.membership_frame;
        let inliers = intersect(&reflection_cone, &direct_cone, &sampler_cfg, obs.t);

        if self.config.collect_diagnostics {
            out.diagnostics = Some(FrameDiagnostics {
                samples: sample_reflection_cone(&reflection_cone, &sampler_cfg),
                inliers: inliers.points.clone(),
                reflection_cone: reflection_cone.clone(),
                direct_cone: direct_cone.clone(),
            });
        }
        Some(inliers)
    }
}

/// Per-frame sampler seed, decorrelated across frames.
fn frame_seed(seed: u64, frame_index: u64) -> u64 {
    seed.wrapping_add(frame_index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}
