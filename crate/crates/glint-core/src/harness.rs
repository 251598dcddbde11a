//! Experiment front end: named parameter profiles, simulator-driven runs,
//! centroid-log replay, and per-axis error reporting.
//!
//! Everything external is CSV (comma separated, header row, fixed column
//! order, UTF-8, `.` decimal). Floating-point values are written with the
//! shortest round-trip formatting, so replaying an exported log reproduces
//! the original estimates bit for bit.

use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use thiserror::Error;

use crate::camera::ObserverAttitude;
use crate::detection::{Centroid, CentroidClass};
use crate::pipeline::{
    FrameObservation, Pipeline, PipelineConfig, ReflectionObservation,
};
use crate::sampler::{write_point_cloud_csv, MembershipFrame};
use crate::scalar::{deg_to_rad, Real};
use crate::simulator::{render_frame, Frame, RenderMode, SceneConfig};
use crate::tracker::TrackerConfig;

pub const ESTIMATES_CSV_HEADER: &str = "t,x,y,z,spread_x,spread_y,spread_z,n_inliers";
pub const FRAMES_CSV_HEADER: &str = "frame,t,u,v,area,peak,class,pv_u,pv_v,ph_u,ph_v";
pub const ATTITUDE_CSV_HEADER: &str = "t,roll,pitch,height";

/// Replay tolerance for attitude/centroid time alignment, seconds.
pub const TIME_ALIGN_TOLERANCE_S: f64 = 0.010;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) => 3,
        }
    }
}

/// Named parameter sets plus a custom escape hatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Indoor1,
    Indoor2,
    Indoor3,
    Indoor4,
    Outdoor1,
    Outdoor2,
    Outdoor3,
    Custom,
}

impl std::str::FromStr for Profile {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "indoor_1" => Ok(Profile::Indoor1),
            "indoor_2" => Ok(Profile::Indoor2),
            "indoor_3" => Ok(Profile::Indoor3),
            "indoor_4" => Ok(Profile::Indoor4),
            "outdoor_1" => Ok(Profile::Outdoor1),
            "outdoor_2" => Ok(Profile::Outdoor2),
            "outdoor_3" => Ok(Profile::Outdoor3),
            "custom" => Ok(Profile::Custom),
            other => Err(HarnessError::Config(format!(
                "unknown profile '{other}' (expected indoor_1..indoor_4, outdoor_1..outdoor_3, custom)"
            ))),
        }
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Profile::Indoor1 => "indoor_1",
            Profile::Indoor2 => "indoor_2",
            Profile::Indoor3 => "indoor_3",
            Profile::Indoor4 => "indoor_4",
            Profile::Outdoor1 => "outdoor_1",
            Profile::Outdoor2 => "outdoor_2",
            Profile::Outdoor3 => "outdoor_3",
            Profile::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// Tunable experiment parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileParams {
    /// Candidate samples per frame.
    pub sample_count: usize,
    /// Cap on the measured reflection-cone vertical half-angle, degrees.
    pub reflection_cap_deg: f64,
    /// Direct-cone vertical uncertainty half-angle, degrees.
    pub direct_vertical_deg: f64,
    /// Direct-cone horizontal uncertainty half-angle, degrees.
    pub direct_horizontal_deg: f64,
    /// Forward extent of the direct cone, meters.
    pub max_forward_m: f64,
    /// Height the reflection cone is extended to, meters.
    pub max_height_m: f64,
    /// Binarization / extent intensity threshold.
    pub detection_threshold: u8,
    /// Camera exposure, milliseconds (scales simulated blob intensity only).
    pub exposure_ms: f64,
}

/// Built-in parameter sets for the named profiles.
pub fn builtin_profile(profile: Profile) -> Option<ProfileParams> {
    let p = |cap, dv, dh, x_m, z_m, sigma, exposure| ProfileParams {
        sample_count: 1000,
        reflection_cap_deg: cap,
        direct_vertical_deg: dv,
        direct_horizontal_deg: dh,
        max_forward_m: x_m,
        max_height_m: z_m,
        detection_threshold: sigma,
        exposure_ms: exposure,
    };
    match profile {
        Profile::Indoor1 => Some(p(3.0, 4.0, 4.0, 15.0, 2.5, 60, 20.0)),
        Profile::Indoor2 => Some(p(3.0, 4.0, 4.0, 15.0, 2.5, 60, 20.0)),
        Profile::Indoor3 => Some(p(3.0, 4.0, 4.0, 10.0, 2.5, 40, 20.0)),
        Profile::Indoor4 => Some(p(3.0, 4.0, 4.0, 10.0, 2.5, 40, 20.0)),
        Profile::Outdoor1 => Some(p(4.0, 3.0, 3.0, 40.0, 10.0, 40, 3.0)),
        Profile::Outdoor2 => Some(p(4.0, 3.0, 3.0, 30.0, 10.0, 40, 2.0)),
        Profile::Outdoor3 => Some(p(4.0, 3.0, 3.0, 40.0, 10.0, 40, 2.5)),
        Profile::Custom => None,
    }
}

/// One experiment or replay invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub profile: Profile,
    pub params: ProfileParams,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub membership_frame: MembershipFrame,
    /// Dump sampled candidate/inlier point clouds per frame.
    pub dump_clouds: bool,
    /// Dump cone wireframes per frame.
    pub dump_cones: bool,
}

impl RunConfig {
    /// Resolve a named profile.
    pub fn from_profile(profile: Profile, seed: u64, output_dir: PathBuf) -> Result<Self, HarnessError> {
        let params = builtin_profile(profile).ok_or_else(|| {
            HarnessError::Config("the custom profile needs a run-config file with [params]".into())
        })?;
        Ok(Self {
            profile,
            params,
            seed,
            output_dir,
            membership_frame: MembershipFrame::ConeLocal,
            dump_clouds: false,
            dump_cones: false,
        })
    }

    /// Load a run-config TOML file: `profile = "name"`, or
    /// `profile = "custom"` with a full `[params]` table.
    pub fn load(path: &Path, seed: u64, output_dir: PathBuf) -> Result<Self, HarnessError> {
        #[derive(serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        struct RunFile {
            profile: String,
            params: Option<ProfileParams>,
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let file: RunFile = toml::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let profile: Profile = file.profile.parse()?;
        let params = match (profile, file.params) {
            (Profile::Custom, Some(params)) => params,
            (Profile::Custom, None) => {
                return Err(HarnessError::Config(format!(
                    "{}: the custom profile needs a [params] table",
                    path.display()
                )))
            }
            (_, Some(_)) => {
                return Err(HarnessError::Config(format!(
                    "{}: [params] is only allowed with profile = \"custom\" \
                     (named profiles are fixed)",
                    path.display()
                )))
            }
            (_, None) => builtin_profile(profile).expect("named profiles are built in"),
        };
        Ok(Self {
            profile,
            params,
            seed,
            output_dir,
            membership_frame: MembershipFrame::ConeLocal,
            dump_clouds: false,
            dump_cones: false,
        })
    }

    pub fn pipeline_config<T: Real>(&self) -> PipelineConfig<T> {
        PipelineConfig {
            sample_count: self.params.sample_count,
            reflection_vertical_cap: deg_to_rad(T::of(self.params.reflection_cap_deg)),
            direct_vertical_half_angle: deg_to_rad(T::of(self.params.direct_vertical_deg)),
            direct_horizontal_half_angle: deg_to_rad(T::of(self.params.direct_horizontal_deg)),
            max_forward: T::of(self.params.max_forward_m),
            max_height: T::of(self.params.max_height_m),
            detection_threshold: self.params.detection_threshold,
            membership_frame: self.membership_frame,
            classifier: Default::default(),
            tracker: TrackerConfig::default(),
            collect_diagnostics: self.dump_clouds || self.dump_cones,
        }
    }
}

/// Per-axis error statistics between an estimate series and ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport<T: Real> {
    /// Mean absolute error per axis, meters.
    pub mae: Vector3<T>,
    /// Sample standard deviation of the absolute errors per axis, meters.
    pub std: Vector3<T>,
    /// Matched frame count.
    pub sample_count: usize,
    /// Fraction of truth frames with a matched estimate.
    pub availability: T,
}

impl<T: Real> ErrorReport<T> {
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("metric,x,y,z\n");
        s.push_str(&format!("mae,{},{},{}\n", self.mae.x, self.mae.y, self.mae.z));
        s.push_str(&format!("std,{},{},{}\n", self.std.x, self.std.y, self.std.z));
        s.push_str(&format!(
            "sample_count,{0},{0},{0}\n",
            self.sample_count
        ));
        s.push_str(&format!(
            "availability,{0},{0},{0}\n",
            self.availability
        ));
        s
    }
}

impl<T: Real> std::fmt::Display for ErrorReport<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "MAE  [m]: x {:.3} ± {:.3}, y {:.3} ± {:.3}, z {:.3} ± {:.3}",
            self.mae.x.as_f64(),
            self.std.x.as_f64(),
            self.mae.y.as_f64(),
            self.std.y.as_f64(),
            self.mae.z.as_f64(),
            self.std.z.as_f64(),
        )?;
        write!(
            f,
            "frames: {}, availability: {:.1}%",
            self.sample_count,
            self.availability.as_f64() * 100.0
        )
    }
}

/// One row of the estimate stream.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow<T: Real> {
    pub t: T,
    pub position: Vector3<T>,
    pub spread: Vector3<T>,
    pub inliers: usize,
}

/// Everything a simulator run produces.
#[derive(Debug)]
pub struct ExperimentOutput<T: Real> {
    pub report: ErrorReport<T>,
    pub estimates: Vec<EstimateRow<T>>,
    pub truth: Vec<(T, Vector3<T>)>,
}

/// Run the full simulate → detect → cones → intersect → track loop over a
/// scene and write `estimates.csv`, `truth.csv`, `frames.csv`,
/// `attitude.csv`, and `report.csv` into the run's output directory.
pub fn run_experiment<T: Real + Send + Sync>(
    run: &RunConfig,
    scene: &SceneConfig<T>,
) -> Result<ExperimentOutput<T>, HarnessError> {
    let mut scene = scene.clone();
    scene.exposure_ms = T::of(run.params.exposure_ms);
    scene
        .validate()
        .map_err(|e| HarnessError::Config(e.to_string()))?;

    let mut pipeline = Pipeline::new(run.pipeline_config(), scene.camera.clone(), run.seed)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let attitude = ObserverAttitude::level(scene.observer_height)
        .map_err(|e| HarnessError::Config(e.to_string()))?;

    let (start, end) = scene.time_span();
    let dt = T::one() / scene.frame_rate;
    let frame_count = ((end - start) * scene.frame_rate).as_f64().floor() as u64 + 1;

    let mut estimates = Vec::new();
    let mut truth = Vec::new();
    let mut frame_log = String::from(FRAMES_CSV_HEADER);
    frame_log.push('\n');
    let mut attitude_log = String::from(ATTITUDE_CSV_HEADER);
    attitude_log.push('\n');
    let mut cloud_dumps: Vec<(u64, Vec<Vector3<T>>, Vec<Vector3<T>>)> = Vec::new();
    let mut cone_dumps = Vec::new();

    for k in 0..frame_count {
        let t = start + dt * T::of(k as f64);
        let (frame, frame_truth) = render_frame(
            &scene,
            t,
            run.seed,
            RenderMode::Centroids {
                detection_threshold: run.params.detection_threshold,
            },
        )
        .map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut cf = match frame {
            Frame::Centroids(c) => c,
            Frame::Image(_) => unreachable!("centroid mode requested"),
        };
        truth.push((t, frame_truth.transmitter));
        attitude_log.push_str(&format!(
            "{t},{},{},{}\n",
            T::zero(),
            T::zero(),
            scene.observer_height
        ));

        let extents: Vec<(usize, Vector2<T>, Vector2<T>)> = cf
            .extents
            .iter()
            .map(|e| (e.centroid_index, e.vertical_extremum, e.horizontal_extremum))
            .collect();
        let estimate = pipeline
            .process_centroids(t, &attitude, &mut cf.centroids, &extents)
            .map_err(|e| HarnessError::Config(e.to_string()))?;

        append_frame_rows(&mut frame_log, k, t, &cf.centroids, &extents);

        if let Some(position) = estimate.estimate {
            estimates.push(EstimateRow {
                t,
                position,
                spread: estimate.spread,
                inliers: estimate.inlier_count,
            });
        }
        if let Some(diag) = estimate.diagnostics {
            if run.dump_clouds {
                cloud_dumps.push((k, diag.samples, diag.inliers));
            }
            if run.dump_cones {
                cone_dumps.push((k, diag.reflection_cone, diag.direct_cone));
            }
        }
    }

    let report = compute_report(
        &estimates
            .iter()
            .map(|e| (e.t, e.position))
            .collect::<Vec<_>>(),
        &truth,
        dt,
    )
    .unwrap_or(ErrorReport {
        mae: Vector3::zeros(),
        std: Vector3::zeros(),
        sample_count: 0,
        availability: T::zero(),
    });

    let dir = &run.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Config(format!("{}: {e}", dir.display())))?;
    let io_err = |e: std::io::Error| HarnessError::Config(e.to_string());
    std::fs::write(dir.join("estimates.csv"), estimates_csv(&estimates)).map_err(io_err)?;
    let mut truth_csv = Vec::new();
    crate::simulator::write_trajectory_csv(
        &mut truth_csv,
        &truth
            .iter()
            .map(|&(t, position)| crate::simulator::Waypoint { t, position })
            .collect::<Vec<_>>(),
    )
    .map_err(io_err)?;
    std::fs::write(dir.join("truth.csv"), truth_csv).map_err(io_err)?;
    std::fs::write(dir.join("frames.csv"), &frame_log).map_err(io_err)?;
    std::fs::write(dir.join("attitude.csv"), &attitude_log).map_err(io_err)?;
    std::fs::write(dir.join("report.csv"), report.to_csv_string()).map_err(io_err)?;
    scene
        .camera
        .save(&dir.join("camera.cal"))
        .map_err(|e| HarnessError::Config(e.to_string()))?;

    if !cloud_dumps.is_empty() {
        let clouds = dir.join("clouds");
        std::fs::create_dir_all(&clouds).map_err(io_err)?;
        for (k, samples, inliers) in &cloud_dumps {
            for (name, points) in [("samples", samples), ("inliers", inliers)] {
                let mut buf = Vec::new();
                write_point_cloud_csv(&mut buf, points).map_err(io_err)?;
                std::fs::write(clouds.join(format!("frame_{k:05}_{name}.csv")), buf)
                    .map_err(io_err)?;
            }
        }
    }
    if !cone_dumps.is_empty() {
        let cones_dir = dir.join("cones");
        std::fs::create_dir_all(&cones_dir).map_err(io_err)?;
        for (k, reflection, direct) in &cone_dumps {
            let mut buf = Vec::new();
            crate::cones::write_wireframe_csv(
                &mut buf,
                &[("reflection", reflection), ("direct", direct)],
                8,
                32,
            )
            .map_err(io_err)?;
            std::fs::write(cones_dir.join(format!("frame_{k:05}.csv")), buf).map_err(io_err)?;
        }
    }

    Ok(ExperimentOutput {
        report,
        estimates,
        truth,
    })
}

fn append_frame_rows<T: Real>(
    log: &mut String,
    frame: u64,
    t: T,
    centroids: &[Centroid<T>],
    extents: &[(usize, Vector2<T>, Vector2<T>)],
) {
    if centroids.is_empty() {
        // keep empty frames in the log so replay walks the same timeline
        log.push_str(&format!("{frame},{t},,,,,none,,,,\n"));
        return;
    }
    for (i, c) in centroids.iter().enumerate() {
        let extent = extents.iter().find(|(k, _, _)| *k == i);
        match extent {
            Some((_, pv, ph)) => log.push_str(&format!(
                "{frame},{t},{},{},{},{},{},{},{},{},{}\n",
                c.position.x,
                c.position.y,
                c.area,
                c.peak_intensity,
                c.class,
                pv.x,
                pv.y,
                ph.x,
                ph.y
            )),
            None => log.push_str(&format!(
                "{frame},{t},{},{},{},{},{},,,,\n",
                c.position.x, c.position.y, c.area, c.peak_intensity, c.class
            )),
        }
    }
}

fn estimates_csv<T: Real>(rows: &[EstimateRow<T>]) -> String {
    let mut s = String::from(ESTIMATES_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.t,
            r.position.x,
            r.position.y,
            r.position.z,
            r.spread.x,
            r.spread.y,
            r.spread.z,
            r.inliers
        ));
    }
    s
}

/// Render the scene as a portable-graymap image sequence under
/// `<output_dir>/frames/`. Returns the number of frames written.
pub fn export_images<T: Real>(
    run: &RunConfig,
    scene: &SceneConfig<T>,
) -> Result<usize, HarnessError> {
    let mut scene = scene.clone();
    scene.exposure_ms = T::of(run.params.exposure_ms);
    let dir = run.output_dir.join("frames");
    std::fs::create_dir_all(&dir)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", dir.display())))?;
    let (start, end) = scene.time_span();
    let dt = T::one() / scene.frame_rate;
    let frame_count = ((end - start) * scene.frame_rate).as_f64().floor() as u64 + 1;
    for k in 0..frame_count {
        let t = start + dt * T::of(k as f64);
        let (frame, _) = render_frame(&scene, t, run.seed, RenderMode::Image)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let img = frame.as_image().expect("image mode requested");
        img.save(dir.join(format!("frame_{k:05}.pgm")))
            .map_err(|e| HarnessError::Config(e.to_string()))?;
    }
    Ok(frame_count as usize)
}

/// Replay an exported centroid log through the pipeline downstream of
/// detection. Writes `estimates.csv` into the run's output directory.
pub fn replay<T: Real + Send + Sync>(
    log_path: &Path,
    attitude_path: &Path,
    run: &RunConfig,
    camera: &crate::camera::CameraCalibration<T>,
) -> Result<Vec<EstimateRow<T>>, HarnessError> {
    let frames = read_frame_log::<T>(log_path)?;
    let attitude_series = read_attitude_csv::<T>(attitude_path)?;
    let mut pipeline = Pipeline::new(run.pipeline_config(), camera.clone(), run.seed)
        .map_err(|e| HarnessError::Config(e.to_string()))?;

    let mut estimates = Vec::new();
    let mut last_t: Option<T> = None;
    for frame in &frames {
        if let Some(last) = last_t {
            if frame.t <= last {
                return Err(HarnessError::Data(format!(
                    "{}: non-monotonic timestamps ({} after {})",
                    log_path.display(),
                    frame.t,
                    last
                )));
            }
        }
        last_t = Some(frame.t);
        let attitude = interpolate_attitude(&attitude_series, frame.t, attitude_path)?;
        let direct_pixel = frame
            .rows
            .iter()
            .find(|r| r.class == CentroidClass::Direct)
            .map(|r| r.pixel);
        let reflection = frame
            .rows
            .iter()
            .find(|r| r.class == CentroidClass::Reflection)
            .map(|r| ReflectionObservation {
                centroid: r.pixel,
                vertical_extremum: r.vertical_extremum.unwrap_or(r.pixel),
                horizontal_extremum: r.horizontal_extremum.unwrap_or(r.pixel),
            });
        let obs = FrameObservation {
            t: frame.t,
            attitude,
            direct_pixel,
            reflection,
        };
        let estimate = pipeline
            .process_observation(&obs)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(position) = estimate.estimate {
            estimates.push(EstimateRow {
                t: frame.t,
                position,
                spread: estimate.spread,
                inliers: estimate.inlier_count,
            });
        }
    }

    std::fs::create_dir_all(&run.output_dir)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", run.output_dir.display())))?;
    std::fs::write(run.output_dir.join("estimates.csv"), estimates_csv(&estimates))
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(estimates)
}

struct LogRow<T: Real> {
    class: CentroidClass,
    pixel: Vector2<T>,
    vertical_extremum: Option<Vector2<T>>,
    horizontal_extremum: Option<Vector2<T>>,
}

struct LogFrame<T: Real> {
    t: T,
    rows: Vec<LogRow<T>>,
}

fn read_frame_log<T: Real>(path: &Path) -> Result<Vec<LogFrame<T>>, HarnessError> {
    let mut reader = csv_reader(path)?;
    let mut frames: Vec<(u64, LogFrame<T>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, &e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let data_err = |msg: String| {
            HarnessError::Data(format!("{}:{line}: {msg}", path.display()))
        };
        let get = |k: usize| record.get(k).unwrap_or("").trim();
        let frame_no: u64 = get(0)
            .parse()
            .map_err(|_| data_err(format!("bad frame index '{}'", get(0))))?;
        let t: T = get(1)
            .parse()
            .map_err(|_| data_err(format!("bad timestamp '{}'", get(1))))?;
        let class_field = get(6);
        if frames.last().map(|(n, _)| *n) != Some(frame_no) {
            frames.push((frame_no, LogFrame { t, rows: Vec::new() }));
        }
        if class_field == "none" || class_field.is_empty() {
            continue; // frame marker without centroids
        }
        let class: CentroidClass = class_field
            .parse()
            .map_err(|e: String| data_err(e))?;
        let num = |k: usize| -> Result<T, HarnessError> {
            get(k)
                .parse()
                .map_err(|_| data_err(format!("bad number '{}' in column {k}", get(k))))
        };
        let pixel = Vector2::new(num(2)?, num(3)?);
        let opt_pair = |a: usize, b: usize| -> Result<Option<Vector2<T>>, HarnessError> {
            if get(a).is_empty() || get(b).is_empty() {
                Ok(None)
            } else {
                Ok(Some(Vector2::new(num(a)?, num(b)?)))
            }
        };
        frames
            .last_mut()
            .expect("frame pushed above")
            .1
            .rows
            .push(LogRow {
                class,
                pixel,
                vertical_extremum: opt_pair(7, 8)?,
                horizontal_extremum: opt_pair(9, 10)?,
            });
    }
    Ok(frames.into_iter().map(|(_, f)| f).collect())
}

struct AttitudeSample<T: Real> {
    t: T,
    roll: T,
    pitch: T,
    height: T,
}

fn read_attitude_csv<T: Real>(path: &Path) -> Result<Vec<AttitudeSample<T>>, HarnessError> {
    let mut reader = csv_reader(path)?;
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, &e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let num = |k: usize| -> Result<T, HarnessError> {
            record
                .get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| {
                    HarnessError::Data(format!(
                        "{}:{line}: bad number in column {k}",
                        path.display()
                    ))
                })
        };
        samples.push(AttitudeSample {
            t: num(0)?,
            roll: num(1)?,
            pitch: num(2)?,
            height: num(3)?,
        });
    }
    if samples.is_empty() {
        return Err(HarnessError::Data(format!(
            "{}: attitude file has no samples",
            path.display()
        )));
    }
    Ok(samples)
}

/// Attitude at time `t`: linear interpolation between samples; queries up to
/// [`TIME_ALIGN_TOLERANCE_S`] outside the span clamp to the nearest sample.
fn interpolate_attitude<T: Real>(
    samples: &[AttitudeSample<T>],
    t: T,
    path: &Path,
) -> Result<ObserverAttitude<T>, HarnessError> {
    let tol = T::of(TIME_ALIGN_TOLERANCE_S);
    let first = samples.first().expect("nonempty");
    let last = samples.last().expect("nonempty");
    if t < first.t - tol || t > last.t + tol {
        return Err(HarnessError::Data(format!(
            "{}: no attitude sample within {TIME_ALIGN_TOLERANCE_S} s of t={t}",
            path.display()
        )));
    }
    let make = |roll: T, pitch: T, height: T| {
        ObserverAttitude::new(roll, pitch, height)
            .map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
    };
    if t <= first.t {
        return make(first.roll, first.pitch, first.height);
    }
    if t >= last.t {
        return make(last.roll, last.pitch, last.height);
    }
    let idx = samples
        .windows(2)
        .position(|w| t <= w[1].t)
        .expect("t within span");
    let (a, b) = (&samples[idx], &samples[idx + 1]);
    let alpha = (t - a.t) / (b.t - a.t);
    make(
        a.roll + (b.roll - a.roll) * alpha,
        a.pitch + (b.pitch - a.pitch) * alpha,
        a.height + (b.height - a.height) * alpha,
    )
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, HarnessError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}

fn csv_error(path: &Path, e: &csv::Error) -> HarnessError {
    let line = match e.position() {
        Some(p) => format!(":{}", p.line()),
        None => String::new(),
    };
    HarnessError::Data(format!("{}{line}: {e}", path.display()))
}

/// Read the first four columns `(t, x, y, z)` of a CSV series.
pub fn read_series<T: Real>(path: &Path) -> Result<Vec<(T, Vector3<T>)>, HarnessError> {
    let mut reader = csv_reader(path)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, &e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let num = |k: usize| -> Result<T, HarnessError> {
            record
                .get(k)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| {
                    HarnessError::Data(format!(
                        "{}:{line}: bad number in column {k}",
                        path.display()
                    ))
                })
        };
        rows.push((num(0)?, Vector3::new(num(1)?, num(2)?, num(3)?)));
    }
    Ok(rows)
}

/// Compare two `(t, x, y, z)` CSV files.
pub fn report_from_files<T: Real>(
    estimates_path: &Path,
    truth_path: &Path,
) -> Result<ErrorReport<T>, HarnessError> {
    let estimates = read_series::<T>(estimates_path)?;
    let truth = read_series::<T>(truth_path)?;
    let period = median_period(&truth).or_else(|| median_period(&estimates));
    let period = period.unwrap_or_else(|| T::of(1.0 / 60.0));
    compute_report(&estimates, &truth, period)
}

fn median_period<T: Real>(series: &[(T, Vector3<T>)]) -> Option<T> {
    let mut diffs: Vec<T> = series
        .windows(2)
        .map(|w| w[1].0 - w[0].0)
        .filter(|d| *d > T::zero())
        .collect();
    if diffs.is_empty() {
        return None;
    }
    diffs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Some(diffs[diffs.len() / 2])
}

/// Per-axis MAE and absolute-error std over nearest-neighbor timestamp pairs
/// (matched within one frame period).
pub fn compute_report<T: Real>(
    estimates: &[(T, Vector3<T>)],
    truth: &[(T, Vector3<T>)],
    frame_period: T,
) -> Result<ErrorReport<T>, HarnessError> {
    if truth.is_empty() {
        return Err(HarnessError::Data("truth series is empty".into()));
    }
    let mut abs_errors: Vec<Vector3<T>> = Vec::new();
    for &(t, estimate) in estimates {
        let nearest = truth
            .iter()
            .min_by(|a, b| {
                let da = (a.0 - t).abs();
                let db = (b.0 - t).abs();
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("truth nonempty");
        if (nearest.0 - t).abs() <= frame_period {
            abs_errors.push((estimate - nearest.1).map(|e| e.abs()));
        }
    }
    if abs_errors.is_empty() {
        return Err(HarnessError::Data(
            "no overlapping timestamps between estimates and truth".into(),
        ));
    }
    let n = T::of(abs_errors.len() as f64);
    let mean = abs_errors
        .iter()
        .fold(Vector3::zeros(), |acc, e| acc + e)
        / n;
    let std = if abs_errors.len() > 1 {
        let var = abs_errors.iter().fold(Vector3::zeros(), |acc, e| {
            let d = e - mean;
            acc + d.component_mul(&d)
        }) / (n - T::one());
        var.map(|v| v.sqrt())
    } else {
        Vector3::zeros()
    };
    Ok(ErrorReport {
        mae: mean,
        std,
        sample_count: abs_errors.len(),
        availability: T::of(abs_errors.len() as f64) / T::of(truth.len() as f64),
    })
}
