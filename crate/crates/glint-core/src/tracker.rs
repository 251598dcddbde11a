//! Constant-velocity particle filter over per-frame inlier sets.
//!
//! Particles carry position and velocity; prediction adds process noise
//! scaled by sqrt(dt), the update reweights with a robust Cauchy kernel
//! against the observation, and systematic resampling keeps the effective
//! sample size healthy. One tracker instance owns one target's state.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::sampler::InlierSet;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("cannot initialize from an empty observation")]
    EmptyObservation,
    #[error("negative time step {0}")]
    NegativeTimeStep(f64),
    #[error("invalid tracker configuration: {0}")]
    InvalidConfig(String),
}

/// How an inlier set enters the weight update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObservationMode {
    /// Distance to the inlier centroid; one kernel evaluation per particle.
    #[default]
    Centroid,
    /// Product of kernels over every inlier point (evaluated in log space).
    PerPoint,
}

#[derive(Debug, Clone, Copy)]
pub struct TrackerConfig<T: Real> {
    pub particle_count: usize,
    /// Position process noise, meters per sqrt-second.
    pub process_noise_pos: T,
    /// Velocity process noise, (m/s) per sqrt-second.
    pub process_noise_vel: T,
    /// Cauchy kernel scale, meters.
    pub cauchy_scale: T,
    /// Resample when ESS drops below this fraction of the particle count.
    pub resample_ess_fraction: T,
    /// Hard speed clamp, m/s.
    pub max_speed: T,
    pub observation_mode: ObservationMode,
}

impl<T: Real> Default for TrackerConfig<T> {
    fn default() -> Self {
        Self {
            particle_count: 500,
            process_noise_pos: T::of(0.5),
            process_noise_vel: T::of(1.0),
            cauchy_scale: T::of(1.0),
            resample_ess_fraction: T::of(0.5),
            max_speed: T::of(10.0),
            observation_mode: ObservationMode::Centroid,
        }
    }
}

impl<T: Real> TrackerConfig<T> {
    fn validate(&self) -> Result<(), TrackerError> {
        if self.particle_count == 0 {
            return Err(TrackerError::InvalidConfig("particle_count must be positive".into()));
        }
        for (v, name) in [
            (self.process_noise_pos, "process_noise_pos"),
            (self.process_noise_vel, "process_noise_vel"),
            (self.cauchy_scale, "cauchy_scale"),
            (self.max_speed, "max_speed"),
        ] {
            if v <= T::zero() || !v.finite() {
                return Err(TrackerError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.resample_ess_fraction <= T::zero() || self.resample_ess_fraction > T::one() {
            return Err(TrackerError::InvalidConfig(
                "resample_ess_fraction must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle<T: Real> {
    pub position: Vector3<T>,
    pub velocity: Vector3<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState<T: Real> {
    pub particles: Vec<Particle<T>>,
    /// Normalized weights; they sum to one after every update.
    pub weights: Vec<T>,
    /// Weighted mean position.
    pub estimate: Vector3<T>,
    /// Weighted standard deviation per axis.
    pub spread: Vector3<T>,
    /// Time of the last prediction or observation, seconds.
    pub last_update: T,
}

impl<T: Real> TrackState<T> {
    fn refresh_estimate(&mut self) {
        let mut mean = Vector3::zeros();
        for (p, &w) in self.particles.iter().zip(&self.weights) {
            mean += p.position * w;
        }
        let mut var = Vector3::zeros();
        for (p, &w) in self.particles.iter().zip(&self.weights) {
            let d = p.position - mean;
            var += d.component_mul(&d) * w;
        }
        self.estimate = mean;
        self.spread = var.map(|v| v.sqrt());
    }
}

/// Particle filter tracking a single transmitter.
#[derive(Debug, Clone)]
pub struct Tracker<T: Real> {
    config: TrackerConfig<T>,
    state: Option<TrackState<T>>,
    rng: ChaCha8Rng,
    /// Number of weight-underflow reinitializations, for diagnostics.
    pub reinit_count: u32,
}

impl<T: Real> Tracker<T> {
    pub fn new(config: TrackerConfig<T>, seed: u64) -> Result<Self, TrackerError> {
        config.validate()?;
        Ok(Self {
            config,
            state: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            reinit_count: 0,
        })
    }

    pub fn config(&self) -> &TrackerConfig<T> {
        &self.config
    }

    pub fn state(&self) -> Option<&TrackState<T>> {
        self.state.as_ref()
    }

    pub fn is_initialized(&self) -> bool {
        self.state.is_some()
    }

    /// Current estimate, if the filter has been initialized.
    pub fn estimate(&self) -> Option<Vector3<T>> {
        self.state.as_ref().map(|s| s.estimate)
    }

    /// Seed the particle cloud from an observation: positions drawn from the
    /// inlier points with position-noise jitter, zero velocities, uniform
    /// weights.
    pub fn init(&mut self, obs: &InlierSet<T>) -> Result<(), TrackerError> {
        if obs.points.is_empty() {
            return Err(TrackerError::EmptyObservation);
        }
        let n = self.config.particle_count;
        let jitter = self.config.process_noise_pos;
        let mut particles = Vec::with_capacity(n);
        for _ in 0..n {
            let base = obs.points[self.rng.gen_range(0..obs.points.len())];
            let noise = Vector3::new(
                T::standard_normal(&mut self.rng),
                T::standard_normal(&mut self.rng),
                T::standard_normal(&mut self.rng),
            ) * jitter;
            particles.push(Particle {
                position: base + noise,
                velocity: Vector3::zeros(),
            });
        }
        let mut state = TrackState {
            particles,
            weights: vec![T::one() / T::of(n as f64); n],
            estimate: Vector3::zeros(),
            spread: Vector3::zeros(),
            last_update: obs.timestamp,
        };
        state.refresh_estimate();
        self.state = Some(state);
        Ok(())
    }

    /// Constant-velocity propagation over `dt` seconds with process noise.
    /// A zero `dt` leaves the state unchanged.
    pub fn predict(&mut self, dt: T) -> Result<(), TrackerError> {
        if dt < T::zero() {
            return Err(TrackerError::NegativeTimeStep(dt.as_f64()));
        }
        let Some(state) = self.state.as_mut() else {
            return Ok(());
        };
        let sqrt_dt = dt.sqrt();
        let pos_noise = self.config.process_noise_pos * sqrt_dt;
        let vel_noise = self.config.process_noise_vel * sqrt_dt;
        let max_speed = self.config.max_speed;
        for p in &mut state.particles {
            let noise_p = Vector3::new(
                T::standard_normal(&mut self.rng),
                T::standard_normal(&mut self.rng),
                T::standard_normal(&mut self.rng),
            ) * pos_noise;
            let noise_v = Vector3::new(
                T::standard_normal(&mut self.rng),
                T::standard_normal(&mut self.rng),
                T::standard_normal(&mut self.rng),
            ) * vel_noise;
            p.position += p.velocity * dt + noise_p;
            p.velocity += noise_v;
            let speed = p.velocity.norm();
            if speed > max_speed {
                p.velocity *= max_speed / speed;
            }
        }
        state.last_update += dt;
        state.refresh_estimate();
        Ok(())
    }

    /// Reweight the particles against an observation, resample if the
    /// effective sample size collapsed, and refresh the estimate.
    ///
    /// An empty observation leaves the weights untouched (pure prediction
    /// step). If every weight underflows, the filter reinitializes from the
    /// observation.
    pub fn update(&mut self, obs: &InlierSet<T>) -> Result<(), TrackerError> {
        if self.state.is_none() {
            if obs.points.is_empty() {
                return Ok(());
            }
            return self.init(obs);
        }
        if obs.points.is_empty() {
            let state = self.state.as_mut().expect("checked above");
            state.refresh_estimate();
            return Ok(());
        }

        let mode = self.config.observation_mode;
        let scale = self.config.cauchy_scale;
        let state = self.state.as_mut().expect("checked above");
        match mode {
            ObservationMode::Centroid => {
                let centroid = obs.centroid().expect("nonempty observation");
                for (p, w) in state.particles.iter().zip(state.weights.iter_mut()) {
                    *w *= cauchy_kernel((p.position - centroid).norm(), scale);
                }
            }
            ObservationMode::PerPoint => {
                // products of many sub-unity kernels underflow quickly, so the
                // accumulation runs in log space with a max shift
                let mut log_weights: Vec<T> = state
                    .weights
                    .iter()
                    .zip(&state.particles)
                    .map(|(&w, p)| {
                        let mut lw = w.max(T::of(1e-300)).ln();
                        for point in &obs.points {
                            lw += cauchy_kernel((p.position - point).norm(), scale).ln();
                        }
                        lw
                    })
                    .collect();
                let max_lw = log_weights
                    .iter()
                    .copied()
                    .fold(T::of(f64::NEG_INFINITY), |a, b| a.max(b));
                for lw in &mut log_weights {
                    *lw = (*lw - max_lw).exp();
                }
                state.weights = log_weights;
            }
        }

        let sum: T = state.weights.iter().copied().fold(T::zero(), |a, b| a + b);
        if sum <= T::zero() || !sum.finite() {
            // all weights underflowed: the cloud lost the target
            log::warn!("tracker weights underflowed; reinitializing from observation");
            self.reinit_count += 1;
            self.state = None;
            return self.init(obs);
        }
        for w in &mut state.weights {
            *w /= sum;
        }

        let n = T::of(state.particles.len() as f64);
        let ess = T::one()
            / state
                .weights
                .iter()
                .map(|&w| w * w)
                .fold(T::zero(), |a, b| a + b);
        if ess < self.config.resample_ess_fraction * n {
            systematic_resample(state, &mut self.rng);
        }
        state.last_update = obs.timestamp;
        state.refresh_estimate();
        Ok(())
    }

    /// Convenience: predict over `dt`, then fold in the observation if present.
    pub fn step(&mut self, dt: T, obs: Option<&InlierSet<T>>) -> Result<(), TrackerError> {
        self.predict(dt)?;
        if let Some(obs) = obs {
            self.update(obs)?;
        }
        Ok(())
    }
}

/// Robust Cauchy kernel `1 / (1 + (d/c)^2)`.
fn cauchy_kernel<T: Real>(distance: T, scale: T) -> T {
    let r = distance / scale;
    T::one() / (T::one() + r * r)
}

/// Low-variance systematic resampling; weights become uniform afterwards.
fn systematic_resample<T: Real>(state: &mut TrackState<T>, rng: &mut ChaCha8Rng) {
    let n = state.particles.len();
    let step = T::one() / T::of(n as f64);
    let start = T::uniform_01(rng) * step;
    let mut resampled = Vec::with_capacity(n);
    let mut cumulative = state.weights[0];
    let mut idx = 0usize;
    for k in 0..n {
        let target = start + step * T::of(k as f64);
        while idx + 1 < n && cumulative < target {
            idx += 1;
            cumulative += state.weights[idx];
        }
        resampled.push(state.particles[idx]);
    }
    state.particles = resampled;
    state.weights.fill(step);
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn obs(points: Vec<Vector3<f64>>, t: f64) -> InlierSet<f64> {
        let total = points.len();
        InlierSet {
            points,
            total_sampled: total,
            timestamp: t,
        }
    }

    fn quiet_config() -> TrackerConfig<f64> {
        TrackerConfig {
            process_noise_pos: 1e-9,
            process_noise_vel: 1e-9,
            ..TrackerConfig::default()
        }
    }

    #[test]
    fn init_from_single_point() {
        let mut tracker = Tracker::new(quiet_config(), 1).unwrap();
        let target = Vector3::new(4.0, 0.0, 1.0);
        tracker.init(&obs(vec![target], 0.0)).unwrap();
        let state = tracker.state().unwrap();
        assert!((state.estimate - target).norm() < 1e-6);
        for &w in &state.weights {
            assert_relative_eq!(w, 1.0 / 500.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn init_estimate_matches_direct_recomputation() {
        let mut tracker = Tracker::new(TrackerConfig::default(), 2).unwrap();
        let points = vec![
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::new(2.0, 1.0, 0.0),
            Vector3::new(3.0, -1.0, 1.0),
        ];
        tracker.init(&obs(points, 0.0)).unwrap();
        let state = tracker.state().unwrap();
        let mut recomputed = Vector3::zeros();
        for (p, &w) in state.particles.iter().zip(&state.weights) {
            recomputed += p.position * w;
        }
        assert!((state.estimate - recomputed).norm() < 1e-12);
    }

    #[test]
    fn init_rejects_empty_observation() {
        let mut tracker = Tracker::<f64>::new(TrackerConfig::default(), 3).unwrap();
        assert!(matches!(
            tracker.init(&obs(vec![], 0.0)),
            Err(TrackerError::EmptyObservation)
        ));
    }

    #[test]
    fn predict_zero_dt_is_identity() {
        let mut tracker = Tracker::new(quiet_config(), 4).unwrap();
        tracker.init(&obs(vec![Vector3::new(1.0, 1.0, 1.0)], 0.0)).unwrap();
        let before = tracker.state().unwrap().clone();
        tracker.predict(0.0).unwrap();
        let after = tracker.state().unwrap();
        for (a, b) in before.particles.iter().zip(&after.particles) {
            assert_eq!(a.position, b.position);
            assert_eq!(a.velocity, b.velocity);
        }
    }

    #[test]
    fn predict_moves_along_velocity() {
        let mut tracker = Tracker::new(quiet_config(), 5).unwrap();
        tracker.init(&obs(vec![Vector3::zeros()], 0.0)).unwrap();
        {
            let state = tracker.state.as_mut().unwrap();
            for p in &mut state.particles {
                p.velocity = Vector3::new(1.0, 0.0, 0.0);
            }
        }
        tracker.predict(2.0).unwrap();
        let state = tracker.state().unwrap();
        for p in &state.particles {
            assert!((p.position.x - 2.0).abs() < 1e-6, "x = {}", p.position.x);
        }
        assert_relative_eq!(state.last_update, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn predict_rejects_negative_dt() {
        let mut tracker = Tracker::<f64>::new(TrackerConfig::default(), 6).unwrap();
        assert!(matches!(
            tracker.predict(-0.1),
            Err(TrackerError::NegativeTimeStep(_))
        ));
    }

    #[test]
    fn ensemble_displacement_matches_velocity_times_dt() {
        let config = TrackerConfig {
            particle_count: 10_000,
            process_noise_pos: 0.3,
            process_noise_vel: 1e-9,
            ..TrackerConfig::default()
        };
        let mut tracker = Tracker::new(config, 7).unwrap();
        tracker.init(&obs(vec![Vector3::zeros()], 0.0)).unwrap();
        let v = Vector3::new(0.7, -0.4, 0.2);
        {
            let state = tracker.state.as_mut().unwrap();
            for p in &mut state.particles {
                p.velocity = v;
            }
        }
        let dt = 1.5;
        tracker.predict(dt).unwrap();
        let state = tracker.state().unwrap();
        let mean: Vector3<f64> = state
            .particles
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.position)
            / state.particles.len() as f64;
        // standard error of the mean of N(v*dt, (noise*sqrt(dt))^2) per axis
        let se = 0.3 * dt.sqrt() / (10_000f64).sqrt();
        for axis in 0..3 {
            let delta = (mean[axis] - v[axis] * dt).abs();
            assert!(delta < 3.0 * se + 1e-6, "axis {axis}: delta {delta} vs se {se}");
        }
    }

    #[test]
    fn zero_distance_update_keeps_weights_uniform() {
        let mut tracker = Tracker::new(quiet_config(), 8).unwrap();
        let target = Vector3::new(2.0, 2.0, 2.0);
        tracker.init(&obs(vec![target], 0.0)).unwrap();
        // all particles sit (almost) exactly at the observation centroid
        tracker.update(&obs(vec![target], 0.1)).unwrap();
        let state = tracker.state().unwrap();
        for &w in &state.weights {
            assert_relative_eq!(w, 1.0 / 500.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn kernel_halves_at_scale_distance() {
        assert_relative_eq!(cauchy_kernel(0.0, 1.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(cauchy_kernel(1.0, 1.0), 0.5, epsilon = 1e-15);
        // two particles at distances 0 and c: unnormalized ratio 1 : 0.5
        let w0 = cauchy_kernel(0.0, 0.7);
        let w1 = cauchy_kernel(0.7, 0.7);
        assert_relative_eq!(w0 / w1, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn kernel_monotone_decreasing_in_distance() {
        let mut last = f64::INFINITY;
        for i in 0..100 {
            let w = cauchy_kernel(i as f64 * 0.1, 1.0);
            assert!(w < last);
            last = w;
        }
    }

    #[test]
    fn weights_normalized_after_every_update() {
        let mut tracker = Tracker::new(TrackerConfig::default(), 9).unwrap();
        tracker
            .init(&obs(vec![Vector3::new(5.0, 0.0, 1.0)], 0.0))
            .unwrap();
        for k in 1..50 {
            let t = k as f64 / 10.0;
            tracker.predict(0.1).unwrap();
            tracker
                .update(&obs(
                    vec![Vector3::new(5.0 + 0.01 * k as f64, 0.0, 1.0)],
                    t,
                ))
                .unwrap();
            let sum: f64 = tracker.state().unwrap().weights.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-9, "weight sum {sum}");
        }
    }

    #[test]
    fn estimate_stays_inside_particle_bounding_box() {
        let mut tracker = Tracker::new(TrackerConfig::default(), 10).unwrap();
        tracker
            .init(&obs(
                vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(2.0, 0.0, 2.5)],
                0.0,
            ))
            .unwrap();
        for k in 1..30 {
            tracker.predict(0.05).unwrap();
            tracker
                .update(&obs(vec![Vector3::new(1.5, 1.0, 2.7)], k as f64 * 0.05))
                .unwrap();
            let state = tracker.state().unwrap();
            for axis in 0..3 {
                let lo = state
                    .particles
                    .iter()
                    .map(|p| p.position[axis])
                    .fold(f64::INFINITY, f64::min);
                let hi = state
                    .particles
                    .iter()
                    .map(|p| p.position[axis])
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(state.estimate[axis] >= lo - 1e-12 && state.estimate[axis] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn fixed_seed_reproduces_trajectory() {
        let run = |seed| {
            let mut tracker = Tracker::new(TrackerConfig::default(), seed).unwrap();
            let mut estimates = Vec::new();
            tracker.init(&obs(vec![Vector3::new(3.0, 1.0, 1.0)], 0.0)).unwrap();
            for k in 1..100 {
                let t = k as f64 * 0.1;
                tracker.predict(0.1).unwrap();
                tracker
                    .update(&obs(vec![Vector3::new(3.0, 1.0 - 0.01 * k as f64, 1.0)], t))
                    .unwrap();
                estimates.push(tracker.estimate().unwrap());
            }
            estimates
        };
        assert_eq!(run(77), run(77));
        assert_ne!(run(77), run(78));
    }

    #[test]
    fn weight_scaling_invariance() {
        // scaling all unnormalized weights by a positive constant must leave
        // the normalized weights, resampled particles, and estimate unchanged
        let mut state_a = TrackState {
            particles: (0..8)
                .map(|i| Particle {
                    position: Vector3::new(i as f64, 0.0, 0.0),
                    velocity: Vector3::zeros(),
                })
                .collect(),
            weights: vec![0.1, 0.2, 0.05, 0.15, 0.1, 0.1, 0.2, 0.1],
            estimate: Vector3::zeros(),
            spread: Vector3::zeros(),
            last_update: 0.0,
        };
        let mut state_b = state_a.clone();
        for w in &mut state_b.weights {
            *w *= 1234.5;
        }
        for state in [&mut state_a, &mut state_b] {
            let sum: f64 = state.weights.iter().sum();
            for w in &mut state.weights {
                *w /= sum;
            }
        }
        let mut rng_a = ChaCha8Rng::seed_from_u64(55);
        let mut rng_b = ChaCha8Rng::seed_from_u64(55);
        systematic_resample(&mut state_a, &mut rng_a);
        systematic_resample(&mut state_b, &mut rng_b);
        state_a.refresh_estimate();
        state_b.refresh_estimate();
        assert_eq!(state_a.particles, state_b.particles);
        assert_eq!(state_a.estimate, state_b.estimate);
    }

    #[test]
    fn empty_observation_is_pure_prediction() {
        let mut tracker = Tracker::new(TrackerConfig::default(), 12).unwrap();
        tracker.init(&obs(vec![Vector3::new(1.0, 0.0, 0.0)], 0.0)).unwrap();
        let weights_before = tracker.state().unwrap().weights.clone();
        tracker.update(&obs(vec![], 0.1)).unwrap();
        assert_eq!(tracker.state().unwrap().weights, weights_before);
    }

    #[test]
    fn per_point_mode_tracks_like_centroid_mode() {
        let points = vec![
            Vector3::new(4.0, 0.1, 1.0),
            Vector3::new(4.1, -0.1, 1.1),
            Vector3::new(3.9, 0.0, 0.9),
        ];
        let mut centroid_mode = Tracker::new(quiet_config(), 13).unwrap();
        let mut per_point = Tracker::new(
            TrackerConfig {
                observation_mode: ObservationMode::PerPoint,
                ..quiet_config()
            },
            13,
        )
        .unwrap();
        for tracker in [&mut centroid_mode, &mut per_point] {
            tracker.init(&obs(points.clone(), 0.0)).unwrap();
            for k in 1..20 {
                tracker.predict(0.05).unwrap();
                tracker.update(&obs(points.clone(), k as f64 * 0.05)).unwrap();
            }
        }
        let a = centroid_mode.estimate().unwrap();
        let b = per_point.estimate().unwrap();
        assert!((a - b).norm() < 0.2, "estimates diverged: {a:?} vs {b:?}");
    }

    #[test]
    fn config_validation() {
        assert!(Tracker::<f64>::new(
            TrackerConfig {
                particle_count: 0,
                ..TrackerConfig::default()
            },
            0
        )
        .is_err());
        assert!(Tracker::<f64>::new(
            TrackerConfig {
                resample_ess_fraction: 0.0,
                ..TrackerConfig::default()
            },
            0
        )
        .is_err());
        assert!(Tracker::<f64>::new(
            TrackerConfig {
                cauchy_scale: -1.0,
                ..TrackerConfig::default()
            },
            0
        )
        .is_err());
    }
}
