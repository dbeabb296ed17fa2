//! Seeded synthetic scenes with exact ground truth.
//!
//! All randomness comes from ChaCha8 ([`rand_chacha::ChaCha8Rng`]), a
//! portable generator whose output is identical on every platform. Each
//! noise source draws from its own stream of the configured seed, so
//! disabling one source never shifts the draws of another.
//!
//! * [`synth_camera_scene`]: world/pixel correspondences for calibration.
//! * [`synth_road`]: a straight road along world `x` with profilometer,
//!   scanner, GPS and odometer/IMU streams plus per-segment ground truth.
//! * [`synth_surface_patch`]: dense point patches for the detectors.
//! * [`synth_fleet`]: several systems' metric series with calibrated noise.
//! * [`iri_oracle`]: an independent quarter-car integrator.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::calibration::{Correspondence, DistortedCamera, ProjectionMatrix};
use crate::camera::{CameraIntrinsics, PixelPoint, RadialDistortion, RigidExtrinsics, WorldPoint};
use crate::detection::{EdgeSide, SurfaceGrid};
use crate::error::{Error, Result};
use crate::georef::{pose_to_transform, GpsFix, OdoImuSample, Pose, ScanPoint, SensorMount, Trajectory};
use crate::harmonization::{MetricKind, RunSeries};
use crate::metrics::{
    iri_initial_slope, iri_input, IriTrace, Profile, DEFAULT_BASE_LENGTH, DEFAULT_SEGMENT_LENGTH,
};

/// Name of the random generator, for reports.
pub const RNG_ALGORITHM: &str = "ChaCha8";

/// Generator for stream `stream` of `seed`.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sigma * z
}

// Stream ids; one per independent noise source.
const STREAM_WORLD: u64 = 1;
const STREAM_PIXEL: u64 = 2;
const STREAM_PROFILE: u64 = 3;
const STREAM_SCAN: u64 = 4;
const STREAM_INTENSITY: u64 = 5;
const STREAM_GPS: u64 = 6;
const STREAM_ODOMETER: u64 = 7;
const STREAM_GYRO: u64 = 8;
const STREAM_JITTER: u64 = 9;
const STREAM_FLEET: u64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub seed: u64,
    pub points: usize,
    /// Opposite corners of the world-point box, in the LiDAR frame.
    pub bounds: (WorldPoint, WorldPoint),
    pub intrinsics: CameraIntrinsics,
    pub distortion: RadialDistortion,
    /// LiDAR → camera transform.
    pub extrinsics: RigidExtrinsics,
    /// Standard deviation of the pixel noise.
    pub pixel_sigma: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        #[rustfmt::skip]
        let lidar_to_camera = Matrix3::new(
            0.0, -1.0, 0.0,
            0.0, 0.0, -1.0,
            1.0, 0.0, 0.0,
        );
        Self {
            seed: 0,
            points: 20,
            bounds: (Point3::new(4.0, -3.0, -1.5), Point3::new(10.0, 3.0, 1.5)),
            intrinsics: CameraIntrinsics::new(800.0, 800.0, 640.0, 360.0).expect("valid default intrinsics"),
            distortion: RadialDistortion::NONE,
            extrinsics: RigidExtrinsics::new(lidar_to_camera, Vector3::new(0.1, -0.2, 0.05))
                .expect("default rotation is orthonormal"),
            pixel_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraScene {
    pub correspondences: Vec<Correspondence>,
    /// Distortion-free projection matrix of the true camera.
    pub projection: ProjectionMatrix,
    pub camera: DistortedCamera,
}

/// Uniform world points in the box, projected through the true camera and
/// perturbed by isotropic Gaussian pixel noise.
pub fn synth_camera_scene(cfg: &SceneConfig) -> Result<CameraScene> {
    if cfg.points < 6 {
        return Err(Error::invalid(format!("scene needs at least 6 points, got {}", cfg.points)));
    }
    if !(cfg.pixel_sigma >= 0.0) {
        return Err(Error::invalid("pixel noise sigma must be non-negative"));
    }
    let (lo, hi) = cfg.bounds;
    let extent = hi - lo;
    if extent.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::invalid("world box must have positive extent on every axis"));
    }
    let camera = DistortedCamera {
        intrinsics: cfg.intrinsics.matrix(),
        pose: cfg.extrinsics,
        distortion: cfg.distortion,
    };
    let projection = camera.projection_matrix()?;

    let mut world_rng = rng(cfg.seed, STREAM_WORLD);
    let mut pixel_rng = rng(cfg.seed, STREAM_PIXEL);
    let mut correspondences = Vec::with_capacity(cfg.points);
    for _ in 0..cfg.points {
        let u: [f64; 3] = [world_rng.random(), world_rng.random(), world_rng.random()];
        let world = Point3::new(lo.x + u[0] * extent.x, lo.y + u[1] * extent.y, lo.z + u[2] * extent.z);
        let (pixel, depth) = camera.project(&world);
        if depth <= 0.0 {
            return Err(Error::BehindCamera { depth });
        }
        let noisy = PixelPoint::new(
            pixel.x + gauss(&mut pixel_rng, cfg.pixel_sigma),
            pixel.y + gauss(&mut pixel_rng, cfg.pixel_sigma),
        );
        correspondences.push(Correspondence::new(world, noisy));
    }
    Ok(CameraScene {
        correspondences,
        projection,
        camera,
    })
}

/// `amplitude·cos(2πx/wavelength + phase)`, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub wavelength: f64,
    pub phase: f64,
}

impl Sinusoid {
    pub fn new(amplitude: f64, wavelength: f64, phase: f64) -> Self {
        Self {
            amplitude,
            wavelength,
            phase,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * (2.0 * PI * x / self.wavelength + self.phase).cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureKind {
    /// Depression of `depth` meters below the surrounding surface.
    Groove { depth: f64 },
    /// Painted area of the given intensity.
    Stripe { intensity: f64 },
}

/// Axis-aligned rectangle `[chainage.0, chainage.1) × [lateral.0, lateral.1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    pub kind: FeatureKind,
    pub chainage: (f64, f64),
    pub lateral: (f64, f64),
}

impl Feature {
    pub fn groove(chainage: (f64, f64), lateral: (f64, f64), depth: f64) -> Self {
        Self {
            kind: FeatureKind::Groove { depth },
            chainage,
            lateral,
        }
    }

    pub fn stripe(chainage: (f64, f64), lateral: (f64, f64), intensity: f64) -> Self {
        Self {
            kind: FeatureKind::Stripe { intensity },
            chainage,
            lateral,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.chainage.0 <= x && x < self.chainage.1 && self.lateral.0 <= y && y < self.lateral.1
    }

    fn overlaps(&self, other: &Feature) -> bool {
        self.chainage.0 < other.chainage.1
            && other.chainage.0 < self.chainage.1
            && self.lateral.0 < other.lateral.1
            && other.lateral.0 < self.lateral.1
    }

    /// Grid cells whose centre lies inside the feature.
    pub fn mask(&self, grid: &SurfaceGrid) -> Vec<(usize, usize)> {
        let mut cells = Vec::new();
        for r in 0..grid.rows() {
            for c in 0..grid.cols() {
                if self.contains(grid.row_centre(r), grid.col_centre(c)) {
                    cells.push((r, c));
                }
            }
        }
        cells
    }
}

fn validate_features(features: &[Feature]) -> Result<()> {
    for (i, f) in features.iter().enumerate() {
        if !(f.chainage.1 > f.chainage.0 && f.lateral.1 > f.lateral.0) {
            return Err(Error::invalid(format!("feature {i} has an empty extent")));
        }
        match f.kind {
            FeatureKind::Groove { depth } if !(depth > 0.0) => {
                return Err(Error::invalid(format!("feature {i}: groove depth must be positive")))
            }
            FeatureKind::Stripe { intensity } if !(0.0..=1.0).contains(&intensity) => {
                return Err(Error::invalid(format!("feature {i}: stripe intensity outside [0, 1]")))
            }
            _ => {}
        }
        for (j, g) in features[..i].iter().enumerate() {
            let contradictory = match (f.kind, g.kind) {
                (FeatureKind::Groove { depth: a }, FeatureKind::Groove { depth: b }) => a != b,
                (FeatureKind::Stripe { intensity: a }, FeatureKind::Stripe { intensity: b }) => a != b,
                _ => false,
            };
            if contradictory && f.overlaps(g) {
                return Err(Error::invalid(format!("features {j} and {i} overlap with different values")));
            }
        }
    }
    Ok(())
}

fn feature_effects(features: &[Feature], x: f64, y: f64) -> (f64, Option<f64>) {
    let mut depth: f64 = 0.0;
    let mut paint = None;
    for f in features.iter().filter(|f| f.contains(x, y)) {
        match f.kind {
            FeatureKind::Groove { depth: d } => depth = depth.max(d),
            FeatureKind::Stripe { intensity } => paint = Some(intensity),
        }
    }
    (depth, paint)
}

/// Standard deviations of every measurement noise source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Profilometer elevation (m).
    pub profile: f64,
    /// Scanner range, applied to elevation (m).
    pub scan: f64,
    pub intensity: f64,
    /// GPS position, per axis (m).
    pub gps: f64,
    /// Odometer increment (m).
    pub odometer: f64,
    /// Gyro yaw rate (rad/s).
    pub gyro: f64,
}

impl NoiseConfig {
    pub const NONE: NoiseConfig = NoiseConfig {
        profile: 0.0,
        scan: 0.0,
        intensity: 0.0,
        gps: 0.0,
        odometer: 0.0,
        gyro: 0.0,
    };
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            profile: 2e-5,
            scan: 5e-4,
            intensity: 0.01,
            gps: 0.003,
            odometer: 0.0,
            gyro: 0.0,
        }
    }
}

/// Straight road along world `x`; chainage equals `x` and lateral offset
/// equals `y` (left positive).
#[derive(Debug, Clone, PartialEq)]
pub struct RoadConfig {
    pub seed: u64,
    pub length: f64,
    /// Paved surface spans `±lane_width`.
    pub lane_width: f64,
    pub segment_length: f64,
    /// Crossfall per segment (%), cycled when shorter than the segment count.
    pub crossfall: Vec<f64>,
    pub roughness: Vec<Sinusoid>,
    /// Per-segment roughness scale, cycled, interpolated linearly between
    /// segment centres.
    pub roughness_condition: Vec<f64>,
    /// Texture components; phase is measured from the centre of each base
    /// length as sampled at `profile_spacing`.
    pub texture: Vec<Sinusoid>,
    /// Per-segment texture scale, cycled, constant within a segment.
    pub texture_condition: Vec<f64>,
    pub shoulder_width: f64,
    pub shoulder_drop: f64,
    pub background_intensity: f64,
    pub features: Vec<Feature>,
    /// Closed time intervals `[start, end]` without GPS fixes.
    pub gps_gaps: Vec<(f64, f64)>,
    /// m/s
    pub speed: f64,
    pub gps_rate: f64,
    pub odometer_rate: f64,
    /// Scan lines per second.
    pub scan_rate: f64,
    /// Lateral spacing of points within a scan line.
    pub scan_spacing: f64,
    pub profile_spacing: f64,
    /// Scanner position in the vehicle frame.
    pub mount_offset: Vector3<f64>,
    pub noise: NoiseConfig,
}

impl Default for RoadConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            length: 200.0,
            lane_width: 3.5,
            segment_length: DEFAULT_SEGMENT_LENGTH,
            crossfall: vec![2.0, 2.5, 3.0, 2.2, 1.5, 2.8, 3.2, 1.8, 2.4, 2.6],
            roughness: vec![
                Sinusoid::new(0.003, 5.0, 0.3),
                Sinusoid::new(0.006, 17.0, 1.1),
                Sinusoid::new(0.0015, 2.3, 2.0),
            ],
            roughness_condition: vec![1.0, 1.6, 0.6, 2.2, 1.2, 0.8, 1.9, 1.4, 0.5, 1.1],
            texture: vec![Sinusoid::new(0.0008, 0.05, 0.0)],
            texture_condition: vec![1.0, 0.7, 1.3, 0.9, 1.5, 0.6, 1.2, 0.8, 1.4, 1.1],
            shoulder_width: 0.5,
            shoulder_drop: 0.03,
            background_intensity: 0.2,
            features: vec![Feature::stripe((0.0, f64::INFINITY), (-0.075, 0.075), 0.9)],
            gps_gaps: vec![(4.0, 6.0)],
            speed: 60.0 / 3.6,
            gps_rate: 10.0,
            odometer_rate: 100.0,
            scan_rate: 100.0,
            scan_spacing: 0.05,
            profile_spacing: 0.001,
            mount_offset: Vector3::new(-1.0, 0.0, 2.0),
            noise: NoiseConfig::default(),
        }
    }
}

impl RoadConfig {
    /// Flat, level, featureless and noise-free.
    pub fn flat() -> Self {
        Self {
            crossfall: vec![0.0],
            roughness: Vec::new(),
            texture: Vec::new(),
            features: Vec::new(),
            noise: NoiseConfig::NONE,
            ..Self::default()
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn segment_count(&self) -> usize {
        (self.length / self.segment_length + 1e-9).floor() as usize
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("length", self.length),
            ("lane width", self.lane_width),
            ("segment length", self.segment_length),
            ("speed", self.speed),
            ("GPS rate", self.gps_rate),
            ("odometer rate", self.odometer_rate),
            ("scan rate", self.scan_rate),
            ("scan spacing", self.scan_spacing),
            ("profile spacing", self.profile_spacing),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("road {name} must be positive and finite")));
            }
        }
        if self.crossfall.is_empty() || self.roughness_condition.is_empty() || self.texture_condition.is_empty() {
            return Err(Error::invalid("per-segment lists must not be empty"));
        }
        if self.roughness.iter().chain(&self.texture).any(|s| !(s.wavelength > 0.0)) {
            return Err(Error::invalid("sinusoid wavelengths must be positive"));
        }
        if self.gps_gaps.iter().any(|(a, b)| !(b >= a)) {
            return Err(Error::invalid("GPS gap intervals must have start ≤ end"));
        }
        let n = &self.noise;
        if [n.profile, n.scan, n.intensity, n.gps, n.odometer, n.gyro].iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::invalid("noise standard deviations must be non-negative"));
        }
        validate_features(&self.features)
    }

    fn segment_index(&self, x: f64) -> usize {
        let k = (x / self.segment_length).floor().max(0.0) as usize;
        k.min(self.segment_count().saturating_sub(1))
    }

    fn cycled(list: &[f64], k: usize) -> f64 {
        list[k % list.len()]
    }

    /// Configured crossfall of segment `k` (%).
    pub fn segment_crossfall(&self, k: usize) -> f64 {
        Self::cycled(&self.crossfall, k)
    }

    fn roughness_scale(&self, x: f64) -> f64 {
        let count = self.segment_count().max(1);
        let pos = (x / self.segment_length - 0.5).clamp(0.0, (count - 1) as f64);
        let k = pos.floor() as usize;
        let frac = pos - k as f64;
        let a = Self::cycled(&self.roughness_condition, k);
        let b = Self::cycled(&self.roughness_condition, (k + 1).min(count - 1));
        a + (b - a) * frac
    }

    /// Roughness component of the longitudinal elevation.
    pub fn roughness_at(&self, x: f64) -> f64 {
        if self.roughness.is_empty() {
            return 0.0;
        }
        self.roughness_scale(x) * self.roughness.iter().map(|s| s.eval(x)).sum::<f64>()
    }

    fn texture_at(&self, x: f64) -> f64 {
        if self.texture.is_empty() {
            return 0.0;
        }
        let centre = 0.5 * (DEFAULT_BASE_LENGTH - self.profile_spacing);
        let scale = Self::cycled(&self.texture_condition, self.segment_index(x));
        scale * self.texture.iter().map(|s| s.eval(x - centre)).sum::<f64>()
    }

    /// Noise-free surface elevation.
    pub fn elevation(&self, x: f64, y: f64) -> f64 {
        let cross = self.segment_crossfall(self.segment_index(x)) / 100.0 * y;
        let shoulder = if y.abs() > self.lane_width { self.shoulder_drop } else { 0.0 };
        let (groove, _) = feature_effects(&self.features, x, y);
        cross + self.roughness_at(x) + self.texture_at(x) - shoulder - groove
    }

    /// Noise-free surface intensity.
    pub fn intensity(&self, x: f64, y: f64) -> f64 {
        feature_effects(&self.features, x, y).1.unwrap_or(self.background_intensity)
    }
}

/// Exact per-segment values.
///
/// Crossfall is the configured value and MPD is the texture scale times the
/// sum of texture amplitudes (exact for a single cosine centred on each base
/// length). IRI is [`iri_oracle`] on the noise-free roughness component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentTruth {
    pub chainage_start: f64,
    pub chainage_end: f64,
    pub iri: f64,
    pub mpd: f64,
    pub crossfall: f64,
}

pub fn road_ground_truth(cfg: &RoadConfig) -> Result<Vec<SegmentTruth>> {
    cfg.validate()?;
    let spacing = crate::metrics::IRI_SAMPLE_INTERVAL;
    let count = (cfg.length / spacing + 1e-9).floor() as usize + 1;
    let rough = Profile::new((0..count).map(|i| cfg.roughness_at(i as f64 * spacing)).collect(), spacing, 0.0)?;
    let trace = iri_oracle_trace(&rough)?;
    let texture_sum: f64 = cfg.texture.iter().map(|s| s.amplitude.abs()).sum();
    (0..cfg.segment_count())
        .map(|k| {
            let s0 = k as f64 * cfg.segment_length;
            let s1 = s0 + cfg.segment_length;
            Ok(SegmentTruth {
                chainage_start: s0,
                chainage_end: s1,
                iri: trace
                    .mean_between(s0, s1)
                    .ok_or_else(|| Error::invalid("segment shorter than the IRI interval"))?,
                mpd: RoadConfig::cycled(&cfg.texture_condition, k) * texture_sum * 1000.0,
                crossfall: cfg.segment_crossfall(k),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRoad {
    /// Profilometer line along `y = 0`.
    pub profile: Profile,
    /// Scanner points in the sensor frame; each scan line shares one time.
    pub scan: Vec<ScanPoint>,
    pub mount: SensorMount,
    /// True vehicle trajectory at the GPS rate, gaps included.
    pub trajectory: Trajectory,
    pub gps: Vec<GpsFix>,
    pub odo_imu: Vec<OdoImuSample>,
    pub truth: Vec<SegmentTruth>,
    pub features: Vec<Feature>,
}

fn vehicle_pose(cfg: &RoadConfig, t: f64) -> Pose {
    Pose {
        time: t,
        position: Vector3::new(cfg.speed * t, 0.0, 0.0),
        yaw: 0.0,
        pitch: 0.0,
        roll: 0.0,
    }
}

/// The vehicle drives at constant speed with its scanner passing from
/// chainage −1 m to `length + 1` m.
pub fn synth_road(cfg: &RoadConfig) -> Result<SyntheticRoad> {
    cfg.validate()?;
    let noise = cfg.noise;
    let duration = (cfg.length + 2.0) / cfg.speed;
    // Vehicle x at t = 0 puts the scanner at chainage −1.
    let x_start = -1.0 - cfg.mount_offset.x;
    let pose_at = |t: f64| {
        let mut p = vehicle_pose(cfg, t);
        p.position.x += x_start;
        p
    };

    let mut profile_rng = rng(cfg.seed, STREAM_PROFILE);
    let n = (cfg.length / cfg.profile_spacing + 1e-9).floor() as usize + 1;
    let samples = (0..n)
        .map(|i| {
            let x = i as f64 * cfg.profile_spacing;
            cfg.elevation(x, 0.0) + gauss(&mut profile_rng, noise.profile)
        })
        .collect();
    let profile = Profile::new(samples, cfg.profile_spacing, 0.0)?;

    let gps_steps = (duration * cfg.gps_rate).floor() as usize;
    let truth_poses: Vec<Pose> = (0..=gps_steps).map(|k| pose_at(k as f64 / cfg.gps_rate)).collect();
    let last_time = truth_poses.last().map_or(0.0, |p| p.time);
    let trajectory = Trajectory::new(truth_poses.clone())?;

    let mut gps_rng = rng(cfg.seed, STREAM_GPS);
    let gps = truth_poses
        .iter()
        .filter(|p| !cfg.gps_gaps.iter().any(|(a, b)| *a <= p.time && p.time <= *b))
        .map(|p| GpsFix {
            time: p.time,
            position: p.position
                + Vector3::new(
                    gauss(&mut gps_rng, noise.gps),
                    gauss(&mut gps_rng, noise.gps),
                    gauss(&mut gps_rng, noise.gps),
                ),
        })
        .collect();

    let mut odo_rng = rng(cfg.seed, STREAM_ODOMETER);
    let mut gyro_rng = rng(cfg.seed, STREAM_GYRO);
    let odo_steps = (last_time * cfg.odometer_rate + 1e-9).floor() as usize;
    let odo_imu = (1..=odo_steps)
        .map(|k| OdoImuSample {
            time: k as f64 / cfg.odometer_rate,
            distance_increment: (cfg.speed / cfg.odometer_rate + gauss(&mut odo_rng, noise.odometer)).max(0.0),
            yaw_rate: gauss(&mut gyro_rng, noise.gyro),
        })
        .collect();

    let mount = SensorMount::from_offsets(cfg.mount_offset, 0.0, 0.0, 0.0);
    let mut scan_rng = rng(cfg.seed, STREAM_SCAN);
    let mut intensity_rng = rng(cfg.seed, STREAM_INTENSITY);
    let half = cfg.lane_width + cfg.shoulder_width;
    let per_line = (2.0 * half / cfg.scan_spacing + 1e-9).floor() as usize + 1;
    let lines = (last_time * cfg.scan_rate + 1e-9).floor() as usize;
    let mut scan = Vec::with_capacity(lines * per_line);
    for j in 0..lines {
        let t = (j as f64 + 0.5) / cfg.scan_rate;
        let world_to_sensor = pose_to_transform(&pose_at(t)).compose(&mount.0).inverse();
        let x = pose_at(t).position.x + cfg.mount_offset.x;
        for i in 0..per_line {
            let y = -half + i as f64 * cfg.scan_spacing;
            let z = cfg.elevation(x, y) + gauss(&mut scan_rng, noise.scan);
            let intensity = (cfg.intensity(x, y) + gauss(&mut intensity_rng, noise.intensity)).clamp(0.0, 1.0);
            scan.push(ScanPoint {
                time: t,
                point: world_to_sensor.transform_point(&Point3::new(x, y, z)),
                intensity,
            });
        }
    }

    Ok(SyntheticRoad {
        profile,
        scan,
        mount,
        trajectory,
        gps,
        odo_imu,
        truth: road_ground_truth(cfg)?,
        features: cfg.features.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shoulder {
    pub side: EdgeSide,
    /// Absolute lateral offset where the drop starts.
    pub offset: f64,
    pub drop: f64,
}

/// Small dense surface patch for the detectors: one jittered point per
/// nominal cell, cells aligned to multiples of `cell`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchConfig {
    pub seed: u64,
    /// Chainage extent, starting at 0.
    pub length: f64,
    pub lateral: (f64, f64),
    pub cell: f64,
    /// Percent. Plane `c·y` or, when `crowned`, the crown `−c·|y|`.
    pub crossfall: f64,
    pub crowned: bool,
    pub shoulders: Vec<Shoulder>,
    pub features: Vec<Feature>,
    pub background_intensity: f64,
    pub elevation_noise: f64,
    pub intensity_noise: f64,
    /// Maximum point offset from the cell centre, as a fraction of `cell`.
    pub jitter: f64,
}

impl Default for PatchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            length: 1.0,
            lateral: (-0.5, 0.5),
            cell: 0.01,
            crossfall: 2.0,
            crowned: false,
            shoulders: Vec::new(),
            features: Vec::new(),
            background_intensity: 0.2,
            elevation_noise: 2e-4,
            intensity_noise: 0.01,
            jitter: 0.3,
        }
    }
}

impl PatchConfig {
    /// Groove `depth` meters deep, 3 cells wide and 30 cells long.
    pub fn groove(seed: u64, depth: f64) -> Self {
        Self {
            seed,
            features: vec![Feature::groove((0.30, 0.60), (-0.02, 0.01), depth)],
            ..Self::default()
        }
    }

    /// Stripe 10 cells wide along the whole patch.
    pub fn stripe(seed: u64, intensity: f64) -> Self {
        Self {
            seed,
            features: vec![Feature::stripe((0.0, 1.0), (0.10, 0.20), intensity)],
            ..Self::default()
        }
    }

    /// Crowned carriageway with shoulders dropping `drop` meters beyond
    /// `±3.5 m` on the requested sides.
    pub fn shoulders(seed: u64, sides: &[EdgeSide], drop: f64) -> Self {
        Self {
            seed,
            length: 0.5,
            lateral: (-4.0, 4.0),
            crowned: true,
            shoulders: sides
                .iter()
                .map(|&side| Shoulder {
                    side,
                    offset: 3.5,
                    drop,
                })
                .collect(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePatch {
    pub points: Vec<ScanPoint>,
    pub features: Vec<Feature>,
    pub shoulders: Vec<Shoulder>,
}

impl SurfacePatch {
    /// Ground-truth cells of feature `index`.
    pub fn feature_mask(&self, index: usize, grid: &SurfaceGrid) -> Vec<(usize, usize)> {
        self.features[index].mask(grid)
    }
}

fn patch_elevation(cfg: &PatchConfig, x: f64, y: f64) -> f64 {
    let slope = cfg.crossfall / 100.0;
    let mut z = if cfg.crowned { -slope * y.abs() } else { slope * y };
    for s in &cfg.shoulders {
        let beyond = match s.side {
            EdgeSide::Left => y > s.offset,
            EdgeSide::Right => y < -s.offset,
        };
        if beyond {
            z -= s.drop;
        }
    }
    z - feature_effects(&cfg.features, x, y).0
}

pub fn synth_surface_patch(cfg: &PatchConfig) -> Result<SurfacePatch> {
    if !(cfg.cell > 0.0 && cfg.length > 0.0 && cfg.lateral.1 > cfg.lateral.0) {
        return Err(Error::invalid("patch extent and cell size must be positive"));
    }
    if !(0.0..0.5).contains(&cfg.jitter) {
        return Err(Error::invalid("jitter must lie in [0, 0.5)"));
    }
    if !(cfg.elevation_noise >= 0.0 && cfg.intensity_noise >= 0.0) {
        return Err(Error::invalid("noise standard deviations must be non-negative"));
    }
    validate_features(&cfg.features)?;
    let rows = (cfg.length / cfg.cell).round() as usize;
    let c0 = (cfg.lateral.0 / cfg.cell).round() as i64;
    let c1 = (cfg.lateral.1 / cfg.cell).round() as i64;
    let mut jitter_rng = rng(cfg.seed, STREAM_JITTER);
    let mut z_rng = rng(cfg.seed, STREAM_SCAN);
    let mut i_rng = rng(cfg.seed, STREAM_INTENSITY);
    let mut points = Vec::with_capacity(rows * (c1 - c0) as usize);
    for r in 0..rows {
        for c in c0..c1 {
            let cx = (r as f64 + 0.5) * cfg.cell;
            let cy = (c as f64 + 0.5) * cfg.cell;
            let jx: f64 = jitter_rng.random_range(-1.0..1.0);
            let jy: f64 = jitter_rng.random_range(-1.0..1.0);
            // Features are evaluated at the cell centre so masks are exact.
            let z = patch_elevation(cfg, cx, cy) + gauss(&mut z_rng, cfg.elevation_noise);
            let base = feature_effects(&cfg.features, cx, cy).1.unwrap_or(cfg.background_intensity);
            let intensity = (base + gauss(&mut i_rng, cfg.intensity_noise)).clamp(0.0, 1.0);
            points.push(ScanPoint {
                time: 0.0,
                point: Point3::new(cx + jx * cfg.jitter * cfg.cell, cy + jy * cfg.jitter * cfg.cell, z),
                intensity,
            });
        }
    }
    Ok(SurfacePatch {
        points,
        features: cfg.features.clone(),
        shoulders: cfg.shoulders.clone(),
    })
}

/// Noise variance giving expected pairwise R² `target` between two systems
/// that each add independent noise to a signal of variance
/// `signal_variance`: the squared correlation is `(V/(V+σ²))²`.
pub fn noise_variance_for_r2(signal_variance: f64, target: f64) -> Result<f64> {
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::invalid(format!("target R² must lie in (0, 1], got {target}")));
    }
    if !(signal_variance >= 0.0) {
        return Err(Error::invalid("signal variance must be non-negative"));
    }
    Ok(signal_variance * (1.0 / target.sqrt() - 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FleetConfig {
    pub seed: u64,
    pub systems: usize,
    pub segments: usize,
    pub segment_length: f64,
    pub target_r2: [(MetricKind, f64); 3],
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            systems: 6,
            segments: 200,
            segment_length: DEFAULT_SEGMENT_LENGTH,
            target_r2: [(MetricKind::Iri, 0.765), (MetricKind::Mpd, 0.875), (MetricKind::Crossfall, 0.995)],
        }
    }
}

fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Series of `systems` systems over the default road's ground truth, each
/// adding independent Gaussian noise sized by [`noise_variance_for_r2`].
pub fn synth_fleet(cfg: &FleetConfig) -> Result<Vec<RunSeries>> {
    if cfg.systems < 2 || cfg.segments < 2 {
        return Err(Error::invalid("a fleet needs at least 2 systems and 2 segments"));
    }
    let road = RoadConfig {
        length: cfg.segments as f64 * cfg.segment_length,
        segment_length: cfg.segment_length,
        ..RoadConfig::default()
    };
    let truth = road_ground_truth(&road)?;
    let mut noise_rng = rng(cfg.seed, STREAM_FLEET);
    let mut runs = Vec::new();
    for (metric, target) in cfg.target_r2 {
        let signal: Vec<f64> = truth
            .iter()
            .map(|t| match metric {
                MetricKind::Iri => t.iri,
                MetricKind::Mpd => t.mpd,
                MetricKind::Crossfall => t.crossfall,
            })
            .collect();
        let sigma = noise_variance_for_r2(population_variance(&signal), target)?.sqrt();
        for s in 0..cfg.systems {
            let segments = truth
                .iter()
                .zip(&signal)
                .map(|(t, v)| (t.chainage_start, v + gauss(&mut noise_rng, sigma)))
                .collect();
            runs.push(RunSeries::new(format!("system{}", s + 1), metric, segments)?);
        }
    }
    Ok(runs)
}

// Golden-car constants, restated so the oracle shares no code with the
// state-transition implementation.
const ORACLE_K1: f64 = 653.0;
const ORACLE_K2: f64 = 63.3;
const ORACLE_C: f64 = 6.0;
const ORACLE_MU: f64 = 0.15;
const ORACLE_SPEED: f64 = 80.0 / 3.6;
const ORACLE_SUBSTEPS: usize = 100;

fn quarter_car_rate(z: [f64; 4], input: f64) -> [f64; 4] {
    let spring = ORACLE_K2 * (z[0] - z[2]) + ORACLE_C * (z[1] - z[3]);
    [
        z[1],
        -spring,
        z[3],
        (spring - ORACLE_K1 * (z[2] - input)) / ORACLE_MU,
    ]
}

fn rk4_step(z: [f64; 4], input: f64, h: f64) -> [f64; 4] {
    let add = |a: [f64; 4], b: [f64; 4], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]];
    let k1 = quarter_car_rate(z, input);
    let k2 = quarter_car_rate(add(z, k1, 0.5 * h), input);
    let k3 = quarter_car_rate(add(z, k2, 0.5 * h), input);
    let k4 = quarter_car_rate(add(z, k3, h), input);
    std::array::from_fn(|i| z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

/// Quarter-car response by classical fourth-order Runge-Kutta at 1/100 of
/// each sample interval, with the interval slope held constant.
pub fn iri_oracle_trace(profile: &Profile) -> Result<IriTrace> {
    let input = iri_input(profile)?;
    let dx = input.spacing();
    let h = dx / ORACLE_SPEED / ORACLE_SUBSTEPS as f64;
    let y0 = iri_initial_slope(&input);
    let mut z = [y0, 0.0, y0, 0.0];
    let values = input
        .samples()
        .windows(2)
        .map(|w| {
            let slope = (w[1] - w[0]) / dx;
            for _ in 0..ORACLE_SUBSTEPS {
                z = rk4_step(z, slope, h);
            }
            (z[0] - z[2]).abs() * 1000.0
        })
        .collect();
    Ok(IriTrace {
        spacing: dx,
        start_chainage: input.start_chainage(),
        values,
    })
}

pub fn iri_oracle(profile: &Profile) -> Result<f64> {
    Ok(iri_oracle_trace(profile)?.mean())
}
