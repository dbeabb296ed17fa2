//! Trajectories, GPS/odometer/IMU fusion and scan georeferencing.
//!
//! Every sensor sample carries a run-clock timestamp. A [`Trajectory`] holds
//! vehicle poses `(time, X, Y, Z, yaw, pitch, roll)` in a local level frame;
//! scan points are mapped to that frame through the sensor's [`SensorMount`]
//! and the pose interpolated at the point's timestamp.
//!
//! Attitude follows the Z-Y-X convention: `R = Rz(yaw)·Ry(pitch)·Rx(roll)`.

use std::f64::consts::{PI, TAU};

use nalgebra::{Point3, Rotation3, Vector3};

use crate::camera::RigidExtrinsics;
use crate::error::{Error, Result};

/// Wraps an angle into `(−π, π]`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub time: f64,
    pub position: Vector3<f64>,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl Pose {
    /// Builds a pose, wrapping the angles into `(−π, π]`.
    pub fn new(time: f64, position: Vector3<f64>, yaw: f64, pitch: f64, roll: f64) -> Result<Self> {
        if !(time.is_finite()
            && position.iter().all(|v| v.is_finite())
            && yaw.is_finite()
            && pitch.is_finite()
            && roll.is_finite())
        {
            return Err(Error::invalid("pose fields must be finite"));
        }
        Ok(Self {
            time,
            position,
            yaw: normalize_angle(yaw),
            pitch: normalize_angle(pitch),
            roll: normalize_angle(roll),
        })
    }

    pub fn at_rest(time: f64) -> Self {
        Self {
            time,
            position: Vector3::zeros(),
            yaw: 0.0,
            pitch: 0.0,
            roll: 0.0,
        }
    }
}

/// Rigid map from the vehicle frame of `pose` to the world frame.
pub fn pose_to_transform(pose: &Pose) -> RigidExtrinsics {
    let rotation = Rotation3::from_euler_angles(pose.roll, pose.pitch, pose.yaw).into_inner();
    RigidExtrinsics::new(rotation, pose.position).expect("Euler rotation is orthonormal")
}

/// Time-ordered sequence of poses.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::invalid("trajectory needs at least one pose"));
        }
        if let Some(w) = poses.windows(2).find(|w| !(w[1].time > w[0].time)) {
            return Err(Error::invalid(format!(
                "trajectory times must be strictly increasing ({} then {})",
                w[0].time, w[1].time
            )));
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.poses[0].time, self.poses[self.poses.len() - 1].time)
    }

    pub fn contains_time(&self, t: f64) -> bool {
        let (a, b) = self.span();
        t >= a && t <= b
    }

    pub fn into_poses(self) -> Vec<Pose> {
        self.poses
    }
}

/// Interpolates a pose at `t`: positions linearly, each angle along the
/// shortest arc. No extrapolation.
pub fn interpolate_pose(traj: &Trajectory, t: f64) -> Result<Pose> {
    let (start, end) = traj.span();
    if !traj.contains_time(t) {
        return Err(Error::OutOfSpan {
            count: 1,
            min: t,
            max: t,
            span_start: start,
            span_end: end,
        });
    }
    let poses = traj.poses();
    let i = poses.partition_point(|p| p.time <= t);
    if i == 0 {
        return Ok(poses[0]);
    }
    let a = &poses[i - 1];
    if a.time == t || i == poses.len() {
        return Ok(*a);
    }
    let b = &poses[i];
    let s = (t - a.time) / (b.time - a.time);
    let arc = |x: f64, y: f64| normalize_angle(x + s * normalize_angle(y - x));
    Ok(Pose {
        time: t,
        position: a.position + (b.position - a.position) * s,
        yaw: arc(a.yaw, b.yaw),
        pitch: arc(a.pitch, b.pitch),
        roll: arc(a.roll, b.roll),
    })
}

/// Sensor-to-vehicle rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorMount(pub RigidExtrinsics);

impl SensorMount {
    pub fn identity() -> Self {
        Self(RigidExtrinsics::identity())
    }

    /// Mount given as lever arm plus Z-Y-X angles.
    pub fn from_offsets(translation: Vector3<f64>, yaw: f64, pitch: f64, roll: f64) -> Self {
        let rotation = Rotation3::from_euler_angles(roll, pitch, yaw).into_inner();
        Self(RigidExtrinsics::new(rotation, translation).expect("Euler rotation is orthonormal"))
    }
}

/// One scanner return. Coordinates are in the sensor frame before
/// georeferencing and in the world frame after.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub time: f64,
    pub point: Point3<f64>,
    /// Relative reflectance in `[0, 1]`.
    pub intensity: f64,
}

/// Maps every point into the world frame:
/// `p_world = T(pose(t)) ∘ mount · p_sensor`.
pub fn georeference_scan(
    scan: &[ScanPoint],
    traj: &Trajectory,
    mount: &SensorMount,
) -> Result<Vec<ScanPoint>> {
    if let Some(p) = scan.iter().find(|p| !(0.0..=1.0).contains(&p.intensity)) {
        return Err(Error::invalid(format!(
            "intensity {} at t = {} outside [0, 1]",
            p.intensity, p.time
        )));
    }
    let outside: Vec<f64> = scan
        .iter()
        .map(|p| p.time)
        .filter(|t| !traj.contains_time(*t))
        .collect();
    if !outside.is_empty() {
        let (span_start, span_end) = traj.span();
        return Err(Error::OutOfSpan {
            count: outside.len(),
            min: outside.iter().copied().fold(f64::INFINITY, f64::min),
            max: outside.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            span_start,
            span_end,
        });
    }

    let mut cached: Option<(f64, RigidExtrinsics)> = None;
    scan.iter()
        .map(|p| {
            let to_world = match cached {
                Some((t, tf)) if t == p.time => tf,
                _ => {
                    let tf = pose_to_transform(&interpolate_pose(traj, p.time)?).compose(&mount.0);
                    cached = Some((p.time, tf));
                    tf
                }
            };
            Ok(ScanPoint {
                time: p.time,
                point: to_world.transform_point(&p.point),
                intensity: p.intensity,
            })
        })
        .collect()
}

/// Odometer distance and gyro yaw rate accumulated over the interval ending
/// at `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdoImuSample {
    pub time: f64,
    pub distance_increment: f64,
    pub yaw_rate: f64,
}

/// Planar dead reckoning from `start`.
///
/// For each sample, heading advances by `yaw_rate·Δt` and the position by
/// `distance_increment` along the mid-interval heading. Height, pitch and
/// roll are held.
pub fn dead_reckon(start: &Pose, samples: &[OdoImuSample]) -> Result<Trajectory> {
    let mut poses = Vec::with_capacity(samples.len() + 1);
    poses.push(*start);
    let mut prev = *start;
    for s in samples {
        if !(s.time > prev.time) {
            return Err(Error::invalid(format!(
                "odometer/IMU samples must be strictly after the start and time-ordered \
                 (sample at {} follows {})",
                s.time, prev.time
            )));
        }
        if !(s.distance_increment >= 0.0 && s.distance_increment.is_finite() && s.yaw_rate.is_finite()) {
            return Err(Error::invalid(format!(
                "invalid odometer/IMU sample at t = {}",
                s.time
            )));
        }
        let dt = s.time - prev.time;
        let turn = s.yaw_rate * dt;
        let heading = prev.yaw + 0.5 * turn;
        let position = prev.position
            + Vector3::new(heading.cos(), heading.sin(), 0.0) * s.distance_increment;
        let next = Pose {
            time: s.time,
            position,
            yaw: normalize_angle(prev.yaw + turn),
            pitch: prev.pitch,
            roll: prev.roll,
        };
        poses.push(next);
        prev = next;
    }
    Trajectory::new(poses)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsFix {
    pub time: f64,
    pub position: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    /// Fix-to-fix intervals longer than this are filled by dead reckoning.
    pub max_gap: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { max_gap: 1.0 }
    }
}

fn heading_between(from: &Vector3<f64>, to: &Vector3<f64>) -> Option<(f64, f64)> {
    let d = to - from;
    let horizontal = d.x.hypot(d.y);
    if horizontal == 0.0 {
        return None;
    }
    Some((d.y.atan2(d.x), -d.z.atan2(horizontal)))
}

/// Heading change over `[t0, t1]` from the piecewise-constant yaw rates;
/// time not covered by any sample interval contributes nothing.
fn gyro_turn(samples: &[OdoImuSample], t0: f64, t1: f64) -> f64 {
    if t1 < t0 {
        return -gyro_turn(samples, t1, t0);
    }
    let mut idx = samples.partition_point(|s| s.time < t0);
    let (mut t, mut turn) = (t0, 0.0);
    while t < t1 && idx < samples.len() {
        let end = samples[idx].time.min(t1);
        if idx > 0 {
            turn += samples[idx].yaw_rate * (end - t);
        }
        t = end;
        idx += 1;
    }
    turn
}

/// Anchors poses at the GPS fixes and fills gaps longer than
/// `config.max_gap` by dead reckoning.
///
/// Anchor yaw and pitch come from the fix-to-fix direction, using neighbours
/// that are not separated by a gap; yaw is then advanced by the gyro turn
/// from the chord midpoint to the fix. Inside a gap the dead-reckoned track is
/// corrected at the closing fix: the closure error is distributed linearly
/// over the accumulated arc length, so the corrected track meets the closing
/// fix exactly.
pub fn fuse_trajectory(
    gps: &[GpsFix],
    samples: &[OdoImuSample],
    config: &FusionConfig,
) -> Result<Trajectory> {
    if gps.is_empty() {
        return Err(Error::invalid("no GPS fixes"));
    }
    if let Some(w) = gps.windows(2).find(|w| !(w[1].time > w[0].time)) {
        return Err(Error::invalid(format!(
            "GPS fixes must be strictly time-ordered ({} then {})",
            w[0].time, w[1].time
        )));
    }
    if let Some(w) = samples.windows(2).find(|w| !(w[1].time > w[0].time)) {
        return Err(Error::invalid(format!(
            "odometer/IMU samples must be strictly time-ordered ({} then {})",
            w[0].time, w[1].time
        )));
    }
    let max_gap = config.max_gap;
    let n = gps.len();
    let near = |i: usize, j: usize| (gps[i].time - gps[j].time).abs() <= max_gap;

    let attitude = |i: usize, prefer_backward: bool| -> (f64, f64) {
        let prev = (i > 0 && near(i, i - 1)).then(|| i - 1);
        let next = (i + 1 < n && near(i, i + 1)).then(|| i + 1);
        let pick = match (prev, next, prefer_backward) {
            (Some(p), _, true) => Some((p, i)),
            (Some(p), Some(q), false) => Some((p, q)),
            (Some(p), None, false) => Some((p, i)),
            (None, Some(q), _) => Some((i, q)),
            (None, None, _) if i + 1 < n => Some((i, i + 1)),
            (None, None, _) if i > 0 => Some((i - 1, i)),
            _ => None,
        };
        pick.and_then(|(a, b)| {
            let (yaw, pitch) = heading_between(&gps[a].position, &gps[b].position)?;
            // The chord direction is the heading at the chord midpoint.
            let mid = 0.5 * (gps[a].time + gps[b].time);
            Some((normalize_angle(yaw + gyro_turn(samples, mid, gps[i].time)), pitch))
        })
        .unwrap_or((0.0, 0.0))
    };

    let mut poses = Vec::with_capacity(n);
    for i in 0..n {
        let (yaw, pitch) = attitude(i, false);
        poses.push(Pose::new(gps[i].time, gps[i].position, yaw, pitch, 0.0)?);
        if i + 1 == n || near(i, i + 1) {
            continue;
        }

        let (t_open, t_close) = (gps[i].time, gps[i + 1].time);
        let lo = samples.partition_point(|s| s.time <= t_open);
        let hi = samples.partition_point(|s| s.time <= t_close);
        let inside = &samples[lo..hi];
        let mut stamps = Vec::with_capacity(inside.len() + 2);
        stamps.push(t_open);
        stamps.extend(inside.iter().map(|s| s.time));
        stamps.push(t_close);
        if inside.is_empty() || stamps.windows(2).any(|w| w[1] - w[0] > max_gap) {
            return Err(Error::UncoveredGap {
                start: t_open,
                end: t_close,
            });
        }

        let (yaw, pitch) = attitude(i, true);
        let start = Pose::new(t_open, gps[i].position, yaw, pitch, 0.0)?;
        let reckoned = dead_reckon(&start, inside)?;
        let track = &reckoned.poses()[1..];

        let mut arc = Vec::with_capacity(inside.len());
        let mut total = 0.0;
        for s in inside {
            total += s.distance_increment;
            arc.push(total);
        }
        let closure = gps[i + 1].position - track[track.len() - 1].position;
        let span = track[track.len() - 1].time - t_open;
        for (k, pose) in track.iter().enumerate() {
            if pose.time >= t_close {
                continue;
            }
            let fraction = if total > 0.0 {
                arc[k] / total
            } else {
                (pose.time - t_open) / span
            };
            poses.push(Pose {
                position: pose.position + closure * fraction,
                ..*pose
            });
        }
    }
    Trajectory::new(poses)
}
