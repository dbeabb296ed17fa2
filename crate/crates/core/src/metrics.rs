//! Pavement metrics from sampled profiles.
//!
//! * **MPD** (mean profile depth, mm): the profile is cut into 100 mm base
//!   lengths; each is detrended by least squares, split in two halves, and
//!   contributes `MSD = (peak₁ + peak₂)/2 − mean`. MPD is the mean MSD.
//! * **IRI** (international roughness index, m/km): the "golden car"
//!   quarter-car model is driven over the longitudinal profile at 80 km/h
//!   and the rectified suspension travel is averaged over distance.
//! * **Crossfall** (%): least-squares slope of a transverse profile.

use nalgebra::{Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::georef::ScanPoint;

/// Uniformly sampled elevation series, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    samples: Vec<f64>,
    spacing: f64,
    start_chainage: f64,
}

impl Profile {
    pub fn new(samples: Vec<f64>, spacing: f64, start_chainage: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid(format!("profile spacing must be positive, got {spacing}")));
        }
        if samples.len() < 2 {
            return Err(Error::invalid("profile needs at least 2 samples"));
        }
        if !start_chainage.is_finite() || samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("profile values must be finite"));
        }
        Ok(Self {
            samples,
            spacing,
            start_chainage,
        })
    }

    /// Builds a profile from `(chainage, elevation)` pairs on a uniform grid.
    pub fn from_points(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("profile needs at least 2 samples"));
        }
        let spacing = (points[points.len() - 1].0 - points[0].0) / (points.len() - 1) as f64;
        for (i, w) in points.windows(2).enumerate() {
            let step = w[1].0 - w[0].0;
            if (step - spacing).abs() > 1e-6 * spacing.abs().max(1e-9) {
                return Err(Error::invalid(format!(
                    "profile chainage is not uniformly spaced near sample {}",
                    i + 1
                )));
            }
        }
        Self::new(points.iter().map(|p| p.1).collect(), spacing, points[0].0)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn start_chainage(&self) -> f64 {
        self.start_chainage
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distance between first and last sample.
    pub fn length(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.spacing
    }

    pub fn chainage(&self, i: usize) -> f64 {
        self.start_chainage + i as f64 * self.spacing
    }

    /// Scales every elevation by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    /// Samples whose chainage lies in `[start, end)`, as a new profile.
    pub fn window(&self, start: f64, end: f64) -> Option<Profile> {
        let eps = 1e-9 * self.spacing;
        let first = ((start - self.start_chainage) / self.spacing - eps).ceil().max(0.0) as usize;
        let last = (((end - self.start_chainage) / self.spacing) - eps).ceil() as usize;
        let last = last.min(self.samples.len());
        (last >= first + 2).then(|| Profile {
            samples: self.samples[first..last].to_vec(),
            spacing: self.spacing,
            start_chainage: self.chainage(first),
        })
    }
}

/// Removes the least-squares line (fitted against sample index).
pub fn detrend_segment(seg: &[f64]) -> Result<Vec<f64>> {
    if seg.len() < 3 {
        return Err(Error::invalid(format!(
            "detrending needs at least 3 samples, got {}",
            seg.len()
        )));
    }
    let n = seg.len() as f64;
    let x_mean = (n - 1.0) / 2.0;
    let y_mean = seg.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in seg.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (y - y_mean);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    Ok(seg
        .iter()
        .enumerate()
        .map(|(i, y)| y - y_mean - slope * (i as f64 - x_mean))
        .collect())
}

pub const DEFAULT_BASE_LENGTH: f64 = 0.1;
const MIN_SAMPLES_PER_HALF: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct MpdResult {
    /// Mean segment depth of every full base length, in millimeters.
    pub segment_msd_mm: Vec<f64>,
    pub mpd_mm: f64,
}

/// Mean profile depth over consecutive base lengths of `base_length` meters.
pub fn mpd(profile: &Profile, base_length: f64) -> Result<MpdResult> {
    if !(base_length > 0.0) {
        return Err(Error::invalid("base length must be positive"));
    }
    let per_segment = (base_length / profile.spacing).round() as usize;
    if per_segment / 2 < MIN_SAMPLES_PER_HALF {
        return Err(Error::invalid(format!(
            "spacing {} m gives {} samples per half base length; at least {MIN_SAMPLES_PER_HALF} required",
            profile.spacing,
            per_segment / 2
        )));
    }
    let count = profile.len() / per_segment;
    if count == 0 {
        return Err(Error::invalid(format!(
            "profile of {} samples is shorter than one base length ({per_segment} samples)",
            profile.len()
        )));
    }
    let half = per_segment / 2;
    let mut msd = Vec::with_capacity(count);
    for chunk in profile.samples.chunks_exact(per_segment) {
        let residual = detrend_segment(chunk)?;
        let peak = |s: &[f64]| s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = residual.iter().sum::<f64>() / residual.len() as f64;
        let depth = 0.5 * (peak(&residual[..half]) + peak(&residual[half..])) - mean;
        msd.push(depth * 1000.0);
    }
    let mpd_mm = msd.iter().sum::<f64>() / msd.len() as f64;
    Ok(MpdResult {
        segment_msd_mm: msd,
        mpd_mm,
    })
}

/// Quarter-car parameters, normalized by sprung mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarterCar {
    /// Tire stiffness `kt/ms` (s⁻²).
    pub tire_stiffness: f64,
    /// Suspension stiffness `ks/ms` (s⁻²).
    pub suspension_stiffness: f64,
    /// Suspension damping `c/ms` (s⁻¹).
    pub damping: f64,
    /// Unsprung to sprung mass ratio.
    pub mass_ratio: f64,
    /// Simulated speed (m/s).
    pub speed: f64,
}

impl QuarterCar {
    /// The reference vehicle that defines IRI.
    pub const GOLDEN_CAR: QuarterCar = QuarterCar {
        tire_stiffness: 653.0,
        suspension_stiffness: 63.3,
        damping: 6.0,
        mass_ratio: 0.15,
        speed: 80.0 / 3.6,
    };

    /// State matrix for `[zs, żs, zu, żu]`.
    pub fn state_matrix(&self) -> Matrix4<f64> {
        let (k1, k2, c, mu) = (
            self.tire_stiffness,
            self.suspension_stiffness,
            self.damping,
            self.mass_ratio,
        );
        Matrix4::new(
            0.0, 1.0, 0.0, 0.0,
            -k2, -c, k2, c,
            0.0, 0.0, 0.0, 1.0,
            k2 / mu, c / mu, -(k1 + k2) / mu, -c / mu,
        )
    }

    /// Input matrix for a road elevation acting through the tire.
    pub fn input_vector(&self) -> Vector4<f64> {
        Vector4::new(0.0, 0.0, 0.0, self.tire_stiffness / self.mass_ratio)
    }
}

/// Reporting interval the profile is resampled to when finer.
pub const IRI_SAMPLE_INTERVAL: f64 = 0.25;
/// Coarsest accepted profile spacing.
pub const IRI_MAX_SPACING: f64 = 0.3;
/// Run-in length used to initialize the quarter car.
pub const IRI_INIT_LENGTH: f64 = 11.0;

/// Checks the IRI preconditions and resamples to the computation interval.
///
/// Shared by [`iri`] and the independent integrator in
/// [`crate::synthgen::iri_oracle`] so both consume identical input.
pub fn iri_input(profile: &Profile) -> Result<Profile> {
    if profile.spacing > IRI_MAX_SPACING * (1.0 + 1e-9) {
        return Err(Error::invalid(format!(
            "IRI needs spacing ≤ {IRI_MAX_SPACING} m, got {}",
            profile.spacing
        )));
    }
    if profile.length() < IRI_INIT_LENGTH * (1.0 - 1e-9) {
        return Err(Error::invalid(format!(
            "IRI needs at least {IRI_INIT_LENGTH} m of profile, got {:.3} m",
            profile.length()
        )));
    }
    if profile.spacing >= IRI_SAMPLE_INTERVAL * (1.0 - 1e-9) {
        return Ok(profile.clone());
    }
    let count = (profile.length() / IRI_SAMPLE_INTERVAL + 1e-9).floor() as usize + 1;
    let samples = (0..count)
        .map(|j| {
            let pos = j as f64 * IRI_SAMPLE_INTERVAL / profile.spacing;
            let i = (pos.floor() as usize).min(profile.len() - 2);
            let frac = pos - i as f64;
            profile.samples[i] * (1.0 - frac) + profile.samples[i + 1] * frac
        })
        .collect();
    Profile::new(samples, IRI_SAMPLE_INTERVAL, profile.start_chainage)
}

/// Initial slope over the run-in length.
pub fn iri_initial_slope(profile: &Profile) -> f64 {
    let i = ((IRI_INIT_LENGTH / profile.spacing).round() as usize).min(profile.len() - 1);
    (profile.samples[i] - profile.samples[0]) / (i as f64 * profile.spacing)
}

/// Rectified suspension slope per sample interval, in m/km.
#[derive(Debug, Clone, PartialEq)]
pub struct IriTrace {
    /// Interval length after resampling.
    pub spacing: f64,
    pub start_chainage: f64,
    /// `values[j]` belongs to the interval ending at
    /// `start_chainage + (j + 1)·spacing`.
    pub values: Vec<f64>,
}

impl IriTrace {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Mean over intervals ending in `(start, end]`.
    pub fn mean_between(&self, start: f64, end: f64) -> Option<f64> {
        let eps = 1e-9 * self.spacing;
        let (mut sum, mut n) = (0.0, 0usize);
        for (j, v) in self.values.iter().enumerate() {
            let at = self.start_chainage + (j + 1) as f64 * self.spacing;
            if at > start + eps && at <= end + eps {
                sum += v;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }
}

/// Runs the golden car over the profile with the exact zero-order-hold
/// state transition for each interval.
///
/// The input is the profile slope, so the states carry slope units and the
/// rectified output `|zs − zu|` is directly the suspension travel per unit
/// length.
pub fn iri_trace(profile: &Profile) -> Result<IriTrace> {
    let input = iri_input(profile)?;
    let car = QuarterCar::GOLDEN_CAR;
    let dx = input.spacing;
    let a = car.state_matrix();
    let transition = (a * (dx / car.speed)).exp();
    let a_inv = a.try_inverse().expect("quarter-car state matrix is invertible");
    let forcing = a_inv * (transition - Matrix4::identity()) * car.input_vector();

    let y0 = iri_initial_slope(&input);
    let mut z = Vector4::new(y0, 0.0, y0, 0.0);
    let values = input
        .samples
        .windows(2)
        .map(|w| {
            let slope = (w[1] - w[0]) / dx;
            z = transition * z + forcing * slope;
            (z[0] - z[2]).abs() * 1000.0
        })
        .collect();
    Ok(IriTrace {
        spacing: dx,
        start_chainage: input.start_chainage,
        values,
    })
}

/// International roughness index of the whole profile, in m/km.
pub fn iri(profile: &Profile) -> Result<f64> {
    Ok(iri_trace(profile)?.mean())
}

/// Elevations across the lane at one chainage.
#[derive(Debug, Clone, PartialEq)]
pub struct TransverseProfile {
    chainage: f64,
    offsets: Vec<f64>,
    elevations: Vec<f64>,
}

impl TransverseProfile {
    pub fn new(chainage: f64, offsets: Vec<f64>, elevations: Vec<f64>) -> Result<Self> {
        if offsets.len() != elevations.len() {
            return Err(Error::invalid("offsets and elevations differ in length"));
        }
        if offsets.len() < 2 {
            return Err(Error::invalid(
                "transverse profile needs at least 2 distinct lateral offsets",
            ));
        }
        if offsets.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(format!(
                "lateral offsets at chainage {chainage} must be strictly increasing"
            )));
        }
        if !chainage.is_finite() || elevations.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("transverse profile values must be finite"));
        }
        Ok(Self {
            chainage,
            offsets,
            elevations,
        })
    }

    pub fn chainage(&self) -> f64 {
        self.chainage
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn elevations(&self) -> &[f64] {
        &self.elevations
    }
}

/// Signed transverse slope in percent; positive when elevation rises with
/// lateral offset.
pub fn crossfall(tp: &TransverseProfile) -> f64 {
    let n = tp.offsets.len();
    let x = &tp.offsets;
    let y = &tp.elevations;
    if y.iter().all(|v| *v == y[0]) {
        return 0.0;
    }
    let x_mean = symmetric_sum(n, |i| x[i]) / n as f64;
    let y_mean = symmetric_sum(n, |i| y[i]) / n as f64;
    let sxy = symmetric_sum(n, |i| (x[i] - x_mean) * (y[i] - y_mean));
    let sxx = symmetric_sum(n, |i| (x[i] - x_mean) * (x[i] - x_mean));
    100.0 * sxy / sxx
}

/// Sums `f(i) + f(n−1−i)` pairs from the outside in. Reversing the index
/// order then reproduces every rounding step, so mirroring a profile flips
/// the crossfall sign exactly.
fn symmetric_sum(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    let mut total = 0.0;
    for i in 0..n / 2 {
        total += f(i) + f(n - 1 - i);
    }
    if n % 2 == 1 {
        total += f(n / 2);
    }
    total
}

/// Transverse profiles from georeferenced scan lines of a road along world
/// `x`: points sharing a timestamp form one line, its chainage is the mean
/// `x`, and only points with `|y| < lateral_limit` are kept.
pub fn transverse_profiles(points: &[ScanPoint], lateral_limit: f64) -> Result<Vec<TransverseProfile>> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < points.len() {
        let t = points[start].time;
        let mut end = start;
        while end < points.len() && points[end].time == t {
            end += 1;
        }
        let mut line: Vec<(f64, f64, f64)> = points[start..end]
            .iter()
            .filter(|p| p.point.y.abs() < lateral_limit)
            .map(|p| (p.point.x, p.point.y, p.point.z))
            .collect();
        line.sort_by(|a, b| a.1.total_cmp(&b.1));
        line.dedup_by(|a, b| a.1 == b.1);
        if line.len() >= 2 {
            let chainage = line.iter().map(|p| p.0).sum::<f64>() / line.len() as f64;
            out.push(TransverseProfile::new(
                chainage,
                line.iter().map(|p| p.1).collect(),
                line.iter().map(|p| p.2).collect(),
            )?);
        }
        start = end;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentMetric {
    pub chainage_start: f64,
    pub chainage_end: f64,
    /// m/km
    pub iri: f64,
    /// mm
    pub mpd: f64,
    /// Percent; `None` when no transverse profile falls in the segment.
    pub crossfall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentReport {
    pub segments: Vec<SegmentMetric>,
    /// Length of the trailing partial segment that was dropped.
    pub dropped_tail: f64,
}

pub const DEFAULT_SEGMENT_LENGTH: f64 = 20.0;

/// Aggregates IRI, MPD and crossfall over consecutive full segments.
///
/// The quarter car runs once over the whole profile; each segment averages
/// the intervals ending inside it. MPD is computed on the samples inside
/// each segment and crossfall averages the transverse profiles whose
/// chainage falls in `[start, end)`.
pub fn segment_metrics(
    longitudinal: &Profile,
    transverse: &[TransverseProfile],
    segment_length: f64,
) -> Result<SegmentReport> {
    if !(segment_length > 0.0) {
        return Err(Error::invalid("segment length must be positive"));
    }
    let covered = longitudinal.length();
    let count = (covered / segment_length + 1e-9).floor() as usize;
    if count == 0 {
        return Err(Error::invalid(format!(
            "profile covers {covered:.3} m, less than one {segment_length} m segment"
        )));
    }
    let trace = iri_trace(longitudinal)?;
    let start = longitudinal.start_chainage;

    let mut segments = Vec::with_capacity(count);
    for k in 0..count {
        let s0 = start + k as f64 * segment_length;
        let s1 = s0 + segment_length;
        let iri = trace
            .mean_between(s0, s1)
            .ok_or_else(|| Error::invalid(format!("no IRI intervals in segment [{s0}, {s1}]")))?;
        // The last segment also takes the sample sitting exactly on its end.
        let window_end = if k + 1 == count { s1 + 0.5 * longitudinal.spacing } else { s1 };
        let window = longitudinal
            .window(s0, window_end)
            .ok_or_else(|| Error::invalid(format!("segment [{s0}, {s1}] has no samples")))?;
        let mpd = mpd(&window, DEFAULT_BASE_LENGTH)?.mpd_mm;
        let slopes: Vec<f64> = transverse
            .iter()
            .filter(|t| t.chainage >= s0 && t.chainage < s1)
            .map(crossfall)
            .collect();
        let crossfall = (!slopes.is_empty()).then(|| slopes.iter().sum::<f64>() / slopes.len() as f64);
        segments.push(SegmentMetric {
            chainage_start: s0,
            chainage_end: s1,
            iri,
            mpd,
            crossfall,
        });
    }
    Ok(SegmentReport {
        segments,
        dropped_tail: covered - count as f64 * segment_length,
    })
}
