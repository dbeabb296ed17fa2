//! Camera/LiDAR calibration from 3D↔2D point correspondences.
//!
//! The pipeline is the classical one:
//!
//! 1. [`normalize_points`] centres both point sets and divides every axis by
//!    its standard deviation,
//! 2. [`dlt_estimate`] stacks two homogeneous equations per correspondence
//!    and takes the right-singular vector of the smallest singular value,
//! 3. [`denormalize`] undoes the conditioning transforms,
//! 4. [`lm_refine`] minimises the pixel reprojection error with
//!    Levenberg-Marquardt, optionally adding radial distortion.
//!
//! [`calibrate`] runs all four stages.

use nalgebra::{
    DMatrix, DVector, Matrix3, Matrix3x4, Matrix4, Point, Rotation3, Vector3, Vector4, SVD,
};

use crate::camera::{PixelPoint, RadialDistortion, RigidExtrinsics, WorldPoint};
use crate::error::{Error, Result};
use crate::lm::{self, LeastSquaresProblem, LmConfig, Termination};

/// Minimum number of correspondences for the 11-DOF projective camera.
pub const MIN_CORRESPONDENCES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub world: WorldPoint,
    pub pixel: PixelPoint,
}

impl Correspondence {
    pub fn new(world: WorldPoint, pixel: PixelPoint) -> Self {
        Self { world, pixel }
    }

    fn is_finite(&self) -> bool {
        self.world.iter().chain(self.pixel.iter()).all(|v| v.is_finite())
    }
}

/// A 3×4 camera matrix, stored with unit Frobenius norm.
///
/// `α·[u, v, 1]ᵀ = H·[x, y, z, 1]ᵀ`; the scale `α` is gauge freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionMatrix(Matrix3x4<f64>);

impl ProjectionMatrix {
    pub fn new(m: Matrix3x4<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("projection matrix must be finite"));
        }
        let norm = m.norm();
        if norm == 0.0 {
            return Err(Error::invalid("projection matrix is zero"));
        }
        Ok(Self(m / norm))
    }

    /// `K·[R | t]`.
    pub fn from_camera(k: &Matrix3<f64>, pose: &RigidExtrinsics) -> Result<Self> {
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(pose.rotation());
        rt.set_column(3, pose.translation());
        Self::new(k * rt)
    }

    pub fn matrix(&self) -> &Matrix3x4<f64> {
        &self.0
    }

    /// Homogeneous projection; returns the pixel and the third homogeneous
    /// coordinate (positive for points in front of the camera).
    pub fn project(&self, w: &WorldPoint) -> (PixelPoint, f64) {
        let h = self.0 * w.to_homogeneous();
        (PixelPoint::new(h.x / h.z, h.y / h.z), h.z)
    }

    /// `1 − |⟨a, b⟩|` for the unit-norm entries; zero iff the matrices are
    /// proportional.
    pub fn cosine_distance(&self, other: &ProjectionMatrix) -> f64 {
        let dot = self.0.dot(&other.0) / (self.0.norm() * other.0.norm());
        1.0 - dot.abs()
    }

    /// Splits `H = λ·K·[R | t]` with `K` upper triangular, `K₃₃ = 1`,
    /// positive diagonal, and `R` a proper rotation.
    pub fn decompose(&self) -> Result<CameraDecomposition> {
        let m: Matrix3<f64> = self.0.fixed_view::<3, 3>(0, 0).into_owned();
        let det = m.determinant();
        if det.abs() < 1e-300 {
            return Err(Error::Degenerate(
                "left 3×3 block of the projection matrix is singular".into(),
            ));
        }
        if det < 0.0 {
            return Err(Error::Degenerate(
                "projection matrix has negative orientation for points in front of the camera"
                    .into(),
            ));
        }
        let (k, r) = rq3(&m);
        let k_inv = k
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("intrinsic block is singular".into()))?;
        let t = k_inv * self.0.column(3);
        let scale = k[(2, 2)];
        let pose = RigidExtrinsics::new(r, t)?;
        Ok(CameraDecomposition {
            intrinsics: k / scale,
            pose,
            scale,
        })
    }
}

/// Result of [`ProjectionMatrix::decompose`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraDecomposition {
    /// Upper-triangular `K` with `K₃₃ = 1`; `K₁₂` is the skew.
    pub intrinsics: Matrix3<f64>,
    pub pose: RigidExtrinsics,
    pub scale: f64,
}

/// RQ decomposition of a 3×3 matrix with positive diagonal on `R`'s
/// triangular factor. Returns `(upper, orthogonal)`.
fn rq3(m: &Matrix3<f64>) -> (Matrix3<f64>, Matrix3<f64>) {
    let flip = Matrix3::new(0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0);
    let qr = (flip * m).transpose().qr();
    let (q, u) = (qr.q(), qr.r());
    let mut upper = flip * u.transpose() * flip;
    let mut orth = flip * q.transpose();
    for i in 0..3 {
        if upper[(i, i)] < 0.0 {
            upper.column_mut(i).neg_mut();
            orth.row_mut(i).neg_mut();
        }
    }
    (upper, orth)
}

/// Conditioning transform `p ↦ (p − mean) / scale`, applied per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationTransform<const D: usize> {
    pub mean: [f64; D],
    pub scale: [f64; D],
}

impl<const D: usize> NormalizationTransform<D> {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; D],
            scale: [1.0; D],
        }
    }

    pub fn apply(&self, p: &Point<f64, D>) -> Point<f64, D> {
        let mut out = *p;
        for i in 0..D {
            out[i] = (p[i] - self.mean[i]) / self.scale[i];
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self
            .scale
            .iter()
            .any(|s| !(s.is_finite() && *s > 0.0))
            || self.mean.iter().any(|m| !m.is_finite())
        {
            return Err(Error::Degenerate(
                "normalization transform is singular".into(),
            ));
        }
        Ok(())
    }

    /// Homogeneous `(D+1)×(D+1)` matrix of the forward transform.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut t = DMatrix::identity(D + 1, D + 1);
        for i in 0..D {
            t[(i, i)] = 1.0 / self.scale[i];
            t[(i, D)] = -self.mean[i] / self.scale[i];
        }
        t
    }

    /// Homogeneous matrix of the inverse transform.
    pub fn inverse_matrix(&self) -> DMatrix<f64> {
        let mut t = DMatrix::identity(D + 1, D + 1);
        for i in 0..D {
            t[(i, i)] = self.scale[i];
            t[(i, D)] = self.mean[i];
        }
        t
    }
}

/// Translates to zero mean and scales every axis to unit (population)
/// standard deviation. Axes with zero variance are left unscaled.
pub fn normalize_points<const D: usize>(
    points: &[Point<f64, D>],
) -> Result<(Vec<Point<f64, D>>, NormalizationTransform<D>)> {
    if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("points must be finite"));
    }
    let first = points
        .first()
        .ok_or_else(|| Error::invalid("need at least 2 distinct points, got none"))?;
    if points.iter().all(|p| p == first) {
        return Err(Error::invalid("need at least 2 distinct points"));
    }
    let n = points.len() as f64;
    let mut transform = NormalizationTransform::<D>::identity();
    for axis in 0..D {
        let mean = points.iter().map(|p| p[axis]).sum::<f64>() / n;
        let var = points.iter().map(|p| (p[axis] - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        transform.mean[axis] = mean;
        transform.scale[axis] = if sd > 0.0 { sd } else { 1.0 };
    }
    let normalized = points.iter().map(|p| transform.apply(p)).collect();
    Ok((normalized, transform))
}

fn check_world_geometry(corrs: &[Correspondence]) -> Result<()> {
    let n = corrs.len() as f64;
    let centroid = corrs.iter().map(|c| c.world.coords).sum::<Vector3<f64>>() / n;
    let scatter = corrs.iter().fold(Matrix3::zeros(), |acc, c| {
        let d = c.world.coords - centroid;
        acc + d * d.transpose()
    });
    let mut eig = scatter.symmetric_eigenvalues().map(|v| v.max(0.0).sqrt());
    eig.as_mut_slice()
        .sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let (largest, middle, smallest) = (eig[0], eig[1], eig[2]);
    if largest == 0.0 {
        return Err(Error::Degenerate("all world points coincide".into()));
    }
    if middle <= 1e-9 * largest {
        return Err(Error::Degenerate("world points are collinear".into()));
    }
    if smallest <= 1e-9 * largest {
        return Err(Error::Degenerate(
            "world points are coplanar; the 3D DLT needs non-planar structure".into(),
        ));
    }
    Ok(())
}

fn design_matrix(corrs: &[Correspondence]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(2 * corrs.len(), 12);
    for (i, c) in corrs.iter().enumerate() {
        let x = c.world.to_homogeneous();
        let (u, v) = (c.pixel.x, c.pixel.y);
        for j in 0..4 {
            a[(2 * i, j)] = x[j];
            a[(2 * i, 8 + j)] = -u * x[j];
            a[(2 * i + 1, 4 + j)] = x[j];
            a[(2 * i + 1, 8 + j)] = -v * x[j];
        }
    }
    a
}

/// Direct linear transform on the correspondences as given (no internal
/// conditioning; see [`dlt_normalized`]).
pub fn dlt_estimate(corrs: &[Correspondence]) -> Result<ProjectionMatrix> {
    if corrs.len() < MIN_CORRESPONDENCES {
        return Err(Error::invalid(format!(
            "DLT needs at least {MIN_CORRESPONDENCES} correspondences, got {}",
            corrs.len()
        )));
    }
    if !corrs.iter().all(Correspondence::is_finite) {
        return Err(Error::invalid("correspondences must be finite"));
    }
    check_world_geometry(corrs)?;

    let svd = SVD::new(design_matrix(corrs), false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let largest = svd.singular_values[order[order.len() - 1]];
    if svd.singular_values[order[1]] <= 1e-12 * largest {
        return Err(Error::Degenerate(
            "design matrix has a null space of dimension > 1".into(),
        ));
    }
    let h = v_t.row(order[0]);
    let mut m = Matrix3x4::from_row_slice(h.transpose().as_slice());

    let centroid = corrs.iter().map(|c| c.world.coords).sum::<Vector3<f64>>()
        / corrs.len() as f64;
    if m.row(2).dot(&centroid.push(1.0).transpose()) < 0.0 {
        m.neg_mut();
    }
    ProjectionMatrix::new(m)
}

/// Maps a projection estimated on normalized data back to raw coordinates:
/// `P = T₂⁻¹ · P_norm · T₃`.
pub fn denormalize(
    normalized: &ProjectionMatrix,
    pixel_transform: &NormalizationTransform<2>,
    world_transform: &NormalizationTransform<3>,
) -> Result<ProjectionMatrix> {
    pixel_transform.validate()?;
    world_transform.validate()?;
    let t2_inv: Matrix3<f64> = pixel_transform.inverse_matrix().fixed_view::<3, 3>(0, 0).into_owned();
    let t3: Matrix4<f64> = world_transform.matrix().fixed_view::<4, 4>(0, 0).into_owned();
    ProjectionMatrix::new(t2_inv * normalized.matrix() * t3)
}

/// Normalize → DLT → denormalize.
pub fn dlt_normalized(corrs: &[Correspondence]) -> Result<ProjectionMatrix> {
    let (normalized, t2, t3) = normalize_correspondences(corrs)?;
    let p = dlt_estimate(&normalized)?;
    denormalize(&p, &t2, &t3)
}

type NormalizedSet = (
    Vec<Correspondence>,
    NormalizationTransform<2>,
    NormalizationTransform<3>,
);

fn normalize_correspondences(corrs: &[Correspondence]) -> Result<NormalizedSet> {
    let pixels: Vec<PixelPoint> = corrs.iter().map(|c| c.pixel).collect();
    let worlds: Vec<WorldPoint> = corrs.iter().map(|c| c.world).collect();
    let (np, t2) = normalize_points(&pixels)?;
    let (nw, t3) = normalize_points(&worlds)?;
    let normalized = nw
        .into_iter()
        .zip(np)
        .map(|(w, p)| Correspondence::new(w, p))
        .collect();
    Ok((normalized, t2, t3))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReprojectionReport {
    /// `sqrt(mean(‖residual‖²))` in pixels.
    pub rms: f64,
    pub max: f64,
    /// Correspondences whose projected depth is zero or negative. Their
    /// residuals are still included in the statistics.
    pub non_positive_depth: usize,
}

pub fn reprojection_error(
    projection: &ProjectionMatrix,
    corrs: &[Correspondence],
) -> Result<ReprojectionReport> {
    report_from(corrs, |w| projection.project(w))
}

fn report_from(
    corrs: &[Correspondence],
    mut project: impl FnMut(&WorldPoint) -> (PixelPoint, f64),
) -> Result<ReprojectionReport> {
    if corrs.is_empty() {
        return Err(Error::invalid("no correspondences"));
    }
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    let mut behind = 0;
    for c in corrs {
        let (p, depth) = project(&c.world);
        if !(depth > 0.0) {
            behind += 1;
        }
        let e2 = (p - c.pixel).norm_squared();
        sum += e2;
        max = max.max(e2.sqrt());
    }
    Ok(ReprojectionReport {
        rms: (sum / corrs.len() as f64).sqrt(),
        max,
        non_positive_depth: behind,
    })
}

/// Pinhole camera with a general upper-triangular `K` (including skew) and
/// radial distortion; the model refined when distortion is enabled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortedCamera {
    pub intrinsics: Matrix3<f64>,
    pub pose: RigidExtrinsics,
    pub distortion: RadialDistortion,
}

impl DistortedCamera {
    pub fn project(&self, w: &WorldPoint) -> (PixelPoint, f64) {
        let c = self.pose.transform_point(w);
        let (x, y) = (c.x / c.z, c.y / c.z);
        let s = self.distortion.scale(x * x + y * y);
        let (xd, yd) = (s * x, s * y);
        let k = &self.intrinsics;
        (
            PixelPoint::new(
                k[(0, 0)] * xd + k[(0, 1)] * yd + k[(0, 2)],
                k[(1, 1)] * yd + k[(1, 2)],
            ),
            c.z,
        )
    }

    pub fn projection_matrix(&self) -> Result<ProjectionMatrix> {
        ProjectionMatrix::from_camera(&self.intrinsics, &self.pose)
    }

    pub fn reprojection_error(&self, corrs: &[Correspondence]) -> Result<ReprojectionReport> {
        report_from(corrs, |w| self.project(w))
    }
}

/// LM over the 12 entries of `H`, renormalized to unit Frobenius norm after
/// every step.
pub struct ProjectionProblem<'a> {
    corrs: &'a [Correspondence],
}

impl<'a> ProjectionProblem<'a> {
    pub const TANGENT_DIM: usize = 12;

    pub fn new(corrs: &'a [Correspondence]) -> Self {
        Self { corrs }
    }
}

impl LeastSquaresProblem for ProjectionProblem<'_> {
    type State = ProjectionMatrix;

    fn residuals(&self, p: &ProjectionMatrix) -> DVector<f64> {
        let mut r = DVector::zeros(2 * self.corrs.len());
        for (i, c) in self.corrs.iter().enumerate() {
            let (q, _) = p.project(&c.world);
            r[2 * i] = q.x - c.pixel.x;
            r[2 * i + 1] = q.y - c.pixel.y;
        }
        r
    }

    fn jacobian(&self, p: &ProjectionMatrix) -> DMatrix<f64> {
        let m = p.matrix();
        let mut jac = DMatrix::zeros(2 * self.corrs.len(), 12);
        for (i, c) in self.corrs.iter().enumerate() {
            let x: Vector4<f64> = c.world.to_homogeneous();
            let h = m * x;
            let (u, v, w) = (h.x / h.z, h.y / h.z, h.z);
            for j in 0..4 {
                jac[(2 * i, j)] = x[j] / w;
                jac[(2 * i, 8 + j)] = -u * x[j] / w;
                jac[(2 * i + 1, 4 + j)] = x[j] / w;
                jac[(2 * i + 1, 8 + j)] = -v * x[j] / w;
            }
        }
        jac
    }

    fn retract(&self, p: &ProjectionMatrix, delta: &DVector<f64>) -> ProjectionMatrix {
        let step = Matrix3x4::from_row_slice(delta.as_slice());
        let m = p.matrix() + step;
        let norm = m.norm();
        ProjectionMatrix(m / norm)
    }
}

/// LM over `(fx, skew, cx, fy, cy, ω, t, k1, k2, k3)` where `ω` is a local
/// rotation increment, `R ← R·exp([ω]×)`.
pub struct CameraProblem<'a> {
    corrs: &'a [Correspondence],
}

impl<'a> CameraProblem<'a> {
    pub const TANGENT_DIM: usize = 14;

    pub fn new(corrs: &'a [Correspondence]) -> Self {
        Self { corrs }
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

impl LeastSquaresProblem for CameraProblem<'_> {
    type State = DistortedCamera;

    fn residuals(&self, cam: &DistortedCamera) -> DVector<f64> {
        let mut r = DVector::zeros(2 * self.corrs.len());
        for (i, c) in self.corrs.iter().enumerate() {
            let (q, _) = cam.project(&c.world);
            r[2 * i] = q.x - c.pixel.x;
            r[2 * i + 1] = q.y - c.pixel.y;
        }
        r
    }

    fn jacobian(&self, cam: &DistortedCamera) -> DMatrix<f64> {
        let k = &cam.intrinsics;
        let (fx, sk, fy) = (k[(0, 0)], k[(0, 1)], k[(1, 1)]);
        let rot = cam.pose.rotation();
        let d = &cam.distortion;
        let mut jac = DMatrix::zeros(2 * self.corrs.len(), Self::TANGENT_DIM);
        for (i, c) in self.corrs.iter().enumerate() {
            let pc = cam.pose.transform_point(&c.world);
            let z = pc.z;
            let (x, y) = (pc.x / z, pc.y / z);
            let r2 = x * x + y * y;
            let s = d.scale(r2);
            let ds = d.scale_derivative(r2);
            let (xd, yd) = (s * x, s * y);

            // Intrinsics.
            let (ru, rv) = (2 * i, 2 * i + 1);
            jac[(ru, 0)] = xd;
            jac[(ru, 1)] = yd;
            jac[(ru, 2)] = 1.0;
            jac[(rv, 3)] = yd;
            jac[(rv, 4)] = 1.0;

            // d(xd, yd)/d(x, y)
            let dxd_dx = s + 2.0 * x * x * ds;
            let dxd_dy = 2.0 * x * y * ds;
            let dyd_dx = dxd_dy;
            let dyd_dy = s + 2.0 * y * y * ds;
            let du_dxy = [fx * dxd_dx + sk * dyd_dx, fx * dxd_dy + sk * dyd_dy];
            let dv_dxy = [fy * dyd_dx, fy * dyd_dy];

            // d(x, y)/d(camera point)
            let dx_dc = Vector3::new(1.0 / z, 0.0, -x / z);
            let dy_dc = Vector3::new(0.0, 1.0 / z, -y / z);
            let du_dc = dx_dc * du_dxy[0] + dy_dc * du_dxy[1];
            let dv_dc = dx_dc * dv_dxy[0] + dy_dc * dv_dxy[1];

            // d(camera point)/dω = −R·[X]×, d/dt = I
            let dc_dw = -(rot * skew(&c.world.coords));
            let du_dw = dc_dw.transpose() * du_dc;
            let dv_dw = dc_dw.transpose() * dv_dc;
            for j in 0..3 {
                jac[(ru, 5 + j)] = du_dw[j];
                jac[(rv, 5 + j)] = dv_dw[j];
                jac[(ru, 8 + j)] = du_dc[j];
                jac[(rv, 8 + j)] = dv_dc[j];
            }

            // Distortion coefficients: d(xd)/dk_n = x·r^(2n).
            let powers = [r2, r2 * r2, r2 * r2 * r2];
            for (j, pw) in powers.iter().enumerate() {
                jac[(ru, 11 + j)] = (fx * x + sk * y) * pw;
                jac[(rv, 11 + j)] = fy * y * pw;
            }
        }
        jac
    }

    fn retract(&self, cam: &DistortedCamera, delta: &DVector<f64>) -> DistortedCamera {
        let mut k = cam.intrinsics;
        k[(0, 0)] += delta[0];
        k[(0, 1)] += delta[1];
        k[(0, 2)] += delta[2];
        k[(1, 1)] += delta[3];
        k[(1, 2)] += delta[4];
        let omega = Vector3::new(delta[5], delta[6], delta[7]);
        let rotation = cam.pose.rotation() * Rotation3::new(omega).into_inner();
        let translation = cam.pose.translation() + Vector3::new(delta[8], delta[9], delta[10]);
        let pose = RigidExtrinsics::new(rotation, translation)
            .unwrap_or_else(|_| orthonormalized(rotation, translation));
        DistortedCamera {
            intrinsics: k,
            pose,
            distortion: RadialDistortion {
                k1: cam.distortion.k1 + delta[11],
                k2: cam.distortion.k2 + delta[12],
                k3: cam.distortion.k3 + delta[13],
            },
        }
    }
}

fn orthonormalized(rotation: Matrix3<f64>, translation: Vector3<f64>) -> RigidExtrinsics {
    let r = Rotation3::from_matrix(&rotation).into_inner();
    RigidExtrinsics::new(r, translation).expect("re-orthonormalized rotation")
}

#[derive(Debug, Clone)]
pub struct CalibrationResult {
    /// Final projection `K·[R | t]`; excludes distortion.
    pub projection: ProjectionMatrix,
    /// Present when distortion refinement was requested.
    pub camera: Option<DistortedCamera>,
    /// RMS of the projection handed to the refinement.
    pub initial_rms: f64,
    pub rms_error: f64,
    /// Accepted LM steps.
    pub iterations: usize,
    /// Sum of squared residuals after every accepted step.
    pub cost_history: Vec<f64>,
    pub termination: Termination,
}

impl CalibrationResult {
    pub fn distortion(&self) -> Option<RadialDistortion> {
        self.camera.map(|c| c.distortion)
    }

    pub fn project(&self, w: &WorldPoint) -> (PixelPoint, f64) {
        match &self.camera {
            Some(cam) => cam.project(w),
            None => self.projection.project(w),
        }
    }
}

/// Refines `initial` with default solver settings.
pub fn lm_refine(
    initial: &ProjectionMatrix,
    corrs: &[Correspondence],
    refine_distortion: bool,
) -> Result<CalibrationResult> {
    lm_refine_with(initial, corrs, refine_distortion, &LmConfig::default())
}

pub fn lm_refine_with(
    initial: &ProjectionMatrix,
    corrs: &[Correspondence],
    refine_distortion: bool,
    config: &LmConfig,
) -> Result<CalibrationResult> {
    if corrs.len() < MIN_CORRESPONDENCES {
        return Err(Error::invalid(format!(
            "refinement needs at least {MIN_CORRESPONDENCES} correspondences, got {}",
            corrs.len()
        )));
    }
    if !corrs.iter().all(Correspondence::is_finite) {
        return Err(Error::invalid("correspondences must be finite"));
    }
    let initial_rms = reprojection_error(initial, corrs)?.rms;

    if refine_distortion {
        let dec = initial.decompose()?;
        let start = DistortedCamera {
            intrinsics: dec.intrinsics,
            pose: dec.pose,
            distortion: RadialDistortion::NONE,
        };
        let report = lm::minimize(&CameraProblem::new(corrs), start, config)?;
        let cam = report.state;
        let rms = cam.reprojection_error(corrs)?.rms;
        if rms <= initial_rms {
            return Ok(CalibrationResult {
                projection: cam.projection_matrix()?,
                camera: Some(cam),
                initial_rms,
                rms_error: rms,
                iterations: report.iterations,
                cost_history: report.cost_history,
                termination: report.termination,
            });
        }
        // Rounding in the decomposition left the start marginally worse than
        // `initial`; keep the undistorted input.
        return Ok(CalibrationResult {
            projection: *initial,
            camera: Some(DistortedCamera {
                distortion: RadialDistortion::NONE,
                ..start
            }),
            initial_rms,
            rms_error: initial_rms,
            iterations: 0,
            cost_history: vec![initial_rms.powi(2) * corrs.len() as f64],
            termination: report.termination,
        });
    }

    let report = lm::minimize(&ProjectionProblem::new(corrs), *initial, config)?;
    let rms = reprojection_error(&report.state, corrs)?.rms;
    Ok(CalibrationResult {
        projection: report.state,
        camera: None,
        initial_rms,
        rms_error: rms,
        iterations: report.iterations,
        cost_history: report.cost_history,
        termination: report.termination,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CalibrationConfig {
    pub refine_distortion: bool,
    pub solver: LmConfig,
}

/// Normalize → DLT → denormalize → LM refinement.
///
/// Errors are tagged with the failing stage name.
pub fn calibrate(corrs: &[Correspondence], config: &CalibrationConfig) -> Result<CalibrationResult> {
    let (normalized, t2, t3) =
        normalize_correspondences(corrs).map_err(|e| e.in_stage("normalization"))?;
    let p_norm = dlt_estimate(&normalized).map_err(|e| e.in_stage("dlt"))?;
    let p0 = denormalize(&p_norm, &t2, &t3).map_err(|e| e.in_stage("denormalization"))?;
    lm_refine_with(&p0, corrs, config.refine_distortion, &config.solver)
        .map_err(|e| e.in_stage("refinement"))
}
