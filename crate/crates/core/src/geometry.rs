//! 3D value types shared by every other module: unit directions, rotations,
//! rigid poses, planes and the pinhole camera.
//!
//! Camera convention: the columns of a camera rotation are the camera axes in
//! the robot base frame, with x = image right, y = image up and z = backward.
//! The camera therefore looks along its local −z axis. Pixel coordinates
//! follow the usual raster convention (u grows right, v grows down), so image
//! "up" corresponds to decreasing v.

use nalgebra::{Matrix3, Matrix4, SymmetricEigen, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Unit-norm and orthonormality tolerance.
pub const UNIT_TOL: f64 = 1e-9;
/// Residual tolerance for the small linear solves.
pub const SOLVER_TOL: f64 = 1e-9;
/// Default half-angle of the degeneracy cones, degrees.
pub const DEGENERACY_CONE_DEG: f64 = 5.0;
/// Minimum depth in front of the camera for projection, meters.
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("vector is not unit length (norm {0})")]
    NotUnit(f64),
    #[error("zero-length vector")]
    ZeroVector,
    #[error("matrix is not a proper rotation")]
    NotRotation,
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("point is behind the camera (depth {depth} m)")]
    BehindCamera { depth: f64 },
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("non-finite value")]
    NonFinite,
}

/// A unit 3-vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Direction(Vec3);

impl Direction {
    pub const X: Direction = Direction(Vec3::new(1.0, 0.0, 0.0));
    pub const Y: Direction = Direction(Vec3::new(0.0, 1.0, 0.0));
    pub const Z: Direction = Direction(Vec3::new(0.0, 0.0, 1.0));

    /// Wraps `v`, which must already be unit length.
    pub fn new(v: Vec3) -> Result<Self, GeometryError> {
        if !v.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let n = v.norm();
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(GeometryError::NotUnit(n));
        }
        Ok(Direction(v))
    }

    pub fn normalize(v: Vec3) -> Result<Self, GeometryError> {
        if !v.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let n = v.norm();
        if n < 1e-12 {
            return Err(GeometryError::ZeroVector);
        }
        Ok(Direction(v / n))
    }

    pub fn vec(&self) -> Vec3 {
        self.0
    }

    pub fn dot(&self, v: &Vec3) -> f64 {
        self.0.dot(v)
    }
}

impl std::ops::Neg for Direction {
    type Output = Direction;
    fn neg(self) -> Direction {
        Direction(-self.0)
    }
}

impl TryFrom<[f64; 3]> for Direction {
    type Error = GeometryError;
    fn try_from(a: [f64; 3]) -> Result<Self, Self::Error> {
        Direction::new(Vec3::new(a[0], a[1], a[2]))
    }
}

impl From<Direction> for [f64; 3] {
    fn from(d: Direction) -> [f64; 3] {
        [d.0.x, d.0.y, d.0.z]
    }
}

/// A proper rotation matrix. Columns are the rotated frame's axes expressed
/// in the reference frame. Serialized row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct Rotation(Mat3);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Mat3::identity())
    }

    /// Validates orthonormality and det = +1.
    pub fn new(m: Mat3) -> Result<Self, GeometryError> {
        if !m.iter().all(|c| c.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let gram = m.transpose() * m - Mat3::identity();
        if gram.amax() > UNIT_TOL || (m.determinant() - 1.0).abs() > UNIT_TOL {
            return Err(GeometryError::NotRotation);
        }
        Ok(Rotation(m))
    }

    pub fn from_columns(x: Vec3, y: Vec3, z: Vec3) -> Result<Self, GeometryError> {
        Rotation::new(Mat3::from_columns(&[x, y, z]))
    }

    pub fn about_x(angle: f64) -> Self {
        rotation_from_axis_angle(Direction::X, angle)
    }

    pub fn about_y(angle: f64) -> Self {
        rotation_from_axis_angle(Direction::Y, angle)
    }

    pub fn about_z(angle: f64) -> Self {
        rotation_from_axis_angle(Direction::Z, angle)
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    /// Column `i` as a direction (the rotated frame's i-th axis).
    pub fn axis(&self, i: usize) -> Direction {
        Direction(self.0.column(i).into_owned())
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    /// Rotation angle in [0, π].
    pub fn angle(&self) -> f64 {
        self.to_axis_angle().1
    }

    /// Logarithm map. For the identity the axis is reported as +z.
    pub fn to_axis_angle(&self) -> (Direction, f64) {
        let m = &self.0;
        let vee = Vec3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
        let s = 0.5 * vee.norm();
        let c = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let angle = s.atan2(c);
        if angle < 1e-12 {
            return (Direction::Z, 0.0);
        }
        if c > 0.0 {
            return (Direction(vee / vee.norm()), angle);
        }
        // Near π the skew part vanishes; recover n nᵀ from the symmetric part.
        let sym = (m + m.transpose()) * 0.5 - Mat3::identity() * c;
        let outer = sym / (1.0 - c);
        let k = (0..3)
            .max_by(|&a, &b| outer[(a, a)].total_cmp(&outer[(b, b)]))
            .unwrap_or(0);
        let mut n = outer.column(k).into_owned();
        n /= n.norm();
        if n.dot(&vee) < 0.0 {
            n = -n;
        }
        (Direction(n), angle)
    }
}

impl TryFrom<[[f64; 3]; 3]> for Rotation {
    type Error = GeometryError;
    fn try_from(r: [[f64; 3]; 3]) -> Result<Self, Self::Error> {
        Rotation::new(Mat3::from_fn(|i, j| r[i][j]))
    }
}

impl From<Rotation> for [[f64; 3]; 3] {
    fn from(r: Rotation) -> Self {
        let m = r.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }
}

fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula.
pub fn rotation_from_axis_angle(axis: Direction, angle: f64) -> Rotation {
    let k = skew(&axis.0);
    let (s, c) = angle.sin_cos();
    Rotation(Mat3::identity() + k * s + k * k * (1.0 - c))
}

/// Closest rotation to `m` in the Frobenius norm (the orthogonal Procrustes
/// solution), computed from the dominant eigenvector of the 4×4 quaternion
/// form of `tr(Rᵀ m)`.
pub fn nearest_rotation(m: &Mat3) -> Result<Rotation, GeometryError> {
    if !m.iter().all(|c| c.is_finite()) {
        return Err(GeometryError::NonFinite);
    }
    let scale = m.norm();
    if scale < 1e-300 || (m.determinant() / scale.powi(3)).abs() < 1e-12 {
        return Err(GeometryError::SingularMatrix);
    }
    let s = m.transpose() / scale;
    let (sxx, sxy, sxz) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
    let (syx, syy, syz) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
    let (szx, szy, szz) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
    #[rustfmt::skip]
    let n = Matrix4::new(
        sxx + syy + szz, syz - szy,        szx - sxz,        sxy - syx,
        syz - szy,       sxx - syy - szz,  sxy + syx,        szx + sxz,
        szx - sxz,       sxy + syx,        -sxx + syy - szz, syz + szy,
        sxy - syx,       szx + sxz,        syz + szy,        -sxx - syy + szz,
    );
    let eig = SymmetricEigen::new(n);
    let best = eig.eigenvalues.imax();
    let q = eig.eigenvectors.column(best);
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    #[rustfmt::skip]
    let r = Mat3::new(
        w * w + x * x - y * y - z * z, 2.0 * (x * y - w * z),         2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),         w * w - x * x + y * y - z * z, 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),         2.0 * (y * z + w * x),         w * w - x * x - y * y + z * z,
    );
    Ok(Rotation(r / (w * w + x * x + y * y + z * z)))
}

/// Unsigned angle between two nonzero vectors, in [0, π].
pub fn angle_between(u: &Vec3, v: &Vec3) -> Result<f64, GeometryError> {
    if u.norm() < 1e-300 || v.norm() < 1e-300 {
        return Err(GeometryError::ZeroVector);
    }
    Ok(u.cross(v).norm().atan2(u.dot(v)))
}

/// Rigid transform: `p_ref = rotation · p_local + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Pose { rotation: Rotation::identity(), translation: Vec3::zeros() }
    }

    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Pose { rotation, translation }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Pose { rotation: Rotation::identity(), translation: t }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(p) + self.translation
    }

    pub fn inverse_transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.transpose().apply(&(p - self.translation))
    }

    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.transform_point(&other.translation),
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose { rotation: rt, translation: -rt.apply(&self.translation) }
    }

    /// Camera pose at `eye` looking at `target`, with image up as close to
    /// `up` as possible. Fails when the viewing direction is parallel to `up`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Pose, GeometryError> {
        let forward = Direction::normalize(target - eye)?.vec();
        let right = Direction::normalize(forward.cross(&up))?.vec();
        let cam_up = right.cross(&forward);
        let rotation = Rotation::new(Mat3::from_columns(&[right, cam_up, -forward]))
            .map_err(|_| GeometryError::NotRotation)?;
        Ok(Pose { rotation, translation: eye })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub point: Vec3,
    pub normal: Direction,
}

impl Plane {
    pub fn new(point: Vec3, normal: Direction) -> Self {
        Plane { point, normal }
    }

    /// Height of `p` above the plane along its normal.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(&(p - self.point))
    }

    pub fn project(&self, p: &Vec3) -> Vec3 {
        p - self.normal.vec() * self.signed_distance(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    /// Focal length, pixels.
    pub focal: f64,
    /// Principal point (u, v), pixels.
    pub principal: [f64; 2],
    /// Image width and height, pixels.
    pub size: [u32; 2],
}

impl CameraIntrinsics {
    pub fn new(focal: f64, principal: [f64; 2], size: [u32; 2]) -> Result<Self, GeometryError> {
        let k = CameraIntrinsics { focal, principal, size };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.focal > 0.0 && self.focal.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("focal length must be positive"));
        }
        let [u, v] = self.principal;
        if !(u >= 0.0 && v >= 0.0 && u <= self.size[0] as f64 && v <= self.size[1] as f64) {
            return Err(GeometryError::InvalidIntrinsics("principal point outside image"));
        }
        Ok(())
    }

    pub fn principal_point(&self) -> Vec2 {
        Vec2::new(self.principal[0], self.principal[1])
    }
}

/// Depth of `p` in front of the camera (positive along the viewing direction).
pub fn camera_depth(camera: &Pose, p: &Vec3) -> f64 {
    -camera.inverse_transform_point(p).z
}

/// Pinhole projection of the world point `p` to pixel coordinates.
pub fn project_point(camera: &Pose, k: &CameraIntrinsics, p: &Vec3) -> Result<Vec2, GeometryError> {
    let pc = camera.inverse_transform_point(p);
    let depth = -pc.z;
    if !(depth > MIN_DEPTH) {
        return Err(GeometryError::BehindCamera { depth });
    }
    Ok(Vec2::new(
        k.principal[0] + k.focal * pc.x / depth,
        k.principal[1] - k.focal * pc.y / depth,
    ))
}
