//! Simulated serial arm: forward kinematics, the geometric Jacobian and a
//! damped-least-squares velocity step with joint limits and a tabletop
//! clearance guard.
//!
//! Everything here is expressed in the robot base frame.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rotation_from_axis_angle, Direction, Plane, Pose, Vec3};
use crate::mapping::Twist;

/// Fingertip clearance below which downward motion is suppressed, m.
pub const TABLE_CLEARANCE: f64 = 0.01;
pub const DEFAULT_DAMPING: f64 = 0.01;
pub const MAX_DT: f64 = 0.1;
/// Height loss tolerated from linearization error while sliding along the table, m.
pub const GUARD_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("expected {expected} joint values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dt must be in (0, {MAX_DT}] s, got {0}")]
    InvalidDt(f64),
    #[error("damping must be positive")]
    InvalidDamping,
    #[error("solver produced non-finite joint velocities")]
    NonFinite,
    #[error("invalid arm model: {0}")]
    InvalidModel(String),
}

/// Revolute joint. `origin` places the joint frame relative to the previous
/// joint frame; the joint then rotates about `axis` (joint-frame coordinates).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub axis: Direction,
    pub origin: Pose,
    /// [min, max], rad
    pub limits: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub joints: Vec<Joint>,
    /// Flange pose relative to the last joint frame.
    pub eef_offset: Pose,
    /// Fingertip point in the flange frame, m.
    pub fingertip_offset: Vec3,
    /// A well-conditioned starting configuration, rad.
    pub home: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub q: Vec<f64>,
    /// Set when the clearance guard suppressed translation on the last step.
    pub halted: bool,
}

impl ArmState {
    pub fn new(q: Vec<f64>) -> Self {
        ArmState { q, halted: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kinematics {
    /// Pose of every joint frame (after its rotation), base frame.
    pub links: Vec<Pose>,
    pub eef: Pose,
    pub fingertip: Vec3,
}

impl ArmModel {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if self.joints.is_empty() {
            return Err(KinematicsError::InvalidModel("no joints".into()));
        }
        for j in &self.joints {
            if !(j.limits[0] < j.limits[1]) {
                return Err(KinematicsError::InvalidModel(format!("joint {} has empty limits", j.name)));
            }
        }
        if self.home.len() != self.dof() || !self.within_limits(&self.home) {
            return Err(KinematicsError::InvalidModel("home configuration outside limits".into()));
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.len() == self.dof() && self.joints.iter().zip(q).all(|(j, &v)| v >= j.limits[0] && v <= j.limits[1])
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (j, v) in self.joints.iter().zip(q.iter_mut()) {
            *v = v.clamp(j.limits[0], j.limits[1]);
        }
    }

    /// Sum of the link offset lengths, the straight-arm reach from the base.
    pub fn reach(&self) -> f64 {
        self.joints.iter().map(|j| j.origin.translation.norm()).sum::<f64>()
            + self.eef_offset.translation.norm()
    }

    pub fn home_state(&self) -> ArmState {
        ArmState::new(self.home.clone())
    }
}

fn check_len(model: &ArmModel, q: &[f64]) -> Result<(), KinematicsError> {
    if q.len() != model.dof() {
        return Err(KinematicsError::DimensionMismatch { expected: model.dof(), got: q.len() });
    }
    Ok(())
}

pub fn fk(model: &ArmModel, q: &[f64]) -> Result<Kinematics, KinematicsError> {
    check_len(model, q)?;
    let mut pose = Pose::identity();
    let mut links = Vec::with_capacity(model.dof());
    for (joint, &angle) in model.joints.iter().zip(q) {
        pose = pose.compose(&joint.origin);
        pose = Pose::new(pose.rotation.compose(&rotation_from_axis_angle(joint.axis, angle)), pose.translation);
        links.push(pose);
    }
    let eef = pose.compose(&model.eef_offset);
    let fingertip = eef.transform_point(&model.fingertip_offset);
    Ok(Kinematics { links, eef, fingertip })
}

/// Geometric Jacobian at the flange: rows 0..3 linear, 3..6 angular.
pub fn jacobian(model: &ArmModel, q: &[f64]) -> Result<DMatrix<f64>, KinematicsError> {
    let kin = fk(model, q)?;
    Ok(jacobian_from(model, &kin))
}

fn jacobian_from(model: &ArmModel, kin: &Kinematics) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(6, model.dof());
    for (i, (joint, link)) in model.joints.iter().zip(&kin.links).enumerate() {
        let z = link.rotation.apply(&joint.axis.vec());
        let lin = z.cross(&(kin.eef.translation - link.translation));
        j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
        j.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
    }
    j
}

/// Damped least squares: `q̇ = Jᵀ(JJᵀ + λ²I)⁻¹ ξ`.
pub fn dls_velocities(j: &DMatrix<f64>, twist: &Twist, damping: f64) -> Result<DVector<f64>, KinematicsError> {
    if !(damping > 0.0) {
        return Err(KinematicsError::InvalidDamping);
    }
    let xi = DVector::from_iterator(6, twist.linear.iter().chain(twist.angular.iter()).copied());
    let mut jjt = j * j.transpose();
    for i in 0..6 {
        jjt[(i, i)] += damping * damping;
    }
    let y = jjt.cholesky().ok_or(KinematicsError::NonFinite)?.solve(&xi);
    let qdot = j.transpose() * y;
    if !qdot.iter().all(|v| v.is_finite()) {
        return Err(KinematicsError::NonFinite);
    }
    Ok(qdot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IkConfig {
    pub damping: f64,
    /// Table plane in the base frame, if the clearance guard is active.
    pub table: Option<Plane>,
    pub min_clearance: f64,
}

impl Default for IkConfig {
    fn default() -> Self {
        IkConfig { damping: DEFAULT_DAMPING, table: None, min_clearance: TABLE_CLEARANCE }
    }
}

impl IkConfig {
    pub fn with_table(table: Plane) -> Self {
        IkConfig { table: Some(table), ..Default::default() }
    }
}

/// One velocity-level IK step. If the step would leave the fingertip closer
/// than `min_clearance` to the table while lowering it, the downward part of
/// the linear velocity is dropped for this tick and `halted` is set. Should
/// the remaining motion still lower the fingertip, all translation is
/// dropped.
pub fn ik_step(
    model: &ArmModel,
    state: &ArmState,
    twist: &Twist,
    dt: f64,
    cfg: &IkConfig,
) -> Result<ArmState, KinematicsError> {
    check_len(model, &state.q)?;
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(KinematicsError::InvalidDt(dt));
    }
    if !twist.is_finite() {
        return Err(KinematicsError::NonFinite);
    }
    let kin = fk(model, &state.q)?;
    let j = jacobian_from(model, &kin);
    let integrate = |tw: &Twist| -> Result<Vec<f64>, KinematicsError> {
        let qdot = dls_velocities(&j, tw, cfg.damping)?;
        let mut q: Vec<f64> = state.q.iter().zip(qdot.iter()).map(|(q, v)| q + v * dt).collect();
        model.clamp(&mut q);
        Ok(q)
    };
    let q = integrate(twist)?;
    if let Some(table) = &cfg.table {
        let before = table.signed_distance(&kin.fingertip);
        let after = table.signed_distance(&fk(model, &q)?.fingertip);
        if after < cfg.min_clearance && after < before {
            // drop the component toward the table; keep sliding along it
            let n = table.normal.vec();
            let vn = twist.linear.dot(&n);
            let sliding = Twist { linear: twist.linear - n * vn.min(0.0), angular: twist.angular };
            let q = integrate(&sliding)?;
            if table.signed_distance(&fk(model, &q)?.fingertip) >= before.min(cfg.min_clearance) - GUARD_SLACK {
                return Ok(ArmState { q, halted: true });
            }
            let rotation_only = Twist { linear: Vec3::zeros(), angular: twist.angular };
            return Ok(ArmState { q: integrate(&rotation_only)?, halted: true });
        }
    }
    Ok(ArmState { q, halted: false })
}

/// Iterates DLS steps until the fingertip reaches `target` (base frame).
/// Returns the final state and the remaining distance.
pub fn solve_fingertip_position(
    model: &ArmModel,
    start: &ArmState,
    target: &Vec3,
    iterations: usize,
    tolerance: f64,
) -> Result<(ArmState, f64), KinematicsError> {
    let mut state = start.clone();
    let cfg = IkConfig { damping: 0.05, ..Default::default() };
    let dt = MAX_DT;
    for _ in 0..iterations {
        let err = target - fk(model, &state.q)?.fingertip;
        if err.norm() < tolerance {
            return Ok((state, err.norm()));
        }
        let step = if err.norm() > 0.05 { err * (0.05 / err.norm()) } else { err };
        state = ik_step(model, &state, &Twist::linear(step / dt), dt, &cfg)?;
    }
    let err = (target - fk(model, &state.q)?.fingertip).norm();
    Ok((state, err))
}

/// Link offsets of [`default_arm`], m. The zero pose points straight up and
/// reaches `sum(DEFAULT_OFFSETS)` = 1.0 m above the base.
pub const DEFAULT_OFFSETS: [f64; 8] = [0.1, 0.2, 0.0, 0.3, 0.0, 0.3, 0.0, 0.1];

/// A 7-joint arm with alternating yaw/pitch axes (z, y, z, y, z, y, z).
/// Limits are ±170° except the elbow (joint 4), which bends one way only.
pub fn default_arm() -> ArmModel {
    let lim = 170f64.to_radians();
    let axes = [Direction::Z, Direction::Y, Direction::Z, Direction::Y, Direction::Z, Direction::Y, Direction::Z];
    let joints = axes
        .iter()
        .enumerate()
        .map(|(i, axis)| Joint {
            name: format!("joint{}", i + 1),
            axis: *axis,
            origin: Pose::from_translation(Vec3::new(0.0, 0.0, DEFAULT_OFFSETS[i])),
            limits: if i == 3 { [-0.1, 3.0] } else { [-lim, lim] },
        })
        .collect();
    ArmModel {
        joints,
        eef_offset: Pose::from_translation(Vec3::new(0.0, 0.0, DEFAULT_OFFSETS[7])),
        fingertip_offset: Vec3::new(0.0, 0.0, 0.02),
        // Flange pointing down, fingertip about 0.45 m in front of the base
        // and 0.2 m above the table.
        home: vec![0.0, 0.805, 0.0, 1.443, 0.0, 0.894, 0.0],
    }
}
