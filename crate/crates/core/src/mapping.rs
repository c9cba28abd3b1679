//! Device input to end-effector twist.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::ControlFrame;
use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MappingError {
    #[error("input has {input} translational axes but the frame maps {frame}")]
    DimensionMismatch { input: usize, frame: usize },
    #[error("wheel input given but the frame has no wheel axis")]
    NoWheelAxis,
    #[error("rotational input on a 2D device")]
    RotationOn2DDevice,
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("invalid mapping config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// Device motion over a tick is mapped to end-effector velocity.
    Position,
    /// Device displacement from its origin is mapped to end-effector velocity.
    Rate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MappingConfig {
    pub mode: ControlMode,
    /// Dimensionless in position mode, 1/s in rate mode.
    pub translation_scale: f64,
    pub rotation_scale: f64,
    /// Meters per wheel detent.
    pub wheel_step: f64,
    /// Linear speed limit, m/s.
    pub speed_cap: f64,
}

impl Default for MappingConfig {
    fn default() -> Self {
        MappingConfig {
            mode: ControlMode::Position,
            translation_scale: 1.0,
            rotation_scale: 1.0,
            wheel_step: 0.01,
            speed_cap: 0.5,
        }
    }
}

impl MappingConfig {
    pub fn validate(&self) -> Result<(), MappingError> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.translation_scale) || !positive(self.rotation_scale) {
            return Err(MappingError::InvalidConfig("scales must be positive"));
        }
        if !positive(self.wheel_step) {
            return Err(MappingError::InvalidConfig("wheel_step must be positive"));
        }
        if !positive(self.speed_cap) {
            return Err(MappingError::InvalidConfig("speed_cap must be positive"));
        }
        Ok(())
    }
}

/// One tick of user input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceInput {
    /// Position mode: device motion over the tick, m. Rate mode: displacement
    /// from the device origin, m.
    pub translation: Vec<f64>,
    /// Scaled-axis rotation, rad (spatial devices only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotation: Option<[f64; 3]>,
    /// Scroll wheel detents (fractional allowed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wheel: Option<f64>,
    /// Tick length, s.
    pub dt: f64,
    #[serde(default)]
    pub clutched: bool,
}

impl DeviceInput {
    pub fn translation(translation: &[f64], dt: f64) -> Self {
        DeviceInput { translation: translation.to_vec(), rotation: None, wheel: None, dt, clutched: false }
    }

    pub fn with_wheel(mut self, detents: f64) -> Self {
        self.wheel = Some(detents);
        self
    }

    pub fn clutched(mut self) -> Self {
        self.clutched = true;
        self
    }

    pub fn idle(dims: usize, dt: f64) -> Self {
        DeviceInput::translation(&vec![0.0; dims], dt)
    }
}

/// End-effector velocity in the robot base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    /// m/s
    pub linear: Vec3,
    /// rad/s
    pub angular: Vec3,
}

impl Twist {
    pub fn zero() -> Self {
        Twist { linear: Vec3::zeros(), angular: Vec3::zeros() }
    }

    pub fn linear(v: Vec3) -> Self {
        Twist { linear: v, angular: Vec3::zeros() }
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|c| c.is_finite())
    }
}

/// `[v_o, ω_o] = T·[v_i, ω_i]` under the configured control mode, followed
/// by the linear speed cap.
pub fn map_input(frame: &ControlFrame, input: &DeviceInput, cfg: &MappingConfig) -> Result<Twist, MappingError> {
    let twist = map_input_uncapped(frame, input, cfg)?;
    Ok(cap_speed(twist, cfg.speed_cap))
}

/// Same as [`map_input`] without the speed cap.
pub fn map_input_uncapped(
    frame: &ControlFrame,
    input: &DeviceInput,
    cfg: &MappingConfig,
) -> Result<Twist, MappingError> {
    cfg.validate()?;
    if !(input.dt > 0.0 && input.dt.is_finite()) {
        return Err(MappingError::InvalidInput("dt must be positive"));
    }
    let dim = frame.device_dim();
    if input.translation.len() > dim {
        return Err(MappingError::DimensionMismatch { input: input.translation.len(), frame: dim });
    }
    if input.rotation.is_some() && dim < 3 {
        return Err(MappingError::RotationOn2DDevice);
    }
    let wheel = input.wheel.unwrap_or(0.0);
    if wheel != 0.0 && frame.wheel_axis.is_none() {
        return Err(MappingError::NoWheelAxis);
    }
    let rotation = input.rotation.unwrap_or([0.0; 3]);
    let finite = input.translation.iter().chain(rotation.iter()).all(|c| c.is_finite()) && wheel.is_finite();
    if !finite {
        return Err(MappingError::InvalidInput("non-finite input"));
    }
    if input.clutched {
        return Ok(Twist::zero());
    }

    // Position mode turns per-tick motion into a velocity; rate mode uses the
    // displacement directly.
    let per_time = match cfg.mode {
        ControlMode::Position => 1.0 / input.dt,
        ControlMode::Rate => 1.0,
    };
    let mut linear = Vec3::zeros();
    let mut angular = Vec3::zeros();
    for (i, col) in frame.columns.iter().enumerate() {
        let t = input.translation.get(i).copied().unwrap_or(0.0);
        linear += col.vec() * (cfg.translation_scale * t * per_time);
        if dim == 3 {
            angular += col.vec() * (cfg.rotation_scale * rotation[i] * per_time);
        }
    }
    if let Some(axis) = frame.wheel_axis {
        let gain = match cfg.mode {
            ControlMode::Position => 1.0,
            ControlMode::Rate => cfg.translation_scale,
        };
        linear += axis.vec() * (gain * wheel * cfg.wheel_step * per_time);
    }
    Ok(Twist { linear, angular })
}

/// Scales the whole twist so the linear speed is at most `cap`. Angular
/// velocity shrinks by the same factor, so the motion keeps its shape.
pub fn cap_speed(mut twist: Twist, cap: f64) -> Twist {
    let speed = twist.linear.norm();
    if speed > cap {
        let k = cap / speed;
        twist.linear *= k;
        twist.angular *= k;
    }
    twist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{camera_frame, ControlFrame, DeviceLayout, FrameKind};
    use crate::geometry::{Direction, Rotation};

    fn identity3() -> ControlFrame {
        ControlFrame::new(FrameKind::Robot, vec![Direction::X, Direction::Y, Direction::Z], None)
    }

    fn uncapped() -> MappingConfig {
        MappingConfig { speed_cap: 100.0, ..Default::default() }
    }

    #[test]
    fn identity_position_mode() {
        let t = map_input(&identity3(), &DeviceInput::translation(&[0.01, 0.0, 0.0], 0.01), &uncapped()).unwrap();
        assert!((t.linear - Vec3::x()).norm() < 1e-12);
    }

    #[test]
    fn camera_forward_maps_to_viewing_direction() {
        let f = camera_frame(&Rotation::identity(), DeviceLayout::Spatial);
        let t = map_input(&f, &DeviceInput::translation(&[0.0, 0.01, 0.0], 0.01), &uncapped()).unwrap();
        assert!((t.linear - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn clutch_zeroes_output() {
        let input = DeviceInput::translation(&[5.0, -3.0, 1.0], 0.01).clutched();
        assert_eq!(map_input(&identity3(), &input, &uncapped()).unwrap(), Twist::zero());
    }

    #[test]
    fn rate_mode() {
        let cfg = MappingConfig { mode: ControlMode::Rate, translation_scale: 0.5, ..uncapped() };
        let t = map_input(&identity3(), &DeviceInput::translation(&[0.1, 0.0, 0.0], 0.033), &cfg).unwrap();
        assert!((t.linear - Vec3::new(0.05, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn wheel_moves_along_wheel_axis() {
        let f = camera_frame(&Rotation::identity(), DeviceLayout::PlanarWheel);
        let t = map_input(&f, &DeviceInput::translation(&[0.0, 0.0], 0.1).with_wheel(2.0), &uncapped()).unwrap();
        assert!((t.linear - Vec3::new(0.0, 0.0, 0.2)).norm() < 1e-12);
    }

    #[test]
    fn errors() {
        let planar = camera_frame(&Rotation::identity(), DeviceLayout::Planar);
        let cfg = MappingConfig::default();
        assert!(matches!(
            map_input(&planar, &DeviceInput::translation(&[0.0, 0.0, 0.0], 0.1), &cfg),
            Err(MappingError::DimensionMismatch { input: 3, frame: 2 })
        ));
        let mut rot = DeviceInput::translation(&[0.0, 0.0], 0.1);
        rot.rotation = Some([0.0, 0.0, 0.1]);
        assert_eq!(map_input(&planar, &rot, &cfg), Err(MappingError::RotationOn2DDevice));
        assert_eq!(
            map_input(&planar, &DeviceInput::translation(&[0.0, 0.0], 0.1).with_wheel(1.0), &cfg),
            Err(MappingError::NoWheelAxis)
        );
        assert!(map_input(&planar, &DeviceInput::translation(&[0.0, 0.0], 0.0), &cfg).is_err());
    }

    #[test]
    fn speed_cap_preserves_direction() {
        let cfg = MappingConfig { speed_cap: 0.5, ..Default::default() };
        let t = map_input(&identity3(), &DeviceInput::translation(&[0.03, 0.04, 0.0], 0.01), &cfg).unwrap();
        assert!((t.linear.norm() - 0.5).abs() < 1e-12);
        assert!((t.linear - Vec3::new(0.3, 0.4, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn angular_channel_uses_same_columns() {
        let f = camera_frame(&Rotation::identity(), DeviceLayout::Spatial);
        let mut input = DeviceInput::translation(&[0.0, 0.0, 0.0], 0.5);
        input.rotation = Some([0.0, 0.1, 0.0]);
        let t = map_input(&f, &input, &MappingConfig::default()).unwrap();
        assert!((t.angular - Vec3::new(0.0, 0.0, -0.2)).norm() < 1e-12);
    }
}
