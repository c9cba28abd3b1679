//! Scene description and its JSON file format (`"schema": 1`).
//!
//! All poses are expressed in the world frame. The rotations the frame
//! constructors consume (camera, world, task) are re-expressed relative to
//! the robot base by the `*_in_base` accessors.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{DeviceLayout, FrameKind};
use crate::geometry::{camera_depth, CameraIntrinsics, Direction, GeometryError, Plane, Pose, Rotation, Vec3};
use crate::mapping::{MappingConfig, MappingError};

pub const SCENE_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("unsupported scene schema {0} (expected {SCENE_SCHEMA})")]
    Schema(u32),
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error("scene file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scene json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    PickPlace,
    Tracing,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::PickPlace => "pick_place",
            ScenarioKind::Tracing => "tracing",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = SceneError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pick_place" => Ok(ScenarioKind::PickPlace),
            "tracing" => Ok(ScenarioKind::Tracing),
            other => Err(SceneError::Invalid(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
}

/// A planar drawing surface. The rotation's columns are the board's right,
/// up and outward normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Whiteboard {
    pub origin: Vec3,
    pub rotation: Rotation,
    #[serde(default = "default_letters")]
    pub letters: String,
}

fn default_letters() -> String {
    "hri".to_string()
}

impl Whiteboard {
    pub fn plane(&self) -> Plane {
        Plane::new(self.origin, self.rotation.axis(2))
    }

    /// World point of board coordinates (meters along board right/up).
    pub fn to_world(&self, p: [f64; 2]) -> Vec3 {
        self.origin + self.rotation.axis(0).vec() * p[0] + self.rotation.axis(1).vec() * p[1]
    }

    /// Board coordinates of the orthogonal projection of `p`.
    pub fn to_board(&self, p: &Vec3) -> [f64; 2] {
        let d = p - self.origin;
        [self.rotation.axis(0).dot(&d), self.rotation.axis(1).dot(&d)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub schema: u32,
    pub robot_base: Pose,
    pub camera: CameraSpec,
    /// World axes (R_w); z is world up.
    #[serde(default = "Rotation::identity")]
    pub world: Rotation,
    pub table: Plane,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub whiteboard: Option<Whiteboard>,
    pub frame: FrameKind,
    pub device: DeviceLayout,
    #[serde(default)]
    pub mapping: MappingConfig,
    pub scenario: ScenarioKind,
    #[serde(default)]
    pub seed: u64,
    /// Sphere center for orbit control, world frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orbit_focus: Option<Vec3>,
}

/// Camera at `distance` from `target`, looking along heading `yaw` (about
/// world z, from +x) tilted by `pitch` (negative looks down). Angles in radians.
pub fn camera_from_yaw_pitch(target: Vec3, yaw: f64, pitch: f64, distance: f64) -> Result<Pose, GeometryError> {
    let forward = Vec3::new(pitch.cos() * yaw.cos(), pitch.cos() * yaw.sin(), pitch.sin());
    Pose::look_at(target - forward * distance, target, Vec3::z())
}

fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics { focal: 900.0, principal: [640.0, 360.0], size: [1280, 720] }
}

impl Scene {
    /// Tabletop pick-and-place seen by an elevated camera yawed 135° and
    /// pitched 35° down, with a mouse + wheel device.
    pub fn pick_place_default() -> Scene {
        Scene::pick_place_with_camera(135f64.to_radians(), (-35f64).to_radians())
    }

    pub fn pick_place_with_camera(yaw: f64, pitch: f64) -> Scene {
        let target = Vec3::new(0.45, 0.0, 0.05);
        let pose = camera_from_yaw_pitch(target, yaw, pitch, 1.3).expect("non-vertical camera");
        Scene {
            schema: SCENE_SCHEMA,
            robot_base: Pose::identity(),
            camera: CameraSpec { pose, intrinsics: default_intrinsics() },
            world: Rotation::identity(),
            table: Plane::new(Vec3::zeros(), Direction::Z),
            whiteboard: None,
            frame: FrameKind::Hybrid2,
            device: DeviceLayout::PlanarWheel,
            mapping: MappingConfig::default(),
            scenario: ScenarioKind::PickPlace,
            seed: 0,
            orbit_focus: Some(Vec3::new(0.6, 0.0, 0.05)),
        }
    }

    /// Letter tracing on a vertical whiteboard facing the robot, viewed
    /// obliquely from the robot's side.
    pub fn tracing_default() -> Scene {
        let origin = Vec3::new(0.42, 0.0, 0.32);
        // board right = −y, up = +z, normal = −x (toward the robot)
        let rotation = Rotation::from_columns(-Vec3::y(), Vec3::z(), -Vec3::x()).expect("board axes");
        let pose = Pose::look_at(Vec3::new(-0.35, -0.75, 0.85), origin, Vec3::z()).expect("camera");
        Scene {
            schema: SCENE_SCHEMA,
            robot_base: Pose::identity(),
            camera: CameraSpec { pose, intrinsics: default_intrinsics() },
            world: Rotation::identity(),
            table: Plane::new(Vec3::zeros(), Direction::Z),
            whiteboard: Some(Whiteboard { origin, rotation, letters: default_letters() }),
            frame: FrameKind::Hybrid3,
            device: DeviceLayout::Planar,
            mapping: MappingConfig::default(),
            scenario: ScenarioKind::Tracing,
            seed: 0,
            orbit_focus: None,
        }
    }

    pub fn default_for(kind: ScenarioKind) -> Scene {
        match kind {
            ScenarioKind::PickPlace => Scene::pick_place_default(),
            ScenarioKind::Tracing => Scene::tracing_default(),
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.schema != SCENE_SCHEMA {
            return Err(SceneError::Schema(self.schema));
        }
        self.camera.intrinsics.validate()?;
        self.mapping.validate()?;
        if self.table.signed_distance(&self.camera.pose.translation) < 0.0 {
            return Err(SceneError::Invalid("camera is below the table".into()));
        }
        if self.scenario == ScenarioKind::Tracing && self.whiteboard.is_none() {
            return Err(SceneError::Invalid("tracing needs a whiteboard".into()));
        }
        if let Some(b) = &self.whiteboard {
            if camera_depth(&self.camera.pose, &b.origin) <= 0.0 {
                return Err(SceneError::Invalid("whiteboard is behind the camera".into()));
            }
        }
        Ok(())
    }

    pub fn camera_in_base(&self) -> Rotation {
        self.robot_base.rotation.transpose().compose(&self.camera.pose.rotation)
    }

    pub fn world_in_base(&self) -> Rotation {
        self.robot_base.rotation.transpose().compose(&self.world)
    }

    pub fn task_in_base(&self) -> Option<Rotation> {
        self.whiteboard.as_ref().map(|b| self.robot_base.rotation.transpose().compose(&b.rotation))
    }

    pub fn world_up(&self) -> Direction {
        self.world.axis(2)
    }

    pub fn from_json(s: &str) -> Result<Scene, SceneError> {
        let scene: Scene = serde_json::from_str(s)?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Scene, SceneError> {
        Scene::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        for scene in [Scene::pick_place_default(), Scene::tracing_default()] {
            scene.validate().unwrap();
            let back = Scene::from_json(&scene.to_json_pretty()).unwrap();
            assert_eq!(back, scene);
        }
    }

    #[test]
    fn rejects_wrong_schema() {
        let mut v: serde_json::Value = serde_json::to_value(Scene::pick_place_default()).unwrap();
        v["schema"] = 2.into();
        assert!(matches!(Scene::from_json(&v.to_string()), Err(SceneError::Schema(2))));
    }

    #[test]
    fn default_camera_heading() {
        let s = Scene::pick_place_default();
        let fwd = -s.camera.pose.rotation.axis(2).vec();
        assert!((fwd.z - (-35f64).to_radians().sin()).abs() < 1e-12);
        assert!(fwd.x < 0.0 && fwd.y > 0.0);
    }
}
