#![allow(dead_code)]

use nalgebra::{Quaternion, UnitQuaternion};
use proptest::prelude::*;
use teleframe::geometry::{Direction, Rotation, Vec3};

pub fn rotation() -> impl Strategy<Value = Rotation> {
    prop::array::uniform4(-1.0f64..1.0)
        .prop_filter("quaternion too short", |q| q.iter().map(|x| x * x).sum::<f64>() > 1e-2)
        .prop_map(|[w, x, y, z]| {
            let q = UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z));
            Rotation::new(*q.to_rotation_matrix().matrix()).expect("unit quaternion")
        })
}

pub fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    prop::array::uniform3(-range..range).prop_map(Vec3::from)
}

pub fn direction() -> impl Strategy<Value = Direction> {
    vec3(1.0).prop_filter("too short", |v| v.norm() > 1e-2).prop_map(|v| Direction::normalize(v).unwrap())
}

/// Camera with zero roll: heading `yaw`, tilt `pitch` (negative looks down).
pub fn level_camera(yaw: f64, pitch: f64) -> Rotation {
    let forward = Vec3::new(pitch.cos() * yaw.cos(), pitch.cos() * yaw.sin(), pitch.sin());
    let right = forward.cross(&Vec3::z()).normalize();
    let up = right.cross(&forward);
    Rotation::from_columns(right, up, -forward).unwrap()
}
