mod common;

use common::{direction, level_camera, vec3};
use proptest::prelude::*;
use teleframe::frames::{build_frame, ControlFrame, DeviceLayout, FrameKind};
use teleframe::geometry::{Pose, Vec3};
use teleframe::mapping::{cap_speed, map_input, map_input_uncapped, ControlMode, DeviceInput, MappingConfig, Twist};
use teleframe::scene::Scene;

fn cfg(mode: ControlMode) -> MappingConfig {
    MappingConfig { mode, speed_cap: 1e9, ..MappingConfig::default() }
}

fn close(a: &Vec3, b: &Vec3) -> bool {
    (a - b).norm() <= 1e-9 * (1.0 + a.norm().max(b.norm()))
}

proptest! {
    #[test]
    fn mapping_is_linear_per_channel(
        cols in prop::array::uniform3(direction()),
        u in prop::array::uniform3(-0.05f64..0.05),
        w in prop::array::uniform3(-0.05f64..0.05),
        ru in prop::array::uniform3(-0.05f64..0.05),
        rw in prop::array::uniform3(-0.05f64..0.05),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        rate in any::<bool>(),
    ) {
        // columns need not be orthogonal
        let frame = ControlFrame::new(FrameKind::Robot, cols.to_vec(), None);
        let c = cfg(if rate { ControlMode::Rate } else { ControlMode::Position });
        let dt = 1.0 / 30.0;
        let input = |t: [f64; 3], r: [f64; 3]| DeviceInput { rotation: Some(r), ..DeviceInput::translation(&t, dt) };
        let combo = |x: [f64; 3], y: [f64; 3]| [a * x[0] + b * y[0], a * x[1] + b * y[1], a * x[2] + b * y[2]];
        let mu = map_input_uncapped(&frame, &input(u, ru), &c).unwrap();
        let mw = map_input_uncapped(&frame, &input(w, rw), &c).unwrap();
        let m = map_input_uncapped(&frame, &input(combo(u, w), combo(ru, rw)), &c).unwrap();
        prop_assert!(close(&m.linear, &(mu.linear * a + mw.linear * b)));
        prop_assert!(close(&m.angular, &(mu.angular * a + mw.angular * b)));
    }

    #[test]
    fn wheel_is_linear_too(cols in prop::array::uniform2(direction()), axis in direction(), d in -5.0f64..5.0, e in -5.0f64..5.0) {
        let frame = ControlFrame::new(FrameKind::Robot, cols.to_vec(), Some(axis));
        let c = cfg(ControlMode::Position);
        let at = |detents: f64| map_input_uncapped(&frame, &DeviceInput::idle(2, 0.05).with_wheel(detents), &c).unwrap().linear;
        prop_assert!(close(&at(d + e), &(at(d) + at(e))));
    }

    #[test]
    fn hybrid2_stays_horizontal(yaw in -3.1f64..3.1, pitch in -1.45f64..-0.1, t in prop::array::uniform2(-0.02f64..0.02)) {
        let mut scene = Scene::pick_place_default();
        scene.camera.pose.rotation = level_camera(yaw, pitch);
        let frame = build_frame(FrameKind::Hybrid2, &scene, DeviceLayout::PlanarWheel, None).unwrap();
        let twist = map_input(&frame, &DeviceInput::translation(&t, 1.0 / 30.0).with_wheel(0.0), &scene.mapping).unwrap();
        prop_assert!(twist.linear.z.abs() < 1e-9);
    }

    #[test]
    fn hybrid3_stays_on_the_board(eye in vec3(0.6), t in prop::array::uniform2(-0.02f64..0.02)) {
        let mut scene = Scene::tracing_default();
        let board = scene.whiteboard.clone().unwrap();
        // cameras in front of the board, looking at its center
        let n = board.plane().normal.vec();
        let eye = board.origin + n * 0.8 + eye;
        scene.camera.pose = Pose::look_at(eye, board.origin, Vec3::z()).unwrap();
        let frame = match build_frame(FrameKind::Hybrid3, &scene, DeviceLayout::Planar, None) {
            Ok(f) => f,
            Err(_) => return Ok(()), // near edge-on views are rejected upstream
        };
        let twist = map_input(&frame, &DeviceInput::translation(&t, 1.0 / 30.0), &scene.mapping).unwrap();
        prop_assert!(twist.linear.dot(&n).abs() < 1e-9);
    }

    #[test]
    fn speed_cap_keeps_direction(lin in vec3(5.0), ang in vec3(5.0), cap in 0.01f64..2.0) {
        let t = Twist { linear: lin, angular: ang };
        let c = cap_speed(t, cap);
        prop_assert!(c.linear.norm() <= cap * (1.0 + 1e-12));
        // the capped twist is k·t with 0 ≤ k ≤ 1 in all six components
        let k = if lin.norm() > 0.0 { c.linear.norm() / lin.norm() } else { 1.0 };
        prop_assert!((0.0..=1.0).contains(&k));
        prop_assert!(close(&c.linear, &(lin * k)));
        prop_assert!(close(&c.angular, &(ang * k)));
    }

    #[test]
    fn clutch_always_zeroes(cols in prop::array::uniform3(direction()), t in prop::array::uniform3(-1.0f64..1.0)) {
        let frame = ControlFrame::new(FrameKind::Robot, cols.to_vec(), None);
        let tw = map_input(&frame, &DeviceInput::translation(&t, 0.02).clutched(), &MappingConfig::default()).unwrap();
        prop_assert_eq!(tw, Twist::zero());
    }
}
