//! Task worlds: tabletop pick-and-place and whiteboard letter tracing.
//!
//! Worlds are advanced by [`World::step`] with the current flange pose and
//! fingertip position (world frame). They own all task rules: auto-grasp,
//! collision counting, placement detection and the time limit.

pub mod letters;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose, Vec3};
use crate::metrics::closest_on_polyline;
use crate::scene::{Scene, Whiteboard};

pub use crate::scene::ScenarioKind;
pub use letters::{letter_paths, target_curve, Glyph, Point2, Polyline};

/// Task time limit, s.
pub const TIME_LIMIT: f64 = 90.0;
/// Fingertip-to-block distance that triggers the automatic grasp, m.
pub const GRASP_DISTANCE: f64 = 0.02;
/// Time the block must rest on the target before it is released, s.
pub const PLACE_DWELL: f64 = 0.5;
/// Maximum height of the block's underside above the table when placed, m.
pub const PLACE_HEIGHT: f64 = 0.02;
/// Clearance that re-arms the collision counter, m, and for how long, s.
pub const DEBOUNCE_CLEARANCE: f64 = 0.01;
pub const DEBOUNCE_TIME: f64 = 0.2;
/// Trace completeness that finishes a tracing trial.
pub const TRACE_DONE: f64 = 0.99;
pub const BLOCK_HALF_EXTENT: f64 = 0.025;
pub const TARGET_RADIUS: f64 = 0.04;
pub const MIN_BLOCK_TARGET_DISTANCE: f64 = 0.1;
/// Sampling box for block and target centers in the table plane (base
/// frame x and y ranges), m.
pub const WORKSPACE_X: [f64; 2] = [0.3, 0.5];
pub const WORKSPACE_Y: [f64; 2] = [-0.18, 0.18];

const EPS: f64 = 1e-9;
/// Penetration depth below which contact is treated as resting, m.
pub const PENETRATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("unknown letter set `{0}`")]
    UnknownSet(String),
    #[error("scene has no whiteboard")]
    NoWhiteboard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Grasp,
    Release,
    Collision,
    Success,
    Timeout,
    Done,
    /// The clearance guard suppressed a downward step.
    Halt,
    /// A module error surfaced during the tick.
    Error { message: String },
}

impl Event {
    pub fn ends_trial(&self) -> bool {
        matches!(self, Event::Success | Event::Timeout | Event::Done)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickPlaceWorld {
    pub block: Pose,
    pub block_half_extent: f64,
    pub target_center: Vec3,
    pub target_radius: f64,
    pub held: bool,
    /// Block pose in the flange frame while held.
    pub grasp_offset: Option<Pose>,
    pub collisions: u32,
    pub elapsed: f64,
    pub succeeded: bool,
    pub timed_out: bool,
    table_z: f64,
    in_contact: bool,
    armed: bool,
    clear_time: f64,
    dwell: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracingWorld {
    pub board: Whiteboard,
    pub target_curve: Polyline,
    pub pen_trace: Polyline,
    pub completeness: f64,
    pub elapsed: f64,
    pub done: bool,
    pub timed_out: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum World {
    PickPlace(PickPlaceWorld),
    Tracing(TracingWorld),
}

fn sample_xy(rng: &mut ChaCha8Rng) -> [f64; 2] {
    [rng.random_range(WORKSPACE_X[0]..=WORKSPACE_X[1]), rng.random_range(WORKSPACE_Y[0]..=WORKSPACE_Y[1])]
}

/// Deterministic initial world. Pick-and-place samples block and target in
/// the workspace box (at least 0.1 m apart); tracing uses the scene's letter set.
pub fn reset(kind: ScenarioKind, scene: &Scene, seed: u64) -> Result<World, ScenarioError> {
    match kind {
        ScenarioKind::PickPlace => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = scene.robot_base;
            let table_z = scene.table.point.z;
            let (block, target) = loop {
                let b = sample_xy(&mut rng);
                let t = sample_xy(&mut rng);
                if (b[0] - t[0]).hypot(b[1] - t[1]) >= MIN_BLOCK_TARGET_DISTANCE {
                    break (b, t);
                }
            };
            let on_table = |xy: [f64; 2], lift: f64| {
                let p = base.transform_point(&Vec3::new(xy[0], xy[1], 0.0));
                Vec3::new(p.x, p.y, table_z + lift)
            };
            Ok(World::PickPlace(PickPlaceWorld {
                block: Pose::from_translation(on_table(block, BLOCK_HALF_EXTENT)),
                block_half_extent: BLOCK_HALF_EXTENT,
                target_center: on_table(target, 0.0),
                target_radius: TARGET_RADIUS,
                held: false,
                grasp_offset: None,
                collisions: 0,
                elapsed: 0.0,
                succeeded: false,
                timed_out: false,
                table_z,
                in_contact: false,
                armed: true,
                clear_time: 0.0,
                dwell: 0.0,
            }))
        }
        ScenarioKind::Tracing => {
            let board = scene.whiteboard.clone().ok_or(ScenarioError::NoWhiteboard)?;
            let target_curve = target_curve(&board.letters)?;
            Ok(World::Tracing(TracingWorld {
                board,
                target_curve,
                pen_trace: Vec::new(),
                completeness: 0.0,
                elapsed: 0.0,
                done: false,
                timed_out: false,
            }))
        }
    }
}

impl PickPlaceWorld {
    pub fn block_bottom(&self) -> f64 {
        self.block.translation.z - self.block_half_extent - self.table_z
    }

    /// Point to bring the block's center to for a clean placement.
    pub fn place_goal(&self) -> Vec3 {
        self.target_center + Vec3::new(0.0, 0.0, self.block_half_extent + 0.01)
    }

    /// Whether the block center is horizontally inside the target circle.
    pub fn target_reached_xy(&self) -> bool {
        let d = self.block.translation - self.target_center;
        d.x.hypot(d.y) < self.target_radius
    }

    pub fn step(&mut self, eef: &Pose, fingertip: &Vec3, dt: f64) -> Vec<Event> {
        let mut events = Vec::new();
        if self.succeeded || self.timed_out {
            return events;
        }
        self.elapsed += dt;

        if !self.held && (fingertip - self.block.translation).norm() < GRASP_DISTANCE {
            self.held = true;
            self.grasp_offset = Some(eef.inverse().compose(&self.block));
            events.push(Event::Grasp);
        }
        if let (true, Some(offset)) = (self.held, self.grasp_offset) {
            self.block = eef.compose(&offset);
        }

        let tip_height = fingertip.z - self.table_z;
        let mut clearance = tip_height;
        if self.held {
            clearance = clearance.min(self.block_bottom());
        }
        if clearance < -PENETRATION_TOL {
            if self.armed {
                self.collisions += 1;
                events.push(Event::Collision);
                self.armed = false;
            }
            self.in_contact = true;
            self.clear_time = 0.0;
        } else {
            self.in_contact = false;
            if clearance > DEBOUNCE_CLEARANCE {
                self.clear_time += dt;
                if self.clear_time + EPS >= DEBOUNCE_TIME {
                    self.armed = true;
                }
            } else {
                self.clear_time = 0.0;
            }
        }

        if self.held {
            let centered = self.target_reached_xy();
            let bottom = self.block_bottom();
            if centered && bottom <= PLACE_HEIGHT {
                self.dwell += dt;
            } else {
                self.dwell = 0.0;
            }
            if self.dwell + EPS >= PLACE_DWELL {
                self.held = false;
                self.grasp_offset = None;
                let mut resting = self.block;
                resting.translation.z = self.table_z + self.block_half_extent;
                self.block = resting;
                self.succeeded = true;
                events.push(Event::Release);
                events.push(Event::Success);
                return events;
            }
        }

        if self.elapsed + EPS >= TIME_LIMIT {
            self.timed_out = true;
            events.push(Event::Timeout);
        }
        events
    }
}

impl TracingWorld {
    pub fn step(&mut self, fingertip: &Vec3, dt: f64) -> Vec<Event> {
        let mut events = Vec::new();
        if self.done || self.timed_out {
            return events;
        }
        self.elapsed += dt;
        let pen = self.board.to_board(fingertip);
        debug_assert!(self.board.plane().signed_distance(&self.board.to_world(pen)).abs() < 1e-6);
        self.pen_trace.push(pen);
        let (_, param) = closest_on_polyline(&self.target_curve, &pen);
        self.completeness = self.completeness.max(param);
        if self.completeness + EPS >= TRACE_DONE {
            self.done = true;
            events.push(Event::Done);
        } else if self.elapsed + EPS >= TIME_LIMIT {
            self.timed_out = true;
            events.push(Event::Timeout);
        }
        events
    }
}

impl World {
    pub fn kind(&self) -> ScenarioKind {
        match self {
            World::PickPlace(_) => ScenarioKind::PickPlace,
            World::Tracing(_) => ScenarioKind::Tracing,
        }
    }

    pub fn elapsed(&self) -> f64 {
        match self {
            World::PickPlace(w) => w.elapsed,
            World::Tracing(w) => w.elapsed,
        }
    }

    pub fn finished(&self) -> bool {
        match self {
            World::PickPlace(w) => w.succeeded || w.timed_out,
            World::Tracing(w) => w.done || w.timed_out,
        }
    }

    pub fn step(&mut self, eef: &Pose, fingertip: &Vec3, dt: f64) -> Vec<Event> {
        match self {
            World::PickPlace(w) => w.step(eef, fingertip, dt),
            World::Tracing(w) => w.step(fingertip, dt),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn far_pose() -> (Pose, Vec3) {
        let p = Vec3::new(0.0, 0.0, 0.8);
        (Pose::from_translation(p), p)
    }

    fn pick_world(seed: u64) -> PickPlaceWorld {
        match reset(ScenarioKind::PickPlace, &Scene::pick_place_default(), seed).unwrap() {
            World::PickPlace(w) => w,
            _ => unreachable!(),
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let s = Scene::pick_place_default();
        assert_eq!(reset(ScenarioKind::PickPlace, &s, 3).unwrap(), reset(ScenarioKind::PickPlace, &s, 3).unwrap());
        assert_ne!(reset(ScenarioKind::PickPlace, &s, 3).unwrap(), reset(ScenarioKind::PickPlace, &s, 4).unwrap());
    }

    #[test]
    fn placement_sampling_constraints() {
        for seed in 0..1000 {
            let w = pick_world(seed);
            let b = w.block.translation;
            let t = w.target_center;
            assert!((b.x - t.x).hypot(b.y - t.y) >= MIN_BLOCK_TARGET_DISTANCE);
            for p in [b, t] {
                assert!(p.x >= WORKSPACE_X[0] && p.x <= WORKSPACE_X[1]);
                assert!(p.y >= WORKSPACE_Y[0] && p.y <= WORKSPACE_Y[1]);
            }
        }
    }

    #[test]
    fn tracing_reset() {
        let s = Scene::tracing_default();
        let World::Tracing(w) = reset(ScenarioKind::Tracing, &s, 0).unwrap() else { panic!() };
        assert!(w.pen_trace.is_empty());
        assert_eq!(w.target_curve, target_curve("hri").unwrap());
        assert_eq!(w.elapsed, 0.0);
    }

    #[test]
    fn idle_step_has_no_events() {
        let mut w = pick_world(1);
        let (eef, tip) = far_pose();
        assert!(w.step(&eef, &tip, 0.1).is_empty());
        assert!((w.elapsed - 0.1).abs() < 1e-15);
    }

    #[test]
    fn grasp_within_threshold() {
        let mut w = pick_world(1);
        let tip = w.block.translation + Vec3::new(0.015, 0.0, 0.0);
        let events = w.step(&Pose::from_translation(tip), &tip, 1.0 / 30.0);
        assert_eq!(events, vec![Event::Grasp]);
        assert!(w.held);
        let mut w = pick_world(1);
        let tip = w.block.translation + Vec3::new(0.025, 0.0, 0.0);
        assert!(w.step(&Pose::from_translation(tip), &tip, 1.0 / 30.0).is_empty());
    }

    #[test]
    fn timeout_fires_once() {
        let mut w = pick_world(2);
        let (eef, tip) = far_pose();
        let mut timeouts = 0;
        for _ in 0..2800 {
            timeouts += w.step(&eef, &tip, 1.0 / 30.0).iter().filter(|e| **e == Event::Timeout).count();
        }
        assert_eq!(timeouts, 1);
        assert!(w.timed_out);
    }

    #[test]
    fn collision_debounce() {
        let mut w = pick_world(5);
        let dt = 1.0 / 30.0;
        let at = |z: f64| {
            let p = Vec3::new(0.0, 0.0, z);
            (Pose::from_translation(p), p)
        };
        let count = |w: &mut PickPlaceWorld, z: f64, ticks: usize| {
            let (e, t) = at(z);
            (0..ticks).map(|_| w.step(&e, &t, dt).len()).sum::<usize>()
        };
        assert_eq!(count(&mut w, -0.005, 10), 1);
        // brief clearance does not re-arm
        assert_eq!(count(&mut w, 0.05, 3), 0);
        assert_eq!(count(&mut w, -0.005, 2), 0);
        // 0.2 s of clearance does
        assert_eq!(count(&mut w, 0.05, 6), 0);
        assert_eq!(count(&mut w, -0.005, 2), 1);
        // hovering under 1 cm does not re-arm
        assert_eq!(count(&mut w, 0.005, 30), 0);
        assert_eq!(count(&mut w, -0.005, 1), 0);
        assert_eq!(w.collisions, 2);
    }

    #[test]
    fn place_after_dwell() {
        let mut w = pick_world(7);
        let dt = 1.0 / 30.0;
        let tip = w.block.translation;
        w.step(&Pose::from_translation(tip), &tip, dt);
        assert!(w.held);
        let goal = w.place_goal();
        let mut all = Vec::new();
        for _ in 0..20 {
            let events = w.step(&Pose::from_translation(goal), &goal, dt);
            all.extend(events);
            if w.succeeded {
                break;
            }
        }
        assert_eq!(all, vec![Event::Release, Event::Success]);
        assert!(!w.held);
        // the grasp tick plus 15 dwell ticks
        assert!((w.elapsed - 16.0 * dt).abs() < 1e-9);
    }

    #[test]
    fn tracing_done_at_curve_end() {
        let s = Scene::tracing_default();
        let World::Tracing(mut w) = reset(ScenarioKind::Tracing, &s, 0).unwrap() else { panic!() };
        let board = w.board.clone();
        let curve = w.target_curve.clone();
        let mut events = Vec::new();
        for p in &curve {
            events.extend(w.step(&board.to_world(*p), 0.01));
        }
        assert_eq!(events, vec![Event::Done]);
        assert!(w.pen_trace.iter().all(|p| board.plane().signed_distance(&board.to_world(*p)).abs() < 1e-6));
    }
}
