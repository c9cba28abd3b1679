//! The 30 Hz simulation loop shared by the synthetic operator and live
//! sessions: map input, step IK, step the task world, record the tick.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{ControlFrame, FrameBuilder, FrameError};
use crate::geometry::{Plane, Pose, Vec3};
use crate::kinematics::{default_arm, fk, ik_step, solve_fingertip_position, ArmModel, ArmState, IkConfig, KinematicsError};
use crate::mapping::{map_input, DeviceInput, Twist};
use crate::scenarios::{reset, Event, Point2, ScenarioError, World};
use crate::scene::{Scene, SceneError};
use crate::trial::{LogHeader, TickRecord, LOG_SCHEMA};

pub const TICK_HZ: u64 = 30;
pub const TICK_DT: f64 = 1.0 / TICK_HZ as f64;

/// Milliseconds at the end of tick `tick` (1-based), rounded down.
pub fn tick_time_ms(tick: u64) -> u64 {
    tick * 1000 / TICK_HZ
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("could not place the pen on the board (residual {0:.4} m)")]
    Unreachable(f64),
    #[error("the trial has already finished")]
    Finished,
}

/// Scene objects in a compact form for state broadcasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum Objects {
    PickPlace { block: Pose, target_center: Vec3, target_radius: f64, held: bool, collisions: u32 },
    Tracing { pen: Option<Point2>, completeness: f64 },
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub scene: Scene,
    pub model: ArmModel,
    pub state: ArmState,
    pub world: World,
    /// The frame used on the last tick; rebuilt every tick for dynamic kinds.
    pub frame: ControlFrame,
    pub seed: u64,
    pub tick: u64,
    builder: FrameBuilder,
    ik: IkConfig,
}

fn plane_in_base(base: &Pose, plane: &Plane) -> Plane {
    let normal = base.rotation.transpose().apply(&plane.normal.vec());
    Plane::new(
        base.inverse_transform_point(&plane.point),
        crate::geometry::Direction::normalize(normal).expect("rotated unit normal"),
    )
}

impl Simulation {
    pub fn new(scene: &Scene, seed: u64) -> Result<Simulation, SimError> {
        scene.validate()?;
        let model = default_arm();
        let world = reset(scene.scenario, scene, seed)?;
        let mut state = model.home_state();
        if let World::Tracing(w) = &world {
            let start = w.board.to_world(w.target_curve[0]);
            let target = scene.robot_base.inverse_transform_point(&start);
            let (solved, residual) = solve_fingertip_position(&model, &state, &target, 400, 1e-6)?;
            if residual > 1e-4 {
                return Err(SimError::Unreachable(residual));
            }
            state = ArmState::new(solved.q);
        }
        let builder = FrameBuilder::default();
        let eef = fk(&model, &state.q)?.eef;
        let frame = builder.build(scene.frame, scene, scene.device, Some(&scene.robot_base.compose(&eef)))?;
        let ik = IkConfig::with_table(plane_in_base(&scene.robot_base, &scene.table));
        Ok(Simulation { scene: scene.clone(), model, state, world, frame, seed, tick: 0, builder, ik })
    }

    pub fn header(&self) -> LogHeader {
        LogHeader {
            schema: LOG_SCHEMA,
            scene: self.scene.clone(),
            frame: self.frame.clone(),
            mapping: self.scene.mapping,
            seed: self.seed,
        }
    }

    pub fn finished(&self) -> bool {
        self.world.finished()
    }

    /// Flange pose and fingertip position in the world frame.
    pub fn eef_world(&self) -> (Pose, Vec3) {
        let kin = fk(&self.model, &self.state.q).expect("state matches model");
        let base = &self.scene.robot_base;
        (base.compose(&kin.eef), base.transform_point(&kin.fingertip))
    }

    /// The point the operator steers: the held block, else the fingertip.
    pub fn control_point(&self) -> Vec3 {
        match &self.world {
            World::PickPlace(w) if w.held => w.block.translation,
            _ => self.eef_world().1,
        }
    }

    pub fn objects(&self) -> Objects {
        match &self.world {
            World::PickPlace(w) => Objects::PickPlace {
                block: w.block,
                target_center: w.target_center,
                target_radius: w.target_radius,
                held: w.held,
                collisions: w.collisions,
            },
            World::Tracing(w) => Objects::Tracing { pen: w.pen_trace.last().copied(), completeness: w.completeness },
        }
    }

    fn current_frame(&mut self) -> Result<(), FrameError> {
        if self.scene.frame.is_dynamic() {
            let (eef, _) = self.eef_world();
            self.frame = self.builder.build(self.scene.frame, &self.scene, self.scene.device, Some(&eef))?;
        }
        Ok(())
    }

    /// Advances one tick. Module errors become `Error` events and leave the
    /// arm where it was.
    pub fn step(&mut self, input: &DeviceInput) -> Result<TickRecord, SimError> {
        if self.finished() {
            return Err(SimError::Finished);
        }
        let mut events = Vec::new();
        let twist = match self.current_frame() {
            Ok(()) => map_input(&self.frame, input, &self.scene.mapping).map_err(|e| e.to_string()),
            Err(e) => Err(e.to_string()),
        }
        .unwrap_or_else(|message| {
            events.push(Event::Error { message });
            Twist::zero()
        });
        match ik_step(&self.model, &self.state, &twist, TICK_DT, &self.ik) {
            Ok(next) => {
                if next.halted {
                    events.push(Event::Halt);
                }
                self.state = next;
            }
            Err(e) => events.push(Event::Error { message: e.to_string() }),
        }
        let (eef, fingertip) = self.eef_world();
        events.extend(self.world.step(&eef, &fingertip, TICK_DT));
        self.tick += 1;
        let pen = match &self.world {
            World::Tracing(w) => w.pen_trace.last().copied(),
            _ => None,
        };
        Ok(TickRecord {
            t_ms: tick_time_ms(self.tick),
            input: input.clone(),
            q: self.state.q.clone(),
            eef,
            fingertip,
            events,
            pen,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{DeviceLayout, FrameKind};
    use crate::scenarios::ScenarioKind;

    #[test]
    fn idle_ticks_keep_joints() {
        let mut sim = Simulation::new(&Scene::pick_place_default(), 1).unwrap();
        let q0 = sim.state.q.clone();
        let a = sim.step(&DeviceInput::idle(2, TICK_DT)).unwrap();
        let b = sim.step(&DeviceInput::idle(2, TICK_DT)).unwrap();
        assert_eq!(a.q, q0);
        assert_eq!(b.q, q0);
        assert!(b.t_ms > a.t_ms);
        assert!(a.events.is_empty());
    }

    #[test]
    fn tracing_starts_on_curve() {
        let sim = Simulation::new(&Scene::tracing_default(), 0).unwrap();
        let World::Tracing(w) = &sim.world else { panic!() };
        let tip = sim.eef_world().1;
        assert!((tip - w.board.to_world(w.target_curve[0])).norm() < 1e-4);
    }

    #[test]
    fn constant_input_speed() {
        let mut scene = Scene::pick_place_default();
        scene.frame = FrameKind::Robot;
        scene.device = DeviceLayout::Planar;
        let mut sim = Simulation::new(&scene, 2).unwrap();
        let v = 0.05;
        let input = DeviceInput::translation(&[v * TICK_DT, 0.0], TICK_DT);
        let first = sim.step(&input).unwrap();
        let mut last = first.clone();
        for _ in 0..29 {
            last = sim.step(&input).unwrap();
        }
        let speed = (last.fingertip - first.fingertip).norm() / (29.0 * TICK_DT);
        assert!((speed - v).abs() / v < 0.02, "{speed}");
    }

    #[test]
    fn orbit_frame_is_rebuilt() {
        let mut scene = Scene::pick_place_default();
        scene.frame = FrameKind::Orbit;
        scene.device = DeviceLayout::Spatial;
        assert_eq!(scene.scenario, ScenarioKind::PickPlace);
        let mut sim = Simulation::new(&scene, 0).unwrap();
        let before = sim.frame.clone();
        for _ in 0..10 {
            sim.step(&DeviceInput::translation(&[0.005, 0.0, 0.0], TICK_DT)).unwrap();
        }
        assert_ne!(before, sim.frame);
    }

    #[test]
    fn mapping_error_becomes_event() {
        let mut sim = Simulation::new(&Scene::pick_place_default(), 0).unwrap();
        let rec = sim.step(&DeviceInput::translation(&[0.0, 0.0, 0.0], TICK_DT)).unwrap();
        assert!(matches!(rec.events[0], Event::Error { .. }));
    }
}
