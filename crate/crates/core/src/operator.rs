//! A synthetic operator that watches the screen and steers toward a target
//! using its own belief about how the device maps to robot motion.
//!
//! Each tick it converts the on-screen error into a desired camera-space
//! velocity and picks device inputs by least squares against the believed
//! frame. Mismatch between belief and the real frame is what makes some
//! frames harder to use.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{ControlFrame, DeviceLayout, FrameKind};
use crate::geometry::{camera_depth, project_point, Rotation, Vec2, Vec3};
use crate::mapping::{ControlMode, DeviceInput, MappingConfig};
use crate::scenarios::{Event, Point2, World};
use crate::scene::Scene;
use crate::sim::{SimError, Simulation, TICK_DT};
use crate::trial::TrialLog;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("the believed frame cannot produce motion along some screen direction")]
    UnobservableDirection,
    #[error("invalid operator model: {0}")]
    InvalidModel(&'static str),
    #[error("invalid dt {0}")]
    InvalidDt(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthStrategy {
    /// Depth goes through the scroll wheel (planar devices with a wheel).
    Wheel,
    /// Depth goes through the third device axis (spatial devices).
    DeviceAxis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorModel {
    pub believed_frame: ControlFrame,
    /// Orientation of the viewing camera in the robot base frame.
    pub camera: Rotation,
    /// 1/s
    pub gain: f64,
    /// m/s of device motion
    pub max_input_speed: f64,
    pub reaction_delay: usize,
    /// m/s
    pub noise_std: f64,
    pub depth_strategy: DepthStrategy,
}

impl OperatorModel {
    pub fn new(believed_frame: ControlFrame, camera: Rotation) -> Self {
        let depth_strategy = match believed_frame.layout() {
            DeviceLayout::Spatial => DepthStrategy::DeviceAxis,
            _ => DepthStrategy::Wheel,
        };
        OperatorModel {
            believed_frame,
            camera,
            gain: 0.5,
            max_input_speed: 0.3,
            reaction_delay: 0,
            noise_std: 0.0,
            depth_strategy,
        }
    }

    pub fn validate(&self) -> Result<(), OperatorError> {
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(OperatorError::InvalidModel("gain must be positive"));
        }
        if !(self.max_input_speed > 0.0) {
            return Err(OperatorError::InvalidModel("max_input_speed must be positive"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(OperatorError::InvalidModel("noise_std must be non-negative"));
        }
        let ok = matches!(
            (self.depth_strategy, self.believed_frame.layout()),
            (_, DeviceLayout::Planar)
                | (DepthStrategy::Wheel, DeviceLayout::PlanarWheel)
                | (DepthStrategy::DeviceAxis, DeviceLayout::Spatial)
        );
        if !ok {
            return Err(OperatorError::InvalidModel("depth strategy does not match the believed device"));
        }
        Ok(())
    }

    /// Columns of the believed map from device channels (axes, then wheel)
    /// to camera coordinates (right, up, backward).
    pub fn believed_camera_map(&self) -> DMatrix<f64> {
        let dirs = self.believed_frame.input_directions();
        let rt = self.camera.matrix().transpose();
        DMatrix::from_fn(3, dirs.len(), |r, c| (rt * dirs[c])[r])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// px
    pub eef_screen: Vec2,
    /// px
    pub target_screen: Vec2,
    /// Target depth minus controlled-point depth along the viewing axis, m.
    pub depth_error: f64,
    /// Depth of the controlled point, m.
    pub eef_depth: f64,
    /// Focal length, px.
    pub focal: f64,
}

impl Observation {
    pub fn of(scene: &Scene, controlled: &Vec3, target: &Vec3) -> Result<Observation, crate::geometry::GeometryError> {
        let cam = &scene.camera;
        Ok(Observation {
            eef_screen: project_point(&cam.pose, &cam.intrinsics, controlled)?,
            target_screen: project_point(&cam.pose, &cam.intrinsics, target)?,
            depth_error: camera_depth(&cam.pose, target) - camera_depth(&cam.pose, controlled),
            eef_depth: camera_depth(&cam.pose, controlled),
            focal: cam.intrinsics.focal,
        })
    }

    /// Desired velocity in camera coordinates (right, up, backward), m/s.
    pub fn desired_velocity(&self, gain: f64) -> Vec3 {
        let e = self.target_screen - self.eef_screen;
        let m_per_px = self.eef_depth / self.focal;
        // pixel v grows downward; moving deeper is camera −z
        gain * Vec3::new(e.x * m_per_px, -e.y * m_per_px, -self.depth_error)
    }
}

/// Least-squares device velocity for a desired camera-space velocity.
/// With a depth channel all three rows are used; otherwise only the screen
/// rows. Fails if the screen rows cannot span the image plane.
pub fn solve_device_velocity(b: &DMatrix<f64>, desired: &Vec3, use_depth: bool) -> Result<DVector<f64>, OperatorError> {
    let screen = b.rows(0, 2).into_owned();
    let sv = screen.clone().svd(false, false).singular_values;
    if sv.len() < 2 || sv[1] < 1e-9 * sv[0].max(1.0) {
        return Err(OperatorError::UnobservableDirection);
    }
    let (a, rhs) = if use_depth {
        (b.clone(), DVector::from_column_slice(desired.as_slice()))
    } else {
        (screen, DVector::from_column_slice(&desired.as_slice()[..2]))
    };
    a.svd(true, true).solve(&rhs, 1e-12).map_err(|_| OperatorError::UnobservableDirection)
}

/// A running operator: model plus its delay line and noise source.
#[derive(Debug, Clone)]
pub struct Operator {
    pub model: OperatorModel,
    mapping: MappingConfig,
    delay: VecDeque<DVector<f64>>,
    rng: ChaCha8Rng,
}

impl Operator {
    pub fn new(model: OperatorModel, mapping: MappingConfig, seed: u64) -> Result<Operator, OperatorError> {
        model.validate()?;
        Ok(Operator { model, mapping, delay: VecDeque::new(), rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    fn channels(&self) -> usize {
        self.model.believed_frame.input_directions().len()
    }

    /// Desired device velocity before delay and noise.
    pub fn intended_velocity(&self, obs: &Observation) -> Result<DVector<f64>, OperatorError> {
        let use_depth = self.channels() == 3;
        let mut u = solve_device_velocity(&self.model.believed_camera_map(), &obs.desired_velocity(self.model.gain), use_depth)?;
        let n = u.norm();
        if n > self.model.max_input_speed {
            u *= self.model.max_input_speed / n;
        }
        Ok(u)
    }

    pub fn tick(&mut self, obs: &Observation, dt: f64) -> Result<DeviceInput, OperatorError> {
        if !(dt > 0.0) {
            return Err(OperatorError::InvalidDt(dt));
        }
        let u = self.intended_velocity(obs)?;
        self.delay.push_back(u);
        let mut u = if self.delay.len() > self.model.reaction_delay {
            self.delay.pop_front().expect("non-empty delay line")
        } else {
            DVector::zeros(self.channels())
        };
        if self.model.noise_std > 0.0 {
            let normal = Normal::new(0.0, self.model.noise_std).expect("finite std");
            for c in u.iter_mut() {
                *c += normal.sample(&mut self.rng);
            }
        }
        Ok(self.to_input(&u, dt))
    }

    fn to_input(&self, u: &DVector<f64>, dt: f64) -> DeviceInput {
        let m = &self.mapping;
        let axes = self.model.believed_frame.device_dim();
        let per_axis = |v: f64| match m.mode {
            ControlMode::Position => v * dt / m.translation_scale,
            ControlMode::Rate => v / m.translation_scale,
        };
        let translation: Vec<f64> = u.iter().take(axes).map(|v| per_axis(*v)).collect();
        let mut input = DeviceInput::translation(&translation, dt);
        if self.model.believed_frame.wheel_axis.is_some() {
            let w = u[axes];
            input.wheel = Some(match m.mode {
                ControlMode::Position => w * dt / m.wheel_step,
                ControlMode::Rate => w / (m.translation_scale * m.wheel_step),
            });
        }
        input
    }
}

/// Convenience wrapper: one tick of a fresh, undelayed operator.
pub fn operator_tick(model: &OperatorModel, mapping: &MappingConfig, obs: &Observation, dt: f64) -> Result<DeviceInput, OperatorError> {
    Operator::new(model.clone(), *mapping, 0)?.tick(obs, dt)
}

/// Screen-space velocity direction (orthographic) produced by device
/// velocity `u` through the frame's columns (and wheel).
pub fn screen_velocity(frame: &ControlFrame, camera: &Rotation, u: &[f64]) -> nalgebra::Vector2<f64> {
    let v: Vec3 = frame.input_directions().iter().zip(u).map(|(d, s)| d * *s).sum();
    let c = camera.transpose().apply(&v);
    nalgebra::Vector2::new(c.x, c.y)
}

/// Moving target along a letter curve that stays a fixed arc length ahead
/// of the pen's furthest progress.
#[derive(Debug, Clone)]
pub struct Carrot {
    curve: Vec<Point2>,
    cumulative: Vec<f64>,
    progress: f64,
    pub lookahead: f64,
    /// How far back and ahead of the current progress the pen is matched, m.
    pub window: (f64, f64),
}

impl Carrot {
    pub fn new(curve: Vec<Point2>, lookahead: f64) -> Carrot {
        let mut cumulative = vec![0.0];
        for w in curve.windows(2) {
            let l = cumulative.last().copied().unwrap_or(0.0) + (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
            cumulative.push(l);
        }
        Carrot { curve, cumulative, progress: 0.0, lookahead, window: (0.01, 0.05) }
    }

    pub fn length(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    pub fn point_at(&self, s: f64) -> Point2 {
        let s = s.clamp(0.0, self.length());
        let i = self.cumulative.partition_point(|c| *c < s).clamp(1, self.curve.len().max(2) - 1);
        if self.curve.len() < 2 {
            return self.curve[0];
        }
        let (a, b) = (self.curve[i - 1], self.curve[i]);
        let seg = self.cumulative[i] - self.cumulative[i - 1];
        let t = if seg > 0.0 { (s - self.cumulative[i - 1]) / seg } else { 0.0 };
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }

    /// Updates progress from the pen position and returns the carrot.
    pub fn advance(&mut self, pen: &Point2) -> Point2 {
        let lo = (self.progress - self.window.0).max(0.0);
        let hi = (self.progress + self.window.1).min(self.length());
        let step = 0.002;
        let n = ((hi - lo) / step).ceil().max(1.0) as usize;
        let samples: Vec<(f64, f64)> = (0..=n)
            .map(|k| {
                let s = lo + (hi - lo) * k as f64 / n as f64;
                let p = self.point_at(s);
                (s, (p[0] - pen[0]).hypot(p[1] - pen[1]))
            })
            .collect();
        // where the curve doubles back over itself, take the furthest match
        let best = samples.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        let s = samples.iter().filter(|x| x.1 <= best + 2.0 * step).map(|x| x.0).fold(lo, f64::max);
        self.progress = self.progress.max(s);
        self.point_at(self.progress + self.lookahead)
    }
}

/// Default operator for a scene: believes the given frame kind and watches
/// the scene camera. Tracing uses a higher gain since it follows a carrot
/// a few centimeters ahead.
pub fn default_operator(scene: &Scene, believed: FrameKind) -> Result<OperatorModel, SimError> {
    let mut s = scene.clone();
    s.frame = believed;
    let sim = Simulation::new(&s, 0)?;
    let mut model = OperatorModel::new(sim.frame, scene.camera_in_base());
    if scene.scenario == crate::scenarios::ScenarioKind::Tracing {
        model.gain = 4.0;
    }
    Ok(model)
}

/// Height the operator lifts a grasped block to before carrying it, m.
pub const LIFT_HEIGHT: f64 = 0.01;

/// Where the operator steers next: the block, a lift point, the place goal
/// or the tracing carrot.
pub fn operator_target(sim: &Simulation, carrot: &mut Option<Carrot>) -> Vec3 {
    match &sim.world {
        World::PickPlace(w) => {
            if w.held && w.block_bottom() < LIFT_HEIGHT && !w.target_reached_xy() {
                // lift off the table before carrying the block
                w.block.translation + Vec3::new(0.0, 0.0, 2.0 * LIFT_HEIGHT)
            } else if w.held {
                w.place_goal()
            } else {
                w.block.translation
            }
        }
        World::Tracing(w) => {
            let c = carrot.get_or_insert_with(|| Carrot::new(w.target_curve.clone(), 0.02));
            let pen = w.pen_trace.last().copied().unwrap_or_else(|| w.board.to_board(&sim.eef_world().1));
            w.board.to_world(c.advance(&pen))
        }
    }
}

/// Closed-loop rollout at 30 Hz until the task ends or `max_ticks`.
/// `scene.frame` is overridden by `actual`. Setup failures are returned as
/// errors; failures during the rollout end it with an `Error` event.
pub fn run_episode(
    scene: &Scene,
    actual: FrameKind,
    operator: &OperatorModel,
    seed: u64,
    max_ticks: u64,
) -> Result<TrialLog, SimError> {
    let mut scene = scene.clone();
    scene.frame = actual;
    let mut sim = Simulation::new(&scene, seed)?;
    let mut log = TrialLog::new(sim.header());
    let mut op = match Operator::new(operator.clone(), scene.mapping, seed) {
        Ok(op) => op,
        Err(e) => {
            let mut rec = sim.step(&DeviceInput::idle(scene.device.device_dim(), TICK_DT))?;
            rec.events.push(Event::Error { message: e.to_string() });
            log.ticks.push(rec);
            log.finish();
            return Ok(log);
        }
    };
    let mut carrot = None;
    while sim.tick < max_ticks && !sim.finished() {
        let target = operator_target(&sim, &mut carrot);
        let input = Observation::of(&scene, &sim.control_point(), &target)
            .map_err(|e| e.to_string())
            .and_then(|obs| op.tick(&obs, TICK_DT).map_err(|e| e.to_string()));
        let (input, failure) = match input {
            Ok(i) => (i, None),
            Err(message) => (DeviceInput::idle(op.model.believed_frame.device_dim(), TICK_DT), Some(message)),
        };
        let mut rec = sim.step(&input)?;
        let stop = failure.is_some();
        if let Some(message) = failure {
            rec.events.push(Event::Error { message });
        }
        log.ticks.push(rec);
        if stop {
            break;
        }
    }
    log.finish();
    Ok(log)
}
