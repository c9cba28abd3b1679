//! Teleoperation session state machine and its JSON wire protocol.
//!
//! A session is driven by three calls, all taking a monotonic time in
//! milliseconds: [`Session::handle_text`] for each client message,
//! [`Session::poll_qualification`] while qualifying, and [`Session::tick`]
//! at 30 Hz while a trial runs. None of them touch the clock or the network,
//! so transports and tests share the same behavior.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::frames::{ControlFrame, FrameKind};
use crate::geometry::{Pose, Vec3};
use crate::kinematics::ArmModel;
use crate::mapping::DeviceInput;
use crate::scenarios::Event;
use crate::scene::Scene;
use crate::sim::{Objects, Simulation, TICK_DT};
use crate::trial::{MetricsReport, TrialLog};

pub const PROTO_VERSION: u32 = 1;
/// Echoes requested during qualification.
pub const QUALIFY_PINGS: u32 = 300;
/// Every round trip must be strictly below this.
pub const QUALIFY_MAX_RTT_MS: f64 = 125.0;
/// Qualification fails if no echo arrives for this long.
pub const QUALIFY_TIMEOUT_MS: u64 = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Connected,
    Qualifying,
    Ready,
    InTrial,
    Done,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("{0}")]
    ProtocolViolation(String),
    #[error("malformed message: {0}")]
    BadMessage(String),
    #[error("unknown message type `{0}`")]
    UnknownType(String),
    #[error("no qualification echo for {0} ms")]
    QualificationTimeout(u64),
    #[error("{0}")]
    Setup(String),
}

impl SessionError {
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::ProtocolViolation(_) => "protocol_violation",
            SessionError::BadMessage(_) => "bad_message",
            SessionError::UnknownType(_) => "unknown_type",
            SessionError::QualificationTimeout(_) => "qualification_timeout",
            SessionError::Setup(_) => "setup_failed",
        }
    }
}

/// Device motion is in meters (the client converts pointer counts).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputMessage {
    #[serde(default)]
    pub dx: f64,
    #[serde(default)]
    pub dy: f64,
    /// Third axis for spatial devices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dz: Option<f64>,
    #[serde(default)]
    pub wheel: f64,
    #[serde(default)]
    pub buttons: u32,
    #[serde(default)]
    pub clutched: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_client_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMessage {
    Hello {
        proto: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frame: Option<FrameKind>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    QualifyBegin,
    QualifyEcho {
        seq: u32,
    },
    Input(InputMessage),
    Clutch {
        on: bool,
    },
    StartTrial,
    Stop,
}

const CLIENT_TYPES: [&str; 7] = ["hello", "qualify_begin", "qualify_echo", "input", "clutch", "start_trial", "stop"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)] // short-lived, serialized right away
pub enum ServerMessage {
    Scene {
        proto: u32,
        session: String,
        scene: Scene,
        arm: ArmModel,
        frame: ControlFrame,
    },
    State {
        t_ms: u64,
        joints: Vec<f64>,
        eef: Pose,
        fingertip: Vec3,
        objects: Objects,
        events: Vec<Event>,
    },
    QualifyPing {
        seq: u32,
        t_ms: u64,
    },
    QualifyResult {
        pass: bool,
        max_rtt_ms: f64,
        echoes: u32,
    },
    Event {
        event: Event,
    },
    TrialEnd {
        metrics: MetricsReport,
    },
    Error {
        code: String,
        message: String,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }

    fn error(e: &SessionError) -> ServerMessage {
        ServerMessage::Error { code: e.code().to_string(), message: e.to_string() }
    }
}

/// Parses a client message, distinguishing unknown types from malformed ones.
pub fn parse_client_message(text: &str) -> Result<ClientMessage, SessionError> {
    let value: Value = serde_json::from_str(text).map_err(|e| SessionError::BadMessage(e.to_string()))?;
    let kind = value
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| SessionError::BadMessage("missing string field `type`".into()))?;
    if !CLIENT_TYPES.contains(&kind) {
        return Err(SessionError::UnknownType(kind.to_string()));
    }
    serde_json::from_value(value).map_err(|e| SessionError::BadMessage(e.to_string()))
}

/// Messages to send and log lines to append, in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Output {
    pub messages: Vec<ServerMessage>,
    pub log_lines: Vec<String>,
}

impl Output {
    fn msg(m: ServerMessage) -> Output {
        Output { messages: vec![m], log_lines: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub sent: u32,
    pub received: u32,
    pub max_rtt_ms: f64,
    pub all_below_threshold: bool,
}

#[derive(Debug, Clone)]
struct Qualification {
    start_ms: u64,
    sent_at: Vec<u64>,
    rtt: Vec<Option<f64>>,
    last_progress_ms: u64,
}

impl Qualification {
    fn stats(&self) -> LatencyStats {
        let got: Vec<f64> = self.rtt.iter().flatten().copied().collect();
        LatencyStats {
            sent: self.sent_at.len() as u32,
            received: got.len() as u32,
            max_rtt_ms: got.iter().copied().fold(0.0, f64::max),
            all_below_threshold: got.iter().all(|r| *r < QUALIFY_MAX_RTT_MS),
        }
    }
}

pub struct Session {
    pub id: String,
    pub phase: Phase,
    pub scene: Scene,
    pub seed: u64,
    qualification: Option<Qualification>,
    pub latency: Option<LatencyStats>,
    sim: Option<Simulation>,
    log: Option<TrialLog>,
    pending: Vec<InputMessage>,
    clutch: bool,
}

impl Session {
    pub fn new(id: impl Into<String>, scene: Scene) -> Session {
        let seed = scene.seed;
        Session {
            id: id.into(),
            phase: Phase::Connected,
            scene,
            seed,
            qualification: None,
            latency: None,
            sim: None,
            log: None,
            pending: Vec::new(),
            clutch: false,
        }
    }

    pub fn simulation(&self) -> Option<&Simulation> {
        self.sim.as_ref()
    }

    pub fn trial_log(&self) -> Option<&TrialLog> {
        self.log.as_ref()
    }

    /// Parses and handles one text frame. Errors become `error` messages and
    /// leave the session unchanged.
    pub fn handle_text(&mut self, text: &str, now_ms: u64) -> Output {
        match parse_client_message(text) {
            Ok(msg) => self.handle_message(msg, now_ms),
            Err(e) => Output::msg(ServerMessage::error(&e)),
        }
    }

    pub fn handle_message(&mut self, msg: ClientMessage, now_ms: u64) -> Output {
        match self.transition(msg, now_ms) {
            Ok(out) => out,
            Err(e) => Output::msg(ServerMessage::error(&e)),
        }
    }

    fn violation(&self, what: &str) -> SessionError {
        SessionError::ProtocolViolation(format!("{what} not allowed in phase {:?}", self.phase))
    }

    fn transition(&mut self, msg: ClientMessage, now_ms: u64) -> Result<Output, SessionError> {
        use ClientMessage as C;
        match (self.phase, msg) {
            (Phase::Done, _) => Err(SessionError::ProtocolViolation("session is done".into())),
            (Phase::Connected, C::Hello { proto, frame, seed }) => {
                if proto != PROTO_VERSION {
                    return Err(SessionError::BadMessage(format!("unsupported proto {proto}")));
                }
                let mut scene = self.scene.clone();
                if let Some(kind) = frame {
                    scene.frame = kind;
                }
                let sim = Simulation::new(&scene, seed.unwrap_or(self.seed)).map_err(|e| SessionError::Setup(e.to_string()))?;
                self.scene = scene;
                self.seed = seed.unwrap_or(self.seed);
                self.phase = Phase::Qualifying;
                Ok(Output::msg(ServerMessage::Scene {
                    proto: PROTO_VERSION,
                    session: self.id.clone(),
                    scene: self.scene.clone(),
                    arm: sim.model.clone(),
                    frame: sim.frame.clone(),
                }))
            }
            (_, C::Hello { .. }) => Err(self.violation("hello")),
            (Phase::Qualifying, C::QualifyBegin) => {
                if self.qualification.is_some() {
                    return Err(SessionError::ProtocolViolation("qualification already running".into()));
                }
                self.qualification = Some(Qualification {
                    start_ms: now_ms,
                    sent_at: Vec::new(),
                    rtt: Vec::new(),
                    last_progress_ms: now_ms,
                });
                Ok(self.poll_qualification(now_ms))
            }
            (_, C::QualifyBegin) => Err(self.violation("qualify_begin")),
            (Phase::Qualifying, C::QualifyEcho { seq }) => {
                let q = self.qualification.as_mut().ok_or_else(|| SessionError::ProtocolViolation("no qualification running".into()))?;
                let i = seq as usize;
                if i >= q.sent_at.len() || q.rtt[i].is_some() {
                    return Err(SessionError::ProtocolViolation(format!("unexpected echo {seq}")));
                }
                q.rtt[i] = Some(now_ms.saturating_sub(q.sent_at[i]) as f64);
                q.last_progress_ms = now_ms;
                Ok(self.poll_qualification(now_ms))
            }
            (_, C::QualifyEcho { .. }) => Err(self.violation("qualify_echo")),
            (Phase::Ready, C::StartTrial) => {
                let sim = Simulation::new(&self.scene, self.seed).map_err(|e| SessionError::Setup(e.to_string()))?;
                let log = TrialLog::new(sim.header());
                let header = TrialLog::header_line(&log.header);
                let (eef, fingertip) = sim.eef_world();
                let state = ServerMessage::State {
                    t_ms: 0,
                    joints: sim.state.q.clone(),
                    eef,
                    fingertip,
                    objects: sim.objects(),
                    events: Vec::new(),
                };
                self.sim = Some(sim);
                self.log = Some(log);
                self.pending.clear();
                self.clutch = false;
                self.phase = Phase::InTrial;
                Ok(Output { messages: vec![state], log_lines: vec![header] })
            }
            (_, C::StartTrial) => Err(self.violation("start_trial")),
            (Phase::InTrial, C::Input(input)) => {
                let dims = self.scene.device.device_dim();
                if input.dz.is_some() && dims < 3 {
                    return Err(SessionError::BadMessage("dz given for a planar device".into()));
                }
                if ![input.dx, input.dy, input.dz.unwrap_or(0.0), input.wheel].iter().all(|v| v.is_finite()) {
                    return Err(SessionError::BadMessage("non-finite input".into()));
                }
                self.pending.push(input);
                Ok(Output::default())
            }
            (_, C::Input(_)) => Err(self.violation("input")),
            (Phase::InTrial, C::Clutch { on }) => {
                self.clutch = on;
                Ok(Output::default())
            }
            (_, C::Clutch { .. }) => Err(self.violation("clutch")),
            (Phase::InTrial, C::Stop) => Ok(self.end_trial()),
            (_, C::Stop) => {
                self.phase = Phase::Done;
                Ok(Output::default())
            }
        }
    }

    /// Emits due qualification pings and, once every echo is back or the
    /// link went quiet, the result.
    pub fn poll_qualification(&mut self, now_ms: u64) -> Output {
        let mut out = Output::default();
        if self.phase != Phase::Qualifying {
            return out;
        }
        let Some(q) = self.qualification.as_mut() else { return out };
        while (q.sent_at.len() as u32) < QUALIFY_PINGS {
            let seq = q.sent_at.len() as u64;
            let due = q.start_ms + seq * 1000 / crate::sim::TICK_HZ;
            if due > now_ms {
                break;
            }
            q.sent_at.push(due);
            q.rtt.push(None);
            out.messages.push(ServerMessage::QualifyPing { seq: seq as u32, t_ms: due });
        }
        let stats = q.stats();
        let complete = stats.received == QUALIFY_PINGS;
        let outstanding = stats.received < stats.sent;
        let stalled = outstanding && now_ms.saturating_sub(q.last_progress_ms) > QUALIFY_TIMEOUT_MS;
        if complete || stalled {
            if stalled {
                let e = SessionError::QualificationTimeout(now_ms - q.last_progress_ms);
                out.messages.push(ServerMessage::error(&e));
            }
            let pass = complete && stats.all_below_threshold;
            out.messages.push(ServerMessage::QualifyResult { pass, max_rtt_ms: stats.max_rtt_ms, echoes: stats.received });
            self.latency = Some(stats);
            self.qualification = None;
            self.phase = if pass { Phase::Ready } else { Phase::Done };
        } else if !outstanding {
            // nothing in flight: the quiet-link clock restarts with the next ping
            q.last_progress_ms = now_ms;
        }
        out
    }

    /// Time of the next qualification ping, if one is scheduled.
    pub fn next_ping_ms(&self) -> Option<u64> {
        let q = self.qualification.as_ref()?;
        let n = q.sent_at.len() as u64;
        (n < QUALIFY_PINGS as u64).then(|| q.start_ms + n * 1000 / crate::sim::TICK_HZ)
    }

    fn coalesced_input(&mut self) -> DeviceInput {
        let dims = self.scene.device.device_dim();
        let mut t = vec![0.0; dims];
        let mut wheel = 0.0;
        let mut clutched = self.clutch;
        for m in self.pending.drain(..) {
            t[0] += m.dx;
            t[1] += m.dy;
            if dims == 3 {
                t[2] += m.dz.unwrap_or(0.0);
            }
            wheel += m.wheel;
            clutched |= m.clutched;
        }
        let mut input = DeviceInput::translation(&t, TICK_DT);
        if self.scene.device == crate::frames::DeviceLayout::PlanarWheel {
            input.wheel = Some(wheel);
        }
        input.clutched = clutched;
        input
    }

    /// One 30 Hz step of the running trial.
    pub fn tick(&mut self) -> Output {
        if self.phase != Phase::InTrial {
            return Output::default();
        }
        let input = self.coalesced_input();
        let sim = self.sim.as_mut().expect("trial has a simulation");
        let rec = match sim.step(&input) {
            Ok(rec) => rec,
            Err(_) => return self.end_trial(),
        };
        let mut out = Output::default();
        out.messages.push(ServerMessage::State {
            t_ms: rec.t_ms,
            joints: rec.q.clone(),
            eef: rec.eef,
            fingertip: rec.fingertip,
            objects: sim.objects(),
            events: rec.events.clone(),
        });
        for e in &rec.events {
            out.messages.push(ServerMessage::Event { event: e.clone() });
        }
        out.log_lines.push(TrialLog::tick_line(&rec));
        let finished = sim.finished();
        self.log.as_mut().expect("trial has a log").ticks.push(rec);
        if finished {
            let end = self.end_trial();
            out.messages.extend(end.messages);
            out.log_lines.extend(end.log_lines);
        }
        out
    }

    fn end_trial(&mut self) -> Output {
        self.phase = Phase::Done;
        let log = self.log.as_mut().expect("trial has a log");
        let metrics = log.finish().clone();
        Output {
            messages: vec![ServerMessage::TrialEnd { metrics: metrics.clone() }],
            log_lines: vec![TrialLog::metrics_line(&metrics)],
        }
    }
}
