//! Per-tick trial records, JSONL logs and the metrics derived from them.
//!
//! A log is one header line, one line per tick and a final metrics line.
//! Metrics are always computed from the tick records alone, so replaying a
//! log reproduces them exactly.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::ControlFrame;
use crate::geometry::{Pose, Vec3};
use crate::mapping::{DeviceInput, MappingConfig};
use crate::metrics::{trajectory_error_default, TrajectoryError};
use crate::scenarios::{target_curve, Event, Point2, ScenarioKind};
use crate::scene::Scene;

pub const LOG_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum TrialLogError {
    #[error("log line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("log is empty")]
    Empty,
    #[error("unsupported log schema {0}")]
    Schema(u32),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub schema: u32,
    pub scene: Scene,
    pub frame: ControlFrame,
    pub mapping: MappingConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t_ms: u64,
    pub input: DeviceInput,
    pub q: Vec<f64>,
    /// Flange pose in the world frame.
    pub eef: Pose,
    pub fingertip: Vec3,
    pub events: Vec<Event>,
    /// Pen point in board coordinates (tracing only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pen: Option<Point2>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Timeout,
    /// Stopped by the user, the tick budget or an error.
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: ScenarioKind,
    pub outcome: Outcome,
    pub ticks: u64,
    pub time_s: f64,
    /// Tick count at Success/Done.
    pub completion_tick: Option<u64>,
    pub collisions: u32,
    pub halts: u32,
    pub errors: u32,
    /// Fingertip path length in the world, m.
    pub path_length_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectoryError>,
    /// Collisions for pick-and-place, trajectory error for tracing.
    pub error_score: f64,
}

pub fn compute_metrics(header: &LogHeader, ticks: &[TickRecord]) -> MetricsReport {
    let count = |pred: fn(&Event) -> bool| ticks.iter().flat_map(|t| &t.events).filter(|e| pred(e)).count() as u32;
    let completion_tick = ticks
        .iter()
        .position(|t| t.events.iter().any(|e| matches!(e, Event::Success | Event::Done)))
        .map(|i| i as u64 + 1);
    let timed_out = count(|e| *e == Event::Timeout) > 0;
    let outcome = match (completion_tick, timed_out) {
        (Some(_), _) => Outcome::Success,
        (None, true) => Outcome::Timeout,
        _ => Outcome::Incomplete,
    };
    let path_length_m = ticks.windows(2).map(|w| (w[1].fingertip - w[0].fingertip).norm()).sum();
    let collisions = count(|e| *e == Event::Collision);
    let scenario = header.scene.scenario;
    let trajectory = match (scenario, &header.scene.whiteboard) {
        (ScenarioKind::Tracing, Some(board)) => {
            let pen: Vec<Point2> = ticks.iter().filter_map(|t| t.pen).collect();
            target_curve(&board.letters).ok().and_then(|curve| trajectory_error_default(&pen, &curve).ok())
        }
        _ => None,
    };
    let error_score = match scenario {
        ScenarioKind::PickPlace => collisions as f64,
        ScenarioKind::Tracing => trajectory.map_or(2.0, |t| t.total),
    };
    MetricsReport {
        scenario,
        outcome,
        ticks: ticks.len() as u64,
        time_s: ticks.last().map_or(0.0, |t| t.t_ms as f64 / 1000.0),
        completion_tick,
        collisions,
        halts: count(|e| *e == Event::Halt),
        errors: count(|e| matches!(e, Event::Error { .. })),
        path_length_m,
        trajectory,
        error_score,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub header: LogHeader,
    pub ticks: Vec<TickRecord>,
    pub metrics: Option<MetricsReport>,
}

#[derive(Serialize, Deserialize)]
struct FinalLine {
    metrics: MetricsReport,
}

impl TrialLog {
    pub fn new(header: LogHeader) -> Self {
        TrialLog { header, ticks: Vec::new(), metrics: None }
    }

    pub fn finish(&mut self) -> &MetricsReport {
        self.metrics.insert(compute_metrics(&self.header, &self.ticks))
    }

    pub fn recompute_metrics(&self) -> MetricsReport {
        compute_metrics(&self.header, &self.ticks)
    }

    pub fn header_line(header: &LogHeader) -> String {
        serde_json::to_string(header).expect("header serializes")
    }

    pub fn tick_line(tick: &TickRecord) -> String {
        serde_json::to_string(tick).expect("tick serializes")
    }

    pub fn metrics_line(metrics: &MetricsReport) -> String {
        serde_json::to_string(&FinalLine { metrics: metrics.clone() }).expect("metrics serialize")
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::header_line(&self.header))?;
        for t in &self.ticks {
            writeln!(out, "{}", Self::tick_line(t))?;
        }
        if let Some(m) = &self.metrics {
            writeln!(out, "{}", Self::metrics_line(m))?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("utf-8 json")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<TrialLog, TrialLogError> {
        let mut lines = input.lines().enumerate().filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()));
        let (_, first) = lines.next().ok_or(TrialLogError::Empty)?;
        let header: LogHeader = serde_json::from_str(&first?).map_err(|source| TrialLogError::Parse { line: 1, source })?;
        if header.schema != LOG_SCHEMA {
            return Err(TrialLogError::Schema(header.schema));
        }
        let mut log = TrialLog::new(header);
        for (i, line) in lines {
            let line = line?;
            let parse = |source| TrialLogError::Parse { line: i + 1, source };
            if line.starts_with("{\"metrics\"") {
                log.metrics = Some(serde_json::from_str::<FinalLine>(&line).map_err(parse)?.metrics);
            } else {
                log.ticks.push(serde_json::from_str(&line).map_err(parse)?);
            }
        }
        Ok(log)
    }

    pub fn from_jsonl(text: &str) -> Result<TrialLog, TrialLogError> {
        Self::read_jsonl(text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<TrialLog, TrialLogError> {
        Self::read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn save(&self, path: &Path) -> Result<(), TrialLogError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(&mut f)?;
        f.flush()?;
        Ok(())
    }
}
