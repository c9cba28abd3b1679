//! Objective measures (trajectory error, combined objective) and frame
//! diagnostics for alignment, naturalness and task semantics.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{camera_frame, ControlFrame, DeviceLayout};
use crate::geometry::{angle_between, nearest_rotation, GeometryError, Mat3, Plane, Vec3};
use crate::scenarios::{Point2, Polyline};
use crate::scene::Scene;

/// Pen traces are resampled to at most this spacing before scoring, m.
pub const RESAMPLE_STEP: f64 = 0.001;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty curve")]
    EmptyCurve,
    #[error("d_max must be positive, got {0}")]
    InvalidNormalizer(f64),
    #[error("need at least one participant and two conditions")]
    TooFewTrials,
    #[error("non-finite value in trial table")]
    NonFinite,
    #[error("value {value} outside bounds [{lo}, {hi}] of column {column}")]
    OutOfBounds { column: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("no constraint plane given")]
    MissingConstraint,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn dist2(a: &Point2, b: &Point2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn polyline_length(curve: &[Point2]) -> f64 {
    curve.windows(2).map(|w| dist2(&w[0], &w[1])).sum()
}

/// Distance from `p` to the polyline and the normalized arc-length
/// parameter (0 at the first vertex, 1 at the last) of the closest point.
/// Ties keep the earliest point along the curve.
pub fn closest_on_polyline(curve: &[Point2], p: &Point2) -> (f64, f64) {
    match curve {
        [] => (f64::INFINITY, 0.0),
        [only] => (dist2(only, p), 0.0),
        _ => {
            let total = polyline_length(curve);
            let mut best = (f64::INFINITY, 0.0);
            let mut walked = 0.0;
            for w in curve.windows(2) {
                let (a, b) = (w[0], w[1]);
                let d = [b[0] - a[0], b[1] - a[1]];
                let len2 = d[0] * d[0] + d[1] * d[1];
                let t = if len2 > 0.0 {
                    (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let q = [a[0] + t * d[0], a[1] + t * d[1]];
                let dist = dist2(&q, p);
                if dist < best.0 {
                    let s = if total > 0.0 { (walked + t * len2.sqrt()) / total } else { 0.0 };
                    best = (dist, s);
                }
                walked += len2.sqrt();
            }
            best
        }
    }
}

/// Keeps every vertex and subdivides each segment so consecutive samples are
/// at most `step` apart.
pub fn resample(curve: &[Point2], step: f64) -> Polyline {
    let mut out = Polyline::with_capacity(curve.len());
    if let Some(first) = curve.first() {
        out.push(*first);
    }
    for w in curve.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = ((dist2(&a, &b) / step).ceil() as usize).max(1);
        for i in 1..=n {
            let t = i as f64 / n as f64;
            out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
        }
    }
    out
}

/// Diagonal of the axis-aligned bounding box; the default accuracy normalizer.
pub fn bounding_diagonal(curve: &[Point2]) -> f64 {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in curve {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (hi[0] - lo[0]).hypot(hi[1] - lo[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryError {
    pub accuracy: f64,
    pub incompleteness: f64,
    pub total: f64,
}

impl TrajectoryError {
    pub fn completeness(&self) -> f64 {
        1.0 - self.incompleteness
    }
}

/// Accuracy (mean distance to the target over `d_max`, clamped to 1) plus
/// incompleteness (one minus the furthest arc-length parameter reached).
pub fn trajectory_error(pen: &[Point2], target: &[Point2], d_max: f64) -> Result<TrajectoryError, MetricsError> {
    if pen.is_empty() || target.is_empty() {
        return Err(MetricsError::EmptyCurve);
    }
    if !(d_max > 0.0 && d_max.is_finite()) {
        return Err(MetricsError::InvalidNormalizer(d_max));
    }
    let samples = resample(pen, RESAMPLE_STEP);
    let mut sum = 0.0;
    let mut completeness: f64 = 0.0;
    for p in &samples {
        let (d, s) = closest_on_polyline(target, p);
        sum += d;
        completeness = completeness.max(s);
    }
    let accuracy = (sum / samples.len() as f64 / d_max).clamp(0.0, 1.0);
    let incompleteness = 1.0 - completeness;
    Ok(TrajectoryError { accuracy, incompleteness, total: accuracy + incompleteness })
}

/// [`trajectory_error`] normalized by the target's bounding-box diagonal.
pub fn trajectory_error_default(pen: &[Point2], target: &[Point2]) -> Result<TrajectoryError, MetricsError> {
    if target.is_empty() {
        return Err(MetricsError::EmptyCurve);
    }
    trajectory_error(pen, target, bounding_diagonal(target))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub participant: String,
    pub condition: String,
    pub time_s: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedRow {
    pub participant: String,
    pub condition: String,
    pub time_s: f64,
    pub error: f64,
    pub raw_combined: f64,
    pub relative_combined: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedMeasure {
    pub rows: Vec<CombinedRow>,
    /// Columns that were constant over the table; they normalize to 0.
    pub degenerate_columns: Vec<String>,
}

/// Min-max bounds for the two columns. `None` uses the table's own range.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizationBounds {
    pub time_s: Option<(f64, f64)>,
    pub error: Option<(f64, f64)>,
}

pub fn combined_objective(trials: &[TrialOutcome]) -> Result<CombinedMeasure, MetricsError> {
    combined_objective_with_bounds(trials, NormalizationBounds::default())
}

pub fn combined_objective_with_bounds(
    trials: &[TrialOutcome],
    bounds: NormalizationBounds,
) -> Result<CombinedMeasure, MetricsError> {
    let conditions: std::collections::BTreeSet<&str> = trials.iter().map(|t| t.condition.as_str()).collect();
    if trials.is_empty() || conditions.len() < 2 {
        return Err(MetricsError::TooFewTrials);
    }
    if trials.iter().any(|t| !t.time_s.is_finite() || !t.error.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let mut degenerate_columns = Vec::new();
    let mut normalizer = |column: &'static str, values: Vec<f64>, given: Option<(f64, f64)>| {
        let (lo, hi) = given.unwrap_or_else(|| {
            values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
        });
        if let Some(v) = values.iter().find(|v| **v < lo || **v > hi) {
            return Err(MetricsError::OutOfBounds { column, value: *v, lo, hi });
        }
        let span = hi - lo;
        if span <= 0.0 {
            degenerate_columns.push(column.to_string());
        }
        Ok(values.into_iter().map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 }).collect::<Vec<_>>())
    };
    let times = normalizer("time_s", trials.iter().map(|t| t.time_s).collect(), bounds.time_s)?;
    let errors = normalizer("error", trials.iter().map(|t| t.error).collect(), bounds.error)?;
    let raws: Vec<f64> = times.iter().zip(&errors).map(|(a, b)| a + b).collect();

    let mut by_participant: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (t, r) in trials.iter().zip(&raws) {
        let e = by_participant.entry(t.participant.as_str()).or_default();
        e.0 += r;
        e.1 += 1;
    }
    let rows = trials
        .iter()
        .zip(&raws)
        .map(|(t, &raw)| {
            let (sum, n) = by_participant[t.participant.as_str()];
            CombinedRow {
                participant: t.participant.clone(),
                condition: t.condition.clone(),
                time_s: t.time_s,
                error: t.error,
                raw_combined: raw,
                relative_combined: raw - sum / n as f64,
            }
        })
        .collect();
    Ok(CombinedMeasure { rows, degenerate_columns })
}

pub fn write_combined_csv<W: Write>(measure: &CombinedMeasure, out: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    for row in &measure.rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_combined_csv<R: std::io::Read>(input: R) -> Result<Vec<CombinedRow>, MetricsError> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<CombinedRow>, _>>()?)
}

/// Relative weights of roll, pitch and yaw in the weighted misalignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RpyWeights {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Default for RpyWeights {
    fn default() -> Self {
        RpyWeights { roll: 2.0, pitch: 1.0, yaw: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameDiagnostics {
    pub misalignment_total: f64,
    /// Roll about camera forward, pitch about camera right, yaw about camera up.
    pub misalignment_rpy: [f64; 3],
    pub weighted_misalignment: f64,
    pub naturalness_angle: f64,
    pub semantics_residual: Option<f64>,
}

impl FrameDiagnostics {
    pub fn semantics(&self) -> Result<f64, MetricsError> {
        self.semantics_residual.ok_or(MetricsError::MissingConstraint)
    }
}

/// Frame columns as a 3×3 matrix whose columns are the images of device
/// right, forward and up. Planar frames treat device y as forward on the
/// desk and screen-up; the missing axis is completed by a cross product.
fn semantic_matrix(frame: &ControlFrame) -> Mat3 {
    let c: Vec<Vec3> = frame.columns.iter().map(|d| d.vec()).collect();
    match c.len() {
        3 => Mat3::from_columns(&[c[0], c[1], c[2]]),
        _ => Mat3::from_columns(&[c[0], -c[0].cross(&c[1]), c[1]]),
    }
}

/// Splits `r = Rz(yaw)·Rx(pitch)·Ry(roll)` in (right, forward, up)
/// coordinates. Returns (roll, pitch, yaw).
pub fn rpy_about_camera(r: &Mat3) -> [f64; 3] {
    let pitch = r[(2, 1)].clamp(-1.0, 1.0).asin();
    let roll = (-r[(2, 0)]).atan2(r[(2, 2)]);
    let yaw = (-r[(0, 1)]).atan2(r[(1, 1)]);
    [roll, pitch, yaw]
}

pub fn frame_diagnostics(
    frame: &ControlFrame,
    scene: &Scene,
    constraint: Option<&Plane>,
) -> Result<FrameDiagnostics, MetricsError> {
    frame_diagnostics_weighted(frame, scene, constraint, RpyWeights::default())
}

pub fn frame_diagnostics_weighted(
    frame: &ControlFrame,
    scene: &Scene,
    constraint: Option<&Plane>,
    weights: RpyWeights,
) -> Result<FrameDiagnostics, MetricsError> {
    let r_c = scene.camera_in_base();
    let layout = match frame.device_dim() {
        3 => DeviceLayout::Spatial,
        _ => DeviceLayout::Planar,
    };
    let reference = semantic_matrix(&camera_frame(&r_c, layout));
    let m = semantic_matrix(frame);
    let rel = nearest_rotation(&(reference.transpose() * m))?;
    let rpy = rpy_about_camera(rel.matrix());
    let weighted = weights.roll * rpy[0].abs() + weights.pitch * rpy[1].abs() + weights.yaw * rpy[2].abs();

    let up = scene.world_in_base().axis(2).vec();
    let naturalness_angle = if frame.device_dim() == 3 {
        angle_between(&frame.columns[2].vec(), &up)?
    } else {
        let n = frame.columns[0].vec().cross(&frame.columns[1].vec());
        angle_between(&n, &up)?.min(std::f64::consts::PI - angle_between(&n, &up)?)
    };
    let semantics_residual = constraint.map(|plane| {
        let normal = scene.robot_base.rotation.transpose().apply(&plane.normal.vec());
        frame.columns.iter().map(|c| c.dot(&normal).abs()).fold(0.0, f64::max).min(1.0)
    });
    Ok(FrameDiagnostics {
        misalignment_total: rel.angle(),
        misalignment_rpy: rpy,
        weighted_misalignment: weighted,
        naturalness_angle,
        semantics_residual,
    })
}
