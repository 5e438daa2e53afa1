//! Design comparisons: handle excursion of the two handle variants, the
//! calibration of the inboard handle distance, workspace coverage and
//! stabilization scoring of simulated runs.

use nalgebra::Vector3;
use serde::Serialize;
use thiserror::Error;

use crate::dynamics::SimResult;
use crate::kinematics::{
    handle_pose, inverse_kinematics, linspace, spoon_pose, HandleVariant, JointLimits, JointState,
    KinematicsError, MechanismParams,
};

/// Deviation band (m) used for settling times.
pub const SETTLING_BAND: f64 = 0.005;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("target handle rise {target} m is outside the achievable range [{min}, {max}] m")]
    NotBracketed { target: f64, min: f64, max: f64 },
    #[error("handle rise is not increasing in the handle distance near {distance} m")]
    NotMonotone { distance: f64 },
    #[error("time grids differ: {0}")]
    GridMismatch(String),
}

/// Straight plate-to-mouth path in the vertical plane at zero base yaw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectorySpec {
    /// (radial distance, height) of the spoon tip in the plate, m.
    pub plate: [f64; 2],
    /// (radial distance, height) of the spoon tip at the mouth, m.
    pub mouth: [f64; 2],
    pub waypoints: usize,
}

impl Default for TrajectorySpec {
    /// Vertical lift of 0.33 m from a plate point 0.35 m out and 2 cm up.
    fn default() -> Self {
        Self {
            plate: [0.35, 0.02],
            mouth: [0.35, 0.35],
            waypoints: 50,
        }
    }
}

impl TrajectorySpec {
    pub fn rise(&self) -> f64 {
        self.mouth[1] - self.plate[1]
    }

    pub fn plate_point(&self) -> Vector3<f64> {
        Vector3::new(self.plate[0], 0.0, self.plate[1])
    }

    pub fn mouth_point(&self) -> Vector3<f64> {
        Vector3::new(self.mouth[0], 0.0, self.mouth[1])
    }

    /// Spoon-tip targets from plate to mouth, both ends included.
    pub fn points(&self) -> Vec<Vector3<f64>> {
        let (a, b) = (self.plate_point(), self.mouth_point());
        linspace(0.0, 1.0, self.waypoints.max(2))
            .into_iter()
            .map(|s| a * (1.0 - s) + b * s)
            .collect()
    }

    /// Distance from `p` to the path segment.
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        let (a, b) = (self.plate_point(), self.mouth_point());
        let ab = b - a;
        let len2 = ab.norm_squared();
        let s = if len2 == 0.0 {
            0.0
        } else {
            ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
        };
        (p - (a + ab * s)).norm()
    }
}

/// Joint states along the path (elbow-up inverse kinematics).
pub fn trajectory_states(
    params: &MechanismParams,
    trajectory: &TrajectorySpec,
) -> Result<Vec<JointState>, AnalysisError> {
    trajectory
        .points()
        .iter()
        .map(|p| inverse_kinematics(params, p).map_err(AnalysisError::from))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Excursion {
    pub spoon_rise: f64,
    pub handle_rise: f64,
    pub ratio: f64,
}

fn span(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    hi - lo
}

fn excursion_over(params: &MechanismParams, states: &[JointState]) -> Excursion {
    let spoon_rise = span(states.iter().map(|s| spoon_pose(params, s).position.z));
    let handle_rise = span(states.iter().map(|s| handle_pose(params, s).position.z));
    Excursion {
        spoon_rise,
        handle_rise,
        ratio: handle_rise / spoon_rise,
    }
}

/// Vertical travel of the spoon tip and of the handle along the path.
pub fn handle_excursion(
    params: &MechanismParams,
    trajectory: &TrajectorySpec,
) -> Result<Excursion, AnalysisError> {
    let states = trajectory_states(params, trajectory)?;
    Ok(excursion_over(params, &states))
}

/// Finds the inboard handle distance giving `target_rise` of handle travel.
///
/// Bisects on `(0, L2]`, checking at every probe that the handle rise grows
/// with the distance. The returned distance reproduces the target within
/// 1e-4 m.
pub fn calibrate_handle_distance(
    params: &MechanismParams,
    trajectory: &TrajectorySpec,
    target_rise: f64,
) -> Result<f64, AnalysisError> {
    const TOLERANCE: f64 = 1e-4;
    let l2 = params.link2_length;
    let mut probe = params.clone().with_handle(HandleVariant::NewInboard, l2);
    let states = trajectory_states(&probe, trajectory)?;
    let mut rise = |d: f64| {
        probe.handle_distance = d;
        excursion_over(&probe, &states).handle_rise
    };

    let (mut lo, mut hi) = (0.0, l2);
    let (mut f_lo, f_hi) = (rise(lo), rise(hi));
    if !(target_rise >= f_lo && target_rise <= f_hi + TOLERANCE) {
        return Err(AnalysisError::NotBracketed {
            target: target_rise,
            min: f_lo,
            max: f_hi,
        });
    }
    if (f_hi - target_rise).abs() <= TOLERANCE && target_rise >= f_hi {
        return Ok(l2);
    }
    let mut f_hi = f_hi;
    while hi - lo > 1e-12 * l2 {
        let mid = 0.5 * (lo + hi);
        let f_mid = rise(mid);
        if !(f_lo <= f_mid && f_mid <= f_hi) {
            return Err(AnalysisError::NotMonotone { distance: mid });
        }
        if f_mid < target_rise {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    let d = if (target_rise - f_lo) <= (f_hi - target_rise) {
        lo
    } else {
        hi
    };
    if d <= 0.0 {
        return Err(AnalysisError::NotBracketed {
            target: target_rise,
            min: f_lo,
            max: f_hi,
        });
    }
    Ok(d)
}

/// One row of the handle-variant comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HandleComparison {
    pub variant: HandleVariant,
    pub handle_distance: f64,
    #[serde(flatten)]
    pub excursion: Excursion,
}

/// Runs [`handle_excursion`] for the old tip handle and the configured
/// inboard handle on the same path.
pub fn compare_handles(
    params: &MechanismParams,
    trajectory: &TrajectorySpec,
) -> Result<Vec<HandleComparison>, AnalysisError> {
    let old = params
        .clone()
        .with_handle(HandleVariant::OldTip, params.link2_length);
    let new = params
        .clone()
        .with_handle(HandleVariant::NewInboard, params.handle_distance);
    [old, new]
        .iter()
        .map(|p| {
            Ok(HandleComparison {
                variant: p.handle_variant,
                handle_distance: p.effective_handle_distance(),
                excursion: handle_excursion(p, trajectory)?,
            })
        })
        .collect()
}

pub fn comparison_csv(rows: &[HandleComparison]) -> String {
    let mut out = String::from("variant,d_h,spoon_rise_m,handle_rise_m,ratio\n");
    for r in rows {
        let name = match r.variant {
            HandleVariant::OldTip => "old_tip",
            HandleVariant::NewInboard => "new_inboard",
        };
        out.push_str(&format!(
            "{name},{},{},{},{}\n",
            r.handle_distance, r.excursion.spoon_rise, r.excursion.handle_rise, r.excursion.ratio
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coverage {
    /// Longest contiguous reachable height interval starting at the plate.
    pub reachable_rise: f64,
    pub covers_rise: bool,
}

/// Checks, by inverse kinematics every millimetre, that the spoon can rise
/// vertically from the plate point by the trajectory's rise.
pub fn vertical_coverage(params: &MechanismParams, trajectory: &TrajectorySpec) -> Coverage {
    let rise = trajectory.rise();
    let steps = (rise / 1e-3).ceil().max(1.0) as usize;
    let mut reachable_rise = 0.0;
    for z in linspace(0.0, rise, steps + 1) {
        let p = Vector3::new(trajectory.plate[0], 0.0, trajectory.plate[1] + z);
        if inverse_kinematics(params, &p).is_err() {
            return Coverage {
                reachable_rise,
                covers_rise: false,
            };
        }
        reachable_rise = z;
    }
    Coverage {
        reachable_rise,
        covers_rise: true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkspaceSummary {
    #[serde(skip)]
    pub points: Vec<Vector3<f64>>,
    pub point_count: usize,
    /// Largest horizontal distance of the spoon tip from the J1 axis.
    pub max_reach: f64,
    pub min_reach: f64,
    pub vertical_span: f64,
    pub plate_coverage: Coverage,
}

/// Forward kinematics over a `resolution`^3 grid of `limits`.
pub fn workspace_sample(
    params: &MechanismParams,
    limits: &JointLimits,
    resolution: usize,
    trajectory: &TrajectorySpec,
) -> WorkspaceSummary {
    let grids: Vec<Vec<f64>> = (0..3).map(|i| limits.grid(i, resolution)).collect();
    let mut points = Vec::with_capacity(grids.iter().map(Vec::len).product());
    for &phi in &grids[0] {
        for &t2 in &grids[1] {
            for &t3 in &grids[2] {
                points.push(spoon_pose(params, &JointState::at_rest(phi, t2, t3)).position);
            }
        }
    }
    let radial = || points.iter().map(|p| p.x.hypot(p.y));
    WorkspaceSummary {
        point_count: points.len(),
        max_reach: radial().fold(f64::NEG_INFINITY, f64::max),
        min_reach: radial().fold(f64::INFINITY, f64::min),
        vertical_span: span(points.iter().map(|p| p.z)),
        plate_coverage: vertical_coverage(params, trajectory),
        points,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilizationReport {
    pub rms_deviation: f64,
    /// RMS deviation divided by the baseline's RMS deviation.
    pub attenuation: f64,
    pub settling_time: f64,
    pub peak_deviation: f64,
}

/// What the spoon should have done.
#[derive(Debug, Clone, Copy)]
pub enum Reference<'a> {
    /// Sample-by-sample spoon positions of another run on the same grid.
    Run(&'a SimResult),
    /// Distance to a straight plate-to-mouth path.
    Path(&'a TrajectorySpec),
}

fn deviations(reference: Reference<'_>, result: &SimResult) -> Result<Vec<f64>, AnalysisError> {
    match reference {
        Reference::Path(traj) => Ok(result
            .samples
            .iter()
            .map(|s| traj.distance(&s.spoon.position))
            .collect()),
        Reference::Run(r) => {
            if r.len() != result.len() || r.dt != result.dt {
                return Err(AnalysisError::GridMismatch(format!(
                    "{} samples at dt {} vs {} samples at dt {}",
                    r.len(),
                    r.dt,
                    result.len(),
                    result.dt
                )));
            }
            Ok(r.samples
                .iter()
                .zip(&result.samples)
                .map(|(a, b)| (a.spoon.position - b.spoon.position).norm())
                .collect())
        }
    }
}

fn rms(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Scores how far the spoon strayed from `reference`. The attenuation is
/// taken against `baseline` (typically the undamped run), or against
/// `result` itself when no baseline is given; a zero deviation scores 0.
pub fn stabilization_report(
    reference: Reference<'_>,
    result: &SimResult,
    baseline: Option<&SimResult>,
    band: f64,
) -> Result<StabilizationReport, AnalysisError> {
    let dev = deviations(reference, result)?;
    let rms_deviation = rms(&dev);
    let base_rms = match baseline {
        Some(b) => rms(&deviations(reference, b)?),
        None => rms_deviation,
    };
    let attenuation = if rms_deviation == 0.0 {
        0.0
    } else {
        rms_deviation / base_rms
    };
    let settling_time = match dev.iter().rposition(|d| *d >= band) {
        None => 0.0,
        Some(i) if i + 1 == dev.len() => result.samples[i].t,
        Some(i) => result.samples[i + 1].t,
    };
    Ok(StabilizationReport {
        rms_deviation,
        attenuation,
        settling_time,
        peak_deviation: dev.iter().copied().fold(0.0, f64::max),
    })
}
