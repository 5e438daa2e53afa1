//! Geometry of the table-mounted RRR linkage.
//!
//! The base joint J1 yaws the whole vertical plane. Inside that plane J2 and
//! J3 drive two links whose absolute elevations (`theta2`, `theta3`, measured
//! from horizontal, positive up) are transmitted by parallelograms, so the
//! carried utensil and handle frames never pitch or roll.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Yaw offsets (deg) of the five discrete handle orientations.
pub const HANDLE_ANGLES_DEG: [f64; 5] = [-30.0, -15.0, 0.0, 15.0, 30.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("target ({x}, {y}, {z}) is outside the reachable workspace")]
    Unreachable { x: f64, y: f64, z: f64 },
    #[error("target is reachable only outside the joint limits ({joint})")]
    LimitViolation { joint: &'static str },
}

/// A parameter that failed validation, with the config field it came from.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{field}: {constraint}")]
pub struct ValidationError {
    pub field: String,
    pub constraint: String,
}

impl ValidationError {
    pub fn new(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            constraint: constraint.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Joint {
    J1,
    J2,
    J3,
}

impl Joint {
    pub fn index(self) -> usize {
        match self {
            Joint::J1 => 0,
            Joint::J2 => 1,
            Joint::J3 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Joint::J1 => "j1",
            Joint::J2 => "j2",
            Joint::J3 => "j3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HandleVariant {
    /// Handle fixed at the far end of the link-2 parallelogram.
    OldTip,
    /// Handle fixed inside the parallelogram, `handle_distance` from J3.
    NewInboard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Handedness {
    Right,
    Left,
}

impl Handedness {
    fn sign(self) -> f64 {
        match self {
            Handedness::Right => 1.0,
            Handedness::Left => -1.0,
        }
    }
}

/// Closed angle intervals `[min, max]` (rad) for each joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimits {
    pub phi1: [f64; 2],
    pub theta2: [f64; 2],
    pub theta3: [f64; 2],
}

impl JointLimits {
    pub fn get(&self, joint: usize) -> [f64; 2] {
        match joint {
            0 => self.phi1,
            1 => self.theta2,
            2 => self.theta3,
            _ => panic!("joint index {joint} out of range"),
        }
    }

    pub fn set(&mut self, joint: usize, range: [f64; 2]) {
        match joint {
            0 => self.phi1 = range,
            1 => self.theta2 = range,
            2 => self.theta3 = range,
            _ => panic!("joint index {joint} out of range"),
        }
    }

    pub fn contains(&self, q: &Vector3<f64>) -> bool {
        (0..3).all(|i| {
            let [lo, hi] = self.get(i);
            q[i] >= lo && q[i] <= hi
        })
    }

    /// Uniform grid of `n` samples over joint `joint`, endpoints included.
    /// A degenerate interval yields a single sample.
    pub fn grid(&self, joint: usize, n: usize) -> Vec<f64> {
        let [lo, hi] = self.get(joint);
        linspace(lo, hi, n)
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if lo == hi || n <= 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
        .collect()
}

/// Geometric and inertial description of the linkage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismParams {
    /// Height of J2 above the table.
    #[serde(rename = "base_height_m")]
    pub base_height: f64,
    /// Horizontal offset of J2 from the J1 axis.
    #[serde(rename = "base_offset_m")]
    pub base_offset: f64,
    #[serde(rename = "link1_length_m")]
    pub link1_length: f64,
    #[serde(rename = "link2_length_m")]
    pub link2_length: f64,
    /// Utensil tip offset beyond the link-2 end, horizontal in the carried frame.
    #[serde(rename = "spoon_offset_m")]
    pub spoon_offset: f64,
    pub handle_variant: HandleVariant,
    /// Distance of the handle attachment from J3 along link 2.
    #[serde(rename = "handle_distance_m")]
    pub handle_distance: f64,
    /// Vertical bracket offset of the handle (both brackets lumped).
    #[serde(rename = "bracket_drop_m")]
    pub bracket_drop: f64,
    /// Lateral offset of the L-shaped bracket, toward the user for a right-handed build.
    #[serde(rename = "bracket_lateral_m")]
    pub bracket_lateral: f64,
    pub handedness: Handedness,
    pub handle_angle_index: usize,
    #[serde(rename = "joint_limits_rad")]
    pub joint_limits: JointLimits,
    #[serde(rename = "link1_mass_kg")]
    pub link1_mass: f64,
    /// Link 2 plus the carried parallelogram bars.
    #[serde(rename = "link2_mass_kg")]
    pub link2_mass: f64,
    /// Spoon plus compliant attachment, lumped at the link-2 end.
    #[serde(rename = "payload_mass_kg")]
    pub payload_mass: f64,
    #[serde(rename = "link1_com_fraction")]
    pub link1_com: f64,
    #[serde(rename = "link2_com_fraction")]
    pub link2_com: f64,
    #[serde(rename = "gravity_m_per_s2")]
    pub gravity: f64,
}

impl MechanismParams {
    /// Nominal device dimensions. `handle_distance` is the value calibrated
    /// against a 0.24 m handle rise for a 0.33 m spoon rise on the default
    /// plate-to-mouth path.
    pub fn nominal() -> Self {
        Self {
            base_height: 0.10,
            base_offset: 0.05,
            link1_length: 0.25,
            link2_length: 0.25,
            spoon_offset: 0.08,
            handle_variant: HandleVariant::NewInboard,
            handle_distance: NOMINAL_HANDLE_DISTANCE,
            bracket_drop: -0.02,
            bracket_lateral: 0.06,
            handedness: Handedness::Right,
            handle_angle_index: 2,
            joint_limits: JointLimits {
                phi1: [-PI / 2.0, PI / 2.0],
                theta2: [-0.5, 2.0],
                theta3: [-1.6, 1.2],
            },
            link1_mass: 0.35,
            link2_mass: 0.30,
            payload_mass: 0.10,
            link1_com: 0.5,
            link2_com: 0.5,
            gravity: 9.81,
        }
    }

    /// Switches the handle variant. `OldTip` pins the handle to the link-2 end.
    pub fn with_handle(mut self, variant: HandleVariant, distance: f64) -> Self {
        self.handle_variant = variant;
        self.handle_distance = match variant {
            HandleVariant::OldTip => self.link2_length,
            HandleVariant::NewInboard => distance,
        };
        self
    }

    /// Handle attachment radius actually used by the geometry.
    pub fn effective_handle_distance(&self) -> f64 {
        match self.handle_variant {
            HandleVariant::OldTip => self.link2_length,
            HandleVariant::NewInboard => self.handle_distance,
        }
    }

    pub fn handle_yaw_offset(&self) -> f64 {
        let idx = self.handle_angle_index.min(HANDLE_ANGLES_DEG.len() - 1);
        self.handedness.sign() * HANDLE_ANGLES_DEG[idx].to_radians()
    }

    /// Full horizontal extension of the spoon tip from the J1 axis.
    pub fn max_radial_reach(&self) -> f64 {
        self.base_offset + self.link1_length + self.link2_length + self.spoon_offset
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let positive = [
            ("base_height_m", self.base_height),
            ("base_offset_m", self.base_offset),
            ("link1_length_m", self.link1_length),
            ("link2_length_m", self.link2_length),
            ("spoon_offset_m", self.spoon_offset),
            ("handle_distance_m", self.handle_distance),
            ("gravity_m_per_s2", self.gravity),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ValidationError::new(name, "must be finite and > 0"));
            }
        }
        for (name, v) in [
            ("bracket_drop_m", self.bracket_drop),
            ("bracket_lateral_m", self.bracket_lateral),
        ] {
            if !v.is_finite() {
                return Err(ValidationError::new(name, "must be finite"));
            }
        }
        for (name, v) in [
            ("link1_mass_kg", self.link1_mass),
            ("link2_mass_kg", self.link2_mass),
            ("payload_mass_kg", self.payload_mass),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ValidationError::new(name, "must be finite and >= 0"));
            }
        }
        for (name, v) in [
            ("link1_com_fraction", self.link1_com),
            ("link2_com_fraction", self.link2_com),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(ValidationError::new(name, "must lie in (0, 1]"));
            }
        }
        if self.handle_distance > self.link2_length {
            return Err(ValidationError::new(
                "handle_distance_m",
                "must not exceed link2_length_m",
            ));
        }
        if self.handle_variant == HandleVariant::OldTip && self.handle_distance != self.link2_length
        {
            return Err(ValidationError::new(
                "handle_distance_m",
                "must equal link2_length_m for the old_tip variant",
            ));
        }
        if self.handle_angle_index >= HANDLE_ANGLES_DEG.len() {
            return Err(ValidationError::new(
                "handle_angle_index",
                "must be one of 0..=4",
            ));
        }
        for (i, name) in ["phi1", "theta2", "theta3"].iter().enumerate() {
            let [lo, hi] = self.joint_limits.get(i);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(ValidationError::new(
                    format!("joint_limits_rad.{name}"),
                    "requires finite min < max",
                ));
            }
        }
        Ok(())
    }
}

/// Calibrated inboard handle distance for the nominal geometry (m).
pub const NOMINAL_HANDLE_DISTANCE: f64 = 0.15978814350819448;

/// Generalized coordinates `(phi1, theta2, theta3)` and their rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointState {
    #[serde(rename = "q_rad")]
    pub q: Vector3<f64>,
    #[serde(rename = "qdot_rad_per_s")]
    pub qdot: Vector3<f64>,
}

impl JointState {
    pub fn at_rest(phi1: f64, theta2: f64, theta3: f64) -> Self {
        Self {
            q: Vector3::new(phi1, theta2, theta3),
            qdot: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.qdot.iter()).all(|v| v.is_finite())
    }
}

/// Position in the table frame (z up, origin on the J1 axis at table level)
/// and the orientation of the carried frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

/// Radial distance and height of the spoon tip in the vertical plane.
pub fn spoon_planar(params: &MechanismParams, theta2: f64, theta3: f64) -> (f64, f64) {
    let r = params.base_offset
        + params.link1_length * theta2.cos()
        + params.link2_length * theta3.cos()
        + params.spoon_offset;
    let z = params.base_height
        + params.link1_length * theta2.sin()
        + params.link2_length * theta3.sin();
    (r, z)
}

fn handle_planar(params: &MechanismParams, theta2: f64, theta3: f64) -> (f64, f64) {
    let d = params.effective_handle_distance();
    let r = params.base_offset + params.link1_length * theta2.cos() + d * theta3.cos();
    let z = params.base_height
        + params.link1_length * theta2.sin()
        + d * theta3.sin()
        + params.bracket_drop;
    (r, z)
}

fn lateral(params: &MechanismParams) -> f64 {
    params.handedness.sign() * params.bracket_lateral
}

pub fn spoon_pose(params: &MechanismParams, state: &JointState) -> Pose {
    let [phi, t2, t3] = [state.q[0], state.q[1], state.q[2]];
    let (r, z) = spoon_planar(params, t2, t3);
    Pose {
        position: Vector3::new(r * phi.cos(), r * phi.sin(), z),
        roll: 0.0,
        pitch: 0.0,
        yaw: phi,
    }
}

/// Handle grip point for the configured variant, bracket offsets carried at
/// constant orientation.
pub fn handle_pose(params: &MechanismParams, state: &JointState) -> Pose {
    let [phi, t2, t3] = [state.q[0], state.q[1], state.q[2]];
    let (r, z) = handle_planar(params, t2, t3);
    let b = lateral(params);
    let (s, c) = phi.sin_cos();
    Pose {
        position: Vector3::new(r * c - b * s, r * s + b * c, z),
        roll: 0.0,
        pitch: 0.0,
        yaw: phi + params.handle_yaw_offset(),
    }
}

pub fn forward_kinematics(params: &MechanismParams, state: &JointState) -> (Pose, Pose) {
    (spoon_pose(params, state), handle_pose(params, state))
}

/// Analytic `d(spoon position)/dq`.
pub fn jacobian(params: &MechanismParams, state: &JointState) -> Matrix3<f64> {
    let [phi, t2, t3] = [state.q[0], state.q[1], state.q[2]];
    let (r, _) = spoon_planar(params, t2, t3);
    planar_chain_jacobian(
        phi,
        r,
        0.0,
        params.link1_length,
        params.link2_length,
        t2,
        t3,
    )
}

/// Analytic `d(handle position)/dq`; its transpose maps grip forces to joint torques.
pub fn handle_jacobian(params: &MechanismParams, state: &JointState) -> Matrix3<f64> {
    let [phi, t2, t3] = [state.q[0], state.q[1], state.q[2]];
    let (r, _) = handle_planar(params, t2, t3);
    planar_chain_jacobian(
        phi,
        r,
        lateral(params),
        params.link1_length,
        params.effective_handle_distance(),
        t2,
        t3,
    )
}

/// Jacobian of `(r cos phi - b sin phi, r sin phi + b cos phi, z)` where the
/// point sits at radius `l1 cos t2 + l2 cos t3 + const` and height
/// `l1 sin t2 + l2 sin t3 + const`.
pub(crate) fn planar_chain_jacobian(
    phi: f64,
    r: f64,
    b: f64,
    l1: f64,
    l2: f64,
    t2: f64,
    t3: f64,
) -> Matrix3<f64> {
    let (s, c) = phi.sin_cos();
    let (s2, c2) = t2.sin_cos();
    let (s3, c3) = t3.sin_cos();
    #[rustfmt::skip]
    let j = Matrix3::new(
        -r * s - b * c, -l1 * s2 * c, -l2 * s3 * c,
         r * c - b * s, -l1 * s2 * s, -l2 * s3 * s,
         0.0,            l1 * c2,      l2 * c3,
    );
    j
}

fn wrap_into(angle: f64, [lo, hi]: [f64; 2]) -> f64 {
    // pick the 2*pi representative closest to the interval centre
    let mid = 0.5 * (lo + hi);
    angle + (2.0 * PI) * ((mid - angle) / (2.0 * PI)).round()
}

/// Solves for the joint angles placing the spoon tip at `target`.
///
/// The elbow-up branch (J3 above the chord from J2 to the target, hence
/// `theta2 >= theta3`) is preferred. If it violates the joint limits the
/// elbow-down branch is tried before reporting `LimitViolation`.
pub fn inverse_kinematics(
    params: &MechanismParams,
    target: &Vector3<f64>,
) -> Result<JointState, KinematicsError> {
    let unreachable = || KinematicsError::Unreachable {
        x: target.x,
        y: target.y,
        z: target.z,
    };
    if !target.iter().all(|v| v.is_finite()) {
        return Err(unreachable());
    }
    let r = target.x.hypot(target.y);
    let phi = if r == 0.0 {
        0.0
    } else {
        target.y.atan2(target.x)
    };
    let u = r - params.base_offset - params.spoon_offset;
    let w = target.z - params.base_height;
    let (l1, l2) = (params.link1_length, params.link2_length);
    let dist = u.hypot(w);
    let slack = 1e-12 * (l1 + l2);
    if dist > l1 + l2 + slack || dist < (l1 - l2).abs() - slack {
        return Err(unreachable());
    }
    let chord = if dist == 0.0 { 0.0 } else { w.atan2(u) };
    let cos_beta = if dist == 0.0 {
        0.0
    } else {
        ((l1 * l1 + dist * dist - l2 * l2) / (2.0 * l1 * dist)).clamp(-1.0, 1.0)
    };
    let beta = cos_beta.acos();

    let limits = &params.joint_limits;
    let phi = wrap_into(phi, limits.phi1);
    if phi < limits.phi1[0] || phi > limits.phi1[1] {
        return Err(KinematicsError::LimitViolation { joint: "phi1" });
    }

    let mut last_violation = "theta2";
    for sign in [1.0, -1.0] {
        let t2 = chord + sign * beta;
        let t3 = (w - l1 * t2.sin()).atan2(u - l1 * t2.cos());
        let t2 = wrap_into(t2, limits.theta2);
        let t3 = wrap_into(t3, limits.theta3);
        let q = Vector3::new(phi, t2, t3);
        if limits.contains(&q) {
            return Ok(JointState {
                q,
                qdot: Vector3::zeros(),
            });
        }
        last_violation = if t2 < limits.theta2[0] || t2 > limits.theta2[1] {
            "theta2"
        } else {
            "theta3"
        };
    }
    Err(KinematicsError::LimitViolation {
        joint: last_violation,
    })
}
