//! Gravity load and its cancellation by base-anchored springs.
//!
//! Both balancing springs run from an anchor on the vertical through the
//! balanced joint (height `anchor_radius` above it) to a point `bar_radius`
//! along the base-adjacent bar. The J3 spring acts on the parallelogram bar
//! that copies `theta3`, so each spring torque depends on one absolute angle.

use nalgebra::{Vector3, SVD};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{handle_jacobian, Joint, JointState, MechanismParams, ValidationError};

/// Samples used for minimax synthesis and for residual profiles.
pub const BALANCE_GRID_POINTS: usize = 181;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StaticsError {
    #[error("infeasible synthesis bounds: {0}")]
    InfeasibleBounds(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpringKind {
    LinearZeroFreeLength,
    LinearReal,
    Torsion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpringSpec {
    LinearZeroFreeLength {
        joint: Joint,
        #[serde(rename = "stiffness_n_per_m")]
        stiffness: f64,
        #[serde(rename = "anchor_radius_m")]
        anchor_radius: f64,
        #[serde(rename = "bar_radius_m")]
        bar_radius: f64,
    },
    LinearReal {
        joint: Joint,
        #[serde(rename = "stiffness_n_per_m")]
        stiffness: f64,
        #[serde(rename = "free_length_m")]
        free_length: f64,
        #[serde(rename = "anchor_radius_m")]
        anchor_radius: f64,
        #[serde(rename = "bar_radius_m")]
        bar_radius: f64,
    },
    Torsion {
        joint: Joint,
        #[serde(rename = "stiffness_n_m_per_rad")]
        stiffness: f64,
        #[serde(rename = "neutral_angle_rad")]
        neutral_angle: f64,
    },
}

impl SpringSpec {
    pub fn kind(&self) -> SpringKind {
        match self {
            SpringSpec::LinearZeroFreeLength { .. } => SpringKind::LinearZeroFreeLength,
            SpringSpec::LinearReal { .. } => SpringKind::LinearReal,
            SpringSpec::Torsion { .. } => SpringKind::Torsion,
        }
    }

    pub fn joint(&self) -> Joint {
        match *self {
            SpringSpec::LinearZeroFreeLength { joint, .. }
            | SpringSpec::LinearReal { joint, .. }
            | SpringSpec::Torsion { joint, .. } => joint,
        }
    }

    pub fn stiffness(&self) -> f64 {
        match *self {
            SpringSpec::LinearZeroFreeLength { stiffness, .. }
            | SpringSpec::LinearReal { stiffness, .. }
            | SpringSpec::Torsion { stiffness, .. } => stiffness,
        }
    }

    pub fn with_stiffness(mut self, k: f64) -> Self {
        match &mut self {
            SpringSpec::LinearZeroFreeLength { stiffness, .. }
            | SpringSpec::LinearReal { stiffness, .. }
            | SpringSpec::Torsion { stiffness, .. } => *stiffness = k,
        }
        self
    }

    /// Spring length for the linear kinds (anchor above the joint).
    fn length(anchor: f64, bar: f64, angle: f64) -> f64 {
        (anchor * anchor + bar * bar - 2.0 * anchor * bar * angle.sin())
            .max(0.0)
            .sqrt()
    }

    /// Torque on the balanced joint at absolute link angle `angle`.
    pub fn torque(&self, angle: f64) -> f64 {
        match *self {
            SpringSpec::Torsion {
                stiffness,
                neutral_angle,
                ..
            } => -stiffness * (angle - neutral_angle),
            SpringSpec::LinearZeroFreeLength {
                stiffness,
                anchor_radius,
                bar_radius,
                ..
            } => stiffness * anchor_radius * bar_radius * angle.cos(),
            SpringSpec::LinearReal {
                stiffness,
                free_length,
                anchor_radius,
                bar_radius,
                ..
            } => {
                let l = Self::length(anchor_radius, bar_radius, angle);
                if l == 0.0 {
                    return 0.0;
                }
                // -k (l - l0) dl/dtheta with dl/dtheta = -a b cos(theta) / l
                let dl = -anchor_radius * bar_radius * angle.cos() / l;
                -stiffness * (l - free_length) * dl
            }
        }
    }

    /// Elastic energy stored at `angle`.
    pub fn potential(&self, angle: f64) -> f64 {
        match *self {
            SpringSpec::Torsion {
                stiffness,
                neutral_angle,
                ..
            } => 0.5 * stiffness * (angle - neutral_angle).powi(2),
            SpringSpec::LinearZeroFreeLength {
                stiffness,
                anchor_radius,
                bar_radius,
                ..
            } => 0.5 * stiffness * Self::length(anchor_radius, bar_radius, angle).powi(2),
            SpringSpec::LinearReal {
                stiffness,
                free_length,
                anchor_radius,
                bar_radius,
                ..
            } => {
                0.5 * stiffness
                    * (Self::length(anchor_radius, bar_radius, angle) - free_length).powi(2)
            }
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let k = self.stiffness();
        if !(k.is_finite() && k >= 0.0) {
            return Err(ValidationError::new("stiffness", "must be finite and >= 0"));
        }
        match *self {
            SpringSpec::Torsion { neutral_angle, .. } => {
                if !neutral_angle.is_finite() {
                    return Err(ValidationError::new("neutral_angle_rad", "must be finite"));
                }
            }
            SpringSpec::LinearZeroFreeLength {
                anchor_radius,
                bar_radius,
                ..
            }
            | SpringSpec::LinearReal {
                anchor_radius,
                bar_radius,
                ..
            } => {
                if !(anchor_radius.is_finite() && anchor_radius > 0.0) {
                    return Err(ValidationError::new("anchor_radius_m", "must be > 0"));
                }
                if !(bar_radius.is_finite() && bar_radius > 0.0) {
                    return Err(ValidationError::new("bar_radius_m", "must be > 0"));
                }
            }
        }
        if let SpringSpec::LinearReal { free_length, .. } = *self {
            if !(free_length.is_finite() && free_length >= 0.0) {
                return Err(ValidationError::new("free_length_m", "must be >= 0"));
            }
        }
        if self.joint() == Joint::J1 {
            return Err(ValidationError::new(
                "joint",
                "springs balance j2 or j3; j1 carries no gravity load",
            ));
        }
        Ok(())
    }
}

pub fn spring_torque(spec: &SpringSpec, angle: f64) -> f64 {
    spec.torque(angle)
}

/// Gravity load coefficients `G2, G3` such that `tau_g = -G cos(theta)`.
pub fn gravity_coefficients(params: &MechanismParams) -> (f64, f64) {
    let p = params;
    let g2 =
        p.gravity * p.link1_length * (p.link1_com * p.link1_mass + p.link2_mass + p.payload_mass);
    let g3 = p.gravity * p.link2_length * (p.link2_com * p.link2_mass + p.payload_mass);
    (g2, g3)
}

/// Gravity torques on J2 and J3. J1 turns about a vertical axis and carries none.
pub fn gravity_torque(params: &MechanismParams, state: &JointState) -> (f64, f64) {
    let (g2, g3) = gravity_coefficients(params);
    (-g2 * state.q[1].cos(), -g3 * state.q[2].cos())
}

/// Gravitational potential energy, table level as datum.
pub fn gravity_potential(params: &MechanismParams, state: &JointState) -> f64 {
    let p = params;
    let (s2, s3) = (state.q[1].sin(), state.q[2].sin());
    let (l1, l2) = (p.link1_length, p.link2_length);
    let h0 = p.base_height;
    let z1 = h0 + p.link1_com * l1 * s2;
    let z2 = h0 + l1 * s2 + p.link2_com * l2 * s3;
    let zp = h0 + l1 * s2 + l2 * s3;
    p.gravity * (p.link1_mass * z1 + p.link2_mass * z2 + p.payload_mass * zp)
}

fn joint_angle(state: &JointState, joint: Joint) -> f64 {
    state.q[joint.index()]
}

/// Sum of spring torques per joint.
pub fn spring_torques(springs: &[SpringSpec], state: &JointState) -> Vector3<f64> {
    let mut tau = Vector3::zeros();
    for s in springs {
        let j = s.joint();
        tau[j.index()] += s.torque(joint_angle(state, j));
    }
    tau
}

pub fn spring_potential(springs: &[SpringSpec], state: &JointState) -> f64 {
    springs
        .iter()
        .map(|s| s.potential(joint_angle(state, s.joint())))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorqueSample {
    pub angle: f64,
    pub gravity: f64,
    pub spring: f64,
    pub residual: f64,
}

/// Gravity, spring and net torque sampled over one joint's range.
#[derive(Debug, Clone, PartialEq)]
pub struct TorqueProfile {
    pub joint: Joint,
    pub samples: Vec<TorqueSample>,
}

impl TorqueProfile {
    pub fn max_abs_residual(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.residual.abs())
            .fold(0.0, f64::max)
    }

    /// CSV with header `angle_rad,tau_gravity,tau_spring,tau_residual`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("angle_rad,tau_gravity,tau_spring,tau_residual\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.angle, s.gravity, s.spring, s.residual
            ));
        }
        out
    }
}

fn profile_for(params: &MechanismParams, springs: &[SpringSpec], joint: Joint) -> TorqueProfile {
    let (g2, g3) = gravity_coefficients(params);
    let g = if joint == Joint::J2 { g2 } else { g3 };
    let samples = params
        .joint_limits
        .grid(joint.index(), BALANCE_GRID_POINTS)
        .into_iter()
        .map(|angle| {
            let gravity = -g * angle.cos();
            let spring: f64 = springs
                .iter()
                .filter(|s| s.joint() == joint)
                .map(|s| s.torque(angle))
                .sum();
            TorqueSample {
                angle,
                gravity,
                spring,
                residual: gravity + spring,
            }
        })
        .collect();
    TorqueProfile { joint, samples }
}

/// Net torque `tau_g + sum(tau_s)` over the J2 and J3 ranges.
pub fn residual_torque_profile(
    params: &MechanismParams,
    springs: &[SpringSpec],
) -> (TorqueProfile, TorqueProfile) {
    (
        profile_for(params, springs, Joint::J2),
        profile_for(params, springs, Joint::J3),
    )
}

/// Parameter box for spring synthesis. Anchors are fixed at the midpoints;
/// only the stiffness is optimized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthesisBounds {
    pub anchor_radius: [f64; 2],
    pub bar_radius: [f64; 2],
    /// Free length used for `LinearReal` springs.
    pub free_length: f64,
    pub torsion_neutral: [f64; 2],
}

impl Default for SynthesisBounds {
    fn default() -> Self {
        Self {
            anchor_radius: [0.05, 0.15],
            bar_radius: [0.05, 0.15],
            free_length: 0.01,
            torsion_neutral: [std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2],
        }
    }
}

impl SynthesisBounds {
    fn check(&self, kind: SpringKind) -> Result<(), StaticsError> {
        let interval = |name: &str, [lo, hi]: [f64; 2], positive: bool| {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(StaticsError::InfeasibleBounds(format!(
                    "{name} interval [{lo}, {hi}] is empty"
                )));
            }
            if positive && hi <= 0.0 {
                return Err(StaticsError::InfeasibleBounds(format!(
                    "{name} interval [{lo}, {hi}] has no positive value"
                )));
            }
            Ok(())
        };
        match kind {
            SpringKind::Torsion => interval("torsion_neutral", self.torsion_neutral, false),
            _ => {
                interval("anchor_radius", self.anchor_radius, true)?;
                interval("bar_radius", self.bar_radius, true)?;
                if kind == SpringKind::LinearReal && !(self.free_length >= 0.0) {
                    return Err(StaticsError::InfeasibleBounds(
                        "free_length must be >= 0".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    fn spring(&self, kind: SpringKind, joint: Joint) -> SpringSpec {
        let mid = |[lo, hi]: [f64; 2]| 0.5 * (lo + hi);
        // midpoint of a box clipped to the positive half-line
        let mid_pos = |[lo, hi]: [f64; 2]| mid([lo.max(0.0), hi]).max(f64::MIN_POSITIVE);
        match kind {
            SpringKind::LinearZeroFreeLength => SpringSpec::LinearZeroFreeLength {
                joint,
                stiffness: 0.0,
                anchor_radius: mid_pos(self.anchor_radius),
                bar_radius: mid_pos(self.bar_radius),
            },
            SpringKind::LinearReal => SpringSpec::LinearReal {
                joint,
                stiffness: 0.0,
                free_length: self.free_length,
                anchor_radius: mid_pos(self.anchor_radius),
                bar_radius: mid_pos(self.bar_radius),
            },
            SpringKind::Torsion => SpringSpec::Torsion {
                joint,
                stiffness: 0.0,
                neutral_angle: mid(self.torsion_neutral),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Balancing {
    pub j2: SpringSpec,
    pub j3: SpringSpec,
    pub j2_profile: TorqueProfile,
    pub j3_profile: TorqueProfile,
}

impl Balancing {
    pub fn springs(&self) -> [SpringSpec; 2] {
        [self.j2, self.j3]
    }

    pub fn max_residual(&self) -> f64 {
        self.j2_profile
            .max_abs_residual()
            .max(self.j3_profile.max_abs_residual())
    }
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
fn golden_section(mut lo: f64, mut hi: f64, rel_tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > rel_tol * hi.abs().max(lo.abs()).max(f64::MIN_POSITIVE) {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    // the interior probes can beat the midpoint on a kinked objective
    [mid, x1, x2]
        .into_iter()
        .min_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap_or(mid)
}

fn synthesize_joint(
    params: &MechanismParams,
    kind: SpringKind,
    bounds: &SynthesisBounds,
    joint: Joint,
    gravity_coeff: f64,
) -> SpringSpec {
    let unit = bounds.spring(kind, joint).with_stiffness(1.0);
    if gravity_coeff == 0.0 {
        return unit.with_stiffness(0.0);
    }
    if let SpringSpec::LinearZeroFreeLength {
        anchor_radius,
        bar_radius,
        ..
    } = unit
    {
        return unit.with_stiffness(gravity_coeff / (anchor_radius * bar_radius));
    }

    let angles = params.joint_limits.grid(joint.index(), BALANCE_GRID_POINTS);
    let gravity: Vec<f64> = angles.iter().map(|a| -gravity_coeff * a.cos()).collect();
    let per_k: Vec<f64> = angles.iter().map(|a| unit.torque(*a)).collect();
    let objective = |k: f64| {
        gravity
            .iter()
            .zip(&per_k)
            .map(|(g, u)| (g + k * u).abs())
            .fold(0.0, f64::max)
    };
    // the minimax stiffness lies between the pointwise balancing ratios
    let ratios: Vec<f64> = gravity
        .iter()
        .zip(&per_k)
        .filter(|(_, u)| u.abs() > 1e-12)
        .map(|(g, u)| -g / u)
        .collect();
    if ratios.is_empty() {
        return unit.with_stiffness(0.0);
    }
    let lo = ratios
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .max(0.0);
    let hi = ratios
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    if hi <= lo {
        return unit.with_stiffness(lo);
    }
    unit.with_stiffness(golden_section(lo, hi, 1e-10, objective))
}

/// Chooses spring stiffnesses cancelling gravity on J2 and J3.
///
/// Zero-free-length springs balance exactly in closed form
/// (`k a b = G`). The other kinds minimize the worst residual over
/// [`BALANCE_GRID_POINTS`] samples of each joint range.
pub fn synthesize_balancing(
    params: &MechanismParams,
    kind: SpringKind,
    bounds: &SynthesisBounds,
) -> Result<Balancing, StaticsError> {
    bounds.check(kind)?;
    for (i, name) in [(1, "theta2"), (2, "theta3")] {
        let [lo, hi] = params.joint_limits.get(i);
        if !(lo < hi) {
            return Err(StaticsError::InfeasibleBounds(format!(
                "{name} range is degenerate"
            )));
        }
    }
    let (g2, g3) = gravity_coefficients(params);
    let j2 = synthesize_joint(params, kind, bounds, Joint::J2, g2);
    let j3 = synthesize_joint(params, kind, bounds, Joint::J3, g3);
    let (j2_profile, j3_profile) = residual_torque_profile(params, &[j2, j3]);
    Ok(Balancing {
        j2,
        j3,
        j2_profile,
        j3_profile,
    })
}

/// Grip force the user must apply at the handle to hold `state` still.
///
/// Minimum-norm solution of `J_h^T F = -(tau_g + tau_s)`.
pub fn static_handle_force(
    params: &MechanismParams,
    springs: &[SpringSpec],
    state: &JointState,
) -> Vector3<f64> {
    let (tg2, tg3) = gravity_torque(params, state);
    let net = Vector3::new(0.0, tg2, tg3) + spring_torques(springs, state);
    let jt = handle_jacobian(params, state).transpose();
    SVD::new(jt, true, true)
        .solve(&(-net), 1e-12)
        .unwrap_or_else(|_| Vector3::zeros())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn central_diff(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn vertical_link_has_no_gravity_torque() {
        let p = MechanismParams::nominal();
        let (t2, _) = gravity_torque(&p, &JointState::at_rest(0.0, PI / 2.0, 0.3));
        assert!(t2.abs() < 1e-15);
    }

    #[test]
    fn horizontal_gravity_torque_matches_potential_gradient() {
        let p = MechanismParams::nominal();
        let expected = -p.gravity
            * p.link1_length
            * (p.link1_com * p.link1_mass + p.link2_mass + p.payload_mass);
        let (t2, _) = gravity_torque(&p, &JointState::at_rest(0.0, 0.0, 0.0));
        assert_eq!(t2, expected);
        let fd = -central_diff(
            |a| gravity_potential(&p, &JointState::at_rest(0.0, a, 0.0)),
            0.0,
        );
        assert!((fd - expected).abs() < 1e-6 * expected.abs());
    }

    #[test]
    fn gravity_is_linear_in_mass() {
        let p = MechanismParams::nominal();
        let heavy = MechanismParams {
            link1_mass: 2.0 * p.link1_mass,
            link2_mass: 2.0 * p.link2_mass,
            payload_mass: 2.0 * p.payload_mass,
            ..p.clone()
        };
        let s = JointState::at_rest(0.0, 0.3, -0.6);
        let (a2, a3) = gravity_torque(&p, &s);
        let (b2, b3) = gravity_torque(&heavy, &s);
        assert!((b2 - 2.0 * a2).abs() < 1e-14);
        assert!((b3 - 2.0 * a3).abs() < 1e-14);
    }

    #[test]
    fn zero_stiffness_gives_zero_torque() {
        for spec in [
            SpringSpec::Torsion {
                joint: Joint::J2,
                stiffness: 0.0,
                neutral_angle: 0.4,
            },
            SpringSpec::LinearReal {
                joint: Joint::J2,
                stiffness: 0.0,
                free_length: 0.02,
                anchor_radius: 0.1,
                bar_radius: 0.1,
            },
        ] {
            for a in [-1.0, 0.0, 0.7, 1.5] {
                assert_eq!(spring_torque(&spec, a), 0.0);
            }
        }
    }

    #[test]
    fn zero_free_length_torque_vanishes_with_vertical_bar() {
        let s = SpringSpec::LinearZeroFreeLength {
            joint: Joint::J3,
            stiffness: 100.0,
            anchor_radius: 0.1,
            bar_radius: 0.08,
        };
        assert!(s.torque(PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn real_spring_with_zero_free_length_matches_ideal() {
        let ideal = SpringSpec::LinearZeroFreeLength {
            joint: Joint::J2,
            stiffness: 141.0,
            anchor_radius: 0.12,
            bar_radius: 0.09,
        };
        let real = SpringSpec::LinearReal {
            joint: Joint::J2,
            stiffness: 141.0,
            free_length: 0.0,
            anchor_radius: 0.12,
            bar_radius: 0.09,
        };
        let p = MechanismParams::nominal();
        for a in p.joint_limits.grid(1, 1001) {
            assert!((ideal.torque(a) - real.torque(a)).abs() < 1e-12);
        }
    }

    #[test]
    fn spring_torques_are_potential_gradients() {
        let specs = [
            SpringSpec::Torsion {
                joint: Joint::J2,
                stiffness: 2.5,
                neutral_angle: 1.2,
            },
            SpringSpec::LinearZeroFreeLength {
                joint: Joint::J2,
                stiffness: 90.0,
                anchor_radius: 0.1,
                bar_radius: 0.07,
            },
            SpringSpec::LinearReal {
                joint: Joint::J2,
                stiffness: 90.0,
                free_length: 0.02,
                anchor_radius: 0.1,
                bar_radius: 0.07,
            },
        ];
        for s in specs {
            for a in [-0.9, -0.2, 0.3, 1.1] {
                let fd = -central_diff(|x| s.potential(x), a);
                let t = s.torque(a);
                assert!((fd - t).abs() <= 1e-6 * t.abs().max(1e-3), "{s:?} at {a}");
            }
        }
    }

    #[test]
    fn ideal_synthesis_cancels_gravity() {
        let p = MechanismParams::nominal();
        let b = synthesize_balancing(&p, SpringKind::LinearZeroFreeLength, &Default::default())
            .unwrap();
        assert!(b.max_residual() < 1e-9);
        assert_eq!(b.j2_profile.samples.len(), BALANCE_GRID_POINTS);
    }

    #[test]
    fn massless_mechanism_needs_no_spring() {
        let p = MechanismParams {
            link1_mass: 0.0,
            link2_mass: 0.0,
            payload_mass: 0.0,
            ..MechanismParams::nominal()
        };
        for kind in [
            SpringKind::LinearZeroFreeLength,
            SpringKind::LinearReal,
            SpringKind::Torsion,
        ] {
            let b = synthesize_balancing(&p, kind, &Default::default()).unwrap();
            assert_eq!(b.j2.stiffness(), 0.0);
            assert_eq!(b.j3.stiffness(), 0.0);
            assert_eq!(b.max_residual(), 0.0);
        }
    }

    #[test]
    fn empty_bounds_are_rejected() {
        let p = MechanismParams::nominal();
        let bounds = SynthesisBounds {
            anchor_radius: [0.2, 0.1],
            ..Default::default()
        };
        assert!(matches!(
            synthesize_balancing(&p, SpringKind::LinearReal, &bounds),
            Err(StaticsError::InfeasibleBounds(_))
        ));
    }

    #[test]
    fn no_springs_profile_is_gravity() {
        let p = MechanismParams::nominal();
        let (j2, j3) = residual_torque_profile(&p, &[]);
        for s in j2.samples.iter().chain(&j3.samples) {
            assert_eq!(s.spring, 0.0);
            assert_eq!(s.residual, s.gravity);
        }
        let s = JointState::at_rest(0.0, j2.samples[17].angle, 0.0);
        assert_eq!(gravity_torque(&p, &s).0, j2.samples[17].gravity);
    }

    #[test]
    fn duplicated_spring_doubles_contribution() {
        let p = MechanismParams::nominal();
        let s = SpringSpec::LinearReal {
            joint: Joint::J3,
            stiffness: 40.0,
            free_length: 0.01,
            anchor_radius: 0.1,
            bar_radius: 0.1,
        };
        let (_, one) = residual_torque_profile(&p, &[s]);
        let (_, two) = residual_torque_profile(&p, &[s, s]);
        for (a, b) in one.samples.iter().zip(&two.samples) {
            assert!((b.spring - 2.0 * a.spring).abs() <= 1e-15 * a.spring.abs().max(1.0));
        }
    }

    #[test]
    fn balanced_pose_needs_no_holding_force() {
        let p = MechanismParams::nominal();
        let b = synthesize_balancing(&p, SpringKind::LinearZeroFreeLength, &Default::default())
            .unwrap();
        let f = static_handle_force(&p, &b.springs(), &JointState::at_rest(0.2, 0.8, -0.7));
        assert!(f.norm() < 1e-6);
        let unbalanced = static_handle_force(&p, &[], &JointState::at_rest(0.2, 0.8, -0.7));
        assert!(unbalanced.norm() > 0.1);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_section(-3.0, 5.0, 1e-12, |x| (x - 1.25).powi(2));
        assert!((x - 1.25).abs() < 1e-9);
    }
}
