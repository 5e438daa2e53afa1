//! Equations of motion, rotary dampers, compliant utensil mount and the
//! fixed-step RK4 rollout.
//!
//! The mechanism is modeled as three point masses (link 1, link 2 with its
//! carried parallelogram bars, payload at the link-2 end). Since `theta3`
//! is an absolute angle transmitted through the parallelogram, the planar
//! block of the mass matrix couples the links through `cos(theta2 - theta3)`,
//! and the yaw inertia is the sum of `m * rho^2` over the radial distances.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, SVector, Vector3, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{
    handle_jacobian, handle_pose, spoon_pose, Joint, JointState, MechanismParams, Pose,
    ValidationError,
};
use crate::statics::{
    gravity_potential, gravity_torque, spring_potential, spring_torques, SpringSpec,
};

/// Number of sinusoids summed by the band-limited noise tremor.
pub const NOISE_COMPONENTS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("state became non-finite at t = {t} s (time step too large?)")]
    NonFiniteState { t: f64 },
    #[error("utensil deflection {deflection} rad exceeds the rubber limit {limit} rad")]
    DeflectionExceeded { deflection: f64, limit: f64 },
    #[error("invalid specification: {0}")]
    Invalid(#[from] ValidationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DamperModel {
    None,
    Viscous,
    /// Viscous outside a velocity dead-band, no torque inside it.
    DeadZoneViscous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DamperSpec {
    pub joint: Joint,
    pub model: DamperModel,
    #[serde(rename = "coefficient_n_m_s_per_rad")]
    pub coefficient: f64,
    #[serde(rename = "deadzone_rad_per_s", default)]
    pub deadzone: f64,
}

impl DamperSpec {
    pub fn viscous(joint: Joint, coefficient: f64) -> Self {
        Self {
            joint,
            model: DamperModel::Viscous,
            coefficient,
            deadzone: 0.0,
        }
    }

    pub fn dead_zone(joint: Joint, coefficient: f64, deadzone: f64) -> Self {
        Self {
            joint,
            model: DamperModel::DeadZoneViscous,
            coefficient,
            deadzone,
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.coefficient.is_finite() && self.coefficient >= 0.0) {
            return Err(ValidationError::new(
                "coefficient_n_m_s_per_rad",
                "must be finite and >= 0",
            ));
        }
        if !(self.deadzone.is_finite() && self.deadzone >= 0.0) {
            return Err(ValidationError::new(
                "deadzone_rad_per_s",
                "must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

/// Damper reaction torque at joint rate `omega`.
pub fn damper_torque(spec: &DamperSpec, omega: f64) -> f64 {
    match spec.model {
        DamperModel::None => 0.0,
        DamperModel::Viscous => -spec.coefficient * omega,
        DamperModel::DeadZoneViscous => {
            if omega.abs() <= spec.deadzone {
                0.0
            } else {
                -spec.coefficient * (omega - omega.signum() * spec.deadzone)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplianceMode {
    Rigid,
    Compliant,
}

/// Rubber-cushioned utensil mount: two torsional axes (pitch and yaw of the
/// spoon relative to its carrier) with identical stiffness and damping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplianceSpec {
    pub mode: ComplianceMode,
    #[serde(rename = "stiffness_n_m_per_rad")]
    pub stiffness: f64,
    #[serde(rename = "damping_n_m_s_per_rad")]
    pub damping: f64,
    #[serde(rename = "deflection_limit_rad")]
    pub deflection_limit: f64,
    #[serde(rename = "recenter_tolerance_rad")]
    pub recenter_tolerance: f64,
    #[serde(rename = "spoon_inertia_kg_m2")]
    pub spoon_inertia: f64,
}

impl ComplianceSpec {
    pub fn nominal() -> Self {
        Self {
            mode: ComplianceMode::Compliant,
            stiffness: 0.5,
            damping: 0.002,
            deflection_limit: 0.35,
            recenter_tolerance: 0.005,
            spoon_inertia: 2e-4,
        }
    }

    pub fn damping_ratio(&self) -> f64 {
        self.damping / (2.0 * (self.stiffness * self.spoon_inertia).sqrt())
    }

    pub fn is_compliant(&self) -> bool {
        self.mode == ComplianceMode::Compliant
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if self.is_compliant() {
            if !(self.stiffness.is_finite() && self.stiffness > 0.0) {
                return Err(ValidationError::new("stiffness_n_m_per_rad", "must be > 0"));
            }
            if !(self.damping.is_finite() && self.damping > 0.0) {
                return Err(ValidationError::new("damping_n_m_s_per_rad", "must be > 0"));
            }
            if !(self.spoon_inertia.is_finite() && self.spoon_inertia > 0.0) {
                return Err(ValidationError::new("spoon_inertia_kg_m2", "must be > 0"));
            }
        }
        if !(self.deflection_limit.is_finite() && self.deflection_limit > 0.0) {
            return Err(ValidationError::new("deflection_limit_rad", "must be > 0"));
        }
        if !(self.recenter_tolerance.is_finite() && self.recenter_tolerance > 0.0) {
            return Err(ValidationError::new(
                "recenter_tolerance_rad",
                "must be > 0",
            ));
        }
        Ok(())
    }
}

/// Everything needed to integrate the device.
#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub params: MechanismParams,
    pub springs: Vec<SpringSpec>,
    pub dampers: Vec<DamperSpec>,
    pub compliance: ComplianceSpec,
}

impl Device {
    pub fn damper_torques(&self, qdot: &Vector3<f64>) -> Vector3<f64> {
        let mut tau = Vector3::zeros();
        for d in &self.dampers {
            let i = d.joint.index();
            tau[i] += damper_torque(d, qdot[i]);
        }
        tau
    }

    /// Kinetic energy of the linkage plus the utensil mount.
    pub fn kinetic_energy(&self, s: &SimState) -> f64 {
        let mut e = kinetic_energy(&self.params, &s.joints);
        if self.compliance.is_compliant() {
            let i = self.compliance.spoon_inertia;
            e += 0.5 * i * (s.deflection_rate[0].powi(2) + s.deflection_rate[1].powi(2));
        }
        e
    }

    /// Gravity, balancing-spring and rubber potential energy.
    pub fn potential_energy(&self, s: &SimState) -> f64 {
        let mut e =
            gravity_potential(&self.params, &s.joints) + spring_potential(&self.springs, &s.joints);
        if self.compliance.is_compliant() {
            let k = self.compliance.stiffness;
            e += 0.5 * k * (s.deflection[0].powi(2) + s.deflection[1].powi(2));
        }
        e
    }
}

struct PointMass {
    mass: f64,
    /// fraction of link 1 out to the mass
    along1: f64,
    /// fraction of link 2 out to the mass
    along2: f64,
}

fn point_masses(p: &MechanismParams) -> [PointMass; 3] {
    [
        PointMass {
            mass: p.link1_mass,
            along1: p.link1_com,
            along2: 0.0,
        },
        PointMass {
            mass: p.link2_mass,
            along1: 1.0,
            along2: p.link2_com,
        },
        PointMass {
            mass: p.payload_mass,
            along1: 1.0,
            along2: 1.0,
        },
    ]
}

/// Positions of the three lumped masses in the table frame.
pub fn mass_positions(params: &MechanismParams, q: &Vector3<f64>) -> [(f64, Vector3<f64>); 3] {
    let (l1, l2) = (params.link1_length, params.link2_length);
    let (s, c) = q[0].sin_cos();
    point_masses(params).map(|pm| {
        let rho = params.base_offset + pm.along1 * l1 * q[1].cos() + pm.along2 * l2 * q[2].cos();
        let z = params.base_height + pm.along1 * l1 * q[1].sin() + pm.along2 * l2 * q[2].sin();
        (pm.mass, Vector3::new(rho * c, rho * s, z))
    })
}

/// Joint-space inertia `M(q)`.
pub fn mass_matrix(params: &MechanismParams, state: &JointState) -> Matrix3<f64> {
    let q = &state.q;
    let (l1, l2) = (params.link1_length, params.link2_length);
    let c23 = (q[1] - q[2]).cos();
    let mut m = Matrix3::zeros();
    for pm in point_masses(params) {
        let rho = params.base_offset + pm.along1 * l1 * q[1].cos() + pm.along2 * l2 * q[2].cos();
        m[(0, 0)] += pm.mass * rho * rho;
        m[(1, 1)] += pm.mass * (pm.along1 * l1).powi(2);
        m[(2, 2)] += pm.mass * (pm.along2 * l2).powi(2);
        m[(1, 2)] += pm.mass * pm.along1 * pm.along2 * l1 * l2 * c23;
    }
    m[(2, 1)] = m[(1, 2)];
    m
}

/// `dM/dq_k` for k = 0, 1, 2.
pub fn mass_matrix_partials(params: &MechanismParams, q: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let (l1, l2) = (params.link1_length, params.link2_length);
    let s23 = (q[1] - q[2]).sin();
    let mut d2 = Matrix3::zeros();
    let mut d3 = Matrix3::zeros();
    for pm in point_masses(params) {
        let rho = params.base_offset + pm.along1 * l1 * q[1].cos() + pm.along2 * l2 * q[2].cos();
        d2[(0, 0)] += -2.0 * pm.mass * rho * pm.along1 * l1 * q[1].sin();
        d3[(0, 0)] += -2.0 * pm.mass * rho * pm.along2 * l2 * q[2].sin();
        let coupling = pm.mass * pm.along1 * pm.along2 * l1 * l2 * s23;
        d2[(1, 2)] -= coupling;
        d3[(1, 2)] += coupling;
    }
    d2[(2, 1)] = d2[(1, 2)];
    d3[(2, 1)] = d3[(1, 2)];
    [Matrix3::zeros(), d2, d3]
}

/// Velocity-product torques `C(q, qdot) qdot` from the Christoffel symbols of `M`.
pub fn coriolis_torques(params: &MechanismParams, state: &JointState) -> Vector3<f64> {
    let dm = mass_matrix_partials(params, &state.q);
    let v = &state.qdot;
    let mut h = Vector3::zeros();
    for i in 0..3 {
        let mut acc = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                let gamma = 0.5 * (dm[k][(i, j)] + dm[j][(i, k)] - dm[i][(j, k)]);
                acc += gamma * v[j] * v[k];
            }
        }
        h[i] = acc;
    }
    h
}

pub fn kinetic_energy(params: &MechanismParams, state: &JointState) -> f64 {
    0.5 * state.qdot.dot(&(mass_matrix(params, state) * state.qdot))
}

/// Solves `M a = rhs`. Joints without inertia (a massless distal link) get
/// the minimum-norm acceleration.
fn solve_accel(m: Matrix3<f64>, rhs: Vector3<f64>) -> Vector3<f64> {
    if let Some(ch) = m.cholesky() {
        return ch.solve(&rhs);
    }
    let svd = SVD::new(m, true, true);
    let tol = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    svd.solve(&rhs, tol).unwrap_or_else(|_| Vector3::zeros())
}

/// Integrated state: linkage, mount deflections and dissipated energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub joints: JointState,
    /// Mount deflection (pitch, yaw) in rad.
    pub deflection: [f64; 2],
    pub deflection_rate: [f64; 2],
    pub dissipated: f64,
}

impl SimState {
    pub fn new(joints: JointState) -> Self {
        Self {
            joints,
            deflection: [0.0; 2],
            deflection_rate: [0.0; 2],
            dissipated: 0.0,
        }
    }

    fn pack(&self) -> SVector<f64, 11> {
        let j = &self.joints;
        SVector::<f64, 11>::from_column_slice(&[
            j.q[0],
            j.q[1],
            j.q[2],
            j.qdot[0],
            j.qdot[1],
            j.qdot[2],
            self.deflection[0],
            self.deflection[1],
            self.deflection_rate[0],
            self.deflection_rate[1],
            self.dissipated,
        ])
    }

    fn unpack(y: &SVector<f64, 11>) -> Self {
        Self {
            joints: JointState {
                q: Vector3::new(y[0], y[1], y[2]),
                qdot: Vector3::new(y[3], y[4], y[5]),
            },
            deflection: [y[6], y[7]],
            deflection_rate: [y[8], y[9]],
            dissipated: y[10],
        }
    }

    fn is_finite(&self) -> bool {
        self.pack().iter().all(|v| v.is_finite())
    }
}

/// Joint torques acting on the linkage at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppliedTorques {
    pub input: Vector3<f64>,
    pub damper: Vector3<f64>,
}

fn applied_torques(device: &Device, joints: &JointState, force: &Vector3<f64>) -> AppliedTorques {
    AppliedTorques {
        input: handle_jacobian(&device.params, joints).transpose() * force,
        damper: device.damper_torques(&joints.qdot),
    }
}

/// Joint accelerations under gravity, springs, dampers and a grip force.
pub fn joint_accelerations(
    device: &Device,
    joints: &JointState,
    handle_force: &Vector3<f64>,
) -> Vector3<f64> {
    let p = &device.params;
    let (tg2, tg3) = gravity_torque(p, joints);
    let applied = applied_torques(device, joints, handle_force);
    let rhs = -coriolis_torques(p, joints)
        + Vector3::new(0.0, tg2, tg3)
        + spring_torques(&device.springs, joints)
        + applied.damper
        + applied.input;
    solve_accel(mass_matrix(p, joints), rhs)
}

fn derivative(device: &Device, y: &SVector<f64, 11>, force: &Vector3<f64>) -> SVector<f64, 11> {
    let s = SimState::unpack(y);
    let j = &s.joints;
    let qdd = joint_accelerations(device, j, force);
    let tau_d = device.damper_torques(&j.qdot);
    let mut power = -tau_d.dot(&j.qdot);

    let mut out = SVector::<f64, 11>::zeros();
    out.fixed_rows_mut::<3>(0).copy_from(&j.qdot);
    out.fixed_rows_mut::<3>(3).copy_from(&qdd);
    let c = &device.compliance;
    if c.is_compliant() {
        for a in 0..2 {
            let (d, dd) = (s.deflection[a], s.deflection_rate[a]);
            out[6 + a] = dd;
            out[8 + a] = (-c.stiffness * d - c.damping * dd) / c.spoon_inertia;
            power += c.damping * dd * dd;
        }
    }
    out[10] = power;
    out
}

/// Advances the device by one classical RK4 step of size `dt`.
///
/// `handle_force(t, joints)` is the grip force (N, table frame) applied at
/// the handle. Joints leaving their limits are clamped with the joint rate
/// zeroed.
pub fn step_dynamics(
    device: &Device,
    state: &SimState,
    t: f64,
    dt: f64,
    handle_force: &dyn Fn(f64, &JointState) -> Vector3<f64>,
) -> Result<SimState, DynamicsError> {
    let f = |tt: f64, y: &SVector<f64, 11>| {
        let s = SimState::unpack(y);
        derivative(device, y, &handle_force(tt, &s.joints))
    };
    let y0 = state.pack();
    let k1 = f(t, &y0);
    let k2 = f(t + 0.5 * dt, &(y0 + k1 * (0.5 * dt)));
    let k3 = f(t + 0.5 * dt, &(y0 + k2 * (0.5 * dt)));
    let k4 = f(t + dt, &(y0 + k3 * dt));
    let y1 = y0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);

    let mut next = SimState::unpack(&y1);
    if !next.is_finite() {
        return Err(DynamicsError::NonFiniteState { t: t + dt });
    }
    let limits = &device.params.joint_limits;
    for i in 0..3 {
        let [lo, hi] = limits.get(i);
        let q = next.joints.q[i];
        if q < lo || q > hi {
            next.joints.q[i] = q.clamp(lo, hi);
            next.joints.qdot[i] = 0.0;
        }
    }
    Ok(next)
}

/// Time-stamped handle position for a prescribed path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    #[serde(rename = "t_s")]
    pub t: f64,
    #[serde(rename = "position_m")]
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSignal {
    FreeRelease,
    SineTremor {
        #[serde(rename = "amplitude_n")]
        amplitude: f64,
        #[serde(rename = "frequency_hz")]
        frequency: f64,
        direction: [f64; 3],
    },
    NoiseTremor {
        #[serde(rename = "rms_n")]
        rms: f64,
        #[serde(rename = "band_hz")]
        band: [f64; 2],
        seed: u64,
        direction: [f64; 3],
    },
    SpasmImpulse {
        #[serde(rename = "force_n")]
        force: f64,
        #[serde(rename = "duration_s")]
        duration: f64,
        #[serde(rename = "onset_s")]
        onset: f64,
        direction: [f64; 3],
    },
    /// The hand pulls the handle toward a piecewise-linear path through a
    /// spring-damper grip.
    PrescribedTrajectory {
        waypoints: Vec<Waypoint>,
        #[serde(rename = "grip_stiffness_n_per_m")]
        stiffness: f64,
        #[serde(rename = "grip_damping_n_s_per_m")]
        damping: f64,
    },
}

fn unit(d: [f64; 3]) -> Vector3<f64> {
    let v = Vector3::from(d);
    let n = v.norm();
    if n > 0.0 {
        v / n
    } else {
        v
    }
}

impl InputSignal {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let dir = |d: &[f64; 3]| {
            let n = Vector3::from(*d).norm();
            if n.is_finite() && n > 0.0 {
                Ok(())
            } else {
                Err(ValidationError::new(
                    "input.direction",
                    "must be a nonzero finite vector",
                ))
            }
        };
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(ValidationError::new(
                    format!("input.{name}"),
                    "must be finite",
                ))
            }
        };
        match self {
            InputSignal::FreeRelease => Ok(()),
            InputSignal::SineTremor {
                amplitude,
                frequency,
                direction,
            } => {
                finite("amplitude_n", *amplitude)?;
                if !(frequency.is_finite() && *frequency >= 0.0) {
                    return Err(ValidationError::new("input.frequency_hz", "must be >= 0"));
                }
                dir(direction)
            }
            InputSignal::NoiseTremor {
                rms,
                band,
                direction,
                ..
            } => {
                if !(rms.is_finite() && *rms >= 0.0) {
                    return Err(ValidationError::new("input.rms_n", "must be >= 0"));
                }
                if !(band[0].is_finite()
                    && band[1].is_finite()
                    && 0.0 < band[0]
                    && band[0] < band[1])
                {
                    return Err(ValidationError::new(
                        "input.band_hz",
                        "requires 0 < f_lo < f_hi",
                    ));
                }
                dir(direction)
            }
            InputSignal::SpasmImpulse {
                force,
                duration,
                onset,
                direction,
            } => {
                finite("force_n", *force)?;
                finite("onset_s", *onset)?;
                if !(duration.is_finite() && *duration >= 0.0) {
                    return Err(ValidationError::new("input.duration_s", "must be >= 0"));
                }
                dir(direction)
            }
            InputSignal::PrescribedTrajectory {
                waypoints,
                stiffness,
                damping,
            } => {
                if waypoints.is_empty() {
                    return Err(ValidationError::new("input.waypoints", "must not be empty"));
                }
                if waypoints.windows(2).any(|w| !(w[0].t < w[1].t)) {
                    return Err(ValidationError::new(
                        "input.waypoints",
                        "times must strictly increase",
                    ));
                }
                if !(stiffness.is_finite() && *stiffness >= 0.0) {
                    return Err(ValidationError::new(
                        "input.grip_stiffness_n_per_m",
                        "must be >= 0",
                    ));
                }
                if !(damping.is_finite() && *damping >= 0.0) {
                    return Err(ValidationError::new(
                        "input.grip_damping_n_s_per_m",
                        "must be >= 0",
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Precomputed open-loop force generator for an [`InputSignal`].
#[derive(Debug, Clone)]
pub struct SignalGenerator {
    kind: Generator,
}

#[derive(Debug, Clone)]
enum Generator {
    Zero,
    Sine {
        amplitude: f64,
        omega: f64,
        dir: Vector3<f64>,
    },
    Noise {
        amplitude: f64,
        components: Vec<(f64, f64)>,
        dir: Vector3<f64>,
    },
    Pulse {
        force: f64,
        start: f64,
        end: f64,
        dir: Vector3<f64>,
    },
}

impl SignalGenerator {
    pub fn new(input: &InputSignal) -> Self {
        let kind = match input {
            InputSignal::FreeRelease | InputSignal::PrescribedTrajectory { .. } => Generator::Zero,
            InputSignal::SineTremor {
                amplitude,
                frequency,
                direction,
            } => Generator::Sine {
                amplitude: *amplitude,
                omega: TAU * frequency,
                dir: unit(*direction),
            },
            InputSignal::NoiseTremor {
                rms,
                band,
                seed,
                direction,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let n = NOISE_COMPONENTS;
                let components = (0..n)
                    .map(|k| {
                        let f = band[0] + (band[1] - band[0]) * k as f64 / (n - 1) as f64;
                        (TAU * f, TAU * rng.gen::<f64>())
                    })
                    .collect();
                Generator::Noise {
                    // each unit sinusoid carries power 1/2
                    amplitude: rms / (n as f64 / 2.0).sqrt(),
                    components,
                    dir: unit(*direction),
                }
            }
            InputSignal::SpasmImpulse {
                force,
                duration,
                onset,
                direction,
            } => Generator::Pulse {
                force: *force,
                start: *onset,
                end: onset + duration,
                dir: unit(*direction),
            },
        };
        Self { kind }
    }

    pub fn force(&self, t: f64) -> Vector3<f64> {
        match &self.kind {
            Generator::Zero => Vector3::zeros(),
            Generator::Sine {
                amplitude,
                omega,
                dir,
            } => dir * (amplitude * (omega * t).sin()),
            Generator::Noise {
                amplitude,
                components,
                dir,
            } => {
                let s: f64 = components.iter().map(|(w, ph)| (w * t + ph).sin()).sum();
                dir * (amplitude * s)
            }
            Generator::Pulse {
                force,
                start,
                end,
                dir,
            } => {
                if t >= *start && t <= *end {
                    dir * *force
                } else {
                    Vector3::zeros()
                }
            }
        }
    }
}

/// Open-loop grip force of `input` at time `t`. Prescribed trajectories are
/// closed-loop and contribute nothing here.
pub fn generate_signal(input: &InputSignal, t: f64) -> Vector3<f64> {
    SignalGenerator::new(input).force(t)
}

/// Piecewise-linear target position, held constant outside the waypoint span.
pub fn interpolate_waypoints(waypoints: &[Waypoint], t: f64) -> Vector3<f64> {
    let first = &waypoints[0];
    if t <= first.t {
        return Vector3::from(first.position);
    }
    for w in waypoints.windows(2) {
        if t <= w[1].t {
            let a = (t - w[0].t) / (w[1].t - w[0].t);
            return Vector3::from(w[0].position) * (1.0 - a) + Vector3::from(w[1].position) * a;
        }
    }
    Vector3::from(waypoints[waypoints.len() - 1].position)
}

/// Impulsive torque on the utensil mount, e.g. the spoon striking the user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpoonContact {
    #[serde(rename = "time_s")]
    pub time: f64,
    #[serde(rename = "impulse_pitch_n_m_s")]
    pub impulse_pitch: f64,
    #[serde(rename = "impulse_yaw_n_m_s")]
    pub impulse_yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(rename = "duration_s")]
    pub duration: f64,
    #[serde(rename = "dt_s")]
    pub dt: f64,
    pub initial: JointState,
    pub input: InputSignal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spoon_contact: Option<SpoonContact>,
}

impl Scenario {
    /// Number of recorded samples, `floor(duration / dt) + 1`.
    pub fn sample_count(&self) -> usize {
        // absorbs representation error such as 10.0 / 1e-3
        ((self.duration / self.dt) * (1.0 + 1e-12)).floor() as usize + 1
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ValidationError::new("dt_s", "must be > 0"));
        }
        if !(self.duration.is_finite() && self.duration >= self.dt) {
            return Err(ValidationError::new("duration_s", "must be >= dt_s"));
        }
        if !self.initial.is_finite() {
            return Err(ValidationError::new("initial", "must be finite"));
        }
        if let Some(c) = &self.spoon_contact {
            if ![c.time, c.impulse_pitch, c.impulse_yaw]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(ValidationError::new("spoon_contact", "must be finite"));
            }
        }
        self.input.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSample {
    pub t: f64,
    pub joints: JointState,
    pub spoon: Pose,
    pub handle: Pose,
    pub deflection: [f64; 2],
    pub torques: AppliedTorques,
    pub kinetic: f64,
    pub potential: f64,
    pub dissipated: f64,
}

/// Uniformly sampled rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub dt: f64,
    pub samples: Vec<SimSample>,
}

pub const SIM_CSV_HEADER: &str = "t,phi1,theta2,theta3,dphi1,dtheta2,dtheta3,spoon_x,spoon_y,spoon_z,handle_x,handle_y,handle_z,delta_p,delta_y,E_kin,E_pot,E_diss";

impl SimResult {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn total_energy(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| s.kinetic + s.potential)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(256 * (self.samples.len() + 1));
        out.push_str(SIM_CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let (q, v) = (&s.joints.q, &s.joints.qdot);
            let (sp, hp) = (&s.spoon.position, &s.handle.position);
            let row = [
                s.t,
                q[0],
                q[1],
                q[2],
                v[0],
                v[1],
                v[2],
                sp.x,
                sp.y,
                sp.z,
                hp.x,
                hp.y,
                hp.z,
                s.deflection[0],
                s.deflection[1],
                s.kinetic,
                s.potential,
                s.dissipated,
            ];
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn record(device: &Device, t: f64, s: &SimState, force: &Vector3<f64>) -> SimSample {
    let p = &device.params;
    SimSample {
        t,
        joints: s.joints,
        spoon: spoon_pose(p, &s.joints),
        handle: handle_pose(p, &s.joints),
        deflection: s.deflection,
        torques: applied_torques(device, &s.joints, force),
        kinetic: device.kinetic_energy(s),
        potential: device.potential_energy(s),
        dissipated: s.dissipated,
    }
}

fn check_deflection(device: &Device, s: &SimState) -> Result<(), DynamicsError> {
    let limit = device.compliance.deflection_limit;
    for d in s.deflection {
        if d.abs() > limit {
            return Err(DynamicsError::DeflectionExceeded {
                deflection: d,
                limit,
            });
        }
    }
    Ok(())
}

/// Deterministic rollout of `scenario`. Grip forces enter through the
/// transpose of the handle Jacobian.
pub fn run_scenario(device: &Device, scenario: &Scenario) -> Result<SimResult, DynamicsError> {
    scenario.validate()?;
    device.compliance.validate()?;
    let dt = scenario.dt;
    let n = scenario.sample_count();
    let generator = SignalGenerator::new(&scenario.input);
    let params = &device.params;
    let force = |t: f64, j: &JointState| -> Vector3<f64> {
        match &scenario.input {
            InputSignal::PrescribedTrajectory {
                waypoints,
                stiffness,
                damping,
            } => {
                let target = interpolate_waypoints(waypoints, t);
                let pos = handle_pose(params, j).position;
                let vel = handle_jacobian(params, j) * j.qdot;
                (target - pos) * *stiffness - vel * *damping
            }
            _ => generator.force(t),
        }
    };

    let mut state = SimState::new(scenario.initial);
    let mut contact = scenario
        .spoon_contact
        .filter(|_| device.compliance.is_compliant());
    let mut samples = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 * dt;
        if let Some(c) = contact {
            if t >= c.time {
                let i = device.compliance.spoon_inertia;
                state.deflection_rate[0] += c.impulse_pitch / i;
                state.deflection_rate[1] += c.impulse_yaw / i;
                contact = None;
            }
        }
        samples.push(record(device, t, &state, &force(t, &state.joints)));
        if k + 1 < n {
            state = step_dynamics(device, &state, t, dt, &force)?;
            check_deflection(device, &state)?;
        }
    }
    Ok(SimResult { dt, samples })
}

/// Integration settings for [`spoon_contact_response`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSettings {
    pub dt: f64,
    pub horizon: f64,
}

impl Default for ContactSettings {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            horizon: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactReport {
    /// Largest rubber reaction torque `|k delta + c delta_dot|` (N m).
    pub peak_reaction: f64,
    /// First time after which `|delta| < tolerance` for the rest of the horizon.
    pub settling_time: f64,
    pub recentered: bool,
    /// Impulse delivered over a single step by a rigid mount (N m). This
    /// depends on the step size and is only a comparison value.
    pub rigid_reference: f64,
    pub rigid_reference_model_dependent: bool,
    /// Deflection history sampled every `dt`.
    pub deflection: Vec<f64>,
}

/// Response of one compliant mount axis to an impulsive torque.
pub fn spoon_contact_response(
    compliance: &ComplianceSpec,
    impulse: f64,
    settings: ContactSettings,
) -> Result<ContactReport, DynamicsError> {
    compliance.validate()?;
    if !impulse.is_finite() {
        return Err(ValidationError::new("impulse", "must be finite").into());
    }
    let dt = settings.dt;
    let rigid_reference = impulse.abs() / dt;
    if !compliance.is_compliant() {
        return Ok(ContactReport {
            peak_reaction: rigid_reference,
            settling_time: 0.0,
            recentered: true,
            rigid_reference,
            rigid_reference_model_dependent: true,
            deflection: vec![0.0],
        });
    }
    let (k, c, i) = (
        compliance.stiffness,
        compliance.damping,
        compliance.spoon_inertia,
    );
    let accel = |d: f64, v: f64| (-k * d - c * v) / i;
    let steps = (settings.horizon / dt).round() as usize;
    let (mut d, mut v): (f64, f64) = (0.0, impulse / i);
    let mut history = Vec::with_capacity(steps + 1);
    let mut peak: f64 = 0.0;
    let mut last_outside: Option<usize> = None;
    for n in 0..=steps {
        if d.abs() > compliance.deflection_limit {
            return Err(DynamicsError::DeflectionExceeded {
                deflection: d,
                limit: compliance.deflection_limit,
            });
        }
        peak = peak.max((k * d + c * v).abs());
        if d.abs() >= compliance.recenter_tolerance {
            last_outside = Some(n);
        }
        history.push(d);
        if n == steps {
            break;
        }
        let (k1d, k1v) = (v, accel(d, v));
        let (k2d, k2v) = (
            v + 0.5 * dt * k1v,
            accel(d + 0.5 * dt * k1d, v + 0.5 * dt * k1v),
        );
        let (k3d, k3v) = (
            v + 0.5 * dt * k2v,
            accel(d + 0.5 * dt * k2d, v + 0.5 * dt * k2v),
        );
        let (k4d, k4v) = (v + dt * k3v, accel(d + dt * k3d, v + dt * k3v));
        d += dt / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
        v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    let (settling_time, recentered) = match last_outside {
        None => (0.0, true),
        Some(n) if n == steps => (steps as f64 * dt, false),
        Some(n) => ((n + 1) as f64 * dt, true),
    };
    Ok(ContactReport {
        peak_reaction: peak,
        settling_time,
        recentered,
        rigid_reference,
        rigid_reference_model_dependent: true,
        deflection: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn free_device(params: MechanismParams) -> Device {
        Device {
            params,
            springs: vec![],
            dampers: vec![],
            compliance: ComplianceSpec::nominal(),
        }
    }

    fn wide_limits(mut p: MechanismParams) -> MechanismParams {
        p.joint_limits.phi1 = [-100.0, 100.0];
        p.joint_limits.theta2 = [-100.0, 100.0];
        p.joint_limits.theta3 = [-100.0, 100.0];
        p
    }

    #[test]
    fn dampers_are_silent_at_rest() {
        for model in [
            DamperModel::None,
            DamperModel::Viscous,
            DamperModel::DeadZoneViscous,
        ] {
            let d = DamperSpec {
                joint: Joint::J2,
                model,
                coefficient: 0.4,
                deadzone: 0.3,
            };
            assert_eq!(damper_torque(&d, 0.0), 0.0);
        }
    }

    #[test]
    fn dead_zone_ignores_slow_motion() {
        let d = DamperSpec::dead_zone(Joint::J3, 0.4, 0.3);
        assert_eq!(damper_torque(&d, 0.15), 0.0);
        assert_eq!(damper_torque(&d, -0.15), 0.0);
        assert!((damper_torque(&d, 0.3 + 1e-12)).abs() < 1e-12);
        assert!((damper_torque(&d, -1.3) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn viscous_definition() {
        let d = DamperSpec::viscous(Joint::J2, 0.4);
        assert_eq!(damper_torque(&d, 1.0), -0.4);
    }

    #[test]
    fn mass_matrix_partials_match_finite_differences() {
        let p = MechanismParams::nominal();
        let q = Vector3::new(0.3, 0.7, -0.4);
        let dm = mass_matrix_partials(&p, &q);
        let h = 1e-6;
        for k in 0..3 {
            let mut qp = q;
            let mut qm = q;
            qp[k] += h;
            qm[k] -= h;
            let fd = (mass_matrix(
                &p,
                &JointState {
                    q: qp,
                    qdot: Vector3::zeros(),
                },
            ) - mass_matrix(
                &p,
                &JointState {
                    q: qm,
                    qdot: Vector3::zeros(),
                },
            )) / (2.0 * h);
            assert!((fd - dm[k]).norm() < 1e-8, "k = {k}");
        }
    }

    #[test]
    fn single_pendulum_limit_has_constant_link1_inertia() {
        let p = MechanismParams {
            link2_mass: 0.0,
            payload_mass: 0.0,
            ..MechanismParams::nominal()
        };
        let a = mass_matrix(&p, &JointState::at_rest(0.0, 0.4, -1.0));
        let b = mass_matrix(&p, &JointState::at_rest(0.0, 0.4, 0.9));
        assert_eq!(a[(1, 1)], b[(1, 1)]);
        assert_eq!(a[(0, 0)], b[(0, 0)]);
    }

    #[test]
    fn small_oscillation_period_matches_linearization() {
        let p = wide_limits(MechanismParams {
            link2_mass: 0.0,
            payload_mass: 0.0,
            ..MechanismParams::nominal()
        });
        let dev = free_device(p.clone());
        let arm = p.link1_com * p.link1_length;
        let inertia = p.link1_mass * arm * arm;
        let expected = TAU * (inertia / (p.link1_mass * p.gravity * arm)).sqrt();

        let dt = 1e-4;
        let mut s = SimState::new(JointState::at_rest(0.0, -PI / 2.0 + 0.01, 0.0));
        let zero = |_: f64, _: &JointState| Vector3::zeros();
        let mut crossings = vec![];
        let mut prev = s.joints.q[1] + PI / 2.0;
        for k in 0..40_000 {
            let t = k as f64 * dt;
            s = step_dynamics(&dev, &s, t, dt, &zero).unwrap();
            let x = s.joints.q[1] + PI / 2.0;
            if prev < 0.0 && x >= 0.0 {
                crossings.push(t + dt * (-prev) / (x - prev));
            }
            prev = x;
        }
        assert!(crossings.len() >= 3);
        let period = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
        assert!(
            (period - expected).abs() / expected < 1e-3,
            "{period} vs {expected}"
        );
    }

    #[test]
    fn balanced_rest_is_a_fixed_point() {
        let p = MechanismParams::nominal();
        let b = crate::statics::synthesize_balancing(
            &p,
            crate::statics::SpringKind::LinearZeroFreeLength,
            &Default::default(),
        )
        .unwrap();
        let dev = Device {
            params: p,
            springs: b.springs().to_vec(),
            dampers: vec![DamperSpec::viscous(Joint::J2, 0.4)],
            compliance: ComplianceSpec::nominal(),
        };
        let s0 = SimState::new(JointState::at_rest(0.1, 0.9, -0.6));
        let s1 = step_dynamics(&dev, &s0, 0.0, 1e-3, &|_, _| Vector3::zeros()).unwrap();
        assert!((s1.joints.q - s0.joints.q).norm() < 1e-12);
        assert!(s1.joints.qdot.norm() < 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let dev = free_device(MechanismParams::nominal());
        let s0 = SimState::new(JointState::at_rest(0.0, 0.3, 0.2));
        let err = step_dynamics(&dev, &s0, 0.0, 1e-3, &|_, _| {
            Vector3::new(f64::NAN, 0.0, 0.0)
        });
        assert!(matches!(err, Err(DynamicsError::NonFiniteState { .. })));
    }

    #[test]
    fn joint_limit_clamp_zeroes_rate() {
        let mut p = MechanismParams::nominal();
        p.joint_limits.theta2 = [-0.5, 0.31];
        let dev = free_device(p);
        let s0 = SimState::new(JointState {
            q: Vector3::new(0.0, 0.3, 0.0),
            qdot: Vector3::new(0.0, 5.0, 0.0),
        });
        let s1 = step_dynamics(&dev, &s0, 0.0, 1e-2, &|_, _| Vector3::zeros()).unwrap();
        assert_eq!(s1.joints.q[1], 0.31);
        assert_eq!(s1.joints.qdot[1], 0.0);
    }

    #[test]
    fn signal_shapes() {
        let sine = InputSignal::SineTremor {
            amplitude: 2.0,
            frequency: 5.0,
            direction: [0.0, 0.0, 3.0],
        };
        assert_eq!(generate_signal(&sine, 0.0), Vector3::zeros());
        let peak = generate_signal(&sine, 0.05);
        assert!((peak - Vector3::new(0.0, 0.0, 2.0)).norm() < 1e-12);

        let spasm = InputSignal::SpasmImpulse {
            force: 8.0,
            duration: 0.1,
            onset: 0.5,
            direction: [1.0, 0.0, 0.0],
        };
        assert_eq!(generate_signal(&spasm, 0.49), Vector3::zeros());
        assert_eq!(generate_signal(&spasm, 0.61), Vector3::zeros());
        assert_eq!(generate_signal(&spasm, 0.55), Vector3::new(8.0, 0.0, 0.0));
    }

    #[test]
    fn noise_is_seeded() {
        let a = InputSignal::NoiseTremor {
            rms: 1.0,
            band: [4.0, 12.0],
            seed: 7,
            direction: [0.0, 0.0, 1.0],
        };
        let b = InputSignal::NoiseTremor {
            rms: 1.0,
            band: [4.0, 12.0],
            seed: 8,
            direction: [0.0, 0.0, 1.0],
        };
        let (ga, gb) = (SignalGenerator::new(&a), SignalGenerator::new(&b));
        assert_eq!(ga.force(0.123), SignalGenerator::new(&a).force(0.123));
        assert_ne!(ga.force(0.123), gb.force(0.123));
    }

    #[test]
    fn waypoint_interpolation() {
        let w = [
            Waypoint {
                t: 0.0,
                position: [0.0, 0.0, 0.0],
            },
            Waypoint {
                t: 1.0,
                position: [1.0, 2.0, 0.0],
            },
        ];
        assert_eq!(interpolate_waypoints(&w, -1.0), Vector3::zeros());
        assert_eq!(interpolate_waypoints(&w, 0.5), Vector3::new(0.5, 1.0, 0.0));
        assert_eq!(interpolate_waypoints(&w, 3.0), Vector3::new(1.0, 2.0, 0.0));
    }

    #[test]
    fn sample_count_is_floor_plus_one() {
        let mut sc = Scenario {
            duration: 10.0,
            dt: 1e-3,
            initial: JointState::at_rest(0.0, 0.5, -0.5),
            input: InputSignal::FreeRelease,
            spoon_contact: None,
        };
        assert_eq!(sc.sample_count(), 10_001);
        sc.duration = 0.0105;
        assert_eq!(sc.sample_count(), 11);
    }

    #[test]
    fn zero_impulse_contact() {
        let r =
            spoon_contact_response(&ComplianceSpec::nominal(), 0.0, Default::default()).unwrap();
        assert_eq!(r.peak_reaction, 0.0);
        assert_eq!(r.settling_time, 0.0);
        assert!(r.recentered);
    }

    #[test]
    fn oversized_impulse_exceeds_rubber() {
        let r = spoon_contact_response(&ComplianceSpec::nominal(), 0.05, Default::default());
        assert!(matches!(r, Err(DynamicsError::DeflectionExceeded { .. })));
    }

    #[test]
    fn compliant_mount_requires_positive_rubber() {
        let c = ComplianceSpec {
            damping: 0.0,
            ..ComplianceSpec::nominal()
        };
        assert!(matches!(
            spoon_contact_response(&c, 0.001, Default::default()),
            Err(DynamicsError::Invalid(_))
        ));
    }
}
