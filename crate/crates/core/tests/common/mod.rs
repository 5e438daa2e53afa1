#![allow(dead_code)]

use feeder_sim::dynamics::{ComplianceSpec, DamperSpec, Device, InputSignal, Scenario};
use feeder_sim::kinematics::{JointState, MechanismParams};
use feeder_sim::statics::{synthesize_balancing, SpringKind};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random joint state inside the nominal limits, with rates in [-2, 2] rad/s.
pub fn random_state(params: &MechanismParams, rng: &mut ChaCha8Rng) -> JointState {
    let mut q = Vector3::zeros();
    let mut qdot = Vector3::zeros();
    for i in 0..3 {
        let [lo, hi] = params.joint_limits.get(i);
        q[i] = rng.gen_range(lo..=hi);
        qdot[i] = rng.gen_range(-2.0..=2.0);
    }
    JointState { q, qdot }
}

pub fn wide_limits(mut p: MechanismParams) -> MechanismParams {
    for i in 0..3 {
        p.joint_limits.set(i, [-100.0, 100.0]);
    }
    p
}

pub fn balanced_device(dampers: Vec<DamperSpec>) -> Device {
    let params = MechanismParams::nominal();
    let b = synthesize_balancing(
        &params,
        SpringKind::LinearZeroFreeLength,
        &Default::default(),
    )
    .unwrap();
    Device {
        params,
        springs: b.springs().to_vec(),
        dampers,
        compliance: ComplianceSpec::nominal(),
    }
}

/// Low-amplitude vertical tremor at a mid-workspace pose; joint rates stay
/// well below 0.3 rad/s.
pub fn small_tremor() -> Scenario {
    Scenario {
        duration: 5.0,
        dt: 1e-3,
        initial: JointState::at_rest(0.0, 1.2, -0.6),
        input: InputSignal::SineTremor {
            amplitude: 0.1,
            frequency: 6.0,
            direction: [0.0, 0.0, 1.0],
        },
        spoon_contact: None,
    }
}

pub fn peak_joint_rate(result: &feeder_sim::SimResult) -> f64 {
    result
        .samples
        .iter()
        .flat_map(|s| s.joints.qdot.iter().copied())
        .fold(0.0, |m, v| m.max(v.abs()))
}
