//! Random states and trajectories shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DVector;
use pkmdyn::liegroup::Twist;
use pkmdyn::model::{PkmModel, TaskMotion};
use pkmdyn::trajectory::{home_platform_pose, IkTracker, Profile, ScrewTrajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-component scale of task coordinates: rotations in radians and
/// translations in metres.
fn task_scale(model: &PkmModel, k: usize) -> f64 {
    let mut e = DVector::zeros(model.dof());
    e[k] = 1.0;
    if model.platform_twist(&e).angular().norm() > 0.0 {
        0.15
    } else {
        0.02
    }
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| scale * rng.random_range(-1.0..1.0)))
}

/// Sinusoidal motion along a random screw through the home pose.
pub fn random_trajectory(model: &PkmModel, rng: &mut ChaCha8Rng) -> ScrewTrajectory {
    let d = model.dof();
    let direction = DVector::from_iterator(d, (0..d).map(|k| task_scale(model, k) * rng.random_range(-1.0..1.0)));
    let profile = Profile::Sine {
        amplitude: 1.0,
        omega: rng.random_range(1.0..6.0),
        phase: rng.random_range(0.0..std::f64::consts::TAU),
    };
    ScrewTrajectory::new(model, home_platform_pose(model), direction, profile)
}

/// A reachable configuration with arbitrary task derivatives.
pub fn random_state(model: &PkmModel, rng: &mut ChaCha8Rng) -> (Vec<DVector<f64>>, TaskMotion) {
    let traj = random_trajectory(model, rng);
    let t = rng.random_range(0.0..2.0);
    let theta = IkTracker::new(model, false)
        .solve(&traj.sample(t).pose)
        .expect("random pose is reachable")
        .to_vec();
    let d = model.dof();
    let mut task = TaskMotion::zeros(d);
    for k in 0..4 {
        let v = DVector::from_iterator(d, (0..d).map(|c| task_scale(model, c) * 4.0 * rng.random_range(-1.0..1.0)));
        match k {
            0 => task.vel = v,
            1 => task.acc = v,
            2 => task.jerk = v,
            _ => task.snap = v,
        }
    }
    (theta, task)
}

/// Kinetic energy of every tree body.
pub fn kinetic_energy(model: &PkmModel, kin: &pkmdyn::pkm_kinematics::PkmKinCache) -> f64 {
    model
        .limbs
        .iter()
        .zip(&kin.limbs)
        .map(|(limb, c)| {
            (0..limb.n_tree())
                .map(|i| {
                    let v: &Twist = &c.kin.twists[0][i];
                    0.5 * v.0.dot(&(limb.bodies[i].mass_matrix * v.0))
                })
                .sum::<f64>()
        })
        .sum()
}
