//! Feedforward for series-elastic actuation. The spring law `u = K(q_m − θ_a)`
//! and the motor dynamics `M_m q̈_m = τ − u` give the motor trajectory and
//! torque from `u`, `ü` and the actuated joint motion.

use nalgebra::DVector;

use crate::invdyn::InvDynResult;
use crate::model::PkmModel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlatnessError {
    #[error("SEA stiffness of actuator {0} is not positive")]
    ZeroStiffness(usize),
    #[error("expected {expected} actuated coordinates, got {found}")]
    Dimension { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeedforwardResult {
    pub q_m: DVector<f64>,
    pub q_m_dot: DVector<f64>,
    pub q_m_ddot: DVector<f64>,
    pub tau: DVector<f64>,
}

/// Motor trajectory and torque. `theta_a` holds `θ_a, θ̇_a, θ̈_a`.
pub fn sea_feedforward(
    model: &PkmModel,
    theta_a: [&DVector<f64>; 3],
    inv: &InvDynResult,
) -> Result<FeedforwardResult, FlatnessError> {
    let n = model.n_actuators();
    for q in theta_a.iter().map(|q| q.len()).chain([inv.u.len()]) {
        if q != n {
            return Err(FlatnessError::Dimension {
                expected: n,
                found: q,
            });
        }
    }
    let k = &model.sea.stiffness;
    if let Some(i) = k.iter().position(|&k| !(k > 0.0)) {
        return Err(FlatnessError::ZeroStiffness(i));
    }
    let compliance = DVector::from_iterator(n, k.iter().map(|k| 1.0 / k));
    let q_m = theta_a[0] + inv.u.component_mul(&compliance);
    let q_m_dot = theta_a[1] + inv.u_dot.component_mul(&compliance);
    let q_m_ddot = theta_a[2] + inv.u_ddot.component_mul(&compliance);
    let inertia = DVector::from_column_slice(&model.sea.motor_inertia);
    let tau = q_m_ddot.component_mul(&inertia) + &inv.u;
    Ok(FeedforwardResult {
        q_m,
        q_m_dot,
        q_m_ddot,
        tau,
    })
}

/// Feedforward using the actuated coordinates held in the result's
/// kinematics cache.
pub fn sea_feedforward_from(
    model: &PkmModel,
    inv: &InvDynResult,
) -> Result<FeedforwardResult, FlatnessError> {
    let kin = &inv.kinematics;
    let (q, qd, qdd) = (kin.actuated(model, 0), kin.actuated(model, 1), kin.actuated(model, 2));
    sea_feedforward(model, [&q, &qd, &qdd], inv)
}
