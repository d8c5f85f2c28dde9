//! Closed-form task-space equations of motion assembled from per-limb
//! mass matrices, Coriolis terms and gravity forces:
//! `M_t = Σ F̄ᵀM̄F̄`, `C_tV_t = Σ F̄ᵀ(C̄θ̄̇ + M̄Ḟ̄V_t)`, `W_t = Σ F̄ᵀQ̄_grav`.
//!
//! The limb terms come from the tree recursion evaluated with selected
//! inputs, which makes this module an independent cross-check of the
//! actuation forces rather than a second copy of them.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::invdyn::limb_invdyn_2nd;
use crate::limb_kinematics::{twist_recursions, LimbKinCache};
use crate::liegroup::Twist;
use crate::model::{LimbModel, PkmModel};
use crate::pkm_kinematics::PkmKinCache;

/// Largest tolerated asymmetry of a mass matrix built from columns.
pub const MASS_SYMMETRY_TOLERANCE: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub struct LimbEomTerms {
    /// `M̄`, `n_l × n_l`.
    pub mass: DMatrix<f64>,
    /// `C̄ θ̄̇`.
    pub coriolis_times_rates: DVector<f64>,
    /// Generalized gravity forces of the tree joints.
    pub gravity: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpaceEom {
    /// `M_t`, `δ_p × δ_p`.
    pub mass: DMatrix<f64>,
    /// `C_t V_t`.
    pub coriolis_times_vel: DVector<f64>,
    /// `W_t`.
    pub gravity: DVector<f64>,
    pub limbs: Vec<LimbEomTerms>,
}

impl TaskSpaceEom {
    /// `M_t V̇_t + C_t V_t + W_t`, the generalized task force the actuators
    /// must supply.
    pub fn required_force(&self, task_acc: &DVector<f64>) -> DVector<f64> {
        &self.mass * task_acc + &self.coriolis_times_vel + &self.gravity
    }
}

/// Tree generalized forces for joint coordinates `theta`, tree rates and
/// accelerations (cut-joint entries ignored) under `gravity`.
fn tree_forces(
    limb: &LimbModel,
    theta: &DVector<f64>,
    rates: &DVector<f64>,
    accels: &DVector<f64>,
    gravity: &Vector3<f64>,
) -> DVector<f64> {
    let n = limb.n_joints();
    let pad = |v: &DVector<f64>| {
        let mut full = DVector::zeros(n);
        full.rows_mut(0, v.len()).copy_from(v);
        full
    };
    let mut kin = LimbKinCache::new(limb, theta);
    kin.set_joint_derivative(1, pad(rates));
    kin.set_joint_derivative(2, pad(accels));
    kin.set_joint_derivative(3, DVector::zeros(n));
    kin.set_joint_derivative(4, DVector::zeros(n));
    for order in 1..=4 {
        twist_recursions(limb, &mut kin, order, Twist::zero()).expect("orders in sequence");
    }
    let mut q = limb_invdyn_2nd(limb, &kin, gravity, None);
    std::mem::take(&mut q.forces[0])
}

/// `M̄` from unit-acceleration columns of the recursion, symmetrized.
pub fn limb_mass_matrix(limb: &LimbModel, theta: &DVector<f64>) -> DMatrix<f64> {
    let n = limb.n_tree();
    let zero = DVector::zeros(n);
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        m.set_column(j, &tree_forces(limb, theta, &zero, &e, &Vector3::zeros()));
    }
    let asymmetry = (&m - m.transpose()).amax();
    assert!(
        asymmetry <= MASS_SYMMETRY_TOLERANCE * (1.0 + m.amax()),
        "limb mass matrix asymmetry {asymmetry:.3e}"
    );
    (&m + m.transpose()) * 0.5
}

/// `C̄ θ̄̇`: the recursion without gravity and with `θ̄̈ = 0`.
pub fn limb_coriolis_times_rates(
    limb: &LimbModel,
    theta: &DVector<f64>,
    tree_rates: &DVector<f64>,
) -> DVector<f64> {
    let zero = DVector::zeros(limb.n_tree());
    tree_forces(limb, theta, tree_rates, &zero, &Vector3::zeros())
}

/// Generalized gravity forces: the recursion at rest.
pub fn limb_gravity_forces(
    limb: &LimbModel,
    theta: &DVector<f64>,
    gravity: &Vector3<f64>,
) -> DVector<f64> {
    let zero = DVector::zeros(limb.n_tree());
    tree_forces(limb, theta, &zero, &zero, gravity)
}

pub fn limb_eom_terms(
    limb: &LimbModel,
    theta: &DVector<f64>,
    tree_rates: &DVector<f64>,
    gravity: &Vector3<f64>,
) -> LimbEomTerms {
    LimbEomTerms {
        mass: limb_mass_matrix(limb, theta),
        coriolis_times_rates: limb_coriolis_times_rates(limb, theta, tree_rates),
        gravity: limb_gravity_forces(limb, theta, gravity),
    }
}

/// Task-space EOM at the configuration and velocity held by `kin`.
pub fn task_eom(model: &PkmModel, kin: &PkmKinCache) -> TaskSpaceEom {
    let dof = model.dof();
    let mut eom = TaskSpaceEom {
        mass: DMatrix::zeros(dof, dof),
        coriolis_times_vel: DVector::zeros(dof),
        gravity: DVector::zeros(dof),
        limbs: Vec::with_capacity(model.limbs.len()),
    };
    let vt = &kin.task.vel;
    for (limb, lk) in model.limbs.iter().zip(&kin.limbs) {
        let fbar = lk.f_bar(limb, 0);
        let fbar_dot = lk.f_bar(limb, 1);
        let rates = &fbar * vt;
        let terms = limb_eom_terms(limb, &lk.kin.theta, &rates, &model.gravity);
        eom.mass += fbar.tr_mul(&(&terms.mass * &fbar));
        eom.coriolis_times_vel +=
            fbar.tr_mul(&(&terms.coriolis_times_rates + &terms.mass * (&fbar_dot * vt)));
        eom.gravity += fbar.tr_mul(&terms.gravity);
        eom.limbs.push(terms);
    }
    eom
}

/// `‖M_tV̇_t + C_tV_t + W_t − J_IKᵀu‖_∞ / (1 + ‖J_IKᵀu‖_∞)`.
pub fn eom_residual(eom: &TaskSpaceEom, kin: &PkmKinCache, u: &DVector<f64>) -> f64 {
    let supplied = kin.ik_jacobian[0].tr_mul(u);
    (eom.required_force(&kin.task.acc) - &supplied).amax() / (1.0 + supplied.amax())
}
