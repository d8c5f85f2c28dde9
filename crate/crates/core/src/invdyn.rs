//! Second-order inverse dynamics: a backward Newton-Euler sweep per limb
//! producing the tree generalized forces and their first two derivatives,
//! then assembly of the actuation forces `u`, `u̇`, `ü`.
//!
//! Gravity enters as the ground acceleration `(0, −g)` transported to each
//! body, `G_i = Ad_{C_i⁻¹}(0, −g)`. The kinematic caches hold gravity-free
//! twist derivatives, so the dynamic accelerations are
//! `A_i = V̇_i + G_i`, `Ȧ_i = V̈_i − ad_{V_i}G_i` and
//! `Ä_i = V⃛_i − ad_{V̇_i}G_i + ad_{V_i}ad_{V_i}G_i`.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::limb_kinematics::{Layers, LimbKinCache};
use crate::liegroup::{Twist, Wrench};
use crate::lu::{LuFactors, OpCounter, SingularMatrix};
use crate::model::{LimbModel, PkmModel, TaskMotion};
use crate::par;
use crate::pkm_kinematics::{
    fourth_order_kinematics, KinematicsError, KinematicsOptions, PkmKinCache,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InvDynError {
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("actuation singularity: {0}")]
    ActuationSingular(#[source] SingularMatrix),
}

/// Interbody wrenches and tree generalized forces of one limb.
#[derive(Debug, Clone, PartialEq)]
pub struct LimbForceCache {
    /// `W̄_i, Ẇ̄_i, Ẅ̄_i` in body frames, tree bodies only.
    pub wrenches: Layers<Wrench>,
    /// `Q̄, Q̄̇, Q̄̈`, one entry per tree joint.
    pub forces: [DVector<f64>; 3],
}

#[derive(Debug, Clone)]
pub struct InvDynResult {
    pub u: DVector<f64>,
    pub u_dot: DVector<f64>,
    pub u_ddot: DVector<f64>,
    pub limbs: Vec<LimbForceCache>,
    pub kinematics: PkmKinCache,
}

/// A wrench applied by the environment to the platform, expressed in the
/// platform frame, with its first two time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlatformLoad(pub [Wrench; 3]);

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InvDynOptions {
    pub kinematics: KinematicsOptions,
    pub platform_load: Option<PlatformLoad>,
}

/// Ground acceleration that reproduces gravity in the recursion.
pub fn ground_acceleration(gravity: &Vector3<f64>) -> Twist {
    Twist::new(Vector3::zeros(), -gravity)
}

/// Backward recursion over the limb's tree bodies with zero wrench above the
/// terminal tree body. `kin` must hold twists up to `V⃛_i`.
pub fn limb_invdyn_2nd(
    limb: &LimbModel,
    kin: &LimbKinCache,
    gravity: &Vector3<f64>,
    load: Option<&PlatformLoad>,
) -> LimbForceCache {
    let n = limb.n_tree();
    let ground = ground_acceleration(gravity);
    let mut w = Layers::new(3, n);
    let mut q = [DVector::zeros(n), DVector::zeros(n), DVector::zeros(n)];
    let (mut above, mut above_d, mut above_dd) = (Wrench::zero(), Wrench::zero(), Wrench::zero());

    for i in (0..n).rev() {
        let m = &limb.bodies[i].mass_matrix;
        let [v, vd, vdd, vddd] = [
            kin.twists[0][i],
            kin.twists[1][i],
            kin.twists[2][i],
            kin.twists[3][i],
        ];
        let g = kin.poses[i].adjoint_inverse_apply(&ground);
        let adv_g = v.bracket(&g);
        let acc = vd + g;
        let acc_d = vdd - adv_g;
        let acc_dd = vddd - vd.bracket(&g) + v.bracket(&adv_g);

        let mul = |t: &Twist| Wrench(m * t.0);
        let (mv, mvd, mvdd) = (mul(&v), mul(&vd), mul(&vdd));

        let mut wi = mul(&acc) - v.ad_transpose_apply(&mv);
        let mut wi_d = mul(&acc_d) - vd.ad_transpose_apply(&mv) - v.ad_transpose_apply(&mvd);
        let mut wi_dd = mul(&acc_dd)
            - vdd.ad_transpose_apply(&mv)
            - vd.ad_transpose_apply(&mvd) * 2.0
            - v.ad_transpose_apply(&mvdd);

        if i + 1 < n {
            let rel = &kin.rel_poses[i + 1];
            let x = kin_screw(limb, i + 1);
            let qd = kin.joint_derivs[0][i + 1];
            let qdd = kin.joint_derivs[1][i + 1];
            let adt_w = x.ad_transpose_apply(&above);
            let adt_wd = x.ad_transpose_apply(&above_d);
            let adt2_w = x.ad_transpose_apply(&adt_w);
            wi += rel.adjoint_transpose_apply(&above);
            wi_d += rel.adjoint_transpose_apply(&(above_d - adt_w * qd));
            wi_dd += rel.adjoint_transpose_apply(
                &(above_dd - adt_wd * (2.0 * qd) + adt2_w * (qd * qd) - adt_w * qdd),
            );
        } else if let Some(PlatformLoad(ext)) = load {
            wi -= ext[0];
            wi_d -= ext[1];
            wi_dd -= ext[2];
        }

        let x = kin_screw(limb, i);
        q[0][i] = wi.power(x);
        q[1][i] = wi_d.power(x);
        q[2][i] = wi_dd.power(x);
        w[0][i] = wi;
        w[1][i] = wi_d;
        w[2][i] = wi_dd;
        above = wi;
        above_d = wi_d;
        above_dd = wi_dd;
    }
    LimbForceCache {
        wrenches: w,
        forces: q,
    }
}

fn kin_screw(limb: &LimbModel, i: usize) -> &Twist {
    limb.joints[i].screw.twist()
}

/// Solves `J_IKᵀ x = r` for the actuation forces, reusing one factorization
/// for `u`, `u̇` and `ü`. With more actuators than DOF the minimum-norm
/// solution `x = J_IK y`, `J_IKᵀJ_IK y = r` is used and differentiated.
#[derive(Debug, Clone)]
pub struct ActuationSolver {
    kind: SolverKind,
    pub ops: OpCounter,
}

#[derive(Debug, Clone)]
enum SolverKind {
    Square(LuFactors),
    MinNorm {
        gram: LuFactors,
        gram_dot: DMatrix<f64>,
        gram_ddot: DMatrix<f64>,
    },
}

impl ActuationSolver {
    pub fn new(jik: &[DMatrix<f64>; 3]) -> Result<Self, InvDynError> {
        let mut ops = OpCounter::default();
        let (j, jd, jdd) = (&jik[0], &jik[1], &jik[2]);
        let kind = if j.nrows() == j.ncols() {
            SolverKind::Square(
                LuFactors::factor(&j.transpose(), &mut ops).map_err(InvDynError::ActuationSingular)?,
            )
        } else {
            let jt = j.transpose();
            let jdt = jd.transpose();
            let gram = LuFactors::factor(&(&jt * j), &mut ops).map_err(InvDynError::ActuationSingular)?;
            let gram_dot = &jdt * j + &jt * jd;
            let gram_ddot = jdd.transpose() * j + (&jdt * jd) * 2.0 + &jt * jdd;
            SolverKind::MinNorm {
                gram,
                gram_dot,
                gram_ddot,
            }
        };
        Ok(Self { kind, ops })
    }

    /// `u`, `u̇`, `ü` from the generalized-force right-hand sides
    /// `r = Σ F̄ᵀQ̄` and its first two derivatives.
    pub fn solve(
        &mut self,
        jik: &[DMatrix<f64>; 3],
        rhs: &[DVector<f64>; 3],
    ) -> [DVector<f64>; 3] {
        let (j, jd, jdd) = (&jik[0], &jik[1], &jik[2]);
        match &self.kind {
            SolverKind::Square(lu) => {
                let u = lu.solve(&rhs[0], &mut self.ops);
                let ud = lu.solve(&(&rhs[1] - jd.tr_mul(&u)), &mut self.ops);
                let udd = lu.solve(
                    &(&rhs[2] - jdd.tr_mul(&u) - jd.tr_mul(&ud) * 2.0),
                    &mut self.ops,
                );
                [u, ud, udd]
            }
            SolverKind::MinNorm {
                gram,
                gram_dot,
                gram_ddot,
            } => {
                let y = gram.solve(&rhs[0], &mut self.ops);
                let yd = gram.solve(&(&rhs[1] - gram_dot * &y), &mut self.ops);
                let ydd = gram.solve(
                    &(&rhs[2] - gram_dot * &yd * 2.0 - gram_ddot * &y),
                    &mut self.ops,
                );
                let u = j * &y;
                let ud = jd * &y + j * &yd;
                let udd = jdd * &y + jd * &yd * 2.0 + j * &ydd;
                [u, ud, udd]
            }
        }
    }
}

/// `Σ F̄ᵀQ̄`, `Σ(F̄ᵀQ̄̇ + Ḟ̄ᵀQ̄)`, `Σ(F̄ᵀQ̄̈ + 2Ḟ̄ᵀQ̄̇ + F̈̄ᵀQ̄)`.
pub fn generalized_force_sums(
    model: &PkmModel,
    kin: &PkmKinCache,
    forces: &[LimbForceCache],
) -> [DVector<f64>; 3] {
    let dof = model.dof();
    let mut r = [DVector::zeros(dof), DVector::zeros(dof), DVector::zeros(dof)];
    for ((limb, lk), lf) in model.limbs.iter().zip(&kin.limbs).zip(forces) {
        let n = limb.n_tree();
        let fb = |k: usize| lk.f[k].rows(0, n);
        let [q, qd, qdd] = &lf.forces;
        r[0] += fb(0).tr_mul(q);
        r[1] += fb(0).tr_mul(qd) + fb(1).tr_mul(q);
        r[2] += fb(0).tr_mul(qdd) + fb(1).tr_mul(qd) * 2.0 + fb(2).tr_mul(q);
    }
    r
}

/// `u` solving `J_IKᵀu = Σ F̄ᵀQ̄`.
pub fn assemble_u(
    model: &PkmModel,
    kin: &PkmKinCache,
    forces: &[LimbForceCache],
) -> Result<DVector<f64>, InvDynError> {
    let mut solver = ActuationSolver::new(&kin.ik_jacobian)?;
    let rhs = generalized_force_sums(model, kin, forces);
    let [u, _, _] = solver.solve(&kin.ik_jacobian, &rhs);
    Ok(u)
}

/// `u̇ = J_IK^{−T}(Σ(F̄ᵀQ̄̇ + Ḟ̄ᵀQ̄) − J̇_IKᵀu)`.
pub fn assemble_udot(
    model: &PkmModel,
    kin: &PkmKinCache,
    forces: &[LimbForceCache],
) -> Result<DVector<f64>, InvDynError> {
    let mut solver = ActuationSolver::new(&kin.ik_jacobian)?;
    let rhs = generalized_force_sums(model, kin, forces);
    let [_, ud, _] = solver.solve(&kin.ik_jacobian, &rhs);
    Ok(ud)
}

/// `ü = J_IK^{−T}(Σ(F̄ᵀQ̄̈ + 2Ḟ̄ᵀQ̄̇ + F̈̄ᵀQ̄) − J̈_IKᵀu − 2J̇_IKᵀu̇)`.
pub fn assemble_uddot(
    model: &PkmModel,
    kin: &PkmKinCache,
    forces: &[LimbForceCache],
) -> Result<DVector<f64>, InvDynError> {
    let mut solver = ActuationSolver::new(&kin.ik_jacobian)?;
    let rhs = generalized_force_sums(model, kin, forces);
    let [_, _, udd] = solver.solve(&kin.ik_jacobian, &rhs);
    Ok(udd)
}

/// Per-limb backward sweeps on an existing kinematics cache.
pub fn limb_forces(model: &PkmModel, kin: &PkmKinCache, opts: &InvDynOptions) -> Vec<LimbForceCache> {
    let last = model.limbs.len() - 1;
    par::map_indexed(model.limbs.len(), opts.kinematics.parallel_limbs, |l| {
        let load = if l == last { opts.platform_load.as_ref() } else { None };
        limb_invdyn_2nd(&model.limbs[l], &kin.limbs[l].kin, &model.gravity, load)
    })
}

/// Kinematics, per-limb dynamics and actuation assembly for one state.
pub fn second_order_invdyn(
    model: &PkmModel,
    theta: &[DVector<f64>],
    task: &TaskMotion,
    opts: &InvDynOptions,
) -> Result<InvDynResult, InvDynError> {
    let kinematics = fourth_order_kinematics(model, theta, task, &opts.kinematics)?;
    let limbs = limb_forces(model, &kinematics, opts);
    let mut solver = ActuationSolver::new(&kinematics.ik_jacobian)?;
    let rhs = generalized_force_sums(model, &kinematics, &limbs);
    let [u, u_dot, u_ddot] = solver.solve(&kinematics.ik_jacobian, &rhs);
    Ok(InvDynResult {
        u,
        u_dot,
        u_ddot,
        limbs,
        kinematics,
    })
}
