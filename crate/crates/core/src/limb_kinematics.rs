//! Serial-chain kinematics of a single limb: product-of-exponentials poses,
//! body-twist recursions up to the third derivative, the platform-frame
//! Jacobian and its first three time derivatives, and a Newton-Raphson
//! geometric IK.
//!
//! All twist derivatives held in [`LimbKinCache`] are kinematic, i.e. the
//! ground is at rest. Gravity is added by the dynamics as a transported
//! ground acceleration.

use nalgebra::{DMatrix, DVector};

use crate::liegroup::{exp_screw, Pose, Twist};
use crate::model::LimbModel;

pub const IK_TOLERANCE: f64 = 1e-12;
pub const IK_MAX_ITERATIONS: usize = 50;
pub const IK_MAX_CONDITION: f64 = 1e12;

/// Which closed form to use for the second derivative of the relative
/// platform twist and the third derivative of the Jacobian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThirdOrderForm {
    /// Obtained by differentiating `J̈` and `ΔV̇` directly.
    #[default]
    Exact,
    /// `ΔV̈ = V̈_p − Ad V̈_i + ad_{ΔV̇}(V_p − ΔV) − ad²_{ΔV}V_p` and
    /// `J⃛ = (−ad³_{ΔV} + 2ad_{ΔV̇}ad_{ΔV} + ad_{ad_{ΔV}ΔV̇} − ad_{ΔV̈})J`.
    Reduced,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KinematicsOrderError {
    #[error("derivative order {0} is out of range 1..=4")]
    OutOfRange(usize),
    #[error("order {requested} needs order {missing} to be computed first")]
    Missing { requested: usize, missing: usize },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IkError {
    #[error("limb Jacobian is singular (condition number {condition:.3e})")]
    Singular { condition: f64 },
    #[error("Newton-Raphson did not converge in {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IkSolution {
    pub theta: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// `layers` equally long rows of per-body values in one allocation;
/// `x[k]` is row `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layers<T> {
    data: Vec<T>,
    len: usize,
}

impl<T: Clone + Default> Layers<T> {
    pub fn new(layers: usize, len: usize) -> Self {
        Self {
            data: vec![T::default(); layers * len],
            len,
        }
    }
}

impl<T> std::ops::Index<usize> for Layers<T> {
    type Output = [T];
    fn index(&self, k: usize) -> &[T] {
        &self.data[k * self.len..(k + 1) * self.len]
    }
}

impl<T> std::ops::IndexMut<usize> for Layers<T> {
    fn index_mut(&mut self, k: usize) -> &mut [T] {
        &mut self.data[k * self.len..(k + 1) * self.len]
    }
}

/// Per-limb kinematic state. Index `k` in the derivative arrays holds the
/// derivative of order `k + 1` of the joint coordinates, or order `k` of the
/// twists.
#[derive(Debug, Clone)]
pub struct LimbKinCache {
    pub theta: DVector<f64>,
    /// `C_i`, pose of body `i` in the inertial frame.
    pub poses: Vec<Pose>,
    /// `C_{i,i−1}`, pose of body `i − 1` seen from body `i`.
    pub rel_poses: Vec<Pose>,
    /// `C_{p,i} = C_p⁻¹ C_i` with `C_p` the terminal body.
    pub platform_rel: Vec<Pose>,
    /// Columns of `J_p`.
    pub jacobian: Vec<Twist>,
    /// Columns of `J̇_p`, `J̈_p`, `J⃛_p`.
    pub jacobian_derivs: Layers<Twist>,
    /// `θ̇, θ̈, θ⃛, θ⁗`.
    pub joint_derivs: [DVector<f64>; 4],
    /// `V_i, V̇_i, V̈_i, V⃛_i` in body frames.
    pub twists: Layers<Twist>,
    /// `ΔV_{p,i}, ΔV̇_{p,i}, ΔV̈_{p,i}` in the platform frame.
    pub delta_twists: Layers<Twist>,
    /// `V_p, V̇_p, V̈_p` used for the relative twists.
    pub platform_twists: [Twist; 3],
    joint_order: usize,
    twist_order: usize,
    delta_order: usize,
    jacobian_order: usize,
}

/// `C_i` and `C_{i,i−1}` for all bodies of the limb.
pub fn fk_poses(limb: &LimbModel, theta: &DVector<f64>) -> (Vec<Pose>, Vec<Pose>) {
    assert_eq!(theta.len(), limb.n_joints(), "joint vector length");
    let mut poses = Vec::with_capacity(limb.n_joints());
    let mut rel = Vec::with_capacity(limb.n_joints());
    let mut c = Pose::identity();
    for (joint, &q) in limb.joints.iter().zip(theta.iter()) {
        let local = joint.ref_config * exp_screw(&joint.screw, q);
        c = c * local;
        poses.push(c);
        rel.push(local.inverse());
    }
    (poses, rel)
}

/// `C_{p,i}` and the columns `Ad_{C_{p,i}} X_i` of `J_p`.
pub fn jacobian_platform(limb: &LimbModel, poses: &[Pose]) -> (Vec<Pose>, Vec<Twist>) {
    let cp_inv = poses.last().expect("limb has joints").inverse();
    let last = poses.len() - 1;
    let platform_rel: Vec<Pose> = poses
        .iter()
        .enumerate()
        .map(|(i, c)| if i == last { Pose::identity() } else { cp_inv * *c })
        .collect();
    let cols = platform_rel
        .iter()
        .zip(&limb.joints)
        .map(|(c, j)| c.adjoint_apply(j.screw.twist()))
        .collect();
    (platform_rel, cols)
}

/// Columns as a `6 × n` matrix.
pub fn columns_to_matrix(cols: &[Twist]) -> DMatrix<f64> {
    DMatrix::from_fn(6, cols.len(), |r, c| cols[c].0[r])
}

impl LimbKinCache {
    /// Poses and `J_p` at `θ`.
    pub fn new(limb: &LimbModel, theta: &DVector<f64>) -> Self {
        let (poses, rel_poses) = fk_poses(limb, theta);
        let (platform_rel, jacobian) = jacobian_platform(limb, &poses);
        let n = limb.n_joints();
        let zq = || DVector::zeros(0);
        Self {
            theta: theta.clone(),
            poses,
            rel_poses,
            platform_rel,
            jacobian,
            jacobian_derivs: Layers::new(3, n),
            joint_derivs: [zq(), zq(), zq(), zq()],
            twists: Layers::new(4, n),
            delta_twists: Layers::new(3, n),
            platform_twists: [Twist::zero(); 3],
            joint_order: 0,
            twist_order: 0,
            delta_order: 0,
            jacobian_order: 0,
        }
    }

    pub fn n_joints(&self) -> usize {
        self.poses.len()
    }

    /// Terminal pose `C_p`.
    pub fn platform_pose(&self) -> &Pose {
        self.poses.last().expect("limb has joints")
    }

    /// Store the joint derivative of order `order` (1 = `θ̇`).
    pub fn set_joint_derivative(&mut self, order: usize, q: DVector<f64>) {
        assert!((1..=4).contains(&order), "joint derivative order {order}");
        assert!(order <= self.joint_order + 1, "joint derivatives set out of order");
        assert_eq!(q.len(), self.n_joints());
        self.joint_derivs[order - 1] = q;
        self.joint_order = self.joint_order.max(order);
    }

    /// `J_p^{(k)}` as a `6 × N_l` matrix, `k = 0..=3`.
    pub fn jacobian_matrix(&self, k: usize) -> DMatrix<f64> {
        if k == 0 {
            columns_to_matrix(&self.jacobian)
        } else {
            columns_to_matrix(&self.jacobian_derivs[k - 1])
        }
    }

    /// `J_p^{(k)} · q`.
    pub fn jacobian_apply(&self, k: usize, q: &DVector<f64>) -> Twist {
        self.jacobian_apply_slice(k, q.as_slice())
    }

    pub fn jacobian_apply_slice(&self, k: usize, q: &[f64]) -> Twist {
        let cols = if k == 0 {
            &self.jacobian[..]
        } else {
            &self.jacobian_derivs[k - 1]
        };
        let mut out = Twist::zero();
        for (c, &qi) in cols.iter().zip(q) {
            out.0 += c.0 * qi;
        }
        out
    }

    /// Largest deviation of a cached `J_p` column from `Ad_{C_{p,i}} X_i`.
    pub fn jacobian_consistency(&self, limb: &LimbModel) -> f64 {
        self.platform_rel
            .iter()
            .zip(&limb.joints)
            .zip(&self.jacobian)
            .map(|((c, j), col)| (c.adjoint_apply(j.screw.twist()).0 - col.0).amax())
            .fold(0.0, f64::max)
    }
}

/// Body twist derivative of order `order − 1` (1 = `V_i`, 4 = `V⃛_i`) for all
/// bodies, from joint derivatives up to order `order`. `ground` is the
/// corresponding derivative of the ground twist.
pub fn twist_recursions(
    limb: &LimbModel,
    cache: &mut LimbKinCache,
    order: usize,
    ground: Twist,
) -> Result<(), KinematicsOrderError> {
    if !(1..=4).contains(&order) {
        return Err(KinematicsOrderError::OutOfRange(order));
    }
    if cache.joint_order < order {
        return Err(KinematicsOrderError::Missing {
            requested: order,
            missing: cache.joint_order + 1,
        });
    }
    if cache.twist_order + 1 < order {
        return Err(KinematicsOrderError::Missing {
            requested: order,
            missing: cache.twist_order + 1,
        });
    }
    let k = order - 1;
    let mut prev = ground;
    for i in 0..cache.n_joints() {
        let x = limb.joints[i].screw.twist();
        let q = |d: usize| cache.joint_derivs[d][i];
        let transported = cache.rel_poses[i].adjoint_apply(&prev);
        let v = |d: usize| cache.twists[d][i];
        let value = match k {
            0 => transported + *x * q(0),
            1 => transported - x.bracket(&v(0)) * q(0) + *x * q(1),
            2 => {
                let a = v(0) * q(1) + v(1) * (2.0 * q(0));
                transported - x.bracket(&a)
                    - x.bracket(&x.bracket(&v(0))) * (q(0) * q(0))
                    + *x * q(2)
            }
            _ => {
                let (qd, qdd, qddd) = (q(0), q(1), q(2));
                let a = v(0) * qddd + v(1) * (3.0 * qdd) + v(2) * (3.0 * qd);
                let b = v(0) * qdd + v(1) * qd;
                let adv = x.bracket(&v(0));
                transported - x.bracket(&a) - x.bracket(&x.bracket(&b)) * (3.0 * qd)
                    - x.bracket(&x.bracket(&adv)) * (qd * qd * qd)
                    + *x * q(3)
            }
        };
        cache.twists[k][i] = value;
        prev = value;
    }
    cache.twist_order = cache.twist_order.max(order);
    Ok(())
}

/// `ΔV_{p,i}` and derivatives up to order `order − 1` of the twist of each
/// body relative to the platform; `platform` is `V_p^{(order−1)}`.
pub fn delta_twists(
    cache: &mut LimbKinCache,
    order: usize,
    platform: Twist,
    form: ThirdOrderForm,
) -> Result<(), KinematicsOrderError> {
    if !(1..=3).contains(&order) {
        return Err(KinematicsOrderError::OutOfRange(order));
    }
    if cache.twist_order < order || cache.delta_order + 1 < order {
        return Err(KinematicsOrderError::Missing {
            requested: order,
            missing: cache.twist_order.min(cache.delta_order) + 1,
        });
    }
    let k = order - 1;
    cache.platform_twists[k] = platform;
    let [vp, vpd, _] = cache.platform_twists;
    for i in 0..cache.n_joints() {
        let base = platform - cache.platform_rel[i].adjoint_apply(&cache.twists[k][i]);
        let dv = cache.delta_twists[0][i];
        cache.delta_twists[k][i] = match k {
            0 => base,
            1 => base + dv.bracket(&vp),
            _ => {
                let dvd = cache.delta_twists[1][i];
                let ad2 = dv.bracket(&dv.bracket(&vp));
                match form {
                    ThirdOrderForm::Exact => {
                        base + dvd.bracket(&(vp + dv)) + ad2 + dv.bracket(&vpd) * 2.0
                    }
                    ThirdOrderForm::Reduced => base + dvd.bracket(&(vp - dv)) - ad2,
                }
            }
        };
    }
    cache.delta_order = cache.delta_order.max(order);
    Ok(())
}

/// `J_p^{(order)}` column-wise from the relative twists.
pub fn jacobian_derivatives(
    cache: &mut LimbKinCache,
    order: usize,
    form: ThirdOrderForm,
) -> Result<(), KinematicsOrderError> {
    if !(1..=3).contains(&order) {
        return Err(KinematicsOrderError::OutOfRange(order));
    }
    if cache.delta_order < order || cache.jacobian_order + 1 < order {
        return Err(KinematicsOrderError::Missing {
            requested: order,
            missing: cache.delta_order.min(cache.jacobian_order) + 1,
        });
    }
    for i in 0..cache.n_joints() {
        let j = cache.jacobian[i];
        let dv = cache.delta_twists[0][i];
        let adj = dv.bracket(&j);
        cache.jacobian_derivs[order - 1][i] = match order {
            1 => -adj,
            2 => dv.bracket(&adj) - cache.delta_twists[1][i].bracket(&j),
            _ => {
                let dvd = cache.delta_twists[1][i];
                let dvdd = cache.delta_twists[2][i];
                let ad3 = dv.bracket(&dv.bracket(&adj));
                let dvd_dv = dvd.bracket(&adj);
                let nested = dv.bracket(&dvd).bracket(&j);
                let weight = match form {
                    ThirdOrderForm::Exact => 3.0,
                    ThirdOrderForm::Reduced => 2.0,
                };
                -ad3 + dvd_dv * weight + nested - dvdd.bracket(&j)
            }
        };
    }
    cache.jacobian_order = cache.jacobian_order.max(order);
    Ok(())
}

/// Ratio of extreme singular values; infinite for a rank-deficient matrix.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Joint coordinates that place the terminal body at `target`, starting from
/// `theta0`. Only the task-selected components of the pose error are driven
/// to zero. Iterates are clamped to joint limits where present.
pub fn geometric_ik_newton(
    limb: &LimbModel,
    target: &Pose,
    theta0: &DVector<f64>,
) -> Result<IkSolution, IkError> {
    let mut theta = theta0.clone();
    let mut residual = f64::INFINITY;
    for iteration in 0..=IK_MAX_ITERATIONS {
        let (poses, selected) = ik_error(limb, target, &theta);
        residual = selected.amax();
        if residual <= IK_TOLERANCE {
            return Ok(IkSolution {
                theta,
                iterations: iteration,
                residual,
            });
        }
        if iteration == IK_MAX_ITERATIONS {
            break;
        }
        newton_step(limb, &poses, &selected, &mut theta)?;
    }
    Err(IkError::NonConvergence {
        iterations: IK_MAX_ITERATIONS,
        residual,
    })
}

/// One further Newton step on a converged solution, taking the residual
/// from the stopping tolerance down to round-off. Returns the new residual.
pub fn refine_ik(limb: &LimbModel, target: &Pose, theta: &mut DVector<f64>) -> Result<f64, IkError> {
    let (poses, selected) = ik_error(limb, target, theta);
    newton_step(limb, &poses, &selected, theta)?;
    Ok(ik_error(limb, target, theta).1.amax())
}

fn ik_error(limb: &LimbModel, target: &Pose, theta: &DVector<f64>) -> (Vec<Pose>, DVector<f64>) {
    let (poses, _) = fk_poses(limb, theta);
    let err = poses[poses.len() - 1].body_error_to(target);
    let selected = limb.select_rows(&err);
    (poses, selected)
}

fn newton_step(
    limb: &LimbModel,
    poses: &[Pose],
    selected: &DVector<f64>,
    theta: &mut DVector<f64>,
) -> Result<(), IkError> {
    let (_, cols) = jacobian_platform(limb, poses);
    let jt = DMatrix::from_fn(limb.task_dim(), limb.n_joints(), |r, c| {
        cols[c].0[limb.task_rows[r]]
    });
    let condition = condition_number(&jt);
    if !(condition <= IK_MAX_CONDITION) {
        return Err(IkError::Singular { condition });
    }
    let step = jt
        .lu()
        .solve(selected)
        .ok_or(IkError::Singular { condition })?;
    *theta += step;
    for (q, joint) in theta.iter_mut().zip(&limb.joints) {
        if let Some((lo, hi)) = joint.limits {
            *q = q.clamp(lo, hi);
        }
    }
    Ok(())
}
