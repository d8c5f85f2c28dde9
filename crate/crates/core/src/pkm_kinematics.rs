//! Fourth-order inverse kinematics of the PKM.
//!
//! Five passes over the limbs. Pass 1 computes poses, `J_p`, one LU
//! factorization of `J_t` per limb, `F` and `θ̇`. Passes 2–4 each raise the
//! order of the body twists, the relative twists and the Jacobian by one and
//! solve for the next joint derivative with the stored factors. Pass 5
//! completes the body twists with `V⃛_i`. Limbs never interact, so every pass
//! can run limb-parallel.

use nalgebra::{DMatrix, DVector};

use crate::limb_kinematics::{
    delta_twists, geometric_ik_newton, jacobian_derivatives, twist_recursions, IkError,
    ThirdOrderForm, LimbKinCache,
};
use crate::liegroup::{Pose, Twist};
use crate::lu::{LuFactors, OpCounter, SingularMatrix};
use crate::model::{LimbModel, PkmModel, TaskMotion};
use crate::par;

/// Terminal poses of all limbs must agree to this tolerance.
pub const LOOP_CLOSURE_TOLERANCE: f64 = 1e-9;

/// Weights of the fourth-order correction term
/// `c⁴ = J⃛θ̇ + w₂J̈θ̈ + w₃J̇θ⃛`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FourthOrderWeights {
    /// `w = (3, 3)`, the binomial coefficients of the general formula.
    #[default]
    Binomial,
    /// `w = (2, 3)`.
    Reduced,
}

impl FourthOrderWeights {
    fn middle(self) -> f64 {
        match self {
            FourthOrderWeights::Binomial => 3.0,
            FourthOrderWeights::Reduced => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicsOptions {
    pub fourth_order_weights: FourthOrderWeights,
    pub third_order_form: ThirdOrderForm,
    pub closure_tolerance: f64,
    /// Run the per-limb work on the rayon pool.
    pub parallel_limbs: bool,
}

impl Default for KinematicsOptions {
    fn default() -> Self {
        Self {
            fourth_order_weights: FourthOrderWeights::default(),
            third_order_form: ThirdOrderForm::default(),
            closure_tolerance: LOOP_CLOSURE_TOLERANCE,
            parallel_limbs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KinematicsError {
    #[error("kinematic singularity in limb {limb}: {source}")]
    Singular {
        limb: usize,
        #[source]
        source: SingularMatrix,
    },
    #[error("loop closure violated: limb {limb} terminal pose deviates by {deviation:.3e}")]
    LoopClosure { limb: usize, deviation: f64 },
    #[error("{what} has length {found}, expected {expected}")]
    Dimension {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("inverse kinematics failed in limb {limb}: {source}")]
    Ik {
        limb: usize,
        #[source]
        source: IkError,
    },
}

/// Everything the kinematics knows about one limb.
#[derive(Debug, Clone)]
pub struct LimbPkmCache {
    pub kin: LimbKinCache,
    /// `J_t = P_t J_p`.
    pub task_jacobian: DMatrix<f64>,
    pub lu: LuFactors,
    /// `F = J_t⁻¹ D_t` and its first two time derivatives, `N_l × δ_p`.
    pub f: [DMatrix<f64>; 3],
    /// `c², c³, c⁴` (6-vectors before row selection).
    pub corrections: [Twist; 3],
    /// Factorization plus the four joint-derivative solves.
    pub ik_ops: OpCounter,
    /// Solves spent on `F`, `Ḟ`, `F̈`.
    pub aux_ops: OpCounter,
}

impl LimbPkmCache {
    /// `θ^{(k)}`, `k = 1..=4`.
    pub fn joint_derivative(&self, k: usize) -> &DVector<f64> {
        &self.kin.joint_derivs[k - 1]
    }

    /// `P_t J_p^{(k)}`.
    pub fn task_jacobian_derivative(&self, limb: &LimbModel, k: usize) -> DMatrix<f64> {
        let cols = if k == 0 {
            &self.kin.jacobian[..]
        } else {
            &self.kin.jacobian_derivs[k - 1]
        };
        DMatrix::from_fn(limb.task_dim(), cols.len(), |r, c| cols[c].0[limb.task_rows[r]])
    }

    /// `F̄^{(k)}`, the rows of `F^{(k)}` belonging to tree joints.
    pub fn f_bar(&self, limb: &LimbModel, k: usize) -> DMatrix<f64> {
        self.f[k].rows(0, limb.n_tree()).into_owned()
    }
}

#[derive(Debug, Clone)]
pub struct PkmKinCache {
    pub limbs: Vec<LimbPkmCache>,
    /// `J_IK`, `J̇_IK`, `J̈_IK`, `n_a × δ_p`.
    pub ik_jacobian: [DMatrix<f64>; 3],
    pub task: TaskMotion,
}

/// Aggregate operation counts of one kinematics evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KinematicsStats {
    pub ik: OpCounter,
    pub aux: OpCounter,
}

impl PkmKinCache {
    pub fn stats(&self) -> KinematicsStats {
        let mut s = KinematicsStats::default();
        for l in &self.limbs {
            s.ik.merge(&l.ik_ops);
            s.aux.merge(&l.aux_ops);
        }
        s
    }

    /// Platform pose, taken from the platform-carrying limb.
    pub fn platform_pose(&self) -> Pose {
        *self.limbs.last().expect("model has limbs").kin.platform_pose()
    }

    /// Actuated joint coordinate derivatives `θ_a^{(k)}`, `k = 0..=4`.
    pub fn actuated(&self, model: &PkmModel, k: usize) -> DVector<f64> {
        DVector::from_iterator(
            model.n_actuators(),
            self.limbs.iter().zip(&model.limbs).map(|(c, l)| {
                let q = if k == 0 {
                    &c.kin.theta
                } else {
                    c.joint_derivative(k)
                };
                q[l.actuated_joint]
            }),
        )
    }
}

fn check_len<S: Into<String>>(
    what: impl FnOnce() -> S,
    found: usize,
    expected: usize,
) -> Result<(), KinematicsError> {
    if found != expected {
        return Err(KinematicsError::Dimension {
            what: what().into(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Largest deviation of a limb's terminal pose from the platform limb's.
pub fn loop_closure_residuals(model: &PkmModel, theta: &[DVector<f64>]) -> Vec<f64> {
    let terminals: Vec<Pose> = model
        .limbs
        .iter()
        .zip(theta)
        .map(|(limb, q)| *LimbKinCache::new(limb, q).platform_pose())
        .collect();
    pose_deviations(&terminals)
}

fn pose_deviations(terminals: &[Pose]) -> Vec<f64> {
    let reference = terminals.last().expect("model has limbs");
    terminals
        .iter()
        .map(|c| {
            (c.rotation - reference.rotation)
                .amax()
                .max((c.translation - reference.translation).amax())
        })
        .collect()
}

fn limb_pass1(
    model: &PkmModel,
    l: usize,
    theta: &DVector<f64>,
    task_vel: &DVector<f64>,
) -> Result<LimbPkmCache, KinematicsError> {
    let limb = &model.limbs[l];
    let kin = LimbKinCache::new(limb, theta);
    let jt = DMatrix::from_fn(limb.task_dim(), limb.n_joints(), |r, c| {
        kin.jacobian[c].0[limb.task_rows[r]]
    });
    let mut ik_ops = OpCounter::default();
    let mut aux_ops = OpCounter::default();
    let lu = LuFactors::factor(&jt, &mut ik_ops)
        .map_err(|source| KinematicsError::Singular { limb: l, source })?;
    let f = lu.solve_matrix(&limb.velocity_distribution, &mut aux_ops);
    let mut qd = &limb.velocity_distribution * task_vel;
    lu.solve_in_place(&mut qd, &mut ik_ops);
    let mut cache = LimbPkmCache {
        kin,
        task_jacobian: jt,
        lu,
        f: [f, DMatrix::zeros(0, 0), DMatrix::zeros(0, 0)],
        corrections: [Twist::zero(); 3],
        ik_ops,
        aux_ops,
    };
    cache.kin.set_joint_derivative(1, qd);
    Ok(cache)
}

/// Passes 2–4 for one limb: order `nu` of the joint derivatives from the
/// task derivative `task_deriv = V_t^{(nu−1)}`.
fn limb_pass_order(
    model: &PkmModel,
    l: usize,
    cache: &mut LimbPkmCache,
    nu: usize,
    task: &TaskMotion,
    opts: &KinematicsOptions,
) {
    let limb = &model.limbs[l];
    let k = nu - 1;
    twist_recursions(limb, &mut cache.kin, k, Twist::zero()).expect("orders run in sequence");
    let vp = model.platform_twist(task.derivative(k - 1));
    delta_twists(&mut cache.kin, k, vp, opts.third_order_form).expect("orders run in sequence");
    jacobian_derivatives(&mut cache.kin, k, opts.third_order_form).expect("orders run in sequence");

    let kin = &cache.kin;
    let c = match nu {
        2 => kin.jacobian_apply(1, &kin.joint_derivs[0]),
        3 => {
            kin.jacobian_apply(2, &kin.joint_derivs[0])
                + kin.jacobian_apply(1, &kin.joint_derivs[1]) * 2.0
        }
        _ => {
            kin.jacobian_apply(3, &kin.joint_derivs[0])
                + kin.jacobian_apply(2, &kin.joint_derivs[1]) * opts.fourth_order_weights.middle()
                + kin.jacobian_apply(1, &kin.joint_derivs[2]) * 3.0
        }
    };
    cache.corrections[nu - 2] = c;
    let mut q = &limb.velocity_distribution * task.derivative(k);
    for (x, &r) in q.iter_mut().zip(&limb.task_rows) {
        *x -= c.0[r];
    }
    cache.lu.solve_in_place(&mut q, &mut cache.ik_ops);
    cache.kin.set_joint_derivative(nu, q);
}

fn limb_pass5(model: &PkmModel, l: usize, cache: &mut LimbPkmCache) {
    twist_recursions(&model.limbs[l], &mut cache.kin, 4, Twist::zero())
        .expect("orders run in sequence");
}

/// `Ḟ = −G J̇_t F` and `F̈ = −G(J̈_t F + 2 J̇_t Ḟ)` with `G = J_t⁻¹`.
pub fn limb_f_derivatives(limb: &LimbModel, cache: &mut LimbPkmCache) {
    let (n, d) = cache.f[0].shape();
    let kin = &cache.kin;
    fn col(m: &DMatrix<f64>, j: usize) -> &[f64] {
        let n = m.nrows();
        &m.as_slice()[j * n..(j + 1) * n]
    }
    // −P_t (J_p^{(k)} a + 2 J_p^{(k−1)} b) per column, ready for the solve
    let negated_rows = |t: Twist| limb.task_rows.iter().map(move |&r| -t.0[r]);

    let mut fd = DMatrix::zeros(n, d);
    for j in 0..d {
        let t = kin.jacobian_apply_slice(1, col(&cache.f[0], j));
        fd.column_mut(j).iter_mut().zip(negated_rows(t)).for_each(|(x, v)| *x = v);
    }
    cache.lu.solve_matrix_in_place(&mut fd, &mut cache.aux_ops);

    let mut fdd = DMatrix::zeros(n, d);
    for j in 0..d {
        let t = kin.jacobian_apply_slice(2, col(&cache.f[0], j))
            + kin.jacobian_apply_slice(1, col(&fd, j)) * 2.0;
        fdd.column_mut(j).iter_mut().zip(negated_rows(t)).for_each(|(x, v)| *x = v);
    }
    cache.lu.solve_matrix_in_place(&mut fdd, &mut cache.aux_ops);
    cache.f[1] = fd;
    cache.f[2] = fdd;
}

/// Row `k` of `J_IK^{(d)}` is the actuated-joint row of limb `k`'s `F^{(d)}`.
pub fn assemble_ik_jacobian(model: &PkmModel, limbs: &[LimbPkmCache]) -> [DMatrix<f64>; 3] {
    let rows = |d: usize| {
        DMatrix::from_fn(model.n_actuators(), model.dof(), |k, c| {
            limbs[k].f[d][(model.limbs[k].actuated_joint, c)]
        })
    };
    [rows(0), rows(1), rows(2)]
}

fn validate_inputs(
    model: &PkmModel,
    theta: &[DVector<f64>],
    task: &TaskMotion,
) -> Result<(), KinematicsError> {
    check_len(|| "theta (limbs)", theta.len(), model.limbs.len())?;
    for (l, (q, limb)) in theta.iter().zip(&model.limbs).enumerate() {
        check_len(|| format!("theta of limb {l}"), q.len(), limb.n_joints())?;
    }
    for k in 0..4 {
        check_len(|| format!("task derivative {k}"), task.derivative(k).len(), model.dof())?;
    }
    Ok(())
}

/// Pass 1: poses, `J_p`, LU factors of `J_t`, `F` and `θ̇`, after checking
/// loop closure.
pub fn pass1(
    model: &PkmModel,
    theta: &[DVector<f64>],
    task: &TaskMotion,
    opts: &KinematicsOptions,
) -> Result<PkmKinCache, KinematicsError> {
    validate_inputs(model, theta, task)?;
    let limbs = par::try_map_indexed(model.limbs.len(), opts.parallel_limbs, |l| {
        limb_pass1(model, l, &theta[l], &task.vel)
    })?;
    let terminals: Vec<Pose> = limbs.iter().map(|c| *c.kin.platform_pose()).collect();
    for (limb, deviation) in pose_deviations(&terminals).into_iter().enumerate() {
        if !(deviation <= opts.closure_tolerance) {
            return Err(KinematicsError::LoopClosure { limb, deviation });
        }
    }
    let n_a = model.n_actuators();
    let dof = model.dof();
    Ok(PkmKinCache {
        limbs,
        ik_jacobian: [
            DMatrix::zeros(n_a, dof),
            DMatrix::zeros(n_a, dof),
            DMatrix::zeros(n_a, dof),
        ],
        task: task.clone(),
    })
}

fn for_each_limb(
    model: &PkmModel,
    cache: &mut PkmKinCache,
    parallel: bool,
    f: impl Fn(usize, &mut LimbPkmCache) + Sync + Send,
) {
    let limbs = std::mem::take(&mut cache.limbs);
    let slots: Vec<std::sync::Mutex<LimbPkmCache>> =
        limbs.into_iter().map(std::sync::Mutex::new).collect();
    par::map_indexed(model.limbs.len(), parallel, |l| {
        f(l, &mut slots[l].lock().expect("limb slot"))
    });
    cache.limbs = slots
        .into_iter()
        .map(|m| m.into_inner().expect("limb slot"))
        .collect();
}

/// Pass 2: `V_i`, `ΔV`, `J̇_p`, `c²`, `θ̈`.
pub fn pass2(model: &PkmModel, cache: &mut PkmKinCache, opts: &KinematicsOptions) {
    let task = cache.task.clone();
    for_each_limb(model, cache, opts.parallel_limbs, |l, c| {
        limb_pass_order(model, l, c, 2, &task, opts)
    });
}

/// Pass 3: `V̇_i`, `ΔV̇`, `J̈_p`, `c³`, `θ⃛`.
pub fn pass3(model: &PkmModel, cache: &mut PkmKinCache, opts: &KinematicsOptions) {
    let task = cache.task.clone();
    for_each_limb(model, cache, opts.parallel_limbs, |l, c| {
        limb_pass_order(model, l, c, 3, &task, opts)
    });
}

/// Pass 4: `V̈_i`, `ΔV̈`, `J⃛_p`, `c⁴`, `θ⁗`.
pub fn pass4(model: &PkmModel, cache: &mut PkmKinCache, opts: &KinematicsOptions) {
    let task = cache.task.clone();
    for_each_limb(model, cache, opts.parallel_limbs, |l, c| {
        limb_pass_order(model, l, c, 4, &task, opts)
    });
}

/// Pass 5: `V⃛_i`.
pub fn pass5(model: &PkmModel, cache: &mut PkmKinCache, opts: &KinematicsOptions) {
    for_each_limb(model, cache, opts.parallel_limbs, |l, c| limb_pass5(model, l, c));
}

/// All five passes plus `Ḟ`, `F̈` and `J_IK` with derivatives.
pub fn fourth_order_kinematics(
    model: &PkmModel,
    theta: &[DVector<f64>],
    task: &TaskMotion,
    opts: &KinematicsOptions,
) -> Result<PkmKinCache, KinematicsError> {
    validate_inputs(model, theta, task)?;
    let limbs = par::try_map_indexed(model.limbs.len(), opts.parallel_limbs, |l| {
        let mut c = limb_pass1(model, l, &theta[l], &task.vel)?;
        for nu in 2..=4 {
            limb_pass_order(model, l, &mut c, nu, task, opts);
        }
        limb_pass5(model, l, &mut c);
        limb_f_derivatives(&model.limbs[l], &mut c);
        Ok(c)
    })?;
    let terminals: Vec<Pose> = limbs.iter().map(|c| *c.kin.platform_pose()).collect();
    for (limb, deviation) in pose_deviations(&terminals).into_iter().enumerate() {
        if !(deviation <= opts.closure_tolerance) {
            return Err(KinematicsError::LoopClosure { limb, deviation });
        }
    }
    let ik_jacobian = assemble_ik_jacobian(model, &limbs);
    Ok(PkmKinCache {
        limbs,
        ik_jacobian,
        task: task.clone(),
    })
}

/// Scaled residual of `D_t V_t^{(ν−1)} = J_t θ^{(ν)} + P_t c^ν` for one limb,
/// divided by `1 +` the largest term magnitude.
pub fn ik_identity_residual(model: &PkmModel, cache: &PkmKinCache, l: usize, nu: usize) -> f64 {
    let limb = &model.limbs[l];
    let c = &cache.limbs[l];
    let lhs = &limb.velocity_distribution * cache.task.derivative(nu - 1);
    let jq = &c.task_jacobian * c.joint_derivative(nu);
    let corr = if nu == 1 {
        DVector::zeros(limb.task_dim())
    } else {
        limb.select_rows(&c.corrections[nu - 2])
    };
    let scale = 1.0 + lhs.amax().max(jq.amax()).max(corr.amax());
    (lhs - jq - corr).amax() / scale
}

/// Joint coordinates of all limbs placing the platform at `target`, each
/// limb solved by Newton-Raphson from its seed.
pub fn inverse_kinematics(
    model: &PkmModel,
    target: &Pose,
    seed: &[DVector<f64>],
    parallel: bool,
) -> Result<Vec<DVector<f64>>, KinematicsError> {
    check_len(|| "seed (limbs)", seed.len(), model.limbs.len())?;
    par::try_map_indexed(model.limbs.len(), parallel, |l| {
        geometric_ik_newton(&model.limbs[l], target, &seed[l])
            .map(|s| s.theta)
            .map_err(|source| KinematicsError::Ik { limb: l, source })
    })
}

/// Zero joint coordinates for every limb, the home configuration of the
/// bundled fixtures.
pub fn zero_configuration(model: &PkmModel) -> Vec<DVector<f64>> {
    model
        .limbs
        .iter()
        .map(|l| DVector::zeros(l.n_joints()))
        .collect()
}
