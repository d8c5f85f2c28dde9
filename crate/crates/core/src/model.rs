//! PKM descriptions: limbs, joints, inertia, selection matrices, actuation,
//! cut joints and SEA parameters, plus the JSON model-file loader.
//!
//! All invariants are checked eagerly by [`load_model`]; a [`PkmModel`] is
//! immutable afterwards.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use crate::liegroup::{Pose, Screw, Twist};

const SYMMETRY_TOLERANCE: f64 = 1e-10;
const PSD_TOLERANCE: f64 = 1e-10;
const RANK_TOLERANCE: f64 = 1e-10;

/// Where in the model document a problem was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Model,
    Limb(usize),
    Joint { limb: usize, joint: usize },
    Body { limb: usize, body: usize },
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Model => write!(f, "model"),
            Location::Limb(l) => write!(f, "limb {l}"),
            Location::Joint { limb, joint } => write!(f, "limb {limb}, joint {joint}"),
            Location::Body { limb, body } => write!(f, "limb {limb}, body {body}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model document does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("{at}: {field} has shape {found}, expected {expected}")]
    Shape {
        at: Location,
        field: &'static str,
        expected: String,
        found: String,
    },
    #[error("{at}: {reason}")]
    Invariant { at: Location, reason: String },
}

fn invariant(at: Location, reason: impl Into<String>) -> ModelError {
    ModelError::Invariant {
        at,
        reason: reason.into(),
    }
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub dof: usize,
    pub gravity: Vec<f64>,
    #[serde(rename = "P_p")]
    pub platform_distribution: Vec<Vec<f64>>,
    pub sea: SeaDocument,
    pub limbs: Vec<LimbDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeaDocument {
    pub stiffness: Vec<f64>,
    pub motor_inertia: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimbDocument {
    pub joints: Vec<JointDocument>,
    pub bodies: Vec<BodyDocument>,
    #[serde(rename = "P_t")]
    pub task_selection: Vec<Vec<f64>>,
    #[serde(rename = "D_t")]
    pub velocity_distribution: Vec<Vec<f64>>,
    pub cut_joint_rows: Vec<usize>,
    pub actuated_joint: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointDocument {
    pub screw: Vec<f64>,
    pub ref_config: PoseDocument,
    /// Optional `[lower, upper]` joint range, used by the geometric IK.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseDocument {
    pub rotation: Vec<Vec<f64>>,
    pub translation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyDocument {
    pub mass_matrix: Vec<Vec<f64>>,
}

// ---------------------------------------------------------------------------
// Validated model

#[derive(Debug, Clone, PartialEq)]
pub struct JointSpec {
    /// `X_i`, expressed in the frame of body `i`.
    pub screw: Screw,
    /// `B_i`, pose of body `i` relative to body `i − 1` at `θ = 0`.
    pub ref_config: Pose,
    pub limits: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodySpec {
    /// `M_i` in the body-fixed frame, angular block first.
    pub mass_matrix: Matrix6<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimbModel {
    pub joints: Vec<JointSpec>,
    /// Inertia of the tree bodies `1..=n_tree`.
    pub bodies: Vec<BodySpec>,
    /// Rows of the platform twist selected by `P_t`, in `P_t` row order.
    pub task_rows: Vec<usize>,
    /// `D_t`, `δ_p(l) × δ_p`.
    pub velocity_distribution: DMatrix<f64>,
    pub cut_joint_rows: Vec<usize>,
    pub actuated_joint: usize,
}

impl LimbModel {
    /// `N_l`.
    pub fn n_joints(&self) -> usize {
        self.joints.len()
    }

    /// `n_l`, joints remaining after the cut joints are removed.
    pub fn n_tree(&self) -> usize {
        self.joints.len() - self.cut_joint_rows.len()
    }

    /// `δ_p(l)`.
    pub fn task_dim(&self) -> usize {
        self.task_rows.len()
    }

    /// `P_t` as a `δ_p(l) × 6` matrix.
    pub fn task_selection(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.task_rows.len(), 6);
        for (r, &c) in self.task_rows.iter().enumerate() {
            p[(r, c)] = 1.0;
        }
        p
    }

    /// `P_t · x` for a 6-vector.
    pub fn select_rows(&self, x: &Twist) -> DVector<f64> {
        DVector::from_iterator(self.task_rows.len(), self.task_rows.iter().map(|&r| x.0[r]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeaParams {
    /// Diagonal of `K`.
    pub stiffness: Vec<f64>,
    /// Diagonal of `M_m`.
    pub motor_inertia: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PkmModel {
    pub limbs: Vec<LimbModel>,
    /// Row of the platform twist that task component `k` maps to (`P_p`).
    pub platform_rows: Vec<usize>,
    /// Gravitational acceleration in the inertial frame.
    pub gravity: Vector3<f64>,
    pub sea: SeaParams,
}

impl PkmModel {
    /// `δ_p`.
    pub fn dof(&self) -> usize {
        self.platform_rows.len()
    }

    /// Number of actuators, one per limb.
    pub fn n_actuators(&self) -> usize {
        self.limbs.len()
    }

    /// `P_p` as a `6 × δ_p` matrix.
    pub fn platform_distribution(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(6, self.dof());
        for (c, &r) in self.platform_rows.iter().enumerate() {
            p[(r, c)] = 1.0;
        }
        p
    }

    /// `V_p = P_p · V_t`.
    pub fn platform_twist(&self, task: &DVector<f64>) -> Twist {
        let mut v = Twist::zero();
        for (c, &r) in self.platform_rows.iter().enumerate() {
            v.0[r] = task[c];
        }
        v
    }

    /// `P_pᵀ · V_p`, the task components of a platform twist.
    pub fn task_components(&self, platform: &Twist) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.platform_rows.iter().map(|&r| platform.0[r]))
    }

    /// Copy of the model with gravity switched off.
    pub fn without_gravity(&self) -> PkmModel {
        let mut m = self.clone();
        m.gravity = Vector3::zeros();
        m
    }

    pub fn to_document(&self) -> ModelDocument {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect()
        };
        let rows6 = |m: &Matrix6<f64>| -> Vec<Vec<f64>> {
            (0..6).map(|i| m.row(i).iter().copied().collect()).collect()
        };
        ModelDocument {
            dof: self.dof(),
            gravity: self.gravity.iter().copied().collect(),
            platform_distribution: rows(&self.platform_distribution()),
            sea: SeaDocument {
                stiffness: self.sea.stiffness.clone(),
                motor_inertia: self.sea.motor_inertia.clone(),
            },
            limbs: self
                .limbs
                .iter()
                .map(|limb| LimbDocument {
                    joints: limb
                        .joints
                        .iter()
                        .map(|j| JointDocument {
                            screw: j.screw.twist().0.iter().copied().collect(),
                            ref_config: PoseDocument {
                                rotation: (0..3)
                                    .map(|i| j.ref_config.rotation.row(i).iter().copied().collect())
                                    .collect(),
                                translation: j.ref_config.translation.iter().copied().collect(),
                            },
                            limits: j.limits.map(|(lo, hi)| [lo, hi]),
                        })
                        .collect(),
                    bodies: limb
                        .bodies
                        .iter()
                        .map(|b| BodyDocument {
                            mass_matrix: rows6(&b.mass_matrix),
                        })
                        .collect(),
                    task_selection: rows(&limb.task_selection()),
                    velocity_distribution: rows(&limb.velocity_distribution),
                    cut_joint_rows: limb.cut_joint_rows.clone(),
                    actuated_joint: limb.actuated_joint,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("model serializes")
    }
}

// ---------------------------------------------------------------------------
// Loading

/// Parse and validate a model document.
pub fn load_model(document: &str) -> Result<PkmModel, ModelError> {
    let doc: ModelDocument = serde_json::from_str(document)?;
    from_document(&doc)
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<PkmModel, ModelError> {
    let text = std::fs::read_to_string(path)?;
    load_model(&text)
}

fn expect_len(at: Location, field: &'static str, v: &[f64], n: usize) -> Result<(), ModelError> {
    if v.len() != n {
        return Err(ModelError::Shape {
            at,
            field,
            expected: n.to_string(),
            found: v.len().to_string(),
        });
    }
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(invariant(at, format!("{field} contains non-finite value {bad}")));
    }
    Ok(())
}

fn matrix(
    at: Location,
    field: &'static str,
    rows: &[Vec<f64>],
    nrows: usize,
    ncols: usize,
) -> Result<DMatrix<f64>, ModelError> {
    let shape_err = || ModelError::Shape {
        at,
        field,
        expected: format!("{nrows}x{ncols}"),
        found: format!(
            "{}x{}",
            rows.len(),
            rows.first().map(|r| r.len()).unwrap_or(0)
        ),
    };
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(shape_err());
    }
    for r in rows {
        expect_len(at, field, r, ncols)?;
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Column index of the single `1` in each row of a 0/1 selection matrix.
fn unit_rows(at: Location, field: &str, m: &DMatrix<f64>) -> Result<Vec<usize>, ModelError> {
    let mut picked = Vec::with_capacity(m.nrows());
    for i in 0..m.nrows() {
        let row = m.row(i);
        if row.iter().any(|&x| x != 0.0 && x != 1.0) {
            return Err(invariant(at, format!("{field} row {i} has entries other than 0/1")));
        }
        let ones: Vec<usize> = (0..row.len()).filter(|&j| row[j] == 1.0).collect();
        if ones.len() != 1 {
            return Err(invariant(at, format!("{field} row {i} is not a unit row")));
        }
        if picked.contains(&ones[0]) {
            return Err(invariant(at, format!("{field} rows are not distinct")));
        }
        picked.push(ones[0]);
    }
    Ok(picked)
}

fn column_rank(m: &DMatrix<f64>) -> usize {
    if m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * smax.max(1.0)).count()
}

fn pose_from(at: Location, doc: &PoseDocument) -> Result<Pose, ModelError> {
    let r = matrix(at, "ref_config.rotation", &doc.rotation, 3, 3)?;
    expect_len(at, "ref_config.translation", &doc.translation, 3)?;
    let pose = Pose::new(
        Matrix3::from_iterator(r.iter().copied()),
        Vector3::from_column_slice(&doc.translation),
    );
    let err = pose.orthonormality_error();
    if !pose.is_valid() {
        return Err(invariant(
            at,
            format!("ref_config rotation is not a proper rotation (|RᵀR − I| = {err:.3e})"),
        ));
    }
    Ok(pose)
}

fn mass_matrix_from(at: Location, doc: &BodyDocument) -> Result<Matrix6<f64>, ModelError> {
    let m = matrix(at, "mass_matrix", &doc.mass_matrix, 6, 6)?;
    let m = Matrix6::from_iterator(m.iter().copied());
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOLERANCE {
        return Err(invariant(
            at,
            format!("mass matrix is not symmetric (max |M − Mᵀ| = {asym:.3e})"),
        ));
    }
    let min_eig = m.symmetric_eigenvalues().min();
    if min_eig < -PSD_TOLERANCE {
        return Err(invariant(
            at,
            format!("mass matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})"),
        ));
    }
    Ok(m)
}

fn limb_from(l: usize, doc: &LimbDocument, dof: usize, last: bool) -> Result<LimbModel, ModelError> {
    let at = Location::Limb(l);
    let n = doc.joints.len();
    if n == 0 {
        return Err(invariant(at, "limb has no joints"));
    }

    let mut joints = Vec::with_capacity(n);
    for (j, jd) in doc.joints.iter().enumerate() {
        let jat = Location::Joint { limb: l, joint: j };
        expect_len(jat, "screw", &jd.screw, 6)?;
        let screw = Screw::new(Twist::from_slice(&jd.screw)).map_err(|e| invariant(jat, e.to_string()))?;
        let ref_config = pose_from(jat, &jd.ref_config)?;
        let limits = match jd.limits {
            Some([lo, hi]) if lo < hi => Some((lo, hi)),
            Some([lo, hi]) => {
                return Err(invariant(jat, format!("joint limits [{lo}, {hi}] are empty")))
            }
            None => None,
        };
        joints.push(JointSpec {
            screw,
            ref_config,
            limits,
        });
    }

    let n_task = doc.task_selection.len();
    let p_t = matrix(at, "P_t", &doc.task_selection, n_task, 6)?;
    let task_rows = unit_rows(at, "P_t", &p_t)?;
    if n_task != n {
        return Err(invariant(
            at,
            format!("kinematically redundant limb: δ_p(l) = {n_task} but N_l = {n}"),
        ));
    }
    let d_t = matrix(at, "D_t", &doc.velocity_distribution, n_task, dof)?;
    if column_rank(&d_t) != dof {
        return Err(invariant(at, "D_t does not have full column rank"));
    }

    let mut cut = doc.cut_joint_rows.clone();
    cut.sort_unstable();
    cut.dedup();
    if cut.len() != doc.cut_joint_rows.len() {
        return Err(invariant(at, "cut_joint_rows contains duplicates"));
    }
    if last && !cut.is_empty() {
        return Err(invariant(at, "the platform-carrying (last) limb cannot have cut joints"));
    }
    if !last && cut.is_empty() {
        return Err(invariant(at, "every limb except the last must be cut from the platform"));
    }
    let n_tree = n - cut.len();
    if cut.iter().enumerate().any(|(k, &r)| r != n_tree + k) {
        return Err(invariant(
            at,
            "cut_joint_rows must be the trailing (platform-side) joints of the limb",
        ));
    }

    if doc.bodies.len() != n_tree {
        return Err(ModelError::Shape {
            at,
            field: "bodies",
            expected: format!("{n_tree} tree bodies"),
            found: doc.bodies.len().to_string(),
        });
    }
    let bodies = doc
        .bodies
        .iter()
        .enumerate()
        .map(|(b, bd)| {
            mass_matrix_from(Location::Body { limb: l, body: b }, bd)
                .map(|mass_matrix| BodySpec { mass_matrix })
        })
        .collect::<Result<Vec<_>, _>>()?;

    if doc.actuated_joint >= n_tree {
        return Err(invariant(
            at,
            format!(
                "actuated joint {} is not a tree joint (n_l = {n_tree})",
                doc.actuated_joint
            ),
        ));
    }

    Ok(LimbModel {
        joints,
        bodies,
        task_rows,
        velocity_distribution: d_t,
        cut_joint_rows: cut,
        actuated_joint: doc.actuated_joint,
    })
}

/// Validate a parsed document.
pub fn from_document(doc: &ModelDocument) -> Result<PkmModel, ModelError> {
    let at = Location::Model;
    let dof = doc.dof;
    if dof == 0 || dof > 6 {
        return Err(invariant(at, format!("dof must be in 1..=6, got {dof}")));
    }
    expect_len(at, "gravity", &doc.gravity, 3)?;
    let p_p = matrix(at, "P_p", &doc.platform_distribution, 6, dof)?;
    let platform_rows = unit_rows(at, "P_p columns", &p_p.transpose())?;

    let n_limbs = doc.limbs.len();
    if n_limbs == 0 {
        return Err(invariant(at, "model has no limbs"));
    }
    if n_limbs < dof {
        return Err(invariant(
            at,
            format!("{n_limbs} single-actuator limbs cannot drive {dof} DOF"),
        ));
    }
    let limbs = doc
        .limbs
        .iter()
        .enumerate()
        .map(|(l, ld)| limb_from(l, ld, dof, l + 1 == n_limbs))
        .collect::<Result<Vec<_>, _>>()?;

    expect_len(at, "sea.stiffness", &doc.sea.stiffness, n_limbs)?;
    expect_len(at, "sea.motor_inertia", &doc.sea.motor_inertia, n_limbs)?;
    if let Some(k) = doc.sea.stiffness.iter().position(|&k| k <= 0.0) {
        return Err(invariant(at, format!("SEA stiffness {k} must be positive")));
    }
    if let Some(k) = doc.sea.motor_inertia.iter().position(|&m| m < 0.0) {
        return Err(invariant(at, format!("motor inertia {k} must be non-negative")));
    }

    Ok(PkmModel {
        limbs,
        platform_rows,
        gravity: Vector3::from_column_slice(&doc.gravity),
        sea: SeaParams {
            stiffness: doc.sea.stiffness.clone(),
            motor_inertia: doc.sea.motor_inertia.clone(),
        },
    })
}

/// Per-limb mobility report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LimbMobility {
    pub limb: usize,
    /// `δ_p(l)`.
    pub task_dim: usize,
    pub equimobile: bool,
}

/// A limb is equimobile when `δ_p(l) = δ_p`, i.e. `D_t(l)` is square.
pub fn validate_equimobility(model: &PkmModel) -> Vec<LimbMobility> {
    model
        .limbs
        .iter()
        .enumerate()
        .map(|(limb, l)| LimbMobility {
            limb,
            task_dim: l.task_dim(),
            equimobile: l.velocity_distribution.nrows() == model.dof(),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// State

/// Task-space motion `V_t, V̇_t, V̈_t, V⃛_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskMotion {
    pub vel: DVector<f64>,
    pub acc: DVector<f64>,
    pub jerk: DVector<f64>,
    pub snap: DVector<f64>,
}

impl TaskMotion {
    pub fn zeros(dof: usize) -> Self {
        Self {
            vel: DVector::zeros(dof),
            acc: DVector::zeros(dof),
            jerk: DVector::zeros(dof),
            snap: DVector::zeros(dof),
        }
    }

    /// Derivative of order `k` of `V_t` (`k = 0` is `V_t` itself).
    pub fn derivative(&self, k: usize) -> &DVector<f64> {
        match k {
            0 => &self.vel,
            1 => &self.acc,
            2 => &self.jerk,
            3 => &self.snap,
            _ => panic!("task motion stores derivatives 0..=3, asked for {k}"),
        }
    }
}

/// Configuration and task motion of the PKM.
#[derive(Debug, Clone, PartialEq)]
pub struct PkmState {
    /// Joint coordinates, one vector of length `N_l` per limb.
    pub theta: Vec<DVector<f64>>,
    pub task: TaskMotion,
    pub platform_pose: Option<Pose>,
}
