//! Finite-difference verification of every analytic derivative the engine
//! produces. Central differences are combined by Richardson extrapolation
//! over steps `base_step · 2^i`, and each analytic derivative is compared
//! with the difference quotient of its lower-order partner along a
//! trajectory.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::invdyn::{second_order_invdyn, InvDynOptions, InvDynResult};
use crate::liegroup::Twist;
use crate::limb_kinematics::refine_ik;
use crate::model::PkmModel;
use crate::par;
use crate::pkm_kinematics::inverse_kinematics;
use crate::taskspace::{eom_residual, task_eom};
use crate::trajectory::{IkTracker, ScrewTrajectory};

/// Tolerance of the closed-form EOM residual check.
pub const EOM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FdConfigError {
    #[error("base step {0} is outside [1e-8, 1e-2]")]
    Step(f64),
    #[error("richardson levels must be in 1..=4 (got {0})")]
    Levels(usize),
    #[error("tolerance for order {order} must be positive (got {value})")]
    Tolerance { order: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdConfig {
    /// Finest step; coarser steps double it.
    pub base_step: f64,
    pub richardson_levels: usize,
    /// Relative tolerance keyed by the derivative order being checked.
    pub tolerance_per_order: BTreeMap<usize, f64>,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self {
            base_step: 1e-4,
            richardson_levels: 3,
            tolerance_per_order: BTreeMap::from([(1, 1e-7), (2, 1e-5), (3, 1e-4), (4, 1e-4)]),
        }
    }
}

impl FdConfig {
    pub fn validate(&self) -> Result<(), FdConfigError> {
        if !(1e-8..=1e-2).contains(&self.base_step) {
            return Err(FdConfigError::Step(self.base_step));
        }
        if !(1..=4).contains(&self.richardson_levels) {
            return Err(FdConfigError::Levels(self.richardson_levels));
        }
        for (&order, &value) in &self.tolerance_per_order {
            if !(value > 0.0) {
                return Err(FdConfigError::Tolerance { order, value });
            }
        }
        Ok(())
    }

    /// Every tolerance multiplied by `scale`.
    pub fn scaled(&self, scale: f64) -> Self {
        let mut out = self.clone();
        for v in out.tolerance_per_order.values_mut() {
            *v *= scale;
        }
        out
    }

    pub fn tolerance(&self, order: usize) -> f64 {
        self.tolerance_per_order
            .get(&order)
            .or_else(|| self.tolerance_per_order.values().next_back())
            .copied()
            .unwrap_or(1e-7)
    }

    /// Steps from coarsest to finest.
    pub fn steps(&self) -> Vec<f64> {
        (0..self.richardson_levels)
            .rev()
            .map(|i| self.base_step * f64::powi(2.0, i as i32))
            .collect()
    }
}

/// Richardson extrapolation of central differences. `plus[i]` and
/// `minus[i]` are values at `t ± steps[i]`, `steps` halving each time.
fn extrapolate(
    plus: &[DVector<f64>],
    minus: &[DVector<f64>],
    center: Option<&DVector<f64>>,
    steps: &[f64],
    order: usize,
) -> DVector<f64> {
    let mut table: Vec<DVector<f64>> = steps
        .iter()
        .enumerate()
        .map(|(i, &h)| match order {
            1 => (&plus[i] - &minus[i]) / (2.0 * h),
            _ => {
                let c = center.expect("second differences need the center value");
                ((&plus[i] - c) + (&minus[i] - c)) / (h * h)
            }
        })
        .collect();
    // column j of the tableau removes the h^{2j} error term
    for j in 1..steps.len() {
        let factor = 1.0 / (f64::powi(4.0, j as i32) - 1.0);
        for i in (j..steps.len()).rev() {
            let diff = &table[i] - &table[i - 1];
            table[i] += diff * factor;
        }
    }
    table.pop().expect("at least one level")
}

/// Derivative of order 1 or 2 of `f` at `t`.
pub fn fd_derivative(
    f: impl Fn(f64) -> DVector<f64>,
    t: f64,
    order: usize,
    cfg: &FdConfig,
) -> DVector<f64> {
    assert!(order == 1 || order == 2, "finite differences of order {order}");
    let steps = cfg.steps();
    let plus: Vec<_> = steps.iter().map(|h| f(t + h)).collect();
    let minus: Vec<_> = steps.iter().map(|h| f(t - h)).collect();
    let center = (order == 2).then(|| f(t));
    extrapolate(&plus, &minus, center.as_ref(), &steps, order)
}

/// `‖a − b‖_∞ / max(1, ‖b‖_∞)`.
pub fn relative_error(analytic: &DVector<f64>, reference: &DVector<f64>) -> f64 {
    (analytic - reference).amax() / reference.amax().max(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    /// Derivative order of the analytic quantity; 0 for identities.
    pub order: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub samples: usize,
}

impl CheckResult {
    pub fn pass(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerificationReport {
    pub checks: Vec<CheckResult>,
}

impl VerificationReport {
    pub fn pass(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(CheckResult::pass)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.pass())
    }

    pub fn record(&mut self, name: &str, order: usize, error: f64, tolerance: f64) {
        self.merge_check(CheckResult {
            name: name.to_string(),
            order,
            max_rel_error: error,
            tolerance,
            samples: 1,
        });
    }

    fn merge_check(&mut self, c: CheckResult) {
        match self.checks.iter_mut().find(|e| e.name == c.name) {
            Some(e) => {
                // NaN must stick, so compare explicitly
                if !(e.max_rel_error >= c.max_rel_error) {
                    e.max_rel_error = c.max_rel_error;
                }
                e.tolerance = e.tolerance.min(c.tolerance);
                e.samples += c.samples;
            }
            None => self.checks.push(c),
        }
    }

    /// Combine two reports; entries with equal names keep the worst error.
    pub fn merge(mut self, other: VerificationReport) -> VerificationReport {
        for c in other.checks {
            self.merge_check(c);
        }
        self
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["name", "order", "max_rel_error", "tolerance", "samples", "pass"])?;
        for c in &self.checks {
            w.write_record([
                c.name.clone(),
                c.order.to_string(),
                format!("{:.16e}", c.max_rel_error),
                format!("{:.16e}", c.tolerance),
                c.samples.to_string(),
                c.pass().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Corruptions used to show the oracle notices a wrong derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Report `−J⃛_p` instead of `J⃛_p`.
    FlipJacobianThirdDerivative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub samples: usize,
    pub invdyn: InvDynOptions,
    pub eom_tolerance: f64,
    /// Finest step of the second-difference check on `u`. Second
    /// differences amplify the IK residual by `1/h²`, so this is coarser
    /// than the first-difference step.
    pub second_difference_step: f64,
    /// Evaluate sample times on the rayon pool.
    pub parallel: bool,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            samples: 10,
            invdyn: InvDynOptions::default(),
            eom_tolerance: EOM_TOLERANCE,
            second_difference_step: 1e-3,
            parallel: par::PARALLEL_AVAILABLE,
            fault: None,
        }
    }
}

/// Flattened engine outputs at one instant, index = derivative order.
#[derive(Debug, Clone)]
struct Snapshot {
    theta: [DVector<f64>; 5],
    jacobian: [DVector<f64>; 4],
    f: [DVector<f64>; 3],
    ik_jacobian: [DVector<f64>; 3],
    forces: [DVector<f64>; 3],
    u: [DVector<f64>; 3],
    eom_residual: f64,
}

fn flatten_twists<'a>(cols: impl Iterator<Item = &'a Twist>) -> Vec<f64> {
    cols.flat_map(|c| c.0.iter().copied()).collect()
}

fn flatten_matrix(m: &DMatrix<f64>) -> impl Iterator<Item = f64> + '_ {
    m.iter().copied()
}

impl Snapshot {
    fn new(model: &PkmModel, r: &InvDynResult, fault: Option<Fault>) -> Self {
        let kin = &r.kinematics;
        let stack = |g: &dyn Fn(usize) -> Vec<f64>| DVector::from_vec((0..kin.limbs.len()).flat_map(g).collect());
        let theta = std::array::from_fn(|k| {
            stack(&|l| {
                let c = &kin.limbs[l];
                let q = if k == 0 { &c.kin.theta } else { c.joint_derivative(k) };
                q.iter().copied().collect()
            })
        });
        let mut jacobian: [DVector<f64>; 4] = std::array::from_fn(|k| {
            stack(&|l| {
                let c = &kin.limbs[l].kin;
                let cols = if k == 0 { &c.jacobian[..] } else { &c.jacobian_derivs[k - 1] };
                flatten_twists(cols.iter())
            })
        });
        if fault == Some(Fault::FlipJacobianThirdDerivative) {
            jacobian[3] = -&jacobian[3];
        }
        let f = std::array::from_fn(|k| stack(&|l| flatten_matrix(&kin.limbs[l].f[k]).collect()));
        let ik_jacobian = std::array::from_fn(|k| DVector::from_iterator(kin.ik_jacobian[k].len(), flatten_matrix(&kin.ik_jacobian[k])));
        let forces = std::array::from_fn(|k| stack(&|l| r.limbs[l].forces[k].iter().copied().collect()));
        let eom = task_eom(model, kin);
        Snapshot {
            theta,
            jacobian,
            f,
            ik_jacobian,
            forces,
            u: [r.u.clone(), r.u_dot.clone(), r.u_ddot.clone()],
            eom_residual: eom_residual(&eom, kin, &r.u),
        }
    }
}

/// `(name, family accessor, highest analytic order)`.
type Family = (&'static str, fn(&Snapshot) -> &[DVector<f64>]);

const FAMILIES: [Family; 6] = [
    ("theta", |s| &s.theta),
    ("jacobian", |s| &s.jacobian),
    ("f", |s| &s.f),
    ("ik_jacobian", |s| &s.ik_jacobian),
    ("generalized_forces", |s| &s.forces),
    ("u", |s| &s.u),
];

fn evaluate(
    model: &PkmModel,
    traj: &ScrewTrajectory,
    t: f64,
    seed: &[DVector<f64>],
    opts: &VerifyOptions,
) -> Result<(Vec<DVector<f64>>, Snapshot), String> {
    let sample = traj.sample(t);
    let mut theta = inverse_kinematics(model, &sample.pose, seed, false).map_err(|e| e.to_string())?;
    for (limb, q) in model.limbs.iter().zip(&mut theta) {
        refine_ik(limb, &sample.pose, q).map_err(|e| e.to_string())?;
    }
    let r = second_order_invdyn(model, &theta, &sample.task, &opts.invdyn).map_err(|e| e.to_string())?;
    let snap = Snapshot::new(model, &r, opts.fault);
    Ok((theta, snap))
}

fn stencil(
    model: &PkmModel,
    traj: &ScrewTrajectory,
    t: f64,
    seed: &[DVector<f64>],
    steps: &[f64],
    opts: &VerifyOptions,
) -> Result<(Vec<Snapshot>, Vec<Snapshot>), String> {
    let side = |sign: f64| {
        steps
            .iter()
            .map(|h| evaluate(model, traj, t + sign * h, seed, opts).map(|x| x.1))
            .collect::<Result<Vec<_>, _>>()
    };
    Ok((side(1.0)?, side(-1.0)?))
}

fn verify_sample(
    model: &PkmModel,
    traj: &ScrewTrajectory,
    t: f64,
    seed: &[DVector<f64>],
    cfg: &FdConfig,
    opts: &VerifyOptions,
) -> VerificationReport {
    let mut report = VerificationReport::default();
    let steps = cfg.steps();
    let coarse = FdConfig {
        base_step: opts.second_difference_step,
        ..cfg.clone()
    }
    .steps();
    let run = || -> Result<_, String> {
        let (theta, center) = evaluate(model, traj, t, seed, opts)?;
        let (plus, minus) = stencil(model, traj, t, &theta, &steps, opts)?;
        let (plus2, minus2) = stencil(model, traj, t, &theta, &coarse, opts)?;
        Ok((center, plus, minus, plus2, minus2))
    };
    let Ok((center, plus, minus, plus2, minus2)) = run() else {
        report.record("evaluation", 0, f64::INFINITY, 0.0);
        return report;
    };
    for (name, family) in FAMILIES {
        let levels = family(&center).len();
        for k in 1..levels {
            let p: Vec<_> = plus.iter().map(|s| family(s)[k - 1].clone()).collect();
            let m: Vec<_> = minus.iter().map(|s| family(s)[k - 1].clone()).collect();
            let fd = extrapolate(&p, &m, None, &steps, 1);
            let err = relative_error(&family(&center)[k], &fd);
            report.record(&format!("{name}_d{k}"), k, err, cfg.tolerance(k));
        }
    }
    let p: Vec<_> = plus2.iter().map(|s| s.u[0].clone()).collect();
    let m: Vec<_> = minus2.iter().map(|s| s.u[0].clone()).collect();
    let fd2 = extrapolate(&p, &m, Some(&center.u[0]), &coarse, 2);
    report.record("u_d2_second_difference", 2, relative_error(&center.u[2], &fd2), cfg.tolerance(2));
    report.record("eom_residual", 0, center.eom_residual, opts.eom_tolerance);
    report
}

/// Interior sample times `T(i + ½)/n`, each moved off any breakpoint by
/// at least `clearance`.
pub fn sample_times(duration: f64, n: usize, breakpoints: &[f64], clearance: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let mut t = duration * (i as f64 + 0.5) / n as f64;
            for &b in breakpoints {
                if (t - b).abs() < clearance {
                    t = b + clearance;
                }
            }
            t
        })
        .collect()
}

/// Verification at explicit times. Each time gets its own IK, seeded by
/// tracking the trajectory from its start.
pub fn verify_at_times(
    model: &PkmModel,
    traj: &ScrewTrajectory,
    times: &[f64],
    cfg: &FdConfig,
    opts: &VerifyOptions,
) -> VerificationReport {
    let mut tracker = IkTracker::new(model, false);
    let mut seeds = Vec::with_capacity(times.len());
    let mut sorted: Vec<usize> = (0..times.len()).collect();
    sorted.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut seed_of = vec![None; times.len()];
    for &i in &sorted {
        if let Ok(theta) = tracker.solve(&traj.sample(times[i]).pose) {
            seed_of[i] = Some(theta.to_vec());
        }
    }
    for s in seed_of {
        seeds.push(s.unwrap_or_else(|| tracker.current().to_vec()));
    }
    let reports = par::map_indexed(times.len(), opts.parallel, |i| {
        verify_sample(model, traj, times[i], &seeds[i], cfg, opts)
    });
    reports
        .into_iter()
        .fold(VerificationReport::default(), VerificationReport::merge)
}

/// Full verification along a trajectory at `max(samples, 10)` times.
pub fn verify_model(
    model: &PkmModel,
    traj: &ScrewTrajectory,
    duration: f64,
    cfg: &FdConfig,
    opts: &VerifyOptions,
) -> Result<VerificationReport, FdConfigError> {
    cfg.validate()?;
    let widest = cfg.steps()[0].max(opts.second_difference_step * 4.0);
    let times = sample_times(duration, opts.samples.max(10), &traj.profile.breakpoints(), 2.0 * widest);
    Ok(verify_at_times(model, traj, &times, cfg, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::trajectory::TrajectorySpec;

    fn scalar(f: impl Fn(f64) -> f64) -> impl Fn(f64) -> DVector<f64> {
        move |t| DVector::from_element(1, f(t))
    }

    #[test]
    fn polynomial_and_sine_examples() {
        let cfg = FdConfig::default();
        let d = fd_derivative(scalar(|t| t.powi(3)), 2.0, 1, &cfg)[0];
        assert!((d - 12.0).abs() < 1e-9);
        let d = fd_derivative(scalar(f64::sin), 0.3, 2, &cfg)[0];
        assert!((d + 0.3f64.sin()).abs() < 1e-8, "{d}");
    }

    #[test]
    fn oracle_floor_on_polynomials() {
        let cfg = FdConfig::default();
        for deg in 0..=6 {
            let f = scalar(move |t| t.powi(deg));
            let exact = deg as f64 * 0.7f64.powi(deg - 1);
            let d = fd_derivative(f, 0.7, 1, &cfg)[0];
            assert!((d - exact).abs() <= 1e-10, "deg {deg}: {d} vs {exact}");
        }
        let coarse = FdConfig {
            base_step: 1e-2,
            ..FdConfig::default()
        };
        for deg in 0..=7 {
            let f = scalar(move |t| t.powi(deg));
            let exact = (deg * (deg - 1).max(0)) as f64 * 0.7f64.powi((deg - 2).max(0));
            let d = fd_derivative(f, 0.7, 2, &coarse)[0];
            assert!((d - exact).abs() <= 1e-10, "deg {deg}: {d} vs {exact}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(FdConfig::default().validate().is_ok());
        let mut c = FdConfig {
            base_step: 1e-9,
            ..Default::default()
        };
        assert_eq!(c.validate(), Err(FdConfigError::Step(1e-9)));
        c.base_step = 1e-4;
        c.richardson_levels = 5;
        assert_eq!(c.validate(), Err(FdConfigError::Levels(5)));
        assert_eq!(FdConfig::default().steps(), vec![4e-4, 2e-4, 1e-4]);
    }

    fn report(names: &[(&str, f64)]) -> VerificationReport {
        let mut r = VerificationReport::default();
        for &(n, e) in names {
            r.record(n, 1, e, 1e-7);
        }
        r
    }

    #[test]
    fn merge_is_associative_and_keeps_the_worst() {
        let a = report(&[("x", 1e-9), ("y", 1e-6)]);
        let b = report(&[("y", 1e-8), ("z", 1e-10)]);
        let c = report(&[("x", 1e-7), ("z", f64::NAN)]);
        let left = a.clone().merge(b.clone()).merge(c.clone());
        let right = a.merge(b.merge(c));
        assert_eq!(left.to_csv(), right.to_csv());
        assert_eq!(left.get("x").unwrap().max_rel_error, 1e-7);
        assert_eq!(left.get("y").unwrap().samples, 2);
        assert!(!left.get("z").unwrap().pass());
        assert!(!left.pass());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let csv = report(&[("x", 1e-9)]).to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("name,order,max_rel_error,tolerance,samples,pass"));
        let row: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(row[..2], ["x", "1"]);
        assert_eq!(row[2].parse::<f64>().unwrap(), 1e-9);
        assert_eq!(row[5], "true");
    }

    #[test]
    fn gsp_roll_passes() {
        let model = fixtures::gsp();
        let spec = TrajectorySpec::default_roll();
        let traj = spec.build(&model).unwrap();
        let r = verify_model(&model, &traj, spec.duration(), &FdConfig::default(), &Default::default()).unwrap();
        assert!(r.pass(), "{}", r.to_csv());
        assert_eq!(r.get("u_d1").unwrap().samples, 10);
    }

    #[test]
    fn planar_p2p_passes() {
        let model = fixtures::planar();
        let spec = TrajectorySpec::default_p2p(model.dof());
        let traj = spec.build(&model).unwrap();
        let r = verify_model(&model, &traj, spec.duration(), &FdConfig::default(), &Default::default()).unwrap();
        assert!(r.pass(), "{}", r.to_csv());
    }

    #[test]
    fn flipped_third_jacobian_derivative_is_flagged_alone() {
        let model = fixtures::gsp();
        let spec = TrajectorySpec::default_roll();
        let traj = spec.build(&model).unwrap();
        let opts = VerifyOptions {
            fault: Some(Fault::FlipJacobianThirdDerivative),
            ..Default::default()
        };
        let r = verify_model(&model, &traj, spec.duration(), &FdConfig::default(), &opts).unwrap();
        let failed: Vec<_> = r.failures().map(|c| c.name.as_str()).collect();
        assert_eq!(failed, ["jacobian_d3"]);
    }

    #[test]
    fn sample_times_avoid_breakpoints() {
        let t = sample_times(1.0, 10, &[0.25, 0.75], 0.01);
        assert_eq!(t.len(), 10);
        assert!(t.iter().all(|t| (t - 0.25).abs() >= 0.01 - 1e-15 && (t - 0.75).abs() >= 0.01 - 1e-15));
        assert!((t[0] - 0.05).abs() < 1e-15);
    }
}
