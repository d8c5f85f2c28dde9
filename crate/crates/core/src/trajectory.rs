//! Platform trajectories along a fixed screw: the pose is
//! `C_start · exp(ξ s(t))` with a scalar profile `s`, so the task velocity and
//! its derivatives are `P_p ξ` scaled by `s⁽ᵏ⁾`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::limb_kinematics::LimbKinCache;
use crate::liegroup::{exp_twist, Pose, Twist};
use crate::model::{PkmModel, TaskMotion};
use crate::pkm_kinematics::{inverse_kinematics, zero_configuration, KinematicsError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrajectoryError {
    #[error("roll bounds must satisfy theta_min < theta_max (got {min} and {max})")]
    Bounds { min: f64, max: f64 },
    #[error("{what} must be positive and finite (got {value})")]
    NonPositive { what: &'static str, value: f64 },
    #[error("roll axis {axis} is outside the {dof} task components")]
    Axis { axis: usize, dof: usize },
    #[error("{what} has {found} components, the model has {expected} task coordinates")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
}

/// User-facing description of a trajectory, serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// Cosine swing of one task coordinate from `theta_min` to `theta_max`
    /// and back over `period`.
    Roll {
        theta_min: f64,
        theta_max: f64,
        period: f64,
        /// Index of the task component that rotates.
        axis: usize,
    },
    /// Rest-to-rest motion between task coordinates with a sin² jerk.
    PointToPoint {
        start: Vec<f64>,
        end: Vec<f64>,
        duration: f64,
    },
}

impl TrajectorySpec {
    pub fn default_roll() -> Self {
        TrajectorySpec::Roll {
            theta_min: -0.5,
            theta_max: 0.5,
            period: 1.0,
            axis: 0,
        }
    }

    /// A short translation along the last task coordinate.
    pub fn default_p2p(dof: usize) -> Self {
        let mut end = vec![0.0; dof];
        if let Some(e) = end.last_mut() {
            *e = 0.02;
        }
        TrajectorySpec::PointToPoint {
            start: vec![0.0; dof],
            end,
            duration: 1.0,
        }
    }

    pub fn duration(&self) -> f64 {
        match self {
            TrajectorySpec::Roll { period, .. } => *period,
            TrajectorySpec::PointToPoint { duration, .. } => *duration,
        }
    }

    pub fn validate(&self, dof: usize) -> Result<(), TrajectoryError> {
        let positive = |what, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(TrajectoryError::NonPositive { what, value })
            }
        };
        match self {
            TrajectorySpec::Roll {
                theta_min,
                theta_max,
                period,
                axis,
            } => {
                if !(theta_min < theta_max) || !theta_min.is_finite() || !theta_max.is_finite() {
                    return Err(TrajectoryError::Bounds {
                        min: *theta_min,
                        max: *theta_max,
                    });
                }
                positive("period", *period)?;
                if *axis >= dof {
                    return Err(TrajectoryError::Axis { axis: *axis, dof });
                }
            }
            TrajectorySpec::PointToPoint {
                start,
                end,
                duration,
            } => {
                positive("duration", *duration)?;
                for (what, v) in [("start", start), ("end", end)] {
                    if v.len() != dof {
                        return Err(TrajectoryError::Dimension {
                            what,
                            expected: dof,
                            found: v.len(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Concrete trajectory starting from the model's home platform pose.
    pub fn build(&self, model: &PkmModel) -> Result<ScrewTrajectory, TrajectoryError> {
        let dof = model.dof();
        self.validate(dof)?;
        let home = home_platform_pose(model);
        Ok(match self {
            TrajectorySpec::Roll {
                theta_min,
                theta_max,
                period,
                axis,
            } => {
                let mut direction = DVector::zeros(dof);
                direction[*axis] = 1.0;
                ScrewTrajectory::new(
                    model,
                    home,
                    direction,
                    Profile::Roll(RollProfile::new(*theta_min, *theta_max, *period)),
                )
            }
            TrajectorySpec::PointToPoint {
                start,
                end,
                duration,
            } => {
                let start = DVector::from_column_slice(start);
                let delta = DVector::from_column_slice(end) - &start;
                let from = home * exp_twist(&model.platform_twist(&start));
                ScrewTrajectory::new(
                    model,
                    from,
                    delta,
                    Profile::SinSquaredJerk(SinSquaredJerk::new(1.0, *duration)),
                )
            }
        })
    }
}

/// Platform pose of the zero joint configuration.
pub fn home_platform_pose(model: &PkmModel) -> Pose {
    let theta = zero_configuration(model);
    let last = model.limbs.len() - 1;
    *LimbKinCache::new(&model.limbs[last], &theta[last]).platform_pose()
}

/// `θ(t) = −A cos ωt + A + θ_min` with `A = (θ_max − θ_min)/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RollProfile {
    pub theta_min: f64,
    pub amplitude: f64,
    pub omega: f64,
}

impl RollProfile {
    pub fn new(theta_min: f64, theta_max: f64, period: f64) -> Self {
        Self {
            theta_min,
            amplitude: 0.5 * (theta_max - theta_min),
            omega: 2.0 * PI / period,
        }
    }

    /// `θ⁽ᵏ⁾(t)`, `k = 0..=4`.
    pub fn eval(&self, t: f64) -> [f64; 5] {
        let mut out = [0.0; 5];
        for (k, o) in out.iter_mut().enumerate() {
            let arg = self.omega * t + k as f64 * FRAC_PI_2;
            *o = -self.amplitude * self.omega.powi(k as i32) * arg.cos();
        }
        out[0] += self.amplitude + self.theta_min;
        out
    }
}

/// Rest-to-rest profile from 0 to `distance` whose jerk is
/// `±J sin²(πτ/h)` over four phases of length `h = duration/4`, with signs
/// `+ − − +`. Velocity peaks at `2·distance/duration` at mid-time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinSquaredJerk {
    pub distance: f64,
    pub duration: f64,
}

const PHASE_SIGNS: [f64; 4] = [1.0, -1.0, -1.0, 1.0];

impl SinSquaredJerk {
    pub fn new(distance: f64, duration: f64) -> Self {
        Self { distance, duration }
    }

    fn phase_len(&self) -> f64 {
        0.25 * self.duration
    }

    pub fn peak_jerk(&self) -> f64 {
        self.distance / self.phase_len().powi(3)
    }

    pub fn peak_velocity(&self) -> f64 {
        2.0 * self.distance / self.duration
    }

    /// Derivatives `0..=4` of a unit-sign phase started from rest, at local
    /// time `tau`.
    fn phase(&self, tau: f64) -> [f64; 5] {
        let h = self.phase_len();
        let half = 0.5 * self.peak_jerk();
        let w = 2.0 * PI / h;
        let c = 1.0 / w;
        let (s, co) = (w * tau).sin_cos();
        [
            half * (tau.powi(3) / 6.0 + c * c * (c * s - tau)),
            half * (tau * tau / 2.0 + c * c * (co - 1.0)),
            half * (tau - c * s),
            half * (1.0 - co),
            half * w * s,
        ]
    }

    /// `s⁽ᵏ⁾(t)`, `k = 0..=4`; constant outside `[0, duration]`.
    pub fn eval(&self, t: f64) -> [f64; 5] {
        if t <= 0.0 {
            return [0.0; 5];
        }
        if t >= self.duration {
            return [self.distance, 0.0, 0.0, 0.0, 0.0];
        }
        let h = self.phase_len();
        let idx = ((t / h) as usize).min(3);
        // state at the start of the phase: position, velocity, acceleration
        let mut state = [0.0; 3];
        let end = self.phase(h);
        for &sign in &PHASE_SIGNS[..idx] {
            let [p0, v0, a0] = state;
            state = [
                p0 + v0 * h + 0.5 * a0 * h * h + sign * end[0],
                v0 + a0 * h + sign * end[1],
                a0 + sign * end[2],
            ];
        }
        let tau = t - idx as f64 * h;
        let sign = PHASE_SIGNS[idx];
        let local = self.phase(tau);
        let [p0, v0, a0] = state;
        [
            p0 + v0 * tau + 0.5 * a0 * tau * tau + sign * local[0],
            v0 + a0 * tau + sign * local[1],
            a0 + sign * local[2],
            sign * local[3],
            sign * local[4],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Roll(RollProfile),
    SinSquaredJerk(SinSquaredJerk),
    /// `amplitude · sin(ωt + phase)`.
    Sine {
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
}

impl Profile {
    /// Times where some derivative up to the fifth is discontinuous.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Profile::SinSquaredJerk(p) => (0..=4).map(|i| i as f64 * p.phase_len()).collect(),
            _ => Vec::new(),
        }
    }

    pub fn eval(&self, t: f64) -> [f64; 5] {
        match self {
            Profile::Roll(r) => r.eval(t),
            Profile::SinSquaredJerk(p) => p.eval(t),
            Profile::Sine {
                amplitude,
                omega,
                phase,
            } => {
                let mut out = [0.0; 5];
                for (k, o) in out.iter_mut().enumerate() {
                    let arg = omega * t + phase + k as f64 * FRAC_PI_2;
                    *o = amplitude * omega.powi(k as i32) * arg.sin();
                }
                out
            }
        }
    }
}

/// Pose and task motion at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub pose: Pose,
    pub task: TaskMotion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScrewTrajectory {
    pub start: Pose,
    /// Task-space direction `ξ_t`; the platform twist per unit `s` is `P_pᵀξ_t`.
    pub direction: DVector<f64>,
    platform_twist: Twist,
    pub profile: Profile,
}

impl ScrewTrajectory {
    pub fn new(model: &PkmModel, start: Pose, direction: DVector<f64>, profile: Profile) -> Self {
        let platform_twist = model.platform_twist(&direction);
        Self {
            start,
            direction,
            platform_twist,
            profile,
        }
    }

    pub fn sample(&self, t: f64) -> TrajectorySample {
        let s = self.profile.eval(t);
        TrajectorySample {
            t,
            pose: self.start * exp_twist(&(self.platform_twist * s[0])),
            task: TaskMotion {
                vel: &self.direction * s[1],
                acc: &self.direction * s[2],
                jerk: &self.direction * s[3],
                snap: &self.direction * s[4],
            },
        }
    }
}

/// Joint coordinates along a trajectory, each IK seeded by the previous
/// solution.
#[derive(Debug, Clone)]
pub struct IkTracker<'a> {
    model: &'a PkmModel,
    seed: Vec<DVector<f64>>,
    parallel: bool,
}

impl<'a> IkTracker<'a> {
    pub fn new(model: &'a PkmModel, parallel: bool) -> Self {
        Self {
            model,
            seed: zero_configuration(model),
            parallel,
        }
    }

    pub fn with_seed(model: &'a PkmModel, seed: Vec<DVector<f64>>, parallel: bool) -> Self {
        Self {
            model,
            seed,
            parallel,
        }
    }

    pub fn solve(&mut self, pose: &Pose) -> Result<&[DVector<f64>], KinematicsError> {
        self.seed = inverse_kinematics(self.model, pose, &self.seed, self.parallel)?;
        Ok(&self.seed)
    }

    pub fn current(&self) -> &[DVector<f64>] {
        &self.seed
    }
}
