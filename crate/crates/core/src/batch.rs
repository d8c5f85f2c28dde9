//! Sampling a trajectory into actuator rows, batch evaluation of many
//! states, and call timing.

use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;

use crate::flatness::{sea_feedforward_from, FlatnessError};
use crate::invdyn::{second_order_invdyn, InvDynError, InvDynOptions, InvDynResult};
use crate::model::{PkmModel, TaskMotion};
use crate::par;
use crate::pkm_kinematics::KinematicsError;
use crate::trajectory::{IkTracker, ScrewTrajectory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("sample rate must be positive and finite (got {0})")]
    Rate(f64),
    #[error("time window [{start}, {end}] is empty or not finite")]
    Window { start: f64, end: f64 },
    #[error("inverse kinematics failed at t = {t}: {source}")]
    Ik {
        t: f64,
        #[source]
        source: KinematicsError,
    },
    #[error("inverse dynamics failed at t = {t}: {source}")]
    InvDyn {
        t: f64,
        #[source]
        source: InvDynError,
    },
    #[error("feedforward failed at t = {t}: {source}")]
    Flatness {
        t: f64,
        #[source]
        source: FlatnessError,
    },
}

/// Actuator quantities at one sample time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    /// `θ_a` and its derivatives up to fourth order.
    pub theta_a: [DVector<f64>; 5],
    pub u: DVector<f64>,
    pub u_dot: DVector<f64>,
    pub u_ddot: DVector<f64>,
    pub tau: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub t_start: f64,
    pub t_end: f64,
    /// Samples per second; rows fall on `t_start + i/rate`.
    pub rate: f64,
    pub invdyn: InvDynOptions,
    /// Evaluate the dynamics of different samples on the rayon pool.
    pub parallel: bool,
}

impl RunOptions {
    pub fn new(t_start: f64, t_end: f64, rate: f64) -> Self {
        Self {
            t_start,
            t_end,
            rate,
            invdyn: InvDynOptions::default(),
            parallel: par::PARALLEL_AVAILABLE,
        }
    }

    pub fn times(&self) -> Result<Vec<f64>, RunError> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(RunError::Rate(self.rate));
        }
        let span = self.t_end - self.t_start;
        if !(span >= 0.0 && span.is_finite()) {
            return Err(RunError::Window {
                start: self.t_start,
                end: self.t_end,
            });
        }
        // tolerate span·rate landing a hair under an integer
        let n = (span * self.rate + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.t_start + i as f64 / self.rate).collect())
    }
}

/// One row per sample. IK runs in time order, each solve seeded by the
/// previous one; the dynamics of the samples are then independent.
pub fn run_trajectory(
    model: &PkmModel,
    traj: &ScrewTrajectory,
    opts: &RunOptions,
) -> Result<Vec<TrajectoryRow>, RunError> {
    let times = opts.times()?;
    let mut tracker = IkTracker::new(model, false);
    let mut samples = Vec::with_capacity(times.len());
    for &t in &times {
        let s = traj.sample(t);
        let theta = tracker
            .solve(&s.pose)
            .map_err(|source| RunError::Ik { t, source })?
            .to_vec();
        samples.push((theta, s.task));
    }
    par::try_map_indexed(times.len(), opts.parallel, |i| {
        let t = times[i];
        let (theta, task) = &samples[i];
        let r = second_order_invdyn(model, theta, task, &opts.invdyn)
            .map_err(|source| RunError::InvDyn { t, source })?;
        let ff = sea_feedforward_from(model, &r).map_err(|source| RunError::Flatness { t, source })?;
        let kin = &r.kinematics;
        Ok(TrajectoryRow {
            t,
            theta_a: std::array::from_fn(|k| kin.actuated(model, k)),
            u: r.u,
            u_dot: r.u_dot,
            u_ddot: r.u_ddot,
            tau: ff.tau,
        })
    })
}

/// Column names of [`write_rows_csv`] for `n` actuators.
pub fn csv_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    let groups = [
        "theta_a", "theta_a_d1", "theta_a_d2", "theta_a_d3", "theta_a_d4", "u", "u_d1", "u_d2", "tau",
    ];
    for g in groups {
        h.extend((0..n).map(|i| format!("{g}_{i}")));
    }
    h
}

/// Rows as CSV with 17 significant digits per value.
pub fn write_rows_csv<W: Write>(rows: &[TrajectoryRow], n_actuators: usize, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(n_actuators))?;
    let fmt = |x: f64| format!("{x:.16e}");
    for r in rows {
        let mut rec = vec![fmt(r.t)];
        let groups = r
            .theta_a
            .iter()
            .chain([&r.u, &r.u_dot, &r.u_ddot, &r.tau]);
        for g in groups {
            rec.extend(g.iter().map(|&x| fmt(x)));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `second_order_invdyn` over many states, sequentially or on the rayon
/// pool. The first failing state in index order is reported.
pub fn evaluate_batch(
    model: &PkmModel,
    states: &[(Vec<DVector<f64>>, TaskMotion)],
    opts: &InvDynOptions,
    parallel: bool,
) -> Result<Vec<InvDynResult>, InvDynError> {
    par::try_map_indexed(states.len(), parallel, |i| {
        second_order_invdyn(model, &states[i].0, &states[i].1, opts)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CallTiming {
    pub calls: usize,
    pub mean_us: f64,
    pub p99_us: f64,
    /// LU factorizations of the kinematics in one call.
    pub factorizations_per_call: usize,
}

/// Wall-clock timing of repeated `second_order_invdyn` calls on one state.
pub fn time_invdyn(
    model: &PkmModel,
    theta: &[DVector<f64>],
    task: &TaskMotion,
    opts: &InvDynOptions,
    calls: usize,
) -> Result<CallTiming, InvDynError> {
    let calls = calls.max(1);
    let first = second_order_invdyn(model, theta, task, opts)?;
    let mut samples = Vec::with_capacity(calls);
    for _ in 0..calls {
        let start = Instant::now();
        let r = second_order_invdyn(model, theta, task, opts)?;
        samples.push(start.elapsed().as_secs_f64() * 1e6);
        std::hint::black_box(r);
    }
    let mean_us = samples.iter().sum::<f64>() / calls as f64;
    samples.sort_by(f64::total_cmp);
    let idx = ((calls as f64 * 0.99).ceil() as usize).clamp(1, calls) - 1;
    Ok(CallTiming {
        calls,
        mean_us,
        p99_us: samples[idx],
        factorizations_per_call: first.kinematics.stats().ik.factorizations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::trajectory::TrajectorySpec;

    fn roll_rows(parallel: bool) -> Vec<TrajectoryRow> {
        let model = fixtures::gsp();
        let traj = TrajectorySpec::default_roll().build(&model).unwrap();
        let opts = RunOptions {
            parallel,
            ..RunOptions::new(0.0, 1.0, 1000.0)
        };
        run_trajectory(&model, &traj, &opts).unwrap()
    }

    #[test]
    fn one_period_at_one_kilohertz_is_periodic() {
        let rows = roll_rows(false);
        assert_eq!(rows.len(), 1001);
        assert!(rows.iter().all(|r| r.u.iter().chain(r.tau.iter()).all(|x| x.is_finite())));
        let (a, b) = (&rows[0], &rows[1000]);
        assert!((&a.u - &b.u).amax() <= 1e-9);
        assert!((&a.tau - &b.tau).amax() <= 1e-9);
    }

    #[test]
    fn parallel_rows_equal_sequential_rows() {
        assert_eq!(roll_rows(false), roll_rows(true));
    }

    #[test]
    fn csv_is_deterministic_and_round_trips() {
        let model = fixtures::planar();
        let traj = TrajectorySpec::default_p2p(model.dof()).build(&model).unwrap();
        let opts = RunOptions::new(0.0, 1.0, 200.0);
        let write = || {
            let rows = run_trajectory(&model, &traj, &opts).unwrap();
            let mut buf = Vec::new();
            write_rows_csv(&rows, model.n_actuators(), &mut buf).unwrap();
            (rows, String::from_utf8(buf).unwrap())
        };
        let (rows, a) = write();
        let (_, b) = write();
        assert_eq!(a, b);
        let mut lines = a.lines();
        let header: Vec<_> = lines.next().unwrap().split(',').collect();
        assert_eq!(header, csv_header(3));
        assert!(header.contains(&"tau_2"));
        let first: Vec<f64> = lines.nth(10).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(first[0], rows[10].t);
        assert_eq!(first[1 + 8 * 3..], *rows[10].tau.as_slice());
    }

    #[test]
    fn window_and_rate_are_validated() {
        assert_eq!(RunOptions::new(0.0, 1.0, 0.0).times(), Err(RunError::Rate(0.0)));
        assert!(matches!(RunOptions::new(1.0, 0.0, 10.0).times(), Err(RunError::Window { .. })));
        assert_eq!(RunOptions::new(0.0, 0.0, 10.0).times().unwrap(), vec![0.0]);
        assert_eq!(RunOptions::new(0.0, 0.3, 10.0).times().unwrap().len(), 4);
    }

    #[test]
    fn batch_modes_agree() {
        let model = fixtures::gsp();
        let traj = TrajectorySpec::default_roll().build(&model).unwrap();
        let mut ik = IkTracker::new(&model, false);
        let states: Vec<_> = (0..8)
            .map(|i| {
                let s = traj.sample(i as f64 / 8.0);
                (ik.solve(&s.pose).unwrap().to_vec(), s.task)
            })
            .collect();
        let opts = InvDynOptions::default();
        let seq = evaluate_batch(&model, &states, &opts, false).unwrap();
        let par = evaluate_batch(&model, &states, &opts, true).unwrap();
        for (a, b) in seq.iter().zip(&par) {
            assert_eq!((&a.u, &a.u_dot, &a.u_ddot), (&b.u, &b.u_dot, &b.u_ddot));
        }
    }

    #[test]
    fn single_call_timing_has_no_division_issue() {
        let model = fixtures::gsp();
        let theta = crate::pkm_kinematics::zero_configuration(&model);
        let t = time_invdyn(&model, &theta, &TaskMotion::zeros(6), &Default::default(), 1).unwrap();
        assert_eq!(t.calls, 1);
        assert!(t.mean_us.is_finite() && t.mean_us == t.p99_us);
        assert_eq!(t.factorizations_per_call, 6);
    }
}
