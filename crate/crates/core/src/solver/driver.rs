//! Time stepping over a load program with adaptive step cutting.

use log::{debug, info, warn};

use super::load::LoadProgram;
use super::mechanics::ControlMask;
use super::stagger::{Coupling, SolutionState, StaggerReport};
use super::SolverError;
use crate::tensor::Mat3;

/// One committed increment.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementRecord {
    pub index: usize,
    pub time: f64,
    pub dt: f64,
    pub cycle: usize,
    /// Prescribed axial strain `F_aa - 1`.
    pub strain: f64,
    /// Mean axial first Piola-Kirchhoff stress (MPa).
    pub stress: f64,
    /// True when the increment ends at a strain maximum.
    pub at_peak: bool,
    /// True when the increment ends at a strain minimum or the program end.
    pub at_valley: bool,
    pub report: StaggerReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// All requested cycles were run.
    CycleLimit,
    /// Peak stress dropped below the unstable-crack fraction of its maximum.
    UnstableCrack { cycle: usize },
    /// The observer asked to stop.
    Observer,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub stop: StopReason,
    pub increments: usize,
    pub final_state: SolutionState,
}

impl RunOutcome {
    pub fn failure_cycle(&self) -> Option<usize> {
        match self.stop {
            StopReason::UnstableCrack { cycle } => Some(cycle),
            _ => None,
        }
    }
}

/// Peak stress fraction below which the crack is considered unstable.
pub const UNSTABLE_FRACTION: f64 = 0.1;

pub struct Simulation<'a> {
    pub coupling: Coupling<'a>,
    pub program: LoadProgram,
    pub control: ControlMask,
}

impl<'a> Simulation<'a> {
    fn target(&self, strain: f64) -> Mat3 {
        let mut f = Mat3::identity();
        let a = self.program.axis;
        f[(a, a)] += strain;
        f
    }

    /// Marches the program from `initial`. The observer sees every committed
    /// increment and may return `false` to stop.
    pub fn run<O>(&self, initial: SolutionState, mut observer: O) -> Result<RunOutcome, SolverError>
    where
        O: FnMut(&IncrementRecord, &SolutionState) -> bool,
    {
        let cfg = self.coupling.mech.config;
        let program = &self.program;
        // A zero-amplitude program still advances through its cycles, in
        // unit-length periods.
        let zero_amplitude = program.period() == 0.0;
        let period = if zero_amplitude { 1.0 } else { program.period() };
        let duration = period * program.max_cycles as f64;
        let breakpoints: Vec<f64> = if zero_amplitude {
            (1..=2 * program.max_cycles).map(|k| 0.5 * k as f64).collect()
        } else {
            program.breakpoints(duration)
        };
        let nominal = 0.25 * period / cfg.increments_per_quarter as f64;
        let min_dt = nominal * cfg.min_step_fraction;
        let axis_c = 4 * program.axis;

        let mut state = initial;
        let mut t = 0.0;
        let mut dt = nominal;
        let mut clean = 0usize;
        let mut bp = 0usize;
        let mut index = 0usize;
        let mut peak_max: f64 = 0.0;
        let eps = 1e-9 * nominal;

        while bp < breakpoints.len() {
            let next = breakpoints[bp];
            let mut step = dt.min(next - t);
            if next - (t + step) < eps {
                step = next - t;
            }
            let t_new = t + step;
            let strain = program.strain(t_new);
            match self.coupling.increment(&state, &self.target(strain), step, &self.control) {
                Ok(result) => {
                    state = result.state;
                    t = t_new;
                    index += 1;
                    let reached = (next - t).abs() < eps;
                    if reached {
                        t = next;
                        bp += 1;
                    }
                    clean += 1;
                    if dt < nominal && clean >= cfg.redouble_after {
                        dt = (2.0 * dt).min(nominal);
                        clean = 0;
                    }
                    let at_peak = reached && !zero_amplitude && program.is_peak(t);
                    let cycle = if zero_amplitude { ((t - 1e-9).max(0.0)).floor() as usize + 1 } else { program.cycle(t) };
                    let record = IncrementRecord {
                        index,
                        time: t,
                        dt: step,
                        cycle,
                        strain,
                        stress: state.p_bar[(axis_c / 3, axis_c % 3)],
                        at_peak,
                        at_valley: reached && !at_peak,
                        report: result.report,
                    };
                    debug!(
                        "increment {index} t={t:.4} strain={strain:.5} stress={:.3} passes={} newton={} krylov={}",
                        record.stress, record.report.passes, record.report.newton_iterations, record.report.krylov_iterations
                    );
                    let keep_going = observer(&record, &state);
                    if !keep_going {
                        return Ok(RunOutcome { stop: StopReason::Observer, increments: index, final_state: state });
                    }
                    if at_peak {
                        let s = record.stress.abs();
                        peak_max = peak_max.max(s);
                        info!("cycle {cycle} peak stress {s:.3} MPa (max {peak_max:.3})");
                        if peak_max > 0.0 && s < UNSTABLE_FRACTION * peak_max {
                            return Ok(RunOutcome {
                                stop: StopReason::UnstableCrack { cycle },
                                increments: index,
                                final_state: state,
                            });
                        }
                    }
                }
                Err(e) => {
                    clean = 0;
                    dt = 0.5 * step;
                    warn!("increment at t={t_new:.4} failed ({e}); cutting step to {dt:.3e}");
                    if dt < min_dt {
                        return Err(SolverError::MinimumStep { dt, time: t, cause: Box::new(e) });
                    }
                }
            }
        }
        Ok(RunOutcome { stop: StopReason::CycleLimit, increments: index, final_state: state })
    }
}
