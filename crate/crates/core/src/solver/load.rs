//! Strain-controlled triangular-wave load programs.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadProgram {
    /// Peak axial strain.
    #[serde(default = "default_eps_max")]
    pub strain_max: f64,
    /// Strain ratio `eps_min / eps_max`.
    #[serde(default)]
    pub strain_ratio: f64,
    /// Strain rate magnitude (1/s).
    #[serde(default = "default_rate")]
    pub strain_rate: f64,
    /// Loading axis (0, 1 or 2).
    #[serde(default = "default_axis")]
    pub axis: usize,
    #[serde(default = "default_cycles")]
    pub max_cycles: usize,
}

fn default_eps_max() -> f64 {
    0.02
}
fn default_rate() -> f64 {
    1e-3
}
fn default_axis() -> usize {
    1
}
fn default_cycles() -> usize {
    10
}

impl Default for LoadProgram {
    fn default() -> Self {
        Self {
            strain_max: default_eps_max(),
            strain_ratio: 0.0,
            strain_rate: default_rate(),
            axis: default_axis(),
            max_cycles: default_cycles(),
        }
    }
}

impl LoadProgram {
    pub fn strain_min(&self) -> f64 {
        self.strain_ratio * self.strain_max
    }

    /// Duration of one cycle (s); zero for a zero-amplitude program.
    pub fn period(&self) -> f64 {
        2.0 * (self.strain_max - self.strain_min()).abs() / self.strain_rate
    }

    /// Time offset into the wave at which the strain is zero and rising.
    fn phase_offset(&self) -> f64 {
        (0.0 - self.strain_min()) / self.strain_rate
    }

    /// Axial strain at time `t`; starts at zero and rises first.
    pub fn strain(&self, t: f64) -> f64 {
        let period = self.period();
        if period == 0.0 {
            return 0.0;
        }
        let tau = (t + self.phase_offset()).rem_euclid(period);
        let half = 0.5 * period;
        if tau <= half {
            self.strain_min() + self.strain_rate * tau
        } else {
            self.strain_max - self.strain_rate * (tau - half)
        }
    }

    /// One-based cycle index containing time `t`; a time exactly at a cycle
    /// end belongs to the cycle it completes.
    pub fn cycle(&self, t: f64) -> usize {
        let period = self.period();
        if period == 0.0 {
            return 1;
        }
        let c = (t / period - 1e-9).floor().max(0.0) as usize;
        c + 1
    }

    /// Times of strain peaks and valleys in `(0, t_end]`, in order.
    pub fn breakpoints(&self, t_end: f64) -> Vec<f64> {
        let period = self.period();
        if period == 0.0 {
            return vec![t_end];
        }
        let half = 0.5 * period;
        // First peak: rising from the start offset to the maximum.
        let first_peak = half - self.phase_offset();
        let mut out = Vec::new();
        let mut t = first_peak;
        while t < t_end - 1e-12 * period {
            if t > 1e-12 * period {
                out.push(t);
            }
            t += half;
        }
        out.push(t_end);
        out
    }

    /// Whether `t` is at a strain maximum.
    pub fn is_peak(&self, t: f64) -> bool {
        let period = self.period();
        if period == 0.0 {
            return false;
        }
        let tau = (t + self.phase_offset()).rem_euclid(period);
        let half = 0.5 * period;
        (tau - half).abs() < 1e-9 * period
    }

    /// Nominal step size for `per_quarter` increments per quarter cycle.
    pub fn nominal_step(&self, per_quarter: usize) -> f64 {
        0.25 * self.period() / per_quarter as f64
    }

    pub fn duration(&self) -> f64 {
        self.period() * self.max_cycles as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_ratio_wave() {
        let p = LoadProgram { strain_max: 0.02, strain_ratio: 0.0, strain_rate: 1e-3, axis: 1, max_cycles: 3 };
        assert_eq!(p.period(), 40.0);
        assert_eq!(p.strain(0.0), 0.0);
        assert!((p.strain(10.0) - 0.01).abs() < 1e-15);
        assert!((p.strain(20.0) - 0.02).abs() < 1e-15);
        assert!((p.strain(30.0) - 0.01).abs() < 1e-15);
        assert!(p.strain(40.0).abs() < 1e-15);
        assert_eq!(p.cycle(39.0), 1);
        assert_eq!(p.cycle(40.0), 1);
        assert_eq!(p.cycle(41.0), 2);
        assert!(p.is_peak(20.0) && p.is_peak(60.0) && !p.is_peak(40.0));
        assert_eq!(p.breakpoints(120.0), vec![20.0, 40.0, 60.0, 80.0, 100.0, 120.0]);
        assert_eq!(p.nominal_step(20), 0.5);
    }

    #[test]
    fn reversed_wave() {
        let p = LoadProgram { strain_max: 0.01, strain_ratio: -1.0, strain_rate: 1e-3, axis: 0, max_cycles: 1 };
        assert_eq!(p.period(), 40.0);
        assert!(p.strain(0.0).abs() < 1e-15);
        assert!((p.strain(10.0) - 0.01).abs() < 1e-15);
        assert!((p.strain(30.0) + 0.01).abs() < 1e-15);
        assert!(p.strain(40.0).abs() < 1e-15);
        assert_eq!(p.breakpoints(40.0), vec![10.0, 30.0, 40.0]);
    }

    #[test]
    fn zero_amplitude_is_identity() {
        let p = LoadProgram { strain_max: 0.0, ..LoadProgram::default() };
        assert_eq!(p.period(), 0.0);
        assert_eq!(p.strain(5.0), 0.0);
    }
}
