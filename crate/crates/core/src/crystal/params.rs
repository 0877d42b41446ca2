use serde::{Deserialize, Serialize};

use crate::tensor::{cubic_stiffness, Tensor4};

/// Converts `MPa * mm^3` to joules.
pub const MPA_MM3_TO_J: f64 = 1e-3;

/// Dislocation-based crystal plasticity parameters. Elastic constants in GPa,
/// stresses in MPa, lengths in mm, densities in 1/mm^2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalParams {
    #[serde(default = "defaults::c11")]
    pub c11: f64,
    #[serde(default = "defaults::c12")]
    pub c12: f64,
    #[serde(default = "defaults::c44")]
    pub c44: f64,
    /// Initial critical resolved shear stress.
    #[serde(default = "defaults::tau_c0")]
    pub tau_c0: f64,
    #[serde(default = "defaults::burgers")]
    pub burgers: f64,
    #[serde(default = "defaults::attempt_frequency")]
    pub attempt_frequency: f64,
    #[serde(default = "defaults::boltzmann")]
    pub boltzmann: f64,
    #[serde(default = "defaults::temperature")]
    pub temperature: f64,
    #[serde(default = "defaults::activation_energy")]
    pub activation_energy: f64,
    /// Activation volume in mm^3. Has no default.
    pub activation_volume: f64,
    #[serde(default = "defaults::mobile_density")]
    pub mobile_density: f64,
    #[serde(default = "defaults::hardening")]
    pub hardening: f64,
    /// Shear modulus for Taylor hardening in MPa; `None` uses C44.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shear_modulus: Option<f64>,
    /// Largest admissible sinh argument before a step is rejected.
    #[serde(default = "defaults::sinh_cap")]
    pub sinh_cap: f64,
}

pub(crate) mod defaults {
    pub fn c11() -> f64 {
        250.0
    }
    pub fn c12() -> f64 {
        161.0
    }
    pub fn c44() -> f64 {
        129.0
    }
    pub fn tau_c0() -> f64 {
        350.0
    }
    pub fn burgers() -> f64 {
        3.5e-7
    }
    pub fn attempt_frequency() -> f64 {
        1e11
    }
    pub fn boltzmann() -> f64 {
        1.4e-23
    }
    pub fn temperature() -> f64 {
        295.0
    }
    pub fn activation_energy() -> f64 {
        4.9e-20
    }
    pub fn mobile_density() -> f64 {
        5.0e6
    }
    pub fn hardening() -> f64 {
        150e6
    }
    pub fn sinh_cap() -> f64 {
        50.0
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid crystal parameter `{name}`: {reason}")]
pub struct ParamError {
    pub name: &'static str,
    pub reason: &'static str,
}

impl CrystalParams {
    /// Table values for the nickel superalloy with the given activation volume.
    pub fn with_activation_volume(activation_volume: f64) -> Self {
        Self {
            c11: defaults::c11(),
            c12: defaults::c12(),
            c44: defaults::c44(),
            tau_c0: defaults::tau_c0(),
            burgers: defaults::burgers(),
            attempt_frequency: defaults::attempt_frequency(),
            boltzmann: defaults::boltzmann(),
            temperature: defaults::temperature(),
            activation_energy: defaults::activation_energy(),
            activation_volume,
            mobile_density: defaults::mobile_density(),
            hardening: defaults::hardening(),
            shear_modulus: None,
            sinh_cap: defaults::sinh_cap(),
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let positive = [
            ("c11", self.c11),
            ("c12", self.c12),
            ("c44", self.c44),
            ("tau_c0", self.tau_c0),
            ("burgers", self.burgers),
            ("attempt_frequency", self.attempt_frequency),
            ("boltzmann", self.boltzmann),
            ("temperature", self.temperature),
            ("activation_energy", self.activation_energy),
            ("activation_volume", self.activation_volume),
            ("mobile_density", self.mobile_density),
            ("hardening", self.hardening),
            ("sinh_cap", self.sinh_cap),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ParamError { name, reason: "must be positive and finite" });
            }
        }
        if let Some(mu) = self.shear_modulus {
            if !(mu > 0.0) {
                return Err(ParamError { name: "shear_modulus", reason: "must be positive" });
            }
        }
        if self.c11 <= self.c12 || self.c11 + 2.0 * self.c12 <= 0.0 {
            return Err(ParamError { name: "c11", reason: "cubic stability requires C11 > C12 and C11 + 2 C12 > 0" });
        }
        Ok(())
    }

    pub fn thermal_energy(&self) -> f64 {
        self.boltzmann * self.temperature
    }

    /// `rho_m b^2 v_D exp(-dF / kT)` in 1/s.
    pub fn rate_prefactor(&self) -> f64 {
        self.mobile_density
            * self.burgers
            * self.burgers
            * self.attempt_frequency
            * (-self.activation_energy / self.thermal_energy()).exp()
    }

    /// `dV / kT` in 1/MPa.
    pub fn stress_sensitivity(&self) -> f64 {
        self.activation_volume * MPA_MM3_TO_J / self.thermal_energy()
    }

    /// Taylor hardening modulus in MPa.
    pub fn taylor_modulus(&self) -> f64 {
        self.shear_modulus.unwrap_or(self.c44 * 1e3)
    }

    /// Crystal-frame cubic stiffness in MPa.
    pub fn stiffness(&self) -> Tensor4 {
        cubic_stiffness(self.c11 * 1e3, self.c12 * 1e3, self.c44 * 1e3)
    }

    /// Voigt-averaged isotropic Lame constants (MPa).
    pub fn voigt_lame(&self) -> (f64, f64) {
        let (c11, c12, c44) = (self.c11 * 1e3, self.c12 * 1e3, self.c44 * 1e3);
        let mu = (c11 - c12 + 3.0 * c44) / 5.0;
        let lambda = (c11 + 4.0 * c12 - 2.0 * c44) / 5.0;
        (lambda, mu)
    }
}
