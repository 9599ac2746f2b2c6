//! Physical constants of the model and the mass relations that tie them to the metric.

use crate::error::{Error, Result};
use crate::grid::ConfigSpace;

const REL_TOL: f64 = 1e-12;

/// Constants shared by every engine.
///
/// The energy-functional constants `A`, `B`, the time unit `tau` and the metric
/// weights `sigma_n^2` determine the rest:
/// `m_n = 2A / sigma_n^2`, `mu_n = 2B / sigma_n^2`, `eta = 2A / tau`, so that
/// `sigma_n^2 / tau = eta / m_n` is the single diffusion constant of particle `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    masses: Vec<f64>,
    osmotic_masses: Vec<f64>,
    eta: f64,
    tau: f64,
    a_coeff: f64,
    b_coeff: f64,
    beta: f64,
    kappa: f64,
    particle_dim: usize,
}

impl PhysicalParams {
    /// Derive masses and `eta` from `A`, `B`, `tau` and the metric of `space`.
    pub fn from_energy_constants(
        space: &ConfigSpace,
        a_coeff: f64,
        b_coeff: f64,
        tau: f64,
        beta: f64,
    ) -> Result<Self> {
        positive("A_coeff", a_coeff)?;
        nonnegative("B_coeff", b_coeff)?;
        positive("tau", tau)?;
        finite("beta", beta)?;
        let sigma: Vec<f64> = (0..space.particles())
            .map(|n| space.sigma_sq()[n * space.particle_dim()])
            .collect();
        Ok(Self {
            masses: sigma.iter().map(|s| 2.0 * a_coeff / s).collect(),
            osmotic_masses: sigma.iter().map(|s| 2.0 * b_coeff / s).collect(),
            eta: 2.0 * a_coeff / tau,
            tau,
            a_coeff,
            b_coeff,
            beta,
            kappa: 1.0,
            particle_dim: space.particle_dim(),
        })
    }

    /// Build from per-particle masses, a universal ratio `mu/m` and `eta`.
    ///
    /// The masses must be consistent with the metric: `m_n sigma_n^2` has to be the
    /// same constant `2A` for every particle.
    pub fn from_masses(
        space: &ConfigSpace,
        masses: &[f64],
        mu_over_m: f64,
        eta: f64,
        beta: f64,
    ) -> Result<Self> {
        if masses.len() != space.particles() {
            return Err(Error::InvalidParams {
                field: "masses",
                reason: format!("expected {} masses, got {}", space.particles(), masses.len()),
            });
        }
        for m in masses {
            positive("masses", *m)?;
        }
        nonnegative("mu_over_m", mu_over_m)?;
        positive("eta", eta)?;
        let two_a: Vec<f64> = masses
            .iter()
            .enumerate()
            .map(|(n, m)| m * space.sigma_sq()[n * space.particle_dim()])
            .collect();
        if two_a.iter().any(|v| ((v - two_a[0]) / two_a[0]).abs() > REL_TOL) {
            return Err(Error::InvalidParams {
                field: "masses",
                reason: "m_n * sigma_n^2 must be the same for every particle".into(),
            });
        }
        let a = 0.5 * two_a[0];
        let mut p = Self::from_energy_constants(space, a, mu_over_m * a, 2.0 * a / eta, beta)?;
        // keep the caller's masses bit-for-bit
        p.masses = masses.to_vec();
        p.osmotic_masses = masses.iter().map(|m| mu_over_m * m).collect();
        p.eta = eta;
        Ok(p)
    }

    /// Single particle of mass `m` in a space whose `sigma_sq` is consistent with it.
    pub fn simple(space: &ConfigSpace, mass: f64, mu_over_m: f64, eta: f64) -> Result<Self> {
        let masses = vec![mass; space.particles()];
        Self::from_masses(space, &masses, mu_over_m, eta, 0.0)
    }

    /// Check the exact mass relations against `space`.
    pub fn validate(&self, space: &ConfigSpace) -> Result<()> {
        if self.masses.len() != space.particles() || self.particle_dim != space.particle_dim() {
            return Err(Error::InvalidParams {
                field: "masses",
                reason: "particle layout does not match the configuration space".into(),
            });
        }
        for (n, (m, mu)) in self.masses.iter().zip(&self.osmotic_masses).enumerate() {
            let s = space.sigma_sq()[n * space.particle_dim()];
            if !close(*m, 2.0 * self.a_coeff / s) {
                return Err(Error::InvalidParams {
                    field: "masses",
                    reason: format!("m_{n} != 2A/sigma^2"),
                });
            }
            if !close(*mu, 2.0 * self.b_coeff / s) {
                return Err(Error::InvalidParams {
                    field: "osmotic_masses",
                    reason: format!("mu_{n} != 2B/sigma^2"),
                });
            }
        }
        if !close(self.eta, 2.0 * self.a_coeff / self.tau) {
            return Err(Error::InvalidParams {
                field: "eta",
                reason: "eta != 2A/tau".into(),
            });
        }
        Ok(())
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn osmotic_masses(&self) -> &[f64] {
        &self.osmotic_masses
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn a_coeff(&self) -> f64 {
        self.a_coeff
    }

    pub fn b_coeff(&self) -> f64 {
        self.b_coeff
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn axis_mass(&self, axis: usize) -> f64 {
        self.masses[axis / self.particle_dim]
    }

    pub fn axis_osmotic_mass(&self, axis: usize) -> f64 {
        self.osmotic_masses[axis / self.particle_dim]
    }

    /// `sigma_a^2 / tau = eta / m_a`: step variance per unit time along `axis`.
    pub fn diffusion(&self, axis: usize) -> f64 {
        self.eta / self.axis_mass(axis)
    }

    /// Multiplier `alpha = tau / dt` that makes one kernel step last `dt`.
    pub fn alpha_for_dt(&self, dt: f64) -> f64 {
        self.tau / dt
    }

    /// True when every osmotic mass equals its current mass.
    pub fn is_linear(&self) -> bool {
        self.masses
            .iter()
            .zip(&self.osmotic_masses)
            .all(|(m, mu)| m == mu)
    }

    /// Change `eta` at fixed `A` and masses (the time unit `tau` follows).
    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        positive("eta", eta)?;
        let mut p = self.clone();
        p.eta = eta;
        p.tau = 2.0 * self.a_coeff / eta;
        Ok(p)
    }

    /// Change the universal ratio `mu/m` (through `B`).
    pub fn with_osmotic_ratio(&self, mu_over_m: f64) -> Result<Self> {
        nonnegative("mu_over_m", mu_over_m)?;
        let mut p = self.clone();
        p.b_coeff = mu_over_m * self.a_coeff;
        p.osmotic_masses = self.masses.iter().map(|m| mu_over_m * m).collect();
        Ok(p)
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        finite("beta", beta)?;
        let mut p = self.clone();
        p.beta = beta;
        Ok(p)
    }

    /// Change units by `kappa`: `eta' = eta/kappa`, `tau' = kappa tau`,
    /// `mu' = kappa^2 mu` (through `B' = kappa^2 B`); current masses unchanged.
    pub fn regraduate(&self, kappa: f64) -> Result<Self> {
        positive("kappa", kappa)?;
        let mut p = self.clone();
        p.eta = self.eta / kappa;
        p.tau = self.tau * kappa;
        p.b_coeff = self.b_coeff * kappa * kappa;
        p.osmotic_masses = self.osmotic_masses.iter().map(|mu| mu * kappa * kappa).collect();
        p.kappa = self.kappa * kappa;
        Ok(p)
    }

    /// `kappa = (A/B)^{1/2}`, the factor that makes every osmotic mass equal its current mass.
    pub fn linearizing_kappa(&self) -> Result<f64> {
        if self.b_coeff <= 0.0 {
            return Err(Error::InvalidParams {
                field: "B_coeff",
                reason: "linearizing regraduation needs B > 0".into(),
            });
        }
        Ok((self.a_coeff / self.b_coeff).sqrt())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= REL_TOL * a.abs().max(b.abs())
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams {
            field,
            reason: format!("must be positive, got {v}"),
        })
    }
}

fn nonnegative(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams {
            field,
            reason: format!("must be non-negative, got {v}"),
        })
    }
}

fn finite(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParams {
            field,
            reason: format!("must be finite, got {v}"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Boundary;

    #[test]
    fn mass_relations_hold() {
        let space = ConfigSpace::with_layout(
            vec![1.0, 1.0],
            vec![8, 8],
            vec![0.0, 0.0],
            Boundary::Periodic,
            vec![0.5, 2.0],
            1,
        )
        .unwrap();
        let p = PhysicalParams::from_energy_constants(&space, 1.0, 3.0, 0.25, 0.0).unwrap();
        assert_eq!(p.masses(), &[4.0, 1.0]);
        assert_eq!(p.osmotic_masses(), &[12.0, 3.0]);
        assert_eq!(p.eta(), 8.0);
        for (m, mu) in p.masses().iter().zip(p.osmotic_masses()) {
            assert_eq!(mu / m, 3.0);
        }
        for axis in 0..2 {
            assert!((p.diffusion(axis) - space.sigma_sq()[axis] / p.tau()).abs() < 1e-15);
        }
        p.validate(&space).unwrap();
    }

    #[test]
    fn from_masses_rejects_inconsistent_metric() {
        let space = ConfigSpace::with_layout(
            vec![1.0, 1.0],
            vec![8, 8],
            vec![0.0, 0.0],
            Boundary::Periodic,
            vec![1.0, 1.0],
            1,
        )
        .unwrap();
        assert!(PhysicalParams::from_masses(&space, &[1.0, 2.0], 1.0, 1.0, 0.0).is_err());
        assert!(PhysicalParams::from_masses(&space, &[1.0, -1.0], 1.0, 1.0, 0.0).is_err());
        let p = PhysicalParams::from_masses(&space, &[2.0, 2.0], 1.0, 0.5, 0.0).unwrap();
        p.validate(&space).unwrap();
        assert_eq!(p.tau(), 4.0);
    }

    #[test]
    fn regraduation_with_natural_kappa_equalizes_masses() {
        let space = ConfigSpace::line(1.0, 8, Boundary::Periodic).unwrap();
        let p = PhysicalParams::from_energy_constants(&space, 1.0, 4.0, 1.0, 0.0).unwrap();
        let kappa = p.linearizing_kappa().unwrap();
        assert_eq!(kappa, 0.5);
        let q = p.regraduate(kappa).unwrap();
        assert_eq!(q.osmotic_masses()[0], p.osmotic_masses()[0] / 4.0);
        assert_eq!(q.osmotic_masses()[0], q.masses()[0]);
        assert_eq!(q.masses(), p.masses());
        assert_eq!(q.eta(), 2.0 * p.eta());
        q.validate(&space).unwrap();
        assert_eq!(p.regraduate(1.0).unwrap().osmotic_masses(), p.osmotic_masses());
    }
}
