//! Fluid state vectors, the ideal-gas equation of state, and the frame
//! rotations used by the edge Riemann problem.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

use crate::error::{SimError, SimResult};
use crate::geom::Vec2;

/// Conservative state (rho, rho*u, rho*v, rho*E). Also reused as a generic
/// 4-vector for fluxes, which transform the same way under edge rotations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Conservative {
    pub rho: f64,
    pub mom: Vec2,
    pub erg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub rho: f64,
    pub vel: Vec2,
    pub pres: f64,
}

/// Calorically perfect gas: P = (gamma - 1) rho eps, c_v = c_pg / gamma.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GasModel {
    pub gamma: f64,
    pub mu: f64,
    pub cpg: f64,
}

impl Default for GasModel {
    fn default() -> Self {
        GasModel { gamma: 1.4, mu: 1.8e-5, cpg: 1005.0 }
    }
}

impl Conservative {
    pub fn new(rho: f64, mx: f64, my: f64, erg: f64) -> Self {
        Conservative { rho, mom: Vec2::new(mx, my), erg }
    }

    pub fn is_finite(&self) -> bool {
        self.rho.is_finite() && self.mom.is_finite() && self.erg.is_finite()
    }

    /// Momentum components rotated into the frame of a unit edge normal:
    /// the first component becomes normal, the second tangential.
    pub fn rotate(&self, n: Vec2) -> Conservative {
        Conservative {
            rho: self.rho,
            mom: Vec2::new(n.x * self.mom.x + n.y * self.mom.y, -n.y * self.mom.x + n.x * self.mom.y),
            erg: self.erg,
        }
    }

    /// Inverse of [`rotate`](Self::rotate).
    pub fn rotate_back(&self, n: Vec2) -> Conservative {
        Conservative {
            rho: self.rho,
            mom: Vec2::new(n.x * self.mom.x - n.y * self.mom.y, n.y * self.mom.x + n.x * self.mom.y),
            erg: self.erg,
        }
    }
}

impl Add for Conservative {
    type Output = Conservative;
    fn add(self, o: Conservative) -> Conservative {
        Conservative { rho: self.rho + o.rho, mom: self.mom + o.mom, erg: self.erg + o.erg }
    }
}

impl Sub for Conservative {
    type Output = Conservative;
    fn sub(self, o: Conservative) -> Conservative {
        Conservative { rho: self.rho - o.rho, mom: self.mom - o.mom, erg: self.erg - o.erg }
    }
}

impl Mul<f64> for Conservative {
    type Output = Conservative;
    fn mul(self, s: f64) -> Conservative {
        Conservative { rho: self.rho * s, mom: self.mom * s, erg: self.erg * s }
    }
}

impl Primitive {
    pub fn new(rho: f64, u: f64, v: f64, pres: f64) -> Self {
        Primitive { rho, vel: Vec2::new(u, v), pres }
    }

    pub fn rotate(&self, n: Vec2) -> Primitive {
        Primitive {
            rho: self.rho,
            vel: Vec2::new(n.x * self.vel.x + n.y * self.vel.y, -n.y * self.vel.x + n.x * self.vel.y),
            pres: self.pres,
        }
    }
}

impl GasModel {
    pub fn cv(&self) -> f64 {
        self.cpg / self.gamma
    }

    /// Prandtl number of the gas, 4*gamma / (9*gamma - 5).
    pub fn prandtl(&self) -> f64 {
        4.0 * self.gamma / (9.0 * self.gamma - 5.0)
    }

    /// Specific internal energy eps = E - |v|^2/2.
    pub fn internal_energy(&self, u: &Conservative) -> SimResult<f64> {
        if !(u.rho > 0.0) || !u.is_finite() {
            return Err(SimError::NonPhysicalState {
                detail: format!("rho = {:e} (state {:?})", u.rho, u),
            });
        }
        let v = u.mom / u.rho;
        let eps = u.erg / u.rho - 0.5 * v.norm_sq();
        if !(eps > 0.0) {
            return Err(SimError::NonPhysicalState { detail: format!("internal energy {eps:e} <= 0") });
        }
        Ok(eps)
    }

    pub fn pressure(&self, u: &Conservative) -> SimResult<f64> {
        Ok((self.gamma - 1.0) * u.rho * self.internal_energy(u)?)
    }

    pub fn primitive(&self, u: &Conservative) -> SimResult<Primitive> {
        let pres = self.pressure(u)?;
        Ok(Primitive { rho: u.rho, vel: u.mom / u.rho, pres })
    }

    pub fn conservative(&self, w: &Primitive) -> Conservative {
        let rho_e = w.pres / (self.gamma - 1.0) + 0.5 * w.rho * w.vel.norm_sq();
        Conservative { rho: w.rho, mom: w.vel * w.rho, erg: rho_e }
    }

    pub fn sound_speed(&self, w: &Primitive) -> SimResult<f64> {
        if !(w.pres > 0.0) || !(w.rho > 0.0) {
            return Err(SimError::NonPhysicalState {
                detail: format!("sound speed of P = {:e}, rho = {:e}", w.pres, w.rho),
            });
        }
        Ok((self.gamma * w.pres / w.rho).sqrt())
    }

    /// Gas temperature T = eps / c_v.
    pub fn temperature(&self, w: &Primitive) -> f64 {
        let eps = w.pres / ((self.gamma - 1.0) * w.rho);
        eps / self.cv()
    }
}
