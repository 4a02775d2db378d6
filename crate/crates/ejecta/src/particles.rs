//! Lagrangian particle phase: drag and convective heat-transfer closures,
//! the per-particle two-stage update, and exact bookkeeping of the momentum
//! and energy exchanged with the gas.

use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};
use crate::geom::Vec2;
use crate::state::{GasModel, Primitive};

#[derive(Debug, Clone)]
pub struct Particle {
    pub id: u64,
    pub pos: Vec2,
    pub vel: Vec2,
    pub radius: f64,
    pub mat_density: f64,
    pub spec_heat: f64,
    pub temp: f64,
    pub host: usize,
}

impl Particle {
    pub fn validate(&self) -> SimResult<()> {
        let ok = self.radius > 0.0
            && self.mat_density > 0.0
            && self.spec_heat > 0.0
            && self.temp > 0.0
            && self.pos.is_finite()
            && self.vel.is_finite();
        if ok {
            Ok(())
        } else {
            Err(SimError::validation("particle", format!("particle {} has non-physical fields", self.id)))
        }
    }

    /// Spherical mass, used for both the momentum and the thermal update.
    pub fn mass(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.radius.powi(3) * self.mat_density
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DragModel {
    #[default]
    Stokes,
    Crowe,
}

/// Gas seen by a particle: the cell-average state of its host cell at the
/// start of the step.
#[derive(Debug, Clone, Copy)]
pub struct LocalGas {
    pub prim: Primitive,
    pub temp: f64,
}

/// Slip Reynolds number Re = 2 rho_g r |v_g - v_p| / mu.
pub fn reynolds(gas_prim: &Primitive, gas: &GasModel, p: &Particle) -> SimResult<f64> {
    if !(gas.mu > 0.0) {
        return Err(SimError::ZeroViscosity);
    }
    let slip = (gas_prim.vel - p.vel).norm();
    Ok(2.0 * gas_prim.rho * p.radius * slip / gas.mu)
}

/// Piecewise drag-coefficient law in the slip Reynolds number.
pub fn drag_coefficient(re: f64) -> f64 {
    if re < 0.2 {
        24.0 / re
    } else if re <= 800.0 {
        24.0 / re * (1.0 + 0.15 * re.powf(0.687))
    } else {
        0.5
    }
}

/// Drag force on the particle.
pub fn drag_force(
    model: DragModel,
    gas_prim: &Primitive,
    gas: &GasModel,
    p: &Particle,
) -> SimResult<Vec2> {
    let slip = gas_prim.vel - p.vel;
    match model {
        DragModel::Stokes => Ok(slip * (6.0 * std::f64::consts::PI * p.radius * gas.mu)),
        DragModel::Crowe => {
            let re = reynolds(gas_prim, gas, p)?;
            let area = std::f64::consts::PI * p.radius * p.radius;
            if re < 0.2 {
                // (1/2)(24/Re) K rho |slip| slip cancels algebraically to the
                // Stokes form, which stays finite as Re -> 0.
                Ok(slip * (6.0 * std::f64::consts::PI * p.radius * gas.mu))
            } else {
                let cd = drag_coefficient(re);
                Ok(slip * (0.5 * cd * area * gas_prim.rho * slip.norm()))
            }
        }
    }
}

/// Convective heat flux into the particle:
/// Q = (2 mu / Pr) c_pg pi r (T_g - T_p) Nu, Nu = 2 + 0.6 Pr^(1/3) Re^(1/2).
pub fn heat_flux(gas_prim: &Primitive, gas: &GasModel, gas_temp: f64, p: &Particle) -> SimResult<f64> {
    if gas.mu == 0.0 {
        return Ok(0.0);
    }
    let pr = gas.prandtl();
    let re = reynolds(gas_prim, gas, p)?;
    let nu = 2.0 + 0.6 * pr.cbrt() * re.sqrt();
    Ok(2.0 * gas.mu / pr * gas.cpg * std::f64::consts::PI * p.radius * (gas_temp - p.temp) * nu)
}

/// Result of one particle step: the committed end-of-step state plus the
/// momentum impulse and energy taken from the gas.
#[derive(Debug, Clone, Copy)]
pub struct ParticleKick {
    pub vel: Vec2,
    pub pos: Vec2,
    pub temp: f64,
    pub impulse: Vec2,
    pub energy: f64,
    /// Drag force at the step start, for start-of-step source assembly.
    pub force_start: Vec2,
    /// Heat flux at the step start.
    pub heat_start: f64,
}

/// Two-stage update with the gas frozen at the step start: a forward
/// predictor, then midpoint re-evaluation of the force and heat flux. The
/// position advances with the predictor velocity.
pub fn rk2_update(
    p: &Particle,
    local: &LocalGas,
    gas: &GasModel,
    model: DragModel,
    dt: f64,
) -> SimResult<ParticleKick> {
    let m = p.mass();
    let force_n = drag_force(model, &local.prim, gas, p)?;
    let vel_hat = p.vel + force_n * (dt / m);
    let vel_mid = (p.vel + vel_hat) * 0.5;
    let mid = Particle { vel: vel_mid, ..p.clone() };
    let force_mid = drag_force(model, &local.prim, gas, &mid)?;

    let mc = m * p.spec_heat;
    let q_n = heat_flux(&local.prim, gas, local.temp, p)?;
    let temp_hat = p.temp + dt / mc * q_n;
    let tmid = Particle { temp: 0.5 * (p.temp + temp_hat), ..p.clone() };
    let q_mid = heat_flux(&local.prim, gas, local.temp, &tmid)?;

    Ok(ParticleKick {
        vel: p.vel + force_mid * (dt / m),
        pos: p.pos + vel_hat * dt,
        temp: p.temp + dt / mc * q_mid,
        impulse: force_mid * dt,
        energy: dt * (force_mid.dot(vel_mid) + q_mid),
        force_start: force_n,
        heat_start: q_n,
    })
}

/// Per-cell momentum impulse and energy handed to the particle phase during
/// one step. The fluid receives exactly the negation in
/// conservative-exchange mode.
#[derive(Debug, Clone, Default)]
pub struct ExchangeLedger {
    pub momentum: Vec<Vec2>,
    pub energy: Vec<f64>,
}

impl ExchangeLedger {
    pub fn new(n_cells: usize) -> Self {
        ExchangeLedger { momentum: vec![Vec2::default(); n_cells], energy: vec![0.0; n_cells] }
    }

    pub fn reset(&mut self, n_cells: usize) {
        self.momentum.clear();
        self.momentum.resize(n_cells, Vec2::default());
        self.energy.clear();
        self.energy.resize(n_cells, 0.0);
    }

    pub fn deposit(&mut self, cell: usize, impulse: Vec2, energy: f64) {
        self.momentum[cell] += impulse;
        self.energy[cell] += energy;
    }

    pub fn total_momentum(&self) -> Vec2 {
        self.momentum.iter().fold(Vec2::default(), |a, &b| a + b)
    }

    pub fn total_energy(&self) -> f64 {
        self.energy.iter().sum()
    }

    /// Fluid-side source density for one cell: the negation of the particle
    /// gain, per unit volume and per unit time.
    pub fn fluid_source_density(&self, cell: usize, volume: f64, dt: f64) -> (Vec2, f64) {
        let inv = 1.0 / (volume * dt);
        (-self.momentum[cell] * inv, -self.energy[cell] * inv)
    }
}

/// Particle volume fraction of one cell (unit depth). Warns above 5%, where
/// the dilute-phase assumption starts to break down.
pub fn volume_fraction<'a>(radii: impl Iterator<Item = &'a f64>, cell_volume: f64) -> f64 {
    let vol: f64 = radii.map(|r| 4.0 / 3.0 * std::f64::consts::PI * r.powi(3)).sum();
    let frac = vol / cell_volume;
    if frac > 0.05 {
        log::warn!("particle volume fraction {frac:.3} exceeds the dilute-phase range");
    }
    frac
}

/// Reads the optional particle initialization file: one
/// `x y vx vy r rho_p c_p T` line per particle.
pub fn read_particle_file(text: &str) -> SimResult<Vec<Particle>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| SimError::Parse(format!("particle file line {}", lineno + 1))))
            .collect::<SimResult<_>>()?;
        if vals.len() != 8 {
            return Err(SimError::Parse(format!(
                "particle file line {}: expected 8 fields, got {}",
                lineno + 1,
                vals.len()
            )));
        }
        let p = Particle {
            id: out.len() as u64,
            pos: Vec2::new(vals[0], vals[1]),
            vel: Vec2::new(vals[2], vals[3]),
            radius: vals[4],
            mat_density: vals[5],
            spec_heat: vals[6],
            temp: vals[7],
            host: usize::MAX,
        };
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}
