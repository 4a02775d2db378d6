//! Explicit time-step limits: acoustic CFL, cell-volume variation rate, and
//! the particle-search bound, combined with a growth cap.

use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};
use crate::geom::Vec2;
use crate::mesh::Mesh;
use crate::particles::Particle;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DtCoefficients {
    pub c_e: f64,
    pub c_v: f64,
    pub c_p: f64,
    pub growth: f64,
    /// Optional hard cap, mostly for convergence studies.
    pub max: Option<f64>,
}

impl Default for DtCoefficients {
    fn default() -> Self {
        DtCoefficients { c_e: 0.3, c_v: 0.1, c_p: 0.5, growth: 1.01, max: None }
    }
}

impl DtCoefficients {
    pub fn validate(&self) -> SimResult<()> {
        if !(self.c_e > 0.0 && self.c_e < 1.0) {
            return Err(SimError::validation("dt.c_e", "must lie in (0, 1)"));
        }
        for (key, v) in [("dt.c_v", self.c_v), ("dt.c_p", self.c_p), ("dt.growth", self.growth)] {
            if !(v > 0.0) {
                return Err(SimError::validation(key, "must be positive"));
            }
        }
        if let Some(m) = self.max {
            if !(m > 0.0) {
                return Err(SimError::validation("dt.max", "must be positive"));
            }
        }
        Ok(())
    }
}

/// Safety factor applied to the very first step, where no previous step
/// exists to cap growth against.
pub const FIRST_STEP_SAFETY: f64 = 0.1;

/// Acoustic limit: c_e * min over cells of lambda / (|v| + c).
pub fn dt_acoustic(cells: impl Iterator<Item = (f64, f64, f64)>, c_e: f64) -> f64 {
    let mut dt = f64::INFINITY;
    for (lambda, speed, sound) in cells {
        dt = dt.min(lambda / (speed + sound));
    }
    c_e * dt
}

/// Volume-variation limit: c_v * min over cells of |A| / |A'|, with the
/// trapezoidal edge sum A' = 1/2 sum_f L_f (u*_q + u*_q+) . N_f. Motions
/// that do not change the volume contribute no constraint.
pub fn dt_volume(mesh: &Mesh, u_star: &[Vec2], c_v: f64) -> f64 {
    let mut dt = f64::INFINITY;
    for cell in &mesh.cells {
        let mut rate = 0.0;
        for (i, &k) in cell.edges.iter().enumerate() {
            let e = &mesh.edges[k];
            let q0 = cell.verts[i];
            let q1 = cell.verts[(i + 1) % cell.verts.len()];
            // Outward normal for this cell.
            let n = if e.verts == [q0, q1] { e.normal } else { -e.normal };
            rate += 0.5 * e.length * (u_star[q0] + u_star[q1]).dot(n);
        }
        let rate = rate.abs();
        if rate > 1e-300 {
            dt = dt.min(cell.volume / rate);
        }
    }
    c_v * dt
}

/// Particle-search limit: c_p * min over particles of the smallest length
/// scale among the host cell and its neighbors, divided by the particle
/// speed. Static particles contribute no constraint.
pub fn dt_particle(particles: &[Particle], mesh: &Mesh, c_p: f64) -> f64 {
    let mut dt = f64::INFINITY;
    for p in particles {
        let speed = p.vel.norm();
        if speed == 0.0 {
            continue;
        }
        let mut lambda = mesh.cells[p.host].inradius;
        for &d in &mesh.neighbors_of_cell[p.host] {
            lambda = lambda.min(mesh.cells[d].inradius);
        }
        dt = dt.min(lambda / speed);
    }
    c_p * dt
}

/// One step's chosen dt together with the limits it was derived from, kept
/// for auditing the time-step law.
#[derive(Debug, Clone, Copy)]
pub struct DtChoice {
    pub dt: f64,
    pub dt_acoustic: f64,
    pub dt_volume: f64,
    pub dt_particle: f64,
    pub growth_capped: bool,
    pub clipped_to_end: bool,
}

/// min(dt_e, dt_v, dt_p, growth * previous), with a conservative first step
/// and an exact landing on the end time.
pub fn combine(
    dt_e: f64,
    dt_v: f64,
    dt_p: f64,
    prev: Option<f64>,
    coeffs: &DtCoefficients,
    time_remaining: f64,
) -> DtChoice {
    let mut dt = dt_e.min(dt_v).min(dt_p);
    if let Some(m) = coeffs.max {
        dt = dt.min(m);
    }
    let mut growth_capped = false;
    match prev {
        Some(prev) => {
            let cap = coeffs.growth * prev;
            if cap < dt {
                dt = cap;
                growth_capped = true;
            }
        }
        None => dt *= FIRST_STEP_SAFETY,
    }
    let mut clipped_to_end = false;
    if dt >= time_remaining {
        dt = time_remaining;
        clipped_to_end = true;
    }
    DtChoice { dt, dt_acoustic: dt_e, dt_volume: dt_v, dt_particle: dt_p, growth_capped, clipped_to_end }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::mesh::generate_rect;
    use approx::assert_relative_eq;

    #[test]
    fn acoustic_limit_values() {
        let dt = dt_acoustic([(0.01, 0.0, 340.0)].into_iter(), 0.3);
        assert_relative_eq!(dt, 8.823529411764707e-6, max_relative = 1e-12);
        // min rules
        let dt = dt_acoustic([(0.01, 0.0, 340.0), (0.001, 0.0, 340.0)].into_iter(), 0.3);
        assert_relative_eq!(dt, 8.823529411764707e-7, max_relative = 1e-12);
        // |v| = 5 with c = 5 on lambda = 1
        let dt = dt_acoustic([(1.0, 5.0, 5.0)].into_iter(), 0.3);
        assert_relative_eq!(dt, 0.03, max_relative = 1e-14);
    }

    #[test]
    fn volume_limit_zero_motion_is_unconstrained() {
        let m = generate_rect(4, 4, [0.0, 1.0, 0.0, 1.0], 0.2, 3).unwrap();
        let u = vec![Vec2::default(); m.vertices.len()];
        assert_eq!(dt_volume(&m, &u, 0.1), f64::INFINITY);
    }

    #[test]
    fn volume_limit_rigid_translation_is_unconstrained() {
        let m = generate_rect(5, 3, [0.0, 1.0, 0.0, 1.0], 0.15, 9).unwrap();
        let u = vec![Vec2::new(3.0, -2.0); m.vertices.len()];
        // The closed-polygon sum vanishes up to rounding.
        assert!(dt_volume(&m, &u, 0.1) > 1e6);
    }

    #[test]
    fn volume_limit_radial_expansion() {
        // Unit square centered at the origin expanding with u* = x: the
        // trapezoidal rate is 2|A|, so dt = c_v / 2.
        let positions = vec![
            Vec2::new(-0.5, -0.5),
            Vec2::new(0.5, -0.5),
            Vec2::new(0.5, 0.5),
            Vec2::new(-0.5, 0.5),
        ];
        let m = crate::mesh::Mesh::build(positions.clone(), vec![vec![0, 1, 2, 3]]).unwrap();
        let u: Vec<Vec2> = positions;
        let dt = dt_volume(&m, &u, 0.1);
        assert_relative_eq!(dt, 0.05, max_relative = 1e-12);
    }

    #[test]
    fn particle_limit() {
        let m = generate_rect(10, 10, [0.0, 1.0, 0.0, 1.0], 0.0, 0).unwrap();
        // No particles: unconstrained.
        assert_eq!(dt_particle(&[], &m, 0.5), f64::INFINITY);
        let mk = |vel: Vec2| Particle {
            id: 0,
            pos: m.cells[55].centroid,
            vel,
            radius: 1e-4,
            mat_density: 1000.0,
            spec_heat: 1.0,
            temp: 300.0,
            host: 55,
        };
        // Static particles: unconstrained.
        assert_eq!(dt_particle(&[mk(Vec2::default())], &m, 0.5), f64::INFINITY);
        // lambda = 0.05 everywhere; |v| = 100 -> dt = 0.5 * 0.05 / 100.
        let dt = dt_particle(&[mk(Vec2::new(100.0, 0.0))], &m, 0.5);
        assert_relative_eq!(dt, 2.5e-4, max_relative = 1e-12);
    }

    #[test]
    fn combine_rules() {
        let coeffs = DtCoefficients::default();
        let c = combine(1.0, 2.0, 3.0, Some(0.5), &coeffs, 100.0);
        assert_relative_eq!(c.dt, 0.505, max_relative = 1e-14);
        assert!(c.growth_capped);

        // Growth cap on a single finite limit.
        let c = combine(1.0, f64::INFINITY, f64::INFINITY, Some(0.9), &coeffs, 100.0);
        assert_relative_eq!(c.dt, 0.909, max_relative = 1e-14);

        // First step: safety factor, no growth cap.
        let c = combine(1.0, 2.0, 3.0, None, &coeffs, 100.0);
        assert_relative_eq!(c.dt, 0.1, max_relative = 1e-14);
        assert!(!c.growth_capped);

        // Exact landing on the end time.
        let c = combine(1.0, 2.0, 3.0, Some(1.0), &coeffs, 0.25);
        assert_relative_eq!(c.dt, 0.25, max_relative = 1e-14);
        assert!(c.clipped_to_end);

        // Optional hard cap.
        let capped = DtCoefficients { max: Some(0.01), ..coeffs };
        let c = combine(1.0, 2.0, 3.0, Some(1.0), &capped, 100.0);
        assert_relative_eq!(c.dt, 0.01, max_relative = 1e-14);
    }

    #[test]
    fn coefficient_validation() {
        assert!(DtCoefficients::default().validate().is_ok());
        assert!(DtCoefficients { c_e: 1.5, ..Default::default() }.validate().is_err());
        assert!(DtCoefficients { c_v: 0.0, ..Default::default() }.validate().is_err());
        assert!(DtCoefficients { max: Some(-1.0), ..Default::default() }.validate().is_err());
    }
}
