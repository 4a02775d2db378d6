//! Edge Riemann machinery: Davis wave-speed estimates, the classical HLLC
//! contact speed and star states, the four-region two-sided edge fluxes on a
//! moving mesh, the conservative nodal contact-velocity solver, and boundary
//! ghost states.

use crate::error::{SimError, SimResult};
use crate::geom::Vec2;
use crate::state::{Conservative, GasModel, Primitive};

/// Wave structure of one edge fan in the rotated frame.
#[derive(Debug, Clone, Copy)]
pub struct WaveFan {
    pub s_left: f64,
    pub s_star: f64,
    pub s_right: f64,
    pub p_star_left: f64,
    pub p_star_right: f64,
}

/// The two flux 4-vectors an edge hands to its left and right cells, in the
/// global frame. They differ by the star-pressure jump; the nodal solver
/// makes those jumps cancel around every vertex.
#[derive(Debug, Clone, Copy)]
pub struct EdgeFluxPair {
    pub flux_left_side: Conservative,
    pub flux_right_side: Conservative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeSide {
    Left,
    Right,
}

/// Davis estimates: S_L = min(u_L - c_L, u_R - c_R), S_R = max(u_L + c_L, u_R + c_R).
/// Velocities must already be in the edge-normal frame.
pub fn wave_estimates(left: &Primitive, right: &Primitive, gas: &GasModel) -> SimResult<(f64, f64)> {
    let c_l = gas.sound_speed(left)?;
    let c_r = gas.sound_speed(right)?;
    let s_l = (left.vel.x - c_l).min(right.vel.x - c_r);
    let s_r = (left.vel.x + c_l).max(right.vel.x + c_r);
    Ok((s_l, s_r))
}

/// Classical one-dimensional HLLC contact speed for one edge, plus the
/// acoustic impedances alpha_L = -rho_L (S_L - u_L), alpha_R = rho_R (S_R - u_R).
pub fn edge_contact_speed(
    left: &Primitive,
    right: &Primitive,
    s_l: f64,
    s_r: f64,
) -> SimResult<(f64, f64, f64)> {
    let alpha_l = -left.rho * (s_l - left.vel.x);
    let alpha_r = right.rho * (s_r - right.vel.x);
    let denom = alpha_l + alpha_r;
    if !(denom > 0.0) {
        return Err(SimError::DegenerateFan {
            detail: format!("alpha_L + alpha_R = {denom:e} (expansion into near-vacuum)"),
        });
    }
    let v_star = (left.pres - right.pres + alpha_l * left.vel.x + alpha_r * right.vel.x) / denom;
    Ok((v_star, alpha_l, alpha_r))
}

/// Star-region state on side H of the fan, in the rotated frame.
pub fn star_state(
    u_h: &Conservative,
    w_h: &Primitive,
    s_h: f64,
    s_star: f64,
) -> SimResult<Conservative> {
    let gap = s_h - s_star;
    let scale = s_h.abs().max(s_star.abs()).max(1e-300);
    if gap.abs() <= 1e-14 * scale {
        return Err(SimError::DegenerateFan {
            detail: format!("|S_H - S_*| = {:e} below resolution", gap.abs()),
        });
    }
    let u_n = w_h.vel.x;
    let factor = w_h.rho * (s_h - u_n) / gap;
    let e_h = u_h.erg / u_h.rho;
    let e_star = e_h + (s_star - u_n) * (s_star + w_h.pres / (w_h.rho * (s_h - u_n)));
    Ok(Conservative {
        rho: factor,
        mom: Vec2::new(factor * s_star, factor * w_h.vel.y),
        erg: factor * e_star,
    })
}

/// Everything about one edge Riemann problem that does not depend on the
/// endpoint vertex: rotated states, Davis speeds, impedances, contact speed.
#[derive(Debug, Clone, Copy)]
pub struct EdgeRiemann {
    pub u_l: Conservative,
    pub u_r: Conservative,
    pub w_l: Primitive,
    pub w_r: Primitive,
    pub s_l: f64,
    pub s_r: f64,
    pub alpha_l: f64,
    pub alpha_r: f64,
    pub v_star: f64,
}

impl EdgeRiemann {
    /// `u_c` is the left cell state, `u_d` the right cell (or ghost) state,
    /// both in the global frame; `normal` points left to right.
    pub fn new(u_c: &Conservative, u_d: &Conservative, normal: Vec2, gas: &GasModel) -> SimResult<Self> {
        let u_l = u_c.rotate(normal);
        let u_r = u_d.rotate(normal);
        let w_l = gas.primitive(&u_l)?;
        let w_r = gas.primitive(&u_r)?;
        let (s_l, s_r) = wave_estimates(&w_l, &w_r, gas)?;
        let (v_star, alpha_l, alpha_r) = edge_contact_speed(&w_l, &w_r, s_l, s_r)?;
        Ok(EdgeRiemann { u_l, u_r, w_l, w_r, s_l, s_r, alpha_l, alpha_r, v_star })
    }

    /// Assembles the fan for a given artificial contact speed (u_q* . N at a
    /// vertex, or the edge's own contact speed for the 1-D fan).
    pub fn fan(&self, s_star: f64) -> WaveFan {
        let p_star_left =
            self.w_l.pres + self.w_l.rho * (self.s_l - self.w_l.vel.x) * (s_star - self.w_l.vel.x);
        let p_star_right =
            self.w_r.pres + self.w_r.rho * (self.s_r - self.w_r.vel.x) * (s_star - self.w_r.vel.x);
        WaveFan { s_left: self.s_l, s_star, s_right: self.s_r, p_star_left, p_star_right }
    }
}

fn pressure_term(p: f64, work_speed: f64) -> Conservative {
    Conservative { rho: 0.0, mom: Vec2::new(p, 0.0), erg: p * work_speed }
}

/// Piecewise flux seen from one side of the edge at grid normal speed `w`,
/// in the rotated frame. The left side closes its region tests at the wave
/// speeds from below (w <= S), the right side from above; the asymmetric
/// split keeps the two sides consistent when w coincides with a wave.
pub fn side_flux(
    side: EdgeSide,
    w: f64,
    er: &EdgeRiemann,
    fan: &WaveFan,
) -> SimResult<Conservative> {
    let d_l = pressure_term(er.w_l.pres, er.w_l.vel.x);
    let d_r = pressure_term(er.w_r.pres, er.w_r.vel.x);
    let d_l_star = pressure_term(fan.p_star_left, fan.s_star);
    let d_r_star = pressure_term(fan.p_star_right, fan.s_star);
    let flux = match side {
        EdgeSide::Left => {
            if w <= fan.s_left {
                er.u_l * (er.w_l.vel.x - w) + d_l
            } else if w <= fan.s_star {
                star_state(&er.u_l, &er.w_l, fan.s_left, fan.s_star)? * (fan.s_star - w) + d_l_star
            } else if w <= fan.s_right {
                star_state(&er.u_r, &er.w_r, fan.s_right, fan.s_star)? * (fan.s_star - w) + d_l_star
            } else {
                er.u_r * (er.w_r.vel.x - w) + d_r - d_r_star + d_l_star
            }
        }
        EdgeSide::Right => {
            if w < fan.s_left {
                er.u_l * (er.w_l.vel.x - w) + d_l - d_l_star + d_r_star
            } else if w < fan.s_star {
                star_state(&er.u_l, &er.w_l, fan.s_left, fan.s_star)? * (fan.s_star - w) + d_r_star
            } else if w < fan.s_right {
                star_state(&er.u_r, &er.w_r, fan.s_right, fan.s_star)? * (fan.s_star - w) + d_r_star
            } else {
                er.u_r * (er.w_r.vel.x - w) + d_r
            }
        }
    };
    Ok(flux)
}

/// Four-region flux for one side of an edge given rotated input states; the
/// fan must carry the star pressures matching its `s_star`.
pub fn hllc2d_flux(
    side: EdgeSide,
    w: f64,
    u_l: &Conservative,
    u_r: &Conservative,
    fan: &WaveFan,
    gas: &GasModel,
) -> SimResult<Conservative> {
    let er = EdgeRiemann {
        u_l: *u_l,
        u_r: *u_r,
        w_l: gas.primitive(u_l)?,
        w_r: gas.primitive(u_r)?,
        s_l: fan.s_left,
        s_r: fan.s_right,
        alpha_l: 0.0,
        alpha_r: 0.0,
        v_star: fan.s_star,
    };
    side_flux(side, w, &er, fan)
}

/// Grid speed and artificial contact speed at one endpoint vertex, already
/// projected on the edge normal.
#[derive(Debug, Clone, Copy)]
pub struct VertexSpeeds {
    pub w_n: f64,
    pub s_star: f64,
}

/// Edge flux pair averaged over the two endpoint vertices and rotated back
/// to the global frame.
pub fn edge_flux(
    er: &EdgeRiemann,
    normal: Vec2,
    ends: [VertexSpeeds; 2],
) -> SimResult<EdgeFluxPair> {
    let mut left = Conservative::default();
    let mut right = Conservative::default();
    for vs in ends {
        let fan = er.fan(vs.s_star);
        left = left + side_flux(EdgeSide::Left, vs.w_n, er, &fan)?;
        right = right + side_flux(EdgeSide::Right, vs.w_n, er, &fan)?;
    }
    Ok(EdgeFluxPair {
        flux_left_side: (left * 0.5).rotate_back(normal),
        flux_right_side: (right * 0.5).rotate_back(normal),
    })
}

/// One edge's contribution to the nodal system at a vertex.
#[derive(Debug, Clone, Copy)]
pub struct NodalEdgeTerm {
    pub length: f64,
    pub normal: Vec2,
    /// alpha_L + alpha_R of the edge.
    pub alpha: f64,
    pub v_star: f64,
}

/// Solves sum_k L_k alpha_k (u* . N_k - v*_k) N_k = 0 for the vertex contact
/// velocity. Ill-conditioned systems are regularized; if that fails the
/// length-weighted average of the edge contact velocities is returned.
pub fn nodal_velocity(vertex: usize, terms: &[NodalEdgeTerm]) -> SimResult<Vec2> {
    if terms.is_empty() {
        return Err(SimError::SingularNodalMatrix { vertex });
    }
    let mut m00 = 0.0;
    let mut m01 = 0.0;
    let mut m11 = 0.0;
    let mut r = Vec2::default();
    for t in terms {
        let la = t.length * t.alpha;
        m00 += la * t.normal.x * t.normal.x;
        m01 += la * t.normal.x * t.normal.y;
        m11 += la * t.normal.y * t.normal.y;
        r += t.normal * (la * t.v_star);
    }
    if let Some(u) = solve_spd2(m00, m01, m11, r) {
        return Ok(u);
    }
    // Collinear normals (degenerate boundary corner): regularize.
    let reg = 1e-12 * 0.5 * (m00 + m11);
    if let Some(u) = solve_spd2(m00 + reg, m01, m11 + reg, r) {
        return Ok(u);
    }
    let weight: f64 = terms.iter().map(|t| t.length * t.alpha).sum();
    if weight > 0.0 {
        Ok(r / weight)
    } else {
        Err(SimError::SingularNodalMatrix { vertex })
    }
}

/// Direct solve of the SPD 2x2 system; `None` if the condition number
/// exceeds 1e12.
fn solve_spd2(m00: f64, m01: f64, m11: f64, r: Vec2) -> Option<Vec2> {
    let tr = m00 + m11;
    let det = m00 * m11 - m01 * m01;
    if !(det > 0.0) || !tr.is_finite() {
        return None;
    }
    let gap = (0.25 * (m00 - m11) * (m00 - m11) + m01 * m01).sqrt();
    let lam_min = 0.5 * tr - gap;
    let lam_max = 0.5 * tr + gap;
    if !(lam_min > lam_max / 1e12) {
        return None;
    }
    Some(Vec2::new((m11 * r.x - m01 * r.y) / det, (m00 * r.y - m01 * r.x) / det))
}

/// Residual of the nodal conservation equation for a candidate velocity,
/// used by the solver's self-checks.
pub fn nodal_residual(u_star: Vec2, terms: &[NodalEdgeTerm]) -> Vec2 {
    let mut res = Vec2::default();
    for t in terms {
        res += t.normal * (t.length * t.alpha * (u_star.dot(t.normal) - t.v_star));
    }
    res
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryKind {
    Transmissive,
    Wall,
    Prescribed(Primitive),
}

/// Ghost state outside a boundary edge with outward unit normal `n`.
pub fn ghost_state(interior: &Conservative, n: Vec2, bc: &BoundaryKind, gas: &GasModel) -> Conservative {
    match bc {
        BoundaryKind::Transmissive => *interior,
        BoundaryKind::Wall => {
            let m_n = interior.mom.dot(n);
            Conservative { rho: interior.rho, mom: interior.mom - n * (2.0 * m_n), erg: interior.erg }
        }
        BoundaryKind::Prescribed(far) => gas.conservative(far),
    }
}
