//! One full time step and the run loop: nodal contact solve, time-step
//! limits, mesh motion, the two-stage fluid update, particle update and
//! relocation, phase exchange, and the conservation audit.

use crate::config::{BcSide, CouplingMode, ExchangeMode, ForcingKind, MotionModeConfig, SimConfig};
use crate::error::{SimError, SimResult};
use crate::geom::Vec2;
use crate::mesh::{Mesh, MotionMode, VertexConstraint};
use crate::particles::{self, DragModel, ExchangeLedger, LocalGas, Particle};
use crate::riemann::{
    self, BoundaryKind, EdgeFluxPair, EdgeRiemann, NodalEdgeTerm, VertexSpeeds,
};
use crate::state::{Conservative, GasModel, Primitive};
use crate::timestep::{self, DtChoice, DtCoefficients};
use crate::tracking;

/// Prescribed body acceleration of the gas.
#[derive(Debug, Clone, Copy)]
pub enum Forcing {
    None,
    Constant(Vec2),
    Sinusoidal { accel: Vec2, omega: f64 },
}

impl Forcing {
    fn at(&self, t: f64) -> Option<Vec2> {
        match *self {
            Forcing::None => None,
            Forcing::Constant(a) => Some(a),
            Forcing::Sinusoidal { accel, omega } => Some(accel * (omega * t).sin()),
        }
    }
}

/// Everything the stepper needs besides the evolving state.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub gas: GasModel,
    pub drag: DragModel,
    pub two_way: bool,
    pub exchange: ExchangeMode,
    pub motion: MotionMode,
    pub smooth_passes: usize,
    pub dt: DtCoefficients,
    pub t_end: f64,
    pub forcing: Forcing,
    pub bc_left: BoundaryKind,
    pub bc_right: BoundaryKind,
    pub bc_bottom: BoundaryKind,
    pub bc_top: BoundaryKind,
    pub max_rings: usize,
    pub field_dt: Option<f64>,
}

impl RunSettings {
    pub fn from_config(cfg: &SimConfig) -> SimResult<RunSettings> {
        cfg.validate()?;
        if cfg.drag.model == DragModel::Crowe
            && cfg.coupling.mode == CouplingMode::TwoWay
            && !(cfg.gas.mu > 0.0)
        {
            return Err(SimError::validation("gas.mu", "Crowe drag requires positive viscosity"));
        }
        let prescribed = cfg.bc.prescribed.map(|[r, u, v, p]| Primitive::new(r, u, v, p));
        let side = |s: BcSide| -> BoundaryKind {
            match s {
                BcSide::Transmissive => BoundaryKind::Transmissive,
                BcSide::Wall => BoundaryKind::Wall,
                BcSide::Prescribed => BoundaryKind::Prescribed(prescribed.unwrap()),
            }
        };
        Ok(RunSettings {
            gas: cfg.gas,
            drag: cfg.drag.model,
            two_way: cfg.coupling.mode == CouplingMode::TwoWay,
            exchange: cfg.coupling.exchange,
            motion: match cfg.motion.mode {
                MotionModeConfig::Eulerian => MotionMode::Eulerian,
                MotionModeConfig::Lagrangian => MotionMode::Lagrangian,
                MotionModeConfig::Smoothed => MotionMode::Smoothed,
            },
            smooth_passes: cfg.motion.smooth_passes,
            dt: cfg.dt,
            t_end: cfg.t_end,
            forcing: match cfg.forcing.kind {
                ForcingKind::None => Forcing::None,
                ForcingKind::Constant => {
                    Forcing::Constant(Vec2::new(cfg.forcing.accel[0], cfg.forcing.accel[1]))
                }
                ForcingKind::Sinusoidal => Forcing::Sinusoidal {
                    accel: Vec2::new(cfg.forcing.accel[0], cfg.forcing.accel[1]),
                    omega: cfg.forcing.omega,
                },
            },
            bc_left: side(cfg.bc.left),
            bc_right: side(cfg.bc.right),
            bc_bottom: side(cfg.bc.bottom),
            bc_top: side(cfg.bc.top),
            max_rings: 3,
            field_dt: cfg.output.field_dt,
        })
    }
}

/// Extensive (volume-integrated) conserved totals.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Totals {
    pub mass: f64,
    pub momentum: Vec2,
    pub energy: f64,
}

impl Totals {
    fn add(&mut self, o: Totals) {
        self.mass += o.mass;
        self.momentum += o.momentum;
        self.energy += o.energy;
    }
}

/// Running conservation bookkeeping. The audited drift
/// `totals_now + boundary_outflow + wall_impulse - forcing_input - initial`
/// closes to rounding in conservative-exchange mode.
#[derive(Debug, Clone, Default)]
pub struct ConservationAudit {
    pub initial: Totals,
    /// Conserved quantities that left through boundary edges (fluid fluxes
    /// plus particles removed at open boundaries).
    pub boundary_outflow: Totals,
    /// Momentum absorbed by walls from specular particle reflections.
    pub wall_impulse: Vec2,
    /// External body-force input to the gas.
    pub forcing_input: Totals,
    pub mass_scale: f64,
    pub momentum_scale: f64,
    pub energy_scale: f64,
}

impl ConservationAudit {
    pub fn drift(&self, now: Totals) -> Totals {
        Totals {
            mass: now.mass + self.boundary_outflow.mass - self.initial.mass,
            momentum: now.momentum + self.boundary_outflow.momentum + self.wall_impulse
                - self.forcing_input.momentum
                - self.initial.momentum,
            energy: now.energy + self.boundary_outflow.energy
                - self.forcing_input.energy
                - self.initial.energy,
        }
    }

    /// Largest componentwise drift relative to the audit scales.
    pub fn relative_drift(&self, now: Totals) -> f64 {
        let d = self.drift(now);
        let m = (d.mass / self.mass_scale).abs();
        let p = d.momentum.norm() / self.momentum_scale;
        let e = (d.energy / self.energy_scale).abs();
        m.max(p).max(e)
    }
}

#[derive(Debug, Clone)]
pub struct SimulationState {
    pub mesh: Mesh,
    pub u: Vec<Conservative>,
    pub particles: Vec<Particle>,
    pub t: f64,
    pub step_index: u64,
    pub dt_prev: Option<f64>,
    pub ledger: ExchangeLedger,
    pub audit: ConservationAudit,
    pub removed_particles: u64,
}

impl SimulationState {
    pub fn new(mesh: Mesh, u: Vec<Conservative>, particles: Vec<Particle>, gas: &GasModel) -> SimResult<Self> {
        assert_eq!(u.len(), mesh.cells.len());
        let n = mesh.cells.len();
        let mut state = SimulationState {
            mesh,
            u,
            particles,
            t: 0.0,
            step_index: 0,
            dt_prev: None,
            ledger: ExchangeLedger::new(n),
            audit: ConservationAudit::default(),
            removed_particles: 0,
        };
        let totals = state.totals(gas);
        let mut c_max: f64 = 0.0;
        for (cell, u) in state.mesh.cells.iter().zip(&state.u) {
            let w = gas.primitive(u).map_err(|e| at_cell(e, cell_index(&state.mesh, cell)))?;
            c_max = c_max.max(gas.sound_speed(&w)? + w.vel.norm());
        }
        state.audit = ConservationAudit {
            initial: totals,
            boundary_outflow: Totals::default(),
            wall_impulse: Vec2::default(),
            forcing_input: Totals::default(),
            mass_scale: totals.mass.abs().max(1e-300),
            momentum_scale: totals.momentum.norm().max(totals.mass * c_max).max(1e-300),
            energy_scale: totals.energy.abs().max(1e-300),
        };
        Ok(state)
    }

    /// Gas plus particle conserved totals.
    pub fn totals(&self, gas: &GasModel) -> Totals {
        let _ = gas;
        let mut t = Totals::default();
        for (cell, u) in self.mesh.cells.iter().zip(&self.u) {
            t.mass += cell.volume * u.rho;
            t.momentum += u.mom * cell.volume;
            t.energy += cell.volume * u.erg;
        }
        for p in &self.particles {
            let m = p.mass();
            t.mass += m;
            t.momentum += p.vel * m;
            t.energy += 0.5 * m * p.vel.norm_sq() + m * p.spec_heat * p.temp;
        }
        t
    }
}

fn cell_index(mesh: &Mesh, cell: &crate::mesh::Cell) -> usize {
    // Identify by pointer arithmetic over the contiguous cells vector.
    let base = mesh.cells.as_ptr() as usize;
    (cell as *const _ as usize - base) / std::mem::size_of::<crate::mesh::Cell>()
}

fn at_cell(e: SimError, c: usize) -> SimError {
    match e {
        SimError::NonPhysicalState { detail } => {
            SimError::NonPhysicalState { detail: format!("cell {c}: {detail}") }
        }
        other => other,
    }
}

/// Per-step record used by the dt-law audit and diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    pub t_after: f64,
    pub dt: f64,
    pub limits: DtChoice,
    pub retried: bool,
    pub removed: u32,
    /// Worst relative nodal residual over both stages.
    pub nodal_residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum StepEvent {
    Started,
    StepDone(StepReport),
    Snapshot(usize),
    Finished,
}

/// Owns the settings plus derived per-mesh data and scratch buffers.
pub struct Solver {
    pub settings: RunSettings,
    edge_bc: Vec<Option<BoundaryKind>>,
    constraints: Vec<VertexConstraint>,
    prims: Vec<Primitive>,
    setups: Vec<EdgeRiemann>,
    setups2: Vec<EdgeRiemann>,
    u_star: Vec<Vec2>,
    u_star2: Vec<Vec2>,
    fluxes: Vec<EdgeFluxPair>,
    u_work: Vec<Conservative>,
    u_bar: Vec<Conservative>,
    new_pos: Vec<Vec2>,
    literal_src: Vec<Conservative>,
}

struct Candidate {
    boundary_out: Totals,
    forcing_in: Totals,
    new_vols: Vec<f64>,
    nodal_residual: f64,
}

impl Solver {
    pub fn new(settings: RunSettings, mesh: &Mesh) -> Solver {
        let edge_bc = mesh
            .edges
            .iter()
            .map(|e| {
                if !e.is_boundary() {
                    return None;
                }
                // Classify by outward direction; rectangular domains map
                // onto the four configured sides.
                let n = e.normal;
                Some(if n.x.abs() >= n.y.abs() {
                    if n.x > 0.0 { settings.bc_right } else { settings.bc_left }
                } else if n.y > 0.0 {
                    settings.bc_top
                } else {
                    settings.bc_bottom
                })
            })
            .collect::<Vec<_>>();

        // Wall vertices slide along the wall; wall corners are pinned.
        let mut constraints = vec![VertexConstraint::Free; mesh.vertices.len()];
        for q in 0..mesh.vertices.len() {
            if !mesh.vertices[q].on_boundary {
                continue;
            }
            let mut tangents: Vec<Vec2> = Vec::new();
            for &k in &mesh.edges_of_vertex[q] {
                let e = &mesh.edges[k];
                if !e.is_boundary() {
                    continue;
                }
                if matches!(edge_bc[k], Some(BoundaryKind::Wall)) {
                    let t = Vec2::new(-e.normal.y, e.normal.x);
                    if !tangents.iter().any(|&s| s.cross(t).abs() < 1e-9) {
                        tangents.push(t);
                    }
                }
            }
            constraints[q] = match tangents.len() {
                0 => VertexConstraint::Free,
                1 => VertexConstraint::Line(tangents[0]),
                _ => VertexConstraint::Pinned,
            };
        }

        Solver {
            settings,
            edge_bc,
            constraints,
            prims: Vec::new(),
            setups: Vec::new(),
            setups2: Vec::new(),
            u_star: Vec::new(),
            u_star2: Vec::new(),
            fluxes: Vec::new(),
            u_work: Vec::new(),
            u_bar: Vec::new(),
            new_pos: Vec::new(),
            literal_src: Vec::new(),
        }
    }

    /// Nodal contact velocities computed from the start-of-step states; the
    /// values driving mesh motion and the dt limits.
    pub fn nodal_velocities(&mut self, state: &SimulationState) -> SimResult<Vec<Vec2>> {
        build_edge_setups(&state.mesh, &state.u, &self.edge_bc, &self.settings.gas, &mut self.setups)?;
        let mut u_star = Vec::new();
        let res = solve_vertices(&state.mesh, &self.setups, &mut u_star)?;
        let _ = res;
        Ok(u_star)
    }

    pub fn step(&mut self, state: &mut SimulationState) -> SimResult<StepReport> {
        let gas = self.settings.gas;

        // Primitives at the step start; the gas the particles see.
        self.prims.clear();
        for (c, u) in state.u.iter().enumerate() {
            self.prims.push(gas.primitive(u).map_err(|e| at_cell(e, c))?);
        }

        // Edge Riemann setups and nodal velocities from the start state.
        build_edge_setups(&state.mesh, &state.u, &self.edge_bc, &gas, &mut self.setups)?;
        let res1 = solve_vertices(&state.mesh, &self.setups, &mut self.u_star)?;

        // Time-step limits.
        let dt_e = timestep::dt_acoustic(
            state.mesh.cells.iter().zip(&self.prims).map(|(cell, w)| {
                (cell.inradius, w.vel.norm(), (gas.gamma * w.pres / w.rho).sqrt())
            }),
            self.settings.dt.c_e,
        );
        let dt_v = timestep::dt_volume(&state.mesh, &self.u_star, self.settings.dt.c_v);
        let dt_p = timestep::dt_particle(&state.particles, &state.mesh, self.settings.dt.c_p);
        let remaining = self.settings.t_end - state.t;
        let remaining = if remaining > 0.0 { remaining } else { f64::INFINITY };
        let limits =
            timestep::combine(dt_e, dt_v, dt_p, state.dt_prev, &self.settings.dt, remaining);

        // Attempt the step; halve dt once on recoverable failures.
        let mut dt = limits.dt;
        let mut retried = false;
        let candidate = match self.attempt(state, dt) {
            Ok(c) => c,
            Err(e) if retryable(&e) => {
                log::warn!("step {} retried with dt/2 after: {e}", state.step_index);
                retried = true;
                dt *= 0.5;
                self.attempt(state, dt).map_err(|e2| {
                    log::error!("retry failed: {e2}");
                    e2
                })?
            }
            Err(e) => return Err(e),
        };

        // Commit: geometry, fluid state, particles, exchange, audit.
        state.mesh.apply_positions(&self.new_pos)?;
        std::mem::swap(&mut state.u, &mut self.u_work);

        let removed = self.particle_pass(state, dt, &candidate.new_vols)?;

        state.audit.boundary_outflow.add(candidate.boundary_out);
        state.audit.forcing_input.add(candidate.forcing_in);

        state.t += dt;
        state.step_index += 1;
        state.dt_prev = Some(dt);

        Ok(StepReport {
            t_after: state.t,
            dt,
            limits,
            retried,
            removed,
            nodal_residual: candidate.nodal_residual.max(res1),
        })
    }

    /// Fluid part of the step, computed against candidate geometry without
    /// mutating anything. `self.new_pos` and `self.u_work` hold the results.
    fn attempt(&mut self, state: &SimulationState, dt: f64) -> SimResult<Candidate> {
        let gas = self.settings.gas;
        let n_cells = state.mesh.cells.len();

        let w = state.mesh.vertex_velocities(
            self.settings.motion,
            self.settings.smooth_passes,
            &self.u_star,
            &self.constraints,
        );
        self.new_pos.clear();
        self.new_pos
            .extend(state.mesh.vertices.iter().zip(&w).map(|(v, &wq)| v.pos + wq * dt));
        let new_vols = state.mesh.candidate_volumes(&self.new_pos)?;

        // Start-of-step particle sources, only consumed in literal mode.
        let literal = self.settings.exchange == ExchangeMode::Literal && self.settings.two_way;
        if literal {
            self.literal_src.clear();
            self.literal_src.resize(n_cells, Conservative::default());
            for p in &state.particles {
                let local = LocalGas {
                    prim: self.prims[p.host],
                    temp: gas.temperature(&self.prims[p.host]),
                };
                let force = particles::drag_force(self.settings.drag, &local.prim, &gas, p)?;
                let heat = particles::heat_flux(&local.prim, &gas, local.temp, p)?;
                let s = &mut self.literal_src[p.host];
                s.mom -= force;
                s.erg -= force.dot(p.vel) + heat;
            }
        }

        // Stage 1: fluxes from the start state.
        compute_fluxes(&state.mesh, &self.setups, &self.u_star, &w, &mut self.fluxes)?;
        let forcing_n = self.settings.forcing.at(state.t);
        apply_update(
            state,
            &self.fluxes,
            &new_vols,
            dt,
            forcing_n,
            if literal { Some(&self.literal_src) } else { None },
            &mut self.u_bar,
        );
        for (c, u) in self.u_bar.iter().enumerate() {
            gas.primitive(u).map_err(|e| at_cell(e, c))?;
        }
        // Midpoint average in place.
        for (ub, un) in self.u_bar.iter_mut().zip(&state.u) {
            *ub = (*ub + *un) * 0.5;
        }

        // Stage 2: fluxes from the midpoint state. The nodal velocities are
        // re-solved from it so the star-pressure defects cancel exactly;
        // literal mode reuses the start-of-step solve.
        build_edge_setups(&state.mesh, &self.u_bar, &self.edge_bc, &gas, &mut self.setups2)?;
        let res2;
        let star2: &[Vec2] = if self.settings.exchange == ExchangeMode::Conservative {
            res2 = solve_vertices(&state.mesh, &self.setups2, &mut self.u_star2)?;
            &self.u_star2
        } else {
            res2 = 0.0;
            &self.u_star
        };
        compute_fluxes(&state.mesh, &self.setups2, star2, &w, &mut self.fluxes)?;
        let forcing_mid = self.settings.forcing.at(state.t + 0.5 * dt);
        // Borrow juggling: apply_update writes into u_work.
        let literal_src = if literal { Some(&self.literal_src) } else { None };
        apply_update_mid(
            state,
            &self.u_bar,
            &self.fluxes,
            &new_vols,
            dt,
            forcing_mid,
            literal_src,
            &mut self.u_work,
        );
        for (c, u) in self.u_work.iter().enumerate() {
            gas.primitive(u).map_err(|e| at_cell(e, c))?;
        }

        // Audit integrals for the final (stage-2) update.
        let mut boundary_out = Totals::default();
        for (k, e) in state.mesh.edges.iter().enumerate() {
            if e.is_boundary() {
                let f = self.fluxes[k].flux_right_side;
                boundary_out.mass += dt * e.length * f.rho;
                boundary_out.momentum += f.mom * (dt * e.length);
                boundary_out.energy += dt * e.length * f.erg;
            }
        }
        let mut forcing_in = Totals::default();
        if let Some(a) = forcing_mid {
            for (cell, u) in state.mesh.cells.iter().zip(&self.u_bar) {
                forcing_in.momentum += a * (cell.volume * u.rho * dt);
                forcing_in.energy += a.dot(u.mom) * cell.volume * dt;
            }
        }
        if literal {
            for s in &self.literal_src {
                forcing_in.momentum += s.mom * dt;
                forcing_in.energy += s.erg * dt;
            }
        }

        Ok(Candidate { boundary_out, forcing_in, new_vols, nodal_residual: res2 })
    }

    /// Particle kicks from the frozen start-of-step gas, relocation on the
    /// moved mesh, wall reflections, open-boundary removal, and the
    /// conservative exchange back onto the fluid.
    fn particle_pass(&mut self, state: &mut SimulationState, dt: f64, new_vols: &[f64]) -> SimResult<u32> {
        let gas = self.settings.gas;
        state.ledger.reset(state.mesh.cells.len());
        if state.particles.is_empty() {
            return Ok(0);
        }
        let mut removed = 0u32;
        let mut remove_flags: Vec<bool> = Vec::new();
        let mut exit_totals = Totals::default();
        let mut wall_impulse = Vec2::default();
        let max_rings = self.settings.max_rings;

        for i in 0..state.particles.len() {
            let p = &state.particles[i];
            let local =
                LocalGas { prim: self.prims[p.host], temp: gas.temperature(&self.prims[p.host]) };
            let kick = particles::rk2_update(p, &local, &gas, self.settings.drag, dt)?;
            state.ledger.deposit(p.host, kick.impulse, kick.energy);

            let p = &mut state.particles[i];
            p.vel = kick.vel;
            p.pos = kick.pos;
            p.temp = kick.temp;

            // Relocate on the post-motion mesh.
            let mut gone = false;
            let mut bounces = 0;
            loop {
                let res = tracking::locate(&state.mesh, p.pos, p.host, max_rings).map_err(|e| {
                    if let SimError::LostParticle { detail } = e {
                        SimError::LostParticle { detail: format!("particle {}: {detail}", p.id) }
                    } else {
                        e
                    }
                })?;
                match res.cell {
                    Some(c) => {
                        p.host = c;
                        break;
                    }
                    None => {
                        match nearest_exit(&state.mesh, &self.edge_bc, p.host, p.pos) {
                            Some((k, true)) => {
                                // Wall: specular reflection.
                                let e = &state.mesh.edges[k];
                                let a = state.mesh.vertices[e.verts[0]].pos;
                                let n = e.normal;
                                let d = (p.pos - a).dot(n);
                                p.pos -= n * (2.0 * d);
                                let v_n = p.vel.dot(n);
                                if v_n > 0.0 {
                                    p.vel -= n * (2.0 * v_n);
                                    wall_impulse += n * (2.0 * p.mass() * v_n);
                                }
                                bounces += 1;
                                if bounces > 4 {
                                    return Err(SimError::LostParticle {
                                        detail: format!("particle {} trapped at a wall corner", p.id),
                                    });
                                }
                            }
                            Some((_, false)) | None => {
                                // Open boundary: the particle leaves and
                                // carries its conserved quantities out.
                                let m = p.mass();
                                exit_totals.mass += m;
                                exit_totals.momentum += p.vel * m;
                                exit_totals.energy +=
                                    0.5 * m * p.vel.norm_sq() + m * p.spec_heat * p.temp;
                                gone = true;
                                break;
                            }
                        }
                    }
                }
            }
            if gone {
                removed += 1;
                if remove_flags.is_empty() {
                    remove_flags = vec![false; state.particles.len()];
                }
                remove_flags[i] = true;
            }
        }

        if removed > 0 {
            let mut it = remove_flags.iter();
            state.particles.retain(|_| !*it.next().unwrap());
            state.removed_particles += removed as u64;
            log::info!("{removed} particle(s) left the domain");
        }

        if self.settings.two_way && self.settings.exchange == ExchangeMode::Conservative {
            for c in 0..state.mesh.cells.len() {
                let vol = new_vols[c];
                let u = &mut state.u[c];
                u.mom -= state.ledger.momentum[c] / vol;
                u.erg -= state.ledger.energy[c] / vol;
            }
        }

        state.audit.boundary_outflow.add(exit_totals);
        state.audit.wall_impulse += wall_impulse;
        Ok(removed)
    }

    /// Advances to `t_end`, reporting step completions and snapshots.
    pub fn run(
        &mut self,
        state: &mut SimulationState,
        mut observer: impl FnMut(&SimulationState, StepEvent) -> SimResult<()>,
    ) -> SimResult<()> {
        observer(state, StepEvent::Started)?;
        let mut snap_index = 0;
        observer(state, StepEvent::Snapshot(snap_index))?;
        snap_index += 1;
        let t_end = self.settings.t_end;
        if t_end <= 0.0 {
            return observer(state, StepEvent::Finished);
        }
        let mut next_cadence = self.settings.field_dt;
        let mut cadence_k = 1usize;
        while state.t < t_end * (1.0 - 1e-14) {
            let report = self.step(state)?;
            observer(state, StepEvent::StepDone(report))?;
            if let Some(dt_out) = next_cadence {
                while cadence_k as f64 * dt_out <= state.t * (1.0 + 1e-12)
                    && (cadence_k as f64) * dt_out < t_end * (1.0 - 1e-12)
                {
                    observer(state, StepEvent::Snapshot(snap_index))?;
                    snap_index += 1;
                    cadence_k += 1;
                }
                next_cadence = Some(dt_out);
            }
        }
        observer(state, StepEvent::Snapshot(snap_index))?;
        observer(state, StepEvent::Finished)
    }
}

fn retryable(e: &SimError) -> bool {
    matches!(
        e,
        SimError::TangledMesh { .. }
            | SimError::NonPhysicalState { .. }
            | SimError::DegenerateFan { .. }
    )
}

/// Riemann setups for every edge; boundary edges face their ghost state.
fn build_edge_setups(
    mesh: &Mesh,
    u: &[Conservative],
    edge_bc: &[Option<BoundaryKind>],
    gas: &GasModel,
    out: &mut Vec<EdgeRiemann>,
) -> SimResult<()> {
    out.clear();
    out.reserve(mesh.edges.len());
    for (k, e) in mesh.edges.iter().enumerate() {
        let left = &u[e.left];
        let setup = match e.right {
            Some(r) => EdgeRiemann::new(left, &u[r], e.normal, gas)?,
            None => {
                let ghost = riemann::ghost_state(left, e.normal, edge_bc[k].as_ref().unwrap(), gas);
                EdgeRiemann::new(left, &ghost, e.normal, gas)?
            }
        };
        out.push(setup);
    }
    Ok(())
}

/// Nodal solve at every vertex; returns the worst relative residual.
fn solve_vertices(mesh: &Mesh, setups: &[EdgeRiemann], out: &mut Vec<Vec2>) -> SimResult<f64> {
    out.clear();
    out.reserve(mesh.vertices.len());
    let mut worst = 0.0f64;
    let mut terms: Vec<NodalEdgeTerm> = Vec::with_capacity(8);
    for q in 0..mesh.vertices.len() {
        terms.clear();
        for &k in &mesh.edges_of_vertex[q] {
            let e = &mesh.edges[k];
            let s = &setups[k];
            terms.push(NodalEdgeTerm {
                length: e.length,
                normal: e.normal,
                alpha: s.alpha_l + s.alpha_r,
                v_star: s.v_star,
            });
        }
        let u_q = riemann::nodal_velocity(q, &terms)?;
        let scale: f64 =
            terms.iter().map(|t| t.length * t.alpha * t.v_star.abs()).sum::<f64>().max(1e-300);
        worst = worst.max(riemann::nodal_residual(u_q, &terms).norm() / scale);
        out.push(u_q);
    }
    Ok(worst)
}

/// Edge flux pairs for one stage; grid and contact speeds projected per
/// endpoint vertex.
fn compute_fluxes(
    mesh: &Mesh,
    setups: &[EdgeRiemann],
    u_star: &[Vec2],
    w: &[Vec2],
    out: &mut Vec<EdgeFluxPair>,
) -> SimResult<()> {
    out.clear();
    out.reserve(mesh.edges.len());
    for (e, setup) in mesh.edges.iter().zip(setups) {
        let ends = [
            VertexSpeeds {
                w_n: w[e.verts[0]].dot(e.normal),
                s_star: u_star[e.verts[0]].dot(e.normal),
            },
            VertexSpeeds {
                w_n: w[e.verts[1]].dot(e.normal),
                s_star: u_star[e.verts[1]].dot(e.normal),
            },
        ];
        out.push(riemann::edge_flux(setup, e.normal, ends)?);
    }
    Ok(())
}

fn stage_sources(
    mesh: &Mesh,
    u_stage: &[Conservative],
    forcing: Option<Vec2>,
    literal_src: Option<&Vec<Conservative>>,
    c: usize,
) -> Conservative {
    let mut src = Conservative::default();
    if let Some(a) = forcing {
        let vol = mesh.cells[c].volume;
        src.mom += a * (vol * u_stage[c].rho);
        src.erg += a.dot(u_stage[c].mom) * vol;
    }
    if let Some(s) = literal_src {
        src = src + s[c];
    }
    src
}

/// U_new = (vol_old U_old - dt sum(edge fluxes) + dt src) / vol_new, with
/// the left cell losing its side of each pair and the right cell gaining
/// the other side.
fn apply_update(
    state: &SimulationState,
    fluxes: &[EdgeFluxPair],
    new_vols: &[f64],
    dt: f64,
    forcing: Option<Vec2>,
    literal_src: Option<&Vec<Conservative>>,
    out: &mut Vec<Conservative>,
) {
    accumulate_update(state, &state.u, fluxes, new_vols, dt, forcing, literal_src, out);
}

fn apply_update_mid(
    state: &SimulationState,
    u_stage: &[Conservative],
    fluxes: &[EdgeFluxPair],
    new_vols: &[f64],
    dt: f64,
    forcing: Option<Vec2>,
    literal_src: Option<&Vec<Conservative>>,
    out: &mut Vec<Conservative>,
) {
    accumulate_update(state, u_stage, fluxes, new_vols, dt, forcing, literal_src, out);
}

fn accumulate_update(
    state: &SimulationState,
    u_stage: &[Conservative],
    fluxes: &[EdgeFluxPair],
    new_vols: &[f64],
    dt: f64,
    forcing: Option<Vec2>,
    literal_src: Option<&Vec<Conservative>>,
    out: &mut Vec<Conservative>,
) {
    let mesh = &state.mesh;
    out.clear();
    out.extend(
        state
            .u
            .iter()
            .zip(&mesh.cells)
            .map(|(u, cell)| *u * cell.volume),
    );
    for (k, e) in mesh.edges.iter().enumerate() {
        let pair = &fluxes[k];
        out[e.left] = out[e.left] - pair.flux_left_side * (dt * e.length);
        if let Some(r) = e.right {
            out[r] = out[r] + pair.flux_right_side * (dt * e.length);
        }
    }
    for c in 0..out.len() {
        let src = stage_sources(mesh, u_stage, forcing, literal_src, c);
        out[c] = (out[c] + src * dt) * (1.0 / new_vols[c]);
    }
}

/// Boundary edge nearest to the exit path of a particle that left the
/// domain; returns the edge and whether it is a wall.
fn nearest_exit(
    mesh: &Mesh,
    edge_bc: &[Option<BoundaryKind>],
    host: usize,
    pos: Vec2,
) -> Option<(usize, bool)> {
    let mut cells = vec![host];
    let mut seen = std::collections::HashSet::new();
    seen.insert(host);
    for _ in 0..2 {
        let mut next = Vec::new();
        for &c in &cells {
            for &d in &mesh.neighbors_of_cell[c] {
                if seen.insert(d) {
                    next.push(d);
                }
            }
        }
        cells.extend(next);
    }
    let mut best: Option<(usize, f64)> = None;
    for &c in &cells {
        for &k in &mesh.cells[c].edges {
            let e = &mesh.edges[k];
            if !e.is_boundary() {
                continue;
            }
            let a = mesh.vertices[e.verts[0]].pos;
            let b = mesh.vertices[e.verts[1]].pos;
            // Distance from the exited position to the segment.
            let d = b - a;
            let t = ((pos - a).dot(d) / d.norm_sq()).clamp(0.0, 1.0);
            let closest = a + d * t;
            let dist = (pos - closest).norm_sq();
            if best.map_or(true, |(_, bd)| dist < bd) {
                best = Some((k, dist));
            }
        }
    }
    best.map(|(k, _)| (k, matches!(edge_bc[k], Some(BoundaryKind::Wall))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_rect;
    use approx::assert_relative_eq;

    fn uniform_state(
        nx: usize,
        ny: usize,
        perturb: f64,
        w: Primitive,
        gas: &GasModel,
    ) -> SimulationState {
        let mesh = generate_rect(nx, ny, [0.0, 1.0, 0.0, 1.0], perturb, 11).unwrap();
        let u = vec![gas.conservative(&w); mesh.cells.len()];
        SimulationState::new(mesh, u, Vec::new(), gas).unwrap()
    }

    fn settings(cfg_text: &str) -> RunSettings {
        let cfg = crate::config::parse_config(cfg_text).unwrap();
        RunSettings::from_config(&cfg).unwrap()
    }

    #[test]
    fn free_stream_eulerian_exact() {
        let rs = settings("t_end = 1.0\n");
        let gas = rs.gas;
        let w = Primitive::new(1.2, 100.0, 50.0, 101325.0);
        let mut state = uniform_state(8, 8, 0.3, w, &gas);
        let mut solver = Solver::new(rs, &state.mesh);
        for _ in 0..5 {
            solver.step(&mut state).unwrap();
        }
        let u0 = gas.conservative(&w);
        for u in &state.u {
            assert_relative_eq!(u.rho, u0.rho, max_relative = 5e-13);
            assert_relative_eq!(u.mom.x, u0.mom.x, max_relative = 5e-13);
            assert_relative_eq!(u.mom.y, u0.mom.y, max_relative = 5e-13);
            assert_relative_eq!(u.erg, u0.erg, max_relative = 5e-13);
        }
    }

    #[test]
    fn free_stream_lagrangian_translates_mesh() {
        let rs = settings("t_end = 1.0\n[motion]\nmode = \"lagrangian\"\n");
        let gas = rs.gas;
        let w = Primitive::new(1.2, 30.0, 10.0, 101325.0);
        let mut state = uniform_state(6, 6, 0.2, w, &gas);
        let x_before = state.mesh.vertices[20].pos;
        let mut solver = Solver::new(rs, &state.mesh);
        let report = solver.step(&mut state).unwrap();
        let x_after = state.mesh.vertices[20].pos;
        assert_relative_eq!((x_after - x_before).x, 30.0 * report.dt, max_relative = 1e-10);
        assert_relative_eq!((x_after - x_before).y, 10.0 * report.dt, max_relative = 1e-10);
        let u0 = gas.conservative(&w);
        for u in &state.u {
            assert_relative_eq!(u.rho, u0.rho, max_relative = 1e-12);
            assert_relative_eq!(u.erg, u0.erg, max_relative = 1e-12);
        }
    }

    #[test]
    fn closed_box_conserves_single_phase() {
        // A non-trivial pressure bump in a walled box: mass, momentum and
        // energy (audited with wall impulses) stay fixed per step.
        let rs = settings(
            "t_end = 1.0\n[bc]\nleft = \"wall\"\nright = \"wall\"\nbottom = \"wall\"\ntop = \"wall\"\n",
        );
        let gas = rs.gas;
        let mesh = generate_rect(12, 10, [0.0, 1.0, 0.0, 1.0], 0.15, 3).unwrap();
        let u: Vec<Conservative> = mesh
            .cells
            .iter()
            .map(|cell| {
                let bump = 1.0 + 0.5 * (-((cell.centroid - Vec2::new(0.4, 0.5)).norm_sq()) / 0.02).exp();
                gas.conservative(&Primitive::new(1.2 * bump, 0.0, 0.0, 101325.0 * bump))
            })
            .collect();
        let mut state = SimulationState::new(mesh, u, Vec::new(), &gas).unwrap();
        let mut solver = Solver::new(rs, &state.mesh);
        for _ in 0..25 {
            solver.step(&mut state).unwrap();
            let drift = state.audit.relative_drift(state.totals(&gas));
            assert!(drift < 1e-12, "audited drift {drift}");
        }
    }

    #[test]
    fn dt_law_holds_per_step() {
        let rs = settings("t_end = 1.0\n");
        let gas = rs.gas;
        let w = Primitive::new(1.2, 10.0, 0.0, 101325.0);
        let mut state = uniform_state(6, 6, 0.0, w, &gas);
        let mut solver = Solver::new(rs, &state.mesh);
        let mut prev: Option<f64> = None;
        for _ in 0..30 {
            let r = solver.step(&mut state).unwrap();
            let lim = r.limits;
            assert!(r.dt <= lim.dt_acoustic * (1.0 + 1e-14));
            assert!(r.dt <= lim.dt_volume * (1.0 + 1e-14));
            assert!(r.dt <= lim.dt_particle * (1.0 + 1e-14));
            if let Some(p) = prev {
                assert!(r.dt <= 1.01 * p * (1.0 + 1e-14));
            }
            prev = Some(r.dt);
        }
    }

    #[test]
    fn uniform_gas_with_slipping_particle_conserves() {
        let rs = settings(
            "t_end = 1.0\n[bc]\nleft = \"wall\"\nright = \"wall\"\nbottom = \"wall\"\ntop = \"wall\"\n[seed_particles]\nmode = \"single\"\nposition = [0.5, 0.5]\nvelocity = [10.0, 0.0]\nradius = 1e-4\n",
        );
        let gas = rs.gas;
        let w = Primitive::new(1.2, 0.0, 0.0, 101325.0);
        let mesh = generate_rect(8, 8, [0.0, 1.0, 0.0, 1.0], 0.0, 0).unwrap();
        let u = vec![gas.conservative(&w); mesh.cells.len()];
        let host = tracking::brute_force_locate(&mesh, Vec2::new(0.5, 0.5)).unwrap();
        let p = Particle {
            id: 0,
            pos: Vec2::new(0.51, 0.52),
            vel: Vec2::new(10.0, 0.0),
            radius: 1e-4,
            mat_density: 1000.0,
            spec_heat: 1.0,
            temp: gas.temperature(&w),
            host,
        };
        let mut state = SimulationState::new(mesh, u, vec![p], &gas).unwrap();
        let mut solver = Solver::new(rs, &state.mesh);
        let p_mom0 = state.particles[0].vel * state.particles[0].mass();
        for _ in 0..50 {
            solver.step(&mut state).unwrap();
        }
        let drift = state.audit.relative_drift(state.totals(&gas));
        assert!(drift < 1e-12, "audited drift {drift}");
        // The particle actually decelerated and the gas picked up momentum.
        let p_mom1 = state.particles[0].vel * state.particles[0].mass();
        assert!(p_mom1.x < p_mom0.x);
    }

    #[test]
    fn sod_step_hits_acoustic_limit() {
        let rs = settings("t_end = 1.0\n[bc]\nbottom = \"wall\"\ntop = \"wall\"\n");
        let gas = rs.gas;
        let mesh = generate_rect(50, 4, [-0.5, 0.5, 0.0, 0.1], 0.0, 0).unwrap();
        let u: Vec<Conservative> = mesh
            .cells
            .iter()
            .map(|cell| {
                let w = if cell.centroid.x < 0.0 {
                    Primitive::new(9.6, 0.0, 0.0, 1013250.0)
                } else {
                    Primitive::new(1.2, 0.0, 0.0, 101325.0)
                };
                gas.conservative(&w)
            })
            .collect();
        let mut state = SimulationState::new(mesh, u, Vec::new(), &gas).unwrap();
        let mut solver = Solver::new(rs, &state.mesh);
        let r = solver.step(&mut state).unwrap();
        // First step: the acoustic limit dominates (the volume limit is
        // finite too, driven by the interface contact speed, but larger)
        // and the dt carries the cold-start safety factor.
        assert!(r.limits.dt_acoustic.is_finite());
        assert!(r.limits.dt_volume > r.limits.dt_acoustic);
        assert_eq!(r.limits.dt_particle, f64::INFINITY);
        assert_relative_eq!(r.dt, 0.1 * r.limits.dt_acoustic, max_relative = 1e-14);
        for (c, u) in state.u.iter().enumerate() {
            assert!(u.is_finite());
            gas.primitive(u).map_err(|e| panic!("cell {c}: {e}")).unwrap();
        }
        // Nodal residuals stay at rounding level.
        assert!(r.nodal_residual < 1e-9, "residual {}", r.nodal_residual);
    }

    #[test]
    fn run_emits_snapshots_at_cadence() {
        let mut cfg = crate::config::parse_config("t_end = 1e-3\n").unwrap();
        cfg.output.field_dt = Some(2.5e-4);
        let rs = RunSettings::from_config(&cfg).unwrap();
        let gas = rs.gas;
        let w = Primitive::new(1.2, 0.0, 0.0, 101325.0);
        let mut state = uniform_state(4, 4, 0.0, w, &gas);
        let mut solver = Solver::new(rs, &state.mesh);
        let mut snaps = Vec::new();
        solver
            .run(&mut state, |s, ev| {
                if let StepEvent::Snapshot(k) = ev {
                    snaps.push((k, s.t));
                }
                Ok(())
            })
            .unwrap();
        // floor(1e-3 / 2.5e-4) + 1 = 5 snapshots, the last exactly at t_end.
        assert_eq!(snaps.len(), 5);
        assert_relative_eq!(snaps.last().unwrap().1, 1e-3, max_relative = 1e-12);
    }

    #[test]
    fn zero_t_end_emits_initial_snapshot_only() {
        let rs = settings("t_end = 0.0\n");
        let gas = rs.gas;
        let w = Primitive::new(1.2, 0.0, 0.0, 101325.0);
        let mut state = uniform_state(4, 4, 0.0, w, &gas);
        let mut solver = Solver::new(rs, &state.mesh);
        let mut snaps = 0;
        solver
            .run(&mut state, |_, ev| {
                if matches!(ev, StepEvent::Snapshot(_)) {
                    snaps += 1;
                }
                Ok(())
            })
            .unwrap();
        assert_eq!(snaps, 1);
        assert_eq!(state.step_index, 0);
    }

    #[test]
    fn wall_reflection_keeps_particle_in_box() {
        let rs = settings(
            "t_end = 1.0\n[bc]\nleft = \"wall\"\nright = \"wall\"\nbottom = \"wall\"\ntop = \"wall\"\n",
        );
        let gas = rs.gas;
        let mesh = generate_rect(8, 8, [0.0, 1.0, 0.0, 1.0], 0.0, 0).unwrap();
        let u = vec![gas.conservative(&Primitive::new(1.2, 0.0, 0.0, 101325.0)); mesh.cells.len()];
        // Heavy fast particle aimed at the right wall.
        let host = tracking::brute_force_locate(&mesh, Vec2::new(0.95, 0.5)).unwrap();
        let p = Particle {
            id: 7,
            pos: Vec2::new(0.95, 0.5),
            vel: Vec2::new(400.0, 0.0),
            radius: 1e-2,
            mat_density: 1000.0,
            spec_heat: 1.0,
            temp: 300.0,
            host,
        };
        let mut state = SimulationState::new(mesh, u, vec![p], &gas).unwrap();
        let mut solver = Solver::new(rs, &state.mesh);
        let mut reflected = false;
        for _ in 0..400 {
            solver.step(&mut state).unwrap();
            let p = &state.particles[0];
            assert!(p.pos.x <= 1.0 && p.pos.x >= 0.0, "particle escaped: {:?}", p.pos);
            if p.vel.x < 0.0 {
                reflected = true;
                break;
            }
        }
        assert!(reflected, "particle never hit the wall");
        assert!(state.audit.wall_impulse.x > 0.0);
    }

    #[test]
    fn transmissive_exit_removes_particle() {
        let rs = settings("t_end = 1.0\n");
        let gas = rs.gas;
        let mesh = generate_rect(8, 8, [0.0, 1.0, 0.0, 1.0], 0.0, 0).unwrap();
        let u = vec![gas.conservative(&Primitive::new(1.2, 0.0, 0.0, 101325.0)); mesh.cells.len()];
        let host = tracking::brute_force_locate(&mesh, Vec2::new(0.95, 0.5)).unwrap();
        let p = Particle {
            id: 3,
            pos: Vec2::new(0.95, 0.5),
            vel: Vec2::new(300.0, 0.0),
            radius: 1e-2,
            mat_density: 1000.0,
            spec_heat: 1.0,
            temp: 300.0,
            host,
        };
        let mut state = SimulationState::new(mesh, u, vec![p], &gas).unwrap();
        let mut solver = Solver::new(rs, &state.mesh);
        for _ in 0..200 {
            solver.step(&mut state).unwrap();
            if state.particles.is_empty() {
                break;
            }
        }
        assert!(state.particles.is_empty(), "particle should have left");
        assert_eq!(state.removed_particles, 1);
        // Audit still closes: the exit totals moved to boundary_outflow.
        let drift = state.audit.relative_drift(state.totals(&gas));
        assert!(drift < 1e-11, "audited drift {drift}");
    }
}
