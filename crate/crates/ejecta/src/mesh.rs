//! Unstructured polygonal mesh: connectivity, geometric quantities, motion
//! between time levels, a structured-quad generator, and the plain-text
//! node/element format.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{SimError, SimResult};
use crate::geom::Vec2;

#[derive(Debug, Clone)]
pub struct Vertex {
    pub pos: Vec2,
    pub on_boundary: bool,
}

#[derive(Debug, Clone)]
pub struct Edge {
    /// Endpoints ordered so the left cell traverses them counter-clockwise.
    pub verts: [usize; 2],
    pub left: usize,
    /// `None` marks a boundary edge.
    pub right: Option<usize>,
    pub length: f64,
    /// Unit normal pointing from the left cell toward the right cell
    /// (outward on boundary edges).
    pub normal: Vec2,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.right.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct Cell {
    /// Counter-clockwise vertex loop.
    pub verts: Vec<usize>,
    /// `edges[i]` joins `verts[i]` and `verts[(i+1) % n]`.
    pub edges: Vec<usize>,
    pub volume: f64,
    pub centroid: Vec2,
    pub inradius: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub cells: Vec<Cell>,
    /// C(q): cells surrounding each vertex.
    pub cells_of_vertex: Vec<Vec<usize>>,
    /// K(q): edges surrounding each vertex.
    pub edges_of_vertex: Vec<Vec<usize>>,
    /// F(c): edge-neighbors of each cell.
    pub neighbors_of_cell: Vec<Vec<usize>>,
    /// Degeneracy threshold on cell areas, scaled by the domain size.
    pub eps_geom: f64,
    bbox_min: Vec2,
    bbox_max: Vec2,
}

/// Shoelace area, centroid, and the centroid-to-nearest-edge distance used
/// as the cell length scale. Returns an error for degenerate polygons.
pub fn cell_geometry(pts: &[Vec2], eps: f64) -> SimResult<(f64, Vec2, f64)> {
    if pts.len() < 3 {
        return Err(SimError::DegenerateCell { area: 0.0 });
    }
    let n = pts.len();
    let mut area2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let w = a.cross(b);
        area2 += w;
        cx += (a.x + b.x) * w;
        cy += (a.y + b.y) * w;
    }
    let area = 0.5 * area2;
    if !(area > eps) {
        return Err(SimError::DegenerateCell { area });
    }
    let centroid = Vec2::new(cx / (3.0 * area2), cy / (3.0 * area2));
    let mut inradius = f64::INFINITY;
    for i in 0..n {
        let a = pts[i];
        let b = pts[(i + 1) % n];
        let len = (b - a).norm();
        if len > 0.0 {
            let d = ((b - a).cross(centroid - a)).abs() / len;
            inradius = inradius.min(d);
        }
    }
    Ok((area, centroid, inradius))
}

fn shoelace(pts: &[Vec2]) -> f64 {
    let n = pts.len();
    let mut area2 = 0.0;
    for i in 0..n {
        area2 += pts[i].cross(pts[(i + 1) % n]);
    }
    0.5 * area2
}

impl Mesh {
    pub fn build(positions: Vec<Vec2>, cell_lists: Vec<Vec<usize>>) -> SimResult<Mesh> {
        let nv = positions.len();
        for (q, p) in positions.iter().enumerate() {
            if !p.is_finite() {
                return Err(SimError::validation("mesh.vertices", format!("vertex {q} is not finite")));
            }
        }
        let mut bbox_min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut bbox_max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &positions {
            bbox_min = Vec2::new(bbox_min.x.min(p.x), bbox_min.y.min(p.y));
            bbox_max = Vec2::new(bbox_max.x.max(p.x), bbox_max.y.max(p.y));
        }
        let diag_sq = (bbox_max - bbox_min).norm_sq();
        let eps_geom = 1e-14 * diag_sq;

        let mut cells: Vec<Cell> = Vec::with_capacity(cell_lists.len());
        for (c, mut verts) in cell_lists.into_iter().enumerate() {
            if verts.len() < 3 {
                return Err(SimError::DegenerateCell { area: 0.0 });
            }
            for &q in &verts {
                if q >= nv {
                    return Err(SimError::validation(
                        "mesh.cells",
                        format!("cell {c} references vertex {q} out of range"),
                    ));
                }
            }
            let mut sorted = verts.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != verts.len() {
                return Err(SimError::DegenerateCell { area: 0.0 });
            }
            let pts: Vec<Vec2> = verts.iter().map(|&q| positions[q]).collect();
            // Re-orient clockwise input.
            if shoelace(&pts) < 0.0 {
                verts.reverse();
            }
            let pts: Vec<Vec2> = verts.iter().map(|&q| positions[q]).collect();
            let (volume, centroid, inradius) = cell_geometry(&pts, eps_geom)?;
            cells.push(Cell { verts, edges: Vec::new(), volume, centroid, inradius });
        }

        // Undirected edge map keyed on sorted endpoints.
        let mut edge_ids: std::collections::HashMap<(usize, usize), usize> =
            std::collections::HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        for c in 0..cells.len() {
            let nvc = cells[c].verts.len();
            let mut cell_edges = Vec::with_capacity(nvc);
            for i in 0..nvc {
                let a = cells[c].verts[i];
                let b = cells[c].verts[(i + 1) % nvc];
                let key = (a.min(b), a.max(b));
                match edge_ids.get(&key) {
                    None => {
                        let d = positions[b] - positions[a];
                        let length = d.norm();
                        let normal = d.perp_cw() / length;
                        edges.push(Edge { verts: [a, b], left: c, right: None, length, normal });
                        edge_ids.insert(key, edges.len() - 1);
                        cell_edges.push(edges.len() - 1);
                    }
                    Some(&k) => {
                        let e = &mut edges[k];
                        if e.right.is_some() || e.verts != [b, a] {
                            return Err(SimError::NonManifoldEdge { v0: a, v1: b });
                        }
                        e.right = Some(c);
                        cell_edges.push(k);
                    }
                }
            }
            cells[c].edges = cell_edges;
        }

        let mut cells_of_vertex = vec![Vec::new(); nv];
        for (c, cell) in cells.iter().enumerate() {
            for &q in &cell.verts {
                cells_of_vertex[q].push(c);
            }
        }
        for (q, list) in cells_of_vertex.iter().enumerate() {
            if list.is_empty() {
                return Err(SimError::DanglingVertex { vertex: q });
            }
        }
        let mut edges_of_vertex = vec![Vec::new(); nv];
        for (k, e) in edges.iter().enumerate() {
            edges_of_vertex[e.verts[0]].push(k);
            edges_of_vertex[e.verts[1]].push(k);
        }
        let mut neighbors_of_cell = vec![Vec::new(); cells.len()];
        for e in &edges {
            if let Some(r) = e.right {
                neighbors_of_cell[e.left].push(r);
                neighbors_of_cell[r].push(e.left);
            }
        }

        let mut vertices: Vec<Vertex> =
            positions.into_iter().map(|pos| Vertex { pos, on_boundary: false }).collect();
        for e in &edges {
            if e.is_boundary() {
                vertices[e.verts[0]].on_boundary = true;
                vertices[e.verts[1]].on_boundary = true;
            }
        }

        Ok(Mesh {
            vertices,
            edges,
            cells,
            cells_of_vertex,
            edges_of_vertex,
            neighbors_of_cell,
            eps_geom,
            bbox_min,
            bbox_max,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn total_volume(&self) -> f64 {
        self.cells.iter().map(|c| c.volume).sum()
    }

    pub fn bbox(&self) -> (Vec2, Vec2) {
        (self.bbox_min, self.bbox_max)
    }

    pub fn cell_points(&self, c: usize) -> Vec<Vec2> {
        self.cells[c].verts.iter().map(|&q| self.vertices[q].pos).collect()
    }

    /// Validates candidate vertex positions and returns the per-cell volumes
    /// they would produce; fails with `TangledMesh` before anything mutates.
    pub fn candidate_volumes(&self, new_pos: &[Vec2]) -> SimResult<Vec<f64>> {
        let mut vols = Vec::with_capacity(self.cells.len());
        let mut pts: Vec<Vec2> = Vec::new();
        for (c, cell) in self.cells.iter().enumerate() {
            pts.clear();
            pts.extend(cell.verts.iter().map(|&q| new_pos[q]));
            let area = shoelace(&pts);
            if !(area > self.eps_geom) {
                return Err(SimError::TangledMesh { cell: c, area });
            }
            vols.push(area);
        }
        Ok(vols)
    }

    /// Commits new vertex positions and refreshes all geometric quantities.
    pub fn apply_positions(&mut self, new_pos: &[Vec2]) -> SimResult<()> {
        assert_eq!(new_pos.len(), self.vertices.len());
        for (v, &p) in self.vertices.iter_mut().zip(new_pos) {
            v.pos = p;
        }
        let mut pts: Vec<Vec2> = Vec::new();
        for c in 0..self.cells.len() {
            pts.clear();
            pts.extend(self.cells[c].verts.iter().map(|&q| self.vertices[q].pos));
            let (volume, centroid, inradius) = cell_geometry(&pts, self.eps_geom)?;
            let cell = &mut self.cells[c];
            cell.volume = volume;
            cell.centroid = centroid;
            cell.inradius = inradius;
        }
        for e in self.edges.iter_mut() {
            let d = self.vertices[e.verts[1]].pos - self.vertices[e.verts[0]].pos;
            e.length = d.norm();
            e.normal = d.perp_cw() / e.length;
        }
        let mut bbox_min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut bbox_max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            bbox_min = Vec2::new(bbox_min.x.min(v.pos.x), bbox_min.y.min(v.pos.y));
            bbox_max = Vec2::new(bbox_max.x.max(v.pos.x), bbox_max.y.max(v.pos.y));
        }
        self.bbox_min = bbox_min;
        self.bbox_max = bbox_max;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionMode {
    Eulerian,
    Lagrangian,
    Smoothed,
}

/// Kinematic constraint a boundary vertex picks up from the walls it sits on.
#[derive(Debug, Clone, Copy)]
pub enum VertexConstraint {
    Free,
    /// Motion restricted to the given unit tangent (single wall).
    Line(Vec2),
    /// Wall corner: no motion.
    Pinned,
}

impl Mesh {
    /// Grid velocity of each vertex for one step. Lagrangian motion follows
    /// the nodal contact velocities; smoothed motion runs `passes` Jacobi
    /// averaging sweeps of those velocities over interior vertices before
    /// applying them. Wall constraints are applied last.
    pub fn vertex_velocities(
        &self,
        mode: MotionMode,
        passes: usize,
        u_star: &[Vec2],
        constraints: &[VertexConstraint],
    ) -> Vec<Vec2> {
        let nv = self.vertices.len();
        let mut w: Vec<Vec2> = match mode {
            MotionMode::Eulerian => return vec![Vec2::default(); nv],
            MotionMode::Lagrangian => u_star.to_vec(),
            MotionMode::Smoothed => {
                let mut cur = u_star.to_vec();
                let mut next = vec![Vec2::default(); nv];
                for _ in 0..passes {
                    for q in 0..nv {
                        if self.vertices[q].on_boundary {
                            next[q] = cur[q];
                        } else {
                            let mut acc = Vec2::default();
                            let ks = &self.edges_of_vertex[q];
                            for &k in ks {
                                let e = &self.edges[k];
                                let other = if e.verts[0] == q { e.verts[1] } else { e.verts[0] };
                                acc += cur[other];
                            }
                            next[q] = acc / ks.len() as f64;
                        }
                    }
                    std::mem::swap(&mut cur, &mut next);
                }
                cur
            }
        };
        for q in 0..nv {
            match constraints[q] {
                VertexConstraint::Free => {}
                VertexConstraint::Line(t) => w[q] = t * w[q].dot(t),
                VertexConstraint::Pinned => w[q] = Vec2::default(),
            }
        }
        w
    }
}

/// Structured quad mesh on `[x0,x1] x [y0,y1]`, optionally with interior
/// vertices jittered by `perturb` times the local cell size.
pub fn generate_rect(
    nx: usize,
    ny: usize,
    domain: [f64; 4],
    perturb: f64,
    seed: u64,
) -> SimResult<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(SimError::validation("mesh.nx/ny", "resolution must be positive"));
    }
    let [x0, x1, y0, y1] = domain;
    if !(x1 > x0 && y1 > y0) {
        return Err(SimError::validation("mesh.domain", "domain extents must be increasing"));
    }
    let dx = (x1 - x0) / nx as f64;
    let dy = (y1 - y0) / ny as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let mut p = Vec2::new(x0 + i as f64 * dx, y0 + j as f64 * dy);
            if perturb > 0.0 && i > 0 && i < nx && j > 0 && j < ny {
                p.x += perturb * dx * rng.gen_range(-0.5..0.5);
                p.y += perturb * dy * rng.gen_range(-0.5..0.5);
            }
            positions.push(p);
        }
    }
    let vid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push(vec![vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)]);
        }
    }
    Mesh::build(positions, cells)
}

/// Reads the plain-text node/element format: a `NVERTS NCELLS` header, one
/// `x y` line per vertex, then one `n i1 ... in` line per cell.
pub fn read_mesh(text: &str) -> SimResult<Mesh> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
    let header = lines.next().ok_or_else(|| SimError::Parse("empty mesh file".into()))?;
    let mut it = header.split_whitespace();
    let nv: usize = parse_tok(it.next(), "vertex count")?;
    let nc: usize = parse_tok(it.next(), "cell count")?;
    let mut positions = Vec::with_capacity(nv);
    for k in 0..nv {
        let line = lines.next().ok_or_else(|| SimError::Parse(format!("missing vertex line {k}")))?;
        let mut it = line.split_whitespace();
        let x: f64 = parse_tok(it.next(), "vertex x")?;
        let y: f64 = parse_tok(it.next(), "vertex y")?;
        positions.push(Vec2::new(x, y));
    }
    let mut cells = Vec::with_capacity(nc);
    for k in 0..nc {
        let line = lines.next().ok_or_else(|| SimError::Parse(format!("missing cell line {k}")))?;
        let mut it = line.split_whitespace();
        let n: usize = parse_tok(it.next(), "cell vertex count")?;
        let mut verts = Vec::with_capacity(n);
        for _ in 0..n {
            verts.push(parse_tok(it.next(), "cell vertex index")?);
        }
        cells.push(verts);
    }
    Mesh::build(positions, cells)
}

pub fn write_mesh(mesh: &Mesh) -> String {
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", mesh.vertices.len(), mesh.cells.len()));
    for v in &mesh.vertices {
        out.push_str(&format!("{} {}\n", v.pos.x, v.pos.y));
    }
    for c in &mesh.cells {
        out.push_str(&c.verts.len().to_string());
        for &q in &c.verts {
            out.push(' ');
            out.push_str(&q.to_string());
        }
        out.push('\n');
    }
    out
}

fn parse_tok<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> SimResult<T> {
    tok.ok_or_else(|| SimError::Parse(format!("missing {what}")))?
        .parse()
        .map_err(|_| SimError::Parse(format!("invalid {what}")))
}
