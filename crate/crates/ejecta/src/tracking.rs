//! Host-cell location for particles: a crossing-number containment test
//! with deterministic on-boundary tie-breaks, a hint-based ring search, and
//! the exhaustive scan used as its oracle.

use crate::error::{SimError, SimResult};
use crate::geom::Vec2;
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Containment {
    Inside,
    OnBoundary,
    Outside,
}

/// Crossing-number test against one cell. Points exactly on an edge or
/// vertex report `OnBoundary`; ownership of such points is decided by the
/// smallest-index rule in [`point_in_cell`].
pub fn containment(mesh: &Mesh, cell: usize, x: Vec2) -> Containment {
    let verts = &mesh.cells[cell].verts;
    let n = verts.len();
    let mut crossings = 0u32;
    for i in 0..n {
        let va = verts[i];
        let vb = verts[(i + 1) % n];
        // Canonical endpoint order: both cells sharing an edge must
        // evaluate bit-identical expressions, or they can disagree about
        // points within rounding of the edge.
        let (lo, hi) = if va < vb { (va, vb) } else { (vb, va) };
        let a = mesh.vertices[lo].pos;
        let b = mesh.vertices[hi].pos;
        // Exactly on the closed segment?
        let d = b - a;
        let r = x - a;
        if d.cross(r) == 0.0 {
            let t = r.dot(d);
            if t >= 0.0 && t <= d.norm_sq() {
                return Containment::OnBoundary;
            }
        }
        // Half-open vertical interval rule keeps the count consistent
        // across cells sharing the edge.
        if (a.y > x.y) != (b.y > x.y) {
            let t = (x.y - a.y) / (b.y - a.y);
            let cx = a.x + t * (b.x - a.x);
            if cx > x.x {
                crossings += 1;
            }
        }
    }
    if crossings % 2 == 1 {
        Containment::Inside
    } else {
        Containment::Outside
    }
}

/// Whether `cell` owns the point: strictly inside, or on its boundary with
/// no smaller-index cell also touching the point.
pub fn point_in_cell(mesh: &Mesh, cell: usize, x: Vec2) -> bool {
    match containment(mesh, cell, x) {
        Containment::Inside => true,
        Containment::Outside => false,
        Containment::OnBoundary => {
            // Only cells adjacent through the touched edges or vertices can
            // also claim the point; scan the neighborhood.
            for &d in &mesh.neighbors_of_cell[cell] {
                if d < cell && containment(mesh, d, x) != Containment::Outside {
                    return false;
                }
            }
            for &q in &mesh.cells[cell].verts {
                for &d in &mesh.cells_of_vertex[q] {
                    if d < cell && containment(mesh, d, x) != Containment::Outside {
                        return false;
                    }
                }
            }
            true
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocateResult {
    /// `None` means the point left the domain.
    pub cell: Option<usize>,
    /// Number of cells inspected.
    pub hops: usize,
}

/// Breadth-first ring search from the hint cell. Within the ring where the
/// point is first found, the smallest-index owner wins, matching the
/// exhaustive scan. Exhausting `max_rings` rings while the point is still
/// inside the domain indicates a time-step violation and is an error.
pub fn locate(mesh: &Mesh, x: Vec2, hint: usize, max_rings: usize) -> SimResult<LocateResult> {
    let mut visited = vec![false; mesh.cells.len()];
    let mut ring: Vec<usize> = vec![hint];
    visited[hint] = true;
    let mut hops = 0;
    for _ in 0..=max_rings {
        let mut hit: Option<usize> = None;
        let mut boundary_hit: Option<usize> = None;
        for &c in &ring {
            hops += 1;
            match containment(mesh, c, x) {
                Containment::Inside => hit = Some(hit.map_or(c, |h: usize| h.min(c))),
                Containment::OnBoundary => {
                    boundary_hit = Some(boundary_hit.map_or(c, |h: usize| h.min(c)))
                }
                Containment::Outside => {}
            }
        }
        if let Some(c) = hit {
            return Ok(LocateResult { cell: Some(c), hops });
        }
        if let Some(c) = boundary_hit {
            // An on-boundary point may belong to a smaller-index cell one
            // ring further out; point_in_cell resolves the tie exactly.
            let owner = owner_of_boundary_point(mesh, c, x);
            return Ok(LocateResult { cell: Some(owner), hops });
        }
        let mut next = Vec::new();
        for &c in &ring {
            for &d in &mesh.neighbors_of_cell[c] {
                if !visited[d] {
                    visited[d] = true;
                    next.push(d);
                }
            }
        }
        next.sort_unstable();
        ring = next;
        if ring.is_empty() {
            break;
        }
    }
    // Ring budget exhausted: decide between a genuine domain exit and a
    // lost particle with the exhaustive scan.
    match brute_force_locate(mesh, x) {
        None => Ok(LocateResult { cell: None, hops }),
        Some(c) => Err(SimError::LostParticle {
            detail: format!(
                "point ({}, {}) is in cell {c} but beyond {max_rings} rings of hint {hint}",
                x.x, x.y
            ),
        }),
    }
}

fn owner_of_boundary_point(mesh: &Mesh, touched: usize, x: Vec2) -> usize {
    let mut owner = touched;
    for &q in &mesh.cells[touched].verts {
        for &d in &mesh.cells_of_vertex[q] {
            if d < owner && containment(mesh, d, x) != Containment::Outside {
                owner = d;
            }
        }
    }
    for &d in &mesh.neighbors_of_cell[touched] {
        if d < owner && containment(mesh, d, x) != Containment::Outside {
            owner = d;
        }
    }
    owner
}

/// Linear scan over all cells with the same tie-break as [`locate`].
pub fn brute_force_locate(mesh: &Mesh, x: Vec2) -> Option<usize> {
    let mut boundary_hit = None;
    for c in 0..mesh.cells.len() {
        match containment(mesh, c, x) {
            Containment::Inside => return Some(c),
            Containment::OnBoundary => {
                if boundary_hit.is_none() {
                    boundary_hit = Some(c);
                }
            }
            Containment::Outside => {}
        }
    }
    boundary_hit
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_rect;
    use rand::{Rng, SeedableRng};

    #[test]
    fn centroid_is_inside() {
        let m = generate_rect(6, 4, [0.0, 1.0, 0.0, 1.0], 0.25, 5).unwrap();
        for c in 0..m.cells.len() {
            assert_eq!(containment(&m, c, m.cells[c].centroid), Containment::Inside);
            assert!(point_in_cell(&m, c, m.cells[c].centroid));
        }
    }

    #[test]
    fn far_point_is_outside() {
        let m = generate_rect(4, 4, [0.0, 1.0, 0.0, 1.0], 0.0, 0).unwrap();
        assert_eq!(containment(&m, 0, Vec2::new(5.0, 5.0)), Containment::Outside);
        assert_eq!(brute_force_locate(&m, Vec2::new(5.0, 5.0)), None);
        assert_eq!(brute_force_locate(&m, Vec2::new(-0.1, 0.5)), None);
    }

    #[test]
    fn shared_edge_goes_to_smaller_index() {
        let m = generate_rect(4, 2, [0.0, 1.0, 0.0, 0.5], 0.0, 0).unwrap();
        // Point exactly on the vertical edge between cells 2 and 3.
        let x = Vec2::new(0.75, 0.125);
        assert_eq!(containment(&m, 2, x), Containment::OnBoundary);
        assert_eq!(containment(&m, 3, x), Containment::OnBoundary);
        assert!(point_in_cell(&m, 2, x));
        assert!(!point_in_cell(&m, 3, x));
        assert_eq!(brute_force_locate(&m, x), Some(2));
        // The hint being the larger cell must not change the owner.
        assert_eq!(locate(&m, x, 3, 3).unwrap().cell, Some(2));
    }

    #[test]
    fn mesh_vertex_goes_to_smallest_incident_cell() {
        let m = generate_rect(4, 4, [0.0, 1.0, 0.0, 1.0], 0.0, 0).unwrap();
        // Interior vertex shared by cells 0, 1, 4, 5.
        let x = m.vertices[6].pos;
        let owners: Vec<usize> =
            (0..m.cells.len()).filter(|&c| point_in_cell(&m, c, x)).collect();
        assert_eq!(owners, vec![0]);
        assert_eq!(brute_force_locate(&m, x), Some(0));
        assert_eq!(locate(&m, x, 5, 3).unwrap().cell, Some(0));
    }

    #[test]
    fn locate_at_host_centroid_is_one_hop() {
        let m = generate_rect(5, 5, [0.0, 1.0, 0.0, 1.0], 0.2, 8).unwrap();
        let r = locate(&m, m.cells[12].centroid, 12, 3).unwrap();
        assert_eq!(r.cell, Some(12));
        assert_eq!(r.hops, 1);
    }

    #[test]
    fn locate_in_neighbor_matches_brute_force() {
        let m = generate_rect(8, 8, [0.0, 1.0, 0.0, 1.0], 0.2, 21).unwrap();
        let hint = 27;
        for &d in &m.neighbors_of_cell[hint] {
            let x = m.cells[d].centroid;
            let r = locate(&m, x, hint, 3).unwrap();
            assert_eq!(r.cell, Some(d));
            assert_eq!(r.cell, brute_force_locate(&m, x));
            assert!(r.hops <= 1 + m.neighbors_of_cell[hint].len());
        }
    }

    #[test]
    fn point_through_boundary_is_outside() {
        let m = generate_rect(4, 4, [0.0, 1.0, 0.0, 1.0], 0.0, 0).unwrap();
        let r = locate(&m, Vec2::new(0.125, -0.2), 0, 3).unwrap();
        assert_eq!(r.cell, None);
    }

    #[test]
    fn far_interior_point_is_lost_not_outside() {
        let m = generate_rect(30, 3, [0.0, 10.0, 0.0, 1.0], 0.0, 0).unwrap();
        // In-domain point many rings away from the hint.
        let err = locate(&m, m.cells[29].centroid, 0, 3).unwrap_err();
        assert!(matches!(err, SimError::LostParticle { .. }));
    }

    #[test]
    fn oracle_equivalence_random_displacements() {
        for (mesh, seed) in [
            (generate_rect(12, 9, [0.0, 1.2, 0.0, 0.9], 0.0, 0).unwrap(), 100u64),
            (generate_rect(12, 9, [0.0, 1.2, 0.0, 0.9], 0.2, 31).unwrap(), 200u64),
        ] {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..4000 {
                let hint = rng.gen_range(0..mesh.cells.len());
                let lam = mesh.cells[hint].inradius;
                // Random point near the hint cell, displaced by at most the
                // cell length scale.
                let base = mesh.cells[hint].centroid;
                let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let x = base
                    + Vec2::new(ang.cos(), ang.sin()) * (rng.gen_range(0.0..1.0) * lam)
                    + Vec2::new(rng.gen_range(-lam..lam), rng.gen_range(-lam..lam));
                let expect = brute_force_locate(&mesh, x);
                let got = locate(&mesh, x, hint, 3).unwrap();
                assert_eq!(got.cell, expect, "disagreement at ({}, {})", x.x, x.y);
            }
        }
    }

    #[test]
    fn partition_on_edges_and_vertices() {
        // Sampled points on shared edges and at vertices map to exactly one
        // owner under the tie-break.
        let m = generate_rect(7, 5, [0.0, 1.4, 0.0, 1.0], 0.2, 77).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..300 {
            let k = rng.gen_range(0..m.edges.len());
            let e = &m.edges[k];
            let t: f64 = rng.gen_range(0.0..1.0);
            let a = m.vertices[e.verts[0]].pos;
            let b = m.vertices[e.verts[1]].pos;
            let x = a + (b - a) * t;
            let owners: Vec<usize> =
                (0..m.cells.len()).filter(|&c| point_in_cell(&m, c, x)).collect();
            assert_eq!(owners.len(), 1, "edge point ({}, {})", x.x, x.y);
        }
        for q in 0..m.vertices.len() {
            let x = m.vertices[q].pos;
            let owners: Vec<usize> =
                (0..m.cells.len()).filter(|&c| point_in_cell(&m, c, x)).collect();
            assert_eq!(owners.len(), 1, "vertex {q}");
            assert_eq!(owners[0], *m.cells_of_vertex[q].iter().min().unwrap());
        }
    }
}
