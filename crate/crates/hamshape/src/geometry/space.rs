use std::collections::BTreeMap;
use std::sync::Arc;

use super::mesh::Mesh;
use crate::Vec2;

/// Polynomial degree of a Lagrange space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Degree {
    P1,
    P2,
}

impl Degree {
    pub fn dofs_per_element(self) -> usize {
        match self {
            Degree::P1 => 3,
            Degree::P2 => 6,
        }
    }
}

/// A scalar Lagrange finite-element space on a triangle mesh.
///
/// Dofs sit at vertices (P1) plus edge midpoints (P2) and are numbered by
/// lexicographic coordinate order (y, then x), which keeps matrix bandwidth
/// small on structured meshes and their submeshes. Local element order is
/// `[v0, v1, v2]` for P1 and `[v0, v1, v2, m01, m12, m20]` for P2.
pub struct FeSpace {
    pub mesh: Arc<Mesh>,
    pub degree: Degree,
    pub dof_coords: Vec<Vec2>,
    /// True for dofs lying on the mesh boundary.
    pub is_boundary_dof: Vec<bool>,
    /// Flat element connectivity with stride `degree.dofs_per_element()`.
    elem_dofs: Vec<u32>,
    /// Vertex index -> dof index (P1 and P2).
    pub vertex_dof: Vec<u32>,
    /// Edge (sorted vertex pair) -> dof index (P2 only).
    edge_dof: BTreeMap<(u32, u32), u32>,
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>, degree: Degree) -> Arc<FeSpace> {
        // Collect dof sites: vertices, then (P2) unique edge midpoints.
        let mut sites: Vec<(Vec2, bool, u32, (u32, u32))> = mesh
            .vertices
            .iter()
            .enumerate()
            .map(|(v, &p)| (p, true, v as u32, (0, 0)))
            .collect();
        let mut edges: BTreeMap<(u32, u32), Vec2> = BTreeMap::new();
        if degree == Degree::P2 {
            for t in &mesh.triangles {
                for e in 0..3 {
                    let (a, b) = (t[e], t[(e + 1) % 3]);
                    let key = (a.min(b), a.max(b));
                    edges.entry(key).or_insert_with(|| {
                        (mesh.vertices[a as usize] + mesh.vertices[b as usize]) * 0.5
                    });
                }
            }
            for (&key, &mid) in &edges {
                sites.push((mid, false, 0, key));
            }
        }
        // Number dofs lexicographically by (y, x); grid coordinates and exact
        // midpoints make the comparison reproducible.
        let mut order: Vec<u32> = (0..sites.len() as u32).collect();
        order.sort_by(|&a, &b| {
            let (pa, pb) = (sites[a as usize].0, sites[b as usize].0);
            pa.y.total_cmp(&pb.y).then(pa.x.total_cmp(&pb.x))
        });
        let mut dof_coords = vec![Vec2::ZERO; sites.len()];
        let mut vertex_dof = vec![u32::MAX; mesh.vertices.len()];
        let mut edge_dof = BTreeMap::new();
        for (dof, &site) in order.iter().enumerate() {
            let (p, is_vertex, v, key) = sites[site as usize];
            dof_coords[dof] = p;
            if is_vertex {
                vertex_dof[v as usize] = dof as u32;
            } else {
                edge_dof.insert(key, dof as u32);
            }
        }

        let dpe = degree.dofs_per_element();
        let mut elem_dofs = Vec::with_capacity(dpe * mesh.triangles.len());
        for t in &mesh.triangles {
            for &v in t {
                elem_dofs.push(vertex_dof[v as usize]);
            }
            if degree == Degree::P2 {
                for e in 0..3 {
                    let (a, b) = (t[e], t[(e + 1) % 3]);
                    elem_dofs.push(edge_dof[&(a.min(b), a.max(b))]);
                }
            }
        }

        let mut is_boundary_dof = vec![false; sites.len()];
        for &(a, b, _) in &mesh.boundary_edges {
            is_boundary_dof[vertex_dof[a as usize] as usize] = true;
            is_boundary_dof[vertex_dof[b as usize] as usize] = true;
            if degree == Degree::P2 {
                is_boundary_dof[edge_dof[&(a.min(b), a.max(b))] as usize] = true;
            }
        }

        Arc::new(FeSpace { mesh, degree, dof_coords, is_boundary_dof, elem_dofs, vertex_dof, edge_dof })
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_coords.len()
    }

    pub fn dofs_per_element(&self) -> usize {
        self.degree.dofs_per_element()
    }

    pub fn element_dofs(&self, tri: usize) -> &[u32] {
        let dpe = self.dofs_per_element();
        &self.elem_dofs[tri * dpe..(tri + 1) * dpe]
    }

    pub fn edge_midpoint_dof(&self, a: u32, b: u32) -> Option<u32> {
        self.edge_dof.get(&(a.min(b), a.max(b))).copied()
    }

    /// Basis values at barycentric coordinates, in local element order.
    pub fn basis_values(&self, bary: [f64; 3]) -> [f64; 6] {
        let [l0, l1, l2] = bary;
        match self.degree {
            Degree::P1 => [l0, l1, l2, 0.0, 0.0, 0.0],
            Degree::P2 => [
                l0 * (2.0 * l0 - 1.0),
                l1 * (2.0 * l1 - 1.0),
                l2 * (2.0 * l2 - 1.0),
                4.0 * l0 * l1,
                4.0 * l1 * l2,
                4.0 * l2 * l0,
            ],
        }
    }

    /// Basis gradients at barycentric coordinates inside `tri`, local order.
    pub fn basis_gradients(&self, tri: usize, bary: [f64; 3]) -> [Vec2; 6] {
        let g = &self.mesh.tri_geom[tri].grad_lambda;
        let [l0, l1, l2] = bary;
        match self.degree {
            Degree::P1 => [g[0], g[1], g[2], Vec2::ZERO, Vec2::ZERO, Vec2::ZERO],
            Degree::P2 => [
                g[0] * (4.0 * l0 - 1.0),
                g[1] * (4.0 * l1 - 1.0),
                g[2] * (4.0 * l2 - 1.0),
                (g[0] * l1 + g[1] * l0) * 4.0,
                (g[1] * l2 + g[2] * l1) * 4.0,
                (g[2] * l0 + g[0] * l2) * 4.0,
            ],
        }
    }
}
