use std::collections::BTreeMap;

use super::locate::Locator;
use super::GeometryError;
use crate::Vec2;

/// Axis-aligned rectangle, used for the computational box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Rect { x_min, x_max, y_min, y_max }
    }

    /// The square ]-half, half[².
    pub fn centered_square(half: f64) -> Self {
        Rect::new(-half, half, -half, half)
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }
}

/// Per-triangle affine data precomputed at mesh construction.
#[derive(Clone, Copy, Debug)]
pub struct TriangleGeometry {
    /// Gradients of the three barycentric coordinates (constant per triangle).
    pub grad_lambda: [Vec2; 3],
    pub area: f64,
}

/// A conforming triangle mesh: either a structured rectangle mesh or a submesh
/// of one. All derived data (boundary edges, per-triangle affine maps, the
/// point locator) is built once at construction.
pub struct Mesh {
    pub bounds: Rect,
    /// Divisions per side of the generating structured mesh.
    pub n_per_side: usize,
    pub vertices: Vec<Vec2>,
    /// Vertex index triples, counter-clockwise.
    pub triangles: Vec<[u32; 3]>,
    /// Edges incident to exactly one triangle, as (vertex, vertex, owner
    /// triangle), oriented as in the owner and sorted by vertex pair.
    pub boundary_edges: Vec<(u32, u32, u32)>,
    pub tri_geom: Vec<TriangleGeometry>,
    locator: Locator,
}

impl Mesh {
    /// Structured mesh over `bounds` with `n` divisions per side. Every cell is
    /// split along its lower-left to upper-right diagonal, so there are
    /// `(n+1)²` vertices and `2n²` triangles.
    pub fn rectangle(bounds: Rect, n: usize) -> Result<Mesh, GeometryError> {
        if !(bounds.width() > 0.0 && bounds.height() > 0.0) || !bounds.width().is_finite() {
            return Err(GeometryError::InvalidBounds(format!("{bounds:?}")));
        }
        if n == 0 {
            return Err(GeometryError::InvalidDivisions(n));
        }
        let hx = bounds.width() / n as f64;
        let hy = bounds.height() / n as f64;
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                // The last row/column lands exactly on the bounds.
                let x = if i == n { bounds.x_max } else { bounds.x_min + i as f64 * hx };
                let y = if j == n { bounds.y_max } else { bounds.y_min + j as f64 * hy };
                vertices.push(Vec2::new(x, y));
            }
        }
        let v = |i: usize, j: usize| (j * (n + 1) + i) as u32;
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v01, v11) = (v(i, j), v(i + 1, j), v(i, j + 1), v(i + 1, j + 1));
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Ok(Mesh::from_parts(bounds, n, vertices, triangles))
    }

    /// Assembles derived data for an already-consistent vertex/triangle list.
    pub(crate) fn from_parts(
        bounds: Rect,
        n_per_side: usize,
        vertices: Vec<Vec2>,
        triangles: Vec<[u32; 3]>,
    ) -> Mesh {
        let tri_geom: Vec<TriangleGeometry> = triangles
            .iter()
            .map(|t| {
                let [p0, p1, p2] =
                    [vertices[t[0] as usize], vertices[t[1] as usize], vertices[t[2] as usize]];
                let twice_area = (p1 - p0).cross(p2 - p0);
                assert!(twice_area > 0.0, "triangle {t:?} is degenerate or clockwise");
                TriangleGeometry {
                    grad_lambda: [
                        (p2 - p1).rot90() / twice_area,
                        (p0 - p2).rot90() / twice_area,
                        (p1 - p0).rot90() / twice_area,
                    ],
                    area: 0.5 * twice_area,
                }
            })
            .collect();

        // An edge incident to exactly one triangle is a boundary edge. The
        // BTreeMap keeps the listing deterministic.
        let mut edge_use: BTreeMap<(u32, u32), (u32, u32, u32, u32)> = BTreeMap::new();
        for (k, t) in triangles.iter().enumerate() {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                edge_use
                    .entry((a.min(b), a.max(b)))
                    .and_modify(|entry| entry.3 += 1)
                    .or_insert((a, b, k as u32, 1));
            }
        }
        let boundary_edges: Vec<(u32, u32, u32)> = edge_use
            .values()
            .filter(|&&(_, _, _, count)| count == 1)
            .map(|&(a, b, k, _)| (a, b, k))
            .collect();

        let locator = Locator::build(bounds, &vertices, &triangles);
        Mesh { bounds, n_per_side, vertices, triangles, boundary_edges, tri_geom, locator }
    }

    /// Containing triangle and barycentric coordinates, or `None` outside the
    /// mesh. Ties on shared edges go to the lowest triangle index.
    pub fn locate(&self, p: Vec2) -> Option<(usize, [f64; 3])> {
        self.locator.locate(self, p)
    }

    /// Largest cell dimension of the generating structured grid.
    pub fn h(&self) -> f64 {
        let n = self.n_per_side as f64;
        (self.bounds.width() / n).max(self.bounds.height() / n)
    }

    pub fn barycentric(&self, tri: usize, p: Vec2) -> [f64; 3] {
        let t = self.triangles[tri];
        let g = &self.tri_geom[tri];
        let d = p - self.vertices[t[0] as usize];
        let l1 = g.grad_lambda[1].dot(d);
        let l2 = g.grad_lambda[2].dot(d);
        [1.0 - l1 - l2, l1, l2]
    }

    pub fn triangle_vertices(&self, tri: usize) -> [Vec2; 3] {
        let t = self.triangles[tri];
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    pub fn point_at(&self, tri: usize, bary: [f64; 3]) -> Vec2 {
        let [p0, p1, p2] = self.triangle_vertices(tri);
        p0 * bary[0] + p1 * bary[1] + p2 * bary[2]
    }

    pub fn total_area(&self) -> f64 {
        self.tri_geom.iter().map(|g| g.area).sum()
    }
}

/// A mesh restricted to a triangle mask, keeping maps back to the parent.
pub struct SubMesh {
    pub mesh: Mesh,
    /// Parent triangle index of each submesh triangle.
    pub parent_triangles: Vec<u32>,
    /// Parent vertex index of each submesh vertex.
    pub parent_vertices: Vec<u32>,
}

/// Restricts `mesh` to the triangles with `mask[k]` set. Vertex and triangle
/// order follow the parent, so the result is deterministic.
pub fn extract_submesh(mesh: &Mesh, mask: &[bool]) -> Result<SubMesh, GeometryError> {
    assert_eq!(mask.len(), mesh.triangles.len());
    if !mask.iter().any(|&m| m) {
        return Err(GeometryError::EmptyMask);
    }
    let mut used = vec![false; mesh.vertices.len()];
    for (t, &m) in mesh.triangles.iter().zip(mask) {
        if m {
            for &v in t {
                used[v as usize] = true;
            }
        }
    }
    let mut new_id = vec![u32::MAX; mesh.vertices.len()];
    let mut parent_vertices = Vec::new();
    for (v, &u) in used.iter().enumerate() {
        if u {
            new_id[v] = parent_vertices.len() as u32;
            parent_vertices.push(v as u32);
        }
    }
    let vertices: Vec<Vec2> = parent_vertices.iter().map(|&v| mesh.vertices[v as usize]).collect();
    let mut triangles = Vec::new();
    let mut parent_triangles = Vec::new();
    for (k, t) in mesh.triangles.iter().enumerate() {
        if mask[k] {
            triangles.push([
                new_id[t[0] as usize],
                new_id[t[1] as usize],
                new_id[t[2] as usize],
            ]);
            parent_triangles.push(k as u32);
        }
    }
    let mesh = Mesh::from_parts(mesh.bounds, mesh.n_per_side, vertices, triangles);
    Ok(SubMesh { mesh, parent_triangles, parent_vertices })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn structured_mesh_counts() {
        let mesh = Mesh::rectangle(Rect::centered_square(3.0), 2).unwrap();
        assert_eq!(mesh.vertices.len(), 9);
        assert_eq!(mesh.triangles.len(), 8);
        assert!((mesh.total_area() - 36.0).abs() < 1e-12);

        let mesh = Mesh::rectangle(Rect::centered_square(3.0), 96).unwrap();
        assert_eq!(mesh.boundary_edges.len(), 4 * 96);
        assert!((mesh.total_area() - 36.0).abs() < 1e-9);
        // Every boundary edge lies on the box boundary.
        for &(a, b, _) in &mesh.boundary_edges {
            for v in [a, b] {
                let p = mesh.vertices[v as usize];
                let on = p.x == -3.0 || p.x == 3.0 || p.y == -3.0 || p.y == 3.0;
                assert!(on, "boundary edge vertex {p:?} not on the box");
            }
        }
    }

    #[test]
    fn degenerate_bounds_rejected() {
        assert!(Mesh::rectangle(Rect::new(0.0, 0.0, 0.0, 1.0), 4).is_err());
        assert!(Mesh::rectangle(Rect::centered_square(1.0), 0).is_err());
    }

    #[test]
    fn barycentric_roundtrip() {
        let mesh = Mesh::rectangle(Rect::centered_square(3.0), 7).unwrap();
        let p = Vec2::new(0.37, -1.21);
        let (tri, bary) = mesh.locate(p).unwrap();
        assert!(bary.iter().all(|&l| (-1e-12..=1.0 + 1e-12).contains(&l)));
        assert!(mesh.point_at(tri, bary).dist(p) < 1e-13);
    }

    #[test]
    fn submesh_of_left_half() {
        let mesh = Mesh::rectangle(Rect::centered_square(1.0), 4).unwrap();
        let mask: Vec<bool> = (0..mesh.triangles.len())
            .map(|k| {
                let [p0, p1, p2] = mesh.triangle_vertices(k);
                (p0.x + p1.x + p2.x) / 3.0 < 0.0
            })
            .collect();
        let sub = extract_submesh(&mesh, &mask).unwrap();
        assert_eq!(sub.mesh.triangles.len(), 16);
        assert!((sub.mesh.total_area() - 2.0).abs() < 1e-12);
        // 2x4 cells of side 0.5: perimeter edges = 2*(2+4) + boundary along the
        // split line shared with unmasked triangles.
        for &(a, b, k) in &sub.mesh.boundary_edges {
            assert!(sub.mesh.triangles[k as usize].contains(&a));
            assert!(sub.mesh.triangles[k as usize].contains(&b));
        }
    }
}
