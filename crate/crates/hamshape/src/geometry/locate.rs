use super::mesh::{Mesh, Rect};
use crate::Vec2;

/// Barycentric coordinates this far below zero still count as inside, so that
/// points on shared edges are found in every incident triangle and the lowest
/// triangle index wins.
const BARY_TOL: f64 = 1e-10;

/// Uniform background grid over the mesh bounds; each bin lists the triangles
/// whose bounding box overlaps it, in ascending index order.
pub struct Locator {
    nx: usize,
    ny: usize,
    origin: Vec2,
    inv_dx: f64,
    inv_dy: f64,
    bins: Vec<Vec<u32>>,
}

impl Locator {
    pub(crate) fn build(bounds: Rect, vertices: &[Vec2], triangles: &[[u32; 3]]) -> Locator {
        // Roughly one cell pair per bin for structured meshes.
        let nx = ((bounds.width() / bounds.height()).sqrt() * (triangles.len() as f64 / 2.0).sqrt())
            .round()
            .clamp(1.0, 4096.0) as usize;
        let ny = ((triangles.len() as f64 / 2.0) / nx as f64).ceil().clamp(1.0, 4096.0) as usize;
        let inv_dx = nx as f64 / bounds.width();
        let inv_dy = ny as f64 / bounds.height();
        let origin = Vec2::new(bounds.x_min, bounds.y_min);
        let mut bins = vec![Vec::new(); nx * ny];
        for (k, t) in triangles.iter().enumerate() {
            let ps = [
                vertices[t[0] as usize],
                vertices[t[1] as usize],
                vertices[t[2] as usize],
            ];
            let (mut x0, mut x1, mut y0, mut y1) = (ps[0].x, ps[0].x, ps[0].y, ps[0].y);
            for p in &ps[1..] {
                x0 = x0.min(p.x);
                x1 = x1.max(p.x);
                y0 = y0.min(p.y);
                y1 = y1.max(p.y);
            }
            let i0 = (((x0 - origin.x) * inv_dx).floor() as isize).clamp(0, nx as isize - 1) as usize;
            let i1 = (((x1 - origin.x) * inv_dx).floor() as isize).clamp(0, nx as isize - 1) as usize;
            let j0 = (((y0 - origin.y) * inv_dy).floor() as isize).clamp(0, ny as isize - 1) as usize;
            let j1 = (((y1 - origin.y) * inv_dy).floor() as isize).clamp(0, ny as isize - 1) as usize;
            for j in j0..=j1 {
                for i in i0..=i1 {
                    bins[j * nx + i].push(k as u32);
                }
            }
        }
        Locator { nx, ny, origin, inv_dx, inv_dy, bins }
    }

    /// Containing triangle (lowest index on ties) and its barycentric
    /// coordinates, or `None` if no triangle contains `p`.
    pub fn locate(&self, mesh: &Mesh, p: Vec2) -> Option<(usize, [f64; 3])> {
        let i = (((p.x - self.origin.x) * self.inv_dx).floor() as isize)
            .clamp(0, self.nx as isize - 1) as usize;
        let j = (((p.y - self.origin.y) * self.inv_dy).floor() as isize)
            .clamp(0, self.ny as isize - 1) as usize;
        if !mesh.bounds.contains(p) {
            return None;
        }
        for &k in &self.bins[j * self.nx + i] {
            let bary = mesh.barycentric(k as usize, p);
            if bary.iter().all(|&l| l >= -BARY_TOL) {
                return Some((k as usize, bary));
            }
        }
        None
    }
}
