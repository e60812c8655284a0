//! Observation regions: the subset E of the box where the distributed cost
//! term is integrated and where the projection pins the level set.
//!
//! The only non-empty shape is a disk. Integrals use a polar product rule
//! (Gauss–Legendre in radius, uniform in angle), which is effectively exact
//! for smooth integrands because the angular trapezoid is periodic. Extremum
//! reports additionally sample a ring just inside the rim, since Gauss nodes
//! stay O(1/n) away from it.

use crate::Vec2;

const RADIAL_POINTS: usize = 24;
const ANGULAR_POINTS: usize = 96;
const RIM_POINTS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RegionKind {
    Empty,
    Disk { center: Vec2, radius: f64 },
}

/// A fixed observation region with its quadrature and extremum sample sets.
#[derive(Clone, Debug)]
pub struct ObservationRegion {
    pub kind: RegionKind,
    quadrature: Vec<(Vec2, f64)>,
    extrema_samples: Vec<Vec2>,
}

impl ObservationRegion {
    pub fn empty() -> ObservationRegion {
        ObservationRegion { kind: RegionKind::Empty, quadrature: Vec::new(), extrema_samples: Vec::new() }
    }

    pub fn disk(center: Vec2, radius: f64) -> ObservationRegion {
        assert!(radius > 0.0 && radius.is_finite());
        let radial = crate::geometry::quadrature::gauss_legendre_on(RADIAL_POINTS, 0.0, radius);
        let dtheta = std::f64::consts::TAU / ANGULAR_POINTS as f64;
        let mut quadrature = Vec::with_capacity(RADIAL_POINTS * ANGULAR_POINTS);
        for &(r, wr) in &radial {
            for k in 0..ANGULAR_POINTS {
                let theta = k as f64 * dtheta;
                let p = center + Vec2::new(r * theta.cos(), r * theta.sin());
                quadrature.push((p, wr * r * dtheta));
            }
        }
        let mut extrema_samples: Vec<Vec2> = quadrature.iter().map(|&(p, _)| p).collect();
        extrema_samples.push(center);
        let rim = radius * (1.0 - 1e-10);
        for k in 0..RIM_POINTS {
            let theta = k as f64 * std::f64::consts::TAU / RIM_POINTS as f64;
            extrema_samples.push(center + Vec2::new(rim * theta.cos(), rim * theta.sin()));
        }
        ObservationRegion { kind: RegionKind::Disk { center, radius }, quadrature, extrema_samples }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self.kind, RegionKind::Empty)
    }

    /// Strict-interior indicator.
    pub fn contains(&self, p: Vec2) -> bool {
        match self.kind {
            RegionKind::Empty => false,
            RegionKind::Disk { center, radius } => (p - center).norm_sq() < radius * radius,
        }
    }

    /// Interior quadrature points and weights; empty for the empty region.
    pub fn quadrature(&self) -> &[(Vec2, f64)] {
        &self.quadrature
    }

    /// Sample set for extremum reports: quadrature points, the center, and a
    /// near-rim ring.
    pub fn extrema_samples(&self) -> &[Vec2] {
        &self.extrema_samples
    }

    pub fn integrate(&self, f: impl FnMut(Vec2) -> f64) -> f64 {
        let mut f = f;
        self.quadrature.iter().map(|&(p, w)| w * f(p)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_area_and_moments() {
        let e = ObservationRegion::disk(Vec2::new(0.3, -0.2), 0.5);
        let area: f64 = e.integrate(|_| 1.0);
        assert!((area - 0.25 * std::f64::consts::PI).abs() < 1e-12);
        // Second moment about the center: pi R^4 / 2.
        let m2 = e.integrate(|p| (p - Vec2::new(0.3, -0.2)).norm_sq());
        assert!((m2 - std::f64::consts::PI * 0.5f64.powi(4) / 2.0).abs() < 1e-12);
        // Every quadrature point is strictly inside.
        assert!(e.quadrature().iter().all(|&(p, _)| e.contains(p)));
    }

    #[test]
    fn empty_region_has_no_samples() {
        let e = ObservationRegion::empty();
        assert!(e.is_empty());
        assert_eq!(e.integrate(|_| 1.0), 0.0);
        assert!(!e.contains(Vec2::ZERO));
    }
}
