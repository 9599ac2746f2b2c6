//! Uniform cell-centred grids over configuration space.
//!
//! Every axis is split into `points` cells of width `extent / points`; field
//! values live at cell centres. Flat indices are row-major: the last axis
//! varies fastest.

use crate::error::{Error, Result};

/// Largest configuration-space dimension handled at desk scale.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Boundary {
    #[default]
    Periodic,
    Reflecting,
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Boundary::Periodic => write!(f, "periodic"),
            Boundary::Reflecting => write!(f, "reflecting"),
        }
    }
}

impl std::str::FromStr for Boundary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(Boundary::Periodic),
            "reflecting" => Ok(Boundary::Reflecting),
            other => Err(Error::InvalidSpace(format!("unknown boundary `{other}`"))),
        }
    }
}

/// Configuration space: a box with a diagonal metric `gamma_ab = delta_ab / sigma_a^2`.
///
/// Axes are grouped into particles of `particle_dim` consecutive axes each;
/// all axes of one particle share a single `sigma_sq`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSpace {
    extents: Vec<f64>,
    points: Vec<usize>,
    lower: Vec<f64>,
    boundary: Boundary,
    sigma_sq: Vec<f64>,
    particle_dim: usize,
    strides: Vec<usize>,
}

impl ConfigSpace {
    /// Box centred on the origin, one particle spanning every axis.
    pub fn new(
        extents: Vec<f64>,
        points: Vec<usize>,
        boundary: Boundary,
        sigma_sq: Vec<f64>,
    ) -> Result<Self> {
        let lower = extents.iter().map(|l| -0.5 * l).collect();
        let particle_dim = extents.len();
        Self::with_layout(extents, points, lower, boundary, sigma_sq, particle_dim)
    }

    /// Isotropic 1D box on `[-extent/2, extent/2)` with `sigma_sq = 1`.
    pub fn line(extent: f64, points: usize, boundary: Boundary) -> Result<Self> {
        Self::new(vec![extent], vec![points], boundary, vec![1.0])
    }

    pub fn with_layout(
        extents: Vec<f64>,
        points: Vec<usize>,
        lower: Vec<f64>,
        boundary: Boundary,
        sigma_sq: Vec<f64>,
        particle_dim: usize,
    ) -> Result<Self> {
        let dim = extents.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidSpace(format!(
                "dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        if points.len() != dim || lower.len() != dim || sigma_sq.len() != dim {
            return Err(Error::InvalidSpace(
                "extents, points, lower and sigma_sq must have one entry per axis".into(),
            ));
        }
        if let Some(l) = extents.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidSpace(format!("extent must be positive, got {l}")));
        }
        if let Some(n) = points.iter().find(|n| **n < 3) {
            return Err(Error::InvalidSpace(format!("need at least 3 points per axis, got {n}")));
        }
        if lower.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidSpace("lower corner must be finite".into()));
        }
        if let Some(s) = sigma_sq.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidSpace(format!("sigma_sq must be positive, got {s}")));
        }
        if particle_dim == 0 || dim % particle_dim != 0 {
            return Err(Error::InvalidSpace(format!(
                "particle_dim {particle_dim} does not divide dimension {dim}"
            )));
        }
        for chunk in sigma_sq.chunks(particle_dim) {
            if chunk.iter().any(|s| *s != chunk[0]) {
                return Err(Error::InvalidSpace(
                    "axes of one particle must share one sigma_sq".into(),
                ));
            }
        }
        let mut strides = vec![1usize; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * points[a + 1];
        }
        Ok(Self {
            extents,
            points,
            lower,
            boundary,
            sigma_sq,
            particle_dim,
            strides,
        })
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.extents[axis]
    }

    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn sigma_sq(&self) -> &[f64] {
        &self.sigma_sq
    }

    pub fn particle_dim(&self) -> usize {
        self.particle_dim
    }

    pub fn particles(&self) -> usize {
        self.dim() / self.particle_dim
    }

    pub fn particle_of_axis(&self, axis: usize) -> usize {
        axis / self.particle_dim
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / self.points[axis] as f64
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        self.extents.iter().product()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Cell-centre coordinate of cell `i` along `axis`.
    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        self.lower[axis] + (i as f64 + 0.5) * self.spacing(axis)
    }

    /// Position of the face between cell `i` and cell `i + 1` along `axis`.
    pub fn face_coordinate(&self, axis: usize, i: usize) -> f64 {
        self.lower[axis] + (i as f64 + 1.0) * self.spacing(axis)
    }

    pub fn axis_index(&self, flat: usize, axis: usize) -> usize {
        (flat / self.strides[axis]) % self.points[axis]
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        (0..self.dim()).map(|a| self.axis_index(flat, a)).collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.strides)
            .map(|(i, s)| i * s)
            .sum()
    }

    /// Cell-centre coordinates of a flat index.
    pub fn position(&self, flat: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|a| self.coordinate(a, self.axis_index(flat, a)))
            .collect()
    }

    /// Neighbouring cell one step along `axis` (`forward` = +1). `None` at a
    /// reflecting wall.
    pub fn neighbor(&self, flat: usize, axis: usize, forward: bool) -> Option<usize> {
        let i = self.axis_index(flat, axis);
        let n = self.points[axis];
        let s = self.strides[axis];
        if forward {
            if i + 1 < n {
                Some(flat + s)
            } else if self.boundary == Boundary::Periodic {
                Some(flat + s - n * s)
            } else {
                None
            }
        } else if i > 0 {
            Some(flat - s)
        } else if self.boundary == Boundary::Periodic {
            Some(flat + (n - 1) * s)
        } else {
            None
        }
    }

    /// Signed displacement `to - from` along `axis`, using the minimum-image
    /// convention on periodic grids.
    pub fn displacement(&self, axis: usize, from: f64, to: f64) -> f64 {
        let d = to - from;
        match self.boundary {
            Boundary::Periodic => {
                let l = self.extents[axis];
                d - l * (d / l).round()
            }
            Boundary::Reflecting => d,
        }
    }

    /// Displacement between two cells in grid units (minimum image on
    /// periodic grids).
    pub fn cell_offset(&self, axis: usize, from: usize, to: usize) -> f64 {
        let n = self.points[axis] as i64;
        let mut d = self.axis_index(to, axis) as i64 - self.axis_index(from, axis) as i64;
        if self.boundary == Boundary::Periodic {
            if 2 * d > n {
                d -= n;
            } else if 2 * d < -n {
                d += n;
            }
        }
        d as f64 * self.spacing(axis)
    }

    /// Metric length `gamma_ab dx^a dx^b` of a displacement.
    pub fn metric_step_sq(&self, dx: &[f64]) -> f64 {
        dx.iter()
            .zip(&self.sigma_sq)
            .map(|(d, s)| d * d / s)
            .sum()
    }

    /// Fold a coordinate back into the box (wrap or mirror).
    pub fn fold(&self, axis: usize, x: f64) -> f64 {
        let lo = self.lower[axis];
        let l = self.extents[axis];
        match self.boundary {
            Boundary::Periodic => {
                let mut y = (x - lo).rem_euclid(l);
                if y >= l {
                    y = 0.0;
                }
                lo + y
            }
            Boundary::Reflecting => {
                let period = 2.0 * l;
                let mut y = (x - lo).rem_euclid(period);
                if y > l {
                    y = period - y;
                }
                lo + y.min(l * (1.0 - f64::EPSILON))
            }
        }
    }

    /// Cell containing a coordinate already inside the box.
    pub fn cell_of(&self, axis: usize, x: f64) -> usize {
        let i = ((x - self.lower[axis]) / self.spacing(axis)).floor();
        (i.max(0.0) as usize).min(self.points[axis] - 1)
    }

    pub fn cell_of_point(&self, x: &[f64]) -> usize {
        (0..self.dim())
            .map(|a| self.cell_of(a, x[a]) * self.strides[a])
            .sum()
    }

    /// Volume element `sqrt(det gamma)` of the metric.
    pub fn metric_volume_factor(&self) -> f64 {
        self.sigma_sq.iter().map(|s| 1.0 / s.sqrt()).product()
    }

    pub fn require_same(&self, other: &ConfigSpace) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::SpaceMismatch)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_is_extent_over_points() {
        let s = ConfigSpace::new(vec![2.0, 3.0], vec![4, 6], Boundary::Periodic, vec![1.0, 1.0])
            .unwrap();
        assert_eq!(s.spacing(0), 0.5);
        assert_eq!(s.spacing(1), 0.5);
        assert_eq!(s.len(), 24);
        assert_eq!(s.coordinate(0, 0), -0.75);
    }

    #[test]
    fn flat_and_multi_index_agree() {
        let s = ConfigSpace::new(
            vec![1.0, 1.0, 1.0],
            vec![3, 4, 5],
            Boundary::Periodic,
            vec![1.0; 3],
        )
        .unwrap();
        for k in 0..s.len() {
            assert_eq!(s.flat_index(&s.multi_index(k)), k);
        }
        assert_eq!(s.stride(2), 1);
        assert_eq!(s.stride(0), 20);
    }

    #[test]
    fn neighbors_wrap_or_stop() {
        let p = ConfigSpace::line(1.0, 5, Boundary::Periodic).unwrap();
        assert_eq!(p.neighbor(4, 0, true), Some(0));
        assert_eq!(p.neighbor(0, 0, false), Some(4));
        let r = ConfigSpace::line(1.0, 5, Boundary::Reflecting).unwrap();
        assert_eq!(r.neighbor(4, 0, true), None);
        assert_eq!(r.neighbor(0, 0, false), None);
    }

    #[test]
    fn minimum_image_offsets() {
        let p = ConfigSpace::line(10.0, 10, Boundary::Periodic).unwrap();
        assert_eq!(p.cell_offset(0, 0, 9), -1.0);
        assert_eq!(p.cell_offset(0, 9, 0), 1.0);
        assert!((p.displacement(0, 4.9, -4.9) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn fold_stays_inside() {
        let r = ConfigSpace::line(2.0, 8, Boundary::Reflecting).unwrap();
        assert!((r.fold(0, 1.25) - 0.75).abs() < 1e-12);
        assert!((r.fold(0, -1.5) + 0.5).abs() < 1e-12);
        let p = ConfigSpace::line(2.0, 8, Boundary::Periodic).unwrap();
        assert!((p.fold(0, 1.25) + 0.75).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(ConfigSpace::new(vec![1.0], vec![8], Boundary::Periodic, vec![0.0]).is_err());
        assert!(ConfigSpace::new(vec![1.0; 4], vec![8; 4], Boundary::Periodic, vec![1.0; 4]).is_err());
        // two 1D particles may differ; one 2D particle may not
        assert!(ConfigSpace::with_layout(
            vec![1.0, 1.0],
            vec![8, 8],
            vec![0.0, 0.0],
            Boundary::Periodic,
            vec![1.0, 2.0],
            1
        )
        .is_ok());
        assert!(ConfigSpace::new(vec![1.0, 1.0], vec![8, 8], Boundary::Periodic, vec![1.0, 2.0]).is_err());
    }
}
