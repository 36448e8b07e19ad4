use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Axis-aligned box sampled on a regular lattice. Points run x fastest, then
/// y, then z. An axis with one sample sits at its `min` coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    pub min: Point3,
    pub max: Point3,
    pub counts: [usize; 3],
}

impl SampleGrid {
    pub fn new(min: Point3, max: Point3, counts: [usize; 3]) -> Result<Self> {
        if counts.contains(&0) {
            return Err(Error::InvalidParameter("grid counts must be at least 1".into()));
        }
        let lo = [min.x, min.y, min.z];
        let hi = [max.x, max.y, max.z];
        for axis in 0..3 {
            if !(lo[axis].is_finite() && hi[axis].is_finite()) {
                return Err(Error::InvalidParameter("grid extents must be finite".into()));
            }
            if counts[axis] > 1 && !(hi[axis] > lo[axis]) {
                return Err(Error::InvalidParameter(format!(
                    "grid axis {axis} has {} samples over a degenerate extent",
                    counts[axis]
                )));
            }
        }
        Ok(Self { min, max, counts })
    }

    /// Grid whose samples are `spacing` apart along each sampled axis and cover
    /// `[min, max]` (the upper bound is rounded to a whole number of steps).
    pub fn with_spacing(min: Point3, max: Point3, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::InvalidParameter("grid spacing must be positive".into()));
        }
        let count = |lo: f64, hi: f64| ((hi - lo) / spacing + 1e-9).floor() as usize + 1;
        let counts = [count(min.x, max.x), count(min.y, max.y), count(min.z, max.z)];
        let top = |lo: f64, n: usize| lo + spacing * (n as f64 - 1.0);
        Self::new(min, Point3::new(top(min.x, counts[0]), top(min.y, counts[1]), top(min.z, counts[2])), counts)
    }

    /// Transverse (constant-z) plane centred on `center`.
    pub fn transverse_plane(center: Point3, half_width: f64, spacing: f64) -> Result<Self> {
        Self::with_spacing(
            Point3::new(center.x - half_width, center.y - half_width, center.z),
            Point3::new(center.x + half_width, center.y + half_width, center.z),
            spacing,
        )
    }

    /// Cell-centred n × n samples covering a square of side `side` at `center`.
    pub fn square_face(center: Point3, side: f64, n: usize) -> Result<Self> {
        if n == 0 || !(side > 0.0) {
            return Err(Error::InvalidParameter("face grid needs n ≥ 1 and positive side".into()));
        }
        let h = side / 2.0 - side / (2.0 * n as f64);
        Self::new(
            Point3::new(center.x - h, center.y - h, center.z),
            Point3::new(center.x + h, center.y + h, center.z),
            [n, n, 1],
        )
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn axis_value(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
        if n == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    }

    /// Sample spacing per axis (0 for single-sample axes).
    pub fn spacing(&self) -> [f64; 3] {
        let s = |lo: f64, hi: f64, n: usize| if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
        [
            s(self.min.x, self.max.x, self.counts[0]),
            s(self.min.y, self.max.y, self.counts[1]),
            s(self.min.z, self.max.z, self.counts[2]),
        ]
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.counts[0] * (iy + self.counts[1] * iz)
    }

    pub fn point(&self, ix: usize, iy: usize, iz: usize) -> Point3 {
        Point3::new(
            Self::axis_value(self.min.x, self.max.x, self.counts[0], ix),
            Self::axis_value(self.min.y, self.max.y, self.counts[1], iy),
            Self::axis_value(self.min.z, self.max.z, self.counts[2], iz),
        )
    }

    pub fn point_at(&self, flat: usize) -> Point3 {
        let ix = flat % self.counts[0];
        let iy = (flat / self.counts[0]) % self.counts[1];
        let iz = flat / (self.counts[0] * self.counts[1]);
        self.point(ix, iy, iz)
    }

    pub fn points(&self) -> Vec<Point3> {
        (0..self.len()).map(|i| self.point_at(i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_axes() {
        let p = Point3::new(0.0, 0.0, 1.0);
        assert!(SampleGrid::new(p, p, [2, 1, 1]).is_err());
        assert!(SampleGrid::new(p, p, [0, 1, 1]).is_err());
        assert!(SampleGrid::new(p, p, [1, 1, 1]).is_ok());
    }

    #[test]
    fn spacing_and_ordering() {
        let g = SampleGrid::with_spacing(Point3::new(-1.0, 0.0, 5.0), Point3::new(1.0, 0.0, 6.0), 0.5).unwrap();
        assert_eq!(g.counts, [5, 1, 3]);
        assert_eq!(g.point_at(1), Point3::new(-0.5, 0.0, 5.0));
        assert_eq!(g.point_at(5), Point3::new(-1.0, 0.0, 5.5));
        assert_eq!(g.spacing(), [0.5, 0.0, 0.5]);
    }

    #[test]
    fn face_grid_is_cell_centred() {
        let g = SampleGrid::square_face(Point3::new(0.0, 0.0, 50.0), 0.8, 4).unwrap();
        assert!((g.min.x + 0.3).abs() < 1e-12 && (g.max.x - 0.3).abs() < 1e-12);
        assert!((g.spacing()[0] - 0.2).abs() < 1e-12);
    }
}
