//! Planar array geometry.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::geometry::Point3;

/// One square transducer element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Element {
    /// Centre in mm.
    pub center: Point3,
    /// Row (y) and column (x) in the nominal rectangular grid.
    pub row: usize,
    pub col: usize,
    /// Transduction gain applied on both transmit and receive; 0 marks a dead
    /// element.
    pub sensitivity: f64,
}

/// Transmit/receive geometry of a planar array.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayLayout {
    elements: Vec<Element>,
    element_size: f64,
    pitch: f64,
    carrier_frequency: f64,
    aperture: f64,
}

/// Triangular number check: returns the leg length `k` with `k(k+1)/2 == n`.
fn triangle_leg(n: usize) -> Option<usize> {
    let mut k = 0;
    while k * (k + 1) / 2 < n {
        k += 1;
    }
    (k * (k + 1) / 2 == n).then_some(k)
}

/// Build a `rows × cols` grid centred on the origin in the `z = 0` plane,
/// removing `corner_cut` elements from each corner.
///
/// `corner_cut` must be a triangular number: the removed elements at a corner
/// are those whose row and column offsets from that corner sum to less than
/// the triangle leg (1 → the corner, 3 → the corner and its two edge
/// neighbours, 6 → the next anti-diagonal as well).
pub fn build_array_layout(
    rows: usize,
    cols: usize,
    pitch: f64,
    element_size: f64,
    corner_cut: usize,
    carrier_frequency: f64,
) -> Result<ArrayLayout> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidGeometry("rows and cols must be at least 1".into()));
    }
    if !(pitch > 0.0 && element_size > 0.0) {
        return Err(Error::InvalidGeometry("pitch and element size must be positive".into()));
    }
    if element_size > pitch && rows * cols > 1 {
        return Err(Error::InvalidGeometry(format!("element size {element_size} mm exceeds pitch {pitch} mm")));
    }
    if !(carrier_frequency > 0.0) {
        return Err(Error::InvalidParameter("carrier frequency must be positive".into()));
    }
    let leg = triangle_leg(corner_cut)
        .ok_or_else(|| Error::InvalidGeometry(format!("corner cut {corner_cut} is not a triangular number")))?;
    let removed = |r: usize, c: usize| {
        let dr = r.min(rows - 1 - r);
        let dc = c.min(cols - 1 - c);
        dr + dc < leg
    };
    let x0 = (cols as f64 - 1.0) / 2.0;
    let y0 = (rows as f64 - 1.0) / 2.0;
    let elements: Vec<Element> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .filter(|&(r, c)| !removed(r, c))
        .map(|(row, col)| Element {
            center: Point3::new((col as f64 - x0) * pitch, (row as f64 - y0) * pitch, 0.0),
            row,
            col,
            sensitivity: 1.0,
        })
        .collect();
    if elements.is_empty() {
        return Err(Error::InvalidGeometry("corner cut removes every element".into()));
    }
    ArrayLayout::from_elements(elements, pitch, element_size, carrier_frequency)
}

impl ArrayLayout {
    /// Assemble a layout from explicit elements, validating the invariants.
    pub fn from_elements(
        elements: Vec<Element>,
        pitch: f64,
        element_size: f64,
        carrier_frequency: f64,
    ) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidGeometry("layout has no elements".into()));
        }
        if elements.len() > 1 && element_size > pitch {
            return Err(Error::InvalidGeometry(format!("element size {element_size} mm exceeds pitch {pitch} mm")));
        }
        for (i, a) in elements.iter().enumerate() {
            if !a.center.is_finite() || !(a.sensitivity >= 0.0) {
                return Err(Error::InvalidGeometry(format!("element {i} is not finite")));
            }
            for b in &elements[i + 1..] {
                if a.center.distance(b.center) < 1e-9 {
                    return Err(Error::InvalidGeometry(format!("element {i} coincides with another element")));
                }
            }
        }
        let extent = |f: fn(&Element) -> f64| {
            let lo = elements.iter().map(f).fold(f64::INFINITY, f64::min);
            let hi = elements.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        };
        let aperture = extent(|e| e.center.x).max(extent(|e| e.center.y)) + element_size;
        Ok(Self { elements, element_size, pitch, carrier_frequency, aperture })
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element_centers(&self) -> Vec<Point3> {
        self.elements.iter().map(|e| e.center).collect()
    }

    pub fn element_size(&self) -> f64 {
        self.element_size
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    /// MHz
    pub fn carrier_frequency(&self) -> f64 {
        self.carrier_frequency
    }

    /// Side length D: the larger per-axis centre extent plus one element.
    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    pub fn is_live(&self, index: usize) -> bool {
        self.elements[index].sensitivity > 0.0
    }

    /// Index of the live element nearest the array centroid (lowest index on
    /// ties).
    pub fn center_element(&self) -> Option<usize> {
        let n = self.elements.len() as f64;
        let cx = self.elements.iter().map(|e| e.center.x).sum::<f64>() / n;
        let cy = self.elements.iter().map(|e| e.center.y).sum::<f64>() / n;
        let c = Point3::new(cx, cy, 0.0);
        (0..self.elements.len()).filter(|&i| self.is_live(i)).min_by(|&a, &b| {
            let da = self.elements[a].center.distance(c);
            let db = self.elements[b].center.distance(c);
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        })
    }

    /// Element indices in the 8-neighbourhood of `index` in grid space.
    pub fn grid_neighbors(&self, index: usize) -> Vec<usize> {
        let e = &self.elements[index];
        self.elements
            .iter()
            .enumerate()
            .filter(|(j, o)| *j != index && o.row.abs_diff(e.row) <= 1 && o.col.abs_diff(e.col) <= 1)
            .map(|(j, _)| j)
            .collect()
    }

    /// Element at grid position `(row, col)`, if present.
    pub fn element_at(&self, row: usize, col: usize) -> Option<usize> {
        self.elements.iter().position(|e| e.row == row && e.col == col)
    }

    /// Copy with every element centre displaced by independent Gaussian
    /// offsets of standard deviation `sigma` mm on all three axes.
    pub fn with_position_jitter(&self, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::InvalidParameter("jitter sigma must be non-negative".into()));
        }
        if sigma == 0.0 {
            return Ok(self.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma).expect("finite sigma");
        let elements = self
            .elements
            .iter()
            .map(|e| {
                let d = Point3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
                Element { center: e.center + d, ..*e }
            })
            .collect();
        Self::from_elements(elements, self.pitch, self.element_size, self.carrier_frequency)
    }

    /// Copy with per-element sensitivities multiplied by factors drawn
    /// uniformly from `[1 − spread, 1 + spread]`.
    pub fn with_sensitivity_spread(&self, spread: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&spread) {
            return Err(Error::InvalidParameter("sensitivity spread must lie in [0, 1)".into()));
        }
        let mut out = self.clone();
        if spread == 0.0 {
            return Ok(out);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Uniform::new_inclusive(1.0 - spread, 1.0 + spread);
        for e in &mut out.elements {
            e.sensitivity *= dist.sample(&mut rng);
        }
        Ok(out)
    }

    /// Copy with the listed elements marked dead.
    pub fn with_dead_elements(&self, dead: &[usize]) -> Result<Self> {
        let mut out = self.clone();
        for &i in dead {
            let e = out
                .elements
                .get_mut(i)
                .ok_or_else(|| Error::InvalidParameter(format!("dead element index {i} out of range")))?;
            e.sensitivity = 0.0;
        }
        if out.elements.iter().all(|e| e.sensitivity == 0.0) {
            return Err(Error::InvalidGeometry("every element is dead".into()));
        }
        Ok(out)
    }

    /// Sub-layout restricted to `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let elements = indices.iter().map(|&i| self.elements[i]).collect();
        Self::from_elements(elements, self.pitch, self.element_size, self.carrier_frequency)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_array_has_52_elements() {
        let l = build_array_layout(8, 8, 1.8, 0.8, 3, 1.5).unwrap();
        assert_eq!(l.len(), 52);
        assert!((l.aperture() - 13.4).abs() < 1e-9);
        // corner triangle removed
        assert!(l.element_at(0, 0).is_none());
        assert!(l.element_at(0, 1).is_none());
        assert!(l.element_at(1, 0).is_none());
        assert!(l.element_at(1, 1).is_some());
        assert!(l.element_at(0, 2).is_some());
        assert!(l.element_at(7, 6).is_none());
    }

    #[test]
    fn single_and_two_by_two() {
        let l = build_array_layout(1, 1, 1.0, 0.5, 0, 1.5).unwrap();
        assert_eq!(l.element_centers(), vec![Point3::ORIGIN]);
        let l = build_array_layout(2, 2, 1.0, 0.5, 0, 1.5).unwrap();
        let c = l.element_centers();
        for p in [(-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5)] {
            assert!(c.iter().any(|q| (q.x - p.0).abs() < 1e-12 && (q.y - p.1).abs() < 1e-12));
        }
    }

    #[test]
    fn geometry_violations() {
        assert!(matches!(build_array_layout(8, 8, 0.5, 0.8, 3, 1.5), Err(Error::InvalidGeometry(_))));
        assert!(build_array_layout(8, 8, 1.8, 0.8, 2, 1.5).is_err());
        assert!(build_array_layout(2, 2, 1.0, 0.5, 1, 1.5).is_err());
        assert!(build_array_layout(0, 3, 1.0, 0.5, 0, 1.5).is_err());
    }

    #[test]
    fn count_formula_for_triangular_cuts() {
        for (cut, removed) in [(0, 0), (1, 1), (3, 3), (6, 6)] {
            let l = build_array_layout(10, 10, 1.0, 0.5, cut, 1.5).unwrap();
            assert_eq!(l.len(), 100 - 4 * removed);
        }
    }

    #[test]
    fn layout_is_deterministic() {
        let a = build_array_layout(8, 8, 1.8, 0.8, 3, 1.5).unwrap();
        let b = build_array_layout(8, 8, 1.8, 0.8, 3, 1.5).unwrap();
        assert_eq!(a, b);
        let ja = a.with_position_jitter(0.125, 3).unwrap();
        let jb = b.with_position_jitter(0.125, 3).unwrap();
        assert_eq!(ja, jb);
        assert_ne!(ja, a);
    }

    #[test]
    fn center_element_and_neighbors() {
        let l = build_array_layout(8, 8, 1.8, 0.8, 3, 1.5).unwrap();
        let c = l.center_element().unwrap();
        let e = l.elements()[c];
        assert!((e.center.x.abs() - 0.9).abs() < 1e-12 && (e.center.y.abs() - 0.9).abs() < 1e-12);
        assert_eq!(l.grid_neighbors(c).len(), 8);
        let corner = l.element_at(0, 2).unwrap();
        assert_eq!(l.grid_neighbors(corner).len(), 4);
        let dead = l.with_dead_elements(&[c]).unwrap();
        assert_ne!(dead.center_element().unwrap(), c);
    }
}
