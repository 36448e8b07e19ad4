//! Acoustic media and straight-ray propagation through depth-layered slabs.

use crate::error::{Error, Result};
use crate::geometry::Point3;

/// A homogeneous fluid. Attenuation is quoted at the operating frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Medium {
    /// m/s
    pub sound_speed: f64,
    /// kg/m³
    pub density: f64,
    /// dB/cm at the carrier
    pub attenuation: f64,
}

impl Medium {
    pub fn new(sound_speed: f64, density: f64, attenuation: f64) -> Result<Self> {
        if !(sound_speed > 0.0 && sound_speed.is_finite()) {
            return Err(Error::InvalidParameter(format!("sound speed must be positive, got {sound_speed}")));
        }
        if !(density > 0.0 && density.is_finite()) {
            return Err(Error::InvalidParameter(format!("density must be positive, got {density}")));
        }
        if !(attenuation >= 0.0 && attenuation.is_finite()) {
            return Err(Error::InvalidParameter(format!("attenuation must be non-negative, got {attenuation}")));
        }
        Ok(Self { sound_speed, density, attenuation })
    }

    /// Canola oil used as the coupling bath.
    pub fn oil() -> Self {
        Self { sound_speed: 1470.0, density: 910.0, attenuation: 0.15 }
    }

    /// Porcine soft tissue.
    pub fn tissue() -> Self {
        Self { sound_speed: 1580.0, density: 1070.0, attenuation: 2.0 }
    }

    /// Lossless water-like reference fluid with a 1.0 mm wavelength at 1.5 MHz.
    pub fn reference() -> Self {
        Self { sound_speed: 1500.0, density: 1000.0, attenuation: 0.0 }
    }

    /// Sound speed in mm/µs.
    pub fn speed_mm_per_us(&self) -> f64 {
        self.sound_speed * 1e-3
    }

    /// Wavelength in mm at `frequency` MHz.
    pub fn wavelength(&self, frequency: f64) -> f64 {
        self.speed_mm_per_us() / frequency
    }

    /// Characteristic impedance ρc in kg/(m²·s).
    pub fn impedance(&self) -> f64 {
        self.density * self.sound_speed
    }
}

/// One finite slab of a layered medium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slab {
    pub medium: Medium,
    /// mm
    pub thickness: f64,
}

/// Slabs stacked along +z starting at the array plane, followed by a terminal
/// half-space. The first slab also extends behind the array plane.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredMedium {
    slabs: Vec<Slab>,
    terminal: Medium,
}

/// Straight-ray path summary between two points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayPath {
    /// mm
    pub length: f64,
    /// µs
    pub time_of_flight: f64,
    /// dB, one way
    pub attenuation_db: f64,
}

impl RayPath {
    /// Pressure amplitude factor for the accumulated attenuation.
    pub fn amplitude_factor(&self) -> f64 {
        10f64.powf(-self.attenuation_db / 20.0)
    }
}

impl LayeredMedium {
    pub fn new(slabs: Vec<Slab>, terminal: Medium) -> Result<Self> {
        for (i, s) in slabs.iter().enumerate() {
            if !(s.thickness > 0.0 && s.thickness.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "slab {i} thickness must be positive, got {}",
                    s.thickness
                )));
            }
        }
        Ok(Self { slabs, terminal })
    }

    pub fn homogeneous(medium: Medium) -> Self {
        Self { slabs: Vec::new(), terminal: medium }
    }

    pub fn slabs(&self) -> &[Slab] {
        &self.slabs
    }

    pub fn terminal(&self) -> &Medium {
        &self.terminal
    }

    /// Total number of layers including the terminal half-space.
    pub fn layer_count(&self) -> usize {
        self.slabs.len() + 1
    }

    /// Depth intervals `[start, end)` of every layer, terminal last.
    fn intervals(&self) -> impl Iterator<Item = (f64, f64, &Medium)> + '_ {
        let mut top = 0.0;
        let n = self.slabs.len();
        self.slabs
            .iter()
            .enumerate()
            .map(move |(i, s)| {
                let start = if i == 0 { f64::NEG_INFINITY } else { top };
                top += s.thickness;
                (start, top, &s.medium)
            })
            .chain(std::iter::once((
                if n == 0 { f64::NEG_INFINITY } else { self.slabs.iter().map(|s| s.thickness).sum() },
                f64::INFINITY,
                &self.terminal,
            )))
    }

    /// Medium occupying depth `z` (mm).
    pub fn medium_at(&self, z: f64) -> &Medium {
        let mut top = 0.0;
        for s in &self.slabs {
            top += s.thickness;
            if z < top {
                return &s.medium;
            }
        }
        &self.terminal
    }

    /// Straight-ray time of flight and attenuation from `a` to `b`.
    pub fn ray(&self, a: Point3, b: Point3) -> RayPath {
        let length = a.distance(b);
        let (z0, z1) = if a.z <= b.z { (a.z, b.z) } else { (b.z, a.z) };
        let dz = z1 - z0;
        if dz <= 1e-12 * length.max(1.0) {
            let m = self.medium_at(z0);
            return RayPath {
                length,
                time_of_flight: length / m.speed_mm_per_us(),
                attenuation_db: m.attenuation * length * 0.1,
            };
        }
        let mut tof = 0.0;
        let mut att = 0.0;
        for (start, end, m) in self.intervals() {
            let overlap = (z1.min(end) - z0.max(start)).max(0.0);
            if overlap > 0.0 {
                let seg = length * overlap / dz;
                tof += seg / m.speed_mm_per_us();
                att += m.attenuation * seg * 0.1;
            }
        }
        RayPath { length, time_of_flight: tof, attenuation_db: att }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonpositive_properties() {
        assert!(Medium::new(0.0, 1000.0, 0.1).is_err());
        assert!(Medium::new(1500.0, -1.0, 0.1).is_err());
        assert!(Medium::new(1500.0, 1000.0, -0.1).is_err());
        assert!(Medium::new(1500.0, 1000.0, 0.0).is_ok());
        let bad = Slab { medium: Medium::oil(), thickness: 0.0 };
        assert!(LayeredMedium::new(vec![bad], Medium::oil()).is_err());
    }

    #[test]
    fn homogeneous_ray_matches_speed() {
        let m = LayeredMedium::homogeneous(Medium::oil());
        let r = m.ray(Point3::ORIGIN, Point3::new(0.0, 0.0, 50.0));
        assert!((r.time_of_flight - 50.0 / 1.47).abs() < 1e-12);
        assert!((r.attenuation_db - 0.75).abs() < 1e-12);
    }

    #[test]
    fn layered_ray_splits_path_by_depth() {
        let oil = Medium::oil();
        let tissue = Medium::tissue();
        let m = LayeredMedium::new(
            vec![Slab { medium: oil, thickness: 12.5 }, Slab { medium: tissue, thickness: 25.0 }],
            oil,
        )
        .unwrap();
        let r = m.ray(Point3::ORIGIN, Point3::new(0.0, 0.0, 50.0));
        let expected = 25.0 / 1.47 + 25.0 / 1.58;
        assert!((r.time_of_flight - expected).abs() < 1e-12);
        assert!((r.attenuation_db - (0.015 * 25.0 + 0.2 * 25.0)).abs() < 1e-12);
        // oblique: every segment scales by the same secant
        let p = Point3::new(30.0, 0.0, 40.0);
        let o = m.ray(Point3::ORIGIN, p);
        let sec = 50.0 / 40.0;
        let expected = sec * (12.5 / 1.47 + 25.0 / 1.58 + 2.5 / 1.47);
        assert!((o.time_of_flight - expected).abs() < 1e-12);
        assert!(std::ptr::eq(m.medium_at(20.0), &m.slabs()[1].medium));
        assert_eq!(*m.medium_at(45.0), oil);
    }
}
