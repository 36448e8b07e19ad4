use std::ops::{Add, Mul, Sub};

/// A point or displacement in millimetres. `z` is the depth axis; the array
/// face lies in the `z = 0` plane and radiates toward `+z`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn distance(self, other: Point3) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Point at `radius` from the origin along the direction with polar angle
    /// `theta` (from +z) and azimuth `phi` (from +x), both in degrees.
    pub fn from_spherical_deg(radius: f64, theta: f64, phi: f64) -> Self {
        let (t, p) = (theta.to_radians(), phi.to_radians());
        Self::new(radius * t.sin() * p.cos(), radius * t.sin() * p.sin(), radius * t.cos())
    }

    /// Point at `radius` along the direction cosines `(u, v)`; requires
    /// `u² + v² ≤ 1`.
    pub fn from_direction_cosines(radius: f64, u: f64, v: f64) -> Self {
        let w = (1.0 - u * u - v * v).max(0.0).sqrt();
        Self::new(radius * u, radius * v, radius * w)
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, k: f64) -> Point3 {
        Point3::new(self.x * k, self.y * k, self.z * k)
    }
}
