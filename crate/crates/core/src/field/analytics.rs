//! Closed-form directivity relations for uniformly excited arrays.

use crate::error::{Error, Result};

/// `sin(x)/x` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Magnitude of the linear array factor of `n` equispaced point sources with
/// pitch `d` and wavelength `lambda` (both mm), evaluated at `theta` for a
/// beam steered to `theta_s` (degrees). Singular points resolve to `n`.
pub fn array_factor(n: usize, d: f64, lambda: f64, theta: f64, theta_s: f64) -> f64 {
    let psi = std::f64::consts::PI * d / lambda * (theta.to_radians().sin() - theta_s.to_radians().sin());
    let den = psi.sin();
    if den.abs() < 1e-9 {
        return n as f64;
    }
    ((n as f64 * psi).sin() / den).abs()
}

/// Far-field amplitude directivity of a square piston of side `size` in a
/// principal plane, at `theta` degrees from broadside.
pub fn element_directivity(size: f64, lambda: f64, theta: f64) -> f64 {
    sinc(std::f64::consts::PI * size / lambda * theta.to_radians().sin()).abs()
}

/// One solution of the grating-lobe condition for a linear array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lobe {
    pub order: i32,
    /// degrees from broadside
    pub angle: f64,
    pub main: bool,
}

/// One grating-lobe direction of a square-lattice planar array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarLobe {
    pub order: (i32, i32),
    /// direction cosines
    pub u: f64,
    pub v: f64,
    /// polar angle from broadside, degrees
    pub theta: f64,
    /// azimuth from +x, degrees
    pub phi: f64,
    pub main: bool,
}

/// All real solutions θ = asin(mλ/d + sin θ_s), sorted by angle.
pub fn grating_lobe_angles(d: f64, lambda: f64, theta_s: f64) -> Vec<Lobe> {
    let s = theta_s.to_radians().sin();
    let step = lambda / d;
    let m_max = ((1.0 + s.abs()) / step).floor() as i32 + 1;
    let mut lobes: Vec<Lobe> = (-m_max..=m_max)
        .filter_map(|m| {
            let arg = m as f64 * step + s;
            (arg.abs() <= 1.0 + 1e-12).then(|| Lobe {
                order: m,
                angle: arg.clamp(-1.0, 1.0).asin().to_degrees(),
                main: m == 0,
            })
        })
        .collect();
    lobes.sort_by(|a, b| a.angle.partial_cmp(&b.angle).unwrap());
    lobes
}

/// Grating lobes of a square lattice with pitch `d` steered to direction
/// cosines `(u_s, v_s)`: every integer pair with (mλ/d + u_s)² + (nλ/d + v_s)² ≤ 1.
pub fn planar_grating_lobes(d: f64, lambda: f64, u_s: f64, v_s: f64) -> Vec<PlanarLobe> {
    let step = lambda / d;
    let m_max = (2.0 / step).ceil() as i32 + 1;
    let mut lobes = Vec::new();
    for m in -m_max..=m_max {
        for n in -m_max..=m_max {
            let u = m as f64 * step + u_s;
            let v = n as f64 * step + v_s;
            let r2 = u * u + v * v;
            if r2 <= 1.0 + 1e-12 {
                lobes.push(PlanarLobe {
                    order: (m, n),
                    u,
                    v,
                    theta: r2.sqrt().min(1.0).asin().to_degrees(),
                    phi: v.atan2(u).to_degrees(),
                    main: m == 0 && n == 0,
                });
            }
        }
    }
    lobes.sort_by(|a, b| (a.theta, a.phi).partial_cmp(&(b.theta, b.phi)).unwrap());
    lobes
}

/// Half-power beamwidth 0.866 λ/D of a square aperture, in degrees.
pub fn beamwidth(aperture: f64, lambda: f64) -> Result<f64> {
    if !(aperture > lambda && lambda > 0.0) {
        return Err(Error::Domain(format!("beamwidth formula needs D > λ (D = {aperture} mm, λ = {lambda} mm)")));
    }
    Ok((0.866 * lambda / aperture).to_degrees())
}

/// Fresnel-zone extent D²/(4λ) in mm.
pub fn near_field_extent(aperture: f64, lambda: f64) -> Result<f64> {
    if !(aperture > 0.0 && lambda > 0.0) {
        return Err(Error::Domain("near-field extent needs positive D and λ".into()));
    }
    Ok(aperture * aperture / (4.0 * lambda))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn array_factor_peaks_at_steering_angle() {
        for &ts in &[-20.0, 0.0, 12.5] {
            assert_eq!(array_factor(8, 1.5, 1.0, ts, ts), 8.0);
        }
        for th in [-60.0, 0.0, 33.0, 80.0] {
            assert_eq!(array_factor(1, 1.5, 1.0, th, 5.0), 1.0);
        }
        let g = (2.0f64 / 3.0).asin().to_degrees();
        assert!((array_factor(8, 1.5, 1.0, g, 0.0) - 8.0).abs() < 1e-9);
        // first null of an 8-element array at sin θ = λ/(N d)
        let null = (1.0f64 / 12.0).asin().to_degrees();
        assert!(array_factor(8, 1.5, 1.0, null, 0.0) < 1e-9);
    }

    #[test]
    fn linear_grating_lobes() {
        let lobes = grating_lobe_angles(1.5, 1.0, 0.0);
        let angles: Vec<f64> = lobes.iter().map(|l| l.angle).collect();
        assert_eq!(angles.len(), 3);
        assert!((angles[0] + 41.81).abs() < 0.01 && angles[1].abs() < 1e-12 && (angles[2] - 41.81).abs() < 0.01);
        assert!(lobes[1].main);
        let only = grating_lobe_angles(0.4, 1.0, 0.0);
        assert_eq!(only.len(), 1);
        assert!(only[0].main);
    }

    #[test]
    fn planar_grating_lobes_for_default_pitch() {
        let lobes = planar_grating_lobes(1.8, 1.0, 0.0, 0.0);
        let off: Vec<_> = lobes.iter().filter(|l| !l.main).collect();
        assert_eq!(off.len(), 8);
        let near33 = off.iter().filter(|l| (l.theta - 33.75).abs() < 0.05).count();
        let near51 = off.iter().filter(|l| (l.theta - 51.8).abs() < 0.05).count();
        assert_eq!((near33, near51), (4, 4));
        assert_eq!(planar_grating_lobes(0.4, 1.0, 0.0, 0.0).len(), 1);
    }

    #[test]
    fn beamwidth_and_near_field() {
        assert!((beamwidth(13.4, 1.0).unwrap() - 3.70).abs() < 0.005);
        assert!((beamwidth(24.8, 1.0).unwrap() - 2.0).abs() < 0.005);
        let a = beamwidth(10.0, 1.0).unwrap();
        assert!((beamwidth(20.0, 1.0).unwrap() - a / 2.0).abs() < 1e-12);
        assert!(beamwidth(0.8, 1.0).is_err());
        assert_eq!(near_field_extent(4.0, 1.0).unwrap(), 4.0);
        assert!((near_field_extent(1.3, 1.3).unwrap() - 1.3 / 4.0).abs() < 1e-12);
        assert!((near_field_extent(24.8, 1.0).unwrap() - 153.76).abs() < 1e-9);
    }
}
