//! Element-to-point propagation: straight-ray delay, spherical spreading,
//! layer attenuation and rectangular-piston directivity for every radiating
//! patch of every element.
//!
//! A patch of side `b` and area `b²` contributes `b² / (λ r) · D(u, v)` per
//! unit surface pressure. The same weight is used in both directions, so the
//! transmit and receive paths are reciprocal by construction.

use crate::error::{Error, Result};
use crate::field::analytics::sinc;
use crate::geometry::Point3;
use crate::layout::ArrayLayout;
use crate::medium::LayeredMedium;

/// One patch-to-point contribution: one-way delay (µs) and weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathTerm {
    pub delay: f64,
    pub weight: f64,
}

/// Options shared by field evaluation and reception.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationSettings {
    /// Patches per element side are chosen so each patch is at most this
    /// fraction of a wavelength.
    pub max_patch_fraction: f64,
    /// Points farther than `near_zone_factor · a² / λ` from an element centre
    /// use the whole element as a single patch (the element far zone).
    pub near_zone_factor: f64,
}

impl Default for PropagationSettings {
    fn default() -> Self {
        Self { max_patch_fraction: 0.25, near_zone_factor: 20.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Propagator {
    layout: ArrayLayout,
    medium: LayeredMedium,
    wavelength: f64,
    patch_side: f64,
    patch_offsets: Vec<(f64, f64)>,
    near_zone: f64,
}

impl Propagator {
    pub fn new(layout: &ArrayLayout, medium: &LayeredMedium, settings: &PropagationSettings) -> Result<Self> {
        if !(settings.max_patch_fraction > 0.0 && settings.near_zone_factor >= 0.0) {
            return Err(Error::InvalidParameter("invalid propagation settings".into()));
        }
        let source_medium = medium.medium_at(0.0);
        let wavelength = source_medium.wavelength(layout.carrier_frequency());
        let a = layout.element_size();
        let n = (a / (settings.max_patch_fraction * wavelength) - 1e-9).ceil().max(1.0) as usize;
        let b = a / n as f64;
        let patch_offsets = (0..n)
            .flat_map(|iy| (0..n).map(move |ix| (ix, iy)))
            .map(|(ix, iy)| ((ix as f64 + 0.5) * b - a / 2.0, (iy as f64 + 0.5) * b - a / 2.0))
            .collect();
        Ok(Self {
            layout: layout.clone(),
            medium: medium.clone(),
            wavelength,
            patch_side: b,
            patch_offsets,
            near_zone: settings.near_zone_factor * a * a / wavelength,
        })
    }

    pub fn layout(&self) -> &ArrayLayout {
        &self.layout
    }

    pub fn medium(&self) -> &LayeredMedium {
        &self.medium
    }

    /// Carrier wavelength at the array face (mm).
    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Patches per element in the element near zone.
    pub fn patches_per_element(&self) -> usize {
        self.patch_offsets.len()
    }

    pub fn check_in_front(&self, p: Point3) -> Result<()> {
        if !(p.is_finite() && p.z > 0.0) {
            return Err(Error::Domain(format!(
                "point ({:.3}, {:.3}, {:.3}) mm is not in front of the array",
                p.x, p.y, p.z
            )));
        }
        Ok(())
    }

    fn patch_term(&self, q: Point3, side: f64, p: Point3) -> PathTerm {
        let ray = self.medium.ray(q, p);
        let r = ray.length.max(side / 2.0);
        let k = std::f64::consts::PI * side / self.wavelength;
        let d = sinc(k * (p.x - q.x) / r) * sinc(k * (p.y - q.y) / r);
        PathTerm { delay: ray.time_of_flight, weight: side * side / (self.wavelength * r) * d * ray.amplitude_factor() }
    }

    /// Append the path terms between element `index` and point `p`, including
    /// the element sensitivity. Dead elements contribute nothing.
    pub fn element_terms(&self, index: usize, p: Point3, out: &mut Vec<PathTerm>) {
        let e = &self.layout.elements()[index];
        if e.sensitivity == 0.0 {
            return;
        }
        let start = out.len();
        if e.center.distance(p) >= self.near_zone {
            out.push(self.patch_term(e.center, self.layout.element_size(), p));
        } else {
            for &(dx, dy) in &self.patch_offsets {
                let q = Point3::new(e.center.x + dx, e.center.y + dy, e.center.z);
                out.push(self.patch_term(q, self.patch_side, p));
            }
        }
        for t in &mut out[start..] {
            t.weight *= e.sensitivity;
        }
    }

    /// One-way delay from the element centre to `p` (µs).
    pub fn center_delay(&self, index: usize, p: Point3) -> f64 {
        self.medium.ray(self.layout.elements()[index].center, p).time_of_flight
    }
}

/// Integer-shift interpolation taps for one element's waveform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Tap {
    pub elem: u32,
    pub shift: i64,
    pub weight: f64,
}

/// Convert path terms for element `elem` into linear-interpolation taps.
/// `offset` is the waveform start time (µs); `sample_rate` in MHz.
pub(crate) fn push_taps(terms: &[PathTerm], elem: u32, offset: f64, sample_rate: f64, out: &mut Vec<Tap>) {
    let start = out.len();
    for t in terms {
        let s = (t.delay + offset) * sample_rate;
        let m = s.floor();
        let frac = s - m;
        let m = m as i64;
        out.push(Tap { elem, shift: m, weight: t.weight * (1.0 - frac) });
        if frac > 0.0 {
            out.push(Tap { elem, shift: m + 1, weight: t.weight * frac });
        }
    }
    let taps = &mut out[start..];
    taps.sort_by_key(|t| t.shift);
    // merge equal shifts in place
    let mut w = start;
    for r in start..out.len() {
        if w > start && out[w - 1].shift == out[r].shift {
            out[w - 1].weight += out[r].weight;
        } else {
            out[w] = out[r];
            w += 1;
        }
    }
    out.truncate(w);
}
