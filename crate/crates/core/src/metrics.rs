//! Intensity limits, incident power and the link-efficiency budget.

use std::io::Write;

use crate::error::{Error, Result};
use crate::field::analytics::sinc;
use crate::field::engine::{FieldEngine, FieldSettings, PressureField};
use crate::geometry::Point3;
use crate::grid::SampleGrid;
use crate::layout::ArrayLayout;
use crate::medium::LayeredMedium;
use crate::scene::Implant;
use crate::signal::ExcitationSet;

/// Diagnostic-ultrasound I_spta limit (mW/cm²).
pub const FDA_ISPTA_LIMIT: f64 = 720.0;

pub fn db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Peak intensity of a field and where it occurs (first maximum in grid order).
pub fn compute_ispta(field: &PressureField) -> Result<(f64, Point3)> {
    let v = field
        .intensity()
        .ok_or_else(|| Error::InvalidParameter("I_spta needs a time-averaged intensity field".into()))?;
    let (i, &best) = v
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, &f64)>, (i, x)| match acc {
            Some((_, b)) if b >= x => acc,
            _ => Some((i, x)),
        })
        .ok_or_else(|| Error::DegenerateInput("empty field".into()))?;
    Ok((best, field.grid.point_at(i)))
}

/// Planes searched for the spatial-peak intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct IsptaSearch {
    /// mm
    pub spacing: f64,
    /// Shallowest depth searched (mm).
    pub z_min: f64,
    /// Deepest depth searched, as a multiple of the focal depth.
    pub depth_factor: f64,
    /// Lateral half-width beyond the array half-aperture (mm).
    pub margin: f64,
}

impl Default for IsptaSearch {
    fn default() -> Self {
        Self { spacing: 0.2, z_min: 1.0, depth_factor: 1.5, margin: 5.0 }
    }
}

impl IsptaSearch {
    /// Axial plane through `focus` (constant y) and the transverse plane at
    /// the focal depth.
    pub fn grids(&self, layout: &ArrayLayout, focus: Point3) -> Result<Vec<SampleGrid>> {
        if !(focus.z > self.z_min) {
            return Err(Error::Domain("focus must lie deeper than the search start".into()));
        }
        let hw = layout.aperture() / 2.0 + self.margin + focus.x.abs().max(focus.y.abs());
        let axial = SampleGrid::with_spacing(
            Point3::new(-hw, focus.y, self.z_min),
            Point3::new(hw, focus.y, focus.z * self.depth_factor),
            self.spacing,
        )?;
        let transverse = SampleGrid::transverse_plane(Point3::new(0.0, 0.0, focus.z), hw, self.spacing)?;
        Ok(vec![axial, transverse])
    }
}

/// Spatial-peak intensity over several grids.
pub fn ispta_over(engine: &FieldEngine, grids: &[SampleGrid]) -> Result<(f64, Point3)> {
    let mut best: Option<(f64, Point3)> = None;
    for g in grids {
        let r = compute_ispta(&engine.intensity_on(g)?)?;
        if best.is_none_or(|b| r.0 > b.0) {
            best = Some(r);
        }
    }
    best.ok_or_else(|| Error::DegenerateInput("no search grid".into()))
}

/// Drive scale bringing the peak intensity over `grids` to `limit`, and the
/// rescaled excitations.
pub fn rescale_to_fda(
    layout: &ArrayLayout,
    excitations: &ExcitationSet,
    medium: &LayeredMedium,
    grids: &[SampleGrid],
    settings: &FieldSettings,
    limit: f64,
) -> Result<(f64, ExcitationSet)> {
    let engine = FieldEngine::new(layout, excitations, medium, settings)?;
    let (peak, _) = ispta_over(&engine, grids)?;
    rescale_for_peak(excitations, peak, limit)
}

/// Scale for a known peak intensity.
pub fn rescale_for_peak(excitations: &ExcitationSet, peak: f64, limit: f64) -> Result<(f64, ExcitationSet)> {
    if !(peak > 0.0) {
        return Err(Error::DegenerateInput("field is zero everywhere".into()));
    }
    if !(limit > 0.0) {
        return Err(Error::InvalidParameter("intensity limit must be positive".into()));
    }
    let scale = (limit / peak).sqrt();
    let s0 = excitations.drive_amplitude_scale();
    Ok((scale, excitations.clone().with_scale(s0 * scale)))
}

/// Integral of intensity over the implant face (µW), by bilinear
/// interpolation of a planar field at `n × n` cell centres.
pub fn incident_power(field: &PressureField, implant: &Implant) -> Result<f64> {
    let v =
        field.intensity().ok_or_else(|| Error::InvalidParameter("incident power needs an intensity field".into()))?;
    let g = &field.grid;
    if g.counts[2] != 1 {
        return Err(Error::Shape("incident power needs a constant-depth plane".into()));
    }
    let half = implant.face_size / 2.0;
    let c = implant.position;
    let [sx, sy, _] = g.spacing();
    let max_step = sx.max(sy);
    if max_step > implant.face_size / 4.0 + 1e-12 {
        return Err(Error::Shape("grid spacing exceeds a quarter of the face size".into()));
    }
    let inside = |lo: f64, hi: f64, a: f64, b: f64| a >= lo - 1e-9 && b <= hi + 1e-9;
    if !inside(g.min.x, g.max.x, c.x - half, c.x + half) || !inside(g.min.y, g.max.y, c.y - half, c.y + half) {
        return Err(Error::Shape("implant face extends beyond the grid".into()));
    }
    let coord = |x: f64, lo: f64, step: f64, n: usize| -> (usize, f64) {
        if n == 1 {
            return (0, 0.0);
        }
        let t = ((x - lo) / step).clamp(0.0, (n - 1) as f64);
        let i = (t.floor() as usize).min(n - 2);
        (i, t - i as f64)
    };
    let n = 16;
    let cell = implant.face_size / n as f64;
    let mut sum = 0.0;
    for j in 0..n {
        for i in 0..n {
            let x = c.x - half + (i as f64 + 0.5) * cell;
            let y = c.y - half + (j as f64 + 0.5) * cell;
            let (ix, fx) = coord(x, g.min.x, sx, g.counts[0]);
            let (iy, fy) = coord(y, g.min.y, sy, g.counts[1]);
            let at = |a: usize, b: usize| v[g.index(a.min(g.counts[0] - 1), b.min(g.counts[1] - 1), 0)];
            let val = at(ix, iy) * (1.0 - fx) * (1.0 - fy)
                + at(ix + 1, iy) * fx * (1.0 - fy)
                + at(ix, iy + 1) * (1.0 - fx) * fy
                + at(ix + 1, iy + 1) * fx * fy;
            sum += val;
        }
    }
    Ok(power_uw(sum / (n * n) as f64, implant.face_size * implant.face_size))
}

/// mW/cm² over mm² → µW.
fn power_uw(intensity: f64, area_mm2: f64) -> f64 {
    intensity * area_mm2 * 0.01 * 1000.0
}

/// Incident power (µW) on the face sampled directly at `n × n` cell centres.
pub fn face_power(engine: &FieldEngine, implant: &Implant, n: usize) -> Result<f64> {
    let g = SampleGrid::square_face(implant.position, implant.face_size, n)?;
    let v = engine.intensity_at(&g.points())?;
    Ok(power_uw(v.iter().sum::<f64>() / v.len() as f64, implant.face_size * implant.face_size))
}

/// Power (µW) crossing a transverse plane by the midpoint rule.
pub fn plane_power(engine: &FieldEngine, depth: f64, half_width: f64, spacing: f64) -> Result<f64> {
    let g = SampleGrid::transverse_plane(Point3::new(0.0, 0.0, depth), half_width, spacing)?;
    let v = engine.intensity_at(&g.points())?;
    Ok(power_uw(v.iter().sum(), spacing * spacing))
}

/// Solid-angle integral of a square piston's squared far-field directivity
/// over the forward hemisphere (sr).
pub fn element_directivity_solid_angle(element_size: f64, wavelength: f64) -> f64 {
    let (nt, np) = (400, 400);
    let k = std::f64::consts::PI * element_size / wavelength;
    let dt = std::f64::consts::FRAC_PI_2 / nt as f64;
    let dp = 2.0 * std::f64::consts::PI / np as f64;
    let mut s = 0.0;
    for i in 0..nt {
        let th = (i as f64 + 0.5) * dt;
        let (st, _) = th.sin_cos();
        let mut ring = 0.0;
        for j in 0..np {
            let ph = (j as f64 + 0.5) * dp;
            let d = sinc(k * st * ph.cos()) * sinc(k * st * ph.sin());
            ring += d * d;
        }
        s += ring * st;
    }
    s * dt * dp
}

/// Acoustic energy (µJ) radiated per unit Σd²Δt of one isolated element.
pub fn element_radiation_coefficient(layout: &ArrayLayout, medium: &LayeredMedium, settings: &FieldSettings) -> f64 {
    let m = medium.medium_at(0.0);
    let lambda = m.wavelength(layout.carrier_frequency());
    let a = layout.element_size();
    let area_over_lambda = a * a / lambda;
    let omega = element_directivity_solid_angle(a, lambda);
    // Pa² · mm² · sr / Rayl = 1e-6 W per µs of Σd²Δt → µJ
    settings.surface_pressure.powi(2) * area_over_lambda.powi(2) * 1e-6 * omega / m.impedance()
}

/// Budget parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSettings {
    pub eta_tx_db: f64,
    /// Samples per side when integrating over the implant face.
    pub face_samples: usize,
    /// Transverse-plane integration extent and spacing (mm).
    pub plane_half_width: f64,
    pub plane_spacing: f64,
    /// Search for the FDA-limited available power; `None` skips it.
    pub ispta: Option<IsptaSearch>,
    pub limit: f64,
}

impl Default for LinkSettings {
    fn default() -> Self {
        Self {
            eta_tx_db: -6.0,
            face_samples: 8,
            plane_half_width: 100.0,
            plane_spacing: 1.0,
            ispta: Some(IsptaSearch::default()),
            limit: FDA_ISPTA_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyReport {
    /// Electrical energy delivered to the array per pulse (µJ).
    pub transmitted_energy: f64,
    /// Electrical energy recovered by the implant per pulse (µJ).
    pub received_energy: f64,
    /// Acoustic energy incident on the implant face per pulse (µJ).
    pub incident_energy: f64,
    pub eta_link_db: f64,
    pub eta_tx_db: f64,
    pub eta_foc_db: f64,
    pub eta_att_db: f64,
    pub eta_rx_db: f64,
    /// η_link minus the sum of the four components.
    pub residual_db: f64,
    /// Peak intensity at the simulated drive (mW/cm²) and its location.
    pub ispta: Option<(f64, Point3)>,
    /// Electrical power available at the implant once the drive is scaled to
    /// the intensity limit (µW).
    pub available_power_at_fda: Option<f64>,
}

impl EfficiencyReport {
    pub fn component_sum_db(&self) -> f64 {
        self.eta_tx_db + self.eta_foc_db + self.eta_att_db + self.eta_rx_db
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let io = |e: std::io::Error| Error::InvalidParameter(format!("i/o: {e}"));
        writeln!(w, "quantity,value,unit").map_err(io)?;
        let rows = [
            ("transmitted_energy", format!("{:.6e}", self.transmitted_energy), "uJ"),
            ("received_energy", format!("{:.6e}", self.received_energy), "uJ"),
            ("incident_energy", format!("{:.6e}", self.incident_energy), "uJ"),
            ("eta_link", format!("{:.1}", self.eta_link_db), "dB"),
            ("eta_tx", format!("{:.1}", self.eta_tx_db), "dB"),
            ("eta_foc", format!("{:.1}", self.eta_foc_db), "dB"),
            ("eta_att", format!("{:.1}", self.eta_att_db), "dB"),
            ("eta_rx", format!("{:.1}", self.eta_rx_db), "dB"),
            ("residual", format!("{:.1}", self.residual_db), "dB"),
        ];
        for (k, v, u) in rows {
            writeln!(w, "{k},{v},{u}").map_err(io)?;
        }
        if let Some((i, _)) = self.ispta {
            writeln!(w, "ispta,{i:.6e},mW/cm2").map_err(io)?;
        }
        if let Some(p) = self.available_power_at_fda {
            writeln!(w, "available_power_at_fda,{p:.1},uW").map_err(io)?;
        }
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "link efficiency   {:.1} dB\n  transmit        {:.1} dB\n  focusing        {:.1} dB\n  \
             attenuation     {:.1} dB\n  receive         {:.1} dB\n  residual        {:.1} dB\n\
             transmitted       {:.4e} uJ\nreceived          {:.4e} uJ\n",
            self.eta_link_db,
            self.eta_tx_db,
            self.eta_foc_db,
            self.eta_att_db,
            self.eta_rx_db,
            self.residual_db,
            self.transmitted_energy,
            self.received_energy
        );
        if let Some((i, p)) = self.ispta {
            s += &format!("I_spta            {i:.4e} mW/cm2 at ({:.1}, {:.1}, {:.1}) mm\n", p.x, p.y, p.z);
        }
        if let Some(p) = self.available_power_at_fda {
            s += &format!("available at FDA  {p:.1} uW\n");
        }
        s
    }
}

/// Electrical drive energy (µJ): per-element Σd²Δt times the element
/// radiation coefficient, divided by the transmit efficiency.
pub fn transmitted_energy(
    layout: &ArrayLayout,
    tx: &ExcitationSet,
    medium: &LayeredMedium,
    settings: &FieldSettings,
    eta_tx_db: f64,
) -> f64 {
    element_radiation_coefficient(layout, medium, settings) * tx.total_energy() / from_db(eta_tx_db)
}

/// One-way straight-ray attenuation loss from the array centre (dB, ≤ 0).
pub fn attenuation_db(medium: &LayeredMedium, target: Point3) -> f64 {
    -medium.ray(Point3::ORIGIN, target).attenuation_db
}

/// Received over transmitted energy for one implant, without the FDA search.
pub fn transfer_efficiency(
    layout: &ArrayLayout,
    tx: &ExcitationSet,
    implant: &Implant,
    medium: &LayeredMedium,
    settings: &FieldSettings,
    link: &LinkSettings,
) -> Result<f64> {
    // the averaging window cancels between incident and transmitted energy
    let period = settings.repetition_period.unwrap_or(1.0);
    let s = settings.clone().with_period(period);
    let engine = FieldEngine::new(layout, tx, medium, &s)?;
    let received = face_power(&engine, implant, link.face_samples)? * period * 1e-6 * from_db(implant.rx_efficiency_db);
    Ok(received / transmitted_energy(layout, tx, medium, &s, link.eta_tx_db))
}

/// Full budget for `tx` powering `implant`.
pub fn link_efficiency(
    layout: &ArrayLayout,
    tx: &ExcitationSet,
    implant: &Implant,
    medium: &LayeredMedium,
    settings: &FieldSettings,
    link: &LinkSettings,
) -> Result<EfficiencyReport> {
    implant.validate()?;
    if tx.is_silent() {
        return Err(Error::DegenerateInput("transmit set is silent".into()));
    }
    let probe = FieldEngine::new(layout, tx, medium, settings)?;
    let period = probe.repetition_period(&[implant.position]);
    let s = settings.clone().with_period(period);
    let engine = FieldEngine::new(layout, tx, medium, &s)?;

    let p_face = face_power(&engine, implant, link.face_samples)?;
    let p_plane = plane_power(&engine, implant.position.z, link.plane_half_width, link.plane_spacing)?;
    // µW · µs = pJ
    let incident_energy = p_face * period * 1e-6;
    let eta_rx = from_db(implant.rx_efficiency_db);
    let received_energy = incident_energy * eta_rx;
    let transmitted = transmitted_energy(layout, tx, medium, &s, link.eta_tx_db);
    if !(p_face > 0.0 && p_plane > 0.0) {
        return Err(Error::DegenerateInput("no acoustic power reaches the implant plane".into()));
    }
    let eta_link_db = db(received_energy / transmitted);
    let eta_foc_db = db(p_face / p_plane);
    let eta_att_db = attenuation_db(medium, implant.position);
    let (ispta, available) = match &link.ispta {
        Some(search) => {
            let peak = ispta_over(&engine, &search.grids(layout, implant.position)?)?;
            let avail = p_face * link.limit / peak.0 * eta_rx;
            (Some(peak), Some(avail))
        }
        None => (None, None),
    };
    let mut report = EfficiencyReport {
        transmitted_energy: transmitted,
        received_energy,
        incident_energy,
        eta_link_db,
        eta_tx_db: link.eta_tx_db,
        eta_foc_db,
        eta_att_db,
        eta_rx_db: implant.rx_efficiency_db,
        residual_db: 0.0,
        ispta,
        available_power_at_fda: available,
    };
    report.residual_db = report.eta_link_db - report.component_sum_db();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::engine::FieldData;
    use crate::layout::build_array_layout;
    use crate::medium::Medium;

    fn uniform(value: f64, center: Point3, half: f64, spacing: f64) -> PressureField {
        let g = SampleGrid::transverse_plane(center, half, spacing).unwrap();
        let n = g.len();
        PressureField::new(g, FieldData::Intensity(vec![value; n])).unwrap()
    }

    #[test]
    fn uniform_field_power_on_face() {
        let imp = Implant::new(Point3::new(0.0, 0.0, 50.0));
        let f = uniform(720.0, imp.position, 1.0, 0.1);
        let p = incident_power(&f, &imp).unwrap();
        assert!((p - 4608.0).abs() < 1e-6, "{p}");
        assert!((p / 1000.0 - 4.61).abs() < 0.01);
        assert_eq!(incident_power(&uniform(0.0, imp.position, 1.0, 0.1), &imp).unwrap(), 0.0);
    }

    #[test]
    fn coarse_or_small_grid_is_rejected() {
        let imp = Implant::new(Point3::new(0.0, 0.0, 50.0));
        assert!(incident_power(&uniform(1.0, imp.position, 1.0, 0.5), &imp).is_err());
        assert!(incident_power(&uniform(1.0, imp.position, 0.2, 0.05), &imp).is_err());
    }

    #[test]
    fn ispta_of_uniform_field() {
        let f = uniform(3.5, Point3::new(0.0, 0.0, 10.0), 1.0, 0.5);
        assert_eq!(compute_ispta(&f).unwrap().0, 3.5);
    }

    #[test]
    fn rescale_from_1440() {
        let w = crate::signal::tone_burst(1.5, 4.0, 1.0, 57.0).unwrap();
        let e = ExcitationSet::new(vec![w], 2.0).unwrap();
        let (k, r) = rescale_for_peak(&e, 1440.0, 720.0).unwrap();
        assert!((k - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((r.drive_amplitude_scale() - 2.0 * 0.5f64.sqrt()).abs() < 1e-12);
        assert!(matches!(rescale_for_peak(&e, 0.0, 720.0), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn lossless_medium_has_no_attenuation() {
        let m = LayeredMedium::homogeneous(Medium::reference());
        assert_eq!(attenuation_db(&m, Point3::new(0.0, 0.0, 50.0)), 0.0);
        let oil = LayeredMedium::homogeneous(Medium::oil());
        assert!((attenuation_db(&oil, Point3::new(0.0, 0.0, 50.0)) + 0.75).abs() < 1e-12);
    }

    #[test]
    fn small_piston_radiates_into_the_hemisphere() {
        // a ≪ λ: D ≈ 1 everywhere
        assert!((element_directivity_solid_angle(0.01, 1.0) / (2.0 * std::f64::consts::PI) - 1.0).abs() < 1e-3);
        // a ≫ λ: Ω ≈ λ²/a²
        let big = element_directivity_solid_angle(10.0, 1.0);
        assert!((big - 0.01).abs() < 0.001, "{big}");
    }

    #[test]
    fn search_grids_cover_axis_and_focal_plane() {
        let l = build_array_layout(8, 8, 1.8, 0.8, 3, 1.5).unwrap();
        let g = IsptaSearch::default().grids(&l, Point3::new(0.0, 0.0, 50.0)).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].counts[1], 1);
        assert_eq!(g[1].counts[2], 1);
        assert!((g[1].min.z - 50.0).abs() < 1e-12);
    }
}
