//! Scenario files: parsing, unit handling and validation.

use std::path::Path;

use implantbeam::beamform::BeamformConfig;
use implantbeam::field::{EvaluationMethod, FieldSettings};
use implantbeam::metrics::{IsptaSearch, LinkSettings};
use implantbeam::{
    build_array_layout, ArrayLayout, Clutter, Implant, LayeredMedium, Medium, Point3, SampleGrid, Scene, Slab,
};
use serde::Deserialize;
use toml::Spanned;

use crate::error::{CliError, CliResult};
use crate::units::{Angle, Attenuation, Decibels, Density, Duration, Frequency, Intensity, Length, Pressure, Speed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Focus, then report the link budget and any field maps.
    Link,
    /// Far-field arc scan against the analytic pattern.
    Directivity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Unfocused,
    DelayAndSum,
    TimeReversal,
    PhaseReversal,
    IterativeTimeReversal,
    IterativePhaseReversal,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Unfocused,
        Method::DelayAndSum,
        Method::TimeReversal,
        Method::PhaseReversal,
        Method::IterativeTimeReversal,
        Method::IterativePhaseReversal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Unfocused => "unfocused",
            Method::DelayAndSum => "delay_and_sum",
            Method::TimeReversal => "time_reversal",
            Method::PhaseReversal => "phase_reversal",
            Method::IterativeTimeReversal => "iterative_time_reversal",
            Method::IterativePhaseReversal => "iterative_phase_reversal",
        }
    }

    pub fn parse(s: &str) -> CliResult<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s.trim()).ok_or_else(|| {
            let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
            CliError::Validation(format!("unknown method `{s}` (expected one of {})", names.join(", ")))
        })
    }

    pub fn needs_active_implant(self) -> bool {
        matches!(self, Method::TimeReversal | Method::PhaseReversal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DasAssumption {
    /// Homogeneous medium with the properties of the first layer.
    #[default]
    Homogeneous,
    /// The full layered medium.
    Layered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    #[default]
    Superpose,
    Partition,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_experiment")]
    experiment: Experiment,
    array: Spanned<RawArray>,
    medium: Spanned<RawMedium>,
    #[serde(default)]
    implant: Vec<Spanned<RawImplant>>,
    #[serde(default)]
    clutter: Vec<RawClutter>,
    #[serde(default)]
    beamform: Option<Spanned<RawBeamform>>,
    #[serde(default)]
    compare: Option<Vec<Method>>,
    #[serde(default)]
    link: RawLink,
    #[serde(default)]
    field: RawField,
    #[serde(default)]
    grid: Vec<Spanned<RawGrid>>,
    #[serde(default)]
    scan: Option<Spanned<RawScan>>,
    #[serde(default)]
    sweep: Option<Spanned<RawSweep>>,
}

fn default_experiment() -> Experiment {
    Experiment::Link
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArray {
    rows: usize,
    cols: usize,
    pitch: Length,
    element_size: Length,
    #[serde(default)]
    corner_cut: usize,
    carrier: Frequency,
    #[serde(default)]
    position_jitter: Option<Length>,
    #[serde(default)]
    sensitivity_spread: Option<f64>,
    #[serde(default)]
    dead_elements: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSlab {
    #[serde(default)]
    preset: Option<String>,
    #[serde(default)]
    sound_speed: Option<Speed>,
    #[serde(default)]
    density: Option<Density>,
    #[serde(default)]
    attenuation: Option<Attenuation>,
    thickness: Length,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMedium {
    #[serde(default)]
    preset: Option<String>,
    #[serde(default)]
    sound_speed: Option<Speed>,
    #[serde(default)]
    density: Option<Density>,
    #[serde(default)]
    attenuation: Option<Attenuation>,
    #[serde(default)]
    slab: Vec<RawSlab>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawImplant {
    position: [Length; 3],
    #[serde(default)]
    active: bool,
    #[serde(default)]
    face_size: Option<Length>,
    #[serde(default)]
    reflection_open: Option<f64>,
    #[serde(default)]
    reflection_short: Option<f64>,
    #[serde(default)]
    rx_efficiency: Option<Decibels>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClutter {
    position: [Length; 3],
    reflection: f64,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawBeamform {
    #[serde(default)]
    method: Option<Method>,
    #[serde(default)]
    target: Option<usize>,
    #[serde(default)]
    targets: Option<Vec<usize>>,
    #[serde(default)]
    combine: Combine,
    #[serde(default)]
    cycles: Option<f64>,
    #[serde(default)]
    sample_rate: Option<Frequency>,
    /// Fraction of peak, or `false` to disable.
    #[serde(default)]
    quantize: Option<toml::Value>,
    #[serde(default)]
    das_assumes: DasAssumption,
    #[serde(default)]
    max_iter: Option<usize>,
    #[serde(default)]
    delay_tol: Option<Duration>,
    #[serde(default)]
    noise_rms: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawLink {
    #[serde(default)]
    eta_tx: Option<Decibels>,
    #[serde(default)]
    face_samples: Option<usize>,
    #[serde(default)]
    plane_half_width: Option<Length>,
    #[serde(default)]
    plane_spacing: Option<Length>,
    #[serde(default)]
    fda_rescale: Option<bool>,
    #[serde(default)]
    limit: Option<Intensity>,
    #[serde(default)]
    ispta_spacing: Option<Length>,
    #[serde(default)]
    ispta_z_min: Option<Length>,
    #[serde(default)]
    ispta_depth_factor: Option<f64>,
    #[serde(default)]
    ispta_margin: Option<Length>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawField {
    #[serde(default)]
    surface_pressure: Option<Pressure>,
    #[serde(default)]
    repetition_period: Option<Duration>,
    #[serde(default)]
    method: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    name: String,
    min: [Length; 3],
    max: [Length; 3],
    spacing: Length,
    #[serde(default)]
    csv_stride: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScan {
    radius: Length,
    from: Angle,
    to: Angle,
    step: Angle,
    #[serde(default)]
    azimuth: Option<Angle>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: String,
    values: Vec<toml::Value>,
}

/// Array description; perturbations are drawn when the layout is built.
#[derive(Debug, Clone, PartialEq)]
pub struct ArraySpec {
    pub rows: usize,
    pub cols: usize,
    pub pitch: f64,
    pub element_size: f64,
    pub corner_cut: usize,
    pub carrier: f64,
    pub position_jitter: f64,
    pub sensitivity_spread: f64,
    pub dead_elements: Vec<usize>,
}

impl ArraySpec {
    /// Layout as designed.
    pub fn nominal(&self) -> implantbeam::Result<ArrayLayout> {
        build_array_layout(self.rows, self.cols, self.pitch, self.element_size, self.corner_cut, self.carrier)
    }

    /// Layout as built, with seeded perturbations applied.
    pub fn actual(&self, seed: u64) -> implantbeam::Result<ArrayLayout> {
        let mut l = self.nominal()?;
        if self.position_jitter > 0.0 {
            l = l.with_position_jitter(self.position_jitter, seed)?;
        }
        if self.sensitivity_spread > 0.0 {
            l = l.with_sensitivity_spread(self.sensitivity_spread, seed.wrapping_add(1))?;
        }
        if !self.dead_elements.is_empty() {
            l = l.with_dead_elements(&self.dead_elements)?;
        }
        Ok(l)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformPlan {
    pub config: BeamformConfig,
    pub methods: Vec<Method>,
    pub target: usize,
    pub targets: Option<Vec<usize>>,
    pub combine: Combine,
    pub das_assumes: DasAssumption,
    pub max_iter: usize,
    pub delay_tol: Option<f64>,
    pub noise_rms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedGrid {
    pub name: String,
    pub grid: SampleGrid,
    pub csv_stride: usize,
    raw: ([f64; 3], [f64; 3]),
}

impl NamedGrid {
    pub fn respace(&mut self, spacing: f64) -> CliResult<()> {
        let (a, b) = self.raw;
        self.grid = SampleGrid::with_spacing(Point3::new(a[0], a[1], a[2]), Point3::new(b[0], b[1], b[2]), spacing)
            .map_err(|e| CliError::Validation(format!("grid `{}`: {e}", self.name)))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub radius: f64,
    pub angles: Vec<f64>,
    pub azimuth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub parameter: String,
    pub values: Vec<toml::Value>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: Option<String>,
    pub seed: u64,
    pub experiment: Experiment,
    pub array: ArraySpec,
    pub medium: LayeredMedium,
    pub implants: Vec<Implant>,
    pub clutter: Vec<Clutter>,
    pub beamform: BeamformPlan,
    pub link: LinkSettings,
    pub fda_rescale: bool,
    pub field: FieldSettings,
    pub grids: Vec<NamedGrid>,
    pub scan: Option<Scan>,
    pub sweep: Option<Sweep>,
}

impl Scenario {
    pub fn scene(&self) -> implantbeam::Result<Scene> {
        Ok(Scene::new(self.medium.clone(), self.implants.clone(), self.clutter.clone())?
            .with_field_settings(self.field.clone()))
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }

    pub fn set_grid_spacing(&mut self, spacing: f64) -> CliResult<()> {
        if !(spacing > 0.0) {
            return Err(CliError::Validation("grid spacing must be positive".into()));
        }
        for g in &mut self.grids {
            g.respace(spacing)?;
        }
        Ok(())
    }
}

/// 1-based line of a byte offset.
pub fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

struct Ctx<'a> {
    src: &'a str,
    origin: &'a str,
}

impl Ctx<'_> {
    fn err(&self, span: std::ops::Range<usize>, msg: impl std::fmt::Display) -> CliError {
        CliError::Validation(format!("{}:{}: {msg}", self.origin, line_of(self.src, span.start)))
    }
}

fn material(
    preset: Option<&str>,
    speed: Option<Speed>,
    density: Option<Density>,
    attenuation: Option<Attenuation>,
) -> Result<Medium, String> {
    let base = match preset {
        Some("oil") => Some(Medium::oil()),
        Some("tissue") => Some(Medium::tissue()),
        Some("reference") | Some("water") => Some(Medium::reference()),
        Some(other) => return Err(format!("unknown medium preset `{other}` (oil, tissue, reference)")),
        None => None,
    };
    let pick = |v: Option<f64>, b: Option<f64>, what: &str| {
        v.or(b).ok_or_else(|| format!("medium needs `{what}` or a `preset`"))
    };
    let c = pick(speed.map(|s| s.0), base.map(|m| m.sound_speed), "sound_speed")?;
    let rho = pick(density.map(|d| d.0), base.map(|m| m.density), "density")?;
    let alpha = pick(attenuation.map(|a| a.0), base.map(|m| m.attenuation), "attenuation")?;
    Medium::new(c, rho, alpha).map_err(|e| e.to_string())
}

fn point(p: &[Length; 3]) -> Point3 {
    Point3::new(p[0].0, p[1].0, p[2].0)
}

/// Parse and validate scenario text; `origin` labels diagnostics.
pub fn parse_scenario(src: &str, origin: &str) -> CliResult<Scenario> {
    let raw: RawScenario = toml::from_str(src).map_err(|e| {
        let line = e.span().map(|s| format!("{}:{}: ", origin, line_of(src, s.start))).unwrap_or_default();
        CliError::Validation(format!("{line}{}", e.message()))
    })?;
    let cx = Ctx { src, origin };

    let a_span = raw.array.span();
    let a = raw.array.into_inner();
    let spread = a.sensitivity_spread.unwrap_or(0.0);
    if !(0.0..1.0).contains(&spread) {
        return Err(cx.err(a_span, "sensitivity_spread must lie in [0, 1)"));
    }
    let array = ArraySpec {
        rows: a.rows,
        cols: a.cols,
        pitch: a.pitch.0,
        element_size: a.element_size.0,
        corner_cut: a.corner_cut,
        carrier: a.carrier.0,
        position_jitter: a.position_jitter.map_or(0.0, |j| j.0),
        sensitivity_spread: spread,
        dead_elements: a.dead_elements,
    };
    let nominal = array.nominal().map_err(|e| cx.err(a_span.clone(), format!("[array]: {e}")))?;
    if array.dead_elements.iter().any(|&i| i >= nominal.len()) {
        return Err(cx.err(a_span, format!("dead element index beyond the {} elements", nominal.len())));
    }

    let m_span = raw.medium.span();
    let m = raw.medium.into_inner();
    let terminal = material(m.preset.as_deref(), m.sound_speed, m.density, m.attenuation)
        .map_err(|e| cx.err(m_span.clone(), format!("[medium]: {e}")))?;
    let mut slabs = Vec::new();
    for s in &m.slab {
        let medium = material(s.preset.as_deref(), s.sound_speed, s.density, s.attenuation)
            .map_err(|e| cx.err(m_span.clone(), format!("[[medium.slab]]: {e}")))?;
        slabs.push(Slab { medium, thickness: s.thickness.0 });
    }
    let medium = LayeredMedium::new(slabs, terminal).map_err(|e| cx.err(m_span, format!("[medium]: {e}")))?;

    let (b_span, b) = match raw.beamform {
        Some(b) => (b.span(), b.into_inner()),
        None => (0..0, RawBeamform::default()),
    };
    let defaults = BeamformConfig::default();
    let quantize_threshold = match &b.quantize {
        None => defaults.quantize_threshold,
        Some(toml::Value::Boolean(false)) => None,
        Some(toml::Value::Boolean(true)) => defaults.quantize_threshold,
        Some(toml::Value::Float(f)) if *f > 0.0 && *f < 1.0 => Some(*f),
        Some(_) => return Err(cx.err(b_span, "quantize must be `false`, `true` or a fraction in (0, 1)")),
    };
    let config = BeamformConfig {
        carrier: array.carrier,
        cycles: b.cycles.unwrap_or(defaults.cycles),
        sample_rate: b.sample_rate.map_or(defaults.sample_rate, |f| f.0),
        quantize_threshold,
        ..defaults
    };
    if !(config.cycles > 0.0) {
        return Err(cx.err(b_span, "cycles must be positive"));
    }
    if !(config.sample_rate > 2.0 * config.carrier) {
        return Err(cx.err(
            b_span,
            format!("sample_rate {} MHz is below twice the {} MHz carrier", config.sample_rate, config.carrier),
        ));
    }

    let mut implants = Vec::new();
    for sp in &raw.implant {
        let span = sp.span();
        let r = sp.get_ref();
        let mut imp = Implant::new(point(&r.position));
        if let Some(f) = r.face_size {
            imp = imp.with_face_size(f.0);
        }
        let (open, short) = (imp.reflection_open, imp.reflection_short);
        imp = imp.with_reflection(r.reflection_open.unwrap_or(open), r.reflection_short.unwrap_or(short));
        if let Some(e) = r.rx_efficiency {
            imp.rx_efficiency_db = e.0;
        }
        if r.active {
            let ping = implantbeam::tone_burst(config.carrier, config.cycles, 1.0, config.sample_rate)
                .map_err(|e| cx.err(span.clone(), e))?;
            imp = imp.with_ping(ping);
        }
        imp.validate().map_err(|e| cx.err(span, format!("[[implant]]: {e}")))?;
        implants.push(imp);
    }
    let clutter: Vec<Clutter> = raw.clutter.iter().map(|c| Clutter::new(point(&c.position), c.reflection)).collect();

    let methods = match (&raw.compare, b.method) {
        (Some(list), _) if list.is_empty() => {
            return Err(cx.err(b_span, "`compare` lists no methods"));
        }
        (Some(list), _) => list.clone(),
        (None, Some(m)) => vec![m],
        (None, None) => vec![Method::DelayAndSum],
    };
    let target = b.target.unwrap_or(0);
    let needs_implant = raw.experiment == Experiment::Link || methods.iter().any(|m| *m != Method::Unfocused);
    if needs_implant && implants.is_empty() {
        return Err(cx.err(b_span, "the scenario needs at least one [[implant]]"));
    }
    if !implants.is_empty() && target >= implants.len() {
        return Err(cx.err(b_span, format!("target {target} but only {} implants", implants.len())));
    }
    if let Some(ts) = &b.targets {
        if ts.len() != 2 || ts.iter().any(|&t| t >= implants.len()) || ts[0] == ts[1] {
            return Err(cx.err(b_span, "targets must name two different implants"));
        }
    }
    let focus_set: Vec<usize> = b.targets.clone().unwrap_or_else(|| vec![target]);
    for m in &methods {
        if m.needs_active_implant() {
            if let Some(&i) = focus_set.iter().find(|&&i| !implants.get(i).is_some_and(|imp| imp.is_active())) {
                return Err(cx.err(b_span, format!("{} needs an active implant but implant {i} is passive", m.name())));
            }
        }
    }
    let beamform = BeamformPlan {
        config,
        methods,
        target,
        targets: b.targets,
        combine: b.combine,
        das_assumes: b.das_assumes,
        max_iter: b.max_iter.unwrap_or(10),
        delay_tol: b.delay_tol.map(|d| d.0),
        noise_rms: b.noise_rms.unwrap_or(0.0),
    };
    if beamform.max_iter == 0 || !(beamform.noise_rms >= 0.0) {
        return Err(cx.err(b_span, "max_iter must be ≥ 1 and noise_rms ≥ 0"));
    }

    let l = raw.link;
    let ds = IsptaSearch::default();
    let link = LinkSettings {
        eta_tx_db: l.eta_tx.map_or(-6.0, |d| d.0),
        face_samples: l.face_samples.unwrap_or(8),
        plane_half_width: l.plane_half_width.map_or(100.0, |x| x.0),
        plane_spacing: l.plane_spacing.map_or(1.0, |x| x.0),
        ispta: Some(IsptaSearch {
            spacing: l.ispta_spacing.map_or(ds.spacing, |x| x.0),
            z_min: l.ispta_z_min.map_or(ds.z_min, |x| x.0),
            depth_factor: l.ispta_depth_factor.unwrap_or(ds.depth_factor),
            margin: l.ispta_margin.map_or(ds.margin, |x| x.0),
        }),
        limit: l.limit.map_or(implantbeam::metrics::FDA_ISPTA_LIMIT, |i| i.0),
    };
    let fda_rescale = l.fda_rescale.unwrap_or(true);

    let mut field = FieldSettings::default();
    if let Some(p) = raw.field.surface_pressure {
        field.surface_pressure = p.0;
    }
    field.repetition_period = raw.field.repetition_period.map(|d| d.0);
    field.method = match raw.field.method.as_deref() {
        None | Some("auto") => EvaluationMethod::Auto,
        Some("time_domain") => EvaluationMethod::TimeDomain,
        Some("correlation") => EvaluationMethod::Correlation,
        Some(other) => {
            return Err(CliError::Validation(format!(
                "{origin}: unknown field method `{other}` (auto, time_domain, correlation)"
            )))
        }
    };

    let mut grids = Vec::new();
    for g in &raw.grid {
        let span = g.span();
        let r = g.get_ref();
        let grid = SampleGrid::with_spacing(point(&r.min), point(&r.max), r.spacing.0)
            .map_err(|e| cx.err(span.clone(), format!("grid `{}`: {e}", r.name)))?;
        if grid.min.z <= 0.0 {
            return Err(cx.err(span, format!("grid `{}` must lie in front of the array (z > 0)", r.name)));
        }
        if r.name.is_empty() || !r.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(cx.err(span, "grid names may use letters, digits, `_` and `-` only"));
        }
        let mn = [r.min[0].0, r.min[1].0, r.min[2].0];
        let mx = [r.max[0].0, r.max[1].0, r.max[2].0];
        grids.push(NamedGrid {
            name: r.name.clone(),
            grid,
            csv_stride: r.csv_stride.unwrap_or(1).max(1),
            raw: (mn, mx),
        });
    }

    let scan = match raw.scan {
        Some(s) => {
            let span = s.span();
            let s = s.into_inner();
            if !(s.step.0 > 0.0 && s.to.0 > s.from.0 && s.radius.0 > 0.0) {
                return Err(cx.err(span, "scan needs radius > 0, to > from and step > 0"));
            }
            let n = ((s.to.0 - s.from.0) / s.step.0 + 1e-9).floor() as usize;
            let angles = (0..=n).map(|k| s.from.0 + s.step.0 * k as f64).collect();
            Some(Scan { radius: s.radius.0, angles, azimuth: s.azimuth.map_or(0.0, |a| a.0) })
        }
        None => None,
    };
    if raw.experiment == Experiment::Directivity && scan.is_none() {
        return Err(CliError::Validation(format!("{origin}: the directivity experiment needs a [scan] table")));
    }

    let sweep = match raw.sweep {
        Some(s) => {
            let span = s.span();
            let s = s.into_inner();
            if s.values.is_empty() {
                return Err(cx.err(span, "sweep has no values"));
            }
            Some(Sweep { parameter: s.parameter, values: s.values })
        }
        None => None,
    };

    Ok(Scenario {
        name: raw.name,
        description: raw.description,
        seed: raw.seed,
        experiment: raw.experiment,
        array,
        medium,
        implants,
        clutter,
        beamform,
        link,
        fda_rescale,
        field,
        grids,
        scan,
        sweep,
    })
}

pub fn read_scenario(path: &Path) -> CliResult<(String, Scenario)> {
    let src = std::fs::read_to_string(path).map_err(CliError::io(path))?;
    let scn = parse_scenario(&src, &path.display().to_string())?;
    Ok((src, scn))
}

/// Replace the scalar at a dotted path (`array.pitch`, `implant.0.position.2`)
/// and return the edited document text with any `[sweep]` table removed.
pub fn with_parameter(src: &str, path: &str, value: &toml::Value) -> CliResult<String> {
    let mut doc: toml::Table =
        toml::from_str(src).map_err(|e| CliError::Validation(format!("scenario does not parse: {}", e.message())))?;
    doc.remove("sweep");
    let unknown = || CliError::Validation(format!("unknown parameter path `{path}`"));
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(unknown());
    }
    let (first, rest) = keys.split_first().ok_or_else(unknown)?;
    let mut slot = doc.get_mut(*first).ok_or_else(unknown)?;
    for k in rest {
        slot = match slot {
            toml::Value::Table(t) => t.get_mut(*k).ok_or_else(unknown)?,
            toml::Value::Array(a) => {
                let i: usize = k.parse().map_err(|_| unknown())?;
                a.get_mut(i).ok_or_else(unknown)?
            }
            _ => return Err(unknown()),
        };
    }
    if matches!(slot, toml::Value::Table(_) | toml::Value::Array(_)) {
        return Err(CliError::Validation(format!("parameter `{path}` is not a scalar")));
    }
    *slot = value.clone();
    toml::to_string(&doc).map_err(|e| CliError::Validation(format!("cannot rewrite scenario: {e}")))
}

/// Replace the list of methods to compare.
pub fn with_methods(src: &str, methods: &[Method]) -> CliResult<String> {
    let mut doc: toml::Table =
        toml::from_str(src).map_err(|e| CliError::Validation(format!("scenario does not parse: {}", e.message())))?;
    let list = methods.iter().map(|m| toml::Value::String(m.name().into())).collect();
    doc.insert("compare".into(), toml::Value::Array(list));
    toml::to_string(&doc).map_err(|e| CliError::Validation(format!("cannot rewrite scenario: {e}")))
}

/// Interpret a command-line sweep value: numbers and booleans as such,
/// anything else as a string (quantities keep their units).
pub fn cli_value(s: &str) -> toml::Value {
    let s = s.trim();
    if let Ok(i) = s.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = s.parse::<f64>() {
        toml::Value::Float(f)
    } else if let Ok(b) = s.parse::<bool>() {
        toml::Value::Boolean(b)
    } else {
        toml::Value::String(s.to_string())
    }
}

/// Label for a sweep value, safe as a directory name.
pub fn value_label(v: &toml::Value) -> String {
    let s = match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '+' { c } else { '_' })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
[array]
rows = 2
cols = 2
pitch = "1.8 mm"
element_size = "0.8 mm"
carrier = "1.5 MHz"
[medium]
preset = "oil"
[[implant]]
position = ["0 mm", "0 mm", "20 mm"]
"#;

    #[test]
    fn minimal_scenario_parses() {
        let s = parse_scenario(MINIMAL, "t.toml").unwrap();
        assert_eq!(s.array.nominal().unwrap().len(), 4);
        assert_eq!(s.beamform.methods, vec![Method::DelayAndSum]);
        assert_eq!(s.implants[0].position, Point3::new(0.0, 0.0, 20.0));
    }

    #[test]
    fn missing_unit_reports_its_line() {
        let src = MINIMAL.replace("pitch = \"1.8 mm\"", "pitch = 1.8");
        let e = parse_scenario(&src, "t.toml").unwrap_err().to_string();
        assert!(e.starts_with("t.toml:6:"), "{e}");
        assert!(e.contains("no unit"), "{e}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let src = MINIMAL.replace("rows = 2", "rows = 2\nrowz = 3");
        let e = parse_scenario(&src, "t.toml").unwrap_err().to_string();
        assert!(e.contains("rowz"), "{e}");
    }

    #[test]
    fn semantic_errors_point_at_their_table() {
        let src = MINIMAL.replace("\"0.8 mm\"", "\"2.0 mm\"");
        let e = parse_scenario(&src, "t.toml").unwrap_err().to_string();
        assert!(e.contains("exceeds pitch"), "{e}");
        assert!(e.starts_with("t.toml:3:") || e.starts_with("t.toml:4:"), "{e}");
    }

    #[test]
    fn active_methods_need_active_implants() {
        let src = format!("{MINIMAL}[beamform]\nmethod = \"time_reversal\"\n");
        assert!(parse_scenario(&src, "t").unwrap_err().to_string().contains("active implant"));
        let src = src.replace("20 mm\"]", "20 mm\"]\nactive = true");
        assert!(parse_scenario(&src, "t").is_ok());
    }

    #[test]
    fn parameter_paths() {
        let edited = with_parameter(MINIMAL, "array.pitch", &toml::Value::String("2.5 mm".into())).unwrap();
        assert_eq!(parse_scenario(&edited, "t").unwrap().array.pitch, 2.5);
        let edited = with_parameter(MINIMAL, "implant.0.position.0", &cli_value("5 mm")).unwrap();
        assert_eq!(parse_scenario(&edited, "t").unwrap().implants[0].position.x, 5.0);
        assert!(with_parameter(MINIMAL, "array.nope", &cli_value("1")).is_err());
        assert!(with_parameter(MINIMAL, "array", &cli_value("1")).is_err());
        assert!(with_parameter(MINIMAL, "implant.3.position", &cli_value("1")).is_err());
    }

    #[test]
    fn labels_are_path_safe() {
        assert_eq!(value_label(&cli_value("1.8 mm")), "1.8_mm");
        assert_eq!(value_label(&cli_value("-15 mm")), "-15_mm");
        assert_eq!(value_label(&cli_value("3")), "3");
    }
}
