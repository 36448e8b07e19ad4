//! Numerical field evaluation on points and grids.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::field::propagation::{push_taps, PathTerm, PropagationSettings, Propagator, Tap};
use crate::geometry::Point3;
use crate::grid::SampleGrid;
use crate::layout::ArrayLayout;
use crate::medium::LayeredMedium;
use crate::signal::{ExcitationSet, Waveform};

/// How time-averaged intensity is evaluated. Both routes are exact up to
/// rounding; `Auto` picks the cheaper one per point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvaluationMethod {
    #[default]
    Auto,
    TimeDomain,
    Correlation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSettings {
    /// Acoustic pressure at the element face per unit drive (Pa).
    pub surface_pressure: f64,
    /// Averaging window for intensity (µs). `None` uses pulse duration plus
    /// twice the largest time of flight to the evaluated points.
    pub repetition_period: Option<f64>,
    /// Worker count; `None` uses the global pool.
    pub threads: Option<usize>,
    pub propagation: PropagationSettings,
    pub method: EvaluationMethod,
    /// Upper bound on correlation-bank memory (bytes).
    pub correlation_memory: usize,
}

impl Default for FieldSettings {
    fn default() -> Self {
        Self {
            surface_pressure: 1.0e5,
            repetition_period: None,
            threads: None,
            propagation: PropagationSettings::default(),
            method: EvaluationMethod::Auto,
            correlation_memory: 512 << 20,
        }
    }
}

impl FieldSettings {
    pub fn with_period(mut self, period: f64) -> Self {
        self.repetition_period = Some(period);
        self
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    pub fn with_method(mut self, method: EvaluationMethod) -> Self {
        self.method = method;
        self
    }

    pub(crate) fn run<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        match self.threads {
            None => Ok(f()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
                Ok(pool.install(f))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    /// Time-averaged intensity per grid point (mW/cm²).
    Intensity(Vec<f64>),
    /// Pressure time series per grid point (Pa).
    TimeSeries(Vec<Waveform>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressureField {
    pub grid: SampleGrid,
    pub data: FieldData,
}

impl PressureField {
    pub fn new(grid: SampleGrid, data: FieldData) -> Result<Self> {
        let n = match &data {
            FieldData::Intensity(v) => {
                if v.iter().any(|x| !(*x >= 0.0)) {
                    return Err(Error::Domain("intensity values must be non-negative".into()));
                }
                v.len()
            }
            FieldData::TimeSeries(v) => v.len(),
        };
        if n != grid.len() {
            return Err(Error::Shape(format!("{n} values for a grid of {} points", grid.len())));
        }
        Ok(Self { grid, data })
    }

    pub fn is_intensity(&self) -> bool {
        matches!(self.data, FieldData::Intensity(_))
    }

    pub fn intensity(&self) -> Option<&[f64]> {
        match &self.data {
            FieldData::Intensity(v) => Some(v),
            FieldData::TimeSeries(_) => None,
        }
    }

    /// Scale the underlying pressure by `k`.
    pub fn scaled_pressure(&self, k: f64) -> Self {
        let data = match &self.data {
            FieldData::Intensity(v) => FieldData::Intensity(v.iter().map(|x| x * k * k).collect()),
            FieldData::TimeSeries(v) => FieldData::TimeSeries(v.iter().map(|w| w.scaled(k)).collect()),
        };
        Self { grid: self.grid.clone(), data }
    }
}

/// Cross-correlations of every pair of distinct drive waveforms.
#[derive(Debug)]
struct CorrelationBank {
    /// element index → waveform id (`None` when silent)
    ids: Vec<Option<usize>>,
    /// (offset, values) per pair a ≤ b, values[d + offset] = Σ s_a[i] s_b[i + d]
    pairs: Vec<(usize, Vec<f64>)>,
    n: usize,
}

impl CorrelationBank {
    fn bytes_needed(lens: &[usize]) -> usize {
        let mut total = 0usize;
        for (a, la) in lens.iter().enumerate() {
            for lb in &lens[a..] {
                total = total.saturating_add((la + lb) * 8);
            }
        }
        total
    }

    fn build(exc: &ExcitationSet, cap: usize) -> Option<Self> {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut uniq: Vec<&[f64]> = Vec::new();
        let ids: Vec<Option<usize>> = exc
            .waveforms()
            .iter()
            .map(|w| {
                if w.is_silent() {
                    return None;
                }
                let key: Vec<u64> = w.samples().iter().map(|s| s.to_bits()).collect();
                Some(*index.entry(key).or_insert_with(|| {
                    uniq.push(w.samples());
                    uniq.len() - 1
                }))
            })
            .collect();
        let lens: Vec<usize> = uniq.iter().map(|s| s.len()).collect();
        if Self::bytes_needed(&lens) > cap {
            return None;
        }
        let lmax = lens.iter().copied().max().unwrap_or(0);
        let nfft = (2 * lmax).max(2).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(nfft);
        let inv = planner.plan_fft_inverse(nfft);
        let spectra: Vec<Vec<Complex<f64>>> = uniq
            .iter()
            .map(|s| {
                let mut buf: Vec<Complex<f64>> = s.iter().map(|&x| Complex::new(x, 0.0)).collect();
                buf.resize(nfft, Complex::new(0.0, 0.0));
                fwd.process(&mut buf);
                buf
            })
            .collect();
        let u = uniq.len();
        let mut pairs = Vec::with_capacity(u * (u + 1) / 2);
        let scale = 1.0 / nfft as f64;
        for a in 0..u {
            for b in a..u {
                let mut buf: Vec<Complex<f64>> =
                    spectra[a].iter().zip(&spectra[b]).map(|(x, y)| x.conj() * y).collect();
                inv.process(&mut buf);
                let (la, lb) = (lens[a] as i64, lens[b] as i64);
                let off = (la - 1) as usize;
                let vals: Vec<f64> =
                    (-(la - 1)..lb).map(|d| buf[d.rem_euclid(nfft as i64) as usize].re * scale).collect();
                pairs.push((off, vals));
            }
        }
        Some(Self { ids, pairs, n: u })
    }

    fn pair_index(&self, a: usize, b: usize) -> usize {
        // row-major upper triangle
        a * self.n - a * (a + 1) / 2 + b
    }

    /// Σ_{a,b} C[n_a − n_b] for two taps.
    fn lookup(&self, a: usize, b: usize, d: i64) -> f64 {
        let (a, b, d) = if a <= b { (a, b, d) } else { (b, a, -d) };
        let (off, vals) = &self.pairs[self.pair_index(a, b)];
        let k = d + *off as i64;
        if k < 0 || k as usize >= vals.len() {
            0.0
        } else {
            vals[k as usize]
        }
    }

    fn cost(&self, taps: usize) -> usize {
        taps * (taps + 1) / 2
    }
}

/// Evaluates the field radiated by one excitation set.
#[derive(Debug)]
pub struct FieldEngine {
    prop: Propagator,
    exc: ExcitationSet,
    settings: FieldSettings,
    sample_rate: f64,
    bank: OnceLock<Option<CorrelationBank>>,
}

impl FieldEngine {
    pub fn new(
        layout: &ArrayLayout,
        excitations: &ExcitationSet,
        medium: &LayeredMedium,
        settings: &FieldSettings,
    ) -> Result<Self> {
        if excitations.len() != layout.len() {
            return Err(Error::Shape(format!(
                "{} excitation waveforms for {} elements",
                excitations.len(),
                layout.len()
            )));
        }
        let sample_rate = excitations.sample_rate().ok_or_else(|| Error::Shape("empty excitation set".into()))?;
        if !(settings.surface_pressure > 0.0) {
            return Err(Error::InvalidParameter("surface pressure must be positive".into()));
        }
        if let Some(t) = settings.repetition_period {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidParameter("repetition period must be positive".into()));
            }
        }
        Ok(Self {
            prop: Propagator::new(layout, medium, &settings.propagation)?,
            exc: excitations.clone(),
            settings: settings.clone(),
            sample_rate,
            bank: OnceLock::new(),
        })
    }

    pub fn propagator(&self) -> &Propagator {
        &self.prop
    }

    pub fn settings(&self) -> &FieldSettings {
        &self.settings
    }

    fn amplitude(&self) -> f64 {
        self.settings.surface_pressure * self.exc.drive_amplitude_scale()
    }

    fn taps(&self, p: Point3, terms: &mut Vec<PathTerm>, taps: &mut Vec<Tap>) {
        taps.clear();
        let k = self.amplitude();
        for (e, w) in self.exc.waveforms().iter().enumerate() {
            if w.is_silent() {
                continue;
            }
            terms.clear();
            self.prop.element_terms(e, p, terms);
            for t in terms.iter_mut() {
                t.weight *= k;
            }
            push_taps(terms, e as u32, w.start_time(), self.sample_rate, taps);
        }
    }

    /// One-way path terms (delay µs, weight per unit drive in Pa) from
    /// element `index` to `p`.
    pub fn path_terms(&self, index: usize, p: Point3) -> Result<Vec<PathTerm>> {
        self.prop.check_in_front(p)?;
        let mut out = Vec::new();
        self.prop.element_terms(index, p, &mut out);
        let k = self.settings.surface_pressure;
        for t in &mut out {
            t.weight *= k;
        }
        Ok(out)
    }

    fn time_series(&self, taps: &[Tap]) -> Result<Waveform> {
        let wf = self.exc.waveforms();
        let lo = taps.iter().map(|t| t.shift).min();
        let Some(lo) = lo else {
            return Waveform::zeros(0, self.sample_rate, 0.0);
        };
        let hi = taps.iter().map(|t| t.shift + wf[t.elem as usize].len() as i64).max().unwrap();
        let mut out = vec![0.0; (hi - lo) as usize];
        for t in taps {
            let s = wf[t.elem as usize].samples();
            let o = &mut out[(t.shift - lo) as usize..][..s.len()];
            for (y, x) in o.iter_mut().zip(s) {
                *y += t.weight * x;
            }
        }
        Waveform::on_grid(out, self.sample_rate, lo)
    }

    fn energy_correlation(&self, bank: &CorrelationBank, taps: &[Tap]) -> f64 {
        let ids: Vec<usize> = taps.iter().map(|t| bank.ids[t.elem as usize].unwrap()).collect();
        let mut diag = 0.0;
        let mut off = 0.0;
        for (i, a) in taps.iter().enumerate() {
            diag += a.weight * a.weight * bank.lookup(ids[i], ids[i], 0);
            let mut row = 0.0;
            for (j, b) in taps.iter().enumerate().skip(i + 1) {
                row += b.weight * bank.lookup(ids[i], ids[j], a.shift - b.shift);
            }
            off += a.weight * row;
        }
        diag + 2.0 * off
    }

    fn bank(&self) -> Option<&CorrelationBank> {
        if self.settings.method == EvaluationMethod::TimeDomain {
            return None;
        }
        self.bank.get_or_init(|| CorrelationBank::build(&self.exc, self.settings.correlation_memory)).as_ref()
    }

    /// Σ p² over samples (Pa²), by the configured route.
    fn point_energy(&self, taps: &[Tap]) -> Result<f64> {
        let td_cost: usize = taps.iter().map(|t| self.exc.waveform(t.elem as usize).len()).sum();
        let bank = self.bank();
        match (self.settings.method, bank) {
            (EvaluationMethod::Correlation, None) => {
                Err(Error::Capability("correlation bank exceeds the configured memory limit".into()))
            }
            (EvaluationMethod::Correlation, Some(b)) => Ok(self.energy_correlation(b, taps)),
            (EvaluationMethod::Auto, Some(b)) if b.cost(taps.len()) < td_cost => Ok(self.energy_correlation(b, taps)),
            _ => {
                let w = self.time_series(taps)?;
                Ok(w.samples().iter().map(|s| s * s).sum())
            }
        }
    }

    /// Averaging window used for a set of points (µs).
    pub fn repetition_period(&self, points: &[Point3]) -> f64 {
        if let Some(t) = self.settings.repetition_period {
            return t;
        }
        let span = self.exc.time_span().map_or(0.0, |(a, b)| b - a);
        let tof = points
            .iter()
            .flat_map(|p| self.prop.layout().elements().iter().map(move |e| (e, p)))
            .map(|(e, p)| self.prop.medium().ray(e.center, *p).time_of_flight)
            .fold(0.0, f64::max);
        span + 2.0 * tof
    }

    /// Pressure time series at `p` (Pa) on the absolute sample grid.
    pub fn pressure_at(&self, p: Point3) -> Result<Waveform> {
        self.prop.check_in_front(p)?;
        let (mut terms, mut taps) = (Vec::new(), Vec::new());
        self.taps(p, &mut terms, &mut taps);
        self.time_series(&taps)
    }

    pub fn pressure_at_points(&self, points: &[Point3]) -> Result<Vec<Waveform>> {
        for p in points {
            self.prop.check_in_front(*p)?;
        }
        self.settings.run(|| {
            points
                .par_iter()
                .map_init(
                    || (Vec::new(), Vec::new()),
                    |(terms, taps), p| {
                        self.taps(*p, terms, taps);
                        self.time_series(taps)
                    },
                )
                .collect::<Result<Vec<_>>>()
        })?
    }

    /// Time-averaged intensity at each point (mW/cm²), using the local medium
    /// impedance.
    pub fn intensity_at(&self, points: &[Point3]) -> Result<Vec<f64>> {
        for p in points {
            self.prop.check_in_front(*p)?;
        }
        let period = self.repetition_period(points);
        let fs = self.sample_rate;
        let _ = self.bank();
        self.settings.run(|| {
            points
                .par_iter()
                .map_init(
                    || (Vec::new(), Vec::new()),
                    |(terms, taps), p| {
                        self.taps(*p, terms, taps);
                        let e = self.point_energy(taps)?;
                        let z = self.prop.medium().medium_at(p.z).impedance();
                        // Pa²·µs / (µs · Rayl) = W/m²; × 0.1 → mW/cm²
                        Ok((e / fs / period / z * 0.1).max(0.0))
                    },
                )
                .collect::<Result<Vec<_>>>()
        })?
    }

    pub fn intensity_on(&self, grid: &SampleGrid) -> Result<PressureField> {
        PressureField::new(grid.clone(), FieldData::Intensity(self.intensity_at(&grid.points())?))
    }

    pub fn pressure_on(&self, grid: &SampleGrid) -> Result<PressureField> {
        PressureField::new(grid.clone(), FieldData::TimeSeries(self.pressure_at_points(&grid.points())?))
    }
}

/// Time-averaged intensity of `excitations` over `grid`.
pub fn simulate_field(
    layout: &ArrayLayout,
    excitations: &ExcitationSet,
    medium: &LayeredMedium,
    grid: &SampleGrid,
    settings: &FieldSettings,
) -> Result<PressureField> {
    FieldEngine::new(layout, excitations, medium, settings)?.intensity_on(grid)
}

/// Per-element signals received from a point source emitting `waveform`.
/// All outputs share one window covering every element's arrival.
pub fn receive_at_points(
    source: Point3,
    waveform: &Waveform,
    layout: &ArrayLayout,
    medium: &LayeredMedium,
    settings: &PropagationSettings,
) -> Result<ExcitationSet> {
    receive_from_sources(&[(source, waveform.clone())], layout, medium, settings)
}

/// Superposition of several point sources received on every element.
pub fn receive_from_sources(
    sources: &[(Point3, Waveform)],
    layout: &ArrayLayout,
    medium: &LayeredMedium,
    settings: &PropagationSettings,
) -> Result<ExcitationSet> {
    let prop = Propagator::new(layout, medium, settings)?;
    let fs = sources.first().map(|s| s.1.sample_rate()).ok_or_else(|| Error::Shape("no sources".into()))?;
    if sources.iter().any(|s| (s.1.sample_rate() - fs).abs() > 1e-9 * fs) {
        return Err(Error::Shape("sources have different sample rates".into()));
    }
    for (p, _) in sources {
        prop.check_in_front(*p)?;
    }
    let (window, per_element) = receive_taps(&prop, sources, fs);
    let (lo, hi) = window;
    let waves = per_element
        .into_iter()
        .map(|taps| {
            let mut out = vec![0.0; (hi - lo).max(0) as usize];
            for (src, t) in taps {
                let s = sources[src].1.samples();
                let o = &mut out[(t.shift - lo) as usize..][..s.len()];
                for (y, x) in o.iter_mut().zip(s) {
                    *y += t.weight * x;
                }
            }
            Waveform::on_grid(out, fs, lo)
        })
        .collect::<Result<Vec<_>>>()?;
    ExcitationSet::new(waves, 1.0)
}

type ReceiveTaps = ((i64, i64), Vec<Vec<(usize, Tap)>>);

/// Receive taps per element and the common output window, which depends on
/// geometry only (dead elements included).
fn receive_taps(prop: &Propagator, sources: &[(Point3, Waveform)], fs: f64) -> ReceiveTaps {
    let layout = prop.layout();
    let mut terms = Vec::new();
    let mut buf = Vec::new();
    let mut lo = i64::MAX;
    let mut hi = i64::MIN;
    let mut per_element = Vec::with_capacity(layout.len());
    for e in 0..layout.len() {
        let mut taps = Vec::new();
        for (si, (p, w)) in sources.iter().enumerate() {
            if w.is_empty() {
                continue;
            }
            let ray = prop.medium().ray(layout.elements()[e].center, *p);
            let s0 = ((ray.time_of_flight + w.start_time()) * fs).floor() as i64;
            let reach =
                (prop.layout().element_size() / prop.medium().medium_at(0.0).speed_mm_per_us() * fs).ceil() as i64 + 2;
            lo = lo.min(s0 - reach);
            hi = hi.max(s0 + reach + w.len() as i64);
            terms.clear();
            buf.clear();
            prop.element_terms(e, *p, &mut terms);
            push_taps(&terms, e as u32, w.start_time(), fs, &mut buf);
            for t in &buf {
                lo = lo.min(t.shift);
                hi = hi.max(t.shift + w.len() as i64);
            }
            taps.extend(buf.iter().map(|t| (si, *t)));
        }
        per_element.push(taps);
    }
    if lo > hi {
        lo = 0;
        hi = 0;
    }
    ((lo, hi), per_element)
}
