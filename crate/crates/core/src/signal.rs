//! Uniformly sampled drive and receive signals.

use crate::error::{Error, Result};

/// A uniformly sampled signal in drive units. Time is in µs, rates in MHz.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: f64,
    start_time: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: f64, start_time: f64) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::Sampling(format!("sample rate must be positive, got {sample_rate}")));
        }
        if !start_time.is_finite() {
            return Err(Error::Sampling("start time must be finite".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Sampling(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, sample_rate, start_time })
    }

    /// Waveform whose first sample sits on the absolute sample grid at
    /// index `start_index` (time `start_index / sample_rate`).
    pub fn on_grid(samples: Vec<f64>, sample_rate: f64, start_index: i64) -> Result<Self> {
        Self::new(samples, sample_rate, start_index as f64 / sample_rate)
    }

    pub fn zeros(len: usize, sample_rate: f64, start_time: f64) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate, start_time)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    /// Index of the first sample on the absolute sample grid.
    pub fn start_index(&self) -> i64 {
        (self.start_time * self.sample_rate).round() as i64
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// µs
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    /// Σ s² Δt, in drive-units² · µs.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.sample_rate
    }

    pub fn is_silent(&self) -> bool {
        self.samples.iter().all(|&s| s == 0.0)
    }

    pub fn scaled(&self, k: f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|s| s * k).collect(),
            sample_rate: self.sample_rate,
            start_time: self.start_time,
        }
    }

    /// Sample-reversed copy with the same start time.
    pub fn reversed(&self) -> Waveform {
        let mut samples = self.samples.clone();
        samples.reverse();
        Waveform { samples, ..self.clone() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Waveform {
        Waveform {
            samples: self.samples.iter().map(|&s| f(s)).collect(),
            sample_rate: self.sample_rate,
            start_time: self.start_time,
        }
    }
}

/// Sum a collection of on-grid waveforms sharing one sample rate. The result
/// spans the union of their supports.
pub fn sum_on_grid<'a>(waves: impl IntoIterator<Item = &'a Waveform>, sample_rate: f64) -> Result<Waveform> {
    let waves: Vec<&Waveform> = waves.into_iter().collect();
    if waves.iter().any(|w| (w.sample_rate - sample_rate).abs() > 1e-9 * sample_rate) {
        return Err(Error::Shape("waveforms have different sample rates".into()));
    }
    let nonempty: Vec<&&Waveform> = waves.iter().filter(|w| !w.is_empty()).collect();
    if nonempty.is_empty() {
        return Waveform::zeros(0, sample_rate, waves.first().map_or(0.0, |w| w.start_time));
    }
    let lo = nonempty.iter().map(|w| w.start_index()).min().unwrap();
    let hi = nonempty.iter().map(|w| w.start_index() + w.len() as i64).max().unwrap();
    let mut out = vec![0.0; (hi - lo) as usize];
    for w in nonempty {
        let off = (w.start_index() - lo) as usize;
        for (o, s) in out[off..].iter_mut().zip(&w.samples) {
            *o += s;
        }
    }
    Waveform::on_grid(out, sample_rate, lo)
}

/// One waveform per array element plus a common drive amplitude scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationSet {
    waveforms: Vec<Waveform>,
    drive_amplitude_scale: f64,
}

impl ExcitationSet {
    pub fn new(waveforms: Vec<Waveform>, drive_amplitude_scale: f64) -> Result<Self> {
        if let Some(first) = waveforms.first() {
            let fs = first.sample_rate;
            if waveforms.iter().any(|w| (w.sample_rate - fs).abs() > 1e-9 * fs) {
                return Err(Error::Shape("excitation waveforms must share a sample rate".into()));
            }
        }
        if !(drive_amplitude_scale >= 0.0 && drive_amplitude_scale.is_finite()) {
            return Err(Error::InvalidParameter("drive amplitude scale must be non-negative".into()));
        }
        Ok(Self { waveforms, drive_amplitude_scale })
    }

    /// Build and check the sample rate against `carrier` (MHz).
    pub fn for_carrier(waveforms: Vec<Waveform>, drive_amplitude_scale: f64, carrier: f64) -> Result<Self> {
        let set = Self::new(waveforms, drive_amplitude_scale)?;
        if let Some(fs) = set.sample_rate() {
            check_nyquist(fs, carrier)?;
        }
        Ok(set)
    }

    pub fn waveforms(&self) -> &[Waveform] {
        &self.waveforms
    }

    pub fn waveform(&self, i: usize) -> &Waveform {
        &self.waveforms[i]
    }

    pub fn into_waveforms(self) -> Vec<Waveform> {
        self.waveforms
    }

    pub fn len(&self) -> usize {
        self.waveforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waveforms.is_empty()
    }

    pub fn drive_amplitude_scale(&self) -> f64 {
        self.drive_amplitude_scale
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.drive_amplitude_scale = scale;
        self
    }

    pub fn sample_rate(&self) -> Option<f64> {
        self.waveforms.first().map(|w| w.sample_rate)
    }

    /// Σ over elements of the scaled waveform energy (drive-units² · µs).
    pub fn total_energy(&self) -> f64 {
        let k = self.drive_amplitude_scale;
        self.waveforms.iter().map(|w| w.energy()).sum::<f64>() * k * k
    }

    /// Earliest start and latest end over all non-empty waveforms (µs).
    pub fn time_span(&self) -> Option<(f64, f64)> {
        let it = self.waveforms.iter().filter(|w| !w.is_empty());
        let lo = it.clone().map(|w| w.start_time).fold(f64::INFINITY, f64::min);
        let hi = it.map(|w| w.end_time()).fold(f64::NEG_INFINITY, f64::max);
        (lo.is_finite() && hi.is_finite()).then_some((lo, hi))
    }

    pub fn is_silent(&self) -> bool {
        self.drive_amplitude_scale == 0.0 || self.waveforms.iter().all(|w| w.is_silent())
    }

    /// Check that `other` has the same element count, sample rate, start
    /// times and lengths.
    pub fn check_same_shape(&self, other: &ExcitationSet) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Shape(format!("element counts differ: {} vs {}", self.len(), other.len())));
        }
        for (i, (a, b)) in self.waveforms.iter().zip(&other.waveforms).enumerate() {
            if a.len() != b.len()
                || (a.sample_rate - b.sample_rate).abs() > 1e-9 * a.sample_rate
                || (a.start_time - b.start_time).abs() > 1e-9
            {
                return Err(Error::Shape(format!("element {i} waveforms differ in timing or length")));
            }
        }
        Ok(())
    }
}

pub(crate) fn check_nyquist(sample_rate: f64, frequency: f64) -> Result<()> {
    if !(sample_rate > 2.0 * frequency) {
        return Err(Error::Sampling(format!(
            "sample rate {sample_rate} MHz does not exceed twice the {frequency} MHz carrier"
        )));
    }
    Ok(())
}

/// Cosine-phase burst of `cycles` periods, starting at t = 0. The first sample
/// sits on a crest, so the peak sample magnitude equals `amplitude` for any
/// sample rate.
pub fn tone_burst(frequency: f64, cycles: f64, amplitude: f64, sample_rate: f64) -> Result<Waveform> {
    delayed_tone_burst(frequency, cycles, amplitude, sample_rate, 0.0)
}

/// Burst as in [`tone_burst`] but shifted by `delay` µs. The delay is applied
/// to the carrier phase exactly; the burst gate starts at the first sample at
/// or after `delay`.
pub fn delayed_tone_burst(
    frequency: f64,
    cycles: f64,
    amplitude: f64,
    sample_rate: f64,
    delay: f64,
) -> Result<Waveform> {
    if !(frequency > 0.0) {
        return Err(Error::InvalidParameter("burst frequency must be positive".into()));
    }
    if !(cycles >= 0.0) {
        return Err(Error::InvalidParameter("cycle count must be non-negative".into()));
    }
    check_nyquist(sample_rate, frequency)?;
    let n = (cycles / frequency * sample_rate).round() as usize;
    let start = (delay * sample_rate - 1e-9).ceil() as i64;
    let w = 2.0 * std::f64::consts::PI * frequency;
    let samples = (0..n)
        .map(|k| {
            let t = (start + k as i64) as f64 / sample_rate;
            amplitude * (w * (t - delay)).cos()
        })
        .collect();
    Waveform::on_grid(samples, sample_rate, start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn burst_duration_matches_cycle_count() {
        let w = tone_burst(1.5, 40.0, 1.0, 57.0).unwrap();
        assert_eq!(w.len(), 1520);
        assert!((w.duration() - 40.0 / 1.5).abs() < 1e-9);
        assert!((w.duration() - 26.67).abs() < 0.01);
        assert!(tone_burst(1.5, 0.0, 1.0, 57.0).unwrap().is_empty());
    }

    #[test]
    fn sub_nyquist_rejected() {
        assert!(matches!(tone_burst(1.5, 4.0, 1.0, 3.0), Err(Error::Sampling(_))));
        assert!(matches!(tone_burst(1.5, 4.0, 1.0, 2.9), Err(Error::Sampling(_))));
    }

    #[test]
    fn invalid_samples_rejected() {
        assert!(Waveform::new(vec![0.0, f64::NAN], 57.0, 0.0).is_err());
        assert!(Waveform::new(vec![0.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn sum_on_grid_aligns_offsets() {
        let a = Waveform::on_grid(vec![1.0, 1.0], 10.0, 2).unwrap();
        let b = Waveform::on_grid(vec![1.0, 1.0, 1.0], 10.0, 3).unwrap();
        let s = sum_on_grid([&a, &b], 10.0).unwrap();
        assert_eq!(s.start_index(), 2);
        assert_eq!(s.samples(), &[1.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn delayed_burst_phase_is_exact() {
        let w = delayed_tone_burst(1.5, 2.0, 1.0, 57.0, 0.1234).unwrap();
        let t0 = w.start_time();
        assert!(t0 >= 0.1234 && t0 - 0.1234 < 1.0 / 57.0);
        let expected = (2.0 * std::f64::consts::PI * 1.5 * (t0 - 0.1234)).cos();
        assert!((w.samples()[0] - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn burst_peak_equals_amplitude(f in 0.5f64..3.0, n in 1u32..60, a in 0.1f64..10.0, ratio in 2.2f64..60.0) {
            let w = tone_burst(f, n as f64, a, f * ratio).unwrap();
            prop_assert!((w.peak() - a).abs() < 1e-12 * a);
        }

        #[test]
        fn burst_energy_close_to_continuous(f in 0.5f64..3.0, n in 1u32..60, a in 0.1f64..10.0, ratio in 4.0f64..60.0) {
            let fs = f * ratio;
            let w = tone_burst(f, n as f64, a, fs).unwrap();
            let ideal = a * a * n as f64 / (2.0 * f);
            prop_assert!((w.energy() - ideal).abs() <= a * a / fs + 1e-12);
        }
    }
}
