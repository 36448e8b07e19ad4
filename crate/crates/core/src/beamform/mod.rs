//! Transmit beamforming: geometric delay-and-sum, active-uplink time and phase
//! reversal, iterative backscatter reversal, and multi-target combination.

mod estimate;
mod iterative;
mod multi;

use std::io::Write;

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::layout::ArrayLayout;
use crate::medium::LayeredMedium;
use crate::signal::{delayed_tone_burst, tone_burst, ExcitationSet, Waveform};

pub use estimate::{clean_phase_gaps, estimate_delays, prepare_capture, PreparedCapture};
pub use iterative::{
    iterative_reverse, ConvergenceStep, ConvergenceTrace, IterativeConfig, IterativeResult, ReversalMode,
};
pub use multi::{partition, partition_groups, superpose};

/// Transmit and receive-processing parameters shared by every method.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformConfig {
    /// MHz
    pub carrier: f64,
    pub cycles: f64,
    /// MHz
    pub sample_rate: f64,
    /// Three-level quantization threshold as a fraction of each waveform's
    /// peak; `None` transmits unquantized waveforms.
    pub quantize_threshold: Option<f64>,
    /// Receive window edges at this fraction of each element's peak envelope.
    pub window_fraction: f64,
    /// Receive passband as fractions of the carrier.
    pub band: (f64, f64),
    /// Elements whose peak envelope falls below this fraction of the strongest
    /// element are treated as silent.
    pub signal_floor: f64,
}

impl Default for BeamformConfig {
    fn default() -> Self {
        Self {
            carrier: 1.5,
            cycles: 40.0,
            sample_rate: 57.0,
            quantize_threshold: Some(0.1),
            window_fraction: 0.1,
            band: (0.6, 1.4),
            signal_floor: 1e-6,
        }
    }
}

impl BeamformConfig {
    pub fn period(&self) -> f64 {
        1.0 / self.carrier
    }

    pub fn unquantized(mut self) -> Self {
        self.quantize_threshold = None;
        self
    }

    fn finish(&self, waves: Vec<Waveform>) -> Result<ExcitationSet> {
        let waves = match self.quantize_threshold {
            Some(t) => waves.iter().map(|w| quantize_three_level(w, t)).collect::<Result<Vec<_>>>()?,
            None => waves,
        };
        ExcitationSet::for_carrier(waves, 1.0, self.carrier)
    }
}

/// Per-element transmit or arrival delays (µs).
#[derive(Debug, Clone, PartialEq)]
pub struct DelayProfile {
    pub delays: Vec<f64>,
    pub reference: usize,
    /// Peak receive envelope per element, when estimated from a capture.
    pub amplitudes: Option<Vec<f64>>,
    /// Windowed receive envelope per element, when estimated from a capture.
    pub envelopes: Option<Vec<Waveform>>,
    /// Elements whose delay was measured rather than interpolated.
    pub measured: Vec<bool>,
}

impl DelayProfile {
    pub fn new(delays: Vec<f64>, reference: usize) -> Result<Self> {
        if delays.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidParameter("delays must be finite".into()));
        }
        if reference >= delays.len() {
            return Err(Error::InvalidParameter("reference element out of range".into()));
        }
        let measured = vec![true; delays.len()];
        Ok(Self { delays, reference, amplitudes: None, envelopes: None, measured })
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    /// Transmit delays that undo these arrivals: `max δ − δ_i`, all ≥ 0.
    pub fn reversed(&self) -> DelayProfile {
        let m = self.delays.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        DelayProfile { delays: self.delays.iter().map(|d| m - d).collect(), ..self.clone() }
    }

    /// RMS difference to `other` after removing the mean offset (µs).
    pub fn rms_change(&self, other: &DelayProfile) -> f64 {
        let d: Vec<f64> = self.delays.iter().zip(&other.delays).map(|(a, b)| a - b).collect();
        let n = d.len().max(1) as f64;
        let mean = d.iter().sum::<f64>() / n;
        (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    /// CSV `element,delay_us,amplitude`.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let io = |e: std::io::Error| Error::InvalidParameter(format!("i/o: {e}"));
        writeln!(w, "element,delay_us,amplitude").map_err(io)?;
        for (i, d) in self.delays.iter().enumerate() {
            let a = self.amplitudes.as_ref().map_or(1.0, |a| a[i]);
            writeln!(w, "{i},{d:.6},{a:.6e}").map_err(io)?;
        }
        Ok(())
    }
}

/// Map samples to {−1, 0, +1}: zero where `|s| < threshold_fraction × peak`,
/// otherwise the sign.
pub fn quantize_three_level(w: &Waveform, threshold_fraction: f64) -> Result<Waveform> {
    if !(0.0..1.0).contains(&threshold_fraction) {
        return Err(Error::InvalidParameter("threshold fraction must lie in [0, 1)".into()));
    }
    let t = threshold_fraction * w.peak();
    Ok(w.map(|s| if s == 0.0 || s.abs() < t { 0.0 } else { s.signum() }))
}

/// The same burst on every element.
pub fn unfocused(layout: &ArrayLayout, cfg: &BeamformConfig) -> Result<ExcitationSet> {
    let w = tone_burst(cfg.carrier, cfg.cycles, 1.0, cfg.sample_rate)?;
    cfg.finish(vec![w; layout.len()])
}

/// Geometric transmit delays focusing on `target`: `max ToF − ToF_i`.
pub fn das_delays(layout: &ArrayLayout, target: Point3, medium: &LayeredMedium) -> Result<DelayProfile> {
    if !(target.is_finite() && target.z > 0.0) {
        return Err(Error::Domain("focus target must lie in front of the array".into()));
    }
    let tof: Vec<f64> = layout.elements().iter().map(|e| medium.ray(e.center, target).time_of_flight).collect();
    let reference = layout.center_element().unwrap_or(0);
    Ok(DelayProfile::new(tof, reference)?.reversed())
}

/// Canonical bursts delayed by `profile.delays`.
pub fn transmit_from_delays(profile: &DelayProfile, cfg: &BeamformConfig) -> Result<ExcitationSet> {
    let waves = profile
        .delays
        .iter()
        .map(|&d| delayed_tone_burst(cfg.carrier, cfg.cycles, 1.0, cfg.sample_rate, d))
        .collect::<Result<Vec<_>>>()?;
    cfg.finish(waves)
}

pub fn delay_and_sum(
    layout: &ArrayLayout,
    target: Point3,
    medium: &LayeredMedium,
    cfg: &BeamformConfig,
) -> Result<ExcitationSet> {
    transmit_from_delays(&das_delays(layout, target, medium)?, cfg)
}

/// Reverse every waveform about the window spanning all of them. Absolute
/// timing is kept, so applying this twice is the identity.
pub fn reverse_window(set: &ExcitationSet) -> Result<ExcitationSet> {
    let fs = set.sample_rate().ok_or_else(|| Error::Shape("empty set".into()))?;
    let live = set.waveforms().iter().filter(|w| !w.is_empty());
    let lo = live.clone().map(|w| w.start_index()).min().unwrap_or(0);
    let hi = live.map(|w| w.start_index() + w.len() as i64).max().unwrap_or(0);
    let waves = set
        .waveforms()
        .iter()
        .map(|w| {
            let start = lo + hi - (w.start_index() + w.len() as i64);
            Waveform::on_grid(w.reversed().into_samples(), fs, start)
        })
        .collect::<Result<Vec<_>>>()?;
    ExcitationSet::new(waves, set.drive_amplitude_scale())
}

/// Shift every waveform so the earliest one starts at t = 0.
fn rebase(set: ExcitationSet) -> Result<ExcitationSet> {
    let fs = set.sample_rate().unwrap_or(1.0);
    let lo = set.waveforms().iter().filter(|w| !w.is_empty()).map(|w| w.start_index()).min().unwrap_or(0);
    let scale = set.drive_amplitude_scale();
    let waves = set
        .into_waveforms()
        .into_iter()
        .map(|w| {
            let s = w.start_index() - lo;
            Waveform::on_grid(w.into_samples(), fs, s)
        })
        .collect::<Result<Vec<_>>>()?;
    ExcitationSet::new(waves, scale)
}

/// Time reversal of an uplink capture: each element's filtered, windowed
/// signal is normalised to unit peak, reversed about the common window and
/// quantized.
pub fn time_reverse_active(
    capture: &ExcitationSet,
    layout: &ArrayLayout,
    cfg: &BeamformConfig,
) -> Result<ExcitationSet> {
    let prep = prepare_capture(capture, cfg)?;
    let fs = cfg.sample_rate;
    let waves = prep
        .windowed
        .iter()
        .zip(&prep.peaks)
        .map(
            |(w, &pk)| {
                if pk > 0.0 {
                    w.scaled(1.0 / w.peak())
                } else {
                    Waveform::zeros(0, fs, w.start_time()).unwrap()
                }
            },
        )
        .collect::<Vec<_>>();
    if waves.len() != layout.len() {
        return Err(Error::Shape("capture does not match layout".into()));
    }
    let reversed = reverse_window(&ExcitationSet::new(waves, 1.0)?)?;
    let out = rebase(reversed)?;
    cfg.finish(out.into_waveforms())
}

/// Phase reversal of an uplink capture: canonical bursts at the reversed
/// estimated delays.
pub fn phase_reverse_active(
    capture: &ExcitationSet,
    layout: &ArrayLayout,
    cfg: &BeamformConfig,
) -> Result<ExcitationSet> {
    transmit_from_delays(&estimate_delays(capture, layout, cfg)?.reversed(), cfg)
}

/// Bursts at the reversed delays of `profile`, each multiplied by its
/// element's time-reversed, unit-peak receive envelope.
pub fn envelope_weighted_transmit(profile: &DelayProfile, cfg: &BeamformConfig) -> Result<ExcitationSet> {
    let env = profile
        .envelopes
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("delay profile carries no envelopes".into()))?;
    let fs = cfg.sample_rate;
    let normalised: Vec<Waveform> = env
        .iter()
        .map(|w| {
            let p = w.peak();
            if p > 0.0 {
                w.scaled(1.0 / p)
            } else {
                w.clone()
            }
        })
        .collect();
    let rev = rebase(reverse_window(&ExcitationSet::new(normalised, 1.0)?)?)?;
    let tx = profile.reversed();
    let w = 2.0 * std::f64::consts::PI * cfg.carrier;
    let waves = rev
        .waveforms()
        .iter()
        .zip(&tx.delays)
        .map(|(e, &d)| {
            let s0 = e.start_index();
            let s = e
                .samples()
                .iter()
                .enumerate()
                .map(|(k, a)| a * (w * ((s0 + k as i64) as f64 / fs - d)).cos())
                .collect();
            Waveform::on_grid(s, fs, s0)
        })
        .collect::<Result<Vec<_>>>()?;
    cfg.finish(waves)
}
