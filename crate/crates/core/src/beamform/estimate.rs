//! Receive processing and delay estimation.

use std::collections::VecDeque;

use rayon::prelude::*;

use super::{BeamformConfig, DelayProfile};
use crate::dsp::{bandpass, envelope, median, peak_lag, threshold_window};
use crate::error::{Error, Result};
use crate::layout::ArrayLayout;
use crate::signal::{ExcitationSet, Waveform};

/// Band-passed, threshold-windowed signals of one capture.
#[derive(Debug, Clone)]
pub struct PreparedCapture {
    /// Filtered signal inside each element's window (empty when silent).
    pub windowed: Vec<Waveform>,
    /// Envelope over the same window.
    pub envelopes: Vec<Waveform>,
    /// Peak envelope per element (0 when silent).
    pub peaks: Vec<f64>,
}

impl PreparedCapture {
    pub fn is_live(&self, i: usize) -> bool {
        self.peaks[i] > 0.0
    }
}

pub fn prepare_capture(capture: &ExcitationSet, cfg: &BeamformConfig) -> Result<PreparedCapture> {
    let fs = capture.sample_rate().ok_or_else(|| Error::Shape("empty capture".into()))?;
    let f = cfg.carrier;
    let (lo, hi) = (cfg.band.0 * f, cfg.band.1 * f);
    let taper = 0.2 * f;
    let per: Vec<(Vec<f64>, Vec<f64>, i64)> = capture
        .waveforms()
        .par_iter()
        .map(|w| {
            if w.is_silent() {
                return (Vec::new(), Vec::new(), w.start_index());
            }
            let x = bandpass(w.samples(), fs, lo, hi, taper);
            let e = envelope(&x);
            (x, e, w.start_index())
        })
        .collect();
    let global = per.iter().flat_map(|p| p.1.iter()).fold(0.0f64, |m, v| m.max(*v));
    if !(global > 0.0) {
        return Err(Error::NoSignal("no element received a signal".into()));
    }
    let mut out = PreparedCapture { windowed: Vec::new(), envelopes: Vec::new(), peaks: Vec::new() };
    for (x, e, s0) in per {
        let peak = e.iter().fold(0.0f64, |m, v| m.max(*v));
        match threshold_window(&e, cfg.window_fraction).filter(|_| peak > cfg.signal_floor * global) {
            Some((a, b)) => {
                out.windowed.push(Waveform::on_grid(x[a..=b].to_vec(), fs, s0 + a as i64)?);
                out.envelopes.push(Waveform::on_grid(e[a..=b].to_vec(), fs, s0 + a as i64)?);
                out.peaks.push(peak);
            }
            None => {
                out.windowed.push(Waveform::on_grid(Vec::new(), fs, s0)?);
                out.envelopes.push(Waveform::on_grid(Vec::new(), fs, s0)?);
                out.peaks.push(0.0);
            }
        }
    }
    Ok(out)
}

/// Live element nearest the layout centroid.
fn reference_element(layout: &ArrayLayout, live: &[bool]) -> Option<usize> {
    let n = layout.len() as f64;
    let cx = layout.elements().iter().map(|e| e.center.x).sum::<f64>() / n;
    let cy = layout.elements().iter().map(|e| e.center.y).sum::<f64>() / n;
    (0..layout.len()).filter(|&i| live[i]).min_by(|&a, &b| {
        let d = |i: usize| {
            let c = layout.elements()[i].center;
            (c.x - cx).hypot(c.y - cy)
        };
        d(a).total_cmp(&d(b)).then(a.cmp(&b))
    })
}

/// Arrival delays of every element relative to the centre-most live element.
pub fn estimate_delays(capture: &ExcitationSet, layout: &ArrayLayout, cfg: &BeamformConfig) -> Result<DelayProfile> {
    if capture.len() != layout.len() {
        return Err(Error::Shape(format!("{} signals for {} elements", capture.len(), layout.len())));
    }
    let prep = prepare_capture(capture, cfg)?;
    let fs = capture.sample_rate().unwrap();
    let live: Vec<bool> = (0..layout.len()).map(|i| prep.is_live(i)).collect();
    let reference = reference_element(layout, &live).ok_or_else(|| Error::NoSignal("no live element".into()))?;
    let r = &prep.windowed[reference];
    let raw: Vec<Option<f64>> = prep
        .windowed
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            if !live[i] {
                return None;
            }
            if i == reference {
                return Some(0.0);
            }
            peak_lag(r.samples(), w.samples()).map(|lag| (lag + (w.start_index() - r.start_index()) as f64) / fs)
        })
        .collect();
    let measured: Vec<bool> = raw.iter().map(|d| d.is_some()).collect();
    let raw: Vec<f64> = raw.iter().map(|d| d.unwrap_or(0.0)).collect();
    let delays = clean_phase_gaps(layout, &raw, &measured, reference, cfg.period());
    Ok(DelayProfile {
        delays,
        reference,
        amplitudes: Some(prep.peaks.clone()),
        envelopes: Some(prep.envelopes),
        measured,
    })
}

/// Remove whole-period errors from measured delays.
///
/// Elements are visited breadth-first from `reference` over the grid
/// 8-neighbourhood. Each delay is compared with the median prediction from
/// already-cleaned neighbours, where a prediction is the neighbour's delay
/// plus a robust array-wide delay gradient times the grid offset. A
/// difference above half a period is removed in whole periods. Unmeasured
/// elements receive the median prediction.
pub fn clean_phase_gaps(
    layout: &ArrayLayout,
    raw: &[f64],
    measured: &[bool],
    reference: usize,
    period: f64,
) -> Vec<f64> {
    let els = layout.elements();
    let pitch = layout.pitch();
    let pos = |i: usize| (els[i].col as f64 * pitch, els[i].row as f64 * pitch);
    let gradient = |dc: usize, dr: usize| {
        let mut g = Vec::new();
        for (i, e) in els.iter().enumerate() {
            if let Some(j) = layout.element_at(e.row + dr, e.col + dc) {
                if measured[i] && measured[j] {
                    g.push((raw[j] - raw[i]) / pitch);
                }
            }
        }
        if g.is_empty() {
            0.0
        } else {
            median(&g)
        }
    };
    let (gx, gy) = (gradient(1, 0), gradient(0, 1));
    let predict = |from: usize, to: usize, d_from: f64| {
        let (a, b) = (pos(from), pos(to));
        d_from + gx * (b.0 - a.0) + gy * (b.1 - a.1)
    };
    let fix = |d: f64, pred: f64| {
        let diff = d - pred;
        if diff.abs() > 0.5 * period {
            d - (diff / period).round() * period
        } else {
            d
        }
    };

    let n = els.len();
    let mut out = raw.to_vec();
    let mut cleaned = vec![false; n];
    let mut queued = vec![false; n];
    let mut queue = VecDeque::from([reference]);
    queued[reference] = true;
    while let Some(i) = queue.pop_front() {
        if i != reference {
            let preds: Vec<f64> =
                layout.grid_neighbors(i).into_iter().filter(|&j| cleaned[j]).map(|j| predict(j, i, out[j])).collect();
            if !preds.is_empty() {
                out[i] = fix(out[i], median(&preds));
            }
        }
        cleaned[i] = true;
        for j in layout.grid_neighbors(i) {
            if measured[j] && !queued[j] {
                queued[j] = true;
                queue.push_back(j);
            }
        }
    }
    // measured but disconnected from the reference
    for i in 0..n {
        if measured[i] && !cleaned[i] {
            out[i] = fix(out[i], predict(reference, i, out[reference]));
            cleaned[i] = true;
        }
    }
    for i in 0..n {
        if !measured[i] {
            let preds: Vec<f64> =
                layout.grid_neighbors(i).into_iter().filter(|&j| measured[j]).map(|j| predict(j, i, out[j])).collect();
            out[i] = if preds.is_empty() { predict(reference, i, out[reference]) } else { median(&preds) };
        }
    }
    out
}
