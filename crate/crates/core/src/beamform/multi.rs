//! Powering several implants at once.

use super::{das_delays, quantize_three_level, transmit_from_delays, BeamformConfig};
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::layout::ArrayLayout;
use crate::medium::LayeredMedium;
use crate::signal::{sum_on_grid, ExcitationSet, Waveform};

/// Per-element sum of several transmit sets on the absolute time grid, then
/// re-quantized with `cfg.quantize_threshold`.
pub fn superpose(sets: &[ExcitationSet], cfg: &BeamformConfig) -> Result<ExcitationSet> {
    let first = sets.first().ok_or_else(|| Error::Shape("nothing to superpose".into()))?;
    let fs = first.sample_rate().ok_or_else(|| Error::Shape("empty excitation set".into()))?;
    for s in &sets[1..] {
        if s.len() != first.len() || s.sample_rate() != Some(fs) {
            return Err(Error::Shape("superposed sets differ in element count or sample rate".into()));
        }
    }
    let waves = (0..first.len())
        .map(|i| {
            let scaled: Vec<Waveform> = sets.iter().map(|s| s.waveform(i).scaled(s.drive_amplitude_scale())).collect();
            let w = sum_on_grid(scaled.iter(), fs)?;
            match cfg.quantize_threshold {
                Some(t) => quantize_three_level(&w, t),
                None => Ok(w),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    ExcitationSet::for_carrier(waves, 1.0, cfg.carrier)
}

/// Split the array at its midline along the axis on which the two targets
/// are further apart (x on ties). Returns element groups matched to targets.
pub fn partition_groups(layout: &ArrayLayout, targets: &[Point3]) -> Result<Vec<Vec<usize>>> {
    match targets {
        [_] => Ok(vec![(0..layout.len()).collect()]),
        [a, b] => {
            let along_x = (a.x - b.x).abs() >= (a.y - b.y).abs();
            let coord = |p: Point3| if along_x { p.x } else { p.y };
            let n = layout.len() as f64;
            let mid = layout.elements().iter().map(|e| coord(e.center)).sum::<f64>() / n;
            let (lower, upper): (Vec<usize>, Vec<usize>) =
                (0..layout.len()).partition(|&i| coord(layout.elements()[i].center) < mid);
            if lower.is_empty() || upper.is_empty() {
                return Err(Error::InvalidGeometry("array cannot be split in two".into()));
            }
            Ok(if coord(*a) <= coord(*b) { vec![lower, upper] } else { vec![upper, lower] })
        }
        _ => Err(Error::InvalidParameter(format!("partitioning supports 1 or 2 targets, got {}", targets.len()))),
    }
}

/// Each half of the array focuses on its own target by delay-and-sum.
pub fn partition(
    layout: &ArrayLayout,
    targets: &[Point3],
    medium: &LayeredMedium,
    cfg: &BeamformConfig,
) -> Result<ExcitationSet> {
    let groups = partition_groups(layout, targets)?;
    let mut waves: Vec<Option<Waveform>> = vec![None; layout.len()];
    for (group, &t) in groups.iter().zip(targets) {
        let sub = layout.subset(group)?;
        let tx = transmit_from_delays(&das_delays(&sub, t, medium)?, cfg)?;
        for (k, &i) in group.iter().enumerate() {
            waves[i] = Some(tx.waveform(k).clone());
        }
    }
    let waves = waves.into_iter().map(|w| w.expect("every element assigned")).collect();
    ExcitationSet::for_carrier(waves, 1.0, cfg.carrier)
}
