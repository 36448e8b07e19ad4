//! Iterative pulse-echo reversal driven by the implant's backscatter
//! modulation.

use super::{
    envelope_weighted_transmit, estimate_delays, transmit_from_delays, unfocused, BeamformConfig, DelayProfile,
};
use crate::error::{Error, Result};
use crate::layout::ArrayLayout;
use crate::scene::{add_receive_noise, capture_backscatter_with, difference_signal, LoadState, Scene};
use crate::signal::ExcitationSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReversalMode {
    /// Reversed-delay bursts shaped by the time-reversed echo envelope.
    Time,
    /// Reversed-delay canonical bursts.
    Phase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterativeConfig {
    pub max_iter: usize,
    /// µs; `None` uses an eighth of the carrier period.
    pub delay_tol: Option<f64>,
    /// Implant whose load is toggled; the others stay open.
    pub target: usize,
    /// Standard deviation of additive receive noise (capture units).
    pub noise_rms: f64,
    pub seed: u64,
}

impl Default for IterativeConfig {
    fn default() -> Self {
        Self { max_iter: 10, delay_tol: None, target: 0, noise_rms: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStep {
    pub iteration: usize,
    /// RMS delay change from the previous estimate, mean offset removed (µs).
    pub delay_change: Option<f64>,
    /// Energy of the difference signal.
    pub echo_energy: f64,
    pub focused: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTrace {
    pub steps: Vec<ConvergenceStep>,
    /// Number of reversals after which the delay estimate stopped changing.
    pub converged_after: Option<usize>,
}

impl ConvergenceTrace {
    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        let io = |e: std::io::Error| Error::InvalidParameter(format!("i/o: {e}"));
        writeln!(w, "iteration,delay_change_us,echo_energy,focused").map_err(io)?;
        for s in &self.steps {
            let c = s.delay_change.map_or(String::new(), |c| format!("{c:.6}"));
            writeln!(w, "{},{c},{:.6e},{}", s.iteration, s.echo_energy, s.focused).map_err(io)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct IterativeResult {
    pub transmit: ExcitationSet,
    pub profile: DelayProfile,
    pub trace: ConvergenceTrace,
}

fn noise_seed(seed: u64, iteration: usize, state: LoadState) -> u64 {
    let s = match state {
        LoadState::Open => 1,
        LoadState::Short => 2,
    };
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add((iteration as u64) << 2 | s)
}

/// Transmit, capture with the target open and shorted, estimate delays from
/// the difference and reverse them; repeat until the estimate settles.
pub fn iterative_reverse(
    layout: &ArrayLayout,
    scene: &Scene,
    mode: ReversalMode,
    cfg: &BeamformConfig,
    it: &IterativeConfig,
) -> Result<IterativeResult> {
    if it.target >= scene.implants.len() {
        return Err(Error::NoTarget("scene has no implant to focus on".into()));
    }
    if it.max_iter == 0 {
        return Err(Error::InvalidParameter("at least one iteration is required".into()));
    }
    let tol = it.delay_tol.unwrap_or(cfg.period() / 8.0);
    let mut tx = unfocused(layout, cfg)?;
    let mut prev: Option<DelayProfile> = None;
    let mut trace = ConvergenceTrace::default();
    for k in 1..=it.max_iter {
        let capture = |state: LoadState| -> Result<ExcitationSet> {
            let mut states = vec![LoadState::Open; scene.implants.len()];
            states[it.target] = state;
            let c = capture_backscatter_with(layout, &tx, scene, &states)?;
            add_receive_noise(&c, it.noise_rms, noise_seed(it.seed, k, state))
        };
        let diff = difference_signal(&capture(LoadState::Open)?, &capture(LoadState::Short)?)?;
        let profile = match estimate_delays(&diff, layout, cfg) {
            Ok(p) => p,
            Err(Error::NoSignal(_)) => {
                return Err(Error::NoTarget(format!("no backscatter modulation detected at iteration {k}")))
            }
            Err(e) => return Err(e),
        };
        let change = prev.as_ref().map(|p| profile.rms_change(p));
        let focused = change.is_some_and(|c| c < tol);
        trace.steps.push(ConvergenceStep {
            iteration: k,
            delay_change: change,
            echo_energy: diff.total_energy(),
            focused,
        });
        if focused {
            trace.converged_after = Some(k - 1);
            return Ok(IterativeResult { transmit: tx, profile: prev.unwrap(), trace });
        }
        tx = match mode {
            ReversalMode::Phase => transmit_from_delays(&profile.reversed(), cfg)?,
            ReversalMode::Time => envelope_weighted_transmit(&profile, cfg)?,
        };
        prev = Some(profile);
    }
    Ok(IterativeResult { transmit: tx, profile: prev.unwrap(), trace })
}
