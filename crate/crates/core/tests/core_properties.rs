use implantbeam::beamform::reverse_window;
use implantbeam::scene::difference_signal;
use implantbeam::{build_array_layout, delayed_tone_burst, tone_burst, ExcitationSet, Waveform};
use proptest::prelude::*;

proptest! {
    #[test]
    fn corner_cut_count(rows in 4usize..12, cols in 4usize..12, cut in prop::sample::select(vec![0usize, 1, 3])) {
        let l = build_array_layout(rows, cols, 1.8, 0.8, cut, 1.5).unwrap();
        prop_assert_eq!(l.len(), rows * cols - 4 * cut);
    }

    #[test]
    fn layout_is_deterministic(rows in 1usize..10, cols in 1usize..10, pitch in 0.5f64..4.0) {
        let a = build_array_layout(rows, cols, pitch, pitch / 2.0, 0, 1.5).unwrap();
        let b = build_array_layout(rows, cols, pitch, pitch / 2.0, 0, 1.5).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn tone_burst_energy(f in 0.5f64..3.0, cycles in 1.0f64..60.0, amp in 0.1f64..5.0) {
        let fs = 57.0;
        let w = tone_burst(f, cycles, amp, fs).unwrap();
        // closed-form ∫ A² cos²(ωt) dt over the sampled gate
        let t = w.len() as f64 / fs;
        let omega = 2.0 * std::f64::consts::PI * f;
        let expected = amp * amp * (t / 2.0 + (2.0 * omega * t).sin() / (4.0 * omega));
        // one sample of squared amplitude
        prop_assert!((w.energy() - expected).abs() <= amp * amp / fs + 1e-9);
        prop_assert!((w.peak() - amp).abs() < 1e-9);
    }

    #[test]
    fn difference_of_identical_captures_is_zero(seed in 0u64..1000, n in 1usize..6) {
        let waves: Vec<Waveform> = (0..n)
            .map(|i| delayed_tone_burst(1.5, 5.0 + seed as f64 % 7.0, 1.0, 57.0, 0.37 * i as f64).unwrap())
            .collect();
        let a = ExcitationSet::new(waves, 1.0 + seed as f64 / 100.0).unwrap();
        let d = difference_signal(&a, &a).unwrap();
        prop_assert!(d.waveforms().iter().all(|w| w.samples().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn window_reversal_is_an_involution(delays in prop::collection::vec(0.0f64..5.0, 1..8)) {
        let waves = delays.iter().map(|&d| delayed_tone_burst(1.5, 3.0, 1.0, 57.0, d).unwrap()).collect();
        let set = ExcitationSet::new(waves, 1.0).unwrap();
        let twice = reverse_window(&reverse_window(&set).unwrap()).unwrap();
        prop_assert_eq!(twice, set);
    }
}

#[test]
fn fractional_cycle_burst_energy() {
    // 16.34 cycles at 0.5 MHz: the partial cycle shifts the energy well beyond one sample
    let (f, fs) = (0.5, 57.0);
    let w = tone_burst(f, 16.33845218601369, 1.0, fs).unwrap();
    let t = w.len() as f64 / fs;
    let omega = 2.0 * std::f64::consts::PI * f;
    let exact = t / 2.0 + (2.0 * omega * t).sin() / (4.0 * omega);
    assert!((w.energy() - exact).abs() <= 1.0 / fs);
    assert!((w.energy() - t / 2.0).abs() > 1.0 / fs);
}
